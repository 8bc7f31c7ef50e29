//! The bundled task suite: seeded definitions, validators, oracles, and the
//! fixture server that hosts their pages.

pub mod answers;
pub mod data;
pub mod pages;
pub mod server;

use std::collections::BTreeMap;
use std::fmt;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chat::Chat;
use crate::driver::{NavCommand, Session};
use crate::env::{OracleStep, Task, TaskError, Validation};

pub use answers::{normalize, AcceptedAnswers, ChartAnswer};
pub use server::{fetch_store, FixtureServer, Store};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Form,
    ListFilter,
    ListSort,
    Menu,
    CatalogOrder,
    KnowledgeQa,
    DashboardRead,
}

impl Category {
    /// The enterprise page family the category belongs to.
    pub fn family(self) -> &'static str {
        match self {
            Category::Form => "forms",
            Category::ListFilter | Category::ListSort => "lists",
            Category::Menu => "menus",
            Category::CatalogOrder => "service catalogs",
            Category::KnowledgeQa => "knowledge bases",
            Category::DashboardRead => "dashboards",
        }
    }

    fn path(self) -> &'static str {
        match self {
            Category::Form => "form",
            Category::ListFilter | Category::ListSort => "list",
            Category::Menu => "menu",
            Category::CatalogOrder => "catalog",
            Category::KnowledgeQa => "kb",
            Category::DashboardRead => "dashboard",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).unwrap();
        f.write_str(s.as_str().unwrap())
    }
}

pub type Params = BTreeMap<String, String>;

/// A task template with seeded parameters.
#[derive(Debug, Clone)]
pub struct TaskDefinition {
    pub name: &'static str,
    pub category: Category,
    pub goal_template: &'static str,
    /// Value pool of every placeholder, in template order.
    pub parameter_space: Vec<(&'static str, Vec<String>)>,
    pub instance_cap: u64,
    /// Rejects combinations that do not make sense together.
    valid: fn(&Params) -> bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InstantiateError {
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("seed {seed} out of range for {task}: instance cap is {cap}")]
    SeedOutOfRange { task: String, seed: u64, cap: u64 },
}

fn pool(values: &[&str]) -> Vec<String> {
    values.iter().map(|s| s.to_string()).collect()
}

fn always(_: &Params) -> bool {
    true
}

const EMAILS: &[&str] = &[
    "new.hire@example.com",
    "first.day@example.com",
    "welcome.aboard@example.com",
    "fresh.start@example.com",
];

fn sort_question(p: &Params) -> bool {
    p["sort1"] != p["sort2"]
}

fn menu_path_exists(p: &Params) -> bool {
    data::menu_paths()
        .iter()
        .any(|(a, m)| *a == p["application"] && *m == p["module"])
}

fn config_matches_item(p: &Params) -> bool {
    data::catalog_item(&p["item"]).is_some_and(|i| i.configs.contains(&p["config"].as_str()))
}

const HIGHEST: &str = "Which category has the highest value? Reply in the chat with its label.";
const LOWEST: &str = "Which category has the lowest value? Reply in the chat with its label.";

fn value_question(label: &str) -> String {
    format!("What value is shown for \"{label}\"? Reply in the chat with the number.")
}

fn chart_index(title: &str) -> usize {
    data::CHARTS.iter().position(|c| c.0 == title).unwrap_or(0)
}

fn question_fits_chart(p: &Params) -> bool {
    let q = &p["question"];
    q == HIGHEST
        || q == LOWEST
        || data::CHARTS[chart_index(&p["chart"])]
            .2
            .iter()
            .any(|l| *q == value_question(l))
}

/// The bundled task definitions, in a fixed order.
pub fn registry() -> Vec<TaskDefinition> {
    let mut modules: Vec<&str> = data::MENU.iter().flat_map(|(_, m)| m.iter().copied()).collect();
    modules.sort_unstable();
    modules.dedup();
    let mut configs: Vec<&str> = data::CATALOG.iter().flat_map(|c| c.configs.iter().copied()).collect();
    configs.sort_unstable();
    let sortable = pool(data::SORTABLE);
    let mut dashboard_questions: Vec<String> = data::CHARTS
        .iter()
        .flat_map(|c| c.2.iter().map(|l| value_question(l)))
        .collect();
    dashboard_questions.push(HIGHEST.to_string());
    dashboard_questions.push(LOWEST.to_string());
    let qa_questions: Vec<String> = data::ARTICLES
        .iter()
        .flat_map(|a| a.questions.iter().flat_map(|q| q.wordings.iter().map(|w| w.to_string())))
        .collect();

    vec![
        TaskDefinition {
            name: "create-user-form",
            category: Category::Form,
            goal_template: "Create a new user with First name \"{first_name}\", Last name \"{last_name}\", \
                Email \"{email}\", Department \"{department}\" and Start date \"{start_date}\", then submit the form.",
            parameter_space: vec![
                ("first_name", pool(data::FIRST_NAMES)),
                ("last_name", pool(data::LAST_NAMES)),
                ("email", pool(EMAILS)),
                ("department", pool(data::DEPARTMENTS)),
                ("start_date", pool(data::START_DATES)),
            ],
            instance_cap: 10,
            valid: always,
        },
        TaskDefinition {
            name: "filter-incident-list",
            category: Category::ListFilter,
            goal_template: "Filter the incident list so that it only shows incidents whose Priority is \
                \"{priority}\" and whose State is \"{state}\".",
            parameter_space: vec![("priority", pool(data::PRIORITIES)), ("state", pool(data::STATES))],
            instance_cap: 10,
            valid: always,
        },
        TaskDefinition {
            name: "sort-incident-list",
            category: Category::ListSort,
            goal_template: "Sort the incident list by \"{sort1}\" in {dir1} order, then by \"{sort2}\" in {dir2} order.",
            parameter_space: vec![
                ("sort1", sortable.clone()),
                ("dir1", pool(data::DIRECTIONS)),
                ("sort2", sortable),
                ("dir2", pool(data::DIRECTIONS)),
            ],
            instance_cap: 10,
            valid: sort_question,
        },
        TaskDefinition {
            name: "navigate-menu",
            category: Category::Menu,
            goal_template: "Using the application navigator, open the \"{module}\" module of the \"{application}\" application.",
            parameter_space: vec![
                ("application", data::MENU.iter().map(|(a, _)| a.to_string()).collect()),
                ("module", pool(&modules)),
            ],
            instance_cap: 10,
            valid: menu_path_exists,
        },
        TaskDefinition {
            name: "order-catalog-item",
            category: Category::CatalogOrder,
            goal_template: "Order {quantity} of the \"{item}\" item with the \"{config}\" option from the service catalog.",
            parameter_space: vec![
                ("item", data::CATALOG.iter().map(|c| c.name.to_string()).collect()),
                ("quantity", pool(data::QUANTITIES)),
                ("config", pool(&configs)),
            ],
            instance_cap: 10,
            valid: config_matches_item,
        },
        TaskDefinition {
            name: "knowledge-base-qa",
            category: Category::KnowledgeQa,
            goal_template: "Search the knowledge base and answer the following question in the chat: {question}",
            parameter_space: vec![("question", qa_questions)],
            instance_cap: 18,
            valid: always,
        },
        TaskDefinition {
            name: "dashboard-read",
            category: Category::DashboardRead,
            goal_template: "On the operations dashboard, look at the \"{chart}\" chart. {question}",
            parameter_space: vec![
                ("chart", data::CHARTS.iter().map(|c| c.0.to_string()).collect()),
                ("question", dashboard_questions),
            ],
            instance_cap: 10,
            valid: question_fits_chart,
        },
    ]
}

pub fn definition(name: &str) -> Option<TaskDefinition> {
    registry().into_iter().find(|d| d.name == name)
}

impl TaskDefinition {
    /// Every valid parameter combination, in mixed-radix order.
    pub fn assignments(&self) -> Vec<Params> {
        let radices: Vec<usize> = self.parameter_space.iter().map(|(_, p)| p.len()).collect();
        let total: usize = radices.iter().product();
        (0..total)
            .map(|mut n| {
                let mut params = Params::new();
                for ((name, values), r) in self.parameter_space.iter().zip(&radices).rev() {
                    params.insert(name.to_string(), values[n % r].clone());
                    n /= r;
                }
                params
            })
            .filter(|p| (self.valid)(p))
            .collect()
    }

    /// Parameters for a seed. Seeds are spread over the valid combinations by
    /// a stride coprime with their count, so distinct seeds never collide.
    pub fn parameters(&self, seed: u64) -> Result<Params, InstantiateError> {
        if seed >= self.instance_cap {
            return Err(InstantiateError::SeedOutOfRange {
                task: self.name.to_string(),
                seed,
                cap: self.instance_cap,
            });
        }
        let mut all = self.assignments();
        let n = all.len() as u64;
        assert!(n >= self.instance_cap, "{} has fewer combinations than its cap", self.name);
        let stride = (7u64..).find(|s| gcd(*s, n) == 1).unwrap();
        let index = (seed * stride + 3) % n;
        Ok(all.swap_remove(index as usize))
    }

    pub fn render_goal(&self, params: &Params) -> String {
        let mut goal = self.goal_template.to_string();
        for (k, v) in params {
            goal = goal.replace(&format!("{{{k}}}"), v);
        }
        goal
    }

    pub fn instantiate(&self, seed: u64) -> Result<TaskInstance, InstantiateError> {
        let params = self.parameters(seed)?;
        let goal = self.render_goal(&params);
        let expected = expected_outcome(self.category, seed, &params);
        Ok(TaskInstance {
            name: self.name.to_string(),
            category: self.category,
            seed,
            params,
            goal,
            expected,
            instance_id: seed.to_string(),
            base_url: None,
        })
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn instantiate(name: &str, seed: u64) -> Result<TaskInstance, InstantiateError> {
    definition(name)
        .ok_or_else(|| InstantiateError::UnknownTask(name.to_string()))?
        .instantiate(seed)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderLine {
    pub item: String,
    pub quantity: u32,
    pub config: String,
}

/// What a successful episode must leave behind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Expected {
    /// A submitted form containing these field values.
    Fields { fields: BTreeMap<String, String> },
    /// The list filtered by exactly these conditions (unset filters stay empty).
    Filter { conditions: BTreeMap<String, String> },
    /// The list sorted by these (column, direction) keys.
    Sort { keys: Vec<(String, String)> },
    /// A visit to this navigator module.
    MenuLocation { application: String, module: String },
    /// An order with exactly these lines.
    Order { lines: Vec<OrderLine> },
    /// The latest agent message answers the question.
    Answer { accepted: AcceptedAnswers },
    /// The latest agent message reads the chart correctly.
    Chart { answer: ChartAnswer },
}

fn column_key(label: &str) -> String {
    data::COLUMNS
        .iter()
        .find(|(_, l)| *l == label)
        .map(|(k, _)| k.to_string())
        .unwrap_or_default()
}

fn qa_question(wording: &str) -> Option<(usize, &'static data::Question)> {
    data::ARTICLES.iter().enumerate().find_map(|(i, a)| {
        a.questions.iter().find(|q| q.wordings.contains(&wording)).map(|q| (i, q))
    })
}

fn expected_outcome(category: Category, seed: u64, p: &Params) -> Expected {
    match category {
        Category::Form => Expected::Fields {
            fields: p.clone(),
        },
        Category::ListFilter => Expected::Filter {
            conditions: p.clone(),
        },
        Category::ListSort => Expected::Sort {
            keys: vec![
                (column_key(&p["sort1"]), p["dir1"].clone()),
                (column_key(&p["sort2"]), p["dir2"].clone()),
            ],
        },
        Category::Menu => Expected::MenuLocation {
            application: p["application"].clone(),
            module: p["module"].clone(),
        },
        Category::CatalogOrder => Expected::Order {
            lines: vec![OrderLine {
                item: p["item"].clone(),
                quantity: p["quantity"].parse().unwrap(),
                config: p["config"].clone(),
            }],
        },
        Category::KnowledgeQa => {
            let (_, q) = qa_question(&p["question"]).expect("question comes from the article pool");
            Expected::Answer {
                accepted: AcceptedAnswers::new(q.canonical, q.alternates),
            }
        }
        Category::DashboardRead => {
            let chart = chart_index(&p["chart"]);
            let labels = data::CHARTS[chart].2;
            let values = data::chart_values(seed, chart);
            let q = &p["question"];
            let answer = if q == HIGHEST || q == LOWEST {
                let pick = if q == HIGHEST {
                    values.iter().enumerate().max_by_key(|(_, v)| **v)
                } else {
                    values.iter().enumerate().min_by_key(|(_, v)| **v)
                };
                ChartAnswer::Label {
                    label: labels[pick.unwrap().0].to_string(),
                }
            } else {
                let i = labels.iter().position(|l| *q == value_question(l)).unwrap();
                ChartAnswer::Number { value: values[i] as f64 }
            };
            Expected::Chart { answer }
        }
    }
}

impl Expected {
    /// Check store events (oldest first). Chat-based expectations never pass here.
    pub fn check_events(&self, events: &[Value]) -> bool {
        let latest = |kind| server::latest(events, kind);
        match self {
            Expected::Fields { fields } => latest("form_submit").is_some_and(|e| {
                fields.iter().all(|(k, v)| e["fields"][k].as_str() == Some(v.as_str()))
            }),
            Expected::Filter { conditions } => latest("list_state").is_some_and(|e| {
                let Some(filters) = e["filters"].as_object() else {
                    return false;
                };
                filters.iter().all(|(k, v)| {
                    let want = conditions.get(k).map(String::as_str).unwrap_or("");
                    v.as_str() == Some(want)
                }) && conditions.keys().all(|k| filters.contains_key(k))
            }),
            Expected::Sort { keys } => latest("list_state").is_some_and(|e| {
                let got: Vec<(String, String)> = e["sort"]
                    .as_array()
                    .map(|a| {
                        a.iter()
                            .map(|s| {
                                let f = |k: &str| s[k].as_str().unwrap_or_default().to_string();
                                (f("field"), f("direction"))
                            })
                            .collect()
                    })
                    .unwrap_or_default();
                got == *keys
            }),
            Expected::MenuLocation { application, module } => latest("menu_visit")
                .is_some_and(|e| e["app"] == application.as_str() && e["module"] == module.as_str()),
            Expected::Order { lines } => latest("order").is_some_and(|e| {
                serde_json::from_value::<Vec<OrderLine>>(e["lines"].clone()).is_ok_and(|got| got == *lines)
            }),
            Expected::Answer { .. } | Expected::Chart { .. } => false,
        }
    }

    /// Check the latest agent message, for chat-based expectations.
    pub fn check_message(&self, message: &str) -> bool {
        match self {
            Expected::Answer { accepted } => accepted.accepts(message),
            Expected::Chart { answer } => answer.accepts(message),
            _ => false,
        }
    }

    pub fn uses_chat(&self) -> bool {
        matches!(self, Expected::Answer { .. } | Expected::Chart { .. })
    }
}

/// A seeded task, ready to run once bound to a fixture server.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskInstance {
    pub name: String,
    pub category: Category,
    pub seed: u64,
    pub params: Params,
    pub goal: String,
    pub expected: Expected,
    /// Key of this episode's rows in the fixture store. Fresh for every setup.
    pub instance_id: String,
    pub base_url: Option<String>,
}

fn lit(s: &str) -> String {
    serde_json::to_string(s).unwrap()
}

impl TaskInstance {
    pub fn with_base_url(mut self, base_url: impl Into<String>) -> Self {
        self.base_url = Some(base_url.into().trim_end_matches('/').to_string());
        self
    }

    pub fn start_url(&self) -> Option<String> {
        let base = self.base_url.as_ref()?;
        Some(format!("{base}/{}/{}", self.category.path(), self.instance_id))
    }

    /// Scripted solution as accessibility-targeted steps.
    pub fn oracle_steps(&self) -> Vec<OracleStep> {
        let p = &self.params;
        let click = |role: &str, name: &str| OracleStep::on(role, name, "click(\"{bid}\")");
        let fill = |role: &str, name: &str, v: &str| OracleStep::on(role, name, format!("fill(\"{{bid}}\", {})", lit(v)));
        let select = |name: &str, v: &str| OracleStep::on("combobox", name, format!("select_option(\"{{bid}}\", {})", lit(v)));
        let say = |v: &str| OracleStep::plain(format!("send_msg_to_user({})", lit(v)));
        match &self.expected {
            Expected::Fields { .. } => {
                let dept = &p["department"];
                let prefix: String = dept.chars().take(3).collect();
                vec![
                    fill("textbox", "First name", &p["first_name"]),
                    fill("textbox", "Last name", &p["last_name"]),
                    fill("textbox", "Email", &p["email"]),
                    click("tab", "Work"),
                    fill("combobox", "Department", &prefix),
                    click("option", dept),
                    fill(DATE_ROLE, "Start date", &p["start_date"]),
                    click("button", "Submit"),
                ]
            }
            Expected::Filter { .. } => vec![
                select("Priority", &p["priority"]),
                select("State", &p["state"]),
                click("button", "Apply"),
            ],
            Expected::Sort { .. } => vec![
                select("Sort by", &p["sort1"]),
                select("Sort order", &p["dir1"]),
                select("Then by", &p["sort2"]),
                select("Then order", &p["dir2"]),
                click("button", "Apply"),
            ],
            Expected::MenuLocation { application, module } => {
                vec![click("button", application), click("link", module)]
            }
            Expected::Order { lines } => {
                let line = &lines[0];
                let item = data::catalog_item(&line.item).expect("catalog item");
                vec![
                    click("link", &line.item),
                    fill("spinbutton", "Quantity", &line.quantity.to_string()),
                    select(item.config_label, &line.config),
                    click("button", "Add to cart"),
                    click("button", "Place order"),
                ]
            }
            Expected::Answer { accepted } => {
                let (article, _) = qa_question(&p["question"]).expect("question comes from the article pool");
                let a = &data::ARTICLES[article];
                let keyword = a.keywords.split_whitespace().next().unwrap_or(a.title);
                vec![
                    fill("searchbox", "Search knowledge base", keyword),
                    click("button", "Search"),
                    click("link", a.title),
                    say(&accepted.canonical),
                ]
            }
            Expected::Chart { answer } => match answer {
                ChartAnswer::Number { value } => vec![say(&value.to_string())],
                ChartAnswer::Label { label } => vec![say(label)],
            },
        }
    }
}

/// Accessibility role of a date input.
pub const DATE_ROLE: &str = "Date";

#[async_trait]
impl Task for TaskInstance {
    fn name(&self) -> &str {
        &self.name
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    async fn setup(&mut self, session: &mut Session, _chat: &Chat) -> Result<String, TaskError> {
        if self.base_url.is_none() {
            return Err(TaskError::Setup(format!("{} has no fixture server", self.name)));
        }
        self.instance_id = format!("{}-{:016x}", self.seed, rand::random::<u64>());
        let url = self.start_url().unwrap();
        session
            .navigate(NavCommand::Goto(url.clone()))
            .await
            .map_err(|e| TaskError::Setup(format!("cannot open {url}: {e}")))?;
        Ok(self.goal.clone())
    }

    async fn validate(&self, _session: &mut Session, chat: &Chat) -> Validation {
        if self.expected.uses_chat() {
            let ok = chat
                .last_agent_message()
                .is_some_and(|m| self.expected.check_message(&m));
            return if ok {
                Validation {
                    message: Some("Correct, thank you.".to_string()),
                    ..Validation::success()
                }
            } else {
                Validation::pending()
            };
        }
        let Some(base) = &self.base_url else {
            return Validation::pending();
        };
        match fetch_store(base, &self.instance_id).await {
            Ok(events) if self.expected.check_events(&events) => Validation::success(),
            Ok(_) => Validation::pending(),
            Err(e) => {
                tracing::warn!("{}: store query failed: {e}", self.name);
                Validation::pending()
            }
        }
    }

    async fn teardown(&mut self, _session: &mut Session) -> Result<(), TaskError> {
        Ok(())
    }

    fn oracle(&self) -> Vec<OracleStep> {
        self.oracle_steps()
    }
}

/// Suite description: definitions, caps and oracle lengths per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub category: Category,
    pub family: String,
    pub goal_template: String,
    pub placeholders: Vec<String>,
    pub instance_cap: u64,
    pub oracle_lengths: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tasks: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn build() -> Self {
        let tasks = registry()
            .into_iter()
            .map(|d| ManifestEntry {
                name: d.name.to_string(),
                category: d.category,
                family: d.category.family().to_string(),
                goal_template: d.goal_template.to_string(),
                placeholders: d.parameter_space.iter().map(|(k, _)| k.to_string()).collect(),
                instance_cap: d.instance_cap,
                oracle_lengths: (0..d.instance_cap)
                    .map(|s| d.instantiate(s).unwrap().oracle_steps().len())
                    .collect(),
            })
            .collect();
        Self { tasks }
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).unwrap()))
    }
}
