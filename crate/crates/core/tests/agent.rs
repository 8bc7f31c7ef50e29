mod common;

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use webgym_core::actions::ActionSet;
use webgym_core::agent::{
    build_prompt, prompt_tokens, update_history, Agent, AgentConfig, ConfigError, FnClient, HistoryEntry, Message,
    OracleClient, Role, ScriptedClient, ACTION_HISTORY_HEADER, ACTION_SPACE_HEADER, AXTREE_HEADER, CHAT_HEADER,
    DOM_HEADER, ERROR_HISTORY_HEADER, EXAMPLE_HEADER, FOCUSED_HEADER, INSTRUCTION_HEADER, LAST_ERROR_HEADER,
    TABS_HEADER, THINK_HISTORY_HEADER,
};
use webgym_core::chat::{Chat, ChatRole};
use webgym_core::driver::{NavCommand, Session};
use webgym_core::env::{Env, Observation, OracleStep, Task, TaskError, Validation};
use webgym_core::observation::{CharEstimator, CoordsMode, TRUNCATION_MARKER};
use webgym_core::tasks::FixtureServer;

const HEADERS: &[&str] = &[
    CHAT_HEADER,
    TABS_HEADER,
    AXTREE_HEADER,
    DOM_HEADER,
    FOCUSED_HEADER,
    LAST_ERROR_HEADER,
    ACTION_SPACE_HEADER,
    ACTION_HISTORY_HEADER,
    ERROR_HISTORY_HEADER,
    THINK_HISTORY_HEADER,
    EXAMPLE_HEADER,
    INSTRUCTION_HEADER,
];

fn observation() -> Observation {
    let chat = Chat::new();
    chat.push(ChatRole::User, "Open the first incident.", 0);
    Observation {
        chat: chat.messages(),
        open_pages: vec!["http://localhost/list/0".into()],
        active_page: 0,
        dom_text: Some("[0] html\n\t[1] body\n\t\t[5] button \"Go\"".into()),
        axtree_text: "RootWebArea \"Incidents\"\n\t[5] button \"Go\" (visible)(clickable)".into(),
        focused_bid: None,
        last_action_error: None,
        dom: None,
        axtree: None,
        screenshot: None,
    }
}

fn agent_with(config: AgentConfig, client: Arc<ScriptedClient>) -> Agent {
    Agent::new(config, client).unwrap()
}

fn user_text(prompt: &[Message]) -> &str {
    &prompt.iter().find(|m| m.role == Role::User).unwrap().content
}

/// Section headers present in a user message, in order.
fn headers(text: &str) -> Vec<&'static str> {
    text.lines().filter_map(|l| HEADERS.iter().find(|h| **h == l).copied()).collect()
}

#[tokio::test]
async fn a_valid_answer_needs_no_retry() {
    let client = Arc::new(ScriptedClient::constant("<action>click(\"5\")</action>"));
    let out = agent_with(AgentConfig::default(), client.clone()).act(&observation()).await.unwrap();
    assert_eq!((out.action.as_str(), out.retries, out.error.as_deref()), ("click(\"5\")", 0, None));
    assert_eq!(client.calls(), 1);
}

#[tokio::test]
async fn one_bad_answer_costs_one_retry() {
    let client = Arc::new(ScriptedClient::new(["garbage((("], "<action>noop()</action>"));
    let out = agent_with(AgentConfig::default(), client.clone()).act(&observation()).await.unwrap();
    assert_eq!((out.action.as_str(), out.retries, out.error.as_deref()), ("noop()", 1, None));
    assert_eq!(client.calls(), 2);
    assert_eq!(out.completions, ["garbage(((", "<action>noop()</action>"]);
}

#[tokio::test]
async fn retries_are_bounded() {
    let client = Arc::new(ScriptedClient::constant("garbage((("));
    let out = agent_with(AgentConfig::default(), client.clone()).act(&observation()).await.unwrap();
    assert_eq!(out.action, "noop()");
    assert_eq!(out.retries, 4);
    assert!(!out.error.unwrap().is_empty());
    assert_eq!(client.calls(), 5);

    for max_retries in [0, 2] {
        let client = Arc::new(ScriptedClient::constant("garbage((("));
        let config = AgentConfig {
            max_retries,
            ..AgentConfig::default()
        };
        agent_with(config, client.clone()).act(&observation()).await.unwrap();
        assert_eq!(client.calls(), max_retries as usize + 1);
    }
}

#[tokio::test]
async fn retry_prompts_carry_the_parse_error() {
    let seen: Arc<Mutex<Vec<Vec<Message>>>> = Arc::default();
    let log = seen.clone();
    let client = FnClient(move |messages: &[Message]| {
        let mut log = log.lock().unwrap();
        log.push(messages.to_vec());
        if log.len() == 1 { "clack(\"5\")" } else { "noop()" }.to_string()
    });
    let agent = Agent::new(AgentConfig::default(), Arc::new(client)).unwrap();
    agent.act(&observation()).await.unwrap();
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    assert_eq!(seen[1].len(), seen[0].len() + 2);
    assert_eq!(seen[1][seen[0].len()].role, Role::Assistant);
    assert_eq!(seen[1][seen[0].len()].content, "clack(\"5\")");
    assert!(seen[1].last().unwrap().content.contains("clack"));
}

#[test]
fn thinking_instruction_follows_the_flag() {
    let obs = observation();
    let prompt = |use_thinking| {
        let config = AgentConfig {
            use_thinking,
            ..AgentConfig::default()
        };
        let text = user_text(&build_prompt(&obs, &[], &config, &config.action_description(), &CharEstimator)).to_string();
        text.split(INSTRUCTION_HEADER).nth(1).unwrap().to_string()
    };
    assert!(prompt(true).contains("<think>"));
    assert!(!prompt(false).contains("<think>"));
}

#[test]
fn action_history_lists_every_step() {
    let client = Arc::new(ScriptedClient::constant("noop()"));
    let mut agent = agent_with(AgentConfig::default(), client);
    let outcome = |action: &str| webgym_core::agent::ActOutcome {
        action: action.to_string(),
        thought: None,
        retries: 0,
        error: None,
        prompt: vec![],
        completions: vec![],
    };
    agent.record(1, &outcome("click(\"5\")"), None);
    agent.record(2, &outcome("noop()"), None);
    let text = user_text(&agent.prompt(&observation())).to_string();
    let history = text.split(ACTION_HISTORY_HEADER).nth(1).unwrap();
    let history: Vec<&str> = history.trim_start().split("\n\n").next().unwrap().lines().collect();
    assert_eq!(history, ["step 1: click(\"5\")", "step 2: noop()"]);
}

#[test]
fn history_keeps_errors_and_thoughts_only_when_flagged() {
    let entry = HistoryEntry {
        step: 3,
        action: "click(\"9\")".into(),
        thought: Some("try nine".into()),
        error: Some("element 9 is not visible".into()),
    };
    let mut plain = Vec::new();
    update_history(&mut plain, entry.clone(), &AgentConfig::default());
    assert_eq!((plain[0].thought.as_ref(), plain[0].error.as_ref()), (None, None));

    let config = AgentConfig {
        use_error_history: true,
        use_think_history: true,
        ..AgentConfig::default()
    };
    let mut kept = Vec::new();
    update_history(&mut kept, entry.clone(), &config);
    assert_eq!(kept[0], entry);

    let text = user_text(&build_prompt(&observation(), &kept, &config, "", &CharEstimator)).to_string();
    assert!(text.contains("step 3: element 9 is not visible"), "{text}");
    assert!(text.contains("step 3: try nine"));
}

/// Every boolean flag that adds a section of its own.
const SECTION_FLAGS: &[(&str, &str)] = &[
    ("use_html", DOM_HEADER),
    ("use_focused_element", FOCUSED_HEADER),
    ("use_last_error", LAST_ERROR_HEADER),
    ("use_action_history", ACTION_HISTORY_HEADER),
    ("use_error_history", ERROR_HISTORY_HEADER),
    ("use_think_history", THINK_HISTORY_HEADER),
];

fn with_flag(base: &AgentConfig, flag: &str, on: bool) -> AgentConfig {
    let mut v = serde_json::to_value(base).unwrap();
    v[flag] = serde_json::Value::Bool(on);
    serde_json::from_value(v).unwrap()
}

/// The user message with one section removed.
fn without_section(text: &str, header: &str) -> String {
    text.split("\n\n")
        .filter(|block| !block.starts_with(&format!("{header}\n")))
        .collect::<Vec<_>>()
        .join("\n\n")
}

#[test]
fn each_flag_changes_only_its_section() {
    let obs = observation();
    let base = AgentConfig::default();
    for (flag, header) in SECTION_FLAGS {
        let on = with_flag(&base, flag, true);
        let off = with_flag(&base, flag, false);
        let text_on = user_text(&build_prompt(&obs, &[], &on, &on.action_description(), &CharEstimator)).to_string();
        let text_off = user_text(&build_prompt(&obs, &[], &off, &off.action_description(), &CharEstimator)).to_string();
        let h_on: BTreeSet<_> = headers(&text_on).into_iter().collect();
        let h_off: BTreeSet<_> = headers(&text_off).into_iter().collect();
        assert_eq!(h_on.difference(&h_off).copied().collect::<Vec<_>>(), [*header], "{flag}");
        assert!(h_off.is_subset(&h_on), "{flag}");
        assert_eq!(without_section(&text_on, header), text_off, "{flag}");
    }
}

#[test]
fn configuration_checks_and_presets() {
    let config = AgentConfig {
        action_set: ActionSet::BidCoord,
        ..AgentConfig::default()
    };
    assert_eq!(config.validate(), Err(ConfigError::CoordsRequired));
    assert!(Agent::new(config.clone(), Arc::new(ScriptedClient::constant("noop()"))).is_err());
    let fixed = AgentConfig {
        coords_mode: CoordsMode::Center,
        ..config
    };
    assert_eq!(fixed.validate(), Ok(()));
    for name in ["gpt-4o", "gpt-3.5", "llama3"] {
        AgentConfig::preset(name).unwrap().validate().unwrap();
    }
    assert!(matches!(AgentConfig::preset("nope"), Err(ConfigError::UnknownPreset(_))));
    assert_ne!(AgentConfig::preset("gpt-4o").unwrap().digest(), AgentConfig::preset("llama3").unwrap().digest());
}

#[tokio::test]
async fn decisions_are_deterministic() {
    let obs = observation();
    let run = || async {
        let client = Arc::new(ScriptedClient::new(["bad(", "<think>go</think><action>click(\"5\")</action>"], "noop()"));
        agent_with(AgentConfig::default(), client).act(&obs).await.unwrap()
    };
    assert_eq!(run().await, run().await);
}

#[tokio::test]
async fn oracle_client_reads_the_prompt() {
    let client = Arc::new(OracleClient::new(vec![
        OracleStep::on("button", "Go", "click(\"{bid}\")"),
        OracleStep::on("link", "Missing", "click(\"{bid}\")"),
    ]));
    let agent = Agent::new(AgentConfig::default(), client).unwrap();
    assert_eq!(agent.act(&observation()).await.unwrap().action, "click(\"5\")");
    assert_eq!(agent.act(&observation()).await.unwrap().action, "noop()");
    assert_eq!(agent.act(&observation()).await.unwrap().action, "noop()");
}

struct ListPage {
    url: String,
}

#[async_trait]
impl Task for ListPage {
    fn name(&self) -> &str {
        "list-page"
    }

    fn seed(&self) -> u64 {
        0
    }

    async fn setup(&mut self, session: &mut Session, _chat: &Chat) -> Result<String, TaskError> {
        session
            .navigate(NavCommand::Goto(self.url.clone()))
            .await
            .map_err(|e| TaskError::Setup(e.to_string()))?;
        Ok("Read the incident list.".into())
    }

    async fn validate(&self, _session: &mut Session, _chat: &Chat) -> Validation {
        Validation::pending()
    }

    async fn teardown(&mut self, _session: &mut Session) -> Result<(), TaskError> {
        Ok(())
    }
}

#[tokio::test]
async fn prompts_fit_the_token_budget() {
    require_browser!();
    let server = FixtureServer::start().await.unwrap();
    let config = AgentConfig {
        max_prompt_tokens: 500,
        ..AgentConfig::default()
    };
    let _slot = common::slot().await;
    let session = Session::launch(Default::default()).await.unwrap();
    let mut env = Env::new(session, config.catalog(), config.env_config());
    let obs = env
        .reset(Box::new(ListPage {
            url: server.base_url() + "/fixture/list",
        }))
        .await
        .unwrap();
    let full = build_prompt(&obs, &[], &AgentConfig::default(), &config.action_description(), &CharEstimator);
    assert!(prompt_tokens(&full, &CharEstimator) > 500);

    let prompt = build_prompt(&obs, &[], &config, &config.action_description(), &CharEstimator);
    assert!(prompt_tokens(&prompt, &CharEstimator) <= 500);
    let text = user_text(&prompt);
    let ax = text.split(AXTREE_HEADER).nth(1).expect("tree section kept");
    let ax = ax.split("\n\n# ").next().unwrap();
    assert!(ax.trim_end().ends_with(TRUNCATION_MARKER), "{ax}");

    for budget in [50, 200, 1000, 3000] {
        let config = AgentConfig {
            max_prompt_tokens: budget,
            use_html: true,
            ..AgentConfig::default()
        };
        let prompt = build_prompt(&obs, &[], &config, &config.action_description(), &CharEstimator);
        assert!(prompt_tokens(&prompt, &CharEstimator) <= budget, "budget {budget}");
    }
}
