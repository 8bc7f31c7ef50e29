//! Static content shared by the fixture pages and the task definitions.

pub const FIRST_NAMES: &[&str] = &["Ada", "Grace", "Alan", "Edsger", "Barbara", "Donald"];
pub const LAST_NAMES: &[&str] = &["Lovelace", "Hopper", "Turing", "Dijkstra", "Liskov", "Knuth"];
pub const DEPARTMENTS: &[&str] = &["Finance", "Human Resources", "Engineering", "Facilities", "Legal"];
/// Extra suggestions so that typing a prefix yields more than one candidate.
pub const DEPARTMENT_DECOYS: &[&str] = &["Field Services", "Help Desk", "Legal Operations", "Energy Trading"];
pub const START_DATES: &[&str] = &["2024-03-15", "2024-07-01", "2025-01-06", "2025-09-22"];

pub const PRIORITIES: &[&str] = &["1 - Critical", "2 - High", "3 - Moderate", "4 - Low"];
pub const STATES: &[&str] = &["New", "In Progress", "On Hold", "Resolved", "Closed"];
pub const GROUPS: &[&str] = &["Network", "Database", "Service Desk", "Hardware"];

/// Sortable list columns: (key, header label).
pub const COLUMNS: &[(&str, &str)] = &[
    ("number", "Number"),
    ("short_description", "Short description"),
    ("priority", "Priority"),
    ("state", "State"),
    ("assignment_group", "Assignment group"),
];
pub const SORTABLE: &[&str] = &["Number", "Short description", "Priority", "State"];
pub const DIRECTIONS: &[&str] = &["ascending", "descending"];

pub struct Incident {
    pub number: String,
    pub short_description: &'static str,
    pub priority: &'static str,
    pub state: &'static str,
    pub assignment_group: &'static str,
}

const SUBJECTS: &[&str] = &[
    "VPN drops every few minutes",
    "Printer on floor 2 jams",
    "Cannot reach the payroll database",
    "Email delivery delayed",
    "Laptop battery swelling",
    "Password reset link expired",
    "Slow file share access",
    "Monitor flickers after docking",
    "Wi-Fi unavailable in meeting room",
    "Report export times out",
    "Badge reader offline",
    "Disk nearly full on build server",
];

/// Thirty incidents covering every priority/state/group combination pattern.
pub fn incidents() -> Vec<Incident> {
    (0..30)
        .map(|i| Incident {
            number: format!("INC{:07}", 10_040 + i * 7),
            short_description: SUBJECTS[(i * 5) % SUBJECTS.len()],
            priority: PRIORITIES[i % PRIORITIES.len()],
            state: STATES[(i / 2) % STATES.len()],
            assignment_group: GROUPS[(i * 3 + i / 4) % GROUPS.len()],
        })
        .collect()
}

impl Incident {
    pub fn field(&self, key: &str) -> &str {
        match key {
            "number" => &self.number,
            "short_description" => self.short_description,
            "priority" => self.priority,
            "state" => self.state,
            _ => self.assignment_group,
        }
    }
}

/// Application navigator: (application, modules).
pub const MENU: &[(&str, &[&str])] = &[
    ("Incident", &["Create New", "Assigned to me", "Open", "Resolved"]),
    ("Problem", &["Create New", "Open", "Known Errors"]),
    ("Change", &["Create New", "Open", "Schedule"]),
    ("Service Catalog", &["Catalog", "Requests", "Approvals"]),
    ("Knowledge", &["Articles", "Feedback"]),
];

pub fn menu_paths() -> Vec<(&'static str, &'static str)> {
    MENU.iter()
        .flat_map(|(app, mods)| mods.iter().map(move |m| (*app, *m)))
        .collect()
}

pub fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    out.trim_end_matches('-').to_string()
}

pub struct CatalogItem {
    pub name: &'static str,
    pub description: &'static str,
    pub config_label: &'static str,
    pub configs: &'static [&'static str],
}

pub const CATALOG: &[CatalogItem] = &[
    CatalogItem {
        name: "Standard Laptop",
        description: "General purpose laptop for office work.",
        config_label: "Memory",
        configs: &["8 GB", "16 GB", "32 GB"],
    },
    CatalogItem {
        name: "Developer Laptop",
        description: "High performance laptop for software development.",
        config_label: "Operating system",
        configs: &["Linux", "Windows", "macOS"],
    },
    CatalogItem {
        name: "Office Chair",
        description: "Adjustable chair with lumbar support.",
        config_label: "Color",
        configs: &["Black", "Grey", "Blue"],
    },
    CatalogItem {
        name: "External Monitor",
        description: "Widescreen monitor with a height adjustable stand.",
        config_label: "Size",
        configs: &["24 inch", "27 inch", "32 inch"],
    },
    CatalogItem {
        name: "Wireless Headset",
        description: "Noise cancelling headset for calls.",
        config_label: "Connector",
        configs: &["USB-A", "USB-C", "Bluetooth only"],
    },
];

pub const QUANTITIES: &[&str] = &["1", "2", "3", "4"];

pub fn catalog_item(name: &str) -> Option<&'static CatalogItem> {
    CATALOG.iter().find(|c| c.name == name)
}

pub struct Question {
    pub wordings: [&'static str; 2],
    pub canonical: &'static str,
    pub alternates: &'static [&'static str],
}

pub struct Article {
    pub title: &'static str,
    pub keywords: &'static str,
    pub body: &'static [&'static str],
    pub questions: [Question; 3],
}

pub const ARTICLES: &[Article] = &[
    Article {
        title: "Office locations and visitor information",
        keywords: "office address headquarters visitor reception badge location",
        body: &[
            "Our headquarters are located at 42, Pizza street, New York, USA. The building is a short walk from the central station.",
            "The reception desk opens at 8:30 AM on working days. Visitors must sign in at reception and wear a badge at all times.",
            "Visitor badges are collected on Floor 3, next to the security office. Lost badges must be reported on the same day.",
        ],
        questions: [
            Question {
                wordings: [
                    "What is the address of the company headquarters?",
                    "Where are the headquarters located? Give the full address.",
                ],
                canonical: "42, Pizza street, New York, USA",
                alternates: &[
                    "42 Pizza Street, New York, USA",
                    "42, Pizza St., NY, United States",
                    "#42 Pizza Street, New York, U.S.",
                    "42 Pizza St, New York City, United States of America",
                    "42 Pizza Street, New York, United States",
                    "42 Pizza St, New York, NY, USA",
                ],
            },
            Question {
                wordings: [
                    "At what time does the reception desk open?",
                    "When does reception open on working days?",
                ],
                canonical: "8:30 AM",
                alternates: &["8:30", "08:30", "8.30 am", "8:30 a.m.", "half past eight"],
            },
            Question {
                wordings: [
                    "On which floor are visitor badges collected?",
                    "Which floor do visitors go to for their badge?",
                ],
                canonical: "Floor 3",
                alternates: &["3rd floor", "third floor", "floor three", "the third floor", "3"],
            },
        ],
    },
    Article {
        title: "Password policy and self-service reset",
        keywords: "password reset expire expiry length portal account login",
        body: &[
            "Passwords expire every 90 days. You will be reminded a week before the expiry date.",
            "A password must be at least 12 characters long and may not reuse any of your last five passwords.",
            "Forgotten passwords can be reset through the MyAccess self-service portal without contacting the service desk.",
        ],
        questions: [
            Question {
                wordings: [
                    "How often do passwords expire?",
                    "After how many days does a password expire?",
                ],
                canonical: "90 days",
                alternates: &["every 90 days", "90", "ninety days", "every ninety days"],
            },
            Question {
                wordings: [
                    "What is the minimum password length?",
                    "How many characters must a password have at least?",
                ],
                canonical: "12 characters",
                alternates: &["12", "twelve characters", "twelve", "at least 12 characters"],
            },
            Question {
                wordings: [
                    "Which portal is used for self-service password resets?",
                    "What is the name of the password reset portal?",
                ],
                canonical: "MyAccess",
                alternates: &["My Access", "the MyAccess portal", "MyAccess portal", "MyAccess self-service portal"],
            },
        ],
    },
    Article {
        title: "Laptop replacement program",
        keywords: "laptop replacement hardware refresh eligibility request support",
        body: &[
            "Employees become eligible for a new laptop after 36 months of use.",
            "Replacements are requested through the Standard Laptop item in the service catalog.",
            "For questions about the program call the hardware support line on extension 4357.",
        ],
        questions: [
            Question {
                wordings: [
                    "After how many months does an employee become eligible for a laptop replacement?",
                    "How long must a laptop be used before it can be replaced?",
                ],
                canonical: "36 months",
                alternates: &["36", "thirty-six months", "3 years", "three years"],
            },
            Question {
                wordings: [
                    "Which catalog item is used to request a replacement laptop?",
                    "What service catalog item do you order for a laptop replacement?",
                ],
                canonical: "Standard Laptop",
                alternates: &["the Standard Laptop item", "Standard Laptop catalog item", "the Standard Laptop"],
            },
            Question {
                wordings: [
                    "What extension do you call for questions about the laptop program?",
                    "Which phone extension reaches hardware support?",
                ],
                canonical: "4357",
                alternates: &["extension 4357", "ext. 4357", "x4357", "ext 4357"],
            },
        ],
    },
];

pub fn article_slug(index: usize) -> String {
    slug(ARTICLES[index].title)
}

/// Chart definitions: (title, unit, category labels).
pub const CHARTS: &[(&str, &str, &[&str])] = &[
    (
        "Open incidents by category",
        "incidents",
        &["Network", "Database", "Hardware", "Software", "Inquiry"],
    ),
    (
        "Requests fulfilled by region",
        "requests",
        &["Americas", "Europe", "Africa", "Asia", "Oceania"],
    ),
];

/// Bar values of a chart for a seed: all distinct, so the extremes are unique.
pub fn chart_values(seed: u64, chart: usize) -> Vec<u64> {
    let labels = CHARTS[chart].2;
    let mut values: Vec<u64> = Vec::with_capacity(labels.len());
    for i in 0..labels.len() as u64 {
        let mut v = 12 + (seed * 37 + chart as u64 * 101 + i * 53) % 170;
        while values.contains(&v) {
            v += 1;
        }
        values.push(v);
    }
    values
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs_are_url_safe() {
        assert_eq!(slug("Service Catalog"), "service-catalog");
        assert_eq!(slug("Password policy and self-service reset"), "password-policy-and-self-service-reset");
    }

    #[test]
    fn chart_values_are_distinct() {
        for seed in 0..50 {
            for c in 0..CHARTS.len() {
                let v = chart_values(seed, c);
                let mut s = v.clone();
                s.sort();
                s.dedup();
                assert_eq!(s.len(), v.len());
            }
        }
    }
}
