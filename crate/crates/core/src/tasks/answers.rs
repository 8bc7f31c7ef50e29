//! Answer matching for question-answering and dashboard tasks.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Lowercase, drop punctuation, collapse whitespace.
pub fn normalize(text: &str) -> String {
    let kept: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// The set of answers a question accepts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptedAnswers {
    pub canonical: String,
    pub alternates: Vec<String>,
}

impl AcceptedAnswers {
    pub fn new(canonical: &str, alternates: &[&str]) -> Self {
        Self {
            canonical: canonical.to_string(),
            alternates: alternates.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn all(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.canonical.as_str()).chain(self.alternates.iter().map(String::as_str))
    }

    /// Whether `answer` equals some accepted answer once both are normalized.
    pub fn accepts(&self, answer: &str) -> bool {
        let n = normalize(answer);
        !n.is_empty() && self.all().any(|a| normalize(a) == n)
    }
}

/// What a dashboard question expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChartAnswer {
    Number { value: f64 },
    Label { label: String },
}

/// Relative tolerance for numeric dashboard answers.
pub const NUMBER_TOLERANCE: f64 = 0.005;

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?\d[\d,]*(?:\.\d+)?").unwrap())
}

/// Every number written in `text`; thousands separators are ignored.
pub fn numbers_in(text: &str) -> Vec<f64> {
    number_re()
        .find_iter(text)
        .filter_map(|m| m.as_str().replace(',', "").parse().ok())
        .collect()
}

/// Whether `needle` occurs in `haystack` as a run of whole words.
fn contains_words(haystack: &str, needle: &str) -> bool {
    let hay: Vec<&str> = haystack.split(' ').collect();
    let need: Vec<&str> = needle.split(' ').collect();
    !need.is_empty() && hay.windows(need.len()).any(|w| w == need.as_slice())
}

impl ChartAnswer {
    /// A message passes if it states a number within the tolerance of the
    /// expected value, or names the expected label as whole words.
    pub fn accepts(&self, message: &str) -> bool {
        match self {
            ChartAnswer::Number { value } => numbers_in(message)
                .into_iter()
                .any(|n| (n - value).abs() <= NUMBER_TOLERANCE * value.abs()),
            ChartAnswer::Label { label } => {
                let label = normalize(label);
                !label.is_empty() && contains_words(&normalize(message), &label)
            }
        }
    }
}
