use serde::{Deserialize, Serialize};

/// Advisory finding about a Socratic-teaching turn. Never blocks a reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LintWarning {
    /// The turn asks the student nothing, so the dialogue does not visibly
    /// continue as question and answer.
    NoQuestionAsked,
}

impl LintWarning {
    pub fn code(self) -> &'static str {
        match self {
            LintWarning::NoQuestionAsked => "no-question-asked",
        }
    }
}

pub fn socratic_turn_lint(assistant_message: &str) -> Vec<LintWarning> {
    if assistant_message.contains(['?', '？']) {
        Vec::new()
    } else {
        vec![LintWarning::NoQuestionAsked]
    }
}
