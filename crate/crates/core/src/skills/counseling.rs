use serde::{Deserialize, Serialize};

use crate::backend::{Message, Role};

/// Coarse phase of an emotional-support conversation, for logs and the UI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CounselingStage {
    Exploration,
    Comfort,
    Suggestion,
}

const EXPLORATION_MAX_USER_TURNS: usize = 2;
const COMFORT_MAX_USER_TURNS: usize = 4;

/// Tags by the number of user turns so far. History is append-only, so the
/// tag never moves backwards within a conversation.
pub fn tag_counseling_stage(history: &[Message]) -> CounselingStage {
    let user_turns = history.iter().filter(|m| m.role == Role::User).count();
    if user_turns <= EXPLORATION_MAX_USER_TURNS {
        CounselingStage::Exploration
    } else if user_turns <= COMFORT_MAX_USER_TURNS {
        CounselingStage::Comfort
    } else {
        CounselingStage::Suggestion
    }
}
