//! Scene-specific request builders and response checks.

mod counseling;
pub mod essay;
mod json;
mod socratic;

pub use counseling::{tag_counseling_stage, CounselingStage};
pub use essay::{
    build_essay_request, parse_essay_feedback, Aspect, EssayError, EssayFeedback, EssayRequest,
    EssaySchema, StandoutSentence,
};
pub use socratic::{socratic_turn_lint, LintWarning};
