//! Fine-grained essay assessment: request construction and strict validation
//! of the model's JSON verdict.
//!
//! The expected reply is one JSON object:
//!
//! ```json
//! {
//!   "overall_score": 86,
//!   "aspect_ratings": {"content": 4, "expression": 5, "paragraph": 4, "overall_evaluation": 4},
//!   "aspect_comments": {"content": "...", "expression": "...", "paragraph": "...", "overall_evaluation": "..."},
//!   "standout_sentences": [{"sentence": "<verbatim from the essay>", "remark": "..."}]
//! }
//! ```
//!
//! Score ranges come from [`EssaySchema`]; the defaults are 0-100 overall and
//! 1-5 per aspect.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::json::{first_object, Json};
use crate::prompt::{FunctionScene, PromptComposer, SystemPromptSpec};
use crate::template::{render, Locale};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aspect {
    Content,
    Expression,
    Paragraph,
    OverallEvaluation,
}

impl Aspect {
    pub const ALL: [Aspect; 4] = [
        Aspect::Content,
        Aspect::Expression,
        Aspect::Paragraph,
        Aspect::OverallEvaluation,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Aspect::Content => "content",
            Aspect::Expression => "expression",
            Aspect::Paragraph => "paragraph",
            Aspect::OverallEvaluation => "overall_evaluation",
        }
    }

    fn from_key(key: &str) -> Option<Self> {
        Aspect::ALL.into_iter().find(|a| a.key() == key)
    }
}

impl fmt::Display for Aspect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StandoutSentence {
    pub sentence: String,
    pub remark: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EssayFeedback {
    pub overall_score: u32,
    pub aspect_ratings: BTreeMap<Aspect, u32>,
    pub aspect_comments: BTreeMap<Aspect, String>,
    pub standout_sentences: Vec<StandoutSentence>,
}

/// Deployment-specific scales and limits for essay assessment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EssaySchema {
    pub version: u32,
    pub overall_min: u32,
    pub overall_max: u32,
    pub rating_min: u32,
    pub rating_max: u32,
    pub max_essay_chars: usize,
}

impl Default for EssaySchema {
    fn default() -> Self {
        Self {
            version: 1,
            overall_min: 0,
            overall_max: 100,
            rating_min: 1,
            rating_max: 5,
            max_essay_chars: 8000,
        }
    }
}

/// Why a model reply is not a valid [`EssayFeedback`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EssayError {
    #[error("essay must be non-empty")]
    EmptyEssay,
    #[error("essay has {chars} characters; the limit is {max}")]
    EssayTooLong { chars: usize, max: usize },
    #[error("no JSON object found in the model output")]
    NoJson,
    #[error("{field}: missing")]
    MissingField { field: String },
    #[error("{field}: appears more than once")]
    DuplicateField { field: String },
    #[error("{field}: unknown field")]
    UnknownField { field: String },
    #[error("{field}: expected {expected}, found {found}")]
    WrongType {
        field: String,
        expected: String,
        found: String,
    },
    #[error("{field}: {value} is outside {min}..={max}")]
    OutOfRange {
        field: String,
        value: String,
        min: u32,
        max: u32,
    },
    #[error("{field}: must be non-empty")]
    Empty { field: String },
    #[error("{field}: {sentence:?} does not appear verbatim in the essay")]
    NotInEssay { field: String, sentence: String },
}

impl EssayError {
    /// Path of the offending field, e.g. `aspect_ratings.content`.
    pub fn field(&self) -> Option<&str> {
        match self {
            EssayError::MissingField { field }
            | EssayError::DuplicateField { field }
            | EssayError::UnknownField { field }
            | EssayError::WrongType { field, .. }
            | EssayError::OutOfRange { field, .. }
            | EssayError::Empty { field }
            | EssayError::NotInEssay { field, .. } => Some(field),
            EssayError::EmptyEssay | EssayError::EssayTooLong { .. } | EssayError::NoJson => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EssayRequest {
    pub spec: SystemPromptSpec,
    pub user_message: String,
}

/// Essay-assessment scene prompt plus a user message embedding the essay and
/// the JSON output instruction.
pub fn build_essay_request(
    essay: &str,
    locale: Locale,
    composer: &PromptComposer,
    schema: &EssaySchema,
) -> Result<EssayRequest, EssayError> {
    if essay.trim().is_empty() {
        return Err(EssayError::EmptyEssay);
    }
    let chars = essay.chars().count();
    if chars > schema.max_essay_chars {
        return Err(EssayError::EssayTooLong {
            chars,
            max: schema.max_essay_chars,
        });
    }
    let template = &composer.templates().locale(locale).requests.essay;
    Ok(EssayRequest {
        spec: composer.scene_defaults(FunctionScene::EssayAssessment, locale),
        user_message: render(template, &[("essay", essay)]),
    })
}

const TOP_LEVEL: [&str; 4] = [
    "overall_score",
    "aspect_ratings",
    "aspect_comments",
    "standout_sentences",
];

/// Extracts the first JSON object from `model_output` and validates it
/// against every [`EssayFeedback`] invariant.
pub fn parse_essay_feedback(
    model_output: &str,
    essay: &str,
    schema: &EssaySchema,
) -> Result<EssayFeedback, EssayError> {
    let root = first_object(model_output).ok_or(EssayError::NoJson)?;
    check_members(&root, "", &TOP_LEVEL)?;

    let overall = single(&root, "overall_score", "overall_score")?;
    let overall_score = integer_in(overall, "overall_score", schema.overall_min, schema.overall_max)?;

    let ratings = single(&root, "aspect_ratings", "aspect_ratings")?;
    let aspect_ratings = aspect_map(ratings, "aspect_ratings", |value, field| {
        integer_in(value, field, schema.rating_min, schema.rating_max)
    })?;

    let comments = single(&root, "aspect_comments", "aspect_comments")?;
    let aspect_comments = aspect_map(comments, "aspect_comments", |value, field| {
        non_empty_string(value, field)
    })?;

    let standouts = single(&root, "standout_sentences", "standout_sentences")?;
    let Json::Array(items) = standouts else {
        return Err(wrong_type("standout_sentences", "array", standouts));
    };
    let mut standout_sentences = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let base = format!("standout_sentences[{i}]");
        if !matches!(item, Json::Object(_)) {
            return Err(wrong_type(&base, "object", item));
        }
        check_members(item, &base, &["sentence", "remark"])?;
        let sentence_field = format!("{base}.sentence");
        let sentence = non_empty_string(single(item, "sentence", &sentence_field)?, &sentence_field)?;
        let remark_field = format!("{base}.remark");
        let remark = match single(item, "remark", &remark_field)? {
            Json::String(s) => s.clone(),
            other => return Err(wrong_type(&remark_field, "string", other)),
        };
        if !essay.contains(sentence.as_str()) {
            return Err(EssayError::NotInEssay {
                field: sentence_field,
                sentence,
            });
        }
        standout_sentences.push(StandoutSentence { sentence, remark });
    }

    Ok(EssayFeedback {
        overall_score,
        aspect_ratings,
        aspect_comments,
        standout_sentences,
    })
}

fn join(base: &str, key: &str) -> String {
    if base.is_empty() {
        key.to_string()
    } else {
        format!("{base}.{key}")
    }
}

/// Rejects unknown and duplicated members of an object.
fn check_members(object: &Json, base: &str, allowed: &[&str]) -> Result<(), EssayError> {
    let Json::Object(members) = object else {
        return Ok(());
    };
    for (i, (key, _)) in members.iter().enumerate() {
        if !allowed.contains(&key.as_str()) {
            return Err(EssayError::UnknownField {
                field: join(base, key),
            });
        }
        if members[..i].iter().any(|(k, _)| k == key) {
            return Err(EssayError::DuplicateField {
                field: join(base, key),
            });
        }
    }
    Ok(())
}

fn single<'a>(object: &'a Json, key: &'a str, field: &str) -> Result<&'a Json, EssayError> {
    let mut found = object.members(key);
    let first = found.next().ok_or_else(|| EssayError::MissingField {
        field: field.to_string(),
    })?;
    if found.next().is_some() {
        return Err(EssayError::DuplicateField {
            field: field.to_string(),
        });
    }
    Ok(first)
}

fn wrong_type(field: &str, expected: &str, found: &Json) -> EssayError {
    EssayError::WrongType {
        field: field.to_string(),
        expected: expected.to_string(),
        found: found.type_name().to_string(),
    }
}

fn integer_in(value: &Json, field: &str, min: u32, max: u32) -> Result<u32, EssayError> {
    let Json::Number(n) = value else {
        return Err(wrong_type(field, "integer", value));
    };
    let out_of_range = || EssayError::OutOfRange {
        field: field.to_string(),
        value: n.to_string(),
        min,
        max,
    };
    if let Some(v) = n.as_u64() {
        return u32::try_from(v)
            .ok()
            .filter(|v| (min..=max).contains(v))
            .ok_or_else(out_of_range);
    }
    if n.as_i64().is_some() {
        return Err(out_of_range());
    }
    Err(EssayError::WrongType {
        field: field.to_string(),
        expected: "integer".into(),
        found: "fractional number".into(),
    })
}

fn non_empty_string(value: &Json, field: &str) -> Result<String, EssayError> {
    match value {
        Json::String(s) if s.trim().is_empty() => Err(EssayError::Empty {
            field: field.to_string(),
        }),
        Json::String(s) => Ok(s.clone()),
        other => Err(wrong_type(field, "string", other)),
    }
}

fn aspect_map<T>(
    object: &Json,
    name: &str,
    mut value_of: impl FnMut(&Json, &str) -> Result<T, EssayError>,
) -> Result<BTreeMap<Aspect, T>, EssayError> {
    let Json::Object(members) = object else {
        return Err(wrong_type(name, "object", object));
    };
    let keys: Vec<&str> = Aspect::ALL.iter().map(|a| a.key()).collect();
    check_members(object, name, &keys)?;
    let mut out = BTreeMap::new();
    for aspect in Aspect::ALL {
        let field = join(name, aspect.key());
        let value = members
            .iter()
            .find(|(k, _)| Aspect::from_key(k) == Some(aspect))
            .map(|(_, v)| v)
            .ok_or_else(|| EssayError::MissingField { field: field.clone() })?;
        out.insert(aspect, value_of(value, &field)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ESSAY: &str = "My hometown sits by a quiet river. Every spring the willows turn green. \
                         I learned to swim there with my grandfather.";

    fn valid_json() -> serde_json::Value {
        serde_json::json!({
            "overall_score": 86,
            "aspect_ratings": {"content": 4, "expression": 5, "paragraph": 4, "overall_evaluation": 4},
            "aspect_comments": {
                "content": "Vivid memories of place.",
                "expression": "Fluent, concrete imagery.",
                "paragraph": "Clear progression.",
                "overall_evaluation": "A warm, well-organized piece."
            },
            "standout_sentences": [
                {"sentence": "Every spring the willows turn green.", "remark": "Seasonal image."}
            ]
        })
    }

    fn parse(output: &str) -> Result<EssayFeedback, EssayError> {
        parse_essay_feedback(output, ESSAY, &EssaySchema::default())
    }

    #[test]
    fn accepts_valid_output_with_prose() {
        let out = format!("Here is my assessment:\n{}\nHope it helps!", valid_json());
        let feedback = parse(&out).unwrap();
        assert_eq!(feedback.overall_score, 86);
        assert_eq!(feedback.aspect_ratings[&Aspect::Expression], 5);
        assert_eq!(feedback.aspect_comments.len(), 4);
        assert_eq!(feedback.standout_sentences.len(), 1);
    }

    #[test]
    fn overall_score_out_of_range() {
        let mut v = valid_json();
        v["overall_score"] = 120.into();
        let err = parse(&v.to_string()).unwrap_err();
        assert!(matches!(err, EssayError::OutOfRange { .. }));
        assert_eq!(err.field(), Some("overall_score"));
    }

    #[test]
    fn standout_not_in_essay() {
        let mut v = valid_json();
        v["standout_sentences"][0]["sentence"] = "The mountains were tall.".into();
        let err = parse(&v.to_string()).unwrap_err();
        assert!(matches!(err, EssayError::NotInEssay { .. }));
        assert_eq!(err.field(), Some("standout_sentences[0].sentence"));
    }

    #[test]
    fn missing_aspect_and_duplicate_aspect() {
        let mut v = valid_json();
        v["aspect_ratings"].as_object_mut().unwrap().remove("paragraph");
        let err = parse(&v.to_string()).unwrap_err();
        assert_eq!(
            err,
            EssayError::MissingField {
                field: "aspect_ratings.paragraph".into()
            }
        );

        let text = valid_json()
            .to_string()
            .replacen("\"content\":4", "\"content\":4,\"content\":3", 1);
        assert!(text.contains("\"content\":3"));
        let err = parse(&text).unwrap_err();
        assert_eq!(
            err,
            EssayError::DuplicateField {
                field: "aspect_ratings.content".into()
            }
        );
    }

    #[test]
    fn no_json() {
        assert_eq!(parse("I think it's a fine essay."), Err(EssayError::NoJson));
    }

    #[test]
    fn fractional_score_is_a_type_error() {
        let mut v = valid_json();
        v["aspect_ratings"]["content"] = serde_json::json!(3.5);
        let err = parse(&v.to_string()).unwrap_err();
        assert!(matches!(err, EssayError::WrongType { .. }));
        assert_eq!(err.field(), Some("aspect_ratings.content"));
    }

    #[test]
    fn request_embeds_essay_once() {
        let composer = PromptComposer::default();
        let essay = "x".repeat(290) + " end.12345";
        assert_eq!(essay.chars().count(), 300);
        let req = build_essay_request(&essay, Locale::En, &composer, &EssaySchema::default()).unwrap();
        assert_eq!(req.user_message.matches(essay.as_str()).count(), 1);
        assert!(req.user_message.contains("\"overall_score\""));
        assert_eq!(
            req.spec,
            composer.scene_defaults(FunctionScene::EssayAssessment, Locale::En)
        );

        let zh = build_essay_request("春天来了。", Locale::Zh, &composer, &EssaySchema::default()).unwrap();
        assert!(zh.user_message.starts_with("请批改下面的作文。"));
        assert_eq!(zh.spec.locale, Locale::Zh);
    }

    #[test]
    fn request_rejects_oversize_and_empty() {
        let composer = PromptComposer::default();
        let schema = EssaySchema {
            max_essay_chars: 10,
            ..EssaySchema::default()
        };
        assert_eq!(
            build_essay_request(&"a".repeat(11), Locale::En, &composer, &schema),
            Err(EssayError::EssayTooLong { chars: 11, max: 10 })
        );
        assert!(build_essay_request("a".repeat(11).as_str(), Locale::En, &composer, &schema)
            .unwrap_err()
            .to_string()
            .contains("limit is 10"));
        assert_eq!(
            build_essay_request(" ", Locale::En, &composer, &schema),
            Err(EssayError::EmptyEssay)
        );
    }

    #[test]
    fn feedback_serializes_with_aspect_keys() {
        let feedback = parse(&valid_json().to_string()).unwrap();
        let json = serde_json::to_value(&feedback).unwrap();
        assert_eq!(json["aspect_ratings"]["overall_evaluation"], 4);
        let back = parse(&json.to_string()).unwrap();
        assert_eq!(back, feedback);
    }
}
