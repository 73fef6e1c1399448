//! Multiple-choice evaluation: zero-shot, answer-only, temperature 0.
//!
//! Accuracy is reported per category, over all questions, and over the
//! questions flagged `hard`. Unparseable answers and backend failures count
//! as incorrect.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use futures::StreamExt;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::backend::{ChatBackend, GenerationParams, GenerationRequest, Message};
use crate::prompt::{FunctionScene, PromptComposer, SELF_CHECK};
use crate::retrieval::{inject, retrieve, RetrievalConfig, SearchProvider, SelfChecker};
use crate::template::render;
use crate::Locale;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "STEM")]
    Stem,
    SocialScience,
    Humanities,
    Others,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::Stem, Category::SocialScience, Category::Humanities, Category::Others];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
    C,
    D,
}

impl Choice {
    pub const ALL: [Choice; 4] = [Choice::A, Choice::B, Choice::C, Choice::D];

    pub fn from_char(c: char) -> Option<Choice> {
        match c.to_ascii_uppercase() {
            'A' => Some(Choice::A),
            'B' => Some(Choice::B),
            'C' => Some(Choice::C),
            'D' => Some(Choice::D),
            _ => None,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Choice::A => 'A',
            Choice::B => 'B',
            Choice::C => 'C',
            Choice::D => 'D',
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalQuestion {
    pub id: String,
    pub category: Category,
    #[serde(default)]
    pub hard: bool,
    #[serde(alias = "stem_text")]
    pub question: String,
    /// Options A to D, in order.
    pub choices: Vec<String>,
    #[serde(alias = "answer_key")]
    pub answer: Choice,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Schema { line: usize, reason: String },
    #[error("line {line}: duplicate question id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("no questions to evaluate")]
    NoQuestions,
    #[error("{failed} of {total} questions failed at the backend; aborting")]
    TooManyFailures { failed: usize, total: usize },
}

impl EvalError {
    pub fn line(&self) -> Option<usize> {
        match self {
            EvalError::Schema { line, .. } | EvalError::DuplicateId { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// Parses and validates JSONL questions. Blank lines are skipped.
pub fn parse_questions(text: &str) -> Result<Vec<EvalQuestion>, EvalError> {
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let schema = |reason: String| EvalError::Schema { line, reason };
        let q: EvalQuestion = serde_json::from_str(raw).map_err(|e| schema(e.to_string()))?;
        if q.id.trim().is_empty() {
            return Err(schema("id must be non-empty".into()));
        }
        if q.question.trim().is_empty() {
            return Err(schema("question must be non-empty".into()));
        }
        if q.choices.len() != 4 {
            return Err(schema(format!("expected exactly 4 choices, found {}", q.choices.len())));
        }
        if seen.insert(q.id.clone(), line).is_some() {
            return Err(EvalError::DuplicateId { line, id: q.id });
        }
        out.push(q);
    }
    Ok(out)
}

pub fn load_questions(path: &Path) -> Result<Vec<EvalQuestion>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_questions(&text)
}

/// The first standalone letter A to D in `output`, ignoring case.
///
/// A letter is standalone when neither neighbour is an ASCII letter or digit,
/// so `(B)`, `B.` and `答案是C` match but the `a` inside `answer` does not.
pub fn extract_choice(output: &str) -> Option<Choice> {
    let chars: Vec<char> = output.chars().collect();
    let word = |i: Option<usize>| i.and_then(|i| chars.get(i)).is_some_and(|c| c.is_ascii_alphanumeric());
    chars.iter().enumerate().find_map(|(i, &c)| {
        let choice = Choice::from_char(c)?;
        (!word(i.checked_sub(1)) && !word(Some(i + 1))).then_some(choice)
    })
}

/// Retrieval for "with retrieval" runs: the question stem is the query.
pub struct EvalRetrieval<'a> {
    pub provider: &'a dyn SearchProvider,
    pub self_check: bool,
    pub config: RetrievalConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub locale: Locale,
    /// Questions in flight at once.
    pub concurrency: usize,
    pub max_new_tokens: u32,
    pub deadline_ms: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            locale: Locale::En,
            concurrency: 8,
            max_new_tokens: 32,
            deadline_ms: GenerationParams::default().deadline_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Accuracy for each category present in the question set.
    pub per_category_accuracy: BTreeMap<Category, f64>,
    /// Correct answers over all questions.
    pub avg: f64,
    /// Correct answers over hard questions; `None` when there are none.
    pub avg_hard: Option<f64>,
    pub n_total: usize,
    pub n_hard: usize,
    pub n_correct: usize,
    pub n_unparseable: usize,
    pub n_failed: usize,
    pub retrieval_enabled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Answered(Option<Choice>),
    Failed,
}

/// Builds the backend request for one question.
pub async fn question_request(
    question: &EvalQuestion,
    composer: &PromptComposer,
    backend: &dyn ChatBackend,
    retrieval: Option<&EvalRetrieval<'_>>,
    config: &EvalConfig,
) -> GenerationRequest {
    let locale = config.locale;
    let templates = composer.templates();
    let scene = if retrieval.is_some() {
        FunctionScene::RetrievalQA
    } else {
        FunctionScene::GeneralChat
    };
    let mut spec = composer.scene_defaults(scene, locale);
    if let Some(r) = retrieval {
        spec.tools
            .set(SELF_CHECK, r.self_check)
            .expect("standard tool config has a self-check entry");
    }
    let system_prompt = composer.compose(&spec).expect("default profile is a single line");

    let c = &question.choices;
    let user = Message::user(render(
        &templates.locale(locale).requests.multiple_choice,
        &[
            ("question", question.question.as_str()),
            ("a", c[0].as_str()),
            ("b", c[1].as_str()),
            ("c", c[2].as_str()),
            ("d", c[3].as_str()),
        ],
    ));

    let snippets = match retrieval {
        None => Vec::new(),
        Some(r) => match retrieve(&question.question, r.provider, &r.config).await {
            Ok(outcome) => {
                let checker = SelfChecker::new(backend, templates, locale).with_concurrency(r.config.self_check_concurrency);
                checker.filter(&question.question, outcome.into_snippets(), r.self_check).await
            }
            Err(error) => {
                warn!(id = %question.id, %error, "retrieval skipped");
                Vec::new()
            }
        },
    };
    let params = GenerationParams {
        max_new_tokens: config.max_new_tokens,
        deadline_ms: config.deadline_ms,
        ..GenerationParams::deterministic(locale)
    };
    GenerationRequest::new(system_prompt, inject(&snippets, &[user], templates, locale), params)
}

async fn answer(
    question: &EvalQuestion,
    composer: &PromptComposer,
    backend: &dyn ChatBackend,
    retrieval: Option<&EvalRetrieval<'_>>,
    config: &EvalConfig,
) -> Outcome {
    let request = question_request(question, composer, backend, retrieval, config).await;
    match backend.generate(&request).await {
        Ok(reply) => Outcome::Answered(extract_choice(&reply.content)),
        Err(error) => {
            warn!(id = %question.id, %error, "backend failed; counting as incorrect");
            Outcome::Failed
        }
    }
}

pub async fn run_eval(
    questions: &[EvalQuestion],
    backend: &dyn ChatBackend,
    composer: &PromptComposer,
    retrieval: Option<EvalRetrieval<'_>>,
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    if questions.is_empty() {
        return Err(EvalError::NoQuestions);
    }
    let retrieval = retrieval.as_ref();
    let outcomes: Vec<(usize, Outcome)> = futures::stream::iter(questions.iter().enumerate())
        .map(|(i, q)| async move { (i, answer(q, composer, backend, retrieval, config).await) })
        .buffer_unordered(config.concurrency.max(1))
        .collect()
        .await;

    let n_total = questions.len();
    let n_failed = outcomes.iter().filter(|(_, o)| *o == Outcome::Failed).count();
    if n_failed * 10 > n_total {
        return Err(EvalError::TooManyFailures {
            failed: n_failed,
            total: n_total,
        });
    }

    let mut per_category: BTreeMap<Category, (usize, usize)> = BTreeMap::new();
    let (mut n_correct, mut n_hard, mut hard_correct, mut n_unparseable) = (0, 0, 0, 0);
    for (i, outcome) in outcomes {
        let q = &questions[i];
        let correct = outcome == Outcome::Answered(Some(q.answer));
        if outcome == Outcome::Answered(None) {
            n_unparseable += 1;
        }
        let entry = per_category.entry(q.category).or_default();
        entry.1 += 1;
        if correct {
            entry.0 += 1;
            n_correct += 1;
        }
        if q.hard {
            n_hard += 1;
            hard_correct += usize::from(correct);
        }
    }

    Ok(EvalReport {
        per_category_accuracy: per_category
            .into_iter()
            .map(|(c, (right, total))| (c, right as f64 / total as f64))
            .collect(),
        avg: n_correct as f64 / n_total as f64,
        avg_hard: (n_hard > 0).then(|| hard_correct as f64 / n_hard as f64),
        n_total,
        n_hard,
        n_correct,
        n_unparseable,
        n_failed,
        retrieval_enabled: retrieval.is_some(),
    })
}
