//! Essay feedback fixtures and single-violation mutations.
//!
//! Documents are built as ordered member lists and rendered by hand so that
//! duplicate keys, which a JSON map cannot hold, can be produced.

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::Value;

pub const ESSAY: &str = "The first snow came early that year. My sister pressed her face to the window and laughed. \
We ran outside without our gloves. Our hands turned red, but we built a snowman taller than our father. \
When the sun came out the next morning, he leaned to one side like a tired old man. \
I learned that the best days do not last, and that is why we remember them.";

pub const SENTENCES: [&str; 6] = [
    "The first snow came early that year.",
    "My sister pressed her face to the window and laughed.",
    "We ran outside without our gloves.",
    "Our hands turned red, but we built a snowman taller than our father.",
    "When the sun came out the next morning, he leaned to one side like a tired old man.",
    "I learned that the best days do not last, and that is why we remember them.",
];

pub const ASPECTS: [&str; 4] = ["content", "expression", "paragraph", "overall_evaluation"];

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf(Value),
    Object(Vec<(String, Node)>),
    Array(Vec<Node>),
}

impl Node {
    pub fn render(&self) -> String {
        match self {
            Node::Leaf(v) => v.to_string(),
            Node::Object(members) => {
                let inner: Vec<String> = members
                    .iter()
                    .map(|(k, v)| format!("{}: {}", Value::from(k.as_str()), v.render()))
                    .collect();
                format!("{{{}}}", inner.join(", "))
            }
            Node::Array(items) => {
                let inner: Vec<String> = items.iter().map(Node::render).collect();
                format!("[{}]", inner.join(", "))
            }
        }
    }

    fn members_mut(&mut self) -> &mut Vec<(String, Node)> {
        match self {
            Node::Object(m) => m,
            _ => panic!("not an object"),
        }
    }

    fn get_mut(&mut self, key: &str) -> &mut Node {
        &mut self
            .members_mut()
            .iter_mut()
            .find(|(k, _)| k == key)
            .expect("member exists")
            .1
    }

    fn items_mut(&mut self) -> &mut Vec<Node> {
        match self {
            Node::Array(items) => items,
            _ => panic!("not an array"),
        }
    }
}

fn leaf(v: impl Into<Value>) -> Node {
    Node::Leaf(v.into())
}

/// A random feedback document satisfying every invariant for [`ESSAY`],
/// with at least one standout sentence.
pub fn valid_feedback(rng: &mut impl Rng) -> Node {
    let comments = [
        "Clear and vivid.",
        "Good control of detail.",
        "Well paced.",
        "Could go deeper.",
        "结构清晰，语言生动。",
    ];
    let mut standouts: Vec<&str> = SENTENCES.to_vec();
    standouts.shuffle(rng);
    let count = rng.gen_range(1..=3);
    Node::Object(vec![
        ("overall_score".into(), leaf(rng.gen_range(0..=100))),
        (
            "aspect_ratings".into(),
            Node::Object(
                ASPECTS
                    .iter()
                    .map(|a| (a.to_string(), leaf(rng.gen_range(1..=5))))
                    .collect(),
            ),
        ),
        (
            "aspect_comments".into(),
            Node::Object(
                ASPECTS
                    .iter()
                    .map(|a| (a.to_string(), leaf(*comments.choose(rng).unwrap())))
                    .collect(),
            ),
        ),
        (
            "standout_sentences".into(),
            Node::Array(
                standouts[..count]
                    .iter()
                    .map(|s| {
                        Node::Object(vec![
                            ("sentence".into(), leaf(*s)),
                            ("remark".into(), leaf(*comments.choose(rng).unwrap())),
                        ])
                    })
                    .collect(),
            ),
        ),
    ])
}

/// Wraps the document the way a chatty model might.
pub fn model_output(rng: &mut impl Rng, doc: &Node) -> String {
    let prefix = ["", "Here is the assessment:\n", "```json\n", "评语如下：\n"];
    let suffix = ["", "\nHope this helps.", "\n```", "\n"];
    format!(
        "{}{}{}",
        prefix.choose(rng).unwrap(),
        doc.render(),
        suffix.choose(rng).unwrap()
    )
}

/// One broken fixture and the violation a validator must report.
#[derive(Debug, Clone, PartialEq)]
pub struct Mutation {
    pub output: String,
    /// Expected error kind, snake_case.
    pub kind: &'static str,
    /// Expected field path; `None` for errors not tied to a field.
    pub field: Option<String>,
}

fn standout_mut(doc: &mut Node, index: usize) -> &mut Node {
    &mut doc.get_mut("standout_sentences").items_mut()[index]
}

/// Applies one random single-invariant violation to a fresh valid document.
pub fn mutate(rng: &mut impl Rng) -> Mutation {
    let mut doc = valid_feedback(rng);
    let n_standouts = doc.get_mut("standout_sentences").items_mut().len();
    let s = rng.gen_range(0..n_standouts);
    let aspect = *ASPECTS.choose(rng).unwrap();
    let map = *["aspect_ratings", "aspect_comments"].choose(rng).unwrap();
    let top = *["overall_score", "aspect_ratings", "aspect_comments", "standout_sentences"]
        .choose(rng)
        .unwrap();
    let member = *["sentence", "remark"].choose(rng).unwrap();

    let (kind, field): (&'static str, Option<String>) = match rng.gen_range(0..18) {
        0 => {
            doc.members_mut().retain(|(k, _)| k != top);
            ("missing_field", Some(top.into()))
        }
        1 => {
            doc.get_mut(map).members_mut().retain(|(k, _)| k != aspect);
            ("missing_field", Some(format!("{map}.{aspect}")))
        }
        2 => {
            standout_mut(&mut doc, s)
                .members_mut().retain(|(k, _)| k != member);
            ("missing_field", Some(format!("standout_sentences[{s}].{member}")))
        }
        3 => {
            let copy = doc.members_mut().iter().find(|(k, _)| k == top).unwrap().clone();
            doc.members_mut().push(copy);
            ("duplicate_field", Some(top.into()))
        }
        4 => {
            let object = doc.get_mut(map);
            let copy = object.members_mut().iter().find(|(k, _)| k == aspect).unwrap().clone();
            object.members_mut().push(copy);
            ("duplicate_field", Some(format!("{map}.{aspect}")))
        }
        5 => {
            doc.members_mut().push(("confidence".into(), leaf(0.9)));
            ("unknown_field", Some("confidence".into()))
        }
        6 => {
            doc.get_mut(map).members_mut().push(("creativity".into(), leaf(3)));
            ("unknown_field", Some(format!("{map}.creativity")))
        }
        7 => {
            *doc.get_mut("overall_score") = leaf(rng.gen_range(101..=1000));
            ("out_of_range", Some("overall_score".into()))
        }
        8 => {
            *doc.get_mut("overall_score") = leaf(-rng.gen_range(1..=50));
            ("out_of_range", Some("overall_score".into()))
        }
        9 => {
            let bad = *[0, 6, 7, 10, -1].choose(rng).unwrap();
            *doc.get_mut("aspect_ratings").get_mut(aspect) = leaf(bad);
            ("out_of_range", Some(format!("aspect_ratings.{aspect}")))
        }
        10 => {
            *doc.get_mut("aspect_ratings").get_mut(aspect) = leaf("4");
            ("wrong_type", Some(format!("aspect_ratings.{aspect}")))
        }
        11 => {
            *doc.get_mut("aspect_ratings").get_mut(aspect) = leaf(3.5);
            ("wrong_type", Some(format!("aspect_ratings.{aspect}")))
        }
        12 => {
            *doc.get_mut("aspect_comments").get_mut(aspect) = leaf(4);
            ("wrong_type", Some(format!("aspect_comments.{aspect}")))
        }
        13 => {
            *doc.get_mut("overall_score") = leaf("eighty");
            ("wrong_type", Some("overall_score".into()))
        }
        14 => {
            *doc.get_mut(top) = Node::Leaf(Value::Null);
            ("wrong_type", Some(top.into()))
        }
        15 => {
            let blank = *["", "   "].choose(rng).unwrap();
            *doc.get_mut("aspect_comments").get_mut(aspect) = leaf(blank);
            ("empty", Some(format!("aspect_comments.{aspect}")))
        }
        16 => {
            let altered = *[
                "The snow never came that year.",
                "the first snow came early that year.",
                "My sister laughed.",
            ]
            .choose(rng)
            .unwrap();
            *standout_mut(&mut doc, s).get_mut("sentence") = leaf(altered);
            ("not_in_essay", Some(format!("standout_sentences[{s}].sentence")))
        }
        _ => {
            let output = "The essay is good. Overall score: 85. Content 4, expression 4.".to_string();
            return Mutation {
                output,
                kind: "no_json",
                field: None,
            };
        }
    };
    Mutation {
        output: model_output(rng, &doc),
        kind,
        field,
    }
}
