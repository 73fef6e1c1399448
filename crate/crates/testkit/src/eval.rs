//! Multiple-choice fixtures and a straightforward accuracy counter.

use std::collections::{BTreeMap, HashMap};

use serde_json::{json, Value};

/// Eight questions, two per category, three hard, exactly two keyed `A`.
pub const EIGHT_QUESTIONS: &str = include_str!("../fixtures/eval8.jsonl");

pub fn questions(jsonl: &str) -> Vec<Value> {
    jsonl
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// Counts a report from each question's answered letter (`None` for no
/// answer). Returns the report fields as JSON so it can be compared with
/// any serialized report.
pub fn count(questions: &[Value], answers: &HashMap<String, Option<char>>) -> Value {
    let mut by_category: BTreeMap<String, (u32, u32)> = BTreeMap::new();
    let (mut total, mut correct, mut hard, mut hard_correct, mut unanswered) = (0u32, 0u32, 0u32, 0u32, 0u32);
    for q in questions {
        let id = q["id"].as_str().unwrap();
        let key = q["answer"].as_str().unwrap().chars().next().unwrap();
        let given = answers.get(id).copied().flatten();
        let ok = u32::from(given == Some(key));
        let entry = by_category.entry(q["category"].as_str().unwrap().to_string()).or_default();
        entry.0 += ok;
        entry.1 += 1;
        total += 1;
        correct += ok;
        unanswered += u32::from(given.is_none());
        if q["hard"].as_bool().unwrap_or(false) {
            hard += 1;
            hard_correct += ok;
        }
    }
    let per_category: BTreeMap<String, f64> = by_category
        .into_iter()
        .map(|(c, (r, n))| (c, f64::from(r) / f64::from(n)))
        .collect();
    json!({
        "per_category_accuracy": per_category,
        "avg": f64::from(correct) / f64::from(total),
        "avg_hard": if hard == 0 { Value::Null } else { json!(f64::from(hard_correct) / f64::from(hard)) },
        "n_total": total,
        "n_hard": hard,
        "n_correct": correct,
        "n_unparseable": unanswered,
    })
}
