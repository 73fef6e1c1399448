//! Acceptance suite. Runs every criterion with its runtime limit and prints
//! one PASS/FAIL line each; exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use educhat_core::backend::{Matcher, MockBackend, MockFailure, Reply, Role};
use educhat_core::dedup::{
    cosine, dedup, run_pipeline, DatasetRecord, DedupConfig, DedupReport, FixedEmbeddings, Parallelism,
};
use educhat_core::eval::{parse_questions, run_eval, EvalConfig, EvalQuestion, EvalReport};
use educhat_core::prompt::{FunctionScene, PromptComposer, Skill, SystemPromptSpec, ToolConfig, ToolOverrides};
use educhat_core::retrieval::{SearchHit, SelfChecker, Snippet, StubSearchProvider, Verdict};
use educhat_core::skills::{parse_essay_feedback, EssayError, EssaySchema};
use educhat_core::{Locale, Templates};
use educhat_service::{ChatService, Conversation, ConversationStore, FileStore, MemoryStore};
use educhat_testkit::essay::{model_output, mutate, valid_feedback, ESSAY};
use educhat_testkit::eval::{count, questions as raw_questions, EIGHT_QUESTIONS};
use educhat_testkit::{brute_force_subsequence, clustered_embeddings, exact_cosine, greedy_dedup, naive_cosine};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: fn(),
}

fn main() {
    let criteria = [
        Criterion {
            name: "prompt golden suite",
            limit: Duration::from_secs(1),
            run: prompt_golden_suite,
        },
        Criterion {
            name: "scene tool-call conformance",
            limit: Duration::from_secs(5),
            run: scene_conformance,
        },
        Criterion {
            name: "self-check pipeline",
            limit: Duration::from_secs(5),
            run: self_check_pipeline,
        },
        Criterion {
            name: "dedup oracle equivalence",
            limit: Duration::from_secs(30),
            run: dedup_equivalence,
        },
        Criterion {
            name: "cosine correctness",
            limit: Duration::from_secs(5),
            run: cosine_correctness,
        },
        Criterion {
            name: "eval harness arithmetic",
            limit: Duration::from_secs(5),
            run: eval_arithmetic,
        },
        Criterion {
            name: "service end-to-end",
            limit: Duration::from_secs(30),
            run: service_end_to_end,
        },
        Criterion {
            name: "essay schema validator",
            limit: Duration::from_secs(5),
            run: essay_validator,
        },
    ];

    let mut failed = 0;
    for c in &criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run));
        let elapsed = started.elapsed();
        let verdict = match outcome {
            Err(payload) => Err(panic_message(payload)),
            Ok(()) if elapsed > c.limit => Err(format!("over the {:?} limit", c.limit)),
            Ok(()) => Ok(()),
        };
        match verdict {
            Ok(()) => println!("PASS {} ({:.3} s, limit {} s)", c.name, elapsed.as_secs_f64(), c.limit.as_secs()),
            Err(reason) => {
                failed += 1;
                println!(
                    "FAIL {} ({:.3} s, limit {} s): {reason}",
                    c.name,
                    elapsed.as_secs_f64(),
                    c.limit.as_secs()
                );
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<String>()
        .cloned()
        .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
        .replace('\n', " ")
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .build()
        .unwrap()
}

// Prompt golden suite

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/golden")
}

fn random_line(rng: &mut ChaCha8Rng, max: usize) -> String {
    const ALPHABET: &[char] = &['a', 'Z', '7', ' ', ':', '：', '（', ')', '华', '-', '\'', 'é', '\t'];
    loop {
        let len = rng.gen_range(1..=max);
        let s: String = (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect();
        if !s.trim().is_empty() {
            return s;
        }
    }
}

fn random_spec(rng: &mut ChaCha8Rng) -> SystemPromptSpec {
    let mut tools = ToolConfig::new();
    for _ in 0..rng.gen_range(0..8) {
        let _ = tools.push(random_line(rng, 20), rng.gen_bool(0.5));
    }
    SystemPromptSpec {
        profile_text: random_line(rng, 60),
        tools,
        skill: *Skill::ALL.choose(rng).unwrap(),
        scene: *FunctionScene::ALL.choose(rng).unwrap(),
        locale: *Locale::ALL.choose(rng).unwrap(),
    }
}

fn prompt_golden_suite() {
    let composer = PromptComposer::default();
    for scene in FunctionScene::ALL {
        for locale in Locale::ALL {
            let path = golden_dir().join(format!("{}.{}.txt", scene.as_str(), locale.as_str()));
            let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            let composed = composer.compose(&composer.scene_defaults(scene, locale)).unwrap();
            assert_eq!(composed, expected, "{scene} {locale} differs from its golden file");
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for _ in 0..1000 {
        let spec = random_spec(&mut rng);
        let text = composer.compose(&spec).unwrap();
        assert_eq!(composer.parse(&text).unwrap(), spec, "round trip of {text:?}");
    }
}

// Scene tool-call conformance

#[derive(Debug, Clone, Copy)]
struct SceneCase {
    scene: FunctionScene,
    overrides: ToolOverrides,
    provider: bool,
    self_check: bool,
}

fn scene_conformance() {
    let none = ToolOverrides::default();
    let web = ToolOverrides {
        web_search: Some(true),
        ..none
    };
    let web_checked = ToolOverrides {
        self_check: Some(true),
        ..web
    };
    let cases = [
        (FunctionScene::RetrievalQA, none, true, true),
        (FunctionScene::EssayAssessment, none, false, false),
        (FunctionScene::EssayAssessment, web, true, false),
        (FunctionScene::EssayAssessment, web_checked, true, true),
        (FunctionScene::EmotionalSupport, none, false, false),
        (FunctionScene::SocraticTeaching, none, false, false),
        (FunctionScene::GeneralChat, none, false, false),
    ];
    runtime().block_on(async {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for (scene, overrides, provider, self_check) in cases {
            let case = SceneCase {
                scene,
                overrides,
                provider,
                self_check,
            };
            session(case, rng.gen()).await;
        }
    });
}

/// A 20-turn session against a provider that returns a random number of
/// random snippets, checking every turn's calls against the scene's rules.
async fn session(case: SceneCase, seed: u64) {
    let rng = Arc::new(parking_lot::Mutex::new(ChaCha8Rng::seed_from_u64(seed)));
    let provider_rng = Arc::clone(&rng);
    let hit_counts = Arc::new(parking_lot::Mutex::new(Vec::new()));
    let counts = Arc::clone(&hit_counts);
    let provider = Arc::new(StubSearchProvider::from_fn(move |query, k| {
        let mut rng = provider_rng.lock();
        let n = rng.gen_range(1..=k);
        counts.lock().push(n);
        Ok((0..n)
            .map(|i| SearchHit {
                url: format!("https://example.org/{query}/{i}"),
                title: format!("hit {i}"),
                text: if rng.gen_bool(0.5) {
                    format!("notes on {KEYWORD}")
                } else {
                    "notes on tides".into()
                },
            })
            .collect())
    }));
    let backend = keyword_mock("Let us think it through. What comes first?");
    let service = ChatService::new(Arc::new(backend.clone()), Arc::new(MemoryStore::new()))
        .with_provider(provider.clone());
    let c = service
        .create_conversation(case.scene, Some(case.overrides))
        .unwrap_or_else(|e| panic!("{case:?}: {e}"));

    for turn in 0..20 {
        let text = {
            let mut rng = rng.lock();
            format!("turn {turn} question {}", rng.gen::<u32>())
        };
        let (provider_before, backend_before) = (provider.call_count(), backend.call_count());
        let outcome = service.post_message(&c.id, &text).await.unwrap();
        let provider_calls = provider.calls()[provider_before..].to_vec();
        let backend_calls = backend.calls()[backend_before..].to_vec();
        let checks: Vec<_> = backend_calls.iter().filter(|r| is_self_check(r)).collect();
        let answers: Vec<_> = backend_calls.iter().filter(|r| !is_self_check(r)).collect();
        let ctx = format!("{:?} {:?} turn {turn}", case.scene, case.overrides);

        assert_eq!(answers.len(), 1, "{ctx}");
        if !case.provider {
            assert!(provider_calls.is_empty() && checks.is_empty(), "{ctx}: unexpected tool calls");
            assert!(answers[0].messages.iter().all(|m| m.role != Role::SystemContext), "{ctx}");
            continue;
        }
        assert_eq!(provider_calls.len(), 1, "{ctx}");
        assert_eq!(provider_calls[0].0, text, "{ctx}");
        let injected = answers[0].messages.iter().filter(|m| m.role == Role::SystemContext).count();
        let stored = &outcome.annotations.snippets;
        if case.self_check {
            // One self-check per retrieved snippet, and only affirmed ones injected.
            assert_eq!(checks.len(), *hit_counts.lock().last().unwrap(), "{ctx}: self-check calls");
            let helpful = checks
                .iter()
                .filter(|r| r.messages[0].content.contains(KEYWORD))
                .count();
            assert_eq!(injected, helpful, "{ctx}");
            assert!(stored.iter().all(|s| s.verdict == Some(Verdict::Helpful)), "{ctx}");
        } else {
            assert!(checks.is_empty(), "{ctx}: self-check called while disabled");
            assert_eq!(injected, stored.len(), "{ctx}");
        }
        assert!(stored.iter().all(|s| s.source_url.starts_with(&format!("https://example.org/{text}/"))), "{ctx}");
    }
}

// Self-check pipeline

fn self_check_pipeline() {
    runtime().block_on(async {
        let templates = Templates::default();
        let backend = keyword_mock("unused");
        let checker = SelfChecker::new(&backend, &templates, Locale::En);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let filler = ["chlorophyll absorbs light", "the moon orbits", "stomata open", "a poem about rain"];
        let mut lists = Vec::new();
        for _ in 0..500 {
            let snippets: Vec<Snippet> = (0..rng.gen_range(0..=12))
                .map(|i| {
                    let mut text = filler.choose(&mut rng).unwrap().to_string();
                    if rng.gen_bool(0.5) {
                        text.push_str(" and ");
                        text.push_str(KEYWORD);
                    }
                    Snippet::new(format!("https://example.org/{i}"), format!("Result {i}"), text)
                })
                .collect();
            let expected: Vec<Snippet> = brute_force_subsequence(&snippets, |s| s.text.contains(KEYWORD))
                .into_iter()
                .map(|s| s.with_verdict(Verdict::Helpful))
                .collect();
            assert_eq!(checker.filter("How do plants make food?", snippets.clone(), true).await, expected);
            lists.push(snippets);
        }

        for failure in [MockFailure::Connection, MockFailure::Unavailable, MockFailure::Timeout] {
            let failing = MockBackend::with_default(Reply::Fail(failure));
            let checker = SelfChecker::new(&failing, &templates, Locale::En);
            let all_helpful = vec![Snippet::new("u", "t", KEYWORD)];
            assert!(checker.filter("q", all_helpful, true).await.is_empty(), "{failure:?} did not fail closed");
        }

        let untouched = keyword_mock("unused");
        let checker = SelfChecker::new(&untouched, &templates, Locale::En);
        for snippets in &lists {
            assert_eq!(&checker.filter("q", snippets.clone(), false).await, snippets);
        }
        assert_eq!(untouched.call_count(), 0);
    });
}

// Dedup oracle equivalence

const THRESHOLD: f64 = 0.7;

struct Fixture {
    ids: Vec<String>,
    texts: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

impl Fixture {
    fn random(rng: &mut ChaCha8Rng, n: usize) -> Self {
        let dim = rng.gen_range(2..=12);
        let vectors = clustered_embeddings(rng, n, dim, THRESHOLD, 1e-9);
        let mut texts: Vec<String> = Vec::with_capacity(n);
        for (i, v) in vectors.iter().enumerate() {
            texts.push(match vectors[..i].iter().position(|w| w == v) {
                Some(k) => texts[k].clone(),
                None => format!("text {i}"),
            });
        }
        Self {
            ids: (0..n).map(|i| format!("r{i:03}")).collect(),
            texts,
            vectors,
        }
    }

    fn provider(&self) -> FixedEmbeddings {
        FixedEmbeddings::new(self.texts.iter().cloned().zip(self.vectors.iter().cloned()))
    }

    fn records(&self) -> Vec<DatasetRecord> {
        self.ids
            .iter()
            .zip(&self.texts)
            .map(|(id, text)| DatasetRecord::new(id.clone(), text.clone()))
            .collect()
    }

    fn jsonl(&self, order: &[usize]) -> String {
        let records = self.records();
        order.iter().map(|&i| serde_json::to_string(&records[i]).unwrap() + "\n").collect()
    }

    fn vector_of(&self, id: &str) -> &[f64] {
        &self.vectors[self.ids.iter().position(|i| i == id).unwrap()]
    }
}

fn pipeline(dir: &Path, input: &str, provider: &FixedEmbeddings, config: &DedupConfig) -> (String, DedupReport) {
    let (i, o, r) = (dir.join("in.jsonl"), dir.join("out.jsonl"), dir.join("report.json"));
    std::fs::write(&i, input).unwrap();
    let (report, _) = run_pipeline(&i, &o, &r, provider, config).unwrap();
    (std::fs::read_to_string(&o).unwrap(), report)
}

fn dedup_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dir = tempfile::tempdir().unwrap();
    for fixture in 0..50 {
        let n = rng.gen_range(0..=200);
        let fx = Fixture::random(&mut rng, n);
        let config = DedupConfig {
            tile_size: rng.gen_range(1..=64),
            batch_size: rng.gen_range(1..=80),
            ..DedupConfig::default()
        };
        let provider = fx.provider();
        let identity: Vec<usize> = (0..n).collect();
        let (output, report) = pipeline(dir.path(), &fx.jsonl(&identity), &provider, &config);

        let pairs: Vec<(String, Vec<f64>)> = fx.ids.iter().cloned().zip(fx.vectors.iter().cloned()).collect();
        let reference = greedy_dedup(&pairs, THRESHOLD);
        assert_eq!(report.kept_ids, reference.kept, "fixture {fixture}");
        assert_eq!(report.removed.len(), reference.removed.len(), "fixture {fixture}");
        for (got, (removed, kept, sim)) in report.removed.iter().zip(&reference.removed) {
            assert_eq!((&got.removed_id, &got.kept_id), (removed, kept), "fixture {fixture}");
            assert!((got.similarity - sim).abs() < 1e-12, "fixture {fixture}");
        }

        let out_ids: Vec<String> = output
            .lines()
            .map(|l| serde_json::from_str::<DatasetRecord>(l).unwrap().id)
            .collect();
        assert_eq!(out_ids, reference.kept, "fixture {fixture}: output order");

        for (a, x) in report.kept_ids.iter().enumerate() {
            for y in &report.kept_ids[a + 1..] {
                let s = naive_cosine(fx.vector_of(x), fx.vector_of(y));
                assert!(s <= THRESHOLD, "fixture {fixture}: kept pair {x},{y} at {s}");
            }
        }

        let (again, second) = pipeline(dir.path(), &output, &provider, &config);
        assert_eq!(again, output, "fixture {fixture}: not idempotent");
        assert!(second.removed.is_empty());

        // Order stability: a shuffled input gives the reference for that order.
        let mut order = identity.clone();
        order.shuffle(&mut rng);
        let (_, shuffled) = pipeline(dir.path(), &fx.jsonl(&order), &provider, &config);
        let reordered: Vec<(String, Vec<f64>)> = order.iter().map(|&i| pairs[i].clone()).collect();
        assert_eq!(shuffled.kept_ids, greedy_dedup(&reordered, THRESHOLD).kept, "fixture {fixture}: shuffled");
    }

    let fx = Fixture::random(&mut rng, 500);
    let run = |parallelism, tile_size| {
        let config = DedupConfig {
            parallelism,
            tile_size,
            ..DedupConfig::default()
        };
        dedup(fx.records(), &fx.provider(), &config).unwrap().1
    };
    let sequential = run(Parallelism::Sequential, 500);
    assert!(!sequential.removed.is_empty());
    for (p, tile) in [(Parallelism::Parallel, 32), (Parallelism::Threads(4), 7), (Parallelism::Parallel, 256)] {
        assert_eq!(run(p, tile), sequential, "{p:?} tile {tile}");
    }
}

// Cosine correctness

fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let scale = 10f64.powi(rng.gen_range(-30..=30));
    loop {
        let v: Vec<f64> = (0..dim)
            .map(|_| if rng.gen_range(0..10) == 0 { 0.0 } else { rng.gen_range(-1.0..1.0) * scale })
            .collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

fn cosine_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst = 0.0_f64;
    for _ in 0..10_000 {
        let dim = rng.gen_range(1..=48);
        let a = random_vector(&mut rng, dim);
        let b = if rng.gen_bool(0.1) {
            a.iter().map(|x| x * 3.0 + rng.gen_range(-1e-12..1e-12) * x.abs()).collect()
        } else {
            random_vector(&mut rng, dim)
        };
        worst = worst.max((cosine(&a, &b).unwrap() - exact_cosine(&a, &b)).abs());
    }
    assert!(worst <= 1e-9, "worst absolute error {worst:e}");
    let diagonal = cosine(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
    assert!((diagonal - std::f64::consts::FRAC_1_SQRT_2).abs() <= 1e-9, "{diagonal}");
}

// Eval harness arithmetic

async fn evaluate(questions: &[EvalQuestion], backend: &MockBackend) -> EvalReport {
    run_eval(questions, backend, &PromptComposer::default(), None, &EvalConfig::default())
        .await
        .unwrap()
}

fn assert_counts(report: &EvalReport, answers: impl Fn(&Value) -> Option<char>) {
    let raw = raw_questions(EIGHT_QUESTIONS);
    let map = raw
        .iter()
        .map(|q| (q["id"].as_str().unwrap().to_string(), answers(q)))
        .collect();
    let expected = count(&raw, &map);
    let got = serde_json::to_value(report).unwrap();
    for field in ["per_category_accuracy", "avg", "avg_hard", "n_total", "n_hard", "n_correct", "n_unparseable"] {
        assert_eq!(got[field], expected[field], "{field}");
    }
}

fn eval_arithmetic() {
    runtime().block_on(async {
        let questions = parse_questions(EIGHT_QUESTIONS).unwrap();
        let keys: std::collections::HashMap<String, char> =
            questions.iter().map(|q| (q.question.clone(), q.answer.letter())).collect();
        let oracle = MockBackend::with_default(Reply::custom(move |req| {
            let stem = req.last_user().unwrap().content.lines().next().unwrap().to_string();
            format!("The answer is ({}).", keys[&stem])
        }));
        let perfect = evaluate(&questions, &oracle).await;
        assert_eq!(perfect.avg, 1.0);
        assert_counts(&perfect, |q| q["answer"].as_str().unwrap().chars().next());

        let always_a = MockBackend::new("A");
        let quarter = evaluate(&questions, &always_a).await;
        assert_eq!(quarter.avg, 0.25);
        assert_counts(&quarter, |_| Some('A'));

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let mut shuffled = questions.clone();
            shuffled.shuffle(&mut rng);
            assert_eq!(evaluate(&shuffled, &always_a).await, quarter);
        }
    });
}

// Service end-to-end

fn service_end_to_end() {
    runtime().block_on(async {
        let dir = tempfile::tempdir().unwrap();
        let client = reqwest::Client::new();
        let reply = "Leaves capture light and turn it into sugar. What do leaves need besides light?";
        let backend = keyword_mock(reply).delayed_rule(
            Matcher::LastUserContains("poster".into()),
            Reply::EchoLastUser,
            Duration::from_millis(2),
        );
        let start = |store: Arc<dyn ConversationStore>| {
            serve(Arc::new(
                ChatService::new(Arc::new(backend.clone()), store).with_provider(Arc::new(two_helpful_one_not())),
            ))
        };
        let base = start(Arc::new(FileStore::open(dir.path()).unwrap())).await;

        // create, streamed post, get
        let created: Value = post_json(&client, &format!("{base}/conversations"), json!({"scene": "retrieval_qa"}))
            .await
            .json()
            .await
            .unwrap();
        let id = created["id"].as_str().unwrap().to_string();
        let events = post_streamed(&client, &base, &id, "How do plants make food?").await;
        let names: Vec<&str> = events.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(&names[names.len() - 2..], ["annotations", "done"], "{names:?}");
        assert!(names[..names.len() - 2].iter().all(|n| *n == "delta"));
        let streamed = deltas(&events);
        assert_eq!(events.last().unwrap().data["content"], streamed.as_str());

        let whole: Value = post_json(
            &client,
            &format!("{base}/conversations/{id}/messages"),
            json!({"text": "How do plants make food?"}),
        )
        .await
        .json()
        .await
        .unwrap();
        assert_eq!(whole["message"]["content"], streamed.as_str(), "streamed and whole replies differ");

        let fetched: Value = client.get(format!("{base}/conversations/{id}")).send().await.unwrap().json().await.unwrap();
        let messages = fetched["messages"].as_array().unwrap();
        assert_eq!(messages.len(), 4);
        assert_eq!(messages[1], events.last().unwrap().data);
        assert_eq!(fetched["snippets_by_message"][messages[1]["id"].as_str().unwrap()].as_array().unwrap().len(), 2);

        // 16 concurrent posters on one conversation, half of them streaming
        let shared: Value = post_json(&client, &format!("{base}/conversations"), json!({"scene": "general_chat"}))
            .await
            .json()
            .await
            .unwrap();
        let shared = shared["id"].as_str().unwrap().to_string();
        let mut tasks = Vec::new();
        for poster in 0..16 {
            let (client, base, shared) = (client.clone(), base.clone(), shared.clone());
            tasks.push(tokio::spawn(async move {
                for i in 0..4 {
                    let text = format!("poster {poster} message {i}");
                    if poster % 2 == 0 {
                        let events = post_streamed(&client, &base, &shared, &text).await;
                        assert_eq!(deltas(&events), text);
                    } else {
                        let resp = post_json(&client, &format!("{base}/conversations/{shared}/messages"), json!({"text": text})).await;
                        let body: Value = resp.json().await.unwrap();
                        assert_eq!(body["message"]["content"], text.as_str());
                    }
                }
            }));
        }
        for t in tasks {
            t.await.unwrap();
        }
        let conversation: Conversation = client
            .get(format!("{base}/conversations/{shared}"))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        assert_eq!(conversation.messages.len(), 128);
        for pair in conversation.messages.chunks(2) {
            assert_eq!((pair[0].role, pair[1].role), (Role::User, Role::Assistant));
            assert_eq!(pair[0].content, pair[1].content, "turns interleaved");
        }

        // restart and reload
        let snapshot = |base: String, ids: Vec<String>| {
            let client = client.clone();
            async move {
                let mut out = vec![client.get(format!("{base}/conversations")).send().await.unwrap().bytes().await.unwrap()];
                for id in ids {
                    out.push(client.get(format!("{base}/conversations/{id}")).send().await.unwrap().bytes().await.unwrap());
                }
                out
            }
        };
        let ids = vec![id, shared];
        let before = snapshot(base, ids.clone()).await;
        let reopened = start(Arc::new(FileStore::open(dir.path()).unwrap())).await;
        assert_eq!(snapshot(reopened, ids).await, before, "state changed across restart");
    });
}

// Essay schema validator

fn essay_validator() {
    let schema = EssaySchema::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut kinds = std::collections::BTreeSet::new();
    for _ in 0..100 {
        let m = mutate(&mut rng);
        let err: EssayError = parse_essay_feedback(&m.output, ESSAY, &schema)
            .err()
            .unwrap_or_else(|| panic!("accepted a broken fixture ({}): {}", m.kind, m.output));
        let kind = serde_json::to_value(&err).unwrap()["kind"].as_str().unwrap().to_string();
        assert_eq!(kind, m.kind, "{}", m.output);
        assert_eq!(err.field(), m.field.as_deref(), "{}", m.output);
        kinds.insert(m.kind);
    }
    assert_eq!(kinds.len(), 8, "{kinds:?}");
    for _ in 0..100 {
        let doc = valid_feedback(&mut rng);
        let expected: Value = serde_json::from_str(&doc.render()).unwrap();
        let feedback = parse_essay_feedback(&model_output(&mut rng, &doc), ESSAY, &schema)
            .unwrap_or_else(|e| panic!("rejected a valid fixture: {e}"));
        assert_eq!(serde_json::to_value(&feedback).unwrap(), expected);
    }
}
