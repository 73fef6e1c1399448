mod common;

use std::sync::Arc;
use std::time::Duration;

use common::*;
use educhat_core::backend::{Matcher, MockBackend, MockFailure, Reply, Role};
use educhat_core::prompt::{FunctionScene, PromptComposer, ToolOverrides};
use educhat_core::retrieval::{ProviderError, StubSearchProvider, Verdict};
use educhat_core::skills::{CounselingStage, LintWarning};
use educhat_core::Locale;
use educhat_service::{ChatError, EssayCheck, InteractionLog, Settings, TurnEvent};
use educhat_testkit::essay::{model_output, valid_feedback, ESSAY};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn overrides(web_search: Option<bool>, self_check: Option<bool>) -> Option<ToolOverrides> {
    Some(ToolOverrides {
        web_search,
        self_check,
        calculator: None,
    })
}

#[tokio::test]
async fn retrieval_turn_injects_exactly_the_helpful_snippets() {
    let backend = keyword_mock("Leaves make sugar.");
    let provider = Arc::new(two_helpful_one_not());
    let service = service(backend.clone()).with_provider(provider.clone());
    let c = service.create_conversation(FunctionScene::RetrievalQA, None).unwrap();

    let outcome = service.post_message(&c.id, "How do plants make food?").await.unwrap();
    assert_eq!(outcome.message.content, "Leaves make sugar.");
    assert_eq!(provider.calls(), vec![("How do plants make food?".to_string(), 5)]);

    let calls = backend.calls();
    assert_eq!(calls.iter().filter(|r| is_self_check(r)).count(), 3);
    let answer = calls.iter().find(|r| !is_self_check(r)).unwrap();
    let roles: Vec<Role> = answer.messages.iter().map(|m| m.role).collect();
    assert_eq!(roles, [Role::SystemContext, Role::SystemContext, Role::User]);
    assert!(answer.messages[0].content.contains("Leaves use photosynthesis"));
    assert!(answer.messages[1].content.contains("Chlorophyll"));
    assert!(answer.system_prompt.contains("Web search: Enable"));

    let stored = service.get_conversation(&c.id).unwrap();
    let snippets = &stored.snippets_by_message[&outcome.message.id];
    assert_eq!(snippets, &outcome.annotations.snippets);
    assert_eq!(snippets.len(), 2);
    for s in snippets {
        assert_eq!(s.verdict, Some(Verdict::Helpful));
        assert!(["https://example.org/0", "https://example.org/2"].contains(&s.source_url.as_str()));
    }
    assert!(outcome.annotations.annotations.retrieval);
    assert!(!outcome.annotations.annotations.degraded);
}

#[tokio::test]
async fn socratic_never_reaches_the_provider() {
    let backend = MockBackend::new("What do you already know about leaves?")
        .rule(Matcher::LastUserContains("just tell me".into()), Reply::text("Leaves make sugar."));
    let provider = Arc::new(two_helpful_one_not());
    let service = service(backend.clone()).with_provider(provider.clone());
    let c = service.create_conversation(FunctionScene::SocraticTeaching, None).unwrap();
    let first = service.post_message(&c.id, "How do plants eat?").await.unwrap();
    assert!(first.annotations.annotations.socratic_lint.is_empty());
    let second = service.post_message(&c.id, "just tell me").await.unwrap();
    assert_eq!(second.annotations.annotations.socratic_lint, vec![LintWarning::NoQuestionAsked]);
    assert_eq!(provider.call_count(), 0);
    assert!(backend.calls().iter().all(|r| !is_self_check(r)));
    assert!(backend.calls().iter().all(|r| r.system_prompt.contains("Socrates")));
}

#[tokio::test]
async fn overrides_follow_the_scene_rules() {
    let service = service(MockBackend::new("ok"));
    service
        .create_conversation(FunctionScene::EssayAssessment, overrides(Some(true), None))
        .unwrap();
    let err = service
        .create_conversation(FunctionScene::EmotionalSupport, overrides(Some(true), None))
        .unwrap_err();
    assert!(matches!(err, ChatError::IllegalOverride(_)));
    assert!(err.to_string().contains("emotional_support fixes Web search to Disable"), "{err}");
    let err = service
        .create_conversation(FunctionScene::SocraticTeaching, overrides(None, Some(true)))
        .unwrap_err();
    assert!(matches!(err, ChatError::IllegalOverride(_)));
    let err = service
        .create_conversation(FunctionScene::EssayAssessment, overrides(Some(false), Some(true)))
        .unwrap_err();
    assert!(err.to_string().contains("Self-check"), "{err}");

    let c = service.create_conversation(FunctionScene::RetrievalQA, None).unwrap();
    assert_eq!(
        service.effective_spec(&c).unwrap(),
        PromptComposer::default().scene_defaults(FunctionScene::RetrievalQA, Locale::En)
    );
    assert_eq!(c.overrides, None);
}

#[tokio::test]
async fn provider_failure_degrades_to_plain_answer() {
    let backend = keyword_mock("answer");
    let provider = Arc::new(StubSearchProvider::failing(ProviderError::Status(502)));
    let service = service(backend.clone()).with_provider(provider);
    let c = service.create_conversation(FunctionScene::RetrievalQA, None).unwrap();
    let outcome = service.post_message(&c.id, "q").await.unwrap();
    let a = &outcome.annotations.annotations;
    assert!(a.degraded);
    assert_eq!(a.provider_error, Some(ProviderError::Status(502)));
    assert!(outcome.annotations.snippets.is_empty());
    assert_eq!(backend.call_count(), 1);
    assert_eq!(backend.calls()[0].messages.len(), 1);

    // No provider configured at all counts the same way.
    let service = common::service(keyword_mock("answer"));
    let c = service.create_conversation(FunctionScene::RetrievalQA, None).unwrap();
    assert!(service.post_message(&c.id, "q").await.unwrap().annotations.annotations.degraded);
}

#[tokio::test]
async fn backend_failure_keeps_the_user_message() {
    for (failure, code) in [
        (MockFailure::Unavailable, "backend_unavailable"),
        (MockFailure::Timeout, "backend_timeout"),
        (MockFailure::Connection, "backend_unavailable"),
    ] {
        let backend = MockBackend::new("recovered").rule(Matcher::LastUserContains("first".into()), Reply::Fail(failure));
        let service = service(backend);
        let c = service.create_conversation(FunctionScene::GeneralChat, None).unwrap();
        let err = service.post_message(&c.id, "first").await.unwrap_err();
        assert!(err.is_retriable());
        assert_eq!(err.code(), code);
        let stored = service.get_conversation(&c.id).unwrap();
        assert_eq!(stored.messages.len(), 1);
        assert_eq!(stored.messages[0].content, "first");

        service.post_message(&c.id, "second").await.unwrap();
        let roles: Vec<Role> = service.get_conversation(&c.id).unwrap().messages.iter().map(|m| m.role).collect();
        assert_eq!(roles, [Role::User, Role::User, Role::Assistant]);
    }
}

#[tokio::test]
async fn essay_replies_are_validated() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let doc = valid_feedback(&mut rng);
    let good = model_output(&mut rng, &doc);
    let backend = MockBackend::new("I liked it.").rule(Matcher::LastUserContains("rubric please".into()), Reply::text(good.clone()));
    let service = service(backend.clone());
    let c = service.create_conversation(FunctionScene::EssayAssessment, None).unwrap();

    let essay = format!("{ESSAY}\nrubric please");
    let ok = service.post_message(&c.id, &essay).await.unwrap();
    assert!(matches!(ok.annotations.annotations.essay, Some(EssayCheck::Feedback(_))), "{:?}", ok.annotations);
    assert_eq!(ok.message.content, good);
    let request = &backend.calls()[0];
    let user = request.last_user().unwrap();
    assert!(user.content.contains("<essay>") && user.content.matches(&essay).count() == 1);
    // The stored user message is the raw essay.
    assert_eq!(service.get_conversation(&c.id).unwrap().messages[0].content, essay);

    let bad = service.post_message(&c.id, ESSAY).await.unwrap();
    assert_eq!(bad.message.content, "I liked it.");
    match &bad.annotations.annotations.essay {
        Some(EssayCheck::Error(e)) => assert_eq!(serde_json::to_value(e).unwrap()["kind"], "no_json"),
        other => panic!("{other:?}"),
    }

    let too_long = "x".repeat(8001);
    assert!(matches!(service.post_message(&c.id, &too_long).await, Err(ChatError::Essay(_))));
    assert_eq!(service.get_conversation(&c.id).unwrap().messages.len(), 4);
}

#[tokio::test]
async fn counseling_stage_advances() {
    let service = service(MockBackend::new("I hear you."));
    let c = service.create_conversation(FunctionScene::EmotionalSupport, None).unwrap();
    let mut stages = Vec::new();
    for i in 0..6 {
        let o = service.post_message(&c.id, &format!("I feel stressed {i}")).await.unwrap();
        stages.push(o.annotations.annotations.counseling_stage.unwrap());
    }
    use CounselingStage::*;
    assert_eq!(stages, [Exploration, Exploration, Comfort, Comfort, Suggestion, Suggestion]);
}

#[tokio::test]
async fn history_is_truncated_to_the_budget() {
    let backend = MockBackend::new("0123456789");
    let service = service(backend.clone()).with_settings(Settings {
        history_char_budget: 35,
        ..Settings::default()
    });
    let c = service.create_conversation(FunctionScene::GeneralChat, None).unwrap();
    for i in 0..4 {
        service.post_message(&c.id, &format!("question {i}")).await.unwrap();
    }
    // Each turn is 10 + 10 characters; the budget fits the current question
    // plus one earlier exchange.
    let last = backend.calls().pop().unwrap();
    let sent: Vec<&str> = last.messages.iter().map(|m| m.content.as_str()).collect();
    assert_eq!(sent, ["question 2", "0123456789", "question 3"]);
    let stored = service.get_conversation(&c.id).unwrap();
    let id = &stored.messages.last().unwrap().id;
    assert_eq!(stored.annotations_by_message[id].history_dropped, 4);
}

#[tokio::test]
async fn crud() {
    let service = service(MockBackend::new("ok"));
    assert!(matches!(service.get_conversation("nope"), Err(ChatError::NotFound(_))));
    assert!(matches!(service.post_message("nope", "hi").await, Err(ChatError::NotFound(_))));
    let ids: Vec<String> = (0..3)
        .map(|_| service.create_conversation(FunctionScene::GeneralChat, None).unwrap().id)
        .collect();
    let created = service.get_conversation(&ids[0]).unwrap();
    assert!(created.messages.is_empty());
    assert!(matches!(service.post_message(&ids[0], "  ").await, Err(ChatError::EmptyText)));
    let listed: Vec<String> = service.list_conversations().unwrap().into_iter().map(|s| s.id).collect();
    assert_eq!(listed, ids.iter().rev().cloned().collect::<Vec<_>>());
    service.delete_conversation(&ids[1]).unwrap();
    service.delete_conversation(&ids[1]).unwrap();
    assert_eq!(service.list_conversations().unwrap().len(), 2);
}

#[tokio::test]
async fn interactions_are_exported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log/interactions.jsonl");
    let service = service(keyword_mock("fine"))
        .with_provider(Arc::new(two_helpful_one_not()))
        .with_interaction_log(InteractionLog::open(&path).unwrap());
    let c = service.create_conversation(FunctionScene::RetrievalQA, None).unwrap();
    service.post_message(&c.id, "one").await.unwrap();
    service.post_message(&c.id, "two").await.unwrap();
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(&path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1]["user"], "two");
    assert_eq!(lines[1]["assistant"], "fine");
    assert_eq!(lines[0]["snippet_urls"].as_array().unwrap().len(), 2);
}

/// Each reply quotes the question it answers, after a delay long enough for
/// concurrent posts to overlap.
fn slow_echo() -> MockBackend {
    MockBackend::new("").delayed_rule(Matcher::Always, Reply::EchoLastUser, Duration::from_millis(5))
}

fn assert_paired(conversation: &educhat_service::Conversation, expected_turns: usize) {
    let m = &conversation.messages;
    assert_eq!(m.len(), 2 * expected_turns);
    for pair in m.chunks(2) {
        assert_eq!(pair[0].role, Role::User);
        assert_eq!(pair[1].role, Role::Assistant);
        assert_eq!(pair[0].content, pair[1].content);
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_posts_are_serialized_per_conversation() {
    let service = Arc::new(service(slow_echo()));
    let shared = service.create_conversation(FunctionScene::GeneralChat, None).unwrap();
    let own: Vec<String> = (0..4)
        .map(|_| service.create_conversation(FunctionScene::GeneralChat, None).unwrap().id)
        .collect();
    let mut tasks = Vec::new();
    for poster in 0..16 {
        let service = Arc::clone(&service);
        let shared = shared.id.clone();
        let own = own[poster % 4].clone();
        tasks.push(tokio::spawn(async move {
            for i in 0..3 {
                service.post_message(&shared, &format!("p{poster} m{i}")).await.unwrap();
                service.post_message(&own, &format!("p{poster} o{i}")).await.unwrap();
            }
        }));
    }
    for t in tasks {
        t.await.unwrap();
    }
    assert_paired(&service.get_conversation(&shared.id).unwrap(), 48);
    for id in &own {
        assert_paired(&service.get_conversation(id).unwrap(), 12);
    }
}

#[tokio::test]
async fn streaming_matches_non_streaming() {
    let reply = "Plants turn light, water and air into sugar. Ask me why!";
    let service = Arc::new(service(MockBackend::new(reply)));
    let c = service.create_conversation(FunctionScene::GeneralChat, None).unwrap();
    let whole = service.post_message(&c.id, "hi").await.unwrap();
    let mut rx = service.post_message_stream(&c.id, "hi").unwrap();
    let mut events = Vec::new();
    while let Some(e) = rx.recv().await {
        events.push(e);
    }
    let text: String = events
        .iter()
        .filter_map(|e| match e {
            TurnEvent::Delta(d) => Some(d.as_str()),
            _ => None,
        })
        .collect();
    assert_eq!(text, whole.message.content);
    assert!(events.iter().filter(|e| matches!(e, TurnEvent::Delta(_))).count() > 1);
    assert!(matches!(events[events.len() - 2], TurnEvent::Annotations(_)));
    match events.last().unwrap() {
        TurnEvent::Done(m) => assert_eq!(m.content, reply),
        other => panic!("{other:?}"),
    }
}
