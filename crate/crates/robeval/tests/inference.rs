mod common;

use std::collections::BTreeSet;
use std::thread;
use std::time::Duration;

use common::{completion_body, dead_endpoint, fixture, MockServer};
use robeval::cache::Cache;
use robeval::inference::{generate, paraphrase_provider, run_inference, ApiStyle, Client, ModelConfig, RetryPolicy};
use robeval::io::load_dataset;
use robeval::Error;
use robeval_core::model::Dataset;
use robeval_core::prompt::PromptTemplates;

fn config(url: &str) -> ModelConfig {
    let mut c = ModelConfig::new(url, "mock-model");
    c.retry_policy = RetryPolicy { max_retries: 2, backoff_ms: 1 };
    c.timeout_secs = 5;
    c
}

fn one_group() -> Dataset {
    let d = load_dataset(&fixture("three_groups.jsonl")).unwrap();
    Dataset::new("one", vec![d.groups()[0].clone()]).unwrap()
}

#[test]
fn echo_endpoint() {
    let server = MockServer::constant("yes");
    let g = generate("Question: q\nAnswer:", &config(&server.url)).unwrap();
    assert_eq!((g.completion.as_str(), g.retries), ("yes", 0));
    let req = &server.requests()[0];
    assert_eq!(req.body["temperature"].as_f64(), Some(0.0));
    assert_eq!(req.body["model"], "mock-model");
    assert_eq!(req.body["prompt"], "Question: q\nAnswer:");
}

#[test]
fn chat_style() {
    let server =
        MockServer::start(|_, _| (200, r#"{"choices":[{"message":{"role":"assistant","content":"no"}}]}"#.into()));
    let mut c = config(&server.url);
    c.api_style = ApiStyle::Chat;
    assert_eq!(generate("p", &c).unwrap().completion, "no");
    let messages = server.requests()[0].body["messages"].clone();
    assert_eq!(messages.as_array().unwrap().len(), 1);
    assert_eq!(messages[0]["role"], "user");
}

#[test]
fn transient_503_then_200() {
    let server = MockServer::start(|_, i| if i == 0 { (503, "{}".into()) } else { (200, completion_body("ok")) });
    let g = generate("p", &config(&server.url)).unwrap();
    assert_eq!((g.completion.as_str(), g.retries), ("ok", 1));
    assert_eq!(server.hits(), 2);
}

#[test]
fn unreachable_endpoint() {
    match generate("p", &config(&dead_endpoint())) {
        Err(Error::Http { attempts, status, message }) => {
            assert_eq!((attempts, status), (3, None));
            assert!(!message.is_empty());
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn persistent_5xx_surfaces_final_status() {
    let server = MockServer::start(|_, _| (500, "boom".into()));
    match generate("p", &config(&server.url)) {
        Err(Error::Http { attempts, status, .. }) => assert_eq!((attempts, status), (3, Some(500))),
        other => panic!("{other:?}"),
    }
    assert_eq!(server.hits(), 3);
}

#[test]
fn client_error_is_not_retried() {
    let server = MockServer::start(|_, _| (400, "bad".into()));
    assert!(matches!(generate("p", &config(&server.url)), Err(Error::Http { status: Some(400), .. })));
    assert_eq!(server.hits(), 1);
}

#[test]
fn malformed_body() {
    let server = MockServer::start(|_, _| (200, "not json".into()));
    assert!(matches!(generate("p", &config(&server.url)), Err(Error::Response(_))));
    let server = MockServer::start(|_, _| (200, "{\"choices\": []}".into()));
    assert!(matches!(generate("p", &config(&server.url)), Err(Error::Response(_))));
}

#[test]
fn bearer_token_from_env() {
    let server = MockServer::constant("yes");
    std::env::set_var("ROBEVAL_IT_TOKEN", "s3cret");
    let mut c = config(&server.url);
    c.auth_token_env = Some("ROBEVAL_IT_TOKEN".into());
    generate("p", &c).unwrap();
    assert_eq!(server.requests()[0].headers["authorization"], "Bearer s3cret");
}

#[test]
fn request_count_and_cache_hits() {
    let server = MockServer::deterministic();
    let dir = tempfile::tempdir().unwrap();
    let d = one_group();
    let client = Client::new(config(&server.url)).unwrap();
    let templates = PromptTemplates::default();

    let mut cache = Cache::open(&dir.path().join("cache.jsonl")).unwrap();
    let first = run_inference(&d, &client, &templates, &mut cache).unwrap();
    assert_eq!(first.requests, 1 + d.groups()[0].m());
    assert_eq!(server.hits(), 1 + d.groups()[0].m());
    assert!(first.is_complete());

    let mut cache = Cache::open(&dir.path().join("cache.jsonl")).unwrap();
    let second = run_inference(&d, &client, &templates, &mut cache).unwrap();
    assert_eq!((second.requests, second.cache_hits), (0, d.instance_count()));
    assert_eq!(server.hits(), 1 + d.groups()[0].m());
    assert_eq!(second.predictions, first.predictions);
}

#[test]
fn identical_prompts_requested_once() {
    let server = MockServer::constant("yes");
    let dir = tempfile::tempdir().unwrap();
    let d = load_dataset(&fixture("three_groups.jsonl")).unwrap();
    let mut c = config(&server.url);
    c.model_name = "m".into();
    let client = Client::new(c).unwrap();
    let mut cache = Cache::open(&dir.path().join("c.jsonl")).unwrap();
    // Same prompt under two model names must not share entries.
    cache.insert(&robeval::cache::cache_key("other", "x"), "x", "y").unwrap();
    let out = run_inference(&d, &client, &PromptTemplates::default(), &mut cache).unwrap();
    assert_eq!(out.predictions.len(), d.instance_count());
    assert_eq!(server.hits(), out.requests);
}

#[test]
fn output_in_dataset_order_despite_arrival_order() {
    let server = MockServer::start(|req, _| {
        let p = req.prompt();
        thread::sleep(Duration::from_millis((p.len() % 7) as u64 * 5));
        (200, completion_body(&p.len().to_string()))
    });
    let dir = tempfile::tempdir().unwrap();
    let d = load_dataset(&fixture("ten_groups.jsonl")).unwrap();
    let mut c = config(&server.url);
    c.max_parallel_requests = 8;
    let client = Client::new(c).unwrap();
    let mut cache = Cache::open(&dir.path().join("c.jsonl")).unwrap();
    let out = run_inference(&d, &client, &PromptTemplates::default(), &mut cache).unwrap();
    let got: Vec<(String, String)> =
        out.predictions.iter().map(|p| (p.group_id.clone(), p.variant_id.clone())).collect();
    let want: Vec<(String, String)> = d.instances().map(|i| (i.group_id.clone(), i.variant_id.clone())).collect();
    assert_eq!(got, want);
}

#[test]
fn fault_injection_reports_exactly_the_failing_variant() {
    let d = load_dataset(&fixture("three_groups.jsonl")).unwrap();
    let poisoned = d.group("bq3").unwrap().variant("s2").unwrap().input.clone();
    let server = MockServer::start(move |req, _| {
        if req.prompt().contains(&poisoned) {
            (500, "injected".into())
        } else {
            (200, completion_body("yes"))
        }
    });
    let dir = tempfile::tempdir().unwrap();
    let client = Client::new(config(&server.url)).unwrap();
    let mut cache = Cache::open(&dir.path().join("c.jsonl")).unwrap();
    let out = run_inference(&d, &client, &PromptTemplates::default(), &mut cache).unwrap();
    assert_eq!(out.predictions.len(), d.instance_count() - 1);
    assert_eq!(out.failures.len(), 1);
    assert_eq!((out.failures[0].group_id.as_str(), out.failures[0].variant_id.as_str()), ("bq3", "s2"));
    assert!(out.failures[0].error.contains("500"));
    assert_eq!(out.incomplete_groups(), ["bq3"]);
    // The cache holds only successes, so a rerun retries just the failed prompt.
    assert_eq!(cache.len(), d.instance_count() - 1);
}

#[test]
fn provider_passthrough_dedup_and_truncation() {
    let five = "one way\ntwo way\nthree way\nfour way\nfive way";
    let server = MockServer::constant(five);
    let client = Client::new(config(&server.url)).unwrap();
    assert_eq!(paraphrase_provider(&client, "the input", 5).unwrap().len(), 5);
    assert_eq!(paraphrase_provider(&client, "the input", 1).unwrap(), ["one way"]);

    let server = MockServer::constant("The Input\nanother way\nanother  way");
    let client = Client::new(config(&server.url)).unwrap();
    assert_eq!(paraphrase_provider(&client, "the input", 5).unwrap(), ["another way"]);

    let client = Client::new(config(&dead_endpoint())).unwrap();
    assert!(paraphrase_provider(&client, "x", 2).is_err());
}

#[test]
fn provider_prompts_are_distinct_per_text() {
    let server = MockServer::constant("a\nb");
    let client = Client::new(config(&server.url)).unwrap();
    paraphrase_provider(&client, "first", 2).unwrap();
    paraphrase_provider(&client, "second", 2).unwrap();
    let prompts: BTreeSet<String> = server.requests().iter().map(|r| r.prompt()).collect();
    assert_eq!(prompts.len(), 2);
}
