mod common;

use common::MockServer;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use tokenlattice::client::{
    import_corpus, ClientError, CompletionProvider, DiskCache, FixtureProvider, GenerationRequest, OpenAiChatProvider,
    OpenAiConfig, ProviderError, Sampler,
};
use tokenlattice::embedding::{EmbeddingError, EmbeddingProvider, RemoteEmbedder, RemoteEmbedderConfig};
use tokenlattice::retry::RetryPolicy;

fn req(n: usize) -> GenerationRequest {
    GenerationRequest::new("Tell me about dragons", "test-model", 0.7, n)
}

#[test]
fn cache_keys_track_every_field() {
    let base = req(5);
    assert_eq!(base.cache_key(), req(5).cache_key());
    let variants = [
        GenerationRequest {
            prompt_text: "x".into(),
            ..base.clone()
        },
        GenerationRequest {
            model_id: "other".into(),
            ..base.clone()
        },
        GenerationRequest {
            temperature: 0.8,
            ..base.clone()
        },
        GenerationRequest { n: 6, ..base.clone() },
        GenerationRequest {
            client_seed: Some(1),
            ..base.clone()
        },
        GenerationRequest {
            provider: "elsewhere".into(),
            ..base.clone()
        },
    ];
    for v in &variants {
        assert_ne!(v.cache_key(), base.cache_key(), "{v:?}");
    }
    assert_eq!(base.cache_key().as_str().len(), 64);
}

#[test]
fn zero_n_is_rejected() {
    let s = Sampler::new(FixtureProvider::new(["a"]));
    assert!(matches!(s.sample(&req(0), "p"), Err(ClientError::InvalidRequest(_))));
    assert_eq!(s.provider_calls(), 0);
}

#[test]
fn ids_follow_request_digest_and_order() {
    let s = Sampler::new(FixtureProvider::new(["one", "two", "three"]));
    let r = req(4);
    let gens = s.sample(&r, "p").unwrap();
    let short = &r.cache_key().0[..16];
    let ids: Vec<String> = gens.iter().map(|g| g.id.clone()).collect();
    assert_eq!(ids, (0..4).map(|i| format!("{short}:{i}")).collect::<Vec<_>>());
    let texts: Vec<&str> = gens.iter().map(|g| g.text.as_str()).collect();
    assert_eq!(texts, ["one", "two", "three", "one"]);
    assert!(gens
        .iter()
        .all(|g| g.prompt_id == "p" && g.provider_meta.model_id == "test-model"));
}

#[test]
fn cached_repeat_makes_no_provider_calls() {
    let dir = tempfile::tempdir().unwrap();
    let s = Sampler::new(FixtureProvider::new(["a", "b"])).with_cache(DiskCache::new(dir.path()));
    let first = s.sample(&req(3), "p").unwrap();
    let calls = s.provider_calls();
    assert_eq!(s.sample(&req(3), "p").unwrap(), first);
    assert_eq!(s.provider_calls(), calls);

    // A fresh process reading the same directory.
    let cold = Sampler::new(FixtureProvider::new(["different"])).with_cache(DiskCache::new(dir.path()));
    assert_eq!(cold.sample(&req(3), "p").unwrap(), first);
    assert_eq!(cold.provider_calls(), 0);
    let path = DiskCache::new(dir.path()).path_for(&req(3).cache_key());
    assert!(path.exists());
}

#[test]
fn concurrent_identical_requests_share_one_call() {
    struct Slow(AtomicUsize);
    impl CompletionProvider for Slow {
        fn endpoint(&self) -> &str {
            "slow"
        }
        fn complete(&self, _: &GenerationRequest, n: usize) -> Result<Vec<String>, ProviderError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            std::thread::sleep(std::time::Duration::from_millis(50));
            Ok(vec!["x".into(); n])
        }
    }
    let s = Arc::new(Sampler::new(Slow(AtomicUsize::new(0))));
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let s = Arc::clone(&s);
            std::thread::spawn(move || s.sample(&req(2), "p").unwrap())
        })
        .collect();
    let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert!(results.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(s.provider().0.load(Ordering::SeqCst), 1);
}

struct Scripted {
    script: std::sync::Mutex<Vec<Result<Vec<String>, ProviderError>>>,
}

impl Scripted {
    fn new(mut script: Vec<Result<Vec<String>, ProviderError>>) -> Self {
        script.reverse();
        Self {
            script: std::sync::Mutex::new(script),
        }
    }
}

impl CompletionProvider for Scripted {
    fn endpoint(&self) -> &str {
        "scripted"
    }
    fn complete(&self, _: &GenerationRequest, _: usize) -> Result<Vec<String>, ProviderError> {
        self.script.lock().unwrap().pop().expect("script exhausted")
    }
}

fn status(code: u16) -> ProviderError {
    ProviderError::Status {
        status: code,
        message: "nope".into(),
    }
}

#[test]
fn short_batches_are_topped_up() {
    let s = Sampler::new(Scripted::new(vec![
        Ok(vec!["a".into()]),
        Ok(vec!["b".into(), "c".into()]),
    ]))
    .with_retry(RetryPolicy::no_wait(3));
    let texts: Vec<String> = s.sample(&req(3), "p").unwrap().into_iter().map(|g| g.text).collect();
    assert_eq!(texts, ["a", "b", "c"]);
    assert_eq!(s.provider_calls(), 2);
}

#[test]
fn partial_batches_carry_completed_items() {
    let s = Sampler::new(Scripted::new(vec![Ok(vec!["a".into(), "b".into()]), Err(status(400))]))
        .with_retry(RetryPolicy::no_wait(3));
    match s.sample(&req(4), "p") {
        Err(ClientError::PartialBatch {
            completed, expected, ..
        }) => {
            assert_eq!(expected, 4);
            assert_eq!(
                completed.iter().map(|g| g.text.as_str()).collect::<Vec<_>>(),
                ["a", "b"]
            );
        }
        other => panic!("{other:?}"),
    }
    // Nothing was committed.
    let s2 = Sampler::new(Scripted::new(vec![Ok(vec!["z".into(); 4])]));
    assert_eq!(s2.sample(&req(4), "p").unwrap().len(), 4);
}

#[test]
fn client_errors_fail_fast_and_server_errors_retry() {
    let s = Sampler::new(Scripted::new(vec![Err(status(401))])).with_retry(RetryPolicy::no_wait(3));
    assert!(matches!(
        s.sample(&req(1), "p"),
        Err(ClientError::Configuration { status: 401, .. })
    ));
    assert_eq!(s.provider_calls(), 1);

    let s = Sampler::new(Scripted::new(vec![
        Err(status(503)),
        Err(ProviderError::Transport("reset".into())),
        Err(status(502)),
    ]))
    .with_retry(RetryPolicy::no_wait(3));
    let err = s.sample(&req(1), "p").unwrap_err();
    assert!(matches!(err, ClientError::Transport { attempts: 3, .. }), "{err:?}");
    assert!(err.is_external());
    assert_eq!(s.provider_calls(), 3);

    let s =
        Sampler::new(Scripted::new(vec![Err(status(500)), Ok(vec!["ok".into()])])).with_retry(RetryPolicy::no_wait(3));
    assert_eq!(s.sample(&req(1), "p").unwrap()[0].text, "ok");
}

#[test]
fn openai_wire_contract() {
    let server = MockServer::start(vec![(
        200,
        r#"{"choices":[{"message":{"role":"assistant","content":"first"}},{"message":{"content":"second"}}]}"#.into(),
    )]);
    let provider = OpenAiChatProvider::new(OpenAiConfig {
        api_key: Some("sk-test".into()),
        ..OpenAiConfig::new(format!("{}/v1/", server.url))
    });
    let mut r = req(2);
    r.client_seed = Some(9);
    let out = provider.complete(&r, 2).unwrap();
    assert_eq!(out, ["first", "second"]);
    let seen = &server.requests()[0];
    assert_eq!(seen.request_line, "POST /v1/chat/completions HTTP/1.1");
    assert_eq!(seen.header("authorization"), Some("Bearer sk-test"));
    let body: serde_json::Value = serde_json::from_str(&seen.body).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["n"], 2);
    assert_eq!(body["temperature"], 0.7);
    assert_eq!(body["seed"], 9);
    assert_eq!(body["messages"][0]["content"], "Tell me about dragons");
}

#[test]
fn openai_errors_map_to_client_errors() {
    let server = MockServer::start(vec![(404, r#"{"error":"no such model"}"#.into())]);
    let s = Sampler::new(OpenAiChatProvider::new(OpenAiConfig::new(&server.url))).with_retry(RetryPolicy::no_wait(3));
    let err = s.sample(&s.request("p", "m", 0.5, 1), "p").unwrap_err();
    assert!(matches!(&err, ClientError::Configuration { status: 404, message } if message.contains("no such model")));

    let server = MockServer::start(vec![(500, "{}".into()), (200, "not json".into())]);
    let s = Sampler::new(OpenAiChatProvider::new(OpenAiConfig::new(&server.url))).with_retry(RetryPolicy::no_wait(3));
    assert!(matches!(
        s.sample(&s.request("p", "m", 0.5, 1), "p"),
        Err(ClientError::Transport { .. })
    ));
    assert_eq!(server.requests().len(), 2);

    // Nothing listening.
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let s = Sampler::new(OpenAiChatProvider::new(OpenAiConfig::new(format!(
        "http://127.0.0.1:{port}"
    ))))
    .with_retry(RetryPolicy::no_wait(2));
    assert!(matches!(
        s.sample(&s.request("p", "m", 0.5, 1), "p"),
        Err(ClientError::Transport { attempts: 2, .. })
    ));
}

#[test]
fn corpus_import() {
    let dir = tempfile::tempdir().unwrap();
    let plain = dir.path().join("twenty.txt");
    let lines: Vec<String> = (0..20).map(|i| format!("completion {}", i % 7)).collect();
    std::fs::write(&plain, lines.join("\n") + "\n").unwrap();
    let gens = import_corpus(&plain, "p").unwrap();
    assert_eq!(gens.len(), 20);
    assert_eq!(gens[0].text, gens[7].text);
    assert!(gens[19].id.ends_with(":20"));
    assert_eq!(
        gens.iter()
            .map(|g| &g.id)
            .collect::<std::collections::BTreeSet<_>>()
            .len(),
        20
    );

    let empty = dir.path().join("empty.txt");
    std::fs::write(&empty, "").unwrap();
    assert!(import_corpus(&empty, "p").unwrap().is_empty());

    let jsonl = dir.path().join("c.jsonl");
    std::fs::write(
        &jsonl,
        "{\"text\": \"a \\\"quoted\\\" line\"}\n\n{\"text\": \"b\", \"prompt_id\": \"q\", \"meta\": {\"temperature\": 1.2}}\n",
    )
    .unwrap();
    let gens = import_corpus(&jsonl, "p").unwrap();
    assert_eq!(gens.len(), 2);
    assert_eq!(gens[0].text, "a \"quoted\" line");
    assert_eq!(gens[1].prompt_id, "q");
    assert_eq!(gens[1].provider_meta.temperature, 1.2);
    assert!(gens[1].id.ends_with(":3"));

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"text\": \"ok\"}\n{\"txt\": 1}\n").unwrap();
    assert!(matches!(
        import_corpus(&bad, "p"),
        Err(ClientError::Parse { line: 2, .. })
    ));
    assert!(matches!(
        import_corpus(dir.path().join("missing.txt"), "p"),
        Err(ClientError::Io(_))
    ));
}

#[test]
fn remote_embedder_wire_contract() {
    let server = MockServer::start(vec![
        (503, "{}".into()),
        (200, r#"{"vectors":[[1.0,0.0],[0.0,2.0]]}"#.into()),
    ]);
    let mut cfg = RemoteEmbedderConfig::new(format!("{}/embed", server.url));
    cfg.retry = RetryPolicy::no_wait(3);
    let e = RemoteEmbedder::new(cfg);
    let out = e.embed_batch(&["a".into(), "b".into()]).unwrap();
    assert_eq!(out[1].values, [0.0, 2.0]);
    assert_eq!(e.dimension(), 2);
    let seen = server.requests();
    assert_eq!(seen.len(), 2);
    let body: serde_json::Value = serde_json::from_str(&seen[1].body).unwrap();
    assert_eq!(body["inputs"][1], "b");
    assert_eq!(body["model"], "Xenova/all-MiniLM-L6-v2");

    let server = MockServer::start(vec![(400, "{}".into())]);
    let mut cfg = RemoteEmbedderConfig::new(&server.url);
    cfg.retry = RetryPolicy::no_wait(3);
    let err = RemoteEmbedder::new(cfg).embed_batch(&["a".into()]).unwrap_err();
    assert!(
        matches!(
            err,
            EmbeddingError::Provider {
                retryable: false,
                attempts: 1,
                ..
            }
        ),
        "{err:?}"
    );
}
