mod common;

use std::sync::Arc;

use common::{start, Embed, Generate, MockConfig};
use sensegloss::inference::{EndpointConfig, GenerationConfig, InferenceClient, InferenceError, ResponseCache};

fn client(url: &str, tweak: impl FnOnce(&mut EndpointConfig)) -> InferenceClient {
    let mut ep = EndpointConfig::new(url, "mock-model");
    ep.retry_backoff_ms = 5;
    tweak(&mut ep);
    InferenceClient::new(ep, Arc::new(ResponseCache::in_memory())).unwrap()
}

fn prompts(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| format!("usage number {i}. Mitä tarkoittaa sana{i}?"))
        .collect()
}

#[tokio::test]
async fn echo_contract() {
    let mock = start(MockConfig::default());
    let c = client(&mock.url, |_| {});
    let ps = prompts(7);
    let out = c.generate_definitions(&ps, &GenerationConfig::default()).await.unwrap();
    for (p, o) in ps.iter().zip(out) {
        assert_eq!(o.unwrap(), format!("DEF:{p}"));
    }
    let (route, body) = mock.stats.bodies.lock().unwrap()[0].clone();
    assert_eq!(route, "completions");
    assert_eq!(body["model"], "mock-model");
    assert_eq!(body["generation"]["num_beams"], 5);
    assert_eq!(body["generation"]["length_penalty"], 1.1);
}

#[tokio::test]
async fn warm_cache_makes_no_requests() {
    let mock = start(MockConfig::default());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    let ps = prompts(5);
    let gen = GenerationConfig::default();

    let c = InferenceClient::new(
        EndpointConfig::new(&mock.url, "m"),
        Arc::new(ResponseCache::open(&path).unwrap()),
    )
    .unwrap();
    let first = c.generate_definitions(&ps, &gen).await.unwrap();
    assert_eq!(mock.stats.requests(), 5);
    let again = c.generate_definitions(&ps, &gen).await.unwrap();
    assert_eq!(mock.stats.requests(), 5);
    assert_eq!(first, again);
    assert_eq!(c.stats().cache_hits, 5);

    let reopened = InferenceClient::new(
        EndpointConfig::new(&mock.url, "m"),
        Arc::new(ResponseCache::open(&path).unwrap()),
    )
    .unwrap();
    let replay = reopened.generate_definitions(&ps, &gen).await.unwrap();
    assert_eq!(mock.stats.requests(), 5);
    assert_eq!(replay, first);
}

#[tokio::test]
async fn transient_failures_are_retried() {
    let mock = start(MockConfig {
        fail_first: 2,
        ..Default::default()
    });
    let c = client(&mock.url, |ep| {
        ep.max_retries = 3;
        ep.max_in_flight = 1;
    });
    let out = c
        .generate_definitions(&prompts(1), &GenerationConfig::default())
        .await
        .unwrap();
    assert!(out[0].is_ok());
    assert_eq!(c.stats().retries, 2);
    assert_eq!(mock.stats.requests(), 3);
}

#[tokio::test]
async fn exhausted_retries_mark_the_item() {
    let mock = start(MockConfig {
        generate: Generate::Script(vec![("broken".into(), None)]),
        ..Default::default()
    });
    let c = client(&mock.url, |ep| ep.max_retries = 1);
    let ps = vec!["fine one".to_owned(), "broken one".to_owned(), "fine two".to_owned()];
    let out = c.generate_definitions(&ps, &GenerationConfig::default()).await.unwrap();
    assert_eq!(out[0].as_deref(), Ok("DEF:fine one"));
    assert!(
        matches!(
            out[1],
            Err(InferenceError::HttpStatus {
                status: 500,
                attempts: 2,
                ..
            })
        ),
        "{:?}",
        out[1]
    );
    assert_eq!(out[2].as_deref(), Ok("DEF:fine two"));
}

#[tokio::test]
async fn unreachable_endpoint() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let c = client(&format!("http://127.0.0.1:{port}"), |ep| ep.max_retries = 1);
    let out = c
        .generate_definitions(&prompts(2), &GenerationConfig::default())
        .await
        .unwrap();
    for r in out {
        assert!(
            matches!(r, Err(InferenceError::EndpointUnreachable { attempts: 2, .. })),
            "{r:?}"
        );
    }
}

#[tokio::test]
async fn order_survives_out_of_order_replies() {
    let n = 16u64;
    let mock = start(MockConfig {
        delay: Some(Arc::new(move |body: &serde_json::Value| {
            let p = body["prompt"].as_str().unwrap_or_default();
            let i: u64 = p.split("sana").nth(1).unwrap().trim_end_matches('?').parse().unwrap();
            (n - i) * 4
        })),
        ..Default::default()
    });
    let c = client(&mock.url, |ep| ep.max_in_flight = n as usize);
    let ps = prompts(n as usize);
    let out = c.generate_definitions(&ps, &GenerationConfig::default()).await.unwrap();
    let got: Vec<String> = out.into_iter().map(Result::unwrap).collect();
    let want: Vec<String> = ps.iter().map(|p| format!("DEF:{p}")).collect();
    assert_eq!(got, want);
}

#[tokio::test]
async fn concurrency_is_capped() {
    let mock = start(MockConfig {
        delay: Some(Arc::new(|_: &serde_json::Value| 25)),
        ..Default::default()
    });
    let c = client(&mock.url, |ep| ep.max_in_flight = 3);
    c.generate_definitions(&prompts(12), &GenerationConfig::default())
        .await
        .unwrap();
    assert!(mock.stats.peak() <= 3, "peak {}", mock.stats.peak());
    assert_eq!(mock.stats.peak(), 3);
}

#[tokio::test]
async fn native_rejection_falls_back() {
    let mock = start(MockConfig {
        reject_native: true,
        ..Default::default()
    });
    let c = client(&mock.url, |ep| ep.max_in_flight = 1);
    let out = c
        .generate_definitions(&prompts(2), &GenerationConfig::default())
        .await
        .unwrap();
    assert!(out.iter().all(Result::is_ok));
    let bodies = mock.stats.bodies.lock().unwrap();
    let fallback = &bodies.last().unwrap().1;
    assert_eq!(fallback["best_of"], 5);
    assert_eq!(fallback["temperature"], 0.0);
}

#[tokio::test]
async fn embeddings_keep_order_and_share_cache() {
    let mock = start(MockConfig {
        embed: Embed::BasisByIndex,
        ..Default::default()
    });
    let c = client(&mock.url, |ep| ep.embed_batch_size = 64);
    let texts: Vec<String> = (0..5).map(|i| format!("t{i}")).collect();
    let vs = c.embed_texts(&texts).await.unwrap();
    for (i, v) in vs.iter().enumerate() {
        assert_eq!(v.values()[i], 1.0);
        assert_eq!(v.values().iter().sum::<f64>(), 1.0);
    }
    let dup = vec!["t3".to_owned(), "t1".to_owned(), "t3".to_owned()];
    let again = c.embed_texts(&dup).await.unwrap();
    assert_eq!(again[0], again[2]);
    assert_eq!(again[0], vs[3]);
    assert_eq!(mock.stats.requests(), 1);
}

#[tokio::test]
async fn inconsistent_dimensions_are_rejected() {
    let mock = start(MockConfig {
        embed: Embed::Dimensions(vec![3, 4]),
        ..Default::default()
    });
    let c = client(&mock.url, |ep| {
        ep.embed_batch_size = 1;
        ep.max_in_flight = 1;
    });
    let err = c.embed_texts(&["a".to_owned(), "b".to_owned()]).await.unwrap_err();
    assert!(matches!(err, InferenceError::DimensionMismatch { .. }), "{err:?}");
}

#[tokio::test]
async fn token_embeddings() {
    let mock = start(MockConfig::default());
    let c = client(&mock.url, |_| {});
    let t = c.embed_tokens("pieni jyrsijä eläin").await.unwrap();
    assert_eq!(t.tokens, vec!["pieni", "jyrsijä", "eläin"]);
    assert_eq!(t.vectors.len(), 3);
    let one = c.embed_tokens("hiiri").await.unwrap();
    assert_eq!((one.tokens.len(), one.vectors.len()), (1, 1));
    assert_eq!(c.embed_tokens("").await.unwrap_err(), InferenceError::EmptyInput);
    assert_eq!(
        c.generate_definitions(&[], &GenerationConfig::default())
            .await
            .unwrap_err(),
        InferenceError::EmptyInput
    );
}
