mod common;

use std::time::Duration;

use common::{Reply, StubServer};
use kdgen::generation::{
    generate_many, Backend, CompletionRequest, Generator, GeneratorClientConfig, HttpGenerator, PartKind, PromptText,
};
use kdgen::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn client(server: &StubServer, key: Option<&str>) -> HttpGenerator {
    let config = GeneratorClientConfig {
        backend: Backend::Http,
        endpoint_url: server.url.clone(),
        max_retries: 2,
        backoff_base_ms: 5,
        timeout_ms: 5_000,
        ..GeneratorClientConfig::default()
    };
    HttpGenerator::new(config, key.map(str::to_owned)).unwrap()
}

fn prompt() -> PromptText {
    PromptText::new(vec![(PartKind::TaskDef, "describe a sample\n".into())]).unwrap()
}

fn complete(g: &HttpGenerator) -> kdgen::Result<kdgen::generation::RawCompletion> {
    let p = prompt();
    g.complete(&CompletionRequest { prompt_id: 0, prompt: &p, seed: 9 })
}

#[test]
fn client_error_is_not_retried() {
    let server = StubServer::start(|_, _| Reply::status(400));
    let err = complete(&client(&server, None)).unwrap_err();
    assert!(matches!(err, Error::Transport { attempts: 1, .. }), "{err:?}");
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn server_errors_exhaust_retries() {
    let server = StubServer::start(|_, _| Reply::status(503));
    let err = complete(&client(&server, None)).unwrap_err();
    assert!(matches!(err, Error::Transport { attempts: 3, .. }), "{err:?}");
    let log = server.requests();
    assert_eq!(log.len(), 3);
    // 5 ms then 10 ms
    assert!(log[1].at.duration_since(log[0].at) >= Duration::from_millis(5));
    assert!(log[2].at.duration_since(log[1].at) >= Duration::from_millis(10));
}

#[test]
fn rate_limit_then_success() {
    let server = StubServer::start(|_, seen| if seen < 2 { Reply::status(429) } else { Reply::ok_content("ok") });
    let out = complete(&client(&server, None)).unwrap();
    assert_eq!(out.text, "ok");
    assert_eq!(out.finish_reason, "stop");
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn malformed_body_is_fatal() {
    let server = StubServer::start(|_, _| Reply { status: 200, body: "not json".into(), delay: Duration::ZERO });
    assert!(matches!(complete(&client(&server, None)), Err(Error::MalformedResponse(_))));

    let server =
        StubServer::start(|_, _| Reply { status: 200, body: r#"{"choices":[]}"#.into(), delay: Duration::ZERO });
    assert!(matches!(complete(&client(&server, None)), Err(Error::MalformedResponse(_))));
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn authorization_header_only_with_key() {
    let server = StubServer::start(|_, _| Reply::ok_content("x"));
    complete(&client(&server, Some("k-123"))).unwrap();
    complete(&client(&server, None)).unwrap();
    let log = server.requests();
    assert_eq!(log[0].authorization.as_deref(), Some("Bearer k-123"));
    assert_eq!(log[1].authorization, None);
}

#[test]
fn seed_can_be_omitted() {
    let server = StubServer::start(|_, _| Reply::ok_content("x"));
    complete(&client(&server, None).without_seed()).unwrap();
    complete(&client(&server, None)).unwrap();
    let log = server.requests();
    assert!(log[0].body.get("seed").is_none());
    assert_eq!(log[1].body["seed"], 9);
}

#[test]
fn timeout_is_retried() {
    let server = StubServer::start(|_, seen| {
        if seen == 0 {
            Reply::ok_content("slow").after(Duration::from_millis(600))
        } else {
            Reply::ok_content("fast")
        }
    });
    let config = GeneratorClientConfig {
        backend: Backend::Http,
        endpoint_url: server.url.clone(),
        timeout_ms: 200,
        backoff_base_ms: 1,
        ..GeneratorClientConfig::default()
    };
    let out = complete(&HttpGenerator::new(config, None).unwrap()).unwrap();
    assert_eq!(out.text, "fast");
}

#[test]
fn one_fatal_request_fails_the_batch() {
    let server = StubServer::start(|body, _| {
        if body["messages"][0]["content"] == "p3\n" {
            Reply::status(401)
        } else {
            Reply::ok_content("fine")
        }
    });
    let prompts: Vec<PromptText> =
        (0..6).map(|i| PromptText::new(vec![(PartKind::TaskDef, format!("p{i}\n"))]).unwrap()).collect();
    let refs: Vec<&PromptText> = prompts.iter().collect();
    let res = generate_many(&client(&server, None), &refs, &mut ChaCha8Rng::seed_from_u64(0));
    assert!(matches!(res, Err(Error::Transport { .. })));
}
