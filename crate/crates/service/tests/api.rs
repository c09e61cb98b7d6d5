use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::http::{Request, StatusCode};
use futures::StreamExt;
use http_body_util::BodyExt;
use minesentinel_core::control::wire::encode_packet;
use minesentinel_core::harness::{RunOptions, Scenario, Simulation};
use minesentinel_core::helmet::{Reading, TelemetryPacket};
use minesentinel_core::types::Channel;
use minesentinel_core::HelmetId;
use minesentinel_service::{router, serve_tcp, AppState, TcpAck};
use serde_json::{json, Value};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tower::ServiceExt;

const OP: &str = "Bearer op-token";

fn state() -> AppState {
    let scenario = Scenario::from_json_str(
        &json!({
            "zones": [{ "zone_id": "z1", "position": [0.0, 0.0] }],
            "helmets": [
                { "helmet_id": "h1", "zone_id": "z1", "position": [5.0, 0.0] },
                { "helmet_id": "x1", "zone_id": "z1", "position": [5.0, 1.0],
                  "external": true, "token": "x1-token" }
            ],
            "config": {
                "horizon_ms": 60000,
                "operators": [{ "operator_id": "op", "token": "op-token" }]
            }
        })
        .to_string(),
    )
    .unwrap();
    AppState::new(Simulation::new(&scenario, 7, RunOptions::default()).unwrap())
}

fn packet(seq: u64, t_ms: u64, fall: bool) -> TelemetryPacket {
    TelemetryPacket {
        helmet_id: HelmetId::from("x1"),
        seq,
        t_ms,
        readings: vec![
            Reading::new(Channel::Co, 2.0),
            Reading::new(Channel::Temperature, 24.0),
        ],
        battery_pct: 90.0,
        worn: true,
        local_alarms: vec![],
        fall,
    }
}

fn req(method: &str, uri: &str, auth: Option<&str>, body: impl Into<Body>) -> Request<Body> {
    let mut b = Request::builder().method(method).uri(uri);
    if let Some(a) = auth {
        b = b.header("authorization", a);
    }
    b.body(body.into()).unwrap()
}

async fn call(st: &AppState, r: Request<Body>) -> (StatusCode, Value) {
    let resp = router(st.clone()).oneshot(r).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, v)
}

#[tokio::test]
async fn every_endpoint_requires_a_bearer_token() {
    let st = state();
    for (m, uri) in [
        ("GET", "/api/helmets"),
        ("GET", "/api/alerts"),
        ("POST", "/api/alerts/1/ack"),
        ("GET", "/api/history"),
        ("GET", "/api/stream"),
        ("POST", "/api/ingest"),
    ] {
        let (s, _) = call(&st, req(m, uri, None, Body::empty())).await;
        assert_eq!(s, StatusCode::UNAUTHORIZED, "{m} {uri} without token");
        let (s, body) = call(&st, req(m, uri, Some("Bearer nope"), Body::empty())).await;
        if uri != "/api/ingest" {
            assert_eq!(s, StatusCode::UNAUTHORIZED, "{m} {uri} with bad token");
            assert!(body["error"].is_string());
        }
    }
    // a helmet token cannot read operator endpoints
    let (s, _) = call(
        &st,
        req(
            "GET",
            "/api/helmets",
            Some("Bearer x1-token"),
            Body::empty(),
        ),
    )
    .await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn ingest_checks_token_and_schema() {
    let st = state();
    let body = encode_packet(&packet(1, 0, false));
    let (s, v) = call(
        &st,
        req("POST", "/api/ingest", Some("Bearer x1-token"), body.clone()),
    )
    .await;
    assert_eq!(s, StatusCode::ACCEPTED);
    assert_eq!(v, json!({ "accepted": true, "arrival_ms": 0 }));

    let (s, _) = call(
        &st,
        req("POST", "/api/ingest", Some("Bearer op-token"), body.clone()),
    )
    .await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = call(&st, req("POST", "/api/ingest", Some("Bearer h1"), body)).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED, "h1's token does not cover x1");

    let mut bad: Value = serde_json::from_str(&encode_packet(&packet(2, 0, false))).unwrap();
    bad.as_object_mut().unwrap().remove("worn");
    let (s, v) = call(
        &st,
        req(
            "POST",
            "/api/ingest",
            Some("Bearer x1-token"),
            bad.to_string(),
        ),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("worn"), "{v}");
}

#[tokio::test]
async fn external_fall_raises_an_alert_that_can_be_acked_once() {
    let st = state();
    let body = encode_packet(&packet(1, 0, true));
    call(
        &st,
        req("POST", "/api/ingest", Some("Bearer x1-token"), body),
    )
    .await;
    for _ in 0..3 {
        st.tick();
    }

    let (s, helmets) = call(&st, req("GET", "/api/helmets", Some(OP), Body::empty())).await;
    assert_eq!(s, StatusCode::OK);
    let ids: Vec<&str> = helmets
        .as_array()
        .unwrap()
        .iter()
        .map(|h| h["helmet_id"].as_str().unwrap())
        .collect();
    assert!(ids.contains(&"h1") && ids.contains(&"x1"), "{ids:?}");

    let (_, alerts) = call(
        &st,
        req("GET", "/api/alerts?state=notified", Some(OP), Body::empty()),
    )
    .await;
    let fall = alerts
        .as_array()
        .unwrap()
        .iter()
        .find(|a| a["helmet_id"] == "x1" && a["kind"] == "fall")
        .unwrap_or_else(|| panic!("no fall alert in {alerts}"))
        .clone();
    let id = fall["alert_id"].as_u64().unwrap();

    let uri = format!("/api/alerts/{id}/ack");
    let (s, acked) = call(&st, req("POST", &uri, Some(OP), Body::empty())).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(acked["state"], "acknowledged");
    let (s, _) = call(&st, req("POST", &uri, Some(OP), Body::empty())).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = call(
        &st,
        req("POST", "/api/alerts/9999/ack", Some(OP), Body::empty()),
    )
    .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, v) = call(
        &st,
        req("POST", "/api/alerts/abc/ack", Some(OP), Body::empty()),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v["error"].is_string());

    let (_, open) = call(
        &st,
        req(
            "GET",
            "/api/alerts?state=acknowledged",
            Some(OP),
            Body::empty(),
        ),
    )
    .await;
    assert!(open.as_array().unwrap().iter().any(|a| a["alert_id"] == id));
    let (s, _) = call(
        &st,
        req("GET", "/api/alerts?state=bogus", Some(OP), Body::empty()),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn history_filters_and_rejects_bad_ranges() {
    let st = state();
    for _ in 0..50 {
        st.tick();
    }
    let (s, all) = call(
        &st,
        req("GET", "/api/history?helmet=h1", Some(OP), Body::empty()),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let all = all.as_array().unwrap().clone();
    assert!(!all.is_empty());
    assert!(all
        .iter()
        .all(|r| r.to_string().contains("\"helmet_id\":\"h1\"")));
    assert!(!all
        .iter()
        .any(|r| r.to_string().contains("\"helmet_id\":\"x1\"")));

    let (_, page) = call(
        &st,
        req(
            "GET",
            "/api/history?helmet=h1&offset=0&limit=2&from_ms=1000&to_ms=4000",
            Some(OP),
            Body::empty(),
        ),
    )
    .await;
    let page = page.as_array().unwrap();
    assert!(page.len() <= 2);
    assert!(
        page.iter()
            .all(|r| (1000..=4000).contains(&r["t"].as_u64().unwrap())),
        "{page:?}"
    );

    let (s, _) = call(
        &st,
        req(
            "GET",
            "/api/history?from_ms=5000&to_ms=10",
            Some(OP),
            Body::empty(),
        ),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(
        &st,
        req("GET", "/api/history?kind=nonsense", Some(OP), Body::empty()),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(
        &st,
        req("GET", "/api/history?limit=-1", Some(OP), Body::empty()),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

async fn read_lines(body: Body, n: usize) -> Vec<Value> {
    let mut stream = body.into_data_stream();
    let mut buf = String::new();
    let mut out = Vec::new();
    while out.len() < n {
        let chunk: Bytes = tokio::time::timeout(Duration::from_secs(5), stream.next())
            .await
            .expect("stream stalled")
            .expect("stream ended")
            .unwrap();
        buf.push_str(std::str::from_utf8(&chunk).unwrap());
        while let Some(i) = buf.find('\n') {
            let line: String = buf.drain(..=i).collect();
            out.push(serde_json::from_str(line.trim()).unwrap());
        }
    }
    out.truncate(n);
    out
}

#[tokio::test]
async fn stream_replays_then_follows_and_resumes_from_offset() {
    let st = state();
    for _ in 0..100 {
        st.tick();
    }
    let expected: Vec<Value> = st.with_sim(|s| {
        s.control()
            .log()
            .replay_from(0)
            .map(|r| serde_json::from_str(&r.to_json_line()).unwrap())
            .collect()
    });
    assert!(expected.len() > 4);

    let resp = router(st.clone())
        .oneshot(req("GET", "/api/stream", Some(OP), Body::empty()))
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "application/x-ndjson");
    let body = resp.into_body();

    // live tail: tick more while the stream is open
    let ticker = st.clone();
    let bg = tokio::spawn(async move {
        for _ in 0..100 {
            tokio::time::sleep(Duration::from_millis(2)).await;
            ticker.tick();
        }
    });
    let got = read_lines(body, expected.len() + 3).await;
    bg.await.unwrap();
    assert_eq!(&got[..expected.len()], &expected[..]);
    let offsets: Vec<u64> = got.iter().map(|r| r["offset"].as_u64().unwrap()).collect();
    assert!(
        offsets.windows(2).all(|w| w[0] < w[1]),
        "offsets must increase: {offsets:?}"
    );
    for r in &got {
        assert!(
            ["packet", "notification"].contains(&r["kind"].as_str().unwrap()),
            "{r}"
        );
    }

    // reconnect from the fourth line's offset
    let resume = offsets[3];
    let resp = router(st.clone())
        .oneshot(req(
            "GET",
            &format!("/api/stream?from_offset={resume}"),
            Some(OP),
            Body::empty(),
        ))
        .await
        .unwrap();
    let again = read_lines(resp.into_body(), 3).await;
    assert_eq!(&again[..], &got[3..6]);
}

async fn frame(s: &mut tokio::net::TcpStream, payload: &[u8]) {
    s.write_u32(payload.len() as u32).await.unwrap();
    s.write_all(payload).await.unwrap();
}

async fn ack(s: &mut tokio::net::TcpStream) -> TcpAck {
    let n = s.read_u32().await.unwrap() as usize;
    let mut buf = vec![0; n];
    s.read_exact(&mut buf).await.unwrap();
    serde_json::from_slice(&buf).unwrap()
}

#[tokio::test]
async fn tcp_ingest_authenticates_and_acks_each_frame() {
    let st = state();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve_tcp(listener, st.clone()));

    let mut c = tokio::net::TcpStream::connect(addr).await.unwrap();
    frame(&mut c, b"x1-token").await;
    frame(&mut c, encode_packet(&packet(1, 0, false)).as_bytes()).await;
    assert_eq!(
        ack(&mut c).await,
        TcpAck {
            ok: true,
            arrival_ms: Some(0),
            error: None
        }
    );
    frame(&mut c, b"{not json").await;
    let a = ack(&mut c).await;
    assert!(!a.ok && a.error.unwrap().contains("JSON"));

    st.tick();
    frame(&mut c, encode_packet(&packet(2, 100, false)).as_bytes()).await;
    assert_eq!(ack(&mut c).await.arrival_ms, Some(100));
    st.tick();
    let last_seq = st.with_sim(|s| {
        s.control()
            .timeline(&HelmetId::from("x1"))
            .and_then(|t| t.state.last_seq)
    });
    assert_eq!(last_seq, Some(2));

    let mut bad = tokio::net::TcpStream::connect(addr).await.unwrap();
    frame(&mut bad, b"wrong").await;
    frame(&mut bad, encode_packet(&packet(3, 200, false)).as_bytes()).await;
    let a = ack(&mut bad).await;
    assert!(!a.ok);
    assert!(a.error.unwrap().to_lowercase().contains("token"));
}

#[tokio::test]
async fn clock_ticks_to_the_horizon_then_stops() {
    let st = state();
    st.with_sim(|s| s.set_horizon(2000));
    let last = minesentinel_service::run_clock(st.clone(), Duration::from_millis(1)).await;
    assert_eq!(last, Some(2000));
    assert!(st.with_sim(|s| s.is_finished()));
}
