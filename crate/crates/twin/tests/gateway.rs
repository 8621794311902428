mod common;

use std::time::Duration;

use common::*;
use futures::StreamExt;
use incubator_bus::Message;
use incubator_twin::datalog::{record, Datalog};
use incubator_twin::gateway::gateway_serve;
use incubator_twin::messages::topics;
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message as WsMessage;

#[tokio::test]
async fn websocket_streams_bus_messages_and_history_matches_query() {
    let dir = tempfile::tempdir().unwrap();
    let (_b, addr) = bus().await;
    let c = client(&addr).await;
    let rec = record(client(&addr).await, dir.path()).await.unwrap();
    let log = Datalog::open(rec.run_dir());
    let gw = gateway_serve(client(&addr).await, Some(log.clone()), "127.0.0.1:0").await.unwrap();

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{}/ws", gw.addr)).await.unwrap();
    let run = heating_run(500.0, 20, 600.0, 0.2);
    for s in &run {
        c.publish_json(topics::DRIVER_STATE, s.time, s).unwrap();
    }
    c.sync().await.unwrap();

    for s in &run {
        let frame = tokio::time::timeout(Duration::from_secs(5), ws.next()).await.unwrap().unwrap().unwrap();
        let WsMessage::Text(text) = frame else { panic!("expected text frame, got {frame:?}") };
        let m: Message = serde_json::from_str(&text).unwrap();
        assert_eq!(m.topic, topics::DRIVER_STATE);
        assert_eq!(m.ts, s.time);
    }

    // the recorder flushes per line, give it a moment to catch up
    let url = format!("http://{}/api/history?topic={}&from=506&to=530", gw.addr, topics::DRIVER_STATE);
    let mut got: Vec<Message> = Vec::new();
    for _ in 0..50 {
        got = reqwest::get(&url).await.unwrap().json().await.unwrap();
        if got.len() == 9 {
            break;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    assert_eq!(got.len(), 9);
    assert_eq!(got, log.query(topics::DRIVER_STATE, 506.0, 530.0).unwrap());

    let all: Vec<Message> =
        reqwest::get(format!("http://{}/api/history?topic={}", gw.addr, topics::DRIVER_STATE)).await.unwrap().json().await.unwrap();
    assert_eq!(all.len(), 20);

    let reversed = reqwest::get(format!("http://{}/api/history?topic=x&from=9&to=1", gw.addr)).await.unwrap();
    assert_eq!(reversed.status(), 400);
    rec.stop().await;
}

#[tokio::test]
async fn commands_are_validated_and_forwarded() {
    let (_b, addr) = bus().await;
    let c = client(&addr).await;
    let mut dist = c.subscribe(topics::PLANT_DISTURBANCE).await.unwrap();
    let mut ctl = c.subscribe(topics::CONTROLLER_STATE).await.unwrap();
    let gw = gateway_serve(client(&addr).await, None, "127.0.0.1:0").await.unwrap();
    let http = reqwest::Client::new();
    let url = format!("http://{}/api/command", gw.addr);

    let ok = http
        .post(&url)
        .json(&json!({"type": "disturbance", "payload": {"kind": "lid_open", "magnitude": 2.0, "duration": 60.0}}))
        .send()
        .await
        .unwrap();
    assert_eq!(ok.status(), 202);
    let m = next_where(&mut dist, 5.0, |_| true).await;
    assert_eq!(m.body["kind"], "lid_open");

    let ok = http.post(&url).json(&json!({"type": "controller_config", "payload": {"ll": 34, "ul": 39, "h": 30, "c": 20}})).send().await.unwrap();
    assert_eq!(ok.status(), 202);
    let m = next_where(&mut ctl, 5.0, |_| true).await;
    assert_eq!(m.body["request"], "configure");
    assert_eq!(m.body["config"]["ll"], 34.0);

    for bad in [
        json!({"type": "reboot", "payload": {}}),
        json!({"type": "disturbance", "payload": {"kind": "melt"}}),
        json!({"payload": {}}),
    ] {
        let r = http.post(&url).json(&bad).send().await.unwrap();
        assert_eq!(r.status(), 400, "{bad}");
        let body: Value = r.json().await.unwrap();
        assert!(body["error"].is_string());
    }
    let r = http.post(&url).header("content-type", "application/json").body("{oops").send().await.unwrap();
    assert_eq!(r.status(), 400);
}

#[tokio::test]
async fn history_without_a_datalog_is_unavailable() {
    let (_b, addr) = bus().await;
    let gw = gateway_serve(client(&addr).await, None, "127.0.0.1:0").await.unwrap();
    let r = reqwest::get(format!("http://{}/api/history?topic={}", gw.addr, topics::DRIVER_STATE)).await.unwrap();
    assert_eq!(r.status(), 503);
    let r = reqwest::get(format!("http://{}/api/history", gw.addr)).await.unwrap();
    assert_eq!(r.status(), 400);
}
