//! The session protocol over a real local HTTP connection.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};

use serde_json::{json, Value};
use wrain_core::{replay, Trace};

fn start_server() -> SocketAddr {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    listener.set_nonblocking(true).unwrap();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            wrain_cli::server::serve_on(listener).await.unwrap();
        });
    });
    addr
}

/// Minimal HTTP/1.1 exchange; returns the status and the response lines.
fn request(addr: SocketAddr, method: &str, path: &str, body: &str) -> (u16, Vec<Value>) {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/x-ndjson\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut raw = String::new();
    s.read_to_string(&mut raw).unwrap();
    let (head, payload) = raw.split_once("\r\n\r\n").unwrap();
    let status = head.split_whitespace().nth(1).unwrap().parse().unwrap();
    let lines = payload
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    (status, lines)
}

fn lines(messages: &[Value]) -> String {
    messages.iter().map(|m| format!("{m}\n")).collect()
}

fn new_session(addr: SocketAddr, instance: &str) -> (u64, Value) {
    let msg = json!({"version": 1, "type": "new", "instance": instance});
    let (status, mut out) = request(addr, "POST", "/sessions", &lines(&[msg]));
    assert_eq!(status, 201, "{out:?}");
    let state = out.remove(0);
    (state["session"].as_u64().unwrap(), state)
}

#[test]
fn pair_session_step_undo_export() {
    let addr = start_server();
    let (id, state) = new_session(addr, "0 0\n0 1\n");
    assert_eq!(state["type"], "state");
    assert_eq!(state["key"], "0,0,C 0,1,C");
    let top = &state["particles"][1];
    assert_eq!(top["node"], json!([0, 1]));
    assert_eq!(
        (top["upper"].clone(), top["lower"].clone()),
        (json!(false), json!(true))
    );
    assert_eq!(top["decision"], "SE");

    let path = format!("/sessions/{id}");
    let (status, out) = request(
        addr,
        "POST",
        &path,
        &lines(&[
            json!({"version": 1, "type": "enabled"}),
            json!({"version": 1, "type": "step", "ids": [1]}),
            json!({"version": 1, "type": "step", "ids": [1]}),
        ]),
    );
    assert_eq!(status, 200);
    assert_eq!(out.len(), 3);
    assert_eq!(out[0]["ids"], json!([1]));
    assert_eq!(out[1]["records"][0]["events"][0]["event"], "expand");
    assert_eq!(out[1]["state"]["metrics"]["moves"], 0);
    // expanded particle whose target is empty contracts: one more move
    assert_eq!(out[2]["records"][0]["events"][0]["event"], "contract");
    assert_eq!(out[2]["state"]["metrics"]["moves"], 1);
    assert_eq!(out[2]["state"]["metrics"]["is_final"], true);
    let before_last = out[1]["state"]["key"].clone();

    let (_, out) = request(
        addr,
        "POST",
        &path,
        &lines(&[json!({"version": 1, "type": "undo"})]),
    );
    assert_eq!(out[0]["key"], before_last);

    let (_, out) = request(
        addr,
        "POST",
        &path,
        &lines(&[
            json!({"version": 1, "type": "step", "ids": [1]}),
            json!({"version": 1, "type": "export"}),
        ]),
    );
    let trace = Trace::from_jsonl(out[1]["trace"].as_str().unwrap()).unwrap();
    assert_eq!(trace.records.len(), 2);
    assert!(trace.terminated());
    replay(&trace).unwrap();

    assert_eq!(request(addr, "DELETE", &path, "").0, 204);
    assert_eq!(
        request(
            addr,
            "POST",
            &path,
            &lines(&[json!({"version": 1, "type": "state"})])
        )
        .0,
        404
    );
}

#[test]
fn tie_break_round_trip() {
    let addr = start_server();
    let (id, _) = new_session(addr, "0 0\n0 1 SE\n2 0 W\n");
    let path = format!("/sessions/{id}");
    let (_, out) = request(
        addr,
        "POST",
        &path,
        &lines(&[json!({"version": 1, "type": "step", "ids": [1, 2]})]),
    );
    assert_eq!(out[0]["type"], "error");
    let site = out[0]["conflict"]["site"].clone();
    assert_eq!(site, json!({"node": [1, 0]}));
    assert_eq!(out[0]["conflict"]["group"], json!([1, 2]));

    let step = json!({"version": 1, "type": "step", "ids": [1, 2],
                      "tie_breaks": [{"site": site, "chosen": 1}]});
    let (_, out) = request(
        addr,
        "POST",
        &path,
        &lines(&[step, json!({"version": 1, "type": "export"})]),
    );
    assert_eq!(out[0]["records"][0]["tie_breaks"][0]["chosen"], 1);
    let trace = Trace::from_jsonl(out[1]["trace"].as_str().unwrap()).unwrap();
    replay(&trace).unwrap();
}

#[test]
fn protocol_errors() {
    let addr = start_server();
    let (status, out) = request(
        addr,
        "POST",
        "/sessions",
        "{\"type\":\"new\",\"instance\":\"0 0\"}\n",
    );
    assert_eq!(status, 400);
    assert!(out[0]["message"].as_str().unwrap().contains("version"));
    let (status, _) = request(
        addr,
        "POST",
        "/sessions",
        &lines(&[json!({"version": 1, "type": "state"})]),
    );
    assert_eq!(status, 400);

    let (id, _) = new_session(addr, "0 0\n");
    let path = format!("/sessions/{id}");
    let (_, out) = request(
        addr,
        "POST",
        &path,
        "{\"version\":9,\"type\":\"state\"}\nnot json\n{\"version\":1,\"type\":\"undo\"}\n",
    );
    assert_eq!(out.len(), 3);
    assert!(out.iter().all(|o| o["type"] == "error"));
    assert!(out[2]["message"]
        .as_str()
        .unwrap()
        .contains("nothing to undo"));
}
