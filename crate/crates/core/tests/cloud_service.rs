mod common;

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::time::Duration;

use common::*;
use shopguard::cloud::client::send_all;
use shopguard::cloud::notify::MemorySink;
use shopguard::cloud::{
    events_path, CloudConfig, CloudCore, CloudServer, Dispatcher, ServerConfig,
};
use shopguard::edge::EdgeAgent;
use shopguard::protocol::{decode, Payload, SaleEvent, ShelfObservation};

const T: Duration = Duration::from_secs(5);

fn sale(sku: &str, ts: u64) -> Payload {
    Payload::Sale(SaleEvent {
        sku: sku.into(),
        quantity: 1,
        terminal_id: "pos-1".into(),
        timestamp_ms: ts,
    })
}

fn shelf(sku: &str, count: u64, ts: u64) -> Payload {
    Payload::Shelf(ShelfObservation {
        sku: sku.into(),
        observed_count: count,
        camera_id: "cam-1".into(),
        timestamp_ms: ts,
    })
}

fn suspicion(agent: &mut EdgeAgent, seq: u64, ts: u64) -> Payload {
    Payload::Suspicion(
        agent
            .evaluate_frame(&outlier_frame("cam-1", seq, ts))
            .unwrap()
            .unwrap(),
    )
}

fn error_codes(replies: &[shopguard::protocol::Envelope]) -> Vec<String> {
    replies
        .iter()
        .filter_map(|e| match &e.payload {
            Payload::Error(m) => Some(m.code.clone()),
            _ => None,
        })
        .collect()
}

#[test]
fn sales_move_recorded_stock_and_unknown_skus_are_refused() {
    let (server, _) = start_cloud(vec![item("tea", 5, "drinks")], &[("cam-1", "drinks")]);
    let addr = server.local_addr().to_string();
    let replies = send_all(
        &addr,
        vec![sale("tea", 10), sale("tea", 20), sale("caviar", 30)],
        T,
    )
    .unwrap();
    assert_eq!(error_codes(&replies), ["unknown_sku"]);
    server.with_core(|c| {
        assert_eq!(c.ledger().state().get("tea").unwrap().recorded_stock, 3);
        assert_eq!(c.ledger().dead_letters().len(), 1);
    });
}

#[test]
fn alert_needs_both_signals() {
    let (server, sink) = start_cloud(
        vec![item("tea", 5, "drinks"), item("gum", 5, "drinks")],
        &[("cam-1", "drinks")],
    );
    let addr = server.local_addr().to_string();
    let model = reference(40, 7);
    let mut edge = connect_edge("e1", &addr, &model);

    // stock only: gum shortfall with no suspicion nearby
    send_all(&addr, vec![shelf("gum", 4, 10_000)], T).unwrap();
    // anomaly only: suspicion while every count matches
    let p = suspicion(&mut edge.agent, 1, 500_000);
    send_all(
        &addr,
        vec![shelf("tea", 5, 499_000), shelf("gum", 4, 499_000), p],
        T,
    )
    .unwrap();
    send_all(&addr, vec![shelf("tea", 5, 501_000)], T).unwrap();
    assert!(sink.lines.lock().unwrap().is_empty());

    // both: tea goes missing within the window
    let p = suspicion(&mut edge.agent, 2, 900_000);
    send_all(&addr, vec![p, shelf("tea", 4, 905_000)], T).unwrap();
    let lines = sink.lines.lock().unwrap().clone();
    assert_eq!(lines.len(), 1);
    let alert: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
    assert_eq!(
        (alert["sku"].as_str(), alert["missing_count"].as_u64()),
        (Some("tea"), Some(1))
    );
}

#[test]
fn bad_lines_get_errors_and_the_connection_survives() {
    let (server, _) = start_cloud(vec![item("tea", 5, "drinks")], &[]);
    let s = TcpStream::connect(server.local_addr()).unwrap();
    s.set_read_timeout(Some(T)).unwrap();
    let mut w = s.try_clone().unwrap();
    w.write_all(b"{not json\n").unwrap();
    w.write_all(
        b"{\"msg_type\":\"SaleEvent\",\"seq\":1,\"sent_at_ms\":1,\"payload\":{\"sku\":\"tea\",\"quantity\":1,\"terminal_id\":\"p\",\"timestamp_ms\":5}}\n",
    )
    .unwrap();
    w.shutdown(std::net::Shutdown::Write).unwrap();
    let replies: Vec<_> = BufReader::new(s)
        .lines()
        .map(|l| decode(&l.unwrap()).unwrap())
        .collect();
    assert_eq!(error_codes(&replies), ["decode"]);
    server.with_core(|c| assert_eq!(c.ledger().state().get("tea").unwrap().recorded_stock, 4));
}

#[test]
fn restart_from_snapshot_reproduces_state() {
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("ledger.snapshot");
    let catalog = vec![item("tea", 9, "drinks"), item("gum", 3, "drinks")];
    let config = CloudConfig::default();
    let start = || {
        let core = CloudCore::open(&config, catalog.clone(), Some(&snap)).unwrap();
        CloudServer::start(
            "127.0.0.1:0",
            core,
            Dispatcher::new(vec![Box::new(MemorySink::default())]),
            ServerConfig {
                snapshot: Some(snap.clone()),
                snapshot_every: 3,
                ..ServerConfig::default()
            },
        )
        .unwrap()
    };

    let server = start();
    let addr = server.local_addr().to_string();
    let mut msgs: Vec<Payload> = (0..7)
        .map(|i| sale(if i % 2 == 0 { "tea" } else { "gum" }, i))
        .collect();
    msgs.push(shelf("gum", 1, 100));
    send_all(&addr, msgs, T).unwrap();
    let before = server.with_core(|c| c.ledger().state().clone());
    assert_eq!(before.get("gum").unwrap().recorded_stock, 0);
    server.shutdown().unwrap();
    assert!(events_path(&snap).exists());

    let server = start();
    let after = server.with_core(|c| (c.ledger().state().clone(), c.ledger().log_offset()));
    assert_eq!(after.0, before);
    assert_eq!(after.1, 2 + 8);
    // and it keeps going from there
    send_all(&server.local_addr().to_string(), vec![sale("tea", 200)], T).unwrap();
    server.with_core(|c| assert_eq!(c.ledger().state().get("tea").unwrap().recorded_stock, 4));
}
