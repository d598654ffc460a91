#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use shopguard::cloud::notify::MemorySink;
use shopguard::cloud::{CloudCore, CloudServer, Dispatcher, ItemRecord, Ledger, ServerConfig};
use shopguard::edge::{
    EdgeAgent, EdgeConfig, ModelStore, SystemClock, TcpConnector, Uplink, UplinkConfig,
};
use shopguard::features::{FeatureVector, LandmarkFrame};
use shopguard::learn::{AnomalyModel, Model};
use shopguard::simgen::{face_template, frame_from_features};

pub fn jittered(rng: &mut ChaCha8Rng, sd: f64) -> FeatureVector {
    let n = Normal::new(0.0, sd).unwrap();
    let v = face_template()
        .as_slice()
        .iter()
        .map(|b| b + n.sample(rng))
        .collect();
    FeatureVector::new(v).unwrap()
}

/// Reference cloud of `n` faces jittered around the template.
pub fn reference(n: usize, seed: u64) -> AnomalyModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let refs = (0..n).map(|_| jittered(&mut rng, 0.01)).collect();
    AnomalyModel::new(refs, 10).unwrap()
}

/// A face pushed far from the template.
pub fn outlier_frame(camera: &str, seq: u64, ts: u64) -> LandmarkFrame {
    let v = face_template().as_slice().iter().map(|b| b + 0.3).collect();
    frame_from_features(&FeatureVector::new(v).unwrap(), camera, seq, ts)
}

pub fn item(sku: &str, stock: i64, zone: &str) -> ItemRecord {
    ItemRecord {
        sku: sku.into(),
        name: sku.into(),
        recorded_stock: stock,
        zone: zone.into(),
        backroom: 0,
    }
}

pub fn start_cloud(items: Vec<ItemRecord>, zones: &[(&str, &str)]) -> (CloudServer, MemorySink) {
    let zones: Vec<(String, Vec<String>)> = zones
        .iter()
        .map(|(c, z)| (c.to_string(), vec![z.to_string()]))
        .collect();
    let core = CloudCore::new(Ledger::with_items(items).unwrap(), &zones, 60_000);
    let sink = MemorySink::default();
    let server = CloudServer::start(
        "127.0.0.1:0",
        core,
        Dispatcher::new(vec![Box::new(sink.clone())]),
        ServerConfig {
            distribute_timeout: Duration::from_secs(3),
            ..ServerConfig::default()
        },
    )
    .unwrap();
    (server, sink)
}

pub fn wait_until(what: &str, mut cond: impl FnMut() -> bool) {
    let deadline = Instant::now() + Duration::from_secs(10);
    while !cond() {
        assert!(Instant::now() < deadline, "timed out waiting for {what}");
        thread::sleep(Duration::from_millis(10));
    }
}

pub struct Edge {
    pub store: Arc<ModelStore>,
    pub agent: EdgeAgent,
    pub uplink: Uplink<TcpConnector, SystemClock>,
}

/// An edge with `model` installed, connected to `addr`.
pub fn connect_edge(id: &str, addr: &str, model: &AnomalyModel) -> Edge {
    let store = Arc::new(ModelStore::new());
    store.install(Model::Anomaly(model.clone()));
    let connector = TcpConnector::new(addr, id, store.clone());
    let mut uplink = Uplink::new(connector, SystemClock::default(), UplinkConfig::default());
    uplink.pump();
    assert!(uplink.is_connected(), "edge {id} failed to connect");
    let agent = EdgeAgent::new(
        EdgeConfig {
            edge_id: id.into(),
            cooldown_ms: 0,
            ..EdgeConfig::default()
        },
        store.clone(),
    );
    Edge {
        store,
        agent,
        uplink,
    }
}

/// TCP relay that forwards at most `limit` bytes from upstream to the
/// client, then cuts both sides. Client-to-upstream bytes are unlimited.
pub fn limited_proxy(upstream: SocketAddr, limit: usize) -> SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        let (client, _) = listener.accept().unwrap();
        let server = TcpStream::connect(upstream).unwrap();
        let (mut c_rd, mut s_wr) = (client.try_clone().unwrap(), server.try_clone().unwrap());
        thread::spawn(move || {
            let mut buf = [0u8; 4096];
            while let Ok(n) = c_rd.read(&mut buf) {
                if n == 0 || s_wr.write_all(&buf[..n]).is_err() {
                    break;
                }
            }
        });
        let (mut s_rd, mut c_wr) = (server.try_clone().unwrap(), client.try_clone().unwrap());
        let mut sent = 0;
        let mut buf = [0u8; 4096];
        while sent < limit {
            let n = match s_rd.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => n.min(limit - sent),
            };
            if c_wr.write_all(&buf[..n]).is_err() {
                break;
            }
            sent += n;
        }
        let _ = client.shutdown(Shutdown::Both);
        let _ = server.shutdown(Shutdown::Both);
    });
    addr
}
