//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::Value;

use common::*;
use shopguard::cloud::{EventLogFile, ItemRecord, Ledger, LedgerEvent, RestockEvent};
use shopguard::features::{
    normalize_landmarks, BoundingBox, FeatureVector, LandmarkFrame, Point, FEATURE_DIM,
    LANDMARK_COUNT,
};
use shopguard::learn::{
    cross_validate, linear_train_epochs, serialize_model, Algorithm, AnomalyModel, KnnModel,
    LabeledExample, LinearModel, Model, ModelHash, ModelKind,
};
use shopguard::protocol::{
    decode, encode, Alert, BufferedFrame, DistributionReport, DistributionStatus, EdgeOutcome,
    Envelope, ErrorMsg, ModelAck, ModelUpdate, Payload, SaleEvent, ShelfObservation,
    SuspicionEvent,
};
use shopguard::simgen::posture::sample_postures;
use shopguard::simgen::PostureDatasetSpec;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn sg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shopguard"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .filter_map(|l| serde_json::from_str(l).ok())
        .collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn fv(v: Vec<f64>) -> FeatureVector {
    FeatureVector::new(v).unwrap()
}

/// Pads a short prefix with zeros to a full feature vector.
fn padded(prefix: &[f64]) -> FeatureVector {
    let mut v = vec![0.0; FEATURE_DIM];
    v[..prefix.len()].copy_from_slice(prefix);
    fv(v)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

// ---------------------------------------------------------------- C1

fn c1() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let out = sg(&[
        "simulate",
        "gen",
        "--kind",
        "posture",
        "--out",
        p(dir.path()),
    ]);
    ensure(out.status.success(), || "posture generation failed".into())?;
    let n = stdout_json(&out)[0]["examples"].as_u64().unwrap_or(0);
    ensure(n == 1103, || format!("generated {n} examples"))?;
    let data = dir.path().join("dataset.ndjson");

    let mut slowest = Duration::ZERO;
    for algo in ["linear", "knn"] {
        let run = |seed: &str| {
            let t = Instant::now();
            let out = sg(&[
                "cv",
                "--data",
                p(&data),
                "--k",
                "10",
                "--algorithm",
                algo,
                "--seed",
                seed,
            ]);
            (out, t.elapsed())
        };
        let (a, ta) = run("11");
        let (b, tb) = run("11");
        ensure(a.status.success(), || format!("{algo} cv failed"))?;
        ensure(a.stdout == b.stdout, || {
            format!("{algo} cv not deterministic")
        })?;
        slowest = slowest.max(ta).max(tb);
        let report = &stdout_json(&a)[0];
        let mut sizes: Vec<u64> = report["fold_sizes"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_u64().unwrap())
            .collect();
        sizes.sort_unstable();
        let want = [110, 110, 110, 110, 110, 110, 110, 111, 111, 111];
        ensure(sizes == want, || format!("{algo} fold sizes {sizes:?}"))?;
    }
    ensure(slowest < Duration::from_secs(10), || {
        format!("cv took {slowest:?}")
    })?;
    Ok(format!(
        "n=1103 k=10 folds 111x3 + 110x7, deterministic, slowest cv {:.2}s",
        slowest.as_secs_f64()
    ))
}

// ---------------------------------------------------------------- C2

fn random_frame(rng: &mut ChaCha8Rng) -> LandmarkFrame {
    let bbox = BoundingBox {
        origin_x: rng.gen_range(-500.0..500.0),
        origin_y: rng.gen_range(-500.0..500.0),
        width: rng.gen_range(1.0..400.0),
        height: rng.gen_range(1.0..400.0),
    };
    let points = (0..LANDMARK_COUNT)
        .map(|_| {
            Point::new(
                bbox.origin_x + rng.gen_range(-0.2..1.2) * bbox.width,
                bbox.origin_y + rng.gen_range(-0.2..1.2) * bbox.height,
            )
        })
        .collect();
    LandmarkFrame {
        camera_id: "cam".into(),
        frame_seq: 1,
        timestamp_ms: 0,
        bbox,
        points,
    }
}

fn c2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let f = random_frame(&mut rng);
        let (tx, ty) = (rng.gen_range(-1e4..1e4), rng.gen_range(-1e4..1e4));
        let (sx, sy) = if i % 2 == 0 {
            let s = rng.gen_range(0.05..50.0);
            (s, s)
        } else {
            (rng.gen_range(0.05..50.0), rng.gen_range(0.05..50.0))
        };
        let (ox, oy) = (f.bbox.origin_x, f.bbox.origin_y);
        let mut g = f.map_coordinates(|x, y| (ox + tx + sx * (x - ox), oy + ty + sy * (y - oy)));
        g.bbox.width *= sx;
        g.bbox.height *= sy;

        let a = normalize_landmarks(&f).map_err(|e| e.to_string())?;
        let b = normalize_landmarks(&g).map_err(|e| e.to_string())?;
        // direct per-point formula as an independent reference
        let mut direct = vec![0.0; FEATURE_DIM];
        for (j, pt) in f.points.iter().enumerate() {
            direct[j] = (pt.x - ox) / f.bbox.width;
            direct[LANDMARK_COUNT + j] = (pt.y - oy) / f.bbox.height;
        }
        for ((x, y), d) in a.as_slice().iter().zip(b.as_slice()).zip(&direct) {
            worst = worst.max((x - y).abs()).max((x - d).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("max deviation {worst:e}"))?;
    Ok(format!("1000 frames, max deviation {worst:.1e} <= 1e-9"))
}

// ---------------------------------------------------------------- C3

/// Brute-force kNN: full sort by (distance, index), majority vote, ties to
/// smaller summed distance then smaller label.
fn knn_oracle(stored: &[(Vec<f64>, String)], q: &[f64], k: usize) -> String {
    let mut all: Vec<(f64, usize)> = stored
        .iter()
        .enumerate()
        .map(|(i, (x, _))| (dist(x, q), i))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut tally: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for &(d, i) in all.iter().take(k) {
        let t = tally.entry(stored[i].1.as_str()).or_insert((0, 0.0));
        t.0 += 1;
        t.1 += d;
    }
    let mut ranked: Vec<(&str, usize, f64)> =
        tally.into_iter().map(|(l, (c, s))| (l, c, s)).collect();
    ranked.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then(a.2.partial_cmp(&b.2).unwrap())
            .then(a.0.cmp(b.0))
    });
    ranked[0].0.to_string()
}

fn knn_model(stored: &[(Vec<f64>, String)], k: usize) -> KnnModel {
    let examples = stored
        .iter()
        .map(|(x, l)| LabeledExample::new(padded(x), l.clone()).unwrap())
        .collect();
    KnnModel::from_examples(examples, k).unwrap()
}

fn c3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let labels = ["a", "b", "c", "d", "e"];
    let mut matched = 0;
    let mut ties = 0;
    for m in 0..20 {
        let n = rng.gen_range(20..=500);
        let k = rng.gen_range(1..=15);
        let n_labels = rng.gen_range(2..=5);
        let grid = m % 2 == 0;
        let point = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            if grid {
                (0..3).map(|_| rng.gen_range(0..4) as f64).collect()
            } else {
                (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()
            }
        };
        let stored: Vec<(Vec<f64>, String)> = (0..n)
            .map(|_| {
                (
                    point(&mut rng),
                    labels[rng.gen_range(0..n_labels)].to_string(),
                )
            })
            .collect();
        let model = knn_model(&stored, k);
        for _ in 0..10 {
            let q = point(&mut rng);
            let want = knn_oracle(&stored, &q, k);
            let got = model.predict(&padded(&q)).unwrap();
            let kth = got.neighbors.last().unwrap().distance;
            if stored.iter().filter(|(x, _)| dist(x, &q) == kth).count() > 1 {
                ties += 1;
            }
            ensure(got.label == want, || {
                format!(
                    "model {m} n={n} k={k} query {q:?}: got {} want {want}",
                    got.label
                )
            })?;
            matched += 1;
        }
    }

    // hand-built ties: (stored, k, query, expected)
    let s = |v: &[(f64, &str)]| -> Vec<(Vec<f64>, String)> {
        v.iter().map(|(x, l)| (vec![*x], l.to_string())).collect()
    };
    let cases = [
        (
            s(&[(1.0, "b"), (-1.0, "a")]),
            1,
            "b",
            "equal distance keeps insertion order",
        ),
        (
            s(&[(-1.0, "a"), (1.0, "b")]),
            1,
            "a",
            "equal distance keeps insertion order",
        ),
        (
            s(&[(1.0, "z"), (2.0, "a")]),
            2,
            "z",
            "vote tie goes to smaller summed distance",
        ),
        (
            s(&[(1.0, "b"), (-1.0, "a")]),
            2,
            "a",
            "full tie goes to smaller label",
        ),
        (
            s(&[(1.0, "b"), (-1.0, "b"), (0.5, "a"), (-3.0, "a")]),
            4,
            "b",
            "2-2 vote, b sums 2.0 vs a 3.5",
        ),
        (
            s(&[(3.0, "x"), (4.0, "y"), (5.0, "y")]),
            10,
            "y",
            "k above n",
        ),
    ];
    for (stored, k, want, what) in &cases {
        let got = knn_model(stored, *k)
            .predict(&padded(&[0.0]))
            .unwrap()
            .label;
        let oracle = knn_oracle(stored, &[0.0], *k);
        ensure(got == *want && oracle == *want, || {
            format!("{what}: got {got}, oracle {oracle}, want {want}")
        })?;
    }
    Ok(format!(
        "{matched}/200 random queries match ({ties} with distance ties), {} explicit tie cases",
        cases.len()
    ))
}

// ---------------------------------------------------------------- C4

/// Brute-force LOF with exactly `k` neighbors and the 1e-10 density guard.
fn lof_oracle(refs: &[Vec<f64>], q: &[f64], k: usize) -> f64 {
    let knn = |x: &[f64], skip: Option<usize>| -> Vec<(f64, usize)> {
        let mut all: Vec<(f64, usize)> = refs
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != skip)
            .map(|(i, r)| (dist(r, x), i))
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        all.truncate(k);
        all
    };
    let kdist: Vec<f64> = (0..refs.len())
        .map(|i| knn(&refs[i], Some(i)).last().unwrap().0)
        .collect();
    let lrd_of = |nb: &[(f64, usize)]| {
        let reach: f64 = nb.iter().map(|&(d, o)| d.max(kdist[o])).sum::<f64>() / nb.len() as f64;
        1.0 / (reach + 1e-10)
    };
    let lrd: Vec<f64> = (0..refs.len())
        .map(|i| lrd_of(&knn(&refs[i], Some(i))))
        .collect();
    let nq = knn(q, None);
    let mean = nq.iter().map(|&(_, o)| lrd[o]).sum::<f64>() / nq.len() as f64;
    mean / lrd_of(&nq)
}

fn c4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_rel = 0.0f64;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let mut min_outlier = f64::INFINITY;
    let mut compared = 0;
    for set in 0..6 {
        let k = [10, 5, 20][set % 3];
        let dims = if set < 3 { 2 } else { 20 };
        let noise = Normal::new(0.0, 1.0).unwrap();
        let refs: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..dims).map(|_| noise.sample(&mut rng)).collect())
            .collect();
        let model = AnomalyModel::new(refs.iter().map(|r| padded(r)).collect(), k)
            .map_err(|e| e.to_string())?;

        let mut queries: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..dims).map(|_| noise.sample(&mut rng)).collect())
            .collect();
        queries.extend(refs.iter().take(5).cloned());
        for q in &queries {
            let (got, want) = (model.score(&padded(q)), lof_oracle(&refs, q, k));
            let rel = (got - want).abs() / want.abs();
            worst_rel = worst_rel.max(rel);
            compared += 1;
        }

        // diameter and centroid of the reference set
        let mut diameter = 0.0f64;
        for a in &refs {
            for b in &refs {
                diameter = diameter.max(dist(a, b));
            }
        }
        let centroid: Vec<f64> = (0..dims)
            .map(|d| refs.iter().map(|r| r[d]).sum::<f64>() / refs.len() as f64)
            .collect();
        for dir in 0..dims.min(4) {
            let mut q = centroid.clone();
            q[dir] += 20.0 * diameter;
            let s = model.score(&padded(&q));
            let want = lof_oracle(&refs, &q, k);
            worst_rel = worst_rel.max((s - want).abs() / want);
            min_outlier = min_outlier.min(s);
        }
    }

    // in-cluster: regular grids queried at interior points
    for (cols, rows, k) in [(20, 10, 10), (15, 15, 10), (25, 8, 5)] {
        let refs: Vec<Vec<f64>> = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| vec![c as f64, r as f64]))
            .collect();
        let model = AnomalyModel::new(refs.iter().map(|r| padded(r)).collect(), k).unwrap();
        for _ in 0..20 {
            let q = vec![
                rng.gen_range(3.0..cols as f64 - 4.0),
                rng.gen_range(2.0..rows as f64 - 3.0),
            ];
            let s = model.score(&padded(&q));
            worst_rel = worst_rel.max((s - lof_oracle(&refs, &q, k)).abs() / s);
            lo = lo.min(s);
            hi = hi.max(s);
        }
    }
    ensure(worst_rel <= 1e-6, || {
        format!("relative error {worst_rel:e}")
    })?;
    ensure(lo >= 0.8 && hi <= 1.2, || {
        format!("in-cluster scores span [{lo}, {hi}]")
    })?;
    ensure(min_outlier > 1.5, || {
        format!("an outlier scored {min_outlier}")
    })?;
    Ok(format!(
        "{compared} queries, max rel err {worst_rel:.1e}; in-cluster [{lo:.3}, {hi:.3}]; outliers >= {min_outlier:.1}"
    ))
}

// ---------------------------------------------------------------- C5

/// Two clusters whose noise lies in a ball of radius `r`, centers `2 * (r + 5r)` apart.
fn separable(seed: u64, n: usize) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = 0.01;
    let margin = 5.0 * r;
    let unit = |rng: &mut ChaCha8Rng| {
        let g = Normal::new(0.0, 1.0).unwrap();
        let v: Vec<f64> = (0..FEATURE_DIM).map(|_| g.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / norm).collect::<Vec<f64>>()
    };
    let axis = unit(&mut rng);
    let base: Vec<f64> = (0..FEATURE_DIM).map(|_| rng.gen_range(0.0..1.0)).collect();
    (0..n)
        .map(|i| {
            let (sign, label) = if i % 2 == 0 {
                (1.0, "pos")
            } else {
                (-1.0, "neg")
            };
            let jitter = unit(&mut rng);
            let len = r * rng.gen_range(0.0..1.0f64);
            let v = (0..FEATURE_DIM)
                .map(|d| base[d] + sign * (r + margin) * axis[d] + len * jitter[d])
                .collect();
            LabeledExample::new(fv(v), label).unwrap()
        })
        .collect()
}

fn weights(m: &LinearModel) -> Vec<Vec<f64>> {
    m.classes()
        .map(|c| m.weights(c).unwrap().to_vec())
        .collect()
}

fn c5() -> Check {
    let mut max_epochs = 0;
    for seed in 0..20 {
        let data = separable(seed, 200);
        let start = LinearModel::with_classes(["neg", "pos"]);
        let m = linear_train_epochs(&start, &data, 50, seed).map_err(|e| e.to_string())?;
        let e = m.epochs_trained();
        ensure(e <= 50, || format!("seed {seed}: {e} epochs"))?;
        // the final epoch made no update
        let before = if e == 1 {
            start.clone()
        } else {
            linear_train_epochs(&start, &data, e as u32 - 1, seed).unwrap()
        };
        ensure(weights(&before) == weights(&m), || {
            format!("seed {seed}: epoch {e} still changed weights")
        })?;
        let correct = data
            .iter()
            .filter(|ex| m.predict(&ex.features).unwrap().label == ex.label)
            .count();
        ensure(correct == data.len(), || {
            format!("seed {seed}: {correct}/{} correct", data.len())
        })?;
        max_epochs = max_epochs.max(e);
    }
    Ok(format!(
        "20/20 seeds reach an error-free epoch, worst at epoch {max_epochs}"
    ))
}

// ---------------------------------------------------------------- C6

fn c6() -> Check {
    let (mut lo, mut hi) = (1.0f64, 0.0f64);
    for seed in 0..20u64 {
        let spec = PostureDatasetSpec::with_separation(
            vec!["a".into(), "b".into(), "c".into()],
            600,
            0.01,
            0.03,
            seed,
        )
        .unwrap();
        let samples = sample_postures(&spec).unwrap();
        let mut labels: Vec<String> = samples.iter().map(|(_, l)| l.clone()).collect();
        labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed + 1000));
        let data: Vec<LabeledExample> = samples
            .into_iter()
            .zip(labels)
            .map(|((f, _), l)| LabeledExample::new(f, l).unwrap())
            .collect();
        for algo in [Algorithm::Linear, Algorithm::Knn] {
            let r = cross_validate(&data, 10, algo, seed).map_err(|e| e.to_string())?;
            lo = lo.min(r.mean_accuracy);
            hi = hi.max(r.mean_accuracy);
            ensure((0.23..=0.43).contains(&r.mean_accuracy), || {
                format!("seed {seed} {algo:?}: mean accuracy {}", r.mean_accuracy)
            })?;
        }
    }
    Ok(format!(
        "40 runs, mean accuracy in [{lo:.3}, {hi:.3}] within 0.33 +/- 0.10"
    ))
}

// ---------------------------------------------------------------- C7

fn replay_variant(root: &Path, mode: Option<&str>) -> Result<(Value, Duration), String> {
    let name = mode.unwrap_or("default");
    let out_dir = root.join(name);
    let t = Instant::now();
    let mut args = vec!["simulate", "gen", "--out", p(&out_dir)];
    let spec = root.join(format!("{name}.conf"));
    if let Some(m) = mode {
        fs::write(&spec, format!("mode={m}\n")).unwrap();
        args.extend(["--spec", p(&spec)]);
    }
    let gen = sg(&args);
    ensure(gen.status.success(), || {
        format!("{name} gen: {}", String::from_utf8_lossy(&gen.stderr))
    })?;
    let out = sg(&["simulate", "replay", "--dir", p(&out_dir)]);
    ensure(out.status.success(), || format!("{name} replay failed"))?;
    let report = stdout_json(&out).into_iter().next().ok_or("no report")?;
    Ok((report, t.elapsed()))
}

fn c7() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let (r, t) = replay_variant(dir.path(), None)?;
    let recall = r["recall"].as_f64().unwrap();
    let fp = r["false_positives"].as_u64().unwrap();
    let thefts = r["ground_truth_events"].as_u64().unwrap();
    ensure(thefts == 10, || format!("{thefts} planted thefts"))?;
    ensure(recall >= 0.9 && fp == 0, || {
        format!("recall {recall}, fp {fp}")
    })?;
    let mut slowest = t;
    let mut notes = Vec::new();
    for mode in ["anomaly_only", "stock_only"] {
        let (v, t) = replay_variant(dir.path(), Some(mode))?;
        slowest = slowest.max(t);
        let alerts = v["alerts_raised"].as_u64().unwrap();
        ensure(alerts == 0, || format!("{mode}: {alerts} alerts"))?;
        notes.push(format!(
            "{mode} 0 alerts ({} suspicions, {} discrepancies)",
            v["suspicions"], v["stock_discrepancies"]
        ));
    }
    ensure(slowest < Duration::from_secs(30), || {
        format!("run took {slowest:?}")
    })?;
    Ok(format!(
        "recall {recall:.2}, fp 0; {}; slowest {:.1}s",
        notes.join(", "),
        slowest.as_secs_f64()
    ))
}

// ---------------------------------------------------------------- C8

fn push_via_cli(addr: &str, model: &Model, dir: &Path) -> (Output, Value) {
    let path = dir.join("pushed.model");
    fs::write(&path, serialize_model(model)).unwrap();
    let out = sg(&["push-model", "--cloud", addr, "--model", p(&path)]);
    let report = stdout_json(&out).into_iter().next().unwrap_or(Value::Null);
    (out, report)
}

fn c8() -> Check {
    let dir = tempfile::tempdir().unwrap();

    // all edges reachable
    let (server, sink) = start_cloud(vec![item("gum", 20, "front")], &[("cam-1", "front")]);
    let addr = server.local_addr().to_string();
    let (old, new) = (reference(60, 81), reference(60, 82));
    let new_model = Model::Anomaly(new.clone());
    let new_hash = new_model.hash();
    let mut edges: Vec<Edge> = ["e1", "e2", "e3"]
        .iter()
        .map(|id| connect_edge(id, &addr, &old))
        .collect();
    wait_until("edges to register", || server.edges().len() == 3);
    let (out, report) = push_via_cli(&addr, &new_model, dir.path());
    ensure(out.status.code() == Some(0), || {
        format!("push-model exit {:?}", out.status.code())
    })?;
    ensure(report["model_hash"] == new_hash.to_hex(), || {
        "report hash differs".into()
    })?;
    let acked = report["edges"].as_array().unwrap();
    ensure(acked.len() == 3, || {
        format!("{} edges in report", acked.len())
    })?;
    for e in acked {
        ensure(
            e["status"] == "acked" && e["acked_hash"] == new_hash.to_hex(),
            || format!("edge outcome {e}"),
        )?;
    }
    for (i, e) in edges.iter_mut().enumerate() {
        ensure(e.store.snapshot().anomaly_hash() == Some(new_hash), || {
            "store not swapped".into()
        })?;
        let ev = e
            .agent
            .evaluate_frame(&outlier_frame("cam-1", 1, 1_000_000 + i as u64))
            .map_err(|e| e.to_string())?
            .ok_or("outlier raised no suspicion")?;
        ensure(ev.model_hash == new_hash, || {
            "suspicion carries old hash".into()
        })?;
        e.uplink.enqueue(ev);
        e.uplink.drain().map_err(|e| e.to_string())?;
    }
    let obs = ShelfObservation {
        sku: "gum".into(),
        observed_count: 17,
        camera_id: "cam-1".into(),
        timestamp_ms: 1_001_000,
    };
    shopguard::cloud::client::send_all(&addr, vec![Payload::Shelf(obs)], Duration::from_secs(5))
        .map_err(|e| e.to_string())?;
    wait_until("alerts", || sink.lines.lock().unwrap().len() == 3);
    for line in sink.lines.lock().unwrap().iter() {
        let a: Value = serde_json::from_str(line).unwrap();
        ensure(a["suspicion"]["model_hash"] == new_hash.to_hex(), || {
            "alert carries old hash".into()
        })?;
    }

    // one edge loses its connection mid-transfer
    let (server, _) = start_cloud(vec![], &[]);
    let old_hash = Model::Anomaly(old.clone()).hash();
    let direct = connect_edge("direct", &server.local_addr().to_string(), &old);
    let cut = connect_edge(
        "cut",
        &limited_proxy(server.local_addr(), 512).to_string(),
        &old,
    );
    wait_until("edges to register", || server.edges().len() == 2);
    let (out, report) = push_via_cli(&server.local_addr().to_string(), &new_model, dir.path());
    let status = |id: &str| {
        report["edges"]
            .as_array()
            .and_then(|es| es.iter().find(|e| e["edge_id"] == id))
            .map(|e| e["status"].clone())
            .unwrap_or(Value::Null)
    };
    ensure(out.status.code() == Some(1), || {
        format!("partial push exit {:?}", out.status.code())
    })?;
    ensure(
        status("direct") == "acked" && status("cut") == "unreached",
        || format!("statuses {report}"),
    )?;
    ensure(
        direct.store.snapshot().anomaly_hash() == Some(new_hash),
        || "direct edge not updated".into(),
    )?;
    let snap = cut.store.snapshot();
    ensure(
        snap.anomaly_hash() == Some(old_hash)
            && *snap.anomaly.as_ref().unwrap().0 == old
            && snap.classifier.is_none(),
        || "cut edge holds partial state".into(),
    )?;
    Ok("3/3 edges acked the pushed hash, 3 alerts carry it; cut edge kept its old model".into())
}

// ---------------------------------------------------------------- C9

fn text(rng: &mut ChaCha8Rng) -> String {
    const POOL: &[char] = &[
        'a', 'b', 'z', 'Q', '0', '9', '-', '_', ' ', '"', '\\', '/', '\n', '\t', 'é', 'ß', '中',
        '🛒', '\u{7f}', '\u{1}',
    ];
    let n = rng.gen_range(1..12);
    (0..n).map(|_| *POOL.choose(rng).unwrap()).collect()
}

fn float(rng: &mut ChaCha8Rng) -> f64 {
    match rng.gen_range(0..4) {
        0 => 0.0,
        1 => rng.gen_range(-1.0..1.0),
        2 => rng.gen::<f64>() * 10f64.powi(rng.gen_range(-300..300)),
        _ => -rng.gen::<f64>() * 10f64.powi(rng.gen_range(-20..20)),
    }
}

fn hash(rng: &mut ChaCha8Rng) -> ModelHash {
    ModelHash(rng.gen())
}

fn suspicion(rng: &mut ChaCha8Rng) -> SuspicionEvent {
    SuspicionEvent {
        camera_id: text(rng),
        anomaly_score: float(rng).abs(),
        predicted_label: text(rng),
        frame_buffer: (0..rng.gen_range(1..4))
            .map(|_| BufferedFrame {
                frame_seq: rng.gen(),
                features: fv((0..FEATURE_DIM).map(|_| float(rng)).collect()),
            })
            .collect(),
        model_hash: hash(rng),
        classifier_hash: rng.gen_bool(0.5).then(|| hash(rng)),
        timestamp_ms: rng.gen(),
    }
}

fn payload(rng: &mut ChaCha8Rng, which: usize) -> Payload {
    match which {
        0 => Payload::Sale(SaleEvent {
            sku: text(rng),
            quantity: rng.gen_range(1..=u64::MAX),
            terminal_id: text(rng),
            timestamp_ms: rng.gen(),
        }),
        1 => Payload::Shelf(ShelfObservation {
            sku: text(rng),
            observed_count: rng.gen(),
            camera_id: text(rng),
            timestamp_ms: rng.gen(),
        }),
        2 => Payload::Suspicion(suspicion(rng)),
        3 => Payload::ModelUpdate(ModelUpdate {
            kind: *[ModelKind::Linear, ModelKind::Knn, ModelKind::Anomaly]
                .choose(rng)
                .unwrap(),
            model: (0..rng.gen_range(0..200)).map(|_| rng.gen()).collect(),
            model_hash: hash(rng),
        }),
        4 => Payload::ModelAck(ModelAck {
            model_hash: rng.gen_bool(0.5).then(|| hash(rng)),
            edge_id: text(rng),
        }),
        5 => Payload::Alert(Alert {
            alert_id: text(rng),
            camera_id: text(rng),
            sku: text(rng),
            missing_count: rng.gen_range(1..=u64::MAX),
            suspicion: suspicion(rng),
            created_at_ms: rng.gen(),
        }),
        6 => Payload::Error(ErrorMsg {
            code: text(rng),
            message: text(rng),
            ref_seq: rng.gen_bool(0.5).then(|| rng.gen()),
        }),
        _ => Payload::DistributionReport(DistributionReport {
            model_hash: hash(rng),
            edges: (0..rng.gen_range(0..4))
                .map(|_| EdgeOutcome {
                    edge_id: text(rng),
                    status: *[
                        DistributionStatus::Acked,
                        DistributionStatus::Stale,
                        DistributionStatus::Rejected,
                        DistributionStatus::Unreached,
                    ]
                    .choose(rng)
                    .unwrap(),
                    acked_hash: rng.gen_bool(0.5).then(|| hash(rng)),
                })
                .collect(),
        }),
    }
}

/// Oracle for derived stock: fold the accepted events by hand.
fn expected_stock(log: &[LedgerEvent]) -> BTreeMap<String, i64> {
    let mut stock = BTreeMap::new();
    for ev in log {
        match ev {
            LedgerEvent::Register(r) => {
                stock.insert(r.sku.clone(), r.recorded_stock);
            }
            LedgerEvent::Sale(s) => *stock.get_mut(&s.sku).unwrap() -= s.quantity as i64,
            LedgerEvent::Restock(r) => *stock.get_mut(&r.sku).unwrap() += r.quantity as i64,
            LedgerEvent::Observation(_) => {}
        }
    }
    stock
}

fn snapshot_bytes(l: &Ledger) -> Vec<u8> {
    let mut buf = Vec::new();
    l.write_snapshot(&mut buf).unwrap();
    buf
}

fn c9() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..10_000 {
        let env = Envelope {
            seq: rng.gen(),
            sent_at_ms: rng.gen(),
            payload: payload(&mut rng, i % 8),
        };
        let line = encode(&env);
        ensure(!line.contains('\n'), || format!("envelope {i} spans lines"))?;
        let back = decode(&line).map_err(|e| format!("envelope {i}: {e}"))?;
        ensure(back == env, || format!("envelope {i} changed: {line}"))?;
    }

    let dir = tempfile::tempdir().unwrap();
    let skus = ["tea", "gum", "soap", "razor"];
    let catalog: Vec<ItemRecord> = skus
        .iter()
        .map(|s| item(s, rng.gen_range(0..100), "z"))
        .collect();
    let mut ledger = Ledger::with_items(catalog).unwrap();
    let mut midpoint = None;
    for step in 0..2000u64 {
        let sku = if rng.gen_bool(0.05) {
            "ghost".to_string()
        } else {
            skus.choose(&mut rng).unwrap().to_string()
        };
        match rng.gen_range(0..3) {
            0 => {
                ledger.ingest_sale(SaleEvent {
                    sku,
                    quantity: rng.gen_range(1..5),
                    terminal_id: "pos".into(),
                    timestamp_ms: step,
                });
            }
            1 => {
                ledger.ingest_restock(RestockEvent {
                    sku,
                    quantity: rng.gen_range(1..20),
                    timestamp_ms: step,
                });
            }
            _ => {
                ledger.record_shelf_observation(ShelfObservation {
                    sku,
                    observed_count: rng.gen_range(0..120),
                    camera_id: "cam".into(),
                    timestamp_ms: step,
                });
            }
        }
        if step == 1000 {
            midpoint = Some(snapshot_bytes(&ledger));
        }
    }

    let log_path = dir.path().join("ledger.events");
    let mut file = EventLogFile::open(&log_path).unwrap();
    for ev in ledger.log() {
        file.append(ev).unwrap();
    }
    drop(file);
    let from_disk = EventLogFile::read_all(&log_path).unwrap();
    ensure(from_disk == ledger.log(), || {
        "event log file differs".into()
    })?;

    let replayed = Ledger::replay(from_disk.clone()).map_err(|e| e.to_string())?;
    let restored = Ledger::restore(
        BufReader::new(midpoint.unwrap().as_slice()),
        from_disk.clone(),
    )
    .map_err(|e| e.to_string())?;
    let original = snapshot_bytes(&ledger);
    ensure(replayed.state() == ledger.state(), || {
        "replayed state differs".into()
    })?;
    ensure(snapshot_bytes(&replayed) == original, || {
        "replay bytes differ".into()
    })?;
    ensure(restored.state() == ledger.state(), || {
        "restored state differs".into()
    })?;
    ensure(snapshot_bytes(&restored) == original, || {
        "restore bytes differ".into()
    })?;
    let want = expected_stock(&from_disk);
    for (sku, stock) in &want {
        let got = ledger.state().get(sku).unwrap().recorded_stock;
        ensure(got == *stock, || format!("{sku}: {got} vs {stock}"))?;
    }
    ensure(!ledger.dead_letters().is_empty(), || {
        "no dead letters exercised".into()
    })?;
    Ok(format!(
        "10000 envelopes round-trip; {} logged events replay and restore bit-exactly ({} dead letters)",
        from_disk.len(),
        ledger.dead_letters().len()
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("cv harness shape", c1),
        ("normalization invariance", c2),
        ("knn oracle", c3),
        ("lof oracle", c4),
        ("perceptron convergence", c5),
        ("chance-level cv", c6),
        ("end-to-end scenario", c7),
        ("model distribution", c8),
        ("codec and ledger replay", c9),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        match result {
            Ok(detail) => println!("C{} PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("C{} FAIL {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
