//! Command-line front end. One binary, one subcommand per role.
//!
//! Machine output goes to stdout as NDJSON; tables and logs go to stderr.
//! Exit codes: 0 ok, 1 internal error, 2 usage or input error.

use std::ffi::OsString;
use std::fmt::Display;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, LevelFilter};
use serde::Serialize;
use serde_json::json;

use crate::cloud::client::{model_update, push_model, send_all};
use crate::cloud::{CloudConfig, CloudCore, CloudServer, ServerConfig};
use crate::config::{ConfigError, KeyValues};
use crate::edge::{
    run_pipeline, EdgeAgent, EdgeConfig, ModelStore, SystemClock, TcpConnector, Uplink,
    UplinkConfig,
};
use crate::features::{
    normalize_landmarks, parse_labeled_record, parse_landmark_record, FeatureError, FeatureVector,
    LandmarkFrame,
};
use crate::learn::{
    cross_validate_with, deserialize_model, linear_train_epochs, read_labeled_dataset, select_best,
    serialize_model, AccuracyReport, Algorithm, AnomalyModel, CvConfig, KnnModel, LabeledExample,
    LearnError, LinearModel, Model, DEFAULT_EPOCHS, DEFAULT_KNN_K, DEFAULT_K_LOF,
};
use crate::protocol::{now_ms, Payload, SaleEvent, ShelfObservation};
use crate::simgen::{
    gen_posture_dataset, gen_scenario, replay_dir, PostureDatasetSpec, ScenarioSpec, SimError,
};

pub const DEFAULT_SEED: u64 = 42;
pub const POSTURE_DATASET_FILE: &str = "dataset.ndjson";
pub const GLOBAL_CONFIG_KEYS: &[&str] = &["log_level", "data_dir", "seed"];

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or bad input data; exit 2.
    Input(String),
    /// Anything else; exit 1.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 1,
        }
    }

    fn input(e: impl Display) -> Self {
        CliError::Input(e.to_string())
    }

    fn internal(e: impl Display) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::input(e)
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::CorruptModel(_) => CliError::input(e),
            LearnError::EmptyModel | LearnError::MismatchedReports => CliError::internal(e),
            _ => CliError::input(e),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Io(_) | SimError::Guarantee(_) => CliError::internal(e),
            _ => CliError::input(e),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "shopguard",
    version,
    about = "Shop-floor theft detection: edge scoring, cloud stock gating, simulation"
)]
pub struct Cli {
    /// Default seed for every randomized step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Config file. For run-edge and serve-cloud this is the role config;
    /// elsewhere it may set log_level, data_dir and seed.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true)]
    pub log_level: Option<LevelFilter>,
    /// Base for relative output paths; must be writable.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model from a landmark dataset and write its canonical bytes.
    Train(TrainArgs),
    /// Score landmark records with a trained model.
    Predict(PredictArgs),
    /// k-fold cross-validation of one algorithm.
    Cv(CvArgs),
    /// Cross-validate both classifiers on the same folds and pick one.
    Select(SelectArgs),
    /// Score a landmark stream and forward suspicion events to the cloud.
    RunEdge(RunEdgeArgs),
    /// Run the cloud service until killed.
    ServeCloud(ServeCloudArgs),
    /// Send sale events to a running cloud.
    InjectSale(InjectSaleArgs),
    /// Send shelf counts to a running cloud.
    InjectObservation(InjectObservationArgs),
    /// Have the cloud distribute a model to every connected edge.
    PushModel(PushModelArgs),
    /// Synthetic datasets and scenarios.
    #[command(subcommand)]
    Simulate(SimulateCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainKind {
    Linear,
    Knn,
    Anomaly,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled landmark NDJSON (plain records are enough for anomaly).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub algorithm: TrainKind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    pub epochs: u32,
    /// Neighbors for knn.
    #[arg(long, default_value_t = DEFAULT_KNN_K)]
    pub knn_k: usize,
    #[arg(long, default_value_t = DEFAULT_K_LOF)]
    pub k_lof: usize,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Landmark NDJSON, or `-` for stdin.
    #[arg(long, default_value = "-")]
    pub input: String,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value = "linear")]
    pub algorithm: Algorithm,
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    pub epochs: u32,
    #[arg(long, default_value_t = DEFAULT_KNN_K)]
    pub knn_k: usize,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    pub epochs: u32,
    #[arg(long, default_value_t = DEFAULT_KNN_K)]
    pub knn_k: usize,
}

#[derive(Debug, Args)]
pub struct RunEdgeArgs {
    /// Landmark NDJSON file, `-` for stdin, or `tcp-listen:<addr>` to accept
    /// one producer connection.
    #[arg(long)]
    pub input: String,
    /// Overrides `cloud_address` from the config.
    #[arg(long)]
    pub cloud: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeCloudArgs {
    /// Overrides `listen` from the config.
    #[arg(long)]
    pub listen: Option<String>,
    /// Snapshot file; its event log is kept at `<snapshot>.events`.
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CloudTarget {
    #[arg(long, default_value_t = format!("127.0.0.1:{}", crate::protocol::DEFAULT_CLOUD_PORT))]
    pub cloud: String,
    /// Must exceed the cloud's distribution timeout for push-model.
    #[arg(long, default_value_t = 10_000)]
    pub timeout_ms: u64,
}

#[derive(Debug, Args)]
pub struct InjectSaleArgs {
    #[command(flatten)]
    pub target: CloudTarget,
    /// NDJSON file of sale events; replaces the single-event flags.
    #[arg(long, conflicts_with_all = ["sku", "quantity", "terminal", "timestamp_ms"])]
    pub file: Option<PathBuf>,
    #[arg(long, required_unless_present = "file")]
    pub sku: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub quantity: u64,
    #[arg(long, default_value = "pos-1")]
    pub terminal: String,
    /// Defaults to now.
    #[arg(long)]
    pub timestamp_ms: Option<u64>,
}

#[derive(Debug, Args)]
pub struct InjectObservationArgs {
    #[command(flatten)]
    pub target: CloudTarget,
    /// NDJSON file of shelf observations; replaces the single-event flags.
    #[arg(long, conflicts_with_all = ["sku", "count", "camera", "timestamp_ms"])]
    pub file: Option<PathBuf>,
    #[arg(long, required_unless_present = "file")]
    pub sku: Option<String>,
    #[arg(long, required_unless_present = "file")]
    pub count: Option<u64>,
    #[arg(long, default_value = "cam-1")]
    pub camera: String,
    #[arg(long)]
    pub timestamp_ms: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PushModelArgs {
    #[command(flatten)]
    pub target: CloudTarget,
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    Scenario,
    Posture,
}

#[derive(Debug, Subcommand)]
pub enum SimulateCommand {
    /// Generate a scenario directory or a labeled posture dataset.
    Gen {
        /// key=value spec; defaults apply to missing keys.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "scenario")]
        kind: GenKind,
    },
    /// Replay a generated scenario and score alerts against ground truth.
    Replay {
        #[arg(long)]
        dir: PathBuf,
        /// Also write the NDJSON summary here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

/// Settings shared by every subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalConfig {
    pub log_level: LevelFilter,
    pub data_dir: PathBuf,
    pub seed: u64,
}

impl GlobalConfig {
    /// Flags win over the config file, which wins over defaults.
    fn resolve(cli: &Cli) -> CliResult<Self> {
        let role_config = matches!(cli.command, Command::RunEdge(_) | Command::ServeCloud(_));
        let kv = match (&cli.config, role_config) {
            (Some(p), false) => {
                let kv = KeyValues::load(p)?;
                kv.deny_unknown(GLOBAL_CONFIG_KEYS, &[])?;
                kv
            }
            _ => KeyValues::default(),
        };
        let data_dir = cli
            .data_dir
            .clone()
            .or_else(|| kv.get("data_dir").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        let cfg = Self {
            log_level: match cli.log_level {
                Some(l) => l,
                None => kv.parsed_or("log_level", LevelFilter::Warn)?,
            },
            seed: match cli.seed {
                Some(s) => s,
                None => kv.parsed_or("seed", DEFAULT_SEED)?,
            },
            data_dir,
        };
        check_writable(&cfg.data_dir)?;
        Ok(cfg)
    }

    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.data_dir.join(p)
        }
    }
}

fn check_writable(dir: &Path) -> CliResult {
    let meta = fs::metadata(dir)
        .map_err(|e| CliError::Input(format!("data dir {}: {e}", dir.display())))?;
    if !meta.is_dir() {
        return Err(CliError::Input(format!(
            "data dir {} is not a directory",
            dir.display()
        )));
    }
    tempfile::tempfile_in(dir)
        .map(|_| ())
        .map_err(|e| CliError::Input(format!("data dir {} is not writable: {e}", dir.display())))
}

/// Parse arguments, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = GlobalConfig::resolve(&cli).and_then(|global| {
        let _ = env_logger::Builder::new()
            .filter_level(global.log_level)
            .format_timestamp_millis()
            .try_init();
        dispatch(cli, &global)
    });
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, g: &GlobalConfig) -> CliResult {
    let config = cli.config;
    match cli.command {
        Command::Train(a) => cmd_train(a, g),
        Command::Predict(a) => cmd_predict(a),
        Command::Cv(a) => cmd_cv(a, g),
        Command::Select(a) => cmd_select(a, g),
        Command::RunEdge(a) => cmd_run_edge(a, config.as_deref()),
        Command::ServeCloud(a) => cmd_serve_cloud(a, config.as_deref(), g),
        Command::InjectSale(a) => cmd_inject_sale(a),
        Command::InjectObservation(a) => cmd_inject_observation(a),
        Command::PushModel(a) => cmd_push_model(a),
        Command::Simulate(SimulateCommand::Gen { spec, out, kind }) => {
            cmd_simulate_gen(spec.as_deref(), &g.path(&out), kind, g)
        }
        Command::Simulate(SimulateCommand::Replay { dir, report }) => {
            cmd_simulate_replay(&dir, report.map(|r| g.path(&r)).as_deref())
        }
    }
}

fn emit(value: &impl Serialize) -> CliResult {
    let line = serde_json::to_string(value).map_err(CliError::internal)?;
    let mut out = io::stdout().lock();
    writeln!(out, "{line}")
        .and_then(|_| out.flush())
        .map_err(CliError::internal)
}

fn open_input(path: &str) -> CliResult<Box<dyn BufRead>> {
    if path == "-" {
        return Ok(Box::new(io::stdin().lock()));
    }
    File::open(path)
        .map(|f| Box::new(BufReader::new(f)) as Box<dyn BufRead>)
        .map_err(|e| CliError::Input(format!("{path}: {e}")))
}

fn load_dataset(path: &Path) -> CliResult<Vec<LabeledExample>> {
    let f = File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let ds = read_labeled_dataset(BufReader::new(f))
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    if ds.is_empty() {
        return Err(CliError::Input(format!(
            "{}: dataset is empty",
            path.display()
        )));
    }
    Ok(ds)
}

/// A landmark record, with or without a label.
fn parse_any_record(line: &str) -> Result<LandmarkFrame, FeatureError> {
    parse_landmark_record(line)
        .or_else(|e| parse_labeled_record(line).map(|(f, _)| f).map_err(|_| e))
}

/// Feature vectors from plain or labeled landmark records.
fn load_vectors(path: &Path) -> CliResult<Vec<FeatureVector>> {
    let f = File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(CliError::internal)?;
        if line.trim().is_empty() {
            continue;
        }
        let frame = parse_any_record(&line)
            .and_then(|f| normalize_landmarks(&f))
            .map_err(|e| CliError::Input(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(frame);
    }
    Ok(out)
}

fn load_model(path: &Path) -> CliResult<Model> {
    let bytes = fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    deserialize_model(&bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write_model(model: &Model, path: &Path) -> CliResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(CliError::internal)?;
    }
    fs::write(path, serialize_model(model))
        .map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
}

fn cmd_train(a: TrainArgs, g: &GlobalConfig) -> CliResult {
    let model = match a.algorithm {
        TrainKind::Linear => {
            let ds = load_dataset(&a.data)?;
            Model::Linear(linear_train_epochs(
                &LinearModel::new(),
                &ds,
                a.epochs,
                g.seed,
            )?)
        }
        TrainKind::Knn => Model::Knn(KnnModel::from_examples(load_dataset(&a.data)?, a.knn_k)?),
        TrainKind::Anomaly => Model::Anomaly(AnomalyModel::new(load_vectors(&a.data)?, a.k_lof)?),
    };
    let out = g.path(&a.out);
    write_model(&model, &out)?;
    info!("wrote {} model to {}", model.kind(), out.display());
    emit(&json!({
        "kind": model.kind(),
        "model_hash": model.hash().to_hex(),
        "path": out.display().to_string(),
    }))
}

fn cmd_predict(a: PredictArgs) -> CliResult {
    let model = load_model(&a.model)?;
    for (i, line) in open_input(&a.input)?.lines().enumerate() {
        let line = line.map_err(CliError::internal)?;
        if line.trim().is_empty() {
            continue;
        }
        let frame =
            parse_any_record(&line).map_err(|e| CliError::Input(format!("line {}: {e}", i + 1)))?;
        let fv = normalize_landmarks(&frame)
            .map_err(|e| CliError::Input(format!("line {}: {e}", i + 1)))?;
        let mut row = json!({"camera_id": frame.camera_id, "frame_seq": frame.frame_seq});
        match &model {
            Model::Linear(m) => {
                let p = m.predict(&fv)?;
                row["label"] = p.label.into();
                row["scores"] = p
                    .scores
                    .into_iter()
                    .map(|(l, s)| (l, s.into()))
                    .collect::<serde_json::Map<_, _>>()
                    .into();
            }
            Model::Knn(m) => {
                let p = m.predict(&fv)?;
                row["label"] = p.label.into();
                row["neighbors"] = p
                    .neighbors
                    .iter()
                    .map(|n| json!({"distance": n.distance, "label": n.label}))
                    .collect();
            }
            Model::Anomaly(m) => row["anomaly_score"] = m.score(&fv).into(),
        }
        emit(&row)?;
    }
    Ok(())
}

fn cv_config(epochs: u32, knn_k: usize) -> CliResult<CvConfig> {
    if epochs == 0 || knn_k == 0 {
        return Err(CliError::Input("epochs and knn-k must be >= 1".into()));
    }
    Ok(CvConfig { epochs, knn_k })
}

fn report_table(r: &AccuracyReport) -> String {
    let mut t = format!("{} ({}-fold, n={})\n", r.algorithm, r.k_folds, r.n_examples);
    t.push_str("fold  size  accuracy\n");
    for (i, (size, acc)) in r.fold_sizes.iter().zip(&r.fold_accuracies).enumerate() {
        t.push_str(&format!("{:>4}  {:>4}  {:.4}\n", i + 1, size, acc));
    }
    t.push_str(&format!("mean        {:.4}\n", r.mean_accuracy));
    t
}

fn cmd_cv(a: CvArgs, g: &GlobalConfig) -> CliResult {
    let ds = load_dataset(&a.data)?;
    let r = cross_validate_with(
        &ds,
        a.k,
        a.algorithm,
        g.seed,
        &cv_config(a.epochs, a.knn_k)?,
    )?;
    eprint!("{}", report_table(&r));
    emit(&r)
}

fn cmd_select(a: SelectArgs, g: &GlobalConfig) -> CliResult {
    let ds = load_dataset(&a.data)?;
    let cfg = cv_config(a.epochs, a.knn_k)?;
    let linear = cross_validate_with(&ds, a.k, Algorithm::Linear, g.seed, &cfg)?;
    let knn = cross_validate_with(&ds, a.k, Algorithm::Knn, g.seed, &cfg)?;
    let chosen = select_best(&linear, &knn)?;
    eprint!("{}{}", report_table(&linear), report_table(&knn));
    eprintln!("selected: {chosen}");
    emit(&linear)?;
    emit(&knn)?;
    emit(&json!({"selected": chosen}))
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn cmd_run_edge(a: RunEdgeArgs, config: Option<&Path>) -> CliResult {
    let path = config.ok_or_else(|| CliError::Input("run-edge needs --config".into()))?;
    let kv = KeyValues::load(path)?;
    let mut cfg = EdgeConfig::from_key_values(&kv)?;
    if let Some(c) = a.cloud {
        cfg.cloud_address = c;
    }
    let base = config_dir(path);
    let store = Arc::new(ModelStore::new());
    for key in ["anomaly_model", "classifier_model"] {
        if let Some(p) = kv.get(key) {
            let model = load_model(&base.join(p))?;
            info!("loaded {} model {}", model.kind(), model.hash());
            store.install(model);
        }
    }
    let source: Box<dyn BufRead> = match a.input.strip_prefix("tcp-listen:") {
        Some(addr) => {
            let listener = TcpListener::bind(addr).map_err(CliError::input)?;
            info!(
                "waiting for a landmark producer on {}",
                listener.local_addr().map_err(CliError::internal)?
            );
            let (stream, peer) = listener.accept().map_err(CliError::internal)?;
            info!("landmark producer {peer} connected");
            Box::new(BufReader::new(stream))
        }
        None => open_input(&a.input)?,
    };
    let connector = TcpConnector::new(
        cfg.cloud_address.clone(),
        cfg.edge_id.clone(),
        store.clone(),
    );
    let mut uplink = Uplink::new(connector, SystemClock::default(), UplinkConfig::default());
    let mut agent = EdgeAgent::new(cfg, store);
    let report =
        run_pipeline(&mut agent, source.lines(), &mut uplink).map_err(CliError::internal)?;
    emit(&report)
}

fn cmd_serve_cloud(a: ServeCloudArgs, config: Option<&Path>, g: &GlobalConfig) -> CliResult {
    let mut cfg = match config {
        Some(p) => CloudConfig::from_key_values(&KeyValues::load(p)?, &config_dir(p))?,
        None => CloudConfig::default(),
    };
    if let Some(l) = a.listen {
        cfg.listen = l;
    }
    let catalog = cfg.load_catalog().map_err(CliError::input)?;
    let snapshot = a.snapshot.map(|s| g.path(&s));
    let core = CloudCore::open(&cfg, catalog, snapshot.as_deref()).map_err(CliError::input)?;
    let server = CloudServer::start(
        &cfg.listen,
        core,
        cfg.dispatcher(),
        ServerConfig {
            distribute_timeout: Duration::from_millis(cfg.distribute_timeout_ms),
            snapshot,
            snapshot_every: cfg.snapshot_every,
        },
    )
    .map_err(|e| CliError::Internal(format!("cannot listen on {}: {e}", cfg.listen)))?;
    emit(&json!({"listening": server.local_addr().to_string()}))?;
    server.wait();
    Ok(())
}

fn read_records<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let f = File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(CliError::internal)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| CliError::Input(format!("{} line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

/// Send, print every reply, and fail with exit 2 if the cloud refused any.
fn inject(target: &CloudTarget, payloads: Vec<Payload>) -> CliResult {
    let replies = send_all(
        &target.cloud,
        payloads,
        Duration::from_millis(target.timeout_ms),
    )
    .map_err(|e| CliError::Internal(format!("cloud {}: {e}", target.cloud)))?;
    let mut refused = 0;
    for env in &replies {
        if let Payload::Error(e) = &env.payload {
            refused += 1;
            eprintln!(
                "cloud refused seq {:?}: {} ({})",
                e.ref_seq, e.message, e.code
            );
        }
        emit(
            &json!({"type": env.msg_type().as_str(), "seq": env.seq, "payload": payload_json(&env.payload)}),
        )?;
    }
    if refused > 0 {
        return Err(CliError::Input(format!("{refused} message(s) refused")));
    }
    Ok(())
}

fn payload_json(p: &Payload) -> serde_json::Value {
    let v = match p {
        Payload::Sale(x) => serde_json::to_value(x),
        Payload::Shelf(x) => serde_json::to_value(x),
        Payload::Suspicion(x) => serde_json::to_value(x),
        Payload::ModelUpdate(x) => serde_json::to_value(x),
        Payload::ModelAck(x) => serde_json::to_value(x),
        Payload::Alert(x) => serde_json::to_value(x),
        Payload::Error(x) => serde_json::to_value(x),
        Payload::DistributionReport(x) => serde_json::to_value(x),
    };
    v.expect("payload serializes")
}

fn cmd_inject_sale(a: InjectSaleArgs) -> CliResult {
    let sales = match &a.file {
        Some(p) => read_records::<SaleEvent>(p)?,
        None => vec![SaleEvent {
            sku: a.sku.clone().expect("required by clap"),
            quantity: a.quantity,
            terminal_id: a.terminal.clone(),
            timestamp_ms: a.timestamp_ms.unwrap_or_else(now_ms),
        }],
    };
    inject(&a.target, sales.into_iter().map(Payload::Sale).collect())
}

fn cmd_inject_observation(a: InjectObservationArgs) -> CliResult {
    let obs = match &a.file {
        Some(p) => read_records::<ShelfObservation>(p)?,
        None => vec![ShelfObservation {
            sku: a.sku.clone().expect("required by clap"),
            observed_count: a.count.expect("required by clap"),
            camera_id: a.camera.clone(),
            timestamp_ms: a.timestamp_ms.unwrap_or_else(now_ms),
        }],
    };
    inject(&a.target, obs.into_iter().map(Payload::Shelf).collect())
}

/// Exit 1 unless every edge acked the pushed hash.
fn cmd_push_model(a: PushModelArgs) -> CliResult {
    let model = load_model(&a.model)?;
    let update = model_update(&model);
    let report = push_model(
        &a.target.cloud,
        update,
        Duration::from_millis(a.target.timeout_ms),
    )
    .map_err(|e| CliError::Internal(format!("cloud {}: {e}", a.target.cloud)))?;
    for e in &report.edges {
        eprintln!("{:<16} {:?}", e.edge_id, e.status);
    }
    emit(&report)?;
    let missed = report
        .edges
        .iter()
        .filter(|e| e.status != crate::protocol::DistributionStatus::Acked)
        .count();
    if missed > 0 {
        return Err(CliError::Internal(format!(
            "{missed} of {} edges did not ack {}",
            report.edges.len(),
            report.model_hash
        )));
    }
    Ok(())
}

fn cmd_simulate_gen(spec: Option<&Path>, out: &Path, kind: GenKind, g: &GlobalConfig) -> CliResult {
    let kv = match spec {
        Some(p) => KeyValues::load(p)?,
        None => KeyValues::default(),
    };
    match kind {
        GenKind::Scenario => {
            let spec = ScenarioSpec::from_key_values(&kv, g.seed)?;
            let scenario = gen_scenario(&spec)?;
            scenario.write_dir(out)?;
            emit(&json!({
                "kind": "scenario",
                "dir": out.display().to_string(),
                "frames": scenario.frames.len(),
                "sales": scenario.sales.len(),
                "observations": scenario.observations.len(),
                "ground_truth": scenario.ground_truth.len(),
            }))
        }
        GenKind::Posture => {
            let spec = PostureDatasetSpec::from_key_values(&kv, g.seed)?;
            let lines = gen_posture_dataset(&spec)?;
            fs::create_dir_all(out).map_err(CliError::internal)?;
            let path = out.join(POSTURE_DATASET_FILE);
            let mut text = lines.join("\n");
            text.push('\n');
            fs::write(&path, text).map_err(CliError::internal)?;
            emit(&json!({
                "kind": "posture",
                "path": path.display().to_string(),
                "examples": lines.len(),
                "classes": spec.classes,
            }))
        }
    }
}

fn cmd_simulate_replay(dir: &Path, report: Option<&Path>) -> CliResult {
    let r = replay_dir(dir)?;
    eprint!("{}", r.table());
    if let Some(p) = report {
        let line = serde_json::to_string(&r).map_err(CliError::internal)?;
        fs::write(p, format!("{line}\n"))
            .map_err(|e| CliError::Internal(format!("{}: {e}", p.display())))?;
    }
    emit(&r)
}
