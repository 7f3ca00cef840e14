//! `evlink` command-line entry point.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use evlink::encode::{encode_stream, write_event_image, Method};
use evlink::event::BinSpec;
use evlink::ingest::imageio::read_intensity;
use evlink::ingest::{
    generate_toy_dataset, read_event_file, simulate_dvs, write_event_file, DatasetManifest,
    IngestError, MotionTrajectory, SimulatorConfig, ToyConfig,
};
use evlink::neural::NeuralError;
use evlink::par::Exec;
use evlink::retrieval::{build_index, evaluate, query_topk, EmbeddingIndex, QueryMode, RetrievalError};
use evlink::train::{fit, Checkpoint, Pool, TrainConfig, TrainError};

#[derive(Parser, Debug)]
#[command(name = "evlink", version, about = "Event-stream / color-image retrieval toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render the procedural toy dataset (streams, images, manifest).
    GenDataset(GenDatasetArgs),
    /// Simulate a DVS recording of a moving still image.
    Simulate(SimulateArgs),
    /// Encode one bin of an event stream into an event image.
    Encode(EncodeArgs),
    /// Train a model on a dataset manifest.
    Train(TrainArgs),
    /// Embed every color image of a dataset into a retrieval index.
    Index(IndexArgs),
    /// Rank indexed images against an event-stream query.
    Query(QueryArgs),
    /// Compute mAP and acc@K with one query per dataset stream.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
struct GenDatasetArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// JSON toy-dataset config (all fields required).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of instances.
    #[arg(long)]
    instances: Option<usize>,
    /// Color images per instance.
    #[arg(long)]
    images: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Motion {
    Circular,
    Linear,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Still image (PNG or PGM).
    #[arg(long = "in")]
    input: PathBuf,
    /// Output EVT file.
    #[arg(long)]
    out: PathBuf,
    /// JSON simulator config (threshold, frame_rate, epsilon).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Accepted for uniformity; the simulator is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    /// Contrast threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// Recording length in µs.
    #[arg(long, default_value_t = 290_000)]
    duration: u64,
    #[arg(long, value_enum, default_value_t = Motion::Circular)]
    motion: Motion,
    /// Circle radius in pixels, or total x displacement for linear motion.
    #[arg(long, default_value_t = 2.0)]
    amplitude: f64,
    /// Circle period in µs.
    #[arg(long, default_value_t = 90_000)]
    period: u64,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    /// Input EVT file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output blob; the JSON sidecar goes to `<out>.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// JSON encoder config (method, tau_e, saturation_cap, output_size).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Index of the complete bin to encode.
    #[arg(long, default_value_t = 0)]
    bin: usize,
    /// Output side length in pixels.
    #[arg(long)]
    size: Option<usize>,
    /// Accepted for uniformity; encoding is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Ablation {
    /// No weight sharing between generators.
    Nws,
    /// No temporal channels.
    Ntc,
    /// No adversarial learning.
    Nal,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset manifest (required).
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Checkpoint stem; writes `<out>.json` and `<out>.bin` (required).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON training config (all fields required); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// Ablation switch; may be repeated.
    #[arg(long, value_enum)]
    ablation: Vec<Ablation>,
    /// Per-epoch JSONL metric log (default `<out>.metrics.jsonl`).
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IndexArgs {
    /// Dataset manifest whose color images form the database.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Index stem; writes `<out>.json` and `<out>.bin`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct QueryArgs {
    /// Query EVT file.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Average the embeddings of all complete bins instead of using the first.
    #[arg(long)]
    mean_bins: bool,
    /// Write the ranking as JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Dataset manifest supplying the queries.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    mean_bins: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

/// Failure classes, one per exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::InvalidConfig(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<NeuralError> for Failure {
    fn from(e: NeuralError) -> Self {
        match e {
            NeuralError::Domain(_) => Failure::Numeric(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(_) => Failure::Usage(e.to_string()),
            TrainError::Divergence { .. } => Failure::Numeric(e.to_string()),
            TrainError::Neural(n) => n.into(),
            TrainError::Ingest(i) => i.into(),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<RetrievalError> for Failure {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::InvalidK => Failure::Usage(e.to_string()),
            RetrievalError::Neural(n) => n.into(),
            RetrievalError::Ingest(i) => i.into(),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<evlink::encode::EncodeError> for Failure {
    fn from(e: evlink::encode::EncodeError) -> Self {
        match e {
            evlink::encode::EncodeError::InvalidConfig(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("invalid config {}: {e}", path.display())))
}

fn write_file(path: &Path, data: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, data).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn log_resolved<T: serde::Serialize>(what: &str, cfg: &T) {
    info!("resolved {what} config: {}", serde_json::to_string(cfg).unwrap_or_default());
}

fn gen_dataset(a: GenDatasetArgs, exec: Exec) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => read_config(p)?,
        None => ToyConfig::new(10, 3, 7),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.instances {
        cfg.num_instances = n;
    }
    if let Some(n) = a.images {
        cfg.images_per_instance = n;
    }
    log_resolved("toy dataset", &cfg);
    fs::create_dir_all(&a.out).map_err(|e| Failure::Data(format!("{}: {e}", a.out.display())))?;
    let m = generate_toy_dataset(&cfg, &a.out, exec)?;
    println!(
        "wrote {} instances, {} images to {}",
        m.num_instances(),
        m.num_images(),
        a.out.display()
    );
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg: SimulatorConfig = match &a.config {
        Some(p) => read_config(p)?,
        None => SimulatorConfig::default(),
    };
    if let Some(c) = a.threshold {
        cfg.threshold = c;
    }
    log_resolved("simulator", &cfg);
    let frame = read_intensity(&a.input, cfg.epsilon)?;
    let traj = match a.motion {
        Motion::Circular => MotionTrajectory::circular(a.duration, a.amplitude, a.period)?,
        Motion::Linear => MotionTrajectory::linear(a.duration, a.amplitude, 0.0)?,
    };
    let stream = simulate_dvs(&frame, &traj, &cfg)?;
    write_file(&a.out, write_event_file(&stream))?;
    println!("wrote {} events to {}", stream.len(), a.out.display());
    Ok(())
}

fn encode(a: EncodeArgs, exec: Exec) -> Result<()> {
    let mut cfg: evlink::encode::EncoderConfig = match &a.config {
        Some(p) => read_config(p)?,
        None => Default::default(),
    };
    if let Some(m) = a.method {
        cfg.method = m;
    }
    if let Some(s) = a.size {
        cfg.output_size = s;
    }
    cfg.check()?;
    log_resolved("encoder", &cfg);
    let stream = read_event_file(&a.input)?;
    let images = encode_stream(&stream, BinSpec::default(), &cfg, true, exec)?;
    let img = images.get(a.bin).ok_or_else(|| {
        Failure::Data(format!(
            "stream has {} complete bins, bin {} requested",
            images.len(),
            a.bin
        ))
    })?;
    let (blob, sidecar) = write_event_image(img);
    write_file(&a.out, blob)?;
    write_file(&sidecar_path(&a.out), sidecar)?;
    println!("wrote {}x{}x{} {} image to {}", img.channels, img.height, img.width, img.method, a.out.display());
    Ok(())
}

fn sidecar_path(out: &Path) -> PathBuf {
    PathBuf::from(format!("{}.json", out.display()))
}

fn train(a: TrainArgs, exec: Exec) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => read_config(p)?,
        None => TrainConfig::toy(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.max_epochs = e;
    }
    if let Some(m) = a.method {
        cfg.encoder.method = m;
    }
    for ab in &a.ablation {
        match ab {
            Ablation::Nws => cfg.ablations.no_weight_sharing = true,
            Ablation::Ntc => cfg.ablations.no_temporal_channels = true,
            Ablation::Nal => cfg.ablations.no_adversarial = true,
        }
    }
    cfg.check()?;
    log_resolved("training", &cfg);
    // checked after the config so a bad config is reported first
    let input = a.input.as_deref().ok_or_else(|| Failure::Usage("--in is required".into()))?;
    let out = a.out.clone().ok_or_else(|| Failure::Usage("--out is required".into()))?;
    let manifest = DatasetManifest::load(input)?;
    let pool = Pool::from_manifest(&manifest, &cfg, exec)?;
    info!(
        "{} instances, {} event images, {} color images",
        pool.num_classes(),
        pool.events.len(),
        pool.colors.len()
    );
    let metrics_path = a
        .metrics
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.metrics.jsonl", out.display())));
    let mut log = fs::File::create(&metrics_path)
        .map_err(|e| Failure::Data(format!("{}: {e}", metrics_path.display())))?;
    let start = Instant::now();
    let mut log_err = None;
    let result = fit(&pool, &cfg, exec, |m| {
        let line = serde_json::json!({
            "epoch": m.epoch,
            "L_dis": m.l_dis,
            "L_id": m.l_id,
            "L_ct": m.l_ct,
            "L": m.total,
            "wall_time_s": start.elapsed().as_secs_f64(),
        });
        if let Err(e) = writeln!(log, "{line}") {
            log_err.get_or_insert(e);
        }
    });
    if let Some(e) = log_err {
        warn!("metric log {}: {e}", metrics_path.display());
    }
    match result {
        Ok(ck) => {
            ck.save(&out)?;
            println!("trained {} epochs; checkpoint {}", ck.epoch, out.display());
            Ok(())
        }
        Err(TrainError::Divergence {
            epoch,
            step,
            reason,
            last_good,
        }) => {
            if let Some(ck) = last_good {
                ck.save(&out)?;
                warn!("saved last finite state (epoch {}) to {}", ck.epoch, out.display());
            }
            Err(Failure::Numeric(format!(
                "training diverged at epoch {epoch}, step {step}: {reason}"
            )))
        }
        Err(e) => Err(e.into()),
    }
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).map_err(|e| Failure::Data(e.to_string()))
}

fn index(a: IndexArgs, exec: Exec) -> Result<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let manifest = DatasetManifest::load(&a.input)?;
    let idx = build_index(&manifest, &ck.model, exec)?;
    idx.save(&a.out)?;
    println!("indexed {} images (d = {}) to {}", idx.len(), idx.dim(), a.out.display());
    Ok(())
}

fn mode(mean_bins: bool) -> QueryMode {
    if mean_bins {
        QueryMode::MeanOfBins
    } else {
        QueryMode::FirstBin
    }
}

fn emit(out: Option<&Path>, json: String) -> Result<()> {
    match out {
        Some(p) => write_file(p, json + "\n"),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn query(a: QueryArgs, exec: Exec) -> Result<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let idx = EmbeddingIndex::load(&a.index)?;
    let stream = read_event_file(&a.input)?;
    let r = query_topk(&idx, &stream, &ck.model, &ck.config, a.k, mode(a.mean_bins), exec)?;
    if r.k_exceeds_index {
        warn!("k = {} exceeds the index size {}; returning all entries", a.k, idx.len());
    }
    emit(a.out.as_deref(), serde_json::to_string_pretty(&r).expect("ranking serializes"))
}

fn evaluate_cmd(a: EvaluateArgs, exec: Exec) -> Result<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let idx = EmbeddingIndex::load(&a.index)?;
    let manifest = DatasetManifest::load(&a.input)?;
    let report = evaluate(&idx, &manifest, &ck.model, &ck.config, mode(a.mean_bins), exec)?;
    info!("mAP {:.4} acc@1 {:.4} acc@3 {:.4}", report.map, report.acc_at_1, report.acc_at_3);
    emit(a.out.as_deref(), report.to_json())
}

fn run(cli: Cli) -> Result<()> {
    let exec = Exec::default();
    match cli.command {
        Command::GenDataset(a) => gen_dataset(a, exec),
        Command::Simulate(a) => simulate(a),
        Command::Encode(a) => encode(a, exec),
        Command::Train(a) => train(a, exec),
        Command::Index(a) => index(a, exec),
        Command::Query(a) => query(a, exec),
        Command::Evaluate(a) => evaluate_cmd(a, exec),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EVLINK_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
