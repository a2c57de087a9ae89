//! Command-line front end. Data goes to files; logs go to stderr.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use capcurate_core::metrics::MetricConfig;
use capcurate_core::{augment, dataset_stats, FilterConfig, DEFAULT_FD_EPS, DEFAULT_IS_SPLITS};
use clap::{Args, Parser, Subcommand};

use crate::cache::ResponseCache;
use crate::client::{InferenceClient, SamplingConfig, ServiceEndpoint, DEFAULT_PROMPT};
use crate::config::{parse_log_level, ConfigFile, GlobalConfig, CACHE_DIR_ENV, TOKEN_ENV};
use crate::embeddings::{write_store_file, EMBEDDING_MAGIC};
use crate::error::{exit, Error, Result};
use crate::pipeline::{self, EvalInputs, MixSpec, SweepSpec};
use crate::report::{metrics_to_json, stats_to_json};

pub const AUDIO_EMBEDDINGS_NAME: &str = "audio.afemb";
pub const CAPTION_EMBEDDINGS_NAME: &str = "captions.afemb";

#[derive(Debug, Parser)]
#[command(name = "capcurate", version, about = "Caption curation and generative-audio evaluation")]
struct Cli {
    /// TOML file with defaults for the global options.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Response cache directory [env: CAPCURATE_CACHE_DIR].
    #[arg(long, global = true, value_name = "DIR")]
    cache_dir: Option<PathBuf>,
    /// Worker threads (default: logical cores). Outputs do not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    workers: Option<u32>,
    #[arg(long, global = true, value_name = "LEVEL")]
    log_level: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic caption candidates for every clip.
    Caption(CaptionArgs),
    /// Embed clips and captions with the joint audio-text model.
    Embed(EmbedArgs),
    /// Attach audio-caption cosine similarities.
    Score(ScoreArgs),
    /// Keep the Top-k captions per clip, then those at or above tau.
    Filter(FilterArgs),
    /// Caption/audio counts over a threshold grid, label histogram, deciles.
    Stats(StatsArgs),
    /// Merge manifests according to a JSON mix spec.
    Mix(MixArgs),
    /// Add synthetic captions to the clips of a real manifest.
    Augment(AugmentArgs),
    /// Filter at every threshold of a grid and summarise.
    Sweep(SweepArgs),
    /// Compute FD, FAD, IS and CLAP score from embedding/probability files.
    Eval(EvalArgs),
    /// Check a manifest against the format invariants.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct ServiceArgs {
    /// Base URL of the inference service.
    #[arg(long)]
    service: Option<String>,
    #[arg(long)]
    timeout_s: Option<f64>,
    #[arg(long)]
    max_retries: Option<u32>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_in_flight: Option<usize>,
}

#[derive(Debug, Args)]
struct CaptionArgs {
    /// Input manifest (.afm.jsonl).
    manifest: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    #[command(flatten)]
    service: ServiceArgs,
    #[arg(long, default_value = DEFAULT_PROMPT)]
    prompt: String,
    /// Candidates per clip.
    #[arg(long = "n", default_value_t = 20)]
    n_captions: usize,
    #[arg(long, default_value_t = 50)]
    top_k: u32,
    #[arg(long, default_value_t = 0.95)]
    top_p: f64,
    /// Forwarded to the service; unset means unseeded sampling.
    #[arg(long)]
    sampling_seed: Option<i64>,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    /// Input manifest (.afm.jsonl).
    manifest: PathBuf,
    /// Receives audio.afemb and captions.afemb.
    #[arg(short = 'o', long)]
    out_dir: PathBuf,
    #[command(flatten)]
    service: ServiceArgs,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// Input manifest (.afm.jsonl).
    manifest: PathBuf,
    #[arg(long)]
    audio_emb: PathBuf,
    #[arg(long)]
    text_emb: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
}

fn parse_tau(s: &str) -> std::result::Result<f64, String> {
    let tau: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !(-1.0..=1.0).contains(&tau) {
        return Err(format!("tau must be within [-1, 1], got {s}"));
    }
    Ok(tau)
}

/// Comma-separated thresholds.
#[derive(Debug, Clone)]
struct TauGrid(Vec<f64>);

fn parse_grid(s: &str) -> std::result::Result<TauGrid, String> {
    s.split(',').map(|t| parse_tau(t.trim())).collect::<std::result::Result<_, _>>().map(TauGrid)
}

#[derive(Debug, Args)]
struct FilterArgs {
    /// Input manifest (.afm.jsonl).
    manifest: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value = "0.35", value_parser = parse_tau, allow_negative_numbers = true)]
    tau: f64,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    top_k: u64,
    /// Keep clips left with no caption.
    #[arg(long)]
    keep_empty: bool,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Input manifest (.afm.jsonl).
    manifest: PathBuf,
    /// Comma-separated thresholds.
    #[arg(long = "grid", alias = "tau-grid", default_value = "0.35,0.4,0.45,0.5", value_parser = parse_grid, allow_hyphen_values = true)]
    tau_grid: TauGrid,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    top_k: u64,
    #[arg(short, long, default_value = "stats.json")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MixArgs {
    /// JSON mix spec.
    spec: PathBuf,
    /// Output manifest; the weights sidecar is written next to it.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    real: PathBuf,
    synthetic: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Input manifest (.afm.jsonl).
    manifest: PathBuf,
    /// JSON sweep spec; the flags below are used when absent.
    #[arg(long, conflicts_with_all = ["tau_grid", "top_k", "out_dir"])]
    spec: Option<PathBuf>,
    #[arg(long = "grid", alias = "tau-grid", value_parser = parse_grid, allow_hyphen_values = true)]
    tau_grid: Option<TauGrid>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    top_k: Option<u64>,
    #[arg(short = 'o', long, required_unless_present = "spec")]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    metric: MetricArgs,
}

#[derive(Debug, Args)]
struct MetricArgs {
    #[arg(long, default_value_t = DEFAULT_FD_EPS)]
    fd_eps: f64,
    #[arg(long, default_value_t = DEFAULT_IS_SPLITS, value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
    is_splits: usize,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    gen: Option<PathBuf>,
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    #[arg(long)]
    gen_fad: Option<PathBuf>,
    #[arg(long)]
    ref_fad: Option<PathBuf>,
    #[arg(long)]
    probs: Option<PathBuf>,
    #[arg(long)]
    clap_audio: Option<PathBuf>,
    #[arg(long)]
    clap_text: Option<PathBuf>,
    #[command(flatten)]
    metric: MetricArgs,
    #[arg(short, long, default_value = "eval.json")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Input manifest (.afm.jsonl).
    manifest: PathBuf,
}

/// Runs the CLI on `argv` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    let env_cache = std::env::var_os(CACHE_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from);
    let cfg = match global_config(&cli, env_cache) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(cfg.log_level)
        .format_timestamp(None)
        .try_init();
    log::set_max_level(cfg.log_level);

    match dispatch(cli.command, &cfg) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn global_config(cli: &Cli, env_cache: Option<PathBuf>) -> Result<GlobalConfig> {
    let file = cli.config.as_deref().map(ConfigFile::load).transpose()?;
    let mut cfg = GlobalConfig::resolve(file, env_cache)?;
    if let Some(dir) = &cli.cache_dir {
        cfg.cache_dir = Some(dir.clone());
    }
    if let Some(w) = cli.workers {
        cfg.workers = w as usize;
    }
    if let Some(level) = &cli.log_level {
        cfg.log_level = parse_log_level(level)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn dispatch(command: Command, cfg: &GlobalConfig) -> Result<()> {
    let pool = pipeline::thread_pool(cfg.workers)?;
    pool.install(|| match command {
        Command::Caption(a) => caption(a, cfg),
        Command::Embed(a) => embed(a, cfg),
        Command::Score(a) => score(a, cfg),
        Command::Filter(a) => filter(a, cfg),
        Command::Stats(a) => stats(a),
        Command::Mix(a) => mix(a, cfg),
        Command::Augment(a) => augment_cmd(a, cfg),
        Command::Sweep(a) => sweep(a, cfg),
        Command::Eval(a) => eval(a, cfg),
        Command::Validate(a) => validate(a),
    })
}

fn client(args: &ServiceArgs, cfg: &GlobalConfig) -> Result<InferenceClient> {
    let url = args
        .service
        .clone()
        .or_else(|| cfg.service_url.clone())
        .ok_or_else(|| Error::Usage("--service URL is required".into()))?;
    let mut endpoint = ServiceEndpoint::new(url);
    if let Some(t) = args.timeout_s.or(cfg.timeout_s) {
        endpoint.timeout_s = t;
    }
    if let Some(r) = args.max_retries.or(cfg.max_retries) {
        endpoint.max_retries = r;
    }
    if let Some(b) = args.batch_size.or(cfg.batch_size) {
        endpoint.batch_size = b;
    }
    if let Some(m) = args.max_in_flight.or(cfg.max_in_flight) {
        endpoint.max_in_flight = m;
    }
    endpoint.bearer_token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
    endpoint.validate().map_err(|e| Error::Usage(e.to_string()))?;
    let cache = cfg.cache_dir.as_ref().map(ResponseCache::new);
    let client = InferenceClient::http(endpoint, cache).map_err(|e| Error::Usage(e.to_string()))?;
    Ok(client.with_jitter_seed(cfg.seed))
}

fn caption(a: CaptionArgs, cfg: &GlobalConfig) -> Result<()> {
    let sampling = SamplingConfig {
        n_captions: a.n_captions,
        top_k: a.top_k,
        top_p: a.top_p,
        prompt: a.prompt.clone(),
        seed: a.sampling_seed,
    };
    sampling.validate().map_err(|e| Error::Usage(e.to_string()))?;
    let client = client(&a.service, cfg)?;
    let m = pipeline::load_manifest(&a.manifest)?;
    log::info!("captioning {} clips", m.len());
    let mut out = pipeline::caption_manifest(&m, &client, &sampling)?;
    stamp_seed(&mut out, cfg);
    pipeline::save_manifest(&a.out, &out)?;
    log::info!(
        "wrote {} captions to {} ({} requests)",
        out.caption_count(),
        a.out.display(),
        client.request_count()
    );
    Ok(())
}

fn embed(a: EmbedArgs, cfg: &GlobalConfig) -> Result<()> {
    let client = client(&a.service, cfg)?;
    let m = pipeline::load_manifest(&a.manifest)?;
    if m.is_empty() {
        return Err(Error::Usage(format!("{}: no clips to embed", a.manifest.display())));
    }
    let (audio, text) = pipeline::embed_manifest(&m, &client)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    for (name, store) in [(AUDIO_EMBEDDINGS_NAME, &audio), (CAPTION_EMBEDDINGS_NAME, &text)] {
        let path = a.out_dir.join(name);
        write_store_file(&path, store, EMBEDDING_MAGIC).map_err(|e| Error::io(&path, e))?;
    }
    log::info!(
        "embedded {} clips and {} captions (dim {})",
        audio.len(),
        text.len(),
        audio.dim()
    );
    Ok(())
}

fn score(a: ScoreArgs, cfg: &GlobalConfig) -> Result<()> {
    let m = pipeline::load_manifest(&a.manifest)?;
    let audio = pipeline::load_store(&a.audio_emb)?;
    let text = pipeline::load_store(&a.text_emb)?;
    let mut out = pipeline::score_manifest(&m, &audio, &text).map_err(|e| match e {
        Error::MissingEmbedding { store, key } => {
            let path = if store == "audio" { &a.audio_emb } else { &a.text_emb };
            Error::Spec {
                path: path.clone(),
                reason: format!("no embedding for key {key:?}"),
            }
        }
        other => other,
    })?;
    stamp_seed(&mut out, cfg);
    pipeline::save_manifest(&a.out, &out)
}

fn filter(a: FilterArgs, cfg: &GlobalConfig) -> Result<()> {
    let mut fc = FilterConfig::new(a.tau, a.top_k as usize).map_err(|e| Error::Usage(e.to_string()))?;
    fc.drop_empty = !a.keep_empty;
    let m = pipeline::load_manifest(&a.manifest)?;
    let mut out = pipeline::filter_manifest(&m, &fc)?;
    stamp_seed(&mut out, cfg);
    pipeline::save_manifest(&a.out, &out)?;
    log::info!(
        "kept {} captions over {} clips (of {} / {})",
        out.caption_count(),
        out.len(),
        m.caption_count(),
        m.len()
    );
    Ok(())
}

fn stats(a: StatsArgs) -> Result<()> {
    capcurate_core::mixer::validate_grid(&a.tau_grid.0).map_err(|e| Error::Usage(e.to_string()))?;
    let m = pipeline::load_manifest(&a.manifest)?;
    let report = dataset_stats(&m, &a.tau_grid.0, a.top_k as usize);
    write_text(&a.out, &stats_to_json(&report))?;
    log::info!("{} captions over {} clips\n{}", m.caption_count(), m.len(), report.render_table());
    Ok(())
}

fn mix(a: MixArgs, cfg: &GlobalConfig) -> Result<()> {
    let spec = MixSpec::load(&a.spec)?;
    let (mut merged, weights) = pipeline::run_mix(&spec)?;
    stamp_seed(&mut merged, cfg);
    pipeline::save_manifest(&a.out, &merged)?;
    write_text(
        &pipeline::weights_sidecar_path(&a.out),
        &pipeline::weights_to_json(&weights),
    )?;
    log::info!("mixed {} sources into {} clips", spec.sources.len(), merged.len());
    Ok(())
}

fn augment_cmd(a: AugmentArgs, cfg: &GlobalConfig) -> Result<()> {
    let real = pipeline::load_manifest(&a.real)?;
    let synthetic = pipeline::load_manifest(&a.synthetic)?;
    let mut out = augment(&real, &synthetic);
    stamp_seed(&mut out, cfg);
    pipeline::save_manifest(&a.out, &out)
}

fn metric_config(m: &MetricArgs, cfg: &GlobalConfig) -> Result<MetricConfig> {
    if !(m.fd_eps.is_finite() && m.fd_eps >= 0.0) {
        return Err(Error::Usage("--fd-eps must be a non-negative number".into()));
    }
    Ok(MetricConfig {
        fd_eps: m.fd_eps,
        is_splits: m.is_splits,
        seed: cfg.seed,
    })
}

fn sweep(a: SweepArgs, cfg: &GlobalConfig) -> Result<()> {
    let spec = match &a.spec {
        Some(path) => SweepSpec::load(path)?,
        None => {
            let mut spec = SweepSpec::new(a.out_dir.clone().expect("required by clap"));
            if let Some(grid) = a.tau_grid.clone() {
                spec.tau_grid = grid.0;
            }
            if let Some(k) = a.top_k {
                spec.top_k = k as usize;
            }
            spec
        }
    };
    let m = pipeline::load_manifest(&a.manifest)?;
    let report = pipeline::run_sweep(&m, &spec, metric_config(&a.metric, cfg)?, cfg.seed)?;
    for ((tau, c), n) in report.grid.iter().zip(&report.captions).zip(&report.audios) {
        log::info!("tau {tau}: {c} captions, {n} audios");
    }
    Ok(())
}

fn eval(a: EvalArgs, cfg: &GlobalConfig) -> Result<()> {
    let inputs = EvalInputs {
        gen: a.gen,
        reference: a.reference,
        gen_fad: a.gen_fad,
        ref_fad: a.ref_fad,
        probs: a.probs,
        clap_audio: a.clap_audio,
        clap_text: a.clap_text,
    };
    let report = pipeline::evaluate(&inputs, metric_config(&a.metric, cfg)?)?;
    write_text(&a.out, &metrics_to_json(&report))
}

fn validate(a: ValidateArgs) -> Result<()> {
    // Parsing canonicalizes, so the raw lines are checked separately for
    // ordering problems the parser would silently fix.
    let m = pipeline::load_manifest(&a.manifest)?;
    let raw = std::fs::read(&a.manifest).map_err(|e| Error::io(&a.manifest, e))?;
    if raw != crate::manifest_io::manifest_to_bytes(&m) {
        return Err(Error::Spec {
            path: a.manifest.clone(),
            reason: "not in canonical form (entry/caption order or number formatting)".into(),
        });
    }
    let violations = m.validate();
    if let Some(v) = violations.first() {
        for v in &violations {
            log::error!("{}: {v}", a.manifest.display());
        }
        return Err(Error::Spec {
            path: a.manifest.clone(),
            reason: format!("{} violation(s), first: {v}", violations.len()),
        });
    }
    log::info!("{}: ok ({} clips, {} captions)", a.manifest.display(), m.len(), m.caption_count());
    Ok(())
}

/// The run seed goes into every manifest written, so outputs record the
/// randomness they were produced under.
fn stamp_seed(m: &mut capcurate_core::DatasetManifest, cfg: &GlobalConfig) {
    m.metadata.insert("seed".into(), cfg.seed.to_string());
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    crate::fsutil::write_atomically(path, |f| std::io::Write::write_all(f, text.as_bytes()))
        .map_err(|e| Error::io(path, e))
}
