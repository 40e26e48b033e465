//! Subcommands behind the `browselog` binary.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use browselog_collector::{Collector, CollectorConfig, CollectorError};
use browselog_core::event::EventRecord;
use browselog_core::navigation::RootPolicy;
use browselog_core::reconstruct::{
    reconstruct_all, Imputation, ReconstructionConfig, SessionTimeline, DEFAULT_DEBOUNCE_MS, DEFAULT_IMPLICIT_GAP_MS,
    DEFAULT_INACTIVITY_BACKDATE_MS,
};
use browselog_core::report::{build_report, write_report, ReportOptions, DEFAULT_THRESHOLDS};
use browselog_core::simulator::{generate, inject_faults, ScenarioConfig, SimError};
use browselog_core::store::{read_dataset, write_dataset, EventFilter, EventStore, StoreError};
use browselog_core::url_privacy::{decompose, digest, sha1_hex, UrlError, UrlLevel};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Collector(#[from] CollectorError),
    #[error(transparent)]
    Url(#[from] UrlError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_owned(), source }
}

#[derive(Debug, Parser)]
#[command(name = "browselog", version, about = "Privacy-preserving browsing telemetry pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP collector.
    Serve(ServeArgs),
    /// Generate a synthetic event corpus and its ground truth.
    Simulate(SimulateArgs),
    /// Rebuild per-session timelines from a JSONL dataset.
    Reconstruct(ReconstructArgs),
    /// Run analyses and write report.json plus CSV tables.
    Report(ReportArgs),
    /// Print the four URL levels and their SHA-1 digests.
    HashUrl(HashUrlArgs),
    /// Copy events from a collector data directory into a JSONL dataset.
    Export(ExportArgs),
    /// Append a JSONL dataset to a collector data directory.
    Import(ImportArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    #[arg(long, env = "BROWSELOG_DATA_DIR")]
    pub data_dir: PathBuf,
    /// Require this value in the x-browselog-token header.
    #[arg(long, env = "BROWSELOG_TOKEN")]
    pub token: Option<String>,
    #[arg(long)]
    pub fsync: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario TOML; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub users: Option<u32>,
    #[arg(long)]
    pub sessions: Option<u32>,
    #[arg(long)]
    pub drop_end_prob: Option<f64>,
    #[arg(long)]
    pub drop_event_prob: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImputeArg {
    Filter,
    Estimate,
}

#[derive(Debug, Clone, Args)]
pub struct ReconstructionArgs {
    #[arg(long, value_enum, default_value_t = ImputeArg::Estimate)]
    pub impute: ImputeArg,
    /// Added to the last recorded event when estimating a missing end.
    #[arg(long, default_value_t = 0)]
    pub offset_ms: i64,
    #[arg(long, default_value_t = DEFAULT_DEBOUNCE_MS)]
    pub debounce_ms: i64,
    #[arg(long, default_value_t = DEFAULT_INACTIVITY_BACKDATE_MS)]
    pub backdate_ms: i64,
    #[arg(long, default_value_t = DEFAULT_IMPLICIT_GAP_MS)]
    pub idle_ms: i64,
}

impl ReconstructionArgs {
    pub fn config(&self) -> Result<ReconstructionConfig, CliError> {
        for (name, v) in [("debounce-ms", self.debounce_ms), ("backdate-ms", self.backdate_ms), ("idle-ms", self.idle_ms)] {
            if v < 0 {
                return Err(CliError::Usage(format!("--{name} must not be negative")));
            }
        }
        Ok(ReconstructionConfig {
            debounce_ms: self.debounce_ms,
            inactivity_backdate_ms: self.backdate_ms,
            implicit_gap_ms: self.idle_ms,
            imputation: match self.impute {
                ImputeArg::Filter => Imputation::Filter,
                ImputeArg::Estimate => Imputation::Estimate { offset_ms: self.offset_ms },
            },
        })
    }
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Defaults to the input directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub recon: ReconstructionArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RootArg {
    Auto,
    Always,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub time_accounting: bool,
    #[arg(long, default_value = "domain", value_parser = parse_level)]
    pub level: UrlLevel,
    #[arg(long)]
    pub parallel: bool,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_THRESHOLDS)]
    pub thresholds: Vec<u32>,
    #[arg(long)]
    pub inactivity: bool,
    #[arg(long)]
    pub causes: bool,
    #[arg(long)]
    pub tree_metrics: bool,
    #[arg(long, value_enum, default_value_t = RootArg::Auto)]
    pub root: RootArg,
    #[command(flatten)]
    pub recon: ReconstructionArgs,
}

fn parse_level(s: &str) -> Result<UrlLevel, String> {
    s.parse()
}

impl ReportArgs {
    /// No analysis flag selects all of them.
    pub fn options(&self) -> ReportOptions {
        let any = self.time_accounting || self.parallel || self.inactivity || self.causes || self.tree_metrics;
        ReportOptions {
            time_accounting: (!any || self.time_accounting).then_some(self.level),
            parallel: !any || self.parallel,
            thresholds: self.thresholds.clone(),
            inactivity: !any || self.inactivity,
            causes: !any || self.causes,
            tree_metrics: !any || self.tree_metrics,
            root_policy: match self.root {
                RootArg::Auto => RootPolicy::Auto,
                RootArg::Always => RootPolicy::Always,
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct HashUrlArgs {
    pub url: String,
    /// Emit JSON instead of one line per level.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long, env = "BROWSELOG_DATA_DIR")]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub user: Option<u64>,
    #[arg(long, requires = "user")]
    pub session: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long, env = "BROWSELOG_DATA_DIR")]
    pub data_dir: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
}

/// Written next to every output: what produced the directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-1 of the effective configuration as JSON.
    pub config_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub version: String,
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, config: &C, seed: Option<u64>, inputs: &[&Path], outputs: &[PathBuf]) -> Self {
        let json = serde_json::to_string(config).expect("config serializes");
        RunManifest {
            command: command.to_owned(),
            config_digest: sha1_hex(json.as_bytes()),
            seed,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: outputs.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect(),
            version: VERSION.to_owned(),
        }
    }

    pub fn file_name(&self) -> String {
        format!("{}.manifest.json", self.command)
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(self.file_name());
        write_json(&path, self)?;
        Ok(path)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("value serializes") + "\n";
    std::fs::write(path, text).map_err(io_err(path))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

pub const TIMELINES_FILE: &str = "timelines.jsonl";
pub const TRUTH_FILE: &str = "truth.json";
pub const FAULTS_FILE: &str = "faults.json";

/// Loads a dataset and reconstructs every session in it. Sessions that
/// cannot be rebuilt are reported on stderr and skipped.
pub fn load_timelines(dir: &Path, cfg: &ReconstructionConfig) -> Result<Vec<SessionTimeline>, CliError> {
    let events: Vec<EventRecord> = read_dataset(dir)?.into_iter().flatten().collect();
    let (timelines, failed) = reconstruct_all(&events, cfg);
    for ((u, s), e) in failed {
        eprintln!("warning: user {u} session {s} skipped: {e}");
    }
    Ok(timelines)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Serve(a) => serve(a),
        Command::Simulate(a) => simulate(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Report(a) => report(a),
        Command::HashUrl(a) => hash_url(a, &mut std::io::stdout().lock()),
        Command::Export(a) => export(a),
        Command::Import(a) => import(a),
    }
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    create_dir(&a.data_dir)?;
    let collector = Collector::open_dir(&a.data_dir, CollectorConfig { token: a.token, fsync: a.fsync })?;
    let runtime = tokio::runtime::Runtime::new().map_err(io_err(&a.data_dir))?;
    eprintln!("listening on http://{} (data in {})", a.listen, a.data_dir.display());
    runtime.block_on(browselog_collector::bind_and_serve(a.listen, Arc::new(collector))).map_err(|source| CliError::Io {
        path: PathBuf::from(a.listen.to_string()),
        source,
    })
}

fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let mut cfg = match &a.config {
        Some(p) => ScenarioConfig::from_toml(&std::fs::read_to_string(p).map_err(io_err(p))?)?,
        None => ScenarioConfig::default(),
    };
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.users {
        cfg.users = v;
    }
    if let Some(v) = a.sessions {
        cfg.sessions_per_user = v;
    }
    if let Some(v) = a.drop_end_prob {
        cfg.faults.drop_session_end_prob = v;
    }
    if let Some(v) = a.drop_event_prob {
        cfg.faults.drop_random_event_prob = v;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let sim = generate(&cfg)?;
    let (events, faults) = inject_faults(&sim.events, &cfg.faults, cfg.seed);
    create_dir(&a.out)?;
    write_dataset(&a.out, &events)?;
    let mut outputs: Vec<PathBuf> =
        browselog_core::event::Family::ALL.iter().map(|f| a.out.join(f.file_name())).collect();
    for (name, value) in [
        (TRUTH_FILE, serde_json::to_value(&sim.truth).expect("truth serializes")),
        (FAULTS_FILE, serde_json::to_value(&faults).expect("report serializes")),
    ] {
        let p = a.out.join(name);
        write_json(&p, &value)?;
        outputs.push(p);
    }
    let inputs: Vec<&Path> = a.config.iter().map(PathBuf::as_path).collect();
    RunManifest::new("simulate", &cfg, Some(cfg.seed), &inputs, &outputs).write(&a.out)?;
    eprintln!("{} events in {} sessions written to {}", events.len(), sim.truth.sessions.len(), a.out.display());
    Ok(())
}

fn reconstruct(a: ReconstructArgs) -> Result<(), CliError> {
    let cfg = a.recon.config()?;
    let timelines = load_timelines(&a.input, &cfg)?;
    let out = a.out.clone().unwrap_or_else(|| a.input.clone());
    create_dir(&out)?;
    let path = out.join(TIMELINES_FILE);
    let mut text = String::new();
    for t in &timelines {
        text.push_str(&serde_json::to_string(t).expect("timeline serializes"));
        text.push('\n');
    }
    std::fs::write(&path, text).map_err(io_err(&path))?;
    RunManifest::new("reconstruct", &cfg, None, &[&a.input], &[path]).write(&out)?;
    let excluded = timelines.iter().filter(|t| t.is_excluded()).count();
    eprintln!("{} sessions reconstructed ({excluded} excluded)", timelines.len());
    Ok(())
}

#[derive(Serialize)]
struct ReportConfig<'a> {
    reconstruction: &'a ReconstructionConfig,
    report: &'a ReportOptions,
}

fn report(a: ReportArgs) -> Result<(), CliError> {
    let cfg = a.recon.config()?;
    if a.thresholds.is_empty() || a.thresholds.contains(&0) {
        return Err(CliError::Usage("--thresholds needs positive values".into()));
    }
    let opts = a.options();
    let timelines = load_timelines(&a.input, &cfg)?;
    let report = build_report(&timelines, &opts);
    let out = a.out.clone().unwrap_or_else(|| a.input.clone());
    let paths = write_report(&out, &report).map_err(io_err(&out))?;
    let rc = ReportConfig { reconstruction: &cfg, report: &opts };
    RunManifest::new("report", &rc, None, &[&a.input], &paths).write(&out)?;
    Ok(())
}

#[derive(Serialize)]
struct HashedLevel<'a> {
    level: UrlLevel,
    value: &'a str,
    sha1: &'a str,
}

pub fn hash_url(a: HashUrlArgs, out: &mut impl std::io::Write) -> Result<(), CliError> {
    let levels = decompose(&a.url)?;
    let d = digest(&levels);
    let plain = [&levels.domain, &levels.subdomain, &levels.path, &levels.full];
    let rows: Vec<HashedLevel> = UrlLevel::ALL
        .iter()
        .zip(plain)
        .map(|(&level, value)| HashedLevel { level, value, sha1: d.get(level) })
        .collect();
    let text = if a.json {
        serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n"
    } else {
        rows.iter().map(|r| format!("{:<10}{}  {}\n", r.level.as_str(), r.sha1, r.value)).collect()
    };
    out.write_all(text.as_bytes()).map_err(io_err(Path::new("stdout")))
}

fn export(a: ExportArgs) -> Result<(), CliError> {
    if !a.data_dir.is_dir() {
        return Err(CliError::Usage(format!("data directory {} does not exist", a.data_dir.display())));
    }
    let store = EventStore::open_dir(&a.data_dir)?;
    let filter = EventFilter { user_id: a.user, session_id: a.session, ..EventFilter::all() };
    let events = store.query(&filter)?;
    create_dir(&a.out)?;
    write_dataset(&a.out, &events)?;
    eprintln!("{} events exported to {}", events.len(), a.out.display());
    Ok(())
}

fn import(a: ImportArgs) -> Result<(), CliError> {
    create_dir(&a.data_dir)?;
    let store = EventStore::open_dir(&a.data_dir)?;
    let n = store.import(&a.input)?;
    eprintln!("{n} events imported into {}", a.data_dir.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("browselog").chain(args.iter().copied())).unwrap()
    }

    fn report_args(args: &[&str]) -> ReportArgs {
        match parse(&[&["report", "--in", "d"], args].concat()).command {
            Command::Report(a) => a,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn no_analysis_flag_selects_everything() {
        let o = report_args(&[]).options();
        assert_eq!(o, ReportOptions::default());
        let o = report_args(&["--tree-metrics", "--level", "path"]).options();
        assert!(o.tree_metrics && !o.parallel && !o.causes && !o.inactivity && o.time_accounting.is_none());
        let o = report_args(&["--time-accounting", "--level", "path", "--thresholds", "2,3"]).options();
        assert_eq!((o.time_accounting, o.thresholds), (Some(UrlLevel::Path), vec![2, 3]));
    }

    #[test]
    fn reconstruction_flags_default_to_the_standard_values() {
        let a = report_args(&[]);
        assert_eq!(a.recon.config().unwrap(), ReconstructionConfig::default());
        let a = report_args(&["--impute", "filter", "--idle-ms", "30000"]);
        let c = a.recon.config().unwrap();
        assert_eq!((c.imputation, c.implicit_gap_ms), (Imputation::Filter, 30_000));
    }

    #[test]
    fn manifest_digest_tracks_config() {
        let a = RunManifest::new("report", &ReconstructionConfig::default(), None, &[Path::new("in")], &[]);
        let b = RunManifest::new("report", &ReconstructionConfig { debounce_ms: 1, ..Default::default() }, None, &[], &[]);
        assert_ne!(a.config_digest, b.config_digest);
        assert_eq!(a.file_name(), "report.manifest.json");
        assert_eq!(a.inputs, vec!["in"]);
    }

    #[test]
    fn hash_url_text_layout() {
        let mut out = Vec::new();
        hash_url(HashUrlArgs { url: "http://example.org/".into(), json: false }, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("domain    "));
    }
}
