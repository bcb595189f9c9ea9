//! Config loading, scenario dispatch and artifact emission behind the
//! `neurogrid` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use neurogrid::scenarios::{run_scenario, RunOptions, ScenarioConfig, ScenarioId, ScenarioOutcome};
use neurogrid::trace::{fmt_sig9, TRACE_HEADER};
use neurogrid::SystemConfig;

pub const TRACE_FILE: &str = "trace.csv";
pub const SPIKES_FILE: &str = "spikes.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CORRELATION_FILE: &str = "correlation.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Parser)]
#[command(
    name = "neurogrid",
    version,
    about = "DC-microgrid simulator with a spiking secondary controller"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write trace, spikes, metrics and a manifest.
    Simulate(SimulateArgs),
    /// Load and validate a configuration file.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: ScenarioId,
    /// Configuration file; absent keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Record every N-th integration step.
    #[arg(long, default_value_t = 20)]
    pub decimation: usize,
    /// Printed error sign, no deadband, literal STDP exponent.
    #[arg(long)]
    pub strict_literal: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_scenario(s: &str) -> std::result::Result<ScenarioId, String> {
    s.parse::<ScenarioId>().map_err(|e| e.to_string())
}

/// Why a command failed, mapped onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad configuration, arguments or I/O: exit 1.
    Invalid(anyhow::Error),
    /// The run left the guarded region: exit 2. Artifacts are still written.
    Diverged { time: f64, detail: String },
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Diverged { .. } => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Invalid(e) => write!(f, "{e:#}"),
            Failure::Diverged { time, detail } => write!(f, "numerical divergence at t = {time:.6} s: {detail}"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Invalid(e)
    }
}

/// Parses and validates a TOML configuration document.
pub fn parse_config(text: &str) -> Result<SystemConfig> {
    let cfg: SystemConfig = toml::from_str(text).context("cannot parse configuration")?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<SystemConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in {}", path.display()))
}

/// TOML form of a configuration; [`parse_config`] reads it back unchanged.
pub fn emit_config(cfg: &SystemConfig) -> Result<String> {
    toml::to_string(cfg).context("cannot serialize configuration")
}

/// Run parameters recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: String,
    pub decimation: usize,
    pub strict_literal: bool,
    pub seed: u64,
    pub version: String,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

/// Everything needed to repeat a run and check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run: RunRecord,
    pub files: Vec<FileDigest>,
    pub config: SystemConfig,
}

impl Manifest {
    pub fn digest(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|f| f.name == name).map(|f| f.sha256.as_str())
    }

    /// Arguments that reproduce the run, given the echoed config saved to `config`.
    pub fn simulate_args(&self, config: PathBuf, out: PathBuf) -> Result<SimulateArgs> {
        Ok(SimulateArgs {
            scenario: parse_scenario(&self.run.scenario).map_err(anyhow::Error::msg)?,
            config: Some(config),
            out,
            decimation: self.run.decimation,
            strict_literal: self.run.strict_literal,
            seed: self.run.seed,
        })
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().context("cannot flush csv buffer")
}

pub fn trace_csv(outcome: &ScenarioOutcome) -> Result<Vec<u8>> {
    csv_bytes(&TRACE_HEADER, outcome.trace.rows.iter().map(|r| r.fields().to_vec()))
}

pub fn spikes_csv(outcome: &ScenarioOutcome) -> Result<Vec<u8>> {
    csv_bytes(
        &["t", "der_id", "channel"],
        outcome
            .spikes
            .iter()
            .map(|s| vec![fmt_sig9(s.t), s.der_id.to_string(), s.channel.to_string()]),
    )
}

pub fn metrics_csv(outcome: &ScenarioOutcome) -> Result<Vec<u8>> {
    csv_bytes(
        &["name", "value"],
        outcome
            .metrics
            .rows()
            .into_iter()
            .map(|(k, v)| vec![k.to_string(), fmt_sig9(v)]),
    )
}

pub fn correlation_csv(outcome: &ScenarioOutcome) -> Result<Vec<u8>> {
    let opt = |v: Option<f64>| v.map(fmt_sig9).unwrap_or_default();
    csv_bytes(
        &["window_start", "window_end", "c_in", "c_out", "mu", "skipped"],
        outcome.correlation.iter().map(|c| {
            vec![
                fmt_sig9(c.window_start),
                fmt_sig9(c.window_end),
                fmt_sig9(c.c_in),
                fmt_sig9(c.c_out),
                opt(c.mu),
                u8::from(c.skipped).to_string(),
            ]
        }),
    )
}

/// Writes every artifact of `outcome` into `dir` and returns the manifest.
pub fn write_artifacts(
    dir: &Path,
    outcome: &ScenarioOutcome,
    cfg: &SystemConfig,
    args: &SimulateArgs,
) -> Result<Manifest> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut files = vec![
        (TRACE_FILE, trace_csv(outcome)?),
        (SPIKES_FILE, spikes_csv(outcome)?),
        (METRICS_FILE, metrics_csv(outcome)?),
    ];
    if outcome.scenario.id == ScenarioId::CorrelationSweep {
        files.push((CORRELATION_FILE, correlation_csv(outcome)?));
    }
    let mut digests = Vec::new();
    for (name, bytes) in &files {
        let path = dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        digests.push(FileDigest {
            name: name.to_string(),
            sha256: sha256_hex(bytes),
        });
    }
    let manifest = Manifest {
        run: RunRecord {
            scenario: args.scenario.as_str().to_string(),
            decimation: args.decimation,
            strict_literal: args.strict_literal,
            seed: args.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            diverged: outcome.divergence.is_some(),
        },
        files: digests,
        config: cfg.clone(),
    };
    let path = dir.join(MANIFEST_FILE);
    let text = toml::to_string(&manifest).context("cannot serialize manifest")?;
    let mut f = fs::File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    f.write_all(text.as_bytes())
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(manifest)
}

/// Runs a scenario and writes its artifacts. Divergence is a failure except
/// in Case II, where it is an expected outcome flagged in metrics.csv.
pub fn simulate(args: &SimulateArgs) -> std::result::Result<(ScenarioOutcome, Manifest), Failure> {
    let cfg = match &args.config {
        Some(p) => load_config(p)?,
        None => SystemConfig::default(),
    };
    let scenario = ScenarioConfig::preset(args.scenario, &cfg);
    let opts = RunOptions {
        decimation: args.decimation,
        strict_literal: args.strict_literal,
        seed: args.seed,
    };
    let outcome = run_scenario(&scenario, &cfg, &opts).map_err(|e| Failure::Invalid(e.into()))?;
    let manifest = write_artifacts(&args.out, &outcome, &cfg, args)?;
    match &outcome.divergence {
        Some(d) if args.scenario != ScenarioId::CaseII => Err(Failure::Diverged {
            time: d.time,
            detail: d.detail.clone(),
        }),
        _ => Ok((outcome, manifest)),
    }
}

/// Dispatches a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Simulate(args) => simulate(&args).map(|(outcome, _)| {
            for (k, v) in outcome.metrics.rows() {
                println!("{k} = {}", fmt_sig9(v));
            }
            println!("wrote {}", args.out.display());
        }),
        Command::Validate { config } => load_config(&config)
            .map(|_| println!("{}: ok", config.display()))
            .map_err(Failure::from),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}
