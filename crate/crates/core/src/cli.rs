//! Command-line front end: verbs, output files and exit codes.
//!
//! Every verb writes plot-ready CSV files plus one JSON summary into the
//! output directory (`--out`, else `$SFWM_OUT_DIR`, else `./sfwm-out`).
//! The JSON embeds the SHA-256 of the resolved configuration and verb
//! parameters, the seed and the tool version; nothing time- or
//! host-dependent is written, so identical inputs give identical bytes.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::analysis::{
    extract_from_sweep, fit_loglog_slope, mu_p_table, operating_power_grid, run_sweep, MuPTable,
    SimulationPlan, SweepPoint,
};
use crate::config::{explain, load_config, ConfigError, ExperimentConfig};
use crate::counting::{car, expected_rates, simulate, substream_seed, true_coincidences, Experiment};
use crate::entanglement::{
    chsh_from_counts, fit_visibility, generate_fringe, s_from_visibility, ChshCounts, EntangledSourceSpec,
    VisibilityFit, CHSH_THETA1_DEG,
};
use crate::error::Error;
use crate::numeric::logspace;
use crate::phase_matching::{calibrate_gamma, DetuningGrid, MismatchOptions, PhaseMismatch};
use crate::spectrum::{hwhm_bandwidth_with, spectrum_sweep, HwhmOptions, HwhmReference, PairGain};

pub const OUT_DIR_ENV: &str = "SFWM_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "sfwm", version, about = "Four-wave-mixing photon-pair source simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// μ_p against detuning for several fiber lengths.
    Spectrum(SpectrumArgs),
    /// HWHM of the pair spectrum against fiber length.
    Bandwidth(BandwidthArgs),
    /// Phase-matched detuning against pump power, and the Δk curve.
    PhaseMatch(PhaseMatchArgs),
    /// Monte Carlo coincidence histogram for one configuration.
    Simulate(SimulateArgs),
    /// Counting runs over a list of pump powers or fiber lengths.
    Sweep(SweepArgs),
    /// μ_p from sweep outputs, or a μ_p table over detunings and lengths.
    MuExtract(MuExtractArgs),
    /// Polarization fringes, visibilities and CHSH S.
    Bell(BellArgs),
    /// Resolved configuration with the origin of every default.
    Explain(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Experiment preset (smf28-paper, paper-fig4a..paper-fig4d).
    #[arg(long)]
    pub preset: Option<String>,
    /// Override any config key, e.g. `--set signal_detector.efficiency=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub fiber_preset: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub length_m: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub power_w: Option<f64>,
    /// Moves both channels to ±detuning.
    #[arg(long, allow_negative_numbers = true)]
    pub detuning_ghz: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub duration_s: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [3.8, 11.4, 31.5, 308.0])]
    pub lengths: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub start_ghz: f64,
    #[arg(long, default_value_t = 2000.0)]
    pub stop_ghz: f64,
    #[arg(long, default_value_t = 5.0)]
    pub step_ghz: f64,
    /// Collection bandwidth B; defaults to the signal passband.
    #[arg(long)]
    pub filter_bw_ghz: Option<f64>,
    /// Also write μ_p / (τ f B γ²).
    #[arg(long)]
    pub normalized: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Reference {
    Pump,
    Peak,
}

#[derive(Debug, Clone, Args)]
pub struct BandwidthArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 2.0)]
    pub min_m: f64,
    #[arg(long, default_value_t = 500.0)]
    pub max_m: f64,
    #[arg(long, default_value_t = 41)]
    pub points: usize,
    /// Measure the half width from the pump or from the spectral peak.
    #[arg(long, value_enum, default_value_t = Reference::Pump)]
    pub reference: Reference,
}

#[derive(Debug, Clone, Args)]
pub struct PhaseMatchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [0.75, 3.0, 12.0])]
    pub powers: Vec<f64>,
    /// Upper end of the Δk curve.
    #[arg(long, default_value_t = 500.0)]
    pub curve_stop_ghz: f64,
    #[arg(long, default_value_t = 1.0)]
    pub curve_step_ghz: f64,
    /// Also report the γ that puts the root at this detuning.
    #[arg(long)]
    pub target_ghz: Option<f64>,
    /// Drop the 2γP term from Δk.
    #[arg(long)]
    pub no_spm: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Pump peak powers (W).
    #[arg(long, value_delimiter = ',', conflicts_with = "lengths")]
    pub powers: Option<Vec<f64>>,
    /// Fiber lengths (m).
    #[arg(long, value_delimiter = ',')]
    pub lengths: Option<Vec<f64>>,
    /// Without explicit lists: powers log-spaced over the decade below the
    /// power giving this singles rate.
    #[arg(long, default_value_t = 3000.0)]
    pub target_cps: f64,
    #[arg(long, default_value_t = 6)]
    pub points: usize,
    /// Closed-form counts instead of Monte Carlo.
    #[arg(long)]
    pub expected_only: bool,
}

#[derive(Debug, Clone, Args)]
pub struct MuExtractArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Power-sweep JSON files written by `sweep`.
    #[arg(long)]
    pub input: Vec<PathBuf>,
    /// Table mode: detunings (GHz).
    #[arg(long, value_delimiter = ',', default_values_t = [400.0, 600.0, 800.0, 1000.0])]
    pub detunings: Vec<f64>,
    /// Table mode: lengths (m).
    #[arg(long, value_delimiter = ',', default_values_t = [3.8, 11.4, 31.5, 308.0])]
    pub lengths: Vec<f64>,
    /// Table mode: add μ_p extracted from simulated power sweeps.
    #[arg(long)]
    pub simulate: bool,
    #[arg(long, default_value_t = 3000.0)]
    pub target_cps: f64,
    #[arg(long, default_value_t = 6)]
    pub points: usize,
}

#[derive(Debug, Clone, Args)]
pub struct BellArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 0.942)]
    pub visibility: f64,
    /// Expected coincidences at a fringe maximum per accumulation period.
    #[arg(long, default_value_t = 125.0)]
    pub rate_scale: f64,
    /// Expected accidentals per setting and accumulation period.
    #[arg(long, default_value_t = 0.0)]
    pub floor: f64,
    /// +1 for |HH⟩+|VV⟩, -1 for |HH⟩−|VV⟩.
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    pub phase_sign: i8,
    #[arg(long, default_value_t = 2.5)]
    pub step_deg: f64,
    /// Take rate scale and floor from a counting simulation of the
    /// configuration (default preset paper-fig4b).
    #[arg(long)]
    pub from_sim: bool,
    /// Subtract the accidental floor before fitting and computing S.
    #[arg(long)]
    pub subtract_accidentals: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] Error),
    #[error("extraction failed: {0}")]
    Extraction(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// 1 i/o, 2 usage, 3 config, 4 numeric/model, 5 extraction failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Model(Error::NoiseDominated(_)) | CliError::Extraction(_) => 5,
            CliError::Model(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Files written by one verb.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: Value,
}

/// Parses `args` (including the program name), runs the verb and returns the
/// process exit code. Errors and usage go to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    let common = match &cli.command {
        Command::Spectrum(a) => &a.common,
        Command::Bandwidth(a) => &a.common,
        Command::PhaseMatch(a) => &a.common,
        Command::Simulate(a) => &a.common,
        Command::Sweep(a) => &a.common,
        Command::MuExtract(a) => &a.common,
        Command::Bell(a) => &a.common,
        Command::Explain(a) => a,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Spectrum(a) => spectrum(a),
        Command::Bandwidth(a) => bandwidth(a),
        Command::PhaseMatch(a) => phase_match(a),
        Command::Simulate(a) => simulate_verb(a),
        Command::Sweep(a) => sweep(a),
        Command::MuExtract(a) => mu_extract(a),
        Command::Bell(a) => bell(a),
        Command::Explain(a) => explain_verb(a),
    })
}

fn resolve_config(c: &CommonArgs, default_preset: Option<&str>) -> Result<ExperimentConfig, CliError> {
    let mut overrides = Vec::new();
    match (&c.preset, default_preset, &c.config) {
        (Some(p), _, _) => overrides.push(("preset".to_string(), format!("{p:?}"))),
        (None, Some(p), None) => overrides.push(("preset".to_string(), format!("{p:?}"))),
        _ => {}
    }
    if let Some(p) = &c.fiber_preset {
        overrides.push(("fiber.preset".into(), format!("{p:?}")));
    }
    for s in &c.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {s:?}")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    let num = |k: &str, v: Option<f64>| v.map(|v| (k.to_string(), format_float(v)));
    overrides.extend(num("fiber.length_m", c.length_m));
    overrides.extend(num("pump.peak_power_w", c.power_w));
    if let Some(d) = c.detuning_ghz {
        overrides.push(("signal.detuning_ghz".into(), format_float(d.abs())));
        overrides.push(("idler.detuning_ghz".into(), format_float(-d.abs())));
    }
    overrides.extend(num("duration_s", c.duration_s));
    if let Some(s) = c.seed {
        overrides.push(("seed".into(), s.to_string()));
    }
    Ok(load_config(c.config.as_deref(), &overrides)?)
}

/// TOML-parsable float literal.
fn format_float(v: f64) -> String {
    let s = format!("{v:?}");
    if s.contains(['.', 'e', 'n', 'i']) {
        s
    } else {
        format!("{s}.0")
    }
}

fn out_dir(c: &CommonArgs) -> PathBuf {
    c.out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("sfwm-out"))
}

/// Collects the files of one run and writes the JSON summary last.
struct Writer {
    dir: PathBuf,
    verb: &'static str,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(common: &CommonArgs, verb: &'static str) -> Result<Self, CliError> {
        let dir = out_dir(common);
        std::fs::create_dir_all(&dir)?;
        Ok(Writer {
            dir,
            verb,
            files: Vec::new(),
        })
    }

    fn csv<S: AsRef<str>>(&mut self, name: &str, header: &[S], rows: &[Vec<String>]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header.iter().map(|h| h.as_ref()))?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        self.files.push(path);
        Ok(())
    }

    fn finish(mut self, config: &ExperimentConfig, parameters: Value, results: Value) -> Result<Outcome, CliError> {
        let hash_input = json!({ "verb": self.verb, "config": config, "parameters": parameters });
        let config_hash = hex::encode(Sha256::digest(hash_input.to_string().as_bytes()));
        let summary = json!({
            "tool": "sfwm",
            "version": env!("CARGO_PKG_VERSION"),
            "verb": self.verb,
            "config_hash": config_hash,
            "seed": config.seed,
            "config": config,
            "parameters": parameters,
            "files": self.files.iter().filter_map(|f| f.file_name()).map(|f| f.to_string_lossy().into_owned()).collect::<Vec<_>>(),
            "results": results,
        });
        let path = self.dir.join(format!("{}.json", self.verb));
        let mut text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        std::fs::write(&path, text)?;
        self.files.push(path);
        Ok(Outcome {
            files: self.files,
            summary,
        })
    }
}

fn f(v: f64) -> String {
    format!("{v}")
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn spectrum(a: &SpectrumArgs) -> Result<Outcome, CliError> {
    let cfg = resolve_config(&a.common, None)?;
    let exp = &cfg.experiment;
    let bw = a.filter_bw_ghz.unwrap_or(exp.signal.bandwidth_ghz);
    if a.lengths.is_empty() {
        return Err(CliError::Usage("--lengths must not be empty".into()));
    }
    let grid = DetuningGrid::uniform(a.start_ghz, a.stop_ghz, a.step_ghz)?;
    let mut spectra = Vec::new();
    let mut results = Vec::new();
    for &l in &a.lengths {
        let fiber = exp.fiber.with_length(l);
        let s = spectrum_sweep(&grid, &exp.pump, &fiber, bw)?;
        let (imax, &peak) = s
            .mu_p
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
        let hwhm = hwhm_bandwidth_with(&exp.pump, &fiber, HwhmOptions::default())?;
        results.push(json!({
            "length_m": l,
            "peak_mu_p": peak,
            "peak_detuning_ghz": grid.points()[imax],
            "hwhm_ghz": hwhm,
        }));
        spectra.push(s);
    }
    let mut header = vec!["delta_nu_ghz".to_string()];
    header.extend(a.lengths.iter().map(|l| format!("mu_p_{l}m")));
    if a.normalized {
        header.extend(a.lengths.iter().map(|l| format!("normalized_{l}m")));
    }
    let normalized: Vec<Vec<f64>> = spectra.iter().map(|s| s.normalized()).collect();
    let rows: Vec<Vec<String>> = grid
        .points()
        .iter()
        .enumerate()
        .map(|(i, &nu)| {
            let mut r = vec![f(nu)];
            r.extend(spectra.iter().map(|s| f(s.mu_p[i])));
            if a.normalized {
                r.extend(normalized.iter().map(|n| f(n[i])));
            }
            r
        })
        .collect();
    let mut w = Writer::new(&a.common, "spectrum")?;
    w.csv("spectrum.csv", &header, &rows)?;
    let params = json!({
        "lengths_m": a.lengths, "start_ghz": a.start_ghz, "stop_ghz": a.stop_ghz,
        "step_ghz": a.step_ghz, "filter_bw_ghz": bw, "normalized": a.normalized,
    });
    w.finish(&cfg, params, json!({ "curves": results }))
}

fn bandwidth(a: &BandwidthArgs) -> Result<Outcome, CliError> {
    let cfg = resolve_config(&a.common, None)?;
    let exp = &cfg.experiment;
    if !(a.min_m > 0.0 && a.max_m > a.min_m && a.points >= 2) {
        return Err(CliError::Usage("need 0 < --min-m < --max-m and --points >= 2".into()));
    }
    let opts = HwhmOptions {
        reference: match a.reference {
            Reference::Pump => HwhmReference::Pump,
            Reference::Peak => HwhmReference::Peak,
        },
        ..HwhmOptions::default()
    };
    let asymptote = PhaseMismatch::new(&exp.pump, &exp.fiber, MismatchOptions::default())?.root()?;
    use rayon::prelude::*;
    let lengths = logspace(a.min_m, a.max_m, a.points);
    let widths = lengths
        .par_iter()
        .map(|&l| hwhm_bandwidth_with(&exp.pump, &exp.fiber.with_length(l), opts))
        .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<Vec<String>> = lengths
        .iter()
        .zip(&widths)
        .map(|(&l, &h)| vec![f(l), f(h), f(asymptote)])
        .collect();
    let mut w = Writer::new(&a.common, "bandwidth")?;
    w.csv("bandwidth.csv", &["length_m", "hwhm_ghz", "phase_matched_ghz"], &rows)?;
    let params = json!({
        "min_m": a.min_m, "max_m": a.max_m, "points": a.points,
        "reference": format!("{:?}", a.reference).to_lowercase(),
    });
    let results = json!({
        "phase_matched_ghz": asymptote,
        "hwhm_at_min_ghz": widths.first(),
        "hwhm_at_max_ghz": widths.last(),
    });
    w.finish(&cfg, params, results)
}

fn phase_match(a: &PhaseMatchArgs) -> Result<Outcome, CliError> {
    let cfg = resolve_config(&a.common, None)?;
    let exp = &cfg.experiment;
    let opts = MismatchOptions {
        include_spm: !a.no_spm,
        ..MismatchOptions::default()
    };
    let mut rows = Vec::new();
    let mut roots = Vec::new();
    for &p in &a.powers {
        let pump = exp.pump.with_power(p);
        let root = PhaseMismatch::new(&pump, &exp.fiber, opts)?.root()?;
        rows.push(vec![f(p), f(root), f(root / p.sqrt())]);
        roots.push(json!({ "power_w": p, "detuning_ghz": root }));
    }
    let pm = PhaseMismatch::new(&exp.pump, &exp.fiber, opts)?;
    let curve = DetuningGrid::uniform(0.0, a.curve_stop_ghz, a.curve_step_ghz)?;
    let curve_rows = curve
        .points()
        .iter()
        .map(|&nu| Ok(vec![f(nu), f(pm.at(nu)?)]))
        .collect::<Result<Vec<_>, Error>>()?;
    let gamma = a
        .target_ghz
        .map(|t| calibrate_gamma(t, &exp.pump, &exp.fiber))
        .transpose()?;
    let mut w = Writer::new(&a.common, "phase-match")?;
    w.csv("phase_match.csv", &["power_w", "detuning_ghz", "detuning_per_sqrt_w"], &rows)?;
    w.csv("delta_k.csv", &["delta_nu_ghz", "delta_k_per_m"], &curve_rows)?;
    let params = json!({
        "powers_w": a.powers, "curve_stop_ghz": a.curve_stop_ghz,
        "curve_step_ghz": a.curve_step_ghz, "target_ghz": a.target_ghz, "include_spm": !a.no_spm,
    });
    let results = json!({
        "roots": roots,
        "beta2_s2_per_m": pm.beta2(),
        "calibrated_gamma_per_w_km": gamma,
    });
    w.finish(&cfg, params, results)
}

fn simulate_verb(a: &SimulateArgs) -> Result<Outcome, CliError> {
    let cfg = resolve_config(&a.common, None)?;
    let exp = &cfg.experiment;
    let r = simulate(exp, cfg.duration_s, cfg.seed)?;
    let expected = expected_rates(exp)?;
    let h = &r.histogram;
    let rows: Vec<Vec<String>> = (0..h.counts.len())
        .map(|i| vec![f(h.delay_s(i) * 1e9), h.counts[i].to_string()])
        .collect();
    let mut w = Writer::new(&a.common, "simulate")?;
    w.csv("histogram.csv", &["delay_ns", "counts"], &rows)?;
    let t = true_coincidences(&r);
    let results = json!({
        "singles_s": r.singles_s,
        "singles_i": r.singles_i,
        "c_c": r.c_c,
        "c_a": r.c_a,
        "side_window_counts": r.side_window_counts,
        "car": car(&r).ok(),
        "true_coincidences": t.value,
        "true_floored": t.floored,
        "pulses": r.pulses,
        "warnings": r.warnings,
        "expected": {
            "singles_s": expected.singles_s * cfg.duration_s,
            "singles_i": expected.singles_i * cfg.duration_s,
            "c_c": expected.coincidence_rate * cfg.duration_s,
            "c_a": expected.accidental_rate * cfg.duration_s,
            "car": expected.car,
            "mu_p": expected.pulse.mu_p,
        },
    });
    w.finish(&cfg, json!({}), results)
}

fn sweep_rows(points: &[SweepPoint]) -> Vec<Vec<String>> {
    points
        .iter()
        .map(|p| {
            vec![
                f(p.power_w),
                f(p.length_m),
                f(p.duration_s),
                f(p.c_c),
                f(p.c_a),
                f(p.true_counts),
                p.car.map(f).unwrap_or_default(),
                f(p.singles_s),
                f(p.singles_i),
                f(p.expected_c_c),
                f(p.expected_c_a),
            ]
        })
        .collect()
}

const SWEEP_HEADER: [&str; 11] = [
    "power_w",
    "length_m",
    "duration_s",
    "c_c",
    "c_a",
    "true_counts",
    "car",
    "singles_s",
    "singles_i",
    "expected_c_c",
    "expected_c_a",
];

fn sweep(a: &SweepArgs) -> Result<Outcome, CliError> {
    let cfg = resolve_config(&a.common, None)?;
    let exp = &cfg.experiment;
    let (variable, values) = match (&a.powers, &a.lengths) {
        (Some(p), _) => ("power", p.clone()),
        (None, Some(l)) => ("length", l.clone()),
        (None, None) => ("power", operating_power_grid(exp, a.target_cps, a.points)?),
    };
    if values.is_empty() {
        return Err(CliError::Usage("sweep list must not be empty".into()));
    }
    let configs: Vec<Experiment> = values
        .iter()
        .map(|&v| if variable == "power" { exp.with_power(v) } else { exp.with_length(v) })
        .collect();
    let seed = (!a.expected_only).then_some(cfg.seed);
    let points = run_sweep(&configs, cfg.duration_s, seed)?;
    let slope_pts: Vec<(f64, f64)> = values
        .iter()
        .zip(&points)
        .filter(|(_, p)| p.true_counts > 0.0)
        .map(|(&v, p)| (v, p.true_counts))
        .collect();
    let slope = fit_loglog_slope(&slope_pts).ok();
    let mu_p = (variable == "power").then(|| extract_from_sweep(&points, exp));
    let mut w = Writer::new(&a.common, "sweep")?;
    w.csv("sweep.csv", &SWEEP_HEADER, &sweep_rows(&points))?;
    let params = json!({
        "variable": variable, "values": values, "expected_only": a.expected_only,
        "target_cps": a.target_cps, "points": a.points,
    });
    let results = json!({
        "points": points,
        "loglog_slope": slope.as_ref().map(|s| s.slope()),
        "loglog_slope_se": slope.as_ref().map(|s| s.slope_se()),
        "mu_p": mu_p.as_ref().and_then(|m| m.as_ref().ok()).map(to_value),
        "mu_p_error": mu_p.as_ref().and_then(|m| m.as_ref().err()).map(|e| e.to_string()),
    });
    w.finish(&cfg, params, results)
}

fn mu_extract(a: &MuExtractArgs) -> Result<Outcome, CliError> {
    if a.input.is_empty() {
        return mu_table(a);
    }
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for path in &a.input {
        let (cfg, points) = read_sweep(path)?;
        let exp = &cfg.experiment;
        let model = PairGain::new(&exp.pump, &exp.fiber)?.mu_p(exp.signal.detuning_ghz, exp.signal.bandwidth_ghz)?;
        let collected = expected_rates(exp)?.pulse.mu_p;
        let name = path.display().to_string();
        match extract_from_sweep(&points, exp) {
            Ok(est) => {
                rows.push(vec![
                    name.clone(),
                    f(exp.fiber.length_m),
                    f(exp.signal.detuning_ghz),
                    f(model),
                    f(collected),
                    f(est.mu_p),
                    f(est.std_error),
                    f(est.pooled_car),
                    "ok".into(),
                ]);
                entries.push(json!({ "input": name, "model_mu_p": model, "model_mu_p_collected": collected, "estimate": est }));
            }
            Err(e) => {
                rows.push(vec![
                    name.clone(),
                    f(exp.fiber.length_m),
                    f(exp.signal.detuning_ghz),
                    f(model),
                    f(collected),
                    String::new(),
                    String::new(),
                    String::new(),
                    e.to_string(),
                ]);
                entries.push(json!({ "input": name, "model_mu_p": model, "model_mu_p_collected": collected, "error": e.to_string() }));
                failures.push(format!("{name}: {e}"));
            }
        }
    }
    let cfg = resolve_config(&a.common, None)?;
    let mut w = Writer::new(&a.common, "mu-extract")?;
    w.csv(
        "mu_p.csv",
        &["input", "length_m", "detuning_ghz", "model_mu_p", "model_mu_p_collected", "mu_p", "mu_p_se", "pooled_car", "status"],
        &rows,
    )?;
    let inputs: Vec<String> = a.input.iter().map(|p| p.display().to_string()).collect();
    let outcome = w.finish(&cfg, json!({ "inputs": inputs }), json!({ "extractions": entries }))?;
    if failures.is_empty() {
        Ok(outcome)
    } else {
        Err(CliError::Extraction(failures.join("; ")))
    }
}

/// Reads a `sweep` summary back into its configuration and points.
pub fn read_sweep(path: &Path) -> Result<(ExperimentConfig, Vec<SweepPoint>), CliError> {
    let text = std::fs::read_to_string(path)?;
    let bad = |m: &str| CliError::Usage(format!("{}: {m}", path.display()));
    let v: Value = serde_json::from_str(&text).map_err(|e| bad(&e.to_string()))?;
    if v["verb"] != "sweep" {
        return Err(bad("not a sweep summary"));
    }
    if v["parameters"]["variable"] != "power" {
        return Err(bad("mu_p extraction needs a power sweep"));
    }
    let cfg: ExperimentConfig = serde_json::from_value(v["config"].clone()).map_err(|e| bad(&e.to_string()))?;
    let points: Vec<SweepPoint> =
        serde_json::from_value(v["results"]["points"].clone()).map_err(|e| bad(&e.to_string()))?;
    Ok((cfg, points))
}

fn table_rows(table: &MuPTable) -> Vec<Vec<String>> {
    let opt = |v: Option<f64>| v.map(f).unwrap_or_default();
    table
        .cells
        .iter()
        .map(|c| {
            vec![
                f(c.length_m),
                f(c.detuning_ghz),
                f(c.model_mu_p),
                f(c.model_mu_p_collected),
                opt(c.expected.as_ref().map(|e| e.mu_p)),
                opt(c.measured.as_ref().map(|e| e.mu_p)),
                opt(c.measured.as_ref().map(|e| e.std_error)),
                c.gap.clone().unwrap_or_default(),
            ]
        })
        .collect()
}

fn mu_table(a: &MuExtractArgs) -> Result<Outcome, CliError> {
    let cfg = resolve_config(&a.common, None)?;
    let plan = SimulationPlan {
        target_singles_cps: a.target_cps,
        points_per_sweep: a.points,
        duration_s: cfg.duration_s,
        seed: cfg.seed,
    };
    let table = mu_p_table(&cfg.experiment, &a.detunings, &a.lengths, a.simulate.then_some(&plan))?;
    let mut w = Writer::new(&a.common, "mu-extract")?;
    w.csv(
        "mu_p_table.csv",
        &["length_m", "detuning_ghz", "model_mu_p", "model_mu_p_collected", "closed_form_mu_p", "mu_p", "mu_p_se", "gap"],
        &table_rows(&table),
    )?;
    let mut lobes = Vec::new();
    for pair in a.detunings.windows(2) {
        for l in table.second_lobe_lengths(pair[0], pair[1]) {
            lobes.push(json!({ "length_m": l, "lower_ghz": pair[0], "upper_ghz": pair[1] }));
        }
    }
    let params = json!({
        "detunings_ghz": a.detunings, "lengths_m": a.lengths, "simulate": a.simulate,
        "target_cps": a.target_cps, "points": a.points,
    });
    w.finish(&cfg, params, json!({ "cells": table.cells, "rising_between": lobes }))
}

fn bell(a: &BellArgs) -> Result<Outcome, CliError> {
    let cfg = resolve_config(&a.common, a.from_sim.then_some("paper-fig4b"))?;
    let mut source = EntangledSourceSpec {
        visibility: a.visibility,
        phase_sign: a.phase_sign,
        rate_scale: a.rate_scale,
        accidental_floor: a.floor,
        accumulation_s: cfg.duration_s,
    };
    let mut sim_summary = Value::Null;
    if a.from_sim {
        let r = simulate(&cfg.experiment, cfg.duration_s, cfg.seed)?;
        let true_rate = true_coincidences(&r).value / cfg.duration_s;
        let acc_rate = r.c_a / cfg.duration_s;
        source = EntangledSourceSpec {
            phase_sign: a.phase_sign,
            ..EntangledSourceSpec::from_rates(a.visibility, true_rate, acc_rate, cfg.duration_s)
        };
        sim_summary = json!({ "c_c": r.c_c, "c_a": r.c_a, "true_rate_per_s": true_rate, "accidental_rate_per_s": acc_rate });
    }
    source.validate()?;
    if !(a.step_deg > 0.0 && a.step_deg <= 22.5) {
        return Err(CliError::Usage("--step-deg must lie in (0, 22.5]".into()));
    }
    let n = (360.0 / a.step_deg).round() as usize;
    let grid: Vec<f64> = (0..=n).map(|k| -180.0 + k as f64 * a.step_deg).collect();
    let floor = if a.subtract_accidentals { source.accidental_floor } else { 0.0 };

    let mut fringes = Vec::new();
    let mut fits: Vec<VisibilityFit> = Vec::new();
    for (k, &t1) in CHSH_THETA1_DEG.iter().enumerate() {
        let scan = generate_fringe(t1, &grid, &source, substream_seed(cfg.seed, k as u64))?;
        fits.push(fit_visibility(&scan.subtract_floor(floor))?);
        fringes.push(scan);
    }
    let counts = ChshCounts::simulate(&source, substream_seed(cfg.seed, 100))?.subtract_floor(floor);
    let chsh = chsh_from_counts(&counts)?;
    let mean_v = fits.iter().map(|f| f.visibility).sum::<f64>() / fits.len() as f64;
    let mean_v_se = (fits.iter().map(|f| f.visibility_se.powi(2)).sum::<f64>()).sqrt() / fits.len() as f64;

    let mut header = vec!["theta2_deg".to_string()];
    header.extend(CHSH_THETA1_DEG.iter().map(|t| format!("counts_theta1_{t}")));
    let rows: Vec<Vec<String>> = grid
        .iter()
        .enumerate()
        .map(|(i, &t2)| {
            let mut r = vec![f(t2)];
            r.extend(fringes.iter().map(|s| f(s.counts[i])));
            r
        })
        .collect();
    let vis_rows: Vec<Vec<String>> = CHSH_THETA1_DEG
        .iter()
        .zip(&fits)
        .map(|(&t1, v)| {
            vec![f(t1), f(v.visibility), f(v.visibility_se), f(v.phase_deg), f(v.amplitude), v.degenerate.to_string()]
        })
        .collect();
    let chsh_rows: Vec<Vec<String>> = counts.entries().iter().map(|&(a, b, c)| vec![f(a), f(b), f(c)]).collect();

    let mut w = Writer::new(&a.common, "bell")?;
    w.csv("fringes.csv", &header, &rows)?;
    w.csv(
        "visibility.csv",
        &["theta1_deg", "visibility", "visibility_se", "phase_deg", "amplitude", "degenerate"],
        &vis_rows,
    )?;
    w.csv("chsh_counts.csv", &["theta1_deg", "theta2_deg", "counts"], &chsh_rows)?;
    let params = json!({
        "visibility": a.visibility, "rate_scale": a.rate_scale, "floor": a.floor,
        "phase_sign": a.phase_sign, "step_deg": a.step_deg, "from_sim": a.from_sim,
        "subtract_accidentals": a.subtract_accidentals,
    });
    let results = json!({
        "source": source,
        "simulation": sim_summary,
        "chsh": chsh,
        "mean_visibility": mean_v,
        "s_from_visibility": s_from_visibility(mean_v),
        "s_from_visibility_error": s_from_visibility(mean_v_se),
    });
    w.finish(&cfg, params, results)
}

fn explain_verb(a: &CommonArgs) -> Result<Outcome, CliError> {
    let cfg = resolve_config(a, None)?;
    let rows = explain(&cfg);
    let width = rows.iter().map(|r| r.key.len()).max().unwrap_or(0);
    for r in &rows {
        let changed = if r.value == r.default { "" } else { " (overridden)" };
        println!("{:<width$}  {:<14} [{}] {}{}", r.key, r.value, r.provenance, r.note, changed);
    }
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.key.clone(), r.value.clone(), r.default.clone(), r.provenance.to_string(), r.note.clone()])
        .collect();
    let mut w = Writer::new(a, "explain")?;
    w.csv("explain.csv", &["key", "value", "default", "provenance", "note"], &csv_rows)?;
    w.finish(&cfg, json!({}), json!({ "keys": rows }))
}
