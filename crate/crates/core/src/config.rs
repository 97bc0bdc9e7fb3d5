//! Layered experiment configuration: named preset, then a TOML file, then
//! command-line overrides.
//!
//! Keys carry their unit as a suffix (`length_m`, `detuning_ghz`, ...). A key
//! whose stem is known but whose suffix is not is reported as a unit
//! mismatch rather than an unknown key. All problems found in one load are
//! reported together, with line numbers for file entries.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::de::DeTable;

use crate::counting::Experiment;
use crate::fiber::FiberSpec;
use crate::spectrum::Collection;

/// Experiment presets accepted by `preset = "..."`.
pub const PRESETS: [&str; 5] = [
    "smf28-paper",
    "paper-fig4a",
    "paper-fig4b",
    "paper-fig4c",
    "paper-fig4d",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub preset: String,
    pub fiber_preset: String,
    pub experiment: Experiment,
    pub duration_s: f64,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Option<Self> {
        let length_m = match name {
            "smf28-paper" | "paper-fig4a" => 3.8,
            "paper-fig4b" => 11.4,
            "paper-fig4c" => 31.5,
            "paper-fig4d" => 308.0,
            _ => return None,
        };
        Some(ExperimentConfig {
            preset: name.to_string(),
            fiber_preset: "smf28-paper".to_string(),
            experiment: Experiment::standard(FiberSpec::smf28_paper(length_m), 3.0),
            duration_s: 600.0,
            seed: 1,
        })
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset("smf28-paper").expect("built-in preset")
    }
}

/// Where a default value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Stated for the measured setup.
    Published,
    /// Fitted so the model reproduces a published result.
    Fitted,
    /// Model choice with no published counterpart.
    Invented,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Published => "published",
            Provenance::Fitted => "fitted",
            Provenance::Invented => "invented",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    /// 1-based line in the config file, when the issue comes from the file.
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: `{}`: {}", self.key, self.message),
            None => write!(f, "`{}`: {}", self.key, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("{} configuration problem(s):\n{}", .0.len(), .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<ConfigIssue>),
}

type Setter = fn(&mut ExperimentConfig, f64);

enum Kind {
    Number(Setter),
    Integer(fn(&mut ExperimentConfig, u64)),
    Text(fn(&mut ExperimentConfig, &str) -> Result<(), String>),
}

struct KeySpec {
    path: &'static str,
    kind: Kind,
    get: fn(&ExperimentConfig) -> String,
    provenance: Provenance,
    note: &'static str,
}

impl KeySpec {
    fn section(&self) -> &'static str {
        self.path.rsplit_once('.').map_or("", |(s, _)| s)
    }

    fn name(&self) -> &'static str {
        self.path.rsplit_once('.').map_or(self.path, |(_, k)| k)
    }
}

const UNIT_SUFFIXES: [&str; 10] = [
    "_nm", "_ghz", "_w", "_m", "_s", "_hz", "_ps_per_nm2_km", "_per_w_km", "_per_w_m_ghz", "_cps",
];

/// Key name without its unit suffix.
fn stem(name: &str) -> &str {
    UNIT_SUFFIXES
        .iter()
        .filter_map(|s| name.strip_suffix(s))
        .min_by_key(|s| s.len())
        .unwrap_or(name)
}

fn fmt_num(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e7) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

macro_rules! num {
    ($path:literal, |$c:ident| $field:expr, $prov:ident, $note:literal) => {
        KeySpec {
            path: $path,
            kind: Kind::Number(|$c, v| $field = v),
            get: |$c| fmt_num($field),
            provenance: Provenance::$prov,
            note: $note,
        }
    };
}

fn set_collection(c: &mut ExperimentConfig, v: &str) -> Result<(), String> {
    c.experiment.counting.collection = match v {
        "center" => Collection::Center,
        "passband" => Collection::Passband,
        _ => return Err(format!("expected \"center\" or \"passband\", got {v:?}")),
    };
    Ok(())
}

fn set_fiber_preset(c: &mut ExperimentConfig, v: &str) -> Result<(), String> {
    let fiber = FiberSpec::preset(v, c.experiment.fiber.length_m)
        .ok_or_else(|| format!("unknown fiber preset {v:?} (known: {})", FiberSpec::PRESETS.join(", ")))?;
    c.experiment.fiber = fiber;
    c.fiber_preset = v.to_string();
    Ok(())
}

fn keys() -> Vec<KeySpec> {
    vec![
        KeySpec {
            path: "preset",
            kind: Kind::Text(|_, v| {
                ExperimentConfig::preset(v)
                    .map(|_| ())
                    .ok_or_else(|| format!("unknown preset {v:?} (known: {})", PRESETS.join(", ")))
            }),
            get: |c| c.preset.clone(),
            provenance: Provenance::Invented,
            note: "base layer; smf28-paper and paper-fig4a..d differ only in fiber length",
        },
        KeySpec {
            path: "seed",
            kind: Kind::Integer(|c, v| c.seed = v),
            get: |c| c.seed.to_string(),
            provenance: Provenance::Invented,
            note: "master seed of every random stream",
        },
        num!("duration_s", |c| c.duration_s, Published, "accumulation time per data point (10 minutes)"),
        KeySpec {
            path: "fiber.preset",
            kind: Kind::Text(set_fiber_preset),
            get: |c| c.fiber_preset.clone(),
            provenance: Provenance::Invented,
            note: "dispersion/nonlinearity parameter set; applied before other fiber keys",
        },
        num!("fiber.length_m", |c| c.experiment.fiber.length_m, Published, "fiber under test: 3.8, 11.4, 31.5 or 308 m"),
        num!("fiber.lambda_zgvd_nm", |c| c.experiment.fiber.lambda_zgvd_nm, Published, "SMF-28 zero-dispersion wavelength"),
        num!("fiber.slope_ps_per_nm2_km", |c| c.experiment.fiber.slope_s0, Published, "zero-dispersion slope S0"),
        num!("fiber.gamma_per_w_km", |c| c.experiment.fiber.gamma, Fitted, "chosen so a 3 W pump phase-matches at 77.4 GHz"),
        num!("fiber.raman_per_w_m_ghz", |c| c.experiment.fiber.raman_coeff, Fitted, "noise photons/pulse; fitted to ~3000 cps singles at 51 and 230 W·m"),
        num!("pump.wavelength_nm", |c| c.experiment.pump.lambda_p_nm, Published, "pump wavelength"),
        num!("pump.peak_power_w", |c| c.experiment.pump.peak_power_w, Published, "fixed peak power of the length series"),
        num!("pump.pulse_duration_s", |c| c.experiment.pump.pulse_duration_s, Published, "15 ps pulses"),
        num!("pump.rep_rate_hz", |c| c.experiment.pump.rep_rate_hz, Published, "18 MHz repetition rate"),
        num!("signal.detuning_ghz", |c| c.experiment.signal.detuning_ghz, Published, "DWDM channel 400 GHz above the pump"),
        num!("signal.bandwidth_ghz", |c| c.experiment.signal.bandwidth_ghz, Published, "~0.6 nm passband FWHM of a 100-GHz DWDM port"),
        num!("signal.transmittance", |c| c.experiment.signal.transmittance, Published, "~60 % transmission to the detector"),
        num!("idler.detuning_ghz", |c| c.experiment.idler.detuning_ghz, Published, "DWDM channel 400 GHz below the pump"),
        num!("idler.bandwidth_ghz", |c| c.experiment.idler.bandwidth_ghz, Published, "~0.6 nm passband FWHM of a 100-GHz DWDM port"),
        num!("idler.transmittance", |c| c.experiment.idler.transmittance, Published, "~60 % transmission to the detector"),
        num!("signal_detector.efficiency", |c| c.experiment.det_s.efficiency, Published, "InGaAs gated detector"),
        num!("signal_detector.gate_width_s", |c| c.experiment.det_s.gate_width_s, Published, "3.1 ns gate"),
        num!("signal_detector.dead_time_s", |c| c.experiment.det_s.dead_time_s, Published, "10 µs dead time"),
        num!("signal_detector.jitter_fwhm_s", |c| c.experiment.det_s.jitter_fwhm_s, Invented, "spreads the zero-delay peak over a few bins"),
        num!("signal_detector.dark_prob_per_gate", |c| c.experiment.det_s.dark_prob_per_gate, Invented, "dark counts are not quantified; off by default"),
        num!("idler_detector.efficiency", |c| c.experiment.det_i.efficiency, Published, "InGaAs gated detector"),
        num!("idler_detector.gate_width_s", |c| c.experiment.det_i.gate_width_s, Published, "3.1 ns gate"),
        num!("idler_detector.dead_time_s", |c| c.experiment.det_i.dead_time_s, Published, "10 µs dead time"),
        num!("idler_detector.jitter_fwhm_s", |c| c.experiment.det_i.jitter_fwhm_s, Invented, "spreads the zero-delay peak over a few bins"),
        num!("idler_detector.dark_prob_per_gate", |c| c.experiment.det_i.dark_prob_per_gate, Invented, "dark counts are not quantified; off by default"),
        num!("counting.coincidence_window_s", |c| c.experiment.counting.coincidence_window_s, Published, "~3 ns coincidence window"),
        num!("counting.bin_width_s", |c| c.experiment.counting.bin_width_s, Published, "176 ps TCSPC resolution"),
        KeySpec {
            path: "counting.side_windows",
            kind: Kind::Integer(|c, v| c.experiment.counting.side_windows = v as usize),
            get: |c| c.experiment.counting.side_windows.to_string(),
            provenance: Provenance::Published,
            note: "accidental peaks at ±1 and ±2 pump periods",
        },
        num!("counting.segment_s", |c| c.experiment.counting.segment_s, Invented, "independently seeded simulation slice"),
        KeySpec {
            path: "counting.collection",
            kind: Kind::Text(set_collection),
            get: |c| match c.experiment.counting.collection {
                Collection::Center => "center".into(),
                Collection::Passband => "passband".into(),
            },
            provenance: Provenance::Invented,
            note: "pair spectrum averaged over the passband, or taken at the channel centre",
        },
    ]
}

/// Raw value of one key, from the file or a flag.
#[derive(Debug, Clone)]
struct Entry {
    path: String,
    value: toml::Value,
    line: Option<usize>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Flattens a TOML document into dotted keys with line numbers.
fn file_entries(text: &str, issues: &mut Vec<ConfigIssue>) -> Vec<Entry> {
    let table: toml::Table = match toml::from_str(text) {
        Ok(t) => t,
        Err(e) => {
            issues.push(ConfigIssue {
                line: e.span().map(|s| line_of(text, s.start)),
                key: String::new(),
                message: e.message().to_string(),
            });
            return Vec::new();
        }
    };
    let mut lines = BTreeMap::new();
    if let Ok(doc) = DeTable::parse(text) {
        for (k, v) in doc.get_ref() {
            lines.insert(k.get_ref().to_string(), line_of(text, k.span().start));
            if let Some(inner) = v.get_ref().as_table() {
                for (k2, _) in inner {
                    let path = format!("{}.{}", k.get_ref(), k2.get_ref());
                    lines.insert(path, line_of(text, k2.span().start));
                }
            }
        }
    }
    let mut out = Vec::new();
    for (k, v) in table {
        match v {
            toml::Value::Table(inner) => {
                for (k2, v2) in inner {
                    let path = format!("{k}.{k2}");
                    out.push(Entry {
                        line: lines.get(&path).copied(),
                        path,
                        value: v2,
                    });
                }
            }
            value => out.push(Entry {
                line: lines.get(&k).copied(),
                path: k,
                value,
            }),
        }
    }
    out
}

/// Parses a `--set` value as a TOML scalar, falling back to a bare string.
fn flag_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn unknown_key_issue(specs: &[KeySpec], e: &Entry) -> ConfigIssue {
    let (section, name) = e.path.rsplit_once('.').unwrap_or(("", e.path.as_str()));
    let sibling = specs
        .iter()
        .filter(|s| s.section() == section && !matches!(s.kind, Kind::Text(_)))
        .find(|s| {
            let st = stem(s.name());
            name == st || name.strip_prefix(st).is_some_and(|rest| rest.starts_with('_'))
        });
    let message = match sibling {
        Some(s) => format!("unit suffix mismatch: expected `{}`", s.path),
        None => "unknown key".to_string(),
    };
    ConfigIssue {
        line: e.line,
        key: e.path.clone(),
        message,
    }
}

fn apply(spec: &KeySpec, e: &Entry, cfg: &mut ExperimentConfig) -> Result<(), String> {
    match &spec.kind {
        Kind::Number(set) => match &e.value {
            toml::Value::Float(v) => set(cfg, *v),
            toml::Value::Integer(v) => set(cfg, *v as f64),
            other => return Err(format!("expected a number, got {}", other.type_str())),
        },
        Kind::Integer(set) => match &e.value {
            toml::Value::Integer(v) if *v >= 0 => set(cfg, *v as u64),
            other => return Err(format!("expected a non-negative integer, got {other}")),
        },
        Kind::Text(set) => match &e.value {
            toml::Value::String(s) => set(cfg, s)?,
            other => return Err(format!("expected a string, got {}", other.type_str())),
        },
    }
    Ok(())
}

/// Builds a validated config from preset, optional file and `key=value`
/// overrides (highest precedence).
pub fn load_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<ExperimentConfig, ConfigError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError::Read {
            path: p.display().to_string(),
            message: e.to_string(),
        })?,
        None => String::new(),
    };
    parse_config(&text, overrides)
}

/// [`load_config`] on already-read file contents.
pub fn parse_config(text: &str, overrides: &[(String, String)]) -> Result<ExperimentConfig, ConfigError> {
    let mut issues = Vec::new();
    let file = file_entries(text, &mut issues);
    let flags: Vec<Entry> = overrides
        .iter()
        .map(|(k, v)| Entry {
            path: k.clone(),
            value: flag_value(v),
            line: None,
        })
        .collect();
    let specs = keys();
    let spec_of = |p: &str| specs.iter().find(|s| s.path == p);

    // flags beat the file for the base preset and the fiber preset too
    let pick = |key: &str| {
        flags
            .iter()
            .rev()
            .find(|e| e.path == key)
            .or_else(|| file.iter().find(|e| e.path == key))
    };
    let preset_name = match pick("preset").map(|e| &e.value) {
        Some(toml::Value::String(s)) => s.clone(),
        _ => "smf28-paper".to_string(),
    };
    let mut cfg = ExperimentConfig::preset(&preset_name).unwrap_or_default();

    let layered: Vec<&Entry> = file.iter().chain(flags.iter()).collect();
    let mut ordered: Vec<&Entry> = Vec::with_capacity(layered.len());
    if let Some(fp) = pick("fiber.preset") {
        ordered.push(fp);
    }
    // the fiber preset resets lengths, so explicit lengths must come after it
    ordered.extend(layered.iter().copied().filter(|e| e.path != "fiber.preset"));

    for e in ordered {
        let Some(spec) = spec_of(&e.path) else {
            issues.push(unknown_key_issue(&specs, e));
            continue;
        };
        if let Err(message) = apply(spec, e, &mut cfg) {
            issues.push(ConfigIssue {
                line: e.line,
                key: e.path.clone(),
                message,
            });
        }
    }

    // report invariant violations alongside key problems, once per key
    for (key, message) in validation_issues(&cfg) {
        if issues.iter().any(|i| i.key == key) {
            continue;
        }
        let line = layered.iter().rev().find(|e| e.path == key).and_then(|e| e.line);
        issues.push(ConfigIssue { line, key, message });
    }
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(issues))
    }
}

fn validation_issues(cfg: &ExperimentConfig) -> Vec<(String, String)> {
    let e = &cfg.experiment;
    let checks: [(&str, crate::Result<()>); 7] = [
        ("pump", e.pump.validate()),
        ("fiber", e.fiber.validate()),
        ("signal", e.signal.validate("signal")),
        ("idler", e.idler.validate("idler")),
        ("signal_detector", e.det_s.validate("signal_detector")),
        ("idler_detector", e.det_i.validate("idler_detector")),
        ("duration_s", positive(cfg.duration_s, "duration_s")),
    ];
    let mut out: Vec<(String, String)> = checks
        .into_iter()
        .filter_map(|(section, r)| r.err().map(|err| issue_from(section, err)))
        .collect();
    if out.is_empty() {
        if let Err(err) = e.validate() {
            out.push(issue_from("experiment", err));
        }
        if let Err(err) = crate::counting::PulseModel::new(e) {
            out.push(issue_from("idler.detuning_ghz", err));
        }
    }
    out
}

fn positive(v: f64, name: &str) -> crate::Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(crate::Error::InvalidParameter {
            name: name.to_string(),
            reason: "must be > 0".to_string(),
        })
    }
}

fn issue_from(fallback: &str, err: crate::Error) -> (String, String) {
    match err {
        crate::Error::InvalidParameter { name, reason } => (name, format!("invariant violated: {reason}")),
        other => (fallback.to_string(), other.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainRow {
    pub key: String,
    pub value: String,
    pub default: String,
    pub provenance: Provenance,
    pub note: String,
}

/// Every key with its effective value, its preset default and where that
/// default comes from.
pub fn explain(cfg: &ExperimentConfig) -> Vec<ExplainRow> {
    let base = ExperimentConfig::preset(&cfg.preset).unwrap_or_default();
    keys()
        .iter()
        .map(|k| ExplainRow {
            key: k.path.to_string(),
            value: (k.get)(cfg),
            default: (k.get)(&base),
            provenance: k.provenance,
            note: k.note.to_string(),
        })
        .collect()
}
