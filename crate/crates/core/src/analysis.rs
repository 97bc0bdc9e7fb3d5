//! Power-law fits of coincidence data, μ_p extraction and μ_p tables.

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counting::{
    expected_rates, power_for_singles, simulate, substream_seed, true_coincidences, Experiment,
};
use crate::error::{Error, Result};
use crate::numeric::logspace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitKind {
    /// ln y = c0 + c1·ln x.
    LogLog,
    /// y = c0·x².
    Quadratic,
    /// y = c0·x² + c1·x; leakage diagnostic for the quadratic form.
    QuadraticLinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kind: FitKind,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Weighted residual norm, sqrt(Σ w·r²).
    pub residual_norm: f64,
    pub n_points: usize,
}

impl FitResult {
    /// The log-log slope, or the quadratic coefficient.
    pub fn slope(&self) -> f64 {
        match self.kind {
            FitKind::LogLog => self.coefficients[1],
            _ => self.coefficients[0],
        }
    }

    pub fn slope_se(&self) -> f64 {
        match self.kind {
            FitKind::LogLog => self.std_errors[1],
            _ => self.std_errors[0],
        }
    }
}

/// Unweighted straight-line fit of (ln x, ln y).
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<FitResult> {
    fit_loglog_slope_weighted(points, None)
}

/// Straight-line fit of (ln x, ln y). With `y_errors`, point i is weighted by
/// (y_i/σ_i)², the inverse variance of ln y_i, and standard errors come from
/// those weights; otherwise they come from the residual scatter.
pub fn fit_loglog_slope_weighted(points: &[(f64, f64)], y_errors: Option<&[f64]>) -> Result<FitResult> {
    if points.len() < 3 {
        return Err(Error::invalid("points", "need at least 3 points"));
    }
    if let Some(&(x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(Error::invalid(
            "points",
            format!("log-log fit needs positive values, got ({x}, {y})"),
        ));
    }
    let weights: Vec<f64> = match y_errors {
        None => vec![1.0; points.len()],
        Some(err) if err.len() == points.len() => {
            let w: Vec<f64> = points.iter().zip(err).map(|(&(_, y), &s)| (y / s).powi(2)).collect();
            if w.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                return Err(Error::invalid("y_errors", "must be positive and finite"));
            }
            w
        }
        Some(_) => return Err(Error::invalid("y_errors", "length differs from points")),
    };
    let mut xtx = Matrix2::zeros();
    let mut xty = Vector2::zeros();
    for (&(x, y), &w) in points.iter().zip(&weights) {
        let row = Vector2::new(1.0, x.ln());
        xtx += w * row * row.transpose();
        xty += w * row * y.ln();
    }
    let inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::Fit("x values must not all be equal".into()))?;
    let beta = inv * xty;
    let rss: f64 = points
        .iter()
        .zip(&weights)
        .map(|(&(x, y), &w)| w * (y.ln() - beta[0] - beta[1] * x.ln()).powi(2))
        .sum();
    let cov = if y_errors.is_some() {
        inv
    } else {
        inv * (rss / (points.len() - 2) as f64)
    };
    Ok(FitResult {
        kind: FitKind::LogLog,
        coefficients: vec![beta[0], beta[1]],
        std_errors: vec![cov[(0, 0)].max(0.0).sqrt(), cov[(1, 1)].max(0.0).sqrt()],
        residual_norm: rss.sqrt(),
        n_points: points.len(),
    })
}

/// Weighted fit of y = α·x² with weights 1/σ².
pub fn fit_quadratic(x: &[f64], y: &[f64], sigma: &[f64]) -> Result<FitResult> {
    check_lengths(x, y, sigma)?;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for ((&x, &y), &s) in x.iter().zip(y).zip(sigma) {
        let w = 1.0 / (s * s);
        sxx += w * x.powi(4);
        sxy += w * x * x * y;
    }
    if !(sxx > 0.0) {
        return Err(Error::Fit("all abscissae are zero".into()));
    }
    let alpha = sxy / sxx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .zip(sigma)
        .map(|((&x, &y), &s)| ((y - alpha * x * x) / s).powi(2))
        .sum();
    Ok(FitResult {
        kind: FitKind::Quadratic,
        coefficients: vec![alpha],
        std_errors: vec![(1.0 / sxx).sqrt()],
        residual_norm: rss.sqrt(),
        n_points: x.len(),
    })
}

/// Weighted fit of y = α·x² + b·x.
pub fn fit_quadratic_linear(x: &[f64], y: &[f64], sigma: &[f64]) -> Result<FitResult> {
    check_lengths(x, y, sigma)?;
    let mut xtx = Matrix2::zeros();
    let mut xty = Vector2::zeros();
    for ((&x, &y), &s) in x.iter().zip(y).zip(sigma) {
        let w = 1.0 / (s * s);
        let row = Vector2::new(x * x, x);
        xtx += w * row * row.transpose();
        xty += w * row * y;
    }
    let inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::Fit("need at least two distinct non-zero abscissae".into()))?;
    let beta = inv * xty;
    let rss: f64 = x
        .iter()
        .zip(y)
        .zip(sigma)
        .map(|((&x, &y), &s)| ((y - beta[0] * x * x - beta[1] * x) / s).powi(2))
        .sum();
    Ok(FitResult {
        kind: FitKind::QuadraticLinear,
        coefficients: vec![beta[0], beta[1]],
        std_errors: vec![inv[(0, 0)].max(0.0).sqrt(), inv[(1, 1)].max(0.0).sqrt()],
        residual_norm: rss.sqrt(),
        n_points: x.len(),
    })
}

fn check_lengths(x: &[f64], y: &[f64], sigma: &[f64]) -> Result<()> {
    if x.len() != y.len() || x.len() != sigma.len() {
        return Err(Error::invalid("points", "x, y and sigma lengths differ"));
    }
    if x.len() < 2 {
        return Err(Error::invalid("points", "need at least 2 points"));
    }
    if sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::invalid("sigma", "must be positive and finite"));
    }
    Ok(())
}

/// A fitted α below this many standard errors counts as noise.
pub const MIN_ALPHA_SIGNIFICANCE: f64 = 3.0;
/// Pooled C_c/C_a below which a sweep counts as noise-dominated.
pub const MIN_POOLED_CAR: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuPEstimate {
    pub mu_p: f64,
    pub std_error: f64,
    pub fit: FitResult,
    /// Fit with an extra linear term; a large linear coefficient flags
    /// non-quadratic leakage such as uncorrected noise.
    pub linear_diagnostic: Option<FitResult>,
    /// ΣC_c / ΣC_a over the sweep.
    pub pooled_car: f64,
}

/// μ_p from the P² coefficient of C_c − C_a, weighted by σ² = C_c + C_a.
///
/// `cc` and `ca` hold (power W, counts) pairs at the same powers.
pub fn extract_mu_p(
    cc: &[(f64, f64)],
    ca: &[(f64, f64)],
    length_m: f64,
    eta_s: f64,
    eta_i: f64,
    duration_s: f64,
) -> Result<MuPEstimate> {
    if cc.len() < 3 || cc.len() != ca.len() {
        return Err(Error::invalid("sweep", "need at least 3 power points with C_c and C_a each"));
    }
    if cc.iter().zip(ca).any(|(a, b)| (a.0 - b.0).abs() > 1e-12 * a.0.abs().max(1.0)) {
        return Err(Error::invalid("sweep", "C_c and C_a are listed at different powers"));
    }
    for (name, eta) in [("eta_s", eta_s), ("eta_i", eta_i)] {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::invalid(name, "must lie in (0, 1]"));
        }
    }
    if !(length_m > 0.0) {
        return Err(Error::invalid("length_m", "must be > 0"));
    }
    if !(duration_s > 0.0) {
        return Err(Error::invalid("duration_s", "must be > 0"));
    }
    let powers: Vec<f64> = cc.iter().map(|p| p.0).collect();
    let net: Vec<f64> = cc.iter().zip(ca).map(|(c, a)| c.1 - a.1).collect();
    let sigma: Vec<f64> = cc.iter().zip(ca).map(|(c, a)| (c.1 + a.1).max(1.0).sqrt()).collect();
    let fit = fit_quadratic(&powers, &net, &sigma)?;
    let (alpha, alpha_se) = (fit.coefficients[0], fit.std_errors[0]);

    let sum_cc: f64 = cc.iter().map(|p| p.1).sum();
    let sum_ca: f64 = ca.iter().map(|p| p.1).sum();
    let pooled_car = if sum_ca > 0.0 { sum_cc / sum_ca } else { f64::INFINITY };
    if alpha <= 0.0 {
        return Err(Error::NoiseDominated(format!("fitted P² coefficient {alpha:.3e} is not positive")));
    }
    if alpha < MIN_ALPHA_SIGNIFICANCE * alpha_se {
        return Err(Error::NoiseDominated(format!(
            "P² coefficient {alpha:.3e} ± {alpha_se:.3e} is below {MIN_ALPHA_SIGNIFICANCE} standard errors"
        )));
    }
    if pooled_car < MIN_POOLED_CAR {
        return Err(Error::NoiseDominated(format!(
            "pooled CAR {pooled_car:.3} is below {MIN_POOLED_CAR}"
        )));
    }
    let scale = eta_s * eta_i * length_m * length_m * duration_s;
    Ok(MuPEstimate {
        mu_p: alpha / scale,
        std_error: alpha_se / scale,
        linear_diagnostic: fit_quadratic_linear(&powers, &net, &sigma).ok(),
        fit,
        pooled_car,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub power_w: f64,
    pub length_m: f64,
    pub duration_s: f64,
    pub c_c: f64,
    pub c_a: f64,
    pub singles_s: f64,
    pub singles_i: f64,
    /// C_c − C_a floored at zero.
    pub true_counts: f64,
    pub car: Option<f64>,
    /// Closed-form counts for the same point.
    pub expected_c_c: f64,
    pub expected_c_a: f64,
}

impl SweepPoint {
    fn expected_only(exp: &Experiment, duration_s: f64) -> Result<Self> {
        let r = expected_rates(exp)?;
        let (c_c, c_a) = (r.coincidence_rate * duration_s, r.accidental_rate * duration_s);
        Ok(SweepPoint {
            power_w: exp.pump.peak_power_w,
            length_m: exp.fiber.length_m,
            duration_s,
            c_c,
            c_a,
            singles_s: r.singles_s * duration_s,
            singles_i: r.singles_i * duration_s,
            true_counts: (c_c - c_a).max(0.0),
            car: (c_a > 0.0).then(|| c_c / c_a),
            expected_c_c: c_c,
            expected_c_a: c_a,
        })
    }

    fn simulated(exp: &Experiment, duration_s: f64, seed: u64) -> Result<Self> {
        let mut p = Self::expected_only(exp, duration_s)?;
        let r = simulate(exp, duration_s, seed)?;
        p.c_c = r.c_c as f64;
        p.c_a = r.c_a;
        p.singles_s = r.singles_s as f64;
        p.singles_i = r.singles_i as f64;
        p.true_counts = true_coincidences(&r).value;
        p.car = (r.c_a > 0.0).then(|| p.c_c / r.c_a);
        Ok(p)
    }
}

/// Runs one counting experiment per configuration; point `i` is seeded from
/// substream `i` of `seed`, or evaluated in closed form when `seed` is `None`.
pub fn run_sweep(configs: &[Experiment], duration_s: f64, seed: Option<u64>) -> Result<Vec<SweepPoint>> {
    configs
        .par_iter()
        .enumerate()
        .map(|(i, exp)| match seed {
            Some(s) => SweepPoint::simulated(exp, duration_s, substream_seed(s, i as u64)),
            None => SweepPoint::expected_only(exp, duration_s),
        })
        .collect()
}

/// μ_p from a power sweep at fixed length and channels.
///
/// Counts are first corrected for detector dead time: a gated detector blind
/// for `b` gates after each click is armed in a fraction `1 − b·S/f_p` of
/// gates, `S` being its recorded singles rate, and a coincidence needs both
/// detectors armed.
pub fn extract_from_sweep(points: &[SweepPoint], exp: &Experiment) -> Result<MuPEstimate> {
    let f = exp.pump.rep_rate_hz;
    let (bs, bi) = (exp.det_s.blind_gates(f) as f64, exp.det_i.blind_gates(f) as f64);
    let mut cc = Vec::with_capacity(points.len());
    let mut ca = Vec::with_capacity(points.len());
    for p in points {
        let armed_s = 1.0 - bs * p.singles_s / (p.duration_s * f);
        let armed_i = 1.0 - bi * p.singles_i / (p.duration_s * f);
        if !(armed_s > 0.0 && armed_i > 0.0) {
            return Err(Error::invalid("sweep", "singles rates saturate the detectors"));
        }
        let k = 1.0 / (armed_s * armed_i);
        cc.push((p.power_w, p.c_c * k));
        ca.push((p.power_w, p.c_a * k));
    }
    let duration = points.first().map_or(0.0, |p| p.duration_s);
    extract_mu_p(&cc, &ca, exp.fiber.length_m, exp.eta_s(), exp.eta_i(), duration)
}

/// Power grid for a μ_p sweep: `n` log-spaced powers over the decade ending
/// where the mean singles reach `target_cps`.
pub fn operating_power_grid(exp: &Experiment, target_cps: f64, n: usize) -> Result<Vec<f64>> {
    let top = power_for_singles(exp, target_cps)?;
    Ok(logspace(top / 10.0, top, n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationPlan {
    /// Singles rate at the top of each power sweep.
    pub target_singles_cps: f64,
    pub points_per_sweep: usize,
    pub duration_s: f64,
    pub seed: u64,
}

impl Default for SimulationPlan {
    fn default() -> Self {
        SimulationPlan {
            target_singles_cps: 3000.0,
            points_per_sweep: 6,
            duration_s: 600.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuPCell {
    pub detuning_ghz: f64,
    pub length_m: f64,
    /// μ_p at the channel centre.
    pub model_mu_p: f64,
    /// μ_p as collected by the channel filters.
    pub model_mu_p_collected: f64,
    /// Extraction from noise-free closed-form counts of the same sweep.
    pub expected: Option<MuPEstimate>,
    pub measured: Option<MuPEstimate>,
    /// Why `measured` is missing, when a simulation was requested.
    pub gap: Option<String>,
    pub sweep: Vec<SweepPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuPTable {
    pub cells: Vec<MuPCell>,
}

impl MuPTable {
    pub fn cell(&self, length_m: f64, detuning_ghz: f64) -> Option<&MuPCell> {
        self.cells.iter().find(|c| {
            (c.length_m - length_m).abs() < 1e-9 && (c.detuning_ghz - detuning_ghz).abs() < 1e-9
        })
    }

    /// Lengths whose model μ_p rises between two increasing detunings, the
    /// signature of a second sinc² lobe.
    pub fn second_lobe_lengths(&self, lower_ghz: f64, upper_ghz: f64) -> Vec<f64> {
        let mut lengths: Vec<f64> = self.cells.iter().map(|c| c.length_m).collect();
        lengths.dedup();
        lengths
            .into_iter()
            .filter(|&l| match (self.cell(l, lower_ghz), self.cell(l, upper_ghz)) {
                (Some(a), Some(b)) => b.model_mu_p > a.model_mu_p,
                _ => false,
            })
            .collect()
    }
}

/// μ_p for every (length, detuning) pair, from the model and, with a `plan`,
/// from simulated power sweeps. Extraction failures become table gaps.
pub fn mu_p_table(
    template: &Experiment,
    detunings_ghz: &[f64],
    lengths_m: &[f64],
    plan: Option<&SimulationPlan>,
) -> Result<MuPTable> {
    if detunings_ghz.is_empty() || lengths_m.is_empty() {
        return Err(Error::invalid("table", "need at least one detuning and one length"));
    }
    let cells: Vec<(usize, f64, f64)> = lengths_m
        .iter()
        .flat_map(|&l| detunings_ghz.iter().map(move |&d| (l, d)))
        .enumerate()
        .map(|(i, (l, d))| (i, l, d))
        .collect();
    let cells = cells
        .par_iter()
        .map(|&(index, length_m, detuning_ghz)| {
            let exp = template.with_length(length_m).with_detuning(detuning_ghz);
            let rates = expected_rates(&exp)?;
            let gain = crate::spectrum::PairGain::new(&exp.pump, &exp.fiber)?;
            let model_mu_p = gain.mu_p(detuning_ghz, exp.signal.bandwidth_ghz)?;
            let mut cell = MuPCell {
                detuning_ghz,
                length_m,
                model_mu_p,
                model_mu_p_collected: rates.pulse.mu_p,
                expected: None,
                measured: None,
                gap: None,
                sweep: Vec::new(),
            };
            let Some(plan) = plan else {
                return Ok(cell);
            };
            let powers = operating_power_grid(&exp, plan.target_singles_cps, plan.points_per_sweep)?;
            let configs: Vec<Experiment> = powers.iter().map(|&p| exp.with_power(p)).collect();
            let expected = run_sweep(&configs, plan.duration_s, None)?;
            cell.expected = extract_from_sweep(&expected, &exp).ok();
            cell.sweep = run_sweep(&configs, plan.duration_s, Some(substream_seed(plan.seed, index as u64)))?;
            match extract_from_sweep(&cell.sweep, &exp) {
                Ok(est) => cell.measured = Some(est),
                Err(e) => cell.gap = Some(e.to_string()),
            }
            Ok(cell)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MuPTable { cells })
}
