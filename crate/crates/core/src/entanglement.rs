//! Polarization-entangled pairs |HH⟩ ± |VV⟩: polarizer fringes, visibility
//! fits and CHSH estimation.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Signal polarizer angles of the CHSH grid: a, a′, a⊥, a′⊥.
pub const CHSH_THETA1_DEG: [f64; 4] = [-45.0, 0.0, 45.0, 90.0];
/// Idler polarizer angles of the CHSH grid: b, b′, b⊥, b′⊥.
pub const CHSH_THETA2_DEG: [f64; 4] = [-22.5, 22.5, 67.5, 112.5];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntangledSourceSpec {
    pub visibility: f64,
    /// +1 for |HH⟩ + |VV⟩, −1 for |HH⟩ − |VV⟩.
    pub phase_sign: i8,
    /// Expected coincidences per accumulation period at the fringe maximum of
    /// an ideal state.
    pub rate_scale: f64,
    /// Expected accidentals per accumulation period, added to every setting.
    pub accidental_floor: f64,
    pub accumulation_s: f64,
}

impl EntangledSourceSpec {
    pub fn new(visibility: f64, rate_scale: f64, accidental_floor: f64) -> Self {
        EntangledSourceSpec {
            visibility,
            phase_sign: 1,
            rate_scale,
            accidental_floor,
            accumulation_s: 1.0,
        }
    }

    /// Source seen through polarizers, given the unpolarized true-pair and
    /// accidental coincidence rates of the counting experiment.
    ///
    /// A polarizer pair passes on average a quarter of the pairs over the four
    /// (θ, θ⊥) combinations, so the fringe maximum is half the pair rate; each
    /// polarizer halves the singles, so accidentals drop by four.
    pub fn from_rates(visibility: f64, true_rate: f64, accidental_rate: f64, accumulation_s: f64) -> Self {
        EntangledSourceSpec {
            visibility,
            phase_sign: 1,
            rate_scale: 0.5 * true_rate * accumulation_s,
            accidental_floor: 0.25 * accidental_rate * accumulation_s,
            accumulation_s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(Error::invalid("visibility", "must lie in [0, 1]"));
        }
        if self.phase_sign != 1 && self.phase_sign != -1 {
            return Err(Error::invalid("phase_sign", "must be +1 or -1"));
        }
        if !(self.rate_scale > 0.0 && self.rate_scale.is_finite()) {
            return Err(Error::invalid("rate_scale", "must be > 0"));
        }
        if !(self.accidental_floor >= 0.0 && self.accidental_floor.is_finite()) {
            return Err(Error::invalid("accidental_floor", "must be >= 0"));
        }
        if !(self.accumulation_s > 0.0) {
            return Err(Error::invalid("accumulation_s", "must be > 0"));
        }
        Ok(())
    }

    /// Expected counts at one polarizer setting.
    pub fn expected_counts(&self, theta1_deg: f64, theta2_deg: f64) -> f64 {
        self.rate_scale * 2.0 * coincidence_probability(theta1_deg, theta2_deg, self) + self.accidental_floor
    }
}

/// Probability that a pair passes polarizers at θ1 (signal) and θ2 (idler),
/// normalised so the four (θ, θ⊥) combinations sum to one.
pub fn coincidence_probability(theta1_deg: f64, theta2_deg: f64, source: &EntangledSourceSpec) -> f64 {
    let arg = if source.phase_sign < 0 {
        theta1_deg + theta2_deg
    } else {
        theta1_deg - theta2_deg
    };
    (1.0 + source.visibility * (2.0 * arg.to_radians()).cos()) / 4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeScan {
    pub theta1_deg: f64,
    pub theta2_deg: Vec<f64>,
    pub counts: Vec<f64>,
    /// Accumulation time per point.
    pub duration_s: f64,
}

impl FringeScan {
    /// Noise-free fringe of expected counts.
    pub fn expected(theta1_deg: f64, theta2_grid: &[f64], source: &EntangledSourceSpec) -> Self {
        FringeScan {
            theta1_deg,
            theta2_deg: theta2_grid.to_vec(),
            counts: theta2_grid
                .iter()
                .map(|&t2| source.expected_counts(theta1_deg, t2))
                .collect(),
            duration_s: source.accumulation_s,
        }
    }

    /// Copy with a constant accidental level removed (floored at zero).
    pub fn subtract_floor(&self, floor: f64) -> Self {
        FringeScan {
            counts: self.counts.iter().map(|c| (c - floor).max(0.0)).collect(),
            ..self.clone()
        }
    }
}

/// Poisson fringe: point `i` draws from substream `i` of `seed`.
pub fn generate_fringe(
    theta1_deg: f64,
    theta2_grid: &[f64],
    source: &EntangledSourceSpec,
    seed: u64,
) -> Result<FringeScan> {
    source.validate()?;
    if theta2_grid.is_empty() || theta2_grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("theta2_grid", "must be a non-empty list of finite angles"));
    }
    let counts = theta2_grid
        .par_iter()
        .enumerate()
        .map(|(i, &t2)| poisson_draw(source.expected_counts(theta1_deg, t2), seed, i as u64))
        .collect();
    Ok(FringeScan {
        theta1_deg,
        theta2_deg: theta2_grid.to_vec(),
        counts,
        duration_s: source.accumulation_s,
    })
}

fn poisson_draw(mean: f64, seed: u64, stream: u64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    Poisson::new(mean).expect("positive mean").sample(&mut rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityFit {
    pub visibility: f64,
    /// Fringe phase φ in degrees, in (−90, 90].
    pub phase_deg: f64,
    pub amplitude: f64,
    /// First-order standard error of V from the residual scatter.
    pub visibility_se: f64,
    /// No resolvable modulation; V is reported as 0.
    pub degenerate: bool,
}

/// Least-squares fit of counts = A·(1 + V cos 2(θ2 − φ)).
pub fn fit_visibility(scan: &FringeScan) -> Result<VisibilityFit> {
    let n = scan.counts.len();
    if n != scan.theta2_deg.len() {
        return Err(Error::invalid("scan", "angle and count arrays differ in length"));
    }
    if n < 8 {
        return Err(Error::invalid("scan", "need at least 8 points"));
    }
    let (lo, hi) = scan
        .theta2_deg
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| (lo.min(t), hi.max(t)));
    if hi - lo < 180.0 - 1e-9 {
        return Err(Error::invalid("scan", "angles must span at least 180 degrees"));
    }
    if scan.counts.iter().any(|&c| !(c >= 0.0 && c.is_finite())) {
        return Err(Error::invalid("scan", "counts must be finite and non-negative"));
    }

    let mut xtx = Matrix3::zeros();
    let mut xty = Vector3::zeros();
    for (&t, &y) in scan.theta2_deg.iter().zip(&scan.counts) {
        let a = 2.0 * t.to_radians();
        let row = Vector3::new(1.0, a.cos(), a.sin());
        xtx += row * row.transpose();
        xty += row * y;
    }
    let inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::Fit("fringe design matrix is singular".into()))?;
    let beta = inv * xty;
    let (a0, a1, a2) = (beta[0], beta[1], beta[2]);
    if a0 <= 0.0 {
        return Ok(VisibilityFit {
            visibility: 0.0,
            phase_deg: 0.0,
            amplitude: 0.0,
            visibility_se: 1.0,
            degenerate: true,
        });
    }
    let m = a1.hypot(a2);
    if m <= 1e-12 * a0 {
        return Ok(VisibilityFit {
            visibility: 0.0,
            phase_deg: 0.0,
            amplitude: a0,
            visibility_se: 1.0,
            degenerate: true,
        });
    }

    let rss: f64 = scan
        .theta2_deg
        .iter()
        .zip(&scan.counts)
        .map(|(&t, &y)| {
            let a = 2.0 * t.to_radians();
            let r = y - (a0 + a1 * a.cos() + a2 * a.sin());
            r * r
        })
        .sum();
    let cov = inv * (rss / (n as f64 - 3.0).max(1.0));
    // gradient of V = hypot(a1, a2) / a0
    let v = m / a0;
    let g = Vector3::new(-v / a0, a1 / (m * a0), a2 / (m * a0));
    let var = (g.transpose() * cov * g)[0].max(0.0);

    Ok(VisibilityFit {
        visibility: v.min(1.0),
        phase_deg: 0.5 * a2.atan2(a1).to_degrees(),
        amplitude: a0,
        visibility_se: var.sqrt(),
        degenerate: false,
    })
}

/// CHSH parameter for maximally entangled settings at fringe visibility V.
pub fn s_from_visibility(visibility: f64) -> f64 {
    2.0 * std::f64::consts::SQRT_2 * visibility
}

/// Coincidence counts on the 16-setting CHSH grid,
/// `counts[i][j]` at ([`CHSH_THETA1_DEG`]\[i\], [`CHSH_THETA2_DEG`]\[j\]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshCounts {
    pub counts: [[f64; 4]; 4],
}

fn same_angle(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-6
}

impl ChshCounts {
    /// Builds the grid from (θ1, θ2, count) triples; every setting must appear.
    pub fn from_settings(entries: &[(f64, f64, f64)]) -> Result<Self> {
        let mut counts = [[f64::NAN; 4]; 4];
        for &(t1, t2, c) in entries {
            let i = CHSH_THETA1_DEG.iter().position(|&a| same_angle(a, t1));
            let j = CHSH_THETA2_DEG.iter().position(|&b| same_angle(b, t2));
            if let (Some(i), Some(j)) = (i, j) {
                if !(c >= 0.0) {
                    return Err(Error::invalid("counts", format!("negative count at ({t1}°, {t2}°)")));
                }
                counts[i][j] = c;
            }
        }
        for (i, row) in counts.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                if c.is_nan() {
                    return Err(Error::MissingSetting {
                        theta1_deg: CHSH_THETA1_DEG[i],
                        theta2_deg: CHSH_THETA2_DEG[j],
                    });
                }
            }
        }
        Ok(ChshCounts { counts })
    }

    pub fn expected(source: &EntangledSourceSpec) -> Self {
        let mut counts = [[0.0; 4]; 4];
        for (i, &t1) in CHSH_THETA1_DEG.iter().enumerate() {
            for (j, &t2) in CHSH_THETA2_DEG.iter().enumerate() {
                counts[i][j] = source.expected_counts(t1, t2);
            }
        }
        ChshCounts { counts }
    }

    /// Poisson counts; setting (i, j) draws from substream 4i + j of `seed`.
    pub fn simulate(source: &EntangledSourceSpec, seed: u64) -> Result<Self> {
        source.validate()?;
        let expected = Self::expected(source);
        let mut counts = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                counts[i][j] = poisson_draw(expected.counts[i][j], seed, (4 * i + j) as u64);
            }
        }
        Ok(ChshCounts { counts })
    }

    pub fn subtract_floor(&self, floor: f64) -> Self {
        let mut counts = self.counts;
        counts.iter_mut().flatten().for_each(|c| *c = (*c - floor).max(0.0));
        ChshCounts { counts }
    }

    pub fn entries(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(16);
        for (i, &t1) in CHSH_THETA1_DEG.iter().enumerate() {
            for (j, &t2) in CHSH_THETA2_DEG.iter().enumerate() {
                out.push((t1, t2, self.counts[i][j]));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub theta1_deg: f64,
    pub theta2_deg: f64,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshResult {
    pub s_value: f64,
    pub s_error: f64,
    /// E(a,b), E(a,b′), E(a′,b), E(a′,b′).
    pub correlations: [Correlation; 4],
    /// Index of the correlation carrying the minus sign in the reported S.
    pub minus_term: usize,
}

/// CHSH S from the 16-setting grid, with first-order Poisson error.
///
/// S is the largest of the four sign arrangements |Σ ± E| with a single
/// minus; for |HH⟩ + |VV⟩ that is E(a,b) − E(a,b′) + E(a′,b) + E(a′,b′).
pub fn chsh_from_counts(counts: &ChshCounts) -> Result<ChshResult> {
    let c = &counts.counts;
    // (a index, a⊥ index) and (b index, b⊥ index) into the grid
    let corr = |ia: usize, ib: usize| -> Result<Correlation> {
        let (ip, jp) = (ia + 2, ib + 2);
        let n = [c[ia][ib], c[ip][jp], c[ia][jp], c[ip][ib]];
        let sign = [1.0, 1.0, -1.0, -1.0];
        let total: f64 = n.iter().sum();
        if total <= 0.0 {
            return Err(Error::UndefinedCorrelation {
                theta1_deg: CHSH_THETA1_DEG[ia],
                theta2_deg: CHSH_THETA2_DEG[ib],
            });
        }
        let e = n.iter().zip(sign).map(|(n, s)| s * n).sum::<f64>() / total;
        let var = n
            .iter()
            .zip(sign)
            .map(|(n, s)| (s - e).powi(2) * n)
            .sum::<f64>()
            / (total * total);
        Ok(Correlation {
            theta1_deg: CHSH_THETA1_DEG[ia],
            theta2_deg: CHSH_THETA2_DEG[ib],
            value: e,
            std_error: var.sqrt(),
        })
    };
    let correlations = [corr(0, 0)?, corr(0, 1)?, corr(1, 0)?, corr(1, 1)?];
    let sum: f64 = correlations.iter().map(|e| e.value).sum();
    let (minus_term, s_value) = (0..4)
        .map(|k| (k, (sum - 2.0 * correlations[k].value).abs()))
        .fold((1, f64::NEG_INFINITY), |best, cand| if cand.1 > best.1 + 1e-15 { cand } else { best });
    let s_error = correlations.iter().map(|e| e.std_error.powi(2)).sum::<f64>().sqrt();
    Ok(ChshResult {
        s_value,
        s_error,
        correlations,
        minus_term,
    })
}
