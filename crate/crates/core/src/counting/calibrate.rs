use serde::{Deserialize, Serialize};

use super::{expected_rates, Experiment};
use crate::error::{Error, Result};
use crate::numeric::{bisect, golden_min};

/// (length m, peak power W) pairs at which the measured singles were about
/// 3000 cps: 13.5 W on 3.8 m (≈51 W·m) and 0.75 W on 308 m (≈230 W·m).
pub const SINGLES_ANCHORS: [(f64, f64); 2] = [(3.8, 13.5), (308.0, 0.75)];

/// Detector singles ceiling kept in the experiment.
pub const SINGLES_CAP_CPS: f64 = 10_000.0;

fn mean_singles(exp: &Experiment) -> Result<f64> {
    let r = expected_rates(exp)?;
    Ok(0.5 * (r.singles_s + r.singles_i))
}

/// Pump peak power (W) at which the mean recorded singles rate equals
/// `target_cps`.
pub fn power_for_singles(exp: &Experiment, target_cps: f64) -> Result<f64> {
    if target_cps > SINGLES_CAP_CPS {
        return Err(Error::invalid(
            "target_cps",
            format!("{target_cps} cps exceeds the detector singles ceiling of {SINGLES_CAP_CPS} cps"),
        ));
    }
    let (lo, hi) = (1e-6, 1e4);
    let at = |p: f64| mean_singles(&exp.with_power(p));
    if !(target_cps > at(lo)? && target_cps < at(hi)?) {
        return Err(Error::invalid(
            "target_cps",
            format!("{target_cps} cps is not reachable between {lo} W and {hi} W"),
        ));
    }
    let ln_p = bisect(
        |x| at(x.exp()).map(|s| s.ln() - target_cps.ln()).unwrap_or(f64::NAN),
        lo.ln(),
        hi.ln(),
        1e-10,
    );
    Ok(ln_p.exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamanCalibration {
    pub raman_coeff: f64,
    pub target_cps: f64,
    /// (length m, power W, predicted singles cps) for every anchor.
    pub anchors: Vec<(f64, f64, f64)>,
    /// RMS of ln(predicted/target) over the anchors.
    pub rms_log_residual: f64,
}

/// Single Raman coefficient that best puts every anchor at `target_cps`
/// singles, in the least-squares sense on ln(singles).
pub fn calibrate_raman_coeff(
    template: &Experiment,
    anchors: &[(f64, f64)],
    target_cps: f64,
) -> Result<RamanCalibration> {
    if anchors.is_empty() {
        return Err(Error::invalid("anchors", "need at least one anchor"));
    }
    let cost = |log10_c: f64| -> Result<f64> {
        let mut acc = 0.0;
        for &(l, p) in anchors {
            let mut e = template.with_length(l).with_power(p);
            e.fiber.raman_coeff = 10f64.powf(log10_c);
            acc += (mean_singles(&e)? / target_cps).ln().powi(2);
        }
        Ok(acc)
    };
    cost(-6.0)?;
    let best = golden_min(|x| cost(x).unwrap_or(f64::INFINITY), -12.0, -2.0, 1e-9);
    let raman_coeff = 10f64.powf(best);
    let mut rows = Vec::with_capacity(anchors.len());
    for &(l, p) in anchors {
        let mut e = template.with_length(l).with_power(p);
        e.fiber.raman_coeff = raman_coeff;
        rows.push((l, p, mean_singles(&e)?));
    }
    Ok(RamanCalibration {
        raman_coeff,
        target_cps,
        anchors: rows,
        rms_log_residual: (cost(best)? / anchors.len() as f64).sqrt(),
    })
}
