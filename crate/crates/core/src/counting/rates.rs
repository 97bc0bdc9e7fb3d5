use serde::{Deserialize, Serialize};

use super::Experiment;
use crate::error::{Error, Result};
use crate::spectrum::PairGain;

/// Per-pulse Poisson means of every independent detection source.
///
/// Pairs are thinned per photon, so the numbers of pairs detected at the
/// signal only, the idler only and at both detectors are independent
/// Poisson variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseModel {
    /// Channel-collected μ_p (pairs·W⁻²·m⁻²·s⁻¹).
    pub mu_p: f64,
    /// Mean generated pairs per pulse inside the channel pair.
    pub pairs: f64,
    pub eta_s: f64,
    pub eta_i: f64,
    /// Mean Raman noise photons per pulse reaching each channel (before loss).
    pub noise_s: f64,
    pub noise_i: f64,
    pub dark_s: f64,
    pub dark_i: f64,
}

impl PulseModel {
    pub fn new(exp: &Experiment) -> Result<Self> {
        exp.validate()?;
        let (s, i) = (exp.signal, exp.idler);
        let mirrored = s.detuning_ghz * i.detuning_ghz < 0.0
            && (s.detuning_ghz.abs() - i.detuning_ghz.abs()).abs()
                <= 1e-9 * s.detuning_ghz.abs().max(1.0);
        if !mirrored {
            return Err(Error::EnergyConservationMismatch {
                signal_ghz: s.detuning_ghz,
                idler_ghz: i.detuning_ghz,
            });
        }
        let gain = PairGain::new(&exp.pump, &exp.fiber)?;
        // a pair is collected only where both mirrored passbands overlap
        let bw = s.bandwidth_ghz.min(i.bandwidth_ghz);
        let mu_p = gain.mu_p_collected(s.detuning_ghz.abs(), bw, exp.counting.collection)?;
        let p = exp.pump.peak_power_w;
        let l = exp.fiber.length_m;
        let pairs = mu_p * p * p * l * l / exp.pump.rep_rate_hz;
        let raman = exp.fiber.raman_coeff * p * l;
        Ok(PulseModel {
            mu_p,
            pairs,
            eta_s: exp.eta_s(),
            eta_i: exp.eta_i(),
            noise_s: raman * s.bandwidth_ghz,
            noise_i: raman * i.bandwidth_ghz,
            dark_s: exp.det_s.dark_prob_per_gate,
            dark_i: exp.det_i.dark_prob_per_gate,
        })
    }

    /// Poisson means in the order: signal-only pairs, idler-only pairs,
    /// pairs seen at both, signal noise, idler noise, signal dark, idler dark.
    pub fn source_means(&self) -> [f64; 7] {
        let (es, ei, m) = (self.eta_s, self.eta_i, self.pairs);
        [
            m * es * (1.0 - ei),
            m * (1.0 - es) * ei,
            m * es * ei,
            self.noise_s * es,
            self.noise_i * ei,
            -(-self.dark_s).ln_1p(),
            -(-self.dark_i).ln_1p(),
        ]
    }

    /// Probability that the signal detector fires in an armed gate.
    pub fn click_prob_s(&self) -> f64 {
        let m = self.eta_s * (self.pairs + self.noise_s);
        -(-m).exp_m1() * (1.0 - self.dark_s) + self.dark_s
    }

    pub fn click_prob_i(&self) -> f64 {
        let m = self.eta_i * (self.pairs + self.noise_i);
        -(-m).exp_m1() * (1.0 - self.dark_i) + self.dark_i
    }

    /// Probability that both detectors fire in the same armed gate.
    pub fn joint_click_prob(&self) -> f64 {
        let (ps, pi) = (self.click_prob_s(), self.click_prob_i());
        ps * pi + (1.0 - ps) * (1.0 - pi) * (self.pairs * self.eta_s * self.eta_i).exp_m1()
    }
}

/// Closed-form count rates (per second) of a counting experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub pulse: PulseModel,
    /// μ_p·η_s·η_i·L²·P_p², ignoring detector dead time.
    pub true_coincidence_rate: f64,
    pub click_prob_s: f64,
    pub click_prob_i: f64,
    /// Singles without dead-time losses: f_p·p.
    pub singles_raw_s: f64,
    pub singles_raw_i: f64,
    /// Fraction of gates in which each detector is armed.
    pub armed_s: f64,
    pub armed_i: f64,
    /// Recorded singles.
    pub singles_s: f64,
    pub singles_i: f64,
    /// Expected counts per second in the zero-delay window (C_c/T).
    pub coincidence_rate: f64,
    /// Expected counts per second in one side window (C_a/T).
    pub accidental_rate: f64,
    /// Expected C_c/C_a.
    pub car: f64,
}

impl RateReport {
    /// Recorded true coincidences per second, (C_c − C_a)/T.
    pub fn net_coincidence_rate(&self) -> f64 {
        self.coincidence_rate - self.accidental_rate
    }
}

/// Closed-form singles, coincidence and accidental rates.
///
/// A detector that fired is blind for [`super::DetectorSpec::blind_gates`]
/// gates, so it is armed in a fraction `1/(1 + b·p)` of gates. Accidentals
/// in a side window need an armed click in two different pulses, giving
/// `f_p·A_s·A_i·p_s·p_i`.
pub fn expected_rates(exp: &Experiment) -> Result<RateReport> {
    let pulse = PulseModel::new(exp)?;
    let f = exp.pump.rep_rate_hz;
    let (ps, pi) = (pulse.click_prob_s(), pulse.click_prob_i());
    let armed_s = 1.0 / (1.0 + exp.det_s.blind_gates(f) as f64 * ps);
    let armed_i = 1.0 / (1.0 + exp.det_i.blind_gates(f) as f64 * pi);
    let p = exp.pump.peak_power_w;
    let l = exp.fiber.length_m;
    let coincidence_rate = f * armed_s * armed_i * pulse.joint_click_prob();
    let accidental_rate = f * armed_s * armed_i * ps * pi;
    Ok(RateReport {
        pulse,
        true_coincidence_rate: pulse.mu_p * pulse.eta_s * pulse.eta_i * l * l * p * p,
        click_prob_s: ps,
        click_prob_i: pi,
        singles_raw_s: f * ps,
        singles_raw_i: f * pi,
        armed_s,
        armed_i,
        singles_s: f * ps * armed_s,
        singles_i: f * pi * armed_i,
        coincidence_rate,
        accidental_rate,
        car: if accidental_rate > 0.0 {
            coincidence_rate / accidental_rate
        } else {
            f64::INFINITY
        },
    })
}
