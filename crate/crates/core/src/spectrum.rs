//! Pair-generation coefficient μ_p(Δν), pair-generation rate and the
//! half-width of the μ_p spectrum.
//!
//! `μ_p = τ_p·f_p·B·γ²·sinc²(Δk·L/2)` with the unnormalised
//! `sinc(x) = sin(x)/x`; `PGR = μ_p·P_p²·L²`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::{FiberSpec, PumpSpec};
use crate::numeric::{bisect, simpson};
use crate::phase_matching::{DetuningGrid, MismatchOptions, PhaseMismatch};
use crate::units;

/// 100-GHz DWDM passband (0.6 nm FWHM at 1550 nm).
pub const DEFAULT_FILTER_BW_GHZ: f64 = 75.0;

/// Abscissa where `sinc²(x) = 1/2`.
pub const SINC2_HALF_MAX_X: f64 = 1.391_557_378_251_510_3;

/// Unnormalised sinc, `sin(x)/x` with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// How a finite filter passband samples the μ_p spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Collection {
    /// μ_p evaluated at the channel centre (narrow-filter limit).
    Center,
    /// sinc² averaged over a flat-top passband of width B.
    #[default]
    Passband,
}

/// Pre-evaluated μ_p model for one pump/fiber pair.
#[derive(Debug, Clone, Copy)]
pub struct PairGain {
    mismatch: PhaseMismatch,
    /// τ_p·f_p·γ² in W⁻²·m⁻² (multiply by B in Hz for μ_p).
    prefactor: f64,
    length_m: f64,
}

impl PairGain {
    pub fn new(pump: &PumpSpec, fiber: &FiberSpec) -> Result<Self> {
        Self::with_options(pump, fiber, MismatchOptions::default())
    }

    pub fn with_options(pump: &PumpSpec, fiber: &FiberSpec, opts: MismatchOptions) -> Result<Self> {
        let mismatch = PhaseMismatch::new(pump, fiber, opts)?;
        let g = fiber.gamma_si();
        Ok(PairGain {
            mismatch,
            prefactor: pump.pulse_duration_s * pump.rep_rate_hz * g * g,
            length_m: fiber.length_m,
        })
    }

    pub fn mismatch(&self) -> &PhaseMismatch {
        &self.mismatch
    }

    /// sinc²(Δk·L/2) without the window check.
    pub fn sinc2(&self, delta_nu_ghz: f64) -> f64 {
        let s = sinc(self.mismatch.eval(delta_nu_ghz) * self.length_m / 2.0);
        s * s
    }

    /// Upper bound τ_p·f_p·B·γ² of μ_p.
    pub fn peak(&self, filter_bw_ghz: f64) -> f64 {
        self.prefactor * units::ghz_to_hz(filter_bw_ghz)
    }

    pub fn mu_p(&self, delta_nu_ghz: f64, filter_bw_ghz: f64) -> Result<f64> {
        self.mismatch.at(delta_nu_ghz)?;
        Ok(self.peak(filter_bw_ghz) * self.sinc2(delta_nu_ghz))
    }

    /// μ_p with the sinc² factor averaged over `[Δν − B/2, Δν + B/2]`.
    pub fn mu_p_passband(&self, delta_nu_ghz: f64, filter_bw_ghz: f64) -> Result<f64> {
        let (lo, hi) = (
            delta_nu_ghz - filter_bw_ghz / 2.0,
            delta_nu_ghz + filter_bw_ghz / 2.0,
        );
        self.mismatch.at(lo)?;
        self.mismatch.at(hi)?;
        // resolve every sinc² lobe inside the band
        let phase_span =
            (self.mismatch.eval(hi) - self.mismatch.eval(lo)).abs() * self.length_m / 2.0;
        let n = 64 + 32 * (phase_span / std::f64::consts::PI).ceil() as usize;
        let mean = simpson(|nu| self.sinc2(nu), lo, hi, n) / filter_bw_ghz;
        Ok(self.peak(filter_bw_ghz) * mean)
    }

    pub fn mu_p_collected(
        &self,
        delta_nu_ghz: f64,
        filter_bw_ghz: f64,
        collection: Collection,
    ) -> Result<f64> {
        match collection {
            Collection::Center => self.mu_p(delta_nu_ghz, filter_bw_ghz),
            Collection::Passband => self.mu_p_passband(delta_nu_ghz, filter_bw_ghz),
        }
    }
}

fn check_bw(filter_bw_ghz: f64) -> Result<()> {
    if filter_bw_ghz > 0.0 && filter_bw_ghz.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("filter_bw_ghz", "must be > 0"))
    }
}

/// Pair-generation coefficient in pairs·W⁻²·m⁻²·s⁻¹.
pub fn mu_p(delta_nu_ghz: f64, pump: &PumpSpec, fiber: &FiberSpec, filter_bw_ghz: f64) -> Result<f64> {
    check_bw(filter_bw_ghz)?;
    PairGain::new(pump, fiber)?.mu_p(delta_nu_ghz, filter_bw_ghz)
}

/// Pair-generation rate in pairs/s.
pub fn pgr(delta_nu_ghz: f64, pump: &PumpSpec, fiber: &FiberSpec, filter_bw_ghz: f64) -> Result<f64> {
    let p = pump.peak_power_w;
    let l = fiber.length_m;
    Ok(mu_p(delta_nu_ghz, pump, fiber, filter_bw_ghz)? * p * p * l * l)
}

/// Where the half-width is measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum HwhmReference {
    #[default]
    Pump,
    /// From the spectrum maximum (the phase-matched detuning).
    Peak,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HwhmOptions {
    pub reference: HwhmReference,
    pub scan_step_ghz: f64,
    pub tol_ghz: f64,
}

impl Default for HwhmOptions {
    fn default() -> Self {
        HwhmOptions {
            reference: HwhmReference::Pump,
            scan_step_ghz: 1.0,
            tol_ghz: 1e-3,
        }
    }
}

/// Half width at half maximum of the μ_p spectrum, in GHz.
pub fn hwhm_bandwidth(pump: &PumpSpec, fiber: &FiberSpec) -> Result<f64> {
    hwhm_bandwidth_with(pump, fiber, HwhmOptions::default())
}

pub fn hwhm_bandwidth_with(pump: &PumpSpec, fiber: &FiberSpec, opts: HwhmOptions) -> Result<f64> {
    let gain = PairGain::new(pump, fiber)?;
    let peak_at = gain.mismatch().root()?;
    let max = gain.sinc2(0.0).max(gain.sinc2(peak_at));
    let half = 0.5 * max;
    let window = gain.mismatch().window_ghz();
    if gain.sinc2(window) >= half {
        return Err(Error::WindowTooNarrow(format!(
            "spectrum is above half maximum at the {window} GHz window edge"
        )));
    }
    // walk inwards from the window edge to the outermost half-max crossing
    let mut outer = window;
    let mut inner = window;
    while inner > 0.0 {
        inner = (outer - opts.scan_step_ghz).max(0.0);
        if gain.sinc2(inner) >= half {
            break;
        }
        outer = inner;
    }
    let edge = bisect(|nu| gain.sinc2(nu) - half, inner, outer, opts.tol_ghz);
    Ok(match opts.reference {
        HwhmReference::Pump => edge,
        HwhmReference::Peak => edge - peak_at,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub pump: PumpSpec,
    pub fiber: FiberSpec,
    pub filter_bw_ghz: f64,
}

/// μ_p sampled on a detuning grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSpectrum {
    pub grid: DetuningGrid,
    pub mu_p: Vec<f64>,
    pub meta: SpectrumMeta,
}

impl PairSpectrum {
    /// μ_p divided by its upper bound τ_p·f_p·B·γ².
    pub fn normalized(&self) -> Vec<f64> {
        let g = self.meta.fiber.gamma_si();
        let bound = self.meta.pump.pulse_duration_s
            * self.meta.pump.rep_rate_hz
            * units::ghz_to_hz(self.meta.filter_bw_ghz)
            * g
            * g;
        self.mu_p.iter().map(|m| m / bound).collect()
    }
}

pub fn spectrum_sweep(
    grid: &DetuningGrid,
    pump: &PumpSpec,
    fiber: &FiberSpec,
    filter_bw_ghz: f64,
) -> Result<PairSpectrum> {
    check_bw(filter_bw_ghz)?;
    let gain = PairGain::new(pump, fiber)?;
    let mu_p = grid
        .points()
        .par_iter()
        .map(|&nu| gain.mu_p(nu, filter_bw_ghz))
        .collect::<Result<Vec<_>>>()?;
    Ok(PairSpectrum {
        grid: grid.clone(),
        mu_p,
        meta: SpectrumMeta {
            pump: *pump,
            fiber: *fiber,
            filter_bw_ghz,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_matching::phase_matched_detuning;
    use approx::assert_relative_eq;

    #[test]
    fn sinc_conventions() {
        assert_eq!(sinc(0.0), 1.0);
        assert!(sinc(std::f64::consts::PI).abs() < 1e-15);
        let s = sinc(SINC2_HALF_MAX_X);
        assert!((s * s - 0.5).abs() < 1e-15);
    }

    #[test]
    fn peak_value_at_phase_matching() {
        let pump = PumpSpec::standard(3.0);
        let fiber = FiberSpec::smf28_paper(3.8);
        let root = phase_matched_detuning(&pump, &fiber).unwrap();
        let m = mu_p(root, &pump, &fiber, 75.0).unwrap();
        // 15 ps · 18 MHz · 75 GHz · (0.6728e-3)²
        assert_relative_eq!(m, 15e-12 * 18e6 * 75e9 * 0.6728e-3f64.powi(2), max_relative = 1e-9);
        assert!((m - 9.17).abs() < 0.01);
    }

    #[test]
    fn first_null() {
        let pump = PumpSpec::standard(3.0);
        let fiber = FiberSpec::smf28_paper(31.5);
        let gain = PairGain::new(&pump, &fiber).unwrap();
        // Δk·L/2 = π beyond the phase-matched point
        let target = 2.0 * std::f64::consts::PI / fiber.length_m;
        let nu = bisect(|nu| gain.mismatch().eval(nu) - target, 100.0, 2000.0, 1e-9);
        assert!(gain.mu_p(nu, 75.0).unwrap() < 1e-12);
    }

    #[test]
    fn point_at_400ghz_11m() {
        let pump = PumpSpec::standard(3.0);
        let fiber = FiberSpec::smf28_paper(11.4);
        let ratio = mu_p(400.0, &pump, &fiber, 75.0).unwrap() / PairGain::new(&pump, &fiber).unwrap().peak(75.0);
        assert!((ratio - 0.89).abs() < 0.005, "{ratio}");
    }

    #[test]
    fn pgr_laws() {
        let fiber = FiberSpec::smf28_paper(11.4);
        let pump = PumpSpec::standard(3.0);
        let root = phase_matched_detuning(&pump, &fiber).unwrap();
        let r = pgr(root, &pump, &fiber, 75.0).unwrap();
        assert!((r / 1.07e4 - 1.0).abs() < 0.02, "{r}");
        // P² law holds exactly only at fixed sinc², so compare with SPM off
        let opts = MismatchOptions { include_spm: false, ..Default::default() };
        let g1 = PairGain::with_options(&pump, &fiber, opts).unwrap();
        let g2 = PairGain::with_options(&pump.with_power(6.0), &fiber, opts).unwrap();
        let r1 = g1.mu_p(400.0, 75.0).unwrap() * 9.0;
        let r2 = g2.mu_p(400.0, 75.0).unwrap() * 36.0;
        assert_relative_eq!(r2 / r1, 4.0, max_relative = 1e-12);
    }

    #[test]
    fn passband_average_matches_center_for_short_fiber() {
        let pump = PumpSpec::standard(3.0);
        let gain = PairGain::new(&pump, &FiberSpec::smf28_paper(3.8)).unwrap();
        let c = gain.mu_p(400.0, 75.0).unwrap();
        let p = gain.mu_p_passband(400.0, 75.0).unwrap();
        assert!((p / c - 1.0).abs() < 2e-3);
    }

    #[test]
    fn passband_average_oracle_long_fiber() {
        // brute-force midpoint rule over the band
        let pump = PumpSpec::standard(3.0);
        let gain = PairGain::new(&pump, &FiberSpec::smf28_paper(308.0)).unwrap();
        let n = 200_000;
        let brute: f64 = (0..n)
            .map(|i| gain.sinc2(362.5 + 75.0 * (i as f64 + 0.5) / n as f64))
            .sum::<f64>()
            / n as f64;
        let p = gain.mu_p_passband(400.0, 75.0).unwrap() / gain.peak(75.0);
        assert_relative_eq!(p, brute, max_relative = 1e-6);
    }

    #[test]
    fn hwhm_reference_peak() {
        let pump = PumpSpec::standard(3.0);
        let fiber = FiberSpec::smf28_paper(308.0);
        let from_pump = hwhm_bandwidth(&pump, &fiber).unwrap();
        let opts = HwhmOptions { reference: HwhmReference::Peak, ..Default::default() };
        let from_peak = hwhm_bandwidth_with(&pump, &fiber, opts).unwrap();
        let root = phase_matched_detuning(&pump, &fiber).unwrap();
        assert_relative_eq!(from_pump - from_peak, root, max_relative = 1e-6);
    }

    #[test]
    fn narrow_window_is_an_error() {
        let pump = PumpSpec::standard(3.0);
        let fiber = FiberSpec::smf28_paper(0.01);
        assert!(matches!(hwhm_bandwidth(&pump, &fiber), Err(Error::WindowTooNarrow(_))));
    }

    #[test]
    fn single_point_sweep() {
        let pump = PumpSpec::standard(3.0);
        let fiber = FiberSpec::smf28_paper(3.8);
        let grid = DetuningGrid::from_points(vec![400.0]).unwrap();
        let s = spectrum_sweep(&grid, &pump, &fiber, 75.0).unwrap();
        assert_eq!(s.mu_p.len(), 1);
        assert_eq!(s.mu_p[0], mu_p(400.0, &pump, &fiber, 75.0).unwrap());
    }

    #[test]
    fn bad_bandwidth() {
        let pump = PumpSpec::standard(3.0);
        let fiber = FiberSpec::smf28_paper(3.8);
        assert!(mu_p(400.0, &pump, &fiber, 0.0).is_err());
    }
}
