//! Wavevector mismatch between the degenerate pump pair and the
//! signal/idler photons, and the phase-matched detuning `Δk = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::{FiberSpec, PumpSpec};
use crate::numeric::bisect;
use crate::units;

/// Largest |Δν| (GHz) the mismatch model is evaluated at.
pub const DEFAULT_WINDOW_GHZ: f64 = 5000.0;

/// Root tolerance (GHz) for [`phase_matched_detuning`].
pub const ROOT_TOL_GHZ: f64 = 1e-4;

/// Detuning samples Δν from the pump, in GHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetuningGrid {
    points: Vec<f64>,
}

impl DetuningGrid {
    /// `start, start + step, …` up to and including `stop` (within 1e-9 of a step).
    pub fn uniform(start_ghz: f64, stop_ghz: f64, step_ghz: f64) -> Result<Self> {
        if !(step_ghz > 0.0) {
            return Err(Error::invalid("grid.step_ghz", "must be > 0"));
        }
        if !(start_ghz < stop_ghz) {
            return Err(Error::invalid("grid.start_ghz", "must be below stop_ghz"));
        }
        let n = ((stop_ghz - start_ghz) / step_ghz + 1e-9).floor() as usize + 1;
        if n < 2 {
            return Err(Error::invalid("grid", "needs at least 2 points"));
        }
        let points = (0..n).map(|i| start_ghz + i as f64 * step_ghz).collect();
        Ok(DetuningGrid { points })
    }

    /// Arbitrary (non-empty, finite) list of detunings, e.g. a single channel.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("grid", "needs at least one finite point"));
        }
        Ok(DetuningGrid { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// How the dispersive part of Δk is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum KModel {
    /// Even Taylor terms β2 and β4.
    #[default]
    Truncated,
    /// k(ω) from numerical double integration of β2(ω).
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MismatchOptions {
    /// Include the self-phase-modulation term `−2γP_p`.
    pub include_spm: bool,
    pub model: KModel,
    pub window_ghz: f64,
}

impl Default for MismatchOptions {
    fn default() -> Self {
        MismatchOptions {
            include_spm: true,
            model: KModel::Truncated,
            window_ghz: DEFAULT_WINDOW_GHZ,
        }
    }
}

/// Pre-evaluated Δk(Δν) for one pump/fiber pair.
#[derive(Debug, Clone, Copy)]
pub struct PhaseMismatch {
    beta2: f64,
    beta4: f64,
    spm: f64,
    omega_p: f64,
    disp: crate::fiber::Dispersion,
    opts: MismatchOptions,
}

impl PhaseMismatch {
    pub fn new(pump: &PumpSpec, fiber: &FiberSpec, opts: MismatchOptions) -> Result<Self> {
        pump.validate()?;
        fiber.validate()?;
        let beta2 = crate::fiber::beta_n(pump.lambda_p_nm, 2, fiber)?;
        let beta4 = crate::fiber::beta_n(pump.lambda_p_nm, 4, fiber)?;
        let spm = if opts.include_spm {
            2.0 * fiber.gamma_si() * pump.peak_power_w
        } else {
            0.0
        };
        Ok(PhaseMismatch {
            beta2,
            beta4,
            spm,
            omega_p: pump.omega(),
            disp: fiber.dispersion(),
            opts,
        })
    }

    pub fn beta2(&self) -> f64 {
        self.beta2
    }

    pub fn window_ghz(&self) -> f64 {
        self.opts.window_ghz
    }

    /// Δk in m⁻¹ without the window check.
    pub fn eval(&self, delta_nu_ghz: f64) -> f64 {
        let omega = units::detuning_ghz_to_omega(delta_nu_ghz.abs());
        let dispersive = match self.opts.model {
            KModel::Truncated => {
                let w2 = omega * omega;
                -self.beta2 * w2 - self.beta4 / 12.0 * w2 * w2
            }
            KModel::Exact => {
                -(self.disp.k_offset(self.omega_p, omega) + self.disp.k_offset(self.omega_p, -omega))
            }
        };
        dispersive - self.spm
    }

    /// Δk in m⁻¹; rejects detunings outside the model window.
    pub fn at(&self, delta_nu_ghz: f64) -> Result<f64> {
        if !(delta_nu_ghz.abs() <= self.opts.window_ghz) {
            return Err(Error::DetuningOutOfWindow {
                delta_nu_ghz,
                window_ghz: self.opts.window_ghz,
            });
        }
        Ok(self.eval(delta_nu_ghz))
    }

    /// Positive root of Δk(Δν) = 0 in GHz.
    pub fn root(&self) -> Result<f64> {
        if self.beta2 >= 0.0 {
            return Err(Error::NoPhaseMatching { beta2: self.beta2 });
        }
        let hi = self.opts.window_ghz;
        if self.eval(0.0) >= 0.0 {
            return Ok(0.0);
        }
        if self.eval(hi) < 0.0 {
            return Err(Error::WindowTooNarrow(format!(
                "delta k stays negative up to {hi} GHz"
            )));
        }
        Ok(bisect(|x| self.eval(x), 0.0, hi, ROOT_TOL_GHZ))
    }
}

/// Δk(Δν) in m⁻¹ with the truncated Taylor model and the SPM term.
pub fn delta_k(delta_nu_ghz: f64, pump: &PumpSpec, fiber: &FiberSpec) -> Result<f64> {
    PhaseMismatch::new(pump, fiber, MismatchOptions::default())?.at(delta_nu_ghz)
}

/// Phase-matched detuning Δν* > 0 in GHz.
pub fn phase_matched_detuning(pump: &PumpSpec, fiber: &FiberSpec) -> Result<f64> {
    PhaseMismatch::new(pump, fiber, MismatchOptions::default())?.root()
}

/// γ (W⁻¹·km⁻¹) that places the phase-matched detuning at `target_ghz`.
pub fn calibrate_gamma(target_ghz: f64, pump: &PumpSpec, fiber: &FiberSpec) -> Result<f64> {
    let opts = MismatchOptions {
        include_spm: false,
        ..MismatchOptions::default()
    };
    let dispersive = PhaseMismatch::new(pump, fiber, opts)?.at(target_ghz)?;
    if dispersive <= 0.0 {
        return Err(Error::NoPhaseMatching {
            beta2: crate::fiber::beta_n(pump.lambda_p_nm, 2, fiber)?,
        });
    }
    Ok(units::gamma_from_si(dispersive / (2.0 * pump.peak_power_w)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn setup(p: f64) -> (PumpSpec, FiberSpec) {
        (PumpSpec::standard(p), FiberSpec::smf28_paper(308.0))
    }

    #[test]
    fn zero_detuning_is_spm_only() {
        let (pump, fiber) = setup(3.0);
        let dk = delta_k(0.0, &pump, &fiber).unwrap();
        assert_relative_eq!(dk, -2.0 * fiber.gamma_si() * 3.0, max_relative = 1e-12);
        assert!((dk + 4.0e-3).abs() < 1e-4);
    }

    #[test]
    fn mismatch_at_400ghz() {
        let (pump, fiber) = setup(3.0);
        // -beta2 (2π·400 GHz)² - 2γP with beta2 = -1.70689e-26 s²/m
        let dk = delta_k(400.0, &pump, &fiber).unwrap();
        assert!((dk - 0.104).abs() < 0.001, "{dk}");
    }

    #[test]
    fn root_at_3w() {
        let (pump, fiber) = setup(3.0);
        let root = phase_matched_detuning(&pump, &fiber).unwrap();
        assert!((root - 77.4).abs() < 0.1, "{root}");
        assert!(delta_k(root, &pump, &fiber).unwrap().abs() < 1e-6);
    }

    #[test]
    fn root_vanishes_with_power() {
        let (pump, fiber) = setup(1e-9);
        assert!(phase_matched_detuning(&pump, &fiber).unwrap() < 0.01);
    }

    #[test]
    fn normal_dispersion_pump_has_no_root() {
        let fiber = FiberSpec::smf28_paper(10.0);
        let pump = PumpSpec {
            lambda_p_nm: 1300.0,
            ..PumpSpec::standard(3.0)
        };
        assert!(matches!(
            phase_matched_detuning(&pump, &fiber),
            Err(Error::NoPhaseMatching { .. })
        ));
    }

    #[test]
    fn out_of_window() {
        let (pump, fiber) = setup(3.0);
        assert!(matches!(
            delta_k(6000.0, &pump, &fiber),
            Err(Error::DetuningOutOfWindow { .. })
        ));
    }

    #[test]
    fn gamma_calibration_recovers_preset() {
        let (pump, fiber) = setup(3.0);
        let g = calibrate_gamma(77.4, &pump, &fiber).unwrap();
        assert!((g - crate::fiber::GAMMA_SMF28_PAPER).abs() < 5e-5, "{g}");
        let fiber = FiberSpec::smf28_datasheet(1.0);
        let g = calibrate_gamma(77.4, &pump, &fiber).unwrap();
        assert!((g - crate::fiber::GAMMA_SMF28_DATASHEET).abs() < 5e-5, "{g}");
    }

    #[test]
    fn grids() {
        let g = DetuningGrid::uniform(-100.0, 100.0, 50.0).unwrap();
        assert_eq!(g.points(), &[-100.0, -50.0, 0.0, 50.0, 100.0]);
        assert!(DetuningGrid::uniform(1.0, 0.0, 1.0).is_err());
        assert!(DetuningGrid::uniform(0.0, 1.0, 0.0).is_err());
        assert_eq!(DetuningGrid::from_points(vec![400.0]).unwrap().len(), 1);
        assert!(DetuningGrid::from_points(vec![]).is_err());
    }
}
