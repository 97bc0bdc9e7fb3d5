//! Chromatic dispersion and nonlinearity of the fiber.
//!
//! Dispersion follows the datasheet slope form
//! `D(λ) = (S0/4)·(λ − λ0⁴/λ³)`, from which the Taylor coefficients of the
//! propagation constant about the pump frequency follow in closed form.
//! All internal quantities are SI; [`FiberSpec`] and [`PumpSpec`] carry the
//! conventional units used in configuration files.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::simpson;
use crate::units::{self, C};

/// Wavelength window (nm) in which the slope formula is trusted.
pub const MODEL_WINDOW_NM: (f64, f64) = (1000.0, 2000.0);

/// Nonlinear coefficient that places the phase-matched detuning of a 3 W
/// pump at 77.4 GHz with the smf28-paper dispersion parameters.
pub const GAMMA_SMF28_PAPER: f64 = 0.6728;
/// Same calibration with the datasheet dispersion slope.
pub const GAMMA_SMF28_DATASHEET: f64 = 0.8881;
/// Typical SMF-28 nonlinear coefficient.
pub const GAMMA_SMF28_NOMINAL: f64 = 1.3;

/// Raman noise coefficients fitted to the two singles-rate anchors of the
/// counting experiment (see [`crate::counting::calibrate_raman_coeff`]).
pub const RAMAN_SMF28_PAPER: f64 = 4.723e-7;
pub const RAMAN_SMF28_DATASHEET: f64 = 3.884e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberSpec {
    pub length_m: f64,
    /// Zero-GVD wavelength λ0.
    pub lambda_zgvd_nm: f64,
    /// Dispersion slope S0 in ps·nm⁻²·km⁻¹.
    pub slope_s0: f64,
    /// Kerr coefficient γ in W⁻¹·km⁻¹.
    pub gamma: f64,
    /// Noise photons per pulse per W of peak power per m per GHz of filter
    /// bandwidth.
    pub raman_coeff: f64,
}

impl FiberSpec {
    /// SMF-28 with the dispersion quoted alongside the measurements
    /// (λ0 = 1310 nm, S0 = 0.0697 ps·nm⁻²·km⁻¹).
    pub fn smf28_paper(length_m: f64) -> Self {
        FiberSpec {
            length_m,
            lambda_zgvd_nm: 1310.0,
            slope_s0: 0.0697,
            gamma: GAMMA_SMF28_PAPER,
            raman_coeff: RAMAN_SMF28_PAPER,
        }
    }

    /// SMF-28 with the datasheet maximum slope (0.092 ps·nm⁻²·km⁻¹), which
    /// gives D ≈ 17.6 ps·nm⁻¹·km⁻¹ at the pump.
    pub fn smf28_datasheet(length_m: f64) -> Self {
        FiberSpec {
            slope_s0: 0.092,
            gamma: GAMMA_SMF28_DATASHEET,
            raman_coeff: RAMAN_SMF28_DATASHEET,
            ..Self::smf28_paper(length_m)
        }
    }

    /// smf28-paper dispersion with the nominal γ = 1.3 W⁻¹·km⁻¹.
    pub fn smf28_nominal_gamma(length_m: f64) -> Self {
        FiberSpec {
            gamma: GAMMA_SMF28_NOMINAL,
            ..Self::smf28_paper(length_m)
        }
    }

    /// Looks up a named fiber preset.
    pub fn preset(name: &str, length_m: f64) -> Option<Self> {
        match name {
            "smf28-paper" => Some(Self::smf28_paper(length_m)),
            "smf28-datasheet" => Some(Self::smf28_datasheet(length_m)),
            "smf28-nominal-gamma" => Some(Self::smf28_nominal_gamma(length_m)),
            _ => None,
        }
    }

    pub const PRESETS: [&'static str; 3] =
        ["smf28-paper", "smf28-datasheet", "smf28-nominal-gamma"];

    pub fn with_length(self, length_m: f64) -> Self {
        FiberSpec { length_m, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_m > 0.0 && self.length_m.is_finite()) {
            return Err(Error::invalid("fiber.length_m", "must be > 0"));
        }
        let (lo, hi) = MODEL_WINDOW_NM;
        if !(self.lambda_zgvd_nm >= lo && self.lambda_zgvd_nm <= hi) {
            return Err(Error::invalid(
                "fiber.lambda_zgvd_nm",
                format!("must lie in [{lo}, {hi}] nm"),
            ));
        }
        if !(self.slope_s0 > 0.0) {
            return Err(Error::invalid("fiber.slope_ps_per_nm2_km", "must be > 0"));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::invalid("fiber.gamma_per_w_km", "must be > 0"));
        }
        if !(self.raman_coeff >= 0.0) {
            return Err(Error::invalid("fiber.raman_per_w_m_ghz", "must be >= 0"));
        }
        Ok(())
    }

    /// γ in W⁻¹·m⁻¹.
    pub fn gamma_si(&self) -> f64 {
        units::gamma_to_si(self.gamma)
    }

    pub fn dispersion(&self) -> Dispersion {
        Dispersion {
            lambda0_m: units::nm_to_m(self.lambda_zgvd_nm),
            s0: units::slope_to_si(self.slope_s0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpSpec {
    pub lambda_p_nm: f64,
    pub peak_power_w: f64,
    pub pulse_duration_s: f64,
    pub rep_rate_hz: f64,
}

impl PumpSpec {
    /// 15 ps pulses at 18 MHz and 1552.52 nm.
    pub fn standard(peak_power_w: f64) -> Self {
        PumpSpec {
            lambda_p_nm: 1552.52,
            peak_power_w,
            pulse_duration_s: 15e-12,
            rep_rate_hz: 18e6,
        }
    }

    pub fn with_power(self, peak_power_w: f64) -> Self {
        PumpSpec {
            peak_power_w,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("pump.wavelength_nm", self.lambda_p_nm),
            ("pump.peak_power_w", self.peak_power_w),
            ("pump.pulse_duration_s", self.pulse_duration_s),
            ("pump.rep_rate_hz", self.rep_rate_hz),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be strictly positive"));
            }
        }
        if self.pulse_duration_s * self.rep_rate_hz >= 1.0 {
            return Err(Error::invalid(
                "pump.pulse_duration_s",
                "duty cycle (duration x repetition rate) must be below 1",
            ));
        }
        Ok(())
    }

    pub fn omega(&self) -> f64 {
        units::wavelength_to_omega(units::nm_to_m(self.lambda_p_nm))
    }

    /// Pump repetition period in seconds.
    pub fn period_s(&self) -> f64 {
        1.0 / self.rep_rate_hz
    }
}

/// Slope-form dispersion in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dispersion {
    pub lambda0_m: f64,
    /// S0 in s·m⁻³.
    pub s0: f64,
}

impl Dispersion {
    /// D(λ) in s·m⁻².
    pub fn d(&self, lambda_m: f64) -> f64 {
        self.s0 / 4.0 * (lambda_m - self.lambda0_m.powi(4) / lambda_m.powi(3))
    }

    pub fn beta2(&self, lambda_m: f64) -> f64 {
        -self.s0 / (8.0 * PI * C) * (lambda_m.powi(3) - self.lambda0_m.powi(4) / lambda_m)
    }

    pub fn beta3(&self, lambda_m: f64) -> f64 {
        self.s0 / (16.0 * PI * PI * C * C) * (3.0 * lambda_m.powi(4) + self.lambda0_m.powi(4))
    }

    pub fn beta4(&self, lambda_m: f64) -> f64 {
        -3.0 * self.s0 * lambda_m.powi(5) / (8.0 * PI.powi(3) * C.powi(3))
    }

    pub fn beta2_at_omega(&self, omega: f64) -> f64 {
        self.beta2(units::omega_to_wavelength(omega))
    }

    /// Propagation constant relative to its tangent at `omega_p`:
    /// `k(ω_p + Ω) − k(ω_p) − β1(ω_p)·Ω`, from double integration of β2(ω).
    pub fn k_offset(&self, omega_p: f64, offset: f64) -> f64 {
        if offset == 0.0 {
            return 0.0;
        }
        simpson(
            |s| (offset - s) * self.beta2_at_omega(omega_p + s),
            0.0,
            offset,
            256,
        )
    }
}

fn check_window(lambda_nm: f64) -> Result<()> {
    let (lo, hi) = MODEL_WINDOW_NM;
    if lambda_nm >= lo && lambda_nm <= hi {
        Ok(())
    } else {
        Err(Error::WavelengthOutOfWindow {
            lambda_nm,
            min_nm: lo,
            max_nm: hi,
        })
    }
}

/// Dispersion parameter D in ps·nm⁻¹·km⁻¹.
pub fn dispersion_d(lambda_nm: f64, fiber: &FiberSpec) -> Result<f64> {
    check_window(lambda_nm)?;
    let d = fiber.dispersion().d(units::nm_to_m(lambda_nm));
    Ok(units::dispersion_from_si(d))
}

/// Taylor coefficient β_n (s^n·m⁻¹) of k(ω) at the frequency of `lambda_p_nm`.
pub fn beta_n(lambda_p_nm: f64, n: u32, fiber: &FiberSpec) -> Result<f64> {
    check_window(lambda_p_nm)?;
    let disp = fiber.dispersion();
    let lambda = units::nm_to_m(lambda_p_nm);
    match n {
        2 => Ok(disp.beta2(lambda)),
        3 => Ok(disp.beta3(lambda)),
        4 => Ok(disp.beta4(lambda)),
        other => Err(Error::UnsupportedOrder(other)),
    }
}
