//! Unit conversions between the conventional units used at the API and
//! config boundary (nm, ps, GHz, km) and the SI units used internally.
//!
//! Every conversion factor in the crate lives here.

use std::f64::consts::PI;

/// Speed of light in vacuum, m/s (exact).
pub const C: f64 = 299_792_458.0;

pub const NM: f64 = 1e-9;
pub const GHZ: f64 = 1e9;

/// 1 ps·nm⁻¹·km⁻¹ expressed in s·m⁻².
pub const PS_PER_NM_KM: f64 = 1e-12 / (1e-9 * 1e3);
/// 1 ps·nm⁻²·km⁻¹ expressed in s·m⁻³.
pub const PS_PER_NM2_KM: f64 = 1e-12 / (1e-9 * 1e-9 * 1e3);
/// 1 W⁻¹·km⁻¹ expressed in W⁻¹·m⁻¹.
pub const PER_W_KM: f64 = 1e-3;

#[inline]
pub fn nm_to_m(nm: f64) -> f64 {
    nm * NM
}

#[inline]
pub fn m_to_nm(m: f64) -> f64 {
    m / NM
}

#[inline]
pub fn ghz_to_hz(ghz: f64) -> f64 {
    ghz * GHZ
}

#[inline]
pub fn hz_to_ghz(hz: f64) -> f64 {
    hz / GHZ
}

/// Angular frequency (rad/s) of light with vacuum wavelength `lambda_m`.
#[inline]
pub fn wavelength_to_omega(lambda_m: f64) -> f64 {
    2.0 * PI * C / lambda_m
}

#[inline]
pub fn omega_to_wavelength(omega: f64) -> f64 {
    2.0 * PI * C / omega
}

/// Angular frequency offset (rad/s) of a detuning given in GHz.
#[inline]
pub fn detuning_ghz_to_omega(delta_nu_ghz: f64) -> f64 {
    2.0 * PI * ghz_to_hz(delta_nu_ghz)
}

/// Dispersion parameter: ps·nm⁻¹·km⁻¹ → s·m⁻².
#[inline]
pub fn dispersion_to_si(d: f64) -> f64 {
    d * PS_PER_NM_KM
}

#[inline]
pub fn dispersion_from_si(d_si: f64) -> f64 {
    d_si / PS_PER_NM_KM
}

/// Dispersion slope: ps·nm⁻²·km⁻¹ → s·m⁻³.
#[inline]
pub fn slope_to_si(s0: f64) -> f64 {
    s0 * PS_PER_NM2_KM
}

/// Nonlinear coefficient: W⁻¹·km⁻¹ → W⁻¹·m⁻¹.
#[inline]
pub fn gamma_to_si(gamma: f64) -> f64 {
    gamma * PER_W_KM
}

#[inline]
pub fn gamma_from_si(gamma_si: f64) -> f64 {
    gamma_si / PER_W_KM
}

/// Group-velocity dispersion: s²·m⁻¹ → ps²·km⁻¹.
#[inline]
pub fn beta2_to_ps2_per_km(beta2: f64) -> f64 {
    beta2 * 1e24 * 1e3
}
