use thiserror::Error;

/// Errors raised by the model, simulation and analysis layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("wavelength {lambda_nm} nm outside the dispersion model window [{min_nm}, {max_nm}] nm")]
    WavelengthOutOfWindow {
        lambda_nm: f64,
        min_nm: f64,
        max_nm: f64,
    },

    #[error("unsupported dispersion order n = {0} (supported: 2, 3, 4)")]
    UnsupportedOrder(u32),

    #[error("detuning {delta_nu_ghz} GHz outside the model window of ±{window_ghz} GHz")]
    DetuningOutOfWindow { delta_nu_ghz: f64, window_ghz: f64 },

    #[error("no fundamental-mode phase matching: pump is in the normal-dispersion region (beta2 = {beta2:e} s^2/m)")]
    NoPhaseMatching { beta2: f64 },

    #[error("window too narrow: {0}")]
    WindowTooNarrow(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("energy-conservation mismatch: signal detuning {signal_ghz} GHz and idler detuning {idler_ghz} GHz are not mirrored about the pump")]
    EnergyConservationMismatch { signal_ghz: f64, idler_ghz: f64 },

    #[error("CAR undefined: no accidentals recorded")]
    CarUndefined,

    #[error("undefined correlation: the four counts for setting ({theta1_deg}°, {theta2_deg}°) sum to zero")]
    UndefinedCorrelation { theta1_deg: f64, theta2_deg: f64 },

    #[error("missing CHSH setting ({theta1_deg}°, {theta2_deg}°)")]
    MissingSetting { theta1_deg: f64, theta2_deg: f64 },

    #[error("noise-dominated: mu_p not extractable ({0})")]
    NoiseDominated(String),

    #[error("fit failed: {0}")]
    Fit(String),
}

impl Error {
    pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
