//! Photon counting experiment: pulsed pump, pair and Raman-noise photon
//! generation, DWDM channels, gated detectors with dead time and a TCSPC
//! histogram.
//!
//! [`expected_rates`] is the closed-form rate model; [`simulate`] is the
//! Monte Carlo. Both share [`PulseModel`], the per-pulse Poisson means.

mod calibrate;
mod rates;
mod sim;

pub use calibrate::{calibrate_raman_coeff, power_for_singles, RamanCalibration, SINGLES_ANCHORS};
pub use rates::{expected_rates, PulseModel, RateReport};
pub use sim::{
    car, simulate, substream_seed, true_coincidences, CoincidenceResult, Histogram, TrueCoincidences,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::{FiberSpec, PumpSpec};
use crate::spectrum::Collection;

/// One DWDM output port.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    /// Signed offset of the channel centre from the pump (signal +, idler −).
    pub detuning_ghz: f64,
    /// Passband FWHM.
    pub bandwidth_ghz: f64,
    /// Transmittance from fiber output to detector.
    pub transmittance: f64,
}

impl ChannelSpec {
    pub fn dwdm(detuning_ghz: f64) -> Self {
        ChannelSpec {
            detuning_ghz,
            bandwidth_ghz: 75.0,
            transmittance: 0.6,
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.bandwidth_ghz > 0.0) {
            return Err(Error::invalid(&format!("{name}.bandwidth_ghz"), "must be > 0"));
        }
        if self.detuning_ghz.abs() < self.bandwidth_ghz {
            return Err(Error::invalid(
                &format!("{name}.detuning_ghz"),
                "|detuning| must be at least the passband width so the pump line is excluded",
            ));
        }
        if !(self.transmittance > 0.0 && self.transmittance <= 1.0) {
            return Err(Error::invalid(&format!("{name}.transmittance"), "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Gated InGaAs single-photon detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub efficiency: f64,
    pub gate_width_s: f64,
    pub dead_time_s: f64,
    pub jitter_fwhm_s: f64,
    pub dark_prob_per_gate: f64,
}

impl DetectorSpec {
    /// 5 % efficiency, 3.1 ns gate, 10 µs dead time; 300 ps jitter and no
    /// dark counts are model defaults.
    pub fn gated_ingaas() -> Self {
        DetectorSpec {
            efficiency: 0.05,
            gate_width_s: 3.1e-9,
            dead_time_s: 10e-6,
            jitter_fwhm_s: 300e-12,
            dark_prob_per_gate: 0.0,
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::invalid(&format!("{name}.efficiency"), "must lie in (0, 1]"));
        }
        for (field, v) in [
            ("gate_width_s", self.gate_width_s),
            ("dead_time_s", self.dead_time_s),
            ("jitter_fwhm_s", self.jitter_fwhm_s),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(&format!("{name}.{field}"), "must be >= 0"));
            }
        }
        if !(self.dark_prob_per_gate >= 0.0 && self.dark_prob_per_gate < 1.0) {
            return Err(Error::invalid(&format!("{name}.dark_prob_per_gate"), "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Gates skipped after a click: those opening before the dead time ends.
    pub fn blind_gates(&self, rep_rate_hz: f64) -> u64 {
        let span = self.dead_time_s * rep_rate_hz + 0.5 * self.gate_width_s * rep_rate_hz;
        (span.ceil() as u64).saturating_sub(1)
    }
}

/// TCSPC and bookkeeping parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountingSetup {
    pub coincidence_window_s: f64,
    pub bin_width_s: f64,
    /// Number K of accidental windows on each side of zero delay.
    pub side_windows: usize,
    /// Length of an independently seeded simulation segment.
    pub segment_s: f64,
    pub collection: Collection,
}

impl Default for CountingSetup {
    fn default() -> Self {
        CountingSetup {
            coincidence_window_s: 3e-9,
            bin_width_s: 176e-12,
            side_windows: 2,
            segment_s: 1.0,
            collection: Collection::Passband,
        }
    }
}

/// Everything that defines a counting run apart from its duration and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub pump: PumpSpec,
    pub fiber: FiberSpec,
    pub signal: ChannelSpec,
    pub idler: ChannelSpec,
    pub det_s: DetectorSpec,
    pub det_i: DetectorSpec,
    pub counting: CountingSetup,
}

impl Experiment {
    /// Standard pulsed setup with ±400 GHz channels.
    pub fn standard(fiber: FiberSpec, peak_power_w: f64) -> Self {
        Experiment {
            pump: PumpSpec::standard(peak_power_w),
            fiber,
            signal: ChannelSpec::dwdm(400.0),
            idler: ChannelSpec::dwdm(-400.0),
            det_s: DetectorSpec::gated_ingaas(),
            det_i: DetectorSpec::gated_ingaas(),
            counting: CountingSetup::default(),
        }
    }

    pub fn with_power(mut self, peak_power_w: f64) -> Self {
        self.pump.peak_power_w = peak_power_w;
        self
    }

    pub fn with_length(mut self, length_m: f64) -> Self {
        self.fiber.length_m = length_m;
        self
    }

    /// Moves both channels to ±`detuning_ghz`.
    pub fn with_detuning(mut self, detuning_ghz: f64) -> Self {
        self.signal.detuning_ghz = detuning_ghz.abs();
        self.idler.detuning_ghz = -detuning_ghz.abs();
        self
    }

    /// η = transmittance × detector efficiency for the signal arm.
    pub fn eta_s(&self) -> f64 {
        self.signal.transmittance * self.det_s.efficiency
    }

    pub fn eta_i(&self) -> f64 {
        self.idler.transmittance * self.det_i.efficiency
    }

    pub fn validate(&self) -> Result<()> {
        self.pump.validate()?;
        self.fiber.validate()?;
        self.signal.validate("signal")?;
        self.idler.validate("idler")?;
        self.det_s.validate("signal_detector")?;
        self.det_i.validate("idler_detector")?;
        let c = &self.counting;
        let period = self.pump.period_s();
        if !(c.coincidence_window_s > 0.0 && c.coincidence_window_s < period) {
            return Err(Error::invalid(
                "counting.coincidence_window_s",
                "must be positive and shorter than the pump period",
            ));
        }
        if !(c.bin_width_s > 0.0) {
            return Err(Error::invalid("counting.bin_width_s", "must be > 0"));
        }
        if c.side_windows == 0 {
            return Err(Error::invalid("counting.side_windows", "must be >= 1"));
        }
        if !(c.segment_s >= 1000.0 * self.det_s.dead_time_s.max(self.det_i.dead_time_s)
            && c.segment_s * self.pump.rep_rate_hz >= 1.0)
        {
            return Err(Error::invalid(
                "counting.segment_s",
                "must span at least one pulse and 1000 detector dead times",
            ));
        }
        Ok(())
    }
}
