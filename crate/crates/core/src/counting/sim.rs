use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rates::PulseModel;
use super::Experiment;
use crate::error::{Error, Result};

const FWHM_TO_SIGMA: f64 = 2.354_820_045_030_949;

/// TCSPC histogram of signal − idler delays, bins centred on multiples of
/// the bin width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width_s: f64,
    /// Index of the zero-delay bin.
    pub zero_bin: usize,
    pub counts: Vec<u64>,
}

impl Histogram {
    fn new(bin_width_s: f64, range_s: f64) -> Self {
        let half = (range_s / bin_width_s).ceil() as usize;
        Histogram {
            bin_width_s,
            zero_bin: half,
            counts: vec![0; 2 * half + 1],
        }
    }

    fn add(&mut self, delay_s: f64) {
        let idx = (delay_s / self.bin_width_s).round() as i64 + self.zero_bin as i64;
        if idx >= 0 && (idx as usize) < self.counts.len() {
            self.counts[idx as usize] += 1;
        }
    }

    fn merge(&mut self, other: &Histogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    /// Centre delay of bin `i`, in seconds.
    pub fn delay_s(&self, i: usize) -> f64 {
        (i as f64 - self.zero_bin as f64) * self.bin_width_s
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Bin with the most counts among those whose centres lie in `[lo, hi]`.
    pub fn peak_in(&self, lo_s: f64, hi_s: f64) -> Option<usize> {
        (0..self.counts.len())
            .filter(|&i| {
                let d = self.delay_s(i);
                d >= lo_s && d <= hi_s
            })
            .max_by_key(|&i| (self.counts[i], std::cmp::Reverse(i)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceResult {
    pub histogram: Histogram,
    pub singles_s: u64,
    pub singles_i: u64,
    /// Counts within the coincidence window around zero delay.
    pub c_c: u64,
    /// Mean count over the accidental windows at ±k pump periods.
    pub c_a: f64,
    /// Counts in the windows at delays −K..−1, 1..K pump periods.
    pub side_window_counts: Vec<u64>,
    pub pulses: u64,
    pub duration_s: f64,
    pub seed: u64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueCoincidences {
    /// C_c − C_a, floored at zero.
    pub value: f64,
    /// Set when C_c − C_a was negative.
    pub floored: bool,
}

/// Coincidence-to-accidental ratio C_c / C_a.
pub fn car(result: &CoincidenceResult) -> Result<f64> {
    if result.c_a > 0.0 {
        Ok(result.c_c as f64 / result.c_a)
    } else {
        Err(Error::CarUndefined)
    }
}

pub fn true_coincidences(result: &CoincidenceResult) -> TrueCoincidences {
    let raw = result.c_c as f64 - result.c_a;
    TrueCoincidences {
        value: raw.max(0.0),
        floored: raw < 0.0,
    }
}

/// Seed of the `index`-th independent sub-run derived from `seed`
/// (SplitMix64 finaliser).
pub fn substream_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy)]
struct Click {
    pulse: u64,
    /// Arrival time relative to the pulse, seconds.
    offset: f64,
}

struct Arm {
    eta_index: [usize; 3],
    dark_index: usize,
    jitter: Normal<f64>,
    half_gate: f64,
    blind: u64,
    rearm: u64,
    clicks: Vec<Click>,
}

impl Arm {
    /// Registers the earliest in-gate event of this pulse, if armed.
    fn fire(&mut self, rng: &mut ChaCha8Rng, pulse: u64, counts: &[u64; 7]) {
        if pulse < self.rearm {
            return;
        }
        let photons: u64 = self.eta_index.iter().map(|&k| counts[k]).sum();
        let mut first: Option<f64> = None;
        for _ in 0..photons {
            let t = self.jitter.sample(rng);
            if t.abs() <= self.half_gate {
                first = Some(first.map_or(t, |f: f64| f.min(t)));
            }
        }
        for _ in 0..counts[self.dark_index] {
            let t = rng.random_range(-self.half_gate..=self.half_gate);
            first = Some(first.map_or(t, |f: f64| f.min(t)));
        }
        if let Some(offset) = first {
            self.clicks.push(Click { pulse, offset });
            self.rearm = pulse + self.blind + 1;
        }
    }
}

/// Draws N ≥ 1 from a Poisson(λ) conditioned on being non-zero.
fn zero_truncated_poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u64 {
    if lambda > 5.0 {
        let dist = Poisson::new(lambda).expect("positive mean");
        loop {
            let n = dist.sample(rng) as u64;
            if n > 0 {
                return n;
            }
        }
    }
    let target = rng.random::<f64>() * -(-lambda).exp_m1();
    let mut term = lambda * (-lambda).exp();
    let mut cum = term;
    let mut k = 1u64;
    while cum < target && k < 10_000 {
        k += 1;
        term *= lambda / k as f64;
        cum += term;
    }
    k
}

struct SegmentOutput {
    histogram: Histogram,
    singles_s: u64,
    singles_i: u64,
    c_c: u64,
    side: Vec<u64>,
}

fn run_segment(
    exp: &Experiment,
    means: &[f64; 7],
    first_pulse: u64,
    end_pulse: u64,
    seed: u64,
    segment: u64,
) -> SegmentOutput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(segment);
    let f = exp.pump.rep_rate_hz;
    let arm = |eta_index, dark_index, det: &super::DetectorSpec| Arm {
        eta_index,
        dark_index,
        jitter: Normal::new(0.0, det.jitter_fwhm_s / FWHM_TO_SIGMA).expect("finite jitter"),
        half_gate: 0.5 * det.gate_width_s,
        blind: det.blind_gates(f),
        rearm: 0,
        clicks: Vec::new(),
    };
    let mut sig = arm([0, 2, 3], 5, &exp.det_s);
    let mut idl = arm([1, 2, 4], 6, &exp.det_i);

    let total: f64 = means.iter().sum();
    let mut cumulative = [0.0; 7];
    let mut acc = 0.0;
    for (c, m) in cumulative.iter_mut().zip(means) {
        acc += m / total;
        *c = acc;
    }

    let mut pulse = first_pulse;
    if total > 0.0 {
        loop {
            // pulses without any event are skipped geometrically
            let u: f64 = 1.0 - rng.random::<f64>();
            let skip = (-u.ln() / total).floor();
            if skip >= (end_pulse - pulse) as f64 {
                break;
            }
            pulse += skip as u64;
            let n = zero_truncated_poisson(&mut rng, total);
            let mut counts = [0u64; 7];
            for _ in 0..n {
                let x: f64 = rng.random();
                let k = cumulative.iter().position(|&c| x < c).unwrap_or(6);
                counts[k] += 1;
            }
            sig.fire(&mut rng, pulse, &counts);
            idl.fire(&mut rng, pulse, &counts);
            pulse += 1;
            if pulse >= end_pulse {
                break;
            }
        }
    }

    let c = &exp.counting;
    let k_max = c.side_windows as i64;
    let period = 1.0 / f;
    let range = (k_max as f64 + 0.5) * period;
    let half_window = 0.5 * c.coincidence_window_s;
    let mut histogram = Histogram::new(c.bin_width_s, range);
    let mut c_c = 0;
    let mut side = vec![0u64; 2 * c.side_windows];
    let reach = k_max as u64 + 1;
    let mut start = 0usize;
    for s in &sig.clicks {
        while start < idl.clicks.len() && idl.clicks[start].pulse + reach < s.pulse {
            start += 1;
        }
        for i in &idl.clicks[start..] {
            if i.pulse > s.pulse + reach {
                break;
            }
            let delay = (s.pulse as f64 - i.pulse as f64) * period + (s.offset - i.offset);
            if delay.abs() > range {
                continue;
            }
            histogram.add(delay);
            let k = (delay / period).round() as i64;
            if (delay - k as f64 * period).abs() <= half_window {
                match k {
                    0 => c_c += 1,
                    k if k < 0 => side[(k + k_max) as usize] += 1,
                    k => side[(k + k_max - 1) as usize] += 1,
                }
            }
        }
    }
    SegmentOutput {
        histogram,
        singles_s: sig.clicks.len() as u64,
        singles_i: idl.clicks.len() as u64,
        c_c,
        side,
    }
}

/// Monte Carlo of a counting run of `duration_s` seconds.
///
/// The run is cut into segments of `counting.segment_s`; segment `j` draws
/// from ChaCha8 stream `j` of `seed`, so results do not depend on how many
/// worker threads process the segments. Dead-time state and coincidences
/// do not cross segment boundaries.
pub fn simulate(exp: &Experiment, duration_s: f64, seed: u64) -> Result<CoincidenceResult> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::invalid("duration_s", "must be > 0"));
    }
    let model = PulseModel::new(exp)?;
    let means = model.source_means();
    let f = exp.pump.rep_rate_hz;
    let pulses = ((duration_s * f).round() as u64).max(1);
    let per_segment = ((exp.counting.segment_s * f).round() as u64).max(1);
    let n_segments = pulses.div_ceil(per_segment);

    let outputs: Vec<SegmentOutput> = (0..n_segments)
        .into_par_iter()
        .map(|j| {
            let first = j * per_segment;
            let end = (first + per_segment).min(pulses);
            run_segment(exp, &means, first, end, seed, j)
        })
        .collect();

    let mut iter = outputs.into_iter();
    let mut acc = iter.next().expect("at least one segment");
    for seg in iter {
        acc.histogram.merge(&seg.histogram);
        acc.singles_s += seg.singles_s;
        acc.singles_i += seg.singles_i;
        acc.c_c += seg.c_c;
        for (a, b) in acc.side.iter_mut().zip(&seg.side) {
            *a += b;
        }
    }

    let c_a = acc.side.iter().sum::<u64>() as f64 / acc.side.len() as f64;
    let mut warnings = Vec::new();
    if let Some(&min) = acc.side.iter().min() {
        if min < 10 {
            warnings.push(format!(
                "accidental windows hold as few as {min} counts; C_a is statistically poor"
            ));
        }
    }
    Ok(CoincidenceResult {
        histogram: acc.histogram,
        singles_s: acc.singles_s,
        singles_i: acc.singles_i,
        c_c: acc.c_c,
        c_a,
        side_window_counts: acc.side,
        pulses,
        duration_s,
        seed,
        warnings,
    })
}
