//! Acceptance checks, one per criterion. Each prints a single `PASS`/`FAIL`
//! line with the measured values. Runs without the libtest harness so the
//! lines always reach the output; checks run one at a time so the runtime
//! limits are measured without contention. Positional arguments filter by
//! name.

use std::panic;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use sfwm::analysis::{fit_loglog_slope, mu_p_table, operating_power_grid, run_sweep, SimulationPlan};
use sfwm::counting::{
    calibrate_raman_coeff, car, expected_rates, power_for_singles, simulate, true_coincidences, Experiment,
    SINGLES_ANCHORS,
};
use sfwm::entanglement::{
    chsh_from_counts, fit_visibility, s_from_visibility, ChshCounts, EntangledSourceSpec, FringeScan,
};
use sfwm::fiber::{FiberSpec, PumpSpec};
use sfwm::phase_matching::phase_matched_detuning;
use sfwm::spectrum::{hwhm_bandwidth, PairGain};
use sfwm::Error;

const MEASURED_LENGTHS: [f64; 4] = [3.8, 11.4, 31.5, 308.0];
const ALL_LENGTHS: [f64; 8] = [3.8, 5.8, 8.1, 11.4, 31.5, 55.5, 104.0, 308.0];

fn report(n: u32, title: &str, pass: bool, details: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("{status} criterion {n:>2} ({title}): {details}");
    assert!(pass, "criterion {n} failed");
}

fn within_time(start: Instant, limit: Duration) -> (bool, String) {
    let t = start.elapsed();
    (t < limit, format!("runtime {:.2?} (limit {:?})", t, limit))
}

fn criterion_01_phase_matching() {
    let start = Instant::now();
    let fiber = FiberSpec::smf28_paper(308.0);
    let at = |p: f64| phase_matched_detuning(&PumpSpec::standard(p), &fiber).unwrap();
    let root3 = at(3.0);
    let ratios: Vec<f64> = [0.75, 3.0, 12.0].iter().map(|&p| at(p) / p.sqrt() / (root3 / 3f64.sqrt())).collect();
    let sqrt_ok = ratios.iter().all(|r| (r - 1.0).abs() < 0.01);
    let (time_ok, time) = within_time(start, Duration::from_secs(1));
    report(
        1,
        "phase matching",
        (root3 - 77.4).abs() <= 0.5 && sqrt_ok && time_ok,
        &format!("root(3 W) = {root3:.3} GHz (77.4 ± 0.5); root/√P relative to 3 W = {ratios:.5?} (±1 %); {time}"),
    );
}

fn criterion_02_bandwidth_curve() {
    let start = Instant::now();
    let pump = PumpSpec::standard(3.0);
    let widths: Vec<f64> = ALL_LENGTHS
        .iter()
        .map(|&l| hwhm_bandwidth(&pump, &FiberSpec::smf28_paper(l)).unwrap())
        .collect();
    let (short, long) = (widths[0], widths[7]);
    let monotone = widths.windows(2).all(|w| w[1] < w[0]);
    let (time_ok, time) = within_time(start, Duration::from_secs(5));
    report(
        2,
        "bandwidth curve",
        (700.0..=1100.0).contains(&short) && (100.0..=160.0).contains(&long) && monotone && time_ok,
        &format!(
            "HWHM 3.8 m = {short:.1} GHz [700, 1100], 308 m = {long:.1} GHz [100, 160]; \
             monotone decreasing over 8 lengths: {monotone} ({widths:.1?}); {time}"
        ),
    );
}

fn criterion_03_pump_power_insensitivity() {
    let fiber = FiberSpec::smf28_paper(3.8);
    let widths: Vec<f64> = [1.0, 5.0, 10.0]
        .iter()
        .map(|&p| hwhm_bandwidth(&PumpSpec::standard(p), &fiber).unwrap())
        .collect();
    let lo = widths.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = widths.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spread = (hi - lo) / lo;
    report(
        3,
        "pump-power insensitivity",
        spread < 0.05,
        &format!("HWHM at 1/5/10 W = {widths:.1?} GHz, spread {:.2} % (< 5 %)", 100.0 * spread),
    );
}

fn criterion_04_mu_p_magnitude() {
    let gain = PairGain::new(&PumpSpec::standard(3.0), &FiberSpec::smf28_paper(3.8)).unwrap();
    let peak = gain.peak(75.0);
    report(
        4,
        "mu_p magnitude",
        (7.5..=30.0).contains(&peak),
        &format!("model peak mu_p (B = 75 GHz) = {peak:.2} pairs/(W² m² s), band [7.5, 30] around 15"),
    );
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Mean over runs with two standard errors: the Poisson one (count variance
/// equals its mean, `windows` counts averaged per run) and the sample one.
fn poisson_se(per_run_counts: &[f64], windows: f64, duration_s: f64) -> (f64, f64, f64) {
    let n = per_run_counts.len() as f64;
    let (m, sample_se) = mean_se(per_run_counts);
    let poisson = (m / windows / n).sqrt();
    (m / duration_s, poisson / duration_s, sample_se / duration_s)
}

fn criterion_05_monte_carlo_vs_closed_form() {
    let start = Instant::now();
    let duration = 60.0;
    let mut ok = true;
    let mut parts = Vec::new();
    for l in MEASURED_LENGTHS {
        let exp = Experiment::standard(FiberSpec::smf28_paper(l), 3.0);
        let r = expected_rates(&exp).unwrap();
        let runs: Vec<_> = (0..20u64).map(|seed| simulate(&exp, duration, seed).unwrap()).collect();
        let windows = runs[0].side_window_counts.len() as f64;
        let col = |f: &dyn Fn(&sfwm::counting::CoincidenceResult) -> f64| runs.iter().map(f).collect::<Vec<_>>();
        let checks = [
            ("C_c/T", poisson_se(&col(&|x| x.c_c as f64), 1.0, duration), r.coincidence_rate),
            ("singles_s", poisson_se(&col(&|x| x.singles_s as f64), 1.0, duration), r.singles_s),
            ("singles_i", poisson_se(&col(&|x| x.singles_i as f64), 1.0, duration), r.singles_i),
            ("C_a/T", poisson_se(&col(&|x| x.c_a), windows, duration), r.accidental_rate),
        ];
        for (name, (m, se, sample_se), expected) in checks {
            let z = (m - expected) / se;
            ok &= z.abs() <= 3.0;
            parts.push(format!("{l} m {name} z = {z:+.2} (sample-SE z {:+.2})", (m - expected) / sample_se));
        }
    }
    let (time_ok, time) = within_time(start, Duration::from_secs(120));
    report(
        5,
        "Monte Carlo vs closed form",
        ok && time_ok,
        &format!("20 seeds × 60 s, all |z| ≤ 3 (Poisson SE of the mean): {}; {time}", parts.join(", ")),
    );
}

fn criterion_06_histogram_structure() {
    let exp = Experiment::standard(FiberSpec::smf28_paper(11.4), 3.0);
    let r = simulate(&exp, 600.0, 42).unwrap();
    let h = &r.histogram;
    let period = 1.0 / exp.pump.rep_rate_hz;
    let mut ok = true;
    let mut peaks = Vec::new();
    for k in -2i32..=2 {
        let centre = k as f64 * period;
        let i = h.peak_in(centre - period / 4.0, centre + period / 4.0).unwrap();
        let off = h.delay_s(i) - centre;
        ok &= off.abs() <= h.bin_width_s;
        peaks.push(format!("{:+.2} ns", h.delay_s(i) * 1e9));
    }
    let gate = exp.det_s.gate_width_s;
    let outside: u64 = (0..h.counts.len())
        .filter(|&i| {
            let d = h.delay_s(i);
            let k = (d / period).round();
            (d - k * period).abs() > gate + h.bin_width_s / 2.0
        })
        .map(|i| h.counts[i])
        .sum();
    report(
        6,
        "histogram structure",
        ok && outside == 0,
        &format!(
            "11.4 m, 3 W, 600 s: peaks at {} (expected 0, ±55.56, ±111.11 ns within one 176 ps bin); \
             counts outside gate windows: {outside}",
            peaks.join(", ")
        ),
    );
}

fn criterion_07_car_trend() {
    let template = Experiment::standard(FiberSpec::smf28_paper(1.0), 1.0);
    let cal = calibrate_raman_coeff(&template, &SINGLES_ANCHORS, 3000.0).unwrap();
    let calibrated = |l: f64, p: f64| {
        let mut e = template.with_length(l).with_power(p);
        e.fiber.raman_coeff = cal.raman_coeff;
        e
    };
    let mut parts = vec![format!(
        "raman coeff {:.4e} (anchor singles {:.0}/{:.0} cps, rms log residual {:.3})",
        cal.raman_coeff, cal.anchors[0].2, cal.anchors[1].2, cal.rms_log_residual
    )];
    let mut ok = true;
    for (i, l) in [3.8, 11.4].into_iter().enumerate() {
        let probe = calibrated(l, 1.0);
        let p = power_for_singles(&probe, 3000.0).unwrap();
        let r = simulate(&probe.with_power(p), 600.0, 70 + i as u64).unwrap();
        let c = car(&r).unwrap();
        ok &= c > 50.0;
        parts.push(format!("CAR({l} m @ {p:.2} W, 3000 cps) = {c:.1} (> 50)"));
    }
    let r308 = simulate(&calibrated(308.0, 3.0), 600.0, 72).unwrap();
    let c308 = car(&r308).unwrap();
    ok &= (1.5..=4.0).contains(&c308);
    parts.push(format!("CAR(308 m @ 3 W) = {c308:.2} [1.5, 4]"));
    let trend: Vec<f64> = ALL_LENGTHS
        .iter()
        .map(|&l| expected_rates(&calibrated(l, 3.0)).unwrap().car)
        .collect();
    let past = &trend[3..];
    let monotone = past.windows(2).all(|w| w[1] < w[0]);
    ok &= monotone;
    parts.push(format!("closed-form CAR @ 3 W over 8 lengths = {trend:.2?}, decreasing past 11.4 m: {monotone}"));
    parts.push("CAR > 100 reproduced only up to the Raman-noise model".into());
    report(7, "CAR trend", ok, &parts.join("; "));
}

fn slope_of(points: &[(f64, f64)]) -> (f64, f64) {
    let fit = fit_loglog_slope(points).unwrap();
    (fit.slope(), fit.slope_se())
}

fn criterion_08_quadratic_laws() {
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, l) in [3.8, 11.4, 31.5].into_iter().enumerate() {
        let exp = Experiment::standard(FiberSpec::smf28_paper(l), 3.0);
        let powers = operating_power_grid(&exp, 3000.0, 6).unwrap();
        let configs: Vec<_> = powers.iter().map(|&p| exp.with_power(p)).collect();
        let pts = run_sweep(&configs, 600.0, Some(800 + i as u64)).unwrap();
        let xy: Vec<(f64, f64)> = pts.iter().map(|p| (p.power_w, p.true_counts)).collect();
        let (s, se) = slope_of(&xy);
        ok &= (s - 2.0).abs() <= 0.1;
        parts.push(format!("vs P at {l} m ({:.2}–{:.2} W): {s:.3} ± {se:.3}", powers[0], powers[5]));
    }
    let exp = Experiment::standard(FiberSpec::smf28_paper(1.0), 3.0);
    let lengths = [3.8, 5.8, 8.1, 11.4];
    let configs: Vec<_> = lengths.iter().map(|&l| exp.with_length(l)).collect();
    let pts = run_sweep(&configs, 600.0, Some(900)).unwrap();
    let xy: Vec<(f64, f64)> = pts.iter().map(|p| (p.length_m, p.true_counts)).collect();
    let (s, se) = slope_of(&xy);
    ok &= (s - 2.0).abs() <= 0.2;
    parts.push(format!("vs L (3.8–11.4 m, 3 W): {s:.3} ± {se:.3}"));
    report(8, "quadratic laws", ok, &format!("{} (2.0 ± 0.1 vs P, 2.0 ± 0.2 vs L)", parts.join("; ")));
}

fn criterion_09_mu_p_round_trip() {
    let template = Experiment::standard(FiberSpec::smf28_paper(1.0), 3.0);
    let plan = SimulationPlan {
        seed: 9,
        ..SimulationPlan::default()
    };
    let table = mu_p_table(&template, &[400.0, 800.0, 1000.0], &MEASURED_LENGTHS, Some(&plan)).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for l in MEASURED_LENGTHS {
        let cell = table.cell(l, 400.0).unwrap();
        match (&cell.measured, &cell.expected) {
            (Some(m), Some(e)) => {
                let model = cell.model_mu_p_collected;
                let z = (m.mu_p - model) / m.std_error;
                ok &= z.abs() <= 3.0;
                parts.push(format!(
                    "{l} m: {:.4} ± {:.4} vs model {model:.4} (z = {z:+.2}; closed-form sweep {:.4})",
                    m.mu_p, m.std_error, e.mu_p
                ));
            }
            _ => {
                ok = false;
                parts.push(format!("{l} m: extraction failed ({:?})", cell.gap));
            }
        }
    }
    for d in [800.0, 1000.0] {
        let gap = table.cell(308.0, d).unwrap().gap.clone();
        let noise = gap.as_deref().is_some_and(|g| g.starts_with("noise-dominated"));
        ok &= noise;
        parts.push(format!("308 m @ {d} GHz noise-dominated: {noise}"));
    }
    // the 11.4 m second lobe sits between 800 and 1000 GHz only with the
    // datasheet dispersion slope; the smf28-paper slope moves it outwards
    let datasheet = Experiment::standard(FiberSpec::smf28_datasheet(1.0), 3.0);
    let ds = mu_p_table(&datasheet, &[800.0, 1000.0], &[11.4], None).unwrap();
    let (m800, m1000) = (ds.cell(11.4, 800.0).unwrap().model_mu_p, ds.cell(11.4, 1000.0).unwrap().model_mu_p);
    ok &= m1000 > m800;
    let (p800, p1000) = (
        table.cell(11.4, 800.0).unwrap().model_mu_p,
        table.cell(11.4, 1000.0).unwrap().model_mu_p,
    );
    parts.push(format!(
        "11.4 m second lobe (smf28-datasheet): mu_p(1000) = {m1000:.4} > mu_p(800) = {m800:.4}; \
         smf28-paper gives {p1000:.4} vs {p800:.4}"
    ));
    report(9, "mu_p round trip", ok, &parts.join("; "));
}

fn criterion_10_entanglement() {
    let start = Instant::now();
    let s942 = s_from_visibility(0.942);
    let mut ok = (s942 - 2.664).abs() <= 0.001;
    let mut worst: f64 = 0.0;
    for v in [0.0, 0.5, std::f64::consts::FRAC_1_SQRT_2, 0.942, 1.0] {
        let r = chsh_from_counts(&ChshCounts::expected(&EntangledSourceSpec::new(v, 500.0, 0.0))).unwrap();
        worst = worst.max((r.s_value - s_from_visibility(v)).abs());
    }
    ok &= worst <= 1e-12;

    let grid: Vec<f64> = (0..=144).map(|k| -180.0 + 2.5 * k as f64).collect();
    let fit = fit_visibility(&FringeScan::expected(0.0, &grid, &EntangledSourceSpec::new(0.942, 125.0, 0.0))).unwrap();
    let fit_err = (fit.visibility - 0.942).abs();
    ok &= fit_err <= 1e-6;

    let src = EntangledSourceSpec::new(0.942, 125.0, 0.0);
    let runs: Vec<_> = (0..100u64)
        .map(|seed| chsh_from_counts(&ChshCounts::simulate(&src, seed).unwrap()).unwrap())
        .collect();
    let s: Vec<f64> = runs.iter().map(|r| r.s_value).collect();
    let (mean_s, _) = mean_se(&s);
    let sd = (s.iter().map(|x| (x - mean_s).powi(2)).sum::<f64>() / 99.0).sqrt();
    let reported = runs.iter().map(|r| r.s_error).sum::<f64>() / 100.0;
    let rel = (sd / reported - 1.0).abs();
    ok &= rel <= 0.2;
    let (time_ok, time) = within_time(start, Duration::from_secs(60));
    report(
        10,
        "entanglement",
        ok && time_ok,
        &format!(
            "S(0.942) = {s942:.4}; max |S_counts − 2√2V| = {worst:.1e}; noiseless fit error {fit_err:.1e}; \
             σ(S) over 100 seeds = {sd:.4} vs propagated {reported:.4} ({:.1} % off, ≤ 20 %), mean S {mean_s:.3}; {time}",
            100.0 * rel
        ),
    );
}

fn run_verb(args: &[&str], out: &Path, workers: usize) -> i32 {
    let mut full = vec!["sfwm".to_string()];
    full.extend(args.iter().map(|s| s.to_string()));
    full.push("--out".into());
    full.push(out.display().to_string());
    full.push("--workers".into());
    full.push(workers.to_string());
    sfwm::cli::main_with_args(full)
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn criterion_11_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let sweep_input = tmp.path().join("input");
    assert_eq!(run_verb(&["sweep", "--duration-s", "30", "--seed", "5"], &sweep_input, 2), 0);
    let sweep_json = sweep_input.join("sweep.json").display().to_string();
    let verbs: Vec<Vec<&str>> = vec![
        vec!["spectrum", "--step-ghz", "20"],
        vec!["bandwidth", "--points", "12"],
        vec!["phase-match", "--target-ghz", "77.4"],
        vec!["simulate", "--preset", "paper-fig4b", "--duration-s", "30", "--seed", "3"],
        vec!["sweep", "--duration-s", "30", "--seed", "4"],
        vec!["mu-extract", "--input", &sweep_json],
        vec!["mu-extract", "--lengths", "3.8,308", "--detunings", "400,800", "--simulate", "--duration-s", "20"],
        vec!["bell", "--seed", "6"],
        vec!["bell", "--from-sim", "--duration-s", "30", "--seed", "6"],
        vec!["explain", "--length-m", "5"],
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, args) in verbs.iter().enumerate() {
        let a = tmp.path().join(format!("{i}a"));
        let b = tmp.path().join(format!("{i}b"));
        let (ca, cb) = (run_verb(args, &a, 1), run_verb(args, &b, 4));
        let same = ca == 0 && cb == 0 && dir_bytes(&a) == dir_bytes(&b);
        ok &= same;
        if !same {
            parts.push(format!("`{}` differs (exit {ca}/{cb})", args.join(" ")));
        }
    }
    let summary = if parts.is_empty() {
        format!("{} verb invocations byte-identical across runs with 1 and 4 workers", verbs.len())
    } else {
        parts.join("; ")
    };
    report(11, "determinism", ok, &summary);
}

fn criterion_05_noise_free_limit_has_no_true_loss() {
    // companion to criterion 5: without noise, C_c − C_a ≈ C_c
    let mut exp = Experiment::standard(FiberSpec::smf28_paper(11.4), 3.0);
    exp.fiber.raman_coeff = 0.0;
    let r = simulate(&exp, 60.0, 1).unwrap();
    let t = true_coincidences(&r);
    assert!(t.value / r.c_c as f64 > 0.99);
    assert!(!matches!(car(&r), Err(Error::Fit(_))));
}

const CHECKS: &[(&str, fn())] = &[
    ("criterion_01_phase_matching", criterion_01_phase_matching),
    ("criterion_02_bandwidth_curve", criterion_02_bandwidth_curve),
    ("criterion_03_pump_power_insensitivity", criterion_03_pump_power_insensitivity),
    ("criterion_04_mu_p_magnitude", criterion_04_mu_p_magnitude),
    ("criterion_05_monte_carlo_vs_closed_form", criterion_05_monte_carlo_vs_closed_form),
    ("criterion_05_noise_free_limit_has_no_true_loss", criterion_05_noise_free_limit_has_no_true_loss),
    ("criterion_06_histogram_structure", criterion_06_histogram_structure),
    ("criterion_07_car_trend", criterion_07_car_trend),
    ("criterion_08_quadratic_laws", criterion_08_quadratic_laws),
    ("criterion_09_mu_p_round_trip", criterion_09_mu_p_round_trip),
    ("criterion_10_entanglement", criterion_10_entanglement),
    ("criterion_11_determinism", criterion_11_determinism),
];

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    let mut ran = 0;
    for &(name, check) in CHECKS {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        if panic::catch_unwind(check).is_err() {
            failed.push(name);
        }
    }
    println!("acceptance: {} of {ran} checks passed", ran - failed.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
