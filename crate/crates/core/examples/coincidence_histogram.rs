//! Monte Carlo coincidence histogram for 11.4 m of fiber at 3 W.
//!
//! `cargo run --release --example coincidence_histogram [seconds]`

use sfwm::counting::{car, expected_rates, simulate, true_coincidences, Experiment};
use sfwm::fiber::FiberSpec;

fn main() -> sfwm::Result<()> {
    let duration: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(60.0);
    let exp = Experiment::standard(FiberSpec::smf28_paper(11.4), 3.0);
    let r = simulate(&exp, duration, 1)?;
    let expected = expected_rates(&exp)?;

    let h = &r.histogram;
    let period = 1.0 / exp.pump.rep_rate_hz;
    println!("{} s, {} pulses", duration, r.pulses);
    for k in -2i32..=2 {
        let centre = k as f64 * period;
        if let Some(i) = h.peak_in(centre - period / 4.0, centre + period / 4.0).filter(|&i| h.counts[i] > 0) {
            println!("  peak near {:+7.2} ns: {:5} counts in the {:+8.3} ns bin", centre * 1e9, h.counts[i], h.delay_s(i) * 1e9);
        }
    }
    println!("singles      {:.1} / {:.1} cps (model {:.1})", r.singles_s as f64 / duration, r.singles_i as f64 / duration, expected.singles_s);
    println!("C_c          {} (model {:.1})", r.c_c, expected.coincidence_rate * duration);
    println!("C_a          {:.2} (model {:.2})", r.c_a, expected.accidental_rate * duration);
    println!("C_c − C_a    {:.1}", true_coincidences(&r).value);
    match car(&r) {
        Ok(c) => println!("CAR          {c:.1} (model {:.1})", expected.car),
        Err(e) => println!("CAR          {e}"),
    }
    for w in &r.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
