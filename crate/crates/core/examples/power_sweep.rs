//! Simulated power sweep, quadratic-law check and μ_p extraction.

use sfwm::analysis::{extract_from_sweep, fit_loglog_slope, operating_power_grid, run_sweep};
use sfwm::counting::Experiment;
use sfwm::fiber::FiberSpec;

fn main() -> sfwm::Result<()> {
    let exp = Experiment::standard(FiberSpec::smf28_paper(11.4), 3.0);
    let powers = operating_power_grid(&exp, 3000.0, 6)?;
    let configs: Vec<_> = powers.iter().map(|&p| exp.with_power(p)).collect();
    let points = run_sweep(&configs, 120.0, Some(7))?;

    println!("  P (W)      C_c      C_a   C_c − C_a");
    for p in &points {
        println!("{:7.3} {:8.0} {:8.2} {:11.1}", p.power_w, p.c_c, p.c_a, p.true_counts);
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.power_w, p.true_counts)).collect();
    let fit = fit_loglog_slope(&xy)?;
    println!("log-log slope {:.3} ± {:.3}", fit.slope(), fit.slope_se());

    let est = extract_from_sweep(&points, &exp)?;
    println!("μ_p = {:.3} ± {:.3} pairs/(W² m² s), pooled CAR {:.1}", est.mu_p, est.std_error, est.pooled_car);
    Ok(())
}
