//! μ_p against detuning and length: model, closed-form extraction and
//! extraction from simulated power sweeps.
//!
//! `cargo run --release --example mu_p_table [seconds per point]`

use sfwm::analysis::{mu_p_table, MuPEstimate, SimulationPlan};
use sfwm::counting::Experiment;
use sfwm::fiber::FiberSpec;

fn show(e: &Option<MuPEstimate>) -> String {
    e.as_ref().map_or("-".into(), |e| format!("{:.4} ± {:.4}", e.mu_p, e.std_error))
}

fn main() -> sfwm::Result<()> {
    let duration_s = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(60.0);
    let plan = SimulationPlan { duration_s, ..SimulationPlan::default() };
    let template = Experiment::standard(FiberSpec::smf28_paper(1.0), 3.0);
    let table = mu_p_table(&template, &[400.0, 600.0, 800.0, 1000.0], &[3.8, 11.4, 31.5, 308.0], Some(&plan))?;

    println!("   L (m)  Δν (GHz)    model   closed form          simulated");
    for c in &table.cells {
        let measured = c.gap.clone().unwrap_or_else(|| show(&c.measured));
        println!(
            "{:8.1} {:9.0} {:8.4}   {:<18} {measured}",
            c.length_m, c.detuning_ghz, c.model_mu_p_collected, show(&c.expected)
        );
    }
    println!("second lobe (μ_p(1000) > μ_p(800)) at: {:?} m", table.second_lobe_lengths(800.0, 1000.0));
    Ok(())
}
