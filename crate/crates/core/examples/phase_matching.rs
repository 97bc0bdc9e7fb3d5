//! Phase-matched detuning against pump power, and Δk around it.

use sfwm::fiber::{FiberSpec, PumpSpec};
use sfwm::phase_matching::{calibrate_gamma, delta_k, phase_matched_detuning};

fn main() -> sfwm::Result<()> {
    let fiber = FiberSpec::smf28_paper(308.0);
    println!("P (W)   Δν* (GHz)   Δν*/√P");
    for p in [0.75, 1.5, 3.0, 6.0, 12.0] {
        let root = phase_matched_detuning(&PumpSpec::standard(p), &fiber)?;
        println!("{p:5.2}   {root:9.3}   {:7.3}", root / p.sqrt());
    }

    let pump = PumpSpec::standard(3.0);
    println!("\nΔν (GHz)   Δk (1/m) at 3 W");
    for nu in [0.0, 40.0, 77.4, 200.0, 400.0, 1000.0] {
        println!("{nu:8.1}   {:+.3e}", delta_k(nu, &pump, &fiber)?);
    }

    // the γ that would put the root at a given detuning
    let g = calibrate_gamma(77.4, &pump, &fiber)?;
    println!("\nγ placing the root at 77.4 GHz: {g:.4} /(W km)");
    Ok(())
}
