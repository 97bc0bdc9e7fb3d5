//! Raman-noise calibration to the singles anchors, then CAR against length.

use sfwm::counting::{calibrate_raman_coeff, expected_rates, power_for_singles, Experiment, SINGLES_ANCHORS};
use sfwm::fiber::FiberSpec;

fn main() -> sfwm::Result<()> {
    let template = Experiment::standard(FiberSpec::smf28_paper(1.0), 1.0);
    let cal = calibrate_raman_coeff(&template, &SINGLES_ANCHORS, 3000.0)?;
    println!("Raman coefficient {:.3e} per (W m GHz), rms log residual {:.3}", cal.raman_coeff, cal.rms_log_residual);
    for (l, p, s) in &cal.anchors {
        println!("  anchor {l:6.1} m at {p:6.2} W -> {s:6.0} cps");
    }

    println!("\n   L (m)   CAR @ 3 W   P for 3000 cps   CAR there");
    for l in [3.8, 5.8, 8.1, 11.4, 31.5, 55.5, 104.0, 308.0] {
        let mut exp = template.with_length(l).with_power(3.0);
        exp.fiber.raman_coeff = cal.raman_coeff;
        let at_3w = expected_rates(&exp)?.car;
        let (p, at_op) = match power_for_singles(&exp, 3000.0) {
            Ok(p) => (format!("{p:8.2} W"), format!("{:8.1}", expected_rates(&exp.with_power(p))?.car)),
            Err(_) => ("       -".into(), "       -".into()),
        };
        println!("{l:8.1}   {at_3w:9.1}   {p:>14}   {at_op}");
    }
    Ok(())
}
