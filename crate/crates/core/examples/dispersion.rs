//! Dispersion and Taylor coefficients of the fiber presets at the pump.

use sfwm::fiber::{beta_n, dispersion_d, FiberSpec, PumpSpec};
use sfwm::units::beta2_to_ps2_per_km;

fn main() -> sfwm::Result<()> {
    let pump = PumpSpec::standard(3.0);
    for name in FiberSpec::PRESETS {
        let fiber = FiberSpec::preset(name, 1.0).expect("known preset");
        let d = dispersion_d(pump.lambda_p_nm, &fiber)?;
        let b2 = beta_n(pump.lambda_p_nm, 2, &fiber)?;
        let b3 = beta_n(pump.lambda_p_nm, 3, &fiber)?;
        let b4 = beta_n(pump.lambda_p_nm, 4, &fiber)?;
        println!(
            "{name:<16} D = {d:6.3} ps/(nm km)  β2 = {:7.3} ps²/km  β3 = {b3:.3e} s³/m  β4 = {b4:.3e} s⁴/m",
            beta2_to_ps2_per_km(b2)
        );
    }
    Ok(())
}
