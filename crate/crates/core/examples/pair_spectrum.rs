//! Pair-generation spectra for several fiber lengths and their half widths.

use sfwm::fiber::{FiberSpec, PumpSpec};
use sfwm::phase_matching::DetuningGrid;
use sfwm::spectrum::{hwhm_bandwidth, spectrum_sweep, DEFAULT_FILTER_BW_GHZ};

fn main() -> sfwm::Result<()> {
    let pump = PumpSpec::standard(3.0);
    let lengths = [3.8, 11.4, 31.5, 308.0];
    let grid = DetuningGrid::uniform(0.0, 1500.0, 100.0)?;

    let spectra = lengths
        .iter()
        .map(|&l| spectrum_sweep(&grid, &pump, &FiberSpec::smf28_paper(l), DEFAULT_FILTER_BW_GHZ))
        .collect::<sfwm::Result<Vec<_>>>()?;

    print!("Δν (GHz)");
    for l in lengths {
        print!("  {:>9}", format!("{l} m"));
    }
    println!();
    for (i, nu) in grid.points().iter().enumerate() {
        print!("{nu:8.0}");
        for s in &spectra {
            print!("  {:9.4}", s.mu_p[i]);
        }
        println!();
    }

    println!("\nHWHM at 3 W:");
    for l in lengths {
        println!("  {l:6.1} m  {:7.1} GHz", hwhm_bandwidth(&pump, &FiberSpec::smf28_paper(l))?);
    }
    Ok(())
}
