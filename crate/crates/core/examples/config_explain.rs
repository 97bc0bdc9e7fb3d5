//! Load a layered configuration and list where each value comes from.

use sfwm::config::{explain, parse_config};

const CONFIG: &str = r#"
preset = "paper-fig4c"
seed = 11

[pump]
peak_power_w = 2.5

[signal_detector]
efficiency = 0.08
"#;

fn main() {
    let overrides = [("duration_s".to_string(), "120".to_string())];
    let cfg = match parse_config(CONFIG, &overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(3);
        }
    };
    println!("preset {} / fiber {} / {} s, seed {}\n", cfg.preset, cfg.fiber_preset, cfg.duration_s, cfg.seed);
    for row in explain(&cfg) {
        let changed = if row.value != row.default { "*" } else { " " };
        println!("{changed} {:<36} {:>12}  {:<9?} {}", row.key, row.value, row.provenance, row.note);
    }

    // typos and unit mistakes are reported together, with line numbers
    if let Err(e) = parse_config("[fiber]\nlength_km = 3\n[pump]\npeak_power_w = -1\n", &[]) {
        println!("\n{e}");
    }
}
