//! Runs a small sweep from an inline configuration and prints the CSV.
//! Pass a path to use a config file instead, e.g. `configs/counting_near_perfect_chirality.toml`.

use chiralfb::config::{load_config, parse_config};
use chiralfb::sweep::run_sweep;

const INLINE: &str = r#"
n_atoms = 2
detuning = 0.1
delta_gamma = 0.998
feedback_mode = "counting"
feedback_strength = "pi/2"
observables = ["k", "purity", "overlap_gg", "overlap_S"]

[[axis]]
name = "rabi"
start = 0.5
stop = 4
count = 8
"#;

fn main() -> chiralfb::Result<()> {
    let spec = match std::env::args().nth(1) {
        Some(path) => load_config(path.as_ref(), &[])?,
        None => parse_config(INLINE)?,
    };
    let dir = std::env::temp_dir().join("chiralfb-example");
    std::fs::create_dir_all(&dir)?;
    let out = run_sweep(&spec, &dir, "example")?;
    print!("{}", std::fs::read_to_string(&out.csv_path)?);
    eprintln!("manifest: {}", out.manifest_path.display());
    if out.tolerance_violations > 0 {
        eprintln!("{} points exceeded tolerances", out.tolerance_violations);
    }
    Ok(())
}
