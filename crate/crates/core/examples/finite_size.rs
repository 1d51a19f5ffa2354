//! Even and odd chains under strong drive with `g = pi/2`. Even chains keep a
//! dimer component, odd ones approach the maximally mixed state.
//!
//! N = 6 takes a few seconds per point in release mode.

use std::f64::consts::FRAC_PI_2;

use chiralfb::fcs::counting_cumulants;
use chiralfb::operators::SystemParams;
use chiralfb::steady::steady_state_for;

fn main() -> chiralfb::Result<()> {
    let max_n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(5);
    println!("{:>3} {:>10} {:>12} {:>14} {:>12}", "N", "k/N", "purity", "purity*2^N", "method");
    for n in 1..=max_n {
        let p = SystemParams::new(n)
            .with_rabi(5.0)
            .with_detuning(0.1)
            .with_chirality(1.0, 0.6)
            .with_counting_feedback(FRAC_PI_2);
        let purity = steady_state_for(&p)?.state.purity();
        let c = counting_cumulants(&p)?;
        println!(
            "{n:>3} {:>10.5} {purity:>12.6} {:>14.4} {:>12?}",
            c.first_cumulant / n as f64,
            purity * (1u32 << n) as f64,
            c.method
        );
    }
    Ok(())
}
