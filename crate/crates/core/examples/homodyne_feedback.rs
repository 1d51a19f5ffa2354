//! Homodyne feedback of the right-moving field quadrature. Walks the gain
//! across the fully mixed line at `alpha = pi/2`.

use std::f64::consts::FRAC_PI_2;

use chiralfb::fcs::{fully_mixed_line, quadrature_cumulants};
use chiralfb::operators::SystemParams;
use chiralfb::steady::steady_state_for;

fn main() -> chiralfb::Result<()> {
    let dg = 0.8;
    let alpha = FRAC_PI_2;
    let g_mix = fully_mixed_line(dg, 1.0, alpha)?;
    println!("fully mixed line at alpha = pi/2: g = {g_mix:.6}");

    println!("{:>8} {:>12} {:>12} {:>12} {:>8}", "g", "x_alpha", "dx2_raw", "dx2_excess", "purity");
    for i in -8..=8 {
        let g = g_mix + 0.1 * i as f64;
        let p = SystemParams::new(2).with_rabi(1.0).with_chirality(1.0, dg).with_homodyne_feedback(g, alpha);
        let c = quadrature_cumulants(&p)?;
        let purity = steady_state_for(&p)?.state.purity();
        println!(
            "{g:>8.4} {:>12.6} {:>12.6} {:>12.6} {purity:>8.4}",
            c.first_cumulant,
            c.second_cumulant,
            c.second_cumulant_excess()
        );
    }

    // The mixed point does not depend on drive, detuning or atom number.
    for (n, rabi, det) in [(2, 0.3, 0.0), (3, 1.5, 0.2), (4, 2.5, -0.4)] {
        let p = SystemParams::new(n)
            .with_rabi(rabi)
            .with_detuning(det)
            .with_chirality(1.0, dg)
            .with_homodyne_feedback(g_mix, alpha);
        let purity = steady_state_for(&p)?.state.purity();
        println!("N={n} rabi={rabi} detuning={det}: purity * 2^N = {:.10}", purity * (1u32 << n) as f64);
    }
    Ok(())
}
