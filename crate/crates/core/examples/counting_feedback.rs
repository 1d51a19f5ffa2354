//! Photon-counting feedback: each right-moving click triggers a pulse
//! `exp(-i g F)`. Prints rate and Fano factor against the pulse area, then the
//! fully mixed point at `g = pi/2` with perfect chirality.

use std::f64::consts::{FRAC_PI_2, PI};

use chiralfb::fcs::{counting_cumulants, theta_curve};
use chiralfb::generators::Observable;
use chiralfb::operators::SystemParams;
use chiralfb::steady::steady_state_for;

fn main() -> chiralfb::Result<()> {
    let base = SystemParams::new(2).with_rabi(1.0).with_detuning(0.1).with_chirality(1.0, 0.8);

    println!("{:>8} {:>12} {:>12} {:>10} {:>8}", "g", "k", "dk2", "fano", "purity");
    for i in 0..=8 {
        let g = PI * i as f64 / 8.0;
        let p = base.with_counting_feedback(g);
        let c = counting_cumulants(&p)?;
        let purity = steady_state_for(&p)?.state.purity();
        println!(
            "{g:>8.4} {:>12.6} {:>12.4} {:>10.3} {purity:>8.4}",
            c.first_cumulant,
            c.second_cumulant,
            c.second_cumulant / c.first_cumulant
        );
    }

    let s: Vec<f64> = (-4..=4).map(|i| 0.1 * i as f64).collect();
    println!("\ntheta(s) at g = pi/2:");
    for (s, t) in theta_curve(&base.with_counting_feedback(FRAC_PI_2), Observable::Counting, &s)? {
        println!("  s={s:+.1}  theta={t:+.6}");
    }

    for n in 2..=4 {
        let p = SystemParams::new(n)
            .with_rabi(1.0)
            .with_detuning(0.1)
            .with_chirality(1.0, 1.0)
            .with_counting_feedback(FRAC_PI_2);
        let purity = steady_state_for(&p)?.state.purity();
        println!("N={n} perfect chirality, g=pi/2: purity {purity:.10} (1/2^N = {})", 1.0 / (1u32 << n) as f64);
    }
    Ok(())
}
