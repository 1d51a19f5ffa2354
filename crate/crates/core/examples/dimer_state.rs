//! Resonant two-atom chain without feedback: the stationary state is the pure
//! dimer and the chain stops emitting into the guide.

use chiralfb::operators::{dimer_state, PureState, SystemParams};
use chiralfb::steady::{overlap, photon_rate_direct, steady_state_for};

fn main() -> chiralfb::Result<()> {
    for (rabi, dg) in [(0.5, 0.6), (1.0, 0.6), (2.0, 0.9)] {
        let p = SystemParams::new(2).with_rabi(rabi).with_chirality(1.0, dg);
        let ss = steady_state_for(&p)?;
        let dimer = dimer_state(rabi, dg)?;
        println!(
            "rabi={rabi:<4} dg={dg:<4} F(D)={:.12} purity={:.12} k={:.2e} <gg|rho|gg>={:.4}",
            overlap(&ss.state, &dimer)?,
            ss.state.purity(),
            photon_rate_direct(&ss.state, &p)?,
            overlap(&ss.state, &PureState::ground(2))?,
        );
    }

    // Off resonance the dimer is no longer exact.
    let p = SystemParams::new(2).with_rabi(1.0).with_detuning(0.1).with_chirality(1.0, 0.6);
    let ss = steady_state_for(&p)?;
    println!(
        "detuning 0.1: F(D)={:.6} purity={:.6} k={:.6}",
        overlap(&ss.state, &dimer_state(1.0, 0.6)?)?,
        ss.state.purity(),
        photon_rate_direct(&ss.state, &p)?
    );
    Ok(())
}
