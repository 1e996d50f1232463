//! Empirical constants of the growth bounds for the mollified Bellman function.

use pell_lab::bellman::{verify_second_order_bounds, BellmanParams, MollifierParams};

fn main() -> pell_lab::Result<()> {
    let bp = BellmanParams::new(3.0, 0.25)?;
    let mp = MollifierParams::with_nu(0.2)?;
    for r in verify_second_order_bounds(&bp, &mp, 500, 7) {
        println!(
            "{:<24} C = {:>10.4e}  (half: {:>10.4e})  stable = {}",
            r.bound_id, r.empirical_constant, r.half_constant, r.stable
        );
    }
    Ok(())
}
