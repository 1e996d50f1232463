//! The weighted gradient integral `int |u|^{p-2}(|grad u|^2 + V_+|u|^2)` and the
//! subcritical inequality for a constant negative potential.

use pell_lab::field::{Bc, Cell, CoefficientTuple, ComplexMatrix, GridDomain, SubcriticalityCert};
use pell_lab::semigroup::{assemble, evolve, lp_gradient_estimate, ProbeSpec, Scheme};

fn main() -> pell_lab::Result<()> {
    let pi = std::f64::consts::PI;
    let c = 0.2;
    let t = CoefficientTuple::constant(Cell::pure(ComplexMatrix::identity(1), -c));
    for p in [2.0, 3.0] {
        for n in [128, 256, 512] {
            let dom = GridDomain::interval(0.0, pi, n, Bc::Dirichlet)?;
            // discrete first Dirichlet eigenvalue of the cell-centred stencil
            let h = dom.h(0);
            let lambda1 = (2.0 / h * (h / 2.0).sin()).powi(2);
            let cert = SubcriticalityCert::new(c / lambda1 * 1.01, 0.0)?;
            let f = ProbeSpec::Bump { center: vec![1.2], width: 0.4 }.build(&dom, 0)?;
            let u = evolve(&assemble(&t, &dom)?, &f, &[0.1], Scheme::BackwardEuler, 0.0, 1e-3)?.remove(0).u;
            let r = lp_gradient_estimate(&t, p, &dom, &u, &cert)?;
            let e = ProbeSpec::Eigenmode { j: 1 }.build(&dom, 0)?;
            let re = lp_gradient_estimate(&t, p, &dom, &e, &cert)?;
            println!(
                "p={p} n={n:<4} weighted={:.6} slack={:.4e} holds={}  eigenvector slack={:.4e} holds={}",
                r.weighted_energy, r.slack, r.holds, re.slack, re.holds
            );
        }
    }
    Ok(())
}
