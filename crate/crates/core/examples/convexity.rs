//! Sampled lower bounds for the generalized Hessian of `Q`, plain and perturbed.

use pell_lab::field::{Cell, CoefficientTuple, ComplexMatrix, SubcriticalityCert};
use pell_lab::hess::{verify_convexity, ConvexityMode, ConvexityParams};
use pell_lab::pell::conjugate;

fn main() -> pell_lab::Result<()> {
    let n = 100_000;
    for (p, v) in [(2.0, 0.0), (3.0, 1.0), (4.0, 0.5)] {
        let a = CoefficientTuple::constant(Cell::pure(ComplexMatrix::identity(1), v));
        let b = CoefficientTuple::constant(Cell::pure(ComplexMatrix::identity(1), 2.0 * v));
        let rep = verify_convexity(&a, &b, p, &ConvexityParams::default(), n, ConvexityMode::Plain)?;
        println!("plain p={p} delta={}", rep.delta);
        for r in &rep.regions {
            println!("  {:<6} n={:<6} min_slack={:.4e} passed={}", r.region, r.n_samples, r.min_slack, r.passed);
        }
    }
    // V = -eps on (0, pi): lambda_1 = 1
    let eps = 0.1;
    for p in [2.0, 3.0, 4.0] {
        let alpha = eps * (1.0 + 1e-3);
        let cert = SubcriticalityCert::new(alpha, 0.0)?;
        let t = CoefficientTuple::constant(Cell::pure(ComplexMatrix::identity(1), -eps));
        let mode = ConvexityMode::Perturbed { cert_a: cert, cert_b: cert };
        let rep = verify_convexity(&t, &t, p, &ConvexityParams::default(), n, mode)?;
        println!("perturbed p={p} q={:.3} delta={}", conjugate(p), rep.delta);
        for r in &rep.regions {
            println!("  {:<6} n={:<6} constant={:.4e} passed={}", r.region, r.n_samples, r.empirical_constant, r.passed);
        }
    }
    Ok(())
}
