//! `(E.T.)_{n,nu}` and the first-order form of `Q * phi_nu` against the dominating function `F`.

use pell_lab::bellman::{BellmanParams, MollifierParams};
use pell_lab::cutoff::CutoffParams;
use pell_lab::field::{Cell, ComplexMatrix, ComplexVec, C64};
use pell_lab::hess::{et_domination, first_order_domination};

fn main() -> pell_lab::Result<()> {
    let p = 3.0;
    let bp = BellmanParams::new(p, 0.25)?;
    let cutoff = CutoffParams::with_default_kappa(p)?;
    let v = |x: f64| ComplexVec(vec![C64::new(x, 0.5 * x)]);
    let cells = [
        Cell::new(ComplexMatrix::identity(1), v(0.3), v(-0.2), 1.0)?,
        Cell::new(ComplexMatrix::identity(1), v(0.1), v(0.25), 0.5)?,
    ];
    let n_samples: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    for nu in [0.2, 0.1] {
        let mp = MollifierParams::with_nu(nu)?;
        let rep = et_domination(&[1.0, 10.0, 100.0], &mp, &cells, &cutoff, &bp, n_samples, 1)?;
        for r in &rep.rows {
            println!("E.T./F  nu={nu} n={:<4} max={:.4e} at {:?}", r.n, r.max_ratio, r.argmax_point);
        }
        println!("  spread {:.3} passed {}", rep.spread, rep.passed);
    }
    let rep = first_order_domination(&[0.2, 0.1, 0.05], 12, &cells, &bp, n_samples, 2)?;
    for r in &rep.rows {
        println!("H^(b,c)/F nu={} max={:.4e}", r.nu, r.max_ratio);
    }
    println!("  spread {:.3} passed {}", rep.spread, rep.passed);
    Ok(())
}
