//! The bilinear functional: the heat-case identity `B(sin, sin) = pi/4` and
//! the ratio `B(f, g) / (||f||_p ||g||_q)` over random probes for a signed potential.

use pell_lab::field::{Bc, Cell, CoefficientTuple, ComplexMatrix, GridDomain};
use pell_lab::pell::conjugate;
use pell_lab::semigroup::{bilinear_functional, lp_norm, BilinearParams, ProbeSpec};

fn main() -> pell_lab::Result<()> {
    let pi = std::f64::consts::PI;
    let dom = GridDomain::interval(0.0, pi, 1024, Bc::Dirichlet)?;
    let heat = CoefficientTuple::constant(Cell::pure(ComplexMatrix::identity(1), 0.0));
    let s = ProbeSpec::Eigenmode { j: 1 }.build(&dom, 0)?;
    let r = bilinear_functional(&heat, &heat, &dom, &s, &s, &BilinearParams::default())?;
    println!("B(sin, sin) = {:.6}  pi/4 = {:.6}  rel = {:.2e}", r.value, pi / 4.0, (r.value / (pi / 4.0) - 1.0).abs());

    let dom = GridDomain::interval(0.0, pi, 256, Bc::Dirichlet)?;
    let v: Vec<f64> = dom.centers().iter().map(|x| if x[0] < pi / 2.0 { -0.3 } else { 1.0 }).collect();
    let t = CoefficientTuple::with_potential(ComplexMatrix::identity(1), v)?;
    let p = 4.0;
    let params = BilinearParams { t_max: 40.0, ..Default::default() };
    let mut ratios = vec![];
    for k in 0..20u64 {
        let f = ProbeSpec::Random.build(&dom, 2 * k)?;
        let g = ProbeSpec::Random.build(&dom, 2 * k + 1)?;
        let b = bilinear_functional(&t, &t, &dom, &f, &g, &params)?;
        ratios.push(b.value / (lp_norm(&f, p, &dom) * lp_norm(&g, conjugate(p), &dom)));
    }
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    println!("signed V, p={p}: ratio in [{min:.4}, {max:.4}] over {} probes", ratios.len());
    Ok(())
}
