//! Heat flow of the Bellman function, `E(t) = int Q(T_t f, T_t g)`, for a
//! real, a complex and a signed-potential coefficient suite.

use pell_lab::field::{Bc, Cell, CoefficientTuple, ComplexMatrix, GridDomain, SubcriticalityCert, C64};
use pell_lab::hess::ConvexityMode;
use pell_lab::semigroup::{flow_monotonicity, FlowParams};

fn main() -> pell_lab::Result<()> {
    let dom = GridDomain::interval(0.0, std::f64::consts::PI, 256, Bc::Dirichlet)?;
    let xs: Vec<f64> = dom.centers().iter().map(|x| x[0]).collect();
    let f: Vec<C64> = xs.iter().map(|x| C64::new(x.sin(), 0.5 * (2.0 * x).sin())).collect();
    let g: Vec<C64> = xs.iter().map(|x| C64::new(0.8 * x.sin() + 0.3 * (3.0 * x).sin(), -0.2 * x.sin())).collect();
    let t_grid: Vec<f64> = (0..=40).map(|k| 0.05 * k as f64).collect();
    let cell = |a: C64, v: f64| CoefficientTuple::constant(Cell::pure(ComplexMatrix::scalar(1, a), v));
    let eps = 0.1;
    let cert = SubcriticalityCert::new(eps * 1.05, 0.0)?;
    for p in [2.0, 4.0] {
        let suites = [
            ("real", cell(C64::new(1.5, 0.0), 0.0), cell(C64::new(1.0, 0.0), 0.5), ConvexityMode::Plain),
            ("complex", cell(C64::from_polar(1.0, 0.3), 0.0), cell(C64::from_polar(1.0, -0.2), 0.0), ConvexityMode::Plain),
            ("signed_v", cell(C64::new(1.0, 0.0), -eps), cell(C64::new(1.0, 0.0), -eps), ConvexityMode::Perturbed { cert_a: cert, cert_b: cert }),
        ];
        for (name, a, b, mode) in suites {
            let params = FlowParams { mode, dt_max: 1e-3, ..Default::default() };
            let r = flow_monotonicity(&a, &b, p, &f, &g, &dom, &t_grid, &params)?;
            let d = &r.diagnostics;
            println!(
                "p={p} {name:<8} delta={} E0={:.5} E_end={:.5} max_inc={:.2e} tol={:.2e} -dE/dt={:.5} int H={:.5} rel={:.2e} passed={}",
                d.delta, r.flow_e[0], r.flow_e.last().unwrap(), d.max_increase, d.tol_flow, d.quotient, d.hessian_quadrature, d.derivative_rel_err, r.passed
            );
        }
    }
    Ok(())
}
