//! `L^p` contractivity of the discrete semigroup and the search for growth
//! past the angle `arccos|1 - 2/p|`.

use pell_lab::field::{Bc, Cell, CoefficientTuple, ComplexMatrix, GridDomain};
use pell_lab::semigroup::{check_contractivity, search_growth, ContractivityParams, ProbeSpec};

fn main() -> pell_lab::Result<()> {
    let dom = GridDomain::interval(0.0, std::f64::consts::PI, 512, Bc::Dirichlet)?;
    let params = ContractivityParams::default();
    let probes = [
        ProbeSpec::Eigenmode { j: 1 },
        ProbeSpec::Eigenmode { j: 3 },
        ProbeSpec::Bump { center: vec![1.0], width: 0.2 },
        ProbeSpec::Random,
        ProbeSpec::Phase { k: 1.0 },
    ]
    .iter()
    .map(|s| s.build(&dom, 11))
    .collect::<pell_lab::Result<Vec<_>>>()?;
    let t_grid = [0.01, 0.05, 0.2, 1.0];
    for v in [0.0, 2.0] {
        let t = CoefficientTuple::constant(Cell::pure(ComplexMatrix::identity(1), v));
        for p in [1.5, 2.0, 4.0, 8.0] {
            let r = check_contractivity(&t, p, &dom, 0.0, &probes, &t_grid, &params)?;
            println!("V={v} p={p}: class={} max_growth={:.3e} contractive={}", r.class_member, r.max_growth, r.contractive);
        }
    }
    let t_grid: Vec<f64> = (1..=20).map(|k| 1e-3 * k as f64).collect();
    for p in [1.5, 4.0, 8.0] {
        let phi = (1.0 - 2.0 / p as f64).abs().acos() + 0.2;
        let g = search_growth(p, phi, &dom, &t_grid, &ContractivityParams { dt_max: 1e-4, ..params.clone() })?;
        println!(
            "p={p} phi={:.3} (threshold {:.3}): max_growth={:.3e} at k={:.2} detected={}",
            g.phi, g.threshold, g.max_growth, g.best_k, g.detected
        );
        let phi = g.threshold - 0.2;
        let g = search_growth(p, phi, &dom, &t_grid, &ContractivityParams { dt_max: 1e-4, ..params.clone() })?;
        println!("  below threshold phi={:.3}: max_growth={:.3e} detected={}", g.phi, g.max_growth, g.detected);
    }
    Ok(())
}
