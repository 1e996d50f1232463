use pell_lab::field::{Bc, Cell, CoefficientTuple, ComplexMatrix, ComplexVec, GridDomain, C64};
use pell_lab::pell::adjoint;
use pell_lab::semigroup::{assemble, evolve, inner, lp_norm, search_growth, ContractivityParams, Scheme};
use proptest::prelude::*;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn domain(bc: Bc) -> GridDomain {
    GridDomain::interval(0.0, std::f64::consts::PI, 48, bc).unwrap()
}

fn data(n: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n).prop_map(|v| v.into_iter().map(|(a, b)| c(a, b)).collect())
}

fn tuple() -> impl Strategy<Value = CoefficientTuple> {
    (-0.6f64..0.6, -0.5f64..0.5, -0.5f64..0.5, 0.0f64..2.0).prop_map(|(th, b, cc, v)| {
        CoefficientTuple::constant(
            Cell::new(ComplexMatrix::scalar(1, C64::from_polar(1.0, th)), ComplexVec(vec![c(b, 0.3 * b)]), ComplexVec(vec![c(cc, -0.2 * cc)]), v)
                .unwrap(),
        )
    })
}

fn norm2(u: &[C64], d: &GridDomain) -> f64 {
    lp_norm(u, 2.0, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adjoint_semigroup_is_the_dual(t in tuple(), f in data(48), g in data(48), bc in prop::sample::select(vec![Bc::Dirichlet, Bc::Neumann])) {
        let d = domain(bc);
        let tf = evolve(&assemble(&t, &d).unwrap(), &f, &[0.3], Scheme::BackwardEuler, 0.0, 0.01).unwrap().remove(0).u;
        let tg = evolve(&assemble(&adjoint(&t), &d).unwrap(), &g, &[0.3], Scheme::BackwardEuler, 0.0, 0.01).unwrap().remove(0).u;
        let (l, r) = (inner(&tf, &g, &d), inner(&f, &tg, &d));
        prop_assert!((l - r).norm() <= 1e-10 * (1.0 + l.norm()), "{l} vs {r}");
    }

    #[test]
    fn backward_euler_steps_compose(t in tuple(), f in data(48)) {
        let d = domain(Bc::Dirichlet);
        let form = assemble(&t, &d).unwrap();
        let once = evolve(&form, &f, &[0.2], Scheme::BackwardEuler, 0.0, 0.01).unwrap().remove(0).u;
        let twice = evolve(&form, &once, &[0.2], Scheme::BackwardEuler, 0.0, 0.01).unwrap().remove(0).u;
        let direct = evolve(&form, &f, &[0.4], Scheme::BackwardEuler, 0.0, 0.01).unwrap().remove(0).u;
        let diff: Vec<C64> = twice.iter().zip(&direct).map(|(a, b)| a - b).collect();
        prop_assert!(norm2(&diff, &d) <= 1e-10 * (1.0 + norm2(&f, &d)));
    }

    #[test]
    fn accretive_forms_contract_in_l2(th in -1.2f64..1.2, v in 0.0f64..3.0, f in data(48)) {
        let d = domain(Bc::Neumann);
        let t = CoefficientTuple::constant(Cell::pure(ComplexMatrix::scalar(1, C64::from_polar(1.0, th)), v));
        let form = assemble(&t, &d).unwrap();
        for scheme in [Scheme::BackwardEuler, Scheme::CrankNicolson] {
            let states = evolve(&form, &f, &[0.05, 0.1, 0.5], scheme, 0.0, 0.01).unwrap();
            let mut prev = norm2(&f, &d);
            for s in states {
                let now = norm2(&s.u, &d);
                prop_assert!(now <= prev * (1.0 + 1e-12));
                prev = now;
            }
        }
    }

    #[test]
    fn real_heat_flow_preserves_positivity(f in prop::collection::vec(0.0f64..1.0, 48), v in 0.0f64..2.0) {
        let d = domain(Bc::Dirichlet);
        let t = CoefficientTuple::constant(Cell::pure(ComplexMatrix::identity(1), v));
        let u0: Vec<C64> = f.iter().map(|x| c(*x, 0.0)).collect();
        let u = evolve(&assemble(&t, &d).unwrap(), &u0, &[0.25], Scheme::BackwardEuler, 0.0, 0.01).unwrap().remove(0).u;
        prop_assert!(u.iter().all(|z| z.re >= -1e-14 && z.im == 0.0));
        // the maximum principle also caps it
        let max = f.iter().cloned().fold(0.0, f64::max);
        prop_assert!(u.iter().all(|z| z.re <= max + 1e-12));
    }

    #[test]
    fn lp_norm_is_a_norm(f in data(48), g in data(48), p in 1.0f64..8.0, s in -3.0f64..3.0) {
        let d = domain(Bc::Dirichlet);
        let sum: Vec<C64> = f.iter().zip(&g).map(|(a, b)| a + b).collect();
        prop_assert!(lp_norm(&sum, p, &d) <= (lp_norm(&f, p, &d) + lp_norm(&g, p, &d)) * (1.0 + 1e-12));
        let scaled: Vec<C64> = f.iter().map(|a| a * s).collect();
        prop_assert!((lp_norm(&scaled, p, &d) - s.abs() * lp_norm(&f, p, &d)).abs() <= 1e-12 * (1.0 + lp_norm(&f, p, &d)));
    }

    #[test]
    fn constants_have_the_expected_norm(p in 1.0f64..8.0, a in -2.0f64..2.0) {
        let d = domain(Bc::Neumann);
        let u = vec![c(a, 0.0); d.len()];
        let want = a.abs() * std::f64::consts::PI.powf(1.0 / p);
        prop_assert!((lp_norm(&u, p, &d) - want).abs() <= 1e-12 * (1.0 + want));
    }
}

#[test]
fn neumann_constants_are_stationary() {
    let d = domain(Bc::Neumann);
    let t = CoefficientTuple::constant(Cell::pure(ComplexMatrix::scalar(1, C64::from_polar(1.0, 0.4)), 0.0));
    let u0 = vec![c(0.7, -0.2); d.len()];
    let u = evolve(&assemble(&t, &d).unwrap(), &u0, &[1.0], Scheme::CrankNicolson, 0.0, 0.01).unwrap().remove(0).u;
    assert!(u.iter().all(|z| (z - u0[0]).norm() < 1e-12));
}

/// Growth of the `L^p` norm switches on when the angle crosses `arccos|1 - 2/p|`.
#[test]
fn growth_threshold_changes_sign() {
    let d = GridDomain::interval(0.0, std::f64::consts::PI, 256, Bc::Dirichlet).unwrap();
    let t_grid: Vec<f64> = (1..=10).map(|k| 2e-3 * k as f64).collect();
    let params = ContractivityParams { dt_max: 2e-4, ..Default::default() };
    for p in [1.5f64, 3.0, 6.0] {
        let theta = (1.0 - 2.0 / p).abs().acos();
        let above = search_growth(p, theta + 0.25, &d, &t_grid, &params).unwrap();
        let below = search_growth(p, theta - 0.25, &d, &t_grid, &params).unwrap();
        assert!(above.detected, "p = {p}: {above:?}");
        assert!(!below.detected, "p = {p}: {below:?}");
        assert!(below.max_growth <= 0.0 && above.max_growth > 0.0);
    }
}
