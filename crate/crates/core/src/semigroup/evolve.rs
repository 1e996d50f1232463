//! Implicit time stepping for `du/dt = -e^{i theta} M^{-1} K u`.

use serde::{Deserialize, Serialize};

use super::form::DiscreteForm;
use crate::error::{Error, Result};
use crate::field::{GridDomain, C64};
use crate::sparse::{BandLu, SparseMatrix};

/// Crank-Nicolson refuses steps with `dt |M^{-1} K|_inf` above this.
pub const CN_STIFFNESS_LIMIT: f64 = 1e4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    BackwardEuler,
    CrankNicolson,
}

#[derive(Clone, Debug)]
pub struct SemigroupState {
    pub t: f64,
    pub u: Vec<C64>,
    pub scheme: Scheme,
    pub dt: f64,
}

/// Stepper with one cached factorization per distinct step length.
pub struct Evolver<'a> {
    form: &'a DiscreteForm,
    k: SparseMatrix,
    scheme: Scheme,
    stiffness: f64,
    cache: Vec<(u64, BandLu, Option<SparseMatrix>)>,
}

impl<'a> Evolver<'a> {
    /// `theta` rotates time: `T_{t e^{i theta}}`.
    pub fn new(form: &'a DiscreteForm, scheme: Scheme, theta: f64) -> Self {
        let k = form.stiffness.scale(C64::from_polar(1.0, theta));
        let stiffness = (0..form.n())
            .map(|i| k.row(i).iter().map(|(_, v)| v.norm()).sum::<f64>() / form.mass[i])
            .fold(0.0, f64::max);
        Self { form, k, scheme, stiffness, cache: vec![] }
    }

    fn factors(&mut self, dt: f64) -> Result<usize> {
        let key = dt.to_bits();
        if let Some(i) = self.cache.iter().position(|(k, _, _)| *k == key) {
            return Ok(i);
        }
        let m = SparseMatrix::diagonal(&self.form.mass);
        let one = C64::new(1.0, 0.0);
        let (lhs, rhs) = match self.scheme {
            Scheme::BackwardEuler => (m.combine(one, &self.k, C64::new(dt, 0.0)), None),
            Scheme::CrankNicolson => {
                if dt * self.stiffness > CN_STIFFNESS_LIMIT {
                    return Err(Error::StiffStep(dt * self.stiffness));
                }
                (
                    m.combine(one, &self.k, C64::new(0.5 * dt, 0.0)),
                    Some(m.combine(one, &self.k, C64::new(-0.5 * dt, 0.0))),
                )
            }
        };
        let lu = BandLu::factor(&lhs)?;
        self.cache.push((key, lu, rhs));
        Ok(self.cache.len() - 1)
    }

    pub fn step(&mut self, u: &[C64], dt: f64) -> Result<Vec<C64>> {
        let i = self.factors(dt)?;
        let (_, lu, rhs) = &self.cache[i];
        let b = match rhs {
            None => u.iter().zip(&self.form.mass).map(|(x, m)| x * m).collect::<Vec<_>>(),
            Some(r) => r.matvec(u),
        };
        Ok(lu.solve(&b))
    }

    /// States at each time of `t_grid`, taking uniform substeps no longer than `dt_max`.
    pub fn run(&mut self, f: &[C64], t_grid: &[f64], dt_max: f64) -> Result<Vec<SemigroupState>> {
        if !(dt_max > 0.0) {
            return Err(Error::InvalidParam("dt must be positive".into()));
        }
        if t_grid.iter().any(|t| *t < 0.0) || t_grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParam("time grid must be nonnegative and nondecreasing".into()));
        }
        let mut out = Vec::with_capacity(t_grid.len());
        let mut u = f.to_vec();
        let mut t = 0.0;
        for &target in t_grid {
            let span = target - t;
            let mut used = 0.0;
            if span > 0.0 {
                let n = (span / dt_max - 1e-9).ceil().max(1.0) as usize;
                let dt = span / n as f64;
                for _ in 0..n {
                    u = self.step(&u, dt)?;
                }
                used = dt;
            }
            t = target;
            out.push(SemigroupState { t, u: u.clone(), scheme: self.scheme, dt: used });
        }
        Ok(out)
    }
}

/// Convenience wrapper around [`Evolver`].
pub fn evolve(
    form: &DiscreteForm,
    f: &[C64],
    t_grid: &[f64],
    scheme: Scheme,
    theta: f64,
    dt_max: f64,
) -> Result<Vec<SemigroupState>> {
    Evolver::new(form, scheme, theta).run(f, t_grid, dt_max)
}

/// Midpoint-rule `L^p` norm; `p = inf` gives the maximum.
pub fn lp_norm(u: &[C64], p: f64, domain: &GridDomain) -> f64 {
    if p.is_infinite() {
        return u.iter().map(|z| z.norm()).fold(0.0, f64::max);
    }
    let vol = domain.cell_volume();
    (vol * u.iter().map(|z| z.norm().powf(p)).sum::<f64>()).powf(1.0 / p)
}

/// `sum vol * u * conj(v)`.
pub fn inner(u: &[C64], v: &[C64], domain: &GridDomain) -> C64 {
    let vol = domain.cell_volume();
    u.iter().zip(v).map(|(a, b)| a * b.conj()).sum::<C64>() * vol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Bc, Cell, CoefficientTuple, ComplexMatrix, ComplexVec};
    use crate::semigroup::form::assemble;
    use std::f64::consts::PI;

    fn real(v: &[f64]) -> Vec<C64> {
        v.iter().map(|x| C64::new(*x, 0.0)).collect()
    }

    #[test]
    fn time_zero_is_identity() {
        let dom = GridDomain::interval(0.0, PI, 16, Bc::Dirichlet).unwrap();
        let form = assemble(&CoefficientTuple::constant(Cell::pure(ComplexMatrix::identity(1), 0.0)), &dom).unwrap();
        let f = real(&dom.centers().iter().map(|x| x[0].sin()).collect::<Vec<_>>());
        let s = evolve(&form, &f, &[0.0], Scheme::BackwardEuler, 0.0, 0.1).unwrap();
        assert_eq!(s[0].u, f);
    }

    #[test]
    fn neumann_conserves_mass() {
        let dom = GridDomain::interval(0.0, 2.0, 40, Bc::Neumann).unwrap();
        let a = ComplexMatrix::scalar(1, C64::new(1.7, 0.0));
        let form = assemble(&CoefficientTuple::constant(Cell::pure(a, 0.0)), &dom).unwrap();
        let f = real(&dom.centers().iter().map(|x| (3.0 * x[0]).cos() + x[0] * x[0]).collect::<Vec<_>>());
        let m0 = inner(&f, &vec![C64::new(1.0, 0.0); 40], &dom);
        for scheme in [Scheme::BackwardEuler, Scheme::CrankNicolson] {
            let s = evolve(&form, &f, &[0.1, 0.5, 2.0], scheme, 0.0, 0.001).unwrap();
            for st in s {
                let m = inner(&st.u, &vec![C64::new(1.0, 0.0); 40], &dom);
                assert!((m - m0).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn duality_with_adjoint_tuple() {
        let dom = GridDomain::interval(0.0, 1.0, 30, Bc::Dirichlet).unwrap();
        let t = CoefficientTuple::constant(
            Cell::new(
                ComplexMatrix::scalar(1, C64::new(1.0, 0.4)),
                ComplexVec(vec![C64::new(0.3, 0.2)]),
                ComplexVec(vec![C64::new(-0.1, 0.5)]),
                0.6,
            )
            .unwrap(),
        );
        let fa = assemble(&t, &dom).unwrap();
        let fs = assemble(&crate::pell::adjoint(&t), &dom).unwrap();
        let f: Vec<C64> = dom.centers().iter().map(|x| C64::new(x[0] * (1.0 - x[0]), x[0].sin())).collect();
        let g: Vec<C64> = dom.centers().iter().map(|x| C64::new((5.0 * x[0]).cos(), 0.3)).collect();
        for scheme in [Scheme::BackwardEuler, Scheme::CrankNicolson] {
            let tf = evolve(&fa, &f, &[0.2], scheme, 0.0, 0.01).unwrap();
            let tg = evolve(&fs, &g, &[0.2], scheme, 0.0, 0.01).unwrap();
            let lhs = inner(&tf[0].u, &g, &dom);
            let rhs = inner(&f, &tg[0].u, &dom);
            assert!((lhs - rhs).norm() < 1e-12, "{lhs} {rhs}");
        }
    }

    #[test]
    fn semigroup_property() {
        let dom = GridDomain::interval(0.0, PI, 50, Bc::Dirichlet).unwrap();
        let form = assemble(&CoefficientTuple::constant(Cell::pure(ComplexMatrix::identity(1), 0.3)), &dom).unwrap();
        let f = real(&dom.centers().iter().map(|x| x[0] * (PI - x[0])).collect::<Vec<_>>());
        let one = evolve(&form, &f, &[0.3, 0.7], Scheme::BackwardEuler, 0.0, 0.01).unwrap();
        let mid = evolve(&form, &one[0].u, &[0.4], Scheme::BackwardEuler, 0.0, 0.01).unwrap();
        let err = one[1].u.iter().zip(&mid[0].u).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn energy_identity_first_order() {
        // -d/dt |u|^2 = 2 Re a(u,u)
        let dom = GridDomain::interval(0.0, PI, 64, Bc::Dirichlet).unwrap();
        let t = CoefficientTuple::constant(
            Cell::new(ComplexMatrix::scalar(1, C64::new(1.0, 0.5)), ComplexVec(vec![C64::new(0.2, 0.0)]), ComplexVec::zeros(1), 0.5)
                .unwrap(),
        );
        let form = assemble(&t, &dom).unwrap();
        let f = real(&dom.centers().iter().map(|x| x[0].sin()).collect::<Vec<_>>());
        let dt = 1e-5;
        let s = evolve(&form, &f, &[dt], Scheme::CrankNicolson, 0.0, dt).unwrap();
        let n0 = inner(&f, &f, &dom).re;
        let n1 = inner(&s[0].u, &s[0].u, &dom).re;
        let rate = -(n1 - n0) / dt;
        let mid: Vec<C64> = f.iter().zip(&s[0].u).map(|(a, b)| (a + b) * 0.5).collect();
        let a = 2.0 * form.eval(&mid, &mid).re;
        assert!((rate - a).abs() / a < 1e-6, "{rate} {a}");
    }

    #[test]
    fn cn_guard() {
        let dom = GridDomain::interval(0.0, 1.0, 200, Bc::Dirichlet).unwrap();
        let form = assemble(&CoefficientTuple::constant(Cell::pure(ComplexMatrix::identity(1), 0.0)), &dom).unwrap();
        let f = vec![C64::new(1.0, 0.0); 200];
        assert!(matches!(
            evolve(&form, &f, &[1.0], Scheme::CrankNicolson, 0.0, 1.0),
            Err(Error::StiffStep(_))
        ));
    }

    #[test]
    fn lp_norm_examples() {
        let dom = GridDomain::interval(0.0, 1.0, 10, Bc::Neumann).unwrap();
        let one = vec![C64::new(1.0, 0.0); 10];
        for p in [1.0, 2.0, 3.5, f64::INFINITY] {
            assert!((lp_norm(&one, p, &dom) - 1.0).abs() < 1e-14);
        }
        let mut prev = f64::INFINITY;
        for n in [50, 100, 200, 400] {
            let dom = GridDomain::interval(0.0, PI, n, Bc::Dirichlet).unwrap();
            let u = real(&dom.centers().iter().map(|x| x[0].sin()).collect::<Vec<_>>());
            assert!((lp_norm(&u, 2.0, &dom) - (PI / 2.0).sqrt()).abs() < 1e-12);
            let err = (lp_norm(&u, 3.0, &dom) - (4.0f64 / 3.0).cbrt()).abs();
            assert!(err < prev / 3.5 || n == 50);
            prev = err;
        }
        assert!(prev < 1e-5);
    }
}
