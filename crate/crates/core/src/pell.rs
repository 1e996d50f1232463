//! The coefficient-class algebra: `Delta_p`, `J_p`, `Gamma_p`, `mu_p`, class
//! membership, perturbations, rotations, adjoints and subcriticality.

use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Cell, CoefficientTuple, ComplexMatrix, ComplexVec, GridDomain, SubcriticalityCert, C64};
use crate::semigroup::form::laplacian;

/// Strict inequalities need at least this margin.
pub const MARGIN: f64 = 1e-7;

pub fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidParam(format!("p = {p} must be > 1")));
    }
    Ok(())
}

/// `J_p xi = xi + (p - 2) Re xi`.
pub fn jp_apply(xi: &ComplexVec, p: f64) -> Result<ComplexVec> {
    check_p(p)?;
    Ok(ComplexVec(xi.0.iter().map(|z| z + (p - 2.0) * z.re).collect()))
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `min_{|xi|=1} Re<A xi, xi + |1-2/p| conj(xi)>` for one matrix.
pub fn delta_p_matrix(a: &ComplexMatrix, p: f64) -> Result<f64> {
    check_p(p)?;
    let d = a.dim();
    let k = (1.0 - 2.0 / p).abs();
    let m = a.real_form();
    let r = DMatrix::from_fn(2 * d, 2 * d, |i, j| {
        if i != j {
            0.0
        } else if i < d {
            1.0 + k
        } else {
            1.0 - k
        }
    });
    Ok(sym(&(r * m)).symmetric_eigenvalues().min())
}

/// `Delta_p` over all cells of a tuple.
pub fn delta_p(t: &CoefficientTuple, p: f64) -> Result<f64> {
    let mut best = f64::INFINITY;
    for a in &t.a {
        best = best.min(delta_p_matrix(a, p)?);
    }
    Ok(best)
}

/// Sampling oracle for `Delta_p`: random sphere points followed by projected
/// gradient descent from the best starts.
pub fn delta_p_sampled(a: &ComplexMatrix, p: f64, n_samples: usize, seed: u64) -> Result<f64> {
    check_p(p)?;
    let k = (1.0 - 2.0 / p).abs();
    let f = |x: &[f64]| {
        let xi = ComplexVec::from_real_coords(x);
        let w = xi.add(&xi.conj().scale(C64::new(k, 0.0)));
        a.mul_vec(&xi).dot(&w).re
    };
    sphere_min(2 * a.dim(), n_samples, seed, f)
}

pub(crate) fn sphere_min(dim: usize, n_samples: usize, seed: u64, f: impl Fn(&[f64]) -> f64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut x = vec![0.0; dim];
    for _ in 0..n_samples.max(1) {
        let mut n2 = 0.0;
        for v in x.iter_mut() {
            *v = gauss(&mut rng);
            n2 += *v * *v;
        }
        let n = n2.sqrt().max(1e-300);
        x.iter_mut().for_each(|v| *v /= n);
        let val = f(&x);
        if starts.len() < 8 || val < starts[starts.len() - 1].0 {
            starts.push((val, x.clone()));
            starts.sort_by(|a, b| a.0.total_cmp(&b.0));
            starts.truncate(8);
        }
    }
    let mut best = starts[0].0;
    for (mut val, mut x) in starts {
        let mut step = 0.1;
        for _ in 0..400 {
            let g = num_grad(&f, &x);
            // tangent projection
            let dot: f64 = g.iter().zip(&x).map(|(a, b)| a * b).sum();
            let t: Vec<f64> = g.iter().zip(&x).map(|(a, b)| a - dot * b).collect();
            let tn = t.iter().map(|v| v * v).sum::<f64>().sqrt();
            if tn < 1e-13 {
                break;
            }
            let mut y: Vec<f64> = x.iter().zip(&t).map(|(a, b)| a - step * b / tn).collect();
            let yn = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            y.iter_mut().for_each(|v| *v /= yn);
            let fy = f(&y);
            if fy < val {
                val = fy;
                x = y;
                step *= 1.2;
            } else {
                step *= 0.5;
                if step < 1e-12 {
                    break;
                }
            }
        }
        best = best.min(val);
    }
    Ok(best)
}

fn num_grad(f: &impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let h = 1e-7;
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let a = f(&y);
            y[i] = x[i] - h;
            let b = f(&y);
            y[i] = x[i];
            (a - b) / (2.0 * h)
        })
        .collect()
}

pub(crate) fn gauss(rng: &mut impl Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// `Re<A xi, J_p xi> + Re<conj(b) + J_p c, xi> + V`.
pub fn gamma_p(cell: &Cell, xi: &ComplexVec, p: f64) -> Result<f64> {
    let j = jp_apply(xi, p)?;
    let quad = cell.a.mul_vec(xi).dot(&j).re;
    let lin = cell.b.conj().add(&jp_apply(&cell.c, p)?).dot(xi).re;
    Ok(quad + lin + cell.v)
}

/// Quadratic and linear parts of `Gamma_p` in real coordinates:
/// `Gamma_p(X) = X^T S X + l^T X + V`.
pub fn gamma_real_parts(cell: &Cell, p: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_p(p)?;
    let d = cell.dim();
    let m = cell.a.real_form();
    let j = DMatrix::from_fn(2 * d, 2 * d, |r, c| {
        if r != c {
            0.0
        } else if r < d {
            p - 1.0
        } else {
            1.0
        }
    });
    let s = sym(&(m.transpose() * j));
    let l = cell.b.conj().add(&jp_apply(&cell.c, p)?).to_real();
    Ok((s, DVector::from_vec(l)))
}

/// `mu_p` of one cell: the largest `mu` with `Gamma_p >= mu (|xi|^2 + V)`.
///
/// `Gamma_p - mu(|xi|^2 + V) >= 0` for all `xi` is positivity of the bordered
/// matrix `[[S - mu, l/2], [l^T/2, V(1-mu)]]`, so `mu_p` is the bottom of a
/// symmetric pencil.
pub fn mu_p_cell(cell: &Cell, p: f64) -> Result<f64> {
    if cell.v < 0.0 {
        return Err(Error::InvalidParam("mu_p needs V >= 0".into()));
    }
    let (s, l) = gamma_real_parts(cell, p)?;
    let n = s.nrows();
    if cell.v == 0.0 {
        if l.norm() > 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        return Ok(s.symmetric_eigenvalues().min());
    }
    let sv = cell.v.sqrt();
    let g = DMatrix::from_fn(n + 1, n + 1, |r, c| match (r < n, c < n) {
        (true, true) => s[(r, c)],
        (true, false) => l[r] / 2.0 / sv,
        (false, true) => l[c] / 2.0 / sv,
        (false, false) => 1.0,
    });
    Ok(g.symmetric_eigenvalues().min())
}

/// Per-ray closed form: `inf_t Gamma(t e) / (t^2 + V)` for a unit direction `e`.
pub fn mu_p_ray(cell: &Cell, e: &ComplexVec, p: f64) -> Result<f64> {
    let q = cell.a.mul_vec(e).dot(&jp_apply(e, p)?).re;
    let l = cell.b.conj().add(&jp_apply(&cell.c, p)?).dot(e).re;
    if cell.v == 0.0 {
        return Ok(if l == 0.0 { q } else { f64::NEG_INFINITY });
    }
    Ok(0.5 * ((q + 1.0) - ((q - 1.0).powi(2) + l * l / cell.v).sqrt()))
}

/// Value of `mu_p` together with a sampled upper bound from the ray formula.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MuBounds {
    pub value: f64,
    pub sampled_upper: f64,
}

/// `mu_p` over all cells; errors on negative `V`.
pub fn mu_p(t: &CoefficientTuple, p: f64) -> Result<f64> {
    check_p(p)?;
    let mut best = f64::INFINITY;
    for cell in t.cells() {
        best = best.min(mu_p_cell(&cell, p)?);
    }
    Ok(best)
}

/// `mu_p` plus the ray-sampling cross-check.
pub fn mu_p_bounds(t: &CoefficientTuple, p: f64, n_samples: usize, seed: u64) -> Result<MuBounds> {
    let value = mu_p(t, p)?;
    let mut upper = f64::INFINITY;
    for cell in t.cells() {
        let d = cell.dim();
        let f = |x: &[f64]| mu_p_ray(&cell, &ComplexVec::from_real_coords(x), p).unwrap_or(f64::NAN);
        upper = upper.min(sphere_min(2 * d, n_samples, seed, f)?);
    }
    Ok(MuBounds { value, sampled_upper: upper })
}

/// `M(A) = max |conj(b) - c| / sqrt(V)` over cells.
pub fn m_const(t: &CoefficientTuple) -> f64 {
    t.cells()
        .map(|c| {
            let gap = c.b.conj().sub(&c.c).norm();
            if gap == 0.0 {
                0.0
            } else if c.v <= 0.0 {
                f64::INFINITY
            } else {
                gap / c.v.sqrt()
            }
        })
        .fold(0.0, f64::max)
}

/// Minimum over cells of `min_xi Gamma_p(xi)` scaled: the bottom of the
/// bordered matrix `[[S, l/2], [l^T/2, V]]`. Nonnegative iff `Gamma_p >= 0`.
pub fn weak_slack(t: &CoefficientTuple, p: f64) -> Result<f64> {
    let mut best = f64::INFINITY;
    for cell in t.cells() {
        let (s, l) = gamma_real_parts(&cell, p)?;
        let n = s.nrows();
        let g = DMatrix::from_fn(n + 1, n + 1, |r, c| match (r < n, c < n) {
            (true, true) => s[(r, c)],
            (true, false) => l[r] / 2.0,
            (false, true) => l[c] / 2.0,
            (false, false) => cell.v,
        });
        best = best.min(g.symmetric_eigenvalues().min());
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassName {
    #[serde(rename = "A_p")]
    Ap,
    #[serde(rename = "W_p")]
    Wp,
    #[serde(rename = "S_p")]
    Sp,
    #[serde(rename = "B_p")]
    Bp,
    #[serde(rename = "WP_p")]
    WPp,
    #[serde(rename = "SP_p")]
    SPp,
    #[serde(rename = "BP_p")]
    BPp,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Witness {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weak_slack: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassReport {
    pub class_name: ClassName,
    pub p: f64,
    pub member: bool,
    pub witness: Witness,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cert: Option<SubcriticalityCert>,
    /// Every certificate on the search grid that passed.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub passing: Vec<SubcriticalityCert>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn finite_or_none(x: f64) -> Option<f64> {
    if x.is_finite() {
        Some(x)
    } else {
        None
    }
}

/// Membership in `A_p`, `W_p`, `S_p` or `B_p`.
pub fn check_class(t: &CoefficientTuple, p: f64, class: ClassName) -> Result<ClassReport> {
    check_p(p)?;
    let mut w = Witness::default();
    let dp = delta_p(t, p)?;
    w.delta_p = Some(dp);
    let nonneg_v = t.v.iter().all(|&v| v >= 0.0);
    let mut note = None;
    let member = match class {
        ClassName::Ap => dp > MARGIN,
        ClassName::Wp => {
            let m = m_const(t);
            w.m = finite_or_none(m);
            if !nonneg_v {
                note = Some("negative potential".into());
                false
            } else {
                let ws = weak_slack(t, p)?;
                w.weak_slack = Some(ws);
                dp > MARGIN && ws >= -MARGIN && m.is_finite()
            }
        }
        ClassName::Sp | ClassName::Bp => {
            let m = m_const(t);
            w.m = finite_or_none(m);
            if !nonneg_v {
                note = Some("negative potential".into());
                false
            } else {
                let mp = mu_p(t, p)?;
                w.mu_p = finite_or_none(mp);
                let mut ok = mp > MARGIN && m.is_finite();
                if class == ClassName::Bp {
                    let mq = mu_p(t, conjugate(p))?;
                    w.mu_q = finite_or_none(mq);
                    ok = ok && mq > MARGIN;
                }
                ok
            }
        }
        _ => {
            return Err(Error::InvalidParam(
                "perturbed classes go through check_perturbed_class".into(),
            ))
        }
    };
    Ok(ClassReport { class_name: class, p, member, witness: w, cert: None, passing: vec![], note })
}

/// `C_{p,alpha,sigma}(A) = (A - alpha pq/4 I, b, c, (1 - sigma) V_+)`.
pub fn perturb(t: &CoefficientTuple, p: f64, cert: &SubcriticalityCert) -> Result<CoefficientTuple> {
    check_p(p)?;
    let s = cert.alpha * p * conjugate(p) / 4.0;
    CoefficientTuple::new(
        t.a.iter().map(|a| a.shift(-s)).collect(),
        t.b.clone(),
        t.c.clone(),
        t.v.iter().map(|&v| (1.0 - cert.sigma) * v.max(0.0)).collect(),
    )
}

/// `(e^{i phi} A, e^{i phi} b, e^{i phi} c, cos(phi) V)`.
pub fn rotate(t: &CoefficientTuple, phi: f64) -> Result<CoefficientTuple> {
    if phi.abs() > std::f64::consts::FRAC_PI_2 + 1e-15 {
        return Err(Error::InvalidParam(format!("|phi| = {} exceeds pi/2", phi.abs())));
    }
    let z = C64::from_polar(1.0, phi);
    CoefficientTuple::new(
        t.a.iter().map(|a| a.scale(z)).collect(),
        t.b.iter().map(|b| b.scale(z)).collect(),
        t.c.iter().map(|c| c.scale(z)).collect(),
        t.v.iter().map(|v| v * phi.cos()).collect(),
    )
}

/// `(A^*, conj(c), conj(b), V)`.
pub fn adjoint(t: &CoefficientTuple) -> CoefficientTuple {
    CoefficientTuple::new(
        t.a.iter().map(|a| a.adjoint()).collect(),
        t.c.iter().map(|c| c.conj()).collect(),
        t.b.iter().map(|b| b.conj()).collect(),
        t.v.clone(),
    )
    .expect("adjoint keeps shapes")
}

/// Probe energies `(int |grad v|^2, int V_- |v|^2, int V_+ |v|^2)`.
#[derive(Clone, Debug)]
struct Probe {
    kind: &'static str,
    grad: f64,
    minus: f64,
    plus: f64,
    v: Vec<f64>,
}

/// Outcome of the subcriticality falsifier.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubcriticalReport {
    /// No probe violated the inequality. This is not a proof.
    pub not_refuted: bool,
    /// `max int V_-|v|^2 / (alpha int |grad v|^2 + sigma int V_+|v|^2)` over probes.
    pub worst_ratio: f64,
    pub worst_kind: String,
    #[serde(skip)]
    pub violating_probe: Option<Vec<f64>>,
    pub n_probes: usize,
}

/// Probe family for one potential on one grid. Reused across certificates.
pub struct SubcriticalProbes {
    domain: GridDomain,
    vminus: Vec<f64>,
    vplus: Vec<f64>,
    stiff: Vec<Vec<f64>>,
    probes: Vec<Probe>,
    exact_limit: usize,
    exact_cache: Mutex<Vec<(u64, Option<Probe>)>>,
}

impl SubcriticalProbes {
    /// `n_probes` splits between Laplacian eigenvectors, random bumps and
    /// bumps at the largest values of `V_-`.
    pub fn new(v: &[f64], domain: &GridDomain, n_probes: usize, seed: u64) -> Result<Self> {
        if n_probes == 0 {
            return Err(Error::InvalidParam("n_probes must be >= 1".into()));
        }
        let n = domain.len();
        let v: Vec<f64> = if v.len() == 1 { vec![v[0]; n] } else { v.to_vec() };
        if v.len() != n {
            return Err(Error::Dimension(format!("{} potential values for {n} cells", v.len())));
        }
        let k = laplacian(domain);
        let stiff: Vec<Vec<f64>> = k.to_dense().into_iter().map(|r| r.into_iter().map(|z| z.re).collect()).collect();
        let vminus: Vec<f64> = v.iter().map(|x| (-x).max(0.0)).collect();
        let vplus: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
        let mut s = Self { domain: domain.clone(), vminus, vplus, stiff, probes: vec![], exact_limit: 1600, exact_cache: Mutex::new(vec![]) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_eig = n_probes.div_ceil(3).max(1);
        let n_bump = (n_probes / 3).max(1);
        let n_adv = n_probes.saturating_sub(n_eig + n_bump).max(1);
        for j in 1..=n_eig {
            let u = eigenvector(domain, j);
            s.push("eigenvector", u);
        }
        for _ in 0..n_bump {
            let c: Vec<f64> = (0..domain.dim)
                .map(|ax| rng.gen_range(domain.extents[ax][0]..domain.extents[ax][1]))
                .collect();
            let w = rng.gen_range(0.02..0.3)
                * (0..domain.dim).map(|ax| domain.extents[ax][1] - domain.extents[ax][0]).fold(0.0, f64::max);
            let u = bump(domain, &c, w);
            s.push("bump", u);
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|a, b| s.vminus[*b].total_cmp(&s.vminus[*a]).then(a.cmp(b)));
        for (r, &k) in order.iter().take(n_adv).enumerate() {
            if s.vminus[k] == 0.0 {
                break;
            }
            let c = domain.center(k);
            let w = domain.h(0) * (1.0 + r as f64);
            let u = bump(domain, &c, w);
            s.push("adversarial", u);
        }
        Ok(s)
    }

    fn push(&mut self, kind: &'static str, v: Vec<f64>) {
        let p = self.energies(kind, v);
        self.probes.push(p);
    }

    fn energies(&self, kind: &'static str, v: Vec<f64>) -> Probe {
        let vol = self.domain.cell_volume();
        let grad: f64 = self
            .stiff
            .iter()
            .zip(&v)
            .map(|(row, vi)| vi * row.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        let minus = vol * v.iter().zip(&self.vminus).map(|(x, m)| m * x * x).sum::<f64>();
        let plus = vol * v.iter().zip(&self.vplus).map(|(x, m)| m * x * x).sum::<f64>();
        Probe { kind, grad, minus, plus, v }
    }

    /// Leading vector of `max (V_- - sigma V_+)|v|^2 / |grad v|^2` on the grid.
    fn exact_probe(&self, sigma: f64) -> Option<Probe> {
        let n = self.vminus.len();
        if n > self.exact_limit || self.vminus.iter().all(|&x| x == 0.0) {
            return None;
        }
        let vol = self.domain.cell_volume();
        let mut k = DMatrix::from_fn(n, n, |i, j| self.stiff[i][j]);
        // Neumann: constants have zero energy, regularize slightly
        let shift = 1e-10 * k.diagonal().max();
        for i in 0..n {
            k[(i, i)] += shift;
        }
        let chol = k.cholesky()?;
        let l = chol.l();
        let linv = l.clone().try_inverse()?;
        let nd = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                vol * (self.vminus[i] - sigma * self.vplus[i])
            } else {
                0.0
            }
        });
        let c = &linv * nd * linv.transpose();
        let eig = sym(&c).symmetric_eigen();
        let (imax, _) = eig.eigenvalues.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
        let y = eig.eigenvectors.column(imax).clone_owned();
        let v = linv.transpose() * y;
        Some(self.energies("generalized-eigenvector", v.iter().copied().collect()))
    }

    pub fn check(&self, cert: &SubcriticalityCert) -> SubcriticalReport {
        let mut worst = 0.0f64;
        let mut kind = String::from("none");
        let mut bad: Option<Vec<f64>> = None;
        let exact = {
            let mut cache = self.exact_cache.lock().expect("cache lock");
            let key = cert.sigma.to_bits();
            match cache.iter().find(|(k, _)| *k == key) {
                Some((_, p)) => p.clone(),
                None => {
                    let p = self.exact_probe(cert.sigma);
                    cache.push((key, p.clone()));
                    p
                }
            }
        };
        let all = self.probes.iter().chain(exact.iter());
        let mut count = 0;
        for pr in all {
            count += 1;
            if pr.minus == 0.0 {
                continue;
            }
            let rhs = cert.alpha * pr.grad + cert.sigma * pr.plus;
            let ratio = if rhs > 0.0 { pr.minus / rhs } else { f64::INFINITY };
            if ratio > worst {
                worst = ratio;
                kind = pr.kind.to_string();
                if pr.minus > rhs * (1.0 + 1e-9) {
                    bad = Some(pr.v.clone());
                }
            }
        }
        SubcriticalReport {
            not_refuted: bad.is_none(),
            worst_ratio: worst,
            worst_kind: kind,
            violating_probe: bad,
            n_probes: count,
        }
    }
}

/// Discrete Laplacian eigenvector with index `j` (1-based, first axis varies).
pub fn eigenvector(domain: &GridDomain, j: usize) -> Vec<f64> {
    let dirichlet = domain.bc == crate::field::Bc::Dirichlet;
    let (jx, jy) = if domain.dim == 1 {
        (j, 1)
    } else {
        // enumerate modes by increasing jx + jy
        let mut cnt = 0;
        let mut out = (1, 1);
        'outer: for s in 2.. {
            for a in 1..s {
                cnt += 1;
                if cnt == j {
                    out = (a, s - a);
                    break 'outer;
                }
            }
        }
        out
    };
    let mode = |ax: usize, m: usize, x: f64| {
        let [a, b] = domain.extents[ax];
        let y = (x - a) / (b - a);
        if dirichlet {
            (m as f64 * std::f64::consts::PI * y).sin()
        } else {
            ((m - 1) as f64 * std::f64::consts::PI * y).cos()
        }
    };
    domain
        .centers()
        .iter()
        .map(|x| {
            let mut v = mode(0, jx, x[0]);
            if domain.dim == 2 {
                v *= mode(1, jy, x[1]);
            }
            v
        })
        .collect()
}

fn bump(domain: &GridDomain, c: &[f64], w: f64) -> Vec<f64> {
    domain
        .centers()
        .iter()
        .map(|x| {
            let r2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            (-r2 / (w * w)).exp()
        })
        .collect()
}

/// One-shot falsifier for `int V_-|v|^2 <= alpha int |grad v|^2 + sigma int V_+|v|^2`.
pub fn check_subcritical(
    v: &[f64],
    cert: &SubcriticalityCert,
    domain: &GridDomain,
    n_probes: usize,
    seed: u64,
) -> Result<SubcriticalReport> {
    let cert = SubcriticalityCert::new(cert.alpha, cert.sigma)?;
    Ok(SubcriticalProbes::new(v, domain, n_probes, seed)?.check(&cert))
}

/// Search grid for `(alpha, sigma)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertGrid {
    pub alphas: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl Default for CertGrid {
    fn default() -> Self {
        let mut alphas = vec![0.0];
        let n = 41;
        for k in 0..n {
            alphas.push(10f64.powf(-4.0 + 5.0 * k as f64 / (n - 1) as f64));
        }
        Self { alphas, sigmas: (0..10).map(|k| k as f64 / 10.0).collect() }
    }
}

impl CertGrid {
    pub fn single(cert: SubcriticalityCert) -> Self {
        Self { alphas: vec![cert.alpha], sigmas: vec![cert.sigma] }
    }
}

/// Membership in `WP_p`, `SP_p` or `BP_p`: some `(alpha, sigma)` on the grid
/// passes the subcriticality falsifier and puts the perturbed tuple in the
/// base class. Certificates are ordered by `alpha`, then `sigma`.
pub fn check_perturbed_class(
    t: &CoefficientTuple,
    p: f64,
    class: ClassName,
    domain: &GridDomain,
    grid: &CertGrid,
    n_probes: usize,
    seed: u64,
) -> Result<ClassReport> {
    check_p(p)?;
    let base = match class {
        ClassName::WPp => ClassName::Wp,
        ClassName::SPp => ClassName::Sp,
        ClassName::BPp => ClassName::Bp,
        _ => return Err(Error::InvalidParam("expected WP_p, SP_p or BP_p".into())),
    };
    if grid.alphas.is_empty() || grid.sigmas.is_empty() {
        return Err(Error::InvalidParam("empty certificate grid".into()));
    }
    let probes = SubcriticalProbes::new(&t.v, domain, n_probes, seed)?;
    let mut pairs: Vec<SubcriticalityCert> = Vec::new();
    for &a in &grid.alphas {
        for &s in &grid.sigmas {
            pairs.push(SubcriticalityCert::new(a, s)?);
        }
    }
    pairs.sort_by(|x, y| x.alpha.total_cmp(&y.alpha).then(x.sigma.total_cmp(&y.sigma)));
    let mut passing = Vec::new();
    let mut best: Option<(SubcriticalityCert, ClassReport)> = None;
    for cert in pairs {
        let sub = probes.check(&cert);
        if !sub.not_refuted {
            continue;
        }
        let rep = check_class(&perturb(t, p, &cert)?, p, base)?;
        if rep.member {
            passing.push(cert);
            if best.is_none() {
                best = Some((cert, rep));
            }
        }
    }
    match best {
        Some((cert, rep)) => Ok(ClassReport {
            class_name: class,
            p,
            member: true,
            witness: rep.witness,
            cert: Some(cert),
            passing,
            note: Some("subcriticality not refuted by probes".into()),
        }),
        None => {
            let rep = check_class(&perturb(t, p, &SubcriticalityCert::zero())?, p, base)?;
            Ok(ClassReport {
                class_name: class,
                p,
                member: false,
                witness: rep.witness,
                cert: None,
                passing,
                note: Some("no certificate on the search grid".into()),
            })
        }
    }
}

/// Stability of the perturbed classes: adjoint duality, small rotations and
/// the decreasing chain in the exponent.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilityReport {
    pub p: f64,
    pub member_bp: bool,
    pub member_sp: bool,
    /// `A^* in SP_q`
    pub adjoint_sp_q: bool,
    pub duality_ok: bool,
    /// `(phi, A_phi in BP_p)`
    pub rotations: Vec<(f64, bool)>,
    /// `(r, A in SP_r)` for `|1 - 2/r| <= |1 - 2/p|`
    pub chain: Vec<(f64, bool)>,
    pub passed: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn check_class_stability(
    t: &CoefficientTuple,
    p: f64,
    domain: &GridDomain,
    grid: &CertGrid,
    n_probes: usize,
    seed: u64,
    rotations: &[f64],
    chain: &[f64],
) -> Result<StabilityReport> {
    check_p(p)?;
    let q = conjugate(p);
    if let Some(r) = chain.iter().find(|r| !(**r > 1.0) || (1.0 - 2.0 / **r).abs() > (1.0 - 2.0 / p).abs() + 1e-12) {
        return Err(Error::InvalidParam(format!("r = {r} is outside |1 - 2/r| <= |1 - 2/p|")));
    }
    let member = |t: &CoefficientTuple, r: f64, c: ClassName| -> Result<bool> {
        Ok(check_perturbed_class(t, r, c, domain, grid, n_probes, seed)?.member)
    };
    let member_bp = member(t, p, ClassName::BPp)?;
    let member_sp = member(t, p, ClassName::SPp)?;
    let adjoint_sp_q = member(&adjoint(t), q, ClassName::SPp)?;
    let rotations = rotations
        .iter()
        .map(|&phi| Ok((phi, member(&rotate(t, phi)?, p, ClassName::BPp)?)))
        .collect::<Result<Vec<_>>>()?;
    let chain = chain
        .iter()
        .map(|&r| Ok((r, member(t, r, ClassName::SPp)?)))
        .collect::<Result<Vec<_>>>()?;
    let duality_ok = member_sp == adjoint_sp_q;
    let implied = !member_bp || (rotations.iter().all(|r| r.1) && chain.iter().all(|r| r.1));
    Ok(StabilityReport { p, member_bp, member_sp, adjoint_sp_q, duality_ok, rotations, chain, passed: duality_ok && implied })
}
