//! Generalized Hessians of functions on `C^N` (`N = 1, 2`) with respect to
//! coefficient cells, their Leibniz split, and sampled convexity checks for `Q`.
//!
//! Real coordinates of `omega` are `(Re w_1, Im w_1, ..., Re w_N, Im w_N)`; the
//! vector `Xi` is embedded block by block as `(Re Xi_j, Im Xi_j)`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bellman::mollify::{mollify, mollify_value, MollifierParams};
use crate::bellman::{join, q_grad_real, q_hess_branch, BellmanEval, BellmanParams, Mollified, R4};
use crate::cutoff::{psi_n, CutoffParams};
use crate::error::{Error, Result};
use crate::field::{Cell, CoefficientTuple, ComplexMatrix, ComplexVec, SubcriticalityCert, C64};
use crate::pell::{check_class, conjugate, mu_p, perturb, ClassName};

/// `M(A)`, the real `2d x 2d` form of a complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct RealForm {
    pub m: DMatrix<f64>,
}

pub fn real_form(a: &ComplexMatrix) -> RealForm {
    RealForm { m: a.real_form() }
}

/// Value, real gradient and real Hessian (row-major, `2N x 2N`) at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

impl Jet {
    pub fn new(value: f64, grad: Vec<f64>, hess: Vec<f64>) -> Result<Self> {
        let m = grad.len();
        if m == 0 || m % 2 != 0 || hess.len() != m * m {
            return Err(Error::Dimension(format!("gradient of length {m}, Hessian of length {}", hess.len())));
        }
        Ok(Self { value, grad, hess })
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self { value, grad: vec![0.0; 2 * n], hess: vec![0.0; 4 * n * n] }
    }

    /// Errors when the point is on the singular set of `Q`.
    pub fn from_bellman(e: &BellmanEval) -> Result<Self> {
        let h = e.hess.ok_or(Error::SingularSet(0.0))?;
        Ok(Self { value: e.value, grad: e.grad.to_vec(), hess: h.iter().flatten().copied().collect() })
    }

    pub fn from_mollified(m: &Mollified) -> Self {
        Self { value: m.value, grad: m.grad.to_vec(), hess: m.hess.iter().flatten().copied().collect() }
    }

    /// Jet of `Q` on the branch containing the point.
    pub fn bellman_branch(z: C64, e: C64, bp: &BellmanParams) -> Self {
        let h = q_hess_branch(z, e, bp);
        Self {
            value: crate::bellman::q_eval(z, e, bp),
            grad: q_grad_real(z, e, bp).to_vec(),
            hess: h.iter().flatten().copied().collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.grad.len() / 2
    }

    #[inline]
    pub fn h(&self, a: usize, b: usize) -> f64 {
        self.hess[a * self.grad.len() + b]
    }

    pub fn product(&self, o: &Jet) -> Jet {
        let m = self.grad.len();
        let mut hess = vec![0.0; m * m];
        for a in 0..m {
            for b in 0..m {
                hess[a * m + b] = self.value * o.h(a, b)
                    + o.value * self.h(a, b)
                    + self.grad[a] * o.grad[b]
                    + self.grad[b] * o.grad[a];
            }
        }
        Jet {
            value: self.value * o.value,
            grad: (0..m).map(|a| self.value * o.grad[a] + o.value * self.grad[a]).collect(),
            hess,
        }
    }

    pub fn scaled(&self, s: f64) -> Jet {
        Jet {
            value: s * self.value,
            grad: self.grad.iter().map(|x| s * x).collect(),
            hess: self.hess.iter().map(|x| s * x).collect(),
        }
    }
}

/// `F_r(zeta) = |zeta|^r` on `C`, for `zeta != 0`.
pub fn power_jet(z: C64, r: f64) -> Jet {
    let s = z.norm();
    let x = [z.re, z.im];
    let f1 = r * s.powf(r - 2.0);
    let f2 = r * (r - 2.0) * s.powf(r - 4.0);
    let mut hess = vec![0.0; 4];
    for i in 0..2 {
        for j in 0..2 {
            hess[i * 2 + j] = f2 * x[i] * x[j] + if i == j { f1 } else { 0.0 };
        }
    }
    Jet { value: s.powf(r), grad: vec![f1 * x[0], f1 * x[1]], hess }
}

/// The three parts of the generalized Hessian.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HessianDecomposition {
    pub h_matrix: f64,
    pub h_firstorder: f64,
    pub g_potential: f64,
    pub total: f64,
}

impl HessianDecomposition {
    fn from_parts(h_matrix: f64, h_firstorder: f64, g_potential: f64) -> Self {
        Self { h_matrix, h_firstorder, g_potential, total: h_matrix + h_firstorder + g_potential }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::from_parts(s * self.h_matrix, s * self.h_firstorder, s * self.g_potential)
    }
}

/// The vectors entering the forms at fixed `(cells, omega, Xi)`, one block of
/// length `d` per real coordinate `a = 2j + h`.
#[derive(Clone, Debug)]
pub struct FormFrame {
    d: usize,
    /// `V_d(Xi_j)`
    z: Vec<Vec<f64>>,
    /// `V_d(A_j Xi_j)`
    mz: Vec<Vec<f64>>,
    /// `V_d(omega_j c_j)`
    c: Vec<Vec<f64>>,
    /// `V_1(<Xi_j, conj b_j>)`
    beta: Vec<f64>,
    /// `V_j V_1(omega_j)`
    pot: Vec<f64>,
}

fn parts(v: &ComplexVec) -> [Vec<f64>; 2] {
    [v.re(), v.im()]
}

fn dotr(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl FormFrame {
    pub fn new(cells: &[Cell], omega: &[C64], xi: &[ComplexVec]) -> Result<Self> {
        let n = cells.len();
        if !(1..=2).contains(&n) || omega.len() != n || xi.len() != n {
            return Err(Error::Dimension(format!(
                "{n} cells, {} points, {} vectors (N must be 1 or 2)",
                omega.len(),
                xi.len()
            )));
        }
        let d = cells[0].dim();
        if cells.iter().any(|c| c.dim() != d) || xi.iter().any(|x| x.dim() != d) {
            return Err(Error::Dimension("cells and vectors must share the dimension d".into()));
        }
        let mut frame = Self { d, z: vec![], mz: vec![], c: vec![], beta: vec![], pot: vec![] };
        for j in 0..n {
            let cell = &cells[j];
            frame.z.extend(parts(&xi[j]));
            frame.mz.extend(parts(&cell.a.mul_vec(&xi[j])));
            frame.c.extend(parts(&cell.c.scale(omega[j])));
            let bx = xi[j].bilinear(&cell.b);
            frame.beta.extend([bx.re, bx.im]);
            frame.pot.extend([cell.v * omega[j].re, cell.v * omega[j].im]);
        }
        Ok(frame)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    fn m(&self) -> usize {
        self.z.len()
    }

    /// `<[S (x) I] W(Xi), (+) M(A_j) W(Xi)>` for a `2N x 2N` matrix `S`.
    pub fn matrix_form(&self, s: &[f64]) -> f64 {
        let m = self.m();
        let mut acc = 0.0;
        for a in 0..m {
            for b in 0..m {
                let k = s[a * m + b];
                if k != 0.0 {
                    acc += k * dotr(&self.z[b], &self.mz[a]);
                }
            }
        }
        acc
    }

    /// `<[S (x) I] W(Xi), W(omega_j c_j)>`.
    pub fn c_form(&self, s: &[f64]) -> f64 {
        let m = self.m();
        let mut acc = 0.0;
        for a in 0..m {
            for b in 0..m {
                let k = s[a * m + b];
                if k != 0.0 {
                    acc += k * dotr(&self.z[b], &self.c[a]);
                }
            }
        }
        acc
    }

    /// `<g, W(<Xi_j, conj b_j>)>`.
    pub fn b_form(&self, g: &[f64]) -> f64 {
        dotr(g, &self.beta)
    }

    /// `<g, W(V_j omega_j)>`.
    pub fn potential_form(&self, g: &[f64]) -> f64 {
        dotr(g, &self.pot)
    }

    pub fn decompose(&self, f: &Jet) -> Result<HessianDecomposition> {
        if f.grad.len() != self.m() {
            return Err(Error::Dimension(format!("jet in R^{} against N = {}", f.grad.len(), self.m() / 2)));
        }
        Ok(HessianDecomposition::from_parts(
            self.matrix_form(&f.hess),
            self.c_form(&f.hess) + self.b_form(&f.grad),
            self.potential_form(&f.grad),
        ))
    }
}

/// `H^A + H^(b,c) + G^V` of `phi` at `omega` in direction `xi`.
pub fn generalized_hessian(phi: &Jet, cells: &[Cell], omega: &[C64], xi: &[ComplexVec]) -> Result<HessianDecomposition> {
    FormFrame::new(cells, omega, xi)?.decompose(phi)
}

/// Components of the generalized Hessian of a product.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LeibnizSplit {
    /// `Psi(omega) H_Phi`
    pub psi_h_phi: HessianDecomposition,
    /// `Phi(omega) H_Psi`
    pub phi_h_psi: HessianDecomposition,
    pub l_a: f64,
    pub t_c: f64,
    /// `H_{Psi Phi}` computed from the product jet.
    pub direct: HessianDecomposition,
}

impl LeibnizSplit {
    pub fn reconstructed(&self) -> f64 {
        self.psi_h_phi.total + self.phi_h_psi.total + self.l_a + self.t_c
    }
}

/// Symmetric part of `D Psi (x) D Phi`.
fn cross_sym(psi: &Jet, phi: &Jet) -> Vec<f64> {
    let m = psi.grad.len();
    let mut l = vec![0.0; m * m];
    for a in 0..m {
        for b in 0..m {
            l[a * m + b] = 0.5 * (psi.grad[a] * phi.grad[b] + psi.grad[b] * phi.grad[a]);
        }
    }
    l
}

pub fn leibniz_split_frame(frame: &FormFrame, psi: &Jet, phi: &Jet) -> Result<LeibnizSplit> {
    if psi.grad.len() != phi.grad.len() {
        return Err(Error::Dimension("jets on different spaces".into()));
    }
    let ls = cross_sym(psi, phi);
    Ok(LeibnizSplit {
        psi_h_phi: frame.decompose(phi)?.scaled(psi.value),
        phi_h_psi: frame.decompose(psi)?.scaled(phi.value),
        l_a: 2.0 * frame.matrix_form(&ls),
        t_c: 2.0 * frame.c_form(&ls),
        direct: frame.decompose(&psi.product(phi))?,
    })
}

pub fn leibniz_split(psi: &Jet, phi: &Jet, cells: &[Cell], omega: &[C64], xi: &[ComplexVec]) -> Result<LeibnizSplit> {
    leibniz_split_frame(&FormFrame::new(cells, omega, xi)?, psi, phi)
}

/// `(E.T.)` computed from `S = Psi_n (Q * phi_nu)` and from the four-term split.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EtReport {
    pub direct: f64,
    pub split: f64,
    /// `(Q*phi) H_Psi`, `Psi H^(b,c)_{Q*phi}`, `L^(A,B)`, `T^(c,gamma)`
    pub parts: [f64; 4],
}

pub fn et_from_jets(psi: &Jet, qphi: &Jet, cells: &[Cell], omega: &[C64], xi: &[ComplexVec]) -> Result<EtReport> {
    let frame = FormFrame::new(cells, omega, xi)?;
    let s = frame.decompose(&psi.product(qphi))?;
    let hq = frame.decompose(qphi)?;
    let direct = s.total - psi.value * (hq.h_matrix + hq.g_potential);
    let lz = leibniz_split_frame(&frame, psi, qphi)?;
    let parts = [qphi.value * frame.decompose(psi)?.total, psi.value * hq.h_firstorder, lz.l_a, lz.t_c];
    Ok(EtReport { direct, split: parts.iter().sum(), parts })
}

/// `F(omega; Xi)`, the dominating function for `(E.T.)`.
pub fn candidate_f(z: C64, e: C64, x: &ComplexVec, y: &ComplexVec, v: f64, w: f64, p: f64) -> f64 {
    let q = conjugate(p);
    let (s, t) = (z.norm(), e.norm());
    let first = (s.powf(p - 2.0) + 1.0) * (x.norm_sqr() + v * s * s);
    if t == 0.0 {
        first + y.norm_sqr()
    } else {
        first + (t.powf(q - 2.0) + 1.0) * (y.norm_sqr() + w * t * t) + t * t
    }
}

fn two_cells(a: &Cell, b: &Cell) -> [Cell; 2] {
    [a.clone(), b.clone()]
}

fn hess_q(y: &R4, bp: &BellmanParams) -> Jet {
    Jet::bellman_branch(C64::new(y[0], y[1]), C64::new(y[2], y[3]), bp)
}

/// `N^(c,gamma)` and `N^(V,W)`: form of `Q * phi_nu` minus the mollified form of `Q`.
///
/// Only `c` and `V` of each cell are used.
pub fn remainder_forms(
    mp: &MollifierParams,
    bp: &BellmanParams,
    a: &Cell,
    b: &Cell,
    omega: &R4,
    xi: &[ComplexVec; 2],
) -> Result<(f64, f64)> {
    let d = a.dim();
    let strip = |c: &Cell| Cell::new(ComplexMatrix::scalar(d, C64::new(0.0, 0.0)), ComplexVec::zeros(d), c.c.clone(), c.v);
    let cells = [strip(a)?, strip(b)?];
    let at = |w: &R4| [C64::new(w[0], w[1]), C64::new(w[2], w[3])];
    let qm = mollify(|y| crate::bellman::q_eval(C64::new(y[0], y[1]), C64::new(y[2], y[3]), bp), omega, mp);
    let f0 = FormFrame::new(&cells, &at(omega), xi)?.decompose(&Jet::from_mollified(&qm))?;
    let c_form = |y: &R4| -> f64 {
        let f = FormFrame::new(&cells, &at(y), xi).expect("validated");
        f.c_form(&hess_q(y, bp).hess)
    };
    let v_form = |y: &R4| -> f64 {
        let f = FormFrame::new(&cells, &at(y), xi).expect("validated");
        f.potential_form(&q_grad_real(C64::new(y[0], y[1]), C64::new(y[2], y[3]), bp))
    };
    let nc = f0.h_firstorder - mollify_value(c_form, omega, mp);
    let nv = f0.g_potential - mollify_value(v_form, omega, mp);
    Ok((nc, nv))
}

/// Which expression `h_p` takes at the point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HpBranch {
    BP,
    GP,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryHp {
    pub value: f64,
    pub branch: HpBranch,
}

fn unit(z: C64) -> C64 {
    if z.norm() == 0.0 {
        C64::new(1.0, 0.0)
    } else {
        z / z.norm()
    }
}

/// `Re(e^{-i arg z} X)` and `Im(e^{-i arg z} X)` as real vectors.
fn rotate_parts(z: C64, x: &ComplexVec) -> (Vec<f64>, Vec<f64>) {
    let r = x.scale(unit(z).conj());
    (r.re(), r.im())
}

pub fn b_p(z: C64, e: C64, x: &ComplexVec, y: &ComplexVec, p: f64) -> f64 {
    let q = conjugate(p);
    let (s, t) = (z.norm(), e.norm());
    let (rx, _) = rotate_parts(z, x);
    let (ry, _) = rotate_parts(e, y);
    let k = 1.0 - q / 2.0;
    t.powf(2.0 - q) * x.norm_sqr()
        + k * k * s * s * t.powf(-q) * dotr(&ry, &ry)
        + 2.0 * k * s * t.powf(1.0 - q) * dotr(&rx, &ry)
}

pub fn g_p(z: C64, x: &ComplexVec, p: f64) -> f64 {
    let (rx, ix) = rotate_parts(z, x);
    0.5 * p * z.norm().powf(p - 2.0) * (0.5 * p * dotr(&rx, &rx) + 2.0 / p * dotr(&ix, &ix))
}

pub fn auxiliary_hp(z: C64, e: C64, x: &ComplexVec, y: &ComplexVec, p: f64) -> Result<AuxiliaryHp> {
    if !(p >= 2.0) {
        return Err(Error::InvalidParam(format!("h_p needs p >= 2, got {p}")));
    }
    let q = conjugate(p);
    if z.norm().powf(p) < e.norm().powf(q) {
        Ok(AuxiliaryHp { value: b_p(z, e, x, y, p), branch: HpBranch::BP })
    } else {
        Ok(AuxiliaryHp { value: g_p(z, x, p), branch: HpBranch::GP })
    }
}

/// `G_p(u, v) = u max{|u|^{p/2-1}, |v|^{1-q/2}}`.
pub fn big_g_p(u: C64, v: C64, p: f64) -> C64 {
    let q = conjugate(p);
    u * u.norm().powf(p / 2.0 - 1.0).max(v.norm().powf(1.0 - q / 2.0))
}

/// `H^{I}_{F_r}[z; X] = r|z|^{r-2}(|X|^2 + (r-2)|Re(e^{-i arg z} X)|^2)`.
pub fn h_identity_power(z: C64, x: &ComplexVec, r: f64) -> f64 {
    let (rx, _) = rotate_parts(z, x);
    r * z.norm().powf(r - 2.0) * (x.norm_sqr() + (r - 2.0) * dotr(&rx, &rx))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ConvexityMode {
    Plain,
    Perturbed { cert_a: SubcriticalityCert, cert_b: SubcriticalityCert },
}

impl ConvexityMode {
    fn name(&self) -> &'static str {
        match self {
            ConvexityMode::Plain => "plain",
            ConvexityMode::Perturbed { .. } => "perturbed",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityParams {
    /// `None` runs the descending search over `2^-k`.
    pub delta: Option<f64>,
    /// relative half-width of the excluded band around `|zeta|^p = |eta|^q`
    pub eps_upsilon: f64,
    pub seed: u64,
}

impl Default for ConvexityParams {
    fn default() -> Self {
        Self { delta: None, eps_upsilon: 1e-6, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub mode: String,
    pub region: String,
    pub n_samples: usize,
    /// smallest `lhs / rhs - 1` (fixed constant) or `lhs / rhs` (empirical constant)
    pub min_slack: f64,
    pub empirical_constant: f64,
    pub argmin_point: R4,
    pub passed: bool,
    /// `[lo, hi, count]` over 20 equal bins up to the 99th percentile; the
    /// last bin also holds everything above.
    #[serde(default)]
    pub histogram: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub mode: String,
    pub p: f64,
    pub delta: f64,
    pub regions: Vec<RegionReport>,
    pub passed: bool,
}

struct Sample {
    x: usize,
    w: R4,
    xi: [ComplexVec; 2],
    upper: bool,
}

fn complex_gauss(rng: &mut ChaCha8Rng, d: usize) -> ComplexVec {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ComplexVec((0..d).map(|_| C64::new(s * crate::pell::gauss(rng), s * crate::pell::gauss(rng))).collect())
}

/// Half of the points in `{|zeta|^p > |eta|^q}`, half in the complement, moduli
/// log-uniform on `[1e-3, 1e3]`, the band around the curve excluded.
fn stratified(n: usize, n_cells: usize, d: usize, p: f64, eps: f64, seed: u64) -> Vec<Sample> {
    let q = conjugate(p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let want = [n / 2, n - n / 2];
    let mut got = [0usize; 2];
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let s = 10f64.powf(rng.gen_range(-3.0..3.0));
        let t = 10f64.powf(rng.gen_range(-3.0..3.0));
        let (sp, tq) = (s.powf(p), t.powf(q));
        if (sp - tq).abs() <= eps * sp.max(tq) {
            continue;
        }
        let k = if sp > tq { 0 } else { 1 };
        if got[k] >= want[k] {
            continue;
        }
        got[k] += 1;
        let (a, b) = (rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.0..std::f64::consts::TAU));
        let w = [s * a.cos(), s * a.sin(), t * b.cos(), t * b.sin()];
        let x = rng.gen_range(0..n_cells);
        let xi = [complex_gauss(&mut rng, d), complex_gauss(&mut rng, d)];
        out.push(Sample { x, w, xi, upper: k == 0 });
    }
    out
}

fn common_cells(a: &CoefficientTuple, b: &CoefficientTuple) -> Result<usize> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!("tuples in dimensions {} and {}", a.dim(), b.dim())));
    }
    match (a.n_cells(), b.n_cells()) {
        (Some(x), Some(y)) if x != y => Err(Error::Dimension(format!("{x} cells against {y}"))),
        (x, y) => Ok(x.or(y).unwrap_or(1)),
    }
}

fn require(ok: bool, what: String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Precondition(what))
    }
}

/// Class hypotheses for the chosen mode.
pub(crate) fn check_preconditions(a: &CoefficientTuple, b: &CoefficientTuple, p: f64, mode: &ConvexityMode) -> Result<()> {
    let q = conjugate(p);
    let (ta, tb) = match mode {
        ConvexityMode::Plain => (a.clone(), b.clone()),
        ConvexityMode::Perturbed { cert_a, cert_b } => (perturb(a, p, cert_a)?, perturb(b, p, cert_b)?),
    };
    require(check_class(&ta, p, ClassName::Sp)?.member, format!("first tuple not in S_{p}"))?;
    require(check_class(&ta, 2.0, ClassName::Sp)?.member, "first tuple not in S_2".into())?;
    require(check_class(&tb, q, ClassName::Sp)?.member, format!("second tuple not in S_{q}"))
}

struct Row {
    upper: bool,
    w: R4,
    /// (i) relative slack, (ii) ratio, (iii) ratio
    r: [f64; 3],
}

fn evaluate(
    s: &Sample,
    a: &CoefficientTuple,
    b: &CoefficientTuple,
    bp: &BellmanParams,
    mode: &ConvexityMode,
    k_i: f64,
) -> Result<Row> {
    let (p, q, delta) = (bp.p, bp.q, bp.delta);
    let (z, e) = (C64::new(s.w[0], s.w[1]), C64::new(s.w[2], s.w[3]));
    let (sz, te) = (z.norm(), e.norm());
    let (x, y) = (&s.xi[0], &s.xi[1]);
    let (mut ca, mut cb) = (a.cell(s.x)?, b.cell(s.x)?);
    let jet = Jet::bellman_branch(z, e, bp);
    let (va, wb, lhs) = match mode {
        ConvexityMode::Plain => {
            let h = generalized_hessian(&jet, &two_cells(&ca, &cb), &[z, e], &s.xi)?.total;
            (ca.v, cb.v, h)
        }
        ConvexityMode::Perturbed { cert_a, cert_b } => {
            ca.v = ca.v_plus();
            cb.v = cb.v_plus();
            let frame = FormFrame::new(&two_cells(&ca, &cb), &[z, e], &s.xi)?;
            let h = frame.decompose(&jet)?.total;
            let g = &jet.grad;
            let tail = cert_a.sigma * ca.v * (g[0] * z.re + g[1] * z.im) + cert_b.sigma * cb.v * (g[2] * e.re + g[3] * e.im);
            let hp = auxiliary_hp(z, e, x, y, p)?.value;
            let extra = cert_a.alpha * (p * q / 4.0 * h_identity_power(z, x, p) + 2.0 * delta * hp)
                + cert_b.alpha * (q + (2.0 - q) * delta) * p / 4.0 * h_identity_power(e, y, q);
            (ca.v, cb.v, h - extra - tail)
        }
    };
    let ex = x.norm_sqr() + va * sz * sz;
    let ey = y.norm_sqr() + wb * te * te;
    let tau = sz.powf(p - 2.0).max(te.powf(2.0 - q));
    let r_iii = lhs / (tau * ex + ey / tau);
    let (r_i, r_ii) = if s.upper {
        let rhs = k_i * ((p - 1.0) * sz.powf(p - 2.0) * ex + (q - 1.0) * te.powf(q - 2.0) * ey);
        (lhs / rhs - 1.0, f64::INFINITY)
    } else {
        (f64::INFINITY, lhs / (delta * (te.powf(2.0 - q) * ex + te.powf(q - 2.0) * ey)))
    };
    Ok(Row { upper: s.upper, w: s.w, r: [r_i, r_ii, r_iii] })
}

fn histogram(mut vals: Vec<f64>, bins: usize) -> Vec<[f64; 3]> {
    if vals.is_empty() {
        return vec![];
    }
    vals.sort_by(f64::total_cmp);
    let lo = vals[0];
    let hi = vals[((vals.len() - 1) as f64 * 0.99) as usize];
    if !(hi > lo) {
        return vec![[lo, lo, vals.len() as f64]];
    }
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<[f64; 3]> = (0..bins).map(|k| [lo + k as f64 * width, lo + (k + 1) as f64 * width, 0.0]).collect();
    for v in vals {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        out[k][2] += 1.0;
    }
    out
}

fn run_convexity(
    a: &CoefficientTuple,
    b: &CoefficientTuple,
    bp: &BellmanParams,
    n_samples: usize,
    mode: &ConvexityMode,
    eps: f64,
    seed: u64,
) -> Result<Vec<RegionReport>> {
    let (p, q) = (bp.p, bp.q);
    let n_cells = common_cells(a, b)?;
    let k_i = match mode {
        ConvexityMode::Plain => p * q * (mu_p(a, p)? / p).min(mu_p(b, q)? / q),
        ConvexityMode::Perturbed { .. } => f64::NAN,
    };
    let samples = stratified(n_samples, n_cells, a.dim(), p, eps, seed);
    let rows = samples.par_iter().map(|s| evaluate(s, a, b, bp, mode, k_i)).collect::<Result<Vec<_>>>()?;
    let names = ["upper", "lower", "tau"];
    let regions = match mode {
        ConvexityMode::Plain => vec![0usize, 1, 2],
        ConvexityMode::Perturbed { .. } => vec![2usize],
    };
    Ok(regions
        .into_iter()
        .map(|k| {
            let mut best = (f64::INFINITY, [0.0; 4]);
            let mut count = 0;
            let mut vals = Vec::new();
            for row in &rows {
                let in_region = match k {
                    0 => row.upper,
                    1 => !row.upper,
                    _ => true,
                };
                if !in_region {
                    continue;
                }
                count += 1;
                let v = if row.r[k].is_nan() { f64::NEG_INFINITY } else { row.r[k] };
                if v.is_finite() {
                    vals.push(v);
                }
                if v < best.0 {
                    best = (v, row.w);
                }
            }
            let (constant, passed) = if k == 0 {
                (k_i, best.0 >= -1e-9)
            } else {
                (best.0, best.0 > 0.0 && best.0.is_finite())
            };
            RegionReport {
                mode: mode.name().into(),
                region: names[k].into(),
                n_samples: count,
                min_slack: best.0,
                empirical_constant: constant,
                argmin_point: best.1,
                passed,
                histogram: histogram(vals, 20),
            }
        })
        .collect())
}

/// Largest `delta = 2^-k`, `k = 1..=12`, for which the sampler passes on `n_probe` points.
pub fn search_delta(a: &CoefficientTuple, b: &CoefficientTuple, p: f64, mode: &ConvexityMode, n_probe: usize, seed: u64) -> Result<f64> {
    for k in 1..=12 {
        let delta = 0.5f64.powi(k);
        let bp = BellmanParams::new(p, delta)?;
        let regions = run_convexity(a, b, &bp, n_probe, mode, 1e-6, seed ^ 0x5eed)?;
        if regions.iter().all(|r| r.passed) {
            return Ok(delta);
        }
    }
    Err(Error::Precondition(format!("no delta down to 2^-12 passes the sampler at p = {p}")))
}

/// Sampled check of the lower bounds for `H_Q^{(A,B)}`.
///
/// Plain mode reports three regions: `upper` (`|zeta|^p > |eta|^q`, fixed
/// constant `pq min(mu_p/p, mu_q/q)`), `lower` (the complement, empirical
/// constant) and `tau` (all samples, empirical constant). Perturbed mode
/// reports `tau` after subtracting the explicit extra terms.
pub fn verify_convexity(
    a: &CoefficientTuple,
    b: &CoefficientTuple,
    p: f64,
    params: &ConvexityParams,
    n_samples: usize,
    mode: ConvexityMode,
) -> Result<ConvexityReport> {
    if !(p >= 2.0) {
        return Err(Error::InvalidParam(format!("convexity sampler needs p >= 2, got {p}")));
    }
    check_preconditions(a, b, p, &mode)?;
    let delta = match params.delta {
        Some(d) => d,
        None => search_delta(a, b, p, &mode, n_samples.min(2000), params.seed)?,
    };
    let bp = BellmanParams::new(p, delta)?;
    let regions = run_convexity(a, b, &bp, n_samples, &mode, params.eps_upsilon, params.seed)?;
    let passed = regions.iter().all(|r| r.passed);
    Ok(ConvexityReport { mode: mode.name().into(), p, delta, regions, passed })
}

/// `(E.T.)_{n,nu}[omega; Xi]` with `Psi_n` from the cutoff module and
/// `Q * phi_nu` from the Bellman module; `mp.nu` is `nu`.
pub fn et_term(
    n: f64,
    mp: &MollifierParams,
    cells: &[Cell; 2],
    omega: &R4,
    xi: &[ComplexVec; 2],
    cutoff: &CutoffParams,
    bp: &BellmanParams,
) -> Result<EtReport> {
    let psi = Jet::from_mollified(&psi_n(omega, n, cutoff, mp)?);
    let qphi = mollified_q(omega, bp, mp);
    et_from_jets(&psi, &qphi, cells, &c2(omega), xi)
}

fn c2(w: &R4) -> [C64; 2] {
    [C64::new(w[0], w[1]), C64::new(w[2], w[3])]
}

/// Largest observed ratio `|form| / F` and where it occurred.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominationRow {
    pub n: f64,
    pub nu: f64,
    pub n_samples: usize,
    pub max_ratio: f64,
    pub argmax_point: R4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub quantity: String,
    pub rows: Vec<DominationRow>,
    /// largest ratio over rows divided by the smallest
    pub spread: f64,
    pub passed: bool,
}

/// Half the points log-uniform in modulus over `[1e-3, 1e3]`, half with
/// `D_n(omega)` in the transition box of the cutoff.
fn domination_points(n: f64, cutoff: &CutoffParams, n_samples: usize, d: usize, seed: u64) -> Result<Vec<(R4, [ComplexVec; 2])>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let box_pts = crate::cutoff::reference_samples(cutoff, n_samples - n_samples / 2, seed ^ 0xb0c5);
    let mut out = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        let w = if k < n_samples / 2 {
            let s = 10f64.powf(rng.gen_range(-3.0..3.0));
            let t = 10f64.powf(rng.gen_range(-3.0..3.0));
            let (a, b) = (rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.0..std::f64::consts::TAU));
            [s * a.cos(), s * a.sin(), t * b.cos(), t * b.sin()]
        } else {
            crate::cutoff::undilate(&box_pts[k - n_samples / 2], n, cutoff)?
        };
        out.push((w, [complex_gauss(&mut rng, d), complex_gauss(&mut rng, d)]));
    }
    Ok(out)
}

fn summarize(quantity: &str, rows: Vec<DominationRow>) -> DominationReport {
    let hi = rows.iter().map(|r| r.max_ratio).fold(0.0, f64::max);
    let lo = rows.iter().map(|r| r.max_ratio).fold(f64::INFINITY, f64::min);
    let spread = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let passed = rows.iter().all(|r| r.max_ratio.is_finite()) && spread <= 10.0;
    DominationReport { quantity: quantity.into(), rows, spread, passed }
}

fn max_ratio(vals: &[(f64, R4)]) -> (f64, R4) {
    vals.iter().fold((0.0, [0.0; 4]), |acc, &(r, w)| if r.is_nan() || r > acc.0 { (if r.is_nan() { f64::INFINITY } else { r }, w) } else { acc })
}

/// `sup |(E.T.)_{n,nu}| / F` over samples for each `n` in `n_list`. Passes
/// when every ratio is finite and the ratios stay within a factor 10 of
/// each other across `n`.
pub fn et_domination(
    n_list: &[f64],
    mp: &MollifierParams,
    cells: &[Cell; 2],
    cutoff: &CutoffParams,
    bp: &BellmanParams,
    n_samples: usize,
    seed: u64,
) -> Result<DominationReport> {
    let d = cells[0].dim();
    let mut rows = Vec::new();
    for &n in n_list {
        let pts = domination_points(n, cutoff, n_samples, d, seed)?;
        let vals = pts
            .par_iter()
            .map(|(w, xi)| -> Result<(f64, R4)> {
                let et = et_term(n, mp, cells, w, xi, cutoff, bp)?;
                let [z, e] = c2(w);
                let f = candidate_f(z, e, &xi[0], &xi[1], cells[0].v, cells[1].v, bp.p);
                Ok((et.direct.abs() / f, *w))
            })
            .collect::<Result<Vec<_>>>()?;
        let (r, w) = max_ratio(&vals);
        rows.push(DominationRow { n, nu: mp.nu, n_samples: vals.len(), max_ratio: r, argmax_point: w });
    }
    Ok(summarize("et_over_f", rows))
}

/// `sup |H^{(b,c,beta,gamma)}_{Q * phi_nu}| / F` for each `nu` in `nu_list`.
pub fn first_order_domination(
    nu_list: &[f64],
    quad_order: usize,
    cells: &[Cell; 2],
    bp: &BellmanParams,
    n_samples: usize,
    seed: u64,
) -> Result<DominationReport> {
    let d = cells[0].dim();
    let cutoff = CutoffParams::with_default_kappa(bp.p)?;
    let pts = domination_points(1.0, &cutoff, n_samples, d, seed)?;
    let mut rows = Vec::new();
    for &nu in nu_list {
        let mp = MollifierParams::new(nu, quad_order)?;
        let vals = pts
            .par_iter()
            .map(|(w, xi)| -> Result<(f64, R4)> {
                let qphi = mollified_q(w, bp, &mp);
                let h = generalized_hessian(&qphi, cells, &c2(w), xi)?.h_firstorder;
                let [z, e] = c2(w);
                let f = candidate_f(z, e, &xi[0], &xi[1], cells[0].v, cells[1].v, bp.p);
                Ok((h.abs() / f, *w))
            })
            .collect::<Result<Vec<_>>>()?;
        let (r, w) = max_ratio(&vals);
        rows.push(DominationRow { n: 1.0, nu, n_samples: vals.len(), max_ratio: r, argmax_point: w });
    }
    Ok(summarize("first_order_over_f", rows))
}

/// Jet of `Q * phi_nu` at `omega`.
pub fn mollified_q(omega: &R4, bp: &BellmanParams, mp: &MollifierParams) -> Jet {
    let m = mollify(|y| crate::bellman::q_eval(C64::new(y[0], y[1]), C64::new(y[2], y[3]), bp), omega, mp);
    Jet::from_mollified(&m)
}

/// The point `(zeta, eta)` as a real 4-vector.
pub fn point(z: C64, e: C64) -> R4 {
    join(z, e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pell::gamma_p;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_cell(r: &mut ChaCha8Rng, d: usize) -> Cell {
        let a = ComplexMatrix::new(
            d,
            (0..d * d)
                .map(|k| c(if k % (d + 1) == 0 { 2.0 } else { 0.0 } + r.gen_range(-0.5..0.5), r.gen_range(-0.5..0.5)))
                .collect(),
        )
        .unwrap();
        Cell::new(a, complex_gauss(r, d), complex_gauss(r, d), r.gen_range(0.0..2.0)).unwrap()
    }

    #[test]
    fn real_form_examples() {
        assert_eq!(real_form(&ComplexMatrix::identity(2)).m, DMatrix::identity(4, 4));
        let m = real_form(&ComplexMatrix::scalar(1, c(0.0, 1.0))).m;
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
        let mut r = rng(1);
        for _ in 0..50 {
            let a = random_cell(&mut r, 3).a;
            let xi = complex_gauss(&mut r, 3);
            let v = nalgebra::DVector::from_vec(xi.to_real());
            let lhs = (real_form(&a).m * &v).dot(&v);
            assert!((lhs - a.mul_vec(&xi).dot(&xi).re).abs() < 1e-13);
        }
    }

    #[test]
    fn f2_gives_twice_norm() {
        let mut r = rng(2);
        let xi = complex_gauss(&mut r, 3);
        let z = c(0.3, -1.2);
        let h = generalized_hessian(&power_jet(z, 2.0), &[Cell::pure(ComplexMatrix::identity(3), 0.0)], &[z], &[xi.clone()]).unwrap();
        assert!((h.total - 2.0 * xi.norm_sqr()).abs() < 1e-12);
        assert_eq!(h.h_firstorder, 0.0);
        assert_eq!(h.g_potential, 0.0);
    }

    #[test]
    fn power_identity_with_gamma() {
        let mut r = rng(3);
        for _ in 0..200 {
            let cell = random_cell(&mut r, 2);
            let z = c(r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0));
            let rr = r.gen_range(1.2..6.0);
            let x = complex_gauss(&mut r, 2);
            let h = generalized_hessian(&power_jet(z, rr), &[cell.clone()], &[z], &[x.clone()]).unwrap().total;
            let expect = rr * z.norm().powf(rr) * gamma_p(&cell, &x.scale(z.inv()), rr).unwrap();
            assert!((h - expect).abs() <= 1e-10 * expect.abs().max(1.0), "{h} vs {expect}");
        }
    }

    #[test]
    fn leibniz_reconstructs() {
        let mut r = rng(4);
        for _ in 0..50 {
            let cells = [random_cell(&mut r, 2), random_cell(&mut r, 2)];
            let w = [c(0.7, -0.4), c(-1.1, 0.9)];
            let xi = [complex_gauss(&mut r, 2), complex_gauss(&mut r, 2)];
            let psi = Jet::bellman_branch(w[0], w[1], &BellmanParams::new(3.0, 0.2).unwrap());
            let phi = Jet::new(
                r.gen_range(-1.0..1.0),
                (0..4).map(|_| r.gen_range(-1.0..1.0)).collect(),
                {
                    let m: Vec<f64> = (0..16).map(|_| r.gen_range(-1.0..1.0)).collect();
                    (0..16).map(|k| 0.5 * (m[k] + m[(k % 4) * 4 + k / 4])).collect()
                },
            )
            .unwrap();
            let sp = leibniz_split(&psi, &phi, &cells, &w, &xi).unwrap();
            assert!((sp.direct.total - sp.reconstructed()).abs() < 1e-10 * sp.direct.total.abs().max(1.0));
            let one = leibniz_split(&Jet::constant(2, 1.0), &phi, &cells, &w, &xi).unwrap();
            assert_eq!(one.l_a, 0.0);
            assert_eq!(one.t_c, 0.0);
        }
    }

    #[test]
    fn f2_squared_is_f4() {
        let z = c(0.8, 1.3);
        let x = ComplexVec(vec![c(0.2, -0.7)]);
        let cells = [Cell::pure(ComplexMatrix::identity(1), 0.0)];
        let f2 = power_jet(z, 2.0);
        let sp = leibniz_split(&f2, &f2, &cells, &[z], &[x.clone()]).unwrap();
        let f4 = generalized_hessian(&power_jet(z, 4.0), &cells, &[z], &[x]).unwrap().total;
        assert!((sp.reconstructed() - f4).abs() < 1e-12);
    }

    #[test]
    fn first_order_part_flips_sign() {
        let mut r = rng(5);
        let cells = [random_cell(&mut r, 2), random_cell(&mut r, 2)];
        let w = [c(0.7, -0.4), c(-1.1, 0.9)];
        let xi = [complex_gauss(&mut r, 2), complex_gauss(&mut r, 2)];
        let neg = [xi[0].scale(c(-1.0, 0.0)), xi[1].scale(c(-1.0, 0.0))];
        let jet = Jet::bellman_branch(w[0], w[1], &BellmanParams::new(4.0, 0.3).unwrap());
        let h1 = generalized_hessian(&jet, &cells, &w, &xi).unwrap().h_firstorder;
        let h2 = generalized_hessian(&jet, &cells, &w, &neg).unwrap().h_firstorder;
        assert_eq!(h1, -h2);
    }

    #[test]
    fn hp_examples() {
        let x = ComplexVec(vec![c(0.3, -0.8), c(1.0, 0.5)]);
        let y = ComplexVec(vec![c(-0.1, 0.2), c(0.4, 0.4)]);
        let h = auxiliary_hp(c(1.0, 0.0), c(0.5, 0.1), &x, &y, 2.0).unwrap();
        assert_eq!(h.branch, HpBranch::GP);
        assert!((h.value - x.norm_sqr()).abs() < 1e-14);
        let zero = ComplexVec::zeros(2);
        assert_eq!(auxiliary_hp(c(0.1, 0.0), c(2.0, 0.0), &zero, &zero, 3.0).unwrap().value, 0.0);
        assert_eq!(auxiliary_hp(c(0.1, 0.0), c(2.0, 0.0), &zero, &zero, 3.0).unwrap().branch, HpBranch::BP);
    }

    #[test]
    fn p2_identity_tuples_convex() {
        let t = CoefficientTuple::constant(Cell::pure(ComplexMatrix::identity(1), 0.0));
        let rep = verify_convexity(&t, &t, 2.0, &ConvexityParams { delta: Some(0.5), ..Default::default() }, 2000, ConvexityMode::Plain).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn perturbed_decomposition() {
        let mut r = rng(6);
        let (a, b) = (random_cell(&mut r, 2), random_cell(&mut r, 2));
        let (p, q) = (3.0, 1.5);
        let (ca, cb) = (SubcriticalityCert::new(0.1, 0.3).unwrap(), SubcriticalityCert::new(0.05, 0.6).unwrap());
        let shift = |cell: &Cell, cert: &SubcriticalityCert| {
            Cell::new(cell.a.shift(-cert.alpha * p * q / 4.0), cell.b.clone(), cell.c.clone(), (1.0 - cert.sigma) * cell.v_plus()).unwrap()
        };
        let w = [c(0.9, 0.2), c(-0.3, 0.5)];
        let xi = [complex_gauss(&mut r, 2), complex_gauss(&mut r, 2)];
        let jet = Jet::bellman_branch(w[0], w[1], &BellmanParams::new(p, 0.2).unwrap());
        let full = generalized_hessian(&jet, &[a.clone(), b.clone()], &w, &xi).unwrap().total;
        let c_part = generalized_hessian(&jet, &[shift(&a, &ca), shift(&b, &cb)], &w, &xi).unwrap().total;
        let id = |al: f64| Cell::pure(ComplexMatrix::scalar(2, c(al, 0.0)), 0.0);
        let i_part = generalized_hessian(&jet, &[id(ca.alpha), id(cb.alpha)], &w, &xi).unwrap().h_matrix;
        let zero = ComplexMatrix::scalar(2, c(0.0, 0.0));
        let pot = |cell: &Cell, s: f64| Cell::pure(zero.clone(), s * cell.v_plus());
        let g_part = generalized_hessian(&jet, &[pot(&a, ca.sigma), pot(&b, cb.sigma)], &w, &xi).unwrap().g_potential;
        assert!((full - (c_part + p * q / 4.0 * i_part + g_part)).abs() < 1e-10 * full.abs().max(1.0));
    }
}
