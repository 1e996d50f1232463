//! The truncation `Psi`, its mollification `Psi_kappa`, the region partition
//! of `C^2` and the dilated sequence `Psi_n = Psi_kappa o D_n`.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bellman::bounds::DOUBLING_FACTOR;
use crate::bellman::mollify::{mollify_lipschitz, MollifierParams};
use crate::bellman::{block_norm, Mollified, R4};
use crate::error::{Error, Result};
use crate::pell::conjugate;

/// Tolerance for the vanishing pattern of the derivatives.
pub const QUAD_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionLabel {
    I,
    #[serde(rename = "R_zeta")]
    RZeta,
    #[serde(rename = "R_eta")]
    REta,
    T,
    O,
}

impl RegionLabel {
    pub const ALL: [RegionLabel; 5] = [RegionLabel::I, RegionLabel::RZeta, RegionLabel::REta, RegionLabel::T, RegionLabel::O];

    pub fn name(&self) -> &'static str {
        match self {
            RegionLabel::I => "I",
            RegionLabel::RZeta => "R_zeta",
            RegionLabel::REta => "R_eta",
            RegionLabel::T => "T",
            RegionLabel::O => "O",
        }
    }
}

/// `phi(r)`: 1 on `[0,3]`, 0 on `[4, inf)`, a smooth step in between.
pub fn profile(r: f64) -> f64 {
    if r <= 3.0 {
        return 1.0;
    }
    if r >= 4.0 {
        return 0.0;
    }
    let f = |x: f64| if x <= 0.0 { 0.0 } else { (-1.0 / x).exp() };
    let x = r - 3.0;
    1.0 - f(x) / (f(x) + f(1.0 - x))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffParams {
    pub p: f64,
    pub q: f64,
    pub kappa: f64,
}

impl CutoffParams {
    /// Errors unless `0 < kappa < delta(p, q)`.
    pub fn new(p: f64, kappa: f64) -> Result<Self> {
        let params = Self::unchecked(p, kappa)?;
        let d = delta_pq(p)?;
        if !(kappa > 0.0 && kappa < d) {
            return Err(Error::InvalidParam(format!("kappa = {kappa} must lie in (0, {d:.4})")));
        }
        Ok(params)
    }

    /// `kappa = min(0.05, delta(p,q)/2)`.
    pub fn with_default_kappa(p: f64) -> Result<Self> {
        Self::unchecked(p, (delta_pq(p)? / 2.0).min(0.05))
    }

    fn unchecked(p: f64, kappa: f64) -> Result<Self> {
        if !(p >= 2.0) || !p.is_finite() {
            return Err(Error::InvalidParam(format!("cutoff exponent p = {p} must be >= 2")));
        }
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::InvalidParam(format!("kappa = {kappa} must lie in (0,1)")));
        }
        Ok(Self { p, q: conjugate(p), kappa })
    }

    fn box_i(&self) -> (f64, f64) {
        (3f64.powf(1.0 / self.p) - self.kappa, 3f64.powf(1.0 / self.q) - self.kappa)
    }

    fn box_o(&self) -> (f64, f64) {
        (4f64.powf(1.0 / self.p) + self.kappa, 4f64.powf(1.0 / self.q) + self.kappa)
    }
}

fn moduli(w: &R4) -> (f64, f64) {
    (w[0].hypot(w[1]), w[2].hypot(w[3]))
}

/// `Psi(zeta, eta)`.
pub fn psi_base(w: &R4, params: &CutoffParams) -> f64 {
    let (s, t) = moduli(w);
    let (sp, tq) = (s.powf(params.p), t.powf(params.q));
    if sp <= tq {
        profile(tq)
    } else {
        profile(sp)
    }
}

/// `phi'(r)`.
pub fn profile_deriv(r: f64) -> f64 {
    if r <= 3.0 || r >= 4.0 {
        return 0.0;
    }
    let f = |x: f64| if x <= 0.0 { 0.0 } else { (-1.0 / x).exp() };
    let df = |x: f64| if x <= 0.0 { 0.0 } else { f(x) / (x * x) };
    let x = r - 3.0;
    let (a, b) = (f(x), f(1.0 - x));
    -(df(x) * b + a * df(1.0 - x)) / ((a + b) * (a + b))
}

/// Gradient of `Psi`, defined off `|zeta|^p = |eta|^q`.
pub fn psi_base_grad(w: &R4, params: &CutoffParams) -> R4 {
    let (s, t) = moduli(w);
    let (sp, tq) = (s.powf(params.p), t.powf(params.q));
    if sp <= tq {
        let k = if t > 0.0 { profile_deriv(tq) * params.q * t.powf(params.q - 2.0) } else { 0.0 };
        [0.0, 0.0, k * w[2], k * w[3]]
    } else {
        let k = profile_deriv(sp) * params.p * s.powf(params.p - 2.0);
        [k * w[0], k * w[1], 0.0, 0.0]
    }
}

/// Distance from `(s, t)` to the curve `{x^p = y^q} = {(x, x^{p-1})}`.
pub fn curve_distance(s: f64, t: f64, p: f64) -> f64 {
    let e = p - 1.0;
    let c = |x: f64| x.powf(e);
    let d2 = |x: f64| (x - s).powi(2) + (c(x) - t).powi(2);
    // The nearest point of an increasing curve lies between s and t^{1/(p-1)}.
    let (lo, hi) = {
        let u = t.powf(1.0 / e);
        (s.min(u), s.max(u))
    };
    if hi - lo == 0.0 {
        return 0.0;
    }
    let m = 64;
    let mut best = (d2(lo), lo);
    for k in 1..=m {
        let x = lo + (hi - lo) * k as f64 / m as f64;
        let v = d2(x);
        if v < best.0 {
            best = (v, x);
        }
    }
    let mut x = best.1;
    let step = (hi - lo) / m as f64;
    let (a, b) = ((x - step).max(lo), (x + step).min(hi));
    for _ in 0..50 {
        // half of d/dx d2 and its derivative
        let g = (x - s) + (c(x) - t) * e * x.powf(e - 1.0);
        let dg = 1.0 + (e * x.powf(e - 1.0)).powi(2) + (c(x) - t) * e * (e - 1.0) * if x > 0.0 { x.powf(e - 2.0) } else { 0.0 };
        if dg <= 0.0 || !dg.is_finite() {
            break;
        }
        let nx = (x - g / dg).clamp(a, b);
        if (nx - x).abs() <= 1e-14 * x.abs().max(1.0) {
            x = nx;
            break;
        }
        x = nx;
    }
    d2(x).min(best.0).sqrt()
}

pub fn classify_region(w: &R4, params: &CutoffParams) -> RegionLabel {
    let (s, t) = moduli(w);
    classify_moduli(s, t, params)
}

pub fn classify_moduli(s: f64, t: f64, params: &CutoffParams) -> RegionLabel {
    let (os, ot) = params.box_o();
    if s > os || t > ot {
        return RegionLabel::O;
    }
    let (is, it) = params.box_i();
    if s < is && t < it {
        return RegionLabel::I;
    }
    if curve_distance(s, t, params.p) <= params.kappa {
        RegionLabel::T
    } else if s.powf(params.p) > t.powf(params.q) {
        RegionLabel::RZeta
    } else {
        RegionLabel::REta
    }
}

fn constant_jet(v: f64) -> Mollified {
    Mollified { value: v, grad: [0.0; 4], hess: [[0.0; 4]; 4] }
}

/// `Psi_kappa = Psi * phi_kappa` with gradient and Hessian. The mollifier
/// radius is `kappa`; only the order of `mp` is used.
pub fn psi_kappa(w: &R4, params: &CutoffParams, mp: &MollifierParams) -> Mollified {
    match classify_region(w, params) {
        RegionLabel::I => constant_jet(1.0),
        RegionLabel::O => constant_jet(0.0),
        _ => mollify_lipschitz(
            |y| psi_base(y, params),
            |y| psi_base_grad(y, params),
            w,
            &MollifierParams { nu: params.kappa, quad_order: mp.quad_order },
        ),
    }
}

fn check_n(n: f64) -> Result<()> {
    if !(n >= 1.0) || !n.is_finite() {
        return Err(Error::InvalidParam(format!("dilation index n = {n} must be >= 1")));
    }
    Ok(())
}

/// `D_n(zeta, eta) = (zeta / n^{1/p}, eta / n^{1/q})`.
pub fn dilate(w: &R4, n: f64, params: &CutoffParams) -> Result<R4> {
    check_n(n)?;
    let (a, b) = (n.powf(1.0 / params.p), n.powf(1.0 / params.q));
    Ok([w[0] / a, w[1] / a, w[2] / b, w[3] / b])
}

/// Inverse of [`dilate`].
pub fn undilate(u: &R4, n: f64, params: &CutoffParams) -> Result<R4> {
    check_n(n)?;
    let (a, b) = (n.powf(1.0 / params.p), n.powf(1.0 / params.q));
    Ok([u[0] * a, u[1] * a, u[2] * b, u[3] * b])
}

/// `Psi_n = Psi_kappa o D_n` by the chain rule.
pub fn psi_n(w: &R4, n: f64, params: &CutoffParams, mp: &MollifierParams) -> Result<Mollified> {
    let u = dilate(w, n, params)?;
    let m = psi_kappa(&u, params, mp);
    let (a, b) = (n.powf(-1.0 / params.p), n.powf(-1.0 / params.q));
    let sc = [a, a, b, b];
    let mut out = m;
    for i in 0..4 {
        out.grad[i] *= sc[i];
        for j in 0..4 {
            out.hess[i][j] *= sc[i] * sc[j];
        }
    }
    Ok(out)
}

fn random_phase(rng: &mut ChaCha8Rng, s: f64, t: f64) -> R4 {
    let (a, b) = (rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.0..std::f64::consts::TAU));
    [s * a.cos(), s * a.sin(), t * b.cos(), t * b.sin()]
}

/// Points whose moduli fill `[0, 4^{1/p} + 2 kappa] x [0, 4^{1/q} + 2 kappa]`.
pub fn reference_samples(params: &CutoffParams, n_samples: usize, seed: u64) -> Vec<R4> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (os, ot) = params.box_o();
    (0..n_samples)
        .map(|_| {
            let s = rng.gen_range(0.0..os + params.kappa);
            let t = rng.gen_range(0.0..ot + params.kappa);
            random_phase(&mut rng, s, t)
        })
        .collect()
}

/// Points in `T`: a point of the curve jittered within distance `kappa`.
pub fn t_samples(params: &CutoffParams, n_samples: usize, seed: u64) -> Vec<R4> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (_, it) = params.box_i();
    let (_, ot) = params.box_o();
    let lo = (it - params.kappa).max(0.0);
    let hi = ot;
    let mut out = Vec::with_capacity(n_samples);
    let mut tries = 0usize;
    while out.len() < n_samples && tries < 200 * n_samples.max(1) {
        tries += 1;
        let t0 = rng.gen_range(lo..hi);
        let s0 = t0.powf(params.q / params.p);
        let r = params.kappa * rng.gen::<f64>().sqrt();
        let th = rng.gen_range(0.0..std::f64::consts::TAU);
        let (s, t) = (s0 + r * th.cos(), t0 + r * th.sin());
        if s < 0.0 || t < 0.0 || classify_moduli(s, t, params) != RegionLabel::T {
            continue;
        }
        out.push(random_phase(&mut rng, s, t));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparabilityReport {
    pub kappa: f64,
    pub n: f64,
    pub n_samples: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// smallest `C` with every ratio in `[(1 + C kappa)^{-p}, (1 + C kappa)^p]`
    pub band_constant: f64,
    /// smallest modulus `min(|zeta|, |eta|)` of `D_n(omega)` seen on `T`
    pub min_modulus: f64,
    pub passed: bool,
}

fn comparability_raw(params: &CutoffParams, n: f64, n_samples: usize, seed: u64) -> Result<ComparabilityReport> {
    let pts = t_samples(params, n_samples, seed);
    if pts.is_empty() {
        return Err(Error::InvalidParam(format!("no samples found in T for kappa = {}", params.kappa)));
    }
    let (mut lo, mut hi, mut mm) = (f64::INFINITY, 0.0f64, f64::INFINITY);
    for u in &pts {
        // omega with D_n(omega) = u, then dilated back
        let w = undilate(u, n, params)?;
        let (s, t) = moduli(&dilate(&w, n, params)?);
        let r = s.powf(params.p) / t.powf(params.q);
        lo = lo.min(r);
        hi = hi.max(r);
        mm = mm.min(s.min(t));
    }
    let c = ((hi.powf(1.0 / params.p) - 1.0).max((1.0 / lo).powf(1.0 / params.p) - 1.0)) / params.kappa;
    Ok(ComparabilityReport {
        kappa: params.kappa,
        n,
        n_samples: pts.len(),
        min_ratio: lo,
        max_ratio: hi,
        band_constant: c,
        min_modulus: mm,
        passed: lo > 1e-6 && hi.is_finite() && c.is_finite(),
    })
}

/// Ratio `|zeta'|^p / |eta'|^q` over `omega` with `(zeta', eta') = D_n(omega) in T`.
pub fn check_comparability(params: &CutoffParams, n: f64, n_samples: usize, seed: u64) -> Result<ComparabilityReport> {
    let d = delta_pq(params.p)?;
    if params.kappa >= d {
        return Err(Error::Precondition(format!("kappa = {} is not below delta(p,q) = {d:.4}", params.kappa)));
    }
    comparability_raw(params, n, n_samples, seed)
}

fn delta_cache() -> &'static Mutex<HashMap<u64, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Largest `kappa` (capped just below 1) for which the lower comparability
/// ratio on `T` stays positive, by bisection.
pub fn delta_pq(p: f64) -> Result<f64> {
    if !(p >= 2.0) || !p.is_finite() {
        return Err(Error::InvalidParam(format!("cutoff exponent p = {p} must be >= 2")));
    }
    if let Some(d) = delta_cache().lock().expect("cache").get(&p.to_bits()) {
        return Ok(*d);
    }
    let ok = |k: f64| -> bool {
        let params = CutoffParams { p, q: conjugate(p), kappa: k };
        comparability_raw(&params, 1.0, 2000, 7).map(|r| r.passed).unwrap_or(false)
    };
    let cap = 0.999;
    let d = if ok(cap) {
        cap
    } else {
        let (mut lo, mut hi) = (1e-3, cap);
        for _ in 0..30 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    delta_cache().lock().expect("cache").insert(p.to_bits(), d);
    Ok(d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemReport {
    pub item: String,
    pub passed: bool,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleReport {
    pub items: Vec<ItemReport>,
    /// `min |omega|` over `K_{2,1} \ K_{1,1}`; the proofs assume it is `>= 1`
    pub min_modulus_annulus_n1: f64,
    pub omega_ge_one_at_n1: bool,
    pub passed: bool,
}

const REFLECT: [[f64; 4]; 4] = [[-1.0, 1.0, 1.0, 1.0], [1.0, -1.0, 1.0, 1.0], [1.0, 1.0, -1.0, 1.0], [1.0, 1.0, 1.0, -1.0]];

fn item(name: &str, passed: bool, value: f64, note: Option<String>) -> ItemReport {
    ItemReport { item: name.into(), passed, value, note }
}

fn norm4(w: &R4) -> f64 {
    w.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Checks the axioms of an admissible sequence of truncations on samples.
///
/// `samples` are reference points `u`; for each `n` the function is evaluated
/// at `omega = D_n^{-1}(u)`. `K_{1,n} = D_n^{-1}(I)` and
/// `K_{2,n} = D_n^{-1}(C^2 \ O)`.
pub fn check_admissible(params: &CutoffParams, mp: &MollifierParams, n_list: &[f64], samples: &[R4]) -> Result<AdmissibleReport> {
    for &n in n_list {
        check_n(n)?;
    }
    let mut items = Vec::new();
    let (mut lo, mut hi, mut even, mut ones, mut zeros) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, 0.0f64, 0.0f64);
    let mut decay: Vec<f64> = Vec::new();
    for &n in n_list {
        let rows: Vec<(f64, f64, RegionLabel, f64, f64)> = samples
            .par_iter()
            .map(|u| -> Result<_> {
                let w = undilate(u, n, params)?;
                let m = psi_n(&w, n, params, mp)?;
                let mut ev = 0.0f64;
                for r in REFLECT {
                    let wr = [w[0] * r[0], w[1] * r[1], w[2] * r[2], w[3] * r[3]];
                    ev = ev.max((psi_n(&wr, n, params, mp)?.value - m.value).abs());
                }
                let g = norm4(&m.grad);
                Ok((m.value, ev, classify_region(u, params), g, norm4(&w)))
            })
            .collect::<Result<_>>()?;
        let mut dc = 0.0f64;
        for (v, ev, label, g, r) in rows {
            lo = lo.min(v);
            hi = hi.max(v);
            even = even.max(ev);
            match label {
                RegionLabel::I => ones = ones.max((v - 1.0).abs()),
                RegionLabel::O => zeros = zeros.max(v.abs()),
                _ => dc = dc.max(g / 1f64.min(1.0 / r)),
            }
        }
        decay.push(dc);
    }
    items.push(item("bounded", lo >= -QUAD_TOL && hi <= 1.0 + QUAD_TOL, hi.max(-lo), None));
    items.push(item("even", even <= QUAD_TOL, even, None));

    // nesting on boundary points of K_{1,n} and K_{2,n}
    let (is, it) = params.box_i();
    let (os, ot) = params.box_o();
    let mut nest_ok = true;
    let mut interior_ok = true;
    let shrink = 1.0 - 1e-9;
    for k in 0..=64 {
        let th = std::f64::consts::FRAC_PI_2 * k as f64 / 64.0;
        // points on the boundary of the boxes, in moduli
        let b1 = {
            let (c, s) = (th.cos(), th.sin());
            let r = (is / c.max(1e-300)).min(it / s.max(1e-300));
            [r * c * shrink, 0.0, r * s * shrink, 0.0]
        };
        let b2 = {
            let (c, s) = (th.cos(), th.sin());
            let r = (os / c.max(1e-300)).min(ot / s.max(1e-300));
            [r * c * shrink, 0.0, r * s * shrink, 0.0]
        };
        if classify_region(&b1, params) == RegionLabel::O {
            interior_ok = false;
        }
        for &n in n_list {
            let w1 = undilate(&b1, n, params)?;
            let w2 = undilate(&b2, n, params)?;
            if classify_region(&dilate(&w1, n + 1.0, params)?, params) != RegionLabel::I {
                nest_ok = false;
            }
            if classify_region(&dilate(&w2, n + 1.0, params)?, params) == RegionLabel::O {
                nest_ok = false;
            }
        }
    }
    items.push(item("k1_inside_k2", interior_ok, 0.0, None));
    items.push(item("nested", nest_ok, 0.0, None));
    items.push(item("zero_interior", classify_region(&[0.0; 4], params) == RegionLabel::I, 0.0, None));
    items.push(item("one_on_k1", ones <= QUAD_TOL, ones, None));
    items.push(item("support_in_k2", zeros <= QUAD_TOL, zeros, None));
    let first = decay.first().copied().unwrap_or(0.0);
    let worst = decay.iter().copied().fold(0.0, f64::max);
    items.push(item(
        "gradient_decay",
        worst <= DOUBLING_FACTOR * first.max(f64::MIN_POSITIVE),
        worst,
        Some(format!("sup |D Psi_n| / min(1, 1/|omega|) per n: {decay:?}")),
    ));

    // smallest |omega| on K_{2,1} \ K_{1,1}: the corner of the I box along each axis
    let min_mod = is.min(it).max(0.0);
    let passed = items.iter().all(|i| i.passed);
    Ok(AdmissibleReport { items, min_modulus_annulus_n1: min_mod, omega_ge_one_at_n1: min_mod >= 1.0, passed })
}

/// Per-`n` constants of the derivative estimates for `Psi_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeAudit {
    pub n: f64,
    /// `n^{1/p} |d_zeta Psi_n|` on `R_zeta u T`
    pub grad_zeta: f64,
    /// `n^{1/q} |d_eta Psi_n|` on `R_eta u T`
    pub grad_eta: f64,
    pub hess_zeta_zeta: f64,
    pub hess_eta_eta: f64,
    /// `n^{1/p + 1/q} |D^2_{zeta eta} Psi_n|` on `T`
    pub hess_zeta_eta: f64,
    /// largest derivative seen where it should vanish, after undoing the scaling
    pub max_off_region: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffAudit {
    pub kappa: f64,
    pub rows: Vec<DerivativeAudit>,
    pub vanishing_ok: bool,
    pub stable_in_n: bool,
    pub passed: bool,
}

/// Vanishing pattern and derivative constants of `Psi_n` over `n_list`.
pub fn audit_derivatives(params: &CutoffParams, mp: &MollifierParams, n_list: &[f64], samples: &[R4]) -> Result<CutoffAudit> {
    let (p, q) = (params.p, params.q);
    let mut rows = Vec::new();
    for &n in n_list {
        let vals: Vec<[f64; 6]> = samples
            .par_iter()
            .map(|u| -> Result<[f64; 6]> {
                let w = undilate(u, n, params)?;
                let m = psi_n(&w, n, params, mp)?;
                let label = classify_region(u, params);
                let gz = m.grad[0].hypot(m.grad[1]) * n.powf(1.0 / p);
                let ge = m.grad[2].hypot(m.grad[3]) * n.powf(1.0 / q);
                let hzz = block_norm(&m.hess, 0, 0) * n.powf(2.0 / p);
                let hee = block_norm(&m.hess, 2, 2) * n.powf(2.0 / q);
                let hze = block_norm(&m.hess, 0, 2) * n.powf(1.0 / p + 1.0 / q);
                let zeta_side = matches!(label, RegionLabel::RZeta | RegionLabel::T);
                let eta_side = matches!(label, RegionLabel::REta | RegionLabel::T);
                let mut off = 0.0f64;
                if !zeta_side {
                    off = off.max(gz).max(hzz);
                }
                if !eta_side {
                    off = off.max(ge).max(hee);
                }
                if label != RegionLabel::T {
                    off = off.max(hze);
                }
                let on = |b: bool, x: f64| if b { x } else { 0.0 };
                Ok([on(zeta_side, gz), on(eta_side, ge), on(zeta_side, hzz), on(eta_side, hee), on(label == RegionLabel::T, hze), off])
            })
            .collect::<Result<_>>()?;
        let mx = |k: usize| vals.iter().map(|v| v[k]).fold(0.0, f64::max);
        rows.push(DerivativeAudit {
            n,
            grad_zeta: mx(0),
            grad_eta: mx(1),
            hess_zeta_zeta: mx(2),
            hess_eta_eta: mx(3),
            hess_zeta_eta: mx(4),
            max_off_region: mx(5),
        });
    }
    let vanishing_ok = rows.iter().all(|r| r.max_off_region <= QUAD_TOL);
    let key = |r: &DerivativeAudit| [r.grad_zeta, r.grad_eta, r.hess_zeta_zeta, r.hess_eta_eta, r.hess_zeta_eta];
    let stable_in_n = rows.first().map_or(true, |r0| {
        let base = key(r0);
        rows.iter().all(|r| key(r).iter().zip(base).all(|(x, b)| *x <= DOUBLING_FACTOR * b.max(f64::MIN_POSITIVE)))
    });
    Ok(CutoffAudit { kappa: params.kappa, rows, vanishing_ok, stable_in_n, passed: vanishing_ok && stable_in_n })
}

/// `(|zeta|, |eta|, label)` over an `n_s x n_t` grid covering the region figure.
pub fn region_map(params: &CutoffParams, n_s: usize, n_t: usize) -> Vec<(f64, f64, RegionLabel)> {
    let (os, ot) = params.box_o();
    let (smax, tmax) = (1.25 * os, 1.25 * ot);
    let mut out = Vec::with_capacity(n_s * n_t);
    for j in 0..n_t {
        for i in 0..n_s {
            let s = smax * i as f64 / (n_s.max(2) - 1) as f64;
            let t = tmax * j as f64 / (n_t.max(2) - 1) as f64;
            out.push((s, t, classify_moduli(s, t, params)));
        }
    }
    out
}

pub fn region_csv(params: &CutoffParams, n_s: usize, n_t: usize) -> String {
    let mut s = String::from("abs_zeta,abs_eta,label\n");
    for (a, b, l) in region_map(params, n_s, n_t) {
        s.push_str(&format!("{a:.6},{b:.6},{}\n", l.name()));
    }
    s
}
