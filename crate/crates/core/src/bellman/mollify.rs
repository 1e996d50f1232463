//! Convolution with the bump `exp(-1/(1-|x|^2))` on the unit ball of `R^4`.
//!
//! Derivatives are moved onto the kernel, so `f` only needs to be evaluable.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use super::{M4, R4};
use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MollifierParams {
    pub nu: f64,
    pub quad_order: usize,
}

impl MollifierParams {
    pub fn new(nu: f64, quad_order: usize) -> Result<Self> {
        if !(nu > 0.0 && nu < 1.0) {
            return Err(Error::InvalidParam(format!("nu = {nu} must lie in (0,1)")));
        }
        if !(4..=MAX_ORDER).contains(&quad_order) {
            return Err(Error::InvalidParam(format!("quadrature order {quad_order} outside 4..={MAX_ORDER}")));
        }
        Ok(Self { nu, quad_order })
    }

    pub fn with_nu(nu: f64) -> Result<Self> {
        Self::new(nu, 12)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mollified {
    pub value: f64,
    pub grad: R4,
    pub hess: M4,
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Polar product rule on the unit ball with the kernel and its derivatives
/// folded into the weights.
///
/// Radial nodes are Gauss-Legendre in `s = r^2`; their weights are fitted to
/// the radial moments of each kernel profile separately. The sphere uses Hopf
/// coordinates with Gauss-Legendre in `sin^2` of the first angle and the
/// trapezoid rule in the two phases, which keeps every coordinate reflection
/// an exact symmetry of the node set.
pub(crate) struct Kernel {
    pub x: Vec<R4>,
    pub w0: Vec<f64>,
    pub w1: Vec<R4>,
    /// upper triangle of the Hessian kernel, row-major
    pub w2: Vec<[f64; 10]>,
}

const TRI: [(usize, usize); 10] = [(0, 0), (0, 1), (0, 2), (0, 3), (1, 1), (1, 2), (1, 3), (2, 2), (2, 3), (3, 3)];

fn legendre_all(n: usize, x: f64) -> Vec<f64> {
    let mut p = vec![1.0; n.max(1)];
    if n > 1 {
        p[1] = x;
    }
    for k in 2..n {
        let kf = k as f64;
        p[k] = ((2.0 * kf - 1.0) * x * p[k - 1] - (kf - 1.0) * p[k - 2]) / kf;
    }
    p
}

/// Weights on the Gauss nodes `x_i` (in `s = (x+1)/2 = r^2`) reproducing
/// `int_0^1 r^3 g(r) P_j(2 r^2 - 1) dr` for `j < n`.
fn radial_weights(n: usize, xs: &[f64], ws: &[f64], g: impl Fn(f64) -> f64) -> Vec<f64> {
    // moments by composite Gauss-Legendre
    let (cx, cw) = gauss_legendre(20);
    let panels = 400;
    let mut mu = vec![0.0; n];
    for k in 0..panels {
        let (a, b) = (-1.0 + 2.0 * k as f64 / panels as f64, -1.0 + 2.0 * (k + 1) as f64 / panels as f64);
        for (t, w) in cx.iter().zip(&cw) {
            let x = 0.5 * (a + b) + 0.5 * (b - a) * t;
            let s = 0.5 * (x + 1.0);
            let gx = 0.25 * s * g(s.sqrt());
            if gx == 0.0 {
                continue;
            }
            let p = legendre_all(n, x);
            for j in 0..n {
                mu[j] += 0.5 * (b - a) * w * p[j] * gx;
            }
        }
    }
    xs.iter()
        .zip(ws)
        .map(|(x, w)| {
            let p = legendre_all(n, *x);
            w * (0..n).map(|j| (2.0 * j as f64 + 1.0) / 2.0 * p[j] * mu[j]).sum::<f64>()
        })
        .collect()
}

fn bump_u(r: f64) -> Option<f64> {
    let r2 = r * r;
    if r2 >= 1.0 {
        return None;
    }
    let u = 1.0 / (1.0 - r2);
    if u > 700.0 {
        None
    } else {
        Some(u)
    }
}

impl Kernel {
    fn build(order: usize) -> Self {
        let n_r = order;
        let n_b = if order <= 12 { 8 } else { 12 };
        let n_w = n_b / 2;
        let (xr, wr) = gauss_legendre(n_r);
        let g0 = radial_weights(n_r, &xr, &wr, |r| bump_u(r).map_or(0.0, |u| (-u).exp()));
        let g1 = radial_weights(n_r, &xr, &wr, |r| bump_u(r).map_or(0.0, |u| u * u * (-u).exp()));
        let gb = radial_weights(n_r, &xr, &wr, |r| {
            bump_u(r).map_or(0.0, |u| (4.0 * u.powi(4) - 8.0 * u.powi(3)) * (-u).exp())
        });
        let (xw, ww) = gauss_legendre(n_w);
        let tau = std::f64::consts::TAU;
        let db = tau / n_b as f64;
        let mut k = Kernel { x: vec![], w0: vec![], w1: vec![], w2: vec![] };
        let mut total = 0.0;
        for i in 0..n_r {
            let r = (0.5 * (xr[i] + 1.0)).sqrt();
            for (xa, wa) in xw.iter().zip(&ww) {
                let sw = 0.5 * (xa + 1.0);
                let (ca, sa) = ((1.0 - sw).sqrt(), sw.sqrt());
                for b1 in 0..n_b {
                    let t1 = (b1 as f64 + 0.5) * db;
                    for b2 in 0..n_b {
                        let t2 = (b2 as f64 + 0.5) * db;
                        let x = [r * ca * t1.cos(), r * ca * t1.sin(), r * sa * t2.cos(), r * sa * t2.sin()];
                        // sphere measure (1/2) d(sin^2) d(t1) d(t2); Gauss weight on [0,1] is wa/2
                        let ang = 0.5 * (0.5 * wa) * db * db;
                        let w = ang * g0[i];
                        total += w;
                        let mut w1 = [0.0; 4];
                        for j in 0..4 {
                            w1[j] = -2.0 * x[j] * ang * g1[i];
                        }
                        let mut w2 = [0.0; 10];
                        for (m, &(a, b)) in TRI.iter().enumerate() {
                            let diag = if a == b { -2.0 * g1[i] } else { 0.0 };
                            w2[m] = ang * (diag + x[a] * x[b] * gb[i]);
                        }
                        k.x.push(x);
                        k.w0.push(w);
                        k.w1.push(w1);
                        k.w2.push(w2);
                    }
                }
            }
        }
        let s = 1.0 / total;
        for i in 0..k.x.len() {
            k.w0[i] *= s;
            for v in &mut k.w1[i] {
                *v *= s;
            }
            for v in &mut k.w2[i] {
                *v *= s;
            }
        }
        k
    }

    pub(crate) fn get(order: usize) -> Arc<Kernel> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Kernel>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
        map.entry(order).or_insert_with(|| Arc::new(Kernel::build(order))).clone()
    }

    pub(crate) fn len(&self) -> usize {
        self.x.len()
    }
}

/// `(f * phi_nu)(omega)` with gradient and Hessian.
pub fn mollify<F: Fn(&R4) -> f64>(f: F, omega: &R4, mp: &MollifierParams) -> Mollified {
    let k = Kernel::get(mp.quad_order);
    let nu = mp.nu;
    let mut v = 0.0;
    let mut g = [0.0; 4];
    let mut h = [0.0; 10];
    let f0 = f(omega);
    for i in 0..k.len() {
        let x = &k.x[i];
        let y = [omega[0] - nu * x[0], omega[1] - nu * x[1], omega[2] - nu * x[2], omega[3] - nu * x[3]];
        let fy = f(&y);
        v += k.w0[i] * fy;
        for j in 0..4 {
            g[j] += k.w1[i][j] * fy;
        }
        for j in 0..10 {
            h[j] += k.w2[i][j] * (fy - f0);
        }
    }
    let mut hess = [[0.0; 4]; 4];
    for (m, &(i, j)) in TRI.iter().enumerate() {
        hess[i][j] = h[m] / (nu * nu);
        hess[j][i] = hess[i][j];
    }
    Mollified { value: v, grad: g.map(|x| x / nu), hess }
}

/// `(f * phi_nu)(omega)` for a Lipschitz `f` with a.e. gradient `df`: the
/// Hessian is `(D f) * D phi_nu`, so directions in which `f` is locally
/// constant get exactly zero second derivatives.
pub fn mollify_lipschitz<F, G>(f: F, df: G, omega: &R4, mp: &MollifierParams) -> Mollified
where
    F: Fn(&R4) -> f64,
    G: Fn(&R4) -> R4,
{
    let k = Kernel::get(mp.quad_order);
    let nu = mp.nu;
    let mut v = 0.0;
    let mut g = [0.0; 4];
    let mut h = [[0.0; 4]; 4];
    for i in 0..k.len() {
        let x = &k.x[i];
        let y = [omega[0] - nu * x[0], omega[1] - nu * x[1], omega[2] - nu * x[2], omega[3] - nu * x[3]];
        let fy = f(&y);
        let dy = df(&y);
        v += k.w0[i] * fy;
        for a in 0..4 {
            g[a] += k.w1[i][a] * fy;
            for b in 0..4 {
                h[a][b] += k.w1[i][b] * dy[a];
            }
        }
    }
    let mut hess = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            hess[a][b] = 0.5 * (h[a][b] + h[b][a]) / nu;
        }
    }
    Mollified { value: v, grad: g.map(|x| x / nu), hess }
}

/// Value of `f * phi_nu` only.
pub fn mollify_value<F: Fn(&R4) -> f64>(f: F, omega: &R4, mp: &MollifierParams) -> f64 {
    let k = Kernel::get(mp.quad_order);
    let nu = mp.nu;
    k.x.iter()
        .zip(&k.w0)
        .map(|(x, w)| {
            let y = [omega[0] - nu * x[0], omega[1] - nu * x[1], omega[2] - nu * x[2], omega[3] - nu * x[3]];
            w * f(&y)
        })
        .sum()
}

fn gap(a: &Mollified, b: &Mollified) -> f64 {
    let scale = a.value.abs().max(1.0)
        + a.grad.iter().map(|x| x.abs()).fold(0.0, f64::max)
        + a.hess.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max);
    let mut d = (a.value - b.value).abs();
    for i in 0..4 {
        d = d.max((a.grad[i] - b.grad[i]).abs());
        for j in 0..4 {
            d = d.max((a.hess[i][j] - b.hess[i][j]).abs());
        }
    }
    d / scale
}

/// Escalates the order by 4 until two consecutive orders agree to `rel_tol`.
pub fn mollify_checked<F: Fn(&R4) -> f64>(f: F, omega: &R4, mp: &MollifierParams, rel_tol: f64) -> Result<Mollified> {
    let mut order = mp.quad_order;
    let mut prev = mollify(&f, omega, mp);
    let mut last_gap = f64::INFINITY;
    while order < MAX_ORDER {
        order = (order + 4).min(MAX_ORDER);
        let next = mollify(&f, omega, &MollifierParams { nu: mp.nu, quad_order: order });
        last_gap = gap(&next, &prev);
        if last_gap <= rel_tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Quadrature(format!("no agreement up to order {MAX_ORDER}, relative gap {last_gap:.3e}")))
}
