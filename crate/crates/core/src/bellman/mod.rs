//! The two-variable Bellman function `Q`, its derivatives and mollification.
//!
//! Real coordinates are `(zeta_1, zeta_2, eta_1, eta_2)`. On the branch
//! `|zeta|^p <= |eta|^q`
//!
//! ```text
//! Q = |zeta|^p + |eta|^q + delta |zeta|^2 |eta|^{2-q}
//! ```
//!
//! and on `|zeta|^p >= |eta|^q`
//!
//! ```text
//! Q = (1 + 2 delta / p) |zeta|^p + (1 + delta (2/q - 1)) |eta|^q.
//! ```

pub mod bounds;
pub mod mollify;

pub use bounds::{verify_second_order_bounds, BoundReport};
pub use mollify::{mollify, mollify_checked, Mollified, MollifierParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::C64;

pub type R4 = [f64; 4];
pub type M4 = [[f64; 4]; 4];

/// Default half-width of the band around the singular set.
pub const EPS_UPSILON: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellmanParams {
    pub p: f64,
    pub q: f64,
    pub delta: f64,
}

impl BellmanParams {
    pub fn new(p: f64, delta: f64) -> Result<Self> {
        if !(p >= 2.0) || !p.is_finite() {
            return Err(Error::InvalidParam(format!("Bellman exponent p = {p} must be >= 2")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParam(format!("delta = {delta} must lie in (0,1)")));
        }
        Ok(Self { p, q: p / (p - 1.0), delta })
    }

    /// Parameters for an exponent that may be below 2: returns the params for
    /// `max(p, q)` and whether the roles of `zeta` and `eta` are swapped.
    pub fn for_exponent(p: f64, delta: f64) -> Result<(Self, bool)> {
        if !(p > 1.0) {
            return Err(Error::InvalidParam(format!("p = {p} must be > 1")));
        }
        if p >= 2.0 {
            Ok((Self::new(p, delta)?, false))
        } else {
            Ok((Self::new(p / (p - 1.0), delta)?, true))
        }
    }

    /// Monomials `c s^a t^b` of the branch containing `(s, t)`.
    fn monomials(&self, s: f64, t: f64) -> ([(f64, f64, f64); 3], usize) {
        let (p, q, d) = (self.p, self.q, self.delta);
        if s.powf(p) <= t.powf(q) {
            ([(1.0, p, 0.0), (1.0, 0.0, q), (d, 2.0, 2.0 - q)], 3)
        } else {
            ([(1.0 + 2.0 * d / p, p, 0.0), (1.0 + d * (2.0 / q - 1.0), 0.0, q), (0.0, 0.0, 0.0)], 2)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellmanEval {
    pub value: f64,
    pub grad: R4,
    pub hess: Option<M4>,
    pub on_singular_set: bool,
}

pub fn split(w: &R4) -> (C64, C64) {
    (C64::new(w[0], w[1]), C64::new(w[2], w[3]))
}

pub fn join(z: C64, e: C64) -> R4 {
    [z.re, z.im, e.re, e.im]
}

/// `x^a` with `0^0 = 1`.
#[inline]
fn pw(x: f64, a: f64) -> f64 {
    if a == 0.0 {
        1.0
    } else if a == 2.0 {
        x * x
    } else {
        x.powf(a)
    }
}

pub fn q_eval(z: C64, e: C64, bp: &BellmanParams) -> f64 {
    let (s, t) = (z.norm(), e.norm());
    let (ms, k) = bp.monomials(s, t);
    ms[..k].iter().map(|(c, a, b)| c * pw(s, *a) * pw(t, *b)).sum()
}

/// Real gradient `(d/dzeta_1, d/dzeta_2, d/deta_1, d/deta_2)`.
pub fn q_grad_real(z: C64, e: C64, bp: &BellmanParams) -> R4 {
    let (s, t) = (z.norm(), e.norm());
    let (ms, k) = bp.monomials(s, t);
    let mut g = [0.0; 4];
    for (c, a, b) in &ms[..k] {
        if *a > 0.0 && s > 0.0 {
            // a s^{a-2} t^b zeta
            let f = c * a * pw(s, a - 2.0) * pw(t, *b);
            g[0] += f * z.re;
            g[1] += f * z.im;
        }
        if *b > 0.0 && t > 0.0 && (*a == 0.0 || s > 0.0) {
            let f = c * b * pw(s, *a) * pw(t, b - 2.0);
            g[2] += f * e.re;
            g[3] += f * e.im;
        }
    }
    g
}

/// Wirtinger derivatives `(d_zeta Q, d_eta Q)`, `d_zeta = (d_1 - i d_2) / 2`.
pub fn q_grad(z: C64, e: C64, bp: &BellmanParams) -> (C64, C64) {
    let g = q_grad_real(z, e, bp);
    (C64::new(g[0], -g[1]) * 0.5, C64::new(g[2], -g[3]) * 0.5)
}

/// Distance to the singular set in the metric `min(||zeta|^p - |eta|^q|, |eta|)`.
pub fn singular_distance(z: C64, e: C64, bp: &BellmanParams) -> f64 {
    let (s, t) = (z.norm(), e.norm());
    (s.powf(bp.p) - t.powf(bp.q)).abs().min(t)
}

/// Hessian of the branch containing the point; no check against the singular set.
pub fn q_hess_branch(z: C64, e: C64, bp: &BellmanParams) -> M4 {
    let (s, t) = (z.norm(), e.norm());
    let (ms, k) = bp.monomials(s, t);
    let zv = [z.re, z.im];
    let ev = [e.re, e.im];
    let mut h = [[0.0; 4]; 4];
    for (c, a, b) in &ms[..k] {
        let tb = pw(t, *b);
        let sa = pw(s, *a);
        if *a > 0.0 && s > 0.0 {
            let f1 = c * a * pw(s, a - 2.0) * tb;
            let f2 = c * a * (a - 2.0) * if *a == 2.0 { 0.0 } else { pw(s, a - 4.0) } * tb;
            for i in 0..2 {
                h[i][i] += f1;
                for j in 0..2 {
                    h[i][j] += f2 * zv[i] * zv[j];
                }
            }
        } else if *a == 2.0 {
            for i in 0..2 {
                h[i][i] += c * 2.0 * tb;
            }
        }
        if *b > 0.0 && t > 0.0 {
            let f1 = c * b * pw(t, b - 2.0) * sa;
            let f2 = c * b * (b - 2.0) * if *b == 2.0 { 0.0 } else { pw(t, b - 4.0) } * sa;
            for i in 0..2 {
                h[2 + i][2 + i] += f1;
                for j in 0..2 {
                    h[2 + i][2 + j] += f2 * ev[i] * ev[j];
                }
            }
        }
        if *a > 0.0 && *b > 0.0 && s > 0.0 && t > 0.0 {
            let f = c * a * b * pw(s, a - 2.0) * pw(t, b - 2.0);
            for i in 0..2 {
                for j in 0..2 {
                    h[i][2 + j] += f * zv[i] * ev[j];
                    h[2 + j][i] += f * zv[i] * ev[j];
                }
            }
        }
    }
    h
}

/// Hessian; errors inside the band `eps` around the singular set.
pub fn q_hess(z: C64, e: C64, bp: &BellmanParams, eps: f64) -> Result<M4> {
    let d = singular_distance(z, e, bp);
    if d <= eps {
        return Err(Error::SingularSet(d));
    }
    Ok(q_hess_branch(z, e, bp))
}

pub fn q_full(z: C64, e: C64, bp: &BellmanParams) -> BellmanEval {
    let on = singular_distance(z, e, bp) <= EPS_UPSILON;
    BellmanEval {
        value: q_eval(z, e, bp),
        grad: q_grad_real(z, e, bp),
        hess: if on { None } else { Some(q_hess_branch(z, e, bp)) },
        on_singular_set: on,
    }
}

/// Operator (spectral) norm of a 2x2 block.
pub fn block_norm(h: &M4, r: usize, c: usize) -> f64 {
    let (a, b, cc, d) = (h[r][c], h[r][c + 1], h[r + 1][c], h[r + 1][c + 1]);
    // largest singular value of [[a,b],[c,d]]
    let s1 = a * a + b * b + cc * cc + d * d;
    let det = a * d - b * cc;
    ((s1 + (s1 * s1 - 4.0 * det * det).max(0.0).sqrt()) / 2.0).sqrt()
}

pub fn frob4(h: &M4) -> f64 {
    h.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}
