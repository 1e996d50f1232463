//! Sampled size estimates for `Q * phi_nu`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mollify::{mollify, Mollified, MollifierParams};
use super::{block_norm, frob4, q_eval, split, BellmanParams, R4};

/// Constants may grow by at most this factor when the sample count doubles.
pub const DOUBLING_FACTOR: f64 = 1.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound_id: String,
    pub empirical_constant: f64,
    /// constant over the first half of the samples
    pub half_constant: f64,
    pub n_samples: usize,
    pub max_witness_point: R4,
    pub stable: bool,
    pub passed: bool,
}

pub const BOUND_IDS: [&str; 10] = [
    "value_growth",
    "grad_growth",
    "hess_growth",
    "grad_zeta",
    "grad_eta",
    "hess_zeta_zeta",
    "hess_eta_eta",
    "hess_zeta_eta",
    "hess_eta_eta_weighted",
    "value_shifted",
];

fn ratios(w: &R4, m: &Mollified, bp: &BellmanParams, nu: f64) -> [f64; 10] {
    let (p, q) = (bp.p, bp.q);
    let (z, e) = split(w);
    let (s, t) = (z.norm(), e.norm());
    let r = (s * s + t * t).sqrt();
    let tau = s.powf(p - 2.0) + t.powf(2.0 - q) + 1.0;
    let gz = 0.5 * m.grad[0].hypot(m.grad[1]);
    let ge = 0.5 * m.grad[2].hypot(m.grad[3]);
    let gfull = m.grad.iter().map(|x| x * x).sum::<f64>().sqrt();
    let hzz = block_norm(&m.hess, 0, 0);
    let hee = block_norm(&m.hess, 2, 2);
    let hze = block_norm(&m.hess, 0, 2);
    [
        m.value.abs() / (r.powf(p) + r.powf(q) + 1.0),
        gfull / (r.powf(p - 1.0) + r.powf(q - 1.0)),
        frob4(&m.hess) / (nu.powf(q - 2.0) * tau),
        gz / (tau * s),
        ge / t.powf(q - 1.0),
        hzz / tau,
        hee / nu.powf(q - 2.0),
        hze,
        hee * t / t.powf(q - 1.0),
        m.value / ((s + nu).powf(p) + (t + nu).powf(q)),
    ]
}

/// Points with independent log-uniform moduli in `[1e-3, 1e2]` and uniform phases.
pub fn sample_points(n: usize, seed: u64) -> Vec<R4> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let s = 10f64.powf(rng.gen_range(-3.0..2.0));
            let t = 10f64.powf(rng.gen_range(-3.0..2.0));
            let (a, b) = (rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.0..std::f64::consts::TAU));
            [s * a.cos(), s * a.sin(), t * b.cos(), t * b.sin()]
        })
        .collect()
}

/// Empirical constants of the growth bounds for `Q * phi_nu`, computed on
/// `n_samples` points and on twice as many.
pub fn verify_second_order_bounds(bp: &BellmanParams, mp: &MollifierParams, n_samples: usize, seed: u64) -> Vec<BoundReport> {
    let pts = sample_points(2 * n_samples.max(1), seed);
    let rows: Vec<[f64; 10]> = pts
        .par_iter()
        .map(|w| {
            let m = mollify(|y| { let (z, e) = split(y); q_eval(z, e, bp) }, w, mp);
            ratios(w, &m, bp, mp.nu)
        })
        .collect();
    let half = n_samples.max(1);
    BOUND_IDS
        .iter()
        .enumerate()
        .map(|(k, id)| {
            let mut best = (0.0f64, 0usize);
            let mut half_c = 0.0f64;
            for (i, r) in rows.iter().enumerate() {
                let v = if r[k].is_nan() { f64::INFINITY } else { r[k] };
                if v > best.0 {
                    best = (v, i);
                }
                if i + 1 == half {
                    half_c = best.0;
                }
            }
            let finite = best.0.is_finite();
            let stable = finite && best.0 <= DOUBLING_FACTOR * half_c.max(f64::MIN_POSITIVE);
            BoundReport {
                bound_id: id.to_string(),
                empirical_constant: best.0,
                half_constant: half_c,
                n_samples: rows.len(),
                max_witness_point: pts[best.1],
                stable,
                passed: finite && stable,
            }
        })
        .collect()
}
