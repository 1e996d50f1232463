//! Experiments on the discrete semigroup: `L^p` contractivity, the heat flow of
//! the Bellman function, the bilinear functional, the `L^p` gradient estimate
//! and truncation of the potential.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evolve::{evolve, lp_norm, Scheme};
use super::form::{assemble, face_samples, laplacian, DiscreteForm};
use crate::bellman::mollify::gauss_legendre;
use crate::bellman::{q_eval, BellmanParams};
use crate::error::{Error, Result};
use crate::field::{Cell, CoefficientTuple, ComplexMatrix, ComplexVec, GridDomain, SubcriticalityCert, C64};
use crate::hess::{check_preconditions, h_identity_power, search_delta, ConvexityMode, FormFrame, Jet};
use crate::pell::{check_class, check_perturbed_class, conjugate, gauss, rotate, CertGrid, ClassName};
use crate::sparse::{BandLu, SparseMatrix};

/// A face sample: weight, value, full gradient and owning cell.
struct Face {
    w: f64,
    val: C64,
    grad: ComplexVec,
    cell: usize,
}

/// Face samples with the weight split between the `dim` face directions.
/// Wall faces take the midpoint value of the half cell they stand for.
fn faces(domain: &GridDomain, u: &[C64]) -> Vec<Face> {
    let vol = domain.cell_volume();
    let dim = domain.dim as f64;
    face_samples(domain, u)
        .into_iter()
        .map(|(w, m, g, k)| {
            let wall = w < 0.75 * vol;
            Face { w: w / dim, val: if wall { u[k] * 0.5 } else { m }, grad: ComplexVec(g), cell: k }
        })
        .collect()
}

/// `||grad_h u||_2^2` from the Laplacian form.
fn grad_energy(lap: &SparseMatrix, u: &[C64]) -> f64 {
    lap.form(u, u).re.max(0.0)
}

fn check_exponent(p: f64) -> Result<()> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidParam(format!("p = {p} must be finite and > 1")));
    }
    Ok(())
}

fn check_len(domain: &GridDomain, u: &[C64], what: &str) -> Result<()> {
    if u.len() != domain.len() {
        return Err(Error::Dimension(format!("{what} has {} entries on a grid of {}", u.len(), domain.len())));
    }
    Ok(())
}

/// Probe functions for the experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProbeSpec {
    /// Discrete Laplacian eigenvector `j` (1-based).
    Eigenmode { j: usize },
    Bump { center: Vec<f64>, width: f64 },
    /// Random complex combination of the first 16 modes with `1/j` decay.
    Random,
    /// `rho^{1 + ik}` with `rho` the product of `sin` profiles.
    Phase { k: f64 },
}

impl ProbeSpec {
    pub fn build(&self, domain: &GridDomain, seed: u64) -> Result<Vec<C64>> {
        let centers = domain.centers();
        let re = |v: Vec<f64>| v.into_iter().map(|x| C64::new(x, 0.0)).collect::<Vec<_>>();
        match self {
            ProbeSpec::Eigenmode { j } => {
                if *j == 0 {
                    return Err(Error::InvalidParam("eigenmode index is 1-based".into()));
                }
                Ok(re(crate::pell::eigenvector(domain, *j)))
            }
            ProbeSpec::Bump { center, width } => {
                if center.len() != domain.dim || !(*width > 0.0) {
                    return Err(Error::InvalidParam("bump needs a centre in the domain dimension and width > 0".into()));
                }
                Ok(re(centers
                    .iter()
                    .map(|x| {
                        let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                        (-r2 / (width * width)).exp()
                    })
                    .collect()))
            }
            ProbeSpec::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut u = vec![C64::new(0.0, 0.0); domain.len()];
                for j in 1..=16 {
                    let c = C64::new(gauss(&mut rng), gauss(&mut rng)) / j as f64;
                    for (x, m) in u.iter_mut().zip(crate::pell::eigenvector(domain, j)) {
                        *x += c * m;
                    }
                }
                Ok(u)
            }
            ProbeSpec::Phase { k } => Ok(centers
                .iter()
                .map(|x| {
                    let rho: f64 = x
                        .iter()
                        .enumerate()
                        .map(|(ax, xi)| {
                            let [a, b] = domain.extents[ax];
                            (std::f64::consts::PI * (xi - a) / (b - a)).sin()
                        })
                        .product();
                    C64::from_polar(rho, k * rho.ln())
                })
                .collect()),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContractivityParams {
    /// Allowed relative growth of the `L^p` norm.
    pub eps_h: f64,
    pub dt_max: f64,
    pub scheme: Scheme,
    /// Probes for the subcriticality falsifier when `V` has a negative part.
    pub class_probes: usize,
    pub seed: u64,
}

impl Default for ContractivityParams {
    fn default() -> Self {
        Self { eps_h: 1e-3, dt_max: 1e-3, scheme: Scheme::BackwardEuler, class_probes: 16, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContractivityReport {
    pub p: f64,
    pub theta: f64,
    /// The rotated tuple is in `W_p` (or `WP_p` for a signed potential).
    pub class_member: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_note: Option<String>,
    pub n_probes: usize,
    /// `max ||T f||_p / ||f||_p - 1` over probes and times.
    pub max_growth: f64,
    pub worst_probe: usize,
    pub worst_time: f64,
    pub eps_h: f64,
    pub contractive: bool,
}

fn max_growth(form: &DiscreteForm, p: f64, theta: f64, probes: &[Vec<C64>], t_grid: &[f64], params: &ContractivityParams) -> Result<(f64, usize, f64)> {
    let rows = probes
        .par_iter()
        .enumerate()
        .map(|(i, f)| -> Result<(f64, usize, f64)> {
            let n0 = lp_norm(f, p, &form.domain);
            if n0 == 0.0 {
                return Ok((f64::NEG_INFINITY, i, 0.0));
            }
            let states = evolve(form, f, t_grid, params.scheme, theta, params.dt_max)?;
            Ok(states
                .iter()
                .map(|s| (lp_norm(&s.u, p, &form.domain) / n0 - 1.0, i, s.t))
                .fold((f64::NEG_INFINITY, i, 0.0), |a, b| if b.0 > a.0 { b } else { a }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().fold((f64::NEG_INFINITY, 0, 0.0), |a, b| if b.0 > a.0 { b } else { a }))
}

/// `||T_{t e^{i theta}} f||_p <= (1 + eps_h)||f||_p` along `t_grid` for every probe.
/// The class hypothesis is reported, not enforced.
pub fn check_contractivity(
    t: &CoefficientTuple,
    p: f64,
    domain: &GridDomain,
    theta: f64,
    probes: &[Vec<C64>],
    t_grid: &[f64],
    params: &ContractivityParams,
) -> Result<ContractivityReport> {
    check_exponent(p)?;
    for f in probes {
        check_len(domain, f, "probe")?;
    }
    let rot = rotate(t, theta)?;
    let class = if rot.v.iter().all(|&v| v >= 0.0) {
        check_class(&rot, p, ClassName::Wp)?
    } else {
        check_perturbed_class(&rot, p, ClassName::WPp, domain, &CertGrid::default(), params.class_probes, params.seed)?
    };
    let form = assemble(t, domain)?;
    let (g, worst_probe, worst_time) = max_growth(&form, p, theta, probes, t_grid, params)?;
    let g = if g.is_finite() { g } else { 0.0 };
    Ok(ContractivityReport {
        p,
        theta,
        class_member: class.member,
        class_note: class.note,
        n_probes: probes.len(),
        max_growth: g,
        worst_probe,
        worst_time,
        eps_h: params.eps_h,
        contractive: g <= params.eps_h,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrowthReport {
    pub p: f64,
    pub phi: f64,
    /// `arccos|1 - 2/p|`
    pub threshold: f64,
    pub k_values: Vec<f64>,
    pub growth: Vec<f64>,
    pub max_growth: f64,
    pub best_k: f64,
    pub detected: bool,
}

/// Searches for `L^p` growth under `(e^{i phi} I, 0, 0, 0)` with the phase
/// probes `rho^{1 + ik}`. For these `Re<A grad u, grad(|u|^{p-2} u)>` is
/// proportional to `cos(phi)(p - 1 + k^2) - sin(phi)(p - 2)k`, most negative
/// at `k = tan(phi)(p - 2)/2`.
pub fn search_growth(p: f64, phi: f64, domain: &GridDomain, t_grid: &[f64], params: &ContractivityParams) -> Result<GrowthReport> {
    check_exponent(p)?;
    let a = ComplexMatrix::scalar(domain.dim, C64::from_polar(1.0, phi));
    let form = assemble(&CoefficientTuple::constant(Cell::pure(a, 0.0)), domain)?;
    let k0 = phi.tan() * (p - 2.0) / 2.0;
    let k_values: Vec<f64> = [0.0, 0.5, 0.75, 1.0, 1.5, 2.0].iter().map(|s| s * k0).collect();
    let probes = k_values
        .iter()
        .map(|k| ProbeSpec::Phase { k: *k }.build(domain, 0))
        .collect::<Result<Vec<_>>>()?;
    let growth = probes
        .iter()
        .map(|f| max_growth(&form, p, 0.0, std::slice::from_ref(f), t_grid, params).map(|r| r.0))
        .collect::<Result<Vec<_>>>()?;
    let (i, &g) = growth
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    Ok(GrowthReport {
        p,
        phi,
        threshold: (1.0 - 2.0 / p).abs().acos(),
        k_values: k_values.clone(),
        growth,
        max_growth: g,
        best_k: k_values[i],
        detected: g > params.eps_h,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowParams {
    /// `delta` of `Q`; searched with the convexity sampler when absent.
    pub delta: Option<f64>,
    pub mode: ConvexityMode,
    pub scheme: Scheme,
    pub dt_max: f64,
    /// `tol_flow = c_flow (h^2 + dt) E(0)`.
    pub c_flow: f64,
    pub seed: u64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self { delta: None, mode: ConvexityMode::Plain, scheme: Scheme::BackwardEuler, dt_max: 1e-3, c_flow: 1.0, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowDiagnostics {
    pub delta: f64,
    pub h: f64,
    pub dt: f64,
    pub tol_flow: f64,
    /// `max_k E(t_{k+1}) - E(t_k)`
    pub max_increase: f64,
    /// `-(E(t_1) - E(t_0)) / (t_1 - t_0)`
    pub quotient: f64,
    /// Trapezoid average over the first interval of the grid quadrature of
    /// the generalized Hessian of `Q`.
    pub hessian_quadrature: f64,
    pub derivative_rel_err: f64,
    pub derivative_ok: bool,
    pub monotone: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowReport {
    pub times: Vec<f64>,
    /// `"f"`: `||T_t f||_p`, `"g"`: `||T_t g||_q`.
    pub lp_norms: BTreeMap<String, Vec<f64>>,
    pub flow_e: Vec<f64>,
    /// Trapezoid in `t` of the bilinear integrand over the time grid.
    pub bilinear_value: f64,
    pub diagnostics: FlowDiagnostics,
    pub passed: bool,
}

impl FlowReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,E,norm_f,norm_g\n");
        for (k, t) in self.times.iter().enumerate() {
            s.push_str(&format!("{t:e},{:e},{:e},{:e}\n", self.flow_e[k], self.lp_norms["f"][k], self.lp_norms["g"][k]));
        }
        s
    }
}

fn flow_value(u: &[C64], v: &[C64], bp: &BellmanParams, vol: f64) -> f64 {
    u.iter().zip(v).map(|(a, b)| q_eval(*a, *b, bp)).sum::<f64>() * vol
}

/// `int H_Q^{(A,B)}[(u, v); (grad u, grad v)]` on the grid: second-order and
/// first-order parts on faces, the potential part at cell centres.
fn hessian_quadrature(domain: &GridDomain, a: &CoefficientTuple, b: &CoefficientTuple, u: &[C64], v: &[C64], bp: &BellmanParams) -> Result<f64> {
    let (fu, fv) = (faces(domain, u), faces(domain, v));
    let mut acc = 0.0;
    for (x, y) in fu.iter().zip(&fv) {
        let cells = [a.cell(x.cell)?, b.cell(x.cell)?];
        let jet = Jet::bellman_branch(x.val, y.val, bp);
        let d = FormFrame::new(&cells, &[x.val, y.val], &[x.grad.clone(), y.grad.clone()])?.decompose(&jet)?;
        acc += x.w * (d.h_matrix + d.h_firstorder);
    }
    let vol = domain.cell_volume();
    let zero = ComplexVec::zeros(domain.dim);
    for k in 0..domain.len() {
        let cells = [a.cell(k)?, b.cell(k)?];
        let jet = Jet::bellman_branch(u[k], v[k], bp);
        let d = FormFrame::new(&cells, &[u[k], v[k]], &[zero.clone(), zero.clone()])?.decompose(&jet)?;
        acc += vol * d.g_potential;
    }
    Ok(acc)
}

/// `int sqrt(|grad u|^2 + |V||u|^2) sqrt(|grad v|^2 + |W||v|^2)` on faces.
fn bilinear_integrand(domain: &GridDomain, a: &CoefficientTuple, b: &CoefficientTuple, u: &[C64], v: &[C64]) -> f64 {
    faces(domain, u)
        .iter()
        .zip(&faces(domain, v))
        .map(|(x, y)| {
            let l = (x.grad.norm_sqr() + a.v_at(x.cell).abs() * x.val.norm_sqr()).sqrt();
            let r = (y.grad.norm_sqr() + b.v_at(y.cell).abs() * y.val.norm_sqr()).sqrt();
            x.w * l * r
        })
        .sum()
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() || t_grid[0] < 0.0 || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParam("time grid must be nonempty, nonnegative and strictly increasing".into()));
    }
    Ok(())
}

/// `E(t) = int Q(T_t^A f, T_t^B g)` along `t_grid`, checked for monotonicity,
/// with the first difference quotient compared against the Hessian quadrature.
#[allow(clippy::too_many_arguments)]
pub fn flow_monotonicity(
    a: &CoefficientTuple,
    b: &CoefficientTuple,
    p: f64,
    f: &[C64],
    g: &[C64],
    domain: &GridDomain,
    t_grid: &[f64],
    params: &FlowParams,
) -> Result<FlowReport> {
    check_len(domain, f, "f")?;
    check_len(domain, g, "g")?;
    check_grid(t_grid)?;
    check_preconditions(a, b, p, &params.mode)?;
    let delta = match params.delta {
        Some(d) => d,
        None => search_delta(a, b, p, &params.mode, 2000, params.seed)?,
    };
    let bp = BellmanParams::new(p, delta)?;
    let (fa, fb) = (assemble(a, domain)?, assemble(b, domain)?);
    let (su, sv) = rayon::join(
        || evolve(&fa, f, t_grid, params.scheme, 0.0, params.dt_max),
        || evolve(&fb, g, t_grid, params.scheme, 0.0, params.dt_max),
    );
    let (su, sv) = (su?, sv?);
    let vol = domain.cell_volume();
    let flow_e: Vec<f64> = su.iter().zip(&sv).map(|(x, y)| flow_value(&x.u, &y.u, &bp, vol)).collect();
    let mut lp_norms = BTreeMap::new();
    lp_norms.insert("f".to_string(), su.iter().map(|s| lp_norm(&s.u, p, domain)).collect());
    lp_norms.insert("g".to_string(), sv.iter().map(|s| lp_norm(&s.u, conjugate(p), domain)).collect());
    let integrand: Vec<f64> = su.iter().zip(&sv).map(|(x, y)| bilinear_integrand(domain, a, b, &x.u, &y.u)).collect();
    let bilinear_value = t_grid.windows(2).zip(integrand.windows(2)).map(|(t, i)| 0.5 * (t[1] - t[0]) * (i[0] + i[1])).sum();

    let h = (0..domain.dim).map(|k| domain.h(k)).fold(0.0, f64::max);
    let dt = su.iter().map(|s| s.dt).fold(0.0, f64::max).max(if t_grid.len() > 1 { 0.0 } else { params.dt_max });
    let tol_flow = params.c_flow * (h * h + dt) * flow_e[0].abs();
    let max_increase = flow_e.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let max_increase = if max_increase.is_finite() { max_increase } else { 0.0 };
    let (quotient, hq) = if t_grid.len() > 1 {
        let q = -(flow_e[1] - flow_e[0]) / (t_grid[1] - t_grid[0]);
        let h0 = hessian_quadrature(domain, a, b, &su[0].u, &sv[0].u, &bp)?;
        let h1 = hessian_quadrature(domain, a, b, &su[1].u, &sv[1].u, &bp)?;
        (q, 0.5 * (h0 + h1))
    } else {
        (0.0, 0.0)
    };
    let derivative_rel_err = if quotient == hq { 0.0 } else { (quotient - hq).abs() / hq.abs().max(f64::MIN_POSITIVE) };
    let monotone = max_increase <= tol_flow;
    Ok(FlowReport {
        times: t_grid.to_vec(),
        lp_norms,
        flow_e,
        bilinear_value,
        diagnostics: FlowDiagnostics {
            delta,
            h,
            dt,
            tol_flow,
            max_increase,
            quotient,
            hessian_quadrature: hq,
            derivative_rel_err,
            derivative_ok: derivative_rel_err <= 0.1,
            monotone,
        },
        passed: monotone,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BilinearParams {
    pub t_max: f64,
    /// Trapezoid nodes in `s = sqrt(t)`.
    pub n_nodes: usize,
    pub scheme: Scheme,
    pub dt_max: f64,
    /// Largest accepted tail, relative to the value.
    pub tail_tol: f64,
}

impl Default for BilinearParams {
    fn default() -> Self {
        Self { t_max: 20.0, n_nodes: 200, scheme: Scheme::BackwardEuler, dt_max: 0.01, tail_tol: 1e-3 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BilinearReport {
    pub value: f64,
    /// `I(T) / r` with `r` the decay rate over the last interval.
    pub tail_estimate: f64,
    pub t_max: f64,
    pub n_nodes: usize,
}

/// `int_0^{T} int sqrt(|grad T_t f|^2 + |V||T_t f|^2) sqrt(|grad T_t g|^2 + |W||T_t g|^2)`,
/// trapezoid in `s = sqrt(t)`.
pub fn bilinear_functional(
    a: &CoefficientTuple,
    b: &CoefficientTuple,
    domain: &GridDomain,
    f: &[C64],
    g: &[C64],
    params: &BilinearParams,
) -> Result<BilinearReport> {
    check_len(domain, f, "f")?;
    check_len(domain, g, "g")?;
    if !(params.t_max > 0.0) || params.n_nodes < 3 {
        return Err(Error::InvalidParam("bilinear functional needs t_max > 0 and at least 3 nodes".into()));
    }
    let ds = params.t_max.sqrt() / (params.n_nodes - 1) as f64;
    let s: Vec<f64> = (0..params.n_nodes).map(|k| k as f64 * ds).collect();
    let t: Vec<f64> = s.iter().map(|x| x * x).collect();
    let (fa, fb) = (assemble(a, domain)?, assemble(b, domain)?);
    let (su, sv) = rayon::join(
        || evolve(&fa, f, &t, params.scheme, 0.0, params.dt_max),
        || evolve(&fb, g, &t, params.scheme, 0.0, params.dt_max),
    );
    let (su, sv) = (su?, sv?);
    let integrand: Vec<f64> = su.iter().zip(&sv).map(|(x, y)| bilinear_integrand(domain, a, b, &x.u, &y.u)).collect();
    let n = integrand.len();
    let value = (0..n)
        .map(|k| {
            let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
            w * ds * 2.0 * s[k] * integrand[k]
        })
        .sum::<f64>();
    let (last, prev) = (integrand[n - 1], integrand[n - 2]);
    let tail_estimate = if last == 0.0 {
        0.0
    } else {
        let rate = (prev / last).ln() / (t[n - 1] - t[n - 2]);
        if rate > 0.0 {
            last / rate
        } else {
            f64::INFINITY
        }
    };
    if tail_estimate > params.tail_tol * value.max(f64::MIN_POSITIVE) {
        return Err(Error::Tail(tail_estimate));
    }
    Ok(BilinearReport { value, tail_estimate, t_max: params.t_max, n_nodes: params.n_nodes })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LpGradientReport {
    pub p: f64,
    /// `int 1_{u != 0} |u|^{p-2}(|grad u|^2 + V_+|u|^2)`
    pub weighted_energy: f64,
    /// `int V_-|u|^p`
    pub negative_part: f64,
    /// `alpha int (q/4) H^I_{F_p}[u; grad u]`
    pub alpha_term: f64,
    /// `sigma int V_+|u|^p`
    pub sigma_term: f64,
    pub slack: f64,
    pub finite: bool,
    pub holds: bool,
}

/// The weighted gradient integral of `u` and the subcritical inequality
/// `int V_-|u|^p <= alpha int (q/4) H^I_{F_p}[u; grad u] + sigma int V_+|u|^p`.
pub fn lp_gradient_estimate(t: &CoefficientTuple, p: f64, domain: &GridDomain, u: &[C64], cert: &SubcriticalityCert) -> Result<LpGradientReport> {
    check_exponent(p)?;
    check_len(domain, u, "u")?;
    let class = check_perturbed_class(t, p, ClassName::SPp, domain, &CertGrid::single(*cert), 32, 0)?;
    if !class.member {
        return Err(Error::Precondition(format!("tuple not in SP_{p} with the given certificate")));
    }
    let q = conjugate(p);
    let vol = domain.cell_volume();
    let mut weighted_energy = 0.0;
    let mut alpha_term = 0.0;
    for x in faces(domain, u) {
        let m = x.val.norm();
        if m > 0.0 {
            weighted_energy += x.w * m.powf(p - 2.0) * x.grad.norm_sqr();
            alpha_term += x.w * q / 4.0 * h_identity_power(x.val, &x.grad, p);
        }
    }
    alpha_term *= cert.alpha;
    let (mut negative_part, mut sigma_term) = (0.0, 0.0);
    for (k, z) in u.iter().enumerate() {
        let (m, v) = (z.norm(), t.v_at(k));
        if m > 0.0 {
            weighted_energy += vol * v.max(0.0) * m.powf(p);
        }
        negative_part += vol * (-v).max(0.0) * m.powf(p);
        sigma_term += vol * v.max(0.0) * m.powf(p);
    }
    sigma_term *= cert.sigma;
    let slack = alpha_term + sigma_term - negative_part;
    Ok(LpGradientReport {
        p,
        weighted_energy,
        negative_part,
        alpha_term,
        sigma_term,
        slack,
        finite: weighted_energy.is_finite(),
        holds: slack >= -1e-12 * (alpha_term + sigma_term).max(negative_part),
    })
}

/// `V_n = V_+ - min(V_-, n)`.
pub fn truncate_potential(t: &CoefficientTuple, n: f64) -> Result<CoefficientTuple> {
    if !(n >= 0.0) {
        return Err(Error::InvalidParam(format!("truncation level {n} must be >= 0")));
    }
    Ok(t.map_v(|v| if v >= 0.0 { v } else { -(-v).min(n) }))
}

/// `int_a^b |x - x0|^{-gamma}`, `gamma < 1` if `x0` lies in `[a, b]`.
fn power_integral_1d(a: f64, b: f64, x0: f64, gamma: f64) -> f64 {
    let anti = |x: f64| {
        let r = x - x0;
        r.signum() * r.abs().powf(1.0 - gamma) / (1.0 - gamma)
    };
    anti(b) - anti(a)
}

/// `int r^{-gamma}` over `[0, hx] x [0, hy]` with the singular point at the origin.
fn power_integral_corner(hx: f64, hy: f64, gamma: f64) -> f64 {
    let (x, w) = gauss_legendre(32);
    let th0 = (hy / hx).atan();
    let seg = |lo: f64, hi: f64, r: &dyn Fn(f64) -> f64| -> f64 {
        x.iter()
            .zip(&w)
            .map(|(xi, wi)| {
                let th = lo + (hi - lo) * (xi + 1.0) / 2.0;
                wi * (hi - lo) / 2.0 * r(th).powf(2.0 - gamma)
            })
            .sum()
    };
    (seg(0.0, th0, &|th| hx / th.cos()) + seg(th0, std::f64::consts::FRAC_PI_2, &|th| hy / th.sin())) / (2.0 - gamma)
}

/// Cell averages of `-c |x - x0|^{-gamma}`, `0 < gamma < dim`. In 2D the
/// singular point must be a grid vertex or lie outside the domain's cells.
pub fn singular_potential(domain: &GridDomain, x0: &[f64], c: f64, gamma: f64) -> Result<Vec<f64>> {
    if x0.len() != domain.dim {
        return Err(Error::Dimension("singular point in the wrong dimension".into()));
    }
    if !(gamma > 0.0 && gamma < domain.dim as f64) {
        return Err(Error::InvalidParam(format!("exponent {gamma} must lie in (0, {})", domain.dim)));
    }
    let vol = domain.cell_volume();
    if domain.dim == 1 {
        let h = domain.h(0);
        return Ok(domain
            .centers()
            .iter()
            .map(|x| -c * power_integral_1d(x[0] - h / 2.0, x[0] + h / 2.0, x0[0], gamma) / vol)
            .collect());
    }
    let (hx, hy) = (domain.h(0), domain.h(1));
    let (gx, gw) = gauss_legendre(8);
    let mut out = Vec::with_capacity(domain.len());
    for x in domain.centers() {
        let lo = [x[0] - hx / 2.0, x[1] - hy / 2.0];
        let hi = [x[0] + hx / 2.0, x[1] + hy / 2.0];
        let near = |a: f64, b: f64, h: f64| (a - b).abs() < 1e-9 * h;
        let touches = (0..2).all(|k| x0[k] >= lo[k] - 1e-9 * hx && x0[k] <= hi[k] + 1e-9 * hx);
        let integral = if touches {
            let corner_x = near(x0[0], lo[0], hx) || near(x0[0], hi[0], hx);
            let corner_y = near(x0[1], lo[1], hy) || near(x0[1], hi[1], hy);
            if !(corner_x && corner_y) {
                return Err(Error::InvalidParam("singular point must sit on a grid vertex".into()));
            }
            power_integral_corner(hx, hy, gamma)
        } else {
            let mut acc = 0.0;
            for (xi, wi) in gx.iter().zip(&gw) {
                for (yj, wj) in gx.iter().zip(&gw) {
                    let px = x[0] + xi * hx / 2.0 - x0[0];
                    let py = x[1] + yj * hy / 2.0 - x0[1];
                    acc += wi * wj * (px * px + py * py).sqrt().powf(-gamma);
                }
            }
            acc * vol / 4.0
        };
        out.push(-c * integral / vol);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TruncationParams {
    pub scheme: Scheme,
    pub dt_max: f64,
    pub inverse_iterations: usize,
}

impl Default for TruncationParams {
    fn default() -> Self {
        Self { scheme: Scheme::BackwardEuler, dt_max: 1e-3, inverse_iterations: 200 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TruncationRow {
    pub n: f64,
    /// `||grad_h(T_z^{A_n} f - T_z^A f)||_2`
    pub grad_error: f64,
    /// `|| |V_n|^{1/2} T_z^{A_n} f - |V|^{1/2} T_z^A f ||_2`
    pub potential_error: f64,
    /// `min Re a_n(u, u) / (||grad u||^2 + ||V_+^{1/2} u||^2)`
    pub form_constant: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TruncationReport {
    pub z: [f64; 2],
    pub max_v_minus: f64,
    pub rows: Vec<TruncationRow>,
    /// Strict decrease while positive, for both errors.
    pub monotone: bool,
    /// Both errors vanish exactly once `n >= max V_-`.
    pub exact_zero: bool,
    pub form_constant_min: f64,
    pub form_constant_max: f64,
    pub passed: bool,
}

/// Smallest eigenvalue of the pencil `(Re K, L + V_+)` by inverse iteration.
fn form_lower_constant(form: &DiscreteForm, vplus: &[f64], iters: usize) -> Result<f64> {
    let n = form.n();
    let half = C64::new(0.5, 0.0);
    let ks = form.stiffness.combine(half, &form.stiffness.adjoint(), half);
    let w: Vec<f64> = (0..n).map(|i| form.mass[i] * vplus[i]).collect();
    let one = C64::new(1.0, 0.0);
    let bm = laplacian(&form.domain).combine(one, &SparseMatrix::diagonal(&w), one);
    let lu = BandLu::factor(&ks)?;
    let mut x: Vec<C64> = crate::pell::eigenvector(&form.domain, 1)
        .iter()
        .enumerate()
        .map(|(i, v)| C64::new(v + 1e-3 * ((i * 7919) % 97) as f64 / 97.0, 0.0))
        .collect();
    let mut mu = f64::INFINITY;
    for _ in 0..iters {
        let y = lu.solve(&bm.matvec(&x));
        let norm = bm.form(&y, &y).re.sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Factorization(0));
        }
        x = y.iter().map(|v| v / norm).collect();
        let next = ks.form(&x, &x).re / bm.form(&x, &x).re;
        let done = (next - mu).abs() <= 1e-12 * next.abs();
        mu = next;
        if done {
            break;
        }
    }
    Ok(mu)
}

/// Errors of `T_z^{A_n} f` against `T_z^A f` along `n_list` (ascending).
pub fn check_truncation_convergence(
    t: &CoefficientTuple,
    domain: &GridDomain,
    f: &[C64],
    z: C64,
    n_list: &[f64],
    params: &TruncationParams,
) -> Result<TruncationReport> {
    check_len(domain, f, "f")?;
    if z.norm() == 0.0 || z.arg().abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(Error::InvalidParam("z must be nonzero in the right half plane".into()));
    }
    if n_list.is_empty() || n_list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParam("n_list must be nonempty and increasing".into()));
    }
    let lap = laplacian(domain);
    let (tz, theta) = (z.norm(), z.arg());
    let reference = evolve(&assemble(t, domain)?, f, &[tz], params.scheme, theta, params.dt_max)?.remove(0).u;
    let nv = domain.len();
    let v_full: Vec<f64> = (0..nv).map(|k| t.v_at(k)).collect();
    let vplus: Vec<f64> = v_full.iter().map(|v| v.max(0.0)).collect();
    let max_v_minus = v_full.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
    let rows = n_list
        .par_iter()
        .map(|&n| -> Result<TruncationRow> {
            let tn = truncate_potential(t, n)?;
            let form = assemble(&tn, domain)?;
            let un = evolve(&form, f, &[tz], params.scheme, theta, params.dt_max)?.remove(0).u;
            let d: Vec<C64> = un.iter().zip(&reference).map(|(a, b)| a - b).collect();
            let pd: Vec<C64> = (0..nv)
                .map(|k| un[k] * tn.v_at(k).abs().sqrt() - reference[k] * v_full[k].abs().sqrt())
                .collect();
            Ok(TruncationRow {
                n,
                grad_error: grad_energy(&lap, &d).sqrt(),
                potential_error: lp_norm(&pd, 2.0, domain),
                form_constant: form_lower_constant(&form, &vplus, params.inverse_iterations)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let decreasing = |get: fn(&TruncationRow) -> f64| {
        rows.windows(2).all(|w| {
            let (a, b) = (get(&w[0]), get(&w[1]));
            if a > 0.0 {
                b < a
            } else {
                b == 0.0
            }
        })
    };
    let monotone = decreasing(|r| r.grad_error) && decreasing(|r| r.potential_error);
    let exact_zero = rows
        .iter()
        .filter(|r| r.n >= max_v_minus)
        .all(|r| r.grad_error == 0.0 && r.potential_error == 0.0);
    let form_constant_min = rows.iter().map(|r| r.form_constant).fold(f64::INFINITY, f64::min);
    let form_constant_max = rows.iter().map(|r| r.form_constant).fold(f64::NEG_INFINITY, f64::max);
    Ok(TruncationReport {
        z: [z.re, z.im],
        max_v_minus,
        rows,
        monotone,
        exact_zero,
        form_constant_min,
        form_constant_max,
        passed: monotone && exact_zero && form_constant_min > 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Bc;
    use std::f64::consts::PI;

    fn heat(dim_v: f64) -> CoefficientTuple {
        CoefficientTuple::constant(Cell::pure(ComplexMatrix::identity(1), dim_v))
    }

    #[test]
    fn truncation_examples() {
        let t = CoefficientTuple::with_potential(ComplexMatrix::identity(1), vec![2.0, -7.0, -1.0]).unwrap();
        assert_eq!(truncate_potential(&t, 3.0).unwrap().v, vec![2.0, -3.0, -1.0]);
        assert_eq!(truncate_potential(&t, 7.0).unwrap().v, t.v);
        let pos = t.map_v(f64::abs);
        assert_eq!(truncate_potential(&pos, 0.0).unwrap().v, pos.v);
        assert!(truncate_potential(&t, -1.0).is_err());
    }

    #[test]
    fn corner_integral_matches_square_formula() {
        // square of side h, gamma = 1: 2 h int_0^{pi/4} sec
        let h = 0.3;
        let exact = 2.0 * h * (1.0f64 / (PI / 4.0).cos() + (PI / 4.0).tan()).ln();
        assert!((power_integral_corner(h, h, 1.0) - exact).abs() < 1e-12);
    }

    #[test]
    fn singular_average_1d() {
        let dom = GridDomain::interval(0.0, 1.0, 4, Bc::Dirichlet).unwrap();
        let v = singular_potential(&dom, &[0.0], 1.0, 0.5).unwrap();
        // average of x^{-1/2} over (0, 1/4) is 2 (1/4)^{1/2} * 4
        assert!((v[0] + 4.0).abs() < 1e-12);
        assert!(v.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn zero_data_gives_zero() {
        let dom = GridDomain::interval(0.0, PI, 32, Bc::Dirichlet).unwrap();
        let z = vec![C64::new(0.0, 0.0); 32];
        let r = bilinear_functional(&heat(0.0), &heat(0.0), &dom, &z, &z, &BilinearParams::default()).unwrap();
        assert_eq!(r.value, 0.0);
        let fr = flow_monotonicity(&heat(0.0), &heat(0.0), 2.0, &z, &z, &dom, &[0.0, 0.1], &FlowParams { delta: Some(0.5), ..Default::default() }).unwrap();
        assert!(fr.flow_e.iter().all(|e| *e == 0.0));
        assert!(fr.passed);
    }

    #[test]
    fn p2_weighted_energy_is_dirichlet_energy() {
        let dom = GridDomain::interval(0.0, PI, 64, Bc::Dirichlet).unwrap();
        let u = ProbeSpec::Eigenmode { j: 1 }.build(&dom, 0).unwrap();
        let r = lp_gradient_estimate(&heat(0.0), 2.0, &dom, &u, &SubcriticalityCert::zero()).unwrap();
        let e = grad_energy(&laplacian(&dom), &u);
        assert!((r.weighted_energy - e).abs() < 1e-10 * e);
    }

    #[test]
    fn phase_probe_has_unit_modulus_profile() {
        let dom = GridDomain::interval(0.0, 1.0, 8, Bc::Dirichlet).unwrap();
        let u = ProbeSpec::Phase { k: 3.0 }.build(&dom, 0).unwrap();
        let r = ProbeSpec::Phase { k: 0.0 }.build(&dom, 0).unwrap();
        for (a, b) in u.iter().zip(&r) {
            assert!((a.norm() - b.re).abs() < 1e-14);
        }
    }
}
