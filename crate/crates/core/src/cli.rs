//! Declarative scenario runner: one JSON config in, one JSON report and a few
//! CSV tables out.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bellman::{BellmanParams, MollifierParams};
use crate::cutoff::{
    audit_derivatives, check_admissible, check_comparability, reference_samples, region_csv, CutoffParams,
};
use crate::error::{Error, Result};
use crate::field::{Cell, CoefficientDoc, CoefficientTuple, GridDomain, C64};
use crate::hess::{et_domination, first_order_domination, verify_convexity, ConvexityMode, ConvexityParams};
use crate::pell::{check_class, check_class_stability, check_perturbed_class, conjugate, CertGrid, ClassName};
use crate::semigroup::{
    bilinear_functional, check_contractivity, check_truncation_convergence, flow_monotonicity, lp_norm,
    search_growth, singular_potential, BilinearParams, ContractivityParams, FlowParams, ProbeSpec, Scheme,
    TruncationParams,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    ClassCheck,
    Convexity,
    CutoffAudit,
    Contractivity,
    Flow,
    Bilinear,
    Truncation,
}

/// A coefficient document given inline or as a path relative to the config.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientRef {
    Path(PathBuf),
    Inline(CoefficientDoc),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    /// First tuple (`A`) with its grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<CoefficientRef>,
    /// Second tuple (`B`); defaults to the first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second: Option<CoefficientRef>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub kind: ScenarioKind,
    #[serde(default)]
    pub inputs: Inputs,
    #[serde(default)]
    pub params: Value,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub scenarios: Vec<Scenario>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    NotRefuted,
}

/// A CSV table produced by a scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub csv: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub kind: ScenarioKind,
    pub seed: u64,
    pub status: Status,
    pub metrics: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub artifacts: Vec<String>,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub scenarios: Vec<ScenarioReport>,
    pub n_pass: usize,
    pub n_fail: usize,
    pub n_not_refuted: usize,
}

impl RunReport {
    pub fn failed(&self) -> bool {
        self.n_fail > 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Config problems: bad JSON, bad shape, duplicate names, unreadable inputs.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn parse_config(text: &str) -> std::result::Result<Config, ConfigError> {
    let cfg: Config = serde_json::from_str(text)
        .map_err(|e| ConfigError(format!("line {}, column {}: {e}", e.line(), e.column())))?;
    let mut names: Vec<&str> = cfg.scenarios.iter().map(|s| s.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(ConfigError(format!("duplicate scenario name {:?}", w[0])));
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> std::result::Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Directory against which input paths resolve.
    pub base_dir: PathBuf,
    pub seed_override: Option<u64>,
    pub verbose: bool,
}

type Loaded = (GridDomain, CoefficientTuple);

fn load_ref(r: &CoefficientRef, base: &Path) -> std::result::Result<Loaded, ConfigError> {
    let doc = match r {
        CoefficientRef::Inline(d) => d.clone(),
        CoefficientRef::Path(p) => {
            let path = if p.is_absolute() { p.clone() } else { base.join(p) };
            let text = std::fs::read_to_string(&path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| {
                ConfigError(format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column()))
            })?
        }
    };
    doc.into_parts().map_err(|e| ConfigError(format!("coefficients: {e}")))
}

struct Resolved {
    a: Option<Loaded>,
    b: Option<Loaded>,
}

/// Reads every referenced input up front so missing files are config errors.
fn resolve(cfg: &Config, base: &Path) -> std::result::Result<Vec<Resolved>, ConfigError> {
    cfg.scenarios
        .iter()
        .map(|s| {
            let a = s.inputs.coefficients.as_ref().map(|r| load_ref(r, base)).transpose()?;
            let b = s.inputs.second.as_ref().map(|r| load_ref(r, base)).transpose()?;
            Ok(Resolved { a, b })
        })
        .collect()
}

struct Outcome {
    status: Status,
    metrics: Value,
    tables: Vec<Table>,
}

fn params<T: for<'de> Deserialize<'de>>(v: &Value) -> Result<T> {
    let v = if v.is_null() { json!({}) } else { v.clone() };
    Ok(serde_json::from_value(v)?)
}

fn need<'a>(x: &'a Option<Loaded>, what: &str) -> Result<&'a Loaded> {
    x.as_ref().ok_or_else(|| Error::InvalidParam(format!("scenario needs inputs.{what}")))
}

fn pass_if(ok: bool) -> Status {
    if ok {
        Status::Pass
    } else {
        Status::Fail
    }
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("serializable")
}

fn default_classes() -> Vec<ClassName> {
    vec![ClassName::BPp]
}

fn yes() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassCheckParams {
    p: f64,
    #[serde(default = "default_classes")]
    classes: Vec<ClassName>,
    #[serde(default = "yes")]
    expect: bool,
    #[serde(default)]
    cert_grid: Option<CertGrid>,
    #[serde(default = "sixteen")]
    n_probes: usize,
    /// Runs the adjoint, rotation and chain checks when set.
    #[serde(default)]
    stability: Option<StabilitySpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StabilitySpec {
    #[serde(default)]
    rotations: Vec<f64>,
    #[serde(default)]
    chain: Vec<f64>,
}

fn sixteen() -> usize {
    16
}

fn class_check(s: &Scenario, r: &Resolved) -> Result<Outcome> {
    let pr: ClassCheckParams = params(&s.params)?;
    let (dom, t) = need(&r.a, "coefficients")?;
    let grid = pr.cert_grid.clone().unwrap_or_default();
    let mut rows = Vec::new();
    let mut ok = true;
    let mut perturbed_member = false;
    for c in &pr.classes {
        let rep = match c {
            ClassName::WPp | ClassName::SPp | ClassName::BPp => {
                check_perturbed_class(t, pr.p, *c, dom, &grid, pr.n_probes, s.seed)?
            }
            _ => check_class(t, pr.p, *c)?,
        };
        ok &= rep.member == pr.expect;
        perturbed_member |= rep.member && matches!(c, ClassName::WPp | ClassName::SPp | ClassName::BPp);
        rows.push(to_value(&rep));
    }
    let mut metrics = json!({ "memberships": rows });
    if let Some(st) = &pr.stability {
        let rep = check_class_stability(t, pr.p, dom, &grid, pr.n_probes, s.seed, &st.rotations, &st.chain)?;
        ok &= rep.passed;
        metrics["stability"] = to_value(&rep);
    }
    // subcriticality is only ever not refuted by the probes
    let status = match (ok, perturbed_member) {
        (false, _) => Status::Fail,
        (true, true) => Status::NotRefuted,
        (true, false) => Status::Pass,
    };
    Ok(Outcome { status, metrics, tables: vec![] })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConvexityScenario {
    p: f64,
    #[serde(default = "plain")]
    mode: ConvexityMode,
    #[serde(default = "hundred_k")]
    n_samples: usize,
    #[serde(default)]
    delta: Option<f64>,
}

fn plain() -> ConvexityMode {
    ConvexityMode::Plain
}

fn hundred_k() -> usize {
    100_000
}

fn hist_csv(rep: &crate::hess::ConvexityReport) -> String {
    let mut out = String::from("region,lo,hi,count\n");
    for r in &rep.regions {
        for b in &r.histogram {
            out.push_str(&format!("{},{:e},{:e},{}\n", r.region, b[0], b[1], b[2]));
        }
    }
    out
}

fn convexity(s: &Scenario, r: &Resolved) -> Result<Outcome> {
    let pr: ConvexityScenario = params(&s.params)?;
    let (_, a) = need(&r.a, "coefficients")?;
    let b = r.b.as_ref().map(|x| &x.1).unwrap_or(a);
    let cp = ConvexityParams { delta: pr.delta, seed: s.seed, ..Default::default() };
    let rep = verify_convexity(a, b, pr.p, &cp, pr.n_samples, pr.mode)?;
    let tables = vec![Table { name: "slack_histogram".into(), csv: hist_csv(&rep) }];
    let mut metrics = to_value(&rep);
    if let Some(regions) = metrics["regions"].as_array_mut() {
        for r in regions {
            r.as_object_mut().map(|o| o.remove("histogram"));
        }
    }
    Ok(Outcome { status: pass_if(rep.passed), metrics, tables })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CutoffScenario {
    p: f64,
    #[serde(default)]
    kappa: Option<f64>,
    #[serde(default = "n_list_audit")]
    n_list: Vec<f64>,
    #[serde(default = "two_k")]
    n_samples: usize,
    #[serde(default = "nu_default")]
    nu: f64,
    #[serde(default = "twelve")]
    quad_order: usize,
    /// Also runs the domination of `(E.T.)` and of the first-order form by `F`.
    #[serde(default)]
    domination: Option<DominationSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DominationSpec {
    #[serde(default = "n_list_et")]
    n_list: Vec<f64>,
    #[serde(default = "nu_list_et")]
    nu_list: Vec<f64>,
    #[serde(default = "nu_list_fo")]
    first_order_nu: Vec<f64>,
    #[serde(default = "two_k")]
    n_samples: usize,
    #[serde(default = "quarter")]
    delta: f64,
}

fn n_list_audit() -> Vec<f64> {
    vec![1.0, 10.0, 100.0, 1000.0]
}
fn n_list_et() -> Vec<f64> {
    vec![1.0, 10.0, 100.0]
}
fn nu_list_et() -> Vec<f64> {
    vec![0.2, 0.1]
}
fn nu_list_fo() -> Vec<f64> {
    vec![0.2, 0.1, 0.05]
}
fn two_k() -> usize {
    2000
}
fn nu_default() -> f64 {
    0.1
}
fn twelve() -> usize {
    12
}
fn quarter() -> f64 {
    0.25
}

fn cutoff_audit(s: &Scenario, r: &Resolved) -> Result<Outcome> {
    let pr: CutoffScenario = params(&s.params)?;
    let cp = match pr.kappa {
        Some(k) => CutoffParams::new(pr.p, k)?,
        None => CutoffParams::with_default_kappa(pr.p)?,
    };
    let mp = MollifierParams::new(pr.nu, pr.quad_order)?;
    let pts = reference_samples(&cp, pr.n_samples, s.seed);
    let audit = audit_derivatives(&cp, &mp, &pr.n_list, &pts)?;
    let adm = check_admissible(&cp, &mp, &pr.n_list, &pts)?;
    let comps = pr
        .n_list
        .iter()
        .map(|&n| check_comparability(&cp, n, pr.n_samples, s.seed.wrapping_add(1)))
        .collect::<Result<Vec<_>>>()?;
    let mut ok = audit.passed && comps.iter().all(|c| c.passed);
    let mut metrics = json!({
        "kappa": cp.kappa,
        "derivatives": to_value(&audit),
        "comparability": to_value(&comps),
        "admissible": to_value(&adm),
    });
    if let Some(d) = &pr.domination {
        let (_, t) = need(&r.a, "coefficients")?;
        let (_, u) = r.b.as_ref().unwrap_or(need(&r.a, "coefficients")?);
        let cells: [Cell; 2] = [t.cell(0)?, u.cell(0)?];
        let bp = BellmanParams::new(pr.p, d.delta)?;
        let mut et = Vec::new();
        for &nu in &d.nu_list {
            let mpn = MollifierParams::new(nu, pr.quad_order)?;
            let rep = et_domination(&d.n_list, &mpn, &cells, &cp, &bp, d.n_samples, s.seed)?;
            ok &= rep.passed;
            et.push(to_value(&rep));
        }
        let fo = first_order_domination(&d.first_order_nu, pr.quad_order, &cells, &bp, d.n_samples, s.seed)?;
        ok &= fo.passed;
        metrics["et_domination"] = Value::Array(et);
        metrics["first_order_domination"] = to_value(&fo);
    }
    let tables = vec![Table { name: "regions".into(), csv: region_csv(&cp, 200, 200) }];
    Ok(Outcome { status: pass_if(ok), metrics, tables })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ContractivityScenario {
    p: f64,
    #[serde(default)]
    theta: f64,
    probes: Vec<ProbeSpec>,
    t_grid: Vec<f64>,
    #[serde(default)]
    eps_h: Option<f64>,
    #[serde(default)]
    dt_max: Option<f64>,
    /// Runs the growth search at `arccos|1 - 2/p| + offset`.
    #[serde(default)]
    growth_offset: Option<f64>,
    #[serde(default)]
    growth_t_grid: Option<Vec<f64>>,
}

fn contractivity(s: &Scenario, r: &Resolved) -> Result<Outcome> {
    let pr: ContractivityScenario = params(&s.params)?;
    let (dom, t) = need(&r.a, "coefficients")?;
    let mut cp = ContractivityParams { seed: s.seed, ..Default::default() };
    if let Some(e) = pr.eps_h {
        cp.eps_h = e;
    }
    if let Some(d) = pr.dt_max {
        cp.dt_max = d;
    }
    let probes = pr.probes.iter().map(|p| p.build(dom, s.seed)).collect::<Result<Vec<_>>>()?;
    let rep = check_contractivity(t, pr.p, dom, pr.theta, &probes, &pr.t_grid, &cp)?;
    let mut metrics = json!({ "contractivity": to_value(&rep) });
    // without the class hypothesis there is nothing to confirm
    let mut status = match (rep.class_member, rep.contractive) {
        (true, true) => Status::Pass,
        (true, false) => Status::Fail,
        (false, _) => Status::NotRefuted,
    };
    if let Some(off) = pr.growth_offset {
        let phi = (1.0 - 2.0 / pr.p).abs().acos() + off;
        let grid = pr.growth_t_grid.clone().unwrap_or_else(|| (1..=20).map(|k| 1e-3 * k as f64).collect());
        let g = search_growth(pr.p, phi, dom, &grid, &ContractivityParams { dt_max: 1e-4, ..cp.clone() })?;
        if !g.detected {
            status = Status::Fail;
        }
        metrics["growth"] = to_value(&g);
    }
    Ok(Outcome { status, metrics, tables: vec![] })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FlowScenario {
    p: f64,
    f: ProbeSpec,
    g: ProbeSpec,
    t_grid: Vec<f64>,
    #[serde(default)]
    delta: Option<f64>,
    #[serde(default = "plain")]
    mode: ConvexityMode,
    #[serde(default)]
    dt_max: Option<f64>,
    #[serde(default)]
    c_flow: Option<f64>,
}

fn flow(s: &Scenario, r: &Resolved) -> Result<Outcome> {
    let pr: FlowScenario = params(&s.params)?;
    let (dom, a) = need(&r.a, "coefficients")?;
    let b = r.b.as_ref().map(|x| &x.1).unwrap_or(a);
    let d = FlowParams::default();
    let fp = FlowParams {
        delta: pr.delta,
        mode: pr.mode,
        scheme: Scheme::BackwardEuler,
        dt_max: pr.dt_max.unwrap_or(d.dt_max),
        c_flow: pr.c_flow.unwrap_or(d.c_flow),
        seed: s.seed,
    };
    let f = pr.f.build(dom, s.seed)?;
    let g = pr.g.build(dom, s.seed.wrapping_add(1))?;
    let rep = flow_monotonicity(a, b, pr.p, &f, &g, dom, &pr.t_grid, &fp)?;
    let tables = vec![Table { name: "flow".into(), csv: rep.to_csv() }];
    Ok(Outcome { status: pass_if(rep.passed), metrics: to_value(&rep), tables })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BilinearScenario {
    #[serde(default)]
    f: Option<ProbeSpec>,
    #[serde(default)]
    g: Option<ProbeSpec>,
    #[serde(default)]
    t_max: Option<f64>,
    #[serde(default)]
    n_nodes: Option<usize>,
    #[serde(default)]
    dt_max: Option<f64>,
    /// Expected value of `B(f, g)` with its relative tolerance.
    #[serde(default)]
    expect: Option<f64>,
    #[serde(default = "two_percent")]
    rel_tol: f64,
    /// Ratio `B(f, g) / (||f||_p ||g||_q)` over random probe pairs.
    #[serde(default)]
    ratio_probes: Option<usize>,
    #[serde(default)]
    p: Option<f64>,
    #[serde(default = "ten")]
    ratio_cap: f64,
}

fn two_percent() -> f64 {
    0.02
}
fn ten() -> f64 {
    10.0
}

fn bilinear(s: &Scenario, r: &Resolved) -> Result<Outcome> {
    let pr: BilinearScenario = params(&s.params)?;
    let (dom, a) = need(&r.a, "coefficients")?;
    let b = r.b.as_ref().map(|x| &x.1).unwrap_or(a);
    let d = BilinearParams::default();
    let bp = BilinearParams {
        t_max: pr.t_max.unwrap_or(d.t_max),
        n_nodes: pr.n_nodes.unwrap_or(d.n_nodes),
        dt_max: pr.dt_max.unwrap_or(d.dt_max),
        ..d
    };
    let mut metrics = json!({});
    let mut ok = true;
    if let (Some(f), Some(g)) = (&pr.f, &pr.g) {
        let rep = bilinear_functional(a, b, dom, &f.build(dom, s.seed)?, &g.build(dom, s.seed.wrapping_add(1))?, &bp)?;
        if let Some(e) = pr.expect {
            let rel = (rep.value - e).abs() / e.abs();
            ok &= rel <= pr.rel_tol;
            metrics["rel_err"] = json!(rel);
        }
        metrics["value"] = to_value(&rep);
    }
    if let Some(n) = pr.ratio_probes {
        let p = pr.p.ok_or_else(|| Error::InvalidParam("ratio probes need p".into()))?;
        let ratios = (0..n as u64)
            .into_par_iter()
            .map(|k| -> Result<f64> {
                let f = ProbeSpec::Random.build(dom, s.seed.wrapping_add(2 * k))?;
                let g = ProbeSpec::Random.build(dom, s.seed.wrapping_add(2 * k + 1))?;
                let v = bilinear_functional(a, b, dom, &f, &g, &bp)?.value;
                Ok(v / (lp_norm(&f, p, dom) * lp_norm(&g, conjugate(p), dom)))
            })
            .collect::<Result<Vec<_>>>()?;
        let max = ratios.iter().cloned().fold(0.0, f64::max);
        ok &= ratios.iter().all(|x| x.is_finite()) && max <= pr.ratio_cap;
        metrics["ratios"] = json!(ratios);
        metrics["max_ratio"] = json!(max);
    }
    Ok(Outcome { status: pass_if(ok), metrics, tables: vec![] })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TruncationScenario {
    f: ProbeSpec,
    #[serde(default = "z_default")]
    z: [f64; 2],
    #[serde(default = "n_list_trunc")]
    n_list: Vec<f64>,
    /// Replaces `V` by cell averages of `-c |x - center|^{-gamma}`.
    #[serde(default)]
    singular: Option<SingularSpec>,
    #[serde(default)]
    dt_max: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SingularSpec {
    center: Vec<f64>,
    c: f64,
    gamma: f64,
}

fn z_default() -> [f64; 2] {
    [0.1, 0.0]
}
fn n_list_trunc() -> Vec<f64> {
    (0..=8).map(|k| 2f64.powi(k)).collect()
}

fn truncation(s: &Scenario, r: &Resolved) -> Result<Outcome> {
    let pr: TruncationScenario = params(&s.params)?;
    let (dom, t) = need(&r.a, "coefficients")?;
    let t = match &pr.singular {
        Some(sp) => {
            let v = singular_potential(dom, &sp.center, sp.c, sp.gamma)?;
            CoefficientTuple::new(t.a.clone(), t.b.clone(), t.c.clone(), v)?
        }
        None => t.clone(),
    };
    let d = TruncationParams::default();
    let tp = TruncationParams { dt_max: pr.dt_max.unwrap_or(d.dt_max), ..d };
    let f = pr.f.build(dom, s.seed)?;
    let rep = check_truncation_convergence(&t, dom, &f, C64::new(pr.z[0], pr.z[1]), &pr.n_list, &tp)?;
    Ok(Outcome { status: pass_if(rep.passed), metrics: to_value(&rep), tables: vec![] })
}

fn execute(s: &Scenario, r: &Resolved) -> Result<Outcome> {
    match s.kind {
        ScenarioKind::ClassCheck => class_check(s, r),
        ScenarioKind::Convexity => convexity(s, r),
        ScenarioKind::CutoffAudit => cutoff_audit(s, r),
        ScenarioKind::Contractivity => contractivity(s, r),
        ScenarioKind::Flow => flow(s, r),
        ScenarioKind::Bilinear => bilinear(s, r),
        ScenarioKind::Truncation => truncation(s, r),
    }
}

/// Runs every scenario, in parallel, and assembles the report in config order.
/// Scenario-level errors (failed preconditions, non-converged tails) become
/// `fail` with the message attached.
pub fn run(cfg: &Config, opts: &RunOptions) -> std::result::Result<RunReport, ConfigError> {
    let resolved = resolve(cfg, &opts.base_dir)?;
    let mut scenarios = cfg.scenarios.clone();
    if let Some(seed) = opts.seed_override {
        for s in &mut scenarios {
            s.seed = seed;
        }
    }
    let reports: Vec<ScenarioReport> = scenarios
        .par_iter()
        .zip(resolved.par_iter())
        .map(|(s, r)| {
            if opts.verbose {
                eprintln!("[pell-lab] start {}", s.name);
            }
            let rep = match execute(s, r) {
                Ok(o) => ScenarioReport {
                    name: s.name.clone(),
                    kind: s.kind,
                    seed: s.seed,
                    status: o.status,
                    metrics: o.metrics,
                    error: None,
                    artifacts: vec![],
                    tables: o.tables,
                },
                Err(e) => ScenarioReport {
                    name: s.name.clone(),
                    kind: s.kind,
                    seed: s.seed,
                    status: Status::Fail,
                    metrics: json!({}),
                    error: Some(e.to_string()),
                    artifacts: vec![],
                    tables: vec![],
                },
            };
            if opts.verbose {
                eprintln!("[pell-lab] done  {} -> {:?}", s.name, rep.status);
            }
            rep
        })
        .collect();
    let count = |st: Status| reports.iter().filter(|r| r.status == st).count();
    Ok(RunReport {
        schema_version: SCHEMA_VERSION,
        n_pass: count(Status::Pass),
        n_fail: count(Status::Fail),
        n_not_refuted: count(Status::NotRefuted),
        scenarios: reports,
    })
}

/// Scenario names as file stems.
fn stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Writes the CSV tables (region maps, flow curves, slack histograms) and
/// records their paths in the report.
pub fn emit_plots_data(report: &mut RunReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for s in &mut report.scenarios {
        for t in &s.tables {
            std::fs::create_dir_all(out_dir)?;
            let file = format!("{}.{}.csv", stem(&s.name), t.name);
            std::fs::write(out_dir.join(&file), &t.csv)?;
            s.artifacts.push(file);
            out.push(out_dir.join(&s.artifacts[s.artifacts.len() - 1]));
        }
    }
    Ok(out)
}

/// `run`, then the CSV tables and `report.json` under `out_dir`.
pub fn run_to_dir(cfg: &Config, opts: &RunOptions, out_dir: &Path) -> std::result::Result<RunReport, Box<dyn std::error::Error>> {
    let mut report = run(cfg, opts)?;
    emit_plots_data(&mut report, out_dir)?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("report.json"), report.to_json())?;
    Ok(report)
}
