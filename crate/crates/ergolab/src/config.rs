//! JSON experiment configs and the batch runner behind the CLI.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diagnostics::{
    self, LyapunovSpec, Side,
};
use crate::error::{Error, Result};
use crate::kernels::{run_chain, KernelSpec};
use crate::numerics::RngStream;
use crate::operator::{build_grid_operator, estimate_polynomial_rate, geometric_schedule};
use crate::targets::Target;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "name", rename_all = "kebab-case")]
pub enum TargetSpec {
    PolyTail { r: f64, k: f64 },
    Convex { p: f64, a: f64 },
    SquaredGaussian,
}

impl TargetSpec {
    pub fn build(&self) -> Result<Target> {
        match *self {
            TargetSpec::PolyTail { r, k } => Target::poly_tail(r, k),
            TargetSpec::Convex { p, a } => Target::convex(p, a),
            TargetSpec::SquaredGaussian => Ok(Target::SquaredGaussian),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "name", rename_all = "kebab-case")]
pub enum KernelConfig {
    Rwm { eps: f64 },
    Gwm {
        eps: f64,
        #[serde(default)]
        lazy: f64,
    },
    Counterexample,
}

impl KernelConfig {
    pub fn build(&self) -> Result<KernelSpec> {
        let k = match *self {
            KernelConfig::Rwm { eps } => KernelSpec::Rwm { eps },
            KernelConfig::Gwm { eps, lazy } => KernelSpec::Gwm { eps, lazy },
            KernelConfig::Counterexample => KernelSpec::Counterexample,
        };
        k.validate()?;
        Ok(k)
    }
}

fn default_seed() -> u64 {
    0
}

fn default_leak_tol() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleCfg {
    pub lo: usize,
    pub hi: usize,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateCfg {
    pub target: TargetSpec,
    pub kernel: KernelConfig,
    pub x0: f64,
    #[serde(default)]
    pub p0: Option<i8>,
    pub steps: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TvRateCfg {
    pub target: TargetSpec,
    pub kernel: KernelConfig,
    pub l: f64,
    pub n_cells: usize,
    #[serde(default = "default_leak_tol")]
    pub leak_tol: f64,
    pub schedule: ScheduleCfg,
    pub window: (f64, f64),
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub p0: Option<i8>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftCheckCfg {
    pub target: TargetSpec,
    pub eps: f64,
    pub delta: f64,
    pub beta: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    pub grid: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingCfg {
    pub target: TargetSpec,
    pub eps: f64,
    pub n: usize,
    pub trials: usize,
    pub x0s: Vec<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptanceCfg {
    pub target: TargetSpec,
    pub kernel: KernelConfig,
    pub xs: Vec<f64>,
    #[serde(default)]
    pub p0: Option<i8>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisplacementCfg {
    pub target: TargetSpec,
    pub kernel: KernelConfig,
    pub x0: f64,
    pub horizon: usize,
    pub replicates: usize,
    pub window: (f64, f64),
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub label: Option<String>,
}

fn default_audit_l() -> f64 {
    6.0
}

fn default_audit_n() -> usize {
    1201
}

fn default_audit_xs() -> Vec<f64> {
    vec![3.0, 6.0, 10.0]
}

fn default_audit_drift_x() -> f64 {
    6.0
}

fn default_audit_qvv_x() -> f64 {
    3.0
}

fn default_audit_c() -> f64 {
    0.25
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleAuditCfg {
    #[serde(default = "default_audit_xs")]
    pub acceptance_xs: Vec<f64>,
    #[serde(default = "default_audit_drift_x")]
    pub drift_x: f64,
    #[serde(default = "default_audit_c")]
    pub v_c: f64,
    #[serde(default = "default_audit_qvv_x")]
    pub qvv_x: f64,
    #[serde(default = "default_audit_l")]
    pub l: f64,
    #[serde(default = "default_audit_n")]
    pub n_cells: usize,
    #[serde(default = "default_leak_tol")]
    pub leak_tol: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaA2Cfg {
    pub r: f64,
    pub k_core: f64,
    pub k: f64,
    pub n: usize,
    pub eps: f64,
    pub trials: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HittingTimeCfg {
    pub target: TargetSpec,
    pub x0: f64,
    pub radius: f64,
    pub eps: f64,
    pub trials: usize,
    pub cap: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Clone)]
pub enum ExperimentConfig {
    Simulate(SimulateCfg),
    TvRate(TvRateCfg),
    DriftCheck(DriftCheckCfg),
    Coupling(CouplingCfg),
    Acceptance(AcceptanceCfg),
    Displacement(DisplacementCfg),
    CounterexampleAudit(CounterexampleAuditCfg),
    LemmaA2(LemmaA2Cfg),
    HittingTime(HittingTimeCfg),
}

fn cfg_err(e: serde_json::Error) -> Error {
    Error::Config(e.to_string())
}

impl ExperimentConfig {
    /// Parses a config JSON object whose `experiment` field selects the
    /// experiment type; unknown keys anywhere are rejected.
    pub fn from_value(mut v: Value) -> Result<Self> {
        let obj = v
            .as_object_mut()
            .ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
        let tag = obj
            .remove("experiment")
            .and_then(|t| t.as_str().map(str::to_owned))
            .ok_or_else(|| Error::Config("missing string field `experiment`".into()))?;
        match tag.as_str() {
            "simulate" => Ok(Self::Simulate(serde_json::from_value(v).map_err(cfg_err)?)),
            "tv-rate" => Ok(Self::TvRate(serde_json::from_value(v).map_err(cfg_err)?)),
            "drift-check" => Ok(Self::DriftCheck(serde_json::from_value(v).map_err(cfg_err)?)),
            "coupling" => Ok(Self::Coupling(serde_json::from_value(v).map_err(cfg_err)?)),
            "acceptance" => Ok(Self::Acceptance(serde_json::from_value(v).map_err(cfg_err)?)),
            "displacement" => {
                Ok(Self::Displacement(serde_json::from_value(v).map_err(cfg_err)?))
            }
            "counterexample-audit" => Ok(Self::CounterexampleAudit(
                serde_json::from_value(v).map_err(cfg_err)?,
            )),
            "lemma-a2" => Ok(Self::LemmaA2(serde_json::from_value(v).map_err(cfg_err)?)),
            "hitting-time" => {
                Ok(Self::HittingTime(serde_json::from_value(v).map_err(cfg_err)?))
            }
            other => Err(Error::Config(format!("unknown experiment '{other}'"))),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Simulate(_) => "simulate",
            Self::TvRate(_) => "tv-rate",
            Self::DriftCheck(_) => "drift-check",
            Self::Coupling(_) => "coupling",
            Self::Acceptance(_) => "acceptance",
            Self::Displacement(_) => "displacement",
            Self::CounterexampleAudit(_) => "counterexample-audit",
            Self::LemmaA2(_) => "lemma-a2",
            Self::HittingTime(_) => "hitting-time",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Self::Simulate(c) => c.seed,
            Self::TvRate(c) => c.seed,
            Self::DriftCheck(c) => c.seed,
            Self::Coupling(c) => c.seed,
            Self::Acceptance(c) => c.seed,
            Self::Displacement(c) => c.seed,
            Self::CounterexampleAudit(c) => c.seed,
            Self::LemmaA2(c) => c.seed,
            Self::HittingTime(c) => c.seed,
        }
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            Self::Simulate(c) => c.label.as_deref(),
            Self::TvRate(c) => c.label.as_deref(),
            Self::DriftCheck(c) => c.label.as_deref(),
            Self::Coupling(c) => c.label.as_deref(),
            Self::Acceptance(c) => c.label.as_deref(),
            Self::Displacement(c) => c.label.as_deref(),
            Self::CounterexampleAudit(c) => c.label.as_deref(),
            Self::LemmaA2(c) => c.label.as_deref(),
            Self::HittingTime(c) => c.label.as_deref(),
        }
    }
}

/// Applies a `--set path=value` override to the raw config, with dotted
/// paths into nested objects. Values parse as JSON when possible, strings
/// otherwise.
pub fn apply_override(v: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{assignment}' is not key=value")))?;
    let parsed: Value = serde_json::from_str(raw).unwrap_or(Value::String(raw.to_string()));
    let mut cur = v;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override path '{path}' hits a non-object")))?;
        if i + 1 == parts.len() {
            obj.insert((*part).to_string(), parsed);
            return Ok(());
        }
        cur = obj
            .entry((*part).to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!()
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalarResult {
    pub value: f64,
    /// quadrature tolerance, MC standard error, or leak bound backing the value
    pub error_budget: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ScalarResult {
    fn new(value: f64, error_budget: f64) -> Self {
        ScalarResult { value, error_budget, note: None }
    }

    fn noted(value: f64, error_budget: f64, note: &str) -> Self {
        ScalarResult { value, error_budget, note: Some(note.to_string()) }
    }
}

#[derive(Debug, Serialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub label: String,
    pub seed: u64,
    pub config: Value,
    pub results: BTreeMap<String, ScalarResult>,
    pub artifacts: Vec<String>,
    pub wall_clock_s: f64,
}

const QUAD_BUDGET: f64 = 1e-10;

struct Outputs {
    dir: PathBuf,
    artifacts: Vec<String>,
}

impl Outputs {
    fn new(out_dir: &Path, kind: &str, label: &str) -> Result<Self> {
        let dir = out_dir.join(kind).join(label);
        fs::create_dir_all(&dir)?;
        Ok(Outputs { dir, artifacts: Vec::new() })
    }

    fn write_csv(&mut self, name: &str, header: &str, rows: &[String]) -> Result<()> {
        let path = self.dir.join(name);
        let mut f = fs::File::create(&path)?;
        writeln!(f, "{header}")?;
        for row in rows {
            writeln!(f, "{row}")?;
        }
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let path = self.dir.join(name);
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::Config(e.to_string()))?;
        fs::write(&path, text + "\n")?;
        self.artifacts.push(name.to_string());
        Ok(())
    }
}

/// Loads, validates, and executes a config file, writing artifacts under
/// `out_dir/<experiment>/<label>/`. Returns the record path.
pub fn run(
    config_path: &Path,
    expected_kind: Option<&str>,
    seed_override: Option<u64>,
    out_dir: &Path,
    overrides: &[String],
) -> Result<PathBuf> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", config_path.display())))?;
    let mut raw: Value =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
    for ov in overrides {
        apply_override(&mut raw, ov)?;
    }
    if let Some(seed) = seed_override {
        apply_override(&mut raw, &format!("seed={seed}"))?;
    }
    let echo = raw.clone();
    let cfg = ExperimentConfig::from_value(raw)?;
    if let Some(kind) = expected_kind {
        if cfg.kind() != kind {
            return Err(Error::Config(format!(
                "config is for experiment '{}', invoked as '{kind}'",
                cfg.kind()
            )));
        }
    }
    let label = cfg
        .label()
        .map(str::to_owned)
        .unwrap_or_else(|| format!("seed-{}", cfg.seed()));
    let mut out = Outputs::new(out_dir, cfg.kind(), &label)?;
    let started = Instant::now();
    let results = dispatch(&cfg, &mut out)?;
    let record = ResultRecord {
        experiment: cfg.kind().to_string(),
        label,
        seed: cfg.seed(),
        config: echo,
        results,
        artifacts: out.artifacts.clone(),
        wall_clock_s: started.elapsed().as_secs_f64(),
    };
    let path = out.dir.join("record.json");
    let text =
        serde_json::to_string_pretty(&record).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&path, text + "\n")?;
    Ok(path)
}

type Results = BTreeMap<String, ScalarResult>;

fn dispatch(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Results> {
    match cfg {
        ExperimentConfig::Simulate(c) => run_simulate(c, out),
        ExperimentConfig::TvRate(c) => run_tv_rate(c, out),
        ExperimentConfig::DriftCheck(c) => run_drift_check(c, out),
        ExperimentConfig::Coupling(c) => run_coupling(c, out),
        ExperimentConfig::Acceptance(c) => run_acceptance(c, out),
        ExperimentConfig::Displacement(c) => run_displacement(c, out),
        ExperimentConfig::CounterexampleAudit(c) => run_counterexample_audit(c, out),
        ExperimentConfig::LemmaA2(c) => run_lemma_a2(c, out),
        ExperimentConfig::HittingTime(c) => run_hitting_time(c, out),
    }
}

fn run_simulate(c: &SimulateCfg, out: &mut Outputs) -> Result<Results> {
    let target = c.target.build()?;
    let kernel = c.kernel.build()?;
    let mut rng = RngStream::new(c.seed, 0);
    let traj = run_chain(&kernel, &target, c.x0, c.p0, c.steps, &mut rng)?;
    let mut buf = Vec::new();
    traj.write_csv(&mut buf)?;
    let text = String::from_utf8(buf).expect("csv is utf-8");
    let rows: Vec<String> = text.lines().skip(1).map(str::to_owned).collect();
    out.write_csv("trajectory.csv", "step,x,p,accepted", &rows)?;
    let n = traj.xs.len() as f64;
    let acc_rate = if traj.accepted.is_empty() {
        0.0
    } else {
        traj.accepted.iter().filter(|a| **a).count() as f64 / traj.accepted.len() as f64
    };
    let mean = traj.xs.iter().sum::<f64>() / n;
    let m2 = traj.xs.iter().map(|x| x * x).sum::<f64>() / n;
    let mut r = Results::new();
    let mc = (1.0 / n.sqrt()).min(1.0);
    r.insert("acceptance_rate".into(), ScalarResult::new(acc_rate, mc));
    r.insert("mean_x".into(), ScalarResult::noted(mean, mc, "MC, autocorrelated"));
    r.insert("mean_x2".into(), ScalarResult::noted(m2, mc, "MC, autocorrelated"));
    r.insert("final_x".into(), ScalarResult::new(*traj.xs.last().unwrap(), 0.0));
    Ok(r)
}

fn run_tv_rate(c: &TvRateCfg, out: &mut Outputs) -> Result<Results> {
    let target = c.target.build()?;
    let kernel = c.kernel.build()?;
    let op = build_grid_operator(&kernel, &target, c.l, c.n_cells, c.leak_tol)?;
    let schedule = geometric_schedule(c.schedule.lo, c.schedule.hi, c.schedule.points)?;
    let cell = op.cell_of(c.x0)?;
    let p = if op.lifted { Some(c.p0.unwrap_or(1)) } else { None };
    let (fit, curve) = estimate_polynomial_rate(&op, cell, p, &schedule, c.window)?;
    let rows: Vec<String> = curve
        .iter()
        .map(|pt| format!("{},{},{}", pt.n, pt.tv, pt.leaked_bound))
        .collect();
    out.write_csv("tv_curve.csv", "n,tv,leaked_bound", &rows)?;
    out.write_json("rate.json", &fit)?;
    let leak_budget = curve.last().map(|pt| pt.leaked_bound).unwrap_or(0.0) + op.tail_out;
    let mut r = Results::new();
    r.insert("slope".into(), ScalarResult::noted(fit.slope, leak_budget, "log-log fit"));
    r.insert("r_squared".into(), ScalarResult::new(fit.r_squared, 0.0));
    r.insert("tail_out".into(), ScalarResult::new(op.tail_out, 0.0));
    r.insert("max_leak".into(), ScalarResult::new(op.max_leak, 0.0));
    Ok(r)
}

fn run_drift_check(c: &DriftCheckCfg, out: &mut Outputs) -> Result<Results> {
    let target = c.target.build()?;
    let rep = diagnostics::gwm_polynomial_drift_check(
        &target, c.eps, c.delta, c.beta, c.x_lo, c.x_hi, c.grid,
    )?;
    let v = LyapunovSpec::GuidedPoly { delta: c.delta, beta: c.beta };
    let mut rows = Vec::with_capacity(2 * rep.xs.len());
    for (i, &x) in rep.xs.iter().enumerate() {
        for (p, margin) in [(1i8, rep.margin_plus[i]), (-1, rep.margin_minus[i])] {
            let lv = v.log_v(&target, x, p);
            let ratio = 1.0 + margin * ((rep.alpha_star - 1.0) * lv).exp();
            rows.push(format!("{x},{p},{ratio},{margin}"));
        }
    }
    out.write_csv("drift.csv", "x,p,ratio,margin", &rows)?;
    let mut r = Results::new();
    r.insert("c".into(), ScalarResult::new(rep.c, QUAD_BUDGET));
    r.insert("alpha_star".into(), ScalarResult::new(rep.alpha_star, 0.0));
    r.insert(
        "worst_margin".into(),
        ScalarResult::new(
            rep.margin_plus
                .iter()
                .chain(rep.margin_minus.iter())
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max),
            QUAD_BUDGET,
        ),
    );
    if let Some(x) = rep.first_negative_x {
        r.insert("first_negative_x".into(), ScalarResult::new(x, 0.0));
    }
    if !rep.pass {
        return Err(Error::CheckFailed(
            "drift margin positive somewhere on the grid".into(),
        ));
    }
    Ok(r)
}

fn run_coupling(c: &CouplingCfg, out: &mut Outputs) -> Result<Results> {
    let target = c.target.build()?;
    let mut rows = Vec::with_capacity(c.x0s.len());
    let mut r = Results::new();
    for &x0 in &c.x0s {
        let est = diagnostics::coupled_rwm_lazy_gwm(&target, x0, c.n, c.eps, c.trials, c.seed)?;
        rows.push(format!("{},{},{},{}", est.x0, est.n, est.p_decouple, est.stderr));
        r.insert(
            format!("p_decouple_x0_{x0}"),
            ScalarResult::new(est.p_decouple, est.stderr),
        );
    }
    out.write_csv("coupling.csv", "x0,n,p_decouple,stderr", &rows)?;
    Ok(r)
}

fn run_acceptance(c: &AcceptanceCfg, out: &mut Outputs) -> Result<Results> {
    let target = c.target.build()?;
    let kernel = c.kernel.build()?;
    let mut r = Results::new();
    let mut rows = Vec::with_capacity(c.xs.len());
    for &x in &c.xs {
        let total = diagnostics::total_acceptance(&kernel, &target, x, c.p0)?;
        r.insert(format!("total_x_{x}"), ScalarResult::new(total, QUAD_BUDGET));
        let (away, toward) = match kernel {
            KernelSpec::Rwm { eps } => (
                diagnostics::one_sided_acceptance(&target, eps, x, Side::AwayFromOrigin)?,
                diagnostics::one_sided_acceptance(&target, eps, x, Side::TowardOrigin)?,
            ),
            _ => (f64::NAN, f64::NAN),
        };
        if away.is_finite() {
            r.insert(format!("away_x_{x}"), ScalarResult::new(away, QUAD_BUDGET));
            r.insert(format!("toward_x_{x}"), ScalarResult::new(toward, QUAD_BUDGET));
        }
        rows.push(format!("{x},{total},{away},{toward}"));
    }
    out.write_csv("acceptance.csv", "x,total,away,toward", &rows)?;
    Ok(r)
}

fn run_displacement(c: &DisplacementCfg, out: &mut Outputs) -> Result<Results> {
    let target = c.target.build()?;
    let kernel = c.kernel.build()?;
    let (fit, points) = diagnostics::displacement_exponent(
        &kernel, &target, c.x0, c.horizon, c.replicates, c.window, c.seed,
    )?;
    let rows: Vec<String> = points
        .iter()
        .map(|p| format!("{},{},{}", p.t, p.mean_abs_disp, p.stderr))
        .collect();
    out.write_csv("displacement.csv", "t,mean_abs_disp,stderr", &rows)?;
    let budget = points.iter().map(|p| p.stderr).fold(0.0, f64::max);
    let mut r = Results::new();
    r.insert("slope".into(), ScalarResult::noted(fit.slope, budget, "log-log fit"));
    r.insert("r_squared".into(), ScalarResult::new(fit.r_squared, 0.0));
    Ok(r)
}

fn run_counterexample_audit(c: &CounterexampleAuditCfg, out: &mut Outputs) -> Result<Results> {
    let target = Target::SquaredGaussian;
    let kernel = KernelSpec::Counterexample;
    let v = LyapunovSpec::ExpQuadratic { c: c.v_c };
    let mut r = Results::new();
    let mut rows = Vec::new();
    for &x in &c.acceptance_xs {
        let total = diagnostics::total_acceptance(&kernel, &target, x, None)?;
        r.insert(format!("total_acceptance_x_{x}"), ScalarResult::new(total, QUAD_BUDGET));
        rows.push(format!("{x},{total},,"));
    }
    out.write_csv("acceptance.csv", "x,total,away,toward", &rows)?;
    let ratio = diagnostics::drift_ratio(&kernel, &target, &v, c.drift_x, None)?;
    r.insert(
        format!("drift_ratio_x_{}", c.drift_x),
        ScalarResult::new(ratio, QUAD_BUDGET),
    );
    let qvv = diagnostics::counterexample_qvv_log(&target, &v, c.qvv_x)?;
    r.insert(
        format!("qvv_log_jump_x_{}", c.qvv_x),
        ScalarResult::noted(qvv.log_jump, QUAD_BUDGET, "log domain"),
    );
    let op = build_grid_operator(&kernel, &target, c.l, c.n_cells, c.leak_tol)?;
    r.insert("spectral_gap".into(), ScalarResult::new(op.spectral_gap()?, 0.0));
    Ok(r)
}

fn run_lemma_a2(c: &LemmaA2Cfg, out: &mut Outputs) -> Result<Results> {
    let rep = diagnostics::lemma_a2_audit(c.r, c.k_core, c.k, c.n, c.eps, c.trials, c.seed)?;
    out.write_json("lemma_a2.json", &serde_json::json!({
        "kn": rep.kn,
        "reach": rep.reach,
        "reach_stderr": rep.reach_stderr,
        "pi_a_n": rep.pi_a_n,
        "tv_lower_bound": rep.tv_lower_bound,
        "sub_gaussian_bound": rep.sub_gaussian_bound,
    }))?;
    let mut r = Results::new();
    r.insert("reach".into(), ScalarResult::new(rep.reach, rep.reach_stderr));
    r.insert("pi_a_n".into(), ScalarResult::noted(rep.pi_a_n, 0.0, "analytic"));
    r.insert(
        "tv_lower_bound".into(),
        ScalarResult::new(rep.tv_lower_bound, rep.reach_stderr),
    );
    r.insert(
        "sub_gaussian_bound".into(),
        ScalarResult::noted(rep.sub_gaussian_bound, 0.0, "analytic"),
    );
    Ok(r)
}

fn run_hitting_time(c: &HittingTimeCfg, out: &mut Outputs) -> Result<Results> {
    let target = c.target.build()?;
    let rep = diagnostics::hitting_time_ratio(
        &target, c.x0, c.radius, c.eps, c.trials, c.cap, c.seed,
    )?;
    out.write_json("hitting.json", &serde_json::json!({
        "ratio": rep.ratio,
        "rwm_mean": rep.rwm_mean,
        "gwm_mean": rep.gwm_mean,
        "rwm_excluded": rep.rwm_excluded,
        "gwm_excluded": rep.gwm_excluded,
    }))?;
    let mc = rep.ratio / (c.trials as f64).sqrt();
    let mut r = Results::new();
    r.insert("ratio".into(), ScalarResult::new(rep.ratio, mc));
    r.insert("rwm_mean_steps".into(), ScalarResult::new(rep.rwm_mean, 0.0));
    r.insert("gwm_mean_steps".into(), ScalarResult::new(rep.gwm_mean, 0.0));
    Ok(r)
}
