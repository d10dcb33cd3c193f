//! Experiment configuration: one strict TOML file, matrices as nested arrays.
//!
//! Unknown keys are rejected at parse time; shapes and ranges are checked by
//! [`ExperimentConfig::validate`] so every module precondition fails at load.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use slchs::lchs::{EngineKind, H1Rule};
use slchs::ou::OUProcess;
use slchs::quadratic_sde::QuadraticSystem;
use slchs::{RealMatrix, RealVector};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum EngineName {
    Reference,
    DysonMc,
    Riemann,
}

impl From<EngineName> for EngineKind {
    fn from(e: EngineName) -> Self {
        match e {
            EngineName::Reference => EngineKind::Reference,
            EngineName::DysonMc => EngineKind::DysonMc,
            EngineName::Riemann => EngineKind::Riemann,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine: Option<EngineName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ou_stats: Option<OuStatsSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carleman: Option<CarlemanSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<TailSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lchs: Option<LchsSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dyson: Option<DysonSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resources: Option<ResourceSpec>,
}

/// dx/dt = F2 x⊗x + F1 x + F0(t), with F0 an OU process dF0 = −Θ F0 dt + Σ dW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub f1: Vec<Vec<f64>>,
    /// n×n² rows; column i·n + j multiplies x_i x_j.
    pub f2: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub x_init: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f0_init: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuStatsSpec {
    #[serde(default = "d_ou_paths")]
    pub paths: usize,
    /// Uniform grid steps on [0, T].
    #[serde(default = "d_ou_steps")]
    pub steps: usize,
    /// Evenly spaced grid times at which moments are compared.
    #[serde(default = "d_check_times")]
    pub check_times: usize,
    #[serde(default = "d_sup_paths")]
    pub sup_paths: usize,
    #[serde(default = "d_sup_grid")]
    pub sup_grid: usize,
    /// Threshold x* for the norm tail bounds; 0 picks 2√tr C(T).
    #[serde(default)]
    pub x_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarlemanSpec {
    #[serde(default = "d_orders")]
    pub orders: Vec<usize>,
    #[serde(default = "d_carleman_paths")]
    pub paths: usize,
    #[serde(default = "d_dt_max")]
    pub dt_max: f64,
    /// Also run the Σ = 0 system against the deterministic first-block bound.
    #[serde(default = "d_true")]
    pub deterministic_check: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailSpec {
    #[serde(default = "d_order")]
    pub order: usize,
    #[serde(default = "d_tail_paths")]
    pub paths: usize,
    #[serde(default = "d_dt_max")]
    pub dt_max: f64,
    /// Points of the Δ grid.
    #[serde(default = "d_points")]
    pub points: usize,
    /// Lyapunov γ; defaults to |μ_P + β_P|.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Paths for E S and χ, independent of the measured paths.
    #[serde(default = "d_sup_paths")]
    pub pilot_paths: usize,
    /// Grid times per path at which the pathwise bound is checked.
    #[serde(default = "d_check_times")]
    pub pathwise_times: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum H1RuleName {
    Threshold,
    Expected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LchsSpec {
    #[serde(default = "d_order")]
    pub order: usize,
    #[serde(default = "d_beta")]
    pub beta: f64,
    #[serde(default = "d_eps")]
    pub eps: f64,
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default = "d_runs")]
    pub runs: usize,
    /// Per-order cap on the Monte-Carlo Dyson sample counts.
    #[serde(default = "d_sample_cap")]
    pub sample_cap: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duhamel_cap: Option<usize>,
    /// Evaluate only k > 0 nodes and take 2·Re (valid for real data).
    #[serde(default = "d_true")]
    pub fold_conjugate: bool,
    #[serde(default = "d_h1_rule")]
    pub h1_rule: H1RuleName,
    /// Step of the RK4 reference the LCHS result is compared against.
    #[serde(default = "d_reference_dt")]
    pub reference_dt: f64,
    /// Step of the exponential-product LCHS engine.
    #[serde(default = "d_engine_step")]
    pub reference_step: f64,
    /// Node spacing of the Riemann engine.
    #[serde(default = "d_riemann_step")]
    pub riemann_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Driver {
    Constant,
    Sin,
    Ou,
}

/// H(t) = H0 + g(t)·H1 with g ∈ {0, sin t, scalar OU path}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DysonSpec {
    pub h0: Vec<Vec<f64>>,
    pub h1: Vec<Vec<f64>>,
    pub driver: Driver,
    #[serde(default = "d_one")]
    pub ou_theta: f64,
    #[serde(default = "d_one")]
    pub ou_sigma: f64,
    #[serde(default = "d_one")]
    pub t_len: f64,
    /// Truncation order; 0 picks one with envelope below 1e-12.
    #[serde(default)]
    pub order: usize,
    #[serde(default = "d_samples")]
    pub samples: Vec<usize>,
    #[serde(default = "d_reps")]
    pub reps: usize,
    #[serde(default = "d_riemann_steps")]
    pub riemann_steps: Vec<usize>,
    /// Midpoint exponential steps of the reference propagator.
    #[serde(default = "d_reference_steps")]
    pub reference_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceSpec {
    pub n: usize,
    pub order: usize,
    pub t: f64,
    pub eps: f64,
    pub delta: f64,
    pub beta: f64,
    pub f1_norm: f64,
    pub f2_norm: f64,
    pub sigma_f: f64,
    pub lambda_min: f64,
    #[serde(default = "d_one")]
    pub c_alpha: f64,
    #[serde(default = "d_one")]
    pub u_in_norm: f64,
    #[serde(default = "d_one")]
    pub u_t_norm: f64,
    /// Extra ε values for the CSV sweep.
    #[serde(default)]
    pub eps_sweep: Vec<f64>,
}

fn d_ou_paths() -> usize {
    10_000
}
fn d_ou_steps() -> usize {
    100
}
fn d_check_times() -> usize {
    5
}
fn d_sup_paths() -> usize {
    200
}
fn d_sup_grid() -> usize {
    200
}
fn d_orders() -> Vec<usize> {
    vec![1, 2, 3, 4]
}
fn d_carleman_paths() -> usize {
    200
}
fn d_dt_max() -> f64 {
    0.01
}
fn d_true() -> bool {
    true
}
fn d_order() -> usize {
    2
}
fn d_tail_paths() -> usize {
    1000
}
fn d_points() -> usize {
    12
}
fn d_beta() -> f64 {
    0.7
}
fn d_eps() -> f64 {
    1e-2
}
fn d_delta() -> f64 {
    0.1
}
fn d_runs() -> usize {
    100
}
fn d_sample_cap() -> usize {
    8
}
fn d_h1_rule() -> H1RuleName {
    H1RuleName::Threshold
}
fn d_reference_dt() -> f64 {
    1e-3
}
fn d_engine_step() -> f64 {
    1e-2
}
fn d_riemann_step() -> f64 {
    1e-3
}
fn d_one() -> f64 {
    1.0
}
fn d_samples() -> Vec<usize> {
    vec![4, 16, 64, 256]
}
fn d_reps() -> usize {
    50
}
fn d_riemann_steps() -> Vec<usize> {
    vec![16, 32, 64, 128, 256]
}
fn d_reference_steps() -> usize {
    4096
}

fn bad(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

fn matrix(field: &str, rows: &[Vec<f64>], r: usize, c: usize) -> Result<RealMatrix, CliError> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(bad(field, format!("expected {r} rows of {c} columns")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(bad(field, "entries must be finite"));
    }
    Ok(RealMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn vector(field: &str, v: &[f64], n: usize) -> Result<RealVector, CliError> {
    if v.len() != n {
        return Err(bad(field, format!("expected {n} entries")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(bad(field, "entries must be finite"));
    }
    Ok(RealVector::from_column_slice(v))
}

fn positive(field: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(field, "must be positive and finite"))
    }
}

fn unit_open(field: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(bad(field, "must lie in (0, 1)"))
    }
}

fn at_least(field: &str, v: usize, min: usize) -> Result<(), CliError> {
    if v >= min {
        Ok(())
    } else {
        Err(bad(field, format!("must be at least {min}")))
    }
}

impl SystemSpec {
    pub fn dim(&self) -> usize {
        self.f1.len()
    }

    pub fn build(&self) -> Result<QuadraticSystem, CliError> {
        let n = self.dim();
        if n == 0 {
            return Err(bad("system.f1", "must be a non-empty square matrix"));
        }
        let f1 = matrix("system.f1", &self.f1, n, n)?;
        let f2 = matrix("system.f2", &self.f2, n, n * n)?;
        let theta = matrix("system.theta", &self.theta, n, n)?;
        let sigma = matrix("system.sigma", &self.sigma, n, n)?;
        let x0 = vector("system.x_init", &self.x_init, n)?;
        let f0 = match &self.f0_init {
            Some(v) => vector("system.f0_init", v, n)?,
            None => RealVector::zeros(n),
        };
        let ou = OUProcess::new(theta, sigma, f0).map_err(|e| bad("system.theta", e))?;
        QuadraticSystem::new(f1, f2, x0, Arc::new(ou)).map_err(|e| bad("system", e))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| unreachable!("config serializes: {e}"))
    }

    /// SHA-256 of the serialized resolved config, without the output
    /// directory and thread count (neither changes the results).
    pub fn hash(&self) -> String {
        format!("{:x}", Sha256::digest(self.portable().to_toml().as_bytes()))
    }

    /// The config without the output directory and thread count.
    pub fn portable(&self) -> Self {
        Self { out: None, threads: None, ..self.clone() }
    }

    pub fn t_end(&self) -> Result<f64, CliError> {
        self.t_end.ok_or_else(|| bad("t_end", "required by this subcommand"))
    }

    pub fn system(&self) -> Result<QuadraticSystem, CliError> {
        self.system.as_ref().ok_or_else(|| bad("system", "required by this subcommand"))?.build()
    }

    pub fn section<'a, T>(&self, name: &str, s: &'a Option<T>) -> Result<&'a T, CliError> {
        s.as_ref().ok_or_else(|| bad(name, "section required by this subcommand"))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(t) = self.threads {
            at_least("threads", t, 1)?;
        }
        if let Some(t) = self.t_end {
            positive("t_end", t)?;
        }
        if let Some(s) = &self.system {
            s.build()?;
        }
        if let Some(o) = &self.ou_stats {
            at_least("ou_stats.paths", o.paths, 2)?;
            at_least("ou_stats.steps", o.steps, 1)?;
            at_least("ou_stats.check_times", o.check_times, 1)?;
            if o.check_times > o.steps {
                return Err(bad("ou_stats.check_times", "cannot exceed ou_stats.steps"));
            }
            at_least("ou_stats.sup_paths", o.sup_paths, 100)?;
            at_least("ou_stats.sup_grid", o.sup_grid, 100)?;
            if !(o.x_star >= 0.0) {
                return Err(bad("ou_stats.x_star", "must be non-negative"));
            }
        }
        if let Some(c) = &self.carleman {
            if c.orders.is_empty() || c.orders.contains(&0) {
                return Err(bad("carleman.orders", "must be a non-empty list of positive orders"));
            }
            at_least("carleman.paths", c.paths, 1)?;
            positive("carleman.dt_max", c.dt_max)?;
        }
        if let Some(t) = &self.tail {
            at_least("tail.order", t.order, 1)?;
            at_least("tail.paths", t.paths, 1)?;
            positive("tail.dt_max", t.dt_max)?;
            at_least("tail.points", t.points, 2)?;
            if let Some(g) = t.gamma {
                positive("tail.gamma", g)?;
            }
            at_least("tail.pilot_paths", t.pilot_paths, 1)?;
            at_least("tail.pathwise_times", t.pathwise_times, 1)?;
        }
        if let Some(l) = &self.lchs {
            at_least("lchs.order", l.order, 1)?;
            unit_open("lchs.beta", l.beta)?;
            unit_open("lchs.eps", l.eps)?;
            unit_open("lchs.delta", l.delta)?;
            at_least("lchs.runs", l.runs, 1)?;
            at_least("lchs.sample_cap", l.sample_cap, 1)?;
            if let Some(m) = l.duhamel_cap {
                at_least("lchs.duhamel_cap", m, 1)?;
            }
            positive("lchs.reference_dt", l.reference_dt)?;
            positive("lchs.reference_step", l.reference_step)?;
            positive("lchs.riemann_step", l.riemann_step)?;
        }
        if let Some(d) = &self.dyson {
            let n = d.h0.len();
            if n == 0 {
                return Err(bad("dyson.h0", "must be a non-empty square matrix"));
            }
            for (name, m) in [("dyson.h0", &d.h0), ("dyson.h1", &d.h1)] {
                let a = matrix(name, m, n, n)?;
                if (&a - a.transpose()).norm() > 1e-12 * a.norm().max(1.0) {
                    return Err(bad(name, "must be symmetric"));
                }
            }
            positive("dyson.t_len", d.t_len)?;
            positive("dyson.ou_theta", d.ou_theta)?;
            if !(d.ou_sigma >= 0.0) {
                return Err(bad("dyson.ou_sigma", "must be non-negative"));
            }
            if d.samples.is_empty() || d.samples.contains(&0) {
                return Err(bad("dyson.samples", "must be a non-empty list of positive counts"));
            }
            at_least("dyson.reps", d.reps, 2)?;
            at_least("dyson.reference_steps", d.reference_steps, 1)?;
            if d.riemann_steps.iter().any(|&s| s == 0 || (2 * d.reference_steps) % s != 0) {
                return Err(bad("dyson.riemann_steps", "each must be positive and divide 2·reference_steps"));
            }
        }
        if let Some(r) = &self.resources {
            let p = crate::experiments::resources::params(r, r.eps);
            p.validate().map_err(|e| bad("resources", e))?;
            if r.eps_sweep.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
                return Err(bad("resources.eps_sweep", "values must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}

impl LchsSpec {
    pub fn h1_rule(&self) -> H1Rule {
        match self.h1_rule {
            H1RuleName::Threshold => H1Rule::Threshold,
            H1RuleName::Expected => H1Rule::Expected,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 7
t_end = 1.0

[system]
f1 = [[-1.0, 0.0], [0.0, -1.0]]
f2 = [[0.0, 0.2, 0.0, 0.0], [0.0, 0.0, 0.0, -0.2]]
theta = [[1.0, 0.0], [0.0, 1.0]]
sigma = [[0.03, 0.0], [0.0, 0.03]]
x_init = [0.2, -0.2]

[lchs]
eps = 0.01
"#;

    #[test]
    fn round_trip_is_identical() {
        let a = ExperimentConfig::from_toml(SAMPLE).unwrap();
        let b = ExperimentConfig::from_toml(&a.to_toml()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_toml(), b.to_toml());
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.lchs.as_ref().unwrap().runs, 100);
    }

    #[test]
    fn rejects_unknown_and_misshaped_fields() {
        let unknown = SAMPLE.replace("eps = 0.01", "eps = 0.01\nepsilon = 3");
        let e = ExperimentConfig::from_toml(&unknown).unwrap_err().to_string();
        assert!(e.contains("epsilon"), "{e}");
        let shape = SAMPLE.replace("x_init = [0.2, -0.2]", "x_init = [0.2]");
        let e = ExperimentConfig::from_toml(&shape).unwrap_err().to_string();
        assert!(e.contains("system.x_init"), "{e}");
        let range = SAMPLE.replace("eps = 0.01", "eps = 2.0");
        assert!(ExperimentConfig::from_toml(&range).unwrap_err().to_string().contains("lchs.eps"));
        let drift = SAMPLE.replace("theta = [[1.0, 0.0], [0.0, 1.0]]", "theta = [[-1.0, 0.0], [0.0, 1.0]]");
        assert!(ExperimentConfig::from_toml(&drift).unwrap_err().to_string().contains("system.theta"));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::from_toml(SAMPLE).unwrap();
        let mut b = a.clone();
        b.seed = 8;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let mut c = a.clone();
        c.out = Some("elsewhere".into());
        c.threads = Some(3);
        assert_eq!(a.hash(), c.hash());
    }
}
