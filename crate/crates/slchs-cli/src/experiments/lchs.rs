//! End-to-end solves: SLCHS on seeded paths against the RK4 reference, with
//! the combined Carleman + LCHS budget per run.

use serde::Serialize;
use slchs::lchs::{solve_slchs, EngineKind, SlchsConfig, SlchsDiagnostics, SolveStatus};
use slchs::quadratic_sde::integrate_reference_to;

use super::tail::BoundSetup;
use super::try_par_indices;
use crate::output::RunContext;
use crate::{CliError, EngineName, ExperimentConfig};

#[derive(Debug, Clone, Serialize)]
pub struct LchsRunRow {
    pub run: u64,
    pub solved: bool,
    /// ‖x_T − reference‖; NaN when the path failed the stability predicate.
    pub error: f64,
    /// √ of the pathwise lifted Carleman bound at T.
    pub carleman_bound: f64,
    pub lchs_budget: f64,
    pub combined: f64,
    pub within: bool,
    pub imag_norm: f64,
    pub node_count: usize,
    pub segments: usize,
    pub dyson_order: usize,
    pub m_duhamel: usize,
    pub samples_capped: bool,
    pub sup_f0: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LchsReport {
    pub engine: EngineName,
    pub rows: Vec<LchsRunRow>,
    pub runs: usize,
    pub within: usize,
    /// Runs needed for the (1 − δ) criterion.
    pub required: usize,
    pub pass: bool,
    pub first: Option<DiagnosticsView>,
}

/// The size choices of one run, for the summary.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsView {
    pub lift_dim: usize,
    pub beta: f64,
    pub k_max: f64,
    pub h1: f64,
    pub q: usize,
    pub node_count: usize,
    pub abs_weight_sum: f64,
    pub lambda_h1: f64,
    pub eps_tds: f64,
    pub v_bound: f64,
    pub m_duhamel: usize,
    pub m_duhamel_sufficient: usize,
    pub segments: usize,
    pub dyson_order: usize,
    pub truncation_in_range: bool,
    pub samples_sufficient: Vec<usize>,
    pub samples_used: Vec<usize>,
    pub lambda_l: f64,
    pub lambda_h: f64,
    pub engine_truncation: f64,
    pub lchs_budget: f64,
}

impl From<&SlchsDiagnostics> for DiagnosticsView {
    fn from(d: &SlchsDiagnostics) -> Self {
        Self {
            lift_dim: d.lift_dim,
            beta: d.beta,
            k_max: d.k_max,
            h1: d.h1,
            q: d.q,
            node_count: d.node_count,
            abs_weight_sum: d.abs_weight_sum,
            lambda_h1: d.lambda_h1,
            eps_tds: d.eps_tds,
            v_bound: d.v_bound,
            m_duhamel: d.m_duhamel,
            m_duhamel_sufficient: d.m_duhamel_sufficient,
            segments: d.segments,
            dyson_order: d.dyson_order,
            truncation_in_range: d.truncation_in_range,
            samples_sufficient: d.samples_sufficient.clone(),
            samples_used: d.samples_used.clone(),
            lambda_l: d.lambda_l,
            lambda_h: d.lambda_h,
            engine_truncation: d.engine_truncation,
            lchs_budget: d.lchs_budget,
        }
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<LchsReport, CliError> {
    let spec = cfg.section("lchs", &cfg.lchs)?;
    let sys = cfg.system()?;
    let t = cfg.t_end()?;
    let engine = cfg.engine.unwrap_or(EngineName::DysonMc);
    let setup = BoundSetup::new(&sys, spec.order, None, cfg.seed)?;
    let per_run = try_par_indices(spec.runs, |r| {
        let mut sc = SlchsConfig::new(spec.order, t, spec.eps, spec.delta, cfg.seed, EngineKind::from(engine));
        sc.path_index = r;
        sc.beta = spec.beta;
        sc.h1_rule = spec.h1_rule();
        sc.sample_cap = spec.sample_cap;
        sc.duhamel_cap = spec.duhamel_cap;
        sc.fold_conjugate = spec.fold_conjugate;
        sc.reference_step = spec.reference_step;
        sc.riemann_step = spec.riemann_step;
        let rec = solve_slchs(&sys, &sc)?;
        let d = &rec.diagnostics;
        let mut row = LchsRunRow {
            run: r,
            solved: d.status == SolveStatus::Solved,
            error: f64::NAN,
            carleman_bound: f64::NAN,
            lchs_budget: d.lchs_budget,
            combined: f64::NAN,
            within: false,
            imag_norm: d.imag_norm,
            node_count: d.node_count,
            segments: d.segments,
            dyson_order: d.dyson_order,
            m_duhamel: d.m_duhamel,
            samples_capped: d.samples_capped,
            sup_f0: d.sup_f0,
        };
        if let Some(x) = &rec.x_t {
            let (traj, fine) = integrate_reference_to(&sys, &rec.path, t, spec.reference_dt)?;
            let chi = setup.chi(&fine, t)?;
            row.error = (x - traj.last()).norm();
            row.carleman_bound = setup.pathwise(t, chi, fine.sup_norm(t))?.sqrt();
            row.combined = row.carleman_bound + row.lchs_budget;
            row.within = row.error <= row.combined;
        }
        Ok((row, (r == 0).then(|| DiagnosticsView::from(d))))
    })?;
    let first = per_run.first().and_then(|p| p.1.clone());
    let rows: Vec<LchsRunRow> = per_run.into_iter().map(|p| p.0).collect();
    let within = rows.iter().filter(|r| r.within).count();
    let required = ((1.0 - spec.delta) * spec.runs as f64 - 1e-9).ceil() as usize;
    Ok(LchsReport { engine, runs: rows.len(), within, required, pass: within >= required, rows, first })
}

pub fn write(r: &LchsReport, ctx: &RunContext) -> Result<(), CliError> {
    ctx.write_csv("lchs_runs.csv", &r.rows)?;
    ctx.write_summary(&serde_json::json!({
        "engine": r.engine,
        "runs": r.runs,
        "within": r.within,
        "required": r.required,
        "pass": r.pass,
        "first_run": r.first,
    }))
}
