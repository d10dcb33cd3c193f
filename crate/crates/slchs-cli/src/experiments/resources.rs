//! Resource report: the chained LCHS, Duhamel and Dyson sizes and the query
//! count in scaling units (soft-O constants set to 1, not absolute counts).

use serde::Serialize;
use slchs::complexity::{alpha_bound, full_budget, FullBudget, ResourceParams};

use crate::config::ResourceSpec;
use crate::output::RunContext;
use crate::{CliError, ExperimentConfig};

pub fn params(r: &ResourceSpec, eps: f64) -> ResourceParams {
    ResourceParams {
        n: r.n,
        order: r.order,
        t: r.t,
        eps,
        delta: r.delta,
        beta: r.beta,
        f1_norm: r.f1_norm,
        f2_norm: r.f2_norm,
        sigma_f: r.sigma_f,
        lambda_min: r.lambda_min,
        c_alpha: r.c_alpha,
        u_in_norm: r.u_in_norm,
        u_t_norm: r.u_t_norm,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BudgetView {
    pub eps: f64,
    pub alpha_bound: f64,
    pub lambda: f64,
    pub k_max: f64,
    pub h1: f64,
    pub q: usize,
    pub n_u: usize,
    pub abs_weight_sum: f64,
    pub v_bound: f64,
    pub m: usize,
    pub eps_tds: f64,
    pub segments: usize,
    pub eps_segment: f64,
    pub dyson_order: usize,
    pub truncation_in_range: bool,
    pub l_moment: f64,
    pub samples: Vec<usize>,
    pub n_q: f64,
    pub prefactor: f64,
    pub alpha_factor: f64,
    pub time: f64,
    pub log_factor: f64,
}

impl BudgetView {
    pub fn new(p: &ResourceParams, b: &FullBudget) -> Self {
        Self {
            eps: p.eps,
            alpha_bound: alpha_bound(p),
            lambda: b.lambda,
            k_max: b.k_max,
            h1: b.h1,
            q: b.q,
            n_u: b.n_u,
            abs_weight_sum: b.abs_weight_sum,
            v_bound: b.v_bound,
            m: b.m,
            eps_tds: b.eps_tds,
            segments: b.segments,
            eps_segment: b.eps_segment,
            dyson_order: b.dyson_order,
            truncation_in_range: b.truncation_in_range,
            l_moment: b.l_moment,
            samples: b.samples.clone(),
            n_q: b.query.n_q,
            prefactor: b.query.prefactor,
            alpha_factor: b.query.alpha_factor,
            time: b.query.time,
            log_factor: b.query.log_factor,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    pub n_u: usize,
    pub m: usize,
    pub dyson_order: usize,
    pub n_q: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResourcesReport {
    pub budget: BudgetView,
    pub sweep: Vec<SweepRow>,
    pub units: &'static str,
}

pub fn run(cfg: &ExperimentConfig) -> Result<ResourcesReport, CliError> {
    let spec = cfg.section("resources", &cfg.resources)?;
    let p = params(spec, spec.eps);
    let budget = BudgetView::new(&p, &full_budget(&p)?);
    let sweep = spec
        .eps_sweep
        .iter()
        .map(|&e| {
            let b = full_budget(&params(spec, e))?;
            Ok(SweepRow { eps: e, n_u: b.n_u, m: b.m, dyson_order: b.dyson_order, n_q: b.query.n_q })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(ResourcesReport { budget, sweep, units: "scaling units (soft-O constants set to 1)" })
}

pub fn write(r: &ResourcesReport, ctx: &RunContext) -> Result<(), CliError> {
    ctx.write_csv("resources_sweep.csv", &r.sweep)?;
    ctx.write_summary(r)
}
