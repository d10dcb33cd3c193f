//! Pathwise and tail domination of the lifted Carleman error in the identity
//! metric: per-path bounds with each path's own S_tP, then the empirical
//! survival curve with a Clopper–Pearson band against the Weibull bound.

use serde::Serialize;
use slchs::carleman::{build_lift, truncation_error, CarlemanLift};
use slchs::ou::{sample_path, uniform_grid, OUPath};
use slchs::quadratic_sde::{prepare_path, LyapunovData, QuadraticSystem};
use slchs::tail_bounds::{
    c_pb_estimate, estimate_chi, geometric_grid, lifted_f2_norm, lifted_metric, pathwise_bound, q_star_p, summarize_tail,
    weibull_level, weibull_tail, PathTailRecord, TailBoundParams,
};
use slchs::{stats, Error, LyapunovMetric};

use super::{check_indices, clopper_pearson_upper, identity_lyapunov, try_par_indices};
use crate::output::RunContext;
use crate::{CliError, ExperimentConfig};

/// Stream offset for the pilot paths that estimate E S and χ.
const PILOT_SEED: u64 = 0x5049_4c4f_5400;

#[derive(Debug, Clone, Serialize)]
pub struct TailPathRow {
    pub path: u64,
    pub diverged: bool,
    /// ‖η(T)‖²_{P_N}.
    pub eta_sq: f64,
    /// sup_{[0,T]} ‖F0‖_P on the integration grid.
    pub s_tp: f64,
    pub chi: f64,
    /// Largest measured/bound ratio over the checked times.
    pub max_ratio: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveRow {
    pub delta: f64,
    pub exceed: usize,
    pub survival: f64,
    pub cp_upper: f64,
    pub bound: f64,
    pub checked: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailReport {
    pub order: usize,
    pub rows: Vec<TailPathRow>,
    pub curve: Vec<CurveRow>,
    pub lift_norm_a: f64,
    pub chi_p: f64,
    pub q_star_p: f64,
    pub c_pb: f64,
    pub e_s_tp: f64,
    pub gamma: f64,
    pub kappa_p: f64,
    pub r_p: f64,
    pub delta_0: f64,
    pub weibull_c: f64,
    pub pathwise_checks: usize,
    pub pathwise_violations: usize,
    pub n_diverged: usize,
    pub valid: bool,
    pub dominated: bool,
}

/// Bound constants shared by the tail experiment and the end-to-end budget.
pub struct BoundSetup {
    pub lift: CarlemanLift,
    pub lyap: LyapunovData,
    pub lifted: LyapunovMetric,
    pub lift_norm_a: f64,
    pub q_star_p: f64,
    pub c_pb: f64,
}

impl BoundSetup {
    pub fn new(sys: &QuadraticSystem, order: usize, gamma: Option<f64>, seed: u64) -> Result<Self, CliError> {
        let metric = LyapunovMetric::identity(sys.n);
        let lift = build_lift(sys, order)?;
        let lyap = identity_lyapunov(sys, gamma, seed)?;
        let lifted = lifted_metric(&metric, &lift);
        let lift_norm_a = lifted_f2_norm(&lift, &metric)?;
        // Q* only enters the tail; keep it positive for Σ = 0.
        let q = q_star_p(&metric, &sys.ou, None)?.max(f64::MIN_POSITIVE);
        let c_pb = c_pb_estimate(sys, &metric, 2000, seed);
        Ok(Self { lift, lyap, lifted, lift_norm_a, q_star_p: q, c_pb })
    }

    /// χ from the forcing values of `path` up to `t`.
    pub fn chi(&self, path: &OUPath, t: f64) -> Result<f64, CliError> {
        let vals: Vec<_> = path.times.iter().zip(&path.values).filter(|(s, _)| **s <= t * (1.0 + 1e-12)).map(|(_, v)| v.clone()).collect();
        Ok(estimate_chi(&self.lift, &self.lifted, &vals)?)
    }

    pub fn params(&self, t: f64, chi: f64, e_s: f64) -> Result<TailBoundParams, CliError> {
        Ok(TailBoundParams::new(self.lyap.clone(), self.lift.order, t, chi, self.q_star_p, e_s, self.c_pb)?)
    }

    /// Φ_t²‖A‖²(a_t + b_t S²)^{N+1} at time t.
    pub fn pathwise(&self, t: f64, chi: f64, s: f64) -> Result<f64, CliError> {
        Ok(pathwise_bound(&self.params(t, chi, 0.0)?, self.lift_norm_a, s))
    }
}

pub fn steps_for(t: f64, dt: f64) -> usize {
    ((t / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

pub fn run(cfg: &ExperimentConfig) -> Result<TailReport, CliError> {
    let spec = cfg.section("tail", &cfg.tail)?;
    let sys = cfg.system()?;
    let t = cfg.t_end()?;
    let setup = BoundSetup::new(&sys, spec.order, spec.gamma, cfg.seed)?;
    let metric = LyapunovMetric::identity(sys.n);
    let grid = uniform_grid(t, steps_for(t, spec.dt_max));
    let pilot = try_par_indices(spec.pilot_paths, |i| {
        let p = sample_path(&sys.ou, &grid, cfg.seed ^ PILOT_SEED, i)?;
        let fine = prepare_path(&p, t, spec.dt_max)?;
        Ok((fine.sup_norm(t), setup.chi(&fine, t)?))
    })?;
    let e_s = stats::mean(&pilot.iter().map(|p| p.0).collect::<Vec<_>>());
    let chi_p = pilot.iter().map(|p| p.1).fold(0.0, f64::max);
    let per_path = try_par_indices(spec.paths, |i| {
        let path = sample_path(&sys.ou, &grid, cfg.seed, i)?;
        let (te, fine) = match truncation_error(&sys, &setup.lift, &path, t, spec.dt_max, &metric) {
            Ok(v) => v,
            Err(Error::Divergence { .. }) => {
                return Ok(TailPathRow { path: i, diverged: true, eta_sq: f64::NAN, s_tp: f64::NAN, chi: f64::NAN, max_ratio: f64::NAN, violations: 0 })
            }
            Err(e) => return Err(e.into()),
        };
        let chi = setup.chi(&fine, t)?;
        let (mut max_ratio, mut violations) = (0.0f64, 0);
        for k in check_indices(te.times.len() - 1, spec.pathwise_times) {
            let tk = te.times[k];
            let bound = setup.pathwise(tk, chi, fine.sup_norm(tk))?;
            let measured = te.p_norm[k] * te.p_norm[k];
            max_ratio = max_ratio.max(measured / bound);
            violations += (measured > bound) as usize;
        }
        let eta = te.p_norm.last().copied().unwrap_or(0.0);
        Ok(TailPathRow { path: i, diverged: false, eta_sq: eta * eta, s_tp: fine.sup_norm(t), chi, max_ratio, violations })
    })?;
    let params = setup.params(t, chi_p, e_s)?;
    let a = setup.lift_norm_a;
    let w0 = weibull_tail(&params, a, 0.0);
    let valid_eta: Vec<f64> = per_path.iter().filter(|r| !r.diverged).map(|r| r.eta_sq).collect();
    let n = per_path.len();
    let med = stats::median(&valid_eta);
    let top = weibull_level(w0.c, spec.order, 10.0 / n as f64);
    // One point at the median for the bulk; the rest where the bound applies.
    let deltas = if med > 0.0 && med < w0.delta_0 && w0.delta_0 < top && spec.points >= 3 {
        let mut d = vec![med];
        d.extend(geometric_grid(w0.delta_0, top, spec.points - 1)?);
        d
    } else {
        let lo = if med > 0.0 { med.min(w0.delta_0) } else { w0.delta_0 };
        geometric_grid(lo, top.max(lo * 10.0), spec.points)?
    };
    let records: Vec<PathTailRecord> =
        per_path.iter().map(|r| PathTailRecord { index: r.path, eta_sq: r.eta_sq, s_tp: r.s_tp, diverged: r.diverged }).collect();
    let summary = summarize_tail(&records, &deltas, w0.delta_0, |d| weibull_tail(&params, a, d).prob_bound, |k, m| clopper_pearson_upper(k, m, 0.95))?;
    let curve = (0..deltas.len())
        .map(|j| CurveRow {
            delta: summary.deltas[j],
            exceed: summary.exceed_counts[j],
            survival: summary.survival[j],
            cp_upper: summary.cp_upper[j],
            bound: summary.bound[j],
            checked: summary.deltas[j] >= w0.delta_0,
        })
        .collect();
    Ok(TailReport {
        order: spec.order,
        pathwise_checks: per_path.iter().filter(|r| !r.diverged).count() * check_indices(grid.len() - 1, spec.pathwise_times).len(),
        pathwise_violations: per_path.iter().map(|r| r.violations).sum(),
        rows: per_path,
        curve,
        lift_norm_a: a,
        chi_p,
        q_star_p: setup.q_star_p,
        c_pb: setup.c_pb,
        e_s_tp: e_s,
        gamma: setup.lyap.gamma,
        kappa_p: setup.lyap.kappa_p,
        r_p: setup.lyap.r_p,
        delta_0: w0.delta_0,
        weibull_c: w0.c,
        n_diverged: summary.n_diverged,
        valid: summary.valid,
        dominated: summary.dominated,
    })
}

pub fn write(r: &TailReport, ctx: &RunContext) -> Result<(), CliError> {
    ctx.write_csv("tail_paths.csv", &r.rows)?;
    ctx.write_csv("tail_curve.csv", &r.curve)?;
    ctx.write_summary(&serde_json::json!({
        "order": r.order,
        "lift_norm_a": r.lift_norm_a,
        "chi_p": r.chi_p,
        "q_star_p": r.q_star_p,
        "c_pb": r.c_pb,
        "e_s_tp": r.e_s_tp,
        "gamma": r.gamma,
        "kappa_p": r.kappa_p,
        "r_p": r.r_p,
        "delta_0": r.delta_0,
        "weibull_c": r.weibull_c,
        "pathwise_checks": r.pathwise_checks,
        "pathwise_violations": r.pathwise_violations,
        "n_diverged": r.n_diverged,
        "valid": r.valid,
        "dominated": r.dominated,
    }))
}
