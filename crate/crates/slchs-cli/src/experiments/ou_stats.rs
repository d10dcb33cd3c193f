//! Exact OU sampling checks: moments against the analytic mean and
//! covariance, the Itô isometry, supremum statistics and norm tail bounds.

use serde::Serialize;
use slchs::numerics::{integrate_gl, matrix_exp_real};
use slchs::ou::{norm_tail_bounds, sample_path, sup_statistics, uniform_grid};
use slchs::stats;
use slchs::RealVector;

use super::{check_indices, try_par_indices};
use crate::output::RunContext;
use crate::{CliError, ExperimentConfig};

#[derive(Debug, Clone, Serialize)]
pub struct MomentRow {
    pub t: f64,
    /// "mean" (i = j = component) or "cov".
    pub kind: &'static str,
    pub i: usize,
    pub j: usize,
    pub empirical: f64,
    pub analytic: f64,
    pub std_err: f64,
    /// (empirical − analytic)/std_err; 0 when both agree exactly.
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Isometry {
    /// Mean of ‖F0(T) − e^{−ΘT}F0(0)‖² over paths.
    pub empirical: f64,
    /// ∫₀ᵀ ‖e^{−Θs}Σ‖_F² ds.
    pub analytic: f64,
    pub std_err: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailCheck {
    pub x_star: f64,
    pub chebyshev: f64,
    pub markov: f64,
    pub interval_markov: f64,
    /// Empirical P(‖F0(T)‖ < x*).
    pub empirical_at_t: f64,
    /// Empirical P(‖F0(s)‖ < x*) for s uniform on the grid times.
    pub empirical_uniform_time: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OuStatsReport {
    pub paths: usize,
    pub t_end: f64,
    pub moments: Vec<MomentRow>,
    pub max_abs_z: f64,
    pub isometry: Isometry,
    pub mean_sup: f64,
    pub sigma_star_sq: f64,
    pub m_compact_diagnostic: f64,
    pub tail: TailCheck,
}

fn z(emp: f64, ana: f64, se: f64) -> f64 {
    let d = emp - ana;
    if d == 0.0 {
        0.0
    } else {
        d / se
    }
}

/// ∫₀ᵀ ‖e^{−Θs}Σ‖_F² ds by Gauss–Legendre, independent of the covariance code.
pub fn isometry_integral(theta: &slchs::RealMatrix, sigma: &slchs::RealMatrix, t: f64) -> Result<f64, CliError> {
    let err = std::cell::Cell::new(None);
    let v = integrate_gl(
        |s| match matrix_exp_real(&(-theta), s) {
            Ok(e) => (e * sigma).norm_squared(),
            Err(e) => {
                err.set(Some(e));
                0.0
            }
        },
        0.0,
        t,
        64,
        8,
    );
    match err.into_inner() {
        Some(e) => Err(e.into()),
        None => Ok(v),
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<OuStatsReport, CliError> {
    let spec = cfg.section("ou_stats", &cfg.ou_stats)?;
    let sys = cfg.system()?;
    let t = cfg.t_end()?;
    let ou = &sys.ou;
    let n = ou.dim();
    let grid = uniform_grid(t, spec.steps);
    let checks = check_indices(spec.steps, spec.check_times);
    let x_star = if spec.x_star > 0.0 { spec.x_star } else { 2.0 * ou.covariance(t)?.trace().sqrt().max(1e-300) };
    let decay = matrix_exp_real(&(-&ou.theta), t)?;
    // Per path: values at the check times, isometry sample, tail indicators.
    let per_path = try_par_indices(spec.paths, |i| {
        let p = sample_path(ou, &grid, cfg.seed, i)?;
        let vals: Vec<RealVector> = checks.iter().map(|&k| p.values[k].clone()).collect();
        let iso = (&p.values[spec.steps] - &decay * &ou.f0_init).norm_squared();
        let below_t = (p.values[spec.steps].norm() < x_star) as usize;
        let below_any = p.values.iter().skip(1).filter(|v| v.norm() < x_star).count();
        Ok((vals, iso, below_t, below_any))
    })?;
    let mut moments = Vec::new();
    for (c, &k) in checks.iter().enumerate() {
        let tk = grid[k];
        let mean = ou.mean(tk)?;
        let cov = ou.covariance(tk)?;
        for a in 0..n {
            let xs: Vec<f64> = per_path.iter().map(|p| p.0[c][a]).collect();
            let (emp, se) = (stats::mean(&xs), stats::std_err(&xs));
            moments.push(MomentRow { t: tk, kind: "mean", i: a, j: a, empirical: emp, analytic: mean[a], std_err: se, z: z(emp, mean[a], se) });
        }
        for a in 0..n {
            for b in a..n {
                let xs: Vec<f64> = per_path.iter().map(|p| (p.0[c][a] - mean[a]) * (p.0[c][b] - mean[b])).collect();
                let (emp, se) = (stats::mean(&xs), stats::std_err(&xs));
                moments.push(MomentRow { t: tk, kind: "cov", i: a, j: b, empirical: emp, analytic: cov[(a, b)], std_err: se, z: z(emp, cov[(a, b)], se) });
            }
        }
    }
    let iso: Vec<f64> = per_path.iter().map(|p| p.1).collect();
    let analytic = isometry_integral(&ou.theta, &ou.sigma, t)?;
    let (emp, se) = (stats::mean(&iso), stats::std_err(&iso));
    let sup = sup_statistics(ou, t, spec.sup_paths, spec.sup_grid, cfg.seed ^ 0x5355_5053)?;
    let bounds = norm_tail_bounds(ou, t, x_star)?;
    let paths = spec.paths as f64;
    Ok(OuStatsReport {
        paths: spec.paths,
        t_end: t,
        max_abs_z: moments.iter().map(|m| m.z.abs()).fold(0.0, f64::max),
        moments,
        isometry: Isometry { empirical: emp, analytic, std_err: se, z: z(emp, analytic, se) },
        mean_sup: sup.mean_sup_estimate,
        sigma_star_sq: sup.sigma_star_sq_bound,
        m_compact_diagnostic: sup.m_compact_diagnostic,
        tail: TailCheck {
            x_star,
            chebyshev: bounds.chebyshev,
            markov: bounds.markov,
            interval_markov: bounds.interval_markov,
            empirical_at_t: per_path.iter().map(|p| p.2).sum::<usize>() as f64 / paths,
            empirical_uniform_time: per_path.iter().map(|p| p.3).sum::<usize>() as f64 / (paths * spec.steps as f64),
        },
    })
}

pub fn write(r: &OuStatsReport, ctx: &RunContext) -> Result<(), CliError> {
    ctx.write_csv("ou_moments.csv", &r.moments)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        paths: usize,
        t_end: f64,
        max_abs_z: f64,
        isometry: &'a Isometry,
        mean_sup: f64,
        sigma_star_sq: f64,
        m_compact_diagnostic: f64,
        tail: &'a TailCheck,
    }
    ctx.write_summary(&Summary {
        paths: r.paths,
        t_end: r.t_end,
        max_abs_z: r.max_abs_z,
        isometry: &r.isometry,
        mean_sup: r.mean_sup,
        sigma_star_sq: r.sigma_star_sq,
        m_compact_diagnostic: r.m_compact_diagnostic,
        tail: &r.tail,
    })
}
