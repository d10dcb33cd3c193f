//! Monte-Carlo Dyson and Riemann propagators against a fine midpoint
//! exponential product for H(t) = H0 + g(t)·H1.

use std::sync::Arc;

use serde::Serialize;
use slchs::dyson_mc::{riemann_dyson, segment_count, tds_propagator, tds_sample_times, truncation_envelope, DysonConfig};
use slchs::numerics::{spectral_norm, to_complex, unitary_exp};
use slchs::ou::{extend_path, sample_path, uniform_grid, OUPath, OUProcess};
use slchs::{stats, Complex64, DenseMatrix};

use super::try_par_indices;
use crate::config::{Driver, DysonSpec};
use crate::output::RunContext;
use crate::{CliError, ExperimentConfig};

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    /// "mc" (param = N_k for every order) or "riemann" (param = steps).
    pub method: &'static str,
    pub param: usize,
    pub step: f64,
    pub rms_error: f64,
    pub mean_error: f64,
    pub max_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DysonReport {
    pub driver: Driver,
    pub mc_order: usize,
    pub riemann_order: usize,
    pub segments: usize,
    pub rows: Vec<BenchRow>,
    /// Log-log slope of RMS error against N_k.
    pub mc_slope: f64,
    /// Log-log slope of RMS error against the Riemann step.
    pub riemann_slope: f64,
}

/// Smallest order with (τΛe/(K+1))^{K+1} below `tol`.
pub fn order_for(tau: f64, lambda: f64, tol: f64) -> usize {
    (1..=80).find(|&k| truncation_envelope(tau, lambda, k) < tol).unwrap_or(80)
}

/// The driving scalar g for one repetition.
enum Drive {
    Constant,
    Sin,
    Ou(OUPath),
}

impl Drive {
    fn value(&self, t: f64) -> f64 {
        match self {
            Drive::Constant => 0.0,
            Drive::Sin => t.sin(),
            Drive::Ou(p) => p.value_at(t).map_or(f64::NAN, |v| v[0]),
        }
    }

    fn sup(&self) -> f64 {
        match self {
            Drive::Constant => 0.0,
            Drive::Sin => 1.0,
            Drive::Ou(p) => p.sup_norm(f64::INFINITY),
        }
    }
}

struct Bench<'a> {
    spec: &'a DysonSpec,
    h0: DenseMatrix,
    h1: DenseMatrix,
}

impl Bench<'_> {
    fn h(&self, g: f64) -> DenseMatrix {
        &self.h0 + &self.h1 * Complex64::new(g, 0.0)
    }

    fn reference(&self, drive: &Drive) -> Result<DenseMatrix, CliError> {
        let m = self.spec.reference_steps;
        let dt = self.spec.t_len / m as f64;
        let n = self.h0.nrows();
        let mut u = DenseMatrix::identity(n, n);
        for i in 0..m {
            let mid = self.spec.t_len * (2 * i + 1) as f64 / (2 * m) as f64;
            u = unitary_exp(&self.h(drive.value(mid)), dt)? * u;
        }
        Ok(u)
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<DysonReport, CliError> {
    let spec = cfg.section("dyson", &cfg.dyson)?;
    let n = spec.h0.len();
    let real = |rows: &Vec<Vec<f64>>| slchs::RealMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let bench = Bench { spec, h0: to_complex(&real(&spec.h0)), h1: to_complex(&real(&spec.h1)) };
    let ou = match spec.driver {
        Driver::Ou => Some(Arc::new(OUProcess::scalar(spec.ou_theta, spec.ou_sigma, 0.0)?)),
        _ => None,
    };
    let fine = uniform_grid(spec.t_len, 2 * spec.reference_steps);
    let drive_for = |r: u64| -> Result<Drive, CliError> {
        Ok(match (&spec.driver, &ou) {
            (Driver::Ou, Some(p)) => Drive::Ou(sample_path(p, &fine, cfg.seed, r)?),
            (Driver::Sin, _) => Drive::Sin,
            _ => Drive::Constant,
        })
    };
    let (n0, n1) = (spectral_norm(&bench.h0), spectral_norm(&bench.h1));
    // Segmenting and orders are fixed from the first repetition's drive, with margin.
    let sup0 = drive_for(0)?.sup();
    let lambda = (n0 + 1.25 * sup0 * n1).max(1e-12);
    let segments = segment_count(spec.t_len, lambda);
    let tau = spec.t_len / segments as f64;
    let mc_order = if spec.order > 0 { spec.order } else { order_for(tau, lambda, 1e-12) };
    let riemann_order = if spec.order > 0 { spec.order } else { order_for(spec.t_len, lambda, 1e-13) };
    let per_rep = try_par_indices(spec.reps, |r| {
        let base = drive_for(r)?;
        let reference = bench.reference(&base)?;
        let mut mc = Vec::with_capacity(spec.samples.len());
        for (c, &nk) in spec.samples.iter().enumerate() {
            let dc = DysonConfig::new(mc_order, vec![nk; mc_order], tau, cfg.seed)?;
            let stream = |j: usize| (r << 32) | ((c as u64) << 24) | j as u64;
            let drive = match &base {
                Drive::Ou(p) => {
                    let times: Vec<f64> =
                        (0..segments).flat_map(|j| tds_sample_times(&dc, j as f64 * tau, (j + 1) as f64 * tau, stream(j))).collect();
                    Drive::Ou(extend_path(p, &times)?)
                }
                Drive::Sin => Drive::Sin,
                Drive::Constant => Drive::Constant,
            };
            let h = |t: f64| bench.h(drive.value(t));
            let mut u = DenseMatrix::identity(n, n);
            for j in 0..segments {
                let f = tds_propagator(&h, n, j as f64 * tau, (j + 1) as f64 * tau, &dc, lambda, stream(j))?;
                u = f * u;
            }
            mc.push(spectral_norm(&(u - &reference)));
        }
        let mut rm = Vec::with_capacity(spec.riemann_steps.len());
        for &steps in &spec.riemann_steps {
            let h = |t: f64| bench.h(base.value(t));
            let u = riemann_dyson(&h, n, spec.t_len, riemann_order, spec.t_len / steps as f64)?;
            rm.push(spectral_norm(&(u - &reference)));
        }
        Ok((mc, rm))
    })?;
    let row = |method, param, step, errs: Vec<f64>| BenchRow {
        method,
        param,
        step,
        rms_error: stats::mean(&errs.iter().map(|e| e * e).collect::<Vec<_>>()).sqrt(),
        mean_error: stats::mean(&errs),
        max_error: errs.iter().copied().fold(0.0, f64::max),
    };
    let mut rows = Vec::new();
    for (c, &nk) in spec.samples.iter().enumerate() {
        rows.push(row("mc", nk, tau, per_rep.iter().map(|p| p.0[c]).collect()));
    }
    for (c, &steps) in spec.riemann_steps.iter().enumerate() {
        rows.push(row("riemann", steps, spec.t_len / steps as f64, per_rep.iter().map(|p| p.1[c]).collect()));
    }
    let slope = |method: &str, x: fn(&BenchRow) -> f64| {
        let sel: Vec<&BenchRow> = rows.iter().filter(|r| r.method == method && r.rms_error > 0.0).collect();
        if sel.len() < 2 {
            return f64::NAN;
        }
        stats::log_log_slope(&sel.iter().map(|r| x(r)).collect::<Vec<_>>(), &sel.iter().map(|r| r.rms_error).collect::<Vec<_>>())
    };
    let mc_slope = slope("mc", |r| r.param as f64);
    let riemann_slope = slope("riemann", |r| r.step);
    Ok(DysonReport { driver: spec.driver, mc_order, riemann_order, segments, rows, mc_slope, riemann_slope })
}

pub fn write(r: &DysonReport, ctx: &RunContext) -> Result<(), CliError> {
    ctx.write_csv("dyson_bench.csv", &r.rows)?;
    ctx.write_summary(&serde_json::json!({
        "driver": r.driver,
        "mc_order": r.mc_order,
        "riemann_order": r.riemann_order,
        "segments": r.segments,
        "mc_slope": r.mc_slope,
        "riemann_slope": r.riemann_slope,
    }))
}
