//! The OU-driven quadratic ODE dx/dt = F2 x⊗x + F1 x + F0(t): reference
//! integration, stationary states and Lyapunov stability quantities.

use alloc::sync::Arc;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{dim, invalid, Error, Result};
use crate::numerics::{
    eigenvalues_real, log_norm_p, max_real_eigenvalue, spectral_norm_real, to_complex,
    LyapunovMetric, RealMatrix, RealVector,
};
use crate::ou::{extend_path, OUPath, OUProcess};
use crate::rng::{self, domain};

/// Trajectories whose Euclidean norm exceeds this are reported as divergent.
pub const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Debug, Clone)]
pub struct QuadraticSystem {
    pub n: usize,
    pub f1: RealMatrix,
    /// n×n² coefficient acting on x⊗x.
    pub f2: RealMatrix,
    pub x_init: RealVector,
    pub ou: Arc<OUProcess>,
}

impl QuadraticSystem {
    pub fn new(f1: RealMatrix, f2: RealMatrix, x_init: RealVector, ou: Arc<OUProcess>) -> Result<Self> {
        let n = f1.nrows();
        if n == 0 || f1.ncols() != n {
            return Err(Error::NotSquare { rows: f1.nrows(), cols: f1.ncols() });
        }
        if f2.nrows() != n || f2.ncols() != n * n {
            return Err(dim("F2 must be n x n^2"));
        }
        if x_init.len() != n || ou.dim() != n {
            return Err(dim("x_init and the OU process must have dimension n"));
        }
        Ok(Self { n, f1, f2, x_init, ou })
    }

    pub fn quadratic(&self, x: &RealVector) -> RealVector {
        &self.f2 * x.kronecker(x)
    }

    /// Right-hand side F2 x⊗x + F1 x + f0.
    pub fn rhs(&self, x: &RealVector, f0: &RealVector) -> RealVector {
        self.quadratic(x) + &self.f1 * x + f0
    }

    pub fn f1_norm(&self) -> f64 {
        spectral_norm_real(&self.f1)
    }

    pub fn f2_norm(&self) -> f64 {
        spectral_norm_real(&self.f2)
    }

    /// Same system with a different initial state.
    pub fn with_initial(&self, x_init: RealVector) -> Result<Self> {
        Self::new(self.f1.clone(), self.f2.clone(), x_init, Arc::clone(&self.ou))
    }
}

/// Sampled solution at the integrator's step times.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<RealVector>,
}

impl Trajectory {
    pub fn last(&self) -> &RealVector {
        self.states.last().unwrap()
    }
}

/// Uniform step grid on [t0, t_end] with steps no longer than `dt_max`.
pub fn step_grid(t0: f64, t_end: f64, dt_max: f64) -> Vec<f64> {
    let steps = (((t_end - t0) / dt_max) - 1e-9).ceil().max(1.0) as usize;
    (0..=steps).map(|i| t0 + (t_end - t0) * i as f64 / steps as f64).collect()
}

/// Step grid plus midpoints: every time at which RK4 reads F0.
pub fn stage_times(steps: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * steps.len());
    for w in steps.windows(2) {
        out.push(w[0]);
        out.push(0.5 * (w[0] + w[1]));
    }
    out.extend(steps.last());
    out
}

/// Extends `path` with every stage time the reference integrator will need on
/// [path start, t_end]. Integrators given the result sample no new points.
pub fn prepare_path(path: &OUPath, t_end: f64, dt_max: f64) -> Result<OUPath> {
    if !(dt_max > 0.0) {
        return Err(invalid("dt_max must be positive"));
    }
    extend_path(path, &stage_times(&step_grid(path.times[0], t_end, dt_max)))
}

pub(crate) fn forcing_at(path: &OUPath, t: f64) -> Result<&RealVector> {
    path.value_at(t).ok_or_else(|| invalid("forcing path lacks a required sample time"))
}

/// Classical RK4 on the uniform grid refined to `dt_max`, with F0 read from
/// the exact OU samples at the stage times. Integrates to the end of `path`.
pub fn integrate_reference(sys: &QuadraticSystem, path: &OUPath, dt_max: f64) -> Result<Trajectory> {
    integrate_reference_to(sys, path, path.end_time(), dt_max).map(|(traj, _)| traj)
}

/// [`integrate_reference`] to an explicit horizon; also returns the extended path.
pub fn integrate_reference_to(
    sys: &QuadraticSystem,
    path: &OUPath,
    t_end: f64,
    dt_max: f64,
) -> Result<(Trajectory, OUPath)> {
    if path.dim() != sys.n {
        return Err(dim("path dimension differs from system"));
    }
    let path = prepare_path(path, t_end, dt_max)?;
    let grid = step_grid(path.times[0], t_end, dt_max);
    let mut x = sys.x_init.clone();
    let mut states = Vec::with_capacity(grid.len());
    states.push(x.clone());
    for w in grid.windows(2) {
        let (t, h) = (w[0], w[1] - w[0]);
        let f_a = forcing_at(&path, t)?;
        let f_m = forcing_at(&path, 0.5 * (w[0] + w[1]))?;
        let f_b = forcing_at(&path, w[1])?;
        let k1 = sys.rhs(&x, f_a);
        let k2 = sys.rhs(&(&x + &k1 * (0.5 * h)), f_m);
        let k3 = sys.rhs(&(&x + &k2 * (0.5 * h)), f_m);
        let k4 = sys.rhs(&(&x + &k3 * h), f_b);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let norm = x.norm();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::Divergence { t: w[1], norm });
        }
        states.push(x.clone());
    }
    Ok((Trajectory { times: grid, states }, path))
}

/// RK4 sub-steps per step in [`integrate_frozen_to`].
pub const FROZEN_SUBSTEPS: usize = 4;

/// RK4 with F0 held at each step's midpoint value, [`FROZEN_SUBSTEPS`]
/// sub-steps per step. This is the ODE the truncated Carleman integrator
/// solves exactly, so differencing the two isolates the truncation error
/// from the O(‖Σ‖·dt) cost of freezing a rough forcing.
pub fn integrate_frozen_to(sys: &QuadraticSystem, path: &OUPath, t_end: f64, dt_max: f64) -> Result<(Trajectory, OUPath)> {
    if path.dim() != sys.n {
        return Err(dim("path dimension differs from system"));
    }
    let path = prepare_path(path, t_end, dt_max)?;
    let grid = step_grid(path.times[0], t_end, dt_max);
    let mut x = sys.x_init.clone();
    let mut states = Vec::with_capacity(grid.len());
    states.push(x.clone());
    for w in grid.windows(2) {
        let h = (w[1] - w[0]) / FROZEN_SUBSTEPS as f64;
        let f = forcing_at(&path, 0.5 * (w[0] + w[1]))?;
        for _ in 0..FROZEN_SUBSTEPS {
            let k1 = sys.rhs(&x, f);
            let k2 = sys.rhs(&(&x + &k1 * (0.5 * h)), f);
            let k3 = sys.rhs(&(&x + &k2 * (0.5 * h)), f);
            let k4 = sys.rhs(&(&x + &k3 * h), f);
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        let norm = x.norm();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::Divergence { t: w[1], norm });
        }
        states.push(x.clone());
    }
    Ok((Trajectory { times: grid, states }, path))
}

/// B1(a): the n²×n matrix with (a+b)⊗² = a⊗² + B1(a) b + b⊗².
pub fn bilinear_b1(a: &RealVector) -> RealMatrix {
    let n = a.len();
    let mut b = RealMatrix::zeros(n * n, n);
    for k in 0..n {
        for i in 0..n {
            b[(i * n + k, k)] += a[i];
            b[(k * n + i, k)] += a[i];
        }
    }
    b
}

#[derive(Debug, Clone)]
pub struct StationaryData {
    pub x_st: RealVector,
    pub residual: f64,
    /// F1 + F2 B1(x_st).
    pub jacobian: RealMatrix,
    pub jac_max_real_eig: f64,
    pub iterations: usize,
}

pub const STATIONARY_TOL: f64 = 1e-12;
pub const STATIONARY_MAX_ITER: usize = 100;

/// Newton's method for F2 x⊗x + F1 x + F0_ref = 0 from `x_guess`.
pub fn stationary_state(sys: &QuadraticSystem, f0_ref: &RealVector, x_guess: &RealVector) -> Result<StationaryData> {
    if f0_ref.len() != sys.n || x_guess.len() != sys.n {
        return Err(dim("F0_ref and x_guess must have length n"));
    }
    if x_guess.iter().any(|v| !v.is_finite()) {
        return Err(invalid("x_guess must be finite"));
    }
    let mut x = x_guess.clone();
    let mut residual = f64::INFINITY;
    for it in 0..=STATIONARY_MAX_ITER {
        let g = sys.rhs(&x, f0_ref);
        residual = g.norm();
        if residual <= STATIONARY_TOL {
            let jacobian = &sys.f1 + &sys.f2 * bilinear_b1(&x);
            let jac_max_real_eig = max_real_eigenvalue(&jacobian)?;
            return Ok(StationaryData { x_st: x, residual, jacobian, jac_max_real_eig, iterations: it });
        }
        if it == STATIONARY_MAX_ITER {
            break;
        }
        let jac = &sys.f1 + &sys.f2 * bilinear_b1(&x);
        let step = jac.lu().solve(&g).ok_or(Error::Singular)?;
        x -= step;
        if x.iter().any(|v| !v.is_finite()) {
            break;
        }
    }
    Err(Error::NoConvergence { iterations: STATIONARY_MAX_ITER, residual })
}

/// J δx + F2 δx⊗δx: the drift of δx = x − x_st.
pub fn perturbation_rhs(sys: &QuadraticSystem, st: &StationaryData, dx: &RealVector) -> RealVector {
    &st.jacobian * dx + sys.quadratic(dx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationMargin {
    pub gershgorin_shift: f64,
    pub still_stable: bool,
}

/// Gershgorin shift 2‖x_approx − x_true‖₁ against the dissipation margin α.
pub fn perturbation_margin(x_st_approx: &RealVector, x_true: &RealVector, alpha: f64) -> Result<PerturbationMargin> {
    if !(alpha > 0.0) {
        return Err(invalid("alpha must be positive"));
    }
    if x_st_approx.len() != x_true.len() {
        return Err(dim("stationary vectors differ in length"));
    }
    let shift = 2.0 * (x_st_approx - x_true).lp_norm(1);
    Ok(PerturbationMargin { gershgorin_shift: shift, still_stable: shift < alpha })
}

/// Where the ‖F0‖_P entering R_P comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum F0NormSource {
    /// ‖F0(0)‖_P.
    Initial,
    /// ‖F0(0)‖_P + 3√tr(P^{1/2} C∞ P^{1/2}) with C∞ the stationary covariance.
    Stationary3Sigma,
    /// Caller-provided bound (e.g. a sampled path supremum).
    Supplied(f64),
}

#[derive(Debug, Clone)]
pub struct LyapunovData {
    pub metric: LyapunovMetric,
    pub mu_p: f64,
    /// Largest Re⟨x, F2 x⊗x⟩_P over the sampled P-unit vectors: a lower estimate of the supremum.
    pub beta_p_estimate: f64,
    pub beta_samples: usize,
    pub gamma: f64,
    pub kappa_p: f64,
    pub f2_norm_p: f64,
    pub x0_norm_p: f64,
    pub f0_norm_p: f64,
    pub f0_norm_source: F0NormSource,
    pub r_p: f64,
}

pub fn f0_norm_p(sys: &QuadraticSystem, metric: &LyapunovMetric, source: F0NormSource) -> Result<f64> {
    let initial = metric.vec_norm_real(&sys.ou.f0_init)?;
    Ok(match source {
        F0NormSource::Initial => initial,
        F0NormSource::Stationary3Sigma => {
            let c = to_complex(&sys.ou.stationary_covariance()?);
            let tr = (&metric.p_half * c * &metric.p_half).trace().re.max(0.0);
            initial + 3.0 * tr.sqrt()
        }
        F0NormSource::Supplied(v) => v,
    })
}

/// Sampled β_P: max of Re⟨x, F2 x⊗x⟩_P over random x with ‖x‖_P = 1.
pub fn beta_p_estimate(sys: &QuadraticSystem, metric: &LyapunovMetric, samples: usize, seed: u64) -> f64 {
    let n = sys.n;
    let p = metric.p_real();
    let ph_inv = crate::numerics::real_part(&metric.p_half_inv);
    let mut rng = rng::stream(seed, domain::BETA_SAMPLES, 0);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..samples {
        let z = RealVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let norm = z.norm();
        if norm == 0.0 {
            continue;
        }
        let x = &ph_inv * (z / norm);
        let val = x.dot(&(&p * sys.quadratic(&x)));
        best = best.max(val);
    }
    best
}

pub fn lyapunov_data(
    sys: &QuadraticSystem,
    metric: &LyapunovMetric,
    gamma: f64,
    beta_samples: usize,
    f0_source: F0NormSource,
    seed: u64,
) -> Result<LyapunovData> {
    if !(gamma > 0.0) {
        return Err(invalid("gamma must be positive"));
    }
    if beta_samples < 1000 {
        return Err(invalid("beta_samples must be at least 1000"));
    }
    if metric.dim() != sys.n {
        return Err(dim("metric dimension differs from system"));
    }
    let mu_p = log_norm_p(&to_complex(&sys.f1), metric)?;
    if !(mu_p < 0.0) {
        return Err(Error::Regime(alloc::format!("mu_P(F1) = {mu_p} is not negative")));
    }
    let beta = beta_p_estimate(sys, metric, beta_samples, seed);
    let f2p = metric.f2_norm(&to_complex(&sys.f2))?;
    let x0p = metric.vec_norm_real(&sys.x_init)?;
    let f0p = f0_norm_p(sys, metric, f0_source)?;
    let forcing = if f0p == 0.0 { 0.0 } else { f0p / x0p };
    let r_p = (f2p * x0p + forcing) / (-mu_p);
    Ok(LyapunovData {
        metric: metric.clone(),
        mu_p,
        beta_p_estimate: beta,
        beta_samples,
        gamma,
        kappa_p: 2.0 * mu_p + 2.0 * beta + gamma,
        f2_norm_p: f2p,
        x0_norm_p: x0p,
        f0_norm_p: f0p,
        f0_norm_source: f0_source,
        r_p,
    })
}

/// e^{κt}‖x0‖²_P + (e^{κt} − 1)/(γκ)·S² (t/γ·S² when κ = 0).
pub fn solution_norm_bound(kappa: f64, gamma: f64, x0_norm_p: f64, sup_f0_p: f64, t: f64) -> f64 {
    let growth = if kappa.abs() < 1e-14 { t / gamma } else { (kappa * t).exp_m1() / (gamma * kappa) };
    (kappa * t).exp() * x0_norm_p * x0_norm_p + growth * sup_f0_p * sup_f0_p
}

#[derive(Debug, Clone)]
pub struct StabilityMargin {
    /// min|λ(F1)| − ‖F2‖.
    pub delta: f64,
    pub times: Vec<f64>,
    /// Lower bound on P(‖F0(t)‖ < Δ) at each time.
    pub prob_bound: Vec<f64>,
    /// Whether Δ ≥ ‖Σ‖_F √((1 − e^{−2λt})/(2λδ)) at each time.
    pub expectation_condition: Vec<bool>,
}

pub fn stability_margin(sys: &QuadraticSystem, t_grid: &[f64], delta_prob: f64) -> Result<StabilityMargin> {
    if !(delta_prob > 0.0 && delta_prob < 1.0) {
        return Err(invalid("delta must lie in (0, 1)"));
    }
    let min_abs = eigenvalues_real(&sys.f1)?.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    let delta = min_abs - sys.f2_norm();
    let lam = sys.ou.lambda_min;
    let sf = sys.ou.sigma_frobenius();
    let mut prob_bound = Vec::with_capacity(t_grid.len());
    let mut cond = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        if delta <= 0.0 {
            prob_bound.push(0.0);
            cond.push(false);
            continue;
        }
        let var = (1.0 - (-2.0 * lam * t).exp()) / (2.0 * lam);
        prob_bound.push((1.0 - var * sf * sf / (delta * delta)).clamp(0.0, 1.0));
        cond.push(delta >= sf * (var / delta_prob).sqrt());
    }
    Ok(StabilityMargin { delta, times: t_grid.to_vec(), prob_bound, expectation_condition: cond })
}
