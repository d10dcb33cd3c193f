//! Probabilistic Carleman error bounds for OU-driven systems, and the per-path
//! plumbing for checking them against Monte-Carlo survival curves.
//!
//! All calculators are closed-form and pure. The empirical side is split so a
//! caller can run paths in parallel: [`tail_path_record`] does one path,
//! [`summarize_tail`] aggregates (order-independent) and takes the binomial
//! confidence bound as a closure.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand_distr::{Distribution, StandardNormal};

use crate::carleman::{truncation_error, CarlemanLift, LiftedMetric};
use crate::error::{invalid, Error, Result};
use crate::numerics::{log_norm_p, real_part, spectral_norm, to_complex, LyapunovMetric, RealVector};
use crate::ou::{sample_path, uniform_grid, OUProcess};
use crate::quadratic_sde::{bilinear_b1, LyapunovData, QuadraticSystem};
use crate::rng::{self, domain};

/// Safety factor applied to the sampled lifted log norm.
pub const CHI_SAFETY: f64 = 1.1;
/// Fraction of divergent paths above which an experiment is rejected.
pub const DIVERGENCE_LIMIT: f64 = 0.01;

/// (e^{χt} − 1)/χ, continuous at χ = 0.
pub fn phi_t(chi: f64, t: f64) -> f64 {
    if (chi * t).abs() < 1e-12 {
        t * (1.0 + 0.5 * chi * t)
    } else {
        (chi * t).exp_m1() / chi
    }
}

/// (e^{κt} − 1)/(γκ), with the limit t/γ at κ = 0.
pub fn b_t(kappa: f64, gamma: f64, t: f64) -> f64 {
    if (kappa * t).abs() < 1e-12 {
        t * (1.0 + 0.5 * kappa * t) / gamma
    } else {
        (kappa * t).exp_m1() / (gamma * kappa)
    }
}

#[derive(Debug, Clone)]
pub struct TailBoundParams {
    pub lyap: LyapunovData,
    pub order: usize,
    pub t: f64,
    pub chi_p: f64,
    pub phi_t: f64,
    pub a_t: f64,
    pub b_t: f64,
    pub q_star_p: f64,
    pub e_s_tp: f64,
    pub c_pb: f64,
    /// 2μ_P + 2β_P.
    pub kappa_0: f64,
}

impl TailBoundParams {
    pub fn new(
        lyap: LyapunovData,
        order: usize,
        t: f64,
        chi_p: f64,
        q_star_p: f64,
        e_s_tp: f64,
        c_pb: f64,
    ) -> Result<Self> {
        if order == 0 {
            return Err(invalid("order must be at least 1"));
        }
        if !(t > 0.0) || !(chi_p >= 0.0) || !(q_star_p > 0.0) || !(e_s_tp >= 0.0) || !(c_pb >= 0.0) {
            return Err(invalid("tail parameters must be finite with t, Q* > 0 and chi, E S, C_PB >= 0"));
        }
        let k = lyap.kappa_p;
        let a_t = (k * t).exp() * lyap.x0_norm_p * lyap.x0_norm_p;
        let b = b_t(k, lyap.gamma, t);
        let kappa_0 = 2.0 * lyap.mu_p + 2.0 * lyap.beta_p_estimate;
        Ok(Self { order, t, chi_p, phi_t: phi_t(chi_p, t), a_t, b_t: b, q_star_p, e_s_tp, c_pb, kappa_0, lyap })
    }

    fn exponent(&self) -> f64 {
        1.0 / (self.order as f64 + 1.0)
    }
}

/// ‖A_{N+1}^N‖ from the P⊗ᴺ⁺¹ space to the P⊗ᴺ space.
pub fn lifted_f2_norm(lift: &CarlemanLift, metric: &LyapunovMetric) -> Result<f64> {
    let n = lift.order;
    metric.cross_norm(&to_complex(&lift.block_up(n)), n, n + 1)
}

/// Max of the P_N log norm of A_N(F0) over the supplied forcing values, times
/// [`CHI_SAFETY`] when positive, clamped at 0.
pub fn estimate_chi(lift: &CarlemanLift, lifted: &LyapunovMetric, forcing: &[RealVector]) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for f0 in forcing {
        best = best.max(log_norm_p(&to_complex(&lift.matrix(f0)), lifted)?);
    }
    if forcing.is_empty() {
        return Err(invalid("no forcing samples for chi"));
    }
    Ok((best * CHI_SAFETY).max(0.0))
}

/// ‖P^{1/2}‖²M²‖Σ‖²/(2ϑ). `semigroup = None` uses M = 1 and ϑ = λ_min(sym Θ),
/// which is valid for any Θ with positive-definite symmetric part.
pub fn q_star_p(metric: &LyapunovMetric, ou: &OUProcess, semigroup: Option<(f64, f64)>) -> Result<f64> {
    let (m, theta0) = semigroup.unwrap_or((1.0, ou.lambda_min));
    if !(theta0 > 0.0) || !(m >= 1.0) {
        return Err(invalid("semigroup constants need M >= 1 and a positive rate"));
    }
    let ph = spectral_norm(&metric.p_half);
    let s = ou.sigma_spectral();
    Ok(ph * ph * m * m * s * s / (2.0 * theta0))
}

/// Sampled sup over ‖a‖_P = 1 of ‖P^{−1/2} F2 B1(a) P^{1/2}‖.
pub fn c_pb_estimate(sys: &QuadraticSystem, metric: &LyapunovMetric, samples: usize, seed: u64) -> f64 {
    let n = sys.n;
    let ph = real_part(&metric.p_half);
    let phi = real_part(&metric.p_half_inv);
    let mut rng = rng::stream(seed, domain::MISC, 0x4350_4200);
    let mut best = 0.0_f64;
    for _ in 0..samples {
        let z = RealVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let norm = z.norm();
        if norm == 0.0 {
            continue;
        }
        let a = &phi * (z / norm);
        let m = &phi * &sys.f2 * bilinear_b1(&a) * &ph;
        best = best.max(crate::numerics::spectral_norm_real(&m));
    }
    best
}

/// Φ_t²‖A‖²(a_t + b_t S²)^{N+1}.
pub fn pathwise_bound(params: &TailBoundParams, lift_norm_a: f64, s_tp: f64) -> f64 {
    let g = params.a_t + params.b_t * s_tp * s_tp;
    params.phi_t.powi(2) * lift_norm_a.powi(2) * g.powi(params.order as i32 + 1)
}

/// exp(−(u − m)²/(2Q)) with u the S threshold implied by Δ, or 1 when the
/// threshold is not above the mean. `None` if the bracket is nonpositive.
fn gaussian_threshold_tail(k: f64, a: f64, b: f64, q: f64, m: f64, order: usize, delta: f64) -> Option<f64> {
    let bracket = (delta / k).powf(1.0 / (order as f64 + 1.0)) - a;
    if !(bracket > 0.0) || !(b > 0.0) {
        return None;
    }
    let u = (bracket / b).sqrt();
    Some(if u <= m { 1.0 } else { (-(u - m).powi(2) / (2.0 * q)).exp() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeibullTail {
    pub prob_bound: f64,
    pub c: f64,
    pub delta_0: f64,
    /// Sub-Gaussian bound before the Weibull relaxation, when its bracket is positive.
    pub sharp: Option<f64>,
}

pub fn weibull_tail(params: &TailBoundParams, lift_norm_a: f64, delta: f64) -> WeibullTail {
    let k = params.phi_t.powi(2) * lift_norm_a.powi(2);
    let (a, b, m) = (params.a_t, params.b_t, params.e_s_tp);
    let e = params.exponent();
    let c = 1.0 / (16.0 * params.q_star_p * b) * k.powf(-e);
    let delta_0 = k * (2.0 * a).max(a + 4.0 * b * m * m).powi(params.order as i32 + 1);
    let prob_bound = if delta >= delta_0 { (-c * delta.powf(e)).exp() } else { 1.0 };
    let sharp = gaussian_threshold_tail(k, a, b, params.q_star_p, m, params.order, delta);
    WeibullTail { prob_bound, c, delta_0, sharp }
}

/// P = I inputs: ‖A‖ is replaced by N‖F2‖ (times t through Φ_t = t) and Q* = σ*².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityTailInputs {
    pub order: usize,
    pub t: f64,
    pub f2_norm: f64,
    pub a_t: f64,
    pub b_t: f64,
    pub sigma_star_sq: f64,
    pub mean_sup: f64,
}

pub fn identity_metric_tail(inputs: &IdentityTailInputs, delta: f64) -> f64 {
    let k = (inputs.t * inputs.order as f64 * inputs.f2_norm).powi(2);
    gaussian_threshold_tail(k, inputs.a_t, inputs.b_t, inputs.sigma_star_sq, inputs.mean_sup, inputs.order, delta)
        .unwrap_or(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationTail {
    pub prob_bound: f64,
    pub c_t: f64,
    pub big_c_t: f64,
    pub delta_0: f64,
    pub k_t: f64,
    /// C_t exp(−c_t (log Δ)²), capped at 1.
    pub log_weibull: f64,
    /// μ_P + β_P ≥ 0: the bound is not applicable and both values are 1.
    pub regime_violation: bool,
}

/// Tail of ‖η‖²_{P_N} for the perturbation dynamics. ‖A_{N+1}^N‖_P is taken as N‖F2‖_P.
pub fn perturbation_tail(params: &TailBoundParams, delta_x0_norm: f64, delta: f64) -> PerturbationTail {
    let l = &params.lyap;
    let rate = -l.mu_p - l.beta_p_estimate;
    let n1 = params.order as f64 + 1.0;
    let t = params.t;
    let a_norm = params.order as f64 * l.f2_norm_p;
    let k_t = params.phi_t.powi(2) * a_norm * a_norm * (n1 * params.kappa_0 * t).exp() * delta_x0_norm.powf(2.0 * n1);
    if !(rate > 0.0) || !(params.c_pb > 0.0) {
        return PerturbationTail {
            prob_bound: 1.0,
            c_t: 0.0,
            big_c_t: 1.0,
            delta_0: f64::INFINITY,
            k_t,
            log_weibull: 1.0,
            regime_violation: !(rate > 0.0),
        };
    }
    let q = params.q_star_p;
    let cpb = params.c_pb;
    let es = params.e_s_tp;
    let s_delta = rate / (2.0 * cpb * t * n1) * (delta / k_t).ln();
    let prob_bound = if s_delta <= es { 1.0 } else { (-(s_delta - es).powi(2) / (2.0 * q)).exp() };
    let c_t = rate * rate / (32.0 * q * cpb * cpb);
    let delta_0 = k_t * (n1 * 2.0 * cpb * t / rate * 2.0 * es).exp();
    let big_c_t = (c_t * delta_0.ln().powi(2)).exp().max(1.0);
    let log_weibull = if delta > 0.0 { (big_c_t * (-c_t * delta.ln().powi(2)).exp()).min(1.0) } else { 1.0 };
    PerturbationTail { prob_bound, c_t, big_c_t, delta_0, k_t, log_weibull, regime_violation: false }
}

/// Sub-Gaussian initial-perturbation tail for block j of η (1-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialTailInputs {
    pub order: usize,
    pub j: usize,
    pub mu_p: f64,
    pub f2_norm_p: f64,
    pub q0_p: f64,
    pub mean_dx0: f64,
    pub t: f64,
}

pub fn initial_condition_tail(inputs: &InitialTailInputs, delta: f64) -> Result<f64> {
    let i = inputs;
    if i.j == 0 || i.j > i.order {
        return Err(invalid("block index must lie in 1..=N"));
    }
    if !(i.q0_p > 0.0) || !(delta >= 0.0) {
        return Err(invalid("Q0 must be positive and Delta nonnegative"));
    }
    let n = i.order as f64;
    let ratio = i.mu_p.abs() / i.f2_norm_p;
    let inner = if i.j == 1 {
        let damp = (-(i.mu_p * i.t).exp_m1()).abs();
        delta.sqrt() * ratio.powf(n) / damp.powf(n)
    } else {
        delta.powf(1.0 / (2.0 * (n + 1.0))) * ratio.powf((n + 1.0 - i.j as f64) / (n + 1.0))
    };
    let s = inner - i.mean_dx0;
    if !(s >= 0.0) {
        return Ok(1.0);
    }
    Ok((-(s * s) / (2.0 * i.q0_p)).exp().clamp(0.0, 1.0))
}

/// Outcome of one simulated path at time T.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathTailRecord {
    pub index: u64,
    /// ‖η^(N)(T)‖²_{P_N}; NaN for divergent paths.
    pub eta_sq: f64,
    /// sup_{[0,T]} ‖F0‖_P on the integration grid.
    pub s_tp: f64,
    pub diverged: bool,
}

/// Samples path `index`, integrates the reference and truncated systems and
/// records the squared lifted error at T.
pub fn tail_path_record(
    sys: &QuadraticSystem,
    lift: &CarlemanLift,
    metric: &LyapunovMetric,
    t_end: f64,
    dt_max: f64,
    seed: u64,
    index: u64,
) -> Result<PathTailRecord> {
    let steps = ((t_end / dt_max).ceil() as usize).max(1);
    let path = sample_path(&sys.ou, &uniform_grid(t_end, steps), seed, index)?;
    match truncation_error(sys, lift, &path, t_end, dt_max, metric) {
        Ok((err, fine)) => {
            let p_norm = err.p_norm.last().copied().unwrap_or(0.0);
            let s_tp = fine.sup_norm_with(&real_part(&metric.p_half), t_end);
            Ok(PathTailRecord { index, eta_sq: p_norm * p_norm, s_tp, diverged: false })
        }
        Err(Error::Divergence { .. }) => Ok(PathTailRecord { index, eta_sq: f64::NAN, s_tp: f64::NAN, diverged: true }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone)]
pub struct EmpiricalTail {
    pub deltas: Vec<f64>,
    pub exceed_counts: Vec<usize>,
    pub survival: Vec<f64>,
    pub cp_upper: Vec<f64>,
    pub bound: Vec<f64>,
    pub delta_0: f64,
    pub n_valid: usize,
    pub n_diverged: usize,
    /// Divergence fraction within [`DIVERGENCE_LIMIT`].
    pub valid: bool,
    /// cp_upper ≤ bound at every Δ ≥ Δ_0 (and at least one such Δ), on a valid run.
    pub dominated: bool,
}

/// Aggregates path records into survival and bound curves. `cp_upper(k, n)` is
/// the one-sided upper confidence bound for k exceedances out of n.
pub fn summarize_tail(
    records: &[PathTailRecord],
    deltas: &[f64],
    delta_0: f64,
    bound: impl Fn(f64) -> f64,
    cp_upper: impl Fn(usize, usize) -> f64,
) -> Result<EmpiricalTail> {
    if records.is_empty() || deltas.is_empty() {
        return Err(invalid("need records and a Delta grid"));
    }
    let n_diverged = records.iter().filter(|r| r.diverged).count();
    let values: Vec<f64> = records.iter().filter(|r| !r.diverged).map(|r| r.eta_sq).collect();
    let n_valid = values.len();
    let valid = (n_diverged as f64) <= DIVERGENCE_LIMIT * records.len() as f64 && n_valid > 0;
    let mut exceed_counts = Vec::with_capacity(deltas.len());
    let (mut survival, mut cp, mut bnd) = (Vec::new(), Vec::new(), Vec::new());
    let mut checked = 0;
    let mut dominated = valid;
    for &d in deltas {
        let k = values.iter().filter(|&&v| v >= d).count();
        let s = if n_valid > 0 { k as f64 / n_valid as f64 } else { f64::NAN };
        let u = if n_valid > 0 { cp_upper(k, n_valid) } else { 1.0 };
        let b = bound(d);
        if d >= delta_0 {
            checked += 1;
            dominated &= u <= b;
        }
        exceed_counts.push(k);
        survival.push(s);
        cp.push(u);
        bnd.push(b);
    }
    Ok(EmpiricalTail {
        deltas: deltas.to_vec(),
        exceed_counts,
        survival,
        cp_upper: cp,
        bound: bnd,
        delta_0,
        n_valid,
        n_diverged,
        valid,
        dominated: dominated && checked > 0,
    })
}

/// Geometric grid of `points` values between `lo` and `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0) || !(hi >= lo) || points < 2 {
        return Err(invalid("geometric grid needs 0 < lo <= hi and at least two points"));
    }
    let r = (hi / lo).ln() / (points - 1) as f64;
    Ok((0..points).map(|i| lo * (r * i as f64).exp()).collect())
}

/// Δ at which the Weibull envelope exp(−cΔ^{1/(N+1)}) equals `level`.
pub fn weibull_level(c: f64, order: usize, level: f64) -> f64 {
    (-level.ln() / c).powi(order as i32 + 1)
}

/// Weibull envelope value at Δ, ignoring the Δ ≥ Δ_0 cutoff.
pub fn weibull_envelope(c: f64, order: usize, delta: f64) -> f64 {
    (-c * delta.powf(1.0 / (order as f64 + 1.0))).exp()
}

/// Lifted metric log norms are evaluated on P_N built from `metric`.
pub fn lifted_metric(metric: &LyapunovMetric, lift: &CarlemanLift) -> LyapunovMetric {
    LiftedMetric::lyapunov(metric, lift)
}
