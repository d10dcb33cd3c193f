//! Resource and query-count calculators. Soft-O constants are set to 1, so
//! the query count is in scaling units, not an absolute count.
//!
//! The query expression multiplies a δ-dependent prefactor with a δ that also
//! sits inside the soft-O; it is evaluated literally as displayed.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::dyson_mc::{choose_samples, choose_truncation, truncation_in_range};
use crate::error::{invalid, Result};
use crate::lchs::{choose_params, dyson_segments, m_choice, v_ou_bound};

#[derive(Debug, Clone, PartialEq)]
pub struct ResourceParams {
    /// State dimension.
    pub n: usize,
    /// Carleman truncation order.
    pub order: usize,
    pub t: f64,
    pub eps: f64,
    pub delta: f64,
    pub beta: f64,
    pub f1_norm: f64,
    pub f2_norm: f64,
    pub sigma_f: f64,
    pub lambda_min: f64,
    pub c_alpha: f64,
    pub u_in_norm: f64,
    pub u_t_norm: f64,
}

impl ResourceParams {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.t, self.eps, self.beta, self.lambda_min, self.c_alpha, self.u_t_norm];
        if self.n == 0 || self.order == 0 || pos.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("n, N, T, eps, beta, lambda_min, C_alpha and ||U(T)|| must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) || !(self.eps < 1.0) || self.beta >= 1.0 {
            return Err(invalid("need delta, eps in (0, 1) and beta in (0, 1)"));
        }
        let nonneg = [self.f1_norm, self.f2_norm, self.sigma_f, self.u_in_norm];
        if nonneg.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(invalid("norms must be finite and non-negative"));
        }
        Ok(())
    }
}

/// (1 − e^{−2λT})/(2λ), the OU variance integral.
fn variance_integral(lambda_min: f64, t: f64) -> f64 {
    -(-2.0 * lambda_min * t).exp_m1() / (2.0 * lambda_min)
}

/// α_A ≤ C_α·N·(‖F1‖ + ‖F2‖ + √((3/δ)·(1 − e^{−2λT})/(2λ)·‖Σ‖_F²)), holding
/// with probability ≥ 1 − δ/3. `delta` is not restricted to (0, 1) here.
pub fn alpha_bound(p: &ResourceParams) -> f64 {
    let var = variance_integral(p.lambda_min, p.t);
    let noise = (3.0 / p.delta * var * p.sigma_f * p.sigma_f).sqrt();
    p.c_alpha * p.order as f64 * (p.f1_norm + p.f2_norm + noise)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryCount {
    /// Product of the four factors.
    pub n_q: f64,
    /// (‖U_in‖ + √(T‖Σ‖_F²/(2λδ)·(T − (1 − e^{−2λT})/(2λ))))/‖U(T)‖.
    pub prefactor: f64,
    /// N·C_α·(‖F1‖ + ‖F2‖ + √((1 − e^{−2λT})/(2λδ)·‖Σ‖_F²)).
    pub alpha_factor: f64,
    pub time: f64,
    /// ln(1/ε)^{1+1/β}.
    pub log_factor: f64,
}

pub fn query_count(p: &ResourceParams) -> Result<QueryCount> {
    if !(p.u_t_norm > 0.0) {
        return Err(invalid("||U(T)|| must be positive"));
    }
    let (t, lam, s2) = (p.t, p.lambda_min, p.sigma_f * p.sigma_f);
    let var = variance_integral(lam, t);
    let b = (t * s2 / (2.0 * lam * p.delta) * (t - var)).max(0.0).sqrt();
    let prefactor = (p.u_in_norm + b) / p.u_t_norm;
    let alpha_factor = p.order as f64 * p.c_alpha * (p.f1_norm + p.f2_norm + (var / p.delta * s2).sqrt());
    let log_factor = (1.0 / p.eps).ln().powf(1.0 + 1.0 / p.beta);
    Ok(QueryCount { n_q: prefactor * alpha_factor * t * log_factor, prefactor, alpha_factor, time: t, log_factor })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FullBudget {
    /// High-probability bound on ‖A_N‖ (α_A/C_α), used as Λ.
    pub lambda: f64,
    pub k_max: f64,
    pub h1: f64,
    pub q: usize,
    /// Quadrature nodes 2·⌈K/h1⌉·Q.
    pub n_u: usize,
    pub abs_weight_sum: f64,
    pub v_bound: f64,
    /// Duhamel Monte-Carlo size.
    pub m: usize,
    pub eps_tds: f64,
    pub segments: usize,
    pub eps_segment: f64,
    pub dyson_order: usize,
    pub truncation_in_range: bool,
    /// Largest node Hamiltonian norm K·Λ + Λ.
    pub l_moment: f64,
    pub samples: Vec<usize>,
    pub query: QueryCount,
}

/// Chains the LCHS, Duhamel and Dyson size choices for the given parameters.
/// The failure budget is split δ/3 each over Λ, the Duhamel MC and the Dyson
/// MC; F0 starts at zero.
pub fn full_budget(p: &ResourceParams) -> Result<FullBudget> {
    p.validate()?;
    let lambda = alpha_bound(p) / p.c_alpha;
    if !(lambda > 0.0) {
        return Err(invalid("the generator bound must be positive"));
    }
    let third = p.delta / 3.0;
    let quad = choose_params(p.beta, p.eps, p.t, lambda)?;
    let abs_sum = quad.abs_weight_sum();
    let v_bound = v_ou_bound(p.sigma_f, p.lambda_min, p.t, 0.0);
    let m = m_choice(p.t, third, p.eps, abs_sum, v_bound)?;
    let eps_tds = p.eps / (8.0 * abs_sum);
    let segments = dyson_segments(&quad, lambda, lambda, p.t);
    let eps_segment = (eps_tds / segments as f64).min(0.5);
    let dyson_order = choose_truncation(eps_segment)?;
    let l_moment = quad.k_max * lambda + lambda;
    let samples = choose_samples(dyson_order, p.t / segments as f64, eps_segment, third, l_moment)?;
    Ok(FullBudget {
        lambda,
        k_max: quad.k_max,
        h1: quad.h1,
        q: quad.q,
        n_u: quad.node_count(),
        abs_weight_sum: abs_sum,
        v_bound,
        m,
        eps_tds,
        segments,
        eps_segment,
        dyson_order,
        truncation_in_range: truncation_in_range(eps_segment),
        l_moment,
        samples,
        query: query_count(p)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ResourceParams {
        ResourceParams {
            n: 2,
            order: 2,
            t: 1.0,
            eps: 1e-2,
            delta: 0.1,
            beta: 0.7,
            f1_norm: 1.0,
            f2_norm: 0.5,
            sigma_f: 1.0,
            lambda_min: 1.0,
            c_alpha: 1.0,
            u_in_norm: 1.0,
            u_t_norm: 0.5,
        }
    }

    #[test]
    fn alpha_examples() {
        let mut p = base();
        p.sigma_f = 0.0;
        assert!((alpha_bound(&p) - 3.0).abs() < 1e-15);
        p.sigma_f = 1.0;
        p.t = 1e3;
        p.delta = 3.0;
        assert!((alpha_bound(&p) - 2.0 * (1.5 + 0.5f64.sqrt())).abs() < 1e-6);
        let a = alpha_bound(&p);
        p.t = 2e3;
        assert!(alpha_bound(&p) >= a);
        p.delta = 1.0;
        assert!(alpha_bound(&p) > a);
    }

    #[test]
    fn query_ratios() {
        let p = base();
        let q1 = query_count(&p).unwrap();
        let mut p2 = p.clone();
        p2.t = 2.0;
        assert!(query_count(&p2).unwrap().n_q / q1.n_q > 2.0);
        let (mut a, mut b) = (p.clone(), p.clone());
        a.eps = 1e-4;
        b.eps = 1e-8;
        let r = query_count(&b).unwrap().n_q / query_count(&a).unwrap().n_q;
        let want = 2f64.powf(1.0 + 1.0 / p.beta);
        assert!((r / want - 1.0).abs() < 1e-6);
        let f = q1.prefactor * q1.alpha_factor * q1.time * q1.log_factor;
        assert!((f / q1.n_q - 1.0).abs() < 1e-15);
        let mut bad = p;
        bad.u_t_norm = 0.0;
        assert!(query_count(&bad).is_err());
    }

    #[test]
    fn zero_noise_limit_is_continuous() {
        let mut p = base();
        p.sigma_f = 0.0;
        let q0 = query_count(&p).unwrap();
        assert!((q0.prefactor - p.u_in_norm / p.u_t_norm).abs() < 1e-15);
        assert!((q0.alpha_factor - 3.0).abs() < 1e-15);
        p.sigma_f = 1e-12;
        let q = query_count(&p).unwrap();
        assert!((q.n_q / q0.n_q - 1.0).abs() < 1e-9);
        p.f2_norm = 0.0;
        let z = alpha_bound(&p);
        p.f2_norm = 1e-12;
        assert!((alpha_bound(&p) / z - 1.0).abs() < 1e-9);
    }

    #[test]
    fn budget_counts_are_positive_and_monotone() {
        let b = full_budget(&base()).unwrap();
        assert!(b.n_u > 0 && b.m > 0 && b.q > 0 && b.segments > 0 && b.dyson_order >= 2);
        assert_eq!(b.samples.len(), b.dyson_order);
        assert!(b.samples.iter().all(|&n| n >= 1));
        assert!(b.query.n_q.is_finite() && b.query.n_q > 0.0);
        let mut tighter = base();
        tighter.eps = 1e-3;
        let bt = full_budget(&tighter).unwrap();
        assert!(bt.n_u >= b.n_u && bt.m >= b.m && bt.query.n_q > b.query.n_q);
        let mut bad = base();
        bad.delta = 1.5;
        assert!(full_budget(&bad).is_err());
    }
}
