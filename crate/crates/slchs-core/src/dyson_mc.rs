//! Truncated Dyson series for time-ordered exponentials 𝒯exp(−i∫H) of rough
//! Hamiltonians: Monte-Carlo ordered integrals, segment composition and the
//! left-endpoint Riemann alternative.
//!
//! Hamiltonians are read through `Fn(f64) -> DenseMatrix`. For OU-driven H the
//! caller draws the sample times first ([`tds_sample_times`]), extends the path
//! exactly at those times and only then evaluates H.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::LN_2;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::numerics::{spectral_norm, DenseMatrix};
use crate::rng::{self, domain};
use crate::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct DysonConfig {
    /// Truncation order 𝒦.
    pub order: usize,
    /// N_k for k = 1..=𝒦 (`samples[k-1]`).
    pub samples: Vec<usize>,
    pub segment_tau: f64,
    pub seed: u64,
}

impl DysonConfig {
    pub fn new(order: usize, samples: Vec<usize>, segment_tau: f64, seed: u64) -> Result<Self> {
        if samples.len() != order {
            return Err(invalid("need one sample count per Dyson order"));
        }
        if samples.iter().any(|&n| n == 0) {
            return Err(invalid("sample counts must be at least 1"));
        }
        if !(segment_tau > 0.0) {
            return Err(invalid("segment length must be positive"));
        }
        Ok(Self { order, samples, segment_tau, seed })
    }

    fn max_samples(&self) -> usize {
        self.samples.iter().copied().max().unwrap_or(0)
    }
}

/// `count` sorted k-tuples of iid Uniform(0, t_len) draws.
pub fn sample_simplex(k: usize, t_len: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::stream(seed, domain::DYSON_TIMES, k as u64);
    simplex_from(&mut rng, k, t_len, count)
}

fn simplex_from(rng: &mut rng::StreamRng, k: usize, t_len: f64, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let mut t: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * t_len).collect();
            t.sort_by(f64::total_cmp);
            t
        })
        .collect()
}

/// (T^k/k!)·mean of H(t_k)···H(t_1) over `n_k` ordered samples on [s0, s0+t_len].
pub fn mc_dyson_term(
    h: &dyn Fn(f64) -> DenseMatrix,
    dim: usize,
    k: usize,
    s0: f64,
    t_len: f64,
    n_k: usize,
    seed: u64,
) -> Result<DenseMatrix> {
    if k == 0 {
        return Ok(DenseMatrix::identity(dim, dim));
    }
    if n_k == 0 {
        return Err(invalid("N_k must be at least 1"));
    }
    let tuples = sample_simplex(k, t_len, n_k, seed);
    Ok(ordered_mean(h, dim, &tuples, s0) * Complex64::new(volume(k, t_len), 0.0))
}

fn volume(k: usize, t_len: f64) -> f64 {
    let mut v = 1.0;
    for i in 1..=k {
        v *= t_len / i as f64;
    }
    v
}

fn ordered_mean(h: &dyn Fn(f64) -> DenseMatrix, dim: usize, tuples: &[Vec<f64>], s0: f64) -> DenseMatrix {
    let mut acc = DenseMatrix::zeros(dim, dim);
    for t in tuples {
        let mut z = DenseMatrix::identity(dim, dim);
        for &ti in t {
            z = h(s0 + ti) * z;
        }
        acc += z;
    }
    acc / Complex64::new(tuples.len() as f64, 0.0)
}

/// Master tuples shared across orders: order k uses the first k coordinates of
/// each tuple, sorted. Each order stays unbiased; orders are correlated.
fn master_tuples(cfg: &DysonConfig, s: f64, t: f64, stream: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::stream(cfg.seed, domain::DYSON_TIMES, stream);
    let t_len = t - s;
    (0..cfg.max_samples())
        .map(|_| (0..cfg.order).map(|_| s + rng.random::<f64>() * t_len).collect())
        .collect()
}

fn order_tuple(master: &[f64], k: usize) -> Vec<f64> {
    let mut v = master[..k].to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Every time at which [`tds_propagator`] will evaluate H on [s, t] (unsorted).
pub fn tds_sample_times(cfg: &DysonConfig, s: f64, t: f64, stream: u64) -> Vec<f64> {
    master_tuples(cfg, s, t, stream).into_iter().flatten().collect()
}

/// (τΛe/(𝒦+1))^{𝒦+1}.
pub fn truncation_envelope(tau: f64, lambda: f64, order: usize) -> f64 {
    (tau * lambda * core::f64::consts::E / (order as f64 + 1.0)).powi(order as i32 + 1)
}

fn check_segment(tau: f64, lambda: f64) -> Result<()> {
    let x = tau * lambda;
    if x > LN_2 * (1.0 + 1e-12) {
        return Err(Error::SegmentTooLong(x));
    }
    Ok(())
}

/// Σ_{k≤𝒦} (−i)^k Î_k on [s, t]. `lambda` must bound ‖H‖ on the segment
/// (e.g. a fine-grid sup of the sampled path).
pub fn tds_propagator(
    h: &dyn Fn(f64) -> DenseMatrix,
    dim: usize,
    s: f64,
    t: f64,
    cfg: &DysonConfig,
    lambda: f64,
    stream: u64,
) -> Result<DenseMatrix> {
    if !(t >= s) {
        return Err(invalid("segment end precedes start"));
    }
    check_segment(t - s, lambda)?;
    let master = master_tuples(cfg, s, t, stream);
    let mut out = DenseMatrix::identity(dim, dim);
    let mut phase = Complex64::new(1.0, 0.0);
    for k in 1..=cfg.order {
        phase *= Complex64::new(0.0, -1.0);
        let tuples: Vec<Vec<f64>> = master[..cfg.samples[k - 1]].iter().map(|m| order_tuple(m, k)).collect();
        let term = ordered_mean(h, dim, &tuples, 0.0) * Complex64::new(volume(k, t - s), 0.0);
        out += term * phase;
    }
    Ok(out)
}

/// t ↦ (L(t), H(t)) for the node family H_k(t) = k·L(t) + H(t).
pub type PairSource<'a> = &'a dyn Fn(f64) -> (DenseMatrix, DenseMatrix);

/// (kL + H)·P for a matrix polynomial P in k (`poly[p]` multiplies k^p).
fn pair_times_poly(l: &DenseMatrix, h: &DenseMatrix, poly: &[DenseMatrix]) -> Vec<DenseMatrix> {
    let (r, c) = poly[0].shape();
    let mut next = vec![DenseMatrix::zeros(r, c); poly.len() + 1];
    for (p, m) in poly.iter().enumerate() {
        next[p] += h * m;
        next[p + 1] += l * m;
    }
    next
}

/// Segment estimator applied to `x` as a polynomial in k:
/// TDS_k[s, t]·x = Σ_p k^p C_p. One sampling serves every quadrature node.
pub fn tds_poly_apply(lh_at: PairSource, s: f64, t: f64, cfg: &DysonConfig, stream: u64, x: &DenseMatrix) -> Vec<DenseMatrix> {
    let master = master_tuples(cfg, s, t, stream);
    let (r, c) = x.shape();
    let mut coeffs = vec![DenseMatrix::zeros(r, c); cfg.order + 1];
    coeffs[0] = x.clone();
    let mut phase = Complex64::new(1.0, 0.0);
    for k in 1..=cfg.order {
        phase *= Complex64::new(0.0, -1.0);
        let n_k = cfg.samples[k - 1];
        let scale = phase * volume(k, t - s) / n_k as f64;
        for m in &master[..n_k] {
            let mut poly = vec![x.clone()];
            for ti in order_tuple(m, k) {
                let (l, hm) = lh_at(ti);
                poly = pair_times_poly(&l, &hm, &poly);
            }
            for (p, term) in poly.into_iter().enumerate() {
                coeffs[p] += term * scale;
            }
        }
    }
    coeffs
}

/// Matrix form of [`tds_poly_apply`]: TDS(k) = Σ_p k^p C_p.
pub fn tds_poly_coefficients(lh_at: PairSource, dim: usize, s: f64, t: f64, cfg: &DysonConfig, stream: u64) -> Vec<DenseMatrix> {
    tds_poly_apply(lh_at, s, t, cfg, stream, &DenseMatrix::identity(dim, dim))
}

/// Left-endpoint nodes s + m·(t − s)/steps for m < steps.
pub fn riemann_times(s: f64, t: f64, steps: usize) -> Vec<f64> {
    let h = (t - s) / steps as f64;
    (0..steps).map(|m| s + m as f64 * h).collect()
}

/// Riemann counterpart of [`tds_poly_apply`] on `steps` left-endpoint nodes.
pub fn riemann_poly_apply(lh_at: PairSource, s: f64, t: f64, order: usize, steps: usize, x: &DenseMatrix) -> Vec<DenseMatrix> {
    let (r, c) = x.shape();
    let mut out = vec![DenseMatrix::zeros(r, c); order + 1];
    out[0] = x.clone();
    if steps == 0 {
        return out;
    }
    let h = Complex64::new((t - s) / steps as f64, 0.0);
    let pairs: Vec<(DenseMatrix, DenseMatrix)> = riemann_times(s, t, steps)
        .into_iter()
        .map(|ti| {
            let (l, hm) = lh_at(ti);
            (l * h, hm * h)
        })
        .collect();
    let mut prev: Vec<Vec<DenseMatrix>> = vec![vec![x.clone()]; steps];
    let mut phase = Complex64::new(1.0, 0.0);
    for j in 1..=order {
        phase *= Complex64::new(0.0, -1.0);
        let mut acc = vec![DenseMatrix::zeros(r, c); j + 1];
        let mut cur = Vec::with_capacity(steps);
        for (i, (l, hm)) in pairs.iter().enumerate() {
            for (a, term) in acc.iter_mut().zip(pair_times_poly(l, hm, &prev[i])) {
                *a += term;
            }
            cur.push(acc.clone());
        }
        for (p, a) in acc.iter().enumerate() {
            out[p] += a * phase;
        }
        prev = cur;
    }
    out
}

/// Ceiling formula for 𝒦 from the per-segment error ε1. Values above 2^{−e}
/// fall outside the formula's stated range and are clamped to 𝒦 ≥ 2.
pub fn choose_truncation(eps1: f64) -> Result<usize> {
    if !(eps1 > 0.0 && eps1 < 1.0) {
        return Err(invalid("eps1 must lie in (0, 1)"));
    }
    let l = (1.0 / eps1).ln();
    let lnl = l.ln();
    let k = (-1.0 + 2.0 * l / (lnl + 1.0)).ceil();
    Ok(if k.is_finite() { (k.max(2.0)) as usize } else { 2 })
}

/// Whether `eps1` lies in the range where the truncation formula is stated.
pub fn truncation_in_range(eps1: f64) -> bool {
    eps1 <= 2f64.powf(-core::f64::consts::E)
}

/// N_k = ⌈2𝒦²(T𝓛)^{2k}/((k!)² δ ε²)⌉ for k = 1..=𝒦.
pub fn choose_samples(order: usize, t_len: f64, eps: f64, delta_mc: f64, l_moment: f64) -> Result<Vec<usize>> {
    if !(t_len > 0.0 && eps > 0.0 && delta_mc > 0.0 && l_moment > 0.0) {
        return Err(invalid("choose_samples needs positive inputs"));
    }
    let kk = order as f64;
    Ok((1..=order)
        .map(|k| {
            let v = volume(k, t_len * l_moment);
            let n = 2.0 * kk * kk * v * v / (delta_mc * eps * eps);
            if n >= usize::MAX as f64 {
                usize::MAX
            } else {
                (n.ceil() as usize).max(1)
            }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct Composed {
    pub product: DenseMatrix,
    /// Λ^{m−1}·Σ per-factor errors.
    pub error_budget: f64,
}

/// Ordered product factors[m−1]···factors[0] with the telescoping error budget.
pub fn compose_segments(factors: &[DenseMatrix], errors: &[f64], lam: f64) -> Result<Composed> {
    if factors.is_empty() || factors.len() != errors.len() {
        return Err(invalid("need one error estimate per factor"));
    }
    let d = factors[0].nrows();
    let mut product = DenseMatrix::identity(d, d);
    for f in factors {
        product = f * product;
    }
    let m = factors.len() as i32;
    Ok(Composed { product, error_budget: lam.powi(m - 1) * errors.iter().sum::<f64>() })
}

/// Σ_k (−i)^k 𝒬_{k,M} with left-endpoint nodes t_m = m·h, m < M = T/h.
/// Uses the recursion S_j(m) = Σ_{m' ≤ m} H(t_{m'}) S_{j−1}(m'), so cost is O(M·𝒦·d³).
pub fn riemann_dyson(h: &dyn Fn(f64) -> DenseMatrix, dim: usize, t_len: f64, order: usize, step: f64) -> Result<DenseMatrix> {
    if !(step > 0.0) {
        return Err(invalid("step must be positive"));
    }
    let m_f = t_len / step;
    let m = m_f.round();
    if (m - m_f).abs() > 1e-9 * m_f.max(1.0) || m < 1.0 {
        return Err(invalid("T/h must be a positive integer"));
    }
    let m = m as usize;
    let hs: Vec<DenseMatrix> = (0..m).map(|i| h(i as f64 * step) * Complex64::new(step, 0.0)).collect();
    // prev[i] = S_{j−1}(i) as running prefix sums; S_0 ≡ I.
    let mut prev: Vec<DenseMatrix> = vec![DenseMatrix::identity(dim, dim); m];
    let mut out = DenseMatrix::identity(dim, dim);
    let mut phase = Complex64::new(1.0, 0.0);
    for _ in 1..=order {
        phase *= Complex64::new(0.0, -1.0);
        let mut acc = DenseMatrix::zeros(dim, dim);
        let mut cur = Vec::with_capacity(m);
        for i in 0..m {
            acc += &hs[i] * &prev[i];
            cur.push(acc.clone());
        }
        out += &acc * phase;
        prev = cur;
    }
    Ok(out)
}

/// sup of ‖H‖ over a uniform grid with `points` samples on [s, t].
pub fn grid_sup_norm(h: &dyn Fn(f64) -> DenseMatrix, s: f64, t: f64, points: usize) -> f64 {
    let n = points.max(2);
    (0..n).map(|i| spectral_norm(&h(s + (t - s) * i as f64 / (n - 1) as f64))).fold(0.0, f64::max)
}

/// Number of equal segments keeping τΛ ≤ ln 2.
pub fn segment_count(t_len: f64, lambda: f64) -> usize {
    ((t_len * lambda / LN_2) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::unitary_exp;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn herm() -> DenseMatrix {
        DenseMatrix::from_row_slice(2, 2, &[c(0.3, 0.0), c(0.1, -0.2), c(0.1, 0.2), c(-0.4, 0.0)])
    }

    #[test]
    fn simplex_tuples_are_sorted_with_order_statistic_means() {
        let t = sample_simplex(2, 3.0, 100_000, 5);
        assert!(t.iter().all(|x| x[0] <= x[1] && x[1] <= 3.0 && x[0] >= 0.0));
        let m1 = t.iter().map(|x| x[0]).sum::<f64>() / t.len() as f64;
        let m2 = t.iter().map(|x| x[1]).sum::<f64>() / t.len() as f64;
        // sd of min of two U(0,3) is 3/√18.
        let se = 3.0 / 18f64.sqrt() / (t.len() as f64).sqrt();
        assert!((m1 - 1.0).abs() < 3.0 * se && (m2 - 2.0).abs() < 3.0 * se);
        assert_eq!(sample_simplex(1, 1.0, 3, 1).iter().map(|v| v.len()).sum::<usize>(), 3);
    }

    #[test]
    fn constant_term_is_exact() {
        let h0 = herm();
        let f = |_t: f64| h0.clone();
        let t3 = mc_dyson_term(&f, 2, 3, 0.0, 0.7, 5, 1).unwrap();
        let exact = &h0 * &h0 * &h0 * c(0.7f64.powi(3) / 6.0, 0.0);
        assert!((t3 - exact).norm() < 1e-14);
        assert_eq!(mc_dyson_term(&f, 2, 0, 0.0, 1.0, 1, 1).unwrap(), DenseMatrix::identity(2, 2));
    }

    #[test]
    fn commuting_linear_h_converges() {
        let h0 = herm();
        let f = |t: f64| &h0 * c(t, 0.0);
        let mut acc = DenseMatrix::zeros(2, 2);
        let runs = 200;
        for s in 0..runs {
            acc += mc_dyson_term(&f, 2, 2, 0.0, 1.0, 200, s).unwrap();
        }
        let mean = acc / c(runs as f64, 0.0);
        let exact = &h0 * &h0 * c(0.125, 0.0);
        assert!((mean - exact).norm() < 2e-3);
    }

    #[test]
    fn tds_matches_exponential_for_constant_h() {
        let h0 = herm();
        let norm = spectral_norm(&h0);
        let tau = 0.5 / norm;
        let f = |_t: f64| h0.clone();
        let k = choose_truncation(1e-8).unwrap();
        let cfg = DysonConfig::new(k, vec![3; k], tau, 1).unwrap();
        let u = tds_propagator(&f, 2, 0.0, tau, &cfg, norm, 0).unwrap();
        let exact = unitary_exp(&h0, tau).unwrap();
        assert!((u - exact).norm() <= truncation_envelope(tau, norm, k) * 2.0);
        let zero = |_t: f64| DenseMatrix::zeros(2, 2);
        assert_eq!(tds_propagator(&zero, 2, 0.0, tau, &cfg, 0.0, 0).unwrap(), DenseMatrix::identity(2, 2));
        assert!(matches!(tds_propagator(&f, 2, 0.0, 10.0, &cfg, norm, 0), Err(Error::SegmentTooLong(_))));
    }

    #[test]
    fn poly_coefficients_agree_with_direct_evaluation() {
        let l0 = DenseMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.2, 0.0), c(0.2, 0.0), c(2.0, 0.0)]);
        let h0 = herm();
        let l = |t: f64| &l0 * c(1.0 + 0.3 * t, 0.0);
        let hh = |t: f64| &h0 * c((3.0 * t).sin(), 0.0);
        let lh = |t: f64| (l(t), hh(t));
        let cfg = DysonConfig::new(4, vec![5, 4, 3, 2], 0.1, 9).unwrap();
        let coeffs = tds_poly_coefficients(&lh, 2, 0.2, 0.3, &cfg, 17);
        for kv in [-3.0, 0.5, 2.0] {
            let g = |t: f64| l(t) * c(kv, 0.0) + hh(t);
            let direct = tds_propagator(&g, 2, 0.2, 0.3, &cfg, 0.0, 17).unwrap();
            let mut poly = DenseMatrix::zeros(2, 2);
            for (p, cp) in coeffs.iter().enumerate() {
                poly += cp * c(kv.powi(p as i32), 0.0);
            }
            assert!((direct - poly).norm() < 1e-13);
        }
    }

    #[test]
    fn truncation_order_plugs() {
        assert_eq!(choose_truncation(1e-6).unwrap(), 7);
        assert_eq!(choose_truncation(1e-12).unwrap(), 12);
        let mut last = 0;
        for e in [1e-2, 1e-3, 1e-5, 1e-8, 1e-11, 1e-15] {
            let k = choose_truncation(e).unwrap();
            assert!(k >= last);
            last = k;
        }
        assert!(choose_truncation(0.5).unwrap() >= 2);
        assert!(!truncation_in_range(0.5) && truncation_in_range(1e-3));
    }

    #[test]
    fn sample_counts_plug() {
        let n = choose_samples(2, 1.0, 0.5, 0.5, 1.0).unwrap();
        assert_eq!(n[0], 64);
        let m = choose_samples(2, 1.0, 0.25, 0.5, 1.0).unwrap();
        assert_eq!(m[0], 4 * n[0]);
        let d = choose_samples(8, 1.0, 0.1, 0.1, 1.5).unwrap();
        assert!(d.windows(2).skip(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn composition_budget_and_semigroup() {
        let h0 = herm();
        let a = unitary_exp(&h0, 0.3).unwrap();
        let b = unitary_exp(&h0, 0.2).unwrap();
        let r = compose_segments(&[a, b], &[0.0, 0.0], 1.0).unwrap();
        assert!((r.product - unitary_exp(&h0, 0.5).unwrap()).norm() < 1e-13);
        let eye = DenseMatrix::identity(2, 2);
        let r = compose_segments(&[eye.clone(), eye.clone(), eye], &[1e-3; 3], 2.0).unwrap();
        assert_eq!(r.product, DenseMatrix::identity(2, 2));
        assert!((r.error_budget - 4.0 * 3e-3).abs() < 1e-15);
    }

    #[test]
    fn perturbed_unitaries_respect_telescoping() {
        let h0 = herm();
        let us: Vec<DenseMatrix> = (0..5).map(|j| unitary_exp(&h0, 0.1 * (j + 1) as f64).unwrap()).collect();
        let e = DenseMatrix::from_row_slice(2, 2, &[c(1e-3, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1e-3, 0.0)]);
        let ap: Vec<DenseMatrix> = us.iter().map(|u| u + &e).collect();
        let exact = compose_segments(&us, &[0.0; 5], 1.0).unwrap().product;
        let pert = compose_segments(&ap, &[1e-3; 5], 1.0).unwrap();
        assert!(pert.error_budget <= 5e-3 + 1e-15);
        // Perturbed factors have norm 1 + 1e-3; the bound uses that Λ.
        let lam = 1.0 + 1e-3;
        assert!(spectral_norm(&(pert.product - exact)) <= lam.powi(4) * 5e-3);
    }

    #[test]
    fn riemann_constant_limit_and_zero() {
        let h0 = herm();
        let f = |_t: f64| h0.clone();
        let exact = unitary_exp(&h0, 1.0).unwrap();
        let mut last = f64::INFINITY;
        for j in 2..8 {
            let h = 1.0 / 2f64.powi(j);
            let err = (riemann_dyson(&f, 2, 1.0, 12, h).unwrap() - &exact).norm();
            assert!(err < last);
            last = err;
        }
        assert!(last < 5e-3);
        let zero = |_t: f64| DenseMatrix::zeros(2, 2);
        assert_eq!(riemann_dyson(&zero, 2, 1.0, 4, 0.25).unwrap(), DenseMatrix::identity(2, 2));
        assert!(riemann_dyson(&f, 2, 1.0, 4, 0.3).is_err());
    }

    #[test]
    fn riemann_constant_sum_is_binomial() {
        let h0 = herm();
        let f = |_t: f64| h0.clone();
        // Q_{2,M} = h²·C(M+1, 2)·H² for constant H.
        let (m, h) = (4usize, 0.25);
        let r1 = riemann_dyson(&f, 2, 1.0, 1, h).unwrap();
        let r2 = riemann_dyson(&f, 2, 1.0, 2, h).unwrap();
        let q2 = (r2 - r1) * c(-1.0, 0.0);
        let expect = &h0 * &h0 * c(h * h * (m * (m + 1) / 2) as f64, 0.0);
        assert!((q2 - expect).norm() < 1e-14);
    }

    #[test]
    fn riemann_poly_matches_direct_sums() {
        let l0 = DenseMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.3, 0.0), c(0.3, 0.0), c(-0.5, 0.0)]);
        let h0 = herm();
        let lh = |t: f64| (&l0 * c(1.0 + t, 0.0), &h0 * c((2.0 * t).cos(), 0.0));
        let x = DenseMatrix::from_row_slice(2, 1, &[c(0.4, 0.1), c(-0.2, 0.0)]);
        let coeffs = riemann_poly_apply(&lh, 0.0, 0.5, 3, 5, &x);
        for kv in [-2.0, 0.7] {
            let g = |t: f64| {
                let (l, h) = lh(t);
                l * c(kv, 0.0) + h
            };
            let direct = riemann_dyson(&g, 2, 0.5, 3, 0.1).unwrap() * &x;
            let mut poly = DenseMatrix::zeros(2, 1);
            for (p, cp) in coeffs.iter().enumerate() {
                poly += cp * c(kv.powi(p as i32), 0.0);
            }
            assert!((direct - poly).norm() < 1e-12);
        }
    }
}
