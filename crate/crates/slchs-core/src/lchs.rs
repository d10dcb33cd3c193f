//! LCHS emulation: the kernel g, its truncation and composite quadrature in
//! k, the Cartesian split A = L + iH, per-node propagators and the
//! Monte-Carlo Duhamel term.
//!
//! Convention: the emulated evolution is du/dt = −A(t)u + b(t), so
//! u(T) = 𝒯e^{−∫₀ᵀA} u(0) + ∫₀ᵀ 𝒯e^{−∫ₛᵀA} b(s) ds ≈ Σ_j c_j U(T, ·, k_j)(…),
//! with U(T, s, k) = 𝒯e^{−i∫ₛᵀ(kL + H)}. A Carleman system dy/dt = A_N y + b_N
//! is therefore passed as A = −A_N.
//!
//! Every node k shares one time discretization. Each step is either an exact
//! midpoint exponential (reference engine) or a matrix polynomial in k built
//! once from Dyson samples (MC or Riemann), so a node costs one forward sweep.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::Cell;
use core::f64::consts::{E, PI};
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::carleman::{build_lift, stability_predicate, CarlemanLift};
use crate::dyson_mc::{
    choose_samples, choose_truncation, riemann_poly_apply, riemann_times, segment_count, tds_poly_apply,
    tds_sample_times, truncation_envelope, truncation_in_range, DysonConfig,
};
use crate::error::{dim, invalid, Error, Result};
use crate::numerics::{
    gauss_legendre, integrate_gl, spectral_norm_real, symmetric_eigen, to_complex, to_complex_vec, unitary_exp,
    ComplexVector, DenseMatrix, RealMatrix, RealVector,
};
use crate::ou::{extend_path, sample_path, sup_statistics, uniform_grid, OUPath, OUProcess};
use crate::quadratic_sde::{step_grid, QuadraticSystem};
use crate::rng::{self, domain};
use crate::Complex64;

/// C_β = 2π e^{−2^β}.
pub fn c_beta(beta: f64) -> f64 {
    2.0 * PI * (-(2f64.powf(beta))).exp()
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid("beta must lie in (0, 1)"));
    }
    Ok(())
}

/// (1 + ik)^β on the principal branch, as (modulus^β, β·arg).
fn one_plus_ik_pow(beta: f64, k: f64) -> (f64, f64) {
    ((1.0 + k * k).powf(0.5 * beta), beta * k.atan())
}

/// g(k) = 1/(C_β (1 − ik) e^{(1+ik)^β}).
pub fn kernel_eval(beta: f64, k: f64) -> Complex64 {
    let (r, phi) = one_plus_ik_pow(beta, k);
    let ez = Complex64::from_polar((-r * phi.cos()).exp(), -r * phi.sin());
    // 1/(1 − ik) = (1 + ik)/(1 + k²)
    ez * Complex64::new(1.0, k) / ((1.0 + k * k) * c_beta(beta))
}

/// |g(k)|.
pub fn kernel_abs(beta: f64, k: f64) -> f64 {
    let (r, phi) = one_plus_ik_pow(beta, k);
    (-r * phi.cos()).exp() / (c_beta(beta) * (1.0 + k * k).sqrt())
}

/// Closed-form bound on ∫_{|k|>K} |g|: 2^{B+1}B!/(C_β cos^B(βπ/2))·e^{−½K^β cos(βπ/2)}/K, B = ⌈1/β⌉.
pub fn kernel_tail_bound(beta: f64, k_max: f64) -> f64 {
    let b = (1.0 / beta).ceil();
    let cs = (beta * PI / 2.0).cos();
    let mut fact = 1.0;
    for i in 2..=(b as u32) {
        fact *= i as f64;
    }
    2f64.powf(b + 1.0) * fact / (c_beta(beta) * cs.powf(b)) * (-0.5 * k_max.powf(beta) * cs).exp() / k_max
}

/// ∫_{|k|>K} |g| by Gauss–Legendre in u = ln(k/K).
pub fn kernel_tail_numeric(beta: f64, k_max: f64) -> f64 {
    let cs = (beta * PI / 2.0).cos();
    // |g(k)| ≤ e^{−k^β cos(βπ/2)}/(C_β k); stop where that is below e^{−80}.
    let k_hi = (80.0 / cs).powf(1.0 / beta).max(k_max) * 2.0;
    let u_hi = (k_hi / k_max).ln();
    let panels = ((u_hi * 40.0).ceil() as usize).max(40);
    2.0 * integrate_gl(
        |u| {
            let k = k_max * u.exp();
            kernel_abs(beta, k) * k
        },
        0.0,
        u_hi,
        panels,
        16,
    )
}

/// Smallest K with [`kernel_tail_bound`] ≤ `eps_tail` (the bound decreases in K).
pub fn truncation_k(beta: f64, eps_tail: f64) -> Result<f64> {
    check_beta(beta)?;
    if !(eps_tail > 0.0) {
        return Err(invalid("tail tolerance must be positive"));
    }
    let mut hi = 1.0;
    while kernel_tail_bound(beta, hi) > eps_tail {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(invalid("kernel truncation does not reach the tolerance"));
        }
    }
    let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if kernel_tail_bound(beta, mid) > eps_tail {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// How the panel width h1 = 1/(eTΛ) picks Λ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum H1Rule {
    /// High-probability Λ_threshold from supremum statistics (default).
    Threshold,
    /// Bound on sup_t E‖L(t)‖ from the OU second moment.
    Expected,
}

/// N(‖F1‖ + ‖F2‖ + ‖F0(0)‖ + ‖Σ‖_F √((1 − e^{−2λT})/(2λ))).
pub fn lambda_expected(order: usize, f1_norm: f64, f2_norm: f64, f0_init_norm: f64, sigma_f: f64, lambda_min: f64, t: f64) -> f64 {
    let s2 = -(-2.0 * lambda_min * t).exp_m1() / (2.0 * lambda_min);
    order as f64 * (f1_norm + f2_norm + f0_init_norm + sigma_f * s2.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub k: f64,
    pub c: Complex64,
}

#[derive(Debug, Clone)]
pub struct KernelQuadrature {
    pub beta: f64,
    /// Truncation K of the k integral.
    pub k_max: f64,
    pub h1: f64,
    /// Gauss points per panel.
    pub q: usize,
    pub panels_per_side: usize,
    pub c_beta: f64,
    /// Λ used for h1 (0 when h1 was given explicitly).
    pub lambda: f64,
    pub nodes: Vec<Node>,
}

impl KernelQuadrature {
    /// Composite Gauss–Legendre of order `q` on 2m panels of width K/m with m = ⌈K/h1⌉.
    pub fn explicit(beta: f64, k_max: f64, h1: f64, q: usize) -> Result<Self> {
        check_beta(beta)?;
        if !(k_max > 0.0 && h1 > 0.0) || q == 0 {
            return Err(invalid("K, h1 and Q must be positive"));
        }
        let m = ((k_max / h1) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let h1 = k_max / m as f64;
        let (x, w) = gauss_legendre(q);
        let mut nodes = Vec::with_capacity(2 * m * q);
        for p in 0..2 * m {
            let lo = -k_max + p as f64 * h1;
            for (xi, wi) in x.iter().zip(&w) {
                let k = lo + 0.5 * h1 * (xi + 1.0);
                nodes.push(Node { k, c: kernel_eval(beta, k) * (0.5 * h1 * wi) });
            }
        }
        Ok(Self { beta, k_max, h1, q, panels_per_side: m, c_beta: c_beta(beta), lambda: 0.0, nodes })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Σ|c|.
    pub fn abs_weight_sum(&self) -> f64 {
        self.nodes.iter().map(|n| n.c.norm()).sum()
    }

    /// Σc (≈ ∫g = 1).
    pub fn weight_sum(&self) -> Complex64 {
        self.nodes.iter().map(|n| n.c).sum()
    }
}

/// K from the closed-form tail at ε/2; Q = ⌈log₄(8K/(3C_β·ε/2))⌉; h1 = 1/(e·max(TΛ, 1)).
/// The quadrature gets the other half of ε. The cap h1 ≤ 1/e keeps the panels
/// resolving g itself when TΛ is small (T = 0 included).
pub fn choose_params(beta: f64, eps: f64, t: f64, lambda: f64) -> Result<KernelQuadrature> {
    check_beta(beta)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid("eps must lie in (0, 1)"));
    }
    if !(t >= 0.0 && lambda > 0.0) {
        return Err(invalid("need T >= 0 and a positive Lambda"));
    }
    let k_max = truncation_k(beta, 0.5 * eps)?;
    let cb = c_beta(beta);
    let q = ((8.0 * k_max / (3.0 * cb * 0.5 * eps)).ln() / 4f64.ln()).ceil().max(1.0) as usize;
    let h1 = 1.0 / (E * (t * lambda).max(1.0));
    let mut quad = KernelQuadrature::explicit(beta, k_max, h1, q)?;
    quad.lambda = lambda;
    Ok(quad)
}

#[derive(Debug, Clone)]
pub struct CartesianPair {
    pub l: DenseMatrix,
    pub h: DenseMatrix,
}

/// L = (A + A†)/2, H = (A − A†)/(2i).
pub fn cartesian_split(a: &DenseMatrix) -> CartesianPair {
    let adj = a.adjoint();
    let l = (a + &adj) * Complex64::new(0.5, 0.0);
    let h = (a - &adj) * Complex64::new(0.0, -0.5);
    CartesianPair { l, h }
}

/// Mean energy input bound V = ‖F0(0)‖² + ‖Σ‖_F²/(2λT)·(T − (1 − e^{−2λT})/(2λ)).
pub fn v_ou_bound(sigma_f: f64, lambda_min: f64, t: f64, f0_init_norm: f64) -> f64 {
    let base = f0_init_norm * f0_init_norm;
    if t <= 0.0 {
        return base;
    }
    let s = -(-2.0 * lambda_min * t).exp_m1() / (2.0 * lambda_min);
    base + sigma_f * sigma_f / (2.0 * lambda_min * t) * (t - s)
}

/// M = ⌈4T(Σ|c|)²V/(δ(ε/2)²)⌉, at least 1.
pub fn m_choice(t: f64, delta: f64, eps: f64, abs_weight_sum: f64, v: f64) -> Result<usize> {
    if !(t > 0.0 && delta > 0.0 && eps > 0.0 && abs_weight_sum > 0.0 && v >= 0.0) {
        return Err(invalid("m_choice needs positive T, delta, eps, sum|c| and V >= 0"));
    }
    let m = 4.0 * t * abs_weight_sum * abs_weight_sum * v / (delta * (0.5 * eps) * (0.5 * eps));
    let m = (m * (1.0 - 1e-12)).ceil().max(1.0);
    Ok(if m >= usize::MAX as f64 { usize::MAX } else { m as usize })
}

/// S_1..S_M iid Uniform[0, T), independent of the path noise.
pub fn duhamel_times(t: f64, m: usize, seed: u64, stream: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, domain::DUHAMEL_TIMES, stream);
    (0..m).map(|_| r.random::<f64>() * t).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineKind {
    Reference,
    DysonMc,
    Riemann,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Engine {
    /// Midpoint product of exact exponentials, steps ≤ `step`.
    Reference { step: f64 },
    /// Monte-Carlo truncated Dyson series on equal segments.
    DysonMc { segments: usize, order: usize, samples: Vec<usize>, seed: u64 },
    /// Left-endpoint Riemann Dyson sums with node spacing ≤ `step`.
    Riemann { segments: usize, order: usize, step: f64 },
}

impl Engine {
    pub fn kind(&self) -> EngineKind {
        match self {
            Engine::Reference { .. } => EngineKind::Reference,
            Engine::DysonMc { .. } => EngineKind::DysonMc,
            Engine::Riemann { .. } => EngineKind::Riemann,
        }
    }
}

/// Dyson streams for Duhamel partial segments start here; segment i uses stream i.
const PARTIAL_STREAM_BASE: u64 = 1 << 40;

#[derive(Debug, Clone)]
struct Interval {
    start: f64,
    end: f64,
    /// Reference: Duhamel indices with S_j = start. Dyson/Riemann: S_j ∈ [start, end).
    duhamel: Vec<usize>,
}

/// Time discretization shared by all nodes, with the Duhamel times placed.
#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub t_end: f64,
    pub engine: Engine,
    pub duhamel_times: Vec<f64>,
    /// T/M.
    pub duhamel_weight: f64,
    intervals: Vec<Interval>,
}

impl SweepPlan {
    pub fn new(t_end: f64, engine: Engine, duhamel_times: Vec<f64>, duhamel_weight: f64) -> Result<Self> {
        if !(t_end >= 0.0) {
            return Err(invalid("T must be nonnegative"));
        }
        if duhamel_times.iter().any(|&s| !(s >= 0.0 && s < t_end)) {
            return Err(invalid("Duhamel times must lie in [0, T)"));
        }
        let intervals = match &engine {
            Engine::Reference { step } => {
                if !(*step > 0.0) {
                    return Err(invalid("reference step must be positive"));
                }
                let mut cuts = step_grid(0.0, t_end, *step);
                cuts.extend_from_slice(&duhamel_times);
                cuts.sort_by(f64::total_cmp);
                cuts.dedup();
                let mut iv: Vec<Interval> =
                    cuts.windows(2).map(|w| Interval { start: w[0], end: w[1], duhamel: Vec::new() }).collect();
                for (j, &s) in duhamel_times.iter().enumerate() {
                    let i = iv.partition_point(|x| x.start < s);
                    iv[i].duhamel.push(j);
                }
                iv
            }
            Engine::DysonMc { segments, order, .. } | Engine::Riemann { segments, order, .. } => {
                if *segments == 0 || *order == 0 {
                    return Err(invalid("segments and Dyson order must be at least 1"));
                }
                if let Engine::DysonMc { samples, .. } = &engine {
                    DysonConfig::new(*order, samples.clone(), 1.0, 0)?;
                } else if let Engine::Riemann { step, .. } = &engine {
                    if !(*step > 0.0) {
                        return Err(invalid("Riemann step must be positive"));
                    }
                }
                if t_end == 0.0 {
                    Vec::new()
                } else {
                    let grid = uniform_grid(t_end, *segments);
                    let mut iv: Vec<Interval> =
                        grid.windows(2).map(|w| Interval { start: w[0], end: w[1], duhamel: Vec::new() }).collect();
                    for (j, &s) in duhamel_times.iter().enumerate() {
                        let i = iv.partition_point(|x| x.end <= s).min(iv.len() - 1);
                        iv[i].duhamel.push(j);
                    }
                    iv
                }
            }
        };
        Ok(Self { t_end, engine, duhamel_times, duhamel_weight, intervals })
    }

    pub fn step_count(&self) -> usize {
        self.intervals.len()
    }

    /// Duhamel pieces use one sample per order: they stay unbiased and their
    /// extra variance enters with weight T/M.
    fn dyson_config(&self, tau: f64, partial: bool) -> Option<DysonConfig> {
        match &self.engine {
            Engine::DysonMc { order, samples, seed, .. } => Some(DysonConfig {
                order: *order,
                samples: if partial { vec![1; *order] } else { samples.clone() },
                segment_tau: tau,
                seed: *seed,
            }),
            _ => None,
        }
    }

    fn riemann_steps(&self, len: f64) -> usize {
        match &self.engine {
            Engine::Riemann { step, .. } => ((len / step) * (1.0 - 1e-12)).ceil().max(1.0) as usize,
            _ => 0,
        }
    }

    /// Times at which the generator is read on full steps (not Duhamel pieces).
    pub fn step_times(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (i, iv) in self.intervals.iter().enumerate() {
            match &self.engine {
                Engine::Reference { .. } => out.push(0.5 * (iv.start + iv.end)),
                Engine::DysonMc { .. } => {
                    let cfg = self.dyson_config(iv.end - iv.start, false).unwrap_or_else(|| unreachable!());
                    out.extend(tds_sample_times(&cfg, iv.start, iv.end, i as u64));
                }
                Engine::Riemann { .. } => out.extend(riemann_times(iv.start, iv.end, self.riemann_steps(iv.end - iv.start))),
            }
        }
        out
    }

    /// Every time at which A or b will be read; extend OU paths at these first.
    pub fn evaluation_times(&self) -> Vec<f64> {
        let mut out = self.step_times();
        out.extend_from_slice(&self.duhamel_times);
        for iv in &self.intervals {
            for &j in &iv.duhamel {
                let s = self.duhamel_times[j];
                match &self.engine {
                    Engine::Reference { .. } => {}
                    Engine::DysonMc { .. } => {
                        let cfg = self.dyson_config(iv.end - s, true).unwrap_or_else(|| unreachable!());
                        out.extend(tds_sample_times(&cfg, s, iv.end, PARTIAL_STREAM_BASE + j as u64));
                    }
                    Engine::Riemann { .. } => out.extend(riemann_times(s, iv.end, self.riemann_steps(iv.end - s))),
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
enum StepOp {
    Exp { tau: f64, l: DenseMatrix, h: DenseMatrix },
    /// Σ_p k^p C_p.
    Poly(Vec<DenseMatrix>),
}

#[derive(Debug, Clone)]
struct Step {
    op: StepOp,
    /// Added before the step (reference engine).
    before: Option<DenseMatrix>,
    /// Columns v_p of Σ_p k^p v_p, added after the step (Dyson engines).
    after: Option<DenseMatrix>,
}

/// Node-independent data of a [`SweepPlan`]; [`PreparedSweep::run`] evaluates one node.
#[derive(Debug, Clone)]
pub struct PreparedSweep {
    pub dim: usize,
    steps: Vec<Step>,
}

/// Generator source A(t) (du/dt = −A u + b).
pub type GeneratorFn<'a> = &'a dyn Fn(f64) -> Result<DenseMatrix>;
/// Inhomogeneity source b(t).
pub type ForcingFn<'a> = &'a dyn Fn(f64) -> Result<ComplexVector>;

pub fn prepare_sweep(plan: &SweepPlan, dim_a: usize, a_of_t: GeneratorFn, b_of_t: Option<ForcingFn>) -> Result<PreparedSweep> {
    let failure: Cell<Option<Error>> = Cell::new(None);
    let lh = |t: f64| match a_of_t(t) {
        Ok(a) if a.nrows() == dim_a && a.ncols() == dim_a => {
            let p = cartesian_split(&a);
            (p.l, p.h)
        }
        other => {
            failure.set(Some(other.err().unwrap_or_else(|| dim("generator has the wrong size"))));
            (DenseMatrix::zeros(dim_a, dim_a), DenseMatrix::zeros(dim_a, dim_a))
        }
    };
    let forcing = |j: usize| -> Result<DenseMatrix> {
        let b_of_t = b_of_t.ok_or_else(|| invalid("Duhamel times given without a forcing source"))?;
        let b = b_of_t(plan.duhamel_times[j])?;
        if b.len() != dim_a {
            return Err(dim("forcing has the wrong length"));
        }
        Ok(DenseMatrix::from_column_slice(dim_a, 1, b.as_slice()) * Complex64::new(plan.duhamel_weight, 0.0))
    };
    let eye = DenseMatrix::identity(dim_a, dim_a);
    let mut steps = Vec::with_capacity(plan.intervals.len());
    for (i, iv) in plan.intervals.iter().enumerate() {
        let tau = iv.end - iv.start;
        let step = match &plan.engine {
            Engine::Reference { .. } => {
                let (l, h) = lh(0.5 * (iv.start + iv.end));
                let mut before: Option<DenseMatrix> = None;
                for &j in &iv.duhamel {
                    let v = forcing(j)?;
                    before = Some(match before {
                        Some(acc) => acc + v,
                        None => v,
                    });
                }
                Step { op: StepOp::Exp { tau, l, h }, before, after: None }
            }
            Engine::DysonMc { .. } | Engine::Riemann { .. } => {
                let apply = |s: f64, stream: u64, x: &DenseMatrix| -> Vec<DenseMatrix> {
                    match &plan.engine {
                        Engine::Riemann { order, .. } => riemann_poly_apply(&lh, s, iv.end, *order, plan.riemann_steps(iv.end - s), x),
                        _ => {
                            let cfg = plan.dyson_config(iv.end - s, stream >= PARTIAL_STREAM_BASE).unwrap_or_else(|| unreachable!());
                            tds_poly_apply(&lh, s, iv.end, &cfg, stream, x)
                        }
                    }
                };
                let coeffs = apply(iv.start, i as u64, &eye);
                let mut after: Vec<DenseMatrix> = Vec::new();
                for &j in &iv.duhamel {
                    let piece = apply(plan.duhamel_times[j], PARTIAL_STREAM_BASE + j as u64, &forcing(j)?);
                    if after.is_empty() {
                        after = piece;
                    } else {
                        for (a, p) in after.iter_mut().zip(piece) {
                            *a += p;
                        }
                    }
                }
                let after = (!after.is_empty()).then(|| {
                    let mut m = DenseMatrix::zeros(dim_a, after.len());
                    for (p, v) in after.iter().enumerate() {
                        m.set_column(p, &v.column(0));
                    }
                    m
                });
                Step { op: StepOp::Poly(coeffs), before: None, after }
            }
        };
        if let Some(e) = failure.take() {
            return Err(e);
        }
        steps.push(step);
    }
    Ok(PreparedSweep { dim: dim_a, steps })
}

impl PreparedSweep {
    /// Propagates the d×c block `x` through every step, column j with node
    /// `ks[j]`. Duhamel injections are added to every column when `inject`.
    pub fn propagate(&self, ks: &[f64], mut x: DenseMatrix, inject: bool) -> Result<DenseMatrix> {
        let cols = x.ncols();
        if x.nrows() != self.dim || ks.len() != cols {
            return Err(dim("sweep input has the wrong shape"));
        }
        let one = Complex64::new(1.0, 0.0);
        let max_deg = self.steps.iter().map(|s| s.after.as_ref().map_or(0, |a| a.ncols())).max().unwrap_or(0);
        // powers[(p, j)] = ks[j]^p for the injection polynomials.
        let powers = DenseMatrix::from_fn(max_deg, cols, |p, j| Complex64::new(ks[j].powi(p as i32), 0.0));
        for step in &self.steps {
            if inject {
                if let Some(v) = &step.before {
                    for mut col in x.column_iter_mut() {
                        col += v;
                    }
                }
            }
            match &step.op {
                StepOp::Exp { tau, l, h } => {
                    let mut cached: Option<(f64, DenseMatrix)> = None;
                    for (j, &k) in ks.iter().enumerate() {
                        if cached.as_ref().is_none_or(|(ck, _)| *ck != k) {
                            cached = Some((k, unitary_exp(&(l * Complex64::new(k, 0.0) + h), *tau)?));
                        }
                        let u = &cached.as_ref().unwrap_or_else(|| unreachable!()).1;
                        let col = u * x.column(j);
                        x.set_column(j, &col);
                    }
                }
                StepOp::Poly(c) => {
                    let last = c.len() - 1;
                    let mut y = &c[last] * &x;
                    for p in (0..last).rev() {
                        for (j, mut col) in y.column_iter_mut().enumerate() {
                            col *= Complex64::new(ks[j], 0.0);
                        }
                        y.gemm(one, &c[p], &x, one);
                    }
                    x = y;
                }
            }
            if inject {
                if let Some(a) = &step.after {
                    x.gemm(one, a, &powers.rows(0, a.ncols()), one);
                }
            }
        }
        Ok(x)
    }

    /// U(k)·x for a single node.
    pub fn run(&self, k: f64, x: DenseMatrix, inject: bool) -> Result<DenseMatrix> {
        let ks = vec![k; x.ncols()];
        self.propagate(&ks, x, inject)
    }

    /// Σ_i c_i U(k_i)(y0 + Duhamel) over `nodes`, or 2·Re of it when `fold`
    /// (mirror nodes −k_i are then implied).
    pub fn nodes_term(&self, nodes: &[Node], y0: &ComplexVector, fold: bool) -> Result<ComplexVector> {
        if y0.len() != self.dim {
            return Err(dim("initial vector has the wrong length"));
        }
        let ks: Vec<f64> = nodes.iter().map(|n| n.k).collect();
        let x0 = DenseMatrix::from_fn(self.dim, nodes.len(), |i, _| y0[i]);
        let y = self.propagate(&ks, x0, true)?;
        let cs = ComplexVector::from_iterator(nodes.len(), nodes.iter().map(|n| n.c));
        let out = y * cs;
        Ok(if fold { out.map(|z| Complex64::new(2.0 * z.re, 0.0)) } else { out })
    }
}

/// Nodes per batch in [`combine`]; callers parallelizing over batches should use the same size.
pub const NODE_BATCH: usize = 256;

/// Nodes to evaluate: all of them, or only k > 0 when folding conjugate pairs.
pub fn active_nodes(quad: &KernelQuadrature, fold: bool) -> Vec<Node> {
    quad.nodes.iter().copied().filter(|n| !fold || n.k > 0.0).collect()
}

/// Σ_j c_j U(T, ·, k_j) applied to y0 plus the Duhamel injections, summed
/// batch by batch in node order. `fold` halves the work for real A, y0 and b,
/// where U(−k) = conj U(k).
pub fn combine(quad: &KernelQuadrature, sweep: &PreparedSweep, y0: &ComplexVector, fold: bool) -> Result<ComplexVector> {
    let nodes = active_nodes(quad, fold);
    let mut acc = ComplexVector::zeros(sweep.dim);
    for batch in nodes.chunks(NODE_BATCH) {
        acc += sweep.nodes_term(batch, y0, fold)?;
    }
    Ok(acc)
}

/// Σ_j c_j U(T, 0, k_j) as a matrix.
pub fn homogeneous_propagator(quad: &KernelQuadrature, a_of_t: GeneratorFn, dim_a: usize, t_end: f64, engine: Engine) -> Result<DenseMatrix> {
    let plan = SweepPlan::new(t_end, engine, Vec::new(), 0.0)?;
    let sweep = prepare_sweep(&plan, dim_a, a_of_t, None)?;
    let eye = DenseMatrix::identity(dim_a, dim_a);
    let mut acc = DenseMatrix::zeros(dim_a, dim_a);
    for node in &quad.nodes {
        acc += sweep.run(node.k, eye.clone(), false)? * node.c;
    }
    Ok(acc)
}

/// (T/M) Σ_j Σ_i c_i U(T, S_j, k_i) b(S_j) with S_j from [`duhamel_times`].
#[allow(clippy::too_many_arguments)]
pub fn duhamel_mc(
    quad: &KernelQuadrature,
    a_of_t: GeneratorFn,
    b_of_t: ForcingFn,
    dim_a: usize,
    t_end: f64,
    m: usize,
    seed: u64,
    engine: Engine,
) -> Result<ComplexVector> {
    if m == 0 {
        return Err(invalid("M must be at least 1"));
    }
    if !(t_end > 0.0) {
        return Err(invalid("the Duhamel term needs T > 0"));
    }
    let times = duhamel_times(t_end, m, seed, 0);
    let plan = SweepPlan::new(t_end, engine, times, t_end / m as f64)?;
    let sweep = prepare_sweep(&plan, dim_a, a_of_t, Some(b_of_t))?;
    combine(quad, &sweep, &ComplexVector::zeros(dim_a), false)
}

/// sup ‖L‖ and sup ‖H‖ of A over the given times.
pub fn pair_sup(a_of_t: GeneratorFn, times: &[f64]) -> Result<(f64, f64)> {
    let mut out = (0.0f64, 0.0f64);
    for &t in times {
        let p = cartesian_split(&a_of_t(t)?);
        out.0 = out.0.max(crate::numerics::spectral_norm(&p.l));
        out.1 = out.1.max(crate::numerics::spectral_norm(&p.h));
    }
    Ok(out)
}

/// Segments for the Dyson engines: τ(KΛ_L + Λ_H) ≤ ln 2 covers every node.
pub fn dyson_segments(quad: &KernelQuadrature, lambda_l: f64, lambda_h: f64, t_end: f64) -> usize {
    segment_count(t_end, quad.k_max * lambda_l + lambda_h)
}

/// Σ_i |c_i|·Σ_segments (τΛ_i e/(𝒦+1))^{𝒦+1}·scale with Λ_i = |k_i|Λ_L + Λ_H.
pub fn dyson_truncation_budget(quad: &KernelQuadrature, segments: usize, order: usize, t_end: f64, lambda_l: f64, lambda_h: f64, scale: f64) -> f64 {
    let tau = t_end / segments.max(1) as f64;
    quad.nodes
        .iter()
        .map(|n| n.c.norm() * segments as f64 * truncation_envelope(tau, n.k.abs() * lambda_l + lambda_h, order))
        .sum::<f64>()
        * scale
}

#[derive(Debug, Clone)]
pub struct SlchsConfig {
    /// Carleman truncation N.
    pub order: usize,
    pub t_end: f64,
    pub eps: f64,
    pub delta: f64,
    pub beta: f64,
    pub seed: u64,
    pub path_index: u64,
    pub engine: EngineKind,
    pub h1_rule: H1Rule,
    /// Steps of the base OU grid (stability check, Λ pilot).
    pub base_steps: usize,
    pub pilot_paths: usize,
    pub pilot_grid: usize,
    pub reference_step: f64,
    pub riemann_step: f64,
    /// Upper limit on each N_k; the sufficient sizes are far beyond desk scale.
    pub sample_cap: usize,
    /// Optional upper limit on the Duhamel sample size M.
    pub duhamel_cap: Option<usize>,
    /// Evaluate only k > 0 and take 2·Re (exact for the real Carleman data).
    pub fold_conjugate: bool,
}

impl SlchsConfig {
    pub fn new(order: usize, t_end: f64, eps: f64, delta: f64, seed: u64, engine: EngineKind) -> Self {
        Self {
            order,
            t_end,
            eps,
            delta,
            beta: 0.7,
            seed,
            path_index: 0,
            engine,
            h1_rule: H1Rule::Threshold,
            base_steps: 200,
            pilot_paths: 100,
            pilot_grid: 100,
            reference_step: 1e-2,
            riemann_step: 1e-3,
            sample_cap: 8,
            duhamel_cap: None,
            fold_conjugate: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Solved,
    /// Stability predicate failed on the sampled path; no solution reported.
    Unstable,
}

#[derive(Debug, Clone)]
pub struct SlchsDiagnostics {
    pub status: SolveStatus,
    pub seed: u64,
    pub path_index: u64,
    pub engine: EngineKind,
    pub lift_dim: usize,
    pub beta: f64,
    pub k_max: f64,
    pub h1: f64,
    pub q: usize,
    pub node_count: usize,
    pub c_beta: f64,
    pub abs_weight_sum: f64,
    pub h1_rule: H1Rule,
    /// Λ entering h1.
    pub lambda_h1: f64,
    /// Empirical E sup‖F0‖ from the pilot (NaN under the expected rule).
    pub mean_sup_f0: f64,
    pub eps_kernel_tail: f64,
    pub eps_quadrature: f64,
    pub eps_duhamel: f64,
    pub eps_tds: f64,
    pub delta_quadrature: f64,
    pub delta_duhamel: f64,
    pub delta_mc: f64,
    pub v_bound: f64,
    pub m_duhamel: usize,
    pub m_duhamel_sufficient: usize,
    pub stable: bool,
    /// sup‖F0‖ on the base grid.
    pub sup_f0: f64,
    /// min over the base grid of λ_min(L(t)); LCHS needs L ⪰ 0.
    pub min_l_eigenvalue: f64,
    pub segments: usize,
    pub dyson_order: usize,
    pub truncation_in_range: bool,
    pub samples_sufficient: Vec<usize>,
    pub samples_used: Vec<usize>,
    pub samples_capped: bool,
    pub lambda_l: f64,
    pub lambda_h: f64,
    /// Dyson truncation envelope summed over nodes and segments (0 for the reference engine).
    pub engine_truncation: f64,
    pub y0_norm: f64,
    /// (T/M)·Σ‖b(S_j)‖.
    pub duhamel_l1: f64,
    /// ε(‖y0‖ + duhamel_l1) + ε/2 + engine_truncation.
    pub lchs_budget: f64,
    /// ‖Im y_T‖.
    pub imag_norm: f64,
}

#[derive(Debug, Clone)]
pub struct SlchsRecord {
    pub y_t: Option<ComplexVector>,
    pub x_t: Option<RealVector>,
    pub diagnostics: SlchsDiagnostics,
    /// The realization used, extended at every evaluation time.
    pub path: OUPath,
}

/// ‖sym(−A_fixed)‖, ‖antisym(A_fixed)‖ and the forcing gain N: the F0 part of
/// A_N has norm ≤ N‖F0‖ (block-bidiagonal, each block a Kronecker sum of ≤ N terms).
fn split_bounds(lift: &CarlemanLift) -> (f64, f64, f64) {
    let a = -lift.matrix(&RealVector::zeros(lift.n));
    let at = a.transpose();
    let l = (&a + &at) * 0.5;
    let h = (&a - &at) * 0.5;
    (spectral_norm_real(&l), spectral_norm_real(&h), lift.order as f64)
}

fn min_l_eigenvalue(lift: &CarlemanLift, values: &[RealVector]) -> Result<f64> {
    let mut out = f64::INFINITY;
    for f in values {
        let a: RealMatrix = -lift.matrix(f);
        let (vals, _) = symmetric_eigen(&a)?;
        out = out.min(vals[0]);
    }
    Ok(out)
}

/// Full pipeline on one seeded realization: base path, lift, kernel quadrature,
/// Duhamel sampling, engine sizing, exact path extension, node sweep.
pub fn solve_slchs(sys: &QuadraticSystem, cfg: &SlchsConfig) -> Result<SlchsRecord> {
    let t = cfg.t_end;
    if !(t > 0.0) {
        return Err(invalid("T must be positive"));
    }
    if !(cfg.eps > 0.0 && cfg.eps < 1.0 && cfg.delta > 0.0 && cfg.delta < 1.0) {
        return Err(invalid("eps and delta must lie in (0, 1)"));
    }
    if cfg.sample_cap == 0 || cfg.base_steps == 0 || cfg.duhamel_cap == Some(0) {
        return Err(invalid("caps and grid sizes must be positive"));
    }
    let lift = build_lift(sys, cfg.order)?;
    let ou: &Arc<OUProcess> = &sys.ou;
    let base = sample_path(ou, &uniform_grid(t, cfg.base_steps), cfg.seed, cfg.path_index)?;
    let sup_f0 = base.sup_norm(t);
    let stable = stability_predicate(sys, sup_f0)?;
    let third = cfg.delta / 3.0;
    let (lambda_h1, mean_sup_f0) = match cfg.h1_rule {
        H1Rule::Threshold => {
            let st = sup_statistics(ou, t, cfg.pilot_paths, cfg.pilot_grid, cfg.seed ^ domain::MISC)?;
            (st.lambda_threshold(cfg.order, sys.f1_norm(), sys.f2_norm(), third), st.mean_sup_estimate)
        }
        H1Rule::Expected => (
            lambda_expected(cfg.order, sys.f1_norm(), sys.f2_norm(), ou.f0_init.norm(), ou.sigma_frobenius(), ou.lambda_min, t),
            f64::NAN,
        ),
    };
    let quad = choose_params(cfg.beta, cfg.eps, t, lambda_h1)?;
    let abs_sum = quad.abs_weight_sum();
    let v_bound = v_ou_bound(ou.sigma_frobenius(), ou.lambda_min, t, ou.f0_init.norm());
    let m_sufficient = m_choice(t, third, cfg.eps, abs_sum, v_bound)?;
    let m = cfg.duhamel_cap.map_or(m_sufficient, |c| m_sufficient.min(c));
    let eps_tds = cfg.eps / (8.0 * abs_sum);
    let (l0, h0, gain) = split_bounds(&lift);
    let y0 = to_complex_vec(&lift.lift_state(&sys.x_init));
    let mut diag = SlchsDiagnostics {
        status: if stable { SolveStatus::Solved } else { SolveStatus::Unstable },
        seed: cfg.seed,
        path_index: cfg.path_index,
        engine: cfg.engine,
        lift_dim: lift.dim,
        beta: cfg.beta,
        k_max: quad.k_max,
        h1: quad.h1,
        q: quad.q,
        node_count: quad.node_count(),
        c_beta: quad.c_beta,
        abs_weight_sum: abs_sum,
        h1_rule: cfg.h1_rule,
        lambda_h1,
        mean_sup_f0,
        eps_kernel_tail: 0.5 * cfg.eps,
        eps_quadrature: 0.5 * cfg.eps,
        eps_duhamel: 0.5 * cfg.eps,
        eps_tds,
        delta_quadrature: third,
        delta_duhamel: third,
        delta_mc: third,
        v_bound,
        m_duhamel: m,
        m_duhamel_sufficient: m_sufficient,
        stable,
        sup_f0,
        min_l_eigenvalue: min_l_eigenvalue(&lift, &base.values)?,
        segments: 0,
        dyson_order: 0,
        truncation_in_range: true,
        samples_sufficient: Vec::new(),
        samples_used: Vec::new(),
        samples_capped: false,
        lambda_l: 0.0,
        lambda_h: 0.0,
        engine_truncation: 0.0,
        y0_norm: y0.norm(),
        duhamel_l1: 0.0,
        lchs_budget: f64::NAN,
        imag_norm: f64::NAN,
    };
    if !stable {
        return Ok(SlchsRecord { y_t: None, x_t: None, diagnostics: diag, path: base });
    }
    let s_times = duhamel_times(t, m, cfg.seed, cfg.path_index);
    let weight = t / m as f64;
    // Size segments from the base-grid sup of ‖F0‖, then confirm on the extended path.
    let mut f0_sup = sup_f0 * 1.05;
    let (plan, path) = loop {
        let (lam_l, lam_h) = (l0 + gain * f0_sup, h0 + gain * f0_sup);
        let engine = match cfg.engine {
            EngineKind::Reference => Engine::Reference { step: cfg.reference_step },
            EngineKind::DysonMc | EngineKind::Riemann => {
                let segments = dyson_segments(&quad, lam_l, lam_h, t);
                let tau = t / segments as f64;
                let eps1 = (eps_tds / segments as f64).min(0.5);
                let order = choose_truncation(eps1)?;
                let sufficient = choose_samples(order, tau, eps1, third, quad.k_max * lam_l + lam_h)?;
                let used: Vec<usize> = sufficient.iter().map(|&n| n.min(cfg.sample_cap)).collect();
                diag.segments = segments;
                diag.dyson_order = order;
                diag.truncation_in_range = truncation_in_range(eps1);
                diag.samples_capped = used != sufficient;
                diag.samples_sufficient = sufficient;
                diag.samples_used = used.clone();
                diag.engine_truncation = dyson_truncation_budget(&quad, segments, order, t, lam_l, lam_h, 1.0);
                if cfg.engine == EngineKind::DysonMc {
                    Engine::DysonMc { segments, order, samples: used, seed: cfg.seed ^ cfg.path_index.rotate_left(32) }
                } else {
                    Engine::Riemann { segments, order, step: cfg.riemann_step }
                }
            }
        };
        diag.lambda_l = lam_l;
        diag.lambda_h = lam_h;
        let plan = SweepPlan::new(t, engine, s_times.clone(), weight)?;
        let path = extend_path(&base, &plan.evaluation_times())?;
        let actual = path.sup_norm(t);
        if cfg.engine == EngineKind::Reference || actual <= f0_sup {
            break (plan, path);
        }
        f0_sup = actual * 1.05;
    };
    if cfg.engine == EngineKind::Reference {
        diag.segments = plan.step_count();
    }
    let lookup = |s: f64| path.value_at(s).ok_or_else(|| invalid("path lacks a required sample time"));
    let a_of_t = |s: f64| -> Result<DenseMatrix> { Ok(to_complex(&(-lift.matrix(lookup(s)?)))) };
    let b_of_t = |s: f64| -> Result<ComplexVector> { Ok(to_complex_vec(&lift.inhomogeneity(lookup(s)?))) };
    let duhamel_l1 = s_times.iter().map(|&s| lookup(s).map(|f| f.norm())).sum::<Result<f64>>()? * weight;
    let sweep = prepare_sweep(&plan, lift.dim, &a_of_t, Some(&b_of_t))?;
    let y = combine(&quad, &sweep, &y0, cfg.fold_conjugate)?;
    diag.engine_truncation *= diag.y0_norm + duhamel_l1;
    diag.duhamel_l1 = duhamel_l1;
    diag.lchs_budget = cfg.eps * (diag.y0_norm + duhamel_l1) + 0.5 * cfg.eps + diag.engine_truncation;
    diag.imag_norm = y.map(|z| z.im).norm();
    let x = RealVector::from_iterator(sys.n, y.iter().take(sys.n).map(|z| z.re));
    Ok(SlchsRecord { y_t: Some(y), x_t: Some(x), diagnostics: diag, path })
}
