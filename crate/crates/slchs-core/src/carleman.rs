//! Carleman linearization: the tensor-power lift y_j ≈ x⊗ʲ truncated at order N.
//!
//! Block row j of A_N holds A_{j−1}^j (from F0), A_j^j (from F1) and
//! A_{j+1}^j (from F2), each a Kronecker sum Σ_p I_{n^p} ⊗ X ⊗ I_{n^{j−1−p}}.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{dim, invalid, Error, Result};
use crate::numerics::{
    eigenvalues_real, matrix_exp_real, spectral_norm_real, tensor_power, DenseMatrix, LyapunovMetric,
    RealMatrix, RealVector,
};
use crate::ou::OUPath;
use crate::quadratic_sde::{
    forcing_at, integrate_frozen_to, prepare_path, step_grid, QuadraticSystem, Trajectory,
    DIVERGENCE_NORM,
};

pub const DEFAULT_DIM_CAP: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triplet {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// n + n² + … + n^N.
pub fn lifted_dim(n: usize, order: usize) -> usize {
    (1..=order).map(|j| n.pow(j as u32)).sum()
}

/// Appends Σ_p I_{n^p} ⊗ X ⊗ I_{n^{j−1−p}} at (row0, col0). X is rows×cols with
/// rows = n and cols ∈ {1, n, n²}.
fn push_kron_sum(out: &mut Vec<Triplet>, x: &[(usize, usize, f64)], x_cols: usize, n: usize, j: usize, row0: usize, col0: usize) {
    for p in 0..j {
        let left = n.pow(p as u32);
        let right = n.pow((j - 1 - p) as u32);
        for a in 0..left {
            for &(i, k, v) in x {
                for b in 0..right {
                    out.push(Triplet {
                        row: row0 + (a * n + i) * right + b,
                        col: col0 + (a * x_cols + k) * right + b,
                        value: v,
                    });
                }
            }
        }
    }
}

fn nonzeros(m: &RealMatrix) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let v = m[(r, c)];
            if v != 0.0 {
                out.push((r, c, v));
            }
        }
    }
    out
}

fn dense_kron_sum(x: &RealMatrix, n: usize, j: usize) -> RealMatrix {
    let rows = n.pow(j as u32);
    let cols = x.ncols() * n.pow(j as u32 - 1);
    let mut trips = Vec::new();
    push_kron_sum(&mut trips, &nonzeros(x), x.ncols(), n, j, 0, 0);
    let mut m = RealMatrix::zeros(rows, cols);
    for t in trips {
        m[(t.row, t.col)] += t.value;
    }
    m
}

/// Truncated lift of a quadratic system. The F0-dependent blocks are stored as
/// one triplet pattern per forcing component, so A(F0) = A_fixed + Σ_k F0_k S_k.
#[derive(Debug, Clone)]
pub struct CarlemanLift {
    pub n: usize,
    pub order: usize,
    pub dim: usize,
    /// Start of block j (1-based) at `offsets[j-1]`.
    pub offsets: Vec<usize>,
    pub fixed: Vec<Triplet>,
    pub forcing: Vec<Vec<Triplet>>,
    pub f1: RealMatrix,
    pub f2: RealMatrix,
    fixed_dense: RealMatrix,
}

pub fn build_lift(sys: &QuadraticSystem, order: usize) -> Result<CarlemanLift> {
    build_lift_capped(sys, order, DEFAULT_DIM_CAP)
}

pub fn build_lift_capped(sys: &QuadraticSystem, order: usize, cap: usize) -> Result<CarlemanLift> {
    if order == 0 {
        return Err(invalid("Carleman order must be at least 1"));
    }
    let n = sys.n;
    let d = lifted_dim(n, order);
    if d > cap {
        return Err(Error::SizeCap { dim: d, cap });
    }
    let offsets: Vec<usize> = (1..=order).map(|j| lifted_dim(n, j - 1)).collect();
    let f1_nz = nonzeros(&sys.f1);
    let f2_nz = nonzeros(&sys.f2);
    let mut fixed = Vec::new();
    for j in 1..=order {
        let row0 = offsets[j - 1];
        push_kron_sum(&mut fixed, &f1_nz, n, n, j, row0, row0);
        if j < order {
            push_kron_sum(&mut fixed, &f2_nz, n * n, n, j, row0, offsets[j]);
        }
    }
    let forcing = (0..n)
        .map(|k| {
            let mut trips = Vec::new();
            for j in 2..=order {
                push_kron_sum(&mut trips, &[(k, 0, 1.0)], 1, n, j, offsets[j - 1], offsets[j - 2]);
            }
            trips
        })
        .collect();
    let mut fixed_dense = RealMatrix::zeros(d, d);
    for t in &fixed {
        fixed_dense[(t.row, t.col)] += t.value;
    }
    Ok(CarlemanLift { n, order, dim: d, offsets, fixed, forcing, f1: sys.f1.clone(), f2: sys.f2.clone(), fixed_dense })
}

impl CarlemanLift {
    /// Dense A_N for the forcing value `f0`.
    pub fn matrix(&self, f0: &RealVector) -> RealMatrix {
        let mut a = self.fixed_dense.clone();
        for (k, trips) in self.forcing.iter().enumerate() {
            let v = f0[k];
            if v != 0.0 {
                for t in trips {
                    a[(t.row, t.col)] += v * t.value;
                }
            }
        }
        a
    }

    /// b_N = (F0, 0, …, 0).
    pub fn inhomogeneity(&self, f0: &RealVector) -> RealVector {
        let mut b = RealVector::zeros(self.dim);
        b.rows_mut(0, self.n).copy_from(f0);
        b
    }

    /// All nonzero entries of A_N(f0), duplicates merged.
    pub fn triplets(&self, f0: &RealVector) -> Vec<Triplet> {
        let mut all: Vec<Triplet> = self.fixed.clone();
        for (k, trips) in self.forcing.iter().enumerate() {
            all.extend(trips.iter().map(|t| Triplet { value: t.value * f0[k], ..*t }));
        }
        all.sort_by(|a, b| (a.row, a.col).cmp(&(b.row, b.col)));
        let mut merged: Vec<Triplet> = Vec::with_capacity(all.len());
        for t in all {
            match merged.last_mut() {
                Some(m) if m.row == t.row && m.col == t.col => m.value += t.value,
                _ => merged.push(t),
            }
        }
        merged.retain(|t| t.value != 0.0);
        merged
    }

    /// Largest number of nonzeros in any row of A_N(f0).
    pub fn max_row_nonzeros(&self, f0: &RealVector) -> usize {
        let mut counts = alloc::vec![0usize; self.dim];
        for t in self.triplets(f0) {
            counts[t.row] += 1;
        }
        counts.into_iter().max().unwrap_or(0)
    }

    pub fn block_range(&self, j: usize) -> core::ops::Range<usize> {
        let start = self.offsets[j - 1];
        start..start + self.n.pow(j as u32)
    }

    /// A_j^j.
    pub fn block_diag(&self, j: usize) -> RealMatrix {
        dense_kron_sum(&self.f1, self.n, j)
    }

    /// A_{j+1}^j (for j = N this is the operator that generates the residual).
    pub fn block_up(&self, j: usize) -> RealMatrix {
        dense_kron_sum(&self.f2, self.n, j)
    }

    /// A_{j−1}^j for j ≥ 2.
    pub fn block_down(&self, j: usize, f0: &RealVector) -> RealMatrix {
        dense_kron_sum(&RealMatrix::from_column_slice(self.n, 1, f0.as_slice()), self.n, j)
    }

    /// (x, x⊗², …, x⊗ᴺ).
    pub fn lift_state(&self, x: &RealVector) -> RealVector {
        let mut y = RealVector::zeros(self.dim);
        let mut p = x.clone();
        for j in 1..=self.order {
            if j > 1 {
                p = p.kronecker(x);
            }
            y.rows_mut(self.offsets[j - 1], p.len()).copy_from(&p);
        }
        y
    }

    pub fn block<'a>(&self, y: &'a RealVector, j: usize) -> nalgebra::DVectorView<'a, f64> {
        let r = self.block_range(j);
        y.rows(r.start, r.len())
    }
}

#[derive(Debug, Clone)]
pub struct Residual {
    pub vector: RealVector,
    pub norm: f64,
    pub bound: f64,
}

/// R_N(x): A_{N+1}^N x⊗^{N+1} in the last block.
pub fn residual(lift: &CarlemanLift, x: &RealVector) -> Result<Residual> {
    let n = lift.n;
    if x.len() != n {
        return Err(dim("state length differs from lift"));
    }
    let order = lift.order;
    let q = &lift.f2 * x.kronecker(x);
    let mut last = RealVector::zeros(n.pow(order as u32));
    for p in 0..order {
        let v = tensor_power(x, p).kronecker(&q).kronecker(&tensor_power(x, order - 1 - p));
        last += v;
    }
    let norm = last.norm();
    let mut vector = RealVector::zeros(lift.dim);
    let r = lift.block_range(order);
    vector.rows_mut(r.start, r.len()).copy_from(&last);
    let bound = order as f64 * spectral_norm_real(&lift.f2) * x.norm().powi(order as i32 + 1);
    Ok(Residual { vector, norm, bound })
}

/// Solves dy/dt = A_N(t) y + b_N(t) with A and b frozen at each step's
/// midpoint forcing and the exact affine update. Also returns the extended path.
pub fn integrate_truncated(
    lift: &CarlemanLift,
    x_init: &RealVector,
    path: &OUPath,
    t_end: f64,
    dt_max: f64,
) -> Result<(Trajectory, OUPath)> {
    if path.dim() != lift.n || x_init.len() != lift.n {
        return Err(dim("path or initial state dimension differs from lift"));
    }
    let path = prepare_path(path, t_end, dt_max)?;
    let grid = step_grid(path.times[0], t_end, dt_max);
    let d = lift.dim;
    let mut y = lift.lift_state(x_init);
    let mut states = Vec::with_capacity(grid.len());
    states.push(y.clone());
    let mut cache: Option<(f64, RealVector, RealMatrix)> = None;
    for w in grid.windows(2) {
        let h = w[1] - w[0];
        let f_mid = forcing_at(&path, 0.5 * (w[0] + w[1]))?;
        let reuse = matches!(&cache, Some((ch, cf, _)) if (ch - h).abs() <= 1e-14 * h && cf == f_mid);
        if !reuse {
            let mut aug = RealMatrix::zeros(d + 1, d + 1);
            aug.view_mut((0, 0), (d, d)).copy_from(&lift.matrix(f_mid));
            aug.view_mut((0, d), (lift.n, 1)).copy_from(f_mid);
            cache = Some((h, f_mid.clone(), matrix_exp_real(&aug, h)?));
        }
        let e = &cache.as_ref().unwrap().2;
        y = e.view((0, 0), (d, d)) * &y + e.view((0, d), (d, 1));
        let norm = y.norm();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::Divergence { t: w[1], norm });
        }
        states.push(y.clone());
    }
    Ok((Trajectory { times: grid, states }, path))
}

/// ⊕_j P⊗ʲ on the lifted space.
#[derive(Debug, Clone)]
pub struct LiftedMetric {
    pub blocks: Vec<RealMatrix>,
    pub offsets: Vec<usize>,
}

impl LiftedMetric {
    pub fn new(metric: &LyapunovMetric, lift: &CarlemanLift) -> Self {
        let blocks = (1..=lift.order).map(|j| crate::numerics::real_part(&metric.kron_power(j).p)).collect();
        Self { blocks, offsets: lift.offsets.clone() }
    }

    pub fn norm(&self, y: &RealVector) -> f64 {
        let mut sq = 0.0;
        for (p, &off) in self.blocks.iter().zip(&self.offsets) {
            let v = y.rows(off, p.nrows());
            sq += v.dot(&(p * v));
        }
        sq.max(0.0).sqrt()
    }

    /// Norm of block j alone (1-based).
    pub fn block_norm(&self, y: &RealVector, j: usize) -> f64 {
        let p = &self.blocks[j - 1];
        let v = y.rows(self.offsets[j - 1], p.nrows());
        v.dot(&(p * v)).max(0.0).sqrt()
    }

    /// P_N with its square-root factors, for log norms on the lifted space.
    pub fn lyapunov(metric: &LyapunovMetric, lift: &CarlemanLift) -> LyapunovMetric {
        let d = lift.dim;
        let mut p = DenseMatrix::zeros(d, d);
        let mut ph = p.clone();
        let mut phi = p.clone();
        for j in 1..=lift.order {
            let k = metric.kron_power(j);
            let off = lift.offsets[j - 1];
            let m = k.p.nrows();
            p.view_mut((off, off), (m, m)).copy_from(&k.p);
            ph.view_mut((off, off), (m, m)).copy_from(&k.p_half);
            phi.view_mut((off, off), (m, m)).copy_from(&k.p_half_inv);
        }
        LyapunovMetric { p, p_half: ph, p_half_inv: phi }
    }

    /// The full P_N matrix.
    pub fn dense(&self) -> RealMatrix {
        let d: usize = self.blocks.iter().map(|b| b.nrows()).sum();
        let mut m = RealMatrix::zeros(d, d);
        for (p, &off) in self.blocks.iter().zip(&self.offsets) {
            m.view_mut((off, off), (p.nrows(), p.ncols())).copy_from(p);
        }
        m
    }
}

/// η_j(t) = x(t)⊗ʲ − y_j(t) on a shared grid. Both sides see F0 frozen at
/// step midpoints, so η is the truncation error alone.
#[derive(Debug, Clone)]
pub struct TruncationError {
    pub times: Vec<f64>,
    pub eta: Vec<RealVector>,
    pub norm: Vec<f64>,
    pub p_norm: Vec<f64>,
    pub first_block_norm: Vec<f64>,
    pub first_block_p_norm: Vec<f64>,
    pub reference: Trajectory,
    pub truncated: Trajectory,
}

pub fn truncation_error(
    sys: &QuadraticSystem,
    lift: &CarlemanLift,
    path: &OUPath,
    t_end: f64,
    dt_max: f64,
    metric: &LyapunovMetric,
) -> Result<(TruncationError, OUPath)> {
    let path = prepare_path(path, t_end, dt_max)?;
    let (reference, _) = integrate_frozen_to(sys, &path, t_end, dt_max)?;
    let (truncated, _) = integrate_truncated(lift, &sys.x_init, &path, t_end, dt_max)?;
    let pm = LiftedMetric::new(metric, lift);
    let p1 = metric.p_real();
    let mut eta = Vec::with_capacity(reference.times.len());
    let (mut norm, mut p_norm, mut fb, mut fbp) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (x, y) in reference.states.iter().zip(&truncated.states) {
        let e = lift.lift_state(x) - y;
        let e1 = e.rows(0, lift.n);
        norm.push(e.norm());
        p_norm.push(pm.norm(&e));
        fb.push(e1.norm());
        fbp.push(e1.dot(&(&p1 * e1)).max(0.0).sqrt());
        eta.push(e);
    }
    let times = reference.times.clone();
    Ok((
        TruncationError { times, eta, norm, p_norm, first_block_norm: fb, first_block_p_norm: fbp, reference, truncated },
        path,
    ))
}

/// min|λ(F1)| > ‖F2‖ + bound on ‖F0‖. Sound when F1 is normal with real spectrum.
pub fn stability_predicate(sys: &QuadraticSystem, f0_norm_bound: f64) -> Result<bool> {
    let min_abs = eigenvalues_real(&sys.f1)?.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    Ok(min_abs > sys.f2_norm() + f0_norm_bound)
}

/// Inputs of the deterministic error bounds, all in the P metric.
#[derive(Debug, Clone, Copy)]
pub struct BoundInputs {
    pub order: usize,
    pub mu_p: f64,
    pub f2_norm_p: f64,
    pub f0_norm_p: f64,
    /// ‖δx(0)‖_P (equals ‖x(0)‖_P when the stationary state is 0).
    pub dx0_norm_p: f64,
    pub x0_norm_p: f64,
    /// ‖P⁻¹‖.
    pub p_inv_norm: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct DeterministicBounds {
    pub inputs: BoundInputs,
    /// ξ_P = 4μ_P + 5‖F0‖_P + 3‖F2‖_P; `stable_bound` is only meaningful when negative.
    pub xi_p: f64,
}

impl DeterministicBounds {
    pub fn new(inputs: BoundInputs) -> Result<Self> {
        if !(inputs.mu_p < 0.0) {
            return Err(Error::Regime(alloc::format!("mu_P = {} is not negative", inputs.mu_p)));
        }
        let xi_p = 4.0 * inputs.mu_p + 5.0 * inputs.f0_norm_p + 3.0 * inputs.f2_norm_p;
        Ok(Self { inputs, xi_p })
    }

    fn ratio(&self) -> f64 {
        self.inputs.f2_norm_p / -self.inputs.mu_p
    }

    /// ‖δx0‖^{N+1}(‖F2‖/|μ|)^{N+1−j}.
    pub fn eta_j_bound(&self, j: usize) -> f64 {
        let n = self.inputs.order;
        self.inputs.dx0_norm_p.powi(n as i32 + 1) * self.ratio().powi((n + 1 - j) as i32)
    }

    /// ‖δx0‖(‖F2‖/|μ|)^N(1 − e^{μt})^N; the prefactor becomes ‖δx0‖^{N+1} when ‖δx0‖ > 1.
    pub fn eta_1_bound(&self, t: f64) -> f64 {
        let n = self.inputs.order as i32;
        let r0 = self.inputs.dx0_norm_p;
        let pre = r0.max(r0.powi(n + 1));
        pre * self.ratio().powi(n) * (-(self.inputs.mu_p * t).exp_m1()).powi(n)
    }

    /// (2/−ξ_P) N ‖F2‖_P ‖P⁻¹‖^{j/2} ‖x0‖_P^{N+1}; `None` when ξ_P ≥ 0.
    pub fn stable_bound(&self, j: usize) -> Option<f64> {
        if !(self.xi_p < 0.0) {
            return None;
        }
        let i = &self.inputs;
        Some(
            2.0 / -self.xi_p
                * i.order as f64
                * i.f2_norm_p
                * i.p_inv_norm.powf(j as f64 / 2.0)
                * i.x0_norm_p.powi(i.order as i32 + 1),
        )
    }
}

/// Ĉ e^{−(α − D_N Ĉ^{N+1}) t}‖e0‖ with D_N = N(N+1)‖F2‖; `None` unless the rate is positive.
pub fn steady_decay(order: usize, f2_norm: f64, alpha: f64, c_hat: f64, e0_norm: f64, t: f64) -> Option<f64> {
    let d_n = (order * (order + 1)) as f64 * f2_norm;
    let rate = alpha - d_n * c_hat.powi(order as i32 + 1);
    (rate > 0.0).then(|| c_hat * (-rate * t).exp() * e0_norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{integrate_gl, log_norm_p, max_real_eigenvalue, real_from_rows, to_complex};
    use crate::ou::{sample_exact, sample_path, uniform_grid, OUProcess};
    use crate::rng::{self, domain};
    use alloc::sync::Arc;
    use rand::Rng;

    fn quiet_ou(n: usize, sigma: f64) -> Arc<OUProcess> {
        Arc::new(OUProcess::new(RealMatrix::identity(n, n), RealMatrix::identity(n, n) * sigma, RealVector::zeros(n)).unwrap())
    }

    fn planar(sigma: f64) -> QuadraticSystem {
        QuadraticSystem::new(
            RealMatrix::identity(2, 2) * -1.0,
            real_from_rows(2, 4, &[0.1, 0.05, 0.0, -0.1, 0.0, 0.1, 0.05, 0.08]),
            RealVector::from_vec(alloc::vec![0.6, -0.4]),
            quiet_ou(2, sigma),
        )
        .unwrap()
    }

    #[test]
    fn scalar_lift_example() {
        let ou = Arc::new(OUProcess::scalar(1.0, 0.0, 0.0).unwrap());
        let sys = QuadraticSystem::new(
            RealMatrix::from_element(1, 1, -0.7),
            RealMatrix::from_element(1, 1, 0.3),
            RealVector::from_element(1, 0.5),
            ou,
        )
        .unwrap();
        let lift = build_lift(&sys, 2).unwrap();
        let c = RealVector::from_element(1, 1.5);
        assert_eq!(lift.matrix(&c), real_from_rows(2, 2, &[-0.7, 0.3, 3.0, -1.4]));
        assert_eq!(lift.inhomogeneity(&c).as_slice(), &[1.5, 0.0]);
    }

    #[test]
    fn dimensions_and_cap() {
        assert_eq!(lifted_dim(2, 3), 14);
        let lift = build_lift(&planar(0.0), 3).unwrap();
        assert_eq!(lift.dim, 14);
        assert_eq!(lift.offsets, alloc::vec![0, 2, 6]);
        assert!(matches!(build_lift_capped(&planar(0.0), 10, 1000), Err(Error::SizeCap { .. })));
        assert!(build_lift(&planar(0.0), 0).is_err());
    }

    #[test]
    fn block_accessors_match_materialized_matrix() {
        let lift = build_lift(&planar(0.0), 3).unwrap();
        let f0 = RealVector::from_vec(alloc::vec![0.3, -0.2]);
        let a = lift.matrix(&f0);
        for j in 1..=3 {
            let r = lift.block_range(j);
            assert_eq!(a.view((r.start, r.start), (r.len(), r.len())), lift.block_diag(j));
            if j < 3 {
                let c = lift.block_range(j + 1);
                assert_eq!(a.view((r.start, c.start), (r.len(), c.len())), lift.block_up(j));
            }
            if j > 1 {
                let c = lift.block_range(j - 1);
                assert_eq!(a.view((r.start, c.start), (r.len(), c.len())), lift.block_down(j, &f0));
            }
        }
    }

    #[test]
    fn lift_is_exact_on_tensor_powers_up_to_residual() {
        // d/dt x⊗ʲ computed by the product rule equals (A y + b + R) for y = lift(x).
        let sys = planar(0.0);
        let lift = build_lift(&sys, 3).unwrap();
        let x = RealVector::from_vec(alloc::vec![0.4, -0.7]);
        let f0 = RealVector::from_vec(alloc::vec![0.2, 0.1]);
        let dx = sys.rhs(&x, &f0);
        let y = lift.lift_state(&x);
        let got = lift.matrix(&f0) * &y + lift.inhomogeneity(&f0) + residual(&lift, &x).unwrap().vector;
        for j in 1..=3 {
            let mut want = RealVector::zeros(2usize.pow(j as u32));
            for p in 0..j {
                want += tensor_power(&x, p).kronecker(&dx).kronecker(&tensor_power(&x, j - 1 - p));
            }
            assert!((lift.block(&got, j) - want).norm() < 1e-13);
        }
    }

    #[test]
    fn sparsity_audit() {
        let mut rng = rng::stream(2, domain::MISC, 0);
        for _ in 0..20 {
            let n = 3;
            let mut sparse = |r: usize, c: usize| {
                RealMatrix::from_fn(r, c, |_, _| if rng.random_bool(0.3) { rng.random_range(-1.0..1.0) } else { 0.0 })
            };
            let f1 = sparse(n, n);
            let f2 = sparse(n, n * n);
            let f0 = RealVector::from_fn(n, |i, _| if i == 0 { 0.5 } else { 0.0 });
            let s = |m: &RealMatrix| (0..m.nrows()).map(|r| m.row(r).iter().filter(|v| **v != 0.0).count()).max().unwrap_or(0);
            let s_max = s(&f1).max(s(&f2)).max(1);
            let sys = QuadraticSystem::new(f1, f2, RealVector::zeros(n), quiet_ou(n, 0.0)).unwrap();
            let order = 3;
            let lift = build_lift(&sys, order).unwrap();
            assert!(lift.max_row_nonzeros(&f0) <= 3 * order * s_max);
        }
    }

    #[test]
    fn linear_lift_exponential_is_tensor_power() {
        let f1 = real_from_rows(2, 2, &[-1.0, 0.4, -0.3, -0.6]);
        let sys = QuadraticSystem::new(f1.clone(), RealMatrix::zeros(2, 4), RealVector::zeros(2), quiet_ou(2, 0.0)).unwrap();
        let lift = build_lift(&sys, 3).unwrap();
        let e = matrix_exp_real(&lift.matrix(&RealVector::zeros(2)), 0.8).unwrap();
        let e1 = matrix_exp_real(&f1, 0.8).unwrap();
        for j in 1..=3 {
            let r = lift.block_range(j);
            let block = e.view((r.start, r.start), (r.len(), r.len()));
            assert!((block - crate::numerics::kron_power_real(&e1, j)).norm() < 1e-12);
        }
    }

    #[test]
    fn residual_examples() {
        let ou = Arc::new(OUProcess::scalar(1.0, 0.0, 0.0).unwrap());
        let sys = QuadraticSystem::new(RealMatrix::from_element(1, 1, -1.0), RealMatrix::from_element(1, 1, 0.3), RealVector::from_element(1, 0.5), ou).unwrap();
        let lift = build_lift(&sys, 2).unwrap();
        let r = residual(&lift, &RealVector::from_element(1, -1.2)).unwrap();
        assert!((r.norm - 2.0 * 0.3 * 1.2f64.powi(3)).abs() < 1e-14);
        assert!((r.norm - r.bound).abs() < 1e-14);

        let zero = QuadraticSystem { f2: RealMatrix::zeros(2, 4), ..planar(0.0) };
        let r = residual(&build_lift(&zero, 3).unwrap(), &RealVector::from_vec(alloc::vec![1.0, 2.0])).unwrap();
        assert_eq!(r.norm, 0.0);

        let lift = build_lift(&planar(0.0), 3).unwrap();
        let mut rng = rng::stream(5, domain::MISC, 0);
        for _ in 0..1000 {
            let x = RealVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
            let r = residual(&lift, &x).unwrap();
            assert!(r.norm <= r.bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn truncated_linear_case_is_exact() {
        let f1 = real_from_rows(2, 2, &[-1.0, 0.4, -0.3, -0.6]);
        let x0 = RealVector::from_vec(alloc::vec![0.8, -0.5]);
        let sys = QuadraticSystem::new(f1.clone(), RealMatrix::zeros(2, 4), x0.clone(), quiet_ou(2, 0.0)).unwrap();
        let lift = build_lift(&sys, 3).unwrap();
        let path = sample_exact(&sys.ou, &[0.0, 2.0], 1).unwrap();
        let (traj, _) = integrate_truncated(&lift, &x0, &path, 2.0, 0.1).unwrap();
        for (t, y) in traj.times.iter().zip(&traj.states) {
            let x = matrix_exp_real(&f1, *t).unwrap() * &x0;
            assert!((y - lift.lift_state(&x)).norm() < 1e-9);
        }
    }

    #[test]
    fn logistic_first_block_within_lemma_bound() {
        let ou = Arc::new(OUProcess::scalar(1.0, 0.0, 0.0).unwrap());
        let sys = QuadraticSystem::new(RealMatrix::from_element(1, 1, -1.0), RealMatrix::from_element(1, 1, 0.25), RealVector::from_element(1, 0.5), ou).unwrap();
        let lift = build_lift(&sys, 4).unwrap();
        let path = sample_exact(&sys.ou, &[0.0, 2.0], 1).unwrap();
        let (traj, _) = integrate_truncated(&lift, &sys.x_init, &path, 2.0, 0.01).unwrap();
        let bounds = DeterministicBounds::new(BoundInputs {
            order: 4, mu_p: -1.0, f2_norm_p: 0.25, f0_norm_p: 0.0, dx0_norm_p: 0.5, x0_norm_p: 0.5, p_inv_norm: 1.0,
        })
        .unwrap();
        for (t, y) in traj.times.iter().zip(&traj.states) {
            // x' = −x + x²/4: x(t) = x0 e^{-t} / (1 − x0(1 − e^{-t})/4).
            let e = (-t).exp();
            let exact = 0.5 * e / (1.0 - 0.5 * (1.0 - e) / 4.0);
            assert!((exact - y[0]).abs() <= bounds.eta_1_bound(*t) + 1e-12, "t {t}");
        }
    }

    #[test]
    fn truncated_refinement_converges() {
        let sys = planar(0.02);
        let lift = build_lift(&sys, 3).unwrap();
        let path = sample_exact(&sys.ou, &uniform_grid(1.0, 10), 4).unwrap();
        let path = prepare_path(&path, 1.0, 1e-3).unwrap();
        let smooth = QuadraticSystem { ou: quiet_ou(2, 0.0), ..sys.clone() };
        let smooth_path = sample_exact(&smooth.ou, &[0.0, 1.0], 1).unwrap();
        let a = integrate_truncated(&lift, &sys.x_init, &smooth_path, 1.0, 0.01).unwrap().0;
        let b = integrate_truncated(&lift, &sys.x_init, &smooth_path, 1.0, 0.005).unwrap().0;
        assert!((a.last() - b.last()).norm() / b.last().norm() < 1e-8);
        let a = integrate_truncated(&lift, &sys.x_init, &path, 1.0, 2e-3).unwrap().0;
        let b = integrate_truncated(&lift, &sys.x_init, &path, 1.0, 1e-3).unwrap().0;
        assert!((a.last() - b.last()).norm() / b.last().norm() < 1e-4);
    }

    #[test]
    fn truncation_error_basics() {
        let sys = planar(0.02);
        let path = sample_path(&sys.ou, &uniform_grid(1.0, 10), 7, 3).unwrap();
        let lift = build_lift(&sys, 3).unwrap();
        let (te, _) = truncation_error(&sys, &lift, &path, 1.0, 0.01, &LyapunovMetric::identity(2)).unwrap();
        assert_eq!(te.norm[0], 0.0);
        assert!(te.first_block_norm.iter().all(|v| v.is_finite()));

        let lin = QuadraticSystem { f2: RealMatrix::zeros(2, 4), ou: quiet_ou(2, 0.0), ..sys };
        let lift = build_lift(&lin, 3).unwrap();
        let quiet = sample_exact(&lin.ou, &[0.0, 1.0], 1).unwrap();
        let (te, _) = truncation_error(&lin, &lift, &quiet, 1.0, 0.01, &LyapunovMetric::identity(2)).unwrap();
        assert!(te.norm.iter().all(|&v| v < 1e-8));
    }

    #[test]
    fn eta1_decreases_with_order() {
        let sys = planar(0.0);
        let path = sample_exact(&sys.ou, &[0.0, 2.0], 1).unwrap();
        let mut prev = f64::INFINITY;
        for order in 1..=4 {
            let lift = build_lift(&sys, order).unwrap();
            let (te, _) = truncation_error(&sys, &lift, &path, 2.0, 0.01, &LyapunovMetric::identity(2)).unwrap();
            let e = *te.first_block_norm.last().unwrap();
            assert!(e < prev, "order {order}: {e} vs {prev}");
            prev = e;
        }
    }

    #[test]
    fn stability_predicate_examples() {
        let f2 = real_from_rows(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let sys = QuadraticSystem::new(RealMatrix::identity(2, 2) * -3.0, f2.clone(), RealVector::zeros(2), quiet_ou(2, 0.0)).unwrap();
        assert!(stability_predicate(&sys, 1.0).unwrap());
        let lift = build_lift(&sys, 3).unwrap();
        for f0 in [[1.0, 0.0], [0.0, -1.0], [0.6, 0.8]] {
            let a = lift.matrix(&RealVector::from_row_slice(&f0));
            assert!(max_real_eigenvalue(&a).unwrap() < 0.0);
        }
        let weak = QuadraticSystem { f1: RealMatrix::identity(2, 2) * -0.1, ..sys.clone() };
        assert!(!stability_predicate(&weak, 0.0).unwrap());
        let lin = QuadraticSystem { f2: RealMatrix::zeros(2, 4), ..sys };
        assert!(stability_predicate(&lin, 0.0).unwrap());
    }

    #[test]
    fn deterministic_bound_examples() {
        let b = DeterministicBounds::new(BoundInputs {
            order: 3, mu_p: -1.0, f2_norm_p: 0.25, f0_norm_p: 0.0, dx0_norm_p: 1.0, x0_norm_p: 1.0, p_inv_norm: 1.0,
        })
        .unwrap();
        assert!((b.eta_1_bound(1e3) - 0.015625).abs() < 1e-15);
        assert_eq!(b.eta_1_bound(0.0), 0.0);
        let zero = DeterministicBounds::new(BoundInputs { f2_norm_p: 0.0, ..b.inputs }).unwrap();
        assert_eq!(zero.eta_j_bound(1), 0.0);
        assert_eq!(zero.stable_bound(2), Some(0.0));
        assert!(DeterministicBounds::new(BoundInputs { mu_p: 0.1, ..b.inputs }).is_err());
        assert!(steady_decay(3, 0.25, 1.0, 1.0, 1.0, 1.0).is_none());
        let d = steady_decay(1, 0.1, 1.0, 0.5, 2.0, 1.0).unwrap();
        assert!((d - 0.5 * (-(1.0 - 0.2 * 0.25f64)).exp() * 2.0).abs() < 1e-15);
    }

    #[test]
    fn measured_eta_within_deterministic_bounds() {
        let sys = planar(0.0);
        let metric = LyapunovMetric::identity(2);
        let mu = log_norm_p(&to_complex(&sys.f1), &metric).unwrap();
        let f2p = metric.f2_norm(&to_complex(&sys.f2)).unwrap();
        for order in 1..=4 {
            let lift = build_lift(&sys, order).unwrap();
            let path = sample_exact(&sys.ou, &[0.0, 2.0], 1).unwrap();
            let (te, _) = truncation_error(&sys, &lift, &path, 2.0, 0.01, &metric).unwrap();
            let b = DeterministicBounds::new(BoundInputs {
                order, mu_p: mu, f2_norm_p: f2p, f0_norm_p: 0.0, dx0_norm_p: sys.x_init.norm(), x0_norm_p: sys.x_init.norm(), p_inv_norm: 1.0,
            })
            .unwrap();
            for (k, t) in te.times.iter().enumerate() {
                assert!(te.first_block_norm[k] <= b.eta_1_bound(*t) + 1e-10);
                for j in 1..=order {
                    let ej = lift.block(&te.eta[k], j).norm();
                    assert!(ej <= b.eta_j_bound(j) + 1e-10);
                    assert!(ej <= b.stable_bound(j).unwrap() + 1e-10);
                }
            }
        }
    }

    #[test]
    fn kronecker_sum_log_norm() {
        let p = real_from_rows(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let metric = LyapunovMetric::from_real(&p).unwrap();
        let f1 = real_from_rows(2, 2, &[-1.0, 0.5, -0.2, -0.8]);
        let sys = QuadraticSystem::new(f1.clone(), RealMatrix::zeros(2, 4), RealVector::zeros(2), quiet_ou(2, 0.0)).unwrap();
        let lift = build_lift(&sys, 3).unwrap();
        let mu = log_norm_p(&to_complex(&f1), &metric).unwrap();
        for j in 1..=3 {
            let mj = log_norm_p(&to_complex(&lift.block_diag(j)), &metric.kron_power(j)).unwrap();
            assert!((mj - j as f64 * mu).abs() < 1e-8);
        }
    }

    #[test]
    fn variation_of_constants_bound() {
        let sys = planar(0.0);
        let lift = build_lift(&sys, 2).unwrap();
        let metric = LyapunovMetric::identity(2);
        let pm = LiftedMetric::new(&metric, &lift);
        let chi = log_norm_p(&to_complex(&lift.matrix(&RealVector::zeros(2))), &LyapunovMetric::new(to_complex(&pm.dense())).unwrap()).unwrap();
        let path = sample_exact(&sys.ou, &[0.0, 2.0], 1).unwrap();
        let (te, _) = truncation_error(&sys, &lift, &path, 2.0, 0.005, &metric).unwrap();
        let rnorm: Vec<f64> = te.reference.states.iter().map(|x| pm.norm(&residual(&lift, x).unwrap().vector)).collect();
        let dt = te.times[1] - te.times[0];
        for k in (10..te.times.len()).step_by(50) {
            let t = te.times[k];
            let bound = integrate_gl(
                |s| {
                    let i = ((s / dt) as usize).min(rnorm.len() - 2);
                    let w = s / dt - i as f64;
                    (chi * (t - s)).exp() * ((1.0 - w) * rnorm[i] + w * rnorm[i + 1])
                },
                0.0,
                t,
                k,
                4,
            );
            assert!(te.p_norm[k] <= bound * (1.0 + 1e-3) + 1e-12, "t {t}");
        }
    }
}
