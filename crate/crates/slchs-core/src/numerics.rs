//! Dense linear-algebra kernels shared by every other module.
//!
//! Matrices that can carry an `i` (LCHS generators, propagators, metrics) are
//! stored as complex [`DenseMatrix`]; the real-valued problem data (F1, F2,
//! Θ, Σ) use [`RealMatrix`] and are promoted with [`to_complex`] where needed.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{dim, Error, Result};

pub type DenseMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;
pub type RealMatrix = DMatrix<f64>;
pub type RealVector = DVector<f64>;

/// Largest ‖A t‖₁ accepted by [`matrix_exp`]; beyond it squaring amplifies
/// rounding past the accuracy contract.
pub const EXP_NORM_LIMIT: f64 = 1.0e4;

pub fn to_complex(a: &RealMatrix) -> DenseMatrix {
    a.map(|x| Complex64::new(x, 0.0))
}

pub fn to_complex_vec(v: &RealVector) -> ComplexVector {
    v.map(|x| Complex64::new(x, 0.0))
}

pub fn real_part(a: &DenseMatrix) -> RealMatrix {
    a.map(|z| z.re)
}

/// Builds a real matrix from row-major data.
pub fn real_from_rows(rows: usize, cols: usize, data: &[f64]) -> RealMatrix {
    RealMatrix::from_row_slice(rows, cols, data)
}

fn ensure_square<T: nalgebra::Scalar>(a: &DMatrix<T>) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    Ok(a.nrows())
}

use pade::expm_generic;

mod pade {
    use super::ensure_square;
    use crate::error::{Error, Result};
    use nalgebra::{ComplexField, DMatrix};

    use super::EXP_NORM_LIMIT;

    fn norm1<T>(a: &DMatrix<T>) -> f64
    where
        T: ComplexField<RealField = f64> + Copy,
    {
        let mut best = 0.0;
        for col in a.column_iter() {
            let s: f64 = col.iter().map(|x| x.modulus()).sum();
            if s > best {
                best = s;
            }
        }
        best
    }

    // Padé coefficients and switching thresholds from Higham (2005).
    const THETA: [(usize, f64); 4] = [
        (3, 1.495_585_217_958_292e-2),
        (5, 2.539_398_330_063_23e-1),
        (7, 9.504_178_996_162_932e-1),
        (9, 2.097_847_961_257_068),
    ];
    const THETA_13: f64 = 5.371_920_351_148_152;

    fn pade_coeffs(m: usize) -> &'static [f64] {
        match m {
            3 => &[120.0, 60.0, 12.0, 1.0],
            5 => &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
            7 => &[17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0],
            9 => &[
                17643225600.0,
                8821612800.0,
                2075673600.0,
                302702400.0,
                30270240.0,
                2162160.0,
                110880.0,
                3960.0,
                90.0,
                1.0,
            ],
            _ => &[
                64764752532480000.0,
                32382376266240000.0,
                7771770303897600.0,
                1187353796428800.0,
                129060195264000.0,
                10559470521600.0,
                670442572800.0,
                33522128640.0,
                1323241920.0,
                40840800.0,
                960960.0,
                16380.0,
                182.0,
                1.0,
            ],
        }
    }

    fn scale<T: ComplexField<RealField = f64> + Copy>(a: &DMatrix<T>, c: f64) -> DMatrix<T> {
        a.map(|x| x.scale(c))
    }

    /// Scaling-and-squaring Padé exponential, generic over real and complex entries.
    pub(super) fn expm_generic<T>(a: &DMatrix<T>) -> Result<DMatrix<T>>
    where
        T: ComplexField<RealField = f64> + Copy,
    {
        let n = ensure_square(a)?;
        let nrm = norm1(a);
        if !nrm.is_finite() || nrm > EXP_NORM_LIMIT {
            return Err(Error::Range(alloc::format!("matrix_exp: |A t|_1 = {nrm:e}")));
        }
        let ident = DMatrix::<T>::identity(n, n);
        if nrm == 0.0 {
            return Ok(ident);
        }
        let a2 = a * a;
        for &(m, theta) in THETA.iter() {
            if nrm <= theta {
                let b = pade_coeffs(m);
                let mut powers = alloc::vec![ident.clone(), a2.clone()];
                while powers.len() <= m / 2 {
                    let next = powers.last().unwrap() * &a2;
                    powers.push(next);
                }
                let mut u = DMatrix::<T>::zeros(n, n);
                let mut v = DMatrix::<T>::zeros(n, n);
                for (k, p) in powers.iter().enumerate() {
                    u += scale(p, b[2 * k + 1]);
                    v += scale(p, b[2 * k]);
                }
                let u = a * u;
                return pade_solve(u, v);
            }
        }
        let s = ((nrm / THETA_13).log2().ceil()).max(0.0) as i32;
        let a = scale(a, 2f64.powi(-s));
        let b = pade_coeffs(13);
        let a2 = &a * &a;
        let a4 = &a2 * &a2;
        let a6 = &a4 * &a2;
        let u_inner = scale(&a6, b[13]) + scale(&a4, b[11]) + scale(&a2, b[9]);
        let u = &a6 * u_inner
            + scale(&a6, b[7])
            + scale(&a4, b[5])
            + scale(&a2, b[3])
            + scale(&ident, b[1]);
        let u = &a * u;
        let v_inner = scale(&a6, b[12]) + scale(&a4, b[10]) + scale(&a2, b[8]);
        let v = &a6 * v_inner
            + scale(&a6, b[6])
            + scale(&a4, b[4])
            + scale(&a2, b[2])
            + scale(&ident, b[0]);
        let mut r = pade_solve(u, v)?;
        for _ in 0..s {
            r = &r * &r;
        }
        Ok(r)
    }

    fn pade_solve<T>(u: DMatrix<T>, v: DMatrix<T>) -> Result<DMatrix<T>>
    where
        T: ComplexField<RealField = f64> + Copy,
    {
        let p = &v + &u;
        let q = v - u;
        q.lu().solve(&p).ok_or(Error::Singular)
    }

}

/// e^{A t} to relative accuracy ~1e-13 for ‖A t‖ up to a few hundred.
pub fn matrix_exp(a: &DenseMatrix, t: f64) -> Result<DenseMatrix> {
    ensure_square(a)?;
    expm_generic(&a.map(|z| z * t))
}

/// Real-arithmetic counterpart of [`matrix_exp`].
pub fn matrix_exp_real(a: &RealMatrix, t: f64) -> Result<RealMatrix> {
    ensure_square(a)?;
    expm_generic(&(a * t))
}

/// e^{−i H t} for Hermitian `h`, via its spectral decomposition (exactly unitary).
pub fn unitary_exp(h: &DenseMatrix, t: f64) -> Result<DenseMatrix> {
    let (vals, vecs) = hermitian_eigen(h)?;
    let phases = DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&l| Complex64::from_polar(1.0, -l * t)),
    );
    let mut scaled = vecs.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= phases[j];
    }
    Ok(scaled * vecs.adjoint())
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(a: &DenseMatrix) -> Result<(RealVector, DenseMatrix)> {
    let n = ensure_square(a)?;
    let herm = hermitian_part(a);
    let eig = SymmetricEigen::new(herm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = RealVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((vals, vecs))
}

/// Eigen-decomposition of a real symmetric matrix, eigenvalues ascending.
pub fn symmetric_eigen(a: &RealMatrix) -> Result<(RealVector, RealMatrix)> {
    let n = ensure_square(a)?;
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = RealVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = RealMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((vals, vecs))
}

/// Shifts tried when the QR iteration stalls; eigenvalues are shift-covariant,
/// and a shift changes the iteration path enough to escape the stall.
const SCHUR_SHIFTS: [f64; 5] = [0.0, 0.137, -0.291, 0.613, -1.07];

/// Eigenvalues of a general complex matrix (complex Schur form).
pub fn eigenvalues(a: &DenseMatrix) -> Result<Vec<Complex64>> {
    let n = ensure_square(a)?;
    if n == 1 {
        return Ok(alloc::vec![a[(0, 0)]]);
    }
    let scale = a.iter().fold(0.0f64, |m, z| m.max(z.norm())).max(1e-300);
    for s in SCHUR_SHIFTS {
        let shift = Complex64::new(s * scale, 0.0);
        let shifted = a + DenseMatrix::identity(n, n) * shift;
        if let Some(schur) = nalgebra::Schur::try_new(shifted, f64::EPSILON, 200 * n) {
            let (_, t) = schur.unpack();
            return Ok((0..n).map(|i| t[(i, i)] - shift).collect());
        }
    }
    Err(Error::NoConvergence { iterations: 200 * n, residual: f64::NAN })
}

/// Eigenvalues of a general real matrix.
pub fn eigenvalues_real(a: &RealMatrix) -> Result<Vec<Complex64>> {
    let n = ensure_square(a)?;
    if n == 1 {
        return Ok(alloc::vec![Complex64::new(a[(0, 0)], 0.0)]);
    }
    let scale = a.amax().max(1e-300);
    for s in SCHUR_SHIFTS {
        let shifted = a + RealMatrix::identity(n, n) * (s * scale);
        if let Some(schur) = nalgebra::Schur::try_new(shifted, f64::EPSILON, 200 * n) {
            return Ok(schur.complex_eigenvalues().iter().map(|z| z - s * scale).collect());
        }
    }
    eigenvalues(&to_complex(a))
}

pub fn max_real_eigenvalue(a: &RealMatrix) -> Result<f64> {
    Ok(eigenvalues_real(a)?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

pub fn hermitian_part(a: &DenseMatrix) -> DenseMatrix {
    (a + a.adjoint()).map(|z| z * 0.5)
}

/// Largest singular value.
pub fn spectral_norm(a: &DenseMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    SVD::new(a.clone(), false, false).singular_values.max()
}

pub fn spectral_norm_real(a: &RealMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    SVD::new(a.clone(), false, false).singular_values.max()
}

pub fn frobenius_norm_real(a: &RealMatrix) -> f64 {
    a.norm()
}

/// x⊗ʲ with the row-major convention (index (i₁,…,i_j) ↦ i₁nʲ⁻¹+…+i_j).
pub fn tensor_power(x: &RealVector, j: usize) -> RealVector {
    let mut out = RealVector::from_element(1, 1.0);
    for _ in 0..j {
        out = out.kronecker(x);
    }
    out
}

/// M⊗ʲ (j ≥ 0; j = 0 gives the 1×1 identity).
pub fn kron_power_real(m: &RealMatrix, j: usize) -> RealMatrix {
    let mut out = RealMatrix::identity(1, 1);
    for _ in 0..j {
        out = out.kronecker(m);
    }
    out
}

/// Hermitian positive-definite metric P with cached square-root factors.
#[derive(Debug, Clone)]
pub struct LyapunovMetric {
    pub p: DenseMatrix,
    pub p_half: DenseMatrix,
    pub p_half_inv: DenseMatrix,
}

impl LyapunovMetric {
    pub fn new(p: DenseMatrix) -> Result<Self> {
        let (vals, vecs) = hermitian_eigen(&p)?;
        if vals.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::NotPositiveDefinite);
        }
        let build = |f: &dyn Fn(f64) -> f64| {
            let mut scaled = vecs.clone();
            for (j, mut col) in scaled.column_iter_mut().enumerate() {
                col *= Complex64::new(f(vals[j]), 0.0);
            }
            &scaled * vecs.adjoint()
        };
        let p_half = build(&|l| l.sqrt());
        let p_half_inv = build(&|l| 1.0 / l.sqrt());
        Ok(Self { p: hermitian_part(&p), p_half, p_half_inv })
    }

    pub fn identity(n: usize) -> Self {
        let id = DenseMatrix::identity(n, n);
        Self { p: id.clone(), p_half: id.clone(), p_half_inv: id }
    }

    pub fn from_real(p: &RealMatrix) -> Result<Self> {
        Self::new(to_complex(p))
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    pub fn p_real(&self) -> RealMatrix {
        real_part(&self.p)
    }

    /// The metric P⊗ʲ on the j-th tensor power.
    pub fn kron_power(&self, j: usize) -> Self {
        let mut p = DenseMatrix::identity(1, 1);
        let mut ph = p.clone();
        let mut phi = p.clone();
        for _ in 0..j {
            p = p.kronecker(&self.p);
            ph = ph.kronecker(&self.p_half);
            phi = phi.kronecker(&self.p_half_inv);
        }
        Self { p, p_half: ph, p_half_inv: phi }
    }

    /// ‖x‖_P = √(x† P x).
    pub fn vec_norm(&self, x: &ComplexVector) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(dim("vector length differs from metric dimension"));
        }
        Ok((x.adjoint() * &self.p * x)[(0, 0)].re.max(0.0).sqrt())
    }

    pub fn vec_norm_real(&self, x: &RealVector) -> Result<f64> {
        self.vec_norm(&to_complex_vec(x))
    }

    /// Induced operator norm ‖P^{1/2} M P^{−1/2}‖.
    pub fn op_norm(&self, m: &DenseMatrix) -> Result<f64> {
        if m.nrows() != self.dim() || m.ncols() != self.dim() {
            return Err(dim("operator shape differs from metric dimension"));
        }
        Ok(spectral_norm(&(&self.p_half * m * &self.p_half_inv)))
    }

    /// ‖P^{1/2} F₂ (P^{−1/2} ⊗ P^{−1/2})‖ for an n×n² quadratic coefficient.
    pub fn f2_norm(&self, f2: &DenseMatrix) -> Result<f64> {
        let n = self.dim();
        if f2.nrows() != n || f2.ncols() != n * n {
            return Err(dim("F2 must be n x n^2"));
        }
        let right = self.p_half_inv.kronecker(&self.p_half_inv);
        Ok(spectral_norm(&(&self.p_half * f2 * right)))
    }

    /// Norm of an operator from the P⊗ᵃ space to the P⊗ᵇ space.
    pub fn cross_norm(&self, m: &DenseMatrix, out_power: usize, in_power: usize) -> Result<f64> {
        let lhs = self.kron_power(out_power);
        let rhs = self.kron_power(in_power);
        if m.nrows() != lhs.dim() || m.ncols() != rhs.dim() {
            return Err(dim("operator shape differs from tensor-power metrics"));
        }
        Ok(spectral_norm(&(&lhs.p_half * m * &rhs.p_half_inv)))
    }
}

/// Generalized logarithmic norm: λ_max of the Hermitian part of P^{1/2} A P^{−1/2}.
pub fn log_norm_p(a: &DenseMatrix, metric: &LyapunovMetric) -> Result<f64> {
    let n = ensure_square(a)?;
    if n != metric.dim() {
        return Err(dim("matrix dimension differs from metric"));
    }
    let b = &metric.p_half * a * &metric.p_half_inv;
    let (vals, _) = hermitian_eigen(&hermitian_part(&b))?;
    Ok(vals[n - 1])
}

/// Solves X† P + P X = −Q for P by the vectorized Kronecker system.
/// No definiteness checks: callers that need a metric use [`lyapunov_solve`].
pub fn lyapunov_linear_solve(x: &DenseMatrix, q: &DenseMatrix) -> Result<DenseMatrix> {
    let n = ensure_square(x)?;
    if q.nrows() != n || q.ncols() != n {
        return Err(dim("Q must match F1"));
    }
    let id = DenseMatrix::identity(n, n);
    // Column-major vec: vec(X† P) = (I ⊗ X†) vec P, vec(P X) = (Xᵀ ⊗ I) vec P.
    let sys = id.kronecker(&x.adjoint()) + x.transpose().kronecker(&id);
    let rhs = DVector::from_iterator(n * n, q.iter().map(|z| -*z));
    let sol = sys.lu().solve(&rhs).ok_or(Error::Singular)?;
    let p = DenseMatrix::from_column_slice(n, n, sol.as_slice());
    Ok(hermitian_part(&p))
}

/// Lyapunov metric P with F1† P + P F1 = −Q; F1 must be Hurwitz and Q Hermitian PD.
pub fn lyapunov_solve(f1: &DenseMatrix, q: &DenseMatrix) -> Result<LyapunovMetric> {
    ensure_square(f1)?;
    let max_re = eigenvalues(f1)?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if max_re >= 0.0 {
        return Err(Error::NotHurwitz(max_re));
    }
    let (qvals, _) = hermitian_eigen(q)?;
    if qvals.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::NotPositiveDefinite);
    }
    let p = lyapunov_linear_solve(f1, q)?;
    LyapunovMetric::new(p)
}

/// Residual ‖F1† P + P F1 + Q‖_F.
pub fn lyapunov_residual(f1: &DenseMatrix, p: &DenseMatrix, q: &DenseMatrix) -> f64 {
    (f1.adjoint() * p + p * f1 + q).norm()
}

/// Gauss–Legendre nodes and weights on [−1, 1] (Newton on P_q, Golub-free).
pub fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = alloc::vec![0.0; q];
    let mut weights = alloc::vec![0.0; q];
    let pi = core::f64::consts::PI;
    for i in 0..q.div_ceil(2) {
        let mut x = (pi * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(q, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(q, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[q - 1 - i] = x;
        weights[i] = w;
        weights[q - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(q: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if q == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=q {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = q as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss–Legendre integral of a smooth scalar function.
pub fn integrate_gl(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for m in 0..panels {
        let lo = a + m as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            acc += wi * 0.5 * h * f(lo + 0.5 * h * (xi + 1.0));
        }
    }
    acc
}
