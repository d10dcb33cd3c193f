//! Subcommand runners. Each `run` returns a serializable report; `write`
//! persists it as CSV plus `summary.json`. Acceptance tests call `run` directly.

pub mod carleman;
pub mod dyson;
pub mod lchs;
pub mod ou_stats;
pub mod resources;
pub mod tail;

use rayon::prelude::*;
use slchs::quadratic_sde::{lyapunov_data, F0NormSource, LyapunovData, QuadraticSystem};
use slchs::LyapunovMetric;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::CliError;

/// `f(i)` for i in 0..n on the current rayon pool, in index order.
pub fn par_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}

/// Like [`par_indices`] for fallible work; the first error in index order wins.
pub fn try_par_indices<T, F>(n: usize, f: F) -> Result<Vec<T>, CliError>
where
    T: Send,
    F: Fn(u64) -> Result<T, CliError> + Sync + Send,
{
    par_indices(n, f).into_iter().collect()
}

/// One-sided Clopper–Pearson upper bound at `level` for k successes in n trials.
pub fn clopper_pearson_upper(k: usize, n: usize, level: f64) -> f64 {
    if n == 0 || k >= n {
        return 1.0;
    }
    Beta::new(k as f64 + 1.0, (n - k) as f64)
        .map(|b| b.inverse_cdf(level))
        .unwrap_or(1.0)
}

/// Lyapunov data in the identity metric; γ defaults to |μ_P + β_P|.
pub fn identity_lyapunov(sys: &QuadraticSystem, gamma: Option<f64>, seed: u64) -> Result<LyapunovData, CliError> {
    let metric = LyapunovMetric::identity(sys.n);
    let mut data = lyapunov_data(sys, &metric, gamma.unwrap_or(1.0), 1000, F0NormSource::Stationary3Sigma, seed)?;
    if gamma.is_none() {
        let g = (data.mu_p + data.beta_p_estimate).abs();
        if g > 0.0 {
            data.gamma = g;
            data.kappa_p = 2.0 * data.mu_p + 2.0 * data.beta_p_estimate + g;
        }
    }
    Ok(data)
}

/// `count` grid indices spread evenly over 1..=steps.
pub fn check_indices(steps: usize, count: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (1..=count).map(|i| (i * steps + count / 2) / count).map(|i| i.clamp(1, steps)).collect();
    v.dedup();
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clopper_pearson_plugs() {
        assert!((clopper_pearson_upper(0, 1000, 0.95) - (1.0 - 0.05f64.powf(1e-3))).abs() < 1e-9);
        assert_eq!(clopper_pearson_upper(5, 5, 0.95), 1.0);
        let u = clopper_pearson_upper(10, 100, 0.95);
        assert!(u > 0.1 && u < 0.2);
    }

    #[test]
    fn check_indices_are_spread() {
        assert_eq!(check_indices(100, 5), vec![20, 40, 60, 80, 100]);
        assert_eq!(check_indices(1, 1), vec![1]);
        assert_eq!(check_indices(3, 3), vec![1, 2, 3]);
    }

    #[test]
    fn ordered_collection() {
        let v = par_indices(100, |i| i * 2);
        assert_eq!(v[99], 198);
        let e = try_par_indices(10, |i| if i >= 3 { Err(CliError::Io(format!("{i}"))) } else { Ok(i) });
        assert_eq!(e.unwrap_err().to_string(), "io error: 3");
    }
}
