//! Monte Carlo ground truth: sample `W = B_n + X' A_n X / n`, compute its
//! full spectrum with a self-contained symmetric eigensolver, and compare
//! the outcome against model predictions.

mod eigen;
mod rng;

pub use eigen::shifted_solve;
pub use rng::Rng;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{Measure, MeasureError};
use crate::support::SupportReport;

#[derive(Debug, Clone, Error)]
pub enum SimError {
    #[error("ensemble needs n >= 2 and p = round(gamma n) >= 1, got n = {n}, gamma = {gamma}")]
    BadDimensions { n: usize, gamma: f64 },
    #[error("matrix is not symmetric: max asymmetry {asymmetry:e} exceeds tolerance")]
    NotSymmetric { asymmetry: f64 },
    #[error("QL iteration failed to converge after {sweeps} sweeps")]
    QlNoConvergence { sweeps: usize },
    #[error("reference cdf is not nondecreasing at sample {x}")]
    NonMonotoneCdf { x: f64 },
    #[error("shifted system is singular at shift {shift}")]
    SingularShift { shift: f64 },
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Entry law of the random matrix `X`; both have mean 0 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EntryLaw {
    #[default]
    Gaussian,
    Rademacher,
}

/// One Monte Carlo draw: dimensions, seed, entry law and the two input
/// spectral measures.
#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub n: usize,
    pub gamma: f64,
    pub seed: u64,
    pub entry_law: EntryLaw,
    pub a: Measure,
    pub b: Measure,
}

impl EnsembleConfig {
    /// Row dimension `p = round(gamma n)`.
    pub fn p(&self) -> usize {
        (self.gamma * self.n as f64).round() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n < 2 || !(self.gamma > 0.0 && self.gamma.is_finite()) || self.p() < 1 {
            return Err(SimError::BadDimensions {
                n: self.n,
                gamma: self.gamma,
            });
        }
        Ok(())
    }
}

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.at(i, i)).sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self.at(i, j) - self.at(j, i)).abs());
            }
        }
        worst
    }
}

/// Full eigenvalue spectrum, ascending, with the solver's deflation
/// residual.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    pub eigenvalues: Vec<f64>,
    pub max_offdiag_residual: f64,
}

/// Samples `W = B_n + X' A_n X / n` with `A_n`, `B_n` diagonal quantile
/// matrices and iid entries from the configured law.
///
/// The upper triangle is accumulated once and mirrored, which is the exact
/// symmetrization of the product. A fixed seed gives a bitwise-identical
/// matrix on every run.
pub fn sample_w(cfg: &EnsembleConfig) -> Result<Matrix, SimError> {
    cfg.validate()?;
    let n = cfg.n;
    let p = cfg.p();
    let a_diag = cfg.a.quantiles(p)?;
    let b_diag = cfg.b.quantiles(n)?;

    let mut rng = Rng::seed_from_u64(cfg.seed);
    let mut x = vec![0.0f64; p * n];
    match cfg.entry_law {
        EntryLaw::Gaussian => x.iter_mut().for_each(|v| *v = rng.standard_normal()),
        EntryLaw::Rademacher => x.iter_mut().for_each(|v| *v = rng.rademacher()),
    }

    let mut w = Matrix::zeros(n);
    let inv_n = 1.0 / n as f64;
    let coeffs: Vec<f64> = a_diag.iter().map(|&a| a * inv_n).collect();
    // Upper triangle of sum_k c_k x_k x_k', parallel over output rows.
    w.data
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| {
            for (k, &c) in coeffs.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                let xk = &x[k * n..(k + 1) * n];
                let t = c * xk[i];
                if t == 0.0 {
                    continue;
                }
                for j in i..n {
                    row[j] += t * xk[j];
                }
            }
        });
    for i in 0..n {
        for j in (i + 1)..n {
            let v = w.at(i, j);
            w.set(j, i, v);
        }
        let d = w.at(i, i) + b_diag[i];
        w.set(i, i, d);
    }
    Ok(w)
}

/// All eigenvalues of a symmetric matrix, ascending.
///
/// Householder tridiagonalization followed by implicit-shift QL, eigenvalues
/// only; accuracy is at the `eps * ||M||` level.
pub fn eigenvalues_symmetric(m: &Matrix) -> Result<EigenResult, SimError> {
    let scale = m.data.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let asymmetry = m.max_asymmetry();
    if asymmetry > 1e-12 * scale.max(1.0) {
        return Err(SimError::NotSymmetric { asymmetry });
    }
    let (mut d, mut e) = eigen::tridiagonalize(m.clone());
    let max_offdiag_residual = eigen::ql_implicit(&mut d, &mut e)?;
    d.sort_by(f64::total_cmp);
    Ok(EigenResult {
        eigenvalues: d,
        max_offdiag_residual,
    })
}

/// Kolmogorov-Smirnov distance between the empirical distribution of the
/// sorted sample and a reference CDF, evaluated at both one-sided limits.
///
/// Equal sample values form one empirical jump; its right side compares
/// against `cdf(x)` and its left side against the left limit `cdf(x^-)`, so
/// a reference law with matching atoms scores zero there instead of the
/// spurious jump height.
pub fn ks_distance<F: Fn(f64) -> f64>(eigs: &EigenResult, cdf: F) -> Result<f64, SimError> {
    let xs = &eigs.eigenvalues;
    let n = xs.len() as f64;
    let mut prev = -1e-9;
    let mut worst: f64 = 0.0;
    let mut start = 0usize;
    while start < xs.len() {
        let x = xs[start];
        let mut end = start + 1;
        while end < xs.len() && xs[end] == x {
            end += 1;
        }
        let f_right = cdf(x);
        let f_left = cdf(x.next_down()).min(f_right);
        if f_right < prev - 1e-12 || !(-1e-9..=1.0 + 1e-9).contains(&f_right) {
            return Err(SimError::NonMonotoneCdf { x });
        }
        prev = f_right;
        worst = worst
            .max((end as f64 / n - f_right).abs())
            .max((start as f64 / n - f_left).abs());
        start = end;
    }
    Ok(worst)
}

/// Per-gap eigenvalue intrusion count.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GapAudit {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    /// Eigenvalues strictly deeper than the margin inside the gap.
    pub deep_count: usize,
}

/// Per-atom empirical mass check.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AtomAudit {
    pub x: f64,
    pub mass: f64,
    pub count: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AuditRecord {
    pub margin: f64,
    /// Bounded gaps between support components.
    pub gaps: Vec<GapAudit>,
    pub atoms: Vec<AtomAudit>,
    /// Strays beyond the support hull by more than the margin. Extreme
    /// eigenvalues fluctuate on their own finite-size scale, so these are
    /// reported rather than gated.
    pub below_support: usize,
    pub above_support: usize,
}

/// Audits a spectrum against a support report: counts eigenvalues deeper
/// than `margin` inside every bounded complement interval, counts strays
/// beyond the support hull, and compares the fraction of eigenvalues within
/// `margin` of each atom against its predicted mass.
pub fn gap_and_mass_audit(
    eigs: &EigenResult,
    report: &SupportReport,
    margin: f64,
) -> AuditRecord {
    let xs = &eigs.eigenvalues;
    let n = xs.len() as f64;
    let count_in = |lo: f64, hi: f64| -> usize {
        // Sorted input: binary-search both ends.
        let start = xs.partition_point(|&v| v <= lo);
        let end = xs.partition_point(|&v| v < hi);
        end.saturating_sub(start)
    };
    let gaps = report
        .complement
        .intervals()
        .iter()
        .filter(|&&(lo, hi)| lo.is_finite() && hi.is_finite())
        .map(|&(lo, hi)| {
            let deep_count = if hi - margin > lo + margin {
                count_in(lo + margin, hi - margin)
            } else {
                0
            };
            GapAudit {
                lo: Some(lo),
                hi: Some(hi),
                deep_count,
            }
        })
        .collect();
    let (below_support, above_support) = match (report.support.min(), report.support.max()) {
        (Some(lo), Some(hi)) if lo.is_finite() && hi.is_finite() => (
            count_in(f64::NEG_INFINITY, lo - margin),
            count_in(hi + margin, f64::INFINITY),
        ),
        _ => (0, 0),
    };
    let atoms = report
        .atoms
        .iter()
        .map(|&(x, mass)| {
            let count = count_in(x - margin, x + margin)
                + xs.iter().filter(|&&v| v == x - margin).count();
            AtomAudit {
                x,
                mass,
                count,
                fraction: count as f64 / n,
            }
        })
        .collect();
    AuditRecord {
        margin,
        gaps,
        atoms,
        below_support,
        above_support,
    }
}

/// Snaps eigenvalues within `tol` of a predicted atom location to that exact
/// location. The dense solver resolves a k-fold eigenvalue only to the
/// `eps * ||W||` level, so the empirical CDF would otherwise climb through a
/// model jump over a ~1e-11-wide cluster instead of jumping with it.
pub fn snap_to_atoms(eigs: &mut EigenResult, atoms: &[(f64, f64)], tol: f64) {
    for v in &mut eigs.eigenvalues {
        for &(loc, _) in atoms {
            if (*v - loc).abs() <= tol {
                *v = loc;
            }
        }
    }
}

/// Residual spot check `||W v - lambda v|| / ||W||_F` via one step of
/// shifted inverse iteration, maximized over the requested indices.
pub fn residual_spot_check(
    w: &Matrix,
    eigs: &EigenResult,
    indices: &[usize],
) -> Result<f64, SimError> {
    let n = w.n;
    let fro = w.frobenius_sq().sqrt();
    let mut worst: f64 = 0.0;
    for &idx in indices {
        let lambda = eigs.eigenvalues[idx];
        // Small deterministic perturbation keeps the shifted system regular.
        let shift = lambda + 1e-9 * (1.0 + lambda.abs());
        let rhs = vec![1.0; n];
        let mut v = shifted_solve(w, shift, &rhs)?;
        for _ in 0..2 {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            v = shifted_solve(w, shift, &v)?;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let mut residual_sq = 0.0;
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += w.at(i, j) * v[j];
            }
            let r = acc - lambda * v[i];
            residual_sq += r * r;
        }
        worst = worst.max(residual_sq.sqrt() / fro);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn fig1_config(n: usize, seed: u64) -> EnsembleConfig {
        EnsembleConfig {
            n,
            gamma: 0.5,
            seed,
            entry_law: EntryLaw::Gaussian,
            a: Measure::point_masses(&[(0.2, 0.0), (0.4, 1.0), (0.4, 10.0)]).unwrap(),
            b: Measure::point_masses(&[(0.4, -3.0), (0.6, 3.0)]).unwrap(),
        }
    }

    #[test]
    fn toeplitz_tridiagonal_golden_eigenvalues() {
        let n = 4;
        let mut m = Matrix::zeros(n);
        for i in 0..n - 1 {
            m.set(i, i + 1, 1.0);
            m.set(i + 1, i, 1.0);
        }
        let eig = eigenvalues_symmetric(&m).unwrap();
        let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
        let psi = (5.0_f64.sqrt() - 1.0) / 2.0;
        let expected = [-phi, -psi, psi, phi];
        for (got, want) in eig.eigenvalues.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-10);
        }
    }

    #[test]
    fn identity_eigenvalues() {
        let n = 5;
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        let eig = eigenvalues_symmetric(&m).unwrap();
        for v in eig.eigenvalues {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-14);
        }
    }

    /// Inertia of `M - t I` from the pivots of symmetric elimination; the
    /// count of eigenvalues below `t`. Independent of the QL path.
    fn eigenvalue_count_below(m: &Matrix, t: f64) -> usize {
        let n = m.n;
        let mut a = m.data.clone();
        for i in 0..n {
            a[i * n + i] -= t;
        }
        let mut negatives = 0;
        for k in 0..n {
            let pivot = a[k * n + k];
            if pivot == 0.0 {
                // Shift slightly; caller's bisection tolerates the jitter.
                return eigenvalue_count_below(m, t + 1e-12 * (1.0 + t.abs()));
            }
            if pivot < 0.0 {
                negatives += 1;
            }
            for i in (k + 1)..n {
                let f = a[i * n + k] / pivot;
                if f == 0.0 {
                    continue;
                }
                for j in k..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
            }
        }
        negatives
    }

    fn oracle_eigenvalues(m: &Matrix, tol: f64) -> Vec<f64> {
        let n = m.n;
        // Gershgorin bounds.
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let radius: f64 = (0..n).filter(|&j| j != i).map(|j| m.at(i, j).abs()).sum();
            lo = lo.min(m.at(i, i) - radius);
            hi = hi.max(m.at(i, i) + radius);
        }
        (0..n)
            .map(|k| {
                let (mut a, mut b) = (lo, hi);
                while b - a > tol {
                    let mid = 0.5 * (a + b);
                    if eigenvalue_count_below(m, mid) > k {
                        b = mid;
                    } else {
                        a = mid;
                    }
                }
                0.5 * (a + b)
            })
            .collect()
    }

    #[test]
    fn random_matrices_match_inertia_bisection_oracle() {
        let mut rng = Rng::seed_from_u64(2024);
        for _ in 0..20 {
            let n = 6;
            let mut m = Matrix::zeros(n);
            for i in 0..n {
                for j in 0..=i {
                    let v = 2.0 * rng.next_f64() - 1.0;
                    m.set(i, j, v);
                    m.set(j, i, v);
                }
            }
            let eig = eigenvalues_symmetric(&m).unwrap();
            let oracle = oracle_eigenvalues(&m, 1e-12);
            for (got, want) in eig.eigenvalues.iter().zip(oracle.iter()) {
                assert_abs_diff_eq!(got, want, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn sample_w_small_dimension_bookkeeping() {
        // n = 2, gamma = 0.5 means p = 1 and W = B + (a_1/2) x x'.
        let cfg = EnsembleConfig {
            n: 2,
            gamma: 0.5,
            seed: 5,
            entry_law: EntryLaw::Gaussian,
            a: Measure::dirac(2.0),
            b: Measure::point_masses(&[(0.5, -1.0), (0.5, 1.0)]).unwrap(),
        };
        let w = sample_w(&cfg).unwrap();
        let mut rng = Rng::seed_from_u64(5);
        let x = [rng.standard_normal(), rng.standard_normal()];
        assert_relative_eq!(w.at(0, 0), -1.0 + x[0] * x[0], epsilon = 1e-14);
        assert_relative_eq!(w.at(1, 1), 1.0 + x[1] * x[1], epsilon = 1e-14);
        assert_relative_eq!(w.at(0, 1), x[0] * x[1], epsilon = 1e-14);
        assert_eq!(w.at(0, 1), w.at(1, 0));
    }

    #[test]
    fn sample_w_is_seed_deterministic() {
        let cfg = fig1_config(40, 123);
        let w1 = sample_w(&cfg).unwrap();
        let w2 = sample_w(&cfg).unwrap();
        assert_eq!(w1, w2);
        let eig1 = eigenvalues_symmetric(&w1).unwrap();
        let eig2 = eigenvalues_symmetric(&w2).unwrap();
        assert_eq!(eig1, eig2);
    }

    #[test]
    fn zero_a_gives_exactly_b() {
        let mut cfg = fig1_config(30, 9);
        cfg.a = Measure::dirac(0.0);
        let w = sample_w(&cfg).unwrap();
        let quantiles = cfg.b.quantiles(30).unwrap();
        for i in 0..30 {
            for j in 0..30 {
                let expected = if i == j { quantiles[i] } else { 0.0 };
                assert_eq!(w.at(i, j), expected);
            }
        }
        // All B atoms audited exactly.
        let eig = eigenvalues_symmetric(&w).unwrap();
        let near = |x: f64| eig.eigenvalues.iter().filter(|&&v| (v - x).abs() < 1e-12).count();
        assert_eq!(near(-3.0), 12);
        assert_eq!(near(3.0), 18);
    }

    #[test]
    fn trace_and_frobenius_are_conserved() {
        let cfg = fig1_config(200, 31);
        let w = sample_w(&cfg).unwrap();
        let eig = eigenvalues_symmetric(&w).unwrap();
        let sum: f64 = eig.eigenvalues.iter().sum();
        let sum_sq: f64 = eig.eigenvalues.iter().map(|v| v * v).sum();
        assert_relative_eq!(sum, w.trace(), max_relative = 1e-9);
        assert_relative_eq!(sum_sq, w.frobenius_sq(), max_relative = 1e-9);
    }

    #[test]
    fn nonnegative_a_lifts_b_eigenvalues() {
        let mut cfg = fig1_config(60, 17);
        cfg.a = Measure::point_masses(&[(0.5, 1.0), (0.5, 4.0)]).unwrap();
        let w = sample_w(&cfg).unwrap();
        let eig = eigenvalues_symmetric(&w).unwrap();
        let b_eigs = cfg.b.quantiles(60).unwrap();
        for (lifted, base) in eig.eigenvalues.iter().zip(b_eigs.iter()) {
            assert!(lifted >= &(base - 1e-10), "{lifted} < {base}");
        }
    }

    #[test]
    fn ks_distance_of_exact_quantiles() {
        let b = Measure::semicircle(1.0, 0.0).unwrap();
        let n = 500;
        let eigs = EigenResult {
            eigenvalues: b.quantiles(n).unwrap(),
            max_offdiag_residual: 0.0,
        };
        let d = ks_distance(&eigs, |x| b.cdf(x)).unwrap();
        assert!(d <= 1.0 / n as f64 + 1e-9, "d = {d}");
    }

    #[test]
    fn ks_distance_rejects_non_monotone_cdf() {
        let eigs = EigenResult {
            eigenvalues: vec![0.0, 1.0, 2.0],
            max_offdiag_residual: 0.0,
        };
        assert!(matches!(
            ks_distance(&eigs, |x| if x < 1.5 { 0.8 } else { 0.2 }),
            Err(SimError::NonMonotoneCdf { .. })
        ));
    }

    #[test]
    fn residual_spot_check_is_small() {
        let cfg = fig1_config(60, 77);
        let w = sample_w(&cfg).unwrap();
        let eig = eigenvalues_symmetric(&w).unwrap();
        let r = residual_spot_check(&w, &eig, &[0, 20, 59]).unwrap();
        assert!(r <= 1e-8, "residual ratio {r:e}");
    }
}
