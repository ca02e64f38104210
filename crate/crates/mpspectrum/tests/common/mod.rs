//! Shared fixtures and independent oracles for the integration suites.

use mpspectrum::simulate::{Matrix, Rng};
use mpspectrum::{Measure, MeasurePart};

/// Three-atom against two-atom setting with an isolated support point.
pub fn fig1() -> (Measure, Measure, f64) {
    (
        Measure::point_masses(&[(0.2, 0.0), (0.4, 1.0), (0.4, 10.0)]).unwrap(),
        Measure::point_masses(&[(0.4, -3.0), (0.6, 3.0)]).unwrap(),
        0.5,
    )
}

/// Semicircle against atom-plus-semicircle mixture.
pub fn fig2() -> (Measure, Measure, f64) {
    (
        Measure::semicircle(1.0, 0.0).unwrap(),
        Measure::new(vec![
            (0.4, MeasurePart::atom(-3.0)),
            (0.6, MeasurePart::semicircle(1.0, 0.0)),
        ])
        .unwrap(),
        0.5,
    )
}

/// Degenerate classical setting: the limit law of `X'X/n`.
pub fn classical(gamma: f64) -> (Measure, Measure, f64) {
    (Measure::dirac(1.0), Measure::dirac(0.0), gamma)
}

pub fn classical_edges(gamma: f64) -> (f64, f64) {
    let s = gamma.sqrt();
    ((1.0 - s) * (1.0 - s), (1.0 + s) * (1.0 + s))
}

/// Closed-form density of the classical limit for `gamma < 1`.
pub fn classical_density(gamma: f64, x: f64) -> f64 {
    let (a, b) = classical_edges(gamma);
    if x <= a || x >= b {
        return 0.0;
    }
    ((b - x) * (x - a)).sqrt() / (2.0 * std::f64::consts::PI * x)
}

/// Inertia of `M - tI` from symmetric elimination pivots: the count of
/// eigenvalues below `t`. Independent of the Householder/QL path.
pub fn eigenvalue_count_below(m: &Matrix, t: f64) -> usize {
    let n = m.n;
    let mut a = m.data.clone();
    for i in 0..n {
        a[i * n + i] -= t;
    }
    let mut negatives = 0;
    for k in 0..n {
        let pivot = a[k * n + k];
        if pivot == 0.0 {
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

/// Eigenvalues by inertia bisection between Gershgorin bounds.
pub fn inertia_bisection_eigenvalues(m: &Matrix, tol: f64) -> Vec<f64> {
    let n = m.n;
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

/// Uniform sample in `(lo, hi)`.
pub fn uniform_in(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.next_f64()
}
