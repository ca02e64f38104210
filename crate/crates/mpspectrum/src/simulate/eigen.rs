//! Dense symmetric eigensolver: Householder reduction to tridiagonal form
//! followed by implicit-shift QL iteration, eigenvalues only.

use rayon::prelude::*;

use super::{Matrix, SimError};

/// QL sweeps are capped at `30 n` in total.
pub const QL_SWEEP_FACTOR: usize = 30;

const PARALLEL_CUTOFF: usize = 256;

/// Householder reduction of a symmetric matrix to tridiagonal form,
/// eigenvalues-only variant (no transform accumulation). Consumes a working
/// copy; returns the diagonal and subdiagonal.
pub(super) fn tridiagonalize(mut a: Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = a.n;
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let scale: f64 = (0..=l).map(|k| a.at(i, k).abs()).sum();
            if scale == 0.0 {
                e[i] = a.at(i, l);
            } else {
                for k in 0..=l {
                    let v = a.at(i, k) / scale;
                    a.set(i, k, v);
                    h += v * v;
                }
                let f = a.at(i, l);
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a.set(i, l, f - g);

                // p = A u / h on the leading block, accumulated from the
                // stored lower triangle.
                let (head, tail) = a.data.split_at_mut(i * n);
                let u = &tail[..=l];
                let compute_p = |j: usize| -> f64 {
                    let row_j = &head[j * n..j * n + j + 1];
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += row_j[k] * u[k];
                    }
                    for k in (j + 1)..=l {
                        g += head[k * n + j] * u[k];
                    }
                    g / h
                };
                let p: Vec<f64> = if l >= PARALLEL_CUTOFF {
                    (0..=l).into_par_iter().map(compute_p).collect()
                } else {
                    (0..=l).map(compute_p).collect()
                };
                let f: f64 = (0..=l).map(|j| p[j] * u[j]).sum();
                let hh = f / (h + h);
                // q = p - hh u, then A <- A - u q' - q u'.
                let q: Vec<f64> = (0..=l).map(|j| p[j] - hh * u[j]).collect();
                let update_row = |(j, row_j): (usize, &mut [f64])| {
                    let fj = u[j];
                    let gj = q[j];
                    for k in 0..=j {
                        row_j[k] -= fj * q[k] + gj * u[k];
                    }
                };
                if l >= PARALLEL_CUTOFF {
                    head.par_chunks_mut(n)
                        .take(l + 1)
                        .enumerate()
                        .map(|(j, row)| (j, row))
                        .for_each(update_row);
                } else {
                    head.chunks_mut(n)
                        .take(l + 1)
                        .enumerate()
                        .for_each(|(j, row)| update_row((j, row)));
                }
            }
        } else {
            e[i] = a.at(i, l);
        }
        d[i] = h;
    }
    for i in 0..n {
        d[i] = a.at(i, i);
    }
    (d, e)
}

/// Implicit-shift QL iteration on a symmetric tridiagonal matrix.
/// Returns the eigenvalues (unsorted) and the largest subdiagonal magnitude
/// accepted at deflation.
pub(super) fn ql_implicit(
    d: &mut [f64],
    e: &mut [f64],
) -> Result<f64, SimError> {
    let n = d.len();
    if n == 0 {
        return Ok(0.0);
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut max_accepted: f64 = 0.0;
    let mut total_sweeps = 0usize;
    for l in 0..n {
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                if l + 1 < n {
                    max_accepted = max_accepted.max(e[l].abs());
                }
                break;
            }
            total_sweeps += 1;
            if total_sweeps > QL_SWEEP_FACTOR * n {
                return Err(SimError::QlNoConvergence {
                    sweeps: total_sweeps,
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0, 1.0);
            let mut p = 0.0;
            let mut broke_early = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    // Deflate mid-sweep and restart this eigenvalue.
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    broke_early = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if broke_early {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(max_accepted)
}

/// One step of shifted inverse iteration: solves `(W - shift I) v = rhs` by
/// Gaussian elimination with partial pivoting. Test-scale sizes only.
pub fn shifted_solve(w: &Matrix, shift: f64, rhs: &[f64]) -> Result<Vec<f64>, SimError> {
    let n = w.n;
    let mut a = w.data.clone();
    for i in 0..n {
        a[i * n + i] -= shift;
    }
    let mut x: Vec<f64> = rhs.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (mut pivot_row, mut pivot_val) = (k, a[perm[k] * n + k].abs());
        for r in (k + 1)..n {
            let v = a[perm[r] * n + k].abs();
            if v > pivot_val {
                pivot_row = r;
                pivot_val = v;
            }
        }
        if pivot_val == 0.0 {
            return Err(SimError::SingularShift { shift });
        }
        perm.swap(k, pivot_row);
        let pk = perm[k];
        let diag = a[pk * n + k];
        for r in (k + 1)..n {
            let pr = perm[r];
            let factor = a[pr * n + k] / diag;
            if factor == 0.0 {
                continue;
            }
            for c in k..n {
                a[pr * n + c] -= factor * a[pk * n + c];
            }
            x[pr] -= factor * x[pk];
        }
    }
    let mut out = vec![0.0; n];
    for k in (0..n).rev() {
        let pk = perm[k];
        let mut v = x[pk];
        for c in (k + 1)..n {
            v -= a[pk * n + c] * out[c];
        }
        out[k] = v / a[pk * n + k];
    }
    Ok(out)
}
