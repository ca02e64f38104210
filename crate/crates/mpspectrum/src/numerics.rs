//! Shared scalar numerics: bracketed root finding, adaptive quadrature and
//! Richardson extrapolation toward zero, plus small complex helpers.
//!
//! Everything here is callback-based and pure; thread safety is inherited
//! from the callbacks.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use thiserror::Error;

/// Hard cap on bracketed root iterations; failure is an error, never a hang.
pub const ROOT_ITERATION_LIMIT: usize = 60;

/// Hard cap on quadrature bisection depth per subinterval.
pub const QUADRATURE_DEPTH_LIMIT: usize = 24;

#[derive(Debug, Clone, Error)]
pub enum NumericsError {
    #[error("no sign change on [{a}, {b}]: f(a) = {fa:e}, f(b) = {fb:e}")]
    NoSignChange { a: f64, b: f64, fa: f64, fb: f64 },
    #[error("root bracket [{a}, {b}] is invalid")]
    BadBracket { a: f64, b: f64 },
    #[error(
        "root search exhausted {ROOT_ITERATION_LIMIT} iterations; best x = {best}, |f| = {residual:e}"
    )]
    RootIterations { best: f64, residual: f64 },
    #[error("integration interval [{a}, {b}] is invalid")]
    BadInterval { a: f64, b: f64 },
    #[error(
        "quadrature stalled at depth {QUADRATURE_DEPTH_LIMIT}: estimate ({0}, {1}) with error {2:e} > tol {3:e}",
        estimate.0, estimate.1, error, tol
    )]
    QuadratureDepth {
        /// Best (re, im) estimate reached; im is 0 for real integrands.
        estimate: (f64, f64),
        error: f64,
        tol: f64,
    },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("extrapolation needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("extrapolation heights must be finite, positive and strictly decreasing")]
    BadHeights,
}

/// Complex square root with the branch chosen so that `Im result >= 0`.
///
/// This is the branch continuous on the upper half-plane that every
/// closed-form Stieltjes transform in this crate uses.
#[inline]
pub fn uhp_sqrt(z: Complex64) -> Complex64 {
    let s = z.sqrt();
    if s.im < 0.0 {
        -s
    } else {
        s
    }
}

/// A root bracket `[a, b]` with a verified sign change and a target tolerance.
#[derive(Debug, Clone, Copy)]
pub struct BracketedRoot {
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    tol: f64,
}

impl BracketedRoot {
    /// Verifies `a < b` and `f(a) * f(b) <= 0` at construction.
    pub fn new<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<Self, NumericsError> {
        if !(a.is_finite() && b.is_finite() && a < b && tol > 0.0) {
            return Err(NumericsError::BadBracket { a, b });
        }
        let fa = f(a);
        let fb = f(b);
        if !(fa.is_finite() && fb.is_finite()) {
            return Err(NumericsError::NonFinite("root bracket endpoints"));
        }
        if fa * fb > 0.0 {
            return Err(NumericsError::NoSignChange { a, b, fa, fb });
        }
        Ok(Self { a, b, fa, fb, tol })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

/// Brent's method on a verified bracket: bisection/secant/inverse-quadratic
/// hybrid, always confined to `[a, b]`.
pub fn find_root<F: Fn(f64) -> f64>(
    f: F,
    bracket: &BracketedRoot,
) -> Result<f64, NumericsError> {
    let tol = bracket.tol;
    let (mut a, mut b) = (bracket.a, bracket.b);
    let (mut fa, mut fb) = (bracket.fa, bracket.fb);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..ROOT_ITERATION_LIMIT {
        if fb * fc > 0.0 {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            // Inverse quadratic interpolation, or secant when a == c.
            let s = fb / fa;
            let (mut p, mut q) = if a == c {
                (2.0 * xm * s, 1.0 - s)
            } else {
                let q = fa / fc;
                let r = fb / fc;
                (
                    s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0)),
                    (q - 1.0) * (r - 1.0) * (s - 1.0),
                )
            };
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 {
            d
        } else {
            tol1.copysign(xm)
        };
        fb = f(b);
        if !fb.is_finite() {
            return Err(NumericsError::NonFinite("root iteration"));
        }
    }
    Err(NumericsError::RootIterations {
        best: b,
        residual: fb.abs(),
    })
}

/// Scalar value types the adaptive quadrature engine can accumulate.
pub trait IntegrandValue: Copy {
    fn zero() -> Self;
    fn add(self, other: Self) -> Self;
    fn sub(self, other: Self) -> Self;
    fn scale(self, by: f64) -> Self;
    fn norm(self) -> f64;
    fn parts(self) -> (f64, f64);
}

impl IntegrandValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn sub(self, other: Self) -> Self {
        self - other
    }
    fn scale(self, by: f64) -> Self {
        self * by
    }
    fn norm(self) -> f64 {
        self.abs()
    }
    fn parts(self) -> (f64, f64) {
        (self, 0.0)
    }
}

impl IntegrandValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn sub(self, other: Self) -> Self {
        self - other
    }
    fn scale(self, by: f64) -> Self {
        self * by
    }
    fn norm(self) -> f64 {
        Complex64::norm(self)
    }
    fn parts(self) -> (f64, f64) {
        (self.re, self.im)
    }
}

// 15-point Kronrod extension of the 7-point Gauss rule on [-1, 1].
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

fn gauss_kronrod<V: IntegrandValue, F: Fn(f64) -> V>(f: &F, a: f64, b: f64) -> (V, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc.scale(WGK[7]);
    let mut gauss = fc.scale(WG[3]);
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = f(center - dx).add(f(center + dx));
        kronrod = kronrod.add(sum.scale(WGK[j]));
        if j % 2 == 1 {
            gauss = gauss.add(sum.scale(WG[j / 2]));
        }
    }
    kronrod = kronrod.scale(half);
    gauss = gauss.scale(half);
    let raw = kronrod.sub(gauss).norm();
    // QUADPACK-style sharpening of the raw Gauss/Kronrod gap.
    let err = if raw > 0.0 {
        (200.0 * raw).powf(1.5).min(raw * 200.0).max(raw * 1e-3)
    } else {
        0.0
    };
    (kronrod, err)
}

struct Segment<V> {
    err: f64,
    a: f64,
    b: f64,
    depth: usize,
    value: V,
}

impl<V> PartialEq for Segment<V> {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err && self.a == other.a
    }
}
impl<V> Eq for Segment<V> {}
impl<V> PartialOrd for Segment<V> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<V> Ord for Segment<V> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap on error; tie-break on the left endpoint for determinism.
        self.err
            .total_cmp(&other.err)
            .then(other.a.total_cmp(&self.a))
    }
}

fn adaptive<V: IntegrandValue, F: Fn(f64) -> V>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<V, NumericsError> {
    let (value, err) = gauss_kronrod(f, a, b);
    if !value.norm().is_finite() {
        return Err(NumericsError::NonFinite("quadrature"));
    }
    let mut heap = BinaryHeap::new();
    heap.push(Segment {
        err,
        a,
        b,
        depth: 0,
        value,
    });
    let mut total_err = err;
    while total_err > tol {
        let worst = heap.pop().expect("segment heap cannot be empty");
        if worst.depth >= QUADRATURE_DEPTH_LIMIT {
            let mut best = worst.value;
            for seg in &heap {
                best = best.add(seg.value);
            }
            return Err(NumericsError::QuadratureDepth {
                estimate: best.parts(),
                error: total_err,
                tol,
            });
        }
        let mid = 0.5 * (worst.a + worst.b);
        total_err -= worst.err;
        for (lo, hi) in [(worst.a, mid), (mid, worst.b)] {
            let (value, err) = gauss_kronrod(f, lo, hi);
            if !value.norm().is_finite() {
                return Err(NumericsError::NonFinite("quadrature"));
            }
            total_err += err;
            heap.push(Segment {
                err,
                a: lo,
                b: hi,
                depth: worst.depth + 1,
                value,
            });
        }
    }
    let mut sum = V::zero();
    for seg in &heap {
        sum = sum.add(seg.value);
    }
    Ok(sum)
}

fn integrate_impl<V: IntegrandValue, F: Fn(f64) -> V>(
    f: F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<V, NumericsError> {
    if !(a.is_finite() && b.is_finite() && a <= b && tol > 0.0) {
        return Err(NumericsError::BadInterval { a, b });
    }
    if a == b {
        return Ok(V::zero());
    }
    // x = center + r sin(theta) regularizes inverse-square-root endpoint
    // singularities; smooth integrands stay smooth under it.
    let center = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let g = |theta: f64| {
        let (sin, cos) = theta.sin_cos();
        f(center + r * sin).scale(r * cos)
    };
    adaptive(&g, -FRAC_PI_2, FRAC_PI_2, tol)
}

/// Adaptive integral of `f` over `[a, b]` to absolute tolerance `tol`.
///
/// `f` must be finite on the open interval; inverse-square-root endpoint
/// singularities are handled by the built-in sine substitution.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64, NumericsError> {
    integrate_impl(f, a, b, tol)
}

/// Generic-valued variant of [`integrate`] for any [`IntegrandValue`].
pub fn integrate_value<V: IntegrandValue, F: Fn(f64) -> V>(
    f: F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<V, NumericsError> {
    integrate_impl(f, a, b, tol)
}

/// Complex-valued counterpart of [`integrate`] over a real interval.
pub fn integrate_complex<F: Fn(f64) -> Complex64>(
    f: F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<Complex64, NumericsError> {
    integrate_impl(f, a, b, tol)
}

/// Richardson (polynomial-in-`y`) extrapolation of `(y_k, v_k)` samples to
/// `y = 0`. Returns the limit and an error estimate taken from the last
/// tableau column difference.
///
/// The model is a plain polynomial in `y` because the quantities fed here
/// (imaginary parts just off the real axis) have linear leading corrections.
pub fn extrapolate_to_zero(pairs: &[(f64, f64)]) -> Result<(f64, f64), NumericsError> {
    let n = pairs.len();
    if n < 3 {
        return Err(NumericsError::TooFewPoints(n));
    }
    for window in pairs.windows(2) {
        let (y0, y1) = (window[0].0, window[1].0);
        if !(y0.is_finite() && y1.is_finite() && y0 > y1 && y1 > 0.0) {
            return Err(NumericsError::BadHeights);
        }
    }
    if pairs.iter().any(|(_, v)| !v.is_finite()) {
        return Err(NumericsError::NonFinite("extrapolation values"));
    }
    let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut t: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut prev_diag = t[n - 1];
    for j in 1..n {
        for i in (j..n).rev() {
            t[i] = (y[i] * t[i - 1] - y[i - j] * t[i]) / (y[i] - y[i - j]);
        }
        if j == n - 2 {
            prev_diag = t[n - 1];
        }
    }
    let limit = t[n - 1];
    let err = (limit - prev_diag).abs();
    if !limit.is_finite() {
        return Err(NumericsError::NonFinite("extrapolation limit"));
    }
    Ok((limit, err))
}
