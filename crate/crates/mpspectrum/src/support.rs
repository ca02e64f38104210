//! Support determination for the limit law through the real curve `x(h)`.
//!
//! Outside the support of `B`, the real Stieltjes transform `m_B(h)` is
//! defined and increasing. On the admissible set
//!
//! ```text
//! H = { h outside supp(B) : m_B(h) in E(A) },
//! E(A) = {0} union { m != 0 : -1/m outside supp(A) }   (supp(A) compact),
//! ```
//!
//! the curve `x(h) = h + gamma * int u/(1 + u m_B(h)) dA(u)` parameterizes
//! candidate points outside the support of the limit law: `x(h)` lies outside
//! the support exactly when `x'(h) > 0`, and the images of the increasing
//! stretches tile the complement. Stationary points of `x` are the support
//! edges, where the density vanishes like a square root with a computable
//! constant.

use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use crate::measures::{IntervalUnion, Measure, MeasureError};
use crate::numerics::{self, BracketedRoot, NumericsError};

/// Stationary points with `|x''|` below this are inflection-like and refuse
/// edge classification.
pub const DEGENERATE_EDGE_TOL: f64 = 1e-8;

/// `|x'|` required of a candidate edge location.
const STATIONARY_TOL: f64 = 1e-6;

/// Slope magnitudes below this over a whole stretch count as flat.
const FLAT_TOL: f64 = 1e-10;

/// Window ends must reach slope at least this before support assembly.
const TAIL_SLOPE: f64 = 0.9;

#[derive(Debug, Clone, Error)]
pub enum SupportError {
    #[error("search window [{lo}, {hi}] is invalid")]
    BadWindow { lo: f64, hi: f64 },
    #[error("h = {h} is outside the admissible set: m_B(h) = {m_b} is not in E(A)")]
    OutsideDomain { h: f64, m_b: f64 },
    #[error("h = {h0} is not a stationary point of x(h): x'(h0) = {x1:e}")]
    NotStationary { h0: f64, x1: f64 },
    #[error(
        "degenerate edge at h = {h0}: |x''(h0)| = {x2:e} below {DEGENERATE_EDGE_TOL:e} (inflection, not an edge)"
    )]
    DegenerateEdge { h0: f64, x2: f64 },
    #[error("window extension failed: x'(h) never reached {TAIL_SLOPE} at the window ends")]
    WindowExtension,
    #[error("curve scan failed: {0}")]
    Scan(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// One sample of the curve `x(h)` with its first three derivatives.
#[derive(Debug, Clone, Copy)]
pub struct HCurvePoint {
    pub h: f64,
    pub m_b: f64,
    pub x: f64,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeSide {
    LeftEndpoint,
    RightEndpoint,
}

impl EdgeSide {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::LeftEndpoint => "left",
            Self::RightEndpoint => "right",
        }
    }
}

/// A square-root edge of the support: location, side, curvature of `x(h)`
/// and the slope constant of the density `f(x) ~ q_prime sqrt(|x - x0|)`.
#[derive(Debug, Clone, Copy)]
pub struct EdgeRecord {
    pub h0: f64,
    pub x0: f64,
    pub side: EdgeSide,
    pub x2: f64,
    pub q_prime: f64,
}

#[derive(Debug, Clone)]
pub struct SupportOptions {
    /// Explicit search window; the default derives from the supports and is
    /// extended until both window ends sit on slope-one tails.
    pub window: Option<(f64, f64)>,
    /// Initial scan points per admissible component.
    pub grid: usize,
    /// Absolute tolerance for located roots and domain boundaries.
    pub root_tol: f64,
    /// Quadrature tolerance for curve evaluations.
    pub quad_tol: f64,
}

impl Default for SupportOptions {
    fn default() -> Self {
        Self {
            window: None,
            grid: 2048,
            root_tol: 1e-10,
            quad_tol: 1e-10,
        }
    }
}

/// Full description of the support of the limit law.
#[derive(Debug, Clone)]
pub struct SupportReport {
    /// Closed support, isolated points included as degenerate intervals.
    pub support: IntervalUnion,
    /// Open complement pieces; shared endpoints stay distinct.
    pub complement: IntervalUnion,
    /// Point masses `(location, mass)`.
    pub atoms: Vec<(f64, f64)>,
    /// Square-root edges, sorted by location.
    pub edges: Vec<EdgeRecord>,
    /// Increasing stretches of `x(h)` and their image intervals.
    pub h_intervals_increasing: Vec<((f64, f64), (f64, f64))>,
    /// Boundary cases that are reported rather than classified.
    pub degenerate_flags: Vec<String>,
}

impl SupportReport {
    fn support_all_line(flags: Vec<String>, atoms: Vec<(f64, f64)>) -> Self {
        Self {
            support: IntervalUnion::whole_line(),
            complement: IntervalUnion::empty(),
            atoms,
            edges: Vec::new(),
            h_intervals_increasing: Vec::new(),
            degenerate_flags: flags,
        }
    }

    /// JSON form with `support`, `atoms`, `edges` and `flags` fields.
    /// Infinite endpoints serialize as `null`.
    pub fn to_json(&self) -> serde_json::Value {
        let seg = |&(lo, hi): &(f64, f64)| {
            json!([
                if lo.is_finite() { json!(lo) } else { json!(null) },
                if hi.is_finite() { json!(hi) } else { json!(null) },
            ])
        };
        json!({
            "support": self.support.intervals().iter().map(seg).collect::<Vec<_>>(),
            "atoms": self
                .atoms
                .iter()
                .map(|&(x, mass)| json!({"x": x, "mass": mass}))
                .collect::<Vec<_>>(),
            "edges": self
                .edges
                .iter()
                .map(|e| {
                    json!({
                        "h0": e.h0,
                        "x0": e.x0,
                        "side": e.side.as_str(),
                        "x2": e.x2,
                        "q_prime": e.q_prime,
                    })
                })
                .collect::<Vec<_>>(),
            "flags": self.degenerate_flags,
        })
    }
}

/// Membership in `E(A)`: zero belongs iff `supp(A)` is compact, a nonzero
/// `m` belongs iff `-1/m` avoids `supp(A)`.
pub fn in_e_a(a: &Measure, m: f64) -> bool {
    if m == 0.0 {
        a.support().is_bounded()
    } else {
        !a.support().contains(-1.0 / m)
    }
}

/// Excluded `m`-values induced by one support component of `A`.
#[derive(Debug, Clone, Copy)]
enum BadM {
    Point(f64),
    Range(f64, f64),
}

fn bad_m_sets(a: &Measure) -> Vec<BadM> {
    let mut out = Vec::new();
    for &(lo, hi) in a.support().intervals() {
        if lo == hi {
            if lo != 0.0 {
                out.push(BadM::Point(-1.0 / lo));
            }
        } else if lo > 0.0 || hi < 0.0 {
            out.push(BadM::Range(-1.0 / lo, -1.0 / hi));
        } else if lo == 0.0 {
            out.push(BadM::Range(f64::NEG_INFINITY, -1.0 / hi));
        } else if hi == 0.0 {
            out.push(BadM::Range(-1.0 / lo, f64::INFINITY));
        } else {
            out.push(BadM::Range(f64::NEG_INFINITY, -1.0 / hi));
            out.push(BadM::Range(-1.0 / lo, f64::INFINITY));
        }
    }
    if !a.support().is_bounded() {
        out.push(BadM::Point(0.0));
    }
    out
}

/// Scan abscissae for one open component: uniform fill plus geometric
/// refinement toward both endpoints.
fn scan_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let width = hi - lo;
    let mut pts = Vec::with_capacity(n + 80);
    for j in 0..n {
        pts.push(lo + width * (j as f64 + 0.5) / n as f64);
    }
    for k in 2..=40 {
        let off = width * 0.5_f64.powi(k);
        pts.push(lo + off);
        pts.push(hi - off);
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.retain(|&h| h > lo && h < hi);
    pts
}

/// The admissible set `H` intersected with a finite window, as a sorted list
/// of open intervals. Boundaries are located to `root_tol`; excluded single
/// points (reciprocals of atoms of `A`) split intervals without removing
/// length.
pub fn h_domain(
    a: &Measure,
    b: &Measure,
    window: (f64, f64),
) -> Result<Vec<(f64, f64)>, SupportError> {
    h_domain_with(a, b, window, &SupportOptions::default())
}

fn h_domain_with(
    a: &Measure,
    b: &Measure,
    window: (f64, f64),
    opts: &SupportOptions,
) -> Result<Vec<(f64, f64)>, SupportError> {
    let (wlo, whi) = window;
    if !(wlo.is_finite() && whi.is_finite() && wlo < whi) {
        return Err(SupportError::BadWindow { lo: wlo, hi: whi });
    }
    let comps = b.support().complement_within(wlo, whi);
    let bad = bad_m_sets(a);
    let mut out = Vec::new();
    for (lo, hi) in comps {
        let samples = scan_points(lo, hi, 512);
        let mut table: Vec<(f64, f64)> = Vec::with_capacity(samples.len());
        for &h in &samples {
            match b.stieltjes_real_with_tol(h, opts.quad_tol) {
                Ok(m) => table.push((h, m)),
                Err(MeasureError::InSupport { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
        }
        if table.is_empty() {
            continue;
        }
        // m_B is increasing on the component; locate every threshold
        // crossing by a bracketed root solve.
        let mut cuts: Vec<f64> = Vec::new();
        let mut thresholds: Vec<f64> = Vec::new();
        for bm in &bad {
            match *bm {
                BadM::Point(t) => thresholds.push(t),
                BadM::Range(t0, t1) => {
                    if t0.is_finite() {
                        thresholds.push(t0);
                    }
                    if t1.is_finite() {
                        thresholds.push(t1);
                    }
                }
            }
        }
        for &t in &thresholds {
            for w in table.windows(2) {
                let (h0, m0) = w[0];
                let (h1, m1) = w[1];
                if (m0 - t) == 0.0 {
                    cuts.push(h0);
                    break;
                }
                if (m0 - t) * (m1 - t) < 0.0 {
                    let f = |h: f64| {
                        b.stieltjes_real_with_tol(h, opts.quad_tol).unwrap_or(f64::NAN) - t
                    };
                    let bracket = BracketedRoot::new(f, h0, h1, opts.root_tol)?;
                    cuts.push(numerics::find_root(f, &bracket)?);
                    break;
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut boundaries = vec![lo];
        boundaries.extend(cuts.iter().copied());
        boundaries.push(hi);
        for pair in boundaries.windows(2) {
            let (c0, c1) = (pair[0], pair[1]);
            if c1 <= c0 {
                continue;
            }
            let mid = 0.5 * (c0 + c1);
            let m_mid = match b.stieltjes_real_with_tol(mid, opts.quad_tol) {
                Ok(m) => m,
                Err(_) => continue,
            };
            if in_e_a(a, m_mid) {
                out.push((c0, c1));
            }
        }
    }
    Ok(out)
}

/// Evaluates the curve and its first three derivatives at `h` in `H`.
///
/// Uses the moment shorthand `P_k = gamma * int u^k/(1+u m_B)^k dA` and
/// `Q_k = int dB/(tau - h)^k`:
///
/// ```text
/// x   = h + P1              x'  = 1 - P2 Q2
/// x'' = 2 P3 Q2^2 - 2 P2 Q3
/// x'''= -6 P4 Q2^3 + 12 P3 Q2 Q3 - 6 P2 Q4
/// ```
pub fn h_curve(a: &Measure, b: &Measure, gamma: f64, h: f64) -> Result<HCurvePoint, SupportError> {
    h_curve_with_tol(a, b, gamma, h, SupportOptions::default().quad_tol)
}

pub fn h_curve_with_tol(
    a: &Measure,
    b: &Measure,
    gamma: f64,
    h: f64,
    tol: f64,
) -> Result<HCurvePoint, SupportError> {
    let m_b = b.stieltjes_real_with_tol(h, tol)?;
    if !in_e_a(a, m_b) {
        return Err(SupportError::OutsideDomain { h, m_b });
    }
    let p = |k: i32| -> Result<f64, SupportError> {
        Ok(gamma * a.integrate_against(|u| (u / (1.0 + u * m_b)).powi(k), tol)?)
    };
    let (p1, p2, p3, p4) = (p(1)?, p(2)?, p(3)?, p(4)?);
    let q2 = b.inverse_moment_with_tol(h, 2, tol)?;
    let q3 = b.inverse_moment_with_tol(h, 3, tol)?;
    let q4 = b.inverse_moment_with_tol(h, 4, tol)?;
    Ok(HCurvePoint {
        h,
        m_b,
        x: h + p1,
        x1: 1.0 - p2 * q2,
        x2: 2.0 * p3 * q2 * q2 - 2.0 * p2 * q3,
        x3: -6.0 * p4 * q2 * q2 * q2 + 12.0 * p3 * q2 * q3 - 6.0 * p2 * q4,
    })
}

/// Cheap scan evaluation: `(x, x')` only.
fn x_and_slope(
    a: &Measure,
    b: &Measure,
    gamma: f64,
    h: f64,
    tol: f64,
) -> Result<(f64, f64), SupportError> {
    let m_b = b.stieltjes_real_with_tol(h, tol)?;
    if !in_e_a(a, m_b) {
        return Err(SupportError::OutsideDomain { h, m_b });
    }
    let p1 = gamma * a.integrate_against(|u| u / (1.0 + u * m_b), tol)?;
    let p2 = gamma * a.integrate_against(|u| (u / (1.0 + u * m_b)).powi(2), tol)?;
    let q2 = b.inverse_moment_with_tol(h, 2, tol)?;
    Ok((h + p1, 1.0 - p2 * q2))
}

/// Classifies a stationary point `h0` of `x(h)` as a support edge.
///
/// `x''(h0) < 0` marks a left endpoint (local maximum of `x`), `x'' > 0` a
/// right endpoint. The density near the edge behaves like
/// `q_prime * sqrt(|x - x0|)` with
/// `q_prime = (1/pi) sqrt(-/+ 2 / x''(h0)) * Q2(h0)`.
pub fn edge_behavior(
    a: &Measure,
    b: &Measure,
    gamma: f64,
    h0: f64,
) -> Result<EdgeRecord, SupportError> {
    edge_behavior_with(a, b, gamma, h0, &SupportOptions::default())
}

fn edge_behavior_with(
    a: &Measure,
    b: &Measure,
    gamma: f64,
    h0: f64,
    opts: &SupportOptions,
) -> Result<EdgeRecord, SupportError> {
    let point = h_curve_with_tol(a, b, gamma, h0, opts.quad_tol)?;
    if point.x1.abs() > STATIONARY_TOL {
        return Err(SupportError::NotStationary { h0, x1: point.x1 });
    }
    if point.x2.abs() < DEGENERATE_EDGE_TOL {
        return Err(SupportError::DegenerateEdge { h0, x2: point.x2 });
    }
    let q2 = b.inverse_moment_with_tol(h0, 2, opts.quad_tol)?;
    let (side, q_prime) = if point.x2 < 0.0 {
        (
            EdgeSide::LeftEndpoint,
            (-2.0 / point.x2).sqrt() * q2 / std::f64::consts::PI,
        )
    } else {
        (
            EdgeSide::RightEndpoint,
            (2.0 / point.x2).sqrt() * q2 / std::f64::consts::PI,
        )
    };
    Ok(EdgeRecord {
        h0,
        x0: point.x,
        side,
        x2: point.x2,
        q_prime,
    })
}

/// True when the endpoint is a pure atom boundary of `B`: an atom sits there
/// and no continuous component of `B` touches the point.
fn is_atom_boundary(b: &Measure, h: f64) -> bool {
    b.atom_mass(h) > 0.0
        && b
            .continuous_components()
            .iter()
            .all(|c| h < c.lo || h > c.hi)
}

fn default_window(a: &Measure, b: &Measure, gamma: f64) -> Result<(f64, f64), SupportError> {
    let margin = 1.0 + gamma * a.second_moment()?.max(0.0).sqrt();
    let lo = b.support().min().unwrap_or(0.0) - margin;
    let hi = b.support().max().unwrap_or(0.0) + margin;
    Ok((lo, hi))
}

/// The window [`determine_support`] analyzes: the default span around
/// `supp(B)`, doubled until the curve slope exceeds the tail threshold at
/// both ends.
pub fn analysis_window(
    a: &Measure,
    b: &Measure,
    gamma: f64,
    opts: &SupportOptions,
) -> Result<(f64, f64), SupportError> {
    let (mut wlo, mut whi) = match opts.window {
        Some(w) => w,
        None => default_window(a, b, gamma)?,
    };
    if !(wlo.is_finite() && whi.is_finite() && wlo < whi) {
        return Err(SupportError::BadWindow { lo: wlo, hi: whi });
    }
    for _ in 0..16 {
        let lo_slope = x_and_slope(a, b, gamma, wlo, opts.quad_tol);
        let hi_slope = x_and_slope(a, b, gamma, whi, opts.quad_tol);
        if let (Ok((_, s0)), Ok((_, s1))) = (lo_slope, hi_slope) {
            if s0 > TAIL_SLOPE && s1 > TAIL_SLOPE {
                return Ok((wlo, whi));
            }
        }
        let width = whi - wlo;
        wlo -= width;
        whi += width;
    }
    Err(SupportError::WindowExtension)
}

/// Runs the support determination end to end.
///
/// Steps: build the admissible set inside a window whose ends sit on the
/// slope-one tails, scan each component for sign changes of `x'`, map every
/// maximal increasing stretch to its open image interval (the complement of
/// the support), classify interior stationary points as square-root edges,
/// and attach the point masses.
pub fn determine_support(
    a: &Measure,
    b: &Measure,
    gamma: f64,
    opts: &SupportOptions,
) -> Result<SupportReport, SupportError> {
    let mut flags: Vec<String> = Vec::new();
    let atoms = crate::solver::atom_masses(a, b, gamma);
    if b.as_dirac().is_some() {
        flags.push(
            "degenerate-B: B is a Dirac measure, outside the standing assumptions; \
             results follow the classical shifted pathway"
                .to_string(),
        );
    }

    // Window selection with tail extension. A failed extension is benign
    // when the admissible set turns out to be empty, so it is checked after
    // the domain is known.
    let window = analysis_window(a, b, gamma, opts);
    let extension_failed = matches!(window, Err(SupportError::WindowExtension));
    let (wlo, whi) = match window {
        Ok(w) => w,
        Err(SupportError::WindowExtension) => match opts.window {
            Some(w) => w,
            None => default_window(a, b, gamma)?,
        },
        Err(e) => return Err(e),
    };

    let domain = h_domain_with(a, b, (wlo, whi), opts)?;
    if b.support().complement_within(wlo, whi).is_empty() {
        flags.push("B occupies the whole window; support is the entire line".into());
        return Ok(SupportReport::support_all_line(flags, atoms));
    }
    if domain.is_empty() {
        flags.push("admissible set is empty; support is the entire line".into());
        return Ok(SupportReport::support_all_line(flags, atoms));
    }
    if extension_failed {
        return Err(SupportError::WindowExtension);
    }

    let window_eps = 1e-9 * (whi - wlo);
    let mut complement: Vec<(f64, f64)> = Vec::new();
    let mut increasing: Vec<((f64, f64), (f64, f64))> = Vec::new();
    let mut edges: Vec<EdgeRecord> = Vec::new();

    for &(lo, hi) in &domain {
        // Scan the component. Points that fail to evaluate (quadrature
        // stalls hard against a boundary) are dropped as long as the scan
        // keeps its resolution.
        let pts = scan_points(lo, hi, opts.grid);
        let evals: Vec<(f64, Result<(f64, f64), SupportError>)> = pts
            .par_iter()
            .map(|&h| (h, x_and_slope(a, b, gamma, h, opts.quad_tol)))
            .collect();
        let mut curve: Vec<(f64, f64, f64)> = Vec::with_capacity(evals.len());
        let mut failures = 0usize;
        for (h, res) in evals {
            match res {
                Ok((x, x1)) => curve.push((h, x, x1)),
                Err(SupportError::Numerics(_)) | Err(SupportError::Measure(_)) => failures += 1,
                Err(e) => return Err(e),
            }
        }
        if curve.len() < pts.len() / 2 || curve.is_empty() {
            return Err(SupportError::Scan(format!(
                "{failures} of {} curve evaluations failed on component ({lo}, {hi})",
                pts.len()
            )));
        }

        // Bracket sign changes of x' with one refinement pass, then solve.
        let mut roots: Vec<f64> = Vec::new();
        for w in 0..curve.len() - 1 {
            let (h0, _, s0) = curve[w];
            let (h1, _, s1) = curve[w + 1];
            if s0 == 0.0 {
                roots.push(h0);
                continue;
            }
            if s0 * s1 >= 0.0 {
                continue;
            }
            // Refine x4 to separate closely spaced stationary points.
            let mut sub = vec![(h0, s0)];
            for t in 1..4 {
                let hm = h0 + (h1 - h0) * t as f64 / 4.0;
                if let Ok((_, sm)) = x_and_slope(a, b, gamma, hm, opts.quad_tol) {
                    sub.push((hm, sm));
                }
            }
            sub.push((h1, s1));
            for pair in sub.windows(2) {
                let ((ha, sa), (hb, sb)) = (pair[0], pair[1]);
                if sa == 0.0 {
                    roots.push(ha);
                } else if sb == 0.0 {
                    roots.push(hb);
                } else if sa * sb < 0.0 {
                    let f = |h: f64| {
                        x_and_slope(a, b, gamma, h, opts.quad_tol)
                            .map(|(_, s)| s)
                            .unwrap_or(f64::NAN)
                    };
                    let bracket = BracketedRoot::new(f, ha, hb, opts.root_tol)?;
                    roots.push(numerics::find_root(f, &bracket)?);
                }
            }
        }
        roots.sort_by(f64::total_cmp);
        roots.dedup_by(|u, v| (*u - *v).abs() < opts.root_tol);

        // Split into maximal sign-constant stretches.
        let mut bounds = vec![lo];
        bounds.extend(roots.iter().copied());
        bounds.push(hi);
        for seg in bounds.windows(2) {
            let (s, e) = (seg[0], seg[1]);
            if e <= s {
                continue;
            }
            // Representative slope from the scan samples inside; midpoint
            // evaluation as fallback.
            let inside: Vec<&(f64, f64, f64)> = curve
                .iter()
                .filter(|&&(h, _, _)| h > s && h < e)
                .collect();
            let rep_slope = if inside.is_empty() {
                x_and_slope(a, b, gamma, 0.5 * (s + e), opts.quad_tol)
                    .map(|(_, s1)| s1)
                    .unwrap_or(-1.0)
            } else {
                inside[inside.len() / 2].2
            };
            let flat = inside
                .iter()
                .map(|&&(_, _, s1)| s1.abs())
                .fold(0.0, f64::max)
                < FLAT_TOL
                && !inside.is_empty();
            if flat {
                flags.push(format!(
                    "flat stretch of x(h) on ({s}, {e}) treated as support (|x'| < {FLAT_TOL:e})"
                ));
                continue;
            }
            if rep_slope <= 0.0 {
                continue;
            }

            // Image endpoints of the increasing stretch.
            let x_start = stretch_endpoint(
                a, b, gamma, s, lo, hi, wlo, whi, window_eps, &roots, &curve, opts, &mut flags,
            )?;
            let x_end = stretch_endpoint(
                a, b, gamma, e, lo, hi, wlo, whi, window_eps, &roots, &curve, opts, &mut flags,
            )?;
            complement.push((x_start, x_end));
            increasing.push(((s, e), (x_start, x_end)));
        }

        for &h0 in &roots {
            match edge_behavior_with(a, b, gamma, h0, opts) {
                Ok(rec) => edges.push(rec),
                Err(SupportError::DegenerateEdge { h0, x2 }) => flags.push(format!(
                    "stationary point at h = {h0} has |x''| = {x2:e}: inflection, no edge record"
                )),
                Err(e) => return Err(e),
            }
        }
    }

    // Order complement pieces and enforce disjointness.
    complement.sort_by(|p, q| p.0.total_cmp(&q.0));
    increasing.sort_by(|p, q| (p.1).0.total_cmp(&(q.1).0));
    let mut cleaned: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in complement {
        if hi <= lo {
            continue;
        }
        match cleaned.last().copied() {
            Some(last) if lo < last.1 - 1e-9 => {
                flags.push(format!(
                    "complement images ({}, {}) and ({lo}, {hi}) overlap; merged",
                    last.0, last.1
                ));
                cleaned.last_mut().expect("nonempty").1 = last.1.max(hi);
            }
            Some(last) if (lo - last.1).abs() <= 1e-9 && lo != last.1 => {
                flags.push(format!(
                    "complement images share the endpoint near {lo} within 1e-9; kept disjoint"
                ));
                cleaned.push((last.1, hi));
            }
            _ => cleaned.push((lo, hi)),
        }
    }

    // Support = closure of the complement of the open pieces.
    let mut support_pieces: Vec<(f64, f64)> = Vec::new();
    let mut cursor = f64::NEG_INFINITY;
    for &(lo, hi) in &cleaned {
        if lo >= cursor {
            if lo > cursor || (lo == cursor && cursor.is_finite()) {
                support_pieces.push((cursor, lo));
            }
            cursor = hi;
        } else {
            cursor = cursor.max(hi);
        }
    }
    if cursor < f64::INFINITY {
        support_pieces.push((cursor, f64::INFINITY));
    }
    support_pieces.retain(|&(lo, hi)| hi >= lo && !(lo == f64::NEG_INFINITY && hi == f64::NEG_INFINITY));
    let support = IntervalUnion::new(support_pieces)
        .map_err(|_| SupportError::Scan("support assembly produced bad intervals".into()))?;
    let complement = IntervalUnion::from_disjoint(cleaned)
        .map_err(|_| SupportError::Scan("complement assembly produced bad intervals".into()))?;

    for &(loc, mass) in &atoms {
        if !support.contains(loc) {
            flags.push(format!(
                "atom ({loc}, {mass}) not inside the computed support; numerical boundary case"
            ));
        }
    }
    edges.sort_by(|p, q| p.x0.total_cmp(&q.x0));
    // Both sides of an atom boundary produce the same one-sided limit text.
    flags.sort();
    flags.dedup();

    Ok(SupportReport {
        support,
        complement,
        atoms,
        edges,
        h_intervals_increasing: increasing,
        degenerate_flags: flags,
    })
}

/// Image endpoint of an increasing stretch at `h = at`.
///
/// Interior stationary points evaluate exactly; component ends fall into
/// three cases: window tails map to infinity, pure atom boundaries of `B`
/// carry the exact limit `x -> h0`, and remaining admissible-set boundaries
/// get a one-sided numerical limit. The latter two are flagged.
#[allow(clippy::too_many_arguments)]
fn stretch_endpoint(
    a: &Measure,
    b: &Measure,
    gamma: f64,
    at: f64,
    comp_lo: f64,
    comp_hi: f64,
    wlo: f64,
    whi: f64,
    window_eps: f64,
    roots: &[f64],
    curve: &[(f64, f64, f64)],
    opts: &SupportOptions,
    flags: &mut Vec<String>,
) -> Result<f64, SupportError> {
    let is_root = roots.iter().any(|&r| r == at);
    if is_root {
        let (x, _) = x_and_slope(a, b, gamma, at, opts.quad_tol)?;
        return Ok(x);
    }
    let at_lo = at == comp_lo;
    let boundary = if at_lo { comp_lo } else { comp_hi };
    if (boundary - wlo).abs() <= window_eps {
        return Ok(f64::NEG_INFINITY);
    }
    if (boundary - whi).abs() <= window_eps {
        return Ok(f64::INFINITY);
    }
    if is_atom_boundary(b, boundary) {
        let limit_slope = 1.0 - gamma * (1.0 - a.atom_mass(0.0)) / b.atom_mass(boundary);
        flags.push(format!(
            "isolated-atom boundary of B at h0 = {boundary}: one-sided limits x -> {boundary}, \
             x' -> {limit_slope}; hollow endpoint at ({boundary}, {boundary})"
        ));
        return Ok(boundary);
    }
    // Generic one-sided limit from the geometric scan samples.
    let mut pairs: Vec<(f64, f64)> = curve
        .iter()
        .filter_map(|&(h, x, _)| {
            let off = if at_lo { h - boundary } else { boundary - h };
            (off > 0.0 && off < 1e-4 * (comp_hi - comp_lo)).then_some((off, x))
        })
        .collect();
    pairs.sort_by(|p, q| q.0.total_cmp(&p.0));
    let limit = if pairs.len() >= 3 {
        let take = pairs.len().min(5);
        numerics::extrapolate_to_zero(&pairs[pairs.len() - take..])
            .map(|(v, _)| v)
            .unwrap_or(pairs[pairs.len() - 1].1)
    } else if let Some(&(_, x)) = pairs.last() {
        x
    } else {
        let (x, _) = x_and_slope(a, b, gamma, boundary + if at_lo { 1e-9 } else { -1e-9 }, opts.quad_tol)?;
        x
    };
    let near_slope = curve
        .iter()
        .min_by(|p, q| {
            (p.0 - boundary).abs().total_cmp(&(q.0 - boundary).abs())
        })
        .map(|&(_, _, s)| s)
        .unwrap_or(f64::NAN);
    flags.push(format!(
        "admissible-set boundary at h = {boundary}: one-sided limits x -> {limit}, x' -> {near_slope}"
    ));
    Ok(limit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn fig1() -> (Measure, Measure, f64) {
        (
            Measure::point_masses(&[(0.2, 0.0), (0.4, 1.0), (0.4, 10.0)]).unwrap(),
            Measure::point_masses(&[(0.4, -3.0), (0.6, 3.0)]).unwrap(),
            0.5,
        )
    }

    fn fig2() -> (Measure, Measure, f64) {
        (
            Measure::semicircle(1.0, 0.0).unwrap(),
            Measure::new(vec![
                (0.4, crate::measures::MeasurePart::atom(-3.0)),
                (0.6, crate::measures::MeasurePart::semicircle(1.0, 0.0)),
            ])
            .unwrap(),
            0.5,
        )
    }

    fn mp_setting(gamma: f64) -> (Measure, Measure, f64) {
        (Measure::dirac(1.0), Measure::dirac(0.0), gamma)
    }

    #[test]
    fn e_a_membership_examples() {
        let (a, _, _) = fig1();
        assert!(!in_e_a(&a, -1.0)); // -1/m = 1 in supp(A)
        assert!(in_e_a(&a, 0.0)); // compact support
        assert!(in_e_a(&a, 0.5)); // -2 not in {0, 1, 10}
        assert!(!in_e_a(&a, -0.1)); // -1/m = 10
        let sc = Measure::semicircle(1.0, 0.0).unwrap();
        assert!(!in_e_a(&sc, 2.0)); // -1/2 inside [-1, 1]
        assert!(in_e_a(&sc, 0.5)); // -2 outside [-1, 1]
    }

    #[test]
    fn h_domain_fig1_cut_locations() {
        let (a, b, _) = fig1();
        let domain = h_domain(&a, &b, (-20.0, 20.0)).unwrap();
        // Splits at the atoms of B and at the roots of m_B(h) = -1 and
        // m_B(h) = -1/10: h^2 - h - 9.6 = 0 and h^2 - 10 h - 15 = 0.
        let r1 = (1.0 + 39.4_f64.sqrt()) / 2.0;
        let r2 = (1.0 - 39.4_f64.sqrt()) / 2.0;
        let r3 = 5.0 + 40.0_f64.sqrt();
        let r4 = 5.0 - 40.0_f64.sqrt();
        let mut boundaries: Vec<f64> = domain.iter().flat_map(|&(l, h)| [l, h]).collect();
        boundaries.sort_by(f64::total_cmp);
        for expected in [r2, r4, r1, r3, -3.0, 3.0] {
            assert!(
                boundaries.iter().any(|&c| (c - expected).abs() < 1e-9),
                "missing boundary {expected}; got {boundaries:?}"
            );
        }
        // No domain mass was lost: total length equals window minus nothing.
        let total: f64 = domain.iter().map(|&(l, h)| h - l).sum();
        assert_relative_eq!(total, 40.0, epsilon = 1e-6);
    }

    #[test]
    fn h_domain_matches_pointwise_definition_fig2() {
        let (a, b, _) = fig2();
        let domain = h_domain(&a, &b, (-10.0, 10.0)).unwrap();
        let in_domain = |h: f64| domain.iter().any(|&(l, r)| l < h && h < r);
        for i in 0..1000 {
            let h = -10.0 + 20.0 * (i as f64 + 0.5) / 1000.0;
            let expected = match b.stieltjes_real(h) {
                Ok(m) => in_e_a(&a, m),
                Err(_) => false,
            };
            // Skip points within root tolerance of a located boundary.
            let near_boundary = domain
                .iter()
                .flat_map(|&(l, r)| [l, r])
                .any(|c| (c - h).abs() < 1e-6);
            if near_boundary {
                continue;
            }
            assert_eq!(in_domain(h), expected, "mismatch at h = {h}");
        }
    }

    #[test]
    fn h_domain_empty_when_b_covers_window() {
        let a = Measure::dirac(1.0);
        let b = Measure::new(vec![(
            1.0,
            crate::measures::MeasurePart::density(|_| 0.05, -10.0, 10.0),
        )])
        .unwrap();
        let domain = h_domain(&a, &b, (-9.0, 9.0)).unwrap();
        assert!(domain.is_empty());
    }

    #[test]
    fn h_curve_fig1_hand_value() {
        let (a, b, gamma) = fig1();
        let pt = h_curve(&a, &b, gamma, 0.0).unwrap();
        assert_relative_eq!(pt.m_b, 1.0 / 15.0, epsilon = 1e-14);
        assert_relative_eq!(pt.x, 1.3875, epsilon = 1e-12);
    }

    #[test]
    fn h_curve_mp_closed_form() {
        let (a, b, gamma) = mp_setting(0.25);
        for h in [-2.0, 0.5, 1.5, 3.0, 7.0] {
            let pt = h_curve(&a, &b, gamma, h).unwrap();
            let expected = h + gamma * h / (h - 1.0);
            assert_relative_eq!(pt.x, expected, epsilon = 1e-12);
            let expected_slope = 1.0 - gamma / ((h - 1.0) * (h - 1.0));
            assert_relative_eq!(pt.x1, expected_slope, epsilon = 1e-12);
        }
        let stat = h_curve(&a, &b, gamma, 1.5).unwrap();
        assert_abs_diff_eq!(stat.x1, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn h_curve_tail_limits() {
        let (a, b, gamma) = fig1();
        for h in [1e4, -1e4] {
            let pt = h_curve(&a, &b, gamma, h).unwrap();
            assert!((pt.x / h - 1.0).abs() < 1e-3, "x/h = {}", pt.x / h);
            assert!((pt.x1 - 1.0).abs() < 1e-3, "x' = {}", pt.x1);
        }
    }

    #[test]
    fn h_curve_rejects_outside_domain() {
        let (a, b, gamma) = fig1();
        // h = 3 is in supp(B).
        assert!(matches!(
            h_curve(&a, &b, gamma, 3.0),
            Err(SupportError::Measure(_))
        ));
        // With a continuous A the excluded set has positive length: just
        // above the semicircle edge of B, -1/m_B lands inside supp(A).
        let (a, b, gamma) = fig2();
        assert!(matches!(
            h_curve(&a, &b, gamma, 1.001),
            Err(SupportError::OutsideDomain { .. })
        ));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let (a, b, gamma) = fig1();
        for h in [-5.0, -1.0, 0.5, 4.2, 15.0] {
            let pt = h_curve(&a, &b, gamma, h).unwrap();
            let step = 1e-5 * (1.0 + h.abs());
            let xp = h_curve(&a, &b, gamma, h + step).unwrap();
            let xm = h_curve(&a, &b, gamma, h - step).unwrap();
            let fd_x1 = (xp.x - xm.x) / (2.0 * step);
            assert_relative_eq!(pt.x1, fd_x1, max_relative = 1e-6);
            let fd_x2 = (xp.x1 - xm.x1) / (2.0 * step);
            assert_relative_eq!(pt.x2, fd_x2, max_relative = 1e-6);
            let fd_x3 = (xp.x2 - xm.x2) / (2.0 * step);
            assert_relative_eq!(pt.x3, fd_x3, max_relative = 1e-5);
        }
    }

    #[test]
    fn mp_support_and_edges() {
        let (a, b, gamma) = mp_setting(0.25);
        let report = determine_support(&a, &b, gamma, &SupportOptions::default()).unwrap();
        // Support {0} union [0.25, 2.25] with the 0.75 atom at zero.
        assert_eq!(report.atoms, vec![(0.0, 0.75)]);
        assert!(report.support.contains(0.0));
        assert!(!report.support.contains_interior(0.1));
        assert!(!report.complement.contains_interior(0.0));
        let edges: Vec<(f64, f64)> = report.edges.iter().map(|e| (e.h0, e.x0)).collect();
        assert_eq!(edges.len(), 2);
        assert_abs_diff_eq!(edges[0].1, 0.25, epsilon = 1e-8);
        assert_abs_diff_eq!(edges[1].1, 2.25, epsilon = 1e-8);
        assert_eq!(report.edges[0].side, EdgeSide::LeftEndpoint);
        assert_eq!(report.edges[1].side, EdgeSide::RightEndpoint);
        // Degenerate-B pathway is flagged.
        assert!(report
            .degenerate_flags
            .iter()
            .any(|f| f.contains("degenerate-B")));
        // Support interval [0.25, 2.25] present.
        assert!(report.support.contains(1.0));
        assert!(report.support.contains(0.25) && report.support.contains(2.25));
        assert!(!report.support.contains(3.0));
    }

    #[test]
    fn mp_edge_behavior_closed_form() {
        let (a, b, gamma) = mp_setting(0.25);
        let right = edge_behavior(&a, &b, gamma, 1.5).unwrap();
        assert_eq!(right.side, EdgeSide::RightEndpoint);
        assert_relative_eq!(right.x2, 4.0, epsilon = 1e-9);
        assert_relative_eq!(right.x0, 2.25, epsilon = 1e-10);
        let left = edge_behavior(&a, &b, gamma, 0.5).unwrap();
        assert_eq!(left.side, EdgeSide::LeftEndpoint);
        assert_relative_eq!(left.x2, -4.0, epsilon = 1e-9);
        assert_relative_eq!(left.x0, 0.25, epsilon = 1e-10);
        // q' for the right edge: (1/pi) sqrt(2/x2) Q2 with Q2 = 1/h0^2.
        let expected = (2.0 / 4.0_f64).sqrt() / (1.5 * 1.5) / std::f64::consts::PI;
        assert_relative_eq!(right.q_prime, expected, epsilon = 1e-9);
    }

    #[test]
    fn edge_behavior_rejects_non_stationary_points() {
        let (a, b, gamma) = mp_setting(0.25);
        assert!(matches!(
            edge_behavior(&a, &b, gamma, 2.5),
            Err(SupportError::NotStationary { .. })
        ));
    }

    #[test]
    fn fig1_support_structure() {
        let (a, b, gamma) = fig1();
        let report = determine_support(&a, &b, gamma, &SupportOptions::default()).unwrap();
        // Atom (3, 0.2) as an isolated support point.
        assert_eq!(report.atoms.len(), 1);
        assert_eq!(report.atoms[0].0, 3.0);
        assert!(report.support.contains(3.0));
        assert!(report.complement.contains_interior(3.0 - 1e-4));
        assert!(report.complement.contains_interior(3.0 + 1e-4));
        // -3 is a support boundary without mass.
        assert!(report.support.contains(-3.0));
        assert!(report.complement.contains_interior(-3.0 - 1e-6));
        assert!(!report.complement.contains_interior(-3.0 + 1e-6));
        assert_eq!(report.atoms.iter().filter(|a| a.0 == -3.0).count(), 0);
        // Hollow-endpoint flags for both atoms of B.
        assert!(report
            .degenerate_flags
            .iter()
            .any(|f| f.contains("h0 = 3") && f.contains("hollow")));
        assert!(report
            .degenerate_flags
            .iter()
            .any(|f| f.contains("h0 = -3") && f.contains("hollow")));
        // Increasing images are sorted and pairwise disjoint.
        for w in report.h_intervals_increasing.windows(2) {
            assert!((w[0].1).1 <= (w[1].1).0 + 1e-9);
        }
    }

    #[test]
    fn dirac_a_at_zero_makes_support_equal_b_support() {
        // A = delta_0 wipes out the perturbation; the limit law is B itself.
        let a = Measure::dirac(0.0);
        let b = Measure::point_masses(&[(0.5, -1.0), (0.5, 2.0)]).unwrap();
        let report = determine_support(&a, &b, 0.7, &SupportOptions::default()).unwrap();
        assert!(report.support.contains(-1.0) && report.support.contains(2.0));
        assert!(!report.support.contains(0.5));
        assert_eq!(report.edges.len(), 0);
        // All B atoms keep their mass.
        assert_eq!(report.atoms, vec![(-1.0, 0.5), (2.0, 0.5)]);
    }

    #[test]
    fn support_report_json_schema() {
        let (a, b, gamma) = mp_setting(0.25);
        let report = determine_support(&a, &b, gamma, &SupportOptions::default()).unwrap();
        let value = report.to_json();
        assert!(value["support"].is_array());
        assert!(value["atoms"][0]["x"].is_number());
        assert!(value["edges"][0]["side"].is_string());
        assert!(value["flags"].is_array());
    }
}
