//! Probability measures on the real line with exact atom bookkeeping.
//!
//! A [`Measure`] is a finite mixture of atoms, semicircle laws,
//! Marchenko-Pastur laws and tabulated densities. It exposes the handful of
//! integral transforms the rest of the crate is built on: the Stieltjes
//! transform on the upper half-plane, its real restriction outside the
//! support, inverse moments, quantiles and the CDF.
//!
//! Measures are immutable after construction; all operations are pure.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{self, IntegrandValue, NumericsError};

/// Default absolute tolerance for measure quadratures.
pub const DEFAULT_QUAD_TOL: f64 = 1e-10;

/// Weights must sum to one within this tolerance.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Tabulated densities are renormalized when their trapezoid integral is
/// within this distance of one, and rejected beyond it.
pub const TABLE_NORMALIZATION_TOL: f64 = 1e-4;

/// Callback densities must integrate to one within this tolerance.
pub const DENSITY_NORMALIZATION_TOL: f64 = 1e-8;

const CUMULATIVE_CELLS: usize = 2048;
const TABLE_SAMPLES: usize = 513;

#[derive(Debug, Clone, Error)]
pub enum MeasureError {
    #[error("component weight {0} is outside (0, 1]")]
    BadWeight(f64),
    #[error("component weights sum to {0}, expected 1 within {WEIGHT_SUM_TOL:e}")]
    WeightSum(f64),
    #[error("measure needs at least one component")]
    Empty,
    #[error("semicircle radius must be positive and finite, got {0}")]
    BadRadius(f64),
    #[error("marchenko-pastur parameters must be positive and finite: ratio {ratio}, scale {scale}")]
    BadMpParams { ratio: f64, scale: f64 },
    #[error("density support [{a}, {b}] is invalid")]
    BadSupport { a: f64, b: f64 },
    #[error("density integrates to {integral}, expected 1 within {tol:e}")]
    BadNormalization { integral: f64, tol: f64 },
    #[error("density table needs >= 2 strictly increasing points with finite nonnegative pdf")]
    BadTable,
    #[error("argument {0} is not finite or lies outside the open upper half-plane")]
    InvalidArgument(Complex64),
    #[error("{x} lies in the support of component `{component}`")]
    InSupport { x: f64, component: String },
    #[error("inverse moment order must be >= 1")]
    BadMomentOrder,
    #[error("quantile count must be >= 1")]
    BadQuantileCount,
    #[error("interval union entries must be ordered pairs")]
    BadIntervals,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Ordered union of disjoint closed intervals; endpoints may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalUnion {
    intervals: Vec<(f64, f64)>,
}

impl IntervalUnion {
    /// Sorts the intervals and merges overlapping or touching ones.
    pub fn new(mut intervals: Vec<(f64, f64)>) -> Result<Self, MeasureError> {
        for &(lo, hi) in &intervals {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(MeasureError::BadIntervals);
            }
        }
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
        for (lo, hi) in intervals {
            match merged.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        Ok(Self { intervals: merged })
    }

    /// Builds a union from already-sorted intervals with pairwise-disjoint
    /// interiors, without merging shared endpoints. This is the storage form
    /// for open-interval unions, where touching intervals stay distinct.
    pub fn from_disjoint(intervals: Vec<(f64, f64)>) -> Result<Self, MeasureError> {
        for w in intervals.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(MeasureError::BadIntervals);
            }
        }
        for &(lo, hi) in &intervals {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(MeasureError::BadIntervals);
            }
        }
        Ok(Self { intervals })
    }

    pub fn empty() -> Self {
        Self { intervals: Vec::new() }
    }

    pub fn whole_line() -> Self {
        Self {
            intervals: vec![(f64::NEG_INFINITY, f64::INFINITY)],
        }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Closed-set membership.
    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| lo <= x && x <= hi)
    }

    /// Open-set membership: `x` strictly inside some interval.
    pub fn contains_interior(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| lo < x && x < hi)
    }

    pub fn is_bounded(&self) -> bool {
        self.intervals
            .iter()
            .all(|&(lo, hi)| lo.is_finite() && hi.is_finite())
    }

    pub fn min(&self) -> Option<f64> {
        self.intervals.first().map(|&(lo, _)| lo)
    }

    pub fn max(&self) -> Option<f64> {
        self.intervals.last().map(|&(_, hi)| hi)
    }

    /// Open gaps of the union intersected with the open window `(lo, hi)`.
    ///
    /// Degenerate intervals (isolated points) split gaps in two.
    pub fn complement_within(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let mut gaps = Vec::new();
        let mut cursor = lo;
        for &(a, b) in &self.intervals {
            if b < lo {
                continue;
            }
            if a > hi {
                break;
            }
            if a > cursor {
                gaps.push((cursor, a.min(hi)));
            }
            cursor = cursor.max(b);
            if cursor >= hi {
                break;
            }
        }
        if cursor < hi {
            gaps.push((cursor, hi));
        }
        gaps.retain(|&(a, b)| b > a);
        gaps
    }
}

/// One building block of a [`Measure`].
#[derive(Clone)]
pub enum MeasurePart {
    Atom { location: f64 },
    Semicircle { radius: f64, center: f64 },
    MarchenkoPastur { ratio: f64, scale: f64 },
    GeneralDensity(GeneralDensity),
}

impl MeasurePart {
    pub fn atom(location: f64) -> Self {
        Self::Atom { location }
    }

    pub fn semicircle(radius: f64, center: f64) -> Self {
        Self::Semicircle { radius, center }
    }

    pub fn marchenko_pastur(ratio: f64, scale: f64) -> Self {
        Self::MarchenkoPastur { ratio, scale }
    }

    pub fn density<F>(pdf: F, a: f64, b: f64) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::GeneralDensity(GeneralDensity {
            pdf: Arc::new(pdf),
            a,
            b,
            table: None,
        })
    }

    pub fn density_table(points: Vec<(f64, f64)>) -> Self {
        let (a, b) = match (points.first(), points.last()) {
            (Some(&(a, _)), Some(&(b, _))) => (a, b),
            _ => (f64::NAN, f64::NAN),
        };
        let table = Arc::new(points);
        let lookup = Arc::clone(&table);
        Self::GeneralDensity(GeneralDensity {
            pdf: Arc::new(move |x| interp_table(&lookup, x)),
            a,
            b,
            table: Some(table),
        })
    }
}

impl fmt::Debug for MeasurePart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Atom { location } => write!(f, "atom at {location}"),
            Self::Semicircle { radius, center } => {
                write!(f, "semicircle(radius={radius}, center={center})")
            }
            Self::MarchenkoPastur { ratio, scale } => {
                write!(f, "marchenko-pastur(ratio={ratio}, scale={scale})")
            }
            Self::GeneralDensity(g) => write!(f, "density on [{}, {}]", g.a, g.b),
        }
    }
}

impl PartialEq for MeasurePart {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Self::Atom { location: a }, Self::Atom { location: b }) => a == b,
            (
                Self::Semicircle { radius: r1, center: c1 },
                Self::Semicircle { radius: r2, center: c2 },
            ) => r1 == r2 && c1 == c2,
            (
                Self::MarchenkoPastur { ratio: l1, scale: s1 },
                Self::MarchenkoPastur { ratio: l2, scale: s2 },
            ) => l1 == l2 && s1 == s2,
            (Self::GeneralDensity(g1), Self::GeneralDensity(g2)) => {
                if g1.a != g2.a || g1.b != g2.b {
                    return false;
                }
                match (&g1.table, &g2.table) {
                    (Some(t1), Some(t2)) => t1 == t2,
                    _ => (0..33).all(|i| {
                        let x = g1.a + (g1.b - g1.a) * i as f64 / 32.0;
                        (g1.pdf)(x) == (g2.pdf)(x)
                    }),
                }
            }
            _ => false,
        }
    }
}

/// Callback density on a compact interval, optionally backed by a
/// piecewise-linear table (the serialized form).
#[derive(Clone)]
pub struct GeneralDensity {
    pdf: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    a: f64,
    b: f64,
    table: Option<Arc<Vec<(f64, f64)>>>,
}

fn interp_table(points: &[(f64, f64)], x: f64) -> f64 {
    let n = points.len();
    if n == 0 || x < points[0].0 || x > points[n - 1].0 {
        return 0.0;
    }
    let idx = points.partition_point(|&(xi, _)| xi <= x);
    if idx == 0 {
        return points[0].1;
    }
    if idx >= n {
        return points[n - 1].1;
    }
    let (x0, p0) = points[idx - 1];
    let (x1, p1) = points[idx];
    if x1 == x0 {
        return p0;
    }
    p0 + (p1 - p0) * (x - x0) / (x1 - x0)
}

/// Flattened continuous component with a precomputed cumulative table.
#[derive(Clone)]
pub(crate) struct ContComponent {
    pub weight: f64,
    pub lo: f64,
    pub hi: f64,
    kind: ContKind,
    /// Integral of the natural density over `[lo, hi]` (1 except for the
    /// Marchenko-Pastur continuous piece when ratio > 1).
    pub mass: f64,
    cumulative: Vec<f64>,
}

#[derive(Clone)]
enum ContKind {
    Semicircle { radius: f64, center: f64 },
    MarchenkoPastur { ratio: f64, scale: f64 },
    General { pdf: Arc<dyn Fn(f64) -> f64 + Send + Sync> },
}

impl ContComponent {
    pub fn density(&self, x: f64) -> f64 {
        if x <= self.lo || x >= self.hi {
            return 0.0;
        }
        match &self.kind {
            ContKind::Semicircle { radius, center } => {
                let u = x - center;
                2.0 / (std::f64::consts::PI * radius * radius)
                    * (radius * radius - u * u).max(0.0).sqrt()
            }
            ContKind::MarchenkoPastur { ratio, scale } => {
                let (lo, hi) = (self.lo, self.hi);
                ((hi - x) * (x - lo)).max(0.0).sqrt()
                    / (2.0 * std::f64::consts::PI * scale * ratio * x)
            }
            ContKind::General { pdf } => pdf(x).max(0.0),
        }
    }

    fn theta_to_x(&self, theta: f64) -> f64 {
        let c = 0.5 * (self.lo + self.hi);
        let r = 0.5 * (self.hi - self.lo);
        c + r * theta.sin()
    }

    fn transformed(&self, theta: f64) -> f64 {
        let r = 0.5 * (self.hi - self.lo);
        self.density(self.theta_to_x(theta)) * r * theta.cos()
    }

    fn build_cumulative(&mut self) {
        let cells = CUMULATIVE_CELLS;
        let mut cum = Vec::with_capacity(cells + 1);
        cum.push(0.0);
        let step = std::f64::consts::PI / cells as f64;
        let mut acc = 0.0;
        for j in 0..cells {
            let t0 = -std::f64::consts::FRAC_PI_2 + j as f64 * step;
            acc += gk15_fixed(|t| self.transformed(t), t0, t0 + step);
            cum.push(acc);
        }
        self.mass = acc;
        self.cumulative = cum;
    }

    /// Integral of the natural density over `(-inf, x]`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return self.mass;
        }
        let c = 0.5 * (self.lo + self.hi);
        let r = 0.5 * (self.hi - self.lo);
        let theta = ((x - c) / r).clamp(-1.0, 1.0).asin();
        let step = std::f64::consts::PI / CUMULATIVE_CELLS as f64;
        let pos = (theta + std::f64::consts::FRAC_PI_2) / step;
        let j = (pos.floor() as usize).min(CUMULATIVE_CELLS - 1);
        let t0 = -std::f64::consts::FRAC_PI_2 + j as f64 * step;
        self.cumulative[j] + gk15_fixed(|t| self.transformed(t), t0, theta)
    }

    fn describe(&self) -> String {
        match &self.kind {
            ContKind::Semicircle { radius, center } => {
                format!("semicircle(radius={radius}, center={center})")
            }
            ContKind::MarchenkoPastur { ratio, scale } => {
                format!("marchenko-pastur(ratio={ratio}, scale={scale})")
            }
            ContKind::General { .. } => format!("density on [{}, {}]", self.lo, self.hi),
        }
    }

    fn closed_form_stieltjes(&self, z: Complex64) -> Option<Complex64> {
        match self.kind {
            ContKind::Semicircle { radius, center } => {
                let zeta = z - center;
                let s = numerics::uhp_sqrt(zeta * zeta - radius * radius);
                Some((zeta - s) * (-2.0 / (radius * radius)))
            }
            _ => None,
        }
    }

    /// Closed-form inverse moments for the semicircle, orders 1-4.
    fn closed_form_inverse_moment(&self, h: f64, k: u32) -> Option<f64> {
        match self.kind {
            ContKind::Semicircle { radius, center } => {
                let zeta = h - center;
                let s2 = zeta * zeta - radius * radius;
                if s2 <= 0.0 {
                    return None;
                }
                let s = s2.sqrt().copysign(zeta);
                match k {
                    1 => Some(-2.0 / (radius * radius) * (zeta - s)),
                    2 => Some(-2.0 / (radius * radius) * (1.0 - zeta / s)),
                    3 => Some(-1.0 / (s * s * s)),
                    4 => Some(zeta / (s * s * s * s * s)),
                    _ => None,
                }
            }
            _ => None,
        }
    }
}

/// Non-adaptive 15-point Gauss-Kronrod value on `[a, b]`.
fn gk15_fixed<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    const XGK: [f64; 8] = [
        0.991455371120813,
        0.949107912342759,
        0.864864423359769,
        0.741531185599394,
        0.586087235467691,
        0.405845151377397,
        0.207784955007898,
        0.0,
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
    if a == b {
        return 0.0;
    }
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = f(center) * WGK[7];
    for j in 0..7 {
        let dx = half * XGK[j];
        acc += (f(center - dx) + f(center + dx)) * WGK[j];
    }
    acc * half
}

/// A probability measure on the real line: a weighted mixture of parts.
///
/// Duplicate atom locations are merged at construction so atom bookkeeping
/// stays canonical.
#[derive(Clone)]
pub struct Measure {
    components: Vec<(f64, MeasurePart)>,
    atoms: Vec<(f64, f64)>,
    continuous: Vec<ContComponent>,
    support: IntervalUnion,
    /// Real points excluded from the density-domain set, per part class.
    exclusions: Vec<f64>,
}

impl fmt::Debug for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.components.iter().map(|(w, p)| format!("{w} * {p:?}")))
            .finish()
    }
}

impl PartialEq for Measure {
    fn eq(&self, other: &Self) -> bool {
        self.components.len() == other.components.len()
            && self
                .components
                .iter()
                .zip(&other.components)
                .all(|((w1, p1), (w2, p2))| w1 == w2 && p1 == p2)
    }
}

impl Measure {
    pub fn new(components: Vec<(f64, MeasurePart)>) -> Result<Self, MeasureError> {
        if components.is_empty() {
            return Err(MeasureError::Empty);
        }
        let mut sum = 0.0;
        for &(w, _) in &components {
            if !(w.is_finite() && w > 0.0 && w <= 1.0) {
                return Err(MeasureError::BadWeight(w));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(MeasureError::WeightSum(sum));
        }

        let mut atoms: Vec<(f64, f64)> = Vec::new();
        let mut continuous: Vec<ContComponent> = Vec::new();
        let mut support_intervals: Vec<(f64, f64)> = Vec::new();
        let mut exclusions: Vec<f64> = Vec::new();

        for (w, part) in &components {
            let w = *w;
            match part {
                MeasurePart::Atom { location } => {
                    if !location.is_finite() {
                        return Err(MeasureError::BadSupport { a: *location, b: *location });
                    }
                    atoms.push((*location, w));
                    support_intervals.push((*location, *location));
                    exclusions.push(*location);
                }
                MeasurePart::Semicircle { radius, center } => {
                    if !(radius.is_finite() && *radius > 0.0 && center.is_finite()) {
                        return Err(MeasureError::BadRadius(*radius));
                    }
                    let mut comp = ContComponent {
                        weight: w,
                        lo: center - radius,
                        hi: center + radius,
                        kind: ContKind::Semicircle { radius: *radius, center: *center },
                        mass: 1.0,
                        cumulative: Vec::new(),
                    };
                    comp.build_cumulative();
                    support_intervals.push((comp.lo, comp.hi));
                    continuous.push(comp);
                    // The semicircle transform stays bounded everywhere, so
                    // it contributes no exclusions.
                }
                MeasurePart::MarchenkoPastur { ratio, scale } => {
                    if !(ratio.is_finite() && *ratio > 0.0 && scale.is_finite() && *scale > 0.0) {
                        return Err(MeasureError::BadMpParams { ratio: *ratio, scale: *scale });
                    }
                    let sq = ratio.sqrt();
                    let lo = scale * (1.0 - sq) * (1.0 - sq);
                    let hi = scale * (1.0 + sq) * (1.0 + sq);
                    let zero_mass = if *ratio > 1.0 { 1.0 - 1.0 / ratio } else { 0.0 };
                    if zero_mass > 0.0 {
                        atoms.push((0.0, w * zero_mass));
                        support_intervals.push((0.0, 0.0));
                    }
                    let mut comp = ContComponent {
                        weight: w,
                        lo,
                        hi,
                        kind: ContKind::MarchenkoPastur { ratio: *ratio, scale: *scale },
                        mass: 1.0 - zero_mass,
                        cumulative: Vec::new(),
                    };
                    comp.build_cumulative();
                    support_intervals.push((comp.lo, comp.hi));
                    continuous.push(comp);
                    exclusions.push(0.0);
                }
                MeasurePart::GeneralDensity(g) => {
                    if !(g.a.is_finite() && g.b.is_finite() && g.a < g.b) {
                        return Err(MeasureError::BadSupport { a: g.a, b: g.b });
                    }
                    let (pdf, table) = match &g.table {
                        Some(table) => {
                            let normalized = normalize_table(table)?;
                            let lookup = Arc::clone(&normalized);
                            let pdf: Arc<dyn Fn(f64) -> f64 + Send + Sync> =
                                Arc::new(move |x| interp_table(&lookup, x));
                            (pdf, Some(normalized))
                        }
                        None => {
                            let integral = numerics::integrate(
                                |x| (g.pdf)(x).max(0.0),
                                g.a,
                                g.b,
                                DEFAULT_QUAD_TOL,
                            )?;
                            if (integral - 1.0).abs() > DENSITY_NORMALIZATION_TOL {
                                return Err(MeasureError::BadNormalization {
                                    integral,
                                    tol: DENSITY_NORMALIZATION_TOL,
                                });
                            }
                            (Arc::clone(&g.pdf), None)
                        }
                    };
                    let mut comp = ContComponent {
                        weight: w,
                        lo: g.a,
                        hi: g.b,
                        kind: ContKind::General { pdf: Arc::clone(&pdf) },
                        mass: 1.0,
                        cumulative: Vec::new(),
                    };
                    comp.build_cumulative();
                    support_intervals.push((comp.lo, comp.hi));
                    continuous.push(comp);
                    // Bounded interpolated densities keep the transform
                    // bounded; no exclusions. Poles are out of scope for
                    // table-backed parts.
                    let _ = table;
                }
            }
        }

        // Merge duplicate atom locations.
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (loc, w) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == loc => last.1 += w,
                _ => merged.push((loc, w)),
            }
        }

        exclusions.sort_by(f64::total_cmp);
        exclusions.dedup();

        Ok(Self {
            components,
            atoms: merged,
            continuous,
            support: IntervalUnion::new(support_intervals)?,
            exclusions,
        })
    }

    /// Dirac measure at `location`.
    pub fn dirac(location: f64) -> Self {
        Self::new(vec![(1.0, MeasurePart::atom(location))]).expect("dirac is always valid")
    }

    /// Purely atomic measure from `(weight, location)` pairs.
    pub fn point_masses(pairs: &[(f64, f64)]) -> Result<Self, MeasureError> {
        Self::new(
            pairs
                .iter()
                .map(|&(w, loc)| (w, MeasurePart::atom(loc)))
                .collect(),
        )
    }

    pub fn semicircle(radius: f64, center: f64) -> Result<Self, MeasureError> {
        Self::new(vec![(1.0, MeasurePart::semicircle(radius, center))])
    }

    pub fn marchenko_pastur(ratio: f64, scale: f64) -> Result<Self, MeasureError> {
        Self::new(vec![(1.0, MeasurePart::marchenko_pastur(ratio, scale))])
    }

    pub fn components(&self) -> &[(f64, MeasurePart)] {
        &self.components
    }

    /// Flattened atoms as sorted `(location, weight)` pairs.
    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn has_continuous_part(&self) -> bool {
        !self.continuous.is_empty()
    }

    /// `Some(location)` when the measure is a single unit atom.
    pub fn as_dirac(&self) -> Option<f64> {
        match (self.atoms.len(), self.continuous.is_empty()) {
            (1, true) => Some(self.atoms[0].0),
            _ => None,
        }
    }

    pub(crate) fn continuous_components(&self) -> &[ContComponent] {
        &self.continuous
    }

    /// Total density of all continuous parts at `x` (weights applied).
    pub fn density(&self, x: f64) -> f64 {
        self.continuous
            .iter()
            .map(|c| c.weight * c.density(x))
            .sum()
    }

    /// Weighted sum of `f` over the flattened atoms.
    pub fn sum_atoms<V: IntegrandValue, F: Fn(f64) -> V>(&self, f: F) -> V {
        let mut acc = V::zero();
        for &(loc, w) in &self.atoms {
            acc = acc.add(f(loc).scale(w));
        }
        acc
    }

    /// Weighted integral of `f` against the continuous parts.
    pub fn integrate_density<V: IntegrandValue, F: Fn(f64) -> V>(
        &self,
        f: F,
        tol: f64,
    ) -> Result<V, MeasureError> {
        let mut acc = V::zero();
        for comp in &self.continuous {
            let part = numerics::integrate_value(
                |x| f(x).scale(comp.density(x)),
                comp.lo,
                comp.hi,
                tol,
            )?;
            acc = acc.add(part.scale(comp.weight));
        }
        Ok(acc)
    }

    /// Full integral of `f` against the measure: atoms plus densities.
    pub fn integrate_against<V: IntegrandValue, F: Fn(f64) -> V>(
        &self,
        f: F,
        tol: f64,
    ) -> Result<V, MeasureError> {
        Ok(self.sum_atoms(&f).add(self.integrate_density(&f, tol)?))
    }

    /// Stieltjes transform at `z` in the open upper half-plane.
    pub fn stieltjes(&self, z: Complex64) -> Result<Complex64, MeasureError> {
        self.stieltjes_with_tol(z, DEFAULT_QUAD_TOL)
    }

    pub fn stieltjes_with_tol(&self, z: Complex64, tol: f64) -> Result<Complex64, MeasureError> {
        if !(z.re.is_finite() && z.im.is_finite()) || z.im <= 0.0 {
            return Err(MeasureError::InvalidArgument(z));
        }
        let mut acc = self.sum_atoms(|loc| (Complex64::new(loc, 0.0) - z).inv());
        for comp in &self.continuous {
            let part = match comp.closed_form_stieltjes(z) {
                Some(v) => v,
                None => numerics::integrate_complex(
                    |x| Complex64::new(comp.density(x), 0.0) / (Complex64::new(x, 0.0) - z),
                    comp.lo,
                    comp.hi,
                    tol,
                )?,
            };
            acc += part * comp.weight;
        }
        Ok(acc)
    }

    /// Derivative of the Stieltjes transform, the integral of
    /// `(tau - z)^{-2}`, at `z` in the open upper half-plane.
    pub fn stieltjes_derivative_with_tol(
        &self,
        z: Complex64,
        tol: f64,
    ) -> Result<Complex64, MeasureError> {
        if !(z.re.is_finite() && z.im.is_finite()) || z.im <= 0.0 {
            return Err(MeasureError::InvalidArgument(z));
        }
        let mut acc = self.sum_atoms(|loc| {
            let d = Complex64::new(loc, 0.0) - z;
            (d * d).inv()
        });
        for comp in &self.continuous {
            let part = match comp.kind {
                ContKind::Semicircle { radius, center } => {
                    let zeta = z - center;
                    let s = numerics::uhp_sqrt(zeta * zeta - radius * radius);
                    (1.0 - zeta / s) * (-2.0 / (radius * radius))
                }
                _ => numerics::integrate_complex(
                    |x| {
                        let d = Complex64::new(x, 0.0) - z;
                        comp.density(x) / (d * d)
                    },
                    comp.lo,
                    comp.hi,
                    tol,
                )?,
            };
            acc += part * comp.weight;
        }
        Ok(acc)
    }

    /// Real Stieltjes transform at `h` strictly outside the support.
    pub fn stieltjes_real(&self, h: f64) -> Result<f64, MeasureError> {
        self.inverse_moment_with_tol(h, 1, DEFAULT_QUAD_TOL)
    }

    pub fn stieltjes_real_with_tol(&self, h: f64, tol: f64) -> Result<f64, MeasureError> {
        self.inverse_moment_with_tol(h, 1, tol)
    }

    /// Inverse moment of order `k`: the integral of `(tau - h)^{-k}`.
    pub fn inverse_moment(&self, h: f64, k: u32) -> Result<f64, MeasureError> {
        self.inverse_moment_with_tol(h, k, DEFAULT_QUAD_TOL)
    }

    pub fn inverse_moment_with_tol(&self, h: f64, k: u32, tol: f64) -> Result<f64, MeasureError> {
        if k == 0 {
            return Err(MeasureError::BadMomentOrder);
        }
        if !h.is_finite() {
            return Err(MeasureError::InvalidArgument(Complex64::new(h, 0.0)));
        }
        self.check_outside_support(h)?;
        let mut acc = self.sum_atoms(|loc| (loc - h).powi(-(k as i32)));
        for comp in &self.continuous {
            let part = match comp.closed_form_inverse_moment(h, k) {
                Some(v) => v,
                None => numerics::integrate(
                    |x| comp.density(x) * (x - h).powi(-(k as i32)),
                    comp.lo,
                    comp.hi,
                    tol,
                )?,
            };
            acc += comp.weight * part;
        }
        Ok(acc)
    }

    fn check_outside_support(&self, h: f64) -> Result<(), MeasureError> {
        for &(loc, _) in &self.atoms {
            if loc == h {
                return Err(MeasureError::InSupport {
                    x: h,
                    component: format!("atom at {loc}"),
                });
            }
        }
        for comp in &self.continuous {
            if h >= comp.lo && h <= comp.hi {
                return Err(MeasureError::InSupport {
                    x: h,
                    component: comp.describe(),
                });
            }
        }
        Ok(())
    }

    /// Mass of the atom at exactly `x`, zero otherwise.
    pub fn atom_mass(&self, x: f64) -> f64 {
        self.atoms
            .iter()
            .find(|&&(loc, _)| loc == x)
            .map_or(0.0, |&(_, w)| w)
    }

    pub fn support(&self) -> &IntervalUnion {
        &self.support
    }

    /// Distribution function: measure of `(-inf, x]`.
    pub fn cdf(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for &(loc, w) in &self.atoms {
            if loc <= x {
                acc += w;
            }
        }
        for comp in &self.continuous {
            acc += comp.weight * comp.cdf(x);
        }
        acc
    }

    /// Midpoint-rule quantiles: `q_i = inf { x : F(x) >= (i - 1/2)/n }`.
    pub fn quantiles(&self, n: usize) -> Result<Vec<f64>, MeasureError> {
        if n == 0 {
            return Err(MeasureError::BadQuantileCount);
        }
        let mut out = Vec::with_capacity(n);
        if self.continuous.is_empty() {
            let mut cum = Vec::with_capacity(self.atoms.len());
            let mut acc = 0.0;
            for &(loc, w) in &self.atoms {
                acc += w;
                cum.push((loc, acc));
            }
            for i in 1..=n {
                let q = (i as f64 - 0.5) / n as f64;
                let loc = cum
                    .iter()
                    .find(|&&(_, c)| c >= q - 1e-12)
                    .map(|&(loc, _)| loc)
                    .unwrap_or(self.atoms.last().expect("nonempty").0);
                out.push(loc);
            }
            return Ok(out);
        }

        let lo0 = self.support.min().expect("nonempty support") - 1.0;
        let hi0 = self.support.max().expect("nonempty support") + 1.0;
        for i in 1..=n {
            let q = (i as f64 - 0.5) / n as f64;
            let (mut lo, mut hi) = (lo0, hi0);
            for _ in 0..200 {
                if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if self.cdf(mid) >= q {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            // Snap to an atom when the crossing is a jump.
            let snapped = self.atoms.iter().find_map(|&(loc, w)| {
                let near = loc >= lo - 1e-9 && loc <= hi + 1e-9;
                let f_at = self.cdf(loc);
                (near && f_at >= q - 1e-12 && f_at - w < q + 1e-12).then_some(loc)
            });
            out.push(snapped.unwrap_or(hi));
        }
        Ok(out)
    }

    /// Second moment; finite by construction for every supported part.
    pub fn second_moment(&self) -> Result<f64, MeasureError> {
        let mut acc = self.sum_atoms(|loc| loc * loc);
        for comp in &self.continuous {
            let part = match comp.kind {
                ContKind::Semicircle { radius, center } => {
                    center * center + radius * radius / 4.0
                }
                _ => numerics::integrate(
                    |x| x * x * comp.density(x),
                    comp.lo,
                    comp.hi,
                    DEFAULT_QUAD_TOL,
                )?,
            };
            acc += comp.weight * part;
        }
        Ok(acc)
    }

    /// Membership in the set where the transform stays bounded near the real
    /// axis, decided per part class: atoms and the Marchenko-Pastur origin
    /// are excluded, semicircle and bounded tabulated densities exclude
    /// nothing. Exact membership is not characterized in general, so this is
    /// deliberately per-class.
    pub fn in_density_domain(&self, x: f64) -> bool {
        !self.exclusions.iter().any(|&e| e == x)
    }

    /// Points excluded from the density domain.
    pub fn density_domain_exclusions(&self) -> &[f64] {
        &self.exclusions
    }
}

fn normalize_table(points: &Arc<Vec<(f64, f64)>>) -> Result<Arc<Vec<(f64, f64)>>, MeasureError> {
    if points.len() < 2 {
        return Err(MeasureError::BadTable);
    }
    for w in points.windows(2) {
        if !(w[0].0 < w[1].0) {
            return Err(MeasureError::BadTable);
        }
    }
    if points
        .iter()
        .any(|&(x, p)| !x.is_finite() || !p.is_finite() || p < 0.0)
    {
        return Err(MeasureError::BadTable);
    }
    let mut integral = 0.0;
    for w in points.windows(2) {
        integral += (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1);
    }
    if (integral - 1.0).abs() > TABLE_NORMALIZATION_TOL {
        return Err(MeasureError::BadNormalization {
            integral,
            tol: TABLE_NORMALIZATION_TOL,
        });
    }
    if (integral - 1.0).abs() <= 1e-12 {
        return Ok(Arc::clone(points));
    }
    Ok(Arc::new(
        points.iter().map(|&(x, p)| (x, p / integral)).collect(),
    ))
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct MeasureRepr {
    components: Vec<ComponentRepr>,
}

#[derive(Serialize, Deserialize)]
struct ComponentRepr {
    weight: f64,
    part: PartRepr,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum PartRepr {
    Atom { location: f64 },
    Semicircle { radius: f64, center: f64 },
    Mp { ratio: f64, scale: f64 },
    DensityTable { points: Vec<(f64, f64)> },
}

impl Serialize for Measure {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let components = self
            .components
            .iter()
            .map(|(w, part)| ComponentRepr {
                weight: *w,
                part: match part {
                    MeasurePart::Atom { location } => PartRepr::Atom { location: *location },
                    MeasurePart::Semicircle { radius, center } => PartRepr::Semicircle {
                        radius: *radius,
                        center: *center,
                    },
                    MeasurePart::MarchenkoPastur { ratio, scale } => PartRepr::Mp {
                        ratio: *ratio,
                        scale: *scale,
                    },
                    MeasurePart::GeneralDensity(g) => PartRepr::DensityTable {
                        points: sampled_table(g),
                    },
                },
            })
            .collect();
        MeasureRepr { components }.serialize(serializer)
    }
}

/// Serialized form of a callback density: a sampled table already normalized
/// the same way the parser would normalize it, so emit/parse round-trips are
/// exact.
fn sampled_table(g: &GeneralDensity) -> Vec<(f64, f64)> {
    if let Some(table) = &g.table {
        if let Ok(normalized) = normalize_table(table) {
            return normalized.as_ref().clone();
        }
        return table.as_ref().clone();
    }
    let n = TABLE_SAMPLES;
    let mut points: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let x = g.a + (g.b - g.a) * i as f64 / (n - 1) as f64;
            (x, (g.pdf)(x).max(0.0))
        })
        .collect();
    let mut integral = 0.0;
    for w in points.windows(2) {
        integral += (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1);
    }
    if integral > 0.0 && (integral - 1.0).abs() > 1e-12 {
        for p in &mut points {
            p.1 /= integral;
        }
    }
    points
}

impl<'de> Deserialize<'de> for Measure {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = MeasureRepr::deserialize(deserializer)?;
        let components = repr
            .components
            .into_iter()
            .map(|c| {
                let part = match c.part {
                    PartRepr::Atom { location } => MeasurePart::atom(location),
                    PartRepr::Semicircle { radius, center } => {
                        MeasurePart::semicircle(radius, center)
                    }
                    PartRepr::Mp { ratio, scale } => MeasurePart::marchenko_pastur(ratio, scale),
                    PartRepr::DensityTable { points } => MeasurePart::density_table(points),
                };
                (c.weight, part)
            })
            .collect();
        Measure::new(components).map_err(serde::de::Error::custom)
    }
}
