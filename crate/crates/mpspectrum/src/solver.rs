//! Fixed-point solver for the master equation of the limiting spectral
//! distribution.
//!
//! For measures `A`, `B` and ratio `gamma > 0`, the Stieltjes transform
//! `m(z)` of the limit law solves
//!
//! ```text
//! m(z) = m_B( z - gamma * int u / (1 + u m(z)) dA(u) ),     Im z > 0,
//! ```
//!
//! with the unique solution in the upper half-plane. This module solves the
//! equation pointwise (damped Picard iteration with a Newton tail), recovers
//! the density by Richardson extrapolation of `Im m(x + iy) / pi` toward the
//! real axis, computes the point masses of the limit law, and assembles a
//! model CDF for comparisons against empirical spectra.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::measures::{IntervalUnion, Measure, MeasureError};
use crate::numerics::{self, NumericsError};

/// Picard/Newton switch point on the fixed-point residual.
const NEWTON_THRESHOLD: f64 = 1e-3;

/// Point masses smaller than this are treated as exact-cancellation float
/// dust and omitted.
pub const ATOM_MASS_EPS: f64 = 1e-12;

/// Distance to the nearest support boundary below which density evaluation
/// switches to boundary-scaled extrapolation heights.
const EDGE_NEAR: f64 = 0.05;

#[derive(Debug, Clone, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    BadConfig(String),
    #[error("gamma must be positive and finite, got {0}")]
    BadGamma(f64),
    #[error("solve target {0} must lie in the open upper half-plane")]
    BadTarget(Complex64),
    #[error(
        "iteration did not converge at z = {z}: residual {residual:e} after {iterations} iterations (best m = {best})"
    )]
    Convergence {
        z: Complex64,
        best: Complex64,
        residual: f64,
        iterations: usize,
    },
    #[error(
        "converged to an inconsistent branch at z = {z}: 1 - alpha*beta = {one_minus_ab:e} <= 0"
    )]
    WrongBranch { z: Complex64, one_minus_ab: f64 },
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Iteration and extrapolation controls for the master-equation solver.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Picard damping factor in (0, 1].
    pub damping: f64,
    pub max_iterations: usize,
    /// Fixed-point residual required for convergence.
    pub residual_tol: f64,
    /// Strictly decreasing imaginary offsets used to continue the solution
    /// from high above the axis down to the target.
    pub continuation_levels: Vec<f64>,
    /// Strictly decreasing heights used by [`density_at`] for the boundary
    /// extrapolation of `Im m / pi`.
    pub extrapolation_heights: Vec<f64>,
    /// Absolute tolerance for measure quadratures inside the iteration.
    pub quad_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            damping: 0.5,
            max_iterations: 600,
            residual_tol: 1e-12,
            continuation_levels: vec![
                1.0, 0.3, 0.1, 0.03, 0.01, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5, 3e-6, 1e-6, 3e-7,
                1e-7, 3e-8, 1e-8,
            ],
            extrapolation_heights: vec![1e-2, 5e-3, 2.5e-3, 1.25e-3],
            quad_tol: 1e-10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(SolverError::BadConfig(format!(
                "damping {} outside (0, 1]",
                self.damping
            )));
        }
        if !(self.residual_tol > 0.0 && self.residual_tol.is_finite()) {
            return Err(SolverError::BadConfig("residual_tol must be positive".into()));
        }
        let decreasing_positive = |xs: &[f64]| {
            xs.windows(2).all(|w| w[0] > w[1]) && xs.last().map_or(false, |&l| l > 0.0)
        };
        if self.continuation_levels.is_empty()
            || !decreasing_positive(&self.continuation_levels)
        {
            return Err(SolverError::BadConfig(
                "continuation_levels must be strictly decreasing and positive".into(),
            ));
        }
        if self.extrapolation_heights.len() < 3
            || !decreasing_positive(&self.extrapolation_heights)
        {
            return Err(SolverError::BadConfig(
                "extrapolation_heights must be >= 3 strictly decreasing positive values".into(),
            ));
        }
        if !(self.quad_tol > 0.0) {
            return Err(SolverError::BadConfig("quad_tol must be positive".into()));
        }
        Ok(())
    }

    /// Copy of the configuration with different extrapolation heights.
    pub fn with_heights(&self, heights: Vec<f64>) -> Self {
        Self {
            extrapolation_heights: heights,
            ..self.clone()
        }
    }
}

/// Converged solution of the master equation at one complex argument,
/// together with the stability diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct SolutionPoint {
    pub z: Complex64,
    pub m: Complex64,
    /// Final fixed-point residual `|m - RHS(z, m)|`.
    pub residual: f64,
    /// `int dB / |tau - w|^2` at the converged shifted argument `w`.
    pub alpha: f64,
    /// `gamma * int u^2 / |1 + u m|^2 dA`.
    pub beta: f64,
    /// `1 - alpha * beta`; strictly positive on the correct branch.
    pub one_minus_ab: f64,
}

/// Sampled density values with extrapolation error estimates.
#[derive(Debug, Clone, Default)]
pub struct DensityGrid {
    /// `(x, f, err)` triples sorted by `x`; `f >= 0`.
    pub entries: Vec<(f64, f64, f64)>,
}

impl DensityGrid {
    /// CSV form: header `x,f,err`, one row per point, 12+ significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,f,err\n");
        for &(x, f, err) in &self.entries {
            out.push_str(&format!("{x:.14e},{f:.14e},{err:.14e}\n"));
        }
        out
    }
}

struct Workspace<'a> {
    a: &'a Measure,
    b: &'a Measure,
    gamma: f64,
    quad_tol: f64,
}

impl<'a> Workspace<'a> {
    fn new(a: &'a Measure, b: &'a Measure, gamma: f64, cfg: &SolverConfig) -> Result<Self, SolverError> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(SolverError::BadGamma(gamma));
        }
        // Finite second moment of A is part of the contract.
        a.second_moment()?;
        Ok(Self {
            a,
            b,
            gamma,
            quad_tol: cfg.quad_tol,
        })
    }

    /// `int u / (1 + u m) dA(u)`.
    fn a_integral(&self, m: Complex64) -> Result<Complex64, SolverError> {
        Ok(self
            .a
            .integrate_against(|u| u / (1.0 + u * m), self.quad_tol)?)
    }

    /// `int u^2 / (1 + u m)^2 dA(u)` (complex, coincident arguments).
    fn a_square(&self, m: Complex64) -> Result<Complex64, SolverError> {
        Ok(self.a.integrate_against(
            |u| {
                let d = 1.0 + u * m;
                u * u / (d * d)
            },
            self.quad_tol,
        )?)
    }

    /// `int u^2 / |1 + u m|^2 dA(u)` (real, conjugate arguments).
    fn a_square_abs(&self, m: Complex64) -> Result<f64, SolverError> {
        Ok(self.a.integrate_against(
            |u| {
                let d = 1.0 + u * m;
                u * u / d.norm_sqr()
            },
            self.quad_tol,
        )?)
    }

    /// `int dB / |tau - w|^2`.
    fn b_abs_square(&self, w: Complex64) -> Result<f64, SolverError> {
        Ok(self
            .b
            .integrate_against(|tau| (Complex64::new(tau, 0.0) - w).norm_sqr().recip(), self.quad_tol)?)
    }

    /// Shifted argument `w = z - gamma * int u/(1+um) dA`.
    fn shifted(&self, z: Complex64, m: Complex64) -> Result<Complex64, SolverError> {
        Ok(z - self.gamma * self.a_integral(m)?)
    }

    fn rhs(&self, z: Complex64, m: Complex64) -> Result<(Complex64, Complex64), SolverError> {
        let w = self.shifted(z, m)?;
        Ok((self.b.stieltjes_with_tol(w, self.quad_tol)?, w))
    }

    /// Newton derivative of the fixed-point map minus identity:
    /// `d RHS/dm - 1 = alpha(z,z) beta(z,z) - 1`.
    fn map_derivative(&self, w: Complex64, m: Complex64) -> Result<Complex64, SolverError> {
        let alpha_c = self.b.stieltjes_derivative_with_tol(w, self.quad_tol)?;
        let beta_c = self.gamma * self.a_square(m)?;
        Ok(alpha_c * beta_c - 1.0)
    }

    fn iterate(
        &self,
        z: Complex64,
        m0: Complex64,
        cfg: &SolverConfig,
    ) -> Result<(Complex64, f64), SolverError> {
        let mut m = if m0.im > 0.0 && m0.is_finite() {
            m0
        } else {
            self.b.stieltjes_with_tol(z, self.quad_tol)?
        };
        let mut best = (m, f64::INFINITY);
        let mut prev_residual = f64::INFINITY;
        let mut newton_ok = true;
        // Stall tracking: the damped map is locally contracting at the true
        // solution, so a residual that stops improving means the iterate is
        // circling outside the basin. Newton attempts and stronger damping
        // both help it drop in.
        let mut stall_level: u32 = 0;
        let mut last_check = f64::INFINITY;
        for iteration in 0..cfg.max_iterations {
            let (rhs, w) = self.rhs(z, m)?;
            let g = rhs - m;
            let residual = g.norm();
            if residual < best.1 {
                best = (m, residual);
            }
            // The tolerance scales with |m|; next to an atom of B the
            // shifted argument sits a distance ~1/|m| from the pole and the
            // RHS carries a rounding floor of order eps |m|^2, which bounds
            // the attainable residual there.
            let norm = m.norm().max(1.0);
            let floor = 10.0 * f64::EPSILON * norm * norm;
            if residual <= (cfg.residual_tol * norm).max(floor) {
                return Ok((m, residual));
            }
            if iteration > 0 && iteration % 25 == 0 {
                if best.1 > 0.5 * last_check {
                    stall_level = (stall_level + 1).min(5);
                }
                last_check = best.1;
            }
            // A Newton step that made things worse disables Newton for one
            // round; plain damping re-enters the contraction basin.
            if residual > prev_residual && prev_residual < NEWTON_THRESHOLD {
                newton_ok = false;
            }
            prev_residual = residual;
            let damping = cfg.damping * 0.5_f64.powi(stall_level as i32);
            let picard = m + damping * g;
            let mut next = picard;
            if (residual < NEWTON_THRESHOLD || stall_level > 0) && newton_ok {
                let gp = self.map_derivative(w, m)?;
                if gp.norm() > 1e-14 {
                    let candidate = m - g / gp;
                    if candidate.im > 0.0 && candidate.is_finite() {
                        next = candidate;
                    }
                }
            } else if !newton_ok {
                newton_ok = true;
            }
            if !(next.im > 0.0 && next.is_finite()) {
                next = picard;
            }
            if !(next.im > 0.0 && next.is_finite()) {
                return Err(SolverError::Convergence {
                    z,
                    best: best.0,
                    residual: best.1,
                    iterations: iteration,
                });
            }
            m = next;
        }
        Err(SolverError::Convergence {
            z,
            best: best.0,
            residual: best.1,
            iterations: cfg.max_iterations,
        })
    }

    /// Continuation solve: walk the configured levels down to the target.
    fn solve_with_continuation(
        &self,
        z: Complex64,
        warm: Option<Complex64>,
        cfg: &SolverConfig,
    ) -> Result<(Complex64, f64), SolverError> {
        let mut m = match warm {
            Some(m) => m,
            None => {
                let start = Complex64::new(z.re, z.im.max(cfg.continuation_levels[0]));
                self.b.stieltjes_with_tol(start, self.quad_tol)?
            }
        };
        if warm.is_none() {
            for &level in &cfg.continuation_levels {
                if level <= z.im {
                    break;
                }
                let (mi, _) = self.iterate(Complex64::new(z.re, level), m, cfg)?;
                m = mi;
            }
        }
        self.iterate(z, m, cfg)
    }

    fn diagnostics(
        &self,
        z: Complex64,
        m: Complex64,
        residual: f64,
    ) -> Result<SolutionPoint, SolverError> {
        let w = self.shifted(z, m)?;
        let alpha = self.b_abs_square(w)?;
        let beta = self.gamma * self.a_square_abs(m)?;
        let one_minus_ab = 1.0 - alpha * beta;
        if one_minus_ab <= 0.0 {
            return Err(SolverError::WrongBranch { z, one_minus_ab });
        }
        Ok(SolutionPoint {
            z,
            m,
            residual,
            alpha,
            beta,
            one_minus_ab,
        })
    }
}

/// Solves the master equation at `z` in the open upper half-plane.
pub fn solve_at(
    a: &Measure,
    b: &Measure,
    gamma: f64,
    z: Complex64,
    cfg: &SolverConfig,
) -> Result<SolutionPoint, SolverError> {
    cfg.validate()?;
    if !(z.re.is_finite() && z.im.is_finite() && z.im > 0.0) {
        return Err(SolverError::BadTarget(z));
    }
    let ws = Workspace::new(a, b, gamma, cfg)?;
    let (m, residual) = ws.solve_with_continuation(z, None, cfg)?;
    ws.diagnostics(z, m, residual)
}

/// Solves directly from the supplied initial iterate, without continuation.
/// Used by uniqueness probes; converged results match [`solve_at`].
pub fn solve_at_from(
    a: &Measure,
    b: &Measure,
    gamma: f64,
    z: Complex64,
    m0: Complex64,
    cfg: &SolverConfig,
) -> Result<SolutionPoint, SolverError> {
    cfg.validate()?;
    if !(z.re.is_finite() && z.im.is_finite() && z.im > 0.0) {
        return Err(SolverError::BadTarget(z));
    }
    let ws = Workspace::new(a, b, gamma, cfg)?;
    let (m, residual) = ws.iterate(z, m0, cfg)?;
    ws.diagnostics(z, m, residual)
}

/// Boundary density `f(x) = lim Im m(x + iy) / pi`, extrapolated over
/// `cfg.extrapolation_heights` with a warm-start chain across heights.
///
/// Returns `(f, err)`; `f` is clamped to zero when the extrapolated value is
/// within the error estimate of zero. Callers that care whether `x` lies in
/// the guaranteed density domain should consult
/// [`Measure::in_density_domain`] on `b`; membership there is sufficient, not
/// necessary, so a miss is a warning rather than an error.
pub fn density_at(
    a: &Measure,
    b: &Measure,
    gamma: f64,
    x: f64,
    cfg: &SolverConfig,
) -> Result<(f64, f64), SolverError> {
    cfg.validate()?;
    let ws = Workspace::new(a, b, gamma, cfg)?;
    let mut pairs = Vec::with_capacity(cfg.extrapolation_heights.len());
    let mut warm: Option<Complex64> = None;
    for &y in &cfg.extrapolation_heights {
        let z = Complex64::new(x, y);
        let (m, _) = ws.solve_with_continuation(z, warm, cfg)?;
        warm = Some(m);
        pairs.push((y, m.im / std::f64::consts::PI));
    }
    let (raw, err) = numerics::extrapolate_to_zero(&pairs)?;
    let f = if raw <= err { 0.0 } else { raw };
    Ok((f, err))
}

/// Point masses of the limit law: one entry per atom `b` of `B` whose excess
/// `B({b}) - gamma (1 - A({0}))` is positive.
pub fn atom_masses(a: &Measure, b: &Measure, gamma: f64) -> Vec<(f64, f64)> {
    let deficit = gamma * (1.0 - a.atom_mass(0.0));
    b.atoms()
        .iter()
        .filter_map(|&(location, weight)| {
            let mass = weight - deficit;
            (mass > ATOM_MASS_EPS).then_some((location, mass))
        })
        .collect()
}

/// Density evaluator that rescales extrapolation heights near support
/// boundaries, where the fixed heights would overshoot the local analyticity
/// radius of `m`.
pub struct DensityEvaluator<'a> {
    a: &'a Measure,
    b: &'a Measure,
    gamma: f64,
    cfg: SolverConfig,
    boundaries: Vec<f64>,
}

impl<'a> DensityEvaluator<'a> {
    pub fn new(
        a: &'a Measure,
        b: &'a Measure,
        gamma: f64,
        cfg: &SolverConfig,
        support: &IntervalUnion,
    ) -> Self {
        let mut boundaries = Vec::new();
        for &(lo, hi) in support.intervals() {
            if lo.is_finite() {
                boundaries.push(lo);
            }
            if hi.is_finite() && hi != lo {
                boundaries.push(hi);
            }
        }
        // Discontinuity points of B inside the support carry sharp density
        // features (absorbed-atom peaks); the analyticity radius of m there
        // is the distance to the point, like at an edge.
        boundaries.extend(b.density_domain_exclusions().iter().copied());
        Self {
            a,
            b,
            gamma,
            cfg: cfg.clone(),
            boundaries,
        }
    }

    pub fn eval(&self, x: f64) -> Result<(f64, f64), SolverError> {
        let dist = self
            .boundaries
            .iter()
            .map(|&e| (x - e).abs())
            .fold(f64::INFINITY, f64::min);
        if dist < EDGE_NEAR && dist > 0.0 {
            let heights = vec![dist / 8.0, dist / 16.0, dist / 32.0, dist / 64.0];
            density_at(self.a, self.b, self.gamma, x, &self.cfg.with_heights(heights))
        } else {
            density_at(self.a, self.b, self.gamma, x, &self.cfg)
        }
    }

    /// Evaluates the density over a grid, in parallel, preserving order.
    pub fn eval_grid(&self, xs: &[f64]) -> Result<DensityGrid, SolverError> {
        let entries: Result<Vec<_>, SolverError> = xs
            .par_iter()
            .map(|&x| self.eval(x).map(|(f, err)| (x, f, err)))
            .collect();
        let mut entries = entries?;
        entries.sort_by(|p, q| p.0.total_cmp(&q.0));
        Ok(DensityGrid { entries })
    }
}

/// Piecewise-linear model CDF of the limit law, assembled from the density
/// over the reported support intervals plus the point masses.
#[derive(Debug, Clone)]
pub struct ModelCdf {
    nodes: Vec<(f64, f64)>,
    total: f64,
}

impl ModelCdf {
    /// Builds the CDF by integrating the density over every bounded support
    /// interval (Gauss panels in the sine-substituted variable, so the
    /// square-root edges are benign) and adding atom jumps.
    pub fn build(
        a: &Measure,
        b: &Measure,
        gamma: f64,
        support: &IntervalUnion,
        atoms: &[(f64, f64)],
        cfg: &SolverConfig,
        cells_per_interval: usize,
    ) -> Result<Self, SolverError> {
        const GL4_X: [f64; 2] = [0.3399810435848563, 0.8611363115940526];
        const GL4_W: [f64; 2] = [0.6521451548625461, 0.3478548451374538];
        let cells = cells_per_interval.max(8);
        let evaluator = DensityEvaluator::new(a, b, gamma, cfg, support);

        enum Event {
            Cell { x0: f64, x1: f64, mass: f64 },
            Atom { x: f64, mass: f64 },
        }
        let mut events: Vec<Event> = Vec::new();

        for &(lo, hi) in support.intervals() {
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(SolverError::BadConfig(
                    "model CDF requires a bounded support".into(),
                ));
            }
            if hi <= lo {
                continue; // isolated points carry atoms only
            }
            let c = 0.5 * (lo + hi);
            let r = 0.5 * (hi - lo);
            let step = std::f64::consts::PI / cells as f64;
            // Interior discontinuity points of B mark narrow density peaks;
            // cells near them are subdivided.
            let features: Vec<f64> = b
                .density_domain_exclusions()
                .iter()
                .copied()
                .filter(|&e| e > lo && e < hi)
                .collect();
            let mut theta_cells: Vec<(f64, f64)> = Vec::with_capacity(cells + 128);
            for j in 0..cells {
                let t0 = -std::f64::consts::FRAC_PI_2 + j as f64 * step;
                let t1 = t0 + step;
                let (x0, x1) = (c + r * t0.sin(), c + r * t1.sin());
                let dist = features
                    .iter()
                    .map(|&e| {
                        if e < x0 {
                            x0 - e
                        } else if e > x1 {
                            e - x1
                        } else {
                            0.0
                        }
                    })
                    .fold(f64::INFINITY, f64::min);
                let splits = if dist < 0.05 * r.max(1.0) {
                    64
                } else if dist < 0.3 * r.max(1.0) {
                    16
                } else {
                    1
                };
                for s in 0..splits {
                    let a0 = t0 + (t1 - t0) * s as f64 / splits as f64;
                    let a1 = t0 + (t1 - t0) * (s + 1) as f64 / splits as f64;
                    theta_cells.push((a0, a1));
                }
            }
            // Parallel density evaluation across quadrature nodes.
            let nodes: Vec<(usize, f64, f64)> = theta_cells
                .iter()
                .enumerate()
                .flat_map(|(j, &(t0, t1))| {
                    let tc = 0.5 * (t0 + t1);
                    let th = 0.5 * (t1 - t0);
                    [
                        (j, tc - th * GL4_X[1], GL4_W[1] * th),
                        (j, tc - th * GL4_X[0], GL4_W[0] * th),
                        (j, tc + th * GL4_X[0], GL4_W[0] * th),
                        (j, tc + th * GL4_X[1], GL4_W[1] * th),
                    ]
                })
                .collect();
            let values: Result<Vec<f64>, SolverError> = nodes
                .par_iter()
                .map(|&(_, theta, weight)| {
                    let x = c + r * theta.sin();
                    evaluator.eval(x).map(|(f, _)| f * r * theta.cos() * weight)
                })
                .collect();
            let values = values?;
            let mut cell_mass = vec![0.0; theta_cells.len()];
            for (&(j, _, _), &v) in nodes.iter().zip(values.iter()) {
                cell_mass[j] += v;
            }
            for (j, mass) in cell_mass.into_iter().enumerate() {
                let (t0, t1) = theta_cells[j];
                let x0 = c + r * t0.sin();
                let x1 = c + r * t1.sin();
                events.push(Event::Cell { x0, x1, mass });
            }
        }
        for &(x, mass) in atoms {
            events.push(Event::Atom { x, mass });
        }
        events.sort_by(|p, q| {
            let key = |e: &Event| match e {
                Event::Cell { x0, .. } => *x0,
                Event::Atom { x, .. } => *x,
            };
            key(p).total_cmp(&key(q))
        });

        let mut nodes: Vec<(f64, f64)> = Vec::new();
        let mut acc = 0.0;
        for event in events {
            match event {
                Event::Cell { x0, x1, mass } => {
                    if nodes.last().map_or(true, |&(x, _)| x < x0) {
                        nodes.push((x0, acc));
                    }
                    acc += mass.max(0.0);
                    nodes.push((x1, acc));
                }
                Event::Atom { x, mass } => {
                    nodes.push((x, acc));
                    acc += mass;
                    nodes.push((x, acc));
                }
            }
        }
        if nodes.is_empty() {
            return Err(SolverError::BadConfig("empty support".into()));
        }
        Ok(Self { nodes, total: acc })
    }

    /// Total mass; 1 within tolerance for a well-resolved model.
    pub fn total_mass(&self) -> f64 {
        self.total
    }

    /// Right-continuous CDF evaluation; nondecreasing in `x`.
    pub fn eval(&self, x: f64) -> f64 {
        if self.nodes.is_empty() || x < self.nodes[0].0 {
            return 0.0;
        }
        let n = self.nodes.len();
        if x >= self.nodes[n - 1].0 {
            return self.nodes[n - 1].1;
        }
        let idx = self.nodes.partition_point(|&(xi, _)| xi <= x);
        let (x0, f0) = self.nodes[idx - 1];
        let (x1, f1) = self.nodes[idx];
        if x1 == x0 {
            return f0;
        }
        f0 + (f1 - f0) * (x - x0) / (x1 - x0)
    }
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

    fn classical_mp_edges(gamma: f64) -> (f64, f64) {
        let s = gamma.sqrt();
        ((1.0 - s) * (1.0 - s), (1.0 + s) * (1.0 + s))
    }

    /// Density of the classical limit of `X' X / n` with `p/n -> gamma < 1`.
    fn classical_mp_density(gamma: f64, x: f64) -> f64 {
        let (a, b) = classical_mp_edges(gamma);
        if x <= a || x >= b {
            return 0.0;
        }
        ((b - x) * (x - a)).sqrt() / (2.0 * std::f64::consts::PI * x)
    }

    #[test]
    fn degenerate_b_reduces_to_classical_mp_transform() {
        let a = Measure::dirac(1.0);
        let b = Measure::dirac(0.0);
        let gamma = 0.25;
        let cfg = SolverConfig::default();
        let z = Complex64::new(1.0, 1.0);
        let sp = solve_at(&a, &b, gamma, z, &cfg).unwrap();
        // Oracle: quadrature of the closed-form limit density plus the
        // (1 - gamma) atom at zero.
        let (lo, hi) = classical_mp_edges(gamma);
        let cont = numerics::integrate_complex(
            |x| Complex64::new(classical_mp_density(gamma, x), 0.0) / (Complex64::new(x, 0.0) - z),
            lo,
            hi,
            1e-12,
        )
        .unwrap();
        let oracle = cont + (1.0 - gamma) / (Complex64::new(0.0, 0.0) - z);
        assert!(
            (sp.m - oracle).norm() < 1e-8,
            "solver {} vs oracle {}",
            sp.m,
            oracle
        );
    }

    #[test]
    fn residual_meets_defining_property() {
        let (a, b, gamma) = fig1();
        let cfg = SolverConfig::default();
        for &(x, y) in &[(0.0, 1.0), (2.0, 0.01), (-3.5, 1e-3), (11.0, 0.3)] {
            let sp = solve_at(&a, &b, gamma, Complex64::new(x, y), &cfg).unwrap();
            assert!(sp.residual < 1e-10, "residual {:e} at ({x}, {y})", sp.residual);
            assert!(sp.m.im > 0.0);
        }
    }

    #[test]
    fn stability_identity_holds_at_converged_points() {
        let (a, b, gamma) = fig1();
        let cfg = SolverConfig::default();
        for &(x, y) in &[(0.5, 0.5), (3.0, 1e-2), (-2.0, 1e-3), (7.0, 0.1)] {
            let z = Complex64::new(x, y);
            let sp = solve_at(&a, &b, gamma, z, &cfg).unwrap();
            assert!(sp.one_minus_ab > 0.0);
            let identity = z.im / sp.m.im * sp.alpha;
            assert_relative_eq!(sp.one_minus_ab, identity, max_relative = 1e-6);
        }
    }

    #[test]
    fn five_way_initialization_agreement() {
        let (a, b, gamma) = fig1();
        let cfg = SolverConfig::default();
        let inits = [
            Complex64::new(0.0, 1.0),
            Complex64::new(1.5, 0.2),
            Complex64::new(-1.5, 2.0),
            Complex64::new(0.3, 0.05),
            Complex64::new(-0.7, 0.7),
        ];
        for &(x, y) in &[(0.0, 0.5), (4.0, 0.05), (-3.2, 0.02)] {
            let z = Complex64::new(x, y);
            let reference = solve_at(&a, &b, gamma, z, &cfg).unwrap().m;
            for &m0 in &inits {
                let m = solve_at_from(&a, &b, gamma, z, m0, &cfg).unwrap().m;
                assert!(
                    (m - reference).norm() < 1e-8,
                    "init {m0} disagrees at {z}: {m} vs {reference}"
                );
            }
        }
    }

    #[test]
    fn atom_masses_fig1() {
        let (a, b, gamma) = fig1();
        let masses = atom_masses(&a, &b, gamma);
        assert_eq!(masses.len(), 1);
        assert_eq!(masses[0].0, 3.0);
        assert_abs_diff_eq!(masses[0].1, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn atom_masses_empty_without_b_atoms() {
        let a = Measure::dirac(1.0);
        let b = Measure::semicircle(1.0, 0.0).unwrap();
        assert!(atom_masses(&a, &b, 0.5).is_empty());
    }

    #[test]
    fn density_matches_classical_mp_in_the_bulk() {
        let a = Measure::dirac(1.0);
        let b = Measure::dirac(0.0);
        let gamma = 0.25;
        let cfg = SolverConfig::default();
        let (f, err) = density_at(&a, &b, gamma, 1.0, &cfg).unwrap();
        let oracle = classical_mp_density(gamma, 1.0);
        assert!(
            (f - oracle).abs() < 1e-6,
            "f = {f} vs oracle {oracle} (err {err:e})"
        );
    }

    #[test]
    fn density_vanishes_far_below_support() {
        let (a, b, gamma) = fig1();
        let cfg = SolverConfig::default();
        let (f, err) = density_at(&a, &b, gamma, -25.0, &cfg).unwrap();
        assert_eq!(f, 0.0);
        assert!(err < 1e-6);
    }

    #[test]
    fn point_mass_retrieval_from_transform() {
        let (a, b, gamma) = fig1();
        let cfg = SolverConfig::default();
        let y = 1e-7;
        let sp = solve_at(&a, &b, gamma, Complex64::new(3.0, y), &cfg).unwrap();
        let mass = -(Complex64::new(0.0, y) * sp.m).re;
        assert_abs_diff_eq!(mass, 0.2, epsilon = 1e-3);
    }

    #[test]
    fn model_cdf_for_classical_mp() {
        let a = Measure::dirac(1.0);
        let b = Measure::dirac(0.0);
        let gamma = 0.25;
        let cfg = SolverConfig::default();
        let (lo, hi) = classical_mp_edges(gamma);
        let support = IntervalUnion::new(vec![(0.0, 0.0), (lo, hi)]).unwrap();
        let atoms = atom_masses(&a, &b, gamma);
        assert_eq!(atoms, vec![(0.0, 0.75)]);
        let cdf = ModelCdf::build(&a, &b, gamma, &support, &atoms, &cfg, 32).unwrap();
        assert!((cdf.total_mass() - 1.0).abs() < 1e-3);
        assert_eq!(cdf.eval(-1.0), 0.0);
        assert_relative_eq!(cdf.eval(0.0), 0.75, epsilon = 1e-9);
        assert_relative_eq!(cdf.eval(0.1), 0.75, epsilon = 1e-9);
        assert!((cdf.eval(5.0) - 1.0).abs() < 1e-3);
        // Monotone.
        let mut prev = -1.0;
        for i in 0..200 {
            let x = -0.5 + 3.5 * i as f64 / 199.0;
            let v = cdf.eval(x);
            assert!(v >= prev - 1e-12);
            prev = v;
        }
    }

    #[test]
    fn density_grid_csv_format() {
        let grid = DensityGrid {
            entries: vec![(0.5, 0.25, 1e-9)],
        };
        let csv = grid.to_csv();
        assert!(csv.starts_with("x,f,err\n"));
        assert!(csv.contains("5.00000000000000e-1"));
    }
}
