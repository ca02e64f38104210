//! Batch front end: parse a JSON problem description, orchestrate the
//! analysis and simulation modules, and emit CSV/JSON/SVG reports.

mod svg;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::Measure;
use crate::simulate::{self, EnsembleConfig, EntryLaw};
use crate::solver::{self, DensityEvaluator, ModelCdf, SolverConfig, SolverError};
use crate::support::{self, SupportError, SupportOptions, SupportReport};

/// Audit thresholds used by `validate`.
pub const KS_TOLERANCE: f64 = 0.05;
pub const GAP_MARGIN: f64 = 0.05;
pub const ATOM_MARGIN: f64 = 1e-6;
pub const ATOM_FRACTION_TOL: f64 = 0.01;
pub const EDGE_SLOPE_TOL: f64 = 0.02;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("spec error: {0}")]
    Spec(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("audit failed: {0}")]
    Audit(String),
}

impl CliError {
    /// Process exit code: 2 validation, 3 solver non-convergence, 4 audit.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Spec(_) | CliError::Io { .. } => 2,
            CliError::Solver(_) => 3,
            CliError::Audit(_) => 4,
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::BadConfig(_) | SolverError::BadGamma(_) | SolverError::BadTarget(_) => {
                CliError::Spec(e.to_string())
            }
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<SupportError> for CliError {
    fn from(e: SupportError) -> Self {
        match e {
            SupportError::BadWindow { .. } | SupportError::Measure(_) => {
                CliError::Spec(e.to_string())
            }
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<simulate::SimError> for CliError {
    fn from(e: simulate::SimError) -> Self {
        match e {
            simulate::SimError::BadDimensions { .. } | simulate::SimError::Measure(_) => {
                CliError::Spec(e.to_string())
            }
            _ => CliError::Solver(e.to_string()),
        }
    }
}

/// Solver overrides carried by the problem spec; unset fields keep defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    pub damping: Option<f64>,
    pub max_iterations: Option<usize>,
    pub residual_tol: Option<f64>,
    pub continuation_levels: Option<Vec<f64>>,
    pub extrapolation_heights: Option<Vec<f64>>,
    pub quad_tol: Option<f64>,
}

impl SolverOverrides {
    pub fn apply(&self, mut cfg: SolverConfig) -> SolverConfig {
        if let Some(v) = self.damping {
            cfg.damping = v;
        }
        if let Some(v) = self.max_iterations {
            cfg.max_iterations = v;
        }
        if let Some(v) = self.residual_tol {
            cfg.residual_tol = v;
        }
        if let Some(v) = &self.continuation_levels {
            cfg.continuation_levels = v.clone();
        }
        if let Some(v) = &self.extrapolation_heights {
            cfg.extrapolation_heights = v.clone();
        }
        if let Some(v) = self.quad_tol {
            cfg.quad_tol = v;
        }
        cfg
    }
}

/// Monte Carlo overrides carried by the problem spec.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub entry_law: Option<EntryLaw>,
}

/// One problem description shared by every subcommand, so the analysis and
/// the Monte Carlo always see identical measures.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(rename = "A")]
    pub a: Measure,
    #[serde(rename = "B")]
    pub b: Measure,
    pub gamma: f64,
    #[serde(default)]
    pub solver: SolverOverrides,
    #[serde(default)]
    pub simulation: SimulationSpec,
    /// Optional artifact filter; empty means "everything the subcommand
    /// produces".
    #[serde(default)]
    pub outputs: Vec<String>,
}

impl ProblemSpec {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let spec: ProblemSpec = serde_json::from_str(&text)
            .map_err(|e| CliError::Spec(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(CliError::Spec(format!(
                "gamma must be positive and finite, got {}",
                self.gamma
            )));
        }
        self.a
            .second_moment()
            .map_err(|e| CliError::Spec(format!("A: {e}")))?;
        Ok(())
    }

    pub fn solver_config(&self) -> SolverConfig {
        self.solver.apply(SolverConfig::default())
    }

    pub fn ensemble(&self, seed: Option<u64>, n: Option<usize>) -> EnsembleConfig {
        EnsembleConfig {
            n: n.or(self.simulation.n).unwrap_or(400),
            gamma: self.gamma,
            seed: seed.or(self.simulation.seed).unwrap_or(1),
            entry_law: self.simulation.entry_law.unwrap_or_default(),
            a: self.a.clone(),
            b: self.b.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Support,
    Density,
    Masses,
    Edges,
    Simulate,
    Validate,
}

#[derive(Debug, Clone, Default)]
pub struct RunFlags {
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub grid: Option<usize>,
}

/// Mirror structs for re-parsing emitted reports.
pub mod files {
    use serde::{Deserialize, Serialize};

    #[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
    pub struct AtomEntry {
        pub x: f64,
        pub mass: f64,
    }

    #[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
    pub struct EdgeEntry {
        pub h0: f64,
        pub x0: f64,
        pub side: String,
        pub x2: f64,
        pub q_prime: f64,
    }

    #[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
    pub struct SupportFile {
        pub support: Vec<(Option<f64>, Option<f64>)>,
        pub atoms: Vec<AtomEntry>,
        pub edges: Vec<EdgeEntry>,
        pub flags: Vec<String>,
    }

    #[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
    pub struct EdgeFit {
        pub x0: f64,
        pub side: String,
        pub q_prime: f64,
        /// Exponent from the expansion-aware fit
        /// `ln f = k + s ln d + e sqrt(d)`.
        pub slope: f64,
        /// Plain two-parameter log-log slope over the same window; carries
        /// the O(sqrt(d)) pre-asymptotic bias of the analytic edge profile.
        pub raw_slope: f64,
        pub ratio_limit: f64,
        pub pass: bool,
    }

    #[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
    pub struct AuditFile {
        pub n: usize,
        pub seed: u64,
        pub ks: f64,
        pub ks_pass: bool,
        pub gap_audit: crate::simulate::AuditRecord,
        pub atom_audit: crate::simulate::AuditRecord,
        pub edge_fits: Vec<EdgeFit>,
        pub pass: bool,
    }
}

fn write_artifact(
    out_dir: &Path,
    spec: &ProblemSpec,
    name: &str,
    contents: &str,
) -> Result<Option<PathBuf>, CliError> {
    if !spec.outputs.is_empty() && !spec.outputs.iter().any(|o| o == name) {
        return Ok(None);
    }
    let path = out_dir.join(name);
    fs::write(&path, contents).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(Some(path))
}

/// Runs one subcommand against a spec file; returns the written paths.
pub fn run(
    cmd: Subcommand,
    spec_path: &Path,
    flags: &RunFlags,
) -> Result<Vec<PathBuf>, CliError> {
    let spec = ProblemSpec::from_path(spec_path)?;
    fs::create_dir_all(&flags.out_dir).map_err(|source| CliError::Io {
        path: flags.out_dir.clone(),
        source,
    })?;
    if spec.b.as_dirac().is_some() {
        eprintln!("warning: degenerate-B outside the standing assumptions (Dirac input)");
    }
    match cmd {
        Subcommand::Support => cmd_support(&spec, flags),
        Subcommand::Density => cmd_density(&spec, flags),
        Subcommand::Masses => cmd_masses(&spec, flags),
        Subcommand::Edges => cmd_edges(&spec, flags),
        Subcommand::Simulate => cmd_simulate(&spec, flags),
        Subcommand::Validate => cmd_validate(&spec, flags),
    }
}

fn support_options(grid: Option<usize>) -> SupportOptions {
    SupportOptions {
        grid: grid.unwrap_or(2048),
        ..SupportOptions::default()
    }
}

fn cmd_support(spec: &ProblemSpec, flags: &RunFlags) -> Result<Vec<PathBuf>, CliError> {
    let opts = support_options(flags.grid);
    let report = support::determine_support(&spec.a, &spec.b, spec.gamma, &opts)?;
    let mut written = Vec::new();

    let json = serde_json::to_string_pretty(&report.to_json())
        .expect("report serialization cannot fail");
    written.extend(write_artifact(&flags.out_dir, spec, "support.json", &json)?);

    // Curve samples for the CSV and the figure.
    let window = support::analysis_window(&spec.a, &spec.b, spec.gamma, &opts)?;
    let domain = support::h_domain(&spec.a, &spec.b, window)?;
    let per_component = 512usize;
    let mut chunks: Vec<Vec<support::HCurvePoint>> = Vec::new();
    let mut csv = String::from("h,m_B,x,x1\n");
    for &(lo, hi) in &domain {
        let mut chunk = Vec::with_capacity(per_component);
        for j in 0..per_component {
            let h = lo + (hi - lo) * (j as f64 + 0.5) / per_component as f64;
            if let Ok(pt) = support::h_curve(&spec.a, &spec.b, spec.gamma, h) {
                csv.push_str(&format!(
                    "{:.14e},{:.14e},{:.14e},{:.14e}\n",
                    pt.h, pt.m_b, pt.x, pt.x1
                ));
                chunk.push(pt);
            }
        }
        if !chunk.is_empty() {
            chunks.push(chunk);
        }
    }
    written.extend(write_artifact(&flags.out_dir, spec, "hcurve.csv", &csv)?);

    let svg = svg::support_figure(&chunks, &report, &spec.b, window);
    written.extend(write_artifact(&flags.out_dir, spec, "support.svg", &svg)?);
    println!(
        "support: {} interval(s), {} atom(s), {} edge(s), {} flag(s)",
        report.support.intervals().len(),
        report.atoms.len(),
        report.edges.len(),
        report.degenerate_flags.len()
    );
    Ok(written)
}

fn cmd_density(spec: &ProblemSpec, flags: &RunFlags) -> Result<Vec<PathBuf>, CliError> {
    let opts = support_options(None);
    let report = support::determine_support(&spec.a, &spec.b, spec.gamma, &opts)?;
    let cfg = spec.solver_config();
    let (lo, hi) = bounded_hull(&report)?;
    let margin = 0.05 * (hi - lo) + 0.5;
    let n = flags.grid.unwrap_or(201).max(2);
    let xs: Vec<f64> = (0..n)
        .map(|i| lo - margin + (hi - lo + 2.0 * margin) * i as f64 / (n - 1) as f64)
        .collect();
    let evaluator = DensityEvaluator::new(&spec.a, &spec.b, spec.gamma, &cfg, &report.support);
    let grid = evaluator.eval_grid(&xs)?;
    let mut written = Vec::new();
    written.extend(write_artifact(
        &flags.out_dir,
        spec,
        "density.csv",
        &grid.to_csv(),
    )?);
    println!("density: {} grid points on [{:.6}, {:.6}]", n, lo - margin, hi + margin);
    Ok(written)
}

fn cmd_masses(spec: &ProblemSpec, flags: &RunFlags) -> Result<Vec<PathBuf>, CliError> {
    let masses = solver::atom_masses(&spec.a, &spec.b, spec.gamma);
    let entries: Vec<files::AtomEntry> = masses
        .iter()
        .map(|&(x, mass)| files::AtomEntry { x, mass })
        .collect();
    let json = serde_json::to_string_pretty(&entries).expect("serialization cannot fail");
    let mut written = Vec::new();
    written.extend(write_artifact(&flags.out_dir, spec, "masses.json", &json)?);
    println!("masses: {} atom(s)", entries.len());
    Ok(written)
}

fn cmd_edges(spec: &ProblemSpec, flags: &RunFlags) -> Result<Vec<PathBuf>, CliError> {
    let opts = support_options(flags.grid);
    let report = support::determine_support(&spec.a, &spec.b, spec.gamma, &opts)?;
    let entries: Vec<files::EdgeEntry> = report
        .edges
        .iter()
        .map(|e| files::EdgeEntry {
            h0: e.h0,
            x0: e.x0,
            side: e.side.as_str().to_string(),
            x2: e.x2,
            q_prime: e.q_prime,
        })
        .collect();
    let json = serde_json::to_string_pretty(&entries).expect("serialization cannot fail");
    let mut written = Vec::new();
    written.extend(write_artifact(&flags.out_dir, spec, "edges.json", &json)?);
    println!("edges: {} record(s)", entries.len());
    Ok(written)
}

fn cmd_simulate(spec: &ProblemSpec, flags: &RunFlags) -> Result<Vec<PathBuf>, CliError> {
    let cfg = spec.ensemble(flags.seed, flags.n);
    let w = simulate::sample_w(&cfg)?;
    let eig = simulate::eigenvalues_symmetric(&w)?;
    let mut csv = String::from("index,lambda\n");
    for (i, v) in eig.eigenvalues.iter().enumerate() {
        csv.push_str(&format!("{i},{v:.14e}\n"));
    }
    let mut written = Vec::new();
    written.extend(write_artifact(
        &flags.out_dir,
        spec,
        "eigenvalues.csv",
        &csv,
    )?);
    println!(
        "simulate: n = {}, p = {}, seed = {}, spectrum in [{:.6}, {:.6}]",
        cfg.n,
        cfg.p(),
        cfg.seed,
        eig.eigenvalues.first().unwrap_or(&f64::NAN),
        eig.eigenvalues.last().unwrap_or(&f64::NAN)
    );
    Ok(written)
}

fn bounded_hull(report: &SupportReport) -> Result<(f64, f64), CliError> {
    match (report.support.min(), report.support.max()) {
        (Some(lo), Some(hi)) if lo.is_finite() && hi.is_finite() => Ok((lo, hi)),
        _ => Err(CliError::Spec(
            "computed support is unbounded; density grid and audits need a bounded support"
                .into(),
        )),
    }
}

/// Edge-law measurement over nine log-spaced distances in `[1e-4, 1e-2]`
/// from the edge.
///
/// The analytic edge profile is `f = Q(sqrt(d))` with `Q` analytic and
/// `Q(0) = 0`, so `ln f = ln Q'(0) + (1/2) ln d + ln(1 + c1 sqrt(d) + c2 d
/// + ...)`. The exponent is therefore fit with the expansion-aware model
/// `ln f = k + s ln d + e1 sqrt(d) + e2 d`; the plain two-parameter slope
/// is reported alongside but carries an `O(sqrt(d))` bias wherever the
/// next expansion coefficients are sizable. The amplitude check
/// extrapolates `f / sqrt(d)` against `[sqrt(d), d]` to zero and compares
/// the intercept with the predicted `Q'(0)`.
pub fn edge_fit(
    spec_a: &Measure,
    spec_b: &Measure,
    gamma: f64,
    cfg: &SolverConfig,
    edge: &crate::support::EdgeRecord,
) -> Result<files::EdgeFit, CliError> {
    let distances: Vec<f64> = (0..9).map(|k| 1e-4 * 10f64.powf(k as f64 / 4.0)).collect();
    let mut logs: Vec<(f64, f64)> = Vec::new();
    let mut ratios: Vec<(f64, f64)> = Vec::new();
    for &d in &distances {
        let x = match edge.side {
            crate::support::EdgeSide::LeftEndpoint => edge.x0 + d,
            crate::support::EdgeSide::RightEndpoint => edge.x0 - d,
        };
        let heights = vec![d / 8.0, d / 16.0, d / 32.0, d / 64.0];
        let (f, _) = solver::density_at(spec_a, spec_b, gamma, x, &cfg.with_heights(heights))?;
        if f > 0.0 {
            logs.push((d, f));
            ratios.push((d.sqrt(), f / d.sqrt()));
        }
    }
    if logs.len() < 5 {
        return Err(CliError::Solver(format!(
            "edge fit at x0 = {} has too few positive density samples",
            edge.x0
        )));
    }
    let slope = exponent_fit(&logs);
    let raw: Vec<(f64, f64)> = logs.iter().map(|&(d, f)| (d.ln(), f.ln())).collect();
    let raw_slope = lsq_slope(&raw);
    // Intercept of f/sqrt(d) against [sqrt(d), d] estimates the d -> 0 limit.
    let ratio_rows: Vec<[f64; 3]> = ratios.iter().map(|&(s, _)| [1.0, s, s * s]).collect();
    let ratio_rhs: Vec<f64> = ratios.iter().map(|&(_, r)| r).collect();
    let intercept = normal_equations_3(&ratio_rows, &ratio_rhs)[0];
    let ratio_limit = intercept / edge.q_prime;
    let pass = (slope - 0.5).abs() <= EDGE_SLOPE_TOL && (ratio_limit - 1.0).abs() <= 0.05;
    Ok(files::EdgeFit {
        x0: edge.x0,
        side: edge.side.as_str().to_string(),
        q_prime: edge.q_prime,
        slope,
        raw_slope,
        ratio_limit,
        pass,
    })
}

/// Exponent `s` of `ln f = k + s ln d + e1 sqrt(d) + e2 d`.
fn exponent_fit(samples: &[(f64, f64)]) -> f64 {
    let rows: Vec<[f64; 4]> = samples
        .iter()
        .map(|&(d, _)| [1.0, d.ln(), d.sqrt(), d])
        .collect();
    let rhs: Vec<f64> = samples.iter().map(|&(_, f)| f.ln()).collect();
    normal_equations_4(&rows, &rhs)[1]
}

fn solve_dense<const N: usize>(mut m: [[f64; N]; N], mut b: [f64; N]) -> [f64; N] {
    for k in 0..N {
        let piv = (k..N)
            .max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs()))
            .expect("nonempty pivot range");
        m.swap(k, piv);
        b.swap(k, piv);
        for i in (k + 1)..N {
            let f = m[i][k] / m[k][k];
            for j in k..N {
                m[i][j] -= f * m[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut sol = [0.0f64; N];
    for k in (0..N).rev() {
        let mut v = b[k];
        for j in (k + 1)..N {
            v -= m[k][j] * sol[j];
        }
        sol[k] = v / m[k][k];
    }
    sol
}

fn normal_equations_3(rows: &[[f64; 3]], rhs: &[f64]) -> [f64; 3] {
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for (row, &y) in rows.iter().zip(rhs.iter()) {
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
            atb[i] += row[i] * y;
        }
    }
    solve_dense(ata, atb)
}

fn normal_equations_4(rows: &[[f64; 4]], rhs: &[f64]) -> [f64; 4] {
    let mut ata = [[0.0f64; 4]; 4];
    let mut atb = [0.0f64; 4];
    for (row, &y) in rows.iter().zip(rhs.iter()) {
        for i in 0..4 {
            for j in 0..4 {
                ata[i][j] += row[i] * row[j];
            }
            atb[i] += row[i] * y;
        }
    }
    solve_dense(ata, atb)
}

fn lsq_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let var: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    cov / var
}

fn cmd_validate(spec: &ProblemSpec, flags: &RunFlags) -> Result<Vec<PathBuf>, CliError> {
    let opts = support_options(None);
    let report = support::determine_support(&spec.a, &spec.b, spec.gamma, &opts)?;
    bounded_hull(&report)?;
    let cfg = spec.solver_config();
    let cdf = ModelCdf::build(
        &spec.a,
        &spec.b,
        spec.gamma,
        &report.support,
        &report.atoms,
        &cfg,
        48,
    )?;

    let ens = spec.ensemble(flags.seed, flags.n);
    let w = simulate::sample_w(&ens)?;
    let mut eig = simulate::eigenvalues_symmetric(&w)?;
    // Multiple exact eigenvalues come back spread over an eps * ||W|| wide
    // cluster; snap them onto the predicted atoms before CDF comparison.
    simulate::snap_to_atoms(&mut eig, &report.atoms, 1e-8);
    let ks = simulate::ks_distance(&eig, |x| cdf.eval(x))?;
    let gap_audit = simulate::gap_and_mass_audit(&eig, &report, GAP_MARGIN);
    let atom_audit = simulate::gap_and_mass_audit(&eig, &report, ATOM_MARGIN);

    let mut edge_fits = Vec::new();
    for edge in &report.edges {
        edge_fits.push(edge_fit(&spec.a, &spec.b, spec.gamma, &cfg, edge)?);
    }

    let ks_pass = ks < KS_TOLERANCE;
    let gaps_pass = gap_audit.gaps.iter().all(|g| g.deep_count == 0);
    let atoms_pass = atom_audit
        .atoms
        .iter()
        .all(|a| (a.fraction - a.mass).abs() <= ATOM_FRACTION_TOL);
    let edges_pass = edge_fits.iter().all(|e| e.pass);
    let pass = ks_pass && gaps_pass && atoms_pass && edges_pass;

    let audit = files::AuditFile {
        n: ens.n,
        seed: ens.seed,
        ks,
        ks_pass,
        gap_audit,
        atom_audit,
        edge_fits,
        pass,
    };
    let json = serde_json::to_string_pretty(&audit).expect("serialization cannot fail");
    let mut written = Vec::new();
    written.extend(write_artifact(&flags.out_dir, spec, "audit.json", &json)?);
    println!(
        "validate: n = {}, ks = {:.4} ({}), gaps {}, atoms {}, edges {}",
        ens.n,
        ks,
        if ks_pass { "pass" } else { "FAIL" },
        if gaps_pass { "pass" } else { "FAIL" },
        if atoms_pass { "pass" } else { "FAIL" },
        if edges_pass { "pass" } else { "FAIL" },
    );
    if !pass {
        return Err(CliError::Audit(format!(
            "ks = {ks:.4} (tol {KS_TOLERANCE}), gaps clean = {gaps_pass}, atoms within {ATOM_FRACTION_TOL} = {atoms_pass}, edge fits = {edges_pass}"
        )));
    }
    Ok(written)
}

/// Normalization summary used by tests and the acceptance suite:
/// total model mass (integral of the density plus atom masses).
pub fn total_model_mass(
    a: &Measure,
    b: &Measure,
    gamma: f64,
    report: &SupportReport,
    cfg: &SolverConfig,
) -> Result<f64, CliError> {
    let cdf = ModelCdf::build(a, b, gamma, &report.support, &report.atoms, cfg, 48)?;
    Ok(cdf.total_mass())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn spec_round_trips_through_json() {
        let text = json!({
            "A": {"components": [
                {"weight": 0.2, "part": {"type": "atom", "location": 0.0}},
                {"weight": 0.4, "part": {"type": "atom", "location": 1.0}},
                {"weight": 0.4, "part": {"type": "atom", "location": 10.0}}
            ]},
            "B": {"components": [
                {"weight": 0.4, "part": {"type": "atom", "location": -3.0}},
                {"weight": 0.6, "part": {"type": "atom", "location": 3.0}}
            ]},
            "gamma": 0.5
        })
        .to_string();
        let spec: ProblemSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec.gamma, 0.5);
        let back = serde_json::to_string(&spec).unwrap();
        let reparsed: ProblemSpec = serde_json::from_str(&back).unwrap();
        assert_eq!(reparsed.a, spec.a);
        assert_eq!(reparsed.b, spec.b);
    }

    #[test]
    fn bad_spec_is_a_spec_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, "{\"A\": 3}").unwrap();
        let err = ProblemSpec::from_path(&path).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        // The diagnostic carries a line/column position.
        assert!(err.to_string().contains("line"));
    }

    #[test]
    fn gamma_validation() {
        let text = json!({
            "A": {"components": [{"weight": 1.0, "part": {"type": "atom", "location": 1.0}}]},
            "B": {"components": [{"weight": 1.0, "part": {"type": "atom", "location": 0.0}}]},
            "gamma": -1.0
        })
        .to_string();
        let spec: ProblemSpec = serde_json::from_str(&text).unwrap();
        assert!(matches!(spec.validate(), Err(CliError::Spec(_))));
    }
}
