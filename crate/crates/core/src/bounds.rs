//! End-to-end scenarios: spectral brackets of glued spaces checked against
//! the explicit lower and upper bounds.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assembly::{cutoff_rayleigh, glue, lambda0_bracket, CutoffReport, PairingRule, Truncation};
use crate::cell::{build_cell, check_recollement, neumann_spectrum, CellMesh, CellSpectrum, CellTemplate};
use crate::eigen::EigenOptions;
use crate::error::{Error, Result};
use crate::extrapolate::TailEstimate;
use crate::graph::{
    build_lattice, build_regular_tree, cheeger_sweep, dirichlet_ground_state, folner_ratio, load_edge_list,
    GraphBall,
};
use crate::tube::{constant_a_parts, constant_a_prime, LowerConstants, TubeDerived, TubeProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Cells with a positive-norm first eigenfunction; lower bound
    /// `λ₀(C) + A·η·μ₀` and the cutoff upper bound.
    #[default]
    Main,
    /// Finite-volume cells with constant first eigenfunction.
    Bounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphKind {
    Lattice { dimension: usize },
    Tree { valence: usize },
    SingleVertex,
    /// Edge-list file, resolved relative to the scenario file.
    EdgeList { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    #[serde(flatten)]
    pub kind: GraphKind,
    #[serde(default)]
    pub depths: Vec<usize>,
    #[serde(default)]
    pub pairing: PairingRule,
    /// Overrides the reference `μ₀` (closed form for trees, 0 for lattices).
    #[serde(default)]
    pub mu0_ref: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TubeConfig {
    /// Tube width `R`; defaults to the largest admissible value.
    pub width: Option<f64>,
    pub radial_samples: usize,
    pub dimension: usize,
    /// Optional explicit profile (JSON) used for every transition instead
    /// of the one read off the cell.
    pub profile: Option<PathBuf>,
    /// `Vol(T⁺)` to pair with an explicit profile.
    pub vol_tube_plus: Option<f64>,
}

impl Default for TubeConfig {
    fn default() -> Self {
        Self { width: None, radial_samples: 65, dimension: 2, profile: None, vol_tube_plus: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Eigensolver residual tolerance.
    pub solver: f64,
    /// Multiplicative slack on theorem inequalities.
    pub slack: f64,
    /// Absolute threshold for the amenable convergence of `δ`.
    pub amenable: f64,
    /// Absolute slack on every verdict.
    pub verdict: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { solver: 1e-9, slack: 0.05, amenable: 5e-3, verdict: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Checks {
    pub lower: bool,
    pub upper: bool,
    pub amenable: bool,
}

impl Default for Checks {
    fn default() -> Self {
        Self { lower: true, upper: true, amenable: true }
    }
}

fn default_seed() -> u64 {
    EigenOptions::default().seed
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub variant: Variant,
    pub graph: GraphSpec,
    pub cell: CellTemplate,
    #[serde(default)]
    pub tube: TubeConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub checks: Checks,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Directory against which relative paths resolve.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut s = toml::from_str::<Self>(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        Ok(s)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// Nested balls of the schedule, in increasing radius.
    pub fn balls(&self) -> Result<Vec<GraphBall>> {
        let mut depths = self.graph.depths.clone();
        depths.sort_unstable();
        depths.dedup();
        let need = |d: &[usize]| {
            if d.is_empty() {
                Err(Error::Config("graph.depths must list at least one radius".into()))
            } else {
                Ok(())
            }
        };
        match &self.graph.kind {
            GraphKind::Lattice { dimension } => {
                need(&depths)?;
                depths.iter().map(|&p| build_lattice(*dimension, p)).collect()
            }
            GraphKind::Tree { valence } => {
                need(&depths)?;
                depths.iter().map(|&p| build_regular_tree(*valence, p)).collect()
            }
            GraphKind::SingleVertex => Ok(vec![GraphBall::single_vertex()]),
            GraphKind::EdgeList { path } => {
                let text = std::fs::read_to_string(self.resolve(path))?;
                Ok(vec![load_edge_list(&text)?])
            }
        }
    }

    pub fn family_name(&self) -> String {
        match &self.graph.kind {
            GraphKind::Lattice { dimension: 1 } => "Z".into(),
            GraphKind::Lattice { dimension } => format!("Z^{dimension}"),
            GraphKind::Tree { valence } => format!("T{valence}"),
            GraphKind::SingleVertex => "single_vertex".into(),
            GraphKind::EdgeList { path } => format!("edge_list:{}", path.display()),
        }
    }

    pub fn amenable(&self) -> bool {
        !matches!(self.graph.kind, GraphKind::Tree { .. })
    }

    pub fn mu0_ref(&self) -> f64 {
        if let Some(m) = self.graph.mu0_ref {
            return m;
        }
        match self.graph.kind {
            GraphKind::Tree { valence } => {
                let v = valence as f64;
                v - 2.0 * (v - 1.0).sqrt()
            }
            _ => 0.0,
        }
    }

    /// Drops depths above `max_depth`.
    pub fn limit_depth(&mut self, max_depth: usize) {
        self.graph.depths.retain(|&d| d <= max_depth);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub lhs: f64,
    pub rhs: f64,
    /// Positive when the inequality holds with room to spare.
    pub margin: f64,
    pub detail: String,
}

fn verdict_le(name: &str, lhs: f64, rhs: f64, detail: impl Into<String>) -> Verdict {
    Verdict { name: name.into(), passed: lhs <= rhs, lhs, rhs, margin: rhs - lhs, detail: detail.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TubeSummary {
    pub port: usize,
    pub width: f64,
    pub dimension: usize,
    pub vol_alpha: f64,
    pub vol_tube_plus: f64,
    pub u_inf_r: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ConstantsReport {
    /// Lower-bound constants of the transition with the smallest `A`.
    pub lower: Option<LowerConstants>,
    pub a: f64,
    pub a_prime: f64,
    /// Neighbour count entering `A'` (the graph valence).
    pub k: usize,
    /// Upper constant of the bounded variant, `A'` with `λ₀ = 0`.
    pub a_upper_bounded: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Timing {
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct BoundReport {
    pub scenario: String,
    pub variant: Variant,
    pub family: String,
    pub valence: usize,
    pub seed: u64,
    pub lambda0_c: f64,
    pub lambda1_c: f64,
    pub eta: f64,
    pub phi0_at_transitions: Vec<f64>,
    pub cell_volume: f64,
    pub recollement_deviation: f64,
    pub mu0_ref: f64,
    pub depths: Vec<usize>,
    /// Dirichlet ball estimates of `μ₀` per depth.
    pub mu0_est: Vec<f64>,
    /// `#∂F/#F` of each ball interior.
    pub folner: Vec<f64>,
    /// Sweep-cut Cheeger estimate on the largest ball.
    pub h_est: f64,
    pub tube: TubeSummary,
    pub constants: ConstantsReport,
    pub lambda0_m_upper: Vec<f64>,
    pub upper_residuals: Vec<f64>,
    pub delta: Vec<f64>,
    pub delta_tail: Option<TailEstimate>,
    /// Conservative limit of `δ` used by the verdicts.
    pub delta_limit: f64,
    pub cutoff: Vec<CutoffReport>,
    pub verdicts: Vec<Verdict>,
    pub passed: bool,
    pub failure_stage: Option<String>,
    pub timing: Timing,
}

impl BoundReport {
    /// JSON with the timing field zeroed, for determinism checks.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut r = self.clone();
        r.timing = Timing::default();
        Ok(serde_json::to_string_pretty(&r)?)
    }

    /// Plot data, one row per depth.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "depth,lambda0_upper,delta,mu0_est,folner,cutoff_quotient,cutoff_bound,lower_bound,upper_bound\n",
        );
        let lower = self.lambda0_c + self.constants.a * self.eta * self.mu0_ref;
        for (i, d) in self.depths.iter().enumerate() {
            let cut = self.cutoff.get(i);
            let folner = self.folner.get(i).copied().unwrap_or(f64::NAN);
            let cell = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.12e}"));
            out.push_str(&format!(
                "{d},{},{},{},{},{},{},{},{}\n",
                cell(self.lambda0_m_upper.get(i).copied()),
                cell(self.delta.get(i).copied()),
                cell(self.mu0_est.get(i).copied()),
                cell(Some(folner)),
                cell(cut.map(|c| c.quotient)),
                cell(cut.map(|c| c.bound)),
                cell(Some(lower)),
                cell(Some(self.lambda0_c + self.constants.a_prime * folner)),
            ));
        }
        out
    }
}

/// A failed run: the stage that failed, the error, and everything computed
/// before it.
#[derive(Debug, thiserror::Error)]
#[error("stage `{stage}` failed: {error}")]
pub struct ScenarioError {
    pub stage: String,
    #[source]
    pub error: Error,
    pub partial: Box<BoundReport>,
}

struct Runner {
    report: BoundReport,
    start: Instant,
}

impl Runner {
    fn stage<T>(&mut self, name: &str, r: Result<T>) -> std::result::Result<T, ScenarioError> {
        r.map_err(|error| {
            let mut partial = self.report.clone();
            partial.failure_stage = Some(name.to_string());
            partial.timing.total_seconds = self.start.elapsed().as_secs_f64();
            ScenarioError { stage: name.to_string(), error, partial: Box::new(partial) }
        })
    }
}

fn tube_width(s: &Scenario, c: &CellMesh) -> Result<f64> {
    let half = 0.5 * c.min_transition_distance();
    let leg = (0..c.valence())
        .map(|p| {
            let node = c.transition_nodes()[p];
            c.positions()[node].segment
        })
        .map(|seg| c.spec().segments[seg].length)
        .fold(f64::INFINITY, f64::min);
    let max = half.min(leg);
    match s.tube.width {
        Some(w) if w > 0.0 && w <= max * (1.0 + 1e-12) => Ok(w),
        Some(w) => Err(Error::Config(format!("tube width {w} must lie in (0, {max}]"))),
        None => Ok(max),
    }
}

fn lower_constants(
    s: &Scenario,
    c: &CellMesh,
    spec: &CellSpectrum,
    width: f64,
) -> Result<(LowerConstants, TubeSummary)> {
    let explicit = match &s.tube.profile {
        Some(p) => {
            let text = std::fs::read_to_string(s.resolve(p))?;
            let prof = TubeProfile::from_json(&text)?;
            let vol = s
                .tube
                .vol_tube_plus
                .ok_or_else(|| Error::Config("tube.vol_tube_plus is required with an explicit profile".into()))?;
            Some((prof, vol))
        }
        None => None,
    };
    let mut best: Option<(LowerConstants, TubeSummary)> = None;
    for port in 0..c.valence() {
        let (profile, vol_plus) = match &explicit {
            Some((p, v)) => (p.clone(), *v),
            None => {
                let t = c.transition_tube(port, width, s.tube.dimension, s.tube.radial_samples)?;
                (t.profile, t.vol_tube_plus)
            }
        };
        let d = TubeDerived::from_profile(&profile);
        let k = constant_a_parts(&d, spec.phi0_at_transitions[port], spec.lambda1, vol_plus)?;
        let summary = TubeSummary {
            port,
            width: profile.r_max(),
            dimension: profile.dimension(),
            vol_alpha: profile.vol_alpha(),
            vol_tube_plus: vol_plus,
            u_inf_r: k.u_inf_r,
            kappa: d.kappa,
        };
        if best.as_ref().is_none_or(|(b, _)| k.a < b.a) {
            best = Some((k, summary));
        }
    }
    best.ok_or_else(|| Error::Cell("cell has no transitions".into()))
}

/// Runs a scenario of either variant.
pub fn run_scenario(s: &Scenario) -> std::result::Result<BoundReport, ScenarioError> {
    let mut run = Runner {
        report: BoundReport {
            scenario: s.name.clone(),
            variant: s.variant,
            family: s.family_name(),
            seed: s.seed,
            mu0_ref: s.mu0_ref(),
            ..BoundReport::default()
        },
        start: Instant::now(),
    };
    let tol = s.tolerances.clone();

    let cell = run.stage("cell", build_cell(&s.cell.to_spec()))?;
    let spec = run.stage("cell spectrum", neumann_spectrum(&cell, 2, tol.solver.min(1e-9)))?;
    run.report.lambda0_c = spec.lambda0;
    run.report.lambda1_c = spec.lambda1;
    run.report.eta = spec.eta;
    run.report.phi0_at_transitions = spec.phi0_at_transitions.clone();
    run.report.cell_volume = cell.volume();
    let rec = check_recollement(&cell, &spec, 1e-8);
    run.report.recollement_deviation = rec.max_deviation;
    if !rec.ok {
        return Err(run.stage::<()>(
            "recollement",
            Err(Error::Invariant(format!("φ₀ differs across transitions by {:e}", rec.max_deviation))),
        )
        .unwrap_err());
    }
    if s.variant == Variant::Bounded {
        let bad = if cell.has_dirichlet() {
            Some("the bounded variant needs a finite-volume cell without Dirichlet ends".to_string())
        } else if spec.lambda0.abs() > 1e-8 {
            Some(format!("λ₀(C) = {} is not zero", spec.lambda0))
        } else {
            let f = spec.phi0[0];
            spec.phi0
                .iter()
                .any(|x| (x - f).abs() > 1e-8 * f)
                .then(|| "first eigenfunction of the cell is not constant".to_string())
        };
        if let Some(msg) = bad {
            return Err(run.stage::<()>("bounded hypotheses", Err(Error::Invariant(msg))).unwrap_err());
        }
    }

    let balls = run.stage("graph", s.balls())?;
    let valence = balls[0].valence();
    run.report.valence = valence;
    run.report.depths = balls.iter().map(|b| b.radius()).collect();
    let gopts = EigenOptions { tol: tol.solver, seed: s.seed, ..EigenOptions::default() };
    for b in &balls {
        if b.interior_vertices().is_empty() {
            continue;
        }
        let interior = b.interior_vertices();
        let mu = if b.num_edges() == 0 { 0.0 } else { run.stage("mu0", dirichlet_ground_state(b, &gopts))?.0 };
        let ratio = run.stage("folner", folner_ratio(b, &interior))?;
        run.report.mu0_est.push(mu);
        run.report.folner.push(ratio);
    }
    let last = balls.last().expect("nonempty");
    run.report.h_est = if last.num_edges() == 0 { 0.0 } else { run.stage("cheeger", cheeger_sweep(last))?.value };

    let width = run.stage("tube width", tube_width(s, &cell))?;
    let (lc, summary) = run.stage("tube constants", lower_constants(s, &cell, &spec, width))?;
    let k = valence.max(1);
    let a_prime = run.stage("A'", constant_a_prime(k, width, spec.lambda0.max(0.0)))?;
    let a_upper_bounded = match s.variant {
        Variant::Bounded => Some(run.stage("A'", constant_a_prime(k, width, 0.0))?),
        Variant::Main => None,
    };
    run.report.tube = summary;
    run.report.constants = ConstantsReport { a: lc.a, lower: Some(lc.clone()), a_prime, k, a_upper_bounded };
    let lower_value = spec.lambda0 + lc.a * spec.eta * s.mu0_ref();

    let bracket = run.stage(
        "bracket",
        lambda0_bracket(&balls, &cell, &spec, &s.graph.pairing, tol.solver, s.seed, Some(lower_value)),
    )?;
    run.report.lambda0_m_upper = bracket.upper.clone();
    run.report.upper_residuals = bracket.residuals.clone();
    run.report.delta = bracket.upper.iter().map(|u| u - spec.lambda0).collect();
    run.report.delta_tail = bracket.tail_fit.map(|t| TailEstimate { limit: t.limit - spec.lambda0, ..t });
    run.report.delta_limit = bracket.limit_estimate() - spec.lambda0;

    for b in &balls {
        let interior = b.interior_vertices();
        if interior.is_empty() {
            continue;
        }
        let space = run.stage("cutoff glue", glue(b, &cell, &s.graph.pairing, Truncation::Neumann))?;
        let rep = run.stage("cutoff", cutoff_rayleigh(&space, &interior, &spec.phi0, width, spec.lambda0))?;
        run.report.cutoff.push(rep);
    }

    let r = &mut run.report;
    let vt = tol.verdict;
    let dl = r.delta_limit;
    let upper_last = *r.lambda0_m_upper.last().expect("nonempty");
    r.verdicts.push(verdict_le(
        "delta_nonnegative",
        -dl,
        tol.solver.max(vt),
        "the upper bracket never drops below the cell's λ₀",
    ));
    if s.checks.lower {
        match s.variant {
            Variant::Main => {
                let rhs = lc.a * spec.eta * r.mu0_ref * (1.0 - tol.slack) - vt;
                r.verdicts.push(verdict_le("lower_bound", rhs, dl, "A·η·μ₀_ref·(1−slack) − tol ≤ δ_∞"));
                if !s.amenable() {
                    r.verdicts.push(verdict_le("nonamenable_gap", vt, dl, "δ_∞ > 0"));
                    r.verdicts.push(verdict_le(
                        "sandwich",
                        lower_value - vt,
                        upper_last,
                        "λ₀(C) + A·η·μ₀_ref − tol ≤ λ₀(M)_upper",
                    ));
                }
            }
            Variant::Bounded => {
                let rhs = lc.a * spec.eta * r.mu0_ref * (1.0 - tol.slack) - vt;
                r.verdicts.push(verdict_le("bounded_lower", rhs, upper_last, "A₁·η·μ₀_ref·(1−slack) ≤ λ₀(M)_upper"));
                r.verdicts.push(verdict_le("bounded_positive", -upper_last, vt, "λ₀(M)_upper ≥ 0"));
            }
        }
    }
    if s.checks.upper {
        let worst = r.cutoff.iter().map(|c| c.quotient - c.bound).fold(f64::NEG_INFINITY, f64::max);
        if !r.cutoff.is_empty() {
            r.verdicts.push(verdict_le("cutoff_bound", worst, vt, "max over depths of quotient − bound"));
        }
        match s.variant {
            Variant::Main => r.verdicts.push(verdict_le(
                "upper_bound",
                dl,
                a_prime * r.h_est * (1.0 + tol.slack) + vt,
                "δ_∞ ≤ A'·h_est·(1+slack)",
            )),
            Variant::Bounded => {
                let a2 = r.constants.a_upper_bounded.unwrap_or(a_prime);
                r.verdicts.push(verdict_le(
                    "bounded_upper",
                    upper_last,
                    a2 * r.h_est * (1.0 + tol.slack) + vt,
                    "λ₀(M)_upper ≤ A₂·h_est·(1+slack)",
                ));
            }
        }
    }
    if s.checks.amenable && s.amenable() {
        let increases = r.delta.windows(2).filter(|w| w[1] > w[0] + vt).count();
        r.verdicts.push(Verdict {
            name: "amenable_decreasing".into(),
            passed: increases == 0,
            lhs: increases as f64,
            rhs: 0.0,
            margin: -(increases as f64),
            detail: "δ_p nonincreasing along the schedule".into(),
        });
        let last = *r.delta.last().expect("nonempty");
        r.verdicts.push(verdict_le("amenable_equality", last, tol.amenable, "δ at the largest depth"));
    }
    r.passed = r.verdicts.iter().all(|v| v.passed);
    r.timing.total_seconds = run.start.elapsed().as_secs_f64();
    Ok(run.report)
}

/// Runs the finite-volume variant, whatever `s.variant` says.
pub fn run_bounded_decomposition(s: &Scenario) -> std::result::Result<BoundReport, ScenarioError> {
    let mut s = s.clone();
    s.variant = Variant::Bounded;
    run_scenario(&s)
}

/// Recomputes `A` and `A'` from the tube and cell numbers stored in a
/// report.
pub fn recompute_constants(r: &BoundReport) -> Option<(f64, f64)> {
    let lc = r.constants.lower.as_ref()?;
    let a1 = lc.phi0_mean * lc.phi0_mean * lc.vol_tube_plus / 16.0;
    let a2 = r.tube.vol_alpha * lc.phi0_mean * lc.phi0_mean / (16.0 * r.tube.u_inf_r);
    let mut m = a1.min(a2 / (4.0 * lc.lambda1));
    if r.tube.kappa > 0.0 {
        m = m.min(a2 / (4.0 * r.tube.kappa * r.tube.kappa));
    }
    let ap = constant_a_prime(r.constants.k, r.tube.width, r.lambda0_c.max(0.0)).ok()?;
    Some((0.5 * m, ap))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_parses() {
        let s = Scenario::from_toml(
            r#"
name = "tree3"
[graph]
kind = "tree"
valence = 3
depths = [2, 3]
[cell]
kind = "balanced_comb"
valence = 3
mesh_step = 0.05
"#,
        )
        .unwrap();
        assert_eq!(s.variant, Variant::Main);
        assert!((s.mu0_ref() - (3.0 - 2.0 * 2f64.sqrt())).abs() < 1e-15);
        assert_eq!(s.balls().unwrap().len(), 2);
        assert!(Scenario::from_toml("name = 1").is_err());
    }

    #[test]
    fn single_vertex_has_zero_delta() {
        let s = Scenario::from_toml(
            r#"
name = "one"
[graph]
kind = "single_vertex"
[cell]
kind = "balanced_comb"
valence = 3
mesh_step = 0.05
"#,
        )
        .unwrap();
        let r = run_scenario(&s).unwrap();
        assert_eq!(r.delta, vec![0.0]);
        assert!(r.passed, "{:?}", r.verdicts);
    }
}
