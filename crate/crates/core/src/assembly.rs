//! Gluing cell copies along a graph ball and the resulting global problems.

use serde::{Deserialize, Serialize};

use crate::cell::{CellMesh, CellSpectrum};
use crate::eigen::{smallest_eigenpairs, EigenOptions, EigenSolution};
use crate::error::{invalid, Error, Result};
use crate::extrapolate::{inverse_square_fit, richardson_two_point, TailEstimate};
use crate::graph::{folner_ratio, GraphBall};
use crate::sparse::{CsrMatrix, SparseOperator};
use crate::tube::constant_a_prime;

/// What happens to transition stubs whose graph port has no edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    Neumann,
    Dirichlet,
}

/// Maps graph ports to cell transition ports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PairingRule {
    /// Graph port `p` is cell transition `p`.
    #[default]
    Ports,
    /// Graph port `p` is cell transition `map[p]`.
    Map(Vec<usize>),
}

impl PairingRule {
    fn resolve(&self, graph_valence: usize, cell_valence: usize) -> Result<Vec<usize>> {
        let map: Vec<usize> = match self {
            PairingRule::Ports => {
                if graph_valence != 0 && graph_valence != cell_valence {
                    return Err(Error::Glue(format!(
                        "graph valence {graph_valence} differs from the cell's {cell_valence} transitions"
                    )));
                }
                (0..graph_valence).collect()
            }
            PairingRule::Map(m) => {
                if m.len() != graph_valence {
                    return Err(Error::Glue(format!(
                        "pairing map has {} entries for graph valence {graph_valence}",
                        m.len()
                    )));
                }
                m.clone()
            }
        };
        let mut used = vec![false; cell_valence];
        for &t in &map {
            if t >= cell_valence || std::mem::replace(&mut used[t], true) {
                return Err(Error::Glue(format!("pairing {map:?} is not injective into {cell_valence} transitions")));
            }
        }
        Ok(map)
    }
}

const DROPPED: usize = usize::MAX;

/// Global problem on the union of cell copies, one per graph vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GluedSpace {
    pub graph: GraphBall,
    pub cell: CellMesh,
    pub mode: Truncation,
    /// `node_map[copy][local]` is the global index, or `usize::MAX` when the
    /// node is eliminated (Dirichlet).
    pub node_map: Vec<Vec<usize>>,
    pub port_map: Vec<usize>,
    pub operator: SparseOperator,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Assembles the glued problem.
///
/// Copies are numbered like graph vertices. Each edge identifies the
/// transition node of its port at one end with the transition node of its
/// port at the other. Stiffness and mass add at identified nodes. Cell
/// Dirichlet nodes are always eliminated; in [`Truncation::Dirichlet`] mode
/// unmatched stubs are eliminated too.
pub fn glue(g: &GraphBall, c: &CellMesh, pairing: &PairingRule, mode: Truncation) -> Result<GluedSpace> {
    let port_map = pairing.resolve(g.valence(), c.valence())?;
    let nn = c.num_nodes();
    let nc = g.num_vertices();
    let total = nn * nc;
    let mut parent: Vec<usize> = (0..total).collect();
    let mut matched = vec![vec![false; g.valence()]; nc];
    for e in g.edges() {
        let ta = c.transition_nodes()[port_map[e.port_a]];
        let tb = c.transition_nodes()[port_map[e.port_b]];
        let (x, y) = (find(&mut parent, e.a * nn + ta), find(&mut parent, e.b * nn + tb));
        if x != y {
            parent[x.max(y)] = x.min(y);
        }
        matched[e.a][e.port_a] = true;
        matched[e.b][e.port_b] = true;
    }
    let mut dropped = vec![false; total];
    for copy in 0..nc {
        for i in 0..nn {
            if c.is_dirichlet(i) {
                dropped[copy * nn + i] = true;
            }
        }
        if mode == Truncation::Dirichlet {
            for (p, &t) in port_map.iter().enumerate() {
                if !matched[copy][p] {
                    dropped[copy * nn + c.transition_nodes()[t]] = true;
                }
            }
        }
    }
    let mut global_of_root = vec![DROPPED; total];
    let mut node_map = vec![vec![DROPPED; nn]; nc];
    let mut count = 0usize;
    for copy in 0..nc {
        for i in 0..nn {
            let id = copy * nn + i;
            if dropped[id] {
                continue;
            }
            let root = find(&mut parent, id);
            if global_of_root[root] == DROPPED {
                global_of_root[root] = count;
                count += 1;
            }
            node_map[copy][i] = global_of_root[root];
        }
    }
    let local = c.stiffness().triplets();
    let mut trip = Vec::with_capacity(local.len() * nc);
    let mut mass = vec![0.0; count];
    for map in &node_map {
        for &(i, j, v) in &local {
            let (gi, gj) = (map[i], map[j]);
            if gi != DROPPED && gj != DROPPED {
                trip.push((gi, gj, v));
            }
        }
        for (i, &m) in c.mass().iter().enumerate() {
            if map[i] != DROPPED {
                mass[map[i]] += m;
            }
        }
    }
    if count == 0 {
        return Err(Error::Glue("every node was eliminated".into()));
    }
    let stiffness = CsrMatrix::from_triplets(count, count, &trip)?;
    let operator = SparseOperator::new(stiffness, CsrMatrix::diagonal(&mass))?;
    Ok(GluedSpace { graph: g.clone(), cell: c.clone(), mode, node_map, port_map, operator })
}

impl GluedSpace {
    pub fn dimension(&self) -> usize {
        self.operator.dimension()
    }

    pub fn num_copies(&self) -> usize {
        self.node_map.len()
    }

    /// Restriction of a global function to one copy (zero at eliminated
    /// nodes).
    pub fn local(&self, copy: usize, f: &[f64]) -> Vec<f64> {
        self.node_map[copy].iter().map(|&gi| if gi == DROPPED { 0.0 } else { f[gi] }).collect()
    }

    /// Global function equal to `phi` on the listed copies and zero
    /// elsewhere. Fails if two copies disagree at an identified node.
    pub fn extend_cellwise(&self, copies: &[usize], per_copy: impl Fn(usize) -> Vec<f64>) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dimension()];
        let mut set = vec![false; self.dimension()];
        for &copy in copies {
            let vals = per_copy(copy);
            for (i, &gi) in self.node_map[copy].iter().enumerate() {
                if gi == DROPPED {
                    continue;
                }
                if set[gi] && (out[gi] - vals[i]).abs() > 1e-9 * (1.0 + vals[i].abs()) {
                    return Err(Error::Glue(format!(
                        "cellwise function is discontinuous at global node {gi}: {} vs {}",
                        out[gi], vals[i]
                    )));
                }
                out[gi] = vals[i];
                set[gi] = true;
            }
        }
        Ok(out)
    }

    /// Smallest eigenpairs of the glued problem.
    pub fn eigenpairs(&self, opts: &EigenOptions) -> Result<EigenSolution> {
        smallest_eigenpairs(&self.operator, opts)
    }
}

/// Upper brackets along a schedule of balls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub depths: Vec<usize>,
    /// Dirichlet-truncated `λ₀` per depth.
    pub upper: Vec<f64>,
    pub residuals: Vec<f64>,
    pub dimensions: Vec<usize>,
    /// `λ₀(C)`, always a lower bound.
    pub lower: f64,
    /// `λ₀(C) + A·η·μ₀` when constants are supplied.
    pub lower_with_constants: Option<f64>,
    pub richardson: Option<TailEstimate>,
    /// Three-point inverse-square fit of the upper sequence.
    pub tail_fit: Option<TailEstimate>,
}

impl Bracket {
    pub fn last_upper(&self) -> f64 {
        *self.upper.last().expect("nonempty schedule")
    }

    /// Conservative limit: the smaller of the raw last value and the tail
    /// fit (when available and not below the rigorous lower bound).
    pub fn limit_estimate(&self) -> f64 {
        let raw = self.last_upper();
        match self.tail_fit {
            Some(t) if t.limit >= self.lower => raw.min(t.limit),
            _ => raw,
        }
    }
}

/// Eigen options for a glued problem over a cell with the given spectrum:
/// the shift sits just below `λ₀(C)`, which bounds the glued spectrum from
/// below.
pub fn glued_options(spectrum: &CellSpectrum, tol: f64, seed: u64) -> EigenOptions {
    EigenOptions {
        tol,
        seed,
        shift: Some(spectrum.lambda0 - 0.02 * spectrum.eta),
        ..EigenOptions::with_count(1)
    }
}

/// Dirichlet-truncated `λ₀` along `balls`, which must be nested and
/// growing. Errors if the sequence increases beyond `tol`.
pub fn lambda0_bracket(
    balls: &[GraphBall],
    c: &CellMesh,
    spectrum: &CellSpectrum,
    pairing: &PairingRule,
    tol: f64,
    seed: u64,
    lower_with_constants: Option<f64>,
) -> Result<Bracket> {
    if balls.is_empty() {
        return Err(invalid("empty ball schedule"));
    }
    let opts = glued_options(spectrum, tol, seed);
    let mut upper = Vec::new();
    let mut residuals = Vec::new();
    let mut dimensions = Vec::new();
    for ball in balls {
        let space = glue(ball, c, pairing, Truncation::Dirichlet)?;
        let (value, residual) = if ball.num_edges() == 0 && ball.num_vertices() == 1 && space.operator == c.operator()? {
            // Identity case: the glued problem is the cell problem itself.
            (spectrum.lambda0, spectrum.max_residual)
        } else {
            let sol = space.eigenpairs(&opts)?.require_converged()?;
            (sol.pairs[0].value, sol.max_residual)
        };
        if let Some(&prev) = upper.last() {
            if value > prev + 1e3 * tol * (1.0 + prev) {
                return Err(Error::Invariant(format!(
                    "Dirichlet bracket increased from {prev} to {value} at radius {}",
                    ball.radius()
                )));
            }
        }
        upper.push(value);
        residuals.push(residual);
        dimensions.push(space.dimension());
    }
    let depths: Vec<usize> = balls.iter().map(|b| b.radius()).collect();
    let n = upper.len();
    let richardson = if n >= 2 && depths[n - 2] > 0 {
        richardson_two_point(depths[n - 2] as f64, upper[n - 2], depths[n - 1] as f64, upper[n - 1])
    } else {
        None
    };
    let ps: Vec<f64> = depths.iter().map(|&d| d as f64).collect();
    let tail_fit = inverse_square_fit(&ps, &upper).map(|(t, _)| t);
    Ok(Bracket {
        depths,
        upper,
        residuals,
        dimensions,
        lower: spectrum.lambda0,
        lower_with_constants,
        richardson,
        tail_fit,
    })
}

/// Rayleigh quotient of a cut-off test function and the explicit bound it
/// must satisfy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffReport {
    pub quotient: f64,
    /// Rayleigh quotient of the cell function alone.
    pub cell_quotient: f64,
    pub lambda0: f64,
    pub epsilon: f64,
    pub k: usize,
    pub width: f64,
    pub a_prime: f64,
    pub subset_size: usize,
    pub boundary_ratio: f64,
    pub bound: f64,
    pub holds: bool,
    pub margin: f64,
}

/// Test function `φ·ψ` where `ψ = 1` on the copies of `subset` and decays
/// as `max(0, 1 − d/R)` inside each neighbouring copy, `d` being the metric
/// distance to the transitions it shares with `subset`.
///
/// Returns the exact discrete Rayleigh quotient and checks it against
/// `λ₀ + ε + (A' + εk)·#∂G/#G`, with `k` the valence and
/// `ε = max(0, R(φ) − λ₀)`.
pub fn cutoff_rayleigh(
    space: &GluedSpace,
    subset: &[usize],
    phi: &[f64],
    width: f64,
    lambda0: f64,
) -> Result<CutoffReport> {
    if space.mode != Truncation::Neumann {
        return Err(invalid("cutoff test functions live on the Neumann-truncated space"));
    }
    let g = &space.graph;
    let c = &space.cell;
    if phi.len() != c.num_nodes() {
        return Err(Error::DimensionMismatch { expected: c.num_nodes(), got: phi.len() });
    }
    if subset.is_empty() {
        return Err(invalid("empty subset"));
    }
    let half = 0.5 * c.min_transition_distance();
    if !(width > 0.0) || width > half * (1.0 + 1e-12) {
        return Err(invalid(format!("collar width {width} must lie in (0, {half}]")));
    }
    let mut inside = vec![false; g.num_vertices()];
    for &v in subset {
        if v >= g.num_vertices() {
            return Err(invalid("subset vertex out of range"));
        }
        inside[v] = true;
    }
    for &v in subset {
        if g.degree(v) < g.valence() {
            return Err(Error::CollarMissing(format!("vertex {} lacks neighbouring cells", g.label(v))));
        }
    }
    // Transition nodes of each collar copy that face the subset.
    let mut facing: Vec<Vec<usize>> = vec![Vec::new(); g.num_vertices()];
    for e in g.edges() {
        for (x, px, y) in [(e.a, e.port_a, e.b), (e.b, e.port_b, e.a)] {
            if !inside[x] && inside[y] {
                facing[x].push(c.transition_nodes()[space.port_map[px]]);
            }
        }
    }
    let collar: Vec<usize> = (0..g.num_vertices()).filter(|&v| !inside[v] && !facing[v].is_empty()).collect();
    let mut copies: Vec<usize> = (0..g.num_vertices()).filter(|&v| inside[v]).collect();
    copies.extend(&collar);
    let f = space.extend_cellwise(&copies, |copy| {
        if inside[copy] {
            phi.to_vec()
        } else {
            let d = c.distances_from(&facing[copy]);
            phi.iter().zip(d).map(|(p, d)| p * (1.0 - d / width).max(0.0)).collect()
        }
    })?;
    let quotient = space.operator.rayleigh(&f);
    let mass: Vec<f64> = c.mass().to_vec();
    let phi_mass: f64 = phi.iter().zip(&mass).map(|(p, m)| m * p * p).sum();
    let cell_quotient = c.stiffness().quad_form(phi) / phi_mass;
    let epsilon = (cell_quotient - lambda0).max(0.0);
    let k = g.valence().max(1);
    let a_prime = constant_a_prime(k, width, lambda0.max(0.0))?;
    let boundary_ratio = if subset.iter().all(|&v| g.is_interior(v)) {
        folner_ratio(g, subset)?
    } else {
        return Err(Error::CollarMissing("subset must lie in the ball interior".into()));
    };
    let bound = lambda0 + epsilon + (a_prime + epsilon * k as f64) * boundary_ratio;
    let slack = 1e-10 * (1.0 + bound.abs());
    Ok(CutoffReport {
        quotient,
        cell_quotient,
        lambda0,
        epsilon,
        k,
        width,
        a_prime,
        subset_size: subset.len(),
        boundary_ratio,
        bound,
        holds: quotient <= bound + slack,
        margin: bound - quotient,
    })
}

/// How the per-cell coefficient `b_i` is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscretizationMode {
    /// `b_i = ⟨f, φ₀⟩_{C_i}` with `‖φ₀‖ = 1`.
    Phi0,
    /// `b_i` is the mean of `f` over `C_i`, and `a_i², c_i²` are divided by
    /// `Vol(C_i)`.
    VolumeNormalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub mode: DiscretizationMode,
    pub a2: Vec<f64>,
    pub b: Vec<f64>,
    pub c2: Vec<f64>,
    /// Local residual `g_i` per copy, over all cell nodes.
    pub g: Vec<Vec<f64>>,
    pub grad_g2: Vec<f64>,
    pub g_dot_phi0: Vec<f64>,
    pub lambda0: f64,
    /// `‖∇f‖²` of the global function.
    pub energy: f64,
    /// `Σ (λ₀ b_i² + ‖∇g_i‖²)` (with `λ₀ = 0` in the volume mode).
    pub energy_decomposed: f64,
    pub cell_volume: f64,
}

impl Discretization {
    /// Largest `|a_i² − b_i² − c_i²|`.
    pub fn pythagoras_defect(&self) -> f64 {
        self.a2
            .iter()
            .zip(&self.b)
            .zip(&self.c2)
            .fold(0.0f64, |m, ((a, b), c)| m.max((a - b * b - c).abs()))
    }

    pub fn orthogonality_defect(&self) -> f64 {
        self.g_dot_phi0.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn energy_defect(&self) -> f64 {
        (self.energy - self.energy_decomposed).abs()
    }
}

/// Projects `f` cell by cell onto `φ₀` (or onto constants).
pub fn discretize_against_phi0(
    space: &GluedSpace,
    f: &[f64],
    s: &CellSpectrum,
    mode: DiscretizationMode,
) -> Result<Discretization> {
    let c = &space.cell;
    if f.len() != space.dimension() {
        return Err(Error::DimensionMismatch { expected: space.dimension(), got: f.len() });
    }
    if s.phi0.len() != c.num_nodes() {
        return Err(invalid("spectrum does not belong to the glued cell"));
    }
    let mass = c.mass();
    let vol = c.volume();
    let phi: Vec<f64> = match mode {
        DiscretizationMode::Phi0 => s.phi0.clone(),
        DiscretizationMode::VolumeNormalized => {
            if c.has_dirichlet() {
                return Err(Error::Invariant("volume normalization needs a cell without Dirichlet ends".into()));
            }
            let first = s.phi0[0];
            if s.phi0.iter().any(|x| (x - first).abs() > 1e-8 * first.abs()) {
                return Err(Error::Invariant("first eigenfunction of the cell is not constant".into()));
            }
            vec![1.0; c.num_nodes()]
        }
    };
    let lambda0 = match mode {
        DiscretizationMode::Phi0 => s.lambda0,
        DiscretizationMode::VolumeNormalized => 0.0,
    };
    let scale = match mode {
        DiscretizationMode::Phi0 => 1.0,
        DiscretizationMode::VolumeNormalized => 1.0 / vol,
    };
    let inner = |x: &[f64], y: &[f64]| -> f64 { mass.iter().zip(x).zip(y).map(|((m, a), b)| m * a * b).sum() };
    let mut out = Discretization {
        mode,
        a2: Vec::new(),
        b: Vec::new(),
        c2: Vec::new(),
        g: Vec::new(),
        grad_g2: Vec::new(),
        g_dot_phi0: Vec::new(),
        lambda0,
        energy: space.operator.stiffness.quad_form(f),
        energy_decomposed: 0.0,
        cell_volume: vol,
    };
    for copy in 0..space.num_copies() {
        let fl = space.local(copy, f);
        let a2 = scale * inner(&fl, &fl);
        let b = scale * inner(&fl, &phi);
        let g: Vec<f64> = fl.iter().zip(&phi).map(|(x, p)| x - b * p).collect();
        let c2 = scale * inner(&g, &g);
        let grad = c.stiffness().quad_form(&g);
        out.energy_decomposed += lambda0 * b * b + grad;
        out.g_dot_phi0.push(scale * inner(&g, &phi));
        out.a2.push(a2);
        out.b.push(b);
        out.c2.push(c2);
        out.grad_g2.push(grad);
        out.g.push(g);
    }
    Ok(out)
}
