//! One-dimensional weighted cells and their Neumann spectra.
//!
//! A cell is a metric graph whose edges carry a positive density `w(r)`.
//! The quadratic forms are `∫ f'² w` and `∫ f² w`, discretized with
//! piecewise-linear elements: element stiffness integrates `w` with 3-point
//! Gauss quadrature, and the mass is trapezoid-lumped (diagonal). Junction
//! nodes couple segments by continuity, which gives Kirchhoff conditions.
//! Transition and free ends are natural (Neumann); `Dirichlet` vertices are
//! eliminated.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::eigen::{smallest_eigenpairs, EigenOptions};
use crate::error::{invalid, Error, Result};
use crate::sparse::{CsrMatrix, SparseOperator};
use crate::tube::TubeProfile;

fn one() -> f64 {
    1.0
}

/// Density along a segment, as a function of the distance `r` from the
/// segment's `from` vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum WeightFamily {
    Constant {
        #[serde(default = "one")]
        value: f64,
    },
    /// `e^{rate·r}`.
    Exp { rate: f64 },
    /// `scale · cosh(r − shift)^power`.
    CoshPower {
        power: f64,
        #[serde(default)]
        shift: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `a + b·r`.
    Linear { a: f64, b: f64 },
    /// Equally spaced samples over the segment, linearly interpolated.
    Sampled { values: Vec<f64> },
}

impl WeightFamily {
    pub fn unit() -> Self {
        WeightFamily::Constant { value: 1.0 }
    }

    pub fn eval(&self, r: f64, length: f64) -> f64 {
        match self {
            WeightFamily::Constant { value } => *value,
            WeightFamily::Exp { rate } => (rate * r).exp(),
            WeightFamily::CoshPower { power, shift, scale } => scale * (r - shift).cosh().powf(*power),
            WeightFamily::Linear { a, b } => a + b * r,
            WeightFamily::Sampled { values } => {
                if values.len() == 1 {
                    return values[0];
                }
                let s = (r / length).clamp(0.0, 1.0) * (values.len() - 1) as f64;
                let j = (s.floor() as usize).min(values.len() - 2);
                let t = s - j as f64;
                values[j] + t * (values[j + 1] - values[j])
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            WeightFamily::Constant { value } => *value > 0.0,
            WeightFamily::Exp { rate } => rate.is_finite(),
            WeightFamily::CoshPower { power, shift, scale } => {
                *scale > 0.0 && power.is_finite() && shift.is_finite()
            }
            WeightFamily::Linear { a, b } => a.is_finite() && b.is_finite(),
            WeightFamily::Sampled { values } => !values.is_empty() && values.iter().all(|v| *v > 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Cell(format!("invalid weight parameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexKind {
    /// Junction or free end with natural boundary condition.
    Natural,
    /// Transition zone; natural in the cell problem, identified by gluing.
    Transition,
    /// Far end of an escape leg with `f = 0`.
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub from: usize,
    pub to: usize,
    pub length: f64,
    pub weight: WeightFamily,
}

/// Declarative cell description. Transition ports are numbered in the order
/// their vertices appear in `vertices`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub vertices: Vec<VertexKind>,
    pub segments: Vec<SegmentSpec>,
    pub mesh_step: f64,
    /// Declared permutations of the transition ports.
    #[serde(default)]
    pub symmetry: Vec<Vec<usize>>,
}

fn port_symmetries(v: usize) -> Vec<Vec<usize>> {
    if v < 2 {
        return Vec::new();
    }
    let rotation: Vec<usize> = (0..v).map(|i| (i + 1) % v).collect();
    let mut swap: Vec<usize> = (0..v).collect();
    swap.swap(0, 1);
    if v == 2 {
        vec![swap]
    } else {
        vec![rotation, swap]
    }
}

impl CellSpec {
    /// `[0, length]` with a transition at each end.
    pub fn interval(length: f64, weight: WeightFamily, mesh_step: f64) -> Self {
        Self {
            vertices: vec![VertexKind::Transition, VertexKind::Transition],
            segments: vec![SegmentSpec { from: 0, to: 1, length, weight }],
            mesh_step,
            symmetry: Vec::new(),
        }
    }

    /// `[0, length]` with a natural end at 0 and a Dirichlet end at `length`.
    /// The natural end is a transition so the cell can be glued along it.
    pub fn half_line(length: f64, weight: WeightFamily, mesh_step: f64) -> Self {
        Self {
            vertices: vec![VertexKind::Transition, VertexKind::Dirichlet],
            segments: vec![SegmentSpec { from: 0, to: 1, length, weight }],
            mesh_step,
            symmetry: Vec::new(),
        }
    }

    /// `v` identical legs meeting at a central junction (vertex 0). Leg
    /// coordinates start at the transition end.
    pub fn star(v: usize, leg_length: f64, weight: WeightFamily, mesh_step: f64) -> Self {
        let mut vertices = vec![VertexKind::Natural];
        let mut segments = Vec::with_capacity(v);
        let proto = SegmentSpec { from: 0, to: 0, length: leg_length, weight };
        for k in 0..v {
            vertices.push(VertexKind::Transition);
            segments.push(SegmentSpec { from: k + 1, ..proto.clone() });
        }
        Self { vertices, segments, mesh_step, symmetry: port_symmetries(v) }
    }

    /// Star with one extra escape leg starting at the centre.
    pub fn star_with_escape(
        v: usize,
        leg_length: f64,
        weight: WeightFamily,
        escape_length: f64,
        escape_weight: WeightFamily,
        dirichlet_end: bool,
        mesh_step: f64,
    ) -> Self {
        let mut spec = Self::star(v, leg_length, weight, mesh_step);
        spec.vertices.push(if dirichlet_end { VertexKind::Dirichlet } else { VertexKind::Natural });
        spec.segments.push(SegmentSpec {
            from: 0,
            to: v + 1,
            length: escape_length,
            weight: escape_weight,
        });
        spec
    }

    /// Star of `v` unit-weight legs of length 1/2 plus a Dirichlet escape
    /// leg of length `(2/π)·arctan(1/v)`. The first eigenvalue is `π²/4`
    /// for every `v`.
    pub fn balanced_comb(v: usize, mesh_step: f64) -> Self {
        let escape = 2.0 / PI * (1.0 / v as f64).atan();
        Self::star_with_escape(v, 0.5, WeightFamily::unit(), escape, WeightFamily::unit(), true, mesh_step)
    }

    pub fn transition_count(&self) -> usize {
        self.vertices.iter().filter(|k| **k == VertexKind::Transition).count()
    }

    pub fn has_dirichlet(&self) -> bool {
        self.vertices.contains(&VertexKind::Dirichlet)
    }
}

/// Named cell constructions, as used in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellTemplate {
    Interval {
        length: f64,
        #[serde(default = "WeightFamily::unit")]
        weight: WeightFamily,
        mesh_step: f64,
    },
    HalfLine {
        length: f64,
        weight: WeightFamily,
        mesh_step: f64,
    },
    Star {
        valence: usize,
        leg_length: f64,
        #[serde(default = "WeightFamily::unit")]
        weight: WeightFamily,
        mesh_step: f64,
    },
    StarWithEscape {
        valence: usize,
        leg_length: f64,
        #[serde(default = "WeightFamily::unit")]
        weight: WeightFamily,
        escape_length: f64,
        #[serde(default = "WeightFamily::unit")]
        escape_weight: WeightFamily,
        #[serde(default = "yes")]
        dirichlet_end: bool,
        mesh_step: f64,
    },
    BalancedComb {
        valence: usize,
        mesh_step: f64,
    },
    Custom(CellSpec),
}

fn yes() -> bool {
    true
}

impl CellTemplate {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_spec(&self) -> CellSpec {
        match self.clone() {
            CellTemplate::Interval { length, weight, mesh_step } => CellSpec::interval(length, weight, mesh_step),
            CellTemplate::HalfLine { length, weight, mesh_step } => CellSpec::half_line(length, weight, mesh_step),
            CellTemplate::Star { valence, leg_length, weight, mesh_step } => {
                CellSpec::star(valence, leg_length, weight, mesh_step)
            }
            CellTemplate::StarWithEscape {
                valence,
                leg_length,
                weight,
                escape_length,
                escape_weight,
                dirichlet_end,
                mesh_step,
            } => CellSpec::star_with_escape(
                valence,
                leg_length,
                weight,
                escape_length,
                escape_weight,
                dirichlet_end,
                mesh_step,
            ),
            CellTemplate::BalancedComb { valence, mesh_step } => CellSpec::balanced_comb(valence, mesh_step),
            CellTemplate::Custom(spec) => spec,
        }
    }
}

/// Position of a mesh node: segment index and distance from its `from` end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodePosition {
    pub segment: usize,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub a: usize,
    pub b: usize,
    pub segment: usize,
    pub length: f64,
}

/// Discretized cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMesh {
    spec: CellSpec,
    positions: Vec<NodePosition>,
    elements: Vec<Element>,
    vertex_nodes: Vec<usize>,
    transition_nodes: Vec<usize>,
    dirichlet: Vec<bool>,
    free_nodes: Vec<usize>,
    stiffness: CsrMatrix,
    mass: Vec<f64>,
}

/// 3-point Gauss nodes and weights on `[-1, 1]`.
const GAUSS: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

pub fn build_cell(spec: &CellSpec) -> Result<CellMesh> {
    let nv = spec.vertices.len();
    if !(spec.mesh_step > 0.0) {
        return Err(Error::Cell("mesh step must be positive".into()));
    }
    if spec.transition_count() == 0 {
        return Err(Error::Cell("a cell needs at least one transition vertex".into()));
    }
    if spec.segments.is_empty() {
        return Err(Error::Cell("a cell needs at least one segment".into()));
    }
    let mut vdeg = vec![0usize; nv];
    for (s, seg) in spec.segments.iter().enumerate() {
        if seg.from >= nv || seg.to >= nv || seg.from == seg.to {
            return Err(Error::Cell(format!("segment {s} has invalid endpoints")));
        }
        if !(seg.length > 0.0) {
            return Err(Error::Cell(format!("segment {s} has nonpositive length")));
        }
        seg.weight.validate()?;
        vdeg[seg.from] += 1;
        vdeg[seg.to] += 1;
    }
    for (v, kind) in spec.vertices.iter().enumerate() {
        if vdeg[v] == 0 {
            return Err(Error::Cell(format!("vertex {v} is isolated")));
        }
        if *kind == VertexKind::Transition && vdeg[v] != 1 {
            return Err(Error::Cell(format!("transition vertex {v} has leg-degree {}", vdeg[v])));
        }
    }
    // Connectivity of the vertex graph.
    let mut seen = vec![false; nv];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for seg in &spec.segments {
            for (x, y) in [(seg.from, seg.to), (seg.to, seg.from)] {
                if x == v && !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Cell("cell is not connected".into()));
    }

    let mut positions: Vec<NodePosition> = Vec::new();
    let mut vertex_nodes = vec![usize::MAX; nv];
    let mut elements = Vec::new();
    let mut weight_at = Vec::new();
    let mut node_for_vertex = |v: usize, seg: usize, r: f64, positions: &mut Vec<NodePosition>, wa: &mut Vec<f64>| {
        if vertex_nodes[v] == usize::MAX {
            vertex_nodes[v] = positions.len();
            positions.push(NodePosition { segment: seg, r });
            wa.push(0.0);
        }
        vertex_nodes[v]
    };
    let mut trip = Vec::new();
    let mut mass_contrib: Vec<(usize, f64)> = Vec::new();
    for (s, seg) in spec.segments.iter().enumerate() {
        let m = ((seg.length / spec.mesh_step) - 1e-9).ceil().max(1.0) as usize;
        let h = seg.length / m as f64;
        let start = node_for_vertex(seg.from, s, 0.0, &mut positions, &mut weight_at);
        let mut ids = vec![start];
        for k in 1..m {
            ids.push(positions.len());
            positions.push(NodePosition { segment: s, r: h * k as f64 });
            weight_at.push(0.0);
        }
        ids.push(node_for_vertex(seg.to, s, seg.length, &mut positions, &mut weight_at));
        for k in 0..m {
            let (r0, r1) = (h * k as f64, if k + 1 == m { seg.length } else { h * (k + 1) as f64 });
            let mid = 0.5 * (r0 + r1);
            let integral: f64 = GAUSS
                .iter()
                .map(|(x, gw)| gw * seg.weight.eval(mid + 0.5 * h * x, seg.length))
                .sum::<f64>()
                * 0.5
                * h;
            let w0 = seg.weight.eval(r0, seg.length);
            let w1 = seg.weight.eval(r1, seg.length);
            if !(w0 > 0.0 && w1 > 0.0 && integral > 0.0) || !w0.is_finite() || !w1.is_finite() {
                return Err(Error::Cell(format!("segment {s} weight is not positive and finite near r = {r0}")));
            }
            let sk = integral / (h * h);
            let (a, b) = (ids[k], ids[k + 1]);
            trip.extend([(a, a, sk), (b, b, sk), (a, b, -sk), (b, a, -sk)]);
            mass_contrib.push((a, 0.5 * h * w0));
            mass_contrib.push((b, 0.5 * h * w1));
            elements.push(Element { a, b, segment: s, length: h });
        }
    }
    let n = positions.len();
    let stiffness = CsrMatrix::from_triplets(n, n, &trip)?;
    let mut mass = vec![0.0; n];
    for (i, m) in mass_contrib {
        mass[i] += m;
    }
    let transition_nodes: Vec<usize> = spec
        .vertices
        .iter()
        .enumerate()
        .filter(|(_, k)| **k == VertexKind::Transition)
        .map(|(v, _)| vertex_nodes[v])
        .collect();
    let mut dirichlet = vec![false; n];
    for (v, k) in spec.vertices.iter().enumerate() {
        if *k == VertexKind::Dirichlet {
            dirichlet[vertex_nodes[v]] = true;
        }
    }
    let free_nodes: Vec<usize> = (0..n).filter(|&i| !dirichlet[i]).collect();
    if free_nodes.is_empty() {
        return Err(Error::Cell("every node is Dirichlet".into()));
    }
    let mesh = CellMesh {
        spec: spec.clone(),
        positions,
        elements,
        vertex_nodes,
        transition_nodes,
        dirichlet,
        free_nodes,
        stiffness,
        mass,
    };
    mesh.check_symmetry()?;
    Ok(mesh)
}

/// Builds a cell that must carry at least one Dirichlet escape end, so that
/// its first eigenvalue is positive.
pub fn cell_with_positive_lambda0(spec: &CellSpec) -> Result<CellMesh> {
    if !spec.has_dirichlet() {
        return Err(Error::Cell("an escape leg with a Dirichlet far end is required".into()));
    }
    build_cell(spec)
}

impl CellMesh {
    pub fn spec(&self) -> &CellSpec {
        &self.spec
    }

    pub fn num_nodes(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[NodePosition] {
        &self.positions
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    /// Number of transition ports `v`.
    pub fn valence(&self) -> usize {
        self.transition_nodes.len()
    }

    pub fn transition_nodes(&self) -> &[usize] {
        &self.transition_nodes
    }

    pub fn vertex_node(&self, v: usize) -> usize {
        self.vertex_nodes[v]
    }

    pub fn is_dirichlet(&self, node: usize) -> bool {
        self.dirichlet[node]
    }

    pub fn has_dirichlet(&self) -> bool {
        self.dirichlet.iter().any(|&d| d)
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free_nodes
    }

    /// Stiffness over all nodes, Dirichlet nodes included.
    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    /// Lumped mass over all nodes.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn volume(&self) -> f64 {
        self.free_nodes.iter().map(|&i| self.mass[i]).sum()
    }

    /// Weight `w` at a node.
    pub fn weight_at(&self, node: usize) -> f64 {
        let p = self.positions[node];
        let seg = &self.spec.segments[p.segment];
        seg.weight.eval(p.r, seg.length)
    }

    /// Cell problem restricted to the non-Dirichlet nodes.
    pub fn operator(&self) -> Result<SparseOperator> {
        let k = self.stiffness.principal_submatrix(&self.free_nodes);
        let m: Vec<f64> = self.free_nodes.iter().map(|&i| self.mass[i]).collect();
        SparseOperator::new(k, CsrMatrix::diagonal(&m))
    }

    /// Scatters a vector over the free nodes to all nodes (zero at Dirichlet
    /// nodes).
    pub fn extend_free(&self, free: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_nodes()];
        for (k, &i) in self.free_nodes.iter().enumerate() {
            out[i] = free[k];
        }
        out
    }

    /// Metric distance from a set of nodes to every node.
    pub fn distances_from(&self, sources: &[usize]) -> Vec<f64> {
        #[derive(PartialEq)]
        struct Item(f64, usize);
        impl Eq for Item {}
        impl PartialOrd for Item {
            fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
                Some(self.cmp(o))
            }
        }
        impl Ord for Item {
            fn cmp(&self, o: &Self) -> Ordering {
                o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
            }
        }
        let n = self.num_nodes();
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for e in &self.elements {
            adj[e.a].push((e.b, e.length));
            adj[e.b].push((e.a, e.length));
        }
        let mut dist = vec![f64::INFINITY; n];
        let mut heap = BinaryHeap::new();
        for &s in sources {
            dist[s] = 0.0;
            heap.push(Item(0.0, s));
        }
        while let Some(Item(d, v)) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for &(w, l) in &adj[v] {
                if d + l < dist[w] {
                    dist[w] = d + l;
                    heap.push(Item(d + l, w));
                }
            }
        }
        dist
    }

    /// Smallest metric distance between two distinct transition nodes
    /// (infinite for a single transition).
    pub fn min_transition_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (k, &t) in self.transition_nodes.iter().enumerate() {
            let d = self.distances_from(&[t]);
            for &u in &self.transition_nodes[k + 1..] {
                best = best.min(d[u]);
            }
        }
        best
    }

    fn transition_segment(&self, port: usize) -> Result<(usize, bool)> {
        let node = *self
            .transition_nodes
            .get(port)
            .ok_or_else(|| invalid(format!("transition port {port} out of range")))?;
        let v = self.vertex_nodes.iter().position(|&x| x == node).expect("transition vertex");
        let s = self
            .spec
            .segments
            .iter()
            .position(|seg| seg.from == v || seg.to == v)
            .expect("transition vertex has a leg");
        Ok((s, self.spec.segments[s].from == v))
    }

    /// Tube data of the transition `port`: `θ^{n−1}(r) = w(r)/w(0)` along the
    /// leg, with `r` measured from the transition, `Vol(α) = w(0)` and the
    /// one-sided volume `Vol(T⁺) = ∫₀^R w`.
    pub fn transition_tube(&self, port: usize, width: f64, n: usize, nr: usize) -> Result<TransitionTube> {
        let (s, forward) = self.transition_segment(port)?;
        let seg = &self.spec.segments[s];
        if !(width > 0.0) || width > seg.length * (1.0 + 1e-12) {
            return Err(Error::Tube(format!(
                "tube width {width} does not fit in transition leg of length {}",
                seg.length
            )));
        }
        if nr < 2 || n < 2 {
            return Err(invalid("tube sampling needs nr ≥ 2 and n ≥ 2"));
        }
        let w = |r: f64| {
            let t = if forward { r } else { seg.length - r };
            seg.weight.eval(t, seg.length)
        };
        let w0 = w(0.0);
        let e = 1.0 / (n - 1) as f64;
        let profile = TubeProfile::from_fn(n, width, w0, 1, nr, |_, r| if r == 0.0 { 1.0 } else { (w(r) / w0).powf(e) })?;
        let h = width / (nr - 1) as f64;
        let samples: Vec<f64> = (0..nr).map(|j| w(h * j as f64)).collect();
        let vol_plus = h * (samples.iter().sum::<f64>() - 0.5 * (samples[0] + samples[nr - 1]));
        Ok(TransitionTube { port, profile, vol_tube_plus: vol_plus })
    }

    /// Verifies that declared symmetric legs are bit-identical.
    fn check_symmetry(&self) -> Result<()> {
        let v = self.valence();
        for perm in &self.spec.symmetry {
            let mut seen = vec![false; v];
            if perm.len() != v || perm.iter().any(|&p| p >= v || std::mem::replace(&mut seen[p], true)) {
                return Err(Error::Cell(format!("symmetry {perm:?} is not a permutation of the {v} ports")));
            }
            for (a, &b) in perm.iter().enumerate() {
                let (sa, fa) = self.transition_segment(a)?;
                let (sb, fb) = self.transition_segment(b)?;
                let (x, y) = (&self.spec.segments[sa], &self.spec.segments[sb]);
                if fa != fb || x.length.to_bits() != y.length.to_bits() || x.weight != y.weight {
                    return Err(Error::Cell(format!("legs of ports {a} and {b} are declared symmetric but differ")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionTube {
    pub port: usize,
    pub profile: TubeProfile,
    pub vol_tube_plus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpectrum {
    pub lambda0: f64,
    pub lambda1: f64,
    pub eta: f64,
    /// First eigenfunction on all nodes (zero at Dirichlet nodes), unit
    /// weighted norm, positive.
    pub phi0: Vec<f64>,
    pub phi1: Vec<f64>,
    pub phi0_at_transitions: Vec<f64>,
    pub values: Vec<f64>,
    pub max_residual: f64,
}

/// Smallest `k ≥ 2` eigenpairs of the cell problem.
pub fn neumann_spectrum(c: &CellMesh, k: usize, tol: f64) -> Result<CellSpectrum> {
    if k < 2 {
        return Err(invalid("the cell spectrum needs at least two eigenpairs"));
    }
    let op = c.operator()?;
    if k > op.dimension() {
        return Err(Error::Cell(format!("cell has only {} free nodes", op.dimension())));
    }
    let opts = EigenOptions { tol, ..EigenOptions::with_count(k) };
    let sol = smallest_eigenpairs(&op, &opts)?.require_converged()?;
    let values = sol.values();
    let (lambda0, lambda1) = (values[0], values[1]);
    let eta = lambda1 - lambda0;
    if !(eta > tol.max(1e-12) * (1.0 + lambda1.abs())) {
        return Err(Error::Cell(format!("no usable spectral gap: η = {eta:e}")));
    }
    let mut phi0 = c.extend_free(&sol.pairs[0].vector);
    let s: f64 = phi0.iter().sum();
    if s < 0.0 {
        phi0.iter_mut().for_each(|x| *x = -*x);
    }
    let peak = phi0.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    // Heavily weighted legs make φ₀ legitimately tiny, so only a sign change
    // beyond round-off counts.
    for &i in c.free_nodes() {
        if !(phi0[i] >= -1e-10 * peak) {
            return Err(Error::Invariant(format!("first eigenfunction is not positive at node {i} ({})", phi0[i])));
        }
    }
    let phi1 = c.extend_free(&sol.pairs[1].vector);
    let phi0_at_transitions = c.transition_nodes().iter().map(|&t| phi0[t]).collect();
    Ok(CellSpectrum {
        lambda0,
        lambda1,
        eta,
        phi0,
        phi1,
        phi0_at_transitions,
        values,
        max_residual: sol.max_residual,
    })
}

impl CellSpectrum {
    /// `Σ m f g` over the cell nodes.
    pub fn inner(c: &CellMesh, f: &[f64], g: &[f64]) -> f64 {
        c.mass().iter().zip(f).zip(g).map(|((m, a), b)| m * a * b).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecollementReport {
    pub ok: bool,
    /// `(port a, port b, |φ₀(a) − φ₀(b)|)` for every pair of transitions.
    pub deviations: Vec<(usize, usize, f64)>,
    pub max_deviation: f64,
}

/// Checks that `φ₀` agrees at every pair of transitions, which covers every
/// symmetry and every identification a gluing can make.
pub fn check_recollement(c: &CellMesh, s: &CellSpectrum, tol: f64) -> RecollementReport {
    let t = &s.phi0_at_transitions;
    let mut deviations = Vec::new();
    for a in 0..t.len() {
        for b in a + 1..t.len() {
            deviations.push((a, b, (t[a] - t[b]).abs()));
        }
    }
    let _ = c;
    let max_deviation = deviations.iter().fold(0.0f64, |m, d| m.max(d.2));
    RecollementReport { ok: max_deviation <= tol, deviations, max_deviation }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationStudy {
    pub lengths: Vec<f64>,
    pub lambda0: Vec<f64>,
    /// `|λ₀(L_last) − λ₀(L_prev)|`.
    pub last_change: f64,
    pub converged: bool,
}

/// First eigenvalue as a function of a truncation length.
pub fn truncation_study(
    make: impl Fn(f64) -> CellSpec,
    lengths: &[f64],
    tol: f64,
    solver_tol: f64,
) -> Result<TruncationStudy> {
    if lengths.len() < 2 {
        return Err(invalid("a truncation study needs at least two lengths"));
    }
    let mut lambda0 = Vec::with_capacity(lengths.len());
    for &l in lengths {
        let mesh = build_cell(&make(l))?;
        lambda0.push(neumann_spectrum(&mesh, 2, solver_tol)?.lambda0);
    }
    let n = lambda0.len();
    let last_change = (lambda0[n - 1] - lambda0[n - 2]).abs();
    Ok(TruncationStudy { lengths: lengths.to_vec(), lambda0, last_change, converged: last_change < tol })
}
