//! Finite balls of infinite graphs, the combinatorial Laplacian, and
//! estimates of μ₀(G) and the Cheeger constant h(G).
//!
//! A ball carries an explicit frontier layer. Functions "with compact
//! support" are those vanishing on the frontier, and the infinite-graph
//! quantities are approached through growing balls.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::eigen::{smallest_eigenpairs, EigenOptions};
use crate::error::{invalid, Error, Result};
use crate::extrapolate::{inverse_square_fit, TailEstimate};
use crate::sparse::{CsrMatrix, SparseOperator};

/// Where a ball came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FamilyTag {
    Lattice { dimension: usize },
    Tree { valence: usize },
    EdgeList,
    SingleVertex,
}

/// One graph edge together with the port (transition index) it occupies at
/// each endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub port_a: usize,
    pub port_b: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphBall {
    labels: Vec<String>,
    edges: Vec<Edge>,
    neighbors: Vec<Vec<usize>>,
    valence: usize,
    interior: Vec<bool>,
    family: FamilyTag,
    radius: usize,
}

impl GraphBall {
    /// Assembles and validates a ball. Edge ports must be below `valence`
    /// and distinct at each vertex.
    pub fn from_parts(
        labels: Vec<String>,
        edges: Vec<Edge>,
        valence: usize,
        interior: Vec<bool>,
        family: FamilyTag,
        radius: usize,
    ) -> Result<Self> {
        let n = labels.len();
        if interior.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: interior.len() });
        }
        let mut neighbors = vec![Vec::new(); n];
        let mut used_ports: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        let mut seen = BTreeSet::new();
        for e in &edges {
            if e.a >= n || e.b >= n {
                return Err(invalid("edge endpoint out of range"));
            }
            if e.a == e.b {
                return Err(invalid(format!("self-loop at {}", labels[e.a])));
            }
            if !seen.insert((e.a.min(e.b), e.a.max(e.b))) {
                return Err(invalid(format!("duplicate edge {}-{}", labels[e.a], labels[e.b])));
            }
            for (v, p) in [(e.a, e.port_a), (e.b, e.port_b)] {
                if p >= valence.max(1) || !used_ports[v].insert(p) {
                    return Err(invalid(format!("port {p} misused at {}", labels[v])));
                }
            }
            neighbors[e.a].push(e.b);
            neighbors[e.b].push(e.a);
        }
        for nb in neighbors.iter_mut() {
            nb.sort_unstable();
        }
        for v in 0..n {
            if interior[v] && neighbors[v].len() != valence {
                return Err(invalid(format!(
                    "interior vertex {} has degree {} but valence is {valence}",
                    labels[v],
                    neighbors[v].len()
                )));
            }
            if neighbors[v].len() > valence {
                return Err(invalid(format!("vertex {} exceeds the valence", labels[v])));
            }
        }
        Ok(Self { labels, edges, neighbors, valence, interior, family, radius })
    }

    /// A single interior vertex with no edges (valence 0).
    pub fn single_vertex() -> Self {
        Self::from_parts(vec!["o".into()], Vec::new(), 0, vec![true], FamilyTag::SingleVertex, 0)
            .expect("valid by construction")
    }

    pub fn num_vertices(&self) -> usize {
        self.labels.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    pub fn valence(&self) -> usize {
        self.valence
    }

    pub fn is_interior(&self, v: usize) -> bool {
        self.interior[v]
    }

    pub fn interior_mask(&self) -> &[bool] {
        &self.interior
    }

    pub fn interior_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices()).filter(|&v| self.interior[v]).collect()
    }

    pub fn frontier_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices()).filter(|&v| !self.interior[v]).collect()
    }

    pub fn label(&self, v: usize) -> &str {
        &self.labels[v]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn family(&self) -> &FamilyTag {
        &self.family
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Graph distance from `source` to every vertex (`usize::MAX` if
    /// unreachable).
    pub fn distances_from(&self, sources: &[usize]) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.num_vertices()];
        let mut queue = std::collections::VecDeque::new();
        for &s in sources {
            dist[s] = 0;
            queue.push_back(s);
        }
        while let Some(u) = queue.pop_front() {
            for &w in &self.neighbors[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }
}

/// Ball of radius `radius` in ℤ or ℤ² (graph metric).
///
/// Ports: in ℤ, 0 points to `-1` and 1 to `+1`; in ℤ², 0/1 are `-x`/`+x`
/// and 2/3 are `-y`/`+y`.
pub fn build_lattice(dimension: usize, radius: usize) -> Result<GraphBall> {
    if radius < 1 {
        return Err(invalid("lattice radius must be at least 1"));
    }
    let r = radius as i64;
    let mut coords: Vec<(i64, i64)> = Vec::new();
    match dimension {
        1 => coords.extend((-r..=r).map(|x| (x, 0))),
        2 => {
            for x in -r..=r {
                let span = r - x.abs();
                coords.extend((-span..=span).map(|y| (x, y)));
            }
        }
        _ => return Err(invalid(format!("lattice dimension {dimension} is not 1 or 2"))),
    }
    let index: BTreeMap<(i64, i64), usize> =
        coords.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut edges = Vec::new();
    for (i, &(x, y)) in coords.iter().enumerate() {
        if let Some(&j) = index.get(&(x + 1, y)) {
            edges.push(Edge { a: i, b: j, port_a: 1, port_b: 0 });
        }
        if dimension == 2 {
            if let Some(&j) = index.get(&(x, y + 1)) {
                edges.push(Edge { a: i, b: j, port_a: 3, port_b: 2 });
            }
        }
    }
    let labels = coords
        .iter()
        .map(|&(x, y)| if dimension == 1 { x.to_string() } else { format!("({x},{y})") })
        .collect();
    let interior = coords.iter().map(|&(x, y)| x.abs() + y.abs() < r).collect();
    GraphBall::from_parts(labels, edges, 2 * dimension, interior, FamilyTag::Lattice { dimension }, radius)
}

/// Ball of radius `depth` around the root of the `valence`-regular tree.
///
/// The root uses ports `0..v`; every other vertex reaches its parent through
/// port 0 and its children through ports `1..v`.
pub fn build_regular_tree(valence: usize, depth: usize) -> Result<GraphBall> {
    if valence < 3 {
        return Err(invalid("regular trees need valence at least 3 (use the lattice for v = 2)"));
    }
    if depth < 1 {
        return Err(invalid("tree depth must be at least 1"));
    }
    let mut labels = vec!["r".to_string()];
    let mut level = vec![0usize];
    let mut edges = Vec::new();
    let mut interior = vec![true];
    for d in 1..=depth {
        let mut next = Vec::new();
        for &parent in &level {
            let first = if parent == 0 { 0 } else { 1 };
            for port in first..valence {
                let child = labels.len();
                labels.push(format!("{}.{}", labels[parent], port));
                interior.push(d < depth);
                edges.push(Edge { a: parent, b: child, port_a: port, port_b: 0 });
                next.push(child);
            }
        }
        level = next;
    }
    GraphBall::from_parts(labels, edges, valence, interior, FamilyTag::Tree { valence }, depth)
}

/// Parses the edge-list text format.
///
/// ```text
/// # valence=3 frontier=x,y
/// a-b
/// b-c
/// ```
///
/// Blank lines and other `#` lines are ignored. Without a header the valence
/// is the maximum degree and every vertex is interior. Ports are assigned in
/// order of appearance at each vertex.
pub fn load_edge_list(text: &str) -> Result<GraphBall> {
    let mut valence: Option<usize> = None;
    let mut frontier: Vec<(String, usize)> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut first_line: Vec<usize> = Vec::new();
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    let mut seen: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if rest.starts_with("valence=") || rest.starts_with("frontier=") {
                for token in rest.split_whitespace() {
                    if let Some(v) = token.strip_prefix("valence=") {
                        let parsed = v.parse::<usize>().map_err(|_| Error::EdgeList {
                            line: line_no,
                            message: format!("bad valence '{v}'"),
                        })?;
                        valence = Some(parsed);
                    } else if let Some(f) = token.strip_prefix("frontier=") {
                        frontier.extend(
                            f.split(',')
                                .map(str::trim)
                                .filter(|s| !s.is_empty())
                                .map(|s| (s.to_string(), line_no)),
                        );
                    } else {
                        return Err(Error::EdgeList {
                            line: line_no,
                            message: format!("unknown header token '{token}'"),
                        });
                    }
                }
            }
            continue;
        }
        let (a, b) = line.split_once('-').ok_or_else(|| Error::EdgeList {
            line: line_no,
            message: format!("expected 'label-label', found '{line}'"),
        })?;
        let (a, b) = (a.trim(), b.trim());
        if a.is_empty() || b.is_empty() || b.contains('-') {
            return Err(Error::EdgeList {
                line: line_no,
                message: format!("malformed edge '{line}'"),
            });
        }
        if a == b {
            return Err(Error::EdgeList { line: line_no, message: format!("self-loop at '{a}'") });
        }
        let mut id = |s: &str| -> usize {
            *index.entry(s.to_string()).or_insert_with(|| {
                labels.push(s.to_string());
                first_line.push(line_no);
                labels.len() - 1
            })
        };
        let (ia, ib) = (id(a), id(b));
        let key = (ia.min(ib), ia.max(ib));
        if let Some(prev) = seen.insert(key, line_no) {
            return Err(Error::EdgeList {
                line: line_no,
                message: format!("edge {a}-{b} duplicates line {prev}"),
            });
        }
        pairs.push((ia, ib, line_no));
    }
    let n = labels.len();
    let mut degree = vec![0usize; n];
    for &(a, b, _) in &pairs {
        degree[a] += 1;
        degree[b] += 1;
    }
    let valence = valence.unwrap_or_else(|| degree.iter().copied().max().unwrap_or(0));
    let mut interior = vec![true; n];
    for (f, line) in &frontier {
        match index.get(f) {
            Some(&i) => interior[i] = false,
            None => {
                return Err(Error::EdgeList {
                    line: *line,
                    message: format!("frontier label '{f}' does not occur in any edge"),
                })
            }
        }
    }
    for v in 0..n {
        if (interior[v] && degree[v] != valence) || degree[v] > valence {
            let line = pairs
                .iter()
                .filter(|&&(a, b, _)| a == v || b == v)
                .map(|&(_, _, l)| l)
                .next_back()
                .unwrap_or(first_line[v]);
            return Err(Error::EdgeList {
                line,
                message: format!(
                    "vertex '{}' has degree {} but the declared valence is {valence}",
                    labels[v], degree[v]
                ),
            });
        }
    }
    let mut next_port = vec![0usize; n];
    let edges = pairs
        .iter()
        .map(|&(a, b, _)| {
            let e = Edge { a, b, port_a: next_port[a], port_b: next_port[b] };
            next_port[a] += 1;
            next_port[b] += 1;
            e
        })
        .collect();
    GraphBall::from_parts(labels, edges, valence, interior, FamilyTag::EdgeList, 0)
}

/// Applies `Δ_G f(i) = Σ_{j∼i} (f(i) − f(j))`.
///
/// With `dirichlet` set, `f` must vanish on the frontier, neighbours outside
/// the ball count as zero (each interior vertex has `v` neighbours), and the
/// returned vector is zero on frontier vertices.
pub fn combinatorial_laplacian_apply(g: &GraphBall, f: &[f64], dirichlet: bool) -> Result<Vec<f64>> {
    let n = g.num_vertices();
    if f.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: f.len() });
    }
    if dirichlet {
        if let Some(v) = (0..n).find(|&v| !g.is_interior(v) && f[v] != 0.0) {
            return Err(invalid(format!("f is nonzero on frontier vertex {}", g.label(v))));
        }
    }
    let mut out = vec![0.0; n];
    for i in 0..n {
        if dirichlet && !g.is_interior(i) {
            continue;
        }
        let mut s = 0.0;
        for &j in g.neighbors(i) {
            s += f[i] - f[j];
        }
        if dirichlet {
            s += (g.valence() - g.degree(i)) as f64 * f[i];
        }
        out[i] = s;
    }
    Ok(out)
}

/// Combinatorial Rayleigh quotient over unordered edges, for `f` vanishing
/// on the frontier.
pub fn rayleigh_quotient_comb(g: &GraphBall, f: &[f64]) -> Result<f64> {
    let n = g.num_vertices();
    if f.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: f.len() });
    }
    if let Some(v) = (0..n).find(|&v| !g.is_interior(v) && f[v] != 0.0) {
        return Err(invalid(format!("f is nonzero on frontier vertex {}", g.label(v))));
    }
    let den: f64 = f.iter().map(|x| x * x).sum();
    if den == 0.0 {
        return Err(invalid("the zero function has no Rayleigh quotient"));
    }
    let mut num = 0.0;
    for e in g.edges() {
        let d = f[e.a] - f[e.b];
        num += d * d;
    }
    for v in 0..n {
        num += (g.valence() - g.degree(v)) as f64 * f[v] * f[v];
    }
    Ok(num / den)
}

/// Dirichlet-on-frontier Laplacian restricted to interior vertices, together
/// with the interior vertex list giving its row order.
pub fn dirichlet_laplacian(g: &GraphBall) -> Result<(CsrMatrix, Vec<usize>)> {
    let interior = g.interior_vertices();
    if interior.is_empty() {
        return Err(Error::NoInterior);
    }
    let mut pos = vec![usize::MAX; g.num_vertices()];
    for (k, &v) in interior.iter().enumerate() {
        pos[v] = k;
    }
    let mut t = Vec::new();
    for (k, &v) in interior.iter().enumerate() {
        t.push((k, k, g.valence() as f64));
        for &w in g.neighbors(v) {
            if pos[w] != usize::MAX {
                t.push((k, pos[w], -1.0));
            }
        }
    }
    let m = interior.len();
    Ok((CsrMatrix::from_triplets(m, m, &t)?, interior))
}

/// Smallest Dirichlet eigenvalue of a ball and its positive eigenvector
/// (indexed like [`GraphBall::interior_vertices`]).
pub fn dirichlet_ground_state(g: &GraphBall, opts: &EigenOptions) -> Result<(f64, Vec<f64>, Vec<usize>)> {
    let (lap, interior) = dirichlet_laplacian(g)?;
    let m = interior.len();
    let op = SparseOperator::new(lap, CsrMatrix::identity(m))?;
    let sol = smallest_eigenpairs(&op, &EigenOptions { count: 1, ..opts.clone() })?.require_converged()?;
    let mut vec = sol.pairs[0].vector.clone();
    if vec.iter().sum::<f64>() < 0.0 {
        vec.iter_mut().for_each(|x| *x = -*x);
    }
    Ok((sol.pairs[0].value, vec, interior))
}

/// Vertex-boundary ratio `#∂F / #F` for `F` inside the interior.
///
/// A vertex of `F` is in `∂F` when some neighbour (inside or outside the
/// ball) is not in `F`.
pub fn folner_ratio(g: &GraphBall, subset: &[usize]) -> Result<f64> {
    if subset.is_empty() {
        return Err(invalid("empty subset"));
    }
    let mut inside = vec![false; g.num_vertices()];
    for &v in subset {
        if v >= g.num_vertices() {
            return Err(invalid("subset vertex out of range"));
        }
        if !g.is_interior(v) {
            return Err(invalid(format!("subset vertex {} is not interior", g.label(v))));
        }
        inside[v] = true;
    }
    let members: Vec<usize> = (0..g.num_vertices()).filter(|&v| inside[v]).collect();
    let boundary = members.iter().filter(|&&v| is_boundary(g, &inside, v)).count();
    Ok(boundary as f64 / members.len() as f64)
}

fn is_boundary(g: &GraphBall, inside: &[bool], v: usize) -> bool {
    g.degree(v) < g.valence() || g.neighbors(v).iter().any(|&w| !inside[w])
}

/// Exact minimum of `#∂F/#F` over connected sets `F` of interior vertices
/// with `|F| ≤ max_subset_size` (at most 20).
pub fn cheeger_bruteforce(g: &GraphBall, max_subset_size: usize) -> Result<f64> {
    if max_subset_size == 0 || max_subset_size > 20 {
        return Err(invalid("max_subset_size must lie in 1..=20"));
    }
    let interior = g.interior_vertices();
    if interior.is_empty() {
        return Err(Error::NoInterior);
    }
    let mut search = Enumerator {
        g,
        max: max_subset_size,
        inside: vec![false; g.num_vertices()],
        blocked: vec![0u32; g.num_vertices()],
        best: f64::INFINITY,
    };
    for &v in &interior {
        let mut set = vec![v];
        search.inside[v] = true;
        search.block_around(v, true);
        let ext: Vec<usize> =
            g.neighbors(v).iter().copied().filter(|&w| w > v && g.is_interior(w)).collect();
        search.evaluate(&set);
        search.extend(&mut set, ext, v);
        search.block_around(v, false);
        search.inside[v] = false;
    }
    Ok(search.best)
}

/// Enumerates connected vertex sets once each, anchored at their smallest
/// vertex (the classical extension-set scheme).
struct Enumerator<'a> {
    g: &'a GraphBall,
    max: usize,
    inside: Vec<bool>,
    /// Number of set members that are equal or adjacent to each vertex.
    blocked: Vec<u32>,
    best: f64,
}

impl Enumerator<'_> {
    fn block_around(&mut self, v: usize, add: bool) {
        let delta = |b: &mut u32| if add { *b += 1 } else { *b -= 1 };
        delta(&mut self.blocked[v]);
        for &w in self.g.neighbors(v) {
            delta(&mut self.blocked[w]);
        }
    }

    fn evaluate(&mut self, set: &[usize]) {
        let boundary = set.iter().filter(|&&v| is_boundary(self.g, &self.inside, v)).count();
        let r = boundary as f64 / set.len() as f64;
        if r < self.best {
            self.best = r;
        }
    }

    fn extend(&mut self, set: &mut Vec<usize>, mut ext: Vec<usize>, anchor: usize) {
        if set.len() == self.max {
            return;
        }
        while let Some(w) = ext.pop() {
            // Exclusive neighbours of w: not yet in, and not adjacent to the set.
            let mut next = ext.clone();
            for &u in self.g.neighbors(w) {
                if u > anchor && self.g.is_interior(u) && self.blocked[u] == 0 {
                    next.push(u);
                }
            }
            set.push(w);
            self.inside[w] = true;
            self.block_around(w, true);
            self.evaluate(set);
            self.extend(set, next, anchor);
            self.block_around(w, false);
            self.inside[w] = false;
            set.pop();
        }
    }
}

/// Result of a spectral sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCut {
    pub value: f64,
    pub cut_set: Vec<usize>,
}

/// Minimum of `#∂F/#F` over prefixes of the interior ordered by decreasing
/// first Dirichlet eigenvector.
pub fn cheeger_sweep(g: &GraphBall) -> Result<SweepCut> {
    let (_, vec, interior) = dirichlet_ground_state(g, &EigenOptions::default())?;
    sweep_with_vector(g, &interior, &vec)
}

/// Sweep for a given ordering vector on the interior vertices.
pub fn sweep_with_vector(g: &GraphBall, interior: &[usize], values: &[f64]) -> Result<SweepCut> {
    if interior.len() < 2 {
        return Err(invalid("the sweep needs at least two interior vertices"));
    }
    let mut order: Vec<usize> = (0..interior.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let n = g.num_vertices();
    let mut inside = vec![false; n];
    // Count of neighbours (including missing ones beyond the ball) not in F.
    let mut outside: Vec<usize> = vec![g.valence(); n];
    let mut boundary = 0usize;
    let mut best = (f64::INFINITY, 0usize);
    for (k, &idx) in order.iter().enumerate() {
        let v = interior[idx];
        inside[v] = true;
        if outside[v] > 0 {
            boundary += 1;
        }
        for &w in g.neighbors(v) {
            outside[w] -= 1;
            if inside[w] && outside[w] == 0 {
                boundary -= 1;
            }
        }
        let r = boundary as f64 / (k + 1) as f64;
        if r < best.0 {
            best = (r, k + 1);
        }
    }
    let mut cut_set: Vec<usize> = order[..best.1].iter().map(|&i| interior[i]).collect();
    cut_set.sort_unstable();
    Ok(SweepCut { value: best.0, cut_set })
}

/// Families whose balls can be generated at any depth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum GraphFamily {
    Lattice { dimension: usize },
    Tree { valence: usize },
}

impl GraphFamily {
    pub fn ball(&self, depth: usize) -> Result<GraphBall> {
        match *self {
            GraphFamily::Lattice { dimension } => build_lattice(dimension, depth),
            GraphFamily::Tree { valence } => build_regular_tree(valence, depth),
        }
    }

    pub fn valence(&self) -> usize {
        match *self {
            GraphFamily::Lattice { dimension } => 2 * dimension,
            GraphFamily::Tree { valence } => valence,
        }
    }

    pub fn name(&self) -> String {
        match *self {
            GraphFamily::Lattice { dimension: 1 } => "Z".into(),
            GraphFamily::Lattice { dimension } => format!("Z^{dimension}"),
            GraphFamily::Tree { valence } => format!("T{valence}"),
        }
    }

    /// Known bottom of the spectrum: 0 for lattices, `v − 2√(v−1)` for trees.
    pub fn reference_mu0(&self) -> f64 {
        match *self {
            GraphFamily::Lattice { .. } => 0.0,
            GraphFamily::Tree { valence } => {
                let v = valence as f64;
                v - 2.0 * (v - 1.0).sqrt()
            }
        }
    }

    pub fn amenable(&self) -> bool {
        matches!(self, GraphFamily::Lattice { .. })
    }
}

/// Per-depth estimates of μ₀ and h with their limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphConstants {
    pub family: String,
    pub valence: usize,
    pub depths: Vec<usize>,
    pub mu0_estimates: Vec<f64>,
    pub cheeger_estimates: Vec<f64>,
    pub folner_ratio: Vec<f64>,
    /// Last computed ball value (an upper bound for μ₀(G)).
    pub mu0_last: f64,
    /// Inverse-square tail fit through the last three depths, if available.
    pub mu0_extrapolated: Option<TailEstimate>,
    /// Extrapolated value clamped to `[0, mu0_last]`, or `mu0_last`.
    pub converged_mu0: f64,
    pub mu0_converged: bool,
    /// Smallest sweep value over all depths (an upper bound for h(G)).
    pub converged_h: f64,
    pub h_last: f64,
    pub h_converged: bool,
    pub amenable_consistent: bool,
}

const MONOTONE_SLACK: f64 = 1e-9;

/// Exhaustion estimate of μ₀ and h over `depths` (strictly increasing).
///
/// Stops early once successive μ₀ values differ by less than `tol`.
pub fn mu0_estimate(family: &GraphFamily, depths: &[usize], tol: f64, opts: &EigenOptions) -> Result<GraphConstants> {
    if depths.is_empty() || depths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("depth schedule must be nonempty and strictly increasing"));
    }
    let mut balls = Vec::new();
    for &d in depths {
        balls.push(family.ball(d)?);
    }
    mu0_estimate_balls(&family.name(), &balls, tol, opts)
}

/// Same as [`mu0_estimate`] for an explicit sequence of growing balls.
pub fn mu0_estimate_balls(name: &str, balls: &[GraphBall], tol: f64, opts: &EigenOptions) -> Result<GraphConstants> {
    let valence = balls.first().map(|b| b.valence()).ok_or_else(|| invalid("no balls given"))?;
    let mut out = GraphConstants {
        family: name.to_string(),
        valence,
        depths: Vec::new(),
        mu0_estimates: Vec::new(),
        cheeger_estimates: Vec::new(),
        folner_ratio: Vec::new(),
        mu0_last: f64::NAN,
        mu0_extrapolated: None,
        converged_mu0: f64::NAN,
        mu0_converged: false,
        converged_h: f64::INFINITY,
        h_last: f64::NAN,
        h_converged: false,
        amenable_consistent: false,
    };
    for ball in balls {
        let (mu, vec, interior) = dirichlet_ground_state(ball, opts)?;
        let h = if interior.len() >= 2 {
            sweep_with_vector(ball, &interior, &vec)?.value
        } else {
            folner_ratio(ball, &interior)?
        };
        if let Some(&prev) = out.mu0_estimates.last() {
            if mu > prev + MONOTONE_SLACK * (1.0 + prev) {
                return Err(Error::Invariant(format!(
                    "μ₀ increased from {prev} to {mu} at depth {}",
                    ball.radius()
                )));
            }
        }
        let prev_h = out.cheeger_estimates.last().copied();
        out.depths.push(ball.radius());
        out.mu0_estimates.push(mu);
        out.cheeger_estimates.push(h);
        out.folner_ratio.push(folner_ratio(ball, &interior)?);
        out.converged_h = out.converged_h.min(h);
        out.h_converged = prev_h.is_some_and(|p| (p - h).abs() < tol);
        let n = out.mu0_estimates.len();
        if n >= 2 && (out.mu0_estimates[n - 2] - mu).abs() < tol {
            out.mu0_converged = true;
            break;
        }
    }
    out.mu0_last = *out.mu0_estimates.last().expect("at least one depth");
    out.h_last = *out.cheeger_estimates.last().expect("at least one depth");
    let ps: Vec<f64> = out.depths.iter().map(|&d| d as f64).collect();
    out.mu0_extrapolated = inverse_square_fit(&ps, &out.mu0_estimates).map(|(t, _)| t);
    out.converged_mu0 = match out.mu0_extrapolated {
        Some(t) => t.limit.clamp(0.0, out.mu0_last),
        None => out.mu0_last,
    };
    out.amenable_consistent = out.converged_mu0 < 1e-6;
    Ok(out)
}
