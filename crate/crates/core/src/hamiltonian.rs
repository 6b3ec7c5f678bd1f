//! Spinful Fermi-Hubbard Hamiltonian on a bounded-degree interaction graph.
//!
//! ```text
//! H = - Σ_{(i,j)∈E, σ} h_ij (c†_iσ c_jσ + c†_jσ c_iσ) + Σ_i ξ_i n_i↑ n_i↓
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{annihilate_on_mask, create_on_mask, site_mask, ModeIndex, Spin, MAX_SITES};
use crate::operator::SparseOperator;

/// Unordered site pair stored as `(lo, hi)` with `lo < hi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "[usize; 2]", try_from = "[usize; 2]")]
pub struct Edge {
    lo: usize,
    hi: usize,
}

impl Edge {
    /// Panics on a self-loop; use [`InteractionGraph::new`] for checked input.
    pub fn new(i: usize, j: usize) -> Self {
        assert_ne!(i, j, "self-loop at site {i}");
        Edge {
            lo: i.min(j),
            hi: i.max(j),
        }
    }

    pub fn lo(self) -> usize {
        self.lo
    }

    pub fn hi(self) -> usize {
        self.hi
    }

    pub fn sites(self) -> [usize; 2] {
        [self.lo, self.hi]
    }

    pub fn touches(self, site: usize) -> bool {
        self.lo == site || self.hi == site
    }

    pub fn shares_vertex(self, other: Edge) -> bool {
        self.touches(other.lo) || self.touches(other.hi)
    }
}

impl From<Edge> for [usize; 2] {
    fn from(e: Edge) -> Self {
        e.sites()
    }
}

impl TryFrom<[usize; 2]> for Edge {
    type Error = String;

    fn try_from(v: [usize; 2]) -> std::result::Result<Self, String> {
        if v[0] == v[1] {
            Err(format!("self-loop at site {}", v[0]))
        } else {
            Ok(Edge::new(v[0], v[1]))
        }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lo, self.hi)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionGraph {
    n_sites: usize,
    edges: Vec<Edge>,
    adjacency: Vec<BTreeSet<usize>>,
}

impl InteractionGraph {
    /// Edges are stored sorted lexicographically by `(lo, hi)`.
    pub fn new(n_sites: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        let mut adjacency = vec![BTreeSet::new(); n_sites];
        for (i, j) in edges {
            if i >= n_sites || j >= n_sites {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) outside {n_sites} sites"
                )));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at site {i}")));
            }
            if !set.insert(Edge::new(i, j)) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({i}, {j})")));
            }
            adjacency[i].insert(j);
            adjacency[j].insert(i);
        }
        Ok(InteractionGraph {
            n_sites,
            edges: set.into_iter().collect(),
            adjacency,
        })
    }

    pub fn chain(n_sites: usize) -> Self {
        Self::new(n_sites, (1..n_sites).map(|i| (i - 1, i))).expect("chain is a simple graph")
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn contains(&self, edge: Edge) -> bool {
        self.edges.binary_search(&edge).is_ok()
    }

    pub fn neighbors(&self, site: usize) -> &BTreeSet<usize> {
        &self.adjacency[site]
    }

    pub fn degree(&self, site: usize) -> usize {
        self.adjacency[site].len()
    }

    /// Maximum degree 𝔡 (0 for an edgeless graph).
    pub fn max_degree(&self) -> usize {
        (0..self.n_sites).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    /// Sites with no incident edge.
    pub fn isolated_sites(&self) -> Vec<usize> {
        (0..self.n_sites).filter(|&i| self.degree(i) == 0).collect()
    }
}

/// Hubbard coefficients on an interaction graph. Construction is unchecked;
/// call [`validate_model`] before use.
#[derive(Clone, Debug, PartialEq)]
pub struct HubbardModel {
    pub graph: InteractionGraph,
    pub hopping: BTreeMap<Edge, f64>,
    pub xi: Vec<f64>,
}

impl HubbardModel {
    pub fn new(graph: InteractionGraph, hopping: BTreeMap<Edge, f64>, xi: Vec<f64>) -> Self {
        HubbardModel { graph, hopping, xi }
    }

    /// Build from `(i, j, h_ij)` triples; only graph errors are reported here.
    pub fn from_edges(n_sites: usize, edges: &[(usize, usize, f64)], xi: Vec<f64>) -> Result<Self> {
        let graph = InteractionGraph::new(n_sites, edges.iter().map(|&(i, j, _)| (i, j)))?;
        let hopping = edges.iter().map(|&(i, j, h)| (Edge::new(i, j), h)).collect();
        Ok(HubbardModel { graph, hopping, xi })
    }

    pub fn zero(graph: InteractionGraph) -> Self {
        let hopping = graph.edges().iter().map(|&e| (e, 0.0)).collect();
        let xi = vec![0.0; graph.n_sites()];
        HubbardModel { graph, hopping, xi }
    }

    pub fn n_sites(&self) -> usize {
        self.graph.n_sites()
    }

    pub fn hopping(&self, edge: Edge) -> f64 {
        self.hopping.get(&edge).copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    HoppingBound { edge: Edge, value: f64 },
    InteractionBound { site: usize, value: f64 },
    Shape { expected: usize, found: usize },
    MissingHopping { edge: Edge },
    ExtraHopping { edge: Edge },
    SiteGuard { n_sites: usize, max: usize },
}

impl Violation {
    pub fn label(&self) -> &'static str {
        match self {
            Violation::HoppingBound { .. } => "hopping bound",
            Violation::InteractionBound { .. } => "interaction bound",
            Violation::Shape { .. } => "shape",
            Violation::MissingHopping { .. } => "missing hopping",
            Violation::ExtraHopping { .. } => "extra hopping",
            Violation::SiteGuard { .. } => "site guard",
        }
    }
}

/// Every violated invariant; empty means the model is usable.
pub fn validate_model(model: &HubbardModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = model.n_sites();
    if n > MAX_SITES {
        out.push(Violation::SiteGuard { n_sites: n, max: MAX_SITES });
    }
    if model.xi.len() != n {
        out.push(Violation::Shape {
            expected: n,
            found: model.xi.len(),
        });
    }
    for &edge in model.graph.edges() {
        if !model.hopping.contains_key(&edge) {
            out.push(Violation::MissingHopping { edge });
        }
    }
    for (&edge, &value) in &model.hopping {
        if !model.graph.contains(edge) {
            out.push(Violation::ExtraHopping { edge });
        }
        // NaN fails this comparison too
        if !(value.abs() <= 1.0) {
            out.push(Violation::HoppingBound { edge, value });
        }
    }
    for (site, &value) in model.xi.iter().enumerate() {
        if !(value.abs() <= 1.0) {
            out.push(Violation::InteractionBound { site, value });
        }
    }
    out
}

fn ensure_valid(model: &HubbardModel) -> Result<()> {
    let v = validate_model(model);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidModel(v))
    }
}

/// `c†_a c_b |mask>`.
#[inline]
fn hop_on_mask(mask: usize, a: usize, b: usize) -> Option<(usize, f64)> {
    let (m1, s1) = annihilate_on_mask(mask, b)?;
    let (m2, s2) = create_on_mask(m1, a)?;
    Some((m2, s1 * s2))
}

/// Materialize `H` on the `4^N` occupation basis from the ladder operators.
pub fn build_matrix(model: &HubbardModel) -> Result<SparseOperator> {
    ensure_valid(model)?;
    let n = model.n_sites();
    let dim = 1usize << (2 * n);
    let mut triplets = Vec::new();
    for mask in 0..dim {
        let diag: f64 = (0..n)
            .filter(|&i| mask & site_mask(i) == site_mask(i))
            .map(|i| model.xi[i])
            .sum();
        if diag != 0.0 {
            triplets.push((mask, mask, Complex64::new(diag, 0.0)));
        }
        for &edge in model.graph.edges() {
            let h = model.hopping(edge);
            if h == 0.0 {
                continue;
            }
            for spin in Spin::BOTH {
                let a = ModeIndex::new(n, edge.lo(), spin)?.index();
                let b = ModeIndex::new(n, edge.hi(), spin)?.index();
                for (x, y) in [(a, b), (b, a)] {
                    if let Some((to, sign)) = hop_on_mask(mask, x, y) {
                        triplets.push((to, mask, Complex64::new(-h * sign, 0.0)));
                    }
                }
            }
        }
    }
    Ok(SparseOperator::from_triplets(dim, triplets))
}

/// Two-site model on `edge` with `(h_{k1k2}, ξ_{k1}, ξ_{k2})`; new site 0 is
/// `k1` and new site 1 is `k2`, as reported by the returned relabeling.
pub fn restrict_to_edge(model: &HubbardModel, edge: (usize, usize)) -> Result<(HubbardModel, [usize; 2])> {
    ensure_valid(model)?;
    let (k1, k2) = edge;
    if k1 == k2 || k1 >= model.n_sites() || k2 >= model.n_sites() || !model.graph.contains(Edge::new(k1, k2)) {
        return Err(Error::EdgeAbsent(k1, k2));
    }
    let h = model.hopping(Edge::new(k1, k2));
    let restricted = HubbardModel::from_edges(2, &[(0, 1, h)], vec![model.xi[k1], model.xi[k2]])?;
    Ok((restricted, [k1, k2]))
}

pub const INSTANCE_FORMAT: &str = "hubbard-instance/1";

/// On-disk instance: 0-based sites, `[i, j, h]` edges, `xi` per site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceDoc {
    pub format: String,
    pub sites: usize,
    pub edges: Vec<(usize, usize, f64)>,
    pub xi: Vec<f64>,
}

impl InstanceDoc {
    pub fn from_model(model: &HubbardModel) -> Self {
        InstanceDoc {
            format: INSTANCE_FORMAT.to_string(),
            sites: model.n_sites(),
            edges: model
                .graph
                .edges()
                .iter()
                .map(|&e| (e.lo(), e.hi(), model.hopping(e)))
                .collect(),
            xi: model.xi.clone(),
        }
    }

    pub fn to_model(&self) -> Result<HubbardModel> {
        if self.format != INSTANCE_FORMAT {
            return Err(Error::InvalidArgument(format!(
                "unsupported instance format {:?}",
                self.format
            )));
        }
        HubbardModel::from_edges(self.sites, &self.edges, self.xi.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
