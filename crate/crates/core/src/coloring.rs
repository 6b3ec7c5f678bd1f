//! Distance-2 edge coloring of the interaction graph.
//!
//! Two edges conflict when they share a vertex or when some third edge touches
//! both. Edges of one color are therefore vertex-disjoint and no graph edge
//! joins two of their endpoints except the edges themselves.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{Edge, InteractionGraph};

/// Conflict graph over the edges of an interaction graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConflictGraph {
    edges: Vec<Edge>,
    adjacency: Vec<BTreeSet<usize>>,
}

impl ConflictGraph {
    /// Vertices of the conflict graph, in lexicographic order.
    pub fn vertices(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn conflicts(&self, a: Edge, b: Edge) -> bool {
        match (self.position(a), self.position(b)) {
            (Some(i), Some(j)) => self.adjacency[i].contains(&j),
            _ => false,
        }
    }

    pub fn neighbors(&self, e: Edge) -> impl Iterator<Item = Edge> + '_ {
        self.position(e)
            .into_iter()
            .flat_map(move |i| self.adjacency[i].iter().map(move |&j| self.edges[j]))
    }

    pub fn degree(&self, e: Edge) -> usize {
        self.position(e).map_or(0, |i| self.adjacency[i].len())
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(BTreeSet::len).max().unwrap_or(0)
    }

    pub fn num_conflicts(&self) -> usize {
        self.adjacency.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    fn position(&self, e: Edge) -> Option<usize> {
        self.edges.binary_search(&e).ok()
    }
}

/// `C' = (c, d)` conflicts with `C = (a, b)` iff `c` or `d` lies in the closed
/// neighbourhood of `a` or `b`.
pub fn conflict_graph(graph: &InteractionGraph) -> ConflictGraph {
    let edges = graph.edges().to_vec();
    let closed = |e: Edge| -> BTreeSet<usize> {
        let mut s: BTreeSet<usize> = e.sites().into_iter().collect();
        for v in e.sites() {
            s.extend(graph.neighbors(v).iter().copied());
        }
        s
    };
    let balls: Vec<BTreeSet<usize>> = edges.iter().map(|&e| closed(e)).collect();
    let mut adjacency = vec![BTreeSet::new(); edges.len()];
    for i in 0..edges.len() {
        for j in i + 1..edges.len() {
            if edges[j].sites().iter().any(|v| balls[i].contains(v)) {
                adjacency[i].insert(j);
                adjacency[j].insert(i);
            }
        }
    }
    ConflictGraph { edges, adjacency }
}

/// One color class. Endpoint roles follow `k1 = min`, `k2 = max`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorClass {
    pub edges: Vec<Edge>,
    pub vertices: BTreeSet<usize>,
    pub first: BTreeSet<usize>,
    pub second: BTreeSet<usize>,
}

impl ColorClass {
    fn from_edges(edges: Vec<Edge>) -> Self {
        let first: BTreeSet<usize> = edges.iter().map(|e| e.lo()).collect();
        let second: BTreeSet<usize> = edges.iter().map(|e| e.hi()).collect();
        let vertices = first.union(&second).copied().collect();
        ColorClass {
            edges,
            vertices,
            first,
            second,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorPartition {
    assignment: BTreeMap<Edge, usize>,
    classes: Vec<ColorClass>,
}

impl ColorPartition {
    pub fn num_colors(&self) -> usize {
        self.classes.len()
    }

    pub fn color_of(&self, e: Edge) -> Option<usize> {
        self.assignment.get(&e).copied()
    }

    pub fn assignment(&self) -> &BTreeMap<Edge, usize> {
        &self.assignment
    }

    pub fn classes(&self) -> &[ColorClass] {
        &self.classes
    }

    pub fn class(&self, c: usize) -> Result<&ColorClass> {
        self.classes.get(c).ok_or(Error::ColorOutOfRange {
            color: c,
            num_colors: self.classes.len(),
        })
    }
}

/// First-fit coloring in lexicographic edge order.
pub fn greedy_color(conflicts: &ConflictGraph) -> ColorPartition {
    let mut colors: Vec<usize> = Vec::with_capacity(conflicts.len());
    for i in 0..conflicts.len() {
        let used: BTreeSet<usize> = conflicts.adjacency[i]
            .iter()
            .filter(|&&j| j < i)
            .map(|&j| colors[j])
            .collect();
        let c = (0..).find(|c| !used.contains(c)).expect("unbounded range");
        colors.push(c);
    }
    let num_colors = colors.iter().map(|c| c + 1).max().unwrap_or(0);
    let mut per_color = vec![Vec::new(); num_colors];
    for (&e, &c) in conflicts.edges.iter().zip(&colors) {
        per_color[c].push(e);
    }
    ColorPartition {
        assignment: conflicts.edges.iter().copied().zip(colors).collect(),
        classes: per_color.into_iter().map(ColorClass::from_edges).collect(),
    }
}

pub fn color_graph(graph: &InteractionGraph) -> ColorPartition {
    greedy_color(&conflict_graph(graph))
}

/// `(E_c, V_c, V_c1, V_c2)`.
pub fn color_sets(
    partition: &ColorPartition,
    c: usize,
) -> Result<(Vec<Edge>, BTreeSet<usize>, BTreeSet<usize>, BTreeSet<usize>)> {
    let class = partition.class(c)?;
    Ok((
        class.edges.clone(),
        class.vertices.clone(),
        class.first.clone(),
        class.second.clone(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(usize, usize)]) -> InteractionGraph {
        InteractionGraph::new(n, edges.iter().copied()).unwrap()
    }

    #[test]
    fn three_edge_path_fully_conflicts() {
        let cg = conflict_graph(&graph(4, &[(0, 1), (1, 2), (2, 3)]));
        assert_eq!(cg.num_conflicts(), 3);
        assert!(cg.conflicts(Edge::new(0, 1), Edge::new(2, 3)));
        assert_eq!(greedy_color(&cg).num_colors(), 3);
    }

    #[test]
    fn single_edge_and_empty_graph() {
        let cg = conflict_graph(&graph(2, &[(0, 1)]));
        assert_eq!(cg.len(), 1);
        assert_eq!(cg.num_conflicts(), 0);
        assert_eq!(greedy_color(&cg).num_colors(), 1);
        let none = color_graph(&graph(3, &[]));
        assert_eq!(none.num_colors(), 0);
        assert!(color_sets(&none, 0).is_err());
    }

    #[test]
    fn star_edges_conflict() {
        let cg = conflict_graph(&graph(4, &[(0, 1), (0, 2), (0, 3)]));
        assert_eq!(cg.num_conflicts(), 3);
    }

    #[test]
    fn six_chain_mod_three_pattern() {
        let p = color_graph(&InteractionGraph::chain(6));
        assert_eq!(p.num_colors(), 3);
        assert_eq!(p.classes()[0].edges, vec![Edge::new(0, 1), Edge::new(3, 4)]);
        assert_eq!(p.classes()[1].edges, vec![Edge::new(1, 2), Edge::new(4, 5)]);
        assert_eq!(p.classes()[2].edges, vec![Edge::new(2, 3)]);
        let (e, v, v1, v2) = color_sets(&p, 0).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(v, BTreeSet::from([0, 1, 3, 4]));
        assert_eq!(v1, BTreeSet::from([0, 3]));
        assert_eq!(v2, BTreeSet::from([1, 4]));
        assert!(matches!(color_sets(&p, 3), Err(Error::ColorOutOfRange { color: 3, num_colors: 3 })));
    }

    #[test]
    fn single_class_sets() {
        let p = color_graph(&graph(2, &[(0, 1)]));
        let (_, v, v1, v2) = color_sets(&p, 0).unwrap();
        assert_eq!((v, v1, v2), (BTreeSet::from([0, 1]), BTreeSet::from([0]), BTreeSet::from([1])));
    }
}
