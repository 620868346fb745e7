use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};

/// Graph with designated inputs and outputs and a total measurement order
/// over the non-output vertices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenGraph {
    pub num_vertices: usize,
    /// Undirected edges stored as `(lower, higher)`, sorted.
    pub edges: Vec<(usize, usize)>,
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
    pub measurement_order: Vec<usize>,
}

impl OpenGraph {
    pub fn new(
        num_vertices: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        inputs: Vec<usize>,
        outputs: Vec<usize>,
        measurement_order: Vec<usize>,
    ) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(input_err!("self-loop on vertex {a}"));
            }
            if a >= num_vertices || b >= num_vertices {
                return Err(input_err!("edge ({a}, {b}) out of range"));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let g = OpenGraph { num_vertices, edges: set.into_iter().collect(), inputs, outputs, measurement_order };
        g.validate()?;
        Ok(g)
    }

    /// Check every structural invariant.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_vertices;
        if self.inputs.iter().chain(&self.outputs).any(|&v| v >= n) {
            return Err(input_err!("input/output vertex out of range"));
        }
        let mut seen = BTreeSet::new();
        for w in self.edges.windows(2) {
            if w[0] >= w[1] {
                return Err(input_err!("edges not sorted or duplicated"));
            }
        }
        if self.edges.iter().any(|&(a, b)| a >= b || b >= n) {
            return Err(input_err!("malformed edge list"));
        }
        let outputs: BTreeSet<usize> = self.outputs.iter().copied().collect();
        if outputs.len() != self.outputs.len() {
            return Err(input_err!("duplicate output vertex"));
        }
        for &v in &self.measurement_order {
            if v >= n || outputs.contains(&v) || !seen.insert(v) {
                return Err(input_err!("measurement order entry {v} is invalid"));
            }
        }
        if seen.len() + outputs.len() != n {
            return Err(input_err!("measurement order must cover every non-output vertex"));
        }
        Ok(())
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_vertices];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency().iter().map(Vec::len).max().unwrap_or(0)
    }

    /// The order in which a delegated round visits vertices: the measured
    /// vertices followed by the outputs.
    pub fn full_sequence(&self) -> Vec<usize> {
        self.measurement_order.iter().chain(&self.outputs).copied().collect()
    }
}

/// Proper vertex coloring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coloring {
    pub color_of: Vec<usize>,
    pub num_colors: usize,
}

impl Coloring {
    pub fn is_proper(&self, graph: &OpenGraph) -> bool {
        self.color_of.len() == graph.num_vertices
            && self.color_of.iter().all(|&c| c < self.num_colors)
            && graph.edges.iter().all(|&(a, b)| self.color_of[a] != self.color_of[b])
    }

    pub fn class(&self, color: usize) -> Vec<usize> {
        (0..self.color_of.len()).filter(|&v| self.color_of[v] == color).collect()
    }
}

/// First-fit coloring in vertex index order; uses at most `max_degree + 1` colors.
pub fn greedy_coloring(graph: &OpenGraph) -> Coloring {
    let adj = graph.adjacency();
    let mut color_of = vec![usize::MAX; graph.num_vertices];
    let mut num_colors = 0;
    for v in 0..graph.num_vertices {
        let used: BTreeSet<usize> = adj[v].iter().map(|&u| color_of[u]).filter(|&c| c != usize::MAX).collect();
        let c = (0..).find(|c| !used.contains(c)).expect("unbounded search");
        color_of[v] = c;
        num_colors = num_colors.max(c + 1);
    }
    Coloring { color_of, num_colors }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> OpenGraph {
        OpenGraph::new(n, (0..n - 1).map(|i| (i, i + 1)), vec![0], vec![n - 1], (0..n - 1).collect()).unwrap()
    }

    #[test]
    fn validation() {
        assert!(OpenGraph::new(2, [(0, 0)], vec![0], vec![1], vec![0]).is_err());
        assert!(OpenGraph::new(2, [(0, 1)], vec![0], vec![1], vec![]).is_err());
        assert!(OpenGraph::new(2, [(0, 1)], vec![0], vec![1], vec![1]).is_err());
        assert!(OpenGraph::new(2, [(0, 2)], vec![0], vec![1], vec![0]).is_err());
        let g = OpenGraph::new(3, [(2, 1), (0, 1), (1, 2)], vec![0], vec![2], vec![0, 1]).unwrap();
        assert_eq!(g.edges, vec![(0, 1), (1, 2)]);
        assert_eq!(g.full_sequence(), vec![0, 1, 2]);
    }

    #[test]
    fn coloring_examples() {
        let c = greedy_coloring(&line(4));
        assert_eq!(c.num_colors, 2);
        assert!(c.is_proper(&line(4)));

        let single = OpenGraph::new(1, [], vec![0], vec![0], vec![]).unwrap();
        assert_eq!(greedy_coloring(&single).num_colors, 1);

        // 2x2 grid: 0-1, 2-3, 0-2, 1-3.
        let grid = OpenGraph::new(4, [(0, 1), (2, 3), (0, 2), (1, 3)], vec![], vec![], (0..4).collect()).unwrap();
        assert_eq!(greedy_coloring(&grid).num_colors, 2);

        let triangle = OpenGraph::new(3, [(0, 1), (1, 2), (0, 2)], vec![], vec![], (0..3).collect()).unwrap();
        let c = greedy_coloring(&triangle);
        assert_eq!(c.num_colors, 3);
        assert!(c.is_proper(&triangle));
        assert_eq!(c.class(1), vec![1]);
    }
}
