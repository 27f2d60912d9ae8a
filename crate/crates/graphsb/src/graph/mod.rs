//! Graph representation, file ingestion, split protocols and the SBM
//! generator used by both the training pipeline and the theory lab.

mod io;
mod sbm;
mod split;

pub use io::{load_graph, LoadReport};
pub use sbm::{generate_sbm, SbmSpec};
pub use split::{make_split, resolve_minority_classes, MinoritySelection, SplitSpec};

use ndarray::Array2;

use crate::error::{Result, SbError};

/// Train/val/test membership, pairwise disjoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Masks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl Masks {
    pub fn empty(n: usize) -> Self {
        Masks {
            train: vec![false; n],
            val: vec![false; n],
            test: vec![false; n],
        }
    }

    pub fn train_nodes(&self) -> Vec<usize> {
        (0..self.train.len()).filter(|&v| self.train[v]).collect()
    }
}

/// Undirected attributed graph. Adjacency is stored as sorted neighbor
/// lists, symmetric, without self-loops.
#[derive(Debug, Clone)]
pub struct Graph {
    pub n: usize,
    pub adj: Vec<Vec<usize>>,
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub masks: Masks,
}

impl Graph {
    pub fn new(
        n: usize,
        edges: &[(usize, usize)],
        features: Array2<f64>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if features.nrows() != n || labels.len() != n {
            return Err(SbError::Shape(format!(
                "n = {n} but features has {} rows and labels has {} entries",
                features.nrows(),
                labels.len()
            )));
        }
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n {
                return Err(SbError::NodeOutOfRange { id: u, n });
            }
            if v >= n {
                return Err(SbError::NodeOutOfRange { id: v, n });
            }
            if u == v {
                continue;
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in adj.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }
        let num_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
        Ok(Graph {
            n,
            adj,
            features,
            labels,
            num_classes,
            masks: Masks::empty(n),
        })
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search(&v).is_ok()
    }

    pub fn add_edge(&mut self, u: usize, v: usize) {
        if u == v || self.has_edge(u, v) {
            return;
        }
        let iu = self.adj[u].binary_search(&v).unwrap_err();
        self.adj[u].insert(iu, v);
        let iv = self.adj[v].binary_search(&u).unwrap_err();
        self.adj[v].insert(iv, u);
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().map(|l| l.len()).sum::<usize>() / 2
    }

    /// Dense binary adjacency (zero diagonal).
    pub fn adjacency_dense(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.n, self.n));
        for (u, nbrs) in self.adj.iter().enumerate() {
            for &v in nbrs {
                a[[u, v]] = 1.0;
            }
        }
        a
    }

    /// Nodes of `class` that carry a training label.
    pub fn labeled_of_class(&self, class: usize) -> Vec<usize> {
        (0..self.n)
            .filter(|&v| self.masks.train[v] && self.labels[v] == class)
            .collect()
    }
}

/// BFS hop distances from `source`, truncated at `max_hops`.
/// `None` means farther than `max_hops` (or unreachable).
pub fn hop_distances(g: &Graph, source: usize, max_hops: usize) -> Vec<Option<usize>> {
    assert!(source < g.n, "source out of range");
    let mut dist = vec![None; g.n];
    dist[source] = Some(0);
    let mut frontier = vec![source];
    for d in 1..=max_hops {
        let mut next = Vec::new();
        for &u in &frontier {
            for &v in &g.adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d);
                    next.push(v);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    dist
}

/// Truncated path-length class min(d(v,u), cap) for every pair, as a
/// dense matrix; unreachable pairs also map to `cap`. One capped BFS
/// per node.
pub fn capped_distance_classes(g: &Graph, cap: usize) -> Array2<u8> {
    assert!(cap < 256);
    let mut out = Array2::from_elem((g.n, g.n), cap as u8);
    for v in 0..g.n {
        for (u, d) in hop_distances(g, v, cap).into_iter().enumerate() {
            if let Some(d) = d {
                out[[v, u]] = d.min(cap) as u8;
            }
        }
    }
    out
}

/// Mean degree over `node_set`, plus the per-node degrees.
pub fn degree_stats(g: &Graph, node_set: &[usize]) -> Result<(f64, Vec<usize>)> {
    if node_set.is_empty() {
        return Err(SbError::Config("degree_stats over empty node set".into()));
    }
    let degrees: Vec<usize> = node_set.iter().map(|&v| g.degree(v)).collect();
    let mean = degrees.iter().sum::<usize>() as f64 / degrees.len() as f64;
    Ok((mean, degrees))
}
