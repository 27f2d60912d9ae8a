//! Structure enhancement: raise the degree of training-labeled minority
//! nodes toward the majority mean by adding edges to their most similar
//! non-adjacent nodes within 4 hops.

use crate::balance::cosine_similarity;
use crate::error::{Result, SbError};
use crate::graph::{hop_distances, Graph};

#[derive(Debug, Clone)]
pub struct NodeEnhancement {
    pub node: usize,
    pub original_degree: usize,
    pub delta_d: usize,
    pub candidate_count: usize,
    pub added: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct EnhancementReport {
    pub majority_mean_degree: f64,
    pub per_node: Vec<NodeEnhancement>,
    pub total_edges_added: usize,
}

/// Candidate set and degrees are taken from the original graph for every
/// treated node; the union of selected edges is applied afterwards.
pub fn enhance_structure(
    g: &Graph,
    minority_classes: &[usize],
    max_hops: usize,
) -> Result<(Graph, EnhancementReport)> {
    if minority_classes.is_empty() {
        return Err(SbError::Config("no minority classes given".into()));
    }
    let is_minority = |c: usize| minority_classes.contains(&c);

    let majority_labeled: Vec<usize> = (0..g.n)
        .filter(|&v| g.masks.train[v] && !is_minority(g.labels[v]))
        .collect();
    if majority_labeled.is_empty() {
        return Err(SbError::Config(
            "no training-labeled majority nodes to compute the degree target".into(),
        ));
    }
    let dbar_maj = majority_labeled
        .iter()
        .map(|&v| g.degree(v) as f64)
        .sum::<f64>()
        / majority_labeled.len() as f64;

    let treated: Vec<usize> = (0..g.n)
        .filter(|&v| g.masks.train[v] && is_minority(g.labels[v]))
        .collect();

    let mut per_node = Vec::new();
    let mut enhanced = g.clone();
    let mut total = 0usize;
    for &v in &treated {
        let delta_d = (dbar_maj - g.degree(v) as f64).max(0.0).floor() as usize;
        let dist = hop_distances(g, v, max_hops);
        let mut candidates: Vec<usize> = (0..g.n)
            .filter(|&u| u != v && dist[u].is_some() && dist[u] != Some(0) && !g.has_edge(v, u))
            .collect();
        // dist 1 is impossible here (1-hop neighbors are adjacent), so the
        // filter keeps exactly the 2..=max_hops shell
        let xv = g.features.row(v);
        let mut scored: Vec<(f64, usize)> = candidates
            .drain(..)
            .map(|u| {
                (
                    cosine_similarity(xv.as_slice().unwrap(), g.features.row(u).as_slice().unwrap()),
                    u,
                )
            })
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let take = delta_d.min(scored.len());
        let added: Vec<usize> = scored[..take].iter().map(|&(_, u)| u).collect();
        for &u in &added {
            enhanced.add_edge(v, u);
        }
        total += added.len();
        per_node.push(NodeEnhancement {
            node: v,
            original_degree: g.degree(v),
            delta_d,
            candidate_count: scored.len(),
            added,
        });
    }

    Ok((
        enhanced,
        EnhancementReport {
            majority_mean_degree: dbar_maj,
            per_node,
            total_edges_added: total,
        },
    ))
}
