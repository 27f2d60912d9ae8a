//! Structural balance: similarity-guided structure enhancement for
//! minority nodes and the iterated relation-diffusion operator with
//! symmetric edge dropout.

mod diffusion;
mod dropout;
mod enhance;

pub use diffusion::{
    normalize_adjacency, ppr_closed_form, relation_diffusion, threshold_in_place, DiffusionMatrix,
};
pub use dropout::{apply_dropout, sample_dropout_mask, DropoutMask};
pub use enhance::{enhance_structure, EnhancementReport, NodeEnhancement};

use crate::error::{Result, SbError};
use crate::graph::Graph;

/// The k classes with the fewest training-labeled nodes; ties broken by
/// smaller class id.
pub fn identify_minority_classes(g: &Graph, k: usize) -> Result<Vec<usize>> {
    if k >= g.num_classes {
        return Err(SbError::Config(format!(
            "k = {k} must be smaller than the class count {}",
            g.num_classes
        )));
    }
    let mut counts = vec![0usize; g.num_classes];
    for v in 0..g.n {
        if g.masks.train[v] {
            counts[g.labels[v]] += 1;
        }
    }
    let mut order: Vec<usize> = (0..g.num_classes).collect();
    order.sort_by_key(|&c| (counts[c], c));
    Ok(order[..k].to_vec())
}

/// Cosine similarity; defined as 0 when either vector is zero.
pub fn cosine_similarity(xi: &[f64], xj: &[f64]) -> f64 {
    let dot: f64 = xi.iter().zip(xj).map(|(a, b)| a * b).sum();
    let ni: f64 = xi.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nj: f64 = xj.iter().map(|a| a * a).sum::<f64>().sqrt();
    if ni == 0.0 || nj == 0.0 {
        0.0
    } else {
        dot / (ni * nj)
    }
}
