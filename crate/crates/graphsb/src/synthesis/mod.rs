//! Quantity balancing: mixup generation of minority-node embeddings,
//! bilinear edge prediction for synthetic nodes, and the Q-learning
//! over-sampling controller.

mod kmeans;
mod qlearn;

pub use kmeans::{centroid_distances, kmeans};
pub use qlearn::{Action, QController, QControllerConfig};

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use crate::learner::model::edge_loss_terms;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthEntry {
    pub class: usize,
    pub src: usize,
    pub nn: usize,
    pub lambda: f64,
    pub label: usize,
}

/// One epoch's synthetic-node recipe: mixup endpoints and weights, plus
/// the binarized adjacency columns (m×n) tying synthetic nodes to
/// original nodes.
#[derive(Debug, Clone)]
pub struct SynthesisPlan {
    pub entries: Vec<SynthEntry>,
    pub cols: Array2<f64>,
    /// mixups that degenerated to duplication (singleton class)
    pub duplications: usize,
}

impl SynthesisPlan {
    pub fn empty(n: usize) -> Self {
        SynthesisPlan {
            entries: Vec::new(),
            cols: Array2::zeros((0, n)),
            duplications: 0,
        }
    }

    /// Synthetic labeled count added per class — exact bookkeeping.
    pub fn counts_per_class(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes];
        for e in &self.entries {
            counts[e.class] += 1;
        }
        counts
    }
}

/// Nearest labeled same-class node by Euclidean distance in embedding
/// space; ties break to the smaller id. `None` when v's class has no
/// other labeled member.
pub fn nearest_same_class(
    h: &Array2<f64>,
    labels: &[usize],
    labeled: &[usize],
    v: usize,
) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for &j in labeled {
        if j == v || labels[j] != labels[v] {
            continue;
        }
        let d: f64 = h
            .row(v)
            .iter()
            .zip(h.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        match best {
            Some((bd, bj)) if (bd, bj) <= (d, j) => {}
            _ => best = Some((d, j)),
        }
    }
    best.map(|(_, j)| j)
}

/// h' = lambda h_src + (1-lambda) h_nn for every plan entry, m×F.
pub fn mixup_embeddings(h: &Array2<f64>, plan: &SynthesisPlan) -> Array2<f64> {
    let mut out = Array2::zeros((plan.entries.len(), h.ncols()));
    for (i, e) in plan.entries.iter().enumerate() {
        let row = &(e.lambda * &h.row(e.src)) + &((1.0 - e.lambda) * &h.row(e.nn));
        out.row_mut(i).assign(&row);
    }
    out
}

/// Bilinear scores sigmoid(h_syn W h_orig^T) binarized strictly above
/// eta, producing synthetic-to-original adjacency columns. Synthetic
/// nodes never connect to each other.
pub fn predict_edges(
    h_orig: &Array2<f64>,
    h_syn: &Array2<f64>,
    w: ArrayView2<'_, f64>,
    eta: f64,
) -> Array2<f64> {
    let scores = h_syn.dot(&w).dot(&h_orig.t());
    scores.mapv(|q| {
        let s = 1.0 / (1.0 + (-q).exp());
        if s > eta {
            1.0
        } else {
            0.0
        }
    })
}

/// Paper-style initial over-sampling scale N/(M |C_i|).
pub fn initial_scale(n_total: usize, num_classes: usize, class_size: usize) -> f64 {
    n_total as f64 / (num_classes as f64 * class_size as f64)
}

/// Builds the per-epoch plan: round(scale * labeled_count) synthetic
/// nodes per minority class, sources cycling through a seeded shuffle
/// of the class's labeled nodes.
#[allow(clippy::too_many_arguments)]
pub fn build_plan(
    h: &Array2<f64>,
    labels: &[usize],
    train_mask: &[bool],
    scales: &[(usize, f64)],
    edge_w: ArrayView2<'_, f64>,
    eta: f64,
    rng: &mut ChaCha8Rng,
) -> SynthesisPlan {
    let n = h.nrows();
    let labeled: Vec<usize> = (0..n).filter(|&v| train_mask[v]).collect();
    let mut entries = Vec::new();
    let mut duplications = 0;
    for &(class, scale) in scales {
        let members: Vec<usize> = labeled.iter().copied().filter(|&v| labels[v] == class).collect();
        if members.is_empty() {
            continue;
        }
        let count = (scale * members.len() as f64).round().max(0.0) as usize;
        let mut order = members.clone();
        // Fisher-Yates with the shared stream
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for k in 0..count {
            let src = order[k % order.len()];
            let (nn, lambda) = match nearest_same_class(h, labels, &labeled, src) {
                Some(nn) => (nn, rng.gen::<f64>()),
                None => {
                    duplications += 1;
                    (src, 1.0)
                }
            };
            entries.push(SynthEntry {
                class,
                src,
                nn,
                lambda,
                label: class,
            });
        }
    }
    let plan_no_cols = SynthesisPlan {
        entries,
        cols: Array2::zeros((0, n)),
        duplications,
    };
    let h_syn = mixup_embeddings(h, &plan_no_cols);
    let cols = predict_edges(h, &h_syn, edge_w, eta);
    SynthesisPlan {
        cols,
        ..plan_no_cols
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    #[test]
    fn two_member_class_picks_each_other() {
        let h = array![[0.0, 0.0], [1.0, 1.0], [9.0, 9.0]];
        let labels = vec![0, 0, 1];
        let labeled = vec![0, 1, 2];
        assert_eq!(nearest_same_class(&h, &labels, &labeled, 0), Some(1));
        assert_eq!(nearest_same_class(&h, &labels, &labeled, 1), Some(0));
        assert_eq!(nearest_same_class(&h, &labels, &labeled, 2), None);
    }

    #[test]
    fn line_case_prefers_closer_point() {
        let h = array![[0.0], [1.0], [5.0]];
        let labels = vec![0, 0, 0];
        let labeled = vec![0, 1, 2];
        assert_eq!(nearest_same_class(&h, &labels, &labeled, 0), Some(1));
    }

    #[test]
    fn nearest_matches_brute_force_oracle() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 20;
        let h = Array2::from_shape_fn((n, 3), |_| rng.gen_range(-1.0..1.0));
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let labeled: Vec<usize> = (0..n).collect();
        for v in 0..n {
            let got = nearest_same_class(&h, &labels, &labeled, v);
            let mut best: Option<(f64, usize)> = None;
            for j in 0..n {
                if j == v || labels[j] != labels[v] {
                    continue;
                }
                let d: f64 = h
                    .row(v)
                    .iter()
                    .zip(h.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if best.is_none() || (d, j) < best.unwrap() {
                    best = Some((d, j));
                }
            }
            assert_eq!(got, best.map(|(_, j)| j), "node {v}");
        }
    }

    #[test]
    fn ties_break_to_smaller_id() {
        let h = array![[0.0], [1.0], [-1.0]];
        let labels = vec![0, 0, 0];
        let labeled = vec![0, 1, 2];
        assert_eq!(nearest_same_class(&h, &labels, &labeled, 0), Some(1));
    }

    #[test]
    fn mixup_endpoints_and_midpoint() {
        let h = array![[0.0, 0.0], [2.0, 4.0]];
        let mk = |lambda| SynthesisPlan {
            entries: vec![SynthEntry {
                class: 0,
                src: 0,
                nn: 1,
                lambda,
                label: 0,
            }],
            cols: Array2::zeros((1, 2)),
            duplications: 0,
        };
        assert_eq!(mixup_embeddings(&h, &mk(1.0)).row(0).to_vec(), vec![0.0, 0.0]);
        assert_eq!(mixup_embeddings(&h, &mk(0.5)).row(0).to_vec(), vec![1.0, 2.0]);
    }

    #[test]
    fn zero_bilinear_weights_give_no_edges() {
        // all scores exactly 0.5; strict > keeps none
        let h = array![[1.0, 2.0], [3.0, 4.0]];
        let hs = array![[0.5, 0.5]];
        let w = Array2::zeros((2, 2));
        let cols = predict_edges(&h, &hs, w.view(), 0.5);
        assert!(cols.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn symmetric_bilinear_scores_are_symmetric() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let h: Array2<f64> = Array2::from_shape_fn((5, 3), |_| rng.gen_range(-1.0..1.0));
        let w0: Array2<f64> = Array2::from_shape_fn((3, 3), |_| rng.gen_range(-1.0..1.0));
        let w = &w0 + &w0.t();
        let scores = h.dot(&w).dot(&h.t());
        for i in 0..5 {
            for j in 0..5 {
                assert!((scores[[i, j]] - scores[[j, i]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bilinear_two_by_two_hand_case() {
        let h: Array2<f64> = array![[1.0, 0.0], [0.0, 2.0]];
        let w: Array2<f64> = array![[0.5, -1.0], [0.25, 0.0]];
        // score(0,1) = h0 W h1^T = [0.5, -1.0] . [0, 2] = -2.0
        let hs = h.clone();
        let scores = hs.dot(&w).dot(&h.t());
        assert!((scores[[0, 1]] - (-2.0)).abs() < 1e-12);
        let sig = 1.0 / (1.0 + 2.0f64.exp());
        let cols = predict_edges(&h, &hs, w.view(), sig - 1e-9);
        assert_eq!(cols[[0, 1]], 1.0); // strictly above the shifted threshold
        let cols = predict_edges(&h, &hs, w.view(), sig);
        assert_eq!(cols[[0, 1]], 0.0); // equal, strict comparison drops it
    }

    #[test]
    fn plan_counts_match_bookkeeping() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 12;
        let h = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64 * 0.1);
        let labels: Vec<usize> = (0..n).map(|v| if v < 4 { 0 } else { 1 }).collect();
        let train = vec![true; n];
        let w = Array2::zeros((2, 2));
        let plan = build_plan(&h, &labels, &train, &[(0, 1.5)], w.view(), 0.5, &mut rng);
        // round(1.5 * 4) = 6 synthetic nodes for class 0
        assert_eq!(plan.counts_per_class(2), vec![6, 0]);
        assert_eq!(plan.cols.nrows(), 6);
        assert_eq!(plan.duplications, 0);
        for e in &plan.entries {
            assert!(labels[e.src] == 0 && labels[e.nn] == 0);
            assert!((0.0..=1.0).contains(&e.lambda));
        }
    }

    #[test]
    fn singleton_class_duplicates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = array![[0.0, 0.0], [5.0, 5.0], [6.0, 6.0]];
        let labels = vec![0, 1, 1];
        let train = vec![true; 3];
        let w = Array2::zeros((2, 2));
        let plan = build_plan(&h, &labels, &train, &[(0, 2.0)], w.view(), 0.5, &mut rng);
        assert_eq!(plan.entries.len(), 2);
        assert_eq!(plan.duplications, 2);
        for e in &plan.entries {
            assert_eq!(e.src, 0);
            assert_eq!(e.nn, 0);
            assert_eq!(e.lambda, 1.0);
        }
    }

    #[test]
    fn initial_scale_formula() {
        // N = 550, M = 2 classes, minority size 50 -> 5.5
        assert!((initial_scale(550, 2, 50) - 5.5).abs() < 1e-12);
    }
}
