//! Numerical core: flat parameters, the fixed differentiated
//! computation graph, Adam, and the two-phase training loop.

mod adam;
pub mod model;
pub mod params;
mod train;

pub use adam::Adam;
pub use model::{
    adjacency_aggregate, classifier_hidden, classify, edge_loss_terms, encode, forward_backward,
    forward_loss, predict, EdgeLossInputs, LossBreakdown, StepInputs,
};
pub use params::{Block, ModelDims, ParamVec, ALL_BLOCKS};
pub use train::{
    load_checkpoint, predict_nodes, save_checkpoint, train, EpochRecord, OversampleMode, Phase,
    RlTraceRow, TrainConfig, TrainOutcome, TrainState, PATH_LENGTH_CAP,
};

#[cfg(test)]
mod gradcheck {
    use super::*;
    use crate::synthesis::{SynthEntry, SynthesisPlan};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Fixture {
        s_tilde: Array2<f64>,
        x: Array2<f64>,
        adj: Vec<Vec<usize>>,
        drop1: Array2<f64>,
        drop2: Array2<f64>,
        node_set: Vec<usize>,
        labels: Vec<usize>,
        plan: SynthesisPlan,
        a_dense: Array2<f64>,
        pairs: Vec<(usize, usize, usize)>,
        d_targets: Array2<f64>,
    }

    fn dims() -> ModelDims {
        ModelDims {
            f0: 3,
            f: 4,
            c: 2,
            t: 2,
        }
    }

    /// n=8 instance exercising every head: node loss with two synthetic
    /// nodes, reconstruction, path-class pairs and the centroid head,
    /// with fixed dropout masks.
    fn fixture() -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 8;
        let d = dims();
        let mut s_tilde = Array2::from_shape_fn((n, n), |_| rng.gen_range(0.0..0.3));
        let sym = &s_tilde + &s_tilde.t();
        s_tilde = sym;
        let x = Array2::from_shape_fn((n, d.f0), |_| rng.gen_range(-1.0..1.0));
        let adj: Vec<Vec<usize>> = vec![
            vec![1, 2],
            vec![0, 3],
            vec![0, 3, 4],
            vec![1, 2],
            vec![2, 5],
            vec![4, 6],
            vec![5, 7],
            vec![6],
        ];
        let mut a_dense = Array2::zeros((n, n));
        for (v, nbrs) in adj.iter().enumerate() {
            for &u in nbrs {
                a_dense[[v, u]] = 1.0;
            }
        }
        let p_feat = 0.25;
        let mask = |rng: &mut ChaCha8Rng| {
            Array2::from_shape_fn((n, d.f), |_| {
                if rng.gen::<f64>() > p_feat {
                    1.0 / (1.0 - p_feat)
                } else {
                    0.0
                }
            })
        };
        let drop1 = mask(&mut rng);
        let drop2 = mask(&mut rng);
        let labels = vec![0, 0, 1, 1, 0, 1, 0, 1];
        let node_set = vec![0, 2, 3, 5, 6];
        let mut cols = Array2::zeros((2, n));
        cols[[0, 1]] = 1.0;
        cols[[0, 4]] = 1.0;
        cols[[1, 2]] = 1.0;
        let plan = SynthesisPlan {
            entries: vec![
                SynthEntry {
                    class: 0,
                    src: 0,
                    nn: 4,
                    lambda: 0.3,
                    label: 0,
                },
                SynthEntry {
                    class: 1,
                    src: 3,
                    nn: 5,
                    lambda: 0.8,
                    label: 1,
                },
            ],
            cols,
            duplications: 0,
        };
        let pairs = vec![(0, 1, 1), (0, 7, 3), (2, 4, 1), (1, 6, 3), (3, 4, 2)];
        let d_targets = Array2::from_shape_fn((n, d.t), |_| rng.gen_range(0.0..2.0));
        Fixture {
            s_tilde,
            x,
            adj,
            drop1,
            drop2,
            node_set,
            labels,
            plan,
            a_dense,
            pairs,
            d_targets,
        }
    }

    fn run_check(include_node: bool, include_edge: bool) -> (f64, Vec<(Block, f64)>) {
        let f = fixture();
        let edge = EdgeLossInputs {
            a_dense: &f.a_dense,
            pairs: &f.pairs,
            d_targets: &f.d_targets,
        };
        let inputs = StepInputs {
            s_tilde: &f.s_tilde,
            x: &f.x,
            adj: &f.adj,
            drop1: Some(&f.drop1),
            drop2: Some(&f.drop2),
            node_set: &f.node_set,
            labels: &f.labels,
            synth: if include_node { Some(&f.plan) } else { None },
            edge: if include_edge { Some(&edge) } else { None },
            lambda_edge: 0.7,
            include_node_loss: include_node,
        };
        let mut p = ParamVec::glorot(dims(), 7);
        // jitter every coordinate (biases included) away from zero so
        // no relu sits exactly on its kink during differencing
        let mut jitter = ChaCha8Rng::seed_from_u64(1234);
        for x in &mut p.data {
            *x += jitter.gen_range(0.02..0.1) * if jitter.gen::<bool>() { 1.0 } else { -1.0 };
        }
        let (_, analytic) = forward_backward(&p, &inputs).unwrap();
        let mut worst_overall = 0.0f64;
        let mut per_block = Vec::new();
        for b in ALL_BLOCKS {
            let mut worst = 0.0f64;
            for i in p.block_range(b) {
                let orig = p.data[i];
                let h = 1e-6 * orig.abs().max(1.0);
                p.data[i] = orig + h;
                let lp = forward_loss(&p, &inputs).unwrap().total;
                p.data[i] = orig - h;
                let lm = forward_loss(&p, &inputs).unwrap().total;
                p.data[i] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let a = analytic.data[i];
                let denom = a.abs().max(fd.abs());
                let err = if denom < 1e-8 {
                    (a - fd).abs()
                } else {
                    (a - fd).abs() / denom
                };
                worst = worst.max(err);
            }
            per_block.push((b, worst));
            worst_overall = worst_overall.max(worst);
        }
        (worst_overall, per_block)
    }

    #[test]
    fn zero_loss_point_has_zero_gradient() {
        let f = fixture();
        let inputs = StepInputs {
            s_tilde: &f.s_tilde,
            x: &f.x,
            adj: &f.adj,
            drop1: None,
            drop2: None,
            node_set: &f.node_set,
            labels: &f.labels,
            synth: None,
            edge: None,
            lambda_edge: 1.0,
            include_node_loss: false,
        };
        let p = ParamVec::glorot(dims(), 1);
        let (losses, grads) = forward_backward(&p, &inputs).unwrap();
        assert_eq!(losses.total, 0.0);
        assert!(grads.data.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn full_composite_loss_matches_finite_differences() {
        let (worst, per_block) = run_check(true, true);
        for (b, err) in &per_block {
            assert!(
                *err < 1e-4,
                "block {} relative error {err:.3e}",
                b.name()
            );
        }
        assert!(worst < 1e-4, "worst relative error {worst:.3e}");
    }

    #[test]
    fn node_loss_alone_matches_finite_differences() {
        let (worst, _) = run_check(true, false);
        assert!(worst < 1e-4, "worst relative error {worst:.3e}");
    }

    #[test]
    fn edge_losses_alone_match_finite_differences() {
        let (worst, _) = run_check(false, true);
        assert!(worst < 1e-4, "worst relative error {worst:.3e}");
    }
}
