//! Two-phase training: edge-loss-only structural initialization, then
//! the joint node + edge objective with per-epoch operator dropout,
//! mixup synthesis and optional Q-learning scale control.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::balance::{apply_dropout, sample_dropout_mask};
use crate::error::{Result, SbError};
use crate::graph::{capped_distance_classes, Graph};
use crate::learner::adam::Adam;
use crate::learner::model::{
    adjacency_aggregate, classify, encode, forward_backward, EdgeLossInputs, LossBreakdown,
    StepInputs,
};
use crate::learner::params::{Block, ModelDims, ParamVec};
use crate::metrics::{accuracy, macro_f1};
use crate::synthesis::{
    build_plan, centroid_distances, initial_scale, kmeans, Action, QController, QControllerConfig,
    SynthesisPlan,
};

pub const PATH_LENGTH_CAP: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OversampleMode {
    /// no synthetic nodes at all
    Off,
    /// fixed scale for every minority class
    Fixed(f64),
    /// per-class Q-learning controller starting from N/(M|C_i|)
    Rl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Pretrain,
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub pretrain_epochs: usize,
    pub patience: usize,
    pub lambda_edge: f64,
    pub feat_dropout: f64,
    pub p_drop: f64,
    pub eta: f64,
    /// |S| = pair_sample_mult × n pairs per epoch for the local loss
    pub pair_sample_mult: usize,
    pub rl_interval: usize,
    pub oversample: OversampleMode,
    /// false = plain-GCN baseline: no edge losses, no pretraining
    pub use_edge_losses: bool,
    /// operator edge dropout (part of relation diffusion)
    pub operator_dropout: bool,
    pub q: QControllerConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 32,
            lr: 0.001,
            weight_decay: 5e-4,
            max_epochs: 4000,
            pretrain_epochs: 100,
            patience: 200,
            lambda_edge: 1.0,
            feat_dropout: 0.5,
            p_drop: 0.1,
            eta: 0.5,
            pair_sample_mult: 10,
            rl_interval: 10,
            oversample: OversampleMode::Rl,
            use_edge_losses: true,
            operator_dropout: true,
            q: QControllerConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainState {
    pub params: ParamVec,
    pub opt: Adam,
    pub epoch: usize,
    pub phase: Phase,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub losses: LossBreakdown,
    pub val_accuracy: f64,
    pub val_macro_f1: f64,
    pub synthetic_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RlTraceRow {
    pub epoch: usize,
    pub class: usize,
    pub scale: f64,
    pub reward: f64,
    pub action: Action,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub best_params: ParamVec,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    pub history: Vec<EpochRecord>,
    pub rl_trace: Vec<RlTraceRow>,
    pub stopped_early: bool,
}

fn feature_dropout_mask(n: usize, f: usize, p: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_fn((n, f), |_| if rng.gen::<f64>() > p { keep } else { 0.0 })
}

/// Evaluation-mode argmax predictions for `nodes` plus the full
/// probability matrix.
pub fn predict_nodes(
    params: &ParamVec,
    s: &Array2<f64>,
    g: &Graph,
    nodes: &[usize],
) -> Result<(Vec<usize>, Array2<f64>)> {
    let enc = encode(params, s, &g.features, None, None)?;
    let agg = adjacency_aggregate(&g.adj, &enc.h);
    let mut probs = Array2::zeros((nodes.len(), params.dims.c));
    let mut preds = Vec::with_capacity(nodes.len());
    for (i, &v) in nodes.iter().enumerate() {
        let p = classify(params, enc.h.row(v), agg.row(v));
        let arg = p
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        preds.push(arg);
        probs.row_mut(i).assign(&p);
    }
    Ok((preds, probs))
}

/// Trains on `g` (already structure-enhanced as configured) with the
/// diffusion operator `s` (already built; the identity-free Â when
/// relation diffusion is ablated).
pub fn train(
    g: &Graph,
    s: &Array2<f64>,
    minority_classes: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let n = g.n;
    let dims = ModelDims {
        f0: g.features.ncols(),
        f: cfg.hidden,
        c: g.num_classes,
        t: g.num_classes,
    };
    let mut params = ParamVec::glorot(dims, cfg.seed);
    let mut opt = Adam::new(dims.total_len(), cfg.lr, cfg.weight_decay);

    let node_set = g.masks.train_nodes();
    if node_set.is_empty() {
        return Err(SbError::Config("no training-labeled nodes".into()));
    }
    let val_nodes: Vec<usize> = (0..n).filter(|&v| g.masks.val[v]).collect();
    let val_labels: Vec<usize> = val_nodes.iter().map(|&v| g.labels[v]).collect();

    let a_dense = g.adjacency_dense();
    let path_classes = capped_distance_classes(g, PATH_LENGTH_CAP);

    // frozen targets of the global edge loss, from the initial
    // untrained embeddings
    let h0 = encode(&params, s, &g.features, None, None)?.h;
    let centroids = kmeans(&h0, dims.t, 50, cfg.seed ^ xk_means_salt())?;
    let d_targets = centroid_distances(&h0, &centroids);

    // over-sampling scales
    let mut fixed_scales: Vec<(usize, f64)> = Vec::new();
    let mut controllers: Vec<(usize, QController)> = Vec::new();
    match &cfg.oversample {
        OversampleMode::Off => {}
        OversampleMode::Fixed(x) => {
            fixed_scales = minority_classes.iter().map(|&c| (c, *x)).collect();
        }
        OversampleMode::Rl => {
            for (i, &class) in minority_classes.iter().enumerate() {
                let size = g.labels.iter().filter(|&&y| y == class).count();
                let init = initial_scale(n, g.num_classes, size);
                let q = QControllerConfig {
                    alpha_max: (2.0 * init).max(1.0),
                    ..cfg.q.clone()
                };
                controllers.push((class, QController::new(init, q, cfg.seed + 77 * i as u64)));
            }
        }
    }

    let mut history = Vec::new();
    let mut rl_trace = Vec::new();
    let mut best_params = params.clone();
    let mut best_epoch = 0usize;
    let mut best_val_f1 = f64::NEG_INFINITY;
    let mut stopped_early = false;
    let mut final_phase = Phase::Joint;
    let mut epochs_run = 0usize;

    for epoch in 0..cfg.max_epochs {
        epochs_run = epoch + 1;
        let phase = if cfg.use_edge_losses && epoch < cfg.pretrain_epochs {
            Phase::Pretrain
        } else {
            Phase::Joint
        };
        final_phase = phase;
        let mut epoch_rng =
            ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1_000_003 * (epoch as u64 + 1)));

        // evaluation pass (no dropout, no synthetic nodes)
        let (val_acc, val_f1) = if val_nodes.is_empty() {
            (0.0, 0.0)
        } else {
            let (preds, _) = predict_nodes(&params, s, g, &val_nodes)?;
            (
                accuracy(&preds, &val_labels),
                macro_f1(&preds, &val_labels, g.num_classes),
            )
        };

        if phase == Phase::Joint {
            if val_f1 > best_val_f1 {
                best_val_f1 = val_f1;
                best_epoch = epoch;
                best_params = params.clone();
            } else if epoch - best_epoch > cfg.patience {
                stopped_early = true;
                break;
            }
            if !controllers.is_empty() && epoch % cfg.rl_interval == 0 {
                for (class, ctrl) in &mut controllers {
                    let step = ctrl.step(val_acc);
                    rl_trace.push(RlTraceRow {
                        epoch,
                        class: *class,
                        scale: step.scale,
                        reward: step.reward,
                        action: step.action,
                    });
                }
            }
        }

        // stochastic ingredients of this step
        let s_tilde;
        if cfg.operator_dropout && cfg.p_drop > 0.0 {
            let mask = sample_dropout_mask(n, cfg.p_drop, cfg.seed.wrapping_add(epoch as u64))?;
            s_tilde = apply_dropout(s, &mask);
        } else {
            s_tilde = s.clone();
        }
        let (drop1, drop2) = if cfg.feat_dropout > 0.0 {
            (
                Some(feature_dropout_mask(n, dims.f, cfg.feat_dropout, &mut epoch_rng)),
                Some(feature_dropout_mask(n, dims.f, cfg.feat_dropout, &mut epoch_rng)),
            )
        } else {
            (None, None)
        };

        let plan: Option<SynthesisPlan> = if phase == Phase::Joint {
            let scales: Vec<(usize, f64)> = if !controllers.is_empty() {
                controllers.iter().map(|(c, q)| (*c, q.scale)).collect()
            } else {
                fixed_scales.clone()
            };
            if scales.iter().any(|&(_, x)| x > 0.0) {
                // plan from the current evaluation-mode embeddings
                let h_eval = encode(&params, s, &g.features, None, None)?.h;
                Some(build_plan(
                    &h_eval,
                    &g.labels,
                    &g.masks.train,
                    &scales,
                    params.view(Block::EdgeW),
                    cfg.eta,
                    &mut epoch_rng,
                ))
            } else {
                None
            }
        } else {
            None
        };

        let pairs: Vec<(usize, usize, usize)> = if cfg.use_edge_losses {
            (0..cfg.pair_sample_mult * n)
                .map(|_| {
                    let v = epoch_rng.gen_range(0..n);
                    let mut u = epoch_rng.gen_range(0..n - 1);
                    if u >= v {
                        u += 1;
                    }
                    (v, u, path_classes[[v, u]] as usize)
                })
                .collect()
        } else {
            Vec::new()
        };
        let edge_inputs = EdgeLossInputs {
            a_dense: &a_dense,
            pairs: &pairs,
            d_targets: &d_targets,
        };

        let inputs = StepInputs {
            s_tilde: &s_tilde,
            x: &g.features,
            adj: &g.adj,
            drop1: drop1.as_ref(),
            drop2: drop2.as_ref(),
            node_set: &node_set,
            labels: &g.labels,
            synth: plan.as_ref(),
            edge: if cfg.use_edge_losses {
                Some(&edge_inputs)
            } else {
                None
            },
            lambda_edge: cfg.lambda_edge,
            include_node_loss: phase == Phase::Joint,
        };
        let (losses, grads) = forward_backward(&params, &inputs)?;
        if !losses.total.is_finite() {
            return Err(SbError::Diverged {
                epoch,
                msg: format!(
                    "loss became non-finite: node={} rec={} local={} global={}",
                    losses.node, losses.rec, losses.local, losses.global
                ),
            });
        }
        opt.step(&mut params.data, &grads.data);
        params.assert_finite()?;

        history.push(EpochRecord {
            epoch,
            phase,
            losses,
            val_accuracy: val_acc,
            val_macro_f1: val_f1,
            synthetic_count: plan.as_ref().map_or(0, |p| p.entries.len()),
        });
    }

    if best_val_f1 == f64::NEG_INFINITY {
        best_params = params.clone();
        best_epoch = epochs_run.saturating_sub(1);
        best_val_f1 = 0.0;
    }
    Ok(TrainOutcome {
        state: TrainState {
            params,
            opt,
            epoch: epochs_run,
            phase: final_phase,
        },
        best_params,
        best_epoch,
        best_val_f1,
        history,
        rl_trace,
        stopped_early,
    })
}

fn xk_means_salt() -> u64 {
    0x6b6d65616e73
}

pub fn save_checkpoint(state: &TrainState, path: &std::path::Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer(std::io::BufWriter::new(file), state)?;
    Ok(())
}

pub fn load_checkpoint(path: &std::path::Path) -> Result<TrainState> {
    let file = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}
