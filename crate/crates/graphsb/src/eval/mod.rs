//! Experiment orchestration: configuration, the per-seed pipeline
//! (split → enhancement → diffusion → training → metrics), sweeps,
//! ablations, plug-in export and results persistence.

mod csv;

pub use csv::{read_matrix_csv, write_matrix_csv};

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::balance::{
    enhance_structure, normalize_adjacency, relation_diffusion, threshold_in_place,
    EnhancementReport,
};
use crate::error::{Result, SbError};
use crate::graph::{
    generate_sbm, load_graph, make_split, resolve_minority_classes, Graph, MinoritySelection,
    SbmSpec, SplitSpec,
};
use crate::learner::{
    adjacency_aggregate, classifier_hidden, encode, predict_nodes, train, OversampleMode,
    TrainConfig, TrainOutcome,
};
use crate::metrics::{
    accuracy, distance_ratio, macro_f1, per_class_stats, roc_auc_macro, MetricsRecord,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSpec {
    Sbm {
        n1: usize,
        n2: usize,
        p: f64,
        q: f64,
        feature_dim: usize,
        centroid_gap: f64,
    },
    Files {
        edges: PathBuf,
        features: PathBuf,
        labels: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblateMode {
    None,
    /// no structure enhancement
    Se,
    /// no relation diffusion (operator = Â, no edge dropout)
    Rd,
    /// plain-GCN baseline: no SE, no RD, no synthesis, no edge losses
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub rho: f64,
    pub labeled_per_majority: usize,
    pub k_minority: usize,
    /// diffusion teleport weight
    pub alpha: f64,
    /// diffusion iterations T
    pub steps: usize,
    /// post-diffusion sparsity truncation
    pub threshold_eps: f64,
    pub enhance_max_hops: usize,
    pub train: TrainConfig,
    pub ablate: AblateMode,
    pub seeds: Vec<u64>,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSpec::Sbm {
                n1: 50,
                n2: 500,
                p: 0.1,
                q: 0.02,
                feature_dim: 16,
                centroid_gap: 1.0,
            },
            rho: 0.5,
            labeled_per_majority: 20,
            k_minority: 1,
            alpha: 0.15,
            steps: 4,
            threshold_eps: 1e-4,
            enhance_max_hops: 4,
            train: TrainConfig::default(),
            ablate: AblateMode::None,
            seeds: vec![0, 1, 2, 3, 4],
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// FNV-1a over the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf29ce484222325;
        for b in json.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub metrics: Option<MetricsRecord>,
    pub error: Option<String>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

fn mean_std(xs: &[f64]) -> MeanStd {
    if xs.is_empty() {
        return MeanStd::default();
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    MeanStd { mean, std }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub config_hash: String,
    pub seeds_succeeded: usize,
    pub seeds_failed: usize,
    pub accuracy: MeanStd,
    pub macro_f1: MeanStd,
    pub roc_auc: MeanStd,
    pub distance_ratio: Option<MeanStd>,
    pub schema_version: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub per_seed: Vec<SeedResult>,
    pub aggregate: Aggregate,
}

pub fn build_graph(cfg: &ExperimentConfig, seed: u64) -> Result<Graph> {
    match &cfg.dataset {
        DatasetSpec::Sbm {
            n1,
            n2,
            p,
            q,
            feature_dim,
            centroid_gap,
        } => generate_sbm(
            &SbmSpec {
                n1: *n1,
                n2: *n2,
                p: *p,
                q: *q,
                seed,
            },
            *feature_dim,
            *centroid_gap,
        ),
        DatasetSpec::Files {
            edges,
            features,
            labels,
        } => load_graph(edges, features, labels).map(|(g, _)| g),
    }
}

pub struct PreparedSeed {
    pub graph: Graph,
    pub operator: Array2<f64>,
    pub minority_classes: Vec<usize>,
    pub enhancement: Option<EnhancementReport>,
    pub train_cfg: TrainConfig,
}

/// Everything up to (but not including) training for one seed: graph,
/// split, optional structure enhancement and the diffusion operator,
/// honoring the ablation flags.
pub fn prepare_seed(cfg: &ExperimentConfig, seed: u64) -> Result<PreparedSeed> {
    let mut g = build_graph(cfg, seed)?;
    let split = SplitSpec {
        rho: cfg.rho,
        labeled_per_majority: cfg.labeled_per_majority,
        minority: MinoritySelection::KSmallest(cfg.k_minority),
        seed,
    };
    g.masks = make_split(&g, &split)?;
    let minority_classes = resolve_minority_classes(&g, &split.minority)?;

    let use_se = matches!(cfg.ablate, AblateMode::None | AblateMode::Rd);
    let use_rd = matches!(cfg.ablate, AblateMode::None | AblateMode::Se);

    let mut enhancement = None;
    if use_se {
        let (enhanced, report) = enhance_structure(&g, &minority_classes, cfg.enhance_max_hops)?;
        g = enhanced;
        enhancement = Some(report);
    }
    let a_hat = normalize_adjacency(&g);
    let operator = if use_rd {
        let mut d = relation_diffusion(&a_hat, cfg.alpha, cfg.steps)?;
        threshold_in_place(&mut d.s, cfg.threshold_eps);
        d.s
    } else {
        a_hat
    };

    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = seed;
    train_cfg.operator_dropout = use_rd && train_cfg.p_drop > 0.0;
    if cfg.ablate == AblateMode::Both {
        train_cfg.oversample = OversampleMode::Off;
        train_cfg.use_edge_losses = false;
    }
    Ok(PreparedSeed {
        graph: g,
        operator,
        minority_classes,
        enhancement,
        train_cfg,
    })
}

fn evaluate_outcome(
    cfg: &ExperimentConfig,
    prep: &PreparedSeed,
    outcome: &TrainOutcome,
    seed: u64,
    wall_time_s: f64,
) -> Result<(MetricsRecord, Array2<f64>)> {
    let g = &prep.graph;
    let test_nodes: Vec<usize> = (0..g.n).filter(|&v| g.masks.test[v]).collect();
    let truth: Vec<usize> = test_nodes.iter().map(|&v| g.labels[v]).collect();
    let (preds, probs) = predict_nodes(&outcome.best_params, &prep.operator, g, &test_nodes)?;
    let enc_h = encode(&outcome.best_params, &prep.operator, &g.features, None, None)?.h;
    // embedding quality is judged on the representation that feeds the
    // softmax: relu([h ∥ neighborhood-sum]·W1)
    let agg = adjacency_aggregate(&g.adj, &enc_h);
    let h = classifier_hidden(&outcome.best_params, &enc_h, &agg);
    let dr = distance_ratio(&h, &g.labels)?;
    Ok((
        MetricsRecord {
            accuracy: accuracy(&preds, &truth),
            macro_f1: macro_f1(&preds, &truth, g.num_classes),
            roc_auc: roc_auc_macro(&probs, &truth),
            per_class: per_class_stats(&preds, &truth, g.num_classes),
            distance_ratio: dr.ratio,
            distance_ratio_degenerate: dr.ratio.is_none(),
            seed,
            config_hash: cfg.hash(),
            wall_time_s,
        },
        h,
    ))
}

fn write_artifacts(
    dir: &Path,
    seed: u64,
    prep: &PreparedSeed,
    outcome: &TrainOutcome,
    h: &Array2<f64>,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_matrix_csv(h, &dir.join(format!("embeddings_{seed}.csv")))?;
    let mut hist = String::new();
    for rec in &outcome.history {
        hist.push_str(&serde_json::to_string(rec)?);
        hist.push('\n');
    }
    std::fs::write(dir.join(format!("history_{seed}.jsonl")), hist)?;
    if !outcome.rl_trace.is_empty() {
        let mut text = String::from("epoch,class,scale,reward,action\n");
        for row in &outcome.rl_trace {
            text.push_str(&format!(
                "{},{},{},{},{:?}\n",
                row.epoch, row.class, row.scale, row.reward, row.action
            ));
        }
        std::fs::write(dir.join(format!("rl_trace_{seed}.csv")), text)?;
    }
    if let Some(report) = &prep.enhancement {
        let summary = serde_json::json!({
            "majority_mean_degree": report.majority_mean_degree,
            "total_edges_added": report.total_edges_added,
            "treated_nodes": report.per_node.len(),
        });
        std::fs::write(
            dir.join(format!("enhancement_{seed}.json")),
            serde_json::to_string_pretty(&summary)?,
        )?;
    }
    Ok(())
}

/// Runs every seed of the configured experiment; per-seed failures are
/// recorded and do not abort the remaining seeds.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    let mut per_seed = Vec::new();
    for &seed in &cfg.seeds {
        let started = Instant::now();
        let run = prepare_seed(cfg, seed).and_then(|prep| {
            let outcome = train(
                &prep.graph,
                &prep.operator,
                &prep.minority_classes,
                &prep.train_cfg,
            )?;
            let wall = started.elapsed().as_secs_f64();
            let (metrics, h) = evaluate_outcome(cfg, &prep, &outcome, seed, wall)?;
            if let Some(dir) = &cfg.out_dir {
                write_artifacts(dir, seed, &prep, &outcome, &h)?;
            }
            Ok((metrics, outcome))
        });
        match run {
            Ok((metrics, outcome)) => per_seed.push(SeedResult {
                seed,
                metrics: Some(metrics),
                error: None,
                best_epoch: outcome.best_epoch,
                epochs_run: outcome.state.epoch,
                stopped_early: outcome.stopped_early,
            }),
            Err(e) => per_seed.push(SeedResult {
                seed,
                metrics: None,
                error: Some(e.to_string()),
                best_epoch: 0,
                epochs_run: 0,
                stopped_early: false,
            }),
        }
    }

    let ok: Vec<&MetricsRecord> = per_seed.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let ratios: Vec<f64> = ok.iter().filter_map(|m| m.distance_ratio).collect();
    let aggregate = Aggregate {
        config_hash: cfg.hash(),
        seeds_succeeded: ok.len(),
        seeds_failed: per_seed.len() - ok.len(),
        accuracy: mean_std(&ok.iter().map(|m| m.accuracy).collect::<Vec<_>>()),
        macro_f1: mean_std(&ok.iter().map(|m| m.macro_f1).collect::<Vec<_>>()),
        roc_auc: mean_std(&ok.iter().map(|m| m.roc_auc).collect::<Vec<_>>()),
        distance_ratio: if ratios.is_empty() {
            None
        } else {
            Some(mean_std(&ratios))
        },
        schema_version: 1,
    };

    let results = ExperimentResults {
        per_seed,
        aggregate,
    };
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        let mut lines = String::new();
        for r in &results.per_seed {
            lines.push_str(&serde_json::to_string(r)?);
            lines.push('\n');
        }
        std::fs::write(dir.join("results.jsonl"), lines)?;
        std::fs::write(
            dir.join("aggregate.json"),
            serde_json::to_string_pretty(&results.aggregate)?,
        )?;
    }
    Ok(results)
}

/// The labeled-imbalance sweep: one aggregate per rho.
pub fn sweep_rho(cfg: &ExperimentConfig, rhos: &[f64]) -> Result<Vec<(f64, Aggregate)>> {
    let mut out = Vec::new();
    for &rho in rhos {
        let mut c = cfg.clone();
        c.rho = rho;
        if let Some(dir) = &cfg.out_dir {
            c.out_dir = Some(dir.join(format!("rho_{rho}")));
        }
        out.push((rho, run_experiment(&c)?.aggregate));
    }
    Ok(out)
}

/// Full model plus the three ablations.
pub fn ablate_suite(cfg: &ExperimentConfig) -> Result<Vec<(AblateMode, Aggregate)>> {
    let mut out = Vec::new();
    for mode in [AblateMode::None, AblateMode::Se, AblateMode::Rd, AblateMode::Both] {
        let mut c = cfg.clone();
        c.ablate = mode;
        if let Some(dir) = &cfg.out_dir {
            c.out_dir = Some(dir.join(format!("ablate_{mode:?}").to_lowercase()));
        }
        out.push((mode, run_experiment(&c)?.aggregate));
    }
    Ok(out)
}

/// Plug-in mode: run only the structural-balance stage and export the
/// enhanced edge list plus the dense diffusion operator.
pub fn export_diffusion(
    cfg: &ExperimentConfig,
    seed: u64,
    operator_out: &Path,
    edges_out: Option<&Path>,
) -> Result<()> {
    let prep = prepare_seed(cfg, seed)?;
    write_matrix_csv(&prep.operator, operator_out)?;
    if let Some(path) = edges_out {
        let mut text = String::new();
        for (u, nbrs) in prep.graph.adj.iter().enumerate() {
            for &v in nbrs {
                if u < v {
                    text.push_str(&format!("{u} {v}\n"));
                }
            }
        }
        std::fs::write(path, text)?;
    }
    Ok(())
}

/// `sb metrics --from` input: probabilities plus ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsDump {
    pub probabilities: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

pub fn metrics_from_dump(path: &Path) -> Result<MetricsRecord> {
    let text = std::fs::read_to_string(path)?;
    let dump: MetricsDump = serde_json::from_str(&text)?;
    if dump.probabilities.len() != dump.labels.len() {
        return Err(SbError::Shape(format!(
            "{} probability rows vs {} labels",
            dump.probabilities.len(),
            dump.labels.len()
        )));
    }
    if dump.probabilities.is_empty() {
        return Err(SbError::Config("empty metrics dump".into()));
    }
    let c = dump.probabilities[0].len();
    let n = dump.labels.len();
    let mut probs = Array2::zeros((n, c));
    for (i, row) in dump.probabilities.iter().enumerate() {
        if row.len() != c {
            return Err(SbError::Shape(format!("ragged probability row {i}")));
        }
        for (j, &v) in row.iter().enumerate() {
            probs[[i, j]] = v;
        }
    }
    let preds: Vec<usize> = (0..n)
        .map(|i| {
            (0..c)
                .max_by(|&a, &b| probs[[i, a]].partial_cmp(&probs[[i, b]]).unwrap())
                .unwrap()
        })
        .collect();
    let num_classes = dump.labels.iter().copied().max().unwrap() + 1;
    Ok(MetricsRecord {
        accuracy: accuracy(&preds, &dump.labels),
        macro_f1: macro_f1(&preds, &dump.labels, num_classes),
        roc_auc: roc_auc_macro(&probs, &dump.labels),
        per_class: per_class_stats(&preds, &dump.labels, num_classes),
        distance_ratio: None,
        distance_ratio_degenerate: false,
        seed: 0,
        config_hash: String::new(),
        wall_time_s: 0.0,
    })
}
