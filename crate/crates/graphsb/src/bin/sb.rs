use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use graphsb::eval::{
    ablate_suite, export_diffusion, metrics_from_dump, run_experiment, sweep_rho, AblateMode,
    Aggregate, ExperimentConfig,
};
use graphsb::learner::OversampleMode;
use graphsb::theory::theory_report;

#[derive(Parser)]
#[command(
    name = "sb",
    about = "Structure-balanced imbalanced node classification pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// JSON experiment configuration; individual flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// single seed (shorthand for --seeds with one entry)
    #[arg(long)]
    seed: Option<u64>,
    /// number of seeds, run as 0..N
    #[arg(long)]
    seeds: Option<u64>,
    /// labeled-minority fraction rho
    #[arg(long)]
    rho: Option<f64>,
    /// se | rd | both
    #[arg(long)]
    ablate: Option<String>,
    /// fixed:<x> or rl
    #[arg(long)]
    oversample_scale: Option<String>,
    /// artifact directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate over the configured seeds
    Run(CommonOpts),
    /// Run the imbalance sweep over a list of rho values
    SweepRho {
        #[command(flatten)]
        common: CommonOpts,
        /// comma-separated rho values
        #[arg(long, default_value = "0.1,0.3,0.5,0.7,0.9")]
        rhos: String,
    },
    /// Run the full model and all three ablations
    Ablate(CommonOpts),
    /// Analytical and Monte-Carlo diagnostics for the propagation model
    Theory {
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value_t = 0.1)]
        q: f64,
        /// majority/minority size ratio
        #[arg(long, default_value_t = 10.0)]
        beta: f64,
        #[arg(long, default_value_t = 200)]
        n1: usize,
        #[arg(long, default_value_t = 8)]
        layers: usize,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// write the report as JSON here instead of stdout-only
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plug-in mode: write the diffusion operator (and enhanced edges)
    ExportDiffusion {
        #[command(flatten)]
        common: CommonOpts,
        /// output CSV for the dense operator
        #[arg(long)]
        operator: PathBuf,
        /// optional output edge list of the enhanced graph
        #[arg(long)]
        edges: Option<PathBuf>,
    },
    /// Recompute metrics from a probability dump
    Metrics {
        /// JSON file with {"probabilities": [[..]], "labels": [..]}
        #[arg(long)]
        from: PathBuf,
    },
}

fn parse_ablate(s: &str) -> Result<AblateMode, String> {
    match s {
        "none" => Ok(AblateMode::None),
        "se" => Ok(AblateMode::Se),
        "rd" => Ok(AblateMode::Rd),
        "both" => Ok(AblateMode::Both),
        other => Err(format!("unknown ablation '{other}' (use se|rd|both)")),
    }
}

fn parse_oversample(s: &str) -> Result<OversampleMode, String> {
    if s == "rl" {
        return Ok(OversampleMode::Rl);
    }
    if s == "off" {
        return Ok(OversampleMode::Off);
    }
    if let Some(x) = s.strip_prefix("fixed:") {
        return x
            .parse::<f64>()
            .map(OversampleMode::Fixed)
            .map_err(|e| format!("bad fixed scale '{x}': {e}"));
    }
    Err(format!(
        "unknown oversample mode '{s}' (use fixed:<x>, rl or off)"
    ))
}

fn resolve_config(common: &CommonOpts) -> Result<ExperimentConfig, String> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_json_file(path)
            .map_err(|e| format!("reading {}: {e}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(n) = common.seeds {
        cfg.seeds = (0..n).collect();
    }
    if let Some(rho) = common.rho {
        cfg.rho = rho;
    }
    if let Some(s) = &common.ablate {
        cfg.ablate = parse_ablate(s)?;
    }
    if let Some(s) = &common.oversample_scale {
        cfg.train.oversample = parse_oversample(s)?;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn print_aggregate(label: &str, a: &Aggregate) {
    let r = a
        .distance_ratio
        .map(|m| format!("{:.3}±{:.3}", m.mean, m.std))
        .unwrap_or_else(|| "n/a".into());
    println!(
        "{label}: acc {:.4}±{:.4}  macro-F1 {:.4}±{:.4}  AUC {:.4}±{:.4}  R {r}  ({} ok, {} failed)",
        a.accuracy.mean,
        a.accuracy.std,
        a.macro_f1.mean,
        a.macro_f1.std,
        a.roc_auc.mean,
        a.roc_auc.std,
        a.seeds_succeeded,
        a.seeds_failed
    );
}

fn check_threads_env() -> Result<(), String> {
    // computation is single-threaded; the cap is accepted and validated
    // so scripted callers can set it uniformly
    if let Ok(v) = std::env::var("SB_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|e| format!("SB_THREADS='{v}' is not a positive integer: {e}"))?;
        if n == 0 {
            return Err("SB_THREADS must be >= 1".into());
        }
    }
    Ok(())
}

fn run() -> Result<(), String> {
    check_threads_env()?;
    match Cli::parse().command {
        Command::Run(common) => {
            let cfg = resolve_config(&common)?;
            let res = run_experiment(&cfg).map_err(|e| e.to_string())?;
            for r in &res.per_seed {
                match (&r.metrics, &r.error) {
                    (Some(m), _) => println!(
                        "seed {}: acc {:.4}  macro-F1 {:.4}  AUC {:.4}  best epoch {}  ({:.1}s)",
                        r.seed, m.accuracy, m.macro_f1, m.roc_auc, r.best_epoch, m.wall_time_s
                    ),
                    (None, Some(e)) => println!("seed {}: FAILED: {e}", r.seed),
                    _ => unreachable!(),
                }
            }
            print_aggregate("aggregate", &res.aggregate);
            Ok(())
        }
        Command::SweepRho { common, rhos } => {
            let cfg = resolve_config(&common)?;
            let rhos: Vec<f64> = rhos
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|e| format!("bad rho: {e}")))
                .collect::<Result<_, _>>()?;
            for (rho, agg) in sweep_rho(&cfg, &rhos).map_err(|e| e.to_string())? {
                print_aggregate(&format!("rho {rho}"), &agg);
            }
            Ok(())
        }
        Command::Ablate(common) => {
            let cfg = resolve_config(&common)?;
            for (mode, agg) in ablate_suite(&cfg).map_err(|e| e.to_string())? {
                print_aggregate(&format!("{mode:?}").to_lowercase(), &agg);
            }
            Ok(())
        }
        Command::Theory {
            p,
            q,
            beta,
            n1,
            layers,
            seeds,
            seed,
            out,
        } => {
            let report =
                theory_report(p, q, beta, n1, layers, seeds, seed).map_err(|e| e.to_string())?;
            let json = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
            println!("{json}");
            if let Some(path) = out {
                std::fs::write(&path, json).map_err(|e| e.to_string())?;
            }
            Ok(())
        }
        Command::ExportDiffusion {
            common,
            operator,
            edges,
        } => {
            let cfg = resolve_config(&common)?;
            let seed = cfg.seeds.first().copied().unwrap_or(0);
            export_diffusion(&cfg, seed, &operator, edges.as_deref())
                .map_err(|e| e.to_string())?;
            println!("wrote operator to {}", operator.display());
            if let Some(e) = edges {
                println!("wrote enhanced edge list to {}", e.display());
            }
            Ok(())
        }
        Command::Metrics { from } => {
            let rec = metrics_from_dump(&from).map_err(|e| e.to_string())?;
            println!("{}", serde_json::to_string_pretty(&rec).map_err(|e| e.to_string())?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
