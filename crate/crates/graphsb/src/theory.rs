//! Numerical verification lab for the structural-imbalance analysis:
//! degree disparity, path-weight dilution, gradient dominance, feature
//! assimilation and the b-ary-tree adjacency-power decay.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SbError};
use crate::graph::{generate_sbm, Graph, SbmSpec};

/// gamma = (q + p beta)/(p + q beta), the expected majority/minority
/// degree ratio.
pub fn degree_disparity(p: f64, q: f64, beta: f64) -> f64 {
    (q + p * beta) / (p + q * beta)
}

/// Expected minority degree n1 (p + q beta).
pub fn expected_minority_degree(n1: usize, p: f64, q: f64, beta: f64) -> f64 {
    n1 as f64 * (p + q * beta)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropagationMatrix {
    pub m: [[f64; 2]; 2],
    pub lambda1: f64,
    pub lambda2: f64,
}

fn eig_2x2(m: &[[f64; 2]; 2]) -> (f64, f64) {
    let trace = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (trace * trace - 4.0 * det).max(0.0).sqrt();
    ((trace + disc) / 2.0, (trace - disc) / 2.0)
}

/// The two-class propagation matrix in the form
/// [[p/(p+q beta), q beta/(q+p beta)], [q/(p+q beta), p beta/(q+p beta)]]
/// with eigenvalues from the closed-form 2x2 solve.
pub fn propagation_matrix(p: f64, q: f64, beta: f64) -> PropagationMatrix {
    let m = [
        [p / (p + q * beta), q * beta / (q + p * beta)],
        [q / (p + q * beta), p * beta / (q + p * beta)],
    ];
    let (lambda1, lambda2) = eig_2x2(&m);
    PropagationMatrix { m, lambda1, lambda2 }
}

/// Row-stochastic variant of the propagation matrix: the expected class
/// mixing under mean neighbor aggregation. Rows sum to one, so
/// lambda1 = 1 exactly and the centroid difference is a left
/// eigenvector for lambda2. This is the operator the assimilation
/// experiments iterate.
pub fn mean_propagation_matrix(p: f64, q: f64, beta: f64) -> PropagationMatrix {
    let m = [
        [p / (p + q * beta), q * beta / (p + q * beta)],
        [q / (q + p * beta), p * beta / (q + p * beta)],
    ];
    let (lambda1, lambda2) = eig_2x2(&m);
    PropagationMatrix { m, lambda1, lambda2 }
}

/// Theorem-level path weight prediction
/// (wnorm / d1)^l * ((beta+gamma)/(gamma (beta+1)))^l.
pub fn path_weight_expectation(
    p: f64,
    q: f64,
    beta: f64,
    l: usize,
    d1: f64,
    wnorm: f64,
) -> f64 {
    let gamma = degree_disparity(p, q, beta);
    let per_hop = (beta + gamma) / (gamma * (beta + 1.0));
    (wnorm / d1).powi(l as i32) * per_hop.powi(l as i32)
}

/// Monte-Carlo estimator for the path weight: mean over samples of the
/// product of inverse degrees of l uniformly drawn nodes, matching the
/// class-mixture argument behind the closed form.
pub fn mc_path_weight(g: &Graph, l: usize, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..samples {
        let mut product = 1.0;
        for _ in 0..l {
            let v = rng.gen_range(0..g.n);
            let d = g.degree(v).max(1) as f64;
            product /= d;
        }
        acc += product;
    }
    acc / samples as f64
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradientDominanceResult {
    pub betas: Vec<f64>,
    /// minority/majority class gradient-contribution ratio per beta,
    /// averaged over seeds
    pub ratios: Vec<f64>,
    pub ratio_std_errs: Vec<f64>,
    /// slope of log(ratio) against log(1/beta)
    pub loglog_slope: f64,
    pub seeds: usize,
}

/// One-step linear GCN with row-mean aggregation: per-node gradient
/// contribution of the squared-error loss against class targets, summed
/// per class; reported as minority/majority ratio.
pub fn gradient_dominance_experiment(
    n1: usize,
    p: f64,
    q: f64,
    betas: &[f64],
    depth: usize,
    seeds: usize,
    master_seed: u64,
) -> Result<GradientDominanceResult> {
    let dim = 8;
    let mut ratios = Vec::new();
    let mut std_errs = Vec::new();
    for (bi, &beta) in betas.iter().enumerate() {
        let n2 = (n1 as f64 * beta).round() as usize;
        let mut per_seed = Vec::new();
        for s in 0..seeds {
            let seed = master_seed
                .wrapping_add(1000 * bi as u64)
                .wrapping_add(s as u64);
            let g = generate_sbm(
                &SbmSpec {
                    n1,
                    n2,
                    p,
                    q,
                    seed,
                },
                dim,
                2.0,
            )?;
            let n = g.n;
            let mut h = g.features.clone();
            for _ in 0..depth {
                h = row_mean_aggregate(&g, &h, true);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let w = Array2::from_shape_fn((dim, 2), |_| 0.3 * standard_normal(&mut rng));
            let out = h.dot(&w);
            let mut class_grad = [0.0f64; 2];
            for v in 0..n {
                let y = g.labels[v];
                let mut err_sq = 0.0;
                for c in 0..2 {
                    let target = if c == y { 1.0 } else { 0.0 };
                    let e = out[[v, c]] - target;
                    err_sq += e * e;
                }
                let x_norm: f64 = h.row(v).iter().map(|x| x * x).sum::<f64>().sqrt();
                class_grad[y] += x_norm * err_sq.sqrt();
            }
            per_seed.push(class_grad[0] / class_grad[1]);
        }
        let mean = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
        let var = per_seed
            .iter()
            .map(|r| (r - mean) * (r - mean))
            .sum::<f64>()
            / (per_seed.len() - 1).max(1) as f64;
        ratios.push(mean);
        std_errs.push((var / per_seed.len() as f64).sqrt());
    }
    let xs: Vec<f64> = betas.iter().map(|b| (1.0 / b).ln()).collect();
    let ys: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
    let loglog_slope = least_squares_slope(&xs, &ys);
    Ok(GradientDominanceResult {
        betas: betas.to_vec(),
        ratios,
        ratio_std_errs: std_errs,
        loglog_slope,
        seeds,
    })
}

/// Row-mean neighbor aggregation; `self_loop` adds the node itself to
/// its neighborhood. Isolated nodes keep their own value.
fn row_mean_aggregate(g: &Graph, h: &Array2<f64>, self_loop: bool) -> Array2<f64> {
    let (n, f) = (h.nrows(), h.ncols());
    let mut out = Array2::zeros((n, f));
    for v in 0..n {
        let mut count = 0.0;
        let mut acc = Array1::<f64>::zeros(f);
        if self_loop {
            acc += &h.row(v);
            count += 1.0;
        }
        for &u in &g.adj[v] {
            acc += &h.row(u);
            count += 1.0;
        }
        if count == 0.0 {
            out.row_mut(v).assign(&h.row(v));
        } else {
            out.row_mut(v).assign(&(acc / count));
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssimilationResult {
    /// per-layer ratio ||Delta^(l)|| / ||Delta^(l-1)|| of the exact
    /// expectation recursion z^(l) = (M W) z^(l-1)
    pub recursion_ratios: Vec<f64>,
    /// fitted per-layer decay rate measured on sampled SBM graphs
    pub mc_rate_mean: f64,
    pub mc_rate_std: f64,
    pub predicted_rate: f64,
    pub seeds: usize,
}

/// Propagates exact class-centroid features through `layers` rounds of
/// mean neighbor aggregation scaled by `sigma`, and fits the decay rate
/// of the centroid distance; also iterates the expectation recursion.
pub fn feature_assimilation_experiment(
    spec: &SbmSpec,
    layers: usize,
    sigma: f64,
    seeds: usize,
) -> Result<AssimilationResult> {
    if layers < 2 {
        return Err(SbError::Config("need at least 2 layers".into()));
    }
    let beta = spec.beta();
    let m = mean_propagation_matrix(spec.p, spec.q, beta);
    let predicted_rate = sigma * m.lambda2;

    // exact recursion on the 2-vector of class centroids (scalar dim)
    let mut z = [1.0f64, -1.0f64];
    let mut prev = (z[0] - z[1]).abs();
    let mut recursion_ratios = Vec::new();
    for _ in 0..layers {
        let z0 = sigma * (m.m[0][0] * z[0] + m.m[0][1] * z[1]);
        let z1 = sigma * (m.m[1][0] * z[0] + m.m[1][1] * z[1]);
        z = [z0, z1];
        let delta = (z[0] - z[1]).abs();
        recursion_ratios.push(delta / prev);
        prev = delta;
    }

    // graph-level Monte-Carlo
    let dim = 4;
    let mut rates = Vec::new();
    for s in 0..seeds {
        let g = generate_sbm(
            &SbmSpec {
                seed: spec.seed.wrapping_add(s as u64),
                ..*spec
            },
            dim,
            0.0,
        )?;
        // exact centroid features: +-1 on the first axis
        let mut h = Array2::zeros((g.n, dim));
        for v in 0..g.n {
            h[[v, 0]] = if g.labels[v] == 0 { 1.0 } else { -1.0 };
        }
        let mut log_deltas = Vec::new();
        for _ in 0..layers {
            h = sigma * row_mean_aggregate(&g, &h, false);
            let delta = centroid_distance(&g, &h);
            log_deltas.push(delta.ln());
        }
        let xs: Vec<f64> = (1..=layers).map(|l| l as f64).collect();
        rates.push(least_squares_slope(&xs, &log_deltas).exp());
    }
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    let var = rates.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()
        / (rates.len() - 1).max(1) as f64;
    Ok(AssimilationResult {
        recursion_ratios,
        mc_rate_mean: mean,
        mc_rate_std: var.sqrt(),
        predicted_rate,
        seeds,
    })
}

fn centroid_distance(g: &Graph, h: &Array2<f64>) -> f64 {
    let f = h.ncols();
    let mut mu = [vec![0.0; f], vec![0.0; f]];
    let mut counts = [0usize; 2];
    for v in 0..g.n {
        let y = g.labels[v];
        counts[y] += 1;
        for j in 0..f {
            mu[y][j] += h[[v, j]];
        }
    }
    let mut dist_sq = 0.0;
    for j in 0..f {
        let d = mu[0][j] / counts[0] as f64 - mu[1][j] / counts[1] as f64;
        dist_sq += d * d;
    }
    dist_sq.sqrt()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeDecayRow {
    pub r: usize,
    /// total mass reaching the depth-(r+1) level in r+1 hops
    pub level_mass: f64,
    /// single root-to-leaf entry of A_hat^(r+1)
    pub entry: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeDecayResult {
    pub branching: usize,
    pub rows: Vec<TreeDecayRow>,
    /// fitted slope of log(level_mass) against r
    pub fitted_exponent: f64,
    /// the -log b reference rate
    pub predicted_exponent: f64,
}

/// Builds a complete b-ary tree of depth r_max+1, computes powers of the
/// self-loop-normalized adjacency and tabulates the information mass
/// reaching depth r+1 in exactly r+1 hops.
pub fn tree_oversquash_decay(b: usize, r_max: usize) -> Result<TreeDecayResult> {
    if b < 1 || r_max < 2 {
        return Err(SbError::Config("need b >= 1 and r_max >= 2".into()));
    }
    let depth = r_max + 1;
    // build tree
    let mut edges = Vec::new();
    let mut level = vec![0usize];
    let mut frontier = vec![0usize];
    let mut next_id = 1usize;
    for d in 1..=depth {
        let mut next = Vec::new();
        for &u in &frontier {
            for _ in 0..b {
                edges.push((u, next_id));
                level.push(d);
                next.push(next_id);
                next_id += 1;
            }
        }
        frontier = next;
    }
    let n = next_id;
    let g = Graph::new(n, &edges, Array2::zeros((n, 1)), vec![0; n])?;
    let a_hat = crate::balance::normalize_adjacency(&g);

    let mut rows = Vec::new();
    let mut power = a_hat.dot(&a_hat); // A_hat^2 for r = 1
    for r in 1..=r_max {
        let target_depth = r + 1;
        let mut mass = 0.0;
        let mut entry = 0.0;
        for s in 0..n {
            if level[s] == target_depth {
                mass += power[[0, s]];
                if entry == 0.0 {
                    entry = power[[0, s]];
                }
            }
        }
        rows.push(TreeDecayRow {
            r,
            level_mass: mass,
            entry,
        });
        if r < r_max {
            power = a_hat.dot(&power);
        }
    }
    let xs: Vec<f64> = rows.iter().map(|row| row.r as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|row| row.level_mass.ln()).collect();
    Ok(TreeDecayResult {
        branching: b,
        rows,
        fitted_exponent: least_squares_slope(&xs, &ys),
        predicted_exponent: -(b as f64).ln(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheoryReport {
    pub p: f64,
    pub q: f64,
    pub beta: f64,
    pub gamma: f64,
    pub propagation: PropagationMatrix,
    pub mean_propagation: PropagationMatrix,
    pub assimilation: AssimilationResult,
    pub gradient_dominance: GradientDominanceResult,
}

/// Full report over the standard battery, used by the `sb theory` verb.
pub fn theory_report(
    p: f64,
    q: f64,
    beta: f64,
    n1: usize,
    layers: usize,
    seeds: usize,
    seed: u64,
) -> Result<TheoryReport> {
    let spec = SbmSpec {
        n1,
        n2: (n1 as f64 * beta).round() as usize,
        p,
        q,
        seed,
    };
    Ok(TheoryReport {
        p,
        q,
        beta,
        gamma: degree_disparity(p, q, beta),
        propagation: propagation_matrix(p, q, beta),
        mean_propagation: mean_propagation_matrix(p, q, beta),
        assimilation: feature_assimilation_experiment(&spec, layers, 1.0, seeds)?,
        gradient_dominance: gradient_dominance_experiment(
            n1.min(60),
            p,
            q,
            &[2.0, 5.0, 10.0],
            1,
            seeds,
            seed,
        )?,
    })
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_trivial_cases() {
        assert!((degree_disparity(0.3, 0.3, 7.0) - 1.0).abs() < 1e-12);
        assert!((degree_disparity(0.5, 0.1, 1.0) - 1.0).abs() < 1e-12);
        assert!((degree_disparity(0.5, 0.1, 10.0) - 3.4).abs() < 1e-12);
    }

    #[test]
    fn gamma_at_least_one_over_sweeps() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..500 {
            let q: f64 = rng.gen_range(0.0..0.5);
            let p: f64 = rng.gen_range(q + 1e-6..1.0);
            let beta: f64 = rng.gen_range(1.0..50.0);
            assert!(degree_disparity(p, q, beta) >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn propagation_matrix_worked_example() {
        let pm = propagation_matrix(0.5, 0.1, 10.0);
        let expect = [[0.333, 0.196], [0.067, 0.980]];
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (pm.m[i][j] - expect[i][j]).abs() < 1e-3,
                    "entry ({i},{j}) = {}",
                    pm.m[i][j]
                );
            }
        }
        assert!((pm.lambda1 - 1.0).abs() < 1e-3);
        assert!((pm.lambda2 - 0.313).abs() < 1e-3);
    }

    #[test]
    fn propagation_matrix_equal_probabilities() {
        // p = q: each row of the row-stochastic variant is
        // (1/(1+beta), beta/(1+beta)) and lambda2 = 0
        let beta = 4.0;
        let pm = mean_propagation_matrix(0.2, 0.2, beta);
        for row in pm.m {
            assert!((row[0] - 1.0 / (1.0 + beta)).abs() < 1e-12);
            assert!((row[1] - beta / (1.0 + beta)).abs() < 1e-12);
        }
        assert!(pm.lambda2.abs() < 1e-12);
    }

    #[test]
    fn propagation_matrix_beta_one() {
        // beta = 1: lambda2 = (p-q)/(p+q) for the row-stochastic variant
        let (p, q) = (0.5, 0.1);
        let pm = mean_propagation_matrix(p, q, 1.0);
        assert!((pm.lambda2 - (p - q) / (p + q)).abs() < 1e-12);
    }

    #[test]
    fn mean_propagation_lambda1_is_one_over_sweeps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let q: f64 = rng.gen_range(0.01..0.4);
            let p: f64 = rng.gen_range(q + 0.01..1.0);
            let beta: f64 = rng.gen_range(1.0..30.0);
            let pm = mean_propagation_matrix(p, q, beta);
            assert!((pm.lambda1 - 1.0).abs() < 1e-9, "lambda1 = {}", pm.lambda1);
        }
    }

    #[test]
    fn path_weight_trivial_factor() {
        // beta = 1 and gamma = 1 reduce to (wnorm/d1)^l
        let v = path_weight_expectation(0.3, 0.3, 1.0, 3, 10.0, 1.0);
        assert!((v - (1.0f64 / 10.0).powi(3)).abs() < 1e-15);
    }

    #[test]
    fn path_weight_per_hop_factor() {
        // (beta + gamma)/(gamma (beta+1)) = 13.4/(3.4*11) ~ 0.3583
        let one_hop = path_weight_expectation(0.5, 0.1, 10.0, 1, 1.0, 1.0);
        assert!((one_hop - 13.4 / 37.4).abs() < 1e-12);
        assert!((one_hop - 0.3583).abs() < 1e-4);
    }

    #[test]
    fn path_weight_monte_carlo_matches() {
        let spec = SbmSpec {
            n1: 100,
            n2: 1000,
            p: 0.5,
            q: 0.1,
            seed: 0,
        };
        let d1 = expected_minority_degree(spec.n1, spec.p, spec.q, spec.beta());
        for l in 1..=3 {
            let mut acc = 0.0;
            let seeds = 5;
            for s in 0..seeds {
                let g = generate_sbm(
                    &SbmSpec {
                        seed: s,
                        ..spec
                    },
                    2,
                    1.0,
                )
                .unwrap();
                acc += mc_path_weight(&g, l, 20000, s);
            }
            let measured = acc / seeds as f64;
            let predicted = path_weight_expectation(spec.p, spec.q, spec.beta(), l, d1, 1.0);
            let rel = (measured - predicted).abs() / predicted;
            assert!(rel < 0.20, "l = {l}: measured {measured}, predicted {predicted}");
        }
    }

    #[test]
    fn assimilation_recursion_hits_lambda2() {
        let spec = SbmSpec {
            n1: 50,
            n2: 500,
            p: 0.5,
            q: 0.1,
            seed: 0,
        };
        let res = feature_assimilation_experiment(&spec, 6, 1.0, 2).unwrap();
        let last = *res.recursion_ratios.last().unwrap();
        assert!((last - 0.313).abs() < 0.01, "ratio {last}");
    }

    #[test]
    fn assimilation_identical_centroids_stay_zero() {
        // Delta^(0) = 0 is preserved by linearity: iterate the recursion
        // starting from equal centroids
        let m = mean_propagation_matrix(0.5, 0.1, 10.0);
        let mut z = [0.7f64, 0.7f64];
        for _ in 0..8 {
            z = [
                m.m[0][0] * z[0] + m.m[0][1] * z[1],
                m.m[1][0] * z[0] + m.m[1][1] * z[1],
            ];
            assert!((z[0] - z[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn assimilation_small_sigma_strictly_decreasing() {
        // noiseless expectation recursion with sigma lambda2 < 1
        let m = mean_propagation_matrix(0.5, 0.1, 10.0);
        let sigma = 0.9;
        let mut z = [1.0f64, -0.5f64];
        let mut prev_delta = f64::INFINITY;
        for l in 0..8 {
            z = [
                sigma * (m.m[0][0] * z[0] + m.m[0][1] * z[1]),
                sigma * (m.m[1][0] * z[0] + m.m[1][1] * z[1]),
            ];
            let delta = (z[0] - z[1]).abs();
            if l >= 2 {
                assert!(delta < prev_delta, "layer {l}: {delta} >= {prev_delta}");
            }
            prev_delta = delta;
        }
    }

    #[test]
    fn assimilation_bound_holds_with_fitted_constant() {
        // measured ||Delta^(l)|| <= 1.05 C (sigma lambda2)^l with C fit at l=1
        let m = mean_propagation_matrix(0.5, 0.1, 10.0);
        let sigma = 1.0;
        let rate = sigma * m.lambda2;
        let delta0 = 2.0;
        let mut z = [1.0f64, -1.0f64];
        let mut c_fit = 0.0;
        for l in 1..=8 {
            z = [
                sigma * (m.m[0][0] * z[0] + m.m[0][1] * z[1]),
                sigma * (m.m[1][0] * z[0] + m.m[1][1] * z[1]),
            ];
            let delta = (z[0] - z[1]).abs();
            if l == 1 {
                c_fit = delta / (rate * delta0);
            }
            assert!(delta <= 1.05 * c_fit * rate.powi(l) * delta0);
        }
    }

    #[test]
    fn tree_decay_b2_slope() {
        let res = tree_oversquash_decay(2, 6).unwrap();
        let rel = (res.fitted_exponent - res.predicted_exponent).abs()
            / res.predicted_exponent.abs();
        assert!(
            rel < 0.25,
            "slope {} vs {}",
            res.fitted_exponent,
            res.predicted_exponent
        );
    }

    #[test]
    fn tree_decay_entries_nonnegative() {
        for b in [1, 2, 3] {
            let res = tree_oversquash_decay(b, 4).unwrap();
            for row in &res.rows {
                assert!(row.level_mass >= 0.0 && row.entry >= 0.0);
            }
        }
    }

    #[test]
    fn tree_decay_path_is_degenerate() {
        // b = 1: the level "mass" is a single walk product decaying at
        // rate log 3, far from the b^{-r} reference which predicts no
        // decay at all
        let res = tree_oversquash_decay(1, 6).unwrap();
        assert_eq!(res.predicted_exponent, 0.0);
        assert!((res.fitted_exponent - (-(3.0f64).ln())).abs() < 0.15);
    }
}
