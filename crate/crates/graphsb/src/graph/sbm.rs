//! Two-block stochastic block model generator. Class 0 is the minority
//! block (n1 nodes), class 1 the majority block (n2 nodes).

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Graph;
use crate::error::{Result, SbError};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SbmSpec {
    pub n1: usize,
    pub n2: usize,
    pub p: f64,
    pub q: f64,
    pub seed: u64,
}

impl SbmSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n1 < 1 {
            return Err(SbError::Config("SBM requires n1 >= 1".into()));
        }
        if self.n2 < self.n1 {
            return Err(SbError::Config("SBM requires n2 >= n1 (beta >= 1)".into()));
        }
        if !(self.q >= 0.0 && self.p <= 1.0 && self.p > self.q) {
            return Err(SbError::Config(format!(
                "SBM requires p > q >= 0 and p <= 1, got p = {}, q = {}",
                self.p, self.q
            )));
        }
        Ok(())
    }

    /// Majority-to-minority node-count ratio.
    pub fn beta(&self) -> f64 {
        self.n2 as f64 / self.n1 as f64
    }
}

/// Node features are two Gaussian blobs with unit-variance noise, class
/// centroids `centroid_gap` apart along the first feature axis.
pub fn generate_sbm(spec: &SbmSpec, feature_dim: usize, centroid_gap: f64) -> Result<Graph> {
    spec.validate()?;
    let n = spec.n1 + spec.n2;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let labels: Vec<usize> = (0..n).map(|v| usize::from(v >= spec.n1)).collect();

    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let prob = if labels[u] == labels[v] { spec.p } else { spec.q };
            if rng.gen::<f64>() < prob {
                edges.push((u, v));
            }
        }
    }

    let mut features = Array2::zeros((n, feature_dim));
    for v in 0..n {
        let center = if labels[v] == 0 {
            centroid_gap / 2.0
        } else {
            -centroid_gap / 2.0
        };
        for j in 0..feature_dim {
            let noise = standard_normal(&mut rng);
            features[[v, j]] = noise + if j == 0 { center } else { 0.0 };
        }
    }

    Graph::new(n, &edges, features, labels)
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
