//! Seeded Lloyd k-means used to place the centroids of the global
//! edge-loss head.

use ndarray::Array2;
use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SbError};

/// Lloyd iterations from a seeded random choice of k distinct points.
/// Clusters that empty out keep their previous centroid.
pub fn kmeans(points: &Array2<f64>, k: usize, iters: usize, seed: u64) -> Result<Array2<f64>> {
    let n = points.nrows();
    let f = points.ncols();
    if k == 0 || k > n {
        return Err(SbError::Config(format!(
            "k = {k} must be in 1..={n} for {n} points"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let mut centroids = Array2::zeros((k, f));
    for (c, &i) in idx[..k].iter().enumerate() {
        centroids.row_mut(c).assign(&points.row(i));
    }

    let mut assign = vec![0usize; n];
    for _ in 0..iters {
        let mut changed = false;
        for i in 0..n {
            let mut best = (f64::INFINITY, 0usize);
            for c in 0..k {
                let d: f64 = points
                    .row(i)
                    .iter()
                    .zip(centroids.row(c))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d < best.0 {
                    best = (d, c);
                }
            }
            if assign[i] != best.1 {
                assign[i] = best.1;
                changed = true;
            }
        }
        let mut sums = Array2::<f64>::zeros((k, f));
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[assign[i]] += 1;
            let row = points.row(i).to_owned();
            sums.row_mut(assign[i]).zip_mut_with(&row, |a, b| *a += b);
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mean = sums.row(c).mapv(|v| v / counts[c] as f64);
                centroids.row_mut(c).assign(&mean);
            }
        }
        if !changed {
            break;
        }
    }
    Ok(centroids)
}

/// Euclidean distance of every point to every centroid, n×k.
pub fn centroid_distances(points: &Array2<f64>, centroids: &Array2<f64>) -> Array2<f64> {
    let (n, k) = (points.nrows(), centroids.nrows());
    Array2::from_shape_fn((n, k), |(i, c)| {
        points
            .row(i)
            .iter()
            .zip(centroids.row(c))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    })
}
