//! Symmetric Bernoulli edge dropout on the diffusion matrix with
//! expectation-preserving 1/(1-p_drop) scaling.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SbError};

/// Symmetric binary mask. Diagonal entries are always kept; each
/// upper-triangular entry is an independent Bernoulli(1 - p_drop) draw
/// mirrored to the lower triangle.
#[derive(Debug, Clone)]
pub struct DropoutMask {
    pub m: Array2<f64>,
    pub p_drop: f64,
    pub seed: u64,
}

pub fn sample_dropout_mask(n: usize, p_drop: f64, seed: u64) -> Result<DropoutMask> {
    if !(0.0..1.0).contains(&p_drop) {
        return Err(SbError::Config(format!("p_drop = {p_drop} not in [0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        m[[i, i]] = 1.0;
        for j in (i + 1)..n {
            let keep = rng.gen::<f64>() > p_drop;
            let bit = if keep { 1.0 } else { 0.0 };
            m[[i, j]] = bit;
            m[[j, i]] = bit;
        }
    }
    Ok(DropoutMask { m, p_drop, seed })
}

/// S_tilde = (S .* M) / (1 - p_drop) off the diagonal. The diagonal is
/// exempt from dropout and passes through unscaled, so E[S_tilde] = S
/// holds entrywise.
pub fn apply_dropout(s: &Array2<f64>, mask: &DropoutMask) -> Array2<f64> {
    let mut st = (s * &mask.m) / (1.0 - mask.p_drop);
    for i in 0..s.nrows() {
        st[[i, i]] = s[[i, i]];
    }
    st
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_drop_is_identity() {
        let s = Array2::from_shape_fn((4, 4), |(i, j)| (i + 2 * j) as f64 * 0.1);
        let mask = sample_dropout_mask(4, 0.0, 7).unwrap();
        let st = apply_dropout(&s, &mask);
        assert_eq!(st, s);
    }

    #[test]
    fn mask_symmetric_diag_kept() {
        let mask = sample_dropout_mask(20, 0.4, 3).unwrap();
        for i in 0..20 {
            assert_eq!(mask.m[[i, i]], 1.0);
            for j in 0..20 {
                assert_eq!(mask.m[[i, j]], mask.m[[j, i]]);
            }
        }
    }

    #[test]
    fn kept_entries_scaled_exactly() {
        let s = Array2::from_shape_fn((6, 6), |(i, j)| ((i * 6 + j) as f64).sin().abs());
        let s = &s + &s.t(); // symmetric input
        let p = 0.3;
        let mask = sample_dropout_mask(6, p, 11).unwrap();
        let st = apply_dropout(&s, &mask);
        for i in 0..6 {
            for j in 0..6 {
                if i == j {
                    assert_eq!(st[[i, j]], s[[i, j]]);
                } else if mask.m[[i, j]] == 1.0 {
                    assert_eq!(st[[i, j]], s[[i, j]] / (1.0 - p));
                } else {
                    assert_eq!(st[[i, j]], 0.0);
                }
                assert_eq!(st[[i, j]], st[[j, i]]);
            }
        }
    }

    #[test]
    fn expectation_preserved_over_masks() {
        let n = 8;
        let s = Array2::from_shape_fn((n, n), |(i, j)| 0.2 + ((i + j) as f64) * 0.05);
        let p = 0.1;
        let masks = 1000;
        let mut acc = Array2::<f64>::zeros((n, n));
        for seed in 0..masks {
            let mask = sample_dropout_mask(n, p, seed).unwrap();
            acc += &apply_dropout(&s, &mask);
        }
        acc /= masks as f64;
        for i in 0..n {
            for j in 0..n {
                if s[[i, j]] > 1e-3 {
                    let rel = (acc[[i, j]] - s[[i, j]]).abs() / s[[i, j]];
                    assert!(rel < 0.03, "entry ({i},{j}) rel err {rel}");
                }
            }
        }
    }

    #[test]
    fn invalid_p_rejected() {
        assert!(sample_dropout_mask(3, 1.0, 0).is_err());
        assert!(sample_dropout_mask(3, -0.1, 0).is_err());
    }
}
