//! Flat parameter storage for the full model: every tensor lives in one
//! contiguous `Vec<f64>` with named block views, which keeps the
//! optimizer, finite-difference checks and checkpointing trivial.

use ndarray::{ArrayView2, ArrayViewMut2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SbError};

/// Shape configuration: input dim, hidden dim, class count and the
/// centroid count of the global edge-loss head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub f0: usize,
    pub f: usize,
    pub c: usize,
    pub t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Enc1W,
    Enc1B,
    Enc2W,
    Enc2B,
    ClsW1,
    ClsW2,
    EdgeW,
    GW1,
    GB1,
    GW2,
    GB2,
    HW,
    HB,
}

pub const PATH_CLASSES: usize = 4;

pub const ALL_BLOCKS: [Block; 13] = [
    Block::Enc1W,
    Block::Enc1B,
    Block::Enc2W,
    Block::Enc2B,
    Block::ClsW1,
    Block::ClsW2,
    Block::EdgeW,
    Block::GW1,
    Block::GB1,
    Block::GW2,
    Block::GB2,
    Block::HW,
    Block::HB,
];

impl Block {
    pub fn name(self) -> &'static str {
        match self {
            Block::Enc1W => "enc1.w",
            Block::Enc1B => "enc1.b",
            Block::Enc2W => "enc2.w",
            Block::Enc2B => "enc2.b",
            Block::ClsW1 => "cls.w1",
            Block::ClsW2 => "cls.w2",
            Block::EdgeW => "edge.w",
            Block::GW1 => "path.w1",
            Block::GB1 => "path.b1",
            Block::GW2 => "path.w2",
            Block::GB2 => "path.b2",
            Block::HW => "centroid.w",
            Block::HB => "centroid.b",
        }
    }

    /// (rows, cols); biases are 1×len.
    pub fn shape(self, d: &ModelDims) -> (usize, usize) {
        match self {
            Block::Enc1W => (d.f0, d.f),
            Block::Enc1B => (1, d.f),
            Block::Enc2W => (d.f, d.f),
            Block::Enc2B => (1, d.f),
            Block::ClsW1 => (2 * d.f, d.f),
            Block::ClsW2 => (d.f, d.c),
            Block::EdgeW => (d.f, d.f),
            Block::GW1 => (d.f, d.f),
            Block::GB1 => (1, d.f),
            Block::GW2 => (d.f, PATH_CLASSES),
            Block::GB2 => (1, PATH_CLASSES),
            Block::HW => (d.f, d.t),
            Block::HB => (1, d.t),
        }
    }

    fn is_bias(self) -> bool {
        matches!(
            self,
            Block::Enc1B | Block::Enc2B | Block::GB1 | Block::GB2 | Block::HB
        )
    }
}

impl ModelDims {
    pub fn block_offset(&self, b: Block) -> usize {
        let mut off = 0;
        for blk in ALL_BLOCKS {
            if blk == b {
                return off;
            }
            let (r, c) = blk.shape(self);
            off += r * c;
        }
        unreachable!()
    }

    pub fn total_len(&self) -> usize {
        ALL_BLOCKS
            .iter()
            .map(|b| {
                let (r, c) = b.shape(self);
                r * c
            })
            .sum()
    }
}

/// All model parameters (or a same-shaped gradient) as one flat vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamVec {
    pub dims: ModelDims,
    pub data: Vec<f64>,
}

impl ParamVec {
    pub fn zeros(dims: ModelDims) -> Self {
        ParamVec {
            dims,
            data: vec![0.0; dims.total_len()],
        }
    }

    /// Glorot-uniform weights, zero biases, seeded.
    pub fn glorot(dims: ModelDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamVec::zeros(dims);
        for b in ALL_BLOCKS {
            if b.is_bias() {
                continue;
            }
            let (rows, cols) = b.shape(&dims);
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            let off = dims.block_offset(b);
            for x in &mut p.data[off..off + rows * cols] {
                *x = rng.gen_range(-limit..limit);
            }
        }
        p
    }

    pub fn view(&self, b: Block) -> ArrayView2<'_, f64> {
        let (rows, cols) = b.shape(&self.dims);
        let off = self.dims.block_offset(b);
        ArrayView2::from_shape((rows, cols), &self.data[off..off + rows * cols]).unwrap()
    }

    pub fn view_mut(&mut self, b: Block) -> ArrayViewMut2<'_, f64> {
        let (rows, cols) = b.shape(&self.dims);
        let off = self.dims.block_offset(b);
        ArrayViewMut2::from_shape((rows, cols), &mut self.data[off..off + rows * cols]).unwrap()
    }

    /// Coordinate range of a block within the flat vector, for
    /// per-block gradient checks.
    pub fn block_range(&self, b: Block) -> std::ops::Range<usize> {
        let (rows, cols) = b.shape(&self.dims);
        let off = self.dims.block_offset(b);
        off..off + rows * cols
    }

    pub fn assert_finite(&self) -> Result<()> {
        for b in ALL_BLOCKS {
            let range = self.block_range(b);
            if self.data[range].iter().any(|x| !x.is_finite()) {
                return Err(SbError::Shape(format!(
                    "non-finite values in parameter block {}",
                    b.name()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> ModelDims {
        ModelDims {
            f0: 5,
            f: 4,
            c: 3,
            t: 3,
        }
    }

    #[test]
    fn layout_is_contiguous_and_disjoint() {
        let d = dims();
        let mut covered = vec![0usize; d.total_len()];
        let p = ParamVec::zeros(d);
        for b in ALL_BLOCKS {
            for i in p.block_range(b) {
                covered[i] += 1;
            }
        }
        assert!(covered.iter().all(|&c| c == 1));
    }

    #[test]
    fn views_alias_flat_storage() {
        let d = dims();
        let mut p = ParamVec::zeros(d);
        p.view_mut(Block::Enc2W)[[1, 2]] = 7.5;
        let off = d.block_offset(Block::Enc2W);
        assert_eq!(p.data[off + d.f + 2], 7.5);
        assert_eq!(p.view(Block::Enc2W)[[1, 2]], 7.5);
    }

    #[test]
    fn glorot_weights_bounded_biases_zero() {
        let d = dims();
        let p = ParamVec::glorot(d, 3);
        let limit = (6.0 / (d.f0 + d.f) as f64).sqrt();
        for x in p.view(Block::Enc1W) {
            assert!(x.abs() < limit);
        }
        assert!(p.view(Block::Enc1B).iter().all(|&x| x == 0.0));
        assert!(p.view(Block::GB2).iter().all(|&x| x == 0.0));
        // seeded determinism
        let q = ParamVec::glorot(d, 3);
        assert_eq!(p.data, q.data);
        let r = ParamVec::glorot(d, 4);
        assert_ne!(p.data, r.data);
    }

    #[test]
    fn finiteness_check_catches_nan() {
        let d = dims();
        let mut p = ParamVec::zeros(d);
        assert!(p.assert_finite().is_ok());
        p.view_mut(Block::ClsW2)[[0, 0]] = f64::NAN;
        let err = p.assert_finite().unwrap_err().to_string();
        assert!(err.contains("cls.w2"), "{err}");
    }
}
