//! The fixed computation graph of the model: two diffusion-convolution
//! encoder layers, the concatenation classifier over original plus
//! synthetic nodes, the edge-level losses, and exact reverse-mode
//! gradients for all of it.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Result, SbError};
use crate::learner::params::{Block, ParamVec};
use crate::synthesis::SynthesisPlan;

#[derive(Debug, Clone, Copy, Default, serde::Serialize, serde::Deserialize)]
pub struct LossBreakdown {
    pub node: f64,
    pub rec: f64,
    pub local: f64,
    pub global: f64,
    pub edge: f64,
    pub total: f64,
}

/// Targets for the three edge-level losses.
pub struct EdgeLossInputs<'a> {
    /// dense (enhanced) adjacency the reconstruction is fit against
    pub a_dense: &'a Array2<f64>,
    /// (v, u, truncated path-length class in 0..4)
    pub pairs: &'a [(usize, usize, usize)],
    /// frozen per-node distances to the embedding centroids, n×T
    pub d_targets: &'a Array2<f64>,
}

/// Everything one gradient step consumes. Stochastic quantities
/// (operator dropout, feature-dropout masks, the synthesis plan, the
/// pair sample) are drawn by the caller and fixed here, so the loss is
/// a deterministic function of the parameters.
pub struct StepInputs<'a> {
    pub s_tilde: &'a Array2<f64>,
    pub x: &'a Array2<f64>,
    /// adjacency lists used by the classifier aggregation (enhanced)
    pub adj: &'a [Vec<usize>],
    /// multiplicative feature-dropout masks (entries 0 or 1/(1-p)),
    /// one per encoder layer; `None` = evaluation mode
    pub drop1: Option<&'a Array2<f64>>,
    pub drop2: Option<&'a Array2<f64>>,
    /// labeled original nodes entering the node loss
    pub node_set: &'a [usize],
    pub labels: &'a [usize],
    pub synth: Option<&'a SynthesisPlan>,
    pub edge: Option<&'a EdgeLossInputs<'a>>,
    pub lambda_edge: f64,
    pub include_node_loss: bool,
}

pub struct EncodeTape {
    pub z1: Array2<f64>,
    pub h1: Array2<f64>,
    pub z2: Array2<f64>,
    /// final embeddings H_O
    pub h: Array2<f64>,
}

fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|x| x.max(0.0))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// h = dropout(relu(S̃ X W + b), p), applied twice.
pub fn encode(
    p: &ParamVec,
    s_tilde: &Array2<f64>,
    x: &Array2<f64>,
    drop1: Option<&Array2<f64>>,
    drop2: Option<&Array2<f64>>,
) -> Result<EncodeTape> {
    if x.ncols() != p.dims.f0 || s_tilde.nrows() != x.nrows() || s_tilde.ncols() != x.nrows() {
        return Err(SbError::Shape(format!(
            "encode: S̃ {}×{} vs X {}×{} vs input dim {}",
            s_tilde.nrows(),
            s_tilde.ncols(),
            x.nrows(),
            x.ncols(),
            p.dims.f0
        )));
    }
    let z1 = s_tilde.dot(&x.dot(&p.view(Block::Enc1W))) + &p.view(Block::Enc1B).row(0);
    let mut h1 = relu(&z1);
    if let Some(d) = drop1 {
        h1 *= d;
    }
    let z2 = s_tilde.dot(&h1.dot(&p.view(Block::Enc2W))) + &p.view(Block::Enc2B).row(0);
    let mut h = relu(&z2);
    if let Some(d) = drop2 {
        h *= d;
    }
    Ok(EncodeTape { z1, h1, z2, h })
}

/// A H: per-node sum of neighbor embeddings.
pub fn adjacency_aggregate(adj: &[Vec<usize>], h: &Array2<f64>) -> Array2<f64> {
    let mut agg = Array2::zeros(h.raw_dim());
    for (v, nbrs) in adj.iter().enumerate() {
        for &u in nbrs {
            let row = h.row(u).to_owned();
            agg.row_mut(v).zip_mut_with(&row, |a, b| *a += b);
        }
    }
    agg
}

fn softmax(logits: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut e = logits.mapv(|x| (x - max).exp());
    let sum = e.sum();
    e /= sum;
    e
}

/// softmax(W̃2 relu(W̃1 [h_v ∥ agg_v])) for one node.
pub fn classify(p: &ParamVec, h_v: ArrayView1<'_, f64>, agg_v: ArrayView1<'_, f64>) -> Array1<f64> {
    let f = p.dims.f;
    let mut u = Array1::zeros(2 * f);
    u.slice_mut(ndarray::s![..f]).assign(&h_v);
    u.slice_mut(ndarray::s![f..]).assign(&agg_v);
    let s = u.dot(&p.view(Block::ClsW1));
    let t = s.mapv(|x| x.max(0.0));
    softmax(t.dot(&p.view(Block::ClsW2)).view())
}

/// The classifier's hidden representation relu([H ∥ Agg]·W̃1) for every
/// row — the learned embedding that feeds the softmax, used for
/// embedding-quality diagnostics.
pub fn classifier_hidden(p: &ParamVec, h: &Array2<f64>, agg: &Array2<f64>) -> Array2<f64> {
    let cat = ndarray::concatenate(ndarray::Axis(1), &[h.view(), agg.view()])
        .expect("h and agg row counts match");
    cat.dot(&p.view(Block::ClsW1)).mapv(|x| x.max(0.0))
}

struct PairTape {
    e: Array1<f64>,
    s1: Array1<f64>,
    probs: Array1<f64>,
}

struct EdgeTape {
    b: Array2<f64>,
    p_mat: Array2<f64>,
    pair_tapes: Vec<PairTape>,
    dif: Array2<f64>,
    l_rec: f64,
    l_local: f64,
    l_global: f64,
}

fn edge_forward(p: &ParamVec, z: &Array2<f64>, edge: &EdgeLossInputs<'_>) -> EdgeTape {
    let b = z.dot(&p.view(Block::EdgeW));
    let p_mat = b.dot(&z.t()).mapv(sigmoid);
    let err = &p_mat - edge.a_dense;
    let l_rec = err.iter().map(|e| e * e).sum();

    let g_w1 = p.view(Block::GW1);
    let g_b1 = p.view(Block::GB1);
    let g_w2 = p.view(Block::GW2);
    let g_b2 = p.view(Block::GB2);
    let mut pair_tapes = Vec::with_capacity(edge.pairs.len());
    let mut l_local = 0.0;
    for &(v, u, class) in edge.pairs {
        let e = &z.row(v).to_owned() * &z.row(u);
        let s1 = e.dot(&g_w1) + &g_b1.row(0);
        let m1 = s1.mapv(|x| x.max(0.0));
        let logits = m1.dot(&g_w2) + &g_b2.row(0);
        let probs = softmax(logits.view());
        l_local -= probs[class].max(1e-300).ln();
        pair_tapes.push(PairTape { e, s1, probs });
    }
    if !edge.pairs.is_empty() {
        l_local /= edge.pairs.len() as f64;
    }

    let r = z.dot(&p.view(Block::HW)) + &p.view(Block::HB).row(0);
    let dif = &r - edge.d_targets;
    let l_global = dif.iter().map(|d| d * d).sum::<f64>() / z.nrows() as f64;

    EdgeTape {
        b,
        p_mat,
        pair_tapes,
        dif,
        l_rec,
        l_local,
        l_global,
    }
}

/// Forward edge-loss terms (L_rec, L_local, L_global, L_edge) on given
/// embeddings — the same code path the training gradient uses.
pub fn edge_loss_terms(
    p: &ParamVec,
    z: &Array2<f64>,
    edge: &EdgeLossInputs<'_>,
) -> (f64, f64, f64, f64) {
    let t = edge_forward(p, z, edge);
    (
        t.l_rec,
        t.l_local,
        t.l_global,
        t.l_rec + t.l_local + t.l_global,
    )
}

fn one_hot_sub(probs: &Array1<f64>, class: usize, scale: f64) -> Array1<f64> {
    let mut d = probs * scale;
    d[class] -= scale;
    d
}

/// Computes the composite loss and exact gradients for every parameter
/// block. Synthetic nodes contribute to the node loss only; their
/// mixup sources receive gradients, their binarized adjacency columns
/// are treated as constants.
pub fn forward_backward(p: &ParamVec, inp: &StepInputs<'_>) -> Result<(LossBreakdown, ParamVec)> {
    let f = p.dims.f;
    let c = p.dims.c;
    let n = inp.x.nrows();
    let enc = encode(p, inp.s_tilde, inp.x, inp.drop1, inp.drop2)?;
    let h = &enc.h;

    let mut grads = ParamVec::zeros(p.dims);
    // dL/dH accumulated from every head
    let mut g_h: Array2<f64> = Array2::zeros((n, f));
    let mut losses = LossBreakdown::default();

    if inp.include_node_loss {
        let agg = adjacency_aggregate(inp.adj, h);
        let n_syn = inp.synth.map_or(0, |s| s.entries.len());
        let k = inp.node_set.len() + n_syn;
        if k == 0 {
            return Err(SbError::Config("node loss over an empty node set".into()));
        }
        let inv_k = 1.0 / k as f64;
        let w1 = p.view(Block::ClsW1).to_owned();
        let w2 = p.view(Block::ClsW2).to_owned();

        // item = (h_row, agg_row, label, routing)
        enum Route<'r> {
            Original(usize),
            Synthetic(&'r crate::synthesis::SynthEntry, usize),
        }
        let mut items: Vec<(Array1<f64>, Array1<f64>, usize, Route<'_>)> = Vec::with_capacity(k);
        for &v in inp.node_set {
            items.push((
                h.row(v).to_owned(),
                agg.row(v).to_owned(),
                inp.labels[v],
                Route::Original(v),
            ));
        }
        if let Some(plan) = inp.synth {
            for (si, entry) in plan.entries.iter().enumerate() {
                let h_s = &(entry.lambda * &h.row(entry.src)) + &((1.0 - entry.lambda) * &h.row(entry.nn));
                let agg_s = plan.cols.row(si).dot(h);
                items.push((h_s, agg_s, entry.label, Route::Synthetic(entry, si)));
            }
        }

        for (h_row, agg_row, label, route) in &items {
            debug_assert!(*label < c);
            let mut u = Array1::zeros(2 * f);
            u.slice_mut(ndarray::s![..f]).assign(h_row);
            u.slice_mut(ndarray::s![f..]).assign(agg_row);
            let s = u.dot(&w1);
            let t = s.mapv(|x| x.max(0.0));
            let probs = softmax(t.dot(&w2).view());
            losses.node -= probs[*label].max(1e-300).ln() * inv_k;

            let d_logits = one_hot_sub(&probs, *label, inv_k);
            // cls.w2 += t^T d_logits
            {
                let mut g_w2 = grads.view_mut(Block::ClsW2);
                for i in 0..f {
                    for j in 0..c {
                        g_w2[[i, j]] += t[i] * d_logits[j];
                    }
                }
            }
            let mut d_t = d_logits.dot(&w2.t());
            for i in 0..f {
                if s[i] <= 0.0 {
                    d_t[i] = 0.0;
                }
            }
            {
                let mut g_w1 = grads.view_mut(Block::ClsW1);
                for i in 0..2 * f {
                    for j in 0..f {
                        g_w1[[i, j]] += u[i] * d_t[j];
                    }
                }
            }
            let d_u = d_t.dot(&w1.t());
            let d_h_part = d_u.slice(ndarray::s![..f]);
            let d_agg_part = d_u.slice(ndarray::s![f..]);
            match route {
                Route::Original(v) => {
                    g_h.row_mut(*v).zip_mut_with(&d_h_part, |a, b| *a += b);
                    for &nb in &inp.adj[*v] {
                        g_h.row_mut(nb).zip_mut_with(&d_agg_part, |a, b| *a += b);
                    }
                }
                Route::Synthetic(entry, si) => {
                    let lam = entry.lambda;
                    g_h.row_mut(entry.src)
                        .zip_mut_with(&d_h_part, |a, b| *a += lam * b);
                    g_h.row_mut(entry.nn)
                        .zip_mut_with(&d_h_part, |a, b| *a += (1.0 - lam) * b);
                    let plan = inp.synth.unwrap();
                    for u_node in 0..n {
                        let w = plan.cols[[*si, u_node]];
                        if w != 0.0 {
                            g_h.row_mut(u_node)
                                .zip_mut_with(&d_agg_part, |a, b| *a += w * b);
                        }
                    }
                }
            }
        }
    }

    if let Some(edge) = inp.edge {
        let le = inp.lambda_edge;
        let tape = edge_forward(p, h, edge);
        losses.rec = tape.l_rec;
        losses.local = tape.l_local;
        losses.global = tape.l_global;

        // reconstruction: dQ = 2 (P - A) P (1-P)
        let mut d_q = (&tape.p_mat - edge.a_dense) * &tape.p_mat * &tape.p_mat.mapv(|x| 1.0 - x);
        d_q *= 2.0 * le;
        let d_b = d_q.dot(h);
        g_h += &d_q.t().dot(&tape.b);
        g_h += &d_b.dot(&p.view(Block::EdgeW).t());
        {
            let g_we = h.t().dot(&d_b);
            grads.view_mut(Block::EdgeW).zip_mut_with(&g_we, |a, b| *a += b);
        }

        // local path-class head
        if !edge.pairs.is_empty() {
            let inv_s = 1.0 / edge.pairs.len() as f64;
            let g_w1v = p.view(Block::GW1).to_owned();
            let g_w2v = p.view(Block::GW2).to_owned();
            for (tape_p, &(v, u, class)) in tape.pair_tapes.iter().zip(edge.pairs) {
                let d_logits = one_hot_sub(&tape_p.probs, class, inv_s * le);
                let m1 = tape_p.s1.mapv(|x| x.max(0.0));
                {
                    let mut g = grads.view_mut(Block::GW2);
                    for i in 0..f {
                        for j in 0..crate::learner::params::PATH_CLASSES {
                            g[[i, j]] += m1[i] * d_logits[j];
                        }
                    }
                }
                grads
                    .view_mut(Block::GB2)
                    .row_mut(0)
                    .zip_mut_with(&d_logits, |a, b| *a += b);
                let mut d_m = d_logits.dot(&g_w2v.t());
                for i in 0..f {
                    if tape_p.s1[i] <= 0.0 {
                        d_m[i] = 0.0;
                    }
                }
                {
                    let mut g = grads.view_mut(Block::GW1);
                    for i in 0..f {
                        for j in 0..f {
                            g[[i, j]] += tape_p.e[i] * d_m[j];
                        }
                    }
                }
                grads
                    .view_mut(Block::GB1)
                    .row_mut(0)
                    .zip_mut_with(&d_m, |a, b| *a += b);
                let d_e = d_m.dot(&g_w1v.t());
                let zu = h.row(u).to_owned();
                let zv = h.row(v).to_owned();
                for i in 0..f {
                    g_h[[v, i]] += d_e[i] * zu[i];
                    g_h[[u, i]] += d_e[i] * zv[i];
                }
            }
        }

        // global centroid-distance head
        let d_r = &tape.dif * (2.0 * le / n as f64);
        {
            let g_hw = h.t().dot(&d_r);
            grads.view_mut(Block::HW).zip_mut_with(&g_hw, |a, b| *a += b);
        }
        {
            let col_sum = d_r.sum_axis(Axis(0));
            grads
                .view_mut(Block::HB)
                .row_mut(0)
                .zip_mut_with(&col_sum, |a, b| *a += b);
        }
        g_h += &d_r.dot(&p.view(Block::HW).t());
    }

    losses.edge = losses.rec + losses.local + losses.global;
    losses.total = if inp.include_node_loss {
        losses.node
    } else {
        0.0
    } + if inp.edge.is_some() {
        inp.lambda_edge * losses.edge
    } else {
        0.0
    };

    // encoder backward
    let mut g_r2 = g_h;
    if let Some(d) = inp.drop2 {
        g_r2 *= d;
    }
    let mut g_z2 = g_r2;
    g_z2.zip_mut_with(&enc.z2, |g, &z| {
        if z <= 0.0 {
            *g = 0.0;
        }
    });
    let m2 = inp.s_tilde.t().dot(&g_z2);
    {
        let g = enc.h1.t().dot(&m2);
        grads.view_mut(Block::Enc2W).zip_mut_with(&g, |a, b| *a += b);
        let col = g_z2.sum_axis(Axis(0));
        grads
            .view_mut(Block::Enc2B)
            .row_mut(0)
            .zip_mut_with(&col, |a, b| *a += b);
    }
    let mut g_r1 = m2.dot(&p.view(Block::Enc2W).t());
    if let Some(d) = inp.drop1 {
        g_r1 *= d;
    }
    let mut g_z1 = g_r1;
    g_z1.zip_mut_with(&enc.z1, |g, &z| {
        if z <= 0.0 {
            *g = 0.0;
        }
    });
    let m1 = inp.s_tilde.t().dot(&g_z1);
    {
        let g = inp.x.t().dot(&m1);
        grads.view_mut(Block::Enc1W).zip_mut_with(&g, |a, b| *a += b);
        let col = g_z1.sum_axis(Axis(0));
        grads
            .view_mut(Block::Enc1B)
            .row_mut(0)
            .zip_mut_with(&col, |a, b| *a += b);
    }

    Ok((losses, grads))
}

/// Forward-only composite loss, used by the finite-difference oracle.
pub fn forward_loss(p: &ParamVec, inp: &StepInputs<'_>) -> Result<LossBreakdown> {
    forward_backward(p, inp).map(|(l, _)| l)
}

/// Evaluation-mode class probabilities for the given original nodes.
pub fn predict(
    p: &ParamVec,
    s: &Array2<f64>,
    x: &Array2<f64>,
    adj: &[Vec<usize>],
    nodes: &[usize],
) -> Result<Array2<f64>> {
    let enc = encode(p, s, x, None, None)?;
    let agg = adjacency_aggregate(adj, &enc.h);
    let mut out = Array2::zeros((nodes.len(), p.dims.c));
    for (i, &v) in nodes.iter().enumerate() {
        let probs = classify(p, enc.h.row(v), agg.row(v));
        out.row_mut(i).assign(&probs);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::params::ModelDims;
    use ndarray::array;

    fn tiny_dims() -> ModelDims {
        ModelDims {
            f0: 3,
            f: 4,
            c: 2,
            t: 2,
        }
    }

    #[test]
    fn zero_weights_give_zero_embeddings() {
        let d = tiny_dims();
        let p = ParamVec::zeros(d);
        let s = Array2::eye(3);
        let x = Array2::from_shape_fn((3, 3), |(i, j)| (i + j) as f64);
        let enc = encode(&p, &s, &x, None, None).unwrap();
        assert!(enc.h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_operator_is_plain_mlp_layer() {
        let d = tiny_dims();
        let p = ParamVec::glorot(d, 9);
        let s = Array2::eye(5);
        let x = Array2::from_shape_fn((5, 3), |(i, j)| (i as f64 - j as f64) * 0.3);
        let enc = encode(&p, &s, &x, None, None).unwrap();
        let direct = x.dot(&p.view(Block::Enc1W)).mapv(|v| v.max(0.0));
        let max_diff = (&enc.h1 - &direct).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(max_diff < 1e-12);
    }

    #[test]
    fn encode_matches_dense_reference() {
        let d = tiny_dims();
        let p = ParamVec::glorot(d, 2);
        let n = 6;
        let s = Array2::from_shape_fn((n, n), |(i, j)| ((i * n + j) as f64 * 0.7).sin() * 0.2);
        let x = Array2::from_shape_fn((n, 3), |(i, j)| ((i + 2 * j) as f64 * 0.3).cos());
        let enc = encode(&p, &s, &x, None, None).unwrap();
        // independent reference: explicit loops
        let w1 = p.view(Block::Enc1W);
        let w2 = p.view(Block::Enc2W);
        let mut h1 = Array2::zeros((n, d.f));
        for i in 0..n {
            for j in 0..d.f {
                let mut acc = 0.0;
                for k in 0..n {
                    for l in 0..d.f0 {
                        acc += s[[i, k]] * x[[k, l]] * w1[[l, j]];
                    }
                }
                h1[[i, j]] = acc.max(0.0);
            }
        }
        let mut h2 = Array2::zeros((n, d.f));
        for i in 0..n {
            for j in 0..d.f {
                let mut acc = 0.0;
                for k in 0..n {
                    for l in 0..d.f {
                        acc += s[[i, k]] * h1[[k, l]] * w2[[l, j]];
                    }
                }
                h2[[i, j]] = acc.max(0.0);
            }
        }
        let max_diff = (&enc.h - &h2).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(max_diff < 1e-12, "max diff {max_diff}");
    }

    #[test]
    fn classify_uniform_when_output_weights_zero() {
        let d = tiny_dims();
        let mut p = ParamVec::glorot(d, 1);
        p.view_mut(Block::ClsW2).fill(0.0);
        let h = array![0.3, -0.2, 0.5, 0.1];
        let agg = array![1.0, 0.0, -1.0, 2.0];
        let probs = classify(&p, h.view(), agg.view());
        for &v in &probs {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn classify_probabilities_sum_to_one() {
        let d = tiny_dims();
        let p = ParamVec::glorot(d, 5);
        for trial in 0..20 {
            let h = Array1::from_shape_fn(4, |i| ((i + trial) as f64 * 0.9).sin() * 3.0);
            let agg = Array1::from_shape_fn(4, |i| ((i * trial) as f64 * 0.4).cos() * 5.0);
            let probs = classify(&p, h.view(), agg.view());
            assert!((probs.sum() - 1.0).abs() < 1e-9);
            assert!(probs.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn classify_single_node_hand_case() {
        // F=1 scalar trace: u = [h, a]; s = w11 h + w12 a; t = relu(s);
        // logits = t * [v1, v2]; softmax by hand
        let d = ModelDims {
            f0: 1,
            f: 1,
            c: 2,
            t: 1,
        };
        let mut p = ParamVec::zeros(d);
        p.view_mut(Block::ClsW1)[[0, 0]] = 0.7; // multiplies h
        p.view_mut(Block::ClsW1)[[1, 0]] = -0.2; // multiplies agg
        p.view_mut(Block::ClsW2)[[0, 0]] = 1.5;
        p.view_mut(Block::ClsW2)[[0, 1]] = -0.5;
        let h = array![2.0];
        let agg = array![3.0];
        let t = (0.7 * 2.0 + (-0.2) * 3.0f64).max(0.0); // 0.8
        let (l1, l2) = (1.5 * t, -0.5 * t);
        let z = l1.exp() + l2.exp();
        let probs = classify(&p, h.view(), agg.view());
        assert!((probs[0] - l1.exp() / z).abs() < 1e-12);
        assert!((probs[1] - l2.exp() / z).abs() < 1e-12);
    }

    #[test]
    fn adjacency_aggregate_sums_neighbors() {
        let adj = vec![vec![1, 2], vec![0], vec![0]];
        let h = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let agg = adjacency_aggregate(&adj, &h);
        assert_eq!(agg.row(0).to_vec(), vec![8.0, 10.0]);
        assert_eq!(agg.row(1).to_vec(), vec![1.0, 2.0]);
        assert_eq!(agg.row(2).to_vec(), vec![1.0, 2.0]);
    }
}
