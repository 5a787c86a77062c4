//! Graph auto-encoder: a multi-layer GCN encoder, the inner-product decoder,
//! the balanced binary cross-entropy reconstruction loss, and hand-derived
//! reverse-mode gradients with respect to every layer weight.
//!
//! Layer `k` computes `H_{k+1} = σ(Â H_k W_k)` where `Â` is the self-looped,
//! symmetrically normalized adjacency. Hidden layers use ReLU, the output
//! layer is linear. The decoder scores a pair as `sigmoid(z_i · z_j)`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphStage, WeightedGraph};
use crate::ingest::{read_file, write_file};
use crate::tensor::{dot, relu, relu_grad, sigmoid, Matrix};

/// Score clamp used by the loss to keep `ln` finite.
pub const BCE_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct GaeModel {
    layer_dims: Vec<usize>,
    weights: Vec<Matrix>,
    seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentEmbedding {
    pub tickers: Vec<String>,
    pub z: Matrix,
}

/// Vertex pairs `(i, j)`, `i < j`, with a binary edge label each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeBatch {
    pairs: Vec<(usize, usize)>,
    labels: Vec<bool>,
}

/// Intermediates from [`gcn_forward`] needed by [`backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    a_norm: Matrix,
    /// `Â H_k` per layer.
    propagated: Vec<Matrix>,
    /// `Â H_k W_k` per layer, before the activation.
    pre_activation: Vec<Matrix>,
    output: Matrix,
    fingerprint: u64,
}

impl GaeModel {
    pub fn from_weights(layer_dims: Vec<usize>, weights: Vec<Matrix>, seed: u64) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::Config("a model needs at least an input and output dimension".into()));
        }
        if let Some(&0) = layer_dims.iter().find(|&&d| d == 0) {
            return Err(Error::Config("layer dimensions must be positive".into()));
        }
        if weights.len() != layer_dims.len() - 1 {
            return Err(Error::Config(format!(
                "{} weight matrices for {} layers",
                weights.len(),
                layer_dims.len() - 1
            )));
        }
        for (k, w) in weights.iter().enumerate() {
            if w.shape() != (layer_dims[k], layer_dims[k + 1]) {
                return Err(Error::Shape {
                    op: "GaeModel::from_weights",
                    left: (layer_dims[k], layer_dims[k + 1]),
                    right: w.shape(),
                });
            }
            if !w.is_finite() {
                return Err(Error::Numeric(format!("non-finite weight in layer {k}")));
            }
        }
        Ok(GaeModel {
            layer_dims,
            weights,
            seed,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    pub fn out_dim(&self) -> usize {
        *self.layer_dims.last().expect("nonempty dims")
    }

    /// `Σ_k ‖W_k‖²_F`.
    pub fn weight_norm_sq(&self) -> f64 {
        self.weights.iter().map(Matrix::frobenius_sq).sum()
    }

    /// FNV-1a over the weight bits; ties a forward cache to one set of
    /// weights.
    fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &d in &self.layer_dims {
            h = (h ^ d as u64).wrapping_mul(0x0100_0000_01b3);
        }
        for w in &self.weights {
            for v in w.as_slice() {
                h = (h ^ v.to_bits()).wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let ck = Checkpoint {
            layer_dims: self.layer_dims.clone(),
            weights: self.weights.iter().map(|w| w.as_slice().to_vec()).collect(),
            seed: self.seed,
        };
        let text = serde_json::to_string_pretty(&ck).map_err(|e| Error::Json {
            path: path.into(),
            source: e,
        })?;
        write_file(path, text.as_bytes())
    }

    pub fn load_json(path: &Path) -> Result<GaeModel> {
        let text = read_file(path)?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.into(),
            source: e,
        })?;
        if ck.weights.len() + 1 != ck.layer_dims.len() {
            return Err(Error::Config(format!("{}: layer count mismatch", path.display())));
        }
        let weights = ck
            .weights
            .into_iter()
            .enumerate()
            .map(|(k, w)| Matrix::from_vec(ck.layer_dims[k], ck.layer_dims[k + 1], w))
            .collect::<Result<Vec<_>>>()?;
        GaeModel::from_weights(ck.layer_dims, weights, ck.seed)
    }
}

/// On-disk model layout: row-major flattened weights per layer.
#[derive(Serialize, Deserialize)]
struct Checkpoint {
    layer_dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    seed: u64,
}

/// Glorot-uniform weights, `U(−a, a)` with `a = √(6 / (fan_in + fan_out))`.
pub fn init_weights(layer_dims: &[usize], seed: u64) -> Result<GaeModel> {
    if layer_dims.len() < 2 || layer_dims.contains(&0) {
        return Err(Error::Config(format!("invalid layer dimensions {layer_dims:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = layer_dims
        .windows(2)
        .map(|w| {
            let limit = glorot_limit(w[0], w[1]);
            Matrix::from_fn(w[0], w[1], |_, _| rng.random_range(-limit..=limit))
        })
        .collect();
    GaeModel::from_weights(layer_dims.to_vec(), weights, seed)
}

pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl EdgeBatch {
    /// Normalizes each pair to `i < j`; rejects self-pairs and duplicates.
    pub fn new(pairs: Vec<(usize, usize)>, labels: Vec<bool>) -> Result<Self> {
        if pairs.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} pairs but {} labels",
                pairs.len(),
                labels.len()
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(pairs.len());
        let pairs: Vec<(usize, usize)> = pairs
            .into_iter()
            .map(|(i, j)| (i.min(j), i.max(j)))
            .collect();
        for &(i, j) in &pairs {
            if i == j {
                return Err(Error::Data(format!("self-pair ({i}, {i}) in batch")));
            }
            if !seen.insert((i, j)) {
                return Err(Error::Data(format!("duplicate pair ({i}, {j}) in batch")));
            }
        }
        Ok(EdgeBatch { pairs, labels })
    }

    /// Positives followed by negatives.
    pub fn from_parts(pos: &[(usize, usize)], neg: &[(usize, usize)]) -> Result<Self> {
        let mut pairs = pos.to_vec();
        pairs.extend_from_slice(neg);
        let mut labels = vec![true; pos.len()];
        labels.resize(pos.len() + neg.len(), false);
        EdgeBatch::new(pairs, labels)
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `#neg / #pos`, or 1 when the batch has no positives.
    pub fn balanced_pos_weight(&self) -> f64 {
        let pos = self.labels.iter().filter(|&&l| l).count();
        if pos == 0 {
            1.0
        } else {
            (self.labels.len() - pos) as f64 / pos as f64
        }
    }

    fn check_nodes(&self, n: usize) -> Result<()> {
        match self.pairs.iter().find(|&&(_, j)| j >= n) {
            Some(&(i, j)) => Err(Error::Data(format!("pair ({i}, {j}) out of range for {n} nodes"))),
            None => Ok(()),
        }
    }
}

fn encode(a_norm: &Matrix, x: &Matrix, model: &GaeModel) -> Result<ForwardCache> {
    let n = a_norm.rows();
    if a_norm.cols() != n || x.rows() != n {
        return Err(Error::Shape {
            op: "gcn_forward",
            left: a_norm.shape(),
            right: x.shape(),
        });
    }
    if x.cols() != model.layer_dims[0] {
        return Err(Error::Shape {
            op: "gcn_forward",
            left: x.shape(),
            right: model.weights[0].shape(),
        });
    }
    let last = model.layers() - 1;
    let mut propagated = Vec::with_capacity(model.layers());
    let mut pre_activation = Vec::with_capacity(model.layers());
    let mut h = x.clone();
    for (k, w) in model.weights.iter().enumerate() {
        let p = a_norm.matmul(&h)?;
        let z = p.matmul(w)?;
        h = if k < last { z.map_with(relu) } else { z.clone() };
        propagated.push(p);
        pre_activation.push(z);
    }
    Ok(ForwardCache {
        a_norm: a_norm.clone(),
        propagated,
        pre_activation,
        output: h,
        fingerprint: model.fingerprint(),
    })
}

/// Runs the encoder on features `x` (N × D_0). Returns the embedding and the
/// cache needed for [`backward`].
pub fn gcn_forward(
    a_norm: &WeightedGraph,
    x: &Matrix,
    model: &GaeModel,
) -> Result<(LatentEmbedding, ForwardCache)> {
    if a_norm.stage != GraphStage::SelfLoopedNormalized {
        return Err(Error::Domain(format!(
            "encoder expects a self-looped normalized graph, got {:?}",
            a_norm.stage
        )));
    }
    let cache = encode(&a_norm.adjacency, x, model)?;
    let z = cache.output.clone();
    if !z.is_finite() {
        return Err(Error::Numeric("encoder produced non-finite embedding".into()));
    }
    Ok((
        LatentEmbedding {
            tickers: a_norm.tickers.clone(),
            z,
        },
        cache,
    ))
}

pub fn decode_pair(zi: &[f64], zj: &[f64]) -> f64 {
    sigmoid(dot(zi, zj))
}

pub fn reconstruction_scores(z: &Matrix, batch: &EdgeBatch) -> Result<Vec<f64>> {
    batch.check_nodes(z.rows())?;
    Ok(batch
        .pairs
        .iter()
        .map(|&(i, j)| decode_pair(z.row(i), z.row(j)))
        .collect())
}

/// Dense reconstruction matrix `S` with `s_ij = decode_pair(z_i, z_j)`.
pub fn reconstruction_matrix(z: &Matrix) -> Matrix {
    let n = z.rows();
    Matrix::from_fn(n, n, |i, j| decode_pair(z.row(i), z.row(j)))
}

/// Mean weighted binary cross-entropy,
/// `−[w·y·ln s + (1−y)·ln(1−s)]`, with scores clamped to `[ε, 1−ε]`.
pub fn bce_loss(scores: &[f64], labels: &[bool], pos_weight: f64) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Data("bce loss over an empty batch".into()));
    }
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| {
            let s = s.clamp(BCE_EPS, 1.0 - BCE_EPS);
            if y {
                -pos_weight * s.ln()
            } else {
                -(1.0 - s).ln()
            }
        })
        .sum();
    Ok(total / scores.len() as f64)
}

/// `bce + (l2 / 2) Σ‖W_k‖²` for the batch, by a fresh forward pass.
pub fn objective(
    a_norm: &WeightedGraph,
    x: &Matrix,
    model: &GaeModel,
    batch: &EdgeBatch,
    l2: f64,
    pos_weight: f64,
) -> Result<f64> {
    let (emb, _) = gcn_forward(a_norm, x, model)?;
    let scores = reconstruction_scores(&emb.z, batch)?;
    Ok(bce_loss(&scores, batch.labels(), pos_weight)? + 0.5 * l2 * model.weight_norm_sq())
}

/// Exact gradients of `bce + (l2 / 2) Σ‖W_k‖²` with respect to each `W_k`.
///
/// An empty batch contributes no data term, leaving `l2 · W_k`.
pub fn backward(
    cache: &ForwardCache,
    batch: &EdgeBatch,
    model: &GaeModel,
    l2: f64,
    pos_weight: f64,
) -> Result<Vec<Matrix>> {
    if cache.fingerprint != model.fingerprint() || cache.pre_activation.len() != model.layers() {
        return Err(Error::Data("forward cache does not match the model weights".into()));
    }
    let z = &cache.output;
    batch.check_nodes(z.rows())?;

    // dL/dZ for the output embedding
    let mut grad = Matrix::zeros(z.rows(), z.cols());
    if !batch.is_empty() {
        let inv_b = 1.0 / batch.len() as f64;
        for (&(i, j), &y) in batch.pairs.iter().zip(&batch.labels) {
            let s = decode_pair(z.row(i), z.row(j));
            // the clamp in the loss is flat outside [ε, 1−ε]
            if !(BCE_EPS..=1.0 - BCE_EPS).contains(&s) {
                continue;
            }
            let dlogit = inv_b * if y { -pos_weight * (1.0 - s) } else { s };
            let (zi, zj) = (z.row(i).to_vec(), z.row(j).to_vec());
            for (g, v) in grad.row_mut(i).iter_mut().zip(&zj) {
                *g += dlogit * v;
            }
            for (g, v) in grad.row_mut(j).iter_mut().zip(&zi) {
                *g += dlogit * v;
            }
        }
    }

    let last = model.layers() - 1;
    let mut grads = vec![Matrix::zeros(0, 0); model.layers()];
    // `grad` holds dL/dH_{k+1} entering each iteration
    for k in (0..=last).rev() {
        let dz = if k < last {
            grad.zip_with(&cache.pre_activation[k], |g, pre| g * relu_grad(pre))?
        } else {
            grad
        };
        let mut dw = cache.propagated[k].t_matmul(&dz)?;
        dw.add_scaled(&model.weights[k], l2)?;
        if k > 0 {
            let dp = dz.matmul_t(&model.weights[k])?;
            grad = cache.a_norm.t_matmul(&dp)?;
        } else {
            grad = Matrix::zeros(0, 0);
        }
        grads[k] = dw;
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{add_self_loops_and_normalize, WeightedGraph};
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};
    use rand::Rng;

    fn tickers(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("N{i}")).collect()
    }

    fn normalized(adj: Matrix) -> WeightedGraph {
        let n = adj.rows();
        add_self_loops_and_normalize(&WeightedGraph::new(tickers(n), adj, GraphStage::Scaled).unwrap()).unwrap()
    }

    fn identity_graph(n: usize) -> WeightedGraph {
        WeightedGraph::new(tickers(n), Matrix::identity(n), GraphStage::SelfLoopedNormalized).unwrap()
    }

    fn random_instance(seed: u64, n: usize, dims: &[usize]) -> (WeightedGraph, Matrix, GaeModel) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut adj = Matrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random_bool(0.5) {
                    let w = rng.random_range(0.1..2.0);
                    adj.set(i, j, w);
                    adj.set(j, i, w);
                }
            }
        }
        let x = Matrix::from_fn(n, dims[0], |_, _| rng.random_range(-1.0..1.0));
        (normalized(adj), x, init_weights(dims, seed + 100).unwrap())
    }

    #[test]
    fn zero_weights_give_zero_embedding() {
        let (g, x, m) = random_instance(1, 5, &[3, 4, 2]);
        let zeros = m.weights().iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect();
        let m0 = GaeModel::from_weights(m.layer_dims().to_vec(), zeros, 0).unwrap();
        let (emb, _) = gcn_forward(&g, &x, &m0).unwrap();
        assert_eq!(emb.z, Matrix::zeros(5, 2));
    }

    #[test]
    fn identity_pipeline() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [0.0, 3.0], [4.0, 0.5]]).unwrap();
        let m = GaeModel::from_weights(vec![2, 2], vec![Matrix::identity(2)], 0).unwrap();
        let (emb, _) = gcn_forward(&identity_graph(3), &x, &m).unwrap();
        assert_eq!(emb.z, x);
    }

    #[test]
    fn two_node_hand_example() {
        let g = normalized(Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap());
        let x = Matrix::from_rows(&[[1.0], [-1.0]]).unwrap();
        let m = GaeModel::from_weights(vec![1, 1], vec![Matrix::identity(1)], 0).unwrap();
        let (emb, cache) = gcn_forward(&g, &x, &m).unwrap();
        assert_eq!(cache.pre_activation[0], Matrix::zeros(2, 1));
        assert_eq!(emb.z, Matrix::zeros(2, 1));
    }

    #[test]
    fn forward_shape_errors() {
        let (g, _, m) = random_instance(2, 4, &[3, 2]);
        assert!(matches!(gcn_forward(&g, &Matrix::zeros(4, 5), &m), Err(Error::Shape { .. })));
        assert!(matches!(gcn_forward(&g, &Matrix::zeros(3, 3), &m), Err(Error::Shape { .. })));
    }

    #[test]
    fn decoder() {
        assert_eq!(decode_pair(&[1.0, 0.0], &[0.0, 1.0]), 0.5);
        assert!((decode_pair(&[1.0, 0.0], &[1.0, 5.0]) - 0.731_058_578_630_004_9).abs() < 1e-15);
        let z = Matrix::zeros(3, 2);
        let b = EdgeBatch::new(vec![(0, 1), (1, 2)], vec![true, false]).unwrap();
        assert_eq!(reconstruction_scores(&z, &b).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn batch_scores_match_dense_reconstruction() {
        let z = Matrix::from_rows(&[[0.3, -1.0], [2.0, 0.5], [-0.7, 0.1]]).unwrap();
        let s = reconstruction_matrix(&z);
        let b = EdgeBatch::new(vec![(0, 1), (0, 2), (1, 2)], vec![true; 3]).unwrap();
        let scores = reconstruction_scores(&z, &b).unwrap();
        assert_eq!(scores, vec![s.get(0, 1), s.get(0, 2), s.get(1, 2)]);
        let single = EdgeBatch::new(vec![(2, 1)], vec![false]).unwrap();
        assert_eq!(reconstruction_scores(&z, &single).unwrap(), vec![decode_pair(z.row(1), z.row(2))]);
    }

    #[test]
    fn batch_validation() {
        assert!(EdgeBatch::new(vec![(1, 1)], vec![true]).is_err());
        assert!(EdgeBatch::new(vec![(0, 1), (1, 0)], vec![true, true]).is_err());
        assert!(EdgeBatch::new(vec![(0, 1)], vec![]).is_err());
        let b = EdgeBatch::new(vec![(0, 5)], vec![true]).unwrap();
        assert!(reconstruction_scores(&Matrix::zeros(3, 1), &b).is_err());
    }

    #[test]
    fn bce_examples() {
        assert!((bce_loss(&[0.5, 0.5], &[true, false], 1.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        let perfect = bce_loss(&[1.0 - BCE_EPS, BCE_EPS], &[true, false], 1.0).unwrap();
        assert!(perfect < 1e-11);
        let hand = (-(0.8f64).ln() - (0.7f64).ln()) / 2.0;
        assert!((bce_loss(&[0.8, 0.3], &[true, false], 1.0).unwrap() - hand).abs() < 1e-15);
        assert!((hand - 0.2899).abs() < 1e-4);
        assert!(bce_loss(&[], &[], 1.0).is_err());
        assert!(bce_loss(&[0.0, 1.0], &[true, false], 1.0).unwrap().is_finite());
    }

    #[test]
    fn gradient_vanishes_at_saturated_labels() {
        // large aligned / anti-aligned embeddings saturate the sigmoid
        let x = Matrix::from_rows(&[[50.0], [50.0], [-50.0]]).unwrap();
        let m = GaeModel::from_weights(vec![1, 1], vec![Matrix::identity(1)], 0).unwrap();
        let g = identity_graph(3);
        let (_, cache) = gcn_forward(&g, &x, &m).unwrap();
        let b = EdgeBatch::new(vec![(0, 1), (0, 2)], vec![true, false]).unwrap();
        let grads = backward(&cache, &b, &m, 0.0, 1.0).unwrap();
        assert_eq!(grads[0], Matrix::zeros(1, 1));
    }

    #[test]
    fn empty_batch_leaves_ridge_gradient() {
        let (g, x, m) = random_instance(3, 6, &[4, 5, 3]);
        let (_, cache) = gcn_forward(&g, &x, &m).unwrap();
        let empty = EdgeBatch::new(vec![], vec![]).unwrap();
        let grads = backward(&cache, &empty, &m, 0.3, 1.0).unwrap();
        for (gk, wk) in grads.iter().zip(m.weights()) {
            assert!(gk.max_abs_diff(&wk.scale(0.3)) < 1e-15);
        }
    }

    #[test]
    fn stale_cache_rejected() {
        let (g, x, mut m) = random_instance(4, 5, &[3, 2]);
        let (_, cache) = gcn_forward(&g, &x, &m).unwrap();
        m.weights_mut()[0].set(0, 0, 9.0);
        let b = EdgeBatch::new(vec![(0, 1)], vec![true]).unwrap();
        assert!(backward(&cache, &b, &m, 0.0, 1.0).is_err());
    }

    /// Central differences of the full objective, entry by entry.
    fn finite_difference(g: &WeightedGraph, x: &Matrix, m: &GaeModel, b: &EdgeBatch, l2: f64, pw: f64) -> Vec<Matrix> {
        let h = 1e-5;
        let mut out = Vec::new();
        for k in 0..m.layers() {
            let (r, c) = m.weights()[k].shape();
            let mut fd = Matrix::zeros(r, c);
            for i in 0..r {
                for j in 0..c {
                    let mut plus = m.clone();
                    let w = plus.weights_mut()[k].get(i, j);
                    plus.weights_mut()[k].set(i, j, w + h);
                    let mut minus = m.clone();
                    minus.weights_mut()[k].set(i, j, w - h);
                    let lp = objective(g, x, &plus, b, l2, pw).unwrap();
                    let lm = objective(g, x, &minus, b, l2, pw).unwrap();
                    fd.set(i, j, (lp - lm) / (2.0 * h));
                }
            }
            out.push(fd);
        }
        out
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..3u64 {
            let (g, x, m) = random_instance(seed, 8, &[5, 6, 4, 3]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 7);
            let mut pairs = Vec::new();
            while pairs.len() < 12 {
                let i = rng.random_range(0..8usize);
                let j = rng.random_range(0..8usize);
                if i < j && !pairs.contains(&(i, j)) {
                    pairs.push((i, j));
                }
            }
            let labels = (0..12).map(|k| k % 3 != 0).collect();
            let b = EdgeBatch::new(pairs, labels).unwrap();
            for l2 in [0.0, 0.01] {
                let pw = b.balanced_pos_weight();
                let (_, cache) = gcn_forward(&g, &x, &m).unwrap();
                let grads = backward(&cache, &b, &m, l2, pw).unwrap();
                let fd = finite_difference(&g, &x, &m, &b, l2, pw);
                for (a, n) in grads.iter().zip(&fd) {
                    for (&av, &nv) in a.as_slice().iter().zip(n.as_slice()) {
                        let rel = (av - nv).abs() / av.abs().max(nv.abs()).max(1e-6);
                        assert!(rel < 1e-5, "seed {seed} l2 {l2}: {av} vs {nv}");
                    }
                }
            }
        }
    }

    #[test]
    fn glorot_init() {
        let a = init_weights(&[10, 7, 3], 42).unwrap();
        assert_eq!(a, init_weights(&[10, 7, 3], 42).unwrap());
        assert_ne!(a, init_weights(&[10, 7, 3], 43).unwrap());
        for (k, w) in a.weights().iter().enumerate() {
            let lim = glorot_limit(a.layer_dims()[k], a.layer_dims()[k + 1]);
            assert!(w.as_slice().iter().all(|v| v.abs() <= lim));
        }
        let big = init_weights(&[64, 64], 5).unwrap();
        let mean = big.weights()[0].as_slice().iter().sum::<f64>() / 4096.0;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!(init_weights(&[3], 0).is_err());
        assert!(init_weights(&[3, 0], 0).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let m = init_weights(&[7, 5, 2], 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.json");
        m.save_json(&p).unwrap();
        let back = GaeModel::load_json(&p).unwrap();
        assert_eq!(back, m);
        for (a, b) in back.weights().iter().zip(m.weights()) {
            assert!(a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    proptest! {
        #[test]
        fn decode_symmetric(a in proptest::collection::vec(-20.0f64..20.0, 4), b in proptest::collection::vec(-20.0f64..20.0, 4)) {
            prop_assert_eq!(decode_pair(&a, &b), decode_pair(&b, &a));
        }

        #[test]
        fn permutation_equivariance(seed in 0u64..1000) {
            let n = 7;
            let (g, x, m) = random_instance(seed, n, &[4, 6, 3]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let mut perm: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(&mut perm[..], &mut rng);
            let gp = WeightedGraph::new(
                perm.iter().map(|&i| g.tickers[i].clone()).collect(),
                g.adjacency.permute_symmetric(&perm),
                GraphStage::SelfLoopedNormalized,
            ).unwrap();
            let (z, _) = gcn_forward(&g, &x, &m).unwrap();
            let (zp, _) = gcn_forward(&gp, &x.select_rows(&perm), &m).unwrap();
            prop_assert!(zp.z.max_abs_diff(&z.z.select_rows(&perm)) < 1e-9);
        }
    }
}
