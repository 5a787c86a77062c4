//! Relation-prediction training of the auto-encoder.
//!
//! Positive edges are split once into test / validation / train by a seeded
//! permutation. Validation and test non-edges are fixed at split time; train
//! non-edges are resampled every epoch. Optimization is Adam on the BCE loss
//! plus a coupled ridge penalty, with a rolling-mean early-stopping rule.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gae::{backward, bce_loss, gcn_forward, init_weights, reconstruction_scores, EdgeBatch, GaeModel};
use crate::graph::{add_self_loops_and_normalize, GraphStage, WeightedGraph};
use crate::ingest::write_file;
use crate::seed;
use crate::tensor::Matrix;

pub type Pair = (usize, usize);

pub const TEST_FRAC: f64 = 0.20;
pub const VAL_FRAC: f64 = 0.16;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Positive edges split into disjoint test / validation / train sets, plus
/// fixed validation and test non-edges.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSplit {
    /// Every positive edge in permuted order: test block, then validation,
    /// then train.
    pub order: Vec<Pair>,
    pub test_pos: Vec<Pair>,
    pub val_pos: Vec<Pair>,
    pub train_pos: Vec<Pair>,
    pub val_neg: Vec<Pair>,
    pub test_neg: Vec<Pair>,
    pub permutation_seed: u64,
}

impl EdgeSplit {
    /// Positives outside the test block, in permutation order.
    pub fn non_test_pos(&self) -> &[Pair] {
        &self.order[self.test_pos.len()..]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden_dims: Vec<usize>,
    pub out_dim: usize,
    pub l2: f64,
    pub lr: f64,
    pub stop_window_n: usize,
    pub stop_threshold_epochs: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Positive-class weight in the loss; `None` uses `#neg / #pos` of
    /// each batch.
    pub pos_weight: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_dims: vec![64, 16],
            out_dim: 8,
            l2: 0.005,
            lr: 0.01,
            stop_window_n: 30,
            stop_threshold_epochs: 80,
            max_epochs: 300,
            seed: 0,
            pos_weight: None,
        }
    }
}

impl TrainConfig {
    pub fn layer_dims(&self, input_dim: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.out_dim);
        dims
    }

    pub fn validate(&self) -> Result<()> {
        let positive = self.out_dim > 0
            && self.hidden_dims.iter().all(|&d| d > 0)
            && self.l2 >= 0.0
            && self.lr > 0.0
            && self.stop_window_n > 0
            && self.stop_threshold_epochs > 0
            && self.max_epochs > 0;
        if positive && self.l2.is_finite() && self.lr.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training configuration {self:?}")))
        }
    }
}

/// Complete search grid: 8 architectures, 3 output sizes, 5 ridge rates,
/// 5 learning rates and 3 stopping windows (1800 configs).
pub fn full_grid() -> Vec<TrainConfig> {
    let hidden: [&[usize]; 8] = [&[64], &[128], &[64, 16], &[64, 32], &[64, 64], &[128, 16], &[128, 32], &[128, 64]];
    let rates = [0.1, 0.01, 0.001, 0.005, 0.0075];
    let mut grid = Vec::new();
    for h in hidden {
        for out in [8, 16, 32] {
            for l2 in rates {
                for lr in rates {
                    for n in [10, 20, 30] {
                        grid.push(TrainConfig {
                            hidden_dims: h.to_vec(),
                            out_dim: out,
                            l2,
                            lr,
                            stop_window_n: n,
                            ..TrainConfig::default()
                        });
                    }
                }
            }
        }
    }
    grid
}

/// Adam moments per weight entry.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub t: u64,
}

impl AdamState {
    pub fn new(model: &GaeModel) -> Self {
        let zeros: Vec<Matrix> = model.weights().iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_ap: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn val_losses(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.val_loss).collect()
    }

    pub fn last_val_ap(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.val_ap)
    }

    /// CSV `epoch,train_loss,val_loss,val_ap`; missing values are empty.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("epoch,train_loss,val_loss,val_ap\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_loss, opt(r.val_loss), opt(r.val_ap)));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_csv().as_bytes())
    }
}

fn upper_pairs(n: usize) -> impl Iterator<Item = Pair> {
    (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j)))
}

fn positive_edges(g: &WeightedGraph) -> Vec<Pair> {
    upper_pairs(g.n()).filter(|&(i, j)| g.has_edge(i, j)).collect()
}

/// Uniform sample without replacement of non-edges not in `exclude`.
pub fn sample_negatives(g: &WeightedGraph, count: usize, exclude: &HashSet<Pair>, seed: u64) -> Result<Vec<Pair>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let candidates = negative_candidates(g, exclude);
    if candidates.len() < count {
        return Err(Error::Data(format!(
            "requested {count} non-edges but only {} are available",
            candidates.len()
        )));
    }
    let mut rng = seed::rng(seed, &[]);
    Ok(index::sample(&mut rng, candidates.len(), count)
        .into_iter()
        .map(|k| candidates[k])
        .collect())
}

fn negative_candidates(g: &WeightedGraph, exclude: &HashSet<Pair>) -> Vec<Pair> {
    upper_pairs(g.n())
        .filter(|&(i, j)| !g.has_edge(i, j) && !exclude.contains(&(i, j)))
        .collect()
}

fn round_count(frac: f64, total: usize) -> usize {
    (frac * total as f64).round() as usize
}

/// Splits the positive edges of `g` by a seeded permutation; remainder after
/// rounding goes to train.
pub fn split_edges(g: &WeightedGraph, test_frac: f64, val_frac: f64, seed: u64) -> Result<EdgeSplit> {
    if !(0.0..1.0).contains(&test_frac) || !(0.0..1.0).contains(&val_frac) || test_frac + val_frac >= 1.0 {
        return Err(Error::Config(format!("invalid split fractions test={test_frac} val={val_frac}")));
    }
    let mut order = positive_edges(g);
    let e = order.len();
    if e < 10 {
        return Err(Error::Data(format!("need at least 10 edges to split, got {e}")));
    }
    order.shuffle(&mut seed::rng(seed, &[0]));
    let n_test = round_count(test_frac, e);
    let n_val = round_count(val_frac, e);
    let test_pos = order[..n_test].to_vec();
    let val_pos = order[n_test..n_test + n_val].to_vec();
    let train_pos = order[n_test + n_val..].to_vec();

    let mut neg = sample_negatives(g, n_test + n_val, &HashSet::new(), seed::derive(seed, &[1]))?;
    let val_neg = neg.split_off(n_test);
    Ok(EdgeSplit {
        order,
        test_pos,
        val_pos,
        train_pos,
        val_neg,
        test_neg: neg,
        permutation_seed: seed,
    })
}

/// One bias-corrected Adam update of every weight.
pub fn adam_step(model: &mut GaeModel, grads: &[Matrix], state: &mut AdamState, lr: f64) -> Result<()> {
    if grads.len() != model.layers() || state.m.len() != model.layers() {
        return Err(Error::Data("adam_step: layer count mismatch".into()));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    for (k, w) in model.weights_mut().iter_mut().enumerate() {
        let g = &grads[k];
        if g.shape() != w.shape() || state.m[k].shape() != w.shape() {
            return Err(Error::Shape {
                op: "adam_step",
                left: w.shape(),
                right: g.shape(),
            });
        }
        let m = state.m[k].as_mut_slice();
        let v = state.v[k].as_mut_slice();
        for (((wi, &gi), mi), vi) in w.as_mut_slice().iter_mut().zip(g.as_slice()).zip(m).zip(v) {
            *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * gi;
            *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *wi -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// Rolling-mean stopping rule on the validation loss: after at least
/// `max(threshold_epochs, 2n)` epochs, stop once the mean of the last `n`
/// losses is not below the mean of the `n` before them.
pub fn early_stop(history: &TrainHistory, n: usize, threshold_epochs: usize) -> bool {
    should_stop(&history.val_losses(), n, threshold_epochs)
}

pub fn should_stop(val_losses: &[f64], n: usize, threshold_epochs: usize) -> bool {
    let e = val_losses.len();
    if n == 0 || e < threshold_epochs.max(2 * n) {
        return false;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    mean(&val_losses[e - n..]) >= mean(&val_losses[e - 2 * n..e - n])
}

/// Area under the precision-recall step curve,
/// `Σ_k P@k · Δrecall@k` over the ranking by descending score. Equal scores
/// keep their input order.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Data(format!("{} scores but {} labels", scores.len(), labels.len())));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(Error::Data("average precision needs at least one positive".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            ap += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(ap / positives as f64)
}

/// Self-looped, normalized operator of `g` restricted to `visible` edges.
/// Training encodes through this so held-out edges never reach the encoder.
pub fn message_passing_operator(g: &WeightedGraph, visible: &[Pair]) -> Result<WeightedGraph> {
    if g.stage == GraphStage::SelfLoopedNormalized {
        return Err(Error::Domain("expected a graph without self-loops".into()));
    }
    let n = g.n();
    let mut adj = Matrix::zeros(n, n);
    for &(i, j) in visible {
        if i >= n || j >= n || !g.has_edge(i, j) {
            return Err(Error::Data(format!("visible pair ({i}, {j}) is not an edge")));
        }
        let w = g.adjacency.get(i, j);
        adj.set(i, j, w);
        adj.set(j, i, w);
    }
    add_self_loops_and_normalize(&WeightedGraph::new(g.tickers.clone(), adj, g.stage)?)
}

/// Pairs that must never be drawn as training non-edges.
fn held_out(negs: &[&[Pair]]) -> HashSet<Pair> {
    negs.iter().flat_map(|s| s.iter().copied()).collect()
}

enum Schedule {
    EarlyStopping,
    Fixed(usize),
}

struct Evaluation {
    loss: f64,
    ap: f64,
}

fn evaluate(a_norm: &WeightedGraph, x: &Matrix, model: &GaeModel, batch: &EdgeBatch, pos_weight: Option<f64>) -> Result<Evaluation> {
    let (emb, _) = gcn_forward(a_norm, x, model)?;
    let scores = reconstruction_scores(&emb.z, batch)?;
    let pw = pos_weight.unwrap_or_else(|| batch.balanced_pos_weight());
    Ok(Evaluation {
        loss: bce_loss(&scores, batch.labels(), pw)?,
        ap: average_precision(&scores, batch.labels())?,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_training(
    g: &WeightedGraph,
    a_norm: &WeightedGraph,
    x: &Matrix,
    train_pos: &[Pair],
    exclude: &HashSet<Pair>,
    val: Option<&EdgeBatch>,
    cfg: &TrainConfig,
    schedule: Schedule,
) -> Result<(GaeModel, TrainHistory)> {
    cfg.validate()?;
    if a_norm.n() != x.rows() || g.n() != x.rows() {
        return Err(Error::Shape {
            op: "train",
            left: a_norm.adjacency.shape(),
            right: x.shape(),
        });
    }
    let mut model = init_weights(&cfg.layer_dims(x.cols()), cfg.seed)?;
    let mut adam = AdamState::new(&model);
    let mut history = TrainHistory::default();
    let candidates = negative_candidates(g, exclude);
    let epochs = match schedule {
        Schedule::EarlyStopping => cfg.max_epochs,
        Schedule::Fixed(e) => e,
    };

    for epoch in 1..=epochs {
        let count = train_pos.len().min(candidates.len());
        let mut rng = seed::rng(cfg.seed, &[0x6e_6567, epoch as u64]);
        let neg: Vec<Pair> = index::sample(&mut rng, candidates.len(), count)
            .into_iter()
            .map(|k| candidates[k])
            .collect();
        let batch = EdgeBatch::from_parts(train_pos, &neg)?;
        let pw = cfg.pos_weight.unwrap_or_else(|| batch.balanced_pos_weight());

        let (emb, cache) = gcn_forward(a_norm, x, &model)?;
        let scores = reconstruction_scores(&emb.z, &batch)?;
        let train_loss = bce_loss(&scores, batch.labels(), pw)?;
        let grads = backward(&cache, &batch, &model, cfg.l2, pw)?;
        adam_step(&mut model, &grads, &mut adam, cfg.lr)?;
        if model.weights().iter().any(|w| !w.is_finite()) {
            return Err(Error::Numeric(format!("weights diverged at epoch {epoch}")));
        }

        let (val_loss, val_ap) = match val {
            Some(v) => {
                let ev = evaluate(a_norm, x, &model, v, cfg.pos_weight)?;
                (Some(ev.loss), Some(ev.ap))
            }
            None => (None, None),
        };
        history.records.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_ap,
        });
        if matches!(schedule, Schedule::EarlyStopping)
            && val.is_some()
            && early_stop(&history, cfg.stop_window_n, cfg.stop_threshold_epochs)
        {
            break;
        }
    }
    Ok((model, history))
}

/// Trains on `split.train_pos` of `g` with early stopping on the validation
/// set, encoding through the train edges only. Returns the final-epoch model.
pub fn train_gae(g: &WeightedGraph, x: &Matrix, split: &EdgeSplit, cfg: &TrainConfig) -> Result<(GaeModel, TrainHistory)> {
    let val = EdgeBatch::from_parts(&split.val_pos, &split.val_neg)?;
    let exclude = held_out(&[&split.val_neg, &split.test_neg]);
    let a_norm = message_passing_operator(g, &split.train_pos)?;
    run_training(g, &a_norm, x, &split.train_pos, &exclude, Some(&val), cfg, Schedule::EarlyStopping)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvEntry {
    pub config: TrainConfig,
    pub fold_ap: Vec<f64>,
    pub fold_epochs: Vec<usize>,
    pub mean_ap: f64,
    pub mean_epochs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvOutcome {
    pub best_index: usize,
    pub best: TrainConfig,
    /// Rounded mean of epochs run across the best configuration's folds.
    pub epochs: usize,
    pub report: Vec<CvEntry>,
}

/// Contiguous fold boundaries over `len` items; the first `len % k` folds
/// get one extra item.
pub fn fold_ranges(len: usize, k: usize) -> Vec<std::ops::Range<usize>> {
    let base = len / k;
    let extra = len % k;
    let mut start = 0;
    (0..k)
        .map(|f| {
            let size = base + usize::from(f < extra);
            let r = start..start + size;
            start += size;
            r
        })
        .collect()
}

/// k-fold cross-validation over `grid` on the non-test positives of
/// `split`, folded as contiguous blocks of the split's permutation.
///
/// Every configuration sees the same folds and the same fold non-edges;
/// training seeds are derived from `(seed, config, fold)`.
pub fn kfold_cv(
    g: &WeightedGraph,
    x: &Matrix,
    split: &EdgeSplit,
    grid: &[TrainConfig],
    k: usize,
    seed: u64,
) -> Result<CvOutcome> {
    if grid.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    for cfg in grid {
        cfg.validate()?;
    }
    let pool = split.non_test_pos();
    if pool.len() < k {
        return Err(Error::Data(format!("{} non-test edges cannot fill {k} folds", pool.len())));
    }
    let test_neg: HashSet<Pair> = split.test_neg.iter().copied().collect();

    struct Fold {
        train: Vec<Pair>,
        a_norm: WeightedGraph,
        val: EdgeBatch,
        exclude: HashSet<Pair>,
    }
    let folds = fold_ranges(pool.len(), k)
        .into_iter()
        .enumerate()
        .map(|(f, range)| {
            let val_pos = &pool[range.clone()];
            let train: Vec<Pair> = pool[..range.start].iter().chain(&pool[range.end..]).copied().collect();
            let val_neg = sample_negatives(g, val_pos.len(), &test_neg, seed::derive(seed, &[0xf01d, f as u64]))?;
            let exclude = held_out(&[&split.test_neg, &val_neg]);
            Ok(Fold {
                a_norm: message_passing_operator(g, &train)?,
                train,
                val: EdgeBatch::from_parts(val_pos, &val_neg)?,
                exclude,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let tasks: Vec<(usize, usize)> = (0..grid.len()).flat_map(|c| (0..k).map(move |f| (c, f))).collect();
    let results = tasks
        .par_iter()
        .map(|&(c, f)| {
            let cfg = TrainConfig {
                seed: seed::derive(seed, &[c as u64, f as u64]),
                ..grid[c].clone()
            };
            let fold = &folds[f];
            let (_, history) = run_training(g, &fold.a_norm, x, &fold.train, &fold.exclude, Some(&fold.val), &cfg, Schedule::EarlyStopping)?;
            let ap = history.last_val_ap().expect("validation recorded");
            Ok((ap, history.len()))
        })
        .collect::<Result<Vec<_>>>()?;

    let report: Vec<CvEntry> = grid
        .iter()
        .enumerate()
        .map(|(c, cfg)| {
            let runs = &results[c * k..(c + 1) * k];
            let fold_ap: Vec<f64> = runs.iter().map(|r| r.0).collect();
            let fold_epochs: Vec<usize> = runs.iter().map(|r| r.1).collect();
            CvEntry {
                config: cfg.clone(),
                mean_ap: fold_ap.iter().sum::<f64>() / k as f64,
                mean_epochs: fold_epochs.iter().sum::<usize>() as f64 / k as f64,
                fold_ap,
                fold_epochs,
            }
        })
        .collect();
    let best_index = report
        .iter()
        .enumerate()
        .fold(0, |best, (i, e)| if e.mean_ap > report[best].mean_ap { i } else { best });
    Ok(CvOutcome {
        best_index,
        best: grid[best_index].clone(),
        epochs: report[best_index].mean_epochs.round() as usize,
        report,
    })
}

#[derive(Clone, Debug)]
pub struct FinalOutcome {
    pub model: GaeModel,
    pub history: TrainHistory,
    pub test_ap: f64,
}

/// Trains on all non-test positives for exactly `epochs` epochs, then scores
/// the held-out test edges and non-edges. Test edges stay out of the
/// encoder's graph.
pub fn final_train_and_test(
    g: &WeightedGraph,
    x: &Matrix,
    split: &EdgeSplit,
    cfg: &TrainConfig,
    epochs: usize,
) -> Result<FinalOutcome> {
    let train: Vec<Pair> = split.train_pos.iter().chain(&split.val_pos).copied().collect();
    let exclude = held_out(&[&split.test_neg]);
    let a_norm = message_passing_operator(g, &train)?;
    let (model, history) = if epochs == 0 {
        (init_weights(&cfg.layer_dims(x.cols()), cfg.seed)?, TrainHistory::default())
    } else {
        run_training(g, &a_norm, x, &train, &exclude, None, cfg, Schedule::Fixed(epochs))?
    };
    let test = EdgeBatch::from_parts(&split.test_pos, &split.test_neg)?;
    let test_ap = evaluate(&a_norm, x, &model, &test, cfg.pos_weight)?.ap;
    Ok(FinalOutcome {
        model,
        history,
        test_ap,
    })
}
