//! End-to-end commands: build the featured graph, cross-validate, train and
//! evaluate, ablate, and generate synthetic inputs.
//!
//! Every command recomputes the graph and features from the raw inputs, so a
//! command's outputs depend only on `(RunConfig, seed)`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::cluster::{self, pca2d, sector_decomposition, spectral_cluster, write_coords_csv, Clustering};
use crate::error::{Error, Result};
use crate::features::{self, daily_znorm, pvclcl, winsorize, FeatureMatrix};
use crate::gae::gcn_forward;
use crate::graph::{
    add_self_loops_and_normalize, build_cooccurrence_graph, half_pair_count, mean_edge_weight, scale_mean,
    threshold_median, GraphStage, WeightedGraph,
};
use crate::ingest::{
    align_universe, impute_missing, load_cooccurrence, load_labels, load_prices, read_file, write_file,
    DroppedTickers, GroundTruthLabels,
};
use crate::seed;
use crate::synth::{self, SynthConfig};
use crate::tensor::Matrix;
use crate::train::{final_train_and_test, kfold_cv, split_edges, CvEntry, CvOutcome, TrainConfig};

pub const DEFAULT_FINAL_EPOCHS: usize = 82;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    #[default]
    Full,
    /// Identity matrix in place of the price features.
    EdgesOnly,
    /// Price features on a randomly rewired graph.
    FeaturesOnly,
}

impl AblationMode {
    pub const ALL: [AblationMode; 3] = [AblationMode::Full, AblationMode::EdgesOnly, AblationMode::FeaturesOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationMode::Full => "full",
            AblationMode::EdgesOnly => "edges_only",
            AblationMode::FeaturesOnly => "features_only",
        }
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}; expected full, edges_only or features_only")))
    }
}

/// Run configuration, read from JSON. Omitted fields take the defaults
/// below. All randomness derives from `seed`; `train.seed` is overwritten.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub cooc: PathBuf,
    pub prices: Vec<PathBuf>,
    pub labels: PathBuf,
    pub out_dir: PathBuf,
    pub winsor_lo: f64,
    pub winsor_hi: f64,
    pub test_frac: f64,
    pub val_frac: f64,
    pub train: TrainConfig,
    /// Grid for cross-validation; `None` searches `train` alone.
    pub grid: Option<Vec<TrainConfig>>,
    pub cv_folds: usize,
    /// Final training length; `None` uses `cv_choice` if given, else 82.
    pub final_epochs: Option<usize>,
    /// A `cv_choice.json` whose config and epoch count drive final training.
    pub cv_choice: Option<PathBuf>,
    pub k: usize,
    pub kmeans_restarts: usize,
    pub mode: AblationMode,
    pub seed: u64,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            cooc: PathBuf::from("data/cooc.csv"),
            prices: vec![PathBuf::from("data/prices.csv")],
            labels: PathBuf::from("data/labels.csv"),
            out_dir: PathBuf::from("out"),
            winsor_lo: features::DEFAULT_WINSOR_LO,
            winsor_hi: features::DEFAULT_WINSOR_HI,
            test_frac: crate::train::TEST_FRAC,
            val_frac: crate::train::VAL_FRAC,
            train: TrainConfig::default(),
            grid: None,
            cv_folds: 5,
            final_epochs: None,
            cv_choice: None,
            k: 9,
            kmeans_restarts: cluster::KMEANS_RESTARTS,
            mode: AblationMode::Full,
            seed: 0,
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = read_file(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.into(),
            source: e,
        })
    }

    /// Points the input paths at the files written by `cmd_synth`.
    pub fn use_dataset_dir(&mut self, dir: &Path) {
        let p = synth::DatasetPaths::in_dir(dir);
        self.cooc = p.cooc;
        self.prices = vec![p.prices];
        self.labels = p.labels;
    }
}

/// Seed streams used by the commands.
mod stream {
    pub const SPLIT: u64 = 1;
    pub const CV: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const LATENT_KMEANS: u64 = 4;
    pub const SPECTRAL: u64 = 5;
    pub const FEATURE_KMEANS: u64 = 6;
    pub const REWIRE: u64 = 7;
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.into(),
        source: e,
    })?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// Counts recorded while building the graph and features.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BuildManifest {
    pub nodes: usize,
    pub articles: usize,
    pub price_dates: usize,
    pub feature_days: usize,
    pub imputed_cells: usize,
    pub dropped: DroppedTickers,
    pub tickers_missing_from_price_files: Vec<String>,
    pub raw_edges: usize,
    pub half_pair_target: usize,
    pub thresholded_edges: usize,
    pub mean_weight_pre_scaling: f64,
    pub mean_weight_post_scaling: f64,
    pub winsor_lo: f64,
    pub winsor_hi: f64,
    pub clipped_entries: usize,
}

/// Graph and features ready for training.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub labels: GroundTruthLabels,
    pub raw_graph: WeightedGraph,
    /// Thresholded and mean-scaled co-occurrence graph.
    pub graph: WeightedGraph,
    pub raw_features: FeatureMatrix,
    pub winsorized: FeatureMatrix,
    pub features: FeatureMatrix,
    pub manifest: BuildManifest,
}

impl Prepared {
    pub fn tickers(&self) -> &[String] {
        self.labels.tickers()
    }
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let cooc = load_cooccurrence(&cfg.cooc)?;
    let labels = load_labels(&cfg.labels)?;
    let loaded = load_prices(&cfg.prices, cooc.tickers())?;
    let aligned = align_universe(&cooc, &loaded.panel, &labels)?;
    let imputed_cells = aligned.panel.missing_count();
    let panel = impute_missing(&aligned.panel)?;

    let raw_graph = build_cooccurrence_graph(&aligned.cooc)?;
    let thresholded = threshold_median(&raw_graph)?;
    let mean_pre = mean_edge_weight(&thresholded).ok_or_else(|| Error::Data("thresholded graph has no edges".into()))?;
    let graph = scale_mean(&thresholded)?;

    let raw_features = pvclcl(&panel)?;
    let (winsorized, clipped) = winsorize(&raw_features, cfg.winsor_lo, cfg.winsor_hi)?;
    let features = daily_znorm(&winsorized)?;

    let manifest = BuildManifest {
        nodes: graph.n(),
        articles: aligned.cooc.articles(),
        price_dates: panel.dates().len(),
        feature_days: features.days(),
        imputed_cells,
        dropped: aligned.dropped,
        tickers_missing_from_price_files: loaded.missing_tickers,
        raw_edges: raw_graph.edge_count(),
        half_pair_target: half_pair_count(graph.n()),
        thresholded_edges: thresholded.edge_count(),
        mean_weight_pre_scaling: mean_pre,
        mean_weight_post_scaling: mean_edge_weight(&graph).unwrap_or(0.0),
        winsor_lo: cfg.winsor_lo,
        winsor_hi: cfg.winsor_hi,
        clipped_entries: clipped,
    };
    Ok(Prepared {
        labels: aligned.labels,
        raw_graph,
        graph,
        raw_features,
        winsorized,
        features,
        manifest,
    })
}

/// Builds and writes `edges.csv`, the three feature-stage CSVs and
/// `manifest.json` into `out_dir`.
pub fn cmd_build(cfg: &RunConfig) -> Result<BuildManifest> {
    let p = prepare(cfg)?;
    let dir = &cfg.out_dir;
    p.graph.write_edge_list(&dir.join("edges.csv"))?;
    p.raw_features.write_csv(&dir.join("features_raw.csv"))?;
    p.winsorized.write_csv(&dir.join("features_winsorized.csv"))?;
    p.features.write_csv(&dir.join("features_normalized.csv"))?;
    write_json(&dir.join("manifest.json"), &p.manifest)?;
    Ok(p.manifest)
}

/// Reassigns the graph's edge weights to uniformly drawn distinct vertex
/// pairs. Edge count and weight multiset are kept; no self-loops.
pub fn randomize_edges(g: &WeightedGraph, seed: u64) -> Result<WeightedGraph> {
    let n = g.n();
    let weights: Vec<f64> = g.edges().into_iter().map(|(_, _, w)| w).collect();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let mut rng = seed::rng(seed, &[]);
    let chosen = index::sample(&mut rng, pairs.len(), weights.len());
    let mut adj = Matrix::zeros(n, n);
    for (k, &w) in chosen.into_iter().zip(&weights) {
        let (i, j) = pairs[k];
        adj.set(i, j, w);
        adj.set(j, i, w);
    }
    WeightedGraph::new(g.tickers.clone(), adj, g.stage)
}

/// Graph the auto-encoder reconstructs and the features it encodes.
/// `a_norm` is the full-graph operator used to embed for clustering.
pub struct ModelInputs {
    pub graph: WeightedGraph,
    pub a_norm: WeightedGraph,
    pub x: Matrix,
}

pub fn model_inputs(p: &Prepared, mode: AblationMode, run_seed: u64) -> Result<ModelInputs> {
    let graph = match mode {
        AblationMode::FeaturesOnly => randomize_edges(&p.graph, seed::derive(run_seed, &[stream::REWIRE]))?,
        _ => p.graph.clone(),
    };
    let x = match mode {
        AblationMode::EdgesOnly => Matrix::identity(graph.n()),
        _ => p.features.data.clone(),
    };
    debug_assert_eq!(graph.stage, GraphStage::Scaled);
    Ok(ModelInputs {
        a_norm: add_self_loops_and_normalize(&graph)?,
        graph,
        x,
    })
}

fn mode_inputs(cfg: &RunConfig) -> Result<(Prepared, ModelInputs, crate::train::EdgeSplit)> {
    let p = prepare(cfg)?;
    let inputs = model_inputs(&p, cfg.mode, cfg.seed)?;
    let split = split_edges(
        &inputs.graph,
        cfg.test_frac,
        cfg.val_frac,
        seed::derive(cfg.seed, &[stream::SPLIT]),
    )?;
    Ok((p, inputs, split))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvChoice {
    pub config: TrainConfig,
    pub epochs: usize,
    pub best_index: usize,
    pub mean_ap: f64,
}

/// Cross-validates the grid; writes `cv_report.json` and `cv_choice.json`.
pub fn cmd_cv(cfg: &RunConfig) -> Result<CvOutcome> {
    let (_, inputs, split) = mode_inputs(cfg)?;
    let grid = cfg.grid.clone().unwrap_or_else(|| vec![cfg.train.clone()]);
    let out = kfold_cv(
        &inputs.graph,
        &inputs.x,
        &split,
        &grid,
        cfg.cv_folds,
        seed::derive(cfg.seed, &[stream::CV]),
    )?;
    let report: &[CvEntry] = &out.report;
    write_json(&cfg.out_dir.join("cv_report.json"), &report)?;
    write_json(
        &cfg.out_dir.join("cv_choice.json"),
        &CvChoice {
            config: out.best.clone(),
            epochs: out.epochs,
            best_index: out.best_index,
            mean_ap: out.report[out.best_index].mean_ap,
        },
    )?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterScores {
    pub purity: f64,
    pub nmi: f64,
    pub cluster_sizes: Vec<usize>,
}

impl ClusterScores {
    fn of(c: &Clustering, truth: &GroundTruthLabels) -> Result<Self> {
        Ok(ClusterScores {
            purity: cluster::purity(c, truth)?,
            nmi: cluster::nmi(c, truth)?,
            cluster_sizes: c.sizes(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub mode: AblationMode,
    pub nodes: usize,
    pub k: usize,
    pub config: TrainConfig,
    pub epochs: usize,
    pub test_ap: f64,
    pub nmi_normalization: &'static str,
    pub latent: ClusterScores,
    /// Spectral clustering of the co-occurrence graph (never ablated).
    pub spectral: ClusterScores,
    /// k-means on the normalized price features (never ablated).
    pub features_kmeans: ClusterScores,
}

fn final_settings(cfg: &RunConfig) -> Result<(TrainConfig, usize)> {
    let choice = match &cfg.cv_choice {
        Some(path) => {
            let text = read_file(path)?;
            Some(serde_json::from_str::<CvChoice>(&text).map_err(|e| Error::Json {
                path: path.clone(),
                source: e,
            })?)
        }
        None => None,
    };
    let train = choice.as_ref().map_or_else(|| cfg.train.clone(), |c| c.config.clone());
    let epochs = cfg
        .final_epochs
        .or(choice.map(|c| c.epochs))
        .unwrap_or(DEFAULT_FINAL_EPOCHS);
    Ok((train, epochs))
}

/// Final training, latent clustering, baselines and exports. Writes
/// `metrics.json`, `clusters.csv`, `coords.csv`, `sectors.json`,
/// `history.csv` and `model.json` into `out_dir`.
pub fn cmd_train_eval(cfg: &RunConfig) -> Result<Metrics> {
    let (p, inputs, split) = mode_inputs(cfg)?;
    let (train, epochs) = final_settings(cfg)?;
    let train = TrainConfig {
        seed: seed::derive(cfg.seed, &[stream::TRAIN]),
        ..train
    };
    let fin = final_train_and_test(&inputs.graph, &inputs.x, &split, &train, epochs)?;
    let (emb, _) = gcn_forward(&inputs.a_norm, &inputs.x, &fin.model)?;

    let tickers = p.tickers();
    let latent = cluster::kmeans(
        tickers,
        &emb.z,
        cfg.k,
        seed::derive(cfg.seed, &[stream::LATENT_KMEANS]),
        cfg.kmeans_restarts,
    )?;
    let spectral = spectral_cluster(&p.graph, cfg.k, seed::derive(cfg.seed, &[stream::SPECTRAL]))?;
    let feat = cluster::kmeans(
        tickers,
        &p.features.data,
        cfg.k,
        seed::derive(cfg.seed, &[stream::FEATURE_KMEANS]),
        cfg.kmeans_restarts,
    )?;

    let metrics = Metrics {
        mode: cfg.mode,
        nodes: p.graph.n(),
        k: cfg.k,
        config: train,
        epochs,
        test_ap: fin.test_ap,
        nmi_normalization: "geometric",
        latent: ClusterScores::of(&latent, &p.labels)?,
        spectral: ClusterScores::of(&spectral, &p.labels)?,
        features_kmeans: ClusterScores::of(&feat, &p.labels)?,
    };

    let dir = &cfg.out_dir;
    write_json(&dir.join("metrics.json"), &metrics)?;
    latent.write_csv(&dir.join("clusters.csv"), &p.labels)?;
    write_coords_csv(&dir.join("coords.csv"), &latent, &pca2d(&emb.z)?)?;
    write_json(&dir.join("sectors.json"), &sector_decomposition(&latent, &p.labels)?)?;
    fin.history.write_csv(&dir.join("history.csv"))?;
    fin.model.save_json(&dir.join("model.json"))?;
    Ok(metrics)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub mode: AblationMode,
    pub test_ap: f64,
    pub purity: f64,
    pub nmi: f64,
}

/// Runs `cmd_train_eval` in every mode, each into `out_dir/<mode>`, and
/// writes `ablation.json`.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<Vec<AblationRow>> {
    let rows = AblationMode::ALL
        .into_iter()
        .map(|mode| {
            let run = RunConfig {
                mode,
                out_dir: cfg.out_dir.join(mode.as_str()),
                ..cfg.clone()
            };
            let m = cmd_train_eval(&run)?;
            Ok(AblationRow {
                mode,
                test_ap: m.test_ap,
                purity: m.latent.purity,
                nmi: m.latent.nmi,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_json(&cfg.out_dir.join("ablation.json"), &rows)?;
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SynthSummary {
    pub config: SynthConfig,
    pub no_signal: bool,
    pub group_sizes: Vec<usize>,
}

/// Writes `cooc.csv`, `prices.csv`, `labels.csv` and `synth.json` into
/// `out_dir`.
pub fn cmd_synth(cfg: &RunConfig) -> Result<SynthSummary> {
    let data = synth::generate(&cfg.synth)?;
    synth::write_dataset(&data, &cfg.out_dir)?;
    let groups = synth::planted_groups(cfg.synth.n_companies, cfg.synth.k_planted);
    let summary = SynthSummary {
        config: cfg.synth.clone(),
        no_signal: data.no_signal,
        group_sizes: (0..cfg.synth.k_planted)
            .map(|g| groups.iter().filter(|&&x| x == g).count())
            .collect(),
    };
    write_json(&cfg.out_dir.join("synth.json"), &summary)?;
    Ok(summary)
}
