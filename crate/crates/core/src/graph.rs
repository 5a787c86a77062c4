//! News co-occurrence graph: cosine-similarity edges, top-half thresholding,
//! mean-one scaling, and the self-looped symmetric normalization fed to the
//! encoder.

use std::collections::HashMap;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::{read_file, write_file, CoocMatrix};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphStage {
    RawCosine,
    Thresholded,
    Scaled,
    SelfLoopedNormalized,
}

/// Symmetric nonnegative weighted adjacency over `tickers`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedGraph {
    pub tickers: Vec<String>,
    pub adjacency: Matrix,
    pub stage: GraphStage,
}

impl WeightedGraph {
    /// Validates symmetry, nonnegativity and the zero-diagonal rule.
    pub fn new(tickers: Vec<String>, adjacency: Matrix, stage: GraphStage) -> Result<Self> {
        let n = tickers.len();
        if adjacency.shape() != (n, n) {
            return Err(Error::Shape {
                op: "WeightedGraph::new",
                left: (n, n),
                right: adjacency.shape(),
            });
        }
        for i in 0..n {
            if stage != GraphStage::SelfLoopedNormalized && adjacency.get(i, i) != 0.0 {
                return Err(Error::Data(format!("nonzero diagonal at {}", tickers[i])));
            }
            for j in 0..n {
                let a = adjacency.get(i, j);
                if a < 0.0 {
                    return Err(Error::Data(format!("negative weight at ({i}, {j})")));
                }
                if (a - adjacency.get(j, i)).abs() >= 1e-12 {
                    return Err(Error::Data(format!("asymmetric weight at ({i}, {j})")));
                }
            }
        }
        Ok(WeightedGraph {
            tickers,
            adjacency,
            stage,
        })
    }

    pub fn n(&self) -> usize {
        self.tickers.len()
    }

    /// Upper-triangle pairs `(i, j, w)` with `i < j` and `w != 0`, in
    /// lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let w = self.adjacency.get(i, j);
                if w != 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency.get(i, j) != 0.0
    }

    /// Edge list CSV `ticker_i,ticker_j,weight` (upper triangle, nonzero).
    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        let mut out = String::from("ticker_i,ticker_j,weight\n");
        for (i, j, w) in self.edges() {
            out.push_str(&format!("{},{},{w}\n", self.tickers[i], self.tickers[j]));
        }
        write_file(path, out.as_bytes())
    }

    /// Reads an edge list written by [`write_edge_list`](Self::write_edge_list)
    /// over a known node order.
    pub fn read_edge_list(path: &Path, tickers: &[String], stage: GraphStage) -> Result<WeightedGraph> {
        let origin = path.display().to_string();
        let text = read_file(path)?;
        let index: HashMap<&str, usize> = tickers.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| Error::parse(&origin, e.to_string()))?;
        if headers.iter().collect::<Vec<_>>() != ["ticker_i", "ticker_j", "weight"] {
            return Err(Error::parse(&origin, "expected header ticker_i,ticker_j,weight"));
        }
        let n = tickers.len();
        let mut adj = Matrix::zeros(n, n);
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::parse(&origin, e.to_string()))?;
            let lookup = |k: usize| {
                index
                    .get(&rec[k])
                    .copied()
                    .ok_or_else(|| Error::parse(&origin, format!("unknown ticker {}", &rec[k])))
            };
            let (i, j) = (lookup(0)?, lookup(1)?);
            let w: f64 = rec[2]
                .parse()
                .map_err(|_| Error::parse(&origin, format!("bad weight {:?}", &rec[2])))?;
            adj.set(i, j, w);
            adj.set(j, i, w);
        }
        WeightedGraph::new(tickers.to_vec(), adj, stage)
    }
}

/// `u·v / (‖u‖‖v‖)`.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape {
            op: "cosine_distance",
            left: (1, u.len()),
            right: (1, v.len()),
        });
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Domain("cosine distance of a zero vector".into()));
    }
    Ok(crate::tensor::dot(u, v) / (nu * nv))
}

/// Cosine similarity of the binary mention rows. Companies with no mentions
/// stay isolated.
pub fn build_cooccurrence_graph(m: &CoocMatrix) -> Result<WeightedGraph> {
    let n = m.tickers().len();
    if n < 2 {
        return Err(Error::Data(format!("need at least 2 companies, got {n}")));
    }
    // binary rows: dot product is a shared-article count, norm is sqrt(count)
    let counts: Vec<u64> = (0..n).map(|i| m.row(i).iter().map(|&b| b as u64).sum()).collect();
    let mut adj = Matrix::zeros(n, n);
    for i in 0..n {
        if counts[i] == 0 {
            continue;
        }
        for j in (i + 1)..n {
            if counts[j] == 0 {
                continue;
            }
            let shared: u64 = m.row(i).iter().zip(m.row(j)).map(|(&a, &b)| (a & b) as u64).sum();
            let w = shared as f64 / ((counts[i] as f64).sqrt() * (counts[j] as f64).sqrt());
            adj.set(i, j, w);
            adj.set(j, i, w);
        }
    }
    WeightedGraph::new(m.tickers().to_vec(), adj, GraphStage::RawCosine)
}

/// Number of unordered pairs kept by [`threshold_median`]: `⌈N(N−1)/4⌉`.
pub fn half_pair_count(n: usize) -> usize {
    (n * n.saturating_sub(1)).div_ceil(4)
}

/// Keeps exactly the heaviest half of all unordered pairs (zeros included
/// in the ranking); ties go to the lexicographically smaller pair.
pub fn threshold_median(g: &WeightedGraph) -> Result<WeightedGraph> {
    if g.stage != GraphStage::RawCosine {
        return Err(Error::Domain(format!("threshold_median expects raw cosine weights, got {:?}", g.stage)));
    }
    let n = g.n();
    let mut pairs: Vec<(usize, usize, f64)> = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push((i, j, g.adjacency.get(i, j)));
        }
    }
    // stable sort keeps the lexicographic pair order among equal weights
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2));
    let keep = half_pair_count(n);
    let mut adj = Matrix::zeros(n, n);
    for &(i, j, w) in pairs.iter().take(keep) {
        adj.set(i, j, w);
        adj.set(j, i, w);
    }
    WeightedGraph::new(g.tickers.clone(), adj, GraphStage::Thresholded)
}

/// Mean weight over nonzero unordered edges.
pub fn mean_edge_weight(g: &WeightedGraph) -> Option<f64> {
    let edges = g.edges();
    if edges.is_empty() {
        return None;
    }
    Some(edges.iter().map(|e| e.2).sum::<f64>() / edges.len() as f64)
}

/// Divides every weight by the mean nonzero edge weight so that edges
/// average 1.
pub fn scale_mean(g: &WeightedGraph) -> Result<WeightedGraph> {
    if g.stage != GraphStage::Thresholded {
        return Err(Error::Domain(format!("scale_mean expects a thresholded graph, got {:?}", g.stage)));
    }
    let mean = mean_edge_weight(g).ok_or_else(|| Error::Data("cannot scale an edgeless graph".into()))?;
    WeightedGraph::new(g.tickers.clone(), g.adjacency.scale(1.0 / mean), GraphStage::Scaled)
}

/// `D^{-1/2} (A + I) D^{-1/2}` with `D` the row sums of `A + I`.
pub fn add_self_loops_and_normalize(g: &WeightedGraph) -> Result<WeightedGraph> {
    if g.stage == GraphStage::SelfLoopedNormalized {
        return Err(Error::Domain("graph already has self-loops".into()));
    }
    let n = g.n();
    let mut looped = g.adjacency.clone();
    for i in 0..n {
        looped.set(i, i, looped.get(i, i) + 1.0);
    }
    let deg: Vec<f64> = (0..n).map(|i| looped.row(i).iter().sum()).collect();
    let norm = Matrix::from_fn(n, n, |i, j| looped.get(i, j) / (deg[i] * deg[j]).sqrt());
    WeightedGraph::new(g.tickers.clone(), norm, GraphStage::SelfLoopedNormalized)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tickers(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("T{i:02}")).collect()
    }

    fn graph(rows: &[&[f64]], stage: GraphStage) -> WeightedGraph {
        WeightedGraph::new(tickers(rows.len()), Matrix::from_rows(rows).unwrap(), stage).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine_distance(&[2.0, 2.0], &[1.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine_distance(&[1.0, 1.0, 0.0], &[1.0, 0.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn cooccurrence_graph() {
        let m = CoocMatrix::new(tickers(4), 3, vec![1, 1, 0, 1, 1, 0, 0, 0, 1, 0, 0, 0]).unwrap();
        let g = build_cooccurrence_graph(&m).unwrap();
        assert!((g.adjacency.get(0, 1) - 1.0).abs() < 1e-15);
        assert_eq!(g.adjacency.get(0, 2), 0.0);
        assert_eq!(g.adjacency.row(3), &[0.0; 4]);
        assert_eq!(g.edge_count(), 1);
        let one = CoocMatrix::new(tickers(1), 1, vec![1]).unwrap();
        assert!(build_cooccurrence_graph(&one).is_err());
    }

    #[test]
    fn threshold_keeps_heaviest_half() {
        let g = graph(
            &[
                &[0.0, 1.0, 2.0, 3.0],
                &[1.0, 0.0, 4.0, 5.0],
                &[2.0, 4.0, 0.0, 6.0],
                &[3.0, 5.0, 6.0, 0.0],
            ],
            GraphStage::RawCosine,
        );
        let t = threshold_median(&g).unwrap();
        let kept: Vec<f64> = t.edges().iter().map(|e| e.2).collect();
        assert_eq!(kept, vec![4.0, 5.0, 6.0]);
    }

    #[test]
    fn threshold_ties_prefer_low_pairs() {
        let n = 5;
        let g = WeightedGraph::new(
            tickers(n),
            Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 0.5 }),
            GraphStage::RawCosine,
        )
        .unwrap();
        let t = threshold_median(&g).unwrap();
        let pairs: Vec<(usize, usize)> = t.edges().iter().map(|e| (e.0, e.1)).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (0, 3), (0, 4), (1, 2)]);
        assert_eq!(half_pair_count(72), 1278);
    }

    #[test]
    fn scaling() {
        let g = graph(&[&[0.0, 0.5], &[0.5, 0.0]], GraphStage::Thresholded);
        assert_eq!(scale_mean(&g).unwrap().adjacency.get(0, 1), 1.0);
        let g = graph(&[&[0.0, 1.0, 3.0], &[1.0, 0.0, 0.0], &[3.0, 0.0, 0.0]], GraphStage::Thresholded);
        let s = scale_mean(&g).unwrap();
        assert_eq!((s.adjacency.get(0, 1), s.adjacency.get(0, 2)), (0.5, 1.5));
        let z = graph(&[&[0.0, 0.0], &[0.0, 0.0]], GraphStage::Thresholded);
        assert!(scale_mean(&z).is_err());
    }

    #[test]
    fn normalization_examples() {
        let z = graph(&[&[0.0, 0.0], &[0.0, 0.0]], GraphStage::Scaled);
        assert_eq!(add_self_loops_and_normalize(&z).unwrap().adjacency, Matrix::identity(2));
        let one = graph(&[&[0.0, 1.0], &[1.0, 0.0]], GraphStage::Scaled);
        let n1 = add_self_loops_and_normalize(&one).unwrap();
        assert_eq!(n1.adjacency, Matrix::from_rows(&[[0.5, 0.5], [0.5, 0.5]]).unwrap());
        let three = graph(&[&[0.0, 3.0], &[3.0, 0.0]], GraphStage::Scaled);
        let n3 = add_self_loops_and_normalize(&three).unwrap();
        assert_eq!(n3.adjacency, Matrix::from_rows(&[[0.25, 0.75], [0.75, 0.25]]).unwrap());
    }

    #[test]
    fn edge_list_round_trip() {
        let g = graph(&[&[0.0, 0.25, 0.0], &[0.25, 0.0, 1.5], &[0.0, 1.5, 0.0]], GraphStage::Scaled);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("edges.csv");
        g.write_edge_list(&p).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "ticker_i,ticker_j,weight\nT00,T01,0.25\nT01,T02,1.5\n"
        );
        assert_eq!(WeightedGraph::read_edge_list(&p, &g.tickers, GraphStage::Scaled).unwrap(), g);
    }

    #[test]
    fn rejects_invalid_graphs() {
        let asym = Matrix::from_rows(&[[0.0, 1.0], [0.5, 0.0]]).unwrap();
        assert!(WeightedGraph::new(tickers(2), asym, GraphStage::RawCosine).is_err());
        let diag = Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        assert!(WeightedGraph::new(tickers(2), diag, GraphStage::Scaled).is_err());
    }

    fn random_binary(n: usize, d: usize) -> impl Strategy<Value = CoocMatrix> {
        proptest::collection::vec(0u8..2, n * d)
            .prop_map(move |bits| CoocMatrix::new(tickers(n), d, bits).unwrap())
    }

    proptest! {
        #[test]
        fn pipeline_bookkeeping(m in (2usize..12, 1usize..15).prop_flat_map(|(n, d)| random_binary(n, d))) {
            let raw = build_cooccurrence_graph(&m).unwrap();
            prop_assert!(raw.adjacency.as_slice().iter().all(|&w| (0.0..=1.0 + 1e-12).contains(&w)));
            let t = threshold_median(&raw).unwrap();
            let n = t.n();
            // every surviving pair is nonzero only if its raw weight was; count
            // the kept slots, which include zero-weight pairs when the raw graph is sparse
            let nonzero = t.edge_count();
            prop_assert!(nonzero <= half_pair_count(n));
            prop_assert_eq!(nonzero, raw.edge_count().min(half_pair_count(n)));
            if nonzero > 0 {
                let s = scale_mean(&t).unwrap();
                prop_assert!((mean_edge_weight(&s).unwrap() - 1.0).abs() < 1e-9);
                for i in 0..n { for j in 0..n {
                    prop_assert_eq!(s.adjacency.get(i, j) == 0.0, t.adjacency.get(i, j) == 0.0);
                }}
                let a = add_self_loops_and_normalize(&s).unwrap();
                let deg: Vec<f64> = (0..n).map(|i| s.adjacency.row(i).iter().sum::<f64>() + 1.0).collect();
                for i in 0..n { for j in 0..n {
                    let direct = (s.adjacency.get(i, j) + if i == j { 1.0 } else { 0.0 }) / (deg[i] * deg[j]).sqrt();
                    prop_assert!((a.adjacency.get(i, j) - direct).abs() < 1e-12);
                }}
            }
        }

        #[test]
        fn cosine_scale_invariant(u in proptest::collection::vec(0.1f64..5.0, 4), v in proptest::collection::vec(0.1f64..5.0, 4), alpha in 0.01f64..100.0) {
            let scaled: Vec<f64> = u.iter().map(|x| alpha * x).collect();
            prop_assert!((cosine_distance(&scaled, &v).unwrap() - cosine_distance(&u, &v).unwrap()).abs() < 1e-12);
        }
    }
}
