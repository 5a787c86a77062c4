//! Clustering of embeddings and graphs, and agreement scores against
//! ground-truth sectors.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{GraphStage, WeightedGraph};
use crate::ingest::{write_file, GroundTruthLabels};
use crate::linalg::symmetric_eigen;
use crate::seed;
use crate::tensor::Matrix;

pub const KMEANS_RESTARTS: usize = 20;
pub const KMEANS_MAX_ITER: usize = 300;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Clustering {
    pub tickers: Vec<String>,
    pub assignment: Vec<usize>,
    pub k: usize,
    /// Clusters left empty when Lloyd's iterations ran out.
    pub empty_clusters: usize,
}

impl Clustering {
    pub fn new(tickers: Vec<String>, assignment: Vec<usize>, k: usize) -> Result<Self> {
        if tickers.len() != assignment.len() {
            return Err(Error::Data(format!(
                "{} tickers but {} assignments",
                tickers.len(),
                assignment.len()
            )));
        }
        if let Some(&bad) = assignment.iter().find(|&&c| c >= k) {
            return Err(Error::Data(format!("cluster id {bad} outside [0, {k})")));
        }
        let mut seen = vec![false; k];
        assignment.iter().for_each(|&c| seen[c] = true);
        Ok(Clustering {
            tickers,
            assignment,
            k,
            empty_clusters: seen.iter().filter(|s| !**s).count(),
        })
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        self.assignment.iter().for_each(|&c| s[c] += 1);
        s
    }

    /// CSV `ticker,cluster_id,sector`.
    pub fn write_csv(&self, path: &Path, truth: &GroundTruthLabels) -> Result<()> {
        let sectors = aligned_sectors(self, truth)?;
        let mut out = String::from("ticker,cluster_id,sector\n");
        for ((t, c), s) in self.tickers.iter().zip(&self.assignment).zip(sectors) {
            out.push_str(&format!("{t},{c},{s}\n"));
        }
        write_file(path, out.as_bytes())
    }
}

/// One Lloyd run from a single k-means++ seeding.
#[derive(Clone, Debug, PartialEq)]
pub struct LloydRun {
    pub assignment: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
    /// Inertia after every assignment step.
    pub trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_points(points: &Matrix, k: usize) -> Result<()> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::Domain(format!("k-means needs 1 <= k <= N, got k={k}, N={n}")));
    }
    if !points.is_finite() {
        return Err(Error::Numeric("k-means input has non-finite entries".into()));
    }
    Ok(())
}

fn kmeans_pp<R: Rng>(points: &Matrix, k: usize, rng: &mut R) -> Matrix {
    let n = points.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > r {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `r` past the final sum
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("positive total"))
        } else {
            // all remaining points coincide with a center
            rng.random_range(0..n)
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(next)));
        }
    }
    points.select_rows(&chosen)
}

fn assign(points: &Matrix, centroids: &Matrix) -> (Vec<usize>, Vec<f64>) {
    (0..points.rows())
        .map(|i| {
            let p = points.row(i);
            let mut best = (0, f64::INFINITY);
            for c in 0..centroids.rows() {
                let d = sq_dist(p, centroids.row(c));
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .unzip()
}

/// Lloyd iterations from a k-means++ seeding drawn from `rng`.
pub fn lloyd<R: Rng>(points: &Matrix, k: usize, max_iter: usize, rng: &mut R) -> Result<LloydRun> {
    check_points(points, k)?;
    let (n, d) = points.shape();
    let mut centroids = kmeans_pp(points, k, rng);
    let mut assignment: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    for _ in 0..max_iter.max(1) {
        let (next, dists) = assign(points, &centroids);
        trace.push(dists.iter().sum());
        if next == assignment {
            break;
        }
        assignment = next;

        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            for (s, &x) in sums.row_mut(c).iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, &s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            } else {
                // farthest point from its own centroid, not already used
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .fold(None::<(usize, f64)>, |best, i| match best {
                        Some((_, bd)) if bd >= dists[i] => best,
                        _ => Some((i, dists[i])),
                    })
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                taken[far] = true;
                centroids.row_mut(c).copy_from_slice(points.row(far));
            }
        }
    }
    let inertia = *trace.last().expect("at least one iteration");
    Ok(LloydRun {
        assignment,
        centroids,
        inertia,
        trace,
    })
}

/// Every restart of a k-means fit; restart `r` draws from
/// `seed::rng(seed, [r])`.
pub fn kmeans_runs(points: &Matrix, k: usize, seed: u64, restarts: usize) -> Result<Vec<LloydRun>> {
    check_points(points, k)?;
    if restarts == 0 {
        return Err(Error::Config("k-means needs at least one restart".into()));
    }
    (0..restarts)
        .into_par_iter()
        .map(|r| lloyd(points, k, KMEANS_MAX_ITER, &mut seed::rng(seed, &[r as u64])))
        .collect()
}

/// Ids renumbered in order of first appearance, so equal partitions print
/// identically.
fn canonical_ids(assignment: &[usize], k: usize) -> Vec<usize> {
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    for &c in assignment {
        if map[c] == usize::MAX {
            map[c] = next;
            next += 1;
        }
    }
    for m in map.iter_mut().filter(|m| **m == usize::MAX) {
        *m = next;
        next += 1;
    }
    assignment.iter().map(|&c| map[c]).collect()
}

/// Best-inertia k-means over seeded restarts; ties go to the lower restart.
pub fn kmeans(tickers: &[String], points: &Matrix, k: usize, seed: u64, restarts: usize) -> Result<Clustering> {
    if tickers.len() != points.rows() {
        return Err(Error::Data(format!("{} tickers for {} points", tickers.len(), points.rows())));
    }
    let runs = kmeans_runs(points, k, seed, restarts)?;
    let best = runs
        .iter()
        .enumerate()
        .fold(0, |b, (i, r)| if r.inertia < runs[b].inertia { i } else { b });
    Clustering::new(tickers.to_vec(), canonical_ids(&runs[best].assignment, k), k)
}

/// Rows of the bottom-`k` eigenvectors of the symmetric-normalized
/// Laplacian, each scaled to unit length.
pub fn spectral_embedding(g: &WeightedGraph, k: usize) -> Result<Matrix> {
    if g.stage == GraphStage::SelfLoopedNormalized {
        return Err(Error::Domain("spectral clustering expects a graph without self-loops".into()));
    }
    let n = g.n();
    if k == 0 || k > n {
        return Err(Error::Domain(format!("spectral clustering needs 1 <= k <= N, got k={k}, N={n}")));
    }
    let deg: Vec<f64> = (0..n).map(|i| g.adjacency.row(i).iter().sum()).collect();
    let lap = Matrix::from_fn(n, n, |i, j| {
        let w = if deg[i] > 0.0 && deg[j] > 0.0 {
            g.adjacency.get(i, j) / (deg[i] * deg[j]).sqrt()
        } else {
            0.0
        };
        if i == j {
            1.0 - w
        } else {
            -w
        }
    });
    let eig = symmetric_eigen(&lap)?;
    let mut emb = Matrix::from_fn(n, k, |i, c| eig.vectors.get(i, c));
    for i in 0..n {
        let row = emb.row_mut(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    Ok(emb)
}

pub fn spectral_cluster(g: &WeightedGraph, k: usize, seed: u64) -> Result<Clustering> {
    let emb = spectral_embedding(g, k)?;
    kmeans(&g.tickers, &emb, k, seed, KMEANS_RESTARTS)
}

fn aligned_sectors<'a>(pred: &Clustering, truth: &'a GroundTruthLabels) -> Result<Vec<&'a str>> {
    if pred.tickers != truth.tickers() {
        return Err(Error::Data("clustering and labels cover different tickers".into()));
    }
    Ok(truth.sectors().iter().map(String::as_str).collect())
}

fn contingency(a: &[usize], b: &[usize]) -> Result<BTreeMap<(usize, usize), usize>> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Data(format!("cannot compare partitions of {} and {} items", a.len(), b.len())));
    }
    let mut table = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_insert(0) += 1;
    }
    Ok(table)
}

/// Fraction of items whose cluster's majority class is their own class.
pub fn purity_score(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let mut best: BTreeMap<usize, usize> = BTreeMap::new();
    for (&(c, _), &count) in &table {
        let b = best.entry(c).or_insert(0);
        *b = (*b).max(count);
    }
    Ok(best.values().sum::<usize>() as f64 / pred.len() as f64)
}

fn entropy<I: IntoIterator<Item = usize>>(counts: I, n: f64) -> f64 {
    counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information over the geometric mean of the two entropies; 0 when
/// either partition has a single block.
pub fn nmi_score(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let n = pred.len() as f64;
    let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cols: BTreeMap<usize, usize> = BTreeMap::new();
    for (&(a, b), &c) in &table {
        *rows.entry(a).or_insert(0) += c;
        *cols.entry(b).or_insert(0) += c;
    }
    let (ha, hb) = (entropy(rows.values().copied(), n), entropy(cols.values().copied(), n));
    if ha <= 0.0 || hb <= 0.0 {
        return Ok(0.0);
    }
    let mi: f64 = table
        .iter()
        .map(|(&(a, b), &c)| {
            let pab = c as f64 / n;
            pab * (pab * n * n / (rows[&a] as f64 * cols[&b] as f64)).ln()
        })
        .sum();
    Ok((mi / (ha * hb).sqrt()).clamp(0.0, 1.0))
}

pub fn purity(pred: &Clustering, truth: &GroundTruthLabels) -> Result<f64> {
    aligned_sectors(pred, truth)?;
    purity_score(&pred.assignment, &truth.class_ids().0)
}

pub fn nmi(pred: &Clustering, truth: &GroundTruthLabels) -> Result<f64> {
    aligned_sectors(pred, truth)?;
    nmi_score(&pred.assignment, &truth.class_ids().0)
}

/// Projection onto the two leading principal directions. Each direction is
/// signed so its largest-magnitude loading is positive.
pub fn pca2d(points: &Matrix) -> Result<Matrix> {
    let (n, d) = points.shape();
    if n < 2 || d == 0 {
        return Err(Error::Domain(format!("pca2d needs at least 2 points and 1 column, got {n}x{d}")));
    }
    let means: Vec<f64> = (0..d).map(|j| points.column(j).iter().sum::<f64>() / n as f64).collect();
    let centered = Matrix::from_fn(n, d, |i, j| points.get(i, j) - means[j]);
    let cov = centered.t_matmul(&centered)?.scale(1.0 / n as f64);
    // enforce exact symmetry for the eigen-solver
    let cov = Matrix::from_fn(d, d, |i, j| 0.5 * (cov.get(i, j) + cov.get(j, i)));
    let eig = symmetric_eigen(&cov)?;
    let mut coords = Matrix::zeros(n, 2);
    for comp in 0..d.min(2) {
        let col = d - 1 - comp;
        let mut v = eig.vectors.column(col);
        let lead = v.iter().enumerate().fold(0, |b, (i, x)| if x.abs() > v[b].abs() { i } else { b });
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        for i in 0..n {
            coords.set(i, comp, centered.row(i).iter().zip(&v).map(|(a, b)| a * b).sum());
        }
    }
    Ok(coords)
}

/// CSV `ticker,x,y,cluster_id`.
pub fn write_coords_csv(path: &Path, clustering: &Clustering, coords: &Matrix) -> Result<()> {
    if coords.shape() != (clustering.tickers.len(), 2) {
        return Err(Error::Shape {
            op: "write_coords_csv",
            left: (clustering.tickers.len(), 2),
            right: coords.shape(),
        });
    }
    let mut out = String::from("ticker,x,y,cluster_id\n");
    for (i, (t, c)) in clustering.tickers.iter().zip(&clustering.assignment).enumerate() {
        out.push_str(&format!("{t},{},{},{c}\n", coords.get(i, 0), coords.get(i, 1)));
    }
    write_file(path, out.as_bytes())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SectorBreakdown {
    pub cluster: usize,
    pub size: usize,
    pub sectors: BTreeMap<String, usize>,
}

/// Per-cluster counts of each ground-truth sector.
pub fn sector_decomposition(pred: &Clustering, truth: &GroundTruthLabels) -> Result<Vec<SectorBreakdown>> {
    let sectors = aligned_sectors(pred, truth)?;
    let mut out: Vec<SectorBreakdown> = (0..pred.k)
        .map(|cluster| SectorBreakdown {
            cluster,
            size: 0,
            sectors: BTreeMap::new(),
        })
        .collect();
    for (&c, s) in pred.assignment.iter().zip(sectors) {
        out[c].size += 1;
        *out[c].sectors.entry(s.to_string()).or_insert(0) += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, Strategy};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("C{i:02}")).collect()
    }

    /// Cross-tab oracle: for every cluster, the largest class count.
    fn purity_oracle(pred: &[usize], truth: &[usize]) -> f64 {
        let mut total = 0;
        for c in 0..=*pred.iter().max().unwrap() {
            let best = (0..=*truth.iter().max().unwrap())
                .map(|t| pred.iter().zip(truth).filter(|&(&p, &q)| p == c && q == t).count())
                .max()
                .unwrap();
            total += best;
        }
        total as f64 / pred.len() as f64
    }

    /// NMI via `H(U) + H(V) - H(U, V)`.
    fn nmi_oracle(pred: &[usize], truth: &[usize]) -> f64 {
        let n = pred.len() as f64;
        let h = |keys: Vec<(usize, usize)>| {
            let mut m: BTreeMap<(usize, usize), f64> = BTreeMap::new();
            keys.into_iter().for_each(|k| *m.entry(k).or_insert(0.0) += 1.0);
            -m.values().map(|c| c / n * (c / n).ln()).sum::<f64>()
        };
        let hu = h(pred.iter().map(|&p| (p, 0)).collect());
        let hv = h(truth.iter().map(|&t| (0, t)).collect());
        let huv = h(pred.iter().copied().zip(truth.iter().copied()).collect());
        if hu == 0.0 || hv == 0.0 {
            return 0.0;
        }
        (hu + hv - huv) / (hu * hv).sqrt()
    }

    fn blobs(seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let pts = Matrix::from_fn(40, 3, |i, _| 100.0 * truth[i] as f64 + rng.random_range(-1.0..1.0));
        (pts, truth)
    }

    #[test]
    fn kmeans_trivial_cases() {
        let (pts, _) = blobs(1);
        let all = kmeans(&names(40), &pts, 40, 3, 4).unwrap();
        let mut ids = all.assignment.clone();
        ids.sort();
        assert_eq!(ids, (0..40).collect::<Vec<_>>());
        let runs = kmeans_runs(&pts, 40, 3, 4).unwrap();
        assert!(runs.iter().all(|r| r.inertia == 0.0));

        let one = kmeans_runs(&pts, 1, 0, 2).unwrap();
        for j in 0..3 {
            let mean = pts.column(j).iter().sum::<f64>() / 40.0;
            assert!((one[0].centroids.get(0, j) - mean).abs() < 1e-9);
        }
        assert!(kmeans(&names(40), &pts, 41, 0, 1).is_err());
        assert!(kmeans(&names(40), &pts, 0, 0, 1).is_err());
    }

    #[test]
    fn kmeans_recovers_blobs() {
        for seed in 0..5 {
            let (pts, truth) = blobs(seed);
            let c = kmeans(&names(40), &pts, 2, seed, KMEANS_RESTARTS).unwrap();
            assert_eq!(purity_score(&c.assignment, &truth).unwrap(), 1.0);
            assert_eq!(c.empty_clusters, 0);
        }
    }

    #[test]
    fn kmeans_deterministic_and_canonical() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts = Matrix::from_fn(30, 4, |_, _| rng.random_range(-1.0..1.0));
        let a = kmeans(&names(30), &pts, 5, 11, 8).unwrap();
        assert_eq!(a, kmeans(&names(30), &pts, 5, 11, 8).unwrap());
        assert_eq!(a.assignment[0], 0);
    }

    #[test]
    fn duplicate_points_reseed() {
        let pts = Matrix::from_rows(&[[0.0], [0.0], [0.0], [5.0]]).unwrap();
        let c = kmeans(&names(4), &pts, 3, 0, 5).unwrap();
        assert_eq!(c.k, 3);
        assert!(c.assignment[3] != c.assignment[0]);
    }

    fn two_cliques(w: f64) -> WeightedGraph {
        let n = 8;
        let adj = Matrix::from_fn(n, n, |i, j| if i != j && (i < 4) == (j < 4) { w * (1.0 + ((i + j) % 3) as f64) } else { 0.0 });
        WeightedGraph::new(names(n), adj, GraphStage::Scaled).unwrap()
    }

    #[test]
    fn spectral_separates_components() {
        for seed in 0..10 {
            let c = spectral_cluster(&two_cliques(0.7), 2, seed).unwrap();
            assert_eq!(c.assignment, vec![0, 0, 0, 0, 1, 1, 1, 1]);
        }
        assert_eq!(spectral_cluster(&two_cliques(1.0), 1, 0).unwrap().assignment, vec![0; 8]);
    }

    #[test]
    fn spectral_isolated_vertex() {
        let mut adj = two_cliques(1.0).adjacency;
        for j in 0..8 {
            adj.set(7, j, 0.0);
            adj.set(j, 7, 0.0);
        }
        let g = WeightedGraph::new(names(8), adj, GraphStage::Scaled).unwrap();
        let c = spectral_cluster(&g, 3, 0).unwrap();
        assert_eq!(c.assignment, vec![0, 0, 0, 0, 1, 1, 1, 2]);
    }

    #[test]
    fn metric_examples() {
        let truth = [0, 0, 1, 1, 2, 2];
        assert_eq!(purity_score(&[2, 2, 0, 0, 1, 1], &truth).unwrap(), 1.0);
        assert!((nmi_score(&[2, 2, 0, 0, 1, 1], &truth).unwrap() - 1.0).abs() < 1e-12);
        assert!((purity_score(&[0; 6], &truth).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(nmi_score(&[0; 6], &truth).unwrap(), 0.0);
        assert!(purity_score(&[0], &truth).is_err());
    }

    #[test]
    fn labels_must_match_tickers() {
        let c = Clustering::new(names(2), vec![0, 1], 2).unwrap();
        let other = GroundTruthLabels::new(vec!["X".into(), "Y".into()], vec!["a".into(), "b".into()]).unwrap();
        assert!(purity(&c, &other).is_err());
        assert!(nmi(&c, &other).is_err());
        let ok = GroundTruthLabels::new(names(2), vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(purity(&c, &ok).unwrap(), 1.0);
        let dec = sector_decomposition(&c, &ok).unwrap();
        assert_eq!(dec[1].sectors["b"], 1);
    }

    #[test]
    fn pca_examples() {
        let pts = Matrix::from_rows(&[[1.0, 2.0], [-1.0, 0.5], [0.0, -2.5], [3.0, 1.0], [-3.0, -1.0]]).unwrap();
        let c = pca2d(&pts).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let d0 = sq_dist(pts.row(i), pts.row(j)).sqrt();
                let d1 = sq_dist(c.row(i), c.row(j)).sqrt();
                assert!((d0 - d1).abs() < 1e-9);
            }
        }
        let var = |v: Vec<f64>| v.iter().map(|x| x * x).sum::<f64>();
        assert!(var(c.column(0)) >= var(c.column(1)));

        let line = Matrix::from_fn(6, 3, |i, j| i as f64 * (j + 1) as f64);
        let c = pca2d(&line).unwrap();
        assert!(c.column(1).iter().all(|v| v.abs() < 1e-9));
        assert!(pca2d(&Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn exports() {
        let dir = tempfile::tempdir().unwrap();
        let c = Clustering::new(names(2), vec![1, 0], 2).unwrap();
        let labels = GroundTruthLabels::new(names(2), vec!["Tech".into(), "Energy".into()]).unwrap();
        c.write_csv(&dir.path().join("c.csv"), &labels).unwrap();
        assert_eq!(
            std::fs::read_to_string(dir.path().join("c.csv")).unwrap(),
            "ticker,cluster_id,sector\nC00,1,Tech\nC01,0,Energy\n"
        );
        let coords = Matrix::from_rows(&[[0.5, -1.0], [2.0, 0.0]]).unwrap();
        write_coords_csv(&dir.path().join("xy.csv"), &c, &coords).unwrap();
        assert_eq!(
            std::fs::read_to_string(dir.path().join("xy.csv")).unwrap(),
            "ticker,x,y,cluster_id\nC00,0.5,-1,1\nC01,2,0,0\n"
        );
    }

    fn partition(max_len: usize, max_k: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
        (1..=max_len).prop_flat_map(move |n| {
            (
                proptest::collection::vec(0..max_k, n),
                proptest::collection::vec(0..max_k, n),
            )
        })
    }

    proptest! {
        #[test]
        fn metrics_match_oracles((p, t) in partition(12, 5)) {
            prop_assert_eq!(purity_score(&p, &t).unwrap(), purity_oracle(&p, &t));
            prop_assert!((nmi_score(&p, &t).unwrap() - nmi_oracle(&p, &t)).abs() < 1e-12);
            prop_assert!((nmi_score(&p, &t).unwrap() - nmi_score(&t, &p).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn metrics_relabel_invariant((p, t) in partition(12, 5), seed in any::<u64>()) {
            let mut perm: Vec<usize> = (0..5).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let q: Vec<usize> = p.iter().map(|&c| perm[c]).collect();
            prop_assert_eq!(purity_score(&q, &t).unwrap(), purity_score(&p, &t).unwrap());
            prop_assert!((nmi_score(&q, &t).unwrap() - nmi_score(&p, &t).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn inertia_never_increases(seed in any::<u64>(), k in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = Matrix::from_fn(25, 3, |_, _| rng.random_range(-2.0..2.0));
            for run in kmeans_runs(&pts, k, seed, 4).unwrap() {
                for w in run.trace.windows(2) {
                    prop_assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0]));
                }
            }
        }
    }
}
