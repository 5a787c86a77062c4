//! Deterministic fixtures for the benchmarks in `benches/`.

use fingae::gae::EdgeBatch;
use fingae::graph::{add_self_loops_and_normalize, GraphStage, WeightedGraph};
use fingae::tensor::Matrix;

/// Cheap hash to `[-1, 1)`, stable across platforms.
fn noise(i: usize, j: usize, salt: u64) -> f64 {
    let mut h = (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (j as u64).rotate_left(29) ^ salt;
    h ^= h >> 31;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 29;
    (h >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

/// Graph with roughly half of all pairs connected.
pub fn half_dense_graph(n: usize) -> WeightedGraph {
    let adj = Matrix::from_fn(n, n, |i, j| {
        let (a, b) = (i.min(j), i.max(j));
        let u = noise(a, b, 1);
        if a != b && u > 0.0 {
            1.0 + u
        } else {
            0.0
        }
    });
    WeightedGraph::new((0..n).map(|i| format!("B{i:03}")).collect(), adj, GraphStage::Scaled).expect("valid graph")
}

pub fn normalized(n: usize) -> WeightedGraph {
    add_self_loops_and_normalize(&half_dense_graph(n)).expect("normalizable")
}

pub fn features(n: usize, d: usize) -> Matrix {
    Matrix::from_fn(n, d, |i, j| noise(i, j, 2))
}

/// The first `count` pairs `i < j` in row order, labels alternating.
pub fn batch(n: usize, count: usize) -> EdgeBatch {
    let pairs: Vec<_> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).take(count).collect();
    let count = pairs.len();
    EdgeBatch::new(pairs, (0..count).map(|c| c % 2 == 0).collect()).expect("valid batch")
}
