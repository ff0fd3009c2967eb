#![allow(dead_code)]

use closedmtp::{CorrelationMatrix, CorrelationModel, GraphSpec, IndexSet};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Two primary efficacy hypotheses and one secondary (H1-H3), each with a
/// safety hypothesis (H4-H6) tested after it.
pub fn trial_graph() -> GraphSpec {
    let mut g = vec![vec![0.0; 6]; 6];
    g[0][3] = 1.0;
    g[1][4] = 1.0;
    g[2][5] = 1.0;
    g[3][1] = 0.5;
    g[3][2] = 0.5;
    g[4][0] = 0.5;
    g[4][2] = 0.5;
    g[5][0] = 0.5;
    g[5][1] = 0.5;
    GraphSpec::new(vec![0.4, 0.4, 0.2, 0.0, 0.0, 0.0], g).unwrap()
}

/// Efficacy statistics share a control arm (pairwise 0.5); safety
/// statistics have unknown correlations.
pub fn trial_model() -> CorrelationModel {
    CorrelationModel::new(
        6,
        vec![vec![0, 1, 2], vec![3], vec![4], vec![5]],
        vec![Some(CorrelationMatrix::equicorrelated(3, 0.5).unwrap()), None, None, None],
    )
    .unwrap()
}

pub fn set(one_based: &[usize], m: usize) -> IndexSet {
    let idx: Vec<usize> = one_based.iter().map(|i| i - 1).collect();
    IndexSet::from_indices(&idx, m).unwrap()
}

/// Random correlation matrix from a Gaussian factor model, with a floor on
/// the smallest eigenvalue so the Cholesky factor stays well conditioned.
pub fn random_corr(rng: &mut ChaCha8Rng, d: usize) -> CorrelationMatrix {
    let k = d + 1;
    let a: Vec<f64> = (0..d * k).map(|_| StandardNormal.sample(rng)).collect();
    let mut s = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let dot: f64 = (0..k).map(|t| a[i * k + t] * a[j * k + t]).sum();
            s[i * d + j] = dot + if i == j { 0.2 } else { 0.0 };
        }
    }
    let diag: Vec<f64> = (0..d).map(|i| s[i * d + i].sqrt()).collect();
    let mut r = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            r[i * d + j] = if i == j { 1.0 } else { s[i * d + j] / (diag[i] * diag[j]) };
        }
    }
    CorrelationMatrix::new(d, r).unwrap()
}

/// Positive weights summing to one.
pub fn random_weights(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

/// P-values spread over several orders of magnitude so that decisions near
/// typical levels are common.
pub fn random_pvalues(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| 10f64.powf(rng.random_range(-3.5..0.0))).collect()
}

/// Random transition matrix with zero diagonal and row sums at most one.
pub fn random_transitions(rng: &mut ChaCha8Rng, m: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|i| {
            let raw: Vec<f64> =
                (0..m).map(|j| if i == j || rng.random_bool(0.3) { 0.0 } else { rng.random::<f64>() }).collect();
            let total: f64 = raw.iter().sum();
            let scale = if total > 0.0 { rng.random_range(0.5..=1.0) / total } else { 0.0 };
            raw.iter().map(|x| x * scale).collect()
        })
        .collect()
}
