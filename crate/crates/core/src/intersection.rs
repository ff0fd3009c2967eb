//! Tests of a single intersection hypothesis `H_J`.
//!
//! Every method works on the positive-weight members of `J`; zero-weight
//! members have rejection threshold 0 and drop out of unions and of the
//! smallest weighted p-value `q_J`. Members are grouped by correlation block:
//!
//! * Bonferroni: `p̂_J = min(1, q_J)`.
//! * Fully parametric (one block): `p̂_J = min(1, pr(∪ P_j/w_j <= q_J) / Σ w)`,
//!   with critical scaling `c_J` solving `pr(∪ P_j <= c w_j α) = α Σ w`.
//! * Common scaling over blocks: one `c_J` solving
//!   `Σ_h pr(∪_{J_h} P_j <= c w_j α) = α Σ_J w`; yields a decision only.
//! * Per-block scalings: `c_{J_h}` per block and `p̂_J = min_h p̂_{J_h}`.
//! * Proportional (Xie): weights rescaled to sum to one, then fully parametric.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::correlation::CorrelationModel;
use crate::error::{Error, Result};
use crate::mvn::{union_exceedance, CorrelationMatrix, DEFAULT_TARGET_ERROR};
use crate::root::solve_monotone;
use crate::subset::IndexSet;
use crate::weighting::WEIGHT_TOLERANCE;

pub const DEFAULT_ROOT_TOL: f64 = 1e-6;

/// Numerical accuracy settings shared by all parametric computations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Precision {
    /// Absolute error target for each multivariate normal probability.
    pub target_error: f64,
    /// Bracket width at which root-finding for critical scalings stops.
    pub root_tol: f64,
}

impl Default for Precision {
    fn default() -> Self {
        Self { target_error: DEFAULT_TARGET_ERROR, root_tol: DEFAULT_ROOT_TOL }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Bonferroni,
    /// One critical scaling shared by all correlation blocks.
    ParametricCommon,
    /// One critical scaling per correlation block, analytic p-values.
    ParametricSubsets,
    /// Proportional upweighting to exhaustiveness, then fully parametric.
    Xie,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Bonferroni, Method::ParametricCommon, Method::ParametricSubsets, Method::Xie];

    pub fn name(self) -> &'static str {
        match self {
            Method::Bonferroni => "bonferroni",
            Method::ParametricCommon => "parametric-common",
            Method::ParametricSubsets => "parametric-subsets",
            Method::Xie => "xie",
        }
    }

    /// Whether the method produces intersection p-values.
    pub fn has_pvalues(self) -> bool {
        self != Method::ParametricCommon
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::Domain(format!("unknown method \"{s}\"")))
    }
}

/// Critical scaling of one correlation block within `J`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockScaling {
    pub block: usize,
    /// Positive-weight members of `J` in this block.
    pub members: IndexSet,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scaling {
    Common(f64),
    PerBlock(Vec<BlockScaling>),
}

/// Outcome of testing one intersection hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionResult {
    pub set: IndexSet,
    pub method: Method,
    /// Local weights the test used (rescaled for [`Method::Xie`]).
    pub weights: Vec<f64>,
    /// `p̂_J`; `None` for [`Method::ParametricCommon`].
    pub p_value: Option<f64>,
    pub scaling: Option<Scaling>,
    /// Rejection thresholds for `p_j`, aligned with the members of `J`.
    pub local_levels: Option<Vec<f64>>,
    pub rejected: bool,
}

/// Mix a base seed with an intersection and a block so every probability
/// evaluation gets its own reproducible stream.
pub fn derive_seed(seed: u64, set: IndexSet, part: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    splitmix(splitmix(seed ^ u64::from(set.mask())) ^ part.wrapping_mul(0x2545_f491_4f6c_dd1d))
}

/// Positive-weight members of `J` falling in one block.
#[derive(Debug, Clone)]
struct Group {
    block: usize,
    members: IndexSet,
    weights: Vec<f64>,
}

impl Group {
    fn max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

fn check_weights(set: IndexSet, weights: &[f64]) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Domain("intersection index set is empty".into()));
    }
    if weights.len() != set.len() {
        return Err(Error::DimensionMismatch { expected: set.len(), got: weights.len() });
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidScheme(format!("negative or non-finite weight {w} in {set}")));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidScheme(format!("weights of {set} are all zero")));
    }
    if total > 1.0 + WEIGHT_TOLERANCE {
        return Err(Error::InvalidScheme(format!("weights of {set} sum to {total} > 1")));
    }
    Ok(total)
}

fn check_pvalues(set: IndexSet, p: &[f64]) -> Result<()> {
    for j in set {
        match p.get(j) {
            Some(v) if (0.0..=1.0).contains(v) => {}
            Some(v) => return Err(Error::Domain(format!("p-value of H{} is {v}", j + 1))),
            None => return Err(Error::DimensionMismatch { expected: j + 1, got: p.len() }),
        }
    }
    Ok(())
}

fn groups(set: IndexSet, weights: &[f64], corr: &CorrelationModel) -> Result<Vec<Group>> {
    if let Some(j) = set.iter().find(|&j| j >= corr.m()) {
        return Err(Error::DimensionMismatch { expected: corr.m(), got: j + 1 });
    }
    let mut out: Vec<Group> = Vec::new();
    for (j, &w) in set.iter().zip(weights) {
        if w <= 0.0 {
            continue;
        }
        let block = corr.block_of(j);
        match out.iter_mut().find(|g| g.block == block) {
            Some(g) => {
                g.members = g.members.insert(j);
                g.weights.push(w);
            }
            None => out.push(Group { block, members: IndexSet::singleton(j), weights: vec![w] }),
        }
    }
    out.sort_by_key(|g| g.block);
    Ok(out)
}

/// The single group of a fully-known intersection.
fn single_group(set: IndexSet, weights: &[f64], corr: &CorrelationModel) -> Result<Group> {
    let mut gs = groups(set, weights, corr)?;
    if gs.len() != 1 {
        return Err(Error::MethodMismatch(format!(
            "joint distribution over {set} is not fully known ({} blocks involved)",
            gs.len()
        )));
    }
    Ok(gs.remove(0))
}

fn q_value(g: &Group, p: &[f64]) -> f64 {
    g.members.iter().zip(&g.weights).map(|(j, w)| p[j] / w).fold(f64::INFINITY, f64::min)
}

/// `pr(∪ P_j <= min(1, scale * w_j))` within one group.
fn group_union(g: &Group, matrix: &CorrelationMatrix, scale: f64, seed: u64, target_error: f64) -> Result<f64> {
    if g.weights.len() == 1 {
        return Ok((scale * g.weights[0]).min(1.0));
    }
    let u: Vec<f64> = g.weights.iter().map(|w| (scale * w).min(1.0)).collect();
    Ok(union_exceedance(&u, matrix, seed, target_error)?.value)
}

/// `min(1, pr(∪ P_j/w_j <= q) / divisor)` for one group.
fn group_pvalue(
    g: &Group,
    p: &[f64],
    divisor: f64,
    corr: &CorrelationModel,
    seed: u64,
    precision: &Precision,
) -> Result<f64> {
    if g.weights.len() == 1 {
        // pr(P_j / w_j <= p_j / w_j) = p_j
        let j = g.members.iter().next().unwrap_or_default();
        return Ok((p[j] / divisor).min(1.0));
    }
    let q = q_value(g, p);
    let matrix = corr.matrix_for(g.members)?;
    let pr = group_union(g, &matrix, q, seed, precision.target_error)?;
    Ok((pr / divisor).min(1.0))
}

/// Solve `Σ_g pr(∪_{j∈g} P_j <= c w_j α) = α Σ w` for `c >= 1`.
fn common_scaling(
    gs: &[Group],
    alpha: f64,
    set: IndexSet,
    corr: &CorrelationModel,
    seed: u64,
    precision: &Precision,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if gs.iter().all(|g| g.weights.len() == 1) {
        return Ok(1.0);
    }
    let matrices: Vec<Option<CorrelationMatrix>> = gs
        .iter()
        .map(|g| if g.weights.len() > 1 { corr.matrix_for(g.members).map(Some) } else { Ok(None) })
        .collect::<Result<_>>()?;
    let total: f64 = gs.iter().map(Group::total).sum();
    let target = alpha * total;
    let max_w = gs.iter().map(Group::max_weight).fold(0.0, f64::max);
    // each union is at least its largest threshold
    let sum_of_max: f64 = gs.iter().map(Group::max_weight).sum();
    let hi = (total / sum_of_max * (1.0 + 1e-9)).min(1.0 / (max_w * alpha)).max(1.0);

    let mut failure = None;
    let f = |c: f64| -> f64 {
        let mut acc = 0.0;
        for (g, mat) in gs.iter().zip(&matrices) {
            let s = derive_seed(seed, set, g.block as u64);
            let pr = match mat {
                Some(mat) => group_union(g, mat, c * alpha, s, precision.target_error),
                None => Ok((c * alpha * g.weights[0]).min(1.0)),
            };
            match pr {
                Ok(v) => acc += v,
                Err(e) => failure = Some(e),
            }
        }
        acc
    };
    let solved = solve_monotone(f, target, 1.0, hi, precision.root_tol);
    if let Some(e) = failure {
        return Err(e);
    }
    match solved {
        Ok(c) => Ok(c),
        // the upper end satisfies the equation analytically; a miss is noise
        Err(Error::BadBracket { .. }) => Ok(hi),
        Err(e) => Err(e),
    }
}

/// Weighted Bonferroni p-value `min(1, min_j p_j / w_j(J))` over
/// positive-weight members. `weights` is aligned with the members of `set`;
/// `p` is indexed by hypothesis.
pub fn bonferroni_pvalue(set: IndexSet, weights: &[f64], p: &[f64]) -> Result<f64> {
    check_weights(set, weights)?;
    check_pvalues(set, p)?;
    let q = set.iter().zip(weights).filter(|(_, w)| **w > 0.0).map(|(j, w)| p[j] / w).fold(f64::INFINITY, f64::min);
    Ok(q.min(1.0))
}

/// Weighted parametric p-value when the joint distribution over `set` is
/// known.
pub fn parametric_pvalue(
    set: IndexSet,
    weights: &[f64],
    p: &[f64],
    corr: &CorrelationModel,
    seed: u64,
    precision: &Precision,
) -> Result<f64> {
    let total = check_weights(set, weights)?;
    check_pvalues(set, p)?;
    let g = single_group(set, weights, corr)?;
    group_pvalue(&g, p, total, corr, derive_seed(seed, set, g.block as u64), precision)
}

/// Critical scaling `c_J >= 1` of the fully parametric test.
pub fn parametric_c(
    set: IndexSet,
    weights: &[f64],
    alpha: f64,
    corr: &CorrelationModel,
    seed: u64,
    precision: &Precision,
) -> Result<f64> {
    check_weights(set, weights)?;
    let g = single_group(set, weights, corr)?;
    common_scaling(&[g], alpha, set, corr, seed, precision)
}

/// Xie's p-value `pr(∪ P_j/w_j <= q_J)` with `q_J = min p_j / w_j`, from the
/// initial weights `w` (indexed by hypothesis, all positive).
pub fn xie_pvalue(
    set: IndexSet,
    initial_weights: &[f64],
    p: &[f64],
    corr: &CorrelationModel,
    seed: u64,
    precision: &Precision,
) -> Result<f64> {
    if let Some((i, w)) = initial_weights.iter().enumerate().find(|(_, w)| !(**w > 0.0)) {
        return Err(Error::MethodMismatch(format!(
            "proportional method needs positive initial weights; H{} has {w}",
            i + 1
        )));
    }
    let w = proportional_weights(set, initial_weights)?;
    parametric_pvalue(set, &w, p, corr, seed, precision)
}

fn proportional_weights(set: IndexSet, initial: &[f64]) -> Result<Vec<f64>> {
    if let Some(j) = set.iter().find(|&j| j >= initial.len()) {
        return Err(Error::DimensionMismatch { expected: initial.len(), got: j + 1 });
    }
    let total: f64 = set.iter().map(|j| initial[j]).sum();
    Ok(set.iter().map(|j| initial[j] / total).collect())
}

/// Decision of the common-scaling test over a partition.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonTest {
    pub c: f64,
    pub rejected: bool,
    /// `c w_j(J) α` aligned with the members of `J`.
    pub local_levels: Vec<f64>,
}

/// Common critical scaling across blocks; reject iff some
/// `p_j <= c w_j(J) α`. No p-value is defined for this test.
pub fn partitioned_common(
    set: IndexSet,
    weights: &[f64],
    p: &[f64],
    corr: &CorrelationModel,
    alpha: f64,
    seed: u64,
    precision: &Precision,
) -> Result<CommonTest> {
    check_weights(set, weights)?;
    check_pvalues(set, p)?;
    let gs = groups(set, weights, corr)?;
    let c = common_scaling(&gs, alpha, set, corr, seed, precision)?;
    let local_levels: Vec<f64> = weights.iter().map(|w| c * w * alpha).collect();
    let rejected = set.iter().zip(&local_levels).any(|(j, l)| *l > 0.0 && p[j] <= *l);
    Ok(CommonTest { c, rejected, local_levels })
}

/// Per-block p-value `min_h p̂_{J_h}`, each block's part computed as in the
/// fully parametric case but normalized by the block's own weight total.
pub fn partitioned_pvalue_subsets(
    set: IndexSet,
    weights: &[f64],
    p: &[f64],
    corr: &CorrelationModel,
    seed: u64,
    precision: &Precision,
) -> Result<f64> {
    check_weights(set, weights)?;
    check_pvalues(set, p)?;
    let mut best: f64 = 1.0;
    for g in groups(set, weights, corr)? {
        let s = derive_seed(seed, set, g.block as u64);
        best = best.min(group_pvalue(&g, p, g.total(), corr, s, precision)?);
    }
    Ok(best)
}

/// Per-block critical scalings `c_{J_h}` solving
/// `pr(∪_{J_h} P_j <= c w_j α) = α Σ_{J_h} w`.
pub fn partitioned_subset_scalings(
    set: IndexSet,
    weights: &[f64],
    alpha: f64,
    corr: &CorrelationModel,
    seed: u64,
    precision: &Precision,
) -> Result<Vec<BlockScaling>> {
    check_weights(set, weights)?;
    groups(set, weights, corr)?
        .into_iter()
        .map(|g| {
            let c = common_scaling(std::slice::from_ref(&g), alpha, set, corr, seed, precision)?;
            Ok(BlockScaling { block: g.block, members: g.members, c })
        })
        .collect()
}

/// Inputs shared by every intersection of one closed procedure.
#[derive(Debug, Clone, Copy)]
pub struct TestContext<'a> {
    pub p: &'a [f64],
    pub alpha: f64,
    pub corr: &'a CorrelationModel,
    pub seed: u64,
    pub precision: Precision,
}

/// Test `H_J` with `method`. Critical scalings and local levels are only
/// computed when `with_levels` is set, except for the common-scaling method
/// whose decision needs them.
pub fn test_intersection(
    method: Method,
    set: IndexSet,
    weights: &[f64],
    ctx: &TestContext<'_>,
    with_levels: bool,
) -> Result<IntersectionResult> {
    let TestContext { p, alpha, corr, seed, precision } = *ctx;
    let mut result = IntersectionResult {
        set,
        method,
        weights: weights.to_vec(),
        p_value: None,
        scaling: None,
        local_levels: None,
        rejected: false,
    };
    match method {
        Method::Bonferroni => {
            let pv = bonferroni_pvalue(set, weights, p)?;
            result.p_value = Some(pv);
            result.rejected = pv <= alpha;
            if with_levels {
                result.scaling = Some(Scaling::Common(1.0));
                result.local_levels = Some(weights.iter().map(|w| w * alpha).collect());
            }
        }
        Method::ParametricCommon => {
            let t = partitioned_common(set, weights, p, corr, alpha, seed, &precision)?;
            result.rejected = t.rejected;
            result.scaling = Some(Scaling::Common(t.c));
            result.local_levels = Some(t.local_levels);
        }
        Method::ParametricSubsets => {
            let pv = partitioned_pvalue_subsets(set, weights, p, corr, seed, &precision)?;
            result.p_value = Some(pv);
            result.rejected = pv <= alpha;
            if with_levels {
                let scalings = partitioned_subset_scalings(set, weights, alpha, corr, seed, &precision)?;
                result.local_levels = Some(levels_from_blocks(set, weights, &scalings, alpha));
                result.scaling = Some(Scaling::PerBlock(scalings));
            }
        }
        Method::Xie => {
            let total = check_weights(set, weights)?;
            let w: Vec<f64> = weights.iter().map(|x| x / total).collect();
            let pv = parametric_pvalue(set, &w, p, corr, seed, &precision)?;
            result.p_value = Some(pv);
            result.rejected = pv <= alpha;
            if with_levels {
                let c = parametric_c(set, &w, alpha, corr, seed, &precision)?;
                result.scaling = Some(Scaling::Common(c));
                result.local_levels = Some(w.iter().map(|x| c * x * alpha).collect());
            }
            result.weights = w;
        }
    }
    Ok(result)
}

/// Local levels only, as used for fast repeated decisions.
pub fn local_levels(
    method: Method,
    set: IndexSet,
    weights: &[f64],
    alpha: f64,
    corr: &CorrelationModel,
    seed: u64,
    precision: &Precision,
) -> Result<Vec<f64>> {
    let total = check_weights(set, weights)?;
    match method {
        Method::Bonferroni => Ok(weights.iter().map(|w| w * alpha).collect()),
        Method::ParametricCommon => {
            let gs = groups(set, weights, corr)?;
            let c = common_scaling(&gs, alpha, set, corr, seed, precision)?;
            Ok(weights.iter().map(|w| c * w * alpha).collect())
        }
        Method::ParametricSubsets => {
            let scalings = partitioned_subset_scalings(set, weights, alpha, corr, seed, precision)?;
            Ok(levels_from_blocks(set, weights, &scalings, alpha))
        }
        Method::Xie => {
            let w: Vec<f64> = weights.iter().map(|x| x / total).collect();
            let c = parametric_c(set, &w, alpha, corr, seed, precision)?;
            Ok(w.iter().map(|x| c * x * alpha).collect())
        }
    }
}

fn levels_from_blocks(set: IndexSet, weights: &[f64], scalings: &[BlockScaling], alpha: f64) -> Vec<f64> {
    set.iter()
        .zip(weights)
        .map(|(j, w)| {
            let c = scalings.iter().find(|s| s.members.contains(j)).map_or(1.0, |s| s.c);
            c * w * alpha
        })
        .collect()
}
