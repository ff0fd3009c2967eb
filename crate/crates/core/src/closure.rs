//! The closed testing procedure and its shortcuts.

use rayon::prelude::*;

use crate::correlation::CorrelationModel;
use crate::error::{Error, Result};
use crate::intersection::{
    derive_seed, local_levels, parametric_c, test_intersection, xie_pvalue, IntersectionResult, Method, Precision,
    TestContext,
};
use crate::mvn::union_exceedance;
use crate::subset::{check_size, nonempty_subsets, IndexSet};
use crate::weighting::{is_proportional, WeightingScheme, WEIGHT_TOLERANCE};

/// Largest family for which consonance is checked pair by pair.
pub const MAX_CONSONANCE_HYPOTHESES: usize = 12;

/// Everything needed to run a closed procedure.
#[derive(Debug, Clone)]
pub struct TestProblem {
    pub p: Vec<f64>,
    pub alpha: f64,
    pub scheme: WeightingScheme,
    pub corr: CorrelationModel,
    pub method: Method,
    pub seed: u64,
    pub precision: Precision,
}

impl TestProblem {
    pub fn new(
        p: Vec<f64>,
        alpha: f64,
        scheme: WeightingScheme,
        corr: CorrelationModel,
        method: Method,
        seed: u64,
    ) -> Result<Self> {
        let problem = Self { p, alpha, scheme, corr, method, seed, precision: Precision::default() };
        problem.validate()?;
        Ok(problem)
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    pub fn m(&self) -> usize {
        self.p.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.p.len();
        check_size(m)?;
        if self.scheme.m() != m {
            return Err(Error::InvalidProblem(format!(
                "{} p-values but the weighting scheme covers {} hypotheses",
                m,
                self.scheme.m()
            )));
        }
        if self.corr.m() != m {
            return Err(Error::InvalidProblem(format!(
                "{} p-values but the correlation model covers {} hypotheses",
                m,
                self.corr.m()
            )));
        }
        if let Some((i, p)) = self.p.iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidProblem(format!("p-value of H{} is {p}", i + 1)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidProblem(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        check_precision(&self.precision)?;
        if !self.scheme.validate().valid {
            return Err(Error::InvalidScheme("weighting scheme is not valid".into()));
        }
        check_method(self.method, &self.scheme, &self.corr)
    }

    fn context(&self) -> TestContext<'_> {
        TestContext { p: &self.p, alpha: self.alpha, corr: &self.corr, seed: self.seed, precision: self.precision }
    }
}

fn check_precision(precision: &Precision) -> Result<()> {
    if !(precision.target_error > 0.0) || !(precision.root_tol > 0.0) {
        return Err(Error::InvalidProblem(format!(
            "target error and root tolerance must be positive, got {} and {}",
            precision.target_error, precision.root_tol
        )));
    }
    Ok(())
}

fn check_method(method: Method, scheme: &WeightingScheme, corr: &CorrelationModel) -> Result<()> {
    if method == Method::Xie {
        if !corr.is_single_block() {
            return Err(Error::MethodMismatch(
                "the proportional method needs the full joint distribution (one correlation block)".into(),
            ));
        }
        if !is_proportional(scheme) {
            return Err(Error::MethodMismatch(
                "the proportional method needs positive initial weights and w_j(J) proportional to w_j(I)".into(),
            ));
        }
    }
    Ok(())
}

/// Result of the full closed procedure.
#[derive(Debug, Clone)]
pub struct ClosureReport {
    pub method: Method,
    pub alpha: f64,
    /// One entry per nonempty `J`, in canonical (mask) order.
    pub intersections: Vec<IntersectionResult>,
    /// `max_{J ∋ i} p̂_J`; absent for the common-scaling method.
    pub adjusted: Option<Vec<f64>>,
    pub rejected: Vec<bool>,
}

impl ClosureReport {
    pub fn intersection(&self, set: IndexSet) -> &IntersectionResult {
        &self.intersections[set.mask() as usize - 1]
    }
}

/// Test every intersection, with critical scalings and local levels.
pub fn run_closure(problem: &TestProblem) -> Result<ClosureReport> {
    run_closure_with(problem, true)
}

/// As [`run_closure`]; `with_levels = false` skips the root-finding for
/// methods whose decisions come from p-values alone.
pub fn run_closure_with(problem: &TestProblem, with_levels: bool) -> Result<ClosureReport> {
    problem.validate()?;
    let m = problem.m();
    let ctx = problem.context();
    let sets: Vec<IndexSet> = nonempty_subsets(m).collect();
    let intersections: Vec<IntersectionResult> = sets
        .par_iter()
        .map(|&set| test_intersection(problem.method, set, problem.scheme.weights(set), &ctx, with_levels))
        .collect::<Result<_>>()?;

    let mut accepted = IndexSet::EMPTY;
    for r in &intersections {
        if !r.rejected {
            accepted = IndexSet::from_mask(accepted.mask() | r.set.mask());
        }
    }
    let rejected: Vec<bool> = (0..m).map(|i| !accepted.contains(i)).collect();

    let adjusted = problem.method.has_pvalues().then(|| {
        let mut adj = vec![0.0f64; m];
        for r in &intersections {
            let pv = r.p_value.unwrap_or(1.0);
            for i in r.set {
                adj[i] = adj[i].max(pv);
            }
        }
        adj
    });

    Ok(ClosureReport { method: problem.method, alpha: problem.alpha, intersections, adjusted, rejected })
}

/// Local rejection thresholds of every intersection at a fixed `alpha`.
///
/// Once built, closed-procedure decisions for any p-value vector reduce to
/// threshold comparisons, which is what the simulation harness relies on.
#[derive(Debug, Clone)]
pub struct CriticalTable {
    m: usize,
    method: Method,
    alpha: f64,
    levels: Vec<Vec<f64>>,
}

impl CriticalTable {
    pub fn build(
        scheme: &WeightingScheme,
        corr: &CorrelationModel,
        alpha: f64,
        method: Method,
        seed: u64,
        precision: &Precision,
    ) -> Result<Self> {
        let m = scheme.m();
        check_size(m)?;
        if corr.m() != m {
            return Err(Error::InvalidProblem(format!(
                "scheme covers {m} hypotheses but the correlation model {}",
                corr.m()
            )));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidProblem(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        check_precision(precision)?;
        if !scheme.validate().valid {
            return Err(Error::InvalidScheme("weighting scheme is not valid".into()));
        }
        check_method(method, scheme, corr)?;
        let sets: Vec<IndexSet> = nonempty_subsets(m).collect();
        let computed: Vec<Vec<f64>> = sets
            .par_iter()
            .map(|&set| local_levels(method, set, scheme.weights(set), alpha, corr, seed, precision))
            .collect::<Result<_>>()?;
        let mut levels = Vec::with_capacity(computed.len() + 1);
        levels.push(Vec::new());
        levels.extend(computed);
        Ok(Self { m, method, alpha, levels })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Thresholds for the members of `set`, in increasing index order.
    pub fn levels(&self, set: IndexSet) -> &[f64] {
        &self.levels[set.mask() as usize]
    }

    /// `c w_j(J) α`, zero when `j` is not in `J`.
    pub fn level(&self, set: IndexSet, j: usize) -> f64 {
        set.rank_of(j).map_or(0.0, |r| self.levels[set.mask() as usize][r])
    }

    pub fn rejects(&self, set: IndexSet, p: &[f64]) -> bool {
        set.iter().zip(self.levels(set)).any(|(j, &l)| l > 0.0 && p[j] <= l)
    }

    /// Closed-procedure decisions for the p-value vector `p`.
    pub fn decide(&self, p: &[f64]) -> Vec<bool> {
        let accepted = self.accepted_union(p);
        (0..self.m).map(|i| !accepted.contains(i)).collect()
    }

    /// Union of all non-rejected intersections; its complement is the
    /// rejected set.
    pub fn accepted_union(&self, p: &[f64]) -> IndexSet {
        let full = IndexSet::full(self.m);
        let mut accepted = 0u32;
        for set in nonempty_subsets(self.m) {
            // sets inside the accepted union cannot change the outcome
            if set.mask() & !accepted == 0 {
                continue;
            }
            if !self.rejects(set, p) {
                accepted |= set.mask();
                if accepted == full.mask() {
                    break;
                }
            }
        }
        IndexSet::from_mask(accepted)
    }
}

/// A pair `J' ⊂ J` and member `j ∈ J'` with `c_J w_j(J) > c_{J'} w_j(J')`.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub superset: IndexSet,
    pub subset: IndexSet,
    pub index: usize,
    pub superset_level: f64,
    pub subset_level: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsonanceReport {
    pub consonant: bool,
    pub violations: Vec<Violation>,
    /// Slack allowed for numerical error when comparing levels.
    pub tolerance: f64,
}

/// Check `c_J w_j(J) <= c_{J'} w_j(J')` for all `j ∈ J' ⊂ J` under `method`.
pub fn check_consonance(
    scheme: &WeightingScheme,
    corr: &CorrelationModel,
    alpha: f64,
    method: Method,
    seed: u64,
    precision: &Precision,
) -> Result<ConsonanceReport> {
    let m = scheme.m();
    if m > MAX_CONSONANCE_HYPOTHESES {
        return Err(Error::TooManyHypotheses { m, max: MAX_CONSONANCE_HYPOTHESES });
    }
    let table = CriticalTable::build(scheme, corr, alpha, method, seed, precision)?;
    let tolerance = 3.0 * (alpha * precision.root_tol + precision.target_error) + WEIGHT_TOLERANCE;
    let mut violations = Vec::new();
    for set in nonempty_subsets(m) {
        for sub in set.proper_subsets() {
            for j in sub {
                let big = table.level(set, j);
                let small = table.level(sub, j);
                if big > small + tolerance {
                    violations.push(Violation {
                        superset: set,
                        subset: sub,
                        index: j,
                        superset_level: big,
                        subset_level: small,
                    });
                }
            }
        }
    }
    Ok(ConsonanceReport { consonant: violations.is_empty(), violations, tolerance })
}

/// Output of the weighted step-down shortcut.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDownResult {
    pub adjusted: Vec<f64>,
    pub rejected: Vec<bool>,
    /// Hypotheses in the order they are stepped through.
    pub order: Vec<usize>,
}

fn check_positive_weights(w: &[f64], m: usize) -> Result<()> {
    if w.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: w.len() });
    }
    if let Some((i, x)) = w.iter().enumerate().find(|(_, x)| !(**x > 0.0) || !x.is_finite()) {
        return Err(Error::MethodMismatch(format!("weights must be positive; H{} has {x}", i + 1)));
    }
    Ok(())
}

fn check_full(corr: &CorrelationModel, p: &[f64], alpha: f64) -> Result<()> {
    check_size(p.len())?;
    if corr.m() != p.len() {
        return Err(Error::DimensionMismatch { expected: p.len(), got: corr.m() });
    }
    if !corr.is_single_block() {
        return Err(Error::MethodMismatch("shortcut needs the full joint distribution".into()));
    }
    if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("p-value of H{} is {v}", i + 1)));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Weighted step-down Dunnett: at each step test `H_J` with Xie's p-value,
/// then drop the hypothesis with the smallest `p_j / w_j` (ties to the lower
/// index). All `m` steps run so every adjusted p-value is reported; the
/// rejections stop at the first step whose running maximum exceeds `alpha`.
pub fn xie_shortcut(
    initial_weights: &[f64],
    p: &[f64],
    corr: &CorrelationModel,
    alpha: f64,
    seed: u64,
    precision: &Precision,
) -> Result<StepDownResult> {
    let m = p.len();
    check_full(corr, p, alpha)?;
    check_positive_weights(initial_weights, m)?;

    let mut set = IndexSet::full(m);
    let mut adjusted = vec![0.0; m];
    let mut order = Vec::with_capacity(m);
    let mut running = 0.0f64;
    while !set.is_empty() {
        let pv = xie_pvalue(set, initial_weights, p, corr, seed, precision)?;
        running = running.max(pv);
        let next = set
            .iter()
            .min_by(|&a, &b| (p[a] / initial_weights[a]).total_cmp(&(p[b] / initial_weights[b])))
            .unwrap_or(0);
        adjusted[next] = running;
        order.push(next);
        set = set.remove(next);
    }
    let rejected = adjusted.iter().map(|&a| a <= alpha).collect();
    Ok(StepDownResult { adjusted, rejected, order })
}

/// Output of the weighted single-step Dunnett test.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleStepResult {
    pub adjusted: Vec<f64>,
    pub rejected: Vec<bool>,
    /// Critical scaling: reject `H_i` iff `p_i <= c w_i α`.
    pub c: f64,
}

/// Weighted single-step Dunnett test with weights summing to one.
pub fn weighted_dunnett_single_step(
    weights: &[f64],
    p: &[f64],
    corr: &CorrelationModel,
    alpha: f64,
    seed: u64,
    precision: &Precision,
) -> Result<SingleStepResult> {
    let m = p.len();
    check_full(corr, p, alpha)?;
    check_positive_weights(weights, m)?;
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(Error::InvalidScheme(format!("single-step weights must sum to 1, got {total}")));
    }
    let full = IndexSet::full(m);
    let c = parametric_c(full, weights, alpha, corr, seed, precision)?;
    let matrix = corr.block_matrix(0);
    let adjusted: Vec<f64> = (0..m)
        .map(|i| {
            let q = p[i] / weights[i];
            let u: Vec<f64> = weights.iter().map(|w| (w * q).min(1.0)).collect();
            let s = derive_seed(seed, full, i as u64);
            union_exceedance(&u, matrix, s, precision.target_error).map(|e| e.value.min(1.0))
        })
        .collect::<Result<_>>()?;
    let rejected = adjusted.iter().map(|&a| a <= alpha).collect();
    Ok(SingleStepResult { adjusted, rejected, c })
}
