//! Weighting schemes `W = {w_J : J ⊆ I}` and their construction from
//! weight-propagation graphs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subset::{check_size, nonempty_subsets, IndexSet};

/// Absolute tolerance for weight equalities and sum constraints.
pub const WEIGHT_TOLERANCE: f64 = 1e-12;

/// Initial hypothesis weights plus a transition matrix that says how the
/// weight of a rejected hypothesis is passed on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct GraphSpec {
    weights: Vec<f64>,
    transitions: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGraph {
    m: usize,
    weights: Vec<f64>,
    transitions: Vec<Vec<f64>>,
}

impl TryFrom<RawGraph> for GraphSpec {
    type Error = Error;

    fn try_from(raw: RawGraph) -> Result<Self> {
        if raw.weights.len() != raw.m {
            return Err(Error::InvalidGraph(format!(
                "\"weights\" has {} entries but m = {}",
                raw.weights.len(),
                raw.m
            )));
        }
        GraphSpec::new(raw.weights, raw.transitions)
    }
}

impl From<GraphSpec> for RawGraph {
    fn from(g: GraphSpec) -> Self {
        RawGraph { m: g.weights.len(), weights: g.weights, transitions: g.transitions }
    }
}

impl GraphSpec {
    pub fn new(weights: Vec<f64>, transitions: Vec<Vec<f64>>) -> Result<Self> {
        let m = weights.len();
        check_size(m)?;
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidGraph(format!("weight of H{} is {w}", i + 1)));
        }
        let total: f64 = weights.iter().sum();
        if total > 1.0 + WEIGHT_TOLERANCE {
            return Err(Error::InvalidGraph(format!("initial weights sum to {total} > 1")));
        }
        if transitions.len() != m {
            return Err(Error::InvalidGraph(format!("transition matrix has {} rows, expected {m}", transitions.len())));
        }
        for (i, row) in transitions.iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidGraph(format!(
                    "transition row {} has {} entries, expected {m}",
                    i + 1,
                    row.len()
                )));
            }
            if let Some((j, g)) = row.iter().enumerate().find(|(_, g)| !(**g >= 0.0) || !g.is_finite()) {
                return Err(Error::InvalidGraph(format!("transition ({}, {}) is {g}", i + 1, j + 1)));
            }
            if row[i] != 0.0 {
                return Err(Error::InvalidGraph(format!("nonzero diagonal at H{}", i + 1)));
            }
            let s: f64 = row.iter().sum();
            if s > 1.0 + WEIGHT_TOLERANCE {
                return Err(Error::InvalidGraph(format!("row {} sums to {s} > 1", i + 1)));
            }
        }
        Ok(Self { weights, transitions })
    }

    /// Graph with no edges: rejecting a hypothesis frees nothing.
    pub fn without_edges(weights: Vec<f64>) -> Result<Self> {
        let m = weights.len();
        Self::new(weights, vec![vec![0.0; m]; m])
    }

    pub fn m(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn transitions(&self) -> &[Vec<f64>] {
        &self.transitions
    }

    pub fn state(&self) -> GraphState {
        let m = self.m();
        let mut g = vec![0.0; m * m];
        for (i, row) in self.transitions.iter().enumerate() {
            g[i * m..(i + 1) * m].copy_from_slice(row);
        }
        GraphState { m, active: IndexSet::full(m), weights: self.weights.clone(), transitions: g }
    }
}

/// A graph after some hypotheses have been removed.
#[derive(Debug, Clone)]
pub struct GraphState {
    m: usize,
    active: IndexSet,
    weights: Vec<f64>,
    transitions: Vec<f64>,
}

impl GraphState {
    pub fn active(&self) -> IndexSet {
        self.active
    }

    /// Current weights of all `m` hypotheses (zero for removed ones).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Remove hypothesis `j`, passing its weight along outgoing edges and
    /// rewiring paths that went through it.
    pub fn remove(&mut self, j: usize) {
        debug_assert!(self.active.contains(j));
        let m = self.m;
        let g = &mut self.transitions;
        let rest = self.active.remove(j);
        let wj = self.weights[j];
        for l in rest {
            self.weights[l] += wj * g[j * m + l];
        }
        let mut next = vec![0.0; m * m];
        for l in rest {
            let glj = g[l * m + j];
            let denom = 1.0 - glj * g[j * m + l];
            for k in rest {
                if k == l {
                    continue;
                }
                next[l * m + k] = if denom > 0.0 { (g[l * m + k] + glj * g[j * m + k]) / denom } else { 0.0 };
            }
        }
        *g = next;
        self.weights[j] = 0.0;
        self.active = rest;
    }
}

/// Local weights `w_j(J)` for every nonempty `J`.
///
/// Each entry holds the weights of the members of `J` in increasing index
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightingScheme {
    m: usize,
    // indexed by mask; slot 0 unused
    table: Vec<Vec<f64>>,
}

/// Validity, exhaustiveness and monotonicity flags of a scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeProperties {
    pub valid: bool,
    pub exhaustive: bool,
    pub monotone: bool,
}

/// External form of one scheme entry (1-based indices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeEntry {
    pub set: Vec<usize>,
    pub weights: Vec<f64>,
}

impl WeightingScheme {
    /// Build by evaluating `f` on every nonempty subset; `f` returns the
    /// member weights in increasing index order.
    pub fn from_fn<F>(m: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(IndexSet) -> Vec<f64>,
    {
        check_size(m)?;
        let mut table = vec![Vec::new(); 1 << m];
        for set in nonempty_subsets(m) {
            let w = f(set);
            if w.len() != set.len() {
                return Err(Error::InvalidScheme(format!(
                    "set {set} has {} members but {} weights",
                    set.len(),
                    w.len()
                )));
            }
            table[set.mask() as usize] = w;
        }
        Ok(Self { m, table })
    }

    /// Build from `(set, weights)` pairs covering every nonempty subset once.
    pub fn from_entries<I>(m: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (IndexSet, Vec<f64>)>,
    {
        check_size(m)?;
        let mut table: Vec<Option<Vec<f64>>> = vec![None; 1 << m];
        for (set, w) in entries {
            if set.is_empty() || !set.is_subset_of(IndexSet::full(m)) {
                return Err(Error::InvalidScheme(format!("set {set} is not a nonempty subset of 1..={m}")));
            }
            if w.len() != set.len() {
                return Err(Error::InvalidScheme(format!(
                    "set {set} has {} members but {} weights",
                    set.len(),
                    w.len()
                )));
            }
            if w.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidScheme(format!("non-finite weight for set {set}")));
            }
            let slot = &mut table[set.mask() as usize];
            if slot.is_some() {
                return Err(Error::InvalidScheme(format!("set {set} listed twice")));
            }
            *slot = Some(w);
        }
        let mut out = vec![Vec::new(); 1 << m];
        for set in nonempty_subsets(m) {
            match table[set.mask() as usize].take() {
                Some(w) => out[set.mask() as usize] = w,
                None => return Err(Error::InvalidScheme(format!("missing entry for set {set}"))),
            }
        }
        Ok(Self { m, table: out })
    }

    /// Parse the external list form (1-based indices).
    pub fn from_external(m: usize, entries: &[SchemeEntry]) -> Result<Self> {
        let mut parsed = Vec::with_capacity(entries.len());
        for e in entries {
            if e.set.contains(&0) {
                return Err(Error::InvalidScheme("indices are 1-based; found 0".into()));
            }
            let zero_based: Vec<usize> = e.set.iter().map(|i| i - 1).collect();
            let set = IndexSet::from_indices(&zero_based, m).map_err(|err| Error::InvalidScheme(err.to_string()))?;
            // entries may list members in any order
            let mut pairs: Vec<(usize, f64)> = zero_based.iter().copied().zip(e.weights.iter().copied()).collect();
            if e.weights.len() != e.set.len() {
                return Err(Error::InvalidScheme(format!(
                    "set {set} has {} members but {} weights",
                    e.set.len(),
                    e.weights.len()
                )));
            }
            pairs.sort_by_key(|p| p.0);
            parsed.push((set, pairs.into_iter().map(|p| p.1).collect()));
        }
        Self::from_entries(m, parsed)
    }

    /// External list form in canonical subset order.
    pub fn to_external(&self) -> Vec<SchemeEntry> {
        self.iter().map(|(set, w)| SchemeEntry { set: set.to_one_based(), weights: w.to_vec() }).collect()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Member weights of `set` in increasing index order.
    pub fn weights(&self, set: IndexSet) -> &[f64] {
        &self.table[set.mask() as usize]
    }

    /// `w_j(J)`, zero when `j` is not in `J`.
    pub fn weight(&self, set: IndexSet, j: usize) -> f64 {
        set.rank_of(j).map_or(0.0, |r| self.table[set.mask() as usize][r])
    }

    pub fn sum(&self, set: IndexSet) -> f64 {
        self.weights(set).iter().sum()
    }

    /// Entries in canonical (increasing mask) order.
    pub fn iter(&self) -> impl Iterator<Item = (IndexSet, &[f64])> + '_ {
        nonempty_subsets(self.m).map(move |s| (s, self.weights(s)))
    }

    /// Step-down Dunnett / Holm weights `1/|J|`.
    pub fn equal(m: usize) -> Result<Self> {
        Self::from_fn(m, |s| vec![1.0 / s.len() as f64; s.len()])
    }

    pub fn validate(&self) -> SchemeProperties {
        let mut valid = true;
        let mut exhaustive = true;
        let mut monotone = true;
        for (set, w) in self.iter() {
            let total: f64 = w.iter().sum();
            if w.iter().any(|&x| !(x >= -WEIGHT_TOLERANCE))
                || !(total > WEIGHT_TOLERANCE)
                || total > 1.0 + WEIGHT_TOLERANCE
            {
                valid = false;
            }
            if (total - 1.0).abs() > WEIGHT_TOLERANCE {
                exhaustive = false;
            }
            // one-step removals suffice: the order is transitive along chains
            if monotone && set.len() > 1 {
                'outer: for k in set {
                    let sub = set.remove(k);
                    for j in sub {
                        if self.weight(set, j) > self.weight(sub, j) + WEIGHT_TOLERANCE {
                            monotone = false;
                            break 'outer;
                        }
                    }
                }
            }
        }
        SchemeProperties { valid, exhaustive, monotone }
    }

    /// Rescale each `w_J` to sum to one: `w_j(J) / Σ_{i∈J} w_i(J)`.
    pub fn rescale_proportional(&self) -> Result<Self> {
        if let Some((set, _)) = self.iter().find(|(_, w)| !(w.iter().sum::<f64>() > 0.0)) {
            return Err(Error::InvalidScheme(format!("weights of set {set} sum to zero")));
        }
        Self::from_fn(self.m, |s| {
            let w = self.weights(s);
            let total: f64 = w.iter().sum();
            w.iter().map(|x| x / total).collect()
        })
    }

    /// Scheme with `w_j(J) = w_j(I)` for all `J`, i.e. no reallocation.
    pub fn restricted(initial: &[f64]) -> Result<Self> {
        Self::from_fn(initial.len(), |s| s.iter().map(|j| initial[j]).collect())
    }

    pub fn from_graph(graph: &GraphSpec) -> Self {
        scheme_from_graph(graph)
    }
}

/// Generate the weighting scheme of a graph by removing `I \ J` from the
/// full graph for every `J`.
///
/// Subsets are visited depth-first, removing indices in increasing order so
/// each `J` is produced once from its parent state.
pub fn scheme_from_graph(graph: &GraphSpec) -> WeightingScheme {
    fn visit(state: &GraphState, start: usize, m: usize, table: &mut [Vec<f64>]) {
        let set = state.active();
        table[set.mask() as usize] = set.iter().map(|j| state.weights()[j]).collect();
        if set.len() == 1 {
            return;
        }
        for k in start..m {
            if set.contains(k) {
                let mut child = state.clone();
                child.remove(k);
                visit(&child, k + 1, m, table);
            }
        }
    }

    let m = graph.m();
    let mut table = vec![Vec::new(); 1 << m];
    visit(&graph.state(), 0, m, &mut table);
    WeightingScheme { m, table }
}

/// Xie's scheme `w_j(J) = w_j / Σ_{i∈J} w_i` from strictly positive weights.
pub fn xie_scheme(initial: &[f64]) -> Result<WeightingScheme> {
    if let Some((i, w)) = initial.iter().enumerate().find(|(_, w)| !(**w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidScheme(format!("proportional scheme needs positive weights; H{} has {w}", i + 1)));
    }
    WeightingScheme::from_fn(initial.len(), |s| {
        let total: f64 = s.iter().map(|j| initial[j]).sum();
        s.iter().map(|j| initial[j] / total).collect()
    })
}

/// Whether `scheme` has the proportional structure `w_j(J) ∝ w_j(I)` with
/// all `w_j(I) > 0`.
pub fn is_proportional(scheme: &WeightingScheme) -> bool {
    let full = IndexSet::full(scheme.m());
    let initial = scheme.weights(full);
    if initial.iter().any(|w| !(*w > 0.0)) {
        return false;
    }
    scheme.iter().all(|(set, w)| {
        let total: f64 = w.iter().sum();
        let base: f64 = set.iter().map(|j| initial[j]).sum();
        total > 0.0 && set.iter().zip(w).all(|(j, x)| (x / total - initial[j] / base).abs() <= 1e-9)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(one_based: &[usize], m: usize) -> IndexSet {
        let z: Vec<usize> = one_based.iter().map(|i| i - 1).collect();
        IndexSet::from_indices(&z, m).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn graph_validation() {
        assert!(GraphSpec::new(vec![0.6, 0.6], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).is_err());
        assert!(GraphSpec::new(vec![0.5, 0.5], vec![vec![0.5, 1.0], vec![1.0, 0.0]]).is_err());
        assert!(GraphSpec::new(vec![0.5, 0.5], vec![vec![0.0, 1.2], vec![1.0, 0.0]]).is_err());
        assert!(GraphSpec::new(vec![0.5, -0.1], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).is_err());
        assert!(GraphSpec::new(vec![0.5, 0.5], vec![vec![0.0, -1.0], vec![1.0, 0.0]]).is_err());
        assert!(GraphSpec::new(vec![0.5, 0.5], vec![vec![0.0, 1.0]]).is_err());
        assert!(GraphSpec::new(vec![0.5, 0.5], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).is_ok());
    }

    #[test]
    fn holm_graph() {
        // two hypotheses passing everything to each other = Holm
        let g = GraphSpec::new(vec![0.5, 0.5], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let w = scheme_from_graph(&g);
        assert_eq!(w.weights(set(&[1, 2], 2)), &[0.5, 0.5]);
        assert_eq!(w.weights(set(&[1], 2)), &[1.0]);
        assert_eq!(w.weights(set(&[2], 2)), &[1.0]);
        assert_eq!(w, WeightingScheme::equal(2).unwrap());
    }

    #[test]
    fn no_edges_restricts_initial_weights() {
        let g = GraphSpec::without_edges(vec![0.2, 0.3, 0.5]).unwrap();
        let w = scheme_from_graph(&g);
        for (s, ws) in w.iter() {
            let expect: Vec<f64> = s.iter().map(|j| g.weights()[j]).collect();
            assert_eq!(ws, expect.as_slice());
        }
    }

    #[test]
    fn fixed_sequence_chain() {
        // H1 -> H2 -> H3 with all weight on H1
        let g =
            GraphSpec::new(vec![1.0, 0.0, 0.0], vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 0.0]])
                .unwrap();
        let w = scheme_from_graph(&g);
        assert_eq!(w.weights(set(&[2, 3], 3)), &[1.0, 0.0]);
        assert_eq!(w.weights(set(&[1, 3], 3)), &[1.0, 0.0]);
        assert_eq!(w.weights(set(&[3], 3)), &[1.0]);
        let props = w.validate();
        assert!(props.valid && props.exhaustive && props.monotone);
    }

    #[test]
    fn validate_flags() {
        let p = WeightingScheme::equal(4).unwrap().validate();
        assert_eq!(p, SchemeProperties { valid: true, exhaustive: true, monotone: true });

        let bad =
            WeightingScheme::from_fn(2, |s| if s.len() == 1 && s.contains(1) { vec![0.0] } else { vec![0.5; s.len()] })
                .unwrap();
        assert!(!bad.validate().valid);

        let sub = WeightingScheme::restricted(&[0.3, 0.3]).unwrap().validate();
        assert!(sub.valid && !sub.exhaustive && sub.monotone);

        // weight of H1 shrinks when H2 leaves: not monotone
        let non_mono = WeightingScheme::from_fn(2, |s| if s.len() == 2 { vec![0.6, 0.4] } else { vec![0.5] }).unwrap();
        assert!(!non_mono.validate().monotone);
    }

    #[test]
    fn rescale_examples() {
        let w = WeightingScheme::restricted(&[0.4, 0.4]).unwrap().rescale_proportional().unwrap();
        assert_eq!(w.weights(IndexSet::full(2)), &[0.5, 0.5]);
        let eq = WeightingScheme::equal(3).unwrap();
        assert_eq!(eq.rescale_proportional().unwrap(), eq);
        let zero = WeightingScheme::from_fn(2, |s| vec![if s.len() == 1 { 0.0 } else { 0.5 }; s.len()]).unwrap();
        assert!(zero.rescale_proportional().is_err());
    }

    #[test]
    fn xie_examples() {
        let w = xie_scheme(&[1.0, 1.0]).unwrap();
        assert_eq!(w.weights(set(&[1], 2)), &[1.0]);
        let w = xie_scheme(&[0.4, 0.4, 0.2]).unwrap();
        assert!(close(w.weights(set(&[2, 3], 3)), &[2.0 / 3.0, 1.0 / 3.0], 1e-15));
        assert!(close(w.weights(set(&[1, 3], 3)), &[2.0 / 3.0, 1.0 / 3.0], 1e-15));
        assert!(is_proportional(&w));
        assert!(xie_scheme(&[0.5, 0.0]).is_err());
        assert!(xie_scheme(&[0.5, -0.1]).is_err());

        let m = 5;
        let eq = xie_scheme(&vec![1.0 / m as f64; m]).unwrap();
        for (s, ws) in eq.iter() {
            assert!(ws.iter().all(|&x| (x - 1.0 / s.len() as f64).abs() < 1e-15));
        }
    }

    #[test]
    fn external_round_trip() {
        let g =
            GraphSpec::new(vec![0.5, 0.5, 0.0], vec![vec![0.0, 0.5, 0.5], vec![0.5, 0.0, 0.5], vec![0.5, 0.5, 0.0]])
                .unwrap();
        let w = scheme_from_graph(&g);
        let ext = w.to_external();
        assert_eq!(ext.len(), 7);
        assert_eq!(WeightingScheme::from_external(3, &ext).unwrap(), w);

        let mut missing = ext.clone();
        missing.pop();
        assert!(WeightingScheme::from_external(3, &missing).is_err());
        let mut dup = ext.clone();
        dup.push(ext[0].clone());
        assert!(WeightingScheme::from_external(3, &dup).is_err());
        let mut zero = ext;
        zero[0].set = vec![0];
        assert!(WeightingScheme::from_external(3, &zero).is_err());
    }

    #[test]
    fn unordered_external_entries() {
        let entries = vec![
            SchemeEntry { set: vec![2, 1], weights: vec![0.3, 0.7] },
            SchemeEntry { set: vec![1], weights: vec![1.0] },
            SchemeEntry { set: vec![2], weights: vec![1.0] },
        ];
        let w = WeightingScheme::from_external(2, &entries).unwrap();
        assert_eq!(w.weights(IndexSet::full(2)), &[0.7, 0.3]);
    }
}
