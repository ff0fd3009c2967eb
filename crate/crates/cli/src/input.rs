//! Input documents and their conversion into validated library objects.

use std::io::Read;

use closedmtp::{
    scheme_from_graph, CorrelationMatrix, CorrelationModel, Error, GraphSpec, Method, Precision, SchemeEntry,
    TestProblem, WeightingScheme,
};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::CliError;

pub const SEED_ENV: &str = "CLOSEDMTP_SEED";
pub const DEFAULT_REPLICATIONS: usize = 100_000;

/// Command-line values that take precedence over file fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub alpha: Option<f64>,
    pub method: Option<Method>,
    pub seed: Option<u64>,
    pub target_error: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum WeightsSpec {
    Graph(GraphSpec),
    Scheme(Vec<SchemeEntry>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationSpec {
    /// 1-based members of each block.
    blocks: Vec<Vec<usize>>,
    /// One matrix per block, `null` allowed for singletons.
    #[serde(default)]
    matrices: Option<Vec<Option<CorrelationMatrix>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    m: usize,
    alpha: Option<f64>,
    pvalues: Option<Vec<f64>>,
    method: Option<Method>,
    weights: WeightsSpec,
    correlation: Option<CorrelationSpec>,
    seed: Option<u64>,
    target_error: Option<f64>,
    root_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// Known blocks plus one common correlation between blocks.
    Cross(f64),
    Matrix(CorrelationMatrix),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    m: usize,
    alpha: Option<f64>,
    method: Option<Method>,
    weights: WeightsSpec,
    correlation: Option<CorrelationSpec>,
    generator: Option<GeneratorSpec>,
    mean_shifts: Vec<f64>,
    replications: Option<usize>,
    seed: Option<u64>,
    target_error: Option<f64>,
    root_tol: Option<f64>,
}

/// Settings after applying flags, file fields, environment and defaults.
#[derive(Debug, Clone)]
pub struct Settings {
    pub alpha: f64,
    pub method: Method,
    pub seed: u64,
    pub precision: Precision,
}

/// A validated problem. `pvalues` is only present when the file gave them.
#[derive(Debug, Clone)]
pub struct Problem {
    pub m: usize,
    pub pvalues: Option<Vec<f64>>,
    pub scheme: WeightingScheme,
    pub corr: CorrelationModel,
    pub settings: Settings,
}

impl Problem {
    pub fn test_problem(&self) -> Result<TestProblem, CliError> {
        let p = self.pvalues.clone().ok_or_else(|| CliError::schema("pvalues", "missing field `pvalues`"))?;
        let s = &self.settings;
        let problem = TestProblem::new(p, s.alpha, self.scheme.clone(), self.corr.clone(), s.method, s.seed)
            .map_err(field_error)?;
        Ok(problem.with_precision(s.precision))
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub problem: Problem,
    pub generator: CorrelationMatrix,
    pub mean_shifts: Vec<f64>,
    pub replications: usize,
}

/// Read a file, or standard input for `-`.
pub fn read_source(path: &str) -> Result<String, CliError> {
    let mut text = String::new();
    if path == "-" {
        std::io::stdin().read_to_string(&mut text).map_err(|e| CliError::io("standard input", e))?;
    } else {
        text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    }
    Ok(text)
}

pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T, CliError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(CliError::from_json)?;
    de.end().map_err(|e| CliError::Schema {
        field: None,
        location: Some((e.line(), e.column())),
        message: "trailing characters after the document".into(),
    })?;
    Ok(value)
}

/// Attribute a validation error from the library to the input field it
/// most likely came from.
fn field_error(e: Error) -> CliError {
    let field = match &e {
        Error::InvalidProblem(msg) if msg.starts_with("alpha") => "alpha",
        Error::InvalidProblem(msg) if msg.contains("p-value") => "pvalues",
        Error::InvalidProblem(msg) if msg.contains("target error") => "target_error",
        Error::InvalidScheme(_) | Error::InvalidGraph(_) => "weights",
        Error::InvalidModel(_) | Error::InvalidCorrelation(_) | Error::NotPositiveSemidefinite { .. } => "correlation",
        Error::MethodMismatch(_) => "method",
        Error::TooManyHypotheses { .. } => "m",
        _ => return CliError::schema("", e),
    };
    CliError::schema(field, e)
}

fn scheme(m: usize, spec: WeightsSpec) -> Result<WeightingScheme, CliError> {
    match spec {
        WeightsSpec::Graph(g) => {
            if g.m() != m {
                return Err(CliError::schema("weights.graph.m", format!("graph has {} hypotheses but m = {m}", g.m())));
            }
            Ok(scheme_from_graph(&g))
        }
        WeightsSpec::Scheme(entries) => {
            WeightingScheme::from_external(m, &entries).map_err(|e| CliError::schema("weights.scheme", e))
        }
    }
}

fn correlation(m: usize, spec: Option<CorrelationSpec>) -> Result<CorrelationModel, CliError> {
    let Some(spec) = spec else {
        return Ok(CorrelationModel::singletons(m));
    };
    let mut blocks = Vec::with_capacity(spec.blocks.len());
    for (h, block) in spec.blocks.iter().enumerate() {
        let mut members = Vec::with_capacity(block.len());
        for &i in block {
            if i == 0 || i > m {
                return Err(CliError::schema(
                    format!("correlation.blocks[{h}]"),
                    format!("hypothesis index {i} is outside 1..={m}"),
                ));
            }
            members.push(i - 1);
        }
        blocks.push(members);
    }
    let matrices = spec.matrices.unwrap_or_else(|| vec![None; blocks.len()]);
    CorrelationModel::new(m, blocks, matrices).map_err(|e| CliError::schema("correlation", e))
}

fn seed(flag: Option<u64>, file: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => {
            v.trim().parse().map_err(|_| CliError::schema(SEED_ENV, format!("\"{v}\" is not an unsigned integer")))
        }
        Err(_) => Ok(0),
    }
}

struct Shared {
    m: usize,
    alpha: Option<f64>,
    method: Option<Method>,
    weights: WeightsSpec,
    correlation: Option<CorrelationSpec>,
    seed: Option<u64>,
    target_error: Option<f64>,
    root_tol: Option<f64>,
}

fn resolve(shared: Shared, pvalues: Option<Vec<f64>>, ov: &Overrides) -> Result<Problem, CliError> {
    let m = shared.m;
    if m == 0 {
        return Err(CliError::schema("m", "at least one hypothesis is required"));
    }
    if m > closedmtp::MAX_HYPOTHESES {
        return Err(CliError::schema("m", format!("at most {} hypotheses are supported", closedmtp::MAX_HYPOTHESES)));
    }
    let alpha = ov.alpha.or(shared.alpha).ok_or_else(|| CliError::schema("alpha", "missing field `alpha`"))?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::schema("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    let method = ov.method.or(shared.method).ok_or_else(|| CliError::schema("method", "missing field `method`"))?;
    let defaults = Precision::default();
    let precision = Precision {
        target_error: ov.target_error.or(shared.target_error).unwrap_or(defaults.target_error),
        root_tol: shared.root_tol.unwrap_or(defaults.root_tol),
    };
    if !(precision.target_error > 0.0 && precision.target_error < 1.0) {
        return Err(CliError::schema("target_error", format!("must lie in (0, 1), got {}", precision.target_error)));
    }
    if !(precision.root_tol > 0.0 && precision.root_tol.is_finite()) {
        return Err(CliError::schema("root_tol", format!("must be positive, got {}", precision.root_tol)));
    }
    if let Some(p) = &pvalues {
        if p.len() != m {
            return Err(CliError::schema("pvalues", format!("{} values given but m = {m}", p.len())));
        }
        if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(CliError::schema(format!("pvalues[{i}]"), format!("{v} is not a probability")));
        }
    }
    let settings = Settings { alpha, method, seed: seed(ov.seed, shared.seed)?, precision };
    let problem =
        Problem { m, pvalues, scheme: scheme(m, shared.weights)?, corr: correlation(m, shared.correlation)?, settings };
    // checks that do not depend on the p-values (scheme validity, method fit)
    let probe = Problem { pvalues: Some(vec![1.0; m]), ..problem.clone() };
    probe.test_problem()?;
    Ok(problem)
}

impl ProblemFile {
    pub fn resolve(self, ov: &Overrides) -> Result<Problem, CliError> {
        let shared = Shared {
            m: self.m,
            alpha: self.alpha,
            method: self.method,
            weights: self.weights,
            correlation: self.correlation,
            seed: self.seed,
            target_error: self.target_error,
            root_tol: self.root_tol,
        };
        resolve(shared, self.pvalues, ov)
    }
}

impl ScenarioFile {
    pub fn resolve(self, ov: &Overrides, replications: Option<usize>) -> Result<Scenario, CliError> {
        let m = self.m;
        let shared = Shared {
            m,
            alpha: self.alpha,
            method: self.method,
            weights: self.weights,
            correlation: self.correlation,
            seed: self.seed,
            target_error: self.target_error,
            root_tol: self.root_tol,
        };
        let problem = resolve(shared, None, ov)?;
        let generator = match self.generator {
            None => problem.corr.assemble(0.0).map_err(|e| CliError::schema("generator", e))?,
            Some(GeneratorSpec::Cross(r)) => {
                problem.corr.assemble(r).map_err(|e| CliError::schema("generator.cross", e))?
            }
            Some(GeneratorSpec::Matrix(mat)) => {
                if mat.dim() != m {
                    return Err(CliError::schema("generator.matrix", format!("{0}x{0} matrix but m = {m}", mat.dim())));
                }
                // the procedure's known blocks must agree with the truth
                for block in problem.corr.blocks() {
                    let idx: Vec<usize> = block.iter().collect();
                    let known = problem.corr.matrix_for(*block).map_err(|e| CliError::schema("correlation", e))?;
                    let truth = mat.submatrix(&idx);
                    let differs = (0..idx.len())
                        .any(|a| (0..idx.len()).any(|b| (known.get(a, b) - truth.get(a, b)).abs() > 1e-12));
                    if differs {
                        return Err(CliError::schema(
                            "generator.matrix",
                            format!("entries for block {block} differ from the correlation model"),
                        ));
                    }
                }
                mat
            }
        };
        if self.mean_shifts.len() != m {
            return Err(CliError::schema(
                "mean_shifts",
                format!("{} values given but m = {m}", self.mean_shifts.len()),
            ));
        }
        if let Some((i, s)) = self.mean_shifts.iter().enumerate().find(|(_, s)| !(**s >= 0.0 && s.is_finite())) {
            return Err(CliError::schema(
                format!("mean_shifts[{i}]"),
                format!("{s} is not a finite nonnegative shift"),
            ));
        }
        let replications = replications.or(self.replications).unwrap_or(DEFAULT_REPLICATIONS);
        if replications == 0 {
            return Err(CliError::schema("replications", "must be at least 1"));
        }
        Ok(Scenario { problem, generator, mean_shifts: self.mean_shifts, replications })
    }
}

/// Graph documents on their own, as taken by the `weights` command.
pub fn parse_graph(text: &str) -> Result<GraphSpec, CliError> {
    parse(text)
}
