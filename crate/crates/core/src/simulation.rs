//! Monte Carlo estimation of familywise error rate and per-hypothesis
//! rejection rates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closure::CriticalTable;
use crate::correlation::CorrelationModel;
use crate::error::{Error, Result};
use crate::intersection::{Method, Precision};
use crate::mvn::CorrelationMatrix;
use crate::normal::std_normal_sf;
use crate::weighting::WeightingScheme;

const CHUNK: usize = 4096;

/// A procedure together with the data-generating model.
#[derive(Debug, Clone)]
pub struct SimScenario {
    pub scheme: WeightingScheme,
    /// Correlations the procedure is allowed to use.
    pub corr: CorrelationModel,
    pub alpha: f64,
    pub method: Method,
    /// Full correlation of the generated statistics, including
    /// between-block entries the procedure treats as unknown.
    pub generator: CorrelationMatrix,
    /// Mean of each statistic; zero exactly on the true nulls.
    pub mean_shifts: Vec<f64>,
    pub replications: usize,
    pub master_seed: u64,
    pub precision: Precision,
}

impl SimScenario {
    pub fn true_nulls(&self) -> Vec<bool> {
        self.mean_shifts.iter().map(|&s| s == 0.0).collect()
    }

    fn validate(&self) -> Result<()> {
        let m = self.scheme.m();
        if self.generator.dim() != m || self.mean_shifts.len() != m || self.corr.m() != m {
            return Err(Error::InvalidScenario(format!(
                "dimensions disagree: scheme {m}, model {}, generator {}, shifts {}",
                self.corr.m(),
                self.generator.dim(),
                self.mean_shifts.len()
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidScenario("replications must be at least 1".into()));
        }
        if let Some(s) = self.mean_shifts.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidScenario(format!("mean shift {s} is not a finite nonnegative number")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub fwer_estimate: f64,
    pub fwer_stderr: f64,
    /// Fraction of replications rejecting each hypothesis (power for the
    /// false nulls).
    pub rejection_rates: Vec<f64>,
    pub true_nulls: Vec<bool>,
    pub replications: usize,
    pub master_seed: u64,
}

/// Run the scenario. Replication `r` draws from its own ChaCha stream, so
/// the result does not depend on how work is split across threads.
pub fn simulate(scenario: &SimScenario) -> Result<SimReport> {
    scenario.validate()?;
    let m = scenario.scheme.m();
    let table = CriticalTable::build(
        &scenario.scheme,
        &scenario.corr,
        scenario.alpha,
        scenario.method,
        scenario.master_seed,
        &scenario.precision,
    )?;
    let chol = scenario.generator.cholesky();
    let null_mask: u32 =
        scenario.true_nulls().iter().enumerate().filter(|(_, t)| **t).fold(0, |acc, (i, _)| acc | (1 << i));

    let n = scenario.replications;
    let chunks: Vec<(usize, usize)> = (0..n).step_by(CHUNK).map(|s| (s, (s + CHUNK).min(n))).collect();
    let (fwer_events, per_hyp) = chunks
        .par_iter()
        .map(|&(start, end)| {
            let mut fwer = 0u64;
            let mut counts = vec![0u64; m];
            let mut e = vec![0.0; m];
            let mut p = vec![0.0; m];
            for rep in start..end {
                let mut rng = ChaCha8Rng::seed_from_u64(scenario.master_seed);
                rng.set_stream(rep as u64);
                for x in e.iter_mut() {
                    *x = StandardNormal.sample(&mut rng);
                }
                for i in 0..m {
                    let z: f64 = scenario.mean_shifts[i]
                        + chol[i * m..i * m + i + 1].iter().zip(&e).map(|(l, x)| l * x).sum::<f64>();
                    p[i] = std_normal_sf(z);
                }
                let accepted = table.accepted_union(&p).mask();
                let rejected = !accepted & ((1u64 << m) - 1) as u32;
                if rejected & null_mask != 0 {
                    fwer += 1;
                }
                for (i, c) in counts.iter_mut().enumerate() {
                    if rejected & (1 << i) != 0 {
                        *c += 1;
                    }
                }
            }
            (fwer, counts)
        })
        .reduce(
            || (0u64, vec![0u64; m]),
            |(fa, ca), (fb, cb)| (fa + fb, ca.iter().zip(&cb).map(|(a, b)| a + b).collect()),
        );

    let nf = n as f64;
    let f = fwer_events as f64 / nf;
    Ok(SimReport {
        fwer_estimate: f,
        fwer_stderr: (f * (1.0 - f) / nf).sqrt(),
        rejection_rates: per_hyp.iter().map(|&c| c as f64 / nf).collect(),
        true_nulls: scenario.true_nulls(),
        replications: n,
        master_seed: scenario.master_seed,
    })
}
