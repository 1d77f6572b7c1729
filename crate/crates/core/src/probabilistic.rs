//! Energy distribution of a program under a distribution over its inputs,
//! by exhaustive enumeration (exact) or seeded Monte-Carlo sampling.

use crate::energy::Energy;
use crate::machine::Program;
use crate::model::EnergyModel;
use crate::simulator::{run, stats_of, Outcome, RunConfig, SimInputs};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use thiserror::Error;

pub const DEFAULT_SUPPORT_LIMIT: usize = 100_000;
const PROB_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DistError {
    #[error("malformed distribution: {0}")]
    Parse(String),
    #[error("probabilities sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("support of {0} inputs exceeds the limit of {1}")]
    SupportTooLarge(usize, usize),
    #[error("input #{index} ({desc}): {source}")]
    Sim {
        index: usize,
        desc: String,
        source: crate::simulator::SimError,
    },
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// A finite distribution over concrete program inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct InputDistribution {
    pub points: Vec<(SimInputs, f64)>,
}

impl InputDistribution {
    // The negated comparison rejects NaN probabilities.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), DistError> {
        if self.points.iter().any(|(_, p)| !(p >= &0.0)) {
            return Err(DistError::Parse("negative probability".into()));
        }
        let total: f64 = self.points.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > PROB_TOLERANCE {
            return Err(DistError::NotNormalized(total));
        }
        Ok(())
    }

    pub fn uniform(points: Vec<SimInputs>) -> InputDistribution {
        let p = 1.0 / points.len() as f64;
        InputDistribution {
            points: points.into_iter().map(|x| (x, p)).collect(),
        }
    }

    /// Inverse-CDF sampler over the support.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> SimInputs {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (inputs, p) in &self.points {
            acc += p;
            if u < acc {
                return inputs.clone();
            }
        }
        self.points.last().expect("non-empty support").0.clone()
    }
}

/// A probability mass function over exact trace energies, with summary
/// statistics and per-outcome classification.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyDistribution {
    pub pmf: BTreeMap<Energy, f64>,
    pub mean_pj: f64,
    pub variance_pj2: f64,
    pub min: Energy,
    pub max: Energy,
    /// q → smallest energy whose CDF reaches q, for q in {.1,.25,.5,.75,.9}.
    pub quantiles: BTreeMap<String, Energy>,
    pub outcomes: BTreeMap<String, f64>,
    /// Standard error of the mean; only set for Monte-Carlo estimates.
    pub std_error_pj: Option<f64>,
    pub samples: usize,
}

fn outcome_key(outcome: Outcome) -> &'static str {
    match outcome {
        Outcome::Halted => "halted",
        Outcome::Deadlock => "deadlock",
        Outcome::FuelExhausted => "fuel-exhausted",
    }
}

fn summarize(
    weighted: Vec<(Energy, f64, Outcome)>,
    std_error_of: Option<usize>,
) -> EnergyDistribution {
    let mut pmf: BTreeMap<Energy, f64> = BTreeMap::new();
    let mut outcomes: BTreeMap<String, f64> = BTreeMap::new();
    let mut mean = 0.0;
    let mut second = 0.0;
    for (e, p, outcome) in &weighted {
        *pmf.entry(*e).or_insert(0.0) += p;
        *outcomes
            .entry(outcome_key(*outcome).to_string())
            .or_insert(0.0) += p;
        let pj = e.as_pj_f64();
        mean += p * pj;
        second += p * pj * pj;
    }
    let variance = (second - mean * mean).max(0.0);
    let min = *pmf.keys().next().expect("non-empty distribution");
    let max = *pmf.keys().last().expect("non-empty distribution");
    let mut quantiles = BTreeMap::new();
    for (name, q) in [
        ("p10", 0.10),
        ("p25", 0.25),
        ("p50", 0.50),
        ("p75", 0.75),
        ("p90", 0.90),
    ] {
        let mut acc = 0.0;
        let mut pick = max;
        for (&e, &p) in &pmf {
            acc += p;
            if acc + PROB_TOLERANCE >= q {
                pick = e;
                break;
            }
        }
        quantiles.insert(name.to_string(), pick);
    }
    let std_error_pj = std_error_of.map(|n| (variance / n as f64).sqrt());
    EnergyDistribution {
        pmf,
        mean_pj: mean,
        variance_pj2: variance,
        min,
        max,
        quantiles,
        outcomes,
        std_error_pj,
        samples: weighted.len(),
    }
}

fn describe(inputs: &SimInputs) -> String {
    let regs = inputs.regs.iter().map(|(r, v)| format!("{r}={v}"));
    let mems = inputs.mem.iter().map(|(a, v)| format!("m{a}={v}"));
    let all: Vec<String> = regs.chain(mems).collect();
    if all.is_empty() {
        "no inputs".to_string()
    } else {
        all.join(" ")
    }
}

fn energy_of(
    program: &Program,
    model: &EnergyModel,
    inputs: &SimInputs,
    config: &RunConfig,
    index: usize,
) -> Result<(Energy, Outcome), DistError> {
    let trace = run(program, inputs, config).map_err(|source| DistError::Sim {
        index,
        desc: describe(inputs),
        source,
    })?;
    let energy = model.energy(&stats_of(&trace))?;
    Ok((energy, trace.outcome))
}

/// Exact distribution: every support point is simulated once and weighted by
/// its probability.
pub fn energy_distribution_exact(
    program: &Program,
    model: &EnergyModel,
    dist: &InputDistribution,
    config: &RunConfig,
    support_limit: usize,
) -> Result<EnergyDistribution, DistError> {
    dist.validate()?;
    if dist.points.is_empty() {
        return Err(DistError::Parse("empty support".into()));
    }
    if dist.points.len() > support_limit {
        return Err(DistError::SupportTooLarge(dist.points.len(), support_limit));
    }
    let mut weighted = Vec::with_capacity(dist.points.len());
    for (i, (inputs, p)) in dist.points.iter().enumerate() {
        let (e, outcome) = energy_of(program, model, inputs, config, i)?;
        weighted.push((e, *p, outcome));
    }
    Ok(summarize(weighted, None))
}

/// Seeded Monte-Carlo estimate using any input sampler; reports the standard
/// error of the mean.
pub fn energy_distribution_mc(
    program: &Program,
    model: &EnergyModel,
    mut sampler: impl FnMut(&mut ChaCha8Rng) -> SimInputs,
    n_samples: usize,
    seed: u64,
    config: &RunConfig,
) -> Result<EnergyDistribution, DistError> {
    assert!(n_samples >= 1, "n_samples must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = 1.0 / n_samples as f64;
    let mut weighted = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let inputs = sampler(&mut rng);
        let (e, outcome) = energy_of(program, model, &inputs, config, i)?;
        weighted.push((e, w, outcome));
    }
    Ok(summarize(weighted, Some(n_samples)))
}

/// Histogram CSV: energy in pJ and probability per distinct energy.
pub fn histogram_csv(dist: &EnergyDistribution) -> String {
    let mut out = String::from("energy_pj,probability\n");
    for (e, p) in &dist.pmf {
        out.push_str(&format!("{},{}\n", e.pj_string(), p));
    }
    out
}

/// Parses the distribution file format: `{"inputs": [{"assign": {"r0": 3,
/// "m4": 7}, "p": 0.25}, ...]}`.
pub fn distribution_from_json(text: &str) -> Result<InputDistribution, DistError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| DistError::Parse(e.to_string()))?;
    let entries = value
        .get("inputs")
        .and_then(|v| v.as_array())
        .ok_or_else(|| DistError::Parse("expected top-level 'inputs' array".into()))?;
    let mut points = Vec::with_capacity(entries.len());
    for entry in entries {
        let p = entry
            .get("p")
            .and_then(|v| v.as_f64())
            .ok_or_else(|| DistError::Parse("entry missing probability 'p'".into()))?;
        let assign = entry
            .get("assign")
            .and_then(|v| v.as_object())
            .ok_or_else(|| DistError::Parse("entry missing 'assign' object".into()))?;
        let mut inputs = SimInputs::default();
        for (key, v) in assign {
            let key = crate::machine::parse_program_input_key(key)
                .map_err(|e| DistError::Parse(e.to_string()))?;
            let value = v
                .as_u64()
                .and_then(|v| u32::try_from(v).ok())
                .ok_or_else(|| DistError::Parse(format!("bad value for '{key}'")))?;
            inputs.set(key, value);
        }
        points.push((inputs, p));
    }
    let dist = InputDistribution { points };
    dist.validate()?;
    Ok(dist)
}
