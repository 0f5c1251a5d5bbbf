//! Amplification of TV indistinguishability and smooth boosting of accuracy.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coupling::ReferenceMeasure;
use crate::dist::FiniteDistribution;
use crate::error::{open_unit, Error, Result};
use crate::model::{population_loss, Dataset, Example, ExampleDistribution, Hypothesis, HypothesisClass};
use crate::randomness::Tape;
use crate::replicable::{replicable_agnostic_learner, replicable_heavy_hitters, replicable_sq, HhParams, SqParams};
use crate::rule::{LearningRule, SeededLearner};
use crate::sampling::{DistSampler, FnSource, Source};
use crate::transforms::{derandomize, FailureKind, Outcome};

/// Weights in `[0, 1]` over labeled points, stored at `2 x + y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothMeasure {
    values: Vec<f64>,
}

impl SmoothMeasure {
    /// The all-ones measure.
    pub fn uniform(domain_size: usize) -> Self {
        SmoothMeasure { values: vec![1.0; 2 * domain_size] }
    }

    pub fn constant(domain_size: usize, v: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::param(format!("measure value {v} outside [0, 1]")));
        }
        Ok(SmoothMeasure { values: vec![v; 2 * domain_size] })
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if !values.len().is_multiple_of(2) {
            return Err(Error::param("one value per (point, label) pair is required"));
        }
        let m = SmoothMeasure { values };
        if !m.in_range() {
            return Err(Error::param("measure values must lie in [0, 1]"));
        }
        Ok(m)
    }

    pub fn domain_size(&self) -> usize {
        self.values.len() / 2
    }

    pub fn value(&self, e: &Example) -> f64 {
        self.values[2 * e.point as usize + e.label as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn in_range(&self) -> bool {
        self.values.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// `E_D[mu]`.
    pub fn mean(&self, d: &ExampleDistribution) -> f64 {
        d.iter().map(|(e, m)| m * self.value(e)).sum()
    }
}

/// Rounds so far, with margins per labeled point.
#[derive(Clone, Debug, PartialEq)]
pub struct BoostState {
    gamma: f64,
    hypotheses: Vec<Hypothesis>,
    margins: Vec<f64>,
}

fn sign(b: bool) -> f64 {
    if b {
        1.0
    } else {
        -1.0
    }
}

impl BoostState {
    pub fn new(domain_size: usize, gamma: f64) -> Self {
        BoostState { gamma, hypotheses: vec![], margins: vec![0.0; 2 * domain_size] }
    }

    pub fn round(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.hypotheses
    }

    pub fn theta(&self) -> f64 {
        self.gamma / (2.0 + self.gamma)
    }

    pub fn push(&mut self, h: Hypothesis) {
        let theta = self.theta();
        for (i, m) in self.margins.iter_mut().enumerate() {
            let (x, y) = (i / 2, i % 2 == 1);
            *m += sign(y) * sign(h.label(x)) - theta;
        }
        self.hypotheses.push(h);
    }

    /// `mu = 1` where the margin is not positive, else `(1 - gamma)^(M/2)`.
    pub fn measure(&self) -> SmoothMeasure {
        let base = 1.0 - self.gamma;
        let values = self.margins.iter().map(|&m| if m <= 0.0 { 1.0 } else { base.powf(m / 2.0) }).collect();
        SmoothMeasure { values }
    }

    /// Majority vote; ties go to label 1.
    pub fn majority(&self) -> Hypothesis {
        let n = self.margins.len() / 2;
        Hypothesis::new(
            (0..n)
                .map(|x| self.hypotheses.iter().map(|h| sign(h.label(x))).sum::<f64>() >= 0.0)
                .collect(),
        )
    }
}

/// First `size_out` examples of `s_in` accepted with probability `mu`, or
/// `None` when the input runs out.
pub fn rejection_sampling(s_in: &Dataset, size_out: usize, mu: &SmoothMeasure, tape: &Tape) -> Option<Dataset> {
    let mut rng = tape.rng();
    let mut out = Vec::with_capacity(size_out);
    for e in s_in.examples() {
        if out.len() == size_out {
            break;
        }
        let b: f64 = rng.random();
        if mu.value(e) >= b {
            out.push(*e);
        }
    }
    (out.len() == size_out).then(|| Dataset::new(out))
}

/// Replicable estimate of `E_D[mu]` to within `eps / 3`.
pub fn indist_test_measure(
    mu: &SmoothMeasure,
    source: &mut impl Source<Example>,
    tape: &Tape,
    rho: f64,
    beta: f64,
    eps: f64,
) -> Result<f64> {
    let params = SqParams::new(eps / 3.0, rho, beta)?;
    replicable_sq(|e: &Example| mu.value(e), source, &params, tape)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub eps: f64,
    pub gamma: f64,
    pub rho_prime: f64,
    pub beta_prime: f64,
    #[serde(default = "default_c_t")]
    pub c_t: f64,
}

fn default_c_t() -> f64 {
    100.0
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        open_unit("eps", self.eps)?;
        open_unit("rho_prime", self.rho_prime)?;
        open_unit("beta_prime", self.beta_prime)?;
        if !(self.gamma > 0.0 && self.gamma < 0.5) {
            return Err(Error::param(format!("gamma = {} must lie in (0, 1/2)", self.gamma)));
        }
        if self.c_t.is_nan() || self.c_t <= 0.0 {
            return Err(Error::param("round constant must be positive"));
        }
        Ok(())
    }

    pub fn rounds(&self) -> usize {
        (self.c_t / (self.eps * self.gamma * self.gamma)).ceil() as usize
    }

    /// Examples drawn per round before rejection sampling.
    pub fn draw_size(&self, n_w: usize) -> usize {
        (n_w as f64 / self.eps * (self.rounds() as f64 / self.beta_prime).ln()).ceil() as usize
    }
}

/// One line of the progress log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub measure_estimate: f64,
    pub measure_mean: f64,
    pub majority_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoostOutput {
    pub outcome: Outcome<Hypothesis>,
    pub rounds: usize,
    pub log: Vec<RoundLog>,
    /// The measure stayed in `[0, 1]` after every update.
    pub measure_in_range: bool,
}

pub fn log_json_lines(log: &[RoundLog]) -> String {
    log.iter().map(|r| serde_json::to_string(r).expect("plain numbers") + "\n").collect()
}

/// Smooth boosting of a TV indistinguishable weak learner.
///
/// Shared randomness of round `t` is `tape.child("round", t).derive(j)` for
/// `j` in 1..=3; examples come from `d` driven by `data`.
pub fn smooth_boost(
    weak: Arc<dyn LearningRule>,
    reference: ReferenceMeasure<Hypothesis>,
    d: &ExampleDistribution,
    params: &BoostParams,
    tape: &Tape,
    data: &Tape,
) -> Result<BoostOutput> {
    params.validate()?;
    let domain = weak.domain_size();
    let n_w = weak.sample_size();
    let seeded = derandomize(weak, reference)?;
    let rounds = params.rounds();
    let draw = params.draw_size(n_w);
    let third = 3.0 * rounds as f64;
    let mut state = BoostState::new(domain, params.gamma);
    let mut mu = SmoothMeasure::uniform(domain);
    let mut log = Vec::new();
    let mut in_range = true;
    for t in 1..=rounds {
        let rt = tape.child("round", t as u64);
        let dt = data.child("round", t as u64);
        let s_in = DistSampler::from_tape(d, &dt.derive("weak")).dataset(draw);
        let Some(s_w) = rejection_sampling(&s_in, n_w, &mu, &rt.derive(1u64)) else {
            return Ok(BoostOutput {
                outcome: Outcome::Failure(FailureKind::RejectionExhausted { round: t }),
                rounds: t,
                log,
                measure_in_range: in_range,
            });
        };
        state.push(seeded.execute(&s_w, &rt.derive(2u64))?);
        mu = state.measure();
        in_range &= mu.in_range();
        let mut src = DistSampler::from_tape(d, &dt.derive("measure"));
        let est = indist_test_measure(&mu, &mut src, &rt.derive(3u64), params.rho_prime / third, params.beta_prime / third, params.eps)?;
        let majority = state.majority();
        log.push(RoundLog {
            round: t,
            measure_estimate: est,
            measure_mean: mu.mean(d),
            majority_error: population_loss(&majority, d)?,
        });
        if est <= 2.0 * params.eps / 3.0 {
            return Ok(BoostOutput { outcome: Outcome::Success(majority), rounds: t, log, measure_in_range: in_range });
        }
    }
    Ok(BoostOutput { outcome: Outcome::Failure(FailureKind::RoundLimit), rounds, log, measure_in_range: in_range })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplifyParams {
    /// TV indistinguishability of the input rule.
    pub rho: f64,
    /// Accuracy of the input rule.
    pub alpha: f64,
    pub beta: f64,
    pub rho_prime: f64,
    pub eps: f64,
    pub beta_prime: f64,
}

impl AmplifyParams {
    /// `eta = nu = sqrt(2 rho / (1 + rho))`.
    pub fn eta(&self) -> f64 {
        (2.0 * self.rho / (1.0 + self.rho)).sqrt()
    }

    /// Largest admissible `beta`, `(1 - eta)^2`.
    pub fn beta_bound(&self) -> f64 {
        (1.0 - self.eta()).powi(2)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::param(format!("rho = {} must lie in [0, 1)", self.rho)));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::param(format!("alpha = {} must lie in [0, 1)", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta < self.beta_bound()) {
            return Err(Error::param(format!("beta = {} must lie in [0, {})", self.beta, self.beta_bound())));
        }
        open_unit("rho_prime", self.rho_prime)?;
        open_unit("eps", self.eps)?;
        open_unit("beta_prime", self.beta_prime)
    }

    pub fn rounds(&self) -> usize {
        let eta = self.eta();
        ((3.0 / self.beta_prime).ln() / (1.0 - eta - self.beta / (1.0 - eta))).ceil() as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AmplifyOutput {
    pub hypothesis: Hypothesis,
    /// Round whose candidate was accepted, if any.
    pub round: Option<usize>,
    /// The all-ones classifier was returned.
    pub fallback: bool,
    pub k: usize,
}

/// Amplifies the TV indistinguishability of `rule` by locating, per shared
/// tape, the heavy hitters of the induced output law and selecting one
/// replicably.
pub fn amplify(
    rule: Arc<dyn LearningRule>,
    reference: ReferenceMeasure<Hypothesis>,
    d: &ExampleDistribution,
    params: &AmplifyParams,
    tape: &Tape,
    data: &Tape,
) -> Result<AmplifyOutput> {
    params.validate()?;
    let domain = rule.domain_size();
    let n = rule.sample_size();
    let seeded = derandomize(rule, reference)?;
    let k = params.rounds();
    let eta = params.eta();
    let kf = k as f64;
    let hh = HhParams::new(0.75 * (1.0 - eta), 0.25 * (1.0 - eta), params.beta_prime / (3.0 * kf), params.rho_prime / (2.0 * kf))?;
    for i in 1..=k {
        let ri = tape.child("round", i as u64);
        let di = data.child("round", i as u64);
        let list = match seeded.law_given_tape(d, &ri) {
            Some(law) => {
                let law: FiniteDistribution<Hypothesis> = law?;
                replicable_heavy_hitters(&mut DistSampler::from_tape(&law, &di.derive("law")), &hh, &ri.derive("hh"))?
            }
            None => {
                let mut sampler = DistSampler::from_tape(d, &di.derive("law"));
                let mut failure = None;
                let mut src = FnSource::new(|| {
                    let s = sampler.dataset(n);
                    seeded.execute(&s, &ri).unwrap_or_else(|e| {
                        failure.get_or_insert(e);
                        Hypothesis::constant(domain, true)
                    })
                });
                let out = replicable_heavy_hitters(&mut src, &hh, &ri.derive("hh"))?;
                if let Some(e) = failure {
                    return Err(e);
                }
                out
            }
        };
        if list.items.is_empty() {
            continue;
        }
        let class = HypothesisClass::new(domain, list.items)?;
        let mut src = DistSampler::from_tape(d, &di.derive("agnostic"));
        let out = replicable_agnostic_learner(
            &class,
            &mut src,
            params.eps / 2.0,
            params.beta_prime / (3.0 * kf),
            params.rho_prime / (2.0 * kf),
            &ri.derive("agnostic"),
        )?;
        if out.estimate <= params.alpha + params.eps / 2.0 {
            return Ok(AmplifyOutput { hypothesis: out.hypothesis, round: Some(i), fallback: false, k });
        }
    }
    Ok(AmplifyOutput { hypothesis: Hypothesis::constant(domain, true), round: None, fallback: true, k })
}

/// Seeded view of [`amplify`]: the tape is the shared randomness and the
/// dataset's examples seed the data stream.
pub struct Amplified {
    pub rule: Arc<dyn LearningRule>,
    pub reference: ReferenceMeasure<Hypothesis>,
    pub d: ExampleDistribution,
    pub params: AmplifyParams,
}

impl Amplified {
    pub fn run_with_data(&self, tape: &Tape, data: &Tape) -> Result<AmplifyOutput> {
        amplify(self.rule.clone(), self.reference.clone(), &self.d, &self.params, tape, data)
    }
}

impl SeededLearner for Amplified {
    fn sample_size(&self) -> usize {
        0
    }

    fn run(&self, _s: &Dataset, tape: &Tape) -> Result<Hypothesis> {
        Ok(self.run_with_data(tape, &tape.derive("data"))?.hypothesis)
    }
}
