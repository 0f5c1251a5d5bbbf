//! Synthetic learners with parameters that can be checked by brute force.

use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::dist::FiniteDistribution;
use crate::error::{Error, Result};
use crate::model::{mistakes, Dataset, Example, ExampleDistribution, Hypothesis, HypothesisClass};
use crate::randomness::Tape;
use crate::rule::{binomial_pmf, LearningRule, ListLearner, PosteriorLaw, SeededLearner};
use crate::scalar::Probability;

/// Posterior `(1 - p) h0 + p h1` with `p = scale * ones / n`.
pub fn noisy_constant_posterior<P: Probability>(
    h0: &Hypothesis,
    h1: &Hypothesis,
    scale: P,
    ones: usize,
    n: usize,
) -> Result<FiniteDistribution<Hypothesis, P>> {
    let p = if n == 0 {
        P::zero()
    } else {
        scale * P::from_usize(ones).expect("count") / P::from_usize(n).expect("count")
    };
    FiniteDistribution::from_pairs([(h0.clone(), P::one() - p.clone()), (h1.clone(), p)])
}

/// Mixes two hypotheses with a weight proportional to the share of 1-labels.
#[derive(Clone, Debug)]
pub struct NoisyConstantRule {
    h0: Hypothesis,
    h1: Hypothesis,
    scale: f64,
    n: usize,
    reachable: HypothesisClass,
}

impl NoisyConstantRule {
    pub fn new(h0: Hypothesis, h1: Hypothesis, scale: f64, n: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&scale) {
            return Err(Error::param(format!("scale = {scale} must lie in [0, 1]")));
        }
        if h0.domain_size() != h1.domain_size() {
            return Err(Error::DomainMismatch { expected: h0.domain_size(), got: h1.domain_size() });
        }
        let reachable = HypothesisClass::new(h0.domain_size(), vec![h0.clone(), h1.clone()])?;
        Ok(Self { h0, h1, scale, n, reachable })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn hypotheses(&self) -> (&Hypothesis, &Hypothesis) {
        (&self.h0, &self.h1)
    }
}

impl LearningRule for NoisyConstantRule {
    fn domain_size(&self) -> usize {
        self.h0.domain_size()
    }

    fn sample_size(&self) -> usize {
        self.n
    }

    fn reachable(&self) -> &HypothesisClass {
        &self.reachable
    }

    fn posterior(&self, s: &Dataset) -> Result<FiniteDistribution<Hypothesis>> {
        s.validate(self.domain_size())?;
        noisy_constant_posterior(&self.h0, &self.h1, self.scale, s.count_ones(), s.len())
    }

    /// The share of 1-labels is a sufficient statistic, binomially distributed.
    fn posterior_law(&self, d: &ExampleDistribution) -> Result<Option<PosteriorLaw>> {
        let q: f64 = d.iter().filter(|(e, _)| e.label).map(|(_, m)| *m).sum();
        binomial_pmf(self.n, q)
            .into_iter()
            .enumerate()
            .filter(|(_, w)| *w > 0.0)
            .map(|(k, w)| Ok((w, noisy_constant_posterior(&self.h0, &self.h1, self.scale, k, self.n)?)))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }
}

/// Deterministic empirical risk minimizer over a finite class. Ties go to
/// the lowest class index.
#[derive(Clone, Debug)]
pub struct ErmRule {
    class: HypothesisClass,
    n: usize,
}

impl ErmRule {
    pub fn new(class: HypothesisClass, n: usize) -> Result<Self> {
        if class.is_empty() {
            return Err(Error::Empty("hypothesis class"));
        }
        Ok(Self { class, n })
    }

    pub fn class(&self) -> &HypothesisClass {
        &self.class
    }

    pub fn fit(&self, s: &Dataset) -> Result<Hypothesis> {
        if s.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let mut best = (usize::MAX, 0);
        for (i, h) in self.class.members().iter().enumerate() {
            let m = mistakes(h, s)?;
            if m < best.0 {
                best = (m, i);
            }
        }
        Ok(self.class.members()[best.1].clone())
    }
}

impl LearningRule for ErmRule {
    fn domain_size(&self) -> usize {
        self.class.domain_size()
    }

    fn sample_size(&self) -> usize {
        self.n
    }

    fn reachable(&self) -> &HypothesisClass {
        &self.class
    }

    fn posterior(&self, s: &Dataset) -> Result<FiniteDistribution<Hypothesis>> {
        Ok(FiniteDistribution::point_mass(self.fit(s)?))
    }
}

/// ERM over single-threshold stumps of both polarities.
pub fn make_weak_stump_learner(domain_size: usize, n: usize) -> Result<ErmRule> {
    ErmRule::new(HypothesisClass::stumps(domain_size), n)
}

/// ERM over the upward thresholds `1{x >= c}`.
pub fn make_threshold_erm(domain_size: usize, n: usize) -> Result<ErmRule> {
    let members = (0..=domain_size).map(|c| Hypothesis::threshold(domain_size, c)).collect();
    ErmRule::new(HypothesisClass::new(domain_size, members)?, n)
}

/// Smallest weighted error any member of `class` attains under weights on
/// labeled examples, the weights normalized to total one.
pub fn best_weighted_error(class: &HypothesisClass, weights: &[(Example, f64)]) -> Result<f64> {
    let total: f64 = weights.iter().map(|w| w.1).sum();
    if total <= 0.0 {
        return Err(Error::Empty("weighted sample"));
    }
    let mut best = f64::INFINITY;
    for h in class.members() {
        let mut err = 0.0;
        for (e, w) in weights {
            if h.predicts(e)? != e.label {
                err += w;
            }
        }
        best = best.min(err / total);
    }
    Ok(best)
}

/// Outputs the target with probability `eta` over its tape, otherwise a
/// tape-uniform decoy. The sample is only validated.
#[derive(Clone, Debug)]
pub struct GloballyStableFixture {
    target: Hypothesis,
    decoys: Vec<Hypothesis>,
    eta: f64,
    n: usize,
}

impl GloballyStableFixture {
    pub fn new(target: Hypothesis, decoys: Vec<Hypothesis>, eta: f64, n: usize) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::param(format!("eta = {eta} must lie in (0, 1]")));
        }
        if eta < 1.0 && decoys.is_empty() {
            return Err(Error::Empty("decoy set"));
        }
        if decoys.contains(&target) {
            return Err(Error::param("decoys must differ from the target"));
        }
        Ok(Self { target, decoys, eta, n })
    }

    pub fn target(&self) -> &Hypothesis {
        &self.target
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    fn law(&self) -> Result<FiniteDistribution<Hypothesis>> {
        let k = self.decoys.len().max(1) as f64;
        let rest = self.decoys.iter().map(|h| (h.clone(), (1.0 - self.eta) / k));
        FiniteDistribution::from_pairs(std::iter::once((self.target.clone(), self.eta)).chain(rest))
    }
}

impl SeededLearner for GloballyStableFixture {
    fn sample_size(&self) -> usize {
        self.n
    }

    fn run(&self, s: &Dataset, tape: &Tape) -> Result<Hypothesis> {
        s.validate(self.target.domain_size())?;
        let u: f64 = tape.derive("globally-stable").rng().random();
        if u < self.eta {
            return Ok(self.target.clone());
        }
        let i = (((u - self.eta) / (1.0 - self.eta)) * self.decoys.len() as f64) as usize;
        Ok(self.decoys[i.min(self.decoys.len() - 1)].clone())
    }

    fn posterior(&self, _s: &Dataset) -> Option<Result<FiniteDistribution<Hypothesis>>> {
        Some(self.law())
    }

    fn law_given_tape(&self, _d: &ExampleDistribution, tape: &Tape) -> Option<Result<FiniteDistribution<Hypothesis>>> {
        Some(self.run(&Dataset::default(), tape).map(FiniteDistribution::point_mass))
    }

    fn induced_law(&self, _d: &ExampleDistribution) -> Option<Result<FiniteDistribution<Hypothesis>>> {
        Some(self.law())
    }
}

/// Picks one of two hypotheses from randomness keyed by both the tape and
/// the sample, so shared tapes do not correlate runs on different samples.
#[derive(Clone, Debug)]
pub struct UncoupledPick {
    a: Hypothesis,
    b: Hypothesis,
    n: usize,
}

impl UncoupledPick {
    pub fn new(a: Hypothesis, b: Hypothesis, n: usize) -> Self {
        Self { a, b, n }
    }
}

fn dataset_key(s: &Dataset) -> u64 {
    // FNV-1a over the example stream.
    let mut h: u64 = 0xcbf29ce484222325;
    for e in s.examples() {
        for byte in e.point.to_le_bytes().into_iter().chain([e.label as u8]) {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

impl SeededLearner for UncoupledPick {
    fn sample_size(&self) -> usize {
        self.n
    }

    fn run(&self, s: &Dataset, tape: &Tape) -> Result<Hypothesis> {
        let bit = tape.child("uncoupled", dataset_key(s)).rng().random::<bool>();
        Ok(if bit { self.b.clone() } else { self.a.clone() })
    }

    fn posterior(&self, _s: &Dataset) -> Option<Result<FiniteDistribution<Hypothesis>>> {
        Some(FiniteDistribution::uniform([self.a.clone(), self.b.clone()]))
    }
}

/// Returns a list holding the target with probability `eta`, padded to the
/// maximum length with decoys chosen by the number of 1-labels in the sample.
#[derive(Clone, Debug)]
pub struct ListGlobalFixture {
    target: Hypothesis,
    pool: Vec<Hypothesis>,
    eta: f64,
    max_len: usize,
    m: usize,
}

impl ListGlobalFixture {
    pub fn new(target: Hypothesis, pool: Vec<Hypothesis>, eta: f64, max_len: usize, m: usize) -> Result<Self> {
        if max_len == 0 {
            return Err(Error::param("list length must be positive"));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::param(format!("eta = {eta} must lie in (0, 1]")));
        }
        if pool.contains(&target) {
            return Err(Error::param("decoys must differ from the target"));
        }
        Ok(Self { target, pool, eta, max_len, m })
    }

    /// Decoys that agree with `target` on `support` and differ elsewhere, so
    /// their error equals the target's under any law carried by `support`.
    pub fn silent_decoys(target: &Hypothesis, support: &[u32], count: usize) -> Result<Vec<Hypothesis>> {
        let free: Vec<usize> = (0..target.domain_size()).filter(|x| !support.contains(&(*x as u32))).collect();
        if free.len() < 64 && count as u64 >= 1u64 << free.len() {
            return Err(Error::param(format!("only {} off-support points for {count} decoys", free.len())));
        }
        Ok((1..=count as u64)
            .map(|mask| {
                let mut h = target.clone();
                for (bit, &x) in free.iter().enumerate() {
                    if mask >> bit & 1 == 1 {
                        h = h.flipped_at(x);
                    }
                }
                h
            })
            .collect())
    }

    pub fn target(&self) -> &Hypothesis {
        &self.target
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    fn list_for(&self, ones: usize, include: bool) -> Vec<Hypothesis> {
        let mut out = Vec::with_capacity(self.max_len);
        if include {
            out.push(self.target.clone());
        }
        let slots = (self.max_len - include as usize).min(self.pool.len());
        for i in 0..slots {
            out.push(self.pool[(ones + i) % self.pool.len()].clone());
        }
        out.sort();
        out
    }
}

impl ListLearner for ListGlobalFixture {
    fn sample_size(&self) -> usize {
        self.m
    }

    fn max_len(&self) -> usize {
        self.max_len
    }

    fn run(&self, s: &Dataset, rng: &mut dyn RngCore) -> Result<Vec<Hypothesis>> {
        s.validate(self.target.domain_size())?;
        let include = rng.random::<f64>() < self.eta;
        Ok(self.list_for(s.count_ones(), include))
    }

    fn list_law(&self, d: &ExampleDistribution) -> Option<Result<FiniteDistribution<Vec<Hypothesis>>>> {
        let q: f64 = d.iter().filter(|(e, _)| e.label).map(|(_, m)| *m).sum();
        let pairs = binomial_pmf(self.m, q).into_iter().enumerate().flat_map(|(k, w)| {
            [(self.list_for(k, true), w * self.eta), (self.list_for(k, false), w * (1.0 - self.eta))]
        });
        Some(FiniteDistribution::from_pairs(pairs.filter(|p| p.1 > 0.0)))
    }
}

/// Example law: points uniform on `support` (all points when absent), each
/// labeled by `target` and flipped with probability `noise`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub target: Hypothesis,
    #[serde(default)]
    pub support: Option<Vec<u32>>,
    #[serde(default)]
    pub noise: f64,
}

impl DataSpec {
    pub fn realizable(target: Hypothesis) -> Self {
        Self { target, support: None, noise: 0.0 }
    }

    pub fn domain_size(&self) -> usize {
        self.target.domain_size()
    }

    pub fn build(&self) -> Result<ExampleDistribution> {
        if !(0.0..=0.5).contains(&self.noise) {
            return Err(Error::param(format!("noise = {} must lie in [0, 1/2]", self.noise)));
        }
        let points: Vec<u32> = match &self.support {
            Some(s) => s.clone(),
            None => (0..self.domain_size() as u32).collect(),
        };
        if points.is_empty() {
            return Err(Error::Empty("data support"));
        }
        if let Some(&x) = points.iter().find(|&&x| x as usize >= self.domain_size()) {
            return Err(Error::DomainMismatch { expected: self.domain_size(), got: x as usize + 1 });
        }
        let w = 1.0 / points.len() as f64;
        let pairs = points.iter().flat_map(|&x| {
            let y = self.target.label(x as usize);
            [(Example::new(x, y), w * (1.0 - self.noise)), (Example::new(x, !y), w * self.noise)]
        });
        FiniteDistribution::from_pairs(pairs.filter(|p| p.1 > 0.0))
    }
}

/// Serializable description of any fixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FixtureSpec {
    NoisyConstant {
        h0: Hypothesis,
        h1: Hypothesis,
        scale: f64,
        n: usize,
    },
    GloballyStable {
        target: Hypothesis,
        decoys: Vec<Hypothesis>,
        eta: f64,
        n: usize,
    },
    ListGloballyStable {
        target: Hypothesis,
        support: Vec<u32>,
        pool: usize,
        max_len: usize,
        eta: f64,
        m: usize,
    },
    WeakStump {
        domain_size: usize,
        n: usize,
    },
    DeterministicErm {
        domain_size: usize,
        n: usize,
    },
}

/// A constructed fixture in whichever view it naturally offers.
#[derive(Clone)]
pub enum Fixture {
    Rule(Arc<dyn LearningRule>),
    Seeded(Arc<dyn SeededLearner>),
    List(Arc<dyn ListLearner>),
}

impl FixtureSpec {
    pub fn build(&self) -> Result<Fixture> {
        Ok(match self {
            FixtureSpec::NoisyConstant { h0, h1, scale, n } => {
                Fixture::Rule(Arc::new(NoisyConstantRule::new(h0.clone(), h1.clone(), *scale, *n)?))
            }
            FixtureSpec::GloballyStable { target, decoys, eta, n } => {
                Fixture::Seeded(Arc::new(GloballyStableFixture::new(target.clone(), decoys.clone(), *eta, *n)?))
            }
            FixtureSpec::ListGloballyStable { target, support, pool, max_len, eta, m } => {
                let decoys = ListGlobalFixture::silent_decoys(target, support, *pool)?;
                Fixture::List(Arc::new(ListGlobalFixture::new(target.clone(), decoys, *eta, *max_len, *m)?))
            }
            FixtureSpec::WeakStump { domain_size, n } => Fixture::Rule(Arc::new(make_weak_stump_learner(*domain_size, *n)?)),
            FixtureSpec::DeterministicErm { domain_size, n } => {
                Fixture::Rule(Arc::new(make_threshold_erm(*domain_size, *n)?))
            }
        })
    }
}
