//! Monte Carlo and exact measurement of the stability notions.
//!
//! Every estimate carries a 3-sigma half-width. Trials run in parallel over
//! tapes derived from the caller's tape, so results depend only on the tape.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::ReferenceMeasure;
use crate::dist::{posterior_mixture, tv_distance, FiniteDistribution};
use crate::error::{Error, Result};
use crate::model::{empirical_loss, population_loss, Dataset, ExampleDistribution, Hypothesis};
use crate::randomness::{Seed, Tape};
use crate::rule::{LearningRule, SeededLearner};
use crate::sampling::DistSampler;
use crate::scalar::Probability;
use crate::transforms::derandomize;

/// Largest number of posterior atoms for which pairwise sums are exact.
pub const EXACT_ATOM_LIMIT: usize = 1000;

/// Smallest trial count for paired-run estimates.
pub const MIN_TRIALS: usize = 100;

/// A measured quantity with a 3-sigma half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub ci: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, ci: 0.0 }
    }

    pub fn proportion(hits: usize, trials: usize) -> Self {
        let p = hits as f64 / trials as f64;
        Estimate { value: p, ci: 3.0 * (p * (1.0 - p) / trials as f64).sqrt() }
    }

    pub fn mean(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let m = samples.iter().sum::<f64>() / n;
        let var = if samples.len() > 1 {
            samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Estimate { value: m, ci: 3.0 * (var / n).sqrt() }
    }

    pub fn complement(self) -> Self {
        Estimate { value: 1.0 - self.value, ci: self.ci }
    }

    pub fn upper(&self) -> f64 {
        self.value + self.ci
    }

    pub fn lower(&self) -> f64 {
        self.value - self.ci
    }
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(Error::param(format!("trials = {trials} must be at least {MIN_TRIALS}")));
    }
    Ok(())
}

fn draw(d: &ExampleDistribution, n: usize, tape: &Tape) -> Dataset {
    DistSampler::from_tape(d, tape).dataset(n)
}

/// Fraction of paired runs on fresh `S, S'` with a shared tape whose outputs
/// are equal.
pub fn replicability_rate(a: &dyn SeededLearner, d: &ExampleDistribution, trials: usize, tape: &Tape) -> Result<Estimate> {
    check_trials(trials)?;
    let n = a.sample_size();
    let hits = (0..trials)
        .into_par_iter()
        .map(|i| {
            let t = tape.derive(i as u64);
            let shared = t.derive("shared");
            let x = a.run(&draw(d, n, &t.derive("s1")), &shared)?;
            let y = a.run(&draw(d, n, &t.derive("s2")), &shared)?;
            Ok(x == y)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(Estimate::proportion(hits.into_iter().filter(|&b| b).count(), trials))
}

/// Exact pairwise quantities of a weighted family of posteriors.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactStability<T, P> {
    pub prior: FiniteDistribution<T, P>,
    pub expected_tv: P,
    pub fixed_prior_tv: P,
}

impl<T, P: Probability> ExactStability<T, P> {
    /// `fixed <= expected <= 2 fixed`, with no tolerance.
    pub fn sandwich_holds(&self) -> bool {
        self.fixed_prior_tv <= self.expected_tv
            && self.expected_tv <= self.fixed_prior_tv.clone() + self.fixed_prior_tv.clone()
    }
}

/// Expected pairwise TV, the mean posterior, and the expected TV to it.
///
/// The weights need not be normalized; they are divided by their sum.
pub fn exact_stability<T: Ord + Clone, P: Probability>(law: &[(P, FiniteDistribution<T, P>)]) -> Result<ExactStability<T, P>> {
    if law.is_empty() {
        return Err(Error::Empty("posterior law"));
    }
    let total = law.iter().fold(P::zero(), |acc, (w, _)| acc + w.clone());
    if total <= P::zero() {
        return Err(Error::param("posterior law has no mass"));
    }
    let w: Vec<P> = law.iter().map(|(x, _)| x.clone() / total.clone()).collect();
    let posts: Vec<FiniteDistribution<T, P>> = law.iter().map(|(_, p)| p.clone()).collect();
    let prior = posterior_mixture(&posts, &w)?;
    let mut expected = P::zero();
    let mut fixed = P::zero();
    for (i, p) in posts.iter().enumerate() {
        fixed = fixed + w[i].clone() * tv_distance(p, &prior);
        for (j, q) in posts.iter().enumerate().skip(i + 1) {
            let t = tv_distance(p, q);
            expected = expected + (P::one() + P::one()) * w[i].clone() * w[j].clone() * t;
        }
    }
    Ok(ExactStability { prior, expected_tv: expected, fixed_prior_tv: fixed })
}

/// `Pr[d(A(S), prior) > eta]` and the implied fixed-prior bound
/// `eta + nu - eta nu`, exact over the law.
pub fn high_probability_certificate<T: Ord + Clone, P: Probability>(
    law: &[(P, FiniteDistribution<T, P>)],
    prior: &FiniteDistribution<T, P>,
    eta: P,
) -> (P, P) {
    let total = law.iter().fold(P::zero(), |acc, (w, _)| acc + w.clone());
    let nu = law
        .iter()
        .filter(|(_, p)| tv_distance(p, prior) > eta)
        .fold(P::zero(), |acc, (w, _)| acc + w.clone())
        / total;
    let bound = eta.clone() + nu.clone() - eta * nu.clone();
    (nu, bound)
}

/// `Pr[d(A(S), prior) >= t]`, exact over the law.
pub fn tail_mass<T: Ord + Clone, P: Probability>(
    law: &[(P, FiniteDistribution<T, P>)],
    prior: &FiniteDistribution<T, P>,
    t: P,
) -> P {
    let total = law.iter().fold(P::zero(), |acc, (w, _)| acc + w.clone());
    law.iter()
        .filter(|(_, p)| tv_distance(p, prior) >= t)
        .fold(P::zero(), |acc, (w, _)| acc + w.clone())
        / total
}

/// Weighted posteriors, one per dataset.
type Law = Vec<(f64, FiniteDistribution<Hypothesis>)>;

fn exact_law(rule: &dyn LearningRule, d: &ExampleDistribution) -> Result<Option<Law>> {
    Ok(rule.posterior_law(d)?.filter(|law| law.len() <= EXACT_ATOM_LIMIT))
}

/// `E d_TV(A(S), A(S'))` over independent samples; exact when the posterior
/// law is small enough.
pub fn expected_tv_indistinguishability(
    rule: &dyn LearningRule,
    d: &ExampleDistribution,
    trials: usize,
    tape: &Tape,
) -> Result<Estimate> {
    if let Some(law) = exact_law(rule, d)? {
        return Ok(Estimate::exact(exact_stability(&law)?.expected_tv));
    }
    monte_carlo_expected_tv(rule, d, trials, tape)
}

/// Monte Carlo estimate regardless of the law's size.
pub fn monte_carlo_expected_tv(rule: &dyn LearningRule, d: &ExampleDistribution, trials: usize, tape: &Tape) -> Result<Estimate> {
    check_trials(trials)?;
    let n = rule.sample_size();
    let tvs = (0..trials)
        .into_par_iter()
        .map(|i| {
            let t = tape.derive(i as u64);
            let p = rule.posterior(&draw(d, n, &t.derive("s1")))?;
            let q = rule.posterior(&draw(d, n, &t.derive("s2")))?;
            Ok(tv_distance(&p, &q))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Estimate::mean(&tvs))
}

/// Expected TV between the output laws of a seeded learner on independent
/// samples, or `None` when the learner exposes no posterior.
pub fn seeded_expected_tv(a: &dyn SeededLearner, d: &ExampleDistribution, trials: usize, tape: &Tape) -> Result<Option<Estimate>> {
    check_trials(trials)?;
    let n = a.sample_size();
    if a.posterior(&draw(d, n, &tape.derive("probe"))).is_none() {
        return Ok(None);
    }
    let tvs = (0..trials)
        .into_par_iter()
        .map(|i| {
            let t = tape.derive(i as u64);
            let p = a.posterior(&draw(d, n, &t.derive("s1"))).expect("posterior exposed")?;
            let q = a.posterior(&draw(d, n, &t.derive("s2"))).expect("posterior exposed")?;
            Ok(tv_distance(&p, &q))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Some(Estimate::mean(&tvs)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPrior {
    pub prior: FiniteDistribution<Hypothesis>,
    pub fixed_prior_tv: Estimate,
    /// Pairwise TV over the same samples the prior was built from.
    pub expected_tv: Estimate,
    pub exact: bool,
    pub sandwich_holds: bool,
}

/// Mean posterior as the prior and the expected TV to it.
///
/// In Monte Carlo mode both TV quantities are V-statistics over one set of
/// sampled posteriors, so the sandwich holds for the sample exactly.
pub fn fixed_prior_tv(rule: &dyn LearningRule, d: &ExampleDistribution, trials: usize, tape: &Tape) -> Result<FixedPrior> {
    if let Some(law) = exact_law(rule, d)? {
        let ex = exact_stability(&law)?;
        let holds = ex.fixed_prior_tv <= ex.expected_tv + 1e-12 && ex.expected_tv <= 2.0 * ex.fixed_prior_tv + 1e-12;
        return Ok(FixedPrior {
            prior: ex.prior,
            fixed_prior_tv: Estimate::exact(ex.fixed_prior_tv),
            expected_tv: Estimate::exact(ex.expected_tv),
            exact: true,
            sandwich_holds: holds,
        });
    }
    check_trials(trials)?;
    let n = rule.sample_size();
    let posts = (0..trials)
        .into_par_iter()
        .map(|i| rule.posterior(&draw(d, n, &tape.derive(i as u64))))
        .collect::<Result<Vec<_>>>()?;
    let prior = posterior_mixture(&posts, &vec![1.0 / trials as f64; trials])?;
    let to_prior: Vec<f64> = posts.iter().map(|p| tv_distance(p, &prior)).collect();
    let rows: Vec<f64> = posts
        .par_iter()
        .map(|p| posts.iter().map(|q| tv_distance(p, q)).sum::<f64>() / trials as f64)
        .collect();
    let fixed = Estimate::mean(&to_prior);
    let expected = Estimate::mean(&rows);
    let holds = fixed.value <= expected.value + 1e-12 && expected.value <= 2.0 * fixed.value + 1e-12;
    Ok(FixedPrior { prior, fixed_prior_tv: fixed, expected_tv: expected, exact: false, sandwich_holds: holds })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalStability {
    pub hypothesis: Hypothesis,
    /// Frequency of the modal output.
    pub frequency: Estimate,
    /// Probability that two independent runs agree.
    pub collision: Estimate,
    /// `frequency >= collision`; the modal mass bounds the collision
    /// probability from above.
    pub holds: bool,
}

/// Modal output over fresh samples and fresh tapes.
pub fn global_stability_parameter(a: &dyn SeededLearner, d: &ExampleDistribution, trials: usize, tape: &Tape) -> Result<GlobalStability> {
    check_trials(trials)?;
    let n = a.sample_size();
    let outs = (0..trials)
        .into_par_iter()
        .map(|i| {
            let t = tape.derive(i as u64);
            a.run(&draw(d, n, &t.derive("s")), &t.derive("coins"))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut counts: BTreeMap<Hypothesis, usize> = BTreeMap::new();
    for h in outs {
        *counts.entry(h).or_default() += 1;
    }
    let (mode, top) = counts.iter().fold((None, 0), |(m, c), (h, &k)| if k > c { (Some(h), k) } else { (m, c) });
    let hypothesis = mode.expect("at least one trial").clone();
    let pairs = (trials * (trials - 1)) as f64;
    let coll = counts.values().map(|&c| (c * c.saturating_sub(1)) as f64).sum::<f64>() / pairs;
    let frequency = Estimate::proportion(top, trials);
    let collision = Estimate { value: coll, ci: 3.0 * (coll * (1.0 - coll) / (trials / 2) as f64).sqrt() };
    Ok(GlobalStability { hypothesis, frequency, collision, holds: frequency.value >= collision.value })
}

/// `sqrt(ln(2/delta)/(2n)) + sqrt(rho)`.
pub fn generalization_bound(n: usize, delta: f64, rho: f64) -> f64 {
    ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt() + rho.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationCheck {
    pub bound: f64,
    pub exceedance: Estimate,
    /// `delta + 4 sqrt(rho)`.
    pub allowed: f64,
    pub pass: bool,
}

/// Rate at which the posterior-averaged generalization gap exceeds the bound.
pub fn generalization_gap_check(
    rule: &dyn LearningRule,
    d: &ExampleDistribution,
    delta: f64,
    rho: f64,
    trials: usize,
    tape: &Tape,
) -> Result<GeneralizationCheck> {
    check_trials(trials)?;
    crate::error::open_unit("delta", delta)?;
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::param(format!("rho = {rho} must lie in [0, 1)")));
    }
    let n = rule.sample_size();
    let bound = generalization_bound(n, delta, rho);
    let exceed = (0..trials)
        .into_par_iter()
        .map(|i| {
            let s = draw(d, n, &tape.derive(i as u64));
            let post = rule.posterior(&s)?;
            let mut gap = 0.0;
            for (h, &m) in post.iter() {
                gap += m * (population_loss(h, d)? - empirical_loss(h, &s)?);
            }
            Ok(gap.abs() > bound)
        })
        .collect::<Result<Vec<bool>>>()?;
    let exceedance = Estimate::proportion(exceed.into_iter().filter(|&b| b).count(), trials);
    let allowed = delta + 4.0 * rho.sqrt();
    Ok(GeneralizationCheck { bound, exceedance, allowed, pass: exceedance.value <= allowed + exceedance.ci })
}

/// Mean population loss of the output and the rate at which it exceeds `alpha`.
pub fn accuracy(a: &dyn SeededLearner, d: &ExampleDistribution, alpha: f64, trials: usize, tape: &Tape) -> Result<(Estimate, Estimate)> {
    check_trials(trials)?;
    let n = a.sample_size();
    let losses = (0..trials)
        .into_par_iter()
        .map(|i| {
            let t = tape.derive(i as u64);
            population_loss(&a.run(&draw(d, n, &t.derive("s")), &t.derive("coins"))?, d)
        })
        .collect::<Result<Vec<f64>>>()?;
    let bad = losses.iter().filter(|&&l| l > alpha).count();
    Ok((Estimate::mean(&losses), Estimate::proportion(bad, trials)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub replicability_rate: Estimate,
    pub expected_tv: Estimate,
    pub fixed_prior_tv: Estimate,
    pub alpha_hat: Estimate,
    pub beta_hat: Estimate,
    pub alpha: f64,
    pub exact: bool,
    pub trials: usize,
    pub seed: Seed,
    /// Measured expected TV is within the replicability disagreement.
    pub repl_implies_tv: bool,
    pub sandwich_holds: bool,
}

/// Every measured quantity of `rule` on `d`, executing it through the
/// coupling with `reference` for the paired-run and accuracy measurements.
pub fn audit(
    rule: Arc<dyn LearningRule>,
    reference: ReferenceMeasure<Hypothesis>,
    d: &ExampleDistribution,
    alpha: f64,
    trials: usize,
    seed: Seed,
) -> Result<StabilityReport> {
    let tape = Tape::new(seed);
    let seeded = derandomize(rule.clone(), reference)?;
    let rate = replicability_rate(&seeded, d, trials, &tape.derive("replicability"))?;
    let tv = expected_tv_indistinguishability(rule.as_ref(), d, trials, &tape.derive("tv"))?;
    let fp = fixed_prior_tv(rule.as_ref(), d, trials, &tape.derive("fixed-prior"))?;
    let (alpha_hat, beta_hat) = accuracy(&seeded, d, alpha, trials, &tape.derive("accuracy"))?;
    let disagreement = rate.complement();
    Ok(StabilityReport {
        replicability_rate: rate,
        expected_tv: tv,
        fixed_prior_tv: fp.fixed_prior_tv,
        alpha_hat,
        beta_hat,
        alpha,
        exact: fp.exact,
        trials,
        seed,
        repl_implies_tv: tv.value <= disagreement.upper() + tv.ci,
        sandwich_holds: fp.sandwich_holds,
    })
}
