//! Transformations between stability notions: coupling-based
//! derandomization, global stability to replicability, list-global stability
//! to TV indistinguishability, and TV indistinguishability to differential
//! privacy.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{density, Coupler, ReferenceMeasure};
use crate::dist::FiniteDistribution;
use crate::dp::{exp_mechanism_learner, exp_mechanism_required_n, stable_histogram, stable_histogram_required_n, DpParams};
use crate::error::{open_unit, Error, Result};
use crate::metrics::{Estimate, expected_tv_indistinguishability, replicability_rate};
use crate::model::{Dataset, Example, ExampleDistribution, Hypothesis, HypothesisClass};
use crate::randomness::Tape;
use crate::replicable::{replicable_agnostic_learner, replicable_heavy_hitters, HhParams};
use crate::rule::{LearningRule, ListLearner, SeededLearner};
use crate::sampling::{DistSampler, FnSource, Source};

/// Either a value or an algorithmic failure the analysis charges to the
/// confidence budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome<T> {
    Success(T),
    Failure(FailureKind),
}

impl<T> Outcome<T> {
    pub fn success(&self) -> Option<&T> {
        match self {
            Outcome::Success(t) => Some(t),
            Outcome::Failure(_) => None,
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Success(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    EmptyHeavyHitters,
    EmptyPrunedList,
    RejectionExhausted { round: usize },
    RoundLimit,
}

/// A learning rule executed through the shared-process coupling.
#[derive(Clone)]
pub struct Derandomized {
    rule: Arc<dyn LearningRule>,
    reference: ReferenceMeasure<Hypothesis>,
}

/// Wraps `rule` so that each tape selects one hypothesis per dataset, with
/// the marginal over tapes equal to the rule's posterior.
pub fn derandomize(rule: Arc<dyn LearningRule>, reference: ReferenceMeasure<Hypothesis>) -> Result<Derandomized> {
    for h in rule.reachable().members() {
        if reference.dist().mass_of(h) <= 0.0 {
            return Err(Error::AbsoluteContinuity { mass: 1.0 / rule.reachable().len() as f64 });
        }
    }
    Ok(Derandomized { rule, reference })
}

impl Derandomized {
    pub fn rule(&self) -> &Arc<dyn LearningRule> {
        &self.rule
    }

    pub fn reference(&self) -> &ReferenceMeasure<Hypothesis> {
        &self.reference
    }

    pub fn coupler(&self, tape: &Tape) -> Coupler<'_, Hypothesis> {
        Coupler::new(&self.reference, tape.derive("coupling"))
    }

    pub fn execute(&self, s: &Dataset, tape: &Tape) -> Result<Hypothesis> {
        self.coupler(tape).sample(&self.rule.posterior(s)?)
    }
}

impl SeededLearner for Derandomized {
    fn sample_size(&self) -> usize {
        self.rule.sample_size()
    }

    fn run(&self, s: &Dataset, tape: &Tape) -> Result<Hypothesis> {
        self.execute(s, tape)
    }

    fn posterior(&self, s: &Dataset) -> Option<Result<FiniteDistribution<Hypothesis>>> {
        Some(self.rule.posterior(s))
    }

    fn law_given_tape(&self, d: &ExampleDistribution, tape: &Tape) -> Option<Result<FiniteDistribution<Hypothesis>>> {
        let law = match self.rule.posterior_law(d) {
            Ok(Some(law)) => law,
            Ok(None) => return None,
            Err(e) => return Some(Err(e)),
        };
        let coupler = self.coupler(tape);
        let atoms = law
            .iter()
            .map(|(w, post)| Ok((coupler.sample(post)?, *w)))
            .collect::<Result<Vec<_>>>();
        Some(atoms.and_then(FiniteDistribution::from_pairs))
    }

    fn induced_law(&self, d: &ExampleDistribution) -> Option<Result<FiniteDistribution<Hypothesis>>> {
        let law = match self.rule.posterior_law(d) {
            Ok(Some(law)) => law,
            Ok(None) => return None,
            Err(e) => return Some(Err(e)),
        };
        let pairs = law.iter().flat_map(|(w, post)| post.iter().map(move |(h, m)| (h.clone(), w * m)));
        Some(FiniteDistribution::from_pairs(pairs))
    }
}

/// Measured replicability disagreement and expected TV of a derandomized rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplVsTv {
    pub disagreement: Estimate,
    pub expected_tv: Estimate,
    /// `expected_tv <= disagreement + 3 sigma`.
    pub holds: bool,
}

pub fn verify_repl_implies_tv(a: &Derandomized, d: &ExampleDistribution, trials: usize, tape: &Tape) -> Result<ReplVsTv> {
    if trials < 100 {
        return Err(Error::param(format!("trials = {trials} must be at least 100")));
    }
    let agree = replicability_rate(a, d, trials, &tape.derive("replicability"))?;
    let disagreement = agree.complement();
    let expected_tv = expected_tv_indistinguishability(a.rule().as_ref(), d, trials, &tape.derive("tv"))?;
    let holds = expected_tv.value <= disagreement.value + disagreement.ci + expected_tv.ci;
    Ok(ReplVsTv { disagreement, expected_tv, holds })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalToReplParams {
    /// Global stability level of the black box.
    pub rho_gs: f64,
    pub alpha_prime: f64,
    pub beta_prime: f64,
    pub rho_prime: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalToReplOutput {
    pub outcome: Outcome<Hypothesis>,
    pub heavy_hitters: Vec<Hypothesis>,
    pub estimate: Option<f64>,
}

/// Heavy hitters of the induced hypothesis law, then the replicable agnostic
/// learner on the resulting list.
///
/// `data` drives every draw from `d` and the black box's private coins;
/// `tape` is the shared randomness.
pub fn global_to_replicable(
    a: &dyn SeededLearner,
    d: &ExampleDistribution,
    params: &GlobalToReplParams,
    tape: &Tape,
    data: &Tape,
) -> Result<GlobalToReplOutput> {
    open_unit("rho_gs", params.rho_gs).or_else(|e| if params.rho_gs == 1.0 { Ok(()) } else { Err(e) })?;
    open_unit("alpha_prime", params.alpha_prime)?;
    open_unit("beta_prime", params.beta_prime)?;
    open_unit("rho_prime", params.rho_prime)?;
    let hh = HhParams::new(params.rho_gs / 2.0, params.rho_gs / 4.0, params.beta_prime / 2.0, params.rho_prime / 4.0)?;
    let hh_tape = tape.derive("heavy-hitters");
    let list = match a.induced_law(d) {
        Some(law) => {
            let law = law?;
            replicable_heavy_hitters(&mut DistSampler::from_tape(&law, &data.derive("induced")), &hh, &hh_tape)?
        }
        None => {
            let mut rng = data.derive("black-box").rng();
            let mut failure = None;
            let mut src = FnSource::new(|| {
                let s: Dataset = (0..a.sample_size()).map(|_| *d.sample(&mut rng)).collect();
                let private = Tape::from_u128(rng.random());
                a.run(&s, &private).unwrap_or_else(|e| {
                    failure.get_or_insert(e);
                    Hypothesis::new(vec![])
                })
            });
            let out = replicable_heavy_hitters(&mut src, &hh, &hh_tape)?;
            if let Some(e) = failure {
                return Err(e);
            }
            out
        }
    };
    if list.items.is_empty() {
        return Ok(GlobalToReplOutput { outcome: Outcome::Failure(FailureKind::EmptyHeavyHitters), heavy_hitters: vec![], estimate: None });
    }
    let class = HypothesisClass::new(d_domain(&list.items), list.items.clone())?;
    let mut src = DistSampler::from_tape(d, &data.derive("agnostic"));
    let out = replicable_agnostic_learner(
        &class,
        &mut src,
        params.alpha_prime,
        params.beta_prime / 2.0,
        params.rho_prime / 2.0,
        &tape.derive("agnostic"),
    )?;
    Ok(GlobalToReplOutput {
        outcome: Outcome::Success(out.hypothesis),
        heavy_hitters: list.items,
        estimate: Some(out.estimate),
    })
}

fn d_domain(items: &[Hypothesis]) -> usize {
    items.first().map_or(0, |h| h.domain_size())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ListGlobalParams {
    pub eta: f64,
    pub rho: f64,
    pub alpha: f64,
    pub beta: f64,
    pub max_len: usize,
    #[serde(default = "default_constant_scale")]
    pub constant_scale: f64,
}

fn default_constant_scale() -> f64 {
    1e6
}

impl ListGlobalParams {
    pub fn validate(&self) -> Result<()> {
        open_unit("eta", self.eta).or_else(|e| if self.eta == 1.0 { Ok(()) } else { Err(e) })?;
        open_unit("rho", self.rho)?;
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::param(format!("alpha = {} must lie in [0, 1)", self.alpha)));
        }
        open_unit("beta", self.beta)?;
        if self.max_len == 0 {
            return Err(Error::param("list length must be positive"));
        }
        if self.constant_scale.is_nan() || self.constant_scale <= 0.0 {
            return Err(Error::param("constant scale must be positive"));
        }
        Ok(())
    }

    pub fn tau(&self) -> f64 {
        0.5 * self.eta
    }

    fn log_term(&self) -> f64 {
        (self.max_len as f64 / (self.rho * self.tau())).ln()
    }

    pub fn gamma(&self) -> f64 {
        self.constant_scale * self.log_term() / self.tau()
    }

    pub fn k1(&self) -> u64 {
        (self.constant_scale * self.log_term() / (self.tau() * self.tau())).ceil() as u64
    }

    pub fn k2(&self) -> u64 {
        (self.constant_scale * self.gamma().powi(2) * self.log_term() / (self.rho * self.rho)).ceil() as u64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ListGlobalOutput {
    /// Exponential-weights law over the frequent hypotheses.
    pub posterior: FiniteDistribution<Hypothesis>,
    pub frequent: Vec<Hypothesis>,
    pub k1: u64,
    pub k2: u64,
}

/// Builds the exponential-weights posterior from `k1` discovery runs and
/// `k2` scoring runs of the list learner. All randomness comes from `data`.
pub fn listglobal_to_tv(
    a: &dyn ListLearner,
    d: &ExampleDistribution,
    params: &ListGlobalParams,
    data: &Tape,
) -> Result<ListGlobalOutput> {
    params.validate()?;
    let (k1, k2) = (params.k1(), params.k2());
    let mut rng = data.derive("discovery").rng();
    let mut seen: BTreeMap<Hypothesis, u64> = BTreeMap::new();
    for _ in 0..k1 {
        let s: Dataset = (0..a.sample_size()).map(|_| *d.sample(&mut rng)).collect();
        let list = a.run(&s, &mut rng)?;
        if list.len() > a.max_len() {
            return Err(Error::Internal(format!("list of {} exceeds {}", list.len(), a.max_len())));
        }
        let mut list = list;
        list.sort();
        list.dedup();
        for h in list {
            *seen.entry(h).or_default() += 1;
        }
    }
    let cut = params.tau() * k1 as f64;
    let frequent: Vec<Hypothesis> = seen.into_iter().filter(|(_, c)| *c as f64 >= cut).map(|(h, _)| h).collect();
    if frequent.is_empty() {
        return Err(Error::Empty("frequent hypothesis set"));
    }
    let lists: Vec<(Vec<Hypothesis>, u64)> = match a.list_law(d) {
        Some(law) => DistSampler::from_tape(&law?, &data.derive("scoring")).draw_counts(k2),
        None => {
            let mut rng = data.derive("scoring").rng();
            let mut src = FnSource::new(|| {
                let s: Dataset = (0..a.sample_size()).map(|_| *d.sample(&mut rng)).collect();
                let mut l = a.run(&s, &mut rng).unwrap_or_default();
                l.sort();
                l.dedup();
                l
            });
            src.draw_counts(k2)
        }
    };
    let mut hits = vec![0u64; frequent.len()];
    for (list, c) in &lists {
        for (i, h) in frequent.iter().enumerate() {
            if list.binary_search(h).is_ok() {
                hits[i] += c;
            }
        }
    }
    let gamma = params.gamma();
    let scores: Vec<f64> = hits.iter().map(|&c| gamma * c as f64 / k2 as f64).collect();
    let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let posterior = FiniteDistribution::from_weights(
        frequent.iter().cloned().zip(scores.iter().map(|s| (s - top).exp())),
    )?;
    Ok(ListGlobalOutput { posterior, frequent, k1, k2 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvToDpParams {
    /// TV indistinguishability of the input rule.
    pub rho: f64,
    /// Accuracy of the input rule.
    pub alpha: f64,
    pub beta: f64,
    pub alpha_prime: f64,
    pub beta_prime: f64,
    pub eps: f64,
    pub delta: f64,
}

/// Every derived quantity of the pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvToDpPlan {
    pub rho_prime: f64,
    pub p: f64,
    pub q: f64,
    pub k_prime: u64,
    pub eta: f64,
    /// Batch count from the privacy analysis alone.
    pub k_formula: u64,
    /// Batch count actually used; large enough for the histogram precondition.
    pub k: u64,
    /// Examples per run of the input rule.
    pub n: u64,
    /// Examples reserved for the final selection.
    pub n_select: u64,
    /// Bound on the number of hypotheses that survive pruning.
    pub max_candidates: u64,
}

impl TvToDpPlan {
    pub fn total_examples(&self) -> u64 {
        self.k * self.k_prime * self.n + self.n_select
    }
}

/// Batch counts and thresholds of the pipeline for a rule using `n` examples.
pub fn tv_to_dp_plan(params: &TvToDpParams, n: usize) -> Result<TvToDpPlan> {
    let TvToDpParams { rho, alpha, beta, alpha_prime, beta_prime, eps, delta } = *params;
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::param(format!("rho = {rho} must lie in [0, 1)")));
    }
    if !(0.0..0.5).contains(&alpha) {
        return Err(Error::param(format!("alpha = {alpha} must lie in [0, 1/2)")));
    }
    let beta_cap = (1.0 - rho) / (1.0 + rho);
    if !(0.0..beta_cap).contains(&beta) {
        return Err(Error::param(format!("beta = {beta} must lie in [0, {beta_cap})")));
    }
    open_unit("alpha_prime", alpha_prime)?;
    open_unit("beta_prime", beta_prime)?;
    open_unit("delta", delta)?;
    DpParams::new(eps, delta)?;
    let rho_prime = 2.0 * rho / (1.0 + rho);
    let p = (1.0 - beta - rho_prime) / 2.0;
    let q = (1.0 - beta - rho_prime) / (1.0 - beta + rho_prime);
    let k_prime = ((3.0 / beta_prime).ln() / p).ceil() as u64;
    let eta = q / k_prime as f64;
    let inner = (1.0 / beta_prime).ln() / (q * p * beta_prime * delta);
    let k_formula = (4.0 * inner.ln() / (q * eps)).ceil().max(1.0) as u64;
    let hist_n = stable_histogram_required_n(eta, beta_prime / 3.0, eps / 2.0, delta);
    let k = k_formula.max(hist_n.div_ceil(k_prime));
    let max_candidates = (2.0 / eta).ceil() as u64 + 1;
    let n_select = exp_mechanism_required_n(max_candidates as usize, alpha_prime / 2.0, beta_prime / 3.0, eps / 2.0);
    Ok(TvToDpPlan { rho_prime, p, q, k_prime, eta, k_formula, k, n: n as u64, n_select, max_candidates })
}

/// Coupled outputs of every run, grouped by batch.
pub fn tv_to_dp_coupled_outputs(
    rule: &dyn LearningRule,
    s: &Dataset,
    plan: &TvToDpPlan,
    reference: &ReferenceMeasure<Hypothesis>,
    tape: &Tape,
) -> Result<Vec<Vec<Hypothesis>>> {
    check_pipeline_input(rule, s, plan, reference)?;
    let n = plan.n as usize;
    let per_batch = plan.k_prime as usize * n;
    (0..plan.k as usize)
        .into_par_iter()
        .map(|j| {
            let coupler = Coupler::new(reference, tape.child("batch", j as u64));
            let batch = &s.examples()[j * per_batch..(j + 1) * per_batch];
            batch
                .chunks_exact(n.max(1))
                .take(plan.k_prime as usize)
                .map(|chunk| {
                    let post = rule.posterior(&Dataset::new(chunk.to_vec()))?;
                    density(&post, reference)?;
                    coupler.sample(&post)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

fn check_pipeline_input(
    rule: &dyn LearningRule,
    s: &Dataset,
    plan: &TvToDpPlan,
    reference: &ReferenceMeasure<Hypothesis>,
) -> Result<()> {
    if !reference.is_data_independent() {
        return Err(Error::param("the reference measure must be data-independent"));
    }
    if plan.n as usize != rule.sample_size() || plan.n == 0 {
        return Err(Error::param(format!(
            "plan was built for {} examples per run, rule uses {}",
            plan.n,
            rule.sample_size()
        )));
    }
    if (s.len() as u64) < plan.total_examples() {
        return Err(Error::SampleTooSmall { required: plan.total_examples(), got: s.len() as u64 });
    }
    if !reference.dominates(rule.reachable().members()) {
        return Err(Error::AbsoluteContinuity { mass: 0.0 });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TvToDpOutput {
    pub outcome: Outcome<Hypothesis>,
    pub candidates: Vec<Hypothesis>,
}

/// Private learner from a TV indistinguishable one: couple the runs of each
/// batch, release frequent outputs with a stable histogram, and select among
/// them with the exponential mechanism.
pub fn tv_to_dp(
    rule: &dyn LearningRule,
    s: &Dataset,
    params: &TvToDpParams,
    reference: &ReferenceMeasure<Hypothesis>,
    tape: &Tape,
) -> Result<TvToDpOutput> {
    let plan = tv_to_dp_plan(params, rule.sample_size())?;
    let outputs = tv_to_dp_coupled_outputs(rule, s, &plan, reference, tape)?;
    let flat: Vec<Hypothesis> = outputs.into_iter().flatten().collect();
    let released = stable_histogram(&flat, plan.eta, params.beta_prime / 3.0, params.eps / 2.0, params.delta, &tape.derive("histogram"))?;
    let candidates: Vec<Hypothesis> =
        released.into_iter().filter(|r| r.estimate >= plan.eta / 2.0).map(|r| r.item).collect();
    if candidates.is_empty() {
        return Ok(TvToDpOutput { outcome: Outcome::Failure(FailureKind::EmptyPrunedList), candidates });
    }
    let class = HypothesisClass::new(rule.domain_size(), candidates.clone())?;
    let used = (plan.k * plan.k_prime * plan.n) as usize;
    let rest = Dataset::new(s.examples()[used..].to_vec());
    let h = exp_mechanism_learner(&class, &rest, params.alpha_prime / 2.0, params.beta_prime / 3.0, params.eps / 2.0, &tape.derive("selection"))?;
    Ok(TvToDpOutput { outcome: Outcome::Success(h), candidates })
}

/// Labeled sample of the size the pipeline needs.
pub fn draw_pipeline_sample(d: &ExampleDistribution, plan: &TvToDpPlan, data: &Tape) -> Dataset {
    DistSampler::from_tape(d, data).dataset(plan.total_examples() as usize)
}

/// Per batch, the number of coupled outputs that differ between `s` and a
/// copy with example `i` replaced by `e`.
pub fn swap_sensitivity(
    rule: &dyn LearningRule,
    s: &Dataset,
    plan: &TvToDpPlan,
    reference: &ReferenceMeasure<Hypothesis>,
    tape: &Tape,
    i: usize,
    e: Example,
) -> Result<Vec<usize>> {
    let a = tv_to_dp_coupled_outputs(rule, s, plan, reference, tape)?;
    let b = tv_to_dp_coupled_outputs(rule, &s.with_replaced(i, e), plan, reference, tape)?;
    Ok(a.iter().zip(&b).map(|(x, y)| x.iter().zip(y).filter(|(u, v)| u != v).count()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{uniform_reference, Provenance};
    use crate::dist::tv_distance_indexed;
    use crate::fixtures::{GloballyStableFixture, ListGlobalFixture, NoisyConstantRule};
    use crate::model::realizable;

    fn h(bits: &str) -> Hypothesis {
        Hypothesis::from_bits(bits).unwrap()
    }

    fn labels_uniform_1pt() -> ExampleDistribution {
        FiniteDistribution::uniform([Example::new(0, false), Example::new(0, true)]).unwrap()
    }

    fn noisy(scale: f64) -> Derandomized {
        let rule: Arc<dyn LearningRule> = Arc::new(NoisyConstantRule::new(h("0"), h("1"), scale, 1).unwrap());
        let r = uniform_reference(rule.reachable()).unwrap();
        derandomize(rule, r).unwrap()
    }

    #[test]
    fn constant_posterior_never_disagrees() {
        let a = noisy(0.0);
        let d = labels_uniform_1pt();
        let rate = replicability_rate(&a, &d, 2000, &Tape::from_u128(3)).unwrap();
        assert_eq!(rate.value, 1.0);
    }

    #[test]
    fn derandomize_rejects_partial_reference() {
        let rule: Arc<dyn LearningRule> = Arc::new(NoisyConstantRule::new(h("0"), h("1"), 0.5, 1).unwrap());
        let r = ReferenceMeasure::new(FiniteDistribution::point_mass(h("0")), Provenance::DataIndependent);
        assert!(matches!(derandomize(rule, r), Err(Error::AbsoluteContinuity { .. })));
    }

    #[test]
    fn derandomized_marginal_matches_posterior() {
        let a = noisy(0.6);
        let s: Dataset = vec![Example::new(0, true)].into_iter().collect();
        let post = a.rule().posterior(&s).unwrap();
        let root = Tape::from_u128(4);
        let n = 100_000;
        let ones = (0..n).filter(|&i| a.execute(&s, &root.derive(i as u64)).unwrap() == h("1")).count();
        let emp = [1.0 - ones as f64 / n as f64, ones as f64 / n as f64];
        assert!(tv_distance_indexed(&emp, post.masses()).unwrap() <= 0.02);
    }

    #[test]
    fn law_given_tape_matches_execution() {
        let a = noisy(0.5);
        let d = labels_uniform_1pt();
        let t = Tape::from_u128(5);
        let law = a.law_given_tape(&d, &t).unwrap().unwrap();
        let zero = Dataset::new(vec![Example::new(0, false)]);
        let one = Dataset::new(vec![Example::new(0, true)]);
        let outs = [a.execute(&zero, &t).unwrap(), a.execute(&one, &t).unwrap()];
        for hyp in law.support() {
            let expect = outs.iter().filter(|o| *o == hyp).count() as f64 / 2.0;
            assert!((law.mass_of(hyp) - expect).abs() < 1e-12);
        }
        let induced = a.induced_law(&d).unwrap().unwrap();
        assert!((induced.mass_of(&h("1")) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn repl_implies_tv_on_noisy_fixture() {
        let d = labels_uniform_1pt();
        for (i, scale) in [0.0, 0.2, 0.6].into_iter().enumerate() {
            let out = verify_repl_implies_tv(&noisy(scale), &d, 2000, &Tape::from_u128(10 + i as u128)).unwrap();
            assert!(out.holds, "{out:?}");
        }
        assert!(verify_repl_implies_tv(&noisy(0.2), &d, 50, &Tape::from_u128(1)).is_err());
    }

    #[test]
    fn list_global_parameter_arithmetic() {
        let p = ListGlobalParams { eta: 0.2, rho: 0.2, alpha: 0.1, beta: 0.1, max_len: 4, constant_scale: 1.0 };
        assert!((p.tau() - 0.1).abs() < 1e-15);
        assert!((p.gamma() - 200f64.ln() / 0.1).abs() < 1e-9);
        assert!((p.gamma() - 52.98).abs() < 0.01);
        assert_eq!(p.k1(), 530);
        let json: ListGlobalParams =
            serde_json::from_str(r#"{"eta":0.2,"rho":0.2,"alpha":0.1,"beta":0.1,"max_len":4}"#).unwrap();
        assert_eq!(json.constant_scale, 1e6);
    }

    #[test]
    fn list_global_single_list_gives_point_mass() {
        let target = h("0110");
        let f = ListGlobalFixture::new(target.clone(), vec![], 1.0, 1, 2).unwrap();
        let d = realizable(&target, &FiniteDistribution::uniform(0u32..4).unwrap()).unwrap();
        let p = ListGlobalParams { eta: 0.9, rho: 0.3, alpha: 0.1, beta: 0.1, max_len: 1, constant_scale: 1.0 };
        let out = listglobal_to_tv(&f, &d, &p, &Tape::from_u128(6)).unwrap();
        assert_eq!(out.posterior, FiniteDistribution::point_mass(target));
    }

    #[test]
    fn tv_to_dp_plan_arithmetic() {
        let params = TvToDpParams { rho: 0.1, alpha: 0.0, beta: 0.05, alpha_prime: 0.1, beta_prime: 0.1, eps: 1.0, delta: 1e-3 };
        let plan = tv_to_dp_plan(&params, 1).unwrap();
        assert!((plan.rho_prime - 0.181818).abs() < 1e-6);
        assert!((plan.p - 0.38409).abs() < 1e-5);
        assert!((plan.q - 0.67872).abs() < 1e-5);
        assert_eq!(plan.k_prime, 9);
        assert!((plan.eta - 0.07541).abs() < 1e-5);
        assert!(plan.k >= plan.k_formula);
        assert!(plan.k * plan.k_prime >= stable_histogram_required_n(plan.eta, 0.1 / 3.0, 0.5, 1e-3));
        let gap = TvToDpParams { beta: 0.9, ..params };
        assert!(tv_to_dp_plan(&gap, 1).is_err());
    }

    #[test]
    fn tv_to_dp_deterministic_rule() {
        let target = h("0011");
        let d = realizable(&target, &FiniteDistribution::uniform(0u32..4).unwrap()).unwrap();
        let rule = NoisyConstantRule::new(target.clone(), target.complement(), 0.0, 4).unwrap();
        let params = TvToDpParams { rho: 0.0, alpha: 0.0, beta: 0.0, alpha_prime: 0.2, beta_prime: 0.2, eps: 1.0, delta: 1e-3 };
        let plan = tv_to_dp_plan(&params, 4).unwrap();
        let r = uniform_reference(rule.reachable()).unwrap();
        let mut hits = 0;
        for i in 0..10u128 {
            let s = draw_pipeline_sample(&d, &plan, &Tape::from_u128(100 + i));
            let out = tv_to_dp(&rule, &s, &params, &r, &Tape::from_u128(i)).unwrap();
            hits += (out.outcome == Outcome::Success(target.clone())) as u32;
        }
        assert!(hits >= 9);
    }

    #[test]
    fn tv_to_dp_refuses_data_dependent_reference() {
        let rule = crate::fixtures::make_threshold_erm(4, 8).unwrap();
        let params = TvToDpParams { rho: 0.0, alpha: 0.0, beta: 0.0, alpha_prime: 0.2, beta_prime: 0.2, eps: 1.0, delta: 1e-3 };
        let r = ReferenceMeasure::new(FiniteDistribution::uniform(rule.reachable().members().iter().cloned()).unwrap(), Provenance::DataDependent);
        let plan = tv_to_dp_plan(&params, 8).unwrap();
        let d = realizable(&h("0011"), &FiniteDistribution::uniform(0u32..4).unwrap()).unwrap();
        let s = draw_pipeline_sample(&d, &plan, &Tape::from_u128(1));
        assert!(tv_to_dp(&rule, &s, &params, &r, &Tape::from_u128(1)).is_err());
    }

    #[test]
    fn global_to_replicable_deterministic_box() {
        let target = h("0011");
        let d = realizable(&target, &FiniteDistribution::uniform(0u32..4).unwrap()).unwrap();
        let f = GloballyStableFixture::new(target.clone(), vec![], 1.0, 3).unwrap();
        let p = GlobalToReplParams { rho_gs: 1.0, alpha_prime: 0.1, beta_prime: 0.1, rho_prime: 0.3 };
        for i in 0..10u128 {
            let out = global_to_replicable(&f, &d, &p, &Tape::from_u128(i), &Tape::from_u128(50 + i)).unwrap();
            assert_eq!(out.outcome, Outcome::Success(target.clone()));
        }
    }
}
