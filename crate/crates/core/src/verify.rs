//! The acceptance suite: thirteen criteria, each a self-contained experiment
//! returning its measurements, the bounds they are held to, and a verdict.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boosting::{amplify, smooth_boost, AmplifyParams, BoostParams};
use crate::coupling::{disagreement_bound, uniform_reference, Coupler};
use crate::dist::{tv_distance, tv_distance_indexed, FiniteDistribution};
use crate::dp::{exp_mechanism_distribution, max_log_ratio, stable_histogram};
use crate::error::{Error, Result};
use crate::fixtures::{
    best_weighted_error, make_threshold_erm, make_weak_stump_learner, noisy_constant_posterior, DataSpec,
    GloballyStableFixture, ListGlobalFixture, NoisyConstantRule, UncoupledPick,
};
use crate::metrics::{
    exact_stability, expected_tv_indistinguishability, generalization_gap_check, high_probability_certificate,
    monte_carlo_expected_tv, replicability_rate, seeded_expected_tv, tail_mass, Estimate,
};
use crate::model::{population_loss, realizable, Dataset, Example, ExampleDistribution, Hypothesis, HypothesisClass};
use crate::randomness::{Seed, Tape};
use crate::replicable::{replicable_heavy_hitters, replicable_sq, HhParams, SqParams};
use crate::rule::{LearningRule, SeededLearner};
use crate::sampling::DistSampler;
use crate::transforms::{
    derandomize, draw_pipeline_sample, listglobal_to_tv, swap_sensitivity, tv_to_dp, tv_to_dp_plan, ListGlobalParams,
    Outcome, TvToDpParams,
};

/// Identifiers and names of the criteria, in order.
pub const CRITERIA: [(usize, &str); 13] = [
    (1, "pairwise coupling bound"),
    (2, "TV to replicability"),
    (3, "replicability to TV"),
    (4, "replicable heavy hitters"),
    (5, "replicable statistical query"),
    (6, "exponential mechanism exact privacy"),
    (7, "stable histogram"),
    (8, "TV to differential privacy pipeline"),
    (9, "indistinguishability amplification"),
    (10, "smooth boosting"),
    (11, "generalization"),
    (12, "fixed prior and high probability conversions"),
    (13, "list-global stability to TV"),
];

/// One measured quantity with the bound it is compared to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub quantity: String,
    pub estimate: f64,
    pub ci: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Measurement {
    /// Passes when the estimate is at most `bound` plus its half-width.
    pub fn at_most(quantity: impl Into<String>, e: Estimate, bound: f64) -> Self {
        Measurement { quantity: quantity.into(), estimate: e.value, ci: e.ci, bound, pass: e.value <= bound + e.ci }
    }

    /// Passes when the estimate is at least `bound` minus its half-width.
    pub fn at_least(quantity: impl Into<String>, e: Estimate, bound: f64) -> Self {
        Measurement { quantity: quantity.into(), estimate: e.value, ci: e.ci, bound, pass: e.value >= bound - e.ci }
    }

    pub fn check(quantity: impl Into<String>, estimate: f64, bound: f64, pass: bool) -> Self {
        Measurement { quantity: quantity.into(), estimate, ci: 0.0, bound, pass }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: usize,
    pub name: String,
    pub pass: bool,
    pub measurements: Vec<Measurement>,
    /// Wall time; left out of serialized reports so they stay deterministic.
    #[serde(skip)]
    pub seconds: f64,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        let failed: Vec<&str> = self.measurements.iter().filter(|m| !m.pass).map(|m| m.quantity.as_str()).collect();
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        let mut s = format!("[{verdict}] C{:<2} {} ({} checks, {:.1}s)", self.id, self.name, self.measurements.len(), self.seconds);
        if !failed.is_empty() {
            s.push_str(&format!(" failed: {}", failed.join(", ")));
        }
        s
    }
}

/// Runs criterion `id` with all randomness derived from `seed`.
pub fn run_criterion(id: usize, seed: Seed) -> Result<CriterionReport> {
    let name = CRITERIA
        .iter()
        .find(|c| c.0 == id)
        .map(|c| c.1.to_string())
        .ok_or_else(|| Error::param(format!("no criterion {id}")))?;
    let tape = Tape::new(seed).child("criterion", id as u64);
    let start = Instant::now();
    let measurements = match id {
        1 => coupling_bound(&tape),
        2 => tv_to_replicability(&tape),
        3 => replicability_to_tv(&tape),
        4 => heavy_hitters(&tape),
        5 => statistical_query(&tape),
        6 => exp_mechanism_privacy(),
        7 => histogram(&tape),
        8 => tv_to_dp_pipeline(&tape),
        9 => amplification(&tape),
        10 => boosting(&tape),
        11 => generalization(&tape),
        12 => fixed_prior(),
        _ => list_global(&tape),
    }?;
    Ok(CriterionReport {
        id,
        name,
        pass: !measurements.is_empty() && measurements.iter().all(|m| m.pass),
        measurements,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_all(seed: Seed) -> Result<Vec<CriterionReport>> {
    CRITERIA.iter().map(|c| run_criterion(c.0, seed)).collect()
}

fn h(bits: &str) -> Hypothesis {
    Hypothesis::from_bits(bits).expect("literal")
}

fn uniform_labels(points: u32) -> ExampleDistribution {
    FiniteDistribution::uniform((0..points).flat_map(|x| [Example::new(x, false), Example::new(x, true)])).expect("nonempty")
}

fn uniform_points(target: &Hypothesis) -> Result<ExampleDistribution> {
    realizable(target, &FiniteDistribution::uniform(0..target.domain_size() as u32)?)
}

fn count<I: IndexedParallelIterator<Item = Result<bool>>>(it: I) -> Result<usize> {
    Ok(it.collect::<Result<Vec<bool>>>()?.into_iter().filter(|&b| b).count())
}

fn coupling_bound(tape: &Tape) -> Result<Vec<Measurement>> {
    let class = HypothesisClass::new(2, vec![h("00"), h("01"), h("11")])?;
    let p = FiniteDistribution::new(class.members().to_vec(), vec![0.5, 0.3, 0.2])?;
    let q = FiniteDistribution::new(class.members().to_vec(), vec![0.3, 0.3, 0.4])?;
    let r = uniform_reference(&class)?;
    let tv = tv_distance(&p, &q);
    let pairs = 100_000;
    let draws = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let c = Coupler::new(&r, tape.derive(i as u64));
            Ok((c.draw(&p)?.index, c.draw(&q)?.index))
        })
        .collect::<Result<Vec<(usize, usize)>>>()?;
    let mut cp = [0u64; 3];
    let mut cq = [0u64; 3];
    let mut differ = 0;
    for &(a, b) in &draws {
        cp[a] += 1;
        cq[b] += 1;
        differ += (a != b) as usize;
    }
    let freq = |c: [u64; 3]| c.map(|x| x as f64 / pairs as f64);
    let rate = differ as f64 / pairs as f64;
    let bound = disagreement_bound(tv)?;
    Ok(vec![
        Measurement::check("exact tv", tv, 0.2, (tv - 0.2).abs() < 1e-12),
        Measurement::check("disagreement lower", rate, 0.19, rate >= 0.19),
        Measurement::check("disagreement upper", rate, bound + 0.01, rate <= bound + 0.01),
        Measurement::check("fidelity p", tv_distance_indexed(&freq(cp), p.masses())?, 0.02, tv_distance_indexed(&freq(cp), p.masses())? <= 0.02),
        Measurement::check("fidelity q", tv_distance_indexed(&freq(cq), q.masses())?, 0.02, tv_distance_indexed(&freq(cq), q.masses())? <= 0.02),
    ])
}

fn noisy_one_point(scale: f64) -> Result<Arc<dyn LearningRule>> {
    Ok(Arc::new(NoisyConstantRule::new(h("0"), h("1"), scale, 1)?))
}

fn tv_to_replicability(tape: &Tape) -> Result<Vec<Measurement>> {
    let d = uniform_labels(1);
    let mut out = Vec::new();
    for (i, scale) in [0.1, 0.2, 0.5].into_iter().enumerate() {
        let rule = noisy_one_point(scale)?;
        let rho = expected_tv_indistinguishability(rule.as_ref(), &d, 100, &tape.derive("tv"))?;
        out.push(Measurement::check(format!("enumerated tv (scale {scale})"), rho.value, scale / 2.0, (rho.value - scale / 2.0).abs() < 1e-12));
        let a = derandomize(rule.clone(), uniform_reference(rule.reachable())?)?;
        let rate = replicability_rate(&a, &d, 10_000, &tape.child("scale", i as u64))?;
        out.push(Measurement::at_most(format!("disagreement (tv {:.3})", rho.value), rate.complement(), disagreement_bound(rho.value)?));
    }
    Ok(out)
}

fn replicability_to_tv(tape: &Tape) -> Result<Vec<Measurement>> {
    let trials = 2000;
    let mut rules: Vec<(String, Arc<dyn LearningRule>, ExampleDistribution)> = Vec::new();
    for scale in [0.0, 0.2, 0.6, 1.0] {
        rules.push((format!("noisy constant {scale}"), noisy_one_point(scale)?, uniform_labels(1)));
    }
    rules.push(("noisy constant n=3".into(), Arc::new(NoisyConstantRule::new(h("00"), h("11"), 0.5, 3)?), uniform_labels(2)));
    let t8 = Hypothesis::threshold(8, 5);
    rules.push(("threshold erm".into(), Arc::new(make_threshold_erm(8, 5)?), uniform_points(&t8)?));
    rules.push(("weak stump".into(), Arc::new(make_weak_stump_learner(8, 4)?), uniform_points(&t8)?));
    let mut out = Vec::new();
    for (i, (name, rule, d)) in rules.iter().enumerate() {
        let t = tape.child("rule", i as u64);
        let a = derandomize(rule.clone(), uniform_reference(rule.reachable())?)?;
        let dis = replicability_rate(&a, d, trials, &t.derive("replicability"))?.complement();
        let tv = expected_tv_indistinguishability(rule.as_ref(), d, trials, &t.derive("tv"))?;
        out.push(Measurement::at_most(format!("{name} tv"), tv, dis.value + dis.ci));
    }
    let d4 = uniform_points(&h("0110"))?;
    let seeded: Vec<(&str, Box<dyn SeededLearner>)> = vec![
        ("globally stable", Box::new(GloballyStableFixture::new(h("0110"), vec![h("0000"), h("1111"), h("1010")], 0.4, 3)?)),
        ("uncoupled pick", Box::new(UncoupledPick::new(h("0000"), h("1111"), 8))),
    ];
    for (i, (name, a)) in seeded.iter().enumerate() {
        let t = tape.child("seeded", i as u64);
        let dis = replicability_rate(a.as_ref(), &d4, trials, &t.derive("replicability"))?.complement();
        let tv = seeded_expected_tv(a.as_ref(), &d4, trials, &t.derive("tv"))?.ok_or(Error::Empty("posterior"))?;
        out.push(Measurement::at_most(format!("{name} tv"), tv, dis.value + dis.ci));
    }
    Ok(out)
}

fn heavy_hitters(tape: &Tape) -> Result<Vec<Measurement>> {
    let law = FiniteDistribution::new(vec![0u32, 1, 2], vec![0.5, 0.3, 0.2])?;
    let p = HhParams::new(0.36, 0.05, 0.2, 0.2)?;
    let runs = 500;
    let results = (0..runs)
        .into_par_iter()
        .map(|i| {
            let t = tape.derive(i as u64);
            let shared = t.derive("shared");
            let a = replicable_heavy_hitters(&mut DistSampler::from_tape(&law, &t.derive("s1")), &p, &shared)?;
            let b = replicable_heavy_hitters(&mut DistSampler::from_tape(&law, &t.derive("s2")), &p, &shared)?;
            // Only item 0 is above the band; items 1 and 2 are below it.
            Ok((a.items != [0], a.items == b.items))
        })
        .collect::<Result<Vec<(bool, bool)>>>()?;
    let fail = Estimate::proportion(results.iter().filter(|r| r.0).count(), runs);
    let agree = Estimate::proportion(results.iter().filter(|r| r.1).count(), runs);
    Ok(vec![Measurement::at_most("correctness failure", fail, 0.2), Measurement::at_least("agreement", agree, 0.8)])
}

fn statistical_query(tape: &Tape) -> Result<Vec<Measurement>> {
    let coin = FiniteDistribution::uniform([0u8, 1])?;
    let p = SqParams::new(0.25, 0.5, 0.05)?;
    let runs = 1000;
    let results = (0..runs)
        .into_par_iter()
        .map(|i| {
            let t = tape.derive(i as u64);
            let shared = t.derive("shared");
            let q = |x: &u8| *x as f64;
            let a = replicable_sq(q, &mut DistSampler::from_tape(&coin, &t.derive("s1")), &p, &shared)?;
            let b = replicable_sq(q, &mut DistSampler::from_tape(&coin, &t.derive("s2")), &p, &shared)?;
            Ok(((a - 0.5).abs() > 0.25, a == b))
        })
        .collect::<Result<Vec<(bool, bool)>>>()?;
    let fail = Estimate::proportion(results.iter().filter(|r| r.0).count(), runs);
    let agree = Estimate::proportion(results.iter().filter(|r| r.1).count(), runs);
    Ok(vec![Measurement::at_most("tolerance failure", fail, 0.05), Measurement::at_least("agreement", agree, 0.5)])
}

/// Every multiset of `n` indices below `k`, as count vectors.
fn multisets(k: usize, n: usize) -> Vec<Vec<u8>> {
    fn rec(k: usize, left: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if cur.len() == k - 1 {
            cur.push(left as u8);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c as u8);
            rec(k, left - c, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, n, &mut Vec::new(), &mut out);
    out
}

fn exp_mechanism_privacy() -> Result<Vec<Measurement>> {
    let eps = 1.0;
    let class = HypothesisClass::new(6, [0, 2, 4, 6].map(|c| Hypothesis::threshold(6, c)).to_vec())?;
    let examples: Vec<Example> = (0..6).flat_map(|x| [Example::new(x, false), Example::new(x, true)]).collect();
    // The mechanism depends on the dataset only through its multiset.
    let sets = multisets(examples.len(), 8);
    let laws = sets
        .par_iter()
        .map(|c| {
            let s: Dataset = c.iter().enumerate().flat_map(|(i, &m)| std::iter::repeat_n(examples[i], m as usize)).collect();
            Ok((c.clone(), exp_mechanism_distribution(&class, &s, eps)?))
        })
        .collect::<Result<BTreeMap<Vec<u8>, FiniteDistribution<Hypothesis>>>>()?;
    let (worst, pairs) = sets
        .par_iter()
        .map(|c| {
            let p = &laws[c];
            let mut worst: f64 = 0.0;
            let mut pairs = 0u64;
            let mut nb = c.clone();
            for out in (0..c.len()).filter(|&i| c[i] > 0) {
                for inn in (0..c.len()).filter(|&j| j != out) {
                    nb[out] -= 1;
                    nb[inn] += 1;
                    worst = worst.max(max_log_ratio(p, &laws[&nb]));
                    pairs += 1;
                    nb[out] += 1;
                    nb[inn] -= 1;
                }
            }
            (worst, pairs)
        })
        .reduce(|| (0.0, 0), |a, b| (a.0.max(b.0), a.1 + b.1));
    Ok(vec![
        Measurement::check("max log ratio", worst, eps + 1e-9, worst <= eps + 1e-9),
        Measurement::check("neighbor pairs", pairs as f64, 0.0, pairs > 0),
    ])
}

fn histogram(tape: &Tape) -> Result<Vec<Measurement>> {
    let items: Vec<u8> = std::iter::repeat_n(0u8, 2400).chain(std::iter::repeat_n(1u8, 1600)).collect();
    let eta = 0.2;
    let runs = 500;
    let good = count((0..runs).into_par_iter().map(|i| {
        let out = stable_histogram(&items, eta, 0.1, 1.0, 1e-4, &tape.derive(i as u64))?;
        let in_band = |item: u8, f: f64| out.iter().any(|r| r.item == item && (r.estimate - f).abs() <= eta);
        Ok(out.len() == 2 && in_band(0, 0.6) && in_band(1, 0.4))
    }))?;
    Ok(vec![Measurement::at_least("both released in band", Estimate::proportion(good, runs), 0.9)])
}

fn tv_to_dp_pipeline(tape: &Tape) -> Result<Vec<Measurement>> {
    let mut out = Vec::new();
    let runs = 100;

    let target = h("0011");
    let d = uniform_points(&target)?;
    let det = NoisyConstantRule::new(target.clone(), target.complement(), 0.0, 4)?;
    let params = TvToDpParams { rho: 0.0, alpha: 0.0, beta: 0.0, alpha_prime: 0.1, beta_prime: 0.2, eps: 1.0, delta: 1e-3 };
    let plan = tv_to_dp_plan(&params, 4)?;
    let r = uniform_reference(det.reachable())?;
    let t = tape.derive("deterministic");
    let hits = count((0..runs).into_par_iter().map(|i| {
        let s = draw_pipeline_sample(&d, &plan, &t.child("data", i as u64));
        let o = tv_to_dp(&det, &s, &params, &r, &t.child("shared", i as u64))?;
        Ok(o.outcome == Outcome::Success(target.clone()))
    }))?;
    out.push(Measurement::at_least("deterministic target rate", Estimate::proportion(hits, runs), 0.8));

    // Two points, n = 1: the posterior charges the complement with mass
    // 0.1 on a 1-labeled sample, so E tv = 0.05 and the failure rate is 0.05.
    let target = h("01");
    let d = uniform_points(&target)?;
    let rule = NoisyConstantRule::new(target.clone(), target.complement(), 0.1, 1)?;
    let tv = expected_tv_indistinguishability(&rule, &d, 100, &tape.derive("tv"))?;
    out.push(Measurement::check("fixture tv", tv.value, 0.1, tv.value <= 0.1));
    let params = TvToDpParams { rho: 0.1, alpha: 0.0, beta: 0.05, alpha_prime: 0.1, beta_prime: 0.2, eps: 1.0, delta: 1e-3 };
    let plan = tv_to_dp_plan(&params, 1)?;
    let r = uniform_reference(rule.reachable())?;
    let t = tape.derive("noisy");
    let hits = count((0..runs).into_par_iter().map(|i| {
        let s = draw_pipeline_sample(&d, &plan, &t.child("data", i as u64));
        Ok(match tv_to_dp(&rule, &s, &params, &r, &t.child("shared", i as u64))?.outcome {
            Outcome::Success(h) => population_loss(&h, &d)? <= params.alpha_prime,
            Outcome::Failure(_) => false,
        })
    }))?;
    out.push(Measurement::at_least("accurate rate", Estimate::proportion(hits, runs), 0.8));

    // Swaps on a rule that reads three examples per run.
    let rule = NoisyConstantRule::new(target.clone(), target.complement(), 0.5, 3)?;
    let plan = tv_to_dp_plan(&params, 3)?;
    let r = uniform_reference(rule.reachable())?;
    let t = tape.derive("swap");
    let s = draw_pipeline_sample(&d, &plan, &t.derive("data"));
    let per_batch = (plan.k_prime * plan.n) as usize;
    let positions: Vec<usize> = (0..2 * per_batch).step_by(5).collect();
    let violations = count(positions.into_par_iter().map(|i| {
        let e = Example::new(s.examples()[i].point ^ 1, !s.examples()[i].label);
        let changed = swap_sensitivity(&rule, &s, &plan, &r, &t.derive("shared"), i, e)?;
        Ok(changed.iter().enumerate().any(|(j, &c)| c > 1 || (c > 0 && j != i / per_batch)))
    }))?;
    out.push(Measurement::check("swap violations", violations as f64, 0.0, violations == 0));
    Ok(out)
}

fn amplification(tape: &Tape) -> Result<Vec<Measurement>> {
    // n = 1 on two points: p(S) is 0 or 0.04, so E tv = 0.02 and the
    // complement (error 1) is returned with probability 0.02 <= beta.
    let target = h("01");
    let d = uniform_points(&target)?;
    let rule: Arc<dyn LearningRule> = Arc::new(NoisyConstantRule::new(target.clone(), target.complement(), 0.04, 1)?);
    let tv = expected_tv_indistinguishability(rule.as_ref(), &d, 100, &tape.derive("tv"))?;
    let r = uniform_reference(rule.reachable())?;
    let params = AmplifyParams { rho: 0.02, alpha: 0.05, beta: 0.1, rho_prime: 0.05, eps: 0.1, beta_prime: 0.1 };
    let pairs = 200;
    let tapes_per_side = 20;
    let results = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let t = tape.child("pair", i as u64);
            let mut laws = Vec::new();
            let mut accurate = Vec::new();
            for side in ["s1", "s2"] {
                let data = t.derive(side);
                let mut hist = BTreeMap::new();
                for j in 0..tapes_per_side {
                    let o = amplify(rule.clone(), r.clone(), &d, &params, &t.child("shared", j as u64), &data)?;
                    if j == 0 {
                        accurate.push(population_loss(&o.hypothesis, &d)? <= params.alpha + params.eps);
                    }
                    *hist.entry(o.hypothesis).or_insert(0u64) += 1;
                }
                laws.push(FiniteDistribution::from_counts(hist)?);
            }
            Ok((tv_distance(&laws[0], &laws[1]), accurate))
        })
        .collect::<Result<Vec<(f64, Vec<bool>)>>>()?;
    let tvs: Vec<f64> = results.iter().map(|r| r.0).collect();
    let acc = results.iter().flat_map(|r| r.1.iter()).filter(|&&b| b).count();
    Ok(vec![
        Measurement::check("fixture tv", tv.value, params.rho, tv.value <= params.rho + 1e-12),
        Measurement::at_most("output tv", Estimate::mean(&tvs), params.rho_prime),
        Measurement::at_least("accurate rate", Estimate::proportion(acc, 2 * pairs), 1.0 - params.beta_prime),
    ])
}

fn boosting(tape: &Tape) -> Result<Vec<Measurement>> {
    let domain = 64;
    let gamma = 0.25;
    let params = BoostParams { eps: 0.1, gamma, rho_prime: 0.1, beta_prime: 0.1, c_t: 4.0 };
    let weak = make_weak_stump_learner(domain, 16)?;
    let stumps = weak.class().clone();
    let r = uniform_reference(weak.reachable())?;
    let weak: Arc<dyn LearningRule> = Arc::new(weak);
    let runs = 100;
    let results = (0..runs)
        .into_par_iter()
        .map(|i| {
            let target = Hypothesis::threshold(domain, 1 + (i * 37) % (domain - 1));
            let d = uniform_points(&target)?;
            let t = tape.child("run", i as u64);
            let o = smooth_boost(weak.clone(), r.clone(), &d, &params, &t.derive("shared"), &t.derive("data"))?;
            let ok = match &o.outcome {
                Outcome::Success(h) => population_loss(h, &d)? <= params.eps,
                Outcome::Failure(_) => false,
            };
            Ok((ok, o.measure_in_range, worst_weak_error(&stumps, &d, &t.derive("weights"))?))
        })
        .collect::<Result<Vec<(bool, bool, f64)>>>()?;
    let good = results.iter().filter(|r| r.0).count();
    let in_range = results.iter().all(|r| r.1);
    let worst_weak = results.iter().map(|r| r.2).fold(0.0, f64::max);
    Ok(vec![
        Measurement::check("weak error", worst_weak, 0.5 - gamma, worst_weak <= 0.5 - gamma),
        Measurement::at_least("accurate rate", Estimate::proportion(good, runs), 1.0 - params.beta_prime),
        Measurement::check("measure in range", in_range as u8 as f64, 1.0, in_range),
    ])
}

/// Largest best-stump weighted error over the uniform weighting, every
/// single-point concentration and random reweightings of `d`.
fn worst_weak_error(stumps: &HypothesisClass, d: &ExampleDistribution, tape: &Tape) -> Result<f64> {
    use rand::Rng;
    let base: Vec<(Example, f64)> = d.iter().map(|(e, m)| (*e, *m)).collect();
    let mut worst = best_weighted_error(stumps, &base)?;
    for i in 0..base.len() {
        let w: Vec<(Example, f64)> = base.iter().enumerate().map(|(j, (e, m))| (*e, if i == j { *m } else { 0.0 })).collect();
        worst = worst.max(best_weighted_error(stumps, &w)?);
    }
    let mut rng = tape.rng();
    for _ in 0..20 {
        let w: Vec<(Example, f64)> = base.iter().map(|(e, m)| (*e, m * rng.random::<f64>())).collect();
        worst = worst.max(best_weighted_error(stumps, &w)?);
    }
    Ok(worst)
}

fn generalization(tape: &Tape) -> Result<Vec<Measurement>> {
    let (delta, rho, n) = (0.05, 0.0025, 200);
    let support: Vec<u32> = (0..4).chain(12..16).collect();
    let d = DataSpec { target: Hypothesis::threshold(16, 8), support: Some(support), noise: 0.1 }.build()?;
    let rule = make_threshold_erm(16, n)?;
    let tv = monte_carlo_expected_tv(&rule, &d, 1000, &tape.derive("tv"))?;
    let c = generalization_gap_check(&rule, &d, delta, rho, 200, &tape.derive("gap"))?;
    Ok(vec![
        Measurement::at_most("fixture tv", tv, rho),
        Measurement::check("bound", c.bound, (40f64.ln() / 400.0).sqrt() + 0.05, (c.bound - (40f64.ln() / 400.0).sqrt() - 0.05).abs() < 1e-12),
        Measurement::at_most("exceedance", c.exceedance, c.allowed),
    ])
}

fn fixed_prior() -> Result<Vec<Measurement>> {
    type Q = Ratio<i64>;
    let (a, b) = (h("00"), h("11"));
    let examples: Vec<Example> = (0..2).flat_map(|x| [Example::new(x, false), Example::new(x, true)]).collect();
    let w = Q::new(1, 64);
    let mut law = Vec::new();
    for i in 0..64usize {
        let s: Dataset = [i % 4, i / 4 % 4, i / 16].iter().map(|&j| examples[j]).collect();
        law.push((w, noisy_constant_posterior(&a, &b, Q::new(1, 2), s.count_ones(), 3)?));
    }
    let ex = exact_stability(&law)?;
    let f = |q: &Q| *q.numer() as f64 / *q.denom() as f64;
    let mut out = vec![
        Measurement::check("fixed <= expected", f(&ex.fixed_prior_tv), f(&ex.expected_tv), ex.fixed_prior_tv <= ex.expected_tv),
        Measurement::check("expected <= 2 fixed", f(&ex.expected_tv), 2.0 * f(&ex.fixed_prior_tv), ex.expected_tv <= ex.fixed_prior_tv * 2),
    ];
    for eta in [Q::new(1, 20), Q::new(1, 10), Q::new(1, 5), Q::new(1, 3)] {
        let (_, bound) = high_probability_certificate(&law, &ex.prior, eta);
        out.push(Measurement::check(format!("certificate at eta {eta}"), f(&ex.fixed_prior_tv), f(&bound), ex.fixed_prior_tv <= bound));
    }
    for nu in [Q::new(1, 4), Q::new(1, 2), Q::new(3, 4)] {
        let tail = tail_mass(&law, &ex.prior, ex.fixed_prior_tv / nu);
        out.push(Measurement::check(format!("tail at nu {nu}"), f(&tail), f(&nu), tail <= nu));
    }
    Ok(out)
}

fn list_global(tape: &Tape) -> Result<Vec<Measurement>> {
    let support: Vec<u32> = (0..4).collect();
    let target = Hypothesis::threshold(8, 2);
    let d = DataSpec { target: target.clone(), support: Some(support.clone()), noise: 0.0 }.build()?;
    let pool = ListGlobalFixture::silent_decoys(&target, &support, 6)?;
    let a = ListGlobalFixture::new(target.clone(), pool, 0.4, 4, 4)?;
    let params = ListGlobalParams { eta: 0.4, rho: 0.2, alpha: 0.0, beta: 0.1, max_len: 4, constant_scale: 2.0 };
    let pairs = 100;
    let results = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let t = tape.child("pair", i as u64);
            let p = listglobal_to_tv(&a, &d, &params, &t.derive("s1"))?.posterior;
            let q = listglobal_to_tv(&a, &d, &params, &t.derive("s2"))?.posterior;
            let err = p.iter().map(|(h, m)| Ok(m * population_loss(h, &d)?)).sum::<Result<f64>>()?;
            Ok((tv_distance(&p, &q), err))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let tvs: Vec<f64> = results.iter().map(|r| r.0).collect();
    let errs: Vec<f64> = results.iter().map(|r| r.1).collect();
    Ok(vec![
        Measurement::at_most("two-run tv", Estimate::mean(&tvs), 2.0 * params.rho),
        Measurement::at_most("output error", Estimate::mean(&errs), 2.0 * params.alpha + 0.05),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiset_count() {
        // C(k + n - 1, n).
        assert_eq!(multisets(3, 2).len(), 6);
        assert_eq!(multisets(12, 8).len(), 75_582);
        assert!(multisets(4, 3).iter().all(|c| c.iter().map(|&x| x as usize).sum::<usize>() == 3));
    }

    #[test]
    fn unknown_criterion() {
        assert!(run_criterion(14, Seed(0)).is_err());
    }

    #[test]
    fn report_line() {
        let r = CriterionReport {
            id: 3,
            name: "x".into(),
            pass: false,
            measurements: vec![Measurement::check("q", 1.0, 0.5, false)],
            seconds: 0.0,
        };
        assert!(r.line().starts_with("[FAIL] C3"));
        assert!(r.line().ends_with("failed: q"));
        assert!(!serde_json::to_string(&r).unwrap().contains("seconds"));
    }
}
