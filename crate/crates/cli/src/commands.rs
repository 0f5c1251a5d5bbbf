//! One function per subcommand. Each reads its parameters from the resolved
//! configuration, runs independent trials in parallel and fills a report.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};
use tvstab::boosting::{amplify, smooth_boost, AmplifyParams, BoostParams};
use tvstab::coupling::{disagreement_bound, uniform_reference, Coupler, Provenance, ReferenceMeasure};
use tvstab::fixtures::{Fixture, FixtureSpec};
use tvstab::metrics::{audit, Estimate};
use tvstab::replicable::{replicable_agnostic_learner, replicable_heavy_hitters, replicable_sq, HhParams, SqParams};
use tvstab::rule::{LearningRule, ListLearner, SeededLearner};
use tvstab::sampling::DistSampler;
use tvstab::transforms::{
    derandomize, draw_pipeline_sample, global_to_replicable, listglobal_to_tv, tv_to_dp, tv_to_dp_plan,
    FailureKind, GlobalToReplParams, ListGlobalParams, Outcome, TvToDpParams,
};
use tvstab::verify::{run_criterion, Measurement, CRITERIA};
use tvstab::{population_loss, tv_distance, tv_distance_indexed, ExampleDistribution, FiniteDistribution, Hypothesis, HypothesisClass, Tape};

use crate::config::ExperimentConfig;
use crate::report::Report;
use crate::Failure;

fn failure_name(k: &FailureKind) -> &'static str {
    match k {
        FailureKind::EmptyHeavyHitters => "empty_heavy_hitters",
        FailureKind::EmptyPrunedList => "empty_pruned_list",
        FailureKind::RejectionExhausted { .. } => "rejection_exhausted",
        FailureKind::RoundLimit => "round_limit",
    }
}

fn rule_of(spec: &FixtureSpec) -> Result<Arc<dyn LearningRule>, Failure> {
    match spec.build()? {
        Fixture::Rule(r) => Ok(r),
        _ => Err(Failure::Config("this command needs a learning rule fixture".into())),
    }
}

fn count(flags: &[bool]) -> usize {
    flags.iter().filter(|&&b| b).count()
}

type Pair = (Outcome<Hypothesis>, Outcome<Hypothesis>);

/// Paired runs: each trial draws two independent samples and runs both on
/// one shared tape.
fn paired<F>(trials: usize, tape: &Tape, run: F) -> Result<Vec<Pair>, Failure>
where
    F: Fn(&Tape, &Tape) -> tvstab::Result<Outcome<Hypothesis>> + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let t = tape.derive(i as u64);
            let shared = t.derive("shared");
            Ok((run(&shared, &t.derive("s1"))?, run(&shared, &t.derive("s2"))?))
        })
        .collect::<tvstab::Result<Vec<_>>>()
        .map_err(Failure::from)
}

/// Agreement, accuracy and failure counts over paired outcomes.
fn score_pairs(
    report: &mut Report,
    pairs: &[Pair],
    d: &ExampleDistribution,
    alpha: f64,
    min_agree: f64,
    min_accurate: f64,
) -> Result<(), Failure> {
    let mut agree = 0;
    let mut accurate = 0;
    for (a, b) in pairs {
        agree += (a == b) as usize;
        for o in [a, b] {
            match o {
                Outcome::Success(h) => accurate += (population_loss(h, d)? <= alpha) as usize,
                Outcome::Failure(k) => report.fail(failure_name(k)),
            }
        }
    }
    report.push(Measurement::at_least("agreement", Estimate::proportion(agree, pairs.len()), min_agree));
    report.push(Measurement::at_least("accurate rate", Estimate::proportion(accurate, 2 * pairs.len()), min_accurate));
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CoupleParams {
    p: Vec<f64>,
    q: Vec<f64>,
}

pub fn couple(cfg: &ExperimentConfig) -> Result<Report, Failure> {
    let (p, raw): (CoupleParams, _) = cfg.params(json!({"p": [2.0 / 3.0, 1.0 / 3.0], "q": [1.0 / 3.0, 2.0 / 3.0]}))?;
    let items: Vec<u32> = (0..p.p.len() as u32).collect();
    let dp = FiniteDistribution::new(items.clone(), p.p)?;
    let dq = FiniteDistribution::new(items.clone(), p.q)?;
    let r = ReferenceMeasure::new(FiniteDistribution::uniform(items)?, Provenance::DataIndependent);
    let trials = cfg.trials_or(10_000);
    let tape = Tape::new(cfg.seed);
    let draws = (0..trials)
        .into_par_iter()
        .map(|i| {
            let c = Coupler::new(&r, tape.derive(i as u64));
            Ok((c.draw(&dp)?.index, c.draw(&dq)?.index))
        })
        .collect::<tvstab::Result<Vec<(usize, usize)>>>()?;
    let k = dp.len();
    let (mut cp, mut cq) = (vec![0.0; k], vec![0.0; k]);
    for &(a, b) in &draws {
        cp[a] += 1.0 / trials as f64;
        cq[b] += 1.0 / trials as f64;
    }
    let tv = tv_distance(&dp, &dq);
    let differ = draws.iter().filter(|(a, b)| a != b).count();
    let mut report = Report::new(cfg, trials, raw);
    report.push(Measurement::check("tv", tv, tv, true));
    report.push(Measurement::at_most("disagreement", Estimate::proportion(differ, trials), disagreement_bound(tv)?));
    report.push(Measurement::check("fidelity p", tv_distance_indexed(&cp, dp.masses())?, 0.02, tv_distance_indexed(&cp, dp.masses())? <= 0.02));
    report.push(Measurement::check("fidelity q", tv_distance_indexed(&cq, dq.masses())?, 0.02, tv_distance_indexed(&cq, dq.masses())? <= 0.02));
    Ok(report)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SqCommand {
    #[serde(flatten)]
    sq: SqParams,
    /// Mean of the Bernoulli query values.
    mean: f64,
}

pub fn sq(cfg: &ExperimentConfig) -> Result<Report, Failure> {
    let (p, raw): (SqCommand, _) = cfg.params(json!({"tau": 0.25, "rho": 0.5, "delta": 0.05, "mean": 0.5}))?;
    p.sq.validate()?;
    let coin = FiniteDistribution::new(vec![0u8, 1], vec![1.0 - p.mean, p.mean])?;
    let trials = cfg.trials_or(1000);
    let tape = Tape::new(cfg.seed);
    let results = (0..trials)
        .into_par_iter()
        .map(|i| {
            let t = tape.derive(i as u64);
            let shared = t.derive("shared");
            let q = |x: &u8| *x as f64;
            let a = replicable_sq(q, &mut DistSampler::from_tape(&coin, &t.derive("s1")), &p.sq, &shared)?;
            let b = replicable_sq(q, &mut DistSampler::from_tape(&coin, &t.derive("s2")), &p.sq, &shared)?;
            Ok(((a - p.mean).abs() > p.sq.tau, a == b))
        })
        .collect::<tvstab::Result<Vec<(bool, bool)>>>()?;
    let mut report = Report::new(cfg, trials, raw);
    let fails: Vec<bool> = results.iter().map(|r| r.0).collect();
    let agree: Vec<bool> = results.iter().map(|r| r.1).collect();
    report.push(Measurement::at_most("tolerance failure", Estimate::proportion(count(&fails), trials), p.sq.delta));
    report.push(Measurement::at_least("agreement", Estimate::proportion(count(&agree), trials), 1.0 - p.sq.rho));
    Ok(report)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HhCommand {
    #[serde(flatten)]
    hh: HhParams,
    /// Law over items `0..masses.len()`.
    masses: Vec<f64>,
}

pub fn heavy_hitters(cfg: &ExperimentConfig) -> Result<Report, Failure> {
    let (p, raw): (HhCommand, _) =
        cfg.params(json!({"v": 0.36, "eps": 0.05, "delta": 0.2, "rho": 0.2, "masses": [0.5, 0.3, 0.2]}))?;
    p.hh.validate()?;
    let law = FiniteDistribution::new((0..p.masses.len() as u32).collect(), p.masses.clone())?;
    let trials = cfg.trials_or(500);
    let tape = Tape::new(cfg.seed);
    // Items above the band must be listed, items below it must not.
    let correct = |items: &[u32]| {
        law.iter().all(|(x, &m)| {
            let listed = items.contains(x);
            !(m >= p.hh.v + p.hh.eps && !listed || m < p.hh.v - p.hh.eps && listed)
        })
    };
    let results = (0..trials)
        .into_par_iter()
        .map(|i| {
            let t = tape.derive(i as u64);
            let shared = t.derive("shared");
            let a = replicable_heavy_hitters(&mut DistSampler::from_tape(&law, &t.derive("s1")), &p.hh, &shared)?;
            let b = replicable_heavy_hitters(&mut DistSampler::from_tape(&law, &t.derive("s2")), &p.hh, &shared)?;
            Ok((!correct(&a.items), a.items == b.items))
        })
        .collect::<tvstab::Result<Vec<(bool, bool)>>>()?;
    let mut report = Report::new(cfg, trials, raw);
    let fails: Vec<bool> = results.iter().map(|r| r.0).collect();
    let agree: Vec<bool> = results.iter().map(|r| r.1).collect();
    report.push(Measurement::at_most("correctness failure", Estimate::proportion(count(&fails), trials), p.hh.delta));
    report.push(Measurement::at_least("agreement", Estimate::proportion(count(&agree), trials), 1.0 - p.hh.rho));
    Ok(report)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AgnosticParams {
    class: HypothesisClass,
    eps: f64,
    delta: f64,
    rho: f64,
}

pub fn agnostic(cfg: &ExperimentConfig) -> Result<Report, Failure> {
    let (p, raw): (AgnosticParams, _) = cfg.params(json!({
        "class": {"domain_size": 4, "members": ["0000", "0011", "0111", "1111"]},
        "eps": 0.1, "delta": 0.1, "rho": 0.2
    }))?;
    let data = cfg.data_or(json!({"target": "0011", "noise": 0.1}))?;
    let d = data.build()?;
    let best = p.class.members().iter().map(|h| population_loss(h, &d)).collect::<tvstab::Result<Vec<f64>>>()?;
    let opt = best.iter().cloned().fold(f64::INFINITY, f64::min);
    let trials = cfg.trials_or(200);
    let pairs = paired(trials, &Tape::new(cfg.seed), |shared, s| {
        let o = replicable_agnostic_learner(&p.class, &mut DistSampler::from_tape(&d, s), p.eps, p.delta, p.rho, shared)?;
        Ok(Outcome::Success(o.hypothesis))
    })?;
    let mut report = Report::new(cfg, trials, raw).with_data(&data);
    score_pairs(&mut report, &pairs, &d, opt + p.eps, 1.0 - p.rho, 1.0 - p.delta)?;
    Ok(report)
}

pub fn global_to_repl(cfg: &ExperimentConfig) -> Result<Report, Failure> {
    let (p, raw): (GlobalToReplParams, _) =
        cfg.params(json!({"rho_gs": 0.4, "alpha_prime": 0.1, "beta_prime": 0.2, "rho_prime": 0.2}))?;
    let spec = cfg.fixture_or(json!({"kind": "globally-stable", "target": "0110", "decoys": ["0000", "1111", "1010"], "eta": 0.4, "n": 3}))?;
    let data = cfg.data_or(json!({"target": "0110"}))?;
    let d = data.build()?;
    let a: Arc<dyn SeededLearner> = match spec.build()? {
        Fixture::Seeded(a) => a,
        Fixture::Rule(r) => Arc::new(derandomize(r.clone(), uniform_reference(r.reachable())?)?),
        Fixture::List(_) => return Err(Failure::Config("global-to-repl needs a rule or seeded fixture".into())),
    };
    let trials = cfg.trials_or(100);
    let pairs = paired(trials, &Tape::new(cfg.seed), |shared, s| Ok(global_to_replicable(a.as_ref(), &d, &p, shared, s)?.outcome))?;
    let mut report = Report::new(cfg, trials, raw).with_fixture(&spec).with_data(&data);
    score_pairs(&mut report, &pairs, &d, p.alpha_prime, 1.0 - p.rho_prime, 1.0 - p.beta_prime)?;
    Ok(report)
}

pub fn listglobal_to_tv_cmd(cfg: &ExperimentConfig) -> Result<Report, Failure> {
    let (p, raw): (ListGlobalParams, _) = cfg.params(
        json!({"eta": 0.4, "rho": 0.2, "alpha": 0.0, "beta": 0.1, "max_len": 4, "constant_scale": 2.0}),
    )?;
    let spec = cfg.fixture_or(json!({
        "kind": "list-globally-stable", "target": "00111111", "support": [0, 1, 2, 3],
        "pool": 6, "max_len": 4, "eta": 0.4, "m": 4
    }))?;
    let data = cfg.data_or(json!({"target": "00111111", "support": [0, 1, 2, 3]}))?;
    let d = data.build()?;
    let a: Arc<dyn ListLearner> = match spec.build()? {
        Fixture::List(a) => a,
        _ => return Err(Failure::Config("listglobal-to-tv needs a list fixture".into())),
    };
    let trials = cfg.trials_or(100);
    let tape = Tape::new(cfg.seed);
    let results = (0..trials)
        .into_par_iter()
        .map(|i| {
            let t = tape.derive(i as u64);
            let p1 = listglobal_to_tv(a.as_ref(), &d, &p, &t.derive("s1"))?.posterior;
            let p2 = listglobal_to_tv(a.as_ref(), &d, &p, &t.derive("s2"))?.posterior;
            let err = p1.iter().map(|(h, m)| Ok(m * population_loss(h, &d)?)).sum::<tvstab::Result<f64>>()?;
            Ok((tv_distance(&p1, &p2), err))
        })
        .collect::<tvstab::Result<Vec<(f64, f64)>>>()?;
    let tvs: Vec<f64> = results.iter().map(|r| r.0).collect();
    let errs: Vec<f64> = results.iter().map(|r| r.1).collect();
    let mut report = Report::new(cfg, trials, raw).with_fixture(&spec).with_data(&data);
    report.push(Measurement::at_most("two-run tv", Estimate::mean(&tvs), 2.0 * p.rho));
    report.push(Measurement::at_most("output error", Estimate::mean(&errs), 2.0 * p.alpha + 0.05));
    Ok(report)
}

pub fn tv_to_dp_cmd(cfg: &ExperimentConfig) -> Result<Report, Failure> {
    let (p, raw): (TvToDpParams, _) = cfg.params(json!({
        "rho": 0.1, "alpha": 0.0, "beta": 0.05, "alpha_prime": 0.1, "beta_prime": 0.2, "eps": 1.0, "delta": 0.001
    }))?;
    let spec = cfg.fixture_or(json!({"kind": "noisy-constant", "h0": "01", "h1": "10", "scale": 0.1, "n": 1}))?;
    let data = cfg.data_or(json!({"target": "01"}))?;
    let d = data.build()?;
    let rule = rule_of(&spec)?;
    let plan = tv_to_dp_plan(&p, rule.sample_size())?;
    let r = uniform_reference(rule.reachable())?;
    let trials = cfg.trials_or(100);
    let tape = Tape::new(cfg.seed);
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|i| {
            let s = draw_pipeline_sample(&d, &plan, &tape.child("data", i as u64));
            Ok(tv_to_dp(rule.as_ref(), &s, &p, &r, &tape.child("shared", i as u64))?.outcome)
        })
        .collect::<tvstab::Result<Vec<Outcome<Hypothesis>>>>()?;
    let mut report = Report::new(cfg, trials, raw).with_fixture(&spec).with_data(&data);
    let mut accurate = 0;
    for o in &outcomes {
        match o {
            Outcome::Success(h) => accurate += (population_loss(h, &d)? <= p.alpha_prime) as usize,
            Outcome::Failure(k) => report.fail(failure_name(k)),
        }
    }
    report.push(Measurement::at_least("accurate rate", Estimate::proportion(accurate, trials), 1.0 - p.beta_prime));
    report.details = Some(json!({"plan": {
        "k": plan.k, "k_prime": plan.k_prime, "eta": plan.eta, "n": plan.n,
        "n_select": plan.n_select, "total_examples": plan.total_examples()
    }}));
    Ok(report)
}

pub fn amplify_cmd(cfg: &ExperimentConfig) -> Result<Report, Failure> {
    let (p, raw): (AmplifyParams, _) = cfg.params(json!({
        "rho": 0.02, "alpha": 0.05, "beta": 0.1, "rho_prime": 0.05, "eps": 0.1, "beta_prime": 0.1
    }))?;
    let spec = cfg.fixture_or(json!({"kind": "noisy-constant", "h0": "01", "h1": "10", "scale": 0.04, "n": 1}))?;
    let data = cfg.data_or(json!({"target": "01"}))?;
    let d = data.build()?;
    let rule = rule_of(&spec)?;
    let r = uniform_reference(rule.reachable())?;
    let trials = cfg.trials_or(100);
    let mut fallbacks = 0u64;
    let runs = (0..trials)
        .into_par_iter()
        .map(|i| {
            let t = Tape::new(cfg.seed).derive(i as u64);
            let shared = t.derive("shared");
            let a = amplify(rule.clone(), r.clone(), &d, &p, &shared, &t.derive("s1"))?;
            let b = amplify(rule.clone(), r.clone(), &d, &p, &shared, &t.derive("s2"))?;
            Ok((a, b))
        })
        .collect::<tvstab::Result<Vec<_>>>()?;
    let pairs: Vec<Pair> = runs
        .iter()
        .map(|(a, b)| {
            fallbacks += a.fallback as u64 + b.fallback as u64;
            (Outcome::Success(a.hypothesis.clone()), Outcome::Success(b.hypothesis.clone()))
        })
        .collect();
    let mut report = Report::new(cfg, trials, raw).with_fixture(&spec).with_data(&data);
    score_pairs(&mut report, &pairs, &d, p.alpha + p.eps, 1.0 - p.rho_prime, 1.0 - p.beta_prime)?;
    report.details = Some(json!({"fallbacks": fallbacks}));
    Ok(report)
}

pub fn boost(cfg: &ExperimentConfig) -> Result<Report, Failure> {
    let (p, raw): (BoostParams, _) =
        cfg.params(json!({"eps": 0.1, "gamma": 0.25, "rho_prime": 0.1, "beta_prime": 0.1, "c_t": 4.0}))?;
    let spec = cfg.fixture_or(json!({"kind": "weak-stump", "domain_size": 64, "n": 16}))?;
    let target = Hypothesis::threshold(64, 20).to_bits();
    let data = cfg.data_or(json!({"target": target}))?;
    let d = data.build()?;
    let weak = rule_of(&spec)?;
    let r = uniform_reference(weak.reachable())?;
    let trials = cfg.trials_or(20);
    let tape = Tape::new(cfg.seed);
    let outputs = (0..trials)
        .into_par_iter()
        .map(|i| {
            let t = tape.derive(i as u64);
            smooth_boost(weak.clone(), r.clone(), &d, &p, &t.derive("shared"), &t.derive("data"))
        })
        .collect::<tvstab::Result<Vec<_>>>()?;
    let mut report = Report::new(cfg, trials, raw).with_fixture(&spec).with_data(&data);
    let mut accurate = 0;
    for o in &outputs {
        match &o.outcome {
            Outcome::Success(h) => accurate += (population_loss(h, &d)? <= p.eps) as usize,
            Outcome::Failure(k) => report.fail(failure_name(k)),
        }
    }
    let in_range = outputs.iter().all(|o| o.measure_in_range);
    report.push(Measurement::at_least("accurate rate", Estimate::proportion(accurate, trials), 1.0 - p.beta_prime));
    report.push(Measurement::check("measure in range", in_range as u8 as f64, 1.0, in_range));
    let rounds: Vec<usize> = outputs.iter().map(|o| o.rounds).collect();
    report.details = Some(json!({"rounds": rounds, "first_run_log": outputs.first().map(|o| &o.log)}));
    Ok(report)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AuditParams {
    alpha: f64,
}

pub fn audit_cmd(cfg: &ExperimentConfig) -> Result<Report, Failure> {
    let (p, raw): (AuditParams, _) = cfg.params(json!({"alpha": 0.1}))?;
    let spec = cfg.fixture_or(json!({"kind": "noisy-constant", "h0": "0011", "h1": "1100", "scale": 0.0, "n": 4}))?;
    let data = cfg.data_or(json!({"target": "0011"}))?;
    let d = data.build()?;
    let rule = rule_of(&spec)?;
    let r = uniform_reference(rule.reachable())?;
    let trials = cfg.trials_or(1000);
    let a = audit(rule, r, &d, p.alpha, trials, cfg.seed)?;
    let mut report = Report::new(cfg, trials, raw).with_fixture(&spec).with_data(&data);
    let bound = disagreement_bound(a.expected_tv.value.min(1.0))?;
    report.push(Measurement::at_most("disagreement", a.replicability_rate.complement(), bound + a.expected_tv.ci));
    report.push(Measurement::check("repl implies tv", a.repl_implies_tv as u8 as f64, 1.0, a.repl_implies_tv));
    report.push(Measurement::check("sandwich", a.sandwich_holds as u8 as f64, 1.0, a.sandwich_holds));
    report.details = Some(serde_json::to_value(&a).map_err(|e| Failure::Internal(e.to_string()))?);
    Ok(report)
}

pub fn verify(cfg: &ExperimentConfig, ids: &[usize]) -> Result<Report, Failure> {
    let ids: Vec<usize> = if ids.is_empty() { CRITERIA.iter().map(|c| c.0).collect() } else { ids.to_vec() };
    if let Some(bad) = ids.iter().find(|&&id| !CRITERIA.iter().any(|c| c.0 == id)) {
        return Err(Failure::Config(format!("no criterion {bad}")));
    }
    let mut report = Report::new(cfg, 0, json!({"criteria": ids}));
    let mut verdicts = BTreeMap::new();
    for id in ids {
        let c = run_criterion(id, cfg.seed)?;
        eprintln!("{}", c.line());
        for m in &c.measurements {
            report.push(Measurement { quantity: format!("C{id} {}", m.quantity), ..m.clone() });
        }
        report.pass &= c.pass;
        verdicts.insert(format!("C{id}"), Value::Bool(c.pass));
    }
    report.details = Some(Value::Object(verdicts.into_iter().collect()));
    Ok(report)
}
