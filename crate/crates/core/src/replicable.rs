//! Replicable statistical query oracle, heavy hitters and agnostic learner.
//!
//! Each routine reads its shared randomness from a [`Tape`] and its data from
//! a [`Source`]. Two runs on independent data with the same tape agree with
//! high probability.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{open_unit, Error, Result};
use crate::model::{Example, Hypothesis, HypothesisClass};
use crate::randomness::Tape;
use crate::sampling::Source;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqParams {
    pub tau: f64,
    pub rho: f64,
    pub delta: f64,
}

impl SqParams {
    pub fn new(tau: f64, rho: f64, delta: f64) -> Result<Self> {
        let p = Self { tau, rho, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        open_unit("tau", self.tau)?;
        open_unit("rho", self.rho)?;
        open_unit("delta", self.delta)
    }

    /// Internal confidence `min(delta, rho / 4)`.
    pub fn inner_delta(&self) -> f64 {
        self.delta.min(self.rho / 4.0)
    }

    /// Hoeffding sample size for accuracy `tau * rho / 4` at the inner confidence.
    pub fn sample_size(&self) -> u64 {
        let n = 8.0 * (2.0 / self.inner_delta()).ln() / (self.tau * self.tau * self.rho * self.rho);
        n.ceil() as u64
    }

    /// Grid width of the randomized rounding.
    pub fn grid_width(&self) -> f64 {
        self.tau
    }
}

/// Estimates `E[query]` to within `tau` and rounds it to a grid whose offset
/// is read from the tape.
pub fn replicable_sq<T: Ord>(
    query: impl Fn(&T) -> f64,
    source: &mut impl Source<T>,
    params: &SqParams,
    tape: &Tape,
) -> Result<f64> {
    params.validate()?;
    let n = params.sample_size();
    let mut acc = 0.0;
    for (item, count) in source.draw_counts(n) {
        let q = query(&item);
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::param(format!("query value {q} outside [0, 1]")));
        }
        acc += q * count as f64;
    }
    let mean = acc / n as f64;
    let w = params.grid_width();
    let offset = tape.derive("sq-offset").rng().random::<f64>() * w;
    let rounded = offset + w * ((mean - offset) / w).round();
    Ok(rounded.clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HhParams {
    pub v: f64,
    pub eps: f64,
    pub delta: f64,
    pub rho: f64,
}

impl HhParams {
    pub fn new(v: f64, eps: f64, delta: f64, rho: f64) -> Result<Self> {
        let p = Self { v, eps, delta, rho };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        open_unit("v", self.v)?;
        open_unit("eps", self.eps)?;
        open_unit("delta", self.delta)?;
        open_unit("rho", self.rho)?;
        if self.v - self.eps <= 0.0 || self.v + self.eps > 1.0 {
            return Err(Error::param(format!(
                "band ({}, {}) must lie inside (0, 1]",
                self.v - self.eps,
                self.v + self.eps
            )));
        }
        Ok(())
    }

    fn floor_mass(&self) -> f64 {
        self.v - self.eps
    }

    /// Size of the discovery sample.
    pub fn n1(&self) -> u64 {
        let lo = self.floor_mass();
        ((2.0 / (self.delta.min(self.rho) * lo)).ln() / lo).ceil() as u64
    }

    /// Size of the estimation sample given `candidates` discovered items.
    pub fn n2(&self, candidates: usize) -> u64 {
        let m = self.delta.min(self.rho);
        let num = 32.0 * ((2.0 / m).ln() + candidates as f64 + 1.0);
        (num / (self.rho * self.rho * self.eps * self.eps)).ceil() as u64
    }
}

/// Output of one heavy-hitters run, with the quantities it was computed from.
#[derive(Clone, Debug, PartialEq)]
pub struct HeavyHitters<T> {
    pub items: Vec<T>,
    pub threshold: f64,
    pub n1: u64,
    pub n2: u64,
}

/// Items whose mass clears a threshold drawn from the tape.
///
/// The output list is sorted.
pub fn replicable_heavy_hitters<T: Ord + Clone>(
    source: &mut impl Source<T>,
    params: &HhParams,
    tape: &Tape,
) -> Result<HeavyHitters<T>> {
    params.validate()?;
    let n1 = params.n1();
    let candidates: Vec<T> = source.draw_counts(n1).into_iter().map(|(t, _)| t).collect();
    let n2 = params.n2(candidates.len());
    let counts = source.draw_counts(n2);
    let u = tape.derive("hh-threshold").rng().random::<f64>();
    let threshold = params.v - params.eps / 2.0 + u * params.eps;
    let items = candidates
        .into_iter()
        .filter(|x| {
            let c = counts.binary_search_by(|(t, _)| t.cmp(x)).map(|i| counts[i].1).unwrap_or(0);
            c as f64 / n2 as f64 >= threshold
        })
        .collect();
    Ok(HeavyHitters { items, threshold, n1, n2 })
}

/// Result of the replicable agnostic learner.
#[derive(Clone, Debug, PartialEq)]
pub struct AgnosticOutcome {
    pub hypothesis: Hypothesis,
    pub index: usize,
    pub estimate: f64,
    pub estimates: Vec<f64>,
}

/// Replicable error estimate of every member, then the argmin.
///
/// Ties go to the lowest class index.
pub fn replicable_agnostic_learner(
    class: &HypothesisClass,
    source: &mut impl Source<Example>,
    eps: f64,
    delta: f64,
    rho: f64,
    tape: &Tape,
) -> Result<AgnosticOutcome> {
    if class.is_empty() {
        return Err(Error::Empty("hypothesis class"));
    }
    let m = class.len() as f64;
    let params = SqParams::new(eps / 2.0, rho / m, delta / m)?;
    let mut estimates = Vec::with_capacity(class.len());
    for (i, h) in class.members().iter().enumerate() {
        let loss = |e: &Example| if h.label(e.point as usize) != e.label { 1.0 } else { 0.0 };
        estimates.push(replicable_sq(loss, source, &params, &tape.child("hypothesis", i as u64))?);
    }
    let mut best = 0;
    for (i, &e) in estimates.iter().enumerate() {
        if e < estimates[best] {
            best = i;
        }
    }
    Ok(AgnosticOutcome {
        hypothesis: class.members()[best].clone(),
        index: best,
        estimate: estimates[best],
        estimates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::FiniteDistribution;
    use crate::sampling::DistSampler;

    fn bern(p: f64) -> FiniteDistribution<u8> {
        FiniteDistribution::new(vec![0, 1], vec![1.0 - p, p]).unwrap()
    }

    #[test]
    fn sq_sample_size_formula() {
        let p = SqParams::new(0.25, 0.5, 0.05).unwrap();
        assert_eq!(p.inner_delta(), 0.05);
        let expect = (8.0 * 40f64.ln() / (0.0625 * 0.25)).ceil() as u64;
        assert_eq!(p.sample_size(), expect);
        assert!(SqParams::new(0.0, 0.5, 0.1).is_err());
        assert!(SqParams::new(0.1, 1.0, 0.1).is_err());
    }

    #[test]
    fn sq_constant_queries() {
        let d = bern(0.3);
        let p = SqParams::new(0.1, 0.3, 0.05).unwrap();
        for s in 0..20u128 {
            let t = Tape::from_u128(s);
            let mut src = DistSampler::from_tape(&d, &t.derive("data"));
            assert!((replicable_sq(|_| 1.0, &mut src, &p, &t).unwrap() - 1.0).abs() <= 0.1);
            assert!(replicable_sq(|_| 0.0, &mut src, &p, &t).unwrap() <= 0.1);
        }
    }

    #[test]
    fn sq_rejects_out_of_range_query() {
        let d = bern(0.5);
        let p = SqParams::new(0.2, 0.5, 0.1).unwrap();
        let t = Tape::from_u128(1);
        let mut src = DistSampler::from_tape(&d, &t);
        assert!(replicable_sq(|_| 2.0, &mut src, &p, &t).is_err());
    }

    #[test]
    fn sq_bernoulli_tolerance_and_agreement() {
        let d = bern(0.5);
        let p = SqParams::new(0.25, 0.5, 0.05).unwrap();
        let q = |x: &u8| *x as f64;
        let runs = 500;
        let (mut inside, mut agree) = (0, 0);
        for s in 0..runs {
            let t = Tape::from_u128(1000 + s);
            let a = replicable_sq(q, &mut DistSampler::from_tape(&d, &t.derive("d1")), &p, &t).unwrap();
            let b = replicable_sq(q, &mut DistSampler::from_tape(&d, &t.derive("d2")), &p, &t).unwrap();
            inside += (0.25..=0.75).contains(&a) as u32;
            agree += (a == b) as u32;
        }
        assert!(inside as f64 >= 0.95 * runs as f64);
        assert!(agree as f64 >= 0.75 * runs as f64, "agree {agree}");
    }

    #[test]
    fn hh_sample_sizes() {
        let p = HhParams::new(0.36, 0.05, 0.2, 0.2).unwrap();
        let lo = p.v - p.eps;
        assert_eq!(p.n1(), ((2.0 / (0.2 * lo)).ln() / lo).ceil() as u64);
        assert_eq!(p.n2(3), (32.0 * (10f64.ln() + 4.0) / (0.2f64.powi(2) * 0.05f64.powi(2))).ceil() as u64);
        assert!(HhParams::new(0.05, 0.1, 0.1, 0.1).is_err());
        assert!(HhParams::new(0.95, 0.1, 0.1, 0.1).is_err());
    }

    #[test]
    fn hh_point_mass() {
        let d = FiniteDistribution::point_mass(7u8);
        let p = HhParams::new(0.5, 0.1, 0.1, 0.3).unwrap();
        for s in 0..20u128 {
            let t = Tape::from_u128(s);
            let out = replicable_heavy_hitters(&mut DistSampler::from_tape(&d, &t.derive("d")), &p, &t).unwrap();
            assert_eq!(out.items, vec![7]);
        }
    }

    #[test]
    fn hh_threshold_inside_band() {
        let d = bern(0.5);
        let p = HhParams::new(0.4, 0.1, 0.1, 0.3).unwrap();
        for s in 0..50u128 {
            let t = Tape::from_u128(s);
            let out = replicable_heavy_hitters(&mut DistSampler::from_tape(&d, &t.derive("d")), &p, &t).unwrap();
            assert!((0.35..=0.45).contains(&out.threshold));
        }
    }

    #[test]
    fn agnostic_single_and_tie() {
        let target = Hypothesis::threshold(4, 2);
        let marginal = FiniteDistribution::uniform(0u32..4).unwrap();
        let d = crate::model::realizable(&target, &marginal).unwrap();
        let single = HypothesisClass::new(4, vec![target.complement()]).unwrap();
        let t = Tape::from_u128(5);
        let out = replicable_agnostic_learner(&single, &mut DistSampler::from_tape(&d, &t.derive("d")), 0.2, 0.1, 0.3, &t)
            .unwrap();
        assert!((out.estimate - 1.0).abs() <= 0.1);
        // Two members with equal error: lowest index wins whenever the estimates tie.
        let a = Hypothesis::from_bits("0111").unwrap();
        let b = Hypothesis::from_bits("0001").unwrap();
        let pair = HypothesisClass::new(4, vec![a.clone(), b]).unwrap();
        let out = replicable_agnostic_learner(&pair, &mut DistSampler::from_tape(&d, &t.derive("d")), 0.2, 0.1, 0.3, &t)
            .unwrap();
        if out.estimates[0] == out.estimates[1] {
            assert_eq!(out.hypothesis, a);
        }
        assert!(replicable_agnostic_learner(
            &HypothesisClass::new(4, vec![]).unwrap(),
            &mut DistSampler::from_tape(&d, &t),
            0.2,
            0.1,
            0.3,
            &t
        )
        .is_err());
    }
}
