//! Learning rules in their two views: an explicit posterior per dataset, and
//! a seeded execution that maps (dataset, tape) to one hypothesis.

use rand::Rng;

use crate::dist::FiniteDistribution;
use crate::error::{Error, Result};
use crate::model::{Dataset, ExampleDistribution, Hypothesis, HypothesisClass};
use crate::randomness::Tape;

/// Largest number of weighted terms any exact enumeration may visit.
pub const ENUMERATION_LIMIT: usize = 1_000_000;

/// Law of a rule's posterior under `S ~ D^n`, as weighted atoms.
pub type PosteriorLaw = Vec<(f64, FiniteDistribution<Hypothesis>)>;

/// A randomized map from datasets to hypotheses, given by its posterior.
pub trait LearningRule: Send + Sync {
    fn domain_size(&self) -> usize;

    fn sample_size(&self) -> usize;

    /// Every hypothesis any posterior may charge. Fixed before data is seen.
    fn reachable(&self) -> &HypothesisClass;

    fn posterior(&self, s: &Dataset) -> Result<FiniteDistribution<Hypothesis>>;

    /// Exact law of the posterior over `S ~ D^n` when it is tractable.
    ///
    /// The default enumerates every sequence of `n` examples; rules with a
    /// sufficient statistic override it.
    fn posterior_law(&self, d: &ExampleDistribution) -> Result<Option<PosteriorLaw>> {
        let Some(sets) = enumerate_datasets(d, self.sample_size(), ENUMERATION_LIMIT) else {
            return Ok(None);
        };
        sets.into_iter()
            .map(|(w, s)| Ok((w, self.posterior(&s)?)))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }
}

/// Checks that the posterior on `s` stays inside the declared reachable set.
pub fn check_reachable(rule: &dyn LearningRule, s: &Dataset) -> Result<()> {
    let post = rule.posterior(s)?;
    for (h, &m) in post.iter() {
        if m > 0.0 && !rule.reachable().contains(h) {
            return Err(Error::Internal(format!("posterior charges unreachable {h:?}")));
        }
    }
    Ok(())
}

/// A learner executed with explicit internal randomness.
pub trait SeededLearner: Send + Sync {
    fn sample_size(&self) -> usize;

    fn run(&self, s: &Dataset, tape: &Tape) -> Result<Hypothesis>;

    /// Law of the output over tapes for a fixed dataset.
    fn posterior(&self, _s: &Dataset) -> Option<Result<FiniteDistribution<Hypothesis>>> {
        None
    }

    /// Law of the output over `S ~ D^n` for a fixed tape.
    fn law_given_tape(&self, _d: &ExampleDistribution, _tape: &Tape) -> Option<Result<FiniteDistribution<Hypothesis>>> {
        None
    }

    /// Law of the output over `S ~ D^n` and fresh randomness.
    fn induced_law(&self, _d: &ExampleDistribution) -> Option<Result<FiniteDistribution<Hypothesis>>> {
        None
    }
}

/// A learner whose output is a short list of hypotheses.
pub trait ListLearner: Send + Sync {
    fn sample_size(&self) -> usize;

    /// Longest list the learner may return.
    fn max_len(&self) -> usize;

    fn run(&self, s: &Dataset, rng: &mut dyn rand::RngCore) -> Result<Vec<Hypothesis>>;

    /// Law of the returned list over `S ~ D^m` and the learner's coins.
    fn list_law(&self, _d: &ExampleDistribution) -> Option<Result<FiniteDistribution<Vec<Hypothesis>>>> {
        None
    }
}

/// Every length-`n` sequence over the support of `d` with its probability,
/// or `None` when there are more than `limit` of them.
pub fn enumerate_datasets(d: &ExampleDistribution, n: usize, limit: usize) -> Option<Vec<(f64, Dataset)>> {
    let k = d.len();
    let total = (k as f64).powi(n as i32);
    if total > limit as f64 {
        return None;
    }
    let mut out = Vec::with_capacity(total as usize);
    let mut idx = vec![0usize; n];
    loop {
        let w: f64 = idx.iter().map(|&i| d.masses()[i]).product();
        if w > 0.0 {
            out.push((w, idx.iter().map(|&i| d.support()[i]).collect()));
        }
        let mut pos = 0;
        loop {
            if pos == n {
                return Some(out);
            }
            idx[pos] += 1;
            if idx[pos] < k {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Binomial pmf by log-gamma free recurrence; exact enough for `n` in the
/// thousands.
pub fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    if p <= 0.0 {
        out[0] = 1.0;
        return out;
    }
    if p >= 1.0 {
        out[n] = 1.0;
        return out;
    }
    // Work in logs to dodge underflow for large n.
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut log_choose = 0.0f64;
    for (k, slot) in out.iter_mut().enumerate() {
        if k > 0 {
            log_choose += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        *slot = (log_choose + k as f64 * lp + (n - k) as f64 * lq).exp();
    }
    out
}

/// Draws a hypothesis from a posterior with a private generator.
pub fn sample_posterior<R: Rng + ?Sized>(post: &FiniteDistribution<Hypothesis>, rng: &mut R) -> Hypothesis {
    post.sample(rng).clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Example;

    #[test]
    fn enumeration_covers_all_sequences() {
        let d = FiniteDistribution::new(
            vec![Example::new(0, false), Example::new(1, true)],
            vec![0.25, 0.75],
        )
        .unwrap();
        let sets = enumerate_datasets(&d, 3, 100).unwrap();
        assert_eq!(sets.len(), 8);
        let total: f64 = sets.iter().map(|s| s.0).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let all_ones = sets.iter().find(|s| s.1.count_ones() == 3).unwrap();
        assert!((all_ones.0 - 0.75f64.powi(3)).abs() < 1e-12);
        assert!(enumerate_datasets(&d, 30, 100).is_none());
    }

    #[test]
    fn enumeration_of_empty_sequence() {
        let d = FiniteDistribution::point_mass(Example::new(0, true));
        let sets = enumerate_datasets(&d, 0, 10).unwrap();
        assert_eq!(sets.len(), 1);
        assert!(sets[0].1.is_empty());
    }

    #[test]
    fn binomial_pmf_matches_direct_formula() {
        let pmf = binomial_pmf(4, 0.3);
        let direct = [0.2401, 0.4116, 0.2646, 0.0756, 0.0081];
        for (a, b) in pmf.iter().zip(direct) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(binomial_pmf(3, 0.0), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(binomial_pmf(3, 1.0), vec![0.0, 0.0, 0.0, 1.0]);
        let big: f64 = binomial_pmf(5000, 0.5).iter().sum();
        assert!((big - 1.0).abs() < 1e-9);
    }
}
