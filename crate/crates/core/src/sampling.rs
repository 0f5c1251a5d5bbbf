//! Sample access to data distributions.
//!
//! Algorithms that only consume counts draw them as a multinomial vector
//! rather than one item at a time, which keeps sample sizes in the
//! billions tractable while leaving the sampling law unchanged.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::dist::FiniteDistribution;
use crate::model::{Dataset, Example};
use crate::randomness::Tape;

/// Independent draws from some fixed law.
pub trait Source<T> {
    fn draw(&mut self) -> T;

    /// Occurrence counts of `n` draws as sorted `(item, count)` pairs with
    /// positive counts.
    fn draw_counts(&mut self, n: u64) -> Vec<(T, u64)>
    where
        T: Ord,
    {
        let mut acc = BTreeMap::new();
        for _ in 0..n {
            *acc.entry(self.draw()).or_insert(0u64) += 1;
        }
        acc.into_iter().collect()
    }
}

/// A source backed by an explicit distribution and a private generator.
#[derive(Clone, Debug)]
pub struct DistSampler<'a, T> {
    dist: &'a FiniteDistribution<T>,
    rng: ChaCha8Rng,
}

impl<'a, T: Ord + Clone> DistSampler<'a, T> {
    pub fn new(dist: &'a FiniteDistribution<T>, rng: ChaCha8Rng) -> Self {
        Self { dist, rng }
    }

    pub fn from_tape(dist: &'a FiniteDistribution<T>, tape: &Tape) -> Self {
        Self::new(dist, tape.rng())
    }

    pub fn dist(&self) -> &'a FiniteDistribution<T> {
        self.dist
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn draw_index(&mut self) -> usize {
        self.dist.sample_index(&mut self.rng)
    }

    /// Counts indexed by support position.
    pub fn index_counts(&mut self, n: u64) -> Vec<u64> {
        multinomial(&mut self.rng, n, self.dist.masses())
    }
}

impl<T: Ord + Clone> Source<T> for DistSampler<'_, T> {
    fn draw(&mut self) -> T {
        self.dist.sample(&mut self.rng).clone()
    }

    fn draw_counts(&mut self, n: u64) -> Vec<(T, u64)> {
        let counts = self.index_counts(n);
        self.dist
            .support()
            .iter()
            .zip(counts)
            .filter(|(_, c)| *c > 0)
            .map(|(t, c)| (t.clone(), c))
            .collect()
    }
}

impl DistSampler<'_, Example> {
    pub fn dataset(&mut self, n: usize) -> Dataset {
        (0..n).map(|_| self.draw()).collect()
    }
}

/// A source defined by a closure over a generator.
pub struct FnSource<F> {
    f: F,
}

impl<F> FnSource<F> {
    pub fn new(f: F) -> Self {
        Self { f }
    }
}

impl<T, F: FnMut() -> T> Source<T> for FnSource<F> {
    fn draw(&mut self) -> T {
        (self.f)()
    }
}

/// Multinomial counts by sequential conditional binomials.
pub fn multinomial<R: Rng + ?Sized>(rng: &mut R, n: u64, probs: &[f64]) -> Vec<u64> {
    let mut out = vec![0u64; probs.len()];
    let mut remaining = n;
    let mut rest: f64 = probs.iter().sum();
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() {
            out[i] = remaining;
            break;
        }
        let q = if rest > 0.0 { (p / rest).clamp(0.0, 1.0) } else { 0.0 };
        let c = if q >= 1.0 {
            remaining
        } else if q <= 0.0 {
            0
        } else {
            Binomial::new(remaining, q).expect("probability in (0, 1)").sample(rng)
        };
        out[i] = c;
        remaining -= c;
        rest -= p;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn multinomial_sums_to_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [0u64, 1, 17, 1_000_000, 10_000_000_000_000] {
            let c = multinomial(&mut rng, n, &[0.2, 0.0, 0.5, 0.3]);
            assert_eq!(c.iter().sum::<u64>(), n);
            assert_eq!(c[1], 0);
        }
    }

    #[test]
    fn multinomial_trailing_zero_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = multinomial(&mut rng, 1000, &[0.5, 0.5, 0.0]);
        assert_eq!(c[2], 0);
        assert_eq!(c[0] + c[1], 1000);
    }

    #[test]
    fn multinomial_frequencies_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = [0.1, 0.6, 0.3];
        let n = 10_000_000u64;
        let c = multinomial(&mut rng, n, &p);
        for (ci, pi) in c.iter().zip(p) {
            let sd = (pi * (1.0 - pi) / n as f64).sqrt();
            assert!((*ci as f64 / n as f64 - pi).abs() < 5.0 * sd);
        }
    }

    #[test]
    fn default_counts_agree_with_override_in_law() {
        let d = FiniteDistribution::new(vec![0u8, 1, 2], vec![0.25, 0.25, 0.5]).unwrap();
        let mut a = DistSampler::new(&d, ChaCha8Rng::seed_from_u64(4));
        let mut looped = FnSource::new(|| *d.sample(a.rng()));
        let counts = looped.draw_counts(40_000);
        let total: u64 = counts.iter().map(|c| c.1).sum();
        assert_eq!(total, 40_000);
        let two = counts.iter().find(|c| c.0 == 2).unwrap().1 as f64 / 40_000.0;
        assert!((two - 0.5).abs() < 0.015);
    }
}
