//! Explicit probability mass functions over finite, canonically ordered supports.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Probability;

/// A probability mass function over a finite set of distinct items.
///
/// Items are stored in ascending order, so two distributions over the same
/// items share positions and comparisons never depend on insertion order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "DistRepr<T, P>",
    into = "DistRepr<T, P>",
    bound(
        serialize = "T: Serialize + Clone, P: Serialize + Clone",
        deserialize = "T: Deserialize<'de> + Ord + Clone, P: Deserialize<'de> + Probability"
    )
)]
pub struct FiniteDistribution<T, P = f64> {
    support: Vec<T>,
    mass: Vec<P>,
}

#[derive(Clone, Serialize, Deserialize)]
struct DistRepr<T, P> {
    support: Vec<T>,
    mass: Vec<P>,
}

impl<T: Ord + Clone, P: Probability> TryFrom<DistRepr<T, P>> for FiniteDistribution<T, P> {
    type Error = Error;

    fn try_from(r: DistRepr<T, P>) -> Result<Self> {
        FiniteDistribution::new(r.support, r.mass)
    }
}

impl<T, P> From<FiniteDistribution<T, P>> for DistRepr<T, P> {
    fn from(d: FiniteDistribution<T, P>) -> Self {
        DistRepr { support: d.support, mass: d.mass }
    }
}

impl<T: Ord + Clone, P: Probability> FiniteDistribution<T, P> {
    pub fn new(support: Vec<T>, mass: Vec<P>) -> Result<Self> {
        if support.len() != mass.len() {
            return Err(Error::LengthMismatch { expected: support.len(), got: mass.len() });
        }
        if support.is_empty() {
            return Err(Error::Empty("distribution support"));
        }
        let mut pairs: Vec<(T, P)> = support.into_iter().zip(mass).collect();
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidDistribution("duplicate support item".into()));
        }
        let mut total = P::zero();
        for (_, m) in &pairs {
            if *m < P::zero() {
                return Err(Error::InvalidDistribution(format!("negative mass {m:?}")));
            }
            total = total + m.clone();
        }
        let dev = (total.clone() - P::one()).abs();
        if dev > P::normalization_tolerance() {
            return Err(Error::InvalidDistribution(format!("masses sum to {total:?}")));
        }
        let (support, mass) = pairs.into_iter().unzip();
        Ok(Self { support, mass })
    }

    /// Builds a distribution from (item, mass) pairs, summing repeated items.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (T, P)>) -> Result<Self> {
        let mut acc: BTreeMap<T, P> = BTreeMap::new();
        for (t, m) in pairs {
            let slot = acc.entry(t).or_insert_with(P::zero);
            *slot = slot.clone() + m;
        }
        let (support, mass) = acc.into_iter().unzip();
        Self::new(support, mass)
    }

    /// Normalizes nonnegative weights into a distribution.
    pub fn from_weights(pairs: impl IntoIterator<Item = (T, P)>) -> Result<Self> {
        let pairs: Vec<(T, P)> = pairs.into_iter().collect();
        let total = pairs.iter().fold(P::zero(), |acc, (_, w)| acc + w.clone());
        if total <= P::zero() {
            return Err(Error::InvalidDistribution("weights sum to zero".into()));
        }
        Self::from_pairs(pairs.into_iter().map(|(t, w)| (t, w / total.clone())))
    }

    pub fn point_mass(item: T) -> Self {
        Self { support: vec![item], mass: vec![P::one()] }
    }

    pub fn uniform(items: impl IntoIterator<Item = T>) -> Result<Self> {
        let items: Vec<T> = items.into_iter().collect();
        let n = P::from_usize(items.len()).ok_or(Error::Empty("uniform support"))?;
        if items.is_empty() {
            return Err(Error::Empty("uniform support"));
        }
        let m = P::one() / n;
        Self::new(items.clone(), vec![m; items.len()])
    }

    pub fn support(&self) -> &[T] {
        &self.support
    }

    pub fn masses(&self) -> &[P] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&T, &P)> {
        self.support.iter().zip(self.mass.iter())
    }

    pub fn index_of(&self, item: &T) -> Option<usize> {
        self.support.binary_search(item).ok()
    }

    /// Mass of `item`; zero when it is outside the support.
    pub fn mass_of(&self, item: &T) -> P {
        self.index_of(item).map(|i| self.mass[i].clone()).unwrap_or_else(P::zero)
    }

    pub fn expectation(&self, f: impl Fn(&T) -> P) -> P {
        self.iter().fold(P::zero(), |acc, (t, m)| acc + f(t) * m.clone())
    }

    /// Law of `f(X)` for `X` drawn from this distribution.
    pub fn pushforward<U: Ord + Clone>(&self, f: impl Fn(&T) -> U) -> FiniteDistribution<U, P> {
        let mut acc: BTreeMap<U, P> = BTreeMap::new();
        for (t, m) in self.iter() {
            let slot = acc.entry(f(t)).or_insert_with(P::zero);
            *slot = slot.clone() + m.clone();
        }
        let (support, mass) = acc.into_iter().unzip();
        FiniteDistribution { support, mass }
    }

    /// Item with the largest mass; the smallest item wins ties.
    pub fn mode(&self) -> (&T, &P) {
        let mut best = 0;
        for i in 1..self.len() {
            if self.mass[i] > self.mass[best] {
                best = i;
            }
        }
        (&self.support[best], &self.mass[best])
    }

    /// Mass vectors of `self` and `other` aligned on the union of supports.
    pub fn aligned(&self, other: &Self) -> (Vec<T>, Vec<P>, Vec<P>) {
        let (mut i, mut j) = (0, 0);
        let (mut items, mut a, mut b) = (Vec::new(), Vec::new(), Vec::new());
        while i < self.len() || j < other.len() {
            let take_left = j >= other.len()
                || (i < self.len() && self.support[i] <= other.support[j]);
            let take_right = i >= self.len()
                || (j < other.len() && other.support[j] <= self.support[i]);
            if take_left && take_right {
                items.push(self.support[i].clone());
                a.push(self.mass[i].clone());
                b.push(other.mass[j].clone());
                i += 1;
                j += 1;
            } else if take_left {
                items.push(self.support[i].clone());
                a.push(self.mass[i].clone());
                b.push(P::zero());
                i += 1;
            } else {
                items.push(other.support[j].clone());
                a.push(P::zero());
                b.push(other.mass[j].clone());
                j += 1;
            }
        }
        (items, a, b)
    }

    pub fn map_scalar<Q: Probability>(&self, f: impl Fn(&P) -> Q) -> Result<FiniteDistribution<T, Q>> {
        FiniteDistribution::new(self.support.clone(), self.mass.iter().map(f).collect())
    }
}

impl<T: Ord + Clone> FiniteDistribution<T, f64> {
    /// Index drawn by inversion of the cumulative mass at `u` in [0, 1).
    pub fn index_at(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, m) in self.mass.iter().enumerate() {
            acc += m;
            if u < acc {
                return i;
            }
        }
        // Rounding can leave the last cumulative value just below one.
        self.mass.iter().rposition(|m| *m > 0.0).unwrap_or(self.len() - 1)
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.index_at(rng.random::<f64>())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &T {
        &self.support[self.sample_index(rng)]
    }

    /// Empirical distribution of a non-empty list of observations.
    pub fn empirical<'a>(items: impl IntoIterator<Item = &'a T>) -> Result<Self>
    where
        T: 'a,
    {
        let mut counts: BTreeMap<T, u64> = BTreeMap::new();
        for t in items {
            *counts.entry(t.clone()).or_default() += 1;
        }
        Self::from_counts(counts)
    }

    pub fn from_counts(counts: impl IntoIterator<Item = (T, u64)>) -> Result<Self> {
        let counts: Vec<(T, u64)> = counts.into_iter().collect();
        let total: u64 = counts.iter().map(|(_, c)| c).sum();
        if total == 0 {
            return Err(Error::Empty("observations"));
        }
        Self::from_pairs(counts.into_iter().map(|(t, c)| (t, c as f64 / total as f64)))
    }
}

/// Total variation distance, half the L1 distance between mass vectors over the
/// union of supports.
pub fn tv_distance<T: Ord + Clone, P: Probability>(
    p: &FiniteDistribution<T, P>,
    q: &FiniteDistribution<T, P>,
) -> P {
    let (_, a, b) = p.aligned(q);
    let l1 = a.into_iter().zip(b).fold(P::zero(), |acc, (x, y)| acc + (x - y).abs());
    l1 * P::half()
}

/// Total variation distance between two positional mass vectors. Vectors of
/// different lengths have no common indexing and are rejected.
pub fn tv_distance_indexed<P: Probability>(p: &[P], q: &[P]) -> Result<P> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch { expected: p.len(), got: q.len() });
    }
    let l1 = p.iter().zip(q).fold(P::zero(), |acc, (x, y)| acc + (x.clone() - y.clone()).abs());
    Ok(l1 * P::half())
}

/// Pointwise convex combination of distributions over the union of their supports.
pub fn posterior_mixture<T: Ord + Clone, P: Probability>(
    components: &[FiniteDistribution<T, P>],
    weights: &[P],
) -> Result<FiniteDistribution<T, P>> {
    if components.len() != weights.len() {
        return Err(Error::LengthMismatch { expected: components.len(), got: weights.len() });
    }
    if components.is_empty() {
        return Err(Error::Empty("mixture components"));
    }
    if weights.iter().any(|w| *w < P::zero()) {
        return Err(Error::param("mixture weights must be nonnegative"));
    }
    let pairs = components.iter().zip(weights).flat_map(|(c, w)| {
        c.iter().map(move |(t, m)| (t.clone(), m.clone() * w.clone()))
    });
    FiniteDistribution::from_pairs(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;

    fn d(m: &[f64]) -> FiniteDistribution<usize> {
        FiniteDistribution::new((0..m.len()).collect(), m.to_vec()).unwrap()
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&d(&[0.3, 0.7]), &d(&[0.3, 0.7])), 0.0);
        assert_eq!(tv_distance(&d(&[1.0, 0.0]), &d(&[0.0, 1.0])), 1.0);
        assert!((tv_distance(&d(&[0.5, 0.5]), &d(&[0.9, 0.1])) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn tv_unions_supports_with_zero_fill() {
        let p: FiniteDistribution<i32> = FiniteDistribution::new(vec![1, 2], vec![0.5, 0.5]).unwrap();
        let q: FiniteDistribution<i32> = FiniteDistribution::new(vec![2, 3], vec![0.5, 0.5]).unwrap();
        assert!((tv_distance(&p, &q) - 0.5f64).abs() < 1e-12);
    }

    #[test]
    fn indexed_tv_rejects_mismatched_lengths() {
        assert!(matches!(
            tv_distance_indexed(&[0.5, 0.5], &[1.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn construction_validates() {
        assert!(FiniteDistribution::new(vec![0, 1], vec![0.6, 0.6]).is_err());
        assert!(FiniteDistribution::new(vec![0, 0], vec![0.5, 0.5]).is_err());
        assert!(FiniteDistribution::new(vec![0, 1], vec![1.5, -0.5]).is_err());
        assert!(FiniteDistribution::new(vec![0], vec![1.0 + 5e-10]).is_ok());
        let p = FiniteDistribution::new(vec![3, 1], vec![0.25, 0.75]).unwrap();
        assert_eq!(p.support(), &[1, 3]);
        assert_eq!(p.masses(), &[0.75, 0.25]);
    }

    #[test]
    fn rational_distributions_are_exact() {
        let third = Ratio::new(1i64, 3);
        let p = FiniteDistribution::new(vec![0, 1, 2], vec![third; 3]).unwrap();
        let q = FiniteDistribution::new(vec![0, 1], vec![Ratio::new(1, 2), Ratio::new(1, 2)]).unwrap();
        assert_eq!(tv_distance(&p, &q), Ratio::new(1, 3));
        assert!(FiniteDistribution::new(vec![0, 1], vec![Ratio::new(1, 2), Ratio::new(1, 3)]).is_err());
    }

    #[test]
    fn mixture_examples() {
        let a = d(&[0.2, 0.8]);
        assert_eq!(posterior_mixture(std::slice::from_ref(&a), &[1.0]).unwrap(), a);
        assert_eq!(posterior_mixture(&[a.clone(), a.clone()], &[0.5, 0.5]).unwrap(), a);
        let m = posterior_mixture(&[d(&[1.0, 0.0]), d(&[0.0, 1.0])], &[0.5, 0.5]).unwrap();
        assert_eq!(m.masses(), &[0.5, 0.5]);
        assert!(posterior_mixture(std::slice::from_ref(&a), &[0.5, 0.5]).is_err());
    }

    #[test]
    fn json_shape() {
        let p = FiniteDistribution::new(vec![0u32, 2], vec![0.25, 0.75]).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"support":[0,2],"mass":[0.25,0.75]}"#);
        let back: FiniteDistribution<u32> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<FiniteDistribution<u32>>(r#"{"support":[0],"mass":[0.5]}"#).is_err());
    }

    #[test]
    fn inversion_sampling_edges() {
        let p = d(&[0.0, 0.5, 0.5]);
        assert_eq!(p.index_at(0.0), 1);
        assert_eq!(p.index_at(0.9999999), 2);
        assert_eq!(p.index_at(1.0), 2);
    }

    /// Every 3x3 coupling of P and Q, enumerated on a grid, has off-diagonal
    /// mass at least the TV distance; the diagonal maximal coupling attains it.
    #[test]
    fn coupling_lower_bound_on_enumerated_couplings() {
        let p = [0.5, 0.3, 0.2];
        let q = [0.3, 0.3, 0.4];
        let tv = tv_distance_indexed(&p, &q).unwrap();
        let step = 0.05;
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * step).collect();
        let mut checked = 0;
        let mut best = f64::INFINITY;
        // Free parameters: c00, c01, c10, c11; the rest is fixed by the marginals.
        for &c00 in &grid {
            for &c01 in &grid {
                let c02 = p[0] - c00 - c01;
                if c02 < -1e-12 {
                    continue;
                }
                for &c10 in &grid {
                    for &c11 in &grid {
                        let c12 = p[1] - c10 - c11;
                        let c20 = q[0] - c00 - c10;
                        let c21 = q[1] - c01 - c11;
                        let c22 = p[2] - c20 - c21;
                        let cells = [c02, c12, c20, c21, c22];
                        if cells.iter().any(|c| *c < -1e-12) || (c02 + c12 + c22 - q[2]).abs() > 1e-9 {
                            continue;
                        }
                        let off = c01 + c02 + c10 + c12 + c20 + c21;
                        assert!(off >= tv - 1e-12);
                        best = best.min(off);
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 100);
        assert!((best - tv).abs() < 1e-9);
    }

    fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, k).prop_filter_map("nonzero", |w| {
            let s: f64 = w.iter().sum();
            (s > 1e-6).then(|| w.iter().map(|x| x / s).collect())
        })
    }

    proptest! {
        #[test]
        fn tv_is_a_metric(a in simplex(5), b in simplex(5), c in simplex(5)) {
            let (p, q, r) = (d(&a), d(&b), d(&c));
            let pq = tv_distance(&p, &q);
            prop_assert!((pq - tv_distance(&q, &p)).abs() < 1e-12);
            prop_assert!(tv_distance(&p, &p).abs() < 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&pq));
            prop_assert!(tv_distance(&p, &r) <= pq + tv_distance(&q, &r) + 1e-12);
        }

        #[test]
        fn mixture_is_convex_in_tv(a in simplex(4), b in simplex(4), q in simplex(4), w in 0.0f64..1.0) {
            let (pa, pb, q) = (d(&a), d(&b), d(&q));
            let m = posterior_mixture(&[pa.clone(), pb.clone()], &[w, 1.0 - w]).unwrap();
            let lhs = tv_distance(&m, &q);
            let rhs = w * tv_distance(&pa, &q) + (1.0 - w) * tv_distance(&pb, &q);
            prop_assert!(lhs <= rhs + 1e-12);
        }
    }
}
