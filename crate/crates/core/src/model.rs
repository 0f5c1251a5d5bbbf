//! Hypotheses, labeled examples, datasets and the two loss functionals.

use std::fmt;

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::dist::FiniteDistribution;
use crate::error::{Error, Result};
use crate::scalar::Probability;

/// A total binary labeling of the domain `{0, .., n-1}`.
///
/// Identity is exact label-vector equality.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Hypothesis {
    labels: Vec<bool>,
}

impl Hypothesis {
    pub fn new(labels: Vec<bool>) -> Self {
        Self { labels }
    }

    pub fn constant(domain_size: usize, label: bool) -> Self {
        Self { labels: vec![label; domain_size] }
    }

    /// Labels `x` with 1 iff `x >= cut`.
    pub fn threshold(domain_size: usize, cut: usize) -> Self {
        Self { labels: (0..domain_size).map(|x| x >= cut).collect() }
    }

    pub fn from_bits(bits: &str) -> Result<Self> {
        bits.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Serde(format!("invalid bit {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    pub fn to_bits(&self) -> String {
        self.labels.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn domain_size(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, x: usize) -> bool {
        self.labels[x]
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn complement(&self) -> Self {
        Self { labels: self.labels.iter().map(|b| !b).collect() }
    }

    /// Copy with the label at `x` flipped.
    pub fn flipped_at(&self, x: usize) -> Self {
        let mut labels = self.labels.clone();
        labels[x] = !labels[x];
        Self { labels }
    }

    pub fn predicts(&self, e: &Example) -> Result<bool> {
        let x = e.point as usize;
        if x >= self.labels.len() {
            return Err(Error::DomainMismatch { expected: self.labels.len(), got: x + 1 });
        }
        Ok(self.labels[x])
    }
}

impl fmt::Debug for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "h{}", self.to_bits())
    }
}

impl Serialize for Hypothesis {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_bits())
    }
}

impl<'de> Deserialize<'de> for Hypothesis {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Hypothesis::from_bits(&s).map_err(de::Error::custom)
    }
}

/// A finite class of distinct hypotheses over a common domain. Member order is
/// fixed and used for deterministic tie-breaking.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ClassRepr")]
pub struct HypothesisClass {
    domain_size: usize,
    members: Vec<Hypothesis>,
}

#[derive(Deserialize)]
struct ClassRepr {
    domain_size: usize,
    members: Vec<Hypothesis>,
}

impl TryFrom<ClassRepr> for HypothesisClass {
    type Error = Error;
    fn try_from(r: ClassRepr) -> Result<Self> {
        HypothesisClass::new(r.domain_size, r.members)
    }
}

impl HypothesisClass {
    pub fn new(domain_size: usize, members: Vec<Hypothesis>) -> Result<Self> {
        if domain_size == 0 {
            return Err(Error::param("domain size must be positive"));
        }
        for h in &members {
            if h.domain_size() != domain_size {
                return Err(Error::DomainMismatch { expected: domain_size, got: h.domain_size() });
            }
        }
        let mut sorted: Vec<&Hypothesis> = members.iter().collect();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::param("hypothesis class contains duplicate label vectors"));
        }
        Ok(Self { domain_size, members })
    }

    /// Keeps the first occurrence of each label vector.
    pub fn dedup(domain_size: usize, members: impl IntoIterator<Item = Hypothesis>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        let members = members.into_iter().filter(|h| seen.insert(h.clone())).collect();
        Self::new(domain_size, members)
    }

    /// All single-threshold stumps of both polarities on the ordered domain.
    pub fn stumps(domain_size: usize) -> Self {
        let pos = (0..=domain_size).map(|c| Hypothesis::threshold(domain_size, c));
        let neg = (0..=domain_size).map(|c| Hypothesis::threshold(domain_size, c).complement());
        Self::dedup(domain_size, pos.chain(neg)).expect("stump class is valid")
    }

    pub fn domain_size(&self) -> usize {
        self.domain_size
    }

    pub fn members(&self) -> &[Hypothesis] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn position(&self, h: &Hypothesis) -> Option<usize> {
        self.members.iter().position(|m| m == h)
    }

    pub fn contains(&self, h: &Hypothesis) -> bool {
        self.position(h).is_some()
    }
}

/// A labeled domain point. Serialized as `[point, label]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Example {
    pub point: u32,
    pub label: bool,
}

impl Example {
    pub fn new(point: u32, label: bool) -> Self {
        Self { point, label }
    }
}

impl Serialize for Example {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        (self.point, self.label as u8).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Example {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let (point, label) = <(u32, u8)>::deserialize(d)?;
        match label {
            0 | 1 => Ok(Example { point, label: label == 1 }),
            _ => Err(de::Error::custom(format!("label must be 0 or 1, got {label}"))),
        }
    }
}

/// Joint distribution over labeled examples.
pub type ExampleDistribution<P = f64> = FiniteDistribution<Example, P>;

/// An ordered sequence of labeled examples. Repeated examples count once per
/// occurrence.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Dataset {
    examples: Vec<Example>,
}

impl Dataset {
    pub fn new(examples: Vec<Example>) -> Self {
        Self { examples }
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn validate(&self, domain_size: usize) -> Result<()> {
        match self.examples.iter().find(|e| e.point as usize >= domain_size) {
            Some(e) => Err(Error::DomainMismatch { expected: domain_size, got: e.point as usize + 1 }),
            None => Ok(()),
        }
    }

    pub fn count_ones(&self) -> usize {
        self.examples.iter().filter(|e| e.label).count()
    }

    /// Copy with the example at `i` replaced.
    pub fn with_replaced(&self, i: usize, e: Example) -> Self {
        let mut examples = self.examples.clone();
        examples[i] = e;
        Self { examples }
    }

    /// Consecutive chunks of `size` examples; a short tail is dropped.
    pub fn chunks(&self, size: usize) -> impl Iterator<Item = Dataset> + '_ {
        self.examples.chunks_exact(size).map(|c| Dataset::new(c.to_vec()))
    }
}

impl FromIterator<Example> for Dataset {
    fn from_iter<I: IntoIterator<Item = Example>>(iter: I) -> Self {
        Self { examples: iter.into_iter().collect() }
    }
}

/// Misclassification mass of `h` under the joint example distribution.
pub fn population_loss<P: Probability>(h: &Hypothesis, d: &FiniteDistribution<Example, P>) -> Result<P> {
    let mut loss = P::zero();
    for (e, m) in d.iter() {
        if h.predicts(e)? != e.label {
            loss = loss + m.clone();
        }
    }
    Ok(loss)
}

/// Fraction of examples in `s` that `h` mislabels.
pub fn empirical_loss(h: &Hypothesis, s: &Dataset) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    Ok(mistakes(h, s)? as f64 / s.len() as f64)
}

pub(crate) fn mistakes(h: &Hypothesis, s: &Dataset) -> Result<usize> {
    let mut wrong = 0;
    for e in s.examples() {
        if h.predicts(e)? != e.label {
            wrong += 1;
        }
    }
    Ok(wrong)
}

/// Realizable example distribution: points drawn from `marginal`, labeled by `target`.
pub fn realizable(target: &Hypothesis, marginal: &FiniteDistribution<u32>) -> Result<ExampleDistribution> {
    let pairs = marginal.iter().map(|(x, m)| (Example::new(*x, target.label(*x as usize)), *m));
    FiniteDistribution::from_pairs(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(pairs: &[(u32, bool)]) -> Dataset {
        pairs.iter().map(|&(x, y)| Example::new(x, y)).collect()
    }

    #[test]
    fn population_loss_examples() {
        let target = Hypothesis::from_bits("0110").unwrap();
        let d = realizable(&target, &FiniteDistribution::uniform(0..4).unwrap()).unwrap();
        assert_eq!(population_loss(&target, &d).unwrap(), 0.0);
        assert!((population_loss(&target.complement(), &d).unwrap() - 1.0).abs() < 1e-12);

        let d2: crate::ExampleDistribution = FiniteDistribution::uniform(vec![Example::new(0, false), Example::new(1, true)]).unwrap();
        let zero = Hypothesis::constant(2, false);
        assert_eq!(population_loss(&zero, &d2).unwrap(), 0.5);
    }

    #[test]
    fn empirical_loss_examples() {
        let h = Hypothesis::constant(3, false);
        assert_eq!(empirical_loss(&h, &ds(&[(0, false), (1, false)])).unwrap(), 0.0);
        let mut pairs = vec![(0, false); 7];
        pairs.extend([(1, true); 3]);
        assert!((empirical_loss(&h, &ds(&pairs)).unwrap() - 0.3).abs() < 1e-12);
        // Repeated example counted per occurrence.
        assert!((empirical_loss(&h, &ds(&[(2, true), (2, true), (0, false)])).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(matches!(empirical_loss(&h, &Dataset::default()), Err(Error::Empty(_))));
        assert!(empirical_loss(&h, &ds(&[(5, true)])).is_err());
    }

    #[test]
    fn class_rejects_duplicates_and_wrong_lengths() {
        let h = Hypothesis::from_bits("01").unwrap();
        assert!(HypothesisClass::new(2, vec![h.clone(), h.clone()]).is_err());
        assert!(HypothesisClass::new(3, vec![h.clone()]).is_err());
        assert!(HypothesisClass::new(2, vec![h.clone(), h.complement()]).is_ok());
    }

    #[test]
    fn stump_class_size() {
        // n + 1 positive cuts and n + 1 negative cuts; the two constants coincide.
        let c = HypothesisClass::stumps(8);
        assert_eq!(c.len(), 2 * 9 - 2);
    }

    #[test]
    fn json_forms() {
        let h = Hypothesis::from_bits("1001").unwrap();
        assert_eq!(serde_json::to_string(&h).unwrap(), "\"1001\"");
        let s = ds(&[(0, true), (3, false)]);
        assert_eq!(serde_json::to_string(&s).unwrap(), "[[0,1],[3,0]]");
        let back: Dataset = serde_json::from_str("[[0,1],[3,0]]").unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<Dataset>("[[0,2]]").is_err());
        assert!(serde_json::from_str::<Hypothesis>("\"10x\"").is_err());
    }
}
