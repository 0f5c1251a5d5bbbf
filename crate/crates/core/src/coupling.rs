//! Pairwise optimal coupling by rejection sampling over a shared Poisson
//! point process.
//!
//! Every target distribution is expressed as a density with respect to one
//! data-independent reference measure. The process proposes atoms `(h, y, t)`;
//! a target accepts the earliest atom lying under its density curve,
//! `f(h) > y`. Two targets read the same atoms, so their outputs agree unless
//! their acceptance regions separate, which happens with probability at most
//! `2 d / (1 + d)` for `d` their TV distance.

use serde::{Deserialize, Serialize};

use crate::dist::FiniteDistribution;
use crate::error::{Error, Result};
use crate::model::HypothesisClass;
use crate::model::Hypothesis;
use crate::randomness::{PoissonStripStream, Tape};

/// Windows scanned before a draw is declared inconsistent.
pub const DEFAULT_WINDOW_CAP: u32 = 1_000_000;

/// Whether a reference measure was built without looking at data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    DataIndependent,
    DataDependent,
}

/// The common dominating measure of a family of posteriors.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceMeasure<T> {
    dist: FiniteDistribution<T>,
    provenance: Provenance,
}

impl<T: Ord + Clone> ReferenceMeasure<T> {
    pub fn new(dist: FiniteDistribution<T>, provenance: Provenance) -> Self {
        Self { dist, provenance }
    }

    pub fn dist(&self) -> &FiniteDistribution<T> {
        &self.dist
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn is_data_independent(&self) -> bool {
        self.provenance == Provenance::DataIndependent
    }

    pub fn item(&self, index: usize) -> &T {
        &self.dist.support()[index]
    }

    /// Every item of `items` carries positive reference mass.
    pub fn dominates<'a>(&self, items: impl IntoIterator<Item = &'a T>) -> bool
    where
        T: 'a,
    {
        items.into_iter().all(|t| self.dist.mass_of(t) > 0.0)
    }
}

/// Uniform mass over a rule's declared reachable set.
pub fn uniform_reference(reachable: &HypothesisClass) -> Result<ReferenceMeasure<Hypothesis>> {
    if reachable.is_empty() {
        return Err(Error::Empty("reachable hypothesis class"));
    }
    let dist = FiniteDistribution::uniform(reachable.members().iter().cloned())?;
    Ok(ReferenceMeasure::new(dist, Provenance::DataIndependent))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixtureWeights {
    /// Weight `2^-i` on the i-th component (1-based), renormalized.
    Geometric,
    Uniform,
}

/// Convex combination of an enumeration of posteriors.
///
/// The result is data-independent only when the enumeration covers datasets
/// chosen without looking at the sample, e.g. all datasets of a given size;
/// the caller states which through `provenance`.
pub fn mixture_reference<T: Ord + Clone>(
    posteriors: &[FiniteDistribution<T>],
    weights: MixtureWeights,
    provenance: Provenance,
) -> Result<ReferenceMeasure<T>> {
    if posteriors.is_empty() {
        return Err(Error::Empty("posterior enumeration"));
    }
    let raw: Vec<f64> = match weights {
        MixtureWeights::Geometric => (1..=posteriors.len()).map(|i| 0.5f64.powi(i as i32)).collect(),
        MixtureWeights::Uniform => vec![1.0; posteriors.len()],
    };
    let total: f64 = raw.iter().sum();
    let pairs = posteriors
        .iter()
        .zip(&raw)
        .flat_map(|(p, w)| p.iter().map(move |(t, m)| (t.clone(), m * w / total)));
    Ok(ReferenceMeasure::new(FiniteDistribution::from_pairs(pairs)?, provenance))
}

/// Radon-Nikodym derivative of a target with respect to a reference, indexed
/// by reference support position.
#[derive(Clone, Debug, PartialEq)]
pub struct Density {
    values: Vec<f64>,
    max: f64,
}

impl Density {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    /// Number of unit strips `y in [j, j+1)` that can lie under the curve.
    pub fn strips(&self) -> u32 {
        (self.max.ceil() as u32).max(1)
    }
}

pub fn density<T: Ord + Clone>(target: &FiniteDistribution<T>, reference: &ReferenceMeasure<T>) -> Result<Density> {
    let rd = reference.dist();
    let mut values = vec![0.0; rd.len()];
    for (t, &m) in target.iter() {
        if m == 0.0 {
            continue;
        }
        match rd.index_of(t) {
            Some(i) if rd.masses()[i] > 0.0 => values[i] = m / rd.masses()[i],
            _ => return Err(Error::AbsoluteContinuity { mass: m }),
        }
    }
    let max = values.iter().cloned().fold(0.0, f64::max);
    Ok(Density { values, max })
}

/// One accepted atom.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoupledDraw {
    /// Position of the output in the reference support.
    pub index: usize,
    /// Arrival time of the accepted atom.
    pub t: f64,
}

/// Earliest atom of `stream` under the density curve.
///
/// Windows are scanned in order, each across every strip the density reaches,
/// so the first window with any acceptance contains the global minimum.
pub fn coupled_draw(stream: &PoissonStripStream, f: &Density, window_cap: u32) -> Result<CoupledDraw> {
    if f.values.len() != stream.reference_len() {
        return Err(Error::LengthMismatch { expected: stream.reference_len(), got: f.values.len() });
    }
    let strips = f.strips();
    for m in 0..window_cap {
        let mut best: Option<(f64, u32, u32, usize)> = None;
        for j in 0..strips {
            let atoms = stream.window_atoms(j, m);
            // Sorted by t, so the first acceptance is the strip's earliest.
            if let Some(a) = atoms.iter().find(|a| f.values[a.h] > a.y) {
                let key = (a.t, j, a.draw, a.h);
                let better = match best {
                    None => true,
                    Some(b) => (key.0, key.1, key.2) < (b.0, b.1, b.2),
                };
                if better {
                    best = Some(key);
                }
            }
        }
        if let Some((t, _, _, h)) = best {
            return Ok(CoupledDraw { index: h, t });
        }
    }
    Err(Error::Internal(format!("no acceptance within {window_cap} windows")))
}

/// Couples any number of targets through one shared stream.
pub struct Coupler<'r, T> {
    reference: &'r ReferenceMeasure<T>,
    stream: PoissonStripStream,
    window_cap: u32,
}

impl<'r, T: Ord + Clone> Coupler<'r, T> {
    pub fn new(reference: &'r ReferenceMeasure<T>, tape: Tape) -> Self {
        let stream = PoissonStripStream::new(tape, reference.dist());
        Self { reference, stream, window_cap: DEFAULT_WINDOW_CAP }
    }

    pub fn with_window_cap(mut self, cap: u32) -> Self {
        self.window_cap = cap;
        self
    }

    pub fn reference(&self) -> &ReferenceMeasure<T> {
        self.reference
    }

    pub fn draw(&self, target: &FiniteDistribution<T>) -> Result<CoupledDraw> {
        let f = density(target, self.reference)?;
        coupled_draw(&self.stream, &f, self.window_cap)
    }

    pub fn sample(&self, target: &FiniteDistribution<T>) -> Result<T> {
        Ok(self.reference.item(self.draw(target)?.index).clone())
    }
}

/// Reference support index of the coupled output of `target` on `tape`.
pub fn coupled_sample<T: Ord + Clone>(
    target: &FiniteDistribution<T>,
    reference: &ReferenceMeasure<T>,
    tape: &Tape,
) -> Result<usize> {
    Coupler::new(reference, tape.clone()).draw(target).map(|d| d.index)
}

/// Upper bound `2 rho / (1 + rho)` on the disagreement of coupled outputs of
/// two targets at TV distance `rho`.
pub fn disagreement_bound(rho: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::param(format!("rho = {rho} must lie in [0, 1]")));
    }
    Ok(2.0 * rho / (1.0 + rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{tv_distance, tv_distance_indexed};

    fn idx(m: &[f64]) -> FiniteDistribution<usize> {
        FiniteDistribution::new((0..m.len()).collect(), m.to_vec()).unwrap()
    }

    fn uniform_idx(n: usize) -> ReferenceMeasure<usize> {
        ReferenceMeasure::new(FiniteDistribution::uniform(0..n).unwrap(), Provenance::DataIndependent)
    }

    #[test]
    fn uniform_reference_examples() {
        let class = HypothesisClass::stumps(1); // {0, 1} constants over one point
        let r = uniform_reference(&class).unwrap();
        assert!(r.dist().masses().iter().all(|&m| m == 0.5));
        let four = HypothesisClass::new(
            2,
            ["00", "01", "10", "11"].iter().map(|b| Hypothesis::from_bits(b).unwrap()).collect(),
        )
        .unwrap();
        let r4 = uniform_reference(&four).unwrap();
        assert!(r4.dist().masses().iter().all(|&m| m == 0.25));
        assert!(r4.dominates(four.members()));
        let single = HypothesisClass::new(1, vec![Hypothesis::from_bits("1").unwrap()]).unwrap();
        assert_eq!(uniform_reference(&single).unwrap().dist().masses(), &[1.0]);
        assert!(uniform_reference(&HypothesisClass::new(1, vec![]).unwrap()).is_err());
    }

    #[test]
    fn mixture_reference_examples() {
        let p = idx(&[0.2, 0.8]);
        for w in [MixtureWeights::Geometric, MixtureWeights::Uniform] {
            let r = mixture_reference(std::slice::from_ref(&p), w, Provenance::DataIndependent).unwrap();
            assert_eq!(r.dist(), &p);
        }
        let a = FiniteDistribution::point_mass(0usize);
        let b = FiniteDistribution::point_mass(1usize);
        let r = mixture_reference(&[a.clone(), b.clone()], MixtureWeights::Geometric, Provenance::DataDependent).unwrap();
        assert!((r.dist().masses()[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.dist().masses()[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!(density(&a, &r).is_ok() && density(&b, &r).is_ok());
        assert!(!r.is_data_independent());
        assert!(mixture_reference::<usize>(&[], MixtureWeights::Uniform, Provenance::DataIndependent).is_err());
    }

    #[test]
    fn density_examples() {
        let r = uniform_idx(3);
        let f = density(&idx(&[1.0 / 3.0; 3]), &r).unwrap();
        assert!(f.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        let g = density(&idx(&[0.5, 0.5, 0.0]), &r).unwrap();
        assert!((g.values()[0] - 1.5).abs() < 1e-12 && g.values()[2] == 0.0);
        let outside = FiniteDistribution::new(vec![0usize, 7], vec![0.5, 0.5]).unwrap();
        assert!(matches!(density(&outside, &r), Err(Error::AbsoluteContinuity { .. })));
        let null_ref = ReferenceMeasure::new(idx(&[1.0, 0.0]), Provenance::DataIndependent);
        assert!(density(&idx(&[0.5, 0.5]), &null_ref).is_err());
    }

    #[test]
    fn disagreement_bound_examples() {
        assert_eq!(disagreement_bound(0.0).unwrap(), 0.0);
        assert_eq!(disagreement_bound(1.0).unwrap(), 1.0);
        assert!((disagreement_bound(1.0 / 3.0).unwrap() - 0.5).abs() < 1e-12);
        assert!(disagreement_bound(-0.1).is_err() && disagreement_bound(1.5).is_err());
    }

    #[test]
    fn point_mass_always_wins() {
        let r = uniform_idx(4);
        let target = idx(&[0.0, 0.0, 1.0, 0.0]);
        for s in 0..200u128 {
            assert_eq!(coupled_sample(&target, &r, &Tape::from_u128(s)).unwrap(), 2);
        }
    }

    #[test]
    fn identical_targets_identical_outputs() {
        let r = uniform_idx(3);
        let p = idx(&[0.2, 0.5, 0.3]);
        for s in 0..200u128 {
            let t = Tape::from_u128(s);
            assert_eq!(coupled_sample(&p, &r, &t).unwrap(), coupled_sample(&p.clone(), &r, &t).unwrap());
        }
    }

    #[test]
    fn marginal_matches_target() {
        let r = uniform_idx(2);
        let target = idx(&[0.5, 0.5]);
        let trials = 100_000;
        let root = Tape::from_u128(21);
        let mut counts = [0usize; 2];
        for i in 0..trials {
            counts[coupled_sample(&target, &r, &root.derive(i as u64)).unwrap()] += 1;
        }
        let emp: Vec<f64> = counts.iter().map(|&c| c as f64 / trials as f64).collect();
        assert!(tv_distance_indexed(&emp, target.masses()).unwrap() < 0.01);
    }

    #[test]
    fn pairwise_disagreement_within_bound() {
        let r = uniform_idx(2);
        let p = idx(&[2.0 / 3.0, 1.0 / 3.0]);
        let q = idx(&[1.0 / 3.0, 2.0 / 3.0]);
        let d = tv_distance(&p, &q);
        assert!((d - 1.0 / 3.0).abs() < 1e-12);
        let root = Tape::from_u128(22);
        let trials = 100_000;
        let mut differ = 0;
        for i in 0..trials {
            let c = Coupler::new(&r, root.derive(i as u64));
            if c.draw(&p).unwrap().index != c.draw(&q).unwrap().index {
                differ += 1;
            }
        }
        let rate = differ as f64 / trials as f64;
        assert!(rate <= 0.5 + 0.01, "rate {rate}");
        assert!(rate >= d - 0.01, "rate {rate}");
    }

    #[test]
    fn acceptance_time_has_unit_mean() {
        let r = uniform_idx(3);
        let p = idx(&[0.6, 0.1, 0.3]);
        let root = Tape::from_u128(23);
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|i| Coupler::new(&r, root.derive(i as u64)).draw(&p).unwrap().t)
            .sum::<f64>()
            / n as f64;
        assert!((0.9..=1.1).contains(&mean), "mean {mean}");
    }

    #[test]
    fn window_cap_surfaces_as_internal_error() {
        let r = uniform_idx(2);
        let p = idx(&[0.5, 0.5]);
        // A cap of zero windows can never accept.
        let err = Coupler::new(&r, Tape::from_u128(1)).with_window_cap(0).draw(&p).unwrap_err();
        assert!(err.is_internal());
    }
}
