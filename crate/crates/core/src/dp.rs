//! Differentially private selection and histogram mechanisms, and an exact
//! privacy-loss verifier for finite output spaces.
//!
//! Noise is sampled in floating point by CDF inversion. That is fine for
//! simulation but not hardened against floating-point side channels.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::FiniteDistribution;
use crate::error::{open_unit, Error, Result};
use crate::model::{mistakes, Dataset, Hypothesis, HypothesisClass};
use crate::randomness::Tape;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpParams {
    pub eps: f64,
    pub delta: f64,
}

impl DpParams {
    pub fn new(eps: f64, delta: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::param(format!("epsilon = {eps} must be positive")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::param(format!("delta = {delta} must lie in [0, 1)")));
        }
        Ok(Self { eps, delta })
    }
}

/// Laplace draw with scale `b` from one uniform by inversion.
pub fn laplace_inverse(u: f64, b: f64) -> f64 {
    let c = u - 0.5;
    -b * c.signum() * (1.0 - 2.0 * c.abs()).ln()
}

/// Smallest input length for which [`stable_histogram`] accepts its parameters.
pub fn stable_histogram_required_n(eta: f64, beta: f64, eps: f64, delta: f64) -> u64 {
    (8.0 * (1.0 / (eta * beta * delta)).ln() / (eta * eps)).ceil() as u64
}

/// Released frequency estimate of one item.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Released<T> {
    pub item: T,
    pub estimate: f64,
}

/// Thresholded Laplace histogram over the items present in `items`.
///
/// Each present item gets Laplace(2/(eps n)) noise on its frequency and is
/// released when the noisy value clears `eta/2 + (2/(eps n)) ln(2/delta)`.
/// Output is sorted by item.
pub fn stable_histogram<T: Ord + Clone>(
    items: &[T],
    eta: f64,
    beta: f64,
    eps: f64,
    delta: f64,
    tape: &Tape,
) -> Result<Vec<Released<T>>> {
    open_unit("eta", eta)?;
    open_unit("beta", beta)?;
    open_unit("delta", delta)?;
    DpParams::new(eps, delta)?;
    let n = items.len() as u64;
    let required = stable_histogram_required_n(eta, beta, eps, delta);
    if n < required {
        return Err(Error::SampleTooSmall { required, got: n });
    }
    let mut sorted = items.to_vec();
    sorted.sort();
    let scale = 2.0 / (eps * n as f64);
    let threshold = eta / 2.0 + scale * (2.0 / delta).ln();
    let mut rng = tape.derive("laplace").rng();
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().position(|x| *x != sorted[i]).map_or(sorted.len(), |k| i + k);
        let freq = (j - i) as f64 / n as f64;
        let noisy = freq + laplace_inverse(rng.random::<f64>(), scale);
        if noisy >= threshold {
            out.push(Released { item: sorted[i].clone(), estimate: noisy.clamp(0.0, 1.0) });
        }
        i = j;
    }
    Ok(out)
}

/// Output law of the exponential mechanism with utility `-empirical_loss`
/// (sensitivity `1/n`): mass proportional to `exp(-eps * mistakes / 2)`.
pub fn exp_mechanism_distribution(class: &HypothesisClass, s: &Dataset, eps: f64) -> Result<FiniteDistribution<Hypothesis>> {
    if class.is_empty() {
        return Err(Error::Empty("hypothesis class"));
    }
    if s.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let m: Vec<usize> = class.members().iter().map(|h| mistakes(h, s)).collect::<Result<_>>()?;
    let best = *m.iter().min().expect("nonempty");
    let weights = class
        .members()
        .iter()
        .zip(&m)
        .map(|(h, &k)| (h.clone(), (-eps * (k - best) as f64 / 2.0).exp()));
    FiniteDistribution::from_weights(weights)
}

/// Sample size at which the exponential mechanism is `(alpha, beta)`-accurate.
pub fn exp_mechanism_required_n(class_size: usize, alpha: f64, beta: f64, eps: f64) -> u64 {
    let c = 4.0 * (class_size as f64 / beta).ln();
    (c * (1.0 / (eps * alpha)).max(1.0 / (alpha * alpha))).ceil() as u64
}

/// Private learner over a finite class: one draw from the exponential mechanism.
pub fn exp_mechanism_learner(
    class: &HypothesisClass,
    s: &Dataset,
    alpha: f64,
    beta: f64,
    eps: f64,
    tape: &Tape,
) -> Result<Hypothesis> {
    open_unit("alpha", alpha)?;
    open_unit("beta", beta)?;
    DpParams::new(eps, 0.0)?;
    if class.is_empty() {
        return Err(Error::Empty("hypothesis class"));
    }
    let required = exp_mechanism_required_n(class.len(), alpha, beta, eps);
    if (s.len() as u64) < required {
        return Err(Error::SampleTooSmall { required, got: s.len() as u64 });
    }
    let law = exp_mechanism_distribution(class, s, eps)?;
    Ok(law.sample(&mut tape.derive("exp-mechanism").rng()).clone())
}

/// Tightest `delta` for which `P` and `Q` are `(eps, delta)`-indistinguishable.
pub fn approx_dp_delta<T: Ord + Clone>(p: &FiniteDistribution<T>, q: &FiniteDistribution<T>, eps: f64) -> f64 {
    let (_, a, b) = p.aligned(q);
    let e = eps.exp();
    let one_way = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(x, y)| (x - e * y).max(0.0)).sum::<f64>();
    one_way(&a, &b).max(one_way(&b, &a))
}

/// Largest absolute log ratio between two laws on a common support. Infinite
/// when exactly one side charges some item.
pub fn max_log_ratio<T: Ord + Clone>(p: &FiniteDistribution<T>, q: &FiniteDistribution<T>) -> f64 {
    let (_, a, b) = p.aligned(q);
    a.iter().zip(&b).fold(0.0f64, |acc, (&x, &y)| match (x > 0.0, y > 0.0) {
        (true, true) => acc.max((x.ln() - y.ln()).abs()),
        (false, false) => acc,
        _ => f64::INFINITY,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::tv_distance;
    use crate::model::Example;

    fn d(m: &[f64]) -> FiniteDistribution<usize> {
        FiniteDistribution::new((0..m.len()).collect(), m.to_vec()).unwrap()
    }

    #[test]
    fn approx_delta_examples() {
        let p = d(&[0.6, 0.4]);
        assert_eq!(approx_dp_delta(&p, &p, 0.7), 0.0);
        assert_eq!(approx_dp_delta(&d(&[1.0, 0.0]), &d(&[0.0, 1.0]), 0.0), 1.0);
        assert!((approx_dp_delta(&p, &d(&[0.4, 0.6]), 0.0) - 0.2).abs() < 1e-12);
        let q = d(&[0.1, 0.2, 0.7]);
        let r = d(&[0.3, 0.3, 0.4]);
        assert!((approx_dp_delta(&q, &r, 0.0) - tv_distance(&q, &r)).abs() < 1e-12);
        assert!(approx_dp_delta(&q, &r, 1.0) <= approx_dp_delta(&q, &r, 0.5));
    }

    #[test]
    fn laplace_inverse_shape() {
        assert_eq!(laplace_inverse(0.5, 1.0), 0.0);
        assert!(laplace_inverse(0.9, 1.0) > 0.0 && laplace_inverse(0.1, 1.0) < 0.0);
        assert!((laplace_inverse(0.75, 2.0) - 2.0 * 2f64.ln()).abs() < 1e-12);
        // Symmetric about the median.
        assert!((laplace_inverse(0.2, 1.0) + laplace_inverse(0.8, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn histogram_precondition() {
        let items = vec![0u8; 10];
        match stable_histogram(&items, 0.2, 0.1, 1.0, 1e-4, &Tape::from_u128(1)) {
            Err(Error::SampleTooSmall { required, got }) => {
                assert_eq!(got, 10);
                assert_eq!(required, stable_histogram_required_n(0.2, 0.1, 1.0, 1e-4));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn histogram_identical_items() {
        let items = vec![3u8; 2000];
        let out = stable_histogram(&items, 0.5, 0.1, 1.0, 1e-3, &Tape::from_u128(2)).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].item, 3);
        assert!((out[0].estimate - 1.0).abs() <= 0.5);
    }

    #[test]
    fn histogram_distinct_items_release_nothing() {
        let items: Vec<u32> = (0..5000).collect();
        for s in 0..20u128 {
            assert!(stable_histogram(&items, 0.5, 0.1, 1.0, 1e-3, &Tape::from_u128(s)).unwrap().is_empty());
        }
    }

    #[test]
    fn histogram_two_items() {
        let mut items = vec![0u8; 1200];
        items.extend(vec![1u8; 800]);
        let mut failures = 0;
        for s in 0..500u128 {
            let out = stable_histogram(&items, 0.2, 0.1, 1.0, 1e-4, &Tape::from_u128(s)).unwrap();
            let ok = out.len() == 2
                && (out[0].estimate - 0.6).abs() <= 0.2
                && (out[1].estimate - 0.4).abs() <= 0.2;
            failures += !ok as u32;
        }
        assert!(failures as f64 / 500.0 <= 0.1);
    }

    fn class4() -> HypothesisClass {
        HypothesisClass::new(
            3,
            ["000", "011", "101", "111"].iter().map(|b| Hypothesis::from_bits(b).unwrap()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn exp_mechanism_examples() {
        let s: Dataset = vec![Example::new(1, true), Example::new(2, true)].into_iter().collect();
        let one = HypothesisClass::new(3, vec![Hypothesis::from_bits("010").unwrap()]).unwrap();
        assert_eq!(exp_mechanism_distribution(&one, &s, 1.0).unwrap().masses(), &[1.0]);
        // "011" and "111" both make zero mistakes on s.
        let law = exp_mechanism_distribution(&class4(), &s, 1.0).unwrap();
        let a = law.mass_of(&Hypothesis::from_bits("011").unwrap());
        let b = law.mass_of(&Hypothesis::from_bits("111").unwrap());
        assert!((a - b).abs() < 1e-15);
        // "101" makes one mistake and "000" two.
        let z = 2.0 + (-0.5f64).exp() + (-1.0f64).exp();
        assert!((a - 1.0 / z).abs() < 1e-12);
    }

    #[test]
    fn exp_mechanism_precondition_and_output() {
        let s: Dataset = (0..10).map(|i| Example::new(i % 3, i % 3 != 0)).collect();
        let t = Tape::from_u128(3);
        assert!(matches!(
            exp_mechanism_learner(&class4(), &s, 0.1, 0.1, 1.0, &t),
            Err(Error::SampleTooSmall { .. })
        ));
        let n = exp_mechanism_required_n(4, 0.1, 0.1, 1.0);
        assert_eq!(n, (4.0 * 40f64.ln() * 100.0f64).ceil() as u64);
        let big: Dataset = (0..n as u32).map(|i| Example::new(i % 3, i % 3 != 0)).collect();
        let h = exp_mechanism_learner(&class4(), &big, 0.1, 0.1, 1.0, &t).unwrap();
        assert_eq!(h.to_bits(), "011");
    }

    #[test]
    fn exp_mechanism_is_pure_dp_on_a_swap() {
        let s: Dataset = vec![Example::new(0, false), Example::new(1, true), Example::new(2, true)].into_iter().collect();
        let s2 = s.with_replaced(0, Example::new(0, true));
        let p = exp_mechanism_distribution(&class4(), &s, 1.0).unwrap();
        let q = exp_mechanism_distribution(&class4(), &s2, 1.0).unwrap();
        assert!(max_log_ratio(&p, &q) <= 1.0 + 1e-9);
        assert_eq!(approx_dp_delta(&p, &q, 1.0), 0.0);
    }

    #[test]
    fn dp_params_validation() {
        assert!(DpParams::new(0.0, 0.1).is_err());
        assert!(DpParams::new(1.0, 1.0).is_err());
        assert!(DpParams::new(1.0, 0.0).is_ok());
    }
}
