//! Replayable randomness: seeded tapes addressed by label paths, and the
//! strip-layered Poisson point process used as shared randomness by the coupling.
//!
//! A [`Tape`] is a value. Its generator key is a SHA-256 chain over the seed and
//! every label on its path, and the generator itself is ChaCha8, so a draw is a
//! pure function of `(seed, path, draw index)` on every platform.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dist::FiniteDistribution;
use crate::error::{Error, Result};

/// 128-bit experiment seed, written as hex on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Seed(pub u128);

impl FromStr for Seed {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s.trim().trim_start_matches("0x").trim_start_matches("0X");
        if digits.is_empty() || digits.len() > 32 {
            return Err(Error::param(format!("seed {s:?} must be 1 to 32 hex digits")));
        }
        u128::from_str_radix(digits, 16)
            .map(Seed)
            .map_err(|e| Error::param(format!("seed {s:?}: {e}")))
    }
}

impl fmt::Display for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

impl Serialize for Seed {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Seed {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One step of a tape path.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Str(String),
    Int(u64),
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label::Str(s.to_owned())
    }
}

impl From<String> for Label {
    fn from(s: String) -> Self {
        Label::Str(s)
    }
}

macro_rules! int_label {
    ($($t:ty),*) => {$(
        impl From<$t> for Label {
            fn from(i: $t) -> Self {
                Label::Int(i as u64)
            }
        }
    )*};
}
int_label!(u8, u16, u32, u64, usize);

/// A deterministic, replayable source of randomness identified by a seed and a
/// label path.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Tape {
    seed: Seed,
    path: Vec<Label>,
    key: [u8; 32],
}

impl Tape {
    pub fn new(seed: Seed) -> Self {
        let mut h = Sha256::new();
        h.update(b"tvstab/tape/v1");
        h.update(seed.0.to_le_bytes());
        Self { seed, path: Vec::new(), key: h.finalize().into() }
    }

    pub fn from_u128(seed: u128) -> Self {
        Self::new(Seed(seed))
    }

    /// Child tape whose path is this path extended by `label`.
    pub fn derive(&self, label: impl Into<Label>) -> Tape {
        let label = label.into();
        let mut h = Sha256::new();
        h.update(self.key);
        match &label {
            Label::Str(s) => {
                h.update([0u8]);
                h.update((s.len() as u64).to_le_bytes());
                h.update(s.as_bytes());
            }
            Label::Int(i) => {
                h.update([1u8]);
                h.update(i.to_le_bytes());
            }
        }
        let mut path = self.path.clone();
        path.push(label);
        Tape { seed: self.seed, path, key: h.finalize().into() }
    }

    /// Shorthand for `derive(name).derive(index)`.
    pub fn child(&self, name: &str, index: impl Into<Label>) -> Tape {
        self.derive(name).derive(index)
    }

    pub fn seed(&self) -> Seed {
        self.seed
    }

    pub fn path(&self) -> &[Label] {
        &self.path
    }

    /// Generator positioned at draw index zero of this tape.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.key)
    }

    /// Generator for numbered substream `stream` of this tape. Substreams share
    /// the key and differ in the ChaCha stream id, so they never overlap.
    pub fn substream(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(stream.wrapping_add(1));
        rng
    }
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tape({}", self.seed)?;
        for l in &self.path {
            match l {
                Label::Str(s) => write!(f, "/{s}")?,
                Label::Int(i) => write!(f, "/{i}")?,
            }
        }
        write!(f, ")")
    }
}

/// Poisson(1) variate by inversion of the CDF at `u`.
pub fn poisson1_inverse(u: f64) -> u32 {
    let mut k = 0u32;
    let mut pk = (-1.0f64).exp();
    let mut cdf = pk;
    while u >= cdf && k < 64 {
        k += 1;
        pk /= k as f64;
        cdf += pk;
    }
    k
}

/// A point of the process: reference index `h`, height `y`, arrival time `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom {
    pub h: usize,
    pub y: f64,
    pub t: f64,
    /// Position of the atom in its cell's draw order; breaks ties in `t`.
    pub draw: u32,
}

type CellMap = HashMap<(u32, u32), Arc<[Atom]>>;

/// Lazily realized Poisson point process with intensity
/// `reference x Leb x Leb`, partitioned into unit cells
/// `y in [j, j+1) x t in [m, m+1)`.
///
/// Each cell is generated from its own substream of the tape and depends only
/// on `(tape, reference, j, m)`. Cells are memoized, so concurrent and repeated
/// readers see identical atoms.
pub struct PoissonStripStream {
    tape: Tape,
    cumulative: Vec<f64>,
    cells: Mutex<CellMap>,
}

impl PoissonStripStream {
    pub fn new<T: Ord + Clone>(tape: Tape, reference: &FiniteDistribution<T>) -> Self {
        let mut acc = 0.0;
        let cumulative = reference
            .masses()
            .iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect();
        Self { tape, cumulative, cells: Mutex::new(HashMap::new()) }
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn reference_len(&self) -> usize {
        self.cumulative.len()
    }

    fn reference_index(&self, u: f64) -> usize {
        let total = *self.cumulative.last().expect("nonempty reference");
        let i = self.cumulative.partition_point(|&c| c <= u * total);
        i.min(self.cumulative.len() - 1)
    }

    /// Atoms of cell (strip `j`, window `m`), sorted by arrival time.
    pub fn window_atoms(&self, strip: u32, window: u32) -> Arc<[Atom]> {
        if let Some(a) = self.cells.lock().get(&(strip, window)) {
            return a.clone();
        }
        let atoms: Arc<[Atom]> = self.generate(strip, window).into();
        self.cells.lock().entry((strip, window)).or_insert(atoms).clone()
    }

    fn generate(&self, strip: u32, window: u32) -> Vec<Atom> {
        let mut rng = self.tape.substream(((strip as u64) << 32) | window as u64);
        let count = poisson1_inverse(rng.random::<f64>());
        let mut atoms: Vec<Atom> = (0..count)
            .map(|draw| {
                let t = window as f64 + rng.random::<f64>();
                let y = strip as f64 + rng.random::<f64>();
                let h = self.reference_index(rng.random::<f64>());
                Atom { h, y, t, draw }
            })
            .collect();
        atoms.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.draw.cmp(&b.draw)));
        atoms
    }
}
