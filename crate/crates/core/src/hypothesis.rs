//! Finite hypothesis classes over the shattered domain `{x_0, …, x_{d-1}}`.

use std::collections::HashSet;
use std::fmt;

use crate::data::{Dataset, PointId};
use crate::error::{Error, Result};

/// Largest domain for which `full_class` enumerates every labeling.
pub const FULL_CLASS_MAX_D: usize = 20;

/// Largest domain a single hypothesis can label.
pub const MAX_D: usize = 64;

/// A labeling of the `d` domain points.
///
/// Stored as the integer whose binary expansion is the label vector with
/// `labels[0]` as the most significant bit, so the derived order is the
/// canonical order used for tie-breaking.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Hypothesis {
    d: u8,
    code: u64,
}

impl Hypothesis {
    pub fn from_code(d: usize, code: u64) -> Result<Self> {
        if d == 0 || d > MAX_D {
            return Err(Error::domain(format!("hypothesis length {d} outside [1, {MAX_D}]")));
        }
        if d < 64 && code >> d != 0 {
            return Err(Error::domain(format!("code {code} does not fit in {d} bits")));
        }
        Ok(Hypothesis { d: d as u8, code })
    }

    pub fn from_labels(labels: &[bool]) -> Result<Self> {
        let d = labels.len();
        if d == 0 || d > MAX_D {
            return Err(Error::domain(format!("hypothesis length {d} outside [1, {MAX_D}]")));
        }
        let code = labels.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64);
        Ok(Hypothesis { d: d as u8, code })
    }

    /// All points labeled `bit`.
    pub fn constant(d: usize, bit: bool) -> Result<Self> {
        Self::from_labels(&vec![bit; d])
    }

    pub fn d(&self) -> usize {
        self.d as usize
    }

    pub fn code(&self) -> u64 {
        self.code
    }

    #[inline]
    pub fn label(&self, point: PointId) -> bool {
        debug_assert!(point.index() < self.d());
        (self.code >> (self.d() - 1 - point.index())) & 1 == 1
    }

    pub fn labels(&self) -> Vec<bool> {
        (0..self.d()).map(|j| self.label(PointId(j))).collect()
    }

    pub fn hamming(&self, other: &Hypothesis) -> u32 {
        (self.code ^ other.code).count_ones()
    }

    /// Restriction to `subset`, packed in subset order.
    fn restrict(&self, subset: &[PointId]) -> u64 {
        subset.iter().fold(0u64, |acc, &p| (acc << 1) | self.label(p) as u64)
    }
}

impl fmt::Debug for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for j in 0..self.d() {
            if j > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", self.label(PointId(j)) as u8)?;
        }
        write!(f, ")")
    }
}

/// A non-empty, deduplicated, canonically sorted set of hypotheses.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HypothesisClass {
    d: usize,
    members: Vec<Hypothesis>,
    full: bool,
}

impl HypothesisClass {
    pub fn new(d: usize, members: impl IntoIterator<Item = Hypothesis>) -> Result<Self> {
        let mut members: Vec<Hypothesis> = members.into_iter().collect();
        if members.is_empty() {
            return Err(Error::domain("hypothesis class must be non-empty"));
        }
        if let Some(h) = members.iter().find(|h| h.d() != d) {
            return Err(Error::domain(format!(
                "hypothesis {h:?} has length {} but d = {d}",
                h.d()
            )));
        }
        members.sort();
        members.dedup();
        let full = d < 64 && members.len() as u128 == 1u128 << d;
        Ok(HypothesisClass { d, members, full })
    }

    /// Every labeling of `d` points.
    pub fn full(d: usize) -> Result<Self> {
        if d == 0 || d > FULL_CLASS_MAX_D {
            return Err(Error::domain(format!(
                "full class needs 1 <= d <= {FULL_CLASS_MAX_D}, got {d}"
            )));
        }
        let members = (0..1u64 << d).map(|code| Hypothesis { d: d as u8, code }).collect();
        Ok(HypothesisClass { d, members, full: true })
    }

    pub fn d(&self) -> usize {
        self.d
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

    /// True when the class contains all `2^d` labelings.
    pub fn is_full(&self) -> bool {
        self.full
    }

    pub fn contains(&self, h: &Hypothesis) -> bool {
        self.members.binary_search(h).is_ok()
    }

    /// Member closest to `target` in Hamming distance, smallest on ties.
    pub fn nearest(&self, target: &Hypothesis) -> Hypothesis {
        if self.full || self.contains(target) {
            return *target;
        }
        *self
            .members
            .iter()
            .min_by_key(|h| h.hamming(target))
            .expect("class is non-empty")
    }

    /// True iff every labeling of `subset` is realized by some member.
    pub fn shatters(&self, subset: &[PointId]) -> bool {
        let k = subset.len();
        if k == 0 {
            return true;
        }
        if k >= 64 || (self.members.len() as u128) < (1u128 << k) {
            return false;
        }
        if self.full {
            return true;
        }
        let patterns: HashSet<u64> = self.members.iter().map(|h| h.restrict(subset)).collect();
        patterns.len() as u128 == 1u128 << k
    }

    /// Size of the largest shattered subset, by exhaustive search.
    pub fn vc_dimension(&self) -> usize {
        if self.full {
            return self.d;
        }
        // A class with n members cannot shatter more than log2(n) points.
        let cap = (usize::BITS - 1 - self.members.len().leading_zeros()) as usize;
        for k in (1..=cap.min(self.d)).rev() {
            if subsets_of_size(self.d, k).any(|s| self.shatters(&s)) {
                return k;
            }
        }
        0
    }

    /// Members with zero empirical error on `data`.
    pub fn consistent_set(&self, data: &Dataset) -> Vec<Hypothesis> {
        self.members.iter().copied().filter(|h| data.mistakes(h) == 0).collect()
    }
}

/// Lexicographic enumeration of the `k`-subsets of `0..d`.
fn subsets_of_size(d: usize, k: usize) -> impl Iterator<Item = Vec<PointId>> {
    let mut idx: Vec<usize> = (0..k).collect();
    let mut done = k > d;
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let out = idx.iter().map(|&j| PointId(j)).collect();
        // advance
        let mut i = k;
        loop {
            if i == 0 {
                done = true;
                break;
            }
            i -= 1;
            if idx[i] < d - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    })
}
