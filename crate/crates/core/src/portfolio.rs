//! Equal-weighted selections over an `N`-asset universe.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PortfolioParseError {
    #[error("mask has {found} positions but the universe has {expected} assets")]
    WrongLength { expected: usize, found: usize },
    #[error("invalid mask character {0:?} (expected '0' or '1')")]
    BadChar(char),
    #[error("unknown ticker {0:?}")]
    UnknownTicker(String),
}

/// Selection mask: one bit per asset, weight `1/m` on each of the `m`
/// selected assets.
///
/// The textual form is a string of `N` characters where position `i` is
/// `'1'` when asset `i` is held, optionally prefixed with `0b`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Portfolio {
    n: usize,
    words: Vec<u64>,
}

impl Portfolio {
    pub fn empty(n: usize) -> Self {
        Self { n, words: vec![0; n.div_ceil(64)] }
    }

    pub fn full(n: usize) -> Self {
        Self::from_indices(n, 0..n)
    }

    /// # Panics
    /// If any index is `>= n`.
    pub fn from_indices<I: IntoIterator<Item = usize>>(n: usize, indices: I) -> Self {
        let mut p = Self::empty(n);
        for i in indices {
            p.insert(i);
        }
        p
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        Self::from_indices(bits.len(), bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i))
    }

    /// Bit `i` of `bits` selects asset `i`. Only valid for `n <= 64`.
    pub fn from_u64(n: usize, bits: u64) -> Self {
        assert!(n <= 64, "from_u64 supports at most 64 assets");
        let masked = if n == 64 { bits } else { bits & ((1u64 << n) - 1) };
        Self { n, words: if n == 0 { vec![] } else { vec![masked] } }
    }

    /// Parses the `0`/`1` string form. The string must have exactly `n`
    /// positions after the optional `0b` prefix.
    pub fn parse_bits(s: &str, n: usize) -> Result<Self, PortfolioParseError> {
        let body = s.trim();
        let body = body.strip_prefix("0b").unwrap_or(body);
        let len = body.chars().count();
        if len != n {
            return Err(PortfolioParseError::WrongLength { expected: n, found: len });
        }
        let mut p = Self::empty(n);
        for (i, c) in body.chars().enumerate() {
            match c {
                '1' => p.insert(i),
                '0' => {}
                other => return Err(PortfolioParseError::BadChar(other)),
            }
        }
        Ok(p)
    }

    /// Resolves a comma-separated ticker list against `tickers`.
    pub fn parse_tickers(s: &str, tickers: &[String]) -> Result<Self, PortfolioParseError> {
        let mut p = Self::empty(tickers.len());
        for name in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let idx = tickers
                .iter()
                .position(|t| t == name)
                .ok_or_else(|| PortfolioParseError::UnknownTicker(name.to_string()))?;
            p.insert(idx);
        }
        Ok(p)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Population count `m`.
    #[inline]
    pub fn size(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        debug_assert!(i < self.n);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn insert(&mut self, i: usize) {
        assert!(i < self.n, "asset index {i} out of range for {} assets", self.n);
        self.words[i / 64] |= 1 << (i % 64);
    }

    #[inline]
    pub fn remove(&mut self, i: usize) {
        assert!(i < self.n, "asset index {i} out of range for {} assets", self.n);
        self.words[i / 64] &= !(1 << (i % 64));
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        assert!(i < self.n, "asset index {i} out of range for {} assets", self.n);
        self.words[i / 64] ^= 1 << (i % 64);
    }

    /// Selected asset indices in increasing order.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let b = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(wi * 64 + b)
            })
        })
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.n).map(|i| self.contains(i)).collect()
    }

    pub fn to_bit_string(&self) -> String {
        (0..self.n).map(|i| if self.contains(i) { '1' } else { '0' }).collect()
    }

    /// Applies a relabeling: asset `i` of `self` becomes asset `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n);
        Self::from_indices(self.n, self.indices().map(|i| perm[i]))
    }
}

impl fmt::Display for Portfolio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bit_string())
    }
}

impl fmt::Debug for Portfolio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Portfolio({})", self.to_bit_string())
    }
}

impl Serialize for Portfolio {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_bit_string())
    }
}

impl<'de> Deserialize<'de> for Portfolio {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let n = s.trim().strip_prefix("0b").unwrap_or(s.trim()).chars().count();
        Self::parse_bits(&s, n).map_err(serde::de::Error::custom)
    }
}
