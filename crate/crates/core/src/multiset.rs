//! Counted bags of object symbols.
//!
//! A [`Multiset`] never stores a zero count, so structural equality is
//! count-wise equality and the iteration order (by symbol name) is canonical.

use std::collections::btree_map::{self, BTreeMap};
use std::fmt;

use thiserror::Error;

use crate::model::Symbol;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MultisetError {
    #[error("negative count for object `{symbol}`: have {have}, removing {removing}")]
    NegativeCount {
        symbol: Symbol,
        have: u64,
        removing: u64,
    },
    #[error("multiplicity overflow for object `{symbol}`")]
    Overflow { symbol: Symbol },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Multiset {
    counts: BTreeMap<Symbol, u64>,
}

impl Multiset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a multiset from `(symbol, count)` pairs, summing repeats.
    pub fn from_counts<I>(pairs: I) -> Result<Self, MultisetError>
    where
        I: IntoIterator<Item = (Symbol, u64)>,
    {
        let mut m = Multiset::new();
        for (s, n) in pairs {
            m.insert(s, n)?;
        }
        Ok(m)
    }

    pub fn singleton(symbol: Symbol) -> Self {
        let mut counts = BTreeMap::new();
        counts.insert(symbol, 1);
        Multiset { counts }
    }

    /// `|w|_a`.
    pub fn count(&self, symbol: &Symbol) -> u64 {
        self.counts.get(symbol).copied().unwrap_or(0)
    }

    pub fn contains(&self, symbol: &Symbol) -> bool {
        self.counts.contains_key(symbol)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Number of distinct symbols with a positive count.
    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    /// Total number of object instances.
    pub fn total(&self) -> u64 {
        self.counts.values().fold(0u64, |acc, n| acc.saturating_add(*n))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Symbol, u64)> + '_ {
        self.counts.iter().map(|(s, n)| (s, *n))
    }

    pub fn symbols(&self) -> impl Iterator<Item = &Symbol> + '_ {
        self.counts.keys()
    }

    pub fn insert(&mut self, symbol: Symbol, n: u64) -> Result<(), MultisetError> {
        if n == 0 {
            return Ok(());
        }
        match self.counts.entry(symbol) {
            btree_map::Entry::Vacant(e) => {
                e.insert(n);
            }
            btree_map::Entry::Occupied(mut e) => {
                let sum = e
                    .get()
                    .checked_add(n)
                    .ok_or_else(|| MultisetError::Overflow {
                        symbol: e.key().clone(),
                    })?;
                *e.get_mut() = sum;
            }
        }
        Ok(())
    }

    pub fn remove(&mut self, symbol: &Symbol, n: u64) -> Result<(), MultisetError> {
        if n == 0 {
            return Ok(());
        }
        let have = self.count(symbol);
        if have < n {
            return Err(MultisetError::NegativeCount {
                symbol: symbol.clone(),
                have,
                removing: n,
            });
        }
        if have == n {
            self.counts.remove(symbol);
        } else if let Some(c) = self.counts.get_mut(symbol) {
            *c = have - n;
        }
        Ok(())
    }

    pub fn add_all(&mut self, other: &Multiset) -> Result<(), MultisetError> {
        for (s, n) in other.iter() {
            self.insert(s.clone(), n)?;
        }
        Ok(())
    }

    /// Adds `times` copies of every element of `other`.
    pub fn add_scaled(&mut self, other: &Multiset, times: u64) -> Result<(), MultisetError> {
        if times == 0 {
            return Ok(());
        }
        for (s, n) in other.iter() {
            let k = n
                .checked_mul(times)
                .ok_or_else(|| MultisetError::Overflow { symbol: s.clone() })?;
            self.insert(s.clone(), k)?;
        }
        Ok(())
    }

    pub fn remove_all(&mut self, other: &Multiset) -> Result<(), MultisetError> {
        // Check first so a failure leaves `self` untouched.
        for (s, n) in other.iter() {
            let have = self.count(s);
            if have < n {
                return Err(MultisetError::NegativeCount {
                    symbol: s.clone(),
                    have,
                    removing: n,
                });
            }
        }
        for (s, n) in other.iter() {
            self.remove(s, n)?;
        }
        Ok(())
    }

    /// True when every count of `other` is at most the count here.
    pub fn includes(&self, other: &Multiset) -> bool {
        other.iter().all(|(s, n)| self.count(s) >= n)
    }
}

/// Count-wise `base + add - remove`.
pub fn mset_apply(
    base: &Multiset,
    add: &Multiset,
    remove: &Multiset,
) -> Result<Multiset, MultisetError> {
    let mut out = base.clone();
    out.add_all(add)?;
    out.remove_all(remove)?;
    Ok(out)
}

impl fmt::Display for Multiset {
    /// Canonical text form: `a b*2`, or `.` when empty.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str(".");
        }
        for (i, (s, n)) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            if n == 1 {
                write!(f, "{s}")?;
            } else {
                write!(f, "{s}*{n}")?;
            }
        }
        Ok(())
    }
}

impl<'a> IntoIterator for &'a Multiset {
    type Item = (&'a Symbol, &'a u64);
    type IntoIter = btree_map::Iter<'a, Symbol, u64>;

    fn into_iter(self) -> Self::IntoIter {
        self.counts.iter()
    }
}
