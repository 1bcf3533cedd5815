//! Guess tables shared by the outer simulation and the inner query.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Symbol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("guess cap {m} * 2^{t} does not fit in 64 bits")]
pub struct CapOverflow {
    pub m: u64,
    pub t: u32,
}

/// `m * 2^t`, the most inner membranes that `m` initial ones can become
/// after `t` steps of division.
pub fn compute_guess_cap(m: u64, t: u32) -> Result<u64, CapOverflow> {
    if m == 0 {
        return Ok(0);
    }
    let err = CapOverflow { m, t };
    let pow = 1u64.checked_shl(t).ok_or(err)?;
    m.checked_mul(pow).ok_or(err)
}

/// Guessed number of applications of each skin/inner communication rule per
/// step, keyed by `(rule ordinal, time)`. The query decrements entries and
/// requires them all to end at zero.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InteractionTable {
    entries: BTreeMap<(usize, u32), i64>,
}

impl InteractionTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, rule: usize, t: u32) -> i64 {
        self.entries.get(&(rule, t)).copied().unwrap_or(0)
    }

    pub fn set(&mut self, rule: usize, t: u32, count: i64) {
        self.entries.insert((rule, t), count);
    }

    pub fn decrement(&mut self, rule: usize, t: u32) {
        *self.entries.entry((rule, t)).or_insert(0) -= 1;
    }

    pub fn is_zero(&self) -> bool {
        self.entries.values().all(|&v| v == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, u32), i64)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }

    /// Entries with a non-zero value, for compact keys.
    pub fn nonzero(&self) -> impl Iterator<Item = ((usize, u32), i64)> + '_ {
        self.iter().filter(|(_, v)| *v != 0)
    }
}

/// Skin objects left without any rule, keyed by `(object, time)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UnusedTable {
    entries: BTreeMap<(Symbol, u32), u64>,
}

impl UnusedTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, object: &Symbol, t: u32) -> u64 {
        self.entries.get(&(object.clone(), t)).copied().unwrap_or(0)
    }

    /// Records a count; zero counts are not stored.
    pub fn set(&mut self, object: Symbol, t: u32, count: u64) {
        if count == 0 {
            self.entries.remove(&(object, t));
        } else {
            self.entries.insert((object, t), count);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Symbol, u32, u64)> + '_ {
        self.entries.iter().map(|((s, t), n)| (s, *t, *n))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tables {
    pub interaction: InteractionTable,
    pub unused: UnusedTable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionEntry {
    pub rule: usize,
    pub t: u32,
    pub count: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnusedEntry {
    pub object: String,
    pub t: u32,
    pub count: u64,
}

/// JSON form: `{"T": [{rule, t, count}], "U": [{object, t, count}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDump {
    #[serde(rename = "T")]
    pub interaction: Vec<InteractionEntry>,
    #[serde(rename = "U")]
    pub unused: Vec<UnusedEntry>,
}

impl Tables {
    pub fn dump(&self) -> TableDump {
        TableDump {
            interaction: self
                .interaction
                .iter()
                .map(|((rule, t), count)| InteractionEntry { rule, t, count })
                .collect(),
            unused: self
                .unused
                .iter()
                .map(|(s, t, count)| UnusedEntry {
                    object: s.to_string(),
                    t,
                    count,
                })
                .collect(),
        }
    }

    pub fn dump_json(&self) -> String {
        serde_json::to_string(&self.dump()).expect("table dump serializes")
    }
}

impl fmt::Display for InteractionTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, ((r, t), v)) in self.nonzero().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{r}@{t}={v}")?;
        }
        Ok(())
    }
}
