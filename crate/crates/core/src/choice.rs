//! Pluggable nondeterminism.
//!
//! A nondeterministic procedure is written once against [`Chooser`] and then
//! run under complete backtracking ([`explore`]), replay of a recorded
//! [`Witness`] ([`replay`]), or seeded sampling ([`RandomChooser`]).
//!
//! The explorer re-executes the procedure from the start for every leaf of the
//! choice tree, feeding back the recorded prefix. Procedures must therefore be
//! deterministic given the sequence of guess results.

use std::cell::Cell;
use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default limit on choice-tree nodes.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

/// A `guess(lo, hi)` site. `tag` names the simulation step that asks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChoicePoint {
    pub tag: &'static str,
    pub lo: u64,
    pub hi: u64,
}

impl ChoicePoint {
    pub fn new(tag: &'static str, lo: u64, hi: u64) -> Self {
        ChoicePoint { tag, lo, hi }
    }

    pub fn binary(tag: &'static str) -> Self {
        ChoicePoint { tag, lo: 0, hi: 1 }
    }
}

/// One recorded guess.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub tag: String,
    pub lo: u64,
    pub hi: u64,
    pub value: u64,
}

impl Choice {
    fn from_point(p: ChoicePoint, value: u64) -> Self {
        Choice {
            tag: p.tag.to_string(),
            lo: p.lo,
            hi: p.hi,
            value,
        }
    }
}

/// The sequence of guesses of one run. Serializes as a JSON array of
/// `{tag, lo, hi, value}` records.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Witness {
    pub choices: Vec<Choice>,
}

impl Witness {
    pub fn len(&self) -> usize {
        self.choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }

    pub fn values(&self) -> Vec<u64> {
        self.choices.iter().map(|c| c.value).collect()
    }

    /// Concatenates two witnesses (outer run followed by a nested query).
    pub fn concat(&self, other: &Witness) -> Witness {
        let mut choices = self.choices.clone();
        choices.extend(other.choices.iter().cloned());
        Witness { choices }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("witness serializes")
    }

    pub fn from_json(text: &str) -> Result<Witness, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChoiceError {
    #[error("malformed choice point `{tag}`: lo {lo} > hi {hi}")]
    InvalidPoint { tag: &'static str, lo: u64, hi: u64 },
    #[error("witness exhausted at guess #{index} (`{tag}`)")]
    ReplayExhausted { index: usize, tag: &'static str },
    #[error("witness value {value} at guess #{index} is outside [{lo}, {hi}] of `{tag}`")]
    ReplayOutOfRange {
        index: usize,
        tag: &'static str,
        lo: u64,
        hi: u64,
        value: u64,
    },
    #[error("witness guess #{index} is `{recorded}` but the run asked for `{requested}`")]
    ReplayMismatch {
        index: usize,
        recorded: String,
        requested: &'static str,
    },
    #[error("run finished with {left} unused witness entries")]
    ReplayTrailing { left: usize },
    #[error("choice-tree budget of {limit} nodes exceeded")]
    BudgetExceeded { limit: u64 },
    #[error("procedure is not deterministic in its guesses (diverged at guess #{index})")]
    Nondeterministic { index: usize },
}

pub trait Chooser {
    /// Returns a value in `[point.lo, point.hi]` and records it.
    fn guess(&mut self, point: ChoicePoint) -> Result<u64, ChoiceError>;

    /// Guesses made so far in this run.
    fn recorded(&self) -> Witness;

    /// Declares that the rest of the run depends only on `key`. Returns true
    /// when an earlier run already showed that no accepting leaf is reachable
    /// from that state, in which case the caller should reject at once.
    fn is_dead(&mut self, key: &str) -> bool {
        let _ = key;
        false
    }
}

fn check_point(p: ChoicePoint) -> Result<(), ChoiceError> {
    if p.lo > p.hi {
        Err(ChoiceError::InvalidPoint {
            tag: p.tag,
            lo: p.lo,
            hi: p.hi,
        })
    } else {
        Ok(())
    }
}

/// Shared node counter. Nested explorations charge the same budget.
#[derive(Debug)]
pub struct Budget {
    limit: u64,
    used: Cell<u64>,
}

impl Budget {
    pub fn new(limit: u64) -> Self {
        Budget {
            limit,
            used: Cell::new(0),
        }
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn used(&self) -> u64 {
        self.used.get()
    }

    pub fn charge(&self, n: u64) -> Result<(), ChoiceError> {
        let used = self.used.get().saturating_add(n);
        self.used.set(used);
        if used > self.limit {
            Err(ChoiceError::BudgetExceeded { limit: self.limit })
        } else {
            Ok(())
        }
    }
}

impl Default for Budget {
    fn default() -> Self {
        Budget::new(DEFAULT_BUDGET)
    }
}

/// Replays a recorded witness.
#[derive(Debug, Clone)]
pub struct ReplayChooser {
    witness: Witness,
    pos: usize,
}

impl ReplayChooser {
    pub fn new(witness: Witness) -> Self {
        ReplayChooser { witness, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.witness.len() - self.pos
    }

    pub fn finish(&self) -> Result<(), ChoiceError> {
        match self.remaining() {
            0 => Ok(()),
            left => Err(ChoiceError::ReplayTrailing { left }),
        }
    }
}

impl Chooser for ReplayChooser {
    fn guess(&mut self, point: ChoicePoint) -> Result<u64, ChoiceError> {
        check_point(point)?;
        let index = self.pos;
        let rec = self
            .witness
            .choices
            .get(index)
            .ok_or(ChoiceError::ReplayExhausted {
                index,
                tag: point.tag,
            })?;
        if rec.tag != point.tag {
            return Err(ChoiceError::ReplayMismatch {
                index,
                recorded: rec.tag.clone(),
                requested: point.tag,
            });
        }
        if rec.value < point.lo || rec.value > point.hi {
            return Err(ChoiceError::ReplayOutOfRange {
                index,
                tag: point.tag,
                lo: point.lo,
                hi: point.hi,
                value: rec.value,
            });
        }
        self.pos += 1;
        Ok(rec.value)
    }

    fn recorded(&self) -> Witness {
        Witness {
            choices: self.witness.choices[..self.pos].to_vec(),
        }
    }
}

/// Uniform seeded sampling. For smoke tests only; never used for verdicts.
#[derive(Debug, Clone)]
pub struct RandomChooser {
    rng: ChaCha8Rng,
    record: Vec<Choice>,
}

impl RandomChooser {
    pub fn new(seed: u64) -> Self {
        RandomChooser {
            rng: ChaCha8Rng::seed_from_u64(seed),
            record: Vec::new(),
        }
    }
}

impl Chooser for RandomChooser {
    fn guess(&mut self, point: ChoicePoint) -> Result<u64, ChoiceError> {
        check_point(point)?;
        let v = self.rng.gen_range(point.lo..=point.hi);
        self.record.push(Choice::from_point(point, v));
        Ok(v)
    }

    fn recorded(&self) -> Witness {
        Witness {
            choices: self.record.clone(),
        }
    }
}

/// Failure memo shared across the runs of one exploration.
#[derive(Default)]
struct DeadStates {
    dead: HashSet<String>,
    /// Checkpoints whose subtree is still being searched, by trail position.
    pending: Vec<(usize, String)>,
}

impl DeadStates {
    /// Every checkpoint deeper than `index` has had its subtree exhausted.
    fn retire_below(&mut self, index: usize) {
        let mut keep = Vec::with_capacity(self.pending.len());
        for (pos, key) in self.pending.drain(..) {
            if pos > index {
                self.dead.insert(key);
            } else {
                keep.push((pos, key));
            }
        }
        self.pending = keep;
    }
}

/// Feeds a fixed prefix, then takes the lowest value at every fresh point.
struct TrailChooser<'a> {
    trail: &'a mut Vec<(ChoicePoint, u64)>,
    pos: usize,
    budget: &'a Budget,
    states: &'a mut DeadStates,
    cut: bool,
}

impl Chooser for TrailChooser<'_> {
    fn guess(&mut self, point: ChoicePoint) -> Result<u64, ChoiceError> {
        check_point(point)?;
        let index = self.pos;
        self.pos += 1;
        if let Some(&(p, v)) = self.trail.get(index) {
            if p != point {
                return Err(ChoiceError::Nondeterministic { index });
            }
            return Ok(v);
        }
        self.budget.charge(1)?;
        self.trail.push((point, point.lo));
        Ok(point.lo)
    }

    fn recorded(&self) -> Witness {
        Witness {
            choices: self.trail[..self.pos.min(self.trail.len())]
                .iter()
                .map(|&(p, v)| Choice::from_point(p, v))
                .collect(),
        }
    }

    fn is_dead(&mut self, key: &str) -> bool {
        if self.states.dead.contains(key) {
            self.cut = true;
            return true;
        }
        let pos = self.pos;
        if !self
            .states
            .pending
            .iter()
            .any(|(p, k)| *p == pos && k == key)
        {
            self.states.pending.push((pos, key.to_string()));
        }
        false
    }
}

/// Result of a complete backtracking search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exploration {
    pub accepted: bool,
    /// The first accepting witness in ascending guess order.
    pub witness: Option<Witness>,
    pub leaves: u64,
}

/// Backtracks over every leaf of `procedure`'s choice tree, trying values in
/// ascending order, and stops at the first accepting leaf.
pub fn explore<E, F>(budget: &Budget, mut procedure: F) -> Result<Exploration, E>
where
    E: From<ChoiceError>,
    F: FnMut(&mut dyn Chooser) -> Result<bool, E>,
{
    let mut trail: Vec<(ChoicePoint, u64)> = Vec::new();
    let mut states = DeadStates::default();
    let mut leaves = 0u64;
    loop {
        let mut chooser = TrailChooser {
            trail: &mut trail,
            pos: 0,
            budget,
            states: &mut states,
            cut: false,
        };
        let accepted = procedure(&mut chooser)?;
        let used = chooser.pos;
        let cut = chooser.cut;
        if used != trail.len() {
            // A dead state met inside the replayed prefix ends the run early.
            if !(cut && used < trail.len()) {
                return Err(ChoiceError::Nondeterministic { index: used }.into());
            }
            trail.truncate(used);
        }
        leaves += 1;
        budget.charge(1)?;
        if accepted {
            let witness = Witness {
                choices: trail
                    .iter()
                    .map(|&(p, v)| Choice::from_point(p, v))
                    .collect(),
            };
            return Ok(Exploration {
                accepted: true,
                witness: Some(witness),
                leaves,
            });
        }
        // Advance the deepest point that still has an untried value.
        loop {
            match trail.last_mut() {
                None => {
                    return Ok(Exploration {
                        accepted: false,
                        witness: None,
                        leaves,
                    })
                }
                Some((p, v)) if *v < p.hi => {
                    *v += 1;
                    break;
                }
                Some(_) => {
                    trail.pop();
                }
            }
        }
        states.retire_below(trail.len() - 1);
    }
}

/// Runs `procedure` once against `witness`, requiring every entry to be used.
pub fn replay<T, E, F>(witness: &Witness, procedure: F) -> Result<T, E>
where
    E: From<ChoiceError>,
    F: FnOnce(&mut dyn Chooser) -> Result<T, E>,
{
    let mut chooser = ReplayChooser::new(witness.clone());
    let out = procedure(&mut chooser)?;
    chooser.finish()?;
    Ok(out)
}
