//! The consistency query for inner membranes.
//!
//! Inner membranes are simulated one at a time, depth first. When a membrane
//! divides, the membrane being simulated continues as the first child and the
//! second child is pushed on a stack, so only one membrane plus the stack is
//! ever held in memory. Every simulated send-in or send-out decrements the
//! guessed count in the interaction table; the query succeeds when all
//! membranes halt by the emission step and every count is back to zero.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::choice::{ChoicePoint, Chooser};
use crate::model::{Charge, Label, Rule, Symbol, SystemSpec};
use crate::multiset::Multiset;
use crate::outer::{pick, SimError};
use crate::tables::{InteractionTable, Tables};

pub const TAG_DIVIDE: &str = "inner.divide";
pub const TAG_SENDIN: &str = "inner.sendin";
pub const TAG_SENDOUT: &str = "inner.sendout";
pub const TAG_EVOLVE: &str = "inner.evolve";

/// How a stack entry came to exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Origin {
    /// Present in the initial configuration; simulated from step `t_push`.
    Initial,
    /// Second child of a division at step `t_push`; it exists from the next
    /// step on.
    Division,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StackEntry {
    pub w: Multiset,
    pub label: Label,
    pub charge: Charge,
    pub t_push: u32,
    pub origin: Origin,
}

impl StackEntry {
    /// First step this membrane takes part in.
    pub fn first_step(&self) -> u32 {
        match self.origin {
            Origin::Initial => self.t_push,
            Origin::Division => self.t_push + 1,
        }
    }

    fn key(&self, out: &mut String) {
        let _ = write!(
            out,
            "{}^{}:{}@{}",
            self.label,
            self.charge,
            self.w,
            self.first_step()
        );
    }
}

/// Pending membranes, last in first out.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InnerStack {
    entries: Vec<StackEntry>,
}

impl InnerStack {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, e: StackEntry) {
        self.entries.push(e);
    }

    pub fn pop(&mut self) -> Option<StackEntry> {
        self.entries.pop()
    }

    pub fn entries(&self) -> &[StackEntry] {
        &self.entries
    }

    /// Order-free rendering. The outcome of the remaining search does not
    /// depend on the order in which pending membranes are simulated.
    fn key(&self, out: &mut String) {
        let mut parts: Vec<String> = self
            .entries
            .iter()
            .map(|e| {
                let mut s = String::new();
                e.key(&mut s);
                s
            })
            .collect();
        parts.sort();
        out.push_str(&parts.join(";"));
    }
}

/// One entry per initial inner membrane, neutral, pushed at step 0.
pub fn init_stack(spec: &SystemSpec) -> InnerStack {
    InnerStack {
        entries: spec
            .inner_init
            .iter()
            .map(|(label, w)| StackEntry {
                w: w.clone(),
                label: label.clone(),
                charge: Charge::Neutral,
                t_push: 0,
                origin: Origin::Initial,
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InnerPhase {
    Divide,
    SendIn,
    SendOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryOptions {
    /// Order in which blocking rules are offered within a step. Evolution
    /// always comes last.
    pub phase_order: [InnerPhase; 3],
    /// Only offer a communication rule while its table entry is positive, and
    /// force the last evolution rule of an object to take every free copy.
    pub tighten: bool,
    /// Skip states already shown to fail.
    pub memo: bool,
}

impl Default for QueryOptions {
    fn default() -> Self {
        QueryOptions {
            phase_order: [InnerPhase::Divide, InnerPhase::SendIn, InnerPhase::SendOut],
            tighten: true,
            memo: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueryStats {
    pub max_stack: usize,
    /// Pushes that took the stack above `m + t`.
    pub bound_violations: u64,
    pub pops: u64,
}

impl QueryStats {
    pub fn merge(&mut self, other: &QueryStats) {
        self.max_stack = self.max_stack.max(other.max_stack);
        self.bound_violations += other.bound_violations;
        self.pops += other.pops;
    }
}

/// Why a query branch failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryReject {
    OverConsumed,
    NotMaximal,
    /// A send-in was skipped although the skin left a trigger idle.
    IdleSkinObject,
    NotHalted,
    /// Some interaction count did not end at zero.
    Residual,
    /// The state was already explored without success.
    Known,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryRun {
    pub accepted: bool,
    /// Interaction table after all decrements.
    pub residual: InteractionTable,
    pub reject: Option<QueryReject>,
}

/// The fixed inputs of one query.
pub struct Query<'a> {
    pub spec: &'a SystemSpec,
    pub tables: &'a Tables,
    /// Emission step: membranes run through steps up to and including it.
    pub t: u32,
    /// Skin contents after the emission step, for the final halting check.
    pub final_skin: &'a Multiset,
    pub options: QueryOptions,
}

fn rules_on<'s>(
    spec: &'s SystemSpec,
    label: &'s Label,
    charge: Charge,
) -> impl Iterator<Item = (usize, &'s Rule)> + 's {
    spec.rules()
        .filter(move |(_, r)| r.label() == label && r.charge() == charge)
}

impl Query<'_> {
    fn memo_key(&self, head: &str, current: Option<&StackEntry>, residual: &InteractionTable, stack: &InnerStack) -> String {
        let mut k = String::from(head);
        if let Some(e) = current {
            e.key(&mut k);
        }
        let _ = write!(k, "|{residual}|");
        stack.key(&mut k);
        k
    }

    /// True when `[w]_label^charge` has nothing left to do, given the skin
    /// contents it would see next.
    fn halted(&self, label: &Label, charge: Charge, w: &Multiset) -> bool {
        rules_on(self.spec, label, charge).all(|(_, r)| match r {
            Rule::SendIn { object, .. } => !self.final_skin.contains(object),
            r => !w.contains(r.trigger()),
        })
    }

    /// Simulates one popped membrane through step `t`. Division pushes
    /// second children onto `stack`.
    pub fn simulate_inner_membrane(
        &self,
        entry: StackEntry,
        residual: &mut InteractionTable,
        stack: &mut InnerStack,
        chooser: &mut dyn Chooser,
        stats: &mut QueryStats,
    ) -> Result<Option<QueryReject>, SimError> {
        let spec = self.spec;
        let tight = self.options.tighten;
        let StackEntry {
            mut w,
            label,
            mut charge,
            ..
        } = entry.clone();
        let start = entry.first_step();
        let limit = spec.initial_inner() + self.t as usize;

        for step in start..=self.t {
            if self.options.memo {
                let current = StackEntry {
                    w: w.clone(),
                    label: label.clone(),
                    charge,
                    t_push: step,
                    origin: Origin::Initial,
                };
                let key = self.memo_key("s", Some(&current), residual, stack);
                if chooser.is_dead(&key) {
                    return Ok(Some(QueryReject::Known));
                }
            }

            let mut removed = Multiset::new();
            let mut added = Multiset::new();
            let mut next_charge = charge;
            let mut blocked = false;
            let mut twin: Option<(Symbol, Symbol, Charge)> = None;

            for phase in self.options.phase_order {
                for (r, rule) in rules_on(spec, &label, charge) {
                    if blocked {
                        break;
                    }
                    match (phase, rule) {
                        (
                            InnerPhase::Divide,
                            Rule::Divide {
                                object,
                                first_charge,
                                first,
                                second_charge,
                                second,
                                ..
                            },
                        ) if w.contains(object) => {
                            if chooser.guess(ChoicePoint::binary(TAG_DIVIDE))? == 1 {
                                removed.insert(object.clone(), 1)?;
                                added.insert(first.clone(), 1)?;
                                next_charge = *first_charge;
                                blocked = true;
                                twin = Some((first.clone(), second.clone(), *second_charge));
                            }
                        }
                        (
                            InnerPhase::SendIn,
                            Rule::SendIn {
                                new_charge,
                                product,
                                ..
                            },
                        ) if !tight || residual.get(r, step) > 0 => {
                            if chooser.guess(ChoicePoint::binary(TAG_SENDIN))? == 1 {
                                residual.decrement(r, step);
                                added.insert(product.clone(), 1)?;
                                next_charge = *new_charge;
                                blocked = true;
                            }
                        }
                        (
                            InnerPhase::SendOut,
                            Rule::SendOut {
                                object, new_charge, ..
                            },
                        ) if w.contains(object) && (!tight || residual.get(r, step) > 0) => {
                            if chooser.guess(ChoicePoint::binary(TAG_SENDOUT))? == 1 {
                                residual.decrement(r, step);
                                removed.insert(object.clone(), 1)?;
                                next_charge = *new_charge;
                                blocked = true;
                            }
                        }
                        _ => {}
                    }
                }
            }

            let evolve: Vec<(usize, &Rule)> = rules_on(spec, &label, charge)
                .filter(|(_, r)| matches!(r, Rule::Evolve { .. }) && w.contains(r.trigger()))
                .collect();
            for (pos, (_, rule)) in evolve.iter().enumerate() {
                let Rule::Evolve {
                    object, product, ..
                } = rule
                else {
                    continue;
                };
                let (lo, hi) = if tight {
                    let left = w.count(object).saturating_sub(removed.count(object));
                    let last = !evolve[pos + 1..].iter().any(|(_, o)| o.trigger() == object);
                    (if last { left } else { 0 }, left)
                } else {
                    (0, w.count(object))
                };
                let n = pick(chooser, TAG_EVOLVE, lo, hi)?;
                removed.insert(object.clone(), n)?;
                added.add_scaled(product, n)?;
            }

            if !w.includes(&removed) {
                return Ok(Some(QueryReject::OverConsumed));
            }
            for a in w.symbols() {
                if w.count(a) == removed.count(a) {
                    continue;
                }
                let idle_rule = rules_on(spec, &label, charge).any(|(_, r)| {
                    r.trigger() == a
                        && match r {
                            Rule::Evolve { .. } => true,
                            Rule::SendOut { .. } | Rule::Divide { .. } => !blocked,
                            Rule::SendIn { .. } => false,
                        }
                });
                if idle_rule {
                    return Ok(Some(QueryReject::NotMaximal));
                }
            }
            if !blocked {
                let starved = rules_on(spec, &label, charge).any(|(_, r)| match r {
                    Rule::SendIn { object, .. } => self.tables.unused.get(object, step) > 0,
                    _ => false,
                });
                if starved {
                    return Ok(Some(QueryReject::IdleSkinObject));
                }
            }

            w.remove_all(&removed)?;
            w.add_all(&added)?;
            charge = next_charge;

            if let Some((first, second, second_charge)) = twin {
                let mut sibling = w.clone();
                sibling.remove(&first, 1)?;
                sibling.insert(second, 1)?;
                stack.push(StackEntry {
                    w: sibling,
                    label: label.clone(),
                    charge: second_charge,
                    t_push: step,
                    origin: Origin::Division,
                });
                stats.max_stack = stats.max_stack.max(stack.len());
                if stack.len() > limit {
                    stats.bound_violations += 1;
                }
            }
        }

        if !self.halted(&label, charge, &w) {
            return Ok(Some(QueryReject::NotHalted));
        }
        Ok(None)
    }

    /// Runs the whole query once under `chooser`.
    pub fn run(
        &self,
        chooser: &mut dyn Chooser,
        stats: &mut QueryStats,
    ) -> Result<QueryRun, SimError> {
        let mut stack = init_stack(self.spec);
        stats.max_stack = stats.max_stack.max(stack.len());
        let mut residual = self.tables.interaction.clone();
        let fail = |residual: InteractionTable, why| QueryRun {
            accepted: false,
            residual,
            reject: Some(why),
        };
        while !stack.is_empty() {
            if self.options.memo {
                let key = self.memo_key("p", None, &residual, &stack);
                if chooser.is_dead(&key) {
                    return Ok(fail(residual, QueryReject::Known));
                }
            }
            let entry = stack.pop().expect("stack is not empty");
            stats.pops += 1;
            if let Some(why) =
                self.simulate_inner_membrane(entry, &mut residual, &mut stack, chooser, stats)?
            {
                return Ok(fail(residual, why));
            }
        }
        if residual.is_zero() {
            Ok(QueryRun {
                accepted: true,
                residual,
                reject: None,
            })
        } else {
            Ok(fail(residual, QueryReject::Residual))
        }
    }
}

/// One run of the query: is there a halting computation of the inner
/// membranes through step `t` that matches the tables exactly?
pub fn answer_query(
    spec: &SystemSpec,
    tables: &Tables,
    t: u32,
    final_skin: &Multiset,
    chooser: &mut dyn Chooser,
    options: QueryOptions,
    stats: &mut QueryStats,
) -> Result<QueryRun, SimError> {
    Query {
        spec,
        tables,
        t,
        final_skin,
        options,
    }
    .run(chooser, stats)
}

/// Labels of rules that decrement the interaction table.
pub fn communication_rules(spec: &SystemSpec) -> BTreeSet<usize> {
    spec.rules()
        .filter(|(_, r)| {
            !spec.is_skin(r.label()) && matches!(r, Rule::SendIn { .. } | Rule::SendOut { .. })
        })
        .map(|(i, _)| i)
        .collect()
}
