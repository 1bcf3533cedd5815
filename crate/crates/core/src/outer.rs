//! Simulation of the outermost membrane with guessed inner interactions.
//!
//! The skin is simulated exactly. Everything exchanged with inner membranes
//! is guessed and written to the [`Tables`], which the inner query later
//! checks. Within a step every phase reads the pre-step contents; effects are
//! collected as markings and applied together at the end.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::choice::{ChoiceError, ChoicePoint, Chooser};
use crate::model::{Charge, Label, Rule, Symbol, SystemSpec};
use crate::multiset::{Multiset, MultisetError};
use crate::tables::{compute_guess_cap, Tables};

/// Failures of the table simulations that are not verdicts.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error(transparent)]
    Choice(#[from] ChoiceError),
    #[error(transparent)]
    Multiset(#[from] MultisetError),
}

pub const TAG_SENDIN: &str = "outer.sendin";
pub const TAG_SENDOUT: &str = "outer.sendout";
pub const TAG_EVOLVE: &str = "outer.evolve";
pub const TAG_ENV: &str = "outer.env";

/// Guess at `[lo, hi]`; a single-valued range is taken without a guess.
pub(crate) fn pick(
    chooser: &mut dyn Chooser,
    tag: &'static str,
    lo: u64,
    hi: u64,
) -> Result<u64, ChoiceError> {
    if lo == hi {
        Ok(lo)
    } else {
        chooser.guess(ChoicePoint::new(tag, lo, hi))
    }
}

/// Range tightening for the outer guesses. Each one only drops branches that
/// are rejected anyway, so the set of accepted runs is unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OuterOptions {
    /// Bound guesses by the still unmarked copies instead of the pre-step
    /// count, cap communication on each inner label by the number of
    /// membranes that label can have, and force the last evolution rule of
    /// an object to take every copy that would otherwise stay idle.
    pub tighten: bool,
}

impl Default for OuterOptions {
    fn default() -> Self {
        OuterOptions { tighten: true }
    }
}

/// Skin contents, environment, charge and current step.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OuterState {
    pub w: Multiset,
    pub env: Multiset,
    pub charge: Charge,
    pub t: u32,
}

impl OuterState {
    pub fn initial(spec: &SystemSpec) -> Self {
        OuterState {
            w: spec.skin_init.clone(),
            env: Multiset::new(),
            charge: Charge::Neutral,
            t: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Emission {
    Yes,
    No,
}

/// Why an outer branch died.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    /// Markings removed more copies of an object than the skin held.
    OverConsumed,
    /// An unmarked object had an applicable skin rule.
    NotMaximal,
    /// A result was sent out but the skin could still act.
    NotHalted,
    /// The bound was reached without a result.
    NoEmission,
}

/// A branch that sent `yes` or `no` to the environment at step `halt_time`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmittedRun {
    pub result: Emission,
    pub halt_time: u32,
    pub tables: Tables,
    /// Skin state after the emitting step.
    pub state: OuterState,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OuterRun {
    Emitted(EmittedRun),
    Rejected(RejectReason),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepOutcome {
    Next(OuterState),
    Emitted(OuterState, Emission),
    Rejected(RejectReason),
}

/// Rules grouped by the role they play in the outer simulation.
#[derive(Debug, Clone)]
pub struct OuterRules {
    /// Send-in rules into inner membranes.
    pub inner_sendin: Vec<usize>,
    /// Send-out rules from inner membranes into the skin.
    pub inner_sendout: Vec<usize>,
    pub skin_evolve: Vec<usize>,
    pub skin_sendout: Vec<usize>,
    /// Initial inner membranes per label.
    pub initial_per_label: BTreeMap<Label, u64>,
    /// Inner labels with at least one division rule.
    pub dividing: Vec<Label>,
    pub m: u64,
}

impl OuterRules {
    pub fn new(spec: &SystemSpec) -> Self {
        let mut r = OuterRules {
            inner_sendin: Vec::new(),
            inner_sendout: Vec::new(),
            skin_evolve: Vec::new(),
            skin_sendout: Vec::new(),
            initial_per_label: BTreeMap::new(),
            dividing: Vec::new(),
            m: spec.initial_inner() as u64,
        };
        for (label, _) in &spec.inner_init {
            *r.initial_per_label.entry(label.clone()).or_insert(0) += 1;
        }
        for (i, rule) in spec.rules() {
            let skin = spec.is_skin(rule.label());
            match rule {
                Rule::SendIn { .. } if !skin => r.inner_sendin.push(i),
                Rule::SendOut { .. } if !skin => r.inner_sendout.push(i),
                Rule::SendOut { .. } => r.skin_sendout.push(i),
                Rule::Evolve { .. } if skin => r.skin_evolve.push(i),
                Rule::Divide { label, .. } if !skin => {
                    if !r.dividing.contains(label) {
                        r.dividing.push(label.clone());
                    }
                }
                _ => {}
            }
        }
        r
    }

    /// Most membranes with `label` that can exist at step `t`.
    fn label_cap(&self, label: &Label, t: u32) -> u64 {
        let m = self.initial_per_label.get(label).copied().unwrap_or(0);
        if self.dividing.contains(label) {
            compute_guess_cap(m, t).unwrap_or(u64::MAX)
        } else {
            m
        }
    }

    fn skin_has_evolve(&self, spec: &SystemSpec, charge: Charge, object: &Symbol) -> bool {
        self.skin_evolve.iter().any(|&r| {
            let rule = &spec.rules[r];
            rule.charge() == charge && rule.trigger() == object
        })
    }

    fn skin_has_sendout(&self, spec: &SystemSpec, charge: Charge, object: &Symbol) -> bool {
        self.skin_sendout.iter().any(|&r| {
            let rule = &spec.rules[r];
            rule.charge() == charge && rule.trigger() == object
        })
    }

    /// No skin evolution or send-out rule can fire on `w` with `charge`.
    /// Send-ins are left to the inner query, which knows the inner charges.
    pub fn skin_quiescent(&self, spec: &SystemSpec, w: &Multiset, charge: Charge) -> bool {
        w.symbols().all(|a| {
            !self.skin_has_evolve(spec, charge, a) && !self.skin_has_sendout(spec, charge, a)
        })
    }
}

fn unmarked(w: &Multiset, removed: &Multiset, a: &Symbol) -> u64 {
    w.count(a).saturating_sub(removed.count(a))
}

/// One step of the outer simulation at time `state.t`.
pub fn simulate_outer_step(
    spec: &SystemSpec,
    rules: &OuterRules,
    state: &OuterState,
    tables: &mut Tables,
    chooser: &mut dyn Chooser,
    options: &OuterOptions,
) -> Result<StepOutcome, SimError> {
    let t = state.t;
    let w = &state.w;
    let tight = options.tighten;
    let cap = compute_guess_cap(rules.m, t).unwrap_or(u64::MAX);
    let mut removed = Multiset::new();
    let mut added = Multiset::new();
    let mut env_add = Multiset::new();
    let mut new_charge = state.charge;
    let mut label_used: BTreeMap<&Label, u64> = BTreeMap::new();
    let label_left = |label_used: &BTreeMap<&Label, u64>, label: &Label| -> u64 {
        let used = label_used.get(label).copied().unwrap_or(0);
        rules.label_cap(label, t).saturating_sub(used)
    };

    // Send-in from the skin; only the trigger's presence is observable here.
    for &r in &rules.inner_sendin {
        let rule = &spec.rules[r];
        let a = rule.trigger();
        if w.count(a) == 0 {
            continue;
        }
        let hi = if tight {
            unmarked(w, &removed, a)
                .min(cap)
                .min(label_left(&label_used, rule.label()))
        } else {
            w.count(a).min(cap)
        };
        let n = pick(chooser, TAG_SENDIN, 0, hi)?;
        tables.interaction.set(r, t, n as i64);
        removed.insert(a.clone(), n)?;
        *label_used.entry(rule.label()).or_insert(0) += n;
    }

    // Send-out from inner membranes, offered unconditionally.
    for &r in &rules.inner_sendout {
        let rule = &spec.rules[r];
        let hi = if tight {
            cap.min(label_left(&label_used, rule.label()))
        } else {
            cap
        };
        let n = pick(chooser, TAG_SENDOUT, 0, hi)?;
        tables.interaction.set(r, t, n as i64);
        if let Rule::SendOut { product, .. } = rule {
            added.insert(product.clone(), n)?;
        }
        *label_used.entry(rule.label()).or_insert(0) += n;
    }

    // Skin evolution.
    for (pos, &r) in rules.skin_evolve.iter().enumerate() {
        let Rule::Evolve {
            charge,
            object,
            product,
            ..
        } = &spec.rules[r]
        else {
            continue;
        };
        if *charge != state.charge || w.count(object) == 0 {
            continue;
        }
        let (lo, hi) = if tight {
            let left = unmarked(w, &removed, object);
            let last = !rules.skin_evolve[pos + 1..].iter().any(|&q| {
                let other = &spec.rules[q];
                other.charge() == state.charge && other.trigger() == object
            });
            let spare = u64::from(rules.skin_has_sendout(spec, state.charge, object));
            let lo = if last { left.saturating_sub(spare) } else { 0 };
            (lo, left)
        } else {
            (0, w.count(object))
        };
        let n = pick(chooser, TAG_EVOLVE, lo, hi)?;
        removed.insert(object.clone(), n)?;
        added.add_scaled(product, n)?;
    }

    // Send-out to the environment, at most one per step.
    let mut blocked = false;
    for &r in &rules.skin_sendout {
        let Rule::SendOut {
            charge,
            object,
            new_charge: beta,
            product,
            ..
        } = &spec.rules[r]
        else {
            continue;
        };
        if blocked || *charge != state.charge {
            continue;
        }
        let available = if tight {
            unmarked(w, &removed, object)
        } else {
            w.count(object)
        };
        if available == 0 {
            continue;
        }
        if pick(chooser, TAG_ENV, 0, 1)? == 1 {
            removed.insert(object.clone(), 1)?;
            env_add.insert(product.clone(), 1)?;
            new_charge = *beta;
            blocked = true;
        }
    }

    // Idle objects.
    for a in &spec.alphabet {
        tables.unused.set(a.clone(), t, unmarked(w, &removed, a));
    }

    if !w.includes(&removed) {
        return Ok(StepOutcome::Rejected(RejectReason::OverConsumed));
    }
    for a in w.symbols() {
        if unmarked(w, &removed, a) == 0 {
            continue;
        }
        if rules.skin_has_evolve(spec, state.charge, a)
            || (!blocked && rules.skin_has_sendout(spec, state.charge, a))
        {
            return Ok(StepOutcome::Rejected(RejectReason::NotMaximal));
        }
    }

    let mut next_w = w.clone();
    next_w.remove_all(&removed)?;
    next_w.add_all(&added)?;
    let mut env = state.env.clone();
    env.add_all(&env_add)?;
    let next = OuterState {
        w: next_w,
        env,
        charge: new_charge,
        t: t + 1,
    };

    let emission = if env_add.contains(&Symbol::yes()) {
        Some(Emission::Yes)
    } else if env_add.contains(&Symbol::no()) {
        Some(Emission::No)
    } else {
        None
    };
    Ok(match emission {
        None => StepOutcome::Next(next),
        Some(e) => {
            if rules.skin_quiescent(spec, &next.w, next.charge) {
                StepOutcome::Emitted(next, e)
            } else {
                StepOutcome::Rejected(RejectReason::NotHalted)
            }
        }
    })
}

/// Runs the outer simulation until a result reaches the environment or the
/// bound is hit. `bound` overrides the system's own.
pub fn run_outermost(
    spec: &SystemSpec,
    rules: &OuterRules,
    chooser: &mut dyn Chooser,
    options: &OuterOptions,
    bound: Option<u32>,
) -> Result<OuterRun, SimError> {
    let bound = bound.unwrap_or(spec.bound);
    let mut state = OuterState::initial(spec);
    let mut tables = Tables::default();
    while state.t < bound {
        let t = state.t;
        match simulate_outer_step(spec, rules, &state, &mut tables, chooser, options)? {
            StepOutcome::Next(next) => state = next,
            StepOutcome::Rejected(reason) => return Ok(OuterRun::Rejected(reason)),
            StepOutcome::Emitted(next, result) => {
                return Ok(OuterRun::Emitted(EmittedRun {
                    result,
                    halt_time: t,
                    tables,
                    state: next,
                }))
            }
        }
    }
    Ok(OuterRun::Rejected(RejectReason::NoEmission))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choice::{explore, Budget, Choice, ReplayChooser, Witness};
    use crate::dsl::parse_system;

    const SYS_A: &str = "@psys 1\n@objects s yes no\n@labels h\n@skin h\n@init h: s\n@bound 2\n@rules\n[s]_h^0 -> []_h^+ yes\n";
    const SYS_C: &str = "@psys 1\n@objects a b yes no\n@labels h k\n@skin h\n@init h: a\n@inner k: .\n@bound 4\n@rules\na []_k^0 -> [b]_k^+\n[b]_k^+ -> []_k^0 yes\n[yes]_h^0 -> []_h^+ yes\n";

    fn witness(entries: &[(&str, u64, u64, u64)]) -> Witness {
        Witness {
            choices: entries
                .iter()
                .map(|&(tag, lo, hi, value)| Choice {
                    tag: tag.into(),
                    lo,
                    hi,
                    value,
                })
                .collect(),
        }
    }

    fn step_with(spec: &SystemSpec, w: Witness, options: OuterOptions) -> (StepOutcome, Tables) {
        let rules = OuterRules::new(spec);
        let mut tables = Tables::default();
        let mut c = ReplayChooser::new(w);
        let out = simulate_outer_step(
            spec,
            &rules,
            &OuterState::initial(spec),
            &mut tables,
            &mut c,
            &options,
        )
        .unwrap();
        c.finish().unwrap();
        (out, tables)
    }

    #[test]
    fn skin_only_step() {
        let a = parse_system(SYS_A).unwrap();
        let (out, tables) = step_with(&a, witness(&[(TAG_ENV, 0, 1, 1)]), OuterOptions::default());
        match out {
            StepOutcome::Emitted(s, Emission::Yes) => {
                assert_eq!(s.env, Multiset::singleton(Symbol::yes()));
                assert_eq!(s.charge, Charge::Positive);
                assert!(s.w.is_empty());
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(tables.interaction.iter().count(), 0);

        let (out, _) = step_with(&a, witness(&[(TAG_ENV, 0, 1, 0)]), OuterOptions::default());
        assert_eq!(out, StepOutcome::Rejected(RejectReason::NotMaximal));
    }

    #[test]
    fn send_in_guess_is_capped() {
        let c = parse_system(SYS_C).unwrap();
        // One membrane at step 0, so the cap is 1. Untightened, the send-out
        // guess is still offered; tightened, the send-in used up the label.
        let loose = witness(&[(TAG_SENDIN, 0, 1, 1), (TAG_SENDOUT, 0, 1, 0)]);
        let tight = witness(&[(TAG_SENDIN, 0, 1, 1)]);
        for (options, w) in [(OuterOptions { tighten: false }, loose), (OuterOptions::default(), tight)] {
            let (out, tables) = step_with(&c, w, options);
            match out {
                StepOutcome::Next(s) => assert!(s.w.is_empty()),
                other => panic!("{other:?}"),
            }
            assert_eq!(tables.interaction.get(0, 0), 1);
            assert_eq!(tables.unused.get(&Symbol::new("a"), 0), 0);
        }
    }

    #[test]
    fn accepting_branch_of_sys_c() {
        let c = parse_system(SYS_C).unwrap();
        let rules = OuterRules::new(&c);
        let w = witness(&[
            (TAG_SENDIN, 0, 1, 1),
            (TAG_SENDOUT, 0, 1, 0),
            (TAG_SENDOUT, 0, 2, 1),
            (TAG_SENDOUT, 0, 4, 0),
            (TAG_ENV, 0, 1, 1),
        ]);
        let mut ch = ReplayChooser::new(w);
        let run = run_outermost(&c, &rules, &mut ch, &OuterOptions { tighten: false }, None).unwrap();
        ch.finish().unwrap();
        let OuterRun::Emitted(e) = run else {
            panic!("{run:?}")
        };
        assert_eq!(e.result, Emission::Yes);
        assert_eq!(e.halt_time, 2);
        assert_eq!(e.tables.interaction.get(0, 0), 1);
        assert_eq!(e.tables.interaction.get(1, 1), 1);
    }

    #[test]
    fn exhausting_the_loop_rejects() {
        let text = "@psys 1\n@objects t yes no\n@labels h\n@skin h\n@init h: t\n@bound 3\n@rules\n[t -> t]_h^0\n";
        let spec = parse_system(text).unwrap();
        let rules = OuterRules::new(&spec);
        let mut outcomes = Vec::new();
        let b = Budget::default();
        let ex = explore(&b, |c| -> Result<bool, SimError> {
            outcomes.push(run_outermost(&spec, &rules, c, &OuterOptions::default(), None)?);
            Ok(false)
        })
        .unwrap();
        assert!(!ex.accepted);
        assert_eq!(outcomes, vec![OuterRun::Rejected(RejectReason::NoEmission)]);
    }

    #[test]
    fn emitting_while_busy_is_rejected() {
        let text = "@psys 1\n@objects s t yes no\n@labels h\n@skin h\n@init h: s t\n@bound 3\n@rules\n[s]_h^0 -> []_h^0 yes\n[t]_h^0 -> []_h^0 no\n";
        let spec = parse_system(text).unwrap();
        let (out, _) = step_with(&spec, witness(&[(TAG_ENV, 0, 1, 1)]), OuterOptions::default());
        assert_eq!(out, StepOutcome::Rejected(RejectReason::NotHalted));
    }

    #[test]
    fn idle_table_counts_unmarked_copies() {
        let text = "@psys 1\n@objects a b yes no\n@labels h k\n@skin h\n@init h: a*3\n@inner k: .\n@bound 2\n@rules\na []_k^0 -> [b]_k^+\n";
        let spec = parse_system(text).unwrap();
        let (out, tables) = step_with(&spec, witness(&[(TAG_SENDIN, 0, 1, 1)]), OuterOptions::default());
        assert!(matches!(out, StepOutcome::Next(_)));
        assert_eq!(tables.unused.get(&Symbol::new("a"), 0), 2);
    }
}
