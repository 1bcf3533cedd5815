#![allow(dead_code)]

use std::path::PathBuf;

use psys::engine::{RuleAssignment, SlotAction};
use psys::generate::{generate_system, GenParams};
use psys::{parse_system, Configuration, MembraneInstance, Multiset, Rule, SystemSpec};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// The five hand-written systems with their expected verdict names.
pub const FIXTURES: [(&str, &str); 5] = [
    ("sys-a", "accept"),
    ("sys-b", "accept"),
    ("sys-c", "accept"),
    ("sys-d", "accept"),
    ("sys-e", "reject"),
];

pub fn fixture(name: &str) -> SystemSpec {
    let path = fixture_dir().join(format!("{name}.psys"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_system(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn corpus(seeds: std::ops::RangeInclusive<u64>, base: GenParams) -> Vec<(u64, SystemSpec)> {
    seeds
        .map(|seed| (seed, generate_system(&GenParams { seed, ..base })))
        .collect()
}

/// Why an assignment is not a maximal multiset of applications.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Flaw {
    WrongMembrane(usize),
    Overconsumed(String),
    UnknownClass(MembraneInstance),
    WrongMultiplicity(MembraneInstance),
    CanAdd(usize),
}

/// Consumption of one membrane under `action`, minus send-ins, which draw
/// from the skin.
fn own_consumption(spec: &SystemSpec, action: &SlotAction) -> Multiset {
    let mut used = Multiset::new();
    for (&r, &n) in &action.evolve {
        used.insert(spec.rules[r].trigger().clone(), n).unwrap();
    }
    if let Some(r) = action.blocking {
        if !matches!(spec.rules[r], Rule::SendIn { .. }) {
            used.insert(spec.rules[r].trigger().clone(), 1).unwrap();
        }
    }
    used
}

fn remainder(have: &Multiset, used: &Multiset, what: &str) -> Result<Multiset, Flaw> {
    let mut rest = have.clone();
    rest.remove_all(used).map_err(|_| Flaw::Overconsumed(what.to_string()))?;
    Ok(rest)
}

fn fits(
    spec: &SystemSpec,
    r: usize,
    label: &psys::Label,
    charge: psys::Charge,
    skin: bool,
) -> Result<(), Flaw> {
    let rule = &spec.rules[r];
    let ok = rule.label() == label
        && rule.charge() == charge
        && !(skin && matches!(rule, Rule::SendIn { .. } | Rule::Divide { .. }));
    if ok {
        Ok(())
    } else {
        Err(Flaw::WrongMembrane(r))
    }
}

/// Checks `a` against `conf` directly: every application is legal, nothing
/// is used twice, and no single further rule could be added.
pub fn check_maximal(spec: &SystemSpec, conf: &Configuration, a: &RuleAssignment) -> Result<(), Flaw> {
    let skin = &conf.skin;
    let mut skin_used = own_consumption(spec, &a.skin);
    for &r in a.skin.evolve.keys().chain(a.skin.blocking.iter()) {
        fits(spec, r, &skin.label, skin.charge, true)?;
    }

    let mut classes: Vec<(&MembraneInstance, Vec<(SlotAction, u64)>)> = Vec::new();
    for (inst, &n) in &conf.inner {
        let actions: Vec<(SlotAction, u64)> = match a.inner.iter().find(|c| &c.instance == inst) {
            Some(c) => c.actions.iter().map(|(k, v)| (k.clone(), *v)).collect(),
            None => vec![(SlotAction::default(), n)],
        };
        if actions.iter().map(|(_, m)| *m).sum::<u64>() != n {
            return Err(Flaw::WrongMultiplicity(inst.clone()));
        }
        classes.push((inst, actions));
    }
    for c in &a.inner {
        if !conf.inner.contains_key(&c.instance) {
            return Err(Flaw::UnknownClass(c.instance.clone()));
        }
    }

    let mut inner_rest = Vec::new();
    for (inst, actions) in &classes {
        for (action, mult) in actions {
            if *mult == 0 {
                continue;
            }
            for &r in action.evolve.keys().chain(action.blocking.iter()) {
                fits(spec, r, &inst.label, inst.charge, false)?;
            }
            if let Some(r) = action.blocking {
                if let Rule::SendIn { object, .. } = &spec.rules[r] {
                    skin_used.insert(object.clone(), *mult).unwrap();
                }
            }
            let rest = remainder(&inst.contents, &own_consumption(spec, action), &inst.to_string())?;
            inner_rest.push((*inst, action, rest));
        }
    }
    let skin_rest = remainder(&skin.contents, &skin_used, "skin")?;

    // Add one more application anywhere.
    for (r, rule) in spec.rules() {
        if spec.is_skin(rule.label()) {
            if rule.charge() != skin.charge || !skin_rest.contains(rule.trigger()) {
                continue;
            }
            match rule {
                Rule::Evolve { .. } => return Err(Flaw::CanAdd(r)),
                Rule::SendOut { .. } if a.skin.blocking.is_none() => return Err(Flaw::CanAdd(r)),
                _ => {}
            }
            continue;
        }
        for (inst, action, rest) in &inner_rest {
            if rule.label() != &inst.label || rule.charge() != inst.charge {
                continue;
            }
            let addable = match rule {
                Rule::Evolve { object, .. } => rest.contains(object),
                Rule::SendIn { object, .. } => action.blocking.is_none() && skin_rest.contains(object),
                _ => action.blocking.is_none() && rest.contains(rule.trigger()),
            };
            if addable {
                return Err(Flaw::CanAdd(r));
            }
        }
    }
    Ok(())
}
