//! Brute-force step semantics, one membrane instance at a time, checked
//! against the grouped enumeration in the engine.

mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{corpus, fixture, FIXTURES};
use psys::engine::{summarize_with_visitor, Engine, SearchOptions};
use psys::generate::GenParams;
use psys::{Configuration, MembraneInstance, Multiset, Rule, SystemSpec};

/// Per-membrane applications: evolve counts plus at most one blocking rule.
#[derive(Clone, Default)]
struct Apps {
    evolve: Vec<(usize, u64)>,
    blocking: Option<usize>,
}

fn membranes(conf: &Configuration) -> Vec<MembraneInstance> {
    let mut out = vec![conf.skin.clone()];
    for (inst, &n) in &conf.inner {
        for _ in 0..n {
            out.push(inst.clone());
        }
    }
    out
}

fn matches(rule: &Rule, m: &MembraneInstance) -> bool {
    rule.label() == &m.label && rule.charge() == m.charge
}

/// Every way to apply rules in membrane `i`, ignoring interaction with others.
fn local_choices(spec: &SystemSpec, m: &MembraneInstance, skin: &Multiset, is_skin: bool) -> Vec<Apps> {
    let evolve: Vec<usize> = spec
        .rules()
        .filter(|(_, r)| matches!(r, Rule::Evolve { .. }) && matches(r, m))
        .map(|(i, _)| i)
        .collect();
    let mut blocking: Vec<Option<usize>> = vec![None];
    for (i, r) in spec.rules() {
        if !r.is_blocking() || !matches(r, m) {
            continue;
        }
        let ok = match r {
            Rule::SendIn { object, .. } => !is_skin && skin.contains(object),
            Rule::Divide { .. } => !is_skin && m.contents.contains(r.trigger()),
            _ => m.contents.contains(r.trigger()),
        };
        if ok {
            blocking.push(Some(i));
        }
    }
    let mut out = Vec::new();
    for b in blocking {
        let mut counts = vec![Apps {
            evolve: Vec::new(),
            blocking: b,
        }];
        for &r in &evolve {
            let cap = m.contents.count(spec.rules[r].trigger());
            counts = counts
                .into_iter()
                .flat_map(|a| {
                    (0..=cap).map(move |n| {
                        let mut a = a.clone();
                        if n > 0 {
                            a.evolve.push((r, n));
                        }
                        a
                    })
                })
                .collect();
        }
        out.extend(counts);
    }
    out
}

fn consumption(spec: &SystemSpec, a: &Apps) -> Multiset {
    let mut used = Multiset::new();
    for &(r, n) in &a.evolve {
        used.insert(spec.rules[r].trigger().clone(), n).unwrap();
    }
    if let Some(r) = a.blocking {
        if !matches!(spec.rules[r], Rule::SendIn { .. }) {
            used.insert(spec.rules[r].trigger().clone(), 1).unwrap();
        }
    }
    used
}

fn legal_and_maximal(spec: &SystemSpec, ms: &[MembraneInstance], apps: &[Apps]) -> bool {
    let mut skin_used = consumption(spec, &apps[0]);
    let mut rests = Vec::new();
    for (m, a) in ms.iter().zip(apps) {
        if let Some(r) = a.blocking {
            if let Rule::SendIn { object, .. } = &spec.rules[r] {
                skin_used.insert(object.clone(), 1).unwrap();
            }
        }
        if !m.contents.includes(&consumption(spec, a)) {
            return false;
        }
        let mut rest = m.contents.clone();
        rest.remove_all(&consumption(spec, a)).unwrap();
        rests.push(rest);
    }
    if !ms[0].contents.includes(&skin_used) {
        return false;
    }
    let mut skin_rest = ms[0].contents.clone();
    skin_rest.remove_all(&skin_used).unwrap();
    rests[0] = skin_rest.clone();
    for (i, (m, a)) in ms.iter().zip(apps).enumerate() {
        for (_, r) in spec.rules() {
            if !matches(r, m) {
                continue;
            }
            let addable = match r {
                Rule::Evolve { object, .. } => rests[i].contains(object),
                Rule::SendIn { object, .. } => i > 0 && a.blocking.is_none() && skin_rest.contains(object),
                Rule::Divide { .. } => i > 0 && a.blocking.is_none() && rests[i].contains(r.trigger()),
                Rule::SendOut { .. } => a.blocking.is_none() && rests[i].contains(r.trigger()),
            };
            if addable {
                return false;
            }
        }
    }
    true
}

fn apply(spec: &SystemSpec, conf: &Configuration, ms: &[MembraneInstance], apps: &[Apps]) -> Configuration {
    let mut env = conf.env.clone();
    let mut skin = ms[0].clone();
    let mut skin_in = Multiset::new();
    let mut inner: Vec<MembraneInstance> = Vec::new();

    for (i, (m, a)) in ms.iter().zip(apps).enumerate() {
        let mut m = m.clone();
        m.contents.remove_all(&consumption(spec, a)).unwrap();
        for &(r, n) in &a.evolve {
            if let Rule::Evolve { product, .. } = &spec.rules[r] {
                m.contents.add_scaled(product, n).unwrap();
            }
        }
        let mut children = Vec::new();
        match a.blocking.map(|r| &spec.rules[r]) {
            None => {}
            Some(Rule::SendOut { new_charge, product, .. }) => {
                m.charge = *new_charge;
                if i == 0 {
                    env.insert(product.clone(), 1).unwrap();
                } else {
                    skin_in.insert(product.clone(), 1).unwrap();
                }
            }
            Some(Rule::SendIn { new_charge, product, .. }) => {
                m.charge = *new_charge;
                m.contents.insert(product.clone(), 1).unwrap();
            }
            Some(Rule::Divide { first_charge, first, second_charge, second, .. }) => {
                for (c, p) in [(*first_charge, first), (*second_charge, second)] {
                    let mut child = m.clone();
                    child.charge = c;
                    child.contents.insert(p.clone(), 1).unwrap();
                    children.push(child);
                }
            }
            Some(Rule::Evolve { .. }) => unreachable!(),
        }
        if i == 0 {
            skin = m;
        } else if children.is_empty() {
            inner.push(m);
        } else {
            inner.extend(children);
        }
    }
    // Send-in objects were taken from the skin's pre-step contents.
    for a in &apps[1..] {
        if let Some(Rule::SendIn { object, .. }) = a.blocking.map(|r| &spec.rules[r]) {
            skin.contents.remove(object, 1).unwrap();
        }
    }
    skin.contents.add_all(&skin_in).unwrap();
    let mut grouped: BTreeMap<MembraneInstance, u64> = BTreeMap::new();
    for m in inner {
        *grouped.entry(m).or_insert(0) += 1;
    }
    Configuration {
        env,
        skin,
        inner: grouped,
    }
}

fn brute_successors(spec: &SystemSpec, conf: &Configuration) -> BTreeSet<Configuration> {
    let ms = membranes(conf);
    let per: Vec<Vec<Apps>> = ms
        .iter()
        .enumerate()
        .map(|(i, m)| local_choices(spec, m, &conf.skin.contents, i == 0))
        .collect();
    let mut out = BTreeSet::new();
    let mut pick = vec![0usize; ms.len()];
    loop {
        let apps: Vec<Apps> = pick.iter().zip(&per).map(|(&k, p)| p[k].clone()).collect();
        // An empty maximal step means nothing can fire: the system halted.
        let idle = apps.iter().all(|a| a.evolve.is_empty() && a.blocking.is_none());
        if !idle && legal_and_maximal(spec, &ms, &apps) {
            out.insert(apply(spec, conf, &ms, &apps));
        }
        let mut j = 0;
        loop {
            if j == pick.len() {
                return out;
            }
            pick[j] += 1;
            if pick[j] < per[j].len() {
                break;
            }
            pick[j] = 0;
            j += 1;
        }
    }
}

fn product_size(spec: &SystemSpec, conf: &Configuration) -> usize {
    let ms = membranes(conf);
    ms.iter()
        .enumerate()
        .map(|(i, m)| local_choices(spec, m, &conf.skin.contents, i == 0).len())
        .fold(1usize, |a, n| a.saturating_mul(n))
}

fn check_system(spec: &SystemSpec) -> usize {
    let mut confs = BTreeSet::new();
    summarize_with_visitor(spec, SearchOptions::default(), &mut |c| {
        confs.insert(c.clone());
    })
    .unwrap();
    let engine = Engine::new(spec);
    let mut checked = 0;
    for conf in &confs {
        if product_size(spec, conf) > 20_000 {
            continue;
        }
        let want = brute_successors(spec, conf);
        let got: BTreeSet<Configuration> = engine
            .successors(conf)
            .unwrap()
            .into_iter()
            .map(|(_, c)| c)
            .collect();
        assert_eq!(got, want, "successors differ from {conf:?}");
        assert_eq!(want.is_empty(), engine.is_halted(conf));
        checked += 1;
    }
    checked
}

#[test]
fn fixtures_match_brute_force() {
    for (name, _) in FIXTURES {
        assert!(check_system(&fixture(name)) > 0, "{name}");
    }
}

#[test]
fn corpus_matches_brute_force() {
    let mut checked = 0;
    for (_, spec) in corpus(1..=600, GenParams::default()) {
        checked += check_system(&spec);
    }
    for (_, spec) in corpus(1..=200, GenParams { max_inner: 3, max_rules: 10, ..GenParams::default() }) {
        checked += check_system(&spec);
    }
    assert!(checked > 2000, "only {checked} configurations compared");
}

#[test]
fn division_duplicates_evolved_contents() {
    let spec = psys::parse_system(
        "@psys 1\n@objects x y d p q yes no\n@labels h k\n@skin h\n@init h: .\n@inner k: x d\n@bound 2\n@rules\n[x -> y]_k^0\n[d]_k^0 -> [p]_k^+ [q]_k^-\n",
    )
    .unwrap();
    let conf = psys::initial_configuration(&spec);
    let want = brute_successors(&spec, &conf);
    assert_eq!(want.len(), 1);
    let next = want.into_iter().next().unwrap();
    assert!(next.inner.keys().all(|m| m.contents.count(&psys::Symbol::new("y")) == 1));
}
