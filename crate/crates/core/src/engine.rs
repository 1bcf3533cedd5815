//! Direct maximally parallel semantics and the exhaustive decider.
//!
//! A step is described by a [`RuleAssignment`]: per membrane, at most one
//! blocking rule plus a count for each evolution rule. Identical inner
//! membranes are grouped, so an assignment records how many instances of a
//! class take each [`SlotAction`]; instances of a class are interchangeable
//! and assignments are enumerated once up to that symmetry.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::rc::Rc;

use serde::Serialize;
use thiserror::Error;

use crate::choice::{Budget, ChoiceError, DEFAULT_BUDGET};
use crate::model::{
    initial_configuration, Charge, Configuration, Label, MembraneInstance, Rule, Symbol,
    SystemSpec, Verdict,
};
use crate::multiset::{Multiset, MultisetError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Multiset(#[from] MultisetError),
    #[error("state budget of {limit} exceeded")]
    BudgetExceeded { limit: u64 },
}

impl From<ChoiceError> for EngineError {
    fn from(e: ChoiceError) -> Self {
        match e {
            ChoiceError::BudgetExceeded { limit } => EngineError::BudgetExceeded { limit },
            other => unreachable!("engine does not replay witnesses: {other}"),
        }
    }
}

/// What one membrane does in a step.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SlotAction {
    /// Ordinal of the blocking rule, if any.
    pub blocking: Option<usize>,
    /// Evolution rule ordinal to number of applications; zero counts omitted.
    pub evolve: BTreeMap<usize, u64>,
}

/// The actions taken by the instances of one inner membrane class.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassAssignment {
    pub instance: MembraneInstance,
    /// Multiplicities sum to the number of instances in the class.
    pub actions: BTreeMap<SlotAction, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RuleAssignment {
    pub skin: SlotAction,
    pub inner: Vec<ClassAssignment>,
}

/// Identifies a membrane of a configuration.
#[derive(Debug, Clone, Copy)]
pub enum Slot<'a> {
    Skin,
    Inner(&'a MembraneInstance),
}

/// Rules grouped by the membrane state they apply to.
#[derive(Debug, Default)]
struct RuleIndex {
    evolve: HashMap<(Label, Charge), BTreeMap<Symbol, Vec<usize>>>,
    blocking: HashMap<(Label, Charge), Vec<usize>>,
}

impl RuleIndex {
    fn new(spec: &SystemSpec) -> Self {
        let mut idx = RuleIndex::default();
        for (i, rule) in spec.rules() {
            let key = (rule.label().clone(), rule.charge());
            if rule.is_blocking() {
                idx.blocking.entry(key).or_default().push(i);
            } else {
                idx.evolve
                    .entry(key)
                    .or_default()
                    .entry(rule.trigger().clone())
                    .or_default()
                    .push(i);
            }
        }
        idx
    }

    fn evolve_for(&self, label: &Label, charge: Charge) -> Option<&BTreeMap<Symbol, Vec<usize>>> {
        self.evolve.get(&(label.clone(), charge))
    }

    fn blocking_for(&self, label: &Label, charge: Charge) -> &[usize] {
        self.blocking
            .get(&(label.clone(), charge))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    fn has_evolve(&self, label: &Label, charge: Charge, object: &Symbol) -> bool {
        self.evolve_for(label, charge)
            .is_some_and(|m| m.contains_key(object))
    }
}

/// All ways to write `n` as an ordered sum of `parts` non-negative integers.
pub(crate) fn compositions(n: u64, parts: usize) -> Vec<Vec<u64>> {
    fn go(n: u64, parts: usize, prefix: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if parts == 1 {
            prefix.push(n);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=n {
            prefix.push(k);
            go(n - k, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if parts == 0 {
        if n == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    go(n, parts, &mut Vec::with_capacity(parts), &mut out);
    out
}

/// Cartesian product of distribution choices, one list per object.
fn product_of(lists: &[Vec<Vec<(usize, u64)>>]) -> Vec<BTreeMap<usize, u64>> {
    let mut acc: Vec<BTreeMap<usize, u64>> = vec![BTreeMap::new()];
    for list in lists {
        let mut next = Vec::with_capacity(acc.len() * list.len());
        for base in &acc {
            for choice in list {
                let mut m = base.clone();
                for &(r, n) in choice {
                    if n > 0 {
                        m.insert(r, n);
                    }
                }
                next.push(m);
            }
        }
        acc = next;
    }
    acc
}

/// Every way to spread each evolvable object over its evolution rules.
fn evolve_distributions(
    contents: &Multiset,
    rules: Option<&BTreeMap<Symbol, Vec<usize>>>,
) -> Vec<BTreeMap<usize, u64>> {
    let mut lists = Vec::new();
    if let Some(rules) = rules {
        for (object, ordinals) in rules {
            let n = contents.count(object);
            if n == 0 {
                continue;
            }
            let list = compositions(n, ordinals.len())
                .into_iter()
                .map(|parts| ordinals.iter().copied().zip(parts).collect())
                .collect();
            lists.push(list);
        }
    }
    product_of(&lists)
}

/// A per-instance option for an inner membrane.
#[derive(Debug, Clone)]
struct LocalOption {
    action: SlotAction,
    /// Skin object consumed by a send-in.
    demand: Option<Symbol>,
    /// Send-in triggers that must have no idle copy in the skin.
    idle_forbidden: Vec<Symbol>,
}

/// Non-decreasing index sequences of length `k` over `0..n`.
fn multichoose(n: usize, k: u64) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: u64, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == 0 {
            out.push(prefix.clone());
            return;
        }
        for i in start..n {
            prefix.push(i);
            go(i, n, k - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// One combination of actions over all inner classes.
#[derive(Debug, Clone, Default)]
struct InnerCombo {
    classes: Vec<ClassAssignment>,
    demand: BTreeMap<Symbol, u64>,
    idle_forbidden: BTreeSet<Symbol>,
}

/// The step semantics of one system.
#[derive(Debug)]
pub struct Engine<'a> {
    spec: &'a SystemSpec,
    index: RuleIndex,
}

impl<'a> Engine<'a> {
    pub fn new(spec: &'a SystemSpec) -> Self {
        Engine {
            spec,
            index: RuleIndex::new(spec),
        }
    }

    pub fn spec(&self) -> &SystemSpec {
        self.spec
    }

    /// Rules that could fire on `slot` given the current configuration.
    pub fn applicable_rules(&self, conf: &Configuration, slot: Slot<'_>) -> Vec<usize> {
        let (label, charge, contents) = match slot {
            Slot::Skin => (&conf.skin.label, conf.skin.charge, &conf.skin.contents),
            Slot::Inner(inst) => (&inst.label, inst.charge, &inst.contents),
        };
        let mut out = Vec::new();
        for (i, rule) in self.spec.rules() {
            if rule.label() != label || rule.charge() != charge {
                continue;
            }
            let ok = match (rule, slot) {
                (Rule::SendIn { object, .. }, Slot::Inner(_)) => conf.skin.contents.contains(object),
                (Rule::SendIn { .. }, Slot::Skin) | (Rule::Divide { .. }, Slot::Skin) => false,
                (r, _) => contents.contains(r.trigger()),
            };
            if ok {
                out.push(i);
            }
        }
        out
    }

    pub fn is_halted(&self, conf: &Configuration) -> bool {
        self.applicable_rules(conf, Slot::Skin).is_empty()
            && conf
                .inner
                .keys()
                .all(|inst| self.applicable_rules(conf, Slot::Inner(inst)).is_empty())
    }

    fn local_options(&self, inst: &MembraneInstance, skin: &Multiset) -> Vec<LocalOption> {
        let label = &inst.label;
        let charge = inst.charge;
        let evolve = self.index.evolve_for(label, charge);
        let blocking = self.index.blocking_for(label, charge);
        let idle = |object: &Symbol, contents: &Multiset| {
            contents.contains(object) && !self.index.has_evolve(label, charge, object)
        };

        let mut out = Vec::new();
        let mut candidates: Vec<Option<usize>> = vec![None];
        for &r in blocking {
            let rule = &self.spec.rules[r];
            let ok = match rule {
                Rule::SendIn { object, .. } => skin.contains(object),
                _ => inst.contents.contains(rule.trigger()),
            };
            if ok {
                candidates.push(Some(r));
            }
        }

        for cand in candidates {
            let mut rest = inst.contents.clone();
            let mut demand = None;
            let mut idle_forbidden = Vec::new();
            match cand {
                None => {
                    // Unblocked: no send-out or division may have an idle trigger.
                    let blocked_by_idle = blocking.iter().any(|&r| {
                        let rule = &self.spec.rules[r];
                        !matches!(rule, Rule::SendIn { .. }) && idle(rule.trigger(), &inst.contents)
                    });
                    if blocked_by_idle {
                        continue;
                    }
                    for &r in blocking {
                        if let Rule::SendIn { object, .. } = &self.spec.rules[r] {
                            idle_forbidden.push(object.clone());
                        }
                    }
                }
                Some(r) => match &self.spec.rules[r] {
                    Rule::SendIn { object, .. } => demand = Some(object.clone()),
                    rule => {
                        // Trigger is present by construction of `candidates`.
                        let _ = rest.remove(rule.trigger(), 1);
                    }
                },
            }
            for evolve_counts in evolve_distributions(&rest, evolve) {
                out.push(LocalOption {
                    action: SlotAction {
                        blocking: cand,
                        evolve: evolve_counts,
                    },
                    demand: demand.clone(),
                    idle_forbidden: idle_forbidden.clone(),
                });
            }
        }
        out
    }

    fn inner_combos(&self, conf: &Configuration) -> Vec<InnerCombo> {
        let mut combos = vec![InnerCombo::default()];
        for (inst, &n) in &conf.inner {
            let options = self.local_options(inst, &conf.skin.contents);
            let mut per_class = Vec::new();
            for pick in multichoose(options.len(), n) {
                let mut actions: BTreeMap<SlotAction, u64> = BTreeMap::new();
                let mut demand: BTreeMap<Symbol, u64> = BTreeMap::new();
                let mut forbidden = BTreeSet::new();
                for i in pick {
                    let opt = &options[i];
                    *actions.entry(opt.action.clone()).or_insert(0) += 1;
                    if let Some(d) = &opt.demand {
                        *demand.entry(d.clone()).or_insert(0) += 1;
                    }
                    forbidden.extend(opt.idle_forbidden.iter().cloned());
                }
                per_class.push((
                    ClassAssignment {
                        instance: inst.clone(),
                        actions,
                    },
                    demand,
                    forbidden,
                ));
            }
            let mut next = Vec::with_capacity(combos.len() * per_class.len());
            for base in &combos {
                for (class, demand, forbidden) in &per_class {
                    let mut c = base.clone();
                    c.classes.push(class.clone());
                    for (s, k) in demand {
                        *c.demand.entry(s.clone()).or_insert(0) += k;
                    }
                    c.idle_forbidden.extend(forbidden.iter().cloned());
                    // Prune combinations that already overdraw the skin.
                    if c
                        .demand
                        .iter()
                        .all(|(s, k)| *k <= conf.skin.contents.count(s))
                    {
                        next.push(c);
                    }
                }
            }
            combos = next;
        }
        combos
    }

    /// Every maximal rule assignment, each once up to symmetry of identical
    /// inner membranes.
    pub fn enumerate_maximal_assignments(&self, conf: &Configuration) -> Vec<RuleAssignment> {
        if self.is_halted(conf) {
            return Vec::new();
        }
        let skin = &conf.skin;
        let evolve = self.index.evolve_for(&skin.label, skin.charge);
        let skin_sendouts: Vec<usize> = self
            .index
            .blocking_for(&skin.label, skin.charge)
            .iter()
            .copied()
            .filter(|&r| matches!(self.spec.rules[r], Rule::SendOut { .. }))
            .collect();
        let mut skin_blocking: Vec<Option<usize>> = vec![None];
        skin_blocking.extend(
            skin_sendouts
                .iter()
                .copied()
                .filter(|&r| skin.contents.contains(self.spec.rules[r].trigger()))
                .map(Some),
        );

        let mut out = Vec::new();
        for combo in self.inner_combos(conf) {
            for &sb in &skin_blocking {
                let mut rest = skin.contents.clone();
                let mut feasible = true;
                for (s, k) in &combo.demand {
                    if rest.remove(s, *k).is_err() {
                        feasible = false;
                    }
                }
                if let Some(r) = sb {
                    if rest.remove(self.spec.rules[r].trigger(), 1).is_err() {
                        feasible = false;
                    }
                }
                if !feasible {
                    continue;
                }
                // Objects left after communication that have no evolution rule stay idle.
                let idle = |s: &Symbol| {
                    rest.contains(s) && !self.index.has_evolve(&skin.label, skin.charge, s)
                };
                if combo.idle_forbidden.iter().any(idle) {
                    continue;
                }
                if sb.is_none()
                    && skin_sendouts
                        .iter()
                        .any(|&r| idle(self.spec.rules[r].trigger()))
                {
                    continue;
                }
                for evolve_counts in evolve_distributions(&rest, evolve) {
                    out.push(RuleAssignment {
                        skin: SlotAction {
                            blocking: sb,
                            evolve: evolve_counts,
                        },
                        inner: combo.classes.clone(),
                    });
                }
            }
        }
        out
    }

    /// Applies a step. Evolution happens before division, so both children
    /// receive the already rewritten objects.
    pub fn apply_assignment(
        &self,
        conf: &Configuration,
        a: &RuleAssignment,
    ) -> Result<Configuration, MultisetError> {
        let rules = &self.spec.rules;
        let mut env = conf.env.clone();
        let mut skin_remove = Multiset::new();
        let mut skin_add = Multiset::new();
        let mut skin_charge = conf.skin.charge;

        for (&r, &n) in &a.skin.evolve {
            if let Rule::Evolve {
                object, product, ..
            } = &rules[r]
            {
                skin_remove.insert(object.clone(), n)?;
                skin_add.add_scaled(product, n)?;
            }
        }
        if let Some(r) = a.skin.blocking {
            if let Rule::SendOut {
                object,
                new_charge,
                product,
                ..
            } = &rules[r]
            {
                skin_remove.insert(object.clone(), 1)?;
                env.insert(product.clone(), 1)?;
                skin_charge = *new_charge;
            }
        }

        let mut inner: BTreeMap<MembraneInstance, u64> = BTreeMap::new();
        let mut push = |inst: MembraneInstance, n: u64| -> Result<(), MultisetError> {
            let slot = inner.entry(inst).or_insert(0);
            *slot = slot.checked_add(n).ok_or_else(|| MultisetError::Overflow {
                symbol: Symbol::new("<membrane>"),
            })?;
            Ok(())
        };
        for class in &a.inner {
            for (action, &mult) in &class.actions {
                let mut contents = class.instance.contents.clone();
                let mut remove = Multiset::new();
                let mut add = Multiset::new();
                for (&r, &n) in &action.evolve {
                    if let Rule::Evolve {
                        object, product, ..
                    } = &rules[r]
                    {
                        remove.insert(object.clone(), n)?;
                        add.add_scaled(product, n)?;
                    }
                }
                let mut charge = class.instance.charge;
                let mut twin = None;
                match action.blocking.map(|r| &rules[r]) {
                    None => {}
                    Some(Rule::SendIn {
                        object,
                        new_charge,
                        product,
                        ..
                    }) => {
                        skin_remove.insert(object.clone(), mult)?;
                        add.insert(product.clone(), 1)?;
                        charge = *new_charge;
                    }
                    Some(Rule::SendOut {
                        object,
                        new_charge,
                        product,
                        ..
                    }) => {
                        remove.insert(object.clone(), 1)?;
                        skin_add.insert(product.clone(), mult)?;
                        charge = *new_charge;
                    }
                    Some(Rule::Divide {
                        object,
                        first_charge,
                        first,
                        second_charge,
                        second,
                        ..
                    }) => {
                        remove.insert(object.clone(), 1)?;
                        charge = *first_charge;
                        twin = Some((first.clone(), second.clone(), *second_charge));
                    }
                    Some(Rule::Evolve { .. }) => {}
                }
                contents.remove_all(&remove)?;
                contents.add_all(&add)?;
                match twin {
                    None => push(
                        MembraneInstance {
                            label: class.instance.label.clone(),
                            charge,
                            contents,
                        },
                        mult,
                    )?,
                    Some((first, second, second_charge)) => {
                        let mut c1 = contents.clone();
                        c1.insert(first, 1)?;
                        let mut c2 = contents;
                        c2.insert(second, 1)?;
                        push(
                            MembraneInstance {
                                label: class.instance.label.clone(),
                                charge,
                                contents: c1,
                            },
                            mult,
                        )?;
                        push(
                            MembraneInstance {
                                label: class.instance.label.clone(),
                                charge: second_charge,
                                contents: c2,
                            },
                            mult,
                        )?;
                    }
                }
            }
        }

        let mut skin_contents = conf.skin.contents.clone();
        skin_contents.remove_all(&skin_remove)?;
        skin_contents.add_all(&skin_add)?;
        Ok(Configuration {
            env,
            skin: MembraneInstance {
                label: conf.skin.label.clone(),
                charge: skin_charge,
                contents: skin_contents,
            },
            inner,
        })
    }

    /// Distinct successor configurations, each with the first assignment
    /// (in enumeration order) that produces it. Empty iff `conf` is halted.
    pub fn successors(
        &self,
        conf: &Configuration,
    ) -> Result<Vec<(RuleAssignment, Configuration)>, MultisetError> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for a in self.enumerate_maximal_assignments(conf) {
            let next = self.apply_assignment(conf, &a)?;
            if seen.insert(next.clone()) {
                out.push((a, next));
            }
        }
        Ok(out)
    }
}

/// One step of a recorded computation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepTrace {
    pub time: u32,
    pub assignment: RuleAssignment,
    pub before: Configuration,
    pub after: Configuration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ViolationKind {
    /// Still running after the bound.
    BoundExceeded,
    /// Halted without sending out `yes` or `no`.
    MissingResult,
    /// Sent out a result and did not halt in the same step.
    EarlyResult,
    /// More than one result object in the environment.
    MultipleResults,
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Number of computations showing this violation.
    pub computations: u128,
    /// One witnessing computation.
    pub trace: Vec<StepTrace>,
}

/// Persistent list of steps, shared between memoized subtrees.
#[derive(Debug)]
struct Link {
    step: StepTrace,
    next: Option<Rc<Link>>,
}

type Suffix = Option<Rc<Link>>;

fn prepend(step: &StepTrace, suffix: &Suffix) -> Suffix {
    Some(Rc::new(Link {
        step: step.clone(),
        next: suffix.clone(),
    }))
}

fn collect(suffix: &Suffix) -> Vec<StepTrace> {
    let mut out = Vec::new();
    let mut cur = suffix.as_ref();
    while let Some(link) = cur {
        out.push(link.step.clone());
        cur = link.next.as_ref();
    }
    out
}

#[derive(Debug, Default)]
struct Node {
    computations: u128,
    accepting: u128,
    rejecting: u128,
    accept: Option<Suffix>,
    reject: Option<Suffix>,
    violations: BTreeMap<ViolationKind, (u128, Suffix)>,
}

impl Node {
    fn leaf_violation(kind: ViolationKind, suffix: Suffix) -> Node {
        let mut n = Node {
            computations: 1,
            ..Node::default()
        };
        n.violations.insert(kind, (1, suffix));
        n
    }

    fn absorb(&mut self, child: &Node, step: &StepTrace) {
        self.computations = self.computations.saturating_add(child.computations);
        self.accepting = self.accepting.saturating_add(child.accepting);
        self.rejecting = self.rejecting.saturating_add(child.rejecting);
        if self.accept.is_none() {
            if let Some(s) = &child.accept {
                self.accept = Some(prepend(step, s));
            }
        }
        if self.reject.is_none() {
            if let Some(s) = &child.reject {
                self.reject = Some(prepend(step, s));
            }
        }
        for (kind, (count, suffix)) in &child.violations {
            let entry = self
                .violations
                .entry(*kind)
                .or_insert_with(|| (0, prepend(step, suffix)));
            entry.0 = entry.0.saturating_add(*count);
        }
    }
}

/// Options for the exhaustive search.
#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    /// Overrides the system's own bound.
    pub bound: Option<u32>,
    /// Limit on enumerated assignments plus visited states.
    pub budget: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            bound: None,
            budget: DEFAULT_BUDGET,
        }
    }
}

/// Aggregate over every computation of length at most the bound.
#[derive(Debug, Clone)]
pub struct ComputationSummary {
    pub computations: u128,
    pub accepting: u128,
    pub rejecting: u128,
    pub accept_trace: Option<Vec<StepTrace>>,
    pub reject_trace: Option<Vec<StepTrace>>,
    pub violations: Vec<Violation>,
    /// Distinct `(configuration, time)` pairs expanded.
    pub states: usize,
}

impl ComputationSummary {
    /// Invalid behaviour first, then bound overruns, then the existential
    /// acceptance rule.
    pub fn verdict(&self) -> Verdict {
        let has = |k: ViolationKind| self.violations.iter().any(|v| v.kind == k);
        if has(ViolationKind::MissingResult)
            || has(ViolationKind::EarlyResult)
            || has(ViolationKind::MultipleResults)
        {
            Verdict::InvalidRecognizer
        } else if has(ViolationKind::BoundExceeded) {
            Verdict::BoundExceeded
        } else if self.accepting > 0 {
            Verdict::Accept
        } else {
            Verdict::Reject
        }
    }
}

struct Search<'e, 'a, 'v> {
    engine: &'e Engine<'a>,
    bound: u32,
    budget: Budget,
    memo: HashMap<(Configuration, u32), Rc<Node>>,
    visit: Option<&'v mut dyn FnMut(&Configuration)>,
}

impl Search<'_, '_, '_> {
    fn node(&mut self, conf: &Configuration, time: u32) -> Result<Rc<Node>, EngineError> {
        let key = (conf.clone(), time);
        if let Some(n) = self.memo.get(&key) {
            return Ok(n.clone());
        }
        if let Some(visit) = self.visit.as_mut() {
            visit(conf);
        }
        let succ = self.engine.successors(conf)?;
        self.budget.charge(1 + succ.len() as u64)?;

        let node = if succ.is_empty() {
            Node::leaf_violation(ViolationKind::MissingResult, None)
        } else if time >= self.bound {
            Node::leaf_violation(ViolationKind::BoundExceeded, None)
        } else {
            let mut node = Node::default();
            let yes = Symbol::yes();
            for (assignment, next) in succ {
                let emitted = next.results_in_env() - conf.results_in_env();
                let step = StepTrace {
                    time,
                    assignment,
                    before: conf.clone(),
                    after: next.clone(),
                };
                let child = if emitted == 0 {
                    self.node(&next, time + 1)?
                } else if emitted > 1 || conf.results_in_env() > 0 {
                    Rc::new(Node::leaf_violation(ViolationKind::MultipleResults, None))
                } else if !self.engine.is_halted(&next) {
                    Rc::new(Node::leaf_violation(ViolationKind::EarlyResult, None))
                } else if next.env.count(&yes) > conf.env.count(&yes) {
                    Rc::new(Node {
                        computations: 1,
                        accepting: 1,
                        accept: Some(None),
                        ..Node::default()
                    })
                } else {
                    Rc::new(Node {
                        computations: 1,
                        rejecting: 1,
                        reject: Some(None),
                        ..Node::default()
                    })
                };
                node.absorb(&child, &step);
            }
            node
        };
        let node = Rc::new(node);
        self.memo.insert(key, node.clone());
        Ok(node)
    }
}

fn search(
    spec: &SystemSpec,
    options: SearchOptions,
    visit: Option<&mut dyn FnMut(&Configuration)>,
) -> Result<ComputationSummary, EngineError> {
    let engine = Engine::new(spec);
    let mut s = Search {
        engine: &engine,
        bound: options.bound.unwrap_or(spec.bound),
        budget: Budget::new(options.budget),
        memo: HashMap::new(),
        visit,
    };
    let root = s.node(&initial_configuration(spec), 0)?;
    Ok(ComputationSummary {
        computations: root.computations,
        accepting: root.accepting,
        rejecting: root.rejecting,
        accept_trace: root.accept.as_ref().map(collect),
        reject_trace: root.reject.as_ref().map(collect),
        violations: root
            .violations
            .iter()
            .map(|(kind, (count, suffix))| Violation {
                kind: *kind,
                computations: *count,
                trace: collect(suffix),
            })
            .collect(),
        states: s.memo.len(),
    })
}

/// Enumerates every computation up to the bound.
pub fn summarize_computations(
    spec: &SystemSpec,
    options: SearchOptions,
) -> Result<ComputationSummary, EngineError> {
    search(spec, options, None)
}

/// Like [`summarize_computations`], calling `visit` on every distinct
/// expanded configuration.
pub fn summarize_with_visitor(
    spec: &SystemSpec,
    options: SearchOptions,
    visit: &mut dyn FnMut(&Configuration),
) -> Result<ComputationSummary, EngineError> {
    search(spec, options, Some(visit))
}

#[derive(Debug, Clone)]
pub struct ExhaustiveDecision {
    pub verdict: Verdict,
    /// An accepting computation when the verdict is `Accept`.
    pub trace: Option<Vec<StepTrace>>,
    pub summary: ComputationSummary,
}

/// Ground-truth decider: searches every computation of length at most the bound.
pub fn decide_exhaustive(
    spec: &SystemSpec,
    options: SearchOptions,
) -> Result<ExhaustiveDecision, EngineError> {
    let summary = summarize_computations(spec, options)?;
    let verdict = summary.verdict();
    let trace = match verdict {
        Verdict::Accept => summary.accept_trace.clone(),
        _ => None,
    };
    Ok(ExhaustiveDecision {
        verdict,
        trace,
        summary,
    })
}

#[derive(Debug, Clone)]
pub struct ValidityReport {
    pub valid: bool,
    pub computations: u128,
    pub violations: Vec<Violation>,
}

/// Checks that every computation halts and sends out exactly one result,
/// in its last step.
pub fn check_recognizer_validity(
    spec: &SystemSpec,
    options: SearchOptions,
) -> Result<ValidityReport, EngineError> {
    let summary = summarize_computations(spec, options)?;
    Ok(ValidityReport {
        valid: summary.violations.is_empty(),
        computations: summary.computations,
        violations: summary.violations,
    })
}

/// One line of a JSONL trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub time: u32,
    pub membrane: String,
    pub rule_ordinal: usize,
    pub count: u64,
}

/// Flattens a computation into per-step rule application counts.
pub fn trace_records(trace: &[StepTrace]) -> Vec<TraceRecord> {
    let mut out = Vec::new();
    for step in trace {
        let mut counts: BTreeMap<(String, usize), u64> = BTreeMap::new();
        let skin = step.before.skin.label.to_string();
        for (&r, &n) in &step.assignment.skin.evolve {
            *counts.entry((skin.clone(), r)).or_insert(0) += n;
        }
        if let Some(r) = step.assignment.skin.blocking {
            *counts.entry((skin.clone(), r)).or_insert(0) += 1;
        }
        for class in &step.assignment.inner {
            let label = class.instance.label.to_string();
            for (action, &mult) in &class.actions {
                for (&r, &n) in &action.evolve {
                    *counts.entry((label.clone(), r)).or_insert(0) += n * mult;
                }
                if let Some(r) = action.blocking {
                    *counts.entry((label.clone(), r)).or_insert(0) += mult;
                }
            }
        }
        for ((membrane, rule_ordinal), count) in counts {
            out.push(TraceRecord {
                time: step.time,
                membrane,
                rule_ordinal,
                count,
            });
        }
    }
    out
}
