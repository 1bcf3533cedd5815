//! Object model: symbols, labels, charges, rules, systems and configurations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::multiset::{Multiset, MultisetError};

/// An object symbol. Ordered by name.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol(Arc<str>);

impl Symbol {
    pub fn new(name: &str) -> Self {
        Symbol(Arc::from(name))
    }

    pub fn yes() -> Self {
        Symbol::new(YES)
    }

    pub fn no() -> Self {
        Symbol::new(NO)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_result(&self) -> bool {
        self.as_str() == YES || self.as_str() == NO
    }
}

pub const YES: &str = "yes";
pub const NO: &str = "no";

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

/// A membrane label.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(Arc<str>);

impl Label {
    pub fn new(name: &str) -> Self {
        Label(Arc::from(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

/// Returns true for a non-empty token over `[A-Za-z0-9_']`.
pub fn is_valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(is_name_char)
}

pub(crate) fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Charge {
    #[serde(rename = "0")]
    Neutral,
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
}

impl Charge {
    pub const ALL: [Charge; 3] = [Charge::Neutral, Charge::Positive, Charge::Negative];

    pub fn from_char(c: char) -> Option<Charge> {
        match c {
            '0' => Some(Charge::Neutral),
            '+' => Some(Charge::Positive),
            '-' => Some(Charge::Negative),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Charge::Neutral => '0',
            Charge::Positive => '+',
            Charge::Negative => '-',
        }
    }
}

impl fmt::Display for Charge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleKind {
    Evolve,
    SendIn,
    SendOut,
    Divide,
}

/// A rule of type (a), (b), (c) or (e).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Rule {
    /// `[a -> w]_h^α`
    Evolve {
        label: Label,
        charge: Charge,
        object: Symbol,
        product: Multiset,
    },
    /// `a []_h^α -> [b]_h^β`
    SendIn {
        label: Label,
        charge: Charge,
        object: Symbol,
        new_charge: Charge,
        product: Symbol,
    },
    /// `[a]_h^α -> []_h^β b`
    SendOut {
        label: Label,
        charge: Charge,
        object: Symbol,
        new_charge: Charge,
        product: Symbol,
    },
    /// `[a]_h^α -> [b]_h^β [c]_h^γ`
    Divide {
        label: Label,
        charge: Charge,
        object: Symbol,
        first_charge: Charge,
        first: Symbol,
        second_charge: Charge,
        second: Symbol,
    },
}

impl Rule {
    pub fn kind(&self) -> RuleKind {
        match self {
            Rule::Evolve { .. } => RuleKind::Evolve,
            Rule::SendIn { .. } => RuleKind::SendIn,
            Rule::SendOut { .. } => RuleKind::SendOut,
            Rule::Divide { .. } => RuleKind::Divide,
        }
    }

    pub fn label(&self) -> &Label {
        match self {
            Rule::Evolve { label, .. }
            | Rule::SendIn { label, .. }
            | Rule::SendOut { label, .. }
            | Rule::Divide { label, .. } => label,
        }
    }

    /// Charge the membrane must carry for the rule to apply.
    pub fn charge(&self) -> Charge {
        match self {
            Rule::Evolve { charge, .. }
            | Rule::SendIn { charge, .. }
            | Rule::SendOut { charge, .. }
            | Rule::Divide { charge, .. } => *charge,
        }
    }

    /// The left-hand-side object. For send-in it lives in the parent region.
    pub fn trigger(&self) -> &Symbol {
        match self {
            Rule::Evolve { object, .. }
            | Rule::SendIn { object, .. }
            | Rule::SendOut { object, .. }
            | Rule::Divide { object, .. } => object,
        }
    }

    pub fn is_blocking(&self) -> bool {
        !matches!(self, Rule::Evolve { .. })
    }

    /// Every symbol mentioned by the rule.
    pub fn symbols(&self) -> Vec<&Symbol> {
        match self {
            Rule::Evolve {
                object, product, ..
            } => std::iter::once(object).chain(product.symbols()).collect(),
            Rule::SendIn {
                object, product, ..
            }
            | Rule::SendOut {
                object, product, ..
            } => vec![object, product],
            Rule::Divide {
                object,
                first,
                second,
                ..
            } => vec![object, first, second],
        }
    }
}

impl fmt::Display for Rule {
    /// Renders the rule in `.psys` notation.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::Evolve {
                label,
                charge,
                object,
                product,
            } => write!(f, "[{object} -> {product}]_{label}^{charge}"),
            Rule::SendIn {
                label,
                charge,
                object,
                new_charge,
                product,
            } => write!(
                f,
                "{object} []_{label}^{charge} -> [{product}]_{label}^{new_charge}"
            ),
            Rule::SendOut {
                label,
                charge,
                object,
                new_charge,
                product,
            } => write!(
                f,
                "[{object}]_{label}^{charge} -> []_{label}^{new_charge} {product}"
            ),
            Rule::Divide {
                label,
                charge,
                object,
                first_charge,
                first,
                second_charge,
                second,
            } => write!(
                f,
                "[{object}]_{label}^{charge} -> [{first}]_{label}^{first_charge} [{second}]_{label}^{second_charge}"
            ),
        }
    }
}

/// Where in a system description a validation error was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Objects,
    Labels,
    Skin,
    SkinInit,
    Inner(usize),
    Input,
    Bound,
    Rule(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Objects => f.write_str("@objects"),
            Location::Labels => f.write_str("@labels"),
            Location::Skin => f.write_str("@skin"),
            Location::SkinInit => f.write_str("@init"),
            Location::Inner(i) => write!(f, "@inner #{i}"),
            Location::Input => f.write_str("@input"),
            Location::Bound => f.write_str("@bound"),
            Location::Rule(i) => write!(f, "rule #{i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("unknown object `{symbol}` in {at}")]
    UnknownSymbol { symbol: Symbol, at: Location },
    #[error("unknown label `{label}` in {at}")]
    UnknownLabel { label: Label, at: Location },
    #[error("duplicate label `{label}` in {at}")]
    DuplicateLabel { label: Label, at: Location },
    #[error("duplicate object `{symbol}` in @objects")]
    DuplicateSymbol { symbol: Symbol },
    #[error("membrane `{label}` is nested inside `{parent}`; only one level below the skin is allowed")]
    NotShallow { label: Label, parent: Label },
    #[error("bound must be at least 1, got {bound}")]
    BadBound { bound: u32 },
    #[error("rule #{ordinal} ({kind:?}) cannot apply to the outermost membrane")]
    SkinRule { ordinal: usize, kind: RuleKind },
    #[error("system has no @input membrane")]
    NoInputMembrane,
    #[error(transparent)]
    Multiset(#[from] MultisetError),
}

impl ValidationError {
    pub fn location(&self) -> Option<Location> {
        match self {
            ValidationError::UnknownSymbol { at, .. }
            | ValidationError::UnknownLabel { at, .. }
            | ValidationError::DuplicateLabel { at, .. } => Some(*at),
            ValidationError::DuplicateSymbol { .. } => Some(Location::Objects),
            ValidationError::BadBound { .. } => Some(Location::Bound),
            ValidationError::SkinRule { ordinal, .. } => Some(Location::Rule(*ordinal)),
            ValidationError::NoInputMembrane => Some(Location::Input),
            ValidationError::NotShallow { .. } | ValidationError::Multiset(_) => None,
        }
    }
}

/// An initial membrane before validation. `parent == None` means the skin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawMembrane {
    pub label: Label,
    pub parent: Option<Label>,
    pub contents: Multiset,
}

/// A system description as written, before structural checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSystem {
    pub alphabet: Vec<Symbol>,
    pub labels: Vec<Label>,
    pub skin: Label,
    pub skin_init: Multiset,
    pub inner: Vec<RawMembrane>,
    pub rules: Vec<Rule>,
    pub bound: u32,
    pub input_label: Option<Label>,
}

/// A validated shallow P system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemSpec {
    pub alphabet: BTreeSet<Symbol>,
    pub labels: BTreeSet<Label>,
    pub skin: Label,
    pub skin_init: Multiset,
    /// Initial inner membranes, in declaration order.
    pub inner_init: Vec<(Label, Multiset)>,
    /// Rules in ordinal order.
    pub rules: Vec<Rule>,
    pub bound: u32,
    pub input_label: Option<Label>,
}

impl SystemSpec {
    /// Number of inner membranes in the initial configuration.
    pub fn initial_inner(&self) -> usize {
        self.inner_init.len()
    }

    pub fn is_skin(&self, label: &Label) -> bool {
        *label == self.skin
    }

    /// `(ordinal, rule)` pairs in ordinal order.
    pub fn rules(&self) -> impl Iterator<Item = (usize, &Rule)> + '_ {
        self.rules.iter().enumerate()
    }

    /// Returns a copy with `input` added to the `@input` membrane.
    pub fn with_input(&self, input: &Multiset) -> Result<SystemSpec, ValidationError> {
        let label = self
            .input_label
            .as_ref()
            .ok_or(ValidationError::NoInputMembrane)?;
        for s in input.symbols() {
            if !self.alphabet.contains(s) {
                return Err(ValidationError::UnknownSymbol {
                    symbol: s.clone(),
                    at: Location::Input,
                });
            }
        }
        let mut out = self.clone();
        if *label == out.skin {
            out.skin_init.add_all(input)?;
        } else {
            let slot = out
                .inner_init
                .iter_mut()
                .find(|(l, _)| l == label)
                .ok_or_else(|| ValidationError::UnknownLabel {
                    label: label.clone(),
                    at: Location::Input,
                })?;
            slot.1.add_all(input)?;
        }
        Ok(out)
    }

    pub fn to_raw(&self) -> RawSystem {
        RawSystem {
            alphabet: self.alphabet.iter().cloned().collect(),
            labels: self.labels.iter().cloned().collect(),
            skin: self.skin.clone(),
            skin_init: self.skin_init.clone(),
            inner: self
                .inner_init
                .iter()
                .map(|(label, contents)| RawMembrane {
                    label: label.clone(),
                    parent: None,
                    contents: contents.clone(),
                })
                .collect(),
            rules: self.rules.clone(),
            bound: self.bound,
            input_label: self.input_label.clone(),
        }
    }
}

/// Checks every structural invariant of a system and returns the validated form.
pub fn validate_system(raw: RawSystem) -> Result<SystemSpec, ValidationError> {
    let mut alphabet = BTreeSet::new();
    for s in &raw.alphabet {
        if !alphabet.insert(s.clone()) {
            return Err(ValidationError::DuplicateSymbol { symbol: s.clone() });
        }
    }
    let mut labels = BTreeSet::new();
    for l in &raw.labels {
        if !labels.insert(l.clone()) {
            return Err(ValidationError::DuplicateLabel {
                label: l.clone(),
                at: Location::Labels,
            });
        }
    }
    let known_label = |l: &Label, at: Location| {
        if labels.contains(l) {
            Ok(())
        } else {
            Err(ValidationError::UnknownLabel {
                label: l.clone(),
                at,
            })
        }
    };
    let check_mset = |m: &Multiset, at: Location| {
        for s in m.symbols() {
            if !alphabet.contains(s) {
                return Err(ValidationError::UnknownSymbol {
                    symbol: s.clone(),
                    at,
                });
            }
        }
        Ok(())
    };

    known_label(&raw.skin, Location::Skin)?;
    check_mset(&raw.skin_init, Location::SkinInit)?;

    let mut used: BTreeSet<Label> = BTreeSet::from([raw.skin.clone()]);
    let mut inner_init = Vec::with_capacity(raw.inner.len());
    for (i, m) in raw.inner.iter().enumerate() {
        known_label(&m.label, Location::Inner(i))?;
        if let Some(parent) = &m.parent {
            if *parent != raw.skin {
                known_label(parent, Location::Inner(i))?;
                return Err(ValidationError::NotShallow {
                    label: m.label.clone(),
                    parent: parent.clone(),
                });
            }
        }
        if !used.insert(m.label.clone()) {
            return Err(ValidationError::DuplicateLabel {
                label: m.label.clone(),
                at: Location::Inner(i),
            });
        }
        check_mset(&m.contents, Location::Inner(i))?;
        inner_init.push((m.label.clone(), m.contents.clone()));
    }

    for (i, rule) in raw.rules.iter().enumerate() {
        known_label(rule.label(), Location::Rule(i))?;
        for s in rule.symbols() {
            if !alphabet.contains(s) {
                return Err(ValidationError::UnknownSymbol {
                    symbol: s.clone(),
                    at: Location::Rule(i),
                });
            }
        }
        if *rule.label() == raw.skin && matches!(rule.kind(), RuleKind::SendIn | RuleKind::Divide)
        {
            return Err(ValidationError::SkinRule {
                ordinal: i,
                kind: rule.kind(),
            });
        }
    }

    if let Some(input) = &raw.input_label {
        known_label(input, Location::Input)?;
        if !used.contains(input) {
            return Err(ValidationError::UnknownLabel {
                label: input.clone(),
                at: Location::Input,
            });
        }
    }

    if raw.bound < 1 {
        return Err(ValidationError::BadBound { bound: raw.bound });
    }

    Ok(SystemSpec {
        alphabet,
        labels,
        skin: raw.skin,
        skin_init: raw.skin_init,
        inner_init,
        rules: raw.rules,
        bound: raw.bound,
        input_label: raw.input_label,
    })
}

/// `[w]_h^α`
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MembraneInstance {
    pub label: Label,
    pub charge: Charge,
    pub contents: Multiset,
}

impl MembraneInstance {
    pub fn neutral(label: Label, contents: Multiset) -> Self {
        MembraneInstance {
            label,
            charge: Charge::Neutral,
            contents,
        }
    }
}

impl fmt::Display for MembraneInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.contents.is_empty() {
            write!(f, "[]_{}^{}", self.label, self.charge)
        } else {
            write!(f, "[{}]_{}^{}", self.contents, self.label, self.charge)
        }
    }
}

/// A full configuration. Inner membranes form a counted bag, so equality
/// ignores their order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Configuration {
    pub env: Multiset,
    pub skin: MembraneInstance,
    pub inner: BTreeMap<MembraneInstance, u64>,
}

impl Configuration {
    /// Total number of inner membrane instances.
    pub fn inner_count(&self) -> u64 {
        self.inner.values().fold(0u64, |a, n| a.saturating_add(*n))
    }

    pub fn add_inner(&mut self, inst: MembraneInstance, n: u64) -> Result<(), MultisetError> {
        if n == 0 {
            return Ok(());
        }
        let slot = self.inner.entry(inst).or_insert(0);
        *slot = slot.checked_add(n).ok_or_else(|| MultisetError::Overflow {
            symbol: Symbol::new("<membrane>"),
        })?;
        Ok(())
    }

    /// Number of `yes` plus `no` objects in the environment.
    pub fn results_in_env(&self) -> u64 {
        self.env.count(&Symbol::yes()) + self.env.count(&Symbol::no())
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "env{{{}}} {}", self.env, self.skin)?;
        for (inst, n) in &self.inner {
            if *n == 1 {
                write!(f, " {inst}")?;
            } else {
                write!(f, " {inst}x{n}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Accept,
    Reject,
    InvalidRecognizer,
    BoundExceeded,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Verdict::Accept => "accept",
            Verdict::Reject => "reject",
            Verdict::InvalidRecognizer => "invalid-recognizer",
            Verdict::BoundExceeded => "bound-exceeded",
        };
        f.write_str(s)
    }
}

/// The configuration at time 0: empty environment, all charges neutral.
pub fn initial_configuration(spec: &SystemSpec) -> Configuration {
    let mut inner = BTreeMap::new();
    for (label, contents) in &spec.inner_init {
        *inner
            .entry(MembraneInstance::neutral(label.clone(), contents.clone()))
            .or_insert(0u64) += 1;
    }
    Configuration {
        env: Multiset::new(),
        skin: MembraneInstance::neutral(spec.skin.clone(), spec.skin_init.clone()),
        inner,
    }
}
