//! Seeded random systems for corpus testing.
//!
//! Objects are ranked: `o0` is the lowest. Every rule rewrites its trigger
//! into lower-ranked objects or into a result object, which keeps most
//! computations short. Nothing guarantees that a generated system is a valid
//! recognizer; the compare harness filters those out.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{validate_system, Charge, Label, RawMembrane, RawSystem, Rule, Symbol, SystemSpec};
use crate::multiset::Multiset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenParams {
    pub seed: u64,
    pub max_inner: u32,
    pub max_objects: u32,
    pub max_rules: u32,
    pub bound: u32,
}

impl GenParams {
    pub fn with_seed(seed: u64) -> Self {
        GenParams {
            seed,
            ..GenParams::default()
        }
    }
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            seed: 0,
            max_inner: 2,
            max_objects: 4,
            max_rules: 8,
            bound: 4,
        }
    }
}

struct Gen {
    rng: ChaCha8Rng,
    objects: Vec<Symbol>,
    inner: Vec<Label>,
    skin: Label,
}

impl Gen {
    fn charge(&mut self) -> Charge {
        match self.rng.gen_range(0..10) {
            0..=5 => Charge::Neutral,
            6 | 7 => Charge::Positive,
            _ => Charge::Negative,
        }
    }

    fn result(&mut self) -> Symbol {
        if self.rng.gen_bool(0.5) {
            Symbol::yes()
        } else {
            Symbol::no()
        }
    }

    /// A single product for a trigger of rank `rank`.
    fn below(&mut self, rank: usize) -> Symbol {
        if rank == 0 || self.rng.gen_bool(0.15) {
            self.result()
        } else {
            self.objects[self.rng.gen_range(0..rank)].clone()
        }
    }

    fn product(&mut self, rank: usize) -> Multiset {
        let n = match self.rng.gen_range(0..10) {
            0 => 0,
            1 | 2 => 2,
            _ => 1,
        };
        let mut m = Multiset::new();
        for _ in 0..n {
            let s = self.below(rank);
            m.insert(s, 1).expect("small counts");
        }
        m
    }

    fn inner_label(&mut self) -> Label {
        self.inner.choose(&mut self.rng).expect("inner labels").clone()
    }

    fn rule(&mut self, rank: usize) -> Rule {
        let object = self.objects[rank].clone();
        let kind = if self.inner.is_empty() {
            if self.rng.gen_bool(0.85) {
                0
            } else {
                5
            }
        } else {
            self.rng.gen_range(0..6)
        };
        match kind {
            0 => Rule::Evolve {
                label: self.skin.clone(),
                charge: Charge::Neutral,
                object,
                product: self.product(rank),
            },
            1 => Rule::SendIn {
                label: self.inner_label(),
                charge: self.charge(),
                object,
                new_charge: self.charge(),
                product: self.below(rank),
            },
            2 => Rule::SendOut {
                label: self.inner_label(),
                charge: self.charge(),
                object,
                new_charge: self.charge(),
                product: self.below(rank),
            },
            3 => Rule::Evolve {
                label: self.inner_label(),
                charge: self.charge(),
                object,
                product: self.product(rank),
            },
            4 => Rule::Divide {
                label: self.inner_label(),
                charge: self.charge(),
                object,
                first_charge: self.charge(),
                first: self.below(rank),
                second_charge: self.charge(),
                second: self.below(rank),
            },
            _ => Rule::SendOut {
                label: self.skin.clone(),
                charge: Charge::Neutral,
                object,
                new_charge: Charge::Neutral,
                product: self.below(rank),
            },
        }
    }
}

/// Builds a validated shallow system from `params`; equal seeds give equal
/// systems.
pub fn generate_system(params: &GenParams) -> SystemSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = rng.gen_range(1..=params.max_objects.max(1)) as usize;
    let m = rng.gen_range(0..=params.max_inner) as usize;
    let objects: Vec<Symbol> = (0..n).map(|i| Symbol::new(&format!("o{i}"))).collect();
    let skin = Label::new("h");
    let inner: Vec<Label> = (1..=m).map(|i| Label::new(&format!("k{i}"))).collect();

    let mut g = Gen {
        rng,
        objects: objects.clone(),
        inner: inner.clone(),
        skin: skin.clone(),
    };

    let mut skin_init = Multiset::singleton(objects[n - 1].clone());
    if g.rng.gen_bool(0.3) {
        let extra = g.rng.gen_range(0..n);
        skin_init.insert(objects[extra].clone(), 1).expect("small counts");
    }
    let inner_membranes: Vec<RawMembrane> = inner
        .iter()
        .map(|label| {
            let contents = if g.rng.gen_bool(0.6) {
                Multiset::singleton(objects[g.rng.gen_range(0..n)].clone())
            } else {
                Multiset::new()
            };
            RawMembrane {
                label: label.clone(),
                parent: None,
                contents,
            }
        })
        .collect();

    let mut rules = vec![
        Rule::SendOut {
            label: skin.clone(),
            charge: Charge::Neutral,
            object: Symbol::yes(),
            new_charge: Charge::Positive,
            product: Symbol::yes(),
        },
        Rule::SendOut {
            label: skin.clone(),
            charge: Charge::Neutral,
            object: Symbol::no(),
            new_charge: Charge::Positive,
            product: Symbol::no(),
        },
    ];
    let room = (params.max_rules as usize).saturating_sub(rules.len());
    // One rule per object first, so every object is mentioned.
    for rank in (0..n).rev().take(room) {
        let r = g.rule(rank);
        if !rules.contains(&r) {
            rules.push(r);
        }
    }
    let target = if room > n { g.rng.gen_range(n..=room) } else { room };
    let mut attempts = 0;
    while rules.len() < target + 2 && attempts < 4 * room {
        attempts += 1;
        let rank = g.rng.gen_range(0..n);
        let r = g.rule(rank);
        if !rules.contains(&r) {
            rules.push(r);
        }
    }

    let mut alphabet = objects;
    alphabet.push(Symbol::yes());
    alphabet.push(Symbol::no());
    let mut labels = vec![skin.clone()];
    labels.extend(inner);
    validate_system(RawSystem {
        alphabet,
        labels,
        skin,
        skin_init,
        inner: inner_membranes,
        rules,
        bound: params.bound.max(1),
        input_label: None,
    })
    .expect("generated systems are well formed")
}
