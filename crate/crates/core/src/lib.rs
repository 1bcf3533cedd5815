//! Simulation and decision procedures for shallow recognizer P systems with
//! active membranes and charges.
//!
//! Two deciders are provided and cross-checked against each other:
//!
//! * [`engine`] runs the maximally parallel semantics directly and searches
//!   every computation up to the time bound.
//! * [`decider`] drives the outermost membrane with guessed interaction
//!   tables ([`outer`]) and checks those guesses with a depth-first,
//!   stack-based simulation of the inner membranes ([`inner`]). All
//!   nondeterminism goes through [`choice`].

pub mod choice;
pub mod cli;
pub mod decider;
pub mod dsl;
pub mod engine;
pub mod generate;
pub mod inner;
pub mod model;
pub mod multiset;
pub mod outer;
pub mod tables;

pub use dsl::{parse_multiset, parse_system, render_system, ParseError, SourceSpan};
pub use model::{
    initial_configuration, validate_system, Charge, Configuration, Label, MembraneInstance, Rule,
    RuleKind, Symbol, SystemSpec, ValidationError, Verdict,
};
pub use multiset::{mset_apply, Multiset, MultisetError};
