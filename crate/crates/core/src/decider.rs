//! The table-based decider and the cross-check against the reference engine.

use std::collections::HashMap;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::choice::{explore, Budget, ChoiceError, Chooser, ReplayChooser, Witness, DEFAULT_BUDGET};
use crate::engine::{decide_exhaustive, trace_records, EngineError, SearchOptions, TraceRecord};
use crate::inner::{answer_query, QueryOptions, QueryRun, QueryStats};
use crate::model::{SystemSpec, Verdict};
use crate::multiset::Multiset;
use crate::outer::{run_outermost, Emission, EmittedRun, OuterOptions, OuterRules, OuterRun, RejectReason, SimError};
use crate::tables::Tables;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecideError {
    #[error("choice-tree budget of {limit} nodes exceeded")]
    BudgetExceeded { limit: u64 },
    #[error(transparent)]
    Choice(ChoiceError),
    #[error(transparent)]
    Sim(SimError),
}

impl From<ChoiceError> for DecideError {
    fn from(e: ChoiceError) -> Self {
        match e {
            ChoiceError::BudgetExceeded { limit } => DecideError::BudgetExceeded { limit },
            other => DecideError::Choice(other),
        }
    }
}

impl From<SimError> for DecideError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Choice(c) => c.into(),
            other => DecideError::Sim(other),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TableOptions {
    pub budget: u64,
    /// Overrides the system's own bound.
    pub bound: Option<u32>,
    pub outer: OuterOptions,
    pub query: QueryOptions,
    /// Reuse query answers for identical `(tables, t, skin)` inputs.
    pub cache_queries: bool,
}

impl Default for TableOptions {
    fn default() -> Self {
        TableOptions {
            budget: DEFAULT_BUDGET,
            bound: None,
            outer: OuterOptions::default(),
            query: QueryOptions::default(),
            cache_queries: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TableStats {
    /// Complete runs of the outer simulation.
    pub outer_runs: u64,
    pub emissions: u64,
    /// Queries actually searched.
    pub queries: u64,
    pub query_cache_hits: u64,
    pub max_stack: usize,
    pub stack_bound_violations: u64,
    /// Positive query runs whose table did not end at zero.
    pub positive_with_residual: u64,
    /// Choice-tree nodes charged to the budget.
    pub nodes: u64,
}

#[derive(Debug, Clone)]
pub struct TableDecision {
    pub verdict: Verdict,
    /// Outer guesses followed by the query guesses of the accepting run.
    pub witness: Option<Witness>,
    /// The accepting outer run.
    pub accepting: Option<EmittedRun>,
    pub stats: TableStats,
}

type QueryKey = (Tables, u32, Multiset);

struct QueryCache<'a> {
    spec: &'a SystemSpec,
    options: TableOptions,
    budget: &'a Budget,
    answers: HashMap<QueryKey, Option<Witness>>,
}

impl QueryCache<'_> {
    fn answer(&mut self, e: &EmittedRun, stats: &mut TableStats) -> Result<Option<Witness>, DecideError> {
        let key = (e.tables.clone(), e.halt_time, e.state.w.clone());
        if self.options.cache_queries {
            if let Some(ans) = self.answers.get(&key) {
                stats.query_cache_hits += 1;
                return Ok(ans.clone());
            }
        }
        stats.queries += 1;
        let mut qstats = QueryStats::default();
        let mut residual_hits = 0;
        let spec = self.spec;
        let query = self.options.query;
        let ex = explore(self.budget, |c| -> Result<bool, DecideError> {
            let run = answer_query(spec, &e.tables, e.halt_time, &e.state.w, c, query, &mut qstats)?;
            if run.accepted && !run.residual.is_zero() {
                residual_hits += 1;
            }
            Ok(run.accepted)
        })?;
        stats.max_stack = stats.max_stack.max(qstats.max_stack);
        stats.stack_bound_violations += qstats.bound_violations;
        stats.positive_with_residual += residual_hits;
        let ans = ex.witness;
        if self.options.cache_queries {
            self.answers.insert(key, ans.clone());
        }
        Ok(ans)
    }
}

/// Decides acceptance by exploring the outer simulation and asking the inner
/// query on every branch that sends out a result.
pub fn decide_table(spec: &SystemSpec, options: &TableOptions) -> Result<TableDecision, DecideError> {
    let rules = OuterRules::new(spec);
    let budget = Budget::new(options.budget);
    let has_inner = spec.initial_inner() > 0;
    let mut cache = QueryCache {
        spec,
        options: *options,
        budget: &budget,
        answers: HashMap::new(),
    };
    let mut stats = TableStats::default();
    let mut found_no = false;
    let mut timed_out = false;
    let mut accepting: Option<(EmittedRun, Witness)> = None;

    let ex = explore(&budget, |c| -> Result<bool, DecideError> {
        stats.outer_runs += 1;
        let e = match run_outermost(spec, &rules, c, &options.outer, options.bound)? {
            OuterRun::Emitted(e) => e,
            OuterRun::Rejected(RejectReason::NoEmission) => {
                timed_out = true;
                return Ok(false);
            }
            OuterRun::Rejected(_) => return Ok(false),
        };
        stats.emissions += 1;
        if e.result == Emission::No && found_no {
            return Ok(false);
        }
        let consistent = if has_inner {
            cache.answer(&e, &mut stats)?
        } else {
            Some(Witness::default())
        };
        match (consistent, e.result) {
            (Some(q), Emission::Yes) => {
                accepting = Some((e, q));
                Ok(true)
            }
            (Some(_), Emission::No) => {
                found_no = true;
                Ok(false)
            }
            (None, _) => Ok(false),
        }
    })?;
    stats.nodes = budget.used();

    let (verdict, witness, accepting) = match (ex.witness, accepting) {
        (Some(outer), Some((run, query))) => (Verdict::Accept, Some(outer.concat(&query)), Some(run)),
        _ if found_no => (Verdict::Reject, None, None),
        // Nothing consistent was emitted: the system is not a valid
        // recognizer within the bound. A run that used up every step points
        // to the bound.
        _ if timed_out => (Verdict::BoundExceeded, None, None),
        _ => (Verdict::InvalidRecognizer, None, None),
    };
    Ok(TableDecision {
        verdict,
        witness,
        accepting,
        stats,
    })
}

/// A single deterministic run reconstructed from a witness.
#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    /// Accept when the run sends out `yes` and the query succeeds, otherwise
    /// Reject.
    pub verdict: Verdict,
    pub outer: OuterRun,
    pub query: Option<QueryRun>,
    pub stats: QueryStats,
}

impl ReplayOutcome {
    pub fn tables(&self) -> Option<&Tables> {
        match &self.outer {
            OuterRun::Emitted(e) => Some(&e.tables),
            OuterRun::Rejected(_) => None,
        }
    }
}

/// Replays a witness from [`decide_table`], requiring every guess to be used.
pub fn replay_table(
    spec: &SystemSpec,
    witness: &Witness,
    options: &TableOptions,
) -> Result<ReplayOutcome, DecideError> {
    let rules = OuterRules::new(spec);
    let mut chooser = ReplayChooser::new(witness.clone());
    let c: &mut dyn Chooser = &mut chooser;
    let outer = run_outermost(spec, &rules, c, &options.outer, options.bound)?;
    let mut stats = QueryStats::default();
    let query = match &outer {
        OuterRun::Emitted(e) if spec.initial_inner() > 0 => Some(answer_query(
            spec,
            &e.tables,
            e.halt_time,
            &e.state.w,
            c,
            options.query,
            &mut stats,
        )?),
        _ => None,
    };
    chooser.finish()?;
    let consistent = query.as_ref().map_or(true, |q| q.accepted);
    let verdict = match &outer {
        OuterRun::Emitted(e) if e.result == Emission::Yes && consistent => Verdict::Accept,
        _ => Verdict::Reject,
    };
    Ok(ReplayOutcome {
        verdict,
        outer,
        query,
        stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareStatus {
    Agree,
    Disagree,
    /// The reference engine found the system outside the recognizer contract.
    Skipped,
    BudgetExceeded,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub id: String,
    pub verdict_reference: Option<Verdict>,
    pub verdict_table: Option<Verdict>,
    pub status: CompareStatus,
    pub agree: bool,
    pub reference_trace: Option<Vec<TraceRecord>>,
    pub table_witness: Option<Witness>,
    pub reference_ms: u128,
    pub table_ms: u128,
}

#[derive(Debug, Clone, Copy)]
pub struct CompareOptions {
    pub budget: u64,
    pub table: TableOptions,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            budget: DEFAULT_BUDGET,
            table: TableOptions::default(),
        }
    }
}

/// Signature of a table decider, so the harness can be fed a broken one.
pub type TableDecider = fn(&SystemSpec, &TableOptions) -> Result<TableDecision, DecideError>;

pub fn compare(spec: &SystemSpec, id: &str, options: &CompareOptions) -> CompareReport {
    compare_with(spec, id, options, decide_table)
}

pub fn compare_with(
    spec: &SystemSpec,
    id: &str,
    options: &CompareOptions,
    decider: TableDecider,
) -> CompareReport {
    let mut report = CompareReport {
        id: id.to_string(),
        verdict_reference: None,
        verdict_table: None,
        status: CompareStatus::BudgetExceeded,
        agree: false,
        reference_trace: None,
        table_witness: None,
        reference_ms: 0,
        table_ms: 0,
    };
    let started = Instant::now();
    let reference = decide_exhaustive(
        spec,
        SearchOptions {
            bound: options.table.bound,
            budget: options.budget,
        },
    );
    report.reference_ms = started.elapsed().as_millis();
    let reference = match reference {
        Ok(r) => r,
        Err(EngineError::BudgetExceeded { .. }) => return report,
        Err(EngineError::Multiset(_)) => return report,
    };
    report.verdict_reference = Some(reference.verdict);
    report.reference_trace = reference.trace.as_deref().map(trace_records);
    if matches!(reference.verdict, Verdict::InvalidRecognizer | Verdict::BoundExceeded) {
        report.status = CompareStatus::Skipped;
        return report;
    }

    let started = Instant::now();
    let table = decider(
        spec,
        &TableOptions {
            budget: options.budget,
            ..options.table
        },
    );
    report.table_ms = started.elapsed().as_millis();
    match table {
        Ok(t) => {
            report.verdict_table = Some(t.verdict);
            report.table_witness = t.witness;
            report.agree = t.verdict == reference.verdict;
            report.status = if report.agree {
                CompareStatus::Agree
            } else {
                CompareStatus::Disagree
            };
        }
        Err(_) => report.status = CompareStatus::BudgetExceeded,
    }
    report
}
