//! One line per acceptance criterion. Runs without the libtest harness so
//! the report reads top to bottom; exits non-zero if any criterion fails.

mod common;

use std::collections::HashSet;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use common::{check_maximal, corpus, fixture, FIXTURES};
use psys::choice::{explore, Budget};
use psys::decider::{
    compare, decide_table, replay_table, CompareOptions, CompareStatus, TableDecision, TableOptions,
};
use psys::engine::{decide_exhaustive, summarize_with_visitor, Engine, SearchOptions};
use psys::generate::GenParams;
use psys::inner::answer_query;
use psys::inner::QueryStats;
use psys::tables::compute_guess_cap;
use psys::{parse_system, render_system, Configuration, SystemSpec, Verdict};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixtures() -> Vec<(String, SystemSpec)> {
    FIXTURES
        .iter()
        .map(|(n, _)| (n.to_string(), fixture(n)))
        .collect()
}

fn default_corpus() -> Vec<(String, SystemSpec)> {
    corpus(1..=200, GenParams::default())
        .into_iter()
        .map(|(s, spec)| (format!("seed {s}"), spec))
        .collect()
}

fn fixture_agreement() -> Outcome {
    let start = Instant::now();
    for (name, expected) in FIXTURES {
        let spec = fixture(name);
        let reference = decide_exhaustive(&spec, SearchOptions::default()).map_err(|e| format!("{name}: {e}"))?;
        let table = decide_table(&spec, &TableOptions::default()).map_err(|e| format!("{name}: {e}"))?;
        ensure(reference.verdict.to_string() == expected, || {
            format!("{name}: reference says {}, expected {expected}", reference.verdict)
        })?;
        ensure(table.verdict == reference.verdict, || {
            format!("{name}: table {} vs reference {}", table.verdict, reference.verdict)
        })?;
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(5), || format!("took {took:?}"))?;
    Ok(format!("5/5 fixtures agree in {took:.2?}"))
}

fn corpus_equivalence() -> Outcome {
    let start = Instant::now();
    let specs = default_corpus();
    let options = CompareOptions::default();
    let reports: Vec<_> = specs
        .par_iter()
        .map(|(id, spec)| compare(spec, id, &options))
        .collect();
    let took = start.elapsed();
    let mut agree = 0;
    let mut skipped = 0;
    let mut over = Vec::new();
    for r in &reports {
        match r.status {
            CompareStatus::Agree => agree += 1,
            CompareStatus::Skipped => skipped += 1,
            CompareStatus::BudgetExceeded => over.push(r.id.clone()),
            CompareStatus::Disagree => {
                return Err(format!(
                    "{}: reference {:?} table {:?}",
                    r.id, r.verdict_reference, r.verdict_table
                ))
            }
        }
    }
    ensure(agree > 0, || "no valid recognizers in corpus".to_string())?;
    ensure(over.len() * 20 <= specs.len(), || format!("over budget: {over:?}"))?;
    ensure(took < Duration::from_secs(600), || format!("took {took:?}"))?;
    Ok(format!(
        "{agree}/{agree} valid agree, {skipped} invalid skipped, {} over budget {over:?}, {took:.2?}",
        over.len()
    ))
}

fn maximality() -> Outcome {
    let mut seen: HashSet<(usize, Configuration)> = HashSet::new();
    let mut pool: Vec<(usize, Configuration)> = Vec::new();
    // The default corpus alone has too few distinct configurations, so the
    // pool draws on the next seeds as well.
    let mut specs: Vec<SystemSpec> = fixtures().into_iter().map(|(_, s)| s).collect();
    specs.extend(corpus(1..=1000, GenParams::default()).into_iter().map(|(_, s)| s));
    for (i, spec) in specs.iter().enumerate() {
        let mut visit = |c: &Configuration| {
            if seen.insert((i, c.clone())) {
                pool.push((i, c.clone()));
            }
        };
        summarize_with_visitor(spec, SearchOptions::default(), &mut visit).map_err(|e| e.to_string())?;
    }
    ensure(pool.len() >= 1000, || format!("only {} distinct configurations", pool.len()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let sample: Vec<_> = pool.choose_multiple(&mut rng, 1000).collect();
    let mut checked = 0usize;
    for (i, conf) in sample {
        let spec = &specs[*i];
        let engine = Engine::new(spec);
        let all = engine.enumerate_maximal_assignments(conf);
        ensure(!all.is_empty() || engine.is_halted(conf), || {
            format!("no assignment for a live configuration of system {i}")
        })?;
        for a in &all {
            check_maximal(spec, conf, a).map_err(|f| format!("system {i}: {f:?} in {a:?}"))?;
            checked += 1;
        }
    }
    Ok(format!(
        "1000 of {} configurations, {checked} assignments, 0 violations",
        pool.len()
    ))
}

struct Run {
    id: String,
    spec: SystemSpec,
    decision: TableDecision,
}

fn table_runs() -> Result<Vec<Run>, String> {
    let mut all = fixtures();
    all.extend(default_corpus());
    all.into_par_iter()
        .filter_map(|(id, spec)| match decide_table(&spec, &TableOptions::default()) {
            Ok(decision) => Some(Ok(Run { id, spec, decision })),
            Err(psys::decider::DecideError::BudgetExceeded { .. }) => None,
            Err(e) => Some(Err(format!("{id}: {e}"))),
        })
        .collect()
}

fn table_bound(runs: &[Run]) -> Outcome {
    let mut entries = 0;
    let mut accepting = 0;
    for run in runs {
        let Some(e) = &run.decision.accepting else { continue };
        accepting += 1;
        let m = run.spec.initial_inner() as u64;
        for ((r, t), v) in e.tables.interaction.iter() {
            entries += 1;
            let cap = compute_guess_cap(m, t).map_err(|_| format!("{}: cap overflow", run.id))?;
            ensure(v >= 0 && v as u64 <= cap, || {
                format!("{}: T({r},{t}) = {v} exceeds {cap}", run.id)
            })?;
        }
    }
    Ok(format!("{accepting} accepting witnesses, {entries} entries within m*2^t"))
}

fn stack_bound(runs: &[Run]) -> Outcome {
    let mut queries = 0;
    let mut deepest = 0;
    for run in runs {
        let s = &run.decision.stats;
        queries += s.queries;
        deepest = deepest.max(s.max_stack);
        let limit = run.spec.initial_inner() + run.spec.bound as usize;
        ensure(s.stack_bound_violations == 0 && s.max_stack <= limit, || {
            format!("{}: max stack {} with limit {limit}", run.id, s.max_stack)
        })?;
    }
    ensure(queries > 0, || "no query was issued".to_string())?;
    Ok(format!("{queries} queries, deepest stack {deepest}, 0 violations"))
}

fn query_accepts(spec: &SystemSpec, tables: &psys::tables::Tables, t: u32, skin: &psys::Multiset) -> Result<bool, String> {
    let options = TableOptions::default();
    let budget = Budget::new(options.budget);
    let mut stats = QueryStats::default();
    let ex = explore(&budget, |c| -> Result<bool, psys::decider::DecideError> {
        Ok(answer_query(spec, tables, t, skin, c, options.query, &mut stats)?.accepted)
    })
    .map_err(|e| e.to_string())?;
    Ok(ex.accepted)
}

fn final_zero(runs: &[Run]) -> Outcome {
    let mut positive = 0;
    for run in runs {
        ensure(run.decision.stats.positive_with_residual == 0, || {
            format!("{}: positive query with residual", run.id)
        })?;
        let Some(w) = &run.decision.witness else { continue };
        let replayed = replay_table(&run.spec, w, &TableOptions::default()).map_err(|e| e.to_string())?;
        if let Some(q) = &replayed.query {
            ensure(q.accepted && q.residual.is_zero(), || {
                format!("{}: replayed query ends at {}", run.id, q.residual)
            })?;
            positive += 1;
        }
    }
    let mut flips = 0;
    for name in ["sys-c", "sys-d"] {
        let spec = fixture(name);
        let d = decide_table(&spec, &TableOptions::default()).map_err(|e| e.to_string())?;
        let e = d.accepting.ok_or(format!("{name} has no accepting run"))?;
        ensure(query_accepts(&spec, &e.tables, e.halt_time, &e.state.w)?, || {
            format!("{name}: unperturbed query fails")
        })?;
        let entries: Vec<_> = e.tables.interaction.nonzero().collect();
        ensure(!entries.is_empty(), || format!("{name}: nothing to perturb"))?;
        for ((r, t), v) in entries {
            for delta in [-1i64, 1] {
                let mut tables = e.tables.clone();
                tables.interaction.set(r, t, v + delta);
                ensure(!query_accepts(&spec, &tables, e.halt_time, &e.state.w)?, || {
                    format!("{name}: T({r},{t}) {v}{delta:+} still accepted")
                })?;
                flips += 1;
            }
        }
    }
    Ok(format!("{positive} positive answers end at zero, {flips}/{flips} perturbations flip"))
}

fn replay_determinism(runs: &[Run]) -> Outcome {
    let mut n = 0;
    for run in runs {
        let (Some(w), Some(e)) = (&run.decision.witness, &run.decision.accepting) else { continue };
        let expected = e.tables.dump_json();
        for _ in 0..2 {
            let r = replay_table(&run.spec, w, &TableOptions::default()).map_err(|e| format!("{}: {e}", run.id))?;
            ensure(r.verdict == Verdict::Accept, || format!("{}: replay gives {}", run.id, r.verdict))?;
            let got = r.tables().map(|t| t.dump_json()).unwrap_or_default();
            ensure(got == expected, || format!("{}: dumps differ", run.id))?;
        }
        n += 1;
    }
    ensure(n > 0, || "no accepting run".to_string())?;
    Ok(format!("{n}/{n} accepting witnesses replay identically"))
}

fn round_trip() -> Outcome {
    let mut all = fixtures();
    all.extend(default_corpus());
    for (id, spec) in &all {
        let text = render_system(spec);
        let back = parse_system(&text).map_err(|e| format!("{id}: {e}"))?;
        ensure(&back == spec, || format!("{id}: round trip changed the system"))?;
        ensure(render_system(&back) == text, || format!("{id}: rendering is unstable"))?;
    }
    Ok(format!("{n}/{n} systems", n = all.len()))
}

/// Agreement is checked on the first 50 valid recognizers; the table decider
/// is not defined on invalid ones. Every scanned system must issue no query.
fn skin_only() -> Outcome {
    let base = GenParams {
        max_inner: 0,
        ..GenParams::default()
    };
    let mut valid = 0;
    let mut scanned = 0;
    for seed in 1.. {
        if valid == 50 {
            break;
        }
        ensure(seed <= 2000, || format!("only {valid} valid recognizers in 2000 seeds"))?;
        let spec = psys::generate::generate_system(&GenParams { seed, ..base });
        scanned += 1;
        ensure(spec.initial_inner() == 0, || format!("seed {seed} has inner membranes"))?;
        let reference = decide_exhaustive(&spec, SearchOptions::default()).map_err(|e| e.to_string())?;
        let table = decide_table(&spec, &TableOptions::default()).map_err(|e| e.to_string())?;
        ensure(table.stats.queries == 0 && table.stats.query_cache_hits == 0, || {
            format!("seed {seed}: {} queries", table.stats.queries)
        })?;
        if !matches!(reference.verdict, Verdict::Accept | Verdict::Reject) {
            continue;
        }
        ensure(table.verdict == reference.verdict, || {
            format!("seed {seed}: table {} vs reference {}", table.verdict, reference.verdict)
        })?;
        valid += 1;
    }
    Ok(format!("50/50 valid recognizers agree, 0 queries over {scanned} scanned"))
}

fn main() {
    let started = Instant::now();
    let runs = table_runs();
    let with_runs = |f: fn(&[Run]) -> Outcome| -> Outcome {
        match &runs {
            Ok(r) => f(r),
            Err(e) => Err(e.clone()),
        }
    };
    let results: Vec<(&str, Outcome)> = vec![
        ("fixture agreement", fixture_agreement()),
        ("corpus equivalence", corpus_equivalence()),
        ("maximality property", maximality()),
        ("table bound", with_runs(table_bound)),
        ("stack bound", with_runs(stack_bound)),
        ("final zero check", with_runs(final_zero)),
        ("replay determinism", with_runs(replay_determinism)),
        ("parser round trip", round_trip()),
        ("skin-only reduction", skin_only()),
    ];
    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} passed in {:.2?}",
        results.len() - failed,
        results.len(),
        started.elapsed()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
