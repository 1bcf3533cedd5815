//! Command-line front end. The binary is a thin wrapper around [`run`].
//!
//! Exit codes: 0 accept (or success), 1 reject, 2 invalid system or
//! recognizer (or a compare disagreement), 3 bound or budget exceeded, 4 usage
//! or I/O error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::choice::{Witness, DEFAULT_BUDGET};
use crate::decider::{
    compare_with, decide_table, replay_table, CompareOptions, CompareReport, CompareStatus,
    DecideError, TableDecider, TableOptions,
};
use crate::dsl::{parse_multiset, parse_system, render_system};
use crate::engine::{decide_exhaustive, trace_records, EngineError, SearchOptions, TraceRecord};
use crate::generate::{generate_system, GenParams};
use crate::model::{SystemSpec, Verdict};

pub const EXIT_ACCEPT: i32 = 0;
pub const EXIT_REJECT: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_LIMIT: i32 = 3;
pub const EXIT_USAGE: i32 = 4;

pub fn verdict_code(v: Verdict) -> i32 {
    match v {
        Verdict::Accept => EXIT_ACCEPT,
        Verdict::Reject => EXIT_REJECT,
        Verdict::InvalidRecognizer => EXIT_INVALID,
        Verdict::BoundExceeded => EXIT_LIMIT,
    }
}

#[derive(Debug, Parser)]
#[command(name = "psys", version, about = "Deciders for shallow recognizer P systems with active membranes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Reference,
    Table,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate a system, printing a summary.
    Validate { path: PathBuf },
    /// Decide acceptance with one of the two deciders.
    Decide {
        path: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Reference)]
        mode: Mode,
        /// Multiset added to the @input membrane, e.g. "a*3 b".
        #[arg(long)]
        input: Option<String>,
        /// Write the accepting computation as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the accepting witness (table mode).
        #[arg(long)]
        witness: Option<PathBuf>,
        /// Write the accepting run's tables (table mode).
        #[arg(long)]
        tables: Option<PathBuf>,
        #[arg(long, env = "PSYS_BUDGET", default_value_t = DEFAULT_BUDGET)]
        budget: u64,
    },
    /// Re-run the table decider along a recorded witness.
    Replay {
        path: PathBuf,
        #[arg(long)]
        witness: PathBuf,
        #[arg(long)]
        input: Option<String>,
        #[arg(long)]
        tables: Option<PathBuf>,
    },
    /// Run both deciders on a file or on every .psys file of a directory.
    Compare {
        path: PathBuf,
        #[arg(long, env = "PSYS_BUDGET", default_value_t = DEFAULT_BUDGET)]
        budget: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Write all reports as a JSON array.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Write generated systems named sys-<seed>.psys.
    Gen {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        max_inner: u32,
        #[arg(long, default_value_t = 4)]
        max_objects: u32,
        #[arg(long, default_value_t = 8)]
        max_rules: u32,
        #[arg(long, default_value_t = 4)]
        bound: u32,
    },
}

/// Output streams of one invocation.
pub struct Io<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
}

/// Runs the command line, returning the exit code.
pub fn run<I, T>(args: I, io: &mut Io<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run_with(args, io, decide_table)
}

/// As [`run`], with the table decider replaced (used to test the harness).
pub fn run_with<I, T>(args: I, io: &mut Io<'_>, decider: TableDecider) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let help = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let text = e.render().to_string();
            if help {
                let _ = write!(io.out, "{text}");
                return 0;
            }
            let _ = write!(io.err, "{text}");
            return EXIT_USAGE;
        }
    };
    match cli.command {
        Command::Validate { path } => cmd_validate(&path, io),
        Command::Decide {
            path,
            mode,
            input,
            trace,
            witness,
            tables,
            budget,
        } => cmd_decide(
            &path,
            DecideArgs {
                mode,
                input,
                trace,
                witness,
                tables,
                budget,
            },
            io,
            decider,
        ),
        Command::Replay {
            path,
            witness,
            input,
            tables,
        } => cmd_replay(&path, &witness, input.as_deref(), tables.as_deref(), io),
        Command::Compare {
            path,
            budget,
            jobs,
            json,
        } => cmd_compare(&path, budget, jobs, json.as_deref(), io, decider),
        Command::Gen {
            seed,
            count,
            out,
            max_inner,
            max_objects,
            max_rules,
            bound,
        } => cmd_gen(
            GenParams {
                seed,
                max_inner,
                max_objects,
                max_rules,
                bound,
            },
            count,
            &out,
            io,
        ),
    }
}

/// Loads a system; on failure reports it and returns the exit code.
fn load(path: &Path, io: &mut Io<'_>) -> Result<SystemSpec, i32> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(io.err, "{}: {e}", path.display());
            return Err(EXIT_USAGE);
        }
    };
    parse_system(&text).map_err(|e| {
        let _ = writeln!(io.err, "{}:{}: {e}", path.display(), e.span());
        EXIT_INVALID
    })
}

fn with_input(spec: SystemSpec, input: Option<&str>, io: &mut Io<'_>) -> Result<SystemSpec, i32> {
    let Some(text) = input else {
        return Ok(spec);
    };
    let m = parse_multiset(text).map_err(|e| {
        let _ = writeln!(io.err, "--input: {e}");
        EXIT_USAGE
    })?;
    spec.with_input(&m).map_err(|e| {
        let _ = writeln!(io.err, "--input: {e}");
        EXIT_INVALID
    })
}

fn write_file(path: &Path, text: &str, io: &mut Io<'_>) -> Result<(), i32> {
    fs::write(path, text).map_err(|e| {
        let _ = writeln!(io.err, "{}: {e}", path.display());
        EXIT_USAGE
    })
}

fn plural(n: usize, word: &str) -> String {
    if n == 1 {
        format!("{n} {word}")
    } else {
        format!("{n} {word}s")
    }
}

fn cmd_validate(path: &Path, io: &mut Io<'_>) -> i32 {
    match load(path, io) {
        Ok(spec) => {
            let _ = writeln!(
                io.out,
                "{}: ok, {}, {}, {}, {} inner, bound {}",
                path.display(),
                plural(spec.alphabet.len(), "object"),
                plural(spec.labels.len(), "label"),
                plural(spec.rules.len(), "rule"),
                spec.initial_inner(),
                spec.bound
            );
            0
        }
        Err(code) => code,
    }
}

struct DecideArgs {
    mode: Mode,
    input: Option<String>,
    trace: Option<PathBuf>,
    witness: Option<PathBuf>,
    tables: Option<PathBuf>,
    budget: u64,
}

fn jsonl(records: &[TraceRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("trace record serializes") + "\n")
        .collect()
}

fn cmd_decide(path: &Path, args: DecideArgs, io: &mut Io<'_>, decider: TableDecider) -> i32 {
    if args.mode == Mode::Reference && (args.witness.is_some() || args.tables.is_some()) {
        let _ = writeln!(io.err, "--witness and --tables need --mode table");
        return EXIT_USAGE;
    }
    let spec = match load(path, io).and_then(|s| with_input(s, args.input.as_deref(), io)) {
        Ok(s) => s,
        Err(code) => return code,
    };
    match args.mode {
        Mode::Reference => {
            let d = match decide_exhaustive(
                &spec,
                SearchOptions {
                    bound: None,
                    budget: args.budget,
                },
            ) {
                Ok(d) => d,
                Err(e @ EngineError::BudgetExceeded { .. }) => {
                    let _ = writeln!(io.err, "{e}");
                    return EXIT_LIMIT;
                }
                Err(e) => {
                    let _ = writeln!(io.err, "{e}");
                    return EXIT_INVALID;
                }
            };
            let _ = writeln!(
                io.out,
                "{} ({} computations, {} states)",
                d.verdict, d.summary.computations, d.summary.states
            );
            for v in &d.summary.violations {
                let _ = writeln!(
                    io.out,
                    "  {:?}: {} computation(s), witness of {} step(s)",
                    v.kind,
                    v.computations,
                    v.trace.len()
                );
            }
            if let (Some(p), Some(trace)) = (&args.trace, &d.trace) {
                if let Err(code) = write_file(p, &jsonl(&trace_records(trace)), io) {
                    return code;
                }
            }
            verdict_code(d.verdict)
        }
        Mode::Table => {
            let options = TableOptions {
                budget: args.budget,
                ..TableOptions::default()
            };
            let d = match decider(&spec, &options) {
                Ok(d) => d,
                Err(e @ DecideError::BudgetExceeded { .. }) => {
                    let _ = writeln!(io.err, "{e}");
                    return EXIT_LIMIT;
                }
                Err(e) => {
                    let _ = writeln!(io.err, "{e}");
                    return EXIT_INVALID;
                }
            };
            let _ = writeln!(
                io.out,
                "{} ({} outer runs, {} queries, {} nodes)",
                d.verdict, d.stats.outer_runs, d.stats.queries, d.stats.nodes
            );
            if let (Some(p), Some(w)) = (&args.witness, &d.witness) {
                if let Err(code) = write_file(p, &w.to_json(), io) {
                    return code;
                }
            }
            if let Some(run) = &d.accepting {
                if let Some(p) = &args.tables {
                    if let Err(code) = write_file(p, &run.tables.dump_json(), io) {
                        return code;
                    }
                }
                if let Some(p) = &args.trace {
                    // Guessed interaction counts of the accepting run.
                    let records: Vec<TraceRecord> = run
                        .tables
                        .interaction
                        .iter()
                        .filter(|(_, n)| *n != 0)
                        .map(|((r, t), n)| TraceRecord {
                            time: t,
                            membrane: spec.rules[r].label().to_string(),
                            rule_ordinal: r,
                            count: n as u64,
                        })
                        .collect();
                    let mut records = records;
                    records.sort_by_key(|r| (r.time, r.rule_ordinal));
                    if let Err(code) = write_file(p, &jsonl(&records), io) {
                        return code;
                    }
                }
            }
            verdict_code(d.verdict)
        }
    }
}

fn cmd_replay(
    path: &Path,
    witness: &Path,
    input: Option<&str>,
    tables: Option<&Path>,
    io: &mut Io<'_>,
) -> i32 {
    let spec = match load(path, io).and_then(|s| with_input(s, input, io)) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let w = match fs::read_to_string(witness)
        .map_err(|e| e.to_string())
        .and_then(|t| Witness::from_json(&t).map_err(|e| e.to_string()))
    {
        Ok(w) => w,
        Err(e) => {
            let _ = writeln!(io.err, "{}: {e}", witness.display());
            return EXIT_USAGE;
        }
    };
    match replay_table(&spec, &w, &TableOptions::default()) {
        Ok(r) => {
            let _ = writeln!(io.out, "{}", r.verdict);
            if let (Some(p), Some(t)) = (tables, r.tables()) {
                if let Err(code) = write_file(p, &t.dump_json(), io) {
                    return code;
                }
            }
            verdict_code(r.verdict)
        }
        Err(e) => {
            let _ = writeln!(io.err, "replay failed: {e}");
            EXIT_INVALID
        }
    }
}

fn psys_files(path: &Path) -> std::io::Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "psys"))
        .collect();
    files.sort();
    Ok(files)
}

enum Outcome {
    Report(CompareReport),
    Broken(String, String),
}

fn cmd_compare(
    path: &Path,
    budget: u64,
    jobs: usize,
    json: Option<&Path>,
    io: &mut Io<'_>,
    decider: TableDecider,
) -> i32 {
    let files = match psys_files(path) {
        Ok(f) => f,
        Err(e) => {
            let _ = writeln!(io.err, "{}: {e}", path.display());
            return EXIT_USAGE;
        }
    };
    if files.len() == 1 && !files[0].exists() {
        let _ = writeln!(io.err, "{}: no such file", files[0].display());
        return EXIT_USAGE;
    }
    let options = CompareOptions {
        budget,
        ..CompareOptions::default()
    };
    let one = |file: &PathBuf| -> Outcome {
        let id = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        match fs::read_to_string(file)
            .map_err(|e| e.to_string())
            .and_then(|t| parse_system(&t).map_err(|e| format!("{}: {e}", e.span())))
        {
            Ok(spec) => Outcome::Report(compare_with(&spec, &id, &options, decider)),
            Err(e) => Outcome::Broken(id, e),
        }
    };
    let outcomes: Vec<Outcome> = match rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
    {
        Ok(pool) => pool.install(|| files.par_iter().map(one).collect()),
        Err(_) => files.iter().map(one).collect(),
    };

    let (mut agree, mut disagree, mut skipped, mut over, mut broken) = (0, 0, 0, 0, 0);
    let mut reports = Vec::new();
    for o in outcomes {
        match o {
            Outcome::Broken(id, e) => {
                broken += 1;
                let _ = writeln!(io.out, "{id}: error {e}");
            }
            Outcome::Report(r) => {
                let v = |x: Option<Verdict>| x.map_or("-".to_string(), |v| v.to_string());
                let line = match r.status {
                    CompareStatus::Agree => {
                        agree += 1;
                        format!("agree {}", v(r.verdict_reference))
                    }
                    CompareStatus::Disagree => {
                        disagree += 1;
                        format!(
                            "DISAGREE reference {} table {}",
                            v(r.verdict_reference),
                            v(r.verdict_table)
                        )
                    }
                    CompareStatus::Skipped => {
                        skipped += 1;
                        format!("skip {}", v(r.verdict_reference))
                    }
                    CompareStatus::BudgetExceeded => {
                        over += 1;
                        "budget exceeded".to_string()
                    }
                };
                let _ = writeln!(io.out, "{}: {line}", r.id);
                reports.push(r);
            }
        }
    }
    let _ = writeln!(
        io.out,
        "{agree}/{} agree, {skipped} skipped, {over} over budget, {broken} unreadable",
        agree + disagree
    );
    if let Some(p) = json {
        let text = serde_json::to_string_pretty(&reports).expect("reports serialize");
        if let Err(code) = write_file(p, &text, io) {
            return code;
        }
    }
    if disagree > 0 || broken > 0 {
        EXIT_INVALID
    } else if over > 0 {
        EXIT_LIMIT
    } else {
        0
    }
}

fn cmd_gen(params: GenParams, count: u64, out: &Path, io: &mut Io<'_>) -> i32 {
    if let Err(e) = fs::create_dir_all(out) {
        let _ = writeln!(io.err, "{}: {e}", out.display());
        return EXIT_USAGE;
    }
    for i in 0..count {
        let seed = params.seed.wrapping_add(i);
        let spec = generate_system(&GenParams { seed, ..params });
        let file = out.join(format!("sys-{seed}.psys"));
        if let Err(code) = write_file(&file, &render_system(&spec), io) {
            return code;
        }
    }
    let _ = writeln!(io.out, "wrote {} to {}", plural(count as usize, "system"), out.display());
    0
}
