//! Command-line front end. `run` parses arguments, dispatches to a
//! subcommand and returns the process exit code:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | preservation refuted, or a simulated trace violates an invariant |
//! | 2 | parse or semantic error in the program |
//! | 3 | I/O or usage error |
//! | 4 | bounds too large |
//! | 5 | runtime fault (failed postcondition, protocol violation, stuck evaluation) |
//! | 6 | no serialization |

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::graph::build_graph;
use crate::program::CheckedProgram;
use crate::sim::{
    check_validity, random_schedule, run_schedule, serialize_device, ArgumentPool, RandomConfig, Schedule, SimError,
    Trace, ValidityReport,
};
use crate::syntax::compile;
use crate::verify::{check_program, compute_conflicts, emit_smt, render_text, BoundConfig, ConflictTable, VerifyError};

pub const EXIT_OK: u8 = 0;
pub const EXIT_REFUTED: u8 = 1;
pub const EXIT_SYNTAX: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_BOUNDS: u8 = 4;
pub const EXIT_FAULT: u8 = 5;
pub const EXIT_NO_SERIALIZATION: u8 = 6;

#[derive(Debug, Parser)]
#[command(name = "lore", version, about = "Check, simulate and export local-first reactive programs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run all verification obligations and print the report.
    Check {
        program: PathBuf,
        #[command(flatten)]
        bounds: BoundArgs,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Print only the conflict table.
    Conflicts {
        program: PathBuf,
        #[command(flatten)]
        bounds: BoundArgs,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run a scripted or random schedule and check every reached state.
    Simulate {
        program: PathBuf,
        /// Schedule file (JSON); without it a random schedule is drawn.
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        devices: usize,
        #[arg(long, default_value_t = 24)]
        steps: usize,
        /// Run without locks, whatever the script says.
        #[arg(long)]
        no_coordination: bool,
        /// Include crash, recover and timeout steps in random schedules.
        #[arg(long)]
        crashes: bool,
        /// Use this conflict table (JSON) instead of computing one.
        #[arg(long)]
        conflicts: Option<PathBuf>,
        /// Write the trace as JSON.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// Print the step-by-step log.
        #[arg(long)]
        log: bool,
        #[command(flatten)]
        bounds: BoundArgs,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Build a serialization of each device's final state in a trace.
    Serialize {
        program: PathBuf,
        trace: PathBuf,
        /// Only this device (1-based).
        #[arg(long)]
        device: Option<usize>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Write one SMT-LIB file per obligation.
    EmitSmt {
        program: PathBuf,
        #[arg(long, short, default_value = ".")]
        out: PathBuf,
    },
    /// Print the data-flow graph.
    EmitGraph {
        program: PathBuf,
        #[arg(long, value_enum, default_value_t = GraphFormat::Dot)]
        format: GraphFormat,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GraphFormat {
    Dot,
    Json,
}

/// Overrides of the default checking bounds.
#[derive(Debug, Clone, Default, Args)]
pub struct BoundArgs {
    /// Bounds file (JSON, all fields of the bound configuration).
    #[arg(long)]
    pub bounds: Option<PathBuf>,
    #[arg(long)]
    pub int_bound: Option<i64>,
    #[arg(long)]
    pub time_bound: Option<i64>,
    #[arg(long, value_delimiter = ',')]
    pub durations: Option<Vec<i64>>,
    #[arg(long)]
    pub max_set_size: Option<usize>,
    #[arg(long)]
    pub max_store_elements: Option<usize>,
    #[arg(long)]
    pub counter_bound: Option<i64>,
}

impl BoundArgs {
    pub fn resolve(&self) -> Result<BoundConfig, Failure> {
        let mut b = match &self.bounds {
            Some(path) => serde_json::from_str(&read(path)?)
                .map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))?,
            None => BoundConfig::default(),
        };
        if let Some(v) = self.int_bound {
            b.int_bound = v;
        }
        if let Some(v) = self.time_bound {
            b.time_bound = v;
        }
        if let Some(v) = &self.durations {
            b.durations = v.clone();
        }
        if let Some(v) = self.max_set_size {
            b.max_set_size = v;
        }
        if let Some(v) = self.max_store_elements {
            b.max_store_elements = v;
        }
        if let Some(v) = self.counter_bound {
            b.counter_bound = v;
        }
        Ok(b)
    }
}

/// A message for stderr and the exit code to go with it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<VerifyError> for Failure {
    fn from(e: VerifyError) -> Self {
        let code = match e {
            VerifyError::BoundsTooLarge { .. } => EXIT_BOUNDS,
            VerifyError::InvalidBounds(_) => EXIT_IO,
            VerifyError::PreservationFailed(_) => EXIT_REFUTED,
            VerifyError::NotExecutable(_) | VerifyError::NotEncodable(..) => EXIT_SYNTAX,
            VerifyError::Eval(_) => EXIT_FAULT,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = match e {
            SimError::NoSerialization { .. } => EXIT_NO_SERIALIZATION,
            SimError::InvalidSchedule(_) => EXIT_IO,
            SimError::Runtime(_) | SimError::Eval(_) => EXIT_FAULT,
        };
        Failure::new(code, e.to_string())
    }
}

/// Output of a successful or refuted run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: u8,
    pub stdout: String,
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))
}

/// Read and compile a program; errors carry `file:line:col`.
pub fn load(path: &Path) -> Result<(String, CheckedProgram), Failure> {
    let src = read(path)?;
    let p = compile(&src).map_err(|e| Failure::new(EXIT_SYNTAX, format!("{}:{e}", path.display())))?;
    let name = path
        .file_stem()
        .map_or_else(|| "program".to_string(), |s| s.to_string_lossy().into_owned());
    Ok((name, p))
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn conflicts_text(t: &ConflictTable) -> String {
    let mut out = String::new();
    for (a, set) in t.iter() {
        let set: Vec<&str> = set.iter().map(String::as_str).collect();
        writeln!(out, "conflicts({a}) = {{{}}}", set.join(", ")).unwrap();
    }
    out
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    seed: u64,
    coordination: bool,
    digest: String,
    validity: &'a ValidityReport,
    message: String,
    final_stores: Vec<String>,
    trace: Option<String>,
}

#[derive(Serialize)]
struct SerializeReport {
    device: usize,
    ok: bool,
    steps: Vec<String>,
    idempotent_discards: usize,
    retargeted_syncs: usize,
    error: Option<String>,
}

/// Execute a parsed command line.
pub fn execute(cli: &Cli) -> Result<Outcome, Failure> {
    match &cli.command {
        Command::Check {
            program,
            bounds,
            format,
        } => {
            let (name, p) = load(program)?;
            let report = check_program(&p, &name, &bounds.resolve()?)?;
            let code = if report.preservation_holds() { EXIT_OK } else { EXIT_REFUTED };
            let stdout = match format {
                Format::Text => render_text(&p, &report),
                Format::Json => json(&report),
            };
            Ok(Outcome { code, stdout })
        }
        Command::Conflicts {
            program,
            bounds,
            format,
        } => {
            let (_, p) = load(program)?;
            let t = compute_conflicts(&p, &bounds.resolve()?)?;
            let stdout = match format {
                Format::Text => conflicts_text(&t),
                Format::Json => json(&t),
            };
            Ok(Outcome { code: EXIT_OK, stdout })
        }
        Command::Simulate {
            program,
            script,
            seed,
            devices,
            steps,
            no_coordination,
            crashes,
            conflicts,
            trace_out,
            log,
            bounds,
            format,
        } => {
            let (_, p) = load(program)?;
            let cfg = bounds.resolve()?;
            let mut sched = match script {
                Some(path) => Schedule::from_json(&read(path)?)
                    .map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))?,
                None => {
                    let pool = ArgumentPool::from_bounds(&p, *devices, &cfg)?;
                    let rc = RandomConfig {
                        devices: *devices,
                        steps: *steps,
                        coordination: !no_coordination,
                        crashes: *crashes,
                    };
                    random_schedule(&p, &pool, &rc, *seed)
                }
            };
            if *no_coordination {
                sched.coordination = false;
            }
            let table = match (conflicts, sched.coordination) {
                (_, false) => ConflictTable::empty(&p),
                (Some(path), true) => serde_json::from_str(&read(path)?)
                    .map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))?,
                (None, true) => compute_conflicts(&p, &cfg)?,
            };
            let trace = run_schedule(&p, &table, &sched)?;
            let validity = check_validity(&p, &trace)?;
            if let Some(path) = trace_out {
                write(path, &json(&trace))?;
            }
            let code = if validity.valid() { EXIT_OK } else { EXIT_REFUTED };
            let stdout = match format {
                Format::Text => simulate_text(&p, &trace, &validity, *log, trace_out.as_deref()),
                Format::Json => json(&SimulateReport {
                    seed: trace.seed,
                    coordination: trace.coordination,
                    digest: trace.digest(),
                    validity: &validity,
                    message: validity.message(),
                    final_stores: trace.last().iter().map(|d| d.store.render(&p)).collect(),
                    trace: trace_out.as_ref().map(|t| t.display().to_string()),
                }),
            };
            Ok(Outcome { code, stdout })
        }
        Command::Serialize {
            program,
            trace,
            device,
            format,
        } => {
            let (_, p) = load(program)?;
            let t: Trace = serde_json::from_str(&read(trace)?)
                .map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", trace.display())))?;
            let devices: Vec<usize> = match device {
                Some(d) if *d == 0 || *d > t.initial.len() => {
                    return Err(Failure::new(EXIT_IO, format!("no device D{d} in the trace")))
                }
                Some(d) => vec![*d],
                None => (1..=t.initial.len()).collect(),
            };
            let mut reports = Vec::new();
            for d in devices {
                reports.push(match serialize_device(&p, &t, d) {
                    Ok(s) => SerializeReport {
                        device: d,
                        ok: true,
                        steps: s
                            .steps
                            .iter()
                            .map(|st| format!("D{} {}({})", st.actor, st.interaction, st.arg))
                            .collect(),
                        idempotent_discards: s.idempotent_discards,
                        retargeted_syncs: s.retargeted_syncs,
                        error: None,
                    },
                    Err(e @ SimError::NoSerialization { .. }) => SerializeReport {
                        device: d,
                        ok: false,
                        steps: Vec::new(),
                        idempotent_discards: 0,
                        retargeted_syncs: 0,
                        error: Some(e.to_string()),
                    },
                    Err(e) => return Err(e.into()),
                });
            }
            let code = if reports.iter().all(|r| r.ok) {
                EXIT_OK
            } else {
                EXIT_NO_SERIALIZATION
            };
            let stdout = match format {
                Format::Json => json(&reports),
                Format::Text => {
                    let mut out = String::new();
                    for r in &reports {
                        match &r.error {
                            Some(e) => writeln!(out, "D{}: {e}", r.device).unwrap(),
                            None => {
                                writeln!(out, "D{}: {} steps", r.device, r.steps.len()).unwrap();
                                for s in &r.steps {
                                    writeln!(out, "  {s}").unwrap();
                                }
                                if r.idempotent_discards > 0 {
                                    writeln!(out, "  ({} idempotent discards)", r.idempotent_discards).unwrap();
                                }
                            }
                        }
                    }
                    out
                }
            };
            Ok(Outcome { code, stdout })
        }
        Command::EmitSmt { program, out } => {
            let (name, p) = load(program)?;
            let files = emit_smt(&p, &name)?;
            std::fs::create_dir_all(out).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", out.display())))?;
            let mut stdout = String::new();
            for f in &files {
                let path = out.join(&f.file_name);
                write(&path, &f.text)?;
                writeln!(stdout, "{}", path.display()).unwrap();
            }
            Ok(Outcome { code: EXIT_OK, stdout })
        }
        Command::EmitGraph { program, format } => {
            let (_, p) = load(program)?;
            let g = build_graph(&p);
            let stdout = match format {
                GraphFormat::Dot => g.to_dot(),
                GraphFormat::Json => json(&g),
            };
            Ok(Outcome { code: EXIT_OK, stdout })
        }
    }
}

fn simulate_text(
    p: &CheckedProgram,
    trace: &Trace,
    validity: &ValidityReport,
    log: bool,
    trace_out: Option<&Path>,
) -> String {
    let mut out = String::new();
    if log {
        out.push_str(&trace.log());
    }
    for d in trace.last() {
        let locks: Vec<&str> = d.locks.iter().map(String::as_str).collect();
        writeln!(out, "D{} locks {{{}}}", d.id, locks.join(", ")).unwrap();
        for line in d.store.render(p).lines() {
            writeln!(out, "  {line}").unwrap();
        }
    }
    writeln!(out, "{}", validity.message()).unwrap();
    writeln!(out, "digest {}", trace.digest()).unwrap();
    if let Some(path) = trace_out {
        writeln!(out, "trace {}", path.display()).unwrap();
    }
    out
}

/// Entry point for the binary: parse `args`, run, print, return the code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_IO } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(o) => {
            let _ = std::io::stdout().write_all(o.stdout.as_bytes());
            o.code
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
