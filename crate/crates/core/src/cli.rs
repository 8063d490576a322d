//! Debugger-style front end: a `> `-prompted command loop over one dump,
//! and the `tg` invocation wrapped around it.

use std::fmt;
use std::fs;
use std::io::{self, BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Parser;
use thiserror::Error;

use crate::analyzers::{self, AnalyzerError, LockModel, DEFAULT_GRANULARITY};
use crate::dumpio::{parse_hex, DumpError, DumpImage};
use crate::graph::{render_all, CacheTypeTable, GraphError, StatsStyle, TypeGraph};
use crate::synth::{evaluate, EvalError, GroundTruth};
use crate::typecat::{CatalogError, TypeCatalog};

pub const PROMPT: &str = "> ";

const USAGE: &str = "\
commands:
  ::typegraph                 build the object graph and run all passes
  ADDR::whattype              report the inferred type of ADDR
  ::istype ADDR TYPE          declare the type of the object at ADDR and reprocess
  ::findlocks                 list held locks and their owners
  ::findfalse                 list arrays of lock-bearing structs prone to false sharing
  ::stats                     reprint per-pass statistics
  ::reach [ADDR]              unknown nodes reachable from ADDR, or the greatest-reach node
  ::conflicts                 list nodes with conflicting inferences
  ::eval TRUTH                score the graph against a ground-truth file
  ::quit";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Catalog { path: PathBuf, source: CatalogError },
    #[error("{path}: {source}")]
    Dump { path: PathBuf, source: DumpError },
    #[error("{path}: {source}")]
    CacheTable { path: PathBuf, source: GraphError },
    #[error("{path}: {source}")]
    Truth { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("output: {0}")]
    Output(#[from] io::Error),
}

/// A command failure that leaves the session usable.
#[derive(Debug, Error)]
pub enum CommandError {
    #[error("unknown command `{0}`\n{USAGE}")]
    Unknown(String),
    #[error("usage: {0}")]
    Usage(&'static str),
    #[error("bad address `{0}`")]
    BadAddress(String),
    #[error("run ::typegraph first")]
    NoGraph,
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Analyzer(#[from] AnalyzerError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Load(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Typegraph,
    Whattype(u64),
    Istype(u64, String),
    Findlocks,
    Findfalse,
    Stats,
    Reach(Option<u64>),
    Conflicts,
    Eval(PathBuf),
    Help,
    Quit,
}

fn addr(text: &str) -> Result<u64, CommandError> {
    parse_hex(text).ok_or_else(|| CommandError::BadAddress(text.to_string()))
}

impl Command {
    /// Parses `::cmd args` or `ADDR::cmd args`. `Ok(None)` for blank lines.
    pub fn parse(line: &str) -> Result<Option<Command>, CommandError> {
        let line = line.trim();
        if line.is_empty() {
            return Ok(None);
        }
        let Some((prefix, rest)) = line.split_once("::") else {
            return Err(CommandError::Unknown(line.to_string()));
        };
        let mut words = rest.split_whitespace();
        let name = words.next().unwrap_or("");
        let args: Vec<&str> = words.collect();
        let prefix = prefix.trim();
        let lead = if prefix.is_empty() { None } else { Some(addr(prefix)?) };
        // the address comes either before `::` or as the first argument
        let target = |args: &[&str]| -> Result<(Option<u64>, usize), CommandError> {
            match lead {
                Some(a) => Ok((Some(a), 0)),
                None => match args.first() {
                    Some(a) => Ok((Some(addr(a)?), 1)),
                    None => Ok((None, 0)),
                },
            }
        };
        let cmd = match name {
            "typegraph" => Command::Typegraph,
            "whattype" => match target(&args)? {
                (Some(a), _) => Command::Whattype(a),
                _ => return Err(CommandError::Usage("ADDR::whattype")),
            },
            "istype" => match target(&args)? {
                (Some(a), used) if args.len() > used => Command::Istype(a, args[used..].join(" ")),
                _ => return Err(CommandError::Usage("::istype ADDR TYPE")),
            },
            "findlocks" => Command::Findlocks,
            "findfalse" => Command::Findfalse,
            "stats" => Command::Stats,
            "reach" => Command::Reach(target(&args)?.0),
            "conflicts" => Command::Conflicts,
            "eval" => match args.first() {
                Some(p) => Command::Eval(PathBuf::from(p)),
                None => return Err(CommandError::Usage("::eval TRUTH")),
            },
            "help" => Command::Help,
            "quit" | "q" => Command::Quit,
            _ => return Err(CommandError::Unknown(line.to_string())),
        };
        Ok(Some(cmd))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    pub granularity: u64,
    pub lock_model: LockModel,
    /// Print elapsed-time lines in statistics.
    pub timing: bool,
    /// Highlight errors with ANSI color.
    pub color: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config { granularity: DEFAULT_GRANULARITY, lock_model: LockModel::default(), timing: true, color: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Quit,
}

/// One loaded dump. The graph is built on the first `::typegraph`.
pub struct Session {
    image: Arc<DumpImage>,
    catalog: Arc<TypeCatalog>,
    table: CacheTypeTable,
    graph: Option<TypeGraph>,
    pub config: Config,
}

impl Session {
    pub fn new(image: Arc<DumpImage>, catalog: Arc<TypeCatalog>, table: CacheTypeTable, config: Config) -> Self {
        Session { image, catalog, table, graph: None, config }
    }

    /// Loads the dump, catalog and optional cache table from files.
    pub fn open(dump: &Path, catalog: &Path, cache_table: Option<&Path>, config: Config) -> Result<Self, CliError> {
        let read = |p: &Path| fs::read_to_string(p).map_err(|source| CliError::Io { path: p.into(), source });
        let cat = TypeCatalog::from_json(&read(catalog)?)
            .map_err(|source| CliError::Catalog { path: catalog.into(), source })?;
        let image =
            DumpImage::from_json(&read(dump)?, &cat).map_err(|source| CliError::Dump { path: dump.into(), source })?;
        let table = match cache_table {
            Some(p) => CacheTypeTable::from_json(&read(p)?, &cat)
                .map_err(|source| CliError::CacheTable { path: p.into(), source })?,
            None => CacheTypeTable::new(),
        };
        Ok(Session::new(Arc::new(image), Arc::new(cat), table, config))
    }

    pub fn graph(&self) -> Option<&TypeGraph> {
        self.graph.as_ref()
    }

    fn need_graph(&self) -> Result<&TypeGraph, CommandError> {
        self.graph.as_ref().ok_or(CommandError::NoGraph)
    }

    fn style(&self) -> StatsStyle {
        StatsStyle { timing: self.config.timing }
    }

    fn reach_line(g: &TypeGraph) -> String {
        let value = match g.greatest_reach() {
            Some((id, n)) => format!("{:x} ({n} unknown)", g.node(id).base),
            None => "none".to_string(),
        };
        format!("typegraph: {:>30} => {value}\n", "greatest reach")
    }

    /// Runs one command, writing its rendering to `out`.
    pub fn execute(&mut self, cmd: &Command, out: &mut dyn Write) -> Result<Flow, CommandError> {
        let text = match cmd {
            Command::Typegraph => {
                let g = match &mut self.graph {
                    Some(g) => {
                        g.run();
                        g
                    }
                    None => {
                        let mut g = TypeGraph::build(self.image.clone(), self.catalog.clone(), self.table.clone())?;
                        g.run();
                        self.graph.insert(g)
                    }
                };
                let mut s = render_all(g.history(), StatsStyle { timing: self.config.timing });
                s.push_str(&Self::reach_line(g));
                s
            }
            Command::Whattype(a) => format!("{}\n", self.need_graph()?.whattype(*a)),
            Command::Istype(a, name) => {
                let ty = self.catalog.lookup(name).ok_or_else(|| CommandError::UnknownType(name.clone()))?;
                let style = self.style();
                let g = self.graph.as_mut().ok_or(CommandError::NoGraph)?;
                let stats = g.istype(*a, ty)?;
                let mut s = stats.last().map(|p| p.render(style)).unwrap_or_default();
                s.push_str(&Self::reach_line(g));
                s
            }
            Command::Findlocks => {
                let g = self.need_graph()?;
                analyzers::findlocks(g, &self.config.lock_model)?.iter().map(|r| format!("{r}\n")).collect()
            }
            Command::Findfalse => {
                let g = self.need_graph()?;
                analyzers::render_findfalse(&analyzers::findfalse(g, self.config.granularity)?)
            }
            Command::Stats => render_all(self.need_graph()?.history(), self.style()),
            Command::Reach(None) => Self::reach_line(self.need_graph()?),
            Command::Reach(Some(a)) => {
                let g = self.need_graph()?;
                let (id, _) = g.node_containing(*a).ok_or(GraphError::NoObject(*a))?;
                format!("{:x} reaches {} unknown nodes\n", g.node(id).base, g.reach().of(id))
            }
            Command::Conflicts => {
                let records = analyzers::conflicts(self.need_graph()?);
                let mut s: String = records.iter().map(|r| format!("{r}\n")).collect();
                s.push_str(&format!("{} conflicts\n", records.len()));
                s
            }
            Command::Eval(path) => {
                let g = self.need_graph()?;
                let text =
                    fs::read_to_string(path).map_err(|e| CommandError::Load(format!("{}: {e}", path.display())))?;
                let truth = GroundTruth::from_json(&text)
                    .map_err(|e| CommandError::Load(format!("{}: {e}", path.display())))?;
                format!("{}\n", evaluate(g, &truth)?)
            }
            Command::Help => format!("{USAGE}\n"),
            Command::Quit => return Ok(Flow::Quit),
        };
        out.write_all(text.as_bytes()).map_err(|e| CommandError::Load(e.to_string()))?;
        Ok(Flow::Continue)
    }

    /// Parses and runs one line. Command errors are printed, not returned.
    pub fn execute_line(&mut self, line: &str, out: &mut dyn Write) -> io::Result<Flow> {
        let result = Command::parse(line).and_then(|cmd| match cmd {
            Some(cmd) => self.execute(&cmd, out),
            None => Ok(Flow::Continue),
        });
        match result {
            Ok(flow) => Ok(flow),
            Err(e) => {
                write_error(out, &e, self.config.color)?;
                Ok(Flow::Continue)
            }
        }
    }

    /// The command loop: a prompt before every line, until `::quit` or end
    /// of input. Interactive use and script replay share this loop, so a
    /// replayed transcript prints the same bytes.
    pub fn repl(&mut self, input: &mut dyn BufRead, out: &mut dyn Write) -> io::Result<()> {
        let mut line = String::new();
        loop {
            out.write_all(PROMPT.as_bytes())?;
            out.flush()?;
            line.clear();
            if input.read_line(&mut line)? == 0 {
                out.write_all(b"\n")?;
                return Ok(());
            }
            if self.execute_line(&line, out)? == Flow::Quit {
                return Ok(());
            }
        }
    }
}

fn write_error(out: &mut dyn Write, e: &dyn fmt::Display, color: bool) -> io::Result<()> {
    if color {
        writeln!(out, "\x1b[31merror:\x1b[0m {e}")
    } else {
        writeln!(out, "error: {e}")
    }
}

/// Reads `TG_COLOR` (`auto`, `never` or `always`; default `auto`).
pub fn color_from_env() -> bool {
    match std::env::var("TG_COLOR").as_deref() {
        Ok("always") => true,
        Ok("never") => false,
        _ => io::stdout().is_terminal(),
    }
}

/// Identify the types of heap objects in a memory dump.
#[derive(Debug, Parser)]
#[command(name = "tg", version)]
pub struct Args {
    /// Dump file
    pub dump: PathBuf,
    /// Type catalog
    #[arg(long)]
    pub catalog: PathBuf,
    /// Allocator caches holding objects of one type
    #[arg(long)]
    pub cache_table: Option<PathBuf>,
    /// Coherence granularity in bytes for ::findfalse
    #[arg(long, default_value_t = DEFAULT_GRANULARITY)]
    pub coherence: u64,
    /// Run ::typegraph, score against this ground truth, and exit
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// Replay commands from a file instead of reading standard input
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Omit elapsed-time lines from statistics
    #[arg(long)]
    pub no_timing: bool,
}

/// Runs an invocation. Returns the process exit status.
pub fn run(args: &Args, stdin: &mut dyn BufRead, out: &mut dyn Write) -> Result<i32, CliError> {
    let config =
        Config { granularity: args.coherence, timing: !args.no_timing, color: color_from_env(), ..Config::default() };
    let mut session = Session::open(&args.dump, &args.catalog, args.cache_table.as_deref(), config)?;
    let mut status = 0;
    if let Some(truth_path) = &args.eval {
        let text =
            fs::read_to_string(truth_path).map_err(|source| CliError::Io { path: truth_path.clone(), source })?;
        let truth =
            GroundTruth::from_json(&text).map_err(|source| CliError::Truth { path: truth_path.clone(), source })?;
        let mut graph = TypeGraph::build(session.image.clone(), session.catalog.clone(), session.table.clone())?;
        graph.run();
        write!(out, "{}", render_all(graph.history(), session.style()))?;
        match evaluate(&graph, &truth) {
            Ok(report) => {
                writeln!(out, "{report}")?;
                if report.misidentified > 0 {
                    status = 1;
                }
            }
            Err(e) => {
                write_error(out, &e, session.config.color)?;
                status = 1;
            }
        }
        session.graph = Some(graph);
    }
    if let Some(script) = &args.script {
        let file = fs::File::open(script).map_err(|source| CliError::Io { path: script.clone(), source })?;
        session.repl(&mut io::BufReader::new(file), out)?;
    } else if args.eval.is_none() {
        session.repl(stdin, out)?;
    }
    Ok(status)
}

/// Entry point for the `tg` binary.
pub fn main() -> i32 {
    let args = Args::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match run(&args, &mut io::stdin().lock(), &mut out) {
        Ok(status) => status,
        Err(e) => {
            let _ = out.flush();
            eprintln!("tg: {e}");
            1
        }
    }
}
