//! The `smsl` command.
//!
//! ```text
//! smsl validate FILE
//! smsl dot FILE [--branch B]
//! smsl plan FILE [--branch B] [--from S] --to T [--prune STATE:OP]...
//! smsl run FILE [--branch B] [--from S] --to T [--mode M] [--sensors REPLAY]
//! smsl serve --file FILE [--bind ADDR] [--log PATH] [--mode M] [--confirm OP]...
//! ```
//!
//! Exit status is 0 on success, 1 when the input is well-formed but the
//! answer is negative (invalid document, unreachable goal, a run that did not
//! complete) and 2 for usage errors, including names the document does not
//! declare.

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use smsl_core::dispatcher::{
    AutoApprove, BlindEnvironment, Decision, Environment, ExecutionSession, Mode, OperationLibrary, Proposal,
    SimEnvironment, StopReason, Supervisor, Verdict,
};
use smsl_core::graph::{export_dot, EdgeId, FsmGraph};
use smsl_core::monitor::{parse_replay, SensorMap};
use smsl_core::smsl::{parse, validate, SmslDocument, StateBranch};
use smsl_core::state::BranchModel;
use smsl_core::Timestamp;
use smsl_service::{Service, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "smsl", version, about = "Validate, draw, plan, run and serve SMSL workflows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a document and print its findings.
    Validate { file: PathBuf },
    /// Print a branch as Graphviz DOT.
    Dot {
        file: PathBuf,
        #[arg(long)]
        branch: Option<String>,
    },
    /// Print the cheapest path between two states.
    Plan {
        #[command(flatten)]
        target: Target,
        /// Leave an edge out of planning, as STATE:OPERATION.
        #[arg(long = "prune", value_name = "STATE:OP")]
        prune: Vec<EdgeId>,
    },
    /// Execute a plan against a simulated world with oracle handlers.
    Run {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value = "autonomous")]
        mode: Mode,
        /// Sensor replay file whose readings disturb the simulated world.
        #[arg(long, value_name = "REPLAY")]
        sensors: Option<PathBuf>,
    },
    /// Start the supervision service.
    Serve {
        #[arg(long)]
        file: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long, default_value = "events.jsonl")]
        log: PathBuf,
        #[arg(long, default_value = "supervised")]
        mode: Mode,
        /// Make an operation wait for a person's confirmation.
        #[arg(long = "confirm", value_name = "OP")]
        confirm: Vec<String>,
    },
}

#[derive(Debug, Args)]
struct Target {
    file: PathBuf,
    /// Branch to use; may be left out when the document has one branch.
    #[arg(long)]
    branch: Option<String>,
    /// Start state; defaults to the branch's initial state.
    #[arg(long)]
    from: Option<String>,
    #[arg(long)]
    to: String,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn status(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book {}

type CliResult = Result<i32, CliError>;

/// Runs the command line `args` (program name first) and returns the exit
/// status. Supervised runs read verdicts from `stdin`.
pub fn run_cli<I, T>(args: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                2
            } else {
                let _ = write!(stdout, "{text}");
                0
            };
        }
    };
    let result = match cli.command {
        Command::Validate { file } => validate_cmd(&file, stdout),
        Command::Dot { file, branch } => dot_cmd(&file, branch.as_deref(), stdout),
        Command::Plan { target, prune } => plan_cmd(&target, &prune, stdout),
        Command::Run { target, mode, sensors } => run_cmd(&target, mode, sensors.as_deref(), stdin, stdout),
        Command::Serve { file, bind, log, mode, confirm } => serve_cmd(&file, bind, log, mode, confirm, stdout),
    };
    match result {
        Ok(status) => status,
        Err(e) => {
            let _ = writeln!(stderr, "smsl: {e}");
            e.status()
        }
    }
}

fn io_error(e: std::io::Error) -> CliError {
    CliError::Failed(format!("write failed: {e}"))
}

fn load(file: &Path) -> Result<SmslDocument, CliError> {
    let text = std::fs::read_to_string(file).map_err(|e| CliError::Failed(format!("{}: {e}", file.display())))?;
    parse(&text).map_err(|e| CliError::Failed(format!("{}: {e}", file.display())))
}

fn pick_branch<'d>(doc: &'d SmslDocument, name: Option<&str>) -> Result<&'d StateBranch, CliError> {
    match name {
        Some(n) => doc.branch(n).ok_or_else(|| CliError::Usage(format!("no branch {n:?} in the document"))),
        None if doc.len() == 1 => Ok(doc.branches().next().expect("one branch")),
        None => Err(CliError::Usage(format!(
            "the document has {} branches, choose one with --branch ({})",
            doc.len(),
            doc.branch_names().collect::<Vec<_>>().join(", ")
        ))),
    }
}

fn require_state(branch: &StateBranch, state: &str) -> Result<(), CliError> {
    if branch.contains_state(state) {
        Ok(())
    } else {
        Err(CliError::Usage(format!("no state {state:?} in branch {}", branch.name())))
    }
}

fn plural(n: usize, word: &str) -> String {
    if n == 1 {
        format!("{n} {word}")
    } else {
        format!("{n} {word}s")
    }
}

fn validate_cmd(file: &Path, out: &mut dyn Write) -> CliResult {
    let doc = load(file)?;
    let report = validate(&doc);
    for finding in &report.findings {
        writeln!(out, "{finding}").map_err(io_error)?;
    }
    if report.ok {
        writeln!(
            out,
            "ok: {}, {}, {}",
            plural(doc.len(), "branch"),
            plural(doc.state_count(), "state"),
            plural(doc.operation_count(), "operation")
        )
        .map_err(io_error)?;
        Ok(0)
    } else {
        writeln!(out, "invalid: {}", plural(report.errors().count(), "error")).map_err(io_error)?;
        Ok(1)
    }
}

fn dot_cmd(file: &Path, branch: Option<&str>, out: &mut dyn Write) -> CliResult {
    let doc = load(file)?;
    let branch = pick_branch(&doc, branch)?;
    write!(out, "{}", export_dot(&FsmGraph::build(branch))).map_err(io_error)?;
    Ok(0)
}

fn endpoints<'d>(doc: &'d SmslDocument, target: &Target) -> Result<(&'d StateBranch, String), CliError> {
    let branch = pick_branch(doc, target.branch.as_deref())?;
    let from = match &target.from {
        Some(s) => s.clone(),
        None => branch
            .effective_initial()
            .ok_or_else(|| CliError::Usage(format!("branch {} has no states", branch.name())))?
            .to_string(),
    };
    require_state(branch, &from)?;
    require_state(branch, &target.to)?;
    Ok((branch, from))
}

fn plan_cmd(target: &Target, prune: &[EdgeId], out: &mut dyn Write) -> CliResult {
    let doc = load(&target.file)?;
    let (branch, from) = endpoints(&doc, target)?;
    let mut graph = FsmGraph::build(branch);
    for edge in prune {
        graph.prune_edge(edge).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match graph.shortest_path(&from, &target.to).map_err(|e| CliError::Usage(e.to_string()))? {
        Some(path) => {
            writeln!(out, "{path}").map_err(io_error)?;
            Ok(0)
        }
        None => Err(CliError::Failed(format!("{} is unreachable from {from}", target.to))),
    }
}

/// Asks for a verdict on each proposal, one line per answer. Anything but
/// `approve`, `a`, `yes` or `y` vetoes, and so does end of input.
struct Prompt<'a> {
    input: &'a mut dyn BufRead,
    output: &'a mut dyn Write,
}

impl Supervisor for Prompt<'_> {
    fn review(&mut self, session: &ExecutionSession, proposal: &Proposal) -> Decision {
        let target = session.graph().edge(&proposal.edge).map_or("?", |e| e.dst.as_str());
        let _ = writeln!(
            self.output,
            "proposal {}: {} --{}--> {target} (approve/veto)?",
            proposal.id, proposal.edge.src, proposal.edge.op
        );
        let mut line = String::new();
        let approved = match self.input.read_line(&mut line) {
            Ok(n) if n > 0 => matches!(line.trim().to_ascii_lowercase().as_str(), "approve" | "a" | "yes" | "y"),
            _ => false,
        };
        let verdict = if approved { Verdict::Approved } else { Verdict::Vetoed };
        Decision { verdict, actor: "operator".into() }
    }
}

fn run_cmd(
    target: &Target,
    mode: Mode,
    sensors: Option<&Path>,
    stdin: &mut dyn BufRead,
    out: &mut dyn Write,
) -> CliResult {
    let doc = load(&target.file)?;
    let (branch, from) = endpoints(&doc, target)?;
    let disturbances = match sensors {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
            parse_replay(&text).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?
        }
        None => Vec::new(),
    };

    let model = BranchModel::new(branch);
    let mut env: Box<dyn Environment> = match (model.is_decodable(), model.fact_count()) {
        (true, Some(n)) => {
            let env = SimEnvironment::new(model, SensorMap::numbered("fact", n), &from)
                .map_err(|e| CliError::Failed(e.to_string()))?;
            Box::new(env.with_disturbances(disturbances))
        }
        _ if !disturbances.is_empty() => {
            return Err(CliError::Usage(format!("branch {} has no facts to sense", branch.name())))
        }
        _ => Box::new(BlindEnvironment::default()),
    };

    let mut session = ExecutionSession::start("cli", branch, Some(&from), mode, Timestamp::ZERO)
        .map_err(|e| CliError::Failed(e.to_string()))?;
    let plan = session
        .plan_to(&target.to)
        .map_err(|e| CliError::Usage(e.to_string()))?
        .ok_or_else(|| CliError::Failed(format!("{} is unreachable from {from}", target.to)))?;
    let lib = OperationLibrary::oracle_for(branch);
    let report = if mode == Mode::Supervised {
        let mut prompt = Prompt { input: stdin, output: out };
        session.run_plan(&lib, env.as_mut(), &plan, &mut prompt)
    } else {
        session.run_plan(&lib, env.as_mut(), &plan, &mut AutoApprove("autonomous".into()))
    }
    .map_err(|e| CliError::Failed(e.to_string()))?;
    writeln!(out, "{report}").map_err(io_error)?;
    Ok(if report.stop == StopReason::Completed { 0 } else { 1 })
}

fn serve_cmd(
    file: &Path,
    bind: SocketAddr,
    log: PathBuf,
    mode: Mode,
    confirm: Vec<String>,
    out: &mut dyn Write,
) -> CliResult {
    let doc = smsl_service::load_document(file).map_err(|e| CliError::Failed(e.to_string()))?;
    let mut config = ServiceConfig::new(log).with_mode(mode);
    for op in confirm {
        config = config.confirm(op);
    }
    let service = Service::new(doc, config).map_err(|e| CliError::Failed(e.to_string()))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Failed(e.to_string()))?;
    runtime.block_on(async {
        let listener = smsl_service::bind(bind).await.map_err(|e| CliError::Failed(e.to_string()))?;
        let addr = listener.local_addr().map_err(|e| CliError::Failed(e.to_string()))?;
        writeln!(out, "listening on http://{addr}").map_err(io_error)?;
        out.flush().map_err(io_error)?;
        service.serve(listener).await.map_err(|e| CliError::Failed(e.to_string()))
    })?;
    Ok(0)
}
