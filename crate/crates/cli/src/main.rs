//! `nullflow` command-line runner.
//!
//! Exit codes: 0 all tasks match their expectations, 1 a violation was
//! found, 2 inconclusive, 3 input or runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nullflow::geometry::builtins;
use nullflow::scenario::{self, apply_thread_limit, canned, canned_by_name, RunReport, ScenarioError};

#[derive(Parser)]
#[command(name = "nullflow", about = "Null congruences, entropy convexity, and energy-condition checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write report.json plus CSV tables.
    Run {
        /// Scenario TOML file.
        #[arg(required_unless_present = "canned", conflicts_with = "canned")]
        file: Option<PathBuf>,
        /// Run a bundled scenario by name instead of a file.
        #[arg(long)]
        canned: Option<String>,
        /// Output directory (overrides `output.dir`).
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// List built-in metrics and bundled scenarios.
    ListBuiltins,
    /// Print the version.
    Version,
}

fn run(file: Option<PathBuf>, canned_name: Option<String>, out: Option<PathBuf>) -> Result<RunReport, ScenarioError> {
    let parsed = match (file, canned_name) {
        (Some(f), _) => scenario::load(&f)?,
        (None, Some(name)) => canned_by_name(&name)
            .ok_or_else(|| ScenarioError::Config {
                path: "--canned".into(),
                message: format!("no bundled scenario '{name}'; see list-builtins"),
            })?
            .parse()?,
        (None, None) => unreachable!("clap requires one of them"),
    };
    let prepared = parsed.validate()?;
    let dir = scenario::output_dir(&prepared, out.as_deref());
    println!("scenario {} -> {}", prepared.scenario.name, dir.display());
    scenario::execute(&prepared, &dir)
}

fn print_report(r: &RunReport) {
    for t in &r.tasks {
        let expect = t.expect.map_or("-".to_string(), |e| format!("{e:?}").to_lowercase());
        let mark = if t.matches { "ok" } else { "MISMATCH" };
        println!(
            "[{}] {}: {} (expect {expect}) {mark}",
            t.index,
            t.kind,
            format!("{:?}", t.category).to_lowercase()
        );
        println!("    {}", t.summary);
    }
    println!("report: {}", r.out_dir.join("report.json").display());
    println!("exit code {}", r.exit_code);
}

fn list_builtins() {
    println!("Built-in metrics:");
    for b in builtins::catalog() {
        println!("  {}: {}", b.name, b.summary);
        println!("      chart: {}", b.chart);
        for p in &b.params {
            println!("      {} = {}  ({})", p.name, p.default, p.doc);
        }
    }
    println!();
    println!("Bundled scenarios (run with --canned NAME):");
    for c in canned() {
        println!("  {}: {}", c.name, c.summary);
        println!("      file: {}", c.file);
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(msg) = apply_thread_limit() {
        eprintln!("error: {msg}");
        return ExitCode::from(3);
    }
    match cli.command {
        Command::Version => {
            println!("nullflow {}", env!("CARGO_PKG_VERSION"));
            ExitCode::SUCCESS
        }
        Command::ListBuiltins => {
            list_builtins();
            ExitCode::SUCCESS
        }
        Command::Run { file, canned, out } => match run(file, canned, out) {
            Ok(r) => {
                print_report(&r);
                ExitCode::from(r.exit_code as u8)
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(3)
            }
        },
    }
}
