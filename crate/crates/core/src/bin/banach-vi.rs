use std::path::PathBuf;
use std::process::ExitCode;

use banach_vi::error::Result;
use banach_vi::harness::{self, Overrides, Scenario};
use clap::{Args, Parser, Subcommand};

/// Viscosity iterations for variational inequalities over common fixed sets
/// of strict pseudocontractions in l_p spaces.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify, validate, solve the oracle and run every algorithm block.
    Run(Common),
    /// Run the sampled certifiers only.
    Certify(Common),
    /// Run every algorithm block and tabulate the results side by side.
    Compare(Common),
    /// Solve for the reference solution.
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory, overriding the scenario.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Iteration cap for every run.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Seed for generated problems and certifier sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Run even when gains or schedules fail validation.
    #[arg(long)]
    override_validation: bool,
    /// Write every N-th trace row.
    #[arg(long)]
    cadence: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<Scenario> {
        let ov = Overrides {
            out: self.out.clone(),
            max_iter: self.max_iter,
            seed: self.seed,
            cadence: self.cadence,
            override_validation: self.override_validation,
        };
        harness::parse_scenario_with(&self.scenario, &ov)
    }
}

fn run(args: &Common) -> Result<i32> {
    let sc = args.load()?;
    for f in &sc.validation_failures {
        eprintln!("warning: running despite {f}");
    }
    let outcome = harness::run_scenario(&sc)?;
    for f in outcome.certificates.failures() {
        eprintln!("certificate failed: {f}");
    }
    for r in &outcome.runs {
        let s = &r.summary;
        let dist = s
            .dist_to_oracle
            .map(|d| format!("{d:.3e}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{}: {} after {} iterations, fixpoint residual {:.3e}, distance to oracle {dist}",
            s.run,
            s.status.as_str(),
            s.iterations,
            s.final_residuals.fixpoint
        );
    }
    println!("artifacts in {}", sc.out_dir.display());
    Ok(outcome.exit_code)
}

fn certify(args: &Common) -> Result<i32> {
    let sc = args.load()?;
    let summary = harness::certify_scenario(&sc);
    for r in &summary.reports {
        println!(
            "{} {} (worst margin {:.3e})",
            if r.passed { "PASS" } else { "FAIL" },
            r.property,
            r.worst_margin
        );
    }
    std::fs::create_dir_all(&sc.out_dir)?;
    harness::write_json(&summary, &sc.out_dir.join("certify.json"))?;
    Ok(i32::from(!summary.passed))
}

fn compare(args: &Common) -> Result<i32> {
    let sc = args.load()?;
    let table = harness::compare(&harness::scenario_configs(&sc))?;
    print!("{}", table.to_text());
    std::fs::create_dir_all(&sc.out_dir)?;
    std::fs::write(sc.out_dir.join("compare.csv"), table.to_csv())?;
    harness::write_json(&table, &sc.out_dir.join("compare.json"))?;
    let all_converged = table
        .rows
        .iter()
        .all(|r| r.iterations_to_tolerance.is_some());
    Ok(i32::from(!all_converged))
}

fn oracle(args: &Common) -> Result<i32> {
    let sc = args.load()?;
    let result = match harness::scenario_oracle(&sc) {
        (Some(r), note) => {
            if let Some(n) = note {
                eprintln!("note: {n}");
            }
            r
        }
        (None, note) => {
            if let Some(n) = note {
                eprintln!("note: {n}; using a long synchronal run");
            }
            harness::long_run_reference(&sc)?
        }
    };
    println!("method: {:?}", result.method);
    println!("x*: {:?}", result.x_star.0);
    println!("vi residual: {:.3e}", result.vi_residual);
    std::fs::create_dir_all(&sc.out_dir)?;
    harness::write_json(&result, &sc.out_dir.join("oracle.json"))?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run(a),
        Command::Certify(a) => certify(a),
        Command::Compare(a) => compare(a),
        Command::Oracle(a) => oracle(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
