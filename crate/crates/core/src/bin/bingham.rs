use std::path::PathBuf;
use std::process::ExitCode;

use bingham_ep::analysis::PoiseuilleDrive;
use bingham_ep::cli::{self, CliError, RunConfig, EXIT_USAGE};
use bingham_ep::solvers::Method;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bingham", version, about = "Bingham flow solver with exact divergence penalization")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configured problem and write history.csv, report.json and solution.vtk.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override solver.method.
        #[arg(long, value_parser = parse_method)]
        method: Option<Method>,
    },
    /// Run several methods on the same configuration.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "ep,qp,ssn", value_parser = parse_method)]
        methods: Vec<Method>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of gradient and Hessian assembly.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Solve channel flow with EP and compare against the exact profile.
    #[command(allow_negative_numbers = true)]
    ValidatePoiseuille {
        #[arg(long, default_value_t = 32)]
        nx: usize,
        #[arg(long, default_value = "pressure-drop", value_parser = parse_drive)]
        drive: PoiseuilleDrive,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, default_value_t = 5e-3)]
        h1_tol: f64,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).ok_or_else(|| format!("unknown method '{s}' (expected ep, qp or ssn)"))
}

fn parse_drive(s: &str) -> Result<PoiseuilleDrive, String> {
    match s {
        "pressure-drop" | "pressure_drop" => Ok(PoiseuilleDrive::PressureDrop),
        "body-force" | "body_force" => Ok(PoiseuilleDrive::BodyForce),
        _ => Err(format!("unknown drive '{s}'")),
    }
}

fn load(path: &PathBuf) -> Result<RunConfig, CliError> {
    Ok(RunConfig::load(path)?)
}

fn run(args: Args) -> Result<i32, CliError> {
    match args.command {
        Command::Solve { config, out, method } => {
            let mut cfg = load(&config)?;
            if let Some(m) = method {
                cfg.solver.method = m;
                cfg.validate()?;
            }
            let (summary, _) = cli::cmd_solve(&cfg, out.as_deref())?;
            let f = &summary.final_record;
            println!(
                "{} converged={} iterations={} J={} J_sigma={} div_l2={} indicator={}",
                summary.method.name(),
                summary.converged,
                summary.iterations,
                cli::output::fmt_e(f.j_value),
                cli::output::fmt_e(f.jsigma_value),
                cli::output::fmt_e(f.div_l2),
                cli::output::fmt_e(f.indicator)
            );
            if let Some(s0) = summary.sigma0_estimate {
                println!("sigma0_estimate={}", cli::output::fmt_e(s0));
            }
            if let Some(e) = summary.h1_error {
                println!("h1_error={}", cli::output::fmt_e(e));
            }
            Ok(summary.exit_code())
        }
        Command::Compare { config, methods, out } => {
            let cfg = load(&config)?;
            let results = cli::cmd_compare(&cfg, &methods, out.as_deref())?;
            for (m, r) in &results {
                match r {
                    Ok(s) => println!(
                        "{} converged={} iterations={} J={} div_l2={} time_s={}",
                        m.name(),
                        s.converged,
                        s.iterations,
                        cli::output::fmt_e(s.final_record.j_value),
                        cli::output::fmt_e(s.final_record.div_l2),
                        cli::output::fmt_e(s.final_record.time_s)
                    ),
                    Err(e) => println!("{} error: {e}", m.name()),
                }
            }
            Ok(cli::compare_exit_code(&results))
        }
        Command::Gradcheck { config } => {
            let cfg = match config {
                Some(p) => load(&p)?,
                None => RunConfig::default(),
            };
            let rep = cli::cmd_gradcheck(&cfg)?;
            for s in &rep.samples {
                println!(
                    "seed={} grad_rel_err={} hess_rel_err={} eps={} stable={}",
                    s.seed,
                    cli::output::fmt_e(s.grad_rel_err),
                    cli::output::fmt_e(s.hess_rel_err),
                    cli::output::fmt_e(s.eps),
                    s.branches_stable
                );
            }
            println!("{}", if rep.passed { "gradcheck passed" } else { "gradcheck FAILED" });
            Ok(if rep.passed { cli::EXIT_OK } else { cli::EXIT_NOT_CONVERGED })
        }
        Command::ValidatePoiseuille { nx, drive, beta, gamma, sigma, h1_tol } => {
            let overrides = cli::ParamOverrides { beta, gamma, sigma };
            let v = cli::validate_poiseuille(nx, drive, overrides, h1_tol)?;
            println!("{}", serde_json::to_string_pretty(&v).expect("serializable"));
            Ok(if v.passed { cli::EXIT_OK } else { cli::EXIT_NOT_CONVERGED })
        }
    }
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            return ExitCode::from(code as u8);
        }
    };
    match run(args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
