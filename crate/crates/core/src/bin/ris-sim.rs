use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ris_sim::bvcurve::BvCurve;
use ris_sim::experiment::{run_mu_sweep, run_single, verify_concept, Direction, RunConfig};
use ris_sim::jumpcost::{ve_cost, viscous_cost};
use ris_sim::model::State;
use ris_sim::verify::{default_tolerance, CheckOptions};
use ris_sim::{par, Error, Result};

#[derive(Parser)]
#[command(name = "ris-sim", version, about = "Simulate and verify rate-independent systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured scheme and verify the result.
    Run { config: PathBuf },
    /// Sweep μ toward the energetic (down) or balanced-viscosity (up) limit.
    Sweep {
        config: PathBuf,
        #[arg(long, value_enum)]
        direction: DirectionArg,
    },
    /// Verify a curve CSV against a solution concept.
    Verify {
        curve: PathBuf,
        #[arg(long, value_enum)]
        concept: Concept,
        #[arg(long)]
        mu: Option<f64>,
        /// Run configuration providing the model and the grid.
        #[arg(long)]
        config: PathBuf,
        /// Absolute tolerance (default from the configuration).
        #[arg(long)]
        tol: Option<f64>,
        /// Emit the report as CSV instead of text.
        #[arg(long)]
        csv: bool,
    },
    /// Evaluate a jump cost between two grid states.
    #[command(allow_negative_numbers = true)]
    Cost {
        #[arg(long, value_enum)]
        kind: CostKind,
        #[arg(long)]
        t: f64,
        /// Comma-separated coordinates.
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Down,
    Up,
}

#[derive(Clone, Copy, ValueEnum)]
enum Concept {
    Energetic,
    Bv,
    Ve,
}

#[derive(Clone, Copy, ValueEnum)]
enum CostKind {
    V,
    C,
}

fn parse_state(s: &str) -> Result<State> {
    let coords = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| Error::Usage(format!("bad coordinate '{p}'"))))
        .collect::<Result<Vec<_>>>()?;
    State::from_coords(&coords).map_err(|e| Error::Usage(e.to_string()))
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config } => {
            let cfg = RunConfig::load(&config)?;
            let out = run_single(&cfg)?;
            for r in &out.reports {
                print!("{}", r.to_text());
            }
            println!(
                "certificate: checked={} failures={}",
                out.certificate.checked,
                out.certificate.failures.len()
            );
            Ok(out.passed())
        }
        Command::Sweep { config, direction } => {
            let cfg = RunConfig::load(&config)?;
            let dir = match direction {
                DirectionArg::Down => Direction::Down,
                DirectionArg::Up => Direction::Up,
            };
            let res = run_mu_sweep(&cfg, dir)?;
            print!("{}", res.to_csv_string());
            if res.trend_inversions > 0 {
                eprintln!("warning: {} non-monotone steps in the sweep trend", res.trend_inversions);
            }
            Ok(res.rows.iter().all(|r| r.verified != Some(false)))
        }
        Command::Verify { curve, concept, mu, config, tol, csv } => {
            let cfg = RunConfig::load(&config)?;
            let model = cfg.model()?;
            let space = cfg.space()?;
            let curve = BvCurve::load(&curve)?;
            let tol = tol.unwrap_or_else(|| {
                cfg.tolerances.tol.unwrap_or_else(|| {
                    default_tolerance(cfg.tolerances.c_tol, space.h(), cfg.time.tau, cfg.time.tau)
                })
            });
            let mut opts = CheckOptions::new(tol);
            opts.jump_rel_tol = cfg.tolerances.jump_rel;
            let name = match concept {
                Concept::Energetic => "energetic",
                Concept::Bv => "bv",
                Concept::Ve => "ve",
            };
            let report = verify_concept(model.as_ref(), &space, &curve, name, mu, &opts)?;
            if csv {
                report.write_csv(std::io::stdout())?;
            } else {
                print!("{}", report.to_text());
            }
            Ok(report.passed())
        }
        Command::Cost { kind, t, from, to, mu, config } => {
            let cfg = RunConfig::load(&config)?;
            let model = cfg.model()?;
            let space = cfg.space()?;
            let a = space.snap(&parse_state(&from)?)?;
            let b = space.snap(&parse_state(&to)?)?;
            let (tag, cost) = match kind {
                CostKind::V => ("v", viscous_cost(model.as_ref(), &space, t, &a, &b)?),
                CostKind::C => {
                    let mu = mu.ok_or_else(|| Error::Usage("--mu is required for --kind c".into()))?;
                    ("c_mu", ve_cost(model.as_ref(), &space, t, &a, &b, mu)?)
                }
            };
            print!("{}", cost.report(tag));
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    par::init_from_env();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ Error::Usage(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(3)
        }
    }
}
