use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dbl_core::model::{PatternSpec, Violation};
use dbl_core::optimizer::{branch_and_bound, write_search_log, MonteCarloEvaluator, Problem};
use dbl_core::report::{write_aggregate_csv, AggregateRow, RunReport};
use dbl_core::sim::{run_simulation_with, write_ctps_csv, write_trajectories_csv, SimOptions};
use dbl_core::{reference, ConstraintSpec, ControllerSpec, DeploymentPattern, Error, Line, LineConfig, ReplicationSeed};

#[derive(Parser)]
#[command(name = "dblsim", version, about = "Simulate a circular bus line with dedicated lanes and choose where to build them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One seeded run: trajectories, control time points and a report.
    Simulate(Common),
    /// Several replications summarized in one table row.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
        reps: u64,
        /// Row label; defaults to the pattern.
        #[arg(long)]
        label: Option<String>,
    },
    /// Branch-and-bound over lane locations.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
        reps: u64,
        /// Influence and budget limits, e.g. `25,70`.
        #[arg(long, value_parser = parse_limits)]
        limits: Option<ConstraintSpec>,
        /// Candidate segment ids in branching order; defaults to every
        /// eligible segment with cost data.
        #[arg(long, value_delimiter = ',')]
        candidates: Option<Vec<u32>>,
        /// Give every pattern its own random numbers instead of sharing
        /// seeds across patterns.
        #[arg(long)]
        independent: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario JSON; the bundled reference line when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Look-ahead depth in control time points; 0 disables control.
    #[arg(long)]
    lookahead: Option<usize>,
    #[arg(long, default_value_t = dbl_core::controller::DEFAULT_GAMMA)]
    gamma: f64,
    /// Comma-separated segment ids with lanes.
    #[arg(long, value_delimiter = ',', conflicts_with = "preset")]
    pattern: Option<Vec<u32>>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn parse_limits(s: &str) -> Result<ConstraintSpec, String> {
    let (a, b) = s.split_once(',').ok_or("expected two numbers separated by a comma")?;
    let parse = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    Ok(ConstraintSpec {
        influence_limit: parse(a)?,
        budget_limit: parse(b)?,
    })
}

struct Setup {
    line: Line,
    pattern: DeploymentPattern,
    spec: ControllerSpec,
}

impl Common {
    fn setup(&self) -> dbl_core::Result<Setup> {
        let config = match &self.scenario {
            Some(path) => LineConfig::load(path)?,
            None => reference::config(),
        };
        let line = Line::new(config)?;
        let pattern = match (&self.pattern, &self.preset) {
            (Some(ids), _) => line.resolve_pattern(&PatternSpec::Segments(ids.clone()))?,
            (None, Some(name)) => line.preset(name)?,
            (None, None) => line.default_pattern()?,
        };
        let spec = match self.lookahead {
            Some(0) => ControllerSpec::None,
            Some(_) if !(self.gamma > 0.0 && self.gamma <= 1.0) => {
                return Err(Error::Validation(vec![Violation {
                    field: "gamma".to_string(),
                    rule: "must lie in (0, 1]".to_string(),
                }]))
            }
            Some(depth) => ControllerSpec::Lookahead {
                depth,
                gamma: self.gamma,
            },
            None => line.config().run.controller,
        };
        fs::create_dir_all(&self.out_dir)?;
        Ok(Setup { line, pattern, spec })
    }
}

fn create(dir: &Path, name: &str) -> dbl_core::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> dbl_core::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn simulate(common: &Common) -> dbl_core::Result<()> {
    let Setup { line, pattern, spec } = common.setup()?;
    let controller = spec.build(&line)?;
    let seed = ReplicationSeed::new(common.seed, 0);
    let outcome = run_simulation_with(&line, &pattern, controller.as_ref(), seed, &SimOptions::default())?;
    let report = RunReport::new(seed, &pattern, spec, &outcome)?;
    let dir = &common.out_dir;
    write_trajectories_csv(&line, &outcome, create(dir, "trajectories.csv")?)?;
    write_ctps_csv(&line, &outcome, create(dir, "ctps.csv")?)?;
    write_json(dir, "report.json", &report)?;
    let s = &report.stability;
    println!("pattern {pattern}");
    println!("stability index {:.3} (std {:.3}) over {} control time points", s.fsi, s.fsi_std, s.n_ctp);
    println!("regulations {} of {} decisions, mean |a| {:.3}", s.n_actions, s.n_decisions, s.action_abs_mean);
    println!("bunched: {}", if s.bunched { "yes" } else { "no" });
    Ok(())
}

fn evaluate(common: &Common, reps: u64, label: Option<&str>) -> dbl_core::Result<()> {
    let Setup { line, pattern, spec } = common.setup()?;
    let controller = spec.build(&line)?;
    let options = SimOptions::default();
    let seeds: Vec<_> = (0..reps).map(|j| ReplicationSeed::new(common.seed, j)).collect();
    let reports = dbl_core::optimizer::replicate(&line, &pattern, controller.as_ref(), &seeds, &options, |out| {
        Ok(out)
    })?
    .iter()
    .zip(&seeds)
    .map(|(out, &seed)| RunReport::new(seed, &pattern, spec, out))
    .collect::<dbl_core::Result<Vec<_>>>()?;
    let label = label.map_or_else(|| pattern.to_string(), str::to_string);
    let row = AggregateRow::from_reports(label, &reports)?;
    let dir = &common.out_dir;
    write_json(dir, "reports.json", &reports)?;
    write_json(dir, "aggregate.json", &row)?;
    write_aggregate_csv(std::slice::from_ref(&row), create(dir, "aggregate.csv")?)?;
    println!("{} over {} replications", row.label, row.replications);
    println!("stability index {:.2} (std {:.2}), control time points {:.0}", row.fsi, row.fsi_std, row.n_ctp);
    println!(
        "sum |a| {:.1}, mean |a| per decision {:.2}, decisions {:.0}",
        row.action_abs_sum, row.decision_abs_mean, row.n_decisions
    );
    println!("bunch {} ({:.2} of runs)", row.bunch_verdict(), row.bunch_fraction);
    println!(
        "passengers {:.0}: wait {:.1} s, ride {:.1} s, travel {:.1} s",
        row.n_p, row.wait_mean_s, row.ride_mean_s, row.travel_mean_s
    );
    Ok(())
}

fn optimize(
    common: &Common,
    reps: u64,
    limits: Option<ConstraintSpec>,
    candidates: Option<&[u32]>,
    independent: bool,
) -> dbl_core::Result<()> {
    let Setup { line, spec, .. } = common.setup()?;
    let controller = spec.build(&line)?;
    let limits = limits.unwrap_or(line.config().constraints);
    let candidates = match candidates {
        Some(ids) => ids.to_vec(),
        None => line
            .segments
            .iter()
            .filter(|s| s.eligible && s.influence_cost.is_some() && s.money_cost.is_some())
            .map(|s| s.id)
            .collect(),
    };
    let problem = Problem::from_line(&line, &candidates, limits)?;
    let evaluator = MonteCarloEvaluator {
        line: &line,
        controller: controller.as_ref(),
        reps,
        base_seed: common.seed,
        common_random_numbers: !independent,
        options: SimOptions::default(),
    };
    let result = branch_and_bound(&problem, &evaluator)?;
    let dir = &common.out_dir;
    write_json(dir, "result.json", &result)?;
    write_search_log(&result, create(dir, "search_log.csv")?)?;
    println!("optimal locations {}", result.optimal);
    println!("objective {:.3}", result.objective);
    println!("influence {:.2}, money {:.2}", result.influence_sum, result.money_sum);
    println!("nodes generated {}, feasible nodes {}", result.nodes_generated, result.feasible_nodes);
    if !result.monotonicity_violations.is_empty() {
        println!("monotonicity violations {}", result.monotonicity_violations.len());
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Validation(_)
        | Error::UnknownSegment(_)
        | Error::UnknownPreset(_)
        | Error::NotEligible(_)
        | Error::InadmissibleAction { .. }
        | Error::UnstableStop { .. }
        | Error::MissingCost(_)
        | Error::Json(_) => 2,
        Error::Infeasible => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(common) => simulate(common),
        Command::Evaluate { common, reps, label } => evaluate(common, *reps, label.as_deref()),
        Command::Optimize {
            common,
            reps,
            limits,
            candidates,
            independent,
        } => optimize(common, *reps, *limits, candidates.as_deref(), *independent),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if let Error::Validation(violations) = &err {
                for v in violations {
                    eprintln!("  {v}");
                }
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
