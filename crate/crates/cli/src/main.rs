use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fairdc::fairsolve::{plan_quotas, solve_fair_assignment, solve_with_plan};
use fairdc::metrics::{MetricsReport, NmiNorm};
use fairdc::trainer::predict;
use fairdc::{Error, HardAssignment, Result};
use serde_json::json;

use fairdc_cli::config::Overrides;
use fairdc_cli::files::{read_features, read_labels, read_membership, read_model, read_soft, write_labels};
use fairdc_cli::run::{execute, Status};
use fairdc_cli::sweep::SweepArgs;

const ENV_HELP: &str = "\
Environment:
  FAIRDC_OUT   output directory when --out is not given
  FAIRDC_LOG   log filter for stderr (error, warn, info, debug, trace); default warn

Exit codes:
  0 success, 2 invalid input, 3 infeasible constraints, 4 numeric failure";

#[derive(Parser)]
#[command(name = "fairdc", version, about = "Deep fair discriminative clustering", after_help = ENV_HELP)]
struct Cli {
    /// Output directory
    #[arg(long, global = true, env = "FAIRDC_OUT")]
    out: Option<PathBuf>,
    /// Worker threads for sweep runs (default: logical cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain and fairly refine a clustering network
    Train {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Fair hard assignment of a soft assignment under group quotas
    Assign {
        /// N x K cluster probabilities (CSV or FDCM)
        #[arg(long)]
        soft: PathBuf,
        /// Group ids or one-hot N x T matrix (CSV or FDCM)
        #[arg(long)]
        membership: PathBuf,
        /// Allowed deviation of in-cluster group proportions
        #[arg(long)]
        epsilon_relax: Option<f64>,
        /// Comma-separated cluster sizes; default: sizes of the per-row argmax
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
    },
    /// Balance, fairness, and (given truth) accuracy and NMI
    Evaluate {
        /// Cluster ids, one per row
        #[arg(long, required_unless_present = "model", conflicts_with = "model")]
        labels: Option<PathBuf>,
        /// Model dump to predict with instead of a labels file
        #[arg(long, requires = "features")]
        model: Option<PathBuf>,
        /// Feature matrix for --model (CSV or FDCM)
        #[arg(long)]
        features: Option<PathBuf>,
        /// Group ids or one-hot N x T matrix (CSV or FDCM)
        #[arg(long)]
        membership: PathBuf,
        /// Ground-truth class ids
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Normalize NMI by the geometric instead of the arithmetic mean
        #[arg(long)]
        geometric_nmi: bool,
    },
    /// One run per value of beta or epsilon, aggregated
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        sweep: SweepArgs,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Infeasible(_) => 3,
        Error::NonFinite { .. } => 4,
        _ => 2,
    }
}

fn out_dir(cli_out: &Option<PathBuf>) -> PathBuf {
    cli_out.clone().unwrap_or_else(|| PathBuf::from("fairdc-out"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("FAIRDC_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train { overrides } => cmd_train(overrides, &out_dir(&cli.out)),
        Command::Assign {
            soft,
            membership,
            epsilon_relax,
            sizes,
        } => cmd_assign(soft, membership, *epsilon_relax, sizes.as_deref(), cli.out.as_deref()),
        Command::Evaluate {
            labels,
            model,
            features,
            membership,
            truth,
            geometric_nmi,
        } => {
            let norm = if *geometric_nmi {
                NmiNorm::Geometric
            } else {
                NmiNorm::Arithmetic
            };
            let source = match (labels, model, features) {
                (Some(l), _, _) => Source::Labels(l),
                (None, Some(m), Some(f)) => Source::Model(m, f),
                _ => unreachable!("clap enforces labels or model with features"),
            };
            cmd_evaluate(source, membership, truth.as_deref(), norm, cli.out.as_deref())
        }
        Command::Sweep { overrides, sweep } => {
            fairdc_cli::sweep::cmd_sweep(overrides, sweep, &out_dir(&cli.out), cli.threads)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string(v).map_err(|e| Error::Parse(e.to_string()))?);
    Ok(())
}

fn cmd_train(overrides: &Overrides, out: &Path) -> Result<()> {
    let cfg = overrides.resolve()?;
    let (report, error) = execute(&cfg, out);
    print_json(&json!({
        "status": report.status,
        "epochs": report.epochs,
        "converged": report.converged,
        "train": report.train,
        "test": report.test,
        "report": report.artifacts.report,
    }))?;
    match error {
        Some(e) => Err(e),
        None if report.status == Status::Ok => Ok(()),
        None => Err(Error::Domain("run failed".into())),
    }
}

fn cmd_assign(
    soft: &Path,
    membership: &Path,
    eps: Option<f64>,
    sizes: Option<&[usize]>,
    out: Option<&Path>,
) -> Result<()> {
    let y = read_soft(soft)?;
    let m = read_membership(membership)?;
    if y.n() != m.n() {
        return Err(Error::Config(format!(
            "soft assignment has {} rows but membership has {}",
            y.n(),
            m.n()
        )));
    }
    let sol = match sizes {
        Some(sizes) => {
            if sizes.len() != y.k() || sizes.iter().sum::<usize>() != y.n() {
                return Err(Error::Config(format!(
                    "--sizes needs {} values summing to {}",
                    y.k(),
                    y.n()
                )));
            }
            solve_with_plan(&y, &m, &plan_quotas(sizes, &m, eps)?)?
        }
        None => solve_fair_assignment(&y, &m, eps)?,
    };
    let labels: Vec<usize> = sol.assignment.labels().iter().map(|l| l + 1).collect();
    let summary = json!({
        "objective": sol.objective,
        "labels": labels,
        "cluster_sizes": sol.plan.cluster_sizes,
    });
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_labels(&dir.join("labels.csv"), &sol.assignment)?;
        std::fs::write(dir.join("assign.json"), summary.to_string())?;
    }
    print_json(&summary)
}

enum Source<'a> {
    Labels(&'a Path),
    Model(&'a Path, &'a Path),
}

fn cmd_evaluate(
    source: Source,
    membership: &Path,
    truth: Option<&Path>,
    norm: NmiNorm,
    out: Option<&Path>,
) -> Result<()> {
    let assign = match source {
        Source::Labels(path) => {
            let (ids, k) = read_labels(path)?;
            HardAssignment::new(ids, k)?
        }
        Source::Model(model, features) => {
            let params = read_model(model)?;
            predict(&params, read_features(features)?.view())?.hard
        }
    };
    let m = read_membership(membership)?;
    let truth = truth.map(read_labels).transpose()?.map(|(ids, _)| ids);
    for (what, len) in [("membership", Some(m.n())), ("truth", truth.as_ref().map(Vec::len))] {
        if let Some(len) = len {
            if len != assign.len() {
                return Err(Error::Config(format!(
                    "{} labels but {len} {what} rows",
                    assign.len()
                )));
            }
        }
    }
    let report = MetricsReport::evaluate(&assign, &m, truth.as_deref(), norm)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let text = serde_json::to_string(&report).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(dir.join("metrics.json"), text)?;
    }
    print_json(&report)
}
