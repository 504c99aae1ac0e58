use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use clap::{Args, ValueEnum};
use fairdc::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Overrides, RunConfig};
use crate::run::{execute, Status};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    /// Weight of the fairness loss
    Beta,
    /// Relaxation of the fairness quotas
    Epsilon,
}

#[derive(Args, Clone, Debug)]
pub struct SweepArgs {
    /// Swept parameter
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// Comma-separated grid of values
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    pub values: Vec<f64>,
    /// Balance a run must reach for its beta to be recommended
    #[arg(long, default_value_t = 0.8)]
    pub threshold: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub accuracy: Option<f64>,
    pub nmi: Option<f64>,
    pub balance: Option<f64>,
    pub fairness: Option<f64>,
    pub run_dir: String,
}

/// Smallest beta whose run succeeded with balance at least `threshold`.
pub fn recommend(rows: &[SweepRow], threshold: f64) -> Option<f64> {
    rows.iter()
        .filter(|r| r.param == SweepParam::Beta && r.status == Status::Ok)
        .filter(|r| r.balance.is_some_and(|b| b >= threshold))
        .map(|r| r.value)
        .min_by(f64::total_cmp)
}

fn configure(base: &RunConfig, param: SweepParam, value: f64) -> RunConfig {
    let mut cfg = base.clone();
    match param {
        SweepParam::Beta => cfg.train.weights.beta = value,
        SweepParam::Epsilon => cfg.train.fairness_relax = Some(value),
    }
    cfg
}

pub fn run_sweep(
    base: &RunConfig,
    args: &SweepArgs,
    out: &Path,
    threads: Option<usize>,
) -> Result<Vec<SweepRow>> {
    if args.values.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let mut problems = Vec::new();
    for &v in &args.values {
        if let Err(e) = configure(base, args.param, v).validate() {
            problems.push(format!("{v}: {e}"));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let name = match args.param {
        SweepParam::Beta => "beta",
        SweepParam::Epsilon => "epsilon",
    };
    let rows = pool.install(|| {
        args.values
            .par_iter()
            .map(|&value| {
                let dir = out.join(format!("{name}_{value}"));
                let (report, error) = execute(&configure(base, args.param, value), &dir);
                if let Some(e) = &error {
                    log::warn!("{name} = {value} failed: {e}");
                }
                let m = report.train.as_ref();
                SweepRow {
                    param: args.param,
                    value,
                    status: report.status,
                    error: report.error.clone(),
                    accuracy: m.and_then(|m| m.accuracy),
                    nmi: m.and_then(|m| m.nmi),
                    balance: m.map(|m| m.balance),
                    fairness: m.map(|m| m.fairness),
                    run_dir: dir.display().to_string(),
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(rows)
}

pub fn write_sweep(out: &Path, rows: &[SweepRow], recommended: Option<f64>) -> Result<()> {
    fs::create_dir_all(out)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    let mut csv = String::from("param,value,status,accuracy,nmi,balance,fairness\n");
    let mut jsonl = String::new();
    for r in rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            serde_json::to_value(r.param).unwrap().as_str().unwrap(),
            r.value,
            serde_json::to_value(r.status).unwrap().as_str().unwrap(),
            opt(r.accuracy),
            opt(r.nmi),
            opt(r.balance),
            opt(r.fairness)
        );
        jsonl.push_str(&json_line(r)?);
    }
    jsonl.push_str(&json_line(&serde_json::json!({ "kind": "recommendation", "beta": recommended }))?);
    fs::write(out.join("sweep.csv"), csv)?;
    fs::write(out.join("sweep.jsonl"), jsonl)?;
    Ok(())
}

fn json_line<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v)
        .map(|s| s + "\n")
        .map_err(|e| Error::Parse(e.to_string()))
}

pub fn cmd_sweep(overrides: &Overrides, args: &SweepArgs, out: &Path, threads: Option<usize>) -> Result<()> {
    let base = overrides.resolve()?;
    let rows = run_sweep(&base, args, out, threads)?;
    let recommended = match args.param {
        SweepParam::Beta => recommend(&rows, args.threshold),
        SweepParam::Epsilon => None,
    };
    write_sweep(out, &rows, recommended)?;
    println!("{:>10} {:>8} {:>9} {:>9} {:>9}", "value", "status", "accuracy", "nmi", "balance");
    let cell = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    for r in &rows {
        println!(
            "{:>10} {:>8} {:>9} {:>9} {:>9}",
            r.value,
            if r.status == Status::Ok { "ok" } else { "failed" },
            cell(r.accuracy),
            cell(r.nmi),
            cell(r.balance)
        );
    }
    if args.param == SweepParam::Beta {
        match recommended {
            Some(b) => println!("recommended beta: {b} (smallest with balance >= {})", args.threshold),
            None => println!("no beta reached balance {}", args.threshold),
        }
    }
    match rows.iter().find(|r| r.status == Status::Ok) {
        Some(_) => Ok(()),
        None => Err(Error::Domain("every sweep run failed".into())),
    }
}
