use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fairdc::dataio::{write_matrix, Dataset};
use fairdc::metrics::MetricsReport;
use fairdc::trainer::{predict, EpochRecord, Trainer};
use fairdc::{Error, HardAssignment, Result};
use serde::Serialize;

use crate::config::RunConfig;
use crate::files::{write_labels, write_model};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Timings {
    pub load_s: f64,
    pub pretrain_s: f64,
    pub refine_s: f64,
    pub total_s: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Artifacts {
    pub report: PathBuf,
    pub epochs: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_labels: Option<PathBuf>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub embeddings: Vec<PathBuf>,
}

/// Summary record of one training run.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config: RunConfig,
    pub epochs: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<MetricsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<MetricsReport>,
    pub timings: Timings,
    pub artifacts: Artifacts,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line<'a> {
    Epoch(&'a EpochRecord),
    Run(&'a RunReport),
}

/// Trains per `cfg`, writing every artifact under `out`. A failure still
/// leaves a report (flagged failed) with the epochs completed so far.
pub fn execute(cfg: &RunConfig, out: &Path) -> (RunReport, Option<Error>) {
    let start = Instant::now();
    let mut report = RunReport {
        status: Status::Ok,
        error: None,
        config: cfg.clone(),
        epochs: 0,
        converged: false,
        train: None,
        test: None,
        timings: Timings::default(),
        artifacts: Artifacts {
            report: out.join("report.jsonl"),
            epochs: out.join("epochs.csv"),
            ..Default::default()
        },
    };
    let mut trainer = None;
    let outcome = fs::create_dir_all(out)
        .map_err(Error::from)
        .and_then(|_| drive(cfg, out, &mut report, &mut trainer));
    let empty = Vec::new();
    let epochs = trainer.as_ref().map_or(&empty, |t: &Trainer| &t.trace().epochs);
    report.epochs = epochs.len();
    let error = outcome.err();
    if let Some(e) = &error {
        report.status = Status::Failed;
        report.error = Some(e.to_string());
    }
    report.timings.total_s = start.elapsed().as_secs_f64();
    let written = write_epochs_csv(&report.artifacts.epochs, epochs)
        .and_then(|_| write_report(&report.artifacts.report, epochs, &report));
    match (error, written) {
        (Some(e), _) => (report, Some(e)),
        (None, Err(e)) => {
            report.status = Status::Failed;
            report.error = Some(e.to_string());
            (report, Some(e))
        }
        (None, Ok(())) => (report, None),
    }
}

fn drive(
    cfg: &RunConfig,
    out: &Path,
    report: &mut RunReport,
    slot: &mut Option<Trainer>,
) -> Result<()> {
    let clock = Instant::now();
    let (train, test) = cfg.prepare()?;
    report.timings.load_s = clock.elapsed().as_secs_f64();
    let trainer = slot.insert(Trainer::new(cfg.train.clone(), train.d())?);
    let dump = |t: &Trainer, report: &mut RunReport, name: String| -> Result<()> {
        let dir = out.join("embeddings");
        fs::create_dir_all(&dir)?;
        let path = dir.join(name);
        write_matrix(&path, &t.embed(train.features.view())?)?;
        report.artifacts.embeddings.push(path);
        Ok(())
    };
    let every = cfg.embeddings_every;
    let due = |t: &Trainer| every.is_some_and(|n| t.trace().epochs.len() % n == 0);

    let clock = Instant::now();
    for _ in 0..cfg.train.pretrain_epochs {
        let rec = trainer.pretrain_epoch(&train)?;
        log::info!("pretrain epoch {}: loss {:.6}", rec.epoch, rec.loss.total);
        if due(trainer) {
            dump(trainer, report, format!("epoch_{:04}.fdcm", trainer.trace().epochs.len()))?;
        }
    }
    report.timings.pretrain_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    if train.membership.is_some() {
        for _ in 0..cfg.train.max_refine_epochs {
            let stop = trainer.refine_epoch(&train)?;
            let rec = trainer.trace().epochs.last().unwrap();
            log::info!(
                "refine epoch {}: loss {:.6}, balance {:.4}",
                rec.epoch,
                rec.loss.total,
                rec.metrics.as_ref().map_or(f64::NAN, |m| m.balance)
            );
            if due(trainer) {
                dump(trainer, report, format!("epoch_{:04}.fdcm", trainer.trace().epochs.len()))?;
            }
            if stop {
                report.converged = true;
                break;
            }
        }
    }
    report.timings.refine_s = clock.elapsed().as_secs_f64();

    if every.is_some() {
        dump(trainer, report, "final.fdcm".into())?;
    }
    let model = out.join("model.json");
    write_model(&model, trainer.params())?;
    report.artifacts.model = Some(model);

    let pred = trainer.predict(train.features.view())?;
    let labels = out.join("labels.csv");
    write_labels(&labels, &pred.hard)?;
    report.artifacts.labels = Some(labels);
    report.train = evaluate(&train, &pred.hard, cfg)?;

    if let Some(test) = test {
        let pred = predict(trainer.params(), test.features.view())?;
        let path = out.join("test_labels.csv");
        write_labels(&path, &pred.hard)?;
        report.artifacts.test_labels = Some(path);
        report.test = evaluate(&test, &pred.hard, cfg)?;
    }
    Ok(())
}

fn evaluate(data: &Dataset, hard: &HardAssignment, cfg: &RunConfig) -> Result<Option<MetricsReport>> {
    data.membership
        .as_ref()
        .map(|m| MetricsReport::evaluate(hard, m, data.labels.as_deref(), cfg.train.nmi_norm))
        .transpose()
}

fn write_epochs_csv(path: &Path, epochs: &[EpochRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(
        f,
        "phase,epoch,loss_total,loss_clustering,loss_fairness,loss_augmentation,fair_objective,balance,fairness,accuracy,nmi"
    )?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for r in epochs {
        let m = r.metrics.as_ref();
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{},{}",
            match r.phase {
                fairdc::trainer::Phase::Pretrain => "pretrain",
                fairdc::trainer::Phase::Refine => "refine",
            },
            r.epoch,
            r.loss.total,
            r.loss.clustering,
            r.loss.fairness,
            r.loss.augmentation,
            opt(r.fair_objective),
            opt(m.map(|m| m.balance)),
            opt(m.map(|m| m.fairness)),
            opt(m.and_then(|m| m.accuracy)),
            opt(m.and_then(|m| m.nmi)),
        )?;
    }
    f.flush()?;
    Ok(())
}

fn write_report(path: &Path, epochs: &[EpochRecord], report: &RunReport) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    let line = |v: &Line| serde_json::to_string(v).map_err(|e| Error::Parse(e.to_string()));
    for r in epochs {
        writeln!(f, "{}", line(&Line::Epoch(r))?)?;
    }
    writeln!(f, "{}", line(&Line::Run(report))?)?;
    f.flush()?;
    Ok(())
}
