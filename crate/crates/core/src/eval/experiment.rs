//! Repeated train/test experiments over models, losses and training sizes.
//!
//! Repeat `r` uses split seed `derive(master, Split, r)` and training seed
//! `derive(master, Repeat, r)`, shared by every model, loss and size. The
//! test set of a repeat is therefore the same for all training sizes, and
//! different models are compared on identical data.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;

use super::metrics::{per_param_smse, r2_score, smse};
use crate::baselines::{GbtConfig, GbtModel, LinearModel};
use crate::data::{self, fmt_f64, Dataset, Standardizer, TARGET_COLUMNS};
use crate::error::{Error, Result};
use crate::nn::{HyperParams, LossKind, Network, Preset, ProjectionMode};
use crate::seed::{self, Purpose};

/// Anything that maps raw circuit-parameter rows to geometry rows.
pub trait Regressor {
    fn predict(&self, x: &Array2<f64>) -> Result<Array2<f64>>;
}

impl Regressor for Network {
    fn predict(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Network::predict(self, x)
    }
}

/// A model to compare.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Linear,
    Gbt(GbtConfig),
    Network {
        preset: Preset,
        width: usize,
        projection: ProjectionMode,
    },
}

impl ModelSpec {
    pub fn network(preset: Preset, width: usize) -> Self {
        ModelSpec::Network {
            preset,
            width,
            projection: ProjectionMode::Learned,
        }
    }

    pub fn name(&self) -> String {
        match self {
            ModelSpec::Linear => "LR".into(),
            ModelSpec::Gbt(_) => "GB".into(),
            ModelSpec::Network { preset, .. } => preset.to_string(),
        }
    }

    /// Closed-form and tree baselines ignore the network training loss.
    pub fn uses_loss(&self) -> bool {
        matches!(self, ModelSpec::Network { .. })
    }

    /// Parses `LR`, `GB`, or a network preset name such as `FN7` or `N7`.
    pub fn parse(name: &str, width: usize, projection: ProjectionMode) -> Result<Self> {
        match name.trim().to_ascii_uppercase().as_str() {
            "LR" => Ok(ModelSpec::Linear),
            "GB" | "GBT" => Ok(ModelSpec::Gbt(GbtConfig::default())),
            other => Ok(ModelSpec::Network {
                preset: Preset::from_str(other)?,
                width,
                projection,
            }),
        }
    }

    /// Fits on `train`; baselines see the same standardized inputs as the
    /// networks.
    pub fn fit(&self, train: &Dataset, h: &HyperParams, loss: LossKind) -> Result<Fitted> {
        match self {
            ModelSpec::Linear => {
                let s = Standardizer::fit(&train.x)?;
                let m = LinearModel::fit(&s.apply(&train.x), &train.y)?;
                Ok(Fitted::Linear(s, m))
            }
            ModelSpec::Gbt(cfg) => {
                let s = Standardizer::fit(&train.x)?;
                let m = GbtModel::fit(&s.apply(&train.x), &train.y, cfg)?;
                Ok(Fitted::Gbt(s, m))
            }
            ModelSpec::Network {
                preset,
                width,
                projection,
            } => {
                let arch = preset
                    .build(data::INPUT_DIM, train.target_dim(), *width)?
                    .with_projection(*projection);
                let (net, _) = Network::fit(&arch, train, h, loss)?;
                Ok(Fitted::Network(net))
            }
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// A fitted model of any kind.
#[derive(Debug, Clone)]
pub enum Fitted {
    Linear(Standardizer, LinearModel),
    Gbt(Standardizer, GbtModel),
    Network(Network),
}

impl Regressor for Fitted {
    fn predict(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        match self {
            Fitted::Linear(s, m) => Ok(m.predict(&s.apply(x))),
            Fitted::Gbt(s, m) => Ok(m.predict(&s.apply(x))),
            Fitted::Network(n) => n.predict(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub models: Vec<ModelSpec>,
    pub losses: Vec<LossKind>,
    pub training_sizes: Vec<usize>,
    pub test_size: usize,
    pub repeats: usize,
    pub master_seed: u64,
    /// Network hyperparameters; the seed field is replaced per repeat.
    pub hyper: HyperParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            models: vec![],
            losses: vec![LossKind::Smse, LossKind::Sdmse],
            training_sizes: vec![600, 1200, 2400, 4800],
            test_size: 1200,
            repeats: 5,
            master_seed: 0,
            hyper: HyperParams::default(),
        }
    }
}

/// Aggregated test metrics of one (model, loss, training size) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub model: String,
    pub loss: LossKind,
    pub feed_length: bool,
    pub training_size: usize,
    pub repeats: usize,
    pub smse_mean: f64,
    pub smse_std: f64,
    pub r2_mean: f64,
    pub r2_std: f64,
    /// Mean over repeats of each target column's SMSE.
    pub per_param_smse: Vec<f64>,
    /// Summed fitting and evaluation time over repeats. Not written to CSV.
    pub wall_seconds: f64,
}

/// Test-set metrics of a single fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub smse: f64,
    pub r2: f64,
    pub per_param: Vec<f64>,
}

pub fn evaluate(model: &dyn Regressor, test: &Dataset) -> Result<Evaluation> {
    let y_hat = model.predict(&test.x)?;
    Ok(Evaluation {
        smse: smse(y_hat.view(), test.y.view())?,
        r2: r2_score(y_hat.view(), test.y.view())?,
        per_param: per_param_smse(y_hat.view(), test.y.view())?.to_vec(),
    })
}

pub fn split_seed(master: u64, repeat: usize) -> u64 {
    seed::derive(master, Purpose::Split, repeat as u64)
}

pub fn training_seed(master: u64, repeat: usize) -> u64 {
    seed::derive(master, Purpose::Repeat, repeat as u64)
}

struct Job {
    model: usize,
    loss: LossKind,
    size: usize,
    repeat: usize,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs every (model, loss, size, repeat) combination and aggregates over
/// repeats. Loss-independent baselines are fitted once per (size, repeat)
/// and reported under every loss.
pub fn run_comparison(ds: &Dataset, cfg: &ExperimentConfig) -> Result<Vec<ExperimentReport>> {
    if cfg.repeats == 0 {
        return Err(Error::HyperParams("repeats must be at least 1".into()));
    }
    if cfg.models.is_empty() || cfg.losses.is_empty() || cfg.training_sizes.is_empty() {
        return Err(Error::HyperParams("empty model, loss or size list".into()));
    }
    for &size in &cfg.training_sizes {
        if size + cfg.test_size > ds.len() {
            return Err(Error::SplitSize {
                test: cfg.test_size,
                train: size,
                available: ds.len(),
            });
        }
    }

    let mut jobs = Vec::new();
    for (mi, m) in cfg.models.iter().enumerate() {
        let losses: &[LossKind] = if m.uses_loss() { &cfg.losses } else { &cfg.losses[..1] };
        for &loss in losses {
            for &size in &cfg.training_sizes {
                for repeat in 0..cfg.repeats {
                    jobs.push(Job {
                        model: mi,
                        loss,
                        size,
                        repeat,
                    });
                }
            }
        }
    }

    let results: Vec<(Evaluation, f64)> = jobs
        .par_iter()
        .map(|job| {
            let spec = &cfg.models[job.model];
            let tag = || {
                format!(
                    "{} loss={} train={} repeat={}",
                    spec.name(),
                    job.loss,
                    job.size,
                    job.repeat
                )
            };
            let start = Instant::now();
            let (test, train) =
                data::split(ds, cfg.test_size, job.size, split_seed(cfg.master_seed, job.repeat))
                    .map_err(|e| e.tagged(tag()))?;
            let h = HyperParams {
                seed: training_seed(cfg.master_seed, job.repeat),
                ..cfg.hyper
            };
            let fitted = spec.fit(&train, &h, job.loss).map_err(|e| e.tagged(tag()))?;
            let ev = evaluate(&fitted, &test).map_err(|e| e.tagged(tag()))?;
            Ok((ev, start.elapsed().as_secs_f64()))
        })
        .collect::<Result<_>>()?;

    let mut reports = Vec::new();
    for (mi, spec) in cfg.models.iter().enumerate() {
        for &loss in &cfg.losses {
            for &size in &cfg.training_sizes {
                let fit_loss = if spec.uses_loss() { loss } else { cfg.losses[0] };
                let cell: Vec<&(Evaluation, f64)> = jobs
                    .iter()
                    .zip(&results)
                    .filter(|(j, _)| j.model == mi && j.loss == fit_loss && j.size == size)
                    .map(|(_, r)| r)
                    .collect();
                let smses: Vec<f64> = cell.iter().map(|(e, _)| e.smse).collect();
                let r2s: Vec<f64> = cell.iter().map(|(e, _)| e.r2).collect();
                let (smse_mean, smse_std) = mean_std(&smses);
                let (r2_mean, r2_std) = mean_std(&r2s);
                let d = ds.target_dim();
                let per_param = (0..d)
                    .map(|j| cell.iter().map(|(e, _)| e.per_param[j]).sum::<f64>() / cell.len() as f64)
                    .collect();
                reports.push(ExperimentReport {
                    model: spec.name(),
                    loss,
                    feed_length: ds.has_feed_length(),
                    training_size: size,
                    repeats: cfg.repeats,
                    smse_mean,
                    smse_std,
                    r2_mean,
                    r2_std,
                    per_param_smse: per_param,
                    wall_seconds: cell.iter().map(|(_, t)| t).sum(),
                });
            }
        }
    }
    Ok(reports)
}

const REPORT_HEADER: &str = "model,loss,targets,train_size,repeats,smse_mean,smse_std,r2_mean,r2_std";

/// Writes one CSV row per report. Timing is left out so that equal
/// configurations produce identical files.
pub fn write_reports_csv<W: Write>(mut out: W, reports: &[ExperimentReport]) -> std::io::Result<()> {
    write!(out, "{REPORT_HEADER}")?;
    for c in TARGET_COLUMNS {
        write!(out, ",smse_{c}")?;
    }
    writeln!(out)?;
    for r in reports {
        write!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.model,
            r.loss,
            if r.feed_length { "all" } else { "no_feed" },
            r.training_size,
            r.repeats,
            fmt_f64(r.smse_mean),
            fmt_f64(r.smse_std),
            fmt_f64(r.r2_mean),
            fmt_f64(r.r2_std)
        )?;
        for j in 0..TARGET_COLUMNS.len() {
            match r.per_param_smse.get(j) {
                Some(v) if r.feed_length || j < data::FEED_LENGTH => write!(out, ",{}", fmt_f64(*v))?,
                _ => write!(out, ",")?,
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Human-readable table of reports.
pub fn format_table(reports: &[ExperimentReport]) -> String {
    let mut s = format!(
        "{:<6} {:<6} {:<8} {:>6} {:>4} {:>11} {:>10} {:>8} {:>8} {:>9}\n",
        "model", "loss", "targets", "train", "reps", "SMSE", "±", "R²", "±", "seconds"
    );
    for r in reports {
        s.push_str(&format!(
            "{:<6} {:<6} {:<8} {:>6} {:>4} {:>11.6} {:>10.6} {:>8.4} {:>8.4} {:>9.1}\n",
            r.model,
            r.loss.to_string(),
            if r.feed_length { "all" } else { "no_feed" },
            r.training_size,
            r.repeats,
            r.smse_mean,
            r.smse_std,
            r.r2_mean,
            r.r2_std,
            r.wall_seconds
        ));
    }
    s
}
