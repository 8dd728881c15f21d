//! Sampling, training and scoring glued together, and the hyperparameter
//! grid search built on top.

use std::fmt::Write as _;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FstError, Result};
use crate::filterbank::{LayerSpec, ScatterConfig};
use crate::hsi::{read_header, HsiCube, LabelMap};
use crate::metrics::{evaluate, EvalReport};
use crate::sampling::{sample_random, sample_sss, SampleSize, Strategy, TrainMask};
use crate::scatter::{receptive_field, scatter};
use crate::svm::{svm_train, Dataset, PixelFeatures, SvmModel, SvmParams};

/// Draws a training mask with either strategy. SSS needs a per-class count.
pub fn draw_mask(labels: &LabelMap, strategy: Strategy, size: SampleSize, seed: u64) -> Result<TrainMask> {
    match (strategy, size) {
        (Strategy::Random, size) => sample_random(labels, size, seed),
        (Strategy::Sss, SampleSize::PerClass(n)) => sample_sss(labels, n, seed),
        (Strategy::Sss, SampleSize::Fraction(_)) => Err(FstError::Sampling(
            "site-specific sampling takes a per-class count".into(),
        )),
    }
}

/// Outcome of training on a mask and scoring the rest.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub model: SvmModel,
    pub prediction: LabelMap,
    pub report: EvalReport,
}

/// Trains on the masked pixels of `features`, predicts every pixel and
/// scores the labeled pixels outside the mask.
pub fn train_and_evaluate(
    features: &(impl PixelFeatures + Sync),
    labels: &LabelMap,
    mask: &TrainMask,
    params: SvmParams,
) -> Result<Outcome> {
    let train = Dataset::gather(features, labels, &mask.pixels)?;
    let model = svm_train(&train, params)?;
    let prediction = model.classify(features)?;
    let report = evaluate(labels, &prediction, mask)?;
    Ok(Outcome {
        model,
        prediction,
        report,
    })
}

/// Seeds for `trials` independent draws, derived from a master seed.
pub fn trial_seeds(master: u64, trials: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..trials).map(|_| rng.next_u64()).collect()
}

/// Candidate configurations for a grid search, as read from JSON.
///
/// Either `{"supports": [[M1,M2,M3], ...], "product": false}`, where each
/// support is used for all three layers (or every combination of three
/// supports when `product` is true), or `{"configs": [<config>, ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Candidates {
    Supports {
        supports: Vec<[usize; 3]>,
        #[serde(default)]
        product: bool,
    },
    Configs {
        configs: Vec<serde_json::Value>,
    },
}

impl Candidates {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_header(path.as_ref())
    }

    pub fn configs(&self) -> Result<Vec<ScatterConfig>> {
        match self {
            Candidates::Supports { supports, product } => {
                if *product {
                    let mut out = Vec::new();
                    for &a in supports {
                        for &b in supports {
                            for &c in supports {
                                out.push(ScatterConfig::from_supports(a, b, c)?);
                            }
                        }
                    }
                    Ok(out)
                } else {
                    supports.iter().map(|&m| ScatterConfig::uniform(m)).collect()
                }
            }
            Candidates::Configs { configs } => configs
                .iter()
                .map(|v| ScatterConfig::from_json(&v.to_string()))
                .collect(),
        }
    }
}

/// Settings shared by every grid point.
#[derive(Debug, Clone, Copy)]
pub struct GridSettings {
    pub trials: usize,
    pub strategy: Strategy,
    pub size: SampleSize,
    pub seed: u64,
    pub svm: SvmParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub cfg: ScatterConfig,
    pub spatial_rf: usize,
    pub spectral_rf: usize,
    pub trial_oa: Vec<f64>,
    pub mean_oa: f64,
    pub std_oa: f64,
    /// Error message if the point's pipeline failed.
    pub failure: Option<String>,
}

/// Grid points sorted by mean OA, best first; failed points last.
#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub points: Vec<GridPoint>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

fn run_point(
    cube: &HsiCube,
    labels: &LabelMap,
    cfg: &ScatterConfig,
    seeds: &[u64],
    settings: &GridSettings,
) -> Result<Vec<f64>> {
    let features = scatter(cube, cfg)?;
    seeds
        .iter()
        .map(|&seed| {
            let mask = draw_mask(labels, settings.strategy, settings.size, seed)?;
            let svm = SvmParams { seed, ..settings.svm };
            Ok(train_and_evaluate(&features, labels, &mask, svm)?.report.overall_accuracy)
        })
        .collect()
}

/// Runs extract, train and evaluate for every candidate and trial. Every
/// candidate sees the same sequence of training masks.
pub fn gridsearch(
    cube: &HsiCube,
    labels: &LabelMap,
    candidates: &[ScatterConfig],
    settings: GridSettings,
) -> Result<GridResult> {
    if settings.trials == 0 {
        return Err(FstError::Config("grid search needs at least one trial".into()));
    }
    let seeds = trial_seeds(settings.seed, settings.trials);
    // points run one after another: each extraction is parallel inside and
    // feature cubes can be large
    let mut points: Vec<GridPoint> = candidates
        .iter()
        .map(|cfg| {
            let (spatial_rf, spectral_rf) = receptive_field(cfg);
            let mut point = GridPoint {
                cfg: cfg.clone(),
                spatial_rf,
                spectral_rf,
                trial_oa: Vec::new(),
                mean_oa: f64::NAN,
                std_oa: f64::NAN,
                failure: None,
            };
            match run_point(cube, labels, cfg, &seeds, &settings) {
                Ok(oa) => {
                    (point.mean_oa, point.std_oa) = mean_std(&oa);
                    point.trial_oa = oa;
                }
                Err(e) => {
                    log::warn!("grid point {} failed: {e}", cfg.to_json());
                    point.failure = Some(e.to_string());
                }
            }
            point
        })
        .collect();
    points.sort_by(|a, b| match (&a.failure, &b.failure) {
        (None, None) => b.mean_oa.total_cmp(&a.mean_oa),
        (None, Some(_)) => std::cmp::Ordering::Less,
        (Some(_), None) => std::cmp::Ordering::Greater,
        (Some(_), Some(_)) => std::cmp::Ordering::Equal,
    });
    Ok(GridResult { points })
}

impl GridResult {
    /// The best successful point.
    pub fn best(&self) -> Option<&GridPoint> {
        self.points.first().filter(|p| p.failure.is_none())
    }

    /// One row per trial (one row for a failed point).
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let to_csv_err = |e: csv::Error| FstError::Numeric(format!("csv: {e}"));
        w.write_record([
            "M1", "M2", "M3", "Mp1", "Mp2", "Mp3", "Mpp1", "Mpp2", "Mpp3", "P", "Pp", "Ppp",
            "spatial_rf", "spectral_rf", "trial", "oa", "mean_oa", "std_oa", "best", "status",
        ])
        .map_err(to_csv_err)?;
        for (i, p) in self.points.iter().enumerate() {
            let mut fixed: Vec<String> = Vec::new();
            for LayerSpec { support, .. } in p.cfg.layers {
                fixed.extend(support.iter().map(|v| v.to_string()));
            }
            fixed.extend(p.cfg.layers.iter().map(|l| l.stride.to_string()));
            fixed.push(p.spatial_rf.to_string());
            fixed.push(p.spectral_rf.to_string());
            let best = if i == 0 && p.failure.is_none() { "1" } else { "0" };
            match &p.failure {
                Some(msg) => {
                    let mut row = fixed.clone();
                    row.extend(["".into(), "".into(), "".into(), "".into(), best.into(), format!("failed: {msg}")]);
                    w.write_record(&row).map_err(to_csv_err)?;
                }
                None => {
                    for (t, oa) in p.trial_oa.iter().enumerate() {
                        let mut row = fixed.clone();
                        let mut num = String::new();
                        write!(num, "{oa:.6}").ok();
                        row.extend([
                            t.to_string(),
                            num,
                            format!("{:.6}", p.mean_oa),
                            format!("{:.6}", p.std_oa),
                            best.into(),
                            "ok".into(),
                        ]);
                        w.write_record(&row).map_err(to_csv_err)?;
                    }
                }
            }
        }
        let bytes = w.into_inner().map_err(|e| FstError::Numeric(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
