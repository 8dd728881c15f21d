use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use fst3d::features::{FeatureReader, FeatureWriter};
use fst3d::metrics::{evaluate, render_map, PALETTE};
use fst3d::pipeline::{draw_mask, gridsearch, Candidates, GridSettings};
use fst3d::sampling::{knn1_diagnostic, SampleSize, Strategy, TrainMask};
use fst3d::scatter::{scatter_tiles, Network, Transform};
use fst3d::svm::{svm_train, Dataset, PixelFeatures, SvmModel, SvmParams};
use fst3d::*;

use crate::manifest::{beside, RunManifest};
use crate::{
    Cli, Command, EvalArgs, ExtractArgs, GridArgs, KnnArgs, PredictArgs, SampleArgs, SizeArgs, SourceArgs,
    StrategyArg, SynthArgs, TrainArgs,
};

/// Bad flags or flag combinations the parser cannot catch.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn configure_threads(flag: Option<usize>) -> Result<()> {
    let threads = match flag {
        Some(n) => Some(n),
        None => match std::env::var("FST3D_THREADS") {
            Ok(v) => Some(v.trim().parse().map_err(|_| usage(format!("FST3D_THREADS={v:?} is not a count")))?),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(usage("thread count must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    configure_threads(cli.threads)?;
    let manifest = cli.manifest;
    match cli.command {
        Command::Synth(a) => synth(a, manifest),
        Command::Extract(a) => extract(a, manifest),
        Command::Sample(a) => sample(a, manifest),
        Command::Train(a) => train(a, manifest),
        Command::Predict(a) => predict(a, manifest),
        Command::Eval(a) => eval(a, manifest),
        Command::Gridsearch(a) => grid(a, manifest),
        Command::KnnCheck(a) => knn_check(a, manifest),
    }
}

fn strategy(s: StrategyArg) -> Strategy {
    match s {
        StrategyArg::Random => Strategy::Random,
        StrategyArg::Sss => Strategy::Sss,
    }
}

fn sample_size(s: &SizeArgs) -> Result<SampleSize> {
    match (s.per_class, s.fraction) {
        (Some(n), None) => Ok(SampleSize::PerClass(n)),
        (None, Some(f)) => Ok(SampleSize::Fraction(f)),
        _ => Err(usage("give exactly one of --per-class and --fraction")),
    }
}

fn size_json(s: &SampleSize) -> serde_json::Value {
    match s {
        SampleSize::PerClass(n) => json!({ "per_class": n }),
        SampleSize::Fraction(f) => json!({ "fraction": f }),
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_mask(path: &Path, labels: &LabelMap) -> Result<TrainMask> {
    let mask = TrainMask::load(path)?;
    if (mask.height, mask.width) != (labels.height(), labels.width()) {
        return Err(FstError::Shape(format!(
            "mask is {}x{}, labels are {}x{}",
            mask.height,
            mask.width,
            labels.height(),
            labels.width()
        ))
        .into());
    }
    Ok(mask)
}

fn synth(a: SynthArgs, manifest_path: Option<PathBuf>) -> Result<()> {
    let mut spec = match &a.spec {
        Some(path) => serde_json::from_str::<SynthSpec>(&read_to_string(path)?)
            .map_err(|e| FstError::Config(format!("{}: {e}", path.display())))?,
        None => SynthSpec {
            height: a.height,
            width: a.width,
            bands: a.bands,
            num_classes: a.classes,
            noise_sigma: a.noise_sigma.unwrap_or(0.0),
            layout: a.layout,
            seed: a.seed,
        },
    };
    if let Some(snr) = a.snr_db {
        spec.noise_sigma = spec.sigma_for_snr_db(snr);
    }
    let mut m = RunManifest::new("synth", serde_json::to_value(&spec)?, Some(spec.seed));
    if let Some(path) = &a.spec {
        m.input(path)?;
    }
    let (cube, labels) = m.phase("generate", || generate_synthetic(&spec))?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let (cube_path, labels_path, spec_path) = (a.out.join("cube.json"), a.out.join("labels.json"), a.out.join("spec.json"));
    save_cube(&cube, &cube_path)?;
    save_labels(&labels, &labels_path)?;
    write_json(&spec_path, &spec)?;
    for p in [&cube_path, &labels_path, &spec_path] {
        m.output(p);
    }
    println!(
        "synthetic scene {}x{}x{}, {} classes, noise sigma {:.6} -> {}",
        spec.height,
        spec.width,
        spec.bands,
        spec.num_classes,
        spec.noise_sigma,
        a.out.display()
    );
    m.write(&manifest_path.unwrap_or_else(|| a.out.join("manifest.json")))
}

fn extract(a: ExtractArgs, manifest_path: Option<PathBuf>) -> Result<()> {
    let cfg = ScatterConfig::from_json(&read_to_string(&a.config)?)?;
    let transform = if a.gabor_only { Transform::Gabor } else { Transform::Scattering };
    let mut m = RunManifest::new(
        "extract",
        json!({
            "filterbank": serde_json::from_str::<serde_json::Value>(&cfg.to_json())?,
            "cfg_hash": cfg.hash(),
            "gabor_only": a.gabor_only,
            "patch": a.patch,
        }),
        None,
    );
    m.input(&a.cube)?;
    m.input(&a.config)?;
    let cube = m.phase("load", || load_cube(&a.cube))?;
    let net = Network::new(&cfg)?;
    net.check_bands(cube.bands())?;
    let layout = match transform {
        Transform::Scattering => net.layout(cube.bands()),
        Transform::Gabor => net.gabor_layout(cube.bands()),
    };
    log::info!(
        "{}x{}x{} cube -> {} features per pixel, patch {}",
        cube.height(),
        cube.width(),
        cube.bands(),
        layout.dim(),
        a.patch
    );
    let writer = FeatureWriter::create(&a.out, cube.height(), cube.width(), &layout, &cfg.hash())?;
    let start = std::time::Instant::now();
    m.phase("extract", || {
        scatter_tiles(&cube, &cfg, transform, a.patch, Execution::default(), |tile, feats| {
            writer.write_tile(tile, &feats)
        })
    })?;
    let seconds = start.elapsed().as_secs_f64();
    writer.finish()?;
    let pixels = (cube.height() * cube.width()) as f64;
    let rate = pixels / seconds.max(f64::MIN_POSITIVE);
    m.pixels_per_second = Some(rate);
    m.result = Some(json!({ "dim": layout.dim(), "height": cube.height(), "width": cube.width() }));
    m.output(&a.out);
    println!("{} features per pixel, {:.0} pixels/s -> {}", layout.dim(), rate, a.out.display());
    m.write(&manifest_path.unwrap_or_else(|| beside(&a.out)))
}

fn sample(a: SampleArgs, manifest_path: Option<PathBuf>) -> Result<()> {
    let size = sample_size(&a.size)?;
    let strat = strategy(a.strategy);
    let mut m = RunManifest::new(
        "sample",
        json!({ "strategy": strat, "size": size_json(&size) }),
        Some(a.seed),
    );
    m.input(&a.labels)?;
    let labels = load_labels(&a.labels)?;
    let mask = match (strat, size) {
        (Strategy::Sss, SampleSize::Fraction(_)) => {
            return Err(usage("--strategy sss takes --per-class"));
        }
        _ => m.phase("sample", || draw_mask(&labels, strat, size, a.seed))?,
    };
    mask.save(&a.out)?;
    m.output(&a.out);
    m.result = Some(json!({ "per_class": mask.per_class, "pixels": mask.len() }));
    println!("{} training pixels {:?} -> {}", mask.len(), mask.per_class, a.out.display());
    m.write(&manifest_path.unwrap_or_else(|| beside(&a.out)))
}

/// A trained model and where its features came from.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    /// "features" or "raw"
    source: String,
    cfg_hash: Option<String>,
    dim: usize,
    /// Original class ids of the training labels, index `k - 1`.
    original_ids: Vec<u16>,
    model: SvmModel,
}

enum Source {
    Features(FeatureReader),
    Raw(HsiCube),
}

impl Source {
    fn open(args: &SourceArgs, m: &mut RunManifest) -> Result<Self> {
        match (&args.features, &args.cube_raw) {
            (Some(path), None) => {
                m.input(path)?;
                Ok(Source::Features(FeatureReader::open(path)?))
            }
            (None, Some(path)) => {
                m.input(path)?;
                Ok(Source::Raw(load_cube(path)?))
            }
            _ => Err(usage("give exactly one of --features and --cube-raw")),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Source::Features(_) => "features",
            Source::Raw(_) => "raw",
        }
    }

    fn cfg_hash(&self) -> Option<String> {
        match self {
            Source::Features(r) => Some(r.header.cfg_hash.clone()),
            Source::Raw(_) => None,
        }
    }

    fn dim(&self) -> usize {
        match self {
            Source::Features(r) => r.dim(),
            Source::Raw(c) => c.bands(),
        }
    }

    fn gather(&self, labels: &LabelMap, pixels: &[(usize, usize)]) -> Result<Dataset> {
        Ok(match self {
            Source::Features(r) => Dataset::gather(r, labels, pixels)?,
            Source::Raw(c) => Dataset::gather(c, labels, pixels)?,
        })
    }

    fn classify(&self, model: &SvmModel) -> Result<LabelMap> {
        Ok(match self {
            Source::Features(r) => model.classify(r)?,
            Source::Raw(c) => model.classify(c)?,
        })
    }
}

fn train(a: TrainArgs, manifest_path: Option<PathBuf>) -> Result<()> {
    let params = SvmParams {
        c: a.c,
        tol: a.tol,
        max_iter: a.max_iter,
        seed: a.seed,
    };
    let mut m = RunManifest::new(
        "train",
        json!({ "C": a.c, "tol": a.tol, "max_iter": a.max_iter }),
        Some(a.seed),
    );
    let source = Source::open(&a.source, &mut m)?;
    m.input(&a.labels)?;
    m.input(&a.mask)?;
    let labels = load_labels(&a.labels)?;
    let mask = load_mask(&a.mask, &labels)?;
    let data = m.phase("gather", || source.gather(&labels, &mask.pixels))?;
    let model = m.phase("train", || svm_train(&data, params))?;
    let unconverged = model.converged.iter().filter(|c| !**c).count();
    let file = ModelFile {
        source: source.kind().to_string(),
        cfg_hash: source.cfg_hash(),
        dim: source.dim(),
        original_ids: labels.original_ids().to_vec(),
        model,
    };
    write_json(&a.out, &file)?;
    m.output(&a.out);
    m.result = Some(json!({ "samples": data.len(), "dim": data.dim, "unconverged_classes": unconverged }));
    println!(
        "trained {} classes on {} samples of dimension {} ({} unconverged) -> {}",
        file.model.classes.len(),
        data.len(),
        data.dim,
        unconverged,
        a.out.display()
    );
    m.write(&manifest_path.unwrap_or_else(|| beside(&a.out)))
}

fn predict(a: PredictArgs, manifest_path: Option<PathBuf>) -> Result<()> {
    let mut m = RunManifest::new("predict", json!({}), None);
    m.input(&a.model)?;
    let file: ModelFile = serde_json::from_str(&read_to_string(&a.model)?)
        .map_err(|e| FstError::Header { path: a.model.clone(), message: e.to_string() })?;
    let source = Source::open(&a.source, &mut m)?;
    if source.kind() != file.source {
        bail!(FstError::Shape(format!(
            "model was trained on {} input, got {}",
            file.source,
            source.kind()
        )));
    }
    if source.cfg_hash() != file.cfg_hash {
        bail!(FstError::Shape("feature file was extracted with a different filter bank config".into()));
    }
    let pred = m.phase("predict", || source.classify(&file.model))?;
    let pred = if file.original_ids.len() >= pred.num_classes() {
        LabelMap::with_classes(pred.height(), pred.width(), pred.labels().to_vec(), file.original_ids.clone())?
    } else {
        pred
    };
    save_labels(&pred, &a.out)?;
    m.output(&a.out);
    let pixels = (pred.height() * pred.width()) as f64;
    if let Some(t) = m.timings.last() {
        m.pixels_per_second = Some(pixels / t.seconds.max(f64::MIN_POSITIVE));
    }
    println!("predicted {}x{} map -> {}", pred.height(), pred.width(), a.out.display());
    m.write(&manifest_path.unwrap_or_else(|| beside(&a.out)))
}

fn eval(a: EvalArgs, manifest_path: Option<PathBuf>) -> Result<()> {
    let mut m = RunManifest::new("eval", json!({}), None);
    m.input(&a.pred)?;
    m.input(&a.labels)?;
    m.input(&a.mask)?;
    let pred = load_labels(&a.pred)?;
    let truth = load_labels(&a.labels)?;
    let mask = load_mask(&a.mask, &truth)?;
    let report = m.phase("evaluate", || evaluate(&truth, &pred, &mask))?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let (report_path, csv_path, png_path) = (a.out.join("report.json"), a.out.join("confusion.csv"), a.out.join("map.png"));
    report.save(&report_path)?;
    std::fs::write(&csv_path, report.confusion_csv()).with_context(|| format!("writing {}", csv_path.display()))?;
    let png = render_map(&pred, &PALETTE)?;
    std::fs::write(&png_path, png).with_context(|| format!("writing {}", png_path.display()))?;
    for p in [&report_path, &csv_path, &png_path] {
        m.output(p);
    }
    m.result = Some(json!({
        "overall_accuracy": report.overall_accuracy,
        "average_accuracy": report.average_accuracy,
        "kappa": report.kappa,
    }));
    println!(
        "OA {:.4}  AA {:.4}  kappa {:.4}",
        report.overall_accuracy, report.average_accuracy, report.kappa
    );
    m.write(&manifest_path.unwrap_or_else(|| a.out.join("manifest.json")))
}

fn grid(a: GridArgs, manifest_path: Option<PathBuf>) -> Result<()> {
    let size = sample_size(&a.size)?;
    let settings = GridSettings {
        trials: a.trials,
        strategy: strategy(a.strategy),
        size,
        seed: a.seed,
        svm: SvmParams { c: a.c, ..SvmParams::default() },
    };
    let candidates = Candidates::load(&a.candidates)?;
    let configs = candidates.configs()?;
    let mut m = RunManifest::new(
        "gridsearch",
        json!({
            "candidates": candidates,
            "trials": a.trials,
            "strategy": settings.strategy,
            "size": size_json(&size),
            "C": a.c,
        }),
        Some(a.seed),
    );
    m.input(&a.cube)?;
    m.input(&a.labels)?;
    m.input(&a.candidates)?;
    let cube = load_cube(&a.cube)?;
    let labels = load_labels(&a.labels)?;
    let result = m.phase("search", || gridsearch(&cube, &labels, &configs, settings))?;
    std::fs::write(&a.out, result.to_csv()?).with_context(|| format!("writing {}", a.out.display()))?;
    m.output(&a.out);
    match result.best() {
        Some(best) => {
            let [l0, l1, l2] = best.cfg.layers;
            println!(
                "best M={:?} M'={:?} M''={:?}: mean OA {:.4} +/- {:.4} over {} trials",
                l0.support, l1.support, l2.support, best.mean_oa, best.std_oa, a.trials
            );
            m.result = Some(json!({ "best": best.cfg.to_json(), "mean_oa": best.mean_oa, "std_oa": best.std_oa }));
        }
        None => println!("no grid point completed"),
    }
    m.write(&manifest_path.unwrap_or_else(|| beside(&a.out)))
}

fn knn_check(a: KnnArgs, manifest_path: Option<PathBuf>) -> Result<()> {
    let mut m = RunManifest::new("knn-check", json!({}), None);
    m.input(&a.labels)?;
    m.input(&a.mask)?;
    let labels = load_labels(&a.labels)?;
    let mask = load_mask(&a.mask, &labels)?;
    let fraction = m.phase("knn", || knn1_diagnostic(&labels, &mask))?;
    m.result = Some(json!({ "fraction": fraction }));
    println!("{fraction:.6}");
    let default = {
        let mut name = a.mask.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
        name.push(".knn.manifest.json");
        a.mask.with_file_name(name)
    };
    m.write(&manifest_path.unwrap_or(default))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        let per = SizeArgs { per_class: Some(5), fraction: None };
        assert!(matches!(sample_size(&per).unwrap(), SampleSize::PerClass(5)));
        let both = SizeArgs { per_class: Some(5), fraction: Some(0.1) };
        assert!(sample_size(&both).unwrap_err().downcast_ref::<UsageError>().is_some());
    }

    #[test]
    fn exit_code_by_error_kind() {
        assert_eq!(crate::exit_code(&usage("x")), 1);
        assert_eq!(crate::exit_code(&FstError::EmptyTestSet.into()), 2);
        assert_eq!(crate::exit_code(&FstError::Numeric("nan".into()).into()), 3);
        let wrapped = anyhow::Error::from(FstError::Numeric("nan".into())).context("training");
        assert_eq!(crate::exit_code(&wrapped), 3);
    }
}
