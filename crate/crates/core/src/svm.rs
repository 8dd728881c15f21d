//! One-vs-rest linear SVMs trained by dual coordinate descent.
//!
//! Each binary problem is the L2-regularized hinge-loss SVM
//! `min 1/2 |w|^2 + C sum_i max(0, 1 - y_i (w . x_i + b))` with the bias
//! folded into `w` through a constant unit feature (so it is regularized
//! too). Features are standardized with training statistics first, and
//! when the source groups its features (scattering orders), each group is
//! then weighted so that it carries the same share of the total variance.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::ops::Range;

use crate::conv::Volume;
use crate::error::{FstError, Result};
use crate::exec::Execution;
use crate::hsi::{HsiCube, LabelMap};
use crate::scatter::FeatureCube;

pub const DEFAULT_C: f64 = 1000.0;
pub const DEFAULT_TOL: f64 = 1e-4;
pub const DEFAULT_MAX_ITER: usize = 1000;

/// Anything that yields a feature vector per pixel.
pub trait PixelFeatures {
    fn height(&self) -> usize;
    fn width(&self) -> usize;
    fn dim(&self) -> usize;
    fn write_pixel(&self, row: usize, col: usize, out: &mut Vec<f32>);

    /// Contiguous feature groups balanced against each other after
    /// standardization. One group means plain standardization.
    fn feature_groups(&self) -> Vec<Range<usize>> {
        vec![0..self.dim()]
    }
}

impl PixelFeatures for FeatureCube {
    fn height(&self) -> usize {
        self.height
    }
    fn width(&self) -> usize {
        self.width
    }
    fn dim(&self) -> usize {
        FeatureCube::dim(self)
    }
    fn write_pixel(&self, row: usize, col: usize, out: &mut Vec<f32>) {
        out.extend_from_slice(self.pixel(row, col));
    }
    fn feature_groups(&self) -> Vec<Range<usize>> {
        self.layout.order_ranges()
    }
}

/// The raw spectrum of each pixel.
impl PixelFeatures for HsiCube {
    fn height(&self) -> usize {
        HsiCube::height(self)
    }
    fn width(&self) -> usize {
        HsiCube::width(self)
    }
    fn dim(&self) -> usize {
        self.bands()
    }
    fn write_pixel(&self, row: usize, col: usize, out: &mut Vec<f32>) {
        out.extend((0..self.bands()).map(|b| self.get(row, col, b)));
    }
}

impl PixelFeatures for Volume {
    fn height(&self) -> usize {
        self.height
    }
    fn width(&self) -> usize {
        self.width
    }
    fn dim(&self) -> usize {
        self.bands
    }
    fn write_pixel(&self, row: usize, col: usize, out: &mut Vec<f32>) {
        out.extend_from_slice(self.pixel(row, col));
    }
}

/// Labeled samples, row-major `N x D`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub samples: Vec<f32>,
    pub targets: Vec<u16>,
    pub coords: Vec<(usize, usize)>,
    pub groups: Vec<Range<usize>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    /// Gathers the features and labels of `pixels`.
    pub fn gather(
        source: &impl PixelFeatures,
        labels: &LabelMap,
        pixels: &[(usize, usize)],
    ) -> Result<Self> {
        if (source.height(), source.width()) != (labels.height(), labels.width()) {
            return Err(FstError::Shape(format!(
                "features are {}x{}, labels are {}x{}",
                source.height(),
                source.width(),
                labels.height(),
                labels.width()
            )));
        }
        let dim = source.dim();
        let mut samples = Vec::with_capacity(pixels.len() * dim);
        let mut targets = Vec::with_capacity(pixels.len());
        for &(r, c) in pixels {
            if r >= source.height() || c >= source.width() {
                return Err(FstError::OutOfBounds {
                    row: r,
                    col: c,
                    height: source.height(),
                    width: source.width(),
                });
            }
            source.write_pixel(r, c, &mut samples);
            targets.push(labels.get(r, c));
        }
        Ok(Dataset {
            dim,
            samples,
            targets,
            coords: pixels.to_vec(),
            groups: source.feature_groups(),
        })
    }

    fn validate(&self) -> Result<Vec<u16>> {
        if self.samples.len() != self.targets.len() * self.dim {
            return Err(FstError::Shape("sample matrix does not match targets".into()));
        }
        if let Some(index) = self.samples.iter().position(|v| !v.is_finite()) {
            return Err(FstError::NonFinite { index });
        }
        let mut covered = 0;
        for g in &self.groups {
            if g.start != covered || g.end <= g.start {
                return Err(FstError::Shape("feature groups must tile the feature range".into()));
            }
            covered = g.end;
        }
        if covered != self.dim {
            return Err(FstError::Shape("feature groups must tile the feature range".into()));
        }
        if self.targets.contains(&0) {
            return Err(FstError::Shape("training targets include unlabeled pixels".into()));
        }
        let mut classes = self.targets.clone();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() < 2 {
            return Err(FstError::Shape(format!(
                "need at least 2 classes, got {}",
                classes.len()
            )));
        }
        Ok(classes)
    }
}

/// The raw-spectrum baseline dataset.
pub fn raw_features(cube: &HsiCube, labels: &LabelMap, pixels: &[(usize, usize)]) -> Result<Dataset> {
    Dataset::gather(cube, labels, pixels)
}

/// Per-feature mean and scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Fits mean and population standard deviation per column; zero-variance
/// columns get scale 1.
pub fn standardize_fit(samples: &[f32], dim: usize) -> Standardizer {
    let n = samples.len().checked_div(dim).unwrap_or(0);
    let mut mean = vec![0.0f64; dim];
    for row in samples.chunks_exact(dim.max(1)) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
    let mut var = vec![0.0f64; dim];
    for row in samples.chunks_exact(dim.max(1)) {
        for ((s, &v), m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v as f64 - m;
            *s += d * d;
        }
    }
    let scale = var
        .into_iter()
        .map(|s| {
            let sd = (s / n.max(1) as f64).sqrt();
            if sd > 0.0 && sd.is_finite() {
                sd
            } else {
                1.0
            }
        })
        .collect();
    Standardizer { mean, scale }
}

impl Standardizer {
    /// Rescales so that, on the fitted data, group `g` of `G` groups holds
    /// `D / G` of the total variance `D`. A single group is left unchanged.
    pub fn balance_groups(&mut self, groups: &[Range<usize>]) {
        let dim = self.scale.len() as f64;
        let count = groups.len() as f64;
        for g in groups {
            let factor = (count * g.len() as f64 / dim).sqrt();
            self.scale[g.clone()].iter_mut().for_each(|s| *s *= factor);
        }
    }

    pub fn apply_row(&self, row: &[f32], out: &mut [f64]) {
        for (((o, &v), m), s) in out.iter_mut().zip(row).zip(&self.mean).zip(&self.scale) {
            *o = (v as f64 - m) / s;
        }
    }
}

pub fn standardize_apply(samples: &[f32], st: &Standardizer) -> Vec<f64> {
    let dim = st.mean.len();
    let mut out = vec![0.0; samples.len()];
    for (row, dst) in samples.chunks_exact(dim.max(1)).zip(out.chunks_exact_mut(dim.max(1))) {
        st.apply_row(row, dst);
    }
    out
}

/// Result of one binary dual coordinate descent run.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySolution {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub alpha: Vec<f64>,
    pub epochs: usize,
    pub converged: bool,
}

/// Dual coordinate descent for one binary problem on a dense row-major
/// matrix `x` (`n x dim`) with labels `y` in `{-1, +1}`.
pub fn solve_binary(
    x: &[f64],
    dim: usize,
    y: &[f64],
    c: f64,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> BinarySolution {
    let n = y.len();
    let mut w = vec![0.0f64; dim];
    let mut bias = 0.0f64;
    let mut alpha = vec![0.0f64; n];
    let q_diag: Vec<f64> = (0..n)
        .map(|i| x[i * dim..(i + 1) * dim].iter().map(|v| v * v).sum::<f64>() + 1.0)
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut converged = false;
    let mut epochs = 0;
    while epochs < max_iter {
        epochs += 1;
        order.shuffle(&mut rng);
        let mut violation = 0.0f64;
        for &i in &order {
            let xi = &x[i * dim..(i + 1) * dim];
            let margin: f64 = xi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + bias;
            let g = y[i] * margin - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            violation = violation.max(pg.abs());
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / q_diag[i]).clamp(0.0, c);
                let step = (alpha[i] - old) * y[i];
                if step != 0.0 {
                    for (wj, xj) in w.iter_mut().zip(xi) {
                        *wj += step * xj;
                    }
                    bias += step;
                }
            }
        }
        if violation < tol {
            converged = true;
            break;
        }
    }
    BinarySolution {
        weights: w,
        bias,
        alpha,
        epochs,
        converged,
    }
}

/// Primal objective of a binary solution on `(x, y)`.
pub fn primal_objective(x: &[f64], dim: usize, y: &[f64], c: f64, w: &[f64], bias: f64) -> f64 {
    let reg = 0.5 * (w.iter().map(|v| v * v).sum::<f64>() + bias * bias);
    let loss: f64 = y
        .iter()
        .enumerate()
        .map(|(i, &yi)| {
            let m: f64 = x[i * dim..(i + 1) * dim].iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + bias;
            (1.0 - yi * m).max(0.0)
        })
        .sum();
    reg + c * loss
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: DEFAULT_C,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            seed: 0,
        }
    }
}

/// A trained one-vs-rest model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// Class id of each binary model, ascending.
    pub classes: Vec<u16>,
    /// Weights in standardized feature space, one row per class.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub standardizer: Standardizer,
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub converged: Vec<bool>,
    pub epochs: Vec<usize>,
}

pub fn svm_train(data: &Dataset, params: SvmParams) -> Result<SvmModel> {
    svm_train_with(data, params, Execution::default())
}

pub fn svm_train_with(data: &Dataset, params: SvmParams, exec: Execution) -> Result<SvmModel> {
    if params.c.is_nan() || params.c <= 0.0 {
        return Err(FstError::Config(format!("C must be positive, got {}", params.c)));
    }
    let classes = data.validate()?;
    let mut standardizer = standardize_fit(&data.samples, data.dim);
    standardizer.balance_groups(&data.groups);
    let x = standardize_apply(&data.samples, &standardizer);
    let solutions = exec.map(classes.clone(), |k| {
        let y: Vec<f64> = data
            .targets
            .iter()
            .map(|&t| if t == k { 1.0 } else { -1.0 })
            .collect();
        solve_binary(
            &x,
            data.dim,
            &y,
            params.c,
            params.tol,
            params.max_iter,
            params.seed.wrapping_add(k as u64),
        )
    });
    for (k, s) in classes.iter().zip(&solutions) {
        if !s.converged {
            log::warn!("class {k} did not converge in {} epochs", s.epochs);
        }
    }
    Ok(SvmModel {
        classes,
        converged: solutions.iter().map(|s| s.converged).collect(),
        epochs: solutions.iter().map(|s| s.epochs).collect(),
        biases: solutions.iter().map(|s| s.bias).collect(),
        weights: solutions.into_iter().map(|s| s.weights).collect(),
        standardizer,
        c: params.c,
        tol: params.tol,
        max_iter: params.max_iter,
        seed: params.seed,
    })
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.standardizer.mean.len()
    }

    fn predict_with(&self, row: &[f32], buf: &mut [f64]) -> u16 {
        self.standardizer.apply_row(row, buf);
        let mut best = (self.classes[0], f64::NEG_INFINITY);
        for ((&k, w), b) in self.classes.iter().zip(&self.weights).zip(&self.biases) {
            let score = w.iter().zip(buf.iter()).map(|(a, x)| a * x).sum::<f64>() + b;
            // classes ascend, so keeping the first maximum breaks ties low
            if score > best.1 {
                best = (k, score);
            }
        }
        best.0
    }

    /// Class of one feature vector.
    pub fn predict(&self, row: &[f32]) -> Result<u16> {
        self.check_width(row.len())?;
        let mut buf = vec![0.0; self.dim()];
        Ok(self.predict_with(row, &mut buf))
    }

    fn check_width(&self, width: usize) -> Result<()> {
        if width != self.dim() {
            return Err(FstError::Shape(format!(
                "sample width {width} does not match model width {}",
                self.dim()
            )));
        }
        Ok(())
    }

    /// Classes of a row-major sample matrix.
    pub fn predict_rows(&self, samples: &[f32], dim: usize) -> Result<Vec<u16>> {
        self.check_width(dim)?;
        let mut buf = vec![0.0; dim];
        Ok(samples
            .chunks_exact(dim.max(1))
            .map(|row| self.predict_with(row, &mut buf))
            .collect())
    }

    /// Predicts every pixel of a feature source into a label grid.
    pub fn predict_map(&self, source: &(impl PixelFeatures + Sync), exec: Execution) -> Result<Vec<u16>> {
        self.check_width(source.dim())?;
        let (h, w) = (source.height(), source.width());
        let rows = exec.map((0..h).collect(), |r| {
            let mut buf = vec![0.0; self.dim()];
            let mut px = Vec::with_capacity(self.dim());
            (0..w)
                .map(|c| {
                    px.clear();
                    source.write_pixel(r, c, &mut px);
                    self.predict_with(&px, &mut buf)
                })
                .collect::<Vec<u16>>()
        });
        Ok(rows.concat())
    }

    /// Predictions for every pixel as a label map over classes
    /// `1..=max(classes)`.
    pub fn classify(&self, source: &(impl PixelFeatures + Sync)) -> Result<LabelMap> {
        let ids = self.predict_map(source, Execution::default())?;
        let k = self.classes.iter().copied().max().unwrap_or(0);
        LabelMap::with_classes(source.height(), source.width(), ids, (1..=k).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn dataset(points: &[(f32, f32, u16)]) -> Dataset {
        Dataset {
            dim: 2,
            samples: points.iter().flat_map(|&(a, b, _)| [a, b]).collect(),
            targets: points.iter().map(|p| p.2).collect(),
            coords: (0..points.len()).map(|i| (0, i)).collect(),
            groups: vec![0..2],
        }
    }

    #[test]
    fn two_symmetric_points() {
        let data = dataset(&[(-1.0, 0.0, 1), (1.0, 0.0, 2)]);
        let model = svm_train(&data, SvmParams::default()).unwrap();
        assert_eq!(model.predict(&[-1.0, 0.0]).unwrap(), 1);
        assert_eq!(model.predict(&[1.0, 0.0]).unwrap(), 2);
        assert_eq!(model.predict(&[-0.1, 5.0]).unwrap(), 1);
        assert_eq!(model.predict(&[0.1, -5.0]).unwrap(), 2);
    }

    #[test]
    fn separable_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pts = Vec::new();
        for i in 0..100 {
            let class = if i % 2 == 0 { 1 } else { 2 };
            let cx = if class == 1 { -2.0 } else { 2.0 };
            pts.push((cx + rng.random_range(-0.9..0.9), rng.random_range(-3.0..3.0), class));
        }
        let data = dataset(&pts);
        let model = svm_train(&data, SvmParams::default()).unwrap();
        let pred = model.predict_rows(&data.samples, 2).unwrap();
        assert_eq!(pred, data.targets);
    }

    #[test]
    fn zero_model_ties_to_first_class() {
        let model = SvmModel {
            classes: vec![1, 2, 3],
            weights: vec![vec![0.0; 2]; 3],
            biases: vec![0.0; 3],
            standardizer: Standardizer {
                mean: vec![0.0; 2],
                scale: vec![1.0; 2],
            },
            c: 1.0,
            tol: 1e-4,
            max_iter: 1,
            seed: 0,
            converged: vec![true; 3],
            epochs: vec![0; 3],
        };
        assert_eq!(model.predict(&[0.0, 0.0]).unwrap(), 1);
        assert!(matches!(model.predict(&[0.0; 3]), Err(FstError::Shape(_))));
    }

    #[test]
    fn standardize_single_sample() {
        let st = standardize_fit(&[3.0, -1.0, 7.0], 3);
        assert_eq!(st.mean, vec![3.0, -1.0, 7.0]);
        assert_eq!(st.scale, vec![1.0; 3]);
        assert_eq!(standardize_apply(&[3.0, -1.0, 7.0], &st), vec![0.0; 3]);
    }

    #[test]
    fn standardize_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dim = 4;
        let raw: Vec<f32> = (0..200 * dim).map(|i| rng.random_range(-5.0..5.0) * (1 + i % dim) as f32 + 3.0).collect();
        let st = standardize_fit(&raw, dim);
        let z = standardize_apply(&raw, &st);
        for j in 0..dim {
            let col: Vec<f64> = z.iter().skip(j).step_by(dim).copied().collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-6);
        }
        // refitting standardized data is (nearly) the identity
        let zf: Vec<f32> = z.iter().map(|&v| v as f32).collect();
        let again = standardize_fit(&zf, dim);
        assert!(again.mean.iter().all(|m| m.abs() < 1e-6));
        assert!(again.scale.iter().all(|s| (s - 1.0).abs() < 1e-6));
    }

    #[test]
    fn balanced_groups_share_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dim = 6;
        let raw: Vec<f32> = (0..300 * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut st = standardize_fit(&raw, dim);
        let plain = st.clone();
        st.balance_groups(&[0..6]);
        assert_eq!(st, plain);
        st.balance_groups(&[0..1, 1..6]);
        let z = standardize_apply(&raw, &st);
        let var = |cols: Range<usize>| -> f64 {
            cols.map(|j| z.iter().skip(j).step_by(dim).map(|v| v * v).sum::<f64>() / 300.0).sum()
        };
        assert!((var(0..1) - 3.0).abs() < 1e-9);
        assert!((var(1..6) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn bad_groups_rejected() {
        let mut data = dataset(&[(0.0, 0.0, 1), (1.0, 1.0, 2)]);
        data.groups = vec![0..1];
        assert!(svm_train(&data, SvmParams::default()).is_err());
    }

    #[test]
    fn constant_feature_maps_to_zero() {
        let st = standardize_fit(&[1.0, 4.0, 2.0, 4.0], 2);
        assert_eq!(st.scale[1], 1.0);
        let z = standardize_apply(&[1.0, 4.0, 2.0, 4.0], &st);
        assert_eq!((z[1], z[3]), (0.0, 0.0));
    }

    #[test]
    fn rejects_bad_training_sets() {
        let one_class = dataset(&[(0.0, 0.0, 1), (1.0, 1.0, 1)]);
        assert!(svm_train(&one_class, SvmParams::default()).is_err());
        let data = dataset(&[(0.0, 0.0, 1), (1.0, 1.0, 2)]);
        assert!(svm_train(&data, SvmParams { c: 0.0, ..SvmParams::default() }).is_err());
        let mut nan = data.clone();
        nan.samples[0] = f32::NAN;
        assert!(svm_train(&nan, SvmParams::default()).is_err());
    }

    #[test]
    fn raw_features_of_ramp() {
        let cube = HsiCube::from_fn(2, 2, 5, |_, _, b| b as f32);
        let labels = LabelMap::from_raw(2, 2, vec![1, 2, 1, 2]).unwrap();
        let data = raw_features(&cube, &labels, &labels.labeled_pixels()).unwrap();
        assert_eq!(data.len(), 4);
        assert_eq!(data.row(0), &[0.0, 1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            raw_features(&cube, &labels, &[(2, 0)]),
            Err(FstError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn deterministic_training() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<(f32, f32, u16)> = (0..60)
            .map(|i| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), (i % 3 + 1) as u16))
            .collect();
        let data = dataset(&pts);
        let p = SvmParams { seed: 4, ..SvmParams::default() };
        let a = svm_train_with(&data, p, Execution::Sequential).unwrap();
        let b = svm_train_with(&data, p, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
