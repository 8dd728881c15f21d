//! Deterministic synthetic scenes for desk-scale experiments.
//!
//! Randomness comes from `ChaCha8Rng` seeded with `seed_from_u64`; Gaussian
//! noise is drawn with `rand_distr::Normal` in band-sequential voxel order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{FstError, Result};
use crate::hsi::{HsiCube, LabelMap};

/// Amplitude of each sinusoid in a class signature.
const SINUSOID_AMPLITUDE: f64 = 0.25;
/// Baseline reflectance the sinusoids ride on.
const BASELINE: f64 = 1.0;

/// Parameters of a synthetic block scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub num_classes: usize,
    pub noise_sigma: f64,
    /// The scene is a `layout x layout` grid of rectangular blocks.
    pub layout: usize,
    pub seed: u64,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(FstError::Config("synthetic scenes need at least 2 classes".into()));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(FstError::Config(format!(
                "noise_sigma must be finite and >= 0, got {}",
                self.noise_sigma
            )));
        }
        if self.layout == 0 || self.layout > self.height || self.layout > self.width {
            return Err(FstError::Config(format!(
                "layout {} does not fit a {}x{} scene",
                self.layout, self.height, self.width
            )));
        }
        if self.num_classes > self.layout * self.layout {
            return Err(FstError::Config(format!(
                "{} classes do not fit in {} blocks",
                self.num_classes,
                self.layout * self.layout
            )));
        }
        if self.num_classes > u16::MAX as usize {
            return Err(FstError::LabelOverflow(self.num_classes as u64));
        }
        if self.bands == 0 {
            return Err(FstError::Config("bands must be positive".into()));
        }
        Ok(())
    }

    /// Class of the block containing `(row, col)`, in `1..=K`.
    pub fn class_at(&self, row: usize, col: usize) -> u16 {
        let bi = row * self.layout / self.height;
        let bj = col * self.layout / self.width;
        ((bi * self.layout + bj) % self.num_classes + 1) as u16
    }

    /// Noise-free spectral signature of every class, index `k - 1`.
    pub fn signatures(&self) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        signatures_from(&mut rng, self.num_classes, self.bands)
    }

    /// Noise level giving the requested mean per-band signal-to-noise ratio,
    /// with signal power measured as the mean square of the clean scene.
    pub fn sigma_for_snr_db(&self, snr_db: f64) -> f64 {
        let sigs = self.signatures();
        let mut power = 0.0;
        for r in 0..self.height {
            for c in 0..self.width {
                let s = &sigs[self.class_at(r, c) as usize - 1];
                power += s.iter().map(|v| v * v).sum::<f64>();
            }
        }
        power /= (self.height * self.width * self.bands) as f64;
        (power / 10f64.powf(snr_db / 10.0)).sqrt()
    }
}

fn signatures_from(rng: &mut ChaCha8Rng, classes: usize, bands: usize) -> Vec<Vec<f64>> {
    (0..classes)
        .map(|_| {
            let terms: Vec<(f64, f64)> = (0..3)
                .map(|_| {
                    // cycles across the band range, and phase
                    let freq = rng.random_range(0.5..4.0);
                    let phase = rng.random_range(0.0..std::f64::consts::TAU);
                    (freq, phase)
                })
                .collect();
            (0..bands)
                .map(|b| {
                    let t = b as f64 / bands as f64;
                    BASELINE
                        + terms
                            .iter()
                            .map(|(f, p)| {
                                SINUSOID_AMPLITUDE * (std::f64::consts::TAU * f * t + p).sin()
                            })
                            .sum::<f64>()
                })
                .collect()
        })
        .collect()
}

/// Generates a block scene and its labels. A pure function of `spec`.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<(HsiCube, LabelMap)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sigs = signatures_from(&mut rng, spec.num_classes, spec.bands);
    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| FstError::Config(format!("noise distribution: {e}")))?;
    let cube = HsiCube::from_fn(spec.height, spec.width, spec.bands, |r, c, b| {
        let clean = sigs[spec.class_at(r, c) as usize - 1][b];
        let n = if spec.noise_sigma > 0.0 {
            noise.sample(&mut rng)
        } else {
            0.0
        };
        (clean + n) as f32
    });
    let mut raw = Vec::with_capacity(spec.height * spec.width);
    for r in 0..spec.height {
        for c in 0..spec.width {
            raw.push(spec.class_at(r, c));
        }
    }
    let labels = LabelMap::from_raw(spec.height, spec.width, raw)?;
    Ok((cube, labels))
}
