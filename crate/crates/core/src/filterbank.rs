//! Modulated rectangular windows and the scattering configuration.
//!
//! A layer with support `M = (M1, M2, M3)` uses the window
//! `g(x, y, b) = 1 / (M1 M2 M3)` and the modulations
//! `g_m(x, y, b) = exp(2 pi i (x m1/M1 + y m2/M2 + b m3/M3)) g(x, y, b)`.
//! Both factor into one 1-D filter per axis, which is how the engine applies
//! them. Axis order is (row, column, band).

use std::cmp::Ordering;
use std::f64::consts::TAU;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{FstError, Result};

/// Support and spectral stride of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    pub support: [usize; 3],
    pub stride: usize,
}

impl LayerSpec {
    pub fn new(support: [usize; 3], stride: usize) -> Result<Self> {
        let spec = LayerSpec { support, stride };
        spec.validate()?;
        Ok(spec)
    }

    /// Support with the default stride `max(M3 - 2, 1)`.
    pub fn with_default_stride(support: [usize; 3]) -> Result<Self> {
        Self::new(support, default_stride(support[2]))
    }

    pub fn validate(&self) -> Result<()> {
        if self.support.contains(&0) {
            return Err(FstError::Config(format!(
                "window support {:?} has a zero side",
                self.support
            )));
        }
        if self.stride == 0 || self.stride > self.support[2] {
            return Err(FstError::Config(format!(
                "stride {} must lie in 1..={} for support {:?}",
                self.stride, self.support[2], self.support
            )));
        }
        Ok(())
    }

    pub fn volume(&self) -> usize {
        self.support.iter().product()
    }
}

/// `P = M3 - 2`, clamped to at least 1.
pub fn default_stride(spectral_support: usize) -> usize {
    spectral_support.saturating_sub(2).max(1)
}

/// Which second-order paths are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathRule {
    /// Every pair (m, n).
    All,
    /// Pairs whose normalized frequencies differ.
    #[default]
    Neq,
    /// Pairs with `nu(n) < nu(m)` in every coordinate.
    StrictLess,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum WindowType {
    #[default]
    #[serde(rename = "rect", alias = "rectangular")]
    Rectangular,
}

/// Parameters of a second-order transform: the windows `g, g', g''` and
/// their spectral strides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScatterConfig {
    pub layers: [LayerSpec; 3],
    pub path_rule: PathRule,
    pub conjugate_reduce: bool,
    pub window: WindowType,
}

#[derive(Serialize, Deserialize)]
struct ConfigFile {
    #[serde(rename = "M")]
    m: [usize; 3],
    #[serde(rename = "Mp")]
    mp: [usize; 3],
    #[serde(rename = "Mpp")]
    mpp: [usize; 3],
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    p: Option<usize>,
    #[serde(rename = "Pp", default, skip_serializing_if = "Option::is_none")]
    pp: Option<usize>,
    #[serde(rename = "Ppp", default, skip_serializing_if = "Option::is_none")]
    ppp: Option<usize>,
    #[serde(default)]
    path_rule: PathRule,
    #[serde(default = "default_true")]
    conjugate_reduce: bool,
    #[serde(default)]
    window: WindowType,
}

fn default_true() -> bool {
    true
}

impl ScatterConfig {
    /// Three layers with default strides, `neq` pruning and conjugate reduction.
    pub fn from_supports(m: [usize; 3], mp: [usize; 3], mpp: [usize; 3]) -> Result<Self> {
        Ok(ScatterConfig {
            layers: [
                LayerSpec::with_default_stride(m)?,
                LayerSpec::with_default_stride(mp)?,
                LayerSpec::with_default_stride(mpp)?,
            ],
            path_rule: PathRule::default(),
            conjugate_reduce: true,
            window: WindowType::default(),
        })
    }

    /// The same support on all three layers.
    pub fn uniform(m: [usize; 3]) -> Result<Self> {
        Self::from_supports(m, m, m)
    }

    pub fn with_strides(mut self, strides: [usize; 3]) -> Result<Self> {
        for (layer, s) in self.layers.iter_mut().zip(strides) {
            layer.stride = s;
            layer.validate()?;
        }
        Ok(self)
    }

    pub fn with_path_rule(mut self, rule: PathRule) -> Self {
        self.path_rule = rule;
        self
    }

    pub fn with_conjugate_reduce(mut self, reduce: bool) -> Self {
        self.conjugate_reduce = reduce;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.layers.iter().try_for_each(LayerSpec::validate)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ConfigFile = serde_json::from_str(text)
            .map_err(|e| FstError::Config(format!("config json: {e}")))?;
        let layer = |m: [usize; 3], p: Option<usize>| {
            LayerSpec::new(m, p.unwrap_or_else(|| default_stride(m[2])))
        };
        Ok(ScatterConfig {
            layers: [
                layer(file.m, file.p)?,
                layer(file.mp, file.pp)?,
                layer(file.mpp, file.ppp)?,
            ],
            path_rule: file.path_rule,
            conjugate_reduce: file.conjugate_reduce,
            window: file.window,
        })
    }

    /// Canonical JSON with every key spelled out.
    pub fn to_json(&self) -> String {
        let [a, b, c] = self.layers;
        let file = ConfigFile {
            m: a.support,
            mp: b.support,
            mpp: c.support,
            p: Some(a.stride),
            pp: Some(b.stride),
            ppp: Some(c.stride),
            path_rule: self.path_rule,
            conjugate_reduce: self.conjugate_reduce,
            window: self.window,
        };
        serde_json::to_string(&file).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A modulation index `m` with `0 <= m_j < M_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModIndex(pub [usize; 3]);

impl ModIndex {
    pub const ZERO: ModIndex = ModIndex([0, 0, 0]);

    pub fn is_zero(&self) -> bool {
        self.0 == [0, 0, 0]
    }

    /// Normalized frequency `(m1/M1, m2/M2, m3/M3)`.
    pub fn nu(&self, support: [usize; 3]) -> [f64; 3] {
        std::array::from_fn(|j| self.0[j] as f64 / support[j] as f64)
    }

    /// The conjugate partner `(M - m) mod M`.
    pub fn partner(&self, support: [usize; 3]) -> ModIndex {
        ModIndex(std::array::from_fn(|j| {
            (support[j] - self.0[j]) % support[j]
        }))
    }
}

/// Exact comparison of `a_j / ma_j` against `b_j / mb_j` for one axis.
fn cmp_nu(a: usize, ma: usize, b: usize, mb: usize) -> Ordering {
    (a * mb).cmp(&(b * ma))
}

/// The window of one layer and its retained modulations.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    spec: LayerSpec,
    indices: Vec<ModIndex>,
}

/// Builds the bank for one layer. With `conjugate_reduce`, only the member
/// of each pair `{m, M - m}` that is lexicographically smaller is kept.
/// The zero index never appears among the modulations.
pub fn build_bank(spec: LayerSpec, conjugate_reduce: bool) -> Result<FilterBank> {
    spec.validate()?;
    let [m1, m2, m3] = spec.support;
    let mut indices = Vec::with_capacity(spec.volume());
    for a in 0..m1 {
        for b in 0..m2 {
            for c in 0..m3 {
                let m = ModIndex([a, b, c]);
                if m.is_zero() {
                    continue;
                }
                if conjugate_reduce && m.partner(spec.support) < m {
                    continue;
                }
                indices.push(m);
            }
        }
    }
    Ok(FilterBank { spec, indices })
}

impl FilterBank {
    pub fn spec(&self) -> LayerSpec {
        self.spec
    }

    pub fn support(&self) -> [usize; 3] {
        self.spec.support
    }

    /// Retained modulation indices, sorted lexicographically.
    pub fn indices(&self) -> &[ModIndex] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Per-axis factors of the averaging window.
    pub fn window_factors(&self) -> [Vec<f64>; 3] {
        std::array::from_fn(|j| {
            let m = self.spec.support[j];
            vec![1.0 / m as f64; m]
        })
    }

    /// Per-axis factors of `g_m`, whose product is the 3-D filter.
    pub fn modulated_factors(&self, m: ModIndex) -> [Vec<Complex64>; 3] {
        std::array::from_fn(|j| axis_factor(self.spec.support[j], m.0[j]))
    }

    /// The window as a dense array, flattened `(x * M2 + y) * M3 + b`.
    pub fn dense_window(&self) -> Vec<f64> {
        vec![1.0 / self.spec.volume() as f64; self.spec.volume()]
    }

    /// `g_m` as a dense array, same flattening as [`FilterBank::dense_window`].
    pub fn dense_filter(&self, m: ModIndex) -> Vec<Complex64> {
        let [fx, fy, fb] = self.modulated_factors(m);
        let mut out = Vec::with_capacity(self.spec.volume());
        for x in &fx {
            for y in &fy {
                for b in &fb {
                    out.push(x * y * b);
                }
            }
        }
        out
    }
}

/// `exp(2 pi i t k / M) / M` for `t in 0..M`.
pub(crate) fn axis_factor(support: usize, k: usize) -> Vec<Complex64> {
    let scale = 1.0 / support as f64;
    (0..support)
        .map(|t| {
            // reduce t*k mod M first so the phase argument stays small
            let phase = TAU * ((t * k) % support) as f64 / support as f64;
            Complex64::from_polar(scale, phase)
        })
        .collect()
}

/// `max_w sum_m |G_m(w)|^2 + |G(w)|^2` over an `fft_size` DFT grid.
pub fn frame_bound(bank: &FilterBank, fft_size: [usize; 3]) -> Result<f64> {
    for j in 0..3 {
        if fft_size[j] < bank.spec.support[j] {
            return Err(FstError::Config(format!(
                "fft size {:?} smaller than support {:?}",
                fft_size, bank.spec.support
            )));
        }
    }
    let mut planner = FftPlanner::<f64>::new();
    // power[j][k][w]: squared DFT magnitude of the axis-j factor with modulation k
    let power: Vec<Vec<Vec<f64>>> = (0..3)
        .map(|j| {
            let m = bank.spec.support[j];
            let n = fft_size[j];
            let fft = planner.plan_fft_forward(n);
            (0..m)
                .map(|k| {
                    let mut buf = axis_factor(m, k);
                    buf.resize(n, Complex64::new(0.0, 0.0));
                    fft.process(&mut buf);
                    buf.iter().map(|c| c.norm_sqr()).collect()
                })
                .collect()
        })
        .collect();

    let mut members = vec![ModIndex::ZERO];
    members.extend_from_slice(&bank.indices);
    let mut best = 0.0f64;
    for w0 in 0..fft_size[0] {
        for w1 in 0..fft_size[1] {
            for w2 in 0..fft_size[2] {
                let total: f64 = members
                    .iter()
                    .map(|m| power[0][m.0[0]][w0] * power[1][m.0[1]][w1] * power[2][m.0[2]][w2])
                    .sum();
                best = best.max(total);
            }
        }
    }
    Ok(best)
}

/// Second-order paths `(m, n)` retained by the configuration's rule,
/// sorted lexicographically.
pub fn enumerate_paths(cfg: &ScatterConfig) -> Result<Vec<(ModIndex, ModIndex)>> {
    let first = build_bank(cfg.layers[0], cfg.conjugate_reduce)?;
    let second = build_bank(cfg.layers[1], cfg.conjugate_reduce)?;
    Ok(paths_between(&first, &second, cfg.path_rule))
}

pub(crate) fn paths_between(
    first: &FilterBank,
    second: &FilterBank,
    rule: PathRule,
) -> Vec<(ModIndex, ModIndex)> {
    let (ma, mb) = (first.support(), second.support());
    let mut out = Vec::new();
    for &m in first.indices() {
        for &n in second.indices() {
            let keep = match rule {
                PathRule::All => true,
                PathRule::Neq => {
                    (0..3).any(|j| cmp_nu(m.0[j], ma[j], n.0[j], mb[j]) != Ordering::Equal)
                }
                PathRule::StrictLess => {
                    (0..3).all(|j| cmp_nu(n.0[j], mb[j], m.0[j], ma[j]) == Ordering::Less)
                }
            };
            if keep {
                out.push((m, n));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(m: [usize; 3]) -> LayerSpec {
        LayerSpec::with_default_stride(m).unwrap()
    }

    #[test]
    fn smallest_bank() {
        let bank = build_bank(spec([1, 1, 2]), true).unwrap();
        assert_eq!(bank.indices(), &[ModIndex([0, 0, 1])]);
        assert_eq!(bank.dense_window(), vec![0.5, 0.5]);
    }

    #[test]
    fn full_paviau_first_layer_count() {
        let bank = build_bank(spec([7, 7, 5]), false).unwrap();
        assert_eq!(bank.len(), 7 * 7 * 5 - 1);
    }

    #[test]
    fn brute_force_conjugate_pairing() {
        for support in [[3, 3, 3], [2, 4, 3], [1, 1, 2], [4, 4, 4], [7, 7, 5]] {
            let bank = build_bank(spec(support), true).unwrap();
            // independent pairing: walk all indices and greedily pair each with its partner
            let all: Vec<[usize; 3]> = (0..support[0])
                .flat_map(|a| (0..support[1]).flat_map(move |b| (0..support[2]).map(move |c| [a, b, c])))
                .filter(|m| *m != [0, 0, 0])
                .collect();
            let mut seen = std::collections::BTreeSet::new();
            let mut expected = Vec::new();
            for m in &all {
                if seen.contains(m) {
                    continue;
                }
                let p = [
                    (support[0] - m[0]) % support[0],
                    (support[1] - m[1]) % support[1],
                    (support[2] - m[2]) % support[2],
                ];
                seen.insert(*m);
                seen.insert(p);
                expected.push(ModIndex(*m.min(&p)));
            }
            expected.sort();
            assert_eq!(bank.indices(), expected.as_slice(), "support {support:?}");
        }
        assert_eq!(build_bank(spec([3, 3, 3]), true).unwrap().len(), 13);
    }

    #[test]
    fn window_and_filter_sums() {
        let bank = build_bank(spec([3, 4, 5]), false).unwrap();
        let g: f64 = bank.dense_window().iter().sum();
        assert!((g - 1.0).abs() < 1e-12);
        let g0 = bank.dense_filter(ModIndex::ZERO);
        for (a, b) in g0.iter().zip(bank.dense_window()) {
            assert_eq!(a.re, b);
            assert_eq!(a.im, 0.0);
        }
        for &m in bank.indices() {
            let s: Complex64 = bank.dense_filter(m).iter().sum();
            assert!(s.norm() < 1e-12, "{m:?} sums to {s}");
        }
    }

    #[test]
    fn delta_window_frame_bound() {
        let bank = build_bank(spec([1, 1, 1]), true).unwrap();
        assert!(bank.is_empty());
        let a = frame_bound(&bank, [1, 1, 1]).unwrap();
        assert!((a - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_point_bank_frame_bound_by_hand() {
        // g = [1/2, 1/2], g_1 = [1/2, -1/2]; on an n-point grid
        // |G(w)|^2 = cos^2(w/2), |G_1(w)|^2 = sin^2(w/2)
        let bank = build_bank(spec([1, 1, 2]), false).unwrap();
        for n in [2usize, 3, 8] {
            let mut best = 0.0f64;
            for k in 0..n {
                let w = TAU * k as f64 / n as f64;
                let g = Complex64::new(0.5, 0.0) + Complex64::from_polar(0.5, -w);
                let g1 = Complex64::new(0.5, 0.0) - Complex64::from_polar(0.5, -w);
                best = best.max(g.norm_sqr() + g1.norm_sqr());
            }
            let a = frame_bound(&bank, [1, 1, n]).unwrap();
            assert!((a - best).abs() < 1e-12);
        }
    }

    #[test]
    fn frame_bound_stable_under_refinement() {
        for (support, reduce) in [([3, 3, 3], true), ([2, 3, 4], false), ([3, 2, 5], true)] {
            let bank = build_bank(spec(support), reduce).unwrap();
            let base = frame_bound(&bank, support.map(|m| 4 * m)).unwrap();
            let fine = frame_bound(&bank, support.map(|m| 8 * m + 1)).unwrap();
            assert!(base > 0.0);
            assert!((base - fine).abs() < 1e-6, "{support:?}: {base} vs {fine}");
        }
    }

    #[test]
    fn frame_bound_rejects_small_grid() {
        let bank = build_bank(spec([3, 3, 3]), true).unwrap();
        assert!(frame_bound(&bank, [2, 3, 3]).is_err());
    }

    #[test]
    fn path_counts() {
        let tiny = ScatterConfig::uniform([1, 1, 2]).unwrap();
        assert!(enumerate_paths(&tiny).unwrap().is_empty());

        let cfg = ScatterConfig::uniform([3, 3, 3]).unwrap();
        let all = enumerate_paths(&cfg.clone().with_path_rule(PathRule::All)).unwrap();
        assert_eq!(all.len(), 169);
        let neq = enumerate_paths(&cfg).unwrap();
        assert_eq!(neq.len(), 156);
        let mut sorted = neq.clone();
        sorted.sort();
        assert_eq!(neq, sorted);
    }

    #[test]
    fn neq_compares_normalized_frequency_across_supports() {
        // (0,0,1)/2 and (0,0,2)/4 are the same frequency
        let cfg = ScatterConfig::from_supports([1, 1, 2], [1, 1, 4], [1, 1, 1])
            .unwrap()
            .with_conjugate_reduce(false);
        let paths = enumerate_paths(&cfg).unwrap();
        assert!(!paths.contains(&(ModIndex([0, 0, 1]), ModIndex([0, 0, 2]))));
        assert!(paths.contains(&(ModIndex([0, 0, 1]), ModIndex([0, 0, 1]))));
        assert_eq!(paths.len(), 2);
    }

    #[test]
    fn strict_less_rule() {
        let cfg = ScatterConfig::uniform([3, 3, 3])
            .unwrap()
            .with_path_rule(PathRule::StrictLess)
            .with_conjugate_reduce(false);
        let paths = enumerate_paths(&cfg).unwrap();
        for (m, n) in &paths {
            assert!((0..3).all(|j| n.0[j] < m.0[j]));
        }
        // m needs every coordinate >= 1 (8 choices); n < m componentwise, n != 0
        let expected: usize = (1..3usize)
            .flat_map(|a| (1..3usize).flat_map(move |b| (1..3usize).map(move |c| a * b * c - 1)))
            .sum();
        assert_eq!(paths.len(), expected);
    }

    #[test]
    fn config_json_defaults_stride_rule() {
        let cfg = ScatterConfig::from_json(r#"{"M":[7,7,5],"Mp":[7,7,5],"Mpp":[7,7,2]}"#).unwrap();
        assert_eq!(cfg.layers[0].stride, 3);
        assert_eq!(cfg.layers[2].stride, 1);
        assert_eq!(cfg.path_rule, PathRule::Neq);
        assert!(cfg.conjugate_reduce);
        let back = ScatterConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);

        let full = ScatterConfig::from_json(
            r#"{"M":[7,7,5],"Mp":[7,7,5],"Mpp":[7,7,5],"P":3,"Pp":3,"Ppp":3,"path_rule":"strict_less","conjugate_reduce":false,"window":"rect"}"#,
        )
        .unwrap();
        assert_eq!(full.path_rule, PathRule::StrictLess);
        assert!(!full.conjugate_reduce);
        assert_ne!(full.hash(), cfg.hash());
    }

    #[test]
    fn invalid_layers() {
        assert!(LayerSpec::new([0, 1, 1], 1).is_err());
        assert!(LayerSpec::new([3, 3, 3], 0).is_err());
        assert!(LayerSpec::new([3, 3, 3], 4).is_err());
        assert!(ScatterConfig::from_json(r#"{"M":[3,3,3],"Mp":[3,3,3],"Mpp":[3,3,3],"P":5}"#).is_err());
    }
}
