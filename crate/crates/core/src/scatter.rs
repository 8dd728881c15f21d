//! Zero-, first- and second-order coefficients and their per-pixel layout.
//!
//! For a cube `f` and configuration `(g, P), (g', P'), (g'', P'')`:
//!
//! ```text
//! S0      = avg(f, g, P)
//! U_m     = |f * g_m|    strided by P
//! S_m     = avg(U_m, g', P')
//! U_{m,n} = |U_m * g'_n| strided by P'
//! S_{m,n} = avg(U_{m,n}, g'', P'')
//! ```
//!
//! Features of a pixel are `S0`, then every `S_m` (sorted by `m`), then
//! every `S_{m,n}` (sorted by `(m, n)`).

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::conv::{pad_amounts, strided_len, Padded, Region, Volume};
use crate::error::{FstError, Result};
use crate::exec::Execution;
use crate::filterbank::{build_bank, paths_between, FilterBank, LayerSpec, ModIndex, ScatterConfig};
use crate::hsi::HsiCube;

/// What one contiguous run of features holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockKind {
    Zero,
    First { m: ModIndex },
    Second { m: ModIndex, n: ModIndex },
    /// A first-layer modulus `U_m` with no averaging (Gabor features).
    Modulus { m: ModIndex },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    #[serde(flatten)]
    pub kind: BlockKind,
    pub len: usize,
}

/// Ordered blocks of a feature vector.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub blocks: Vec<Block>,
}

impl FeatureLayout {
    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.len).sum()
    }

    /// Start offset of every block.
    pub fn offsets(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .scan(0, |acc, b| {
                let start = *acc;
                *acc += b.len;
                Some(start)
            })
            .collect()
    }

    /// Feature index ranges whose blocks satisfy `pred`.
    pub fn ranges_where(&self, pred: impl Fn(&BlockKind) -> bool) -> Vec<std::ops::Range<usize>> {
        self.blocks
            .iter()
            .zip(self.offsets())
            .filter(|(b, _)| pred(&b.kind))
            .map(|(b, start)| start..start + b.len)
            .collect()
    }

    /// Contiguous runs of features of the same scattering order.
    pub fn order_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let order = |k: &BlockKind| match k {
            BlockKind::Zero => 0,
            BlockKind::First { .. } | BlockKind::Modulus { .. } => 1,
            BlockKind::Second { .. } => 2,
        };
        let mut out: Vec<(u8, std::ops::Range<usize>)> = Vec::new();
        for (b, start) in self.blocks.iter().zip(self.offsets()) {
            if b.len == 0 {
                continue;
            }
            match out.last_mut() {
                Some((o, r)) if *o == order(&b.kind) => r.end = start + b.len,
                _ => out.push((order(&b.kind), start..start + b.len)),
            }
        }
        out.into_iter().map(|(_, r)| r).collect()
    }
}

/// Per-pixel feature vectors, pixel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCube {
    pub height: usize,
    pub width: usize,
    pub layout: FeatureLayout,
    pub cfg_hash: String,
    pub data: Vec<f32>,
}

impl FeatureCube {
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let d = self.dim();
        let start = (row * self.width + col) * d;
        &self.data[start..start + d]
    }

    /// Squared norm of the entries in the given feature ranges, over all pixels.
    pub fn energy_of(&self, ranges: &[std::ops::Range<usize>]) -> f64 {
        let d = self.dim();
        if d == 0 {
            return 0.0;
        }
        self.data
            .chunks_exact(d)
            .map(|px| {
                ranges
                    .iter()
                    .flat_map(|r| px[r.clone()].iter())
                    .map(|&v| (v as f64) * (v as f64))
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Filter banks and paths resolved from a configuration.
#[derive(Debug, Clone)]
pub struct Network {
    pub cfg: ScatterConfig,
    pub first: FilterBank,
    pub second: FilterBank,
    pub paths: Vec<(ModIndex, ModIndex)>,
}

/// Spectral lengths of the zero-, first- and second-order blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BandCounts {
    pub zero: usize,
    pub first: usize,
    pub second: usize,
}

impl Network {
    pub fn new(cfg: &ScatterConfig) -> Result<Self> {
        cfg.validate()?;
        let first = build_bank(cfg.layers[0], cfg.conjugate_reduce)?;
        let second = build_bank(cfg.layers[1], cfg.conjugate_reduce)?;
        let paths = paths_between(&first, &second, cfg.path_rule);
        Ok(Network {
            cfg: cfg.clone(),
            first,
            second,
            paths,
        })
    }

    pub fn band_counts(&self, bands: usize) -> BandCounts {
        let [a, b, c] = self.cfg.layers;
        let zero = strided_len(bands, a.stride);
        let first = strided_len(zero, b.stride);
        BandCounts {
            zero,
            first,
            second: strided_len(first, c.stride),
        }
    }

    /// Checks that the cube has at least `M3` bands and that every later
    /// layer's spectral support is at most twice the bands it receives
    /// (the limit of reflect padding).
    pub fn check_bands(&self, bands: usize) -> Result<BandCounts> {
        let counts = self.band_counts(bands);
        let [a, b, c] = self.cfg.layers;
        if bands < a.support[2] {
            return Err(FstError::TooFewBands {
                layer: "first layer (M)",
                bands,
                support: a.support[2],
            });
        }
        let checks = [
            ("second layer (M')", counts.zero, b.support[2]),
            ("third layer (M'')", counts.first, c.support[2]),
        ];
        for (layer, have, support) in checks {
            if support > 2 * have {
                return Err(FstError::TooFewBands {
                    layer,
                    bands: have,
                    support,
                });
            }
        }
        Ok(counts)
    }

    pub fn layout(&self, bands: usize) -> FeatureLayout {
        let counts = self.band_counts(bands);
        let mut blocks = vec![Block {
            kind: BlockKind::Zero,
            len: counts.zero,
        }];
        blocks.extend(self.first.indices().iter().map(|&m| Block {
            kind: BlockKind::First { m },
            len: counts.first,
        }));
        blocks.extend(self.paths.iter().map(|&(m, n)| Block {
            kind: BlockKind::Second { m, n },
            len: counts.second,
        }));
        FeatureLayout { blocks }
    }

    pub fn gabor_layout(&self, bands: usize) -> FeatureLayout {
        let zero = self.band_counts(bands).zero;
        FeatureLayout {
            blocks: self
                .first
                .indices()
                .iter()
                .map(|&m| Block {
                    kind: BlockKind::Modulus { m },
                    len: zero,
                })
                .collect(),
        }
    }

    /// Spatial halo `(rows, cols)` a tile needs so its core matches a
    /// whole-image run: the sum of the per-layer padding radii.
    pub fn halo(&self) -> [usize; 2] {
        let [a, b, c] = self.cfg.layers.map(layer_radius);
        [0, 1].map(|axis| a[axis] + b[axis] + c[axis])
    }

    fn gabor_halo(&self) -> [usize; 2] {
        layer_radius(self.cfg.layers[0])
    }

    /// Pairs grouped by first-layer index; every first-layer index appears.
    fn paths_by_first(&self) -> BTreeMap<ModIndex, Vec<ModIndex>> {
        let mut groups: BTreeMap<ModIndex, Vec<ModIndex>> =
            self.first.indices().iter().map(|&m| (m, Vec::new())).collect();
        for &(m, n) in &self.paths {
            groups.entry(m).or_default().push(n);
        }
        groups
    }
}

/// Spatial reach of one layer's window, per axis.
fn layer_radius(layer: LayerSpec) -> [usize; 2] {
    [0, 1].map(|axis| {
        let (a, b) = pad_amounts(layer.support[axis]);
        a.max(b)
    })
}

/// Output positions wanted from a run and the regions each layer has to
/// cover for them. Intermediate volumes are region-sized; reflections at a
/// region edge that is not the image edge never reach the wanted outputs.
struct Regions {
    core: Region,
    /// where `U_m` is needed, absolute
    first: Region,
    /// `core` relative to `first`
    core_in_first: Region,
    /// where `U_{m,n}` is needed, relative to `first`
    second: Region,
    /// `core` relative to `second`
    core_in_second: Region,
}

impl Regions {
    fn new(net: &Network, core: Region, height: usize, width: usize) -> Self {
        let [_, l1, l2] = net.cfg.layers.map(layer_radius);
        let first = core.grow([l1[0] + l2[0], l1[1] + l2[1]], height, width);
        let second_abs = core.grow(l2, height, width);
        Regions {
            core_in_first: core.relative_to(&first),
            second: second_abs.relative_to(&first),
            core_in_second: core.relative_to(&second_abs),
            core,
            first,
        }
    }
}

/// Outputs of one first-layer branch.
struct Branch {
    modulus: Option<Volume>,
    first: Volume,
    second: Vec<Volume>,
}

fn run_branch(
    net: &Network,
    padded: &Padded,
    regions: &Regions,
    m: ModIndex,
    ns: &[ModIndex],
    keep_modulus: bool,
) -> Result<Branch> {
    let [l0, l1, l2] = net.cfg.layers;
    let u = padded.modulus_in(&net.first.modulated_factors(m), l0.stride, &regions.first);
    let padded_u = Padded::new(&u, l1.support)?;
    let first = padded_u.average_in(&net.second.window_factors(), l1.stride, &regions.core_in_first);

    let window2 = l2.support.map(|s| vec![1.0 / s as f64; s]);
    let wanted: Vec<[usize; 3]> = ns.iter().map(|n| n.0).collect();
    let mut by_index: BTreeMap<[usize; 3], Volume> = BTreeMap::new();
    let mut failure = None;
    padded_u.modulus_family(&wanted, l1.stride, &regions.second, |n, umn| {
        match Padded::new(&umn, l2.support) {
            Ok(p) => {
                by_index.insert(n, p.average_in(&window2, l2.stride, &regions.core_in_second));
            }
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let second = ns
        .iter()
        .map(|n| by_index.remove(&n.0).expect("every requested path is emitted"))
        .collect();
    Ok(Branch {
        modulus: keep_modulus.then_some(u),
        first,
        second,
    })
}

/// Copies per-block volumes into a pixel-major feature cube.
fn assemble(
    height: usize,
    width: usize,
    layout: FeatureLayout,
    cfg_hash: String,
    blocks: &[&Volume],
) -> FeatureCube {
    let dim = layout.dim();
    let mut data = vec![0.0f32; height * width * dim];
    for (p, px) in data.chunks_exact_mut(dim.max(1)).enumerate() {
        let mut off = 0;
        for v in blocks {
            let src = &v.data[p * v.bands..(p + 1) * v.bands];
            px[off..off + v.bands].copy_from_slice(src);
            off += v.bands;
        }
    }
    FeatureCube {
        height,
        width,
        layout,
        cfg_hash,
        data,
    }
}

/// Features of `cube` at the positions in `core` (all of them by default).
fn scatter_impl(
    cube: &HsiCube,
    net: &Network,
    exec: Execution,
    trace: bool,
    core: Option<Region>,
) -> Result<(FeatureCube, Vec<Volume>)> {
    net.check_bands(cube.bands())?;
    let volume = Volume::from_cube(cube);
    let l0 = net.cfg.layers[0];
    let padded = Padded::new(&volume, l0.support)?;
    let regions = Regions::new(net, core.unwrap_or(padded.full()), cube.height(), cube.width());
    let zero = padded.average_in(&net.first.window_factors(), l0.stride, &regions.core);

    let groups: Vec<(ModIndex, Vec<ModIndex>)> = net.paths_by_first().into_iter().collect();
    let branches: Vec<Branch> = exec
        .map(groups, |(m, ns)| run_branch(net, &padded, &regions, m, &ns, trace))
        .into_iter()
        .collect::<Result<_>>()?;

    let mut blocks: Vec<&Volume> = vec![&zero];
    blocks.extend(branches.iter().map(|b| &b.first));
    // second-order blocks follow (m, n) order, which is branch order then n order
    blocks.extend(branches.iter().flat_map(|b| b.second.iter()));
    let features = assemble(
        regions.core.rows.len(),
        regions.core.cols.len(),
        net.layout(cube.bands()),
        net.cfg.hash(),
        &blocks,
    );
    let moduli = branches.into_iter().filter_map(|b| b.modulus).collect();
    Ok((features, moduli))
}

/// Computes the full second-order feature cube of `cube`.
pub fn scatter(cube: &HsiCube, cfg: &ScatterConfig) -> Result<FeatureCube> {
    scatter_with(cube, cfg, Execution::default())
}

pub fn scatter_with(cube: &HsiCube, cfg: &ScatterConfig, exec: Execution) -> Result<FeatureCube> {
    let net = Network::new(cfg)?;
    Ok(scatter_impl(cube, &net, exec, false, None)?.0)
}

/// Like [`scatter`], also returning the first-layer moduli `U_m` in bank order.
pub fn scatter_traced(cube: &HsiCube, cfg: &ScatterConfig) -> Result<(FeatureCube, Vec<Volume>)> {
    let net = Network::new(cfg)?;
    scatter_impl(cube, &net, Execution::default(), true, None)
}

fn gabor_impl(cube: &HsiCube, net: &Network, exec: Execution, core: Option<Region>) -> Result<FeatureCube> {
    net.check_bands(cube.bands())?;
    let volume = Volume::from_cube(cube);
    let l0 = net.cfg.layers[0];
    let padded = Padded::new(&volume, l0.support)?;
    let core = core.unwrap_or(padded.full());
    let moduli: Vec<Volume> = exec.map(net.first.indices().to_vec(), |m| {
        padded.modulus_in(&net.first.modulated_factors(m), l0.stride, &core)
    });
    let blocks: Vec<&Volume> = moduli.iter().collect();
    Ok(assemble(
        core.rows.len(),
        core.cols.len(),
        net.gabor_layout(cube.bands()),
        net.cfg.hash(),
        &blocks,
    ))
}

/// First-layer moduli `U_m` only, concatenated per pixel in bank order.
pub fn scatter_gabor(cube: &HsiCube, cfg: &ScatterConfig) -> Result<FeatureCube> {
    let net = Network::new(cfg)?;
    gabor_impl(cube, &net, Execution::default(), None)
}

/// Which feature family a tiled run computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Scattering,
    Gabor,
}

/// Spatial tile: rows and columns of the output it covers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tile {
    pub rows: std::ops::Range<usize>,
    pub cols: std::ops::Range<usize>,
}

pub fn tiles(height: usize, width: usize, patch: usize) -> Vec<Tile> {
    let mut out = Vec::new();
    for r0 in (0..height).step_by(patch) {
        for c0 in (0..width).step_by(patch) {
            out.push(Tile {
                rows: r0..(r0 + patch).min(height),
                cols: c0..(c0 + patch).min(width),
            });
        }
    }
    out
}

/// Processes `cube` tile by tile, each tile with enough spatial context for
/// its features to match a whole-image run, and hands every tile's features
/// to `sink`. Tiles may be delivered in any order.
pub fn scatter_tiles<F>(
    cube: &HsiCube,
    cfg: &ScatterConfig,
    transform: Transform,
    patch: usize,
    exec: Execution,
    sink: F,
) -> Result<FeatureLayout>
where
    F: Fn(&Tile, FeatureCube) -> Result<()> + Sync + Send,
{
    if patch == 0 {
        return Err(FstError::Config("patch size must be at least 1".into()));
    }
    let net = Network::new(cfg)?;
    net.check_bands(cube.bands())?;
    let (halo, layout) = match transform {
        Transform::Scattering => (net.halo(), net.layout(cube.bands())),
        Transform::Gabor => (net.gabor_halo(), net.gabor_layout(cube.bands())),
    };
    let (h, w) = (cube.height(), cube.width());
    let errors = Mutex::new(Vec::new());
    exec.for_each(tiles(h, w, patch), |tile| {
        let r0 = tile.rows.start.saturating_sub(halo[0]);
        let r1 = (tile.rows.end + halo[0]).min(h);
        let c0 = tile.cols.start.saturating_sub(halo[1]);
        let c1 = (tile.cols.end + halo[1]).min(w);
        let result = (|| {
            let whole = r0 == 0 && c0 == 0 && r1 == h && c1 == w;
            let sub;
            let input = if whole {
                cube
            } else {
                sub = cube.crop(r0..r1, c0..c1);
                &sub
            };
            let core = Region {
                rows: tile.rows.start - r0..tile.rows.end - r0,
                cols: tile.cols.start - c0..tile.cols.end - c0,
            };
            // tiles already run in parallel; each one runs its branches in order
            let feats = match transform {
                Transform::Scattering => scatter_impl(input, &net, Execution::Sequential, false, Some(core))?.0,
                Transform::Gabor => gabor_impl(input, &net, Execution::Sequential, Some(core))?,
            };
            sink(&tile, feats)
        })();
        if let Err(e) = result {
            errors.lock().expect("error list lock").push(e);
        }
    });
    match errors.into_inner().expect("error list lock").into_iter().next() {
        Some(e) => Err(e),
        None => Ok(layout),
    }
}

/// Tiled computation of [`scatter`] (or [`scatter_gabor`]) assembled into
/// one feature cube.
pub fn scatter_patched(
    cube: &HsiCube,
    cfg: &ScatterConfig,
    patch: usize,
) -> Result<FeatureCube> {
    scatter_patched_with(cube, cfg, Transform::Scattering, patch, Execution::default())
}

pub fn scatter_patched_with(
    cube: &HsiCube,
    cfg: &ScatterConfig,
    transform: Transform,
    patch: usize,
    exec: Execution,
) -> Result<FeatureCube> {
    let (h, w) = (cube.height(), cube.width());
    let net = Network::new(cfg)?;
    let dim = match transform {
        Transform::Scattering => net.layout(cube.bands()).dim(),
        Transform::Gabor => net.gabor_layout(cube.bands()).dim(),
    };
    let out = Mutex::new(vec![0.0f32; h * w * dim]);
    let layout = scatter_tiles(cube, cfg, transform, patch, exec, |tile, feats| {
        let mut data = out.lock().expect("output lock");
        let n = tile.cols.len() * dim;
        for (i, r) in tile.rows.clone().enumerate() {
            let dst = (r * w + tile.cols.start) * dim;
            data[dst..dst + n].copy_from_slice(&feats.data[i * n..(i + 1) * n]);
        }
        Ok(())
    })?;
    Ok(FeatureCube {
        height: h,
        width: w,
        layout,
        cfg_hash: cfg.hash(),
        data: out.into_inner().expect("output lock"),
    })
}

/// Input energy and output energy per scattering order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub input: f64,
    pub zero: f64,
    pub first: f64,
    pub second: f64,
}

impl EnergyReport {
    /// `E2 / (E1 + E2)`, or 0 when both vanish.
    pub fn second_fraction(&self) -> f64 {
        ratio(self.second, self.first + self.second)
    }

    /// `E1 / (E0 + E1 + E2)`, or 0 when all vanish.
    pub fn first_fraction(&self) -> f64 {
        ratio(self.first, self.zero + self.first + self.second)
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        0.0
    }
}

pub fn energy_report(cube: &HsiCube, cfg: &ScatterConfig) -> Result<EnergyReport> {
    let feats = scatter(cube, cfg)?;
    Ok(energy_of_features(cube.energy(), &feats))
}

pub fn energy_of_features(input: f64, feats: &FeatureCube) -> EnergyReport {
    let of = |pred: fn(&BlockKind) -> bool| feats.energy_of(&feats.layout.ranges_where(pred));
    EnergyReport {
        input,
        zero: of(|k| matches!(k, BlockKind::Zero)),
        first: of(|k| matches!(k, BlockKind::First { .. })),
        second: of(|k| matches!(k, BlockKind::Second { .. })),
    }
}

/// Spatial and spectral extent of input seen by one output feature.
pub fn receptive_field(cfg: &ScatterConfig) -> (usize, usize) {
    let [a, b, c] = cfg.layers;
    let spatial = a.support[0] + (b.support[0] - 1) + (c.support[0] - 1);
    let spectral =
        a.support[2] + (b.support[2] - 1) * a.stride + (c.support[2] - 1) * a.stride * b.stride;
    (spatial, spectral)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::LayerSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cube(h: usize, w: usize, b: usize, seed: u64) -> HsiCube {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        HsiCube::from_fn(h, w, b, |_, _, _| rng.random_range(0.0..1.0))
    }

    fn unit_strides() -> ScatterConfig {
        ScatterConfig::uniform([3, 3, 3]).unwrap().with_strides([1, 1, 1]).unwrap()
    }

    #[test]
    fn zero_cube_gives_zero_features() {
        let cfg = unit_strides();
        let feats = scatter(&HsiCube::zeros(8, 8, 9), &cfg).unwrap();
        assert_eq!(feats.dim(), 9 + 13 * 9 + 156 * 9);
        assert!(feats.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_cube() {
        let cfg = unit_strides();
        let cube = HsiCube::from_fn(6, 7, 9, |_, _, _| 5.0);
        let feats = scatter(&cube, &cfg).unwrap();
        let d = feats.dim();
        for px in feats.data.chunks_exact(d) {
            assert!(px[..9].iter().all(|&v| (v - 5.0).abs() < 1e-5));
            assert!(px[9..].iter().all(|&v| (v as f64).abs() < 1e-9));
        }
    }

    #[test]
    fn layout_dimension_formula() {
        let cfg = ScatterConfig::uniform([3, 3, 5]).unwrap(); // P = 3
        let net = Network::new(&cfg).unwrap();
        let counts = net.band_counts(20);
        assert_eq!((counts.zero, counts.first, counts.second), (7, 3, 1));
        let layout = net.layout(20);
        assert_eq!(
            layout.dim(),
            7 + net.first.len() * 3 + net.paths.len()
        );
        let cube = random_cube(5, 5, 20, 1);
        assert_eq!(scatter(&cube, &cfg).unwrap().dim(), layout.dim());
    }

    #[test]
    fn too_few_bands_names_layer() {
        let cfg = ScatterConfig::uniform([3, 3, 5]).unwrap();
        // 6 bands -> 2 after P=3, too few to reflect-pad a support of 5
        match scatter(&random_cube(4, 4, 6, 0), &cfg) {
            Err(FstError::TooFewBands { layer, bands, support }) => {
                assert_eq!(layer, "second layer (M')");
                assert_eq!((bands, support), (2, 5));
            }
            other => panic!("expected band error, got {other:?}"),
        }
        assert!(matches!(
            scatter(&random_cube(4, 4, 4, 0), &cfg),
            Err(FstError::TooFewBands { layer: "first layer (M)", .. })
        ));
    }

    #[test]
    fn nonnegative_higher_orders() {
        let cube = HsiCube::from_fn(6, 6, 10, |r, c, b| ((r * 7 + c * 3 + b) % 5) as f32 - 2.0);
        let feats = scatter(&cube, &unit_strides()).unwrap();
        let ranges = feats.layout.ranges_where(|k| !matches!(k, BlockKind::Zero));
        for px in feats.data.chunks_exact(feats.dim()) {
            for r in &ranges {
                assert!(px[r.clone()].iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn gabor_equals_traced_moduli() {
        let cube = random_cube(7, 6, 10, 5);
        let cfg = ScatterConfig::uniform([3, 3, 3]).unwrap();
        let (_, moduli) = scatter_traced(&cube, &cfg).unwrap();
        let gabor = scatter_gabor(&cube, &cfg).unwrap();
        let b0 = moduli[0].bands;
        assert_eq!(gabor.dim(), moduli.len() * b0);
        for r in 0..7 {
            for c in 0..6 {
                let px = gabor.pixel(r, c);
                for (i, u) in moduli.iter().enumerate() {
                    assert_eq!(&px[i * b0..(i + 1) * b0], u.pixel(r, c));
                }
            }
        }
    }

    #[test]
    fn gabor_of_constant_and_zero() {
        let cfg = ScatterConfig::uniform([3, 3, 3]).unwrap();
        let zero = scatter_gabor(&HsiCube::zeros(5, 5, 8), &cfg).unwrap();
        assert_eq!(zero.dim(), 13 * 8);
        assert!(zero.data.iter().all(|&v| v == 0.0));
        let flat = scatter_gabor(&HsiCube::from_fn(5, 5, 8, |_, _, _| 3.0), &cfg).unwrap();
        assert!(flat.data.iter().all(|&v| (v as f64) < 1e-9));
    }

    #[test]
    fn single_tile_is_bit_identical() {
        let cube = random_cube(9, 7, 9, 8);
        let cfg = ScatterConfig::uniform([3, 3, 3]).unwrap();
        let whole = scatter(&cube, &cfg).unwrap();
        let tiled = scatter_patched(&cube, &cfg, 9).unwrap();
        assert_eq!(whole, tiled);
    }

    #[test]
    fn unit_tiles_match() {
        let cube = random_cube(6, 6, 9, 9);
        let cfg = ScatterConfig::uniform([3, 3, 3]).unwrap();
        let whole = scatter(&cube, &cfg).unwrap();
        for exec in [Execution::Sequential, Execution::Parallel] {
            let tiled = scatter_patched_with(&cube, &cfg, Transform::Scattering, 1, exec).unwrap();
            let worst = whole
                .data
                .iter()
                .zip(&tiled.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f32, f32::max);
            assert!(worst <= 1e-6, "max diff {worst}");
        }
        let g = scatter_gabor(&cube, &cfg).unwrap();
        let gt = scatter_patched_with(&cube, &cfg, Transform::Gabor, 2, Execution::default()).unwrap();
        assert_eq!(g.data, gt.data);
    }

    #[test]
    fn zero_patch_rejected() {
        let cfg = ScatterConfig::uniform([3, 3, 3]).unwrap();
        assert!(scatter_patched(&random_cube(3, 3, 5, 0), &cfg, 0).is_err());
    }

    #[test]
    fn energy_of_zero_and_constant() {
        let cfg = unit_strides();
        let z = energy_report(&HsiCube::zeros(5, 5, 6), &cfg).unwrap();
        assert_eq!((z.input, z.zero, z.first, z.second), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(z.second_fraction(), 0.0);
        let c = energy_report(&HsiCube::from_fn(5, 5, 6, |_, _, _| 2.0), &cfg).unwrap();
        assert!(c.zero > 0.0);
        assert!(c.first < 1e-12 && c.second < 1e-12);
    }

    #[test]
    fn order_ranges_cover_layout() {
        let net = Network::new(&ScatterConfig::uniform([3, 3, 3]).unwrap()).unwrap();
        assert_eq!(net.layout(9).order_ranges(), vec![0..9, 9..126, 126..1530]);
        assert_eq!(net.gabor_layout(9).order_ranges(), vec![0..117]);
    }

    #[test]
    fn receptive_fields() {
        let cfg = ScatterConfig::uniform([7, 7, 5]).unwrap();
        assert_eq!(receptive_field(&cfg).0, 19);
        let cfg = ScatterConfig::uniform([9, 9, 7]).unwrap();
        assert_eq!(receptive_field(&cfg).0, 25);
        let one = ScatterConfig {
            layers: [
                LayerSpec::new([5, 5, 5], 1).unwrap(),
                LayerSpec::new([1, 1, 1], 1).unwrap(),
                LayerSpec::new([1, 1, 1], 1).unwrap(),
            ],
            ..cfg
        };
        assert_eq!(receptive_field(&one), (5, 5));
        // spectral: 5 + 4*3 + 4*3*3
        assert_eq!(receptive_field(&ScatterConfig::uniform([7, 7, 5]).unwrap()).1, 5 + 12 + 36);
    }

    #[test]
    fn halo_sums_layer_radii() {
        let cfg = ScatterConfig::from_supports([9, 4, 5], [5, 2, 5], [3, 3, 3]).unwrap();
        let net = Network::new(&cfg).unwrap();
        assert_eq!(net.halo(), [4 + 2 + 1, 2 + 1 + 1]);
    }
}
