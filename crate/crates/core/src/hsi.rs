//! Hyperspectral cubes and label maps, plus their on-disk format.
//!
//! A cube is stored as a JSON header (`<name>.json`) next to a raw
//! little-endian `f32` binary in band-sequential order. Label maps use
//! `<name>.labels.json` with a `u16` little-endian row-major binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{FstError, Result};

/// A dense `height x width x bands` volume, band-sequential in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    height: usize,
    width: usize,
    bands: usize,
    data: Vec<f32>,
    wavelengths: Option<Vec<f64>>,
}

impl HsiCube {
    /// Builds a cube from band-sequential data (band, then row, then column).
    pub fn new(height: usize, width: usize, bands: usize, data: Vec<f32>) -> Result<Self> {
        let expected = height * width * bands;
        if data.len() != expected {
            return Err(FstError::SizeMismatch {
                expected,
                actual: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(FstError::NonFinite { index });
        }
        Ok(HsiCube {
            height,
            width,
            bands,
            data,
            wavelengths: None,
        })
    }

    pub fn zeros(height: usize, width: usize, bands: usize) -> Self {
        HsiCube {
            height,
            width,
            bands,
            data: vec![0.0; height * width * bands],
            wavelengths: None,
        }
    }

    /// Builds a cube by evaluating `f(row, col, band)` at every voxel.
    pub fn from_fn(
        height: usize,
        width: usize,
        bands: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * bands);
        for b in 0..bands {
            for r in 0..height {
                for c in 0..width {
                    data.push(f(r, c, b));
                }
            }
        }
        HsiCube {
            height,
            width,
            bands,
            data,
            wavelengths: None,
        }
    }

    pub fn with_wavelengths(mut self, wavelengths: Vec<f64>) -> Result<Self> {
        if wavelengths.len() != self.bands {
            return Err(FstError::Shape(format!(
                "{} wavelengths for {} bands",
                wavelengths.len(),
                self.bands
            )));
        }
        self.wavelengths = Some(wavelengths);
        Ok(self)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn wavelengths(&self) -> Option<&[f64]> {
        self.wavelengths.as_deref()
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, band: usize) -> usize {
        (band * self.height + row) * self.width + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, band: usize) -> f32 {
        self.data[self.index(row, col, band)]
    }

    pub fn set(&mut self, row: usize, col: usize, band: usize, value: f32) {
        let i = self.index(row, col, band);
        self.data[i] = value;
    }

    /// The spectrum at one pixel.
    pub fn spectrum(&self, row: usize, col: usize) -> Vec<f32> {
        (0..self.bands).map(|b| self.get(row, col, b)).collect()
    }

    /// Squared L2 norm, accumulated in double precision.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|&v| (v as f64) * (v as f64)).sum()
    }

    /// Copies the spatial window `rows x cols` (all bands).
    pub fn crop(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> HsiCube {
        let (h, w) = (rows.len(), cols.len());
        let mut data = Vec::with_capacity(h * w * self.bands);
        for b in 0..self.bands {
            for r in rows.clone() {
                let start = self.index(r, cols.start, b);
                data.extend_from_slice(&self.data[start..start + w]);
            }
        }
        HsiCube {
            height: h,
            width: w,
            bands: self.bands,
            data,
            wavelengths: self.wavelengths.clone(),
        }
    }
}

/// Per-pixel class ids: 0 is unlabeled, 1..=K are classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<u16>,
    /// `original_ids[k - 1]` is the id class `k` carried before normalization.
    original_ids: Vec<u16>,
}

impl LabelMap {
    /// Builds a map from raw ids, remapping the nonzero ids to `1..=K`
    /// in ascending order of their raw value.
    pub fn from_raw(height: usize, width: usize, raw: Vec<u16>) -> Result<Self> {
        if raw.len() != height * width {
            return Err(FstError::SizeMismatch {
                expected: height * width,
                actual: raw.len(),
            });
        }
        let distinct: std::collections::BTreeSet<u16> =
            raw.iter().copied().filter(|&v| v != 0).collect();
        let original_ids: Vec<u16> = distinct.into_iter().collect();
        let lookup: BTreeMap<u16, u16> = original_ids
            .iter()
            .enumerate()
            .map(|(i, &id)| (id, (i + 1) as u16))
            .collect();
        let labels = raw
            .into_iter()
            .map(|v| if v == 0 { 0 } else { lookup[&v] })
            .collect();
        Ok(LabelMap {
            height,
            width,
            labels,
            original_ids,
        })
    }

    /// Builds a map whose ids are already in `1..=K`, `K = original_ids.len()`.
    /// Classes may be absent from the grid (as in a prediction map).
    pub fn with_classes(
        height: usize,
        width: usize,
        labels: Vec<u16>,
        original_ids: Vec<u16>,
    ) -> Result<Self> {
        if labels.len() != height * width {
            return Err(FstError::SizeMismatch {
                expected: height * width,
                actual: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&v| v as usize > original_ids.len()) {
            return Err(FstError::LabelOverflow(bad as u64));
        }
        Ok(LabelMap {
            height,
            width,
            labels,
            original_ids,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.labels[row * self.width + col]
    }

    /// Number of classes K.
    pub fn num_classes(&self) -> usize {
        self.original_ids.len()
    }

    pub fn original_ids(&self) -> &[u16] {
        &self.original_ids
    }

    /// Labeled pixels of class `k`, in row-major order.
    pub fn pixels_of(&self, class: u16) -> Vec<(usize, usize)> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == class)
            .map(|(i, _)| (i / self.width, i % self.width))
            .collect()
    }

    /// All labeled pixels, row-major.
    pub fn labeled_pixels(&self) -> Vec<(usize, usize)> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(i, _)| (i / self.width, i % self.width))
            .collect()
    }

    /// Pixel count per class, index `k - 1`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &v in &self.labels {
            if v != 0 {
                counts[v as usize - 1] += 1;
            }
        }
        counts
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CubeHeader {
    height: usize,
    width: usize,
    bands: usize,
    dtype: String,
    layout: String,
    data: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    wavelengths_nm: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelHeader {
    height: usize,
    width: usize,
    dtype: String,
    layout: String,
    data: String,
    num_classes: usize,
    /// Pairs `[original, stored]`.
    #[serde(default)]
    id_map: Vec<[u64; 2]>,
}

/// The binary path that goes with a header path: `x.json` -> `x.bin`.
pub(crate) fn binary_path_for(header: &Path) -> PathBuf {
    let name = header
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = name.strip_suffix(".json").unwrap_or(&name);
    header.with_file_name(format!("{stem}.bin"))
}

fn resolve_data_path(header: &Path, data: &str) -> PathBuf {
    match header.parent() {
        Some(dir) => dir.join(data),
        None => PathBuf::from(data),
    }
}

pub(crate) fn read_header<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| FstError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| FstError::header(path, e.to_string()))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| FstError::header(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| FstError::io(path, e))
}

pub(crate) fn file_name_of(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Loads a cube from its JSON header and companion binary.
pub fn load_cube(path: impl AsRef<Path>) -> Result<HsiCube> {
    let path = path.as_ref();
    let header: CubeHeader = read_header(path)?;
    if header.dtype != "f32le" {
        return Err(FstError::header(
            path,
            format!("unsupported dtype {:?}", header.dtype),
        ));
    }
    if header.layout != "bsq" {
        return Err(FstError::header(
            path,
            format!("unsupported layout {:?}", header.layout),
        ));
    }
    let bin = resolve_data_path(path, &header.data);
    let bytes = fs::read(&bin).map_err(|e| FstError::io(&bin, e))?;
    let expected = header.height * header.width * header.bands;
    if bytes.len() % 4 != 0 || bytes.len() / 4 != expected {
        return Err(FstError::SizeMismatch {
            expected,
            actual: bytes.len() / 4,
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let cube = HsiCube::new(header.height, header.width, header.bands, data)?;
    match header.wavelengths_nm {
        Some(w) => cube.with_wavelengths(w),
        None => Ok(cube),
    }
}

/// Writes `<name>.json` and `<name>.bin`, overwriting existing files.
pub fn save_cube(cube: &HsiCube, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bin = binary_path_for(path);
    let mut bytes = Vec::with_capacity(cube.data.len() * 4);
    for v in &cube.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&bin, bytes).map_err(|e| FstError::io(&bin, e))?;
    let header = CubeHeader {
        height: cube.height,
        width: cube.width,
        bands: cube.bands,
        dtype: "f32le".into(),
        layout: "bsq".into(),
        data: file_name_of(&bin),
        wavelengths_nm: cube.wavelengths.clone(),
    };
    write_json(path, &header)
}

/// Loads a label map. Without an `id_map` in the header, the nonzero ids
/// are normalized to `1..=K` and their raw values become the original ids.
/// With one (as written by [`save_labels`]), the stored ids must already be
/// `1..=K` and the map supplies their original ids.
pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let header: LabelHeader = read_header(path)?;
    if header.dtype != "u16le" {
        return Err(FstError::header(
            path,
            format!("unsupported dtype {:?}", header.dtype),
        ));
    }
    let bin = resolve_data_path(path, &header.data);
    let bytes = fs::read(&bin).map_err(|e| FstError::io(&bin, e))?;
    let expected = header.height * header.width;
    if bytes.len() % 2 != 0 || bytes.len() / 2 != expected {
        return Err(FstError::SizeMismatch {
            expected,
            actual: bytes.len() / 2,
        });
    }
    let raw: Vec<u16> = bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    let map = if header.id_map.is_empty() {
        LabelMap::from_raw(header.height, header.width, raw)?
    } else {
        // stored ids are already contiguous; the map gives their original ids
        let mut pairs = Vec::with_capacity(header.id_map.len());
        for [original, stored] in &header.id_map {
            let original = u16::try_from(*original).map_err(|_| FstError::LabelOverflow(*original))?;
            let stored = u16::try_from(*stored).map_err(|_| FstError::LabelOverflow(*stored))?;
            pairs.push((stored, original));
        }
        pairs.sort_unstable();
        if pairs.iter().enumerate().any(|(i, &(stored, _))| stored as usize != i + 1) {
            return Err(FstError::header(path, "id_map stored ids must be 1..=K"));
        }
        let original_ids = pairs.into_iter().map(|(_, o)| o).collect();
        LabelMap::with_classes(header.height, header.width, raw, original_ids)?
    };
    if map.num_classes() == 0 {
        log::warn!("label map {} has no labeled pixels", path.display());
    }
    Ok(map)
}

/// Writes `<name>.labels.json` and `<name>.labels.bin` with contiguous ids,
/// recording the original ids in the header.
pub fn save_labels(labels: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bin = binary_path_for(path);
    let mut bytes = Vec::with_capacity(labels.labels.len() * 2);
    for v in &labels.labels {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&bin, bytes).map_err(|e| FstError::io(&bin, e))?;
    let header = LabelHeader {
        height: labels.height,
        width: labels.width,
        dtype: "u16le".into(),
        layout: "row-major".into(),
        data: file_name_of(&bin),
        num_classes: labels.num_classes(),
        id_map: labels
            .original_ids
            .iter()
            .enumerate()
            .map(|(i, &orig)| [orig as u64, i as u64 + 1])
            .collect(),
    };
    write_json(path, &header)
}
