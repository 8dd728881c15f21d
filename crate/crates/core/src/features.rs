//! Feature cubes on disk: a JSON header recording the block layout and
//! configuration hash, plus an `f32` little-endian pixel-major binary.

use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{FstError, Result};
use crate::hsi::{binary_path_for, file_name_of, read_header, write_json};
use crate::scatter::{FeatureCube, FeatureLayout, Tile};
use crate::svm::PixelFeatures;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureHeader {
    pub height: usize,
    pub width: usize,
    pub dim: usize,
    pub dtype: String,
    pub layout: String,
    pub data: String,
    pub cfg_hash: String,
    pub blocks: FeatureLayout,
}

impl FeatureHeader {
    fn new(height: usize, width: usize, layout: &FeatureLayout, cfg_hash: &str, bin: &Path) -> Self {
        FeatureHeader {
            height,
            width,
            dim: layout.dim(),
            dtype: "f32le".into(),
            layout: "pixel-major".into(),
            data: file_name_of(bin),
            cfg_hash: cfg_hash.to_string(),
            blocks: layout.clone(),
        }
    }
}

fn encode(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn decode(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

pub fn save_features(features: &FeatureCube, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bin = binary_path_for(path);
    fs::write(&bin, encode(&features.data)).map_err(|e| FstError::io(&bin, e))?;
    let header = FeatureHeader::new(
        features.height,
        features.width,
        &features.layout,
        &features.cfg_hash,
        &bin,
    );
    write_json(path, &header)
}

fn open_checked(path: &Path) -> Result<(FeatureHeader, PathBuf)> {
    let header: FeatureHeader = read_header(path)?;
    if header.dtype != "f32le" || header.layout != "pixel-major" {
        return Err(FstError::header(path, "expected f32le pixel-major features"));
    }
    if header.blocks.dim() != header.dim {
        return Err(FstError::header(path, "block layout disagrees with dim"));
    }
    let bin = path.parent().map(|d| d.join(&header.data)).unwrap_or_else(|| PathBuf::from(&header.data));
    let len = fs::metadata(&bin).map_err(|e| FstError::io(&bin, e))?.len() as usize;
    let expected = header.height * header.width * header.dim;
    if len != expected * 4 {
        return Err(FstError::SizeMismatch {
            expected,
            actual: len / 4,
        });
    }
    Ok((header, bin))
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureCube> {
    let path = path.as_ref();
    let (header, bin) = open_checked(path)?;
    let bytes = fs::read(&bin).map_err(|e| FstError::io(&bin, e))?;
    let data = decode(&bytes);
    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
        return Err(FstError::NonFinite { index });
    }
    Ok(FeatureCube {
        height: header.height,
        width: header.width,
        layout: header.blocks,
        cfg_hash: header.cfg_hash,
        data,
    })
}

/// Random access to a feature file without loading it whole.
pub struct FeatureReader {
    pub header: FeatureHeader,
    file: Mutex<File>,
    bin: PathBuf,
}

impl FeatureReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let (header, bin) = open_checked(path.as_ref())?;
        let file = File::open(&bin).map_err(|e| FstError::io(&bin, e))?;
        Ok(FeatureReader {
            header,
            file: Mutex::new(file),
            bin,
        })
    }

    fn read_span(&self, start_pixel: usize, pixels: usize, out: &mut Vec<f32>) -> Result<()> {
        let d = self.header.dim;
        let mut buf = vec![0u8; pixels * d * 4];
        let mut file = self.file.lock().expect("feature file lock");
        file.seek(SeekFrom::Start((start_pixel * d * 4) as u64))
            .and_then(|_| file.read_exact(&mut buf))
            .map_err(|e| FstError::io(&self.bin, e))?;
        out.extend(decode(&buf));
        Ok(())
    }

    pub fn read_pixel(&self, row: usize, col: usize, out: &mut Vec<f32>) -> Result<()> {
        self.read_span(row * self.header.width + col, 1, out)
    }

    pub fn read_row(&self, row: usize) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(self.header.width * self.header.dim);
        self.read_span(row * self.header.width, self.header.width, &mut out)?;
        Ok(out)
    }
}

impl PixelFeatures for FeatureReader {
    fn height(&self) -> usize {
        self.header.height
    }
    fn width(&self) -> usize {
        self.header.width
    }
    fn dim(&self) -> usize {
        self.header.dim
    }
    fn write_pixel(&self, row: usize, col: usize, out: &mut Vec<f32>) {
        // PixelFeatures is infallible; a file that validated on open and then
        // fails to read is reported loudly
        self.read_pixel(row, col, out)
            .unwrap_or_else(|e| panic!("feature file read failed: {e}"))
    }
    fn feature_groups(&self) -> Vec<std::ops::Range<usize>> {
        self.header.blocks.order_ranges()
    }
}

/// Streams tiles into a preallocated feature file.
pub struct FeatureWriter {
    file: Mutex<File>,
    bin: PathBuf,
    width: usize,
    dim: usize,
}

impl FeatureWriter {
    pub fn create(
        path: impl AsRef<Path>,
        height: usize,
        width: usize,
        layout: &FeatureLayout,
        cfg_hash: &str,
    ) -> Result<Self> {
        let path = path.as_ref();
        let bin = binary_path_for(path);
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&bin)
            .map_err(|e| FstError::io(&bin, e))?;
        file.set_len((height * width * layout.dim() * 4) as u64)
            .map_err(|e| FstError::io(&bin, e))?;
        write_json(path, &FeatureHeader::new(height, width, layout, cfg_hash, &bin))?;
        Ok(FeatureWriter {
            file: Mutex::new(file),
            bin,
            width,
            dim: layout.dim(),
        })
    }

    /// Writes the features of one tile at their place in the file.
    pub fn write_tile(&self, tile: &Tile, features: &FeatureCube) -> Result<()> {
        let n = tile.cols.len() * self.dim;
        let mut file = self.file.lock().expect("feature file lock");
        for (i, r) in tile.rows.clone().enumerate() {
            let offset = ((r * self.width + tile.cols.start) * self.dim * 4) as u64;
            file.seek(SeekFrom::Start(offset))
                .and_then(|_| file.write_all(&encode(&features.data[i * n..(i + 1) * n])))
                .map_err(|e| FstError::io(&self.bin, e))?;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        let file = self.file.into_inner().expect("feature file lock");
        file.sync_all().map_err(|e| FstError::io(&self.bin, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Execution;
    use crate::filterbank::ScatterConfig;
    use crate::hsi::HsiCube;
    use crate::scatter::{scatter, scatter_tiles, Transform};

    fn cube() -> HsiCube {
        HsiCube::from_fn(7, 5, 6, |r, c, b| ((r * 31 + c * 17 + b * 7) % 11) as f32 * 0.1)
    }

    #[test]
    fn save_load_round_trip() {
        let cfg = ScatterConfig::uniform([3, 3, 3]).unwrap();
        let feats = scatter(&cube(), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.json");
        save_features(&feats, &path).unwrap();
        assert_eq!(load_features(&path).unwrap(), feats);
        let reader = FeatureReader::open(&path).unwrap();
        let mut px = Vec::new();
        reader.read_pixel(3, 4, &mut px).unwrap();
        assert_eq!(px, feats.pixel(3, 4));
        assert_eq!(reader.read_row(6).unwrap().len(), 5 * feats.dim());
    }

    #[test]
    fn streamed_tiles_equal_whole_run() {
        let cfg = ScatterConfig::uniform([3, 3, 3]).unwrap();
        let c = cube();
        let whole = scatter(&c, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let layout = whole.layout.clone();
        let writer = FeatureWriter::create(&path, 7, 5, &layout, &cfg.hash()).unwrap();
        scatter_tiles(&c, &cfg, Transform::Scattering, 3, Execution::Parallel, |t, f| writer.write_tile(t, &f)).unwrap();
        writer.finish().unwrap();
        let back = load_features(&path).unwrap();
        assert_eq!(back.layout, whole.layout);
        let worst = back.data.iter().zip(&whole.data).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        assert!(worst <= 1e-6);
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let cfg = ScatterConfig::uniform([3, 3, 3]).unwrap();
        let feats = scatter(&cube(), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        save_features(&feats, &path).unwrap();
        let bin = dir.path().join("t.bin");
        let bytes = fs::read(&bin).unwrap();
        fs::write(&bin, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(load_features(&path), Err(FstError::SizeMismatch { .. })));
    }
}
