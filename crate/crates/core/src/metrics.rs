//! Accuracy metrics and classification maps.

use std::io::Cursor;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FstError, Result};
use crate::hsi::{write_json, LabelMap};
use crate::sampling::TrainMask;

/// Confusion matrix (rows true, columns predicted) and derived scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub num_classes: usize,
    pub confusion: Vec<Vec<u64>>,
    pub overall_accuracy: f64,
    pub average_accuracy: f64,
    /// `None` for classes without test pixels.
    pub per_class_accuracy: Vec<Option<f64>>,
    pub kappa: f64,
    pub test_counts: Vec<u64>,
}

/// Scores `predicted` against `truth` on labeled pixels outside `mask`.
pub fn evaluate(truth: &LabelMap, predicted: &LabelMap, mask: &TrainMask) -> Result<EvalReport> {
    if (truth.height(), truth.width()) != (predicted.height(), predicted.width())
        || (truth.height(), truth.width()) != (mask.height, mask.width)
    {
        return Err(FstError::Shape(format!(
            "truth {}x{}, prediction {}x{}, mask {}x{}",
            truth.height(),
            truth.width(),
            predicted.height(),
            predicted.width(),
            mask.height,
            mask.width
        )));
    }
    let k = truth.num_classes().max(predicted.num_classes());
    let training = mask.grid();
    let mut confusion = vec![vec![0u64; k]; k];
    for (i, (&t, &p)) in truth.labels().iter().zip(predicted.labels()).enumerate() {
        if t == 0 || training[i] {
            continue;
        }
        if p == 0 {
            return Err(FstError::Shape(format!(
                "test pixel ({}, {}) has no prediction",
                i / truth.width(),
                i % truth.width()
            )));
        }
        confusion[t as usize - 1][p as usize - 1] += 1;
    }
    report_from_confusion(confusion)
}

/// Scores from a square confusion matrix.
pub fn report_from_confusion(confusion: Vec<Vec<u64>>) -> Result<EvalReport> {
    let k = confusion.len();
    let test_counts: Vec<u64> = confusion.iter().map(|row| row.iter().sum()).collect();
    let total: u64 = test_counts.iter().sum();
    if total == 0 {
        return Err(FstError::EmptyTestSet);
    }
    let n = total as f64;
    let diag: u64 = (0..k).map(|i| confusion[i][i]).sum();
    let oa = diag as f64 / n;
    let per_class: Vec<Option<f64>> = (0..k)
        .map(|i| (test_counts[i] > 0).then(|| confusion[i][i] as f64 / test_counts[i] as f64))
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let aa = present.iter().sum::<f64>() / present.len() as f64;
    let col_sums: Vec<u64> = (0..k).map(|j| confusion.iter().map(|row| row[j]).sum()).collect();
    let pe: f64 = test_counts
        .iter()
        .zip(&col_sums)
        .map(|(&r, &c)| r as f64 * c as f64)
        .sum::<f64>()
        / (n * n);
    let kappa = if pe < 1.0 {
        (oa - pe) / (1.0 - pe)
    } else if oa == 1.0 {
        1.0
    } else {
        0.0
    };
    Ok(EvalReport {
        num_classes: k,
        confusion,
        overall_accuracy: oa,
        average_accuracy: aa,
        per_class_accuracy: per_class,
        kappa,
        test_counts,
    })
}

impl EvalReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    /// Confusion matrix as CSV with a header row of predicted class ids.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true\\pred");
        for j in 1..=self.num_classes {
            out.push_str(&format!(",{j}"));
        }
        out.push('\n');
        for (i, row) in self.confusion.iter().enumerate() {
            out.push_str(&(i + 1).to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Class colours; entry 0 (unlabeled) is black.
pub const PALETTE: [[u8; 3]; 17] = [
    [0, 0, 0],
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [255, 250, 200],
    [128, 0, 0],
    [170, 255, 195],
];

/// Encodes a label map as an RGB PNG, one pixel per cell.
pub fn render_map(map: &LabelMap, palette: &[[u8; 3]]) -> Result<Vec<u8>> {
    let mut rgb = Vec::with_capacity(map.labels().len() * 3);
    for &id in map.labels() {
        let colour = palette.get(id as usize).ok_or(FstError::PaletteOverflow {
            class: id,
            palette: palette.len(),
        })?;
        rgb.extend_from_slice(colour);
    }
    let img = image::RgbImage::from_raw(map.width() as u32, map.height() as u32, rgb)
        .ok_or_else(|| FstError::Image("buffer size".into()))?;
    let mut bytes = Vec::new();
    img.write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| FstError::Image(e.to_string()))?;
    Ok(bytes)
}

/// Decodes a PNG written by [`render_map`] back into class ids.
pub fn decode_map(png: &[u8], palette: &[[u8; 3]]) -> Result<Vec<u16>> {
    let img = image::load_from_memory_with_format(png, image::ImageFormat::Png)
        .map_err(|e| FstError::Image(e.to_string()))?
        .to_rgb8();
    img.pixels()
        .map(|p| {
            palette
                .iter()
                .position(|c| c == &p.0)
                .map(|i| i as u16)
                .ok_or_else(|| FstError::Image(format!("colour {:?} not in palette", p.0)))
        })
        .collect()
}
