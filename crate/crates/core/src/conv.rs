//! Reflect-padded separable 3-D correlation with spectral striding.
//!
//! Volumes are stored pixel-major (`(row * width + col) * bands + band`), so
//! the spectral pass runs over contiguous memory. Padding mirrors the volume
//! about its edges including the edge sample, with `(M - 1) / 2` samples
//! before and the remainder after, so spatial sizes are preserved. Sums are
//! accumulated in `f64`; outputs are stored as `f32`.

use num_complex::Complex64;

use crate::error::{FstError, Result};
use crate::hsi::HsiCube;

/// A real `height x width x bands` volume, pixel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub data: Vec<f32>,
}

impl Volume {
    pub fn zeros(height: usize, width: usize, bands: usize) -> Self {
        Volume {
            height,
            width,
            bands,
            data: vec![0.0; height * width * bands],
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        bands: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * bands);
        for r in 0..height {
            for c in 0..width {
                for b in 0..bands {
                    data.push(f(r, c, b));
                }
            }
        }
        Volume {
            height,
            width,
            bands,
            data,
        }
    }

    /// Transposes a band-sequential cube into pixel-major order.
    pub fn from_cube(cube: &HsiCube) -> Self {
        Volume::from_fn(cube.height(), cube.width(), cube.bands(), |r, c, b| {
            cube.get(r, c, b)
        })
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, band: usize) -> f32 {
        self.data[(row * self.width + col) * self.bands + band]
    }

    /// The spectral vector at one pixel.
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.width + col) * self.bands;
        &self.data[start..start + self.bands]
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|&v| (v as f64) * (v as f64)).sum()
    }
}

/// Padding before and after along an axis for a window of `support` samples.
pub fn pad_amounts(support: usize) -> (usize, usize) {
    let before = (support - 1) / 2;
    (before, support - 1 - before)
}

/// Symmetric reflection of `i` (shifted by the leading pad) into `0..n`.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let j = if i < 0 {
        -i - 1
    } else if i >= n {
        2 * n - 1 - i
    } else {
        i
    };
    j as usize
}

/// Number of samples kept after striding `n` by `stride` from offset 0.
pub fn strided_len(n: usize, stride: usize) -> usize {
    n.div_ceil(stride)
}

/// A volume reflect-padded for one window support, in `f64`.
pub(crate) struct Padded {
    support: [usize; 3],
    height: usize,
    width: usize,
    bands: usize,
    /// padded extents
    pw: usize,
    pb: usize,
    data: Vec<f64>,
}

impl Padded {
    pub(crate) fn new(volume: &Volume, support: [usize; 3]) -> Result<Self> {
        let extents = [volume.height, volume.width, volume.bands];
        for axis in 0..3 {
            if support[axis] > 2 * extents[axis] {
                return Err(FstError::WindowTooLarge {
                    axis,
                    support: support[axis],
                    extent: extents[axis],
                });
            }
        }
        let (ph, pw, pb) = (
            volume.height + support[0] - 1,
            volume.width + support[1] - 1,
            volume.bands + support[2] - 1,
        );
        let before = support.map(|m| pad_amounts(m).0 as isize);
        let rows: Vec<usize> = (0..ph)
            .map(|i| reflect(i as isize - before[0], volume.height))
            .collect();
        let cols: Vec<usize> = (0..pw)
            .map(|i| reflect(i as isize - before[1], volume.width))
            .collect();
        let bands: Vec<usize> = (0..pb)
            .map(|i| reflect(i as isize - before[2], volume.bands))
            .collect();
        let mut data = Vec::with_capacity(ph * pw * pb);
        for &r in &rows {
            for &c in &cols {
                let px = volume.pixel(r, c);
                data.extend(bands.iter().map(|&b| px[b] as f64));
            }
        }
        Ok(Padded {
            support,
            height: volume.height,
            width: volume.width,
            bands: volume.bands,
            pw,
            pb,
            data,
        })
    }

    /// Every output position.
    pub(crate) fn full(&self) -> Region {
        Region {
            rows: 0..self.height,
            cols: 0..self.width,
        }
    }

    /// Correlation with the averaging window `factors`, striding the band axis.
    pub(crate) fn average(&self, factors: &[Vec<f64>; 3], stride: usize) -> Volume {
        self.average_in(factors, stride, &self.full())
    }

    /// [`Padded::average`] evaluated only on `region`; the result is
    /// region-sized.
    pub(crate) fn average_in(&self, factors: &[Vec<f64>; 3], stride: usize, region: &Region) -> Volume {
        let [fx, fy, fb] = factors;
        let bo = strided_len(self.bands, stride);
        let (oh, ow) = (region.rows.len(), region.cols.len());
        let (prh, prw) = (oh + self.support[0] - 1, ow + self.support[1] - 1);
        // spectral pass over the padded pixels the region reaches
        let mut a = vec![0.0f64; prh * prw * bo];
        for pr in 0..prh {
            for pc in 0..prw {
                let src = self.padded_pixel(region.rows.start + pr, region.cols.start + pc);
                let dst = &mut a[(pr * prw + pc) * bo..][..bo];
                for (k, out) in dst.iter_mut().enumerate() {
                    let s = &src[k * stride..k * stride + fb.len()];
                    *out = s.iter().zip(fb.iter()).map(|(v, w)| v * w).sum();
                }
            }
        }
        // column pass
        let mut b = vec![0.0f64; prh * ow * bo];
        for pr in 0..prh {
            for c in 0..ow {
                let dst = &mut b[(pr * ow + c) * bo..][..bo];
                for (t, w) in fy.iter().enumerate() {
                    let src = &a[(pr * prw + c + t) * bo..][..bo];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += w * s;
                    }
                }
            }
        }
        // row pass
        let mut acc = vec![0.0f64; bo];
        let mut out = Volume::zeros(oh, ow, bo);
        for r in 0..oh {
            for c in 0..ow {
                acc.iter_mut().for_each(|v| *v = 0.0);
                for (t, w) in fx.iter().enumerate() {
                    let src = &b[((r + t) * ow + c) * bo..][..bo];
                    for (d, s) in acc.iter_mut().zip(src) {
                        *d += w * s;
                    }
                }
                let dst = &mut out.data[(r * ow + c) * bo..][..bo];
                for (d, s) in dst.iter_mut().zip(&acc) {
                    *d = *s as f32;
                }
            }
        }
        out
    }

    #[inline]
    fn padded_pixel(&self, pr: usize, pc: usize) -> &[f64] {
        &self.data[(pr * self.pw + pc) * self.pb..][..self.pb]
    }

    /// Spectral pass with a complex factor: one complex value per padded
    /// pixel the region reaches and per kept band.
    fn spectral_pass(&self, fb: &[Complex64], stride: usize, region: &Region) -> Vec<Complex64> {
        let bo = strided_len(self.bands, stride);
        let (prh, prw) = (
            region.rows.len() + self.support[0] - 1,
            region.cols.len() + self.support[1] - 1,
        );
        let mut a = vec![Complex64::new(0.0, 0.0); prh * prw * bo];
        for pr in 0..prh {
            for pc in 0..prw {
                let src = self.padded_pixel(region.rows.start + pr, region.cols.start + pc);
                let dst = &mut a[(pr * prw + pc) * bo..][..bo];
                for (k, out) in dst.iter_mut().enumerate() {
                    let s = &src[k * stride..k * stride + fb.len()];
                    let (mut re, mut im) = (0.0, 0.0);
                    for (v, w) in s.iter().zip(fb) {
                        re += v * w.re;
                        im += v * w.im;
                    }
                    *out = Complex64::new(re, im);
                }
            }
        }
        a
    }

    fn column_pass(&self, a: &[Complex64], fy: &[Complex64], bo: usize, region: &Region) -> Vec<Complex64> {
        let ow = region.cols.len();
        let prh = region.rows.len() + self.support[0] - 1;
        let prw = ow + self.support[1] - 1;
        let mut b = vec![Complex64::new(0.0, 0.0); prh * ow * bo];
        for pr in 0..prh {
            for c in 0..ow {
                let dst = &mut b[(pr * ow + c) * bo..][..bo];
                for (t, w) in fy.iter().enumerate() {
                    let src = &a[(pr * prw + c + t) * bo..][..bo];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += w * s;
                    }
                }
            }
        }
        b
    }

    fn row_pass_modulus(&self, b: &[Complex64], fx: &[Complex64], bo: usize, region: &Region) -> Volume {
        let (oh, ow) = (region.rows.len(), region.cols.len());
        let mut acc = vec![Complex64::new(0.0, 0.0); bo];
        let mut out = Volume::zeros(oh, ow, bo);
        for r in 0..oh {
            for c in 0..ow {
                acc.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                for (t, w) in fx.iter().enumerate() {
                    let src = &b[((r + t) * ow + c) * bo..][..bo];
                    for (d, s) in acc.iter_mut().zip(src) {
                        *d += w * s;
                    }
                }
                let dst = &mut out.data[(r * ow + c) * bo..][..bo];
                for (d, s) in dst.iter_mut().zip(&acc) {
                    *d = s.norm() as f32;
                }
            }
        }
        out
    }

    /// `|V * g_m|` for one separable complex filter.
    pub(crate) fn modulus(&self, factors: &[Vec<Complex64>; 3], stride: usize) -> Volume {
        self.modulus_in(factors, stride, &self.full())
    }

    pub(crate) fn modulus_in(&self, factors: &[Vec<Complex64>; 3], stride: usize, region: &Region) -> Volume {
        let bo = strided_len(self.bands, stride);
        let a = self.spectral_pass(&factors[2], stride, region);
        let b = self.column_pass(&a, &factors[1], bo, region);
        self.row_pass_modulus(&b, &factors[0], bo, region)
    }

    /// `|V * g_m|` on `region` for many modulation indices of the same
    /// rectangular support, sharing the spectral and column passes between
    /// indices that agree on those axes. `emit` receives each index with its
    /// response.
    pub(crate) fn modulus_family(
        &self,
        indices: &[[usize; 3]],
        stride: usize,
        region: &Region,
        mut emit: impl FnMut([usize; 3], Volume),
    ) {
        use crate::filterbank::axis_factor;
        use std::collections::BTreeMap;

        let bo = strided_len(self.bands, stride);
        // band index -> column index -> row indices
        let mut tree: BTreeMap<usize, BTreeMap<usize, Vec<usize>>> = BTreeMap::new();
        for m in indices {
            tree.entry(m[2]).or_default().entry(m[1]).or_default().push(m[0]);
        }
        for (m3, cols) in tree {
            let a = self.spectral_pass(&axis_factor(self.support[2], m3), stride, region);
            for (m2, rows) in cols {
                let b = self.column_pass(&a, &axis_factor(self.support[1], m2), bo, region);
                for m1 in rows {
                    let v = self.row_pass_modulus(&b, &axis_factor(self.support[0], m1), bo, region);
                    emit([m1, m2, m3], v);
                }
            }
        }
    }
}

/// A rectangle of output positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Region {
    pub rows: std::ops::Range<usize>,
    pub cols: std::ops::Range<usize>,
}

impl Region {
    /// Grown by `by` on every side, clipped to `height x width`.
    pub(crate) fn grow(&self, by: [usize; 2], height: usize, width: usize) -> Region {
        Region {
            rows: self.rows.start.saturating_sub(by[0])..(self.rows.end + by[0]).min(height),
            cols: self.cols.start.saturating_sub(by[1])..(self.cols.end + by[1]).min(width),
        }
    }

    /// The same rectangle in coordinates relative to `origin`.
    pub(crate) fn relative_to(&self, origin: &Region) -> Region {
        Region {
            rows: self.rows.start - origin.rows.start..self.rows.end - origin.rows.start,
            cols: self.cols.start - origin.cols.start..self.cols.end - origin.cols.start,
        }
    }
}

/// Local average of `volume` with a separable real window, keeping bands
/// `0, stride, 2 stride, ...`. Spatial size is preserved.
pub fn conv3d_avg(volume: &Volume, window: &[Vec<f64>; 3], stride: usize) -> Result<Volume> {
    check_kernel(window.each_ref().map(Vec::len), stride)?;
    let support = window.each_ref().map(Vec::len);
    Ok(Padded::new(volume, support)?.average(window, stride))
}

/// Pointwise modulus of the correlation of `volume` with a separable complex
/// filter, keeping bands `0, stride, 2 stride, ...`.
pub fn conv3d_mod(volume: &Volume, filter: &[Vec<Complex64>; 3], stride: usize) -> Result<Volume> {
    let support = filter.each_ref().map(Vec::len);
    check_kernel(support, stride)?;
    Ok(Padded::new(volume, support)?.modulus(filter, stride))
}

fn check_kernel(support: [usize; 3], stride: usize) -> Result<()> {
    if support.contains(&0) {
        return Err(FstError::Config("kernel has an empty axis".into()));
    }
    if stride == 0 {
        return Err(FstError::Config("stride must be positive".into()));
    }
    Ok(())
}
