//! Training masks: per-class random draws and strictly site-specific
//! (single connected site per class) region growth, plus the nearest
//! training pixel label-interpolation diagnostic.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FstError, Result};
use crate::exec::Execution;
use crate::hsi::{read_header, write_json, LabelMap};

/// Attempts at growing a site before settling for the largest one.
pub const SSS_ATTEMPTS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    Sss,
}

/// How many pixels to draw from each class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleSize {
    PerClass(usize),
    /// Fraction of each class, rounded, at least one pixel.
    Fraction(f64),
}

impl SampleSize {
    fn validate(&self) -> Result<()> {
        match *self {
            SampleSize::PerClass(0) => Err(FstError::Sampling("per-class count must be >= 1".into())),
            SampleSize::Fraction(f) if !(f > 0.0 && f <= 1.0) => Err(FstError::Sampling(format!(
                "fraction must lie in (0, 1], got {f}"
            ))),
            _ => Ok(()),
        }
    }

    fn for_class(&self, population: usize) -> usize {
        match *self {
            SampleSize::PerClass(n) => n.min(population),
            SampleSize::Fraction(f) => ((f * population as f64).round() as usize).clamp(1, population),
        }
    }
}

/// Selected training pixels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainMask {
    pub height: usize,
    pub width: usize,
    pub strategy: Strategy,
    pub seed: u64,
    /// Selected count per class, index `k - 1`.
    pub per_class: Vec<usize>,
    /// `[row, col]` pairs, sorted row-major.
    pub pixels: Vec<(usize, usize)>,
}

impl TrainMask {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Dense membership grid, row-major.
    pub fn grid(&self) -> Vec<bool> {
        let mut g = vec![false; self.height * self.width];
        for &(r, c) in &self.pixels {
            g[r * self.width + c] = true;
        }
        g
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_header(path.as_ref())
    }

    fn from_selection(labels: &LabelMap, strategy: Strategy, seed: u64, mut pixels: Vec<(usize, usize)>) -> Self {
        pixels.sort_unstable();
        let mut per_class = vec![0; labels.num_classes()];
        for &(r, c) in &pixels {
            per_class[labels.get(r, c) as usize - 1] += 1;
        }
        TrainMask {
            height: labels.height(),
            width: labels.width(),
            strategy,
            seed,
            per_class,
            pixels,
        }
    }
}

fn check_classes(labels: &LabelMap) -> Result<()> {
    if labels.num_classes() == 0 {
        return Err(FstError::Sampling("label map has no classes".into()));
    }
    Ok(())
}

/// Uniform sampling without replacement inside each class.
pub fn sample_random(labels: &LabelMap, size: SampleSize, seed: u64) -> Result<TrainMask> {
    size.validate()?;
    check_classes(labels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::new();
    for k in 1..=labels.num_classes() as u16 {
        let pool = labels.pixels_of(k);
        let take = size.for_class(pool.len());
        chosen.extend(index::sample(&mut rng, pool.len(), take).into_iter().map(|i| pool[i]));
    }
    Ok(TrainMask::from_selection(labels, Strategy::Random, seed, chosen))
}

fn neighbours(r: usize, c: usize, h: usize, w: usize) -> impl Iterator<Item = (usize, usize)> {
    let up = r.checked_sub(1).map(|r| (r, c));
    let down = (r + 1 < h).then_some((r + 1, c));
    let left = c.checked_sub(1).map(|c| (r, c));
    let right = (c + 1 < w).then_some((r, c + 1));
    [up, down, left, right].into_iter().flatten()
}

/// Grows one 4-connected site of class `k` from `start`, adding a uniformly
/// random frontier pixel at a time.
fn grow_site(
    labels: &LabelMap,
    class: u16,
    start: (usize, usize),
    target: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    let (h, w) = (labels.height(), labels.width());
    let mut in_site = BTreeSet::from([start]);
    let mut queued = BTreeSet::new();
    let mut frontier = Vec::new();
    let mut site = vec![start];
    let mut push_frontier = |p: (usize, usize), frontier: &mut Vec<(usize, usize)>, in_site: &BTreeSet<(usize, usize)>| {
        for q in neighbours(p.0, p.1, h, w) {
            if labels.get(q.0, q.1) == class && !in_site.contains(&q) && queued.insert(q) {
                frontier.push(q);
            }
        }
    };
    push_frontier(start, &mut frontier, &in_site);
    while site.len() < target && !frontier.is_empty() {
        let next = frontier.swap_remove(rng.random_range(0..frontier.len()));
        in_site.insert(next);
        site.push(next);
        push_frontier(next, &mut frontier, &in_site);
    }
    site
}

/// One connected site per class, grown from a random seed pixel. If growth
/// stalls short of `per_class`, growth restarts from a fresh seed pixel, up
/// to [`SSS_ATTEMPTS`] tries, keeping the largest site.
pub fn sample_sss(labels: &LabelMap, per_class: usize, seed: u64) -> Result<TrainMask> {
    SampleSize::PerClass(per_class).validate()?;
    check_classes(labels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::new();
    for k in 1..=labels.num_classes() as u16 {
        let pool = labels.pixels_of(k);
        if pool.is_empty() {
            return Err(FstError::Sampling(format!("class {k} has no labeled pixels")));
        }
        let target = per_class.min(pool.len());
        let mut best: Vec<(usize, usize)> = Vec::new();
        for _ in 0..SSS_ATTEMPTS {
            let start = pool[rng.random_range(0..pool.len())];
            let site = grow_site(labels, k, start, target, &mut rng);
            if site.len() > best.len() {
                best = site;
            }
            if best.len() >= target {
                break;
            }
        }
        chosen.extend(best);
    }
    Ok(TrainMask::from_selection(labels, Strategy::Sss, seed, chosen))
}

/// Number of 4-connected components formed by `pixels`.
pub fn count_components(pixels: &[(usize, usize)], height: usize, width: usize) -> usize {
    let set: BTreeSet<(usize, usize)> = pixels.iter().copied().collect();
    let mut seen = BTreeSet::new();
    let mut components = 0;
    for &p in &set {
        if !seen.insert(p) {
            continue;
        }
        components += 1;
        let mut stack = vec![p];
        while let Some((r, c)) = stack.pop() {
            for q in neighbours(r, c, height, width) {
                if set.contains(&q) && seen.insert(q) {
                    stack.push(q);
                }
            }
        }
    }
    components
}

/// Labels every labeled pixel with the class of its nearest training pixel
/// (ties go to the smallest row, then column) and returns the fraction of
/// labeled pixels, training pixels included, that come out right.
pub fn knn1_diagnostic(labels: &LabelMap, mask: &TrainMask) -> Result<f64> {
    if mask.is_empty() {
        return Err(FstError::Sampling("training mask is empty".into()));
    }
    let train: Vec<(i64, i64, u16)> = mask
        .pixels
        .iter()
        .map(|&(r, c)| (r as i64, c as i64, labels.get(r, c)))
        .collect();
    let labeled = labels.labeled_pixels();
    if labeled.is_empty() {
        return Ok(0.0);
    }
    let hits: Vec<bool> = Execution::default().map(labeled.clone(), |(r, c)| {
        let (r, c) = (r as i64, c as i64);
        // mask pixels are sorted, so the first minimum wins ties
        let mut best = (i64::MAX, 0u16);
        for &(tr, tc, k) in &train {
            let d = (tr - r) * (tr - r) + (tc - c) * (tc - c);
            if d < best.0 {
                best = (d, k);
            }
        }
        best.1 == labels.get(r as usize, c as usize)
    });
    Ok(hits.iter().filter(|&&h| h).count() as f64 / labeled.len() as f64)
}
