//! Prints the reference numbers the acceptance suite checks against.
//!
//!     cargo run --release -p fst3d --example pilot

use fst3d::pipeline::{draw_mask, train_and_evaluate};
use fst3d::sampling::{knn1_diagnostic, SampleSize, Strategy};
use fst3d::svm::SvmParams;
use fst3d::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn acceptance_spec() -> SynthSpec {
    let mut spec = SynthSpec {
        height: 64,
        width: 64,
        bands: 32,
        num_classes: 8,
        noise_sigma: 0.0,
        layout: 4,
        seed: 7,
    };
    spec.noise_sigma = spec.sigma_for_snr_db(10.0);
    spec
}

/// Sum of a few low-frequency cosines.
fn band_limited(seed: u64, n: usize, bands: usize) -> HsiCube {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<[f64; 5]> = (0..4)
        .map(|_| {
            [
                rng.random_range(0.0..0.08),
                rng.random_range(0.0..0.08),
                rng.random_range(0.0..0.08),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.5..1.5),
            ]
        })
        .collect();
    HsiCube::from_fn(n, n, bands, |r, c, b| {
        terms
            .iter()
            .map(|t| {
                t[4] * (std::f64::consts::TAU * (t[0] * r as f64 + t[1] * c as f64 + t[2] * b as f64) + t[3])
                    .cos()
            })
            .sum::<f64>() as f32
    })
}

fn main() -> Result<()> {
    let spec = acceptance_spec();
    println!("sigma {:.6}", spec.noise_sigma);
    let sigs = spec.signatures();
    let mut gap = f64::INFINITY;
    for i in 0..sigs.len() {
        for j in i + 1..sigs.len() {
            let d = sigs[i].iter().zip(&sigs[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            gap = gap.min(d);
        }
    }
    println!("min class-mean gap {gap:.6}");

    let (cube, labels) = generate_synthetic(&spec)?;
    let cfg = ScatterConfig::uniform([3, 3, 3])?;
    let t = std::time::Instant::now();
    let feats = scatter(&cube, &cfg)?;
    println!("D {} in {:?}", feats.dim(), t.elapsed());
    for seed in 0..10u64 {
        let mask = draw_mask(&labels, Strategy::Random, SampleSize::PerClass(5), seed)?;
        let params = SvmParams { seed, ..SvmParams::default() };
        let fst = train_and_evaluate(&feats, &labels, &mask, params)?.report.overall_accuracy;
        let raw = train_and_evaluate(&cube, &labels, &mask, params)?.report.overall_accuracy;
        println!("mask seed {seed}: fst {fst:.4} raw {raw:.4}");
    }

    let mut pass = 0;
    for seed in 0..20u64 {
        let e = energy_report(&band_limited(seed, 16, 16), &cfg)?;
        let ok = e.second_fraction() < e.first_fraction();
        pass += ok as usize;
        println!("energy seed {seed}: second {:.4} first {:.4}", e.second_fraction(), e.first_fraction());
    }
    println!("energy pass {pass}/20");

    for seed in 0..5u64 {
        let rnd = draw_mask(&labels, Strategy::Random, SampleSize::PerClass(20), seed)?;
        let sss = draw_mask(&labels, Strategy::Sss, SampleSize::PerClass(20), seed)?;
        println!(
            "knn seed {seed}: random {:.4} sss {:.4}",
            knn1_diagnostic(&labels, &rnd)?,
            knn1_diagnostic(&labels, &sss)?
        );
    }
    Ok(())
}
