use fst3d::metrics::evaluate;
use fst3d::sampling::{count_components, sample_random, sample_sss, SampleSize};
use fst3d::svm::{solve_binary, svm_train, Dataset, SvmParams};
use fst3d::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn blobs(seed: u64, n: usize, dim: usize, classes: u16) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f32>> = (0..classes).map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
    let mut samples = Vec::new();
    let mut targets = Vec::new();
    for i in 0..n {
        let k = (i % classes as usize) as u16;
        samples.extend(centers[k as usize].iter().map(|c| c + rng.random_range(-1.0f32..1.0)));
        targets.push(k + 1);
    }
    Dataset {
        dim,
        samples,
        targets,
        coords: (0..n).map(|i| (0, i)).collect(),
        groups: std::iter::once(0..dim).collect(),
    }
}

fn scene(seed: u64) -> (HsiCube, LabelMap) {
    generate_synthetic(&SynthSpec {
        height: 24,
        width: 24,
        bands: 6,
        num_classes: 4,
        noise_sigma: 0.1,
        layout: 3,
        seed,
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn predictions_ignore_column_scaling(seed in any::<u64>(), scales in prop::collection::vec(0.01f32..100.0, 5)) {
        let data = blobs(seed, 30, 5, 3);
        let mut scaled = data.clone();
        for (i, v) in scaled.samples.iter_mut().enumerate() {
            *v *= scales[i % 5];
        }
        let params = SvmParams { seed, ..SvmParams::default() };
        let a = svm_train(&data, params).unwrap();
        let b = svm_train(&scaled, params).unwrap();
        let test = blobs(seed ^ 7, 30, 5, 3);
        let mut test_scaled = test.samples.clone();
        for (i, v) in test_scaled.iter_mut().enumerate() {
            *v *= scales[i % 5];
        }
        prop_assert_eq!(a.predict_rows(&test.samples, 5).unwrap(), b.predict_rows(&test_scaled, 5).unwrap());
    }

    #[test]
    fn dual_variables_stay_in_the_box(seed in any::<u64>(), c in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..40 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..40).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let sol = solve_binary(&x, 3, &y, c, 1e-4, 500, seed);
        prop_assert!(sol.alpha.iter().all(|&a| (0.0..=c).contains(&a)));
        // w is the dual combination of the samples
        for j in 0..3 {
            let w: f64 = (0..40).map(|i| sol.alpha[i] * y[i] * x[i * 3 + j]).sum();
            prop_assert!((w - sol.weights[j]).abs() <= 1e-9 * (1.0 + w.abs()));
        }
    }

    #[test]
    fn random_masks_respect_availability(seed in any::<u64>(), n in 1usize..80) {
        let (_, labels) = scene(seed % 5);
        let mask = sample_random(&labels, SampleSize::PerClass(n), seed).unwrap();
        let counts = labels.class_counts();
        for (got, &avail) in mask.per_class.iter().zip(&counts) {
            prop_assert_eq!(*got, n.min(avail));
        }
        prop_assert_eq!(mask.per_class.len(), labels.num_classes());
        prop_assert!(mask.pixels.iter().all(|&(r, c)| labels.get(r, c) != 0));
        prop_assert!(mask.pixels.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn sss_sites_are_connected(seed in any::<u64>(), n in 1usize..40) {
        let (_, labels) = scene(seed % 5);
        let mask = sample_sss(&labels, n, seed).unwrap();
        for k in 1..=labels.num_classes() as u16 {
            let own: Vec<_> = mask.pixels.iter().copied().filter(|&(r, c)| labels.get(r, c) == k).collect();
            prop_assert!(!own.is_empty());
            prop_assert_eq!(count_components(&own, 24, 24), 1);
        }
    }

    #[test]
    fn accuracy_measures_are_bounded(seed in any::<u64>()) {
        let (_, labels) = scene(seed % 5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pred: Vec<u16> = labels.labels().iter().map(|_| rng.random_range(1..=4)).collect();
        let pred = LabelMap::with_classes(24, 24, pred, vec![1, 2, 3, 4]).unwrap();
        let mask = sample_random(&labels, SampleSize::PerClass(3), seed).unwrap();
        let report = evaluate(&labels, &pred, &mask).unwrap();
        let total: u64 = report.confusion.iter().flatten().sum();
        prop_assert_eq!(total as usize, labels.labeled_pixels().len() - mask.len());
        prop_assert!((0.0..=1.0).contains(&report.overall_accuracy));
        prop_assert!((0.0..=1.0).contains(&report.average_accuracy));
        prop_assert!(report.kappa <= 1.0);
    }
}

#[test]
fn raw_baseline_learns_the_block_scene() {
    let (cube, labels) = generate_synthetic(&SynthSpec {
        height: 24,
        width: 24,
        bands: 16,
        num_classes: 4,
        noise_sigma: 0.01,
        layout: 3,
        seed: 1,
    })
    .unwrap();
    let mask = sample_random(&labels, SampleSize::PerClass(10), 3).unwrap();
    let data = Dataset::gather(&cube, &labels, &mask.pixels).unwrap();
    let model = svm_train(&data, SvmParams::default()).unwrap();
    let pred = model.classify(&cube).unwrap();
    let report = evaluate(&labels, &pred, &mask).unwrap();
    assert!(report.overall_accuracy > 0.95, "{}", report.overall_accuracy);
}
