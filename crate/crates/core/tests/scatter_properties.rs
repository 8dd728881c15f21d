use fst3d::conv::{conv3d_mod, Volume};
use fst3d::scatter::{scatter_patched_with, scatter_traced, scatter_with, BlockKind, Transform};
use fst3d::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_cube(seed: u64, h: usize, w: usize, b: usize) -> HsiCube {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    HsiCube::from_fn(h, w, b, |_, _, _| rng.random_range(-1.0..1.0))
}

fn support() -> impl Strategy<Value = [usize; 3]> {
    (1usize..=4, 1usize..=4, 1usize..=4).prop_map(|(a, b, c)| [a, b, c])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // |f (x) g_m| and |f (x) g_{M-m}| coincide on real input, which is what
    // makes dropping one of each pair lossless
    #[test]
    fn conjugate_partners_have_equal_moduli(seed in any::<u64>(), m in support()) {
        let bank = build_bank(LayerSpec::new(m, 1).unwrap(), false).unwrap();
        let cube = random_cube(seed, 6, 5, 7);
        let v = Volume::from_cube(&cube);
        for &idx in bank.indices() {
            let a = conv3d_mod(&v, &bank.modulated_factors(idx), 1).unwrap();
            let b = conv3d_mod(&v, &bank.modulated_factors(idx.partner(m)), 1).unwrap();
            for (x, y) in a.data.iter().zip(&b.data) {
                prop_assert!((x - y).abs() <= 1e-6 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn tiles_match_whole_run(seed in any::<u64>(), patch in 1usize..12, gabor in any::<bool>()) {
        let cube = random_cube(seed, 11, 9, 6);
        let cfg = ScatterConfig::from_supports([3, 3, 3], [3, 1, 3], [1, 3, 2]).unwrap();
        let transform = if gabor { Transform::Gabor } else { Transform::Scattering };
        let whole = if gabor { scatter_gabor(&cube, &cfg).unwrap() } else { scatter(&cube, &cfg).unwrap() };
        let tiled = scatter_patched_with(&cube, &cfg, transform, patch, Execution::Parallel).unwrap();
        prop_assert_eq!(&tiled.layout, &whole.layout);
        for (a, b) in tiled.data.iter().zip(&whole.data) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn modulus_orders_are_nonnegative(seed in any::<u64>()) {
        let cube = random_cube(seed, 7, 7, 8);
        let feats = scatter(&cube, &ScatterConfig::uniform([3, 3, 3]).unwrap()).unwrap();
        for rg in feats.layout.ranges_where(|k| !matches!(k, BlockKind::Zero)) {
            for r in 0..7 {
                for c in 0..7 {
                    prop_assert!(feats.pixel(r, c)[rg.clone()].iter().all(|&v| v >= 0.0));
                }
            }
        }
    }

    #[test]
    fn non_expansive(seed in any::<u64>(), eps in 1e-3f32..1.0) {
        let cfg = ScatterConfig::uniform([3, 3, 3]).unwrap();
        let f = random_cube(seed, 8, 8, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let h = HsiCube::from_fn(8, 8, 9, |r, c, b| f.get(r, c, b) + eps * rng.random_range(-1.0f32..1.0));
        let (pf, ph) = (scatter(&f, &cfg).unwrap(), scatter(&h, &cfg).unwrap());
        let d = |a: &[f32], b: &[f32]| a.iter().zip(b).map(|(x, y)| ((x - y) as f64).powi(2)).sum::<f64>().sqrt();
        prop_assert!(d(&pf.data, &ph.data) <= d(f.data(), h.data()) * (1.0 + 1e-6));
    }
}

#[test]
fn shift_moves_first_layer_moduli_in_the_interior() {
    let (h, w, b) = (10, 16, 8);
    let cube = random_cube(3, h, w, b);
    // cyclic shift by one pixel along x (rows)
    let shifted = HsiCube::from_fn(h, w, b, |r, c, k| cube.get((r + h - 1) % h, c, k));
    let cfg = ScatterConfig::uniform([3, 3, 3]).unwrap();
    let (_, a) = scatter_traced(&cube, &cfg).unwrap();
    let (_, s) = scatter_traced(&shifted, &cfg).unwrap();
    let radius = receptive_field(&cfg).0 / 2;
    for (u, us) in a.iter().zip(&s) {
        for r in radius..h - radius - 1 {
            for c in radius..w - radius {
                assert_eq!(u.pixel(r, c), us.pixel(r + 1, c), "row {r} col {c}");
            }
        }
    }
}

#[test]
fn sequential_and_parallel_agree_bitwise() {
    let cube = random_cube(8, 12, 10, 9);
    let cfg = ScatterConfig::uniform([3, 3, 3]).unwrap();
    let a = scatter_with(&cube, &cfg, Execution::Sequential).unwrap();
    let b = scatter_with(&cube, &cfg, Execution::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn strided_bands_shrink_every_order() {
    let cube = random_cube(2, 6, 6, 20);
    let cfg = ScatterConfig::uniform([3, 3, 5]).unwrap().with_strides([3, 2, 1]).unwrap();
    let feats = scatter(&cube, &cfg).unwrap();
    // 20 -> 7 -> 4 -> 4 bands
    let first = feats.layout.blocks.iter().find(|b| matches!(b.kind, BlockKind::First { .. })).unwrap();
    let second = feats.layout.blocks.iter().find(|b| matches!(b.kind, BlockKind::Second { .. })).unwrap();
    assert_eq!(feats.layout.blocks[0].len, 7);
    assert_eq!(first.len, 4);
    assert_eq!(second.len, 4);
}
