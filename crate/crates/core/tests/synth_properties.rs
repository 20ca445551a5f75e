mod common;

use std::collections::{BTreeMap, HashSet};

use common::oracle;
use dualev_core::synth::{
    apply_grid, generate_real, sample_rng, GridParams, Split, IMAGE_SIZE,
};
use dualev_core::{build_protocol, frequency_map, Category, ProtocolConfig};

fn small(held_out: Category, seed: u64) -> ProtocolConfig {
    ProtocolConfig {
        samples_per_class_train: 40,
        samples_per_class_test: 15,
        ..ProtocolConfig::leave_one_out(held_out, seed)
    }
}

/// Share of non-DC spectral energy within the lowest quarter of radial frequency,
/// computed with the direct DFT.
fn low_band_share(px: &[f64], n: usize) -> f64 {
    let spec = oracle::dft2(n, n, px);
    let max_radius = (2.0f64).sqrt() * (n / 2) as f64;
    let (mut low, mut total) = (0.0, 0.0);
    for u in 0..n {
        for v in 0..n {
            if u == 0 && v == 0 {
                continue;
            }
            let fu = u.min(n - u) as f64;
            let fv = v.min(n - v) as f64;
            let (re, im) = spec[u * n + v];
            let e = re * re + im * im;
            total += e;
            if (fu * fu + fv * fv).sqrt() <= 0.25 * max_radius {
                low += e;
            }
        }
    }
    low / total
}

#[test]
fn real_images_are_spectrally_smooth() {
    let images = generate_real(17, 100).unwrap();
    let shares: Vec<f64> = images
        .iter()
        .map(|im| low_band_share(im.pixels(), IMAGE_SIZE))
        .collect();
    let mean = shares.iter().sum::<f64>() / shares.len() as f64;
    let worst = shares.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(mean >= 0.8, "mean low-band share {mean}");
    assert!(worst >= 0.8, "worst low-band share {worst}");
}

#[test]
fn grid_period_four_shows_off_centre_peaks() {
    let n = IMAGE_SIZE;
    let c = n / 2;
    for seed in 0..20u64 {
        let base = &generate_real(seed, 1).unwrap()[0];
        let mut rng = sample_rng(seed, 99);
        let grid = apply_grid(base, GridParams::for_method(1).unwrap(), &mut rng).unwrap();
        assert_eq!(GridParams::for_method(1).unwrap().period, 4);
        let map = frequency_map(&grid);
        for (pr, pc) in [(c, c + n / 4), (c, c - n / 4), (c + n / 4, c), (c - n / 4, c)] {
            let peak = map.get(pr, pc);
            // local background: ring of bins at Chebyshev distance 2 around the peak
            let mut ring = Vec::new();
            for dr in -2i64..=2 {
                for dc in -2i64..=2 {
                    if dr.abs().max(dc.abs()) == 2 {
                        let r = (pr as i64 + dr).rem_euclid(n as i64) as usize;
                        let cc = (pc as i64 + dc).rem_euclid(n as i64) as usize;
                        ring.push(map.get(r, cc));
                    }
                }
            }
            let background = ring.iter().sum::<f64>() / ring.len() as f64;
            assert!(
                peak >= 3.0 * background,
                "seed {seed}, bin ({pr}, {pc}): peak {peak}, background {background}"
            );
        }
    }
}

#[test]
fn zero_amplitude_grid_is_identity() {
    let base = &generate_real(3, 1).unwrap()[0];
    let mut rng = sample_rng(3, 1);
    let out = apply_grid(base, GridParams { period: 4, amplitude: 0.0 }, &mut rng).unwrap();
    assert_eq!(&out, base);
}

#[test]
fn no_leakage_and_balanced_classes() {
    for held in Category::STANDARD {
        let ds = build_protocol(&small(held, 8)).unwrap();
        let cfg = &ds.config;
        let k = ds.class_count();
        assert_eq!(k, 4);

        let train_ids: HashSet<u64> = ds.train.iter().map(|s| s.id).collect();
        assert_eq!(train_ids.len(), ds.train.len());
        assert!(ds.train.iter().all(|s| s.category != Some(held)));
        assert!(ds.train.iter().all(|s| (s.class_label as usize) < k));
        let held_ids: HashSet<u64> = ds
            .test
            .iter()
            .filter(|s| s.category == Some(held))
            .map(|s| s.id)
            .collect();
        assert!(train_ids.is_disjoint(&held_ids));
        let test_ids: HashSet<u64> = ds.test.iter().map(|s| s.id).collect();
        assert!(train_ids.is_disjoint(&test_ids));

        let mut train_counts = BTreeMap::new();
        for s in &ds.train {
            *train_counts.entry(s.class_label).or_insert(0) += 1;
        }
        assert_eq!(train_counts.len(), k);
        assert!(train_counts.values().all(|&c| c == cfg.samples_per_class_train));

        let mut test_counts = BTreeMap::new();
        for s in &ds.test {
            *test_counts.entry(s.class_label).or_insert(0) += 1;
        }
        assert_eq!(test_counts.len(), k + 1);
        assert!(test_counts.values().all(|&c| c == cfg.samples_per_class_test));
        assert!(ds
            .test
            .iter()
            .filter(|s| s.category == Some(held))
            .all(|s| s.class_label == ds.novel_label()));
    }
}

#[test]
fn regeneration_is_bit_identical() {
    let a = build_protocol(&small(Category::Grid, 21)).unwrap();
    let b = build_protocol(&small(Category::Grid, 21)).unwrap();
    assert_eq!(a, b);
    for (x, y) in a.train.iter().zip(&b.train) {
        assert!(x.image.pixels().iter().zip(y.image.pixels()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
    let c = build_protocol(&small(Category::Grid, 22)).unwrap();
    assert_ne!(a.train[0].image, c.train[0].image);
    assert_eq!(generate_real(5, 3).unwrap(), generate_real(5, 3).unwrap());
}

#[test]
fn every_category_has_three_distinct_methods() {
    let ds = build_protocol(&small(Category::Checker, 2)).unwrap();
    for cat in [Category::Blend, Category::Grid, Category::Shift, Category::Checker] {
        let methods: HashSet<u32> = ds
            .split(Split::Test)
            .iter()
            .filter(|s| s.category == Some(cat))
            .map(|s| s.method_id)
            .collect();
        assert_eq!(methods.len(), 3, "{cat}");
    }
}

#[test]
fn protocol_counts() {
    let ds = build_protocol(&ProtocolConfig::default()).unwrap();
    assert_eq!(ds.class_count(), 4);
    assert_eq!(ds.train.len(), 2000);
    assert_eq!(ds.test.len(), 1000);
    let groups: HashSet<_> = ds.test.iter().map(|s| s.category).collect();
    assert_eq!(groups.len(), 5);
}

#[test]
fn invalid_protocols_are_rejected() {
    let mut cfg = ProtocolConfig::default();
    cfg.held_out = vec![];
    assert!(build_protocol(&cfg).is_err());
    let cfg = ProtocolConfig {
        categories: vec![Category::Blend, Category::Grid],
        held_out: vec![Category::Grid],
        ..ProtocolConfig::default()
    };
    assert!(build_protocol(&cfg).is_err(), "only one seen category left");
    let cfg = ProtocolConfig {
        categories: vec![Category::Blend, Category::Grid, Category::Shift],
        held_out: vec![Category::Checker],
        ..ProtocolConfig::default()
    };
    assert!(build_protocol(&cfg).is_err(), "held-out category outside the protocol");
    assert!(generate_real(0, 0).is_err());
}

#[test]
fn stacked_can_be_an_extra_unseen_category() {
    let cfg = ProtocolConfig {
        held_out: vec![Category::Checker, Category::Stacked],
        samples_per_class_train: 5,
        samples_per_class_test: 5,
        ..ProtocolConfig::default()
    };
    let ds = build_protocol(&cfg).unwrap();
    assert_eq!(ds.class_count(), 4);
    let novel = ds.test.iter().filter(|s| s.class_label == ds.novel_label()).count();
    assert_eq!(novel, 10);
}
