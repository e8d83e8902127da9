mod common;

use common::{bits, chi_squared_3sigma, chi_squared_uniform, random_image, sorted_plane};
use jigsaw3d::image::{BitDepth, ImageGrid};
use jigsaw3d::jigsaw::{
    apply_mask, jigsaw, make_mask, make_permutation, partition, shuffle, unshuffle, JigsawConfig, MaskPattern, Mode,
    PatchPermutation,
};
use jigsaw3d::numeric::multiset_mean_variance;
use proptest::prelude::*;

#[test]
fn default_train_partition_is_eight_by_eight() {
    let img = ImageGrid::filled(512, 512, &[0.2, 0.4, 0.6]);
    assert_eq!(partition(&img, 64).unwrap(), (8, 8));
    assert_eq!(partition(&img, 128).unwrap(), (4, 4));
}

#[test]
fn permutation_destinations_are_uniform() {
    const SEEDS: u64 = 10_000;
    let n = 64;
    // counts[src][dst]
    let mut counts = vec![vec![0u64; n]; n];
    for seed in 0..SEEDS {
        let p = make_permutation(8, 8, seed);
        for (dst, &src) in p.mapping().iter().enumerate() {
            counts[src][dst] += 1;
        }
    }
    let bound = chi_squared_3sigma(n - 1);
    for (src, row) in counts.iter().enumerate() {
        let chi = chi_squared_uniform(row);
        assert!(chi < bound, "cell {src}: chi-squared {chi} above {bound}");
    }
    let flat: Vec<u64> = counts.concat();
    let total = chi_squared_uniform(&flat);
    // A row-and-column constrained table has (n-1)^2 degrees of freedom.
    let bound = chi_squared_3sigma((n - 1) * (n - 1));
    assert!(total < bound, "pooled chi-squared {total} above {bound}");
}

#[test]
fn shuffle_keeps_the_value_multiset_and_moments() {
    for seed in 0..10 {
        let img = random_image(3, 128, 192, seed);
        let perm = make_permutation(4, 6, seed + 100);
        let out = shuffle(&img, &perm, 32).unwrap();
        for c in 0..3 {
            assert_eq!(sorted_plane(&img, c), sorted_plane(&out, c));
            let a = multiset_mean_variance(img.plane(c));
            let b = multiset_mean_variance(out.plane(c));
            assert_eq!(a.0.to_bits(), b.0.to_bits());
            assert_eq!(a.1.to_bits(), b.1.to_bits());
        }
    }
}

#[test]
fn four_by_four_corner_swap() {
    let img = ImageGrid::new(1, 4, 4, (0..16).map(|v| v as f64 / 15.0).collect()).unwrap();
    let perm = PatchPermutation::new(2, 2, vec![3, 1, 2, 0]).unwrap();
    let out = shuffle(&img, &perm, 2).unwrap();
    let expected = [10, 11, 2, 3, 14, 15, 6, 7, 8, 9, 0, 1, 12, 13, 4, 5];
    let got: Vec<usize> = out.data().iter().map(|v| (v * 15.0).round() as usize).collect();
    assert_eq!(got, expected);

    // Per-pixel relocation: pixel (y, x) of the output comes from the
    // source cell's pixel at the same in-cell offset.
    for y in 0..4 {
        for x in 0..4 {
            let dst = (y / 2) * 2 + x / 2;
            let src = perm.mapping()[dst];
            let (sy, sx) = ((src / 2) * 2 + y % 2, (src % 2) * 2 + x % 2);
            assert_eq!(out.get(0, y, x), img.get(0, sy, sx));
        }
    }
}

#[test]
fn mask_counts_follow_the_binomial() {
    const SEEDS: u64 = 10_000;
    let total: usize = (0..SEEDS).map(|s| make_mask(8, 8, 0.25, s).masked_count()).sum();
    let mean = total as f64 / SEEDS as f64;
    let sigma = (64.0 * 0.25 * 0.75 / SEEDS as f64).sqrt();
    assert!((mean - 16.0).abs() <= 3.0 * sigma, "mean masked count {mean}");
}

#[test]
fn one_masked_cell_fills_exactly_one_patch() {
    let s = 8;
    let img = random_image(3, 2 * s, 2 * s, 4);
    let mask = MaskPattern {
        rows: 2,
        cols: 2,
        visible: vec![true, false, true, true],
    };
    let bg = [0.5, 0.25, 0.75];
    let out = apply_mask(&img, &mask, &bg, s).unwrap();
    for (c, mu) in bg.iter().enumerate() {
        let filled = out.plane(c).iter().filter(|v| *v == mu).count();
        assert_eq!(filled, s * s);
        let unchanged = out
            .plane(c)
            .iter()
            .zip(img.plane(c))
            .filter(|(a, b)| a == b)
            .count();
        assert_eq!(unchanged, 3 * s * s);
        for y in 0..s {
            for x in s..2 * s {
                assert_eq!(out.get(c, y, x), *mu);
            }
        }
    }
}

#[test]
fn train_mode_is_byte_reproducible() {
    let img = random_image(3, 512, 512, 77);
    let cfg = JigsawConfig::train(2024);
    assert_eq!(cfg.patch_size, 64);
    assert_eq!(cfg.mask_ratio, 0.25);
    let a = jigsaw(&img, &cfg, Mode::Train).unwrap();
    let b = jigsaw(&img, &cfg, Mode::Train).unwrap();
    assert_eq!(bits(&a.image), bits(&b.image));
    assert_eq!(a.permutation, b.permutation);
    assert_eq!(a.mask, b.mask);

    let dir = tempfile::tempdir().unwrap();
    let (pa, pb) = (dir.path().join("a.png"), dir.path().join("b.png"));
    a.image.save_png(&pa, BitDepth::Sixteen).unwrap();
    b.image.save_png(&pb, BitDepth::Sixteen).unwrap();
    assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
}

#[test]
fn composed_shuffles_unwind_in_reverse() {
    let img = random_image(3, 64, 64, 5);
    let s1 = make_permutation(4, 4, 1);
    let s2 = make_permutation(4, 4, 2);
    let twice = shuffle(&shuffle(&img, &s1, 16).unwrap(), &s2, 16).unwrap();
    assert_eq!(twice, shuffle(&img, &s1.then(&s2), 16).unwrap());
    let back = unshuffle(&unshuffle(&twice, &s2, 16).unwrap(), &s1, 16).unwrap();
    assert_eq!(bits(&back), bits(&img));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shuffle_round_trips(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..6, s in 1usize..6, ch in 1usize..4) {
        let img = random_image(ch, rows * s, cols * s, seed);
        let perm = make_permutation(rows, cols, seed ^ 0xabc);
        let out = shuffle(&img, &perm, s).unwrap();
        for c in 0..ch {
            prop_assert_eq!(sorted_plane(&img, c), sorted_plane(&out, c));
        }
        prop_assert_eq!(unshuffle(&out, &perm, s).unwrap(), img);
    }

    #[test]
    fn mask_extremes_hold(seed in any::<u64>(), rows in 1usize..5, cols in 1usize..5) {
        let s = 4;
        let img = random_image(3, rows * s, cols * s, seed);
        let full = apply_mask(&img, &make_mask(rows, cols, 1.0, seed), &[0.5; 3], s).unwrap();
        prop_assert!(full.data().iter().all(|v| *v == 0.5));
        let none = apply_mask(&img, &make_mask(rows, cols, 0.0, seed), &[0.5; 3], s).unwrap();
        prop_assert_eq!(none, img);
    }

    #[test]
    fn infer_mode_ignores_mask_ratio(seed in any::<u64>(), p in 0.0f64..=1.0) {
        let img = random_image(3, 256, 256, seed);
        let base = JigsawConfig::infer(seed);
        let other = JigsawConfig { mask_ratio: p, ..base.clone() };
        let a = jigsaw(&img, &base, Mode::Infer).unwrap();
        let b = jigsaw(&img, &other, Mode::Infer).unwrap();
        prop_assert_eq!(a.image, b.image);
        prop_assert_eq!(a.mask.masked_count(), 0);
    }
}
