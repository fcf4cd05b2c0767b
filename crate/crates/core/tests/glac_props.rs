mod common;

use std::f64::consts::PI;

use common::{max_entry_err, random_image, rng, NaiveGlac};
use deptrail::glac::{
    glac_0, glac_1, glac_descriptor, orientation_code, GlacConfig, GradientField, GradientOperator,
    Region,
};
use deptrail::grid::{GrayImage, Grid};
use proptest::prelude::*;

fn cfg(bins: usize, delta_r: usize, spatial_bins: (usize, usize), signed: bool) -> GlacConfig {
    GlacConfig {
        bins,
        delta_r,
        spatial_bins,
        operator: GradientOperator::Roberts,
        signed,
    }
}

fn image_strategy() -> impl Strategy<Value = GrayImage> {
    (4usize..14, 4usize..14, any::<u64>()).prop_map(|(w, h, seed)| random_image(&mut rng(seed), w, h))
}

#[test]
fn adjacent_pair_at_bin_centre() {
    let mut magnitude = Grid::filled(2, 1, 0.0);
    magnitude[(0, 0)] = 1.0;
    magnitude[(1, 0)] = 1.0;
    let field = GradientField {
        magnitude,
        orientation: Grid::filled(2, 1, 0.0),
    };
    let c = cfg(8, 1, (1, 1), true);
    let f1 = glac_1(&field, field.full_region(), &c).unwrap();
    assert_eq!(f1[0], 1.0);
    assert_eq!(f1.iter().sum::<f64>(), 1.0);
    let f0 = glac_0(&field, field.full_region(), &c).unwrap();
    assert_eq!(f0[0], 2.0);
}

#[test]
fn single_pixel_region_has_no_pairs() {
    let img = random_image(&mut rng(3), 8, 8);
    let field = deptrail::glac::gradient_field(&img, GradientOperator::Roberts).unwrap();
    let r = Region {
        x0: 2,
        y0: 2,
        x1: 3,
        y1: 3,
    };
    let f1 = glac_1(&field, r, &cfg(8, 1, (1, 1), true)).unwrap();
    assert!(f1.iter().all(|&v| v == 0.0));
}

#[test]
fn dimension_law_examples() {
    let img = random_image(&mut rng(1), 64, 64);
    for (bs, len) in [((1, 2), 528), ((1, 3), 792), ((3, 5), 3960)] {
        let c = cfg(8, 1, bs, true);
        assert_eq!(glac_descriptor(&img, &c).unwrap().len(), len);
        assert_eq!(c.descriptor_len(), len);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matches_naive_summation(
        img in image_strategy(),
        bins in 2usize..10,
        delta_r in 1usize..3,
        rows in 1usize..3,
        cols in 1usize..3,
        signed in any::<bool>(),
    ) {
        let fast = glac_descriptor(&img, &cfg(bins, delta_r, (rows, cols), signed)).unwrap();
        let naive = NaiveGlac { bins, delta_r, spatial_bins: (rows, cols), signed }.descriptor(&img);
        prop_assert_eq!(fast.len(), naive.len());
        prop_assert!(max_entry_err(&fast, &naive, 1e-12) <= 1e-10);
    }

    #[test]
    fn entries_are_non_negative(img in image_strategy(), bins in 2usize..12) {
        let d = glac_descriptor(&img, &cfg(bins, 1, (1, 2), true)).unwrap();
        prop_assert!(d.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn homogeneous_in_intensity_scale(img in image_strategy(), c in 0.1f64..10.0) {
        let conf = cfg(8, 1, (1, 1), true);
        let base = glac_descriptor(&img, &conf).unwrap();
        let scaled = glac_descriptor(&img.map(|v| v * c), &conf).unwrap();
        // orientations are scale-free and min(c·a, c·b) = c·min(a, b)
        let expect: Vec<f64> = base.iter().map(|v| v * c).collect();
        prop_assert!(max_entry_err(&scaled, &expect, 1e-9) <= 1e-9);
    }

    #[test]
    fn length_is_cells_times_cell_len(
        bins in 2usize..10,
        rows in 1usize..4,
        cols in 1usize..4,
    ) {
        let img = random_image(&mut rng(bins as u64), 16, 16);
        let d = glac_descriptor(&img, &cfg(bins, 1, (rows, cols), true)).unwrap();
        prop_assert_eq!(d.len(), rows * cols * (bins + 4 * bins * bins));
    }

    #[test]
    fn vote_partitions_magnitude(theta in -10.0f64..10.0, m in 1e-6f64..10.0, bins in 1usize..16, signed in any::<bool>()) {
        let [(a, wa), (b, wb)] = orientation_code(theta, m, bins, signed);
        prop_assert!(wa >= 0.0 && wb >= 0.0);
        prop_assert!((wa + wb - 1.0).abs() <= 1e-12);
        prop_assert!(a < bins && b < bins);
        prop_assert_eq!(b, (a + 1) % bins);
        let period = if signed { 2.0 * PI } else { PI };
        let step = period / bins as f64;
        // the heavier bin is the nearer centre
        let t = theta.rem_euclid(period);
        let dist = |k: usize| {
            let d = (t - k as f64 * step).rem_euclid(period);
            d.min(period - d)
        };
        if wa > wb + 1e-9 {
            prop_assert!(dist(a) <= dist(b) + 1e-9);
        }
    }

    #[test]
    fn zeroth_order_sums_magnitudes(img in image_strategy()) {
        let field = deptrail::glac::gradient_field(&img, GradientOperator::Roberts).unwrap();
        let f0 = glac_0(&field, field.full_region(), &cfg(8, 1, (1, 1), true)).unwrap();
        let total: f64 = field.magnitude.as_slice().iter().sum();
        prop_assert!((f0.iter().sum::<f64>() - total).abs() <= 1e-10 * total.max(1.0));
    }
}
