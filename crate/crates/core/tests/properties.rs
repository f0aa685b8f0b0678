mod common;

use lidarsplat_core::depth_filter::{build_min_pyramid, filter_keep_mask, upsample_filter_step};
use lidarsplat_core::render::project_all_points;
use lidarsplat_core::{
    build_grid, depth_filter, project_points, DepthImage, FilterParams, FrameRGBDA, RenderParams,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;

use common::{random_camera, random_cloud, random_depth, random_filter_params, reference, rng};

fn frame_from_depth(depth: &DepthImage) -> FrameRGBDA {
    let mut f = FrameRGBDA::empty(depth.width, depth.height);
    for (i, &d) in depth.data.iter().enumerate() {
        if d.is_finite() {
            f.depth[i] = d;
            f.alpha[i] = 1;
            f.rgb[i] = [0.5, (i % 7) as f32 / 7.0, 1.0];
        }
    }
    f
}

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (1usize..=12, 1usize..=12).prop_map(|(a, b)| (a * 8 + a % 3, b * 8 + b % 5))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn culled_render_equals_brute_force(seed in any::<u64>(), n in 1usize..20_000, cell in 0.05f64..3.0) {
        let mut r = rng(seed);
        let cloud = random_cloud(&mut r, n);
        let camera = random_camera(&mut r);
        let params = RenderParams { cell_size: cell, ..Default::default() };
        let grid = build_grid(&cloud, cell).unwrap();
        let culled = project_points(&cloud, &grid, &camera, &params);
        prop_assert_eq!(&culled, &project_all_points(&cloud, &camera, &params));
        prop_assert!(culled.check_invariants().is_ok());
    }

    #[test]
    fn render_ignores_point_order(seed in any::<u64>(), n in 1usize..20_000, eps in 0.0f64..0.1) {
        let mut r = rng(seed);
        let cloud = random_cloud(&mut r, n);
        let camera = random_camera(&mut r);
        let params = RenderParams { zbuffer_epsilon_rel: eps, cell_size: 0.5 };
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut r);
        let shuffled = cloud.permuted(&order);
        let a = project_points(&cloud, &build_grid(&cloud, 0.5).unwrap(), &camera, &params);
        let b = project_points(&shuffled, &build_grid(&shuffled, 0.5).unwrap(), &camera, &params);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn zbuffer_depth_is_pixel_minimum(seed in any::<u64>(), n in 1usize..5_000) {
        let mut r = rng(seed);
        let cloud = random_cloud(&mut r, n);
        let camera = random_camera(&mut r);
        let frame = project_all_points(&cloud, &camera, &RenderParams::default());
        let mut min = vec![f32::INFINITY; camera.pixel_count()];
        for p in cloud.positions() {
            let w = nalgebra::Vector3::new(f64::from(p[0]), f64::from(p[1]), f64::from(p[2]));
            if let Some((pix, z)) = camera.rasterize(&w) {
                min[pix] = min[pix].min(z as f32);
            }
        }
        for (i, &m) in min.iter().enumerate() {
            let expect = if m.is_finite() { m } else { 0.0 };
            prop_assert_eq!(frame.depth[i], expect);
            prop_assert_eq!(frame.alpha[i], u8::from(m.is_finite()));
        }
    }

    #[test]
    fn filter_keeps_a_subset(seed in any::<u64>(), (w, h) in dims()) {
        let mut r = rng(seed);
        let depth = random_depth(&mut r, w, h);
        let params = random_filter_params(&mut r, w, h);
        let input = frame_from_depth(&depth);
        let out = depth_filter(&input, &params).unwrap();
        prop_assert!(out.check_invariants().is_ok());
        for i in 0..input.pixel_count() {
            if out.alpha[i] == 1 {
                prop_assert_eq!(input.alpha[i], 1);
                prop_assert_eq!(out.depth[i].to_bits(), input.depth[i].to_bits());
                prop_assert_eq!(out.rgb[i], input.rgb[i]);
            }
        }
    }

    #[test]
    fn filter_keeps_global_minimum(seed in any::<u64>(), (w, h) in dims()) {
        let mut r = rng(seed);
        let depth = random_depth(&mut r, w, h);
        let params = random_filter_params(&mut r, w, h);
        let keep = filter_keep_mask(&depth, &params).unwrap();
        let min = depth.data.iter().copied().fold(f32::INFINITY, f32::min);
        for (i, &d) in depth.data.iter().enumerate() {
            if d == min {
                prop_assert!(keep[i], "minimum {} at {} dropped", d, i);
            }
        }
    }

    #[test]
    fn strong_filter_is_identity(seed in any::<u64>(), (w, h) in dims()) {
        let mut r = rng(seed);
        let depth = random_depth(&mut r, w, h);
        let finite: Vec<f32> = depth.data.iter().copied().filter(|d| d.is_finite()).collect();
        prop_assume!(!finite.is_empty());
        let lo = finite.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = finite.iter().copied().fold(0.0, f32::max);
        let mut params = random_filter_params(&mut r, w, h);
        params.filter_strength = f64::from(hi) / f64::from(lo);
        let input = frame_from_depth(&depth);
        prop_assert_eq!(depth_filter(&input, &params).unwrap(), input);
    }

    #[test]
    fn step_is_monotone_in_strength(seed in any::<u64>(), (w, h) in dims(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let mut r = rng(seed);
        let depth = random_depth(&mut r, w, h);
        let params = random_filter_params(&mut r, w, h);
        let pyramid = build_min_pyramid(&depth, params.levels_n).unwrap();
        let (lo, hi) = (a.min(b), a.max(b));
        let step = |s: f64| {
            let p = FilterParams { filter_strength: s, ..params };
            upsample_filter_step(&pyramid.levels[0], &pyramid.levels[1], &p, params.levels_n == 1).unwrap()
        };
        let (weak, strong) = (step(lo), step(hi));
        for (k_lo, k_hi) in weak.kept.iter().zip(&strong.kept) {
            prop_assert!(!k_lo || *k_hi);
        }
    }

    #[test]
    fn filter_matches_reference(seed in any::<u64>(), (w, h) in dims()) {
        let mut r = rng(seed);
        let depth = random_depth(&mut r, w, h);
        let params = random_filter_params(&mut r, w, h);
        prop_assert_eq!(filter_keep_mask(&depth, &params).unwrap(), reference::keep_mask(&depth, &params));
    }
}
