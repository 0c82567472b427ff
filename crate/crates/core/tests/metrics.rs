use cwmi::metrics::{
    adjusted_rand_index, connected_components, evaluate, evaluate_masks, hausdorff_distance, iou_dice,
    variation_of_information, BinaryMask, Connectivity, InstanceLabeling,
};
use cwmi::CwmiError;
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize, density: f64) -> BinaryMask {
    BinaryMask::from_fn((h, w), |_, _| rng.random::<f64>() < density)
}

fn random_labeling(rng: &mut ChaCha8Rng, h: usize, w: usize, clusters: u32) -> InstanceLabeling {
    InstanceLabeling::new(Array2::from_shape_fn((h, w), |_| rng.random_range(0..clusters)))
}

fn shifted_squares() -> (BinaryMask, BinaryMask) {
    (
        BinaryMask::from_fn((4, 4), |i, j| i < 2 && j < 2),
        BinaryMask::from_fn((4, 4), |i, j| i < 2 && (1..3).contains(&j)),
    )
}

/// Component count by repeated flood fill from a work list of unvisited pixels.
fn flood_fill_count(mask: &BinaryMask, diagonal: bool) -> usize {
    let (h, w) = mask.dim();
    let mut seen = vec![vec![false; w]; h];
    let mut count = 0;
    for si in 0..h {
        for sj in 0..w {
            if !mask.get(si, sj) || seen[si][sj] {
                continue;
            }
            count += 1;
            let mut queue = std::collections::VecDeque::from([(si as i64, sj as i64)]);
            seen[si][sj] = true;
            while let Some((i, j)) = queue.pop_front() {
                for di in -1..=1i64 {
                    for dj in -1..=1i64 {
                        if (di == 0 && dj == 0) || (!diagonal && di != 0 && dj != 0) {
                            continue;
                        }
                        let (ni, nj) = (i + di, j + dj);
                        if ni < 0 || nj < 0 || ni >= h as i64 || nj >= w as i64 {
                            continue;
                        }
                        let (a, b) = (ni as usize, nj as usize);
                        if mask.get(a, b) && !seen[a][b] {
                            seen[a][b] = true;
                            queue.push_back((ni, nj));
                        }
                    }
                }
            }
        }
    }
    count
}

fn brute_hausdorff(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (pa, pb) = (a.boundary(), b.boundary());
    let d = |p: (usize, usize), q: (usize, usize)| {
        ((p.0 as f64 - q.0 as f64).powi(2) + (p.1 as f64 - q.1 as f64).powi(2)).sqrt()
    };
    let directed = |x: &[(usize, usize)], y: &[(usize, usize)]| {
        x.iter()
            .map(|&p| y.iter().map(|&q| d(p, q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(&pa, &pb).max(directed(&pb, &pa))
}

#[test]
fn shifted_square_overlap() {
    let (a, b) = shifted_squares();
    let (miou, mdice) = iou_dice(&a, &b).unwrap();
    assert!((miou - 11.0 / 21.0).abs() <= 1e-12);
    assert!((mdice - 2.0 / 3.0).abs() <= 1e-12);
    let report = evaluate(&a, &b.to_values::<f64>(), 0.5).unwrap();
    assert!((report.miou - 11.0 / 21.0).abs() <= 1e-12);
}

#[test]
fn identical_and_disjoint_overlap() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let m = random_mask(&mut rng, 16, 16, 0.5);
    assert_eq!(iou_dice(&m, &m).unwrap(), (1.0, 1.0));
    let half = BinaryMask::from_fn((4, 4), |_, j| j < 2);
    let complement = BinaryMask::from_fn((4, 4), |_, j| j >= 2);
    assert_eq!(iou_dice(&half, &complement).unwrap(), (0.0, 0.0));
    let empty = BinaryMask::from_fn((4, 4), |_, _| false);
    assert_eq!(iou_dice(&empty, &empty).unwrap(), (1.0, 1.0));
}

#[test]
fn diagonal_pixels_depend_on_connectivity() {
    let m = BinaryMask::new(array![[1, 0], [0, 1]]).unwrap();
    assert_eq!(connected_components(&m, Connectivity::Four).max_label(), 2);
    assert_eq!(connected_components(&m, Connectivity::Eight).max_label(), 1);
    let empty = BinaryMask::from_fn((5, 5), |_, _| false);
    assert_eq!(connected_components(&empty, Connectivity::Four).max_label(), 0);
}

#[test]
fn component_counts_match_flood_fill() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let density = rng.random_range(0.2..0.7);
        let m = random_mask(&mut rng, 17, 23, density);
        assert_eq!(connected_components(&m, Connectivity::Four).max_label() as usize, flood_fill_count(&m, false));
        assert_eq!(connected_components(&m, Connectivity::Eight).max_label() as usize, flood_fill_count(&m, true));
    }
}

#[test]
fn components_are_numbered_in_raster_order() {
    let m = BinaryMask::new(array![[0, 0, 1], [1, 0, 1], [1, 0, 0]]).unwrap();
    let l = connected_components(&m, Connectivity::Four);
    assert_eq!(l.labels(), &array![[0, 0, 1], [2, 0, 1], [2, 0, 0]]);
}

#[test]
fn variation_of_information_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_labeling(&mut rng, 12, 12, 5);
    assert_eq!(variation_of_information(&a, &a).unwrap(), 0.0);
    let one = InstanceLabeling::new(Array2::zeros((4, 4)));
    let halves = InstanceLabeling::new(Array2::from_shape_fn((4, 4), |(i, _)| (i >= 2) as u32));
    assert!((variation_of_information(&one, &halves).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    for _ in 0..20 {
        let a = random_labeling(&mut rng, 10, 10, 4);
        let b = random_labeling(&mut rng, 10, 10, 6);
        assert!((variation_of_information(&a, &b).unwrap() - variation_of_information(&b, &a).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn variation_of_information_triangle_inequality() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let [a, b, c] = [3, 4, 5].map(|k| random_labeling(&mut rng, 9, 11, k));
        let ab = variation_of_information(&a, &b).unwrap();
        let bc = variation_of_information(&b, &c).unwrap();
        let ac = variation_of_information(&a, &c).unwrap();
        assert!(ac <= ab + bc + 1e-10);
    }
}

#[test]
fn adjusted_rand_index_cases() {
    let a = InstanceLabeling::new(array![[1, 1, 2, 2]]);
    let b = InstanceLabeling::new(array![[1, 2, 1, 2]]);
    assert!((adjusted_rand_index(&a, &b).unwrap() + 0.5).abs() < 1e-15);
    assert_eq!(adjusted_rand_index(&a, &a).unwrap(), 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..10 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let x = random_labeling(&mut r, 100, 100, 4);
        let y = random_labeling(&mut r, 100, 100, 4);
        assert!(adjusted_rand_index(&x, &y).unwrap().abs() <= 0.02);
    }

    // Relabeling by a permutation keeps ARI at 1; merging two clusters does not.
    let x = random_labeling(&mut rng, 20, 20, 5);
    let perm = [3u32, 0, 4, 1, 2];
    let permuted = InstanceLabeling::new(x.labels().mapv(|v| perm[v as usize]));
    assert!((adjusted_rand_index(&x, &permuted).unwrap() - 1.0).abs() < 1e-12);
    let merged = InstanceLabeling::new(x.labels().mapv(|v| v.min(3)));
    assert!(adjusted_rand_index(&x, &merged).unwrap() < 1.0);
    for _ in 0..20 {
        let y = random_labeling(&mut rng, 20, 20, 3);
        assert!(adjusted_rand_index(&x, &y).unwrap() <= 1.0);
    }
}

#[test]
fn hausdorff_cases() {
    let square = BinaryMask::from_fn((10, 10), |i, j| (3..6).contains(&i) && (3..6).contains(&j));
    let moved = BinaryMask::from_fn((10, 10), |i, j| (3..6).contains(&i) && (4..7).contains(&j));
    assert_eq!(hausdorff_distance(&square, &square).unwrap(), 0.0);
    assert_eq!(hausdorff_distance(&square, &moved).unwrap(), 1.0);
    let pixel = BinaryMask::from_fn((5, 5), |i, j| i == 2 && j == 2);
    let next = BinaryMask::from_fn((5, 5), |i, j| i == 2 && j == 3);
    assert_eq!(hausdorff_distance(&pixel, &next).unwrap(), 1.0);
    let empty = BinaryMask::from_fn((10, 10), |_, _| false);
    assert!(matches!(hausdorff_distance(&square, &empty), Err(CwmiError::EmptyForeground)));
}

#[test]
fn hausdorff_matches_brute_force_and_is_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let a = random_mask(&mut rng, 24, 19, 0.1);
        let b = random_mask(&mut rng, 24, 19, 0.3);
        let ab = hausdorff_distance(&a, &b).unwrap();
        assert!((ab - brute_hausdorff(&a, &b)).abs() < 1e-12);
        assert_eq!(ab, hausdorff_distance(&b, &a).unwrap());
    }
}

#[test]
fn evaluate_reports() {
    let (a, _) = shifted_squares();
    let r = evaluate(&a, &a.to_values::<f64>(), 0.5).unwrap();
    assert_eq!((r.miou, r.mdice, r.vi, r.ari, r.hd), (1.0, 1.0, 0.0, 1.0, Some(0.0)));
    let r = evaluate(&a, &Array2::<f64>::zeros((4, 4)), 0.5).unwrap();
    assert!(r.hd.is_none());
    assert!(r.miou.is_finite() && r.vi.is_finite() && r.ari.is_finite());
    assert!(evaluate(&a, &Array2::<f64>::zeros((4, 4)), 1.0).is_err());
    let json = serde_json::to_string(&r).unwrap();
    assert!(json.contains("\"hd\":null"));
}

#[test]
fn metrics_survive_a_shared_transpose() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let a = random_mask(&mut rng, 16, 21, 0.4);
        let b = random_mask(&mut rng, 16, 21, 0.4);
        let r = evaluate_masks(&a, &b).unwrap();
        let t = evaluate_masks(&a.transposed(), &b.transposed()).unwrap();
        assert!((r.miou - t.miou).abs() < 1e-12 && (r.mdice - t.mdice).abs() < 1e-12);
        assert!((r.vi - t.vi).abs() < 1e-12 && (r.ari - t.ari).abs() < 1e-12);
        assert_eq!(r.hd, t.hd);
    }
}

#[test]
fn masks_must_be_binary() {
    assert!(BinaryMask::new(array![[0, 2]]).is_err());
    assert!(BinaryMask::from_values(&array![[0.0, 0.5]]).is_err());
    assert!(BinaryMask::from_values(&array![[0.0, 1.0]]).is_ok());
}
