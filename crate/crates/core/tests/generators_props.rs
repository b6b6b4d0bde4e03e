use std::f64::consts::PI;

use folio::foliation::{build_quotient, check_mm_foliation, SweepMode};
use folio::generators::{
    cycle, gaussian_line, group_quotient, interval_quotient, lq_product, path, random_metric_space,
    sphere_distance_partition, sphere_mesh, warped_sphere, GeneratorSpec, LqExponent,
};
use folio::FiniteMMSpace;
use proptest::prelude::*;

fn exponent() -> impl Strategy<Value = LqExponent> {
    prop::sample::select(vec![
        LqExponent(1.0),
        LqExponent(1.5),
        LqExponent(2.0),
        LqExponent(3.0),
        LqExponent::INFINITY,
    ])
}

fn max_gap(a: &FiniteMMSpace, b: &FiniteMMSpace, perm: &[usize]) -> f64 {
    let n = a.len();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((a.dist(i, j) - b.dist(perm[i], perm[j])).abs());
        }
    }
    worst
}

/// Simpson rule for `2 ∫_c^{c+30} φ`, φ the standard normal density.
fn gaussian_tail(c: f64) -> f64 {
    let k = 60_000;
    let h = 30.0 / k as f64;
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    let mut acc = phi(c) + phi(c + 30.0);
    for i in 1..k {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * phi(c + i as f64 * h);
    }
    2.0 * acc * h / 3.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generated_spaces_are_valid(
        n in 1usize..4,
        points in 8usize..60,
        seed in any::<u64>(),
        dim in 2usize..12,
        b in 3usize..80,
    ) {
        prop_assert!(sphere_mesh(n, 1.3, points, seed).unwrap().validate().is_valid());
        prop_assert!(interval_quotient(dim, 2.0, b).unwrap().validate().is_valid());
        prop_assert!(gaussian_line(2.0, b, 5.0).unwrap().validate().is_valid());
        prop_assert!(cycle(points, 3.0).unwrap().validate().is_valid());
        prop_assert!(path(b, 0.7).unwrap().validate().is_valid());
    }

    #[test]
    fn products_are_valid_and_certified(s1 in any::<u64>(), s2 in any::<u64>(), q in exponent()) {
        let (y, z) = (random_metric_space(5, s1).unwrap(), random_metric_space(4, s2).unwrap());
        let (space, partition) = lq_product(&y, &z, q).unwrap();
        prop_assert!(space.validate().is_valid());
        let bundle = build_quotient(&space, &partition).unwrap();
        let (report, _) = check_mm_foliation(&bundle, 1e-12, SweepMode::Exhaustive).unwrap();
        prop_assert!(report.passed);
    }

    #[test]
    fn products_associate(s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>(), q in exponent()) {
        let x = random_metric_space(3, s1).unwrap();
        let y = random_metric_space(4, s2).unwrap();
        let z = random_metric_space(3, s3).unwrap();
        let left = lq_product(&lq_product(&x, &y, q).unwrap().0, &z, q).unwrap().0;
        let right = lq_product(&x, &lq_product(&y, &z, q).unwrap().0, q).unwrap().0;
        let identity: Vec<usize> = (0..left.len()).collect();
        // float metrics are snapped to a lattice of about 1e-12 times the diameter
        prop_assert!(max_gap(&left, &right, &identity) <= 1e-10 * left.diameter());
        for (a, b) in left.weights().iter().zip(right.weights()) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn products_commute(s1 in any::<u64>(), s2 in any::<u64>(), q in exponent()) {
        let (y, z) = (random_metric_space(5, s1).unwrap(), random_metric_space(3, s2).unwrap());
        let yz = lq_product(&y, &z, q).unwrap().0;
        let zy = lq_product(&z, &y, q).unwrap().0;
        let swap: Vec<usize> = (0..yz.len()).map(|i| (i % 3) * 5 + i / 3).collect();
        prop_assert!(max_gap(&yz, &zy, &swap) <= 1e-10 * yz.diameter());
    }

    #[test]
    fn sphere_meshes_are_reproducible(n in 1usize..4, seed in any::<u64>()) {
        prop_assert_eq!(sphere_mesh(n, 1.0, 30, seed).unwrap(), sphere_mesh(n, 1.0, 30, seed).unwrap());
    }

    #[test]
    fn orbits_cover_the_index_set(seed in any::<u64>(), k in 3usize..20) {
        let polygon = cycle(k, 1.0).unwrap();
        let rotate: Vec<usize> = (0..k).map(|i| (i + 1) % k).collect();
        prop_assert_eq!(group_quotient(&polygon, &[rotate]).unwrap().len(), 1);
        let identity: Vec<usize> = (0..k).collect();
        prop_assert_eq!(group_quotient(&polygon, &[identity]).unwrap().len(), k);
        let space = random_metric_space(k, seed).unwrap();
        let p = group_quotient(&space, &[]).unwrap();
        let mut seen = p.assignment(k).unwrap();
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), p.len());
    }

    #[test]
    fn specs_generate_valid_spaces(points in 4usize..40, seed in any::<u64>()) {
        let json = format!(
            r#"{{"kind":"lq_product","y":{{"kind":"path","N":{points},"length":1.0}},
                "z":{{"kind":"sphere_mesh","n":2,"r":1.0,"N":{points},"seed":{seed}}},"q":"inf"}}"#
        );
        let spec: GeneratorSpec = serde_json::from_str(&json).unwrap();
        let out = spec.generate().unwrap();
        prop_assert!(out.space.validate().is_valid());
        prop_assert_eq!(out.partition.unwrap().len(), points);
        prop_assert!(spec.is_stochastic());
    }
}

#[test]
fn band_masses_follow_the_sine_law() {
    let bands = 20;
    let mesh = sphere_mesh(2, 1.0, 4000, 17).unwrap();
    let partition = sphere_distance_partition(&mesh, bands).unwrap();
    assert_eq!(partition.len(), bands);
    let bundle = build_quotient(&mesh, &partition).unwrap();
    // classes are ordered by distance from the base point
    let width = PI / bands as f64;
    let l1: f64 = (0..bands)
        .map(|k| {
            let exact = 0.5 * ((k as f64 * width).cos() - ((k + 1) as f64 * width).cos());
            (bundle.quotient().weight(k) - exact).abs()
        })
        .sum();
    assert!(l1 <= 0.1, "L1 band-mass error {l1}");
}

#[test]
fn gaussian_truncation_loses_little_mass() {
    let line = gaussian_line(1.0, 500, 6.0).unwrap();
    let nodes = line.interval_coords().unwrap();
    assert!((nodes[0] + 6.0).abs() < 1e-9 && (nodes[499] - 6.0).abs() < 1e-9);
    assert!(gaussian_tail(6.0) <= 1e-8);
    assert!(gaussian_tail(6.0) > 1e-10);
}

#[test]
fn high_dimensional_quotient_is_nearly_gaussian() {
    let n = 256;
    let space = interval_quotient(n, ((n - 1) as f64).sqrt(), 500).unwrap();
    let nodes = space.interval_coords().unwrap();
    let h = nodes[1] - nodes[0];
    let peak = 1.0 / (2.0 * PI).sqrt();
    let worst = nodes
        .iter()
        .zip(space.weights())
        .map(|(t, w)| (w / h - peak * (-0.5 * t * t).exp()).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 0.01 * peak, "sup density gap {worst}");
}

#[test]
fn warped_sphere_foliates_at_mesh_scale() {
    let (r, b, m) = (1.0, 24, 24);
    let (space, partition) = warped_sphere(r, b, m).unwrap();
    assert!(space.validate().is_valid());
    let h = PI * r / b as f64;
    let bundle = build_quotient(&space, &partition).unwrap();
    let (report, _) = check_mm_foliation(&bundle, 2.0 * h, SweepMode::Exhaustive).unwrap();
    assert!(report.passed, "worst pair {:?}", report.worst());
    // quotient distances are the interval distances
    let k = bundle.quotient().len();
    for y in 0..k {
        for y2 in 0..k {
            let expected = (y as f64 - y2 as f64).abs() * h;
            assert!((bundle.quotient().dist(y, y2) - expected).abs() <= h, "{y},{y2}");
        }
    }
}
