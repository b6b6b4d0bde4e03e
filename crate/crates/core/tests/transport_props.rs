use folio::generators::{path, random_metric_space};
use folio::transport::{
    displacement_interpolate_1d, sinkhorn, solve_ot, solve_with, solvers, wasserstein, wasserstein_1d,
};
use folio::{FiniteMMSpace, ProbVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn measure(r: &mut ChaCha8Rng, n: usize) -> ProbVector {
    let raw: Vec<f64> = (0..n)
        .map(|_| {
            if r.random_bool(0.25) {
                0.0
            } else {
                r.random_range(0.0..1.0)
            }
        })
        .collect();
    ProbVector::normalized(raw).unwrap_or_else(|_| ProbVector::dirac(n, r.random_range(0..n)))
}

fn setup(n: usize, seed: u64) -> (FiniteMMSpace, ChaCha8Rng) {
    (random_metric_space(n, seed).unwrap(), ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn distance_axioms(n in 2usize..14, seed in any::<u64>(), p in prop::sample::select(vec![1.0, 2.0, 3.0])) {
        let (s, mut r) = setup(n, seed);
        let (a, b, c) = (measure(&mut r, n), measure(&mut r, n), measure(&mut r, n));
        let ab = wasserstein(&s, &a, &b, p).unwrap();
        prop_assert!((ab - wasserstein(&s, &b, &a, p).unwrap()).abs() <= 1e-12 * ab.max(1.0));
        prop_assert!(wasserstein(&s, &a, &a, p).unwrap().abs() <= 1e-12);
        let via = wasserstein(&s, &a, &c, p).unwrap() + wasserstein(&s, &c, &b, p).unwrap();
        prop_assert!(ab <= via + 1e-9);
    }

    #[test]
    fn relabeling_does_not_change_cost(n in 2usize..12, seed in any::<u64>()) {
        let (s, mut r) = setup(n, seed);
        let (a, b) = (measure(&mut r, n), measure(&mut r, n));
        let mut perm: Vec<usize> = (0..n).collect();
        perm.reverse();
        let ps = s.permuted(&perm).unwrap();
        let pa = ProbVector::new(perm.iter().map(|&i| a[i]).collect()).unwrap();
        let pb = ProbVector::new(perm.iter().map(|&i| b[i]).collect()).unwrap();
        let w = solve_ot(&s, &a, &b, 2.0).unwrap().cost;
        prop_assert!((w - solve_ot(&ps, &pa, &pb, 2.0).unwrap().cost).abs() <= 1e-12 * w.max(1.0));
    }

    #[test]
    fn plans_have_the_requested_marginals(n in 2usize..14, seed in any::<u64>()) {
        let (s, mut r) = setup(n, seed);
        let (a, b) = (measure(&mut r, n), measure(&mut r, n));
        let plan = solve_ot(&s, &a, &b, 1.0).unwrap();
        prop_assert!(plan.marginal_residual() <= 1e-12);
        prop_assert!(plan.entries.len() < 2 * n);
    }

    #[test]
    fn every_exact_solver_agrees(n in 2usize..12, seed in any::<u64>()) {
        let (s, mut r) = setup(n, seed);
        let (a, b) = (measure(&mut r, n), measure(&mut r, n));
        let reg = solvers();
        let fast = solve_with(reg.get("network-simplex").unwrap(), &s, &a, &b, 2.0).unwrap().cost;
        let bland = solve_with(reg.get("network-simplex-bland").unwrap(), &s, &a, &b, 2.0).unwrap().cost;
        prop_assert!((fast - bland).abs() <= 1e-12 * fast.max(1.0));
    }

    #[test]
    fn entropic_cost_is_never_below_exact(n in 2usize..10, seed in any::<u64>()) {
        let (s, mut r) = setup(n, seed);
        let (a, b) = (measure(&mut r, n), measure(&mut r, n));
        let exact = solve_ot(&s, &a, &b, 2.0).unwrap().cost;
        let soft = sinkhorn(&s, &a, &b, 2.0, 0.05, 200_000, 1e-10).unwrap().cost;
        prop_assert!(soft >= exact - 1e-9);
    }

    #[test]
    fn monotone_coupling_matches_the_lp(n in 2usize..30, seed in any::<u64>(), p in prop::sample::select(vec![1.0, 2.0, 3.0])) {
        let grid = path(n, 1.0).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (measure(&mut r, n), measure(&mut r, n));
        let nodes = grid.interval_coords().unwrap();
        let line = wasserstein_1d(nodes, a.as_slice(), b.as_slice(), p).unwrap();
        let lp = wasserstein(&grid, &a, &b, p).unwrap();
        prop_assert!((line - lp).abs() <= 1e-10);
    }

    #[test]
    fn geodesic_moves_at_constant_speed(seed in any::<u64>()) {
        let n = 120;
        let grid = path(n, 1.0).unwrap();
        let h = 1.0 / (n - 1) as f64;
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let bump = |r: &mut ChaCha8Rng| {
            let c = r.random_range(0.2..0.8);
            let w = r.random_range(0.03..0.1);
            ProbVector::normalized(
                (0..n).map(|k| (-0.5 * ((k as f64 * h - c) / w).powi(2)).exp()).collect(),
            )
            .unwrap()
        };
        let (a, b) = (bump(&mut r), bump(&mut r));
        let w = wasserstein(&grid, &a, &b, 2.0).unwrap();
        for t in [0.25, 0.5, 0.75] {
            let mid = displacement_interpolate_1d(&grid, &a, &b, t).unwrap();
            let w_t = wasserstein(&grid, &a, &mid, 2.0).unwrap();
            prop_assert!((w_t - t * w).abs() <= h, "t {}: w_t {} vs t w {}", t, w_t, t * w);
        }
    }
}
