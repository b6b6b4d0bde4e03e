//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use folio::foliation::{build_quotient, FoliationBundle, Partition};
use folio::generators::{cycle, gaussian_line, group_quotient, lq_product, path, random_metric_space, LqExponent};
use folio::{FiniteMMSpace, ProbVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub name: &'static str,
    pub bundle: FoliationBundle,
}

fn fixture(name: &'static str, space: FiniteMMSpace, partition: Partition) -> Fixture {
    Fixture {
        name,
        bundle: build_quotient(&space, &partition).expect("fixture quotient"),
    }
}

/// Three l_q products, the largest 60×20, covering q = 2, 1 and ∞.
pub fn product_fixtures() -> Vec<Fixture> {
    let big = lq_product(
        &gaussian_line(1.0, 60, 4.0).unwrap(),
        &cycle(20, 3.0).unwrap(),
        LqExponent(2.0),
    )
    .unwrap();
    let l1 = lq_product(
        &path(12, 1.0).unwrap(),
        &random_metric_space(8, 3).unwrap(),
        LqExponent(1.0),
    )
    .unwrap();
    let linf = lq_product(&path(10, 2.0).unwrap(), &cycle(7, 1.0).unwrap(), LqExponent::INFINITY).unwrap();
    vec![
        fixture("l2 gaussian(60) x cycle(20)", big.0, big.1),
        fixture("l1 path(12) x random(8)", l1.0, l1.1),
        fixture("linf path(10) x cycle(7)", linf.0, linf.1),
    ]
}

/// `{0,1}^4` with the Hamming metric and weights depending on the number of
/// ones; coordinate permutations act by isometries.
pub fn hypercube() -> FiniteMMSpace {
    let n: usize = 16;
    let dist = (0..n * n).map(|k| ((k / n) ^ (k % n)).count_ones() as f64).collect();
    let raw: Vec<f64> = (0..n).map(|i: usize| 1.0 + 0.25 * i.count_ones() as f64).collect();
    let total: f64 = raw.iter().sum();
    FiniteMMSpace::from_matrix(dist, raw.iter().map(|w| w / total).collect(), 0).unwrap()
}

fn permute_bits(perm: [u32; 4]) -> Vec<usize> {
    (0..16usize)
        .map(|x| (0..4).filter(|&b| x >> b & 1 == 1).map(|b| 1 << perm[b]).sum())
        .collect()
}

/// Reflection orbits on a symmetric Gaussian grid and coordinate-permutation
/// orbits on the weighted hypercube.
pub fn orbit_fixtures() -> Vec<Fixture> {
    let line = gaussian_line(1.0, 41, 5.0).unwrap();
    let reflect: Vec<usize> = (0..41).rev().collect();
    let p1 = group_quotient(&line, &[reflect]).unwrap();
    let cube = hypercube();
    let gens = [permute_bits([1, 2, 3, 0]), permute_bits([1, 0, 2, 3])];
    let p2 = group_quotient(&cube, &gens).unwrap();
    vec![
        fixture("reflection orbits on gaussian(41)", line, p1),
        fixture("S4 orbits on weighted hypercube", cube, p2),
    ]
}

pub fn random_prob(rng: &mut ChaCha8Rng, n: usize) -> ProbVector {
    // a mix of full-support and sparse measures
    let sparse = rng.random_bool(0.3);
    let raw: Vec<f64> = (0..n)
        .map(|_| {
            if sparse && rng.random_bool(0.6) {
                0.0
            } else {
                rng.random_range(0.0..1.0)
            }
        })
        .collect();
    if raw.iter().all(|v| *v == 0.0) {
        return ProbVector::dirac(n, rng.random_range(0..n));
    }
    ProbVector::normalized(raw).unwrap()
}

/// Minimum transport cost by enumerating every vertex of the transportation
/// polytope: each spanning tree of the bipartite graph `K_{n,m}` determines
/// at most one basic solution, found by peeling leaves.
pub fn vertex_enumeration(a: &[f64], b: &[f64], cost: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let arcs = n * m;
    let k = n + m - 1;
    assert!(arcs <= 20, "enumeration oracle is for tiny instances");
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << arcs) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let chosen: Vec<usize> = (0..arcs).filter(|e| mask >> e & 1 == 1).collect();
        if let Some(flow) = tree_flow(a, b, &chosen) {
            let c: f64 = chosen.iter().zip(&flow).map(|(&e, f)| f * cost[e]).sum();
            best = best.min(c);
        }
    }
    best
}

fn tree_flow(a: &[f64], b: &[f64], arcs: &[usize]) -> Option<Vec<f64>> {
    let (n, m) = (a.len(), b.len());
    let mut parent: Vec<usize> = (0..n + m).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &e in arcs {
        let (u, v) = (find(&mut parent, e / m), find(&mut parent, n + e % m));
        if u == v {
            return None;
        }
        parent[u] = v;
    }
    let mut left: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut alive = vec![true; arcs.len()];
    let mut flow = vec![0.0; arcs.len()];
    for _ in 0..arcs.len() {
        let mut degree = vec![0usize; n + m];
        for (k, &e) in arcs.iter().enumerate() {
            if alive[k] {
                degree[e / m] += 1;
                degree[n + e % m] += 1;
            }
        }
        let (k, leaf) = arcs.iter().enumerate().filter(|(k, _)| alive[*k]).find_map(|(k, &e)| {
            if degree[e / m] == 1 {
                Some((k, e / m))
            } else if degree[n + e % m] == 1 {
                Some((k, n + e % m))
            } else {
                None
            }
        })?;
        let e = arcs[k];
        let other = if leaf == e / m { n + e % m } else { e / m };
        flow[k] = left[leaf];
        left[other] -= left[leaf];
        left[leaf] = 0.0;
        alive[k] = false;
    }
    flow.iter().all(|f| *f >= -1e-14).then_some(flow)
}
