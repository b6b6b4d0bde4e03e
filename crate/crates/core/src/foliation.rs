//! Partitions, disintegration, quotient spaces and foliation certificates.
//!
//! A [`FoliationBundle`] bundles a partition of a finite space with its
//! quotient `(X*, d*, m*)` and the fiber measures `μ_y = m|_{p⁻¹(y)} / m*(y)`.
//! On a finite space this disintegration is unique, not only almost
//! everywhere, and every class has positive mass.
//!
//! Certificates are stamped with the tolerance they were issued at. Exact
//! constructions (products, orbits) certify at machine precision while mesh
//! based ones only certify at a tolerance comparable to the mesh size.

use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{FiniteMMSpace, ProbVector};
use crate::transport::solve_ot;

/// Class count above which [`SweepMode::Auto`] samples pairs.
pub const EXHAUSTIVE_CLASS_LIMIT: usize = 300;

/// A partition of `0..n` into non-empty classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub classes: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(classes: Vec<Vec<usize>>) -> Self {
        Self { classes }
    }

    /// Groups points by class id; unused ids are dropped and the remaining
    /// ones renumbered in increasing order.
    pub fn from_assignment(assignment: &[usize]) -> Self {
        let mut ids: Vec<usize> = assignment.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let mut classes = vec![Vec::new(); ids.len()];
        for (i, a) in assignment.iter().enumerate() {
            let c = ids.binary_search(a).expect("id present");
            classes[c].push(i);
        }
        Self { classes }
    }

    /// Every point in its own class.
    pub fn trivial(n: usize) -> Self {
        Self {
            classes: (0..n).map(|i| vec![i]).collect(),
        }
    }

    pub fn single(n: usize) -> Self {
        Self {
            classes: vec![(0..n).collect()],
        }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// The quotient map as a table `point -> class`, checking that the
    /// classes are non-empty, disjoint and cover `0..n`.
    pub fn assignment(&self, n: usize) -> Result<Vec<usize>> {
        let mut map = vec![usize::MAX; n];
        for (c, class) in self.classes.iter().enumerate() {
            if class.is_empty() {
                return Err(Error::Partition(format!("class {c} is empty")));
            }
            for &i in class {
                if i >= n {
                    return Err(Error::Partition(format!(
                        "class {c} contains {i}, but the space has {n} points"
                    )));
                }
                if map[i] != usize::MAX {
                    return Err(Error::Partition(format!(
                        "point {i} lies in classes {} and {c}",
                        map[i]
                    )));
                }
                map[i] = c;
            }
        }
        if let Some(i) = map.iter().position(|&c| c == usize::MAX) {
            return Err(Error::Partition(format!("point {i} is not covered")));
        }
        Ok(map)
    }
}

/// Tolerance-stamped foliation status of a bundle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certification {
    None,
    MetricFoliation { tol: f64 },
    MmFoliation { tol: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoliationBundle {
    total: FiniteMMSpace,
    partition: Partition,
    map: Vec<usize>,
    quotient: FiniteMMSpace,
    fibers: Vec<Vec<f64>>,
    metric_valid: bool,
    certification: Certification,
}

impl FoliationBundle {
    pub fn total(&self) -> &FiniteMMSpace {
        &self.total
    }

    pub fn quotient(&self) -> &FiniteMMSpace {
        &self.quotient
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// The quotient map `p` as a table.
    pub fn map(&self) -> &[usize] {
        &self.map
    }

    /// Dense fiber measure `μ_y` on the total space.
    pub fn fiber(&self, y: usize) -> &[f64] {
        &self.fibers[y]
    }

    pub fn fibers(&self) -> &[Vec<f64>] {
        &self.fibers
    }

    /// False when `d*` violates the triangle inequality, which happens
    /// exactly when the partition is not a metric foliation.
    pub fn metric_valid(&self) -> bool {
        self.metric_valid
    }

    pub fn certification(&self) -> Certification {
        self.certification
    }

    fn check_quotient_len(&self, len: usize, what: &str) -> Result<()> {
        if len != self.quotient.len() {
            return Err(Error::Dimension(format!(
                "{what} of length {len} on a quotient with {} classes",
                self.quotient.len()
            )));
        }
        Ok(())
    }
}

/// Fiber measures `μ_y[x] = m(x) / m(p⁻¹(y))` on the fiber and zero elsewhere.
pub fn disintegrate(space: &FiniteMMSpace, partition: &Partition) -> Result<Vec<ProbVector>> {
    partition.assignment(space.len())?;
    Ok(fiber_vectors(space, partition)
        .into_iter()
        .map(ProbVector::from_raw)
        .collect())
}

fn fiber_vectors(space: &FiniteMMSpace, partition: &Partition) -> Vec<Vec<f64>> {
    partition
        .classes
        .iter()
        .map(|class| {
            let mass: f64 = class.iter().map(|&i| space.weight(i)).sum();
            let mut mu = vec![0.0; space.len()];
            for &i in class {
                mu[i] = space.weight(i) / mass;
            }
            mu
        })
        .collect()
}

/// Builds the quotient `d*(y, y') = min d(x, x')` over the two fibers with
/// `m* = p_* m`. A quotient violating the triangle inequality is flagged,
/// not rejected.
pub fn build_quotient(space: &FiniteMMSpace, partition: &Partition) -> Result<FoliationBundle> {
    let n = space.len();
    let map = partition.assignment(n)?;
    let k = partition.len();

    // d(x, F) for every point and class
    let to_class: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| point_to_classes(space, &map, k, i))
        .collect();
    let mut dist = vec![0.0; k * k];
    for a in 0..k {
        for b in 0..k {
            if a != b {
                dist[a * k + b] = partition.classes[a]
                    .iter()
                    .map(|&i| to_class[i][b])
                    .fold(f64::INFINITY, f64::min);
            }
        }
    }
    let weight: Vec<f64> = partition
        .classes
        .iter()
        .map(|class| class.iter().map(|&i| space.weight(i)).sum())
        .collect();
    let labels = partition
        .classes
        .iter()
        .map(|class| match class.as_slice() {
            [i] => space.labels()[*i].clone(),
            _ => format!("[{}]", space.labels()[class[0]]),
        })
        .collect();
    let quotient = FiniteMMSpace::new(labels, dist, weight, map[space.base()])?;
    let metric_valid = quotient.validate().is_valid();
    Ok(FoliationBundle {
        total: space.clone(),
        partition: partition.clone(),
        fibers: fiber_vectors(space, partition),
        map,
        quotient,
        metric_valid,
        certification: Certification::None,
    })
}

fn point_to_classes(space: &FiniteMMSpace, map: &[usize], k: usize, i: usize) -> Vec<f64> {
    let mut out = vec![f64::INFINITY; k];
    for (j, d) in space.dist_row(i).iter().enumerate() {
        let c = map[j];
        if *d < out[c] {
            out[c] = *d;
        }
    }
    out
}

/// Worst `|d(x, F') - d*(F, F')|` offender.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointDefect {
    pub point: usize,
    pub class: usize,
    pub other: usize,
    pub defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricFoliationReport {
    pub passed: bool,
    pub tol: f64,
    pub worst: Option<PointDefect>,
}

/// Checks `|d(x, F') - d*(F, F')| ≤ tol` for all classes and points.
pub fn check_metric_foliation(bundle: &FoliationBundle, tol: f64) -> MetricFoliationReport {
    let space = bundle.total();
    let k = bundle.quotient().len();
    let map = bundle.map();
    let worst = (0..space.len())
        .into_par_iter()
        .filter_map(|i| {
            let to = point_to_classes(space, map, k, i);
            let c = map[i];
            (0..k)
                .filter(|&b| b != c)
                .map(|b| PointDefect {
                    point: i,
                    class: c,
                    other: b,
                    defect: (to[b] - bundle.quotient().dist(c, b)).abs(),
                })
                .reduce(|a, b| if b.defect > a.defect { b } else { a })
        })
        .reduce_with(|a, b| {
            if b.defect > a.defect || (b.defect == a.defect && b.point < a.point) {
                b
            } else {
                a
            }
        });
    MetricFoliationReport {
        passed: worst.is_none_or(|w| w.defect <= tol),
        tol,
        worst,
    }
}

/// How class pairs are swept by [`check_mm_foliation`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SweepMode {
    /// Exhaustive up to [`EXHAUSTIVE_CLASS_LIMIT`] classes, sampled above.
    Auto {
        budget: usize,
        seed: u64,
    },
    Exhaustive,
    Sampled {
        budget: usize,
        seed: u64,
    },
}

impl Default for SweepMode {
    fn default() -> Self {
        SweepMode::Auto {
            budget: 20_000,
            seed: 0,
        }
    }
}

/// Transport exponents checked on every class pair.
pub const CHECK_EXPONENTS: [f64; 3] = [1.0, 2.0, 3.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub y: usize,
    pub y2: usize,
    pub d_star: f64,
    /// `W_1, W_2, W_3` between the two fiber measures.
    pub w: [f64; 3],
    /// `max_q |W_q - d*|`.
    pub defect: f64,
}

impl PairRecord {
    pub fn w2(&self) -> f64 {
        self.w[1]
    }

    pub fn w2_defect(&self) -> f64 {
        (self.w[1] - self.d_star).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmFoliationReport {
    pub passed: bool,
    pub tol: f64,
    pub metric: MetricFoliationReport,
    /// All pairs satisfy the `W₂` clause.
    pub w2_passed: bool,
    /// All pairs satisfy the clause for `q ∈ {1, 2, 3}`.
    pub wq_passed: bool,
    pub exhaustive: bool,
    pub pairs_total: usize,
    pub pairs: Vec<PairRecord>,
    /// Index into `pairs` of the largest `W₂` defect.
    pub worst_pair: Option<usize>,
}

impl MmFoliationReport {
    pub fn worst(&self) -> Option<&PairRecord> {
        self.worst_pair.map(|i| &self.pairs[i])
    }

    /// `y,y',d_star,W2,defect` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["y", "y'", "d_star", "W2", "defect"])?;
        for p in &self.pairs {
            w.write_record([
                p.y.to_string(),
                p.y2.to_string(),
                format!("{:e}", p.d_star),
                format!("{:e}", p.w2()),
                format!("{:e}", p.w2_defect()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn class_pairs(k: usize, mode: SweepMode) -> (Vec<(usize, usize)>, bool) {
    let all = k * k.saturating_sub(1) / 2;
    let (budget, seed) = match mode {
        SweepMode::Exhaustive => (all, 0),
        SweepMode::Auto { .. } if k <= EXHAUSTIVE_CLASS_LIMIT => (all, 0),
        SweepMode::Auto { budget, seed } | SweepMode::Sampled { budget, seed } => (budget, seed),
    };
    if budget >= all {
        let pairs = (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect();
        return (pairs, true);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<usize> = sample(&mut rng, all, budget).into_vec();
    picks.sort_unstable();
    let pairs = picks.into_iter().map(|idx| unrank_pair(idx, k)).collect();
    (pairs, false)
}

/// Inverse of the row-major enumeration of `{(a, b) : a < b < k}`.
fn unrank_pair(mut idx: usize, k: usize) -> (usize, usize) {
    let mut a = 0;
    while idx >= k - a - 1 {
        idx -= k - a - 1;
        a += 1;
    }
    (a, a + 1 + idx)
}

/// Checks the metric foliation property and `|W_q(μ_y, μ_{y'}) - d*| ≤ tol`
/// for `q ∈ {1, 2, 3}`. On an exhaustive pass the returned bundle carries an
/// [`Certification::MmFoliation`] stamp; a metric-only pass stamps
/// [`Certification::MetricFoliation`].
pub fn check_mm_foliation(
    bundle: &FoliationBundle,
    tol: f64,
    mode: SweepMode,
) -> Result<(MmFoliationReport, FoliationBundle)> {
    let metric = check_metric_foliation(bundle, tol);
    let k = bundle.quotient().len();
    let (pairs, exhaustive) = class_pairs(k, mode);
    let fibers: Vec<ProbVector> = bundle.fibers.iter().map(|f| ProbVector::from_raw(f.clone())).collect();
    let records: Vec<PairRecord> = pairs
        .par_iter()
        .map(|&(a, b)| -> Result<PairRecord> {
            let d_star = bundle.quotient().dist(a, b);
            let mut w = [0.0; 3];
            for (slot, p) in w.iter_mut().zip(CHECK_EXPONENTS) {
                *slot = solve_ot(bundle.total(), &fibers[a], &fibers[b], p)?.distance();
            }
            let defect = w.iter().map(|v| (v - d_star).abs()).fold(0.0, f64::max);
            Ok(PairRecord {
                y: a,
                y2: b,
                d_star,
                w,
                defect,
            })
        })
        .collect::<Result<_>>()?;

    let worst_pair = records
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.w2_defect().total_cmp(&b.1.w2_defect()))
        .map(|(i, _)| i);
    let w2_passed = records.iter().all(|r| r.w2_defect() <= tol);
    let wq_passed = records.iter().all(|r| r.defect <= tol);
    let passed = metric.passed && w2_passed && wq_passed;

    let mut out = bundle.clone();
    out.certification = if passed && exhaustive {
        Certification::MmFoliation { tol }
    } else if metric.passed {
        Certification::MetricFoliation { tol }
    } else {
        Certification::None
    };
    let report = MmFoliationReport {
        passed,
        tol,
        metric,
        w2_passed,
        wq_passed,
        exhaustive,
        pairs_total: k * k.saturating_sub(1) / 2,
        pairs: records,
        worst_pair,
    };
    Ok((report, out))
}

/// `(p^*ν)[x] = ν(p(x)) μ_{p(x)}[x]`.
pub fn pullback_measure(bundle: &FoliationBundle, nu: &ProbVector) -> Result<ProbVector> {
    bundle.check_quotient_len(nu.len(), "measure")?;
    let out = bundle
        .map
        .iter()
        .enumerate()
        .map(|(x, &y)| nu[y] * bundle.fibers[y][x])
        .collect();
    Ok(ProbVector::from_raw(out))
}

/// `p^*f = f ∘ p`.
pub fn pullback_function(bundle: &FoliationBundle, f: &[f64]) -> Result<Vec<f64>> {
    bundle.check_quotient_len(f.len(), "function")?;
    Ok(bundle.map.iter().map(|&y| f[y]).collect())
}

/// `g(y) = Σ_x μ_y[x] f(x)`.
pub fn fiber_average(bundle: &FoliationBundle, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() != bundle.total.len() {
        return Err(Error::Dimension(format!(
            "function of length {} on a {}-point space",
            f.len(),
            bundle.total.len()
        )));
    }
    Ok(bundle
        .partition
        .classes
        .iter()
        .zip(&bundle.fibers)
        .map(|(class, mu)| class.iter().map(|&x| mu[x] * f[x]).sum())
        .collect())
}

/// Fiber averages from a class map and the total measure alone, for
/// partitions of spaces too large to hold a distance matrix.
pub fn average_over_classes(map: &[usize], weight: &[f64], f: &[f64], classes: usize) -> Result<Vec<f64>> {
    if map.len() != weight.len() || f.len() != weight.len() {
        return Err(Error::Dimension(format!(
            "map, weight and function lengths differ: {}, {}, {}",
            map.len(),
            weight.len(),
            f.len()
        )));
    }
    let mut mass = vec![0.0; classes];
    let mut sum = vec![0.0; classes];
    for ((&y, m), v) in map.iter().zip(weight).zip(f) {
        if y >= classes {
            return Err(Error::Partition(format!(
                "class {y} out of range for {classes} classes"
            )));
        }
        mass[y] += m;
        sum[y] += m * v;
    }
    if let Some(y) = mass.iter().position(|m| *m == 0.0) {
        return Err(Error::Partition(format!("class {y} is empty")));
    }
    Ok(sum.iter().zip(&mass).map(|(s, m)| s / m).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::relative_entropy;
    use approx::assert_abs_diff_eq;

    fn path4(weight: Vec<f64>) -> FiniteMMSpace {
        let mut d = vec![0.0; 16];
        for i in 0..4 {
            for j in 0..4 {
                d[i * 4 + j] = (i as f64 - j as f64).abs();
            }
        }
        FiniteMMSpace::from_matrix(d, weight, 0).unwrap()
    }

    /// Two copies of a 3-point space at distance 2, as an exact product.
    fn product_like() -> (FiniteMMSpace, Partition) {
        let z = [[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]];
        let mut d = vec![0.0; 36];
        for i in 0..6 {
            for j in 0..6 {
                let dy: f64 = if i / 3 == j / 3 { 0.0 } else { 2.0 };
                let dz: f64 = z[i % 3][j % 3];
                d[i * 6 + j] = dy.max(dz);
            }
        }
        let w = vec![0.1, 0.2, 0.2, 0.1, 0.2, 0.2];
        let s = FiniteMMSpace::from_matrix(d, w, 0).unwrap();
        (s, Partition::new(vec![vec![0, 1, 2], vec![3, 4, 5]]))
    }

    #[test]
    fn partition_errors() {
        assert!(matches!(
            Partition::new(vec![vec![0], vec![]]).assignment(1),
            Err(Error::Partition(_))
        ));
        assert!(Partition::new(vec![vec![0, 1], vec![1]]).assignment(2).is_err());
        assert!(Partition::new(vec![vec![0]]).assignment(2).is_err());
        let p = Partition::from_assignment(&[5, 2, 5, 9]);
        assert_eq!(p.classes, vec![vec![1], vec![0, 2], vec![3]]);
    }

    #[test]
    fn disintegration_examples() {
        let s = path4(vec![0.1, 0.4, 0.1, 0.4]);
        let trivial = disintegrate(&s, &Partition::trivial(4)).unwrap();
        for (y, mu) in trivial.iter().enumerate() {
            assert_eq!(mu, &ProbVector::dirac(4, y));
        }
        let one = disintegrate(&s, &Partition::single(4)).unwrap();
        assert_eq!(one[0].as_slice(), s.weights());
    }

    #[test]
    fn trivial_quotient_is_the_space() {
        let s = path4(vec![0.1, 0.4, 0.1, 0.4]);
        let b = build_quotient(&s, &Partition::trivial(4)).unwrap();
        assert_eq!(b.quotient().dist_matrix(), s.dist_matrix());
        assert_eq!(b.quotient().weights(), s.weights());
        assert!(b.metric_valid());
    }

    #[test]
    fn reconstruction_holds() {
        let (s, p) = product_like();
        let b = build_quotient(&s, &p).unwrap();
        for x in 0..s.len() {
            let sum: f64 = (0..b.quotient().len())
                .map(|y| b.quotient().weight(y) * b.fiber(y)[x])
                .sum();
            assert_abs_diff_eq!(sum, s.weight(x), epsilon = 1e-12);
        }
    }

    #[test]
    fn path_counterexample_fails_on_w2_only() {
        let s = path4(vec![0.1, 0.4, 0.1, 0.4]);
        let p = Partition::new(vec![vec![0, 3], vec![1, 2]]);
        let b = build_quotient(&s, &p).unwrap();
        assert_eq!(b.quotient().dist(0, 1), 1.0);
        let metric = check_metric_foliation(&b, 1e-12);
        assert!(metric.passed);
        let (report, out) = check_mm_foliation(&b, 1e-9, SweepMode::Exhaustive).unwrap();
        assert!(!report.passed && !report.w2_passed);
        // plan family a→b: s, a→c: 0.2-s, d→b: 0.8-s, d→c: s, cost 4 - 6s on [0, 0.2]
        let brute = (0..=2000)
            .map(|k| {
                let t = 0.2 * k as f64 / 2000.0;
                t * 1.0 + (0.2 - t) * 4.0 + (0.8 - t) * 4.0 + t * 1.0
            })
            .fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(report.pairs[0].w2(), brute.sqrt(), epsilon = 1e-12);
        assert!(report.worst().unwrap().w2_defect() > 0.6);
        assert_eq!(out.certification(), Certification::MetricFoliation { tol: 1e-9 });
    }

    #[test]
    fn product_certifies() {
        let (s, p) = product_like();
        let b = build_quotient(&s, &p).unwrap();
        let (report, out) = check_mm_foliation(&b, 1e-12, SweepMode::default()).unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.exhaustive);
        assert_eq!(out.certification(), Certification::MmFoliation { tol: 1e-12 });
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("y,y',d_star,W2,defect\n"));
    }

    #[test]
    fn pullbacks_and_averages() {
        let (s, p) = product_like();
        let b = build_quotient(&s, &p).unwrap();
        let nu = ProbVector::new(vec![0.3, 0.7]).unwrap();
        let pulled = pullback_measure(&b, &nu).unwrap();
        let pushed = crate::transport::pushforward(b.map(), &pulled, 2).unwrap();
        assert_abs_diff_eq!(pushed[0], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(
            relative_entropy(&pulled, &s).unwrap(),
            relative_entropy(&nu, b.quotient()).unwrap(),
            epsilon = 1e-12
        );
        assert_eq!(
            pullback_measure(&b, &ProbVector::dirac(2, 1)).unwrap().as_slice(),
            b.fiber(1)
        );

        let h = [2.5, -1.0];
        let f = pullback_function(&b, &h).unwrap();
        assert_eq!(fiber_average(&b, &f).unwrap(), h.to_vec());
        let g = fiber_average(
            &build_quotient(&s, &Partition::single(6)).unwrap(),
            &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        )
        .unwrap();
        let mean: f64 = (0..6).map(|i| s.weight(i) * (i + 1) as f64).sum();
        assert_abs_diff_eq!(g[0], mean, epsilon = 1e-15);
    }

    #[test]
    fn sampled_sweep_is_marked() {
        let (pairs, exhaustive) = class_pairs(400, SweepMode::default());
        assert!(!exhaustive);
        assert_eq!(pairs.len(), 20_000);
        assert!(pairs.iter().all(|&(a, b)| a < b && b < 400));
        let (all, exhaustive) = class_pairs(5, SweepMode::Exhaustive);
        assert!(exhaustive);
        assert_eq!(all.len(), 10);
        for (idx, pair) in all.iter().enumerate() {
            assert_eq!(unrank_pair(idx, 5), *pair);
        }
    }
}
