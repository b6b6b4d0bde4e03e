//! Finite metric measure spaces `(X, d, m, x̄)`.
//!
//! A [`FiniteMMSpace`] stores the full distance matrix, a strictly positive
//! probability weight and a base point. Construction only checks shapes and
//! finiteness; the metric-measure axioms are checked by
//! [`FiniteMMSpace::validate`], which reports every violated axiom with its
//! worst offender instead of failing on the first one.
//!
//! On a finite space the volume growth integral `∫ exp(-c² d(x, x̄)²) dm` is
//! always finite, so [`vg_integral`] only reports its value.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `Σ weight = 1` and on probability vectors.
pub const PROB_TOL: f64 = 1e-12;
/// Tolerance on `Σ ρ·m = 1` for densities.
pub const DENSITY_TOL: f64 = 1e-10;

/// Optional coordinates used by generators and geometry-aware operations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Coords {
    /// Sorted positions on the real line.
    Interval {
        data: Vec<f64>,
    },
    /// Unit directions of points on a round sphere of the given radius.
    Sphere {
        radius: f64,
        data: Vec<Vec<f64>>,
    },
    Euclidean {
        data: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMMSpace {
    labels: Vec<String>,
    dist: Vec<f64>,
    weight: Vec<f64>,
    base: usize,
    coords: Option<Coords>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SpaceFile {
    labels: Vec<String>,
    dist: Vec<Vec<f64>>,
    weight: Vec<f64>,
    base: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coords: Option<Coords>,
}

impl FiniteMMSpace {
    /// Builds a space from a row-major distance matrix. Only shapes and
    /// finiteness are checked here.
    pub fn new(labels: Vec<String>, dist: Vec<f64>, weight: Vec<f64>, base: usize) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::Dimension("a space needs at least one point".into()));
        }
        if dist.len() != n * n {
            return Err(Error::Dimension(format!(
                "distance matrix has {} entries, expected {n}x{n}",
                dist.len()
            )));
        }
        if weight.len() != n {
            return Err(Error::Dimension(format!(
                "weight has length {}, expected {n}",
                weight.len()
            )));
        }
        if base >= n {
            return Err(Error::Dimension(format!("base {base} out of range for {n} points")));
        }
        if let Some(bad) = dist.iter().chain(weight.iter()).find(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite value {bad} in space")));
        }
        Ok(Self {
            labels,
            dist,
            weight,
            base,
            coords: None,
        })
    }

    /// Builds a space with labels `"0"`, `"1"`, ...
    pub fn from_matrix(dist: Vec<f64>, weight: Vec<f64>, base: usize) -> Result<Self> {
        let labels = (0..weight.len()).map(|i| i.to_string()).collect();
        Self::new(labels, dist, weight, base)
    }

    pub fn with_coords(mut self, coords: Coords) -> Result<Self> {
        let len = match &coords {
            Coords::Interval { data } => data.len(),
            Coords::Sphere { data, .. } | Coords::Euclidean { data } => data.len(),
        };
        if len != self.len() {
            return Err(Error::Dimension(format!(
                "coordinates for {len} points on a {}-point space",
                self.len()
            )));
        }
        self.coords = Some(coords);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.weight.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weight.is_empty()
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.len() + j]
    }

    pub fn dist_row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.dist[i * n..(i + 1) * n]
    }

    pub fn dist_matrix(&self) -> &[f64] {
        &self.dist
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weight[i]
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn coords(&self) -> Option<&Coords> {
        self.coords.as_ref()
    }

    /// Interval coordinates, if the space carries them.
    pub fn interval_coords(&self) -> Option<&[f64]> {
        match &self.coords {
            Some(Coords::Interval { data }) => Some(data),
            _ => None,
        }
    }

    /// The measure `m` as a probability vector.
    pub fn measure(&self) -> ProbVector {
        ProbVector(self.weight.clone())
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().copied().fold(0.0, f64::max)
    }

    /// Same space with points reordered: new point `k` is old point `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.len();
        check_permutation(perm, n)?;
        let mut dist = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                dist[a * n + b] = self.dist(perm[a], perm[b]);
            }
        }
        let labels = perm.iter().map(|&i| self.labels[i].clone()).collect();
        let weight = perm.iter().map(|&i| self.weight[i]).collect();
        let base = perm.iter().position(|&i| i == self.base).unwrap();
        Self::new(labels, dist, weight, base)
    }

    /// Checks every axiom strictly (triangle inequality with tolerance 0).
    pub fn validate(&self) -> ValidationReport {
        self.validate_with(0.0, None)
    }

    /// Same checks, but triangle defects up to `tol` are accepted. The report
    /// records that it was produced in lenient mode.
    pub fn validate_lenient(&self, tol: f64) -> ValidationReport {
        self.validate_with(tol, Some(tol))
    }

    fn validate_with(&self, tri_tol: f64, lenient: Option<f64>) -> ValidationReport {
        let n = self.len();
        let mut violations = Vec::new();

        let mut diag = Worst::default();
        let mut asym = Worst::default();
        let mut sep = Worst::default();
        for i in 0..n {
            let dii = self.dist(i, i);
            if dii != 0.0 {
                diag.offer(dii.abs(), vec![i]);
            }
            for j in (i + 1)..n {
                let (a, b) = (self.dist(i, j), self.dist(j, i));
                if a != b {
                    asym.offer((a - b).abs(), vec![i, j]);
                }
                if a <= 0.0 || b <= 0.0 {
                    sep.offer(-a.min(b), vec![i, j]);
                }
            }
        }
        diag.push(Axiom::ZeroDiagonal, &mut violations);
        asym.push(Axiom::Symmetry, &mut violations);
        sep.push(Axiom::Separation, &mut violations);

        let tri = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut w = Worst::default();
                let row_i = self.dist_row(i);
                for j in 0..n {
                    let dij = row_i[j];
                    let row_j = self.dist_row(j);
                    for k in 0..n {
                        let defect = row_i[k] - (dij + row_j[k]);
                        if defect > tri_tol {
                            w.offer(defect, vec![i, j, k]);
                        }
                    }
                }
                w
            })
            .reduce(Worst::default, Worst::merge);
        tri.push(Axiom::Triangle, &mut violations);

        let mut support = Worst::default();
        for (i, &w) in self.weight.iter().enumerate() {
            if w <= 0.0 {
                support.offer(-w, vec![i]);
            }
        }
        support.push(Axiom::FullSupport, &mut violations);

        let total: f64 = self.weight.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            violations.push(Violation {
                axiom: Axiom::Normalization,
                indices: vec![],
                defect: (total - 1.0).abs(),
                count: 1,
            });
        }

        ValidationReport {
            violations,
            lenient_tolerance: lenient,
        }
    }

    /// Repairs floating-point triangle defects by running the all-pairs
    /// shortest-path relaxation until no entry changes. Each entry only ever
    /// decreases, so the result is the largest metric below the input; for
    /// inputs that are metrics up to rounding the change is a few ulps.
    /// Returns the number of relaxation sweeps that changed something.
    pub fn tighten_triangle(&mut self) -> usize {
        let n = self.len();
        let mut sweeps = 0;
        loop {
            let mut changed = false;
            for j in 0..n {
                let row_j: Vec<f64> = self.dist_row(j).to_vec();
                let hit = self
                    .dist
                    .par_chunks_mut(n)
                    .map(|row_i| {
                        let dij = row_i[j];
                        let mut hit = false;
                        for k in 0..n {
                            let via = dij + row_j[k];
                            if via < row_i[k] {
                                row_i[k] = via;
                                hit = true;
                            }
                        }
                        hit
                    })
                    .reduce(|| false, |a, b| a || b);
                changed |= hit;
            }
            if !changed {
                break;
            }
            sweeps += 1;
        }
        sweeps
    }
}

impl Serialize for FiniteMMSpace {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.len();
        SpaceFile {
            labels: self.labels.clone(),
            dist: (0..n).map(|i| self.dist_row(i).to_vec()).collect(),
            weight: self.weight.clone(),
            base: self.base,
            coords: self.coords.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FiniteMMSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = SpaceFile::deserialize(d)?;
        let n = file.labels.len();
        if file.dist.len() != n || file.dist.iter().any(|r| r.len() != n) {
            return Err(serde::de::Error::custom(format!("distance matrix is not {n}x{n}")));
        }
        let dist = file.dist.into_iter().flatten().collect();
        let space = FiniteMMSpace::new(file.labels, dist, file.weight, file.base).map_err(serde::de::Error::custom)?;
        match file.coords {
            Some(c) => space.with_coords(c).map_err(serde::de::Error::custom),
            None => Ok(space),
        }
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::Dimension(format!(
            "permutation of length {} on {n} points",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::Input(format!("not a permutation: {perm:?}")));
        }
        seen[p] = true;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axiom {
    ZeroDiagonal,
    Symmetry,
    Separation,
    Triangle,
    FullSupport,
    Normalization,
}

/// One violated axiom with its worst offender.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub axiom: Axiom,
    /// Worst offending indices: `[i]`, `[i, j]`, or `[i, j, k]` for the
    /// triangle `d(i,k) ≤ d(i,j) + d(j,k)`.
    pub indices: Vec<usize>,
    pub defect: f64,
    /// How many index tuples violate the axiom.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// `Some(tol)` when triangle defects up to `tol` were tolerated.
    pub lenient_tolerance: Option<f64>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violation(&self, axiom: Axiom) -> Option<&Violation> {
        self.violations.iter().find(|v| v.axiom == axiom)
    }
}

#[derive(Default)]
struct Worst {
    defect: f64,
    indices: Vec<usize>,
    count: usize,
}

impl Worst {
    fn offer(&mut self, defect: f64, indices: Vec<usize>) {
        if self.count == 0 || defect > self.defect {
            self.defect = defect;
            self.indices = indices;
        }
        self.count += 1;
    }

    fn merge(self, other: Worst) -> Worst {
        let count = self.count + other.count;
        let mut best = if other.count > 0 && (self.count == 0 || other.defect > self.defect) {
            other
        } else {
            self
        };
        best.count = count;
        best
    }

    fn push(self, axiom: Axiom, out: &mut Vec<Violation>) {
        if self.count > 0 {
            out.push(Violation {
                axiom,
                indices: self.indices,
                defect: self.defect,
                count: self.count,
            });
        }
    }
}

/// A probability vector on the points of a space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::Dimension("empty probability vector".into()));
        }
        if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Input(format!("probability entry {i} is {v}")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::Input(format!("probability vector sums to {total}")));
        }
        Ok(Self(p))
    }

    /// Rescales a non-negative vector with positive total mass to sum to one.
    pub fn normalized(p: Vec<f64>) -> Result<Self> {
        let total: f64 = p.iter().sum();
        if !(total > 0.0 && total.is_finite()) || p.iter().any(|v| *v < 0.0) {
            return Err(Error::Input(format!(
                "cannot normalize a vector with total mass {total}"
            )));
        }
        Self::new(p.into_iter().map(|v| v / total).collect())
    }

    /// Wraps a vector without checks; callers guarantee the invariants.
    pub(crate) fn from_raw(p: Vec<f64>) -> Self {
        Self(p)
    }

    pub fn dirac(n: usize, at: usize) -> Self {
        let mut p = vec![0.0; n];
        p[at] = 1.0;
        Self(p)
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for ProbVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A density `ρ` against the weight of a space, `μ = ρ m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DensityVector(Vec<f64>);

impl DensityVector {
    pub fn new(rho: Vec<f64>, weight: &[f64]) -> Result<Self> {
        if rho.len() != weight.len() {
            return Err(Error::Dimension(format!(
                "density of length {} against weight of length {}",
                rho.len(),
                weight.len()
            )));
        }
        if let Some((i, v)) = rho.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Input(format!("density entry {i} is {v}")));
        }
        let mass: f64 = rho.iter().zip(weight).map(|(r, w)| r * w).sum();
        if (mass - 1.0).abs() > DENSITY_TOL {
            return Err(Error::Input(format!("density integrates to {mass}")));
        }
        Ok(Self(rho))
    }

    /// Density of `mu` against `weight` (weights are strictly positive).
    pub fn from_measure(mu: &ProbVector, weight: &[f64]) -> Result<Self> {
        if mu.len() != weight.len() {
            return Err(Error::Dimension("measure and weight lengths differ".into()));
        }
        Self::new(mu.as_slice().iter().zip(weight).map(|(p, w)| p / w).collect(), weight)
    }

    pub fn constant(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    /// `μ = ρ m`, renormalized to absorb rounding.
    pub fn to_measure(&self, weight: &[f64]) -> ProbVector {
        let p: Vec<f64> = self.0.iter().zip(weight).map(|(r, w)| r * w).collect();
        let total: f64 = p.iter().sum();
        ProbVector(p.into_iter().map(|v| v / total).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `Σ_i m_i exp(-c² d(x̄, x_i)²)`, always in `(0, 1]` on a valid space.
pub fn vg_integral(space: &FiniteMMSpace, c: f64) -> Result<f64> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Domain(format!(
            "volume growth constant must be positive, got {c}"
        )));
    }
    let row = space.dist_row(space.base());
    Ok(row
        .iter()
        .zip(space.weights())
        .map(|(d, w)| w * (-(c * c) * d * d).exp())
        .sum())
}

/// Relative entropy `Ent_m(μ) = Σ μ_i log(μ_i / m_i)` with `0 log 0 = 0`.
///
/// Full support of `m` means every `μ` is absolutely continuous, so the
/// value is always finite here.
pub fn relative_entropy(mu: &ProbVector, space: &FiniteMMSpace) -> Result<f64> {
    entropy_against(mu.as_slice(), space.weights())
}

pub(crate) fn entropy_against(mu: &[f64], weight: &[f64]) -> Result<f64> {
    if mu.len() != weight.len() {
        return Err(Error::Dimension(format!(
            "measure of length {} on a {}-point space",
            mu.len(),
            weight.len()
        )));
    }
    Ok(mu
        .iter()
        .zip(weight)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, w)| p * (p / w).ln())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn space(dist: &[f64], weight: &[f64]) -> FiniteMMSpace {
        FiniteMMSpace::from_matrix(dist.to_vec(), weight.to_vec(), 0).unwrap()
    }

    #[test]
    fn equilateral_is_valid() {
        let third = 1.0 / 3.0;
        let s = space(
            &[0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0],
            &[third, third, 1.0 - 2.0 * third],
        );
        assert!(s.validate().is_valid());
    }

    #[test]
    fn triangle_violation_names_worst_triple() {
        let s = space(&[0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0], &[0.25, 0.5, 0.25]);
        let report = s.validate();
        let tri = report.violation(Axiom::Triangle).expect("triangle violation");
        assert_eq!(tri.defect, 1.0);
        // a→c through b, reported in either orientation
        assert!(tri.indices == vec![0, 1, 2] || tri.indices == vec![2, 1, 0]);
        assert_eq!(tri.count, 2);
        assert_eq!(report.violations.len(), 1);
    }

    #[test]
    fn zero_weight_breaks_full_support() {
        let s = space(&[0.0, 1.0, 1.0, 0.0], &[1.0, 0.0]);
        let report = s.validate();
        let v = report.violation(Axiom::FullSupport).unwrap();
        assert_eq!(v.indices, vec![1]);
    }

    #[test]
    fn dimension_mismatch_is_structural() {
        let err = FiniteMMSpace::from_matrix(vec![0.0; 3], vec![0.5, 0.5], 0).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
        let err = FiniteMMSpace::from_matrix(vec![0.0, f64::NAN, 1.0, 0.0], vec![0.5, 0.5], 0).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn asymmetry_and_unnormalized_weight() {
        let s = space(&[0.0, 1.0, 2.0, 0.0], &[0.5, 0.6]);
        let report = s.validate();
        assert_eq!(report.violation(Axiom::Symmetry).unwrap().defect, 1.0);
        assert!(report.violation(Axiom::Normalization).is_some());
    }

    #[test]
    fn lenient_mode_is_flagged() {
        let s = space(
            &[0.0, 1.0, 2.0 + 1e-13, 1.0, 0.0, 1.0, 2.0 + 1e-13, 1.0, 0.0],
            &[0.25, 0.5, 0.25],
        );
        assert!(!s.validate().is_valid());
        let lenient = s.validate_lenient(1e-12);
        assert!(lenient.is_valid());
        assert_eq!(lenient.lenient_tolerance, Some(1e-12));
    }

    #[test]
    fn tighten_repairs_rounding_defects() {
        let mut s = space(
            &[0.0, 1.0, 2.0 + 1e-13, 1.0, 0.0, 1.0, 2.0 + 1e-13, 1.0, 0.0],
            &[0.25, 0.5, 0.25],
        );
        assert_eq!(s.tighten_triangle(), 1);
        assert!(s.validate().is_valid());
        assert_eq!(s.dist(0, 2), 2.0);
    }

    #[test]
    fn vg_examples() {
        let one = space(&[0.0], &[1.0]);
        assert_eq!(vg_integral(&one, 1.0).unwrap(), 1.0);
        let two = space(&[0.0, 1.0, 1.0, 0.0], &[0.5, 0.5]);
        assert_abs_diff_eq!(
            vg_integral(&two, 1.0).unwrap(),
            0.5 * (1.0 + (-1.0f64).exp()),
            epsilon = 1e-15
        );
        assert!(matches!(vg_integral(&two, 0.0), Err(Error::Domain(_))));
        assert!(vg_integral(&two, 2.0).unwrap() <= vg_integral(&two, 1.0).unwrap());
    }

    #[test]
    fn entropy_examples() {
        let n = 5;
        let mut dist = vec![1.0; n * n];
        for i in 0..n {
            dist[i * n + i] = 0.0;
        }
        let s = space(&dist, &vec![0.2; n]);
        assert_eq!(relative_entropy(&s.measure(), &s).unwrap(), 0.0);
        let ent = relative_entropy(&ProbVector::dirac(n, 3), &s).unwrap();
        assert_abs_diff_eq!(ent, (n as f64).ln(), epsilon = 1e-15);
    }

    #[test]
    fn json_round_trip_and_rejections() {
        let s = space(&[0.0, 1.0, 1.0, 0.0], &[0.5, 0.5])
            .with_coords(Coords::Interval { data: vec![0.0, 1.0] })
            .unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"kind\":\"interval\""));
        let back: FiniteMMSpace = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);

        let ragged = r#"{"labels":["a","b"],"dist":[[0,1],[1]],"weight":[0.5,0.5],"base":0}"#;
        assert!(serde_json::from_str::<FiniteMMSpace>(ragged).is_err());
        let huge = r#"{"labels":["a","b"],"dist":[[0,1e999],[1,0]],"weight":[0.5,0.5],"base":0}"#;
        assert!(serde_json::from_str::<FiniteMMSpace>(huge).is_err());
    }

    #[test]
    fn density_round_trip() {
        let w = [0.25, 0.75];
        let mu = ProbVector::new(vec![0.5, 0.5]).unwrap();
        let rho = DensityVector::from_measure(&mu, &w).unwrap();
        assert_abs_diff_eq!(rho.as_slice()[0], 2.0);
        assert_eq!(rho.to_measure(&w), mu);
        assert!(DensityVector::new(vec![1.0, 2.0], &w).is_err());
    }
}
