//! Example spaces and their foliations.
//!
//! Every generator returns a space that passes strict validation. Grids put
//! their nodes on multiples of a step with its low mantissa bits cleared
//! (see [`grid_step`]), so every distance `|i - j| h` and every sum of two
//! of them is exact. Metrics
//! computed through `arccos`, square roots or shortest paths are moved onto
//! a lattice by [`snap_metric`], which makes the triangle inequality hold
//! exactly in floating point at the price of a perturbation of a few units
//! in the 40th bit.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::foliation::Partition;
use crate::space::{Coords, FiniteMMSpace};
use crate::spectral::chain_order;

/// Significant bits kept by metric lattices.
pub const LATTICE_BITS: i32 = 40;
/// Weights that would underflow are raised to this floor so that the space
/// keeps full support.
pub const WEIGHT_FLOOR: f64 = 1e-300;
/// Stencil radius of warped-product edges, in grid steps.
pub const WARP_STENCIL: i64 = 3;

fn round_bits(x: f64, bits: i32) -> f64 {
    let e = x.log2().floor() as i32;
    let scale = 2f64.powi(bits - 1 - e);
    (x * scale).round() / scale
}

/// Rounds `x > 0` so that `k x` is exact for every integer `k ≤ count`.
pub fn grid_step(x: f64, count: usize) -> f64 {
    let needed = (usize::BITS - count.max(1).leading_zeros()) as i32;
    round_bits(x, 52 - needed)
}

/// Moves a symmetric, approximately metric matrix onto the lattice
/// `δ Z` with `δ = 2^{⌈log₂ diam⌉ - 40}`: every off-diagonal entry becomes
/// `(⌈d/δ⌉ + 2) δ`. For inputs whose triangle defects are below `δ`, the
/// result satisfies the triangle inequality exactly, and the map is
/// monotone, so distance minimizers are preserved.
pub fn snap_metric(dist: &mut [f64], n: usize) {
    let diam = dist.iter().copied().fold(0.0, f64::max);
    if diam == 0.0 {
        return;
    }
    let delta = 2f64.powi(diam.log2().ceil() as i32 - LATTICE_BITS);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d = dist[i * n + j];
                dist[i * n + j] = ((d / delta).ceil() + 2.0) * delta;
            }
        }
    }
}

fn normalize_weights(mut w: Vec<f64>) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Probability weights from log-weights, floored at [`WEIGHT_FLOOR`].
fn weights_from_logs(logs: &[f64]) -> Vec<f64> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    normalize_weights(logs.iter().map(|l| (l - lse).exp().max(WEIGHT_FLOOR)).collect())
}

/// Space on symmetric grid nodes `t_i = (i - (B-1)/2) h` with exact
/// distances `|i - j| h`.
fn symmetric_grid(b: usize, h: f64, weight: Vec<f64>, base: usize) -> Result<FiniteMMSpace> {
    let center = (b as f64 - 1.0) / 2.0;
    let nodes: Vec<f64> = (0..b).map(|i| (i as f64 - center) * h).collect();
    grid_space(nodes, h, weight, base)
}

fn grid_space(nodes: Vec<f64>, h: f64, weight: Vec<f64>, base: usize) -> Result<FiniteMMSpace> {
    let b = nodes.len();
    let mut dist = vec![0.0; b * b];
    for i in 0..b {
        for j in 0..b {
            dist[i * b + j] = i.abs_diff(j) as f64 * h;
        }
    }
    FiniteMMSpace::from_matrix(dist, weight, base)?.with_coords(Coords::Interval { data: nodes })
}

/// `B` cell-centred nodes on `[-πr/2, πr/2]` with weights
/// `∝ cos^{n-1}(t/r)`: the interval model of the distance-to-a-point
/// quotient of `S^n(r)`.
pub fn interval_quotient(n: usize, r: f64, b: usize) -> Result<FiniteMMSpace> {
    if n < 2 || b < 3 || !(r > 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!(
            "interval quotient needs n >= 2, B >= 3, r > 0 (got n={n}, B={b}, r={r})"
        )));
    }
    let h = grid_step(PI * r / b as f64, 2 * b);
    let center = (b as f64 - 1.0) / 2.0;
    let logs: Vec<f64> = (0..b)
        .map(|i| (n as f64 - 1.0) * (((i as f64 - center) * h) / r).cos().ln())
        .collect();
    symmetric_grid(b, h, weights_from_logs(&logs), b / 2)
}

/// `B` nodes on `[-cσ, cσ]` carrying the centred Gaussian of the given
/// variance, renormalized.
pub fn gaussian_line(variance: f64, b: usize, cutoff: f64) -> Result<FiniteMMSpace> {
    if !(variance > 0.0 && variance.is_finite()) || b < 2 {
        return Err(Error::Domain(format!(
            "gaussian line needs variance > 0 and B >= 2 (got {variance}, {b})"
        )));
    }
    if !(cutoff >= 4.0 && cutoff.is_finite()) {
        return Err(Error::Domain(format!(
            "cutoff must be at least 4 standard deviations, got {cutoff}"
        )));
    }
    let sigma = variance.sqrt();
    let h = grid_step(2.0 * cutoff * sigma / (b as f64 - 1.0), 2 * b);
    let center = (b as f64 - 1.0) / 2.0;
    let logs: Vec<f64> = (0..b)
        .map(|i| {
            let t = (i as f64 - center) * h;
            -t * t / (2.0 * variance)
        })
        .collect();
    symmetric_grid(b, h, weights_from_logs(&logs), b / 2)
}

/// `n` uniformly weighted nodes on `[0, length]`.
pub fn path(n: usize, length: f64) -> Result<FiniteMMSpace> {
    if n < 2 || !(length > 0.0 && length.is_finite()) {
        return Err(Error::Domain(format!(
            "path needs n >= 2 and length > 0 (got {n}, {length})"
        )));
    }
    let h = grid_step(length / (n as f64 - 1.0), 2 * n);
    let nodes = (0..n).map(|i| i as f64 * h).collect();
    grid_space(nodes, h, vec![1.0 / n as f64; n], 0)
}

/// Regular `n`-gon on a circle of the given circumference.
pub fn cycle(n: usize, circumference: f64) -> Result<FiniteMMSpace> {
    sphere_mesh(1, circumference / (2.0 * PI), n, 0)
}

/// `N` points on `S^n(r)`: an exact regular polygon for `n = 1`, seeded
/// uniform samples otherwise, with geodesic distances and uniform weight.
pub fn sphere_mesh(n: usize, r: f64, points: usize, seed: u64) -> Result<FiniteMMSpace> {
    if n < 1 || points < n + 2 || !(r > 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!(
            "sphere mesh needs n >= 1, r > 0 and N >= n + 2 (got n={n}, r={r}, N={points})"
        )));
    }
    let weight = vec![1.0 / points as f64; points];
    if n == 1 {
        let step = grid_step(2.0 * PI * r / points as f64, points);
        let mut dist = vec![0.0; points * points];
        for i in 0..points {
            for j in 0..points {
                let k = i.abs_diff(j);
                dist[i * points + j] = k.min(points - k) as f64 * step;
            }
        }
        let dirs = (0..points)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / points as f64;
                vec![a.cos(), a.sin()]
            })
            .collect();
        return FiniteMMSpace::from_matrix(dist, weight, 0)?.with_coords(Coords::Sphere { radius: r, data: dirs });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs: Vec<Vec<f64>> = (0..points)
        .map(|_| loop {
            let v: Vec<f64> = (0..=n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect();
    let mut dist = vec![0.0; points * points];
    for i in 0..points {
        for j in i + 1..points {
            let dot: f64 = dirs[i].iter().zip(&dirs[j]).map(|(a, b)| a * b).sum();
            let d = r * dot.clamp(-1.0, 1.0).acos();
            dist[i * points + j] = d;
            dist[j * points + i] = d;
        }
    }
    snap_metric(&mut dist, points);
    FiniteMMSpace::from_matrix(dist, weight, 0)?.with_coords(Coords::Sphere { radius: r, data: dirs })
}

fn sphere_radius(mesh: &FiniteMMSpace) -> Result<f64> {
    match mesh.coords() {
        Some(Coords::Sphere { radius, .. }) => Ok(*radius),
        _ => Err(Error::UnsupportedGeometry("expected a sphere mesh".into())),
    }
}

/// Bands of `p(x) = d(x, x̄) - πr/2` of equal width over `[-πr/2, πr/2]`;
/// empty bands are dropped.
pub fn sphere_distance_partition(mesh: &FiniteMMSpace, bands: usize) -> Result<Partition> {
    if bands == 0 {
        return Err(Error::Domain("at least one band is needed".into()));
    }
    let r = sphere_radius(mesh)?;
    let width = PI * r / bands as f64;
    let row = mesh.dist_row(mesh.base());
    let assignment: Vec<usize> = row
        .iter()
        .map(|d| ((d / width).floor() as usize).min(bands - 1))
        .collect();
    Ok(Partition::from_assignment(&assignment))
}

/// Exponent of an `l_q` product; `∞` is the max metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqExponent(pub f64);

impl LqExponent {
    pub const INFINITY: Self = Self(f64::INFINITY);
}

impl Serialize for LqExponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for LqExponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(q) => Ok(Self(q)),
            Raw::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "∞") => Ok(Self::INFINITY),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("invalid exponent {t:?}"))),
        }
    }
}

/// `Y × Z` with `d = (d_Y^q + d_Z^q)^{1/q}` (max for `q = ∞`) and product
/// weight. Point `(y, z)` has index `y |Z| + z`; the partition is by `y`.
pub fn lq_product(y: &FiniteMMSpace, z: &FiniteMMSpace, q: LqExponent) -> Result<(FiniteMMSpace, Partition)> {
    let q = q.0;
    if !(q >= 1.0) {
        return Err(Error::Domain(format!("l_q exponent must be at least 1, got {q}")));
    }
    let (ny, nz) = (y.len(), z.len());
    let n = ny * nz;
    let combine = |a: f64, b: f64| -> f64 {
        if q.is_infinite() {
            a.max(b)
        } else if q == 1.0 {
            a + b
        } else if q == 2.0 {
            a.hypot(b)
        } else {
            (a.powf(q) + b.powf(q)).powf(1.0 / q)
        }
    };
    let mut dist = vec![0.0; n * n];
    for (i, row) in dist.chunks_mut(n).enumerate() {
        let (yi, zi) = (i / nz, i % nz);
        for (j, d) in row.iter_mut().enumerate() {
            *d = combine(y.dist(yi, j / nz), z.dist(zi, j % nz));
        }
    }
    if q.is_finite() {
        snap_metric(&mut dist, n);
    }
    let labels = (0..n)
        .map(|i| format!("({},{})", y.labels()[i / nz], z.labels()[i % nz]))
        .collect();
    let weight = (0..n).map(|i| y.weight(i / nz) * z.weight(i % nz)).collect();
    let mut space = FiniteMMSpace::new(labels, dist, weight, y.base() * nz + z.base())?;
    if let (Some(ty), Some(tz)) = (y.interval_coords(), z.interval_coords()) {
        let data = (0..n).map(|i| vec![ty[i / nz], tz[i % nz]]).collect();
        space = space.with_coords(Coords::Euclidean { data })?;
    }
    let partition = Partition::new((0..ny).map(|a| (a * nz..(a + 1) * nz).collect()).collect());
    Ok((space, partition))
}

/// A profile on the points of `Y`: explicit values or `cos^power(t / radius)`
/// of the interval coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WarpTable {
    Values(Vec<f64>),
    Cosine { radius: f64, power: f64 },
}

impl WarpTable {
    pub fn evaluate(&self, y: &FiniteMMSpace) -> Result<Vec<f64>> {
        let values = match self {
            WarpTable::Values(v) => v.clone(),
            WarpTable::Cosine { radius, power } => {
                let t = y.interval_coords().ok_or_else(|| {
                    Error::UnsupportedGeometry("cosine profiles need interval coordinates on Y".into())
                })?;
                t.iter().map(|t| (t / radius).cos().max(0.0).powf(*power)).collect()
            }
        };
        if values.len() != y.len() {
            return Err(Error::Dimension(format!(
                "warp table of length {} on a {}-point base",
                values.len(),
                y.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!(
                "warp table entries must be non-negative, found {v}"
            )));
        }
        Ok(values)
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Discrete warped product `Y ×_w Z` over neighbour grids: `Y` a 1-D grid,
/// `Z` a 1-D grid or a circle. Edges join grid points whose index offsets
/// `(a, b)` are primitive with `|a|, |b| ≤ 3`, with length
/// `√(Δy² + w̄_d² Δz²)`; the metric is the shortest-path distance. Rows with
/// `w_m = 0` are removed and rows with `w_d = 0` collapse to a single point.
pub fn warped_product(
    y: &FiniteMMSpace,
    z: &FiniteMMSpace,
    w_d: &WarpTable,
    w_m: &WarpTable,
) -> Result<(FiniteMMSpace, Partition)> {
    let (y_order, y_closed) = chain_order(y)?;
    if y_closed {
        return Err(Error::UnsupportedGeometry(
            "the base of a warped product must be an interval".into(),
        ));
    }
    let (z_order, z_closed) = chain_order(z)?;
    let wd = w_d.evaluate(y)?;
    let wm = w_m.evaluate(y)?;
    if wm.iter().all(|v| *v == 0.0) {
        return Err(Error::Domain("w_m vanishes identically".into()));
    }
    let (ny, nz) = (y_order.len(), z_order.len());

    // vertex ids per (row, column) in grid order
    let mut id = vec![usize::MAX; ny * nz];
    let mut labels = Vec::new();
    let mut weight = Vec::new();
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for (r, &yi) in y_order.iter().enumerate() {
        if wm[yi] == 0.0 {
            continue;
        }
        let mut class = Vec::new();
        if wd[yi] == 0.0 {
            let v = labels.len();
            labels.push(format!("({},*)", y.labels()[yi]));
            weight.push(wm[yi] * y.weight(yi));
            class.push(v);
            (0..nz).for_each(|c| id[r * nz + c] = v);
        } else {
            for (c, &zi) in z_order.iter().enumerate() {
                let v = labels.len();
                labels.push(format!("({},{})", y.labels()[yi], z.labels()[zi]));
                weight.push(wm[yi] * y.weight(yi) * z.weight(zi));
                class.push(v);
                id[r * nz + c] = v;
            }
        }
        classes.push(class);
    }
    let n = labels.len();

    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for r in 0..ny as i64 {
        for c in 0..nz as i64 {
            let from = id[(r as usize) * nz + c as usize];
            if from == usize::MAX {
                continue;
            }
            for a in 0..=WARP_STENCIL {
                for b in -WARP_STENCIL..=WARP_STENCIL {
                    if (a == 0 && b <= 0) || gcd(a, b) != 1 {
                        continue;
                    }
                    let r2 = r + a;
                    let c2 = if z_closed { (c + b).rem_euclid(nz as i64) } else { c + b };
                    if r2 >= ny as i64 || c2 < 0 || c2 >= nz as i64 {
                        continue;
                    }
                    let to = id[(r2 as usize) * nz + c2 as usize];
                    if to == usize::MAX || to == from {
                        continue;
                    }
                    let (ya, yb) = (y_order[r as usize], y_order[r2 as usize]);
                    let dy = y.dist(ya, yb);
                    let dz = z.dist(z_order[c as usize], z_order[c2 as usize]);
                    let w_bar = 0.5 * (wd[ya] + wd[yb]);
                    let len = (dy * dy + w_bar * w_bar * dz * dz).sqrt();
                    adjacency[from].push((to, len));
                    adjacency[to].push((from, len));
                }
            }
        }
    }

    let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|s| dijkstra(&adjacency, s)).collect();
    if rows.iter().flatten().any(|d| d.is_infinite()) {
        return Err(Error::Generation("warped product support is disconnected".into()));
    }
    let mut dist: Vec<f64> = rows.into_iter().flatten().collect();
    // shortest paths are symmetric only up to summation order
    for i in 0..n {
        for j in i + 1..n {
            let d = dist[i * n + j].min(dist[j * n + i]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    snap_metric(&mut dist, n);

    let y_base_row = y_order.iter().position(|&v| v == y.base()).expect("base in Y");
    let z_base_col = z_order.iter().position(|&v| v == z.base()).expect("base in Z");
    let base = match id[y_base_row * nz + z_base_col] {
        usize::MAX => 0,
        v => v,
    };
    let space = FiniteMMSpace::new(labels, dist, normalize_weights(weight), base)?;
    Ok((space, Partition::new(classes)))
}

fn dijkstra(adjacency: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    #[derive(PartialEq)]
    struct Key(f64);
    impl Eq for Key {}
    impl PartialOrd for Key {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Key {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&other.0)
        }
    }
    let mut dist = vec![f64::INFINITY; adjacency.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Reverse((Key(0.0), source)));
    while let Some(Reverse((Key(d), v))) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(u, len) in &adjacency[v] {
            let nd = d + len;
            if nd < dist[u] {
                dist[u] = nd;
                heap.push(Reverse((Key(nd), u)));
            }
        }
    }
    dist
}

/// `S²(r)` as the warped product of a cell-centred interval of `b` nodes
/// with a circle of `m` nodes, `w_d = cos(t/r)` and `w_m = cos(t/r)`.
pub fn warped_sphere(r: f64, b: usize, m: usize) -> Result<(FiniteMMSpace, Partition)> {
    let h = grid_step(PI * r / b as f64, 2 * b);
    let y = symmetric_grid(b, h, vec![1.0 / b as f64; b], b / 2)?;
    let z = cycle(m, 2.0 * PI * r)?;
    let profile = WarpTable::Cosine { radius: r, power: 1.0 };
    warped_product(&y, &z, &profile, &profile)
}

/// Orbits of the group generated by the given permutations, which must map
/// distances and weights exactly onto themselves.
pub fn group_quotient(space: &FiniteMMSpace, generators: &[Vec<usize>]) -> Result<Partition> {
    let n = space.len();
    for (g, perm) in generators.iter().enumerate() {
        crate::space::check_permutation(perm, n).map_err(|e| Error::NotIsometric {
            index: g,
            reason: e.to_string(),
        })?;
        if let Some(i) = (0..n).find(|&i| space.weight(perm[i]) != space.weight(i)) {
            return Err(Error::NotIsometric {
                index: g,
                reason: format!(
                    "weight of {i} is {} but its image {} has {}",
                    space.weight(i),
                    perm[i],
                    space.weight(perm[i])
                ),
            });
        }
        for i in 0..n {
            if let Some(j) = (i + 1..n).find(|&j| space.dist(perm[i], perm[j]) != space.dist(i, j)) {
                return Err(Error::NotIsometric {
                    index: g,
                    reason: format!(
                        "d({i},{j}) = {} but d({},{}) = {}",
                        space.dist(i, j),
                        perm[i],
                        perm[j],
                        space.dist(perm[i], perm[j])
                    ),
                });
            }
        }
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for perm in generators {
        for (i, &j) in perm.iter().enumerate() {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    Ok(Partition::from_assignment(&roots))
}

/// A connected random graph with integer edge lengths in `1..=5` and its
/// shortest-path metric, with random positive weights. All distances are
/// small integers, so the metric is exact.
pub fn random_metric_space(n: usize, seed: u64) -> Result<FiniteMMSpace> {
    if n < 2 {
        return Err(Error::Domain("random metric space needs at least two points".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let link = |a: usize, b: usize, len: f64, adj: &mut Vec<Vec<(usize, f64)>>| {
        adj[a].push((b, len));
        adj[b].push((a, len));
    };
    for v in 1..n {
        let u = rng.random_range(0..v);
        let len = rng.random_range(1..=5) as f64;
        link(u, v, len, &mut adjacency);
    }
    for _ in 0..n {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b {
            let len = rng.random_range(1..=5) as f64;
            link(a, b, len, &mut adjacency);
        }
    }
    let dist: Vec<f64> = (0..n).flat_map(|s| dijkstra(&adjacency, s)).collect();
    let weight = normalize_weights((0..n).map(|_| rng.random_range(0.2..1.0)).collect());
    FiniteMMSpace::from_matrix(dist, weight, 0)
}

/// Four points on a unit-step path with weights `(0.1, 0.4, 0.1, 0.4)` and
/// the partition `{a, d}, {b, c}`: a metric foliation whose fiber measures
/// are at `W₂ = √2.8 > 1 = d*`.
pub fn path_counterexample() -> Result<(FiniteMMSpace, Partition)> {
    let mut dist = vec![0.0; 16];
    for i in 0..4 {
        for j in 0..4 {
            dist[i * 4 + j] = i.abs_diff(j) as f64;
        }
    }
    let labels = ["a", "b", "c", "d"].map(String::from).to_vec();
    let space = FiniteMMSpace::new(labels, dist, vec![0.1, 0.4, 0.1, 0.4], 0)?;
    Ok((space, Partition::new(vec![vec![0, 3], vec![1, 2]])))
}

/// Generator configuration, as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    SphereMesh {
        n: usize,
        r: f64,
        #[serde(rename = "N")]
        points: usize,
        seed: u64,
    },
    SphereBands {
        mesh: Box<GeneratorSpec>,
        bands: usize,
    },
    IntervalQuotient {
        n: usize,
        r: f64,
        #[serde(rename = "B")]
        b: usize,
    },
    GaussianLine {
        variance: f64,
        #[serde(rename = "B")]
        b: usize,
        cutoff: f64,
    },
    LqProduct {
        y: Box<GeneratorSpec>,
        z: Box<GeneratorSpec>,
        q: LqExponent,
    },
    WarpedProduct {
        y: Box<GeneratorSpec>,
        z: Box<GeneratorSpec>,
        w_d: WarpTable,
        w_m: WarpTable,
    },
    WarpedSphere {
        r: f64,
        #[serde(rename = "B")]
        b: usize,
        #[serde(rename = "M")]
        m: usize,
    },
    GroupQuotient {
        space: Box<GeneratorSpec>,
        generators: Vec<Vec<usize>>,
    },
    Cycle {
        #[serde(rename = "N")]
        n: usize,
        circumference: f64,
    },
    Path {
        #[serde(rename = "N")]
        n: usize,
        length: f64,
    },
    RandomMetric {
        #[serde(rename = "N")]
        n: usize,
        seed: u64,
    },
}

/// A generated space with its canonical partition, if it has one.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub space: FiniteMMSpace,
    pub partition: Option<Partition>,
}

impl GeneratorSpec {
    pub fn generate(&self) -> Result<Generated> {
        let plain = |space| Generated { space, partition: None };
        let split = |(space, p)| Generated {
            space,
            partition: Some(p),
        };
        Ok(match self {
            Self::SphereMesh { n, r, points, seed } => plain(sphere_mesh(*n, *r, *points, *seed)?),
            Self::SphereBands { mesh, bands } => {
                let space = mesh.generate()?.space;
                let partition = sphere_distance_partition(&space, *bands)?;
                split((space, partition))
            }
            Self::IntervalQuotient { n, r, b } => plain(interval_quotient(*n, *r, *b)?),
            Self::GaussianLine { variance, b, cutoff } => plain(gaussian_line(*variance, *b, *cutoff)?),
            Self::LqProduct { y, z, q } => split(lq_product(&y.generate()?.space, &z.generate()?.space, *q)?),
            Self::WarpedProduct { y, z, w_d, w_m } => {
                split(warped_product(&y.generate()?.space, &z.generate()?.space, w_d, w_m)?)
            }
            Self::WarpedSphere { r, b, m } => split(warped_sphere(*r, *b, *m)?),
            Self::GroupQuotient { space, generators } => {
                let space = space.generate()?.space;
                let partition = group_quotient(&space, generators)?;
                split((space, partition))
            }
            Self::Cycle { n, circumference } => plain(cycle(*n, *circumference)?),
            Self::Path { n, length } => plain(path(*n, *length)?),
            Self::RandomMetric { n, seed } => plain(random_metric_space(*n, *seed)?),
        })
    }

    /// Whether the output depends on a seed.
    pub fn is_stochastic(&self) -> bool {
        match self {
            Self::SphereMesh { n, .. } => *n >= 2,
            Self::RandomMetric { .. } => true,
            Self::SphereBands { mesh: s, .. } | Self::GroupQuotient { space: s, .. } => s.is_stochastic(),
            Self::LqProduct { y, z, .. } | Self::WarpedProduct { y, z, .. } => y.is_stochastic() || z.is_stochastic(),
            _ => false,
        }
    }
}
