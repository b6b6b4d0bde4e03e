//! Weighted graphs as discrete stand-ins for the Cheeger energy.
//!
//! A [`GraphOperator`] pairs a vertex measure `m` with symmetric edge
//! conductances `w`. The local slope of a function is
//!
//! ```text
//! s_i = ( ½ Σ_j (w_ij / m_i) (f_j - f_i)² )^{1/2}
//! ```
//!
//! and the `q`-energy is `E_q(f) = (1/q) Σ_i m_i s_i^q`. With the `½` inside
//! the slope, `E_2(f) = ½ Σ_{i<j} w_ij (f_i - f_j)² = ½ ⟨f, L f⟩_m` for the
//! Laplacian `L = M⁻¹(D - W)`, so the `q = 2` gap `2 E_2 / Var_m` is exactly
//! the first non-zero eigenvalue of `L`.
//!
//! Graphs come from two places. Chain, cycle and Kronecker product graphs
//! are exact: quotient identities hold to rounding. Kernel graphs built from
//! point clouds are consistent only up to the bandwidth and sampling error.

mod eigen;
mod gap;

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{Coords, FiniteMMSpace};

pub use eigen::{eigensolvers, DenseEigensolver, Eigensolver, LanczosEigensolver, DENSE_LIMIT};
pub use gap::{spectral_gap_q, GapOptions, GapReport};

/// Kernel values below this are not turned into edges.
pub const KERNEL_CUTOFF: f64 = 1e-12;
/// Relative tolerance used to group eigenvalues into multiplicities.
pub const MULTIPLICITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Explicit { label: String },
    Kernel { bandwidth: f64, scaling: KernelScaling },
}

/// How kernel conductances are normalized.
///
/// The density-corrected variants use `k̃_ij = k_ij / (q_i q_j)` with
/// `q_i = Σ_j m_j k_ij`, conductance `m_i m_j k̃_ij / (t Z)` and vertex
/// measure `m_i d_i / Z`, where `d_i = Σ_j m_j k̃_ij` and `Z` normalizes the
/// measure. The operator is `Lf_i = Σ_j m_j k̃_ij (f_i - f_j) / (t d_i)`,
/// which approximates the Laplace–Beltrami operator whatever the sampling
/// density. They differ only in whether `j = i` enters `q_i` and `d_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelScaling {
    /// Sums include `j = i`, the right quadrature on regular grids.
    Quadrature,
    /// Sums skip `j = i`, the unbiased estimate for i.i.d. samples.
    Sampled,
    /// `w_ij = m_i m_j k_ij / (2t)` with vertex measure `m`, no calibration.
    Raw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphOperator {
    measure: Vec<f64>,
    adjacency: Vec<Vec<(usize, f64)>>,
    provenance: Provenance,
}

impl GraphOperator {
    /// Builds a graph from undirected edges; repeated edges add up.
    pub fn new(measure: Vec<f64>, edges: &[(usize, usize, f64)], provenance: Provenance) -> Result<Self> {
        let n = measure.len();
        if n == 0 {
            return Err(Error::Dimension("a graph needs at least one vertex".into()));
        }
        if let Some((i, m)) = measure.iter().enumerate().find(|(_, m)| !(m.is_finite() && **m > 0.0)) {
            return Err(Error::Input(format!("vertex measure at {i} is {m}")));
        }
        let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::Dimension(format!("edge ({i}, {j}) on {n} vertices")));
            }
            if i == j {
                return Err(Error::Input(format!("self loop at {i}")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Input(format!("conductance {w} on edge ({i}, {j})")));
            }
            if w > 0.0 {
                adjacency[i].push((j, w));
                adjacency[j].push((i, w));
            }
        }
        for row in &mut adjacency {
            row.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(j, w) in row.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += w,
                    _ => merged.push((j, w)),
                }
            }
            *row = merged;
        }
        let g = Self {
            measure,
            adjacency,
            provenance,
        };
        if !g.is_connected() {
            return Err(Error::Disconnected);
        }
        Ok(g)
    }

    /// From a dense conductance matrix, which must be symmetric with a zero
    /// diagonal.
    pub fn from_dense(measure: Vec<f64>, conductance: &[f64], provenance: Provenance) -> Result<Self> {
        let n = measure.len();
        if conductance.len() != n * n {
            return Err(Error::Dimension(format!(
                "conductance matrix has {} entries for {n} vertices",
                conductance.len()
            )));
        }
        let mut edges = Vec::new();
        for i in 0..n {
            if conductance[i * n + i] != 0.0 {
                return Err(Error::Input(format!("non-zero diagonal conductance at {i}")));
            }
            for j in i + 1..n {
                if conductance[i * n + j] != conductance[j * n + i] {
                    return Err(Error::Input(format!("conductance not symmetric at ({i}, {j})")));
                }
                edges.push((i, j, conductance[i * n + j]));
            }
        }
        Self::new(measure, &edges, provenance)
    }

    pub fn len(&self) -> usize {
        self.measure.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measure.is_empty()
    }

    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.adjacency[i].iter().map(|e| e.1).sum()
    }

    /// Each undirected edge once, as `(i, j, w)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().filter(move |e| e.0 > i).map(move |&(j, w)| (i, j, w)))
    }

    pub fn conductance(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i]
            .binary_search_by_key(&j, |e| e.0)
            .map(|k| self.adjacency[i][k].1)
            .unwrap_or(0.0)
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    fn is_connected(&self) -> bool {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &(j, _) in &self.adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == n
    }

    /// `(L f)_i = (1/m_i) Σ_j w_ij (f_i - f_j)`.
    pub fn apply_laplacian(&self, f: &[f64]) -> Vec<f64> {
        self.adjacency
            .iter()
            .zip(&self.measure)
            .enumerate()
            .map(|(i, (row, m))| row.iter().map(|&(j, w)| w * (f[i] - f[j])).sum::<f64>() / m)
            .collect()
    }

    /// `(D - W) f`, the stiffness form.
    pub fn apply_stiffness(&self, f: &[f64]) -> Vec<f64> {
        self.adjacency
            .iter()
            .enumerate()
            .map(|(i, row)| row.iter().map(|&(j, w)| w * (f[i] - f[j])).sum())
            .collect()
    }

    /// `S = M^{-1/2} (D - W) M^{-1/2}` applied to `v`, writing into `out`.
    pub(crate) fn apply_symmetric(&self, sqrt_m: &[f64], v: &[f64], out: &mut [f64]) {
        for (i, row) in self.adjacency.iter().enumerate() {
            let vi = v[i] / sqrt_m[i];
            let s: f64 = row.iter().map(|&(j, w)| w * (vi - v[j] / sqrt_m[j])).sum();
            out[i] = s / sqrt_m[i];
        }
    }

    /// Trace of `L`, which equals the sum of its eigenvalues.
    pub fn laplacian_trace(&self) -> f64 {
        (0..self.len()).map(|i| self.degree(i) / self.measure[i]).sum()
    }
}

/// Kernel graph with [`KernelScaling::Quadrature`].
pub fn build_kernel_graph(space: &FiniteMMSpace, bandwidth: f64) -> Result<GraphOperator> {
    build_kernel_graph_with(space, bandwidth, KernelScaling::Quadrature)
}

pub fn build_kernel_graph_with(space: &FiniteMMSpace, bandwidth: f64, scaling: KernelScaling) -> Result<GraphOperator> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::Domain(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let n = space.len();
    let m = space.weights();
    let kernel = |d: f64| (-d * d / (4.0 * bandwidth)).exp();
    let mut pairs = Vec::new();
    for i in 0..n {
        let row = space.dist_row(i);
        for (j, &d) in row.iter().enumerate().skip(i + 1) {
            let k = kernel(d);
            if k >= KERNEL_CUTOFF {
                pairs.push((i, j, k));
            }
        }
    }
    let disconnected = || Error::Bandwidth {
        bandwidth,
        suggested: connecting_bandwidth(space),
    };
    let (measure, edges) = match scaling {
        KernelScaling::Raw => {
            let edges = pairs
                .iter()
                .map(|&(i, j, k)| (i, j, m[i] * m[j] * k / (2.0 * bandwidth)))
                .collect::<Vec<_>>();
            (m.to_vec(), edges)
        }
        KernelScaling::Quadrature | KernelScaling::Sampled => {
            let own = if scaling == KernelScaling::Quadrature { 1.0 } else { 0.0 };
            let mut q: Vec<f64> = m.iter().map(|mi| own * mi).collect();
            for &(i, j, k) in &pairs {
                q[i] += m[j] * k;
                q[j] += m[i] * k;
            }
            if q.iter().zip(m).any(|(q, mi)| *q <= own * mi) {
                return Err(disconnected());
            }
            let normalized: Vec<(usize, usize, f64)> =
                pairs.iter().map(|&(i, j, k)| (i, j, k / (q[i] * q[j]))).collect();
            let mut d: Vec<f64> = (0..n).map(|i| own * m[i] / (q[i] * q[i])).collect();
            for &(i, j, k) in &normalized {
                d[i] += m[j] * k;
                d[j] += m[i] * k;
            }
            let total: f64 = d.iter().zip(m).map(|(d, m)| d * m).sum();
            let measure = d.iter().zip(m).map(|(d, m)| d * m / total).collect();
            let edges = normalized
                .iter()
                .map(|&(i, j, k)| (i, j, m[i] * m[j] * k / (bandwidth * total)))
                .collect::<Vec<_>>();
            (measure, edges)
        }
    };
    let provenance = Provenance::Kernel { bandwidth, scaling };
    GraphOperator::new(measure, &edges, provenance).map_err(|e| match e {
        Error::Disconnected => disconnected(),
        other => other,
    })
}

/// Smallest bandwidth at which the kernel graph is connected: the longest
/// edge of a minimum spanning tree must survive the cutoff.
fn connecting_bandwidth(space: &FiniteMMSpace) -> f64 {
    let n = space.len();
    let mut best = vec![f64::INFINITY; n];
    let mut used = vec![false; n];
    best[0] = 0.0;
    let mut longest: f64 = 0.0;
    for _ in 0..n {
        let i = (0..n)
            .filter(|&i| !used[i])
            .min_by(|&a, &b| best[a].total_cmp(&best[b]))
            .expect("unvisited vertex");
        used[i] = true;
        longest = longest.max(best[i]);
        for (j, d) in space.dist_row(i).iter().enumerate() {
            if !used[j] && *d < best[j] {
                best[j] = *d;
            }
        }
    }
    longest * longest / (4.0 * (1.0 / KERNEL_CUTOFF).ln()) * (1.0 + 1e-9)
}

/// Neighbour structure of a 1-D space: a path for interval coordinates and a
/// cycle for points on a circle, with `w = ((m_i + m_j) / 2) / h²`.
pub fn build_chain_graph(space: &FiniteMMSpace) -> Result<GraphOperator> {
    let (order, closed) = chain_order(space)?;
    let m = space.weights();
    let mut edges = Vec::with_capacity(order.len());
    let count = order.len();
    let links = if closed { count } else { count - 1 };
    for k in 0..links {
        let (i, j) = (order[k], order[(k + 1) % count]);
        let h = space.dist(i, j);
        edges.push((i, j, 0.5 * (m[i] + m[j]) / (h * h)));
    }
    let label = if closed { "cycle" } else { "chain" };
    GraphOperator::new(m.to_vec(), &edges, Provenance::Explicit { label: label.into() })
}

/// Vertex order along the 1-D structure and whether it closes up.
pub(crate) fn chain_order(space: &FiniteMMSpace) -> Result<(Vec<usize>, bool)> {
    match space.coords() {
        Some(Coords::Interval { data }) => {
            let mut order: Vec<usize> = (0..data.len()).collect();
            order.sort_by(|&a, &b| data[a].total_cmp(&data[b]));
            if order.windows(2).any(|w| data[w[0]] == data[w[1]]) {
                return Err(Error::UnsupportedGeometry("repeated interval coordinate".into()));
            }
            Ok((order, false))
        }
        Some(Coords::Sphere { data, .. }) if data.first().is_some_and(|u| u.len() == 2) => {
            let angle: Vec<f64> = data.iter().map(|u| u[1].atan2(u[0])).collect();
            let mut order: Vec<usize> = (0..data.len()).collect();
            order.sort_by(|&a, &b| angle[a].total_cmp(&angle[b]));
            Ok((order, data.len() > 2))
        }
        _ => Err(Error::UnsupportedGeometry(
            "chain graphs need interval or circle coordinates".into(),
        )),
    }
}

/// Kronecker sum: `(y, z) ~ (y', z)` with `w_Y(y, y') m_Z(z)` and
/// `(y, z) ~ (y, z')` with `m_Y(y) w_Z(z, z')`. Vertex `(y, z)` has index
/// `y * |Z| + z`, matching [`crate::generators::lq_product`].
pub fn build_product_graph(gy: &GraphOperator, gz: &GraphOperator) -> Result<GraphOperator> {
    let nz = gz.len();
    let measure: Vec<f64> = gy
        .measure
        .iter()
        .flat_map(|my| gz.measure.iter().map(move |mz| my * mz))
        .collect();
    let mut edges = Vec::with_capacity(gy.edge_count() * nz + gz.edge_count() * gy.len());
    for (a, b, w) in gy.edges() {
        for (z, mz) in gz.measure.iter().enumerate() {
            edges.push((a * nz + z, b * nz + z, w * mz));
        }
    }
    for (y, my) in gy.measure.iter().enumerate() {
        for (a, b, w) in gz.edges() {
            edges.push((y * nz + a, y * nz + b, my * w));
        }
    }
    GraphOperator::new(
        measure,
        &edges,
        Provenance::Explicit {
            label: "product".into(),
        },
    )
}

/// Aggregated graph on the classes of `map`: `m*(y) = Σ m_x` and
/// `w*(y, y') = Σ w_xx'` over edges joining the two classes. For a Kronecker
/// product and the projection to a factor this returns that factor.
pub fn build_quotient_graph(g: &GraphOperator, map: &[usize], classes: usize) -> Result<GraphOperator> {
    if map.len() != g.len() {
        return Err(Error::Dimension("quotient map does not match the graph".into()));
    }
    let mut measure = vec![0.0; classes];
    for (x, &y) in map.iter().enumerate() {
        if y >= classes {
            return Err(Error::Dimension(format!("class {y} out of range")));
        }
        measure[y] += g.measure[x];
    }
    let edges: Vec<(usize, usize, f64)> = g
        .edges()
        .filter(|(i, j, _)| map[*i] != map[*j])
        .map(|(i, j, w)| (map[i], map[j], w))
        .collect();
    GraphOperator::new(
        measure,
        &edges,
        Provenance::Explicit {
            label: "quotient".into(),
        },
    )
}

/// Local slopes `s_i` of `f`.
pub fn local_slopes(g: &GraphOperator, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() != g.len() {
        return Err(Error::Dimension(format!(
            "function of length {} on a graph with {} vertices",
            f.len(),
            g.len()
        )));
    }
    Ok(g.adjacency
        .iter()
        .zip(&g.measure)
        .enumerate()
        .map(|(i, (row, m))| {
            let s2: f64 = row
                .iter()
                .map(|&(j, w)| {
                    let d = f[j] - f[i];
                    w * d * d
                })
                .sum();
            (0.5 * s2 / m).sqrt()
        })
        .collect())
}

/// `E_q(f) = (1/q) Σ_i m_i s_i^q`.
pub fn dirichlet_energy_q(g: &GraphOperator, f: &[f64], q: f64) -> Result<f64> {
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::Domain(format!("energy exponent must exceed 1, got {q}")));
    }
    let s = local_slopes(g, f)?;
    Ok(s.iter()
        .zip(&g.measure)
        .map(|(s, m)| m * if q == 2.0 { s * s } else { s.powf(q) })
        .sum::<f64>()
        / q)
}

/// Eigenvalues of `L` in ascending order, optionally with eigenvectors
/// normalized in `L²(m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// Size of the cluster each eigenvalue belongs to.
    pub multiplicity: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvectors: Option<Vec<Vec<f64>>>,
}

impl Spectrum {
    pub fn new(mut eigenvalues: Vec<f64>, eigenvectors: Option<Vec<Vec<f64>>>) -> Self {
        let mut order: Vec<usize> = (0..eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eigenvalues[a].total_cmp(&eigenvalues[b]));
        let eigenvectors = eigenvectors.map(|v| order.iter().map(|&k| v[k].clone()).collect());
        eigenvalues = order.iter().map(|&k| eigenvalues[k]).collect();
        let multiplicity = cluster_sizes(&eigenvalues);
        Self {
            eigenvalues,
            multiplicity,
            eigenvectors,
        }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// First eigenvalue above the zero mode.
    pub fn gap(&self) -> Option<f64> {
        self.eigenvalues.get(1).copied()
    }

    /// `index,eigenvalue,multiplicity` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "eigenvalue", "multiplicity"])?;
        for (k, (l, m)) in self.eigenvalues.iter().zip(&self.multiplicity).enumerate() {
            w.write_record([k.to_string(), format!("{l:e}"), m.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn cluster_sizes(sorted: &[f64]) -> Vec<usize> {
    let mut out = vec![1; sorted.len()];
    let mut start = 0;
    for k in 1..=sorted.len() {
        let split = k == sorted.len() || sorted[k] - sorted[k - 1] > MULTIPLICITY_TOL * sorted[k].abs().max(1.0);
        if split {
            out[start..k].iter_mut().for_each(|m| *m = k - start);
            start = k;
        }
    }
    out
}

/// Smallest `k` eigenvalues (all when `None`), choosing the dense solver
/// below [`DENSE_LIMIT`] vertices and Lanczos above.
pub fn laplacian_spectrum(g: &GraphOperator, k: Option<usize>) -> Result<Spectrum> {
    if g.len() < DENSE_LIMIT || k.is_none() {
        DenseEigensolver.solve(g, k, false)
    } else {
        LanczosEigensolver::default().solve(g, k, false)
    }
}

/// Per-eigenvalue nearest match between two spectra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentMatch {
    pub index: usize,
    pub eigenvalue: f64,
    pub nearest: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub passed: bool,
    pub tol: f64,
    pub max_gap: f64,
    pub matches: Vec<ContainmentMatch>,
}

/// Checks that every quotient eigenvalue lies within `tol` of some total
/// eigenvalue.
pub fn containment_check(total: &Spectrum, quotient: &Spectrum, tol: f64) -> ContainmentReport {
    let matches: Vec<ContainmentMatch> = quotient
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(index, &l)| {
            let pos = total.eigenvalues.partition_point(|&t| t < l);
            let nearest = [pos.checked_sub(1), Some(pos)]
                .into_iter()
                .flatten()
                .filter_map(|p| total.eigenvalues.get(p).copied())
                .min_by(|a, b| (a - l).abs().total_cmp(&(b - l).abs()))
                .unwrap_or(f64::INFINITY);
            ContainmentMatch {
                index,
                eigenvalue: l,
                nearest,
                gap: (nearest - l).abs(),
            }
        })
        .collect();
    let max_gap = matches.iter().map(|m| m.gap).fold(0.0, f64::max);
    ContainmentReport {
        passed: max_gap <= tol,
        tol,
        max_gap,
        matches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_point() -> GraphOperator {
        GraphOperator::new(
            vec![0.5, 0.5],
            &[(0, 1, 1.0)],
            Provenance::Explicit { label: "pair".into() },
        )
        .unwrap()
    }

    pub(crate) fn path_graph(n: usize) -> GraphOperator {
        let m = vec![1.0 / n as f64; n];
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
        GraphOperator::new(m, &edges, Provenance::Explicit { label: "path".into() }).unwrap()
    }

    #[test]
    fn two_point_energy_is_frozen() {
        let g = two_point();
        // s_i² = ½ (1 / ½) 1 = 1, E_2 = ½ (½ + ½)
        assert_abs_diff_eq!(dirichlet_energy_q(&g, &[0.0, 1.0], 2.0).unwrap(), 0.5, epsilon = 1e-15);
        let spec = laplacian_spectrum(&g, None).unwrap();
        assert_abs_diff_eq!(spec.eigenvalues[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spec.eigenvalues[1], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn energy_errors_and_constants() {
        let g = two_point();
        assert!(matches!(
            dirichlet_energy_q(&g, &[0.0, 1.0], 1.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(dirichlet_energy_q(&g, &[0.0], 2.0), Err(Error::Dimension(_))));
        for q in [1.5, 2.0, 3.0] {
            assert_eq!(dirichlet_energy_q(&g, &[3.0, 3.0], q).unwrap(), 0.0);
        }
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let err = GraphOperator::new(vec![0.5, 0.5], &[], Provenance::Explicit { label: "x".into() });
        assert!(matches!(err, Err(Error::Disconnected)));
    }

    #[test]
    fn dense_input_checks() {
        let p = Provenance::Explicit { label: "pair".into() };
        assert!(GraphOperator::from_dense(vec![0.5, 0.5], &[0.0, 1.0, 2.0, 0.0], p.clone()).is_err());
        assert!(GraphOperator::from_dense(vec![0.5, 0.5], &[1.0, 1.0, 1.0, 0.0], p.clone()).is_err());
        let g = GraphOperator::from_dense(vec![0.5, 0.5], &[0.0, 1.0, 1.0, 0.0], p).unwrap();
        assert_eq!(g, two_point());
    }

    #[test]
    fn product_spectrum_is_pairwise_sums() {
        let gy = path_graph(4);
        let gz = path_graph(3);
        let prod = build_product_graph(&gy, &gz).unwrap();
        let sy = laplacian_spectrum(&gy, None).unwrap().eigenvalues;
        let sz = laplacian_spectrum(&gz, None).unwrap().eigenvalues;
        let mut sums: Vec<f64> = sy.iter().flat_map(|a| sz.iter().map(move |b| a + b)).collect();
        sums.sort_by(f64::total_cmp);
        let sp = laplacian_spectrum(&prod, None).unwrap().eigenvalues;
        for (a, b) in sums.iter().zip(&sp) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn quotient_of_product_is_factor() {
        let gy = path_graph(4);
        let gz = path_graph(3);
        let prod = build_product_graph(&gy, &gz).unwrap();
        let map: Vec<usize> = (0..12).map(|i| i / 3).collect();
        let q = build_quotient_graph(&prod, &map, 4).unwrap();
        for (a, b, w) in gy.edges() {
            assert_abs_diff_eq!(q.conductance(a, b), w, epsilon = 1e-15);
        }
        for (a, b) in q.measure().iter().zip(gy.measure()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn containment_negative_control() {
        let s = Spectrum::new(vec![0.0, 1.0, 2.5], None);
        let same = containment_check(&s, &s, 1e-12);
        assert!(same.passed && same.max_gap == 0.0);
        let shifted = Spectrum::new(vec![1.0, 2.0, 3.5], None);
        let total = Spectrum::new(vec![0.0, 0.0, 0.0], None);
        let r = containment_check(&total, &shifted, 1e-8);
        assert!(!r.passed);
        assert_abs_diff_eq!(
            containment_check(
                &Spectrum::new(vec![0.0, 1.0, 4.0], None),
                &Spectrum::new(vec![2.0], None),
                1e-8
            )
            .max_gap,
            1.0
        );
    }

    #[test]
    fn multiplicities_group_clusters() {
        let s = Spectrum::new(vec![2.0, 0.0, 1.0, 1.0 + 1e-12, 1.0], None);
        assert_eq!(s.eigenvalues, vec![0.0, 1.0, 1.0, 1.0 + 1e-12, 2.0]);
        assert_eq!(s.multiplicity, vec![1, 3, 3, 3, 1]);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("index,eigenvalue,multiplicity\n0,0e0,1\n"));
    }

    #[test]
    fn kernel_graph_is_symmetric() {
        let d = vec![0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0];
        let s = FiniteMMSpace::from_matrix(d, vec![0.2, 0.5, 0.3], 0).unwrap();
        for scaling in [KernelScaling::Quadrature, KernelScaling::Sampled, KernelScaling::Raw] {
            let g = build_kernel_graph_with(&s, 0.5, scaling).unwrap();
            for i in 0..3 {
                assert_eq!(g.conductance(i, i), 0.0);
                for j in 0..3 {
                    assert_eq!(g.conductance(i, j), g.conductance(j, i));
                }
            }
        }
        let raw = build_kernel_graph_with(&s, 0.5, KernelScaling::Raw).unwrap();
        assert_abs_diff_eq!(raw.conductance(0, 1), 0.2 * 0.5 * (-0.5f64).exp(), epsilon = 1e-15);
    }

    /// Rayleigh quotient of `sin` on a uniform grid over `[0, π]` against the
    /// analytic `∫ cos² / ∫ sin² = 1`, with `t = h²`.
    #[test]
    fn kernel_rayleigh_quotient_converges() {
        let errors: Vec<f64> = [100usize, 200, 400]
            .iter()
            .map(|&b| {
                let h = std::f64::consts::PI / (b as f64 - 1.0);
                let mut d = vec![0.0; b * b];
                for i in 0..b {
                    for j in 0..b {
                        d[i * b + j] = i.abs_diff(j) as f64 * h;
                    }
                }
                let s = FiniteMMSpace::from_matrix(d, vec![1.0 / b as f64; b], 0).unwrap();
                let g = build_kernel_graph(&s, h * h).unwrap();
                let f: Vec<f64> = (0..b).map(|i| (i as f64 * h).sin()).collect();
                let lf = g.apply_laplacian(&f);
                let num: f64 = (0..b).map(|i| g.measure()[i] * f[i] * lf[i]).sum();
                let den: f64 = (0..b).map(|i| g.measure()[i] * f[i] * f[i]).sum();
                (num / den - 1.0).abs()
            })
            .collect();
        assert!(errors[2] < errors[1] && errors[1] < errors[0], "{errors:?}");
        assert!(errors[2] < 0.02, "{errors:?}");
    }

    #[test]
    fn tiny_bandwidth_suggests_a_connecting_one() {
        let d = vec![0.0, 1.0, 1.0, 0.0];
        let s = FiniteMMSpace::from_matrix(d, vec![0.5, 0.5], 0).unwrap();
        match build_kernel_graph(&s, 1e-4) {
            Err(Error::Bandwidth { suggested, .. }) => {
                assert!(build_kernel_graph(&s, suggested).is_ok());
                assert!(build_kernel_graph(&s, suggested * 0.9).is_err());
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
