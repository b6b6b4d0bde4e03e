//! Heat flow, relative entropy along it, the entropy slope and the
//! entropy-convexity audit on the line.
//!
//! The heat semigroup on a graph is `ρ_t = exp(-tL) ρ_0`. Entropy is taken
//! against the vertex measure, and the descending slope is evaluated through
//! `|D⁻Ent|²(ρm) = 8 E_2(√ρ)`.

use std::io::Write;

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::{Named, Registry};
use crate::space::{entropy_against, DensityVector, FiniteMMSpace, ProbVector};
use crate::spectral::{dirichlet_energy_q, GraphOperator, DENSE_LIMIT};
use crate::transport::{displacement_interpolate_1d, wasserstein_1d};

/// Densities are clipped at this floor before square roots and logarithms.
pub const DENSITY_FLOOR: f64 = 1e-14;
/// Most negative density value accepted from a propagator.
pub const NEGATIVITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub times: Vec<f64>,
    pub densities: Vec<DensityVector>,
    pub entropy: Vec<f64>,
    pub slope: Vec<f64>,
    pub mass: Vec<f64>,
}

impl FlowTrajectory {
    /// `t,entropy,slope,mass` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "entropy", "slope", "mass"])?;
        for k in 0..self.times.len() {
            w.write_record([
                format!("{:e}", self.times[k]),
                format!("{:e}", self.entropy[k]),
                format!("{:e}", self.slope[k]),
                format!("{:e}", self.mass[k]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Computes `exp(-tL) ρ_0` at each requested time.
pub trait HeatPropagator: Named + Send + Sync {
    fn propagate(&self, g: &GraphOperator, rho0: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>>;
}

pub fn propagators() -> Registry<dyn HeatPropagator> {
    let mut reg: Registry<dyn HeatPropagator> = Registry::new("heat propagator");
    reg.register(Box::new(SpectralPropagator))
        .register(Box::new(CrankNicolson::default()));
    reg
}

/// Exact propagation through the eigendecomposition of
/// `S = M^{-1/2}(D - W)M^{-1/2}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SpectralPropagator;

impl Named for SpectralPropagator {
    fn name(&self) -> &'static str {
        "spectral"
    }
}

impl HeatPropagator for SpectralPropagator {
    fn propagate(&self, g: &GraphOperator, rho0: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>> {
        let n = g.len();
        let sqrt_m: Vec<f64> = g.measure().iter().map(|m| m.sqrt()).collect();
        let mut s = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            s[(i, i)] = g.degree(i) / g.measure()[i];
            for &(j, w) in g.neighbors(i) {
                s[(i, j)] = -w / (sqrt_m[i] * sqrt_m[j]);
            }
        }
        let eig = SymmetricEigen::try_new(s, f64::EPSILON, 0).ok_or(Error::Numerical {
            message: "eigendecomposition for the heat flow did not converge".into(),
            residual: f64::NAN,
        })?;
        let u0 = DVector::from_iterator(n, rho0.iter().zip(&sqrt_m).map(|(r, s)| r * s));
        let coeffs = eig.eigenvectors.transpose() * u0;
        // the zero mode is exact: it carries the conserved mass
        let lambda: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
        Ok(times
            .iter()
            .map(|&t| {
                if t == 0.0 {
                    return rho0.to_vec();
                }
                let decayed = DVector::from_iterator(n, coeffs.iter().zip(&lambda).map(|(c, l)| c * (-t * l).exp()));
                let u = &eig.eigenvectors * decayed;
                u.iter().zip(&sqrt_m).map(|(x, s)| x / s).collect()
            })
            .collect())
    }
}

/// Crank–Nicolson stepping `(M + τ/2 K) ρ' = (M - τ/2 K) ρ` with
/// `K = D - W`, each step solved by Jacobi-preconditioned conjugate
/// gradients. The step is chosen so that the accumulated truncation
/// estimate `T τ² ‖L³ρ_0‖_∞ / 12` up to the last time `T` stays below
/// `error`.
#[derive(Debug, Clone, Copy)]
pub struct CrankNicolson {
    pub error: f64,
    pub max_steps: usize,
}

impl Default for CrankNicolson {
    fn default() -> Self {
        Self {
            error: 1e-8,
            max_steps: 200_000,
        }
    }
}

impl Named for CrankNicolson {
    fn name(&self) -> &'static str {
        "crank-nicolson"
    }
}

impl CrankNicolson {
    fn step(g: &GraphOperator, rho: &[f64], tau: f64) -> Result<Vec<f64>> {
        let m = g.measure();
        let k_rho = g.apply_stiffness(rho);
        let rhs: Vec<f64> = rho
            .iter()
            .zip(m)
            .zip(&k_rho)
            .map(|((r, m), k)| m * r - 0.5 * tau * k)
            .collect();
        let diag: Vec<f64> = (0..g.len()).map(|i| m[i] + 0.5 * tau * g.degree(i)).collect();
        let apply = |v: &[f64]| -> Vec<f64> {
            let kv = g.apply_stiffness(v);
            v.iter()
                .zip(m)
                .zip(&kv)
                .map(|((v, m), k)| m * v + 0.5 * tau * k)
                .collect()
        };
        conjugate_gradient(apply, &rhs, &diag, rho.to_vec(), 1e-14)
    }
}

fn conjugate_gradient(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    diag: &[f64],
    mut x: Vec<f64>,
    tol: f64,
) -> Result<Vec<f64>> {
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let ax = apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let b_norm = dot(b, b).sqrt().max(1e-300);
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let max_iter = 10 * b.len() + 1000;
    for _ in 0..max_iter {
        if dot(&r, &r).sqrt() <= tol * b_norm {
            return Ok(x);
        }
        let ap = apply(&p);
        let alpha = rz / dot(&p, &ap);
        x.iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
        r.iter_mut().zip(&ap).for_each(|(r, a)| *r -= alpha * a);
        z = r.iter().zip(diag).map(|(r, d)| r / d).collect();
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    Err(Error::Convergence {
        iterations: max_iter,
        residual: dot(&r, &r).sqrt() / b_norm,
    })
}

impl HeatPropagator for CrankNicolson {
    fn propagate(&self, g: &GraphOperator, rho0: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>> {
        let l3 = g.apply_laplacian(&g.apply_laplacian(&g.apply_laplacian(rho0)));
        let l3_max = l3.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let horizon = times.last().copied().unwrap_or(0.0);
        let tau_max = if l3_max > 0.0 && horizon > 0.0 {
            (12.0 * self.error / (l3_max * horizon)).sqrt()
        } else {
            f64::INFINITY
        };
        let mut out = Vec::with_capacity(times.len());
        let mut rho = rho0.to_vec();
        let mut now = 0.0;
        let mut steps = 0;
        for &t in times {
            let span = t - now;
            if span > 0.0 {
                let count = (span / tau_max).ceil().max(1.0) as usize;
                steps += count;
                if steps > self.max_steps {
                    return Err(Error::Convergence {
                        iterations: steps,
                        residual: tau_max,
                    });
                }
                let tau = span / count as f64;
                for _ in 0..count {
                    rho = Self::step(g, &rho, tau)?;
                }
                now = t;
            }
            out.push(if t == 0.0 { rho0.to_vec() } else { rho.clone() });
        }
        Ok(out)
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::Domain("flow times must be finite and non-negative".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("flow times must be ascending".into()));
    }
    Ok(())
}

/// Heat flow with the spectral propagator below [`DENSE_LIMIT`] vertices and
/// Crank–Nicolson above.
pub fn heat_flow(g: &GraphOperator, rho0: &DensityVector, times: &[f64]) -> Result<FlowTrajectory> {
    if g.len() < DENSE_LIMIT {
        heat_flow_with(&SpectralPropagator, g, rho0, times)
    } else {
        heat_flow_with(&CrankNicolson::default(), g, rho0, times)
    }
}

pub fn heat_flow_with(
    propagator: &dyn HeatPropagator,
    g: &GraphOperator,
    rho0: &DensityVector,
    times: &[f64],
) -> Result<FlowTrajectory> {
    if rho0.len() != g.len() {
        return Err(Error::Dimension(format!(
            "density of length {} on a graph with {} vertices",
            rho0.len(),
            g.len()
        )));
    }
    check_times(times)?;
    let raw = propagator.propagate(g, rho0.as_slice(), times)?;
    let m = g.measure();
    let mut traj = FlowTrajectory {
        times: times.to_vec(),
        densities: Vec::with_capacity(times.len()),
        entropy: Vec::with_capacity(times.len()),
        slope: Vec::with_capacity(times.len()),
        mass: Vec::with_capacity(times.len()),
    };
    for (mut rho, &t) in raw.into_iter().zip(times) {
        if let Some((index, &value)) = rho
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .filter(|(_, v)| **v < -NEGATIVITY_TOL)
        {
            return Err(Error::Stability { index, value, time: t });
        }
        rho.iter_mut().for_each(|v| *v = v.max(0.0));
        let mass: f64 = rho.iter().zip(m).map(|(r, m)| r * m).sum();
        let density = DensityVector::new(rho, m)?;
        traj.entropy.push(density_entropy(&density, m));
        traj.slope.push(entropy_slope(g, &density)?);
        traj.mass.push(mass);
        traj.densities.push(density);
    }
    Ok(traj)
}

/// `Σ m_i ρ_i log ρ_i`.
pub fn density_entropy(rho: &DensityVector, m: &[f64]) -> f64 {
    rho.as_slice()
        .iter()
        .zip(m)
        .filter(|(r, _)| **r > 0.0)
        .map(|(r, m)| m * r * r.ln())
        .sum()
}

/// `|D⁻Ent|(ρm) = (8 E_2(√ρ))^{1/2}`, with `ρ` clipped at [`DENSITY_FLOOR`].
pub fn entropy_slope(g: &GraphOperator, rho: &DensityVector) -> Result<f64> {
    let mut clipped = 0;
    let root: Vec<f64> = rho
        .as_slice()
        .iter()
        .map(|&r| {
            if r < DENSITY_FLOOR {
                clipped += 1;
            }
            r.max(DENSITY_FLOOR).sqrt()
        })
        .collect();
    if clipped > 0 {
        warn!("entropy slope: clipped {clipped} density values at {DENSITY_FLOOR:e}");
    }
    Ok((8.0 * dirichlet_energy_q(g, &root, 2.0)?).sqrt())
}

/// Lower bound for the slope on a 1-D grid from the supremum formula
/// `sup_ν [Ent(μ) - Ent(ν) + (K/2) W₂(μ, ν)²]⁺ / W₂(μ, ν)` over the given
/// candidates `ν`.
pub fn slope_probe(grid: &FiniteMMSpace, mu: &ProbVector, k: f64, candidates: &[ProbVector]) -> Result<f64> {
    let nodes = grid
        .interval_coords()
        .ok_or_else(|| Error::UnsupportedGeometry("slope probe needs interval coordinates".into()))?;
    let ent_mu = entropy_against(mu.as_slice(), grid.weights())?;
    let mut best: f64 = 0.0;
    for nu in candidates {
        let w = wasserstein_1d(nodes, mu.as_slice(), nu.as_slice(), 2.0)?;
        if w > 0.0 {
            let gain = ent_mu - entropy_against(nu.as_slice(), grid.weights())? + 0.5 * k * w * w;
            best = best.max(gain.max(0.0) / w);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdeInterval {
    pub start: f64,
    pub end: f64,
    pub entropy_drop: f64,
    /// Trapezoidal `∫ |D⁻Ent|² dt` over the interval.
    pub dissipation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdeReport {
    pub intervals: Vec<EdeInterval>,
    pub total_drop: f64,
    pub total_dissipation: f64,
    /// `|drop - dissipation| / dissipation` over the whole trajectory, zero
    /// when both vanish.
    pub mismatch: f64,
    /// Whether the entropy trace never increases (up to rounding).
    pub entropy_monotone: bool,
}

/// Compares entropy decrease with the integrated squared slope.
pub fn ede_audit(traj: &FlowTrajectory) -> EdeReport {
    let intervals: Vec<EdeInterval> = (1..traj.times.len())
        .map(|k| EdeInterval {
            start: traj.times[k - 1],
            end: traj.times[k],
            entropy_drop: traj.entropy[k - 1] - traj.entropy[k],
            dissipation: 0.5
                * (traj.times[k] - traj.times[k - 1])
                * (traj.slope[k - 1].powi(2) + traj.slope[k].powi(2)),
        })
        .collect();
    let total_drop: f64 = intervals.iter().map(|i| i.entropy_drop).sum();
    let total_dissipation: f64 = intervals.iter().map(|i| i.dissipation).sum();
    let mismatch = if total_dissipation == 0.0 && total_drop.abs() <= 1e-15 {
        0.0
    } else {
        (total_drop - total_dissipation).abs() / total_dissipation.abs()
    };
    let scale = traj.entropy.iter().fold(1.0f64, |a, e| a.max(e.abs()));
    EdeReport {
        entropy_monotone: traj.entropy.windows(2).all(|w| w[1] <= w[0] + 1e-13 * scale),
        intervals,
        total_drop,
        total_dissipation,
        mismatch,
    }
}

/// Interpolation times probed by the convexity audit.
pub const CONVEXITY_TIMES: [f64; 3] = [0.25, 0.5, 0.75];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexityOptions {
    pub trials: usize,
    pub seed: u64,
    /// `C` in the pass threshold `C h`, `h` the largest grid step.
    pub slack_constant: f64,
}

impl Default for ConvexityOptions {
    fn default() -> Self {
        Self {
            trials: 50,
            seed: 0,
            slack_constant: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityTrial {
    pub w2: f64,
    /// `D(t)` at each of [`CONVEXITY_TIMES`].
    pub defects: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub k: f64,
    pub h: f64,
    pub slack: f64,
    pub max_defect: f64,
    pub passed: bool,
    pub trials: Vec<ConvexityTrial>,
}

/// A random smooth probability vector on the grid: one to three Gaussian
/// bumps, taken as a density against the grid weight.
fn random_bumps(rng: &mut ChaCha8Rng, nodes: &[f64], weight: &[f64]) -> Result<ProbVector> {
    let (lo, hi) = (nodes[0], nodes[nodes.len() - 1]);
    let span = hi - lo;
    // keep bumps in the bulk of weighted grids, where the weight is not tiny
    let (c_lo, c_hi) = (lo + 0.15 * span, hi - 0.15 * span);
    let count = rng.random_range(1..=3);
    let bumps: Vec<(f64, f64, f64)> = (0..count)
        .map(|_| {
            (
                rng.random_range(c_lo..=c_hi),
                span * rng.random_range(0.04..0.15),
                rng.random_range(0.5..1.5),
            )
        })
        .collect();
    let raw = nodes
        .iter()
        .zip(weight)
        .map(|(x, w)| {
            let rho: f64 = bumps
                .iter()
                .map(|(c, s, a)| a * (-0.5 * ((x - c) / s).powi(2)).exp())
                .sum();
            rho * w
        })
        .collect();
    ProbVector::normalized(raw)
}

/// Audits `K`-convexity of the entropy along 1-D displacement
/// interpolations between random smooth densities.
pub fn k_convexity_audit(grid: &FiniteMMSpace, k: f64, opts: &ConvexityOptions) -> Result<ConvexityReport> {
    let nodes = grid
        .interval_coords()
        .ok_or_else(|| Error::UnsupportedGeometry("convexity audit needs interval coordinates".into()))?;
    if nodes.len() < 3 {
        return Err(Error::Input("convexity audit needs at least three grid points".into()));
    }
    let h = nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let weight = grid.weights();
    let trials: Vec<ConvexityTrial> = (0..opts.trials)
        .into_par_iter()
        .map(|trial| -> Result<ConvexityTrial> {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(trial as u64));
            let mu0 = random_bumps(&mut rng, nodes, weight)?;
            let mu1 = random_bumps(&mut rng, nodes, weight)?;
            let w2 = wasserstein_1d(nodes, mu0.as_slice(), mu1.as_slice(), 2.0)?;
            let e0 = entropy_against(mu0.as_slice(), weight)?;
            let e1 = entropy_against(mu1.as_slice(), weight)?;
            let mut defects = [0.0; 3];
            for (slot, t) in defects.iter_mut().zip(CONVEXITY_TIMES) {
                let mt = displacement_interpolate_1d(grid, &mu0, &mu1, t)?;
                let et = entropy_against(mt.as_slice(), weight)?;
                *slot = et - (1.0 - t) * e0 - t * e1 + 0.5 * k * t * (1.0 - t) * w2 * w2;
            }
            Ok(ConvexityTrial { w2, defects })
        })
        .collect::<Result<_>>()?;
    let max_defect = trials.iter().flat_map(|t| t.defects).fold(f64::NEG_INFINITY, f64::max);
    let slack = opts.slack_constant * h;
    Ok(ConvexityReport {
        k,
        h,
        slack,
        max_defect,
        passed: max_defect <= slack,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Provenance;
    use approx::assert_abs_diff_eq;

    fn cycle(n: usize) -> GraphOperator {
        let m = vec![1.0 / n as f64; n];
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        GraphOperator::new(m, &edges, Provenance::Explicit { label: "cycle".into() }).unwrap()
    }

    fn bump(n: usize) -> DensityVector {
        let raw: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * (i as f64 * 0.7).sin()).collect();
        let mean: f64 = raw.iter().sum::<f64>() / n as f64;
        DensityVector::new(raw.iter().map(|r| r / mean).collect(), &vec![1.0 / n as f64; n]).unwrap()
    }

    #[test]
    fn zero_time_is_exact_and_mass_is_kept() {
        let g = cycle(10);
        let rho = bump(10);
        let traj = heat_flow(&g, &rho, &[0.0, 0.1, 1.0]).unwrap();
        assert_eq!(traj.densities[0], rho);
        for m in &traj.mass {
            assert_abs_diff_eq!(*m, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn propagators_agree() {
        let g = cycle(16);
        let rho = bump(16);
        let times = [0.0, 0.05, 0.3];
        let a = heat_flow_with(&SpectralPropagator, &g, &rho, &times).unwrap();
        let b = heat_flow_with(&CrankNicolson::default(), &g, &rho, &times).unwrap();
        for (x, y) in a.densities.iter().zip(&b.densities) {
            for (u, v) in x.as_slice().iter().zip(y.as_slice()) {
                assert!((u - v).abs() < 1e-7, "{u} vs {v}");
            }
        }
    }

    #[test]
    fn times_must_ascend() {
        let g = cycle(4);
        assert!(matches!(
            heat_flow(&g, &DensityVector::constant(4), &[0.5, 0.1]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn constant_density_is_stationary() {
        let g = cycle(8);
        let rho = DensityVector::constant(8);
        assert_eq!(entropy_slope(&g, &rho).unwrap(), 0.0);
        let traj = heat_flow(&g, &rho, &[0.0, 0.5, 1.0]).unwrap();
        let r = ede_audit(&traj);
        assert!(r.total_drop.abs() < 1e-14 && r.total_dissipation < 1e-20);
        assert!(r.entropy_monotone);
    }

    #[test]
    fn trajectory_csv_header() {
        let g = cycle(6);
        let traj = heat_flow(&g, &bump(6), &[0.0, 1.0]).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,entropy,slope,mass\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
