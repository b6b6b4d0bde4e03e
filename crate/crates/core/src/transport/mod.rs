//! Discrete optimal transport on a finite space.
//!
//! [`solve_ot`] returns an exact optimal plan for the cost `d^p` using the
//! network simplex; [`sinkhorn`] is the entropic fast path. Both are
//! [`OtSolver`] strategies and can be looked up by name in [`solvers`].

mod line;
pub(crate) mod network_simplex;
mod sinkhorn;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foliation::FoliationBundle;
use crate::registry::{Named, Registry};
use crate::space::{FiniteMMSpace, ProbVector};

pub use line::{cell_walls, displacement_interpolate_1d, wasserstein_1d};
pub use network_simplex::PivotRule;

use network_simplex::{quantize, NetworkSimplex, MASS_SCALE};

/// Atoms lighter than this are dropped before solving.
pub const PRUNE_MASS: f64 = 1e-15;
/// Allowed difference between the total masses of the two marginals.
pub const BALANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanKind {
    Exact,
    Entropic { epsilon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub i: usize,
    pub j: usize,
    pub mass: f64,
}

/// A coupling of two probability vectors, stored sparsely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub entries: Vec<PlanEntry>,
    pub source: Vec<f64>,
    pub target: Vec<f64>,
    /// `Σ π_ij d_ij^p`.
    pub cost: f64,
    pub exponent: f64,
    pub kind: PlanKind,
    /// Entropic objective of the unprojected iterate, for Sinkhorn plans.
    pub entropic_objective: Option<f64>,
}

impl TransportPlan {
    /// `cost^(1/p)`.
    pub fn distance(&self) -> f64 {
        self.cost.powf(1.0 / self.exponent)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.source.len()];
        for e in &self.entries {
            r[e.i] += e.mass;
        }
        r
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.target.len()];
        for e in &self.entries {
            c[e.j] += e.mass;
        }
        c
    }

    /// Largest absolute marginal defect over rows and columns.
    pub fn marginal_residual(&self) -> f64 {
        let rows = self
            .row_sums()
            .into_iter()
            .zip(&self.source)
            .map(|(a, b)| (a - b).abs());
        let cols = self
            .col_sums()
            .into_iter()
            .zip(&self.target)
            .map(|(a, b)| (a - b).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }

    pub fn dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.target.len()]; self.source.len()];
        for e in &self.entries {
            out[e.i][e.j] += e.mass;
        }
        out
    }

    /// `i,j,mass,dist` rows for every entry.
    pub fn write_csv<W: Write>(&self, space: &FiniteMMSpace, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "j", "mass", "dist"])?;
        for e in &self.entries {
            w.write_record([
                e.i.to_string(),
                e.j.to_string(),
                format!("{:e}", e.mass),
                format!("{:e}", space.dist(e.i, e.j)),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Marginals and their residuals, the JSON sidecar of [`Self::write_csv`].
    pub fn marginal_report(&self) -> serde_json::Value {
        let rows = self.row_sums();
        let cols = self.col_sums();
        serde_json::json!({
            "source": self.source,
            "target": self.target,
            "row_sums": rows,
            "col_sums": cols,
            "max_residual": self.marginal_residual(),
            "cost": self.cost,
            "exponent": self.exponent,
            "kind": self.kind,
        })
    }
}

/// A coupling on pruned supports, as returned by a solver.
pub struct Coupling {
    pub entries: Vec<(usize, usize, f64)>,
    pub objective: Option<f64>,
}

/// A strategy producing a coupling of `a` and `b` for a row-major cost.
pub trait OtSolver: Named + Send + Sync {
    fn kind(&self) -> PlanKind;
    fn couple(&self, a: &[f64], b: &[f64], cost: &[f64]) -> Result<Coupling>;
}

pub struct NetworkSimplexSolver {
    pub rule: PivotRule,
}

impl Named for NetworkSimplexSolver {
    fn name(&self) -> &'static str {
        match self.rule {
            PivotRule::BlockSearch => "network-simplex",
            PivotRule::Bland => "network-simplex-bland",
        }
    }
}

impl OtSolver for NetworkSimplexSolver {
    fn kind(&self) -> PlanKind {
        PlanKind::Exact
    }

    fn couple(&self, a: &[f64], b: &[f64], cost: &[f64]) -> Result<Coupling> {
        let qa = quantize(a);
        let qb = quantize(b);
        let sol = NetworkSimplex::new(&qa, &qb, cost, self.rule).run()?;
        log::debug!(
            "network simplex: {} pivots, potential range {:e}",
            sol.pivots,
            sol.potentials.iter().fold(0.0f64, |acc, p| acc.max(p.abs()))
        );
        Ok(Coupling {
            entries: sol
                .flows
                .into_iter()
                .map(|(i, j, f)| (i, j, f as f64 / MASS_SCALE as f64))
                .collect(),
            objective: None,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SinkhornSolver {
    pub epsilon: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SinkhornSolver {
    fn default() -> Self {
        Self {
            epsilon: 1e-2,
            max_iter: 100_000,
            tol: 1e-9,
        }
    }
}

impl Named for SinkhornSolver {
    fn name(&self) -> &'static str {
        "sinkhorn"
    }
}

impl OtSolver for SinkhornSolver {
    fn kind(&self) -> PlanKind {
        PlanKind::Entropic { epsilon: self.epsilon }
    }

    fn couple(&self, a: &[f64], b: &[f64], cost: &[f64]) -> Result<Coupling> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Domain(format!(
                "entropic regularization must be positive, got {}",
                self.epsilon
            )));
        }
        let out = sinkhorn::sinkhorn_log(a, b, cost, self.epsilon, self.max_iter, self.tol)?;
        log::debug!("sinkhorn: {} iterations", out.iterations);
        let m = b.len();
        Ok(Coupling {
            entries: out
                .plan
                .iter()
                .enumerate()
                .filter(|(_, p)| **p > 0.0)
                .map(|(e, p)| (e / m, e % m, *p))
                .collect(),
            objective: Some(out.objective),
        })
    }
}

/// The built-in transport solvers, keyed by name.
pub fn solvers() -> Registry<dyn OtSolver> {
    let mut reg: Registry<dyn OtSolver> = Registry::new("transport solver");
    reg.register(Box::new(NetworkSimplexSolver {
        rule: PivotRule::BlockSearch,
    }))
    .register(Box::new(NetworkSimplexSolver { rule: PivotRule::Bland }))
    .register(Box::new(SinkhornSolver::default()));
    reg
}

#[inline]
pub(crate) fn cost_power(d: f64, p: f64) -> f64 {
    if p == 1.0 {
        d
    } else if p == 2.0 {
        d * d
    } else {
        d.powf(p)
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Domain(format!("transport exponent must be in [1, ∞), got {p}")));
    }
    Ok(())
}

/// Solves transport between two measures on `space` with any registered solver.
pub fn solve_with(
    solver: &dyn OtSolver,
    space: &FiniteMMSpace,
    mu: &ProbVector,
    nu: &ProbVector,
    p: f64,
) -> Result<TransportPlan> {
    check_exponent(p)?;
    let n = space.len();
    if mu.len() != n || nu.len() != n {
        return Err(Error::Dimension(format!(
            "measures of length {} and {} on a {n}-point space",
            mu.len(),
            nu.len()
        )));
    }
    let (ma, mb): (f64, f64) = (mu.as_slice().iter().sum(), nu.as_slice().iter().sum());
    if (ma - mb).abs() > BALANCE_TOL {
        return Err(Error::Unbalanced {
            source_mass: ma,
            target_mass: mb,
        });
    }
    let src: Vec<usize> = (0..n).filter(|&i| mu[i] >= PRUNE_MASS).collect();
    let dst: Vec<usize> = (0..n).filter(|&j| nu[j] >= PRUNE_MASS).collect();
    let a: Vec<f64> = src.iter().map(|&i| mu[i]).collect();
    let b: Vec<f64> = dst.iter().map(|&j| nu[j]).collect();
    let mut cost = Vec::with_capacity(a.len() * b.len());
    for &i in &src {
        let row = space.dist_row(i);
        cost.extend(dst.iter().map(|&j| cost_power(row[j], p)));
    }
    let coupling = solver.couple(&a, &b, &cost)?;

    let entries: Vec<PlanEntry> = coupling
        .entries
        .into_iter()
        .map(|(i, j, mass)| PlanEntry {
            i: src[i],
            j: dst[j],
            mass,
        })
        .collect();
    let total = entries
        .iter()
        .map(|e| e.mass * cost_power(space.dist(e.i, e.j), p))
        .sum();
    Ok(TransportPlan {
        entries,
        source: mu.as_slice().to_vec(),
        target: nu.as_slice().to_vec(),
        cost: total,
        exponent: p,
        kind: solver.kind(),
        entropic_objective: coupling.objective,
    })
}

/// Exact optimal plan for the cost `d^p`.
pub fn solve_ot(space: &FiniteMMSpace, mu: &ProbVector, nu: &ProbVector, p: f64) -> Result<TransportPlan> {
    solve_with(
        &NetworkSimplexSolver {
            rule: PivotRule::BlockSearch,
        },
        space,
        mu,
        nu,
        p,
    )
}

/// Entropic plan; the reported `cost` is the raw transport cost of a plan
/// projected onto the exact marginals.
pub fn sinkhorn(
    space: &FiniteMMSpace,
    mu: &ProbVector,
    nu: &ProbVector,
    p: f64,
    epsilon: f64,
    max_iter: usize,
    tol: f64,
) -> Result<TransportPlan> {
    solve_with(&SinkhornSolver { epsilon, max_iter, tol }, space, mu, nu, p)
}

/// `W_p(μ, ν)`.
pub fn wasserstein(space: &FiniteMMSpace, mu: &ProbVector, nu: &ProbVector, p: f64) -> Result<f64> {
    Ok(solve_ot(space, mu, nu, p)?.distance())
}

/// `(p_* μ)[y] = Σ_{map(i) = y} μ[i]` onto a target with `target_len` points.
pub fn pushforward(map: &[usize], mu: &ProbVector, target_len: usize) -> Result<ProbVector> {
    if map.len() != mu.len() {
        return Err(Error::Dimension(format!(
            "map of length {} for a measure of length {}",
            map.len(),
            mu.len()
        )));
    }
    let mut out = vec![0.0; target_len];
    for (i, &y) in map.iter().enumerate() {
        if y >= target_len {
            return Err(Error::Dimension(format!("map sends {i} to {y} >= {target_len}")));
        }
        out[y] += mu[i];
    }
    ProbVector::new(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationReport {
    pub realized: bool,
    /// Quotient distance the support is compared against.
    pub quotient_distance: f64,
    /// `(i, j, |d(i,j) - d*(y0,y1)|)` of the worst support entry.
    pub worst: Option<(usize, usize, f64)>,
}

/// Checks that every support entry of a plan between the fiber measures of
/// `y0` and `y1` moves mass exactly the quotient distance.
pub fn check_plan_realizes_quotient(
    plan: &TransportPlan,
    space: &FiniteMMSpace,
    bundle: &FoliationBundle,
    y0: usize,
    y1: usize,
    tol: f64,
) -> Result<RealizationReport> {
    let classes = bundle.quotient().len();
    if y0 >= classes || y1 >= classes {
        return Err(Error::Dimension(format!(
            "class index out of range ({classes} classes)"
        )));
    }
    if space.len() != bundle.total().len() || plan.source.len() != space.len() {
        return Err(Error::Dimension("plan, space and bundle sizes differ".into()));
    }
    let f0 = bundle.fiber(y0);
    let f1 = bundle.fiber(y1);
    let rows = plan.row_sums();
    let cols = plan.col_sums();
    let off = rows
        .iter()
        .zip(f0)
        .chain(cols.iter().zip(f1))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if off > BALANCE_TOL {
        return Err(Error::Input(format!(
            "plan marginals differ from the fiber measures by {off:e}"
        )));
    }
    let target = bundle.quotient().dist(y0, y1);
    let mut worst: Option<(usize, usize, f64)> = None;
    for e in plan.entries.iter().filter(|e| e.mass > 1e-12) {
        let defect = (space.dist(e.i, e.j) - target).abs();
        if worst.is_none_or(|w| defect > w.2) {
            worst = Some((e.i, e.j, defect));
        }
    }
    Ok(RealizationReport {
        realized: worst.is_none_or(|w| w.2 <= tol),
        quotient_distance: target,
        worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_point() -> FiniteMMSpace {
        FiniteMMSpace::from_matrix(vec![0.0, 1.0, 1.0, 0.0], vec![0.5, 0.5], 0).unwrap()
    }

    /// π(a,b) = t, π(a,a) = 1 - t, π(b,·) = 0 is the only freedom when the
    /// source is δ_a; the target marginal forces t = 1/2.
    fn brute_force_two_point(p: f64) -> f64 {
        let mut best = f64::INFINITY;
        for k in 0..=1000 {
            let t = k as f64 / 1000.0;
            if (1.0 - t - 0.5).abs() < 1e-12 {
                best = best.min(t * 1f64.powf(p));
            }
        }
        best.powf(1.0 / p)
    }

    #[test]
    fn diracs_couple_directly() {
        let s = FiniteMMSpace::from_matrix(
            vec![0.0, 2.0, 3.0, 2.0, 0.0, 1.5, 3.0, 1.5, 0.0],
            vec![0.2, 0.3, 0.5],
            0,
        )
        .unwrap();
        let plan = solve_ot(&s, &ProbVector::dirac(3, 0), &ProbVector::dirac(3, 2), 2.0).unwrap();
        assert_eq!(plan.entries.len(), 1);
        assert_eq!((plan.entries[0].i, plan.entries[0].j), (0, 2));
        assert_abs_diff_eq!(plan.distance(), 3.0, epsilon = 1e-15);
    }

    #[test]
    fn two_point_half_split() {
        let s = two_point();
        let mu = ProbVector::dirac(2, 0);
        let nu = ProbVector::uniform(2);
        assert_abs_diff_eq!(
            wasserstein(&s, &mu, &nu, 2.0).unwrap(),
            brute_force_two_point(2.0),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(brute_force_two_point(2.0), 0.5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(
            wasserstein(&s, &mu, &nu, 1.0).unwrap(),
            brute_force_two_point(1.0),
            epsilon = 1e-15
        );
        assert_eq!(wasserstein(&s, &mu, &mu, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn unbalanced_and_domain_errors() {
        let s = two_point();
        let mu = ProbVector::dirac(2, 0);
        assert!(matches!(solve_ot(&s, &mu, &mu, 0.5), Err(Error::Domain(_))));
        let short = ProbVector::dirac(1, 0);
        assert!(matches!(solve_ot(&s, &mu, &short, 1.0), Err(Error::Dimension(_))));
        let err = solve_with(
            &NetworkSimplexSolver {
                rule: PivotRule::BlockSearch,
            },
            &s,
            &mu,
            &ProbVector::from_raw(vec![0.5, 0.4]),
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Unbalanced { .. }));
    }

    #[test]
    fn sinkhorn_two_point() {
        let s = two_point();
        let mu = ProbVector::dirac(2, 0);
        let nu = ProbVector::uniform(2);
        let plan = sinkhorn(&s, &mu, &nu, 2.0, 1e-4, 10_000, 1e-12).unwrap();
        assert!((plan.cost - 0.5).abs() <= 1e-3);
        assert!(plan.cost >= solve_ot(&s, &mu, &nu, 2.0).unwrap().cost - 1e-12);
        assert!(matches!(plan.kind, PlanKind::Entropic { .. }));
        assert!(plan.entropic_objective.is_some());
    }

    #[test]
    fn sinkhorn_rejects_bad_epsilon() {
        let s = two_point();
        let mu = ProbVector::uniform(2);
        assert!(matches!(
            sinkhorn(&s, &mu, &mu, 1.0, 0.0, 10, 1e-9),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn pushforward_examples() {
        let mu = ProbVector::normalized(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(pushforward(&[0, 1, 2], &mu, 3).unwrap(), mu);
        assert_eq!(pushforward(&[0, 0, 0], &mu, 1).unwrap().as_slice(), &[1.0]);
        assert!(pushforward(&[0, 5, 0], &mu, 2).is_err());
    }

    #[test]
    fn registry_has_all_solvers() {
        let reg = solvers();
        assert_eq!(
            reg.names(),
            vec!["network-simplex", "network-simplex-bland", "sinkhorn"]
        );
        let s = two_point();
        let mu = ProbVector::dirac(2, 0);
        let nu = ProbVector::uniform(2);
        for name in ["network-simplex", "network-simplex-bland"] {
            let plan = solve_with(reg.get(name).unwrap(), &s, &mu, &nu, 2.0).unwrap();
            assert_abs_diff_eq!(plan.cost, 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn csv_dump_has_header() {
        let s = two_point();
        let plan = solve_ot(&s, &ProbVector::dirac(2, 0), &ProbVector::uniform(2), 1.0).unwrap();
        let mut buf = Vec::new();
        plan.write_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("i,j,mass,dist\n"));
        assert_eq!(text.lines().count(), 3);
        assert_eq!(plan.marginal_report()["max_residual"], 0.0);
    }
}
