//! Transport on the real line: the monotone coupling and displacement
//! interpolation by quantile functions.
//!
//! A measure on a 1-D grid is read as a histogram: the mass of node `k` is
//! spread uniformly over its cell, whose walls sit halfway between
//! neighbouring nodes. The quantile functions are then continuous and
//! piecewise linear, their convex combination is the `W₂` geodesic, and the
//! interpolant is binned back onto the cells by exact overlap lengths.

use crate::error::{Error, Result};
use crate::space::{FiniteMMSpace, ProbVector};

fn interval_nodes(space: &FiniteMMSpace) -> Result<&[f64]> {
    let nodes = space
        .interval_coords()
        .ok_or_else(|| Error::UnsupportedGeometry("operation needs interval coordinates".into()))?;
    if nodes.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::UnsupportedGeometry(
            "interval coordinates must be strictly increasing".into(),
        ));
    }
    Ok(nodes)
}

/// Cell walls: `walls[k]..walls[k+1]` is the cell of node `k`.
pub fn cell_walls(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    if n == 1 {
        return vec![nodes[0] - 0.5, nodes[0] + 0.5];
    }
    let mut walls = Vec::with_capacity(n + 1);
    walls.push(nodes[0] - 0.5 * (nodes[1] - nodes[0]));
    for k in 0..n - 1 {
        walls.push(0.5 * (nodes[k] + nodes[k + 1]));
    }
    walls.push(nodes[n - 1] + 0.5 * (nodes[n - 1] - nodes[n - 2]));
    walls
}

/// Exact `W_p` between atomic measures on sorted points via the monotone
/// (north-west corner) coupling, optimal for every `p ≥ 1` on the line.
pub fn wasserstein_1d(points: &[f64], mu: &[f64], nu: &[f64], p: f64) -> Result<f64> {
    if mu.len() != points.len() || nu.len() != points.len() {
        return Err(Error::Dimension("measures and points differ in length".into()));
    }
    if p < 1.0 {
        return Err(Error::Domain(format!("exponent must be at least 1, got {p}")));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].total_cmp(&points[b]));
    let (mut i, mut j) = (0, 0);
    let mut left_a = mu[order[0]];
    let mut left_b = nu[order[0]];
    let mut cost = 0.0;
    while i < order.len() && j < order.len() {
        let moved = left_a.min(left_b);
        if moved > 0.0 {
            cost += moved * (points[order[i]] - points[order[j]]).abs().powf(p);
        }
        left_a -= moved;
        left_b -= moved;
        if left_a <= 0.0 {
            i += 1;
            if i < order.len() {
                left_a = mu[order[i]];
            }
        }
        if left_b <= 0.0 {
            j += 1;
            if j < order.len() {
                left_b = nu[order[j]];
            }
        }
    }
    Ok(cost.powf(1.0 / p))
}

/// A linear piece of a quantile function: `s ∈ [s0, s0+w)` maps onto `[lo, hi]`.
#[derive(Clone, Copy)]
struct Piece {
    s0: f64,
    w: f64,
    lo: f64,
    hi: f64,
}

impl Piece {
    fn at(&self, s: f64) -> f64 {
        self.lo + (self.hi - self.lo) * ((s - self.s0) / self.w).clamp(0.0, 1.0)
    }
}

fn quantile_pieces(mu: &[f64], walls: &[f64]) -> Vec<Piece> {
    let mut s = 0.0;
    let mut out = Vec::new();
    for (k, &w) in mu.iter().enumerate() {
        if w > 0.0 {
            out.push(Piece {
                s0: s,
                w,
                lo: walls[k],
                hi: walls[k + 1],
            });
            s += w;
        }
    }
    out
}

fn cell_of(walls: &[f64], x: f64) -> usize {
    let cells = walls.len() - 1;
    match walls.binary_search_by(|w| w.total_cmp(&x)) {
        Ok(k) => k.min(cells - 1),
        Err(k) => k.saturating_sub(1).min(cells - 1),
    }
}

/// Spreads `mass` uniformly over `[a, b]` and adds the overlap with each cell.
fn deposit(out: &mut [f64], walls: &[f64], a: f64, b: f64, mass: f64) {
    let span = b - a;
    let scale = (walls[walls.len() - 1] - walls[0]).abs().max(1.0);
    if span <= 1e-15 * scale {
        out[cell_of(walls, 0.5 * (a + b))] += mass;
        return;
    }
    let first = cell_of(walls, a);
    let last = cell_of(walls, b);
    for k in first..=last {
        let lo = if k == first { a } else { walls[k] };
        let hi = if k == last { b } else { walls[k + 1] };
        if hi > lo {
            out[k] += mass * (hi - lo) / span;
        }
    }
}

/// Point `t` of the `W₂` geodesic from `mu0` to `mu1` on an interval grid.
pub fn displacement_interpolate_1d(
    grid: &FiniteMMSpace,
    mu0: &ProbVector,
    mu1: &ProbVector,
    t: f64,
) -> Result<ProbVector> {
    let nodes = interval_nodes(grid)?;
    if mu0.len() != nodes.len() || mu1.len() != nodes.len() {
        return Err(Error::Dimension("measures do not live on this grid".into()));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("interpolation time {t} outside [0, 1]")));
    }
    if t == 0.0 {
        return Ok(mu0.clone());
    }
    if t == 1.0 {
        return Ok(mu1.clone());
    }
    let walls = cell_walls(nodes);
    let q0 = quantile_pieces(mu0.as_slice(), &walls);
    let q1 = quantile_pieces(mu1.as_slice(), &walls);
    let mut out = vec![0.0; nodes.len()];

    let (mut a, mut b) = (0, 0);
    let mut s = 0.0;
    while a < q0.len() && b < q1.len() {
        let end0 = q0[a].s0 + q0[a].w;
        let end1 = q1[b].s0 + q1[b].w;
        let s_end = end0.min(end1);
        if s_end > s {
            let x_lo = (1.0 - t) * q0[a].at(s) + t * q1[b].at(s);
            let x_hi = (1.0 - t) * q0[a].at(s_end) + t * q1[b].at(s_end);
            deposit(&mut out, &walls, x_lo, x_hi, s_end - s);
        }
        s = s_end;
        if end0 <= s_end {
            a += 1;
        }
        if end1 <= s_end {
            b += 1;
        }
    }
    ProbVector::normalized(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Coords;

    fn grid(n: usize) -> FiniteMMSpace {
        let nodes: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                dist[i * n + j] = (i as f64 - j as f64).abs();
            }
        }
        FiniteMMSpace::from_matrix(dist, vec![1.0 / n as f64; n], 0)
            .unwrap()
            .with_coords(Coords::Interval { data: nodes })
            .unwrap()
    }

    #[test]
    fn endpoints_are_exact() {
        let g = grid(6);
        let mu0 = ProbVector::normalized(vec![1.0, 2.0, 3.0, 0.0, 0.0, 1.0]).unwrap();
        let mu1 = ProbVector::normalized(vec![0.0, 0.0, 1.0, 1.0, 5.0, 1.0]).unwrap();
        assert_eq!(displacement_interpolate_1d(&g, &mu0, &mu1, 0.0).unwrap(), mu0);
        assert_eq!(displacement_interpolate_1d(&g, &mu0, &mu1, 1.0).unwrap(), mu1);
    }

    #[test]
    fn diracs_meet_at_midpoint() {
        let g = grid(9);
        let mid = displacement_interpolate_1d(&g, &ProbVector::dirac(9, 1), &ProbVector::dirac(9, 7), 0.5).unwrap();
        assert!((mid[4] - 1.0).abs() < 1e-12, "{mid:?}");
    }

    #[test]
    fn non_interval_space_is_rejected() {
        let s = FiniteMMSpace::from_matrix(vec![0.0, 1.0, 1.0, 0.0], vec![0.5, 0.5], 0).unwrap();
        let mu = ProbVector::uniform(2);
        assert!(matches!(
            displacement_interpolate_1d(&s, &mu, &mu, 0.5),
            Err(Error::UnsupportedGeometry(_))
        ));
    }

    #[test]
    fn monotone_coupling_small_case() {
        // (1, 0) to (1/2, 1/2) at distance 1
        let w2 = wasserstein_1d(&[0.0, 1.0], &[1.0, 0.0], &[0.5, 0.5], 2.0).unwrap();
        assert!((w2 - 0.5f64.sqrt()).abs() < 1e-15);
        let w1 = wasserstein_1d(&[0.0, 1.0], &[1.0, 0.0], &[0.5, 0.5], 1.0).unwrap();
        assert!((w1 - 0.5).abs() < 1e-15);
    }
}
