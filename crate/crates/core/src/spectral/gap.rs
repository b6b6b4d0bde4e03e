//! The `q`-spectral gap `λ_{1,q} = inf q E_q(f) / c_q(f)^q` with
//! `c_q(f)^q = min_a Σ m_i |f_i - a|^q`.
//!
//! For `q = 2` this is the first non-zero eigenvalue. Otherwise the ratio is
//! minimized by projected gradient descent (Barzilai–Borwein steps with
//! Armijo backtracking) from several starts; the result is the best value
//! found, not a certified global minimum.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{local_slopes, DenseEigensolver, Eigensolver, GraphOperator, LanczosEigensolver, DENSE_LIMIT};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once the relative decrease over `patience` steps falls below this.
    pub rel_tol: f64,
    pub patience: usize,
}

impl Default for GapOptions {
    fn default() -> Self {
        Self {
            restarts: 16,
            seed: 0,
            max_iter: 20_000,
            rel_tol: 1e-13,
            patience: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub q: f64,
    pub value: f64,
    /// Final value of each restart, `NaN` where a restart broke down.
    pub restart_values: Vec<f64>,
    /// Max minus min over the finite restart values.
    pub spread: f64,
    pub minimizer: Vec<f64>,
}

/// `λ_{1,q}` of the graph; see the module notes.
pub fn spectral_gap_q(g: &GraphOperator, q: f64, opts: &GapOptions) -> Result<GapReport> {
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::Domain(format!("gap exponent must exceed 1, got {q}")));
    }
    if g.len() < 2 {
        return Err(Error::Input("a spectral gap needs at least two vertices".into()));
    }
    let spectrum = if g.len() < DENSE_LIMIT {
        DenseEigensolver.solve(g, Some(2), true)?
    } else {
        LanczosEigensolver::default().solve(g, Some(2), true)?
    };
    let warm = spectrum.eigenvectors.as_ref().expect("vectors requested")[1].clone();
    if q == 2.0 {
        let value = spectrum.eigenvalues[1];
        return Ok(GapReport {
            q,
            value,
            restart_values: vec![value],
            spread: 0.0,
            minimizer: warm,
        });
    }

    let runs: Vec<Option<(f64, Vec<f64>)>> = (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let f0 = if r == 0 {
                warm.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                (0..g.len()).map(|_| StandardNormal.sample(&mut rng)).collect()
            };
            descend(g, q, f0, opts)
        })
        .collect();
    let finite: Vec<f64> = runs.iter().flatten().map(|r| r.0).collect();
    if finite.is_empty() {
        return Err(Error::Optimization(format!(
            "all {} restarts broke down for q = {q}",
            runs.len()
        )));
    }
    let spread =
        finite.iter().copied().fold(f64::NEG_INFINITY, f64::max) - finite.iter().copied().fold(f64::INFINITY, f64::min);
    let (value, minimizer) = runs
        .iter()
        .flatten()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .cloned()
        .expect("at least one finite run");
    Ok(GapReport {
        q,
        value,
        restart_values: runs.iter().map(|r| r.as_ref().map_or(f64::NAN, |r| r.0)).collect(),
        spread,
        minimizer,
    })
}

/// `a*` minimizing `Σ m_i |f_i - a|^q`, by bisection on the derivative.
pub(crate) fn best_constant(f: &[f64], m: &[f64], q: f64) -> f64 {
    let (mut lo, mut hi) = f.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(*x), hi.max(*x))
    });
    let slope = |a: f64| -> f64 {
        f.iter()
            .zip(m)
            .map(|(x, w)| {
                let d = x - a;
                w * d.signum() * d.abs().powf(q - 1.0)
            })
            .sum()
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn powq(x: f64, q: f64) -> f64 {
    x.abs().powf(q)
}

/// Ratio `q E_q / c_q^q` and its gradient in `L²(m)` at `f`, assuming the
/// best constant of `f` is zero.
fn ratio_and_gradient(g: &GraphOperator, q: f64, f: &[f64]) -> (f64, Vec<f64>) {
    let m = g.measure();
    let s = local_slopes(g, f).expect("length checked");
    let num: f64 = s.iter().zip(m).map(|(s, m)| m * powq(*s, q)).sum();
    let den: f64 = f.iter().zip(m).map(|(x, w)| w * powq(*x, q)).sum();
    let ratio = num / den;

    // ∂(q E_q)/∂f_k = (q/2) Σ_j w_kj (s_k^{q-2} + s_j^{q-2}) (f_k - f_j)
    let spow: Vec<f64> = s
        .iter()
        .map(|&v| if v > 1e-300 { v.powf(q - 2.0) } else { 0.0 })
        .collect();
    let grad = (0..g.len())
        .map(|k| {
            let dn: f64 = g
                .neighbors(k)
                .iter()
                .map(|&(j, w)| w * (spow[k] + spow[j]) * (f[k] - f[j]))
                .sum::<f64>()
                * 0.5
                * q;
            let dd = q * m[k] * f[k].signum() * f[k].abs().powf(q - 1.0);
            (dn - ratio * dd) / den / m[k]
        })
        .collect();
    (ratio, grad)
}

/// Shifts `f` so its best constant is zero and scales it to `c_q = 1`.
fn project(g: &GraphOperator, q: f64, f: &mut [f64]) -> bool {
    let a = best_constant(f, g.measure(), q);
    f.iter_mut().for_each(|x| *x -= a);
    let c: f64 = f
        .iter()
        .zip(g.measure())
        .map(|(x, w)| w * powq(*x, q))
        .sum::<f64>()
        .powf(1.0 / q);
    if !(c > 0.0 && c.is_finite()) {
        return false;
    }
    f.iter_mut().for_each(|x| *x /= c);
    true
}

fn descend(g: &GraphOperator, q: f64, mut f: Vec<f64>, opts: &GapOptions) -> Option<(f64, Vec<f64>)> {
    let m = g.measure();
    let inner = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).zip(m).map(|((x, y), w)| w * x * y).sum() };
    if !project(g, q, &mut f) {
        return None;
    }
    let (mut value, mut grad) = ratio_and_gradient(g, q, &f);
    let mut step = 1.0 / inner(&grad, &grad).sqrt().max(1e-300);
    let mut history = vec![value];
    for _ in 0..opts.max_iter {
        let gnorm2 = inner(&grad, &grad);
        if !(gnorm2 > 0.0) {
            break;
        }
        let mut accepted = None;
        let mut t = step;
        for _ in 0..60 {
            let mut trial: Vec<f64> = f.iter().zip(&grad).map(|(x, d)| x - t * d).collect();
            if project(g, q, &mut trial) {
                let (v, gr) = ratio_and_gradient(g, q, &trial);
                if v.is_finite() && v <= value - 1e-4 * t * gnorm2 {
                    accepted = Some((trial, v, gr));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((next, v, gr)) = accepted else { break };
        // Barzilai–Borwein length for the next trial step
        let s: Vec<f64> = next.iter().zip(&f).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gr.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = inner(&s, &y);
        step = if sy > 0.0 { inner(&s, &s) / sy } else { 2.0 * t };
        f = next;
        value = v;
        grad = gr;
        history.push(value);
        if history.len() > opts.patience {
            let old = history[history.len() - 1 - opts.patience];
            if old - value <= opts.rel_tol * value.abs() {
                break;
            }
        }
    }
    value.is_finite().then_some((value, f))
}
