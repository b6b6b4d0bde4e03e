//! Eigensolvers for the generalized problem `(D - W) v = λ M v`, solved
//! through the similar symmetric matrix `S = M^{-1/2} (D - W) M^{-1/2}`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{GraphOperator, Spectrum};
use crate::error::{Error, Result};
use crate::registry::{Named, Registry};

/// Vertex count from which [`super::laplacian_spectrum`] switches to Lanczos.
pub const DENSE_LIMIT: usize = 3000;

pub trait Eigensolver: Named + Send + Sync {
    /// The `k` smallest eigenpairs (all of them for `None`).
    fn solve(&self, g: &GraphOperator, k: Option<usize>, vectors: bool) -> Result<Spectrum>;
}

pub fn eigensolvers() -> Registry<dyn Eigensolver> {
    let mut reg: Registry<dyn Eigensolver> = Registry::new("eigensolver");
    reg.register(Box::new(DenseEigensolver))
        .register(Box::new(LanczosEigensolver::default()));
    reg
}

fn sqrt_measure(g: &GraphOperator) -> Vec<f64> {
    g.measure().iter().map(|m| m.sqrt()).collect()
}

/// Maps an eigenvector of `S` to an `L²(m)`-normalized eigenfunction of `L`.
fn to_eigenfunction(v: &[f64], sqrt_m: &[f64]) -> Vec<f64> {
    v.iter().zip(sqrt_m).map(|(x, s)| x / s).collect()
}

/// Full symmetric decomposition with nalgebra.
#[derive(Debug, Clone, Copy, Default)]
pub struct DenseEigensolver;

impl Named for DenseEigensolver {
    fn name(&self) -> &'static str {
        "dense"
    }
}

impl DenseEigensolver {
    fn matrix(g: &GraphOperator, sqrt_m: &[f64]) -> DMatrix<f64> {
        let n = g.len();
        let mut s = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            s[(i, i)] = g.degree(i) / g.measure()[i];
            for &(j, w) in g.neighbors(i) {
                s[(i, j)] = -w / (sqrt_m[i] * sqrt_m[j]);
            }
        }
        s
    }
}

impl Eigensolver for DenseEigensolver {
    fn solve(&self, g: &GraphOperator, k: Option<usize>, vectors: bool) -> Result<Spectrum> {
        let sqrt_m = sqrt_measure(g);
        let s = Self::matrix(g, &sqrt_m);
        let take = k.unwrap_or(g.len()).min(g.len());
        if !vectors {
            let mut values: Vec<f64> = s.symmetric_eigenvalues().iter().copied().collect();
            values.sort_by(f64::total_cmp);
            values.truncate(take);
            return Ok(Spectrum::new(values, None));
        }
        let eig = SymmetricEigen::try_new(s, f64::EPSILON, 0).ok_or(Error::Numerical {
            message: "dense symmetric eigensolver did not converge".into(),
            residual: f64::NAN,
        })?;
        let mut order: Vec<usize> = (0..g.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        order.truncate(take);
        let values = order.iter().map(|&c| eig.eigenvalues[c]).collect();
        let vecs = order
            .iter()
            .map(|&c| to_eigenfunction(eig.eigenvectors.column(c).as_slice(), &sqrt_m))
            .collect();
        Ok(Spectrum::new(values, Some(vecs)))
    }
}

/// Shift-invert Lanczos with full reorthogonalization, explicit restarts and
/// locking. Inner solves of `(S + σ) x = b` use Jacobi-preconditioned
/// conjugate gradients. The zero mode `√m` is known and deflated up front.
#[derive(Debug, Clone, Copy)]
pub struct LanczosEigensolver {
    /// Shift relative to the mean diagonal of `S`.
    pub relative_shift: f64,
    pub krylov_dim: usize,
    pub max_restarts: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for LanczosEigensolver {
    fn default() -> Self {
        Self {
            relative_shift: 1e-2,
            krylov_dim: 40,
            max_restarts: 200,
            tol: 1e-10,
            seed: 0x5eed,
        }
    }
}

impl Named for LanczosEigensolver {
    fn name(&self) -> &'static str {
        "lanczos"
    }
}

struct ShiftedOperator<'a> {
    g: &'a GraphOperator,
    sqrt_m: Vec<f64>,
    shift: f64,
    diag: Vec<f64>,
}

impl ShiftedOperator<'_> {
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        self.g.apply_symmetric(&self.sqrt_m, v, out);
        for (o, x) in out.iter_mut().zip(v) {
            *o += self.shift * x;
        }
    }

    /// Solves `(S + σ) x = b` by preconditioned conjugate gradients.
    fn solve(&self, b: &[f64], tol: f64) -> Result<Vec<f64>> {
        let n = b.len();
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&self.diag).map(|(r, d)| r / d).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz = dot(&r, &z);
        let b_norm = dot(b, b).sqrt();
        if b_norm == 0.0 {
            return Ok(x);
        }
        let max_iter = 20 * n + 1000;
        for _ in 0..max_iter {
            self.apply(&p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            axpy(alpha, &p, &mut x);
            axpy(-alpha, &ap, &mut r);
            let res = dot(&r, &r).sqrt();
            if res <= tol * b_norm {
                return Ok(x);
            }
            for ((z, r), d) in z.iter_mut().zip(&r).zip(&self.diag) {
                *z = r / d;
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for (p, z) in p.iter_mut().zip(&z) {
                *p = z + beta * *p;
            }
        }
        Err(Error::Convergence {
            iterations: max_iter,
            residual: dot(&r, &r).sqrt() / b_norm,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    // two passes keep the basis orthogonal to working precision
    for _ in 0..2 {
        for b in basis {
            let c = dot(v, b);
            axpy(-c, b, v);
        }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

impl Eigensolver for LanczosEigensolver {
    fn solve(&self, g: &GraphOperator, k: Option<usize>, vectors: bool) -> Result<Spectrum> {
        let n = g.len();
        let want = k.unwrap_or(n).min(n);
        if want == 0 {
            return Ok(Spectrum::new(Vec::new(), vectors.then(Vec::new)));
        }
        let sqrt_m = sqrt_measure(g);
        let diag: Vec<f64> = (0..n).map(|i| g.degree(i) / g.measure()[i]).collect();
        let shift = self.relative_shift * diag.iter().sum::<f64>() / n as f64;
        let op = ShiftedOperator {
            g,
            diag: diag.iter().map(|d| d + shift).collect(),
            sqrt_m: sqrt_m.clone(),
            shift,
        };

        let mut zero = sqrt_m.clone();
        normalize(&mut zero);
        let mut locked: Vec<Vec<f64>> = vec![zero];
        let mut values = vec![0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut start: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();

        let mut restarts = 0;
        let mut last_residual = f64::INFINITY;
        loop {
            let verifying = locked.len() >= want;
            if restarts == self.max_restarts {
                return Err(Error::Convergence {
                    iterations: restarts,
                    residual: last_residual,
                });
            }
            restarts += 1;
            orthogonalize(&mut start, &locked);
            if locked.len() == n || normalize(&mut start) == 0.0 {
                if verifying {
                    break;
                }
                start = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                continue;
            }
            let (ritz, residuals) = self.krylov_cycle(&op, &start, &locked)?;

            // Ritz pairs with the smallest λ first
            let needed = if verifying { 1 } else { want - locked.len() };
            let mut next_start = vec![0.0; n];
            let mut fresh = Vec::new();
            for (y, residual) in ritz.into_iter().zip(residuals).take(needed) {
                if residual <= self.tol {
                    let mut y = y;
                    orthogonalize(&mut y, &locked);
                    normalize(&mut y);
                    let mut sy = vec![0.0; n];
                    g.apply_symmetric(&sqrt_m, &y, &mut sy);
                    fresh.push((dot(&y, &sy), y));
                } else {
                    last_residual = residual;
                    axpy(1.0, &y, &mut next_start);
                }
            }
            if verifying {
                let largest = values.iter().copied().fold(0.0, f64::max);
                match fresh.pop() {
                    Some((value, y)) if value < largest - 1e-9 * largest.max(1.0) => {
                        // a missed copy of a smaller eigenvalue: swap it in
                        let drop = (1..values.len())
                            .max_by(|&a, &b| values[a].total_cmp(&values[b]))
                            .expect("non-zero mode");
                        values.remove(drop);
                        locked.remove(drop);
                        values.push(value);
                        locked.push(y);
                        start = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                    }
                    Some(_) => break,
                    None => start = next_start,
                }
                continue;
            }
            let progress = !fresh.is_empty();
            for (value, y) in fresh {
                values.push(value);
                locked.push(y);
            }
            start = if locked.len() >= want || (!progress && next_start.iter().all(|x| *x == 0.0)) {
                (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
            } else {
                next_start
            };
        }
        locked.truncate(want);
        values.truncate(want);
        let vecs = vectors.then(|| locked.iter().map(|v| to_eigenfunction(v, &sqrt_m)).collect());
        Ok(Spectrum::new(values, vecs))
    }
}

impl LanczosEigensolver {
    /// One Lanczos run on `(S + σ)⁻¹` restricted to the complement of
    /// `locked`. Returns Ritz vectors ordered by decreasing `θ` (increasing
    /// `λ`) with their relative residual estimates.
    fn krylov_cycle(
        &self,
        op: &ShiftedOperator,
        start: &[f64],
        locked: &[Vec<f64>],
    ) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let n = start.len();
        let dim = self.krylov_dim.min(n - locked.len());
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
        let mut alpha = Vec::with_capacity(dim);
        let mut beta: Vec<f64> = Vec::with_capacity(dim);
        let mut v = start.to_vec();
        let mut last_beta = 0.0;
        for step in 0..dim {
            basis.push(v.clone());
            let mut w = op.solve(&v, self.tol * 1e-3)?;
            orthogonalize(&mut w, locked);
            let a = dot(&w, &v);
            alpha.push(a);
            orthogonalize(&mut w, &basis);
            let b = normalize(&mut w);
            last_beta = b;
            if step + 1 == dim || b <= 1e-14 * a.abs().max(1e-300) {
                break;
            }
            beta.push(b);
            v = w;
        }

        let m = alpha.len();
        let mut t = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alpha[i];
            if i + 1 < m {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut vectors = Vec::with_capacity(m);
        let mut residuals = Vec::with_capacity(m);
        for c in order {
            let theta = eig.eigenvalues[c];
            let s: DVector<f64> = eig.eigenvectors.column(c).into_owned();
            residuals.push((last_beta * s[m - 1]).abs() / theta.abs().max(1e-300));
            let mut y = vec![0.0; n];
            for (coef, b) in s.iter().zip(&basis) {
                axpy(*coef, b, &mut y);
            }
            vectors.push(y);
        }
        Ok((vectors, residuals))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Provenance;
    use approx::assert_relative_eq;

    fn cycle(n: usize) -> GraphOperator {
        let m = vec![1.0 / n as f64; n];
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0 / n as f64)).collect();
        GraphOperator::new(m, &edges, Provenance::Explicit { label: "cycle".into() }).unwrap()
    }

    /// `L` on a unit-spaced cycle with unit conductance per unit mass has
    /// eigenvalues `2 - 2 cos(2πk/n)`.
    fn cycle_eigenvalues(n: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..n)
            .map(|k| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn dense_matches_closed_form() {
        let spec = DenseEigensolver.solve(&cycle(12), None, true).unwrap();
        for (a, b) in spec.eigenvalues.iter().zip(cycle_eigenvalues(12)) {
            assert!((a - b).abs() < 1e-12);
        }
        let vecs = spec.eigenvectors.unwrap();
        let norm: f64 = vecs[3].iter().map(|x| x * x / 12.0).sum();
        assert_relative_eq!(norm, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn lanczos_matches_dense_with_multiplicities() {
        let g = cycle(200);
        let lz = LanczosEigensolver::default().solve(&g, Some(7), true).unwrap();
        let exact = cycle_eigenvalues(200);
        for (a, b) in lz.eigenvalues.iter().zip(&exact) {
            assert!((a - b).abs() <= 1e-9 * b.max(1.0), "{a} vs {b}");
        }
        assert_eq!(lz.multiplicity[1], 2);
        let v = &lz.eigenvectors.unwrap()[2];
        let lv = g.apply_laplacian(v);
        let res: f64 = lv
            .iter()
            .zip(v)
            .map(|(a, b)| (a - lz.eigenvalues[2] * b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(res < 1e-6, "residual {res}");
    }

    #[test]
    fn registry_lists_both() {
        assert_eq!(eigensolvers().names(), vec!["dense", "lanczos"]);
    }
}
