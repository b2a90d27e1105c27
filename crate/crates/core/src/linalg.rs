//! Tridiagonal, cyclic tridiagonal and 4x4 block-tridiagonal solvers.

use nalgebra::{Matrix4, Vector4};

use crate::error::{Error, Result};

/// Solves a tridiagonal system with the Thomas algorithm.
///
/// `lower[i]` multiplies x[i-1] in row i (lower[0] unused), `upper[i]`
/// multiplies x[i+1] (last entry unused).
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    assert!(lower.len() == n && upper.len() == n && rhs.len() == n);
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 || !beta.is_finite() {
        return Err(Error::SingularMatrix("zero pivot in row 0".into()));
    }
    c[0] = upper[0] / beta;
    d[0] = rhs[0] / beta;
    for i in 1..n {
        beta = diag[i] - lower[i] * c[i - 1];
        if beta == 0.0 || !beta.is_finite() {
            return Err(Error::SingularMatrix(format!("zero pivot in row {i}")));
        }
        c[i] = upper[i] / beta;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Solves a periodic tridiagonal system where row 0 couples to x[n-1]
/// through `lower[0]` and row n-1 couples to x[0] through `upper[n-1]`.
pub fn solve_cyclic_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    match n {
        0 => return Ok(Vec::new()),
        1 => {
            let a = diag[0] + lower[0] + upper[0];
            if a == 0.0 {
                return Err(Error::SingularMatrix("1x1 periodic system".into()));
            }
            return Ok(vec![rhs[0] / a]);
        }
        2 => {
            let (a, b) = (diag[0], upper[0] + lower[0]);
            let (c, d) = (lower[1] + upper[1], diag[1]);
            let det = a * d - b * c;
            if det == 0.0 {
                return Err(Error::SingularMatrix("2x2 periodic system".into()));
            }
            return Ok(vec![(rhs[0] * d - b * rhs[1]) / det, (a * rhs[1] - c * rhs[0]) / det]);
        }
        _ => {}
    }
    // Sherman-Morrison with the corner entries moved into a rank-one update.
    let alpha = upper[n - 1];
    let beta = lower[0];
    let gamma = -diag[0];
    let mut bb = diag.to_vec();
    bb[0] -= gamma;
    bb[n - 1] -= alpha * beta / gamma;
    let mut lo = lower.to_vec();
    lo[0] = 0.0;
    let mut up = upper.to_vec();
    up[n - 1] = 0.0;
    let x = solve_tridiagonal(&lo, &bb, &up, rhs)?;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = solve_tridiagonal(&lo, &bb, &up, &u)?;
    let fact_den = 1.0 + z[0] + beta * z[n - 1] / gamma;
    if fact_den == 0.0 {
        return Err(Error::SingularMatrix("periodic correction".into()));
    }
    let fact = (x[0] + beta * x[n - 1] / gamma) / fact_den;
    Ok(x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect())
}

pub type Block = Matrix4<f64>;
pub type BlockVec = Vector4<f64>;

/// Block-tridiagonal system with 4x4 blocks, solved by block elimination.
#[derive(Debug, Clone)]
pub struct BlockTridiagonal {
    pub lower: Vec<Block>,
    pub diag: Vec<Block>,
    pub upper: Vec<Block>,
}

impl BlockTridiagonal {
    pub fn zeros(n: usize) -> Self {
        BlockTridiagonal {
            lower: vec![Block::zeros(); n],
            diag: vec![Block::zeros(); n],
            upper: vec![Block::zeros(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Solves in place; the blocks are consumed by the factorisation.
    pub fn solve(mut self, mut rhs: Vec<BlockVec>) -> Result<Vec<BlockVec>> {
        let n = self.diag.len();
        assert_eq!(rhs.len(), n);
        for i in 0..n {
            if i > 0 {
                // D_i -= L_i * U'_{i-1}, r_i -= L_i * r'_{i-1}
                let l = self.lower[i];
                self.diag[i] -= l * self.upper[i - 1];
                let prev = rhs[i - 1];
                rhs[i] -= l * prev;
            }
            let lu = self.diag[i].lu();
            let msg = || Error::SingularMatrix(format!("singular diagonal block {i}"));
            if i + 1 < n {
                self.upper[i] = lu.solve(&self.upper[i]).ok_or_else(msg)?;
            }
            rhs[i] = lu.solve(&rhs[i]).ok_or_else(msg)?;
            if !rhs[i].iter().all(|v| v.is_finite()) {
                return Err(msg());
            }
        }
        for i in (0..n.saturating_sub(1)).rev() {
            let next = rhs[i + 1];
            rhs[i] -= self.upper[i] * next;
        }
        Ok(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matvec_tri(lower: &[f64], diag: &[f64], upper: &[f64], x: &[f64], cyclic: bool) -> Vec<f64> {
        let n = diag.len();
        (0..n)
            .map(|i| {
                let mut s = diag[i] * x[i];
                if i > 0 {
                    s += lower[i] * x[i - 1];
                } else if cyclic {
                    s += lower[0] * x[n - 1];
                }
                if i + 1 < n {
                    s += upper[i] * x[i + 1];
                } else if cyclic {
                    s += upper[n - 1] * x[0];
                }
                s
            })
            .collect()
    }

    #[test]
    fn thomas_solves_random_diagonally_dominant_system() {
        let n = 17;
        let lower: Vec<f64> = (0..n).map(|i| -0.3 - 0.01 * i as f64).collect();
        let upper: Vec<f64> = (0..n).map(|i| -0.5 + 0.02 * i as f64).collect();
        let diag: Vec<f64> = (0..n).map(|i| 2.0 + (i as f64).sin()).collect();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).cos()).collect();
        let b = matvec_tri(&lower, &diag, &upper, &x, false);
        let sol = solve_tridiagonal(&lower, &diag, &upper, &b).unwrap();
        for (a, e) in sol.iter().zip(&x) {
            assert!((a - e).abs() < 1e-13);
        }
    }

    #[test]
    fn cyclic_solver_matches_periodic_matvec() {
        for n in [1usize, 2, 3, 5, 32] {
            let lower: Vec<f64> = (0..n).map(|i| -0.4 - 0.01 * i as f64).collect();
            let upper: Vec<f64> = (0..n).map(|i| -0.45 + 0.005 * i as f64).collect();
            let diag: Vec<f64> = (0..n).map(|i| 2.5 + 0.1 * (i as f64).sin()).collect();
            let x: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.3).sin()).collect();
            let b = if n <= 2 {
                // for tiny systems the corner entries fold onto existing neighbours
                (0..n)
                    .map(|i| {
                        let j = (i + 1) % n;
                        let k = (i + n - 1) % n;
                        diag[i] * x[i] + upper[i] * x[j] + lower[i] * x[k]
                    })
                    .collect()
            } else {
                matvec_tri(&lower, &diag, &upper, &x, true)
            };
            let sol = solve_cyclic_tridiagonal(&lower, &diag, &upper, &b).unwrap();
            for (a, e) in sol.iter().zip(&x) {
                assert!((a - e).abs() < 1e-12, "n = {n}");
            }
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        let r = solve_tridiagonal(&[0.0, 1.0], &[0.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]);
        assert!(matches!(r, Err(Error::SingularMatrix(_))));
    }

    #[test]
    fn block_solver_matches_dense_product() {
        let n = 6;
        let mut sys = BlockTridiagonal::zeros(n);
        for i in 0..n {
            sys.diag[i] = Block::from_fn(|r, c| if r == c { 6.0 } else { 0.3 * ((r + 2 * c + i) as f64).sin() });
            if i > 0 {
                sys.lower[i] = Block::from_fn(|r, c| -0.5 + 0.1 * ((r * c + i) as f64).cos());
            }
            if i + 1 < n {
                sys.upper[i] = Block::from_fn(|r, c| 0.4 * ((r + c + 3 * i) as f64).cos());
            }
        }
        let x: Vec<BlockVec> = (0..n).map(|i| BlockVec::from_fn(|r, _| (i * 4 + r) as f64 * 0.1 - 0.7)).collect();
        let b: Vec<BlockVec> = (0..n)
            .map(|i| {
                let mut s = sys.diag[i] * x[i];
                if i > 0 {
                    s += sys.lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    s += sys.upper[i] * x[i + 1];
                }
                s
            })
            .collect();
        let sol = sys.solve(b).unwrap();
        for (a, e) in sol.iter().zip(&x) {
            assert!((a - e).norm() < 1e-12);
        }
    }
}
