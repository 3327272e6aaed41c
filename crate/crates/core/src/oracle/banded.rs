//! Tridiagonal solver with partial pivoting.
//!
//! The truncated walk system is not diagonally dominant in general (a site
//! next to a barrier can receive more than it keeps), so plain Thomas
//! elimination is not safe. This follows the LAPACK `gtsv` scheme: row swaps
//! between neighbours introduce one extra super-diagonal.

use crate::error::{Result, WalkError};

/// Tridiagonal matrix: `sub[i]` multiplies `x[i-1]` in row `i` (unused for
/// `i = 0`), `sup[i]` multiplies `x[i+1]` (unused for the last row).
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Tridiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `A x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * x[i];
                if i > 0 {
                    v += self.sub[i] * x[i - 1];
                }
                if i + 1 < n {
                    v += self.sup[i] * x[i + 1];
                }
                v
            })
            .collect()
    }

    /// Solves `A x = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        assert_eq!(rhs.len(), n, "right-hand side length");
        if n == 0 {
            return Ok(Vec::new());
        }
        // Row i of the factored upper triangle: d[i] x[i] + u1[i] x[i+1] + u2[i] x[i+2].
        let mut d = self.diag.clone();
        let mut u1 = self.sup.clone();
        let mut u2 = vec![0.0; n];
        let mut b = rhs.to_vec();
        for i in 0..n - 1 {
            let below = self.sub[i + 1];
            if d[i].abs() >= below.abs() {
                if d[i] == 0.0 {
                    return Err(WalkError::SingularSystem { row: i });
                }
                let f = below / d[i];
                d[i + 1] -= f * u1[i];
                b[i + 1] -= f * b[i];
            } else {
                // Swap rows i and i+1.
                let f = d[i] / below;
                let row_u1 = u1[i];
                d[i] = below;
                u1[i] = d[i + 1];
                let next_sup = if i + 2 < n { u1[i + 1] } else { 0.0 };
                u2[i] = next_sup;
                d[i + 1] = row_u1 - f * u1[i];
                if i + 2 < n {
                    u1[i + 1] = -f * next_sup;
                }
                let bi = b[i];
                b[i] = b[i + 1];
                b[i + 1] = bi - f * b[i];
            }
        }
        if d[n - 1] == 0.0 {
            return Err(WalkError::SingularSystem { row: n - 1 });
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut v = b[i];
            if i + 1 < n {
                v -= u1[i] * x[i + 1];
            }
            if i + 2 < n {
                v -= u2[i] * x[i + 2];
            }
            x[i] = v / d[i];
        }
        Ok(x)
    }
}
