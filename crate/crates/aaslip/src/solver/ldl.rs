//! Dense LDL^T factorization without pivoting, for symmetric quasi-definite
//! KKT systems. The interior-point method keeps the (1,1) block positive
//! and the (2,2) block negative via regularization, so a fixed elimination
//! order is stable and the pivot signs reveal the matrix inertia.

/// Lower-triangular factor with unit diagonal, stored row-major, plus the
/// signed pivot vector.
pub struct LdlFactor {
    n: usize,
    l: Vec<f64>,
    d: Vec<f64>,
}

/// Signature of the factored matrix: (positive, negative, zero-ish) pivots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

impl LdlFactor {
    /// Factor a symmetric matrix given by its dense lower triangle
    /// (row-major, full n*n storage; the upper triangle is ignored).
    /// Returns `None` on a pivot too small to divide by.
    pub fn factor(a: &[f64], n: usize) -> Option<(LdlFactor, Inertia)> {
        debug_assert_eq!(a.len(), n * n);
        let mut l = a.to_vec();
        let mut d = vec![0.0; n];
        // Scratch row holding L[j][k] * d[k] for the current pivot row.
        let mut w = vec![0.0; n];

        let scale = a
            .iter()
            .fold(0.0f64, |acc, &v| acc.max(v.abs()))
            .max(1.0);
        let tiny = 1e-100 * scale;

        for j in 0..n {
            for k in 0..j {
                w[k] = l[j * n + k] * d[k];
            }
            let mut dj = l[j * n + j];
            for k in 0..j {
                dj -= l[j * n + k] * w[k];
            }
            if !dj.is_finite() || dj.abs() < tiny {
                return None;
            }
            d[j] = dj;
            let inv = 1.0 / dj;
            for i in j + 1..n {
                let row_i = i * n;
                let mut v = l[row_i + j];
                // v -= dot(L[i][..j], w[..j])
                let (li, wj) = (&l[row_i..row_i + j], &w[..j]);
                let mut acc = 0.0;
                for (a, b) in li.iter().zip(wj) {
                    acc += a * b;
                }
                v -= acc;
                l[row_i + j] = v * inv;
            }
        }

        let mut inertia = Inertia { positive: 0, negative: 0, zero: 0 };
        for &dj in &d {
            if dj > 0.0 {
                inertia.positive += 1;
            } else if dj < 0.0 {
                inertia.negative += 1;
            } else {
                inertia.zero += 1;
            }
        }
        Some((LdlFactor { n, l, d }, inertia))
    }

    /// Solve A x = b in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        // Forward: L y = b.
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let mut acc = 0.0;
            for (lik, bk) in row.iter().zip(b.iter()) {
                acc += lik * bk;
            }
            b[i] -= acc;
        }
        // Diagonal.
        for i in 0..n {
            b[i] /= self.d[i];
        }
        // Backward: L^T x = y.
        for i in (0..n).rev() {
            let mut acc = b[i];
            for k in i + 1..n {
                acc -= self.l[k * n + i] * b[k];
            }
            b[i] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn mul(a: &[f64], x: &[f64], n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (0..n).map(|j| a[i * n + j] * x[j]).sum())
            .collect()
    }

    #[test]
    fn factor_solves_quasi_definite_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (np, nn) = (14, 9);
        let n = np + nn;
        // Build A = [[B B^T + I, C^T], [C, -I - D D^T]] which is quasi-definite.
        let mut a = vec![0.0; n * n];
        let b: Vec<f64> = (0..np * np).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..nn * np).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dd: Vec<f64> = (0..nn * nn).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for i in 0..np {
            for j in 0..np {
                let mut v = if i == j { 1.0 } else { 0.0 };
                for k in 0..np {
                    v += b[i * np + k] * b[j * np + k];
                }
                a[i * n + j] = v;
            }
        }
        for i in 0..nn {
            for j in 0..np {
                a[(np + i) * n + j] = c[i * np + j];
                a[j * n + np + i] = c[i * np + j];
            }
        }
        for i in 0..nn {
            for j in 0..nn {
                let mut v = if i == j { -1.0 } else { 0.0 };
                for k in 0..nn {
                    v -= dd[i * nn + k] * dd[j * nn + k];
                }
                a[(np + i) * n + (np + j)] = v;
            }
        }

        let (f, inertia) = LdlFactor::factor(&a, n).unwrap();
        assert_eq!(inertia, Inertia { positive: np, negative: nn, zero: 0 });

        let x_true: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut b = mul(&a, &x_true, n);
        f.solve(&mut b);
        for (xi, ti) in b.iter().zip(&x_true) {
            assert!((xi - ti).abs() < 1e-9, "{xi} vs {ti}");
        }
    }

    #[test]
    fn detects_indefinite_top_block() {
        // A block with a negative pivot where a positive one is expected.
        let a = vec![-2.0, 0.0, 0.0, -3.0];
        let (_, inertia) = LdlFactor::factor(&a, 2).unwrap();
        assert_eq!(inertia.negative, 2);
    }
}
