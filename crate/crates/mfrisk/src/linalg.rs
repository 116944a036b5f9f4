//! Small dense-matrix helpers: LU solves, the matrix exponential, and a
//! tridiagonal solver. Sized for K-group drift matrices (K at most 16), not
//! for general linear algebra.

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub n: usize,
    pub a: Vec<f64>,
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        Mat {
            n,
            a: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            m.a[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        let n = self.n;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self.get(i, k);
                if aik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.a[i * n + j] += aik * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Mat {
        Mat {
            n: self.n,
            a: self.a.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Mat) -> Mat {
        Mat {
            n: self.n,
            a: self
                .a
                .iter()
                .zip(&other.a)
                .map(|(x, y)| x + y)
                .collect(),
        }
    }

    /// Maximum absolute column sum.
    pub fn one_norm(&self) -> f64 {
        let n = self.n;
        (0..n)
            .map(|j| (0..n).map(|i| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Solves A X = B for X with partial-pivoting LU; B given column-wise
    /// as a matrix. Panics on exactly singular input; callers only pass
    /// well-conditioned Pade denominators and diagonal mass matrices.
    pub fn solve_matrix(&self, b: &Mat) -> Mat {
        let n = self.n;
        let mut lu = self.a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let mut pivot = col;
            let mut best = lu[perm[col] * n + col].abs();
            for row in (col + 1)..n {
                let v = lu[perm[row] * n + col].abs();
                if v > best {
                    best = v;
                    pivot = row;
                }
            }
            assert!(best > 0.0, "singular matrix in solve");
            perm.swap(col, pivot);
            let p = perm[col];
            let diag = lu[p * n + col];
            for row in (col + 1)..n {
                let r = perm[row];
                let factor = lu[r * n + col] / diag;
                lu[r * n + col] = factor;
                for j in (col + 1)..n {
                    lu[r * n + j] -= factor * lu[p * n + j];
                }
            }
        }
        let mut x = Mat::zeros(n);
        for rhs_col in 0..n {
            // Forward substitution on the permuted rows.
            let mut y = vec![0.0; n];
            for i in 0..n {
                let mut s = b.get(perm[i], rhs_col);
                for j in 0..i {
                    s -= lu[perm[i] * n + j] * y[j];
                }
                y[i] = s;
            }
            for i in (0..n).rev() {
                let mut s = y[i];
                for j in (i + 1)..n {
                    s -= lu[perm[i] * n + j] * x.get(j, rhs_col);
                }
                x.set(i, rhs_col, s / lu[perm[i] * n + i]);
            }
        }
        x
    }
}

/// Matrix exponential by scaling and squaring with a (6,6) Pade approximant.
pub fn matrix_exponential(m: &Mat) -> Mat {
    const C: [f64; 7] = [
        1.0,
        0.5,
        5.0 / 44.0,
        1.0 / 66.0,
        1.0 / 792.0,
        1.0 / 15840.0,
        1.0 / 665280.0,
    ];
    let norm = m.one_norm();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil().max(0.0) as u32
    } else {
        0
    };
    let a = m.scaled(1.0 / f64::powi(2.0, squarings as i32));
    let n = m.n;
    let mut num = Mat::zeros(n);
    let mut den = Mat::zeros(n);
    let mut power = Mat::identity(n);
    for (k, &c) in C.iter().enumerate() {
        num = num.add(&power.scaled(c));
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        den = den.add(&power.scaled(sign * c));
        if k < C.len() - 1 {
            power = power.matmul(&a);
        }
    }
    let mut result = den.solve_matrix(&num);
    for _ in 0..squarings {
        result = result.matmul(&result);
    }
    result
}

/// Solves a tridiagonal system with the Thomas algorithm.
///
/// `lower[i]` multiplies x[i-1] in row i (lower[0] unused), `upper[i]`
/// multiplies x[i+1] (upper[n-1] unused). Requires a nonsingular,
/// factorization-stable system; callers pass diagonally dominant or SPD
/// Newton systems, possibly Levenberg-shifted.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut b = rhs.to_vec();
    for i in 1..n {
        let w = lower[i] / d[i - 1];
        d[i] -= w * upper[i - 1];
        b[i] -= w * b[i - 1];
    }
    let mut x = vec![0.0; n];
    x[n - 1] = b[n - 1] / d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (b[i] - upper[i] * x[i + 1]) / d[i];
    }
    x
}
