//! Small dense linear algebra for least-squares fits.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Self {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        let mut m = Self::zeros(rows, cols);
        for (j, c) in columns.iter().enumerate() {
            assert_eq!(c.len(), rows, "ragged columns");
            for (i, v) in c.iter().enumerate() {
                m.data[i * cols + j] = *v;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `A^T A` and `A^T y`.
    pub fn normal_equations(&self, y: &[f64]) -> (Matrix, Vec<f64>) {
        assert_eq!(y.len(), self.rows);
        let n = self.cols;
        let mut ata = Matrix::zeros(n, n);
        let mut aty = vec![0.0; n];
        for (i, yi) in y.iter().enumerate() {
            let r = self.row(i);
            for a in 0..n {
                if r[a] == 0.0 {
                    continue;
                }
                aty[a] += r[a] * yi;
                for b in a..n {
                    ata.data[a * n + b] += r[a] * r[b];
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                ata.data[a * n + b] = ata.data[b * n + a];
            }
        }
        (ata, aty)
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }
}

/// Failure of a factorization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Singular {
    /// Pivot index where the factorization broke down.
    pub index: usize,
}

/// Solve `A x = b` for symmetric positive definite `A` (Cholesky).
pub fn solve_spd(a: &Matrix, b: &[f64]) -> Result<Vec<f64>, Singular> {
    let n = a.rows;
    assert_eq!(a.cols, n);
    assert_eq!(b.len(), n);
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Singular { index: j });
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    Ok(y)
}

/// Damped least squares `min |A x - y|^2 + mu |x|^2` through the normal
/// equations, with `mu = ridge * trace(A^T A)`.
pub fn ridge_lstsq(a: &Matrix, y: &[f64], ridge: f64) -> Result<Vec<f64>, Singular> {
    let (mut ata, aty) = a.normal_equations(y);
    let mu = ridge * ata.trace();
    for i in 0..ata.rows {
        let v = ata.get(i, i);
        ata.set(i, i, v + mu);
    }
    solve_spd(&ata, &aty)
}

/// Plain least squares on column-equilibrated normal equations.
pub fn lstsq(a: &Matrix, y: &[f64]) -> Result<Vec<f64>, Singular> {
    let (mut ata, aty) = a.normal_equations(y);
    let n = ata.rows;
    let scale: Vec<f64> = (0..n)
        .map(|i| {
            let d = ata.get(i, i);
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    for i in 0..n {
        for j in 0..n {
            let v = ata.get(i, j) * scale[i] * scale[j];
            ata.set(i, j, v);
        }
    }
    let rhs: Vec<f64> = aty.iter().zip(&scale).map(|(v, s)| v * s).collect();
    let z = solve_spd(&ata, &rhs)?;
    Ok(z.iter().zip(&scale).map(|(v, s)| v * s).collect())
}

/// Least squares through Householder QR on equilibrated columns.
///
/// Returns the solution and the residual `y - A x`. A column whose pivot
/// falls below `1e-13` of the largest one is reported as [`Singular`].
pub fn qr_lstsq(a: &Matrix, y: &[f64]) -> Result<(Vec<f64>, Vec<f64>), Singular> {
    let (m, n) = (a.rows, a.cols);
    assert_eq!(y.len(), m);
    assert!(m >= n, "underdetermined system");
    let scale: Vec<f64> = (0..n)
        .map(|j| {
            let c = (0..m).map(|i| a.get(i, j).powi(2)).sum::<f64>().sqrt();
            if c > 0.0 {
                1.0 / c
            } else {
                1.0
            }
        })
        .collect();
    // column-major working copy
    let mut q: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a.get(i, j) * scale[j]).collect()).collect();
    let mut rhs = y.to_vec();
    let mut diag = vec![0.0; n];
    for j in 0..n {
        let norm = q[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        let d = if q[j][j] > 0.0 { -norm } else { norm };
        diag[j] = d;
        if norm == 0.0 {
            continue;
        }
        // reflector v = x - d e_1, stored in place
        q[j][j] -= d;
        let vnorm2: f64 = q[j][j..].iter().map(|v| v * v).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let (done, rest) = q.split_at_mut(j + 1);
        let v = &done[j][j..];
        for col in rest.iter_mut() {
            let f = 2.0 * v.iter().zip(&col[j..]).map(|(a, b)| a * b).sum::<f64>() / vnorm2;
            for (c, vi) in col[j..].iter_mut().zip(v) {
                *c -= f * vi;
            }
        }
        let f = 2.0 * v.iter().zip(&rhs[j..]).map(|(a, b)| a * b).sum::<f64>() / vnorm2;
        for (c, vi) in rhs[j..].iter_mut().zip(v) {
            *c -= f * vi;
        }
    }
    let big = diag.iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
    let mut x = vec![0.0; n];
    for j in (0..n).rev() {
        if !(diag[j].abs() > 1e-13 * big) {
            return Err(Singular { index: j });
        }
        let mut s = rhs[j];
        for k in j + 1..n {
            s -= q[k][j] * x[k];
        }
        x[j] = s / diag[j];
    }
    for (xj, sj) in x.iter_mut().zip(&scale) {
        *xj *= sj;
    }
    let fitted = a.mul_vec(&x);
    let residual = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    Ok((x, residual))
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
