//! Minimal dense `f64` matrix support for the desk-scale problems here:
//! row-major storage, matrix-vector products, a Cholesky factorization for
//! symmetric positive definite systems, and power iteration for the top
//! singular pair. Nothing in the crate needs more than that.

use crate::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::dims("ragged rows".to_string()));
        }
        Ok(Mat {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `A x` for `x` of length `cols`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `A^T x` for `x` of length `rows`.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix,
/// `A = L L^T`. Returns `None` when a pivot is not strictly positive.
pub fn cholesky(a: &Mat) -> Option<Mat> {
    assert_eq!(a.rows(), a.cols());
    let n = a.rows();
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l.set(i, j, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Some(l)
}

/// Solves `A x = b` for symmetric positive definite `A` via Cholesky.
pub fn solve_spd(a: &Mat, b: &[f64]) -> Option<Vec<f64>> {
    let l = cholesky(a)?;
    let n = a.rows();
    assert_eq!(b.len(), n);
    // forward: L y = b
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l.get(i, k) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    // backward: L^T x = y
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l.get(k, i) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    Some(x)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Top singular triple `(u, sigma, v)` of a linear operator given as a pair
/// of closures (`apply` maps length-`cols` vectors to length-`rows` vectors,
/// `apply_t` the transpose). Plain power iteration on `A^T A` with a fixed
/// deterministic start; returns `None` when the operator is numerically zero.
pub fn top_singular_pair(
    rows: usize,
    cols: usize,
    apply: impl Fn(&[f64]) -> Vec<f64>,
    apply_t: impl Fn(&[f64]) -> Vec<f64>,
    iters: usize,
) -> Option<(Vec<f64>, f64, Vec<f64>)> {
    // Deterministic start with unequal entries so we do not sit exactly on a
    // singular vector orthogonal to the leading one.
    let mut v: Vec<f64> = (0..cols)
        .map(|j| 1.0 + (j as f64 + 1.0).sin() * 0.25)
        .collect();
    let nv = norm(&v);
    for x in v.iter_mut() {
        *x /= nv;
    }
    let mut sigma = 0.0;
    for _ in 0..iters {
        let u = apply(&v);
        debug_assert_eq!(u.len(), rows);
        let nu = norm(&u);
        if nu < 1e-300 {
            return None;
        }
        let u: Vec<f64> = u.iter().map(|x| x / nu).collect();
        let w = apply_t(&u);
        let nw = norm(&w);
        if nw < 1e-300 {
            return None;
        }
        sigma = nw;
        v = w.iter().map(|x| x / nw).collect();
    }
    let u = apply(&v);
    let nu = norm(&u);
    if nu < 1e-300 {
        return None;
    }
    let u = u.iter().map(|x| x / nu).collect();
    Some((u, sigma, v))
}
