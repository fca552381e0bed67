//! The weighted pairwise objective, its surrogates, and the per-row gain
//! decomposition that makes the objective linear in any single code row.
//!
//! For labels `S` and predictions `Y = U^T V - theta`, the objective is
//! `beta * sum_{S=+1} ell(Y_ij) + (1 - beta) * sum_{S=-1} ell(-Y_ij)`, summed
//! over all pairs including the diagonal. Removing row `t`'s contribution
//! `u^(t)^T v^(t)` from `Y` leaves a residual `Y^(t)` from which a gain matrix
//! `M` and constant `C` are built so that the full loss equals
//! `C - u^(t) M v^(t)^T` — exact for any surrogate, which is what allows
//! closed-form sign updates of whole rows.

use rayon::prelude::*;

use crate::bitcode::SignMatrix;
use crate::datagen::SimilarityMatrix;
use crate::mat::Mat;
use crate::{Error, Result};

/// Pairwise error measure applied to signed margins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surrogate {
    /// `1` if the margin is non-positive, else `0`.
    ZeroOne,
    /// `sqrt(ln(1 + e^{-z}))`: continuous, strictly decreasing, and not flat
    /// on the negative side, so misclassified pairs keep pulling toward the
    /// correct sign.
    SqrtLogistic,
}

/// Loss configuration: positive-pair weight and surrogate choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    beta: f64,
    surrogate: Surrogate,
}

impl LossParams {
    pub fn new(beta: f64, surrogate: Surrogate) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::invalid(format!("beta = {beta} outside (0, 1)")));
        }
        Ok(LossParams { beta, surrogate })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn surrogate(&self) -> Surrogate {
        self.surrogate
    }

    /// Pair weight: `beta` on positive pairs, `1 - beta` on negative ones.
    #[inline]
    pub fn weight(&self, s: i8) -> f64 {
        if s > 0 {
            self.beta
        } else {
            1.0 - self.beta
        }
    }
}

/// Evaluates the surrogate at margin `z`.
///
/// The sqrt-logistic branch uses `ln(1 + e^{-z})` for `z >= 0` and the
/// algebraically equal `-z + ln(1 + e^{z})` for `z < 0`, so the exponent
/// never overflows and the relative error stays at f64 roundoff even for
/// `z << -700`.
#[inline]
pub fn ell(z: f64, surrogate: Surrogate) -> f64 {
    match surrogate {
        Surrogate::ZeroOne => {
            if z <= 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Surrogate::SqrtLogistic => {
            let softplus = if z >= 0.0 {
                (-z).exp().ln_1p()
            } else {
                -z + z.exp().ln_1p()
            };
            softplus.sqrt()
        }
    }
}

/// Exact weighted sum of surrogate losses over all `(i, j)` pairs.
pub fn total_loss(y: &Mat, s: &SimilarityMatrix, params: LossParams) -> Result<f64> {
    if y.rows() != s.n() || y.cols() != s.n() {
        return Err(Error::dims(format!(
            "prediction matrix {}x{} vs similarity {2}x{2}",
            y.rows(),
            y.cols(),
            s.n()
        )));
    }
    let n = s.n();
    let row_sums: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let yr = y.row(i);
            let sr = s.row(i);
            let mut acc = 0.0;
            for j in 0..n {
                let sij = sr[j];
                acc += params.weight(sij) * ell(sij as f64 * yr[j], params.surrogate);
            }
            acc
        })
        .collect();
    // sequential reduction keeps the result independent of thread count
    Ok(row_sums.iter().sum())
}

/// Everything needed to update one code row in closed form.
#[derive(Debug, Clone)]
pub struct UpdateContext {
    /// Residual predictions `Y^(t) = U^T V - theta - u^(t)^T v^(t)`.
    pub residual: Mat,
    /// Gain matrix; independent of the row pair being updated.
    pub gain: Mat,
    /// Constant of the decomposition, also independent of that pair.
    pub constant: f64,
}

impl UpdateContext {
    /// The loss value implied by choosing rows `(u_row, v_row)` for slot `t`.
    pub fn loss_for(&self, u_row: &[i8], v_row: &[i8]) -> f64 {
        self.constant - self.bilinear_gain(u_row, v_row)
    }

    /// `u M v^T` for candidate rows.
    pub fn bilinear_gain(&self, u_row: &[i8], v_row: &[i8]) -> f64 {
        let n = self.gain.rows();
        assert_eq!(u_row.len(), n);
        assert_eq!(v_row.len(), n);
        let mut total = 0.0;
        for i in 0..n {
            let gi = self.gain.row(i);
            let mut acc = 0.0;
            for j in 0..n {
                acc += gi[j] * v_row[j] as f64;
            }
            total += u_row[i] as f64 * acc;
        }
        total
    }
}

/// Builds the gain matrix and constant from a residual prediction matrix.
///
/// `M_ij = (w_ij / 2) * (ell(S_ij (Yt_ij - 1)) - ell(S_ij (Yt_ij + 1)))` and
/// `C = (L(Yt + 1) + L(Yt - 1)) / 2`.
pub fn gain_from_residual(residual: &Mat, s: &SimilarityMatrix, params: LossParams) -> (Mat, f64) {
    let n = s.n();
    let mut gain = Mat::zeros(n, n);
    let mut c_parts = vec![0.0; n];
    gain.as_slice();
    // fill row by row; each row is independent
    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let sr = s.row(i);
            let rr = residual.row(i);
            let mut grow = vec![0.0; n];
            let mut c = 0.0;
            for j in 0..n {
                let sij = sr[j] as f64;
                let w = params.weight(sr[j]);
                let lo = ell(sij * (rr[j] - 1.0), params.surrogate);
                let hi = ell(sij * (rr[j] + 1.0), params.surrogate);
                grow[j] = w / 2.0 * (lo - hi);
                c += w / 2.0 * (lo + hi);
            }
            (grow, c)
        })
        .collect();
    for (i, (grow, c)) in rows.into_iter().enumerate() {
        gain.row_mut(i).copy_from_slice(&grow);
        c_parts[i] = c;
    }
    (gain, c_parts.iter().sum())
}

/// Computes the full decomposition for row `t` of a `(U, V, theta)` triple.
pub fn build_update_context(
    u: &SignMatrix,
    v: &SignMatrix,
    theta: f64,
    t: usize,
    s: &SimilarityMatrix,
    params: LossParams,
) -> Result<UpdateContext> {
    if u.k() != v.k() {
        return Err(Error::dims(format!("k mismatch: {} vs {}", u.k(), v.k())));
    }
    if u.n() != s.n() || v.n() != s.n() {
        return Err(Error::dims(format!(
            "code counts ({}, {}) vs similarity size {}",
            u.n(),
            v.n(),
            s.n()
        )));
    }
    if t >= u.k() {
        return Err(Error::invalid(format!(
            "row index {t} out of range for k = {}",
            u.k()
        )));
    }
    let n = s.n();
    let residual = Mat::from_fn(n, n, |i, j| {
        let mut y = 0.0;
        for tt in 0..u.k() {
            if tt != t {
                y += (u.get(tt, i) * v.get(tt, j)) as f64;
            }
        }
        y - theta
    });
    let (gain, constant) = gain_from_residual(&residual, s, params);
    Ok(UpdateContext {
        residual,
        gain,
        constant,
    })
}
