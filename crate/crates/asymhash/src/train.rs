//! The four trainers: unconstrained asymmetric codes, the constrained
//! symmetric baseline, and the two out-of-sample models (a pair of linear
//! threshold maps, or one linear map plus free database codewords).
//!
//! All of them run the same outer loop: grow the code one bit at a time,
//! initializing each new bit from the previous model, and within a bit stage
//! alternate whole-row updates with threshold re-optimization. Code rows are
//! updated in closed form through the gain decomposition; weight rows go
//! through weighted-logistic SGD and are accepted only when they strictly
//! improve the objective, so the recorded loss trace never increases.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::bitcode::{PackedCodeMatrix, SignMatrix};
use crate::datagen::{Dataset, SimilarityMatrix};
use crate::loss::{ell, LossParams, Surrogate, UpdateContext};
use crate::mat::{solve_spd, top_singular_pair, Mat};
use crate::sign_pm;
use crate::{Error, Result};

/// Which model family a trained model belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Unconstrained codes on both sides.
    Uv,
    /// Single shared code matrix (`V = U`).
    Sym,
    /// Linear threshold maps on both sides.
    LinLin,
    /// Linear threshold query map, free database codewords.
    LinV,
    /// Random hyperplane baseline.
    Lsh,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Uv => "uv",
            Variant::Sym => "sym",
            Variant::LinLin => "linlin",
            Variant::LinV => "linv",
            Variant::Lsh => "lsh",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "uv" => Ok(Variant::Uv),
            "sym" => Ok(Variant::Sym),
            "linlin" => Ok(Variant::LinLin),
            "linv" => Ok(Variant::LinV),
            "lsh" => Ok(Variant::Lsh),
            other => Err(Error::invalid(format!("unknown variant '{other}'"))),
        }
    }
}

/// How a freshly appended bit is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStrategy {
    Random,
    /// Threshold the top singular pair of the gain matrix (projected onto
    /// the data span for the linear variants).
    RankOne,
    /// Evaluate both and keep whichever starts with the lower objective.
    BestOfBoth,
}

impl InitStrategy {
    pub fn parse(s: &str) -> Result<InitStrategy> {
        match s {
            "random" => Ok(InitStrategy::Random),
            "rank-one" => Ok(InitStrategy::RankOne),
            "best-of-both" => Ok(InitStrategy::BestOfBoth),
            other => Err(Error::invalid(format!("unknown init strategy '{other}'"))),
        }
    }
}

/// Trainer knobs. `seed` feeds named substreams so paired variant runs share
/// data while drawing independent init/SGD noise.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub beta: f64,
    pub k_max: usize,
    pub sweeps_per_bit: usize,
    pub sgd_epochs: usize,
    pub sgd_rate: f64,
    pub seed: u64,
    pub init: InitStrategy,
    /// Extra evenly spaced threshold candidates scanned besides the
    /// midpoints between distinct prediction values.
    pub theta_grid: usize,
    pub surrogate: Surrogate,
    /// Re-optimize theta after every sweep (otherwise theta stays where the
    /// initialization put it and only evaluation sweeps it).
    pub update_theta_each_sweep: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta: 0.7,
            k_max: 16,
            sweeps_per_bit: 20,
            sgd_epochs: 10,
            sgd_rate: 1.0,
            seed: 0,
            init: InitStrategy::BestOfBoth,
            theta_grid: 512,
            surrogate: Surrogate::SqrtLogistic,
            update_theta_each_sweep: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid(format!(
                "beta = {} outside (0, 1)",
                self.beta
            )));
        }
        if self.k_max < 1 {
            return Err(Error::invalid("k_max must be at least 1"));
        }
        if self.sweeps_per_bit < 1 {
            return Err(Error::invalid("need at least one sweep per bit"));
        }
        if self.sgd_epochs < 1 {
            return Err(Error::invalid("need at least one SGD epoch"));
        }
        if !(self.sgd_rate > 0.0) {
            return Err(Error::invalid("SGD rate must be positive"));
        }
        if self.theta_grid < 2 {
            return Err(Error::invalid("theta grid needs at least 2 candidates"));
        }
        Ok(())
    }

    pub fn loss_params(&self) -> LossParams {
        LossParams::new(self.beta, self.surrogate).expect("validated beta")
    }

    fn zero_one_params(&self) -> LossParams {
        LossParams::new(self.beta, Surrogate::ZeroOne).expect("validated beta")
    }
}

/// A `k x d` linear threshold map `x -> sign(W x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHash {
    w: Mat,
}

impl LinearHash {
    pub fn new(w: Mat) -> Result<Self> {
        if w.rows() == 0 || w.cols() == 0 {
            return Err(Error::invalid("hash needs at least one row and one column"));
        }
        if w.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("hash weights must be finite"));
        }
        Ok(LinearHash { w })
    }

    pub fn k(&self) -> usize {
        self.w.rows()
    }

    pub fn d(&self) -> usize {
        self.w.cols()
    }

    pub fn weights(&self) -> &Mat {
        &self.w
    }

    pub fn apply(&self, x: &[f64]) -> Vec<i8> {
        (0..self.k())
            .map(|t| sign_pm(self.w.row(t).iter().zip(x).map(|(a, b)| a * b).sum()))
            .collect()
    }

    pub fn apply_dataset(&self, x: &Dataset) -> Result<SignMatrix> {
        if x.d() != self.d() {
            return Err(Error::dims(format!(
                "hash expects dimension {}, dataset has {}",
                self.d(),
                x.d()
            )));
        }
        let cols: Vec<Vec<i8>> = (0..x.n())
            .into_par_iter()
            .map(|i| self.apply(x.point(i)))
            .collect();
        let mut m = SignMatrix::filled(self.k(), x.n(), 1);
        for (i, col) in cols.iter().enumerate() {
            for (t, &c) in col.iter().enumerate() {
                m.set(t, i, c);
            }
        }
        Ok(m)
    }

    /// The map truncated to its first `k` rows (per-stage snapshots).
    pub fn prefix(&self, k: usize) -> LinearHash {
        assert!(k >= 1 && k <= self.k());
        LinearHash {
            w: Mat::from_fn(k, self.d(), |i, j| self.w.get(i, j)),
        }
    }
}

/// One side of a model: either stored codewords or a parametric map.
#[derive(Debug, Clone, PartialEq)]
pub enum CodeSide {
    Codes(PackedCodeMatrix),
    Hash(LinearHash),
}

impl CodeSide {
    pub fn k(&self) -> usize {
        match self {
            CodeSide::Codes(c) => c.k(),
            CodeSide::Hash(h) => h.k(),
        }
    }
}

/// Model snapshot at the end of one bit stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelStage {
    pub k: usize,
    pub theta: f64,
    pub surrogate_loss: f64,
    pub zero_one_loss: f64,
    pub query: CodeSide,
    pub database: CodeSide,
}

/// One recorded objective value (`sweep == 0` is the post-init value).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub k: usize,
    pub sweep: usize,
    pub loss: f64,
}

/// A trained model of any variant, with its per-stage history.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub variant: Variant,
    pub beta: f64,
    pub theta: f64,
    pub query: CodeSide,
    pub database: CodeSide,
    /// Optional mean vector subtracted from inputs before hashing.
    pub center: Option<Vec<f64>>,
    pub loss_trace: Vec<TraceEntry>,
    pub stages: Vec<ModelStage>,
}

impl TrainedModel {
    pub fn k(&self) -> usize {
        self.query.k()
    }

    fn from_stages(
        variant: Variant,
        beta: f64,
        loss_trace: Vec<TraceEntry>,
        stages: Vec<ModelStage>,
    ) -> TrainedModel {
        let last = stages.last().expect("at least one stage");
        TrainedModel {
            variant,
            beta,
            theta: last.theta,
            query: last.query.clone(),
            database: last.database.clone(),
            center: None,
            loss_trace,
            stages,
        }
    }
}

// ---------------------------------------------------------------------------
// public row/threshold update operations
// ---------------------------------------------------------------------------

/// Optimal replacement for the query-side row given the database-side row:
/// `sign(M v)` maximizes `u M v^T` over all of `{-1, +1}^n`.
pub fn update_row_exact(ctx: &UpdateContext, db_row: &[i8]) -> Result<Vec<i8>> {
    if db_row.len() != ctx.gain.cols() {
        return Err(Error::dims(format!(
            "row length {} vs gain matrix width {}",
            db_row.len(),
            ctx.gain.cols()
        )));
    }
    let v: Vec<f64> = db_row.iter().map(|&c| c as f64).collect();
    Ok(ctx.gain.mul_vec(&v).into_iter().map(sign_pm).collect())
}

/// The mirrored update: `sign(M^T u)` for the database-side row.
pub fn update_row_exact_db(ctx: &UpdateContext, query_row: &[i8]) -> Result<Vec<i8>> {
    if query_row.len() != ctx.gain.rows() {
        return Err(Error::dims(format!(
            "row length {} vs gain matrix height {}",
            query_row.len(),
            ctx.gain.rows()
        )));
    }
    let u: Vec<f64> = query_row.iter().map(|&c| c as f64).collect();
    Ok(ctx.gain.tr_mul_vec(&u).into_iter().map(sign_pm).collect())
}

/// Picks the threshold minimizing the objective with the codes held fixed.
///
/// Candidates are the midpoints between consecutive distinct values of
/// `U^T V`, sentinels one unit beyond the extremes, an evenly spaced grid of
/// `grid` extra points, and the current theta itself (so the objective can
/// never increase); on the smooth surrogate the winner is locally refined.
pub fn update_theta(
    u: &SignMatrix,
    v: &SignMatrix,
    s: &SimilarityMatrix,
    params: LossParams,
    grid: usize,
    current_theta: f64,
) -> Result<f64> {
    if grid < 2 {
        return Err(Error::invalid("theta grid needs at least 2 candidates"));
    }
    if u.k() != v.k() || u.n() != s.n() || v.n() != s.n() {
        return Err(Error::dims(
            "codes and similarity sizes disagree".to_string(),
        ));
    }
    let n = s.n();
    let mut scores = vec![0i32; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0i32;
            for t in 0..u.k() {
                acc += (u.get(t, i) * v.get(t, j)) as i32;
            }
            scores[i * n + j] = acc;
        }
    }
    let counts = ScoreCounts::build(&scores, s);
    Ok(counts.optimal_theta(params, grid, current_theta))
}

/// One attempted weight-row update: weighted-logistic SGD on the induced
/// binary classification problem, accepted only on strict improvement.
///
/// Targets are `sign(<M_i, v>)` with weights `|<M_i, v>|`; returns the row,
/// its codes over the data, and whether the incumbent was replaced.
pub fn update_row_linear(
    x: &Dataset,
    gain: &Mat,
    db_row: &[i8],
    incumbent_w: &[f64],
    incumbent_codes: &[i8],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, Vec<i8>, bool)> {
    let n = x.n();
    if gain.rows() != n || gain.cols() != db_row.len() {
        return Err(Error::dims("gain matrix does not match data".to_string()));
    }
    if incumbent_w.len() != x.d() || incumbent_codes.len() != n {
        return Err(Error::dims("incumbent row sizes are wrong".to_string()));
    }
    let vf: Vec<f64> = db_row.iter().map(|&c| c as f64).collect();
    let mv = gain.mul_vec(&vf);
    let keep = (incumbent_w.to_vec(), incumbent_codes.to_vec(), false);
    let max_w = mv.iter().fold(0.0f64, |a, &m| a.max(m.abs()));
    if max_w == 0.0 {
        return Ok(keep);
    }
    let w_new = sgd_weighted_logistic(x, &mv, max_w, incumbent_w, config, rng);
    let codes_new: Vec<i8> = (0..n)
        .map(|i| sign_pm(w_new.iter().zip(x.point(i)).map(|(a, b)| a * b).sum()))
        .collect();
    let gain_new: f64 = codes_new.iter().zip(&mv).map(|(&c, &m)| c as f64 * m).sum();
    let gain_old: f64 = incumbent_codes
        .iter()
        .zip(&mv)
        .map(|(&c, &m)| c as f64 * m)
        .sum();
    if gain_new > gain_old {
        Ok((w_new, codes_new, true))
    } else {
        Ok(keep)
    }
}

fn sigmoid_neg(m: f64) -> f64 {
    // sigma(-m) = 1 / (1 + e^m), safe on both tails
    if m >= 0.0 {
        let e = (-m).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + m.exp())
    }
}

fn sgd_weighted_logistic(
    x: &Dataset,
    mv: &[f64],
    weight_scale: f64,
    w0: &[f64],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let n = x.n();
    let mut w = w0.to_vec();
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..config.sgd_epochs {
        order.shuffle(rng);
        for &i in &order {
            if mv[i] == 0.0 {
                continue;
            }
            let target = sign_pm(mv[i]) as f64;
            let alpha = mv[i].abs() / weight_scale;
            let xi = x.point(i);
            let margin: f64 = target * w.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>();
            let pull = config.sgd_rate * alpha * sigmoid_neg(margin) * target;
            for (wj, &xj) in w.iter_mut().zip(xi) {
                *wj += pull * xj;
            }
        }
    }
    w
}

/// Rank-one initialization for a fresh bit.
#[derive(Debug, Clone)]
pub enum RankOneInit {
    /// Sign-thresholded top singular pair of the gain matrix.
    Codes { query: Vec<i8>, db: Vec<i8> },
    /// Query weight row fitted to the projected left vector, free db codes.
    HashCodes { query_w: Vec<f64>, db: Vec<i8> },
    /// Both sides fitted to the doubly projected singular pair.
    HashHash { query_w: Vec<f64>, db_w: Vec<f64> },
}

/// Replaces each column of `m` by its least-squares projection onto the span
/// of linear functionals of the data (`{X^T w : w in R^d}` inside `R^n`).
pub fn project_columns_to_data_span(m: &Mat, x: &Dataset) -> Result<Mat> {
    let n = x.n();
    if m.rows() != n {
        return Err(Error::dims(
            "matrix height must equal the point count".to_string(),
        ));
    }
    let gram = data_gram(x);
    let mut out = Mat::zeros(n, m.cols());
    for j in 0..m.cols() {
        let col: Vec<f64> = (0..n).map(|i| m.get(i, j)).collect();
        let w = fit_row_to_target(x, &gram, &col)?;
        for i in 0..n {
            let proj: f64 = w.iter().zip(x.point(i)).map(|(a, b)| a * b).sum();
            out.set(i, j, proj);
        }
    }
    Ok(out)
}

fn data_gram(x: &Dataset) -> Mat {
    let d = x.d();
    let mut g = Mat::zeros(d, d);
    for i in 0..x.n() {
        let p = x.point(i);
        for a in 0..d {
            for b in 0..d {
                g.set(a, b, g.get(a, b) + p[a] * p[b]);
            }
        }
    }
    // tiny ridge keeps the solve well posed on rank-deficient data
    for a in 0..d {
        g.set(a, a, g.get(a, a) + 1e-10);
    }
    g
}

/// Least-squares weight row: `argmin_w sum_i (<w, x_i> - target_i)^2`.
fn fit_row_to_target(x: &Dataset, gram: &Mat, target: &[f64]) -> Result<Vec<f64>> {
    let d = x.d();
    let mut rhs = vec![0.0; d];
    for i in 0..x.n() {
        let p = x.point(i);
        for a in 0..d {
            rhs[a] += p[a] * target[i];
        }
    }
    solve_spd(gram, &rhs).ok_or_else(|| Error::invalid("data Gram matrix is singular".to_string()))
}

/// Thresholded rank-one projection of the gain matrix, with the columns
/// (and rows, for the two-map variant) first projected onto the data span.
/// Returns `None` when the gain matrix is numerically zero, in which case
/// callers fall back to a random init.
pub fn rank_one_init(
    m: &Mat,
    variant: Variant,
    x: Option<&Dataset>,
) -> Result<Option<RankOneInit>> {
    let (rows, cols) = (m.rows(), m.cols());
    if m.as_slice().iter().all(|&v| v.abs() < 1e-300) {
        return Ok(None);
    }
    match variant {
        Variant::Uv | Variant::Sym => {
            let pair = top_singular_pair(rows, cols, |z| m.mul_vec(z), |z| m.tr_mul_vec(z), 60);
            Ok(pair.map(|(a, _, b)| RankOneInit::Codes {
                query: a.into_iter().map(sign_pm).collect(),
                db: b.into_iter().map(sign_pm).collect(),
            }))
        }
        Variant::LinV => {
            let x = x.ok_or_else(|| Error::invalid("rank-one init for lin:v needs data"))?;
            let pm = project_columns_to_data_span(m, x)?;
            let Some((a, _, b)) =
                top_singular_pair(rows, cols, |z| pm.mul_vec(z), |z| pm.tr_mul_vec(z), 60)
            else {
                return Ok(None);
            };
            let gram = data_gram(x);
            let w = fit_row_to_target(x, &gram, &a)?;
            Ok(Some(RankOneInit::HashCodes {
                query_w: w,
                db: b.into_iter().map(sign_pm).collect(),
            }))
        }
        Variant::LinLin => {
            let x = x.ok_or_else(|| Error::invalid("rank-one init for lin:lin needs data"))?;
            let pm = project_columns_to_data_span(m, x)?;
            let pm = project_columns_to_data_span(&pm.transpose(), x)?.transpose();
            let Some((a, _, b)) =
                top_singular_pair(rows, cols, |z| pm.mul_vec(z), |z| pm.tr_mul_vec(z), 60)
            else {
                return Ok(None);
            };
            let gram = data_gram(x);
            let wq = fit_row_to_target(x, &gram, &a)?;
            let wd = fit_row_to_target(x, &gram, &b)?;
            Ok(Some(RankOneInit::HashHash {
                query_w: wq,
                db_w: wd,
            }))
        }
        Variant::Lsh => Err(Error::invalid("the baseline has no rank-one init")),
    }
}

// ---------------------------------------------------------------------------
// training engine
// ---------------------------------------------------------------------------

/// Surrogate values tabulated over the integer prediction range for one fixed
/// theta. Predictions `U^T V` only take values in `[-k, k]`, so loss and gain
/// computations reduce to table lookups.
struct MarginTables {
    bound: i32,
    pos: Vec<f64>,
    neg: Vec<f64>,
}

impl MarginTables {
    fn build(k: usize, theta: f64, surrogate: Surrogate) -> Self {
        let bound = k as i32 + 1;
        let size = (2 * bound + 1) as usize;
        let mut pos = vec![0.0; size];
        let mut neg = vec![0.0; size];
        for y in -bound..=bound {
            let idx = (y + bound) as usize;
            pos[idx] = ell(y as f64 - theta, surrogate);
            neg[idx] = ell(theta - y as f64, surrogate);
        }
        MarginTables { bound, pos, neg }
    }

    #[inline]
    fn lookup(&self, s: i8, y: i32) -> f64 {
        let idx = (y + self.bound) as usize;
        if s > 0 {
            self.pos[idx]
        } else {
            self.neg[idx]
        }
    }
}

/// Histogram of integer prediction values split by label sign; the basis of
/// loss evaluation and the threshold search.
struct ScoreCounts {
    values: Vec<i32>,
    pos: Vec<f64>,
    neg: Vec<f64>,
}

impl ScoreCounts {
    fn build(scores: &[i32], s: &SimilarityMatrix) -> Self {
        let n = s.n();
        debug_assert_eq!(scores.len(), n * n);
        let min = *scores.iter().min().expect("nonempty");
        let max = *scores.iter().max().expect("nonempty");
        let size = (max - min + 1) as usize;
        let mut pos = vec![0.0; size];
        let mut neg = vec![0.0; size];
        for i in 0..n {
            let sr = s.row(i);
            for j in 0..n {
                let idx = (scores[i * n + j] - min) as usize;
                if sr[j] > 0 {
                    pos[idx] += 1.0;
                } else {
                    neg[idx] += 1.0;
                }
            }
        }
        let mut values = Vec::new();
        let mut cpos = Vec::new();
        let mut cneg = Vec::new();
        for (idx, (&p, &q)) in pos.iter().zip(&neg).enumerate() {
            if p > 0.0 || q > 0.0 {
                values.push(min + idx as i32);
                cpos.push(p);
                cneg.push(q);
            }
        }
        ScoreCounts {
            values,
            pos: cpos,
            neg: cneg,
        }
    }

    fn loss_at(&self, params: LossParams, theta: f64) -> f64 {
        let beta = params.beta();
        let mut acc = 0.0;
        for (i, &y) in self.values.iter().enumerate() {
            let z = y as f64 - theta;
            acc += beta * self.pos[i] * ell(z, params.surrogate());
            acc += (1.0 - beta) * self.neg[i] * ell(-z, params.surrogate());
        }
        acc
    }

    fn optimal_theta(&self, params: LossParams, grid: usize, current: f64) -> f64 {
        let min = *self.values.first().expect("nonempty") as f64;
        let max = *self.values.last().expect("nonempty") as f64;
        let mut best_theta = current;
        let mut best_loss = self.loss_at(params, current);
        let consider = |theta: f64, best_theta: &mut f64, best_loss: &mut f64| {
            let l = self.loss_at(params, theta);
            if l < *best_loss {
                *best_loss = l;
                *best_theta = theta;
            }
        };
        for w in self.values.windows(2) {
            consider(
                (w[0] as f64 + w[1] as f64) / 2.0,
                &mut best_theta,
                &mut best_loss,
            );
        }
        consider(min - 1.0, &mut best_theta, &mut best_loss);
        consider(max + 1.0, &mut best_theta, &mut best_loss);
        let lo = min - 1.0;
        let hi = max + 1.0;
        for g in 0..grid {
            let theta = lo + (hi - lo) * g as f64 / (grid - 1) as f64;
            consider(theta, &mut best_theta, &mut best_loss);
        }
        // Midpoints are exact representatives only for the zero-one
        // surrogate. The smooth surrogate has interior optima that can even
        // sit outside the score range (the beta weighting trades one side's
        // margins for the other's), so run an expanding pattern search from
        // the best candidate: double the step while it moves, halve it while
        // it does not.
        if params.surrogate() == Surrogate::SqrtLogistic {
            let mut step = 1.0;
            for _ in 0..80 {
                let before = best_theta;
                consider(before - step, &mut best_theta, &mut best_loss);
                consider(before + step, &mut best_theta, &mut best_loss);
                if best_theta != before {
                    step = (step * 2.0).min(1e9);
                } else {
                    step /= 2.0;
                    if step < 1e-12 {
                        break;
                    }
                }
            }
        }
        best_theta
    }
}

/// Shared mutable state for code training: both sign matrices, the integer
/// prediction matrix `U^T V`, and the threshold.
struct PairState {
    u: SignMatrix,
    v: SignMatrix,
    scores: Vec<i32>,
    theta: f64,
    n: usize,
}

impl PairState {
    fn new(n: usize) -> Self {
        PairState {
            u: SignMatrix::filled(0, n, 1),
            v: SignMatrix::filled(0, n, 1),
            scores: vec![0; n * n],
            theta: 0.0,
            n,
        }
    }

    fn from_codes(u: SignMatrix, v: SignMatrix, theta: f64) -> Self {
        let n = u.n();
        let mut scores = vec![0i32; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0i32;
                for t in 0..u.k() {
                    acc += (u.get(t, i) * v.get(t, j)) as i32;
                }
                scores[i * n + j] = acc;
            }
        }
        PairState {
            u,
            v,
            scores,
            theta,
            n,
        }
    }

    fn k(&self) -> usize {
        self.u.k()
    }

    fn push_bit(&mut self, u_row: Vec<i8>, v_row: Vec<i8>) {
        let n = self.n;
        for i in 0..n {
            let ui = u_row[i] as i32;
            let row = &mut self.scores[i * n..(i + 1) * n];
            for (sc, &vj) in row.iter_mut().zip(&v_row) {
                *sc += ui * vj as i32;
            }
        }
        self.u.push_row(&u_row);
        self.v.push_row(&v_row);
    }

    fn pop_bit(&mut self) {
        let n = self.n;
        let t = self.k() - 1;
        let ur: Vec<i32> = self.u.row(t).iter().map(|&c| c as i32).collect();
        let vr: Vec<i32> = self.v.row(t).iter().map(|&c| c as i32).collect();
        for i in 0..n {
            let row = &mut self.scores[i * n..(i + 1) * n];
            for (sc, &vj) in row.iter_mut().zip(&vr) {
                *sc -= ur[i] * vj;
            }
        }
        self.u.pop_row();
        self.v.pop_row();
    }

    /// Replaces the just-initialized top bit with the neutral padding that
    /// reproduces the previous model's predictions exactly: all-ones rows on
    /// both sides plus `theta += 1`.
    fn make_top_bit_neutral(&mut self) {
        let n = self.n;
        self.pop_bit();
        self.push_bit(vec![1; n], vec![1; n]);
        self.theta += 1.0;
    }

    /// Residual scores with row `t`'s contribution removed, written into `buf`.
    fn residual_into(&self, t: usize, buf: &mut Vec<i32>) {
        let n = self.n;
        buf.clear();
        buf.resize(n * n, 0);
        let ur = self.u.row(t);
        let vr = self.v.row(t);
        for i in 0..n {
            let ui = ur[i] as i32;
            let src = &self.scores[i * n..(i + 1) * n];
            let dst = &mut buf[i * n..(i + 1) * n];
            for j in 0..n {
                dst[j] = src[j] - ui * vr[j] as i32;
            }
        }
    }

    /// Installs a new query-side row `t` given the residual in `buf`.
    fn set_row_u(&mut self, t: usize, new_row: &[i8], buf: &[i32]) {
        let n = self.n;
        let vr: Vec<i32> = self.v.row(t).iter().map(|&c| c as i32).collect();
        for i in 0..n {
            let ui = new_row[i] as i32;
            let dst = &mut self.scores[i * n..(i + 1) * n];
            let src = &buf[i * n..(i + 1) * n];
            for j in 0..n {
                dst[j] = src[j] + ui * vr[j];
            }
        }
        self.u.set_row(t, new_row);
    }

    fn set_row_v(&mut self, t: usize, new_row: &[i8], buf: &[i32]) {
        let n = self.n;
        let ur: Vec<i32> = self.u.row(t).iter().map(|&c| c as i32).collect();
        for i in 0..n {
            let dst = &mut self.scores[i * n..(i + 1) * n];
            let src = &buf[i * n..(i + 1) * n];
            for j in 0..n {
                dst[j] = src[j] + ur[i] * new_row[j] as i32;
            }
        }
        self.v.set_row(t, new_row);
    }

    /// Installs the same row on both sides (symmetric training).
    fn set_row_both(&mut self, t: usize, new_row: &[i8], buf: &[i32]) {
        let n = self.n;
        for i in 0..n {
            let ui = new_row[i] as i32;
            let dst = &mut self.scores[i * n..(i + 1) * n];
            let src = &buf[i * n..(i + 1) * n];
            for j in 0..n {
                dst[j] = src[j] + ui * new_row[j] as i32;
            }
        }
        self.u.set_row(t, new_row);
        self.v.set_row(t, new_row);
    }

    fn loss(&self, s: &SimilarityMatrix, params: LossParams) -> f64 {
        let tables = MarginTables::build(self.k().max(1), self.theta, params.surrogate());
        loss_from_scores(&self.scores, s, &tables, params)
    }
}

fn loss_from_scores(
    scores: &[i32],
    s: &SimilarityMatrix,
    tables: &MarginTables,
    params: LossParams,
) -> f64 {
    let n = s.n();
    let row_sums: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let sr = s.row(i);
            let sc = &scores[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += params.weight(sr[j]) * tables.lookup(sr[j], sc[j]);
            }
            acc
        })
        .collect();
    row_sums.iter().sum()
}

/// Materializes the gain matrix for residual scores (table-backed fast path;
/// agrees with [`crate::loss::gain_from_residual`] on the same residual).
fn gain_from_residual_scores(
    residual: &[i32],
    theta: f64,
    k: usize,
    s: &SimilarityMatrix,
    params: LossParams,
) -> Mat {
    let n = s.n();
    let tables = MarginTables::build(k, theta, params.surrogate());
    let beta = params.beta();
    let mut gain = Mat::zeros(n, n);
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let sr = s.row(i);
            let rc = &residual[i * n..(i + 1) * n];
            let mut out = vec![0.0; n];
            for j in 0..n {
                let w = if sr[j] > 0 { beta } else { 1.0 - beta };
                out[j] =
                    w / 2.0 * (tables.lookup(sr[j], rc[j] - 1) - tables.lookup(sr[j], rc[j] + 1));
            }
            out
        })
        .collect();
    for (i, row) in rows.into_iter().enumerate() {
        gain.row_mut(i).copy_from_slice(&row);
    }
    gain
}

fn random_sign_row(n: usize, rng: &mut ChaCha8Rng) -> Vec<i8> {
    (0..n)
        .map(|_| if rng.random::<bool>() { 1 } else { -1 })
        .collect()
}

fn random_weight_row(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let scale = 1.0 / (d as f64).sqrt();
    (0..d)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
        .collect()
}

fn gain_of(gain: &Mat, u_row: &[i8], v_row: &[i8]) -> f64 {
    let n = gain.rows();
    let mut total = 0.0;
    for i in 0..n {
        let gi = gain.row(i);
        let mut acc = 0.0;
        for j in 0..n {
            acc += gi[j] * v_row[j] as f64;
        }
        total += u_row[i] as f64 * acc;
    }
    total
}

/// A weight row whose signs are `+1` on every data point, if one is easy to
/// find; used to pad a bit neutrally (together with `theta += 1`).
fn all_positive_direction(x: &Dataset) -> Option<Vec<f64>> {
    let d = x.d();
    let mut mean = vec![0.0; d];
    for i in 0..x.n() {
        for (m, &p) in mean.iter_mut().zip(x.point(i)) {
            *m += p;
        }
    }
    [vec![1.0; d], mean].into_iter().find(|w| {
        (0..x.n()).all(|i| sign_pm(w.iter().zip(x.point(i)).map(|(a, b)| a * b).sum()) == 1)
    })
}

// ---------------------------------------------------------------------------
// unconstrained and symmetric trainers
// ---------------------------------------------------------------------------

/// Trains unconstrained code matrices on both sides.
pub fn train_unconstrained(s: &SimilarityMatrix, config: &TrainConfig) -> Result<TrainedModel> {
    train_uv_impl(s, config, None)
}

/// Same trainer, warm-started from an existing code pair.
pub fn train_unconstrained_from(
    s: &SimilarityMatrix,
    config: &TrainConfig,
    u0: &PackedCodeMatrix,
    v0: &PackedCodeMatrix,
    theta0: f64,
) -> Result<TrainedModel> {
    if u0.k() != v0.k() || u0.n() != s.n() || v0.n() != s.n() {
        return Err(Error::dims(
            "warm-start codes do not match the similarity".to_string(),
        ));
    }
    if u0.k() > config.k_max {
        return Err(Error::invalid(format!(
            "warm start has {} bits, k_max is {}",
            u0.k(),
            config.k_max
        )));
    }
    train_uv_impl(
        s,
        config,
        Some((u0.to_sign_matrix(), v0.to_sign_matrix(), theta0)),
    )
}

fn train_uv_impl(
    s: &SimilarityMatrix,
    config: &TrainConfig,
    warm: Option<(SignMatrix, SignMatrix, f64)>,
) -> Result<TrainedModel> {
    config.validate()?;
    let params = config.loss_params();
    let zero_params = config.zero_one_params();
    let n = s.n();
    let mut init_rng = crate::seed_stream(config.seed, "train/init");
    let (mut state, warm_k) = match warm {
        Some((u, v, theta)) => {
            let k = u.k();
            (PairState::from_codes(u, v, theta), k)
        }
        None => (PairState::new(n), 0),
    };

    let mut trace: Vec<TraceEntry> = Vec::new();
    let mut stages: Vec<ModelStage> = Vec::new();
    let mut prev_final = if warm_k > 0 {
        state.loss(s, params)
    } else {
        f64::INFINITY
    };

    for k in warm_k.max(1)..=config.k_max {
        if k != warm_k {
            let gain = gain_from_residual_scores(&state.scores, state.theta, k, s, params);
            let mut candidates: Vec<(Vec<i8>, Vec<i8>)> = Vec::new();
            if matches!(config.init, InitStrategy::Random | InitStrategy::BestOfBoth) {
                candidates.push((
                    random_sign_row(n, &mut init_rng),
                    random_sign_row(n, &mut init_rng),
                ));
            }
            if matches!(
                config.init,
                InitStrategy::RankOne | InitStrategy::BestOfBoth
            ) {
                match rank_one_init(&gain, Variant::Uv, None)? {
                    Some(RankOneInit::Codes { query, db }) => candidates.push((query, db)),
                    _ => candidates.push((
                        random_sign_row(n, &mut init_rng),
                        random_sign_row(n, &mut init_rng),
                    )),
                }
            }
            let (u_row, v_row, _) = candidates
                .into_iter()
                .map(|(u_row, v_row)| {
                    let g = gain_of(&gain, &u_row, &v_row);
                    (u_row, v_row, g)
                })
                .max_by(|a, b| a.2.total_cmp(&b.2))
                .expect("at least one candidate");
            state.push_bit(u_row, v_row);
            if state.loss(s, params) > prev_final {
                state.make_top_bit_neutral();
            }
        }
        trace.push(TraceEntry {
            k,
            sweep: 0,
            loss: state.loss(s, params),
        });

        let mut residual = Vec::new();
        for sweep in 1..=config.sweeps_per_bit {
            let mut changed = false;
            for t in 0..k {
                state.residual_into(t, &mut residual);
                let gain = gain_from_residual_scores(&residual, state.theta, k, s, params);
                let vf: Vec<f64> = state.v.row(t).iter().map(|&c| c as f64).collect();
                let new_row: Vec<i8> = gain.mul_vec(&vf).into_iter().map(sign_pm).collect();
                if new_row != state.u.row(t) {
                    changed = true;
                }
                state.set_row_u(t, &new_row, &residual);
            }
            for t in 0..k {
                state.residual_into(t, &mut residual);
                let gain = gain_from_residual_scores(&residual, state.theta, k, s, params);
                let uf: Vec<f64> = state.u.row(t).iter().map(|&c| c as f64).collect();
                let new_row: Vec<i8> = gain.tr_mul_vec(&uf).into_iter().map(sign_pm).collect();
                if new_row != state.v.row(t) {
                    changed = true;
                }
                state.set_row_v(t, &new_row, &residual);
            }
            let mut theta_moved = 0.0;
            if config.update_theta_each_sweep {
                let counts = ScoreCounts::build(&state.scores, s);
                let new_theta = counts.optimal_theta(params, config.theta_grid, state.theta);
                theta_moved = (new_theta - state.theta).abs();
                state.theta = new_theta;
            }
            trace.push(TraceEntry {
                k,
                sweep,
                loss: state.loss(s, params),
            });
            if !changed && theta_moved < 1e-12 {
                break;
            }
        }
        prev_final = state.loss(s, params);
        stages.push(ModelStage {
            k,
            theta: state.theta,
            surrogate_loss: prev_final,
            zero_one_loss: state.loss(s, zero_params),
            query: CodeSide::Codes(state.u.to_packed()),
            database: CodeSide::Codes(state.v.to_packed()),
        });
    }
    Ok(TrainedModel::from_stages(
        Variant::Uv,
        config.beta,
        trace,
        stages,
    ))
}

/// Trains a single shared code matrix (`V = U`).
///
/// The closed-form row update does not apply when both sides share the row,
/// so each row is improved by single-bit coordinate ascent on the quadratic
/// gain `u M u^T`, accepting flips only when they strictly help.
pub fn train_symmetric(s: &SimilarityMatrix, config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    let params = config.loss_params();
    let zero_params = config.zero_one_params();
    let n = s.n();
    let mut init_rng = crate::seed_stream(config.seed, "train/init");
    let mut state = PairState::new(n);

    let mut trace = Vec::new();
    let mut stages = Vec::new();
    let mut prev_final = f64::INFINITY;

    for k in 1..=config.k_max {
        let gain = gain_from_residual_scores(&state.scores, state.theta, k, s, params);
        let sym = symmetrize(&gain);
        let mut candidates: Vec<Vec<i8>> = Vec::new();
        if matches!(config.init, InitStrategy::Random | InitStrategy::BestOfBoth) {
            candidates.push(random_sign_row(n, &mut init_rng));
        }
        if matches!(
            config.init,
            InitStrategy::RankOne | InitStrategy::BestOfBoth
        ) {
            match rank_one_init(&sym, Variant::Sym, None)? {
                Some(RankOneInit::Codes { query, .. }) => candidates.push(query),
                _ => candidates.push(random_sign_row(n, &mut init_rng)),
            }
        }
        let (row, _) = candidates
            .into_iter()
            .map(|row| {
                let g = gain_of(&gain, &row, &row);
                (row, g)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one candidate");
        state.push_bit(row.clone(), row);
        if state.loss(s, params) > prev_final {
            state.make_top_bit_neutral();
        }
        trace.push(TraceEntry {
            k,
            sweep: 0,
            loss: state.loss(s, params),
        });

        let mut residual = Vec::new();
        for sweep in 1..=config.sweeps_per_bit {
            let mut changed = false;
            for t in 0..k {
                state.residual_into(t, &mut residual);
                let gain = gain_from_residual_scores(&residual, state.theta, k, s, params);
                let sym = symmetrize(&gain);
                if let Some(row) = coordinate_ascent_row(&sym, state.u.row(t)) {
                    changed = true;
                    state.set_row_both(t, &row, &residual);
                }
            }
            let mut theta_moved = 0.0;
            if config.update_theta_each_sweep {
                let counts = ScoreCounts::build(&state.scores, s);
                let new_theta = counts.optimal_theta(params, config.theta_grid, state.theta);
                theta_moved = (new_theta - state.theta).abs();
                state.theta = new_theta;
            }
            trace.push(TraceEntry {
                k,
                sweep,
                loss: state.loss(s, params),
            });
            if !changed && theta_moved < 1e-12 {
                break;
            }
        }
        prev_final = state.loss(s, params);
        stages.push(ModelStage {
            k,
            theta: state.theta,
            surrogate_loss: prev_final,
            zero_one_loss: state.loss(s, zero_params),
            query: CodeSide::Codes(state.u.to_packed()),
            database: CodeSide::Codes(state.u.to_packed()),
        });
    }
    Ok(TrainedModel::from_stages(
        Variant::Sym,
        config.beta,
        trace,
        stages,
    ))
}

fn symmetrize(m: &Mat) -> Mat {
    Mat::from_fn(m.rows(), m.cols(), |i, j| (m.get(i, j) + m.get(j, i)) / 2.0)
}

/// Single-bit coordinate ascent on `c M c^T` for symmetric `M`, from the
/// incumbent row. Returns the improved row, or `None` when no flip helps.
fn coordinate_ascent_row(sym: &Mat, incumbent: &[i8]) -> Option<Vec<i8>> {
    let n = incumbent.len();
    let mut c: Vec<f64> = incumbent.iter().map(|&x| x as f64).collect();
    let mut mc = sym.mul_vec(&c);
    let mut any_flip = false;
    for _pass in 0..50 {
        let mut flipped = false;
        for i in 0..n {
            // flipping c_i changes the quadratic form by -4 c_i (mc_i - M_ii c_i)
            let delta = -4.0 * c[i] * (mc[i] - sym.get(i, i) * c[i]);
            if delta > 1e-13 {
                c[i] = -c[i];
                let step = 2.0 * c[i];
                for (a, m) in mc.iter_mut().enumerate() {
                    *m += sym.get(a, i) * step;
                }
                flipped = true;
                any_flip = true;
            }
        }
        if !flipped {
            break;
        }
    }
    if any_flip {
        Some(c.into_iter().map(sign_pm).collect())
    } else {
        None
    }
}

/// Fraction of similarity pairs a code model classifies with a strictly
/// positive margin.
pub fn pair_accuracy(model: &TrainedModel, s: &SimilarityMatrix) -> Result<f64> {
    let (CodeSide::Codes(u), CodeSide::Codes(v)) = (&model.query, &model.database) else {
        return Err(Error::invalid(
            "pair accuracy needs stored codes on both sides",
        ));
    };
    let check = crate::datagen::verify_exact_realization(u, v, model.theta, s)?;
    let n = s.n();
    Ok(1.0 - check.violations as f64 / (n * n) as f64)
}

// ---------------------------------------------------------------------------
// linear-map trainers
// ---------------------------------------------------------------------------

/// Trains linear threshold maps on both sides.
pub fn train_lin_lin(
    x: &Dataset,
    s: &SimilarityMatrix,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    train_linear_impl(x, s, config, true)
}

/// Trains a linear threshold query map with free database codewords.
pub fn train_lin_v(
    x: &Dataset,
    s: &SimilarityMatrix,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    train_linear_impl(x, s, config, false)
}

enum DbInit {
    W(Vec<f64>),
    Codes(Vec<i8>),
}

fn train_linear_impl(
    x: &Dataset,
    s: &SimilarityMatrix,
    config: &TrainConfig,
    db_is_linear: bool,
) -> Result<TrainedModel> {
    config.validate()?;
    if x.n() != s.n() {
        return Err(Error::dims(format!(
            "dataset has {} points, similarity is {}x{1}",
            x.n(),
            s.n()
        )));
    }
    let params = config.loss_params();
    let zero_params = config.zero_one_params();
    let n = s.n();
    let d = x.d();
    let mut init_rng = crate::seed_stream(config.seed, "train/init");
    let mut sgd_rng = crate::seed_stream(config.seed, "train/sgd");
    let neutral = all_positive_direction(x);

    let mut state = PairState::new(n);
    let mut wq: Vec<Vec<f64>> = Vec::new();
    let mut wd: Vec<Vec<f64>> = Vec::new();

    let mut trace = Vec::new();
    let mut stages = Vec::new();
    let mut prev_final = f64::INFINITY;

    let signs_for = |w: &[f64]| -> Vec<i8> {
        (0..n)
            .map(|i| sign_pm(w.iter().zip(x.point(i)).map(|(a, b)| a * b).sum()))
            .collect()
    };
    let to_hash = |rows: &[Vec<f64>]| -> LinearHash {
        LinearHash::new(Mat::from_rows(rows.to_vec()).expect("rectangular")).expect("finite")
    };

    for k in 1..=config.k_max {
        let gain = gain_from_residual_scores(&state.scores, state.theta, k, s, params);
        let mut candidates: Vec<(Vec<f64>, DbInit)> = Vec::new();
        if matches!(config.init, InitStrategy::Random | InitStrategy::BestOfBoth) {
            let q = random_weight_row(d, &mut init_rng);
            let db = if db_is_linear {
                DbInit::W(random_weight_row(d, &mut init_rng))
            } else {
                DbInit::Codes(random_sign_row(n, &mut init_rng))
            };
            candidates.push((q, db));
        }
        if matches!(
            config.init,
            InitStrategy::RankOne | InitStrategy::BestOfBoth
        ) {
            let variant = if db_is_linear {
                Variant::LinLin
            } else {
                Variant::LinV
            };
            match rank_one_init(&gain, variant, Some(x))? {
                Some(RankOneInit::HashHash { query_w, db_w }) => {
                    candidates.push((query_w, DbInit::W(db_w)))
                }
                Some(RankOneInit::HashCodes { query_w, db }) => {
                    candidates.push((query_w, DbInit::Codes(db)))
                }
                _ => {
                    let q = random_weight_row(d, &mut init_rng);
                    let db = if db_is_linear {
                        DbInit::W(random_weight_row(d, &mut init_rng))
                    } else {
                        DbInit::Codes(random_sign_row(n, &mut init_rng))
                    };
                    candidates.push((q, db));
                }
            }
        }
        let (q_row, db_init, u_row, v_row, _) = candidates
            .into_iter()
            .map(|(q, db)| {
                let u_row = signs_for(&q);
                let v_row = match &db {
                    DbInit::W(w) => signs_for(w),
                    DbInit::Codes(c) => c.clone(),
                };
                let g = gain_of(&gain, &u_row, &v_row);
                (q, db, u_row, v_row, g)
            })
            .max_by(|a, b| a.4.total_cmp(&b.4))
            .expect("at least one candidate");
        state.push_bit(u_row, v_row);
        wq.push(q_row);
        if let DbInit::W(w) = db_init {
            wd.push(w);
        }
        if state.loss(s, params) > prev_final {
            if let Some(wn) = &neutral {
                state.make_top_bit_neutral();
                *wq.last_mut().expect("just pushed") = wn.clone();
                if db_is_linear {
                    *wd.last_mut().expect("just pushed") = wn.clone();
                }
            }
            // without an all-positive direction the candidate stays as-is
        }
        trace.push(TraceEntry {
            k,
            sweep: 0,
            loss: state.loss(s, params),
        });

        let mut residual = Vec::new();
        for sweep in 1..=config.sweeps_per_bit {
            let mut changed = false;
            // query-side weight rows
            for t in 0..k {
                state.residual_into(t, &mut residual);
                let gain = gain_from_residual_scores(&residual, state.theta, k, s, params);
                let (new_w, new_codes, accepted) = update_row_linear(
                    x,
                    &gain,
                    state.v.row(t),
                    &wq[t],
                    state.u.row(t),
                    config,
                    &mut sgd_rng,
                )?;
                if accepted {
                    changed = true;
                    wq[t] = new_w;
                    state.set_row_u(t, &new_codes, &residual);
                }
            }
            // database side: weight rows, or exact codeword rows
            for t in 0..k {
                state.residual_into(t, &mut residual);
                let gain = gain_from_residual_scores(&residual, state.theta, k, s, params);
                if db_is_linear {
                    let gain_t = gain.transpose();
                    let (new_w, new_codes, accepted) = update_row_linear(
                        x,
                        &gain_t,
                        state.u.row(t),
                        &wd[t],
                        state.v.row(t),
                        config,
                        &mut sgd_rng,
                    )?;
                    if accepted {
                        changed = true;
                        wd[t] = new_w;
                        state.set_row_v(t, &new_codes, &residual);
                    }
                } else {
                    let uf: Vec<f64> = state.u.row(t).iter().map(|&c| c as f64).collect();
                    let new_row: Vec<i8> = gain.tr_mul_vec(&uf).into_iter().map(sign_pm).collect();
                    if new_row != state.v.row(t) {
                        changed = true;
                    }
                    state.set_row_v(t, &new_row, &residual);
                }
            }
            let mut theta_moved = 0.0;
            if config.update_theta_each_sweep {
                let counts = ScoreCounts::build(&state.scores, s);
                let new_theta = counts.optimal_theta(params, config.theta_grid, state.theta);
                theta_moved = (new_theta - state.theta).abs();
                state.theta = new_theta;
            }
            trace.push(TraceEntry {
                k,
                sweep,
                loss: state.loss(s, params),
            });
            if !changed && theta_moved < 1e-12 {
                break;
            }
        }
        prev_final = state.loss(s, params);
        let database = if db_is_linear {
            CodeSide::Hash(to_hash(&wd))
        } else {
            CodeSide::Codes(state.v.to_packed())
        };
        stages.push(ModelStage {
            k,
            theta: state.theta,
            surrogate_loss: prev_final,
            zero_one_loss: state.loss(s, zero_params),
            query: CodeSide::Hash(to_hash(&wq)),
            database,
        });
    }
    let variant = if db_is_linear {
        Variant::LinLin
    } else {
        Variant::LinV
    };
    Ok(TrainedModel::from_stages(
        variant,
        config.beta,
        trace,
        stages,
    ))
}
