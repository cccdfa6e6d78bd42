//! Linear state-space simulation, exact gradients through time, AdamW, and
//! the stability-constrained training loop.
//!
//! The model is `x[k+1] = A x[k] + B u[k]`, `y[k] = C x[k] + D u[k]`, with
//! sequences stored one time step per row.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::benchgen::{DatasetSplit, Sequence};
use crate::error::{Error, Result};
use crate::matrix::{jacobi_svd, qr_factor, spectral_norm, Matrix};
use crate::metrics::{msvr, nmse};
use crate::ortho::nearest_orthogonal_svd;
use crate::schur::{BLOCK_1X1, BLOCK_2X2, BLOCK_TAIL};
use crate::stable::{project_quasi_triangular, project_state_matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceModel {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
}

impl StateSpaceModel {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, d: Matrix) -> Result<Self> {
        let m = StateSpaceModel { a, b, c, d };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let nx = self.a.ensure_square("state matrix")?;
        let (bx, nu) = self.b.shape();
        let (ny, cx) = self.c.shape();
        if bx != nx || cx != nx || self.d.shape() != (ny, nu) {
            return Err(Error::dim(format!(
                "inconsistent model shapes: a {:?}, b {:?}, c {:?}, d {:?}",
                self.a.shape(),
                self.b.shape(),
                self.c.shape(),
                self.d.shape()
            )));
        }
        Ok(())
    }

    pub fn n_x(&self) -> usize {
        self.a.rows()
    }

    pub fn n_u(&self) -> usize {
        self.b.cols()
    }

    pub fn n_y(&self) -> usize {
        self.c.rows()
    }
}

/// Runs the model over `u` from `x0`. Returns the outputs and the states
/// `x[0..T]` that produced them.
pub fn simulate(m: &StateSpaceModel, u: &Matrix, x0: &[f64]) -> Result<(Matrix, Matrix)> {
    if u.cols() != m.n_u() || x0.len() != m.n_x() {
        return Err(Error::dim(format!(
            "simulate: model has n_u = {}, n_x = {}, got {} input channels and {} initial states",
            m.n_u(),
            m.n_x(),
            u.cols(),
            x0.len()
        )));
    }
    let steps = u.rows();
    let mut y = Matrix::zeros(steps, m.n_y());
    let mut xs = Matrix::zeros(steps, m.n_x());
    let mut x = x0.to_vec();
    for k in 0..steps {
        let uk = u.row(k);
        xs.row_mut(k).copy_from_slice(&x);
        let cx = m.c.mul_vec(&x);
        let du = m.d.mul_vec(uk);
        for (o, (p, q)) in y.row_mut(k).iter_mut().zip(cx.iter().zip(&du)) {
            *o = p + q;
        }
        let ax = m.a.mul_vec(&x);
        let bu = m.b.mul_vec(uk);
        for (xi, (p, q)) in x.iter_mut().zip(ax.iter().zip(&bu)) {
            *xi = p + q;
        }
    }
    Ok((y, xs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
}

impl Grads {
    fn zeros_like(m: &StateSpaceModel) -> Self {
        Grads {
            a: Matrix::zeros(m.n_x(), m.n_x()),
            b: Matrix::zeros(m.n_x(), m.n_u()),
            c: Matrix::zeros(m.n_y(), m.n_x()),
            d: Matrix::zeros(m.n_y(), m.n_u()),
        }
    }
}

/// Mean squared output error over every sample of every sequence, each
/// simulated from `x = 0`, together with its exact gradient.
pub fn loss_and_grads_batch(m: &StateSpaceModel, data: &[Sequence]) -> Result<(f64, Grads)> {
    let total: usize = data.iter().map(|s| s.u.rows()).sum();
    if total == 0 {
        return Err(Error::dim("loss over an empty dataset"));
    }
    let mut loss = 0.0;
    let mut g = Grads::zeros_like(m);
    let x0 = vec![0.0; m.n_x()];
    for s in data {
        accumulate(m, &s.u, &s.y, &x0, total as f64, &mut loss, &mut g)?;
    }
    Ok((loss, g))
}

/// Single-sequence form of [`loss_and_grads_batch`] with an explicit initial state.
pub fn loss_and_grads(m: &StateSpaceModel, u: &Matrix, y: &Matrix, x0: &[f64]) -> Result<(f64, Grads)> {
    let mut loss = 0.0;
    let mut g = Grads::zeros_like(m);
    if u.rows() == 0 {
        return Err(Error::dim("loss over an empty sequence"));
    }
    accumulate(m, u, y, x0, u.rows() as f64, &mut loss, &mut g)?;
    Ok((loss, g))
}

fn accumulate(
    m: &StateSpaceModel,
    u: &Matrix,
    y: &Matrix,
    x0: &[f64],
    total: f64,
    loss: &mut f64,
    g: &mut Grads,
) -> Result<()> {
    if y.shape() != (u.rows(), m.n_y()) {
        return Err(Error::dim(format!(
            "outputs are {:?}, expected ({}, {})",
            y.shape(),
            u.rows(),
            m.n_y()
        )));
    }
    let (y_hat, xs) = simulate(m, u, x0)?;
    let steps = u.rows();
    let mut err = Matrix::zeros(steps, m.n_y());
    for k in 0..steps {
        for j in 0..m.n_y() {
            let e = y_hat[(k, j)] - y[(k, j)];
            *loss += e * e / total;
            err[(k, j)] = 2.0 * e / total;
        }
    }
    // adjoint: λ[k] = Aᵀλ[k+1] + Cᵀe[k]; λ[k+1] feeds the A and B gradients at step k
    let mut lam = vec![0.0; m.n_x()];
    for k in (0..steps).rev() {
        if k + 1 < steps {
            g.a.add_outer(1.0, &lam, xs.row(k));
            g.b.add_outer(1.0, &lam, u.row(k));
        }
        let e = err.row(k);
        g.c.add_outer(1.0, e, xs.row(k));
        g.d.add_outer(1.0, e, u.row(k));
        let at = m.a.tr_mul_vec(&lam);
        let ct = m.c.tr_mul_vec(e);
        for (l, (p, q)) in lam.iter_mut().zip(at.iter().zip(&ct)) {
            *l = p + q;
        }
    }
    Ok(())
}

/// Spectral-norm hinge `r = max(σ² − 1 + ε, 0)²` and its gradient.
pub fn reg_term_and_grad(a: &Matrix, eps_reg: f64) -> Result<(f64, Matrix)> {
    a.ensure_square("regularized matrix")?;
    let mut sn = spectral_norm(a, 1e-13, 20_000);
    if !sn.converged {
        let s = jacobi_svd(a)?;
        sn.value = s.sigma[0];
        sn.left_vec = s.u.column(0);
        sn.right_vec = s.v.column(0);
    }
    let sigma = sn.value;
    let h = (sigma * sigma - 1.0 + eps_reg).max(0.0);
    let mut grad = Matrix::zeros(a.rows(), a.cols());
    if h > 0.0 {
        grad.add_outer(4.0 * h * sigma, &sn.left_vec, &sn.right_vec);
    }
    Ok((h * h, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
}

impl OptimizerState {
    pub fn new(lr: f64, weight_decay: f64, shapes: &[(usize, usize)]) -> Self {
        OptimizerState {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
            weight_decay,
            m: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
        }
    }
}

/// One AdamW update with decoupled weight decay, in place.
pub fn adamw_step(state: &mut OptimizerState, params: &mut [&mut Matrix], grads: &[&Matrix]) -> Result<()> {
    if params.len() != state.m.len() || grads.len() != state.m.len() {
        return Err(Error::dim("optimizer state, parameters and gradients differ in count"));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for (idx, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[idx].shape() {
            return Err(Error::dim(format!("parameter {idx} shape mismatch")));
        }
        let m = state.m[idx].as_mut_slice();
        let v = state.v[idx].as_mut_slice();
        for (((pi, &gi), mi), vi) in p
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *pi -= state.lr * state.weight_decay * *pi;
            *mi = state.beta1 * *mi + (1.0 - state.beta1) * gi;
            *vi = state.beta2 * *vi + (1.0 - state.beta2) * gi * gi;
            let mh = *mi / bc1;
            let vh = *vi / bc2;
            *pi -= state.lr * mh / (vh.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SchurProj,
    SchurBuilt,
    Regularized,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::SchurProj, Method::SchurBuilt, Method::Regularized];

    pub fn is_projected(self) -> bool {
        !matches!(self, Method::Regularized)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::SchurProj => "schur-proj",
            Method::SchurBuilt => "schur-built",
            Method::Regularized => "regularized",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "schur-proj" => Ok(Method::SchurProj),
            "schur-built" => Ok(Method::SchurBuilt),
            "regularized" => Ok(Method::Regularized),
            other => Err(Error::Domain(format!("unknown training method {other:?}"))),
        }
    }
}

/// Free parameters of the pre-factorized parameterization `A = Z T Zᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuiltParams {
    pub z_raw: Matrix,
    pub t_raw: Matrix,
}

/// Fixed block layout: 2×2 blocks with a trailing 1×1 iff `n` is odd.
pub fn built_pattern(n: usize) -> Vec<u8> {
    let mut b = Vec::with_capacity(n);
    while b.len() + 1 < n {
        b.push(BLOCK_2X2);
        b.push(BLOCK_TAIL);
    }
    if b.len() < n {
        b.push(BLOCK_1X1);
    }
    b
}

fn below_blocks_mask(n: usize) -> Vec<(usize, usize)> {
    let b = built_pattern(n);
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..i {
            if !(i == j + 1 && b[j] == BLOCK_2X2) {
                out.push((i, j));
            }
        }
    }
    out
}

impl BuiltParams {
    pub fn realize(&self) -> Matrix {
        self.z_raw.matmul(&self.t_raw).matmul_tr(&self.z_raw)
    }

    /// Gradients with respect to `z_raw` and `t_raw` given the gradient `g_a`
    /// with respect to `A = Z T Zᵀ`. Entries of `t_raw` below the block
    /// diagonal are held at zero and get zero gradient.
    pub fn pullback(&self, g_a: &Matrix) -> (Matrix, Matrix) {
        let z = &self.z_raw;
        let t = &self.t_raw;
        let gz = &g_a.matmul(z).matmul_tr(t) + &g_a.tr_matmul(z).matmul(t);
        let mut gt = z.tr_matmul(g_a).matmul(z);
        for (i, j) in below_blocks_mask(t.rows()) {
            gt[(i, j)] = 0.0;
        }
        (gz, gt)
    }

    /// Orthogonalizes `z_raw`, clears `t_raw` below the block diagonal and
    /// projects its diagonal blocks onto the stable set.
    pub fn constrain(&self) -> Result<BuiltParams> {
        let n = self.t_raw.ensure_square("t_raw")?;
        let z = nearest_orthogonal_svd(&self.z_raw)?.z_hat;
        let mut t = self.t_raw.clone();
        for (i, j) in below_blocks_mask(n) {
            t[(i, j)] = 0.0;
        }
        let t = project_quasi_triangular(&t, &built_pattern(n))?;
        Ok(BuiltParams { z_raw: z, t_raw: t })
    }
}

pub fn apply_constraint_schur_built(p: &BuiltParams) -> Result<BuiltParams> {
    p.constrain()
}

pub fn apply_constraint_schur_proj(m: &StateSpaceModel) -> Result<StateSpaceModel> {
    let (a, _) = project_state_matrix(&m.a)?;
    Ok(StateSpaceModel { a, ..m.clone() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: Method,
    pub epochs: usize,
    /// `None` disables early stopping.
    pub patience: Option<usize>,
    pub lr: f64,
    pub rho_r: f64,
    pub eps_reg: f64,
    pub weight_decay: f64,
    /// Relative improvement in validation loss that resets the patience counter.
    pub min_delta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::SchurProj,
            epochs: 2000,
            patience: None,
            lr: 1e-3,
            rho_r: 1e-2,
            eps_reg: 1e-3,
            weight_decay: 4e-3,
            min_delta: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub msvr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub method: Method,
    pub best_model: StateSpaceModel,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub history: Vec<HistoryRow>,
    pub epochs_run: usize,
    pub stop_reason: StopReason,
}

/// Stable random initialization: `A = Q·blockdiag(ρ R(θ))·Qᵀ` with radii in
/// `[0.3, 0.9)`, plus Gaussian `B`, `C`, `D` scaled by `1/√n_x`. Returns the
/// orthogonal and block factors so the pre-factorized method can start from
/// the same matrix.
pub fn initial_model(n_x: usize, n_u: usize, n_y: usize, seed: u64) -> Result<(StateSpaceModel, BuiltParams)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Matrix::from_fn(n_x, n_x, |_, _| StandardNormal.sample(&mut rng));
    let (q, _) = qr_factor(&g)?;
    let mut t = Matrix::zeros(n_x, n_x);
    let pattern = built_pattern(n_x);
    let mut k = 0;
    while k < n_x {
        let r: f64 = rng.gen_range(0.3..0.9);
        if pattern[k] == BLOCK_2X2 {
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            let (s, c) = theta.sin_cos();
            t.set_block(k, k, &Matrix::from_rows(&[[r * c, -r * s], [r * s, r * c]]));
            k += 2;
        } else {
            t[(k, k)] = if rng.gen::<bool>() { r } else { -r };
            k += 1;
        }
    }
    let scale = 1.0 / (n_x as f64).sqrt();
    let mut gauss = |r: usize, c: usize| Matrix::from_fn(r, c, |_, _| scale * Distribution::<f64>::sample(&StandardNormal, &mut rng));
    let b = gauss(n_x, n_u);
    let c = gauss(n_y, n_x);
    let d = gauss(n_y, n_u);
    let built = BuiltParams { z_raw: q, t_raw: t };
    let model = StateSpaceModel::new(built.realize(), b, c, d)?;
    Ok((model, built))
}

/// Starts from a given model. The pre-factorized parameters come from its
/// real Schur form; for the built method its 2×2 blocks must sit on the fixed layout.
pub fn initial_from_model(m: &StateSpaceModel, method: Method) -> Result<(StateSpaceModel, BuiltParams)> {
    m.validate()?;
    let n = m.n_x();
    let form = crate::schur::schur_decompose(&m.a)?;
    let layout = built_pattern(n);
    for blk in form.blocks()? {
        if method == Method::SchurBuilt && blk.size == 2 && layout[blk.start] != BLOCK_2X2 {
            return Err(Error::Structure(format!(
                "2x2 Schur block at row {} does not fit the fixed layout",
                blk.start
            )));
        }
    }
    let built = BuiltParams {
        z_raw: form.z,
        t_raw: form.t,
    };
    Ok((m.clone(), built))
}

/// Mean squared error of `m` over every sample of every sequence.
pub fn dataset_loss(m: &StateSpaceModel, data: &[Sequence]) -> Result<f64> {
    let total: usize = data.iter().map(|s| s.u.rows()).sum();
    let x0 = vec![0.0; m.n_x()];
    let mut loss = 0.0;
    for s in data {
        let (y_hat, _) = simulate(m, &s.u, &x0)?;
        loss += y_hat.dist_sq(&s.y);
    }
    Ok(loss / total as f64)
}

/// NMSE over a partition, pooling all sequences row-wise.
pub fn dataset_nmse(m: &StateSpaceModel, data: &[Sequence]) -> Result<f64> {
    let x0 = vec![0.0; m.n_x()];
    let rows: usize = data.iter().map(|s| s.y.rows()).sum();
    let mut y = Matrix::zeros(rows, m.n_y());
    let mut y_hat = Matrix::zeros(rows, m.n_y());
    let mut r0 = 0;
    for s in data {
        let (p, _) = simulate(m, &s.u, &x0)?;
        y.set_block(r0, 0, &s.y);
        y_hat.set_block(r0, 0, &p);
        r0 += s.y.rows();
    }
    nmse(&y, &y_hat)
}

/// Trains from `init` on the training partition, checkpointing on validation.
pub fn train(data: &DatasetSplit, cfg: &TrainConfig, init: &(StateSpaceModel, BuiltParams)) -> Result<TrainRun> {
    let (train, validation) = (&data.train, &data.validation);
    if train.is_empty() || validation.is_empty() {
        return Err(Error::Precondition("train and validation partitions must be nonempty".into()));
    }
    let (mut model, mut built) = init.clone();
    model.validate()?;
    let n = model.n_x();

    let shapes: Vec<(usize, usize)> = match cfg.method {
        Method::SchurBuilt => vec![(n, n), (n, n), model.b.shape(), model.c.shape(), model.d.shape()],
        _ => vec![(n, n), model.b.shape(), model.c.shape(), model.d.shape()],
    };
    let mut opt = OptimizerState::new(cfg.lr, cfg.weight_decay, &shapes);

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best_model = model.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut reference = f64::INFINITY;
    let mut waited = 0usize;
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=cfg.epochs {
        let (data_loss, mut g) = loss_and_grads_batch(&model, train)?;
        let mut objective = data_loss;
        if cfg.method == Method::Regularized && cfg.rho_r > 0.0 {
            let (r, dr) = reg_term_and_grad(&model.a, cfg.eps_reg)?;
            objective += cfg.rho_r * r;
            g.a.axpy(cfg.rho_r, &dr);
        }
        if !objective.is_finite() || !g.a.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                method: cfg.method.to_string(),
                msvr: msvr(&model.a).unwrap_or(f64::NAN),
            });
        }

        match cfg.method {
            Method::SchurBuilt => {
                let (gz, gt) = built.pullback(&g.a);
                adamw_step(
                    &mut opt,
                    &mut [&mut built.z_raw, &mut built.t_raw, &mut model.b, &mut model.c, &mut model.d],
                    &[&gz, &gt, &g.b, &g.c, &g.d],
                )?;
                built = built.constrain()?;
                model.a = built.realize();
            }
            Method::SchurProj => {
                adamw_step(
                    &mut opt,
                    &mut [&mut model.a, &mut model.b, &mut model.c, &mut model.d],
                    &[&g.a, &g.b, &g.c, &g.d],
                )?;
                model.a = project_state_matrix(&model.a)?.0;
            }
            Method::Regularized => {
                adamw_step(
                    &mut opt,
                    &mut [&mut model.a, &mut model.b, &mut model.c, &mut model.d],
                    &[&g.a, &g.b, &g.c, &g.d],
                )?;
            }
        }

        let val_loss = dataset_loss(&model, validation)?;
        let m = msvr(&model.a)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                method: cfg.method.to_string(),
                msvr: m,
            });
        }
        history.push(HistoryRow {
            epoch,
            train_loss: data_loss,
            val_loss,
            msvr: m,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best_model = model.clone();
            best_epoch = epoch;
        }
        if val_loss < reference * (1.0 - cfg.min_delta) {
            reference = val_loss;
            waited = 0;
        } else {
            waited += 1;
            if cfg.patience.is_some_and(|p| waited >= p) {
                stop_reason = StopReason::EarlyStop;
                break;
            }
        }
    }

    Ok(TrainRun {
        method: cfg.method,
        best_model,
        best_val_loss: best_val,
        best_epoch,
        epochs_run: history.len(),
        history,
        stop_reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{gaussian_matrix, rng};

    fn random_model(seed: u64, nx: usize, nu: usize, ny: usize) -> StateSpaceModel {
        let mut r = rng(seed);
        let a = gaussian_matrix(&mut r, nx, nx).scale(0.3);
        StateSpaceModel::new(
            a,
            gaussian_matrix(&mut r, nx, nu),
            gaussian_matrix(&mut r, ny, nx),
            gaussian_matrix(&mut r, ny, nu),
        )
        .unwrap()
    }

    #[test]
    fn pure_delay_and_feedthrough() {
        let u = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        let delay = StateSpaceModel::new(
            Matrix::zeros(2, 2),
            Matrix::identity(2),
            Matrix::identity(2),
            Matrix::zeros(2, 2),
        )
        .unwrap();
        let (y, _) = simulate(&delay, &u, &[0.0, 0.0]).unwrap();
        assert_eq!(y.row(0), &[0.0, 0.0]);
        assert_eq!(y.row(1), u.row(0));
        assert_eq!(y.row(2), u.row(1));

        let through = StateSpaceModel::new(
            Matrix::zeros(2, 2),
            Matrix::zeros(2, 2),
            Matrix::zeros(2, 2),
            Matrix::identity(2),
        )
        .unwrap();
        let (y, _) = simulate(&through, &u, &[0.0, 0.0]).unwrap();
        assert_eq!(y, u);
    }

    #[test]
    fn dimension_errors() {
        let m = random_model(1, 3, 2, 1);
        assert!(simulate(&m, &Matrix::zeros(4, 3), &[0.0; 3]).is_err());
        assert!(simulate(&m, &Matrix::zeros(4, 2), &[0.0; 2]).is_err());
        assert!(StateSpaceModel::new(Matrix::zeros(2, 2), Matrix::zeros(3, 1), Matrix::zeros(1, 2), Matrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn perfect_model_has_zero_loss_and_gradient() {
        let m = random_model(2, 3, 2, 2);
        let mut r = rng(3);
        let u = gaussian_matrix(&mut r, 20, 2);
        let (y, _) = simulate(&m, &u, &[0.0; 3]).unwrap();
        let (loss, g) = loss_and_grads(&m, &u, &y, &[0.0; 3]).unwrap();
        assert_eq!(loss, 0.0);
        for x in [&g.a, &g.b, &g.c, &g.d] {
            assert_eq!(x.max_abs(), 0.0);
        }
    }

    #[test]
    fn single_step_feedthrough_gradient() {
        let m = StateSpaceModel::new(
            Matrix::zeros(1, 1),
            Matrix::zeros(1, 2),
            Matrix::zeros(2, 1),
            Matrix::from_rows(&[[1.0, 2.0], [0.5, -1.0]]),
        )
        .unwrap();
        let u = Matrix::from_rows(&[[0.3, -0.7]]);
        let y = Matrix::from_rows(&[[1.0, 2.0]]);
        let (_, g) = loss_and_grads(&m, &u, &y, &[0.0]).unwrap();
        let y_hat = m.d.mul_vec(u.row(0));
        let mut expect = Matrix::zeros(2, 2);
        let e: Vec<f64> = (0..2).map(|j| 2.0 * (y_hat[j] - y[(0, j)])).collect();
        expect.add_outer(1.0, &e, u.row(0));
        assert_eq!(g.d, expect);
    }

    pub(crate) fn fd_check(seed: u64) {
        let m = random_model(seed, 4, 2, 3);
        let mut r = rng(seed + 100);
        let u = gaussian_matrix(&mut r, 25, 2);
        let y = gaussian_matrix(&mut r, 25, 3);
        let x0: Vec<f64> = (0..4).map(|i| 0.1 * i as f64).collect();
        let (_, g) = loss_and_grads(&m, &u, &y, &x0).unwrap();
        let h = 1e-6;
        for which in 0..4 {
            let grad = [&g.a, &g.b, &g.c, &g.d][which];
            for idx in 0..grad.as_slice().len() {
                let bump = |delta: f64| {
                    let mut p = m.clone();
                    let target = [&mut p.a, &mut p.b, &mut p.c, &mut p.d];
                    let t = target.into_iter().nth(which).unwrap();
                    t.as_mut_slice()[idx] += delta;
                    loss_and_grads(&p, &u, &y, &x0).unwrap().0
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                let an = grad.as_slice()[idx];
                assert!(
                    (fd - an).abs() <= 1e-5 * an.abs().max(fd.abs()) + 1e-7,
                    "param {which}[{idx}]: analytic {an}, finite difference {fd}"
                );
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..3 {
            fd_check(seed);
        }
    }

    #[test]
    fn regularizer_examples() {
        let (r, g) = reg_term_and_grad(&Matrix::identity(3).scale(0.5), 1e-3).unwrap();
        assert_eq!(r, 0.0);
        assert_eq!(g.max_abs(), 0.0);
        let (r, _) = reg_term_and_grad(&Matrix::from_diag(&[2.0, 0.0]), 0.0).unwrap();
        assert!((r - 9.0).abs() < 1e-12);
    }

    #[test]
    fn regularizer_gradient_matches_finite_differences() {
        let mut r = rng(61);
        let a = gaussian_matrix(&mut r, 5, 5);
        let (_, g) = reg_term_and_grad(&a, 1e-3).unwrap();
        let h = 1e-6;
        for idx in 0..25 {
            let mut p = a.clone();
            p.as_mut_slice()[idx] += h;
            let up = reg_term_and_grad(&p, 1e-3).unwrap().0;
            p.as_mut_slice()[idx] -= 2.0 * h;
            let down = reg_term_and_grad(&p, 1e-3).unwrap().0;
            let fd = (up - down) / (2.0 * h);
            let an = g.as_slice()[idx];
            assert!((fd - an).abs() <= 1e-4 * an.abs().max(fd.abs()) + 1e-7, "{idx}: {an} vs {fd}");
        }
    }

    #[test]
    fn adamw_scalar_reference() {
        let mut p = Matrix::from_rows(&[[1.0]]);
        let mut st = OptimizerState::new(1e-3, 0.0, &[(1, 1)]);
        adamw_step(&mut st, &mut [&mut p], &[&Matrix::from_rows(&[[0.0]])]).unwrap();
        assert_eq!(p[(0, 0)], 1.0);
        assert_eq!(st.step, 1);

        let g = 0.5;
        let mut p = Matrix::from_rows(&[[1.0]]);
        let mut st = OptimizerState::new(1e-3, 0.0, &[(1, 1)]);
        adamw_step(&mut st, &mut [&mut p], &[&Matrix::from_rows(&[[g]])]).unwrap();
        // m̂ = g, v̂ = g², step = lr·g/(|g| + ε)
        let expect = 1.0 - 1e-3 * g / (g.abs() + 1e-7);
        assert!((p[(0, 0)] - expect).abs() < 1e-15);
        adamw_step(&mut st, &mut [&mut p], &[&Matrix::from_rows(&[[g]])]).unwrap();
        let v2 = (1.0 - 0.999) * g * g * (1.0 + 0.999);
        assert!((st.v[0][(0, 0)] - v2).abs() < 1e-18);

        let mut p = Matrix::from_rows(&[[2.0]]);
        let mut st = OptimizerState::new(0.1, 0.5, &[(1, 1)]);
        adamw_step(&mut st, &mut [&mut p], &[&Matrix::from_rows(&[[0.0]])]).unwrap();
        assert!((p[(0, 0)] - 2.0 * (1.0 - 0.05)).abs() < 1e-15);
    }

    #[test]
    fn projection_constraint_examples() {
        let m = random_model(4, 3, 1, 1);
        let mut stable = m.clone();
        stable.a = Matrix::identity(3).scale(0.5);
        assert_eq!(apply_constraint_schur_proj(&stable).unwrap(), stable);

        let mut big = m.clone();
        big.a = Matrix::identity(3).scale(1.5);
        let out = apply_constraint_schur_proj(&big).unwrap();
        assert!(out.a.dist(&Matrix::identity(3)) < 1e-12);
        assert_eq!(out.b, m.b);

        let mut r = rng(5);
        let mut wild = m.clone();
        wild.a = gaussian_matrix(&mut r, 3, 3).scale(2.0);
        let out = apply_constraint_schur_proj(&wild).unwrap();
        assert!(msvr(&out.a).unwrap() <= 1e-10);
    }

    #[test]
    fn built_constraint_examples() {
        assert_eq!(built_pattern(5), vec![2, 0, 2, 0, 1]);
        assert_eq!(built_pattern(4), vec![2, 0, 2, 0]);

        let (_, p) = initial_model(5, 1, 1, 7).unwrap();
        let c = p.constrain().unwrap();
        assert!(c.z_raw.dist(&p.z_raw) < 1e-12);
        assert!(c.t_raw.dist(&p.t_raw) < 1e-15);

        let mut tail = p.clone();
        tail.t_raw[(4, 4)] = 3.0;
        assert_eq!(tail.constrain().unwrap().t_raw[(4, 4)], 1.0);

        let mut r = rng(8);
        let wild = BuiltParams {
            z_raw: gaussian_matrix(&mut r, 5, 5),
            t_raw: gaussian_matrix(&mut r, 5, 5).scale(3.0),
        };
        let c = wild.constrain().unwrap();
        assert!(c.z_raw.orthogonality_defect() < 1e-9);
        assert!(msvr(&c.realize()).unwrap() <= 1e-10);
        for (i, j) in below_blocks_mask(5) {
            assert_eq!(c.t_raw[(i, j)], 0.0);
        }
    }
}
