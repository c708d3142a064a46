//! Echo State Network: sparse random reservoir construction, leaky-integrator
//! state updates, ridge-regression readout training, and one-step-ahead or
//! free-running prediction.
//!
//! The state update is
//!
//! ```text
//! r(t+1) = (1 - alpha) * r(t) + alpha * tanh(W_in * x + W_res * r(t))
//! ```
//!
//! and the trained readout predicts `y_hat = [1; r(t+1)] . w_out` with the
//! bias entry first. Only the readout is trained, by solving the ridge
//! system (R^T R + lambda I) w = R^T y over teacher-forced states.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::SupervisedSet;

/// Reservoir hyperparameters. The defaults are the reference configuration
/// this crate reproduces: 20 units, leak rate 0.75, spectral radius 1.025,
/// input scaling 1.0, reservoir connectivity 0.15, input connectivity 0.2,
/// feedback connectivity 1.1 (accepted but clamped to 1.0 if ever used),
/// ridge coefficient 1e-8.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirConfig {
    pub units: usize,
    pub leak_rate: f64,
    pub spectral_radius: f64,
    pub input_scaling: f64,
    pub rc_connectivity: f64,
    pub input_connectivity: f64,
    pub fb_connectivity: f64,
    pub regularization_coef: f64,
    pub washout: usize,
    pub seed: u64,
    pub feedback_enabled: bool,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        ReservoirConfig {
            units: 20,
            leak_rate: 0.75,
            spectral_radius: 1.025,
            input_scaling: 1.0,
            rc_connectivity: 0.15,
            input_connectivity: 0.2,
            fb_connectivity: 1.1,
            regularization_coef: 1e-8,
            washout: 50,
            seed: 42,
            feedback_enabled: false,
        }
    }
}

impl ReservoirConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("reservoir.{msg}")))
            }
        };
        check(self.units > 0, "units must be positive")?;
        check(
            self.leak_rate > 0.0 && self.leak_rate <= 1.0,
            "leak_rate must be in (0, 1]",
        )?;
        check(self.spectral_radius > 0.0, "rho must be positive")?;
        check(self.input_scaling > 0.0, "input_scaling must be positive")?;
        check(
            self.rc_connectivity > 0.0 && self.rc_connectivity <= 1.0,
            "rc_connectivity must be in (0, 1]",
        )?;
        check(
            self.input_connectivity > 0.0 && self.input_connectivity <= 1.0,
            "input_connectivity must be in (0, 1]",
        )?;
        check(self.fb_connectivity >= 0.0, "fb_connectivity must be non-negative")?;
        check(
            self.regularization_coef >= 0.0,
            "regularization_coef must be non-negative",
        )?;
        Ok(())
    }
}

/// Square sparse matrix in compressed-row form. Enough linear algebra for a
/// reservoir: matvec, nonzero count and coordinate-list export.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Build from (row, col, value) triplets. Triplets are sorted internally;
    /// duplicate positions are rejected.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        for pair in triplets.windows(2) {
            if pair[0].0 == pair[1].0 && pair[0].1 == pair[1].1 {
                return Err(Error::Shape(format!(
                    "duplicate sparse entry at ({}, {})",
                    pair[0].0, pair[0].1
                )));
            }
        }
        let mut row_ptr = vec![0usize; n + 1];
        for &(r, c, _) in &triplets {
            if r >= n || c >= n {
                return Err(Error::Shape(format!("sparse index ({r}, {c}) out of bounds for {n}")));
            }
            row_ptr[r + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(SparseMatrix {
            n,
            row_ptr,
            col_idx: triplets.iter().map(|t| t.1).collect(),
            values: triplets.iter().map(|t| t.2).collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Export as (row, col, value) triplets in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.push((r, self.col_idx[k], self.values[k]));
            }
        }
        out
    }

    /// out = A x
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(out.len(), self.n);
        for r in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            out[r] = acc;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    /// Dominant eigenvalue magnitude by power iteration with a fixed
    /// deterministic start vector. Each step fits the two-term recurrence
    /// A^2 v = a Av + b v, whose companion roots cover both a real dominant
    /// eigenvalue and a complex conjugate pair; plain power iteration alone
    /// does not converge for the latter. The estimate is exactly
    /// scale-equivariant: estimating c*A yields c times the estimate of A up
    /// to rounding, which is what makes the post-construction spectral
    /// radius reproduce the configured value.
    pub fn estimate_spectral_radius(&self, max_iters: usize, tol: f64) -> f64 {
        let n = self.n;
        if n == 0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x9E37_79B9_7F4A_7C15);
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = l2(&v);
        if norm == 0.0 {
            v[0] = 1.0;
        } else {
            v.iter_mut().for_each(|x| *x /= norm);
        }

        let mut u = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut prev = f64::NAN;
        let mut est = 0.0;
        for _ in 0..max_iters {
            self.matvec(&v, &mut u);
            let u_norm = l2(&u);
            if u_norm == 0.0 {
                return 0.0;
            }
            self.matvec(&u, &mut w);

            // least-squares fit w = a u + b v from the 2x2 Gram system
            let guu = dot(&u, &u);
            let guv = dot(&u, &v);
            let gvv = dot(&v, &v);
            let gwu = dot(&w, &u);
            let gwv = dot(&w, &v);
            let det = guu * gvv - guv * guv;
            est = if det.abs() <= 1e-12 * guu * gvv {
                // u is already aligned with v: real dominant eigenvalue
                (gwu / guu).abs()
            } else {
                let a = (gwu * gvv - gwv * guv) / det;
                let b = (guu * gwv - guv * gwu) / det;
                let disc = a * a + 4.0 * b;
                if disc >= 0.0 {
                    let root = disc.sqrt();
                    (0.5 * (a + root)).abs().max((0.5 * (a - root)).abs())
                } else {
                    // complex pair: |lambda|^2 equals the companion determinant
                    (-b).sqrt()
                }
            };
            if (est - prev).abs() <= tol * est.max(f64::MIN_POSITIVE) {
                return est;
            }
            prev = est;
            for i in 0..n {
                v[i] = u[i] / u_norm;
            }
        }
        est
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Power-iteration budget used at construction and verification.
pub const SPECTRAL_RADIUS_ITERS: usize = 200;
pub const SPECTRAL_RADIUS_TOL: f64 = 1e-9;

/// Training summary for a fitted readout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub train_seconds: f64,
    pub ridge_residual_norm: f64,
    pub effective_samples: usize,
}

/// A (possibly trained) echo state network. Construction is a deterministic
/// function of the config seed.
#[derive(Debug, Clone)]
pub struct EsnModel {
    pub config: ReservoirConfig,
    pub(crate) w_in: Vec<f64>,
    pub(crate) w_res: SparseMatrix,
    pub(crate) w_fb: Option<Vec<f64>>,
    pub(crate) w_out: Option<DVector<f64>>,
    pub(crate) state: Vec<f64>,
}

/// Build the reservoir: `w_in` gets exactly round(input_connectivity * N)
/// nonzeros uniform in [-input_scaling, input_scaling]; `w_res` gets exactly
/// round(rc_connectivity * N^2) nonzeros uniform in [-1, 1] and is rescaled
/// so its power-iteration spectral radius equals the configured value.
pub fn build_reservoir(config: &ReservoirConfig) -> Result<EsnModel> {
    config.validate()?;
    let n = config.units;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let n_in = ((config.input_connectivity * n as f64).round() as usize).clamp(1, n);
    let mut w_in = vec![0.0; n];
    for idx in sample(&mut rng, n, n_in) {
        w_in[idx] = rng.random_range(-config.input_scaling..config.input_scaling);
    }

    let nnz = ((config.rc_connectivity * (n * n) as f64).round() as usize).clamp(1, n * n);
    let mut triplets = Vec::with_capacity(nnz);
    for flat in sample(&mut rng, n * n, nnz) {
        triplets.push((flat / n, flat % n, rng.random_range(-1.0..1.0)));
    }
    let mut w_res = SparseMatrix::from_triplets(n, triplets)?;
    let pre_radius = w_res.estimate_spectral_radius(SPECTRAL_RADIUS_ITERS, SPECTRAL_RADIUS_TOL);
    if pre_radius <= f64::MIN_POSITIVE {
        return Err(Error::DegenerateReservoir);
    }
    w_res.scale(config.spectral_radius / pre_radius);

    let w_fb = if config.feedback_enabled {
        let fb_connectivity = if config.fb_connectivity > 1.0 {
            eprintln!(
                "warning: fb_connectivity {} exceeds 1.0; clamping to 1.0 at construction",
                config.fb_connectivity
            );
            1.0
        } else {
            config.fb_connectivity
        };
        let n_fb = ((fb_connectivity * n as f64).round() as usize).clamp(1, n);
        let mut w = vec![0.0; n];
        for idx in sample(&mut rng, n, n_fb) {
            w[idx] = rng.random_range(-config.input_scaling..config.input_scaling);
        }
        Some(w)
    } else {
        None
    };

    Ok(EsnModel {
        config: config.clone(),
        w_in,
        w_res,
        w_fb,
        w_out: None,
        state: vec![0.0; n],
    })
}

impl EsnModel {
    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn w_in(&self) -> &[f64] {
        &self.w_in
    }

    pub fn w_res(&self) -> &SparseMatrix {
        &self.w_res
    }

    pub fn w_out(&self) -> Option<&[f64]> {
        self.w_out.as_ref().map(|w| w.as_slice())
    }

    pub fn is_fitted(&self) -> bool {
        self.w_out.is_some()
    }

    /// Zero the state, leaving weights untouched.
    pub fn reset_state(&mut self) {
        self.state.iter_mut().for_each(|v| *v = 0.0);
    }

    /// One leaky-integrator step. `y_prev` must be supplied iff feedback is
    /// enabled. Returns the new state, which also replaces the stored state.
    pub fn update_state(&mut self, x: f64, y_prev: Option<f64>) -> Result<&[f64]> {
        if !x.is_finite() {
            return Err(Error::NonFiniteInput(format!("reservoir input {x}")));
        }
        match (&self.w_fb, y_prev) {
            (Some(_), None) => {
                return Err(Error::Config(
                    "feedback_enabled model requires y_prev on every update".into(),
                ))
            }
            (None, Some(_)) => {
                return Err(Error::Config(
                    "y_prev supplied but feedback is not enabled".into(),
                ))
            }
            _ => {}
        }
        let n = self.config.units;
        let alpha = self.config.leak_rate;
        let mut pre = vec![0.0; n];
        self.w_res.matvec(&self.state, &mut pre);
        for i in 0..n {
            pre[i] += self.w_in[i] * x;
        }
        if let (Some(w_fb), Some(y)) = (&self.w_fb, y_prev) {
            if !y.is_finite() {
                return Err(Error::NonFiniteInput(format!("feedback value {y}")));
            }
            for i in 0..n {
                pre[i] += w_fb[i] * y;
            }
        }
        for i in 0..n {
            self.state[i] = (1.0 - alpha) * self.state[i] + alpha * pre[i].tanh();
        }
        Ok(&self.state)
    }

    /// Teacher-forced readout training. Runs every training pair through
    /// [`update_state`], discards the first `washout` states, stacks rows
    /// `[1; r(t+1)]` into the design matrix and solves the ridge system.
    /// The model state is left at the end of the training sequence so test
    /// prediction can continue seamlessly.
    pub fn fit_readout(&mut self, data: &SupervisedSet) -> Result<FitReport> {
        let start = Instant::now();
        let n = self.config.units;
        let washout = self.config.washout;
        if data.len() <= washout {
            return Err(Error::InsufficientData(format!(
                "{} training pairs with washout {washout}",
                data.len()
            )));
        }
        let effective = data.len() - washout;
        let lambda = self.config.regularization_coef;
        if lambda == 0.0 && effective < n + 1 {
            return Err(Error::Underdetermined { samples: effective, unknowns: n + 1 });
        }

        let mut design = DMatrix::zeros(effective, n + 1);
        let mut targets = DVector::zeros(effective);
        for (i, (&x, &y)) in data.inputs.iter().zip(&data.targets).enumerate() {
            let y_prev = if self.config.feedback_enabled {
                Some(if i == 0 { 0.0 } else { data.targets[i - 1] })
            } else {
                None
            };
            self.update_state(x, y_prev)?;
            if i >= washout {
                let row = i - washout;
                design[(row, 0)] = 1.0;
                for j in 0..n {
                    design[(row, j + 1)] = self.state[j];
                }
                targets[row] = y;
            }
        }

        let w = ridge_solve(&design, &targets, lambda)?;
        let residual = (&design * &w - &targets).norm();
        self.w_out = Some(w);
        Ok(FitReport {
            train_seconds: start.elapsed().as_secs_f64(),
            ridge_residual_norm: residual,
            effective_samples: effective,
        })
    }

    fn readout(&self) -> Result<&DVector<f64>> {
        self.w_out
            .as_ref()
            .ok_or_else(|| Error::NotFitted("esn readout has not been trained".into()))
    }

    fn emit(&self) -> f64 {
        let w = self.w_out.as_ref().expect("checked by caller");
        let mut y = w[0];
        for i in 0..self.config.units {
            y += w[i + 1] * self.state[i];
        }
        y
    }

    /// Teacher-forced prediction: update the state with each true input and
    /// emit one prediction per input. The state advances; callers reset or
    /// continue deliberately. With feedback enabled the previous prediction
    /// is fed back (seeded with the first input).
    pub fn predict_one_step(&mut self, inputs: &[f64]) -> Result<Vec<f64>> {
        self.readout()?;
        let mut out = Vec::with_capacity(inputs.len());
        let mut prev = inputs.first().copied();
        for &x in inputs {
            let y_prev = self.config.feedback_enabled.then_some(prev.unwrap_or(0.0));
            self.update_state(x, y_prev)?;
            let y = self.emit();
            prev = Some(y);
            out.push(y);
        }
        Ok(out)
    }

    /// Generative prediction: feed each output back as the next input for
    /// `horizon` steps starting from `x0`.
    pub fn predict_free_running(&mut self, x0: f64, horizon: usize) -> Result<Vec<f64>> {
        self.readout()?;
        let mut out = Vec::with_capacity(horizon);
        let mut x = x0;
        for step in 0..horizon {
            let y_prev = self.config.feedback_enabled.then_some(x);
            self.update_state(x, y_prev)?;
            let y = self.emit();
            if !y.is_finite() {
                return Err(Error::Divergence(format!(
                    "free-running prediction became non-finite at step {step}"
                )));
            }
            out.push(y);
            x = y;
        }
        Ok(out)
    }
}

/// Threshold above which the ridge system is solved by an orthogonal
/// decomposition of the stacked matrix [R; sqrt(lambda) I] instead of normal
/// equations: the normal-equations route squares the condition number, which
/// is fine at the default 21-column system but not for large reservoirs.
pub const NORMAL_EQUATIONS_MAX_UNKNOWNS: usize = 500;

/// Solve (R^T R + lambda I) w = R^T y. Uses a symmetric positive-definite
/// factorization of the normal equations up to
/// [`NORMAL_EQUATIONS_MAX_UNKNOWNS`] unknowns, and falls back to an SVD of
/// the stacked ridge system when the factorization breaks down or the system
/// is larger.
pub fn ridge_solve(design: &DMatrix<f64>, targets: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if design.nrows() != targets.len() {
        return Err(Error::Shape(format!(
            "design has {} rows but targets {}",
            design.nrows(),
            targets.len()
        )));
    }
    if lambda < 0.0 {
        return Err(Error::Config("regularization_coef must be non-negative".into()));
    }
    let p = design.ncols();
    if p <= NORMAL_EQUATIONS_MAX_UNKNOWNS {
        let mut gram = design.transpose() * design;
        for i in 0..p {
            gram[(i, i)] += lambda;
        }
        let rhs = design.transpose() * targets;
        if let Some(chol) = gram.cholesky() {
            return Ok(chol.solve(&rhs));
        }
    }
    stacked_ridge_svd(design, targets, lambda)
}

fn stacked_ridge_svd(design: &DMatrix<f64>, targets: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let (rows, p) = (design.nrows(), design.ncols());
    let sqrt_lambda = lambda.sqrt();
    let mut stacked = DMatrix::zeros(rows + p, p);
    stacked.view_mut((0, 0), (rows, p)).copy_from(design);
    for i in 0..p {
        stacked[(rows + i, i)] = sqrt_lambda;
    }
    let mut rhs = DVector::zeros(rows + p);
    rhs.rows_mut(0, rows).copy_from(targets);
    let svd = stacked.svd(true, true);
    svd.solve(&rhs, 0.0)
        .map_err(|e| Error::Shape(format!("ridge svd solve failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny_config(units: usize, seed: u64) -> ReservoirConfig {
        ReservoirConfig { units, seed, washout: 0, ..ReservoirConfig::default() }
    }

    #[test]
    fn build_is_deterministic_in_seed() {
        let config = ReservoirConfig { seed: 7, ..ReservoirConfig::default() };
        let a = build_reservoir(&config).unwrap();
        let b = build_reservoir(&config).unwrap();
        assert_eq!(a.w_in, b.w_in);
        assert_eq!(a.w_res, b.w_res);
    }

    #[test]
    fn reservoir_nonzero_counts_match_connectivity() {
        let model = build_reservoir(&ReservoirConfig::default()).unwrap();
        // round(0.15 * 400) and round(0.2 * 20)
        assert_eq!(model.w_res.nnz(), 60);
        assert_eq!(model.w_in.iter().filter(|v| **v != 0.0).count(), 4);
    }

    #[test]
    fn spectral_radius_is_rescaled_to_config() {
        for seed in [1, 2, 3] {
            let model =
                build_reservoir(&ReservoirConfig { seed, ..ReservoirConfig::default() }).unwrap();
            let estimate = model
                .w_res
                .estimate_spectral_radius(SPECTRAL_RADIUS_ITERS, SPECTRAL_RADIUS_TOL);
            assert_relative_eq!(estimate, 1.025, max_relative = 1e-6);
        }
    }

    #[test]
    fn spectral_radius_estimator_matches_dense_eigenvalues() {
        // oracle: full complex eigenvalue decomposition of the densified matrix
        for seed in [3u64, 11, 29] {
            let model = build_reservoir(&ReservoirConfig {
                units: 30,
                seed,
                ..ReservoirConfig::default()
            })
            .unwrap();
            let n = model.w_res.size();
            let mut dense = DMatrix::zeros(n, n);
            for (r, c, v) in model.w_res.triplets() {
                dense[(r, c)] = v;
            }
            let oracle = dense
                .complex_eigenvalues()
                .iter()
                .map(|c| c.norm())
                .fold(0.0f64, f64::max);
            let estimate = model
                .w_res
                .estimate_spectral_radius(SPECTRAL_RADIUS_ITERS, SPECTRAL_RADIUS_TOL);
            assert_relative_eq!(estimate, oracle, max_relative = 1e-6);
        }
    }

    #[test]
    fn update_with_zero_weights_keeps_leak_term() {
        let mut model = build_reservoir(&tiny_config(2, 1)).unwrap();
        model.w_in = vec![0.0, 0.0];
        model.w_res = SparseMatrix::from_triplets(2, vec![]).unwrap();
        model.state = vec![0.4, -0.2];
        model.update_state(123.0, None).unwrap();
        assert_relative_eq!(model.state[0], 0.1, epsilon = 1e-15);
        assert_relative_eq!(model.state[1], -0.05, epsilon = 1e-15);
    }

    #[test]
    fn update_with_full_leak_is_pure_tanh() {
        let mut model = build_reservoir(&tiny_config(2, 1)).unwrap();
        model.config.leak_rate = 1.0;
        model.w_in = vec![0.5, -0.25];
        model.w_res = SparseMatrix::from_triplets(2, vec![]).unwrap();
        model.reset_state();
        model.update_state(0.8, None).unwrap();
        assert_relative_eq!(model.state[0], (0.4f64).tanh(), epsilon = 1e-15);
        assert_relative_eq!(model.state[1], (-0.2f64).tanh(), epsilon = 1e-15);
    }

    #[test]
    fn scalar_reservoir_update_matches_hand_value() {
        // r' = 0.25 * 0.1 + 0.75 * tanh(2 * 0.3 + 0.5 * 0.1)
        //    = 0.025 + 0.75 * tanh(0.65)
        let mut model = build_reservoir(&tiny_config(1, 1)).unwrap();
        model.w_in = vec![2.0];
        model.w_res = SparseMatrix::from_triplets(1, vec![(0, 0, 0.5)]).unwrap();
        model.state = vec![0.1];
        model.update_state(0.3, None).unwrap();
        assert_relative_eq!(model.state[0], 0.453752474563838, epsilon = 1e-15);
    }

    #[test]
    fn update_rejects_non_finite_input() {
        let mut model = build_reservoir(&tiny_config(2, 1)).unwrap();
        assert!(matches!(
            model.update_state(f64::NAN, None),
            Err(Error::NonFiniteInput(_))
        ));
    }

    #[test]
    fn ridge_solve_matches_hand_two_by_two() {
        // R = [[1, 0.2], [1, 0.4], [1, 0.9]], y = [0.3, 0.5, 1.0]
        // R^T R = [[3, 1.5], [1.5, 1.01]], R^T y = [1.8, 1.16]
        // hand solution of (R^T R + 1e-8 I) w = R^T y
        let design = DMatrix::from_row_slice(3, 2, &[1.0, 0.2, 1.0, 0.4, 1.0, 0.9]);
        let targets = DVector::from_column_slice(&[0.3, 0.5, 1.0]);
        let lambda = 1e-8;
        let w = ridge_solve(&design, &targets, lambda).unwrap();

        let a = 3.0 + lambda;
        let b = 1.5;
        let c = 1.5;
        let d = 1.01 + lambda;
        let det = a * d - b * c;
        let hand_w0 = (d * 1.8 - b * 1.16) / det;
        let hand_w1 = (a * 1.16 - c * 1.8) / det;
        assert_relative_eq!(w[0], hand_w0, max_relative = 1e-10);
        assert_relative_eq!(w[1], hand_w1, max_relative = 1e-10);
    }

    #[test]
    fn ridge_with_zero_lambda_is_least_squares() {
        // residual of the OLS solution is orthogonal to the column space
        let design = DMatrix::from_row_slice(
            5,
            2,
            &[1.0, 0.1, 1.0, 0.5, 1.0, -0.3, 1.0, 0.8, 1.0, 0.2],
        );
        let targets = DVector::from_column_slice(&[0.2, 0.9, -0.4, 1.3, 0.5]);
        let w = ridge_solve(&design, &targets, 0.0).unwrap();
        let residual = &targets - &design * &w;
        let projected = design.transpose() * residual;
        assert!(projected.norm() < 1e-8 * targets.norm());
    }

    #[test]
    fn underdetermined_with_zero_lambda_errors() {
        let mut model = build_reservoir(&tiny_config(5, 1)).unwrap();
        model.config.regularization_coef = 0.0;
        let data = SupervisedSet {
            inputs: vec![0.1, 0.2, 0.3],
            targets: vec![0.2, 0.3, 0.4],
            lag: 1,
        };
        assert!(matches!(
            model.fit_readout(&data),
            Err(Error::Underdetermined { .. })
        ));
    }

    #[test]
    fn exact_linear_targets_are_recovered_and_reproduced() {
        // make targets exactly linear in the stacked states, then fit with
        // lambda = 0 and check both the recovered weights and predictions
        let mut collector = build_reservoir(&tiny_config(4, 9)).unwrap();
        let inputs: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin() * 0.5 + 0.5).collect();
        let w_star = [0.3, -0.8, 0.45, 1.1, -0.2];
        let mut targets = Vec::new();
        for &x in &inputs {
            collector.update_state(x, None).unwrap();
            let mut y = w_star[0];
            for j in 0..4 {
                y += w_star[j + 1] * collector.state[j];
            }
            targets.push(y);
        }

        let mut model = build_reservoir(&tiny_config(4, 9)).unwrap();
        model.config.regularization_coef = 0.0;
        let data = SupervisedSet { inputs: inputs.clone(), targets: targets.clone(), lag: 1 };
        model.fit_readout(&data).unwrap();
        let w = model.w_out.as_ref().unwrap();
        for (got, want) in w.iter().zip(&w_star) {
            assert_relative_eq!(got, want, max_relative = 1e-8);
        }

        model.reset_state();
        let predictions = model.predict_one_step(&inputs).unwrap();
        for (p, t) in predictions.iter().zip(&targets) {
            assert_relative_eq!(p, t, epsilon = 1e-6);
        }
    }

    #[test]
    fn bias_only_readout_predicts_constant() {
        let mut model = build_reservoir(&tiny_config(3, 5)).unwrap();
        let mut w = DVector::zeros(4);
        w[0] = 2.5;
        model.w_out = Some(w);
        let out = model.predict_one_step(&[0.1, 0.9, 0.4]).unwrap();
        assert_eq!(out, vec![2.5, 2.5, 2.5]);
        let free = model.predict_free_running(0.3, 5).unwrap();
        assert_eq!(free, vec![2.5; 5]);
    }

    #[test]
    fn free_running_horizon_one_equals_one_step() {
        let mut model = build_reservoir(&tiny_config(6, 3)).unwrap();
        let data = SupervisedSet {
            inputs: (0..30).map(|i| 0.5 + 0.4 * (i as f64 / 5.0).sin()).collect(),
            targets: (1..31).map(|i| 0.5 + 0.4 * (i as f64 / 5.0).sin()).collect(),
            lag: 1,
        };
        model.fit_readout(&data).unwrap();
        let mut clone = model.clone();
        let a = model.predict_one_step(&[0.35]).unwrap();
        let b = clone.predict_free_running(0.35, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn predict_before_fit_is_not_fitted() {
        let mut model = build_reservoir(&tiny_config(3, 5)).unwrap();
        assert!(matches!(
            model.predict_one_step(&[0.5]),
            Err(Error::NotFitted(_))
        ));
    }

    #[test]
    fn reset_zeroes_state_and_is_idempotent() {
        let mut model = build_reservoir(&tiny_config(3, 5)).unwrap();
        model.update_state(0.7, None).unwrap();
        assert!(model.state.iter().any(|v| *v != 0.0));
        model.reset_state();
        let zeroed = model.state.clone();
        model.reset_state();
        assert_eq!(model.state, zeroed);
        assert!(model.state.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ridge_norm_is_monotone_in_lambda() {
        let design = DMatrix::from_fn(30, 5, |i, j| ((i * 7 + j * 3) as f64 * 0.61).sin());
        let targets = DVector::from_fn(30, |i, _| ((i as f64) * 0.23).cos());
        let mut prev_norm = f64::INFINITY;
        for lambda in [0.0, 1e-6, 1e-3, 1e-1, 10.0] {
            let w = ridge_solve(&design, &targets, lambda).unwrap();
            let norm = w.norm();
            assert!(norm <= prev_norm + 1e-12, "norm grew: {norm} > {prev_norm}");
            prev_norm = norm;
        }
    }

    #[test]
    fn ridge_gradient_is_zero_at_solution() {
        let design = DMatrix::from_fn(25, 6, |i, j| ((i * 5 + j) as f64 * 0.77).sin());
        let targets = DVector::from_fn(25, |i, _| ((i as f64) * 0.41).sin());
        let lambda = 1e-4;
        let w = ridge_solve(&design, &targets, lambda).unwrap();
        let gradient = design.transpose() * (&design * &w - &targets) + lambda * &w;
        let scale = (design.transpose() * &targets).norm();
        assert!(gradient.norm() <= 1e-6 * scale);
    }

    #[test]
    fn leak_limit_bounds_state_change() {
        let alpha = 1e-9;
        let mut model = build_reservoir(&ReservoirConfig {
            units: 10,
            leak_rate: alpha,
            seed: 2,
            washout: 0,
            ..ReservoirConfig::default()
        })
        .unwrap();
        for &x in &[0.3, 0.9, 0.1, 0.7] {
            let before = model.state.clone();
            model.update_state(x, None).unwrap();
            let change: f64 = model
                .state
                .iter()
                .zip(&before)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let bound = alpha * (l2(&before) + (10f64).sqrt());
            assert!(change <= bound, "{change} > {bound}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn state_stays_in_open_unit_ball(
                seed in 0u64..1000,
                inputs in proptest::collection::vec(-1e3..1e3f64, 1..80),
            ) {
                let mut model = build_reservoir(&ReservoirConfig {
                    units: 12,
                    seed,
                    ..ReservoirConfig::default()
                }).unwrap();
                for &x in &inputs {
                    model.update_state(x, None).unwrap();
                    prop_assert!(model.state().iter().all(|v| v.abs() < 1.0));
                }
            }
        }
    }
}
