//! Single-layer LSTM with a linear output head, trained from scratch by
//! truncated backpropagation through time on mean squared error.
//!
//! The cell follows the usual gate equations, computed in this order per
//! step (x is a scalar, h and c are hidden-sized vectors):
//!
//! ```text
//! i = sigmoid(w_xi x + W_hi h + b_i)        input gate
//! f = sigmoid(w_xf x + W_hf h + b_f)        forget gate
//! c' = f . c + i . tanh(w_xc x + W_hc h + b_c)
//! o = sigmoid(w_xo x + W_ho h + b_o)        output gate
//! h' = o . tanh(c')
//! y = w_y . h' + b_y
//! ```
//!
//! There are 14 parameter tensors: three per gate plus the candidate block
//! and the two output-head parameters. Gradients for all of them come from
//! one analytic BPTT pass and are checked against central finite differences
//! in the test suite.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::SupervisedSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    PlainGradient,
    AdaptiveMoments,
}

/// Adam constants for the adaptive-moments optimizer.
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub hidden_units: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub bptt_window: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for LstmConfig {
    fn default() -> Self {
        LstmConfig {
            hidden_units: 32,
            epochs: 100,
            learning_rate: 1e-3,
            bptt_window: 30,
            seed: 42,
            optimizer: OptimizerKind::AdaptiveMoments,
        }
    }
}

impl LstmConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("lstm.{msg}")))
            }
        };
        check(self.hidden_units > 0, "hidden_units must be positive")?;
        check(self.epochs > 0, "epochs must be positive")?;
        check(self.learning_rate >= 0.0, "learning_rate must be non-negative")?;
        check(self.bptt_window > 0, "bptt_window must be positive")?;
        Ok(())
    }
}

/// All trainable parameters. `w_x*` are input-to-gate column vectors,
/// `w_h*` are hidden-to-gate matrices, `b_*` are gate biases; `w_y`/`b_y`
/// form the linear output head.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub config: LstmConfig,
    pub w_xi: DVector<f64>,
    pub w_hi: DMatrix<f64>,
    pub b_i: DVector<f64>,
    pub w_xf: DVector<f64>,
    pub w_hf: DMatrix<f64>,
    pub b_f: DVector<f64>,
    pub w_xc: DVector<f64>,
    pub w_hc: DMatrix<f64>,
    pub b_c: DVector<f64>,
    pub w_xo: DVector<f64>,
    pub w_ho: DMatrix<f64>,
    pub b_o: DVector<f64>,
    pub w_y: DVector<f64>,
    pub b_y: f64,
    pub(crate) h: DVector<f64>,
    pub(crate) c: DVector<f64>,
    pub(crate) trained: bool,
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub struct StepCache {
    x: f64,
    h_prev: DVector<f64>,
    c_prev: DVector<f64>,
    i: DVector<f64>,
    f: DVector<f64>,
    g: DVector<f64>,
    o: DVector<f64>,
    c: DVector<f64>,
    tanh_c: DVector<f64>,
    pub y: f64,
}

/// Gradients of the window loss with respect to every parameter tensor,
/// in the same shapes as the model.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmGradients {
    pub w_xi: DVector<f64>,
    pub w_hi: DMatrix<f64>,
    pub b_i: DVector<f64>,
    pub w_xf: DVector<f64>,
    pub w_hf: DMatrix<f64>,
    pub b_f: DVector<f64>,
    pub w_xc: DVector<f64>,
    pub w_hc: DMatrix<f64>,
    pub b_c: DVector<f64>,
    pub w_xo: DVector<f64>,
    pub w_ho: DMatrix<f64>,
    pub b_o: DVector<f64>,
    pub w_y: DVector<f64>,
    pub b_y: f64,
}

impl LstmGradients {
    fn zeros(hidden: usize) -> Self {
        LstmGradients {
            w_xi: DVector::zeros(hidden),
            w_hi: DMatrix::zeros(hidden, hidden),
            b_i: DVector::zeros(hidden),
            w_xf: DVector::zeros(hidden),
            w_hf: DMatrix::zeros(hidden, hidden),
            b_f: DVector::zeros(hidden),
            w_xc: DVector::zeros(hidden),
            w_hc: DMatrix::zeros(hidden, hidden),
            b_c: DVector::zeros(hidden),
            w_xo: DVector::zeros(hidden),
            w_ho: DMatrix::zeros(hidden, hidden),
            b_o: DVector::zeros(hidden),
            w_y: DVector::zeros(hidden),
            b_y: 0.0,
        }
    }

    pub fn add(&mut self, other: &LstmGradients) {
        self.w_xi += &other.w_xi;
        self.w_hi += &other.w_hi;
        self.b_i += &other.b_i;
        self.w_xf += &other.w_xf;
        self.w_hf += &other.w_hf;
        self.b_f += &other.b_f;
        self.w_xc += &other.w_xc;
        self.w_hc += &other.w_hc;
        self.b_c += &other.b_c;
        self.w_xo += &other.w_xo;
        self.w_ho += &other.w_ho;
        self.b_o += &other.b_o;
        self.w_y += &other.w_y;
        self.b_y += other.b_y;
    }
}

/// Training summary with the per-epoch loss trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LstmFitReport {
    pub train_seconds: f64,
    pub final_loss: f64,
    pub epochs: usize,
    #[serde(skip)]
    pub epoch_losses: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmModel {
    /// Initialize weights uniform in [-1/sqrt(hidden), 1/sqrt(hidden)] from
    /// the config seed. The draw order is fixed (gate blocks i, f, c, o,
    /// each as w_x, w_h, b, then the output head) so a seed pins the model.
    pub fn init(config: &LstmConfig) -> Result<Self> {
        config.validate()?;
        let n = config.hidden_units;
        let bound = 1.0 / (n as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut vec = |rng: &mut ChaCha8Rng| {
            DVector::from_fn(n, |_, _| rng.random_range(-bound..bound))
        };
        let mut mat = |rng: &mut ChaCha8Rng| {
            DMatrix::from_fn(n, n, |_, _| rng.random_range(-bound..bound))
        };
        let (w_xi, w_hi, b_i) = (vec(&mut rng), mat(&mut rng), vec(&mut rng));
        let (w_xf, w_hf, b_f) = (vec(&mut rng), mat(&mut rng), vec(&mut rng));
        let (w_xc, w_hc, b_c) = (vec(&mut rng), mat(&mut rng), vec(&mut rng));
        let (w_xo, w_ho, b_o) = (vec(&mut rng), mat(&mut rng), vec(&mut rng));
        let w_y = vec(&mut rng);
        let b_y = rng.random_range(-bound..bound);
        Ok(LstmModel {
            config: config.clone(),
            w_xi,
            w_hi,
            b_i,
            w_xf,
            w_hf,
            b_f,
            w_xc,
            w_hc,
            b_c,
            w_xo,
            w_ho,
            b_o,
            w_y,
            b_y,
            h: DVector::zeros(n),
            c: DVector::zeros(n),
            trained: false,
        })
    }

    pub fn hidden_units(&self) -> usize {
        self.config.hidden_units
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn reset_state(&mut self) {
        self.h.fill(0.0);
        self.c.fill(0.0);
    }

    /// One forward step: computes the gates, updates the stored (h, c) and
    /// returns the output together with the cache for backprop.
    pub fn lstm_step(&mut self, x: f64) -> Result<(f64, StepCache)> {
        if !x.is_finite() {
            return Err(Error::NonFiniteInput(format!("lstm input {x}")));
        }
        let h_prev = self.h.clone();
        let c_prev = self.c.clone();

        let i = (&self.w_xi * x + &self.w_hi * &h_prev + &self.b_i).map(sigmoid);
        let f = (&self.w_xf * x + &self.w_hf * &h_prev + &self.b_f).map(sigmoid);
        let g = (&self.w_xc * x + &self.w_hc * &h_prev + &self.b_c).map(f64::tanh);
        let c = f.component_mul(&c_prev) + i.component_mul(&g);
        let o = (&self.w_xo * x + &self.w_ho * &h_prev + &self.b_o).map(sigmoid);
        let tanh_c = c.map(f64::tanh);
        let h = o.component_mul(&tanh_c);
        let y = self.w_y.dot(&h) + self.b_y;

        self.h = h;
        self.c = c.clone();
        Ok((y, StepCache { x, h_prev, c_prev, i, f, g, o, c, tanh_c, y }))
    }

    /// Analytic BPTT gradients of the total MSE over one window, starting
    /// from the model's current stored state. The stored state afterwards is
    /// the state at the end of the window.
    pub fn lstm_gradients(&mut self, window: &[(f64, f64)]) -> Result<(f64, LstmGradients)> {
        if window.is_empty() {
            return Err(Error::InsufficientData("empty bptt window".into()));
        }
        let n = self.config.hidden_units;
        let t_len = window.len();

        let mut caches = Vec::with_capacity(t_len);
        let mut loss = 0.0;
        for &(x, target) in window {
            let (y, cache) = self.lstm_step(x)?;
            loss += (y - target) * (y - target);
            caches.push(cache);
        }
        loss /= t_len as f64;

        let mut grads = LstmGradients::zeros(n);
        let mut dh_next = DVector::zeros(n);
        let mut dc_next = DVector::zeros(n);
        for (t, &(_, target)) in window.iter().enumerate().rev() {
            let cache = &caches[t];
            let dy = 2.0 * (cache.y - target) / t_len as f64;

            grads.w_y.axpy(dy, &self.h_at(&caches, t), 1.0);
            grads.b_y += dy;

            let mut dh = &self.w_y * dy + &dh_next;
            let one = DVector::from_element(n, 1.0);

            // output gate
            let do_gate = dh.component_mul(&cache.tanh_c);
            let dz_o = do_gate
                .component_mul(&cache.o)
                .component_mul(&(&one - &cache.o));

            // cell state
            let dtanh = &one - cache.tanh_c.component_mul(&cache.tanh_c);
            let mut dc = dh.component_mul(&cache.o).component_mul(&dtanh);
            dc += &dc_next;

            // forget, input, candidate
            let df = dc.component_mul(&cache.c_prev);
            let dz_f = df.component_mul(&cache.f).component_mul(&(&one - &cache.f));
            let di = dc.component_mul(&cache.g);
            let dz_i = di.component_mul(&cache.i).component_mul(&(&one - &cache.i));
            let dg = dc.component_mul(&cache.i);
            let dz_c = dg.component_mul(&(&one - cache.g.component_mul(&cache.g)));

            grads.w_xi.axpy(cache.x, &dz_i, 1.0);
            grads.w_xf.axpy(cache.x, &dz_f, 1.0);
            grads.w_xc.axpy(cache.x, &dz_c, 1.0);
            grads.w_xo.axpy(cache.x, &dz_o, 1.0);
            grads.w_hi.ger(1.0, &dz_i, &cache.h_prev, 1.0);
            grads.w_hf.ger(1.0, &dz_f, &cache.h_prev, 1.0);
            grads.w_hc.ger(1.0, &dz_c, &cache.h_prev, 1.0);
            grads.w_ho.ger(1.0, &dz_o, &cache.h_prev, 1.0);
            grads.b_i += &dz_i;
            grads.b_f += &dz_f;
            grads.b_c += &dz_c;
            grads.b_o += &dz_o;

            dh = self.w_hi.transpose() * &dz_i
                + self.w_hf.transpose() * &dz_f
                + self.w_hc.transpose() * &dz_c
                + self.w_ho.transpose() * &dz_o;
            dh_next = dh;
            dc_next = dc.component_mul(&cache.f);
        }

        Ok((loss, grads))
    }

    fn h_at(&self, caches: &[StepCache], t: usize) -> DVector<f64> {
        // h after step t equals o . tanh(c) of that step's cache
        caches[t].o.component_mul(&caches[t].tanh_c)
    }

    /// Teacher-forced one-step-ahead outputs over `inputs`; state is reset
    /// to zero before the pass.
    pub fn lstm_predict(&mut self, inputs: &[f64]) -> Result<Vec<f64>> {
        if !self.trained {
            return Err(Error::NotFitted("lstm has not been trained".into()));
        }
        self.reset_state();
        let mut out = Vec::with_capacity(inputs.len());
        for &x in inputs {
            let (y, _) = self.lstm_step(x)?;
            out.push(y);
        }
        Ok(out)
    }

    /// Plain forward MSE over the whole pair set from a zero state, without
    /// touching gradients. Used for the per-epoch loss trace.
    fn full_pass_loss(&mut self, data: &SupervisedSet) -> Result<f64> {
        self.reset_state();
        let mut loss = 0.0;
        for (&x, &t) in data.inputs.iter().zip(&data.targets) {
            let (y, _) = self.lstm_step(x)?;
            loss += (y - t) * (y - t);
        }
        Ok(loss / data.len() as f64)
    }
}

struct AdamState {
    m: LstmGradients,
    v: LstmGradients,
    step: u64,
}

impl AdamState {
    fn new(hidden: usize) -> Self {
        AdamState { m: LstmGradients::zeros(hidden), v: LstmGradients::zeros(hidden), step: 0 }
    }
}

macro_rules! for_each_tensor {
    ($macro_body:ident, $($args:tt)*) => {
        $macro_body!(w_xi, $($args)*);
        $macro_body!(w_hi, $($args)*);
        $macro_body!(b_i, $($args)*);
        $macro_body!(w_xf, $($args)*);
        $macro_body!(w_hf, $($args)*);
        $macro_body!(b_f, $($args)*);
        $macro_body!(w_xc, $($args)*);
        $macro_body!(w_hc, $($args)*);
        $macro_body!(b_c, $($args)*);
        $macro_body!(w_xo, $($args)*);
        $macro_body!(w_ho, $($args)*);
        $macro_body!(b_o, $($args)*);
        $macro_body!(w_y, $($args)*);
    };
}

fn apply_plain(model: &mut LstmModel, grads: &LstmGradients, lr: f64) {
    macro_rules! step {
        ($field:ident, $model:ident, $grads:ident, $lr:ident) => {
            $model.$field -= &$grads.$field * $lr;
        };
    }
    for_each_tensor!(step, model, grads, lr);
    model.b_y -= lr * grads.b_y;
}

fn apply_adam(model: &mut LstmModel, grads: &LstmGradients, lr: f64, adam: &mut AdamState) {
    adam.step += 1;
    let t = adam.step as f64;
    let bc1 = 1.0 - ADAM_BETA1.powf(t);
    let bc2 = 1.0 - ADAM_BETA2.powf(t);
    macro_rules! step {
        ($field:ident, $model:ident, $grads:ident, $adam:ident, $lr:ident, $bc1:ident, $bc2:ident) => {
            $adam.m.$field = &$adam.m.$field * ADAM_BETA1 + &$grads.$field * (1.0 - ADAM_BETA1);
            $adam.v.$field = &$adam.v.$field * ADAM_BETA2
                + $grads.$field.component_mul(&$grads.$field) * (1.0 - ADAM_BETA2);
            let update = $adam.m.$field.zip_map(&$adam.v.$field, |m, v| {
                $lr * (m / $bc1) / ((v / $bc2).sqrt() + ADAM_EPSILON)
            });
            $model.$field -= update;
        };
    }
    for_each_tensor!(step, model, grads, adam, lr, bc1, bc2);
    adam.m.b_y = ADAM_BETA1 * adam.m.b_y + (1.0 - ADAM_BETA1) * grads.b_y;
    adam.v.b_y = ADAM_BETA2 * adam.v.b_y + (1.0 - ADAM_BETA2) * grads.b_y * grads.b_y;
    model.b_y -= lr * (adam.m.b_y / bc1) / ((adam.v.b_y / bc2).sqrt() + ADAM_EPSILON);
}

/// Train a fresh model with truncated BPTT over contiguous windows. Each
/// epoch records the full-pass MSE with the weights as of the epoch start,
/// so `epoch_losses[0]` is the untrained model's loss. The hidden state
/// carries across windows within an epoch; gradients stop at window
/// boundaries.
pub fn lstm_fit(config: &LstmConfig, data: &SupervisedSet) -> Result<(LstmModel, LstmFitReport)> {
    config.validate()?;
    if data.len() < config.bptt_window {
        return Err(Error::InsufficientData(format!(
            "{} pairs with bptt_window {}",
            data.len(),
            config.bptt_window
        )));
    }
    let start = Instant::now();
    let mut model = LstmModel::init(config)?;
    let mut adam = AdamState::new(config.hidden_units);
    let pairs: Vec<(f64, f64)> = data
        .inputs
        .iter()
        .zip(&data.targets)
        .map(|(&x, &y)| (x, y))
        .collect();

    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let epoch_loss = model.full_pass_loss(data)?;
        if !epoch_loss.is_finite() {
            return Err(Error::Divergence(format!(
                "training loss became non-finite at epoch {epoch}"
            )));
        }
        epoch_losses.push(epoch_loss);

        model.reset_state();
        for (window_idx, window) in pairs.chunks(config.bptt_window).enumerate() {
            let (loss, grads) = model.lstm_gradients(window)?;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "window loss became non-finite at epoch {epoch}, window {window_idx}"
                )));
            }
            match config.optimizer {
                OptimizerKind::PlainGradient => apply_plain(&mut model, &grads, config.learning_rate),
                OptimizerKind::AdaptiveMoments => {
                    apply_adam(&mut model, &grads, config.learning_rate, &mut adam)
                }
            }
        }
    }

    let final_loss = model.full_pass_loss(data)?;
    model.trained = true;
    Ok((
        model,
        LstmFitReport {
            train_seconds: start.elapsed().as_secs_f64(),
            final_loss,
            epochs: config.epochs,
            epoch_losses,
        },
    ))
}
