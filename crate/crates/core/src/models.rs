//! Prediction models, Adam, and empirical risk minimization under the
//! current duals.
//!
//! Models map a context `x` to a flat output in the [`OutputLayout`]; the
//! output is reshaped into a [`Prediction`] only at the edges. Training works
//! on whole batches stored column-per-sample so every forward and backward
//! pass is a handful of matrix products.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::losses::{flat_loss_grad, LossKind, PredictionGrad, SampleTarget, Scratch};
use crate::oracles::DecisionOracle;
use crate::types::{Arrival, DualPair, Outcome, OutputLayout, Prediction};

/// Hidden width of the two-layer network.
pub const HIDDEN_WIDTH: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HypothesisClass {
    Linear,
    Mlp,
}

impl HypothesisClass {
    pub fn name(self) -> &'static str {
        match self {
            HypothesisClass::Linear => "linear",
            HypothesisClass::Mlp => "mlp",
        }
    }

    /// Default Adam learning rate for the class.
    pub fn default_lr(self) -> f64 {
        match self {
            HypothesisClass::Linear => 1e-2,
            HypothesisClass::Mlp => 1e-3,
        }
    }
}

impl FromStr for HypothesisClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(HypothesisClass::Linear),
            "mlp" | "nn" | "network" => Ok(HypothesisClass::Mlp),
            other => Err(Error::Config(format!("unknown hypothesis class `{other}`"))),
        }
    }
}

/// Affine map `W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub layout: OutputLayout,
}

/// `W2 relu(W1 x + b1) + b2` with [`HIDDEN_WIDTH`] hidden units.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
    pub layout: OutputLayout,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(LinearModel),
    Mlp(MlpModel),
}

fn uniform_matrix<R: Rng>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> DMatrix<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    // Fill row-major so the draw order does not depend on storage order.
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.random_range(-bound..=bound);
        }
    }
    m
}

fn uniform_vector<R: Rng>(len: usize, fan_in: usize, rng: &mut R) -> DVector<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    DVector::from_fn(len, |_, _| rng.random_range(-bound..=bound))
}

fn add_bias_columns(m: &mut DMatrix<f64>, bias: &DVector<f64>) {
    for mut col in m.column_iter_mut() {
        col += bias;
    }
}

fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(m.nrows());
    for col in m.column_iter() {
        out += col;
    }
    out
}

impl Model {
    /// Fresh model with weights and biases uniform in `+-1/sqrt(fan_in)`.
    pub fn init<R: Rng>(class: HypothesisClass, p: usize, layout: OutputLayout, rng: &mut R) -> Self {
        let out = layout.width();
        match class {
            HypothesisClass::Linear => Model::Linear(LinearModel {
                weight: uniform_matrix(out, p, p, rng),
                bias: uniform_vector(out, p, rng),
                layout,
            }),
            HypothesisClass::Mlp => Model::Mlp(MlpModel {
                w1: uniform_matrix(HIDDEN_WIDTH, p, p, rng),
                b1: uniform_vector(HIDDEN_WIDTH, p, rng),
                w2: uniform_matrix(out, HIDDEN_WIDTH, HIDDEN_WIDTH, rng),
                b2: uniform_vector(out, HIDDEN_WIDTH, rng),
                layout,
            }),
        }
    }

    pub fn class(&self) -> HypothesisClass {
        match self {
            Model::Linear(_) => HypothesisClass::Linear,
            Model::Mlp(_) => HypothesisClass::Mlp,
        }
    }

    pub fn layout(&self) -> OutputLayout {
        match self {
            Model::Linear(m) => m.layout,
            Model::Mlp(m) => m.layout,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Model::Linear(m) => m.weight.ncols(),
            Model::Mlp(m) => m.w1.ncols(),
        }
    }

    /// Same shapes, all parameters zero. Gradients use this container.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for p in z.params_mut() {
            p.fill(0.0);
        }
        z
    }

    pub fn params(&self) -> Vec<&[f64]> {
        match self {
            Model::Linear(m) => vec![m.weight.as_slice(), m.bias.as_slice()],
            Model::Mlp(m) => vec![m.w1.as_slice(), m.b1.as_slice(), m.w2.as_slice(), m.b2.as_slice()],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Model::Linear(m) => vec![m.weight.as_mut_slice(), m.bias.as_mut_slice()],
            Model::Mlp(m) => vec![
                m.w1.as_mut_slice(),
                m.b1.as_mut_slice(),
                m.w2.as_mut_slice(),
                m.b2.as_mut_slice(),
            ],
        }
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().concat()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        check_dim("flat parameters", self.num_params(), flat.len())?;
        let mut offset = 0;
        for p in self.params_mut() {
            let n = p.len();
            p.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    /// Flat output for one context.
    pub fn forward_flat(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_dim("model input", self.input_dim(), x.len())?;
        let x = DVector::from_column_slice(x);
        Ok(match self {
            Model::Linear(m) => &m.weight * x + &m.bias,
            Model::Mlp(m) => {
                let h = (&m.w1 * x + &m.b1).map(|v| v.max(0.0));
                &m.w2 * h + &m.b2
            }
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Prediction> {
        let out = self.forward_flat(x)?;
        Ok(self.layout().to_outcome(out.as_slice()))
    }

    /// Outputs for a batch of contexts stored one per column.
    pub fn forward_batch(&self, xt: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Model::Linear(m) => {
                let mut out = &m.weight * xt;
                add_bias_columns(&mut out, &m.bias);
                out
            }
            Model::Mlp(m) => {
                let mut h = &m.w1 * xt;
                add_bias_columns(&mut h, &m.b1);
                h.apply(|v| *v = v.max(0.0));
                let mut out = &m.w2 * h;
                add_bias_columns(&mut out, &m.b2);
                out
            }
        }
    }

    /// Parameter gradients given upstream gradients of the flat outputs,
    /// one column per sample (summed over samples).
    pub fn backward_batch(&self, xt: &DMatrix<f64>, upstream: &DMatrix<f64>) -> Model {
        match self {
            Model::Linear(m) => Model::Linear(LinearModel {
                weight: upstream * xt.transpose(),
                bias: row_sums(upstream),
                layout: m.layout,
            }),
            Model::Mlp(m) => {
                let mut pre = &m.w1 * xt;
                add_bias_columns(&mut pre, &m.b1);
                let h = pre.map(|v| v.max(0.0));
                let w2 = upstream * h.transpose();
                let b2 = row_sums(upstream);
                let mut dh = m.w2.transpose() * upstream;
                dh.zip_apply(&pre, |g, z| {
                    if z <= 0.0 {
                        *g = 0.0
                    }
                });
                Model::Mlp(MlpModel {
                    w1: &dh * xt.transpose(),
                    b1: row_sums(&dh),
                    w2,
                    b2,
                    layout: m.layout,
                })
            }
        }
    }

    /// Gradients for a single context and upstream flat gradient.
    pub fn backward_flat(&self, x: &[f64], grad_out: &[f64]) -> Result<Model> {
        check_dim("model input", self.input_dim(), x.len())?;
        check_dim("model output gradient", self.layout().width(), grad_out.len())?;
        let xt = DMatrix::from_column_slice(x.len(), 1, x);
        let g = DMatrix::from_column_slice(grad_out.len(), 1, grad_out);
        Ok(self.backward_batch(&xt, &g))
    }

    /// Gradients for a single context given `(d r_hat, d V_hat)`. Under
    /// identity consumption the `V_hat` part is ignored.
    pub fn backward(&self, x: &[f64], grad: &PredictionGrad) -> Result<Model> {
        let layout = self.layout();
        self.backward_flat(x, &layout.to_flat(grad))
    }

    /// Plain-text checkpoint.
    ///
    /// ```text
    /// online-spo-model v1
    /// class linear|mlp
    /// layout <d> <m> <identity 0|1>
    /// tensor <name> <rows> <cols>
    /// <row 0 values, space separated>
    /// ...
    /// ```
    ///
    /// Tensors appear in parameter order (`weight bias` or `w1 b1 w2 b2`),
    /// values row-major in shortest round-trip decimal form.
    pub fn to_text(&self) -> String {
        let layout = self.layout();
        let mut s = String::new();
        let _ = writeln!(s, "online-spo-model v1");
        let _ = writeln!(s, "class {}", self.class().name());
        let _ = writeln!(
            s,
            "layout {} {} {}",
            layout.d,
            layout.m,
            u8::from(layout.identity_consumption)
        );
        let mut tensor = |name: &str, m: &DMatrix<f64>| {
            let _ = writeln!(s, "tensor {name} {} {}", m.nrows(), m.ncols());
            for row in m.row_iter() {
                let vals: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                let _ = writeln!(s, "{}", vals.join(" "));
            }
        };
        let col = |v: &DVector<f64>| DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        match self {
            Model::Linear(m) => {
                tensor("weight", &m.weight);
                tensor("bias", &col(&m.bias));
            }
            Model::Mlp(m) => {
                tensor("w1", &m.w1);
                tensor("b1", &col(&m.b1));
                tensor("w2", &m.w2);
                tensor("b2", &col(&m.b2));
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Model> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Parse {
                    line: 0,
                    message: format!("unexpected end of checkpoint, expected {what}"),
                })
        };
        let bad = |line: usize, msg: &str| Error::Parse {
            line,
            message: msg.to_string(),
        };

        let (ln, header) = next("header")?;
        if header != "online-spo-model v1" {
            return Err(bad(ln, "not an online-spo model checkpoint"));
        }
        let (ln, class_line) = next("class")?;
        let class: HypothesisClass = class_line
            .strip_prefix("class ")
            .ok_or_else(|| bad(ln, "expected `class <name>`"))?
            .parse()
            .map_err(|_| bad(ln, "unknown class"))?;
        let (ln, layout_line) = next("layout")?;
        let nums: Vec<usize> = layout_line
            .strip_prefix("layout ")
            .ok_or_else(|| bad(ln, "expected `layout <d> <m> <identity>`"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(ln, "bad layout number")))
            .collect::<Result<_>>()?;
        if nums.len() != 3 {
            return Err(bad(ln, "expected three layout fields"));
        }
        let layout = OutputLayout {
            d: nums[0],
            m: nums[1],
            identity_consumption: nums[2] == 1,
        };

        let mut read_tensor = |name: &str| -> Result<DMatrix<f64>> {
            let (ln, head) = next("tensor header")?;
            let parts: Vec<&str> = head.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "tensor" || parts[1] != name {
                return Err(bad(ln, &format!("expected `tensor {name} <rows> <cols>`")));
            }
            let rows: usize = parts[2].parse().map_err(|_| bad(ln, "bad row count"))?;
            let cols: usize = parts[3].parse().map_err(|_| bad(ln, "bad column count"))?;
            let mut m = DMatrix::zeros(rows, cols);
            for i in 0..rows {
                let (ln, row) = next("tensor row")?;
                let vals: Vec<f64> = row
                    .split_whitespace()
                    .map(|t| t.parse().map_err(|_| bad(ln, "bad number")))
                    .collect::<Result<_>>()?;
                if vals.len() != cols {
                    return Err(bad(ln, "wrong number of values in row"));
                }
                for (j, v) in vals.into_iter().enumerate() {
                    m[(i, j)] = v;
                }
            }
            Ok(m)
        };
        let to_vec = |m: DMatrix<f64>| DVector::from_column_slice(m.as_slice());
        let model = match class {
            HypothesisClass::Linear => Model::Linear(LinearModel {
                weight: read_tensor("weight")?,
                bias: to_vec(read_tensor("bias")?),
                layout,
            }),
            HypothesisClass::Mlp => Model::Mlp(MlpModel {
                w1: read_tensor("w1")?,
                b1: to_vec(read_tensor("b1")?),
                w2: read_tensor("w2")?,
                b2: to_vec(read_tensor("b2")?),
                layout,
            }),
        };
        let out_rows = match &model {
            Model::Linear(m) => m.weight.nrows(),
            Model::Mlp(m) => m.w2.nrows(),
        };
        check_dim("checkpoint output width", layout.width(), out_rows)?;
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments. Buffers are sized on the first step.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            first: Vec::new(),
            second: Vec::new(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(params.len(), grads.len(), "adam: tensor count");
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.second = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            assert_eq!(p.len(), g.len(), "adam: tensor shape");
            let m = &mut self.first[k];
            let v = &mut self.second[k];
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Applies one Adam step to a model given a gradient container of the same
/// shape.
pub fn adam_step(model: &mut Model, grads: &Model, state: &mut AdamState) {
    let grads = grads.params();
    let mut params = model.params_mut();
    state.step(&mut params, &grads);
}

/// The empirical objective of one refit: contexts, fixed per-sample targets
/// and the dual price they were built with.
#[derive(Debug, Clone)]
pub struct ErmBatch {
    xt: DMatrix<f64>,
    targets: Vec<SampleTarget>,
    price: Vec<f64>,
    layout: OutputLayout,
}

impl ErmBatch {
    pub fn new(
        history: &[Arrival],
        layout: OutputLayout,
        omega: &DualPair,
        zeta: f64,
        oracle: &dyn DecisionOracle,
    ) -> Result<Self> {
        let p = history.first().map_or(0, |a| a.features.len());
        let price: Vec<f64> = omega.price(zeta).iter().copied().collect();
        let mut xt = DMatrix::zeros(p, history.len());
        let mut targets = Vec::with_capacity(history.len());
        for (s, a) in history.iter().enumerate() {
            check_dim("history features", p, a.features.len())?;
            check_dim("history rewards", layout.d, a.outcome.d())?;
            check_dim("history resources", price.len(), a.outcome.m())?;
            xt.set_column(s, &a.features);
            targets.push(SampleTarget::new(&a.outcome, &layout, &price, oracle));
        }
        Ok(Self {
            xt,
            targets,
            price,
            layout,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Mean loss over the batch.
    pub fn loss(&self, model: &Model, kind: LossKind, oracle: &dyn DecisionOracle) -> f64 {
        self.loss_and_grad(model, kind, oracle, None).0
    }

    /// Mean loss and its parameter gradient, optionally over a subset of
    /// sample indices.
    pub fn loss_and_grad(
        &self,
        model: &Model,
        kind: LossKind,
        oracle: &dyn DecisionOracle,
        subset: Option<&[usize]>,
    ) -> (f64, Model) {
        let (xt, targets): (std::borrow::Cow<'_, DMatrix<f64>>, Vec<&SampleTarget>) = match subset {
            None => (std::borrow::Cow::Borrowed(&self.xt), self.targets.iter().collect()),
            Some(idx) => {
                let mut xt = DMatrix::zeros(self.xt.nrows(), idx.len());
                for (k, &i) in idx.iter().enumerate() {
                    xt.set_column(k, &self.xt.column(i));
                }
                (std::borrow::Cow::Owned(xt), idx.iter().map(|&i| &self.targets[i]).collect())
            }
        };
        let n = targets.len();
        if n == 0 {
            return (0.0, model.zeros_like());
        }
        let out = model.forward_batch(&xt);
        let width = self.layout.width();
        let mut upstream = DMatrix::zeros(width, n);
        let mut scratch = Scratch::new(self.layout.d);
        let mut total = 0.0;
        for (s, target) in targets.iter().enumerate() {
            let o = out.column(s);
            let mut g = upstream.column_mut(s);
            total += flat_loss_grad(
                kind,
                &self.layout,
                &self.price,
                o.as_slice(),
                target,
                oracle,
                &mut scratch,
                g.as_mut_slice(),
            );
        }
        let inv = 1.0 / n as f64;
        upstream *= inv;
        (total * inv, model.backward_batch(&xt, &upstream))
    }
}

/// Refit schedule knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    /// Adam steps per refit.
    pub steps: usize,
    pub adam: AdamConfig,
    /// Uniform minibatch size; `None` trains on the full history.
    pub batch_size: Option<usize>,
}

impl TrainingConfig {
    pub fn for_class(class: HypothesisClass) -> Self {
        Self {
            steps: 50,
            adam: AdamConfig::with_lr(class.default_lr()),
            batch_size: None,
        }
    }
}

/// Owns the optimizer state across refits so each refit warm-starts both the
/// parameters and the Adam moments.
#[derive(Debug, Clone)]
pub struct ErmTrainer {
    pub config: TrainingConfig,
    adam: AdamState,
    rng: ChaCha8Rng,
}

impl ErmTrainer {
    pub fn new(config: TrainingConfig, seed: u64) -> Self {
        Self {
            adam: AdamState::new(config.adam),
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Runs `config.steps` Adam steps on the empirical surrogate risk. An
    /// empty history leaves the model untouched. Returns the final
    /// full-batch loss when any step ran.
    #[allow(clippy::too_many_arguments)]
    pub fn fit(
        &mut self,
        model: &mut Model,
        history: &[Arrival],
        omega: &DualPair,
        zeta: f64,
        kind: LossKind,
        oracle: &dyn DecisionOracle,
    ) -> Result<Option<f64>> {
        if history.is_empty() || self.config.steps == 0 {
            return Ok(None);
        }
        let batch = ErmBatch::new(history, model.layout(), omega, zeta, oracle)?;
        let mut last = 0.0;
        for _ in 0..self.config.steps {
            let subset = match self.config.batch_size {
                Some(b) if b < batch.len() => Some(sample(&mut self.rng, batch.len(), b).into_vec()),
                _ => None,
            };
            let (loss, grads) = batch.loss_and_grad(model, kind, oracle, subset.as_deref());
            last = loss;
            adam_step(model, &grads, &mut self.adam);
        }
        Ok(Some(last))
    }
}

/// One-shot refit with a fresh optimizer.
#[allow(clippy::too_many_arguments)]
pub fn fit_erm(
    mut model: Model,
    history: &[Arrival],
    omega: &DualPair,
    zeta: f64,
    kind: LossKind,
    config: TrainingConfig,
    oracle: &dyn DecisionOracle,
) -> Result<Model> {
    ErmTrainer::new(config, 0).fit(&mut model, history, omega, zeta, kind, oracle)?;
    Ok(model)
}

/// Context-free and oracle predictors used as baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchmarkKind {
    /// Running means of past outcomes.
    Saa,
    /// The generator's conditional mean at `x`.
    TrueModel,
    /// The realized outcome itself.
    Hindsight,
}

impl BenchmarkKind {
    pub fn name(self) -> &'static str {
        match self {
            BenchmarkKind::Saa => "saa",
            BenchmarkKind::TrueModel => "true_model",
            BenchmarkKind::Hindsight => "hindsight",
        }
    }
}

impl FromStr for BenchmarkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "saa" => Ok(BenchmarkKind::Saa),
            "true_model" | "true" => Ok(BenchmarkKind::TrueModel),
            "hindsight" => Ok(BenchmarkKind::Hindsight),
            other => Err(Error::Config(format!("unknown benchmark `{other}`"))),
        }
    }
}

/// Source of `E[(r, V) | x]`.
pub trait ConditionalMean {
    fn conditional_mean(&self, x: &[f64]) -> Prediction;
}

/// Sums of past outcomes. The mean is recomputed as `sum / n` so it equals
/// the arithmetic mean of the observations exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SaaPredictor {
    sum: Outcome,
    count: usize,
}

impl SaaPredictor {
    pub fn new(d: usize, m: usize) -> Self {
        Self {
            sum: Outcome::zeros(d, m),
            count: 0,
        }
    }

    pub fn observe(&mut self, mu: &Outcome) {
        self.sum.reward += &mu.reward;
        self.sum.consumption += &mu.consumption;
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Zeros before any observation.
    pub fn predict(&self) -> Prediction {
        if self.count == 0 {
            return Outcome::zeros(self.sum.d(), self.sum.m());
        }
        let n = self.count as f64;
        Outcome {
            reward: self.sum.reward.map(|v| v / n),
            consumption: self.sum.consumption.map(|v| v / n),
        }
    }
}

/// Prediction of a benchmark for context `x` at the current arrival.
pub fn benchmark_predict(
    kind: BenchmarkKind,
    x: &[f64],
    saa: &SaaPredictor,
    current: &Arrival,
    truth: Option<&dyn ConditionalMean>,
) -> Result<Prediction> {
    match kind {
        BenchmarkKind::Saa => Ok(saa.predict()),
        BenchmarkKind::Hindsight => Ok(current.outcome.clone()),
        BenchmarkKind::TrueModel => truth
            .map(|t| t.conditional_mean(x))
            .ok_or_else(|| Error::Unsupported("true-model benchmark needs a synthetic instance".into())),
    }
}
