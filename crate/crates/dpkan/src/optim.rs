//! DP-Adam training: per-sample clipping, noisy aggregation, Adam update,
//! plus the non-private Adam/AdamW baseline loop.

use crate::accountant;
use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::layers::{per_sample_gradients, BatchTargets, FlatGradient, Model};
use crate::loss::LossKind;
use crate::matrix::{l2_norm, DenseMatrix};
use crate::metrics;
use crate::rng::{RngState, Stream};

/// How the private loop draws batches. Poisson subsampling is the scheme
/// the accountant's guarantees hold under; full-batch exists for the
/// noise-free equivalence checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSampling {
    Poisson,
    FullBatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpSgdConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub clipping_constant: f64,
    pub noise_multiplier: f64,
    pub batch_size: usize,
    pub delta: f64,
    pub seed: u64,
    pub private: bool,
    /// Clip applied to the aggregated batch gradient in non-private mode;
    /// disabled when unset.
    pub non_private_batch_clip: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Decoupled weight decay for the non-private AdamW baseline.
    pub weight_decay: f64,
    pub sampling: BatchSampling,
}

impl DpSgdConfig {
    pub fn new(private: bool) -> Self {
        Self {
            epochs: 1,
            learning_rate: 1e-3,
            clipping_constant: 1.0,
            noise_multiplier: 1.0,
            batch_size: 64,
            delta: 1e-5,
            seed: 0,
            private,
            non_private_batch_clip: None,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: if private { 0.0 } else { 0.01 },
            sampling: BatchSampling::Poisson,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Argument("batch size must be >= 1".into()));
        }
        if !(self.noise_multiplier >= 0.0) {
            return Err(Error::Argument("noise multiplier must be >= 0".into()));
        }
        if !(self.clipping_constant > 0.0) {
            return Err(Error::Argument("clipping constant must be > 0".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Argument(format!(
                "delta must be in (0,1), got {}",
                self.delta
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Argument("learning rate must be > 0".into()));
        }
        Ok(())
    }
}

/// A per-sample gradient whose norm has been bounded; the only input
/// `noisy_aggregate` accepts, so unclipped gradients cannot reach the
/// parameter update.
#[derive(Debug, Clone, PartialEq)]
pub struct ClippedGradient(FlatGradient);

impl ClippedGradient {
    pub fn values(&self) -> &[f64] {
        &self.0.values
    }

    pub fn into_inner(self) -> FlatGradient {
        self.0
    }
}

/// g / max(1, |g|_2 / C): norm bounded by C, direction preserved.
pub fn clip_gradient(g: &FlatGradient, clip: f64) -> Result<ClippedGradient> {
    if !(clip > 0.0) {
        return Err(Error::Argument(format!("clipping constant must be > 0, got {clip}")));
    }
    if g.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("non-finite gradient".into()));
    }
    let norm = l2_norm(&g.values);
    let scale = 1.0 / (norm / clip).max(1.0);
    let values = if scale == 1.0 {
        g.values.clone()
    } else {
        g.values.iter().map(|v| v * scale).collect()
    };
    Ok(ClippedGradient(FlatGradient {
        values,
        sample_index: g.sample_index,
    }))
}

/// (1/B) sum of clipped gradients plus per-coordinate Gaussian noise of
/// standard deviation sigma * C / B. The divisor stays the nominal B even
/// when Poisson sampling realized a different batch size.
pub fn noisy_aggregate(
    clipped: &[ClippedGradient],
    sigma: f64,
    clip: f64,
    nominal_batch: usize,
    dim: usize,
    noise: &mut Stream,
) -> Result<FlatGradient> {
    if nominal_batch == 0 {
        return Err(Error::Argument("nominal batch size must be >= 1".into()));
    }
    if clipped.is_empty() && sigma == 0.0 {
        return Err(Error::Argument(
            "empty batch with zero noise has no defined aggregate".into(),
        ));
    }
    if !(sigma >= 0.0) {
        return Err(Error::Argument(format!("sigma must be >= 0, got {sigma}")));
    }
    let mut out = vec![0.0; dim];
    for g in clipped {
        if g.values().len() != dim {
            return Err(Error::Shape(format!(
                "gradient length {} vs expected {}",
                g.values().len(),
                dim
            )));
        }
        for (o, v) in out.iter_mut().zip(g.values()) {
            *o += v;
        }
    }
    let b = nominal_batch as f64;
    let noise_std = sigma * clip / b;
    for o in out.iter_mut() {
        *o = *o / b + if noise_std > 0.0 { noise.gaussian(noise_std) } else { 0.0 };
    }
    Ok(FlatGradient {
        values: out,
        sample_index: 0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamState {
    pub fn new(dim: usize, cfg: &DpSgdConfig) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            weight_decay: if cfg.private { 0.0 } else { cfg.weight_decay },
        }
    }
}

/// Bias-corrected Adam step; with weight_decay > 0 this is AdamW
/// (decoupled decay applied before the Adam delta).
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [f64],
    grad: &FlatGradient,
    lr: f64,
) -> Result<()> {
    if grad.values.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Shape(format!(
            "adam: {} params, {} gradient entries, {} moment entries",
            params.len(),
            grad.values.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grad.values[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        if state.weight_decay > 0.0 {
            params[i] -= lr * state.weight_decay * params[i];
        }
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_metric: Option<f64>,
    pub cumulative_steps: usize,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
    pub total_steps: usize,
    pub final_epsilon: Option<f64>,
    /// Count of post-clip norms exceeding C + 1e-9 observed during
    /// training; must stay zero.
    pub clip_violations: usize,
}

impl TrainingLog {
    /// One line per epoch: epoch, train loss, eval metric, cumulative epsilon.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&format!(
                "epoch={} train_loss={:.17e} eval_metric={} steps={} epsilon={}\n",
                r.epoch,
                r.train_loss,
                r.eval_metric
                    .map(|m| format!("{m:.17e}"))
                    .unwrap_or_else(|| "-".into()),
                r.cumulative_steps,
                r.epsilon
                    .map(|e| format!("{e:.17e}"))
                    .unwrap_or_else(|| "-".into()),
            ));
        }
        out
    }
}

fn batch_targets<'a>(targets: &'a Targets, idx: &[usize]) -> (Option<DenseMatrix>, Option<Vec<usize>>) {
    match targets {
        Targets::Regression(v) => {
            let mut m = DenseMatrix::zeros(idx.len(), 1);
            for (r, &i) in idx.iter().enumerate() {
                m.set(r, 0, v[i]);
            }
            (Some(m), None)
        }
        Targets::Classification { labels, .. } => {
            (None, Some(idx.iter().map(|&i| labels[i]).collect()))
        }
    }
}

fn gather_rows(features: &DenseMatrix, idx: &[usize]) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(idx.len(), features.cols());
    for (r, &i) in idx.iter().enumerate() {
        m.row_mut(r).copy_from_slice(features.row(i));
    }
    m
}

fn evaluate(model: &Model, data: &Dataset, kind: LossKind) -> Result<f64> {
    let pred = model.predict(&data.features)?;
    match (&data.targets, kind) {
        (Targets::Regression(y), LossKind::Mse) => {
            let yhat: Vec<f64> = (0..pred.rows()).map(|r| pred.get(r, 0)).collect();
            metrics::r2_score(y, &yhat)
        }
        (Targets::Classification { labels, .. }, LossKind::CrossEntropy) => {
            metrics::accuracy(labels, &pred)
        }
        _ => Err(Error::Argument("loss kind does not match targets".into())),
    }
}

fn mean_train_loss(model: &Model, data: &Dataset, kind: LossKind) -> Result<f64> {
    let pred = model.predict(&data.features)?;
    match (&data.targets, kind) {
        (Targets::Regression(y), LossKind::Mse) => {
            let target = DenseMatrix::from_vec(y.len(), 1, y.clone())?;
            Ok(crate::loss::mse_loss(&pred, &target)?.0)
        }
        (Targets::Classification { labels, .. }, LossKind::CrossEntropy) => {
            Ok(crate::loss::cross_entropy_loss(&pred, labels)?.0)
        }
        _ => Err(Error::Argument("loss kind does not match targets".into())),
    }
}

/// Run the full training loop. Private mode follows the DP-Adam recipe:
/// Poisson-subsampled batches, per-sample clipping, noisy aggregation,
/// Adam. Non-private mode runs shuffled minibatch AdamW with an optional
/// whole-batch clip.
pub fn train(
    model: &Model,
    train_data: &Dataset,
    eval_data: Option<&Dataset>,
    cfg: &DpSgdConfig,
    kind: LossKind,
) -> Result<(Model, TrainingLog)> {
    cfg.validate()?;
    let n = train_data.len();
    if n == 0 {
        return Err(Error::Argument("training dataset is empty".into()));
    }
    if !cfg.private && cfg.batch_size > n {
        return Err(Error::Argument(format!(
            "batch size {} exceeds dataset size {n}",
            cfg.batch_size
        )));
    }
    let mut model = model.clone();
    let mut params = model.flatten();
    let dim = params.len();
    let mut adam = AdamState::new(dim, cfg);
    let state = RngState::new(cfg.seed);
    let mut noise = state.stream("dp-noise");
    let mut sampler = state.stream("batch-sampling");
    let mut log = TrainingLog::default();

    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let q = (cfg.batch_size as f64 / n as f64).min(1.0);
    let mut step_index = 0usize;

    for epoch in 0..cfg.epochs {
        if cfg.private {
            for _ in 0..steps_per_epoch {
                let idx: Vec<usize> = match cfg.sampling {
                    BatchSampling::Poisson => {
                        (0..n).filter(|_| sampler.bernoulli(q)).collect()
                    }
                    BatchSampling::FullBatch => (0..n).collect(),
                };
                let nominal = match cfg.sampling {
                    BatchSampling::Poisson => cfg.batch_size,
                    BatchSampling::FullBatch => n,
                };
                let mut clipped = Vec::with_capacity(idx.len());
                if !idx.is_empty() {
                    let bx = gather_rows(&train_data.features, &idx);
                    let (reg, cls) = batch_targets(&train_data.targets, &idx);
                    let targets = match (&reg, &cls) {
                        (Some(m), _) => BatchTargets::Regression(m),
                        (_, Some(c)) => BatchTargets::Classes(c),
                        _ => unreachable!(),
                    };
                    let (grads, loss) = per_sample_gradients(&model, &bx, targets, kind)?;
                    if !loss.is_finite() {
                        return Err(Error::Diverged {
                            step: step_index,
                            detail: format!("batch loss {loss}"),
                        });
                    }
                    for g in &grads {
                        let c = clip_gradient(g, cfg.clipping_constant)?;
                        if l2_norm(c.values()) > cfg.clipping_constant + 1e-9 {
                            log.clip_violations += 1;
                        }
                        clipped.push(c);
                    }
                }
                let g_t = if clipped.is_empty() && cfg.noise_multiplier == 0.0 {
                    // Poisson drew nothing and there is no noise: no update.
                    step_index += 1;
                    continue;
                } else {
                    noisy_aggregate(
                        &clipped,
                        cfg.noise_multiplier,
                        cfg.clipping_constant,
                        nominal,
                        dim,
                        &mut noise,
                    )?
                };
                adam_step(&mut adam, &mut params, &g_t, cfg.learning_rate)?;
                model.set_params(&params)?;
                step_index += 1;
            }
        } else {
            let mut order: Vec<usize> = (0..n).collect();
            sampler.shuffle(&mut order);
            for chunk in order.chunks(cfg.batch_size) {
                let bx = gather_rows(&train_data.features, chunk);
                let (reg, cls) = batch_targets(&train_data.targets, chunk);
                let targets = match (&reg, &cls) {
                    (Some(m), _) => BatchTargets::Regression(m),
                    (_, Some(c)) => BatchTargets::Classes(c),
                    _ => unreachable!(),
                };
                let (grads, loss) = per_sample_gradients(&model, &bx, targets, kind)?;
                if !loss.is_finite() {
                    return Err(Error::Diverged {
                        step: step_index,
                        detail: format!("batch loss {loss}"),
                    });
                }
                let b = chunk.len() as f64;
                let mut mean = vec![0.0; dim];
                for g in &grads {
                    for (m, v) in mean.iter_mut().zip(&g.values) {
                        *m += v / b;
                    }
                }
                let mut g_t = FlatGradient {
                    values: mean,
                    sample_index: 0,
                };
                if let Some(clip) = cfg.non_private_batch_clip {
                    g_t = clip_gradient(&g_t, clip)?.into_inner();
                }
                adam_step(&mut adam, &mut params, &g_t, cfg.learning_rate)?;
                model.set_params(&params)?;
                step_index += 1;
            }
        }

        let train_loss = mean_train_loss(&model, train_data, kind)?;
        if !train_loss.is_finite() {
            return Err(Error::Diverged {
                step: step_index,
                detail: format!("epoch-end loss {train_loss}"),
            });
        }
        let eval_metric = match eval_data {
            Some(ds) => Some(evaluate(&model, ds, kind)?),
            None => None,
        };
        let epsilon = if cfg.private && cfg.noise_multiplier > 0.0 {
            let params = accountant::MechanismParams {
                noise_multiplier: cfg.noise_multiplier,
                sampling_rate: q,
                steps: step_index,
            };
            let orders = accountant::default_orders();
            let rdp = accountant::rdp_subsampled_gaussian(&params, &orders)?;
            Some(accountant::rdp_to_dp(&rdp, &orders, cfg.delta)?.0.epsilon)
        } else {
            None
        };
        log.records.push(EpochRecord {
            epoch,
            train_loss,
            eval_metric,
            cumulative_steps: step_index,
            epsilon,
        });
    }
    log.total_steps = step_index;
    log.final_epsilon = log.records.last().and_then(|r| r.epsilon);
    Ok((model, log))
}

/// Evaluate a trained model with the metric matching the loss kind
/// (R^2 for regression, accuracy for classification).
pub fn evaluate_model(model: &Model, data: &Dataset, kind: LossKind) -> Result<f64> {
    evaluate(model, data, kind)
}
