use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Example, Model, NeuralError, Params, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    /// Learning-rate factor applied when validation loss does not improve.
    pub lr_decay: f64,
    pub eval_every: usize,
    /// Zero disables periodic checkpoints.
    pub checkpoint_every: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2_000,
            batch_size: 16,
            learning_rate: 0.15,
            clip_norm: 2.0,
            lr_decay: 0.5,
            eval_every: 200,
            checkpoint_every: 0,
            seed: 1,
            optimizer: Optimizer::Sgd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub loss: f64,
    pub learning_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Best parameters by validation loss, or the final ones without a
    /// validation set.
    pub params: Params<T>,
    pub best_step: usize,
    pub best_validation: Option<f64>,
    pub log: Vec<LossRecord>,
}

#[derive(Debug, Error)]
pub enum TrainError<T: std::fmt::Debug> {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] NeuralError),
    #[error("training diverged at step {step}")]
    Diverged {
        step: usize,
        last_good: Box<Params<T>>,
        log: Vec<LossRecord>,
    },
}

struct Adam<T> {
    m: Params<T>,
    v: Params<T>,
    t: i32,
}

/// Mini-batch training. Deterministic for a given seed: batch order and
/// dropout masks come from one seeded generator and gradients are reduced
/// in a fixed order.
pub fn train<T: Real>(
    model: &Model<T>,
    train_set: &[Example],
    valid_set: &[Example],
    cfg: &TrainConfig,
    on_checkpoint: &mut dyn FnMut(usize, &Params<T>),
) -> Result<TrainOutcome<T>, TrainError<T>> {
    if train_set.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if cfg.batch_size == 0 {
        return Err(TrainError::Config("batch_size must be at least 1".into()));
    }
    let mut m = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut cursor = order.len();
    let mut lr = cfg.learning_rate;
    let mut adam = match cfg.optimizer {
        Optimizer::Adam { .. } => Some(Adam {
            m: m.params.zeros_like(),
            v: m.params.zeros_like(),
            t: 0,
        }),
        Optimizer::Sgd => None,
    };
    let mut log = Vec::with_capacity(cfg.steps);
    let mut best: Option<(f64, usize, Params<T>)> = None;

    for step in 1..=cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size.min(train_set.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(train_set[order[cursor]].clone());
            cursor += 1;
        }
        let seeds: Vec<u64> = batch.iter().map(|_| rng.gen()).collect();
        let diverged = |m: &Model<T>, log: &Vec<LossRecord>| TrainError::Diverged {
            step,
            last_good: Box::new(m.params.clone()),
            log: log.clone(),
        };
        let (loss, mut grad) = match m.loss_and_grad(&batch, Some(&seeds)) {
            Ok(r) => r,
            Err(NeuralError::NonFinite) => return Err(diverged(&m, &log)),
            Err(e) => return Err(e.into()),
        };
        let norm = grad.norm().as_f64();
        if !norm.is_finite() {
            return Err(diverged(&m, &log));
        }
        if cfg.clip_norm > 0.0 && norm > cfg.clip_norm {
            grad.scale(T::of(cfg.clip_norm / norm));
        }
        let before = m.params.clone();
        match (&cfg.optimizer, adam.as_mut()) {
            (Optimizer::Adam { beta1, beta2, eps }, Some(state)) => {
                state.t += 1;
                let (b1, b2) = (T::of(*beta1), T::of(*beta2));
                let c1 = T::of(1.0 - beta1.powi(state.t));
                let c2 = T::of(1.0 - beta2.powi(state.t));
                let (lr_t, eps_t) = (T::of(lr), T::of(*eps));
                let one = T::one();
                let mut tensors = m.params.tensors_mut();
                let ms = state.m.tensors_mut();
                let vs = state.v.tensors_mut();
                for (((_, p), (_, mt)), ((_, vt), (_, g))) in
                    tensors.iter_mut().zip(ms).zip(vs.into_iter().zip(grad.tensors()))
                {
                    for k in 0..p.data.len() {
                        let gk = g.data[k];
                        mt.data[k] = b1 * mt.data[k] + (one - b1) * gk;
                        vt.data[k] = b2 * vt.data[k] + (one - b2) * gk * gk;
                        let mh = mt.data[k] / c1;
                        let vh = vt.data[k] / c2;
                        p.data[k] -= lr_t * mh / (vh.sqrt() + eps_t);
                    }
                }
            }
            _ => m.params.add_scaled(T::of(-lr), &grad),
        }
        if !m.params.all_finite() {
            m.params = before;
            return Err(diverged(&m, &log));
        }

        let mut record = LossRecord {
            step,
            loss: loss.as_f64(),
            learning_rate: lr,
            validation: None,
        };
        let eval_now = !valid_set.is_empty()
            && cfg.eval_every > 0
            && (step % cfg.eval_every == 0 || step == cfg.steps);
        if eval_now {
            let v = m.loss(valid_set)?.as_f64();
            record.validation = Some(v);
            match &best {
                Some((b, _, _)) if v >= *b => lr *= cfg.lr_decay,
                _ => best = Some((v, step, m.params.clone())),
            }
        }
        log.push(record);
        if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
            on_checkpoint(step, &m.params);
        }
    }

    Ok(match best {
        Some((v, step, params)) => TrainOutcome {
            params,
            best_step: step,
            best_validation: Some(v),
            log,
        },
        None => TrainOutcome {
            params: m.params,
            best_step: cfg.steps,
            best_validation: None,
            log,
        },
    })
}
