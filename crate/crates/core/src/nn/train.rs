//! Mini-batch Adam training with dev-set early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{ModelError, SequenceClassifier};
use super::params::{Grads, ParamSet};
use super::text::EncodedInput;
use crate::evalkit::metrics::BinaryCounts;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training set has no positive examples")]
    NoPositives,
    #[error("training set has no negative examples")]
    NoNegatives,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    /// Batch size for models without a context encoder.
    pub batch_size: usize,
    /// Batch size for models that read conversation history.
    pub history_batch_size: usize,
    /// Probability cut used when scoring the dev set for early stopping.
    pub decision_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            patience: 5,
            learning_rate: 0.02,
            batch_size: 32,
            history_batch_size: 8,
            decision_threshold: 0.5,
        }
    }
}

impl TrainConfig {
    /// Fine-tuning setup for pretrained encoders.
    pub fn reference() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            ..TrainConfig::default()
        }
    }

    pub fn batch_size_for(&self, with_context: bool) -> usize {
        if with_context {
            self.history_batch_size.max(1)
        } else {
            self.batch_size.max(1)
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Grads,
    v: Grads,
    step: i32,
}

impl Adam {
    pub fn new(params: &ParamSet, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-3,
            m: params.zero_grads(),
            v: params.zero_grads(),
            step: 0,
        }
    }

    /// Elements with an exactly zero gradient are left untouched, moments
    /// included, so embedding rows absent from the batch do not drift.
    pub fn apply(&mut self, params: &mut ParamSet, grads: &Grads) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for id in params.ids() {
            let g = grads.get(id);
            let m = self.m.get_mut(id);
            let v = self.v.get_mut(id);
            let p = &mut params.get_mut(id).data;
            for k in 0..p.len() {
                if g[k] == 0.0 {
                    continue;
                }
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                p[k] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopVerdict {
    Improved,
    NoImprovement,
    Stop,
}

/// Patience counter over a score that should increase.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, score: f64) -> StopVerdict {
        match self.best {
            Some((_, best)) if score <= best => {
                self.stale += 1;
                if self.stale >= self.patience {
                    StopVerdict::Stop
                } else {
                    StopVerdict::NoImprovement
                }
            }
            _ => {
                self.best = Some((epoch, score));
                self.stale = 0;
                StopVerdict::Improved
            }
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_macro_f1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub epochs_run: usize,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub best_dev_macro_f1: Option<f64>,
    pub stopped_early: bool,
    pub history: Vec<EpochRecord>,
}

pub type LabeledInput = (EncodedInput, bool);

pub fn counts_at(
    model: &SequenceClassifier,
    data: &[LabeledInput],
    threshold: f64,
) -> Result<BinaryCounts, ModelError> {
    let mut preds = Vec::with_capacity(data.len());
    let mut labels = Vec::with_capacity(data.len());
    for (input, label) in data {
        preds.push(model.predict(input)? >= threshold);
        labels.push(*label);
    }
    Ok(BinaryCounts::from_pairs(&preds, &labels).expect("aligned by construction"))
}

/// Trains `model` in place. With a non-empty dev set the weights of the best
/// dev macro-F1 epoch are restored at the end; otherwise the final weights
/// are kept.
pub fn fit(
    model: &mut SequenceClassifier,
    train: &[LabeledInput],
    dev: &[LabeledInput],
    config: &TrainConfig,
    seed: u64,
) -> Result<FitReport, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    if !train.iter().any(|(_, l)| *l) {
        return Err(TrainError::NoPositives);
    }
    if !train.iter().any(|(_, l)| !*l) {
        return Err(TrainError::NoNegatives);
    }
    for (input, _) in train.iter().chain(dev) {
        model.check_input(input)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut optimizer = Adam::new(model.params(), config.learning_rate);
    let mut grads = model.params().zero_grads();
    let batch_size = config.batch_size_for(model.has_context());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopper = EarlyStopping::new(config.patience.max(1));
    let mut best_params: Option<ParamSet> = None;
    let mut history = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<(&EncodedInput, bool)> =
                chunk.iter().map(|&i| (&train[i].0, train[i].1)).collect();
            grads.zero();
            loss_sum += model.accumulate_gradients(&batch, &mut grads)? * chunk.len() as f64;
            optimizer.apply(model.params_mut(), &grads);
        }
        let train_loss = loss_sum / train.len() as f64;
        let dev_macro_f1 = if dev.is_empty() {
            None
        } else {
            Some(counts_at(model, dev, config.decision_threshold)?.macro_f1())
        };
        history.push(EpochRecord {
            epoch,
            train_loss,
            dev_macro_f1,
        });
        if let Some(score) = dev_macro_f1 {
            match stopper.observe(epoch, score) {
                StopVerdict::Improved => best_params = Some(model.params().clone()),
                StopVerdict::NoImprovement => {}
                StopVerdict::Stop => {
                    stopped_early = epoch < config.epochs;
                    break;
                }
            }
        }
    }

    let epochs_run = history.len();
    let (best_epoch, best_dev) = match stopper.best() {
        Some((e, s)) => (e, Some(s)),
        None => (epochs_run, None),
    };
    if let Some(best) = best_params {
        model
            .params_mut()
            .load_values(&best)
            .expect("checkpoint shares the model layout");
    }
    Ok(FitReport {
        epochs_run,
        best_epoch,
        best_dev_macro_f1: best_dev,
        stopped_early,
        history,
    })
}
