use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{CellType, ClassifierHead, ContextEncoder, UtteranceEncoder};
use super::params::{Grads, ParamId, ParamSet};
use super::tape::{bce_with_logit, sigmoid, Tape, Var};
use super::text::{EncodedInput, Featurizer};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("input has {0} utterances but the model has no context encoder")]
    VariantMismatch(usize),
    #[error("input has no utterances")]
    EmptyInput,
}

/// Architecture hyperparameters. Two models built from equal configs and
/// seeds have identical parameter layouts and initial values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Identifier of the utterance-encoder checkpoint recorded in manifests.
    pub encoder_checkpoint: String,
    pub featurizer: Featurizer,
    pub embed_dim: usize,
    pub utterance_dim: usize,
    pub context_hidden: usize,
    pub context_layers: usize,
    pub cell: CellType,
    pub head_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::small()
    }
}

impl ModelConfig {
    /// Desk-scale widths suitable for CPU training.
    pub fn small() -> Self {
        ModelConfig {
            encoder_checkpoint: "hashbag-small".to_string(),
            featurizer: Featurizer::default(),
            embed_dim: 32,
            utterance_dim: 32,
            context_hidden: 32,
            context_layers: 2,
            cell: CellType::Gru,
            head_hidden: 32,
        }
    }

    /// Full-size widths: 768-wide two-layer GRU context encoder and
    /// classifier.
    pub fn reference() -> Self {
        ModelConfig {
            encoder_checkpoint: "hashbag-768".to_string(),
            featurizer: Featurizer {
                buckets: 1 << 15,
                ..Featurizer::default()
            },
            embed_dim: 128,
            utterance_dim: 768,
            context_hidden: 768,
            context_layers: 2,
            cell: CellType::Gru,
            head_hidden: 768,
        }
    }
}

/// Utterance encoder, optional recurrent context encoder and a two-layer
/// classification head producing one probability per input.
#[derive(Clone, Debug)]
pub struct SequenceClassifier {
    config: ModelConfig,
    params: ParamSet,
    encoder: UtteranceEncoder,
    context: Option<ContextEncoder>,
    head: ClassifierHead,
}

impl SequenceClassifier {
    pub fn new(config: &ModelConfig, with_context: bool, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let encoder = UtteranceEncoder::new(
            &mut params,
            config.featurizer.buckets as usize,
            config.embed_dim,
            config.utterance_dim,
            &mut rng,
        );
        let context = with_context.then(|| {
            ContextEncoder::new(
                &mut params,
                config.cell,
                config.utterance_dim,
                config.context_hidden,
                config.context_layers,
                &mut rng,
            )
        });
        let head_input = if with_context {
            config.context_hidden
        } else {
            config.utterance_dim
        };
        let head = ClassifierHead::new(&mut params, head_input, config.head_hidden, &mut rng);
        SequenceClassifier {
            config: config.clone(),
            params,
            encoder,
            context,
            head,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn has_context(&self) -> bool {
        self.context.is_some()
    }

    pub fn featurizer(&self) -> &Featurizer {
        &self.config.featurizer
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn head_params(&self) -> Vec<ParamId> {
        self.head.param_ids()
    }

    pub fn check_input(&self, input: &EncodedInput) -> Result<(), ModelError> {
        match input.utterances.len() {
            0 => Err(ModelError::EmptyInput),
            n if n > 1 && self.context.is_none() => Err(ModelError::VariantMismatch(n)),
            _ => Ok(()),
        }
    }

    pub fn forward(&self, tape: &mut Tape, input: &EncodedInput) -> Result<Var, ModelError> {
        self.check_input(input)?;
        let vectors: Vec<Var> = input
            .utterances
            .iter()
            .map(|u| self.encoder.forward(tape, u))
            .collect();
        let summary = match &self.context {
            Some(ctx) => ctx.forward(tape, &vectors),
            None => vectors[0],
        };
        Ok(self.head.forward(tape, summary))
    }

    pub fn logit(&self, input: &EncodedInput) -> Result<f64, ModelError> {
        let mut tape = Tape::new(&self.params);
        let out = self.forward(&mut tape, input)?;
        Ok(tape.value(out)[0])
    }

    pub fn predict(&self, input: &EncodedInput) -> Result<f64, ModelError> {
        self.logit(input).map(sigmoid)
    }

    /// Adds the mean-loss gradient over `batch` into `grads` and returns the
    /// mean loss.
    pub fn accumulate_gradients(
        &self,
        batch: &[(&EncodedInput, bool)],
        grads: &mut Grads,
    ) -> Result<f64, ModelError> {
        if batch.is_empty() {
            return Ok(0.0);
        }
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for (input, label) in batch {
            let mut tape = Tape::new(&self.params);
            let out = self.forward(&mut tape, input)?;
            let (loss, dlogit) = bce_with_logit(tape.value(out)[0], *label);
            total += loss;
            tape.backward(out, &[dlogit * scale], grads);
        }
        Ok(total * scale)
    }

    pub fn batch_loss(&self, batch: &[(&EncodedInput, bool)]) -> Result<f64, ModelError> {
        let mut total = 0.0;
        for (input, label) in batch {
            total += bce_with_logit(self.logit(input)?, *label).0;
        }
        Ok(total / batch.len().max(1) as f64)
    }
}
