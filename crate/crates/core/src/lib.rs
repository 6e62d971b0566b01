//! Causal mediation analysis for GPT2-style language models.

pub mod checkpoint;
pub mod cli;
pub mod datasets;
pub mod effects;
pub mod error;
pub mod mediation;
pub mod model;
pub mod selection;
pub mod tensor;
pub mod tokenizer;
pub mod toy;

pub use checkpoint::{Checkpoint, ModelConfig};
pub use effects::{CandidateDistribution, Metric};
pub use error::{Error, Result};
pub use mediation::{EffectKind, EffectMap, Mediator, Runner, Unit};
pub use model::{InterventionSpec, MediatorCoord, Model, Trace};
pub use tensor::Tensor;
pub use tokenizer::Vocabulary;
