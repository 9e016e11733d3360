//! Desk-scale decoder-only transformer used to probe context extension:
//! needle-in-a-haystack retrieval, sliding-window perplexity, and the
//! visual/language modality gap.

mod config;
mod eval;
mod model;
mod niah;
mod train;

pub use config::ModelConfig;
pub use eval::{modality_gap, sliding_window_nll, sliding_window_perplexity, ModalityGap};
pub use model::{greedy_next_token, loss_and_gradients, DecoderWeights, Sequence};
pub use niah::{generate_episode, niah_eval, EvalGrid, NiahEpisode, NiahSpec};
pub use train::{train, ProgressFn, TrainHyperparams};
