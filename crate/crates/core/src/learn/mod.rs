//! Function approximation and Q-learning.

mod dqn;
mod env;
mod mlp;
mod model_io;
mod replay;
mod score;
mod tabular;

pub use dqn::{
    q_update, q_update_sgd, td_target, train_dqn, ActionMask, CurvePoint, DqnOutcome, DqnPolicy, TrainConfig,
    Transition, UpdateScratch, CURVE_WINDOW,
};
pub use env::{LearnerEnv, RewardMode};
pub use mlp::{Approximator, ForwardCache, Gradients, Layer, Optimizer, OptimizerKind};
pub use model_io::{write_mse_curve, write_score_curve, ModelFile, ModelKind, SCHEMA_VERSION};
pub use replay::ReplayBuffer;
pub use score::{score_dataset, train_score_model, MsePoint, Sample, ScoreConfig, ScorePredictor, ScoreReport};
pub use tabular::{state_key, tabular_q_learn, QTable, StateKey, TabularConfig, TabularOutcome, TabularPolicy};

pub(crate) use tabular::linear_epsilon;
