//! Feed-forward networks, observation loss and training.

pub mod checkpoint;
pub mod mlp;
pub mod optim;

pub use checkpoint::{from_named, read_checkpoint, to_named, write_checkpoint, write_history, NamedTensor};
pub use mlp::{mlp_eval, mlp_forward, mlp_forward_tangent, observation_loss, Activation, InputMap, MlpSpec, MlpVars, OutputScale};
pub use optim::{lbfgs, train, Adam, AdamConfig, LbfgsConfig, Objective, TrainConfig, TrainOutcome};
