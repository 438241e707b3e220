//! Learned Koopman representation: a lifted state `Z = [x; psi(x)]` that
//! evolves linearly as `Z' = A Z + B u`, with `x` recovered by taking the
//! leading block of `Z`.

mod encoder;
mod loss;
mod model;
mod train;

pub use encoder::{Activation, Encoder, EncoderCache, Layer};
pub use loss::{
    batch_loss, flatten_params, loss_and_gradients, unflatten_params, weighted_loss, Gradients,
    Window,
};
pub use model::{encode, project, rollout, step, KoopmanModel, KoopmanOperator, Lifting, Rollout};
pub use train::{dataset_loss, init_model, make_windows, train, train_from, Adam, TrainConfig, TrainOutcome};
