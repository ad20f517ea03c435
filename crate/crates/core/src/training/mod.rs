//! Adam on the halved MSE: batching, the epoch loop and training history.

mod adam;
mod fit;
mod history;
mod loss;

pub use adam::{adam_step, AdamState, TrainConfig};
pub use fit::{dataset_mse, fit, train_epoch, train_loop, training_rng, FitOutput};
pub use history::{EpochRecord, TrainingHistory};
pub use loss::{final_step, mse_loss};
