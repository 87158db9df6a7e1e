//! Main model, discriminator ensemble, adversarial objectives and training.

mod checkpoint;
mod model;
mod objective;
mod train;

pub use checkpoint::Checkpoint;
pub use model::{derive_seed, disc_forward, main_forward, Discriminator, EncoderClassifier, MainModel};
pub use objective::{difference_loss, ensemble_adv_loss, grl_backward};
pub use train::{
    accumulate_gradients, accuracy, adversarial_train_step, apply_updates, select_checkpoint, train_run,
    AdversarialConfig, AdversarialModel, EpochRecord, Method, StepLosses, TrainOutcome,
};
