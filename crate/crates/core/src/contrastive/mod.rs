//! Symmetric InfoNCE training of the SMILES and IUPAC branches.

mod checkpoint;
mod infonce;
mod train;

pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, CHECKPOINT_KIND};
pub use infonce::{cosine_matrix, infonce_batch, infonce_on_tape, infonce_values, InfoNceOutput, InfoNceVars};
pub use train::{
    epoch_means, loss_and_grads, loss_curve_csv, DualEncoder, LossRecord, PairBatch, PairExample, TrainConfig, Trainer,
};
