//! Representation diagnostics: centered kernel alignment between layers and
//! branches, and token-level cross-lingual alignment.

mod align;
mod cka;
mod layers;

pub use align::{token_alignment, AlignmentMatrix};
pub use cka::{cka, double_center, hsic, kernel_matrix, CkaConfig, Kernel};
pub use layers::{layer_cka_report, layer_labels, layer_representations, LayerCkaReport};
