//! Networks with hand-written backpropagation, and the Adam optimizer.

mod adam;
mod dense;
pub mod gradcheck;
mod mlp;

pub use adam::{Adam, AdamConfig};
pub use dense::{Dense, Gradients, Parameterized};
pub use gradcheck::{check_gradients, GradCheckReport};
pub use mlp::{ConditionalMlp, EmbeddingMode, ForwardCache, MlpConfig};
