//! Dense-matrix numerics: reverse-mode gradients, MLPs and Adam.

mod adam;
mod gradcheck;
pub mod linalg;
mod matrix;
mod mlp;
mod tape;

pub use adam::{Adam, DEFAULT_LR};
pub use gradcheck::{gradient_check, relative_error, GradCheck};
pub use matrix::Matrix;
pub use mlp::{leaky_relu, BoundMlp, Dense, Mlp, OutputActivation, DEFAULT_HIDDEN, LEAKY_SLOPE};
pub use tape::{cosine_distance, mmd_rbf_value, Gradients, Tape, Var};
pub(crate) use tape::sigmoid;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The crate-wide seeded generator.
pub type Rng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
