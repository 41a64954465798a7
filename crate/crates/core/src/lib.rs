//! Counterfactually fair prediction from observational data.
//!
//! The pipeline has two stages. A variational autoencoder learns latent
//! embeddings of `(X, Y)` that carry no sensitive-attribute information and
//! decodes them under every sensitive value to produce counterfactual
//! training data ([`augment`]). A representation learner is then trained with
//! a per-subgroup invariance penalty plus a counterfactual consistency term on
//! those augmented samples ([`fairrep`]).
//!
//! Supporting modules provide a linear-Gaussian structural causal model engine
//! used as ground truth and by the causal baselines ([`scm`], [`baselines`]),
//! fairness and accuracy metrics ([`metrics`]), data handling ([`data`]) and
//! the experiment harness ([`harness`]).

pub mod augment;
pub mod baselines;
pub mod data;
pub mod error;
pub mod fairrep;
pub mod harness;
pub mod metrics;
pub mod numerics;
pub mod scm;

pub use error::{Error, Result};
pub use numerics::Matrix;
