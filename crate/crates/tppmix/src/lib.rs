//! Clustering of continuous-time event sequences by a mixture of
//! imitation-learned generative policies.
//!
//! The library treats each observed sequence as the work of one of `N`
//! latent stochastic policies over inter-event times. An
//! expectation-maximization loop alternates between assigning sequences to
//! policies with a learned sequence classifier (E-step) and fitting each
//! cluster's policy by adversarial imitation against its assigned sequences
//! (M-step). The crate ships:
//!
//! - [`nn`]: a minimal differentiable substrate (dense layers, recurrent
//!   cells, reverse-mode gradients, an adaptive optimizer, finite-difference
//!   checks, text checkpoints);
//! - [`sim`]: ground-truth sequence generation by Ogata thinning for a
//!   family of intensities, plus empirical-intensity estimation;
//! - [`policy`]: the stochastic recurrent policy over inter-event times;
//! - [`gail`]: adversarial imitation for one cluster — discriminator
//!   updates and policy-gradient updates with causal-entropy regularization;
//! - [`em`]: the outer clustering loop with classifier-based E-steps and an
//!   imbalance-aware augmentation schedule;
//! - [`metrics`]: clustering purity, Rand index, empirical-intensity
//!   deviation and clustering consistency.
//!
//! Everything is deterministic given a seed: parallel sections derive
//! per-task streams through [`seeding`], so reruns are bit-identical.

pub mod em;
pub mod gail;
pub mod metrics;
pub mod nn;
pub mod policy;
pub mod seeding;
pub mod sim;

pub use em::{EmConfig, FitHistory, MixtureState};
pub use gail::{Discriminator, DiscriminatorConfig, GailConfig};
pub use metrics::ClusteringResult;
pub use policy::{ActionDistribution, Policy, PolicyConfig};
pub use sim::{Dataset, EventSequence, IntensitySpec};
