//! Latent-variable structured prediction trained by maximising loss over
//! random structured outputs and latent variables.
//!
//! The crate is organised bottom-up:
//!
//! * [`structures`] — output families (directed spanning trees, DAGs,
//!   cardinality-constrained sets, permutations), latent spaces,
//!   enumeration, sampling, local moves, distortions and β constants.
//! * [`features`] — feature maps, scores, best latent and margin.
//! * [`inference`] — exact and proposal-set decoding.
//! * [`sampling`] — the greedy local proposal sampler and proposal sets.
//! * [`learning`] — randomized slack, all-outputs slack and margin
//!   re-scaling objectives with subgradient training.
//! * [`bounds`] — Gaussian-perturbation (PAC-Bayes) diagnostics.
//! * [`verification`] — exact oracles for the proposal-distribution claims.
//! * [`harness`] — synthetic data, experiments, persistence.

pub mod bounds;
pub mod error;
pub mod features;
pub mod harness;
pub mod inference;
pub mod learning;
pub mod rng;
pub mod sampling;
pub mod structures;
pub mod verification;

pub use error::{Error, Result};
pub use features::{FeatureMap, FeatureMapSpec, FeatureVector, InputX, Keypoints, MatchingMap, ModelParams, SyntheticMap, TableMap};
pub use inference::{exact_decode, random_decode, Decoding};
pub use learning::{train, Method, ProposalSizeRule, Sample, TrainConfig, TrainReport};
pub use sampling::{build_proposal_set, greedy_local_sample, proposal_set_size, ProposalSet};
pub use structures::{DistortionKind, LatentKind, Output, StructureKind, StructureSpace, StructuredPoint};
