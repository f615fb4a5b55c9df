//! Reweighted Bayesian Personalized Ranking for implicit-feedback recommenders.
//!
//! The crate covers a full experiment pipeline:
//!
//! - [`interactions`]: bipartite user-item datasets, user activity levels,
//!   item-popularity preferences, and the power/light x mainstream/niche
//!   user quadrants.
//! - [`nullmodel`]: degree-preserving edge rewiring (bipartite configuration
//!   model) and significance grids of observed-vs-null user counts.
//! - [`recmodels`]: matrix-factorization and light graph-convolution score
//!   models with analytic gradients and Adam/SGD optimizers.
//! - [`training`]: the reweighted BPR loss with a user-activity exponent
//!   `alpha` (realized through per-user sampling budgets) and an
//!   item-popularity exponent `beta` (realized through loss weights).
//! - [`metrics`]: Recall@k / Precision@k / NDCG@k and the
//!   popularity-opportunity bias, overall and per user quadrant.
//! - [`harness`]: the `rebpr` CLI commands (`analyze`, `train`, `grid`,
//!   `report`) and their CSV/JSON outputs.
//! - [`synthetic`]: seeded generators for popularity-skewed datasets used by
//!   the test suites and for quick experiments.

pub mod error;
pub mod harness;
pub mod interactions;
pub mod metrics;
pub mod nullmodel;
pub mod recmodels;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
pub use interactions::{InteractionDataset, Quadrant, UserProfile};
pub use recmodels::{EmbeddingModel, ModelKind, ScoreSnapshot};
pub use training::{ReweightConfig, SamplingPlan, Triplet, Variant};
