//! Generalized labeled multi-Bernoulli (GLMB) filtering for multiple
//! maneuvering targets whose dynamics follow a jump Markov system.

pub mod gaussian;
pub mod jms;
pub mod serde_mat;
pub mod assignment;
pub mod glmb;
pub mod metrics;
pub mod simulator;
