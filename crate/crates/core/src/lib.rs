//! Informative semi-factual explanations for tabular classifiers.
//!
//! A semi-factual answers "even if": it pushes one key feature of a query as
//! far as possible while the model keeps its prediction. This crate searches
//! for such points with a constrained NSGA-II, then walks the straight path
//! from the query to each candidate and tracks every feature's pure main
//! effect (the diagonal of the Shapley interaction matrix). Candidates whose
//! key-feature contribution trends down are kept, and the feature whose
//! contribution trends up the most is reported as the hidden feature that
//! holds the outcome in place.
//!
//! The pieces are usable on their own:
//!
//! * [`data`]: schema-driven CSV ingestion, normalization, splits and a
//!   synthetic loan scenario.
//! * [`models`]: a bagged CART forest and a logistic surrogate.
//! * [`attribution`]: interventional Shapley values, interaction indices and
//!   main effects.
//! * [`density`]: Gaussian copula density and the plausibility band.
//! * [`trend`]: Mann-Kendall statistic and Kendall's tau-b.
//! * [`moo`]: NSGA-II with constraint domination.
//! * [`isf`]: the explanation pipeline.
//! * [`baselines`]: MDN, KLEOR Attr-Sim, Local-Region and DSER.
//! * [`evaluation`]: explanation metrics and the seesaw audit.
//! * [`bench`]: ISF against the baselines on a batch of queries.
//! * [`cli`]: the commands behind the `semifax` binary.

pub mod attribution;
pub mod baselines;
pub mod bench;
pub mod cli;
pub mod data;
pub mod density;
mod error;
pub mod evaluation;
pub mod isf;
pub mod models;
pub mod moo;
pub mod rng;
pub mod trend;

pub use error::{Error, Result};
