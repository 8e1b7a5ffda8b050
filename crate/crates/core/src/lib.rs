//! Counterfactual perturbation toolkit: parsing, alignment, control codes,
//! infilling prompts, backend clients, candidate generation, selection,
//! intrinsic metrics and template mining.

pub mod backends;
pub mod config;
pub mod corpus;
pub mod ctrlcode;
pub mod diff;
pub mod metrics;
pub mod pipeline;
pub mod prompting;
pub mod selection;
pub mod templates;
pub mod workflow;

pub use corpus::{Dataset, Sentence, Token, TokenRange};
pub use ctrlcode::{ClassifierConfig, ControlCode};
pub use diff::{EditKind, EditSpan, Perturbation};
pub use config::Config;
pub use pipeline::Candidate;
