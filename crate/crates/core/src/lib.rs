//! Mining question–tag–answer corpora into a taxonomy of software tasks.
//!
//! The crate is organised as a sequence of stages, each a module:
//!
//! * [`corpus`]: ingest and validate questions, answers, tags and auxiliary files.
//! * [`blockmodel`]: bipartite stochastic block model inference by description length.
//! * [`taxonomy`]: over-representation pruning of tag communities into tasks.
//! * [`activity`]: user task-experience vectors over rolling windows.
//! * [`relatedness`]: co-occurrence, clipped PMI relatedness and densities.
//! * [`valuation`]: survey matching and task values.
//! * [`jobmatch`]: embedding-based job requirement matching and masked prediction.
//! * [`econometrics`]: fixed-effects OLS, 2SLS and the analysis dataset builders.
//! * [`structure`]: task–language matrices, NODF nestedness and language rankings.
//! * [`pipeline`]: config, manifests and the end-to-end stage runner.
//!
//! [`synth`] holds seeded generators for planted models and the bundled mini corpus.

pub mod activity;
pub mod blockmodel;
pub mod corpus;
pub mod econometrics;
mod error;
pub mod jobmatch;
pub mod lnfact;
pub mod pipeline;
pub mod relatedness;
pub mod structure;
pub mod synth;
pub mod taxonomy;
pub mod valuation;

pub use error::{Error, Result};

pub use blockmodel::{BipartiteGraph, DescriptionLength, Partition, SbmConfig};
pub use corpus::{Answer, Corpus, Question, Tag};

pub use activity::{ExperienceVector, TaskIndex, TimeWindow, UserTaskMatrix};
pub use relatedness::{CooccurrenceCounts, RelatednessMatrix};
pub use taxonomy::TaskTaxonomy;
pub use econometrics::{EstimationResult, Frame, RegressionSpec};
