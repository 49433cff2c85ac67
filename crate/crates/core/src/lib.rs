//! Almost-exact matching with replacement on categorical covariates.
//!
//! Units are matched on as many (weighted) covariates as possible by walking
//! a downward-closed lattice of dropped-covariate sets, then conditional
//! average treatment effects are read off the matched groups.

pub mod bitgroup;
pub mod cli;
pub mod covset;
pub mod data;
pub mod engine;
pub mod estimate;
pub mod error;
pub mod holdout;
pub mod io;
pub mod lattice;
pub mod oracle;
pub mod state;
pub mod synthgen;

pub use covset::{indicator_of, set_weight, CovariateSet, IndicatorVector, WeightVector};
pub use data::{validate_dataset, CovariateSpec, Dataset};
pub use engine::{run, EngineConfig, MatchResult, SelectionMode, StopReason, StopRules};
pub use error::{AemrError, Result, ValidationIssue};
pub use state::{GroupId, IterationRecord, MatchState, MatchedGroup};
pub use estimate::{ate, estimate_all, group_cate, CateRecord};
pub use io::CsvOptions;
pub use oracle::{brute_enumerate, brute_pairwise, check_equivalence, EquivalenceReport};
pub use synthgen::{gen_missing_correlated, gen_outcome, gen_scenario, DgpSpec, Generated, Scenario};
