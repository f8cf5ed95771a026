//! Journal co-citation novelty and conventionality measurement.
//!
//! The pipeline runs from bibliographic records ([`corpus`]) to journal-pair
//! counts ([`pairs`]), a year-stratified Monte Carlo null model
//! ([`nullmodel`]), pair z-scores and article profiles ([`scores`]),
//! regression covariates ([`covariates`]) and the estimators in
//! [`inference`]. [`synth`] generates corpora with planted structure.

pub mod corpus;
pub mod geo;
pub mod nullmodel;
pub mod pairs;
pub mod pipeline;
pub mod scores;
pub mod covariates;
pub mod inference;
pub mod synth;
