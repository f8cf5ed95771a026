//! In-memory composition of the stages, from corpus to analysis table.

use thiserror::Error;

use crate::corpus::Corpus;
use crate::covariates::{derive_covariates, join, CovariateError, Joined};
use crate::geo::GeoTables;
use crate::nullmodel::{null_distribution, NullConfig, NullModelError, NullStats};
use crate::pairs::{count_pairs_with, PairCounts, PairOptions};
use crate::scores::{
    attach_alternative_metrics, classify, pair_zscores, profile_articles, split_threshold, CategoryShares,
    K50Normalization, PairScore, Profiles, ScoreError, SplitScope, SplitThreshold,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Null(#[from] NullModelError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Covariates(#[from] CovariateError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScoreConfig {
    pub pairs: PairOptions,
    pub null: NullConfig,
    /// Also compute K50 and commonality per pair.
    pub alternative_metrics: bool,
}

#[derive(Debug, Clone)]
pub struct Scored {
    pub counts: PairCounts,
    pub nulls: NullStats,
    pub pair_scores: Vec<PairScore>,
    pub profiles: Profiles,
}

pub fn score_corpus(corpus: &Corpus, config: &ScoreConfig) -> Result<Scored, PipelineError> {
    let counts = count_pairs_with(corpus, config.pairs);
    let nulls = null_distribution(corpus, &counts, config.null)?;
    let mut pair_scores = pair_zscores(&counts, &nulls)?;
    if config.alternative_metrics {
        attach_alternative_metrics(&mut pair_scores, &counts, K50Normalization::default());
    }
    let profiles = profile_articles(corpus, &counts, &pair_scores);
    Ok(Scored {
        counts,
        nulls,
        pair_scores,
        profiles,
    })
}

/// Median split and classification of every scored profile.
pub fn classify_profiles(
    profiles: &mut Profiles,
    scope: SplitScope,
) -> Result<(SplitThreshold, CategoryShares), PipelineError> {
    let threshold = split_threshold(&profiles.scored, scope)?;
    let shares = classify(&mut profiles.scored, &threshold)?;
    Ok((threshold, shares))
}

/// Joins classified profiles with the corpus covariates.
pub fn analysis_table(corpus: &Corpus, profiles: &Profiles, geo: &GeoTables) -> Result<Joined, PipelineError> {
    let covariates = derive_covariates(corpus, geo);
    Ok(join(&profiles.scored, &covariates.rows)?)
}
