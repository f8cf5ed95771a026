//! Synthetic corpora with community structure and a tunable link between
//! team composition and referencing behavior.
//!
//! Journals belong to communities, each community to one field. Every
//! reference is drawn in two steps: first a community (the article's home
//! community with probability `affinity + coupling * (countries - 1) +
//! author_coupling * (authors - 1)`, clamped to `[0, 1]`, otherwise a
//! uniformly chosen one), then a journal within it by Zipf popularity.
//! Home-community pairs come out frequent and conventional, foreign pairs
//! rare.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Article, Corpus, CorpusError, ReferenceSlot};
use crate::geo::GeoTables;
use crate::inference::FieldGroups;
use crate::scores::Category;

/// Field groups assigned to fields in rotation.
pub const FIELD_GROUPS: [&str; 3] = ["Sciences", "Social Sciences", "Arts & Humanities"];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub n_articles: usize,
    pub n_journals: usize,
    pub n_fields: usize,
    pub n_communities: usize,
    /// Zipf exponent of journal popularity within a community.
    pub popularity_exponent: f64,
    /// Baseline probability of drawing a reference from the home community.
    pub affinity: f64,
    /// Change in that probability per additional country.
    pub coupling: f64,
    /// Change in that probability per additional author.
    pub author_coupling: f64,
    /// Relative frequency of articles with 1, 2, ... countries.
    pub country_weights: Vec<f64>,
    /// Mean of the Poisson number of authors beyond one per country.
    pub extra_authors_mean: f64,
    /// Mean references per article (at least one each).
    pub refs_mean: f64,
    pub first_year: i32,
    pub n_years: u32,
    /// Cited years lag the citing year by 0 to `max_lag` years.
    pub max_lag: u32,
    /// Mean citation count of single-country articles; 0 omits citations.
    pub citations_mean: f64,
    /// Log change in expected citations per additional country.
    pub citation_coupling: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_articles: 10_000,
            n_journals: 400,
            n_fields: 8,
            n_communities: 8,
            popularity_exponent: 1.0,
            affinity: 0.95,
            coupling: 0.0,
            author_coupling: 0.0,
            country_weights: vec![0.8, 0.12, 0.05, 0.02, 0.01],
            extra_authors_mean: 3.1,
            refs_mean: 22.0,
            first_year: 2001,
            n_years: 5,
            max_lag: 10,
            citations_mean: 10.0,
            citation_coupling: 0.0,
            seed: 0,
        }
    }
}

impl SynthParams {
    /// Uniform referencing with no coupling.
    pub fn null_world() -> Self {
        Self {
            affinity: 0.0,
            popularity_exponent: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: &str| Err(SynthError::Infeasible(m.to_string()));
        if self.n_articles == 0 {
            return fail("n_articles must be positive");
        }
        if self.n_journals < 2 {
            return fail("at least two journals are needed");
        }
        if self.n_communities == 0 || self.n_communities > self.n_journals {
            return fail("n_communities must lie in 1..=n_journals");
        }
        if self.n_fields == 0 || self.n_fields > self.n_communities {
            return fail("n_fields must lie in 1..=n_communities");
        }
        if !(self.popularity_exponent.is_finite() && self.popularity_exponent >= 0.0) {
            return fail("popularity_exponent must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.affinity) {
            return fail("affinity must lie in [0, 1]");
        }
        if !self.coupling.is_finite() || !self.author_coupling.is_finite() || !self.citation_coupling.is_finite() {
            return fail("couplings must be finite");
        }
        if self.country_weights.is_empty()
            || self.country_weights.iter().any(|w| !w.is_finite() || *w < 0.0)
            || self.country_weights.iter().sum::<f64>() <= 0.0
        {
            return fail("country_weights must be non-negative with a positive sum");
        }
        if self.country_weights.len() > GeoTables::bundled().countries().count() {
            return fail("more country counts than known countries");
        }
        if !(self.extra_authors_mean.is_finite() && self.extra_authors_mean >= 0.0) {
            return fail("extra_authors_mean must be finite and non-negative");
        }
        if !(self.refs_mean.is_finite() && self.refs_mean >= 1.0) {
            return fail("refs_mean must be at least 1");
        }
        if self.refs_mean >= self.n_journals as f64 {
            return fail("refs_mean must be below n_journals");
        }
        if self.n_years == 0 {
            return fail("n_years must be positive");
        }
        if !(self.citations_mean.is_finite() && self.citations_mean >= 0.0) {
            return fail("citations_mean must be finite and non-negative");
        }
        Ok(())
    }

    pub fn journal_name(j: usize) -> String {
        format!("J{j:04}")
    }

    pub fn field_name(f: usize) -> String {
        format!("F{f:02}")
    }

    /// Field of each community's articles and journals.
    pub fn community_field(&self, community: usize) -> usize {
        community % self.n_fields
    }

    pub fn field_groups(&self) -> FieldGroups {
        FieldGroups::new(
            (0..self.n_fields)
                .map(|f| (Self::field_name(f), FIELD_GROUPS[f % FIELD_GROUPS.len()].to_string()))
                .collect::<BTreeMap<_, _>>(),
        )
    }
}

fn article_rng(seed: u64, ordinal: usize) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"atypicality/synth-article/v1");
    hasher.update(seed.to_le_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(digest);
    rng.set_stream(ordinal as u64);
    rng
}

struct Sampler<'a> {
    params: &'a SynthParams,
    /// Journals of each community, most popular first.
    members: Vec<Vec<usize>>,
    popularity: Vec<WeightedIndex<f64>>,
    country_counts: WeightedIndex<f64>,
    countries: Vec<&'static str>,
    names: Vec<String>,
}

impl<'a> Sampler<'a> {
    fn new(params: &'a SynthParams) -> Self {
        let c = params.n_communities;
        let members: Vec<Vec<usize>> = (0..c).map(|k| (k..params.n_journals).step_by(c).collect()).collect();
        let popularity = members
            .iter()
            .map(|m| {
                WeightedIndex::new((0..m.len()).map(|r| ((r + 1) as f64).powf(-params.popularity_exponent)))
                    .expect("positive weights")
            })
            .collect();
        Self {
            params,
            members,
            popularity,
            country_counts: WeightedIndex::new(params.country_weights.iter().copied()).expect("validated"),
            countries: GeoTables::bundled().countries().collect(),
            names: (0..params.n_journals).map(SynthParams::journal_name).collect(),
        }
    }

    fn journal_in(&self, community: usize, rng: &mut ChaCha8Rng) -> usize {
        self.members[community][self.popularity[community].sample(rng)]
    }

    fn article(&self, ordinal: usize) -> Article {
        let p = self.params;
        let mut rng = article_rng(p.seed, ordinal);
        let year = p.first_year + rng.random_range(0..p.n_years) as i32;
        let home = rng.random_range(0..p.n_communities);
        let venue = self.journal_in(home, &mut rng);

        let k = (self.country_counts.sample(&mut rng) + 1).min(self.countries.len());
        let countries = rand::seq::index::sample(&mut rng, self.countries.len(), k)
            .into_iter()
            .map(|i| self.countries[i].to_string())
            .collect();
        let extra = if p.extra_authors_mean > 0.0 {
            Poisson::new(p.extra_authors_mean).expect("validated").sample(&mut rng) as u32
        } else {
            0
        };
        let n_authors = k as u32 + extra;

        let n_refs = 1 + if p.refs_mean > 1.0 {
            Poisson::new(p.refs_mean - 1.0).expect("validated").sample(&mut rng) as usize
        } else {
            0
        };
        let home_prob = (p.affinity + p.coupling * (k as f64 - 1.0) + p.author_coupling * (f64::from(n_authors) - 1.0))
            .clamp(0.0, 1.0);
        let refs = (0..n_refs)
            .map(|_| {
                let community = if rng.random::<f64>() < home_prob {
                    home
                } else {
                    rng.random_range(0..p.n_communities)
                };
                let journal = self.journal_in(community, &mut rng);
                let lag = rng.random_range(0..=p.max_lag) as i32;
                ReferenceSlot {
                    journal: self.names[journal].clone(),
                    year: year - lag,
                }
            })
            .collect();

        let citations = (p.citations_mean > 0.0).then(|| {
            let mean = p.citations_mean * (p.citation_coupling * (k as f64 - 1.0)).exp();
            Poisson::new(mean).expect("positive mean").sample(&mut rng) as u64
        });
        Article {
            id: format!("S{:08}", ordinal + 1),
            year,
            journal: self.names[venue].clone(),
            field: SynthParams::field_name(p.community_field(home)),
            countries,
            n_authors,
            refs,
            citations,
        }
    }
}

/// Samples the articles in ordinal order.
pub fn generate_articles(params: &SynthParams) -> Result<Vec<Article>, SynthError> {
    params.validate()?;
    let sampler = Sampler::new(params);
    Ok((0..params.n_articles)
        .into_par_iter()
        .with_min_len(256)
        .map(|i| sampler.article(i))
        .collect())
}

pub fn generate(params: &SynthParams) -> Result<Corpus, SynthError> {
    Ok(Corpus::from_articles(generate_articles(params)?)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Negative,
    Null,
    Positive,
}

impl Sign {
    fn of(v: f64) -> Self {
        if v > 0.0 {
            Sign::Positive
        } else if v < 0.0 {
            Sign::Negative
        } else {
            Sign::Null
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Negative => Sign::Positive,
            Sign::Null => Sign::Null,
            Sign::Positive => Sign::Negative,
        }
    }

    /// Whether an estimate has this sign (any value matches `Null`).
    pub fn matches(self, estimate: f64) -> bool {
        match self {
            Sign::Negative => estimate < 0.0,
            Sign::Null => true,
            Sign::Positive => estimate > 0.0,
        }
    }
}

/// Coefficient signs implied by the generating parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub countries_novelty: Sign,
    pub countries_conventionality: Sign,
    pub authors_novelty: Sign,
    pub authors_conventionality: Sign,
    /// Category with the largest Countries coefficient against category 4.
    pub countries_category: Option<Category>,
    pub countries_citations: Sign,
}

pub fn planted_truth(params: &SynthParams) -> PlantedTruth {
    let countries = Sign::of(params.coupling);
    let authors = Sign::of(params.author_coupling);
    PlantedTruth {
        countries_novelty: countries.flip(),
        countries_conventionality: countries,
        authors_novelty: authors.flip(),
        authors_conventionality: authors,
        countries_category: match countries {
            Sign::Positive => Some(Category::LnHc),
            Sign::Negative => Some(Category::HnLc),
            Sign::Null => None,
        },
        countries_citations: Sign::of(params.citation_coupling),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthParams {
        SynthParams {
            n_articles: 300,
            seed: 11,
            ..SynthParams::default()
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = generate_articles(&small()).unwrap();
        let b = generate_articles(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_articles(&SynthParams { seed: 12, ..small() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_article_corpus() {
        let corpus = generate(&SynthParams { n_articles: 1, ..small() }).unwrap();
        assert_eq!(corpus.len(), 1);
        assert!(!corpus.articles()[0].refs.is_empty());
    }

    #[test]
    fn articles_respect_parameters() {
        let p = small();
        let geo = GeoTables::bundled();
        for a in generate_articles(&p).unwrap() {
            assert!((p.first_year..p.first_year + p.n_years as i32).contains(&a.year));
            assert!(!a.countries.is_empty() && a.countries.len() <= p.country_weights.len());
            assert!(a.countries.iter().all(|c| geo.is_known(c)));
            assert!(a.n_authors as usize >= a.countries.len());
            for r in &a.refs {
                assert!(r.year <= a.year && r.year >= a.year - p.max_lag as i32);
            }
            assert!(a.citations.is_some());
        }
    }

    #[test]
    fn mean_references_near_target() {
        let articles = generate_articles(&SynthParams { n_articles: 4000, ..small() }).unwrap();
        let mean = articles.iter().map(|a| a.refs.len()).sum::<usize>() as f64 / articles.len() as f64;
        assert!((mean - 22.0).abs() < 0.3, "{mean}");
    }

    #[test]
    fn infeasible_parameters_are_rejected() {
        for bad in [
            SynthParams { refs_mean: 400.0, ..small() },
            SynthParams { affinity: 1.5, ..small() },
            SynthParams { n_fields: 9, ..small() },
            SynthParams { country_weights: vec![0.0, 0.0], ..small() },
            SynthParams { n_articles: 0, ..small() },
        ] {
            assert!(matches!(generate(&bad), Err(SynthError::Infeasible(_))), "{bad:?}");
        }
    }

    #[test]
    fn truth_follows_coupling_sign() {
        let pos = planted_truth(&SynthParams { coupling: 0.1, ..small() });
        assert_eq!(pos.countries_conventionality, Sign::Positive);
        assert_eq!(pos.countries_novelty, Sign::Negative);
        assert_eq!(pos.countries_category, Some(Category::LnHc));
        let neg = planted_truth(&SynthParams { coupling: -0.1, ..small() });
        assert_eq!(neg.countries_conventionality, Sign::Negative);
        assert_eq!(neg.countries_novelty, Sign::Positive);
        let zero = planted_truth(&small());
        assert_eq!(zero.countries_conventionality, Sign::Null);
        assert_eq!(zero.countries_category, None);
    }
}
