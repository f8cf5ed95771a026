//! Pair z-scores, marginal-based alternatives, article profiles and the
//! four-way novelty/conventionality classification.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Interner};
use crate::covariates::CovariateRow;
use crate::nullmodel::NullStats;
use crate::pairs::{push_pair_codes, PairCounts, PairKey};

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("no null statistics for observed pair ({a}, {b})")]
    MissingNull { a: u32, b: u32 },
    #[error("no scored articles to compute a split threshold from")]
    NoProfiles,
    #[error("no threshold for field \"{0}\"")]
    MissingFieldThreshold(String),
    #[error("bin width must be positive and finite, got {0}")]
    BadBinWidth(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub key: PairKey,
    pub obs: u64,
    pub null_mean: f64,
    pub null_sd: f64,
    pub z: f64,
    pub k50: Option<f64>,
    pub commonality: Option<f64>,
    /// The null sd was zero and replaced by [`NullStats::sd_floor`].
    pub degenerate: bool,
}

/// `z = (obs - mean) / sd`, with a zero sd replaced by the null's sd floor.
pub fn pair_zscores(counts: &PairCounts, nulls: &NullStats) -> Result<Vec<PairScore>, ScoreError> {
    let aligned = nulls.keys() == counts.keys();
    let floor = nulls.sd_floor();
    let lookup: Option<HashMap<PairKey, usize>> =
        (!aligned).then(|| nulls.keys().iter().enumerate().map(|(i, k)| (*k, i)).collect());
    counts
        .iter()
        .enumerate()
        .map(|(i, (key, obs))| {
            let j = match &lookup {
                None => i,
                Some(map) => *map.get(&key).ok_or(ScoreError::MissingNull { a: key.a, b: key.b })?,
            };
            let (mean, sd) = (nulls.mean()[j], nulls.sd()[j]);
            let degenerate = sd == 0.0;
            let z = (obs as f64 - mean) / if degenerate { floor } else { sd };
            Ok(PairScore {
                key,
                obs,
                null_mean: mean,
                null_sd: sd,
                z,
                k50: None,
                commonality: None,
                degenerate,
            })
        })
        .collect()
}

/// Normalization applied to `obs - E` in the K50 statistic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum K50Normalization {
    /// `sqrt(S_i * S_j)`.
    #[default]
    GeometricMarginals,
    /// `sqrt(E_ij)`.
    Expected,
}

fn expected(counts: &PairCounts, key: PairKey) -> (f64, f64) {
    let sums = counts.journal_sums();
    let product = sums[key.a as usize] as f64 * sums[key.b as usize] as f64;
    (product / counts.grand_total() as f64, product)
}

/// K50 per observed pair, with `E_ij = S_i S_j / T`.
pub fn k50_scores(counts: &PairCounts, normalization: K50Normalization) -> Vec<f64> {
    counts
        .iter()
        .map(|(key, obs)| {
            let (e, product) = expected(counts, key);
            let scale = match normalization {
                K50Normalization::GeometricMarginals => product.sqrt(),
                K50Normalization::Expected => e.sqrt(),
            };
            (obs as f64 - e) / scale
        })
        .collect()
}

/// Observed over expected co-occurrence, `obs_ij / E_ij`.
pub fn commonality_scores(counts: &PairCounts) -> Vec<f64> {
    counts
        .iter()
        .map(|(key, obs)| obs as f64 / expected(counts, key).0)
        .collect()
}

/// Fills the optional K50 and commonality columns of `scores` (aligned with `counts`).
pub fn attach_alternative_metrics(scores: &mut [PairScore], counts: &PairCounts, normalization: K50Normalization) {
    let k50 = k50_scores(counts, normalization);
    let commonality = commonality_scores(counts);
    for ((score, k), c) in scores.iter_mut().zip(k50).zip(commonality) {
        score.k50 = Some(k);
        score.commonality = Some(c);
    }
}

pub fn write_pair_scores<W: Write>(scores: &[PairScore], journals: &Interner, out: W) -> io::Result<()> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record([
        "journal_a",
        "journal_b",
        "obs",
        "null_mean",
        "null_sd",
        "z",
        "degenerate",
        "k50",
        "commonality",
    ])?;
    for s in scores {
        writer.write_record([
            journals.name(s.key.a),
            journals.name(s.key.b),
            &s.obs.to_string(),
            &s.null_mean.to_string(),
            &s.null_sd.to_string(),
            &s.z.to_string(),
            &u8::from(s.degenerate).to_string(),
            &opt(s.k50),
            &opt(s.commonality),
        ])?;
    }
    writer.flush()
}

/// Percentile of a sorted sample by linear interpolation between closest
/// ranks at zero-based position `p * (n - 1)`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn median(sorted: &[f64]) -> f64 {
    percentile(sorted, 0.5)
}

/// The four novelty/conventionality combinations; `LnLc` is the reference
/// outcome in multinomial models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    HnHc = 1,
    HnLc = 2,
    LnHc = 3,
    LnLc = 4,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::HnHc, Category::HnLc, Category::LnHc, Category::LnLc];

    pub fn from_bins(novel: bool, conventional: bool) -> Self {
        match (novel, conventional) {
            (true, true) => Category::HnHc,
            (true, false) => Category::HnLc,
            (false, true) => Category::LnHc,
            (false, false) => Category::LnLc,
        }
    }

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn from_number(n: u8) -> Option<Self> {
        Category::ALL.get(usize::from(n).wrapping_sub(1)).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            Category::HnHc => "HN, HC",
            Category::HnLc => "HN, LC",
            Category::LnHc => "LN, HC",
            Category::LnLc => "LN, LC",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub novelty_bin: bool,
    pub conventionality_bin: bool,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleScore {
    pub id: String,
    pub field: String,
    pub n_pairs: usize,
    /// 10th percentile of the article's pair z-scores.
    pub z10: f64,
    /// Median of the article's pair z-scores.
    pub zmed: f64,
    /// Reverse-coded tail score, `-z10`.
    pub novelty: f64,
    pub conventionality: f64,
    pub classification: Option<Classification>,
}

impl ArticleScore {
    pub fn category(&self) -> Option<Category> {
        self.classification.map(|c| c.category)
    }
}

/// Summarizes one article's pair z multiset (with multiplicity).
pub fn article_profile(id: &str, field: &str, mut zs: Vec<f64>) -> Option<ArticleScore> {
    if zs.is_empty() {
        return None;
    }
    zs.sort_by(f64::total_cmp);
    let z10 = percentile(&zs, 0.1);
    let zmed = median(&zs);
    Some(ArticleScore {
        id: id.to_string(),
        field: field.to_string(),
        n_pairs: zs.len(),
        z10,
        zmed,
        novelty: -z10,
        conventionality: zmed,
        classification: None,
    })
}

#[derive(Debug, Clone, Default)]
pub struct Profiles {
    /// Scored articles in corpus order.
    pub scored: Vec<ArticleScore>,
    /// Ids of articles without any scored pair.
    pub excluded: Vec<String>,
}

/// Profiles every article from its pair z-scores (`scores` aligned with `counts`).
pub fn profile_articles(corpus: &Corpus, counts: &PairCounts, scores: &[PairScore]) -> Profiles {
    assert_eq!(counts.len(), scores.len());
    let index = counts.index();
    let options = counts.options();
    let profiles: Vec<Result<ArticleScore, String>> = (0..corpus.len())
        .into_par_iter()
        .with_min_len(64)
        .map_init(Vec::new, |codes, i| {
            codes.clear();
            push_pair_codes(corpus.ref_journals(i), options, codes);
            let zs: Vec<f64> = codes
                .iter()
                .filter_map(|code| index.get(code).map(|&p| scores[p as usize].z))
                .collect();
            let article = &corpus.articles()[i];
            article_profile(&article.id, &article.field, zs).ok_or_else(|| article.id.clone())
        })
        .collect();
    let mut out = Profiles::default();
    for p in profiles {
        match p {
            Ok(score) => out.scored.push(score),
            Err(id) => out.excluded.push(id),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitScope {
    #[default]
    Corpus,
    Field,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SplitThreshold {
    Corpus(f64),
    PerField(BTreeMap<String, f64>),
}

impl SplitThreshold {
    pub fn scope(&self) -> SplitScope {
        match self {
            SplitThreshold::Corpus(_) => SplitScope::Corpus,
            SplitThreshold::PerField(_) => SplitScope::Field,
        }
    }

    pub fn for_field(&self, field: &str) -> Option<f64> {
        match self {
            SplitThreshold::Corpus(t) => Some(*t),
            SplitThreshold::PerField(map) => map.get(field).copied(),
        }
    }

    /// Fields in `fields` that received no threshold (no scored article).
    pub fn omitted_fields<'a>(&self, fields: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        match self {
            SplitThreshold::Corpus(_) => Vec::new(),
            SplitThreshold::PerField(map) => fields
                .into_iter()
                .filter(|f| !map.contains_key(*f))
                .map(str::to_string)
                .collect(),
        }
    }
}

fn sorted_median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    median(&values)
}

/// Median of `zmed` over all profiles, or within each field.
pub fn split_threshold(profiles: &[ArticleScore], scope: SplitScope) -> Result<SplitThreshold, ScoreError> {
    if profiles.is_empty() {
        return Err(ScoreError::NoProfiles);
    }
    Ok(match scope {
        SplitScope::Corpus => SplitThreshold::Corpus(sorted_median(profiles.iter().map(|p| p.zmed).collect())),
        SplitScope::Field => {
            let mut by_field: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for p in profiles {
                by_field.entry(p.field.clone()).or_default().push(p.zmed);
            }
            SplitThreshold::PerField(by_field.into_iter().map(|(f, v)| (f, sorted_median(v))).collect())
        }
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryShares {
    pub counts: [usize; 4],
    pub shares: [f64; 4],
}

impl CategoryShares {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Sets bins and category: HN iff `z10 < 0`, HC iff `zmed >= threshold`.
pub fn classify(profiles: &mut [ArticleScore], threshold: &SplitThreshold) -> Result<CategoryShares, ScoreError> {
    let mut counts = [0usize; 4];
    for p in profiles.iter_mut() {
        let t = threshold
            .for_field(&p.field)
            .ok_or_else(|| ScoreError::MissingFieldThreshold(p.field.clone()))?;
        let novelty_bin = p.z10 < 0.0;
        let conventionality_bin = p.zmed >= t;
        let category = Category::from_bins(novelty_bin, conventionality_bin);
        counts[usize::from(category.number()) - 1] += 1;
        p.classification = Some(Classification {
            novelty_bin,
            conventionality_bin,
            category,
        });
    }
    let n = profiles.len().max(1) as f64;
    Ok(CategoryShares {
        counts,
        shares: counts.map(|c| c as f64 / n),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct ArticleScoreRecord {
    id: String,
    n_pairs: usize,
    z10: f64,
    zmed: f64,
    novelty: f64,
    novelty_bin: u8,
    conventionality_bin: u8,
    category: u8,
}

/// Writes the classified profiles as
/// `id,n_pairs,z10,zmed,novelty,novelty_bin,conventionality_bin,category`.
pub fn write_article_scores<W: Write>(profiles: &[ArticleScore], out: W) -> io::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for p in profiles {
        let c = p.classification.ok_or_else(|| {
            io::Error::new(io::ErrorKind::InvalidInput, format!("article {} is not classified", p.id))
        })?;
        writer.serialize(ArticleScoreRecord {
            id: p.id.clone(),
            n_pairs: p.n_pairs,
            z10: p.z10,
            zmed: p.zmed,
            novelty: p.novelty,
            novelty_bin: u8::from(c.novelty_bin),
            conventionality_bin: u8::from(c.conventionality_bin),
            category: c.category.number(),
        })?;
    }
    writer.flush()
}

/// Reads `article_scores.csv`; the field is not part of that file and is left empty.
pub fn read_article_scores<R: io::Read>(input: R) -> Result<Vec<ArticleScore>, csv::Error> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    reader
        .deserialize::<ArticleScoreRecord>()
        .map(|r| {
            let r = r?;
            let category = Category::from_number(r.category).ok_or_else(|| {
                csv::Error::from(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("article {}: invalid category {}", r.id, r.category),
                ))
            })?;
            Ok(ArticleScore {
                id: r.id,
                field: String::new(),
                n_pairs: r.n_pairs,
                z10: r.z10,
                zmed: r.zmed,
                novelty: r.novelty,
                conventionality: r.zmed,
                classification: Some(Classification {
                    novelty_bin: r.novelty_bin == 1,
                    conventionality_bin: r.conventionality_bin == 1,
                    category,
                }),
            })
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfileRecord {
    id: String,
    field: String,
    n_pairs: usize,
    z10: f64,
    zmed: f64,
}

/// Unclassified profiles (`id,field,n_pairs,z10,zmed`), the hand-off between
/// scoring and classification.
pub fn write_profiles<W: Write>(profiles: &[ArticleScore], out: W) -> io::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for p in profiles {
        writer.serialize(ProfileRecord {
            id: p.id.clone(),
            field: p.field.clone(),
            n_pairs: p.n_pairs,
            z10: p.z10,
            zmed: p.zmed,
        })?;
    }
    writer.flush()
}

pub fn read_profiles<R: io::Read>(input: R) -> Result<Vec<ArticleScore>, csv::Error> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    reader
        .deserialize::<ProfileRecord>()
        .map(|r| {
            let r = r?;
            Ok(ArticleScore {
                id: r.id,
                field: r.field,
                n_pairs: r.n_pairs,
                z10: r.z10,
                zmed: r.zmed,
                novelty: -r.z10,
                conventionality: r.zmed,
                classification: None,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
    pub probability: f64,
}

/// Occupied bins of width `bin_width` anchored at zero.
pub fn histogram(values: &[f64], bin_width: f64) -> Result<Vec<HistogramBin>, ScoreError> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(ScoreError::BadBinWidth(bin_width));
    }
    let mut bins: BTreeMap<i64, usize> = BTreeMap::new();
    for &v in values {
        *bins.entry((v / bin_width).floor() as i64).or_default() += 1;
    }
    let n = values.len() as f64;
    Ok(bins
        .into_iter()
        .map(|(i, count)| HistogramBin {
            left: i as f64 * bin_width,
            right: (i + 1) as f64 * bin_width,
            count,
            probability: count as f64 / n,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupMean {
    pub countries: u32,
    pub mean: f64,
    /// Standard error of the mean; absent for single-article groups.
    pub stderr: Option<f64>,
    pub n: usize,
}

fn group_means(groups: BTreeMap<u32, Vec<f64>>) -> Vec<GroupMean> {
    groups
        .into_iter()
        .map(|(countries, values)| {
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let stderr = (n > 1).then(|| {
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            });
            GroupMean {
                countries,
                mean,
                stderr,
                n,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub z10_histogram: Vec<HistogramBin>,
    pub zmed_histogram: Vec<HistogramBin>,
    /// Mean reverse-coded novelty (`-z10`) by country count.
    pub novelty_by_countries: Vec<GroupMean>,
    pub zmed_by_countries: Vec<GroupMean>,
    /// Article counts per category, by country count.
    pub category_by_countries: Vec<(u32, [usize; 4])>,
}

/// Figure datasets. Articles without a known country count are left out of
/// the grouped series; the histograms use every profile.
pub fn distribution_report(
    profiles: &[ArticleScore],
    covariates: &[CovariateRow],
    bin_width: f64,
) -> Result<DistributionReport, ScoreError> {
    let countries: HashMap<&str, u32> = covariates
        .iter()
        .filter_map(|r| r.countries.map(|c| (r.id.as_str(), c)))
        .collect();
    let z10: Vec<f64> = profiles.iter().map(|p| p.z10).collect();
    let zmed: Vec<f64> = profiles.iter().map(|p| p.zmed).collect();
    let mut novelty: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    let mut median_z: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    let mut categories: BTreeMap<u32, [usize; 4]> = BTreeMap::new();
    for p in profiles {
        let Some(&c) = countries.get(p.id.as_str()) else {
            continue;
        };
        novelty.entry(c).or_default().push(p.novelty);
        median_z.entry(c).or_default().push(p.zmed);
        if let Some(cat) = p.category() {
            categories.entry(c).or_default()[usize::from(cat.number()) - 1] += 1;
        }
    }
    Ok(DistributionReport {
        z10_histogram: histogram(&z10, bin_width)?,
        zmed_histogram: histogram(&zmed, bin_width)?,
        novelty_by_countries: group_means(novelty),
        zmed_by_countries: group_means(median_z),
        category_by_countries: categories.into_iter().collect(),
    })
}

pub fn write_histogram<W: Write>(bins: &[HistogramBin], out: W) -> io::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["bin_left", "bin_right", "probability"])?;
    for b in bins {
        writer.write_record([b.left.to_string(), b.right.to_string(), b.probability.to_string()])?;
    }
    writer.flush()
}

pub fn write_group_means<W: Write>(groups: &[GroupMean], out: W) -> io::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["countries", "mean", "stderr", "n"])?;
    for g in groups {
        writer.write_record([
            g.countries.to_string(),
            g.mean.to_string(),
            g.stderr.map(|s| s.to_string()).unwrap_or_default(),
            g.n.to_string(),
        ])?;
    }
    writer.flush()
}

pub fn write_category_counts<W: Write>(rows: &[(u32, [usize; 4])], out: W) -> io::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["countries", "category", "n"])?;
    for (countries, counts) in rows {
        for (k, n) in counts.iter().enumerate() {
            writer.write_record([countries.to_string(), (k + 1).to_string(), n.to_string()])?;
        }
    }
    writer.flush()
}
