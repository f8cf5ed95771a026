//! Year-stratified reference shuffling and per-pair null statistics.
//!
//! Reference slots are partitioned by (citing year, cited year). A realization
//! permutes the journals inside every stratum independently, so each article
//! keeps its reference count and every stratum keeps its journal multiset.
//! Each (seed, stratum, realization) triple owns its own ChaCha stream, which
//! makes a realization a pure function of its inputs regardless of how the
//! work is scheduled.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Corpus, Interner};
use crate::pairs::{push_pair_codes, PairCounts, PairKey, PairOptions, SelfPairs, PairMode};

/// Default number of Monte Carlo realizations.
pub const DEFAULT_REALIZATIONS: usize = 10;

/// Largest stratum the exact enumeration accepts.
pub const EXACT_MAX_STRATUM: usize = 8;

/// Upper bound on the number of joint arrangements enumerated by [`exact_null`].
pub const EXACT_MAX_ARRANGEMENTS: u128 = 5_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NullModelError {
    #[error("at least 2 realizations are required, got {0}")]
    TooFewRealizations(usize),
    #[error("stratum {citing_year}/{cited_year} has {slots} slots; exact enumeration allows at most {max}")]
    StratumTooLarge {
        citing_year: i32,
        cited_year: i32,
        slots: usize,
        max: usize,
    },
    #[error("exact enumeration needs {0} arrangements, above the limit of {EXACT_MAX_ARRANGEMENTS}")]
    TooManyArrangements(u128),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StratumKey {
    pub citing_year: i32,
    pub cited_year: i32,
}

/// Reference slots sharing a (citing year, cited year) key.
#[derive(Debug, Clone)]
pub struct ShuffleStratum {
    pub key: StratumKey,
    /// Flat slot positions (see [`Corpus::slot_journals`]), ascending.
    pub slots: Vec<usize>,
    /// Observed journal at each position, parallel to `slots`.
    pub journals: Vec<u32>,
}

impl ShuffleStratum {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// (article ordinal, slot ordinal within the article) of the i-th slot.
    pub fn position(&self, corpus: &Corpus, i: usize) -> (usize, usize) {
        let flat = self.slots[i];
        let offsets = corpus.slot_offsets();
        let article = offsets.partition_point(|&o| o <= flat) - 1;
        (article, flat - offsets[article])
    }
}

/// Partitions every reference slot by (citing year, cited year), ordered by key.
pub fn build_strata(corpus: &Corpus) -> Vec<ShuffleStratum> {
    let mut strata: BTreeMap<StratumKey, ShuffleStratum> = BTreeMap::new();
    let journals = corpus.slot_journals();
    for (i, article) in corpus.articles().iter().enumerate() {
        for (slot, flat) in article.refs.iter().zip(corpus.slot_range(i)) {
            let key = StratumKey {
                citing_year: article.year,
                cited_year: slot.year,
            };
            let stratum = strata.entry(key).or_insert_with(|| ShuffleStratum {
                key,
                slots: Vec::new(),
                journals: Vec::new(),
            });
            stratum.slots.push(flat);
            stratum.journals.push(journals[flat]);
        }
    }
    strata.into_values().collect()
}

fn stratum_rng(seed: u64, key: StratumKey, realization: usize) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"atypicality/null-stratum/v1");
    hasher.update(seed.to_le_bytes());
    hasher.update(key.citing_year.to_le_bytes());
    hasher.update(key.cited_year.to_le_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(digest);
    rng.set_stream(realization as u64);
    rng
}

/// Journal assignment for realization `r`: the observed flat slot array with
/// every stratum's journals permuted uniformly at random.
pub fn shuffle_realization(corpus: &Corpus, strata: &[ShuffleStratum], seed: u64, r: usize) -> Vec<u32> {
    let mut assignment = corpus.slot_journals().to_vec();
    let mut scratch = Vec::new();
    for stratum in strata {
        if stratum.len() < 2 {
            continue;
        }
        scratch.clear();
        scratch.extend_from_slice(&stratum.journals);
        scratch.shuffle(&mut stratum_rng(seed, stratum.key, r));
        for (&pos, &journal) in stratum.slots.iter().zip(&scratch) {
            assignment[pos] = journal;
        }
    }
    assignment
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NullConfig {
    pub realizations: usize,
    pub seed: u64,
}

impl Default for NullConfig {
    fn default() -> Self {
        Self {
            realizations: DEFAULT_REALIZATIONS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub enum NullSource {
    /// Per-pair realization counts, pair-major (`counts[pair * R + r]`).
    MonteCarlo {
        realizations: usize,
        seed: u64,
        counts: Vec<u32>,
    },
    /// Full enumeration over every joint arrangement of the strata.
    Exact { arrangements: u128 },
}

/// Null mean and population standard deviation for every observed pair,
/// aligned with [`PairCounts::keys`].
#[derive(Debug, Clone)]
pub struct NullStats {
    keys: Vec<PairKey>,
    mean: Vec<f64>,
    sd: Vec<f64>,
    source: NullSource,
}

fn moments(sum: u128, sum_sq: u128, n: u128) -> (f64, f64) {
    let mean = sum as f64 / n as f64;
    // n * sum_sq - sum^2 is an exact non-negative integer.
    let numerator = n * sum_sq - sum * sum;
    let sd = (numerator as f64).sqrt() / n as f64;
    (mean, sd)
}

impl NullStats {
    /// Builds statistics from pair-major realization counts (`counts[pair * R + r]`).
    pub fn from_realization_counts(keys: Vec<PairKey>, realizations: usize, seed: u64, counts: Vec<u32>) -> Self {
        assert_eq!(counts.len(), keys.len() * realizations);
        let r = realizations as u128;
        let (mean, sd) = counts
            .chunks_exact(realizations)
            .map(|row| {
                let sum: u128 = row.iter().map(|&c| u128::from(c)).sum();
                let sum_sq: u128 = row.iter().map(|&c| u128::from(c) * u128::from(c)).sum();
                moments(sum, sum_sq, r)
            })
            .unzip();
        Self {
            keys,
            mean,
            sd,
            source: NullSource::MonteCarlo {
                realizations,
                seed,
                counts,
            },
        }
    }

    pub fn keys(&self) -> &[PairKey] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn sd(&self) -> &[f64] {
        &self.sd
    }

    pub fn source(&self) -> &NullSource {
        &self.source
    }

    /// Number of Monte Carlo realizations, if this is a sampled null.
    pub fn realizations(&self) -> Option<usize> {
        match self.source {
            NullSource::MonteCarlo { realizations, .. } => Some(realizations),
            NullSource::Exact { .. } => None,
        }
    }

    /// Counts of pair `i` in each realization.
    pub fn realization_counts(&self, i: usize) -> Option<&[u32]> {
        match &self.source {
            NullSource::MonteCarlo {
                realizations, counts, ..
            } => Some(&counts[i * realizations..(i + 1) * realizations]),
            NullSource::Exact { .. } => None,
        }
    }

    /// Replacement for a zero standard deviation: half the count resolution
    /// of the null sample, `1 / (2R)`.
    pub fn sd_floor(&self) -> f64 {
        match self.source {
            NullSource::MonteCarlo { realizations, .. } => 1.0 / (2.0 * realizations as f64),
            NullSource::Exact { arrangements } => 1.0 / (2.0 * arrangements as f64),
        }
    }

    /// Writes `journal_a,journal_b,obs,null_mean,null_sd,R,seed`.
    pub fn write_csv<W: Write>(&self, observed: &PairCounts, journals: &Interner, out: W) -> io::Result<()> {
        let (r, seed) = match self.source {
            NullSource::MonteCarlo { realizations, seed, .. } => (realizations.to_string(), seed.to_string()),
            NullSource::Exact { .. } => ("exact".to_string(), String::new()),
        };
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["journal_a", "journal_b", "obs", "null_mean", "null_sd", "R", "seed"])?;
        for (i, key) in self.keys.iter().enumerate() {
            writer.write_record([
                journals.name(key.a),
                journals.name(key.b),
                &observed.get(*key).to_string(),
                &self.mean[i].to_string(),
                &self.sd[i].to_string(),
                &r,
                &seed,
            ])?;
        }
        writer.flush()
    }
}

/// Counts, for one assignment, how often each observed pair occurs.
fn count_observed(corpus: &Corpus, assignment: &[u32], observed: &PairCounts) -> Vec<u32> {
    let index = observed.index();
    let options = observed.options();
    let mut counts = vec![0u32; observed.len()];
    let mut buffer = Vec::new();
    for i in 0..corpus.len() {
        buffer.clear();
        push_pair_codes(&assignment[corpus.slot_range(i)], options, &mut buffer);
        for code in &buffer {
            if let Some(&pos) = index.get(code) {
                counts[pos as usize] += 1;
            }
        }
    }
    counts
}

/// Monte Carlo null over `config.realizations` shuffles.
///
/// Only pairs present in `observed` are tracked; a pair absent from a
/// realization counts as zero there.
pub fn null_distribution(
    corpus: &Corpus,
    observed: &PairCounts,
    config: NullConfig,
) -> Result<NullStats, NullModelError> {
    let r = config.realizations;
    if r < 2 {
        return Err(NullModelError::TooFewRealizations(r));
    }
    let strata = build_strata(corpus);
    let per_realization: Vec<Vec<u32>> = (0..r)
        .into_par_iter()
        .map(|k| {
            let assignment = shuffle_realization(corpus, &strata, config.seed, k);
            count_observed(corpus, &assignment, observed)
        })
        .collect();
    let n = observed.len();
    let mut counts = vec![0u32; n * r];
    counts.par_chunks_mut(r).enumerate().for_each(|(pair, row)| {
        for (k, slot) in row.iter_mut().enumerate() {
            *slot = per_realization[k][pair];
        }
    });
    Ok(NullStats::from_realization_counts(
        observed.keys().to_vec(),
        r,
        config.seed,
        counts,
    ))
}

/// Rearranges `items` into the next lexicographic permutation; false when
/// `items` was the last one (it is then reset to ascending order). Repeated values yield each distinct arrangement once.
fn next_permutation(items: &mut [u32]) -> bool {
    let n = items.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && items[i - 1] >= items[i] {
        i -= 1;
    }
    if i == 0 {
        items.reverse();
        return false;
    }
    let mut j = n - 1;
    while items[j] <= items[i - 1] {
        j -= 1;
    }
    items.swap(i - 1, j);
    items[i..].reverse();
    true
}

fn distinct_arrangements(journals: &[u32]) -> u128 {
    let mut sorted = journals.to_vec();
    sorted.sort_unstable();
    let factorial = |k: usize| (1..=k as u128).product::<u128>();
    let mut result = factorial(sorted.len());
    let mut run = 1;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            result /= factorial(run);
            run = 1;
        }
    }
    result / factorial(run)
}

/// Exact null moments by enumerating every distinct joint arrangement of the
/// strata. Each distinct arrangement of a stratum's journal multiset stands
/// for the same number of slot permutations, so equal weighting is exact.
pub fn exact_null(corpus: &Corpus, observed: &PairCounts) -> Result<NullStats, NullModelError> {
    let mut strata = build_strata(corpus);
    let mut total: u128 = 1;
    for stratum in &strata {
        if stratum.len() > EXACT_MAX_STRATUM {
            return Err(NullModelError::StratumTooLarge {
                citing_year: stratum.key.citing_year,
                cited_year: stratum.key.cited_year,
                slots: stratum.len(),
                max: EXACT_MAX_STRATUM,
            });
        }
        total = total.saturating_mul(distinct_arrangements(&stratum.journals));
        if total > EXACT_MAX_ARRANGEMENTS {
            return Err(NullModelError::TooManyArrangements(total));
        }
    }
    for stratum in &mut strata {
        stratum.journals.sort_unstable();
    }

    let options = observed.options();
    let n = observed.len();
    let mut sum = vec![0u128; n];
    let mut sum_sq = vec![0u128; n];
    let mut assignment = corpus.slot_journals().to_vec();
    let mut tally = vec![0u64; n];
    loop {
        for stratum in &strata {
            for (&pos, &journal) in stratum.slots.iter().zip(&stratum.journals) {
                assignment[pos] = journal;
            }
        }
        tally.iter_mut().for_each(|t| *t = 0);
        tally_direct(corpus, &assignment, options, observed, &mut tally);
        for i in 0..n {
            let c = u128::from(tally[i]);
            sum[i] += c;
            sum_sq[i] += c * c;
        }
        // odometer over strata
        let mut advanced = false;
        for stratum in strata.iter_mut() {
            if next_permutation(&mut stratum.journals) {
                advanced = true;
                break;
            }
        }
        if !advanced {
            break;
        }
    }
    let (mean, sd) = (0..n).map(|i| moments(sum[i], sum_sq[i], total)).unzip();
    Ok(NullStats {
        keys: observed.keys().to_vec(),
        mean,
        sd,
        source: NullSource::Exact { arrangements: total },
    })
}

/// Plain double-loop pair recount used by the exact oracle.
fn tally_direct(corpus: &Corpus, assignment: &[u32], options: PairOptions, observed: &PairCounts, tally: &mut [u64]) {
    for a in 0..corpus.len() {
        let refs = &assignment[corpus.slot_range(a)];
        let mut seen: Vec<PairKey> = Vec::new();
        for i in 0..refs.len() {
            for j in (i + 1)..refs.len() {
                let key = PairKey::new(refs[i], refs[j]);
                if key.is_self_pair() && options.self_pairs == SelfPairs::Exclude {
                    continue;
                }
                if options.mode == PairMode::Dedup {
                    if seen.contains(&key) {
                        continue;
                    }
                    seen.push(key);
                }
                if let Some(pos) = observed.position(key) {
                    tally[pos] += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Article, ReferenceSlot};
    use crate::pairs::{count_assignment, count_pairs};

    fn article(id: &str, year: i32, refs: &[(&str, i32)]) -> Article {
        Article {
            id: id.into(),
            year,
            journal: "V".into(),
            field: "F".into(),
            countries: vec!["US".into()],
            n_authors: 1,
            refs: refs
                .iter()
                .map(|(j, y)| ReferenceSlot {
                    journal: j.to_string(),
                    year: *y,
                })
                .collect(),
            citations: None,
        }
    }

    fn corpus(articles: Vec<Article>) -> Corpus {
        Corpus::from_articles(articles).unwrap()
    }

    #[test]
    fn single_key_gives_one_stratum() {
        let c = corpus(vec![
            article("a", 2005, &[("A", 2003), ("B", 2003)]),
            article("b", 2005, &[("C", 2003)]),
        ]);
        let strata = build_strata(&c);
        assert_eq!(strata.len(), 1);
        assert_eq!(strata[0].len(), 3);
        assert_eq!(strata[0].position(&c, 2), (1, 0));
    }

    #[test]
    fn cited_years_split_strata() {
        let c = corpus(vec![article("a", 2005, &[("A", 2001), ("B", 2003), ("C", 2001)])]);
        let strata = build_strata(&c);
        assert_eq!(strata.len(), 2);
        assert_eq!(strata[0].key, StratumKey { citing_year: 2005, cited_year: 2001 });
        assert_eq!(strata[0].slots, [0, 2]);
    }

    #[test]
    fn partition_is_complete() {
        let c = corpus(vec![
            article("a", 2004, &[("A", 2001), ("B", 2003)]),
            article("b", 2005, &[("A", 2001), ("B", 2001), ("C", 2004)]),
            article("c", 2005, &[]),
        ]);
        let strata = build_strata(&c);
        let total: usize = strata.iter().map(ShuffleStratum::len).sum();
        assert_eq!(total, c.total_slots());
        let mut all: Vec<usize> = strata.iter().flat_map(|s| s.slots.iter().copied()).collect();
        all.sort();
        assert_eq!(all, (0..c.total_slots()).collect::<Vec<_>>());
    }

    #[test]
    fn one_slot_stratum_is_fixed() {
        let c = corpus(vec![article("a", 2005, &[("A", 2001), ("B", 2002), ("C", 2003)])]);
        let strata = build_strata(&c);
        for r in 0..20 {
            assert_eq!(shuffle_realization(&c, &strata, 7, r), c.slot_journals());
        }
    }

    #[test]
    fn uniform_stratum_keeps_pair_counts() {
        let c = corpus(vec![
            article("a", 2005, &[("A", 2003), ("A", 2003), ("B", 2001)]),
            article("b", 2005, &[("A", 2003), ("B", 2001), ("B", 2001)]),
        ]);
        let observed = count_pairs(&c);
        let strata = build_strata(&c);
        for r in 0..10 {
            let assignment = shuffle_realization(&c, &strata, 3, r);
            let shuffled = count_assignment(&c, &assignment, observed.options(), 0..c.len());
            assert_eq!(shuffled.counts(), observed.counts());
        }
    }

    #[test]
    fn rejects_too_few_realizations() {
        let c = corpus(vec![article("a", 2005, &[("A", 2003), ("B", 2003)])]);
        let observed = count_pairs(&c);
        let err = null_distribution(&c, &observed, NullConfig { realizations: 1, seed: 0 }).unwrap_err();
        assert_eq!(err, NullModelError::TooFewRealizations(1));
    }

    #[test]
    fn degenerate_strata_give_zero_spread() {
        let c = corpus(vec![
            article("a", 2005, &[("A", 2003), ("B", 2001)]),
            article("b", 2005, &[("A", 2003), ("B", 2001), ("C", 2002)]),
        ]);
        let observed = count_pairs(&c);
        let nulls = null_distribution(&c, &observed, NullConfig { realizations: 10, seed: 1 }).unwrap();
        for (i, (_, obs)) in observed.iter().enumerate() {
            assert_eq!(nulls.mean()[i], obs as f64);
            assert_eq!(nulls.sd()[i], 0.0);
        }
        assert_eq!(nulls.sd_floor(), 0.05);
    }

    #[test]
    fn forced_pair_and_unpairable_exact_cases() {
        // two single-ref articles: no pairs at all
        let c = corpus(vec![article("a", 2005, &[("A", 2003)]), article("b", 2005, &[("B", 2003)])]);
        let observed = count_pairs(&c);
        assert!(exact_null(&c, &observed).unwrap().is_empty());

        let c = corpus(vec![article("a", 2005, &[("A", 2003), ("B", 2003)])]);
        let observed = count_pairs(&c);
        let exact = exact_null(&c, &observed).unwrap();
        assert_eq!(exact.mean(), [1.0]);
        assert_eq!(exact.sd(), [0.0]);
    }

    /// Brute force over all 4! slot permutations.
    #[test]
    fn two_by_two_matches_full_permutation_enumeration() {
        let c = corpus(vec![
            article("x", 2005, &[("A", 2003), ("B", 2003)]),
            article("y", 2005, &[("C", 2003), ("D", 2003)]),
        ]);
        let observed = count_pairs(&c);
        let exact = exact_null(&c, &observed).unwrap();
        let base = c.slot_journals().to_vec();
        let mut perms = Vec::new();
        for a in 0..4 {
            for b in 0..4 {
                for x in 0..4 {
                    for d in 0..4 {
                        let p = [a, b, x, d];
                        let mut s = p.to_vec();
                        s.sort();
                        s.dedup();
                        if s.len() == 4 {
                            perms.push(p);
                        }
                    }
                }
            }
        }
        assert_eq!(perms.len(), 24);
        for (i, key) in observed.keys().iter().enumerate() {
            let values: Vec<f64> = perms
                .iter()
                .map(|p| {
                    let assignment: Vec<u32> = p.iter().map(|&k| base[k]).collect();
                    count_assignment(&c, &assignment, observed.options(), 0..2).get(*key) as f64
                })
                .collect();
            let mean = values.iter().sum::<f64>() / 24.0;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 24.0;
            assert!((exact.mean()[i] - mean).abs() < 1e-12);
            assert!((exact.sd()[i] - var.sqrt()).abs() < 1e-12);
            // each of the two observed pairs shares an article with prob 1/3
            assert!((mean - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_rejects_large_strata() {
        let refs: Vec<(String, i32)> = (0..9).map(|i| (format!("J{i}"), 2003)).collect();
        let refs: Vec<(&str, i32)> = refs.iter().map(|(j, y)| (j.as_str(), *y)).collect();
        let c = corpus(vec![article("a", 2005, &refs)]);
        let observed = count_pairs(&c);
        assert!(matches!(
            exact_null(&c, &observed),
            Err(NullModelError::StratumTooLarge { slots: 9, .. })
        ));
    }

    #[test]
    fn distinct_arrangement_counts() {
        assert_eq!(distinct_arrangements(&[1, 2, 3]), 6);
        assert_eq!(distinct_arrangements(&[1, 1, 2]), 3);
        assert_eq!(distinct_arrangements(&[4, 4, 4, 4]), 1);
        let mut items = vec![1, 1, 2, 3];
        let mut n = 1;
        while next_permutation(&mut items) {
            n += 1;
        }
        assert_eq!(n, 12);
        assert_eq!(items, [1, 1, 2, 3]);
    }

    /// Each of the 6 orderings of a 3-slot stratum should be equally likely.
    #[test]
    fn shuffle_is_unbiased_on_three_slots() {
        let c = corpus(vec![article("a", 2005, &[("A", 2003), ("B", 2003), ("C", 2003)])]);
        let strata = build_strata(&c);
        let trials = 60_000;
        let mut freq: BTreeMap<Vec<u32>, usize> = BTreeMap::new();
        for seed in 0..(trials / 10) as u64 {
            for r in 0..10 {
                *freq.entry(shuffle_realization(&c, &strata, seed, r)).or_default() += 1;
            }
        }
        assert_eq!(freq.len(), 6);
        let p = 1.0 / 6.0;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        for (perm, n) in freq {
            let share = n as f64 / trials as f64;
            assert!((share - p).abs() < 3.0 * se, "{perm:?}: {share}");
        }
    }
}
