//! Journal co-citation pairs: per-article enumeration and corpus-wide counts.

use std::io::{self, Write};
use std::sync::OnceLock;

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Interner};

/// Unordered journal pair in canonical order `a <= b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairKey {
    pub a: u32,
    pub b: u32,
}

impl PairKey {
    pub fn new(x: u32, y: u32) -> Self {
        if x <= y {
            Self { a: x, b: y }
        } else {
            Self { a: y, b: x }
        }
    }

    pub fn is_self_pair(self) -> bool {
        self.a == self.b
    }

    /// Packs the key into a `u64` whose ordering matches the key ordering.
    pub fn code(self) -> u64 {
        (u64::from(self.a) << 32) | u64::from(self.b)
    }

    pub fn from_code(code: u64) -> Self {
        Self {
            a: (code >> 32) as u32,
            b: code as u32,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairMode {
    /// Every combination of two reference slots counts once.
    #[default]
    Multiset,
    /// Each distinct pair counts at most once per article.
    Dedup,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelfPairs {
    #[default]
    Include,
    Exclude,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairOptions {
    pub mode: PairMode,
    pub self_pairs: SelfPairs,
}

/// Appends the pair codes of one reference list to `out`.
pub(crate) fn push_pair_codes(journals: &[u32], options: PairOptions, out: &mut Vec<u64>) {
    let start = out.len();
    for (i, &x) in journals.iter().enumerate() {
        for &y in &journals[i + 1..] {
            if x == y && options.self_pairs == SelfPairs::Exclude {
                continue;
            }
            out.push(PairKey::new(x, y).code());
        }
    }
    if options.mode == PairMode::Dedup {
        let tail = &mut out[start..];
        tail.sort_unstable();
        let mut write = 0;
        for read in 0..tail.len() {
            if read == 0 || tail[read] != tail[write - 1] {
                tail[write] = tail[read];
                write += 1;
            }
        }
        out.truncate(start + write);
    }
}

/// The pair multiset of a single reference list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArticlePairs {
    /// Distinct keys in ascending order with their multiplicities.
    pub pairs: Vec<(PairKey, u32)>,
    /// Fewer than two reference slots.
    pub unpairable: bool,
}

impl ArticlePairs {
    pub fn total(&self) -> u64 {
        self.pairs.iter().map(|&(_, n)| u64::from(n)).sum()
    }
}

pub fn article_pairs(journals: &[u32], options: PairOptions) -> ArticlePairs {
    let mut codes = Vec::new();
    push_pair_codes(journals, options, &mut codes);
    codes.sort_unstable();
    let pairs = run_lengths(&codes)
        .into_iter()
        .map(|(code, n)| (PairKey::from_code(code), n as u32))
        .collect();
    ArticlePairs {
        pairs,
        unpairable: journals.len() < 2,
    }
}

fn run_lengths(sorted: &[u64]) -> Vec<(u64, u64)> {
    let mut out: Vec<(u64, u64)> = Vec::new();
    for &code in sorted {
        match out.last_mut() {
            Some((last, n)) if *last == code => *n += 1,
            _ => out.push((code, 1)),
        }
    }
    out
}

/// Observed pair counts and their marginals.
#[derive(Debug, Clone)]
pub struct PairCounts {
    keys: Vec<PairKey>,
    counts: Vec<u64>,
    total_mass: u64,
    journal_sums: Vec<u64>,
    options: PairOptions,
    index: OnceLock<FxHashMap<u64, u32>>,
}

impl PairCounts {
    fn from_sorted(entries: Vec<(u64, u64)>, n_journals: usize, options: PairOptions) -> Self {
        let mut journal_sums = vec![0u64; n_journals];
        let mut keys = Vec::with_capacity(entries.len());
        let mut counts = Vec::with_capacity(entries.len());
        let mut total_mass = 0;
        for (code, n) in entries {
            let key = PairKey::from_code(code);
            journal_sums[key.a as usize] += n;
            journal_sums[key.b as usize] += n;
            total_mass += n;
            keys.push(key);
            counts.push(n);
        }
        Self {
            keys,
            counts,
            total_mass,
            journal_sums,
            options,
            index: OnceLock::new(),
        }
    }

    /// Keys in ascending order.
    pub fn keys(&self) -> &[PairKey] {
        &self.keys
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (PairKey, u64)> + '_ {
        self.keys.iter().copied().zip(self.counts.iter().copied())
    }

    pub fn get(&self, key: PairKey) -> u64 {
        self.position(key).map_or(0, |i| self.counts[i])
    }

    /// Sum of all pair counts.
    pub fn total_mass(&self) -> u64 {
        self.total_mass
    }

    /// Per-journal pair participation `S_i` (self pairs contribute twice).
    pub fn journal_sums(&self) -> &[u64] {
        &self.journal_sums
    }

    /// `T = sum_i S_i = 2 * total_mass`.
    pub fn grand_total(&self) -> u64 {
        2 * self.total_mass
    }

    pub fn options(&self) -> PairOptions {
        self.options
    }

    pub(crate) fn index(&self) -> &FxHashMap<u64, u32> {
        self.index.get_or_init(|| {
            let mut map = FxHashMap::with_capacity_and_hasher(self.keys.len(), Default::default());
            for (i, key) in self.keys.iter().enumerate() {
                map.insert(key.code(), i as u32);
            }
            map
        })
    }

    pub fn position(&self, key: PairKey) -> Option<usize> {
        self.index().get(&key.code()).map(|&i| i as usize)
    }

    /// Sums two tables built over the same journal index space.
    pub fn merge(&self, other: &PairCounts) -> PairCounts {
        assert_eq!(self.options, other.options, "merging counts built with different options");
        let mut merged = Vec::with_capacity(self.len().max(other.len()));
        let (mut i, mut j) = (0, 0);
        while i < self.len() || j < other.len() {
            let left = self.keys.get(i).map(|k| k.code());
            let right = other.keys.get(j).map(|k| k.code());
            match (left, right) {
                (Some(l), Some(r)) if l == r => {
                    merged.push((l, self.counts[i] + other.counts[j]));
                    i += 1;
                    j += 1;
                }
                (Some(l), Some(r)) if l < r => {
                    merged.push((l, self.counts[i]));
                    i += 1;
                }
                (Some(l), None) => {
                    merged.push((l, self.counts[i]));
                    i += 1;
                }
                (_, Some(r)) => {
                    merged.push((r, other.counts[j]));
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        let n = self.journal_sums.len().max(other.journal_sums.len());
        PairCounts::from_sorted(merged, n, self.options)
    }

    /// Writes `journal_a,journal_b,count` rows in key order.
    pub fn write_csv<W: Write>(&self, journals: &Interner, out: W) -> io::Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["journal_a", "journal_b", "count"])?;
        for (key, n) in self.iter() {
            writer.write_record([journals.name(key.a), journals.name(key.b), &n.to_string()])?;
        }
        writer.flush()
    }
}

pub fn count_pairs(corpus: &Corpus) -> PairCounts {
    count_pairs_with(corpus, PairOptions::default())
}

pub fn count_pairs_with(corpus: &Corpus, options: PairOptions) -> PairCounts {
    count_assignment(corpus, corpus.slot_journals(), options, 0..corpus.len())
}

/// Counts pairs over `articles` when slot journals are taken from `assignment`
/// (a flat slot array laid out like [`Corpus::slot_journals`]).
pub fn count_assignment(
    corpus: &Corpus,
    assignment: &[u32],
    options: PairOptions,
    articles: std::ops::Range<usize>,
) -> PairCounts {
    assert_eq!(assignment.len(), corpus.total_slots());
    let mut codes: Vec<u64> = articles
        .into_par_iter()
        .with_min_len(256)
        .fold(Vec::new, |mut acc, i| {
            push_pair_codes(&assignment[corpus.slot_range(i)], options, &mut acc);
            acc
        })
        .reduce(Vec::new, |mut a, mut b| {
            a.append(&mut b);
            a
        });
    codes.par_sort_unstable();
    PairCounts::from_sorted(run_lengths(&codes), corpus.journals().len(), options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Article, ReferenceSlot};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    const A: u32 = 0;
    const B: u32 = 1;
    const C: u32 = 2;

    fn multiset(journals: &[u32]) -> Vec<(PairKey, u32)> {
        article_pairs(journals, PairOptions::default()).pairs
    }

    fn corpus(ref_lists: &[Vec<&str>]) -> Corpus {
        let articles = ref_lists
            .iter()
            .enumerate()
            .map(|(i, refs)| Article {
                id: format!("a{i}"),
                year: 2005,
                journal: "venue".into(),
                field: "F".into(),
                countries: vec!["US".into()],
                n_authors: 1,
                refs: refs
                    .iter()
                    .map(|j| ReferenceSlot {
                        journal: j.to_string(),
                        year: 2003,
                    })
                    .collect(),
                citations: None,
            })
            .collect();
        Corpus::from_articles(articles).unwrap()
    }

    fn key(corpus: &Corpus, x: &str, y: &str) -> PairKey {
        let j = corpus.journals();
        PairKey::new(j.index(x).unwrap(), j.index(y).unwrap())
    }

    #[test]
    fn three_distinct_refs() {
        assert_eq!(
            multiset(&[A, B, C]),
            [(PairKey::new(A, B), 1), (PairKey::new(A, C), 1), (PairKey::new(B, C), 1)]
        );
    }

    #[test]
    fn repeated_journal_slots() {
        assert_eq!(multiset(&[A, A, B]), [(PairKey::new(A, A), 1), (PairKey::new(A, B), 2)]);
        let dedup = article_pairs(
            &[A, A, B],
            PairOptions {
                mode: PairMode::Dedup,
                self_pairs: SelfPairs::Include,
            },
        );
        assert_eq!(dedup.pairs, [(PairKey::new(A, A), 1), (PairKey::new(A, B), 1)]);
        let no_self = article_pairs(
            &[A, A, B],
            PairOptions {
                mode: PairMode::Multiset,
                self_pairs: SelfPairs::Exclude,
            },
        );
        assert_eq!(no_self.pairs, [(PairKey::new(A, B), 2)]);
    }

    #[test]
    fn single_ref_is_unpairable() {
        let pairs = article_pairs(&[A], PairOptions::default());
        assert!(pairs.pairs.is_empty());
        assert!(pairs.unpairable);
    }

    #[test]
    fn two_identical_articles() {
        let corpus = corpus(&[vec!["A", "B"], vec!["A", "B"]]);
        let counts = count_pairs(&corpus);
        assert_eq!(counts.len(), 1);
        assert_eq!(counts.get(key(&corpus, "A", "B")), 2);
        assert_eq!(counts.total_mass(), 2);
        let j = corpus.journals();
        assert_eq!(counts.journal_sums()[j.index("A").unwrap() as usize], 2);
        assert_eq!(counts.journal_sums()[j.index("B").unwrap() as usize], 2);
        // T counts S_A + S_B.
        assert_eq!(counts.grand_total(), 4);
    }

    #[test]
    fn self_pair_marginal() {
        let corpus = corpus(&[vec!["A", "A"]]);
        let counts = count_pairs(&corpus);
        assert_eq!(counts.get(key(&corpus, "A", "A")), 1);
        assert_eq!(counts.journal_sums()[corpus.journals().index("A").unwrap() as usize], 2);
        assert_eq!(counts.grand_total(), 2);
    }

    #[test]
    fn csv_dump_uses_identifier_strings() {
        let corpus = corpus(&[vec!["A", "B"]]);
        let mut out = Vec::new();
        count_pairs(&corpus).write_csv(corpus.journals(), &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "journal_a,journal_b,count\nA,B,1\n");
    }

    fn journal_lists() -> impl Strategy<Value = Vec<Vec<u32>>> {
        prop::collection::vec(prop::collection::vec(0u32..8, 0..9), 1..50)
    }

    fn corpus_from_ids(lists: &[Vec<u32>]) -> Corpus {
        let names: Vec<Vec<String>> = lists
            .iter()
            .map(|l| l.iter().map(|j| format!("J{j}")).collect())
            .collect();
        let refs: Vec<Vec<&str>> = names.iter().map(|l| l.iter().map(String::as_str).collect()).collect();
        corpus(&refs)
    }

    proptest! {
        #[test]
        fn counts_match_double_loop_recount(lists in journal_lists()) {
            let corpus = corpus_from_ids(&lists);
            let counts = count_pairs(&corpus);
            let mut oracle: BTreeMap<(String, String), u64> = BTreeMap::new();
            for article in corpus.articles() {
                let refs = &article.refs;
                for i in 0..refs.len() {
                    for j in (i + 1)..refs.len() {
                        let (x, y) = (refs[i].journal.clone(), refs[j].journal.clone());
                        let k = if x <= y { (x, y) } else { (y, x) };
                        *oracle.entry(k).or_default() += 1;
                    }
                }
            }
            prop_assert_eq!(counts.len(), oracle.len());
            for ((x, y), n) in &oracle {
                prop_assert_eq!(counts.get(key(&corpus, x, y)), *n);
            }
            let mass: u64 = corpus.articles().iter().map(|a| {
                let k = a.refs.len() as u64;
                k * k.saturating_sub(1) / 2
            }).sum();
            prop_assert_eq!(counts.total_mass(), mass);
            prop_assert_eq!(counts.journal_sums().iter().sum::<u64>(), counts.grand_total());
        }

        #[test]
        fn shard_merge_equals_single_pass(lists in journal_lists(), cut in 0usize..50) {
            let corpus = corpus_from_ids(&lists);
            let cut = cut.min(corpus.len());
            let options = PairOptions::default();
            let left = count_assignment(&corpus, corpus.slot_journals(), options, 0..cut);
            let right = count_assignment(&corpus, corpus.slot_journals(), options, cut..corpus.len());
            let merged = left.merge(&right);
            let whole = count_pairs(&corpus);
            prop_assert_eq!(merged.keys(), whole.keys());
            prop_assert_eq!(merged.counts(), whole.counts());
            prop_assert_eq!(merged.journal_sums(), whole.journal_sums());
        }

        #[test]
        fn slot_order_is_irrelevant(mut list in prop::collection::vec(0u32..6, 0..10), seed in any::<u64>()) {
            let before = multiset(&list);
            let n = list.len();
            if n > 1 {
                let mut s = seed;
                for i in (1..n).rev() {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    list.swap(i, (s >> 33) as usize % (i + 1));
                }
            }
            prop_assert_eq!(multiset(&list), before);
        }
    }
}
