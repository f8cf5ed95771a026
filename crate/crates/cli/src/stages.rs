//! Data stages: ingest, validate, score, classify, covariates, synth and the
//! exact-null oracle.

use std::collections::BTreeMap;
use std::io;
use std::path::PathBuf;

use clap::{Args, ValueEnum};

use atypicality::corpus::{parse_corpus_with, parse_reader, validate_with, Corpus, ParseOptions};
use atypicality::covariates::{derive_covariates, write_covariates};
use atypicality::geo::GeoTables;
use atypicality::nullmodel::{exact_null, null_distribution, NullConfig, DEFAULT_REALIZATIONS};
use atypicality::pairs::{count_pairs_with, PairMode, PairOptions, SelfPairs};
use atypicality::pipeline::{classify_profiles, score_corpus, ScoreConfig};
use atypicality::scores::{
    pair_zscores, read_profiles, write_article_scores, write_pair_scores, write_profiles, Category,
    CategoryShares, Profiles, SplitScope, SplitThreshold,
};
use atypicality::synth::{generate, planted_truth, SynthParams};

use crate::artifacts::{unstamp_json, Context, Stage};
use crate::error::{CliError, Result};

pub const CORPUS: &str = "corpus.jsonl";
pub const PROFILES: &str = "article_profiles.csv";
pub const COVARIATES: &str = "covariates.csv";
pub const FIELD_GROUPS: &str = "field_groups.csv";

pub const STRATA_RULE: &str = "reference slots shuffled within (citing year, cited year) strata";
pub const PERCENTILE_RULE: &str = "linear interpolation between order statistics; z10 at p = 0.1, zmed at p = 0.5";
pub const SD_SUBSTITUTION: &str = "null sd of 0 replaced by 1/(2R); such pairs are flagged degenerate";

/// Runs a CSV writer into a byte buffer.
pub fn csv_body(write: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf).map_err(|e| CliError::io("serializing csv", e))?;
    Ok(buf)
}

pub fn load_corpus(stage: &mut Stage) -> Result<Corpus> {
    let bytes = stage.artifact(CORPUS, "ingest")?;
    let options = ParseOptions {
        strict: true,
        years: None,
    };
    parse_reader(bytes.as_slice(), &options)
        .map(|p| p.corpus)
        .map_err(|e| CliError::Input(format!("{CORPUS}: {e}")))
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// JSON Lines corpus to read.
    #[arg(long)]
    pub input: PathBuf,
    /// Abort on the first malformed line instead of skipping it.
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub year_from: Option<i32>,
    #[arg(long)]
    pub year_to: Option<i32>,
}

pub fn ingest(ctx: &Context, args: &IngestArgs) -> Result<()> {
    let years = match (args.year_from, args.year_to) {
        (None, None) => None,
        (from, to) => {
            let (from, to) = (from.unwrap_or(i32::MIN), to.unwrap_or(i32::MAX));
            if from > to {
                return Err(CliError::Conflict(format!("--year-from {from} is after --year-to {to}")));
            }
            Some(from..=to)
        }
    };
    let mut stage = Stage::new(ctx, "ingest");
    stage.external(&args.input)?;
    let options = ParseOptions {
        strict: args.strict,
        years,
    };
    let parsed = parse_corpus_with(&args.input, &options).map_err(CliError::input)?;
    stage.param("strict", args.strict);
    stage.param("year_from", args.year_from);
    stage.param("year_to", args.year_to);
    stage.param("articles", parsed.corpus.len());
    stage.param("skipped", parsed.skipped_count());
    let mut body = Vec::new();
    parsed
        .corpus
        .write_jsonl(&mut body)
        .map_err(|e| CliError::io("serializing corpus", e))?;
    stage.output(CORPUS, body);
    let skipped = csv_body(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["line", "reason"])?;
        for (line, reason) in &parsed.skipped {
            w.write_record([line.to_string(), reason.clone()])?;
        }
        w.flush()
    })?;
    stage.output("ingest_skipped.csv", skipped);
    stage.commit()?;
    eprintln!(
        "ingested {} articles, skipped {} malformed lines",
        parsed.corpus.len(),
        parsed.skipped_count()
    );
    Ok(())
}

/// Replacement geo tables; both or neither.
#[derive(Debug, Args)]
pub struct GeoArgs {
    /// country,continent table.
    #[arg(long, requires = "languages")]
    pub continents: Option<PathBuf>,
    /// country,language table.
    #[arg(long, requires = "continents")]
    pub languages: Option<PathBuf>,
}

fn load_geo(stage: &mut Stage, args: &GeoArgs) -> Result<GeoTables> {
    let geo = match (&args.continents, &args.languages) {
        (Some(c), Some(l)) => {
            let continents = String::from_utf8(stage.external(c)?).map_err(CliError::input)?;
            let languages = String::from_utf8(stage.external(l)?).map_err(CliError::input)?;
            GeoTables::from_csv(&continents, &languages).map_err(CliError::input)?
        }
        (None, None) => GeoTables::bundled().clone(),
        _ => return Err(CliError::Conflict("--continents and --languages go together".into())),
    };
    stage.manifest_mut().geo_version = Some(geo.version().to_string());
    Ok(geo)
}

pub fn validate(ctx: &Context, args: &GeoArgs) -> Result<()> {
    let mut stage = Stage::new(ctx, "validate");
    let corpus = load_corpus(&mut stage)?;
    let geo = load_geo(&mut stage, args)?;
    let report = validate_with(&corpus, &geo);
    let text = report.to_csv();
    stage.output("validation.csv", text.clone().into_bytes());
    stage.commit()?;
    print!("{text}");
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
pub enum PairModeArg {
    #[default]
    Multiset,
    Dedup,
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
pub enum SelfPairsArg {
    #[default]
    Include,
    Exclude,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Monte Carlo realizations of the null model.
    #[arg(long, default_value_t = DEFAULT_REALIZATIONS)]
    pub realizations: usize,
    #[arg(long, value_enum, default_value_t)]
    pub pair_mode: PairModeArg,
    #[arg(long, value_enum, default_value_t)]
    pub self_pairs: SelfPairsArg,
    /// Also compute K50 and commonality for every pair.
    #[arg(long)]
    pub alternative_metrics: bool,
}

impl ScoreArgs {
    fn pair_options(&self) -> PairOptions {
        PairOptions {
            mode: match self.pair_mode {
                PairModeArg::Multiset => PairMode::Multiset,
                PairModeArg::Dedup => PairMode::Dedup,
            },
            self_pairs: match self.self_pairs {
                SelfPairsArg::Include => SelfPairs::Include,
                SelfPairsArg::Exclude => SelfPairs::Exclude,
            },
        }
    }
}

fn enum_name(v: &impl ValueEnum) -> String {
    v.to_possible_value().map(|p| p.get_name().to_string()).unwrap_or_default()
}

pub fn score(ctx: &Context, args: &ScoreArgs) -> Result<()> {
    let mut stage = Stage::new(ctx, "score");
    let corpus = load_corpus(&mut stage)?;
    let config = ScoreConfig {
        pairs: args.pair_options(),
        null: NullConfig {
            realizations: args.realizations,
            seed: ctx.seed(),
        },
        alternative_metrics: args.alternative_metrics,
    };
    let scored = score_corpus(&corpus, &config).map_err(CliError::input)?;
    {
        let m = stage.manifest_mut();
        m.realizations = Some(args.realizations);
        m.strata_rule = Some(STRATA_RULE.into());
        m.percentile_rule = Some(PERCENTILE_RULE.into());
        m.sd_substitution = Some(SD_SUBSTITUTION.into());
        m.pair_mode = Some(enum_name(&args.pair_mode));
        m.self_pairs = Some(enum_name(&args.self_pairs));
    }
    let degenerate = scored.pair_scores.iter().filter(|p| p.degenerate).count();
    stage.param("alternative_metrics", args.alternative_metrics);
    stage.param("pairs", scored.counts.len());
    stage.param("degenerate_pairs", degenerate);
    stage.param("scored_articles", scored.profiles.scored.len());
    stage.param("unscored_articles", scored.profiles.excluded.len());
    let journals = corpus.journals();
    stage.output("pairs.csv", csv_body(|b| scored.counts.write_csv(journals, b))?);
    stage.output("nullstats.csv", csv_body(|b| scored.nulls.write_csv(&scored.counts, journals, b))?);
    stage.output("pair_scores.csv", csv_body(|b| write_pair_scores(&scored.pair_scores, journals, b))?);
    stage.output(PROFILES, csv_body(|b| write_profiles(&scored.profiles.scored, b))?);
    let unscored = csv_body(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["id"])?;
        for id in &scored.profiles.excluded {
            w.write_record([id])?;
        }
        w.flush()
    })?;
    stage.output("unscored_articles.csv", unscored);
    stage.commit()?;
    eprintln!(
        "scored {} pairs ({degenerate} degenerate) over {} articles with R = {}",
        scored.counts.len(),
        scored.profiles.scored.len(),
        args.realizations
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    #[default]
    Corpus,
    Field,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Median split over the whole corpus or within each field.
    #[arg(long, value_enum, default_value_t)]
    pub median_scope: ScopeArg,
}

/// File names written by `classify` for a median scope.
pub fn scores_file(scope: ScopeArg) -> &'static str {
    match scope {
        ScopeArg::Corpus => "article_scores.csv",
        ScopeArg::Field => "article_scores_by_field.csv",
    }
}

fn shares_csv(shares: &CategoryShares) -> Result<Vec<u8>> {
    csv_body(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["category", "label", "count", "share"])?;
        for (k, c) in Category::ALL.iter().enumerate() {
            w.write_record([
                c.number().to_string(),
                c.label().to_string(),
                shares.counts[k].to_string(),
                shares.shares[k].to_string(),
            ])?;
        }
        w.flush()
    })
}

pub fn classify(ctx: &Context, args: &ClassifyArgs) -> Result<()> {
    let (manifest, suffix, scope) = match args.median_scope {
        ScopeArg::Corpus => ("classify.manifest.json", "", SplitScope::Corpus),
        ScopeArg::Field => ("classify_by_field.manifest.json", "_by_field", SplitScope::Field),
    };
    let mut stage = Stage::with_manifest(ctx, "classify", manifest);
    let bytes = stage.artifact(PROFILES, "score")?;
    stage.inherit("score.manifest.json")?;
    let scored = read_profiles(bytes.as_slice()).map_err(|e| CliError::Input(format!("{PROFILES}: {e}")))?;
    let mut profiles = Profiles {
        scored,
        excluded: Vec::new(),
    };
    let (threshold, shares) = classify_profiles(&mut profiles, scope).map_err(CliError::input)?;
    stage.manifest_mut().split_scope = Some(enum_name(&args.median_scope));
    match &threshold {
        SplitThreshold::Corpus(t) => stage.param("threshold", t),
        SplitThreshold::PerField(by_field) => {
            let body = csv_body(|buf| {
                let mut w = csv::Writer::from_writer(buf);
                w.write_record(["field", "threshold"])?;
                for (field, t) in by_field {
                    w.write_record([field.clone(), t.to_string()])?;
                }
                w.flush()
            })?;
            stage.output("field_thresholds.csv", body);
        }
    }
    stage.output(
        scores_file(args.median_scope),
        csv_body(|b| write_article_scores(&profiles.scored, b))?,
    );
    stage.output(&format!("category_shares{suffix}.csv"), shares_csv(&shares)?);
    stage.commit()?;
    for (k, c) in Category::ALL.iter().enumerate() {
        println!(
            "{} ({}): {} ({:.1}%)",
            c.number(),
            c.label(),
            shares.counts[k],
            100.0 * shares.shares[k]
        );
    }
    Ok(())
}

pub fn covariates(ctx: &Context, args: &GeoArgs) -> Result<()> {
    let mut stage = Stage::new(ctx, "covariates");
    let corpus = load_corpus(&mut stage)?;
    let geo = load_geo(&mut stage, args)?;
    let set = derive_covariates(&corpus, &geo);
    stage.param("rows", set.rows.len());
    stage.param("unknown_geo", set.unknown_geo.len());
    stage.param("empty_countries", set.empty_countries.len());
    stage.output(COVARIATES, csv_body(|b| write_covariates(&set.rows, b))?);
    stage.commit()?;
    if !set.unknown_geo.is_empty() {
        eprintln!(
            "{} articles list a country missing from the geo tables; continents and languages left empty",
            set.unknown_geo.len()
        );
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON parameter file; the flags below override its values.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub articles: Option<usize>,
    #[arg(long)]
    pub journals: Option<usize>,
    #[arg(long)]
    pub fields: Option<usize>,
    #[arg(long)]
    pub communities: Option<usize>,
    #[arg(long)]
    pub affinity: Option<f64>,
    #[arg(long)]
    pub coupling: Option<f64>,
    #[arg(long)]
    pub author_coupling: Option<f64>,
    #[arg(long)]
    pub citation_coupling: Option<f64>,
    #[arg(long)]
    pub refs_mean: Option<f64>,
    /// Uniform referencing with no community preference.
    #[arg(long, conflicts_with_all = ["affinity", "params"])]
    pub null_world: bool,
}

pub fn synth(ctx: &Context, args: &SynthArgs) -> Result<()> {
    let mut stage = Stage::new(ctx, "synth");
    let mut params = match &args.params {
        Some(path) => {
            let value: serde_json::Value = serde_json::from_slice(&stage.external(path)?)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            serde_json::from_value(unstamp_json(value))
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        }
        None if args.null_world => SynthParams::null_world(),
        None => SynthParams::default(),
    };
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = args.$flag { params.$field = v; })*
        };
    }
    set!(articles => n_articles, journals => n_journals, fields => n_fields, communities => n_communities,
        affinity => affinity, coupling => coupling, author_coupling => author_coupling,
        citation_coupling => citation_coupling, refs_mean => refs_mean);
    if let Some(seed) = ctx.seed {
        params.seed = seed;
    }
    stage.manifest_mut().seed = params.seed;
    let corpus = generate(&params).map_err(CliError::input)?;
    let truth = planted_truth(&params);
    stage.param("articles", corpus.len());
    let mut body = Vec::new();
    corpus
        .write_jsonl(&mut body)
        .map_err(|e| CliError::io("serializing corpus", e))?;
    stage.output(CORPUS, body);
    stage.output(FIELD_GROUPS, csv_body(|b| params.field_groups().write_csv(b))?);
    stage.output("synth_params.json", serde_json::to_vec(&params).map_err(CliError::input)?);
    stage.output("planted_truth.json", serde_json::to_vec(&truth).map_err(CliError::input)?);
    stage.commit()?;
    eprintln!("generated {} articles (seed {})", corpus.len(), params.seed);
    Ok(())
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Monte Carlo realizations compared against the exact moments.
    #[arg(long, default_value_t = 5000)]
    pub realizations: usize,
}

pub fn oracle_null(ctx: &Context, args: &OracleArgs) -> Result<()> {
    let mut stage = Stage::new(ctx, "oracle-null");
    let corpus = load_corpus(&mut stage)?;
    let counts = count_pairs_with(&corpus, PairOptions::default());
    let exact = exact_null(&corpus, &counts).map_err(CliError::input)?;
    let config = NullConfig {
        realizations: args.realizations,
        seed: ctx.seed(),
    };
    let mc = null_distribution(&corpus, &counts, config).map_err(CliError::input)?;
    let exact_z = pair_zscores(&counts, &exact).map_err(CliError::input)?;
    let mc_z = pair_zscores(&counts, &mc).map_err(CliError::input)?;
    let journals = corpus.journals();
    let root_r = (args.realizations as f64).sqrt();
    let mut within = 0usize;
    let mut max_z_gap = 0f64;
    let mut rows: Vec<BTreeMap<&str, String>> = Vec::new();
    for (i, key) in counts.keys().iter().enumerate() {
        let tolerance = 3.0 * exact.sd()[i] / root_r;
        let ok = (mc.mean()[i] - exact.mean()[i]).abs() <= tolerance;
        within += usize::from(ok);
        let gap = (mc_z[i].z - exact_z[i].z).abs();
        max_z_gap = max_z_gap.max(gap);
        rows.push(BTreeMap::from([
            ("journal_a", journals.name(key.a).to_string()),
            ("journal_b", journals.name(key.b).to_string()),
            ("obs", counts.counts()[i].to_string()),
            ("exact_mean", exact.mean()[i].to_string()),
            ("exact_sd", exact.sd()[i].to_string()),
            ("mc_mean", mc.mean()[i].to_string()),
            ("mc_sd", mc.sd()[i].to_string()),
            ("tolerance", tolerance.to_string()),
            ("within", u8::from(ok).to_string()),
            ("z_gap", gap.to_string()),
        ]));
    }
    let columns = [
        "journal_a", "journal_b", "obs", "exact_mean", "exact_sd", "mc_mean", "mc_sd", "tolerance", "within", "z_gap",
    ];
    let table = csv_body(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(columns)?;
        for row in &rows {
            w.write_record(columns.iter().map(|c| row[c].as_str()))?;
        }
        w.flush()
    })?;
    stage.manifest_mut().realizations = Some(args.realizations);
    stage.manifest_mut().strata_rule = Some(STRATA_RULE.into());
    stage.param("pairs", counts.len());
    stage.param("pairs_within", within);
    stage.param("max_z_gap", max_z_gap);
    stage.output("nullstats_exact.csv", csv_body(|b| exact.write_csv(&counts, journals, b))?);
    stage.output("oracle_null.csv", table);
    stage.commit()?;
    println!(
        "{within} of {} pairs within 3 standard errors of the exact mean; max z gap {max_z_gap:.4}",
        counts.len()
    );
    Ok(())
}
