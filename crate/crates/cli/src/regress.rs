use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use atypicality::covariates::{join, read_covariates, var, AnalysisTable};
use atypicality::inference::{
    describe, fit, write_descriptives, FieldGroups, FixedEffects, InferenceError, ModelKind, ModelSpec,
    RegressionResult, Subset,
};
use atypicality::scores::read_article_scores;

use crate::artifacts::{Context, Stage};
use crate::error::{CliError, Result};
use crate::presets::{self, Body, PresetModel, Scores, TableDef};
use crate::stages::{csv_body, scores_file, ScopeArg, COVARIATES, FIELD_GROUPS};

pub const MODELS_INDEX: &str = "models.csv";
pub const DESCRIPTIVES: &str = "descriptives.csv";
pub const CORRELATIONS: &str = "correlations.csv";

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Ols,
    Logit,
    Mnlogit,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Ols => ModelKind::Ols,
            ModelArg::Logit => ModelKind::Logit,
            ModelArg::Mnlogit => ModelKind::Mnlogit,
        }
    }
}

#[derive(Debug, Args)]
pub struct RegressArgs {
    /// Named table preset (table1..table4, a1..a7).
    #[arg(long, conflicts_with_all = ["model", "dv", "covariates", "fe", "subset", "name"])]
    pub table: Option<String>,
    #[arg(long, value_enum, requires = "dv")]
    pub model: Option<ModelArg>,
    #[arg(long, requires = "model")]
    pub dv: Option<String>,
    /// Comma-separated covariates.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// none, field or field+year.
    #[arg(long)]
    pub fe: Option<String>,
    /// Row filter such as `group=Sciences,year=2005`.
    #[arg(long)]
    pub subset: Option<String>,
    /// Output name for a single custom model.
    #[arg(long)]
    pub name: Option<String>,
    /// field,group mapping; defaults to field_groups.csv in the output directory.
    #[arg(long)]
    pub field_groups: Option<PathBuf>,
    /// Use the within-field median split for a custom model.
    #[arg(long, value_enum, default_value_t)]
    pub median_scope: ScopeArg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexRow {
    pub order: usize,
    pub label: String,
    pub file: String,
    pub status: String,
    pub note: String,
}

pub fn regress_dir(name: &str) -> String {
    format!("regressions/{name}")
}

/// The `regress` invocation that writes `regressions/<name>`.
pub fn producer(name: &str) -> String {
    if presets::TABLES.contains(&name) {
        format!("regress --table {name}")
    } else {
        format!("regress --name {name}")
    }
}

fn analysis_table(stage: &mut Stage, scores: Scores, dir: &str) -> Result<AnalysisTable> {
    let (scope, producer, manifest) = match scores {
        Scores::Corpus => (ScopeArg::Corpus, "classify", "classify.manifest.json"),
        Scores::ByField => (
            ScopeArg::Field,
            "classify --median-scope field",
            "classify_by_field.manifest.json",
        ),
    };
    let file = scores_file(scope);
    let bytes = stage.artifact(file, producer)?;
    stage.inherit(manifest)?;
    let profiles = read_article_scores(bytes.as_slice()).map_err(|e| CliError::Input(format!("{file}: {e}")))?;
    let bytes = stage.artifact(COVARIATES, "covariates")?;
    stage.inherit("covariates.manifest.json")?;
    let rows = read_covariates(bytes.as_slice()).map_err(|e| CliError::Input(format!("{COVARIATES}: {e}")))?;
    let joined = join(&profiles, &rows).map_err(CliError::input)?;
    if let Some(warning) = joined.warning() {
        return Err(CliError::Input(warning));
    }
    if joined.dropped() > 0 {
        eprintln!(
            "join left out {} scored articles without covariates and {} covariate rows without scores",
            joined.dropped_profiles, joined.dropped_covariates
        );
    }
    stage.output(&format!("{dir}/analysis.csv"), csv_body(|b| joined.table.write_csv(b))?);
    Ok(joined.table)
}

fn field_groups(stage: &mut Stage, ctx: &Context, path: Option<&PathBuf>) -> Result<Option<FieldGroups>> {
    let bytes = match path {
        Some(p) => stage.external(p)?,
        None if ctx.path(FIELD_GROUPS).is_file() => stage.artifact(FIELD_GROUPS, "synth")?,
        None => return Ok(None),
    };
    FieldGroups::read_csv(bytes.as_slice())
        .map(Some)
        .map_err(|e| CliError::Input(format!("field groups: {e}")))
}

fn is_input_error(e: &InferenceError) -> bool {
    matches!(
        e,
        InferenceError::UnknownVariable(_)
            | InferenceError::DvAmongCovariates(_)
            | InferenceError::BadSubset(_)
            | InferenceError::EmptySubset(_)
            | InferenceError::MissingFieldGroups
    )
}

fn estimate(
    table: &AnalysisTable,
    model: &PresetModel,
    groups: Option<&FieldGroups>,
) -> std::result::Result<RegressionResult, InferenceError> {
    let result = fit(table, &model.spec, groups)?;
    if result.converged || !model.drop_fe_on_failure || model.spec.fixed_effects == FixedEffects::None {
        return Ok(result);
    }
    let mut spec = model.spec.clone();
    spec.fixed_effects = FixedEffects::None;
    let mut retry = fit(table, &spec, groups)?;
    let reason = result.note.unwrap_or_else(|| "no convergence".into());
    retry.note = Some(match retry.note {
        Some(n) => format!("fixed effects dropped after the model with them failed ({reason}); {n}"),
        None => format!("fixed effects dropped after the model with them failed ({reason})"),
    });
    Ok(retry)
}

fn custom_def(args: &RegressArgs) -> Result<TableDef> {
    let model = args.model.ok_or_else(|| CliError::Conflict("pass --table, or --model with --dv".into()))?;
    let dv = args.dv.clone().ok_or_else(|| CliError::Conflict("--model needs --dv".into()))?;
    let covariates: Vec<String> = args
        .covariates
        .clone()
        .unwrap_or_else(|| vec![var::COUNTRIES.into(), var::AUTHORS.into(), var::REFERENCES.into()]);
    let fe = match &args.fe {
        Some(s) => s.parse::<FixedEffects>().map_err(CliError::input)?,
        None => FixedEffects::Field,
    };
    let refs: Vec<&str> = covariates.iter().map(String::as_str).collect();
    let mut spec = ModelSpec::new(model.into(), &dv, &refs, fe);
    if let Some(s) = &args.subset {
        spec = spec.with_subset(s.parse::<Subset>().map_err(CliError::input)?);
    }
    let label = presets::LABELS
        .iter()
        .find(|(k, _)| *k == dv)
        .map(|(_, l)| l.to_string())
        .unwrap_or_else(|| dv.clone());
    Ok(TableDef {
        name: args.name.clone().unwrap_or_else(|| "custom".into()),
        title: format!("{} regression of {label}", spec.model),
        scores: match args.median_scope {
            ScopeArg::Corpus => Scores::Corpus,
            ScopeArg::Field => Scores::ByField,
        },
        hide_intercept: false,
        body: Body::Models(vec![PresetModel {
            label,
            spec,
            drop_fe_on_failure: false,
        }]),
    })
}

fn index_csv(rows: &[IndexRow]) -> Result<Vec<u8>> {
    csv_body(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()
    })
}

pub fn regress(ctx: &Context, args: &RegressArgs) -> Result<()> {
    let (def, custom) = match &args.table {
        Some(name) => {
            let known = presets::table(name, &[]).ok_or_else(|| {
                CliError::Input(format!("unknown table \"{name}\"; expected one of {}", presets::TABLES.join(", ")))
            })?;
            (known, false)
        }
        None => (custom_def(args)?, true),
    };
    if def.name.is_empty() || def.name.contains(['/', '\\']) || def.name.starts_with('.') {
        return Err(CliError::Input(format!("\"{}\" is not a usable output name", def.name)));
    }
    let dir = regress_dir(&def.name);
    let mut stage = Stage::with_manifest(ctx, "regress", &format!("{dir}/regress.manifest.json"));
    let table = analysis_table(&mut stage, def.scores, &dir)?;
    let groups = field_groups(&mut stage, ctx, args.field_groups.as_ref())?;
    // a3 expands to one model per citing year present.
    let years: Vec<i32> = table.years.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let def = if custom {
        def
    } else {
        presets::table(&def.name, &years).expect("known table")
    };
    stage.param("table", &def.name);
    let mut index = Vec::new();
    match &def.body {
        Body::Describe(variables) => {
            let d = describe(&table, variables).map_err(|e| CliError::Estimation(e.to_string()))?;
            let (mut summary, mut correlations) = (Vec::new(), Vec::new());
            write_descriptives(&d, &mut summary, &mut correlations)
                .map_err(|e| CliError::io("serializing descriptives", e))?;
            stage.output(&format!("{dir}/{DESCRIPTIVES}"), summary);
            stage.output(&format!("{dir}/{CORRELATIONS}"), correlations);
            index.push(IndexRow {
                order: 1,
                label: "Descriptives".into(),
                file: DESCRIPTIVES.into(),
                status: "ok".into(),
                note: String::new(),
            });
        }
        Body::Models(models) => {
            let mut estimated = 0;
            for (k, model) in models.iter().enumerate() {
                let order = k + 1;
                let row = match estimate(&table, model, groups.as_ref()) {
                    Ok(result) => {
                        estimated += 1;
                        let file = format!("{order}_{}.csv", presets::slug(&model.label));
                        stage.output(&format!("{dir}/{file}"), csv_body(|b| result.write_csv(b))?);
                        let status = if result.converged { "ok" } else { "not converged" };
                        eprintln!("{}: {status} (N = {})", model.label, result.n);
                        IndexRow {
                            order,
                            label: model.label.clone(),
                            file,
                            status: status.into(),
                            note: result.note.clone().unwrap_or_default(),
                        }
                    }
                    Err(e) if custom => {
                        return Err(if is_input_error(&e) {
                            CliError::Input(e.to_string())
                        } else {
                            CliError::Estimation(e.to_string())
                        })
                    }
                    Err(e) => {
                        eprintln!("{}: {e}", model.label);
                        IndexRow {
                            order,
                            label: model.label.clone(),
                            file: String::new(),
                            status: "error".into(),
                            note: e.to_string(),
                        }
                    }
                };
                index.push(row);
            }
            if estimated == 0 {
                let reasons: Vec<String> = index.iter().map(|r| format!("{}: {}", r.label, r.note)).collect();
                return Err(CliError::Estimation(reasons.join("; ")));
            }
        }
    }
    stage.output(&format!("{dir}/{MODELS_INDEX}"), index_csv(&index)?);
    stage.commit()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn producers_name_the_flag() {
        assert_eq!(producer("table4"), "regress --table table4");
        assert_eq!(producer("mine"), "regress --name mine");
    }
}
