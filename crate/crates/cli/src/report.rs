use clap::{ArgGroup, Args, ValueEnum};

use atypicality::covariates::read_covariates;
use atypicality::inference::{
    read_descriptives, render_descriptives, render_models, ModelColumn, RegressionResult, INTERCEPT,
};
use atypicality::scores::{
    distribution_report, read_article_scores, write_category_counts, write_group_means, write_histogram,
};

use crate::artifacts::{Context, Stage};
use crate::error::{CliError, Result};
use crate::presets::{self, Body};
use crate::regress::{producer, regress_dir, IndexRow, CORRELATIONS, DESCRIPTIVES, MODELS_INDEX};
use crate::stages::{csv_body, COVARIATES};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Figure {
    /// Distribution of the 10th-percentile z.
    Fig2,
    /// Distribution of the median z.
    Fig3,
    /// Mean novelty by country count.
    Fig5,
    /// Mean median z by country count.
    Fig6,
    /// Articles per category by country count.
    Fig7,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("target").required(true).args(["table", "figure"])))]
pub struct ReportArgs {
    /// Render a regression table written by `regress`.
    #[arg(long)]
    pub table: Option<String>,
    #[arg(long, value_enum)]
    pub figure: Option<Figure>,
    /// Histogram bin width for fig2 and fig3.
    #[arg(long, default_value_t = 1.0)]
    pub bin_width: f64,
}

pub fn report(ctx: &Context, args: &ReportArgs) -> Result<()> {
    match (&args.table, args.figure) {
        (Some(name), None) => table_report(ctx, name),
        (None, Some(fig)) => figure_report(ctx, fig, args.bin_width),
        _ => Err(CliError::Conflict("pass exactly one of --table or --figure".into())),
    }
}

fn read_csv_rows<T: serde::de::DeserializeOwned>(bytes: &[u8], file: &str) -> Result<Vec<T>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(bytes)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| CliError::Input(format!("{file}: {e}")))
}

fn table_report(ctx: &Context, name: &str) -> Result<()> {
    let dir = regress_dir(name);
    let mut stage = Stage::with_manifest(ctx, "report", &format!("reports/{name}.manifest.json"));
    let index_file = format!("{dir}/{MODELS_INDEX}");
    let bytes = stage.artifact(&index_file, &producer(name))?;
    stage.inherit(&format!("{dir}/regress.manifest.json"))?;
    let index: Vec<IndexRow> = read_csv_rows(&bytes, &index_file)?;
    let def = presets::table(name, &[]);
    let title = def.as_ref().map(|d| d.title.clone()).unwrap_or_else(|| format!("Regression {name}"));
    let mut text = String::new();
    if let Some(presets::TableDef { body: Body::Describe(_), .. }) = &def {
        let summary = stage.artifact(&format!("{dir}/{DESCRIPTIVES}"), &producer(name))?;
        let correlations = stage.artifact(&format!("{dir}/{CORRELATIONS}"), &producer(name))?;
        let d = read_descriptives(summary.as_slice(), correlations.as_slice())
            .map_err(|e| CliError::Input(format!("{dir}: {e}")))?;
        text.push_str(&render_descriptives(&title, &d, &presets::LABELS));
    } else {
        let hide_intercept = def.as_ref().is_some_and(|d| d.hide_intercept);
        let mut results: Vec<(String, RegressionResult)> = Vec::new();
        let mut footnotes = Vec::new();
        for row in &index {
            if row.file.is_empty() {
                footnotes.push(format!("{} not estimated: {}", row.label, row.note));
                continue;
            }
            let file = format!("{dir}/{}", row.file);
            let bytes = stage.artifact(&file, &producer(name))?;
            let mut result = RegressionResult::read_csv(bytes.as_slice())
                .map_err(|e| CliError::Input(format!("{file}: {e}")))?;
            if hide_intercept {
                result.coefficients.retain(|c| c.term != INTERCEPT);
            }
            if let Some(note) = &result.note {
                footnotes.push(format!("{}: {note}", row.label));
            }
            results.push((row.label.clone(), result));
        }
        let columns: Vec<ModelColumn<'_>> = results
            .iter()
            .map(|(label, result)| ModelColumn { label, result })
            .collect();
        text.push_str(&render_models(&title, &columns, &presets::LABELS));
        if results.iter().any(|(_, r)| r.categories().iter().any(Option::is_some)) {
            text.push_str("Category 4 is the reference category.\n");
        }
        for note in footnotes {
            text.push_str(&format!("\n{note}\n"));
        }
    }
    stage.output(&format!("reports/{name}.md"), text.clone().into_bytes());
    stage.commit()?;
    print!("{text}");
    Ok(())
}

fn figure_report(ctx: &Context, figure: Figure, bin_width: f64) -> Result<()> {
    let name = match figure {
        Figure::Fig2 => "fig2",
        Figure::Fig3 => "fig3",
        Figure::Fig5 => "fig5",
        Figure::Fig6 => "fig6",
        Figure::Fig7 => "fig7",
    };
    let mut stage = Stage::with_manifest(ctx, "report", &format!("figures/{name}.manifest.json"));
    let bytes = stage.artifact("article_scores.csv", "classify")?;
    stage.inherit("classify.manifest.json")?;
    let profiles = read_article_scores(bytes.as_slice()).map_err(|e| CliError::Input(format!("article_scores.csv: {e}")))?;
    let bytes = stage.artifact(COVARIATES, "covariates")?;
    stage.inherit("covariates.manifest.json")?;
    let rows = read_covariates(bytes.as_slice()).map_err(|e| CliError::Input(format!("{COVARIATES}: {e}")))?;
    let data = distribution_report(&profiles, &rows, bin_width).map_err(CliError::input)?;
    stage.param("figure", name);
    stage.param("bin_width", bin_width);
    let body = match figure {
        Figure::Fig2 => csv_body(|b| write_histogram(&data.z10_histogram, b))?,
        Figure::Fig3 => csv_body(|b| write_histogram(&data.zmed_histogram, b))?,
        Figure::Fig5 => csv_body(|b| write_group_means(&data.novelty_by_countries, b))?,
        Figure::Fig6 => csv_body(|b| write_group_means(&data.zmed_by_countries, b))?,
        Figure::Fig7 => csv_body(|b| write_category_counts(&data.category_by_countries, b))?,
    };
    stage.output(&format!("figures/{name}.csv"), body.clone());
    stage.commit()?;
    print!("{}", String::from_utf8_lossy(&body));
    Ok(())
}
