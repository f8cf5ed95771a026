//! The named regression tables and their models.

use atypicality::covariates::var;
use atypicality::inference::{FixedEffects, ModelKind, ModelSpec, Subset};
use atypicality::synth::FIELD_GROUPS;

pub const TABLES: [&str; 11] = [
    "table1", "table2", "table3", "table4", "a1", "a2", "a3", "a4", "a5", "a6", "a7",
];

pub const LABELS: [(&str, &str); 14] = [
    (var::NOVELTY, "Novelty"),
    (var::NOVELTY_BIN, "Novelty Bin"),
    (var::CONVENTIONALITY, "Conventionality"),
    (var::CONVENTIONALITY_BIN, "Conventionality Bin"),
    (var::COUNTRIES, "Countries"),
    (var::AUTHORS, "Authors"),
    (var::REFERENCES, "References"),
    (var::CONTINENTS, "Continents"),
    (var::LANGUAGES, "Languages"),
    (var::LOG_COUNTRIES, "Log Countries"),
    (var::LOG_AUTHORS, "Log Authors"),
    (var::CITATIONS, "Citations"),
    (var::CATEGORY, "Category"),
    (var::Z10, "10th percentile z"),
];

/// Which classification the analysis table is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scores {
    Corpus,
    ByField,
}

#[derive(Debug, Clone)]
pub struct PresetModel {
    pub label: String,
    pub spec: ModelSpec,
    /// Refit without fixed effects when the first fit does not converge.
    pub drop_fe_on_failure: bool,
}

#[derive(Debug, Clone)]
pub enum Body {
    Describe(Vec<&'static str>),
    Models(Vec<PresetModel>),
}

#[derive(Debug, Clone)]
pub struct TableDef {
    pub name: String,
    pub title: String,
    pub scores: Scores,
    pub hide_intercept: bool,
    pub body: Body,
}

const CONTROLS: [&str; 3] = [var::COUNTRIES, var::AUTHORS, var::REFERENCES];

fn model(label: &str, spec: ModelSpec) -> PresetModel {
    PresetModel {
        label: label.to_string(),
        spec,
        drop_fe_on_failure: false,
    }
}

fn models(name: &str, title: &str, list: Vec<PresetModel>) -> TableDef {
    TableDef {
        name: name.to_string(),
        title: title.to_string(),
        scores: Scores::Corpus,
        hide_intercept: false,
        body: Body::Models(list),
    }
}

/// The definition of a named table; `years` are the citing years present in
/// the analysis table, used by the per-year table.
pub fn table(name: &str, years: &[i32]) -> Option<TableDef> {
    use FixedEffects::{Field, FieldYear};
    use ModelKind::{Logit, Mnlogit, Ols};
    let def = match name {
        "table1" => TableDef {
            name: name.into(),
            title: "Descriptive statistics and correlations".into(),
            scores: Scores::Corpus,
            hide_intercept: false,
            body: Body::Describe(vec![
                var::NOVELTY,
                var::NOVELTY_BIN,
                var::CONVENTIONALITY,
                var::CONVENTIONALITY_BIN,
                var::COUNTRIES,
                var::AUTHORS,
                var::REFERENCES,
            ]),
        },
        "table2" => models(
            name,
            "OLS regressions",
            vec![
                model("Novelty", ModelSpec::new(Ols, var::NOVELTY, &CONTROLS, Field)),
                model("Conventionality", ModelSpec::new(Ols, var::CONVENTIONALITY, &CONTROLS, Field)),
            ],
        ),
        "table3" => models(
            name,
            "Logistic regressions",
            vec![
                model("Novelty Bin", ModelSpec::new(Logit, var::NOVELTY_BIN, &CONTROLS, Field)),
                model("Conventionality Bin", ModelSpec::new(Logit, var::CONVENTIONALITY_BIN, &CONTROLS, Field)),
            ],
        ),
        "table4" => {
            let mut list = vec![model("All Fields", ModelSpec::new(Mnlogit, var::CATEGORY, &CONTROLS, Field))];
            for group in FIELD_GROUPS {
                let mut m = model(
                    group,
                    ModelSpec::new(Mnlogit, var::CATEGORY, &CONTROLS, Field).with_subset(Subset::group(group)),
                );
                m.drop_fe_on_failure = group == "Arts & Humanities";
                list.push(m);
            }
            TableDef {
                hide_intercept: true,
                ..models(name, "Multinomial logistic regressions, category 4 as reference", list)
            }
        }
        "a1" => models(
            name,
            "Logistic regressions on country count",
            vec![
                model("Novelty Bin", ModelSpec::new(Logit, var::NOVELTY_BIN, &[var::COUNTRIES], FixedEffects::None)),
                model(
                    "Conventionality Bin",
                    ModelSpec::new(Logit, var::CONVENTIONALITY_BIN, &[var::COUNTRIES], FixedEffects::None),
                ),
            ],
        ),
        "a2" => models(
            name,
            "Multinomial logistic regression on country count, category 4 as reference",
            vec![model(
                "All Fields",
                ModelSpec::new(Mnlogit, var::CATEGORY, &[var::COUNTRIES], FixedEffects::None),
            )],
        ),
        "a3" => {
            let mut list = Vec::new();
            for (dv, label) in [(var::CONVENTIONALITY, "Conven."), (var::NOVELTY, "Novelty")] {
                for &year in years {
                    list.push(model(
                        &format!("{label} {year}"),
                        ModelSpec::new(Ols, dv, &CONTROLS, Field).with_subset(Subset::year(year)),
                    ));
                }
            }
            models(name, "OLS regressions by year", list)
        }
        "a4" => {
            let mut list = Vec::new();
            for (dv, label) in [(var::CONVENTIONALITY, "Conven."), (var::NOVELTY, "Novelty")] {
                for geo in [var::CONTINENTS, var::LANGUAGES] {
                    list.push(model(
                        &format!("{label} ({geo})"),
                        ModelSpec::new(Ols, dv, &[geo, var::AUTHORS, var::REFERENCES], FieldYear),
                    ));
                }
            }
            models(name, "Two-way fixed effects regressions, continents and languages", list)
        }
        "a5" => {
            let covariates = [var::LOG_COUNTRIES, var::LOG_AUTHORS, var::REFERENCES];
            models(
                name,
                "OLS regressions, log-transformed counts",
                vec![
                    model("Conventionality", ModelSpec::new(Ols, var::CONVENTIONALITY, &covariates, Field)),
                    model("Novelty", ModelSpec::new(Ols, var::NOVELTY, &covariates, Field)),
                ],
            )
        }
        "a6" => TableDef {
            scores: Scores::ByField,
            hide_intercept: true,
            ..models(
                name,
                "Multinomial logistic regression, within-field median split",
                vec![model("All Fields", ModelSpec::new(Mnlogit, var::CATEGORY, &CONTROLS, Field))],
            )
        },
        "a7" => models(
            name,
            "Collaboration and citations",
            vec![model("Citations", ModelSpec::new(Ols, var::CITATIONS, &CONTROLS, Field))],
        ),
        _ => return None,
    };
    Some(def)
}

/// File-name fragment for a model label.
pub fn slug(label: &str) -> String {
    let mut out = String::new();
    for c in label.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') && !out.is_empty() {
            out.push('_');
        }
    }
    out.trim_end_matches('_').to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_name_resolves() {
        for name in TABLES {
            assert!(table(name, &[2005]).is_some(), "{name}");
        }
        assert!(table("table9", &[]).is_none());
    }

    #[test]
    fn per_year_models_follow_years() {
        let Some(TableDef { body: Body::Models(list), .. }) = table("a3", &[2001, 2002]) else {
            panic!("a3 has models");
        };
        assert_eq!(list.len(), 4);
        assert_eq!(list[1].label, "Conven. 2002");
    }

    #[test]
    fn slugs_are_file_safe() {
        assert_eq!(slug("Arts & Humanities"), "arts_humanities");
        assert_eq!(slug("Conven. (continents)"), "conven_continents");
    }
}
