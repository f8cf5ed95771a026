//! Plain-text rendering of descriptives and regression results as aligned
//! markdown tables. Cells only format values already present in the inputs.

use super::{Descriptives, ModelKind, RegressionResult};

/// Significance marker: `***` below .001, `**` below .01, `*` below .05.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

pub fn format_estimate(v: f64) -> String {
    if !v.is_finite() {
        return "-".to_string();
    }
    if v == 0.0 || v.abs() >= 0.001 {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn markdown(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count().max(3)).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let padded: Vec<String> = (0..cols)
            .map(|j| {
                let cell = cells.get(j).map(String::as_str).unwrap_or("");
                if j == 0 {
                    format!("{cell:<w$}", w = widths[j])
                } else {
                    format!("{cell:>w$}", w = widths[j])
                }
            })
            .collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut out = line(header);
    let rule: Vec<String> = widths
        .iter()
        .enumerate()
        .map(|(j, &w)| if j == 0 { format!(":{}", "-".repeat(w - 1)) } else { format!("{}:", "-".repeat(w - 1)) })
        .collect();
    out.push_str(&format!("| {} |\n", rule.join(" | ")));
    for row in rows {
        out.push_str(&line(row));
    }
    out
}

/// One model, with the heading shown above its column(s).
#[derive(Debug, Clone, Copy)]
pub struct ModelColumn<'a> {
    pub label: &'a str,
    pub result: &'a RegressionResult,
}

struct Column<'a> {
    header: String,
    result: &'a RegressionResult,
    category: Option<u8>,
}

fn expand<'a>(models: &[ModelColumn<'a>]) -> Vec<Column<'a>> {
    let mut out = Vec::new();
    for m in models {
        let categories = m.result.categories();
        if m.result.model == ModelKind::Mnlogit && !categories.is_empty() {
            for category in categories {
                out.push(Column {
                    header: format!("{} Cat. {}", m.label, category.unwrap_or_default()),
                    result: m.result,
                    category,
                });
            }
        } else {
            out.push(Column {
                header: m.label.to_string(),
                result: m.result,
                category: None,
            });
        }
    }
    out
}

/// Coefficients with standard errors in parentheses below, then fit rows.
/// `labels` maps variable names to display names.
pub fn render_models(title: &str, models: &[ModelColumn<'_>], labels: &[(&str, &str)]) -> String {
    let columns = expand(models);
    let display = |term: &str| {
        labels
            .iter()
            .find(|(k, _)| *k == term)
            .map(|(_, v)| v.to_string())
            .unwrap_or_else(|| term.to_string())
    };
    let mut terms: Vec<&str> = Vec::new();
    for m in models {
        for t in m.result.terms() {
            if !terms.contains(&t) {
                terms.push(t);
            }
        }
    }
    let mut header = vec![String::new()];
    header.extend(columns.iter().map(|c| c.header.clone()));
    let mut rows = Vec::new();
    for term in &terms {
        let mut est = vec![display(term)];
        let mut se = vec![String::new()];
        for c in &columns {
            match c.result.coefficient(term, c.category) {
                Some(k) => {
                    est.push(format!("{}{}", format_estimate(k.estimate), stars(k.p_value)));
                    se.push(format!("({})", format_estimate(k.std_error)));
                }
                None => {
                    est.push(String::new());
                    se.push(String::new());
                }
            }
        }
        rows.push(est);
        rows.push(se);
    }
    let fit_row = |name: &str, cell: &dyn Fn(&RegressionResult) -> String| {
        let mut row = vec![name.to_string()];
        row.extend(columns.iter().map(|c| cell(c.result)));
        row
    };
    if columns.iter().any(|c| !c.result.converged) {
        rows.push(fit_row("Converged", &|r| if r.converged { "Yes".into() } else { "No".into() }));
    }
    rows.push(fit_row("Field fixed", &|r| {
        match r.fixed_effects {
            super::FixedEffects::None => "No",
            super::FixedEffects::Field => "Yes",
            super::FixedEffects::FieldYear => "Yes (+ year)",
        }
        .into()
    }));
    rows.push(fit_row("N", &|r| r.n.to_string()));
    let opt = |v: Option<f64>| v.map(format_estimate).unwrap_or_default();
    if columns.iter().any(|c| c.result.fit.r2.is_some()) {
        rows.push(fit_row("R²", &|r| opt(r.fit.r2)));
    }
    if columns.iter().any(|c| c.result.fit.aic.is_some()) {
        rows.push(fit_row("AIC", &|r| opt(r.fit.aic)));
    }
    if columns.iter().any(|c| c.result.fit.wald.is_some()) {
        rows.push(fit_row("Wald", &|r| {
            r.fit
                .wald
                .map(|w| format!("{}{}", format_estimate(w), r.fit.wald_p.map(stars).unwrap_or("")))
                .unwrap_or_default()
        }));
    }
    let mut out = format!("### {title}\n\n");
    out.push_str(&markdown(&header, &rows));
    out.push_str("\np<.05*, p<.01**, p<.001***\n");
    out
}

/// Descriptive statistics with the lower-triangular correlation matrix.
pub fn render_descriptives(title: &str, d: &Descriptives, labels: &[(&str, &str)]) -> String {
    let display = |v: &str| {
        labels
            .iter()
            .find(|(k, _)| *k == v)
            .map(|(_, l)| l.to_string())
            .unwrap_or_else(|| v.to_string())
    };
    let mut header: Vec<String> = vec![String::new(), "N".into(), "Mean".into(), "SD".into()];
    header.extend((1..=d.variables.len()).map(|i| i.to_string()));
    let mut rows = Vec::new();
    for (i, v) in d.variables.iter().enumerate() {
        let mut row = vec![
            format!("{}. {}", i + 1, display(&v.variable)),
            v.n.to_string(),
            format_estimate(v.mean),
            format_estimate(v.sd),
        ];
        for other in &d.variables[..i] {
            let cell = d
                .correlation(&v.variable, &other.variable)
                .map(|c| match c.r {
                    Some(r) => format!("{r:.3}{}", c.p_value.map(stars).unwrap_or("")),
                    None => "undefined".to_string(),
                })
                .unwrap_or_default();
            row.push(cell);
        }
        rows.push(row);
    }
    let mut out = format!("### {title}\n\n");
    out.push_str(&markdown(&header, &rows));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{Coefficient, FitStats, FixedEffects};

    #[test]
    fn stars_follow_thresholds() {
        assert_eq!(stars(0.0009), "***");
        assert_eq!(stars(0.001), "**");
        assert_eq!(stars(0.049), "*");
        assert_eq!(stars(0.05), "");
    }

    #[test]
    fn renders_estimates_with_errors() {
        let r = RegressionResult {
            model: ModelKind::Ols,
            dv: "novelty".into(),
            fixed_effects: FixedEffects::Field,
            subset: None,
            n: 1000,
            converged: true,
            iterations: 1,
            note: None,
            coefficients: vec![Coefficient {
                term: "countries".into(),
                category: None,
                estimate: -2.47,
                std_error: 0.031,
                p_value: 1e-9,
            }],
            fit: FitStats {
                r2: Some(0.25),
                ..FitStats::default()
            },
            fe_parameters: 3,
        };
        let text = render_models("T", &[ModelColumn { label: "Novelty", result: &r }], &[("countries", "Countries")]);
        assert!(text.contains("-2.470***"));
        assert!(text.contains("(0.031)"));
        assert!(text.contains("| Countries"));
        assert!(text.contains("0.250"));
    }
}
