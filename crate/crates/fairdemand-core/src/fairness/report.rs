//! The per-model fairness report: accuracy plus per-attribute correlation
//! and prediction accuracy gap, computed on the denormalized test split.

/// Metrics for one attribute. `None` means the metric was unavailable (empty
/// group after masking or a degenerate attribute), which is reported as such
/// rather than as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AttrMetrics {
    pub name: String,
    pub corr: Option<f64>,
    pub pag_pct: Option<f64>,
    pub degenerate: bool,
}

/// One row of the result tables: a trained model's accuracy and fairness.
#[derive(Debug, Clone, PartialEq)]
pub struct FairnessReport {
    pub model: String,
    pub lambda: f64,
    pub mae: f64,
    pub rmse: f64,
    pub attrs: Vec<AttrMetrics>,
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

impl FairnessReport {
    /// CSV header matching [`FairnessReport::csv_row`].
    pub fn csv_header(attr_names: &[String]) -> String {
        let mut cols = vec!["model".to_string(), "lambda".into(), "mae".into(), "rmse".into()];
        for name in attr_names {
            cols.push(format!("{name}_corr"));
            cols.push(format!("{name}_pag_pct"));
        }
        cols.join(",")
    }

    /// One CSV row with full-precision values; unavailable metrics are empty
    /// cells.
    pub fn csv_row(&self) -> String {
        let mut cols = vec![
            self.model.clone(),
            format!("{}", self.lambda),
            format!("{}", self.mae),
            format!("{}", self.rmse),
        ];
        for attr in &self.attrs {
            cols.push(fmt_opt(attr.corr));
            cols.push(fmt_opt(attr.pag_pct));
        }
        cols.join(",")
    }

    /// Markdown header cells: MAE, RMSE, then Corr / PAG per attribute.
    pub fn md_header(attr_names: &[String]) -> String {
        let mut cols = vec!["Model".to_string(), "MAE".into(), "RMSE".into()];
        for name in attr_names {
            cols.push(format!("{name} Corr"));
            cols.push(format!("{name} PAG (%)"));
        }
        format!(
            "| {} |\n|{}|",
            cols.join(" | "),
            cols.iter().map(|_| " --- ").collect::<Vec<_>>().join("|")
        )
    }

    /// One markdown row with display precision.
    pub fn md_row(&self) -> String {
        let mut cols = vec![
            self.model.clone(),
            format!("{:.3}", self.mae),
            format!("{:.3}", self.rmse),
        ];
        for attr in &self.attrs {
            cols.push(attr.corr.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into()));
            cols.push(attr.pag_pct.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into()));
        }
        format!("| {} |", cols.join(" | "))
    }

    /// Mean absolute correlation over available attributes.
    pub fn mean_abs_corr(&self) -> f64 {
        let vals: Vec<f64> = self.attrs.iter().filter_map(|a| a.corr).map(f64::abs).collect();
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    }

    /// Mean absolute PAG over available attributes.
    pub fn mean_abs_pag(&self) -> f64 {
        let vals: Vec<f64> = self.attrs.iter().filter_map(|a| a.pag_pct).map(f64::abs).collect();
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    }

    /// Sum of absolute correlations, the grid-search fairness objective.
    pub fn sum_abs_corr(&self) -> f64 {
        self.attrs.iter().filter_map(|a| a.corr).map(f64::abs).sum()
    }
}
