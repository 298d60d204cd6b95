//! Report tables: tab-separated text with a `Max` footer, and JSON lines.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::json;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Every next token is scored.
    Token,
    /// Only targets that start a command line are scored.
    Command,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Token => "token",
            Metric::Command => "command",
        }
    }
}

/// Accuracies are percentages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub batch_size: Option<usize>,
    pub optimal_epoch: Option<usize>,
    pub test_accuracy: f64,
    /// `(k, mean accuracy over the k folds)`.
    pub cv: Vec<(usize, f64)>,
    pub error: Option<String>,
}

impl EvalRow {
    pub fn new(
        batch_size: Option<usize>,
        optimal_epoch: Option<usize>,
        test_accuracy: f64,
    ) -> Self {
        EvalRow {
            batch_size,
            optimal_epoch,
            test_accuracy,
            cv: Vec::new(),
            error: None,
        }
    }

    pub fn failed(batch_size: usize, err: &Error) -> Self {
        EvalRow {
            batch_size: Some(batch_size),
            optimal_epoch: None,
            test_accuracy: f64::NAN,
            cv: Vec::new(),
            error: Some(err.to_string()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn cv_accuracy(&self, k: usize) -> Option<f64> {
        self.cv.iter().find(|(f, _)| *f == k).map(|&(_, a)| a)
    }
}

/// Column maxima over the successful rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxLine {
    pub test_accuracy: Option<f64>,
    pub cv: Vec<(usize, Option<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub method: String,
    pub metric: Metric,
    pub rows: Vec<EvalRow>,
    pub max: MaxLine,
}

fn column_max(values: impl Iterator<Item = f64>) -> Option<f64> {
    values.fold(None, |m, v| Some(m.map_or(v, |m: f64| m.max(v))))
}

impl EvalReport {
    pub fn new(method: &str, metric: Metric, rows: Vec<EvalRow>) -> Self {
        let ok: Vec<&EvalRow> = rows.iter().filter(|r| r.is_ok()).collect();
        let ks = fold_columns(&rows);
        let max = MaxLine {
            test_accuracy: column_max(ok.iter().map(|r| r.test_accuracy)),
            cv: ks
                .iter()
                .map(|&k| (k, column_max(ok.iter().filter_map(|r| r.cv_accuracy(k)))))
                .collect(),
        };
        EvalReport {
            method: method.to_string(),
            metric,
            rows,
            max,
        }
    }

    pub fn to_tsv(&self) -> String {
        let ks = fold_columns(&self.rows);
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.2}"));
        let opt = |v: Option<usize>| v.map_or("-".to_string(), |v| v.to_string());
        let mut out = format!("# method={} metric={}\n", self.method, self.metric.name());
        out.push_str("batch_size\toptimal_epoch\ttest_accuracy");
        for k in &ks {
            let _ = write!(out, "\tcv{k}");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{}\t{}", opt(row.batch_size), opt(row.optimal_epoch));
            match &row.error {
                Some(e) => {
                    let _ = write!(out, "\tfailed: {}", e.replace(['\t', '\n'], " "));
                }
                None => {
                    let _ = write!(out, "\t{}", pct(Some(row.test_accuracy)));
                    for &k in &ks {
                        let _ = write!(out, "\t{}", pct(row.cv_accuracy(k)));
                    }
                }
            }
            out.push('\n');
        }
        let _ = write!(out, "Max\t-\t{}", pct(self.max.test_accuracy));
        for (_, v) in &self.max.cv {
            let _ = write!(out, "\t{}", pct(*v));
        }
        out.push('\n');
        out
    }

    /// One JSON object per row, then one for the `Max` line.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let mut v = json!({
                "method": self.method,
                "metric": self.metric,
                "row": "data",
                "batch_size": row.batch_size,
                "optimal_epoch": row.optimal_epoch,
            });
            if let Some(e) = &row.error {
                v["error"] = json!(e);
            } else {
                v["test_accuracy"] = json!(row.test_accuracy);
                for &(k, a) in &row.cv {
                    v[format!("cv{k}")] = json!(a);
                }
            }
            out.push_str(&v.to_string());
            out.push('\n');
        }
        let mut v = json!({
            "method": self.method,
            "metric": self.metric,
            "row": "max",
            "test_accuracy": self.max.test_accuracy,
        });
        for &(k, a) in &self.max.cv {
            v[format!("cv{k}")] = json!(a);
        }
        out.push_str(&v.to_string());
        out.push('\n');
        out
    }
}

/// Fold counts present in any row, in first-seen order.
fn fold_columns(rows: &[EvalRow]) -> Vec<usize> {
    let mut ks = Vec::new();
    for row in rows {
        for &(k, _) in &row.cv {
            if !ks.contains(&k) {
                ks.push(k);
            }
        }
    }
    ks
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(b: usize, test: f64, cv10: f64, cv5: f64) -> EvalRow {
        let mut r = EvalRow::new(Some(b), Some(3), test);
        r.cv = vec![(10, cv10), (5, cv5)];
        r
    }

    #[test]
    fn max_line_is_column_max() {
        let rep = EvalReport::new(
            "joint",
            Metric::Token,
            vec![row(300, 50.0, 48.0, 47.0), row(500, 52.0, 46.0, 47.5)],
        );
        assert_eq!(rep.max.test_accuracy, Some(52.0));
        assert_eq!(rep.max.cv, vec![(10, Some(48.0)), (5, Some(47.5))]);
        let tsv = rep.to_tsv();
        assert!(tsv.ends_with("Max\t-\t52.00\t48.00\t47.50\n"), "{tsv}");
        assert_eq!(rep.to_json_lines().lines().count(), 3);
    }

    #[test]
    fn constant_rows() {
        let rep = EvalReport::new("glove", Metric::Command, vec![row(1, 40.0, 40.0, 40.0); 4]);
        assert_eq!(rep.max.test_accuracy, Some(40.0));
        assert!(rep.max.cv.iter().all(|(_, v)| *v == Some(40.0)));
    }

    #[test]
    fn failed_rows_are_skipped_in_max() {
        let err = Error::InvalidInput("boom".into());
        let rep = EvalReport::new(
            "sgns",
            Metric::Token,
            vec![row(1, 10.0, 9.0, 8.0), EvalRow::failed(2, &err)],
        );
        assert_eq!(rep.max.test_accuracy, Some(10.0));
        assert!(rep.to_tsv().contains("failed: invalid input: boom"));
        assert!(rep.to_json_lines().contains("\"error\""));
    }
}
