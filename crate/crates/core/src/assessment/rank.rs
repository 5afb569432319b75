//! Mean-rank aggregation over a method x metric score table.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    methods: Vec<String>,
    metrics: Vec<String>,
    higher_is_better: Vec<bool>,
    /// `scores[method][metric]`.
    scores: Vec<Vec<f64>>,
}

impl ScoreTable {
    pub fn new(methods: Vec<String>, metrics: Vec<String>, scores: Vec<Vec<f64>>) -> Result<Self> {
        let higher = vec![true; metrics.len()];
        Self::with_orientation(methods, metrics, higher, scores)
    }

    pub fn with_orientation(
        methods: Vec<String>,
        metrics: Vec<String>,
        higher_is_better: Vec<bool>,
        scores: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if scores.len() != methods.len() || higher_is_better.len() != metrics.len() {
            return Err(Error::InvalidData("score table is not rectangular".into()));
        }
        for (m, row) in methods.iter().zip(&scores) {
            if row.len() != metrics.len() {
                return Err(Error::InvalidData(format!("row {m:?} has {} scores", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!("row {m:?} has a non-finite score")));
            }
        }
        Ok(ScoreTable {
            methods,
            metrics,
            higher_is_better,
            scores,
        })
    }

    pub fn methods(&self) -> &[String] {
        &self.methods
    }

    pub fn metrics(&self) -> &[String] {
        &self.metrics
    }

    pub fn score(&self, method: usize, metric: usize) -> f64 {
        self.scores[method][metric]
    }

    fn column(&self, metric: &str) -> Result<usize> {
        self.metrics
            .iter()
            .position(|m| m == metric)
            .ok_or_else(|| Error::MissingMetric(metric.to_string()))
    }

    /// Append a method row.
    pub fn push(&mut self, method: impl Into<String>, scores: Vec<f64>) -> Result<()> {
        let method = method.into();
        if scores.len() != self.metrics.len() || scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("bad score row for {method:?}")));
        }
        self.methods.push(method);
        self.scores.push(scores);
        Ok(())
    }

    /// Ranks `1..=n` for one metric, best first; tied scores share the
    /// average of the ranks they span.
    pub fn ranks(&self, metric: &str) -> Result<Vec<f64>> {
        let col = self.column(metric)?;
        let higher = self.higher_is_better[col];
        let n = self.methods.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            let (sa, sb) = (self.scores[a][col], self.scores[b][col]);
            let ord = sa.partial_cmp(&sb).expect("finite scores");
            if higher {
                ord.reverse()
            } else {
                ord
            }
        });
        let mut ranks = vec![0.0; n];
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && self.scores[order[j + 1]][col] == self.scores[order[i]][col] {
                j += 1;
            }
            // positions i..=j hold ranks i+1..=j+1
            let shared = (i + j + 2) as f64 / 2.0;
            for &idx in &order[i..=j] {
                ranks[idx] = shared;
            }
            i = j + 1;
        }
        Ok(ranks)
    }

    /// Load a CSV whose header is `method,<metric>,...`; every metric is
    /// taken as higher-is-better.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
        if headers.is_empty() {
            return Err(Error::Corrupt {
                path: path.to_path_buf(),
                reason: "empty header".into(),
            });
        }
        let metrics: Vec<String> = headers.iter().skip(1).map(|s| s.trim().to_string()).collect();
        let mut methods = Vec::new();
        let mut scores = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            methods.push(rec.get(0).unwrap_or_default().trim().to_string());
            let row = rec
                .iter()
                .skip(1)
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|_| Error::Corrupt {
                        path: path.to_path_buf(),
                        reason: format!("bad score {v:?}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            scores.push(row);
        }
        ScoreTable::new(methods, metrics, scores)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Corrupt {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

/// Per-method mean of the ranks over `metrics`, in table order. Lower is
/// better.
pub fn mean_rank(table: &ScoreTable, metrics: &[&str]) -> Result<Vec<f64>> {
    if metrics.is_empty() {
        return Err(Error::InvalidParameter("no metrics selected for ranking".into()));
    }
    let mut acc = vec![0.0; table.methods.len()];
    for metric in metrics {
        for (a, r) in acc.iter_mut().zip(table.ranks(metric)?) {
            *a += r;
        }
    }
    Ok(acc.into_iter().map(|s| s / metrics.len() as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[(&str, &[f64])], metrics: &[&str]) -> ScoreTable {
        ScoreTable::new(
            rows.iter().map(|(m, _)| m.to_string()).collect(),
            metrics.iter().map(|m| m.to_string()).collect(),
            rows.iter().map(|(_, s)| s.to_vec()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn ties_share_average_rank() {
        let t = table(&[("a", &[0.5]), ("b", &[0.5]), ("c", &[0.1])], &["m"]);
        assert_eq!(t.ranks("m").unwrap(), vec![1.5, 1.5, 3.0]);
    }

    #[test]
    fn lower_is_better_orientation() {
        let t = ScoreTable::with_orientation(
            vec!["a".into(), "b".into()],
            vec!["err".into()],
            vec![false],
            vec![vec![0.2], vec![0.1]],
        )
        .unwrap();
        assert_eq!(t.ranks("err").unwrap(), vec![2.0, 1.0]);
    }

    #[test]
    fn missing_metric() {
        let t = table(&[("a", &[1.0])], &["m"]);
        assert!(matches!(mean_rank(&t, &["x"]), Err(Error::MissingMetric(_))));
    }

    #[test]
    fn non_rectangular_rejected() {
        assert!(ScoreTable::new(vec!["a".into()], vec!["m".into(), "n".into()], vec![vec![1.0]]).is_err());
    }

    #[test]
    fn csv_loading() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "method,SSIM+,VIF+\nx,0.5,0.7\ny,0.6,0.4\n").unwrap();
        let t = ScoreTable::load_csv(&p).unwrap();
        assert_eq!(mean_rank(&t, &["SSIM+", "VIF+"]).unwrap(), vec![1.5, 1.5]);
    }
}
