use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Metrics at one transition length. Rotation metrics are absent for
/// position-only data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub length: usize,
    pub l2q: Option<f64>,
    pub l2p: f64,
    pub npss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricsReport {
    pub dataset_id: String,
    pub model_id: String,
    pub seed_count: usize,
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    pub fn row(&self, length: usize) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.length == length)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }

    pub fn table(&self) -> String {
        render_table(std::slice::from_ref(self))
    }
}

/// One line per report: L2Q, L2P and NPSS groups, each over the lengths of
/// the first report.
pub fn render_table(reports: &[MetricsReport]) -> String {
    let Some(first) = reports.first() else {
        return String::new();
    };
    let lengths: Vec<usize> = first.rows.iter().map(|r| r.length).collect();
    let name_w = reports
        .iter()
        .map(|r| r.model_id.len())
        .max()
        .unwrap_or(0)
        .max("model".len());
    let col = 8;
    let group = lengths.len() * col;

    let mut out = String::new();
    let _ = write!(out, "{:name_w$}", "");
    for g in ["L2Q", "L2P", "NPSS"] {
        let _ = write!(out, " | {g:^group$}");
    }
    out.push('\n');
    let _ = write!(out, "{:name_w$}", "model");
    for _ in 0..3 {
        out.push_str(" | ");
        for n in &lengths {
            let _ = write!(out, "{n:>col$}");
        }
    }
    out.push('\n');
    out.push_str(&"-".repeat(name_w + 3 * (group + 3)));
    out.push('\n');

    let cell = |v: Option<f64>, prec: usize| match v {
        Some(x) => format!("{x:>col$.prec$}"),
        None => format!("{:>col$}", "-"),
    };
    for r in reports {
        let _ = write!(out, "{:name_w$}", r.model_id);
        let metrics: [(&dyn Fn(&MetricsRow) -> Option<f64>, usize); 3] =
            [(&|m| m.l2q, 3), (&|m| Some(m.l2p), 3), (&|m| m.npss, 4)];
        for (get, prec) in metrics {
            out.push_str(" | ");
            for n in &lengths {
                out.push_str(&cell(r.row(*n).and_then(get), prec));
            }
        }
        out.push('\n');
    }
    out
}
