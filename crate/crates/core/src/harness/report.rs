//! Per-instance evaluation rows and transform-resistance summaries.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub instance: String,
    pub size: usize,
    pub best_length: f64,
    pub msqi: f64,
    pub di: Option<f64>,
    pub wallclock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub size: f64,
    pub best_length: f64,
    pub msqi: f64,
    pub di: Option<f64>,
    pub wallclock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub rows: Vec<RunRow>,
    pub mean: RunAggregate,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

impl RunReport {
    /// Aggregates are plain means; DI is averaged only when every row has one.
    pub fn new(rows: Vec<RunRow>) -> Self {
        let di = if !rows.is_empty() && rows.iter().all(|r| r.di.is_some()) {
            Some(mean(rows.iter().filter_map(|r| r.di)))
        } else {
            None
        };
        let agg = RunAggregate {
            size: mean(rows.iter().map(|r| r.size as f64)),
            best_length: mean(rows.iter().map(|r| r.best_length)),
            msqi: mean(rows.iter().map(|r| r.msqi)),
            di,
            wallclock_s: mean(rows.iter().map(|r| r.wallclock_s)),
        };
        RunReport { rows, mean: agg }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("instance,size,best_length,msqi,di,wallclock_s\n");
        let di = |d: Option<f64>| d.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.3}",
                r.instance,
                r.size,
                r.best_length,
                r.msqi,
                di(r.di),
                r.wallclock_s
            );
        }
        let m = &self.mean;
        let _ = writeln!(
            out,
            "mean,{},{},{},{},{:.3}",
            m.size,
            m.best_length,
            m.msqi,
            di(m.di),
            m.wallclock_s
        );
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// One transform kind: mean percentage gap of greedy best length, with and
/// without mirror augmentation, and how often the decoded tour sets coincide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineRow {
    pub kind: String,
    pub gap_pct: f64,
    pub gap_pct_mirror_aug: f64,
    pub identical: f64,
    pub identical_mirror_aug: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineReport {
    pub instances: usize,
    pub n: usize,
    pub rows: Vec<AffineRow>,
}

impl AffineReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,gap_pct,gap_pct_mirror_aug,identical,identical_mirror_aug\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.3},{:.3},{},{}",
                r.kind, r.gap_pct, r.gap_pct_mirror_aug, r.identical, r.identical_mirror_aug
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}
