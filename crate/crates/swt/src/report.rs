//! Metric and benchmark reports: human-readable text, `key=value` documents
//! and CSV tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use swt_core::metrics::DepthMetrics;

use crate::error::{Result, ToolError};

/// Evaluation output for one prediction/ground-truth pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub metrics: DepthMetrics,
    pub silog: f64,
    pub observed: usize,
}

impl MetricsReport {
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out: Vec<(&'static str, String)> = self
            .metrics
            .entries()
            .iter()
            .map(|(k, v)| (*k, v.to_string()))
            .collect();
        out.push(("silog", self.silog.to_string()));
        out.push(("observed", self.observed.to_string()));
        out.push(("aligned", self.metrics.aligned.to_string()));
        out
    }

    pub fn to_text(&self) -> String {
        let m = &self.metrics;
        let mut s = String::new();
        writeln!(s, "observed pixels : {}", self.observed).unwrap();
        writeln!(s, "median aligned  : {}", if m.aligned { "yes" } else { "no" }).unwrap();
        writeln!(s, "abs_rel         : {:.6}", m.abs_rel).unwrap();
        writeln!(s, "sq_rel          : {:.6}", m.sq_rel).unwrap();
        writeln!(s, "rmse            : {:.6}", m.rmse).unwrap();
        writeln!(s, "delta1          : {:.6}", m.delta1).unwrap();
        writeln!(s, "delta2          : {:.6}", m.delta2).unwrap();
        writeln!(s, "delta3          : {:.6}", m.delta3).unwrap();
        writeln!(s, "silog           : {:.6}", self.silog).unwrap();
        s
    }

    pub fn to_kv(&self) -> String {
        kv_document(self.entries().iter().map(|(k, v)| (k.to_string(), v.clone())))
    }
}

pub fn kv_document(entries: impl IntoIterator<Item = (String, String)>) -> String {
    entries
        .into_iter()
        .fold(String::new(), |mut s, (k, v)| {
            writeln!(s, "{k}={v}").unwrap();
            s
        })
}

/// Parse a `key=value` document, keeping line order.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| ToolError::format(format!("not a key=value line: {l:?}")))
        })
        .collect()
}

/// One timed case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCase {
    pub name: String,
    pub height: usize,
    pub width: usize,
    /// Window size for SWT cases, kernel size for tangent cases, face size
    /// for the cube-map case.
    pub size: usize,
    pub reps: usize,
    pub median_s: f64,
    pub min_s: f64,
    /// Window or per-pixel transforms performed by one repetition.
    pub transforms: u64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchReport {
    pub cases: Vec<BenchCase>,
}

impl BenchReport {
    pub fn case(&self, name: &str) -> Option<&BenchCase> {
        self.cases.iter().find(|c| c.name == name)
    }

    pub fn extend(&mut self, other: BenchReport) {
        self.cases.extend(other.cases);
    }

    /// `median(naive) / median(fast)` at the given resolution and window.
    pub fn speedup(&self, height: usize, width: usize, window: usize) -> Option<f64> {
        let find = |name: &str| {
            self.cases
                .iter()
                .find(|c| c.name == name && c.height == height && c.width == width && c.size == window)
        };
        Some(find("swt_naive")?.median_s / find("swt_fast")?.median_s)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in &self.cases {
            w.serialize(c).map_err(|e| ToolError::format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| ToolError::format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| ToolError::format(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let cases = r
            .deserialize()
            .collect::<std::result::Result<Vec<BenchCase>, _>>()
            .map_err(|e| ToolError::format(e.to_string()))?;
        Ok(BenchReport { cases })
    }

    pub fn to_kv(&self) -> String {
        let mut entries = Vec::new();
        for c in &self.cases {
            let key = format!("{}.{}x{}.s{}", c.name, c.height, c.width, c.size);
            entries.push((format!("{key}.median_s"), c.median_s.to_string()));
            entries.push((format!("{key}.min_s"), c.min_s.to_string()));
            entries.push((format!("{key}.reps"), c.reps.to_string()));
            entries.push((format!("{key}.transforms"), c.transforms.to_string()));
            entries.push((format!("{key}.threads"), c.threads.to_string()));
        }
        kv_document(entries)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "{:<22} {:>11} {:>5} {:>12} {:>12} {:>12} {:>4}",
            "case", "resolution", "size", "median [s]", "min [s]", "transforms", "thr"
        )
        .unwrap();
        for c in &self.cases {
            writeln!(
                s,
                "{:<22} {:>11} {:>5} {:>12.6} {:>12.6} {:>12} {:>4}",
                c.name,
                format!("{}x{}", c.height, c.width),
                c.size,
                c.median_s,
                c.min_s,
                c.transforms,
                c.threads
            )
            .unwrap();
        }
        s
    }
}
