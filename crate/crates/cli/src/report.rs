//! Benchmark samples and their CSV / plain-text renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// One measurement. Every sample carries the backend, the policy it was
/// taken under and free-form parameters such as `n=100`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub backend: String,
    pub operation: String,
    pub policy: String,
    pub params: String,
    pub seq: u32,
    pub micros: f64,
    pub pairings: Option<u32>,
}

/// Column order of the CSV output.
pub const CSV_HEADER: [&str; 7] = ["backend", "operation", "policy", "params", "seq", "micros", "pairings"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchReport {
    pub samples: Vec<Sample>,
}

/// Order statistics of one `(backend, operation, policy, params)` group.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub backend: String,
    pub operation: String,
    pub policy: String,
    pub params: String,
    pub n: usize,
    pub median: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub pairings: Option<u32>,
}

/// `(operation, policy, params)`.
type GroupKey<'a> = (&'a str, &'a str, &'a str);

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Nearest-rank quantile; `NaN` for an empty slice.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

impl BenchReport {
    pub fn new() -> Self {
        BenchReport::default()
    }

    pub fn push(&mut self, s: Sample) {
        self.samples.push(s);
    }

    pub fn extend(&mut self, other: BenchReport) {
        self.samples.extend(other.samples);
    }

    /// Samples grouped by backend, each group in insertion order.
    pub fn by_backend(&self) -> BTreeMap<&str, Vec<&Sample>> {
        let mut out: BTreeMap<&str, Vec<&Sample>> = BTreeMap::new();
        for s in &self.samples {
            out.entry(s.backend.as_str()).or_default().push(s);
        }
        out
    }

    pub fn values(&self, operation: &str, policy: &str) -> Vec<f64> {
        self.samples.iter().filter(|s| s.operation == operation && s.policy == policy).map(|s| s.micros).collect()
    }

    /// One summary per group, backends grouped together, groups in order
    /// of first appearance within a backend.
    pub fn summaries(&self) -> Vec<Summary> {
        let mut out = Vec::new();
        for (backend, samples) in self.by_backend() {
            let mut groups: Vec<(GroupKey, Vec<&Sample>)> = Vec::new();
            for s in samples {
                let key = (s.operation.as_str(), s.policy.as_str(), s.params.as_str());
                match groups.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, g)) => g.push(s),
                    None => groups.push((key, vec![s])),
                }
            }
            for ((operation, policy, params), g) in groups {
                let v: Vec<f64> = g.iter().map(|s| s.micros).collect();
                out.push(Summary {
                    backend: backend.to_string(),
                    operation: operation.to_string(),
                    policy: policy.to_string(),
                    params: params.to_string(),
                    n: v.len(),
                    median: median(&v),
                    mean: v.iter().sum::<f64>() / v.len() as f64,
                    min: v.iter().copied().fold(f64::INFINITY, f64::min),
                    max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    pairings: g[0].pairings,
                });
            }
        }
        out
    }

    /// Raw samples as CSV, rows grouped by backend. An empty report gives
    /// the header line only.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for samples in self.by_backend().values() {
            for s in samples {
                w.serialize(s).expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
    }

    pub fn from_csv(text: &str) -> Result<Self, csv::Error> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let samples = r.deserialize().collect::<Result<_, _>>()?;
        Ok(BenchReport { samples })
    }

    /// Summary table, one block per backend.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let mut current = None;
        for s in self.summaries() {
            if current.as_deref() != Some(s.backend.as_str()) {
                let _ = writeln!(out, "backend: {}", s.backend);
                let _ = writeln!(
                    out,
                    "  {:<14} {:<14} {:<16} {:>6} {:>12} {:>12} {:>12} {:>12} {:>8}",
                    "operation", "policy", "params", "n", "median_us", "mean_us", "min_us", "max_us", "pairings"
                );
                current = Some(s.backend.clone());
            }
            let pairings = s.pairings.map_or("-".to_string(), |p| p.to_string());
            let _ = writeln!(
                out,
                "  {:<14} {:<14} {:<16} {:>6} {:>12.3} {:>12.3} {:>12.3} {:>12.3} {:>8}",
                s.operation, s.policy, s.params, s.n, s.median, s.mean, s.min, s.max, pairings
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(backend: &str, op: &str, micros: f64, pairings: Option<u32>) -> Sample {
        Sample {
            backend: backend.into(),
            operation: op.into(),
            policy: "eq:42".into(),
            params: "vmax=1000".into(),
            seq: 0,
            micros,
            pairings,
        }
    }

    #[test]
    fn empty_report_is_header_only() {
        assert_eq!(BenchReport::new().to_csv(), "backend,operation,policy,params,seq,micros,pairings\n");
        assert_eq!(BenchReport::from_csv(&BenchReport::new().to_csv()).unwrap(), BenchReport::new());
    }

    #[test]
    fn two_backends_two_groups() {
        let mut r = BenchReport::new();
        r.push(sample("transparent", "encrypt", 1.0, None));
        r.push(sample("external", "encrypt", 2.0, None));
        r.push(sample("transparent", "transform", 3.0, Some(64)));
        let csv = r.to_csv();
        let backends: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(backends, vec!["external", "transparent", "transparent"]);
        let table = r.render_table();
        assert_eq!(table.matches("backend:").count(), 2);
        assert!(table.find("backend: external").unwrap() < table.find("backend: transparent").unwrap());
    }

    #[test]
    fn csv_round_trip() {
        let mut r = BenchReport::new();
        for (i, v) in [0.1, 1e-9, 123456.789, 0.30000000000000004].into_iter().enumerate() {
            let mut s = sample("transparent", "decrypt", v, if i % 2 == 0 { Some(i as u32) } else { None });
            s.seq = i as u32;
            s.params = "a=1,b=\"2\"".into();
            r.push(s);
        }
        assert_eq!(BenchReport::from_csv(&r.to_csv()).unwrap(), r);
    }

    #[test]
    fn quantiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.25), 1.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 1.0), 4.0);
        assert!(median(&[]).is_nan());
    }
}
