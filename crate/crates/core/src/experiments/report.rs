//! Per-realization records, aggregates and their on-disk form.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::atomic::write_atomic;
use crate::error::{Error, Result};
use crate::float_serde;

pub const RECORDS_FILE: &str = "records.csv";
pub const AGGREGATES_FILE: &str = "aggregates.json";
pub const TRACES_DIR: &str = "traces";

/// One measurement of one method in one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    /// Index of the swept cell (SNR, compression rate or patch).
    pub cell: usize,
    /// Name of the swept parameter: `snr`, `delta` or `patch`.
    pub param: String,
    pub param_value: f64,
    pub realization: usize,
    pub seed: u64,
    pub method: String,
    /// `q_db`, `lh` or `cost_reduction`.
    pub metric: String,
    #[serde(with = "float_serde")]
    pub value: f64,
    /// Bank member that produced the value.
    pub operator: String,
    pub iterations: usize,
    /// Relative path of the cost trace, empty when none was written.
    pub cost_trace: String,
    #[serde(skip)]
    pub trace: Option<Vec<f64>>,
}

impl Record {
    /// Failed realizations carry `-inf`.
    pub fn failed(&self) -> bool {
        self.value == f64::NEG_INFINITY
    }
}

/// Mean and sample standard deviation of one `(cell, method, metric)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub cell: usize,
    pub param: String,
    #[serde(with = "float_serde")]
    pub param_value: f64,
    pub method: String,
    pub metric: String,
    /// Records included in the statistics.
    pub n: usize,
    /// Records excluded as failures.
    pub failed: usize,
    #[serde(with = "float_serde")]
    pub mean: f64,
    #[serde(with = "float_serde")]
    pub std: f64,
    /// `std` is 0 by convention because only one record contributed.
    pub single: bool,
}

/// Groups records by `(cell, method, metric)` and reduces each group in
/// realization order, so the result does not depend on record order.
pub fn aggregate(records: &[Record]) -> Result<Vec<Aggregate>> {
    if records.is_empty() {
        return Err(Error::invalid("cannot aggregate an empty record set"));
    }
    let mut groups: BTreeMap<(usize, &str, &str), Vec<&Record>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.cell, r.method.as_str(), r.metric.as_str()))
            .or_default()
            .push(r);
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((cell, method, metric), mut rs) in groups {
        rs.sort_by_key(|r| (r.realization, r.seed));
        let ok: Vec<f64> = rs.iter().filter(|r| !r.failed()).map(|r| r.value).collect();
        let n = ok.len();
        let (mean, std) = match n {
            0 => (f64::NEG_INFINITY, 0.0),
            1 => (ok[0], 0.0),
            _ => {
                let mean = ok.iter().sum::<f64>() / n as f64;
                let ss: f64 = ok.iter().map(|v| (v - mean).powi(2)).sum();
                (mean, (ss / (n - 1) as f64).sqrt())
            }
        };
        out.push(Aggregate {
            cell,
            param: rs[0].param.clone(),
            param_value: rs[0].param_value,
            method: method.to_string(),
            metric: metric.to_string(),
            n,
            failed: rs.len() - n,
            mean,
            std,
            single: n == 1,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    #[serde(skip)]
    pub records: Vec<Record>,
    pub aggregates: Vec<Aggregate>,
}

impl ExperimentReport {
    pub fn new(config: ExperimentConfig, mut records: Vec<Record>) -> Result<Self> {
        records.sort_by(|a, b| {
            (a.cell, a.realization, &a.method, &a.metric).cmp(&(b.cell, b.realization, &b.method, &b.metric))
        });
        let aggregates = aggregate(&records)?;
        Ok(Self {
            config,
            records,
            aggregates,
        })
    }

    /// Aggregate for `(cell, method)`, if present.
    pub fn cell(&self, cell: usize, method: &str) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.cell == cell && a.method == method)
    }

    pub fn records_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn aggregates_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `records.csv`, `aggregates.json` and any cost traces into
    /// `dir`, each file atomically.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        if self.records.iter().any(|r| r.trace.is_some()) {
            let traces = dir.join(TRACES_DIR);
            std::fs::create_dir_all(&traces).map_err(|e| Error::io(&traces, e))?;
            for r in &self.records {
                if let Some(t) = &r.trace {
                    let mut text = String::from("iteration,cost\n");
                    for (i, c) in t.iter().enumerate() {
                        text.push_str(&format!("{i},{}\n", float_serde::to_text(*c)));
                    }
                    write_atomic(&dir.join(&r.cost_trace), text.as_bytes())?;
                }
            }
        }
        write_atomic(&dir.join(RECORDS_FILE), self.records_csv()?.as_bytes())?;
        write_atomic(&dir.join(AGGREGATES_FILE), self.aggregates_json()?.as_bytes())
    }

    /// Reads a written report and checks that the stored aggregates equal
    /// the ones recomputed from the records.
    pub fn load(dir: &Path) -> Result<Self> {
        let rpath = dir.join(RECORDS_FILE);
        let mut reader = csv::Reader::from_path(&rpath)?;
        let records = reader.deserialize().collect::<std::result::Result<Vec<Record>, _>>()?;
        let apath = dir.join(AGGREGATES_FILE);
        let text = std::fs::read_to_string(&apath).map_err(|e| Error::io(&apath, e))?;
        let stored: ExperimentReport = serde_json::from_str(&text)?;
        let recomputed = aggregate(&records)?;
        if !same_bits(&stored.aggregates, &recomputed) {
            return Err(Error::format(
                0,
                format!("{} does not match the records in {}", apath.display(), rpath.display()),
            ));
        }
        Ok(Self {
            config: stored.config,
            records,
            aggregates: stored.aggregates,
        })
    }
}

fn same_bits(a: &[Aggregate], b: &[Aggregate]) -> bool {
    let bits = |x: f64| if x.is_nan() { u64::MAX } else { x.to_bits() };
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.cell == y.cell
                && x.method == y.method
                && x.metric == y.metric
                && x.n == y.n
                && x.failed == y.failed
                && bits(x.mean) == bits(y.mean)
                && bits(x.std) == bits(y.std)
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record(cell: usize, realization: usize, method: &str, value: f64) -> Record {
        Record {
            cell,
            param: "snr".into(),
            param_value: cell as f64 + 1.0,
            realization,
            seed: realization as u64,
            method: method.into(),
            metric: "q_db".into(),
            value,
            operator: "blur".into(),
            iterations: 0,
            cost_trace: String::new(),
            trace: None,
        }
    }

    #[test]
    fn hand_arithmetic() {
        let a = aggregate(&[record(0, 0, "m", 4.0), record(0, 1, "m", 6.0)]).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].mean, 5.0);
        assert_eq!(a[0].std, 2f64.sqrt());
        assert!(!a[0].single);
    }

    #[test]
    fn single_record_flagged() {
        let a = aggregate(&[record(0, 0, "m", 3.0)]).unwrap();
        assert_eq!((a[0].mean, a[0].std, a[0].single, a[0].n), (3.0, 0.0, true, 1));
    }

    #[test]
    fn empty_rejected() {
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn failures_are_counted_not_averaged() {
        let a = aggregate(&[
            record(0, 0, "m", 1.0),
            record(0, 1, "m", f64::NEG_INFINITY),
            record(0, 2, "m", 3.0),
        ])
        .unwrap();
        assert_eq!((a[0].n, a[0].failed, a[0].mean), (2, 1, 2.0));
    }

    #[test]
    fn shuffle_invariant() {
        let mut rs: Vec<Record> = (0..20)
            .map(|i| record(i % 3, i, if i % 2 == 0 { "a" } else { "b" }, (i as f64).sin() * 1e3))
            .collect();
        let a = aggregate(&rs).unwrap();
        rs.reverse();
        rs.swap(3, 11);
        assert_eq!(aggregate(&rs).unwrap(), a);
    }
}
