//! Run records, Pareto fronts and CSV/JSON reporting.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bases::BasisKind;
use crate::error::{Error, Result};
use crate::training::write_json;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[serde(rename = "ddlspg")]
    DdLspg,
    #[serde(rename = "ddgnat")]
    DdGnat,
    Collocation,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::DdLspg => "ddlspg",
            Method::DdGnat => "ddgnat",
            Method::Collocation => "collocation",
        }
    }
}

/// One row of `study.csv`; the field order is the column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub basis: BasisKind,
    /// `strong` or `weak`.
    pub constraint: String,
    /// Constraints per port (0 for strong).
    pub n_c: usize,
    pub upsilon_state: f64,
    pub upsilon_bnd: f64,
    pub upsilon_res: f64,
    pub ratio: f64,
    pub rel_err: f64,
    pub t_asm: f64,
    pub t_solve: f64,
    pub t_total: f64,
    pub seed: u64,
}

pub const CSV_COLUMNS: [&str; 13] = [
    "method",
    "basis",
    "constraint",
    "n_c",
    "upsilon_state",
    "upsilon_bnd",
    "upsilon_res",
    "ratio",
    "rel_err",
    "t_asm",
    "t_solve",
    "t_total",
    "seed",
];

fn dominates(a: &RunRecord, b: &RunRecord) -> bool {
    a.rel_err <= b.rel_err && a.t_total <= b.t_total && (a.rel_err < b.rel_err || a.t_total < b.t_total)
}

/// Non-dominated records in (relative error, total time), sorted by time.
pub fn pareto_front(records: &[RunRecord]) -> Vec<RunRecord> {
    let mut front: Vec<RunRecord> = records
        .iter()
        .filter(|r| !records.iter().any(|o| dominates(o, r)))
        .cloned()
        .collect();
    front.sort_by(|a, b| a.t_total.total_cmp(&b.t_total).then(a.rel_err.total_cmp(&b.rel_err)));
    front
}

pub fn write_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    if records.is_empty() {
        w.write_record(CSV_COLUMNS).map_err(|e| csv_error(path, e))?;
    }
    for r in records {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "unexpected column layout".into(),
        });
    }
    r.deserialize()
        .map(|row| row.map_err(|e| csv_error(path, e)))
        .collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format {
            path: path.to_path_buf(),
            reason: format!("{other:?}"),
        },
    }
}

fn constraint_label(r: &RunRecord) -> String {
    if r.constraint == "strong" {
        "strong".into()
    } else {
        r.n_c.to_string()
    }
}

/// Mean relative error per basis kind and constraint label.
pub fn error_by_constraint(records: &[RunRecord]) -> BTreeMap<String, BTreeMap<String, f64>> {
    let mut acc: BTreeMap<String, BTreeMap<String, (f64, usize)>> = BTreeMap::new();
    for r in records {
        let e = acc
            .entry(r.basis.name().to_string())
            .or_default()
            .entry(constraint_label(r))
            .or_insert((0.0, 0));
        e.0 += r.rel_err;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(b, m)| (b, m.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect()))
        .collect()
}

/// Writes `study.csv`, one `pareto_<method>.csv` per method and `plot_data.json`.
/// Returns the written paths.
pub fn report(records: &[RunRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("run records"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let study = dir.join("study.csv");
    write_csv(&study, records)?;
    written.push(study);
    let mut by_method: BTreeMap<Method, Vec<RunRecord>> = BTreeMap::new();
    for r in records {
        by_method.entry(r.method).or_default().push(r.clone());
    }
    let mut fronts = BTreeMap::new();
    for (m, recs) in &by_method {
        let front = pareto_front(recs);
        let p = dir.join(format!("pareto_{}.csv", m.name()));
        write_csv(&p, &front)?;
        written.push(p);
        fronts.insert(
            m.name().to_string(),
            front.iter().map(|r| [r.t_total, r.rel_err]).collect::<Vec<_>>(),
        );
    }
    let plot = serde_json::json!({
        "pareto": fronts,
        "error_vs_constraints": error_by_constraint(records),
        "scatter": records.iter().map(|r| serde_json::json!({
            "method": r.method.name(),
            "basis": r.basis.name(),
            "constraint": constraint_label(r),
            "t_total": r.t_total,
            "rel_err": r.rel_err,
        })).collect::<Vec<_>>(),
    });
    let p = dir.join("plot_data.json");
    write_json(&p, &plot)?;
    written.push(p);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(err: f64, t: f64) -> RunRecord {
        RunRecord {
            method: Method::DdGnat,
            basis: BasisKind::Port,
            constraint: "strong".into(),
            n_c: 0,
            upsilon_state: 1e-5,
            upsilon_bnd: 1e-5,
            upsilon_res: 1e-12,
            ratio: 2.0,
            rel_err: err,
            t_asm: t / 2.0,
            t_solve: t / 4.0,
            t_total: t,
            seed: 0,
        }
    }

    #[test]
    fn dominance_example() {
        let front = pareto_front(&[rec(0.1, 1.0), rec(0.2, 2.0), rec(0.05, 3.0)]);
        let pts: Vec<(f64, f64)> = front.iter().map(|r| (r.rel_err, r.t_total)).collect();
        assert_eq!(pts, vec![(0.1, 1.0), (0.05, 3.0)]);
    }

    #[test]
    fn single_record_front() {
        assert_eq!(pareto_front(&[rec(0.3, 0.2)]), vec![rec(0.3, 0.2)]);
    }

    #[test]
    fn empty_report_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(report(&[], dir.path()), Err(Error::EmptyInput(_))));
    }
}
