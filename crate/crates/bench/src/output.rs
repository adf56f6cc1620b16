use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Agreement {
    Same,
    Different,
    Failed,
}

/// One solver run on one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub problem: String,
    pub n: usize,
    pub r: usize,
    pub mu: f64,
    pub instance: usize,
    pub solver: String,
    pub cpu_s: f64,
    pub iters: usize,
    #[serde(rename = "F")]
    pub f: f64,
    pub sparsity: f64,
    /// Squared subspace distance to the ManPG solution of the same instance.
    pub dist2: f64,
    pub agreement: Agreement,
    pub linesearch: usize,
    pub ssn_mean: f64,
}

/// Means over the `same` runs of one `(grid point, solver)` pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub problem: String,
    pub n: usize,
    pub r: usize,
    pub mu: f64,
    pub solver: String,
    pub same: usize,
    pub different: usize,
    pub failed: usize,
    pub cpu_s: f64,
    pub iters: f64,
    #[serde(rename = "F")]
    pub f: f64,
    pub sparsity: f64,
    pub dist2: f64,
    pub linesearch: f64,
    pub ssn_mean: f64,
}

pub fn aggregate(records: &[RunRecord]) -> Vec<AggregateRow> {
    let mut order: Vec<(String, usize, usize, u64, String)> = Vec::new();
    let mut groups: HashMap<(String, usize, usize, u64, String), Vec<&RunRecord>> = HashMap::new();
    for rec in records {
        let key = (rec.problem.clone(), rec.n, rec.r, rec.mu.to_bits(), rec.solver.clone());
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(rec);
    }
    order
        .into_iter()
        .map(|key| {
            let recs = &groups[&key];
            let count = |a: Agreement| recs.iter().filter(|r| r.agreement == a).count();
            let same: Vec<&&RunRecord> = recs.iter().filter(|r| r.agreement == Agreement::Same).collect();
            let mean = |f: &dyn Fn(&RunRecord) -> f64| {
                if same.is_empty() {
                    f64::NAN
                } else {
                    same.iter().map(|r| f(r)).sum::<f64>() / same.len() as f64
                }
            };
            AggregateRow {
                problem: key.0.clone(),
                n: key.1,
                r: key.2,
                mu: f64::from_bits(key.3),
                solver: key.4.clone(),
                same: same.len(),
                different: count(Agreement::Different),
                failed: count(Agreement::Failed),
                cpu_s: mean(&|r| r.cpu_s),
                iters: mean(&|r| r.iters as f64),
                f: mean(&|r| r.f),
                sparsity: mean(&|r| r.sparsity),
                dist2: mean(&|r| r.dist2),
                linesearch: mean(&|r| r.linesearch as f64),
                ssn_mean: mean(&|r| r.ssn_mean),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutputPaths {
    pub raw: PathBuf,
    pub aggregate: PathBuf,
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `raw.csv` and `aggregate.csv` into `dir`.
pub fn emit_csv(records: &[RunRecord], dir: &Path) -> Result<OutputPaths> {
    ensure!(!records.is_empty(), "no records to write");
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let paths = OutputPaths {
        raw: dir.join("raw.csv"),
        aggregate: dir.join("aggregate.csv"),
    };
    write_rows(&paths.raw, records)?;
    write_rows(&paths.aggregate, &aggregate(records))?;
    Ok(paths)
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .map(|row| row.with_context(|| format!("parsing {}", path.display())))
        .collect()
}

pub fn parse_csv(path: &Path) -> Result<Vec<RunRecord>> {
    read_rows(path)
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>> {
    read_rows(path)
}
