//! Study reports: tables, verdicts and provenance, written as CSV plus `summary.json`.

use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Less,
    #[serde(rename = "<=")]
    LessEq,
    #[serde(rename = ">=")]
    GreaterEq,
}

impl Relation {
    fn holds(self, measured: f64, tolerance: f64) -> bool {
        match self {
            Self::Less => measured < tolerance,
            Self::LessEq => measured <= tolerance,
            Self::GreaterEq => measured >= tolerance,
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Less => "<",
            Self::LessEq => "<=",
            Self::GreaterEq => ">=",
        })
    }
}

/// One checked quantity against a declared tolerance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    /// Name of the acceptance criterion this check belongs to.
    pub criterion: String,
    pub check: String,
    pub measured: f64,
    pub relation: Relation,
    pub tolerance: f64,
    pub status: Status,
}

impl Verdict {
    pub fn new(criterion: &str, check: &str, measured: f64, relation: Relation, tolerance: f64) -> Self {
        let status = if measured.is_finite() && relation.holds(measured, tolerance) { Status::Pass } else { Status::Fail };
        Self { criterion: criterion.into(), check: check.into(), measured, relation, tolerance, status }
    }

    pub fn not_applicable(criterion: &str, check: &str, measured: f64, relation: Relation, tolerance: f64) -> Self {
        Self { status: Status::NotApplicable, ..Self::new(criterion, check, measured, relation, tolerance) }
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::NotApplicable => "N/A ",
        };
        write!(
            f,
            "{tag} [{}] {}: {:.4e} {} {:.4e}",
            self.criterion, self.check, self.measured, self.relation, self.tolerance
        )
    }
}

/// Named numeric table, written as `<name>.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    #[serde(skip)]
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width mismatch in table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| format!("{v:.17e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub kernel_seed: u64,
    pub version: String,
    pub quick: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub study: String,
    pub tables: Vec<Table>,
    pub verdicts: Vec<Verdict>,
    pub notices: Vec<String>,
    pub provenance: Provenance,
}

impl StudyReport {
    pub fn new(study: &str, provenance: Provenance) -> Self {
        Self { study: study.into(), tables: Vec::new(), verdicts: Vec::new(), notices: Vec::new(), provenance }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn verdict(&self, check: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.check == check)
    }

    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(Verdict::passed)
    }

    pub fn notice(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::info!("{msg}");
        self.notices.push(msg);
    }

    /// Writes `summary.json` and one CSV per table into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for t in &self.tables {
            t.write_csv(&dir.join(format!("{}.csv", t.name)))?;
        }
        let summary = serde_json::json!({
            "study": self.study,
            "passed": self.all_passed(),
            "verdicts": self.verdicts,
            "notices": self.notices,
            "tables": self.tables.iter().map(|t| format!("{}.csv", t.name)).collect::<Vec<_>>(),
            "provenance": self.provenance,
        });
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov() -> Provenance {
        Provenance { config_hash: "00".into(), seeds: vec![1], kernel_seed: 1, version: "0".into(), quick: false }
    }

    #[test]
    fn verdict_status() {
        assert_eq!(Verdict::new("c", "x", 0.5, Relation::Less, 1.0).status, Status::Pass);
        assert_eq!(Verdict::new("c", "x", 1.0, Relation::Less, 1.0).status, Status::Fail);
        assert_eq!(Verdict::new("c", "x", 1.0, Relation::LessEq, 1.0).status, Status::Pass);
        assert_eq!(Verdict::new("c", "x", f64::NAN, Relation::GreaterEq, 1.0).status, Status::Fail);
        assert!(Verdict::not_applicable("c", "x", 5.0, Relation::Less, 1.0).passed());
    }

    #[test]
    fn report_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = StudyReport::new("demo", prov());
        let mut t = Table::new("runs", &["n", "value"]);
        t.push(vec![1.0, 0.25]);
        r.tables.push(t);
        r.verdicts.push(Verdict::new("demo-criterion", "value small", 0.25, Relation::Less, 1.0));
        r.write(dir.path()).unwrap();
        let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(s["passed"], true);
        assert_eq!(s["verdicts"][0]["relation"], "<");
        let csv = std::fs::read_to_string(dir.path().join("runs.csv")).unwrap();
        assert!(csv.starts_with("n,value\n"));
        assert_eq!(r.table("runs").unwrap().column("value").unwrap(), vec![0.25]);
    }
}
