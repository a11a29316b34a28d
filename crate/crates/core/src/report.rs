//! Tabular consistency reports shared by the family and kernel checks.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

/// One checked pair.
#[derive(Clone, Debug, Serialize)]
pub struct ConsistencyRow {
    pub left: String,
    pub right: String,
    pub max_discrepancy: f64,
    pub pass: bool,
    /// Probe function attaining the worst discrepancy.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConsistencyReport {
    pub columns: [&'static str; 2],
    pub tol: f64,
    pub rows: Vec<ConsistencyRow>,
}

impl ConsistencyReport {
    pub fn new(columns: [&'static str; 2], tol: f64) -> Self {
        Self { columns, tol, rows: Vec::new() }
    }

    pub fn push(&mut self, left: String, right: String, discrepancy: f64, witness: Option<Vec<f64>>) {
        let pass = discrepancy <= self.tol;
        self.rows.push(ConsistencyRow { left, right, max_discrepancy: discrepancy, pass, witness });
    }

    /// Re-judges every row against a new tolerance.
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        for r in &mut self.rows {
            r.pass = r.max_discrepancy <= tol;
        }
        self
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn first_failure(&self) -> Option<&ConsistencyRow> {
        self.rows.iter().find(|r| !r.pass)
    }

    pub fn max_discrepancy(&self) -> f64 {
        self.rows.iter().map(|r| r.max_discrepancy).fold(0.0, f64::max)
    }

    /// Writes `left,right,max_discrepancy,pass` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Argument(format!("writing CSV: {e}"));
        w.write_record([self.columns[0], self.columns[1], "max_discrepancy", "pass"]).map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.left.as_str(),
                r.right.as_str(),
                &format!("{:e}", r.max_discrepancy),
                if r.pass { "true" } else { "false" },
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Argument(format!("writing CSV: {e}")))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_rows() {
        let mut r = ConsistencyReport::new(["J", "K"], 1e-9);
        r.push("{0,1}".into(), "{0}".into(), 0.0, None);
        r.push("{0,1}".into(), "{1}".into(), 0.5, Some(vec![1.0, 0.0]));
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "J,K,max_discrepancy,pass\n\"{0,1}\",{0},0e0,true\n\"{0,1}\",{1},5e-1,false\n");
        assert!(!r.passed());
        assert_eq!(r.first_failure().unwrap().witness.as_deref(), Some(&[1.0, 0.0][..]));
    }
}
