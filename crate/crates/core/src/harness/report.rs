use std::io;

use serde::{Deserialize, Serialize};

/// How `pass` follows from `simulated`, `reference` and `tolerance`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    /// `|simulated - reference| <= tolerance`.
    Abs,
    /// `simulated <= reference + tolerance`.
    Upper,
    /// `simulated >= reference - tolerance`.
    Lower,
    /// Informational; always passes.
    Report,
}

impl Rule {
    pub fn check(self, simulated: f64, reference: f64, tolerance: f64) -> bool {
        match self {
            Rule::Abs => (simulated - reference).abs() <= tolerance,
            Rule::Upper => simulated <= reference + tolerance,
            Rule::Lower => simulated >= reference - tolerance,
            Rule::Report => true,
        }
    }
}

/// One line of a verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    pub t: Option<f64>,
    pub colony: Option<usize>,
    pub observable: String,
    pub simulated: f64,
    pub reference: f64,
    pub std_error: f64,
    pub tolerance: f64,
    pub rule: Rule,
    pub pass: bool,
}

impl ReportRow {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        experiment: &str,
        k: Option<f64>,
        t: Option<f64>,
        colony: Option<usize>,
        observable: impl Into<String>,
        simulated: f64,
        reference: f64,
        std_error: f64,
        tolerance: f64,
        rule: Rule,
    ) -> Self {
        ReportRow {
            experiment: experiment.to_string(),
            k,
            t,
            colony,
            observable: observable.into(),
            simulated,
            reference,
            std_error,
            tolerance,
            rule,
            pass: rule.check(simulated, reference, tolerance),
        }
    }

    /// Recomputes the pass flag from the row's own columns.
    pub fn recheck(&self) -> bool {
        self.rule.check(self.simulated, self.reference, self.tolerance)
    }
}

pub fn all_pass(rows: &[ReportRow]) -> bool {
    rows.iter().all(|r| r.pass)
}

pub fn write_report<W: io::Write>(rows: &[ReportRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report<R: io::Read>(input: R) -> csv::Result<Vec<ReportRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}
