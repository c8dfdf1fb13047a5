//! Experiment report: confusion matrix, recognition rates and the pattern
//! ANOVA, rendered as text or JSON. The CLI and the service both go through
//! here so their output matches byte for byte.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::lab::{
    confusion_matrix, pattern_anova, recognition_rates, ConfusionMatrix, LabError,
    RecognitionRates, TrialSession,
};
use crate::stats::AnovaResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AnovaSection {
    Computed(AnovaResult),
    NotComputed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub catalog_id: String,
    pub subjects: Vec<String>,
    pub matrix: ConfusionMatrix,
    pub rates: RecognitionRates,
    pub anova: AnovaSection,
}

pub fn build_report(sessions: &[TrialSession]) -> Result<Report, LabError> {
    let matrix = confusion_matrix(sessions)?;
    let rates = recognition_rates(&matrix)?;
    let anova = match pattern_anova(sessions) {
        Ok(a) => AnovaSection::Computed(a),
        Err(LabError::Stats(e)) => AnovaSection::NotComputed {
            reason: e.to_string(),
        },
        Err(e) => return Err(e),
    };
    Ok(Report {
        catalog_id: sessions[0].catalog_id.clone(),
        subjects: sessions.iter().map(|s| s.subject_id.clone()).collect(),
        matrix,
        rates,
        anova,
    })
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let ids = &self.matrix.pattern_ids;
        let w = self
            .matrix
            .row_totals
            .iter()
            .chain(ids)
            .map(|v| v.to_string().len())
            .max()
            .unwrap_or(1)
            .max("total".len())
            + 2;
        writeln!(out, "catalog: {}", self.catalog_id).unwrap();
        writeln!(
            out,
            "subjects: {} ({})",
            self.subjects.len(),
            self.subjects.join(", ")
        )
        .unwrap();
        writeln!(out, "trials: {}", self.matrix.total()).unwrap();
        writeln!(out).unwrap();
        writeln!(out, "confusion matrix (rows presented, columns answered)").unwrap();
        write!(out, "{:>w$}", "").unwrap();
        for id in ids {
            write!(out, "{id:>w$}").unwrap();
        }
        writeln!(out, "{:>w$}", "total").unwrap();
        for (i, id) in ids.iter().enumerate() {
            write!(out, "{id:>w$}").unwrap();
            for c in &self.matrix.counts[i] {
                write!(out, "{c:>w$}").unwrap();
            }
            writeln!(out, "{:>w$}", self.matrix.row_totals[i]).unwrap();
        }
        writeln!(out).unwrap();
        writeln!(out, "recognition rates").unwrap();
        for r in &self.rates.per_pattern {
            writeln!(
                out,
                "  pattern {:>2}: {:6.2}%",
                r.pattern_id,
                100.0 * r.rate
            )
            .unwrap();
        }
        writeln!(out, "  mean      : {:6.2}%", 100.0 * self.rates.mean).unwrap();
        writeln!(out).unwrap();
        writeln!(out, "one-way ANOVA on per-subject recognition").unwrap();
        match &self.anova {
            AnovaSection::Computed(a) => {
                writeln!(
                    out,
                    "  F({}, {}) = {:.4}, p = {:.4e}",
                    a.df1, a.df2, a.f, a.p
                )
                .unwrap();
            }
            AnovaSection::NotComputed { reason } => {
                writeln!(out, "  n/a: {reason}").unwrap();
            }
        }
        out
    }
}
