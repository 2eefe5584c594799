use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::{self, ExtractionStatus};
use crate::money::Money;

/// How a record's indemnity amount was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RecordStatus {
    Found,
    Ambiguous,
    NoAmount,
    Provided,
}

impl RecordStatus {
    /// Whether records with this status take part in cohorts.
    pub fn is_eligible(self) -> bool {
        matches!(self, RecordStatus::Found | RecordStatus::Provided)
    }
}

impl From<ExtractionStatus> for RecordStatus {
    fn from(s: ExtractionStatus) -> Self {
        match s {
            ExtractionStatus::Found => RecordStatus::Found,
            ExtractionStatus::Ambiguous => RecordStatus::Ambiguous,
            ExtractionStatus::NoAmount => RecordStatus::NoAmount,
        }
    }
}

/// One line of an ingestion (or export) file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestRow {
    pub case_id: String,
    pub county: String,
    pub judge: String,
    pub decision_date: NaiveDate,
    pub case_class: String,
    pub subjects: Vec<String>,
    pub ementa: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inteiro_teor: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indemnity_minor_units: Option<i64>,
}

/// A stored court decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub county: String,
    pub judge: String,
    pub decision_date: NaiveDate,
    pub case_class: String,
    pub subjects: Vec<String>,
    pub ementa: String,
    pub inteiro_teor: Option<String>,
    pub indemnity: Option<Money>,
    pub extraction_status: RecordStatus,
}

impl CaseRecord {
    /// Validates a row and, when no amount is supplied, runs extraction over
    /// the headnote and full text.
    pub fn from_row(row: IngestRow) -> Result<CaseRecord> {
        if row.case_id.trim().is_empty() {
            return Err(Error::Schema("case_id must be non-empty".into()));
        }
        let (indemnity, extraction_status) = match row.indemnity_minor_units {
            Some(v) if v < 0 => {
                return Err(Error::Schema(format!(
                    "indemnity_minor_units must be >= 0, got {v}"
                )))
            }
            Some(v) => (Some(Money(v)), RecordStatus::Provided),
            None => {
                let result =
                    extraction::extract_from_decision(&row.ementa, row.inteiro_teor.as_deref());
                (result.chosen.map(|m| m.amount), result.status.into())
            }
        };
        Ok(CaseRecord {
            case_id: row.case_id,
            county: row.county,
            judge: row.judge,
            decision_date: row.decision_date,
            case_class: row.case_class,
            subjects: row.subjects,
            ementa: row.ementa,
            inteiro_teor: row.inteiro_teor,
            indemnity,
            extraction_status,
        })
    }

    pub fn is_eligible(&self) -> bool {
        self.extraction_status.is_eligible() && self.indemnity.is_some()
    }

    /// Back to the ingestion format. Extracted amounts are written out as
    /// explicit amounts.
    pub fn to_row(&self) -> IngestRow {
        IngestRow {
            case_id: self.case_id.clone(),
            county: self.county.clone(),
            judge: self.judge.clone(),
            decision_date: self.decision_date,
            case_class: self.case_class.clone(),
            subjects: self.subjects.clone(),
            ementa: self.ementa.clone(),
            inteiro_teor: self.inteiro_teor.clone(),
            indemnity_minor_units: self.indemnity.map(Money::minor_units),
        }
    }
}

/// Parses one line of an ingestion file.
pub fn parse_row(line: &str) -> Result<IngestRow> {
    serde_json::from_str(line).map_err(|e| Error::Schema(e.to_string()))
}
