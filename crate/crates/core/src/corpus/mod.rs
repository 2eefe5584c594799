//! Historical decisions: ingestion, persistence, cohort filtering and
//! summary statistics.

mod cohort;
mod record;
mod store;

pub use cohort::{
    quantile_key, summarize, summarize_amounts, type7_quantile, CohortFilter, CohortSummary,
    QUANTILE_LEVELS,
};
pub use record::{parse_row, CaseRecord, IngestRow, RecordStatus};
pub use store::{
    IngestReport, RejectedRow, Snapshot, Store, INGEST_CHUNK, MAX_REPORTED_REJECTIONS,
};
