//! File-backed case store on top of redb.
//!
//! Layout:
//! - `records`: case_id -> JSON-encoded [`CaseRecord`]
//! - `by_class`, `by_subject`, `by_county`, `by_judge`, `by_date`:
//!   multimap secondary indexes, dimension value -> case_id
//! - `meta`: corpus version and record counters
//!
//! Readers work against a [`Snapshot`] (one redb read transaction), so a
//! filter and the summary computed from it always see the same state.
//! Writes go through a single writer lock.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;
use redb::{
    Database, Durability, MultimapTableDefinition, ReadTransaction, ReadableTable,
    ReadableTableMetadata, TableDefinition,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::cohort::CohortFilter;
use super::record::{parse_row, CaseRecord, IngestRow};

const RECORDS: TableDefinition<&str, &[u8]> = TableDefinition::new("records");
const META: TableDefinition<&str, u64> = TableDefinition::new("meta");
const BY_CLASS: MultimapTableDefinition<&str, &str> = MultimapTableDefinition::new("by_class");
const BY_SUBJECT: MultimapTableDefinition<&str, &str> = MultimapTableDefinition::new("by_subject");
const BY_COUNTY: MultimapTableDefinition<&str, &str> = MultimapTableDefinition::new("by_county");
const BY_JUDGE: MultimapTableDefinition<&str, &str> = MultimapTableDefinition::new("by_judge");
const BY_DATE: MultimapTableDefinition<&str, &str> = MultimapTableDefinition::new("by_date");

const VERSION_KEY: &str = "version";
const ELIGIBLE_KEY: &str = "eligible";

/// Rows per write transaction during ingest; bounds ingest memory.
pub const INGEST_CHUNK: usize = 10_000;
/// Rejection reasons kept verbatim in a report.
pub const MAX_REPORTED_REJECTIONS: usize = 1_000;
const CACHE_BYTES: usize = 64 * 1024 * 1024;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    /// 1-based line number in the input.
    pub line: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub case_id: Option<String>,
    pub code: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub corpus_version: u64,
    pub accepted: u64,
    pub duplicates: u64,
    pub rejected: u64,
    /// The first [`MAX_REPORTED_REJECTIONS`] rejections.
    pub rejections: Vec<RejectedRow>,
}

impl IngestReport {
    fn reject(&mut self, line: u64, case_id: Option<String>, err: &Error) {
        self.rejected += 1;
        if self.rejections.len() < MAX_REPORTED_REJECTIONS {
            self.rejections.push(RejectedRow {
                line,
                case_id,
                code: err.code().to_string(),
                message: err.to_string(),
            });
        }
    }
}

pub struct Store {
    db: Database,
    writer: Mutex<()>,
}

type Prepared = (u64, Result<(CaseRecord, Vec<u8>)>);

impl Store {
    /// Opens the store at `path`, creating it if needed.
    pub fn open(path: impl AsRef<Path>) -> Result<Store> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let db = Database::builder()
            .set_cache_size(CACHE_BYTES)
            .create(path)?;
        let txn = db.begin_write()?;
        {
            let mut meta = txn.open_table(META)?;
            if meta.get(VERSION_KEY)?.is_none() {
                meta.insert(VERSION_KEY, 0)?;
                meta.insert(ELIGIBLE_KEY, 0)?;
            }
            txn.open_table(RECORDS)?;
            for def in [BY_CLASS, BY_SUBJECT, BY_COUNTY, BY_JUDGE, BY_DATE] {
                txn.open_multimap_table(def)?;
            }
        }
        txn.commit()?;
        Ok(Store {
            db,
            writer: Mutex::new(()),
        })
    }

    pub fn snapshot(&self) -> Result<Snapshot> {
        Ok(Snapshot {
            txn: self.db.begin_read()?,
        })
    }

    /// Ingests line-delimited JSON rows. Row-level problems are reported,
    /// never fatal; I/O errors on the reader abort the batch.
    pub fn ingest_reader<R: BufRead>(&self, reader: R) -> Result<IngestReport> {
        let mut lines = reader
            .lines()
            .enumerate()
            .filter_map(|(i, line)| match line {
                Ok(l) if l.trim().is_empty() => None,
                other => Some((i as u64 + 1, other)),
            });
        let mut io_error = None;
        let rows = std::iter::from_fn(|| match lines.next()? {
            (n, Ok(l)) => Some((n, parse_row(&l))),
            (_, Err(e)) => {
                io_error = Some(e);
                None
            }
        });
        let report = self.ingest(rows)?;
        match io_error {
            Some(e) => Err(e.into()),
            None => Ok(report),
        }
    }

    /// Ingests a stream of `(line number, parsed row)` pairs as one batch.
    ///
    /// Re-ingesting an identical record is a no-op counted as a duplicate;
    /// the same id with different content is rejected as a conflict. The
    /// corpus version is incremented once per batch.
    pub fn ingest<I>(&self, rows: I) -> Result<IngestReport>
    where
        I: IntoIterator<Item = (u64, Result<IngestRow>)>,
    {
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let mut report = IngestReport::default();
        let mut rows = rows.into_iter();
        loop {
            let chunk: Vec<(u64, Result<IngestRow>)> = rows.by_ref().take(INGEST_CHUNK).collect();
            if chunk.is_empty() {
                break;
            }
            let prepared: Vec<Prepared> = chunk
                .into_par_iter()
                .map(|(line, row)| {
                    let rec = row.and_then(CaseRecord::from_row).and_then(|rec| {
                        let bytes =
                            serde_json::to_vec(&rec).map_err(|e| Error::Schema(e.to_string()))?;
                        Ok((rec, bytes))
                    });
                    (line, rec)
                })
                .collect();
            self.write_chunk(prepared, &mut report)?;
        }

        let mut txn = self.db.begin_write()?;
        txn.set_durability(Durability::Immediate);
        {
            let mut meta = txn.open_table(META)?;
            let version = meta.get(VERSION_KEY)?.map_or(0, |v| v.value()) + 1;
            meta.insert(VERSION_KEY, version)?;
            report.corpus_version = version;
        }
        txn.commit()?;
        Ok(report)
    }

    fn write_chunk(&self, prepared: Vec<Prepared>, report: &mut IngestReport) -> Result<()> {
        let mut txn = self.db.begin_write()?;
        txn.set_durability(Durability::Eventual);
        {
            let mut records = txn.open_table(RECORDS)?;
            let mut by_class = txn.open_multimap_table(BY_CLASS)?;
            let mut by_subject = txn.open_multimap_table(BY_SUBJECT)?;
            let mut by_county = txn.open_multimap_table(BY_COUNTY)?;
            let mut by_judge = txn.open_multimap_table(BY_JUDGE)?;
            let mut by_date = txn.open_multimap_table(BY_DATE)?;
            let mut meta = txn.open_table(META)?;
            let mut eligible = meta.get(ELIGIBLE_KEY)?.map_or(0, |v| v.value());

            for (line, item) in prepared {
                let (rec, bytes) = match item {
                    Ok(v) => v,
                    Err(e) => {
                        report.reject(line, None, &e);
                        continue;
                    }
                };
                let id = rec.case_id.as_str();
                let existing = records.get(id)?.map(|v| v.value().to_vec());
                match existing {
                    Some(stored) if stored == bytes => report.duplicates += 1,
                    Some(_) => {
                        report.reject(line, Some(id.to_string()), &Error::Conflict(id.to_string()))
                    }
                    None => {
                        records.insert(id, bytes.as_slice())?;
                        by_class.insert(rec.case_class.as_str(), id)?;
                        for s in &rec.subjects {
                            by_subject.insert(s.as_str(), id)?;
                        }
                        by_county.insert(rec.county.as_str(), id)?;
                        by_judge.insert(rec.judge.as_str(), id)?;
                        by_date.insert(rec.decision_date.to_string().as_str(), id)?;
                        if rec.is_eligible() {
                            eligible += 1;
                        }
                        report.accepted += 1;
                    }
                }
            }
            meta.insert(ELIGIBLE_KEY, eligible)?;
        }
        txn.commit()?;
        Ok(())
    }
}

/// A consistent read view of the store.
pub struct Snapshot {
    txn: ReadTransaction,
}

impl Snapshot {
    pub fn version(&self) -> Result<u64> {
        Ok(self
            .txn
            .open_table(META)?
            .get(VERSION_KEY)?
            .map_or(0, |v| v.value()))
    }

    pub fn record_count(&self) -> Result<u64> {
        Ok(self.txn.open_table(RECORDS)?.len()?)
    }

    /// Records whose indemnity is usable in cohorts.
    pub fn eligible_count(&self) -> Result<u64> {
        Ok(self
            .txn
            .open_table(META)?
            .get(ELIGIBLE_KEY)?
            .map_or(0, |v| v.value()))
    }

    pub fn get(&self, case_id: &str) -> Result<Option<CaseRecord>> {
        let table = self.txn.open_table(RECORDS)?;
        let found = table.get(case_id)?;
        found.map(|v| decode(v.value())).transpose()
    }

    /// Visits every record in case_id order.
    pub fn for_each_record(&self, mut f: impl FnMut(CaseRecord) -> Result<()>) -> Result<()> {
        let table = self.txn.open_table(RECORDS)?;
        for entry in table.iter()? {
            let (_, v) = entry?;
            f(decode(v.value())?)?;
        }
        Ok(())
    }

    /// SHA-256 over every stored record in key order. Independent of the
    /// corpus version and of ingest batching.
    pub fn content_hash(&self) -> Result<String> {
        let table = self.txn.open_table(RECORDS)?;
        let mut h = Sha256::new();
        for entry in table.iter()? {
            let (k, v) = entry?;
            let (k, v) = (k.value(), v.value());
            h.update((k.len() as u64).to_be_bytes());
            h.update(k.as_bytes());
            h.update((v.len() as u64).to_be_bytes());
            h.update(v);
        }
        Ok(hex::encode(h.finalize()))
    }

    /// Records matching every present filter dimension and carrying an
    /// indemnity, ordered by (decision_date, case_id).
    pub fn filter_cases(&self, filter: &CohortFilter) -> Result<Vec<CaseRecord>> {
        filter.validate()?;
        let mut out = Vec::new();
        let mut keep = |rec: CaseRecord| {
            if rec.is_eligible() && filter.matches(&rec) {
                out.push(rec);
            }
            Ok(())
        };
        match self.candidates(filter)? {
            Some(ids) => {
                let table = self.txn.open_table(RECORDS)?;
                for id in ids {
                    if let Some(v) = table.get(id.as_str())? {
                        keep(decode(v.value())?)?;
                    }
                }
            }
            None => self.for_each_record(keep)?,
        }
        out.sort_by(|a, b| (a.decision_date, &a.case_id).cmp(&(b.decision_date, &b.case_id)));
        Ok(out)
    }

    /// Case ids from the most selective index, or `None` for a full scan.
    fn candidates(&self, filter: &CohortFilter) -> Result<Option<BTreeSet<String>>> {
        let mut best: Option<(u64, MultimapTableDefinition<&str, &str>, &BTreeSet<String>)> = None;
        for (def, set) in [
            (BY_CLASS, filter.classes()),
            (BY_SUBJECT, filter.subjects()),
            (BY_COUNTY, filter.counties()),
            (BY_JUDGE, filter.judges()),
        ] {
            let Some(set) = set else { continue };
            let table = self.txn.open_multimap_table(def)?;
            let mut size = 0;
            for key in set {
                size += table.get(key.as_str())?.len();
            }
            if best.is_none_or(|(n, _, _)| size < n) {
                best = Some((size, def, set));
            }
        }
        if let Some((_, def, set)) = best {
            let table = self.txn.open_multimap_table(def)?;
            let mut ids = BTreeSet::new();
            for key in set {
                for id in table.get(key.as_str())? {
                    ids.insert(id?.value().to_string());
                }
            }
            return Ok(Some(ids));
        }
        if filter.date_from.is_some() || filter.date_to.is_some() {
            let table = self.txn.open_multimap_table(BY_DATE)?;
            let from = filter.date_from.map(|d| d.to_string());
            let to = filter.date_to.map(|d| d.to_string());
            let range = match (&from, &to) {
                (Some(f), Some(t)) => table.range::<&str>(f.as_str()..=t.as_str())?,
                (Some(f), None) => table.range::<&str>(f.as_str()..)?,
                (None, Some(t)) => table.range::<&str>(..=t.as_str())?,
                (None, None) => unreachable!(),
            };
            let mut ids = BTreeSet::new();
            for entry in range {
                let (_, values) = entry?;
                for id in values {
                    ids.insert(id?.value().to_string());
                }
            }
            return Ok(Some(ids));
        }
        Ok(None)
    }

    /// Writes the matching cohort in the ingestion format.
    pub fn export_cohort<W: Write>(&self, filter: &CohortFilter, mut out: W) -> Result<usize> {
        let cohort = self.filter_cases(filter)?;
        for rec in &cohort {
            serde_json::to_writer(&mut out, &rec.to_row()).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(cohort.len())
    }
}

fn decode(bytes: &[u8]) -> Result<CaseRecord> {
    serde_json::from_slice(bytes).map_err(|e| Error::Storage(format!("corrupt record: {e}")))
}
