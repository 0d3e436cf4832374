//! CSV tables: the long-format PM input, the outage log, and the audit,
//! prediction, PR-curve and training-history outputs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use ilos_core::dataset::{AuditRow, FilterDecision};
use ilos_core::eval::PrCurve;
use ilos_core::rits::History;
use ilos_core::synth::OutageEvent;
use ilos_core::{Day, FeatureSchema, PmRecord};

use crate::error::{Error, Result};

pub const PM_HEADER: [&str; 6] = ["network_id", "port_id", "facility_type", "date", "pm_name", "pm_value"];
pub const EVENT_HEADER: [&str; 4] = ["network_id", "port_id", "outage_date", "has_precursor"];

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch")
}

pub fn parse_day(s: &str) -> Option<Day> {
    let d = NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()?;
    Some(Day(d.signed_duration_since(epoch()).num_days() as i32))
}

pub fn format_day(day: Day) -> String {
    (epoch() + chrono::Duration::days(day.0 as i64)).format("%Y-%m-%d").to_string()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(Error::io(path))?))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.position() {
        Some(p) => Error::Parse { path: path.into(), line: p.line(), message: e.to_string() },
        None => Error::format(path, e.to_string()),
    }
}

/// Streaming reader over the long-format PM CSV. Yields records in file
/// order; every error names its line.
pub struct PmCsvReader<R: Read> {
    path: PathBuf,
    rows: csv::StringRecordsIntoIter<R>,
    facilities: Option<Vec<String>>,
}

impl PmCsvReader<BufReader<File>> {
    pub fn open(path: &Path, schema_hint: Option<&FeatureSchema>) -> Result<Self> {
        let file = File::open(path).map_err(Error::io(path))?;
        Self::new(BufReader::new(file), path, schema_hint)
    }
}

impl<R: Read> PmCsvReader<R> {
    pub fn new(reader: R, path: &Path, schema_hint: Option<&FeatureSchema>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(csv_err(path))?;
        if header.iter().ne(PM_HEADER) {
            return Err(Error::Parse { path: path.into(), line: 1, message: format!("expected header `{}`", PM_HEADER.join(",")) });
        }
        Ok(Self { path: path.into(), rows: rdr.into_records(), facilities: schema_hint.map(|s| s.facilities().to_vec()) })
    }

    fn record(&self, row: csv::StringRecord) -> Result<PmRecord> {
        let line = row.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Parse { path: self.path.clone(), line, message };
        if row.len() != PM_HEADER.len() {
            return Err(bad(format!("expected {} fields, found {}", PM_HEADER.len(), row.len())));
        }
        let day = parse_day(&row[3]).ok_or_else(|| bad(format!("malformed date `{}`", &row[3])))?;
        let pm_value: f64 = row[5].parse().map_err(|_| bad(format!("non-numeric value `{}`", &row[5])))?;
        if !pm_value.is_finite() {
            return Err(bad(format!("non-finite value `{}`", &row[5])));
        }
        if row[4].is_empty() {
            return Err(bad("empty pm_name".into()));
        }
        if let Some(f) = &self.facilities {
            if !f.iter().any(|f| f == &row[2]) {
                return Err(bad(format!("unknown facility `{}`", &row[2])));
            }
        }
        Ok(PmRecord {
            network_id: row[0].into(),
            port_id: row[1].into(),
            facility_type: row[2].into(),
            day,
            pm_name: row[4].into(),
            pm_value,
        })
    }
}

impl<R: Read> Iterator for PmCsvReader<R> {
    type Item = Result<PmRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        let row = self.rows.next()?;
        Some(row.map_err(csv_err(&self.path)).and_then(|r| self.record(r)))
    }
}

pub fn parse_pm_csv(path: &Path, schema_hint: Option<&FeatureSchema>) -> Result<Vec<PmRecord>> {
    PmCsvReader::open(path, schema_hint)?.collect()
}

pub fn write_pm_csv(path: &Path, records: &[PmRecord]) -> Result<()> {
    let mut w = create(path)?;
    let io = Error::io(path);
    let mut body = String::with_capacity(records.len() * 40);
    body.push_str(&PM_HEADER.join(","));
    body.push('\n');
    let mut last_day = (Day(i32::MIN), String::new());
    for r in records {
        if last_day.0 != r.day {
            last_day = (r.day, format_day(r.day));
        }
        body.push_str(&format!("{},{},{},{},{},{}\n", r.network_id, r.port_id, r.facility_type, last_day.1, r.pm_name, r.pm_value));
    }
    w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(io)
}

pub fn write_events(path: &Path, events: &[OutageEvent]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = csv_err(path);
    w.write_record(EVENT_HEADER).map_err(&err)?;
    for e in events {
        w.write_record([e.network_id.as_str(), &e.port_id, &format_day(e.outage_date), if e.has_precursor { "1" } else { "0" }])
            .map_err(&err)?;
    }
    w.flush().map_err(Error::io(path))
}

pub fn read_events(path: &Path) -> Result<Vec<OutageEvent>> {
    let file = File::open(path).map_err(Error::io(path))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    let header = rdr.headers().map_err(csv_err(path))?;
    if header.iter().ne(EVENT_HEADER) {
        return Err(Error::Parse { path: path.into(), line: 1, message: format!("expected header `{}`", EVENT_HEADER.join(",")) });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err(path))?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |m: String| Error::Parse { path: path.into(), line, message: m };
        let outage_date = parse_day(&row[2]).ok_or_else(|| bad(format!("malformed date `{}`", &row[2])))?;
        let has_precursor = match &row[3] {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(bad(format!("has_precursor must be 0 or 1, found `{other}`"))),
        };
        out.push(OutageEvent { network_id: row[0].into(), port_id: row[1].into(), outage_date, has_precursor });
    }
    Ok(out)
}

pub fn write_audit(path: &Path, rows: &[AuditRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = csv_err(path);
    w.write_record(["network_id", "port_id", "present_day", "label", "kept", "reason"]).map_err(&err)?;
    for r in rows {
        let (kept, reason) = match r.decision {
            FilterDecision::Keep => ("1", ""),
            FilterDecision::Drop(d) => ("0", d.as_str()),
        };
        w.write_record([r.network_id.as_str(), &r.port_id, &format_day(r.present_day), if r.label { "1" } else { "0" }, kept, reason])
            .map_err(&err)?;
    }
    w.flush().map_err(Error::io(path))
}

/// One scored sample in a predictions file.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub sample_id: usize,
    pub network_id: String,
    pub port_id: String,
    pub present_day: Day,
    pub label: bool,
    pub score: f64,
}

pub fn write_predictions(path: &Path, rows: &[Prediction]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = csv_err(path);
    w.write_record(["sample_id", "network_id", "port_id", "present_day", "label", "score"]).map_err(&err)?;
    for p in rows {
        w.write_record([
            p.sample_id.to_string(),
            p.network_id.clone(),
            p.port_id.clone(),
            format_day(p.present_day),
            (p.label as u8).to_string(),
            format!("{:e}", p.score),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(Error::io(path))
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let file = File::open(path).map_err(Error::io(path))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err(path))?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |m: &str| Error::Parse { path: path.into(), line, message: m.into() };
        out.push(Prediction {
            sample_id: row[0].parse().map_err(|_| bad("bad sample_id"))?,
            network_id: row[1].into(),
            port_id: row[2].into(),
            present_day: parse_day(&row[3]).ok_or_else(|| bad("bad present_day"))?,
            label: &row[4] == "1",
            score: row[5].parse().map_err(|_| bad("bad score"))?,
        });
    }
    Ok(out)
}

pub fn write_pr_curve(path: &Path, curve: &PrCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = csv_err(path);
    w.write_record(["threshold", "precision", "recall"]).map_err(&err)?;
    for p in &curve.points {
        w.write_record([format!("{:e}", p.threshold), p.precision.to_string(), p.recall.to_string()]).map_err(&err)?;
    }
    w.flush().map_err(Error::io(path))
}

pub fn write_history(path: &Path, history: &History) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = csv_err(path);
    w.write_record([
        "epoch",
        "phase",
        "train_estimation",
        "train_consistency",
        "train_classification",
        "valid_estimation",
        "valid_consistency",
        "valid_classification",
        "valid_score",
    ])
    .map_err(&err)?;
    for r in &history.records {
        w.write_record([
            r.epoch.to_string(),
            r.phase.as_str().to_string(),
            r.train.estimation().to_string(),
            r.train.consistency.to_string(),
            r.train.classification().to_string(),
            r.valid.estimation().to_string(),
            r.valid.consistency.to_string(),
            r.valid.classification().to_string(),
            r.valid_score.map_or(String::new(), |d| d.to_string()),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(Error::io(path))
}
