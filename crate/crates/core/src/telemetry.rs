//! Alarm and work-order ingestion.
//!
//! Raw telemetry arrives as two CSV files, one row per (machine, day, alarm)
//! and one row per (machine, day) work order. [`align_daily`] folds them into
//! a dense [`MachineSeries`] with one observation per calendar day.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of admissible alarm codes.
pub const N_ALARMS: usize = 22;

pub const ALARM_HEADER: [&str; 4] = ["machine_id", "date", "alarm_code", "count"];
pub const ORDER_HEADER: [&str; 3] = ["machine_id", "date", "action"];

const DATE_FORMAT: &str = "%Y-%m-%d";

/// One of the 22 machine alarm codes (A1..A20, A200, A201).
///
/// The inner index is the feature column the code maps to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AlarmCode(u8);

impl AlarmCode {
    pub const ALL: [AlarmCode; N_ALARMS] = {
        let mut all = [AlarmCode(0); N_ALARMS];
        let mut i = 0;
        while i < N_ALARMS {
            all[i] = AlarmCode(i as u8);
            i += 1;
        }
        all
    };

    pub fn from_index(index: usize) -> Option<Self> {
        (index < N_ALARMS).then_some(AlarmCode(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Numeric suffix of the code, e.g. 18 for `A18`, 200 for `A200`.
    pub fn number(self) -> u32 {
        match self.0 {
            i @ 0..=19 => i as u32 + 1,
            20 => 200,
            _ => 201,
        }
    }
}

impl fmt::Display for AlarmCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "A{}", self.number())
    }
}

impl FromStr for AlarmCode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s.strip_prefix('A').ok_or_else(|| s.to_string())?;
        // reject "A01", "A+1" and the like
        if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(s.to_string());
        }
        match digits.parse::<u32>() {
            Ok(n @ 1..=20) => Ok(AlarmCode(n as u8 - 1)),
            Ok(200) => Ok(AlarmCode(20)),
            Ok(201) => Ok(AlarmCode(21)),
            _ => Err(s.to_string()),
        }
    }
}

impl TryFrom<String> for AlarmCode {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<AlarmCode> for String {
    fn from(c: AlarmCode) -> String {
        c.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlarmRecord {
    pub machine_id: String,
    pub date: NaiveDate,
    pub alarm_code: AlarmCode,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkOrderRecord {
    pub machine_id: String,
    pub date: NaiveDate,
    pub action_taken: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyObservation {
    pub alarm_counts: [u32; N_ALARMS],
    pub label: bool,
    /// Day was absent from both inputs and zero-filled.
    pub filled: bool,
}

impl DailyObservation {
    pub fn empty() -> Self {
        DailyObservation { alarm_counts: [0; N_ALARMS], label: false, filled: true }
    }

    pub fn total_alarms(&self) -> u64 {
        self.alarm_counts.iter().map(|&c| c as u64).sum()
    }
}

/// Dense per-machine daily series. `days[i]` is the observation for
/// `start_date + i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineSeries {
    pub machine_id: String,
    pub start_date: NaiveDate,
    pub days: Vec<DailyObservation>,
}

impl MachineSeries {
    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn date(&self, i: usize) -> NaiveDate {
        self.start_date + chrono::Days::new(i as u64)
    }

    pub fn end_date(&self) -> NaiveDate {
        self.date(self.days.len().saturating_sub(1))
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        (0..self.days.len()).map(|i| self.date(i)).collect()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.days.iter().map(|d| d.label).collect()
    }

    pub fn filled_days(&self) -> usize {
        self.days.iter().filter(|d| d.filled).count()
    }

    pub fn positive_days(&self) -> usize {
        self.days.iter().filter(|d| d.label).count()
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("row {row}: malformed row: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("row {row}: unknown alarm code {code:?}")]
    UnknownAlarmCode { row: usize, code: String },
    #[error("row {row}: unparseable date {value:?}")]
    UnparseableDate { row: usize, value: String },
    #[error("header mismatch: expected {expected:?}, found {found:?}")]
    BadHeader { expected: String, found: String },
    #[error("empty date range: {start} > {end}")]
    EmptyRange { start: NaiveDate, end: NaiveDate },
    #[error("duplicate work order for {machine_id} on {date}")]
    DuplicateWorkOrder { machine_id: String, date: NaiveDate },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(input)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), IngestError> {
    let found = rdr.headers()?;
    if found.iter().ne(expected.iter().copied()) {
        return Err(IngestError::BadHeader {
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(())
}

fn parse_date(row: usize, s: &str) -> Result<NaiveDate, IngestError> {
    NaiveDate::parse_from_str(s, DATE_FORMAT)
        .map_err(|_| IngestError::UnparseableDate { row, value: s.to_string() })
}

fn field(rec: &csv::StringRecord, row: usize, width: usize, i: usize) -> Result<&str, IngestError> {
    if rec.len() != width {
        return Err(IngestError::MalformedRow {
            row,
            reason: format!("expected {width} fields, found {}", rec.len()),
        });
    }
    Ok(&rec[i])
}

/// Parses an alarms CSV. Row indices in errors are 1-based data rows
/// (the header is row 0).
pub fn read_alarms<R: Read>(input: R) -> Result<Vec<AlarmRecord>, IngestError> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &ALARM_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let machine_id = field(&rec, row, 4, 0)?;
        if machine_id.is_empty() {
            return Err(IngestError::MalformedRow { row, reason: "empty machine_id".into() });
        }
        let date = parse_date(row, &rec[1])?;
        let alarm_code = rec[2]
            .parse::<AlarmCode>()
            .map_err(|code| IngestError::UnknownAlarmCode { row, code })?;
        let count = rec[3].parse::<u32>().map_err(|e| IngestError::MalformedRow {
            row,
            reason: format!("count {:?}: {e}", &rec[3]),
        })?;
        out.push(AlarmRecord { machine_id: machine_id.to_string(), date, alarm_code, count });
    }
    Ok(out)
}

pub fn read_work_orders<R: Read>(input: R) -> Result<Vec<WorkOrderRecord>, IngestError> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &ORDER_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let machine_id = field(&rec, row, 3, 0)?;
        if machine_id.is_empty() {
            return Err(IngestError::MalformedRow { row, reason: "empty machine_id".into() });
        }
        let date = parse_date(row, &rec[1])?;
        let action_taken = match &rec[2] {
            "0" => false,
            "1" => true,
            other => {
                return Err(IngestError::MalformedRow { row, reason: format!("action {other:?} not in {{0,1}}") })
            }
        };
        out.push(WorkOrderRecord { machine_id: machine_id.to_string(), date, action_taken });
    }
    Ok(out)
}

pub fn parse_alarm_csv(path: impl AsRef<Path>) -> Result<Vec<AlarmRecord>, IngestError> {
    read_alarms(std::fs::File::open(path)?)
}

pub fn parse_work_order_csv(path: impl AsRef<Path>) -> Result<Vec<WorkOrderRecord>, IngestError> {
    read_work_orders(std::fs::File::open(path)?)
}

/// Builds the dense daily series for `machine_id` over `[start, end]`.
///
/// Records of other machines and records outside the range are ignored.
/// Alarm counts for the same (day, code) are summed.
pub fn align_daily(
    alarms: &[AlarmRecord],
    orders: &[WorkOrderRecord],
    machine_id: &str,
    start: NaiveDate,
    end: NaiveDate,
) -> Result<MachineSeries, IngestError> {
    if start > end {
        return Err(IngestError::EmptyRange { start, end });
    }
    let n = (end - start).num_days() as usize + 1;
    let mut days = vec![DailyObservation::empty(); n];
    let slot = |date: NaiveDate| -> Option<usize> {
        (date >= start && date <= end).then(|| (date - start).num_days() as usize)
    };

    for a in alarms.iter().filter(|a| a.machine_id == machine_id) {
        if let Some(i) = slot(a.date) {
            let c = &mut days[i].alarm_counts[a.alarm_code.index()];
            *c = c.saturating_add(a.count);
            days[i].filled = false;
        }
    }
    let mut seen = vec![false; n];
    for o in orders.iter().filter(|o| o.machine_id == machine_id) {
        if let Some(i) = slot(o.date) {
            if std::mem::replace(&mut seen[i], true) {
                return Err(IngestError::DuplicateWorkOrder { machine_id: machine_id.to_string(), date: o.date });
            }
            days[i].label = o.action_taken;
            days[i].filled = false;
        }
    }
    Ok(MachineSeries { machine_id: machine_id.to_string(), start_date: start, days })
}

/// Groups records by machine and aligns each machine over the span of its
/// own records. Machines are returned in lexicographic id order.
pub fn align_all(alarms: &[AlarmRecord], orders: &[WorkOrderRecord]) -> Result<Vec<MachineSeries>, IngestError> {
    let mut spans: BTreeMap<&str, (NaiveDate, NaiveDate)> = BTreeMap::new();
    let dates = alarms
        .iter()
        .map(|a| (a.machine_id.as_str(), a.date))
        .chain(orders.iter().map(|o| (o.machine_id.as_str(), o.date)));
    for (id, date) in dates {
        let span = spans.entry(id).or_insert((date, date));
        span.0 = span.0.min(date);
        span.1 = span.1.max(date);
    }
    spans
        .into_iter()
        .map(|(id, (start, end))| align_daily(alarms, orders, id, start, end))
        .collect()
}

/// Writes the alarm rows of `series` (zero counts omitted) without a header.
fn write_alarm_rows<W: Write>(wtr: &mut csv::Writer<W>, s: &MachineSeries) -> csv::Result<()> {
    for (i, day) in s.days.iter().enumerate() {
        let date = s.date(i).format(DATE_FORMAT).to_string();
        for code in AlarmCode::ALL {
            let count = day.alarm_counts[code.index()];
            if count > 0 {
                wtr.write_record([s.machine_id.as_str(), &date, &code.to_string(), &count.to_string()])?;
            }
        }
    }
    Ok(())
}

/// Writes one work-order row per non-filled day, so that re-aligning the
/// output reproduces the `filled` flags.
fn write_order_rows<W: Write>(wtr: &mut csv::Writer<W>, s: &MachineSeries) -> csv::Result<()> {
    for (i, day) in s.days.iter().enumerate() {
        if day.filled {
            continue;
        }
        let date = s.date(i).format(DATE_FORMAT).to_string();
        wtr.write_record([s.machine_id.as_str(), &date, if day.label { "1" } else { "0" }])?;
    }
    Ok(())
}

pub fn write_alarms<W: Write>(out: W, series: &[MachineSeries]) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(ALARM_HEADER)?;
    for s in series {
        write_alarm_rows(&mut wtr, s)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_work_orders<W: Write>(out: W, series: &[MachineSeries]) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(ORDER_HEADER)?;
    for s in series {
        write_order_rows(&mut wtr, s)?;
    }
    wtr.flush()?;
    Ok(())
}
