//! Interval-event ingestion and rasterization onto the one-minute grid.
//!
//! Timestamps are local wall-clock minutes counted from `1970-01-01T00:00`
//! with no timezone conversion. Day boundaries are local midnights.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Local-time minutes since `1970-01-01T00:00`.
pub type Minute = i64;

pub const MINUTES_PER_DAY: i64 = 1440;

/// Name reserved for class 0.
pub const IDLE: &str = "Idle";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Sensor,
    Activity,
}

/// A sensor activation or an activity annotation over `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntervalEvent {
    pub kind: EventKind,
    pub id: usize,
    pub start: Minute,
    pub end: Minute,
}

impl IntervalEvent {
    pub fn sensor(id: usize, start: Minute, end: Minute) -> Self {
        Self {
            kind: EventKind::Sensor,
            id,
            start,
            end,
        }
    }

    pub fn activity(id: usize, start: Minute, end: Minute) -> Self {
        Self {
            kind: EventKind::Activity,
            id,
            start,
            end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HouseMeta {
    pub house_id: String,
    #[serde(rename = "sensors")]
    pub sensor_names: Vec<String>,
    #[serde(rename = "activities")]
    pub activity_names: Vec<String>,
}

impl HouseMeta {
    pub fn new(
        house_id: impl Into<String>,
        sensor_names: Vec<String>,
        activity_names: Vec<String>,
    ) -> Result<Self> {
        let meta = Self {
            house_id: house_id.into(),
            sensor_names,
            activity_names,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn sensor_count(&self) -> usize {
        self.sensor_names.len()
    }

    pub fn activity_count(&self) -> usize {
        self.activity_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sensor_names.is_empty() {
            return Err(Error::InvalidMetadata("at least one sensor required".into()));
        }
        if self.activity_names.len() < 2 {
            return Err(Error::InvalidMetadata(
                "at least two activities required (Idle plus one)".into(),
            ));
        }
        if self.activity_names[0] != IDLE {
            return Err(Error::InvalidMetadata(format!(
                "activities[0] must be \"{IDLE}\", found \"{}\"",
                self.activity_names[0]
            )));
        }
        for (what, names) in [
            ("sensor", &self.sensor_names),
            ("activity", &self.activity_names),
        ] {
            let mut seen = HashMap::new();
            for (i, name) in names.iter().enumerate() {
                if let Some(prev) = seen.insert(name.as_str(), i) {
                    return Err(Error::InvalidMetadata(format!(
                        "duplicate {what} name \"{name}\" at indices {prev} and {i}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file =
            File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        let meta: HouseMeta = serde_json::from_reader(BufReader::new(file))?;
        meta.validate()?;
        Ok(meta)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// Dense row-major 0/1 matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl BinaryMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn from_rows<R: AsRef<[u8]>>(cols: usize, rows: &[R]) -> Result<Self> {
        let mut m = Self::zeros(rows.len(), cols);
        for (t, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::Dimension(format!(
                    "row {t} has {} columns, expected {cols}",
                    row.len()
                )));
            }
            for (i, &v) in row.iter().enumerate() {
                if v > 1 {
                    return Err(Error::Domain(format!("non-binary entry {v} at ({t},{i})")));
                }
                m.set(t, i, v);
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        debug_assert!(value <= 1);
        self.data[row * self.cols + col] = value;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[u8] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [u8] {
        &mut self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[u8]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// Copy of rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        Self {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }
}

/// Minute-resolution sensor matrix with per-minute activity labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimesliceSequence {
    pub start_ts: Minute,
    pub x: BinaryMatrix,
    pub y: Vec<usize>,
    pub day_boundaries: Vec<usize>,
}

impl TimesliceSequence {
    /// Builds a sequence from contiguous rows starting at `start_ts`;
    /// day boundaries are derived from local midnights.
    pub fn new(start_ts: Minute, x: BinaryMatrix, y: Vec<usize>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::Dimension(format!(
                "{} sensor rows but {} labels",
                x.rows(),
                y.len()
            )));
        }
        if y.is_empty() {
            return Err(Error::InvalidRange("sequence has no rows".into()));
        }
        let day_boundaries = midnight_boundaries(start_ts, y.len());
        Ok(Self {
            start_ts,
            x,
            y,
            day_boundaries,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_sensors(&self) -> usize {
        self.x.cols()
    }

    pub fn timestamp(&self, row: usize) -> Minute {
        self.start_ts + row as Minute
    }

    pub fn hour_of_row(&self, row: usize) -> u8 {
        hour_of_day(self.timestamp(row))
    }

    /// Same rows with a different sensor matrix (labels and timing kept).
    pub fn with_sensors(&self, x: BinaryMatrix) -> Self {
        assert_eq!(x.rows(), self.len());
        Self {
            start_ts: self.start_ts,
            x,
            y: self.y.clone(),
            day_boundaries: self.day_boundaries.clone(),
        }
    }

    fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            start_ts: self.timestamp(start),
            x: self.x.slice_rows(start, end),
            y: self.y[start..end].to_vec(),
            day_boundaries: midnight_boundaries(self.timestamp(start), end - start),
        }
    }

    /// Joins contiguous parts back into one sequence.
    pub fn concat(parts: &[TimesliceSequence]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidRange("nothing to concatenate".into()))?;
        let cols = first.n_sensors();
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut next = first.start_ts;
        for p in parts {
            if p.start_ts != next || p.n_sensors() != cols {
                return Err(Error::InvalidRange(
                    "parts are not contiguous or differ in width".into(),
                ));
            }
            x.extend_from_slice(&p.x.data);
            y.extend_from_slice(&p.y);
            next += p.len() as Minute;
        }
        let x = BinaryMatrix {
            rows: y.len(),
            cols,
            data: x,
        };
        Self::new(first.start_ts, x, y)
    }
}

pub fn hour_of_day(ts: Minute) -> u8 {
    (ts.rem_euclid(MINUTES_PER_DAY) / 60) as u8
}

fn midnight_boundaries(start_ts: Minute, len: usize) -> Vec<usize> {
    let mut out = vec![0];
    let offset = start_ts.rem_euclid(MINUTES_PER_DAY);
    let mut next = if offset == 0 {
        MINUTES_PER_DAY
    } else {
        MINUTES_PER_DAY - offset
    } as usize;
    while next < len {
        out.push(next);
        next += MINUTES_PER_DAY as usize;
    }
    out
}

/// Rasterizes events onto the minute grid `[start, end)`.
///
/// Overlapping activity annotations resolve to the one with the later start,
/// then to the larger activity id. Unannotated minutes are `Idle` (0).
pub fn rasterize(
    events: &[IntervalEvent],
    meta: &HouseMeta,
    start: Minute,
    end: Minute,
) -> Result<TimesliceSequence> {
    if end <= start {
        return Err(Error::InvalidRange(format!(
            "range [{start}, {end}) is empty"
        )));
    }
    let len = (end - start) as usize;
    let n = meta.sensor_count();
    let c = meta.activity_count();
    for ev in events {
        let limit = match ev.kind {
            EventKind::Sensor => n,
            EventKind::Activity => c,
        };
        if ev.id >= limit {
            return Err(Error::MetadataMismatch(format!(
                "{:?} id {} out of range (house has {limit})",
                ev.kind, ev.id
            )));
        }
        if ev.end < ev.start {
            return Err(Error::InvalidRange(format!(
                "event ends ({}) before it starts ({})",
                ev.end, ev.start
            )));
        }
    }

    let clip = |ev: &IntervalEvent| -> Option<(usize, usize)> {
        let s = ev.start.max(start);
        let e = ev.end.min(end);
        (s < e).then(|| ((s - start) as usize, (e - start) as usize))
    };

    let mut x = BinaryMatrix::zeros(len, n);
    for ev in events.iter().filter(|e| e.kind == EventKind::Sensor) {
        if let Some((s, e)) = clip(ev) {
            for t in s..e {
                x.set(t, ev.id, 1);
            }
        }
    }

    // Painting in (start, id) order lets later-starting, then larger-id,
    // annotations overwrite earlier ones.
    let mut activities: Vec<&IntervalEvent> = events
        .iter()
        .filter(|e| e.kind == EventKind::Activity)
        .collect();
    activities.sort_by_key(|e| (e.start, e.id));
    let mut y = vec![0usize; len];
    for ev in activities {
        if let Some((s, e)) = clip(ev) {
            y[s..e].fill(ev.id);
        }
    }

    TimesliceSequence::new(start, x, y)
}

/// One sub-sequence per calendar day, in order.
pub fn split_days(seq: &TimesliceSequence) -> Vec<TimesliceSequence> {
    let bounds = &seq.day_boundaries;
    bounds
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let e = bounds.get(k + 1).copied().unwrap_or(seq.len());
            seq.slice(s, e)
        })
        .collect()
}

/// Maximal runs of 1s in one sensor column, as absolute `[start, end)` minutes.
pub fn sensor_runs(seq: &TimesliceSequence, sensor: usize) -> Vec<(Minute, Minute)> {
    let mut runs = Vec::new();
    let mut open: Option<usize> = None;
    for t in 0..seq.len() {
        match (seq.x.get(t, sensor), open) {
            (1, None) => open = Some(t),
            (0, Some(s)) => {
                runs.push((seq.timestamp(s), seq.timestamp(t)));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        runs.push((seq.timestamp(s), seq.timestamp(seq.len())));
    }
    runs
}

pub fn parse_timestamp(text: &str) -> std::result::Result<Minute, String> {
    let text = text.trim();
    let dt = ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(text, fmt).ok())
        .ok_or_else(|| format!("unparseable timestamp \"{text}\""))?;
    if dt.second() != 0 || dt.nanosecond() != 0 {
        return Err(format!("timestamp \"{text}\" is not minute-aligned"));
    }
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid epoch");
    Ok((dt - epoch).num_minutes())
}

pub fn format_timestamp(ts: Minute) -> String {
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid epoch");
    (epoch + chrono::Duration::minutes(ts))
        .format("%Y-%m-%dT%H:%M")
        .to_string()
}

#[derive(Debug, Deserialize)]
struct EventRow {
    kind: String,
    id: usize,
    name: String,
    start: String,
    end: String,
}

/// Reads an events CSV (`kind,id,name,start,end`) against its metadata file.
/// Events come back sorted by start (stable on ties).
pub fn load_events(
    events_path: impl AsRef<Path>,
    meta_path: impl AsRef<Path>,
) -> Result<(Vec<IntervalEvent>, HouseMeta)> {
    let meta = HouseMeta::load(meta_path)?;
    let events = read_events(events_path.as_ref(), &meta)?;
    Ok((events, meta))
}

pub fn read_events(path: &Path, meta: &HouseMeta) -> Result<Vec<IntervalEvent>> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_events_from(BufReader::new(file), path, meta)
}

pub(crate) fn read_events_from<R: std::io::Read>(
    reader: R,
    path: &Path,
    meta: &HouseMeta,
) -> Result<Vec<IntervalEvent>> {
    let sensor_index: HashMap<&str, usize> = meta
        .sensor_names
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let activity_index: HashMap<&str, usize> = meta
        .activity_names
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();

    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["kind", "id", "name", "start", "end"];
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }

    let mut events = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let perr = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let row: EventRow = record
            .deserialize(Some(&headers))
            .map_err(|e| perr(e.to_string()))?;
        let (kind, index) = match row.kind.as_str() {
            "sensor" => (EventKind::Sensor, &sensor_index),
            "activity" => (EventKind::Activity, &activity_index),
            other => return Err(perr(format!("unknown kind \"{other}\""))),
        };
        let id = *index.get(row.name.as_str()).ok_or_else(|| {
            Error::MetadataMismatch(format!(
                "{}:{line}: {} \"{}\" is not listed in the metadata",
                path.display(),
                row.kind,
                row.name
            ))
        })?;
        if id != row.id {
            return Err(Error::MetadataMismatch(format!(
                "{}:{line}: {} \"{}\" has index {id} in the metadata but id {} in the file",
                path.display(),
                row.kind,
                row.name,
                row.id
            )));
        }
        let start = parse_timestamp(&row.start).map_err(&perr)?;
        let end = parse_timestamp(&row.end).map_err(&perr)?;
        if end < start {
            return Err(perr(format!("end {} precedes start {}", row.end, row.start)));
        }
        events.push(IntervalEvent {
            kind,
            id,
            start,
            end,
        });
    }
    events.sort_by_key(|e| e.start);
    Ok(events)
}

/// Writes events in the CSV format read by [`load_events`].
pub fn write_events(path: impl AsRef<Path>, events: &[IntervalEvent], meta: &HouseMeta) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["kind", "id", "name", "start", "end"])?;
    for ev in events {
        let (kind, name) = match ev.kind {
            EventKind::Sensor => ("sensor", &meta.sensor_names[ev.id]),
            EventKind::Activity => ("activity", &meta.activity_names[ev.id]),
        };
        w.write_record([
            kind,
            &ev.id.to_string(),
            name,
            &format_timestamp(ev.start),
            &format_timestamp(ev.end),
        ])?;
    }
    w.flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Span `[first start, last end)` covered by the events.
pub fn event_range(events: &[IntervalEvent]) -> Result<(Minute, Minute)> {
    let start = events.iter().map(|e| e.start).min();
    let end = events.iter().map(|e| e.end).max();
    match (start, end) {
        (Some(s), Some(e)) if e > s => Ok((s, e)),
        _ => Err(Error::InvalidRange("events cover no time".into())),
    }
}
