//! Canonical timeslice dataset file: gzip-compressed CSV with header
//! `ts,y,s0..s{N-1}` and the house metadata as a `<file>.meta.json` sidecar.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::{Compression, GzBuilder};

use crate::dataset::{format_timestamp, parse_timestamp, BinaryMatrix, HouseMeta, TimesliceSequence};
use crate::error::{Error, Result};

pub fn meta_sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

/// Writes the dataset and its metadata sidecar. Output is byte-identical for
/// identical input (the gzip header carries no timestamp).
pub fn write_dataset(path: impl AsRef<Path>, seq: &TimesliceSequence, meta: &HouseMeta) -> Result<()> {
    let path = path.as_ref();
    if seq.n_sensors() != meta.sensor_count() {
        return Err(Error::MetadataMismatch(format!(
            "sequence has {} sensors, metadata lists {}",
            seq.n_sensors(),
            meta.sensor_count()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let gz: GzEncoder<BufWriter<File>> = GzBuilder::new()
        .mtime(0)
        .write(BufWriter::new(file), Compression::default());
    let mut w = csv::Writer::from_writer(gz);
    let mut header = vec!["ts".to_string(), "y".to_string()];
    header.extend((0..seq.n_sensors()).map(|i| format!("s{i}")));
    w.write_record(&header)?;
    let mut rec: Vec<String> = Vec::with_capacity(header.len());
    for t in 0..seq.len() {
        rec.clear();
        rec.push(format_timestamp(seq.timestamp(t)));
        rec.push(seq.y[t].to_string());
        rec.extend(seq.x.row(t).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    let gz = w
        .into_inner()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e.into_error()))?;
    gz.finish()
        .and_then(|mut b| b.flush())
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    meta.save(meta_sidecar(path))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<(TimesliceSequence, HouseMeta)> {
    let path = path.as_ref();
    let meta = HouseMeta::load(meta_sidecar(path))?;
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut rdr = csv::Reader::from_reader(GzDecoder::new(BufReader::new(file)));
    let n = meta.sensor_count();
    let c = meta.activity_count();
    let header = rdr.headers()?.clone();
    if header.len() != n + 2 || &header[0] != "ts" || &header[1] != "y" {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header ts,y,s0..s{}", n.saturating_sub(1)),
        });
    }
    let mut start = None;
    let mut y = Vec::new();
    let mut bits = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let perr = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let ts = parse_timestamp(&record[0]).map_err(&perr)?;
        let first = *start.get_or_insert(ts);
        if ts != first + y.len() as i64 {
            return Err(perr("rows are not consecutive minutes".into()));
        }
        let label: usize = record[1].parse().map_err(|_| perr(format!("bad label \"{}\"", &record[1])))?;
        if label >= c {
            return Err(perr(format!("label {label} out of range 0..{c}")));
        }
        y.push(label);
        for v in record.iter().skip(2) {
            match v {
                "0" => bits.push(0u8),
                "1" => bits.push(1u8),
                other => return Err(perr(format!("non-binary sensor value \"{other}\""))),
            }
        }
    }
    let start = start.ok_or_else(|| Error::InvalidRange(format!("{} has no rows", path.display())))?;
    let rows: Vec<&[u8]> = bits.chunks(n).collect();
    let x = BinaryMatrix::from_rows(n, &rows)?;
    Ok((TimesliceSequence::new(start, x, y)?, meta))
}
