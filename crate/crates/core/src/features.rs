//! Sensor representations (raw, changepoint, last-fired, observation-based
//! compaction), duration and time-of-day encodings, and look-back
//! concatenation into model-ready binary feature rows.

use serde::{Deserialize, Serialize};

use crate::dataset::{BinaryMatrix, TimesliceSequence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Raw,
    Changepoint,
    #[value(name = "lastfired")]
    LastFired,
    Ob,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TodEncoding {
    None,
    #[value(name = "onehot")]
    OneHot,
    Unary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DeltaTEncoding {
    None,
    #[value(name = "onehot7")]
    OneHot7,
    #[value(name = "onehot48")]
    OneHot48,
    Unary7,
    Unary48,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Minute,
    Segment,
}

/// Duration binning schemes for Δt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaBins {
    Bins7,
    Bins48,
}

impl DeltaBins {
    pub fn count(self) -> usize {
        match self {
            DeltaBins::Bins7 => 7,
            DeltaBins::Bins48 => 48,
        }
    }
}

impl DeltaTEncoding {
    pub fn width(self) -> usize {
        self.scheme().map_or(0, DeltaBins::count)
    }

    fn scheme(self) -> Option<DeltaBins> {
        match self {
            DeltaTEncoding::None => None,
            DeltaTEncoding::OneHot7 | DeltaTEncoding::Unary7 => Some(DeltaBins::Bins7),
            DeltaTEncoding::OneHot48 | DeltaTEncoding::Unary48 => Some(DeltaBins::Bins48),
        }
    }

    fn is_unary(self) -> bool {
        matches!(self, DeltaTEncoding::Unary7 | DeltaTEncoding::Unary48)
    }
}

impl TodEncoding {
    pub fn width(self) -> usize {
        match self {
            TodEncoding::None => 0,
            _ => 24,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub representation: Representation,
    pub concat_k: usize,
    pub tod_encoding: TodEncoding,
    pub deltat_encoding: DeltaTEncoding,
    pub eval_granularity: Granularity,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            representation: Representation::Raw,
            concat_k: 1,
            tod_encoding: TodEncoding::None,
            deltat_encoding: DeltaTEncoding::None,
            eval_granularity: Granularity::Minute,
        }
    }
}

impl FeatureConfig {
    pub fn new(representation: Representation) -> Self {
        Self {
            representation,
            ..Self::default()
        }
    }

    pub fn with_concat(mut self, k: usize) -> Self {
        self.concat_k = k;
        self
    }

    pub fn with_tod(mut self, tod: TodEncoding) -> Self {
        self.tod_encoding = tod;
        self
    }

    pub fn with_deltat(mut self, deltat: DeltaTEncoding) -> Self {
        self.deltat_encoding = deltat;
        self
    }

    pub fn with_granularity(mut self, g: Granularity) -> Self {
        self.eval_granularity = g;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.concat_k == 0 {
            return Err(Error::InvalidConfig("concat_k must be at least 1".into()));
        }
        if self.representation != Representation::Ob {
            if self.deltat_encoding != DeltaTEncoding::None {
                return Err(Error::InvalidConfig(
                    "Δt encodings require the ob representation".into(),
                ));
            }
            if self.tod_encoding != TodEncoding::None {
                return Err(Error::InvalidConfig(
                    "time-of-day encodings require the ob representation".into(),
                ));
            }
        }
        Ok(())
    }

    /// Width of one data-point block before concatenation.
    pub fn block_width(&self, n_sensors: usize) -> usize {
        n_sensors + self.tod_encoding.width() + self.deltat_encoding.width()
    }

    pub fn feature_width(&self, n_sensors: usize) -> usize {
        self.concat_k * self.block_width(n_sensors)
    }
}

/// Binary rows stored as sorted lists of active column indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SparseRows {
    width: usize,
    offsets: Vec<usize>,
    indices: Vec<u32>,
}

impl SparseRows {
    pub fn new(width: usize) -> Self {
        Self {
            width,
            offsets: vec![0],
            indices: Vec::new(),
        }
    }

    pub fn from_dense<R: AsRef<[u8]>>(width: usize, rows: &[R]) -> Result<Self> {
        let mut out = Self::new(width);
        for (t, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != width {
                return Err(Error::Dimension(format!(
                    "row {t} has {} columns, expected {width}",
                    row.len()
                )));
            }
            out.push_row(
                row.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0)
                    .map(|(i, _)| i as u32),
            );
        }
        Ok(out)
    }

    pub fn push_row(&mut self, active: impl IntoIterator<Item = u32>) {
        let before = self.indices.len();
        self.indices.extend(active);
        let row = &mut self.indices[before..];
        row.sort_unstable();
        debug_assert!(row.iter().all(|&i| (i as usize) < self.width));
        self.offsets.push(self.indices.len());
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rows(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[u32] {
        &self.indices[self.offsets[t]..self.offsets[t + 1]]
    }

    pub fn get(&self, t: usize, col: usize) -> u8 {
        self.row(t).binary_search(&(col as u32)).is_ok() as u8
    }

    pub fn dense_row(&self, t: usize) -> Vec<u8> {
        let mut out = vec![0u8; self.width];
        for &i in self.row(t) {
            out[i as usize] = 1;
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        (0..self.rows()).map(|t| self.dense_row(t)).collect()
    }
}

/// Model input: binary feature rows with labels and the minute span each
/// row stands for.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub f: SparseRows,
    pub labels: Vec<usize>,
    pub minute_spans: Vec<(usize, usize)>,
    pub config: FeatureConfig,
}

impl FeatureSequence {
    /// Bare sequence from dense rows, one minute per row, raw config.
    pub fn from_dense<R: AsRef<[u8]>>(width: usize, rows: &[R], labels: Vec<usize>) -> Result<Self> {
        let f = SparseRows::from_dense(width, rows)?;
        if labels.len() != f.rows() {
            return Err(Error::Dimension(format!(
                "{} rows but {} labels",
                f.rows(),
                labels.len()
            )));
        }
        let minute_spans = (0..labels.len()).map(|t| (t, t)).collect();
        Ok(Self {
            f,
            labels,
            minute_spans,
            config: FeatureConfig::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.f.width()
    }

    pub fn n_minutes(&self) -> usize {
        self.minute_spans.last().map_or(0, |s| s.1 + 1)
    }

    /// Minute-level ground truth reconstructed from the row labels.
    pub fn minute_labels(&self) -> Vec<usize> {
        expand_spans(&self.minute_spans, &self.labels).expect("spans and labels agree")
    }
}

/// A maximal run of identical sensor vector and label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObSegment {
    pub sensors: Vec<u8>,
    pub delta_t: u32,
    pub start_hour: u8,
    pub label: usize,
    pub span: (usize, usize),
}

/// `out[t][i] = 1` iff sensor `i` changed state at `t`; row 0 is compared
/// against all-off.
pub fn to_changepoint(seq: &TimesliceSequence) -> TimesliceSequence {
    let n = seq.n_sensors();
    let mut out = BinaryMatrix::zeros(seq.len(), n);
    let zeros = vec![0u8; n];
    let mut prev: &[u8] = &zeros;
    for t in 0..seq.len() {
        let cur = seq.x.row(t);
        for i in 0..n {
            out.set(t, i, (cur[i] != prev[i]) as u8);
        }
        prev = cur;
    }
    seq.with_sensors(out)
}

/// One-hot of the most recently changed sensor. Simultaneous changes resolve
/// to the lowest index; sensor 0 is marked until the first change.
pub fn to_last_fired(seq: &TimesliceSequence) -> TimesliceSequence {
    let n = seq.n_sensors();
    let mut out = BinaryMatrix::zeros(seq.len(), n);
    let zeros = vec![0u8; n];
    let mut prev: &[u8] = &zeros;
    let mut last = 0usize;
    for t in 0..seq.len() {
        let cur = seq.x.row(t);
        if let Some(i) = (0..n).find(|&i| cur[i] != prev[i]) {
            last = i;
        }
        out.set(t, last, 1);
        prev = cur;
    }
    seq.with_sensors(out)
}

/// Run-length compaction over (sensor vector, label).
pub fn compact_ob(seq: &TimesliceSequence) -> Vec<ObSegment> {
    let mut segments: Vec<ObSegment> = Vec::new();
    let mut first = 0usize;
    for t in 1..=seq.len() {
        let boundary =
            t == seq.len() || seq.x.row(t) != seq.x.row(first) || seq.y[t] != seq.y[first];
        if boundary {
            segments.push(ObSegment {
                sensors: seq.x.row(first).to_vec(),
                delta_t: (t - first) as u32,
                start_hour: seq.hour_of_row(first),
                label: seq.y[first],
                span: (first, t - 1),
            });
            first = t;
        }
    }
    segments
}

/// Replicates each segment's prediction over its minutes.
pub fn expand_predictions(segments: &[ObSegment], preds: &[usize]) -> Result<Vec<usize>> {
    let spans: Vec<(usize, usize)> = segments.iter().map(|s| s.span).collect();
    expand_spans(&spans, preds)
}

/// Replicates `values[k]` over the inclusive row span `spans[k]`.
pub fn expand_spans(spans: &[(usize, usize)], values: &[usize]) -> Result<Vec<usize>> {
    if spans.len() != values.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} segments",
            values.len(),
            spans.len()
        )));
    }
    let total = spans.last().map_or(0, |s| s.1 + 1);
    let mut out = Vec::with_capacity(total);
    for (&(a, b), &v) in spans.iter().zip(values) {
        debug_assert_eq!(a, out.len());
        out.extend(std::iter::repeat(v).take(b - a + 1));
    }
    Ok(out)
}

/// Upper edges (inclusive) of the coarse Δt intervals beyond the 30 unique
/// minutes; anything above the last edge lands in the final bin.
const BINS48_EDGES: [i64; 17] = [
    40, 50, 60, 80, 100, 120, 150, 180, 210, 240, 270, 300, 360, 420, 480, 540, 600,
];
const BINS7_EDGES: [i64; 6] = [5, 30, 60, 120, 150, 660];

pub fn bin_delta_t(minutes: i64, scheme: DeltaBins) -> Result<usize> {
    if minutes < 1 {
        return Err(Error::Domain(format!("Δt must be ≥ 1 minute, got {minutes}")));
    }
    let edge_bin = |edges: &[i64]| edges.iter().position(|&e| minutes <= e).unwrap_or(edges.len());
    Ok(match scheme {
        DeltaBins::Bins48 if minutes <= 30 => (minutes - 1) as usize,
        DeltaBins::Bins48 => 30 + edge_bin(&BINS48_EDGES),
        DeltaBins::Bins7 => edge_bin(&BINS7_EDGES),
    })
}

pub fn encode_one_hot(index: usize, k: usize) -> Result<Vec<u8>> {
    check_index(index, k)?;
    let mut v = vec![0u8; k];
    v[index] = 1;
    Ok(v)
}

/// Thermometer code: positions `0..=index` set.
pub fn encode_unary(index: usize, k: usize) -> Result<Vec<u8>> {
    check_index(index, k)?;
    let mut v = vec![0u8; k];
    v[..=index].fill(1);
    Ok(v)
}

fn check_index(index: usize, k: usize) -> Result<()> {
    if index >= k {
        return Err(Error::Domain(format!("category {index} out of range 0..{k}")));
    }
    Ok(())
}

struct DataPoint {
    active: Vec<u32>,
    label: usize,
    span: (usize, usize),
}

/// Applies the configured representation and encodings, then concatenates
/// each data point with its `concat_k - 1` predecessors.
///
/// Row layout is `[current block, lag 1 block, ..., lag k-1 block]`; each
/// block is `[sensors | tod | Δt]`. Missing predecessors at the start repeat
/// the first data point.
pub fn featurize(seq: &TimesliceSequence, cfg: &FeatureConfig) -> Result<FeatureSequence> {
    cfg.validate()?;
    let n = seq.n_sensors();
    let active_of = |row: &[u8]| -> Vec<u32> {
        row.iter()
            .enumerate()
            .filter(|(_, &v)| v == 1)
            .map(|(i, _)| i as u32)
            .collect()
    };
    let per_minute = |s: &TimesliceSequence| -> Vec<DataPoint> {
        (0..s.len())
            .map(|t| DataPoint {
                active: active_of(s.x.row(t)),
                label: s.y[t],
                span: (t, t),
            })
            .collect()
    };

    let points = match cfg.representation {
        Representation::Raw => per_minute(seq),
        Representation::Changepoint => per_minute(&to_changepoint(seq)),
        Representation::LastFired => per_minute(&to_last_fired(seq)),
        Representation::Ob => {
            let tod_w = cfg.tod_encoding.width();
            let mut points = Vec::new();
            for seg in compact_ob(seq) {
                let mut active = active_of(&seg.sensors);
                let mut push_code = |code: Vec<u8>, offset: usize| {
                    active.extend(
                        code.iter()
                            .enumerate()
                            .filter(|(_, &v)| v == 1)
                            .map(|(i, _)| (offset + i) as u32),
                    );
                };
                let hour = seg.start_hour as usize;
                match cfg.tod_encoding {
                    TodEncoding::None => {}
                    TodEncoding::OneHot => push_code(encode_one_hot(hour, 24)?, n),
                    TodEncoding::Unary => push_code(encode_unary(hour, 24)?, n),
                }
                if let Some(scheme) = cfg.deltat_encoding.scheme() {
                    let bin = bin_delta_t(seg.delta_t as i64, scheme)?;
                    let code = if cfg.deltat_encoding.is_unary() {
                        encode_unary(bin, scheme.count())?
                    } else {
                        encode_one_hot(bin, scheme.count())?
                    };
                    push_code(code, n + tod_w);
                }
                points.push(DataPoint {
                    active,
                    label: seg.label,
                    span: seg.span,
                });
            }
            points
        }
    };

    let block = cfg.block_width(n);
    let mut f = SparseRows::new(cfg.feature_width(n));
    for r in 0..points.len() {
        let row = (0..cfg.concat_k).flat_map(|lag| {
            let src = &points[r.saturating_sub(lag)];
            src.active.iter().map(move |&i| i + (lag * block) as u32)
        });
        f.push_row(row);
    }

    Ok(FeatureSequence {
        f,
        labels: points.iter().map(|p| p.label).collect(),
        minute_spans: points.iter().map(|p| p.span).collect(),
        config: *cfg,
    })
}
