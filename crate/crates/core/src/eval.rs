//! Leave-one-day-out cross-validation, accuracy metrics and confusion
//! matrices.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::TimesliceSequence;
use crate::error::{Error, Result};
use crate::features::{expand_spans, featurize, FeatureConfig, FeatureSequence, Granularity};
use crate::models::{Model, ModelKind, ModelOptions};

pub type Confusion = Vec<Vec<u64>>;

fn check_pair(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} ground-truth labels",
            pred.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Dimension("no labels to evaluate".into()));
    }
    Ok(())
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_pair(pred, truth)?;
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Rows are truth, columns prediction.
pub fn confusion_matrix(pred: &[usize], truth: &[usize], n_classes: usize) -> Result<Confusion> {
    check_pair(pred, truth)?;
    let mut m = vec![vec![0u64; n_classes]; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= n_classes || t >= n_classes {
            return Err(Error::Domain(format!(
                "label {} out of range 0..{n_classes}",
                p.max(t)
            )));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

/// Accuracy of each class that occurs in the truth.
pub fn per_class_from_confusion(confusion: &Confusion) -> BTreeMap<usize, f64> {
    confusion
        .iter()
        .enumerate()
        .filter_map(|(c, row)| {
            let total: u64 = row.iter().sum();
            (total > 0).then(|| (c, row[c] as f64 / total as f64))
        })
        .collect()
}

pub fn accuracy_from_confusion(confusion: &Confusion) -> f64 {
    let total: u64 = confusion.iter().flatten().sum();
    let trace: u64 = (0..confusion.len()).map(|c| confusion[c][c]).sum();
    if total == 0 {
        0.0
    } else {
        trace as f64 / total as f64
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Population standard deviation.
fn std_dev(values: &[f64]) -> f64 {
    let m = mean(values.iter().copied());
    mean(values.iter().map(|v| (v - m).powi(2))).sqrt()
}

pub fn mean_per_class_accuracy(pred: &[usize], truth: &[usize], n_classes: usize) -> Result<f64> {
    let conf = confusion_matrix(pred, truth, n_classes)?;
    Ok(mean(per_class_from_confusion(&conf).into_values()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold_index: usize,
    pub accuracy: f64,
    pub mean_per_class_accuracy: f64,
    pub per_class_accuracy: BTreeMap<usize, f64>,
    pub confusion: Confusion,
    pub n_timeslices: usize,
}

impl FoldReport {
    pub fn from_predictions(
        fold_index: usize,
        pred: &[usize],
        truth: &[usize],
        n_classes: usize,
    ) -> Result<Self> {
        let confusion = confusion_matrix(pred, truth, n_classes)?;
        let per_class_accuracy = per_class_from_confusion(&confusion);
        Ok(Self {
            fold_index,
            accuracy: accuracy_from_confusion(&confusion),
            mean_per_class_accuracy: mean(per_class_accuracy.values().copied()),
            per_class_accuracy,
            confusion,
            n_timeslices: truth.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MpcaAggregation {
    /// Mean and std of the per-fold values.
    #[default]
    Fold,
    /// Computed once from the pooled confusion matrix (std reported as 0).
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub model: ModelKind,
    pub model_options: ModelOptions,
    pub mpca_aggregation: MpcaAggregation,
    /// Worker threads for folds; `None` uses every core.
    #[serde(skip)]
    pub jobs: Option<usize>,
}

impl CvOptions {
    pub fn new(model: ModelKind) -> Self {
        Self {
            model,
            model_options: ModelOptions::default(),
            mpca_aggregation: MpcaAggregation::Fold,
            jobs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub features: FeatureConfig,
    pub model: ModelKind,
    pub model_options: ModelOptions,
    pub mpca_aggregation: MpcaAggregation,
    pub n_classes: usize,
    pub n_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub config: CvConfig,
    pub folds: Vec<FoldReport>,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub mpca_mean: f64,
    pub mpca_std: f64,
    pub pooled_accuracy: f64,
    pub pooled_mpca: f64,
    pub pooled_confusion: Confusion,
}

impl CvReport {
    /// `accuracy: AA.AA ± S.SS  mpca: BB.BB ± S.SS` in percent.
    pub fn summary_line(&self) -> String {
        format!(
            "accuracy: {:.2} ± {:.2}  mpca: {:.2} ± {:.2}",
            100.0 * self.accuracy_mean,
            100.0 * self.accuracy_std,
            100.0 * self.mpca_mean,
            100.0 * self.mpca_std
        )
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// Featurizes one day and decodes it, returning `(pred, truth)` at the
/// configured granularity.
pub fn evaluate_day(
    model: &Model,
    day: &TimesliceSequence,
    features: &FeatureSequence,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let rows = model.predict(features)?;
    Ok(match features.config.eval_granularity {
        Granularity::Segment => (rows, features.labels.clone()),
        Granularity::Minute => {
            let pred = expand_spans(&features.minute_spans, &rows)?;
            debug_assert_eq!(features.minute_labels(), day.y);
            (pred, day.y.clone())
        }
    })
}

/// One fold per day: train on every other day, test on the held-out one.
pub fn cross_validate(
    days: &[TimesliceSequence],
    n_classes: usize,
    cfg: &FeatureConfig,
    opts: &CvOptions,
) -> Result<CvReport> {
    cfg.validate()?;
    opts.model_options.validate()?;
    if days.len() < 2 {
        return Err(Error::InvalidRange(format!(
            "cross-validation needs at least 2 days, got {}",
            days.len()
        )));
    }
    let featurized = days
        .iter()
        .map(|d| featurize(d, cfg))
        .collect::<Result<Vec<_>>>()?;

    let run_fold = |fold: usize| -> Result<FoldReport> {
        let train: Vec<FeatureSequence> = featurized
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != fold)
            .map(|(_, f)| f.clone())
            .collect();
        let wrap = |e: Error| Error::Fold {
            fold,
            source: Box::new(e),
        };
        let model = Model::fit(opts.model, &train, n_classes, &opts.model_options).map_err(wrap)?;
        let (pred, truth) = evaluate_day(&model, &days[fold], &featurized[fold]).map_err(wrap)?;
        FoldReport::from_predictions(fold, &pred, &truth, n_classes).map_err(wrap)
    };

    let run_all = || -> Result<Vec<FoldReport>> {
        (0..days.len()).into_par_iter().map(run_fold).collect()
    };
    let folds = match opts.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Optimizer(format!("thread pool: {e}")))?
            .install(run_all)?,
        None => run_all()?,
    };

    let mut pooled = vec![vec![0u64; n_classes]; n_classes];
    for f in &folds {
        for (row, frow) in pooled.iter_mut().zip(&f.confusion) {
            for (a, b) in row.iter_mut().zip(frow) {
                *a += b;
            }
        }
    }
    let accs: Vec<f64> = folds.iter().map(|f| f.accuracy).collect();
    let mpcas: Vec<f64> = folds.iter().map(|f| f.mean_per_class_accuracy).collect();
    let pooled_mpca = mean(per_class_from_confusion(&pooled).into_values());
    let (mpca_mean, mpca_std) = match opts.mpca_aggregation {
        MpcaAggregation::Fold => (mean(mpcas.iter().copied()), std_dev(&mpcas)),
        MpcaAggregation::Pooled => (pooled_mpca, 0.0),
    };

    Ok(CvReport {
        config: CvConfig {
            features: *cfg,
            model: opts.model,
            model_options: opts.model_options,
            mpca_aggregation: opts.mpca_aggregation,
            n_classes,
            n_days: days.len(),
        },
        accuracy_mean: mean(accs.iter().copied()),
        accuracy_std: std_dev(&accs),
        mpca_mean,
        mpca_std,
        pooled_accuracy: accuracy_from_confusion(&pooled),
        pooled_mpca,
        pooled_confusion: pooled,
        folds,
    })
}

pub fn write_confusion_csv(confusion: &Confusion, names: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["truth\\pred".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for (name, row) in names.iter().zip(confusion) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(u64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Self-contained SVG heatmap; colour is each cell's share of its truth row.
pub fn confusion_svg(confusion: &Confusion, names: &[String]) -> Result<String> {
    let n = confusion.len();
    if names.len() != n || confusion.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension(format!(
            "confusion matrix must be {n}×{n} with {n} names"
        )));
    }
    let cell = 44;
    let label_w = 12 + 7 * names.iter().map(|s| s.chars().count()).max().unwrap_or(0) as i64;
    let left = label_w;
    let top = label_w + 20;
    let size = cell * n as i64;
    let width = left + size + 20;
    let height = top + size + 40;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    for (r, row) in confusion.iter().enumerate() {
        let total: u64 = row.iter().sum();
        for (c, &count) in row.iter().enumerate() {
            let share = if total == 0 { 0.0 } else { count as f64 / total as f64 };
            let shade = (255.0 * (1.0 - share)).round() as u8;
            let (x, y) = (left + c as i64 * cell, top + r as i64 * cell);
            let _ = writeln!(
                svg,
                r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="rgb({shade},{shade},255)" stroke="gray"/>"#
            );
            let ink = if share > 0.5 { "white" } else { "black" };
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{ink}">{count}</text>"#,
                x + cell / 2,
                y + cell / 2 + 4
            );
        }
    }
    for (i, name) in names.iter().enumerate() {
        let name = xml_escape(name);
        let y = top + i as i64 * cell + cell / 2 + 4;
        let _ = writeln!(svg, r#"<text x="{}" y="{y}" text-anchor="end">{name}</text>"#, left - 6);
        let x = left + i as i64 * cell + cell / 2;
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{}" text-anchor="start" transform="rotate(-60 {x} {})">{name}</text>"#,
            top - 6,
            top - 6
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">predicted</text>"#,
        left + size / 2,
        top + size + 24
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn render_confusion_svg(confusion: &Confusion, names: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let svg = confusion_svg(confusion, names)?;
    std::fs::write(path, svg).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        assert!((accuracy(&[1, 2, 3], &[1, 2, 2]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(accuracy(&[4, 5], &[4, 5]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert!(accuracy(&[0], &[0, 1]).is_err());
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn mpca_examples() {
        assert!((mean_per_class_accuracy(&[0, 1, 1], &[0, 0, 1], 2).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(mean_per_class_accuracy(&[2, 0], &[2, 0], 3).unwrap(), 1.0);
        // class 1 absent from truth: mean over classes 0 and 2 only
        let v = mean_per_class_accuracy(&[0, 1, 2, 2], &[0, 0, 2, 2], 3).unwrap();
        assert!((v - 0.75).abs() < 1e-15);
    }

    #[test]
    fn fold_report_identities() {
        let pred = [0, 1, 1, 2, 0, 2];
        let truth = [0, 1, 2, 2, 1, 2];
        let r = FoldReport::from_predictions(3, &pred, &truth, 4).unwrap();
        let total: u64 = r.confusion.iter().flatten().sum();
        let trace: u64 = (0..4).map(|c| r.confusion[c][c]).sum();
        assert_eq!(r.accuracy, trace as f64 / total as f64);
        for (&c, &v) in &r.per_class_accuracy {
            let row: u64 = r.confusion[c].iter().sum();
            assert_eq!(v, r.confusion[c][c] as f64 / row as f64);
        }
        assert!(!r.per_class_accuracy.contains_key(&3));
        assert_eq!(r.n_timeslices, 6);
    }

    #[test]
    fn population_std() {
        assert_eq!(std_dev(&[1.0, 1.0]), 0.0);
        assert!((std_dev(&[0.0, 1.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn svg_contents() {
        let names: Vec<String> = ["Idle", "Sleep", "Eat"].iter().map(|s| s.to_string()).collect();
        let m = vec![vec![5, 1, 0], vec![0, 7, 2], vec![3, 0, 9]];
        let svg = confusion_svg(&m, &names).unwrap();
        for row in &m {
            for v in row {
                assert!(svg.contains(&format!(">{v}</text>")));
            }
        }
        assert!(svg.contains(">Sleep</text>"));
        // diagonal dominant cells are dark
        let zero = vec![vec![0; 3]; 3];
        let svg0 = confusion_svg(&zero, &names).unwrap();
        assert!(svg0.contains("rgb(255,255,255)"));
        assert!(!svg0.contains("rgb(0,0,255)"));
        let eye = vec![vec![4, 0, 0], vec![0, 4, 0], vec![0, 0, 4]];
        assert_eq!(confusion_svg(&eye, &names).unwrap().matches("rgb(0,0,255)").count(), 3);
        assert!(confusion_svg(&m, &names[..2]).is_err());
    }
}
