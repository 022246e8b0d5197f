//! Tag-ranking and necessity metrics.
//!
//! Per request, with `hits = |true ∩ top-k predicted|`:
//!
//! - precision@k = hits / k
//! - recall@k = hits / k when |true| < k, else hits / |true|
//! - F1@k = 2pr / (p + r), or 0 when p + r = 0
//!
//! Corpus values are plain means over requests. The recall rule above is
//! the default; [`RecallMode::Conventional`] divides by `min(k, |true|)`
//! instead.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{FoldSplit, Necessity};
use crate::{Error, Result};

pub const DEFAULT_KS: [usize; 3] = [3, 5, 10];

/// Non-negative rational in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fraction {
    pub num: u64,
    pub den: u64,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl Fraction {
    pub fn new(num: u64, den: u64) -> Self {
        assert!(den > 0, "zero denominator");
        let g = gcd(num, den).max(1);
        Fraction {
            num: num / g,
            den: den / g,
        }
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecallMode {
    /// Divide by k whenever the request has fewer than k true tags.
    #[default]
    AsPrinted,
    /// Divide by `min(k, |true|)`.
    Conventional,
}

fn hits<T: Ord>(truth: &BTreeSet<T>, predicted: &[T], k: usize) -> u64 {
    let top: BTreeSet<&T> = predicted.iter().take(k).collect();
    top.into_iter().filter(|t| truth.contains(t)).count() as u64
}

pub fn precision_at_k_exact<T: Ord>(truth: &BTreeSet<T>, predicted: &[T], k: usize) -> Result<Fraction> {
    if k == 0 {
        return Err(Error::invalid("k", "must be at least 1"));
    }
    Ok(Fraction::new(hits(truth, predicted, k), k as u64))
}

pub fn precision_at_k<T: Ord>(truth: &BTreeSet<T>, predicted: &[T], k: usize) -> Result<f64> {
    precision_at_k_exact(truth, predicted, k).map(Fraction::to_f64)
}

pub fn recall_at_k_exact<T: Ord>(truth: &BTreeSet<T>, predicted: &[T], k: usize, mode: RecallMode) -> Result<Fraction> {
    if k == 0 {
        return Err(Error::invalid("k", "must be at least 1"));
    }
    if truth.is_empty() {
        return Err(Error::Empty { what: "true tag set" });
    }
    let n = truth.len();
    let den = match mode {
        RecallMode::AsPrinted if n < k => k,
        RecallMode::AsPrinted => n,
        RecallMode::Conventional => n.min(k),
    };
    Ok(Fraction::new(hits(truth, predicted, k), den as u64))
}

pub fn recall_at_k<T: Ord>(truth: &BTreeSet<T>, predicted: &[T], k: usize, mode: RecallMode) -> Result<f64> {
    recall_at_k_exact(truth, predicted, k, mode).map(Fraction::to_f64)
}

/// Harmonic mean of two fractions, exactly.
pub fn f1_exact(p: Fraction, r: Fraction) -> Fraction {
    // 2 (a/b)(c/d) / (a/b + c/d) = 2ac / (ad + cb)
    let den = p.num * r.den + r.num * p.den;
    if den == 0 {
        Fraction::new(0, 1)
    } else {
        Fraction::new(2 * p.num * r.num, den)
    }
}

pub fn f1_at_k(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn corpus_average(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty { what: "value list" });
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub f1_necessary: f64,
    pub f1_unnecessary: f64,
    /// Classes present in neither list; their F1 is reported as 0.
    pub absent_classes: Vec<Necessity>,
}

fn class_f1(gold: &[Necessity], pred: &[Necessity], class: Necessity) -> Option<f64> {
    let (mut tp, mut fp, mut fneg) = (0u64, 0u64, 0u64);
    for (g, p) in gold.iter().zip(pred) {
        match (*g == class, *p == class) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fneg += 1,
            (false, false) => {}
        }
    }
    if tp + fp + fneg == 0 {
        return None;
    }
    Some(2.0 * tp as f64 / (2 * tp + fp + fneg) as f64)
}

pub fn classification_metrics(gold: &[Necessity], predicted: &[Necessity]) -> Result<ClassificationMetrics> {
    if gold.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: predicted.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::Empty { what: "label list" });
    }
    let correct = gold.iter().zip(predicted).filter(|(g, p)| g == p).count();
    let mut absent_classes = Vec::new();
    let mut f1 = |c| {
        class_f1(gold, predicted, c).unwrap_or_else(|| {
            log::warn!("class {c:?} absent from gold and predictions; F1 reported as 0");
            absent_classes.push(c);
            0.0
        })
    };
    let f1_necessary = f1(Necessity::Necessary);
    let f1_unnecessary = f1(Necessity::Unnecessary);
    Ok(ClassificationMetrics {
        accuracy: correct as f64 / gold.len() as f64,
        f1_necessary,
        f1_unnecessary,
        absent_classes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_k: BTreeMap<usize, RankScores>,
    pub accuracy: f64,
    pub f1_necessary: f64,
    pub f1_unnecessary: f64,
    pub n_requests: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold_id: Option<usize>,
}

/// Gold and predicted outputs for one request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub true_tags: BTreeSet<String>,
    pub predicted_tags: Vec<String>,
    pub gold_necessity: Necessity,
    pub predicted_necessity: Necessity,
}

pub fn evaluate(items: &[EvalItem], ks: &[usize], mode: RecallMode, fold_id: Option<usize>) -> Result<MetricsReport> {
    if items.is_empty() {
        return Err(Error::Empty { what: "evaluation set" });
    }
    let mut per_k = BTreeMap::new();
    for &k in ks {
        let mut ps = Vec::with_capacity(items.len());
        let mut rs = Vec::with_capacity(items.len());
        let mut fs = Vec::with_capacity(items.len());
        for it in items {
            let p = precision_at_k(&it.true_tags, &it.predicted_tags, k)?;
            let r = recall_at_k(&it.true_tags, &it.predicted_tags, k, mode)?;
            ps.push(p);
            rs.push(r);
            fs.push(f1_at_k(p, r));
        }
        per_k.insert(
            k,
            RankScores {
                precision: corpus_average(&ps)?,
                recall: corpus_average(&rs)?,
                f1: corpus_average(&fs)?,
            },
        );
    }
    let gold: Vec<Necessity> = items.iter().map(|i| i.gold_necessity).collect();
    let pred: Vec<Necessity> = items.iter().map(|i| i.predicted_necessity).collect();
    let c = classification_metrics(&gold, &pred)?;
    Ok(MetricsReport {
        per_k,
        accuracy: c.accuracy,
        f1_necessary: c.f1_necessary,
        f1_unnecessary: c.f1_unnecessary,
        n_requests: items.len(),
        fold_id,
    })
}

/// Unweighted mean of per-fold reports; `n_requests` is summed.
pub fn mean_report(reports: &[MetricsReport]) -> Result<MetricsReport> {
    let Some(first) = reports.first() else {
        return Err(Error::Empty { what: "report list" });
    };
    let mean = |f: &dyn Fn(&MetricsReport) -> f64| -> Result<f64> {
        corpus_average(&reports.iter().map(f).collect::<Vec<_>>())
    };
    let mut per_k = BTreeMap::new();
    for &k in first.per_k.keys() {
        if reports.iter().any(|r| !r.per_k.contains_key(&k)) {
            return Err(Error::invalid("reports", "k sets differ between folds"));
        }
        per_k.insert(
            k,
            RankScores {
                precision: mean(&|r| r.per_k[&k].precision)?,
                recall: mean(&|r| r.per_k[&k].recall)?,
                f1: mean(&|r| r.per_k[&k].f1)?,
            },
        );
    }
    Ok(MetricsReport {
        per_k,
        accuracy: mean(&|r| r.accuracy)?,
        f1_necessary: mean(&|r| r.f1_necessary)?,
        f1_unnecessary: mean(&|r| r.f1_unnecessary)?,
        n_requests: reports.iter().map(|r| r.n_requests).sum(),
        fold_id: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub folds: Vec<MetricsReport>,
    pub mean: MetricsReport,
}

/// A fold failed; reports of the folds before it are kept.
#[derive(Debug)]
pub struct FoldFailure<E> {
    pub fold: usize,
    pub error: E,
    pub completed: Vec<MetricsReport>,
}

impl<E: core::fmt::Display> core::fmt::Display for FoldFailure<E> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "fold {} failed: {}", self.fold, self.error)
    }
}

impl<E: core::error::Error> core::error::Error for FoldFailure<E> {}

/// Runs `run` on each fold in order and averages the reports.
pub fn cross_validate<E, F>(folds: &[FoldSplit], mut run: F) -> core::result::Result<CrossValidation, FoldFailure<E>>
where
    E: From<Error>,
    F: FnMut(usize, &FoldSplit) -> core::result::Result<MetricsReport, E>,
{
    let mut reports = Vec::with_capacity(folds.len());
    for (i, fold) in folds.iter().enumerate() {
        match run(i, fold) {
            Ok(mut r) => {
                r.fold_id = Some(i);
                reports.push(r);
            }
            Err(error) => {
                return Err(FoldFailure {
                    fold: i,
                    error,
                    completed: reports,
                })
            }
        }
    }
    match mean_report(&reports) {
        Ok(mean) => Ok(CrossValidation { folds: reports, mean }),
        Err(e) => Err(FoldFailure {
            fold: folds.len(),
            error: e.into(),
            completed: reports,
        }),
    }
}

/// Fixed-width text table, one row per report.
pub fn render_table(rows: &[(String, &MetricsReport)]) -> String {
    let mut out = String::new();
    let ks: Vec<usize> = rows.first().map(|(_, r)| r.per_k.keys().copied().collect()).unwrap_or_default();
    let _ = write!(out, "{:<10}", "run");
    for k in &ks {
        for m in ["P", "R", "F1"] {
            let _ = write!(out, " {:>7}", alloc::format!("{m}@{k}"));
        }
    }
    let _ = writeln!(out, " {:>7} {:>7} {:>7}", "Acc", "F1-N", "F1-U");
    for (name, r) in rows {
        let _ = write!(out, "{name:<10}");
        for k in &ks {
            let s = r.per_k.get(k).copied().unwrap_or(RankScores {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
            });
            let _ = write!(out, " {:>7.3} {:>7.3} {:>7.3}", s.precision, s.recall, s.f1);
        }
        let _ = writeln!(out, " {:>7.3} {:>7.3} {:>7.3}", r.accuracy, r.f1_necessary, r.f1_unnecessary);
    }
    out
}
