//! Slice-to-subject fusion and evaluation metrics.
//!
//! Slice weights are fitted on validation predictions as the share of
//! correctly classified subjects at each slice position; a test subject's
//! decision is the argmax of the weighted mean of slice probabilities.
//! Ties break toward class 0 everywhere.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_SLICES_PER_SUBJECT: usize = 129;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicePrediction<T> {
    pub subject_id: String,
    pub slice_index: usize,
    pub logits: (T, T),
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SliceWeights<T> {
    pub w: Vec<T>,
}

impl<T: Scalar> SliceWeights<T> {
    pub fn uniform(slices: usize) -> Self {
        Self {
            w: vec![T::one() / T::from_usize_lossy(slices); slices],
        }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectDecision<T> {
    pub subject_id: String,
    pub scores: (T, T),
    pub predicted: u8,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub accuracy: f64,
    /// `None` when there are no positive subjects.
    pub sensitivity: Option<f64>,
    /// `None` when there are no negative subjects.
    pub specificity: Option<f64>,
    /// `None` unless both classes are present.
    pub auc: Option<f64>,
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn argmax2<T: Scalar>(a: T, b: T) -> u8 {
    u8::from(b > a)
}

pub fn softmax2<T: Scalar>(logits: (T, T)) -> Result<(T, T)> {
    let (x0, x1) = logits;
    if !x0.is_finite() || !x1.is_finite() {
        return Err(Error::NonFinite("logits"));
    }
    let m = x0.max(x1);
    let (e0, e1) = ((x0 - m).exp(), (x1 - m).exp());
    let z = e0 + e1;
    Ok((e0 / z, e1 / z))
}

/// `-log softmax(logits)[class]` in log-sum-exp form.
pub fn cross_entropy<T: Scalar>(logits: (T, T), class: u8) -> Result<T> {
    let (x0, x1) = logits;
    if !x0.is_finite() || !x1.is_finite() {
        return Err(Error::NonFinite("logits"));
    }
    if class > 1 {
        return Err(Error::invalid(format!("class {class} not in {{0, 1}}")));
    }
    let (target, other) = if class == 0 { (x0, x1) } else { (x1, x0) };
    // log(e^t + e^o) - t = log(1 + e^(o - t)), stable on both signs
    let d = other - target;
    Ok(if d > T::zero() {
        d + (-d).exp().ln_1p()
    } else {
        d.exp().ln_1p()
    })
}

/// Group predictions by subject and check that every subject covers
/// `0..slices` exactly once with a consistent label.
fn group_by_subject<T: Scalar>(
    preds: &[SlicePrediction<T>],
    slices: usize,
) -> Result<BTreeMap<&str, Vec<&SlicePrediction<T>>>> {
    let mut groups: BTreeMap<&str, Vec<Option<&SlicePrediction<T>>>> = BTreeMap::new();
    for p in preds {
        let subject = p.subject_id.as_str();
        if p.slice_index >= slices {
            return Err(Error::SliceCoverage {
                subject: subject.into(),
                reason: format!("slice index {} >= {slices}", p.slice_index),
            });
        }
        if p.label > 1 {
            return Err(Error::invalid(format!("label {} of {subject:?}", p.label)));
        }
        let slots = groups.entry(subject).or_insert_with(|| vec![None; slices]);
        if slots[p.slice_index].replace(p).is_some() {
            return Err(Error::SliceCoverage {
                subject: subject.into(),
                reason: format!("duplicate slice {}", p.slice_index),
            });
        }
    }
    groups
        .into_iter()
        .map(|(subject, slots)| {
            let full: Option<Vec<_>> = slots.into_iter().collect();
            let full = full.ok_or_else(|| Error::SliceCoverage {
                subject: subject.into(),
                reason: "missing slice".into(),
            })?;
            if full.iter().any(|p| p.label != full[0].label) {
                return Err(Error::SliceCoverage {
                    subject: subject.into(),
                    reason: "inconsistent labels".into(),
                });
            }
            Ok((subject, full))
        })
        .collect()
}

/// Slice weights proportional to per-slice correct-prediction counts.
pub fn fit_weights<T: Scalar>(val_preds: &[SlicePrediction<T>], slices: usize) -> Result<SliceWeights<T>> {
    if slices == 0 {
        return Err(Error::invalid("slices_per_subject must be positive"));
    }
    let groups = group_by_subject(val_preds, slices)?;
    let mut correct = vec![0usize; slices];
    for preds in groups.values() {
        for p in preds {
            let (p0, p1) = softmax2(p.logits)?;
            if argmax2(p0, p1) == p.label {
                correct[p.slice_index] += 1;
            }
        }
    }
    let total: usize = correct.iter().sum();
    if total == 0 {
        return Err(Error::NoCorrectPredictions);
    }
    let total = T::from_usize_lossy(total);
    Ok(SliceWeights {
        w: correct.into_iter().map(|c| T::from_usize_lossy(c) / total).collect(),
    })
}

/// Weighted soft vote over one subject's slices.
pub fn decide_subject<T: Scalar>(
    preds: &[SlicePrediction<T>],
    weights: &SliceWeights<T>,
) -> Result<SubjectDecision<T>> {
    let first = preds
        .first()
        .ok_or_else(|| Error::invalid("no predictions for subject"))?;
    if preds.iter().any(|p| p.subject_id != first.subject_id) {
        return Err(Error::invalid("predictions span several subjects"));
    }
    let groups = group_by_subject(preds, weights.len())?;
    let ordered = &groups[first.subject_id.as_str()];
    let (mut s0, mut s1) = (T::zero(), T::zero());
    for (p, &w) in ordered.iter().zip(&weights.w) {
        let (p0, p1) = softmax2(p.logits)?;
        s0 += w * p0;
        s1 += w * p1;
    }
    Ok(SubjectDecision {
        subject_id: first.subject_id.clone(),
        scores: (s0, s1),
        predicted: argmax2(s0, s1),
        label: first.label,
    })
}

/// Decide every subject in `preds`, ordered by subject id.
pub fn decide_all<T: Scalar>(
    preds: &[SlicePrediction<T>],
    weights: &SliceWeights<T>,
) -> Result<Vec<SubjectDecision<T>>> {
    let mut by_subject: BTreeMap<&str, Vec<SlicePrediction<T>>> = BTreeMap::new();
    for p in preds {
        by_subject.entry(p.subject_id.as_str()).or_default().push(p.clone());
    }
    by_subject
        .values()
        .map(|group| decide_subject(group, weights))
        .collect()
}

/// Mann–Whitney AUC: `(concordant + 0.5 ties) / (n_pos n_neg)`, computed
/// from midranks.
pub fn auc_mann_whitney(pos: &[f64], neg: &[f64]) -> Option<f64> {
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += midrank * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// ROC points `(fpr, tpr)` sweeping the threshold from high to low, with
/// tied scores entering together.
pub fn roc_curve(pos: &[f64], neg: &[f64]) -> Vec<(f64, f64)> {
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (np, nn) = (pos.len().max(1) as f64, neg.len().max(1) as f64);
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let score = all[i].0;
        while i < all.len() && all[i].0 == score {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / nn, tp as f64 / np));
    }
    points
}

pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// Confusion-matrix metrics with class 1 positive and AUC over `s_1`.
pub fn metrics<T: Scalar>(decisions: &[SubjectDecision<T>]) -> Result<MetricsReport> {
    if decisions.is_empty() {
        return Err(Error::invalid("no subject decisions"));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for d in decisions {
        match (d.label, d.predicted) {
            (1, 1) => tp += 1,
            (1, _) => fn_ += 1,
            (_, 1) => fp += 1,
            _ => tn += 1,
        }
        let s1 = d.scores.1.to_f64_lossy();
        if d.label == 1 {
            pos.push(s1);
        } else {
            neg.push(s1);
        }
    }
    let ratio = |a: usize, b: usize| (a + b > 0).then(|| a as f64 / (a + b) as f64);
    Ok(MetricsReport {
        n: decisions.len(),
        accuracy: (tp + tn) as f64 / decisions.len() as f64,
        sensitivity: ratio(tp, fn_),
        specificity: ratio(tn, fp),
        auc: auc_mann_whitney(&pos, &neg),
        tp,
        tn,
        fp,
        fn_,
    })
}

#[derive(Debug, Deserialize, Serialize)]
struct PredictionRow {
    subject_id: String,
    slice_index: usize,
    logit0: f64,
    logit1: f64,
    label: u8,
}

/// Prediction CSV with header `subject_id,slice_index,logit0,logit1,label`.
pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<SlicePrediction<f64>>> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if headers != ["subject_id", "slice_index", "logit0", "logit1", "label"] {
        return Err(Error::Schema(format!(
            "prediction header must be subject_id,slice_index,logit0,logit1,label, got {}",
            headers.join(",")
        )));
    }
    reader
        .deserialize::<PredictionRow>()
        .map(|row| {
            let row = row?;
            Ok(SlicePrediction {
                subject_id: row.subject_id,
                slice_index: row.slice_index,
                logits: (row.logit0, row.logit1),
                label: row.label,
            })
        })
        .collect()
}

pub fn write_predictions(path: impl AsRef<Path>, preds: &[SlicePrediction<f64>]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    for p in preds {
        writer.serialize(PredictionRow {
            subject_id: p.subject_id.clone(),
            slice_index: p.slice_index,
            logit0: p.logits.0,
            logit1: p.logits.1,
            label: p.label,
        })?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(subject: &str, slice: usize, p1: f64, label: u8) -> SlicePrediction<f64> {
        // logits (0, ln(p1/(1-p1))) give softmax class-1 probability p1
        SlicePrediction {
            subject_id: subject.into(),
            slice_index: slice,
            logits: (0.0, (p1 / (1.0 - p1)).ln()),
            label,
        }
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax2((0.0, 0.0)).unwrap(), (0.5, 0.5));
        assert_eq!(softmax2((700.0f64, 700.0)).unwrap(), (0.5, 0.5));
        let (a, b) = softmax2((3.0f64.ln(), 0.0)).unwrap();
        assert!((a - 0.75).abs() < 1e-15 && (b - 0.25).abs() < 1e-15);
        assert!(softmax2((f64::NAN, 0.0)).is_err());
        let (a, b) = softmax2((1.0f32, 2.0f32)).unwrap();
        assert!((a + b - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_examples() {
        assert!((cross_entropy((0.0, 0.0), 0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        let l = cross_entropy((10.0, 0.0), 0).unwrap();
        assert!((l - (-10.0f64).exp().ln_1p()).abs() < 1e-18);
        assert!((l - 4.5398e-5).abs() < 1e-9);
        assert_eq!(
            cross_entropy((1.5, -2.0), 0).unwrap(),
            cross_entropy((-2.0, 1.5), 1).unwrap()
        );
        assert!(cross_entropy((1000.0f64, -1000.0), 1).unwrap().is_finite());
    }

    #[test]
    fn fit_weights_counts() {
        // slice 0 correct for 3 subjects, slice 1 correct for 1
        let mut preds = Vec::new();
        for (i, s1) in [(0, true), (1, false), (2, false), (3, false)] {
            let id = format!("s{i}");
            preds.push(pred(&id, 0, 0.9, 1));
            preds.push(pred(&id, 1, if s1 { 0.9 } else { 0.1 }, 1));
        }
        preds[6] = pred("s3", 0, 0.2, 1); // s3 slice 0 wrong
        let w = fit_weights(&preds, 2).unwrap();
        assert_eq!(w.w, vec![0.75, 0.25]);
    }

    #[test]
    fn fit_weights_errors() {
        let preds = vec![pred("a", 0, 0.9, 0), pred("a", 1, 0.9, 0)];
        assert!(matches!(fit_weights(&preds, 2), Err(Error::NoCorrectPredictions)));
        let preds = vec![pred("a", 0, 0.9, 1)];
        assert!(matches!(fit_weights(&preds, 2), Err(Error::SliceCoverage { .. })));
        let preds = vec![pred("a", 0, 0.9, 1), pred("a", 0, 0.9, 1)];
        assert!(matches!(fit_weights(&preds, 1), Err(Error::SliceCoverage { .. })));
    }

    #[test]
    fn never_correct_slice_gets_zero() {
        let preds = vec![pred("a", 0, 0.9, 1), pred("a", 1, 0.1, 1), pred("a", 2, 0.7, 1)];
        let w = fit_weights(&preds, 3).unwrap();
        assert_eq!(w.w, vec![0.5, 0.0, 0.5]);
    }

    #[test]
    fn decide_examples() {
        let w = SliceWeights { w: vec![0.75, 0.25] };
        let d = decide_subject(&[pred("a", 0, 0.2, 0), pred("a", 1, 0.9, 0)], &w).unwrap();
        assert!((d.scores.1 - 0.375).abs() < 1e-12);
        assert!((d.scores.0 - 0.625).abs() < 1e-12);
        assert_eq!(d.predicted, 0);

        let u = SliceWeights::uniform(3);
        let d = decide_subject(&[pred("b", 0, 0.9, 1), pred("b", 1, 0.9, 1), pred("b", 2, 0.9, 1)], &u).unwrap();
        assert_eq!(d.predicted, 1);

        let tie = decide_subject(&[pred("c", 0, 0.5, 1), pred("c", 1, 0.5, 1)], &SliceWeights::uniform(2)).unwrap();
        assert_eq!(tie.scores, (0.5, 0.5));
        assert_eq!(tie.predicted, 0);

        assert!(decide_subject(&[pred("d", 0, 0.5, 1)], &SliceWeights::uniform(2)).is_err());
    }

    fn decision(s1: f64, label: u8) -> SubjectDecision<f64> {
        SubjectDecision {
            subject_id: String::new(),
            scores: (1.0 - s1, s1),
            predicted: u8::from(s1 > 0.5),
            label,
        }
    }

    #[test]
    fn metric_examples() {
        let perfect = [decision(0.9, 1), decision(0.8, 1), decision(0.2, 0)];
        let m = metrics(&perfect).unwrap();
        assert_eq!((m.accuracy, m.auc), (1.0, Some(1.0)));
        assert_eq!((m.tp, m.tn, m.fp, m.fn_), (2, 1, 0, 0));

        let tied = [decision(0.5, 1), decision(0.5, 0), decision(0.5, 0)];
        assert_eq!(metrics(&tied).unwrap().auc, Some(0.5));

        let mixed = [decision(0.9, 1), decision(0.4, 1), decision(0.6, 0), decision(0.1, 0)];
        let m = metrics(&mixed).unwrap();
        assert_eq!(m.auc, Some(0.75));
        assert_eq!(m.sensitivity, Some(0.5));
        assert_eq!(m.specificity, Some(0.5));

        let single = [decision(0.9, 1), decision(0.3, 1)];
        let m = metrics(&single).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!((m.specificity, m.auc), (None, None));
    }

    #[test]
    fn roc_trapezoid_matches_mann_whitney() {
        let pos = [0.9, 0.4, 0.4, 0.7];
        let neg = [0.6, 0.1, 0.4];
        let a = auc_mann_whitney(&pos, &neg).unwrap();
        let b = trapezoid_area(&roc_curve(&pos, &neg));
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn prediction_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let preds = vec![pred("x", 0, 0.3, 1), pred("x", 1, 0.8, 1)];
        write_predictions(&path, &preds).unwrap();
        assert_eq!(read_predictions(&path).unwrap(), preds);
        std::fs::write(&path, "subject,slice_index,logit0,logit1,label\n").unwrap();
        assert!(matches!(read_predictions(&path), Err(Error::Schema(_))));
    }
}
