//! Segmentation and height evaluation: Jaccard index over roof pixels and
//! height error statistics over correctly segmented pixels.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::codec::DatasetSplit;
use crate::error::{Error, Result};
use crate::raster::Pixel;

/// Compensated (Neumaier) running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// `|pred ∩ truth| / |pred ∪ truth|`; two empty sets score 1.
pub fn iou(pred: &[Pixel], truth: &[Pixel]) -> f64 {
    let p: HashSet<Pixel> = pred.iter().copied().collect();
    let t: HashSet<Pixel> = truth.iter().copied().collect();
    let inter = p.intersection(&t).count();
    let union = p.len() + t.len() - inter;
    ratio(inter, union)
}

/// [`iou`] over two membership masks of one frame.
pub fn iou_masks(pred: &[bool], truth: &[bool]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::FrameMismatch(format!(
            "mask sizes differ: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    let mut inter = 0;
    let mut union = 0;
    for (&p, &t) in pred.iter().zip(truth) {
        inter += (p && t) as usize;
        union += (p || t) as usize;
    }
    Ok(ratio(inter, union))
}

fn ratio(inter: usize, union: usize) -> f64 {
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Height errors over `m` correctly segmented pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeightStats {
    pub m: usize,
    /// Mean of `100 |ẑ - z| / z`, percent, over pixels with `z > 0`.
    pub mean_abs_pct_error: Option<f64>,
    /// `100 - mean_abs_pct_error`.
    pub mean_accuracy: Option<f64>,
    /// Mean of `|ẑ - z|`, meters.
    pub mean_difference: f64,
    /// Mean of `(ẑ - z)^2`, square meters.
    pub mse: f64,
    /// Pixels left out of the percentage statistic because `z <= 0`.
    pub skipped_nonpositive: usize,
}

/// Statistics over `(predicted, true)` height pairs.
pub fn height_error_stats(pairs: &[(f64, f64)]) -> Result<HeightStats> {
    let mut acc = StatsAccumulator::default();
    for &(zh, z) in pairs {
        acc.push(zh, z);
    }
    acc.finish()
}

#[derive(Debug, Clone, Copy, Default)]
struct StatsAccumulator {
    m: usize,
    pct_n: usize,
    pct: CompensatedSum,
    abs: CompensatedSum,
    sq: CompensatedSum,
}

impl StatsAccumulator {
    fn push(&mut self, zh: f64, z: f64) {
        let d = zh - z;
        self.m += 1;
        self.abs.add(d.abs());
        self.sq.add(d * d);
        if z > 0.0 {
            self.pct_n += 1;
            self.pct.add(100.0 * d.abs() / z);
        }
    }

    fn finish(&self) -> Result<HeightStats> {
        if self.m == 0 {
            return Err(Error::EmptyEval);
        }
        let m = self.m as f64;
        let pct = (self.pct_n > 0).then(|| self.pct.value() / self.pct_n as f64);
        Ok(HeightStats {
            m: self.m,
            mean_abs_pct_error: pct,
            mean_accuracy: pct.map(|e| 100.0 - e),
            mean_difference: self.abs.value() / m,
            mse: self.sq.value() / m,
            skipped_nonpositive: self.m - self.pct_n,
        })
    }
}

/// Per-pixel roof membership, split and height over one frame.
///
/// A pixel is roof when its split is set; `z` is only read for roof pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledHeights {
    pub width: usize,
    pub height: usize,
    pub split: Vec<Option<DatasetSplit>>,
    pub z: Vec<f64>,
}

impl LabeledHeights {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            split: vec![None; width * height],
            z: vec![f64::NAN; width * height],
        }
    }

    pub fn is_roof(&self, i: usize) -> bool {
        self.split[i].is_some()
    }

    pub fn roof_count(&self) -> usize {
        self.split.iter().filter(|s| s.is_some()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub iou: f64,
    pub predicted: usize,
    pub truth: usize,
    pub heights: Option<HeightStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: SplitReport,
    /// Keyed by split name; a pixel counts toward a split when its own
    /// raster tags it so (predictions by their tag, truth by its tag).
    pub per_split: BTreeMap<String, SplitReport>,
}

/// Compare a reconstruction with the truth over one frame.
pub fn evaluate(pred: &LabeledHeights, truth: &LabeledHeights) -> Result<EvalReport> {
    if (pred.width, pred.height) != (truth.width, truth.height) {
        return Err(Error::FrameMismatch(format!(
            "prediction is {}x{}, truth is {}x{}",
            pred.width, pred.height, truth.width, truth.height
        )));
    }
    let keep_all = |_: DatasetSplit| true;
    let overall = split_report(pred, truth, keep_all);
    let per_split = DatasetSplit::ALL
        .into_iter()
        .map(|s| (s.name().to_string(), split_report(pred, truth, |x| x == s)))
        .collect();
    Ok(EvalReport { overall, per_split })
}

fn split_report(pred: &LabeledHeights, truth: &LabeledHeights, keep: impl Fn(DatasetSplit) -> bool) -> SplitReport {
    let mut inter = 0;
    let mut union = 0;
    let mut predicted = 0;
    let mut true_count = 0;
    let mut acc = StatsAccumulator::default();
    for i in 0..pred.split.len() {
        let p = pred.split[i].is_some_and(&keep);
        let t = truth.split[i].is_some_and(&keep);
        predicted += p as usize;
        true_count += t as usize;
        union += (p || t) as usize;
        if p && t {
            inter += 1;
            acc.push(pred.z[i], truth.z[i]);
        }
    }
    SplitReport {
        iou: ratio(inter, union),
        predicted,
        truth: true_count,
        heights: acc.finish().ok(),
    }
}

impl EvalReport {
    /// Aligned text table with one column per split.
    pub fn to_table(&self) -> String {
        let mut cols: Vec<(&str, &SplitReport)> = vec![("overall", &self.overall)];
        for s in DatasetSplit::ALL {
            if let Some(r) = self.per_split.get(s.name()) {
                cols.push((s.name(), r));
            }
        }
        let na = || "n/a".to_string();
        let rows: Vec<(&str, Vec<String>)> = vec![
            (
                "Jaccard index (IoU)",
                cols.iter().map(|(_, r)| format!("{:.2}%", 100.0 * r.iou)).collect(),
            ),
            (
                "Heights' mean accuracy",
                cols.iter()
                    .map(|(_, r)| {
                        r.heights
                            .and_then(|h| h.mean_accuracy)
                            .map_or_else(na, |v| format!("{v:.2}%"))
                    })
                    .collect(),
            ),
            (
                "Heights' mean difference",
                cols.iter()
                    .map(|(_, r)| r.heights.map_or_else(na, |h| format!("{:.2} m", h.mean_difference)))
                    .collect(),
            ),
            (
                "Heights' mean square error",
                cols.iter()
                    .map(|(_, r)| r.heights.map_or_else(na, |h| format!("{:.2} m2", h.mse)))
                    .collect(),
            ),
        ];
        let label_w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
        let col_w: Vec<usize> = (0..cols.len())
            .map(|k| rows.iter().map(|(_, v)| v[k].len()).chain([cols[k].0.len()]).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let _ = write!(out, "{:label_w$}", "");
        for (k, (name, _)) in cols.iter().enumerate() {
            let _ = write!(out, "  {:>w$}", name, w = col_w[k]);
        }
        out.push('\n');
        for (label, values) in &rows {
            let _ = write!(out, "{label:label_w$}");
            for (k, v) in values.iter().enumerate() {
                let _ = write!(out, "  {:>w$}", v, w = col_w[k]);
            }
            out.push('\n');
        }
        out
    }
}
