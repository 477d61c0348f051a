//! Classification and detection metrics.

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::scene::{BBox, VehicleClass};
use crate::seqnet::Prediction;
use std::collections::BTreeMap;
use std::fmt::Write as _;

pub fn top1(predictions: &[u8], labels: &[u8]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            actual: predictions.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput("top-1 over no samples"));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Counts with NLOS (`s = 1`) as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn from_predictions(predictions: &[u8], labels: &[u8]) -> Result<Self> {
        if predictions.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                actual: predictions.len(),
            });
        }
        let mut cm = Self::default();
        for (&p, &l) in predictions.iter().zip(labels) {
            cm.add(p, l);
        }
        Ok(cm)
    }

    pub fn add(&mut self, predicted: u8, label: u8) {
        match (predicted, label) {
            (1, 1) => self.tp += 1,
            (1, _) => self.fp += 1,
            (_, 1) => self.fn_ += 1,
            _ => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// `(precision, recall)`; `None` where the denominator is zero.
pub fn precision_recall(cm: &ConfusionMatrix) -> (Option<f64>, Option<f64>) {
    (ratio(cm.tp, cm.tp + cm.fp), ratio(cm.tp, cm.tp + cm.fn_))
}

fn check_box(b: &BBox) -> Result<()> {
    BBox::new(b.x1, b.y1, b.x2, b.y2).map(|_| ())
}

pub fn iou(a: &BBox, b: &BBox) -> Result<f64> {
    check_box(a)?;
    check_box(b)?;
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = w * h;
    Ok(inter / (a.area() + b.area() - inter))
}

/// A detection on image `image`; its position in the input slice is its id.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredBox {
    pub image: u64,
    pub class: VehicleClass,
    pub bbox: BBox,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthBox {
    pub image: u64,
    pub class: VehicleClass,
    pub bbox: BBox,
}

/// All-points interpolated AP for one class, or `None` when the class has no
/// ground truth. Detections are ranked by confidence, ties by input order;
/// each is matched to the highest-IoU ground truth of its image and counts as
/// a true positive only if that box is still unmatched and clears the threshold.
pub fn average_precision(
    detections: &[ScoredBox],
    truth: &[GroundTruthBox],
    class: VehicleClass,
    iou_threshold: f64,
) -> Result<Option<f64>> {
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(Error::InvalidParameter("IoU threshold must lie in (0,1)".into()));
    }
    let gts: Vec<&GroundTruthBox> = truth.iter().filter(|g| g.class == class).collect();
    if gts.is_empty() {
        return Ok(None);
    }
    let mut dets: Vec<&ScoredBox> = detections.iter().filter(|d| d.class == class).collect();
    dets.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    let mut matched = vec![false; gts.len()];
    let mut hits = Vec::with_capacity(dets.len());
    for d in dets {
        let mut best: Option<(f64, usize)> = None;
        for (j, g) in gts.iter().enumerate() {
            if g.image != d.image {
                continue;
            }
            let o = iou(&d.bbox, &g.bbox)?;
            if best.is_none_or(|b| o > b.0) {
                best = Some((o, j));
            }
        }
        let tp = match best {
            Some((o, j)) if o >= iou_threshold && !matched[j] => {
                matched[j] = true;
                true
            }
            _ => false,
        };
        hits.push(tp);
    }
    Ok(Some(ap_from_hits(&hits, gts.len())))
}

/// Area under the monotone precision envelope of a ranked hit list.
fn ap_from_hits(hits: &[bool], positives: usize) -> f64 {
    let mut tp = 0usize;
    let mut curve = Vec::with_capacity(hits.len());
    for (i, &h) in hits.iter().enumerate() {
        tp += usize::from(h);
        curve.push((tp as f64 / positives as f64, tp as f64 / (i + 1) as f64));
    }
    for i in (0..curve.len().saturating_sub(1)).rev() {
        curve[i].1 = curve[i].1.max(curve[i + 1].1);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in curve {
        ap += (r - prev_recall) * p;
        prev_recall = r;
    }
    ap
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapReport {
    pub per_class: BTreeMap<VehicleClass, Option<f64>>,
    /// Mean over classes that have ground truth.
    pub map: Option<f64>,
}

pub fn mean_average_precision(
    detections: &[ScoredBox],
    truth: &[GroundTruthBox],
    iou_threshold: f64,
) -> Result<MapReport> {
    let mut per_class = BTreeMap::new();
    let mut sum = 0.0;
    let mut n = 0;
    for class in VehicleClass::ALL {
        let ap = average_precision(detections, truth, class, iou_threshold)?;
        match ap {
            Some(v) => {
                sum += v;
                n += 1;
            }
            None => log::warn!("no ground truth for {class:?}; excluded from mAP"),
        }
        per_class.insert(class, ap);
    }
    Ok(MapReport {
        per_class,
        map: (n > 0).then(|| sum / n as f64),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Tally {
    pub count: usize,
    pub correct: usize,
}

impl Tally {
    pub fn add(&mut self, ok: bool) {
        self.count += 1;
        self.correct += usize::from(ok);
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.correct, self.count)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub confusion: ConfusionMatrix,
    pub top1: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub pivotal: Tally,
    pub per_camera: BTreeMap<u32, Tally>,
    pub per_camera_pivotal: BTreeMap<u32, Tally>,
    /// Pivotal samples binned by 1-based first blocked future instant.
    pub per_instance: BTreeMap<u8, Tally>,
}

pub fn report(predictions: &[Prediction], samples: &[Sample]) -> Result<MetricReport> {
    if predictions.len() != samples.len() {
        return Err(Error::DimensionMismatch {
            expected: samples.len(),
            actual: predictions.len(),
        });
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let pred: Vec<u8> = predictions.iter().map(Prediction::status).collect();
    let labels: Vec<u8> = samples.iter().map(|s| s.label.s).collect();
    let confusion = ConfusionMatrix::from_predictions(&pred, &labels)?;
    let (precision, recall) = precision_recall(&confusion);
    let mut pivotal = Tally::default();
    let mut per_camera: BTreeMap<u32, Tally> = BTreeMap::new();
    let mut per_camera_pivotal: BTreeMap<u32, Tally> = BTreeMap::new();
    let mut per_instance: BTreeMap<u8, Tally> = BTreeMap::new();
    for ((s, &p), &l) in samples.iter().zip(&pred).zip(&labels) {
        let ok = p == l;
        let cam = s.observed.camera;
        per_camera.entry(cam).or_default().add(ok);
        if let Some(k) = s.label.blockage_instance {
            pivotal.add(ok);
            per_camera_pivotal.entry(cam).or_default().add(ok);
            per_instance.entry(k).or_default().add(ok);
        }
    }
    Ok(MetricReport {
        confusion,
        top1: top1(&pred, &labels)?,
        precision,
        recall,
        pivotal,
        per_camera,
        per_camera_pivotal,
        per_instance,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"))
}

/// Long-format CSV with header `table,key,count,correct,value`.
pub fn report_csv(r: &MetricReport) -> String {
    let mut out = String::from("table,key,count,correct,value\n");
    let total = r.confusion.total();
    let c = &r.confusion;
    let mut row = |table: &str, key: &str, count: usize, correct: String, value: String| {
        let _ = writeln!(out, "{table},{key},{count},{correct},{value}");
    };
    row("summary", "top1", total, (c.tp + c.tn).to_string(), format!("{:.6}", r.top1));
    row("summary", "precision", c.tp + c.fp, c.tp.to_string(), opt(r.precision));
    row("summary", "recall", c.tp + c.fn_, c.tp.to_string(), opt(r.recall));
    row("summary", "pivotal_top1", r.pivotal.count, r.pivotal.correct.to_string(), opt(r.pivotal.accuracy()));
    for (k, v) in [("tp", c.tp), ("fp", c.fp), ("tn", c.tn), ("fn", c.fn_)] {
        row("confusion", k, v, String::new(), String::new());
    }
    for (cam, t) in &r.per_camera {
        row("camera", &cam.to_string(), t.count, t.correct.to_string(), opt(t.accuracy()));
    }
    for (cam, t) in &r.per_camera_pivotal {
        row("camera_pivotal", &cam.to_string(), t.count, t.correct.to_string(), opt(t.accuracy()));
    }
    for (k, t) in &r.per_instance {
        row("blockage_instance", &k.to_string(), t.count, t.correct.to_string(), opt(t.accuracy()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn top1_counts() {
        assert_eq!(top1(&[1, 0, 1], &[1, 0, 1]).unwrap(), 1.0);
        assert_eq!(top1(&[0, 1], &[1, 0]).unwrap(), 0.0);
        assert!(top1(&[], &[]).is_err());
        assert!(top1(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn precision_recall_cases() {
        let cm = ConfusionMatrix {
            tp: 92,
            fp: 18,
            tn: 50,
            fn_: 8,
        };
        let (p, r) = precision_recall(&cm);
        assert_eq!(r, Some(0.92));
        assert_eq!(p, Some(92.0 / 110.0));
        let only_neg = ConfusionMatrix { tn: 4, ..Default::default() };
        assert_eq!(precision_recall(&only_neg), (None, None));
        let fp_only = ConfusionMatrix { fp: 3, ..Default::default() };
        assert_eq!(precision_recall(&fp_only).0, Some(0.0));
    }

    #[test]
    fn iou_cases() {
        let a = bx(0.0, 0.0, 2.0, 2.0);
        let b = bx(1.0, 1.0, 3.0, 3.0);
        assert!((iou(&a, &b).unwrap() - 1.0 / 7.0).abs() < 1e-12);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &bx(5.0, 5.0, 6.0, 6.0)).unwrap(), 0.0);
        let bad = BBox {
            x1: 1.0,
            y1: 0.0,
            x2: 0.0,
            y2: 1.0,
        };
        assert!(iou(&a, &bad).is_err());
    }

    #[test]
    fn ap_perfect_and_empty() {
        let gt = vec![
            GroundTruthBox {
                image: 0,
                class: VehicleClass::Car,
                bbox: bx(0.1, 0.1, 0.2, 0.2),
            },
            GroundTruthBox {
                image: 1,
                class: VehicleClass::Bus,
                bbox: bx(0.3, 0.1, 0.6, 0.4),
            },
        ];
        let dets: Vec<ScoredBox> = gt
            .iter()
            .map(|g| ScoredBox {
                image: g.image,
                class: g.class,
                bbox: g.bbox,
                confidence: 1.0,
            })
            .collect();
        let m = mean_average_precision(&dets, &gt, 0.5).unwrap();
        assert_eq!(m.map, Some(1.0));
        assert_eq!(m.per_class[&VehicleClass::Truck], None);
        assert_eq!(average_precision(&[], &gt, VehicleClass::Car, 0.5).unwrap(), Some(0.0));
    }

    #[test]
    fn duplicate_detection_is_false_positive() {
        let gt = vec![GroundTruthBox {
            image: 0,
            class: VehicleClass::Car,
            bbox: bx(0.0, 0.0, 1.0, 1.0),
        }];
        let d = |c| ScoredBox {
            image: 0,
            class: VehicleClass::Car,
            bbox: bx(0.0, 0.0, 1.0, 1.0),
            confidence: c,
        };
        // hit at rank 1 then a duplicate: precision envelope stays 1 up to recall 1
        let ap = average_precision(&[d(0.9), d(0.8)], &gt, VehicleClass::Car, 0.5).unwrap();
        assert_eq!(ap, Some(1.0));
    }

    #[test]
    fn envelope_integration() {
        // ranks: TP FP TP with 2 positives: P = 1, 1/2, 2/3 at R = .5, .5, 1
        let ap = ap_from_hits(&[true, false, true], 2);
        assert!((ap - (0.5 * 1.0 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
    }
}
