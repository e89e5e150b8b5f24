//! Corpus-level aggregation of TEDS and AP50.

use alloc::string::String;
use alloc::vec::Vec;

use crate::geometry::BBox;
use crate::html::ParseFlags;

use super::ap::{ap50, DetectionSet};
use super::teds::{teds, TedsResult};

/// One side (prediction or ground truth) of an evaluation sample.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalSide {
    pub html: String,
    pub boxes: Vec<BBox>,
    pub scores: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSample {
    pub id: String,
    pub pred: Option<EvalSide>,
    pub gt: Option<EvalSide>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SampleFlags {
    pub missing_pred: bool,
    pub missing_gt: bool,
    pub pred_no_table: bool,
    pub pred_repaired: bool,
    pub gt_no_table: bool,
    pub gt_repaired: bool,
    pub misaligned_scores: bool,
}

impl SampleFlags {
    fn from_parse(pred: ParseFlags, gt: ParseFlags) -> Self {
        SampleFlags {
            pred_no_table: pred.no_table,
            pred_repaired: pred.repaired,
            gt_no_table: gt.no_table,
            gt_repaired: gt.repaired,
            ..SampleFlags::default()
        }
    }

    /// Names of the raised flags joined by `|`, or `ok`.
    pub fn describe(&self) -> String {
        let names = [
            (self.missing_pred, "missing_pred"),
            (self.missing_gt, "missing_gt"),
            (self.pred_no_table, "pred_no_table"),
            (self.pred_repaired, "pred_repaired"),
            (self.gt_no_table, "gt_no_table"),
            (self.gt_repaired, "gt_repaired"),
            (self.misaligned_scores, "misaligned_scores"),
        ];
        let raised: Vec<&str> = names.iter().filter(|(on, _)| *on).map(|(_, n)| *n).collect();
        if raised.is_empty() {
            String::from("ok")
        } else {
            raised.join("|")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleReport {
    pub id: String,
    pub result: TedsResult,
    pub flags: SampleFlags,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusReport {
    /// Per-sample scores sorted by id.
    pub samples: Vec<SampleReport>,
    pub mean: TedsResult,
    pub ap50: f64,
}

/// Score every sample and aggregate.
///
/// Samples are processed in id order so the aggregate does not depend on the
/// input order. A sample missing either side scores zero and is flagged; its
/// boxes still take part in AP50 (unmatched ground truth or false positives).
pub fn corpus_eval(mut samples: Vec<EvalSample>) -> CorpusReport {
    samples.sort_by(|a, b| a.id.cmp(&b.id));
    let mut reports = Vec::with_capacity(samples.len());
    let mut dets = Vec::with_capacity(samples.len());
    let mut gts = Vec::with_capacity(samples.len());
    for s in &samples {
        let (result, mut flags) = match (&s.pred, &s.gt) {
            (Some(p), Some(g)) => {
                let score = teds(&p.html, &g.html);
                (score.result, SampleFlags::from_parse(score.pred_flags, score.gt_flags))
            }
            _ => (TedsResult::zero(), SampleFlags::default()),
        };
        flags.missing_pred = s.pred.is_none();
        flags.missing_gt = s.gt.is_none();
        let det = match &s.pred {
            Some(p) => match &p.scores {
                Some(sc) => DetectionSet::scored(p.boxes.clone(), sc.clone()).unwrap_or_else(|| {
                    flags.misaligned_scores = true;
                    DetectionSet::unscored(p.boxes.clone())
                }),
                None => DetectionSet::unscored(p.boxes.clone()),
            },
            None => DetectionSet::default(),
        };
        dets.push(det);
        gts.push(s.gt.as_ref().map(|g| g.boxes.clone()).unwrap_or_default());
        reports.push(SampleReport {
            id: s.id.clone(),
            result,
            flags,
        });
    }
    let n = reports.len();
    let mean = if n == 0 {
        TedsResult::zero()
    } else {
        let teds = reports.iter().map(|r| r.result.teds).sum::<f64>() / n as f64;
        let teds_s = reports.iter().map(|r| r.result.teds_s).sum::<f64>() / n as f64;
        TedsResult::new(teds, teds_s)
    };
    CorpusReport {
        samples: reports,
        mean,
        ap50: ap50(&dets, &gts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::ToString;
    use alloc::vec;

    fn side(html: &str) -> EvalSide {
        EvalSide {
            html: html.to_string(),
            boxes: vec![BBox::new(0.0, 0.0, 0.5, 0.5)],
            scores: None,
        }
    }

    #[test]
    fn single_sample_equals_teds() {
        let p = "<table><tr><td>ab</td><td>c</td></tr></table>";
        let g = "<table><tr><td>ax</td><td>c</td></tr></table>";
        let rep = corpus_eval(vec![EvalSample { id: "s".into(), pred: Some(side(p)), gt: Some(side(g)) }]);
        assert_eq!(rep.mean, teds(p, g).result);
        assert_eq!(rep.ap50, 1.0);
        assert_eq!(rep.samples[0].flags.describe(), "ok");
    }

    #[test]
    fn missing_sides_are_flagged() {
        let rep = corpus_eval(vec![
            EvalSample { id: "a".into(), pred: None, gt: Some(side("<table></table>")) },
            EvalSample { id: "b".into(), pred: Some(side("<table></table>")), gt: None },
        ]);
        assert_eq!(rep.samples[0].flags.describe(), "missing_pred");
        assert_eq!(rep.samples[1].flags.describe(), "missing_gt");
        assert_eq!(rep.mean, TedsResult::zero());
    }

    #[test]
    fn order_invariant_mean_over_fifty() {
        let mut samples = Vec::new();
        let mut hand = 0.0;
        for i in 0..50 {
            let g = format!("<table><tr><td>{}</td><td>abcd</td></tr></table>", i);
            let p = format!("<table><tr><td>{}</td><td>ab{}</td></tr></table>", i, "cd".get(..i % 3).unwrap_or(""));
            hand += teds(&p, &g).result.teds;
            samples.push(EvalSample { id: format!("s{i:02}"), pred: Some(side(&p)), gt: Some(side(&g)) });
        }
        let forward = corpus_eval(samples.clone());
        samples.reverse();
        let backward = corpus_eval(samples);
        assert_eq!(forward.mean, backward.mean);
        assert!((forward.mean.teds - hand / 50.0).abs() < 1e-12);
    }
}
