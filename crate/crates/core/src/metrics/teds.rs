//! TEDS, TEDS-S and TEDS-Delta.

use crate::html::{parse_html, HtmlNode, ParseFlags, ParseMode};

use super::ted::tree_edit_distance;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TedsResult {
    pub teds: f64,
    pub teds_s: f64,
    /// `teds_s - teds`: the similarity lost to cell content errors.
    pub teds_delta: f64,
}

impl TedsResult {
    pub fn new(teds: f64, teds_s: f64) -> Self {
        TedsResult {
            teds,
            teds_s,
            teds_delta: teds_s - teds,
        }
    }

    pub fn zero() -> Self {
        TedsResult::new(0.0, 0.0)
    }
}

/// Score of one prediction against its ground truth, with parser diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TedsScore {
    pub result: TedsResult,
    pub pred_flags: ParseFlags,
    pub gt_flags: ParseFlags,
    /// Either side had no table at all; the sample scores zero.
    pub failed: bool,
}

fn similarity(a: &HtmlNode, b: &HtmlNode) -> f64 {
    let size = a.size().max(b.size()) as f64;
    1.0 - tree_edit_distance(a, b) / size
}

/// TEDS on already parsed trees. Section wrappers are removed first.
pub fn teds_trees(pred: &HtmlNode, gt: &HtmlNode) -> TedsResult {
    let pred = pred.without_sections();
    let gt = gt.without_sections();
    let full = similarity(&pred, &gt);
    let structure = similarity(&pred.structure_only(), &gt.structure_only());
    TedsResult::new(full, structure)
}

/// Parse both strings leniently and score them.
pub fn teds(pred_html: &str, gt_html: &str) -> TedsScore {
    let pred = parse_html(pred_html, ParseMode::Lenient).expect("lenient parsing is total");
    let gt = parse_html(gt_html, ParseMode::Lenient).expect("lenient parsing is total");
    let failed = pred.flags.no_table || gt.flags.no_table;
    let result = if failed {
        TedsResult::zero()
    } else {
        teds_trees(&pred.root, &gt.root)
    };
    TedsScore {
        result,
        pred_flags: pred.flags,
        gt_flags: gt.flags,
        failed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical() {
        let s = "<table><tr><td>a</td><td rowspan=\"2\">b</td></tr><tr><td>c</td></tr></table>";
        let r = teds(s, s).result;
        assert_eq!(r, TedsResult { teds: 1.0, teds_s: 1.0, teds_delta: 0.0 });
    }

    #[test]
    fn one_cell_wrong_in_three() {
        // five nodes: table, tr, three cells; one content fully replaced
        let gt = "<table><tr><td>a</td><td>b</td><td>c</td></tr></table>";
        let pred = "<table><tr><td>a</td><td>x</td><td>c</td></tr></table>";
        let r = teds(pred, gt).result;
        assert!((r.teds - 0.8).abs() < 1e-12);
        assert_eq!(r.teds_s, 1.0);
        assert!((r.teds_delta - 0.2).abs() < 1e-12);
    }

    #[test]
    fn sections_do_not_matter() {
        let a = "<table><thead><tr><td>a</td></tr></thead><tbody><tr><td>b</td></tr></tbody></table>";
        let b = "<table><tr><td>a</td></tr><tr><td>b</td></tr></table>";
        assert_eq!(teds(a, b).result.teds, 1.0);
    }

    #[test]
    fn unparseable_scores_zero() {
        let s = teds("no table here", "<table><tr><td>a</td></tr></table>");
        assert!(s.failed);
        assert_eq!(s.result, TedsResult::zero());
    }

    #[test]
    fn delta_matches_published_pair() {
        // TEDS-S 96.82, TEDS 95.48 -> delta 1.34
        let r = TedsResult::new(0.9548, 0.9682);
        assert!((r.teds_delta * 100.0 - 1.34).abs() < 1e-9);
    }
}
