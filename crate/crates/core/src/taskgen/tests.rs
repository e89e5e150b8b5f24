use super::grammar::*;
use super::*;
use crate::html::{html_to_grid, parse_html_string};
use crate::model::test_util::{on_lines, random_layout, random_lines, uniform};
use crate::model::LogicalCoords;
use alloc::string::ToString;
use alloc::vec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cfg() -> DiscretizationConfig {
    DiscretizationConfig::default()
}

fn fixtures(n: usize, seed: u64) -> Vec<TableAnnotation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (rows, cols) = (rng.random_range(1..7), rng.random_range(1..7));
            let layout = random_layout(&mut rng, rows, cols, 0.3);
            let mut a = on_lines(&layout, &random_lines(&mut rng, cols), &random_lines(&mut rng, rows));
            a.id = format!("f{i}");
            a
        })
        .collect()
}

#[test]
fn single_cell_unit_square() {
    let t = gen_cell_detect(&uniform(1, 1), &cfg(), false).unwrap();
    assert_eq!(t.target, "<0,0,999,999>");
    assert_eq!(t.task.name(), "cell_detect");
}

#[test]
fn two_by_one_in_row_order() {
    let mut a = uniform(2, 1);
    a.cells.reverse();
    let t = gen_cell_detect(&a, &cfg(), false).unwrap();
    assert_eq!(t.target, "<0,0,999,500><0,500,999,999>");
}

#[test]
fn missing_boxes_are_listed() {
    let mut a = uniform(2, 2);
    a.cells[3].bbox = None;
    a.cells[1].bbox = None;
    assert_eq!(gen_cell_detect(&a, &cfg(), false), Err(TaskError::MissingBoxes(vec![1, 3])));
}

#[test]
fn cell_targets_round_trip() {
    for a in fixtures(25, 1) {
        for exclude in [false, true] {
            let t = gen_cell_detect(&a, &cfg(), exclude).unwrap();
            let want: Vec<Bins> = a
                .cells_in_order()
                .iter()
                .filter(|c| !(exclude && c.logical.is_span()))
                .map(|c| cfg().discretize(&c.bbox.unwrap()))
                .collect();
            assert_eq!(parse_boxes(&t.target).unwrap(), want);
        }
    }
}

#[test]
fn span_targets() {
    assert_eq!(gen_span_cell_detect(&uniform(2, 2), &cfg()).unwrap().target, NONE);
    let layout = [
        LogicalCoords::slot(0, 0),
        LogicalCoords::slot(0, 1),
        LogicalCoords::new(0, 1, 2, 2),
        LogicalCoords::slot(1, 0),
        LogicalCoords::slot(1, 1),
    ];
    let lines = [0.0, 0.25, 0.5, 1.0];
    let a = on_lines(&layout, &lines, &lines[..3]);
    let t = gen_span_cell_detect(&a, &cfg()).unwrap();
    assert_eq!(t.target, "<500,0,999,500> rows 0-1 cols 2-2");
    for a in fixtures(25, 2) {
        let parsed = parse_spans(&gen_span_cell_detect(&a, &cfg()).unwrap().target).unwrap();
        let got: Vec<LogicalCoords> = parsed.iter().map(|e| e.logical).collect();
        let want: Vec<LogicalCoords> = a
            .cells_in_order()
            .iter()
            .map(|c| c.logical)
            .filter(|l| l.end_row > l.start_row || l.end_col > l.start_col)
            .collect();
        assert_eq!(got, want);
    }
}

#[test]
fn row_col_uniform_and_spans() {
    let t = parse_row_col(&gen_row_col_detect(&uniform(2, 2), &cfg()).unwrap().target).unwrap();
    assert_eq!((t.rows.len(), t.cols.len()), (2, 2));
    assert!(t.rows.iter().chain(&t.cols).all(|b| b.cells.len() == 2));
    let layout = [LogicalCoords::new(0, 1, 0, 0), LogicalCoords::slot(0, 1), LogicalCoords::slot(1, 1)];
    let lines = [0.0, 0.5, 1.0];
    let a = on_lines(&layout, &lines, &lines);
    let t = parse_row_col(&gen_row_col_detect(&a, &cfg()).unwrap().target).unwrap();
    let span = cfg().discretize(&a.cells[0].bbox.unwrap());
    assert!(t.rows[0].cells.contains(&span) && t.rows[1].cells.contains(&span));
    assert_eq!(gen_row_col_detect(&TableAnnotation::from_cells(a.cells.clone()), &cfg()), Err(TaskError::GridsMissing));
}

#[test]
fn row_col_membership_matches_scan() {
    for a in fixtures(25, 3) {
        let t = parse_row_col(&gen_row_col_detect(&a, &cfg()).unwrap().target).unwrap();
        let (rows, cols) = a.dims();
        assert_eq!((t.rows.len(), t.cols.len()), (rows, cols));
        for (r, band) in t.rows.iter().enumerate() {
            let mut want = Vec::new();
            for c in 0..cols {
                for cell in &a.cells {
                    let l = cell.logical;
                    if l.start_row <= r && r <= l.end_row && l.start_col == c {
                        want.push(cfg().discretize(&cell.bbox.unwrap()));
                    }
                }
            }
            assert_eq!(band.cells, want);
        }
        for (c, band) in t.cols.iter().enumerate() {
            let mut want = Vec::new();
            for r in 0..rows {
                for cell in &a.cells {
                    let l = cell.logical;
                    if l.start_col <= c && c <= l.end_col && l.start_row == r {
                        want.push(cfg().discretize(&cell.bbox.unwrap()));
                    }
                }
            }
            assert_eq!(band.cells, want);
        }
    }
}

#[test]
fn structure_targets() {
    let one = gen_structure_parse(&uniform(1, 1), StructureFormat::Html).unwrap();
    assert_eq!(one.target, "<table><tr><td></td></tr></table>");
    let md = gen_structure_parse(&uniform(2, 2), StructureFormat::Markdown).unwrap();
    assert_eq!(md.target, "| - | - |\n| --- | --- |\n| - | - |");
    assert_eq!(parse_markdown(&md.target).unwrap(), (2, 2));
}

#[test]
fn structure_equals_erased_html_parse() {
    for a in fixtures(25, 4) {
        let s = gen_structure_parse(&a, StructureFormat::Html).unwrap().target;
        let h = gen_html_parse(&a).unwrap().target;
        let canon = parse_html_string(&h, true).unwrap().without_sections().structure_only();
        assert_eq!(parse_html_string(&s, false).unwrap(), canon);
        let md = gen_structure_parse(&a, StructureFormat::Markdown).unwrap().target;
        assert_eq!(parse_markdown(&md).unwrap(), a.dims());
    }
}

#[test]
fn html_targets_round_trip() {
    for a in fixtures(25, 5) {
        let t = gen_html_parse(&a).unwrap();
        assert_eq!(t.prompt, PROMPT_HTML);
        let back = html_to_grid(&parse_html_string(&t.target, false).unwrap()).unwrap();
        let mut want: Vec<_> = a.cells.iter().map(|c| (c.logical, c.content.clone())).collect();
        let mut got: Vec<_> = back.cells.iter().map(|c| (c.logical, c.content.clone())).collect();
        want.sort_by_key(|x| x.0.order_key());
        got.sort_by_key(|x| x.0.order_key());
        assert_eq!(got, want);
    }
}

fn line(x1: f64, y1: f64, x2: f64, y2: f64, t: &str) -> TextLine {
    TextLine {
        bbox: BBox::new(x1, y1, x2, y2),
        text: t.to_string(),
    }
}

#[test]
fn stacked_and_side_by_side() {
    let stacked = [line(0.0, 0.5, 0.4, 0.6, "low"), line(0.0, 0.1, 0.4, 0.2, "high")];
    assert_eq!(gen_spot_ordered("s", &stacked, false, &cfg()).target, "high\nlow");
    let beside = [line(0.5, 0.1, 0.9, 0.2, "right"), line(0.0, 0.12, 0.4, 0.21, "left")];
    assert_eq!(gen_spot_ordered("s", &beside, false, &cfg()).target, "left\nright");
    let t = gen_spot_ordered("s", &beside, true, &cfg()).target;
    let parsed = parse_spot(&t, true).unwrap();
    assert_eq!(parsed[0], (Some(cfg().discretize(&beside[1].bbox)), "left".to_string()));
    assert_eq!(gen_spot_ordered("s", &[], true, &cfg()).target, NONE);
}

/// Lines laid out in known bands: heights and jitter keep same-band overlap
/// above and cross-band overlap below the threshold. The expected order is
/// the construction order.
fn banded(rng: &mut ChaCha8Rng) -> (Vec<TextLine>, Vec<String>) {
    let n_bands = rng.random_range(1..6);
    let mut lines = Vec::new();
    let mut expected = Vec::new();
    let pitch = 1.0 / n_bands as f64;
    for b in 0..n_bands {
        let top = b as f64 * pitch;
        let n = rng.random_range(1..5);
        let width = 1.0 / n as f64;
        for k in 0..n {
            // height 0.5 pitch, jitter within 0.1 pitch: overlap >= 0.3 of 0.5
            let y = top + 0.1 * pitch + rng.random_range(0.0..0.1) * pitch;
            let x = k as f64 * width + rng.random_range(0.0..0.2) * width;
            let text = format!("b{b}k{k}");
            lines.push(line(x, y, x + 0.6 * width, y + 0.5 * pitch, &text));
            expected.push(text);
        }
    }
    for i in (1..lines.len()).rev() {
        lines.swap(i, rng.random_range(0..=i));
    }
    (lines, expected)
}

#[test]
fn reading_order_matches_construction() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let (lines, expected) = banded(&mut rng);
        let got: Vec<String> = reading_order(&lines).iter().map(|&i| lines[i].text.clone()).collect();
        assert_eq!(got, expected);
    }
}

#[test]
fn boxquery_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (lines, _) = banded(&mut rng);
    let full = gen_spot_boxquery("q", &lines, &BBox::UNIT, true, &cfg());
    assert_eq!(full.target, gen_spot_ordered("q", &lines, true, &cfg()).target);
    assert!(full.prompt.contains("<0,0,999,999>"));
    let empty = gen_spot_boxquery("q", &lines, &BBox::new(0.0, 0.0, 0.0, 0.0), false, &cfg());
    assert_eq!(empty.target, NONE);
    for _ in 0..100 {
        let (lines, _) = banded(&mut rng);
        let (a, b) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let (c, d) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let q = BBox::new(f64::min(a, c), f64::min(b, d), f64::max(a, c), f64::max(b, d));
        let t = gen_spot_boxquery("q", &lines, &q, false, &cfg());
        let mut got: Vec<String> = parse_spot(&t.target, false).unwrap().into_iter().map(|(_, s)| s).collect();
        let mut want: Vec<String> = lines
            .iter()
            .filter(|l| {
                let cx = (l.bbox.x1 + l.bbox.x2) / 2.0;
                let cy = (l.bbox.y1 + l.bbox.y2) / 2.0;
                q.x1 <= cx && cx <= q.x2 && q.y1 <= cy && cy <= q.y2
            })
            .map(|l| l.text.clone())
            .collect();
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }
}

#[test]
fn task_names_round_trip() {
    for k in TaskKind::ALL {
        assert_eq!(TaskKind::from_name(k.name()), Some(k));
    }
    assert_eq!(TaskKind::from_name("ocr"), None);
}

proptest! {
    #[test]
    fn spot_round_trip(texts in proptest::collection::vec("[a-z<> ]{0,8}", 0..6), bins in 2u32..2000) {
        let cfg = DiscretizationConfig::new(bins).unwrap();
        let lines: Vec<TextLine> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| line(0.0, i as f64 / 6.0, 0.5, (i as f64 + 0.5) / 6.0, t))
            .collect();
        let t = gen_spot_ordered("p", &lines, true, &cfg);
        let parsed = parse_spot(&t.target, true).unwrap();
        prop_assert_eq!(parsed.len(), lines.len());
        for (p, l) in parsed.iter().zip(&lines) {
            prop_assert_eq!(p.0, Some(cfg.discretize(&l.bbox)));
            prop_assert_eq!(&p.1, &l.text);
        }
        prop_assert_eq!(t.clone(), gen_spot_ordered("p", &lines, true, &cfg));
    }
}
