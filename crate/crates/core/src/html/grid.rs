//! Conversion between the logical grid model and table HTML.

use alloc::vec;
use alloc::vec::Vec;

use super::{HtmlError, HtmlNode, Tag};
use crate::model::{Cell, LogicalCoords, TableAnnotation, MAX_GRID_SLOTS};

/// Build the canonical HTML tree of an annotation.
///
/// Cells are emitted row-major by `(start_row, start_col)`; each cell sits in
/// the `tr` of its first row and carries `rowspan`/`colspan` when they exceed 1.
pub fn grid_to_html(ann: &TableAnnotation) -> Result<HtmlNode, HtmlError> {
    ann.validate_layout()?;
    let (rows, _) = ann.dims();
    let mut trs: Vec<HtmlNode> = (0..rows).map(|_| HtmlNode::tr(Vec::new())).collect();
    for cell in ann.cells_in_order() {
        let l = &cell.logical;
        trs[l.start_row].children.push(HtmlNode::td_span(
            cell.content.clone(),
            l.rowspan(),
            l.colspan(),
        ));
    }
    Ok(HtmlNode::table(trs))
}

/// Recover logical coordinates from an HTML table tree.
///
/// Each `td` is placed at the leftmost free column of its row and claims its
/// `rowspan x colspan` footprint. The result has no boxes and no grids; cell
/// ids follow document order.
pub fn html_to_grid(root: &HtmlNode) -> Result<TableAnnotation, HtmlError> {
    if root.tag != Tag::Table {
        return Err(HtmlError::NotATable);
    }
    let mut rows: Vec<&HtmlNode> = Vec::new();
    for child in &root.children {
        match child.tag {
            Tag::Tr => rows.push(child),
            Tag::Thead | Tag::Tbody => {
                for tr in &child.children {
                    if tr.tag != Tag::Tr {
                        return Err(HtmlError::Malformed {
                            row: rows.len(),
                            reason: "section child is not a row",
                        });
                    }
                    rows.push(tr);
                }
            }
            _ => {
                return Err(HtmlError::Malformed {
                    row: rows.len(),
                    reason: "table child is not a row or section",
                })
            }
        }
    }

    let n_rows = rows.len();
    // occupancy[r] grows as cells claim columns
    let mut occupancy: Vec<Vec<bool>> = vec![Vec::new(); n_rows];
    let mut cells = Vec::new();
    let mut slots = 0usize;
    for (r, tr) in rows.iter().enumerate() {
        let mut col = 0;
        for td in &tr.children {
            if td.tag != Tag::Td {
                return Err(HtmlError::Malformed {
                    row: r,
                    reason: "row child is not a cell",
                });
            }
            let (rs, cs) = (td.rowspan.max(1), td.colspan.max(1));
            while occupancy[r].get(col).copied().unwrap_or(false) {
                col += 1;
            }
            if r + rs > n_rows {
                return Err(HtmlError::Malformed {
                    row: r,
                    reason: "rowspan extends past the last row",
                });
            }
            slots += rs * cs;
            if slots > MAX_GRID_SLOTS {
                return Err(HtmlError::Malformed {
                    row: r,
                    reason: "table exceeds the slot limit",
                });
            }
            for occ in occupancy.iter_mut().skip(r).take(rs) {
                if occ.len() < col + cs {
                    occ.resize(col + cs, false);
                }
                if occ[col..col + cs].iter().any(|&o| o) {
                    return Err(HtmlError::Malformed {
                        row: r,
                        reason: "overlapping cell footprints",
                    });
                }
                occ[col..col + cs].iter_mut().for_each(|o| *o = true);
            }
            cells.push(Cell {
                id: cells.len(),
                bbox: None,
                logical: LogicalCoords::new(r, r + rs - 1, col, col + cs - 1),
                content: td.content.clone(),
            });
            col += cs;
        }
    }
    let n_cols = occupancy.iter().map(Vec::len).max().unwrap_or(0);
    for (r, occ) in occupancy.iter().enumerate() {
        if occ.len() < n_cols || occ.iter().any(|&o| !o) {
            return Err(HtmlError::Malformed {
                row: r,
                reason: "row leaves grid slots uncovered",
            });
        }
    }
    Ok(TableAnnotation::from_cells(cells))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::html::parse_html_string;
    use crate::model::test_util::cell;
    use alloc::collections::BTreeMap;
    use alloc::string::String;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_cell() {
        let t = TableAnnotation::from_cells(vec![cell(0, 0, 0, 0, 0, "A")]);
        assert_eq!(
            grid_to_html(&t).unwrap(),
            HtmlNode::table(vec![HtmlNode::tr(vec![HtmlNode::td("A")])])
        );
    }

    #[test]
    fn rowspan_layout() {
        let t = TableAnnotation::from_cells(vec![
            cell(0, 0, 1, 0, 0, "A"),
            cell(1, 0, 0, 1, 1, "B"),
            cell(2, 1, 1, 1, 1, "C"),
        ]);
        let h = grid_to_html(&t).unwrap();
        assert_eq!(
            h,
            HtmlNode::table(vec![
                HtmlNode::tr(vec![HtmlNode::td_span("A", 2, 1), HtmlNode::td("B")]),
                HtmlNode::tr(vec![HtmlNode::td("C")]),
            ])
        );
        assert!(!h.to_html().contains("span=\"1\""));
        let back = html_to_grid(&h).unwrap();
        assert_eq!(back.cells, t.cells);
    }

    #[test]
    fn ragged_rows_fail_at_row_one() {
        let h = HtmlNode::table(vec![
            HtmlNode::tr(vec![HtmlNode::td(""), HtmlNode::td("")]),
            HtmlNode::tr(vec![HtmlNode::td("")]),
        ]);
        assert!(matches!(html_to_grid(&h), Err(HtmlError::Malformed { row: 1, .. })));
    }

    #[test]
    fn overlap_and_overflow_fail() {
        // second row's td is pushed right of the rowspan, the third row has nothing to cover
        let h = parse_html_string(
            "<table><tr><td rowspan=\"3\">a</td><td>b</td></tr><tr><td>c</td></tr></table>",
            false,
        )
        .unwrap();
        assert!(matches!(html_to_grid(&h), Err(HtmlError::Malformed { row: 0, .. })));
    }

    #[test]
    fn invalid_annotation_rejected() {
        let t = TableAnnotation::from_cells(vec![cell(0, 0, 0, 0, 1, "A"), cell(1, 0, 0, 1, 1, "B")]);
        assert!(matches!(grid_to_html(&t), Err(HtmlError::Invalid(_))));
    }

    #[test]
    fn sections_give_same_grid() {
        let with = parse_html_string(
            "<table><thead><tr><td colspan=\"2\">h</td></tr></thead><tbody><tr><td>a</td><td>b</td></tr></tbody></table>",
            false,
        )
        .unwrap();
        let without = parse_html_string(
            "<table><tr><td colspan=\"2\">h</td></tr><tr><td>a</td><td>b</td></tr></table>",
            false,
        )
        .unwrap();
        assert_eq!(html_to_grid(&with).unwrap(), html_to_grid(&without).unwrap());
    }

    /// Random span layout built by greedy rectangle placement on an R x C board.
    /// Independent occupancy simulation over an explicit slot map.
    fn simulate(h: &HtmlNode) -> Option<BTreeMap<(usize, usize), (usize, usize)>> {
        let rows = &h.children;
        let mut map: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut placed = BTreeMap::new();
        let mut k = 0;
        for (r, tr) in rows.iter().enumerate() {
            let mut c = 0;
            for td in &tr.children {
                while map.contains_key(&(r, c)) {
                    c += 1;
                }
                for dr in 0..td.rowspan {
                    for dc in 0..td.colspan {
                        if map.insert((r + dr, c + dc), k).is_some() {
                            return None;
                        }
                    }
                }
                placed.insert((r, c), (td.rowspan, td.colspan));
                k += 1;
                c += td.colspan;
            }
        }
        Some(placed)
    }

    #[test]
    fn random_layouts_match_occupancy_simulator() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let (rows, cols) = (rng.random_range(1..8), rng.random_range(1..8));
            let layout = crate::model::test_util::random_layout(&mut rng, rows, cols, 0.3);
            let cells: Vec<Cell> = layout
                .iter()
                .enumerate()
                .map(|(i, l)| Cell { id: i, bbox: None, logical: *l, content: String::from("x") })
                .collect();
            let t = TableAnnotation::from_cells(cells);
            let h = grid_to_html(&t).unwrap();
            let sim = simulate(&h).unwrap();
            let got = html_to_grid(&h).unwrap();
            assert_eq!(sim.len(), got.cells.len());
            for c in &got.cells {
                let l = c.logical;
                assert_eq!(sim[&(l.start_row, l.start_col)], (l.rowspan(), l.colspan()));
            }
        }
    }
}
