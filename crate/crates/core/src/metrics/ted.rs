//! Ordered tree edit distance (Zhang-Shasha) with TEDS costs.

use alloc::vec;
use alloc::vec::Vec;

use crate::html::{HtmlNode, Tag};

/// Levenshtein distance over Unicode scalar values divided by the longer length.
/// Zero when both strings are empty.
pub fn normalized_levenshtein(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()] as f64 / longest as f64
}

/// Substitution cost between two nodes.
///
/// Different tags cost 1. Equal non-cell tags cost 0. Two cells cost 1 when
/// their spans differ and the normalized edit distance of their contents otherwise.
pub fn rename_cost(a: &HtmlNode, b: &HtmlNode) -> f64 {
    if a.tag != b.tag {
        return 1.0;
    }
    if a.tag != Tag::Td {
        return 0.0;
    }
    if a.rowspan != b.rowspan || a.colspan != b.colspan {
        1.0
    } else {
        normalized_levenshtein(&a.content, &b.content)
    }
}

/// Post-order view of a tree: nodes plus the leftmost-leaf index of each.
struct PostOrder<'a> {
    nodes: Vec<&'a HtmlNode>,
    leftmost: Vec<usize>,
    keyroots: Vec<usize>,
}

impl<'a> PostOrder<'a> {
    fn new(root: &'a HtmlNode) -> Self {
        let mut nodes = Vec::new();
        let mut leftmost = Vec::new();
        Self::walk(root, &mut nodes, &mut leftmost);
        // a keyroot is the highest node sharing its leftmost leaf
        let n = nodes.len();
        let mut last = vec![usize::MAX; n];
        for (i, &l) in leftmost.iter().enumerate() {
            last[l] = i;
        }
        let mut keyroots: Vec<usize> = last.into_iter().filter(|&i| i != usize::MAX).collect();
        keyroots.sort_unstable();
        PostOrder {
            nodes,
            leftmost,
            keyroots,
        }
    }

    fn walk(node: &'a HtmlNode, nodes: &mut Vec<&'a HtmlNode>, leftmost: &mut Vec<usize>) -> usize {
        let mut first_leaf = None;
        for child in &node.children {
            let l = Self::walk(child, nodes, leftmost);
            first_leaf.get_or_insert(l);
        }
        let idx = nodes.len();
        let l = first_leaf.unwrap_or(idx);
        nodes.push(node);
        leftmost.push(l);
        l
    }
}

/// Minimal-cost ordered edit distance; insertion and deletion cost 1 and
/// substitution follows [`rename_cost`].
pub fn tree_edit_distance(a: &HtmlNode, b: &HtmlNode) -> f64 {
    let ta = PostOrder::new(a);
    let tb = PostOrder::new(b);
    let (na, nb) = (ta.nodes.len(), tb.nodes.len());
    let mut tree_dist = vec![0.0f64; na * nb];
    // forest distance table, reused across keyroot pairs
    let mut fd = vec![0.0f64; (na + 1) * (nb + 1)];
    let w = nb + 1;

    for &i in &ta.keyroots {
        for &j in &tb.keyroots {
            let li = ta.leftmost[i];
            let lj = tb.leftmost[j];
            let m = i - li + 1;
            let n = j - lj + 1;
            fd[0] = 0.0;
            for x in 1..=m {
                fd[x * w] = fd[(x - 1) * w] + 1.0;
            }
            for y in 1..=n {
                fd[y] = fd[y - 1] + 1.0;
            }
            for x in 1..=m {
                let ni = li + x - 1;
                for y in 1..=n {
                    let nj = lj + y - 1;
                    let del = fd[(x - 1) * w + y] + 1.0;
                    let ins = fd[x * w + y - 1] + 1.0;
                    let v = if ta.leftmost[ni] == li && tb.leftmost[nj] == lj {
                        let sub = fd[(x - 1) * w + y - 1] + rename_cost(ta.nodes[ni], tb.nodes[nj]);
                        let v = del.min(ins).min(sub);
                        tree_dist[ni * nb + nj] = v;
                        v
                    } else {
                        let p = ta.leftmost[ni] - li;
                        let q = tb.leftmost[nj] - lj;
                        del.min(ins).min(fd[p * w + q] + tree_dist[ni * nb + nj])
                    };
                    fd[x * w + y] = v;
                }
            }
        }
    }
    tree_dist[(na - 1) * nb + (nb - 1)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t1(s: &str) -> HtmlNode {
        HtmlNode::table(vec![HtmlNode::tr(vec![HtmlNode::td(s)])])
    }

    #[test]
    fn levenshtein_values() {
        assert_eq!(normalized_levenshtein("", ""), 0.0);
        assert_eq!(normalized_levenshtein("abc", "abc"), 0.0);
        assert_eq!(normalized_levenshtein("kitten", "sitting"), 3.0 / 7.0);
        assert_eq!(normalized_levenshtein("", "ab"), 1.0);
        assert_eq!(normalized_levenshtein("é", "e"), 1.0);
    }

    #[test]
    fn identical_trees() {
        let t = t1("x");
        assert_eq!(tree_edit_distance(&t, &t), 0.0);
    }

    #[test]
    fn single_char_substitution() {
        assert_eq!(tree_edit_distance(&t1("a"), &t1("b")), 1.0);
    }

    #[test]
    fn insertions_and_spans() {
        let a = t1("a");
        let b = HtmlNode::table(vec![HtmlNode::tr(vec![HtmlNode::td("a"), HtmlNode::td("b")])]);
        assert_eq!(tree_edit_distance(&a, &b), 1.0);
        assert_eq!(tree_edit_distance(&b, &a), 1.0);
        let c = HtmlNode::table(vec![HtmlNode::tr(vec![HtmlNode::td_span("a", 1, 2)])]);
        assert_eq!(tree_edit_distance(&a, &c), 1.0);
        // an empty table against one with a row of two cells: three insertions
        assert_eq!(tree_edit_distance(&HtmlNode::table(vec![]), &b), 3.0);
    }

    #[test]
    fn partial_content_cost() {
        let a = HtmlNode::table(vec![HtmlNode::tr(vec![HtmlNode::td("abcd"), HtmlNode::td("x")])]);
        let b = HtmlNode::table(vec![HtmlNode::tr(vec![HtmlNode::td("abed"), HtmlNode::td("x")])]);
        assert!((tree_edit_distance(&a, &b) - 0.25).abs() < 1e-12);
    }
}
