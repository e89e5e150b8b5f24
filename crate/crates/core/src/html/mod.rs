//! Table HTML trees.
//!
//! Only the structural tags `table`, `thead`, `tbody`, `tr` and `td` become
//! nodes. Inline markup inside a cell (`<b>`, `<sup>`, ...) stays verbatim in
//! the cell's content string.

mod grid;
mod parse;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use thiserror::Error;

pub use grid::{grid_to_html, html_to_grid};
pub use parse::{parse_html, parse_html_string, ParseFlags, ParseMode, Parsed};

use crate::model::ValidationError;

/// Largest rowspan/colspan accepted by the parser.
pub const MAX_SPAN: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    Table,
    Thead,
    Tbody,
    Tr,
    Td,
}

impl Tag {
    pub fn name(self) -> &'static str {
        match self {
            Tag::Table => "table",
            Tag::Thead => "thead",
            Tag::Tbody => "tbody",
            Tag::Tr => "tr",
            Tag::Td => "td",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HtmlNode {
    pub tag: Tag,
    pub rowspan: usize,
    pub colspan: usize,
    pub content: String,
    pub children: Vec<HtmlNode>,
}

impl HtmlNode {
    pub fn new(tag: Tag, children: Vec<HtmlNode>) -> Self {
        HtmlNode {
            tag,
            rowspan: 1,
            colspan: 1,
            content: String::new(),
            children,
        }
    }

    pub fn table(children: Vec<HtmlNode>) -> Self {
        HtmlNode::new(Tag::Table, children)
    }

    pub fn tr(children: Vec<HtmlNode>) -> Self {
        HtmlNode::new(Tag::Tr, children)
    }

    pub fn td(content: impl Into<String>) -> Self {
        HtmlNode {
            content: content.into(),
            ..HtmlNode::new(Tag::Td, Vec::new())
        }
    }

    pub fn td_span(content: impl Into<String>, rowspan: usize, colspan: usize) -> Self {
        HtmlNode {
            rowspan,
            colspan,
            ..HtmlNode::td(content)
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        1 + self.children.iter().map(HtmlNode::size).sum::<usize>()
    }

    /// Replace `thead`/`tbody` wrappers under the table by their rows.
    pub fn without_sections(&self) -> HtmlNode {
        let mut out = HtmlNode {
            children: Vec::with_capacity(self.children.len()),
            ..self.clone_shallow()
        };
        for child in &self.children {
            match child.tag {
                Tag::Thead | Tag::Tbody => {
                    out.children.extend(child.children.iter().map(HtmlNode::without_sections))
                }
                _ => out.children.push(child.without_sections()),
            }
        }
        out
    }

    /// Copy of the tree with every cell's content erased.
    pub fn structure_only(&self) -> HtmlNode {
        HtmlNode {
            tag: self.tag,
            rowspan: self.rowspan,
            colspan: self.colspan,
            content: String::new(),
            children: self.children.iter().map(HtmlNode::structure_only).collect(),
        }
    }

    fn clone_shallow(&self) -> HtmlNode {
        HtmlNode {
            tag: self.tag,
            rowspan: self.rowspan,
            colspan: self.colspan,
            content: self.content.clone(),
            children: Vec::new(),
        }
    }

    /// Canonical byte form: double-quoted attributes, span attributes only
    /// when greater than one, no whitespace between tags.
    pub fn to_html(&self) -> String {
        let mut s = String::new();
        self.write_html(&mut s).expect("writing to a String cannot fail");
        s
    }

    fn write_html<W: Write>(&self, w: &mut W) -> fmt::Result {
        let name = self.tag.name();
        w.write_char('<')?;
        w.write_str(name)?;
        if self.tag == Tag::Td {
            if self.rowspan > 1 {
                write!(w, " rowspan=\"{}\"", self.rowspan)?;
            }
            if self.colspan > 1 {
                write!(w, " colspan=\"{}\"", self.colspan)?;
            }
        }
        w.write_char('>')?;
        if self.tag == Tag::Td {
            w.write_str(&self.content)?;
        }
        for child in &self.children {
            child.write_html(w)?;
        }
        write!(w, "</{name}>")
    }
}

impl fmt::Display for HtmlNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_html(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HtmlError {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("malformed table at row {row}: {reason}")]
    Malformed { row: usize, reason: &'static str },
    #[error("root node is not a table")]
    NotATable,
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn canonical_serialization() {
        let t = HtmlNode::table(vec![
            HtmlNode::tr(vec![HtmlNode::td_span("A", 2, 1), HtmlNode::td("B")]),
            HtmlNode::tr(vec![HtmlNode::td("C")]),
        ]);
        assert_eq!(
            t.to_html(),
            "<table><tr><td rowspan=\"2\">A</td><td>B</td></tr><tr><td>C</td></tr></table>"
        );
        assert_eq!(t.size(), 6);
    }

    #[test]
    fn sections_are_flattened() {
        let t = HtmlNode::table(vec![
            HtmlNode::new(Tag::Thead, vec![HtmlNode::tr(vec![HtmlNode::td("h")])]),
            HtmlNode::new(Tag::Tbody, vec![HtmlNode::tr(vec![HtmlNode::td("b")])]),
        ]);
        assert_eq!(
            t.without_sections().to_html(),
            "<table><tr><td>h</td></tr><tr><td>b</td></tr></table>"
        );
    }
}
