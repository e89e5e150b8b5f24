//! Strict and lenient parsing of table HTML strings.
//!
//! Strict mode accepts exactly the structural tag set plus inline formatting
//! inside cells and reports the byte offset of the first violation. Lenient
//! mode never fails: unknown tags and attributes are dropped, unclosed `td` /
//! `tr` are closed automatically, nested tables are flattened into the cell
//! text and `th` is read as `td`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{HtmlError, HtmlNode, Tag, MAX_SPAN};

/// Inline tags kept verbatim inside cell content.
const INLINE_TAGS: &[&str] = &[
    "b", "i", "u", "s", "sup", "sub", "em", "strong", "strike", "underline", "overline", "br",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    Strict,
    Lenient,
}

/// What lenient parsing had to do to produce a tree.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseFlags {
    /// No `<table>` element was found; the result is an empty table.
    pub no_table: bool,
    /// Input was repaired (auto-closed elements, dropped tokens, clamped attributes).
    pub repaired: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parsed {
    pub root: HtmlNode,
    pub flags: ParseFlags,
}

/// Parse a table HTML string. In lenient mode this never returns an error.
pub fn parse_html_string(s: &str, lenient: bool) -> Result<HtmlNode, HtmlError> {
    let mode = if lenient {
        ParseMode::Lenient
    } else {
        ParseMode::Strict
    };
    parse_html(s, mode).map(|p| p.root)
}

pub fn parse_html(s: &str, mode: ParseMode) -> Result<Parsed, HtmlError> {
    let mut b = Builder::new(s, mode);
    let mut lexer = Lexer { src: s, pos: 0 };
    while let Some(tok) = lexer.next_token() {
        let tok = tok.map_err(|(offset, message)| b.fail_or_flag(offset, message));
        match tok {
            Ok(tok) => b.feed(tok)?,
            Err(Some(e)) => return Err(e),
            Err(None) => {}
        }
        if b.finished && mode == ParseMode::Lenient {
            if lexer.pos < s.len() {
                b.flags.repaired |= !s[lexer.pos..].trim().is_empty();
            }
            break;
        }
    }
    b.finish()
}

#[derive(Debug)]
enum TokenKind<'a> {
    Open {
        name: String,
        attrs: Vec<(String, &'a str)>,
    },
    Close {
        name: String,
    },
    Text,
    /// Comments, doctypes and processing instructions.
    Other,
}

#[derive(Debug)]
struct Token<'a> {
    kind: TokenKind<'a>,
    start: usize,
    end: usize,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

type LexResult<'a> = Result<Token<'a>, (usize, &'static str)>;

impl<'a> Lexer<'a> {
    fn next_token(&mut self) -> Option<LexResult<'a>> {
        let bytes = self.src.as_bytes();
        let start = self.pos;
        if start >= bytes.len() {
            return None;
        }
        if bytes[start] != b'<' || !self.looks_like_markup(start) {
            // a stray '<' is one byte, so skipping it stays on a char boundary
            let from = if bytes[start] == b'<' { start + 1 } else { start };
            let end = self.src[from..]
                .find('<')
                .map_or(bytes.len(), |i| from + i);
            self.pos = end;
            return Some(Ok(Token {
                kind: TokenKind::Text,
                start,
                end,
            }));
        }
        let rest = &self.src[start..];
        if rest.starts_with("<!--") {
            let end = rest.find("-->").map(|i| start + i + 3);
            self.pos = end.unwrap_or(bytes.len());
            return Some(match end {
                Some(end) => Ok(Token {
                    kind: TokenKind::Other,
                    start,
                    end,
                }),
                None => Err((start, "unterminated comment")),
            });
        }
        if rest.starts_with("<!") || rest.starts_with("<?") {
            let end = rest.find('>').map(|i| start + i + 1);
            self.pos = end.unwrap_or(bytes.len());
            return Some(match end {
                Some(end) => Ok(Token {
                    kind: TokenKind::Other,
                    start,
                    end,
                }),
                None => Err((start, "unterminated declaration")),
            });
        }
        Some(self.tag(start))
    }

    fn looks_like_markup(&self, at: usize) -> bool {
        let b = self.src.as_bytes();
        match b.get(at + 1) {
            Some(c) if c.is_ascii_alphabetic() => true,
            Some(b'/') => b.get(at + 2).is_some_and(|c| c.is_ascii_alphabetic()),
            Some(b'!') | Some(b'?') => true,
            _ => false,
        }
    }

    fn tag(&mut self, start: usize) -> LexResult<'a> {
        let bytes = self.src.as_bytes();
        let mut i = start + 1;
        let closing = bytes[i] == b'/';
        if closing {
            i += 1;
        }
        let name_start = i;
        while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'-') {
            i += 1;
        }
        let name = self.src[name_start..i].to_ascii_lowercase();
        let mut attrs = Vec::new();
        loop {
            while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            if i >= bytes.len() {
                self.pos = bytes.len();
                return Err((start, "unterminated tag"));
            }
            match bytes[i] {
                b'>' => {
                    i += 1;
                    break;
                }
                b'/' => {
                    i += 1;
                    continue;
                }
                _ => {}
            }
            let an_start = i;
            while i < bytes.len() && !matches!(bytes[i], b'=' | b'>' | b'/') && !bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            let attr_name = self.src[an_start..i].to_ascii_lowercase();
            while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            let mut value = "";
            if i < bytes.len() && bytes[i] == b'=' {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'"' || bytes[i] == b'\'') {
                    let q = bytes[i];
                    let v_start = i + 1;
                    let Some(len) = bytes[v_start..].iter().position(|&c| c == q) else {
                        self.pos = bytes.len();
                        return Err((start, "unterminated attribute value"));
                    };
                    value = &self.src[v_start..v_start + len];
                    i = v_start + len + 1;
                } else {
                    let v_start = i;
                    while i < bytes.len() && bytes[i] != b'>' && !bytes[i].is_ascii_whitespace() {
                        i += 1;
                    }
                    value = &self.src[v_start..i];
                }
            }
            attrs.push((attr_name, value));
        }
        self.pos = i;
        let kind = if closing {
            TokenKind::Close { name }
        } else {
            TokenKind::Open { name, attrs }
        };
        Ok(Token {
            kind,
            start,
            end: i,
        })
    }
}

struct OpenCell {
    node: HtmlNode,
    /// Depth of tables nested inside this cell (lenient only).
    nested: usize,
}

struct Builder<'a> {
    src: &'a str,
    mode: ParseMode,
    flags: ParseFlags,
    root: Option<HtmlNode>,
    section: Option<HtmlNode>,
    row: Option<HtmlNode>,
    cell: Option<OpenCell>,
    finished: bool,
}

impl<'a> Builder<'a> {
    fn new(src: &'a str, mode: ParseMode) -> Self {
        Builder {
            src,
            mode,
            flags: ParseFlags::default(),
            root: None,
            section: None,
            row: None,
            cell: None,
            finished: false,
        }
    }

    fn strict(&self) -> bool {
        self.mode == ParseMode::Strict
    }

    fn error(offset: usize, message: impl ToString) -> HtmlError {
        HtmlError::Parse {
            offset,
            message: message.to_string(),
        }
    }

    /// In strict mode produce the error, in lenient mode record a repair.
    fn violation(&mut self, offset: usize, message: impl ToString) -> Result<(), HtmlError> {
        if self.strict() {
            Err(Self::error(offset, message))
        } else {
            self.flags.repaired = true;
            Ok(())
        }
    }

    fn fail_or_flag(&mut self, offset: usize, message: &str) -> Option<HtmlError> {
        self.violation(offset, message).err()
    }

    fn feed(&mut self, tok: Token<'a>) -> Result<(), HtmlError> {
        if self.finished {
            return match tok.kind {
                TokenKind::Text if self.src[tok.start..tok.end].trim().is_empty() => Ok(()),
                _ => self.violation(tok.start, "content after closing </table>"),
            };
        }
        if self.cell.is_some() {
            return self.feed_in_cell(tok);
        }
        let raw = &self.src[tok.start..tok.end];
        match tok.kind {
            TokenKind::Text => {
                if raw.trim().is_empty() {
                    Ok(())
                } else {
                    self.violation(tok.start, "text outside a cell")
                }
            }
            TokenKind::Other => self.violation(tok.start, "unsupported markup"),
            TokenKind::Open { name, attrs } => self.open(&name, &attrs, tok.start),
            TokenKind::Close { name } => self.close(&name, tok.start),
        }
    }

    fn feed_in_cell(&mut self, tok: Token<'a>) -> Result<(), HtmlError> {
        let raw = &self.src[tok.start..tok.end];
        let nested = self.cell.as_ref().map_or(0, |c| c.nested);
        if nested > 0 {
            let cell = self.cell.as_mut().expect("open cell");
            match &tok.kind {
                TokenKind::Text => cell.node.content.push_str(&raw.replace('<', "&lt;")),
                TokenKind::Open { name, .. } if name == "table" => cell.nested += 1,
                TokenKind::Close { name } if name == "table" => cell.nested -= 1,
                _ => {}
            }
            return Ok(());
        }
        match tok.kind {
            TokenKind::Text => {
                if !self.strict() && raw.contains('<') {
                    // dropped tokens could otherwise glue a stray '<' to following text
                    self.flags.repaired = true;
                    self.push_content(&raw.replace('<', "&lt;"));
                } else {
                    self.push_content(raw);
                }
                Ok(())
            }
            TokenKind::Other => {
                self.violation(tok.start, "unsupported markup inside a cell")
            }
            TokenKind::Open { ref name, .. } | TokenKind::Close { ref name }
                if INLINE_TAGS.contains(&name.as_str()) =>
            {
                self.push_content(raw);
                Ok(())
            }
            TokenKind::Open { ref name, .. } if name == "table" => {
                self.violation(tok.start, "nested table")?;
                if let Some(c) = self.cell.as_mut() {
                    c.nested = 1;
                }
                Ok(())
            }
            TokenKind::Close { ref name } if name == "td" || name == "th" => {
                if name == "th" {
                    self.violation(tok.start, "unsupported tag <th>")?;
                }
                self.close_cell();
                Ok(())
            }
            TokenKind::Open { ref name, .. } | TokenKind::Close { ref name }
                if is_structural(name) =>
            {
                self.violation(tok.start, format!("<{name}> before </td>"))?;
                self.close_cell();
                self.feed(tok)
            }
            _ => self.violation(tok.start, "unsupported tag inside a cell"),
        }
    }

    fn push_content(&mut self, raw: &str) {
        if let Some(c) = self.cell.as_mut() {
            c.node.content.push_str(raw);
        }
    }

    fn open(&mut self, name: &str, attrs: &[(String, &str)], at: usize) -> Result<(), HtmlError> {
        if self.root.is_none() {
            if name == "table" {
                self.check_no_attrs(attrs, at)?;
                self.root = Some(HtmlNode::table(Vec::new()));
                return Ok(());
            }
            return self.violation(at, format!("unexpected <{name}> before <table>"));
        }
        match name {
            "table" => self.violation(at, "nested table outside a cell"),
            "thead" | "tbody" => {
                self.check_no_attrs(attrs, at)?;
                if self.row.is_some() {
                    self.violation(at, format!("<{name}> inside an open <tr>"))?;
                    self.close_row();
                }
                if self.section.is_some() {
                    self.violation(at, format!("<{name}> inside an open section"))?;
                    self.close_section();
                }
                let tag = if name == "thead" { Tag::Thead } else { Tag::Tbody };
                self.section = Some(HtmlNode::new(tag, Vec::new()));
                Ok(())
            }
            "tr" => {
                self.check_no_attrs(attrs, at)?;
                if self.row.is_some() {
                    self.violation(at, "<tr> inside an open <tr>")?;
                    self.close_row();
                }
                self.row = Some(HtmlNode::tr(Vec::new()));
                Ok(())
            }
            "td" | "th" => {
                if name == "th" {
                    self.violation(at, "unsupported tag <th>")?;
                }
                if self.row.is_none() {
                    self.violation(at, "<td> outside a <tr>")?;
                    self.row = Some(HtmlNode::tr(Vec::new()));
                }
                let (rowspan, colspan) = self.spans(attrs, at)?;
                self.cell = Some(OpenCell {
                    node: HtmlNode::td_span(String::new(), rowspan, colspan),
                    nested: 0,
                });
                Ok(())
            }
            _ => self.violation(at, format!("unsupported tag <{name}>")),
        }
    }

    fn close(&mut self, name: &str, at: usize) -> Result<(), HtmlError> {
        if self.root.is_none() {
            return self.violation(at, format!("unexpected </{name}> before <table>"));
        }
        match name {
            "tr" => {
                if self.row.is_none() {
                    return self.violation(at, "</tr> without an open <tr>");
                }
                self.close_row();
                Ok(())
            }
            "thead" | "tbody" => {
                if self.row.is_some() {
                    self.violation(at, "section closed with an open <tr>")?;
                    self.close_row();
                }
                match &self.section {
                    Some(s) if s.tag.name() == name => {
                        self.close_section();
                        Ok(())
                    }
                    _ => self.violation(at, format!("</{name}> without a matching open tag")),
                }
            }
            "table" => {
                if self.row.is_some() {
                    self.violation(at, "</table> with an open <tr>")?;
                    self.close_row();
                }
                if self.section.is_some() {
                    self.violation(at, "</table> with an open section")?;
                    self.close_section();
                }
                self.finished = true;
                Ok(())
            }
            "td" | "th" => self.violation(at, format!("</{name}> without an open cell")),
            _ => self.violation(at, format!("unsupported tag </{name}>")),
        }
    }

    fn check_no_attrs(&mut self, attrs: &[(String, &str)], at: usize) -> Result<(), HtmlError> {
        if attrs.is_empty() {
            Ok(())
        } else {
            self.violation(at, "unsupported attribute")
        }
    }

    fn spans(&mut self, attrs: &[(String, &str)], at: usize) -> Result<(usize, usize), HtmlError> {
        let mut rowspan = 1;
        let mut colspan = 1;
        for (name, value) in attrs {
            let target = match name.as_str() {
                "rowspan" => &mut rowspan,
                "colspan" => &mut colspan,
                _ => {
                    self.violation(at, format!("unsupported attribute {name}"))?;
                    continue;
                }
            };
            match value.trim().parse::<usize>() {
                Ok(v) if (1..=MAX_SPAN).contains(&v) => *target = v,
                Ok(v) => {
                    if self.strict() {
                        return Err(Self::error(at, format!("{name}={v} out of range")));
                    }
                    self.flags.repaired = true;
                    *target = v.clamp(1, MAX_SPAN);
                }
                Err(_) => {
                    if self.strict() {
                        return Err(Self::error(at, format!("{name} is not a positive integer")));
                    }
                    self.flags.repaired = true;
                    let digits: String = value.trim().chars().take_while(char::is_ascii_digit).collect();
                    *target = digits.parse::<usize>().unwrap_or(1).clamp(1, MAX_SPAN);
                }
            }
        }
        Ok((rowspan, colspan))
    }

    fn close_cell(&mut self) {
        if let Some(cell) = self.cell.take() {
            let row = self.row.get_or_insert_with(|| HtmlNode::tr(Vec::new()));
            row.children.push(cell.node);
        }
    }

    fn close_row(&mut self) {
        self.close_cell();
        if let Some(row) = self.row.take() {
            match (self.section.as_mut(), self.root.as_mut()) {
                (Some(section), _) => section.children.push(row),
                (None, Some(root)) => root.children.push(row),
                (None, None) => {}
            }
        }
    }

    fn close_section(&mut self) {
        self.close_row();
        if let (Some(section), Some(root)) = (self.section.take(), self.root.as_mut()) {
            root.children.push(section);
        }
    }

    fn finish(mut self) -> Result<Parsed, HtmlError> {
        if !self.finished {
            if self.strict() {
                return Err(Self::error(self.src.len(), "unexpected end of input"));
            }
            if self.root.is_none() {
                self.flags.no_table = true;
                self.root = Some(HtmlNode::table(Vec::new()));
            } else {
                self.flags.repaired = true;
            }
            self.close_section();
            self.close_row();
        }
        Ok(Parsed {
            root: self.root.expect("root exists after finish"),
            flags: self.flags,
        })
    }
}

fn is_structural(name: &str) -> bool {
    matches!(name, "table" | "thead" | "tbody" | "tr" | "td" | "th")
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn strict(s: &str) -> Result<HtmlNode, HtmlError> {
        parse_html_string(s, false)
    }

    fn lenient(s: &str) -> HtmlNode {
        parse_html_string(s, true).unwrap()
    }

    #[test]
    fn strict_round_trip_of_canonical_form() {
        let s = "<table><tr><td rowspan=\"2\">A</td><td>B</td></tr><tr><td>C</td></tr></table>";
        assert_eq!(strict(s).unwrap().to_html(), s);
    }

    #[test]
    fn non_canonical_input_canonicalizes() {
        let s = "<TABLE>\n <tr>\n  <td colspan='1' rowspan=2>A</td>\n  <td>B</td>\n </tr>\n <tr><td>C</td></tr>\n</TABLE>\n";
        assert_eq!(
            strict(s).unwrap().to_html(),
            "<table><tr><td rowspan=\"2\">A</td><td>B</td></tr><tr><td>C</td></tr></table>"
        );
    }

    #[test]
    fn lenient_auto_close() {
        assert_eq!(
            lenient("<table><tr><td>x"),
            HtmlNode::table(vec![HtmlNode::tr(vec![HtmlNode::td("x")])])
        );
        let p = parse_html("<table><tr><td>x", ParseMode::Lenient).unwrap();
        assert!(p.flags.repaired && !p.flags.no_table);
        assert_eq!(
            lenient("<table><tr><td>a<td>b<tr><td>c</table>").to_html(),
            "<table><tr><td>a</td><td>b</td></tr><tr><td>c</td></tr></table>"
        );
    }

    #[test]
    fn strict_reports_offsets() {
        match strict("<table><tr><th>x</th></tr></table>") {
            Err(HtmlError::Parse { offset, .. }) => assert_eq!(offset, 11),
            other => panic!("{other:?}"),
        }
        match strict("<table><tr><td>x") {
            Err(HtmlError::Parse { offset, .. }) => assert_eq!(offset, 16),
            other => panic!("{other:?}"),
        }
        assert!(strict("<table border=\"1\"><tr><td>x</td></tr></table>").is_err());
        assert!(strict("<table><tr><td rowspan=\"0\">x</td></tr></table>").is_err());
    }

    #[test]
    fn inline_markup_stays_in_content() {
        let s = "<table><tr><td>x<sup>2</sup> &amp; <b>y</b></td></tr></table>";
        let t = strict(s).unwrap();
        assert_eq!(t.children[0].children[0].content, "x<sup>2</sup> &amp; <b>y</b>");
        assert_eq!(t.to_html(), s);
    }

    #[test]
    fn nested_table_strict_and_lenient() {
        let s = "<table><tr><td>a<table><tr><td>in</td></tr></table>b</td></tr></table>";
        assert!(strict(s).is_err());
        let t = lenient(s);
        assert_eq!(t.children[0].children[0].content, "ainb");
        assert_eq!(t.children[0].children.len(), 1);
    }

    #[test]
    fn lenient_drops_unknown_and_reads_th() {
        let t = lenient("<html><body><table class=\"x\"><tr><th style=\"a\">h</th><td foo=1 colspan=\"2\">v</td><span>?</span></tr></table>trailing");
        assert_eq!(
            t.to_html(),
            "<table><tr><td>h</td><td colspan=\"2\">v</td></tr></table>"
        );
    }

    #[test]
    fn lenient_without_table() {
        let p = parse_html("just text <b>bold</b>", ParseMode::Lenient).unwrap();
        assert!(p.flags.no_table);
        assert_eq!(p.root, HtmlNode::table(vec![]));
    }

    #[test]
    fn sections_kept_as_nodes() {
        let t = strict("<table><thead><tr><td>h</td></tr></thead><tbody><tr><td>b</td></tr></tbody></table>").unwrap();
        assert_eq!(t.children[0].tag, Tag::Thead);
        assert_eq!(t.children[1].tag, Tag::Tbody);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn lenient_is_total(s in ".{0,200}") {
                let _ = parse_html(&s, ParseMode::Lenient).unwrap();
            }

            #[test]
            fn lenient_is_total_on_tag_soup(parts in proptest::collection::vec(
                prop_oneof![
                    Just("<table>"), Just("</table>"), Just("<tr>"), Just("</tr>"),
                    Just("<td>"), Just("</td>"), Just("<td rowspan=\"3\">"), Just("<td colspan=x>"),
                    Just("<thead>"), Just("</tbody>"), Just("<b>"), Just("x"), Just("<"), Just("<!--"),
                    Just("<td rowspan=\"99999\">"), Just("<th>"), Just("\"")
                ], 0..40)) {
                let s: String = parts.concat();
                let p = parse_html(&s, ParseMode::Lenient).unwrap();
                // output always re-parses strictly
                prop_assert!(parse_html(&p.root.to_html(), ParseMode::Strict).is_ok());
            }
        }
    }
}
