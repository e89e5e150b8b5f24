//! Target grammars and their parsers.
//!
//! ```text
//! box        = "<" int "," int "," int "," int ">"
//! cells      = box+ | "<none>"
//! spans      = span ("; " span)* | "<none>"
//! span       = box " rows " int "-" int " cols " int "-" int
//! rowcol     = band ("; " band)*
//! band       = ("row " | "col ") box " cells " box*
//! spot       = line ("\n" line)* | "<none>"
//! line       = box " " text          (with coordinates)
//!            | text                  (without)
//! markdown   = mdrow "\n" mdsep ("\n" mdrow)*
//! mdrow      = "|" (" - |")+
//! mdsep      = "|" (" --- |")+
//! ```
//!
//! Every integer is a bin index from the discretizer.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use thiserror::Error;

use crate::model::LogicalCoords;

pub const NONE: &str = "<none>";

pub type Bins = [u32; 4];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("expected {expected} at byte {at}")]
pub struct GrammarError {
    pub at: usize,
    pub expected: &'static str,
}

pub fn write_box(out: &mut String, b: Bins) {
    let _ = write!(out, "<{},{},{},{}>", b[0], b[1], b[2], b[3]);
}

pub fn box_token(b: Bins) -> String {
    let mut s = String::new();
    write_box(&mut s, b);
    s
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanEntry {
    pub bbox: Bins,
    pub logical: LogicalCoords,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Band {
    pub bbox: Bins,
    pub cells: Vec<Bins>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RowColTarget {
    pub rows: Vec<Band>,
    pub cols: Vec<Band>,
}

/// Byte cursor over a target string.
struct Cursor<'a> {
    s: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(s: &'a str) -> Self {
        Cursor { s, pos: 0 }
    }

    fn fail<T>(&self, expected: &'static str) -> Result<T, GrammarError> {
        Err(GrammarError { at: self.pos, expected })
    }

    fn done(&self) -> bool {
        self.pos >= self.s.len()
    }

    fn rest(&self) -> &'a str {
        &self.s[self.pos..]
    }

    fn eat(&mut self, lit: &str) -> bool {
        if self.rest().starts_with(lit) {
            self.pos += lit.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, lit: &'static str) -> Result<(), GrammarError> {
        if self.eat(lit) {
            Ok(())
        } else {
            self.fail(lit)
        }
    }

    fn int(&mut self) -> Result<u32, GrammarError> {
        let n = self.rest().bytes().take_while(u8::is_ascii_digit).count();
        if n == 0 {
            return self.fail("integer");
        }
        let v = self.rest()[..n].parse().or_else(|_| self.fail("integer in range"))?;
        self.pos += n;
        Ok(v)
    }

    fn bins(&mut self) -> Result<Bins, GrammarError> {
        self.expect("<")?;
        let a = self.int()?;
        self.expect(",")?;
        let b = self.int()?;
        self.expect(",")?;
        let c = self.int()?;
        self.expect(",")?;
        let d = self.int()?;
        self.expect(">")?;
        Ok([a, b, c, d])
    }

    fn at_box(&self) -> bool {
        self.rest().starts_with('<') && !self.rest().starts_with(NONE)
    }

    fn end(&self) -> Result<(), GrammarError> {
        if self.done() {
            Ok(())
        } else {
            self.fail("end of target")
        }
    }
}

/// Concatenated box tokens, or the sentinel for an empty list.
pub fn parse_boxes(s: &str) -> Result<Vec<Bins>, GrammarError> {
    if s == NONE {
        return Ok(Vec::new());
    }
    let mut c = Cursor::new(s);
    let mut out = Vec::new();
    while !c.done() {
        out.push(c.bins()?);
    }
    if out.is_empty() {
        return c.fail("box");
    }
    Ok(out)
}

pub fn parse_spans(s: &str) -> Result<Vec<SpanEntry>, GrammarError> {
    if s == NONE {
        return Ok(Vec::new());
    }
    let mut c = Cursor::new(s);
    let mut out = Vec::new();
    loop {
        let bbox = c.bins()?;
        c.expect(" rows ")?;
        let r1 = c.int()? as usize;
        c.expect("-")?;
        let r2 = c.int()? as usize;
        c.expect(" cols ")?;
        let c1 = c.int()? as usize;
        c.expect("-")?;
        let c2 = c.int()? as usize;
        out.push(SpanEntry {
            bbox,
            logical: LogicalCoords::new(r1, r2, c1, c2),
        });
        if !c.eat("; ") {
            break;
        }
    }
    c.end()?;
    Ok(out)
}

pub fn parse_row_col(s: &str) -> Result<RowColTarget, GrammarError> {
    let mut c = Cursor::new(s);
    let mut out = RowColTarget::default();
    if c.done() {
        return Ok(out);
    }
    loop {
        let is_row = if c.eat("row ") {
            if !out.cols.is_empty() {
                return c.fail("col band");
            }
            true
        } else if c.eat("col ") {
            false
        } else {
            return c.fail("row or col band");
        };
        let bbox = c.bins()?;
        c.expect(" cells ")?;
        let mut cells = Vec::new();
        while c.at_box() {
            cells.push(c.bins()?);
        }
        let band = Band { bbox, cells };
        if is_row {
            out.rows.push(band);
        } else {
            out.cols.push(band);
        }
        if !c.eat("; ") {
            break;
        }
    }
    c.end()?;
    Ok(out)
}

/// Lines of a spotting target; the box is present iff `with_coords`.
pub fn parse_spot(s: &str, with_coords: bool) -> Result<Vec<(Option<Bins>, String)>, GrammarError> {
    if s == NONE {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let mut offset = 0;
    for line in s.split('\n') {
        if with_coords {
            let mut c = Cursor::new(line);
            let b = c.bins().map_err(|e| GrammarError { at: e.at + offset, ..e })?;
            if !c.eat(" ") {
                return Err(GrammarError {
                    at: offset + c.pos,
                    expected: "space after box",
                });
            }
            out.push((Some(b), String::from(c.rest())));
        } else {
            out.push((None, String::from(line)));
        }
        offset += line.len() + 1;
    }
    Ok(out)
}

/// `(rows, cols)` of a markdown structure target.
pub fn parse_markdown(s: &str) -> Result<(usize, usize), GrammarError> {
    let mut cols = None;
    let mut rows = 0;
    let mut offset = 0;
    for (i, line) in s.split('\n').enumerate() {
        let cell = if i == 1 { " --- |" } else { " - |" };
        let mut c = Cursor::new(line);
        let fail = |c: &Cursor, expected| GrammarError { at: offset + c.pos, expected };
        if !c.eat("|") {
            return Err(fail(&c, "|"));
        }
        let mut n = 0;
        while c.eat(cell) {
            n += 1;
        }
        if !c.done() || n == 0 {
            return Err(fail(&c, if i == 1 { "separator cell" } else { "cell" }));
        }
        if *cols.get_or_insert(n) != n {
            return Err(fail(&c, "same column count"));
        }
        if i != 1 {
            rows += 1;
        }
        offset += line.len() + 1;
    }
    if s.split('\n').count() < 2 {
        return Err(GrammarError { at: s.len(), expected: "separator row" });
    }
    Ok((rows, cols.unwrap_or(0)))
}
