//! Versioned text format for [`SgclParams`].
//!
//! ```text
//! sgcl-params v1
//! dim 16
//! c3 6
//! c4 10
//! c5 12
//! layers 3
//! p4_height 8
//! p4_width 8
//! refine_layers 3
//! self_attention_blocks 2
//! temperature 10000.0
//! tensors 70
//! tensor layer_weights 1 3
//! 0.12 -0.5 0.33
//! tensor conv31.w 16 6
//! ...
//! ```
//!
//! The header fixes every shape; each tensor then repeats its name and shape
//! and lists one row per line. Values are written in shortest round-trip form
//! so a save/load cycle is exact. The loader requires tensors in the order of
//! [`SgclParams::tensors`] with the shapes implied by the header.

use std::fmt::Write as _;
use std::path::Path;

use tablekit_core::sgcl::{SgclConfig, SgclParams};

use crate::{Error, Result};

pub const MAGIC: &str = "sgcl-params v1";

const SIZE_KEYS: [&str; 9] = [
    "dim",
    "c3",
    "c4",
    "c5",
    "layers",
    "p4_height",
    "p4_width",
    "refine_layers",
    "self_attention_blocks",
];

fn sizes(c: &SgclConfig) -> [usize; 9] {
    [
        c.dim,
        c.c3,
        c.c4,
        c.c5,
        c.layers,
        c.p4_height,
        c.p4_width,
        c.refine_layers,
        SgclConfig::SELF_ATTENTION_BLOCKS,
    ]
}

pub fn to_string(p: &SgclParams<f64>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    for (k, v) in SIZE_KEYS.iter().zip(sizes(&p.config)) {
        let _ = writeln!(s, "{k} {v}");
    }
    let _ = writeln!(s, "temperature {:?}", p.config.temperature);
    let tensors = p.tensors();
    let _ = writeln!(s, "tensors {}", tensors.len());
    for (name, m) in tensors {
        let _ = writeln!(s, "tensor {name} {} {}", m.rows(), m.cols());
        for r in 0..m.rows() {
            let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
    }
    s
}

struct Lines<'a> {
    it: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> std::result::Result<&'a str, (usize, String)> {
        match self.it.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l.trim_end())
            }
            None => Err((self.line + 1, String::from("unexpected end of file"))),
        }
    }

    fn fail<T>(&self, msg: impl Into<String>) -> std::result::Result<T, (usize, String)> {
        Err((self.line, msg.into()))
    }

    fn keyed(&mut self, key: &str) -> std::result::Result<&'a str, (usize, String)> {
        let l = self.next()?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => Ok(v),
            _ => self.fail(format!("expected `{key} <value>`")),
        }
    }

    fn size(&mut self, key: &str) -> std::result::Result<usize, (usize, String)> {
        let v = self.keyed(key)?;
        v.parse().or_else(|_| self.fail(format!("{key} must be a non-negative integer")))
    }
}

/// Parse a parameter file. Errors carry the 1-based line number.
pub fn parse(text: &str) -> std::result::Result<SgclParams<f64>, (usize, String)> {
    let mut lines = Lines { it: text.lines().enumerate(), line: 0 };
    if lines.next()? != MAGIC {
        return lines.fail(format!("expected `{MAGIC}`"));
    }
    let mut v = [0usize; 9];
    for (k, slot) in SIZE_KEYS.iter().zip(&mut v) {
        *slot = lines.size(k)?;
    }
    if v[8] != SgclConfig::SELF_ATTENTION_BLOCKS {
        return lines.fail(format!("only {} self-attention blocks are supported", SgclConfig::SELF_ATTENTION_BLOCKS));
    }
    let t = lines.keyed("temperature")?;
    let temperature: f64 = t.parse().or_else(|_| lines.fail("temperature must be a number"))?;
    let config = SgclConfig {
        dim: v[0],
        c3: v[1],
        c4: v[2],
        c5: v[3],
        layers: v[4],
        p4_height: v[5],
        p4_width: v[6],
        refine_layers: v[7],
        temperature,
    };
    if let Err(e) = config.check() {
        return lines.fail(e.to_string());
    }
    let template = SgclParams::zeros(config).or_else(|e| lines.fail(e.to_string()))?;
    let expected = template.tensors();
    if lines.size("tensors")? != expected.len() {
        return lines.fail(format!("this configuration has {} tensors", expected.len()));
    }
    let mut values = Vec::with_capacity(template.len());
    for (name, m) in &expected {
        let head = lines.next()?;
        let want = format!("tensor {name} {} {}", m.rows(), m.cols());
        if head != want {
            return lines.fail(format!("expected `{want}`"));
        }
        for _ in 0..m.rows() {
            let row = lines.next()?;
            let before = values.len();
            for tok in row.split_ascii_whitespace() {
                match tok.parse::<f64>() {
                    Ok(x) if x.is_finite() => values.push(x),
                    _ => return lines.fail(format!("bad value {tok:?} in {name}")),
                }
            }
            if values.len() - before != m.cols() {
                return lines.fail(format!("{name} rows have {} values", m.cols()));
            }
        }
    }
    while let Ok(l) = lines.next() {
        if !l.is_empty() {
            return lines.fail("trailing content");
        }
    }
    SgclParams::from_flat(config, &values).or_else(|e| lines.fail(e.to_string()))
}

pub fn save(path: &Path, p: &SgclParams<f64>) -> Result<()> {
    std::fs::write(path, to_string(p)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<SgclParams<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text).map_err(|(line, msg)| Error::format(path, line, msg))
}
