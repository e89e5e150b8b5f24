//! JSON-lines files: one record per line, blank lines ignored.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use tablekit_core::ingest::{SourceKind, SourceRecord};

use crate::{Error, Result};

/// Parse every non-blank line of `path`.
pub fn read<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::format(path, i + 1, e))?);
    }
    Ok(out)
}

/// Write one compact JSON document per line.
pub fn write<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| Error::Other(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Foreign records of one kind.
pub fn read_sources(kind: SourceKind, path: &Path) -> Result<Vec<SourceRecord>> {
    Ok(match kind {
        SourceKind::PubTabNet => read(path)?.into_iter().map(SourceRecord::PubTabNet).collect(),
        SourceKind::Grid => read(path)?.into_iter().map(SourceRecord::Grid).collect(),
        SourceKind::Spotting => read(path)?.into_iter().map(SourceRecord::Spotting).collect(),
    })
}

pub fn write_sources(path: &Path, records: &[SourceRecord]) -> Result<()> {
    let values: Vec<serde_json::Value> = records
        .iter()
        .map(|r| match r {
            SourceRecord::PubTabNet(r) => serde_json::to_value(r),
            SourceRecord::Grid(r) => serde_json::to_value(r),
            SourceRecord::Spotting(r) => serde_json::to_value(r),
        })
        .collect::<Result<_, _>>()
        .map_err(|e| Error::Other(e.to_string()))?;
    write(path, &values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tablekit_core::taskgen::{TaskKind, TaskSample};

    #[test]
    fn round_trip_skips_blank_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        let items = vec![
            TaskSample { id: "a".into(), task: TaskKind::HtmlParse, prompt: "p".into(), target: "t\nu".into() },
            TaskSample { id: "b".into(), task: TaskKind::CellDetect, prompt: "q".into(), target: "<none>".into() },
        ];
        write(&p, &items).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 2);
        std::fs::write(&p, format!("\n{text}\n  \n")).unwrap();
        assert_eq!(read::<TaskSample>(&p).unwrap(), items);
    }

    #[test]
    fn bad_line_reports_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.jsonl");
        std::fs::write(&p, "{\"id\":\"a\",\"task\":\"html_parse\",\"prompt\":\"\",\"target\":\"\"}\n{oops\n").unwrap();
        match read::<TaskSample>(&p) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(read::<TaskSample>(Path::new("/nonexistent/x.jsonl")), Err(Error::Io { .. })));
    }
}
