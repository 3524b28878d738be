use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::graph::{KnowledgeGraph, RawTriple};
use crate::error::{Error, Result};

/// Splits a tab-separated line into exactly `N` non-empty fields.
pub(crate) fn split_fields<'a, const N: usize>(line: &'a str, path: &Path, line_no: usize) -> Result<[&'a str; N]> {
    let mut out = [""; N];
    let mut count = 0;
    for field in line.split('\t') {
        if count < N {
            out[count] = field;
        }
        count += 1;
    }
    if count != N {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: format!("expected {N} tab-separated fields, found {count}"),
        });
    }
    if let Some(i) = out.iter().position(|f| f.trim().is_empty()) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: format!("field {} is empty", i + 1),
        });
    }
    Ok(out)
}

/// Iterates over `(1-based line number, content)` of non-blank lines.
pub(crate) fn for_each_line(path: &Path, mut f: impl FnMut(usize, &str) -> Result<()>) -> Result<()> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        f(i + 1, line)?;
    }
    Ok(())
}

/// Reads a tab-separated `head relation tail` file, preserving line order.
pub fn load_triples(path: &Path) -> Result<Vec<RawTriple>> {
    let mut out = Vec::new();
    for_each_line(path, |line_no, line| {
        let [h, r, t] = split_fields::<3>(line, path, line_no)?;
        out.push(RawTriple::new(h, r, t));
        Ok(())
    })?;
    Ok(out)
}

pub fn write_triples(path: &Path, g: &KnowledgeGraph) -> Result<()> {
    write_raw_triples(path, &g.raw_triples())
}

pub fn write_raw_triples(path: &Path, triples: &[RawTriple]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in triples {
        writeln!(w, "{}\t{}\t{}", t.head, t.relation, t.tail).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
