use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::kg::for_each_line;
use crate::numerics::Tensor2;

/// Writes `n_entities<TAB>d` followed by one tab-separated row per entity id.
///
/// Floats use Rust's shortest round-trip formatting, so reading the file back
/// reproduces the matrix exactly and equal inputs give byte-identical files.
pub fn write_embeddings(path: &Path, emb: &Tensor2) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}\t{}", emb.rows(), emb.cols()).map_err(io)?;
    for row in emb.iter_rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", line.join("\t")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_embeddings(path: &Path) -> Result<Tensor2> {
    let mut header: Option<(usize, usize)> = None;
    let mut data = Vec::new();
    let mut rows = 0;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    for_each_line(path, |line_no, line| {
        let fields: Vec<&str> = line.split('\t').collect();
        match header {
            None => {
                if fields.len() != 2 {
                    return Err(parse_err(line_no, "header must be `n_entities<TAB>dim`".into()));
                }
                let n = fields[0].parse().map_err(|_| parse_err(line_no, "bad entity count".into()))?;
                let d = fields[1].parse().map_err(|_| parse_err(line_no, "bad dimension".into()))?;
                header = Some((n, d));
            }
            Some((_, d)) => {
                if fields.len() != d {
                    return Err(parse_err(line_no, format!("expected {d} values, found {}", fields.len())));
                }
                for f in fields {
                    let v: f64 = f.parse().map_err(|_| parse_err(line_no, format!("bad float {f:?}")))?;
                    data.push(v);
                }
                rows += 1;
            }
        }
        Ok(())
    })?;
    let (n, d) = header.ok_or_else(|| Error::Data(format!("{}: empty embedding file", path.display())))?;
    if rows != n {
        return Err(Error::Data(format!("{}: header says {n} rows, found {rows}", path.display())));
    }
    Tensor2::from_vec(n, d, data)
}
