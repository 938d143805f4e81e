//! Dense matrix ingestion and export: CSV (one row per line) and
//! MatrixMarket (`array` read/write, `coordinate` read).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::solver::TrialRecord;

/// Reads a dense matrix from CSV text. Lines starting with `#` are skipped;
/// every row must have the same number of fields.
pub fn read_csv<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row = record
            .iter()
            .map(|field| field.parse::<f64>().map_err(|e| Error::Parse { line, msg: format!("`{field}`: {e}") }))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let ncols = rows.first().map(Vec::len).ok_or_else(|| Error::Parse { line: 0, msg: "no data rows".into() })?;
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn write_csv<W: Write>(writer: W, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum MmLayout {
    Array,
    Coordinate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum MmSymmetry {
    General,
    Symmetric,
}

/// Reads a real MatrixMarket file into a dense matrix.
pub fn read_matrix_market<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut lines = BufReader::new(reader).lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse { line: 1, msg: "empty file".into() })?;
    let header = header?;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(Error::Parse { line: 1, msg: format!("not a MatrixMarket matrix header: `{header}`") });
    }
    let layout = match tokens[2].as_str() {
        "array" => MmLayout::Array,
        "coordinate" => MmLayout::Coordinate,
        other => return Err(Error::Parse { line: 1, msg: format!("unsupported layout `{other}`") }),
    };
    if !matches!(tokens[3].as_str(), "real" | "integer" | "double") {
        return Err(Error::Parse { line: 1, msg: format!("unsupported field `{}`", tokens[3]) });
    }
    let symmetry = match tokens[4].as_str() {
        "general" => MmSymmetry::General,
        "symmetric" => MmSymmetry::Symmetric,
        other => return Err(Error::Parse { line: 1, msg: format!("unsupported symmetry `{other}`") }),
    };

    let mut data = lines.filter_map(|(k, l)| match l {
        Ok(l) if l.trim().is_empty() || l.trim_start().starts_with('%') => None,
        Ok(l) => Some(Ok((k + 1, l))),
        Err(e) => Some(Err(Error::Io(e))),
    });
    let (size_line, size) = data.next().ok_or_else(|| Error::Parse { line: 2, msg: "missing size line".into() })??;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|e| Error::Parse { line: size_line, msg: format!("`{t}`: {e}") }))
        .collect::<Result<_>>()?;
    let parse_f = |line: usize, t: &str| t.parse::<f64>().map_err(|e| Error::Parse { line, msg: format!("`{t}`: {e}") });

    match layout {
        MmLayout::Array => {
            let [m, n] = dims[..] else {
                return Err(Error::Parse { line: size_line, msg: "array size line needs `rows cols`".into() });
            };
            let mut values = Vec::new();
            for item in data {
                let (line, text) = item?;
                for t in text.split_whitespace() {
                    values.push(parse_f(line, t)?);
                }
            }
            match symmetry {
                MmSymmetry::General => {
                    if values.len() != m * n {
                        return Err(Error::Parse { line: size_line, msg: format!("expected {} values, found {}", m * n, values.len()) });
                    }
                    Ok(DMatrix::from_column_slice(m, n, &values))
                }
                MmSymmetry::Symmetric => {
                    if m != n || values.len() != n * (n + 1) / 2 {
                        return Err(Error::Parse { line: size_line, msg: "symmetric array needs the lower triangle of a square matrix".into() });
                    }
                    let mut out = DMatrix::zeros(n, n);
                    let mut it = values.into_iter();
                    for j in 0..n {
                        for i in j..n {
                            let v = it.next().expect("counted");
                            out[(i, j)] = v;
                            out[(j, i)] = v;
                        }
                    }
                    Ok(out)
                }
            }
        }
        MmLayout::Coordinate => {
            let [m, n, nnz] = dims[..] else {
                return Err(Error::Parse { line: size_line, msg: "coordinate size line needs `rows cols nnz`".into() });
            };
            let mut out = DMatrix::zeros(m, n);
            let mut seen = 0;
            for item in data {
                let (line, text) = item?;
                let t: Vec<&str> = text.split_whitespace().collect();
                if t.len() != 3 {
                    return Err(Error::Parse { line, msg: "expected `row col value`".into() });
                }
                let idx = |s: &str, bound: usize| -> Result<usize> {
                    let k: usize = s.parse().map_err(|e| Error::Parse { line, msg: format!("`{s}`: {e}") })?;
                    if k == 0 || k > bound {
                        return Err(Error::Parse { line, msg: format!("index {k} out of range 1..={bound}") });
                    }
                    Ok(k - 1)
                };
                let (i, j, v) = (idx(t[0], m)?, idx(t[1], n)?, parse_f(line, t[2])?);
                out[(i, j)] += v;
                if symmetry == MmSymmetry::Symmetric && i != j {
                    out[(j, i)] += v;
                }
                seen += 1;
            }
            if seen != nnz {
                return Err(Error::Parse { line: size_line, msg: format!("expected {nnz} entries, found {seen}") });
            }
            Ok(out)
        }
    }
}

/// Writes `array real general` (column-major values).
pub fn write_matrix_market<W: Write>(mut writer: W, m: &DMatrix<f64>) -> Result<()> {
    writeln!(writer, "%%MatrixMarket matrix array real general")?;
    writeln!(writer, "{} {}", m.nrows(), m.ncols())?;
    for v in m.iter() {
        writeln!(writer, "{v:e}")?;
    }
    Ok(())
}

fn is_matrix_market(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("mtx") || e.eq_ignore_ascii_case("mm"))
}

/// Reads a matrix file, choosing the format by extension (`.mtx`/`.mm` are
/// MatrixMarket, anything else CSV).
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let file = File::open(path)?;
    if is_matrix_market(path) {
        read_matrix_market(file)
    } else {
        read_csv(file)
    }
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    if is_matrix_market(path) {
        write_matrix_market(file, m)
    } else {
        write_csv(file, m)
    }
}

/// Trajectory export with columns `trial, iteration, sq_error`.
pub fn write_trajectories<W: Write>(writer: W, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["trial", "iteration", "sq_error"])?;
    for (trial, rec) in records.iter().enumerate() {
        for (iteration, e) in rec.iterations().zip(&rec.sq_errors) {
            w.write_record([trial.to_string(), iteration.to_string(), format!("{e:e}")])?;
        }
    }
    w.flush()?;
    Ok(())
}
