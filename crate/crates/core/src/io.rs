//! Numeric CSV matrices: comma-separated, one observation per row, optional header.

use crate::error::DataIoError;
use nalgebra::DMatrix;
use std::io::{Read, Write};
use std::path::Path;

/// Reads a matrix; a first row that does not parse as numbers is taken as a header.
/// Row and column numbers in errors are 1-based and count the header line.
pub fn read_matrix_csv<R: Read>(r: R, source: &str) -> Result<DMatrix<f64>, DataIoError> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut values = Vec::new();
    let mut ncols = 0;
    let mut nrows = 0;
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Vec<Result<f64, &str>> = rec.iter().map(|f| f.parse::<f64>().map_err(|_| f)).collect();
        if line == 0 && parsed.iter().any(Result::is_err) {
            continue;
        }
        if nrows == 0 {
            ncols = parsed.len();
        } else if parsed.len() != ncols {
            return Err(DataIoError::Ragged {
                path: source.to_string(),
                row: line + 1,
                expected: ncols,
                found: parsed.len(),
            });
        }
        for (c, v) in parsed.into_iter().enumerate() {
            match v {
                Ok(x) if x.is_finite() => values.push(x),
                Ok(x) => {
                    return Err(DataIoError::Parse {
                        path: source.to_string(),
                        row: line + 1,
                        column: c + 1,
                        value: x.to_string(),
                    })
                }
                Err(f) => {
                    return Err(DataIoError::Parse {
                        path: source.to_string(),
                        row: line + 1,
                        column: c + 1,
                        value: f.to_string(),
                    })
                }
            }
        }
        nrows += 1;
    }
    if nrows == 0 {
        return Err(DataIoError::Empty {
            path: source.to_string(),
        });
    }
    Ok(DMatrix::from_row_slice(nrows, ncols, &values))
}

pub fn read_matrix_file(path: &Path) -> Result<DMatrix<f64>, DataIoError> {
    let name = path.display().to_string();
    let f = std::fs::File::open(path).map_err(|source| DataIoError::Io {
        path: name.clone(),
        source,
    })?;
    read_matrix_csv(std::io::BufReader::new(f), &name)
}

/// Writes a matrix without header, full round-trip precision.
pub fn write_matrix_csv<W: Write>(w: W, m: &DMatrix<f64>) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    for row in m.row_iter() {
        wr.write_record(row.iter().map(|v| v.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}
