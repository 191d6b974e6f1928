//! Matrix Market coordinate files (real, general or symmetric).

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Reads a `matrix coordinate real` file. Symmetric files store one
/// triangle and are expanded.
pub fn read_matrix_market(path: &Path) -> Result<CsrMatrix> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut lines = f.lines();
    let header = lines.next().ok_or_else(|| Error::BadFormat("empty file".into()))??;
    let h: Vec<String> = header.split_whitespace().map(str::to_lowercase).collect();
    if h.len() < 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" || h[2] != "coordinate" {
        return Err(Error::BadFormat(format!("unsupported header: {header}")));
    }
    if h[3] != "real" && h[3] != "double" && h[3] != "integer" {
        return Err(Error::BadFormat(format!("unsupported field type {}", h[3])));
    }
    let symmetric = match h[4].as_str() {
        "symmetric" => true,
        "general" => false,
        other => return Err(Error::BadFormat(format!("unsupported symmetry {other}"))),
    };
    let mut size: Option<(usize, usize, usize)> = None;
    let mut trip = Vec::new();
    let mut entries = 0;
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        match size {
            None => {
                if parts.len() != 3 {
                    return Err(Error::BadFormat(format!("bad size line: {t}")));
                }
                let p = |s: &str| s.parse::<usize>().map_err(|e| Error::BadFormat(format!("{s}: {e}")));
                size = Some((p(parts[0])?, p(parts[1])?, p(parts[2])?));
            }
            Some((nr, nc, _)) => {
                if parts.len() != 3 {
                    return Err(Error::BadFormat(format!("bad entry line: {t}")));
                }
                let i: usize = parts[0].parse().map_err(|e| Error::BadFormat(format!("{}: {e}", parts[0])))?;
                let j: usize = parts[1].parse().map_err(|e| Error::BadFormat(format!("{}: {e}", parts[1])))?;
                let v: f64 = parts[2].parse().map_err(|e| Error::BadFormat(format!("{}: {e}", parts[2])))?;
                if i == 0 || j == 0 || i > nr || j > nc {
                    return Err(Error::BadFormat(format!("entry ({i},{j}) outside {nr}x{nc}")));
                }
                entries += 1;
                trip.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    trip.push((j - 1, i - 1, v));
                }
            }
        }
    }
    let (nr, nc, nnz) = size.ok_or_else(|| Error::BadFormat("missing size line".into()))?;
    if entries != nnz {
        return Err(Error::BadFormat(format!("expected {nnz} entries, found {entries}")));
    }
    CsrMatrix::from_triplets(nr, nc, &trip)
}

/// Writes the lower triangle of a symmetric matrix in shortest
/// round-trip decimal form.
pub fn write_matrix_market(m: &CsrMatrix, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let lower: Vec<(usize, usize, f64)> = m.triplets().into_iter().filter(|(i, j, _)| i >= j).collect();
    writeln!(f, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(f, "{} {} {}", m.nrows(), m.ncols(), lower.len())?;
    for (i, j, v) in lower {
        writeln!(f, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    Ok(())
}
