//! Reading and writing MatrixMarket files.
//!
//! The benchmark generator writes problem data as MatrixMarket bundles and
//! the CLI reads them back, so both directions are implemented here for
//! the subset of the format the solver uses: `coordinate` and `array`
//! exchange formats with `real` (or `integer`) field entries and
//! `general`, `symmetric`, or `skew-symmetric` storage. Values are written
//! in scientific notation with enough digits to round-trip exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::sparse::{CsrMatrix, SparseError};

/// Error type for MatrixMarket I/O.
#[derive(Debug)]
pub enum MmError {
    /// Underlying file-system failure.
    Io(std::io::Error),
    /// The file deviates from the expected format.
    Parse { line: usize, detail: String },
    /// The file is valid MatrixMarket but uses a feature the solver does
    /// not consume (complex field, pattern matrices, ...).
    Unsupported(String),
    /// The parsed triplets do not form a valid matrix.
    Sparse(SparseError),
}

impl std::fmt::Display for MmError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MmError::Io(e) => write!(f, "I/O error: {e}"),
            MmError::Parse { line, detail } => {
                write!(f, "parse error at line {line}: {detail}")
            }
            MmError::Unsupported(what) => write!(f, "unsupported MatrixMarket feature: {what}"),
            MmError::Sparse(e) => write!(f, "invalid matrix data: {e}"),
        }
    }
}

impl std::error::Error for MmError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            MmError::Io(e) => Some(e),
            MmError::Sparse(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for MmError {
    fn from(e: std::io::Error) -> Self {
        MmError::Io(e)
    }
}

impl From<SparseError> for MmError {
    fn from(e: SparseError) -> Self {
        MmError::Sparse(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

/// Write a sparse matrix in `coordinate real general` format.
pub fn write_sparse(path: &Path, m: &CsrMatrix) -> Result<(), MmError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", m.nrows(), m.ncols(), m.nnz())?;
    for (i, j, v) in m.triplet_iter() {
        writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    w.flush()?;
    Ok(())
}

/// Write a dense matrix in `array real general` format (column-major
/// values, as the format prescribes).
pub fn write_dense(path: &Path, a: ArrayView2<'_, f64>) -> Result<(), MmError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} {}", a.nrows(), a.ncols())?;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            writeln!(w, "{:e}", a[[i, j]])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a matrix file into sparse form. Array-format files are converted
/// by keeping their nonzero entries.
pub fn read_sparse(path: &Path) -> Result<CsrMatrix, MmError> {
    let (nrows, ncols, triplets) = read_triplets(path)?;
    Ok(CsrMatrix::from_triplets(nrows, ncols, &triplets)?)
}

/// Read a matrix file into a dense array, whichever exchange format it
/// uses.
pub fn read_dense(path: &Path) -> Result<Array2<f64>, MmError> {
    let (nrows, ncols, triplets) = read_triplets(path)?;
    let mut a = Array2::zeros((nrows, ncols));
    for (i, j, v) in triplets {
        a[[i, j]] += v;
    }
    Ok(a)
}

/// Shared parser: any supported file becomes a triplet list.
fn read_triplets(path: &Path) -> Result<(usize, usize, Vec<(usize, usize, f64)>), MmError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();

    let (header_no, header) = loop {
        match lines.next() {
            Some((no, line)) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break (no + 1, line);
                }
            }
            None => {
                return Err(MmError::Parse {
                    line: 0,
                    detail: "empty file".to_string(),
                })
            }
        }
    };

    let tokens: Vec<String> = header
        .split_whitespace()
        .map(|t| t.to_ascii_lowercase())
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(MmError::Parse {
            line: header_no,
            detail: format!("not a MatrixMarket header: {header:?}"),
        });
    }
    let coordinate = match tokens[2].as_str() {
        "coordinate" => true,
        "array" => false,
        other => return Err(MmError::Unsupported(format!("format {other:?}"))),
    };
    match tokens[3].as_str() {
        "real" | "integer" | "double" => {}
        other => return Err(MmError::Unsupported(format!("field {other:?}"))),
    }
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        other => return Err(MmError::Unsupported(format!("symmetry {other:?}"))),
    };

    // Collect the remaining non-comment tokens with their line numbers.
    let mut data: Vec<(usize, String)> = Vec::new();
    for (no, line) in lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        for tok in trimmed.split_whitespace() {
            data.push((no + 1, tok.to_string()));
        }
    }

    let mut cursor = data.into_iter();
    let mut next_number = |what: &str| -> Result<(usize, f64), MmError> {
        match cursor.next() {
            Some((no, tok)) => match tok.parse::<f64>() {
                Ok(v) => Ok((no, v)),
                Err(_) => Err(MmError::Parse {
                    line: no,
                    detail: format!("expected {what}, found {tok:?}"),
                }),
            },
            None => Err(MmError::Parse {
                line: 0,
                detail: format!("file ended while reading {what}"),
            }),
        }
    };

    let (no, nrows_f) = next_number("row count")?;
    let nrows = as_index(nrows_f, no, "row count")?;
    let (no, ncols_f) = next_number("column count")?;
    let ncols = as_index(ncols_f, no, "column count")?;

    let mut triplets = Vec::new();
    if coordinate {
        let (no, nnz_f) = next_number("entry count")?;
        let nnz = as_index(nnz_f, no, "entry count")?;
        triplets.reserve(nnz);
        for _ in 0..nnz {
            let (no, i_f) = next_number("row index")?;
            let i = as_index(i_f, no, "row index")?;
            let (no, j_f) = next_number("column index")?;
            let j = as_index(j_f, no, "column index")?;
            let (no, v) = next_number("value")?;
            if i == 0 || j == 0 || i > nrows || j > ncols {
                return Err(MmError::Parse {
                    line: no,
                    detail: format!(
                        "entry ({i}, {j}) outside the declared {nrows} x {ncols} shape"
                    ),
                });
            }
            push_with_symmetry(&mut triplets, i - 1, j - 1, v, symmetry);
        }
    } else {
        // Array format stores the full lower triangle for symmetric
        // variants, the full matrix otherwise, in column-major order.
        for j in 0..ncols {
            let i_start = match symmetry {
                Symmetry::General => 0,
                Symmetry::Symmetric => j,
                Symmetry::SkewSymmetric => j + 1,
            };
            for i in i_start..nrows {
                let (_, v) = next_number("matrix value")?;
                if v != 0.0 {
                    push_with_symmetry(&mut triplets, i, j, v, symmetry);
                }
            }
        }
    }
    if let Some((no, tok)) = cursor.next() {
        return Err(MmError::Parse {
            line: no,
            detail: format!("unexpected trailing data: {tok:?}"),
        });
    }
    Ok((nrows, ncols, triplets))
}

fn push_with_symmetry(
    triplets: &mut Vec<(usize, usize, f64)>,
    i: usize,
    j: usize,
    v: f64,
    symmetry: Symmetry,
) {
    triplets.push((i, j, v));
    if i != j {
        match symmetry {
            Symmetry::General => {}
            Symmetry::Symmetric => triplets.push((j, i, v)),
            Symmetry::SkewSymmetric => triplets.push((j, i, -v)),
        }
    }
}

fn as_index(v: f64, line: usize, what: &str) -> Result<usize, MmError> {
    if v.fract() != 0.0 || v < 0.0 || v > usize::MAX as f64 {
        return Err(MmError::Parse {
            line,
            detail: format!("{what} must be a non-negative integer, found {v}"),
        });
    }
    Ok(v as usize)
}
