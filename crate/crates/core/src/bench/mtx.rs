//! Matrix Market reader and writer (real, general; coordinate or array).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Matrix, SparseMatrix};

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Layout {
    Coordinate,
    Array,
}

fn parse_header(line: &str) -> Result<Layout> {
    let tokens: Vec<String> = line.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(perr(1, format!("bad header {line:?}")));
    }
    let layout = match tokens[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => return Err(perr(1, format!("unknown format {other:?}"))),
    };
    if tokens[3] != "real" && tokens[3] != "integer" && tokens[3] != "double" {
        return Err(perr(1, format!("field {:?} is not real", tokens[3])));
    }
    if tokens[4] != "general" {
        return Err(perr(1, format!("symmetry {:?} is not supported", tokens[4])));
    }
    Ok(layout)
}

fn parse_usize(tok: Option<&str>, line: usize, what: &str) -> Result<usize> {
    tok.ok_or_else(|| perr(line, format!("missing {what}")))?
        .parse::<usize>()
        .map_err(|e| perr(line, format!("{what}: {e}")))
}

fn parse_f64(tok: Option<&str>, line: usize) -> Result<f64> {
    let v = tok
        .ok_or_else(|| perr(line, "missing value"))?
        .parse::<f64>()
        .map_err(|e| perr(line, format!("value: {e}")))?;
    if !v.is_finite() {
        return Err(perr(line, "non-finite value"));
    }
    Ok(v)
}

/// Parses Matrix Market text. Coordinate files become sparse (duplicates
/// summed), array files dense.
pub fn parse_matrix_market(text: &str) -> Result<Matrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (_, header) = lines.next().ok_or_else(|| perr(1, "empty file"))?;
    let layout = parse_header(header)?;
    let mut body = lines.filter(|(_, l)| !l.is_empty() && !l.starts_with('%'));
    let (size_line, size) = body.next().ok_or_else(|| perr(1, "missing size line"))?;
    let mut toks = size.split_whitespace();
    let rows = parse_usize(toks.next(), size_line, "row count")?;
    let cols = parse_usize(toks.next(), size_line, "column count")?;
    match layout {
        Layout::Coordinate => {
            let nnz = parse_usize(toks.next(), size_line, "entry count")?;
            if toks.next().is_some() {
                return Err(perr(size_line, "trailing tokens on size line"));
            }
            let mut triplets = Vec::with_capacity(nnz);
            for (ln, l) in body.by_ref() {
                let mut t = l.split_whitespace();
                let i = parse_usize(t.next(), ln, "row index")?;
                let j = parse_usize(t.next(), ln, "column index")?;
                let v = parse_f64(t.next(), ln)?;
                if t.next().is_some() {
                    return Err(perr(ln, "trailing tokens"));
                }
                if i == 0 || i > rows || j == 0 || j > cols {
                    return Err(perr(ln, format!("index ({i}, {j}) outside {rows} x {cols}")));
                }
                triplets.push((i - 1, j - 1, v));
                if triplets.len() > nnz {
                    return Err(perr(ln, format!("more than the declared {nnz} entries")));
                }
            }
            if triplets.len() != nnz {
                return Err(perr(size_line, format!("declared {nnz} entries, found {}", triplets.len())));
            }
            Ok(Matrix::Sparse(SparseMatrix::from_triplets(rows, cols, &triplets)?))
        }
        Layout::Array => {
            if toks.next().is_some() {
                return Err(perr(size_line, "trailing tokens on size line"));
            }
            let mut a = DenseMatrix::zeros(rows, cols);
            let mut count = 0usize;
            for (ln, l) in body {
                for tok in l.split_whitespace() {
                    if count >= rows * cols {
                        return Err(perr(ln, format!("more than {} values", rows * cols)));
                    }
                    let v = parse_f64(Some(tok), ln)?;
                    a.set(count % rows.max(1), count / rows.max(1), v);
                    count += 1;
                }
            }
            if count != rows * cols {
                return Err(perr(size_line, format!("expected {} values, found {count}", rows * cols)));
            }
            Ok(Matrix::Dense(a))
        }
    }
}

pub fn read_matrix_market(path: &Path) -> Result<Matrix> {
    parse_matrix_market(&std::fs::read_to_string(path)?)
}

/// Reads a single-column matrix (either layout) as a vector.
pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let m = read_matrix_market(path)?;
    let (rows, cols) = m.shape();
    if cols != 1 {
        return Err(Error::Shape(format!("right-hand side must have one column, got {rows} x {cols}")));
    }
    Ok(m.to_dense().col(0))
}

/// Text form; sparse as coordinate, dense as column-major array. Values use
/// the shortest representation that round-trips.
pub fn format_matrix_market(m: &Matrix) -> String {
    let mut out = String::new();
    match m {
        Matrix::Sparse(s) => {
            out.push_str("%%MatrixMarket matrix coordinate real general\n");
            let _ = writeln!(out, "{} {} {}", s.rows(), s.cols(), s.nnz());
            for i in 0..s.rows() {
                for (j, v) in s.row_entries(i) {
                    let _ = writeln!(out, "{} {} {:e}", i + 1, j + 1, v);
                }
            }
        }
        Matrix::Dense(d) => {
            out.push_str("%%MatrixMarket matrix array real general\n");
            let _ = writeln!(out, "{} {}", d.rows(), d.cols());
            for j in 0..d.cols() {
                for i in 0..d.rows() {
                    let _ = writeln!(out, "{:e}", d.get(i, j));
                }
            }
        }
    }
    out
}

pub fn write_matrix_market(path: &Path, m: &Matrix) -> Result<()> {
    std::fs::write(path, format_matrix_market(m))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinate_single_entry() {
        let m = parse_matrix_market("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 3.5\n").unwrap();
        let d = m.to_dense();
        assert_eq!(d.shape(), (2, 2));
        assert_eq!(d.get(0, 0), 3.5);
        assert!(matches!(m, Matrix::Sparse(_)));
    }

    #[test]
    fn array_column() {
        let m = parse_matrix_market("%%MatrixMarket matrix array real general\n% comment\n2 1\n1\n2\n").unwrap();
        assert!(matches!(m, Matrix::Dense(_)));
        assert_eq!(m.to_dense().into_data(), vec![1.0, 2.0]);
    }

    #[test]
    fn array_is_column_major() {
        let m = parse_matrix_market("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n").unwrap();
        let d = m.to_dense();
        assert_eq!((d.get(0, 1), d.get(1, 0)), (3.0, 2.0));
    }

    #[test]
    fn duplicates_are_summed() {
        let m = parse_matrix_market("%%MatrixMarket matrix coordinate real general\n1 1 2\n1 1 1.0\n1 1 1.0\n").unwrap();
        assert_eq!(m.to_dense().get(0, 0), 2.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("%%MatrixMarket matrix coordinate complex general\n1 1 0\n", 1),
            ("%%MatrixMarket matrix coordinate real symmetric\n1 1 0\n", 1),
            ("%%MatrixMarket vector coordinate real general\n1 1 0\n", 1),
            ("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n", 3),
            ("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n% c\n0 1 1.0\n", 5),
            ("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 abc\n", 3),
            ("%%MatrixMarket matrix array real general\n2 x\n", 2),
        ];
        for (text, line) in cases {
            match parse_matrix_market(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?} gave {other:?}"),
            }
        }
    }

    #[test]
    fn entry_count_mismatch() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n";
        assert!(matches!(parse_matrix_market(text), Err(Error::Parse { line: 2, .. })));
    }
}
