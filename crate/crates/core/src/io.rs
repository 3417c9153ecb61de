//! Plain-text matrix format.
//!
//! ```text
//! # optional comment lines
//! rows cols
//! a11 a12 ...
//! ...
//! ```
//!
//! Entries are written with the shortest decimal representation that parses
//! back to the same double, so a write/read cycle is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub fn parse_matrix(text: &str) -> Result<Matrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing header".into(),
    })?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(Error::Parse {
            line: hline,
            message: format!("header must be \"rows cols\", got {header:?}"),
        });
    }
    let parse_dim = |s: &str| {
        s.parse::<usize>().ok().filter(|&v| v > 0).ok_or_else(|| Error::Parse {
            line: hline,
            message: format!("invalid dimension {s:?}"),
        })
    };
    let rows = parse_dim(dims[0])?;
    let cols = parse_dim(dims[1])?;

    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    let mut last_line = hline;
    for (lineno, line) in lines {
        last_line = lineno;
        if seen == rows {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {rows} rows, found more"),
            });
        }
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("non-numeric token {tok:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("non-finite value {tok:?}"),
                });
            }
            data.push(v);
        }
        let got = data.len() - before;
        if got != cols {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {cols} entries, found {got}"),
            });
        }
        seen += 1;
    }
    if seen != rows {
        return Err(Error::Parse {
            line: last_line,
            message: format!("entry count mismatch: expected {rows} rows, found {seen}"),
        });
    }
    Matrix::new(rows, cols, data)
}

pub fn format_matrix(a: &Matrix) -> String {
    let mut out = String::with_capacity(a.rows() * a.cols() * 8);
    let _ = writeln!(out, "{} {}", a.rows(), a.cols());
    for row in a.row_iter() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    parse_matrix(&fs::read_to_string(path)?)
}

pub fn write_matrix(path: impl AsRef<Path>, a: &Matrix) -> Result<()> {
    write_atomic(path.as_ref(), format_matrix(a).as_bytes())
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Validation(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::Io(e)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hadamard::build_hadamard;
    use crate::rng::RandomSource;

    #[test]
    fn reads_hadamard_one() {
        let m = parse_matrix("2 2\n1 1\n1 -1\n").unwrap();
        assert_eq!(&m, build_hadamard(1).unwrap().matrix());
    }

    #[test]
    fn writes_hadamard_one() {
        let h = build_hadamard(1).unwrap();
        assert_eq!(format_matrix(h.matrix()), "2 2\n1 1\n1 -1\n");
    }

    #[test]
    fn short_file_is_entry_count_error() {
        match parse_matrix("2 3\n1 2\n") {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("entries"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_rows_reported() {
        assert!(matches!(parse_matrix("2 1\n1\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_matrix("1 1\n1\n2\n"), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn bad_tokens_and_headers() {
        assert!(matches!(parse_matrix(""), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_matrix("2\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_matrix("0 2\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_matrix("1 2\n1 x\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_matrix("1 1\nnan\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let m = parse_matrix("# hello\n\n1 2\n# mid\n0.5 -2e3\n").unwrap();
        assert_eq!(m.as_slice(), &[0.5, -2000.0]);
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.mat");
        let mut rng = RandomSource::new(8, 0);
        let a = Matrix::gaussian(3, 2, &mut rng).scaled(1e-7);
        write_matrix(&path, &a).unwrap();
        let b = read_matrix(&path).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
