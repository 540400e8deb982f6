//! Plain-text formats: complex literals, power lists and coupling-matrix files.
//!
//! Coupling-matrix files have one header line holding `n_t`, followed by
//! `n_t` lines of `n_t` whitespace-separated complex entries written `a+bj`.
//! Blank lines and lines starting with `#` are ignored.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CMat;

/// Upper bound on the element count accepted from a matrix file.
pub const MAX_FILE_ELEMENTS: usize = 256;

/// Parses `a`, `bj`, `a+bj` or `a-bj` (exponents allowed in both parts).
pub fn parse_complex(token: &str) -> std::result::Result<Complex64, String> {
    let s = token.trim();
    if s.is_empty() {
        return Err("empty complex literal".into());
    }
    let real = |t: &str| -> std::result::Result<f64, String> {
        let v: f64 = t
            .parse()
            .map_err(|_| format!("invalid number `{t}` in `{s}`"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("non-finite number in `{s}`"))
        }
    };
    let Some(body) = s.strip_suffix('j') else {
        return Ok(Complex64::new(real(s)?, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| matches!(bytes[i], b'+' | b'-') && !matches!(bytes[i - 1], b'e' | b'E'));
    match split {
        Some(i) => Ok(Complex64::new(real(&body[..i])?, real(&body[i..])?)),
        None => Ok(Complex64::new(0.0, real(body)?)),
    }
}

/// Formats a complex number so that [`parse_complex`] reads back the same bits.
pub fn format_complex(z: Complex64) -> String {
    if z.im.is_sign_negative() {
        format!("{}-{}j", z.re, -z.im)
    } else {
        format!("{}+{}j", z.re, z.im)
    }
}

/// Parses a comma-separated list of reals, e.g. `0,5,10`.
pub fn parse_power_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    let values = s
        .split(',')
        .map(|t| {
            let t = t.trim();
            let v: f64 = t.parse().map_err(|_| format!("invalid power value `{t}`"))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("non-finite power value `{t}`"))
            }
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err("empty power list".into());
    }
    Ok(values)
}

/// Reads the raw matrix of a coupling-matrix file (no physical validation).
pub fn parse_matrix(text: &str) -> Result<CMat> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (header_line, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing `n_t` header".into(),
    })?;
    let n: usize = header.parse().map_err(|_| Error::Parse {
        line: header_line,
        message: format!("header must be a positive integer, got `{header}`"),
    })?;
    if n == 0 || n > MAX_FILE_ELEMENTS {
        return Err(Error::Parse {
            line: header_line,
            message: format!("n_t must be in 1..={MAX_FILE_ELEMENTS}, got {n}"),
        });
    }

    let mut entries = Vec::new();
    let mut rows = 0;
    for (line_no, line) in lines {
        if rows == n {
            return Err(Error::Parse {
                line: line_no,
                message: format!("unexpected content after {n} rows"),
            });
        }
        let row: Vec<Complex64> = line
            .split_whitespace()
            .map(parse_complex)
            .collect::<std::result::Result<_, _>>()
            .map_err(|message| Error::Parse {
                line: line_no,
                message,
            })?;
        if row.len() != n {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {n} entries, found {}", row.len()),
            });
        }
        entries.extend(row);
        rows += 1;
    }
    if rows != n {
        return Err(Error::Parse {
            line: text.lines().count().max(1),
            message: format!("expected {n} rows, found {rows}"),
        });
    }
    Ok(CMat::from_row_slice(n, n, &entries))
}

/// Writes a matrix in the coupling-matrix file format.
pub fn write_matrix(z: &CMat) -> String {
    let mut out = format!("{}\n", z.nrows());
    for r in 0..z.nrows() {
        let row: Vec<String> = (0..z.ncols()).map(|c| format_complex(z[(r, c)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}
