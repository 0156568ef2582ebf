//! Text formats.
//!
//! Observation file: a header `n k ratio seed`, then one line `i j value` per
//! observed unordered pair with 1-based indices and `i < j`. Lines starting
//! with `#` are comments, except `# noise_sigma <value>` which records the
//! noise level. Matrices are CSV, one row per line.
//!
//! Floats are written with 17 significant digits, which round-trips every
//! `f64` exactly.

use std::io::Write;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::harness::ObservedDistances;

/// A malformed input line. `line` is 1-based; 0 means the whole input.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {message}")]
pub struct FormatError {
    pub line: usize,
    pub message: String,
}

fn ferr(line: usize, message: impl Into<String>) -> FormatError {
    FormatError {
        line,
        message: message.into(),
    }
}

/// `f64` with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Contents of an observation file.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationFile {
    pub k: usize,
    pub seed: u64,
    pub observations: ObservedDistances,
}

pub fn write_observations<W: Write>(
    w: &mut W,
    obs: &ObservedDistances,
    k: usize,
    seed: u64,
) -> std::io::Result<()> {
    writeln!(w, "{} {} {} {}", obs.n(), k, fmt_f64(obs.sampling_ratio()), seed)?;
    if obs.noise_sigma() > 0.0 {
        writeln!(w, "# noise_sigma {}", fmt_f64(obs.noise_sigma()))?;
    }
    for (i, j, v) in obs.triplets() {
        writeln!(w, "{} {} {}", i + 1, j + 1, fmt_f64(v))?;
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, FormatError> {
    let tok = tok.ok_or_else(|| ferr(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| ferr(line, format!("cannot parse {what} from '{tok}'")))
}

pub fn parse_observations(text: &str) -> Result<ObservationFile, FormatError> {
    let mut header: Option<(usize, usize, f64, u64)> = None;
    let mut noise_sigma = 0.0;
    let mut triplets = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let mut toks = comment.split_whitespace();
            if toks.next() == Some("noise_sigma") {
                noise_sigma = parse_field(toks.next(), lineno, "noise_sigma")?;
            }
            continue;
        }
        let mut toks = line.split_whitespace();
        match header {
            None => {
                let n: usize = parse_field(toks.next(), lineno, "n")?;
                let k: usize = parse_field(toks.next(), lineno, "k")?;
                let ratio: f64 = parse_field(toks.next(), lineno, "ratio")?;
                let seed: u64 = parse_field(toks.next(), lineno, "seed")?;
                if toks.next().is_some() {
                    return Err(ferr(lineno, "header must be 'n k ratio seed'"));
                }
                header = Some((n, k, ratio, seed));
            }
            Some((n, ..)) => {
                let i: usize = parse_field(toks.next(), lineno, "i")?;
                let j: usize = parse_field(toks.next(), lineno, "j")?;
                let v: f64 = parse_field(toks.next(), lineno, "value")?;
                if toks.next().is_some() {
                    return Err(ferr(lineno, "expected 'i j value'"));
                }
                if i < 1 || j > n || i >= j {
                    return Err(ferr(lineno, format!("indices must satisfy 1 <= i < j <= {n}, got {i} {j}")));
                }
                if !v.is_finite() {
                    return Err(ferr(lineno, "value must be finite"));
                }
                triplets.push((i - 1, j - 1, v, lineno));
            }
        }
    }
    let (n, k, ratio, seed) = header.ok_or_else(|| ferr(0, "missing header"))?;
    let mut seen = std::collections::HashSet::new();
    for &(i, j, _, lineno) in &triplets {
        if !seen.insert((i, j)) {
            return Err(ferr(lineno, format!("duplicate pair {} {}", i + 1, j + 1)));
        }
    }
    let plain: Vec<(usize, usize, f64)> = triplets.iter().map(|&(i, j, v, _)| (i, j, v)).collect();
    let observations =
        ObservedDistances::from_triplets(n, &plain, ratio, noise_sigma).map_err(|e| ferr(0, e.to_string()))?;
    Ok(ObservationFile {
        k,
        seed,
        observations,
    })
}

pub fn write_matrix_csv<W: Write>(w: &mut W, m: &DMatrix<f64>) -> std::io::Result<()> {
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn parse_matrix_csv(text: &str) -> Result<DMatrix<f64>, FormatError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| ferr(idx + 1, format!("cannot parse number from '{}'", t.trim())))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(ferr(idx + 1, format!("expected {} columns, found {}", first.len(), row.len())));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(ferr(0, "empty matrix"));
    }
    let ncols = rows[0].len();
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.into_iter().flatten()))
}
