//! Plain-text plant description.
//!
//! ```text
//! m = 2
//! A = 0, 1, -1, -2        # row-major
//! B = 0, 1
//! C = 0, 1
//! x0_true = 0, 0
//! xhat0 = 2, 1
//! eigs = -2, -4
//! input = 3 + 0.5*sin(0.75*t)
//! ```
//!
//! `B` has `m * p` entries and `C` has `q * m`; `p` and `q` follow from the
//! list lengths. `x0_true` and `xhat0` default to zero, `input` to zero,
//! and `eigs` is optional.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{LtiSystem, Signal};
use crate::error::{Error, Result};
use crate::kv::{parse_number, Entry, KvFile};

const KEYS: &[&str] = &["m", "A", "B", "C", "x0_true", "xhat0", "eigs", "input"];

#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub system: LtiSystem,
    pub xhat0: DVector<f64>,
    pub eigs: Option<Vec<f64>>,
}

impl SystemSpec {
    /// The benchmark plant with observer start `(2, 1)` and poles `{-2, -4}`.
    pub fn benchmark() -> Self {
        Self {
            system: LtiSystem::benchmark_plant(),
            xhat0: DVector::from_vec(vec![2.0, 1.0]),
            eigs: Some(vec![-2.0, -4.0]),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let f = KvFile::parse(text, path, KEYS)?;
        let m_entry = f.get("m").ok_or_else(|| f.missing("m"))?;
        let m = f.usize_value(m_entry)?;
        if m == 0 {
            return Err(f.error(m_entry, "state dimension must be positive"));
        }

        let a = matrix(&f, "A", m, Some(m))?;
        let b = matrix(&f, "B", m, None)?;
        let c_entry = f.get("C").ok_or_else(|| f.missing("C"))?;
        let c_vals = f.list(c_entry)?;
        if c_vals.len() % m != 0 {
            return Err(f.error(c_entry, format!("{} entries is not a multiple of m = {m}", c_vals.len())));
        }
        let c = DMatrix::from_row_slice(c_vals.len() / m, m, &c_vals);

        let x0 = vector(&f, "x0_true", m)?.unwrap_or_else(|| DVector::zeros(m));
        let xhat0 = vector(&f, "xhat0", m)?.unwrap_or_else(|| DVector::zeros(m));
        let eigs = match f.get("eigs") {
            Some(e) => {
                let v = f.list(e)?;
                if v.len() != m {
                    return Err(f.error(e, format!("expected {m} eigenvalues, got {}", v.len())));
                }
                Some(v)
            }
            None => None,
        };
        let p = b.ncols();
        let input = match f.get("input") {
            Some(e) => parse_input(&f, e, p)?,
            None => Signal::zero(p),
        };

        let system = LtiSystem::new(a, b, c, input, x0).map_err(|err| match err {
            Error::Dimension(msg) => Error::Parse {
                path: path.to_string(),
                line: m_entry.line,
                column: m_entry.value_column,
                message: msg,
            },
            other => other,
        })?;
        Ok(Self { system, xhat0, eigs })
    }
}

fn matrix(f: &KvFile<'_>, key: &str, rows: usize, cols: Option<usize>) -> Result<DMatrix<f64>> {
    let e = f.get(key).ok_or_else(|| f.missing(key))?;
    let vals = f.list(e)?;
    if vals.len() % rows != 0 {
        return Err(f.error(e, format!("{} entries is not a multiple of {rows} rows", vals.len())));
    }
    let ncols = vals.len() / rows;
    if let Some(expected) = cols {
        if ncols != expected {
            return Err(f.error(e, format!("expected {} entries, got {}", rows * expected, vals.len())));
        }
    }
    Ok(DMatrix::from_row_slice(rows, ncols, &vals))
}

fn vector(f: &KvFile<'_>, key: &str, m: usize) -> Result<Option<DVector<f64>>> {
    let Some(e) = f.get(key) else { return Ok(None) };
    let vals = f.list(e)?;
    if vals.len() != m {
        return Err(f.error(e, format!("expected {m} entries, got {}", vals.len())));
    }
    Ok(Some(DVector::from_vec(vals)))
}

/// `c`, or `c + a*sin(w*t)` / `c - a*sin(w*t)`, whitespace-insensitive.
fn parse_input(f: &KvFile<'_>, e: &Entry, channels: usize) -> Result<Signal> {
    let s: String = e.value.chars().filter(|c| !c.is_whitespace()).collect();
    if let Some(c) = parse_number(&s) {
        return Ok(Signal::constant(c, channels));
    }
    let bad = || f.error(e, format!("expected `const+amp*sin(freq*t)`, got `{}`", e.value));
    let sin_at = s.find("sin(").ok_or_else(bad)?;
    let head = &s[..sin_at];
    let inner = s[sin_at + 4..].strip_suffix(')').ok_or_else(bad)?;
    let freq = parse_number(inner.strip_suffix("*t").ok_or_else(bad)?).ok_or_else(bad)?;
    let head = head.strip_suffix('*').ok_or_else(bad)?;
    // Split "c+a" / "c-a" at the last sign that is not an exponent sign.
    let bytes = head.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'))
        .ok_or_else(bad)?;
    let offset = parse_number(&head[..split]).ok_or_else(bad)?;
    let amplitude = parse_number(&head[split..]).ok_or_else(bad)?;
    Ok(Signal::sinusoid(offset, amplitude, freq, channels))
}
