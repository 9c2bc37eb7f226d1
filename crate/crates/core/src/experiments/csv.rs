//! Comma-separated tables with a fixed header per file name.
//!
//! Floats are written in their shortest round-trip form, so identical
//! numbers always produce identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Int,
    Float,
    Bool,
    Text,
}

#[derive(Debug, Clone, Copy)]
pub struct Column {
    pub name: &'static str,
    pub kind: Kind,
    /// Wall-clock derived; exempt from the determinism comparison.
    pub timing: bool,
}

const fn col(name: &'static str, kind: Kind) -> Column {
    Column {
        name,
        kind,
        timing: false,
    }
}

const fn timed(name: &'static str) -> Column {
    Column {
        name,
        kind: Kind::Float,
        timing: true,
    }
}

#[derive(Debug)]
pub struct Schema {
    pub file: &'static str,
    pub columns: &'static [Column],
}

use Kind::*;

pub const WINDOWS: Schema = Schema {
    file: "windows.csv",
    columns: &[
        col("ell", Int),
        col("k_obs", Int),
        col("k_pred", Int),
        col("err_end", Float),
        col("bound_end", Float),
        timed("tau_F_s"),
        timed("tau_G_s"),
        timed("tau_p_model_s"),
    ],
};

/// Same columns as [`WINDOWS`] for the run that performs `k_pred` iterations.
pub const WINDOWS_KTH: Schema = Schema {
    file: "windows_kth.csv",
    columns: WINDOWS.columns,
};

pub const JUMPS: Schema = Schema {
    file: "jumps.csv",
    columns: &[
        col("ell", Int),
        col("k", Int),
        col("n", Int),
        col("jump", Float),
        col("jump_raw", Float),
        col("bound", Float),
        col("allowance", Float),
    ],
};

pub const EXP1_SUMMARY: Schema = Schema {
    file: "summary.csv",
    columns: &[
        col("cell", Text),
        col("gamma_tilde", Float),
        col("eigs", Text),
        col("windows", Int),
        col("ell_tol", Int),
        col("ell_par_tol", Int),
        col("k1_windows", Int),
        col("sum_k_obs", Int),
        col("sum_k_pred", Int),
        col("max_err_ratio", Float),
        col("alpha", Float),
        col("beta", Float),
        col("eta", Float),
        col("M_sup", Float),
        col("K_sup", Float),
        col("truncation_form", Text),
    ],
};

pub const EFFICIENCY: Schema = Schema {
    file: "efficiency.csv",
    columns: &[
        col("mode", Text),
        timed("E_obs"),
        timed("E_lower_bound"),
        col("E0_th", Float),
        col("ell_tol", Int),
        col("ell_par_tol", Int),
    ],
};

pub const EXP2_SUMMARY: Schema = Schema {
    file: "summary.csv",
    columns: &[
        col("point", Text),
        col("sweep", Text),
        col("eigs", Text),
        col("gamma_tilde", Float),
        col("N", Int),
        col("fine_log2", Int),
        col("mode", Text),
        timed("E_obs"),
        timed("E_lower_bound"),
        col("E0_th", Float),
        col("ell_tol", Int),
        col("ell_par_tol", Int),
        col("sum_k", Int),
        col("sum_k_pred", Int),
        timed("tau_F_s"),
        timed("tau_G_s"),
        timed("tau_s_s"),
    ],
};

pub const VW_SCHEDULE: Schema = Schema {
    file: "vw_schedule.csv",
    columns: &[
        col("ell", Int),
        col("N_ell", Int),
        col("Tprime_ell", Float),
        col("cap_hit", Bool),
        col("err_end", Float),
        col("bound_end", Float),
    ],
};

pub const VW_CUMULATIVE: Schema = Schema {
    file: "vw_cumulative.csv",
    columns: &[col("t", Float), col("cum_k_vw", Int), col("cum_k_th", Int)],
};

pub const VW_EFFICIENCY: Schema = Schema {
    file: "vw_efficiency.csv",
    columns: &[
        col("mode", Text),
        timed("E_obs"),
        col("E0", Float),
        col("windows", Int),
        col("horizon", Float),
        col("sum_k", Int),
    ],
};

pub const VW_DT_SWEEP: Schema = Schema {
    file: "vw_dt_sweep.csv",
    columns: &[
        col("fine_log2", Int),
        col("alpha", Float),
        col("beta", Float),
        col("eta", Float),
        col("windows_to_tol", Int),
        col("Tprime_tol", Float),
        col("E0_vw", Float),
        timed("E_model"),
    ],
};

pub const SCHEMAS: &[&Schema] = &[
    &WINDOWS,
    &WINDOWS_KTH,
    &JUMPS,
    &EXP1_SUMMARY,
    &EFFICIENCY,
    &EXP2_SUMMARY,
    &VW_SCHEDULE,
    &VW_CUMULATIVE,
    &VW_EFFICIENCY,
    &VW_DT_SWEEP,
];

/// Schema for an emitted file: `summary.csv` is disambiguated by its directory.
pub fn schema_for(path: &Path) -> Option<&'static Schema> {
    let name = path.file_name()?.to_str()?;
    if name == "summary.csv" {
        let parent = path.parent()?.file_name()?.to_str()?;
        return match parent {
            "exp1" => Some(&EXP1_SUMMARY),
            "exp2" => Some(&EXP2_SUMMARY),
            _ => None,
        };
    }
    SCHEMAS.iter().copied().find(|s| s.file == name)
}

#[derive(Debug, Clone)]
pub enum Value {
    Int(usize),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

impl Value {
    fn kind(&self) -> Kind {
        match self {
            Value::Int(_) => Int,
            Value::Float(_) => Float,
            Value::Bool(_) => Bool,
            Value::Text(_) => Text,
        }
    }
}

/// Shortest round-trip decimal; exponent form outside `[1e-4, 1e6)`.
pub fn format_float(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e6).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub struct Table {
    schema: &'static Schema,
    body: String,
    rows: usize,
}

impl Table {
    pub fn new(schema: &'static Schema) -> Self {
        let header: Vec<&str> = schema.columns.iter().map(|c| c.name).collect();
        Self {
            schema,
            body: header.join(",") + "\n",
            rows: 0,
        }
    }

    /// Panics if the row does not match the schema; rows are built in code.
    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.schema.columns.len(), "{}: wrong arity", self.schema.file);
        for (i, (v, c)) in row.iter().zip(self.schema.columns).enumerate() {
            assert_eq!(v.kind(), c.kind, "{}: column {}", self.schema.file, c.name);
            if i > 0 {
                self.body.push(',');
            }
            match v {
                Value::Int(x) => write!(self.body, "{x}").unwrap(),
                Value::Float(x) => self.body.push_str(&format_float(*x)),
                Value::Bool(x) => write!(self.body, "{x}").unwrap(),
                Value::Text(s) => {
                    assert!(!s.contains([',', '\n', '"']), "text fields are unquoted");
                    self.body.push_str(s);
                }
            }
        }
        self.body.push('\n');
        self.rows += 1;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(self.schema.file);
        std::fs::write(&path, &self.body)?;
        Ok(path)
    }
}

/// A parsed CSV file, validated against its schema.
#[derive(Debug)]
pub struct Parsed {
    pub schema: &'static Schema,
    pub rows: Vec<Vec<String>>,
}

impl Parsed {
    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.schema.columns.iter().position(|c| c.name == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    pub fn floats(&self, name: &str) -> Option<Vec<f64>> {
        self.column(name)?.into_iter().map(|s| s.parse().ok()).collect()
    }

    pub fn ints(&self, name: &str) -> Option<Vec<usize>> {
        self.column(name)?.into_iter().map(|s| s.parse().ok()).collect()
    }
}

fn schema_error(path: &Path, line: usize, column: usize, message: String) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        column,
        message,
    }
}

/// Reads `path` and checks header, arity, field types and LF line endings.
pub fn read_checked(path: &Path) -> Result<Parsed> {
    let schema = schema_for(path).ok_or_else(|| schema_error(path, 0, 0, "no schema for this file".into()))?;
    let text = std::fs::read_to_string(path)?;
    if text.contains('\r') {
        return Err(schema_error(path, 0, 0, "CR line ending".into()));
    }
    if !text.ends_with('\n') {
        return Err(schema_error(path, 0, 0, "missing final newline".into()));
    }
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let expected: Vec<&str> = schema.columns.iter().map(|c| c.name).collect();
    if header.split(',').collect::<Vec<_>>() != expected {
        return Err(schema_error(path, 1, 1, format!("header `{header}`, expected `{}`", expected.join(","))));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != schema.columns.len() {
            return Err(schema_error(path, i + 2, 1, format!("{} fields, expected {}", fields.len(), schema.columns.len())));
        }
        for (j, (f, c)) in fields.iter().zip(schema.columns).enumerate() {
            let ok = match c.kind {
                Int => f.parse::<usize>().is_ok(),
                Float => f.parse::<f64>().is_ok(),
                Bool => *f == "true" || *f == "false",
                Text => !f.is_empty(),
            };
            if !ok {
                return Err(schema_error(path, i + 2, j + 1, format!("`{f}` is not a valid {:?} for `{}`", c.kind, c.name)));
            }
        }
        rows.push(fields.into_iter().map(str::to_string).collect());
    }
    Ok(Parsed { schema, rows })
}

/// Non-timing cells that differ between two emitted copies of one file.
pub fn deterministic_diff(a: &Parsed, b: &Parsed) -> Vec<String> {
    let mut out = Vec::new();
    if a.rows.len() != b.rows.len() {
        out.push(format!("row count {} vs {}", a.rows.len(), b.rows.len()));
        return out;
    }
    for (i, (ra, rb)) in a.rows.iter().zip(&b.rows).enumerate() {
        for (j, c) in a.schema.columns.iter().enumerate() {
            if !c.timing && ra[j] != rb[j] {
                out.push(format!("row {} column {}: {} vs {}", i + 1, c.name, ra[j], rb[j]));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.0, 1.0, -2.5, 1e-3, 1e-300, 123456789.0, 0.1 + 0.2, f64::MIN_POSITIVE] {
            let s = format_float(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(format_float(1e-8), "1e-8");
        assert_eq!(format_float(0.5), "0.5");
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new(&EFFICIENCY);
        t.push(vec!["k_obs".into(), 0.25.into(), 0.1.into(), 0.3.into(), 11usize.into(), 11usize.into()]);
        let path = t.write(dir.path()).unwrap();
        let parsed = read_checked(&path).unwrap();
        assert_eq!(parsed.rows.len(), 1);
        assert_eq!(parsed.floats("E0_th").unwrap(), vec![0.3]);
    }

    #[test]
    fn rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vw_cumulative.csv");
        std::fs::write(&path, "t,cum_k_vw\n1,2\n").unwrap();
        assert!(read_checked(&path).is_err());
        std::fs::write(&path, "t,cum_k_vw,cum_k_th\n1,2,x\n").unwrap();
        assert!(read_checked(&path).is_err());
        std::fs::write(&path, "t,cum_k_vw,cum_k_th\r\n1,2,3\r\n").unwrap();
        assert!(read_checked(&path).is_err());
        std::fs::write(&path, "t,cum_k_vw,cum_k_th\n1,2,3\n").unwrap();
        assert!(read_checked(&path).is_ok());
    }

    #[test]
    fn timing_columns_are_exempt() {
        let mk = |tau: &str, k: &str| Parsed {
            schema: &WINDOWS,
            rows: vec![vec!["1", k, "2", "0.1", "0.2", tau, tau, tau].into_iter().map(String::from).collect()],
        };
        assert!(deterministic_diff(&mk("1e-5", "1"), &mk("2e-5", "1")).is_empty());
        assert_eq!(deterministic_diff(&mk("1e-5", "1"), &mk("1e-5", "2")).len(), 1);
    }

    #[test]
    #[should_panic]
    fn push_checks_kinds() {
        let mut t = Table::new(&VW_CUMULATIVE);
        t.push(vec![1.0.into(), 1.0.into(), 2usize.into()]);
    }
}
