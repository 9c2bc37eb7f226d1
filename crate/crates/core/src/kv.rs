//! Line-oriented `key = value` files shared by the system and experiment
//! configuration formats. `#` starts a comment; blank lines are ignored.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
    /// 1-based column where the value starts.
    pub value_column: usize,
}

pub(crate) struct KvFile<'a> {
    pub path: &'a str,
    pub entries: Vec<Entry>,
}

impl<'a> KvFile<'a> {
    pub fn parse(text: &str, path: &'a str, allowed: &[&str]) -> Result<Self> {
        let mut entries: Vec<Entry> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("");
            if content.trim().is_empty() {
                continue;
            }
            let Some(eq) = content.find('=') else {
                return Err(Error::Parse {
                    path: path.to_string(),
                    line,
                    column: content.len() - content.trim_start().len() + 1,
                    message: "expected `key = value`".into(),
                });
            };
            let key = content[..eq].trim().to_string();
            if key.is_empty() {
                return Err(Error::Parse {
                    path: path.to_string(),
                    line,
                    column: 1,
                    message: "empty key".into(),
                });
            }
            if !allowed.contains(&key.as_str()) {
                return Err(Error::UnknownKey {
                    path: path.to_string(),
                    line,
                    key,
                });
            }
            if entries.iter().any(|e| e.key == key) {
                return Err(Error::Parse {
                    path: path.to_string(),
                    line,
                    column: 1,
                    message: format!("duplicate key `{key}`"),
                });
            }
            let after = &content[eq + 1..];
            let lead = after.len() - after.trim_start().len();
            entries.push(Entry {
                line,
                key,
                value: after.trim().to_string(),
                value_column: eq + 2 + lead,
            });
        }
        Ok(Self { path, entries })
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn error(&self, entry: &Entry, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_string(),
            line: entry.line,
            column: entry.value_column,
            message: format!("`{}`: {}", entry.key, message.into()),
        }
    }

    pub fn missing(&self, key: &str) -> Error {
        Error::Parse {
            path: self.path.to_string(),
            line: 0,
            column: 0,
            message: format!("missing required key `{key}`"),
        }
    }

    pub fn number(&self, entry: &Entry) -> Result<f64> {
        parse_number(&entry.value).ok_or_else(|| self.error(entry, format!("`{}` is not a number", entry.value)))
    }

    pub fn list(&self, entry: &Entry) -> Result<Vec<f64>> {
        if entry.value.is_empty() {
            return Err(self.error(entry, "empty list"));
        }
        entry
            .value
            .split(',')
            .map(|tok| {
                parse_number(tok.trim()).ok_or_else(|| self.error(entry, format!("`{}` is not a number", tok.trim())))
            })
            .collect()
    }

    /// Semicolon-separated groups of comma lists, e.g. `-2,-4; -0.25,-0.5`.
    pub fn groups(&self, entry: &Entry) -> Result<Vec<Vec<f64>>> {
        entry
            .value
            .split(';')
            .map(|g| {
                let sub = Entry {
                    value: g.trim().to_string(),
                    ..entry.clone()
                };
                self.list(&sub)
            })
            .collect()
    }

    pub fn usize_value(&self, entry: &Entry) -> Result<usize> {
        let v = self.number(entry)?;
        if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
            return Err(self.error(entry, format!("`{}` is not a non-negative integer", entry.value)));
        }
        Ok(v as usize)
    }

    pub fn usize_list(&self, entry: &Entry) -> Result<Vec<usize>> {
        self.list(entry)?
            .into_iter()
            .map(|v| {
                if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                    Err(self.error(entry, format!("`{v}` is not a non-negative integer")))
                } else {
                    Ok(v as usize)
                }
            })
            .collect()
    }
}

pub(crate) fn parse_number(s: &str) -> Option<f64> {
    let v: f64 = s.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_entries_and_comments() {
        let f = KvFile::parse("# header\na = 1, 2 # trailing\n\nb=3\n", "x", &["a", "b"]).unwrap();
        assert_eq!(f.entries.len(), 2);
        let a = f.get("a").unwrap();
        assert_eq!(a.line, 2);
        assert_eq!(f.list(a).unwrap(), vec![1.0, 2.0]);
        assert_eq!(f.number(f.get("b").unwrap()).unwrap(), 3.0);
    }

    #[test]
    fn unknown_and_malformed() {
        assert!(matches!(
            KvFile::parse("zzz = 1", "x", &["a"]),
            Err(Error::UnknownKey { line: 1, .. })
        ));
        assert!(matches!(KvFile::parse("no equals", "x", &["a"]), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(KvFile::parse("a=1\na=2", "x", &["a"]), Err(Error::Parse { line: 2, .. })));
        let f = KvFile::parse("a = 1, x", "x", &["a"]).unwrap();
        let err = f.list(f.get("a").unwrap()).unwrap_err();
        assert!(err.to_string().contains("`a`"), "{err}");
    }

    #[test]
    fn groups_split_on_semicolons() {
        let f = KvFile::parse("e = -2,-4; -0.25, -0.5", "x", &["e"]).unwrap();
        assert_eq!(
            f.groups(f.get("e").unwrap()).unwrap(),
            vec![vec![-2.0, -4.0], vec![-0.25, -0.5]]
        );
    }
}
