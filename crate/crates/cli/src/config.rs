//! Flat INI-style run configuration.
//!
//! ```text
//! # comment
//! [problem]
//! example = ex2
//! x0 = -4, 3, 5
//! [flow]
//! dt = 0.005
//! ```
//!
//! Keys are only accepted in their own section. Every value keeps the line and
//! column it came from so typed parsing can point at it.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const SECTIONS: &[(&str, &[&str])] = &[
    (
        "problem",
        &[
            "example", "seed", "eta", "x0", "lambda", "lambda_frac", "operator", "matrix", "offset",
            "shift", "prox", "lo", "hi", "target_sum", "beta", "mu", "solution", "id",
        ],
    ),
    ("flow", &["dt", "t_end", "tol", "scheme", "stride", "system", "delta"]),
    ("iter", &["method", "relaxation", "max_iters", "tol"]),
    ("analysis", &["samples"]),
    ("output", &["dir"]),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub path: PathBuf,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            return write!(f, "{}: {}", self.path.display(), self.message);
        }
        write!(
            f,
            "{}:{}:{}: {}",
            self.path.display(),
            self.line,
            self.column,
            self.message
        )
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub value: String,
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    pub path: PathBuf,
    entries: BTreeMap<(String, String), Entry>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ParseError> {
        let text = std::fs::read_to_string(path).map_err(|e| ParseError {
            path: path.to_path_buf(),
            line: 0,
            column: 0,
            message: format!("cannot read config: {e}"),
        })?;
        Self::parse(path, &text)
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self, ParseError> {
        let err = |line: usize, column: usize, message: String| ParseError {
            path: path.to_path_buf(),
            line,
            column,
            message,
        };
        let mut cfg = Config {
            path: path.to_path_buf(),
            entries: BTreeMap::new(),
        };
        let mut section: Option<&str> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let content = raw.split(['#', ';']).next().unwrap_or("");
            let indent = content.len() - content.trim_start().len();
            let trimmed = content.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    return Err(err(line_no, indent + 1, "unterminated section header".into()));
                };
                let name = name.trim();
                match SECTIONS.iter().find(|(s, _)| *s == name) {
                    Some((s, _)) => section = Some(s),
                    None => {
                        return Err(err(line_no, indent + 2, format!("unknown section `{name}`")));
                    }
                }
                continue;
            }
            let Some(eq) = content.find('=') else {
                return Err(err(line_no, indent + 1, "expected `key = value`".into()));
            };
            let key = content[..eq].trim();
            let Some(sec) = section else {
                return Err(err(line_no, indent + 1, "key outside of any section".into()));
            };
            let allowed = SECTIONS.iter().find(|(s, _)| *s == sec).map(|(_, k)| *k).unwrap_or(&[]);
            if key.is_empty() {
                return Err(err(line_no, indent + 1, "empty key".into()));
            }
            if !allowed.contains(&key) {
                return Err(err(line_no, indent + 1, format!("unknown key `{key}` in [{sec}]")));
            }
            let after = &content[eq + 1..];
            let value = after.trim();
            let column = eq + 2 + (after.len() - after.trim_start().len());
            if value.is_empty() {
                return Err(err(line_no, column, format!("missing value for `{key}`")));
            }
            let prev = cfg.entries.insert(
                (sec.to_string(), key.to_string()),
                Entry {
                    value: value.to_string(),
                    line: line_no,
                    column,
                },
            );
            if prev.is_some() {
                return Err(err(line_no, indent + 1, format!("duplicate key `{key}` in [{sec}]")));
            }
        }
        Ok(cfg)
    }

    pub fn raw(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries.get(&(section.to_string(), key.to_string()))
    }

    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, ParseError>
    where
        T::Err: fmt::Display,
    {
        match self.raw(section, key) {
            None => Ok(None),
            Some(e) => e.value.parse().map(Some).map_err(|err| self.error_at(e, &format!("`{key}`: {err}"))),
        }
    }

    pub fn get_vec(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>, ParseError> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(e) => parse_vector(&e.value)
                .map(Some)
                .map_err(|m| self.error_at(e, &format!("`{key}`: {m}"))),
        }
    }

    /// Rows separated by `;` are not possible since `;` starts a comment, so
    /// rows are separated by `|`.
    pub fn get_matrix(&self, section: &str, key: &str) -> Result<Option<Vec<Vec<f64>>>, ParseError> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(e) => e
                .value
                .split('|')
                .map(parse_vector)
                .collect::<Result<Vec<_>, _>>()
                .map(Some)
                .map_err(|m| self.error_at(e, &format!("`{key}`: {m}"))),
        }
    }

    pub fn error_at(&self, e: &Entry, message: &str) -> ParseError {
        ParseError {
            path: self.path.clone(),
            line: e.line,
            column: e.column,
            message: message.to_string(),
        }
    }
}

pub fn parse_vector(s: &str) -> Result<Vec<f64>, String> {
    let v = s
        .split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>().map_err(|_| format!("`{t}` is not a number"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err("values must be finite".into());
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Config, ParseError> {
        Config::parse(Path::new("t.ini"), text)
    }

    #[test]
    fn reads_sections_and_comments() {
        let c = parse("# run\n[problem]\nexample = ex2  # inline\nx0 = -4, 3 ,5\n\n[flow]\ndt=0.005\n").unwrap();
        assert_eq!(c.get::<String>("problem", "example").unwrap().unwrap(), "ex2");
        assert_eq!(c.get_vec("problem", "x0").unwrap().unwrap(), vec![-4.0, 3.0, 5.0]);
        assert_eq!(c.get::<f64>("flow", "dt").unwrap(), Some(0.005));
        assert_eq!(c.get::<f64>("flow", "t_end").unwrap(), None);
    }

    #[test]
    fn reports_positions() {
        let e = parse("[problem]\nexample = ex1\n[flow]\n  dt = abc\n").unwrap();
        let err = e.get::<f64>("flow", "dt").unwrap_err();
        assert_eq!((err.line, err.column), (4, 8));

        let err = parse("[problem]\nbogus = 1\n").unwrap_err();
        assert_eq!((err.line, err.column), (2, 1));
        assert!(err.message.contains("bogus"));

        let err = parse("[nowhere]\n").unwrap_err();
        assert_eq!((err.line, err.column), (1, 2));

        let err = parse("dt = 1\n").unwrap_err();
        assert_eq!(err.line, 1);

        let err = parse("[flow]\ndt 1\n").unwrap_err();
        assert!(err.message.contains("key = value"));

        let err = parse("[flow]\ndt = 1\ndt = 2\n").unwrap_err();
        assert_eq!(err.line, 3);

        let err = parse("[flow]\ndt =\n").unwrap_err();
        assert_eq!((err.line, err.column), (2, 5));
    }

    #[test]
    fn matrix_rows() {
        let c = parse("[problem]\nmatrix = 1, 0 | 0, 1\n").unwrap();
        assert_eq!(
            c.get_matrix("problem", "matrix").unwrap().unwrap(),
            vec![vec![1.0, 0.0], vec![0.0, 1.0]]
        );
        let c = parse("[problem]\nmatrix = 1, x\n").unwrap();
        assert!(c.get_matrix("problem", "matrix").is_err());
    }

    #[test]
    fn missing_file() {
        let err = Config::load(Path::new("/definitely/not/here.ini")).unwrap_err();
        assert!(err.message.contains("cannot read"));
    }
}
