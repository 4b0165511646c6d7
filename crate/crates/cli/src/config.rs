//! Flat `key=value` run configuration, merged from a file and `--key value`
//! flags, with typed accessors that fail with the offending key named.

use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Parse {
        source: String,
        line: usize,
        col: usize,
        msg: String,
    },
    Validation(String),
    Compute(thinprime::Error),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Validation(_) => 2,
            CliError::Compute(_) | CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse { source, line, col, msg } => write!(f, "{source}:{line}:{col}: {msg}"),
            CliError::Validation(m) => write!(f, "invalid configuration: {m}"),
            CliError::Compute(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<thinprime::Error> for CliError {
    fn from(e: thinprime::Error) -> Self {
        CliError::Compute(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

/// Turns a core error raised while checking preconditions into a
/// validation failure.
pub fn invalid(e: thinprime::Error) -> CliError {
    CliError::Validation(e.to_string())
}

/// Parses `key=value` lines. Blank lines and lines starting with `#` are
/// skipped; keys rejected by `known` are reported with their position.
pub fn parse_config_text(
    text: &str,
    source: &str,
    known: &dyn Fn(&str) -> bool,
) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let trimmed = raw.trim_start();
        let col = raw.len() - trimmed.len() + 1;
        let line = trimmed.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |col: usize, msg: String| CliError::Parse {
            source: source.to_string(),
            line: i + 1,
            col,
            msg,
        };
        let Some((k, v)) = line.split_once('=') else {
            return Err(err(col, format!("expected key=value, got '{line}'")));
        };
        let key = k.trim();
        if key.is_empty() {
            return Err(err(col, "empty key".into()));
        }
        if !known(key) {
            return Err(err(col, format!("unknown key '{key}'")));
        }
        let value = v.trim();
        if value.is_empty() {
            let vcol = col + k.len() + 1;
            return Err(err(vcol, format!("empty value for '{key}'")));
        }
        out.push((key.to_string(), value.to_string()));
    }
    Ok(out)
}

/// Resolved settings for one subcommand: every key it accepts, with
/// defaults filled in where one exists.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn str(&self, key: &str) -> Result<&str, CliError> {
        self.values
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| CliError::Validation(format!("missing required key '{key}'")))
    }

    pub fn opt_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn f64(&self, key: &str) -> Result<f64, CliError> {
        parse_f64(key, self.str(key)?)
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        self.opt_str(key).map(|v| parse_f64(key, v)).transpose()
    }

    pub fn u64(&self, key: &str) -> Result<u64, CliError> {
        parse_u64(key, self.str(key)?)
    }

    pub fn opt_u64(&self, key: &str) -> Result<Option<u64>, CliError> {
        self.opt_str(key).map(|v| parse_u64(key, v)).transpose()
    }

    pub fn i64(&self, key: &str) -> Result<i64, CliError> {
        let v = self.str(key)?;
        v.parse()
            .map_err(|_| CliError::Validation(format!("{key}: '{v}' is not an integer")))
    }

    pub fn bool(&self, key: &str) -> Result<bool, CliError> {
        match self.str(key)? {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            v => Err(CliError::Validation(format!("{key}: '{v}' is not a boolean"))),
        }
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        self.str(key)?.split(',').map(|t| parse_f64(key, t.trim())).collect()
    }

    pub fn u64_list(&self, key: &str) -> Result<Vec<u64>, CliError> {
        self.str(key)?.split(',').map(|t| parse_u64(key, t.trim())).collect()
    }

    /// `key=value` lines, sorted by key.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

pub fn parse_f64(key: &str, v: &str) -> Result<f64, CliError> {
    let x: f64 = match v {
        "inf" | "infinity" => f64::INFINITY,
        _ => v
            .parse()
            .map_err(|_| CliError::Validation(format!("{key}: '{v}' is not a number")))?,
    };
    if x.is_nan() {
        return Err(CliError::Validation(format!("{key}: NaN")));
    }
    Ok(x)
}

/// Accepts plain integers and exact scientific forms such as `1e6`.
pub fn parse_u64(key: &str, v: &str) -> Result<u64, CliError> {
    if let Ok(n) = v.parse::<u64>() {
        return Ok(n);
    }
    let bad = || CliError::Validation(format!("{key}: '{v}' is not a nonnegative integer"));
    let x: f64 = v.parse().map_err(|_| bad())?;
    if x >= 0.0 && x.fract() == 0.0 && x < 2f64.powi(53) {
        Ok(x as u64)
    } else {
        Err(bad())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn any(_: &str) -> bool {
        true
    }

    #[test]
    fn minimal_text() {
        let kv = parse_config_text("gamma=1.0\nW=0,1\nN=1024", "cfg", &any).unwrap();
        assert_eq!(kv[1], ("W".to_string(), "0,1".to_string()));
        assert_eq!(kv.len(), 3);
    }

    #[test]
    fn comments_and_blank_lines() {
        let kv = parse_config_text("# header\n\n  N = 10  \n", "cfg", &any).unwrap();
        assert_eq!(kv, vec![("N".to_string(), "10".to_string())]);
    }

    #[test]
    fn unknown_key_position() {
        let known = |k: &str| k == "N";
        match parse_config_text("N=3\n   bogus=1\n", "run.cfg", &known) {
            Err(CliError::Parse { line, col, source, .. }) => {
                assert_eq!((line, col), (2, 4));
                assert_eq!(source, "run.cfg");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_config_text("N\n", "c", &any),
            Err(CliError::Parse { line: 1, col: 1, .. })
        ));
        assert!(matches!(
            parse_config_text("N=\n", "c", &any),
            Err(CliError::Parse { line: 1, col: 3, .. })
        ));
    }

    #[test]
    fn integer_forms() {
        assert_eq!(parse_u64("N", "1e6").unwrap(), 1_000_000);
        assert_eq!(parse_u64("N", "65536").unwrap(), 65536);
        assert!(parse_u64("N", "1.5").is_err());
        assert!(parse_u64("N", "-3").is_err());
    }
}
