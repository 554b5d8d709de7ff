//! `key = value` configuration files with optional `[section]` headers.
//!
//! Keys before the first header apply to every subcommand; a section named
//! after the subcommand overrides them. `#` and `;` start comments.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    /// Line in the config file; `None` for command-line values.
    line: Option<usize>,
    /// Set before any section header, so possibly meant for another command.
    global: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    global: BTreeMap<String, Entry>,
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split(['#', ';']).next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| CliError::Config {
                    line: Some(line),
                    field: None,
                    message: format!("malformed section header '{content}'"),
                })?;
                let name = name.trim();
                if !crate::COMMANDS.contains(&name) {
                    return Err(CliError::Config {
                        line: Some(line),
                        field: None,
                        message: format!("unknown section [{name}]"),
                    });
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| CliError::Config {
                line: Some(line),
                field: None,
                message: format!("expected key = value, got '{content}'"),
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(CliError::Config {
                    line: Some(line),
                    field: None,
                    message: "empty key".into(),
                });
            }
            let entry = Entry {
                value: value.trim().to_string(),
                line: Some(line),
                global: section.is_none(),
            };
            let map = match &section {
                Some(s) => cfg.sections.entry(s.clone()).or_default(),
                None => &mut cfg.global,
            };
            if map.insert(key.clone(), entry).is_some() {
                return Err(CliError::Config {
                    line: Some(line),
                    field: Some(key),
                    message: "duplicate key".into(),
                });
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            line: None,
            field: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    /// Settings for one subcommand: globals, then the section, then
    /// command-line overrides.
    pub fn resolve(&self, command: &str, overrides: &[(String, String)]) -> Settings {
        let mut values = self.global.clone();
        if let Some(sec) = self.sections.get(command) {
            values.extend(sec.iter().map(|(k, v)| (k.clone(), v.clone())));
        }
        for (k, v) in overrides {
            values.insert(
                k.clone(),
                Entry {
                    value: v.clone(),
                    line: None,
                    global: false,
                },
            );
        }
        Settings { values }
    }
}

#[derive(Debug, Clone)]
pub struct Settings {
    values: BTreeMap<String, Entry>,
}

impl Settings {
    /// Rejects keys outside `allowed`; global keys only need to be known to
    /// some command.
    pub fn check_keys(&self, allowed: &[&str], known: &[&str]) -> Result<(), CliError> {
        for (k, e) in &self.values {
            let ok = if e.global { known.contains(&k.as_str()) } else { allowed.contains(&k.as_str()) };
            if !ok {
                return Err(CliError::Config {
                    line: e.line,
                    field: Some(k.clone()),
                    message: format!("unknown key (expected one of: {})", allowed.join(", ")),
                });
            }
        }
        Ok(())
    }

    pub fn error(&self, key: &str, message: impl Into<String>) -> CliError {
        CliError::Config {
            line: self.values.get(key).and_then(|e| e.line),
            field: Some(key.to_string()),
            message: message.into(),
        }
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|e| e.value.as_str())
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.str(key).unwrap_or(default)
    }

    pub fn required(&self, key: &str) -> Result<&str, CliError> {
        self.str(key).ok_or_else(|| CliError::Config {
            line: None,
            field: Some(key.to_string()),
            message: "missing required value".into(),
        })
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.str(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| self.error(key, format!("cannot parse '{v}'"))),
        }
    }

    pub fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    /// Comma-separated list; empty when the key is absent.
    pub fn list(&self, key: &str) -> Vec<String> {
        self.str(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        self.list(key)
            .iter()
            .map(|v| v.parse().map_err(|_| self.error(key, format!("cannot parse '{v}' as a number"))))
            .collect()
    }

    /// Applies a fallible constructor, attributing its error to `key`.
    pub fn build<T, E: std::fmt::Display>(
        &self,
        key: &str,
        value: &str,
        f: impl FnOnce(&str) -> Result<T, E>,
    ) -> Result<T, CliError> {
        f(value).map_err(|e| self.error(key, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "\
# experiment
target = normal1d
speed = unit   ; default speed

[sample]
speed = poly:0.5
switches = 10
";

    #[test]
    fn sections_override_globals() {
        let cfg = ConfigFile::parse(TEXT).unwrap();
        let s = cfg.resolve("sample", &[]);
        assert_eq!(s.str("speed"), Some("poly:0.5"));
        assert_eq!(s.str("target"), Some("normal1d"));
        assert_eq!(cfg.resolve("efficiency", &[]).str("speed"), Some("unit"));
        let s = cfg.resolve("sample", &[("speed".into(), "poly:0".into())]);
        assert_eq!(s.str("speed"), Some("poly:0"));
    }

    #[test]
    fn errors_carry_line_and_field() {
        let err = ConfigFile::parse("a = 1\nnonsense\n").unwrap_err();
        assert!(matches!(err, CliError::Config { line: Some(2), .. }));
        let err = ConfigFile::parse("[bogus]\n").unwrap_err();
        assert!(err.to_string().contains("line 1"));
        let err = ConfigFile::parse("a = 1\na = 2\n").unwrap_err();
        assert!(matches!(err, CliError::Config { line: Some(2), field: Some(ref f), .. } if f == "a"));

        let cfg = ConfigFile::parse(TEXT).unwrap();
        let s = cfg.resolve("sample", &[]);
        let err = s.parse::<f64>("target").unwrap_err();
        assert!(matches!(err, CliError::Config { line: Some(2), .. }));
        let err = s.check_keys(&["target", "speed"], &["target", "speed"]).unwrap_err();
        assert!(err.to_string().contains("switches"));
        let cfg = ConfigFile::parse("switches = 5\n[efficiency]\ntarget = normal1d\n").unwrap();
        let s = cfg.resolve("efficiency", &[]);
        assert!(s.check_keys(&["target"], &["target", "switches"]).is_ok());
        assert!(s.check_keys(&["target"], &["target"]).is_err());
    }

    #[test]
    fn lists() {
        let cfg = ConfigFile::parse("speeds = unit, poly:0 ,poly:0.5\nls = 1, 2.5\n").unwrap();
        let s = cfg.resolve("compare", &[]);
        assert_eq!(s.list("speeds"), vec!["unit", "poly:0", "poly:0.5"]);
        assert_eq!(s.f64_list("ls").unwrap(), vec![1.0, 2.5]);
        assert!(s.list("missing").is_empty());
    }
}
