//! INI-style configuration: `[section]` headers and `key = value` lines, with every value
//! remembering its line so that diagnostics can point at it.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// A configuration problem anchored to a line of the source.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub source: String,
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.source)?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
        }
        if let Some(key) = &self.key {
            write!(f, ": {key}")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub value: String,
    pub line: usize,
}

/// Parsed file: `section -> key -> entry`, in sorted order.
#[derive(Clone, Debug, Default)]
pub struct Ini {
    pub source: String,
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
    section_lines: BTreeMap<String, usize>,
}

fn strip_comment(line: &str) -> &str {
    let trimmed = line.trim();
    if trimmed.starts_with('#') || trimmed.starts_with(';') {
        return "";
    }
    match trimmed.find(" #").or_else(|| trimmed.find(" ;")) {
        Some(i) => trimmed[..i].trim_end(),
        None => trimmed,
    }
}

impl Ini {
    pub fn parse(source: &str, text: &str) -> Result<Self, ConfigError> {
        let mut ini = Ini { source: source.to_string(), ..Default::default() };
        let mut current: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = strip_comment(raw);
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .map(str::trim)
                    .filter(|n| !n.is_empty())
                    .ok_or_else(|| ini.error(Some(line_no), None, format!("malformed section header `{line}`")))?;
                if ini.sections.contains_key(name) {
                    return Err(ini.error(Some(line_no), None, format!("duplicate section [{name}]")));
                }
                ini.sections.insert(name.to_string(), BTreeMap::new());
                ini.section_lines.insert(name.to_string(), line_no);
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ini.error(Some(line_no), None, format!("expected `key = value`, found `{line}`")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ini.error(Some(line_no), None, "empty key".into()));
            }
            let section = current
                .clone()
                .ok_or_else(|| ini.error(Some(line_no), Some(key), "key outside of any [section]".into()))?;
            let full = format!("{section}.{key}");
            let entries = ini.sections.get_mut(&section).expect("section inserted on header");
            if entries.contains_key(key) {
                return Err(ini.error(Some(line_no), Some(&full), "duplicate key".into()));
            }
            entries.insert(key.to_string(), Entry { value: value.trim().to_string(), line: line_no });
        }
        Ok(ini)
    }

    pub fn error(&self, line: Option<usize>, key: Option<&str>, message: String) -> ConfigError {
        ConfigError { source: self.source.clone(), line, key: key.map(str::to_string), message }
    }

    /// Error anchored at `section.key` (or at the section header if the key is absent).
    pub fn error_at(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        let line = self.entry(section, key).map(|e| e.line).or_else(|| self.section_lines.get(section).copied());
        self.error(line, Some(&format!("{section}.{key}")), message.into())
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    pub fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section)?.get(key)
    }

    pub fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.entry(section, key).map(|e| e.value.as_str())
    }

    pub fn required(&self, section: &str, key: &str) -> Result<&str, ConfigError> {
        self.raw(section, key).ok_or_else(|| self.error_at(section, key, "missing required key"))
    }

    pub fn parse_value<T: FromStr>(&self, section: &str, key: &str, text: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        text.parse::<T>().map_err(|e| self.error_at(section, key, format!("cannot parse `{text}`: {e}")))
    }

    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.raw(section, key).map(|v| self.parse_value(section, key, v)).transpose()
    }

    pub fn get_or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(section, key)?.unwrap_or(default))
    }

    /// Comma-separated list; `a..b` expands to the integers `a` through `b` when `T` is an integer.
    pub fn list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let Some(raw) = self.raw(section, key) else { return Ok(None) };
        let mut out = Vec::new();
        for item in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            if let Some((a, b)) = item.split_once("..") {
                let a: i64 = self.parse_value(section, key, a.trim())?;
                let b: i64 = self.parse_value(section, key, b.trim())?;
                if b < a {
                    return Err(self.error_at(section, key, format!("empty range `{item}`")));
                }
                for v in a..=b {
                    out.push(self.parse_value(section, key, &v.to_string())?);
                }
            } else {
                out.push(self.parse_value(section, key, item)?);
            }
        }
        if out.is_empty() {
            return Err(self.error_at(section, key, "empty list"));
        }
        Ok(Some(out))
    }

    /// Rejects sections and keys outside the allowed sets.
    pub fn check_known(&self, allowed: &[(&str, &[&str])]) -> Result<(), ConfigError> {
        for (section, entries) in &self.sections {
            let Some((_, keys)) = allowed.iter().find(|(s, _)| s == section) else {
                return Err(self.error(self.section_lines.get(section).copied(), None, format!("unknown section [{section}]")));
            };
            for (key, entry) in entries {
                if !keys.contains(&key.as_str()) {
                    return Err(self.error(Some(entry.line), Some(&format!("{section}.{key}")), "unknown key".into()));
                }
            }
        }
        Ok(())
    }

    /// All entries as `section.key = value` pairs.
    pub fn flatten(&self) -> Vec<(String, String)> {
        self.sections
            .iter()
            .flat_map(|(s, entries)| entries.iter().map(move |(k, e)| (format!("{s}.{k}"), e.value.clone())))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "# comment\n[grid]\nn_cells = 21  # cells\nw_min = -1\n\n[uq]\nnodes = 2..4, 8\n";

    #[test]
    fn parses_sections_keys_and_lists() {
        let ini = Ini::parse("t.ini", TEXT).unwrap();
        assert_eq!(ini.get::<usize>("grid", "n_cells").unwrap(), Some(21));
        assert_eq!(ini.get::<f64>("grid", "w_min").unwrap(), Some(-1.0));
        assert_eq!(ini.list::<usize>("uq", "nodes").unwrap(), Some(vec![2, 3, 4, 8]));
        assert_eq!(ini.entry("uq", "nodes").unwrap().line, 7);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let ini = Ini::parse("t.ini", TEXT).unwrap();
        let e = ini.get::<usize>("grid", "w_min").unwrap_err();
        assert_eq!(e.line, Some(4));
        assert!(e.to_string().starts_with("t.ini:4: grid.w_min:"));
        let e = Ini::parse("t.ini", "[a]\nnot a pair\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        let e = Ini::parse("t.ini", "k = 1\n").unwrap_err();
        assert_eq!(e.line, Some(1));
        let e = Ini::parse("t.ini", "[a]\nk = 1\nk = 2\n").unwrap_err();
        assert_eq!(e.line, Some(3));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let ini = Ini::parse("t.ini", TEXT).unwrap();
        assert!(ini.check_known(&[("grid", &["n_cells", "w_min"]), ("uq", &["nodes"])]).is_ok());
        let e = ini.check_known(&[("grid", &["n_cells"]), ("uq", &["nodes"])]).unwrap_err();
        assert_eq!(e.line, Some(4));
    }
}
