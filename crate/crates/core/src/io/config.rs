use super::IoError;
use std::fmt::Display;
use std::str::FromStr;

/// Flat `key = value` text with `#` comments. Key order is preserved.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut kv = KeyValues::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| IoError::Format(format!("line {}: expected 'key = value'", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(IoError::Format(format!("line {}: empty key", n + 1)));
            }
            if kv.get(k).is_some() {
                return Err(IoError::Format(format!("line {}: duplicate key '{k}'", n + 1)));
            }
            kv.entries.push((k.to_string(), v.to_string()));
        }
        Ok(kv)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::at(path, e.into()))?;
        Self::parse(&text).map_err(|e| IoError::at(path, e))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    /// Parses `key` if present.
    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<Option<T>, IoError>
    where
        T::Err: Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| IoError::Format(format!("key '{key}': cannot parse '{v}': {e}"))))
            .transpose()
    }

    /// Errors on the first key not in `allowed`.
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<(), IoError> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(IoError::Format(format!("unknown key '{k}'"))),
            None => Ok(()),
        }
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_round_trip() {
        let kv = KeyValues::parse("# comment\na = 1\n  b=two words # trailing\n\n").unwrap();
        assert_eq!(kv.get("a"), Some("1"));
        assert_eq!(kv.get("b"), Some("two words"));
        assert_eq!(kv.parse_value::<u32>("a").unwrap(), Some(1));
        assert!(kv.parse_value::<u32>("b").is_err());
        assert_eq!(KeyValues::parse(&kv.to_text()).unwrap(), kv);
        assert!(kv.reject_unknown(&["a"]).is_err());
    }

    #[test]
    fn malformed() {
        assert!(KeyValues::parse("novalue").is_err());
        assert!(KeyValues::parse("a=1\na=2").is_err());
        assert!(KeyValues::parse("=1").is_err());
    }
}
