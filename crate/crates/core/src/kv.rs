//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys may repeat only
//! once; a second occurrence is an error.

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KvError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("key {key:?}: cannot parse {value:?}")]
    BadValue { key: String, value: String },
    #[error("key {key:?}: {message}")]
    Invalid { key: String, message: String },
}

/// Parsed key/value pairs that are consumed as they are read, so leftovers
/// can be reported as unknown.
#[derive(Debug, Clone, Default)]
pub struct KvMap {
    values: BTreeMap<String, String>,
}

impl KvMap {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| KvError::Syntax {
                line: i + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(KvError::Syntax { line: i + 1, message: "empty key".into() });
            }
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(KvError::Syntax { line: i + 1, message: format!("duplicate key {key:?}") });
            }
        }
        Ok(Self { values })
    }

    pub fn insert(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    /// Removes and parses `key`, leaving `target` untouched when absent.
    pub fn take<T: FromStr>(&mut self, key: &str, target: &mut T) -> Result<(), KvError> {
        if let Some(v) = self.values.remove(key) {
            *target = v.parse().map_err(|_| KvError::BadValue { key: key.to_string(), value: v })?;
        }
        Ok(())
    }

    /// Like [`take`](Self::take) for comma-separated lists.
    pub fn take_list<T: FromStr>(&mut self, key: &str, target: &mut Vec<T>) -> Result<(), KvError> {
        if let Some(v) = self.values.remove(key) {
            *target = v
                .split(',')
                .map(|p| p.trim().parse().map_err(|_| KvError::BadValue { key: key.to_string(), value: v.clone() }))
                .collect::<Result<_, _>>()?;
        }
        Ok(())
    }

    /// Splits off every `prefix.`-qualified key, prefix removed.
    pub fn section(&mut self, prefix: &str) -> KvMap {
        let p = format!("{prefix}.");
        let keys: Vec<String> = self.values.keys().filter(|k| k.starts_with(&p)).cloned().collect();
        let mut out = KvMap::default();
        for k in keys {
            let v = self.values.remove(&k).unwrap();
            out.values.insert(k[p.len()..].to_string(), v);
        }
        out
    }

    /// Errors on the first key nobody consumed.
    pub fn finish(self) -> Result<(), KvError> {
        match self.values.into_keys().next() {
            Some(k) => Err(KvError::UnknownKey(k)),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_take_finish() {
        let mut kv = KvMap::parse("# comment\n a = 3\nb=0.5\n\nsynth.n = 2\nks = 3, 5,10\n").unwrap();
        let mut a = 0usize;
        let mut b = 0.0f64;
        let mut c = 7i32;
        let mut ks: Vec<usize> = vec![];
        kv.take("a", &mut a).unwrap();
        kv.take("b", &mut b).unwrap();
        kv.take("c", &mut c).unwrap();
        kv.take_list("ks", &mut ks).unwrap();
        assert_eq!((a, b, c), (3, 0.5, 7));
        assert_eq!(ks, vec![3, 5, 10]);
        let mut synth = kv.section("synth");
        let mut n = 0usize;
        synth.take("n", &mut n).unwrap();
        assert_eq!(n, 2);
        synth.finish().unwrap();
        kv.finish().unwrap();
    }

    #[test]
    fn errors() {
        assert!(matches!(KvMap::parse("novalue"), Err(KvError::Syntax { line: 1, .. })));
        assert!(matches!(KvMap::parse("a=1\na=2"), Err(KvError::Syntax { line: 2, .. })));
        let mut kv = KvMap::parse("a = x\nzzz = 1").unwrap();
        let mut a = 0u32;
        assert!(matches!(kv.take("a", &mut a), Err(KvError::BadValue { .. })));
        assert_eq!(kv.finish(), Err(KvError::UnknownKey("zzz".into())));
    }
}
