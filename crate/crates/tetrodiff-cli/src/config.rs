//! key=value config files. Flags always win; the file only fills gaps.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

#[derive(Debug, Default)]
pub struct ConfigFile {
    entries: HashMap<String, (usize, String)>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut entries = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("config line {}: expected key=value, got {raw:?}", i + 1);
            };
            let key = key.trim().to_string();
            if entries.contains_key(&key) {
                bail!("config line {}: duplicate key {key:?}", i + 1);
            }
            entries.insert(key, (i + 1, value.trim().to_string()));
        }
        Ok(ConfigFile { entries })
    }

    pub fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        for (key, (line, _)) in &self.entries {
            if !known.contains(&key.as_str()) {
                bail!("config line {line}: unknown key {key:?}");
            }
        }
        Ok(())
    }

    pub fn get_str(&self, key: &str) -> Option<String> {
        self.entries.get(key).map(|(_, v)| v.clone())
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.parse(key)
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        self.parse(key)
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.parse(key)
    }

    pub fn get_bool(&self, key: &str) -> Result<bool> {
        Ok(self.parse::<bool>(key)?.unwrap_or(false))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => match v.parse() {
                Ok(parsed) => Ok(Some(parsed)),
                Err(e) => bail!("config line {line}: bad value for {key:?}: {e}"),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> tempfile_path::TempPath {
        tempfile_path::TempPath::new(content)
    }

    // minimal throwaway file helper, std only
    mod tempfile_path {
        use std::path::PathBuf;

        pub struct TempPath(pub PathBuf);

        impl TempPath {
            pub fn new(content: &str) -> Self {
                let path = std::env::temp_dir().join(format!(
                    "tetrodiff-config-test-{}-{:?}",
                    std::process::id(),
                    std::thread::current().id()
                ));
                std::fs::write(&path, content).unwrap();
                TempPath(path)
            }
        }

        impl Drop for TempPath {
            fn drop(&mut self) {
                let _ = std::fs::remove_file(&self.0);
            }
        }
    }

    #[test]
    fn parses_and_types() {
        let tmp = write_tmp("h0 = 0.5\nseed=7\noptimize = true\nshape = cube\n# comment\n");
        let cfg = ConfigFile::load(Some(&tmp.0)).unwrap();
        assert_eq!(cfg.get_f64("h0").unwrap(), Some(0.5));
        assert_eq!(cfg.get_u64("seed").unwrap(), Some(7));
        assert!(cfg.get_bool("optimize").unwrap());
        assert_eq!(cfg.get_str("shape").as_deref(), Some("cube"));
        assert_eq!(cfg.get_f64("missing").unwrap(), None);
    }

    #[test]
    fn unknown_and_malformed_keys_rejected() {
        let tmp = write_tmp("h0 = 0.5\nbogus = 1\n");
        let cfg = ConfigFile::load(Some(&tmp.0)).unwrap();
        assert!(cfg.reject_unknown(&["h0"]).is_err());
        assert!(cfg.reject_unknown(&["h0", "bogus"]).is_ok());

        let bad = write_tmp("just a line\n");
        assert!(ConfigFile::load(Some(&bad.0)).is_err());
    }

    #[test]
    fn bad_value_reports_line() {
        let tmp = write_tmp("h0 = abc\n");
        let cfg = ConfigFile::load(Some(&tmp.0)).unwrap();
        let err = cfg.get_f64("h0").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }
}
