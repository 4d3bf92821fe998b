//! Effective run configuration: built-in defaults, overlaid by an optional
//! key=value config file, overlaid by command-line flags (flags win). The
//! canonical sorted form is hashed into every artifact a stage writes.

use scenecast::seeds;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Every key the pipeline understands, with its default value. Keys absent
/// here are rejected when read from a config file, which catches typos
/// before they silently fall back to defaults.
const DEFAULTS: &[(&str, &str)] = &[
    // paths
    ("venues", ""),
    ("reviews", ""),
    ("users", ""),
    ("census", ""),
    ("codebook", ""),
    ("boundary", ""),
    ("out", "out"),
    // comma-separated artifact files for `evaluate` (empty = <out>/artifacts.json)
    ("artifacts", ""),
    // per-run results file for `report` (empty = <out>/results.csv)
    ("results", ""),
    // study window and venue filter
    ("city", "city"),
    ("year_start", "2011"),
    ("year_end", "2018"),
    ("min_venues", "30"),
    // reviewer profiling
    ("topics_range", "1:30"),
    ("k_range", "2:15"),
    ("gibbs_iters", "1000"),
    ("top_n", "10"),
    // training and evaluation protocol
    ("test_years", "2016,2017,2018"),
    ("reps", "25"),
    ("epochs", "10000"),
    ("hidden", "64"),
    ("dropout", "0.1"),
    ("lr", "0.001"),
    ("cv_folds", "5"),
    ("models", "all"),
    ("seed", "0"),
    // synthetic-city generation
    ("mode", "area_driven"),
    ("n_fsas", "8"),
    ("n_users", "60"),
    ("n_groups", "3"),
    ("noise", "0.05"),
    ("drift", "0.08"),
    ("venues_per_fsa_year", "4"),
];

/// String-keyed configuration with typed accessors.
#[derive(Debug, Clone)]
pub struct RunConfig {
    entries: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn defaults() -> RunConfig {
        RunConfig {
            entries: DEFAULTS
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    /// Overlay `key = value` lines from a file. Blank lines and lines
    /// starting with `#` are ignored; unknown keys are errors.
    pub fn load_file(&mut self, path: &Path) -> Result<(), String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config file {}: {e}", path.display()))?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!(
                    "{}:{}: expected `key = value`, got `{line}`",
                    path.display(),
                    lineno + 1
                ));
            };
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        if !self.entries.contains_key(key) {
            return Err(format!("unknown config key `{key}`"));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.entries
            .get(key)
            .unwrap_or_else(|| panic!("config key `{key}` has no default"))
    }

    pub fn get_i32(&self, key: &str) -> Result<i32, String> {
        self.get(key)
            .parse()
            .map_err(|_| format!("config key `{key}`: `{}` is not an integer", self.get(key)))
    }

    pub fn get_u64(&self, key: &str) -> Result<u64, String> {
        self.get(key)
            .parse()
            .map_err(|_| format!("config key `{key}`: `{}` is not an integer", self.get(key)))
    }

    pub fn get_usize(&self, key: &str) -> Result<usize, String> {
        self.get(key)
            .parse()
            .map_err(|_| format!("config key `{key}`: `{}` is not an integer", self.get(key)))
    }

    pub fn get_f64(&self, key: &str) -> Result<f64, String> {
        self.get(key)
            .parse()
            .map_err(|_| format!("config key `{key}`: `{}` is not a number", self.get(key)))
    }

    /// Parse `LO:HI` into an inclusive range.
    pub fn get_range(&self, key: &str) -> Result<(usize, usize), String> {
        let raw = self.get(key);
        let err = || format!("config key `{key}`: `{raw}` is not of the form LO:HI");
        let (lo, hi) = raw.split_once(':').ok_or_else(err)?;
        let lo: usize = lo.trim().parse().map_err(|_| err())?;
        let hi: usize = hi.trim().parse().map_err(|_| err())?;
        if lo > hi {
            return Err(format!("config key `{key}`: empty range {lo}:{hi}"));
        }
        Ok((lo, hi))
    }

    /// Parse a comma-separated list of years.
    pub fn get_years(&self, key: &str) -> Result<Vec<i32>, String> {
        let raw = self.get(key);
        let years: Result<Vec<i32>, _> = raw.split(',').map(|y| y.trim().parse()).collect();
        let years =
            years.map_err(|_| format!("config key `{key}`: `{raw}` is not a year list"))?;
        if years.is_empty() {
            return Err(format!("config key `{key}` is empty"));
        }
        Ok(years)
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.get("out"))
    }

    /// A path-valued key, defaulting to `<out>/<default_name>` when unset.
    pub fn path_or_out(&self, key: &str, default_name: &str) -> PathBuf {
        let raw = self.get(key);
        if raw.is_empty() {
            self.out_dir().join(default_name)
        } else {
            PathBuf::from(raw)
        }
    }

    /// A path-valued key that must be set explicitly.
    pub fn require_path(&self, key: &str) -> Result<PathBuf, String> {
        let raw = self.get(key);
        if raw.is_empty() {
            Err(format!(
                "missing required input: set `{key}` in the config file or pass --{}",
                key.replace('_', "-")
            ))
        } else {
            Ok(PathBuf::from(raw))
        }
    }

    /// Sorted `key=value` lines covering every effective setting.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    /// Hash of the canonical form; embedded in every artifact.
    pub fn hash(&self) -> String {
        seeds::digest_hex(&self.canonical())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn defaults_parse_and_hash_is_stable() {
        let cfg = RunConfig::defaults();
        assert_eq!(cfg.get_i32("year_start").unwrap(), 2011);
        assert_eq!(cfg.get_range("topics_range").unwrap(), (1, 30));
        assert_eq!(cfg.get_range("k_range").unwrap(), (2, 15));
        assert_eq!(cfg.get_years("test_years").unwrap(), vec![2016, 2017, 2018]);
        assert_eq!(cfg.hash(), RunConfig::defaults().hash());
        assert_eq!(cfg.hash().len(), 32);
    }

    #[test]
    fn file_overlay_then_flag_override() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "# comment\n\nseed = 9\ncity = riverton").unwrap();
        let mut cfg = RunConfig::defaults();
        cfg.load_file(file.path()).unwrap();
        assert_eq!(cfg.get_u64("seed").unwrap(), 9);
        assert_eq!(cfg.get("city"), "riverton");
        let base_hash = cfg.hash();
        cfg.set("seed", "10").unwrap();
        assert_eq!(cfg.get_u64("seed").unwrap(), 10);
        assert_ne!(cfg.hash(), base_hash);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "sedd = 9").unwrap();
        let mut cfg = RunConfig::defaults();
        let err = cfg.load_file(file.path()).unwrap_err();
        assert!(err.contains("unknown config key"), "{err}");
    }

    #[test]
    fn malformed_values_are_reported_with_key() {
        let mut cfg = RunConfig::defaults();
        cfg.set("epochs", "ten").unwrap();
        assert!(cfg.get_usize("epochs").unwrap_err().contains("epochs"));
        cfg.set("topics_range", "30:1").unwrap();
        assert!(cfg.get_range("topics_range").is_err());
    }
}
