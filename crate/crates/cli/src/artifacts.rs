//! Stamped on-disk artifacts.
//!
//! Every artifact embeds the hash of the configuration that produced it:
//! JSON payloads are wrapped in `{config_hash, payload}`, CSV bodies get a
//! leading `# config_hash=…` comment, SVG documents a leading XML comment.
//! Wall-clock timestamps live only in the per-stage `.meta.json` sidecars so
//! the data artifacts themselves are byte-reproducible.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub config_hash: String,
    pub payload: T,
}

fn io_err(action: &str, path: &Path, e: impl std::fmt::Display) -> String {
    format!("cannot {action} {}: {e}", path.display())
}

pub fn write_json<T: Serialize>(path: &Path, config_hash: &str, payload: &T) -> Result<(), String> {
    let stamped = Stamped {
        config_hash: config_hash.to_string(),
        payload,
    };
    let text = serde_json::to_string(&stamped).map_err(|e| io_err("encode", path, e))?;
    fs::write(path, text).map_err(|e| io_err("write", path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Stamped<T>, String> {
    let text = fs::read_to_string(path).map_err(|e| io_err("read", path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err("parse", path, e))
}

pub fn write_csv(path: &Path, config_hash: &str, body: &str) -> Result<(), String> {
    let text = format!("# config_hash={config_hash}\n{body}");
    fs::write(path, text).map_err(|e| io_err("write", path, e))
}

/// Data lines of a CSV artifact: comment (`#`) and blank lines skipped,
/// header line included.
pub fn read_csv_lines(path: &Path) -> Result<Vec<String>, String> {
    let text = fs::read_to_string(path).map_err(|e| io_err("read", path, e))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|l| l.to_string())
        .collect())
}

pub fn write_svg(path: &Path, config_hash: &str, body: &str) -> Result<(), String> {
    let text = format!("<!-- config_hash={config_hash} -->\n{body}");
    fs::write(path, text).map_err(|e| io_err("write", path, e))
}

/// `<out>/<stage>.meta.json`: the completion timestamp lives here and only
/// here.
pub fn write_meta(out_dir: &Path, stage: &str, config_hash: &str) -> Result<PathBuf, String> {
    let completed_unix_ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0);
    let path = out_dir.join(format!("{stage}.meta.json"));
    let text = serde_json::json!({
        "stage": stage,
        "config_hash": config_hash,
        "completed_unix_ms": completed_unix_ms,
    })
    .to_string();
    fs::write(&path, text).map_err(|e| io_err("write", &path, e))?;
    Ok(path)
}
