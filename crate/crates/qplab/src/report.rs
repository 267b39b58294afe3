//! Deterministic run outputs: CSV tables (17-significant-digit floats,
//! '.' decimal separator, one header line) and JSON summaries, each
//! stamped with the configuration hash. Bodies are byte-identical across
//! reruns of the same configuration and seed; the only volatile line is
//! the designated `# generated-unix=` comment.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::Result;

/// 17 significant digits: enough to reproduce any f64 bit pattern.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_path: String,
    pub config_hash: String,
    pub overrides: Vec<String>,
    pub seed: u64,
    pub out_dir: String,
    pub generated_unix: u64,
}

impl RunManifest {
    pub fn new(
        subcommand: &str,
        config_path: &Path,
        config_hash: &str,
        overrides: &[String],
        seed: u64,
        out_dir: &Path,
    ) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            config_path: config_path.display().to_string(),
            config_hash: config_hash.to_string(),
            overrides: overrides.to_vec(),
            seed,
            out_dir: out_dir.display().to_string(),
            generated_unix: now_unix(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("manifest.json");
        let mut file = std::fs::File::create(&path)?;
        file.write_all(serde_json::to_string_pretty(self).unwrap().as_bytes())?;
        file.write_all(b"\n")?;
        Ok(path)
    }
}

pub fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Writes a CSV file: hash comment, volatile timestamp comment, header,
/// then rows.
pub fn write_csv(
    path: &Path,
    config_hash: &str,
    seed: u64,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut out = String::new();
    out.push_str(&format!("# config={config_hash} seed={seed}\n"));
    out.push_str(&format!("# generated-unix={}\n", now_unix()));
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes a JSON summary {config_hash, seed, experiment, metrics}.
pub fn write_json_summary(
    path: &Path,
    config_hash: &str,
    seed: u64,
    experiment: &str,
    metrics: serde_json::Value,
) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let doc = serde_json::json!({
        "experiment": experiment,
        "config_hash": config_hash,
        "seed": seed,
        "metrics": metrics,
    });
    let mut text = serde_json::to_string_pretty(&doc).unwrap();
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// CSV body with comment lines stripped: the byte-determinism contract
/// covers exactly this.
pub fn csv_body(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_round_trips() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 2.2250738585072014e-308, 12345.678901234567] {
            let s = fmt_float(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, x, "{s} does not round-trip");
            assert!(s.contains('.'));
        }
        assert_eq!(fmt_float(f64::INFINITY), "inf");
        assert_eq!(fmt_float(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn csv_written_with_hash_and_body_extraction() {
        let dir = std::env::temp_dir().join("qplab_report_test");
        let path = dir.join("t.csv");
        write_csv(
            &path,
            "abc123",
            7,
            &["alpha", "value"],
            &[vec!["1".into(), fmt_float(0.5)]],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# config=abc123 seed=7\n"));
        let body = csv_body(&text);
        assert_eq!(body, format!("alpha,value\n1,{}", fmt_float(0.5)));
        std::fs::remove_dir_all(&dir).ok();
    }
}
