use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context as _, Result};
use forkgyro::geometry::DeviceSpec;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Bad flags, unreadable or invalid config. Maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub const BUILTIN_CONFIG: &str = "builtin:device_paper.cfg";

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: String,
    pub config_sha256: String,
    pub overrides: Vec<String>,
    pub seed: u64,
    pub out: String,
}

impl RunManifest {
    pub fn header_lines(&self) -> Vec<String> {
        let overrides = if self.overrides.is_empty() {
            "none".to_string()
        } else {
            self.overrides.join(" ")
        };
        vec![
            format!("{} {}", self.tool, self.version),
            format!("command: {}", self.command),
            format!("config: {}", self.config),
            format!("config_sha256: {}", self.config_sha256),
            format!("overrides: {overrides}"),
            format!("seed: {}", self.seed),
            format!("out: {}", self.out),
        ]
    }
}

/// Loaded config plus where outputs go.
pub struct Run {
    pub spec: DeviceSpec,
    pub manifest: RunManifest,
    pub text: String,
    pub overrides: Vec<(String, String)>,
    pub out: PathBuf,
}

pub fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>> {
    raw.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .filter(|(k, _)| !k.is_empty())
                .ok_or_else(|| usage(format!("override `{s}` is not KEY=VALUE")))
        })
        .collect()
}

/// Hash of the config text followed by each override in order.
pub fn config_hash(text: &str, overrides: &[(String, String)]) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    for (k, v) in overrides {
        h.update(format!("\n{k}={v}").as_bytes());
    }
    hex::encode(h.finalize())
}

pub fn load_spec(text: &str, overrides: &[(String, String)]) -> Result<DeviceSpec> {
    forkgyro::config::load_with_overrides(text, overrides).map_err(|e| usage(format!("config: {e}")))
}

impl Run {
    pub fn new(cli: &crate::Cli, command: String) -> Result<Run> {
        let (label, text) = match &cli.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
                (p.display().to_string(), text)
            }
            None => (BUILTIN_CONFIG.to_string(), forkgyro::REFERENCE_CONFIG.to_string()),
        };
        let overrides = parse_overrides(&cli.overrides)?;
        let mut spec = load_spec(&text, &overrides)?;
        if let Some(seed) = cli.seed {
            spec.seed = seed;
        }
        let manifest = RunManifest {
            tool: "forkgyro",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config: label,
            config_sha256: config_hash(&text, &overrides),
            overrides: overrides.iter().map(|(k, v)| format!("{k}={v}")).collect(),
            seed: spec.seed,
            out: cli.out.display().to_string(),
        };
        fs::create_dir_all(&cli.out).map_err(|e| usage(format!("cannot create {}: {e}", cli.out.display())))?;
        Ok(Run {
            spec,
            manifest,
            text,
            overrides,
            out: cli.out.clone(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create(&self, name: &str) -> Result<BufWriter<fs::File>> {
        let p = self.path(name);
        let f = fs::File::create(&p).with_context(|| format!("cannot write {}", p.display()))?;
        Ok(BufWriter::new(f))
    }

    /// CSV with the manifest as `#` comment lines, then the column header.
    pub fn write_csv(&self, name: &str, columns: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<PathBuf> {
        let mut w = self.create(name)?;
        for line in self.manifest.header_lines() {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "{}", columns.join(","))?;
        for row in rows {
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()?;
        Ok(self.path(name))
    }

    /// JSON object whose first member is the manifest.
    pub fn write_json<T: Serialize>(&self, name: &str, payload: &T) -> Result<PathBuf> {
        #[derive(Serialize)]
        struct Doc<'a, T> {
            manifest: &'a RunManifest,
            #[serde(flatten)]
            payload: &'a T,
        }
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(
            &mut w,
            &Doc {
                manifest: &self.manifest,
                payload,
            },
        )?;
        writeln!(w)?;
        w.flush()?;
        Ok(self.path(name))
    }

    pub fn create_raw(&self, name: &str) -> Result<BufWriter<fs::File>> {
        self.create(name)
    }
}

/// Nine significant digits, scientific notation.
pub fn sci(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn nums(row: &[f64]) -> Vec<String> {
    row.iter().map(|&v| sci(v)).collect()
}

pub fn announce(paths: &[PathBuf]) {
    for p in paths {
        say!("wrote {}", p.display());
    }
}
