//! Output files: provenance headers, the overwrite guard and writers.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::RunConfig;

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Marks an error as a broken internal invariant (exit code 3).
#[derive(Debug)]
pub struct Internal(pub String);

impl fmt::Display for Internal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "internal invariant violated: {}", self.0)
    }
}

impl std::error::Error for Internal {}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub name: String,
    /// FNV-1a 64 of the file bytes, hex
    pub fnv1a64: String,
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub struct Ctx {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub force: bool,
    pub deterministic: bool,
    pub command: String,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<InputDigest>,
}

impl Ctx {
    pub fn new(cfg: RunConfig, out: PathBuf, force: bool, deterministic: bool, command: &str) -> Self {
        let mut seeds = BTreeMap::new();
        seeds.insert("seed".to_string(), cfg.seed);
        Self { cfg, out, force, deterministic, command: command.to_string(), seeds, inputs: Vec::new() }
    }

    pub fn seed(&self) -> u64 {
        self.cfg.seed
    }

    /// Records an additional seed (e.g. a spec file's own seed).
    pub fn add_seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    /// Reads an input file and records its digest for provenance.
    pub fn read_input(&mut self, path: &Path) -> anyhow::Result<String> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(InputDigest {
            name: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            fnv1a64: format!("{:016x}", fnv1a64(text.as_bytes())),
        });
        Ok(text)
    }

    pub fn provenance(&self) -> Value {
        json!({
            "tool": TOOL,
            "version": VERSION,
            "command": self.command,
            "config": self.cfg,
            "seeds": self.seeds,
            "inputs": self.inputs,
        })
    }

    /// `key: value` lines for CSV/text/PBM headers.
    pub fn header_lines(&self) -> Vec<(String, String)> {
        vec![
            ("tool".into(), format!("{TOOL} {VERSION}")),
            ("command".into(), self.command.clone()),
            ("config".into(), serde_json::to_string(&self.cfg).expect("config serializes")),
            ("seeds".into(), serde_json::to_string(&self.seeds).expect("seeds serialize")),
            ("inputs".into(), serde_json::to_string(&self.inputs).expect("inputs serialize")),
        ]
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Fails before anything is written if an output exists and `--force`
    /// was not given.
    pub fn claim(&self, names: &[&str]) -> anyhow::Result<()> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        if self.force {
            return Ok(());
        }
        for n in names {
            let p = self.path(n);
            if p.exists() {
                bail!("{} exists; pass --force to overwrite", p.display());
            }
        }
        Ok(())
    }

    fn write(&self, name: &str, body: &str) -> anyhow::Result<PathBuf> {
        let p = self.path(name);
        std::fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
        log::info!("wrote {}", p.display());
        Ok(p)
    }

    /// Writes `{"provenance": ..., <fields of body>}` as pretty JSON.
    pub fn write_json(&self, name: &str, body: &impl Serialize) -> anyhow::Result<PathBuf> {
        let mut doc = Map::new();
        doc.insert("provenance".into(), self.provenance());
        match serde_json::to_value(body)? {
            Value::Object(m) => doc.extend(m),
            other => {
                doc.insert("data".into(), other);
            }
        }
        let mut text = serde_json::to_string_pretty(&Value::Object(doc))?;
        text.push('\n');
        self.write(name, &text)
    }

    /// Text with `# key: value` header lines.
    pub fn write_text(&self, name: &str, body: &str) -> anyhow::Result<PathBuf> {
        let mut text = String::new();
        for (k, v) in self.header_lines() {
            text.push_str(&format!("# {k}: {v}\n"));
        }
        text.push_str(body);
        self.write(name, &text)
    }

    /// Already-formatted content (CSV/SVG/PBM) that carries its own header.
    pub fn write_raw(&self, name: &str, body: &str) -> anyhow::Result<PathBuf> {
        self.write(name, body)
    }

    /// Wall-clock minutes, or 0 under `--deterministic`.
    pub fn minutes(&self, m: f64) -> f64 {
        if self.deterministic {
            0.0
        } else {
            m
        }
    }
}
