//! Output directory bookkeeping: every artifact goes through [`Outputs`],
//! which records its checksum for `manifest.txt`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Writes `bytes` to `path` through a temporary sibling and a rename, so a
/// crash never leaves a half-written file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

pub struct Outputs {
    dir: PathBuf,
    command: String,
    config_text: String,
    inputs: Vec<(PathBuf, String)>,
    artifacts: Vec<(String, String)>,
}

impl Outputs {
    pub fn create(dir: &Path, command: &str, config_text: String) -> Result<Outputs> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            config_text,
            inputs: Vec::new(),
            artifacts: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let sum = file_sha256(path)?;
        self.inputs.push((path.to_path_buf(), sum));
        Ok(())
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.path(name), bytes)?;
        let sum = sha256_hex(bytes);
        match self.artifacts.iter_mut().find(|(n, _)| n == name) {
            Some(entry) => entry.1 = sum,
            None => self.artifacts.push((name.to_string(), sum)),
        }
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        self.write(name, text.as_bytes())
    }

    /// `config.txt` plus `manifest.txt`; call last.
    pub fn finish(mut self) -> Result<()> {
        let config = std::mem::take(&mut self.config_text);
        self.write_text("config.txt", &config)?;
        let mut text = format!("command={}\nconfig_sha256={}\n", self.command, sha256_hex(config.as_bytes()));
        for (p, sum) in &self.inputs {
            text.push_str(&format!("input={} sha256={sum}\n", p.display()));
        }
        let mut arts = self.artifacts.clone();
        arts.sort();
        for (name, sum) in &arts {
            text.push_str(&format!("artifact={name} sha256={sum}\n"));
        }
        write_atomic(&self.path("manifest.txt"), text.as_bytes())
    }
}
