//! Run manifests: the command, the resolved configuration, the seeds and
//! content digests of every output file. Re-running a manifest with the
//! same binary reproduces the digests bit for bit. All files are written
//! atomically (temp + rename) and the manifest is written last.

use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

pub struct RunManifest {
    command: String,
    config_snapshot: String,
    seed: u64,
    outputs: Vec<(String, String)>, // (name, sha256)
}

impl RunManifest {
    pub fn new(command: &str, config_snapshot: String, seed: u64) -> Self {
        Self { command: command.to_string(), config_snapshot, seed, outputs: Vec::new() }
    }

    /// Writes an output file atomically and records its digest.
    pub fn write_output(&mut self, dir: &Path, name: &str, content: &str) -> std::io::Result<()> {
        atomic_write(&dir.join(name), content.as_bytes())?;
        let digest = Sha256::digest(content.as_bytes());
        self.outputs.push((name.to_string(), format!("{digest:x}")));
        Ok(())
    }

    /// Writes the manifest itself (last).
    pub fn finish(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let mut out = String::new();
        out.push_str(&format!("command = {}\n", self.command));
        out.push_str(&format!("tool_version = {}\n", env!("CARGO_PKG_VERSION")));
        out.push_str(&format!("seed = {}\n", self.seed));
        for (name, digest) in &self.outputs {
            out.push_str(&format!("output.{name} = sha256:{digest}\n"));
        }
        out.push_str("# resolved configuration\n");
        for line in self.config_snapshot.lines() {
            out.push_str(&format!("config.{line}\n"));
        }
        let path = dir.join("manifest.txt");
        atomic_write(&path, out.as_bytes())?;
        Ok(path)
    }
}

fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension(format!("tmp-{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}
