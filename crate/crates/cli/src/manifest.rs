//! One manifest per run: what ran, on which inputs, and what came out.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputHash {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub phase: String,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub threads: usize,
    pub inputs: Vec<InputHash>,
    pub timings: Vec<Timing>,
    pub outputs: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pixels_per_second: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<serde_json::Value>,
    #[serde(skip)]
    clock: Option<Instant>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = file.read(&mut buf).with_context(|| format!("hashing {}", path.display()))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// The data file next to a JSON header, if there is one.
fn companion(path: &Path) -> Option<PathBuf> {
    (path.extension()? == "json").then(|| path.with_extension("bin")).filter(|p| p.exists())
}

impl RunManifest {
    pub fn new(subcommand: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seed,
            threads: rayon::current_num_threads(),
            inputs: Vec::new(),
            timings: Vec::new(),
            outputs: Vec::new(),
            pixels_per_second: None,
            result: None,
            clock: None,
        }
    }

    /// Records the hash of an input file and of its binary payload.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        for p in std::iter::once(path.to_path_buf()).chain(companion(path)) {
            let sha256 = sha256_file(&p)?;
            self.inputs.push(InputHash { path: p, sha256 });
        }
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
        if let Some(bin) = companion(path) {
            self.outputs.push(bin);
        }
    }

    /// Times `f` as one phase.
    pub fn phase<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        self.clock.get_or_insert(start);
        let out = f();
        self.timings.push(Timing {
            phase: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing manifest {}", path.display()))?;
        log::info!("manifest written to {}", path.display());
        Ok(())
    }
}

/// `<out>.manifest.json` next to an output file.
pub fn beside(out: &Path) -> PathBuf {
    let mut name = out.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_names() {
        assert_eq!(beside(Path::new("out/feats.json")), PathBuf::from("out/feats.manifest.json"));
        assert_eq!(beside(Path::new("grid.csv")), PathBuf::from("grid.manifest.json"));
    }

    #[test]
    fn hashes_input_and_payload() {
        let dir = tempfile::tempdir().unwrap();
        let header = dir.path().join("x.json");
        std::fs::write(&header, "{}").unwrap();
        std::fs::write(dir.path().join("x.bin"), b"abc").unwrap();
        let mut m = RunManifest::new("test", serde_json::json!({}), None);
        m.input(&header).unwrap();
        assert_eq!(m.inputs.len(), 2);
        assert_eq!(
            m.inputs[1].sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let v = m.phase("p", || 7);
        assert_eq!(v, 7);
        assert_eq!(m.timings[0].phase, "p");
    }
}
