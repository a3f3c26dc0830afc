//! Output directory bookkeeping and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use hj_strata::scenario::{Scenario, SolverSchedules};

/// Diagnostic with the process exit code it maps to.
#[derive(Debug)]
pub struct Fail {
    pub code: u8,
    pub message: String,
}

impl Fail {
    pub fn usage(m: impl Display) -> Self {
        Fail { code: 2, message: m.to_string() }
    }

    pub fn solver(m: impl Display) -> Self {
        Fail { code: 1, message: m.to_string() }
    }
}

#[derive(Serialize)]
struct CacheUse {
    key: String,
    hit: bool,
}

#[derive(Serialize)]
struct RunManifest {
    version: &'static str,
    command: Vec<String>,
    scenario: String,
    scenario_sha256: String,
    schedules: SolverSchedules,
    out_dir: String,
    /// File name to sha256 of its bytes; the manifest itself is not listed.
    outputs: BTreeMap<String, String>,
    cache: Option<CacheUse>,
    /// `(stage, seconds)` in execution order.
    timings: Vec<(String, f64)>,
}

pub struct Run {
    out: PathBuf,
    manifest: RunManifest,
    started: Instant,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Run {
    pub fn start(out: PathBuf, source: &str, bytes: &[u8], scn: &Scenario) -> Result<Self, Fail> {
        std::fs::create_dir_all(&out).map_err(|e| Fail::usage(format!("cannot create `{}`: {e}", out.display())))?;
        let manifest = RunManifest {
            version: env!("CARGO_PKG_VERSION"),
            command: std::env::args().collect(),
            scenario: source.to_string(),
            scenario_sha256: sha256_hex(bytes),
            schedules: scn.schedules.clone(),
            out_dir: out.display().to_string(),
            outputs: BTreeMap::new(),
            cache: None,
            timings: Vec::new(),
        };
        Ok(Run { out, manifest, started: Instant::now() })
    }

    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let v = f();
        self.manifest.timings.push((stage.to_string(), t.elapsed().as_secs_f64()));
        v
    }

    pub fn note_cache(&mut self, key: &str, hit: bool) {
        self.manifest.cache = Some(CacheUse { key: key.to_string(), hit });
    }

    /// Writes `name` through `f` and records its hash.
    pub fn artifact(&mut self, name: &str, f: impl FnOnce(&Path) -> hj_strata::Result<()>) -> Result<(), Fail> {
        let path = self.out.join(name);
        f(&path).map_err(|e| Fail::solver(format!("writing {}: {e}", path.display())))?;
        let bytes = std::fs::read(&path).map_err(|e| Fail::solver(format!("reading back {}: {e}", path.display())))?;
        self.manifest.outputs.insert(name.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), Fail> {
        self.artifact(name, |p| {
            let mut text = serde_json::to_string_pretty(value)?;
            text.push('\n');
            std::fs::write(p, text)?;
            Ok(())
        })
    }

    pub fn finish(mut self) -> Result<(), Fail> {
        self.manifest.timings.push(("total".into(), self.started.elapsed().as_secs_f64()));
        let path = self.out.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest).map_err(Fail::solver)?;
        std::fs::write(&path, text + "\n").map_err(|e| Fail::solver(format!("writing {}: {e}", path.display())))
    }
}
