//! On-disk cache of effective tables, keyed by everything that shapes them.
//!
//! Tables are stored as CBOR rather than JSON so NaN slope entries survive.

use std::path::PathBuf;

use serde_json::json;

use hj_strata::cell::{CellOptions, EffectiveTables};
use hj_strata::scenario::Scenario;

use crate::run::sha256_hex;

fn dir() -> PathBuf {
    std::env::var_os("HJ_STRATA_CACHE").map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".hj-strata-cache"))
}

pub fn key(scn: &Scenario, p1: &[f64], p: Option<&[f64]>, opts: &CellOptions) -> String {
    let doc = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "scenario": scn.fingerprint(),
        "p1_grid": p1,
        "p_grid": p,
        "cell": opts,
    });
    sha256_hex(doc.to_string().as_bytes())
}

pub fn load(key: &str) -> Option<EffectiveTables> {
    let file = std::fs::File::open(dir().join(format!("{key}.cbor"))).ok()?;
    ciborium::de::from_reader(std::io::BufReader::new(file)).ok()
}

pub fn store(key: &str, t: &EffectiveTables) -> std::io::Result<()> {
    let d = dir();
    std::fs::create_dir_all(&d)?;
    let mut buf = Vec::new();
    ciborium::ser::into_writer(t, &mut buf).map_err(|e| std::io::Error::other(e.to_string()))?;
    // write-then-rename so a concurrent reader never sees a partial file
    let tmp = d.join(format!("{key}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, buf)?;
    std::fs::rename(tmp, d.join(format!("{key}.cbor")))
}
