//! Scenario files shipped with the crate.

use crate::error::{Error, Result};
use crate::scenario::{parse_scenario, Scenario};

pub const PRESETS: &[(&str, &str)] = &[
    ("eikonal", include_str!("../scenarios/eikonal.json")),
    ("core_attract", include_str!("../scenarios/core_attract.json")),
    ("core_repulse", include_str!("../scenarios/core_repulse.json")),
    ("strip_attract", include_str!("../scenarios/strip_attract.json")),
    ("drift_defect", include_str!("../scenarios/drift_defect.json")),
    ("checkerboard", include_str!("../scenarios/checkerboard.json")),
    ("case3_symmetric", include_str!("../scenarios/case3_symmetric.json")),
    ("lemma_regime", include_str!("../scenarios/lemma_regime.json")),
];

pub fn preset_source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn preset(name: &str) -> Result<Scenario> {
    let src = preset_source(name).ok_or_else(|| Error::Scenario(format!("unknown preset `{name}`")))?;
    parse_scenario(src)
}
