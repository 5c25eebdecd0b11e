//! Scenario configs, the batch runners behind the CLI, and CSV/SVG output.

pub mod config;
pub mod csv;
pub mod runner;
pub mod svg;

pub use config::ScenarioConfig;
pub use runner::{compare, plot, probe_vd, run, sweep, LawSpec, RunArtifact, RunSummary, SweepParam};

/// Shipped scenario files, by name.
pub const BUILTIN_CONFIGS: [(&str, &str); 6] = [
    ("s0", include_str!("../../configs/s0.toml")),
    ("s1", include_str!("../../configs/s1.toml")),
    ("s1_momentum", include_str!("../../configs/s1_momentum.toml")),
    ("s2", include_str!("../../configs/s2.toml")),
    ("s3", include_str!("../../configs/s3.toml")),
    ("probe_cos", include_str!("../../configs/probe_cos.toml")),
];

pub fn builtin_config(name: &str) -> crate::Result<ScenarioConfig> {
    let text = BUILTIN_CONFIGS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| crate::Error::validation("builtin", format!("unknown scenario `{name}`")))?;
    ScenarioConfig::from_toml_str(text)
}
