//! Scenario files.
//!
//! TOML is the primary encoding; a `.json` file with the same structure is
//! accepted too. Unknown keys are rejected so typos do not silently fall
//! back to defaults.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<Output>,
    pub lattice: LatticeConfig,
    pub initial_state: InitialConfig,
    pub drive: DriveConfig,
    #[serde(default)]
    pub dispersion: Option<DispersionConfig>,
    pub time: TimeConfig,
    #[serde(default)]
    pub snapshots: Option<SnapshotConfig>,
    #[serde(default)]
    pub classical: ClassicalConfig,
    #[serde(default)]
    pub band: BandConfig,
    #[serde(default)]
    pub localization_map: Option<MapConfig>,
    #[serde(default)]
    pub oracle: OracleSection,
}

fn default_outputs() -> Vec<Output> {
    vec![Output::Observables]
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    PhaseIntegrals,
    Observables,
    StateSnapshots,
    Band,
    Invariant,
    Classical,
    LocalizationReport,
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    #[default]
    Open,
    Ring,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub n_min: i64,
    pub n_max: i64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    SingleSite {
        site: i64,
    },
    Gaussian {
        center: f64,
        sigma: f64,
        #[serde(default)]
        kappa0: f64,
    },
    /// `amplitudes[i] = [re, im]` for site `n_min + i`.
    Explicit {
        n_min: i64,
        amplitudes: Vec<[f64; 2]>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriveConfig {
    Dc {
        f0: f64,
        g0: f64,
    },
    Harmonic {
        f0: f64,
        f1: f64,
        omega: f64,
        g0: f64,
    },
    Fourier {
        f0: f64,
        modes: Vec<f64>,
        omega: f64,
        g0: f64,
    },
    /// Piecewise-linear tables. `f_file`/`g_file` hold `t value` rows and
    /// are resolved relative to the scenario file; once loaded they are
    /// replaced by the inline `f`/`g` pairs.
    Tabulated {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        f_file: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        g_file: Option<PathBuf>,
        #[serde(default)]
        f: Vec<[f64; 2]>,
        #[serde(default)]
        g: Vec<[f64; 2]>,
        #[serde(default)]
        periodic: bool,
    },
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ConventionKind {
    #[default]
    Ladder,
    PowerOfTwo,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DispersionConfig {
    /// `couplings[m] = [re g_m, im g_m]`, `m = 0..M`.
    pub couplings: Vec<[f64; 2]>,
    #[serde(default)]
    pub convention: ConventionKind,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_max: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SnapshotConfig {
    pub times: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ClassicalConfig {
    #[serde(default = "default_ensemble")]
    pub samples: usize,
    #[serde(default = "one")]
    pub delta: f64,
}

impl Default for ClassicalConfig {
    fn default() -> Self {
        ClassicalConfig {
            samples: default_ensemble(),
            delta: 1.0,
        }
    }
}

fn default_ensemble() -> usize {
    100_000
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BandConfig {
    /// Bloch grid `κ_j = −π + 2πj/M` for sampling the band.
    #[serde(default = "default_band_grid")]
    pub grid: usize,
    /// Ring size for the monodromy check when the oracle is enabled.
    #[serde(default = "default_ring")]
    pub ring_sites: usize,
}

impl Default for BandConfig {
    fn default() -> Self {
        BandConfig {
            grid: default_band_grid(),
            ring_sites: default_ring(),
        }
    }
}

fn default_band_grid() -> usize {
    128
}

fn default_ring() -> usize {
    32
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub points: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default)]
    pub boundary: BoundaryKind,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "tight")]
    pub error_tolerance: f64,
    #[serde(default = "tight")]
    pub leak_tolerance: f64,
    /// Largest accepted closed-form vs oracle amplitude deviation.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Number of comparison times spread over the time grid.
    #[serde(default = "default_checkpoints")]
    pub checkpoints: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection {
            enabled: false,
            boundary: BoundaryKind::Open,
            dt: None,
            error_tolerance: tight(),
            leak_tolerance: tight(),
            tolerance: default_tolerance(),
            checkpoints: default_checkpoints(),
        }
    }
}

fn tight() -> f64 {
    1e-8
}

fn default_tolerance() -> f64 {
    1e-6
}

fn default_checkpoints() -> usize {
    5
}

/// A parsed scenario plus the text it came from (for error locations).
pub struct Loaded {
    pub scenario: Scenario,
    pub source: String,
    pub path: PathBuf,
}

pub fn load(path: &Path) -> Result<Loaded> {
    let source = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let mut scenario: Scenario = if is_json {
        serde_json::from_str(&source).with_context(|| format!("{}: invalid scenario", path.display()))?
    } else {
        toml::from_str(&source).with_context(|| format!("{}: invalid scenario", path.display()))?
    };
    let base = path.parent().unwrap_or(Path::new("."));
    resolve_tables(&mut scenario.drive, base)?;
    Ok(Loaded {
        scenario,
        source,
        path: path.to_path_buf(),
    })
}

fn resolve_tables(drive: &mut DriveConfig, base: &Path) -> Result<()> {
    if let DriveConfig::Tabulated {
        f_file, g_file, f, g, ..
    } = drive
    {
        for (file, rows) in [(f_file, f), (g_file, g)] {
            if let Some(rel) = file.take() {
                if !rows.is_empty() {
                    bail!("drive: give either a table file or inline rows, not both");
                }
                let path = base.join(&rel);
                let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
                let table = tightbind::drive::Table::parse(&text, false)
                    .with_context(|| format!("{}", path.display()))?;
                *rows = table.times().iter().map(|&t| [t, table.value(t)]).collect();
            }
        }
    }
    Ok(())
}

impl Loaded {
    /// Error message naming `field` and the line that sets it, if any.
    pub fn field_error(&self, field: &str, message: impl std::fmt::Display) -> anyhow::Error {
        let key = field.rsplit('.').next().unwrap_or(field);
        let line = self.source.lines().position(|l| {
            let l = l.trim_start().trim_start_matches('"');
            l.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().trim_start_matches('"').trim_start().starts_with(['=', ':']))
        });
        match line {
            Some(i) => anyhow::anyhow!("{}:{}: {field}: {message}", self.path.display(), i + 1),
            None => anyhow::anyhow!("{}: {field}: {message}", self.path.display()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        if s.name.is_empty() || s.name.contains(['/', '\\']) {
            return Err(self.field_error("name", "must be a non-empty file name"));
        }
        if s.lattice.n_max < s.lattice.n_min {
            return Err(self.field_error("lattice.n_max", "must not be below n_min"));
        }
        if !(s.time.t_max > 0.0 && s.time.t_max.is_finite()) {
            return Err(self.field_error("time.t_max", "must be positive"));
        }
        if s.time.samples < 2 {
            return Err(self.field_error("time.samples", "need at least 2 samples"));
        }
        if s.outputs.contains(&Output::Classical) && s.classical.samples == 0 {
            return Err(self.field_error("classical.samples", "must be positive"));
        }
        if s.oracle.checkpoints == 0 {
            return Err(self.field_error("oracle.checkpoints", "must be positive"));
        }
        if !(s.oracle.tolerance > 0.0) {
            return Err(self.field_error("oracle.tolerance", "must be positive"));
        }
        if let Some(snap) = &s.snapshots {
            if let Some(t) = snap.times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
                return Err(self.field_error("snapshots.times", format!("invalid time {t}")));
            }
        }
        if let Some(map) = &s.localization_map {
            if map.points < 2 || !(map.ratio_max > map.ratio_min) {
                return Err(self.field_error("localization_map.points", "need 2+ points and ratio_max > ratio_min"));
            }
        }
        if s.dispersion.is_some() {
            let bad = [Output::Band, Output::Invariant, Output::Classical, Output::LocalizationReport];
            if let Some(o) = s.outputs.iter().find(|o| bad.contains(o)) {
                return Err(self.field_error(
                    "outputs",
                    format!("{o:?} is only defined for nearest-neighbour coupling"),
                ));
            }
        }
        Ok(())
    }
}

impl Scenario {
    /// SHA-256 of the canonical JSON encoding, so TOML and JSON copies of
    /// one scenario share a hash.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("scenario serialises");
        hex::encode(Sha256::digest(&canonical))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
[lattice]
n_min = -10
n_max = 10
[initial_state]
kind = "single_site"
site = 0
[drive]
kind = "dc"
f0 = 1.0
g0 = 0.5
[time]
t_max = 1.0
samples = 3
"#;

    fn loaded(text: &str) -> Loaded {
        Loaded {
            scenario: toml::from_str(text).unwrap(),
            source: text.to_string(),
            path: PathBuf::from("s.toml"),
        }
    }

    #[test]
    fn defaults() {
        let l = loaded(MINIMAL);
        assert_eq!(l.scenario.outputs, vec![Output::Observables]);
        assert_eq!(l.scenario.seed, 0);
        assert!(!l.scenario.oracle.enabled);
        l.validate().unwrap();
    }

    #[test]
    fn validation_names_field_and_line() {
        let l = loaded(&MINIMAL.replace("samples = 3", "samples = 1"));
        let msg = l.validate().unwrap_err().to_string();
        assert!(msg.contains("time.samples"), "{msg}");
        assert!(msg.contains("s.toml:15"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("g0 = 0.5", "g0 = 0.5\ngg = 1");
        assert!(toml::from_str::<Scenario>(&text).is_err());
    }

    #[test]
    fn json_and_toml_hash_alike() {
        let a: Scenario = toml::from_str(MINIMAL).unwrap();
        let b: Scenario = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.seed = 1;
        assert_ne!(a.hash(), c.hash());
    }
}
