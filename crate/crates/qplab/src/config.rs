//! Run configuration: a single structured-text file with sections
//! [model], [frequency], [potential], [hopping] (plus optional [msa] and
//! [experiment] knobs), CLI-overridable via repeated `--set section.key=value`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{HoppingKind, HoppingSpec, ModelConfig, PotentialKind, PotentialSpec};
use crate::msa::{ScaleMode, ScaleSchedule, ScheduleSeed};
use crate::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    d: usize,
    epsilon: f64,
    theta: f64,
    energy: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrequencySection {
    omega: Vec<f64>,
    tau: f64,
    gamma: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PotentialSection {
    kind: String,
    #[serde(rename = "R")]
    r: f64,
    #[serde(default)]
    lambda: Vec<f64>,
    #[serde(default)]
    f_epsilon: f64,
    #[serde(default)]
    f_coeffs: Vec<f64>,
    #[serde(default)]
    kappa1: Option<f64>,
    #[serde(default)]
    kappa2: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HoppingSection {
    #[serde(default)]
    kind: Option<String>,
    alpha_decay: f64,
    alpha0: f64,
    alpha1: f64,
    radius: i64,
    #[serde(default)]
    table: Vec<Vec<f64>>,
}

/// Scale-schedule knobs; exploration tables give (N_s, delta_s) per step.
#[derive(Clone, Debug, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MsaSection {
    #[serde(default)]
    pub mode: Option<String>,
    #[serde(default)]
    pub epsilon0: Option<f64>,
    #[serde(default)]
    pub delta0: Option<f64>,
    #[serde(default)]
    pub s_max: Option<usize>,
    #[serde(default)]
    pub window_radius: Option<i64>,
    #[serde(default)]
    pub schedule_n: Vec<u64>,
    #[serde(default)]
    pub schedule_delta: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub box_radius: i64,
    pub theta_samples: usize,
    pub tau1: f64,
    pub a_param: f64,
    pub p_moment: f64,
    pub t_max: f64,
    pub band_cut: i64,
    pub dual_radius: i64,
    pub x_samples: usize,
    pub e_min: f64,
    pub e_max: f64,
    pub e_points: usize,
    pub eta: Vec<f64>,
    pub instances: usize,
    pub alphas: Vec<f64>,
    pub sample_sets: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            box_radius: 50,
            theta_samples: 1,
            tau1: 1.5,
            a_param: 0.5,
            p_moment: 2.0,
            t_max: 100.0,
            band_cut: 2,
            dual_radius: 40,
            x_samples: 3,
            e_min: -1.5,
            e_max: 1.5,
            e_points: 61,
            eta: vec![1e-3, 3e-3, 1e-2, 3e-2, 1e-1],
            instances: 1000,
            alphas: vec![1.0, 2.0],
            sample_sets: 2,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: ModelSection,
    frequency: FrequencySection,
    potential: PotentialSection,
    hopping: HoppingSection,
    #[serde(default)]
    msa: MsaSection,
    #[serde(default)]
    experiment: ExperimentSection,
}

/// Fully parsed run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub msa: MsaSection,
    pub experiment: ExperimentSection,
    /// SHA-256 of the canonicalized effective configuration.
    pub hash: String,
}

impl RunConfig {
    /// Schedule from the [msa] section; `mode_override` wins over the
    /// config's own mode.
    pub fn schedule(&self, mode_override: Option<&str>) -> Result<ScaleSchedule> {
        let mode = mode_override
            .map(|s| s.to_string())
            .or_else(|| self.msa.mode.clone())
            .unwrap_or_else(|| "exploration".to_string());
        let gamma = self.model.gamma;
        let tau = self.model.tau;
        let s_max = self.msa.s_max.unwrap_or(3);
        match mode.as_str() {
            "paper" => {
                let seed = if let Some(e0) = self.msa.epsilon0 {
                    ScheduleSeed::Epsilon0(e0)
                } else if let Some(d0) = self.msa.delta0 {
                    ScheduleSeed::Delta0(d0)
                } else {
                    return Err(Error::Config(
                        "paper schedule needs msa.epsilon0 or msa.delta0".into(),
                    ));
                };
                ScaleSchedule::paper(gamma, tau, seed, s_max)
            }
            "exploration" => {
                let table: Vec<(u64, f64)> = if !self.msa.schedule_n.is_empty() {
                    if self.msa.schedule_n.len() != self.msa.schedule_delta.len() {
                        return Err(Error::Config(
                            "msa.schedule_n and msa.schedule_delta must have equal length"
                                .into(),
                        ));
                    }
                    self.msa
                        .schedule_n
                        .iter()
                        .zip(&self.msa.schedule_delta)
                        .map(|(&n, &d)| (n, d))
                        .collect()
                } else {
                    let d0 = self.msa.delta0.unwrap_or(1e-3);
                    vec![(1, d0), (2, d0.powi(3)), (3, d0.powi(9))]
                };
                ScaleSchedule::exploration(gamma, tau, &table)
            }
            other => Err(Error::Config(format!("unknown scale mode {other:?}"))),
        }
    }

    pub fn scale_mode(&self) -> ScaleMode {
        match self.msa.mode.as_deref() {
            Some("paper") => ScaleMode::Paper,
            _ => ScaleMode::Exploration,
        }
    }
}

fn potential_from_section(sec: &PotentialSection) -> Result<PotentialSpec> {
    let kind = match sec.kind.as_str() {
        "cosine" => PotentialKind::Cosine,
        "poly-cosine" => PotentialKind::PolyCosine { lambda: sec.lambda.clone() },
        "cosine-plus-even" => PotentialKind::CosinePlusEven {
            eps_f: sec.f_epsilon,
            f_coeffs: sec.f_coeffs.clone(),
        },
        other => {
            return Err(Error::Config(format!(
                "unknown potential.kind {other:?} (cosine | poly-cosine | cosine-plus-even)"
            )))
        }
    };
    let spec = PotentialSpec { kind, r: sec.r, kappa1: sec.kappa1, kappa2: sec.kappa2 };
    spec.validate()?;
    Ok(spec)
}

fn hopping_from_section(sec: &HoppingSection, d: usize) -> Result<HoppingSpec> {
    let mut table = BTreeMap::new();
    for row in &sec.table {
        if row.len() != d + 2 {
            return Err(Error::Config(format!(
                "hopping.table rows need {} entries ([offset...; re, im]), got {}",
                d + 2,
                row.len()
            )));
        }
        let offset: Vec<i64> = row[..d].iter().map(|&x| x as i64).collect();
        if offset.iter().all(|&c| c == 0) {
            return Err(Error::Config("hopping.table must not map the zero offset".into()));
        }
        table.insert(offset, (row[d], row[d + 1]));
    }
    let kind = match sec.kind.as_deref() {
        Some("powerlaw") => HoppingKind::PowerLaw,
        Some("nearest") => HoppingKind::Nearest,
        Some("nearest-plus-powerlaw") => HoppingKind::NearestPlusPowerLaw,
        Some("table") => HoppingKind::Table,
        None => {
            if table.is_empty() {
                HoppingKind::PowerLaw
            } else {
                HoppingKind::Table
            }
        }
        Some(other) => {
            return Err(Error::Config(format!(
                "unknown hopping.kind {other:?} (powerlaw | nearest | nearest-plus-powerlaw | table)"
            )))
        }
    };
    Ok(HoppingSpec {
        kind,
        alpha_decay: sec.alpha_decay,
        alpha0: sec.alpha0,
        alpha1: sec.alpha1,
        radius: sec.radius,
        table,
    })
}

/// Canonical hash of the effective configuration: the TOML value is
/// re-expressed as JSON (whose object keys serialize sorted) and digested.
fn hash_table(table: &toml::Table) -> String {
    let json = toml_to_json(&toml::Value::Table(table.clone()));
    let text = serde_json::to_string(&json).expect("json serialization");
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    hex_digest(&hasher.finalize())
}

fn hex_digest(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn toml_to_json(value: &toml::Value) -> serde_json::Value {
    match value {
        toml::Value::String(s) => serde_json::Value::String(s.clone()),
        toml::Value::Integer(i) => serde_json::Value::from(*i),
        toml::Value::Float(f) => serde_json::Value::from(*f),
        toml::Value::Boolean(b) => serde_json::Value::from(*b),
        toml::Value::Datetime(d) => serde_json::Value::String(d.to_string()),
        toml::Value::Array(a) => serde_json::Value::Array(a.iter().map(toml_to_json).collect()),
        toml::Value::Table(t) => serde_json::Value::Object(
            t.iter().map(|(k, v)| (k.clone(), toml_to_json(v))).collect(),
        ),
    }
}

/// Applies `--set section.key=value` overrides onto the parsed document;
/// values are parsed as TOML literals, falling back to bare strings.
pub fn apply_overrides(table: &mut toml::Table, sets: &[String]) -> Result<()> {
    for entry in sets {
        let (key, value) = entry
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {entry:?} is not KEY=VALUE")))?;
        let parsed: toml::Value = match format!("x = {value}").parse::<toml::Table>() {
            Ok(t) => t["x"].clone(),
            Err(_) => toml::Value::String(value.to_string()),
        };
        let path: Vec<&str> = key.split('.').collect();
        if path.is_empty() {
            return Err(Error::Config(format!("empty override key in {entry:?}")));
        }
        let mut cursor = &mut *table;
        for part in &path[..path.len() - 1] {
            cursor = cursor
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| {
                    Error::Config(format!("override path {key:?} crosses a non-table value"))
                })?;
        }
        cursor.insert(path[path.len() - 1].to_string(), parsed);
    }
    Ok(())
}

/// Parses configuration text (after overrides) into a RunConfig.
pub fn parse_config(text: &str, sets: &[String]) -> Result<RunConfig> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| Error::Config(format!("configuration does not parse: {e}")))?;
    apply_overrides(&mut table, sets)?;
    let hash = hash_table(&table);
    let raw: RawConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| Error::Config(format!("{e}")))?;
    let potential = potential_from_section(&raw.potential)?;
    let hopping = hopping_from_section(&raw.hopping, raw.model.d)?;
    let model = ModelConfig {
        d: raw.model.d,
        tau: raw.frequency.tau,
        gamma: raw.frequency.gamma,
        omega: raw.frequency.omega,
        epsilon: raw.model.epsilon,
        theta: raw.model.theta,
        energy: raw.model.energy,
        potential,
        hopping,
    };
    if model.omega.len() != model.d {
        return Err(Error::Config(format!(
            "frequency.omega needs {} components for model.d = {}",
            model.d, model.d
        )));
    }
    Ok(RunConfig { model, msa: raw.msa, experiment: raw.experiment, hash })
}

pub fn load_config(path: &std::path::Path, sets: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, sets)
}

/// A ready-to-edit reference configuration.
pub const EXAMPLE_CONFIG: &str = r#"[model]
d = 1
epsilon = 1e-3
theta = 0.21
energy = 0.3

[frequency]
omega = [0.6180339887498949]
tau = 2.0
gamma = 0.1

[potential]
kind = "cosine"
R = 0.05
lambda = []

[hopping]
kind = "powerlaw"
alpha_decay = 6.0
alpha0 = 1.5
alpha1 = 9.0
radius = 30
table = []

[msa]
mode = "exploration"
delta0 = 1e-3
s_max = 2
window_radius = 60

[experiment]
box_radius = 50
theta_samples = 1
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_config_parses() {
        let cfg = parse_config(EXAMPLE_CONFIG, &[]).unwrap();
        assert_eq!(cfg.model.d, 1);
        assert_eq!(cfg.model.hopping.kind, HoppingKind::PowerLaw);
        assert_eq!(cfg.experiment.box_radius, 50);
        assert_eq!(cfg.hash.len(), 64);
        let schedule = cfg.schedule(None).unwrap();
        assert_eq!(schedule.n(1), 2);
    }

    #[test]
    fn overrides_change_values_and_hash() {
        let a = parse_config(EXAMPLE_CONFIG, &[]).unwrap();
        let b =
            parse_config(EXAMPLE_CONFIG, &["model.epsilon=1e-4".to_string()]).unwrap();
        assert_eq!(b.model.epsilon, 1e-4);
        assert_ne!(a.hash, b.hash);
        // Array-valued override.
        let c = parse_config(
            EXAMPLE_CONFIG,
            &["frequency.omega=[0.41421356237309515]".to_string()],
        )
        .unwrap();
        assert_eq!(c.model.omega, vec![0.41421356237309515]);
    }

    #[test]
    fn missing_key_is_reported_by_name() {
        let broken = EXAMPLE_CONFIG.replace("alpha_decay = 6.0", "");
        let err = parse_config(&broken, &[]).unwrap_err();
        assert!(err.to_string().contains("alpha_decay"), "got: {err}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let broken = EXAMPLE_CONFIG.replace("theta = 0.21", "theta = 0.21\nbogus = 1");
        assert!(parse_config(&broken, &[]).is_err());
    }

    #[test]
    fn hopping_table_rows_parse() {
        let text = EXAMPLE_CONFIG
            .replace("kind = \"powerlaw\"", "kind = \"table\"")
            .replace("table = []", "table = [[1, 1.0, 0.0], [-1, 1.0, 0.0]]");
        let cfg = parse_config(&text, &[]).unwrap();
        assert_eq!(cfg.model.hopping.kind, HoppingKind::Table);
        let amp = cfg.model.hopping.phi(&[1]);
        assert_eq!(amp.re, 1.0);
        // AMO form: tridiagonal.
        assert_eq!(cfg.model.hopping.phi(&[2]), num_complex::Complex64::ZERO);
    }

    #[test]
    fn paper_schedule_from_config() {
        let cfg = parse_config(
            EXAMPLE_CONFIG,
            &["msa.mode=\"paper\"".to_string(), "msa.epsilon0=1e-90".to_string()],
        )
        .unwrap();
        let schedule = cfg.schedule(None).unwrap();
        assert!((schedule.log10_delta(0) + 3.0).abs() < 1e-12);
        // Mode override from the CLI side wins.
        let exploration = cfg.schedule(Some("exploration")).unwrap();
        assert_eq!(exploration.mode, crate::msa::ScaleMode::Exploration);
    }

    #[test]
    fn hash_is_stable_across_formatting() {
        let reordered = EXAMPLE_CONFIG.replace(
            "d = 1\nepsilon = 1e-3",
            "epsilon = 1e-3\nd = 1",
        );
        let a = parse_config(EXAMPLE_CONFIG, &[]).unwrap();
        let b = parse_config(&reordered, &[]).unwrap();
        assert_eq!(a.hash, b.hash);
    }
}
