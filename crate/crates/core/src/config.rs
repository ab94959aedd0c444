//! Run configuration: JSON files with defaults, dotted `key=value`
//! overrides, validation, and content fingerprints.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::eval::{KMeansConfig, LinkPredConfig, NmiNorm, ProbeConfig};
use crate::graph::SbmSpec;
use crate::trainer::TrainConfig;
use crate::{Error, Result};

/// Hex SHA-256 of the canonical JSON form of `value`. Object keys are
/// sorted, so the result does not depend on key order in the source file.
pub fn fingerprint<T: Serialize>(value: &T) -> Result<String> {
    let canonical = serde_json::to_value(value)?;
    let digest = Sha256::digest(serde_json::to_string(&canonical)?.as_bytes());
    Ok(hex::encode(&digest[..16]))
}

/// Where the graph comes from: files or a generated SBM.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub edges: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub sbm: Option<SbmSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub node_split: [f64; 3],
    pub edge_split: [f64; 3],
    pub probe: ProbeConfig,
    pub kmeans: KMeansConfig,
    pub linkpred: LinkPredConfig,
    pub nmi_norm: NmiNorm,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            node_split: [0.1, 0.1, 0.8],
            edge_split: [0.85, 0.05, 0.10],
            probe: ProbeConfig::default(),
            kmeans: KMeansConfig::default(),
            linkpred: LinkPredConfig::default(),
            nmi_norm: NmiNorm::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            out_dir: PathBuf::from("out"),
            seeds: vec![0],
        }
    }
}

fn check_fractions(name: &str, f: [f64; 3]) -> Result<()> {
    if f.iter().any(|&x| !(0.0..=1.0).contains(&x)) || f.iter().sum::<f64>() > 1.0 + 1e-9 {
        return Err(Error::Config(format!(
            "{name} = {f:?} is out of range; expected fractions in [0, 1] summing to at most 1"
        )));
    }
    Ok(())
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        check_fractions("eval.node_split", self.eval.node_split)?;
        check_fractions("eval.edge_split", self.eval.edge_split)?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must list at least one seed".into()));
        }
        let d = &self.dataset;
        for (key, path) in [("dataset.edges", &d.edges), ("dataset.features", &d.features), ("dataset.labels", &d.labels)] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::Config(format!("{key}: {} does not exist", p.display())));
                }
            }
        }
        if d.sbm.is_some() && (d.edges.is_some() || d.features.is_some()) {
            return Err(Error::Config("dataset: give either sbm or edges/features, not both".into()));
        }
        if d.sbm.is_none() && (d.edges.is_some() != d.features.is_some()) {
            return Err(Error::Config("dataset: edges and features must be given together".into()));
        }
        Ok(())
    }

    /// Fingerprint of the parts that determine results (not the output directory).
    pub fn fingerprint(&self) -> Result<String> {
        fingerprint(&(&self.dataset, &self.train, &self.eval))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let d = &mut self.dataset;
        for p in [&mut d.edges, &mut d.features, &mut d.labels].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

fn parse_override(raw: &str) -> Result<(Vec<String>, Value)> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {raw:?} is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("override {raw:?} has an empty key")));
    }
    let value = serde_json::from_str(value.trim()).unwrap_or_else(|_| Value::String(value.trim().to_string()));
    Ok((key.split('.').map(str::to_string).collect(), value))
}

/// Set `root[path] = value`, creating intermediate objects.
pub fn apply_override(root: &mut Value, raw: &str) -> Result<()> {
    let (path, value) = parse_override(raw)?;
    let mut cur = root;
    for (i, part) in path.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override {raw:?}: {} is not an object", path[..i].join("."))))?;
        if i + 1 == path.len() {
            obj.insert(part.clone(), value);
            return Ok(());
        }
        cur = obj.entry(part.clone()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("override path is nonempty")
}

/// Parse config JSON text, apply overrides, fill defaults, and validate.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<Config> {
    let mut root: Value = if text.trim().is_empty() {
        Value::Object(Default::default())
    } else {
        serde_json::from_str(text)?
    };
    if !root.is_object() {
        return Err(Error::Config("config must be a JSON object".into()));
    }
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    let config: Config = serde_json::from_value(root).map_err(|e| Error::Config(e.to_string()))?;
    Ok(config)
}

/// Load a config file. Relative dataset paths are taken relative to the file.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<Config> {
    let text = fs::read_to_string(path)?;
    let mut config = parse_config(&text, overrides)?;
    config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    config.validate()?;
    Ok(config)
}
