use std::path::{Path, PathBuf};

use isomesh::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::{Overrides, Profile};
use crate::{io_err, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MeshFormat {
    #[default]
    Obj,
    Ply,
}

impl MeshFormat {
    pub fn extension(self) -> &'static str {
        match self {
            MeshFormat::Obj => "obj",
            MeshFormat::Ply => "ply",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSettings {
    pub dir: PathBuf,
    pub mesh_format: MeshFormat,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("isomesh-out"),
            mesh_format: MeshFormat::Obj,
        }
    }
}

/// Contents of a `fit` config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub pipeline: PipelineConfig,
    pub output: OutputSettings,
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl FitConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let pipeline = match profile {
            Profile::Desk => PipelineConfig::desk(),
            Profile::Full => PipelineConfig::full(),
        };
        Self {
            pipeline,
            output: OutputSettings::default(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config always serializes")
    }

    /// Parses `text` with every omitted key taken from `base`.
    pub fn parse_over(base: &FitConfig, text: &str) -> Result<Self, String> {
        let over: toml::Table = toml::from_str(text).map_err(|e| e.to_string())?;
        let mut merged: toml::Table = toml::from_str(&base.to_toml()).expect("serialized config parses");
        merge(&mut merged, over);
        FitConfig::deserialize(merged).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path, profile: Profile) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::parse_over(&Self::for_profile(profile), &text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) {
        let p = &mut self.pipeline;
        if let Some(v) = o.seed {
            p.seed = v;
        }
        if let Some(v) = o.frequency {
            p.reference_frequency = v;
        }
        if let Some(v) = o.tau_a {
            p.tau_a = v;
        }
        if let Some(v) = o.beta1 {
            p.beta1 = v;
        }
        if let Some(v) = o.beta2 {
            p.beta2 = v;
        }
        if let Some(v) = o.beta3 {
            p.beta3 = v;
        }
        if let Some(v) = o.tau_e {
            p.tau_e = v;
        }
        if let Some(v) = o.alpha {
            p.alpha = v;
        }
        if let Some(v) = o.top_k {
            p.top_k = v;
        }
        if let Some(v) = o.epsilon {
            p.sinkhorn.epsilon = v;
        }
        if let Some(v) = o.learning_rate {
            p.global.train.learning_rate = v;
            for local in [&mut p.coarse, &mut p.fine] {
                local.phase1.learning_rate = v;
                local.phase2.learning_rate = v;
            }
        }
        if let Some(v) = o.global_epochs {
            p.global.train.epochs = v;
        }
        if let Some(v) = o.local_epochs {
            p.coarse.phase1.epochs = v;
            p.fine.phase1.epochs = v;
        }
        if let Some(v) = o.retrain_epochs {
            p.coarse.phase2.epochs = v;
            p.fine.phase2.epochs = v;
        }
        if let Some(v) = o.stop_after {
            p.stop_after = v;
        }
    }

    /// SHA-256 of the pipeline section as written to `config.toml`.
    pub fn hash(&self) -> String {
        let text = toml::to_string_pretty(&self.pipeline).expect("config always serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_profile_defaults() {
        let base = FitConfig::for_profile(Profile::Full);
        let cfg = FitConfig::parse_over(&base, "[pipeline]\nbeta1 = 1.3\n[pipeline.global.train]\nepochs = 7\n").unwrap();
        assert_eq!(cfg.pipeline.beta1, 1.3);
        assert_eq!(cfg.pipeline.global.train.epochs, 7);
        assert_eq!(cfg.pipeline.reference_frequency, 60);
        assert_eq!(cfg.pipeline.global.train.learning_rate, base.pipeline.global.train.learning_rate);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let base = FitConfig::default();
        assert!(FitConfig::parse_over(&base, "[pipeline]\nbeta4 = 1.0\n").is_err());
        assert!(FitConfig::parse_over(&base, "colour = 1\n").is_err());
    }

    #[test]
    fn hash_tracks_pipeline_values() {
        let a = FitConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.pipeline.seed = 9;
        assert_ne!(a.hash(), b.hash());
        b = a.clone();
        b.output.dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
