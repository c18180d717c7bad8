use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::nn::{Activation, TrainConfig};
use crate::transport::SinkhornParams;

/// Block fit tolerance: absolute (cloud units) or 1% of the bounding-box
/// diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum TauE {
    #[default]
    Auto,
    Fixed(f64),
}

impl TauE {
    pub fn resolve(&self, bbox_diagonal: f64) -> f64 {
        match *self {
            TauE::Auto => 0.01 * bbox_diagonal,
            TauE::Fixed(v) => v,
        }
    }
}

impl fmt::Display for TauE {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TauE::Auto => f.write_str("auto"),
            TauE::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl std::str::FromStr for TauE {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(TauE::Auto);
        }
        s.parse::<f64>()
            .map(TauE::Fixed)
            .map_err(|_| format!("tau_e must be a number or \"auto\", got '{s}'"))
    }
}

impl Serialize for TauE {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TauE::Auto => s.serialize_str("auto"),
            TauE::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for TauE {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(TauE::Fixed(v)),
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalSettings {
    pub train: TrainConfig,
    /// Scaling sweeps per epoch when refreshing the warm-started
    /// correspondence (the first solve uses the full Sinkhorn budget).
    pub refresh_iterations: usize,
    /// Check the normal penalty every this many epochs...
    pub penalty_interval: usize,
    /// ...during this many initial epochs.
    pub penalty_window: usize,
    pub max_restarts: usize,
}

impl Default for GlobalSettings {
    fn default() -> Self {
        Self {
            train: TrainConfig {
                epochs: 300,
                ..TrainConfig::default()
            },
            refresh_iterations: 20,
            penalty_interval: 50,
            penalty_window: 500,
            max_restarts: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalSettings {
    /// Training on the local cloud.
    pub phase1: TrainConfig,
    /// Retraining on fused targets, continuing from phase-1 parameters.
    pub phase2: TrainConfig,
    /// Reinitializations allowed per region after a diverged training.
    pub max_restarts: usize,
    pub lloyd_iterations: usize,
}

impl LocalSettings {
    /// Fine regions are larger than coarse ones and need a longer, decaying
    /// schedule to end below the coarse error.
    pub fn fine() -> Self {
        let mut s = Self::default();
        s.phase1.epochs = 300;
        s.phase2.epochs = 150;
        s.phase1.final_lr_fraction = 0.05;
        s.phase2.final_lr_fraction = 0.05;
        s
    }
}

impl Default for LocalSettings {
    fn default() -> Self {
        let train = |epochs| TrainConfig {
            epochs,
            ..TrainConfig::default()
        };
        Self {
            phase1: train(150),
            phase2: train(60),
            max_restarts: 3,
            lloyd_iterations: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockSettings {
    /// Initial grid is `n1³` equal blocks over the cloud bounding box.
    pub n1: usize,
    pub n2_start: usize,
    pub n2_cap: usize,
    pub enlargement: f64,
}

impl Default for BlockSettings {
    fn default() -> Self {
        Self {
            n1: 10,
            n2_start: 2,
            n2_cap: 6,
            enlargement: 1.01,
        }
    }
}

/// Last stage to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Global,
    Coarse,
    #[default]
    Fine,
}

/// Every free constant of the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub reference_frequency: usize,
    pub reference_radius: f64,
    /// Max norm of the normalized cloud, as a fraction of the reference radius.
    pub fill: f64,
    pub tau_a: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub tau_e: TauE,
    pub alpha: f64,
    /// Fusion keeps at most this many highest-weight images per vertex in
    /// the fine stage.
    pub top_k: usize,
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
    pub stop_after: Stage,
    pub sinkhorn: SinkhornParams,
    pub blocks: BlockSettings,
    pub global: GlobalSettings,
    pub coarse: LocalSettings,
    pub fine: LocalSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl PipelineConfig {
    /// 2,562-vertex reference with epoch budgets sized for one CPU core.
    pub fn desk() -> Self {
        Self {
            reference_frequency: 16,
            reference_radius: 1.0,
            fill: 0.9,
            tau_a: 0.55,
            beta1: 1.2,
            beta2: 1.1,
            beta3: 1.05,
            tau_e: TauE::Auto,
            alpha: 0.5,
            top_k: 3,
            hidden_layers: vec![128, 256, 512, 512],
            activation: Activation::Relu,
            seed: 0,
            stop_after: Stage::Fine,
            sinkhorn: SinkhornParams::default(),
            blocks: BlockSettings::default(),
            global: GlobalSettings::default(),
            coarse: LocalSettings::default(),
            fine: LocalSettings::fine(),
        }
    }

    /// 36,002-vertex reference with longer training.
    pub fn full() -> Self {
        let mut cfg = Self::desk();
        cfg.reference_frequency = 60;
        cfg.global.train.epochs = 2000;
        for local in [&mut cfg.coarse, &mut cfg.fine] {
            local.phase1.epochs = 1000;
            local.phase2.epochs = 500;
        }
        cfg
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![3];
        sizes.extend(&self.hidden_layers);
        sizes.push(3);
        sizes
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(msg.to_string()));
        if !(1..=64).contains(&self.reference_frequency) {
            return bad("reference_frequency must lie in 1..=64");
        }
        let positive = [
            ("reference_radius", self.reference_radius),
            ("tau_a", self.tau_a),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("beta3", self.beta3),
            ("blocks.enlargement", self.blocks.enlargement),
            ("sinkhorn.epsilon", self.sinkhorn.epsilon),
            ("sinkhorn.tolerance", self.sinkhorn.tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.fill > 0.0 && self.fill < 1.0) {
            return bad("fill must lie in (0, 1) so the cloud is enclosed");
        }
        if let TauE::Fixed(v) = self.tau_e {
            if !(v > 0.0) {
                return bad("tau_e must be positive");
            }
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if self.top_k == 0 || self.blocks.n1 == 0 || self.blocks.n2_start < 2 || self.blocks.n2_cap < self.blocks.n2_start {
            return bad("top_k and n1 must be >= 1, and 2 <= n2_start <= n2_cap");
        }
        if self.hidden_layers.contains(&0) {
            return bad("hidden layer widths must be positive");
        }
        if self.sinkhorn.max_iterations == 0 || self.global.refresh_iterations == 0 {
            return bad("sinkhorn iteration budgets must be positive");
        }
        if self.global.penalty_interval == 0 {
            return bad("penalty_interval must be positive");
        }
        self.global.train.validate()?;
        for local in [&self.coarse, &self.fine] {
            local.phase1.validate()?;
            local.phase2.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_e_parses_both_forms() {
        assert_eq!("auto".parse::<TauE>(), Ok(TauE::Auto));
        assert_eq!("0.25".parse::<TauE>(), Ok(TauE::Fixed(0.25)));
        assert!("big".parse::<TauE>().is_err());
        assert_eq!(TauE::Auto.resolve(3.0), 0.03);
    }

    #[test]
    fn profiles_validate() {
        PipelineConfig::desk().validate().unwrap();
        PipelineConfig::full().validate().unwrap();
        assert_eq!(PipelineConfig::desk().layer_sizes(), vec![3, 128, 256, 512, 512, 3]);
    }

    #[test]
    fn rejects_bad_constants() {
        let mut cfg = PipelineConfig::desk();
        cfg.beta2 = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::desk();
        cfg.alpha = 1.5;
        assert!(cfg.validate().is_err());
    }
}
