//! Run configuration: one JSON document covering data generation, model,
//! kernel, training, and evaluation. Unknown keys are rejected; missing keys
//! take the library defaults; the fully resolved document is echoed into
//! every command's output directory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use gpmotion::gp::KernelSpec;
use gpmotion::model::{ModelConfig, TrainConfig};
use gpmotion::synth::SyntheticSpec;

use crate::CliError;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSection,
    pub model: ModelConfig,
    pub kernel: KernelSpec,
    pub train: TrainConfig,
    pub eval: EvalSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Number of sequences to generate.
    pub count: usize,
    pub synth: SyntheticSpec,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection { count: 200, synth: SyntheticSpec::default() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Counter-clockwise quarter-turn degrees to evaluate under.
    pub rotations: Vec<u32>,
    /// Worker threads for per-sequence evaluation; 0 uses the rayon default.
    pub threads: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { rotations: vec![0], threads: 1 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Writes the fully resolved configuration next to a command's outputs.
    pub fn echo(&self, out_dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Data(format!("serializing config: {e}")))?;
        std::fs::write(out_dir.join("resolved_config.json"), text)
            .map_err(|e| CliError::Data(format!("writing resolved config: {e}")))?;
        Ok(())
    }
}
