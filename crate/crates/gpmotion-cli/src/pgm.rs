//! Binary PGM (P5, maxval 255) dumps with a sidecar JSON recording the
//! affine intensity rescale of every written file.

use std::collections::BTreeMap;
use std::path::Path;

use gpmotion::Tensor;
use serde::Serialize;

use crate::CliError;

/// Rescale bookkeeping: `pixel = round((value - min) / (max - min) * 255)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PgmScale {
    pub min: f64,
    pub max: f64,
}

#[derive(Default)]
pub struct ScaleSidecar {
    scales: BTreeMap<String, PgmScale>,
}

impl ScaleSidecar {
    pub fn new() -> Self {
        Self::default()
    }

    /// Writes one image, affinely rescaled to 0–255, and records the scale.
    pub fn write_pgm(&mut self, dir: &Path, name: &str, image: &Tensor) -> Result<(), CliError> {
        let (h, w) = (image.shape()[0], image.shape()[1]);
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &v in image.data() {
            min = min.min(v);
            max = max.max(v);
        }
        let span = if max > min { max - min } else { 1.0 };
        let mut bytes = Vec::with_capacity(32 + h * w);
        bytes.extend_from_slice(format!("P5\n{w} {h}\n255\n").as_bytes());
        for &v in image.data() {
            bytes.push(((v - min) / span * 255.0).round().clamp(0.0, 255.0) as u8);
        }
        std::fs::write(dir.join(name), bytes)
            .map_err(|e| CliError::Data(format!("writing {name}: {e}")))?;
        self.scales.insert(name.to_string(), PgmScale { min, max });
        Ok(())
    }

    /// Writes the accumulated `scales.json`.
    pub fn finish(self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(&self.scales)
            .map_err(|e| CliError::Data(format!("serializing scales: {e}")))?;
        std::fs::write(dir.join("scales.json"), text)
            .map_err(|e| CliError::Data(format!("writing scales.json: {e}")))?;
        Ok(())
    }
}
