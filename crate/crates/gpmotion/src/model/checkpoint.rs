//! Checkpoint format: magic `GPMM`, version u16, a length-prefixed JSON
//! config block, then each parameter as name / shape / f64 LE values.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::gp::KernelSpec;

use super::{ModelConfig, ModelError, MotionModel};

const MAGIC: &[u8; 4] = b"GPMM";
const VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    model: ModelConfig,
    kernel: KernelSpec,
    no_gp: bool,
}

pub fn write_checkpoint(model: &MotionModel, out: &mut impl Write) -> Result<(), ModelError> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    let meta = CheckpointMeta {
        model: model.config.clone(),
        kernel: model.kernel_spec.clone(),
        no_gp: model.no_gp,
    };
    let json = serde_json::to_vec(&meta).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    out.write_all(&(json.len() as u32).to_le_bytes())?;
    out.write_all(&json)?;
    out.write_all(&(model.params.len() as u32).to_le_bytes())?;
    for p in &model.params {
        let name = p.name.as_bytes();
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name)?;
        out.write_all(&(p.value.rank() as u32).to_le_bytes())?;
        for &e in p.value.shape() {
            out.write_all(&(e as u32).to_le_bytes())?;
        }
        for &v in p.value.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(input: &mut impl Read) -> Result<MotionModel, ModelError> {
    let mut magic = [0u8; 4];
    input
        .read_exact(&mut magic)
        .map_err(|_| ModelError::Checkpoint("truncated magic".into()))?;
    if &magic != MAGIC {
        return Err(ModelError::Checkpoint("bad magic (not a GPMM checkpoint)".into()));
    }
    let mut u16b = [0u8; 2];
    input
        .read_exact(&mut u16b)
        .map_err(|_| ModelError::Checkpoint("truncated version".into()))?;
    let version = u16::from_le_bytes(u16b);
    if version != VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let mut u32b = [0u8; 4];
    input
        .read_exact(&mut u32b)
        .map_err(|_| ModelError::Checkpoint("truncated config length".into()))?;
    let json_len = u32::from_le_bytes(u32b) as usize;
    let mut json = vec![0u8; json_len];
    input
        .read_exact(&mut json)
        .map_err(|_| ModelError::Checkpoint("truncated config block".into()))?;
    let meta: CheckpointMeta =
        serde_json::from_slice(&json).map_err(|e| ModelError::Checkpoint(format!("config block: {e}")))?;

    // parameter values are overwritten below; the init seed is irrelevant
    let mut scratch = crate::rng::seeded(0);
    let mut model = MotionModel::init(meta.model, meta.kernel, meta.no_gp, &mut scratch)?;

    input
        .read_exact(&mut u32b)
        .map_err(|_| ModelError::Checkpoint("truncated parameter count".into()))?;
    let count = u32::from_le_bytes(u32b) as usize;
    if count != model.params.len() {
        return Err(ModelError::Checkpoint(format!(
            "checkpoint has {count} parameters, model expects {}",
            model.params.len()
        )));
    }
    for _ in 0..count {
        input
            .read_exact(&mut u32b)
            .map_err(|_| ModelError::Checkpoint("truncated parameter name length".into()))?;
        let name_len = u32::from_le_bytes(u32b) as usize;
        let mut name = vec![0u8; name_len];
        input
            .read_exact(&mut name)
            .map_err(|_| ModelError::Checkpoint("truncated parameter name".into()))?;
        let name = String::from_utf8(name).map_err(|_| ModelError::Checkpoint("non-utf8 name".into()))?;
        input
            .read_exact(&mut u32b)
            .map_err(|_| ModelError::Checkpoint("truncated rank".into()))?;
        let rank = u32::from_le_bytes(u32b) as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            input
                .read_exact(&mut u32b)
                .map_err(|_| ModelError::Checkpoint("truncated shape".into()))?;
            shape.push(u32::from_le_bytes(u32b) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut buf = vec![0u8; numel * 8];
        input
            .read_exact(&mut buf)
            .map_err(|_| ModelError::Checkpoint("truncated parameter data".into()))?;
        let data: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = crate::autodiff::Tensor::new(shape, data)?;
        model.set_param(&name, tensor)?;
    }
    Ok(model)
}
