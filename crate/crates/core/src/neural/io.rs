//! Parameter serialization: a JSON manifest naming every tensor and its
//! shape, plus a little-endian `f32` blob with the values concatenated in
//! manifest order.

use serde::{Deserialize, Serialize};

use super::params::{Group, ParameterSet};
use super::tensor::Tensor;
use super::NeuralError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub group: Group,
    pub shape: Vec<usize>,
}

pub fn param_entries(params: &ParameterSet) -> Vec<TensorEntry> {
    params
        .iter()
        .map(|p| TensorEntry {
            name: p.name.clone(),
            group: p.group,
            shape: p.value.shape().to_vec(),
        })
        .collect()
}

pub fn params_to_blob(params: &ParameterSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(params.num_values() * 4);
    for p in params.iter() {
        for &v in p.value.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn f32_blob(values: impl IntoIterator<Item = f64>) -> Vec<u8> {
    values
        .into_iter()
        .flat_map(|v| (v as f32).to_le_bytes())
        .collect()
}

pub fn read_f32_blob(blob: &[u8]) -> Result<Vec<f64>, NeuralError> {
    if blob.len() % 4 != 0 {
        return Err(NeuralError::Format(format!(
            "blob length {} is not a multiple of 4",
            blob.len()
        )));
    }
    Ok(blob
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect())
}

pub fn params_from_blob(entries: &[TensorEntry], blob: &[u8]) -> Result<ParameterSet, NeuralError> {
    let values = read_f32_blob(blob)?;
    let total: usize = entries.iter().map(|e| e.shape.iter().product::<usize>()).sum();
    if total != values.len() {
        return Err(NeuralError::Format(format!(
            "manifest describes {total} values, blob holds {}",
            values.len()
        )));
    }
    let mut params = ParameterSet::new();
    let mut offset = 0;
    for e in entries {
        let n: usize = e.shape.iter().product();
        params.push(
            e.name.clone(),
            e.group,
            Tensor::new(e.shape.clone(), values[offset..offset + n].to_vec()),
        );
        offset += n;
    }
    Ok(params)
}
