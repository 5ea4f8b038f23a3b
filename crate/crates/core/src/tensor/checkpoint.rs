//! Parameter checkpoints: a JSON entry per network (identifiers, shapes,
//! optimizer hyperparameters and step count) plus one raw little-endian
//! `f64` payload per parameter and per Adam moment.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamConfig, AdamState, Parameter, Tensor};
use crate::io::{f64s_to_le_bytes, le_bytes_to_f64s, write_atomic};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub id: String,
    pub shape: Vec<usize>,
    pub value: String,
    pub adam_m: String,
    pub adam_v: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkEntry {
    pub name: String,
    pub adam: AdamConfig,
    pub adam_step: u64,
    pub parameters: Vec<ParamEntry>,
}

/// The parameters of one network together with its optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet {
    pub name: String,
    pub params: Vec<Parameter>,
    pub adam: AdamState,
}

fn read_payload(dir: &Path, file: &str, expected: usize) -> Result<Vec<f64>> {
    let path = dir.join(file);
    if !path.is_file() {
        return Err(Error::MissingFile(path));
    }
    let bytes = fs::read(&path)?;
    let values = le_bytes_to_f64s(&bytes)
        .ok_or_else(|| Error::Checkpoint(format!("{file}: length not a multiple of 8")))?;
    if values.len() != expected {
        return Err(Error::LengthMismatch {
            expected: expected * 8,
            actual: bytes.len(),
        });
    }
    Ok(values)
}

impl ParameterSet {
    pub fn new(name: impl Into<String>, params: Vec<Parameter>, config: AdamConfig) -> Self {
        let adam = AdamState::new(config, &params);
        Self {
            name: name.into(),
            params,
            adam,
        }
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(|p| p.tensor.zero_grad());
    }

    pub fn step(&mut self) -> Result<()> {
        self.adam.step(&mut self.params)
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn save(&self, dir: &Path) -> Result<NetworkEntry> {
        fs::create_dir_all(dir)?;
        let mut parameters = Vec::with_capacity(self.params.len());
        for (i, p) in self.params.iter().enumerate() {
            let entry = ParamEntry {
                id: p.id.clone(),
                shape: p.shape().to_vec(),
                value: format!("{}.f64", p.id),
                adam_m: format!("{}.adam_m.f64", p.id),
                adam_v: format!("{}.adam_v.f64", p.id),
            };
            write_atomic(&dir.join(&entry.value), &f64s_to_le_bytes(p.tensor.data()))?;
            write_atomic(&dir.join(&entry.adam_m), &f64s_to_le_bytes(&self.adam.m[i]))?;
            write_atomic(&dir.join(&entry.adam_v), &f64s_to_le_bytes(&self.adam.v[i]))?;
            parameters.push(entry);
        }
        Ok(NetworkEntry {
            name: self.name.clone(),
            adam: self.adam.config,
            adam_step: self.adam.t,
            parameters,
        })
    }

    pub fn load(dir: &Path, entry: &NetworkEntry) -> Result<Self> {
        let mut params = Vec::with_capacity(entry.parameters.len());
        let mut m = Vec::with_capacity(entry.parameters.len());
        let mut v = Vec::with_capacity(entry.parameters.len());
        for pe in &entry.parameters {
            let n: usize = pe.shape.iter().product();
            let values = read_payload(dir, &pe.value, n)?;
            params.push(Parameter::new(
                pe.id.clone(),
                Tensor::new(pe.shape.clone(), values)?,
            ));
            m.push(read_payload(dir, &pe.adam_m, n)?);
            v.push(read_payload(dir, &pe.adam_v, n)?);
        }
        Ok(Self {
            name: entry.name.clone(),
            params,
            adam: AdamState {
                config: entry.adam,
                t: entry.adam_step,
                m,
                v,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = Parameter::new(
            "net.w",
            Tensor::new(
                vec![2, 3],
                vec![0.1, -1e-300, f64::MIN_POSITIVE, 3.5, -0.0, 1.0 / 3.0],
            )
            .unwrap(),
        );
        let mut set = ParameterSet::new("net", vec![p], AdamConfig::default());
        set.params[0]
            .tensor
            .accumulate_grad(&[1.0, 2.0, 3.0, -4.0, 5.0, 6.0])
            .unwrap();
        set.step().unwrap();
        let entry = set.save(dir.path()).unwrap();
        let json = serde_json::to_string(&entry).unwrap();
        let entry: NetworkEntry = serde_json::from_str(&json).unwrap();
        let mut back = ParameterSet::load(dir.path(), &entry).unwrap();
        // gradients are not checkpointed
        set.zero_grad();
        back.zero_grad();
        for (a, b) in set.params[0]
            .tensor
            .data()
            .iter()
            .zip(back.params[0].tensor.data())
        {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back, set);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let set = ParameterSet::new(
            "n",
            vec![Parameter::new("n.b", Tensor::zeros(&[4]))],
            AdamConfig::default(),
        );
        let entry = set.save(dir.path()).unwrap();
        fs::write(dir.path().join("n.b.f64"), [0u8; 24]).unwrap();
        assert!(ParameterSet::load(dir.path(), &entry).is_err());
    }
}
