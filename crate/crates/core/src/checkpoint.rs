//! Versioned JSON envelope for trained depth-wise models.

use std::fs;
use std::path::Path;

use depwise_autodiff::{Parameters, Shape, Tensor};
use serde::{Deserialize, Serialize};

use crate::engine::{AggregatorKind, CollectionSemantics, EngineConfig};
use crate::error::{Error, Result};
use crate::model::{ModelParams, MODEL_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: String,
    pub d: usize,
    pub aggregator: AggregatorKind,
    #[serde(default)]
    pub semantics: CollectionSemantics,
    #[serde(default)]
    pub activation: depwise_autodiff::Activation,
    /// Last completed epoch (1-based, 0 before any training).
    pub epoch: usize,
    /// Network learning rate in effect after that epoch.
    pub lr: f64,
    pub tables: Vec<TableRecord>,
}

impl Checkpoint {
    pub fn from_model(model: &ModelParams, epoch: usize, lr: f64) -> Self {
        Checkpoint {
            version: model.version.clone(),
            d: model.d(),
            aggregator: model.config.aggregator,
            semantics: model.config.semantics,
            activation: model.config.activation,
            epoch,
            lr,
            tables: model
                .named_tensors()
                .into_iter()
                .map(|(name, t)| TableRecord {
                    name,
                    shape: t.shape().dims(),
                    data: t.data().to_vec(),
                })
                .collect(),
        }
    }

    /// Rebuilds the model, checking version, names and shapes.
    pub fn to_model(&self) -> Result<ModelParams> {
        if self.version != MODEL_VERSION {
            return Err(Error::Checkpoint(format!(
                "version `{}` is not supported (expected `{MODEL_VERSION}`)",
                self.version
            )));
        }
        let config = EngineConfig {
            d: self.d,
            aggregator: self.aggregator,
            semantics: self.semantics,
            activation: self.activation,
        };
        let mut model = ModelParams::init(config, 0).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let expected: Vec<(String, Shape)> = model.named_tensors().into_iter().map(|(n, t)| (n, t.shape())).collect();
        if expected.len() != self.tables.len() {
            return Err(Error::Checkpoint(format!(
                "{} tables present, {} expected",
                self.tables.len(),
                expected.len()
            )));
        }
        let mut tensors = Vec::with_capacity(expected.len());
        for ((name, shape), rec) in expected.iter().zip(&self.tables) {
            if *name != rec.name {
                return Err(Error::Checkpoint(format!(
                    "table `{}` found where `{name}` was expected",
                    rec.name
                )));
            }
            let got = Shape::from_dims(&rec.shape).map_err(|e| Error::Checkpoint(e.to_string()))?;
            if got != *shape {
                return Err(Error::Checkpoint(format!(
                    "table `{name}` has shape {got}, expected {shape}"
                )));
            }
            let t =
                Tensor::new(got, rec.data.clone()).map_err(|e| Error::Checkpoint(format!("table `{name}`: {e}")))?;
            if !t.is_finite() {
                return Err(Error::Checkpoint(format!("table `{name}` contains non-finite values")));
            }
            tensors.push(t);
        }
        let mut it = tensors.into_iter();
        model.visit_mut(&mut |t| *t = it.next().expect("count checked"));
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
