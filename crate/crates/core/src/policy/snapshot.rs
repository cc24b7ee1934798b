//! Self-describing JSON snapshots of a [`PolicyModel`].

use serde::{Deserialize, Serialize};

use super::{ActionSpace, Activation, Dense, InitScheme, Parameters, PolicyModel};
use crate::rng::Rng;
use crate::{Error, Result};

pub const SNAPSHOT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotDoc {
    format_version: u32,
    algorithm_id: String,
    seed: u64,
    init_descriptor: InitScheme,
    input_width: usize,
    layer_widths: Vec<usize>,
    activation: Activation,
    action_labels: Vec<String>,
    layers: Vec<LayerDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    name: String,
    /// `[rows, cols]` of the row-major weight array.
    shape: [usize; 2],
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LayerDoc {
    fn from_dense(name: String, d: &Dense) -> Self {
        Self {
            name,
            shape: [d.rows, d.cols],
            weights: d.weights.clone(),
            bias: d.bias.clone(),
        }
    }

    fn into_dense(self, rows: usize, cols: usize) -> Result<Dense> {
        if self.shape != [rows, cols] {
            return Err(Error::Parse(format!(
                "layer `{}` has shape {:?}, expected [{rows}, {cols}]",
                self.name, self.shape
            )));
        }
        if self.weights.len() != rows * cols || self.bias.len() != rows {
            return Err(Error::Parse(format!(
                "layer `{}` array lengths do not match its shape",
                self.name
            )));
        }
        Ok(Dense {
            rows,
            cols,
            weights: self.weights,
            bias: self.bias,
        })
    }
}

/// Serializes the model; weights survive a round trip bit-for-bit.
pub fn snapshot(model: &PolicyModel) -> String {
    let p = &model.params;
    let mut layers: Vec<LayerDoc> = p
        .hidden
        .iter()
        .enumerate()
        .map(|(i, d)| LayerDoc::from_dense(format!("hidden{i}"), d))
        .collect();
    layers.push(LayerDoc::from_dense("policy".into(), &p.policy));
    layers.push(LayerDoc::from_dense("value".into(), &p.value));
    let doc = SnapshotDoc {
        format_version: SNAPSHOT_FORMAT_VERSION,
        algorithm_id: Rng::ALGORITHM_ID.to_string(),
        seed: model.seed,
        init_descriptor: model.scheme,
        input_width: model.input_width,
        layer_widths: model.layer_widths.clone(),
        activation: model.activation,
        action_labels: model.action_space.labels().to_vec(),
        layers,
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("snapshot document serializes");
    text.push('\n');
    text
}

pub fn restore(document: &str) -> Result<PolicyModel> {
    let doc: SnapshotDoc =
        serde_json::from_str(document).map_err(|e| Error::Parse(format!("snapshot: {e}")))?;
    if doc.format_version != SNAPSHOT_FORMAT_VERSION {
        return Err(Error::Parse(format!(
            "snapshot format_version {} is not supported (expected {SNAPSHOT_FORMAT_VERSION})",
            doc.format_version
        )));
    }
    if doc.algorithm_id != Rng::ALGORITHM_ID {
        return Err(Error::UnsupportedGenerator(doc.algorithm_id));
    }
    doc.init_descriptor
        .validate()
        .map_err(|e| Error::Parse(e.to_string()))?;
    if doc.input_width == 0 || doc.layer_widths.is_empty() || doc.layer_widths.contains(&0) {
        return Err(Error::Parse("snapshot has a zero or empty width".into()));
    }
    let action_space =
        ActionSpace::new(doc.action_labels).map_err(|e| Error::Parse(e.to_string()))?;
    if doc.layers.len() != doc.layer_widths.len() + 2 {
        return Err(Error::Parse(format!(
            "expected {} layers, found {}",
            doc.layer_widths.len() + 2,
            doc.layers.len()
        )));
    }

    let mut layers = doc.layers.into_iter();
    let mut hidden = Vec::with_capacity(doc.layer_widths.len());
    let mut fan_in = doc.input_width;
    for &width in &doc.layer_widths {
        let layer = layers.next().expect("counted above");
        hidden.push(layer.into_dense(width, fan_in)?);
        fan_in = width;
    }
    let policy = layers
        .next()
        .expect("counted above")
        .into_dense(action_space.size(), fan_in)?;
    let value = layers.next().expect("counted above").into_dense(1, fan_in)?;
    let params = Parameters {
        hidden,
        policy,
        value,
    };
    if !params.all_finite() {
        return Err(Error::Parse("snapshot contains non-finite weights".into()));
    }
    Ok(PolicyModel {
        input_width: doc.input_width,
        layer_widths: doc.layer_widths,
        activation: doc.activation,
        action_space,
        scheme: doc.init_descriptor,
        seed: doc.seed,
        params,
    })
}
