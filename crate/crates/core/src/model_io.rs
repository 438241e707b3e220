//! Versioned JSON model files. Matrices are stored row-major with explicit
//! shapes so the files stay readable by hand and by other tools.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baselines::DmdcModel;
use crate::data::NormScales;
use crate::error::{Error, Result};
use crate::koopman::{Activation, Encoder, KoopmanModel, KoopmanOperator, Layer};

pub const FORMAT: &str = "platoon-koopman-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDoc {
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub data: Vec<f64>,
}

impl MatrixDoc {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }

    fn to_matrix(&self, what: &str) -> Result<DMatrix<f64>> {
        if self.rows * self.cols != self.data.len() {
            return Err(Error::ModelFormat(format!(
                "{what}: {}x{} matrix with {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDoc {
    pub weights: MatrixDoc,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelBody {
    Koopman {
        dt: f64,
        state_dim: usize,
        embed_dim: usize,
        lifted_dim: usize,
        norm: NormScales,
        activation: Activation,
        encoder: Vec<LayerDoc>,
        a: MatrixDoc,
        b: Vec<f64>,
    },
    Dmdc {
        dt: f64,
        state_dim: usize,
        rank_used: usize,
        a: MatrixDoc,
        b: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    #[serde(flatten)]
    pub body: ModelBody,
}

/// A model of either kind as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Koopman(KoopmanModel),
    Dmdc(DmdcModel),
}

impl From<&KoopmanModel> for ModelDocument {
    fn from(m: &KoopmanModel) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            body: ModelBody::Koopman {
                dt: m.dt,
                state_dim: m.state_dim(),
                embed_dim: m.embed_dim(),
                lifted_dim: m.lifted_dim(),
                norm: m.norm.clone(),
                activation: m.encoder.activation,
                encoder: m
                    .encoder
                    .layers
                    .iter()
                    .map(|l| LayerDoc {
                        weights: MatrixDoc::from_matrix(&l.weights),
                        bias: l.bias.as_slice().to_vec(),
                    })
                    .collect(),
                a: MatrixDoc::from_matrix(&m.operator.a),
                b: m.operator.b.as_slice().to_vec(),
            },
        }
    }
}

impl From<&DmdcModel> for ModelDocument {
    fn from(m: &DmdcModel) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            body: ModelBody::Dmdc {
                dt: m.dt,
                state_dim: m.state_dim(),
                rank_used: m.rank_used,
                a: MatrixDoc::from_matrix(&m.a),
                b: m.b.as_slice().to_vec(),
            },
        }
    }
}

impl ModelDocument {
    pub fn into_model(self) -> Result<AnyModel> {
        match self.body {
            ModelBody::Koopman {
                dt,
                state_dim,
                embed_dim,
                lifted_dim,
                norm,
                activation,
                encoder,
                a,
                b,
            } => {
                let layers = encoder
                    .iter()
                    .enumerate()
                    .map(|(i, l)| {
                        Ok(Layer {
                            weights: l.weights.to_matrix(&format!("encoder layer {i}"))?,
                            bias: DVector::from_vec(l.bias.clone()),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let enc = Encoder {
                    input_dim: state_dim,
                    layers,
                    activation,
                };
                let op = KoopmanOperator {
                    a: a.to_matrix("A")?,
                    b: DVector::from_vec(b),
                };
                let model = KoopmanModel::new(enc, op, norm, dt)?;
                if model.embed_dim() != embed_dim || model.lifted_dim() != lifted_dim {
                    return Err(Error::ModelFormat(format!(
                        "declared dims ({state_dim}, {embed_dim}, {lifted_dim}) do not match arrays"
                    )));
                }
                Ok(AnyModel::Koopman(model))
            }
            ModelBody::Dmdc {
                dt,
                state_dim,
                rank_used,
                a,
                b,
            } => {
                let a = a.to_matrix("A")?;
                if a.nrows() != state_dim || a.ncols() != state_dim || b.len() != state_dim {
                    return Err(Error::ModelFormat(format!(
                        "DMDc arrays do not match state_dim {state_dim}"
                    )));
                }
                Ok(AnyModel::Dmdc(DmdcModel {
                    a,
                    b: DVector::from_vec(b),
                    rank_used,
                    dt,
                }))
            }
        }
    }
}

pub fn to_json(doc: &ModelDocument) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("model documents always serialize");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> Result<AnyModel> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
    let format = value.get("format").and_then(|f| f.as_str());
    if format != Some(FORMAT) {
        return Err(Error::ModelFormat(format!(
            "not a {FORMAT} file (format = {format:?})"
        )));
    }
    let version = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::ModelFormat("missing version".into()))?;
    if version != VERSION as u64 {
        return Err(Error::Version {
            found: version as u32,
            expected: VERSION,
        });
    }
    let doc: ModelDocument =
        serde_json::from_value(value).map_err(|e| Error::ModelFormat(e.to_string()))?;
    doc.into_model()
}

fn write(path: &Path, doc: &ModelDocument) -> Result<()> {
    fs::write(path, to_json(doc)).map_err(|e| Error::io(path, e))
}

pub fn save_model(model: &KoopmanModel, path: &Path) -> Result<()> {
    write(path, &model.into())
}

pub fn save_dmdc(model: &DmdcModel, path: &Path) -> Result<()> {
    write(path, &model.into())
}

pub fn load_any(path: &Path) -> Result<AnyModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}

pub fn load_model(path: &Path) -> Result<KoopmanModel> {
    match load_any(path)? {
        AnyModel::Koopman(m) => Ok(m),
        AnyModel::Dmdc(_) => Err(Error::ModelFormat(format!(
            "{} holds a DMDc model, expected a Koopman model",
            path.display()
        ))),
    }
}

pub fn load_dmdc(path: &Path) -> Result<DmdcModel> {
    match load_any(path)? {
        AnyModel::Dmdc(m) => Ok(m),
        AnyModel::Koopman(_) => Err(Error::ModelFormat(format!(
            "{} holds a Koopman model, expected a DMDc model",
            path.display()
        ))),
    }
}
