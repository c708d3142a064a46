//! Versioned model artifacts. One self-describing JSON document holds the
//! model kind, its configuration and every weight tensor; the reservoir
//! matrix is stored as a coordinate list. Weights round-trip bit-exactly
//! (the JSON float encoder emits shortest round-trip representations).
//! Reservoir/hidden state is not persisted: a loaded model starts from the
//! zero state, which is also what `reset_state` produces.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esn::{build_reservoir, EsnModel, ReservoirConfig, SparseMatrix};
use crate::lstm::{LstmConfig, LstmModel};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct SparseWeights {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EsnWeights {
    config: ReservoirConfig,
    w_in: Vec<f64>,
    w_res: SparseWeights,
    w_fb: Option<Vec<f64>>,
    w_out: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LstmWeights {
    config: LstmConfig,
    w_xi: Vec<f64>,
    w_hi: Vec<f64>,
    b_i: Vec<f64>,
    w_xf: Vec<f64>,
    w_hf: Vec<f64>,
    b_f: Vec<f64>,
    w_xc: Vec<f64>,
    w_hc: Vec<f64>,
    b_c: Vec<f64>,
    w_xo: Vec<f64>,
    w_ho: Vec<f64>,
    b_o: Vec<f64>,
    w_y: Vec<f64>,
    b_y: f64,
    trained: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ModelWeights {
    Esn(EsnWeights),
    Lstm(LstmWeights),
}

#[derive(Debug, Serialize, Deserialize)]
struct Envelope {
    format_version: u32,
    #[serde(flatten)]
    model: ModelWeights,
}

/// A deserialized model of either kind.
#[derive(Debug)]
pub enum ModelArtifact {
    Esn(EsnModel),
    Lstm(LstmModel),
}

impl ModelArtifact {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelArtifact::Esn(_) => "esn",
            ModelArtifact::Lstm(_) => "lstm",
        }
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

fn matrix_from_rows(n: usize, data: &[f64]) -> Result<DMatrix<f64>> {
    if data.len() != n * n {
        return Err(Error::Artifact(format!(
            "expected {} matrix entries, found {}",
            n * n,
            data.len()
        )));
    }
    Ok(DMatrix::from_row_slice(n, n, data))
}

pub fn serialize_esn(model: &EsnModel) -> String {
    let envelope = Envelope {
        format_version: FORMAT_VERSION,
        model: ModelWeights::Esn(EsnWeights {
            config: model.config.clone(),
            w_in: model.w_in().to_vec(),
            w_res: SparseWeights {
                rows: model.w_res().size(),
                cols: model.w_res().size(),
                entries: model.w_res().triplets(),
            },
            w_fb: model.w_fb.clone(),
            w_out: model.w_out().map(|w| w.to_vec()),
        }),
    };
    serde_json::to_string_pretty(&envelope).expect("artifact serialization cannot fail") + "\n"
}

pub fn serialize_lstm(model: &LstmModel) -> String {
    let envelope = Envelope {
        format_version: FORMAT_VERSION,
        model: ModelWeights::Lstm(LstmWeights {
            config: model.config.clone(),
            w_xi: model.w_xi.as_slice().to_vec(),
            w_hi: matrix_rows(&model.w_hi),
            b_i: model.b_i.as_slice().to_vec(),
            w_xf: model.w_xf.as_slice().to_vec(),
            w_hf: matrix_rows(&model.w_hf),
            b_f: model.b_f.as_slice().to_vec(),
            w_xc: model.w_xc.as_slice().to_vec(),
            w_hc: matrix_rows(&model.w_hc),
            b_c: model.b_c.as_slice().to_vec(),
            w_xo: model.w_xo.as_slice().to_vec(),
            w_ho: matrix_rows(&model.w_ho),
            b_o: model.b_o.as_slice().to_vec(),
            w_y: model.w_y.as_slice().to_vec(),
            b_y: model.b_y,
            trained: model.is_trained(),
        }),
    };
    serde_json::to_string_pretty(&envelope).expect("artifact serialization cannot fail") + "\n"
}

pub fn deserialize(text: &str) -> Result<ModelArtifact> {
    let envelope: Envelope =
        serde_json::from_str(text).map_err(|e| Error::Artifact(format!("bad artifact json: {e}")))?;
    if envelope.format_version != FORMAT_VERSION {
        return Err(Error::Artifact(format!(
            "unsupported format version {} (expected {FORMAT_VERSION})",
            envelope.format_version
        )));
    }
    match envelope.model {
        ModelWeights::Esn(w) => {
            let n = w.config.units;
            if w.w_in.len() != n || w.w_res.rows != n || w.w_res.cols != n {
                return Err(Error::Artifact("esn weight shapes do not match config".into()));
            }
            // rebuild through the constructor to get a valid skeleton, then
            // overwrite every weight with the stored values
            let mut model = build_reservoir(&w.config)?;
            model.w_in = w.w_in;
            model.w_res = SparseMatrix::from_triplets(n, w.w_res.entries)
                .map_err(|e| Error::Artifact(format!("bad reservoir triplets: {e}")))?;
            model.w_fb = w.w_fb;
            model.w_out = match w.w_out {
                Some(v) => {
                    if v.len() != n + 1 {
                        return Err(Error::Artifact(format!(
                            "readout length {} does not match units {n} + 1",
                            v.len()
                        )));
                    }
                    Some(DVector::from_column_slice(&v))
                }
                None => None,
            };
            model.reset_state();
            Ok(ModelArtifact::Esn(model))
        }
        ModelWeights::Lstm(w) => {
            let n = w.config.hidden_units;
            let vector = |data: &[f64], name: &str| -> Result<DVector<f64>> {
                if data.len() != n {
                    return Err(Error::Artifact(format!(
                        "{name} has {} entries, expected {n}",
                        data.len()
                    )));
                }
                Ok(DVector::from_column_slice(data))
            };
            let mut model = LstmModel::init(&w.config)?;
            model.w_xi = vector(&w.w_xi, "w_xi")?;
            model.w_hi = matrix_from_rows(n, &w.w_hi)?;
            model.b_i = vector(&w.b_i, "b_i")?;
            model.w_xf = vector(&w.w_xf, "w_xf")?;
            model.w_hf = matrix_from_rows(n, &w.w_hf)?;
            model.b_f = vector(&w.b_f, "b_f")?;
            model.w_xc = vector(&w.w_xc, "w_xc")?;
            model.w_hc = matrix_from_rows(n, &w.w_hc)?;
            model.b_c = vector(&w.b_c, "b_c")?;
            model.w_xo = vector(&w.w_xo, "w_xo")?;
            model.w_ho = matrix_from_rows(n, &w.w_ho)?;
            model.b_o = vector(&w.b_o, "b_o")?;
            model.w_y = vector(&w.w_y, "w_y")?;
            model.b_y = w.b_y;
            model.trained = w.trained;
            model.reset_state();
            Ok(ModelArtifact::Lstm(model))
        }
    }
}

pub fn save(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelArtifact> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Artifact(format!("cannot read {}: {e}", path.display())))?;
    deserialize(&text)
}
