use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ComponentParams, MppccaModel};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Versioned JSON form of a fitted model. Matrices are arrays of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub dt: usize,
    pub d1: usize,
    pub d2: usize,
    pub dx: usize,
    pub eta_c: f64,
    pub eta_wx: f64,
    #[serde(default)]
    pub enforce_block_diagonal: bool,
    pub components: Vec<ComponentDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDocument {
    pub pi: f64,
    pub mu: Vec<f64>,
    pub w_x: Vec<Vec<f64>>,
    pub w_t: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(name: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::invalid(format!("{name} must be {nrows}×{ncols}")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl From<&MppccaModel> for ModelDocument {
    fn from(m: &MppccaModel) -> Self {
        Self {
            version: MODEL_FORMAT_VERSION,
            k: m.k(),
            dt: m.dt,
            d1: m.d1,
            d2: m.d2,
            dx: m.dx(),
            eta_c: m.eta_c,
            eta_wx: m.eta_wx,
            enforce_block_diagonal: m.enforce_block_diagonal,
            components: m
                .components
                .iter()
                .map(|c| ComponentDocument {
                    pi: c.pi,
                    mu: c.mu.iter().copied().collect(),
                    w_x: rows_of(&c.w_x),
                    w_t: rows_of(&c.w_t),
                    psi: rows_of(&c.psi),
                })
                .collect(),
        }
    }
}

impl TryFrom<ModelDocument> for MppccaModel {
    type Error = Error;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        if doc.version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model format version {}",
                doc.version
            )));
        }
        if doc.components.len() != doc.k {
            return Err(Error::invalid(format!(
                "K = {} but {} components listed",
                doc.k,
                doc.components.len()
            )));
        }
        let dy = doc.d1 + doc.d2;
        let components = doc
            .components
            .iter()
            .enumerate()
            .map(|(k, c)| {
                if c.mu.len() != dy {
                    return Err(Error::invalid(format!("component {k}: mu must have length {dy}")));
                }
                Ok(ComponentParams {
                    pi: c.pi,
                    mu: DVector::from_vec(c.mu.clone()),
                    w_x: matrix_from_rows("w_x", &c.w_x, dy, doc.dx)?,
                    w_t: matrix_from_rows("w_t", &c.w_t, dy, doc.dt)?,
                    psi: matrix_from_rows("psi", &c.psi, dy, dy)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let model = MppccaModel {
            components,
            d1: doc.d1,
            d2: doc.d2,
            dt: doc.dt,
            eta_c: doc.eta_c,
            eta_wx: doc.eta_wx,
            enforce_block_diagonal: doc.enforce_block_diagonal,
        };
        model.validate()?;
        Ok(model)
    }
}

impl MppccaModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDocument::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(s)?;
        doc.try_into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model_from(values: &[f64], pi0: f64) -> MppccaModel {
        let mut it = values.iter().copied().cycle();
        let mut mat = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| it.next().unwrap());
        let comp = |pi: f64, m: &mut dyn FnMut(usize, usize) -> DMatrix<f64>| ComponentParams {
            pi,
            mu: m(3, 1).column(0).into_owned(),
            w_x: m(3, 2),
            w_t: m(3, 1),
            psi: m(3, 3),
        };
        let a = comp(pi0, &mut mat);
        let b = comp(1.0 - pi0, &mut mat);
        MppccaModel {
            components: vec![a, b],
            d1: 1,
            d2: 2,
            dt: 1,
            eta_c: 1e-6,
            eta_wx: 1e-6,
            enforce_block_diagonal: false,
        }
    }

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(values in prop::collection::vec(-1e300f64..1e300, 1..40), pi0 in 0.0f64..=1.0) {
            let m = model_from(&values, pi0);
            let back = MppccaModel::from_json(&m.to_json().unwrap()).unwrap();
            prop_assert_eq!(back.components.len(), 2);
            for (a, b) in m.components.iter().zip(&back.components) {
                prop_assert_eq!(a.pi.to_bits(), b.pi.to_bits());
                for (p, q) in a.psi.iter().chain(a.w_x.iter()).chain(a.w_t.iter()).chain(a.mu.iter())
                    .zip(b.psi.iter().chain(b.w_x.iter()).chain(b.w_t.iter()).chain(b.mu.iter())) {
                    prop_assert_eq!(p.to_bits(), q.to_bits());
                }
            }
        }
    }

    #[test]
    fn document_layout() {
        let m = model_from(&[0.5, -1.25, 3.0], 0.25);
        let v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        assert_eq!(v["version"], 1);
        assert_eq!(v["K"], 2);
        assert_eq!(v["components"][0]["w_x"].as_array().unwrap().len(), 3);
        assert_eq!(v["components"][0]["w_x"][0].as_array().unwrap().len(), 2);
    }

    #[test]
    fn rejects_wrong_version_and_shapes() {
        let m = model_from(&[0.5], 0.5);
        let mut doc = ModelDocument::from(&m);
        doc.version = 99;
        assert!(MppccaModel::try_from(doc.clone()).is_err());
        doc.version = 1;
        doc.components[0].psi.pop();
        assert!(MppccaModel::try_from(doc).is_err());
    }
}
