//! Feature construction, delay embedding and PCA reduction of multichannel
//! recordings into regression blocks.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::RegressionDataset;
use crate::error::{Error, Result};
use crate::linalg::{self, column_means, sym_eigen_desc};

/// `velocity(t) = position(t) − position(t − 1)` for `t = 1..T`.
pub fn velocity(position: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let t = position.nrows();
    if t < 2 {
        return Err(Error::TooShort { needed: 2, got: t });
    }
    Ok(position.rows(1, t - 1) - position.rows(0, t - 1))
}

/// Per-frame `[position(t), velocity(t)]` for `t = 1..T`.
pub fn feature(position: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let v = velocity(position)?;
    let p = position.rows(1, position.nrows() - 1).clone_owned();
    Ok(linalg::hstack(&[&p, &v]))
}

/// Delay-embedding parameters, all in frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    /// Lag of the most recent stacked frame.
    pub delay: usize,
    /// Spacing between stacked frames.
    pub stride: usize,
    /// Span covered by the stacked frames; `window / stride` frames are stacked.
    pub window: usize,
}

impl EmbeddingSpec {
    pub fn new(delay: usize, stride: usize, window: usize) -> Result<Self> {
        let spec = Self { delay, stride, window };
        spec.validate()?;
        Ok(spec)
    }

    /// One lagged frame: `d = 1, s = 1, τ = 1`.
    pub fn single_lag() -> Self {
        Self {
            delay: 1,
            stride: 1,
            window: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.window < self.stride || !self.window.is_multiple_of(self.stride) {
            return Err(Error::invalid(format!(
                "embedding needs stride >= 1, window >= stride and window divisible by stride (got d={}, s={}, tau={})",
                self.delay, self.stride, self.window
            )));
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.window / self.stride
    }

    /// First time index with a complete embedding.
    pub fn first_time(&self) -> usize {
        self.delay + self.window - 1
    }

    /// Number of embedded rows for a series of `t` frames.
    pub fn rows_for(&self, t: usize) -> usize {
        t.saturating_sub(self.first_time())
    }
}

/// Row `i` (time `t = d + τ − 1 + i`) stacks `features(t − d − j·s)` for
/// `j = 0..τ/s`.
pub fn embed(features: &DMatrix<f64>, spec: &EmbeddingSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let t = features.nrows();
    if t <= spec.delay + spec.window {
        return Err(Error::TooShort {
            needed: spec.delay + spec.window + 1,
            got: t,
        });
    }
    let f = features.ncols();
    let rows = spec.rows_for(t);
    let t0 = spec.first_time();
    let mut out = DMatrix::zeros(rows, f * spec.frames());
    for j in 0..spec.frames() {
        let start = t0 - spec.delay - j * spec.stride;
        out.columns_mut(j * f, f).copy_from(&features.rows(start, rows));
    }
    Ok(out)
}

/// Principal axes retaining a target share of the variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: DVector<f64>,
    /// `d × r`, orthonormal columns.
    pub components: DMatrix<f64>,
    /// Share of total variance per retained axis, descending.
    pub explained_ratio: Vec<f64>,
}

impl PcaBasis {
    pub fn dim(&self) -> usize {
        self.components.ncols()
    }

    pub fn transform(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if data.ncols() != self.mean.len() {
            return Err(Error::invalid(format!(
                "PCA basis expects {} columns, got {}",
                self.mean.len(),
                data.ncols()
            )));
        }
        let mut centered = data.clone();
        for (j, mut col) in centered.column_iter_mut().enumerate() {
            col.add_scalar_mut(-self.mean[j]);
        }
        Ok(centered * &self.components)
    }

    pub fn inverse_transform(&self, scores: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = scores * self.components.transpose();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.mean[j]);
        }
        out
    }
}

/// Keeps the fewest leading axes whose cumulative explained variance reaches
/// `target_ratio`.
pub fn pca_fit(data: &DMatrix<f64>, target_ratio: f64) -> Result<PcaBasis> {
    if !(target_ratio > 0.0 && target_ratio <= 1.0) {
        return Err(Error::Domain(format!(
            "target ratio must lie in (0, 1], got {target_ratio}"
        )));
    }
    let n = data.nrows();
    if n < 2 {
        return Err(Error::TooShort { needed: 2, got: n });
    }
    let mean = column_means(data);
    let centered = linalg::center_columns(data);
    let cov = centered.transpose() * &centered / n as f64;
    let (values, vectors) = sym_eigen_desc(&cov);
    let values: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateData("total variance is zero".into()));
    }
    let mut cum = 0.0;
    let mut r = values.len();
    for (i, v) in values.iter().enumerate() {
        cum += v / total;
        if cum >= target_ratio - 1e-12 {
            r = i + 1;
            break;
        }
    }
    Ok(PcaBasis {
        mean,
        components: vectors.columns(0, r).clone_owned(),
        explained_ratio: values[..r].iter().map(|v| v / total).collect(),
    })
}

/// Regression blocks with the bases that produced them.
#[derive(Debug, Clone)]
pub struct PreparedBlocks {
    pub dataset: RegressionDataset,
    /// Time index of row 0; row `n` is time `first_time + n`.
    pub first_time: usize,
    pub effect_present_basis: PcaBasis,
    pub effect_past_basis: PcaBasis,
    pub cause_past_basis: PcaBasis,
}

/// Bases and alignment, without the data, for reproducing a preprocessing run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessDocument {
    pub spec: EmbeddingSpec,
    pub target_ratio: f64,
    pub first_time: usize,
    pub effect_present_basis: PcaBasis,
    pub effect_past_basis: PcaBasis,
    pub cause_past_basis: PcaBasis,
}

impl PreparedBlocks {
    pub fn document(&self, spec: EmbeddingSpec, target_ratio: f64) -> PreprocessDocument {
        PreprocessDocument {
            spec,
            target_ratio,
            first_time: self.first_time,
            effect_present_basis: self.effect_present_basis.clone(),
            effect_past_basis: self.effect_past_basis.clone(),
            cause_past_basis: self.cause_past_basis.clone(),
        }
    }
}

/// `y1 = PCA(effect(t))`, `x = PCA(embed(effect)(t))`, `y2 = PCA(embed(cause)(t))`.
pub fn build_regression_blocks(
    effect: &DMatrix<f64>,
    cause: &DMatrix<f64>,
    spec: &EmbeddingSpec,
    target_ratio: f64,
) -> Result<PreparedBlocks> {
    if effect.nrows() != cause.nrows() {
        return Err(Error::LengthMismatch {
            left: effect.nrows(),
            right: cause.nrows(),
        });
    }
    let effect_past = embed(effect, spec)?;
    let cause_past = embed(cause, spec)?;
    let first_time = spec.first_time();
    let present = effect.rows(first_time, effect_past.nrows()).clone_owned();

    let effect_present_basis = pca_fit(&present, target_ratio)?;
    let effect_past_basis = pca_fit(&effect_past, target_ratio)?;
    let cause_past_basis = pca_fit(&cause_past, target_ratio)?;
    let dataset = RegressionDataset::new(
        effect_past_basis.transform(&effect_past)?,
        effect_present_basis.transform(&present)?,
        cause_past_basis.transform(&cause_past)?,
    )?;
    Ok(PreparedBlocks {
        dataset,
        first_time,
        effect_present_basis,
        effect_past_basis,
        cause_past_basis,
    })
}

/// Applies stored bases to a new recording of the same layout.
pub fn apply_document(
    doc: &PreprocessDocument,
    effect: &DMatrix<f64>,
    cause: &DMatrix<f64>,
) -> Result<RegressionDataset> {
    if effect.nrows() != cause.nrows() {
        return Err(Error::LengthMismatch {
            left: effect.nrows(),
            right: cause.nrows(),
        });
    }
    let effect_past = embed(effect, &doc.spec)?;
    let cause_past = embed(cause, &doc.spec)?;
    let present = effect.rows(doc.first_time, effect_past.nrows()).clone_owned();
    RegressionDataset::new(
        doc.effect_past_basis.transform(&effect_past)?,
        doc.effect_present_basis.transform(&present)?,
        doc.cause_past_basis.transform(&cause_past)?,
    )
}
