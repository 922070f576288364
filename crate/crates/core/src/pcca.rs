//! Partial canonical correlation analysis and the Granger-causality index.
//!
//! Block 1 is the effect's present, block 2 the cause's past and the
//! conditioning block `x` the effect's past. The largest partial canonical
//! correlation `rho1` between blocks 1 and 2 given `x` yields the GC index
//! `0.5 * log2(1 / (1 - rho1^2))`, in bits.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::RegressionDataset;
use crate::error::{Error, Result};
use crate::linalg::{self, cross_covariance, solve_spd, sym_eigen_desc};

/// Upper clamp for squared canonical correlations.
pub const RHO_SQ_MAX: f64 = 1.0 - 1e-12;

/// Ridge added to a matrix diagonal before it is inverted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Ridge {
    /// Fixed amount.
    Absolute(f64),
    /// Multiple of `trace / dim` of the matrix being inverted.
    Relative(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::Relative(1e-8)
    }
}

impl Ridge {
    pub fn amount(&self, m: &DMatrix<f64>) -> f64 {
        match *self {
            Ridge::Absolute(v) => v,
            Ridge::Relative(scale) if m.nrows() > 0 => scale * linalg::trace(m) / m.nrows() as f64,
            Ridge::Relative(_) => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            Ridge::Absolute(v) | Ridge::Relative(v) => v,
        };
        if v >= 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!("ridge must be finite and nonnegative, got {v}")))
        }
    }
}

/// Sample (co)variances of the three blocks, denominator N.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceBundle {
    pub sigma_11: DMatrix<f64>,
    pub sigma_22: DMatrix<f64>,
    pub sigma_12: DMatrix<f64>,
    pub sigma_1x: DMatrix<f64>,
    pub sigma_2x: DMatrix<f64>,
    pub sigma_xx: DMatrix<f64>,
    pub n_samples: usize,
}

impl CovarianceBundle {
    pub fn from_dataset(data: &RegressionDataset) -> Self {
        let (x, y1, y2) = (data.x(), data.y1(), data.y2());
        Self {
            sigma_11: cross_covariance(y1, y1),
            sigma_22: cross_covariance(y2, y2),
            sigma_12: cross_covariance(y1, y2),
            sigma_1x: cross_covariance(y1, x),
            sigma_2x: cross_covariance(y2, x),
            sigma_xx: cross_covariance(x, x),
            n_samples: data.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (d1, d2, dx) = (self.sigma_11.nrows(), self.sigma_22.nrows(), self.sigma_xx.nrows());
        let shapes_ok = self.sigma_11.is_square()
            && self.sigma_22.is_square()
            && self.sigma_xx.is_square()
            && self.sigma_12.shape() == (d1, d2)
            && self.sigma_1x.shape() == (d1, dx)
            && self.sigma_2x.shape() == (d2, dx);
        if !shapes_ok {
            return Err(Error::invalid("covariance bundle blocks are not conformable"));
        }
        if self.n_samples < 2 {
            return Err(Error::InsufficientSamples {
                needed: 1,
                got: self.n_samples,
            });
        }
        for (name, m) in [
            ("sigma_11", &self.sigma_11),
            ("sigma_22", &self.sigma_22),
            ("sigma_xx", &self.sigma_xx),
        ] {
            check_symmetric_psd(name, m)?;
        }
        Ok(())
    }
}

fn check_symmetric_psd(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() == 0 {
        return Ok(());
    }
    if !linalg::all_finite(m) {
        return Err(Error::invalid(format!("{name} has non-finite entries")));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(Error::invalid(format!(
            "{name} is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let (vals, _) = sym_eigen_desc(m);
    if vals[vals.len() - 1] < -1e-8 * vals[0].abs() {
        return Err(Error::invalid(format!("{name} is not positive semidefinite")));
    }
    Ok(())
}

/// `Σ_ab − Σ_ac (Σ_cc + ridge·I)⁻¹ Σ_cb`.
pub fn partial_covariance(
    sigma_ab: &DMatrix<f64>,
    sigma_ac: &DMatrix<f64>,
    sigma_cc: &DMatrix<f64>,
    sigma_cb: &DMatrix<f64>,
    ridge: f64,
) -> Result<DMatrix<f64>> {
    let (da, db) = sigma_ab.shape();
    let dc = sigma_cc.nrows();
    if sigma_ac.shape() != (da, dc) || sigma_cb.shape() != (dc, db) || !sigma_cc.is_square() {
        return Err(Error::invalid("partial_covariance: blocks are not conformable"));
    }
    if !(ridge >= 0.0) {
        return Err(Error::Domain(format!("ridge must be nonnegative, got {ridge}")));
    }
    if dc == 0 {
        return Ok(sigma_ab.clone());
    }
    let solved = solve_spd(sigma_cc, sigma_cb, ridge)?;
    Ok(sigma_ab - sigma_ac * solved)
}

/// Partial canonical correlations and their directions.
#[derive(Debug, Clone, PartialEq)]
pub struct PccaSolution {
    /// Descending, each in `[0, 1)`.
    pub rho: Vec<f64>,
    /// `d1 × r`, columns normalized to unit partial variance.
    pub directions_1: DMatrix<f64>,
    /// `d2 × r`, columns normalized to unit partial variance.
    pub directions_2: DMatrix<f64>,
}

impl PccaSolution {
    pub fn rho1(&self) -> f64 {
        self.rho.first().copied().unwrap_or(0.0)
    }
}

/// The three partial covariances `Σ11|x`, `Σ22|x`, `Σ12|x`.
pub fn partial_blocks(bundle: &CovarianceBundle, ridge: Ridge) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let rx = ridge.amount(&bundle.sigma_xx);
    let sigma_x1 = bundle.sigma_1x.transpose();
    let sigma_x2 = bundle.sigma_2x.transpose();
    let s11 = partial_covariance(&bundle.sigma_11, &bundle.sigma_1x, &bundle.sigma_xx, &sigma_x1, rx)?;
    let s22 = partial_covariance(&bundle.sigma_22, &bundle.sigma_2x, &bundle.sigma_xx, &sigma_x2, rx)?;
    let s12 = partial_covariance(&bundle.sigma_12, &bundle.sigma_1x, &bundle.sigma_xx, &sigma_x2, rx)?;
    Ok((linalg::symmetrize(&s11), linalg::symmetrize(&s22), s12))
}

/// Solves `(Σ12ᵀ Σ11⁻¹ Σ12 − ρ² Σ22) u2 = 0` (all partial given x) and its
/// mirror for `u1`, by Cholesky-whitening the right-hand side and taking a
/// symmetric eigendecomposition.
pub fn solve_pcca(bundle: &CovarianceBundle, ridge: Ridge) -> Result<PccaSolution> {
    ridge.validate()?;
    bundle.validate()?;
    let (s11, s22, s12) = partial_blocks(bundle, ridge)?;
    let (d1, d2) = (s11.nrows(), s22.nrows());
    let r = d1.min(d2);
    if r == 0 {
        return Ok(PccaSolution {
            rho: Vec::new(),
            directions_1: DMatrix::zeros(d1, 0),
            directions_2: DMatrix::zeros(d2, 0),
        });
    }
    let r11 = ridge.amount(&s11);
    let r22 = ridge.amount(&s22);
    let s21 = s12.transpose();

    let (rho_sq, u2) = whitened_eigen(&s22, r22, &(&s21 * solve_spd(&s11, &s12, r11)?))?;
    let (_, mut u1) = whitened_eigen(&s11, r11, &(&s12 * solve_spd(&s22, &s21, r22)?))?;

    let rho: Vec<f64> = rho_sq
        .iter()
        .take(r)
        .map(|&v| v.clamp(0.0, RHO_SQ_MAX).sqrt())
        .collect();
    let u2 = u2.columns(0, r).clone_owned();
    u1 = u1.columns(0, r).clone_owned();
    for i in 0..r {
        let c = (u1.column(i).transpose() * &s12 * u2.column(i))[(0, 0)];
        if c < 0.0 {
            u1.column_mut(i).neg_mut();
        }
    }
    Ok(PccaSolution {
        rho,
        directions_1: u1,
        directions_2: u2,
    })
}

/// Generalized symmetric eigenproblem `A u = λ B u` via `B = L Lᵀ`.
/// Returns descending eigenvalues and `B`-orthonormal eigenvectors.
fn whitened_eigen(b: &DMatrix<f64>, ridge: f64, a: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let chol = linalg::checked_cholesky(b, ridge)?;
    let l = chol.l();
    let linv_a = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let m = l
        .solve_lower_triangular(&linv_a.transpose())
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let (vals, vecs) = sym_eigen_desc(&m);
    let u = l
        .transpose()
        .solve_upper_triangular(&vecs)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    Ok((vals.iter().copied().collect(), u))
}

/// `0.5 * log2(1 / (1 - rho1^2))`.
pub fn granger_index(rho1: f64) -> Result<f64> {
    if rho1.is_nan() || rho1 < -1e-12 {
        return Err(Error::Domain(format!(
            "canonical correlation must lie in [0, 1), got {rho1}"
        )));
    }
    if rho1 >= 1.0 - 1e-12 {
        return Err(Error::Domain(format!(
            "perfect predictability: canonical correlation {rho1} is 1 within tolerance"
        )));
    }
    let rho1 = rho1.max(0.0);
    Ok(-0.5 * (-rho1 * rho1).ln_1p() / std::f64::consts::LN_2)
}

/// Partial canonical correlations and GC index for one set of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrangerEstimate {
    pub n_samples: usize,
    pub rho: Vec<f64>,
    pub rho1: f64,
    pub gc_index: f64,
}

pub fn granger_from_blocks(data: &RegressionDataset, ridge: Ridge) -> Result<GrangerEstimate> {
    let needed = data.dx() + data.d1() + data.d2();
    if data.len() <= needed {
        return Err(Error::InsufficientSamples {
            needed,
            got: data.len(),
        });
    }
    let bundle = CovarianceBundle::from_dataset(data);
    let solution = solve_pcca(&bundle, ridge)?;
    let rho1 = solution.rho1();
    Ok(GrangerEstimate {
        n_samples: data.len(),
        gc_index: granger_index(rho1)?,
        rho: solution.rho,
        rho1,
    })
}

/// Residual-trace form of Granger causality, in nats:
/// `ln tr(Σ_{y1|x}) / tr(Σ_{y1|x,y2})`, each residual covariance coming from
/// an ordinary least-squares fit with intercept.
///
/// Only the scalar-effect case (`d1 = 1`) coincides with the eigenvalue index
/// (`granger_index = trace_granger_nats / (2 ln 2)`).
pub fn trace_granger_nats(data: &RegressionDataset) -> Result<f64> {
    let restricted = residual_trace(data.y1(), data.x())?;
    let full = residual_trace(data.y1(), &linalg::hstack(&[data.x(), data.y2()]))?;
    if !(full > 0.0) {
        return Err(Error::Domain("perfect predictability: zero residual variance".into()));
    }
    Ok((restricted / full).ln())
}

fn residual_trace(target: &DMatrix<f64>, regressors: &DMatrix<f64>) -> Result<f64> {
    let n = target.nrows();
    let design = linalg::hstack(&[&DMatrix::from_element(n, 1, 1.0), regressors]);
    let svd = design.clone().svd(true, true);
    let coef = svd
        .solve(target, 1e-14)
        .map_err(|e| Error::Numerical(format!("least squares failed: {e}")))?;
    let resid = target - design * coef;
    Ok(resid.iter().map(|v| v * v).sum::<f64>() / n as f64)
}
