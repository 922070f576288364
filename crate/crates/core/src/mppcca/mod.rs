//! Mixture of probabilistic partial CCA models.
//!
//! Component `k` explains the stacked target `y = [y1; y2]` given the
//! conditioning block `x` as
//!
//! ```text
//! y | x, k  ~  N(W_xk x + mu_k, C_k),    C_k = Psi_k + W_tk W_tkᵀ + eta_c I
//! ```
//!
//! after marginalizing the shared latent factor `t ~ N(0, I_dt)`.

mod fit;
mod serial;
mod steps;

pub use fit::{fit, restart_seed, FitConfig, FitResult, FitTrace};
pub use serial::{ModelDocument, MODEL_FORMAT_VERSION};
pub use steps::{
    component_covariance, e_step, e_step_with_log_likelihood, log_likelihood, m_step, m_step_from_responsibilities,
    mass_floor, Responsibilities,
};

pub use crate::dataset::RegressionDataset;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Parameters of one mixture component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentParams {
    pub pi: f64,
    /// `(d1 + d2)` mean offset.
    pub mu: DVector<f64>,
    /// `(d1 + d2) × dx` regression loading.
    pub w_x: DMatrix<f64>,
    /// `(d1 + d2) × dt` latent loading.
    pub w_t: DMatrix<f64>,
    /// `(d1 + d2) × (d1 + d2)` noise covariance.
    pub psi: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MppccaModel {
    pub components: Vec<ComponentParams>,
    pub d1: usize,
    pub d2: usize,
    pub dt: usize,
    pub eta_c: f64,
    pub eta_wx: f64,
    /// Zero the `y1`/`y2` cross blocks of `Psi_k` after every M-step.
    pub enforce_block_diagonal: bool,
}

impl MppccaModel {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn dy(&self) -> usize {
        self.d1 + self.d2
    }

    pub fn dx(&self) -> usize {
        self.components.first().map_or(0, |c| c.w_x.ncols())
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.pi).collect()
    }

    /// Checks shapes, mixing weights and parameter finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::invalid("model has no components"));
        }
        let dy = self.dy();
        let dx = self.dx();
        if self.dt > self.d1.min(self.d2) {
            return Err(Error::invalid(format!(
                "latent dimension {} exceeds min(d1, d2) = {}",
                self.dt,
                self.d1.min(self.d2)
            )));
        }
        if !(self.eta_c >= 0.0 && self.eta_wx >= 0.0) {
            return Err(Error::Domain("ridge constants must be nonnegative".into()));
        }
        for (k, c) in self.components.iter().enumerate() {
            let ok = c.mu.len() == dy
                && c.w_x.shape() == (dy, dx)
                && c.w_t.shape() == (dy, self.dt)
                && c.psi.shape() == (dy, dy);
            if !ok {
                return Err(Error::invalid(format!("component {k} has inconsistent shapes")));
            }
            let finite = c.pi.is_finite()
                && c.mu
                    .iter()
                    .chain(c.w_x.iter())
                    .chain(c.w_t.iter())
                    .chain(c.psi.iter())
                    .all(|v| v.is_finite());
            if !finite || !(0.0..=1.0).contains(&c.pi) {
                return Err(Error::invalid(format!("component {k} has invalid parameters")));
            }
        }
        let total: f64 = self.components.iter().map(|c| c.pi).sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::invalid(format!("mixing weights sum to {total}, not 1")));
        }
        Ok(())
    }

    /// Same model with components reordered so that new component `i` is old `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        out.components = perm.iter().map(|&i| self.components[i].clone()).collect();
        out
    }

    pub(crate) fn check_data(&self, data: &RegressionDataset) -> Result<()> {
        if data.d1() != self.d1 || data.d2() != self.d2 || data.dx() != self.dx() {
            return Err(Error::invalid(format!(
                "data blocks (dx={}, d1={}, d2={}) do not match model (dx={}, d1={}, d2={})",
                data.dx(),
                data.d1(),
                data.d2(),
                self.dx(),
                self.d1,
                self.d2
            )));
        }
        Ok(())
    }
}
