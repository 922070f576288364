use nalgebra::{DMatrix, DVector};

use super::{ComponentParams, MppccaModel, RegressionDataset};
use crate::error::{Error, Result};
use crate::linalg::{self, project_psd_floor, solve_spd, sym_eigen_desc};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Posterior component probabilities, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    r: DMatrix<f64>,
}

impl Responsibilities {
    /// Validates that every row is a probability vector (sum within 1e-10).
    pub fn new(r: DMatrix<f64>) -> Result<Self> {
        if r.ncols() == 0 {
            return Err(Error::invalid("responsibilities need at least one column"));
        }
        for (n, row) in r.row_iter().enumerate() {
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::invalid(format!(
                    "responsibility row {n} has entries outside [0, 1]"
                )));
            }
            let s = row.sum();
            if (s - 1.0).abs() > 1e-10 {
                return Err(Error::invalid(format!("responsibility row {n} sums to {s}")));
            }
        }
        Ok(Self { r })
    }

    /// One-hot rows from hard labels.
    pub fn from_labels(labels: &[usize], k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::invalid(format!("label {bad} out of range for K = {k}")));
        }
        Ok(Self {
            r: DMatrix::from_fn(labels.len(), k, |n, j| if labels[n] == j { 1.0 } else { 0.0 }),
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.r
    }

    pub fn n(&self) -> usize {
        self.r.nrows()
    }

    pub fn k(&self) -> usize {
        self.r.ncols()
    }

    /// `Σ_n r_nk` per component.
    pub fn masses(&self) -> Vec<f64> {
        self.r.column_iter().map(|c| c.sum()).collect()
    }
}

/// `mass_floor = max(dt + 1, 2)`.
pub fn mass_floor(dt: usize) -> f64 {
    (dt + 1).max(2) as f64
}

/// `C_k = Psi_k + W_tk W_tkᵀ + eta_c I`.
pub fn component_covariance(c: &ComponentParams, eta_c: f64) -> DMatrix<f64> {
    let mut cov = &c.psi + &c.w_t * c.w_t.transpose();
    for i in 0..cov.nrows() {
        cov[(i, i)] += eta_c;
    }
    linalg::symmetrize(&cov)
}

/// `ln π_k + ln N(y_n | W_xk x_n + μ_k, C_k)` for every sample and component.
pub(crate) fn weighted_log_densities(model: &MppccaModel, data: &RegressionDataset) -> Result<DMatrix<f64>> {
    model.check_data(data)?;
    let n = data.len();
    let dy = model.dy() as f64;
    let mut out = DMatrix::zeros(n, model.k());
    for (k, c) in model.components.iter().enumerate() {
        let cov = component_covariance(c, model.eta_c);
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::Numerical(format!("component {k} covariance is not positive definite")))?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        // Residuals as columns: (dy × N).
        let mut resid = data.y().transpose() - &c.w_x * data.x().transpose();
        for mut col in resid.column_iter_mut() {
            col -= &c.mu;
        }
        let z = chol
            .l()
            .solve_lower_triangular(&resid)
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let log_pi = c.pi.ln();
        for (i, col) in z.column_iter().enumerate() {
            out[(i, k)] = log_pi - 0.5 * (dy * LN_2PI + log_det + col.norm_squared());
        }
    }
    if out.iter().any(|v| v.is_nan()) {
        return Err(Error::Numerical("log-density evaluated to NaN".into()));
    }
    Ok(out)
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `Σ_n ln Σ_k π_k N(y_n | W_xk x_n + μ_k, C_k)`.
pub fn log_likelihood(model: &MppccaModel, data: &RegressionDataset) -> Result<f64> {
    let lw = weighted_log_densities(model, data)?;
    Ok(lw
        .row_iter()
        .map(|row| log_sum_exp(&row.iter().copied().collect::<Vec<_>>()))
        .sum())
}

pub fn e_step(model: &MppccaModel, data: &RegressionDataset) -> Result<Responsibilities> {
    e_step_with_log_likelihood(model, data).map(|(r, _)| r)
}

/// E-step plus the log-likelihood of the model it was computed from.
pub fn e_step_with_log_likelihood(model: &MppccaModel, data: &RegressionDataset) -> Result<(Responsibilities, f64)> {
    let mut lw = weighted_log_densities(model, data)?;
    let mut ll = 0.0;
    for mut row in lw.row_iter_mut() {
        let lse = log_sum_exp(&row.iter().copied().collect::<Vec<_>>());
        if !lse.is_finite() {
            return Err(Error::Numerical("sample has zero density under every component".into()));
        }
        ll += lse;
        row.apply(|v| *v = (*v - lse).exp());
        let s = row.sum();
        row /= s;
    }
    Ok((Responsibilities { r: lw }, ll))
}

/// M-step using the previous model's `Psi_k` to resolve the `W_tk` update.
pub fn m_step(data: &RegressionDataset, resp: &Responsibilities, prev: &MppccaModel) -> Result<MppccaModel> {
    if resp.k() != prev.k() {
        return Err(Error::invalid(format!(
            "responsibilities have {} columns, model has {} components",
            resp.k(),
            prev.k()
        )));
    }
    prev.check_data(data)?;
    let psi: Vec<&DMatrix<f64>> = prev.components.iter().map(|c| &c.psi).collect();
    m_step_impl(data, resp, &Settings::of(prev), Some(&psi))
}

/// M-step without a previous model, as used right after initialization.
///
/// The `W_tk` update needs a noise level along each principal direction; with
/// no previous `Psi_k` it uses the probabilistic-PCA estimate, the mean of the
/// eigenvalues of `S_k` beyond the first `dt` (zero when `dt = d1 + d2`).
pub fn m_step_from_responsibilities(
    data: &RegressionDataset,
    resp: &Responsibilities,
    dt: usize,
    eta_c: f64,
    eta_wx: f64,
    enforce_block_diagonal: bool,
) -> Result<MppccaModel> {
    if dt > data.d1().min(data.d2()) {
        return Err(Error::invalid(format!("latent dimension {dt} exceeds min(d1, d2)")));
    }
    let settings = Settings {
        d1: data.d1(),
        d2: data.d2(),
        dt,
        eta_c,
        eta_wx,
        enforce_block_diagonal,
    };
    m_step_impl(data, resp, &settings, None)
}

struct Settings {
    d1: usize,
    d2: usize,
    dt: usize,
    eta_c: f64,
    eta_wx: f64,
    enforce_block_diagonal: bool,
}

impl Settings {
    fn of(m: &MppccaModel) -> Self {
        Self {
            d1: m.d1,
            d2: m.d2,
            dt: m.dt,
            eta_c: m.eta_c,
            eta_wx: m.eta_wx,
            enforce_block_diagonal: m.enforce_block_diagonal,
        }
    }
}

fn m_step_impl(
    data: &RegressionDataset,
    resp: &Responsibilities,
    s: &Settings,
    prev_psi: Option<&[&DMatrix<f64>]>,
) -> Result<MppccaModel> {
    if resp.n() != data.len() {
        return Err(Error::LengthMismatch {
            left: resp.n(),
            right: data.len(),
        });
    }
    let n = data.len() as f64;
    let floor = mass_floor(s.dt);
    let masses = resp.masses();
    if let Some((component, &mass)) = masses.iter().enumerate().find(|(_, &m)| !(m >= floor)) {
        return Err(Error::EmptyCluster { component, mass, floor });
    }
    let mut components = Vec::with_capacity(resp.k());
    for (k, &mass) in masses.iter().enumerate() {
        let r = resp.matrix().column(k);
        components.push(update_component(
            data,
            r.as_slice(),
            mass,
            n,
            s,
            prev_psi.map(|p| p[k]),
        )?);
    }
    // Renormalize away rounding in Σ_k mass_k / N.
    let total: f64 = components.iter().map(|c| c.pi).sum();
    for c in &mut components {
        c.pi /= total;
    }
    Ok(MppccaModel {
        components,
        d1: s.d1,
        d2: s.d2,
        dt: s.dt,
        eta_c: s.eta_c,
        eta_wx: s.eta_wx,
        enforce_block_diagonal: s.enforce_block_diagonal,
    })
}

fn weighted_mean(m: &DMatrix<f64>, r: &[f64], mass: f64) -> DVector<f64> {
    DVector::from_iterator(
        m.ncols(),
        m.column_iter()
            .map(|c| c.iter().zip(r).map(|(v, w)| v * w).sum::<f64>() / mass),
    )
}

fn centered(m: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    out
}

fn scale_rows(m: &DMatrix<f64>, r: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        for (v, w) in col.iter_mut().zip(r) {
            *v *= w;
        }
    }
    out
}

fn update_component(
    data: &RegressionDataset,
    r: &[f64],
    mass: f64,
    n: f64,
    s: &Settings,
    prev_psi: Option<&DMatrix<f64>>,
) -> Result<ComponentParams> {
    let dy = s.d1 + s.d2;
    let x_bar = weighted_mean(data.x(), r, mass);
    let y_bar = weighted_mean(data.y(), r, mass);
    let xt = centered(data.x(), &x_bar);
    let yt = centered(data.y(), &y_bar);
    let rx = scale_rows(&xt, r);

    // W_x = (Σ r ỹ x̃ᵀ)(Σ r x̃ x̃ᵀ + η_Wx I)⁻¹
    let sxx = rx.transpose() * &xt;
    let syx = yt.transpose() * &rx;
    let w_x = solve_spd(&sxx, &syx.transpose(), s.eta_wx)?.transpose();
    let mu = &y_bar - &w_x * &x_bar;

    let resid = &yt - &xt * w_x.transpose();
    let s_k = linalg::symmetrize(&(scale_rows(&resid, r).transpose() * &resid / mass));
    let (lambda, u) = sym_eigen_desc(&s_k);

    let noise_along = |i: usize| -> f64 {
        match prev_psi {
            Some(psi) => {
                let ui = u.column(i);
                (ui.transpose() * psi * ui)[(0, 0)]
            }
            None if s.dt < dy => lambda.rows(s.dt, dy - s.dt).sum() / (dy - s.dt) as f64,
            None => 0.0,
        }
    };
    let mut w_t = DMatrix::zeros(dy, s.dt);
    for i in 0..s.dt {
        let scale = (lambda[i] - noise_along(i)).max(0.0).sqrt();
        w_t.set_column(i, &(u.column(i) * scale));
    }

    let mut psi = &s_k - &w_t * w_t.transpose();
    if s.enforce_block_diagonal {
        psi.view_mut((0, s.d1), (s.d1, s.d2)).fill(0.0);
        psi.view_mut((s.d1, 0), (s.d2, s.d1)).fill(0.0);
    }
    let psi_floor = 1e-6 * linalg::trace(&s_k) / dy as f64;
    let psi = project_psd_floor(&psi, psi_floor);

    Ok(ComponentParams {
        pi: mass / n,
        mu,
        w_x,
        w_t,
        psi,
    })
}
