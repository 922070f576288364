use rayon::prelude::*;

use super::steps::{e_step_with_log_likelihood, m_step, m_step_from_responsibilities, weighted_log_densities};
use super::{MppccaModel, RegressionDataset, Responsibilities};
use crate::clustering::{hard_assign, kmeans};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub eta_c: f64,
    pub eta_wx: f64,
    /// Relative log-likelihood change that counts as converged.
    pub tol: f64,
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Component re-initializations allowed per restart when a cluster empties.
    pub reinit_retries: usize,
    pub enforce_block_diagonal: bool,
    /// Run restarts on the rayon pool.
    pub parallel: bool,
    /// Keep the hard labels after every E-step of the winning restart.
    pub record_label_history: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            eta_c: 1e-6,
            eta_wx: 1e-6,
            tol: 1e-6,
            max_iters: 200,
            restarts: 10,
            seed: 0,
            reinit_retries: 3,
            enforce_block_diagonal: false,
            parallel: true,
            record_label_history: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    /// Log-likelihood after each E-step of the winning restart.
    pub log_likelihood_per_iter: Vec<f64>,
    pub n_iters: usize,
    pub converged: bool,
    /// Seed of the winning restart.
    pub seed: u64,
    pub best_restart: usize,
    /// Final log-likelihood of every restart; `None` where the restart failed.
    pub restart_log_likelihoods: Vec<Option<f64>>,
    /// Iterations whose log-likelihood dropped by more than 1e-8 relative.
    pub monotonicity_violations: Vec<usize>,
    pub reinitializations: usize,
    /// Hard labels after each E-step, when requested.
    pub label_history: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: MppccaModel,
    pub responsibilities: Responsibilities,
    pub trace: FitTrace,
}

/// Seed for restart `index`, mixed with the SplitMix64 finalizer.
pub fn restart_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fits a `k`-component model with latent dimension `dt` by EM.
///
/// Each restart seeds k-means on the joint `[x, y1, y2]` vectors, turns the
/// labels into one-hot responsibilities and alternates E- and M-steps until
/// the relative log-likelihood change drops below `tol`. The restart with the
/// highest final log-likelihood wins; ties go to the lowest restart index.
pub fn fit(data: &RegressionDataset, k: usize, dt: usize, config: &FitConfig) -> Result<FitResult> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if dt > data.d1().min(data.d2()) {
        return Err(Error::invalid(format!(
            "latent dimension {dt} exceeds min(d1, d2) = {}",
            data.d1().min(data.d2())
        )));
    }
    if data.len() < k {
        return Err(Error::InsufficientSamples {
            needed: k - 1,
            got: data.len(),
        });
    }
    if config.restarts == 0 || config.max_iters == 0 {
        return Err(Error::invalid("restarts and max_iters must be at least 1"));
    }
    let per_component = data.dx() + data.d1() + data.d2();
    if data.len() <= k * per_component {
        log::warn!(
            "only {} samples for {k} components of dimension {per_component}; estimates may be unstable",
            data.len()
        );
    }

    let run = |i: usize| single_restart(data, k, dt, config, restart_seed(config.seed, i));
    let outcomes: Vec<Result<RestartOutcome>> = if config.parallel && config.restarts > 1 {
        (0..config.restarts).into_par_iter().map(run).collect()
    } else {
        (0..config.restarts).map(run).collect()
    };

    let restart_log_likelihoods: Vec<Option<f64>> =
        outcomes.iter().map(|o| o.as_ref().ok().map(|r| r.final_ll)).collect();
    let mut best: Option<(usize, RestartOutcome)> = None;
    let mut first_err = None;
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(o) => {
                if best.as_ref().is_none_or(|(_, b)| o.final_ll > b.final_ll) {
                    best = Some((i, o));
                }
            }
            Err(e) => {
                log::debug!("restart {i} failed: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    let Some((best_restart, o)) = best else {
        return Err(first_err.expect("at least one restart ran"));
    };
    Ok(FitResult {
        model: o.model,
        responsibilities: o.responsibilities,
        trace: FitTrace {
            n_iters: o.log_likelihoods.len(),
            log_likelihood_per_iter: o.log_likelihoods,
            converged: o.converged,
            seed: o.seed,
            best_restart,
            restart_log_likelihoods,
            monotonicity_violations: o.violations,
            reinitializations: o.reinitializations,
            label_history: o.label_history,
        },
    })
}

struct RestartOutcome {
    model: MppccaModel,
    responsibilities: Responsibilities,
    log_likelihoods: Vec<f64>,
    final_ll: f64,
    converged: bool,
    seed: u64,
    violations: Vec<usize>,
    reinitializations: usize,
    label_history: Option<Vec<Vec<usize>>>,
}

fn single_restart(
    data: &RegressionDataset,
    k: usize,
    dt: usize,
    config: &FitConfig,
    seed: u64,
) -> Result<RestartOutcome> {
    let labels = kmeans(&data.joint(), k, seed)?;
    let mut resp = Responsibilities::from_labels(labels.labels(), k)?;
    let mut retries = config.reinit_retries;
    let mut reinitializations = 0;

    let mut model = loop {
        match m_step_from_responsibilities(
            data,
            &resp,
            dt,
            config.eta_c,
            config.eta_wx,
            config.enforce_block_diagonal,
        ) {
            Ok(m) => break m,
            Err(Error::EmptyCluster { component, .. }) if retries > 0 => {
                retries -= 1;
                reinitializations += 1;
                resp = reseed_from_labels(&resp, component);
            }
            Err(e) => return Err(e),
        }
    };

    let mut lls = Vec::new();
    let mut violations = Vec::new();
    let mut history = config.record_label_history.then(Vec::new);
    let mut converged = false;
    loop {
        let (r, ll) = e_step_with_log_likelihood(&model, data)?;
        let iter = lls.len() + 1;
        if let Some(h) = history.as_mut() {
            h.push(hard_assign(&r).labels().to_vec());
        }
        if let Some(&prev) = lls.last() {
            let prev: f64 = prev;
            if ll < prev - 1e-8 * prev.abs() {
                log::debug!("log-likelihood decreased at iteration {iter}: {prev} -> {ll}");
                violations.push(iter);
            }
            if (ll - prev).abs() < config.tol * ll.abs() {
                converged = true;
            }
        }
        lls.push(ll);
        resp = r;
        if converged || iter >= config.max_iters {
            break;
        }
        model = loop {
            match m_step(data, &resp, &model) {
                Ok(m) => break m,
                Err(Error::EmptyCluster { component, .. }) if retries > 0 => {
                    retries -= 1;
                    reinitializations += 1;
                    resp = reseed_worst_explained(&model, data, &resp, component)?;
                }
                Err(e) => return Err(e),
            }
        };
    }
    Ok(RestartOutcome {
        final_ll: *lls.last().expect("at least one iteration"),
        model,
        responsibilities: resp,
        log_likelihoods: lls,
        converged,
        seed,
        violations,
        reinitializations,
        label_history: history,
    })
}

/// Hands the emptied component the `ceil(N / K)` samples with the lowest
/// mixture density under the current model.
fn reseed_worst_explained(
    model: &MppccaModel,
    data: &RegressionDataset,
    resp: &Responsibilities,
    component: usize,
) -> Result<Responsibilities> {
    let lw = weighted_log_densities(model, data)?;
    let density: Vec<f64> = lw.row_iter().map(|row| row.max()).collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| density[a].total_cmp(&density[b]).then(a.cmp(&b)));
    Ok(take_rows(resp, component, &order))
}

/// Before any model exists: hands the emptied component the largest
/// remaining cluster's samples in index order, up to `ceil(N / K)`.
fn reseed_from_labels(resp: &Responsibilities, component: usize) -> Responsibilities {
    let masses = resp.masses();
    let largest = (0..resp.k())
        .max_by(|&a, &b| masses[a].total_cmp(&masses[b]).then(b.cmp(&a)))
        .unwrap_or(0);
    let order: Vec<usize> = (0..resp.n()).filter(|&n| resp.matrix()[(n, largest)] > 0.5).collect();
    take_rows(resp, component, &order)
}

fn take_rows(resp: &Responsibilities, component: usize, order: &[usize]) -> Responsibilities {
    let take = resp.n().div_ceil(resp.k()).min(order.len());
    let mut m = resp.matrix().clone();
    for &n in &order[..take] {
        m.row_mut(n).fill(0.0);
        m[(n, component)] = 1.0;
    }
    Responsibilities::new(m).expect("one-hot rows are stochastic")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn restart_seeds_distinct() {
        let seeds: std::collections::HashSet<u64> = (0..100).map(|i| restart_seed(42, i)).collect();
        assert_eq!(seeds.len(), 100);
    }

    #[test]
    fn single_gaussian_mean_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 2000;
        let y1 = DMatrix::from_fn(n, 1, |_, _| 1.5 + rng.sample::<f64, _>(StandardNormal));
        let y2 = DMatrix::from_fn(n, 1, |_, _| -0.5 + 2.0 * rng.sample::<f64, _>(StandardNormal));
        let x = DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let data = RegressionDataset::new(x, y1, y2).unwrap();
        let res = fit(
            &data,
            1,
            0,
            &FitConfig {
                restarts: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let mu = &res.model.components[0].mu;
        let se1 = 1.0 / (n as f64).sqrt();
        let se2 = 2.0 / (n as f64).sqrt();
        assert!((mu[0] - 1.5).abs() < 3.0 * se1, "{}", mu[0]);
        assert!((mu[1] + 0.5).abs() < 3.0 * se2, "{}", mu[1]);
        assert!(res.trace.converged);
        assert!(res.responsibilities.matrix().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn rejects_bad_arguments() {
        let data = RegressionDataset::new(DMatrix::zeros(4, 1), DMatrix::zeros(4, 1), DMatrix::zeros(4, 1)).unwrap();
        assert!(fit(&data, 0, 0, &FitConfig::default()).is_err());
        assert!(fit(&data, 1, 2, &FitConfig::default()).is_err());
        assert!(fit(&data, 5, 0, &FitConfig::default()).is_err());
    }

    #[test]
    fn take_rows_keeps_rows_stochastic() {
        let resp = Responsibilities::from_labels(&[0, 0, 0, 0, 1, 1], 3).unwrap();
        let out = reseed_from_labels(&resp, 2);
        assert_eq!(out.masses(), vec![2.0, 2.0, 2.0]);
    }
}
