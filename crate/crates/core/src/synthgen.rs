//! Seeded generators for the synthetic causal-pattern experiments.
//!
//! All draws come from `ChaCha8Rng::seed_from_u64(seed)` with standard normal
//! variates from `rand_distr::StandardNormal`, so a seed reproduces the same
//! series bit for bit. Noise parameters are standard deviations.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::format_f64;

/// One regime of `y_t = a y_{t-1} + b x_{t-1} + e`, `x_t ~ N(mu_x, x_std²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exp1Cluster {
    pub a: f64,
    pub b: f64,
    pub mu_x: f64,
    pub x_std: f64,
    pub y_noise_std: f64,
}

impl Exp1Cluster {
    pub fn stationary_mean(&self) -> f64 {
        self.b * self.mu_x / (1.0 - self.a)
    }

    pub fn stationary_variance(&self) -> f64 {
        (self.b * self.b * self.x_std * self.x_std + self.y_noise_std * self.y_noise_std) / (1.0 - self.a * self.a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp1Params {
    pub clusters: Vec<Exp1Cluster>,
    pub samples_per_cluster: usize,
}

impl Default for Exp1Params {
    /// Three regimes of 1000 samples each.
    fn default() -> Self {
        let c = |a, b, mu_x, x_std, y_noise_std| Exp1Cluster {
            a,
            b,
            mu_x,
            x_std,
            y_noise_std,
        };
        Self {
            clusters: vec![
                c(-0.5, 2.5, 0.0, 2.0, 0.2),
                c(0.5, -1.0, 1.0, 0.1, 1.3),
                c(-0.9, 0.2, -1.0, 1.0, 1.3),
            ],
            samples_per_cluster: 1000,
        }
    }
}

impl Exp1Params {
    pub fn validate(&self) -> Result<()> {
        if self.clusters.is_empty() || self.samples_per_cluster == 0 {
            return Err(Error::invalid("need at least one cluster and one sample per cluster"));
        }
        for (k, c) in self.clusters.iter().enumerate() {
            if !(c.x_std > 0.0 && c.y_noise_std > 0.0 && c.a.abs() < 1.0 && c.b.is_finite() && c.mu_x.is_finite()) {
                return Err(Error::invalid(format!("cluster {k}: need positive noise and |a| < 1")));
            }
        }
        Ok(())
    }
}

/// Paired scalar series with the index of the regime that generated each sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSeries {
    /// Cause.
    pub x: Vec<f64>,
    /// Effect.
    pub y: Vec<f64>,
    pub truth: Vec<usize>,
}

impl LabeledSeries {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `(label, start, end_exclusive)` for each run of equal labels.
    pub fn segments(&self) -> Vec<(usize, usize, usize)> {
        let mut out: Vec<(usize, usize, usize)> = Vec::new();
        for (t, &l) in self.truth.iter().enumerate() {
            match out.last_mut() {
                Some(last) if last.0 == l => last.2 = t + 1,
                _ => out.push((l, t, t + 1)),
            }
        }
        out
    }

    /// CSV with columns `t,x,y,truth_label`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "y", "truth_label"])?;
        for t in 0..self.len() {
            w.write_record([
                t.to_string(),
                format_f64(self.x[t]),
                format_f64(self.y[t]),
                self.truth[t].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let table = crate::io::read_table(input)?;
        let x = table.column("x")?;
        let y = table.column("y")?;
        let truth = table.label_column("truth_label")?;
        Ok(Self { x, y, truth })
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Concatenated regimes; `y` carries over across boundaries and `y_0` is a
/// draw from the first regime's stationary distribution.
pub fn gen_exp1(params: &Exp1Params, seed: u64) -> Result<LabeledSeries> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = params.clusters.len() * params.samples_per_cluster;
    let mut x = Vec::with_capacity(total);
    let mut y = Vec::with_capacity(total);
    let mut truth = Vec::with_capacity(total);
    let first = params.clusters[0];
    y.push(first.stationary_mean() + first.stationary_variance().sqrt() * normal(&mut rng));
    x.push(first.mu_x + first.x_std * normal(&mut rng));
    truth.push(0);
    for t in 1..total {
        let k = t / params.samples_per_cluster;
        let c = params.clusters[k];
        y.push(c.a * y[t - 1] + c.b * x[t - 1] + c.y_noise_std * normal(&mut rng));
        x.push(c.mu_x + c.x_std * normal(&mut rng));
        truth.push(k);
    }
    Ok(LabeledSeries { x, y, truth })
}

/// Causal window inside otherwise independent noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exp2Params {
    pub a: f64,
    pub b: f64,
    pub y_noise_std: f64,
    pub mu_x: f64,
    pub x_std: f64,
    pub mu_y_rest: f64,
    pub y_rest_std: f64,
    pub len: usize,
    /// The causal window is `causal_after < t < causal_before`.
    pub causal_after: usize,
    pub causal_before: usize,
}

impl Default for Exp2Params {
    /// Causal dynamics of the strongly causal Exp. 1 regime inside
    /// `N(0, 1.3²)` noise, 3000 samples, window `1300 < t < 1700`.
    fn default() -> Self {
        Self {
            a: -0.5,
            b: 2.5,
            y_noise_std: 0.2,
            mu_x: 0.0,
            x_std: 2.0,
            mu_y_rest: 0.0,
            y_rest_std: 1.3,
            len: 3000,
            causal_after: 1300,
            causal_before: 1700,
        }
    }
}

impl Exp2Params {
    /// The weakly causal parameter row (a = 0.5, b = −1, x ~ N(1, 0.1²)).
    pub fn weak_coupling() -> Self {
        Self {
            a: 0.5,
            b: -1.0,
            y_noise_std: 1.3,
            mu_x: 1.0,
            x_std: 0.1,
            ..Self::default()
        }
    }

    pub fn is_causal(&self, t: usize) -> bool {
        self.causal_after < t && t < self.causal_before
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_std > 0.0 && self.y_noise_std > 0.0 && self.y_rest_std > 0.0 && self.a.abs() < 1.0) {
            return Err(Error::invalid("need positive noise and |a| < 1"));
        }
        if self.len < 2 || self.causal_before <= self.causal_after {
            return Err(Error::invalid("need len >= 2 and a non-empty causal window"));
        }
        Ok(())
    }
}

/// Label 1 marks the causal window, label 0 everything else.
pub fn gen_exp2(params: &Exp2Params, seed: u64) -> Result<LabeledSeries> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(params.len);
    let mut y = Vec::with_capacity(params.len);
    let mut truth = Vec::with_capacity(params.len);
    for t in 0..params.len {
        let causal = t > 0 && params.is_causal(t);
        let yt = if causal {
            params.a * y[t - 1] + params.b * x[t - 1] + params.y_noise_std * normal(&mut rng)
        } else {
            params.mu_y_rest + params.y_rest_std * normal(&mut rng)
        };
        y.push(yt);
        x.push(params.mu_x + params.x_std * normal(&mut rng));
        truth.push(usize::from(causal));
    }
    Ok(LabeledSeries { x, y, truth })
}

/// Synthetic two-person marker recording.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionParams {
    pub frames: usize,
    /// Channels per person (markers × 3 coordinates).
    pub channels: usize,
    /// Frames by which the follower lags the leader inside coupled episodes.
    pub response_lag: usize,
    /// Length of each coupled / uncoupled episode.
    pub episode: usize,
    pub noise_std: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            frames: 36_000,
            channels: 21,
            response_lag: 15,
            episode: 600,
            noise_std: 0.05,
        }
    }
}

/// Recording of a leader `B` and follower `A`: a few smooth latent
/// oscillators drive B's channels; in alternating episodes A replays B's
/// latents after `response_lag` frames, otherwise A moves on its own.
/// Returns `(a, b, coupled)` with `coupled[t]` marking the coupled episodes.
pub fn gen_motion_pair(params: &MotionParams, seed: u64) -> Result<(DMatrix<f64>, DMatrix<f64>, Vec<usize>)> {
    if params.frames <= params.response_lag + 1 || params.channels == 0 || params.episode == 0 {
        return Err(Error::invalid(
            "motion recording needs frames > lag + 1, channels > 0, episode > 0",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const LATENTS: usize = 4;
    let t_len = params.frames;
    let latent = |rng: &mut ChaCha8Rng| -> DMatrix<f64> {
        // Damped second-order oscillators driven by white noise.
        let mut out = DMatrix::zeros(t_len, LATENTS);
        for j in 0..LATENTS {
            let freq = 0.01 + 0.02 * j as f64 + 0.005 * rng.random::<f64>();
            let (c1, c2) = (2.0 * 0.995 * (2.0 * std::f64::consts::PI * freq).cos(), -0.995 * 0.995);
            for t in 2..t_len {
                out[(t, j)] = c1 * out[(t - 1, j)] + c2 * out[(t - 2, j)] + 0.05 * normal(rng);
            }
        }
        out
    };
    let lead = latent(&mut rng);
    let own = latent(&mut rng);
    let coupled: Vec<usize> = (0..t_len).map(|t| (t / params.episode) % 2).collect();
    let follow = DMatrix::from_fn(t_len, LATENTS, |t, j| {
        if coupled[t] == 1 && t >= params.response_lag {
            lead[(t - params.response_lag, j)]
        } else {
            own[(t, j)]
        }
    });
    let mix_b = DMatrix::from_fn(LATENTS, params.channels, |_, _| normal(&mut rng));
    let mix_a = DMatrix::from_fn(LATENTS, params.channels, |_, _| normal(&mut rng));
    let mut b = &lead * mix_b;
    let mut a = &follow * mix_a;
    for v in b.iter_mut().chain(a.iter_mut()) {
        *v += params.noise_std * normal(&mut rng);
    }
    Ok((a, b, coupled))
}
