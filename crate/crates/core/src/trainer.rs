//! Multi-start gradient descent for minimal-norm interpolation.
//!
//! The equality constraint `f(X) = Y` is replaced by a quadratic penalty whose
//! weight grows geometrically over a fixed number of stages. Each restart owns
//! an RNG stream derived from `(seed, restart)`, so results do not depend on
//! thread scheduling.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::Dataset;
use crate::matfun;
use crate::network::{Activation, NetSpec, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    /// `½ Σ ‖W‖_F²` over every weight matrix.
    SumFrobeniusSq,
    /// `½ Σ ‖W‖_F^L` over every weight matrix, with `L` the depth.
    FrobeniusPowL,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub net: NetSpec,
    pub regularizer: Regularizer,
    /// Penalty weight of the first stage.
    pub penalty_weight: f64,
    /// Factor applied to the penalty weight after each stage.
    pub penalty_growth: f64,
    pub stages: usize,
    /// Step size is `learning_rate / penalty` within a stage.
    pub learning_rate: f64,
    /// Gradient steps per stage.
    pub steps: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Accepted residual `‖f(X) − Y‖_F` relative to `‖Y‖_F`.
    pub residual_tol: f64,
    /// Refit the last layer by least squares after descent.
    pub polish: bool,
}

impl TrainConfig {
    pub fn new(net: NetSpec, regularizer: Regularizer) -> Self {
        TrainConfig {
            net,
            regularizer,
            penalty_weight: 10.0,
            penalty_growth: 10.0,
            stages: 5,
            learning_rate: 0.1,
            steps: 2000,
            restarts: 8,
            seed: 0,
            residual_tol: 1e-4,
            polish: true,
        }
    }

    fn validate(&self, ds: &Dataset) -> Result<()> {
        self.net.validate()?;
        if self.net.input_dim() != ds.d() || self.net.output_dim() != ds.k() {
            return Err(Error::ShapeMismatch(format!(
                "network maps {}→{} but data is {}→{}",
                self.net.input_dim(),
                self.net.output_dim(),
                ds.d(),
                ds.k()
            )));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if self.steps == 0 || self.stages == 0 || self.restarts == 0 {
            return Err(Error::InvalidInput(
                "steps, stages and restarts must be positive".into(),
            ));
        }
        if !positive(self.penalty_weight)
            || !(self.penalty_growth.is_finite() && self.penalty_growth >= 1.0)
            || !positive(self.learning_rate)
            || !positive(self.residual_tol)
        {
            return Err(Error::InvalidInput(
                "penalty, growth (≥ 1), learning rate and tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartOutcome {
    pub objective: f64,
    pub residual: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub best_objective: f64,
    pub constraint_residual: f64,
    pub best_restart: usize,
    pub per_restart: Vec<RestartOutcome>,
    pub weights: Network,
}

/// Regulariser value for `net`.
pub fn regularizer_value(reg: Regularizer, net: &Network) -> f64 {
    let l = net.depth() as f64;
    net.branches
        .iter()
        .flatten()
        .map(|w| match reg {
            Regularizer::SumFrobeniusSq => 0.5 * w.norm_squared(),
            Regularizer::FrobeniusPowL => 0.5 * w.norm().powf(l),
        })
        .sum()
}

fn regularizer_grad(reg: Regularizer, w: &DMatrix<f64>, depth: usize) -> DMatrix<f64> {
    match reg {
        Regularizer::SumFrobeniusSq => w.clone(),
        Regularizer::FrobeniusPowL => {
            let n = w.norm();
            if n == 0.0 {
                DMatrix::zeros(w.nrows(), w.ncols())
            } else {
                w * (0.5 * depth as f64 * n.powi(depth as i32 - 2))
            }
        }
    }
}

/// Forward pass keeping pre-activations `Z_l` and activations `A_l` per branch.
struct Cache {
    /// `acts[b][0] = X`, `acts[b][l] = φ(Z_l)`.
    acts: Vec<Vec<DMatrix<f64>>>,
    pre: Vec<Vec<DMatrix<f64>>>,
    output: DMatrix<f64>,
}

fn forward_cached(net: &Network, x: &DMatrix<f64>) -> Cache {
    let k = net.branches[0].last().expect("layers").ncols();
    let mut output = DMatrix::zeros(x.nrows(), k);
    let mut acts = Vec::with_capacity(net.branches.len());
    let mut pre = Vec::with_capacity(net.branches.len());
    for branch in &net.branches {
        let n = branch.len();
        let mut a = vec![x.clone()];
        let mut z = Vec::with_capacity(n - 1);
        for w in &branch[..n - 1] {
            let zl = a.last().expect("input") * w;
            a.push(net.activation.apply(&zl));
            z.push(zl);
        }
        output += a.last().expect("features") * &branch[n - 1];
        acts.push(a);
        pre.push(z);
    }
    Cache { acts, pre, output }
}

/// `reg + μ ‖f(X) − Y‖_F²` and its gradient.
fn loss_and_grad(
    net: &Network,
    reg: Regularizer,
    mu: f64,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
) -> (f64, Vec<Vec<DMatrix<f64>>>) {
    let cache = forward_cached(net, x);
    let diff = &cache.output - y;
    let loss = regularizer_value(reg, net) + mu * diff.norm_squared();
    let g_out = diff * (2.0 * mu);
    let depth = net.depth();
    let grads = net
        .branches
        .iter()
        .enumerate()
        .map(|(b, branch)| {
            let n = branch.len();
            let mut grads = vec![DMatrix::zeros(0, 0); n];
            grads[n - 1] = cache.acts[b][n - 1].transpose() * &g_out;
            let mut d_a = &g_out * branch[n - 1].transpose();
            for l in (0..n - 1).rev() {
                let d_z = match net.activation {
                    Activation::Linear => d_a,
                    Activation::Relu => d_a.zip_map(&cache.pre[b][l], |g, z| if z > 0.0 { g } else { 0.0 }),
                };
                grads[l] = cache.acts[b][l].transpose() * &d_z;
                d_a = d_z * branch[l].transpose();
            }
            for (g, w) in grads.iter_mut().zip(branch) {
                *g += regularizer_grad(reg, w, depth);
            }
            grads
        })
        .collect();
    (loss, grads)
}

fn loss_only(net: &Network, reg: Regularizer, mu: f64, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let out = forward_cached(net, x).output;
    regularizer_value(reg, net) + mu * (out - y).norm_squared()
}

/// Gaussian weights with standard deviation `1/√fan_in`.
pub fn random_network<R: rand::Rng + ?Sized>(spec: &NetSpec, rng: &mut R) -> Network {
    let mut net = Network::zeros(spec);
    for w in net.branches.iter_mut().flatten() {
        let normal = Normal::new(0.0, 1.0 / (w.nrows() as f64).sqrt()).expect("valid std");
        for v in w.iter_mut() {
            *v = normal.sample(rng);
        }
    }
    net
}

/// Refits every branch's last layer jointly so that `f(X)` is the projection of
/// `Y` onto the span of the penultimate features, moving the last layer as
/// little as possible.
pub fn polish_last_layer(net: &mut Network, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    let feats: Vec<DMatrix<f64>> = (0..net.branches.len())
        .map(|b| net.branch_features(x, b))
        .collect();
    let widths: Vec<usize> = feats.iter().map(|f| f.ncols()).collect();
    let total: usize = widths.iter().sum();
    let mut f = DMatrix::zeros(x.nrows(), total);
    let mut w = DMatrix::zeros(total, y.ncols());
    let mut off = 0;
    for (b, feat) in feats.iter().enumerate() {
        f.view_mut((0, off), (x.nrows(), widths[b])).copy_from(feat);
        let last = net.branches[b].last().expect("layers");
        w.view_mut((off, 0), (widths[b], y.ncols())).copy_from(last);
        off += widths[b];
    }
    let fp = matfun::pseudo_inverse(&f)?;
    let corrected = &w + &fp * (y - &f * &w);
    let mut off = 0;
    for (b, width) in widths.iter().enumerate() {
        let last = net.branches[b].last_mut().expect("layers");
        last.copy_from(&corrected.view((off, 0), (*width, y.ncols())));
        off += width;
    }
    Ok(())
}

fn run_restart(config: &TrainConfig, ds: &Dataset, restart: usize) -> (RestartOutcome, Network) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(restart as u64);
    let mut net = random_network(&config.net, &mut rng);
    let (x, y) = (ds.x(), ds.y());
    let mut mu = config.penalty_weight;
    let mut diverged = false;

    'stages: for _ in 0..config.stages {
        let mut step = config.learning_rate / mu;
        let (mut loss, mut grads) = loss_and_grad(&net, config.regularizer, mu, x, y);
        for _ in 0..config.steps {
            if !loss.is_finite() {
                diverged = true;
                break 'stages;
            }
            let mut trial = net.clone();
            for (w, g) in trial.branches.iter_mut().flatten().zip(grads.iter().flatten()) {
                *w -= g * step;
            }
            let trial_loss = loss_only(&trial, config.regularizer, mu, x, y);
            if trial_loss.is_finite() && trial_loss <= loss {
                net = trial;
                (loss, grads) = loss_and_grad(&net, config.regularizer, mu, x, y);
            } else {
                step *= 0.5;
                if step < 1e-300 {
                    break;
                }
            }
        }
        mu *= config.penalty_growth;
    }

    if !diverged && config.polish && polish_last_layer(&mut net, x, y).is_err() {
        diverged = true;
    }
    let residual = net
        .forward(x)
        .map(|out| (out - y).norm())
        .unwrap_or(f64::INFINITY);
    let objective = regularizer_value(config.regularizer, &net);
    let diverged = diverged || !objective.is_finite() || !residual.is_finite();
    (
        RestartOutcome {
            objective,
            residual,
            diverged,
        },
        net,
    )
}

/// Minimises `regulariser + μ ‖f(X) − Y‖_F²` from several random starts.
///
/// Only restarts whose final residual is within `residual_tol · ‖Y‖_F` compete
/// for the best objective; ties go to the lower restart index.
pub fn train(config: &TrainConfig, ds: &Dataset) -> Result<TrainResult> {
    config.validate(ds)?;
    let runs: Vec<(RestartOutcome, Network)> = (0..config.restarts)
        .into_par_iter()
        .map(|r| run_restart(config, ds, r))
        .collect();
    let tol = config.residual_tol * ds.y().norm() + 1e-12;
    let best = runs
        .iter()
        .enumerate()
        .filter(|(_, (o, _))| !o.diverged && o.residual <= tol)
        .min_by(|(i, (a, _)), (j, (b, _))| a.objective.total_cmp(&b.objective).then(i.cmp(j)))
        .map(|(i, _)| i);
    let Some(best) = best else {
        return Err(Error::Numerical(format!(
            "no restart reached residual ≤ {tol:e}; residuals: {:?}",
            runs.iter().map(|(o, _)| o.residual).collect::<Vec<_>>()
        )));
    };
    let per_restart: Vec<RestartOutcome> = runs.iter().map(|(o, _)| o.clone()).collect();
    let (outcome, weights) = runs.into_iter().nth(best).expect("index in range");
    Ok(TrainResult {
        best_objective: outcome.objective,
        constraint_residual: outcome.residual,
        best_restart: best,
        per_restart,
        weights,
    })
}

/// Largest relative deviation between the analytic gradient of the penalised
/// loss and central finite differences, at random weights.
///
/// For ReLU networks the weights are redrawn until every pre-activation is at
/// least `10·epsilon` away from the kink.
pub fn gradient_check(config: &TrainConfig, ds: &Dataset, epsilon: f64) -> Result<f64> {
    config.validate(ds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..1000 {
        let net = random_network(&config.net, &mut rng);
        let near_kink = config.net.activation == Activation::Relu
            && forward_cached(&net, ds.x())
                .pre
                .iter()
                .flatten()
                .any(|z| z.iter().any(|v| v.abs() < 10.0 * epsilon));
        if !near_kink {
            return gradient_check_at(config, ds, &net, epsilon);
        }
    }
    Err(Error::Numerical(
        "could not draw weights away from ReLU kinks".into(),
    ))
}

/// [`gradient_check`] at the given weights.
pub fn gradient_check_at(
    config: &TrainConfig,
    ds: &Dataset,
    net: &Network,
    epsilon: f64,
) -> Result<f64> {
    if !(1e-7..=1e-4).contains(&epsilon) {
        return Err(Error::InvalidInput(format!(
            "epsilon must lie in [1e-7, 1e-4], got {epsilon}"
        )));
    }
    let mu = config.penalty_weight;
    let (x, y) = (ds.x(), ds.y());
    let (_, grads) = loss_and_grad(net, config.regularizer, mu, x, y);
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (b, branch) in net.branches.iter().enumerate() {
        for (l, w) in branch.iter().enumerate() {
            for (idx, &g) in grads[b][l].iter().enumerate().take(w.len()) {
                let mut plus = net.clone();
                plus.branches[b][l][idx] += epsilon;
                let mut minus = net.clone();
                minus.branches[b][l][idx] -= epsilon;
                let fd = (loss_only(&plus, config.regularizer, mu, x, y)
                    - loss_only(&minus, config.regularizer, mu, x, y))
                    / (2.0 * epsilon);
                analytic.push(g);
                numeric.push(fd);
            }
        }
    }
    let scale = analytic
        .iter()
        .chain(&numeric)
        .fold(1e-8_f64, |m, v| m.max(v.abs()));
    Ok(analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / scale)
        .fold(0.0, f64::max))
}

/// Analytic gradient of the penalised loss, exposed for tests.
pub fn loss_gradient(
    net: &Network,
    reg: Regularizer,
    penalty: f64,
    ds: &Dataset,
) -> (f64, Vec<Vec<DMatrix<f64>>>) {
    loss_and_grad(net, reg, penalty, ds.x(), ds.y())
}
