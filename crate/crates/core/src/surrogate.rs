//! Sparse Bayesian linear regression with an ARD prior.
//!
//! Inputs are min-max scaled per column and centred, targets standardised. Each weight has
//! its own precision `λ_i` with a Gamma(k, rate r) hyperprior, and `(λ, σ²)`
//! are chosen by maximising the evidence with fixed-point updates. A step is
//! only accepted if it does not lower the objective.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

const JITTER: f64 = 1e-10;
const STD_FLOOR: f64 = 1e-8;
const NOISE_FLOOR: f64 = 1e-6;
const LAMBDA_RANGE: (f64, f64) = (1e-10, 1e12);
const BACKTRACK_STEPS: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum SurrogateError {
    #[error("{rows} feature rows but {targets} targets")]
    ShapeMismatch { rows: usize, targets: usize },
    #[error("need at least 2 observations, got {0}")]
    TooFewRows(usize),
    #[error("non-finite value in training data")]
    NonFinite,
    #[error("posterior precision is singular")]
    SingularFit,
    #[error("feature vector has length {found}, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    pub gamma_shape: f64,
    /// Rate (inverse scale) of the Gamma hyperprior.
    pub gamma_rate: f64,
    pub max_evidence_iterations: usize,
    /// Relative change in the objective below which fitting stops.
    pub convergence_tolerance: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self { gamma_shape: 1e-6, gamma_rate: 1e-6, max_evidence_iterations: 300, convergence_tolerance: 1e-9 }
    }
}

impl SurrogateConfig {
    /// Mode of the hyperprior over `log λ`; used for columns with no variation.
    pub fn pinned_precision(&self) -> f64 {
        self.gamma_shape / self.gamma_rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct InputScaler {
    min: Vec<f64>,
    span: Vec<f64>,
    /// Training mean of each scaled column; subtracting it stands in for an intercept.
    centre: Vec<f64>,
}

impl InputScaler {
    fn fit(rows: &[Vec<f64>], dim: usize) -> Self {
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for r in rows {
            for (j, &x) in r.iter().enumerate() {
                min[j] = min[j].min(x);
                max[j] = max[j].max(x);
            }
        }
        let span = min.iter().zip(&max).map(|(a, b)| b - a).collect();
        let mut scaler = Self { min, span, centre: vec![0.0; dim] };
        let mut centre = vec![0.0; dim];
        for r in rows {
            centre.iter_mut().zip(scaler.apply(r).iter()).for_each(|(c, v)| *c += v);
        }
        let n = rows.len().max(1) as f64;
        scaler.centre = centre.into_iter().map(|c| c / n).collect();
        scaler
    }

    fn degenerate(&self, j: usize) -> bool {
        self.span[j].is_nan() || self.span[j] <= 0.0
    }

    fn apply(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            x.len(),
            x.iter().enumerate().map(|(j, &v)| {
                if self.degenerate(j) {
                    0.0
                } else {
                    (v - self.min[j]) / self.span[j] - self.centre[j]
                }
            }),
        )
    }

    fn matrix(&self, rows: &[Vec<f64>]) -> DMatrix<f64> {
        let dim = self.min.len();
        let mut m = DMatrix::zeros(rows.len(), dim);
        for (i, r) in rows.iter().enumerate() {
            m.row_mut(i).copy_from(&self.apply(r).transpose());
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct TargetScaler {
    mean: f64,
    std: f64,
}

impl TargetScaler {
    fn fit(y: &[f64]) -> Self {
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt().max(STD_FLOOR) }
    }

    fn apply(&self, y: &[f64]) -> DVector<f64> {
        DVector::from_iterator(y.len(), y.iter().map(|v| (v - self.mean) / self.std))
    }
}

/// Fitted weight posterior together with the scalers it was trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogatePosterior {
    pub weight_mean: DVector<f64>,
    pub weight_covariance: DMatrix<f64>,
    /// In standardised target units.
    pub noise_variance: f64,
    pub precisions: DVector<f64>,
    /// Objective after each accepted hyperparameter step, starting from the initial point.
    pub evidence_trace: Vec<f64>,
    config: SurrogateConfig,
    inputs: InputScaler,
    target: TargetScaler,
}

struct Solved {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    objective: f64,
}

/// Gaussian marginal likelihood of `t` plus the hyperprior on active precisions.
fn solve(
    x: &DMatrix<f64>,
    t: &DVector<f64>,
    lambda: &DVector<f64>,
    noise: f64,
    active: &[bool],
    cfg: &SurrogateConfig,
) -> Result<Solved, SurrogateError> {
    let (n, d) = x.shape();
    let mut precision = x.transpose() * x / noise;
    for i in 0..d {
        precision[(i, i)] += lambda[i] + JITTER;
    }
    let chol = Cholesky::new(precision).ok_or(SurrogateError::SingularFit)?;
    let mean = chol.solve(&(x.transpose() * t)) / noise;
    let covariance = chol.inverse();
    let log_det_a = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let resid = t - x * &mean;
    let quad = resid.norm_squared() / noise + mean.iter().zip(lambda.iter()).map(|(m, l)| l * m * m).sum::<f64>();
    let log_det_c = n as f64 * noise.ln() + log_det_a - lambda.iter().map(|l| l.ln()).sum::<f64>();
    let likelihood = -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det_c + quad);
    let (k, r) = (cfg.gamma_shape, cfg.gamma_rate);
    let prior: f64 = lambda
        .iter()
        .zip(active)
        .filter(|(_, &a)| a)
        .map(|(&l, _)| k * r.ln() - ln_gamma(k) + k * l.ln() - r * l)
        .sum();
    let objective = likelihood + prior;
    if !objective.is_finite() {
        return Err(SurrogateError::SingularFit);
    }
    Ok(Solved { mean, covariance, objective })
}

fn check_inputs(rows: &[Vec<f64>], y: &[f64]) -> Result<usize, SurrogateError> {
    if rows.len() != y.len() {
        return Err(SurrogateError::ShapeMismatch { rows: rows.len(), targets: y.len() });
    }
    if rows.len() < 2 {
        return Err(SurrogateError::TooFewRows(rows.len()));
    }
    let dim = rows[0].len();
    if let Some(r) = rows.iter().find(|r| r.len() != dim) {
        return Err(SurrogateError::DimensionMismatch { expected: dim, found: r.len() });
    }
    let finite = y.iter().all(|v| v.is_finite()) && rows.iter().flatten().all(|v| v.is_finite());
    if !finite {
        return Err(SurrogateError::NonFinite);
    }
    Ok(dim)
}

struct Prepared {
    x: DMatrix<f64>,
    t: DVector<f64>,
    active: Vec<bool>,
    inputs: InputScaler,
    target: TargetScaler,
}

fn prepare(rows: &[Vec<f64>], y: &[f64]) -> Result<Prepared, SurrogateError> {
    let dim = check_inputs(rows, y)?;
    let inputs = InputScaler::fit(rows, dim);
    let target = TargetScaler::fit(y);
    Ok(Prepared {
        x: inputs.matrix(rows),
        t: target.apply(y),
        active: (0..dim).map(|j| !inputs.degenerate(j)).collect(),
        inputs,
        target,
    })
}

impl SurrogatePosterior {
    /// Fits weights and hyperparameters by evidence maximisation.
    pub fn fit(rows: &[Vec<f64>], y: &[f64], cfg: &SurrogateConfig) -> Result<Self, SurrogateError> {
        let p = prepare(rows, y)?;
        let d = p.x.ncols();
        let pinned = cfg.pinned_precision();
        let mut lambda = DVector::from_iterator(d, p.active.iter().map(|&a| if a { 1.0 } else { pinned }));
        let t_var = p.t.norm_squared() / p.t.len() as f64;
        let mut noise = (0.1 * t_var).max(NOISE_FLOOR);
        let mut state = solve(&p.x, &p.t, &lambda, noise, &p.active, cfg)?;
        let mut trace = vec![state.objective];
        let n = p.t.len() as f64;
        for _ in 0..cfg.max_evidence_iterations {
            let mut gamma_sum = 0.0;
            let mut proposal = lambda.clone();
            for i in (0..d).filter(|&i| p.active[i]) {
                let gamma = (1.0 - lambda[i] * state.covariance[(i, i)]).clamp(0.0, 1.0);
                gamma_sum += gamma;
                let m = state.mean[i];
                proposal[i] = ((gamma + 2.0 * cfg.gamma_shape) / (m * m + 2.0 * cfg.gamma_rate))
                    .clamp(LAMBDA_RANGE.0, LAMBDA_RANGE.1);
            }
            let resid = (&p.t - &p.x * &state.mean).norm_squared();
            let noise_proposal = (resid / (n - gamma_sum).max(1e-3)).max(NOISE_FLOOR);

            let mut accepted = None;
            let mut step = 1.0;
            for _ in 0..BACKTRACK_STEPS {
                let cand_lambda = lambda.zip_map(&proposal, |a, b| a * (b / a).powf(step));
                let cand_noise = noise * (noise_proposal / noise).powf(step);
                if let Ok(s) = solve(&p.x, &p.t, &cand_lambda, cand_noise, &p.active, cfg) {
                    if s.objective >= state.objective {
                        accepted = Some((cand_lambda, cand_noise, s));
                        break;
                    }
                }
                step *= 0.5;
            }
            let Some((l, s2, s)) = accepted else { break };
            let gain = s.objective - state.objective;
            lambda = l;
            noise = s2;
            state = s;
            trace.push(state.objective);
            if gain <= cfg.convergence_tolerance * (1.0 + state.objective.abs()) {
                break;
            }
        }
        Ok(Self {
            weight_mean: state.mean,
            weight_covariance: state.covariance,
            noise_variance: noise,
            precisions: lambda,
            evidence_trace: trace,
            config: *cfg,
            inputs: p.inputs,
            target: p.target,
        })
    }

    /// Posterior at fixed precisions and noise variance (standardised units).
    pub fn fit_frozen(
        rows: &[Vec<f64>],
        y: &[f64],
        precisions: &[f64],
        noise_variance: f64,
        cfg: &SurrogateConfig,
    ) -> Result<Self, SurrogateError> {
        let p = prepare(rows, y)?;
        if precisions.len() != p.x.ncols() {
            return Err(SurrogateError::DimensionMismatch { expected: p.x.ncols(), found: precisions.len() });
        }
        let lambda = DVector::from_column_slice(precisions);
        let state = solve(&p.x, &p.t, &lambda, noise_variance, &p.active, cfg)?;
        Ok(Self {
            weight_mean: state.mean,
            weight_covariance: state.covariance,
            noise_variance,
            precisions: lambda,
            evidence_trace: vec![state.objective],
            config: *cfg,
            inputs: p.inputs,
            target: p.target,
        })
    }

    pub fn dim(&self) -> usize {
        self.weight_mean.len()
    }

    /// Scales a raw feature vector the way training inputs were scaled.
    pub fn normalise(&self, x: &[f64]) -> Result<DVector<f64>, SurrogateError> {
        if x.len() != self.dim() {
            return Err(SurrogateError::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        Ok(self.inputs.apply(x))
    }

    /// Predictive mean and variance in original target units.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64), SurrogateError> {
        let phi = self.normalise(x)?;
        let mean = phi.dot(&self.weight_mean);
        let var = (&self.weight_covariance * &phi).dot(&phi).max(0.0) + self.noise_variance;
        let s = self.target.std;
        Ok((self.target.mean + s * mean, s * s * var))
    }

    /// Weights mapped back to raw feature and target units.
    pub fn raw_weights(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|j| {
                if self.inputs.degenerate(j) {
                    0.0
                } else {
                    self.weight_mean[j] * self.target.std / self.inputs.span[j]
                }
            })
            .collect()
    }

    pub fn target_scale(&self) -> (f64, f64) {
        (self.target.mean, self.target.std)
    }

    /// Objective (evidence plus hyperprior) of this posterior's hyperparameters
    /// on `(rows, y)`, scaled with this posterior's scalers.
    pub fn log_evidence(&self, rows: &[Vec<f64>], y: &[f64]) -> Result<f64, SurrogateError> {
        check_inputs(rows, y)?;
        let x = self.inputs.matrix(rows);
        let t = self.target.apply(y);
        let active: Vec<bool> = (0..self.dim()).map(|j| !self.inputs.degenerate(j)).collect();
        solve(&x, &t, &self.precisions, self.noise_variance, &active, &self.config).map(|s| s.objective)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_targets_predict_the_constant() {
        let rows = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.5, 0.5]];
        let post = SurrogatePosterior::fit(&rows, &[2.5; 3], &SurrogateConfig::default()).unwrap();
        for x in [[0.0, 0.0], [1.0, 1.0], [3.0, -2.0]] {
            let (m, v) = post.predict(&x).unwrap();
            assert!((m - 2.5).abs() < 1e-6);
            assert!(v >= 0.0);
        }
    }

    #[test]
    fn degenerate_columns_keep_the_pinned_precision() {
        let rows = vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]];
        let cfg = SurrogateConfig::default();
        let post = SurrogatePosterior::fit(&rows, &[0.0, 1.0, 2.0], &cfg).unwrap();
        assert_eq!(post.precisions[0], cfg.pinned_precision());
        assert_eq!(post.weight_mean[0], 0.0);
    }

    #[test]
    fn bad_shapes_are_rejected() {
        let cfg = SurrogateConfig::default();
        assert_eq!(SurrogatePosterior::fit(&[vec![1.0]], &[1.0], &cfg).unwrap_err(), SurrogateError::TooFewRows(1));
        assert!(matches!(
            SurrogatePosterior::fit(&[vec![1.0], vec![2.0]], &[1.0], &cfg),
            Err(SurrogateError::ShapeMismatch { .. })
        ));
        assert_eq!(
            SurrogatePosterior::fit(&[vec![1.0], vec![f64::NAN]], &[1.0, 2.0], &cfg).unwrap_err(),
            SurrogateError::NonFinite
        );
        let post = SurrogatePosterior::fit(&[vec![1.0], vec![2.0]], &[1.0, 2.0], &cfg).unwrap();
        assert!(matches!(post.predict(&[1.0, 2.0]), Err(SurrogateError::DimensionMismatch { .. })));
    }

    #[test]
    fn zero_input_variance_floor() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let post = SurrogatePosterior::fit(&rows, &[0.1, 0.9, 2.2, 2.8], &SurrogateConfig::default()).unwrap();
        let (_, v) = post.predict(&[0.0]).unwrap();
        let s = post.target_scale().1;
        assert!(v >= s * s * post.noise_variance - 1e-15);
    }
}
