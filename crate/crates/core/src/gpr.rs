//! Gaussian-process regression from interval-average load to the interval's
//! maximum (or minimum) instantaneous load.
//!
//! The model works on standardized data with a zero prior mean: inputs and
//! targets are shifted and scaled by their sample mean and standard
//! deviation, and the kernel hyperparameters (given in kW) are rescaled to
//! match. This is algebraically the same as a GP in physical units whose
//! prior mean is the target sample mean.
//!
//! A noise term `sigma_n² I` is added to the covariance of the training
//! targets. Real interval data contains repeated averages with different
//! extrema, and without it the kernel matrix is singular.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, SquareMatrix};
use crate::scalar::{mean, std_dev, Scalar};

/// Squared-exponential kernel hyperparameters, all in kW.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct KernelParams<T> {
    /// Signal scale.
    pub sigma_f: T,
    /// Length scale.
    pub lambda: T,
    /// Observation noise scale.
    pub sigma_n: T,
}

impl<T: Scalar> KernelParams<T> {
    pub fn new(sigma_f: T, lambda: T, sigma_n: T) -> Result<Self> {
        let p = Self { sigma_f, lambda, sigma_n };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: T| v > T::zero() && v.is_finite();
        if ok(self.sigma_f) && ok(self.lambda) && ok(self.sigma_n) {
            Ok(())
        } else {
            Err(Error::Config(format!("kernel parameters must be positive and finite: {self:?}")))
        }
    }

    /// `lambda = std(x)`, `sigma_f = std(y)`, `sigma_n = 0.05 std(y)`.
    pub fn default_for(pairs: &[(T, T)]) -> Self {
        let (sx, sy) = data_scales(pairs);
        Self { sigma_f: sy, lambda: sx, sigma_n: sy * T::of(0.05) }
    }
}

/// `sigma_f² · exp(-|x - x'|² / (2 lambda²))`.
#[inline]
pub fn kernel<T: Scalar>(x: T, x_prime: T, params: &KernelParams<T>) -> T {
    let d = x - x_prime;
    params.sigma_f * params.sigma_f * (-(d * d) / (T::of(2.0) * params.lambda * params.lambda)).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Max,
    Min,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Standardization<T> {
    pub x_mean: T,
    pub x_std: T,
    pub y_mean: T,
    pub y_std: T,
}

/// A fitted bound-inference model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", into = "GprRecord<T>", try_from = "GprRecord<T>")]
pub struct GprModel<T: Scalar> {
    x_train: Vec<T>,
    y_train: Vec<T>,
    params: KernelParams<T>,
    target_kind: TargetKind,
    standardization: Standardization<T>,
    xs: Vec<T>,
    std_params: KernelParams<T>,
    chol: Cholesky<T>,
    alpha: Vec<T>,
}

/// Serialized form: training data and effective parameters. The
/// factorization is rebuilt deterministically on load.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GprRecord<T> {
    pub target_kind: TargetKind,
    pub params: KernelParams<T>,
    pub x_train: Vec<T>,
    pub y_train: Vec<T>,
}

impl<T: Scalar> From<GprModel<T>> for GprRecord<T> {
    fn from(m: GprModel<T>) -> Self {
        Self {
            target_kind: m.target_kind,
            params: m.params,
            x_train: m.x_train,
            y_train: m.y_train,
        }
    }
}

impl<T: Scalar> TryFrom<GprRecord<T>> for GprModel<T> {
    type Error = Error;

    fn try_from(r: GprRecord<T>) -> Result<Self> {
        let pairs: Vec<(T, T)> = r.x_train.into_iter().zip(r.y_train).collect();
        GprModel::fit_exact(&pairs, r.params, r.target_kind)
    }
}

const MAX_JITTER_RETRIES: usize = 3;

impl<T: Scalar> GprModel<T> {
    /// Fits the model. If the covariance cannot be factorized, `sigma_n` is
    /// raised tenfold up to three times before giving up.
    pub fn fit(pairs: &[(T, T)], params: KernelParams<T>, target_kind: TargetKind) -> Result<Self> {
        let mut params = params;
        let mut last_err = None;
        for _ in 0..=MAX_JITTER_RETRIES {
            match Self::fit_exact(pairs, params, target_kind) {
                Ok(m) => return Ok(m),
                Err(e @ Error::Numerical(_)) => {
                    last_err = Some(e);
                    params.sigma_n *= T::of(10.0);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last_err.expect("at least one attempt"))
    }

    /// Fits with exactly the given parameters, without jitter retries.
    pub fn fit_exact(pairs: &[(T, T)], params: KernelParams<T>, target_kind: TargetKind) -> Result<Self> {
        params.validate()?;
        if pairs.len() < 2 {
            return Err(Error::Input(format!("GPR needs at least 2 training pairs, got {}", pairs.len())));
        }
        if pairs.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::Input("GPR training data must be finite".into()));
        }
        let x_train: Vec<T> = pairs.iter().map(|p| p.0).collect();
        let y_train: Vec<T> = pairs.iter().map(|p| p.1).collect();
        let standardization = standardize(&x_train, &y_train);
        let Standardization { x_mean, x_std, y_mean, y_std } = standardization;
        let xs: Vec<T> = x_train.iter().map(|&x| (x - x_mean) / x_std).collect();
        let ys: Vec<T> = y_train.iter().map(|&y| (y - y_mean) / y_std).collect();
        let std_params = KernelParams {
            sigma_f: params.sigma_f / y_std,
            lambda: params.lambda / x_std,
            sigma_n: params.sigma_n / y_std,
        };
        let noise = std_params.sigma_n * std_params.sigma_n;
        let n = xs.len();
        let k = SquareMatrix::from_fn(n, |i, j| {
            let v = kernel(xs[i], xs[j], &std_params);
            if i == j {
                v + noise
            } else {
                v
            }
        });
        let chol = Cholesky::factor(&k).ok_or_else(|| {
            Error::Numerical(format!("kernel matrix not positive definite with sigma_n = {}", params.sigma_n))
        })?;
        let alpha = chol.solve(&ys);
        Ok(Self {
            x_train,
            y_train,
            params,
            target_kind,
            standardization,
            xs,
            std_params,
            chol,
            alpha,
        })
    }

    pub fn params(&self) -> &KernelParams<T> {
        &self.params
    }

    pub fn target_kind(&self) -> TargetKind {
        self.target_kind
    }

    pub fn standardization(&self) -> &Standardization<T> {
        &self.standardization
    }

    pub fn x_train(&self) -> &[T] {
        &self.x_train
    }

    pub fn y_train(&self) -> &[T] {
        &self.y_train
    }

    pub fn len(&self) -> usize {
        self.x_train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_train.is_empty()
    }

    /// Lower Cholesky factor of the standardized `K + sigma_n² I`.
    pub fn cholesky(&self) -> &Cholesky<T> {
        &self.chol
    }

    fn cross_cov(&self, p_a: T) -> Vec<T> {
        let xs_star = (p_a - self.standardization.x_mean) / self.standardization.x_std;
        self.xs.iter().map(|&x| kernel(xs_star, x, &self.std_params)).collect()
    }

    /// Posterior mean and variance (kW, kW²) of the latent bound at `p_a`.
    pub fn predict(&self, p_a: T) -> (T, T) {
        let k_star = self.cross_cov(p_a);
        let s = &self.standardization;
        let mu = s.y_mean + s.y_std * dot(&k_star, &self.alpha);
        let v = self.chol.solve_lower(&k_star);
        let prior = self.std_params.sigma_f * self.std_params.sigma_f;
        let var = (prior - dot(&v, &v)).max(T::zero()) * s.y_std * s.y_std;
        (mu, var)
    }

    /// Posterior mean only; `O(N)` per call.
    pub fn predict_mean(&self, p_a: T) -> T {
        let s = &self.standardization;
        s.y_mean + s.y_std * dot(&self.cross_cov(p_a), &self.alpha)
    }
}

fn data_scales<T: Scalar>(pairs: &[(T, T)]) -> (T, T) {
    let xs: Vec<T> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<T> = pairs.iter().map(|p| p.1).collect();
    let s = standardize(&xs, &ys);
    (s.x_std, s.y_std)
}

fn standardize<T: Scalar>(x: &[T], y: &[T]) -> Standardization<T> {
    let nonzero = |s: Option<T>| match s {
        Some(v) if v > T::zero() && v.is_finite() => v,
        _ => T::one(),
    };
    Standardization {
        x_mean: mean(x).unwrap_or_else(T::zero),
        x_std: nonzero(std_dev(x)),
        y_mean: mean(y).unwrap_or_else(T::zero),
        y_std: nonzero(std_dev(y)),
    }
}

/// Multiplicative hyperparameter grid, scaled by the data's standard deviations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub lambda_factors: Vec<f64>,
    pub sigma_f_factors: Vec<f64>,
    pub sigma_n_factors: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            lambda_factors: vec![0.1, 0.3, 1.0, 3.0, 10.0],
            sigma_f_factors: vec![0.5, 1.0, 2.0],
            sigma_n_factors: vec![0.01, 0.05, 0.2],
        }
    }
}

impl HyperGrid {
    /// Absolute grid points for this data set, lambda varying slowest.
    pub fn expand<T: Scalar>(&self, pairs: &[(T, T)]) -> Vec<KernelParams<T>> {
        let (sx, sy) = data_scales(pairs);
        let mut out = Vec::new();
        for &l in &self.lambda_factors {
            for &f in &self.sigma_f_factors {
                for &n in &self.sigma_n_factors {
                    out.push(KernelParams {
                        sigma_f: sy * T::of(f),
                        lambda: sx * T::of(l),
                        sigma_n: sy * T::of(n),
                    });
                }
            }
        }
        out
    }
}

/// k-fold cross-validation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrossValidation {
    pub k_folds: usize,
    pub seed: u64,
    /// Upper bound on pairs used for validation runs; `None` uses all.
    pub max_points: Option<usize>,
}

impl Default for CrossValidation {
    fn default() -> Self {
        Self { k_folds: 5, seed: 0x5eed, max_points: None }
    }
}

impl CrossValidation {
    /// Grid point with the lowest mean validation RMSE; ties go to the
    /// earliest grid point. Folds come from a seeded shuffle of the pairs
    /// in canonical (sorted) order, so input order does not matter.
    pub fn select<T: Scalar>(&self, pairs: &[(T, T)], grid: &[KernelParams<T>]) -> Result<KernelParams<T>> {
        let k = self.k_folds;
        if k < 2 {
            return Err(Error::Config(format!("k_folds must be at least 2, got {k}")));
        }
        if grid.is_empty() {
            return Err(Error::Config("hyperparameter grid is empty".into()));
        }
        if grid.len() == 1 {
            return Ok(grid[0]);
        }
        let mut canon = pairs.to_vec();
        canon.sort_by(|a, b| a.0.partial_cmp(&b.0).and_then(|o| Some(o.then(a.1.partial_cmp(&b.1)?))).expect("finite pairs"));
        let mut order: Vec<usize> = (0..canon.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        if let Some(m) = self.max_points {
            order.truncate(m.max(k));
        }
        if order.len() < k {
            return Err(Error::Input(format!("{} pairs cannot form {k} folds", order.len())));
        }
        type Fold<T> = (Vec<(T, T)>, Vec<(T, T)>);
        let folds: Vec<Fold<T>> = (0..k)
            .map(|f| {
                let mut train = Vec::new();
                let mut valid = Vec::new();
                for (pos, &i) in order.iter().enumerate() {
                    if pos % k == f {
                        valid.push(canon[i]);
                    } else {
                        train.push(canon[i]);
                    }
                }
                (train, valid)
            })
            .filter(|(train, _)| train.iter().any(|p| p.0 != train[0].0))
            .collect();
        if folds.is_empty() {
            return Err(Error::Input("every cross-validation fold has constant inputs".into()));
        }
        let scores: Vec<f64> = grid
            .par_iter()
            .map(|params| {
                let mut total = 0.0;
                let mut used = 0usize;
                for (train, valid) in &folds {
                    let Ok(model) = GprModel::fit(train, *params, TargetKind::Max) else {
                        continue;
                    };
                    let se: f64 = valid
                        .iter()
                        .map(|&(x, y)| {
                            let e = (model.predict_mean(x) - y).f64();
                            e * e
                        })
                        .sum();
                    total += (se / valid.len() as f64).sqrt();
                    used += 1;
                }
                if used == 0 {
                    f64::INFINITY
                } else {
                    total / used as f64
                }
            })
            .collect();
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s < scores[best] {
                best = i;
            }
        }
        if !scores[best].is_finite() {
            return Err(Error::Numerical("no grid point could be fitted".into()));
        }
        Ok(grid[best])
    }
}

/// Cross-validated hyperparameter choice with the default fold seed.
pub fn select_hyperparams<T: Scalar>(
    pairs: &[(T, T)],
    grid: &[KernelParams<T>],
    k_folds: usize,
) -> Result<KernelParams<T>> {
    CrossValidation { k_folds, ..Default::default() }.select(pairs, grid)
}
