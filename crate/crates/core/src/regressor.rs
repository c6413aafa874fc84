//! Utterance-level quality estimators: feature → score regressors.
//!
//! Two interchangeable kinds. `knn` predicts the mean target of the k
//! nearest stored training points in standardized feature space, which takes
//! "acoustically similar data trains similarly" at face value. `ridge`
//! solves the L2-regularized least-squares normal equations exactly, with an
//! unpenalized intercept, as a smooth alternative. Both are deterministic.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressorKind {
    Knn,
    Ridge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorConfig {
    pub kind: RegressorKind,
    /// Neighbor count for `knn`.
    #[serde(default = "default_k")]
    pub k: usize,
    /// L2 penalty for `ridge`.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Standardize features to zero mean / unit deviation before fitting.
    #[serde(default = "default_standardize")]
    pub standardize: bool,
}

fn default_k() -> usize {
    10
}

fn default_lambda() -> f64 {
    1e-3
}

fn default_standardize() -> bool {
    true
}

impl Default for RegressorConfig {
    fn default() -> Self {
        RegressorConfig {
            kind: RegressorKind::Knn,
            k: default_k(),
            lambda: default_lambda(),
            standardize: default_standardize(),
        }
    }
}

impl RegressorConfig {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            RegressorKind::Knn if self.k == 0 => {
                Err(Error::InvalidConfig("knn needs k >= 1".into()))
            }
            RegressorKind::Ridge if !(self.lambda >= 0.0) => Err(Error::InvalidConfig(
                format!("ridge lambda must be >= 0, got {}", self.lambda),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum ModelState {
    Knn {
        k: usize,
        /// Standardized training features, insertion order preserved for
        /// distance tie-breaking.
        points: Vec<Vec<f64>>,
        targets: Vec<f64>,
    },
    Ridge {
        /// Weights in standardized feature space.
        weights: Vec<f64>,
        intercept: f64,
    },
}

/// A fitted, immutable regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedRegressor {
    kind: RegressorKind,
    feature_mean: Vec<f64>,
    /// Per-feature deviations; zero-variance features are imputed to 1.
    feature_std: Vec<f64>,
    state: ModelState,
}

/// Fit a regressor on feature vectors and their targets.
pub fn fit(features: &[Vec<f64>], targets: &[f64], cfg: &RegressorConfig) -> Result<FittedRegressor> {
    cfg.validate()?;
    if features.len() != targets.len() {
        return Err(Error::Regressor(format!(
            "{} feature rows vs {} targets",
            features.len(),
            targets.len()
        )));
    }
    let min_rows = match cfg.kind {
        RegressorKind::Knn => cfg.k.max(2),
        RegressorKind::Ridge => 2,
    };
    if features.len() < min_rows {
        return Err(Error::Regressor(format!(
            "need at least {min_rows} training rows, got {}",
            features.len()
        )));
    }
    let dim = features[0].len();
    if dim == 0 {
        return Err(Error::Regressor("zero-dimensional features".into()));
    }
    for (i, row) in features.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::Regressor(format!(
                "row {i}: dimension {} != {dim}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Regressor(format!("row {i}: non-finite feature")));
        }
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::Regressor("non-finite target".into()));
    }

    let n = features.len() as f64;
    let (feature_mean, feature_std) = if cfg.standardize {
        let mut mean = vec![0.0; dim];
        for row in features {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for row in features {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std: Vec<f64> = var
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        (mean, std)
    } else {
        (vec![0.0; dim], vec![1.0; dim])
    };

    let standardized: Vec<Vec<f64>> = features
        .iter()
        .map(|row| {
            row.iter()
                .zip(&feature_mean)
                .zip(&feature_std)
                .map(|((v, m), s)| (v - m) / s)
                .collect()
        })
        .collect();

    let state = match cfg.kind {
        RegressorKind::Knn => ModelState::Knn {
            k: cfg.k,
            points: standardized,
            targets: targets.to_vec(),
        },
        RegressorKind::Ridge => {
            let (weights, intercept) = solve_ridge(&standardized, targets, cfg.lambda)?;
            ModelState::Ridge { weights, intercept }
        }
    };

    Ok(FittedRegressor {
        kind: cfg.kind,
        feature_mean,
        feature_std,
        state,
    })
}

/// Solve `argmin_w,b Σ (x·w + b − y)² + λ‖w‖²` via the normal equations
/// (intercept unpenalized), with Gaussian elimination and partial pivoting.
fn solve_ridge(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<(Vec<f64>, f64)> {
    let n = x.len();
    let p = x[0].len();
    let cols = p + 1; // weights plus intercept
    let mut a = vec![vec![0.0; cols]; cols];
    let mut b = vec![0.0; cols];
    for i in 0..n {
        for r in 0..p {
            for c in 0..p {
                a[r][c] += x[i][r] * x[i][c];
            }
            a[r][p] += x[i][r];
            b[r] += x[i][r] * y[i];
        }
        b[p] += y[i];
    }
    for c in 0..p {
        a[p][c] = a[c][p];
    }
    a[p][p] = n as f64;
    for (r, row) in a.iter_mut().enumerate().take(p) {
        row[r] += lambda;
    }
    let theta = solve_linear(a, b)?;
    let (weights, intercept) = theta.split_at(p);
    Ok((weights.to_vec(), intercept[0]))
}

fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot_row][col].abs() < 1e-12 {
            return Err(Error::Regressor(
                "singular normal equations (try lambda > 0)".into(),
            ));
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for c in (row + 1)..n {
            acc -= a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

impl FittedRegressor {
    pub fn kind(&self) -> RegressorKind {
        self.kind
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_mean.len()
    }

    fn standardize(&self, feature: &[f64]) -> Vec<f64> {
        feature
            .iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    /// Predict a quality score for one feature vector, clamped to [1, 5].
    pub fn predict(&self, feature: &[f64]) -> Result<f64> {
        if feature.len() != self.feature_dim() {
            return Err(Error::Regressor(format!(
                "feature dimension {} != {}",
                feature.len(),
                self.feature_dim()
            )));
        }
        let z = self.standardize(feature);
        let raw = match &self.state {
            ModelState::Knn { k, points, targets } => {
                let mut dist: Vec<(f64, usize)> = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        let d2: f64 = p.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum();
                        (d2, i)
                    })
                    .collect();
                dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                let k = (*k).min(dist.len());
                dist[..k].iter().map(|&(_, i)| targets[i]).sum::<f64>() / k as f64
            }
            ModelState::Ridge { weights, intercept } => {
                weights.iter().zip(&z).map(|(w, v)| w * v).sum::<f64>() + intercept
            }
        };
        Ok(raw.clamp(1.0, 5.0))
    }

    /// Ridge weights and intercept mapped back to the original (un-
    /// standardized) feature space. `None` for knn.
    pub fn coefficients(&self) -> Option<(Vec<f64>, f64)> {
        match &self.state {
            ModelState::Ridge { weights, intercept } => {
                let w: Vec<f64> = weights
                    .iter()
                    .zip(&self.feature_std)
                    .map(|(w, s)| w / s)
                    .collect();
                let b = intercept
                    - w.iter()
                        .zip(&self.feature_mean)
                        .map(|(w, m)| w * m)
                        .sum::<f64>();
                Some((w, b))
            }
            ModelState::Knn { .. } => None,
        }
    }

    /// Infinity norm of the gradient of the ridge objective at the fitted
    /// parameters, in standardized space. Diagnostic; ~0 for exact solves.
    pub fn ridge_gradient_norm(&self, features: &[Vec<f64>], targets: &[f64], lambda: f64) -> Option<f64> {
        let ModelState::Ridge { weights, intercept } = &self.state else {
            return None;
        };
        let z: Vec<Vec<f64>> = features.iter().map(|f| self.standardize(f)).collect();
        let p = weights.len();
        let mut grad = vec![0.0; p + 1];
        for (row, &y) in z.iter().zip(targets) {
            let pred: f64 = weights.iter().zip(row).map(|(w, v)| w * v).sum::<f64>() + intercept;
            let resid = pred - y;
            for (g, v) in grad.iter_mut().zip(row) {
                *g += 2.0 * resid * v;
            }
            grad[p] += 2.0 * resid;
        }
        for (g, w) in grad.iter_mut().zip(weights) {
            *g += 2.0 * lambda * w;
        }
        Some(grad.iter().fold(0.0f64, |a, g| a.max(g.abs())))
    }
}
