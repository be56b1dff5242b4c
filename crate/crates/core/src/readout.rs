//! Standardization and ridge-regression readout.

use nalgebra::{DMatrix, SVD};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{dot, Matrix};

/// Regularization values tried during model selection.
pub const DEFAULT_LAMBDA_GRID: [f64; 6] = [0.0, 0.01, 0.1, 1.0, 10.0, 100.0];

/// Relative singular value cutoff used when `lambda = 0`.
const PINV_CUTOFF: f64 = 1e-12;

/// Per-feature mean removal and unit-variance scaling.
///
/// The standard deviation uses the population convention. Constant columns
/// get scale 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Scaler {
    pub fn fit(features: &Matrix) -> Result<Self> {
        let (n, d) = (features.rows(), features.cols());
        let mut mean = vec![0.0; d];
        let mut lo = features.row(0).to_vec();
        let mut hi = lo.clone();
        for i in 0..n {
            for (j, &v) in features.row(i).iter().enumerate() {
                mean[j] += v;
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        let inv_n = 1.0 / n as f64;
        for (j, m) in mean.iter_mut().enumerate() {
            *m = if lo[j] == hi[j] { lo[j] } else { *m * inv_n };
        }
        let mut var = vec![0.0; d];
        for i in 0..n {
            for (j, &v) in features.row(i).iter().enumerate() {
                let c = v - mean[j];
                var[j] += c * c;
            }
        }
        let scale = var
            .iter()
            .map(|&s| {
                let std = (s * inv_n).sqrt();
                if std > 0.0 {
                    std
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    /// Mean 0, scale 1.
    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    fn check(&self, features: &Matrix) -> Result<()> {
        if features.cols() != self.mean.len() {
            return Err(dim_err!(
                "scaler fitted on {} features, got {}",
                self.mean.len(),
                features.cols()
            ));
        }
        Ok(())
    }

    pub fn transform(&self, features: &Matrix) -> Result<Matrix> {
        self.check(features)?;
        let mut out = features.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.scale[j];
            }
        }
        Ok(out)
    }

    pub fn inverse_transform(&self, scaled: &Matrix) -> Result<Matrix> {
        self.check(scaled)?;
        let mut out = scaled.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = *v * self.scale[j] + self.mean[j];
            }
        }
        Ok(out)
    }
}

pub fn fit_scaler(features: &Matrix) -> Result<Scaler> {
    Scaler::fit(features)
}

pub fn transform(scaler: &Scaler, features: &Matrix) -> Result<Matrix> {
    scaler.transform(features)
}

/// Linear map `y = W x + b` from features to class scores.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeReadout {
    /// `c x d`, one row per output.
    weights: Matrix,
    intercept: Vec<f64>,
    lambda: f64,
}

impl RidgeReadout {
    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn intercept(&self) -> &[f64] {
        &self.intercept
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n_features(&self) -> usize {
        self.weights.cols()
    }

    pub fn n_outputs(&self) -> usize {
        self.weights.rows()
    }

    /// `n x c` output scores.
    pub fn scores(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.n_features() {
            return Err(dim_err!(
                "readout expects {} features, got {}",
                self.n_features(),
                features.cols()
            ));
        }
        let (n, c) = (features.rows(), self.n_outputs());
        let mut out = Vec::with_capacity(n * c);
        for i in 0..n {
            let x = features.row(i);
            for k in 0..c {
                out.push(dot(self.weights.row(k), x) + self.intercept[k]);
            }
        }
        Matrix::from_vec(n, c, out)
    }

    /// Argmax of the scores; ties go to the lowest class index.
    pub fn predict_labels(&self, features: &Matrix) -> Result<Vec<usize>> {
        let s = self.scores(features)?;
        Ok((0..s.rows()).map(|i| argmax(s.row(i))).collect())
    }
}

pub fn predict_labels(readout: &RidgeReadout, features: &Matrix) -> Result<Vec<usize>> {
    readout.predict_labels(features)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Fraction of matching labels.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(dim_err!(
            "cannot score {} predictions against {} labels",
            predicted.len(),
            truth.len()
        ));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// SVD of centered training data, reusable across regularization values.
#[derive(Debug, Clone)]
pub struct RidgeSolver {
    x_mean: Vec<f64>,
    y_mean: Vec<f64>,
    sigma: Vec<f64>,
    /// `d x k`
    v: DMatrix<f64>,
    /// `k x c`, `U^T Y_c`
    ut_y: DMatrix<f64>,
}

impl RidgeSolver {
    pub fn new(features: &Matrix, targets: &Matrix) -> Result<Self> {
        let (n, d) = (features.rows(), features.cols());
        let c = targets.cols();
        if targets.rows() != n {
            return Err(dim_err!(
                "{n} feature rows but {} target rows",
                targets.rows()
            ));
        }
        let x_mean = column_means(features);
        let y_mean = column_means(targets);
        let xc = DMatrix::from_fn(n, d, |i, j| features[(i, j)] - x_mean[j]);
        let yc = DMatrix::from_fn(n, c, |i, j| targets[(i, j)] - y_mean[j]);
        let svd = SVD::try_new(xc, true, true, f64::EPSILON, 100_000)
            .ok_or_else(|| Error::Numeric("ridge SVD did not converge".into()))?;
        let u = svd.u.expect("left singular vectors requested");
        let v_t = svd.v_t.expect("right singular vectors requested");
        Ok(Self {
            x_mean,
            y_mean,
            sigma: svd.singular_values.iter().copied().collect(),
            v: v_t.transpose(),
            ut_y: u.transpose() * yc,
        })
    }

    pub fn solve(&self, lambda: f64) -> Result<RidgeReadout> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Param(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        let s_max = self.sigma.iter().fold(0.0_f64, |a, &s| a.max(s));
        let shrink: Vec<f64> = self
            .sigma
            .iter()
            .map(|&s| {
                if lambda == 0.0 {
                    if s <= PINV_CUTOFF * s_max || s == 0.0 {
                        0.0
                    } else {
                        1.0 / s
                    }
                } else {
                    s / (s * s + lambda)
                }
            })
            .collect();
        let mut scaled = self.ut_y.clone();
        for (k, f) in shrink.iter().enumerate() {
            scaled.row_mut(k).scale_mut(*f);
        }
        // d x c
        let w = &self.v * scaled;
        let (d, c) = w.shape();
        // Column-major d x c is row-major c x d.
        let weights = Matrix::from_vec(c, d, w.as_slice().to_vec())
            .map_err(|_| Error::Numeric("ridge weights are not finite".into()))?;
        let intercept = (0..c)
            .map(|k| self.y_mean[k] - dot(&self.x_mean, weights.row(k)))
            .collect();
        Ok(RidgeReadout {
            weights,
            intercept,
            lambda,
        })
    }
}

fn column_means(m: &Matrix) -> Vec<f64> {
    let mut mean = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (acc, v) in mean.iter_mut().zip(m.row(i)) {
            *acc += v;
        }
    }
    let inv = 1.0 / m.rows() as f64;
    mean.iter_mut().for_each(|v| *v *= inv);
    mean
}

/// Ridge regression with intercept, solved through the SVD of the centered
/// features.
pub fn ridge_fit_svd(features: &Matrix, targets: &Matrix, lambda: f64) -> Result<RidgeReadout> {
    RidgeSolver::new(features, targets)?.solve(lambda)
}

/// `n x c` 0/1 matrix with a single one per row.
pub fn one_hot(labels: &[usize], n_classes: usize) -> Result<Matrix> {
    if labels.is_empty() {
        return Err(dim_err!("no labels to encode"));
    }
    let mut out = Matrix::zeros(labels.len(), n_classes)?;
    for (i, &y) in labels.iter().enumerate() {
        if y >= n_classes {
            return Err(Error::Label(format!(
                "label {y} out of range for {n_classes} classes"
            )));
        }
        out[(i, y)] = 1.0;
    }
    Ok(out)
}

/// Best readout over a regularization grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Tuned {
    pub readout: RidgeReadout,
    pub lambda: f64,
    pub val_accuracy: f64,
}

/// Fits one readout per grid value on the training data and keeps the one
/// with the highest validation accuracy. Ties go to the smaller `lambda`.
pub fn tune_lambda(
    train_features: &Matrix,
    train_labels: &[usize],
    val_features: &Matrix,
    val_labels: &[usize],
    n_classes: usize,
    grid: &[f64],
) -> Result<Tuned> {
    if grid.is_empty() {
        return Err(Error::Param("lambda grid is empty".into()));
    }
    let targets = one_hot(train_labels, n_classes)?;
    let solver = RidgeSolver::new(train_features, &targets)?;
    let mut best: Option<Tuned> = None;
    for &lambda in grid {
        let readout = solver.solve(lambda)?;
        let acc = accuracy(&readout.predict_labels(val_features)?, val_labels)?;
        let better = match &best {
            None => true,
            Some(b) => acc > b.val_accuracy || (acc == b.val_accuracy && lambda < b.lambda),
        };
        if better {
            best = Some(Tuned {
                readout,
                lambda,
                val_accuracy: acc,
            });
        }
    }
    Ok(best.expect("grid is non-empty"))
}
