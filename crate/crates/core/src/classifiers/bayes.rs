use std::f64::consts::PI;
use std::fmt;

use super::linalg::{argmax, axpy};
use super::{ClassifierError, LabeledDataset, ModelKind, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NbParams {
    pub var_smoothing: f64,
}

impl Default for NbParams {
    fn default() -> Self {
        Self { var_smoothing: 1e-9 }
    }
}

impl fmt::Display for NbParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "nb var_smoothing={}", self.var_smoothing)
    }
}

/// Gaussian naive Bayes.
#[derive(Debug, Clone, PartialEq)]
pub struct NbModel {
    pub dim: usize,
    pub means: Vec<f64>,
    /// Population variances, floored at `var_floor`.
    pub variances: Vec<f64>,
    pub log_priors: Vec<f64>,
    pub var_floor: f64,
}

impl NbModel {
    /// Log prior plus the sum of per-feature Gaussian log densities.
    pub fn log_joint(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        self.log_priors
            .iter()
            .enumerate()
            .map(|(c, prior)| {
                let mu = &self.means[c * d..(c + 1) * d];
                let var = &self.variances[c * d..(c + 1) * d];
                let mut total = *prior;
                for j in 0..d {
                    let diff = x[j] - mu[j];
                    total -= 0.5 * (2.0 * PI * var[j]).ln() + diff * diff / (2.0 * var[j]);
                }
                total
            })
            .collect()
    }

    pub fn predict_index(&self, x: &[f64]) -> usize {
        argmax(&self.log_joint(x))
    }
}

pub fn train_nb(ds: &LabeledDataset, params: &NbParams) -> Result<TrainedModel, ClassifierError> {
    if !(params.var_smoothing > 0.0 && params.var_smoothing.is_finite()) {
        return Err(ClassifierError::InvalidHyperparameter(format!(
            "nb var_smoothing {} must be positive",
            params.var_smoothing
        )));
    }
    let (n, d, classes) = (ds.len(), ds.dim(), ds.class_count());
    let counts = ds.class_counts();

    let mut means = vec![0.0; classes * d];
    let mut overall = vec![0.0; d];
    for i in 0..n {
        let t = ds.targets()[i];
        axpy(1.0, ds.row(i), &mut means[t * d..(t + 1) * d]);
        axpy(1.0, ds.row(i), &mut overall);
    }
    for c in 0..classes {
        means[c * d..(c + 1) * d]
            .iter_mut()
            .for_each(|v| *v /= counts[c] as f64);
    }
    overall.iter_mut().for_each(|v| *v /= n as f64);

    let mut variances = vec![0.0; classes * d];
    let mut overall_var = vec![0.0; d];
    for i in 0..n {
        let t = ds.targets()[i];
        let row = ds.row(i);
        for j in 0..d {
            let dc = row[j] - means[t * d + j];
            variances[t * d + j] += dc * dc;
            let dg = row[j] - overall[j];
            overall_var[j] += dg * dg;
        }
    }
    let max_var = overall_var.iter().fold(0.0f64, |m, v| m.max(v / n as f64));
    // all-constant data has no variance scale to smooth against
    let var_floor = if max_var > 0.0 {
        params.var_smoothing * max_var
    } else {
        params.var_smoothing
    };
    for c in 0..classes {
        for v in &mut variances[c * d..(c + 1) * d] {
            *v = (*v / counts[c] as f64).max(var_floor);
        }
    }

    let model = NbModel {
        dim: d,
        means,
        variances,
        log_priors: counts.iter().map(|&k| (k as f64 / n as f64).ln()).collect(),
        var_floor,
    };
    Ok(TrainedModel::new(ds, params.to_string(), ModelKind::Nb(model)))
}
