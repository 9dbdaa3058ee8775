//! Linear discriminant analysis with a shrunk pooled covariance.
//!
//! `Σ = (1/n) Σᵢ (xᵢ − μ_{yᵢ})(xᵢ − μ_{yᵢ})ᵀ`, regularised to
//! `Σγ = (1−γ)Σ + γ (tr Σ / d) I`. Scores are `μ_cᵀΣγ⁻¹x − ½μ_cᵀΣγ⁻¹μ_c + log π_c`,
//! stored as per-class coefficient rows and intercepts.
//!
//! When `d ≤ n` the `d × d` matrix is factorised directly. Otherwise
//! `Σγ = αI + βXcᵀXc` (with `Xc` the centred rows) is inverted through the
//! `n × n` system `(α/β) I + Xc Xcᵀ` by the Woodbury identity.

use std::fmt;

use super::linalg::{argmax, axpy, cholesky, cholesky_solve, dot, gram};
use super::{ClassifierError, LabeledDataset, ModelKind, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdaParams {
    pub shrinkage: f64,
}

impl Default for LdaParams {
    fn default() -> Self {
        Self { shrinkage: 1e-3 }
    }
}

impl fmt::Display for LdaParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "lda shrinkage={}", self.shrinkage)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    pub dim: usize,
    pub means: Vec<f64>,
    /// Row `c` is `Σγ⁻¹ μ_c`.
    pub coefficients: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub log_priors: Vec<f64>,
    pub shrinkage: f64,
    /// `γ · tr Σ / d`, the ridge added to the diagonal.
    pub ridge: f64,
}

impl LdaModel {
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.intercepts
            .iter()
            .enumerate()
            .map(|(c, b)| dot(&self.coefficients[c * self.dim..(c + 1) * self.dim], x) + b)
            .collect()
    }

    pub fn predict_index(&self, x: &[f64]) -> usize {
        argmax(&self.scores(x))
    }
}

pub fn train_lda(ds: &LabeledDataset, params: &LdaParams) -> Result<TrainedModel, ClassifierError> {
    let gamma = params.shrinkage;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(ClassifierError::InvalidHyperparameter(format!(
            "lda shrinkage {gamma} outside [0, 1]"
        )));
    }
    let (n, d, classes) = (ds.len(), ds.dim(), ds.class_count());
    let counts = ds.class_counts();

    let mut means = vec![0.0; classes * d];
    for i in 0..n {
        let t = ds.targets()[i];
        axpy(1.0, ds.row(i), &mut means[t * d..(t + 1) * d]);
    }
    for (c, &count) in counts.iter().enumerate() {
        means[c * d..(c + 1) * d].iter_mut().for_each(|v| *v /= count as f64);
    }
    let mut centered = ds.data().to_vec();
    for i in 0..n {
        let t = ds.targets()[i];
        axpy(-1.0, &means[t * d..(t + 1) * d], &mut centered[i * d..(i + 1) * d]);
    }
    let inner = gram(&centered, n, d);
    let trace = (0..n).map(|i| inner[i * n + i]).sum::<f64>() / n as f64;
    // A dataset sitting exactly on its class means has no scale; fall back to unit ridge.
    let scale = if trace > 0.0 { trace / d as f64 } else { 1.0 };
    let alpha = gamma * scale;
    let beta = (1.0 - gamma) / n as f64;

    let mut coefficients = vec![0.0; classes * d];
    if d <= n {
        let mut sigma = vec![0.0; d * d];
        for i in 0..n {
            let row = &centered[i * d..(i + 1) * d];
            for (a, &ra) in row.iter().enumerate() {
                if ra != 0.0 {
                    axpy(beta * ra, row, &mut sigma[a * d..(a + 1) * d]);
                }
            }
        }
        for a in 0..d {
            sigma[a * d + a] += alpha;
        }
        let l = cholesky(&sigma, d).ok_or_else(|| {
            ClassifierError::FactorizationFailed(format!("{d}x{d} covariance is singular at shrinkage {gamma}"))
        })?;
        for c in 0..classes {
            let out = &mut coefficients[c * d..(c + 1) * d];
            out.copy_from_slice(&means[c * d..(c + 1) * d]);
            cholesky_solve(&l, d, out);
        }
    } else if alpha <= 0.0 {
        return Err(ClassifierError::FactorizationFailed(format!(
            "{n} samples cannot give a full-rank {d}x{d} covariance without shrinkage"
        )));
    } else if beta == 0.0 {
        for (out, m) in coefficients.iter_mut().zip(&means) {
            *out = m / alpha;
        }
    } else {
        let mut system = inner;
        for i in 0..n {
            system[i * n + i] += alpha / beta;
        }
        let l = cholesky(&system, n)
            .ok_or_else(|| ClassifierError::FactorizationFailed("Woodbury system is not positive definite".into()))?;
        for c in 0..classes {
            let mu = &means[c * d..(c + 1) * d];
            let mut z: Vec<f64> = (0..n).map(|i| dot(&centered[i * d..(i + 1) * d], mu)).collect();
            cholesky_solve(&l, n, &mut z);
            let out = &mut coefficients[c * d..(c + 1) * d];
            out.copy_from_slice(mu);
            for (i, &zi) in z.iter().enumerate() {
                axpy(-zi, &centered[i * d..(i + 1) * d], out);
            }
            out.iter_mut().for_each(|v| *v /= alpha);
        }
    }

    let log_priors: Vec<f64> = counts.iter().map(|&k| (k as f64 / n as f64).ln()).collect();
    let intercepts = (0..classes)
        .map(|c| {
            let mu = &means[c * d..(c + 1) * d];
            -0.5 * dot(mu, &coefficients[c * d..(c + 1) * d]) + log_priors[c]
        })
        .collect();
    let model = LdaModel {
        dim: d,
        means,
        coefficients,
        intercepts,
        log_priors,
        shrinkage: gamma,
        ridge: alpha,
    };
    Ok(TrainedModel::new(ds, params.to_string(), ModelKind::Lda(model)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SubjectId;

    fn lda(m: &TrainedModel) -> &LdaModel {
        match &m.kind {
            ModelKind::Lda(l) => l,
            _ => unreachable!(),
        }
    }

    /// Two classes centred on (−1, 0) and (1, 0) with within-class scatter equal to I.
    fn symmetric_pair() -> LabeledDataset {
        let offsets = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (cls, cx) in [(1, -1.0), (2, 1.0)] {
            for (dx, dy) in offsets {
                rows.push(vec![cx + dx * 2f64.sqrt(), dy * 2f64.sqrt()]);
                labels.push(SubjectId(cls));
            }
        }
        LabeledDataset::new(rows, labels).unwrap()
    }

    #[test]
    fn discriminant_direction_follows_x_axis() {
        let m = train_lda(&symmetric_pair(), &LdaParams::default()).unwrap();
        let l = lda(&m);
        let dir = [
            l.coefficients[2] - l.coefficients[0],
            l.coefficients[3] - l.coefficients[1],
        ];
        let cos = dir[0] / (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
        assert!(cos >= 0.999, "cosine {cos}");
    }

    #[test]
    fn midpoint_ties_to_smaller_class() {
        let m = train_lda(&symmetric_pair(), &LdaParams::default()).unwrap();
        let s = lda(&m).scores(&[0.0, 0.0]);
        assert!((s[0] - s[1]).abs() <= 1e-9);
        assert_eq!(m.predict(&[0.0, 0.0]).unwrap(), SubjectId(1));
        assert_eq!(m.predict(&[-1.0, 0.0]).unwrap(), SubjectId(1));
        assert_eq!(m.predict(&[1.0, 0.0]).unwrap(), SubjectId(2));
    }

    #[test]
    fn underdetermined_training_succeeds_with_shrinkage() {
        let (n, d) = (12, 200);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..d).map(|j| (((i * 31 + j * 17) % 23) as f64) / 23.0).collect())
            .collect();
        let labels = (0..n).map(|i| SubjectId(1 + (i % 4) as u32)).collect();
        let ds = LabeledDataset::new(rows, labels).unwrap();
        assert!(train_lda(&ds, &LdaParams::default()).is_ok());
        assert!(matches!(
            train_lda(&ds, &LdaParams { shrinkage: 0.0 }),
            Err(ClassifierError::FactorizationFailed(_))
        ));
    }

    #[test]
    fn singular_dense_covariance_without_shrinkage_fails() {
        // second feature is a copy of the first
        let rows = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![3.0, 3.0], vec![5.0, 5.0]];
        let labels = vec![SubjectId(1), SubjectId(1), SubjectId(2), SubjectId(2)];
        let ds = LabeledDataset::new(rows, labels).unwrap();
        assert!(matches!(
            train_lda(&ds, &LdaParams { shrinkage: 0.0 }),
            Err(ClassifierError::FactorizationFailed(_))
        ));
        assert!(train_lda(&ds, &LdaParams { shrinkage: 0.1 }).is_ok());
    }

    #[test]
    fn zero_scatter_still_factorizes() {
        let rows = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let labels = vec![SubjectId(1), SubjectId(1), SubjectId(2)];
        let ds = LabeledDataset::new(rows, labels).unwrap();
        let m = train_lda(&ds, &LdaParams::default()).unwrap();
        assert_eq!(m.predict(&[0.9, 0.1]).unwrap(), SubjectId(1));
    }
}
