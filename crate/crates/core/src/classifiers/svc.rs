//! One-vs-rest linear SVM, L2-regularised hinge loss.
//!
//! Each binary problem minimises `λ/2 ‖w̃‖² + (1/n) Σ max(0, 1 − yᵢ w̃·x̃ᵢ)` with
//! `x̃ = (x, 1)` (the bias is regularised like any other weight) and
//! `λ = 1/(n·C)`. Optimisation is full-batch projected subgradient descent with
//! step `1/(λt)`, keeping the best iterate seen.
//!
//! The iterate always lies in the span of the training rows, so it is tracked as
//! `w̃ = Σ aᵢ x̃ᵢ` over the `n × n` Gram matrix rather than in feature space.

use std::collections::HashMap;
use std::fmt;

use super::linalg::{argmax, axpy, dot, gram};
use super::{ClassifierError, LabeledDataset, ModelKind, TrainedModel};

/// Best-so-far objective is recorded every this many iterations and at the end.
pub const CHECKPOINT_INTERVAL: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvcParams {
    pub c: f64,
    pub iters: usize,
}

impl Default for SvcParams {
    fn default() -> Self {
        Self { c: 1.0, iters: 2000 }
    }
}

impl fmt::Display for SvcParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "svc c={} iters={}", self.c, self.iters)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvcModel {
    pub dim: usize,
    /// Row `c` holds the weights of class `c` against the rest.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    /// Identical feature vectors carry different labels.
    pub non_separable: bool,
    /// Per class, best objective so far at each checkpoint.
    pub checkpoints: Vec<Vec<f64>>,
}

impl SvcModel {
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.biases
            .iter()
            .enumerate()
            .map(|(c, b)| dot(&self.weights[c * self.dim..(c + 1) * self.dim], x) + b)
            .collect()
    }

    pub fn predict_index(&self, x: &[f64]) -> usize {
        argmax(&self.scores(x))
    }
}

/// Primal objective `(λ/2 ‖(w, b)‖² + mean hinge, mean hinge)` for one class versus the rest.
pub fn hinge_objective(ds: &LabeledDataset, class: usize, weights: &[f64], bias: f64, lambda: f64) -> (f64, f64) {
    let hinge = (0..ds.len())
        .map(|i| {
            let y = if ds.targets()[i] == class { 1.0 } else { -1.0 };
            (1.0 - y * (dot(weights, ds.row(i)) + bias)).max(0.0)
        })
        .sum::<f64>()
        / ds.len() as f64;
    let norm2 = dot(weights, weights) + bias * bias;
    (0.5 * lambda * norm2 + hinge, hinge)
}

fn has_conflicting_duplicates(ds: &LabeledDataset) -> bool {
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    (0..ds.len()).any(|i| {
        let key: Vec<u64> = ds.row(i).iter().map(|v| v.to_bits()).collect();
        let t = ds.targets()[i];
        *seen.entry(key).or_insert(t) != t
    })
}

struct BinaryRun {
    coefficients: Vec<f64>,
    checkpoints: Vec<f64>,
}

fn subgradient_in_span(kernel: &[f64], y: &[f64], lambda: f64, iters: usize) -> BinaryRun {
    let n = y.len();
    let inv_n = 1.0 / n as f64;
    let radius2 = 1.0 / lambda;
    let mut a = vec![0.0; n];
    // s = K̃ a, kept in step with a
    let mut s = vec![0.0; n];
    let mut best_obj = f64::INFINITY;
    let mut best_a = a.clone();
    let mut checkpoints = Vec::with_capacity(iters / CHECKPOINT_INTERVAL + 1);
    let mut violators = Vec::with_capacity(n);

    let objective = |a: &[f64], s: &[f64]| {
        let hinge: f64 = y.iter().zip(s).map(|(yi, si)| (1.0 - yi * si).max(0.0)).sum();
        0.5 * lambda * dot(a, s) + hinge * inv_n
    };

    for t in 1..=iters {
        let obj = objective(&a, &s);
        if obj < best_obj {
            best_obj = obj;
            best_a.copy_from_slice(&a);
        }
        if t % CHECKPOINT_INTERVAL == 0 {
            checkpoints.push(best_obj);
        }

        violators.clear();
        violators.extend((0..n).filter(|&i| y[i] * s[i] < 1.0));
        let eta = 1.0 / (lambda * t as f64);
        let shrink = 1.0 - 1.0 / t as f64;
        a.iter_mut().for_each(|v| *v *= shrink);
        s.iter_mut().for_each(|v| *v *= shrink);
        for &i in &violators {
            let step = eta * y[i] * inv_n;
            a[i] += step;
            axpy(step, &kernel[i * n..(i + 1) * n], &mut s);
        }

        let norm2 = dot(&a, &s);
        if norm2 > radius2 {
            let f = (radius2 / norm2).sqrt();
            a.iter_mut().for_each(|v| *v *= f);
            s.iter_mut().for_each(|v| *v *= f);
        }
    }
    let obj = objective(&a, &s);
    if obj < best_obj {
        best_obj = obj;
        best_a.copy_from_slice(&a);
    }
    checkpoints.push(best_obj);
    BinaryRun {
        coefficients: best_a,
        checkpoints,
    }
}

pub fn train_svc(ds: &LabeledDataset, params: &SvcParams) -> Result<TrainedModel, ClassifierError> {
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(ClassifierError::InvalidHyperparameter(format!(
            "svc cost {} must be positive",
            params.c
        )));
    }
    if params.iters == 0 {
        return Err(ClassifierError::InvalidHyperparameter(
            "svc iterations must be positive".into(),
        ));
    }
    let (n, d) = (ds.len(), ds.dim());
    let mut kernel = gram(ds.data(), n, d);
    kernel.iter_mut().for_each(|v| *v += 1.0);
    let lambda = 1.0 / (n as f64 * params.c);

    let classes = ds.class_count();
    let mut weights = vec![0.0; classes * d];
    let mut biases = vec![0.0; classes];
    let mut checkpoints = Vec::with_capacity(classes);
    for c in 0..classes {
        let y: Vec<f64> = ds.targets().iter().map(|&t| if t == c { 1.0 } else { -1.0 }).collect();
        let run = subgradient_in_span(&kernel, &y, lambda, params.iters);
        let w = &mut weights[c * d..(c + 1) * d];
        for (i, &ai) in run.coefficients.iter().enumerate() {
            if ai != 0.0 {
                axpy(ai, ds.row(i), w);
            }
        }
        biases[c] = run.coefficients.iter().sum();
        checkpoints.push(run.checkpoints);
    }

    let model = SvcModel {
        dim: d,
        weights,
        biases,
        non_separable: has_conflicting_duplicates(ds),
        checkpoints,
    };
    Ok(TrainedModel::new(ds, params.to_string(), ModelKind::Svc(model)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SubjectId;

    fn svc(model: &TrainedModel) -> &SvcModel {
        match &model.kind {
            ModelKind::Svc(m) => m,
            _ => unreachable!(),
        }
    }

    #[test]
    fn two_point_problem() {
        let ds = LabeledDataset::new(vec![vec![0.0, 0.0], vec![4.0, 4.0]], vec![SubjectId(1), SubjectId(2)]).unwrap();
        let m = train_svc(&ds, &SvcParams::default()).unwrap();
        assert_eq!(m.predict(&[0.1, 0.1]).unwrap(), SubjectId(1));
        assert_eq!(m.predict(&[3.9, 3.9]).unwrap(), SubjectId(2));
        assert!(!svc(&m).non_separable);
    }

    #[test]
    fn widely_separated_classes_have_zero_hinge() {
        let rows = vec![vec![-10.0, -10.0], vec![-9.0, -11.0], vec![10.0, 10.0], vec![11.0, 9.0]];
        let labels = vec![SubjectId(1), SubjectId(1), SubjectId(2), SubjectId(2)];
        let ds = LabeledDataset::new(rows, labels).unwrap();
        let p = SvcParams::default();
        let m = train_svc(&ds, &p).unwrap();
        let sm = svc(&m);
        let lambda = 1.0 / (4.0 * p.c);
        for c in 0..2 {
            let (_, hinge) = hinge_objective(&ds, c, &sm.weights[c * 2..c * 2 + 2], sm.biases[c], lambda);
            assert!(hinge <= 1e-6, "class {c} hinge {hinge}");
        }
    }

    #[test]
    fn checkpoints_never_increase() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![((i * 7) % 11) as f64 / 5.0, ((i * 3) % 13) as f64 / 6.0, (i % 3) as f64])
            .collect();
        let labels = (0..30).map(|i| SubjectId(1 + (i % 3) as u32)).collect();
        let ds = LabeledDataset::new(rows, labels).unwrap();
        let m = train_svc(&ds, &SvcParams { c: 1.0, iters: 700 }).unwrap();
        for trace in &svc(&m).checkpoints {
            assert_eq!(trace.len(), 8);
            for pair in trace.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-6);
            }
        }
    }

    #[test]
    fn conflicting_duplicates_are_flagged() {
        let ds = LabeledDataset::new(vec![vec![1.0, 1.0], vec![1.0, 1.0]], vec![SubjectId(1), SubjectId(2)]).unwrap();
        let m = train_svc(&ds, &SvcParams::default()).unwrap();
        assert!(svc(&m).non_separable);
        // identical scores: the smaller class id wins
        assert_eq!(m.predict(&[1.0, 1.0]).unwrap(), SubjectId(1));
    }

    #[test]
    fn tie_goes_to_smaller_class() {
        let m = SvcModel {
            dim: 2,
            weights: vec![1.0, 2.0, 1.0, 2.0],
            biases: vec![0.5, 0.5],
            non_separable: false,
            checkpoints: vec![],
        };
        assert_eq!(m.predict_index(&[3.0, -1.0]), 0);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let ds = LabeledDataset::new(vec![vec![0.0], vec![1.0]], vec![SubjectId(1), SubjectId(2)]).unwrap();
        assert!(train_svc(&ds, &SvcParams { c: 0.0, iters: 10 }).is_err());
        assert!(train_svc(&ds, &SvcParams { c: 1.0, iters: 0 }).is_err());
    }
}
