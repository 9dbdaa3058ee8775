use std::cmp::Ordering;
use std::fmt;

use super::{ClassifierError, LabeledDataset, ModelKind, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Distance {
    Euclidean,
    /// `Σ (a−b)² / (a+b)` over coordinates where `a+b > 0`.
    ChiSquare,
}

impl Distance {
    pub fn name(self) -> &'static str {
        match self {
            Distance::Euclidean => "euclidean",
            Distance::ChiSquare => "chi-square",
        }
    }

    /// Monotone in the true distance; the Euclidean form omits the square root.
    #[inline]
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
            Distance::ChiSquare => a
                .iter()
                .zip(b)
                .filter(|(x, y)| *x + *y > 0.0)
                .map(|(x, y)| (x - y) * (x - y) / (x + y))
                .sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnParams {
    pub k: usize,
    pub distance: Distance,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self {
            k: 5,
            distance: Distance::Euclidean,
        }
    }
}

impl fmt::Display for KnnParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "knn k={} distance={}", self.k, self.distance.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub dim: usize,
    pub k: usize,
    pub distance: Distance,
    pub data: Vec<f64>,
    pub targets: Vec<usize>,
}

impl KnnModel {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Majority vote over the `k` nearest stored rows. Distance ties go to the
    /// earlier stored row; vote ties to the smallest class index.
    pub fn predict_index(&self, x: &[f64], classes: usize) -> usize {
        let mut ranked: Vec<(f64, usize)> = self
            .data
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(i, row)| (self.distance.eval(row, x), i))
            .collect();
        let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        let k = self.k.min(ranked.len());
        if k < ranked.len() {
            ranked.select_nth_unstable_by(k - 1, by_distance);
        }
        let mut votes = vec![0usize; classes];
        for &(_, i) in &ranked[..k] {
            votes[self.targets[i]] += 1;
        }
        let mut best = 0;
        for (c, &v) in votes.iter().enumerate() {
            if v.cmp(&votes[best]) == Ordering::Greater {
                best = c;
            }
        }
        best
    }
}

pub fn train_knn(ds: &LabeledDataset, params: &KnnParams) -> Result<TrainedModel, ClassifierError> {
    if params.k == 0 || params.k > ds.len() {
        return Err(ClassifierError::InvalidHyperparameter(format!(
            "knn k={} must be in 1..={}",
            params.k,
            ds.len()
        )));
    }
    let model = KnnModel {
        dim: ds.dim(),
        k: params.k,
        distance: params.distance,
        data: ds.data().to_vec(),
        targets: ds.targets().to_vec(),
    };
    Ok(TrainedModel::new(ds, params.to_string(), ModelKind::Knn(model)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SubjectId;

    fn ds(rows: Vec<Vec<f64>>, labels: &[u32]) -> LabeledDataset {
        LabeledDataset::new(rows, labels.iter().map(|&l| SubjectId(l)).collect()).unwrap()
    }

    #[test]
    fn exact_match_with_k1() {
        let d = ds(vec![vec![0.0, 0.0], vec![5.0, 5.0], vec![9.0, 1.0]], &[1, 2, 3]);
        let m = train_knn(
            &d,
            &KnnParams {
                k: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(m.predict(&[5.0, 5.0]).unwrap(), SubjectId(2));
        match &m.kind {
            ModelKind::Knn(k) => assert_eq!(k.len(), 3),
            _ => unreachable!(),
        }
    }

    #[test]
    fn majority_of_three() {
        let d = ds(
            vec![vec![0.0], vec![0.1], vec![0.2], vec![10.0], vec![10.1]],
            &[1, 1, 2, 2, 2],
        );
        let m = train_knn(
            &d,
            &KnnParams {
                k: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(m.predict(&[0.05]).unwrap(), SubjectId(1));
    }

    #[test]
    fn vote_tie_goes_to_smaller_class() {
        let d = ds(vec![vec![1.0], vec![-1.0], vec![5.0]], &[3, 2, 2]);
        let m = train_knn(
            &d,
            &KnnParams {
                k: 2,
                ..Default::default()
            },
        )
        .unwrap();
        // one vote each for classes 2 and 3
        assert_eq!(m.predict(&[0.0]).unwrap(), SubjectId(2));
    }

    #[test]
    fn distance_tie_prefers_earlier_row() {
        let d = ds(vec![vec![1.0], vec![-1.0]], &[2, 1]);
        let m = train_knn(
            &d,
            &KnnParams {
                k: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(m.predict(&[0.0]).unwrap(), SubjectId(2));
    }

    #[test]
    fn k_larger_than_dataset_is_rejected() {
        let d = ds(vec![vec![1.0], vec![2.0]], &[1, 2]);
        assert!(train_knn(
            &d,
            &KnnParams {
                k: 3,
                ..Default::default()
            }
        )
        .is_err());
        assert!(train_knn(
            &d,
            &KnnParams {
                k: 0,
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn chi_square_distance() {
        let a = [0.5, 0.5, 0.0];
        let b = [0.25, 0.75, 0.0];
        let expected = 0.0625 / 0.75 + 0.0625 / 1.25;
        assert!((Distance::ChiSquare.eval(&a, &b) - expected).abs() < 1e-15);
        let d = ds(vec![vec![0.5, 0.5], vec![0.9, 0.1]], &[1, 2]);
        let m = train_knn(
            &d,
            &KnnParams {
                k: 1,
                distance: Distance::ChiSquare,
            },
        )
        .unwrap();
        assert_eq!(m.predict(&[0.8, 0.2]).unwrap(), SubjectId(2));
    }

    #[test]
    fn training_is_deterministic() {
        let d = ds(vec![vec![1.0, 2.0], vec![3.0, 4.0]], &[1, 2]);
        let p = KnnParams {
            k: 1,
            ..Default::default()
        };
        assert_eq!(train_knn(&d, &p).unwrap(), train_knn(&d, &p).unwrap());
    }
}
