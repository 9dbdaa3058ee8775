//! Binary model files.
//!
//! Layout: `MFRB`, format version (u32), model tag (u8), then the shared header
//! (dimension, class ids, feature fingerprint, hyperparameter string) and the
//! kind-specific payload. Integers are little-endian u32/u64, reals little-endian
//! f64, sequences are length-prefixed with a u64.

use thiserror::Error;

use super::knn::Distance;
use super::{KnnModel, LdaModel, LrModel, ModelKind, ModelType, NbModel, SvcModel, TrainedModel, TreeModel, TreeNode};
use crate::dataset::SubjectId;

pub const MAGIC: &[u8; 4] = b"MFRB";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("not a model file: bad magic")]
    BadMagic,
    #[error("unsupported model format version {0} (expected {FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("model file truncated at byte {offset}")]
    Truncated { offset: usize },
    #[error("unknown model tag {0}")]
    UnknownTag(u8),
    #[error("malformed model: {0}")]
    Invalid(String),
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn reals(&mut self, v: &[f64]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }
    fn indices(&mut self, v: &[usize]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.usize(x));
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(CodecError::Truncated {
            offset: self.bytes.len(),
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize, CodecError> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| CodecError::Invalid(format!("count {v} does not fit in memory")))
    }
    fn f64(&mut self) -> Result<f64, CodecError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    /// Reads a length prefix and checks that `len * width` bytes remain.
    fn len(&mut self, width: usize) -> Result<usize, CodecError> {
        let len = self.usize()?;
        let remaining = self.bytes.len() - self.pos;
        if len.checked_mul(width).is_none_or(|b| b > remaining) {
            return Err(CodecError::Truncated {
                offset: self.bytes.len(),
            });
        }
        Ok(len)
    }
    fn reals(&mut self) -> Result<Vec<f64>, CodecError> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn indices(&mut self) -> Result<Vec<usize>, CodecError> {
        let n = self.len(8)?;
        (0..n).map(|_| self.usize()).collect()
    }
}

pub fn serialize_model(model: &TrainedModel) -> Vec<u8> {
    let mut w = Writer(MAGIC.to_vec());
    w.u32(FORMAT_VERSION);
    w.u8(model.model_type().tag());
    w.usize(model.dim);
    w.usize(model.classes.len());
    model.classes.iter().for_each(|c| w.u32(c.0));
    w.u64(model.feature_fingerprint);
    w.usize(model.hyperparameters.len());
    w.0.extend_from_slice(model.hyperparameters.as_bytes());

    match &model.kind {
        ModelKind::Svc(m) => {
            w.reals(&m.weights);
            w.reals(&m.biases);
            w.u8(m.non_separable as u8);
            w.usize(m.checkpoints.len());
            m.checkpoints.iter().for_each(|c| w.reals(c));
        }
        ModelKind::Lda(m) => {
            w.reals(&m.means);
            w.reals(&m.coefficients);
            w.reals(&m.intercepts);
            w.reals(&m.log_priors);
            w.f64(m.shrinkage);
            w.f64(m.ridge);
        }
        ModelKind::Knn(m) => {
            w.usize(m.k);
            w.u8(match m.distance {
                Distance::Euclidean => 0,
                Distance::ChiSquare => 1,
            });
            w.reals(&m.data);
            w.indices(&m.targets);
        }
        ModelKind::Dt(m) => {
            w.usize(m.nodes.len());
            for node in &m.nodes {
                match *node {
                    TreeNode::Leaf { class } => {
                        w.u8(0);
                        w.usize(class);
                    }
                    TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        w.u8(1);
                        w.usize(feature);
                        w.f64(threshold);
                        w.usize(left);
                        w.usize(right);
                    }
                }
            }
        }
        ModelKind::Lr(m) => {
            w.reals(&m.weights);
            w.reals(&m.biases);
            w.f64(m.final_loss);
            w.f64(m.gradient_norm);
            w.usize(m.iterations);
            w.reals(&m.loss_trace);
        }
        ModelKind::Nb(m) => {
            w.reals(&m.means);
            w.reals(&m.variances);
            w.reals(&m.log_priors);
            w.f64(m.var_floor);
        }
    }
    w.0
}

fn expect_len(what: &str, found: usize, expected: usize) -> Result<(), CodecError> {
    if found == expected {
        Ok(())
    } else {
        Err(CodecError::Invalid(format!(
            "{what} has {found} values, expected {expected}"
        )))
    }
}

pub fn deserialize_model(bytes: &[u8]) -> Result<TrainedModel, CodecError> {
    let mut r = Reader { bytes, pos: 0 };
    if bytes.len() < MAGIC.len() {
        return if MAGIC.starts_with(bytes) {
            Err(CodecError::Truncated { offset: bytes.len() })
        } else {
            Err(CodecError::BadMagic)
        };
    }
    if r.take(4)? != MAGIC {
        return Err(CodecError::BadMagic);
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CodecError::UnsupportedVersion(version));
    }
    let tag = r.u8()?;
    let model_type = ModelType::from_tag(tag).ok_or(CodecError::UnknownTag(tag))?;
    let dim = r.usize()?;
    let n_classes = r.len(4)?;
    let classes: Vec<SubjectId> = (0..n_classes)
        .map(|_| r.u32().map(SubjectId))
        .collect::<Result<_, _>>()?;
    if dim == 0 || classes.is_empty() || classes.windows(2).any(|p| p[0] >= p[1]) {
        return Err(CodecError::Invalid("empty dimension or unsorted class list".into()));
    }
    let feature_fingerprint = r.u64()?;
    let hyper_len = r.len(1)?;
    let hyperparameters = String::from_utf8(r.take(hyper_len)?.to_vec())
        .map_err(|_| CodecError::Invalid("hyperparameter string is not UTF-8".into()))?;
    let c = classes.len();
    let class_dim = c
        .checked_mul(dim)
        .ok_or_else(|| CodecError::Invalid("dimension overflow".into()))?;

    let kind = match model_type {
        ModelType::Svc => {
            let weights = r.reals()?;
            let biases = r.reals()?;
            expect_len("svc weights", weights.len(), class_dim)?;
            expect_len("svc biases", biases.len(), c)?;
            let non_separable = r.u8()? != 0;
            let n = r.len(8)?;
            let checkpoints = (0..n).map(|_| r.reals()).collect::<Result<_, _>>()?;
            ModelKind::Svc(SvcModel {
                dim,
                weights,
                biases,
                non_separable,
                checkpoints,
            })
        }
        ModelType::Lda => {
            let m = LdaModel {
                dim,
                means: r.reals()?,
                coefficients: r.reals()?,
                intercepts: r.reals()?,
                log_priors: r.reals()?,
                shrinkage: r.f64()?,
                ridge: r.f64()?,
            };
            expect_len("lda means", m.means.len(), class_dim)?;
            expect_len("lda coefficients", m.coefficients.len(), class_dim)?;
            expect_len("lda intercepts", m.intercepts.len(), c)?;
            expect_len("lda priors", m.log_priors.len(), c)?;
            ModelKind::Lda(m)
        }
        ModelType::Knn => {
            let k = r.usize()?;
            let distance = match r.u8()? {
                0 => Distance::Euclidean,
                1 => Distance::ChiSquare,
                other => return Err(CodecError::Invalid(format!("unknown distance code {other}"))),
            };
            let data = r.reals()?;
            let targets = r.indices()?;
            expect_len("knn data", data.len(), targets.len() * dim)?;
            if k == 0 || k > targets.len() || targets.iter().any(|&t| t >= c) {
                return Err(CodecError::Invalid(
                    "knn neighbour count or targets out of range".into(),
                ));
            }
            ModelKind::Knn(KnnModel {
                dim,
                k,
                distance,
                data,
                targets,
            })
        }
        ModelType::Dt => {
            let n = r.len(9)?;
            let mut nodes = Vec::with_capacity(n);
            for i in 0..n {
                let node = match r.u8()? {
                    0 => TreeNode::Leaf { class: r.usize()? },
                    1 => TreeNode::Split {
                        feature: r.usize()?,
                        threshold: r.f64()?,
                        left: r.usize()?,
                        right: r.usize()?,
                    },
                    other => return Err(CodecError::Invalid(format!("unknown tree node code {other}"))),
                };
                // children always follow their parent, which rules out cycles
                let ok = match node {
                    TreeNode::Leaf { class } => class < c,
                    TreeNode::Split {
                        feature, left, right, ..
                    } => feature < dim && left > i && right > i && left < n && right < n,
                };
                if !ok {
                    return Err(CodecError::Invalid(format!("tree node {i} out of range")));
                }
                nodes.push(node);
            }
            if nodes.is_empty() {
                return Err(CodecError::Invalid("empty tree".into()));
            }
            ModelKind::Dt(TreeModel { nodes })
        }
        ModelType::Lr => {
            let m = LrModel {
                dim,
                weights: r.reals()?,
                biases: r.reals()?,
                final_loss: r.f64()?,
                gradient_norm: r.f64()?,
                iterations: r.usize()?,
                loss_trace: r.reals()?,
            };
            expect_len("lr weights", m.weights.len(), class_dim)?;
            expect_len("lr biases", m.biases.len(), c)?;
            ModelKind::Lr(m)
        }
        ModelType::Nb => {
            let m = NbModel {
                dim,
                means: r.reals()?,
                variances: r.reals()?,
                log_priors: r.reals()?,
                var_floor: r.f64()?,
            };
            expect_len("nb means", m.means.len(), class_dim)?;
            expect_len("nb variances", m.variances.len(), class_dim)?;
            expect_len("nb priors", m.log_priors.len(), c)?;
            ModelKind::Nb(m)
        }
    };
    if r.pos != bytes.len() {
        return Err(CodecError::Invalid(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(TrainedModel {
        classes,
        dim,
        feature_fingerprint,
        hyperparameters,
        kind,
    })
}
