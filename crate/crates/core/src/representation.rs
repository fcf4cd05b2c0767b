//! Action representation: per-template GLAC vectors fused into GMHI / GSHI
//! segments and the final l2-normalised action vector, plus the PCA reducer.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::depth_io::SequenceMeta;
use crate::glac::{glac_descriptor, GlacConfig, GlacError};
use crate::mtm::{prepare_template, HistoryKind, MtmOutput, Plane, TemplateConfig};

/// Segment order of a fused action vector.
pub const LAYOUT: [(HistoryKind, Plane); 6] = [
    (HistoryKind::Mhi, Plane::XOy),
    (HistoryKind::Mhi, Plane::YOz),
    (HistoryKind::Mhi, Plane::XOz),
    (HistoryKind::Shi, Plane::XOy),
    (HistoryKind::Shi, Plane::YOz),
    (HistoryKind::Shi, Plane::XOz),
];

/// Which template families feed the classifier.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FeatureSet {
    /// GMHI + GSHI.
    #[default]
    Fused,
    /// GMHI only.
    Motion,
    /// GSHI only.
    Static,
}

impl FeatureSet {
    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::Fused => "fused",
            FeatureSet::Motion => "motion",
            FeatureSet::Static => "static",
        }
    }

    fn includes(self, kind: HistoryKind) -> bool {
        matches!(
            (self, kind),
            (FeatureSet::Fused, _)
                | (FeatureSet::Motion, HistoryKind::Mhi)
                | (FeatureSet::Static, HistoryKind::Shi)
        )
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fused" | "gmhi+gshi" => Ok(FeatureSet::Fused),
            "motion" | "gmhi" => Ok(FeatureSet::Motion),
            "static" | "gshi" => Ok(FeatureSet::Static),
            other => Err(format!("unknown feature set {other:?}")),
        }
    }
}

/// Raw (unnormalised) GLAC vectors of the six templates, in [`LAYOUT`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionDescriptor {
    pub segments: Vec<Vec<f64>>,
    pub meta: SequenceMeta,
}

impl ActionDescriptor {
    pub fn from_mtm(
        mtm: &MtmOutput,
        glac: &GlacConfig,
        template: &TemplateConfig,
        meta: SequenceMeta,
    ) -> Result<Self, GlacError> {
        let segments = LAYOUT
            .iter()
            .map(|&(kind, plane)| glac_descriptor(&prepare_template(mtm.get(plane, kind), template), glac))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { segments, meta })
    }

    /// Concatenates the selected segments and l2-normalises the result
    /// (zero vectors are left as is).
    pub fn action_vector(&self, features: FeatureSet) -> ActionVector {
        let mut values = Vec::new();
        let mut layout = Vec::new();
        for (seg, &(kind, plane)) in self.segments.iter().zip(LAYOUT.iter()) {
            if features.includes(kind) {
                values.extend_from_slice(seg);
                layout.push((kind, plane));
            }
        }
        l2_normalize(&mut values);
        ActionVector {
            values,
            layout,
            meta: self.meta,
        }
    }
}

/// A fused, l2-normalised action representation.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionVector {
    pub values: Vec<f64>,
    pub layout: Vec<(HistoryKind, Plane)>,
    pub meta: SequenceMeta,
}

/// GMHI + GSHI action vector of one sequence.
pub fn build_action_vector(
    mtm: &MtmOutput,
    glac: &GlacConfig,
    template: &TemplateConfig,
    meta: SequenceMeta,
) -> Result<ActionVector, GlacError> {
    Ok(ActionDescriptor::from_mtm(mtm, glac, template, meta)?.action_vector(FeatureSet::Fused))
}

pub fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PcaError {
    #[error("PCA needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("vector length {actual} does not match model dimension {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("training data has zero variance")]
    DegenerateData,
    #[error("retention must be in (0, 1], got {0}")]
    InvalidRetention(f64),
    #[error("malformed PCA model file: {0}")]
    BadFormat(String),
}

/// Mean and orthonormal principal directions, ordered by decreasing variance.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    /// `dim × k`, orthonormal columns.
    pub basis: DMatrix<f64>,
    /// Sample variance along each retained direction.
    pub variances: Vec<f64>,
    /// Fraction of total variance retained.
    pub explained_ratio: f64,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.basis.ncols()
    }

    /// `basisᵀ·(v − mean)`.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>, PcaError> {
        if v.len() != self.dim() {
            return Err(PcaError::LengthMismatch {
                expected: self.dim(),
                actual: v.len(),
            });
        }
        let centered = DVector::from_column_slice(v) - &self.mean;
        Ok(self.basis.tr_mul(&centered).as_slice().to_vec())
    }

    /// `mean + basis·coords`.
    pub fn reconstruct(&self, coords: &[f64]) -> Result<Vec<f64>, PcaError> {
        if coords.len() != self.k() {
            return Err(PcaError::LengthMismatch {
                expected: self.k(),
                actual: coords.len(),
            });
        }
        let v = &self.mean + &self.basis * DVector::from_column_slice(coords);
        Ok(v.as_slice().to_vec())
    }

    /// `PCAM` binary: magic, `dim` u64, `k` u64, mean (`dim` f64), basis
    /// column-major (`dim·k` f64), explained ratio f64, variances (`k` f64).
    /// Little-endian throughout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 8 * (self.dim() * (self.k() + 1) + self.k() + 1));
        out.extend_from_slice(b"PCAM");
        out.extend_from_slice(&(self.dim() as u64).to_le_bytes());
        out.extend_from_slice(&(self.k() as u64).to_le_bytes());
        let floats = self
            .mean
            .iter()
            .chain(self.basis.iter())
            .chain(std::iter::once(&self.explained_ratio))
            .chain(self.variances.iter());
        for v in floats {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PcaError> {
        if bytes.len() < 20 || &bytes[..4] != b"PCAM" {
            return Err(PcaError::BadFormat("missing PCAM header".into()));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap()) as usize;
        let (dim, k) = (word(4), word(12));
        let count = dim
            .checked_mul(k + 1)
            .and_then(|n| n.checked_add(k + 1))
            .ok_or_else(|| PcaError::BadFormat("dimensions overflow".into()))?;
        if bytes.len() != 20 + 8 * count {
            return Err(PcaError::BadFormat(format!(
                "expected {} bytes, got {}",
                20 + 8 * count,
                bytes.len()
            )));
        }
        let floats: Vec<f64> = bytes[20..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let (mean, rest) = floats.split_at(dim);
        let (basis, rest) = rest.split_at(dim * k);
        Ok(Self {
            mean: DVector::from_column_slice(mean),
            basis: DMatrix::from_column_slice(dim, k, basis),
            explained_ratio: rest[0],
            variances: rest[1..].to_vec(),
        })
    }
}

/// Fits PCA on row vectors, keeping the fewest components whose cumulative
/// variance reaches `retention`.
pub fn fit_pca(train: &[Vec<f64>], retention: f64) -> Result<PcaModel, PcaError> {
    if !(retention > 0.0 && retention <= 1.0) {
        return Err(PcaError::InvalidRetention(retention));
    }
    let n = train.len();
    if n < 2 {
        return Err(PcaError::TooFewSamples(n));
    }
    let dim = train[0].len();
    if let Some(bad) = train.iter().find(|v| v.len() != dim) {
        return Err(PcaError::LengthMismatch {
            expected: dim,
            actual: bad.len(),
        });
    }

    let mut mean = DVector::zeros(dim);
    for v in train {
        mean += DVector::from_column_slice(v);
    }
    mean /= n as f64;
    let centered = DMatrix::from_fn(n, dim, |i, j| train[i][j] - mean[j]);
    if centered.iter().all(|&x| x == 0.0) {
        return Err(PcaError::DegenerateData);
    }

    // eigenpairs of the scatter matrix, directions as dim-length columns
    let (mut eigvals, directions): (Vec<f64>, DMatrix<f64>) = if n <= dim {
        let gram = &centered * centered.transpose();
        let eig = SymmetricEigen::new(gram);
        let dirs = centered.transpose() * &eig.eigenvectors;
        (eig.eigenvalues.as_slice().to_vec(), dirs)
    } else {
        let scatter = centered.transpose() * &centered;
        let eig = SymmetricEigen::new(scatter);
        (eig.eigenvalues.as_slice().to_vec(), eig.eigenvectors)
    };
    eigvals.iter_mut().for_each(|l| *l = l.max(0.0));

    let mut order: Vec<usize> = (0..eigvals.len()).collect();
    order.sort_by(|&a, &b| eigvals[b].total_cmp(&eigvals[a]).then(a.cmp(&b)));

    let total: f64 = eigvals.iter().sum();
    if total <= 0.0 {
        return Err(PcaError::DegenerateData);
    }
    let floor = total * 1e-14;
    let target = retention * total * (1.0 - 1e-12);
    let mut cumulative = 0.0;
    let mut keep = Vec::new();
    for &i in &order {
        if eigvals[i] <= floor {
            break;
        }
        keep.push(i);
        cumulative += eigvals[i];
        if cumulative >= target {
            break;
        }
    }

    let mut basis = DMatrix::zeros(dim, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        basis.set_column(c, &directions.column(i));
    }
    orthonormalize_columns(&mut basis);

    let denom = (n - 1) as f64;
    Ok(PcaModel {
        mean,
        basis,
        variances: keep.iter().map(|&i| eigvals[i] / denom).collect(),
        explained_ratio: (cumulative / total).min(1.0),
    })
}

/// Two passes of modified Gram–Schmidt, in column order.
fn orthonormalize_columns(m: &mut DMatrix<f64>) {
    for _ in 0..2 {
        for j in 0..m.ncols() {
            for i in 0..j {
                let proj = m.column(i).dot(&m.column(j));
                let ci = m.column(i).clone_owned();
                m.column_mut(j).axpy(-proj, &ci, 1.0);
            }
            let norm = m.column(j).norm();
            if norm > 0.0 {
                m.column_mut(j).unscale_mut(norm);
            }
        }
    }
}
