//! l2-regularised collaborative representation classifier.
//!
//! A query `s` is coded over the whole training dictionary `P` by
//!
//! ```text
//! β̂ = argmin_β ‖s − Pβ‖² + μ‖Aβ‖²,   A = diag(‖s − p_i‖)
//! ```
//!
//! i.e. `(PᵀP + μAᵀA)β̂ = Pᵀs`, and assigned to the class `j` with the smallest
//! residual `‖s − P_j β̂_j‖` over its own columns.

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

use crate::parallel::{self, Execution};

/// Ridge added to the system diagonal when the Cholesky factorisation fails.
pub const FALLBACK_RIDGE: f64 = 1e-10;

/// Relative gap below which two class residuals are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum CrcError {
    #[error("vector length {actual} does not match dictionary rows {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("{columns} dictionary columns but {labels} labels")]
    LabelCountMismatch { columns: usize, labels: usize },
    #[error("class ids must cover 1..={classes}; class {missing} has no column")]
    MissingClass { classes: usize, missing: usize },
    #[error("class id 0 is reserved; labels start at 1")]
    ZeroLabel,
    #[error("empty dictionary")]
    EmptyDictionary,
    #[error("mu must be > 0, got {0}")]
    InvalidMu(f64),
    #[error("normal equations are singular even after ridge fallback")]
    SingularSystem,
}

/// Training dictionary: columns are training vectors, labels are 1-based class ids.
#[derive(Clone, Debug)]
pub struct CrcModel {
    dictionary: DMatrix<f64>,
    labels: Vec<usize>,
    classes: usize,
    mu: f64,
    gram: DMatrix<f64>,
}

impl CrcModel {
    pub fn new(dictionary: DMatrix<f64>, labels: Vec<usize>, mu: f64) -> Result<Self, CrcError> {
        if dictionary.ncols() == 0 || dictionary.nrows() == 0 {
            return Err(CrcError::EmptyDictionary);
        }
        if labels.len() != dictionary.ncols() {
            return Err(CrcError::LabelCountMismatch {
                columns: dictionary.ncols(),
                labels: labels.len(),
            });
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(CrcError::InvalidMu(mu));
        }
        if labels.contains(&0) {
            return Err(CrcError::ZeroLabel);
        }
        let classes = *labels.iter().max().expect("nonempty");
        let mut seen = vec![false; classes + 1];
        labels.iter().for_each(|&l| seen[l] = true);
        if let Some(missing) = (1..=classes).find(|&c| !seen[c]) {
            return Err(CrcError::MissingClass { classes, missing });
        }
        let gram = dictionary.tr_mul(&dictionary);
        Ok(Self {
            dictionary,
            labels,
            classes,
            mu,
            gram,
        })
    }

    /// Builds a model from row vectors (one per training sample).
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>, mu: f64) -> Result<Self, CrcError> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(CrcError::LengthMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        let dictionary = DMatrix::from_fn(dim, rows.len(), |i, j| rows[j][i]);
        Self::new(dictionary, labels, mu)
    }

    pub fn dictionary(&self) -> &DMatrix<f64> {
        &self.dictionary
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn feature_len(&self) -> usize {
        self.dictionary.nrows()
    }

    fn check_query(&self, s: &DVector<f64>) -> Result<(), CrcError> {
        if s.len() != self.feature_len() {
            return Err(CrcError::LengthMismatch {
                expected: self.feature_len(),
                actual: s.len(),
            });
        }
        Ok(())
    }
}

/// Diagonal of the distance-weighted Tikhonov matrix: `A_ii = ‖s − p_i‖₂`.
pub fn build_tikhonov(s: &DVector<f64>, model: &CrcModel) -> Result<DVector<f64>, CrcError> {
    model.check_query(s)?;
    Ok(DVector::from_iterator(
        model.dictionary.ncols(),
        model.dictionary.column_iter().map(|p| (s - p).norm()),
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Coefficients {
    pub beta: DVector<f64>,
    /// True when [`FALLBACK_RIDGE`] had to be added to the diagonal.
    pub ridge_fallback: bool,
}

/// The system matrix `PᵀP + μ·diag(A²)`.
pub fn system_matrix(model: &CrcModel, tikhonov: &DVector<f64>) -> DMatrix<f64> {
    let mut m = model.gram.clone();
    for (i, a) in tikhonov.iter().enumerate() {
        m[(i, i)] += model.mu * a * a;
    }
    m
}

/// Solves `(PᵀP + μAᵀA)β = Pᵀs` by Cholesky factorisation.
pub fn solve_coefficients(
    model: &CrcModel,
    s: &DVector<f64>,
    tikhonov: &DVector<f64>,
) -> Result<Coefficients, CrcError> {
    model.check_query(s)?;
    if tikhonov.len() != model.dictionary.ncols() {
        return Err(CrcError::LengthMismatch {
            expected: model.dictionary.ncols(),
            actual: tikhonov.len(),
        });
    }
    let rhs = model.dictionary.tr_mul(s);
    let mut system = system_matrix(model, tikhonov);
    if let Some(chol) = Cholesky::new(system.clone()) {
        return Ok(Coefficients {
            beta: chol.solve(&rhs),
            ridge_fallback: false,
        });
    }
    for i in 0..system.nrows() {
        system[(i, i)] += FALLBACK_RIDGE;
    }
    let chol = Cholesky::new(system).ok_or(CrcError::SingularSystem)?;
    Ok(Coefficients {
        beta: chol.solve(&rhs),
        ridge_fallback: true,
    })
}

/// `‖Mβ − Pᵀs‖ / ‖Pᵀs‖` for the system of `s`.
pub fn normal_equation_residual(
    model: &CrcModel,
    s: &DVector<f64>,
    tikhonov: &DVector<f64>,
    beta: &DVector<f64>,
) -> f64 {
    let rhs = model.dictionary.tr_mul(s);
    let r = system_matrix(model, tikhonov) * beta - &rhs;
    let scale = rhs.norm();
    if scale > 0.0 {
        r.norm() / scale
    } else {
        r.norm()
    }
}

/// `‖s − Pβ‖² + μ‖Aβ‖²`.
pub fn objective(model: &CrcModel, s: &DVector<f64>, tikhonov: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let fit = (s - &model.dictionary * beta).norm_squared();
    let reg: f64 = tikhonov
        .iter()
        .zip(beta.iter())
        .map(|(a, b)| (a * b) * (a * b))
        .sum();
    fit + model.mu * reg
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrcDecision {
    /// 1-based class id.
    pub predicted_class: usize,
    /// `residuals[j - 1] = q_j`.
    pub residuals: Vec<f64>,
    pub coefficients: Coefficients,
}

/// Per-class residuals `q_j = ‖s − P_j β̂_j‖₂`.
pub fn class_residuals(model: &CrcModel, s: &DVector<f64>, beta: &DVector<f64>) -> Vec<f64> {
    let mut recon = vec![DVector::<f64>::zeros(model.feature_len()); model.classes];
    for (i, (&label, p)) in model.labels.iter().zip(model.dictionary.column_iter()).enumerate() {
        recon[label - 1].axpy(beta[i], &p, 1.0);
    }
    recon.into_iter().map(|r| (s - r).norm()).collect()
}

/// Index (1-based) of the smallest residual; near-ties go to the smaller id.
pub fn argmin_class(residuals: &[f64]) -> usize {
    let scale = residuals.iter().cloned().fold(0.0f64, f64::max);
    let tol = TIE_TOLERANCE * scale;
    let mut best = 0;
    for (j, &q) in residuals.iter().enumerate().skip(1) {
        if q < residuals[best] - tol {
            best = j;
        }
    }
    best + 1
}

pub fn classify(model: &CrcModel, s: &DVector<f64>) -> Result<CrcDecision, CrcError> {
    let tikhonov = build_tikhonov(s, model)?;
    let coefficients = solve_coefficients(model, s, &tikhonov)?;
    let residuals = class_residuals(model, s, &coefficients.beta);
    Ok(CrcDecision {
        predicted_class: argmin_class(&residuals),
        residuals,
        coefficients,
    })
}

/// Classifies many queries; output order follows `queries`.
pub fn classify_batch(
    model: &CrcModel,
    queries: &[Vec<f64>],
    exec: Execution,
) -> Result<Vec<CrcDecision>, CrcError> {
    parallel::try_map(exec, queries, |q| {
        classify(model, &DVector::from_column_slice(q))
    })
}
