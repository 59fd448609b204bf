//! Vector and operator norms used across the laboratory.
//!
//! The Euclidean norm is the default everywhere; the 1- and ∞-norms are
//! selectable where a contract is norm-dependent (grid Hausdorff distances,
//! restricted operator norms).  Operator norms are the induced ones: the
//! spectral norm is the largest singular value, the 1-norm the maximum
//! absolute column sum, the ∞-norm the maximum absolute row sum.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Selectable vector norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VectorNorm {
    #[default]
    Euclidean,
    One,
    Inf,
}

/// Selectable induced operator norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MatrixNorm {
    #[default]
    Spectral,
    One,
    Inf,
}

/// Norm of `v` in the selected sense.
pub fn vector_norm(v: &DVector<f64>, norm: VectorNorm) -> f64 {
    match norm {
        VectorNorm::Euclidean => v.norm(),
        VectorNorm::One => v.iter().map(|x| x.abs()).sum(),
        VectorNorm::Inf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
    }
}

/// Induced operator norm of `m` in the selected sense.
pub fn operator_norm(m: &DMatrix<f64>, norm: MatrixNorm) -> f64 {
    match norm {
        MatrixNorm::Spectral => spectral_norm(m),
        MatrixNorm::One => (0..m.ncols())
            .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max),
        MatrixNorm::Inf => (0..m.nrows())
            .map(|i| m.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max),
    }
}

/// Largest singular value of `m` (spectral norm). Zero-sized matrices have norm 0.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().max()
}

/// Smallest gain `min_{‖v‖=1} ‖Mv‖` of a square matrix, i.e. its smallest
/// singular value.
///
/// For invertible `M` this is computed as `1 / ‖M⁻¹‖₂`, which keeps the
/// *relative* accuracy of the small singular value even when the condition
/// number is large (a direct SVD only bounds its absolute error by
/// `eps · σ_max`).  Singular matrices fall back to the SVD.
pub fn min_gain(m: &DMatrix<f64>) -> f64 {
    assert_eq!(m.nrows(), m.ncols(), "min_gain expects a square matrix");
    if m.nrows() == 0 {
        return 0.0;
    }
    match m.clone().try_inverse() {
        Some(inv) => {
            let g = spectral_norm(&inv);
            if g.is_finite() && g > 0.0 {
                1.0 / g
            } else {
                m.singular_values().min()
            }
        }
        None => m.singular_values().min(),
    }
}
