//! Subspaces, flags, and the Hausdorff metric on unit spheres.
//!
//! A [`Subspace`] is stored as an orthonormal basis (possibly with zero
//! columns).  Distances between subspaces are measured by the Hausdorff
//! distance between their unit spheres: for equal dimensions this reduces to
//! `2·sin(θ_max/2)` with `θ_max` the largest principal angle, while
//! subspaces of different positive dimensions always sit at distance `√2`
//! (one of them contains a unit vector orthogonal to the other).  A
//! grid-sampling evaluator backs the closed forms up in low dimensions and
//! extends the metric to non-Euclidean norms.

use crate::error::{Error, Result};
use crate::norm::{vector_norm, VectorNorm};
use nalgebra::{DMatrix, DVector, SVD};
use serde::Serialize;

/// Rank cut-off for `span`/`image_subspace`: singular values at or below
/// `RANK_TOL · max(1, σ_max)` are treated as zero.
const RANK_TOL: f64 = 1e-12;

/// Orthonormality tolerance accepted by [`Subspace::from_orthonormal`].
const ORTHO_TOL: f64 = 1e-10;

/// Nesting tolerance used when validating flags and set intersections.
const NEST_TOL: f64 = 1e-8;

// ---------------------------------------------------------------------------
// Subspace
// ---------------------------------------------------------------------------

/// A linear subspace of `R^d` carried by an orthonormal basis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Subspace {
    ambient: usize,
    basis: DMatrix<f64>,
}

impl Subspace {
    /// The zero subspace `{0}` (dimension 0).
    pub fn zero(ambient: usize) -> Self {
        Self {
            ambient,
            basis: DMatrix::zeros(ambient, 0),
        }
    }

    /// The full space `R^d`.
    pub fn full(ambient: usize) -> Self {
        Self {
            ambient,
            basis: DMatrix::identity(ambient, ambient),
        }
    }

    /// Wraps a matrix whose columns are already orthonormal (within `1e-10`).
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Result<Self> {
        let ambient = basis.nrows();
        if basis.ncols() > ambient {
            return Err(Error::DimensionMismatch {
                detail: format!(
                    "{} basis columns exceed ambient dimension {ambient}",
                    basis.ncols()
                ),
            });
        }
        if basis.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("subspace basis", "entries must be finite"));
        }
        let gram = basis.tr_mul(&basis);
        let defect = (&gram - DMatrix::identity(basis.ncols(), basis.ncols())).norm();
        if defect > ORTHO_TOL {
            return Err(Error::invalid(
                "subspace basis",
                format!("columns are not orthonormal (defect {defect:.3e})"),
            ));
        }
        Ok(Self { ambient, basis })
    }

    /// Column space of an arbitrary matrix, with rank detected by SVD.
    pub fn span(vectors: &DMatrix<f64>) -> Result<Self> {
        let ambient = vectors.nrows();
        if ambient == 0 {
            return Err(Error::invalid("span", "ambient dimension must be ≥ 1"));
        }
        if vectors.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("span", "entries must be finite"));
        }
        if vectors.ncols() == 0 {
            return Ok(Self::zero(ambient));
        }
        let svd = SVD::new(vectors.clone(), true, false);
        let u = svd.u.as_ref().ok_or(Error::Numerical {
            detail: "SVD did not produce left singular vectors".into(),
        })?;
        let sigma = &svd.singular_values;
        let cutoff = RANK_TOL * sigma.iter().fold(1.0f64, |m, &s| m.max(s));
        let keep: Vec<usize> = (0..sigma.len()).filter(|&i| sigma[i] > cutoff).collect();
        let mut basis = DMatrix::zeros(ambient, keep.len());
        for (j, &i) in keep.iter().enumerate() {
            basis.set_column(j, &u.column(i));
        }
        Self::from_orthonormal(basis)
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Orthogonal projection of `v` onto the subspace.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.basis * self.basis.tr_mul(v)
    }

    /// Euclidean distance from `v` to the subspace.
    pub fn distance_from(&self, v: &DVector<f64>) -> f64 {
        (v - self.project(v)).norm()
    }

    /// The orthogonal complement.
    pub fn orthogonal_complement(&self) -> Self {
        // Column space of the complementary projector I − BBᵀ.
        let proj =
            DMatrix::identity(self.ambient, self.ambient) - &self.basis * self.basis.transpose();
        let mut comp = Self::span(&proj).expect("complement projector is finite");
        // Rank detection cannot misjudge a projector (singular values are 0
        // or 1), but guard the dimension identity anyway.
        debug_assert_eq!(comp.dim(), self.ambient - self.dim());
        comp.ambient = self.ambient;
        comp
    }
}

/// Result of a containment test `V ⊆ W`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContainmentCheck {
    pub contained: bool,
    /// Largest distance from a basis vector of `V` to `W`.
    pub max_residual: f64,
}

/// Tests `inner ⊆ outer` by projecting each basis vector of `inner`.
pub fn subspace_contains(
    inner: &Subspace,
    outer: &Subspace,
    tol: f64,
) -> Result<ContainmentCheck> {
    if inner.ambient != outer.ambient {
        return Err(Error::DimensionMismatch {
            detail: format!(
                "ambient dimensions differ: {} vs {}",
                inner.ambient, outer.ambient
            ),
        });
    }
    let mut max_residual = 0.0f64;
    for j in 0..inner.dim() {
        let v = DVector::from_column_slice(inner.basis.column(j).as_slice());
        max_residual = max_residual.max(outer.distance_from(&v));
    }
    Ok(ContainmentCheck {
        contained: max_residual <= tol,
        max_residual,
    })
}

// ---------------------------------------------------------------------------
// Hausdorff distance between unit spheres
// ---------------------------------------------------------------------------

/// Hausdorff distance between the Euclidean unit spheres of two subspaces.
///
/// Closed forms: `0` when both are zero; `1` when exactly one is zero (the
/// sphere of the zero subspace is empty, and the convention keeps flags with
/// different level counts apart); `√2` for distinct positive dimensions;
/// and `2·sin(θ_max/2)` via the smallest singular value of `VᵀW` for equal
/// dimensions.
pub fn hausdorff_distance(v: &Subspace, w: &Subspace) -> Result<f64> {
    if v.ambient != w.ambient {
        return Err(Error::DimensionMismatch {
            detail: format!("ambient dimensions differ: {} vs {}", v.ambient, w.ambient),
        });
    }
    let (p, q) = (v.dim(), w.dim());
    if p == 0 && q == 0 {
        return Ok(0.0);
    }
    if p == 0 || q == 0 {
        return Ok(1.0);
    }
    if p != q {
        return Ok(std::f64::consts::SQRT_2);
    }
    let m = v.basis.tr_mul(&w.basis);
    let sigma_min = SVD::new(m, false, false)
        .singular_values
        .iter()
        .fold(f64::INFINITY, |a, &s| a.min(s))
        .clamp(0.0, 1.0);
    // 2·sin(θ/2) with cos θ = σ_min, written without trigonometry.
    Ok((2.0 * (1.0 - sigma_min)).sqrt())
}

/// Grid evaluator for the unit-sphere Hausdorff distance in a chosen norm.
///
/// Samples both spheres on parameter grids (ambient dimension ≤ 3,
/// `resolution ≥ 32` points per angle) and maximizes the point-to-set
/// distances directly.  Slower and coarser than [`hausdorff_distance`] but
/// independent of it, and the only evaluator available for non-Euclidean
/// norms.
pub fn hausdorff_distance_grid(
    v: &Subspace,
    w: &Subspace,
    norm: VectorNorm,
    resolution: usize,
) -> Result<f64> {
    if v.ambient != w.ambient {
        return Err(Error::DimensionMismatch {
            detail: format!("ambient dimensions differ: {} vs {}", v.ambient, w.ambient),
        });
    }
    if v.ambient > 3 {
        return Err(Error::invalid(
            "grid evaluator",
            format!("ambient dimension {} exceeds 3", v.ambient),
        ));
    }
    if resolution < 32 {
        return Err(Error::invalid(
            "grid resolution",
            format!("{resolution} is below the minimum of 32"),
        ));
    }
    let (p, q) = (v.dim(), w.dim());
    if p == 0 && q == 0 {
        return Ok(0.0);
    }
    if p == 0 || q == 0 {
        return Ok(1.0);
    }
    let sv = sample_sphere(v, norm, resolution);
    let sw = sample_sphere(w, norm, resolution);
    let sup_v = directed_sup(&sv, &sw, norm);
    let sup_w = directed_sup(&sw, &sv, norm);
    Ok(sup_v.max(sup_w))
}

/// Samples the unit sphere (in `norm`) of a subspace of dimension 1..=3.
fn sample_sphere(s: &Subspace, norm: VectorNorm, resolution: usize) -> Vec<DVector<f64>> {
    let b = &s.basis;
    let mut points = Vec::new();
    let mut push = |coeffs: &[f64]| {
        let mut x = DVector::zeros(s.ambient);
        for (j, &c) in coeffs.iter().enumerate() {
            for r in 0..s.ambient {
                x[r] += c * b[(r, j)];
            }
        }
        let n = vector_norm(&x, norm);
        if n > 0.0 {
            points.push(x / n);
        }
    };
    match s.dim() {
        1 => {
            push(&[1.0]);
            push(&[-1.0]);
        }
        2 => {
            for i in 0..resolution {
                let t = std::f64::consts::TAU * i as f64 / resolution as f64;
                push(&[t.cos(), t.sin()]);
            }
        }
        3 => {
            for i in 0..=resolution {
                let phi = std::f64::consts::PI * i as f64 / resolution as f64;
                for j in 0..resolution {
                    let psi = std::f64::consts::TAU * j as f64 / resolution as f64;
                    push(&[phi.sin() * psi.cos(), phi.sin() * psi.sin(), phi.cos()]);
                }
            }
        }
        _ => unreachable!("sphere sampling is called with dimensions 1..=3"),
    }
    points
}

fn directed_sup(from: &[DVector<f64>], to: &[DVector<f64>], norm: VectorNorm) -> f64 {
    let mut sup = 0.0f64;
    for x in from {
        let mut nearest = f64::INFINITY;
        for y in to {
            nearest = nearest.min(vector_norm(&(x - y), norm));
        }
        sup = sup.max(nearest);
    }
    sup
}

// ---------------------------------------------------------------------------
// Constructions
// ---------------------------------------------------------------------------

/// Orthogonal complement of `u` inside `v`, i.e. `v ∩ u^⊥`.
///
/// Requires `u ⊆ v` within `1e-8`; the error reports the offending residual.
///
/// The basis is extracted by column-pivoted Gram–Schmidt rather than an
/// SVD: on canonical configurations (projections that are exactly zero,
/// unit columns) the result is then exact to the last bit, which matters
/// downstream — a `1e-16` contamination of a slow direction by a fast one
/// gets amplified to the fast growth rate over long products.
pub fn intersect_with_complement(v: &Subspace, u: &Subspace) -> Result<Subspace> {
    let check = subspace_contains(u, v, NEST_TOL)?;
    if !check.contained {
        return Err(Error::NotContained {
            residual: check.max_residual,
            tol: NEST_TOL,
        });
    }
    let target = v.dim() - u.dim();
    if target == 0 {
        return Ok(Subspace::zero(v.ambient));
    }
    // Project the basis of v off u; the surviving directions span v ∩ u^⊥.
    let mut cols: Vec<DVector<f64>> = (0..v.dim())
        .map(|j| {
            let col = DVector::from_column_slice(v.basis.column(j).as_slice());
            &col - u.project(&col)
        })
        .collect();
    let mut basis = DMatrix::zeros(v.ambient, target);
    for k in 0..target {
        let pivot = (k..cols.len())
            .max_by(|&a, &b| cols[a].norm().total_cmp(&cols[b].norm()))
            .expect("target ≤ column count");
        cols.swap(k, pivot);
        let mut q = cols[k].clone();
        // Two passes against the accepted columns keep orthonormality at
        // machine precision.
        for _pass in 0..2 {
            for i in 0..k {
                let prev = basis.column(i);
                let c = prev.dot(&q);
                q.axpy(-c, &prev.clone_owned(), 1.0);
            }
        }
        let norm = q.norm();
        if norm == 0.0 {
            return Err(Error::Numerical {
                detail: format!(
                    "projected basis has rank below the expected {target} at column {k}"
                ),
            });
        }
        q /= norm;
        for c in cols.iter_mut().skip(k + 1) {
            let d = q.dot(c);
            c.axpy(-d, &q, 1.0);
        }
        basis.set_column(k, &q);
    }
    Subspace::from_orthonormal(basis)
}

/// Image `M·V` of a subspace under a linear map, with rank detection.
pub fn image_subspace(m: &DMatrix<f64>, v: &Subspace) -> Result<Subspace> {
    if m.ncols() != v.ambient {
        return Err(Error::DimensionMismatch {
            detail: format!(
                "map expects dimension {}, subspace lives in {}",
                m.ncols(),
                v.ambient
            ),
        });
    }
    Subspace::span(&(m * &v.basis))
}

/// Principal angles between two subspaces, ascending, in radians.
pub fn principal_angles(v: &Subspace, w: &Subspace) -> Result<Vec<f64>> {
    if v.ambient != w.ambient {
        return Err(Error::DimensionMismatch {
            detail: format!("ambient dimensions differ: {} vs {}", v.ambient, w.ambient),
        });
    }
    if v.dim() == 0 || w.dim() == 0 {
        return Ok(vec![]);
    }
    let m = v.basis.tr_mul(&w.basis);
    let mut sigma: Vec<f64> = SVD::new(m, false, false).singular_values.iter().copied().collect();
    sigma.sort_by(|a, b| b.total_cmp(a));
    Ok(sigma
        .into_iter()
        .map(|s| s.clamp(0.0, 1.0).acos())
        .collect())
}

// ---------------------------------------------------------------------------
// Flags
// ---------------------------------------------------------------------------

/// A strictly increasing chain of nested subspaces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Flag {
    levels: Vec<Subspace>,
}

impl Flag {
    /// Validates ambient agreement, strictly increasing dimensions, and
    /// nesting of consecutive levels within `1e-8`.
    pub fn new(levels: Vec<Subspace>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::invalid("flag", "must contain at least one level"));
        }
        let ambient = levels[0].ambient;
        for (i, l) in levels.iter().enumerate() {
            if l.ambient != ambient {
                return Err(Error::DimensionMismatch {
                    detail: format!(
                        "level {i} lives in dimension {}, level 0 in {ambient}",
                        l.ambient
                    ),
                });
            }
        }
        for i in 1..levels.len() {
            if levels[i].dim() <= levels[i - 1].dim() {
                return Err(Error::invalid(
                    "flag",
                    format!(
                        "dimensions must increase strictly, got {} then {} at level {i}",
                        levels[i - 1].dim(),
                        levels[i].dim()
                    ),
                ));
            }
            let check = subspace_contains(&levels[i - 1], &levels[i], NEST_TOL)?;
            if !check.contained {
                return Err(Error::NotContained {
                    residual: check.max_residual,
                    tol: NEST_TOL,
                });
            }
        }
        Ok(Self { levels })
    }

    pub fn ambient(&self) -> usize {
        self.levels[0].ambient
    }

    pub fn levels(&self) -> &[Subspace] {
        &self.levels
    }

    pub fn level(&self, i: usize) -> Result<&Subspace> {
        self.levels.get(i).ok_or(Error::OutOfRange {
            what: "flag level",
            index: i,
            limit: self.levels.len(),
        })
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.levels.iter().map(Subspace::dim).collect()
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
