//! Lyapunov spectra, invariant filtrations, and verification of the
//! exponent dichotomy along sampled paths.
//!
//! The estimators here quantify, at finite horizons, the asymptotic picture
//! for the cocycle `A(n, x)`: a grouped spectrum `λ_1 < … < λ_s` with
//! multiplicities, a nested filtration `V^(1) ⊂ … ⊂ V^(s) = R^d` whose
//! level `i` collects the directions growing at rate at most `λ_i`, and the
//! sharper non-oscillation statement that suitable vectors never shrink
//! below `e^{λ_i t}` by more than a constant factor.  [`verify_met`] bundles
//! the individual checks into one report.
//!
//! Filtration levels are estimated from the transposed product
//! `B(n) = A(x_0)ᵀ ⋯ A(x_{n-1})ᵀ = A(n, x)ᵀ`: its QR frame converges to the
//! right singular frame of `A(n, x)`, whose slow columns span the filtration
//! levels, without ever forming the ill-conditioned long product.

use crate::cocycle::{GeneratorMap, QrSweep};
use crate::driving::SamplePath;
use crate::error::{Error, Result};
use crate::grassmann::{
    hausdorff_distance, image_subspace, intersect_with_complement, subspace_contains, Flag,
    Subspace,
};
use crate::norm::spectral_norm;
use crate::rng::SeededRng;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Rates closer than this are merged into one spectrum group.
pub const DEFAULT_GAP_THRESHOLD: f64 = 0.05;

/// Smallest horizon accepted by the spectrum and filtration estimators.
pub const MIN_SPECTRUM_HORIZON: usize = 100;

/// Internal sampling streams (values arbitrary but fixed, so that reports
/// are reproducible from the path seed alone).
const STREAM_MET_SAMPLES: u64 = 210;
const STREAM_NONSHRINKING: u64 = 211;

// ---------------------------------------------------------------------------
// Rate grouping
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
struct RateGroup {
    mean: f64,
    multiplicity: usize,
    spread: f64,
}

/// Groups rates (sorted descending) by chaining gaps below the threshold.
///
/// Returns the groups in the input (descending) order plus an ambiguity
/// flag: a group whose internal spread exceeds the threshold arose from
/// chain-merging and its mean is not trustworthy.
fn group_rates(sorted_desc: &[f64], gap_threshold: f64) -> (Vec<RateGroup>, bool) {
    let mut groups: Vec<RateGroup> = Vec::new();
    let mut start = 0usize;
    let mut ambiguous = false;
    let gap = |a: f64, b: f64| -> f64 {
        // a ≥ b; both -∞ means the same fully collapsed group.
        if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
            0.0
        } else {
            a - b
        }
    };
    for i in 1..=sorted_desc.len() {
        let split = i == sorted_desc.len()
            || gap(sorted_desc[i - 1], sorted_desc[i]) >= gap_threshold;
        if split {
            let members = &sorted_desc[start..i];
            let mean = if members[0] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                members.iter().sum::<f64>() / members.len() as f64
            };
            let spread = gap(members[0], members[members.len() - 1]);
            if spread > gap_threshold {
                ambiguous = true;
            }
            groups.push(RateGroup {
                mean,
                multiplicity: members.len(),
                spread,
            });
            start = i;
        }
    }
    (groups, ambiguous)
}

// ---------------------------------------------------------------------------
// Spectrum
// ---------------------------------------------------------------------------

/// Rates recorded at an intermediate horizon during a spectrum sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumCheckpoint {
    pub horizon: usize,
    /// Per-direction rates at this horizon, sorted descending.
    #[serde(with = "crate::serde_ext::maybe_inf_vec")]
    pub rates: Vec<f64>,
}

/// Grouped Lyapunov spectrum estimate, dominant exponent first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumEstimate {
    /// Group mean exponents, sorted descending (`-∞` for collapsed
    /// directions).
    #[serde(with = "crate::serde_ext::maybe_inf_vec")]
    pub exponents: Vec<f64>,
    pub multiplicities: Vec<usize>,
    /// Ungrouped per-direction rates, sorted descending.
    #[serde(with = "crate::serde_ext::maybe_inf_vec")]
    pub raw_rates: Vec<f64>,
    /// Set when a group was chain-merged across more than one threshold.
    pub grouping_ambiguous: bool,
    pub gap_threshold: f64,
    pub horizon: usize,
    /// Rates at the quarter horizons, for convergence diagnostics.
    pub checkpoints: Vec<SpectrumCheckpoint>,
}

/// Estimates the grouped spectrum by a forward QR sweep over `n` steps.
///
/// Requires `n ≥ 100`; shorter horizons drown the rates in transient noise.
pub fn spectrum(
    gen: &GeneratorMap,
    path: &SamplePath,
    n: usize,
    gap_threshold: f64,
) -> Result<SpectrumEstimate> {
    if n < MIN_SPECTRUM_HORIZON {
        return Err(Error::Precondition {
            detail: format!("spectrum horizon {n} is below the minimum {MIN_SPECTRUM_HORIZON}"),
        });
    }
    if gap_threshold <= 0.0 || gap_threshold.is_nan() {
        return Err(Error::invalid("gap threshold", "must be positive"));
    }
    if n > path.len() {
        return Err(Error::OutOfRange {
            what: "spectrum horizon",
            index: n,
            limit: path.len(),
        });
    }
    let mut sweep = QrSweep::new(gen.dim(), 1)?;
    let marks = [n / 4, n / 2, 3 * n / 4];
    let mut checkpoints = Vec::new();
    for k in 0..n {
        let a = gen.step_at(path, k)?;
        sweep.step(&a);
        if marks.contains(&(k + 1)) {
            let (horizon, log_r) = sweep.snapshot();
            let mut rates: Vec<f64> = log_r.iter().map(|&x| x / horizon as f64).collect();
            rates.sort_by(|a, b| b.total_cmp(a));
            checkpoints.push(SpectrumCheckpoint { horizon, rates });
        }
    }
    let state = sweep.finish();
    let mut raw_rates = state.rates();
    raw_rates.sort_by(|a, b| b.total_cmp(a));
    let (groups, grouping_ambiguous) = group_rates(&raw_rates, gap_threshold);
    Ok(SpectrumEstimate {
        exponents: groups.iter().map(|g| g.mean).collect(),
        multiplicities: groups.iter().map(|g| g.multiplicity).collect(),
        raw_rates,
        grouping_ambiguous,
        gap_threshold,
        horizon: n,
        checkpoints,
    })
}

// ---------------------------------------------------------------------------
// Directional exponents
// ---------------------------------------------------------------------------

/// Growth-rate estimate along a single initial vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionalEstimate {
    /// `log ‖A(n, x) v‖ / n`, or `-∞` after an exact collapse.
    #[serde(with = "crate::serde_ext::maybe_inf")]
    pub exponent: f64,
    /// First step at which the image vanished exactly, if any (0 means the
    /// input vector itself was zero).
    pub collapsed_at: Option<usize>,
    /// Running estimates `log ‖A(t, x) v‖ / t` for `t = 1..=n`.
    #[serde(with = "crate::serde_ext::maybe_inf_vec")]
    pub series: Vec<f64>,
}

/// Tracks `log ‖A(t, x) v‖` with per-step renormalization.
pub fn directional_exponent(
    gen: &GeneratorMap,
    path: &SamplePath,
    v: &DVector<f64>,
    n: usize,
) -> Result<DirectionalEstimate> {
    if v.len() != gen.dim() {
        return Err(Error::DimensionMismatch {
            detail: format!("vector length {} vs generator dimension {}", v.len(), gen.dim()),
        });
    }
    if n > path.len() {
        return Err(Error::OutOfRange {
            what: "directional horizon",
            index: n,
            limit: path.len(),
        });
    }
    let mut series = Vec::with_capacity(n);
    let start_norm = v.norm();
    if start_norm == 0.0 {
        return Ok(DirectionalEstimate {
            exponent: f64::NEG_INFINITY,
            collapsed_at: Some(0),
            series: vec![f64::NEG_INFINITY; n],
        });
    }
    let mut w = v / start_norm;
    let mut buf = DVector::zeros(gen.dim());
    let mut log_acc = 0.0f64;
    let mut collapsed_at = None;
    for t in 0..n {
        if collapsed_at.is_none() {
            let a = gen.step_at(path, t)?;
            buf.gemv(1.0, &a, &w, 0.0);
            let norm = buf.norm();
            if norm == 0.0 {
                collapsed_at = Some(t + 1);
            } else {
                log_acc += norm.ln();
                buf /= norm;
                std::mem::swap(&mut w, &mut buf);
            }
        }
        series.push(if collapsed_at.is_some() {
            f64::NEG_INFINITY
        } else {
            log_acc / (t + 1) as f64
        });
    }
    Ok(DirectionalEstimate {
        exponent: *series.last().unwrap_or(&0.0),
        collapsed_at,
        series,
    })
}

// ---------------------------------------------------------------------------
// Filtration
// ---------------------------------------------------------------------------

/// Estimated invariant filtration at a point of the path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiltrationEstimate {
    /// Nested levels `V^(1) ⊂ … ⊂ V^(s) = R^d`, slowest first.
    pub flag: Flag,
    /// Group exponents, ascending, aligned with the flag levels.
    #[serde(with = "crate::serde_ext::maybe_inf_vec")]
    pub exponents: Vec<f64>,
    pub multiplicities: Vec<usize>,
    /// Per-level Hausdorff distance between the half-horizon and
    /// full-horizon estimates (the last level is exact by construction).
    pub level_convergence: Vec<f64>,
    pub gap_threshold: f64,
    pub horizon: usize,
}

/// One adjoint-reversed sweep: returns per-column rates (aligned with the
/// frame columns) and the final frame.
fn reversed_sweep(
    gen: &GeneratorMap,
    path: &SamplePath,
    n: usize,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let mut sweep = QrSweep::new(gen.dim(), 1)?;
    for k in (0..n).rev() {
        let a = gen.step_at(path, k)?;
        sweep.step(&a.transpose());
    }
    let state = sweep.finish();
    let rates = state.rates();
    Ok((state.q, rates))
}

/// Collects the columns of `q` holding the `take` smallest rates into an
/// orthonormal basis (slowest first inside the basis does not matter).
fn slow_columns(q: &DMatrix<f64>, rates: &[f64], take: usize) -> Result<Subspace> {
    let mut order: Vec<usize> = (0..rates.len()).collect();
    order.sort_by(|&a, &b| rates[a].total_cmp(&rates[b]));
    let mut basis = DMatrix::zeros(q.nrows(), take);
    for (j, &col) in order.iter().take(take).enumerate() {
        basis.set_column(j, &q.column(col));
    }
    Subspace::from_orthonormal(basis)
}

/// Estimates the filtration via the transposed product `A(n, x)ᵀ`.
///
/// The QR frame of the reversed sweep converges to the right singular frame
/// of `A(n, x)`; level `i` of the flag spans the frame columns whose rates
/// fall in the `i` slowest groups.  Errors with
/// [`Error::UngroupableSpectrum`] when chain-merging makes the grouping
/// unreliable.
pub fn filtration_estimate(
    gen: &GeneratorMap,
    path: &SamplePath,
    n: usize,
    gap_threshold: f64,
) -> Result<FiltrationEstimate> {
    if n < MIN_SPECTRUM_HORIZON {
        return Err(Error::Precondition {
            detail: format!(
                "filtration horizon {n} is below the minimum {MIN_SPECTRUM_HORIZON}"
            ),
        });
    }
    if gap_threshold <= 0.0 || gap_threshold.is_nan() {
        return Err(Error::invalid("gap threshold", "must be positive"));
    }
    if n > path.len() {
        return Err(Error::OutOfRange {
            what: "filtration horizon",
            index: n,
            limit: path.len(),
        });
    }
    let (q, rates) = reversed_sweep(gen, path, n)?;
    let mut sorted = rates.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let (groups, ambiguous) = group_rates(&sorted, gap_threshold);
    if ambiguous {
        return Err(Error::UngroupableSpectrum {
            detail: format!(
                "rate groups drift across the threshold {gap_threshold}; raw rates {sorted:?}"
            ),
        });
    }
    // Ascending order: slowest group first, cumulative dimensions.
    let asc: Vec<&RateGroup> = groups.iter().rev().collect();
    let mut levels = Vec::with_capacity(asc.len());
    let mut cumulative = 0usize;
    for g in &asc {
        cumulative += g.multiplicity;
        levels.push(slow_columns(&q, &rates, cumulative)?);
    }
    let flag = Flag::new(levels)?;
    // Convergence diagnostic against the half-horizon estimate, sliced by
    // the full-run dimensions.
    let (q_half, rates_half) = reversed_sweep(gen, path, n / 2)?;
    let mut level_convergence = Vec::with_capacity(asc.len());
    let mut cumulative = 0usize;
    for g in &asc {
        cumulative += g.multiplicity;
        let half_level = slow_columns(&q_half, &rates_half, cumulative)?;
        level_convergence.push(hausdorff_distance(flag.level(level_convergence.len())?, &half_level)?);
    }
    Ok(FiltrationEstimate {
        flag,
        exponents: asc.iter().map(|g| g.mean).collect(),
        multiplicities: asc.iter().map(|g| g.multiplicity).collect(),
        level_convergence,
        gap_threshold,
        horizon: n,
    })
}

/// Hat spaces `W_i = V^(i) ∩ (V^(i-1))^⊥` of a flag (`W_1 = V^(1)`).
pub fn hat_spaces(flag: &Flag) -> Result<Vec<Subspace>> {
    let mut out = Vec::with_capacity(flag.level_count());
    let mut prev = Subspace::zero(flag.ambient());
    for level in flag.levels() {
        out.push(intersect_with_complement(level, &prev)?);
        prev = level.clone();
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Deflated suprema
// ---------------------------------------------------------------------------

/// What the deflated supremum is taken over.
#[derive(Debug, Clone)]
pub enum LimsupTarget {
    /// `log ‖A(t, x) v‖ − λ t`.
    Vector(DVector<f64>),
    /// `log ‖A(t, x)|_L‖ − λ t` (spectral norm of the restriction).
    Subspace(Subspace),
}

/// Running maximum of the deflated growth along a path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimsupStats {
    /// `sup_t [log Φ(t) − λ t]` over `burn_in ≤ t ≤ n`.
    #[serde(with = "crate::serde_ext::maybe_inf")]
    pub sup: f64,
    /// First `t` attaining the supremum.
    pub argmax: usize,
    /// Deflated values for `t = 0..=n`.
    #[serde(with = "crate::serde_ext::maybe_inf_vec")]
    pub series: Vec<f64>,
    pub burn_in: usize,
    pub lambda: f64,
}

/// Evaluates `sup_t [log Φ(t) − λ t]` in the log domain.
///
/// `burn_in = None` starts the supremum at `t = 0`, where the deflated value
/// is `log ‖v‖` (resp. `0` for a subspace target); this is the honest
/// constant in the non-oscillation bound.  The full series is returned for
/// plotting and argmax diagnostics.
pub fn limsup_stats(
    gen: &GeneratorMap,
    path: &SamplePath,
    lambda: f64,
    target: &LimsupTarget,
    burn_in: Option<usize>,
    n: usize,
) -> Result<LimsupStats> {
    if n > path.len() {
        return Err(Error::OutOfRange {
            what: "supremum horizon",
            index: n,
            limit: path.len(),
        });
    }
    if !lambda.is_finite() {
        return Err(Error::invalid("lambda", "must be finite"));
    }
    let burn_in = burn_in.unwrap_or(0);
    if burn_in > n {
        return Err(Error::Precondition {
            detail: format!("burn-in {burn_in} exceeds the horizon {n}"),
        });
    }
    let d = gen.dim();
    // State matrix: d×p (p = 1 for a vector target).
    let mut m = match target {
        LimsupTarget::Vector(v) => {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    detail: format!("vector length {} vs generator dimension {d}", v.len()),
                });
            }
            DMatrix::from_column_slice(d, 1, v.as_slice())
        }
        LimsupTarget::Subspace(s) => {
            if s.ambient() != d {
                return Err(Error::DimensionMismatch {
                    detail: format!("subspace ambient {} vs generator dimension {d}", s.ambient()),
                });
            }
            if s.dim() == 0 {
                return Err(Error::Precondition {
                    detail: "supremum target subspace must have positive dimension".into(),
                });
            }
            s.basis().clone()
        }
    };
    let mut buf = DMatrix::zeros(d, m.ncols());
    let mut log_scale = 0.0f64;
    let log_value = |m: &DMatrix<f64>, scale: f64| -> f64 {
        let s = spectral_norm(m);
        if s == 0.0 {
            f64::NEG_INFINITY
        } else {
            s.ln() + scale
        }
    };
    let mut series = Vec::with_capacity(n + 1);
    series.push(log_value(&m, log_scale));
    for t in 0..n {
        let a = gen.step_at(path, t)?;
        buf.gemm(1.0, &a, &m, 0.0);
        std::mem::swap(&mut buf, &mut m);
        let f = m.norm();
        if f > 0.0 && !(1e-100..=1e100).contains(&f) {
            log_scale += f.ln();
            m /= f;
        }
        series.push(log_value(&m, log_scale) - lambda * (t + 1) as f64);
    }
    let mut sup = f64::NEG_INFINITY;
    let mut argmax = burn_in;
    for (t, &v) in series.iter().enumerate().skip(burn_in) {
        if v > sup {
            sup = v;
            argmax = t;
        }
    }
    Ok(LimsupStats {
        sup,
        argmax,
        series,
        burn_in,
        lambda,
    })
}

// ---------------------------------------------------------------------------
// Non-shrinking vectors
// ---------------------------------------------------------------------------

/// Outcome of the search for a direction whose deflated growth returns to
/// its starting size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonshrinkingSearch {
    /// Best unit vector found (ambient coordinates).
    pub vector: DVector<f64>,
    /// `sup_{1 ≤ t ≤ n} ‖A(t, x) v‖ e^{-λ t}` for that vector.
    pub sup: f64,
    /// Whether `sup ≥ 1 − tol`.
    pub certified: bool,
    pub evaluations: usize,
}

/// Searches `level ∩ prev^⊥` for a unit vector `v` with
/// `sup_{1 ≤ t ≤ n} ‖A(t, x) v‖ e^{-λ t} ≥ 1 − tol`.
///
/// Such a vector witnesses the non-oscillation refinement: its orbit never
/// falls below the `e^{λ t}` envelope by more than the factor `1 − tol`.
/// Candidates are the hat-space basis plus `trials` random unit vectors,
/// refined by coordinate ascent in the hat-space coordinates.
#[allow(clippy::too_many_arguments)]
pub fn find_nonshrinking_vector(
    gen: &GeneratorMap,
    path: &SamplePath,
    lambda: f64,
    level: &Subspace,
    prev: &Subspace,
    n: usize,
    trials: usize,
    tol: f64,
) -> Result<NonshrinkingSearch> {
    let hat = intersect_with_complement(level, prev)?;
    if hat.dim() == 0 {
        return Err(Error::Precondition {
            detail: "search space level ∩ prev^⊥ is trivial".into(),
        });
    }
    if tol <= 0.0 || tol.is_nan() || !lambda.is_finite() {
        return Err(Error::invalid("search parameters", "tol > 0 and finite lambda required"));
    }
    let p = hat.dim();
    let mut evaluations = 0usize;
    let mut objective = |coeffs: &DVector<f64>| -> Result<(f64, DVector<f64>)> {
        let mut v = hat.basis() * coeffs;
        let norm = v.norm();
        if norm == 0.0 {
            return Ok((f64::NEG_INFINITY, v));
        }
        v /= norm;
        let stats = limsup_stats(
            gen,
            path,
            lambda,
            &LimsupTarget::Vector(v.clone()),
            Some(1),
            n,
        )?;
        evaluations += 1;
        Ok((stats.sup, v))
    };
    // Candidates: hat-space axes, then random directions.
    let mut best_coeffs = DVector::zeros(p);
    let mut best = (f64::NEG_INFINITY, DVector::zeros(gen.dim()));
    for j in 0..p {
        let mut c = DVector::zeros(p);
        c[j] = 1.0;
        let (sup, v) = objective(&c)?;
        if sup > best.0 {
            best = (sup, v);
            best_coeffs = c;
        }
    }
    let mut rng = SeededRng::with_stream(path.seed(), STREAM_NONSHRINKING);
    for _ in 0..trials {
        let c = DVector::from_fn(p, |_, _| rng.standard_normal());
        if c.norm() == 0.0 {
            continue;
        }
        let (sup, v) = objective(&c)?;
        if sup > best.0 {
            best = (sup, v);
            best_coeffs = c;
        }
    }
    // Coordinate ascent with a halving step.
    let mut delta = 0.25f64;
    for _round in 0..4 {
        for j in 0..p {
            for sign in [-1.0, 1.0] {
                let mut c = best_coeffs.clone();
                let scale = c.norm().max(1e-300);
                c[j] += sign * delta * scale;
                let (sup, v) = objective(&c)?;
                if sup > best.0 {
                    best = (sup, v);
                    best_coeffs = c;
                }
            }
        }
        delta /= 2.0;
    }
    let sup = best.0.exp();
    Ok(NonshrinkingSearch {
        vector: best.1,
        sup,
        certified: sup >= 1.0 - tol,
        evaluations,
    })
}

// ---------------------------------------------------------------------------
// Stable subspace
// ---------------------------------------------------------------------------

/// The filtration level collecting all exponents at or below `-ε`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StableSubspace {
    pub subspace: Subspace,
    /// Exponents of the included groups, ascending.
    #[serde(with = "crate::serde_ext::maybe_inf_vec")]
    pub included_exponents: Vec<f64>,
    /// False when some group exponent sits within half a gap threshold of
    /// `-ε`, i.e. the cut could flip under estimation noise.
    pub boundary_clear: bool,
    pub epsilon: f64,
}

/// Cuts the filtration at decay rate `ε > 0`.
pub fn stable_subspace(filtration: &FiltrationEstimate, epsilon: f64) -> Result<StableSubspace> {
    if epsilon <= 0.0 || epsilon.is_nan() {
        return Err(Error::invalid("epsilon", "must be positive"));
    }
    let cut = -epsilon;
    let mut included = 0usize;
    for &e in &filtration.exponents {
        if e <= cut {
            included += 1;
        } else {
            break;
        }
    }
    let subspace = if included == 0 {
        Subspace::zero(filtration.flag.ambient())
    } else {
        filtration.flag.level(included - 1)?.clone()
    };
    let boundary_clear = filtration
        .exponents
        .iter()
        .all(|&e| e == f64::NEG_INFINITY || (e - cut).abs() > filtration.gap_threshold / 2.0);
    Ok(StableSubspace {
        subspace,
        included_exponents: filtration.exponents[..included].to_vec(),
        boundary_clear,
        epsilon,
    })
}

// ---------------------------------------------------------------------------
// Theorem verification
// ---------------------------------------------------------------------------

/// Tolerances for [`verify_met`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetTolerances {
    /// Rate slack `ε`: directional exponents may miss their group exponent
    /// by at most this much in either direction.
    pub epsilon: f64,
    /// Containment tolerance for the invariance check
    /// `A(x_0)·V^(i)(x) ⊆ V^(i)(Tx)`.
    pub invariance_tol: f64,
    /// Random directions sampled per level in addition to the basis.
    pub dir_samples: usize,
}

impl Default for MetTolerances {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            invariance_tol: 1e-8,
            dir_samples: 8,
        }
    }
}

/// Per-level outcome of the verification.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetLevelCheck {
    #[serde(with = "crate::serde_ext::maybe_inf")]
    pub exponent: f64,
    pub dim: usize,
    pub multiplicity: usize,
    /// Worst excess of a sampled directional exponent over `λ_i + ε`
    /// (0 when the upper bound holds).
    pub inside_violation: f64,
    /// Worst shortfall of a hat-space directional exponent below `λ_i − ε`.
    pub outside_violation: f64,
    /// Best deflated supremum found in the hat space.
    pub nonshrinking_sup: f64,
    pub nonshrinking_certified: bool,
    /// Containment residual of `A(x_0)·V^(i)(x)` in `V^(i)(Tx)`.
    pub invariance_residual: f64,
}

/// Full verification report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetReport {
    pub levels: Vec<MetLevelCheck>,
    /// Deflated operator supremum `sup_{t≥1} ‖A(t)|_{V^(i)}‖ e^{-λ_i t}` on
    /// the top decaying level, when one exists.
    pub restricted_sup: Option<f64>,
    pub max_inside_violation: f64,
    pub max_outside_violation: f64,
    pub max_invariance_residual: f64,
    /// Whether the filtrations at `x` and `Tx` have matching level
    /// dimensions.
    pub dims_match: bool,
    pub passed: bool,
    pub horizon: usize,
}

fn random_unit_in(sub: &Subspace, rng: &mut SeededRng) -> Option<DVector<f64>> {
    if sub.dim() == 0 {
        return None;
    }
    loop {
        let c = DVector::from_fn(sub.dim(), |_, _| rng.standard_normal());
        let v = sub.basis() * c;
        let norm = v.norm();
        if norm > 0.0 {
            return Some(v / norm);
        }
    }
}

/// Checks the exponent dichotomy along one sampled path.
///
/// Estimates the filtration at `x` and at the shifted path `Tx` (horizon `n`
/// for both, so the path must have at least `n + 1` entries), then verifies:
/// sampled vectors inside each level grow no faster than `λ_i + ε`; hat-space
/// vectors grow no slower than `λ_i − ε`; each hat space contains a vector
/// whose deflated orbit returns to within `1 − ε` of its starting size; the
/// one-step images of the levels land in the shifted levels; and the level
/// dimensions agree between `x` and `Tx`.
///
/// # Finite-precision caveat
///
/// The inside checks evaluate directional exponents of *estimated* basis
/// vectors.  An estimated slow direction carries contamination of size `δ`
/// in the fastest direction (at best machine epsilon); past
/// `t* ≈ ln(1/δ) / (λ_max − λ_i)` steps the contamination dominates and the
/// reported violation measures the estimate's resolution rather than a
/// failure of the dichotomy.  Systems whose levels are exactly
/// representable (diagonal tables over binary-exact entries, for example)
/// have `δ = 0` and are immune; for generic systems choose `n` below the
/// bend horizon of the narrowest gap or interpret violations accordingly.
pub fn verify_met(
    gen: &GeneratorMap,
    path: &SamplePath,
    n: usize,
    gap_threshold: f64,
    tol: &MetTolerances,
) -> Result<MetReport> {
    if path.len() < n + 1 {
        return Err(Error::Precondition {
            detail: format!(
                "verification needs {} path entries (horizon {n} at both x and Tx), got {}",
                n + 1,
                path.len()
            ),
        });
    }
    let filtration = filtration_estimate(gen, path, n, gap_threshold)?;
    let shifted = path.shift(1)?;
    let filtration_next = filtration_estimate(gen, &shifted, n, gap_threshold)?;
    let dims_match = filtration.flag.dims() == filtration_next.flag.dims();
    let hats = hat_spaces(&filtration.flag)?;
    let step0 = gen.step_at(path, 0)?.clone_owned();
    let mut rng = SeededRng::with_stream(path.seed(), STREAM_MET_SAMPLES);

    let mut levels = Vec::with_capacity(filtration.flag.level_count());
    for (i, level) in filtration.flag.levels().iter().enumerate() {
        let lambda = filtration.exponents[i];
        let hat = &hats[i];
        let mut inside_violation = 0.0f64;
        let mut outside_violation = 0.0f64;
        // Directional samples: hat basis, random hat vectors (two-sided
        // checks), random level vectors (upper bound only).
        let mut two_sided: Vec<DVector<f64>> = Vec::new();
        for j in 0..hat.dim() {
            two_sided.push(DVector::from_column_slice(hat.basis().column(j).as_slice()));
        }
        for _ in 0..tol.dir_samples {
            if let Some(v) = random_unit_in(hat, &mut rng) {
                two_sided.push(v);
            }
        }
        let mut upper_only: Vec<DVector<f64>> = Vec::new();
        for _ in 0..tol.dir_samples {
            if let Some(v) = random_unit_in(level, &mut rng) {
                upper_only.push(v);
            }
        }
        for v in two_sided.iter().chain(upper_only.iter()) {
            let est = directional_exponent(gen, path, v, n)?;
            if est.exponent != f64::NEG_INFINITY || lambda != f64::NEG_INFINITY {
                let excess = est.exponent - lambda - tol.epsilon;
                if excess > 0.0 {
                    inside_violation = inside_violation.max(excess);
                }
            }
        }
        for v in &two_sided {
            let est = directional_exponent(gen, path, v, n)?;
            if lambda == f64::NEG_INFINITY {
                // Lower bound is vacuous on the collapsed group.
                continue;
            }
            let shortfall = (lambda - tol.epsilon)
                - if est.exponent == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    est.exponent
                };
            if shortfall > 0.0 && shortfall.is_finite() {
                outside_violation = outside_violation.max(shortfall);
            } else if est.exponent == f64::NEG_INFINITY {
                // A finite group exponent with a collapsing sample is a
                // genuine violation; record the slack itself.
                outside_violation = outside_violation.max(tol.epsilon.max(1.0));
            }
        }
        // Non-shrinking witness in the hat space (skipped for collapsed
        // groups, where the deflation is undefined).
        let (nonshrinking_sup, nonshrinking_certified) = if lambda == f64::NEG_INFINITY {
            (0.0, true)
        } else {
            let prev = if i == 0 {
                Subspace::zero(filtration.flag.ambient())
            } else {
                filtration.flag.level(i - 1)?.clone()
            };
            let search = find_nonshrinking_vector(
                gen,
                path,
                lambda,
                level,
                &prev,
                n,
                tol.dir_samples,
                tol.epsilon,
            )?;
            (search.sup, search.certified)
        };
        // Invariance: A(x_0)·V^(i)(x) ⊆ V^(i)(Tx).
        let image = image_subspace(&step0, level)?;
        let target = matching_level(&filtration_next, image.dim().max(level.dim().min(
            filtration_next.flag.ambient(),
        )));
        let invariance_residual = match target {
            Some(t) => subspace_contains(&image, t, tol.invariance_tol)?.max_residual,
            None => f64::INFINITY,
        };
        levels.push(MetLevelCheck {
            exponent: lambda,
            dim: level.dim(),
            multiplicity: filtration.multiplicities[i],
            inside_violation,
            outside_violation,
            nonshrinking_sup,
            nonshrinking_certified,
            invariance_residual,
        });
    }

    // Deflated operator supremum on the top decaying level, when the top
    // group itself decays (otherwise the restriction includes growing
    // directions and the supremum diverges by design).
    let restricted_sup = {
        let decaying: Vec<usize> = (0..levels.len())
            .filter(|&i| levels[i].exponent < 0.0 && levels[i].exponent != f64::NEG_INFINITY)
            .collect();
        match decaying.last() {
            Some(&i) => {
                let stats = limsup_stats(
                    gen,
                    path,
                    levels[i].exponent,
                    &LimsupTarget::Subspace(filtration.flag.level(i)?.clone()),
                    Some(1),
                    n,
                )?;
                Some(stats.sup.exp())
            }
            None => None,
        }
    };

    let max_inside_violation = levels.iter().map(|l| l.inside_violation).fold(0.0, f64::max);
    let max_outside_violation = levels.iter().map(|l| l.outside_violation).fold(0.0, f64::max);
    let max_invariance_residual = levels
        .iter()
        .map(|l| l.invariance_residual)
        .fold(0.0, f64::max);
    let passed = dims_match
        && max_inside_violation <= 1e-12
        && max_outside_violation <= 1e-12
        && max_invariance_residual <= tol.invariance_tol
        && levels.iter().all(|l| l.nonshrinking_certified)
        && restricted_sup.is_none_or(|s| s >= 1.0 - tol.epsilon);
    Ok(MetReport {
        levels,
        restricted_sup,
        max_inside_violation,
        max_outside_violation,
        max_invariance_residual,
        dims_match,
        passed,
        horizon: n,
    })
}

/// Finds the flag level of the given dimension, or the smallest level that
/// would contain it.
fn matching_level(filtration: &FiltrationEstimate, dim: usize) -> Option<&Subspace> {
    filtration.flag.levels().iter().find(|l| l.dim() >= dim)
}

// ---------------------------------------------------------------------------
// Induced quotient blocks
// ---------------------------------------------------------------------------

/// Matrices of the maps induced on the quotients `V^(i)/V^(i-1)`,
/// represented in orthonormal hat-space bases at both ends.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InducedBlocks {
    pub blocks: Vec<DMatrix<f64>>,
    /// Per-level log scale of the underlying protected product.
    #[serde(with = "crate::serde_ext::maybe_inf_vec")]
    pub log_scales: Vec<f64>,
    pub dims: Vec<usize>,
    pub steps: usize,
}

/// Computes the induced quotient blocks of `A(n, x)` between two flags.
///
/// Block `i` is `W_i(end)ᵀ · A(n, x) · W_i(start)` with `W_i` the hat
/// spaces; when the flags are invariant under the cocycle this is exactly
/// the matrix of the induced quotient map.
pub fn induced_block_cocycle(
    gen: &GeneratorMap,
    path: &SamplePath,
    flag_start: &Flag,
    flag_end: &Flag,
    n: usize,
) -> Result<InducedBlocks> {
    if flag_start.dims() != flag_end.dims() {
        return Err(Error::DimensionMismatch {
            detail: format!(
                "flag level dimensions differ: {:?} vs {:?}",
                flag_start.dims(),
                flag_end.dims()
            ),
        });
    }
    if flag_start.ambient() != gen.dim() {
        return Err(Error::DimensionMismatch {
            detail: format!(
                "flag ambient {} vs generator dimension {}",
                flag_start.ambient(),
                gen.dim()
            ),
        });
    }
    let product = crate::cocycle::product(gen, path, n)?;
    let hats_start = hat_spaces(flag_start)?;
    let hats_end = hat_spaces(flag_end)?;
    let mut blocks = Vec::with_capacity(hats_start.len());
    let mut log_scales = Vec::with_capacity(hats_start.len());
    let mut dims = Vec::with_capacity(hats_start.len());
    for (ws, we) in hats_start.iter().zip(&hats_end) {
        let mapped = &product.value * ws.basis();
        blocks.push(we.basis().tr_mul(&mapped));
        log_scales.push(product.log_scale);
        dims.push(ws.dim());
    }
    Ok(InducedBlocks {
        blocks,
        log_scales,
        dims,
        steps: n,
    })
}

/// Defect of the cocycle identity for the induced quotient blocks:
/// the worst spectral-norm residual, over levels, of
/// `block(m+n, flag0→flag_mn) − block(n, flag_m→flag_mn) · block(m, flag0→flag_m)`.
///
/// The three flags belong to `x`, `Tᵐx`, and `Tᵐ⁺ⁿx`; all comparisons are
/// made under a common scale.
pub fn induced_identity_residual(
    gen: &GeneratorMap,
    path: &SamplePath,
    flag0: &Flag,
    flag_m: &Flag,
    flag_mn: &Flag,
    m: usize,
    n: usize,
) -> Result<f64> {
    let full = induced_block_cocycle(gen, path, flag0, flag_mn, m + n)?;
    let first = induced_block_cocycle(gen, path, flag0, flag_m, m)?;
    let second = if n == 0 {
        induced_block_cocycle(gen, path, flag_m, flag_mn, 0)?
    } else {
        let shifted = path.shift(m)?;
        induced_block_cocycle(gen, &shifted, flag_m, flag_mn, n)?
    };
    let mut worst = 0.0f64;
    for i in 0..full.blocks.len() {
        let composed_scale = first.log_scales[i] + second.log_scales[i];
        let s = full.log_scales[i].max(composed_scale);
        let lhs = &full.blocks[i] * (full.log_scales[i] - s).exp();
        let rhs = (&second.blocks[i] * &first.blocks[i]) * (composed_scale - s).exp();
        worst = worst.max(spectral_norm(&(lhs - rhs)) * s.exp());
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
