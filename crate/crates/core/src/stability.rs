//! Monte Carlo testers for the two conditional stability notions of
//! switched linear systems — trajectory decay of restricted norms versus
//! negative exponential rate — their equivalence on random instance
//! batches, and truncated estimates of infinite-horizon cost indices.
//!
//! Positivity of a path-measure ("a positive fraction of paths decays") is
//! estimated from independent trials with a binomial confidence interval:
//! the verdict is *positive* only when the lower confidence bound clears
//! zero, because sampling cannot certify null sets.
//!
//! The restricted norm `‖A(n,x)|L‖` is always computed directly as the
//! operator norm of `A(n,x)·(basis of L)`; no subadditivity shortcut is
//! taken, because `L` need not be invariant here.

use nalgebra::{DMatrix, DVector};

use crate::cocycle::{GeneratorMap, SCALE_HI, SCALE_LO};
use crate::driving::{
    Alphabet, BernoulliSpec, DrivingSpec, MarkovSpec, SamplePath,
};
use crate::error::{Error, Result};
use crate::grassmann::Subspace;
use crate::parallel::{map_seeds, seed_block};
use crate::rng::SeededRng;
use crate::subadditive::{eval_values, SeriesKind};
use serde::{Deserialize, Serialize};

/// Stream id for drawing random instances in [`equivalence_check`].
const STREAM_EQUIVALENCE: u64 = 212;

/// Shared knobs for the stability testers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityParams {
    /// Path length `N` for each trial.
    pub horizon: usize,
    /// Independent paths per verdict.
    pub trials: usize,
    /// Exponential classifier margin: rate must be `≤ -rate_margin`.
    pub rate_margin: f64,
    /// Trajectory classifier threshold on the end-of-horizon norm.
    pub norm_threshold: f64,
    /// Normal quantile for the binomial confidence interval.
    pub confidence_z: f64,
    /// First path seed; trial `t` uses `base_seed + t`.
    pub base_seed: u64,
}

impl Default for StabilityParams {
    fn default() -> Self {
        StabilityParams {
            horizon: 1000,
            trials: 30,
            rate_margin: 0.05,
            norm_threshold: 1e-3,
            confidence_z: 1.96,
            base_seed: 0,
        }
    }
}

impl StabilityParams {
    fn validate(&self) -> Result<()> {
        if self.trials < 30 {
            return Err(Error::Precondition {
                detail: format!(
                    "binomial confidence needs at least 30 trials, got {}",
                    self.trials
                ),
            });
        }
        if self.horizon < 1000 {
            return Err(Error::Precondition {
                detail: format!(
                    "rate classification needs a horizon of at least 1000, got {}",
                    self.horizon
                ),
            });
        }
        if !(self.rate_margin.is_finite() && self.rate_margin > 0.0) {
            return Err(Error::invalid("rate_margin", "must be finite and positive"));
        }
        if !(self.norm_threshold.is_finite() && self.norm_threshold > 0.0) {
            return Err(Error::invalid(
                "norm_threshold",
                "must be finite and positive",
            ));
        }
        if !(self.confidence_z.is_finite() && self.confidence_z > 0.0) {
            return Err(Error::invalid("confidence_z", "must be finite and positive"));
        }
        Ok(())
    }
}

/// Estimated measure of decaying paths under the two classifiers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityVerdict {
    /// Fraction of paths whose restricted norm fell below the threshold
    /// and kept decreasing through the tail.
    pub lyapunov_fraction: f64,
    /// Binomial confidence half-width for the trajectory fraction.
    pub lyapunov_half_width: f64,
    /// True when the lower confidence bound of the trajectory fraction
    /// clears zero.
    pub lyapunov_positive: bool,
    /// Fraction of paths whose end-of-horizon rate sat below the margin.
    pub exponential_fraction: f64,
    /// Binomial confidence half-width for the rate fraction.
    pub exponential_half_width: f64,
    /// True when the lower confidence bound of the rate fraction clears
    /// zero.
    pub exponential_positive: bool,
    pub trials: usize,
    pub horizon: usize,
    pub rate_margin: f64,
    pub norm_threshold: f64,
}

fn binomial_half_width(fraction: f64, trials: usize, z: f64) -> f64 {
    z * (fraction * (1.0 - fraction) / trials as f64).sqrt()
}

/// Classifies `trials` independent paths by trajectory decay and by
/// exponential rate of `‖A(n,x)|L‖`, and estimates the measure of each
/// event with a confidence interval.
///
/// Trajectory classifier: `log‖A(N,x)|L‖ ≤ log(norm_threshold)` *and* the
/// log-norm decreased over the second half of the horizon.  Rate
/// classifier: `(1/N)·log‖A(N,x)|L‖ ≤ -rate_margin`.  A collapsed
/// restriction (exact zero) satisfies both.
pub fn conditional_stability(
    gen: &GeneratorMap,
    driver: &DrivingSpec,
    l: &Subspace,
    params: &StabilityParams,
) -> Result<StabilityVerdict> {
    params.validate()?;
    if l.ambient() != gen.dim() {
        return Err(Error::DimensionMismatch {
            detail: format!(
                "subspace ambient {} vs generator dimension {}",
                l.ambient(),
                gen.dim()
            ),
        });
    }
    if l.dim() == 0 {
        return Err(Error::invalid("subspace", "the zero subspace is vacuous"));
    }
    let n = params.horizon;
    let kind = SeriesKind::LogRestrictedNorm {
        subspace: l.clone(),
    };
    let log_threshold = params.norm_threshold.ln();
    let per_seed = |seed: u64| -> Result<(bool, bool)> {
        let path = driver.sample(n, seed)?;
        let values = eval_values(gen, &path, 0, n, &kind)?;
        let g_half = values[n / 2 - 1];
        let g_end = values[n - 1];
        let lyapunov = if g_end == f64::NEG_INFINITY {
            true
        } else {
            g_end <= log_threshold && g_end < g_half
        };
        let exponential = g_end == f64::NEG_INFINITY || g_end / n as f64 <= -params.rate_margin;
        Ok((lyapunov, exponential))
    };
    let outcomes = map_seeds(&seed_block(params.base_seed, params.trials), per_seed);
    let mut lyap = 0usize;
    let mut expo = 0usize;
    for outcome in outcomes {
        let (a, b) = outcome?;
        lyap += a as usize;
        expo += b as usize;
    }
    let lyapunov_fraction = lyap as f64 / params.trials as f64;
    let exponential_fraction = expo as f64 / params.trials as f64;
    let lyapunov_half_width =
        binomial_half_width(lyapunov_fraction, params.trials, params.confidence_z);
    let exponential_half_width =
        binomial_half_width(exponential_fraction, params.trials, params.confidence_z);
    Ok(StabilityVerdict {
        lyapunov_fraction,
        lyapunov_half_width,
        lyapunov_positive: lyapunov_fraction - lyapunov_half_width > 0.0,
        exponential_fraction,
        exponential_half_width,
        exponential_positive: exponential_fraction - exponential_half_width > 0.0,
        trials: params.trials,
        horizon: n,
        rate_margin: params.rate_margin,
        norm_threshold: params.norm_threshold,
    })
}

/// One random diagonal instance inside an equivalence batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceOutcome {
    /// Seed the instance was drawn from.
    pub instance_seed: u64,
    /// Exact growth rate of the restricted line: the law-weighted mean of
    /// the log first-diagonal entries.
    pub true_rate: f64,
    /// Whether the instance used a Markov driver (Bernoulli otherwise).
    pub markov: bool,
    pub lyapunov_positive: bool,
    pub exponential_positive: bool,
    /// True when `|true_rate|` falls inside the rate margin: excluded from
    /// agreement statistics because finite horizons cannot resolve the
    /// boundary.
    pub boundary: bool,
}

/// Agreement statistics over a batch of random diagonal instances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivalenceBatch {
    /// Agreement fraction over the comparable (non-boundary) instances.
    pub agreement: f64,
    /// Comparable instances where both classifiers returned the same
    /// positivity verdict.
    pub agreements: usize,
    /// Instances outside the boundary band.
    pub comparable: usize,
    /// Instances excluded for sitting within the rate margin of zero.
    pub boundary: usize,
    /// Full per-instance record, disagreements included.
    pub instances: Vec<InstanceOutcome>,
}

/// Draws `instances` random 2×2 diagonal systems — log-uniform entries in
/// `[-1, 1]`, alternating Bernoulli and two-state Markov drivers — and
/// compares the positivity verdicts of [`conditional_stability`]'s two
/// classifiers on each, restricted to the first coordinate line.
///
/// The exact per-instance growth rate (a weighted mean of log entries) is
/// recorded, and instances whose true rate lies within `rate_margin` of
/// zero are reported as boundary cases, outside the agreement statistics.
pub fn equivalence_check(
    instances: usize,
    base_seed: u64,
    params: &StabilityParams,
) -> Result<EquivalenceBatch> {
    if instances == 0 {
        return Err(Error::invalid("instances", "need at least one instance"));
    }
    params.validate()?;
    let l = Subspace::from_orthonormal(DMatrix::from_column_slice(2, 1, &[1.0, 0.0]))
        .expect("canonical line");
    let mut outcomes = Vec::with_capacity(instances);
    for i in 0..instances {
        let instance_seed = base_seed.wrapping_add(i as u64);
        let mut rng = SeededRng::with_stream(instance_seed, STREAM_EQUIVALENCE);
        let mut mats = Vec::with_capacity(2);
        let mut firsts = Vec::with_capacity(2);
        for _ in 0..2 {
            let a = rng.uniform_in(-1.0, 1.0).exp();
            let b = rng.uniform_in(-1.0, 1.0).exp();
            firsts.push(a);
            mats.push(DMatrix::from_diagonal(&DVector::from_vec(vec![a, b])));
        }
        let gen = GeneratorMap::from_table(mats, None)?;
        let markov = i % 2 == 1;
        let (driver, law) = if markov {
            // Rows bounded away from 0 and 1 keep the chain irreducible.
            let p = rng.uniform_in(0.05, 0.95);
            let q = rng.uniform_in(0.05, 0.95);
            let kernel = DMatrix::from_row_slice(2, 2, &[1.0 - p, p, q, 1.0 - q]);
            let spec = MarkovSpec::with_stationary_start(Alphabet::binary(), kernel)?;
            let driver = DrivingSpec::Markov(spec);
            let law = driver.marginal_law()?;
            (driver, law)
        } else {
            let p = rng.uniform_in(0.0, 1.0);
            let spec = BernoulliSpec::new(Alphabet::binary(), vec![p, 1.0 - p])?;
            let driver = DrivingSpec::Bernoulli(spec);
            let law = driver.marginal_law()?;
            (driver, law)
        };
        let true_rate: f64 = law
            .iter()
            .zip(&firsts)
            .map(|(pi, a)| pi * a.ln())
            .sum();
        let mut per_instance = params.clone();
        per_instance.base_seed = instance_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let verdict = conditional_stability(&gen, &driver, &l, &per_instance)?;
        outcomes.push(InstanceOutcome {
            instance_seed,
            true_rate,
            markov,
            lyapunov_positive: verdict.lyapunov_positive,
            exponential_positive: verdict.exponential_positive,
            boundary: true_rate.abs() < params.rate_margin,
        });
    }
    let boundary = outcomes.iter().filter(|o| o.boundary).count();
    let comparable = instances - boundary;
    let agreements = outcomes
        .iter()
        .filter(|o| !o.boundary && o.lyapunov_positive == o.exponential_positive)
        .count();
    Ok(EquivalenceBatch {
        agreement: if comparable == 0 {
            1.0
        } else {
            agreements as f64 / comparable as f64
        },
        agreements,
        comparable,
        boundary,
        instances: outcomes,
    })
}

/// Nonnegative cost functions of a vector's norm.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostKind {
    /// `V(u) = ‖u‖`.
    Norm,
    /// `V(u) = scale·‖u‖` for a positive scale.
    ScaledNorm { scale: f64 },
}

impl CostKind {
    fn validate(&self) -> Result<()> {
        match self {
            CostKind::Norm => Ok(()),
            CostKind::ScaledNorm { scale } => {
                if scale.is_finite() && *scale > 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid("scale", "must be finite and positive"))
                }
            }
        }
    }

    fn eval(&self, norm: f64) -> f64 {
        match self {
            CostKind::Norm => norm,
            CostKind::ScaledNorm { scale } => scale * norm,
        }
    }

    /// Linear bound constant: `V(u) ≤ γ‖u‖` everywhere for these kinds.
    pub fn gamma(&self) -> f64 {
        match self {
            CostKind::Norm => 1.0,
            CostKind::ScaledNorm { scale } => *scale,
        }
    }
}

/// Truncated cost of one vector along one path, with a tail bound when the
/// decay rate is certified.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostReport {
    /// The costed vector.
    pub vector: Vec<f64>,
    /// Truncation horizon `N`.
    pub truncation: usize,
    /// `partial_sums[t] = Σ_{k=0}^{t} V(A(k,x)u)` for `t = 0..=N`.
    pub partial_sums: Vec<f64>,
    /// The last partial sum.
    pub total: f64,
    /// Least-squares slope of `log‖A(k,x)u‖` over the tail half, `-∞` if
    /// the orbit collapsed to zero.
    #[serde(with = "crate::serde_ext::maybe_inf")]
    pub fitted_rate: f64,
    /// `γ·‖A(N,x)u‖·ρ/(1−ρ)` with `ρ = e^{slope/2}`: a geometric bound on
    /// the discarded tail, present only when the fitted rate is certified
    /// below `-rate_margin` (the halved exponent absorbs fluctuation).
    pub tail_bound: Option<f64>,
    /// Set when the fitted rate failed certification.
    pub divergent: bool,
    /// Linear bound constant of the cost function used.
    pub gamma: f64,
}

/// Sums `V(A(n,x)u)` for `n = 0..=N` and bounds the discarded tail.
///
/// The orbit norms are tracked in the log domain, so long products neither
/// overflow nor underflow; a norm below `e^{-745}` contributes exactly
/// zero to the sum, as does a collapsed orbit.
pub fn cost_index(
    gen: &GeneratorMap,
    path: &SamplePath,
    u: &DVector<f64>,
    kind: &CostKind,
    n: usize,
    rate_margin: f64,
) -> Result<CostReport> {
    kind.validate()?;
    if u.len() != gen.dim() {
        return Err(Error::DimensionMismatch {
            detail: format!("vector length {} vs generator dimension {}", u.len(), gen.dim()),
        });
    }
    if n < 2 {
        return Err(Error::Precondition {
            detail: format!("tail fitting needs a truncation of at least 2, got {n}"),
        });
    }
    if n > path.len() {
        return Err(Error::OutOfRange {
            what: "cost truncation past path end",
            index: n,
            limit: path.len(),
        });
    }
    if !(rate_margin.is_finite() && rate_margin > 0.0) {
        return Err(Error::invalid("rate_margin", "must be finite and positive"));
    }
    let gamma = kind.gamma();
    let start_norm = u.norm();
    if start_norm == 0.0 {
        // V(0) = 0 for norm costs: the zero vector costs nothing.
        return Ok(CostReport {
            vector: u.iter().copied().collect(),
            truncation: n,
            partial_sums: vec![0.0; n + 1],
            total: 0.0,
            fitted_rate: f64::NEG_INFINITY,
            tail_bound: Some(0.0),
            divergent: false,
            gamma,
        });
    }
    let mut w = u.clone();
    let mut log_scale = 0.0f64;
    let mut collapsed = false;
    let mut buf = DVector::zeros(gen.dim());
    let mut partial_sums = Vec::with_capacity(n + 1);
    let mut log_norms = Vec::with_capacity(n + 1);
    let mut acc = kind.eval(start_norm);
    partial_sums.push(acc);
    log_norms.push(start_norm.ln());
    for t in 0..n {
        if !collapsed {
            let a = gen.step_at(path, t)?;
            buf.gemv(1.0, &a, &w, 0.0);
            std::mem::swap(&mut w, &mut buf);
            let f = w.norm();
            if f == 0.0 {
                collapsed = true;
            } else if !(SCALE_LO..=SCALE_HI).contains(&f) {
                log_scale += f.ln();
                w /= f;
            }
        }
        let log_norm = if collapsed {
            f64::NEG_INFINITY
        } else {
            log_scale + w.norm().ln()
        };
        log_norms.push(log_norm);
        acc += kind.eval(log_norm.exp());
        partial_sums.push(acc);
    }
    let lo = (n / 2).max(1);
    let fitted_rate = if log_norms[lo..].contains(&f64::NEG_INFINITY) {
        f64::NEG_INFINITY
    } else {
        let points: Vec<(f64, f64)> = (lo..=n).map(|t| (t as f64, log_norms[t])).collect();
        let mean_x = points.iter().map(|p| p.0).sum::<f64>() / points.len() as f64;
        let mean_y = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for (x, y) in points {
            num += (x - mean_x) * (y - mean_y);
            den += (x - mean_x) * (x - mean_x);
        }
        if den == 0.0 { 0.0 } else { num / den }
    };
    let certified = fitted_rate <= -rate_margin;
    let tail_bound = if !certified {
        None
    } else if fitted_rate == f64::NEG_INFINITY {
        Some(0.0)
    } else {
        let rho = (fitted_rate / 2.0).exp();
        let end_norm = log_norms[n].exp();
        Some(gamma * end_norm * rho / (1.0 - rho))
    };
    Ok(CostReport {
        vector: u.iter().copied().collect(),
        truncation: n,
        total: *partial_sums.last().expect("nonempty"),
        partial_sums,
        fitted_rate,
        tail_bound,
        divergent: !certified,
        gamma,
    })
}

/// Sample-minimum estimate of the essential-infimum cost.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimalCost {
    /// Smallest tail-bounded total over the certified sampled paths;
    /// `None` when the stability gate failed or no path certified.
    pub estimate: Option<f64>,
    /// Set when the stability gate failed or every sampled path diverged.
    pub divergent: bool,
    /// Minima over nested seed prefixes (quarter, half, full), for the
    /// monotonicity diagnostic; each entry is (trials used, minimum).
    pub nested_minima: Vec<(usize, f64)>,
    /// Paths whose decay rate certified.
    pub certified_paths: usize,
    pub trials: usize,
    pub truncation: usize,
    /// The gating verdict.
    pub gate: StabilityVerdict,
}

/// Estimates the smallest achievable cost of `u` over sampled paths.
///
/// Gated on [`conditional_stability`] for the line of `u`: without a
/// certified positive fraction of decaying paths the essential infimum has
/// no reachable finite witness and the estimate reports divergent.  Each
/// sampled path contributes its truncated sum plus tail bound when its
/// decay certifies; the estimate is the minimum, an upper bound on the
/// true essential infimum.
pub fn optimal_cost_estimate(
    gen: &GeneratorMap,
    driver: &DrivingSpec,
    u: &DVector<f64>,
    kind: &CostKind,
    params: &StabilityParams,
) -> Result<OptimalCost> {
    kind.validate()?;
    if u.len() != gen.dim() {
        return Err(Error::DimensionMismatch {
            detail: format!("vector length {} vs generator dimension {}", u.len(), gen.dim()),
        });
    }
    let n = params.horizon;
    if u.norm() == 0.0 {
        let l = Subspace::from_orthonormal(DMatrix::identity(gen.dim(), 1)).expect("unit column");
        let gate = conditional_stability(gen, driver, &l, params)?;
        return Ok(OptimalCost {
            estimate: Some(0.0),
            divergent: false,
            nested_minima: vec![(params.trials, 0.0)],
            certified_paths: 0,
            trials: params.trials,
            truncation: n,
            gate,
        });
    }
    let line = Subspace::span(&DMatrix::from_column_slice(gen.dim(), 1, u.as_slice()))?;
    let gate = conditional_stability(gen, driver, &line, params)?;
    if !gate.lyapunov_positive {
        return Ok(OptimalCost {
            estimate: None,
            divergent: true,
            nested_minima: Vec::new(),
            certified_paths: 0,
            trials: params.trials,
            truncation: n,
            gate,
        });
    }
    let per_seed = |seed: u64| -> Result<Option<f64>> {
        let path = driver.sample(n, seed)?;
        let report = cost_index(gen, &path, u, kind, n, params.rate_margin)?;
        Ok(report
            .tail_bound
            .map(|tail| report.total + tail))
    };
    let outcomes = map_seeds(&seed_block(params.base_seed, params.trials), per_seed);
    let mut totals = Vec::with_capacity(params.trials);
    for outcome in outcomes {
        totals.push(outcome?);
    }
    let prefix_min = |count: usize| -> Option<f64> {
        totals[..count]
            .iter()
            .flatten()
            .copied()
            .fold(None, |m: Option<f64>, v| {
                Some(m.map_or(v, |m| m.min(v)))
            })
    };
    let mut nested_minima = Vec::new();
    for count in [params.trials / 4, params.trials / 2, params.trials] {
        if count == 0 {
            continue;
        }
        if let Some(m) = prefix_min(count) {
            nested_minima.push((count, m));
        }
    }
    let certified_paths = totals.iter().flatten().count();
    let estimate = prefix_min(params.trials);
    Ok(OptimalCost {
        divergent: estimate.is_none(),
        estimate,
        nested_minima,
        certified_paths,
        trials: params.trials,
        truncation: n,
        gate,
    })
}
