//! Experiment runners: validated config in, report + optional series out.
//!
//! Runners never touch the filesystem; artifact emission lives in
//! [`crate::output`] so a failing run cannot leave partial files behind.

use metlab::counterexamples::{
    generation_exponents, slow_decay_trajectory, slow_decay_word,
};
use metlab::driving::DrivingSpec;
use metlab::lyapunov::{
    filtration_estimate, spectrum, verify_met, MetTolerances, DEFAULT_GAP_THRESHOLD,
};
use metlab::stability::{
    conditional_stability, cost_index, equivalence_check, optimal_cost_estimate, CostKind,
    StabilityParams,
};
use metlab::subadditive::{build_series, kingman_limit, subadditivity_residual, SeriesKind};
use nalgebra::DVector;
use serde_json::{json, Value};

use crate::config::{
    subspace_from_config, CostMode, ExperimentConfig, ExperimentParams, SeriesConfig,
    StabilityMode,
};
use crate::output::{Cell, Csv};
use crate::Failure;

/// Result of a completed run, before any file is written.
pub struct RunOutcome {
    pub results: Value,
    pub series: Option<Csv>,
    /// Nominal driving steps consumed, for the manifest.
    pub logical_steps: u64,
    /// `Some(reason)` when the run finished but its scientific check
    /// failed; outputs are still written and the process exits with 2.
    pub check_failed: Option<String>,
}

fn run_error(e: metlab::Error) -> Failure {
    Failure::Validation(e.to_string())
}

fn to_json<T: serde::Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("report serialization")
}

/// Executes the experiment described by a validated config.
pub fn execute(config: &ExperimentConfig) -> Result<RunOutcome, Failure> {
    match &config.experiment {
        ExperimentParams::Spectrum { horizon, seed, gap_threshold } => {
            let (gen, driver) = build_pair(config)?;
            run_spectrum(&gen, &driver, *horizon, *seed, gap(*gap_threshold))
        }
        ExperimentParams::Filtration { horizon, seed, gap_threshold } => {
            let (gen, driver) = build_pair(config)?;
            run_filtration(&gen, &driver, *horizon, *seed, gap(*gap_threshold))
        }
        ExperimentParams::VerifyMet {
            horizon,
            seed,
            gap_threshold,
            epsilon,
            invariance_tol,
            dir_samples,
        } => {
            let (gen, driver) = build_pair(config)?;
            let defaults = MetTolerances::default();
            let tol = MetTolerances {
                epsilon: epsilon.unwrap_or(defaults.epsilon),
                invariance_tol: invariance_tol.unwrap_or(defaults.invariance_tol),
                dir_samples: dir_samples.unwrap_or(defaults.dir_samples),
            };
            run_verify_met(&gen, &driver, *horizon, *seed, gap(*gap_threshold), &tol)
        }
        ExperimentParams::Subadditive { horizon, seed, series, residual_pairs, tolerance } => {
            let (gen, driver) = build_pair(config)?;
            run_subadditive(
                &gen,
                &driver,
                *horizon,
                *seed,
                series,
                residual_pairs.unwrap_or(25),
                tolerance.unwrap_or(1e-3),
            )
        }
        ExperimentParams::Counterexample { generation } => run_counterexample(*generation),
        ExperimentParams::Stability {
            mode,
            subspace,
            instances,
            horizon,
            trials,
            base_seed,
            rate_margin,
            norm_threshold,
            confidence_z,
        } => {
            let params = stability_params(
                *horizon,
                *trials,
                *base_seed,
                *rate_margin,
                *norm_threshold,
                *confidence_z,
            );
            match mode {
                StabilityMode::Conditional => {
                    let (gen, driver) = build_pair(config)?;
                    let cols = subspace.as_ref().expect("validated");
                    let l = subspace_from_config(cols, "experiment.subspace")?;
                    let verdict =
                        conditional_stability(&gen, &driver, &l, &params).map_err(run_error)?;
                    Ok(RunOutcome {
                        results: json!({ "stability": to_json(&verdict) }),
                        series: None,
                        logical_steps: (params.horizon as u64) * (params.trials as u64),
                        check_failed: None,
                    })
                }
                StabilityMode::Equivalence => {
                    let count = instances.expect("validated");
                    let batch = equivalence_check(count, *base_seed, &params).map_err(run_error)?;
                    let mut csv = Csv::new(&[
                        "instance_seed",
                        "true_rate",
                        "markov",
                        "lyapunov_positive",
                        "exponential_positive",
                        "boundary",
                    ]);
                    csv.comment("experiment", "stability");
                    csv.comment("mode", "equivalence");
                    csv.comment("base_seed", base_seed);
                    for inst in &batch.instances {
                        csv.row(vec![
                            Cell::Int(inst.instance_seed),
                            Cell::Float(inst.true_rate),
                            Cell::Bool(inst.markov),
                            Cell::Bool(inst.lyapunov_positive),
                            Cell::Bool(inst.exponential_positive),
                            Cell::Bool(inst.boundary),
                        ]);
                    }
                    Ok(RunOutcome {
                        results: json!({ "equivalence": to_json(&batch) }),
                        series: Some(csv),
                        logical_steps: (count as u64)
                            * (params.horizon as u64)
                            * (params.trials as u64),
                        check_failed: None,
                    })
                }
            }
        }
        ExperimentParams::Cost {
            mode,
            vector,
            scale,
            horizon,
            seed,
            trials,
            base_seed,
            rate_margin,
            norm_threshold,
            confidence_z,
        } => {
            let (gen, driver) = build_pair(config)?;
            let u = DVector::from_column_slice(vector);
            let kind = match scale {
                Some(gamma) => CostKind::ScaledNorm { scale: *gamma },
                None => CostKind::Norm,
            };
            match mode {
                CostMode::FixedPath => {
                    let path_seed = seed.expect("validated");
                    let path = driver.sample(*horizon, path_seed).map_err(run_error)?;
                    let margin =
                        rate_margin.unwrap_or_else(|| StabilityParams::default().rate_margin);
                    let report =
                        cost_index(&gen, &path, &u, &kind, *horizon, margin).map_err(run_error)?;
                    let mut csv = Csv::new(&["step", "partial_sum"]);
                    csv.comment("experiment", "cost");
                    csv.comment("mode", "fixed_path");
                    csv.comment("seed", path_seed);
                    for (t, s) in report.partial_sums.iter().enumerate() {
                        csv.row(vec![Cell::Int(t as u64), Cell::Float(*s)]);
                    }
                    Ok(RunOutcome {
                        results: json!({ "cost": to_json(&report) }),
                        series: Some(csv),
                        logical_steps: *horizon as u64,
                        check_failed: None,
                    })
                }
                CostMode::Optimal => {
                    let params = stability_params(
                        *horizon,
                        trials.expect("validated"),
                        base_seed.expect("validated"),
                        *rate_margin,
                        *norm_threshold,
                        *confidence_z,
                    );
                    let estimate =
                        optimal_cost_estimate(&gen, &driver, &u, &kind, &params).map_err(run_error)?;
                    let mut csv = Csv::new(&["trials", "sample_minimum"]);
                    csv.comment("experiment", "cost");
                    csv.comment("mode", "optimal");
                    csv.comment("base_seed", params.base_seed);
                    for (count, minimum) in &estimate.nested_minima {
                        csv.row(vec![Cell::Int(*count as u64), Cell::Float(*minimum)]);
                    }
                    Ok(RunOutcome {
                        results: json!({ "optimal_cost": to_json(&estimate) }),
                        series: Some(csv),
                        logical_steps: 2 * (params.horizon as u64) * (params.trials as u64),
                        check_failed: None,
                    })
                }
            }
        }
    }
}

fn gap(configured: Option<f64>) -> f64 {
    configured.unwrap_or(DEFAULT_GAP_THRESHOLD)
}

fn build_pair(config: &ExperimentConfig) -> Result<(metlab::cocycle::GeneratorMap, DrivingSpec), Failure> {
    let gen = config.generator.as_ref().expect("validated").build()?;
    let driver = config.driver.as_ref().expect("validated").build()?;
    Ok((gen, driver))
}

fn stability_params(
    horizon: usize,
    trials: usize,
    base_seed: u64,
    rate_margin: Option<f64>,
    norm_threshold: Option<f64>,
    confidence_z: Option<f64>,
) -> StabilityParams {
    let defaults = StabilityParams::default();
    StabilityParams {
        horizon,
        trials,
        rate_margin: rate_margin.unwrap_or(defaults.rate_margin),
        norm_threshold: norm_threshold.unwrap_or(defaults.norm_threshold),
        confidence_z: confidence_z.unwrap_or(defaults.confidence_z),
        base_seed,
    }
}

fn run_spectrum(
    gen: &metlab::cocycle::GeneratorMap,
    driver: &DrivingSpec,
    horizon: usize,
    seed: u64,
    gap_threshold: f64,
) -> Result<RunOutcome, Failure> {
    let path = driver.sample(horizon, seed).map_err(run_error)?;
    let est = spectrum(gen, &path, horizon, gap_threshold).map_err(run_error)?;
    let d = est.raw_rates.len();
    let mut header: Vec<String> = vec!["horizon".to_string()];
    header.extend((0..d).map(|i| format!("rate_{i}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&header_refs);
    csv.comment("experiment", "spectrum");
    csv.comment("seed", seed);
    csv.comment("horizon", horizon);
    for cp in &est.checkpoints {
        let mut row = vec![Cell::Int(cp.horizon as u64)];
        row.extend(cp.rates.iter().map(|r| Cell::Float(*r)));
        csv.row(row);
    }
    Ok(RunOutcome {
        results: json!({ "spectrum": to_json(&est) }),
        series: Some(csv),
        logical_steps: horizon as u64,
        check_failed: None,
    })
}

fn run_filtration(
    gen: &metlab::cocycle::GeneratorMap,
    driver: &DrivingSpec,
    horizon: usize,
    seed: u64,
    gap_threshold: f64,
) -> Result<RunOutcome, Failure> {
    let path = driver.sample(horizon, seed).map_err(run_error)?;
    let est = filtration_estimate(gen, &path, horizon, gap_threshold).map_err(run_error)?;
    let mut csv = Csv::new(&["level", "dim", "multiplicity", "exponent", "half_horizon_distance"]);
    csv.comment("experiment", "filtration");
    csv.comment("seed", seed);
    csv.comment("horizon", horizon);
    let dims = est.flag.dims();
    for (i, ((dim, mult), conv)) in dims
        .iter()
        .zip(&est.multiplicities)
        .zip(&est.level_convergence)
        .enumerate()
    {
        csv.row(vec![
            Cell::Int((i + 1) as u64),
            Cell::Int(*dim as u64),
            Cell::Int(*mult as u64),
            Cell::Float(est.exponents[i]),
            Cell::Float(*conv),
        ]);
    }
    Ok(RunOutcome {
        results: json!({ "filtration": to_json(&est) }),
        series: Some(csv),
        logical_steps: horizon as u64,
        check_failed: None,
    })
}

fn run_verify_met(
    gen: &metlab::cocycle::GeneratorMap,
    driver: &DrivingSpec,
    horizon: usize,
    seed: u64,
    gap_threshold: f64,
    tol: &MetTolerances,
) -> Result<RunOutcome, Failure> {
    // The dichotomy is checked at the path and its one-step shift, so the
    // sampled path carries one extra entry.
    let path = driver.sample(horizon + 1, seed).map_err(run_error)?;
    let report = verify_met(gen, &path, horizon, gap_threshold, tol).map_err(run_error)?;
    let mut csv = Csv::new(&[
        "level",
        "exponent",
        "dim",
        "multiplicity",
        "inside_violation",
        "outside_violation",
        "nonshrinking_sup",
        "nonshrinking_certified",
        "invariance_residual",
    ]);
    csv.comment("experiment", "verify-met");
    csv.comment("seed", seed);
    csv.comment("horizon", horizon);
    for (i, level) in report.levels.iter().enumerate() {
        csv.row(vec![
            Cell::Int((i + 1) as u64),
            Cell::Float(level.exponent),
            Cell::Int(level.dim as u64),
            Cell::Int(level.multiplicity as u64),
            Cell::Float(level.inside_violation),
            Cell::Float(level.outside_violation),
            Cell::Float(level.nonshrinking_sup),
            Cell::Bool(level.nonshrinking_certified),
            Cell::Float(level.invariance_residual),
        ]);
    }
    let check_failed = (!report.passed).then(|| {
        format!(
            "exponent dichotomy check failed (inside violation {:.3e}, outside violation {:.3e}, \
             invariance residual {:.3e}, dims match: {})",
            report.max_inside_violation,
            report.max_outside_violation,
            report.max_invariance_residual,
            report.dims_match
        )
    });
    Ok(RunOutcome {
        results: json!({ "met": to_json(&report) }),
        series: Some(csv),
        logical_steps: (horizon + 1) as u64,
        check_failed,
    })
}

fn run_subadditive(
    gen: &metlab::cocycle::GeneratorMap,
    driver: &DrivingSpec,
    horizon: usize,
    seed: u64,
    series: &SeriesConfig,
    residual_pairs: usize,
    tolerance: f64,
) -> Result<RunOutcome, Failure> {
    let path = driver.sample(horizon, seed).map_err(run_error)?;
    let kind = match series {
        SeriesConfig::LogOperatorNorm => SeriesKind::LogOperatorNorm,
        SeriesConfig::LogRestrictedNorm { subspace } => SeriesKind::LogRestrictedNorm {
            subspace: subspace_from_config(subspace, "experiment.series.subspace")?,
        },
        SeriesConfig::BirkhoffSum { weights } => {
            SeriesKind::BirkhoffSum { weights: weights.clone() }
        }
    };
    let built = build_series(gen, &path, &kind, horizon).map_err(run_error)?;

    // Deterministic split points: `residual_pairs` values of m evenly spaced
    // across (0, horizon), each probed as the split (m, horizon − m).
    let mut pairs = Vec::new();
    for i in 1..=residual_pairs {
        let m = (i * horizon) / (residual_pairs + 1);
        if m >= 1 && m < horizon {
            pairs.push((m, horizon - m));
        }
    }
    pairs.dedup();
    if pairs.is_empty() {
        return Err(Failure::Validation(
            "horizon too short for any subadditivity split; use horizon ≥ 2".into(),
        ));
    }
    let residual = subadditivity_residual(gen, &path, &kind, &pairs).map_err(run_error)?;
    let estimate = kingman_limit(&built, Some(residual), tolerance);

    let mut csv = Csv::new(&["t", "value"]);
    csv.comment("experiment", "subadditive");
    csv.comment("seed", seed);
    csv.comment("series", built.label());
    for (i, v) in built.values().iter().enumerate() {
        csv.row(vec![Cell::Int((i + 1) as u64), Cell::Float(*v)]);
    }
    let results = json!({
        "kingman": to_json(&estimate),
        "subadditivity_residual": to_json_float(residual),
        "series_label": built.label(),
        "splits_probed": pairs.len(),
    });
    Ok(RunOutcome {
        results,
        series: Some(csv),
        logical_steps: horizon as u64,
        check_failed: None,
    })
}

/// JSON encoding of a single float under the explicit-marker convention.
fn to_json_float(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn run_counterexample(generation: u32) -> Result<RunOutcome, Failure> {
    let word = slow_decay_word(generation).map_err(run_error)?;
    let start = DVector::from_column_slice(&[1.0, 0.0]);
    let trajectory = slow_decay_trajectory(generation, &start).map_err(run_error)?;
    let boundary_exponents = generation_exponents(generation).map_err(run_error)?;
    let length = word.len();

    let mut csv = Csv::new(&["step", "norm", "exponent"]);
    csv.comment("experiment", "counterexample");
    csv.comment("generation", generation);
    for (t, (norm, exp)) in trajectory.norms.iter().zip(&trajectory.exponents).enumerate() {
        csv.row(vec![Cell::Int((t + 1) as u64), Cell::Float(*norm), Cell::Float(*exp)]);
    }

    let results = json!({
        "generation": generation,
        "length": length,
        "halving_steps": word.ones(),
        "final_norm": to_json_float(*trajectory.norms.last().expect("nonempty word")),
        "final_exponent": to_json_float(*trajectory.exponents.last().expect("nonempty word")),
        "generation_exponents": boundary_exponents,
    });
    Ok(RunOutcome {
        results,
        series: Some(csv),
        logical_steps: length as u64,
        check_failed: None,
    })
}
