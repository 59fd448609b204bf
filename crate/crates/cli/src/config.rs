//! Experiment configuration: one strict JSON document per run.
//!
//! The schema is versioned and unknown keys are rejected everywhere, so a
//! typo in a scripted sweep fails loudly instead of silently running the
//! default.  All randomness is seeded from explicit config fields; the tool
//! never draws ambient entropy.

use metlab::cocycle::GeneratorMap;
use metlab::driving::{Alphabet, BernoulliSpec, DrivingSpec, GaussianWalkSpec, MarkovSpec};
use metlab::grassmann::Subspace;
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use std::path::PathBuf;

use crate::Failure;

/// The one schema revision this binary understands.
pub const SCHEMA_VERSION: u32 = 1;

/// Top-level configuration document.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must equal [`SCHEMA_VERSION`].
    pub schema_version: u32,
    /// Cocycle generator; required by every experiment except
    /// `counterexample` and `stability` in `equivalence` mode.
    #[serde(default)]
    pub generator: Option<GeneratorConfig>,
    /// Driving process; same requirement pattern as `generator`.
    #[serde(default)]
    pub driver: Option<DriverConfig>,
    /// Subcommand-specific parameters, tagged by the subcommand name.
    pub experiment: ExperimentParams,
    /// Where and what to write.
    #[serde(default)]
    pub output: OutputConfig,
}

/// Cocycle generator description.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorConfig {
    /// Finite table of step matrices, one per driving symbol.  Matrices are
    /// written row-major: `matrices[s][i][j]` is entry `(i, j)` of the step
    /// for symbol `s`.
    Table {
        matrices: Vec<Vec<Vec<f64>>>,
        /// Uniform norm bound `β`; computed from the table when omitted.
        #[serde(default)]
        beta: Option<f64>,
    },
    /// Real-driven rule `y ↦ exp(rate · y) · base`, for walk drivers.
    Exponential {
        base: Vec<Vec<f64>>,
        rate: f64,
        beta: f64,
    },
}

/// Driving process description.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriverConfig {
    /// I.i.d. symbols with the given weights.
    Bernoulli {
        probs: Vec<f64>,
        /// Symbol names; defaults to `s0`, `s1`, ….
        #[serde(default)]
        symbols: Option<Vec<String>>,
    },
    /// Stationary Markov chain.  Omitting `initial` starts the chain from
    /// the stationary law of the kernel.
    Markov {
        /// Row-stochastic transition matrix, row-major.
        kernel: Vec<Vec<f64>>,
        #[serde(default)]
        initial: Option<Vec<f64>>,
        #[serde(default)]
        symbols: Option<Vec<String>>,
    },
    /// Real-valued Gaussian random walk.
    GaussianWalk {
        initial_mean: f64,
        initial_stddev: f64,
        step_stddev: f64,
    },
}

/// Which series a `subadditive` run evaluates.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SeriesConfig {
    /// `f_t = log‖A(t, x)‖`.
    LogOperatorNorm,
    /// `f_t = log‖A(t, x)|_L‖` for the subspace `L` spanned by the given
    /// vectors (each inner array is one spanning vector).
    LogRestrictedNorm { subspace: Vec<Vec<f64>> },
    /// Additive Birkhoff sums of per-symbol weights.
    BirkhoffSum { weights: Vec<f64> },
}

/// `stability` experiment flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityMode {
    /// Monte Carlo verdict for one (generator, driver, subspace) triple.
    Conditional,
    /// Classifier-agreement sweep over randomly generated instances.
    Equivalence,
}

/// `cost` experiment flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMode {
    /// Cost index along a single sampled path.
    FixedPath,
    /// Essential-infimum estimate over many sampled paths.
    Optimal,
}

/// Subcommand parameters.  The `name` tag must match the invoked
/// subcommand; a mismatch is a validation error.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentParams {
    Spectrum {
        horizon: usize,
        seed: u64,
        #[serde(default)]
        gap_threshold: Option<f64>,
    },
    Filtration {
        horizon: usize,
        seed: u64,
        #[serde(default)]
        gap_threshold: Option<f64>,
    },
    VerifyMet {
        horizon: usize,
        seed: u64,
        #[serde(default)]
        gap_threshold: Option<f64>,
        /// Rate slack `ε` for the exponent dichotomy.
        #[serde(default)]
        epsilon: Option<f64>,
        #[serde(default)]
        invariance_tol: Option<f64>,
        #[serde(default)]
        dir_samples: Option<usize>,
    },
    Subadditive {
        horizon: usize,
        seed: u64,
        series: SeriesConfig,
        /// How many `(m, n)` splits to probe for the subadditivity
        /// residual; defaults to 25.
        #[serde(default)]
        residual_pairs: Option<usize>,
        /// Agreement tolerance between `f_N/N` and the tail slope.
        #[serde(default)]
        tolerance: Option<f64>,
    },
    Counterexample {
        generation: u32,
    },
    Stability {
        mode: StabilityMode,
        /// Spanning vectors of the restriction subspace (`conditional`).
        #[serde(default)]
        subspace: Option<Vec<Vec<f64>>>,
        /// Number of random instances (`equivalence`).
        #[serde(default)]
        instances: Option<usize>,
        horizon: usize,
        trials: usize,
        base_seed: u64,
        #[serde(default)]
        rate_margin: Option<f64>,
        #[serde(default)]
        norm_threshold: Option<f64>,
        #[serde(default)]
        confidence_z: Option<f64>,
    },
    Cost {
        mode: CostMode,
        /// Starting vector `u`.
        vector: Vec<f64>,
        /// Per-step cost scale `γ`; defaults to the plain norm (`γ = 1`).
        #[serde(default)]
        scale: Option<f64>,
        horizon: usize,
        /// Path seed (`fixed-path` mode).
        #[serde(default)]
        seed: Option<u64>,
        /// Monte Carlo trial count (`optimal` mode).
        #[serde(default)]
        trials: Option<usize>,
        /// Seed block base (`optimal` mode).
        #[serde(default)]
        base_seed: Option<u64>,
        #[serde(default)]
        rate_margin: Option<f64>,
        #[serde(default)]
        norm_threshold: Option<f64>,
        #[serde(default)]
        confidence_z: Option<f64>,
    },
}

impl ExperimentParams {
    /// Subcommand name the params belong to (the JSON tag).
    pub fn subcommand(&self) -> &'static str {
        match self {
            ExperimentParams::Spectrum { .. } => "spectrum",
            ExperimentParams::Filtration { .. } => "filtration",
            ExperimentParams::VerifyMet { .. } => "verify-met",
            ExperimentParams::Subadditive { .. } => "subadditive",
            ExperimentParams::Counterexample { .. } => "counterexample",
            ExperimentParams::Stability { .. } => "stability",
            ExperimentParams::Cost { .. } => "cost",
        }
    }
}

/// Output destination and format switches.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Output directory; the `--out` flag overrides it, and the current
    /// directory is the fallback when both are absent.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Whether to write `series.csv` (when the experiment has a series).
    #[serde(default = "default_series")]
    pub series: bool,
}

fn default_series() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: None, series: true }
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation(msg.into())
}

/// Builds a dense matrix from row-major nested arrays, checking shape.
fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, Failure> {
    if rows.is_empty() {
        return Err(invalid(format!("{what}: matrix has no rows")));
    }
    let width = rows[0].len();
    if width == 0 {
        return Err(invalid(format!("{what}: matrix has empty rows")));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != width) {
        return Err(invalid(format!(
            "{what}: row {bad} has {} entries, expected {width}",
            rows[bad].len()
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), width, &flat))
}

/// Builds a matrix whose columns are the given spanning vectors.
fn matrix_from_columns(cols: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, Failure> {
    if cols.is_empty() {
        return Err(invalid(format!("{what}: no spanning vectors given")));
    }
    let ambient = cols[0].len();
    if ambient == 0 {
        return Err(invalid(format!("{what}: spanning vectors are empty")));
    }
    if let Some(bad) = cols.iter().position(|c| c.len() != ambient) {
        return Err(invalid(format!(
            "{what}: vector {bad} has length {}, expected {ambient}",
            cols[bad].len()
        )));
    }
    let mut m = DMatrix::zeros(ambient, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, &DVector::from_column_slice(c));
    }
    Ok(m)
}

/// Turns spanning vectors into a [`Subspace`].
pub fn subspace_from_config(cols: &[Vec<f64>], what: &str) -> Result<Subspace, Failure> {
    let m = matrix_from_columns(cols, what)?;
    Subspace::span(&m).map_err(|e| invalid(format!("{what}: {e}")))
}

impl GeneratorConfig {
    /// Constructs the cocycle generator, surfacing library-side validation
    /// failures as config diagnostics.
    pub fn build(&self) -> Result<GeneratorMap, Failure> {
        match self {
            GeneratorConfig::Table { matrices, beta } => {
                let mut table = Vec::with_capacity(matrices.len());
                for (s, rows) in matrices.iter().enumerate() {
                    let m = matrix_from_rows(rows, &format!("generator.matrices[{s}]"))?;
                    if m.nrows() != m.ncols() {
                        return Err(invalid(format!(
                            "generator.matrices[{s}]: step matrices must be square, got {}×{}",
                            m.nrows(),
                            m.ncols()
                        )));
                    }
                    table.push(m);
                }
                GeneratorMap::from_table(table, *beta)
                    .map_err(|e| invalid(format!("generator: {e}")))
            }
            GeneratorConfig::Exponential { base, rate, beta } => {
                let m = matrix_from_rows(base, "generator.base")?;
                GeneratorMap::from_exponential_rule(m, *rate, *beta)
                    .map_err(|e| invalid(format!("generator: {e}")))
            }
        }
    }

    /// Whether the generator consumes finite symbols (as opposed to reals).
    pub fn is_symbolic(&self) -> bool {
        matches!(self, GeneratorConfig::Table { .. })
    }
}

fn named_alphabet(symbols: &Option<Vec<String>>, count: usize) -> Result<Alphabet, Failure> {
    let ids = match symbols {
        Some(ids) => ids.clone(),
        None => (0..count).map(|i| format!("s{i}")).collect(),
    };
    if ids.len() != count {
        return Err(invalid(format!(
            "driver.symbols: {} names for {count} symbols",
            ids.len()
        )));
    }
    Alphabet::new(ids).map_err(|e| invalid(format!("driver.symbols: {e}")))
}

impl DriverConfig {
    /// Constructs the driving process spec.
    pub fn build(&self) -> Result<DrivingSpec, Failure> {
        match self {
            DriverConfig::Bernoulli { probs, symbols } => {
                let alphabet = named_alphabet(symbols, probs.len())?;
                BernoulliSpec::new(alphabet, probs.clone())
                    .map(DrivingSpec::Bernoulli)
                    .map_err(|e| invalid(format!("driver: {e}")))
            }
            DriverConfig::Markov { kernel, initial, symbols } => {
                let k = matrix_from_rows(kernel, "driver.kernel")?;
                let alphabet = named_alphabet(symbols, k.nrows())?;
                let spec = match initial {
                    Some(law) => MarkovSpec::new(alphabet, k, law.clone()),
                    None => MarkovSpec::with_stationary_start(alphabet, k),
                };
                spec.map(DrivingSpec::Markov)
                    .map_err(|e| invalid(format!("driver: {e}")))
            }
            DriverConfig::GaussianWalk { initial_mean, initial_stddev, step_stddev } => {
                GaussianWalkSpec::new(*initial_mean, *initial_stddev, *step_stddev)
                    .map(DrivingSpec::GaussianWalk)
                    .map_err(|e| invalid(format!("driver: {e}")))
            }
        }
    }

    /// Whether this driver emits finite symbols.
    pub fn is_symbolic(&self) -> bool {
        !matches!(self, DriverConfig::GaussianWalk { .. })
    }

    /// Number of distinct symbols for symbolic drivers.
    pub fn symbol_count(&self) -> Option<usize> {
        match self {
            DriverConfig::Bernoulli { probs, .. } => Some(probs.len()),
            DriverConfig::Markov { kernel, .. } => Some(kernel.len()),
            DriverConfig::GaussianWalk { .. } => None,
        }
    }
}

impl ExperimentConfig {
    /// Parses a config document, turning serde failures into line-anchored
    /// diagnostics (`<file>:<line>:<column>: message`).
    pub fn parse(bytes: &[u8], origin: &str) -> Result<Self, Failure> {
        let config: ExperimentConfig = serde_json::from_slice(bytes).map_err(|e| {
            invalid(format!("{origin}:{}:{}: {e}", e.line(), e.column()))
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Structural checks that cut across fields.
    fn validate(&self) -> Result<(), Failure> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }

        let needs_pair = |what: &str| -> Result<(), Failure> {
            if self.generator.is_none() {
                return Err(invalid(format!("{what} requires a `generator` section")));
            }
            if self.driver.is_none() {
                return Err(invalid(format!("{what} requires a `driver` section")));
            }
            Ok(())
        };
        let rejects_pair = |what: &str| -> Result<(), Failure> {
            if self.generator.is_some() || self.driver.is_some() {
                return Err(invalid(format!(
                    "{what} is self-contained; remove the `generator`/`driver` sections"
                )));
            }
            Ok(())
        };

        match &self.experiment {
            ExperimentParams::Spectrum { .. } => needs_pair("spectrum")?,
            ExperimentParams::Filtration { .. } => needs_pair("filtration")?,
            ExperimentParams::VerifyMet { .. } => needs_pair("verify-met")?,
            ExperimentParams::Subadditive { .. } => needs_pair("subadditive")?,
            ExperimentParams::Counterexample { .. } => rejects_pair("counterexample")?,
            ExperimentParams::Stability { mode, subspace, instances, .. } => match mode {
                StabilityMode::Conditional => {
                    needs_pair("stability (conditional)")?;
                    if subspace.is_none() {
                        return Err(invalid(
                            "stability (conditional) requires `experiment.subspace`",
                        ));
                    }
                    if instances.is_some() {
                        return Err(invalid(
                            "stability (conditional) does not take `experiment.instances`",
                        ));
                    }
                }
                StabilityMode::Equivalence => {
                    rejects_pair("stability (equivalence)")?;
                    if instances.is_none() {
                        return Err(invalid(
                            "stability (equivalence) requires `experiment.instances`",
                        ));
                    }
                    if subspace.is_some() {
                        return Err(invalid(
                            "stability (equivalence) does not take `experiment.subspace`",
                        ));
                    }
                }
            },
            ExperimentParams::Cost { mode, seed, trials, base_seed, .. } => {
                needs_pair("cost")?;
                match mode {
                    CostMode::FixedPath => {
                        if seed.is_none() {
                            return Err(invalid("cost (fixed-path) requires `experiment.seed`"));
                        }
                        if trials.is_some() || base_seed.is_some() {
                            return Err(invalid(
                                "cost (fixed-path) does not take `trials`/`base_seed`",
                            ));
                        }
                    }
                    CostMode::Optimal => {
                        if trials.is_none() || base_seed.is_none() {
                            return Err(invalid(
                                "cost (optimal) requires `experiment.trials` and `experiment.base_seed`",
                            ));
                        }
                        if seed.is_some() {
                            return Err(invalid("cost (optimal) does not take `experiment.seed`"));
                        }
                    }
                }
            }
        }

        // Generator/driver pairing: symbolic drivers feed table generators,
        // real drivers feed rule generators.
        if let (Some(gen), Some(driver)) = (&self.generator, &self.driver) {
            match (gen.is_symbolic(), driver.is_symbolic()) {
                (true, false) => {
                    return Err(invalid(
                        "a table generator needs a symbolic driver (bernoulli or markov)",
                    ))
                }
                (false, true) => {
                    return Err(invalid(
                        "a rule generator needs a real-valued driver (gaussian_walk)",
                    ))
                }
                _ => {}
            }
            if let (GeneratorConfig::Table { matrices, .. }, Some(symbols)) =
                (gen, driver.symbol_count())
            {
                if matrices.len() < symbols {
                    return Err(invalid(format!(
                        "generator table has {} matrices but the driver emits {symbols} symbols",
                        matrices.len()
                    )));
                }
            }
        }
        Ok(())
    }
}
