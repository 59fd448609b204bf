//! Driving processes: the random symbol streams that select step matrices.
//!
//! Three process families are supported:
//!
//! * i.i.d. draws over a finite alphabet ([`BernoulliSpec`]),
//! * a finite-state Markov chain ([`MarkovSpec`]) with its stationary law,
//! * a discretized Gaussian random walk ([`GaussianWalkSpec`]), which has no
//!   invariant probability law and is therefore tagged non-stationary; it is
//!   provided for exploratory runs only.
//!
//! All samplers are deterministic functions of `(spec, length, seed)`; the
//! RNG algorithm identifier is recorded on every [`SamplePath`] so output
//! artifacts pin their own provenance.

use crate::error::{Error, Result};
use crate::rng::{SeededRng, ALGORITHM_ID};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Tolerance for probability-vector and row-stochasticity validation.
const PROB_TOL: f64 = 1e-12;
/// Residual contract for the stationary law: `‖πP − π‖_∞ ≤ STATIONARY_TOL`.
const STATIONARY_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Alphabets and process specs
// ---------------------------------------------------------------------------

/// Ordered finite alphabet of symbol identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    symbols: Vec<String>,
}

impl Alphabet {
    /// Validates that the identifier list is non-empty and duplicate-free.
    pub fn new(symbols: Vec<String>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::invalid("alphabet", "must contain at least one symbol"));
        }
        for (i, s) in symbols.iter().enumerate() {
            if symbols[..i].contains(s) {
                return Err(Error::invalid(
                    "alphabet",
                    format!("duplicate symbol id {s:?}"),
                ));
            }
        }
        Ok(Self { symbols })
    }

    /// Two-symbol alphabet `{"0", "1"}` used throughout the examples.
    pub fn binary() -> Self {
        Self {
            symbols: vec!["0".into(), "1".into()],
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Identifier of the symbol at `index`.
    pub fn id(&self, index: u32) -> Result<&str> {
        self.symbols
            .get(index as usize)
            .map(String::as_str)
            .ok_or(Error::UnknownSymbol {
                symbol: index,
                table_len: self.symbols.len(),
            })
    }

    /// Index of the symbol with identifier `id`.
    pub fn index_of(&self, id: &str) -> Option<u32> {
        self.symbols.iter().position(|s| s == id).map(|i| i as u32)
    }

    pub fn ids(&self) -> &[String] {
        &self.symbols
    }
}

fn validate_prob_vector(what: &'static str, p: &[f64], len: usize) -> Result<()> {
    if p.len() != len {
        return Err(Error::DimensionMismatch {
            detail: format!("{what} has {} entries, alphabet has {len}", p.len()),
        });
    }
    if p.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(Error::invalid(what, "entries must be finite and nonnegative"));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::invalid(
            what,
            format!("entries sum to {sum:.17}, expected 1 within {PROB_TOL:.0e}"),
        ));
    }
    Ok(())
}

/// I.i.d. driving over a finite alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernoulliSpec {
    pub alphabet: Alphabet,
    /// Symbol probabilities, aligned with the alphabet order.
    pub probs: Vec<f64>,
}

impl BernoulliSpec {
    pub fn new(alphabet: Alphabet, probs: Vec<f64>) -> Result<Self> {
        validate_prob_vector("probability vector", &probs, alphabet.len())?;
        Ok(Self { alphabet, probs })
    }

    /// Fair coin over `{"0", "1"}`.
    pub fn fair_binary() -> Self {
        Self {
            alphabet: Alphabet::binary(),
            probs: vec![0.5, 0.5],
        }
    }
}

/// Finite-state Markov driving.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovSpec {
    pub alphabet: Alphabet,
    /// Row-stochastic transition kernel; entry `(i, j)` is `P(i → j)`.
    pub kernel: DMatrix<f64>,
    /// Initial law of the first symbol.
    pub initial: Vec<f64>,
}

impl MarkovSpec {
    pub fn new(alphabet: Alphabet, kernel: DMatrix<f64>, initial: Vec<f64>) -> Result<Self> {
        let m = alphabet.len();
        if kernel.nrows() != m || kernel.ncols() != m {
            return Err(Error::DimensionMismatch {
                detail: format!(
                    "kernel is {}×{}, alphabet has {m} symbols",
                    kernel.nrows(),
                    kernel.ncols()
                ),
            });
        }
        for i in 0..m {
            let row: Vec<f64> = kernel.row(i).iter().copied().collect();
            validate_prob_vector("kernel row", &row, m).map_err(|e| match e {
                Error::Invalid { detail, .. } => Error::invalid(
                    "kernel",
                    format!("row {i} is not a probability vector: {detail}"),
                ),
                other => other,
            })?;
        }
        validate_prob_vector("initial law", &initial, m)?;
        Ok(Self {
            alphabet,
            kernel,
            initial,
        })
    }

    /// Same kernel, started from its stationary law.
    pub fn with_stationary_start(alphabet: Alphabet, kernel: DMatrix<f64>) -> Result<Self> {
        let pi = stationary_distribution(&kernel)?;
        Self::new(alphabet, kernel, pi)
    }
}

/// Discretized Gaussian random walk: `x_0 ~ N(mean, initial_stddev²)`,
/// `x_{k+1} = x_k + N(0, step_stddev²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianWalkSpec {
    pub initial_mean: f64,
    pub initial_stddev: f64,
    pub step_stddev: f64,
}

impl GaussianWalkSpec {
    pub fn new(initial_mean: f64, initial_stddev: f64, step_stddev: f64) -> Result<Self> {
        if !initial_mean.is_finite() || !initial_stddev.is_finite() || !step_stddev.is_finite() {
            return Err(Error::invalid("gaussian walk", "parameters must be finite"));
        }
        if initial_stddev < 0.0 {
            return Err(Error::invalid("gaussian walk", "initial_stddev must be ≥ 0"));
        }
        if step_stddev <= 0.0 {
            return Err(Error::invalid("gaussian walk", "step_stddev must be > 0"));
        }
        Ok(Self {
            initial_mean,
            initial_stddev,
            step_stddev,
        })
    }
}

/// Any of the supported driving processes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DrivingSpec {
    Bernoulli(BernoulliSpec),
    Markov(MarkovSpec),
    GaussianWalk(GaussianWalkSpec),
}

impl DrivingSpec {
    /// Samples a length-`n` path with the family-specific sampler.
    pub fn sample(&self, n: usize, seed: u64) -> Result<SamplePath> {
        match self {
            DrivingSpec::Bernoulli(spec) => sample_bernoulli(spec, n, seed),
            DrivingSpec::Markov(spec) => sample_markov(spec, n, seed),
            DrivingSpec::GaussianWalk(spec) => sample_gaussian_walk(spec, n, seed),
        }
    }

    /// Number of symbols for finite-alphabet families, `None` for the walk.
    pub fn symbol_count(&self) -> Option<usize> {
        match self {
            DrivingSpec::Bernoulli(s) => Some(s.alphabet.len()),
            DrivingSpec::Markov(s) => Some(s.alphabet.len()),
            DrivingSpec::GaussianWalk(_) => None,
        }
    }

    /// Marginal law of a single symbol for finite-alphabet families:
    /// the Bernoulli weights, or the stationary law of the Markov kernel.
    pub fn marginal_law(&self) -> Result<Vec<f64>> {
        match self {
            DrivingSpec::Bernoulli(s) => Ok(s.probs.clone()),
            DrivingSpec::Markov(s) => stationary_distribution(&s.kernel),
            DrivingSpec::GaussianWalk(_) => Err(Error::Precondition {
                detail: "the Gaussian walk has no finite marginal law".into(),
            }),
        }
    }
}

// ---------------------------------------------------------------------------
// Sample paths
// ---------------------------------------------------------------------------

/// Which sampler produced a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Bernoulli,
    Markov,
    GaussianWalk,
    /// Deterministic word from the counterexample constructions.
    Word,
    /// Hand-assembled in tests or callers.
    Synthetic,
}

/// Provenance metadata attached to every path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceTag {
    pub kind: SourceKind,
    /// Frozen RNG pipeline identifier (see [`crate::rng::ALGORITHM_ID`]).
    pub rng_algorithm: String,
    /// Whether the driving law is stationary.  The Gaussian walk is always
    /// tagged `false`; Markov paths are stationary when started from the
    /// stationary law of their kernel.
    pub stationary: bool,
}

impl SourceTag {
    fn sampled(kind: SourceKind, stationary: bool) -> Self {
        Self {
            kind,
            rng_algorithm: ALGORITHM_ID.to_string(),
            stationary,
        }
    }

    /// Tag for deterministic, hand-assembled paths.
    pub fn synthetic() -> Self {
        Self {
            kind: SourceKind::Synthetic,
            rng_algorithm: "none".to_string(),
            stationary: false,
        }
    }

    /// Tag for deterministic counterexample words.
    pub fn word() -> Self {
        Self {
            kind: SourceKind::Word,
            rng_algorithm: "none".to_string(),
            stationary: false,
        }
    }
}

/// Path entries: symbol indices for finite alphabets, reals for the walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathEntries {
    Symbols(Vec<u32>),
    Reals(Vec<f64>),
}

/// One entry of a path, viewed generically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathSymbol {
    Index(u32),
    Real(f64),
}

/// A finite sampled trajectory of the driving process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    entries: PathEntries,
    seed: u64,
    source: SourceTag,
}

impl SamplePath {
    /// Assembles a synthetic symbol path (length ≥ 1).
    pub fn from_symbols(symbols: Vec<u32>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::invalid("path", "length must be ≥ 1"));
        }
        Ok(Self {
            entries: PathEntries::Symbols(symbols),
            seed: 0,
            source: SourceTag::synthetic(),
        })
    }

    pub(crate) fn with_parts(entries: PathEntries, seed: u64, source: SourceTag) -> Self {
        Self {
            entries,
            seed,
            source,
        }
    }

    pub fn len(&self) -> usize {
        match &self.entries {
            PathEntries::Symbols(v) => v.len(),
            PathEntries::Reals(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn source(&self) -> &SourceTag {
        &self.source
    }

    /// Entry at position `k`.
    pub fn get(&self, k: usize) -> Result<PathSymbol> {
        match &self.entries {
            PathEntries::Symbols(v) => v
                .get(k)
                .map(|&s| PathSymbol::Index(s))
                .ok_or(Error::OutOfRange {
                    what: "path index",
                    index: k,
                    limit: v.len(),
                }),
            PathEntries::Reals(v) => v
                .get(k)
                .map(|&s| PathSymbol::Real(s))
                .ok_or(Error::OutOfRange {
                    what: "path index",
                    index: k,
                    limit: v.len(),
                }),
        }
    }

    /// Symbol indices when the path is finite-alphabet.
    pub fn symbols(&self) -> Option<&[u32]> {
        match &self.entries {
            PathEntries::Symbols(v) => Some(v),
            PathEntries::Reals(_) => None,
        }
    }

    /// Real entries when the path came from the Gaussian walk.
    pub fn reals(&self) -> Option<&[f64]> {
        match &self.entries {
            PathEntries::Reals(v) => Some(v),
            PathEntries::Symbols(_) => None,
        }
    }

    /// Applies the shift: drops the first `k` entries (`0 ≤ k < length`).
    ///
    /// `shift(p, 0)` is the identity; shifting is a semigroup action:
    /// `shift(shift(p, a), b) = shift(p, a + b)`.
    pub fn shift(&self, k: usize) -> Result<SamplePath> {
        if k >= self.len() {
            return Err(Error::OutOfRange {
                what: "shift offset",
                index: k,
                limit: self.len(),
            });
        }
        let entries = match &self.entries {
            PathEntries::Symbols(v) => PathEntries::Symbols(v[k..].to_vec()),
            PathEntries::Reals(v) => PathEntries::Reals(v[k..].to_vec()),
        };
        Ok(SamplePath {
            entries,
            seed: self.seed,
            source: self.source.clone(),
        })
    }
}

/// Free-function form of [`SamplePath::shift`].
pub fn shift(path: &SamplePath, k: usize) -> Result<SamplePath> {
    path.shift(k)
}

// ---------------------------------------------------------------------------
// Samplers
// ---------------------------------------------------------------------------

fn check_length(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("path length", "must be ≥ 1"));
    }
    Ok(())
}

/// Samples `n` i.i.d. symbols.
pub fn sample_bernoulli(spec: &BernoulliSpec, n: usize, seed: u64) -> Result<SamplePath> {
    check_length(n)?;
    validate_prob_vector("probability vector", &spec.probs, spec.alphabet.len())?;
    let mut rng = SeededRng::new(seed);
    let symbols: Vec<u32> = (0..n).map(|_| rng.categorical(&spec.probs)).collect();
    Ok(SamplePath::with_parts(
        PathEntries::Symbols(symbols),
        seed,
        SourceTag::sampled(SourceKind::Bernoulli, true),
    ))
}

/// Samples `n` symbols of the Markov chain, starting from `spec.initial`.
pub fn sample_markov(spec: &MarkovSpec, n: usize, seed: u64) -> Result<SamplePath> {
    check_length(n)?;
    // Re-validate so hand-mutated specs cannot smuggle in bad kernels.
    let spec = MarkovSpec::new(spec.alphabet.clone(), spec.kernel.clone(), spec.initial.clone())?;
    let m = spec.alphabet.len();
    let mut rng = SeededRng::new(seed);
    let mut symbols = Vec::with_capacity(n);
    let mut state = rng.categorical(&spec.initial);
    symbols.push(state);
    let mut row = vec![0.0; m];
    for _ in 1..n {
        for (slot, &p) in row.iter_mut().zip(spec.kernel.row(state as usize).iter()) {
            *slot = p;
        }
        state = rng.categorical(&row);
        symbols.push(state);
    }
    // The path is stationary iff the start law is the stationary law.
    let stationary = match stationary_distribution(&spec.kernel) {
        Ok(pi) => spec
            .initial
            .iter()
            .zip(&pi)
            .all(|(a, b)| (a - b).abs() <= 1e-10),
        Err(_) => false,
    };
    Ok(SamplePath::with_parts(
        PathEntries::Symbols(symbols),
        seed,
        SourceTag::sampled(SourceKind::Markov, stationary),
    ))
}

/// Samples the discretized Gaussian walk.  The result is tagged
/// non-stationary: the walk has no invariant probability law.
pub fn sample_gaussian_walk(spec: &GaussianWalkSpec, n: usize, seed: u64) -> Result<SamplePath> {
    check_length(n)?;
    let spec = GaussianWalkSpec::new(spec.initial_mean, spec.initial_stddev, spec.step_stddev)?;
    let mut rng = SeededRng::new(seed);
    let mut reals = Vec::with_capacity(n);
    let mut state = spec.initial_mean + spec.initial_stddev * rng.standard_normal();
    reals.push(state);
    for _ in 1..n {
        state += spec.step_stddev * rng.standard_normal();
        reals.push(state);
    }
    Ok(SamplePath::with_parts(
        PathEntries::Reals(reals),
        seed,
        SourceTag::sampled(SourceKind::GaussianWalk, false),
    ))
}

// ---------------------------------------------------------------------------
// Stationary law
// ---------------------------------------------------------------------------

/// Strong connectivity of the support digraph (edge `i → j` iff `P_{ij} > 0`).
fn strongly_connected(kernel: &DMatrix<f64>) -> bool {
    let m = kernel.nrows();
    let reach = |forward: bool| -> usize {
        let mut seen = vec![false; m];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for j in 0..m {
                let edge = if forward {
                    kernel[(i, j)] > 0.0
                } else {
                    kernel[(j, i)] > 0.0
                };
                if edge && !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count
    };
    reach(true) == m && reach(false) == m
}

fn stationary_residual(kernel: &DMatrix<f64>, pi: &[f64]) -> f64 {
    let m = kernel.nrows();
    let mut worst = 0.0_f64;
    for j in 0..m {
        let mut acc = 0.0;
        for i in 0..m {
            acc += pi[i] * kernel[(i, j)];
        }
        worst = worst.max((acc - pi[j]).abs());
    }
    worst
}

/// Stationary law `π` of an irreducible row-stochastic kernel,
/// with `‖πP − π‖_∞ ≤ 1e-12`.
///
/// The linear system `(Pᵀ − I)π = 0, Σπ = 1` is solved directly by LU; if
/// the direct solve misses the residual contract, a lazy power iteration
/// (`π ← (π + πP)/2`, immune to periodicity) refines the answer.  Reducible
/// kernels are rejected with [`Error::NonUniqueStationary`]; irreducibility
/// is decided by reachability on the support digraph.
pub fn stationary_distribution(kernel: &DMatrix<f64>) -> Result<Vec<f64>> {
    let m = kernel.nrows();
    if m == 0 || kernel.ncols() != m {
        return Err(Error::DimensionMismatch {
            detail: format!("kernel is {}×{}, expected square", kernel.nrows(), kernel.ncols()),
        });
    }
    for i in 0..m {
        let row: Vec<f64> = kernel.row(i).iter().copied().collect();
        validate_prob_vector("kernel row", &row, m)?;
    }
    if !strongly_connected(kernel) {
        return Err(Error::NonUniqueStationary {
            detail: "support digraph is not strongly connected".into(),
        });
    }
    if m == 1 {
        return Ok(vec![1.0]);
    }

    // Direct solve: rows 0..m-1 of Pᵀ − I, last row replaced by Σπ = 1.
    let mut a = kernel.transpose() - DMatrix::<f64>::identity(m, m);
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    let mut b = nalgebra::DVector::<f64>::zeros(m);
    b[m - 1] = 1.0;
    let mut pi: Option<Vec<f64>> = a.lu().solve(&b).map(|x| x.iter().copied().collect());
    if let Some(p) = &pi {
        let ok = p.iter().all(|&x| x.is_finite() && x >= -1e-9)
            && stationary_residual(kernel, p) <= STATIONARY_TOL;
        if !ok {
            pi = None;
        }
    }

    let mut pi = match pi {
        Some(p) => p,
        None => {
            // Lazy power iteration: fixed points are preserved and the lazy
            // kernel (P + I)/2 is aperiodic, so iteration always converges.
            let mut p = vec![1.0 / m as f64; m];
            for _ in 0..100_000 {
                let mut next = vec![0.0; m];
                for i in 0..m {
                    for j in 0..m {
                        next[j] += p[i] * kernel[(i, j)];
                    }
                }
                let mut delta = 0.0_f64;
                for j in 0..m {
                    next[j] = 0.5 * (next[j] + p[j]);
                    delta = delta.max((next[j] - p[j]).abs());
                }
                p = next;
                if delta < 1e-16 {
                    break;
                }
            }
            p
        }
    };

    // Clamp tiny negative round-off and renormalize exactly once.
    for x in pi.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let total: f64 = pi.iter().sum();
    for x in pi.iter_mut() {
        *x /= total;
    }
    let residual = stationary_residual(kernel, &pi);
    if residual > STATIONARY_TOL {
        return Err(Error::Numerical {
            detail: format!(
                "stationary residual {residual:.3e} exceeds {STATIONARY_TOL:.0e}"
            ),
        });
    }
    Ok(pi)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
