//! Hand-built driving words and matrix families with extreme asymptotics.
//!
//! Two constructions live here:
//!
//! * a self-similar binary word whose induced product `A(n)·e₁` converges to
//!   zero but with upper growth exponent exactly 0 — the ones in the word
//!   thin out so fast (`2^{k-1}` ones in the first `2^{2^{k-1}}-1` letters)
//!   that every finite-horizon rate estimate keeps creeping back toward 0;
//! * the Jordan block `[[1,1],[0,1]]`, whose smallest singular value decays
//!   polynomially while the determinant pins `σ_min·σ_max = 1`.
//!
//! Both are exact in binary floating point, which makes them sharp oracles
//! for the estimation machinery.

use crate::cocycle::GeneratorMap;
use crate::driving::{PathEntries, SamplePath, SourceTag};
use crate::error::{Error, Result};
use crate::norm::{min_gain, spectral_norm};
use bitvec::prelude::*;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Largest supported word generation; generation 6 would need ~4.3e9 bits.
pub const MAX_WORD_GENERATION: u32 = 5;

// ---------------------------------------------------------------------------
// Self-similar slow-decay word
// ---------------------------------------------------------------------------

/// A finite binary driving word tagged with its construction generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    bits: BitVec,
    generation: u32,
}

impl Word {
    pub fn bits(&self) -> &BitSlice {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Number of ones in the word.
    pub fn ones(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    /// The word as a deterministic symbolic driving path.
    pub fn to_sample_path(&self) -> SamplePath {
        let symbols: Vec<u32> = self.bits.iter().map(|b| u32::from(*b)).collect();
        SamplePath::with_parts(PathEntries::Symbols(symbols), 0, SourceTag::word())
    }
}

/// Builds generation `k` of the self-similar word
/// `w₁ = (1)`, `w_{k+1} = w_k 0^{|w_k|²} w_k`.
///
/// Lengths obey `|w_{k+1}| = (|w_k|+1)² − 1`, so `|w_k| = 2^{2^{k-1}} − 1`
/// (1, 3, 15, 255, 65535), each word is a prefix of the next, and the ones
/// count doubles each generation.
pub fn slow_decay_word(generation: u32) -> Result<Word> {
    if generation == 0 {
        return Err(Error::invalid("word generation", "must be ≥ 1"));
    }
    if generation > MAX_WORD_GENERATION {
        return Err(Error::ResourceLimit {
            detail: format!(
                "generation {generation} needs 2^(2^{}) − 1 bits; the cap is {MAX_WORD_GENERATION}",
                generation - 1
            ),
        });
    }
    let mut bits: BitVec = BitVec::new();
    bits.push(true);
    for _ in 1..generation {
        let prefix = bits.clone();
        let gap = prefix.len() * prefix.len();
        bits.extend(std::iter::repeat_n(false, gap));
        bits.extend_from_bitslice(&prefix);
    }
    Ok(Word { bits, generation })
}

/// The two-letter generator driving the slow-decay example:
/// symbol 0 ↦ identity, symbol 1 ↦ diag(1/2, 1).
pub fn slow_decay_generator() -> GeneratorMap {
    let a0 = DMatrix::identity(2, 2);
    let a1 = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0]));
    GeneratorMap::from_table(vec![a0, a1], None).expect("fixed table is valid")
}

/// Norms and running rate estimates of `A(t)·v` along a word.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySeries {
    /// `‖A(t)·v‖₂` for `t = 1..=len`.
    pub norms: Vec<f64>,
    /// `log ‖A(t)·v‖₂ / t` for the same horizons (`-∞` once the vector
    /// collapses).
    #[serde(with = "crate::serde_ext::maybe_inf_vec")]
    pub exponents: Vec<f64>,
}

/// Evaluates `A(t)·v` incrementally along the generation-`k` word.
///
/// The steps only halve the first coordinate, so every value is exact in
/// binary floating point.
pub fn slow_decay_trajectory(generation: u32, v: &DVector<f64>) -> Result<TrajectorySeries> {
    if v.len() != 2 {
        return Err(Error::DimensionMismatch {
            detail: format!("trajectory start must live in R², got length {}", v.len()),
        });
    }
    let word = slow_decay_word(generation)?;
    let mut w = v.clone();
    let mut norms = Vec::with_capacity(word.len());
    let mut exponents = Vec::with_capacity(word.len());
    for (t, bit) in word.bits.iter().enumerate() {
        if *bit {
            w[0] *= 0.5;
        }
        let n = w.norm();
        norms.push(n);
        exponents.push(if n == 0.0 {
            f64::NEG_INFINITY
        } else {
            n.ln() / (t + 1) as f64
        });
    }
    Ok(TrajectorySeries { norms, exponents })
}

/// Rate estimates sampled at the generation boundaries:
/// `log ‖A(L_k)·e₁‖ / L_k` for `k = 1..=max_generation`.
///
/// The sequence increases strictly toward 0 — the signature of convergence
/// that is genuinely slower than every exponential.
pub fn generation_exponents(max_generation: u32) -> Result<Vec<f64>> {
    let word = slow_decay_word(max_generation)?;
    let mut exponents = Vec::with_capacity(max_generation as usize);
    let mut length = 1usize;
    let mut ones_seen = 0usize;
    let mut cursor = 0usize;
    for _ in 1..=max_generation {
        while cursor < length {
            if word.bits[cursor] {
                ones_seen += 1;
            }
            cursor += 1;
        }
        // ‖A(L_k)·e₁‖ = 2^{-ones}, exactly.
        exponents.push(-(ones_seen as f64) * std::f64::consts::LN_2 / length as f64);
        length = (length + 1) * (length + 1) - 1;
    }
    Ok(exponents)
}

// ---------------------------------------------------------------------------
// Jordan block gain collapse
// ---------------------------------------------------------------------------

/// Extreme singular values of the powers of a unipotent Jordan block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinGainSeries {
    /// `σ_min(Jⁿ)` for `n = 0..=n_max`.
    pub min_gains: Vec<f64>,
    /// `σ_max(Jⁿ)` for the same powers.
    pub max_gains: Vec<f64>,
}

/// Computes `σ_min` and `σ_max` of `Jⁿ` for `J = [[1,1],[0,1]]`.
///
/// `det Jⁿ = 1` forces `σ_min·σ_max = 1`: the smallest gain collapses to 0,
/// yet only at the polynomial speed `~1/n`, so no exponent separates the
/// two directions.
pub fn jordan_min_gain(n_max: usize) -> MinGainSeries {
    let mut power = DMatrix::<f64>::identity(2, 2);
    let mut min_gains = Vec::with_capacity(n_max + 1);
    let mut max_gains = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        if n > 0 {
            // Jⁿ = [[1, n], [0, 1]] exactly; build it directly.
            power[(0, 1)] = n as f64;
        }
        min_gains.push(min_gain(&power));
        max_gains.push(spectral_norm(&power));
    }
    MinGainSeries {
        min_gains,
        max_gains,
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
