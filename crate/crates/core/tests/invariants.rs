//! Cross-module invariants exercised over randomized inputs.
//!
//! These tests pin the algebraic contracts that hold for *every* generator,
//! path, and subspace — shift composition, the cocycle identity, norm
//! bounds, determinant bookkeeping, metric axioms, flag validity — rather
//! than the example-specific values covered by the unit tests.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use metlab::cocycle::{
    cocycle_identity_residual, product, qr_accumulate, GeneratorMap,
};
use metlab::driving::{sample_bernoulli, BernoulliSpec, SamplePath};
use metlab::grassmann::{hausdorff_distance, subspace_contains, Subspace};
use metlab::lyapunov::{
    filtration_estimate, limsup_stats, spectrum, LimsupTarget, DEFAULT_GAP_THRESHOLD,
};
use metlab::norm::MatrixNorm;
use metlab::parallel::{map_seeds, map_seeds_sequential, seed_block};
use metlab::rng::SeededRng;
use metlab::subadditive::{build_series, subadditivity_residual, SeriesKind};

/// Deterministic random generator table from a seed: `letters` matrices of
/// size `dim` with entries uniform in [-1, 1].
fn random_table(dim: usize, letters: usize, seed: u64) -> GeneratorMap {
    let mut rng = SeededRng::with_stream(seed, 300);
    let mats = (0..letters)
        .map(|_| DMatrix::from_fn(dim, dim, |_, _| rng.uniform_in(-1.0, 1.0)))
        .collect();
    GeneratorMap::from_table(mats, None).expect("random tables are valid")
}

/// Deterministic random word over `letters` symbols.
fn random_word(len: usize, letters: u32, seed: u64) -> SamplePath {
    let mut rng = SeededRng::with_stream(seed, 301);
    SamplePath::from_symbols((0..len).map(|_| (rng.next_u64() % letters as u64) as u32).collect())
        .expect("nonempty word")
}

/// Deterministic random subspace of the given ambient dimension.
fn random_subspace(ambient: usize, dim: usize, seed: u64) -> Subspace {
    let mut rng = SeededRng::with_stream(seed, 302);
    loop {
        let m = DMatrix::from_fn(ambient, dim, |_, _| rng.standard_normal());
        let s = Subspace::span(&m).expect("span is always available");
        if s.dim() == dim {
            return s;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shift_composition_is_additive(
        len in 3usize..40,
        k in 0usize..20,
        j in 0usize..20,
        seed in 0u64..1_000,
    ) {
        prop_assume!(k + j < len);
        let path = random_word(len, 3, seed);
        let once = path.shift(k).unwrap().shift(j).unwrap();
        let both = path.shift(k + j).unwrap();
        prop_assert_eq!(once.symbols().unwrap(), both.symbols().unwrap());
    }

    #[test]
    fn cocycle_identity_holds_at_every_split(
        dim in 2usize..=4,
        m in 1usize..20,
        n in 1usize..20,
        seed in 0u64..1_000,
    ) {
        let gen = random_table(dim, 2, seed);
        let path = random_word(m + n, 2, seed ^ 0xABCD);
        let residual = cocycle_identity_residual(&gen, &path, m, n).unwrap();
        let whole = product(&gen, &path, m + n).unwrap();
        let scale = 1.0 + whole.log_norm(MatrixNorm::Spectral).exp();
        prop_assert!(
            residual <= 1e-9 * scale,
            "residual {} vs allowance {}", residual, 1e-9 * scale
        );
    }

    #[test]
    fn products_respect_the_uniform_norm_bound(
        dim in 2usize..=4,
        n in 1usize..60,
        seed in 0u64..1_000,
    ) {
        let gen = random_table(dim, 2, seed);
        let path = random_word(n, 2, seed ^ 0x77);
        let prod = product(&gen, &path, n).unwrap();
        // log‖A(n, x)‖ ≤ n·log β with β the per-step norm bound.
        prop_assert!(
            prod.log_norm(MatrixNorm::Spectral) <= n as f64 * gen.beta().ln() + 1e-9 * n as f64,
            "log norm {} vs bound {}", prod.log_norm(MatrixNorm::Spectral), n as f64 * gen.beta().ln()
        );
    }

    #[test]
    fn qr_rates_account_for_the_exact_determinant(
        dim in 2usize..=4,
        n in 2usize..50,
        seed in 0u64..1_000,
    ) {
        let gen = random_table(dim, 2, seed);
        let path = random_word(n, 2, seed ^ 0x3131);
        let state = qr_accumulate(&gen, &path, n, 1).unwrap();
        let qr_logdet: f64 = state.log_r.iter().sum();
        let mut exact_logdet = 0.0f64;
        for k in 0..n {
            let step = gen.step_at(&path, k).unwrap();
            exact_logdet += step.determinant().abs().ln();
        }
        // |det| multiplies exactly across steps, and the r-column products
        // are a volume decomposition of the same quantity.
        prop_assert!(
            (qr_logdet - exact_logdet).abs() <= 1e-9 * (1.0 + exact_logdet.abs()),
            "QR {} vs det {}", qr_logdet, exact_logdet
        );
    }

    #[test]
    fn hausdorff_distance_satisfies_the_metric_axioms(
        ambient in 2usize..=4,
        dims in (0usize..=3, 0usize..=3, 0usize..=3),
        seed in 0u64..1_000,
    ) {
        let (dv, dw, du) = dims;
        prop_assume!(dv <= ambient && dw <= ambient && du <= ambient);
        let v = random_subspace(ambient, dv, seed);
        let w = random_subspace(ambient, dw, seed ^ 0x51);
        let u = random_subspace(ambient, du, seed ^ 0x52);
        let dvw = hausdorff_distance(&v, &w).unwrap();
        let dwv = hausdorff_distance(&w, &v).unwrap();
        let dvv = hausdorff_distance(&v, &v).unwrap();
        let dvu = hausdorff_distance(&v, &u).unwrap();
        let duw = hausdorff_distance(&u, &w).unwrap();
        // Identity up to the √(2·eps) floor of the chordal form.
        prop_assert!(dvv <= 1e-7, "self distance {}", dvv);
        prop_assert!((dvw - dwv).abs() <= 1e-12, "asymmetry {} vs {}", dvw, dwv);
        prop_assert!(dvw >= 0.0);
        prop_assert!(
            dvw <= dvu + duw + 1e-9,
            "triangle violated: {} > {} + {}", dvw, dvu, duw
        );
    }

    #[test]
    fn log_operator_norm_series_are_subadditive(
        dim in 2usize..=3,
        seed in 0u64..1_000,
    ) {
        let gen = random_table(dim, 2, seed);
        let path = random_word(40, 2, seed ^ 0x99);
        let mut rng = SeededRng::with_stream(seed, 303);
        let pairs: Vec<(usize, usize)> = (0..25)
            .map(|_| {
                let m = 1 + (rng.next_u64() as usize) % 38;
                let n = 1 + (rng.next_u64() as usize) % (40 - m);
                (m, n)
            })
            .collect();
        let r = subadditivity_residual(&gen, &path, &SeriesKind::LogOperatorNorm, &pairs)
            .unwrap();
        prop_assert!(r <= 1e-9, "residual {}", r);
    }

    #[test]
    fn limsup_series_never_exceeds_its_supremum(
        entries in prop::collection::vec(0.2f64..2.0, 2..=3),
        lambda in -0.5f64..0.5,
        seed in 0u64..1_000,
    ) {
        let d = DMatrix::from_diagonal(&DVector::from_vec(entries.clone()));
        let gen = GeneratorMap::from_table(vec![d], None).unwrap();
        let path = SamplePath::from_symbols(vec![0; 80]).unwrap();
        let mut rng = SeededRng::with_stream(seed, 304);
        let v = DVector::from_fn(entries.len(), |_, _| rng.standard_normal());
        prop_assume!(v.norm() > 1e-6);
        let stats = limsup_stats(&gen, &path, lambda, &LimsupTarget::Vector(v), None, 80)
            .unwrap();
        prop_assert_eq!(stats.series.len(), 81);
        for &value in &stats.series {
            prop_assert!(value <= stats.sup + 1e-12);
        }
        prop_assert!((stats.series[stats.argmax] - stats.sup).abs() <= 1e-12);
    }

    #[test]
    fn doubling_never_improves_constant_cocycle_rates(
        entries in prop::collection::vec(0.2f64..2.0, 2..=3),
        n in 1usize..100,
    ) {
        // For a constant path the shifted series equals the original, so
        // subadditivity collapses to f_{2n} ≤ 2·f_n pointwise.
        let d = DMatrix::from_diagonal(&DVector::from_vec(entries.clone()));
        let gen = GeneratorMap::from_table(vec![d], None).unwrap();
        let path = SamplePath::from_symbols(vec![0; 2 * n]).unwrap();
        let series = build_series(&gen, &path, &SeriesKind::LogOperatorNorm, 2 * n).unwrap();
        let f_n = series.value(n).unwrap();
        let f_2n = series.value(2 * n).unwrap();
        prop_assert!(f_2n / (2.0 * n as f64) <= f_n / n as f64 + 1e-9 / n as f64);
    }

    #[test]
    fn filtration_flags_are_valid_on_gapped_diagonal_systems(
        dim in 2usize..=4,
        seed in 0u64..1_000,
    ) {
        // Entries e^{k·0.4} for a random permutation of distinct k: gaps of
        // at least 0.4 make the grouping unambiguous.
        let mut rng = SeededRng::with_stream(seed, 305);
        let mut logs: Vec<f64> = (0..dim).map(|k| k as f64 * 0.4 - 0.6).collect();
        for i in (1..logs.len()).rev() {
            let j = (rng.next_u64() as usize) % (i + 1);
            logs.swap(i, j);
        }
        let d = DMatrix::from_diagonal(&DVector::from_vec(
            logs.iter().map(|&l| l.exp()).collect(),
        ));
        let gen = GeneratorMap::from_table(vec![d], None).unwrap();
        let path = SamplePath::from_symbols(vec![0; 300]).unwrap();
        let est = filtration_estimate(&gen, &path, 300, DEFAULT_GAP_THRESHOLD).unwrap();
        let flag = &est.flag;
        prop_assert_eq!(flag.level_count(), dim);
        // Dims strictly increase and levels nest.
        let dims = flag.dims();
        for pair in dims.windows(2) {
            prop_assert!(pair[0] < pair[1]);
        }
        for i in 1..flag.level_count() {
            let inner = flag.level(i - 1).unwrap();
            let outer = flag.level(i).unwrap();
            let check = subspace_contains(inner, outer, 1e-8).unwrap();
            prop_assert!(check.contained, "level {} escapes level {}", i - 1, i);
        }
        // Exponents ascend by at least the constructed gap.
        for pair in est.exponents.windows(2) {
            prop_assert!(pair[1] - pair[0] >= 0.39);
        }
        // And they are exactly the sorted log-entries for a constant
        // diagonal system.
        let mut sorted = logs.clone();
        sorted.sort_by(f64::total_cmp);
        for (got, want) in est.exponents.iter().zip(&sorted) {
            prop_assert!((got - want).abs() <= 1e-10);
        }
    }
}

#[test]
fn sampling_is_reproducible_and_seed_sensitive() {
    let spec = BernoulliSpec::fair_binary();
    let a = sample_bernoulli(&spec, 500, 42).unwrap();
    let b = sample_bernoulli(&spec, 500, 42).unwrap();
    let c = sample_bernoulli(&spec, 500, 43).unwrap();
    assert_eq!(a.symbols().unwrap(), b.symbols().unwrap());
    assert_ne!(a.symbols().unwrap(), c.symbols().unwrap());
}

#[test]
fn spectra_are_bitwise_deterministic() {
    let gen = random_table(3, 2, 7);
    let path = random_word(200, 2, 8);
    let first = spectrum(&gen, &path, 200, DEFAULT_GAP_THRESHOLD).unwrap();
    let second = spectrum(&gen, &path, 200, DEFAULT_GAP_THRESHOLD).unwrap();
    assert_eq!(first.raw_rates, second.raw_rates);
    assert_eq!(first.exponents, second.exponents);
}

#[test]
fn parallel_and_sequential_batches_agree_bit_for_bit() {
    // The parallel lane must not change any numeric result: per-seed work
    // is independent and merged in seed order.
    let gen = random_table(2, 2, 11);
    let seeds = seed_block(900, 24);
    let run = |seed: u64| {
        let path = sample_bernoulli(&BernoulliSpec::fair_binary(), 150, seed).unwrap();
        spectrum(&gen, &path, 150, DEFAULT_GAP_THRESHOLD)
            .unwrap()
            .raw_rates
    };
    let parallel: Vec<Vec<f64>> = map_seeds(&seeds, run);
    let sequential: Vec<Vec<f64>> = map_seeds_sequential(&seeds, run);
    assert_eq!(parallel, sequential);
}

#[test]
fn collapsed_rates_serialize_as_explicit_markers() {
    // A rank-deficient letter drives one direction to exact zero; the JSON
    // report must carry the "-inf" marker rather than null or a panic.
    let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0]));
    let gen = GeneratorMap::from_table(vec![d], Some(2.0)).unwrap();
    let path = SamplePath::from_symbols(vec![0; 120]).unwrap();
    let est = spectrum(&gen, &path, 120, DEFAULT_GAP_THRESHOLD).unwrap();
    assert_eq!(est.exponents.last().copied(), Some(f64::NEG_INFINITY));
    let json = serde_json::to_string(&est).unwrap();
    assert!(json.contains("\"-inf\""), "missing marker in {json}");
}

#[test]
fn kingman_reports_round_trip_through_json() {
    let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.0]));
    let gen = GeneratorMap::from_table(vec![d], Some(0.5)).unwrap();
    let path = SamplePath::from_symbols(vec![0; 50]).unwrap();
    let series = build_series(&gen, &path, &SeriesKind::LogOperatorNorm, 50).unwrap();
    let json = serde_json::to_string(&series).unwrap();
    let back: metlab::subadditive::SubadditiveSeries = serde_json::from_str(&json).unwrap();
    assert_eq!(back.values(), series.values());
    let est = metlab::subadditive::kingman_limit(&series, None, 1e-9);
    let json = serde_json::to_string(&est).unwrap();
    let back: metlab::subadditive::KingmanEstimate = serde_json::from_str(&json).unwrap();
    assert_eq!(back.limit, est.limit);
    assert_eq!(back.converged, est.converged);
}
