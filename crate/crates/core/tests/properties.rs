use proptest::prelude::*;
use t2iat::stats::{
    cosine, effect_size, kendall_tau, permutation_p_value, PValueConvention, PermutationConfig,
    PermutationMode,
};
use t2iat::{run_bias_test, EmbeddingRecord, EmbeddingStore, Modality, StoreMetadata};

fn vector(dim: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-1.0f32..1.0, dim).prop_filter("non-zero", |v| v.iter().any(|c| c.abs() > 1e-3))
}

fn samples(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

/// Random store with every bias-test group; neutral sizes are equal so the pool is even.
fn bias_store() -> impl Strategy<Value = EmbeddingStore> {
    (2usize..6, 2usize..8, 2usize..5).prop_flat_map(|(dim, n, m)| {
        prop::collection::vec(vector(dim), 2 * n + 4 * m).prop_map(move |vs| {
            let mut labels = Vec::new();
            for (g, k) in [("X", n), ("Y", n), ("XA", m), ("XB", m), ("YA", m), ("YB", m)] {
                labels.extend(std::iter::repeat_n(g, k));
            }
            let records = vs
                .into_iter()
                .zip(labels)
                .enumerate()
                .map(|(i, (v, g))| EmbeddingRecord::new(format!("r{i}"), g, Modality::Image, v))
                .collect();
            EmbeddingStore::new(dim, records, StoreMetadata::default()).unwrap()
        })
    })
}

fn swap_attributes(store: &EmbeddingStore) -> EmbeddingStore {
    let swap = |g: &str| -> String {
        match g {
            "XA" => "XB",
            "XB" => "XA",
            "YA" => "YB",
            "YB" => "YA",
            other => other,
        }
        .to_string()
    };
    let records = store
        .records()
        .iter()
        .map(|r| EmbeddingRecord::new(r.id.clone(), swap(&r.group), r.modality, r.vector.clone()))
        .collect();
    EmbeddingStore::new(store.dimension(), records, StoreMetadata::default()).unwrap()
}

fn exact() -> PermutationConfig {
    PermutationConfig {
        mode: PermutationMode::Exact,
        ..PermutationConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn swapping_attributes_negates_s_and_d(store in bias_store()) {
        let config = PermutationConfig { runs: 50, ..PermutationConfig::default() };
        let a = run_bias_test(&store, "t", &config, "").unwrap();
        let b = run_bias_test(&swap_attributes(&store), "t", &config, "").unwrap();
        prop_assert!((a.s + b.s).abs() <= 1e-12);
        match (a.d, b.d) {
            (Some(da), Some(db)) => prop_assert!((da + db).abs() <= 1e-9),
            (None, None) => {}
            other => prop_assert!(false, "d defined on one side only: {other:?}"),
        }
        prop_assert_eq!(a.p, b.p);
    }

    #[test]
    fn d_is_scale_invariant(x in samples(2..20), y in samples(2..20), c in 0.01f64..100.0) {
        let base = effect_size(&x, &y);
        let sx: Vec<f64> = x.iter().map(|v| v * c).collect();
        let sy: Vec<f64> = y.iter().map(|v| v * c).collect();
        if let Ok(base) = base {
            let scaled = effect_size(&sx, &sy).unwrap();
            prop_assert!((base.d - scaled.d).abs() <= 1e-9 * base.d.abs().max(1.0));
        }
    }

    #[test]
    fn d_and_exact_p_are_translation_invariant(
        (x, y) in (1usize..7).prop_flat_map(|n| (samples(n..n + 1), samples(n..n + 1))),
        t in -0.5f64..0.5,
    ) {
        let tx: Vec<f64> = x.iter().map(|v| v + t).collect();
        let ty: Vec<f64> = y.iter().map(|v| v + t).collect();
        if let Ok(base) = effect_size(&x, &y) {
            let moved = effect_size(&tx, &ty).unwrap();
            prop_assert!((base.d - moved.d).abs() <= 1e-9 * base.d.abs().max(1.0));
        }
        for convention in [PValueConvention::PaperStrict, PValueConvention::ConservativeGe] {
            let config = PermutationConfig { convention, ..exact() };
            let a = permutation_p_value(&x, &y, &config).unwrap();
            let b = permutation_p_value(&tx, &ty, &config).unwrap();
            prop_assert_eq!(a.p, b.p);
        }
    }

    #[test]
    fn p_is_a_probability(
        (x, y) in (1usize..10).prop_flat_map(|n| (samples(n..n + 1), samples(n..n + 1))),
        runs in 1u64..300,
        seed in any::<u64>(),
    ) {
        for convention in [PValueConvention::PaperStrict, PValueConvention::ConservativeGe] {
            let config = PermutationConfig { runs, seed, convention, ..PermutationConfig::default() };
            let out = permutation_p_value(&x, &y, &config).unwrap();
            prop_assert!((0.0..=1.0).contains(&out.p));
            prop_assert_eq!(out.permutations, runs);
            if convention == PValueConvention::ConservativeGe {
                prop_assert!(out.p >= 1.0 / (runs as f64 + 1.0));
            }
        }
    }

    #[test]
    fn cosine_ignores_positive_scale(
        (u, v) in (1usize..32).prop_flat_map(|d| (vector(d), vector(d))),
        a in 0.01f32..100.0,
        b in 0.01f32..100.0,
    ) {
        let base = cosine(&u, &v).unwrap();
        let su: Vec<f32> = u.iter().map(|c| c * a).collect();
        let sv: Vec<f32> = v.iter().map(|c| c * b).collect();
        prop_assert!((base - cosine(&su, &sv).unwrap()).abs() <= 1e-5);
        prop_assert!((-1.0..=1.0).contains(&base));
    }

    #[test]
    fn kendall_range_and_order(
        pairs in prop::collection::vec((-3i32..3, -3i32..3), 2..40),
        rotate in 0usize..40,
    ) {
        let pairs: Vec<(f64, f64)> = pairs.into_iter().map(|(a, b)| (a as f64, b as f64)).collect();
        let Ok(tau) = kendall_tau(&pairs) else { return Ok(()); };
        prop_assert!((-1.0..=1.0).contains(&tau));
        let mut shuffled = pairs.clone();
        let k = rotate % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        prop_assert_eq!(kendall_tau(&shuffled).unwrap(), tau);
        let flipped: Vec<(f64, f64)> = pairs.iter().map(|&(a, b)| (a, -b)).collect();
        prop_assert!((kendall_tau(&flipped).unwrap() + tau).abs() <= 1e-12);
    }
}
