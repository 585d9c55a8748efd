//! Association statistics: per-image association scores, differential
//! association, permutation p-values, Cohen's d and Kendall's tau-b.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stimuli::GroupLabel;
use crate::store::{EmbeddingRecord, EmbeddingStore};

/// Default number of random splits in sampled mode.
pub const DEFAULT_PERMUTATIONS: u64 = 1000;
/// Default ceiling on `C(n, n/2)` for exact enumeration.
pub const DEFAULT_ENUMERATION_CAP: u64 = 2_000_000;

fn dot(u: &[f32], v: &[f32]) -> f64 {
    u.iter().zip(v).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum()
}

fn norm(u: &[f32]) -> f64 {
    dot(u, u).sqrt()
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            id: None,
            expected: u.len(),
            found: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector("cosine argument".into()));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Precomputed attribute pair for scoring many neutral vectors.
///
/// The mean cosine of `x` against a group equals `x̂ · mean(â)`, so each
/// group collapses to the centroid of its unit vectors.
#[derive(Debug, Clone)]
pub struct AttributeContrast {
    centroid_a: Vec<f64>,
    centroid_b: Vec<f64>,
}

fn unit_centroid(what: &'static str, group: &[&[f32]]) -> Result<Vec<f64>> {
    let first = group.first().ok_or(Error::Empty(what))?;
    let dim = first.len();
    let mut acc = vec![0.0f64; dim];
    for v in group {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                id: None,
                expected: dim,
                found: v.len(),
            });
        }
        let n = norm(v);
        if n == 0.0 {
            return Err(Error::ZeroVector(format!("member of {what}")));
        }
        for (a, &c) in acc.iter_mut().zip(v.iter()) {
            *a += f64::from(c) / n;
        }
    }
    let len = group.len() as f64;
    acc.iter_mut().for_each(|a| *a /= len);
    Ok(acc)
}

impl AttributeContrast {
    pub fn new(group_a: &[&[f32]], group_b: &[&[f32]]) -> Result<Self> {
        let centroid_a = unit_centroid("attribute group A", group_a)?;
        let centroid_b = unit_centroid("attribute group B", group_b)?;
        if centroid_a.len() != centroid_b.len() {
            return Err(Error::DimensionMismatch {
                id: None,
                expected: centroid_a.len(),
                found: centroid_b.len(),
            });
        }
        Ok(AttributeContrast {
            centroid_a,
            centroid_b,
        })
    }

    pub fn dimension(&self) -> usize {
        self.centroid_a.len()
    }

    /// Mean cosine of `x` to group A minus mean cosine to group B.
    pub fn score(&self, x: &[f32]) -> Result<f64> {
        if x.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                id: None,
                expected: self.dimension(),
                found: x.len(),
            });
        }
        let n = norm(x);
        if n == 0.0 {
            return Err(Error::ZeroVector("neutral vector".into()));
        }
        let project = |c: &[f64]| {
            let s: f64 = x.iter().zip(c).map(|(&a, &b)| f64::from(a) * b).sum();
            (s / n).clamp(-1.0, 1.0)
        };
        Ok(project(&self.centroid_a) - project(&self.centroid_b))
    }
}

/// Association of one vector with attribute group A over group B.
pub fn association_score(x: &[f32], group_a: &[&[f32]], group_b: &[&[f32]]) -> Result<f64> {
    AttributeContrast::new(group_a, group_b)?.score(x)
}

/// Association score of one neutral image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationSample {
    pub source_id: String,
    pub value: f64,
    pub concept: String,
}

/// One sample per neutral record, in input order.
pub fn association_samples(
    neutral: &[&EmbeddingRecord],
    group_a: &[&[f32]],
    group_b: &[&[f32]],
    concept: &str,
) -> Result<Vec<AssociationSample>> {
    if neutral.is_empty() {
        return Err(Error::Empty("neutral group"));
    }
    let contrast = AttributeContrast::new(group_a, group_b)?;
    neutral
        .iter()
        .map(|r| {
            Ok(AssociationSample {
                source_id: r.id.clone(),
                value: contrast.score(&r.vector)?,
                concept: concept.to_string(),
            })
        })
        .collect()
}

pub fn sample_values(samples: &[AssociationSample]) -> Vec<f64> {
    samples.iter().map(|s| s.value).collect()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean of `samples_x` minus mean of `samples_y`.
pub fn differential_association(samples_x: &[f64], samples_y: &[f64]) -> Result<f64> {
    if samples_x.is_empty() || samples_y.is_empty() {
        return Err(Error::Empty("association sample list"));
    }
    Ok(mean(samples_x) - mean(samples_y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationMode {
    /// Random equal-size splits, each seeded from `(seed, index)`.
    #[default]
    Sampled,
    /// Every one of the `C(n, n/2)` labeled splits.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueConvention {
    /// Fraction of splits with `|S̃| > |S|`; may be zero.
    PaperStrict,
    /// `(#{|S̃| >= |S|} + 1) / (runs + 1)`; never zero.
    #[default]
    ConservativeGe,
}

impl fmt::Display for PValueConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PValueConvention::PaperStrict => "paper_strict",
            PValueConvention::ConservativeGe => "conservative_ge",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationConfig {
    pub runs: u64,
    pub seed: u64,
    pub mode: PermutationMode,
    pub convention: PValueConvention,
    pub enumeration_cap: u64,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        PermutationConfig {
            runs: DEFAULT_PERMUTATIONS,
            seed: 0,
            mode: PermutationMode::Sampled,
            convention: PValueConvention::ConservativeGe,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermutationOutcome {
    pub p: f64,
    pub p_display: String,
    /// Splits counted against the observed statistic under the chosen convention.
    pub exceedances: u64,
    /// Splits evaluated: `runs` when sampled, `C(n, n/2)` when exact.
    pub permutations: u64,
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul(u128::from(n - i)) {
            Some(v) => v / u128::from(i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Display bound for a zero count: `<1e-k` for powers of ten, `<1/N` otherwise.
pub fn bound_display(denominator: u64) -> String {
    let mut k = 0;
    let mut d = denominator;
    while d >= 10 && d.is_multiple_of(10) {
        d /= 10;
        k += 1;
    }
    if d == 1 && k > 0 {
        format!("<1e-{k}")
    } else {
        format!("<1/{denominator}")
    }
}

/// Absolute slack for comparing split statistics against the observed one,
/// covering summation roundoff so mathematically tied splits compare equal.
pub fn tie_tolerance(pool: &[f64]) -> f64 {
    let max_abs = pool.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    8.0 * pool.len() as f64 * f64::EPSILON * max_abs
}

struct Counter {
    observed: f64,
    tol: f64,
    convention: PValueConvention,
}

impl Counter {
    fn counts(&self, split_stat: f64) -> bool {
        let s = split_stat.abs();
        match self.convention {
            PValueConvention::PaperStrict => s > self.observed + self.tol,
            PValueConvention::ConservativeGe => s >= self.observed - self.tol,
        }
    }
}

/// Two-sample permutation test on the pooled association values.
///
/// The pool is split into two halves of equal size; for each split the
/// difference of half means is compared in absolute value against the
/// observed differential association.
pub fn permutation_p_value(
    samples_x: &[f64],
    samples_y: &[f64],
    config: &PermutationConfig,
) -> Result<PermutationOutcome> {
    let observed = differential_association(samples_x, samples_y)?.abs();
    let pool: Vec<f64> = samples_x.iter().chain(samples_y).copied().collect();
    let n = pool.len();
    if !n.is_multiple_of(2) {
        return Err(Error::OddPool(n));
    }
    let half = n / 2;
    let total: f64 = pool.iter().sum();
    let counter = Counter {
        observed,
        tol: tie_tolerance(&pool),
        convention: config.convention,
    };
    let split_stat = |chosen: f64| (2.0 * chosen - total) / half as f64;

    let (count, permutations) = match config.mode {
        PermutationMode::Sampled => {
            if config.runs == 0 {
                return Err(Error::Validation("permutation runs must be at least 1".into()));
            }
            let count = (0..config.runs)
                .into_par_iter()
                .map_init(
                    || vec![0usize; n],
                    |scratch, index| {
                        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                        rng.set_stream(index);
                        for (i, s) in scratch.iter_mut().enumerate() {
                            *s = i;
                        }
                        for j in 0..half {
                            let k = rng.random_range(j..n);
                            scratch.swap(j, k);
                        }
                        let chosen: f64 = scratch[..half].iter().map(|&i| pool[i]).sum();
                        counter.counts(split_stat(chosen)) as u64
                    },
                )
                .sum::<u64>();
            (count, config.runs)
        }
        PermutationMode::Exact => {
            let splits = binomial(n as u64, half as u64);
            if splits > u128::from(config.enumeration_cap) {
                return Err(Error::EnumerationCap {
                    splits,
                    cap: config.enumeration_cap,
                });
            }
            let mut count = 0u64;
            let mut idx: Vec<usize> = (0..half).collect();
            loop {
                let chosen: f64 = idx.iter().map(|&i| pool[i]).sum();
                count += counter.counts(split_stat(chosen)) as u64;
                // Advance to the next k-combination in lexicographic order.
                let Some(pos) = (0..half).rev().find(|&p| idx[p] < n - half + p) else {
                    break;
                };
                idx[pos] += 1;
                for q in pos + 1..half {
                    idx[q] = idx[q - 1] + 1;
                }
            }
            (count, splits as u64)
        }
    };

    let observed_is_enumerated = samples_x.len() == samples_y.len();
    let p = match (config.convention, config.mode) {
        (PValueConvention::PaperStrict, _) => count as f64 / permutations as f64,
        // The enumeration already contains the observed labeling, which plays
        // the role of the added one.
        (PValueConvention::ConservativeGe, PermutationMode::Exact) if observed_is_enumerated => {
            count as f64 / permutations as f64
        }
        (PValueConvention::ConservativeGe, _) => (count + 1) as f64 / (permutations + 1) as f64,
    };
    let p_display = if count == 0 && config.convention == PValueConvention::PaperStrict {
        bound_display(permutations)
    } else {
        format!("{p}")
    };
    Ok(PermutationOutcome {
        p,
        p_display,
        exceedances: count,
        permutations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectSize {
    pub d: f64,
    pub pooled_sd: f64,
}

fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

/// Cohen's d with the classical pooled standard deviation (n-1 denominators).
pub fn effect_size(samples_x: &[f64], samples_y: &[f64]) -> Result<EffectSize> {
    let (nx, ny) = (samples_x.len(), samples_y.len());
    if nx < 2 || ny < 2 {
        return Err(Error::TooFewSamples { n_x: nx, n_y: ny });
    }
    let constant = |v: &[f64]| v.iter().all(|&s| s == v[0]);
    if constant(samples_x) && constant(samples_y) {
        return Err(Error::DegenerateVariance);
    }
    let pooled_var = ((nx - 1) as f64 * sample_variance(samples_x)
        + (ny - 1) as f64 * sample_variance(samples_y))
        / (nx + ny - 2) as f64;
    let pooled_sd = pooled_var.sqrt();
    if pooled_sd == 0.0 || !pooled_sd.is_finite() {
        return Err(Error::DegenerateVariance);
    }
    Ok(EffectSize {
        d: (mean(samples_x) - mean(samples_y)) / pooled_sd,
        pooled_sd,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectClass {
    Negligible,
    Small,
    Medium,
    Large,
}

impl fmt::Display for EffectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EffectClass::Negligible => "negligible",
            EffectClass::Small => "small",
            EffectClass::Medium => "medium",
            EffectClass::Large => "large",
        })
    }
}

/// Cohen's buckets on `|d|`: 0.2 small, 0.5 medium, 0.8 large.
pub fn classify_effect(d: f64) -> EffectClass {
    let a = d.abs();
    if a >= 0.8 {
        EffectClass::Large
    } else if a >= 0.5 {
        EffectClass::Medium
    } else if a >= 0.2 {
        EffectClass::Small
    } else {
        EffectClass::Negligible
    }
}

/// Result of one bias test. Serializes to the report JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasTestResult {
    pub test: String,
    #[serde(rename = "S")]
    pub s: f64,
    pub p: f64,
    pub p_display: String,
    /// `None` when the pooled standard deviation is zero.
    pub d: Option<f64>,
    pub effect_class: Option<EffectClass>,
    pub pooled_sd: f64,
    pub mean_x: f64,
    pub mean_y: f64,
    pub n_x: usize,
    pub n_y: usize,
    pub permutations: u64,
    pub mode: PermutationMode,
    pub convention: PValueConvention,
    pub seed: u64,
    pub config_digest: String,
}

/// Runs the full test on a store holding groups X, Y, XA, XB, YA, YB.
///
/// Each neutral X image is scored against (XA, XB) and each neutral Y image
/// against (YA, YB); the scores feed S, the permutation test and d.
pub fn run_bias_test(
    store: &EmbeddingStore,
    test_name: &str,
    permutation: &PermutationConfig,
    config_digest: &str,
) -> Result<BiasTestResult> {
    let group = |label: GroupLabel| store.group_vectors(label.as_str());
    let xa = group(GroupLabel::XA)?;
    let xb = group(GroupLabel::XB)?;
    let ya = group(GroupLabel::YA)?;
    let yb = group(GroupLabel::YB)?;
    let x = store.select_group(GroupLabel::X.as_str())?;
    let y = store.select_group(GroupLabel::Y.as_str())?;

    let sx = sample_values(&association_samples(&x, &xa, &xb, "X")?);
    let sy = sample_values(&association_samples(&y, &ya, &yb, "Y")?);

    let s = differential_association(&sx, &sy)?;
    let perm = permutation_p_value(&sx, &sy, permutation)?;
    let (d, pooled_sd) = match effect_size(&sx, &sy) {
        Ok(e) => (Some(e.d), e.pooled_sd),
        Err(Error::DegenerateVariance) => (None, 0.0),
        Err(e) => return Err(e),
    };
    Ok(BiasTestResult {
        test: test_name.to_string(),
        s,
        p: perm.p,
        p_display: perm.p_display,
        d,
        effect_class: d.map(classify_effect),
        pooled_sd,
        mean_x: mean(&sx),
        mean_y: mean(&sy),
        n_x: sx.len(),
        n_y: sy.len(),
        permutations: perm.permutations,
        mode: permutation.mode,
        convention: permutation.convention,
        seed: permutation.seed,
        config_digest: config_digest.to_string(),
    })
}

/// Name of the Kendall variant computed by [`kendall_tau`], recorded in reports.
pub const KENDALL_VARIANT: &str = "tau_b";

fn count_tied_runs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Stable merge sort returning the number of strict inversions.
fn sort_counting_swaps(values: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = values.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_counting_swaps(&mut values[..mid], &mut buf[..mid])
        + sort_counting_swaps(&mut values[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if values[j] < values[i] {
            buf[k] = values[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = values[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&values[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&values[j..n]);
    values.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall's tau-b between the two coordinates of `pairs`, in O(n log n)
/// (Knight's algorithm).
pub fn kendall_tau(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(Error::UndefinedTau("need at least 2 pairs"));
    }
    if pairs.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(Error::Validation("kendall tau inputs must be finite".into()));
    }
    // `+ 0.0` folds -0.0 into 0.0 so total_cmp agrees with ==.
    let mut sorted: Vec<(f64, f64)> = pairs.iter().map(|&(a, b)| (a + 0.0, b + 0.0)).collect();
    sorted.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));

    let n = sorted.len() as u64;
    let n0 = n * (n - 1) / 2;
    let xs: Vec<f64> = sorted.iter().map(|p| p.0).collect();
    let tied_x = count_tied_runs(&xs);
    let tied_xy = count_tied_runs(&sorted);

    let mut ys: Vec<f64> = sorted.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; ys.len()];
    let swaps = sort_counting_swaps(&mut ys, &mut buf);
    let tied_y = count_tied_runs(&ys);

    let (nx, ny) = (n0 - tied_x, n0 - tied_y);
    if nx == 0 || ny == 0 {
        return Err(Error::UndefinedTau("one ranking is entirely tied"));
    }
    let numerator = n0 as i128 - tied_x as i128 - tied_y as i128 + tied_xy as i128 - 2 * swaps as i128;
    Ok(numerator as f64 / ((nx as f64) * (ny as f64)).sqrt())
}
