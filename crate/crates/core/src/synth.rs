//! Synthetic embedding stores with a planted association bias.
//!
//! Two orthogonal unit anchors stand in for the attribute conditions.
//! Attribute images are `normalize(anchor + ε)` and neutral images mix the
//! anchors according to the planted bias β:
//! `normalize((1+β)/2 · u_A + (1−β)/2 · u_B + ε)`, with `ε ~ N(0, σ² I)`.
//!
//! Every vector is drawn from its own ChaCha stream keyed by
//! `(seed, role, index)`, so output never depends on generation order.
//! Attribute-condition vectors are keyed by condition only, so the `XA` and
//! `YA` groups hold the same draws under different ids; with β_x = β_y the
//! X and Y association samples are then exchangeable.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stimuli::GroupLabel;
use crate::store::{EmbeddingRecord, EmbeddingStore, Modality, StoreMetadata};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub dimension: usize,
    pub n_neutral_per_concept: usize,
    pub n_attr_per_condition: usize,
    pub bias_x: f64,
    pub bias_y: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dimension < 2 {
            return Err(Error::Validation("synthetic dimension must be at least 2".into()));
        }
        if self.n_neutral_per_concept < 2 || self.n_attr_per_condition < 2 {
            return Err(Error::Validation("synthetic group sizes must be at least 2".into()));
        }
        check_bias(self.bias_x)?;
        check_bias(self.bias_y)?;
        check_sigma(self.noise_sigma)
    }
}

fn check_bias(b: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&b) {
        return Err(Error::Validation(format!("planted bias {b} is outside [-1, 1]")));
    }
    Ok(())
}

fn check_sigma(s: f64) -> Result<()> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::Validation(format!("noise sigma {s} must be finite and non-negative")));
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum Role {
    Anchor = 0,
    NeutralX = 1,
    NeutralY = 2,
    ConditionA = 3,
    ConditionB = 4,
}

fn stream(role: Role, block: u64, index: u64) -> u64 {
    ((role as u64) << 56) | (block << 32) | index
}

fn gaussian(seed: u64, stream_id: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    v.iter_mut().for_each(|c| *c /= n);
}

/// Two orthonormal anchors drawn from the seed by Gram-Schmidt.
fn anchors(seed: u64, block: u64, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = gaussian(seed, stream(Role::Anchor, block, 0), dim);
    normalize(&mut a);
    let mut b = gaussian(seed, stream(Role::Anchor, block, 1), dim);
    let proj: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    b.iter_mut().zip(&a).for_each(|(y, x)| *y -= proj * x);
    normalize(&mut b);
    (a, b)
}

struct Sampler<'a> {
    seed: u64,
    sigma: f64,
    u_a: &'a [f64],
    u_b: &'a [f64],
}

impl Sampler<'_> {
    /// `normalize(w_a · u_A + w_b · u_B + σ ε)`; a draw landing on the origin
    /// falls back to the noiseless mixture.
    fn draw(&self, stream_id: u64, w_a: f64, w_b: f64) -> Vec<f32> {
        let mut v: Vec<f64> = self
            .u_a
            .iter()
            .zip(self.u_b)
            .map(|(a, b)| w_a * a + w_b * b)
            .collect();
        if self.sigma > 0.0 {
            let eps = gaussian(self.seed, stream_id, v.len());
            v.iter_mut().zip(eps).for_each(|(c, e)| *c += self.sigma * e);
        }
        if v.iter().all(|&c| c == 0.0) {
            v = self.u_a.iter().zip(self.u_b).map(|(a, b)| a + b).collect();
        }
        normalize(&mut v);
        v.into_iter().map(|c| c as f32).collect()
    }
}

fn mix_weights(bias: f64) -> (f64, f64) {
    ((1.0 + bias) / 2.0, (1.0 - bias) / 2.0)
}

fn id_width(n: usize) -> usize {
    n.saturating_sub(1).to_string().len().max(4)
}

/// Builds a normalized store with all six bias-test groups.
pub fn generate_synthetic_store(spec: &SynthSpec) -> Result<EmbeddingStore> {
    spec.validate()?;
    let (u_a, u_b) = anchors(spec.seed, 0, spec.dimension);
    let sampler = Sampler {
        seed: spec.seed,
        sigma: spec.noise_sigma,
        u_a: &u_a,
        u_b: &u_b,
    };
    let mut records = Vec::new();
    let mut push_group = |label: GroupLabel, n: usize, role: Role, (w_a, w_b): (f64, f64)| {
        let width = id_width(n);
        for k in 0..n {
            records.push(EmbeddingRecord::new(
                format!("{label}-{k:0width$}"),
                label.as_str(),
                Modality::Image,
                sampler.draw(stream(role, 0, k as u64), w_a, w_b),
            ));
        }
    };
    let n = spec.n_neutral_per_concept;
    let m = spec.n_attr_per_condition;
    push_group(GroupLabel::X, n, Role::NeutralX, mix_weights(spec.bias_x));
    push_group(GroupLabel::Y, n, Role::NeutralY, mix_weights(spec.bias_y));
    push_group(GroupLabel::XA, m, Role::ConditionA, (1.0, 0.0));
    push_group(GroupLabel::XB, m, Role::ConditionB, (0.0, 1.0));
    push_group(GroupLabel::YA, m, Role::ConditionA, (1.0, 0.0));
    push_group(GroupLabel::YB, m, Role::ConditionB, (0.0, 1.0));

    let metadata = StoreMetadata {
        provider: serde_json::json!({ "name": "synthetic", "spec": spec }),
        catalog_digest: None,
        normalized: true,
    };
    EmbeddingStore::new(spec.dimension, records, metadata)
}

/// One occupation in a synthetic occupation study; positive bias leans male.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOccupation {
    pub name: String,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationSynthSpec {
    pub dimension: usize,
    pub n_per_group: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    pub occupations: Vec<SynthOccupation>,
    #[serde(default = "default_modality")]
    pub modality: Modality,
}

fn default_modality() -> Modality {
    Modality::Image
}

/// Builds `<occupation>/neutral`, `/masculine` and `/feminine` groups per
/// occupation, each occupation with its own anchors.
pub fn generate_occupation_store(spec: &OccupationSynthSpec) -> Result<EmbeddingStore> {
    if spec.dimension < 2 || spec.n_per_group < 2 {
        return Err(Error::Validation(
            "synthetic dimension and group size must be at least 2".into(),
        ));
    }
    if spec.occupations.is_empty() {
        return Err(Error::Empty("synthetic occupation list"));
    }
    check_sigma(spec.noise_sigma)?;
    let width = id_width(spec.n_per_group);
    let mut records = Vec::new();
    for (block, occ) in spec.occupations.iter().enumerate() {
        check_bias(occ.bias)?;
        let block = block as u64 + 1;
        let (u_m, u_f) = anchors(spec.seed, block, spec.dimension);
        let sampler = Sampler {
            seed: spec.seed,
            sigma: spec.noise_sigma,
            u_a: &u_m,
            u_b: &u_f,
        };
        let groups = [
            (OccupationGroup::Neutral, Role::NeutralX, mix_weights(occ.bias)),
            (OccupationGroup::Masculine, Role::ConditionA, (1.0, 0.0)),
            (OccupationGroup::Feminine, Role::ConditionB, (0.0, 1.0)),
        ];
        for (group, role, (w_m, w_f)) in groups {
            let label = group.label(&occ.name);
            for k in 0..spec.n_per_group {
                records.push(EmbeddingRecord::new(
                    format!("{label}-{k:0width$}"),
                    label.clone(),
                    spec.modality,
                    sampler.draw(stream(role, block, k as u64), w_m, w_f),
                ));
            }
        }
    }
    let metadata = StoreMetadata {
        provider: serde_json::json!({ "name": "synthetic-occupations", "spec": spec }),
        catalog_digest: None,
        normalized: true,
    };
    EmbeddingStore::new(spec.dimension, records, metadata)
}

/// The three prompt conditions of an occupation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OccupationGroup {
    Neutral,
    Masculine,
    Feminine,
}

impl OccupationGroup {
    pub fn suffix(self) -> &'static str {
        match self {
            OccupationGroup::Neutral => "neutral",
            OccupationGroup::Masculine => "masculine",
            OccupationGroup::Feminine => "feminine",
        }
    }

    /// Store group label, e.g. `chef/masculine`.
    pub fn label(self, occupation: &str) -> String {
        format!("{occupation}/{}", self.suffix())
    }
}
