//! Text-to-image association testing.
//!
//! Measures how strongly images generated for two target concepts (say,
//! science and arts) associate with two attributes (male and female) in an
//! embedding space. The pipeline:
//!
//! 1. [`stimuli`] expands a stimulus catalog and template into the six prompt
//!    groups `X, Y, XA, XB, YA, YB`.
//! 2. An external provider renders and embeds the prompts into a
//!    [`store::EmbeddingStore`] (or [`synth`] fabricates one with a known bias).
//! 3. [`stats::run_bias_test`] scores every neutral image, then reports the
//!    differential association S, a permutation p-value and Cohen's d.
//! 4. [`studies`] covers occupation profiles, stereotype amplification from
//!    text to images, and agreement with human ratings.

pub mod digest;
pub mod error;
pub mod stats;
pub mod stimuli;
pub mod store;
pub mod studies;
pub mod synth;

pub use error::{Error, Result};
pub use stats::{
    association_samples, association_score, classify_effect, cosine, differential_association,
    effect_size, kendall_tau, permutation_p_value, run_bias_test, AssociationSample,
    AttributeContrast, BiasTestResult, EffectClass, EffectSize, PValueConvention,
    PermutationConfig, PermutationMode, PermutationOutcome,
};
pub use stimuli::{build_prompt_set, load_catalog, GroupLabel, PromptSet, PromptTemplate, StimulusCatalog, TestConfig};
pub use store::{normalize_store, read_store, write_store, EmbeddingRecord, EmbeddingStore, Modality, StoreMetadata};
pub use studies::{amplification, human_comparison, occupation_profile, AmplificationRecord, HumanComparison, OccupationProfile};
pub use synth::{generate_occupation_store, generate_synthetic_store, OccupationSynthSpec, SynthSpec};
