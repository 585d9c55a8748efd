//! Occupation gender profiles, text-to-image stereotype amplification and
//! agreement with human ratings.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{association_samples, kendall_tau, sample_values, AssociationSample, KENDALL_VARIANT};
use crate::store::EmbeddingStore;
use crate::synth::OccupationGroup;

/// Quantile by linear interpolation between order statistics at position
/// `(n-1)·q` (R's type 7). `sorted` must be non-empty and ascending.
pub fn quantile_type7(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationProfile {
    pub occupation: String,
    pub samples: Vec<AssociationSample>,
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub n: usize,
}

/// Per-image association of neutral occupation images with the masculine
/// group over the feminine group; positive means male-leaning.
fn occupation_samples(store: &EmbeddingStore, occupation: &str) -> Result<Vec<AssociationSample>> {
    let neutral = store.select_group(&OccupationGroup::Neutral.label(occupation))?;
    let masculine = store.group_vectors(&OccupationGroup::Masculine.label(occupation))?;
    let feminine = store.group_vectors(&OccupationGroup::Feminine.label(occupation))?;
    association_samples(&neutral, &masculine, &feminine, occupation)
}

pub fn occupation_profile(store: &EmbeddingStore, occupation: &str) -> Result<OccupationProfile> {
    let samples = occupation_samples(store, occupation)?;
    let mut sorted = sample_values(&samples);
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    sorted.sort_by(f64::total_cmp);
    Ok(OccupationProfile {
        occupation: occupation.to_string(),
        n: samples.len(),
        mean,
        q1: quantile_type7(&sorted, 0.25),
        median: quantile_type7(&sorted, 0.5),
        q3: quantile_type7(&sorted, 0.75),
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplificationRecord {
    pub occupation: String,
    pub text_assoc: f64,
    pub image_assoc: f64,
    pub amplified: bool,
    pub sign_flip: bool,
}

impl AmplificationRecord {
    /// Derives the flags: amplified iff `|image| > |text|`, sign flip iff
    /// the scores are both nonzero with opposite signs.
    pub fn from_scores(occupation: impl Into<String>, text_assoc: f64, image_assoc: f64) -> Self {
        AmplificationRecord {
            occupation: occupation.into(),
            text_assoc,
            image_assoc,
            amplified: image_assoc.abs() > text_assoc.abs(),
            sign_flip: text_assoc * image_assoc < 0.0,
        }
    }
}

fn mean_association(store: &EmbeddingStore, occupation: &str) -> Result<f64> {
    let values = sample_values(&occupation_samples(store, occupation)?);
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Compares the mean gender association of prompt-text embeddings with that
/// of the generated images. Each store is scored on its own, so the two may
/// have different dimensions.
pub fn amplification(
    text_store: &EmbeddingStore,
    image_store: &EmbeddingStore,
    occupation: &str,
) -> Result<AmplificationRecord> {
    let text_assoc = mean_association(text_store, occupation)?;
    let image_assoc = mean_association(image_store, occupation)?;
    Ok(AmplificationRecord::from_scores(occupation, text_assoc, image_assoc))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineRow {
    pub concept: String,
    pub attribute_pair: String,
    pub machine_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanRow {
    pub concept: String,
    pub attribute_pair: String,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub concept: String,
    pub attribute_pair: String,
    pub machine_score: f64,
    pub human_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanComparison {
    pub rows: Vec<ComparisonRow>,
    pub tau: f64,
    pub tau_variant: String,
}

/// Reads `concept,attribute_pair,fraction` rows (header required).
pub fn read_human_ratings(path: impl AsRef<Path>) -> Result<Vec<HumanRow>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_human_ratings(file, &path.display().to_string())
}

pub fn parse_human_ratings(reader: impl std::io::Read, what: &str) -> Result<Vec<HumanRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::parse(what, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["concept", "attribute_pair", "fraction"] {
        return Err(Error::parse(
            what,
            format!("expected header concept,attribute_pair,fraction, found {}", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut rows = Vec::new();
    let mut keys = HashSet::new();
    for row in rdr.deserialize::<HumanRow>() {
        let row = row.map_err(|e| Error::parse(what, e))?;
        if !(0.0..=1.0).contains(&row.fraction) {
            return Err(Error::Validation(format!(
                "human fraction {} for {:?} / {:?} is outside [0, 1]",
                row.fraction, row.concept, row.attribute_pair
            )));
        }
        if !keys.insert((row.concept.clone(), row.attribute_pair.clone())) {
            return Err(Error::Validation(format!(
                "duplicate human rating for {:?} / {:?}",
                row.concept, row.attribute_pair
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Joins machine scores to human fractions on `(concept, attribute_pair)`
/// and computes Kendall's tau-b over the joined pairs.
pub fn compare_with_humans(machine: &[MachineRow], human: &[HumanRow]) -> Result<HumanComparison> {
    let index: BTreeMap<(&str, &str), f64> = human
        .iter()
        .map(|h| ((h.concept.as_str(), h.attribute_pair.as_str()), h.fraction))
        .collect();
    let rows = machine
        .iter()
        .map(|m| {
            let fraction = index
                .get(&(m.concept.as_str(), m.attribute_pair.as_str()))
                .copied()
                .ok_or_else(|| {
                    Error::Validation(format!(
                        "no human rating for {:?} / {:?}",
                        m.concept, m.attribute_pair
                    ))
                })?;
            Ok(ComparisonRow {
                concept: m.concept.clone(),
                attribute_pair: m.attribute_pair.clone(),
                machine_score: m.machine_score,
                human_fraction: fraction,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.machine_score, r.human_fraction)).collect();
    Ok(HumanComparison {
        tau: kendall_tau(&pairs)?,
        tau_variant: KENDALL_VARIANT.to_string(),
        rows,
    })
}

pub fn human_comparison(machine: &[MachineRow], human_file: impl AsRef<Path>) -> Result<HumanComparison> {
    compare_with_humans(machine, &read_human_ratings(human_file)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{EmbeddingRecord, Modality};

    #[test]
    fn quartiles_one_to_five() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_type7(&v, 0.25), 2.0);
        assert_eq!(quantile_type7(&v, 0.5), 3.0);
        assert_eq!(quantile_type7(&v, 0.75), 4.0);
        assert_eq!(quantile_type7(&[1.0, 2.0], 0.25), 1.25);
        assert_eq!(quantile_type7(&[7.0], 0.75), 7.0);
    }

    #[test]
    fn amplification_flags() {
        let r = AmplificationRecord::from_scores("computer programmer", -0.0039, 0.0186);
        assert!(r.amplified && r.sign_flip);
        let r = AmplificationRecord::from_scores("chef", 0.01, 0.01);
        assert!(!r.amplified && !r.sign_flip);
        let r = AmplificationRecord::from_scores("x", 0.0, -0.2);
        assert!(r.amplified && !r.sign_flip);
    }

    #[test]
    fn identical_gender_groups_give_zero() {
        let mut records = Vec::new();
        for (k, v) in [[1.0f32, 0.2, 0.0], [0.3, 1.0, 0.1]].iter().enumerate() {
            records.push(EmbeddingRecord::new(format!("n{k}"), "chef/neutral", Modality::Image, v.to_vec()));
        }
        for g in ["chef/masculine", "chef/feminine"] {
            for (k, v) in [[0.0f32, 1.0, 0.0], [0.5, 0.5, 0.5]].iter().enumerate() {
                records.push(EmbeddingRecord::new(format!("{g}{k}"), g, Modality::Image, v.to_vec()));
            }
        }
        let store = EmbeddingStore::new(3, records, Default::default()).unwrap();
        let p = occupation_profile(&store, "chef").unwrap();
        assert!(p.samples.iter().all(|s| s.value == 0.0));
        assert_eq!(p.mean, 0.0);
        let a = amplification(&store, &store, "chef").unwrap();
        assert_eq!((a.text_assoc, a.image_assoc, a.amplified), (0.0, 0.0, false));
        assert!(matches!(occupation_profile(&store, "nurse"), Err(Error::UnknownGroup { .. })));
    }

    #[test]
    fn human_rows_validate() {
        let good = "concept,attribute_pair,fraction\nFlowers,Pleasant vs Unpleasant,1.00\n";
        assert_eq!(parse_human_ratings(good.as_bytes(), "t").unwrap().len(), 1);
        let bad = "concept,attribute_pair,fraction\nFlowers,Pleasant vs Unpleasant,1.3\n";
        assert!(matches!(parse_human_ratings(bad.as_bytes(), "t"), Err(Error::Validation(_))));
        let header = "a,b,c\nFlowers,P,0.5\n";
        assert!(matches!(parse_human_ratings(header.as_bytes(), "t"), Err(Error::Parse { .. })));
    }

    #[test]
    fn unmatched_machine_row_errors() {
        let human = vec![HumanRow { concept: "A".into(), attribute_pair: "p".into(), fraction: 0.5 }];
        let machine = vec![MachineRow { concept: "B".into(), attribute_pair: "p".into(), machine_score: 0.1 }];
        assert!(compare_with_humans(&machine, &human).is_err());
    }
}
