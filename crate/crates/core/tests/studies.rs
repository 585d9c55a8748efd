use std::path::PathBuf;

use t2iat::studies::{compare_with_humans, parse_human_ratings, quantile_type7, read_human_ratings, MachineRow};
use t2iat::synth::{OccupationGroup, SynthOccupation};
use t2iat::{amplification, generate_occupation_store, occupation_profile, EmbeddingRecord, EmbeddingStore, Modality, OccupationSynthSpec};

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/human_eva.csv")
}

fn occupations(biases: &[(&str, f64)], seed: u64, modality: Modality) -> EmbeddingStore {
    generate_occupation_store(&OccupationSynthSpec {
        dimension: 48,
        n_per_group: 40,
        noise_sigma: 0.1,
        seed,
        occupations: biases
            .iter()
            .map(|(n, b)| SynthOccupation { name: n.to_string(), bias: *b })
            .collect(),
        modality,
    })
    .unwrap()
}

fn swap_gender(store: &EmbeddingStore) -> EmbeddingStore {
    let records = store
        .records()
        .iter()
        .map(|r| {
            let group = if let Some(o) = r.group.strip_suffix("/masculine") {
                OccupationGroup::Feminine.label(o)
            } else if let Some(o) = r.group.strip_suffix("/feminine") {
                OccupationGroup::Masculine.label(o)
            } else {
                r.group.clone()
            };
            EmbeddingRecord::new(r.id.clone(), group, r.modality, r.vector.clone())
        })
        .collect();
    EmbeddingStore::new(store.dimension(), records, Default::default()).unwrap()
}

#[test]
fn planted_occupations_lean_as_planted() {
    let store = occupations(&[("chef", 0.5), ("librarian", -0.5), ("chemist", 0.0)], 3, Modality::Image);
    let chef = occupation_profile(&store, "chef").unwrap();
    let librarian = occupation_profile(&store, "librarian").unwrap();
    assert!(chef.mean > 0.0);
    assert!(librarian.mean < 0.0);
    assert_eq!(chef.n, 40);
    assert!(chef.q1 <= chef.median && chef.median <= chef.q3);
}

#[test]
fn gender_swap_reflects_profile() {
    let store = occupations(&[("announcer", 0.3)], 8, Modality::Image);
    let a = occupation_profile(&store, "announcer").unwrap();
    let b = occupation_profile(&swap_gender(&store), "announcer").unwrap();
    assert!((a.mean + b.mean).abs() < 1e-12);
    assert!((a.q1 + b.q3).abs() < 1e-12);
    assert!((a.median + b.median).abs() < 1e-12);
    assert!((a.q3 + b.q1).abs() < 1e-12);
}

#[test]
fn quartiles_match_type7() {
    let v = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(quantile_type7(&v, 0.25), 1.75);
    assert_eq!(quantile_type7(&v, 0.5), 2.5);
    assert_eq!(quantile_type7(&v, 0.75), 3.25);
    assert_eq!(quantile_type7(&[5.0], 0.25), 5.0);
}

#[test]
fn amplification_flags() {
    let text = occupations(&[("pharmacist", 0.1)], 1, Modality::Text);
    let image = occupations(&[("pharmacist", 0.6)], 2, Modality::Image);
    let r = amplification(&text, &image, "pharmacist").unwrap();
    assert!(r.text_assoc > 0.0);
    assert!(r.image_assoc > r.text_assoc);
    assert!(r.amplified);
    assert!(!r.sign_flip);

    let flipped = amplification(&swap_gender(&text), &image, "pharmacist").unwrap();
    assert!(flipped.sign_flip);
}

#[test]
fn human_fixture_rank_agreement() {
    let human = read_human_ratings(fixture()).unwrap();
    assert_eq!(human.len(), 8);
    let same: Vec<MachineRow> = human
        .iter()
        .map(|h| MachineRow {
            concept: h.concept.clone(),
            attribute_pair: h.attribute_pair.clone(),
            machine_score: h.fraction,
        })
        .collect();
    assert_eq!(compare_with_humans(&same, &human).unwrap().tau, 1.0);
    let reversed: Vec<MachineRow> = same
        .iter()
        .map(|m| MachineRow { machine_score: -m.machine_score, ..m.clone() })
        .collect();
    assert_eq!(compare_with_humans(&reversed, &human).unwrap().tau, -1.0);

    let shifted: Vec<MachineRow> = same
        .iter()
        .enumerate()
        .map(|(i, m)| MachineRow { machine_score: (i % 3) as f64, ..m.clone() })
        .collect();
    let tau = compare_with_humans(&shifted, &human).unwrap().tau;
    assert!((-1.0..=1.0).contains(&tau));
}

#[test]
fn human_ratings_are_validated() {
    let parse = |s: &str| parse_human_ratings(s.as_bytes(), "test");
    assert!(parse("concept,attribute_pair,fraction\nFlowers,Pleasant vs Unpleasant,1.3\n").is_err());
    assert!(parse("concept,attribute_pair,fraction\nFlowers,Pleasant vs Unpleasant,-0.1\n").is_err());
    assert!(parse("Flowers,Pleasant vs Unpleasant,0.5\n").is_err());
    assert!(parse(
        "concept,attribute_pair,fraction\nFlowers,Pleasant vs Unpleasant,0.5\nFlowers,Pleasant vs Unpleasant,0.6\n"
    )
    .is_err());
    let missing = [MachineRow { concept: "Gay".into(), attribute_pair: "Pleasant vs Unpleasant".into(), machine_score: 0.1 }];
    assert!(compare_with_humans(&missing, &read_human_ratings(fixture()).unwrap()).is_err());
}
