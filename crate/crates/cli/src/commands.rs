use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use t2iat::digest::sha256_json;
use t2iat::stats::{PermutationConfig, DEFAULT_ENUMERATION_CAP, DEFAULT_PERMUTATIONS};
use t2iat::studies::{compare_with_humans, read_human_ratings, MachineRow};
use t2iat::synth::{OccupationGroup, OccupationSynthSpec};
use t2iat::{
    amplification, build_prompt_set, generate_occupation_store, generate_synthetic_store,
    occupation_profile, read_store, run_bias_test, write_store, BiasTestResult, Error,
    GroupLabel, PValueConvention, Result, StimulusCatalog, SynthSpec,
};

use crate::config::{RunConfig, SynthSection, TestSpec};

/// Flags shared by every subcommand.
pub struct Options {
    pub seed: u64,
    pub paper_convention: bool,
    pub permutations: Option<u64>,
    pub out: PathBuf,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::parse("report", e))?;
    text.push('\n');
    write_text(path, &text)
}

/// Quotes a CSV field when it contains a delimiter, quote or newline.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn permutation_config(cfg: &RunConfig, opts: &Options) -> PermutationConfig {
    PermutationConfig {
        runs: opts.permutations.or(cfg.permutations).unwrap_or(DEFAULT_PERMUTATIONS),
        seed: opts.seed,
        mode: cfg.permutation_mode,
        convention: if opts.paper_convention {
            PValueConvention::PaperStrict
        } else {
            PValueConvention::ConservativeGe
        },
        enumeration_cap: cfg.enumeration_cap.unwrap_or(DEFAULT_ENUMERATION_CAP),
    }
}

/// Digest of everything that determines a test's numbers apart from the
/// embeddings and the seed.
fn test_digest(spec: &TestSpec, catalog: &StimulusCatalog, perm: &PermutationConfig) -> String {
    sha256_json(&json!({
        "test": spec.test,
        "catalog_digest": catalog.digest(),
        "permutations": perm.runs,
        "mode": perm.mode,
        "convention": perm.convention,
        "enumeration_cap": perm.enumeration_cap,
    }))
}

#[derive(Serialize)]
struct PromptEntry<'a> {
    id: String,
    text: &'a str,
    stimulus: &'a str,
    modifier: Option<&'a str>,
}

pub fn build_prompts(cfg: &RunConfig, opts: &Options) -> Result<()> {
    let catalog = cfg.catalog()?;
    let mut tests = Vec::new();
    for spec in cfg.test_specs() {
        let set = build_prompt_set(&catalog, &spec.test)?;
        let mut groups = BTreeMap::new();
        for label in GroupLabel::ALL {
            let prompts = set.group(label);
            let width = prompts.len().saturating_sub(1).to_string().len().max(4);
            let entries: Vec<PromptEntry<'_>> = prompts
                .iter()
                .enumerate()
                .map(|(k, p)| PromptEntry {
                    id: format!("{}/{label}/{k:0width$}", set.test_name),
                    text: &p.text,
                    stimulus: p.stimulus.as_str(),
                    modifier: p.modifier.as_ref().map(|m| m.as_str()),
                })
                .collect();
            groups.insert(label.as_str(), serde_json::to_value(entries).expect("prompt entries serialize"));
        }
        tests.push(json!({
            "test": spec.test.name,
            "concept_x": spec.test.concept_x,
            "concept_y": spec.test.concept_y,
            "attribute_a": spec.test.attribute_a,
            "attribute_b": spec.test.attribute_b,
            "config_digest": sha256_json(&spec.test),
            "groups": groups,
        }));
    }

    let mut occupations = Vec::new();
    if let Some(occ) = &cfg.occupations {
        for name in &occ.names {
            let mut groups = BTreeMap::new();
            for (group, pattern) in [
                (OccupationGroup::Neutral, &occ.neutral_pattern),
                (OccupationGroup::Masculine, &occ.masculine_pattern),
                (OccupationGroup::Feminine, &occ.feminine_pattern),
            ] {
                let label = group.label(name);
                groups.insert(
                    label.clone(),
                    json!([{ "id": format!("{label}/0000"), "text": pattern.replace("{occupation}", name) }]),
                );
            }
            occupations.push(json!({ "occupation": name, "groups": groups }));
        }
    }
    if tests.is_empty() && occupations.is_empty() {
        return Err(Error::Validation("config defines no tests or occupations to build prompts for".into()));
    }

    let manifest = json!({
        "format": "T2AT-prompts",
        "version": 1,
        "seed": opts.seed,
        "catalog_digest": catalog.digest(),
        "tests": tests,
        "occupations": occupations,
    });
    write_json(&opts.out.join("prompts.json"), &manifest)
}

pub fn synth(cfg: &RunConfig, opts: &Options) -> Result<()> {
    let section = cfg
        .synth
        .as_ref()
        .ok_or_else(|| Error::Validation("config has no synth section".into()))?;
    let store = match section {
        SynthSection::BiasTest(s) => generate_synthetic_store(&SynthSpec {
            dimension: s.dimension,
            n_neutral_per_concept: s.n_neutral_per_concept,
            n_attr_per_condition: s.n_attr_per_condition,
            bias_x: s.bias_x,
            bias_y: s.bias_y,
            noise_sigma: s.noise_sigma,
            seed: opts.seed,
        })?,
        SynthSection::Occupations(s) => generate_occupation_store(&OccupationSynthSpec {
            dimension: s.dimension,
            n_per_group: s.n_per_group,
            noise_sigma: s.noise_sigma,
            seed: opts.seed,
            occupations: s.occupations.clone(),
            modality: s.modality,
        })?,
    };
    write_store(&store, &opts.out)?;
    // Re-read so the exit status certifies a valid store on disk.
    read_store(&opts.out).map(|_| ())
}

/// Validates every named store and writes `validation.json`. Returns an
/// error after writing the report if any store failed.
pub fn validate_stores(stores: &[PathBuf], opts: &Options) -> Result<()> {
    if stores.is_empty() {
        return Err(Error::Validation("no stores to validate".into()));
    }
    let mut reports = Vec::new();
    let mut first_error = None;
    for path in stores {
        match read_store(path) {
            Ok(store) => reports.push(json!({
                "path": path,
                "ok": true,
                "dimension": store.dimension(),
                "count": store.len(),
                "normalized": store.metadata().normalized,
                "groups": store.groups(),
            })),
            Err(e) => {
                reports.push(json!({ "path": path, "ok": false, "error": e.to_string() }));
                first_error.get_or_insert(e);
            }
        }
    }
    write_json(&opts.out.join("validation.json"), &json!({ "stores": reports }))?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

pub fn stores_in_config(cfg: &RunConfig) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = Vec::new();
    let mut push = |p: &Path| {
        if !out.iter().any(|q| q == p) {
            out.push(p.to_path_buf());
        }
    };
    if let Some(p) = &cfg.store {
        push(p);
    }
    for spec in cfg.test_specs() {
        if let Some(p) = &spec.store {
            push(p);
        }
    }
    if let Some(occ) = &cfg.occupations {
        occ.store.as_deref().map(&mut push);
        occ.text_store.as_deref().map(&mut push);
    }
    out
}

fn run_tests(cfg: &RunConfig, opts: &Options) -> Result<Vec<(TestSpec, BiasTestResult)>> {
    let catalog = cfg.catalog()?;
    let perm = permutation_config(cfg, opts);
    let mut results = Vec::new();
    for spec in cfg.test_specs() {
        build_prompt_set(&catalog, &spec.test)?;
        let store = read_store(cfg.store_for(spec)?)?;
        let digest = test_digest(spec, &catalog, &perm);
        let result = run_bias_test(&store, &spec.test.name, &perm, &digest)?;
        results.push((spec.clone(), result));
    }
    if results.is_empty() {
        return Err(Error::Validation("config defines no tests".into()));
    }
    Ok(results)
}

pub fn run_test(cfg: &RunConfig, opts: &Options) -> Result<()> {
    let results = run_tests(cfg, opts)?;
    let mut csv = String::from("test,concept_x,concept_y,attribute_a,attribute_b,S,p_display,d,effect_class\n");
    for (spec, r) in &results {
        write_json(&opts.out.join(format!("{}.json", r.test)), r)?;
        let t = &spec.test;
        let fields = [
            csv_field(&t.name),
            csv_field(&t.concept_x),
            csv_field(&t.concept_y),
            csv_field(&t.attribute_a),
            csv_field(&t.attribute_b),
            r.s.to_string(),
            csv_field(&r.p_display),
            r.d.map(|d| d.to_string()).unwrap_or_default(),
            r.effect_class.map(|c| c.to_string()).unwrap_or_default(),
        ];
        csv.push_str(&fields.join(","));
        csv.push('\n');
    }
    write_text(&opts.out.join("results.csv"), &csv)
}

fn occupation_names(cfg: &RunConfig) -> Result<&crate::config::OccupationSection> {
    let occ = cfg
        .occupations
        .as_ref()
        .ok_or_else(|| Error::Validation("config has no occupations section".into()))?;
    if occ.names.is_empty() {
        return Err(Error::Empty("occupation list"));
    }
    Ok(occ)
}

pub fn occupations(cfg: &RunConfig, opts: &Options) -> Result<()> {
    let occ = occupation_names(cfg)?;
    let path = occ
        .store
        .as_deref()
        .ok_or_else(|| Error::Validation("occupations section has no store".into()))?;
    let store = read_store(path)?;
    let profiles = occ
        .names
        .iter()
        .map(|name| occupation_profile(&store, name))
        .collect::<Result<Vec<_>>>()?;
    let mut csv = String::from("occupation,mean,q1,median,q3,n\n");
    for p in &profiles {
        writeln!(csv, "{},{},{},{},{},{}", csv_field(&p.occupation), p.mean, p.q1, p.median, p.q3, p.n)
            .expect("writing to a String cannot fail");
    }
    write_json(
        &opts.out.join("occupations.json"),
        &json!({ "seed": opts.seed, "config_digest": sha256_json(occ), "profiles": profiles }),
    )?;
    write_text(&opts.out.join("occupations.csv"), &csv)
}

pub fn amplification_cmd(cfg: &RunConfig, opts: &Options) -> Result<()> {
    let occ = occupation_names(cfg)?;
    let (Some(image_path), Some(text_path)) = (occ.store.as_deref(), occ.text_store.as_deref()) else {
        return Err(Error::Validation("amplification needs occupations.store and occupations.text_store".into()));
    };
    let image_store = read_store(image_path)?;
    let text_store = read_store(text_path)?;
    let records = occ
        .names
        .iter()
        .map(|name| amplification(&text_store, &image_store, name))
        .collect::<Result<Vec<_>>>()?;
    let mut csv = String::from("occupation,text_assoc,image_assoc,amplified,sign_flip\n");
    for r in &records {
        writeln!(
            csv,
            "{},{},{},{},{}",
            csv_field(&r.occupation),
            r.text_assoc,
            r.image_assoc,
            r.amplified,
            r.sign_flip
        )
        .expect("writing to a String cannot fail");
    }
    write_json(
        &opts.out.join("amplification.json"),
        &json!({ "seed": opts.seed, "config_digest": sha256_json(occ), "records": records }),
    )?;
    write_text(&opts.out.join("amplification.csv"), &csv)
}

pub fn human_compare(cfg: &RunConfig, opts: &Options) -> Result<()> {
    let section = cfg
        .human_compare
        .as_ref()
        .ok_or_else(|| Error::Validation("config has no human_compare section".into()))?;
    let human = read_human_ratings(&section.human_file)?;
    let machine = match &section.machine_rows {
        Some(rows) => rows.clone(),
        None => {
            let alias = |name: &str| section.aliases.get(name).cloned().unwrap_or_else(|| name.to_string());
            let mut rows = Vec::new();
            for (spec, r) in run_tests(cfg, opts)? {
                let pair = spec.test.attribute_pair();
                rows.push(MachineRow {
                    concept: alias(&spec.test.concept_x),
                    attribute_pair: pair.clone(),
                    machine_score: r.mean_x,
                });
                rows.push(MachineRow {
                    concept: alias(&spec.test.concept_y),
                    attribute_pair: pair,
                    machine_score: r.mean_y,
                });
            }
            rows
        }
    };
    let comparison = compare_with_humans(&machine, &human)?;
    write_json(
        &opts.out.join("human_comparison.json"),
        &json!({
            "seed": opts.seed,
            "tau": comparison.tau,
            "tau_variant": comparison.tau_variant,
            "rows": comparison.rows,
        }),
    )
}
