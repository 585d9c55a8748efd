//! Run configuration file.
//!
//! One JSON document drives every subcommand; each reads only the sections
//! it needs. Relative paths resolve against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use t2iat::stats::PermutationMode;
use t2iat::studies::MachineRow;
use t2iat::synth::SynthOccupation;
use t2iat::{Error, Modality, Result, StimulusCatalog, TestConfig};

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Catalog file; the bundled catalog when absent.
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    #[serde(default)]
    pub tests: Vec<TestEntry>,
    /// Default store for tests that do not name their own.
    #[serde(default)]
    pub store: Option<PathBuf>,
    #[serde(default)]
    pub permutations: Option<u64>,
    #[serde(default)]
    pub permutation_mode: PermutationMode,
    #[serde(default)]
    pub enumeration_cap: Option<u64>,
    #[serde(default)]
    pub synth: Option<SynthSection>,
    #[serde(default)]
    pub occupations: Option<OccupationSection>,
    #[serde(default)]
    pub human_compare: Option<HumanSection>,
}

/// A test given inline or as a path to a test config file.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum TestEntry {
    Inline(TestSpec),
    File(PathBuf),
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct TestSpec {
    #[serde(flatten)]
    pub test: TestConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub store: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum SynthSection {
    Occupations(OccupationSynth),
    BiasTest(BiasTestSynth),
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BiasTestSynth {
    pub dimension: usize,
    pub n_neutral_per_concept: usize,
    pub n_attr_per_condition: usize,
    pub bias_x: f64,
    pub bias_y: f64,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OccupationSynth {
    pub dimension: usize,
    pub n_per_group: usize,
    pub noise_sigma: f64,
    pub occupations: Vec<SynthOccupation>,
    #[serde(default = "image")]
    pub modality: Modality,
}

fn image() -> Modality {
    Modality::Image
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OccupationSection {
    pub names: Vec<String>,
    /// Image-embedding store with `<name>/neutral|masculine|feminine` groups.
    #[serde(default)]
    pub store: Option<PathBuf>,
    /// Prompt-text embedding store with the same groups.
    #[serde(default)]
    pub text_store: Option<PathBuf>,
    #[serde(default = "neutral_pattern")]
    pub neutral_pattern: String,
    #[serde(default = "masculine_pattern")]
    pub masculine_pattern: String,
    #[serde(default = "feminine_pattern")]
    pub feminine_pattern: String,
}

fn neutral_pattern() -> String {
    "A photo of a {occupation}".into()
}

fn masculine_pattern() -> String {
    "A photo of a male {occupation}".into()
}

fn feminine_pattern() -> String {
    "A photo of a female {occupation}".into()
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct HumanSection {
    pub human_file: PathBuf,
    /// Machine scores given directly; otherwise derived from the tests' stores.
    #[serde(default)]
    pub machine_rows: Option<Vec<MachineRow>>,
    /// Renames catalog concept names to the labels used in the human file.
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Loads the config and resolves every relative path, including tests
    /// given as separate files.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(inner) = p.as_mut() {
                *inner = resolve(base, inner);
            }
        };
        fix(&mut cfg.catalog);
        fix(&mut cfg.store);
        let mut tests = Vec::with_capacity(cfg.tests.len());
        for entry in cfg.tests.drain(..) {
            let spec = match entry {
                TestEntry::Inline(mut spec) => {
                    fix(&mut spec.store);
                    spec
                }
                TestEntry::File(p) => {
                    let p = resolve(base, &p);
                    let mut spec: TestSpec = read_json(&p)?;
                    let test_base = p.parent().unwrap_or(Path::new(""));
                    if let Some(s) = spec.store.as_mut() {
                        *s = resolve(test_base, s);
                    }
                    spec
                }
            };
            tests.push(TestEntry::Inline(spec));
        }
        cfg.tests = tests;
        if let Some(occ) = cfg.occupations.as_mut() {
            fix(&mut occ.store);
            fix(&mut occ.text_store);
        }
        if let Some(h) = cfg.human_compare.as_mut() {
            h.human_file = resolve(base, &h.human_file);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.permutations == Some(0) {
            return Err(Error::Validation("permutations must be at least 1".into()));
        }
        let mut names = std::collections::HashSet::new();
        for t in self.test_specs() {
            if !names.insert(t.test.name.as_str()) {
                return Err(Error::Validation(format!("duplicate test name {:?}", t.test.name)));
            }
            let name = &t.test.name;
            if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
                return Err(Error::Validation(format!("test name {name:?} is not usable as a file name")));
            }
        }
        if let Some(occ) = &self.occupations {
            for p in [&occ.neutral_pattern, &occ.masculine_pattern, &occ.feminine_pattern] {
                if p.matches("{occupation}").count() != 1 {
                    return Err(Error::Validation(format!(
                        "occupation pattern {p:?} must contain exactly one {{occupation}} placeholder"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn test_specs(&self) -> impl Iterator<Item = &TestSpec> {
        self.tests.iter().filter_map(|t| match t {
            TestEntry::Inline(spec) => Some(spec),
            TestEntry::File(_) => None,
        })
    }

    pub fn catalog(&self) -> Result<StimulusCatalog> {
        match &self.catalog {
            Some(p) => t2iat::load_catalog(p),
            None => Ok(StimulusCatalog::bundled()),
        }
    }

    pub fn store_for<'a>(&'a self, spec: &'a TestSpec) -> Result<&'a Path> {
        spec.store
            .as_deref()
            .or(self.store.as_deref())
            .ok_or_else(|| Error::Validation(format!("test {:?} has no store", spec.test.name)))
    }
}
