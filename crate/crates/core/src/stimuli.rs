//! Verbal-stimulus catalogs and prompt-set construction.
//!
//! A catalog holds target concepts (flowers, insects, science, ...) and
//! attributes (pleasant, male, ...), each as an ordered word list. A
//! [`TestConfig`] picks two concepts and two attributes plus a
//! [`PromptTemplate`]; [`build_prompt_set`] expands them into the six prompt
//! groups consumed by an image provider.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::digest::sha256_json;
use crate::error::{Error, Result};

const BUNDLED_CATALOG: &str = include_str!("../data/catalog.json");

pub const STIMULUS_PLACEHOLDER: &str = "{stimulus}";
pub const MODIFIER_PLACEHOLDER: &str = "{modifier}";
/// Joins a neutral prompt and its rendered suffix in suffix-append mode.
pub const SUFFIX_SEPARATOR: &str = ", ";

/// A single word or phrase standing for a concept or attribute.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct VerbalStimulus(String);

impl VerbalStimulus {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::Validation("verbal stimulus is empty".into()));
        }
        if text.trim() != text {
            return Err(Error::Validation(format!(
                "verbal stimulus {text:?} has leading or trailing whitespace"
            )));
        }
        Ok(VerbalStimulus(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for VerbalStimulus {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        VerbalStimulus::new(value)
    }
}

impl From<VerbalStimulus> for String {
    fn from(value: VerbalStimulus) -> Self {
        value.0
    }
}

impl fmt::Display for VerbalStimulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptSpec {
    pub name: String,
    pub stimuli: Vec<VerbalStimulus>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub modifiers: Vec<VerbalStimulus>,
}

fn check_word_list(kind: &str, name: &str, words: &[VerbalStimulus]) -> Result<()> {
    if name.trim().is_empty() {
        return Err(Error::Validation(format!("{kind} with an empty name")));
    }
    if words.is_empty() {
        return Err(Error::Validation(format!("{kind} {name:?} has no stimuli")));
    }
    let mut seen = HashSet::new();
    for w in words {
        if !seen.insert(w) {
            return Err(Error::Validation(format!(
                "{kind} {name:?} lists {:?} more than once",
                w.as_str()
            )));
        }
    }
    Ok(())
}

/// Concepts and attributes with their verbal stimuli.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimulusCatalog {
    pub concepts: Vec<ConceptSpec>,
    pub attributes: Vec<AttributeSpec>,
}

impl StimulusCatalog {
    /// The catalog shipped with the crate: the classic IAT stimulus lists
    /// for the eight valence and stereotype tests.
    pub fn bundled() -> Self {
        Self::from_json_str(BUNDLED_CATALOG).expect("bundled catalog is valid")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let catalog: StimulusCatalog =
            serde_json::from_str(text).map_err(|e| Error::parse("stimulus catalog", e))?;
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for c in &self.concepts {
            check_word_list("concept", &c.name, &c.stimuli)?;
            if !names.insert(c.name.as_str()) {
                return Err(Error::Validation(format!("duplicate concept {:?}", c.name)));
            }
        }
        let mut names = HashSet::new();
        for a in &self.attributes {
            check_word_list("attribute", &a.name, &a.modifiers)?;
            if !names.insert(a.name.as_str()) {
                return Err(Error::Validation(format!("duplicate attribute {:?}", a.name)));
            }
        }
        Ok(())
    }

    pub fn concept(&self, name: &str) -> Result<&ConceptSpec> {
        self.concepts
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::UnknownName {
                kind: "concept",
                name: name.to_string(),
            })
    }

    pub fn attribute(&self, name: &str) -> Result<&AttributeSpec> {
        self.attributes
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::UnknownName {
                kind: "attribute",
                name: name.to_string(),
            })
    }

    /// Hex SHA-256 of the canonical JSON serialization.
    pub fn digest(&self) -> String {
        sha256_json(self)
    }
}

/// Reads and validates a catalog file.
pub fn load_catalog(path: impl AsRef<Path>) -> Result<StimulusCatalog> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    StimulusCatalog::from_json_str(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroupLabel {
    X,
    Y,
    XA,
    XB,
    YA,
    YB,
}

impl GroupLabel {
    pub const ALL: [GroupLabel; 6] = [
        GroupLabel::X,
        GroupLabel::Y,
        GroupLabel::XA,
        GroupLabel::XB,
        GroupLabel::YA,
        GroupLabel::YB,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GroupLabel::X => "X",
            GroupLabel::Y => "Y",
            GroupLabel::XA => "XA",
            GroupLabel::XB => "XB",
            GroupLabel::YA => "YA",
            GroupLabel::YB => "YB",
        }
    }
}

impl fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionMode {
    /// Replace `substitution_slot` in the pattern with the modifier.
    Substitute,
    /// Append `, <suffix_pattern with {modifier} filled in>`.
    SuffixAppend,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub pattern: String,
    pub injection_mode: InjectionMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substitution_slot: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suffix_pattern: Option<String>,
}

impl PromptTemplate {
    pub fn substitute(pattern: impl Into<String>, slot: impl Into<String>) -> Self {
        PromptTemplate {
            pattern: pattern.into(),
            injection_mode: InjectionMode::Substitute,
            substitution_slot: Some(slot.into()),
            suffix_pattern: None,
        }
    }

    pub fn suffix_append(pattern: impl Into<String>, suffix: impl Into<String>) -> Self {
        PromptTemplate {
            pattern: pattern.into(),
            injection_mode: InjectionMode::SuffixAppend,
            substitution_slot: None,
            suffix_pattern: Some(suffix.into()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.pattern.matches(STIMULUS_PLACEHOLDER).count();
        if n != 1 {
            return Err(Error::Validation(format!(
                "template pattern {:?} must contain exactly one {STIMULUS_PLACEHOLDER} placeholder, found {n}",
                self.pattern
            )));
        }
        match self.injection_mode {
            InjectionMode::Substitute => {
                let slot = self.substitution_slot.as_deref().ok_or_else(|| {
                    Error::Validation("substitute mode requires substitution_slot".into())
                })?;
                if slot.is_empty() {
                    return Err(Error::Validation("substitution_slot is empty".into()));
                }
                let (prefix, suffix) = self.split_pattern();
                if !prefix.contains(slot) && !suffix.contains(slot) {
                    return Err(Error::Validation(format!(
                        "substitution_slot {slot:?} does not occur in pattern {:?}",
                        self.pattern
                    )));
                }
            }
            InjectionMode::SuffixAppend => {
                let suffix = self.suffix_pattern.as_deref().ok_or_else(|| {
                    Error::Validation("suffix_append mode requires suffix_pattern".into())
                })?;
                let n = suffix.matches(MODIFIER_PLACEHOLDER).count();
                if n != 1 {
                    return Err(Error::Validation(format!(
                        "suffix_pattern {suffix:?} must contain exactly one {MODIFIER_PLACEHOLDER} placeholder, found {n}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn split_pattern(&self) -> (&str, &str) {
        self.pattern
            .split_once(STIMULUS_PLACEHOLDER)
            .unwrap_or((self.pattern.as_str(), ""))
    }

    pub fn render_neutral(&self, stimulus: &VerbalStimulus) -> String {
        let (prefix, suffix) = self.split_pattern();
        format!("{prefix}{stimulus}{suffix}")
    }

    /// Renders the attribute-injected prompt. Assumes the template validated.
    pub fn render_attributed(&self, stimulus: &VerbalStimulus, modifier: &VerbalStimulus) -> String {
        match self.injection_mode {
            InjectionMode::Substitute => {
                let slot = self.substitution_slot.as_deref().unwrap_or_default();
                let (prefix, suffix) = self.split_pattern();
                // Slot text inside the stimulus itself is never touched.
                if prefix.contains(slot) {
                    format!("{}{stimulus}{suffix}", prefix.replacen(slot, modifier.as_str(), 1))
                } else {
                    format!("{prefix}{stimulus}{}", suffix.replacen(slot, modifier.as_str(), 1))
                }
            }
            InjectionMode::SuffixAppend => {
                let rendered = self
                    .suffix_pattern
                    .as_deref()
                    .unwrap_or(MODIFIER_PLACEHOLDER)
                    .replace(MODIFIER_PLACEHOLDER, modifier.as_str());
                format!("{}{SUFFIX_SEPARATOR}{rendered}", self.render_neutral(stimulus))
            }
        }
    }
}

/// One bias test: two target concepts, two attributes and a template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestConfig {
    pub name: String,
    pub concept_x: String,
    pub concept_y: String,
    pub attribute_a: String,
    pub attribute_b: String,
    pub template: PromptTemplate,
}

impl TestConfig {
    /// Label used to join attribute pairs across reports, e.g. "Pleasant vs Unpleasant".
    pub fn attribute_pair(&self) -> String {
        format!("{} vs {}", self.attribute_a, self.attribute_b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    pub stimulus: VerbalStimulus,
    pub modifier: Option<VerbalStimulus>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    pub test_name: String,
    pub groups: BTreeMap<GroupLabel, Vec<Prompt>>,
}

impl PromptSet {
    pub fn group(&self, label: GroupLabel) -> &[Prompt] {
        self.groups.get(&label).map(Vec::as_slice).unwrap_or(&[])
    }
}

fn neutral_prompts(template: &PromptTemplate, concept: &ConceptSpec) -> Vec<Prompt> {
    concept
        .stimuli
        .iter()
        .map(|s| Prompt {
            text: template.render_neutral(s),
            stimulus: s.clone(),
            modifier: None,
        })
        .collect()
}

fn attributed_prompts(
    template: &PromptTemplate,
    concept: &ConceptSpec,
    attribute: &AttributeSpec,
) -> Vec<Prompt> {
    let mut out = Vec::with_capacity(concept.stimuli.len() * attribute.modifiers.len());
    for s in &concept.stimuli {
        for m in &attribute.modifiers {
            out.push(Prompt {
                text: template.render_attributed(s, m),
                stimulus: s.clone(),
                modifier: Some(m.clone()),
            });
        }
    }
    out
}

/// Expands a test into its six prompt groups.
///
/// Neutral groups hold one prompt per stimulus; attribute groups hold the
/// full stimulus × modifier cross product, stimulus-major.
pub fn build_prompt_set(catalog: &StimulusCatalog, test: &TestConfig) -> Result<PromptSet> {
    test.template.validate()?;
    let x = catalog.concept(&test.concept_x)?;
    let y = catalog.concept(&test.concept_y)?;
    let a = catalog.attribute(&test.attribute_a)?;
    let b = catalog.attribute(&test.attribute_b)?;
    check_word_list("concept", &x.name, &x.stimuli)?;
    check_word_list("concept", &y.name, &y.stimuli)?;
    check_word_list("attribute", &a.name, &a.modifiers)?;
    check_word_list("attribute", &b.name, &b.modifiers)?;

    let t = &test.template;
    let mut groups = BTreeMap::new();
    groups.insert(GroupLabel::X, neutral_prompts(t, x));
    groups.insert(GroupLabel::Y, neutral_prompts(t, y));
    groups.insert(GroupLabel::XA, attributed_prompts(t, x, a));
    groups.insert(GroupLabel::XB, attributed_prompts(t, x, b));
    groups.insert(GroupLabel::YA, attributed_prompts(t, y, a));
    groups.insert(GroupLabel::YB, attributed_prompts(t, y, b));
    Ok(PromptSet {
        test_name: test.name.clone(),
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stim(s: &str) -> VerbalStimulus {
        VerbalStimulus::new(s).unwrap()
    }

    #[test]
    fn bundled_catalog_lists() {
        let cat = StimulusCatalog::bundled();
        let male: Vec<&str> = cat
            .attribute("Male")
            .unwrap()
            .modifiers
            .iter()
            .map(|s| s.as_str())
            .collect();
        assert_eq!(male, ["male", "man", "boy", "brother", "son"]);

        let counts = [
            ("Flowers", 25),
            ("Insects", 25),
            ("Musical Instruments", 25),
            ("Weapon", 25),
            ("Judaism", 4),
            ("Christianity", 4),
            ("Career", 8),
            ("Family", 8),
            ("Science", 9),
            ("Arts", 8),
        ];
        for (name, n) in counts {
            assert_eq!(cat.concept(name).unwrap().stimuli.len(), n, "{name}");
        }
        for (name, n) in [("Pleasant", 25), ("Unpleasant", 25), ("Male", 5), ("Female", 5)] {
            assert_eq!(cat.attribute(name).unwrap().modifiers.len(), n, "{name}");
        }
    }

    #[test]
    fn empty_concept_rejected() {
        let text = r#"{"concepts":[{"name":"Empty","stimuli":[]}],"attributes":[]}"#;
        assert!(matches!(
            StimulusCatalog::from_json_str(text),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn duplicate_concept_and_stimulus_rejected() {
        let dup_name = r#"{"concepts":[{"name":"A","stimuli":["x"]},{"name":"A","stimuli":["y"]}],"attributes":[]}"#;
        assert!(StimulusCatalog::from_json_str(dup_name).is_err());
        let dup_word = r#"{"concepts":[{"name":"A","stimuli":["x","x"]}],"attributes":[]}"#;
        assert!(StimulusCatalog::from_json_str(dup_word).is_err());
        let padded = r#"{"concepts":[{"name":"A","stimuli":[" x"]}],"attributes":[]}"#;
        assert!(matches!(
            StimulusCatalog::from_json_str(padded),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn substitute_replaces_slot() {
        let t = PromptTemplate::substitute("a person studying {stimulus}", "person");
        t.validate().unwrap();
        assert_eq!(t.render_neutral(&stim("science")), "a person studying science");
        assert_eq!(
            t.render_attributed(&stim("science"), &stim("woman")),
            "a woman studying science"
        );
    }

    #[test]
    fn substitute_ignores_slot_inside_stimulus() {
        let t = PromptTemplate::substitute("{stimulus} and a person", "person");
        assert_eq!(
            t.render_attributed(&stim("person of interest"), &stim("man")),
            "person of interest and a man"
        );
    }

    #[test]
    fn suffix_append_uses_comma_space() {
        let t = PromptTemplate::suffix_append("a photo of {stimulus}", "{modifier}");
        t.validate().unwrap();
        assert_eq!(t.render_neutral(&stim("rose")), "a photo of rose");
        assert_eq!(
            t.render_attributed(&stim("rose"), &stim("love")),
            "a photo of rose, love"
        );
    }

    #[test]
    fn template_validation() {
        let two = PromptTemplate::suffix_append("{stimulus} {stimulus}", "{modifier}");
        assert!(two.validate().is_err());
        let none = PromptTemplate::suffix_append("a photo", "{modifier}");
        assert!(none.validate().is_err());
        let missing_slot = PromptTemplate::substitute("a photo of {stimulus}", "person");
        assert!(missing_slot.validate().is_err());
        let mut no_suffix = PromptTemplate::suffix_append("a photo of {stimulus}", "x");
        assert!(no_suffix.validate().is_err());
        no_suffix.suffix_pattern = None;
        assert!(no_suffix.validate().is_err());
    }

    #[test]
    fn zero_modifiers_rejected() {
        let cat = StimulusCatalog {
            concepts: vec![
                ConceptSpec { name: "X".into(), stimuli: vec![stim("a")] },
                ConceptSpec { name: "Y".into(), stimuli: vec![stim("b")] },
            ],
            attributes: vec![
                AttributeSpec { name: "A".into(), modifiers: vec![] },
                AttributeSpec { name: "B".into(), modifiers: vec![stim("m")] },
            ],
        };
        let test = TestConfig {
            name: "t".into(),
            concept_x: "X".into(),
            concept_y: "Y".into(),
            attribute_a: "A".into(),
            attribute_b: "B".into(),
            template: PromptTemplate::suffix_append("{stimulus}", "{modifier}"),
        };
        assert!(matches!(build_prompt_set(&cat, &test), Err(Error::Validation(_))));
    }

    #[test]
    fn unknown_names_rejected() {
        let cat = StimulusCatalog::bundled();
        let test = TestConfig {
            name: "t".into(),
            concept_x: "Science".into(),
            concept_y: "Arts".into(),
            attribute_a: "Male".into(),
            attribute_b: "Nope".into(),
            template: PromptTemplate::substitute("a person studying {stimulus}", "person"),
        };
        assert!(matches!(
            build_prompt_set(&cat, &test),
            Err(Error::UnknownName { kind: "attribute", .. })
        ));
    }

    #[test]
    fn gender_science_prompt_set_shape() {
        let cat = StimulusCatalog::bundled();
        let test = TestConfig {
            name: "gender_science".into(),
            concept_x: "Science".into(),
            concept_y: "Arts".into(),
            attribute_a: "Male".into(),
            attribute_b: "Female".into(),
            template: PromptTemplate::substitute("a person studying {stimulus}", "person"),
        };
        let set = build_prompt_set(&cat, &test).unwrap();
        assert_eq!(set.group(GroupLabel::X).len(), 9);
        assert_eq!(set.group(GroupLabel::Y).len(), 8);
        assert_eq!(set.group(GroupLabel::XA).len(), 45);
        assert_eq!(set.group(GroupLabel::YB).len(), 40);
        assert!(set.group(GroupLabel::X).iter().all(|p| p.modifier.is_none()));
        assert_eq!(set.group(GroupLabel::XB)[0].text, "a female studying science");
        assert_eq!(set, build_prompt_set(&cat, &test).unwrap());
    }
}
