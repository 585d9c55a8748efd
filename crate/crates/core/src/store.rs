//! Labeled embedding stores and the "T2AT store v1" on-disk format.
//!
//! A store directory holds three files:
//!
//! * `manifest.json`: format tag, version, dimension, record count, provider
//!   metadata and per-group counts.
//! * `records.jsonl`: one `{"id", "group", "modality", "row"}` object per line.
//! * `vectors.bin`: `b"T2AT"`, then version, dimension and count as u32 LE,
//!   then `count * dimension` f32 LE values in row-major order.
//!
//! A flat CSV (`id,group,modality,v0,...`) is also accepted on read.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_NAME: &str = "T2AT";
pub const FORMAT_VERSION: u32 = 1;
pub const MAGIC: [u8; 4] = *b"T2AT";
pub const HEADER_LEN: usize = 16;
/// Allowed deviation from unit L2 norm for stores flagged as normalized.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const VECTORS_FILE: &str = "vectors.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Image,
    Text,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Image => "image",
            Modality::Text => "text",
        })
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(Modality::Image),
            "text" => Ok(Modality::Text),
            other => Err(Error::parse("modality", format!("unknown modality {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub group: String,
    pub modality: Modality,
    pub vector: Vec<f32>,
}

impl EmbeddingRecord {
    pub fn new(
        id: impl Into<String>,
        group: impl Into<String>,
        modality: Modality,
        vector: Vec<f32>,
    ) -> Self {
        EmbeddingRecord {
            id: id.into(),
            group: group.into(),
            modality,
            vector,
        }
    }
}

/// Provenance carried in the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct StoreMetadata {
    /// Free-form provider description (name, encoder, generation parameters).
    pub provider: serde_json::Value,
    pub catalog_digest: Option<String>,
    /// Set once every vector has been scaled to unit norm.
    pub normalized: bool,
}

impl Default for StoreMetadata {
    fn default() -> Self {
        StoreMetadata {
            provider: serde_json::Value::Object(Default::default()),
            catalog_digest: None,
            normalized: false,
        }
    }
}

/// An immutable, validated collection of embedding records sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dimension: usize,
    records: Vec<EmbeddingRecord>,
    metadata: StoreMetadata,
}

fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&c| f64::from(c) * f64::from(c)).sum::<f64>().sqrt()
}

impl EmbeddingStore {
    /// Checks dimension, finiteness, non-zero norm and id uniqueness.
    ///
    /// Unit norm is not checked here even when `metadata.normalized` is set;
    /// [`write_store`] and [`read_store`] enforce it.
    pub fn new(
        dimension: usize,
        records: Vec<EmbeddingRecord>,
        metadata: StoreMetadata,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Validation("store dimension must be positive".into()));
        }
        let mut ids = HashSet::with_capacity(records.len());
        for r in &records {
            if r.vector.len() != dimension {
                return Err(Error::DimensionMismatch {
                    id: Some(r.id.clone()),
                    expected: dimension,
                    found: r.vector.len(),
                });
            }
            if let Some(index) = r.vector.iter().position(|c| !c.is_finite()) {
                return Err(Error::NonFinite {
                    id: r.id.clone(),
                    index,
                });
            }
            if l2_norm(&r.vector) == 0.0 {
                return Err(Error::ZeroVector(r.id.clone()));
            }
            if !ids.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
        }
        Ok(EmbeddingStore {
            dimension,
            records,
            metadata,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn metadata(&self) -> &StoreMetadata {
        &self.metadata
    }

    pub fn with_metadata(mut self, metadata: StoreMetadata) -> Self {
        self.metadata = metadata;
        self
    }

    /// Record count per group label.
    pub fn groups(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            *out.entry(r.group.clone()).or_insert(0) += 1;
        }
        out
    }

    pub fn has_group(&self, label: &str) -> bool {
        self.records.iter().any(|r| r.group == label)
    }

    /// Records of one group, sorted by id.
    pub fn select_group(&self, label: &str) -> Result<Vec<&EmbeddingRecord>> {
        let mut out: Vec<&EmbeddingRecord> =
            self.records.iter().filter(|r| r.group == label).collect();
        if out.is_empty() {
            return Err(Error::UnknownGroup {
                label: label.to_string(),
                available: self.groups().into_keys().collect(),
            });
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }

    /// Vectors of one group in id order.
    pub fn group_vectors(&self, label: &str) -> Result<Vec<&[f32]>> {
        Ok(self
            .select_group(label)?
            .into_iter()
            .map(|r| r.vector.as_slice())
            .collect())
    }

    /// First record whose norm is off unit by more than [`UNIT_NORM_TOLERANCE`].
    fn first_non_unit(&self) -> Option<(&str, f64)> {
        self.records.iter().find_map(|r| {
            let n = l2_norm(&r.vector);
            ((n - 1.0).abs() > UNIT_NORM_TOLERANCE).then_some((r.id.as_str(), n))
        })
    }
}

/// Scales every vector to unit L2 norm and marks the store normalized.
pub fn normalize_store(store: &EmbeddingStore) -> Result<EmbeddingStore> {
    let records = store
        .records
        .iter()
        .map(|r| {
            let norm = l2_norm(&r.vector);
            if norm == 0.0 {
                return Err(Error::ZeroVector(r.id.clone()));
            }
            let vector = r
                .vector
                .iter()
                .map(|&c| (f64::from(c) / norm) as f32)
                .collect();
            Ok(EmbeddingRecord {
                vector,
                ..r.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let metadata = StoreMetadata {
        normalized: true,
        ..store.metadata.clone()
    };
    EmbeddingStore::new(store.dimension, records, metadata)
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestFile {
    format: String,
    version: u32,
    dimension: usize,
    count: usize,
    #[serde(default)]
    provider: serde_json::Value,
    groups: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    catalog_digest: Option<String>,
    #[serde(default)]
    normalized: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordLine {
    id: String,
    group: String,
    modality: Modality,
    row: usize,
}

fn to_u32(what: &str, n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Validation(format!("{what} {n} does not fit in u32")))
}

/// Encodes the `vectors.bin` payload.
pub fn encode_vectors(store: &EmbeddingStore) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(HEADER_LEN + store.len() * store.dimension * 4);
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&to_u32("dimension", store.dimension)?.to_le_bytes());
    buf.extend_from_slice(&to_u32("record count", store.len())?.to_le_bytes());
    for r in &store.records {
        for c in &r.vector {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    Ok(buf)
}

/// Writes `store` as a T2AT directory, creating it if needed.
///
/// Refuses stores flagged normalized whose vectors are not unit length.
pub fn write_store(store: &EmbeddingStore, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    if store.metadata.normalized {
        if let Some((id, norm)) = store.first_non_unit() {
            return Err(Error::Validation(format!(
                "store is flagged normalized but record {id:?} has norm {norm}"
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let manifest = ManifestFile {
        format: FORMAT_NAME.to_string(),
        version: FORMAT_VERSION,
        dimension: store.dimension,
        count: store.len(),
        provider: store.metadata.provider.clone(),
        groups: store.groups(),
        catalog_digest: store.metadata.catalog_digest.clone(),
        normalized: store.metadata.normalized,
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::parse("manifest", e))?;
    text.push('\n');
    write_file(&dir.join(MANIFEST_FILE), text.as_bytes())?;

    let mut lines = String::new();
    for (row, r) in store.records.iter().enumerate() {
        let line = RecordLine {
            id: r.id.clone(),
            group: r.group.clone(),
            modality: r.modality,
            row,
        };
        lines.push_str(&serde_json::to_string(&line).map_err(|e| Error::parse("record", e))?);
        lines.push('\n');
    }
    write_file(&dir.join(RECORDS_FILE), lines.as_bytes())?;
    write_file(&dir.join(VECTORS_FILE), &encode_vectors(store)?)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

/// Reads a T2AT store directory, or a `.csv` file in the interchange layout.
pub fn read_store(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    if path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        return read_csv_store(path);
    }
    read_store_dir(path)
}

fn read_store_dir(dir: &Path) -> Result<EmbeddingStore> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: ManifestFile =
        serde_json::from_str(&text).map_err(|e| Error::parse(manifest_path.display().to_string(), e))?;
    if manifest.format != FORMAT_NAME {
        return Err(Error::Validation(format!(
            "manifest format is {:?}, expected {FORMAT_NAME:?}",
            manifest.format
        )));
    }
    if manifest.version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: FORMAT_VERSION,
            found: manifest.version,
        });
    }

    let vectors_path = dir.join(VECTORS_FILE);
    let bytes = fs::read(&vectors_path).map_err(|e| Error::io(&vectors_path, e))?;
    if bytes.len() < HEADER_LEN {
        return Err(Error::parse(
            VECTORS_FILE,
            format!("file is {} bytes, shorter than the header", bytes.len()),
        ));
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4-byte slice");
    if magic != MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    let version = read_u32(&bytes, 4);
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: FORMAT_VERSION,
            found: version,
        });
    }
    let dimension = read_u32(&bytes, 8) as usize;
    let count = read_u32(&bytes, 12) as usize;
    if dimension != manifest.dimension {
        return Err(Error::DimensionMismatch {
            id: None,
            expected: manifest.dimension,
            found: dimension,
        });
    }
    if count != manifest.count {
        return Err(Error::Validation(format!(
            "manifest count {} disagrees with vectors header count {count}",
            manifest.count
        )));
    }
    let expected_len = count
        .checked_mul(dimension)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::parse(VECTORS_FILE, "header sizes overflow"))?;
    if bytes.len() != expected_len {
        return Err(Error::parse(
            VECTORS_FILE,
            format!("expected {expected_len} bytes, found {}", bytes.len()),
        ));
    }
    let payload = &bytes[HEADER_LEN..];

    let records_path = dir.join(RECORDS_FILE);
    let text = fs::read_to_string(&records_path).map_err(|e| Error::io(&records_path, e))?;
    let mut seen_rows = vec![false; count];
    let mut records = Vec::with_capacity(count);
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: RecordLine = serde_json::from_str(line)
            .map_err(|e| Error::parse(format!("{RECORDS_FILE} line {}", lineno + 1), e))?;
        if rec.row >= count {
            return Err(Error::Validation(format!(
                "record {:?} points at row {} but the store has {count} rows",
                rec.id, rec.row
            )));
        }
        if std::mem::replace(&mut seen_rows[rec.row], true) {
            return Err(Error::Validation(format!(
                "row {} is referenced by more than one record",
                rec.row
            )));
        }
        let start = rec.row * dimension * 4;
        let vector = payload[start..start + dimension * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
            .collect();
        records.push(EmbeddingRecord {
            id: rec.id,
            group: rec.group,
            modality: rec.modality,
            vector,
        });
    }
    if records.len() != count {
        return Err(Error::Validation(format!(
            "{RECORDS_FILE} lists {} records, manifest says {count}",
            records.len()
        )));
    }

    let metadata = StoreMetadata {
        provider: manifest.provider,
        catalog_digest: manifest.catalog_digest,
        normalized: manifest.normalized,
    };
    let store = EmbeddingStore::new(dimension, records, metadata)?;
    if store.groups() != manifest.groups {
        return Err(Error::Validation(
            "manifest group counts disagree with records".into(),
        ));
    }
    if store.metadata.normalized {
        if let Some((id, norm)) = store.first_non_unit() {
            return Err(Error::Validation(format!(
                "store is flagged normalized but record {id:?} has norm {norm}"
            )));
        }
    }
    Ok(store)
}

/// Reads the CSV interchange layout `id,group,modality,v0,...,v{D-1}`.
/// A leading header row whose first field is `id` is skipped.
pub fn read_csv_store(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let what = path.display().to_string();
    let mut dimension = None;
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::parse(&what, e))?;
        if i == 0 && row.get(0) == Some("id") {
            continue;
        }
        if row.len() < 4 {
            return Err(Error::parse(
                &what,
                format!("row {} has {} fields, need id,group,modality and a vector", i + 1, row.len()),
            ));
        }
        let id = row[0].to_string();
        let d = row.len() - 3;
        let expected = *dimension.get_or_insert(d);
        if d != expected {
            return Err(Error::DimensionMismatch {
                id: Some(id),
                expected,
                found: d,
            });
        }
        let vector = row
            .iter()
            .skip(3)
            .map(|v| {
                v.parse::<f32>()
                    .map_err(|e| Error::parse(&what, format!("record {id:?}: {v:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(EmbeddingRecord {
            id,
            group: row[1].to_string(),
            modality: row[2].parse()?,
            vector,
        });
    }
    let dimension =
        dimension.ok_or_else(|| Error::parse(&what, "CSV store has no records"))?;
    let metadata = StoreMetadata {
        provider: serde_json::json!({ "name": "csv-import" }),
        ..StoreMetadata::default()
    };
    EmbeddingStore::new(dimension, records, metadata)
}
