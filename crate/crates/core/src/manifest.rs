//! Candidate-corpus data model and line-delimited JSON storage.
//!
//! A manifest is an ordered list of utterance records, all sharing one
//! embedding dimension and one feature dimension. On disk it is UTF-8 JSONL,
//! one record per line. Writes are canonical: records sorted by
//! `utterance_id` and every real number rounded to six significant digits,
//! so the same manifest always produces byte-identical files.
//!
//! Cleansing-variant manifests live in sibling files named
//! `<stem>.<variant>.jsonl` next to the base `<stem>.jsonl` pool.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Round to six significant digits, the on-disk precision for reals.
///
/// Idempotent: values that already carry six significant digits map to
/// themselves, which makes load→write cycles stable after one pass.
pub fn round_sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.5e}").parse().expect("sig6 round-trip")
}

fn round_vec(xs: &[f64]) -> Vec<f64> {
    xs.iter().copied().map(round_sig6).collect()
}

/// Hidden per-utterance ground truth used only by the simulated environment.
///
/// Never present in real-mode manifests; serialization keeps the block
/// optional so real data simply omits it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    /// Intrinsic quality of the recording, in [1, 5].
    pub base_quality: f64,
    /// Additive-noise level, >= 0.
    pub noise_level: f64,
    /// Device/reverberation distortion level, >= 0.
    pub device_distortion: f64,
}

impl LatentState {
    fn validate(&self) -> std::result::Result<(), String> {
        if !(self.base_quality.is_finite()
            && self.noise_level.is_finite()
            && self.device_distortion.is_finite())
        {
            return Err("latent fields must be finite".into());
        }
        if !(1.0..=5.0).contains(&self.base_quality) {
            return Err(format!(
                "latent base_quality {} outside [1, 5]",
                self.base_quality
            ));
        }
        if self.noise_level < 0.0 || self.device_distortion < 0.0 {
            return Err("latent noise/distortion levels must be >= 0".into());
        }
        Ok(())
    }

    fn rounded(&self) -> LatentState {
        LatentState {
            base_quality: round_sig6(self.base_quality),
            noise_level: round_sig6(self.noise_level),
            device_distortion: round_sig6(self.device_distortion),
        }
    }
}

/// One candidate utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    /// Unique id within a manifest.
    pub utterance_id: String,
    /// Source group; one group is assumed to be one speaker.
    pub group_id: String,
    /// Log-domain text–audio alignment score, <= 0.
    pub ctc_score: f64,
    /// Speaker-embedding vector, dimension D shared by the whole manifest.
    pub embedding: Vec<f64>,
    /// Utterance-level feature summary, dimension F shared by the manifest.
    pub features: Vec<f64>,
    /// Duration in seconds, > 0.
    pub duration_s: f64,
    /// Observable acoustic-quality score in [1, 5].
    pub acoustic_quality: f64,
    /// Simulation-only ground truth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<LatentState>,
}

impl UtteranceRecord {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.utterance_id.is_empty() {
            return Err("empty utterance_id".into());
        }
        if self.group_id.is_empty() {
            return Err("empty group_id".into());
        }
        if !self.ctc_score.is_finite() || self.ctc_score > 0.0 {
            return Err(format!("ctc_score {} must be finite and <= 0", self.ctc_score));
        }
        if self.embedding.is_empty() || self.embedding.iter().any(|v| !v.is_finite()) {
            return Err("embedding must be non-empty and finite".into());
        }
        if self.features.is_empty() || self.features.iter().any(|v| !v.is_finite()) {
            return Err("features must be non-empty and finite".into());
        }
        if !self.duration_s.is_finite() || self.duration_s <= 0.0 {
            return Err(format!("duration_s {} must be > 0", self.duration_s));
        }
        if !self.acoustic_quality.is_finite() || !(1.0..=5.0).contains(&self.acoustic_quality) {
            return Err(format!(
                "acoustic_quality {} outside [1, 5]",
                self.acoustic_quality
            ));
        }
        if let Some(latent) = &self.latent {
            latent.validate()?;
        }
        Ok(())
    }

    /// Copy with all reals rounded to on-disk precision.
    pub fn canonical(&self) -> UtteranceRecord {
        UtteranceRecord {
            utterance_id: self.utterance_id.clone(),
            group_id: self.group_id.clone(),
            ctc_score: round_sig6(self.ctc_score),
            embedding: round_vec(&self.embedding),
            features: round_vec(&self.features),
            duration_s: round_sig6(self.duration_s),
            acoustic_quality: round_sig6(self.acoustic_quality),
            latent: self.latent.as_ref().map(LatentState::rounded),
        }
    }
}

/// Name of a registered data-cleansing variant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VariantId(String);

pub const IDENTITY_VARIANT: &str = "identity";

impl VariantId {
    pub fn new(name: impl Into<String>) -> VariantId {
        VariantId(name.into())
    }

    /// The always-registered no-op variant.
    pub fn identity() -> VariantId {
        VariantId(IDENTITY_VARIANT.to_string())
    }

    pub fn name(&self) -> &str {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0 == IDENTITY_VARIANT
    }
}

impl fmt::Display for VariantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Ordered registry of cleansing variants.
///
/// Registration order is semantic: argmax ties are broken by it, and
/// "identity" is always first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariantSet {
    order: Vec<VariantId>,
}

impl VariantSet {
    /// Build a registry from variant names. "identity" is inserted at the
    /// front whether or not the caller lists it; duplicates are rejected.
    pub fn new<I, S>(names: I) -> Result<VariantSet>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut order = vec![VariantId::identity()];
        for name in names {
            let name = name.as_ref();
            if name.is_empty() {
                return Err(Error::InvalidConfig("empty variant name".into()));
            }
            let id = VariantId::new(name);
            if id.is_identity() {
                continue;
            }
            if order.contains(&id) {
                return Err(Error::InvalidConfig(format!(
                    "variant \"{name}\" registered twice"
                )));
            }
            order.push(id);
        }
        Ok(VariantSet { order })
    }

    /// Just `identity`.
    pub fn identity_only() -> VariantSet {
        VariantSet {
            order: vec![VariantId::identity()],
        }
    }

    pub fn contains(&self, v: &VariantId) -> bool {
        self.order.contains(v)
    }

    /// Registration index, used for tie-breaking.
    pub fn position(&self, v: &VariantId) -> Option<usize> {
        self.order.iter().position(|x| x == v)
    }

    pub fn iter(&self) -> impl Iterator<Item = &VariantId> {
        self.order.iter()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// A validated, dimension-homogeneous list of utterance records.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    records: Vec<UtteranceRecord>,
    variant: VariantId,
    embedding_dim: usize,
    feature_dim: usize,
}

impl Manifest {
    /// Validate records and assemble a manifest. Record order is preserved.
    pub fn new(records: Vec<UtteranceRecord>, variant: VariantId) -> Result<Manifest> {
        if records.is_empty() {
            return Err(Error::InvalidManifest("manifest must be non-empty".into()));
        }
        let embedding_dim = records[0].embedding.len();
        let feature_dim = records[0].features.len();
        let mut seen = BTreeSet::new();
        for (i, rec) in records.iter().enumerate() {
            rec.validate()
                .map_err(|m| Error::InvalidManifest(format!("record {}: {m}", i + 1)))?;
            if rec.embedding.len() != embedding_dim {
                return Err(Error::InvalidManifest(format!(
                    "record {}: embedding dimension {} != {}",
                    i + 1,
                    rec.embedding.len(),
                    embedding_dim
                )));
            }
            if rec.features.len() != feature_dim {
                return Err(Error::InvalidManifest(format!(
                    "record {}: feature dimension {} != {}",
                    i + 1,
                    rec.features.len(),
                    feature_dim
                )));
            }
            if !seen.insert(rec.utterance_id.as_str()) {
                return Err(Error::InvalidManifest(format!(
                    "duplicate utterance_id \"{}\"",
                    rec.utterance_id
                )));
            }
        }
        Ok(Manifest {
            records,
            variant,
            embedding_dim,
            feature_dim,
        })
    }

    pub fn records(&self) -> &[UtteranceRecord] {
        &self.records
    }

    pub fn variant(&self) -> &VariantId {
        &self.variant
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Record lookup by utterance id (linear; manifests are iterated far more
    /// often than probed).
    pub fn get(&self, utterance_id: &str) -> Option<&UtteranceRecord> {
        self.records.iter().find(|r| r.utterance_id == utterance_id)
    }

    /// All distinct group ids, sorted.
    pub fn group_ids(&self) -> BTreeSet<String> {
        self.records.iter().map(|r| r.group_id.clone()).collect()
    }

    /// All utterance ids, sorted.
    pub fn utterance_ids(&self) -> BTreeSet<String> {
        self.records.iter().map(|r| r.utterance_id.clone()).collect()
    }

    /// Records belonging to one group, in manifest order.
    pub fn records_of_group<'a>(&'a self, group_id: &'a str) -> impl Iterator<Item = &'a UtteranceRecord> {
        self.records.iter().filter(move |r| r.group_id == group_id)
    }

    /// Mean embedding of a group. `None` when the group is absent.
    pub fn group_mean_embedding(&self, group_id: &str) -> Option<Vec<f64>> {
        let mut sum = vec![0.0; self.embedding_dim];
        let mut n = 0usize;
        for rec in self.records_of_group(group_id) {
            for (s, v) in sum.iter_mut().zip(&rec.embedding) {
                *s += v;
            }
            n += 1;
        }
        if n == 0 {
            return None;
        }
        for s in &mut sum {
            *s /= n as f64;
        }
        Some(sum)
    }

    /// Keep only records whose utterance id is in `ids`, preserving order.
    pub fn retain_ids(&self, ids: &BTreeSet<String>) -> Result<Manifest> {
        let kept: Vec<UtteranceRecord> = self
            .records
            .iter()
            .filter(|r| ids.contains(&r.utterance_id))
            .cloned()
            .collect();
        if kept.is_empty() {
            return Err(Error::InvalidManifest(
                "all candidates filtered".into(),
            ));
        }
        Manifest::new(kept, self.variant.clone())
    }

    /// Same records under a different variant label.
    pub fn with_variant(&self, variant: VariantId) -> Manifest {
        Manifest {
            records: self.records.clone(),
            variant,
            embedding_dim: self.embedding_dim,
            feature_dim: self.feature_dim,
        }
    }
}

/// Path of the sibling manifest for `variant`: `corpus.jsonl` + `denoise`
/// becomes `corpus.denoise.jsonl`. Identity maps to the base path itself.
pub fn variant_path(base: &Path, variant: &VariantId) -> PathBuf {
    if variant.is_identity() {
        return base.to_path_buf();
    }
    let stem = base
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ext = base
        .extension()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "jsonl".into());
    base.with_file_name(format!("{stem}.{}.{ext}", variant.name()))
}

/// Infer the variant encoded in a manifest file name, if any.
fn variant_from_path(path: &Path) -> VariantId {
    let stem = match path.file_stem() {
        Some(s) => s.to_string_lossy().into_owned(),
        None => return VariantId::identity(),
    };
    match stem.rsplit_once('.') {
        Some((_, suffix)) if !suffix.is_empty() => VariantId::new(suffix),
        _ => VariantId::identity(),
    }
}

/// Load and validate a JSONL manifest. Record order is preserved from the
/// file; the variant label is inferred from the `<stem>.<variant>.jsonl`
/// naming convention (plain `<stem>.jsonl` loads as identity).
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let file = fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut records: Vec<UtteranceRecord> = Vec::new();
    let mut seen: std::collections::BTreeMap<String, usize> = std::collections::BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: UtteranceRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                path: path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })?;
        rec.validate().map_err(|message| Error::MalformedLine {
            path: path.to_path_buf(),
            line: line_no,
            message,
        })?;
        if let Some(_first) = seen.insert(rec.utterance_id.clone(), line_no) {
            return Err(Error::DuplicateId {
                path: path.to_path_buf(),
                line: line_no,
                id: rec.utterance_id,
            });
        }
        records.push(rec);
    }
    let variant = variant_from_path(path);
    Manifest::new(records, variant).map_err(|e| match e {
        Error::InvalidManifest(m) => Error::InvalidManifest(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Write a manifest in canonical form: records sorted by `utterance_id`,
/// reals at six significant digits. Byte-deterministic for equal manifests.
pub fn write_manifest(m: &Manifest, path: &Path) -> Result<()> {
    if m.records.is_empty() {
        return Err(Error::InvalidManifest("manifest must be non-empty".into()));
    }
    let mut sorted: Vec<UtteranceRecord> = m.records.iter().map(UtteranceRecord::canonical).collect();
    sorted.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
    let mut out = String::new();
    for rec in &sorted {
        out.push_str(&serde_json::to_string(rec).expect("record serialization"));
        out.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(out.as_bytes()).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
