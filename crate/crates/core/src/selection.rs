//! Corpus determination: variant switching, utterance-wise and speaker-wise
//! selection, and the acoustic-quality baseline.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::QualityTable;
use crate::manifest::{Manifest, VariantId, VariantSet};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    /// Everything in the pre-screened pool.
    Unselected,
    /// Acoustic-quality threshold baseline.
    AcousticTheta,
    /// Utterance-wise selection by estimated training-data quality.
    OursUtt,
    /// Speaker-wise selection by speaker pseudo-MOS.
    OursSpk,
}

impl SelectionMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            SelectionMethod::Unselected => "unselected",
            SelectionMethod::AcousticTheta => "acoustic_theta",
            SelectionMethod::OursUtt => "ours_utt",
            SelectionMethod::OursSpk => "ours_spk",
        }
    }
}

/// How a selection was produced.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling_fraction: Option<f64>,
}

/// Chosen (utterance, variant) pairs plus how they were chosen.
///
/// `n` is the requested size. Utterance-wise methods hit it exactly;
/// speaker-wise selection never splits a speaker so it may stop short;
/// `unselected` and `acoustic_theta` sizes are data-determined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSelection {
    pub entries: Vec<(String, VariantId)>,
    pub method: SelectionMethod,
    pub n: usize,
    #[serde(default)]
    pub provenance: Provenance,
}

impl CorpusSelection {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn utterance_ids(&self) -> BTreeSet<String> {
        self.entries.iter().map(|(id, _)| id.clone()).collect()
    }

    /// Everything in `pool`, under the pool's variant.
    pub fn unselected(pool: &Manifest) -> CorpusSelection {
        CorpusSelection {
            entries: pool
                .records()
                .iter()
                .map(|r| (r.utterance_id.clone(), pool.variant().clone()))
                .collect(),
            method: SelectionMethod::Unselected,
            n: pool.len(),
            provenance: Provenance::default(),
        }
    }

    /// Check structural invariants; `variants`, when given, must cover every
    /// entry's variant.
    pub fn validate(&self, variants: Option<&VariantSet>) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (id, v) in &self.entries {
            if !seen.insert(id.as_str()) {
                return Err(Error::Selection(format!("duplicate utterance \"{id}\"")));
            }
            if let Some(set) = variants {
                if !set.contains(v) {
                    return Err(Error::Selection(format!(
                        "entry \"{id}\" uses unregistered variant \"{v}\""
                    )));
                }
            }
        }
        if self.method == SelectionMethod::OursUtt && self.entries.len() != self.n {
            return Err(Error::Selection(format!(
                "ours_utt selection has {} entries, expected {}",
                self.entries.len(),
                self.n
            )));
        }
        if self.method == SelectionMethod::OursSpk && self.entries.len() > self.n {
            return Err(Error::Selection(format!(
                "ours_spk selection has {} entries, cap was {}",
                self.entries.len(),
                self.n
            )));
        }
        Ok(())
    }

    /// Write entries as JSONL plus a `<stem>.meta.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Line<'a> {
            utterance_id: &'a str,
            variant: &'a VariantId,
        }
        let mut out = String::new();
        for (id, v) in &self.entries {
            let line = Line {
                utterance_id: id,
                variant: v,
            };
            out.push_str(&serde_json::to_string(&line).expect("selection line"));
            out.push('\n');
        }
        let mut f = fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        f.write_all(out.as_bytes()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let meta = serde_json::json!({
            "method": self.method,
            "n": self.n,
            "provenance": self.provenance,
            "size": self.entries.len(),
        });
        let meta_path = meta_path(path);
        fs::write(&meta_path, format!("{:#}\n", meta)).map_err(|source| Error::Io {
            path: meta_path,
            source,
        })
    }

    pub fn load(path: &Path) -> Result<CorpusSelection> {
        #[derive(Deserialize)]
        struct Line {
            utterance_id: String,
            variant: VariantId,
        }
        #[derive(Deserialize)]
        struct Meta {
            method: SelectionMethod,
            n: usize,
            #[serde(default)]
            provenance: Provenance,
        }
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut entries = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let line: Line = serde_json::from_str(line).map_err(|e| Error::MalformedLine {
                path: path.to_path_buf(),
                line: idx + 1,
                message: e.to_string(),
            })?;
            entries.push((line.utterance_id, line.variant));
        }
        let meta_path = meta_path(path);
        let meta: Meta = serde_json::from_str(&fs::read_to_string(&meta_path).map_err(
            |source| Error::Io {
                path: meta_path.clone(),
                source,
            },
        )?)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", meta_path.display())))?;
        let sel = CorpusSelection {
            entries,
            method: meta.method,
            n: meta.n,
            provenance: meta.provenance,
        };
        sel.validate(None)?;
        Ok(sel)
    }
}

fn meta_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.meta.json"))
}

/// A per-utterance variant choice with its score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredVariant {
    pub variant: VariantId,
    pub score: f64,
}

/// For each utterance, the variant with the highest training-data quality;
/// ties break by variant registration order ("identity" first). The winning
/// score becomes the utterance's quality.
pub fn switch_variants(q: &QualityTable) -> Result<BTreeMap<String, ScoredVariant>> {
    let mut out = BTreeMap::new();
    for id in q.utterance_ids() {
        let mut best: Option<ScoredVariant> = None;
        for v in q.variants() {
            let score = q.utterance_score(id, v).ok_or_else(|| {
                Error::Selection(format!("missing ({id}, {v}) entry in quality table"))
            })?;
            let better = match &best {
                None => true,
                Some(b) => score > b.score,
            };
            if better {
                best = Some(ScoredVariant {
                    variant: v.clone(),
                    score,
                });
            }
        }
        out.insert(id.to_string(), best.expect("non-empty variant list"));
    }
    Ok(out)
}

/// Scores of a single variant for every utterance, as a switched-shape map.
pub fn uniform_scores(q: &QualityTable, v: &VariantId) -> Result<BTreeMap<String, ScoredVariant>> {
    let mut out = BTreeMap::new();
    for id in q.utterance_ids() {
        let score = q
            .utterance_score(id, v)
            .ok_or_else(|| Error::Selection(format!("missing ({id}, {v}) entry")))?;
        out.insert(
            id.to_string(),
            ScoredVariant {
                variant: v.clone(),
                score,
            },
        );
    }
    Ok(out)
}

/// Per-utterance variant choice by highest observable acoustic quality —
/// the model-agnostic baseline switching rule. Ties break by pool order.
pub fn acoustic_switch(pools: &[(VariantId, Manifest)]) -> Result<BTreeMap<String, ScoredVariant>> {
    if pools.is_empty() {
        return Err(Error::Selection("no variant manifests".into()));
    }
    let mut out: BTreeMap<String, ScoredVariant> = BTreeMap::new();
    for (variant, manifest) in pools {
        for rec in manifest.records() {
            let cand = ScoredVariant {
                variant: variant.clone(),
                score: rec.acoustic_quality,
            };
            out.entry(rec.utterance_id.clone())
                .and_modify(|best| {
                    if cand.score > best.score {
                        *best = cand.clone();
                    }
                })
                .or_insert(cand);
        }
    }
    Ok(out)
}

/// The `n` highest-scoring utterances, descending; ties break by
/// lexicographic utterance id.
pub fn select_top_n(
    scored: &BTreeMap<String, ScoredVariant>,
    n: usize,
    method: SelectionMethod,
) -> Result<CorpusSelection> {
    if n == 0 {
        return Err(Error::Selection("n must be >= 1".into()));
    }
    if n > scored.len() {
        return Err(Error::Selection(format!(
            "n = {n} exceeds the {} scored utterances",
            scored.len()
        )));
    }
    let mut ranked: Vec<(&String, &ScoredVariant)> = scored.iter().collect();
    ranked.sort_by(|a, b| {
        b.1.score
            .partial_cmp(&a.1.score)
            .expect("finite scores")
            .then_with(|| a.0.cmp(b.0))
    });
    let entries = ranked[..n]
        .iter()
        .map(|(id, sv)| ((*id).clone(), sv.variant.clone()))
        .collect();
    Ok(CorpusSelection {
        entries,
        method,
        n,
        provenance: Provenance::default(),
    })
}

/// Whole-speaker greedy fill: speakers in descending score order (ties by
/// group id), each admitted only if its full utterance set still fits in
/// `n`; overflowing speakers are skipped and scanning continues.
pub fn select_speaker_wise(
    speaker_scores: &BTreeMap<String, f64>,
    pool: &Manifest,
    n: usize,
) -> Result<CorpusSelection> {
    if n == 0 {
        return Err(Error::Selection("n must be >= 1".into()));
    }
    let mut ranked: Vec<(&String, f64)> = speaker_scores.iter().map(|(g, &s)| (g, s)).collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("finite scores")
            .then_with(|| a.0.cmp(b.0))
    });
    let mut entries: Vec<(String, VariantId)> = Vec::new();
    let mut total = 0usize;
    for (group, _) in ranked {
        let members: Vec<&str> = pool
            .records_of_group(group)
            .map(|r| r.utterance_id.as_str())
            .collect();
        if members.is_empty() {
            continue;
        }
        if total + members.len() > n {
            continue;
        }
        total += members.len();
        entries.extend(
            members
                .into_iter()
                .map(|id| (id.to_string(), pool.variant().clone())),
        );
    }
    Ok(CorpusSelection {
        entries,
        method: SelectionMethod::OursSpk,
        n,
        provenance: Provenance::default(),
    })
}

/// Acoustic-quality threshold baseline: keep records whose observable score
/// is strictly greater than `theta`.
pub fn acoustic_threshold_select(pool: &Manifest, theta: f64) -> Result<CorpusSelection> {
    if !(1.0..=5.0).contains(&theta) {
        return Err(Error::Selection(format!("theta {theta} outside [1, 5]")));
    }
    let entries: Vec<(String, VariantId)> = pool
        .records()
        .iter()
        .filter(|r| r.acoustic_quality > theta)
        .map(|r| (r.utterance_id.clone(), pool.variant().clone()))
        .collect();
    if entries.is_empty() {
        log::warn!("acoustic threshold {theta} selected nothing");
    }
    let n = entries.len();
    Ok(CorpusSelection {
        entries,
        method: SelectionMethod::AcousticTheta,
        n,
        provenance: Provenance {
            theta: Some(theta),
            ..Provenance::default()
        },
    })
}
