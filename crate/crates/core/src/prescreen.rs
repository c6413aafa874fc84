//! Pre-screening: drop utterances and groups too broken for initial training.
//!
//! Two filters. The alignment filter keeps utterances whose log-domain CTC
//! score is at or above a threshold. The compactness filter keeps whole
//! groups whose embedding spread — the trace of the biased covariance of the
//! group's embeddings — falls inside a two-sided band; a surviving group is
//! afterwards treated as a single unique speaker.

use serde::{Deserialize, Serialize};

use crate::manifest::Manifest;
use crate::{Error, Result};

/// Thresholds for both filters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrescreenConfig {
    /// Minimum CTC alignment score (log domain, <= 0 for real scores).
    pub ctc_threshold: f64,
    /// Lower compactness bound; groups tighter than this (including
    /// degenerate single-utterance groups, score 0) are dropped.
    pub compactness_low: f64,
    /// Upper compactness bound; groups looser than this are dropped.
    pub compactness_high: f64,
}

impl Default for PrescreenConfig {
    fn default() -> Self {
        PrescreenConfig {
            ctc_threshold: -0.3,
            compactness_low: 1.0,
            compactness_high: 7.0,
        }
    }
}

impl PrescreenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ctc_threshold.is_finite()
            && self.compactness_low.is_finite()
            && self.compactness_high.is_finite())
        {
            return Err(Error::InvalidConfig("prescreen thresholds must be finite".into()));
        }
        if self.compactness_low >= self.compactness_high {
            return Err(Error::InvalidConfig(format!(
                "compactness_low {} must be < compactness_high {}",
                self.compactness_low, self.compactness_high
            )));
        }
        Ok(())
    }
}

/// Keep records with `ctc_score >= threshold`, order preserved.
pub fn ctc_filter(m: &Manifest, threshold: f64) -> Result<Manifest> {
    let kept: Vec<_> = m
        .records()
        .iter()
        .filter(|r| r.ctc_score >= threshold)
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(Error::InvalidManifest("all candidates filtered".into()));
    }
    Manifest::new(kept, m.variant().clone())
}

/// Spread of a group's embeddings: trace of the biased covariance, equal to
/// the mean squared Euclidean distance from the group mean.
pub fn compactness_score(embeddings: &[&[f64]]) -> Result<f64> {
    if embeddings.is_empty() {
        return Err(Error::InvalidManifest("empty group".into()));
    }
    let dim = embeddings[0].len();
    if embeddings.iter().any(|e| e.len() != dim) {
        return Err(Error::InvalidManifest("embedding dimension mismatch".into()));
    }
    let n = embeddings.len() as f64;
    let mut mean = vec![0.0; dim];
    for e in embeddings {
        for (m, v) in mean.iter_mut().zip(*e) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut total = 0.0;
    for e in embeddings {
        for (m, v) in mean.iter().zip(*e) {
            let d = v - m;
            total += d * d;
        }
    }
    Ok(total / n)
}

/// Drop every record whose group's compactness score lies outside
/// `[compactness_low, compactness_high]`.
pub fn compactness_filter(m: &Manifest, cfg: &PrescreenConfig) -> Result<Manifest> {
    cfg.validate()?;
    let mut keep_group: std::collections::BTreeMap<String, bool> = std::collections::BTreeMap::new();
    for group in m.group_ids() {
        let embeddings: Vec<&[f64]> = m
            .records_of_group(&group)
            .map(|r| r.embedding.as_slice())
            .collect();
        let score = compactness_score(&embeddings)?;
        let keep = score >= cfg.compactness_low && score <= cfg.compactness_high;
        keep_group.insert(group, keep);
    }
    let kept: Vec<_> = m
        .records()
        .iter()
        .filter(|r| keep_group.get(r.group_id.as_str()).copied().unwrap_or(false))
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(Error::InvalidManifest("all candidates filtered".into()));
    }
    Manifest::new(kept, m.variant().clone())
}

/// Both filters in pipeline order: alignment first, then compactness.
pub fn prescreen(m: &Manifest, cfg: &PrescreenConfig) -> Result<Manifest> {
    cfg.validate()?;
    let m = ctc_filter(m, cfg.ctc_threshold)?;
    compactness_filter(&m, cfg)
}
