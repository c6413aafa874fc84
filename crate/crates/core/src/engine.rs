//! The evaluation-in-the-loop core.
//!
//! One quality loop over a candidate pool: train a model on the (possibly
//! sampled) pool, evaluate every speaker's synthetic output, fit a regressor
//! from the trained utterances' features to their speaker's score, then
//! score every pool utterance with it. Running the loop once per cleansing
//! variant yields a full (utterance, variant) quality table.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::manifest::{Manifest, VariantId, VariantSet};
use crate::regressor::{self, RegressorConfig};
use crate::rng;
use crate::selection::{CorpusSelection, Provenance, SelectionMethod};
use crate::{Error, Result};

/// Trains a model from a corpus selection. Implementations must be
/// deterministic given the seed.
pub trait Trainer {
    type Model;

    fn train(&self, selection: &CorpusSelection, pool: &Manifest, seed: u64)
        -> Result<Self::Model>;
}

/// Scores one speaker's synthetic output in [1, 5]. Implementations must be
/// deterministic given the seed.
pub trait Evaluator {
    type Model;

    fn eval_speaker(&self, model: &Self::Model, speaker: &str, seed: u64) -> Result<f64>;
}

/// Loop parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    /// Fraction of the pool used for the initial training, in (0, 1].
    /// 1.0 trains on everything; 0.1 reproduces the sampled variant.
    #[serde(default = "default_fraction")]
    pub sampling_fraction: f64,
    #[serde(default)]
    pub regressor: RegressorConfig,
    pub seed: u64,
    /// Cleansing variants to run, in registration order ("identity" is
    /// always included, always first).
    #[serde(default)]
    pub variants: Vec<String>,
    /// Run per-variant loops on threads. The result is identical to
    /// sequential execution by contract.
    #[serde(default)]
    pub parallel: bool,
}

fn default_fraction() -> f64 {
    1.0
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sampling_fraction > 0.0 && self.sampling_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "sampling_fraction {} outside (0, 1]",
                self.sampling_fraction
            )));
        }
        self.regressor.validate()
    }

    pub fn variant_set(&self) -> Result<VariantSet> {
        VariantSet::new(self.variants.iter())
    }
}

/// Per-(utterance, variant) training-data quality plus per-variant
/// speaker-wise pseudo-MOS.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityTable {
    variants: Vec<VariantId>,
    /// utterance id → variant → score, full coverage.
    utterance: BTreeMap<String, BTreeMap<VariantId, f64>>,
    /// variant → speaker → pseudo-MOS (seen and unseen speakers).
    speaker: BTreeMap<VariantId, BTreeMap<String, f64>>,
}

impl QualityTable {
    pub fn new(
        variants: Vec<VariantId>,
        utterance: BTreeMap<String, BTreeMap<VariantId, f64>>,
        speaker: BTreeMap<VariantId, BTreeMap<String, f64>>,
    ) -> Result<QualityTable> {
        if variants.is_empty() {
            return Err(Error::Engine("no variants".into()));
        }
        for (id, per_variant) in &utterance {
            for v in &variants {
                match per_variant.get(v) {
                    Some(s) if s.is_finite() => {}
                    Some(_) => {
                        return Err(Error::Engine(format!("non-finite score for ({id}, {v})")))
                    }
                    None => {
                        return Err(Error::Engine(format!("missing score for ({id}, {v})")))
                    }
                }
            }
            if per_variant.len() != variants.len() {
                return Err(Error::Engine(format!(
                    "utterance {id} scored for unknown variants"
                )));
            }
        }
        Ok(QualityTable {
            variants,
            utterance,
            speaker,
        })
    }

    pub fn variants(&self) -> &[VariantId] {
        &self.variants
    }

    pub fn utterance_ids(&self) -> impl Iterator<Item = &str> {
        self.utterance.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.utterance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterance.is_empty()
    }

    /// Total number of (utterance, variant) entries.
    pub fn entry_count(&self) -> usize {
        self.utterance.len() * self.variants.len()
    }

    pub fn utterance_score(&self, id: &str, variant: &VariantId) -> Option<f64> {
        self.utterance.get(id).and_then(|m| m.get(variant)).copied()
    }

    pub fn speaker_scores(&self, variant: &VariantId) -> Option<&BTreeMap<String, f64>> {
        self.speaker.get(variant)
    }

    /// Merge per-variant tables produced by independent loops.
    pub fn merge(parts: Vec<QualityTable>) -> Result<QualityTable> {
        let mut variants = Vec::new();
        let mut utterance: BTreeMap<String, BTreeMap<VariantId, f64>> = BTreeMap::new();
        let mut speaker = BTreeMap::new();
        for part in parts {
            for v in part.variants {
                if variants.contains(&v) {
                    return Err(Error::Engine(format!("variant {v} merged twice")));
                }
                variants.push(v);
            }
            for (id, scores) in part.utterance {
                utterance.entry(id).or_default().extend(scores);
            }
            speaker.extend(part.speaker);
        }
        QualityTable::new(variants, utterance, speaker)
    }

    /// Write the table as JSONL, one `(utterance_id, variant, score)` per
    /// line, plus a `.speakers.jsonl` sidecar with per-variant speaker
    /// scores. Deterministic: utterances sorted, variants in registration
    /// order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (id, per_variant) in &self.utterance {
            for v in &self.variants {
                let line = serde_json::json!({
                    "utterance_id": id,
                    "variant": v,
                    "score": crate::manifest::round_sig6(per_variant[v]),
                });
                out.push_str(&line.to_string());
                out.push('\n');
            }
        }
        write_text(path, &out)?;
        let mut side = String::new();
        for v in &self.variants {
            if let Some(scores) = self.speaker.get(v) {
                for (group, score) in scores {
                    let line = serde_json::json!({
                        "variant": v,
                        "group_id": group,
                        "score": crate::manifest::round_sig6(*score),
                    });
                    side.push_str(&line.to_string());
                    side.push('\n');
                }
            }
        }
        write_text(&sidecar_path(path), &side)
    }

    pub fn load(path: &Path) -> Result<QualityTable> {
        #[derive(Deserialize)]
        struct Line {
            utterance_id: String,
            variant: VariantId,
            score: f64,
        }
        #[derive(Deserialize)]
        struct SpeakerLine {
            variant: VariantId,
            group_id: String,
            score: f64,
        }
        let text = read_text(path)?;
        let mut variants: Vec<VariantId> = Vec::new();
        let mut utterance: BTreeMap<String, BTreeMap<VariantId, f64>> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let line: Line = serde_json::from_str(raw).map_err(|e| Error::MalformedLine {
                path: path.to_path_buf(),
                line: idx + 1,
                message: e.to_string(),
            })?;
            if !variants.contains(&line.variant) {
                variants.push(line.variant.clone());
            }
            utterance
                .entry(line.utterance_id)
                .or_default()
                .insert(line.variant, line.score);
        }
        let side = read_text(&sidecar_path(path))?;
        let mut speaker: BTreeMap<VariantId, BTreeMap<String, f64>> = BTreeMap::new();
        for (idx, raw) in side.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let line: SpeakerLine =
                serde_json::from_str(raw).map_err(|e| Error::MalformedLine {
                    path: sidecar_path(path),
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            speaker
                .entry(line.variant)
                .or_default()
                .insert(line.group_id, line.score);
        }
        QualityTable::new(variants, utterance, speaker)
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.speakers.jsonl"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    f.write_all(text.as_bytes()).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Seed for one variant's loop, independent of execution order.
pub fn variant_seed(seed: u64, variant: &VariantId) -> u64 {
    seed ^ rng::fnv1a(variant.name().as_bytes())
}

/// Seeded uniform sample of ⌈fraction·n⌉ pool indices, ascending.
///
/// This is the loop's exact initial-selection rule, exposed so callers can
/// reproduce which utterances fed the regressor fit.
pub fn sample_indices(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let take = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    if take == n {
        return (0..n).collect();
    }
    let mut rng = rng::stream(seed, "sample");
    let mut indices: Vec<usize> = (0..n).collect();
    // Partial Fisher–Yates: fix the first `take` slots.
    for i in 0..take {
        let j = i + rand::Rng::gen_range(&mut rng, 0..(n - i));
        indices.swap(i, j);
    }
    let mut chosen = indices[..take].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Output of one variant's loop.
struct SingleLoop {
    utterance_scores: BTreeMap<String, f64>,
    speaker_scores: BTreeMap<String, f64>,
}

fn run_single<T, E>(
    pool: &Manifest,
    trainer: &T,
    evaluator: &E,
    cfg: &LoopConfig,
    seed: u64,
) -> Result<SingleLoop>
where
    T: Trainer,
    E: Evaluator<Model = T::Model>,
{
    if pool.is_empty() {
        return Err(Error::Engine("empty pool".into()));
    }

    // 1. Initial selection: everything, or a seeded uniform sample.
    let indices = sample_indices(pool.len(), cfg.sampling_fraction, seed);
    if indices.is_empty() {
        return Err(Error::Engine("empty initial sample".into()));
    }
    let entries: Vec<(String, VariantId)> = indices
        .iter()
        .map(|&i| {
            (
                pool.records()[i].utterance_id.clone(),
                pool.variant().clone(),
            )
        })
        .collect();
    let initial = CorpusSelection {
        entries,
        method: SelectionMethod::Unselected,
        n: indices.len(),
        provenance: Provenance {
            seed: Some(seed),
            sampling_fraction: Some(cfg.sampling_fraction),
            ..Provenance::default()
        },
    };

    // 2. Train on the initial selection.
    let model = trainer
        .train(&initial, pool, seed)
        .map_err(|e| e.in_stage("train"))?;

    // 3. Evaluate every speaker in the pool, seen and unseen.
    let mut speaker_scores = BTreeMap::new();
    for group in pool.group_ids() {
        let raw = evaluator
            .eval_speaker(&model, &group, seed)
            .map_err(|e| e.in_stage("evaluate"))?;
        let score = if (1.0..=5.0).contains(&raw) {
            raw
        } else {
            log::warn!("evaluator returned {raw} for speaker {group}; clamping to [1, 5]");
            raw.clamp(1.0, 5.0)
        };
        speaker_scores.insert(group, score);
    }

    // 4. Fit the regressor on the trained utterances: each one's target is
    //    its speaker's score.
    let selected_ids = initial.utterance_ids();
    let mut features = Vec::with_capacity(selected_ids.len());
    let mut targets = Vec::with_capacity(selected_ids.len());
    for rec in pool.records() {
        if selected_ids.contains(&rec.utterance_id) {
            features.push(rec.features.clone());
            targets.push(speaker_scores[&rec.group_id]);
        }
    }
    let fitted = regressor::fit(&features, &targets, &cfg.regressor)
        .map_err(|e| e.in_stage("regress"))?;

    // 5. Score the whole pool, sampled or not, with the regressor.
    let mut utterance_scores = BTreeMap::new();
    for rec in pool.records() {
        let score = fitted
            .predict(&rec.features)
            .map_err(|e| e.in_stage("regress"))?;
        utterance_scores.insert(rec.utterance_id.clone(), score);
    }

    Ok(SingleLoop {
        utterance_scores,
        speaker_scores,
    })
}

/// One quality loop over a single-variant pool.
pub fn run_quality_loop<T, E>(
    pool: &Manifest,
    trainer: &T,
    evaluator: &E,
    cfg: &LoopConfig,
) -> Result<QualityTable>
where
    T: Trainer,
    E: Evaluator<Model = T::Model>,
{
    cfg.validate()?;
    let single = run_single(pool, trainer, evaluator, cfg, cfg.seed)?;
    let variant = pool.variant().clone();
    let utterance = single
        .utterance_scores
        .into_iter()
        .map(|(id, s)| (id, BTreeMap::from([(variant.clone(), s)])))
        .collect();
    QualityTable::new(
        vec![variant.clone()],
        utterance,
        BTreeMap::from([(variant, single.speaker_scores)]),
    )
}

/// Independent quality loops, one per cleansing variant, merged into a full
/// table. Per-variant seeds derive from the base seed and the variant name,
/// so results do not depend on execution order; with `cfg.parallel` the
/// loops run on threads and the result is identical to sequential runs.
pub fn run_variant_loops<T, E>(
    pools: &[(VariantId, Manifest)],
    trainer: &T,
    evaluator: &E,
    cfg: &LoopConfig,
) -> Result<QualityTable>
where
    T: Trainer + Sync,
    E: Evaluator<Model = T::Model> + Sync,
{
    cfg.validate()?;
    if pools.is_empty() {
        return Err(Error::Engine("no variant pools".into()));
    }
    let reference_ids = pools[0].1.utterance_ids();
    for (v, m) in pools {
        if m.utterance_ids() != reference_ids {
            return Err(Error::Engine(format!(
                "variant \"{v}\" covers a different utterance set than \"{}\"",
                pools[0].0
            )));
        }
    }

    let run_one = |(variant, pool): &(VariantId, Manifest)| -> Result<QualityTable> {
        let seed = variant_seed(cfg.seed, variant);
        let single = run_single(pool, trainer, evaluator, cfg, seed)?;
        let utterance = single
            .utterance_scores
            .into_iter()
            .map(|(id, s)| (id, BTreeMap::from([(variant.clone(), s)])))
            .collect();
        QualityTable::new(
            vec![variant.clone()],
            utterance,
            BTreeMap::from([(variant.clone(), single.speaker_scores)]),
        )
    };

    let parts: Vec<QualityTable> = if cfg.parallel {
        let results: Vec<Result<QualityTable>> =
            std::thread::scope(|s| {
                let handles: Vec<_> = pools.iter().map(|p| s.spawn(move || run_one(p))).collect();
                handles.into_iter().map(|h| h.join().expect("loop thread")).collect()
            });
        results.into_iter().collect::<Result<Vec<_>>>()?
    } else {
        pools.iter().map(run_one).collect::<Result<Vec<_>>>()?
    };

    QualityTable::merge(parts)
}

/// End-to-end compute accounting: two training phases (initial and final)
/// plus evaluation plus regression.
pub fn cost_account(train: Duration, eval: Duration, regress: Duration) -> Duration {
    train * 2 + eval + regress
}

/// Parse durations like "1h26m27s", "9m7s", "42s".
pub fn parse_duration(text: &str) -> Result<Duration> {
    let s = text.trim();
    if s.is_empty() {
        return Err(Error::InvalidConfig("empty duration".into()));
    }
    let mut total = 0u64;
    let mut digits = String::new();
    let mut seen_any = false;
    for ch in s.chars() {
        if ch.is_ascii_digit() {
            digits.push(ch);
            continue;
        }
        let value: u64 = digits
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad duration \"{text}\"")))?;
        digits.clear();
        seen_any = true;
        total += match ch {
            'h' => value * 3600,
            'm' => value * 60,
            's' => value,
            _ => return Err(Error::InvalidConfig(format!("bad duration unit '{ch}'"))),
        };
    }
    if !digits.is_empty() || !seen_any {
        return Err(Error::InvalidConfig(format!(
            "duration \"{text}\" must end with h/m/s units"
        )));
    }
    Ok(Duration::from_secs(total))
}

/// Format whole seconds as "4h13m37s" (zero prints as "0s").
pub fn format_duration(d: Duration) -> String {
    let secs = d.as_secs();
    if secs == 0 {
        return "0s".into();
    }
    let (h, rem) = (secs / 3600, secs % 3600);
    let (m, s) = (rem / 60, rem % 60);
    let mut out = String::new();
    if h > 0 {
        out.push_str(&format!("{h}h"));
    }
    if m > 0 || (h > 0 && s > 0) {
        out.push_str(&format!("{m}m"));
    }
    if s > 0 || (h == 0 && m == 0) {
        out.push_str(&format!("{s}s"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_account_reproduces_published_totals() {
        let total = cost_account(
            parse_duration("1h26m27s").unwrap(),
            parse_duration("1h11m36s").unwrap(),
            parse_duration("9m7s").unwrap(),
        );
        assert_eq!(format_duration(total), "4h13m37s");

        let total = cost_account(
            parse_duration("5h9m33s").unwrap(),
            parse_duration("2h1m14s").unwrap(),
            parse_duration("9m7s").unwrap(),
        );
        assert_eq!(format_duration(total), "12h29m27s");

        assert_eq!(
            cost_account(Duration::ZERO, Duration::ZERO, Duration::ZERO),
            Duration::ZERO
        );
    }

    #[test]
    fn duration_parsing_round_trips() {
        for text in ["1h26m27s", "9m7s", "42s", "2h1m14s", "3h"] {
            let d = parse_duration(text).unwrap();
            assert_eq!(parse_duration(&format_duration(d)).unwrap(), d);
        }
        assert!(parse_duration("abc").is_err());
        assert!(parse_duration("12").is_err());
        assert!(parse_duration("").is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_sized() {
        let a = sample_indices(100, 0.1, 7);
        let b = sample_indices(100, 0.1, 7);
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        let c = sample_indices(100, 0.1, 8);
        assert_ne!(a, c);
        assert_eq!(sample_indices(5, 1.0, 0), vec![0, 1, 2, 3, 4]);
        // Ceiling behavior.
        assert_eq!(sample_indices(10, 0.25, 0).len(), 3);
        assert_eq!(sample_indices(3, 0.01, 0).len(), 1);
    }

    #[test]
    fn variant_seeds_differ_per_variant() {
        let s = 7u64;
        let a = variant_seed(s, &VariantId::identity());
        let b = variant_seed(s, &VariantId::new("denoise"));
        assert_ne!(a, b);
        assert_eq!(a, variant_seed(s, &VariantId::identity()));
    }
}
