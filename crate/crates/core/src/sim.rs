//! Deterministic simulated training world with known ground truth.
//!
//! The simulator generates a synthetic candidate corpus whose hidden state
//! (`LatentState`: base quality, additive-noise level, device distortion)
//! determines each utterance's true training-data quality
//! `q = clamp(b − w_a·a − w_d·d, 1, 5)`. Cleansing variants shrink `a`/`d`
//! at a fixed artifact cost on `b`. Training aggregates the selected
//! utterances' `q` into per-speaker synthesis quality; evaluation adds
//! seeded observation noise. Everything is a pure function of inputs and
//! seed, drawn from label-derived ChaCha8 streams.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::engine::{Evaluator, Trainer};
use crate::manifest::{round_sig6, LatentState, Manifest, UtteranceRecord, VariantId};
use crate::rng::{fnv1a, gaussian, stream};
use crate::selection::CorpusSelection;
use crate::{Error, Result};

/// Weights turning latent defects into lost training-data quality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityWeights {
    /// Weight of the additive-noise level (w_a).
    pub noise: f64,
    /// Weight of the device-distortion level (w_d).
    pub distortion: f64,
}

/// One simulated cleanser: multiplicative defect reduction at a quality cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CleanserParams {
    /// Fraction of the noise level removed (ρ_a in [0, 1]).
    pub noise_reduction: f64,
    /// Fraction of the distortion level removed (ρ_d in [0, 1]).
    pub distortion_reduction: f64,
    /// Base-quality cost of processing artifacts (c >= 0).
    pub artifact_cost: f64,
}

/// Simulated trainer/evaluator behavior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainerParams {
    /// Offset of speaker synthesis quality (μ0).
    pub base_score: f64,
    /// Weight of the speaker's own selected-data mean quality (α).
    pub speaker_weight: f64,
    /// Weight of the whole selected corpus's mean quality (β).
    pub corpus_weight: f64,
    /// Per-speaker training noise (σ_train).
    pub train_noise: f64,
    /// Per-sentence evaluation noise (σ_eval).
    pub eval_noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_speakers: usize,
    /// Inclusive range of utterances per speaker.
    pub utterances_per_speaker: (usize, usize),
    pub embedding_dim: usize,
    pub feature_dim: usize,
    pub rng_seed: u64,
    pub quality_weights: QualityWeights,
    /// Cleanser parameters keyed by variant name; "identity" is implicit.
    pub cleansers: BTreeMap<String, CleanserParams>,
    pub trainer: TrainerParams,
    /// Common sentences evaluated per speaker.
    pub eval_sentences: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        let mut cleansers = BTreeMap::new();
        cleansers.insert(
            "denoise".to_string(),
            CleanserParams {
                noise_reduction: 0.8,
                distortion_reduction: 0.0,
                artifact_cost: 0.08,
            },
        );
        cleansers.insert(
            "restore".to_string(),
            CleanserParams {
                noise_reduction: 0.7,
                distortion_reduction: 0.8,
                artifact_cost: 0.15,
            },
        );
        SimConfig {
            n_speakers: 200,
            utterances_per_speaker: (10, 30),
            embedding_dim: 8,
            feature_dim: 12,
            rng_seed: 0,
            quality_weights: QualityWeights {
                noise: 0.8,
                distortion: 0.6,
            },
            cleansers,
            trainer: TrainerParams {
                base_score: 0.2,
                speaker_weight: 0.85,
                corpus_weight: 0.12,
                train_noise: 0.08,
                eval_noise: 0.25,
            },
            eval_sentences: 100,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_speakers == 0 {
            return Err(Error::InvalidConfig("n_speakers must be > 0".into()));
        }
        let (lo, hi) = self.utterances_per_speaker;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidConfig(format!(
                "utterances_per_speaker range ({lo}, {hi}) invalid"
            )));
        }
        if self.embedding_dim == 0 || self.feature_dim < 3 {
            return Err(Error::InvalidConfig(
                "embedding_dim must be >= 1 and feature_dim >= 3".into(),
            ));
        }
        let w = &self.quality_weights;
        if !(w.noise >= 0.0 && w.distortion >= 0.0) {
            return Err(Error::InvalidConfig("quality weights must be >= 0".into()));
        }
        for (name, c) in &self.cleansers {
            if name == crate::manifest::IDENTITY_VARIANT {
                return Err(Error::InvalidConfig(
                    "\"identity\" is implicit and cannot carry cleanser params".into(),
                ));
            }
            if !(0.0..=1.0).contains(&c.noise_reduction)
                || !(0.0..=1.0).contains(&c.distortion_reduction)
                || !(c.artifact_cost >= 0.0)
            {
                return Err(Error::InvalidConfig(format!(
                    "cleanser \"{name}\" parameters out of range"
                )));
            }
        }
        if let (Some(den), Some(res)) = (self.cleansers.get("denoise"), self.cleansers.get("restore"))
        {
            if !(res.artifact_cost > den.artifact_cost) {
                return Err(Error::InvalidConfig(
                    "restore artifact_cost must exceed denoise artifact_cost".into(),
                ));
            }
        }
        let t = &self.trainer;
        if !(t.train_noise >= 0.0 && t.eval_noise >= 0.0) {
            return Err(Error::InvalidConfig("trainer noise must be >= 0".into()));
        }
        if [t.base_score, t.speaker_weight, t.corpus_weight]
            .iter()
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidConfig("trainer params must be finite".into()));
        }
        if self.eval_sentences == 0 {
            return Err(Error::InvalidConfig("eval_sentences must be >= 1".into()));
        }
        Ok(())
    }

    /// Cleanser lookup treating "identity" as a built-in no-op.
    fn cleanser(&self, v: &VariantId) -> Result<CleanserParams> {
        if v.is_identity() {
            return Ok(CleanserParams {
                noise_reduction: 0.0,
                distortion_reduction: 0.0,
                artifact_cost: 0.0,
            });
        }
        self.cleansers.get(v.name()).copied().ok_or_else(|| {
            Error::Simulation(format!("variant \"{v}\" has no registered cleanser"))
        })
    }
}

/// True training-data quality of a latent state:
/// `clamp(b − w_a·a − w_d·d, 1, 5)`.
pub fn latent_quality(latent: &LatentState, weights: &QualityWeights) -> f64 {
    (latent.base_quality
        - weights.noise * latent.noise_level
        - weights.distortion * latent.device_distortion)
        .clamp(1.0, 5.0)
}

/// Acoustic-quality observation: a noisy, differently-weighted view of the
/// latent state, so observable quality correlates only imperfectly with
/// training-data quality.
fn observe_acoustic_quality(latent: &LatentState, seed: u64, utt_id: &str, variant: &str) -> f64 {
    let mut rng = stream(seed, &format!("aq/{utt_id}/{variant}"));
    let raw = 1.0 + 0.5 * (latent.base_quality - 1.0)
        - 1.05 * latent.noise_level
        - 0.3 * latent.device_distortion
        + gaussian(&mut rng, 0.8);
    round_sig6(raw.clamp(1.0, 5.0))
}

/// Feature observation: the first three dimensions carry noisy views of
/// (b, a, d); the rest is a per-utterance style signature independent of
/// the cleansing variant.
fn observe_features(
    latent: &LatentState,
    seed: u64,
    utt_id: &str,
    variant: &str,
    feature_dim: usize,
) -> Vec<f64> {
    let mut noise = stream(seed, &format!("feat/{utt_id}/{variant}"));
    let mut features = Vec::with_capacity(feature_dim);
    features.push(latent.base_quality + gaussian(&mut noise, 0.20));
    features.push(latent.noise_level + gaussian(&mut noise, 0.10));
    features.push(latent.device_distortion + gaussian(&mut noise, 0.10));
    let mut style = stream(seed, &format!("style/{utt_id}"));
    for _ in 3..feature_dim {
        features.push(gaussian(&mut style, 1.0));
    }
    features.iter().map(|&v| round_sig6(v)).collect()
}

/// Generate a synthetic candidate corpus (identity variant, latent states
/// included). Deterministic given `cfg.rng_seed`.
pub fn generate_corpus(cfg: &SimConfig) -> Result<Manifest> {
    cfg.validate()?;
    let seed = cfg.rng_seed;
    let (lo, hi) = cfg.utterances_per_speaker;
    let mut records = Vec::new();
    let mut utt_counter = 0usize;
    for s in 0..cfg.n_speakers {
        let group_id = format!("g{s:04}");
        let mut rng = stream(seed, &format!("speaker/{s}"));

        let center: Vec<f64> = (0..cfg.embedding_dim)
            .map(|_| gaussian(&mut rng, 2.0))
            .collect();
        // Embedding jitter calibrated so the group compactness score
        // (trace of covariance ≈ D·σ²) usually sits inside the screening
        // band, with a few deliberately too-tight or too-loose groups.
        let class: f64 = rng.gen();
        let jitter = if class < 0.03 {
            0.18
        } else if class < 0.07 {
            1.15
        } else {
            rng.gen_range(0.45..0.85)
        };

        let base_quality_s: f64 = (3.7 + gaussian(&mut rng, 0.55)).clamp(1.2, 5.0);
        // Recording-condition classes: studio speakers are nearly clean,
        // rough ones carry heavy noise and distortion.
        let cond: f64 = rng.gen();
        let (noise_s, distortion_s, burst_a, burst_d) = if cond < 0.27 {
            // Studio-like channels: clean, and bursts are rare.
            (
                rng.gen_range(0.0..0.05),
                rng.gen_range(0.0..0.07),
                0.04,
                0.02,
            )
        } else if cond < 0.45 {
            (
                rng.gen_range(0.10..0.50),
                rng.gen_range(0.10..0.45),
                0.22,
                0.10,
            )
        } else {
            (
                rng.gen_range(0.30..1.60),
                rng.gen_range(0.35..1.50),
                0.30,
                0.14,
            )
        };

        let count = rng.gen_range(lo..=hi);
        let ctc_dist = Exp::new(10.0).expect("positive rate");
        for _ in 0..count {
            let utterance_id = format!("u{utt_counter:06}");
            utt_counter += 1;

            let embedding: Vec<f64> = center
                .iter()
                .map(|c| round_sig6(c + gaussian(&mut rng, jitter)))
                .collect();
            // Utterance-level defect bursts: even clean channels have the
            // occasional passing truck or codec glitch, so quality varies
            // within a speaker, not only across speakers.
            let noise_burst = if rng.gen::<f64>() < 0.22 {
                rng.gen_range(0.5..1.5)
            } else {
                0.0
            };
            let distortion_burst = if rng.gen::<f64>() < 0.10 {
                rng.gen_range(0.4..1.0)
            } else {
                0.0
            };
            let latent = LatentState {
                base_quality: round_sig6(
                    (base_quality_s + gaussian(&mut rng, 0.45)).clamp(1.0, 5.0),
                ),
                noise_level: round_sig6(
                    (noise_s * rng.gen_range(0.7..1.3) + noise_burst + gaussian(&mut rng, 0.05))
                        .max(0.0),
                ),
                device_distortion: round_sig6(
                    (distortion_s * rng.gen_range(0.7..1.3)
                        + distortion_burst
                        + gaussian(&mut rng, 0.05))
                    .max(0.0),
                ),
            };
            let ctc_score = round_sig6(-ctc_dist.sample(&mut rng));
            let duration_s = round_sig6(rng.gen_range(2.0..10.0));
            let acoustic_quality =
                observe_acoustic_quality(&latent, seed, &utterance_id, "identity");
            let features =
                observe_features(&latent, seed, &utterance_id, "identity", cfg.feature_dim);

            records.push(UtteranceRecord {
                utterance_id,
                group_id: group_id.clone(),
                ctc_score,
                embedding,
                features,
                duration_s,
                acoustic_quality,
                latent: Some(latent),
            });
        }
    }
    Manifest::new(records, VariantId::identity())
}

/// Apply one cleansing variant to one utterance: defect levels shrink, the
/// artifact cost is charged, and observables (acoustic quality, features)
/// are re-observed from the new latent state. Ids, embedding, alignment
/// score and duration are untouched.
pub fn sim_cleanse(u: &UtteranceRecord, v: &VariantId, cfg: &SimConfig) -> Result<UtteranceRecord> {
    let latent = u
        .latent
        .as_ref()
        .ok_or_else(|| Error::Simulation(format!("utterance {} has no latent state", u.utterance_id)))?;
    if v.is_identity() {
        return Ok(u.clone());
    }
    let params = cfg.cleanser(v)?;
    let cleansed = LatentState {
        base_quality: round_sig6((latent.base_quality - params.artifact_cost).clamp(1.0, 5.0)),
        noise_level: round_sig6(latent.noise_level * (1.0 - params.noise_reduction)),
        device_distortion: round_sig6(
            latent.device_distortion * (1.0 - params.distortion_reduction),
        ),
    };
    let acoustic_quality =
        observe_acoustic_quality(&cleansed, cfg.rng_seed, &u.utterance_id, v.name());
    let features = observe_features(
        &cleansed,
        cfg.rng_seed,
        &u.utterance_id,
        v.name(),
        u.features.len(),
    );
    Ok(UtteranceRecord {
        acoustic_quality,
        features,
        latent: Some(cleansed),
        ..u.clone()
    })
}

/// Apply a variant to a whole manifest.
pub fn cleanse_manifest(m: &Manifest, v: &VariantId, cfg: &SimConfig) -> Result<Manifest> {
    let records = m
        .records()
        .iter()
        .map(|u| sim_cleanse(u, v, cfg))
        .collect::<Result<Vec<_>>>()?;
    Manifest::new(records, v.clone())
}

/// A trained simulated model: per-speaker synthesis quality for every
/// speaker in the candidate pool, seen or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimModel {
    speaker_quality: BTreeMap<String, f64>,
    corpus_digest: u64,
    seed: u64,
}

impl SimModel {
    /// True synthesis quality of a speaker, before evaluation noise.
    pub fn speaker_quality(&self, group_id: &str) -> Option<f64> {
        self.speaker_quality.get(group_id).copied()
    }

    pub fn speakers(&self) -> impl Iterator<Item = (&str, f64)> {
        self.speaker_quality.iter().map(|(g, &q)| (g.as_str(), q))
    }
}

/// Train a simulated model on a selection drawn from `pool`.
///
/// Seen speakers get `Q = clamp(μ0 + α·mean q(selected own) + β·mean
/// q(selected all) + ε, 1, 5)`; unseen speakers reuse the speaker term of
/// their nearest seen speaker (by mean embedding distance) damped by 0.5.
pub fn sim_train(
    selection: &CorpusSelection,
    pool: &Manifest,
    cfg: &SimConfig,
    seed: u64,
) -> Result<SimModel> {
    cfg.validate()?;
    if selection.is_empty() {
        return Err(Error::Simulation("empty selection".into()));
    }
    let mut by_speaker: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut all_q = Vec::with_capacity(selection.len());
    for (id, _) in &selection.entries {
        let rec = pool
            .get(id)
            .ok_or_else(|| Error::Simulation(format!("selected id \"{id}\" not in pool")))?;
        let latent = rec.latent.as_ref().ok_or_else(|| {
            Error::Simulation(format!("utterance {id} has no latent state"))
        })?;
        let q = latent_quality(latent, &cfg.quality_weights);
        by_speaker.entry(&rec.group_id).or_default().push(q);
        all_q.push(q);
    }
    let corpus_mean = all_q.iter().sum::<f64>() / all_q.len() as f64;
    let t = &cfg.trainer;

    let seen_terms: BTreeMap<&str, f64> = by_speaker
        .iter()
        .map(|(g, qs)| (*g, t.speaker_weight * qs.iter().sum::<f64>() / qs.len() as f64))
        .collect();
    let seen_embeddings: Vec<(&str, Vec<f64>)> = seen_terms
        .keys()
        .map(|g| (*g, pool.group_mean_embedding(g).expect("seen group in pool")))
        .collect();

    let mut speaker_quality = BTreeMap::new();
    for group in pool.group_ids() {
        let term = match seen_terms.get(group.as_str()) {
            Some(&t) => t,
            None => {
                let own = pool
                    .group_mean_embedding(&group)
                    .expect("group taken from pool");
                let nearest = seen_embeddings
                    .iter()
                    .map(|(g, e)| {
                        let d2: f64 = e
                            .iter()
                            .zip(&own)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum();
                        (*g, d2)
                    })
                    .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(b.0)))
                    .expect("non-empty selection implies seen speakers");
                0.5 * seen_terms[nearest.0]
            }
        };
        let mut noise = stream(seed, &format!("train/{group}"));
        let q = (t.base_score + term + t.corpus_weight * corpus_mean
            + gaussian(&mut noise, t.train_noise))
        .clamp(1.0, 5.0);
        speaker_quality.insert(group, q);
    }

    let mut digest_input: Vec<String> = selection
        .entries
        .iter()
        .map(|(id, v)| format!("{id}:{v}"))
        .collect();
    digest_input.sort();
    let corpus_digest = fnv1a(digest_input.join(";").as_bytes());

    Ok(SimModel {
        speaker_quality,
        corpus_digest,
        seed,
    })
}

/// Pseudo-MOS of one speaker: the mean of `eval_sentences` noisy draws of
/// the model's synthesis quality, each clamped to [1, 5].
pub fn sim_eval_speaker(model: &SimModel, speaker: &str, cfg: &SimConfig, seed: u64) -> Result<f64> {
    let q = model
        .speaker_quality(speaker)
        .ok_or_else(|| Error::Simulation(format!("unknown speaker \"{speaker}\"")))?;
    if cfg.trainer.eval_noise == 0.0 {
        return Ok(q);
    }
    let mut rng = stream(seed, &format!("eval/{speaker}"));
    let n = cfg.eval_sentences;
    let mut total = 0.0;
    for _ in 0..n {
        total += (q + gaussian(&mut rng, cfg.trainer.eval_noise)).clamp(1.0, 5.0);
    }
    Ok(total / n as f64)
}

/// The simulated world as a pluggable trainer/evaluator pair.
#[derive(Debug, Clone)]
pub struct SimWorld {
    pub cfg: SimConfig,
}

impl SimWorld {
    pub fn new(cfg: SimConfig) -> SimWorld {
        SimWorld { cfg }
    }

    /// Nominal stage durations for compute accounting: a fixed throughput
    /// model, deterministic so reports stay byte-stable.
    pub fn nominal_durations(
        &self,
        selection_len: usize,
        pool_len: usize,
    ) -> (std::time::Duration, std::time::Duration, std::time::Duration) {
        let train = (selection_len as u64).div_ceil(2);
        let eval = (self.cfg.n_speakers as u64 * self.cfg.eval_sentences as u64).div_ceil(40);
        let regress = (selection_len as u64 + pool_len as u64).div_ceil(50);
        (
            std::time::Duration::from_secs(train),
            std::time::Duration::from_secs(eval),
            std::time::Duration::from_secs(regress),
        )
    }
}

impl Trainer for SimWorld {
    type Model = SimModel;

    fn train(&self, selection: &CorpusSelection, pool: &Manifest, seed: u64) -> Result<SimModel> {
        sim_train(selection, pool, &self.cfg, seed)
    }
}

impl Evaluator for SimWorld {
    type Model = SimModel;

    fn eval_speaker(&self, model: &SimModel, speaker: &str, seed: u64) -> Result<f64> {
        sim_eval_speaker(model, speaker, &self.cfg, seed)
    }
}
