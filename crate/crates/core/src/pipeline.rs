//! End-to-end staged pipeline: generate (or take) a candidate pool,
//! pre-screen it, run the per-variant quality loops, switch variants and
//! select a corpus, retrain on the result, and report.
//!
//! Every stage reads files and writes files under one output directory, so
//! an interrupted run can resume, and any single stage can be re-run from
//! its inputs with byte-identical output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{self, LoopConfig, QualityTable};
use crate::manifest::{
    load_manifest, round_sig6, variant_path, write_manifest, Manifest, VariantId, VariantSet,
};
use crate::metrics::{self, CostAccount, HqThreshold, Report};
use crate::prescreen::{self, PrescreenConfig};
use crate::regressor::RegressorConfig;
use crate::rng;
use crate::selection::{self, CorpusSelection, SelectionMethod};
use crate::sim::{self, SimConfig, SimWorld};
use crate::{Error, Result};

/// Placeholder for plugging a real trainer/evaluator behind the pipeline.
/// Validated for shape only; execution requires the simulator until real
/// adapters are registered through [`run_pipeline_with`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealStanza {
    /// Existing candidate pool manifest; variant siblings must sit next
    /// to it as `<stem>.<variant>.jsonl`.
    pub pool: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopStanza {
    #[serde(default = "default_fraction")]
    pub sampling_fraction: f64,
    #[serde(default)]
    pub regressor: RegressorConfig,
    #[serde(default)]
    pub parallel: bool,
}

fn default_fraction() -> f64 {
    1.0
}

impl Default for LoopStanza {
    fn default() -> Self {
        LoopStanza {
            sampling_fraction: 1.0,
            regressor: RegressorConfig::default(),
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStanza {
    pub method: SelectionMethod,
    /// Absolute corpus size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Corpus size as a fraction of the pre-screened pool.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_fraction: Option<f64>,
    /// Acoustic-quality threshold (acoustic method only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportStanza {
    /// Histogram grid as "start:stop:step".
    #[serde(default = "default_grid")]
    pub grid: String,
    /// Fixed high-quality threshold; overridden by `reference_scores`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hq_threshold: Option<f64>,
    /// Speaker-score JSONL of a reference model; its minimum becomes the
    /// high-quality threshold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_scores: Option<PathBuf>,
}

fn default_grid() -> String {
    "1.0:5.0:0.05".into()
}

impl Default for ReportStanza {
    fn default() -> Self {
        ReportStanza {
            grid: default_grid(),
            hq_threshold: None,
            reference_scores: None,
        }
    }
}

/// Whole-pipeline configuration. Exactly one of `sim` / `real` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub out_dir: PathBuf,
    /// Cleansing variants, registration order; identity is implicit.
    pub variants: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub real: Option<RealStanza>,
    #[serde(default)]
    pub prescreen: PrescreenConfig,
    #[serde(rename = "loop", default)]
    pub loop_stanza: LoopStanza,
    pub selection: SelectionStanza,
    #[serde(default)]
    pub report: ReportStanza,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        match (&self.sim, &self.real) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(Error::InvalidConfig(
                    "exactly one of \"sim\" and \"real\" must be present".into(),
                ))
            }
            _ => {}
        }
        if let Some(sim) = &self.sim {
            sim.validate()?;
            for v in &self.variants {
                if v != crate::manifest::IDENTITY_VARIANT && !sim.cleansers.contains_key(v) {
                    return Err(Error::InvalidConfig(format!(
                        "variant \"{v}\" has no cleanser parameters in the sim stanza"
                    )));
                }
            }
        }
        VariantSet::new(self.variants.iter())?;
        self.prescreen.validate()?;
        let loop_cfg = self.loop_config();
        loop_cfg.validate()?;
        let s = &self.selection;
        let sized = s.n.is_some() || s.n_fraction.is_some();
        match s.method {
            SelectionMethod::OursUtt | SelectionMethod::OursSpk => {
                if !sized {
                    return Err(Error::InvalidConfig(format!(
                        "method {} needs \"n\" or \"n_fraction\"",
                        s.method.as_str()
                    )));
                }
                if s.theta.is_some() {
                    return Err(Error::InvalidConfig(
                        "\"theta\" only applies to the acoustic method".into(),
                    ));
                }
            }
            SelectionMethod::AcousticTheta => {
                if sized == s.theta.is_some() {
                    return Err(Error::InvalidConfig(
                        "acoustic method needs exactly one of \"theta\" and \"n\"/\"n_fraction\""
                            .into(),
                    ));
                }
            }
            SelectionMethod::Unselected => {
                if sized || s.theta.is_some() {
                    return Err(Error::InvalidConfig(
                        "unselected method takes no size or theta".into(),
                    ));
                }
            }
        }
        if let (Some(n), Some(_)) = (s.n, s.n_fraction) {
            let _ = n;
            return Err(Error::InvalidConfig(
                "give \"n\" or \"n_fraction\", not both".into(),
            ));
        }
        metrics::parse_grid(&self.report.grid)?;
        Ok(())
    }

    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            sampling_fraction: self.loop_stanza.sampling_fraction,
            regressor: self.loop_stanza.regressor.clone(),
            seed: self.seed,
            variants: self.variants.clone(),
            parallel: self.loop_stanza.parallel,
        }
    }

    /// Stable digest of the configured behavior, used to guard `--resume`.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        let text = serde_json::to_string(&canonical).expect("config serialization");
        format!("{:016x}", rng::fnv1a(text.as_bytes()))
    }

    pub fn from_json(text: &str) -> Result<PipelineConfig> {
        let cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        PipelineConfig::from_json(&text)
    }
}

/// Artifact layout inside the output directory.
pub struct Artifacts {
    pub corpus: PathBuf,
    pub prescreened: PathBuf,
    pub quality: PathBuf,
    pub selection: PathBuf,
    pub retrain_pool: PathBuf,
    pub speakers: PathBuf,
    pub report: PathBuf,
    pub histogram_csv: PathBuf,
    pub run_meta: PathBuf,
}

impl Artifacts {
    pub fn new(out_dir: &Path) -> Artifacts {
        Artifacts {
            corpus: out_dir.join("corpus.jsonl"),
            prescreened: out_dir.join("prescreened.jsonl"),
            quality: out_dir.join("quality.jsonl"),
            selection: out_dir.join("selection.jsonl"),
            retrain_pool: out_dir.join("retrain_pool.jsonl"),
            speakers: out_dir.join("speakers.jsonl"),
            report: out_dir.join("report.json"),
            histogram_csv: out_dir.join("histogram.csv"),
            run_meta: out_dir.join("run.json"),
        }
    }
}

/// One final-model speaker score with its mean embedding, as stored in
/// `speakers.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerScore {
    pub group_id: String,
    pub score: f64,
    pub embedding: Vec<f64>,
}

/// Write final speaker scores as JSONL.
pub fn write_speaker_scores(path: &Path, scores: &[SpeakerScore]) -> Result<()> {
    let mut out = String::new();
    for s in scores {
        let line = SpeakerScore {
            group_id: s.group_id.clone(),
            score: round_sig6(s.score),
            embedding: s.embedding.iter().map(|&v| round_sig6(v)).collect(),
        };
        out.push_str(&serde_json::to_string(&line).expect("speaker line"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_speaker_scores(path: &Path) -> Result<Vec<SpeakerScore>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let s: SpeakerScore = serde_json::from_str(line).map_err(|e| Error::MalformedLine {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(s);
    }
    Ok(out)
}

/// Speaker-score map from a JSONL file with `group_id` and `score` fields
/// (embeddings optional), e.g. a reference model's scores.
pub fn load_score_map(path: &Path) -> Result<BTreeMap<String, f64>> {
    #[derive(Deserialize)]
    struct Line {
        group_id: String,
        score: f64,
    }
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let l: Line = serde_json::from_str(line).map_err(|e| Error::MalformedLine {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.insert(l.group_id, l.score);
    }
    Ok(out)
}

fn all_exist(paths: &[&Path]) -> bool {
    paths.iter().all(|p| p.exists())
}

#[derive(Serialize, Deserialize)]
struct RunMeta {
    config_digest: String,
    version: String,
}

/// Run the full pipeline against the built-in simulator.
pub fn run_pipeline(cfg: &PipelineConfig, resume: bool) -> Result<Report> {
    cfg.validate()?;
    let sim_cfg = cfg.sim.clone().ok_or_else(|| {
        Error::InvalidConfig(
            "no real adapter is registered; this build runs the \"sim\" stanza only".into(),
        )
    })?;
    let world = SimWorld::new(sim_cfg);
    run_pipeline_with(cfg, &world, resume)
}

/// Run the pipeline with an explicit world (trainer/evaluator pair plus
/// corpus source). Today that is the simulator; real adapters implement the
/// same traits.
pub fn run_pipeline_with(cfg: &PipelineConfig, world: &SimWorld, resume: bool) -> Result<Report> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir).map_err(|source| Error::Io {
        path: cfg.out_dir.clone(),
        source,
    })?;
    let paths = Artifacts::new(&cfg.out_dir);
    let variants = VariantSet::new(cfg.variants.iter())?;

    // Resume guard: the directory must belong to the same configuration.
    // Fresh (non-resume) runs may overwrite a differently-configured one.
    let digest = cfg.digest();
    if resume && paths.run_meta.exists() {
        let meta: RunMeta = serde_json::from_str(&fs::read_to_string(&paths.run_meta).map_err(
            |source| Error::Io {
                path: paths.run_meta.clone(),
                source,
            },
        )?)
        .map_err(|e| Error::InvalidConfig(format!("corrupt run.json: {e}")))?;
        if meta.config_digest != digest {
            return Err(Error::InvalidConfig(format!(
                "{} holds a run with a different configuration",
                cfg.out_dir.display()
            )));
        }
    }
    let meta = RunMeta {
        config_digest: digest,
        version: env!("CARGO_PKG_VERSION").into(),
    };
    fs::write(
        &paths.run_meta,
        serde_json::to_string_pretty(&meta).expect("run meta"),
    )
    .map_err(|source| Error::Io {
        path: paths.run_meta.clone(),
        source,
    })?;

    let skip = |outputs: &[&Path]| resume && all_exist(outputs);

    // Stage 1: candidate corpus (simulated, or supplied in real mode).
    let corpus_base: PathBuf = if let Some(real) = &cfg.real {
        real.pool.clone()
    } else {
        let variant_files: Vec<PathBuf> = variants
            .iter()
            .map(|v| variant_path(&paths.corpus, v))
            .collect();
        let outputs: Vec<&Path> = variant_files.iter().map(PathBuf::as_path).collect();
        if !skip(&outputs) {
            stage_simgen(world, &variants, &paths.corpus).map_err(|e| e.in_stage("simgen"))?;
        }
        paths.corpus.clone()
    };
    for v in variants.iter() {
        let p = variant_path(&corpus_base, v);
        if !p.exists() {
            return Err(Error::InvalidConfig(format!(
                "missing variant manifest {}",
                p.display()
            ))
            .in_stage("simgen"));
        }
    }

    // Stage 2: pre-screen the identity pool, apply the surviving id set to
    // every variant sibling.
    {
        let variant_files: Vec<PathBuf> = variants
            .iter()
            .map(|v| variant_path(&paths.prescreened, v))
            .collect();
        let outputs: Vec<&Path> = variant_files.iter().map(PathBuf::as_path).collect();
        if !skip(&outputs) {
            stage_prescreen(&corpus_base, &cfg.prescreen, &variants, &paths.prescreened)
                .map_err(|e| e.in_stage("prescreen"))?;
        }
    }

    // Stage 3: per-variant quality loops.
    {
        let sidecar = paths.quality.with_file_name("quality.speakers.jsonl");
        if !skip(&[&paths.quality, &sidecar]) {
            stage_loop(world, cfg, &variants, &paths.prescreened, &paths.quality)
                .map_err(|e| e.in_stage("loop"))?;
        }
    }

    // Stage 4: corpus determination.
    {
        let meta = paths.selection.with_file_name("selection.meta.json");
        if !skip(&[&paths.selection, &meta]) {
            stage_select(cfg, &variants, &paths).map_err(|e| e.in_stage("select"))?;
        }
    }

    // Stage 5: retrain on the selected corpus and evaluate every speaker.
    {
        if !skip(&[&paths.retrain_pool, &paths.speakers]) {
            stage_retrain(world, cfg, &variants, &paths).map_err(|e| e.in_stage("retrain"))?;
        }
    }

    // Stage 6: report.
    stage_report(world, cfg, &paths).map_err(|e| e.in_stage("report"))
}

fn stage_simgen(world: &SimWorld, variants: &VariantSet, corpus_path: &Path) -> Result<()> {
    let corpus = sim::generate_corpus(&world.cfg)?;
    write_manifest(&corpus, corpus_path)?;
    for v in variants.iter() {
        if v.is_identity() {
            continue;
        }
        let cleansed = sim::cleanse_manifest(&corpus, v, &world.cfg)?;
        write_manifest(&cleansed, &variant_path(corpus_path, v))?;
    }
    Ok(())
}

fn stage_prescreen(
    corpus_base: &Path,
    cfg: &PrescreenConfig,
    variants: &VariantSet,
    out_base: &Path,
) -> Result<()> {
    let pool = load_manifest(corpus_base)?;
    let screened = prescreen::prescreen(&pool, cfg)?;
    let survivors = screened.utterance_ids();
    write_manifest(&screened, out_base)?;
    for v in variants.iter() {
        if v.is_identity() {
            continue;
        }
        let m = load_manifest(&variant_path(corpus_base, v))?;
        let kept = m.retain_ids(&survivors)?;
        write_manifest(&kept, &variant_path(out_base, v))?;
    }
    Ok(())
}

fn load_variant_pools(base: &Path, variants: &VariantSet) -> Result<Vec<(VariantId, Manifest)>> {
    variants
        .iter()
        .map(|v| {
            let m = load_manifest(&variant_path(base, v))?;
            Ok((v.clone(), m.with_variant(v.clone())))
        })
        .collect()
}

fn stage_loop(
    world: &SimWorld,
    cfg: &PipelineConfig,
    variants: &VariantSet,
    prescreened_base: &Path,
    quality_path: &Path,
) -> Result<()> {
    let pools = load_variant_pools(prescreened_base, variants)?;
    let table = engine::run_variant_loops(&pools, world, world, &cfg.loop_config())?;
    table.save(quality_path)
}

fn resolve_n(stanza: &SelectionStanza, pool_len: usize) -> Result<usize> {
    if let Some(n) = stanza.n {
        return Ok(n);
    }
    if let Some(f) = stanza.n_fraction {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "n_fraction {f} outside (0, 1]"
            )));
        }
        return Ok(((f * pool_len as f64).round() as usize).clamp(1, pool_len));
    }
    Err(Error::InvalidConfig("selection size missing".into()))
}

fn stage_select(cfg: &PipelineConfig, variants: &VariantSet, paths: &Artifacts) -> Result<()> {
    let pool = load_manifest(&paths.prescreened)?;
    let stanza = &cfg.selection;
    let selection = match stanza.method {
        SelectionMethod::Unselected => CorpusSelection::unselected(&pool),
        SelectionMethod::OursUtt => {
            let table = QualityTable::load(&paths.quality)?;
            let switched = selection::switch_variants(&table)?;
            let n = resolve_n(stanza, switched.len())?;
            selection::select_top_n(&switched, n, SelectionMethod::OursUtt)?
        }
        SelectionMethod::OursSpk => {
            let table = QualityTable::load(&paths.quality)?;
            let speaker_scores = table
                .speaker_scores(&VariantId::identity())
                .ok_or_else(|| Error::Selection("no identity speaker scores".into()))?;
            let n = resolve_n(stanza, pool.len())?;
            selection::select_speaker_wise(speaker_scores, &pool, n)?
        }
        SelectionMethod::AcousticTheta => {
            let pools = load_variant_pools(&paths.prescreened, variants)?;
            let switched = selection::acoustic_switch(&pools)?;
            if let Some(theta) = stanza.theta {
                let entries: Vec<(String, VariantId)> = switched
                    .iter()
                    .filter(|(_, sv)| sv.score > theta)
                    .map(|(id, sv)| (id.clone(), sv.variant.clone()))
                    .collect();
                let n = entries.len();
                CorpusSelection {
                    entries,
                    method: SelectionMethod::AcousticTheta,
                    n,
                    provenance: selection::Provenance {
                        theta: Some(theta),
                        ..Default::default()
                    },
                }
            } else {
                let n = resolve_n(stanza, switched.len())?;
                let mut sel =
                    selection::select_top_n(&switched, n, SelectionMethod::AcousticTheta)?;
                sel.method = SelectionMethod::AcousticTheta;
                sel
            }
        }
    };
    selection.validate(Some(variants))?;
    selection.save(&paths.selection)
}

fn stage_retrain(
    world: &SimWorld,
    cfg: &PipelineConfig,
    variants: &VariantSet,
    paths: &Artifacts,
) -> Result<()> {
    let selection = CorpusSelection::load(&paths.selection)?;
    if selection.is_empty() {
        return Err(Error::Selection("selection is empty".into()));
    }
    let pools = load_variant_pools(&paths.prescreened, variants)?;
    let identity = &pools[0].1;

    // Materialize the retraining pool: selected utterances carry their
    // chosen variant's record, everything else stays identity so the model
    // still covers all speakers.
    let chosen: BTreeMap<&str, &VariantId> = selection
        .entries
        .iter()
        .map(|(id, v)| (id.as_str(), v))
        .collect();
    let by_variant: BTreeMap<&VariantId, &Manifest> =
        pools.iter().map(|(v, m)| (v, m)).collect();
    let records = identity
        .records()
        .iter()
        .map(|rec| match chosen.get(rec.utterance_id.as_str()) {
            Some(v) => by_variant[*v]
                .get(&rec.utterance_id)
                .expect("variant pools share the id set")
                .clone(),
            None => rec.clone(),
        })
        .collect();
    let retrain_pool = Manifest::new(records, VariantId::new("switched"))?;
    write_manifest(&retrain_pool, &paths.retrain_pool)?;

    let seed = rng::derive_seed(cfg.seed, "final");
    let model = sim::sim_train(&selection, &retrain_pool, &world.cfg, seed)?;
    let mut scores = Vec::new();
    for group in retrain_pool.group_ids() {
        let score = sim::sim_eval_speaker(&model, &group, &world.cfg, seed)?;
        let embedding = retrain_pool
            .group_mean_embedding(&group)
            .expect("group from pool");
        scores.push(SpeakerScore {
            group_id: group,
            score,
            embedding,
        });
    }
    write_speaker_scores(&paths.speakers, &scores)
}

fn stage_report(world: &SimWorld, cfg: &PipelineConfig, paths: &Artifacts) -> Result<Report> {
    let speakers = load_speaker_scores(&paths.speakers)?;
    let score_map: BTreeMap<String, f64> = speakers
        .iter()
        .map(|s| (s.group_id.clone(), s.score))
        .collect();
    let embeddings: BTreeMap<String, Vec<f64>> = speakers
        .iter()
        .map(|s| (s.group_id.clone(), s.embedding.clone()))
        .collect();

    let threshold = if let Some(ref_path) = &cfg.report.reference_scores {
        metrics::hq_threshold(&load_score_map(ref_path)?)?
    } else if let Some(value) = cfg.report.hq_threshold {
        HqThreshold {
            value,
            source: "configured".into(),
        }
    } else {
        HqThreshold {
            value: 4.0,
            source: "default".into(),
        }
    };

    let grid = metrics::parse_grid(&cfg.report.grid)?;
    let mut report = Report::build(score_map, Some(&embeddings), threshold, &grid)?;

    // Estimator-fidelity correlation (simulation only): predicted identity
    // quality against true latent quality over the pre-screened pool.
    let pool = load_manifest(&paths.prescreened)?;
    if pool.records().iter().all(|r| r.latent.is_some()) {
        let table = QualityTable::load(&paths.quality)?;
        let mut predicted = Vec::with_capacity(pool.len());
        let mut truth = Vec::with_capacity(pool.len());
        for rec in pool.records() {
            if let Some(score) = table.utterance_score(&rec.utterance_id, &VariantId::identity()) {
                predicted.push(score);
                truth.push(sim::latent_quality(
                    rec.latent.as_ref().expect("checked above"),
                    &world.cfg.quality_weights,
                ));
            }
        }
        if predicted.len() >= 4 {
            if let Ok(r) = metrics::pearson_r(&predicted, &truth) {
                if let Ok((lo, hi)) = metrics::fisher_ci(r, predicted.len(), 0.95) {
                    report.correlation = Some(metrics::CorrelationBlock {
                        r,
                        ci_low: lo,
                        ci_high: hi,
                        n: predicted.len(),
                        confidence: 0.95,
                    });
                }
            }
        }
    }

    // Nominal compute accounting over the initial loop training.
    let initial_len = engine::sample_indices(
        pool.len(),
        cfg.loop_stanza.sampling_fraction,
        cfg.seed,
    )
    .len();
    let (train, eval, regress) = world.nominal_durations(initial_len, pool.len());
    report.cost = Some(CostAccount::new(train, eval, regress));

    let json = report.to_canonical_json();
    fs::write(&paths.report, &json).map_err(|source| Error::Io {
        path: paths.report.clone(),
        source,
    })?;

    let mut csv = String::from("threshold,count\n");
    for point in &report.histogram {
        csv.push_str(&format!("{},{}\n", point.threshold, point.count));
    }
    fs::write(&paths.histogram_csv, csv).map_err(|source| Error::Io {
        path: paths.histogram_csv.clone(),
        source,
    })?;

    Ok(report)
}
