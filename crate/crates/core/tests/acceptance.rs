//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured values (visible under `--nocapture`).
//!
//! The closed-loop criteria run the full pipeline on the default simulated
//! world across seeds 0..9 and check the *direction* of the published
//! findings at desk scale; absolute full-scale scores are out of reach by
//! construction.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::Rng;

use corpusloop::engine::{
    cost_account, format_duration, parse_duration, run_variant_loops, LoopConfig,
};
use corpusloop::manifest::{
    load_manifest, write_manifest, Manifest, UtteranceRecord, VariantId,
};
use corpusloop::metrics::{count_hq, fisher_ci, format_ratio, mst_cost, HqThreshold};
use corpusloop::pipeline::{
    run_pipeline, LoopStanza, PipelineConfig, ReportStanza, SelectionStanza,
};
use corpusloop::prescreen::{prescreen, PrescreenConfig};
use corpusloop::regressor::{fit, RegressorConfig, RegressorKind};
use corpusloop::selection::{
    select_top_n, switch_variants, uniform_scores, CorpusSelection, ScoredVariant,
    SelectionMethod,
};
use corpusloop::sim::{
    cleanse_manifest, generate_corpus, sim_eval_speaker, sim_train, SimConfig, SimWorld,
};

fn seeded(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand_chacha::rand_core::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn criterion_01_fisher_ci_reproduction() {
    let start = Instant::now();
    let (lo1, hi1) = fisher_ci(0.81, 200, 0.95).unwrap();
    let (lo2, hi2) = fisher_ci(0.88, 200, 0.95).unwrap();
    let elapsed = start.elapsed();

    assert!((lo1 - 0.7561).abs() < 0.005 && (hi1 - 0.8533).abs() < 0.005);
    assert_eq!(
        (format!("{lo1:.2}"), format!("{hi1:.2}")),
        ("0.76".to_string(), "0.85".to_string())
    );
    assert_eq!(
        (format!("{lo2:.2}"), format!("{hi2:.2}")),
        ("0.84".to_string(), "0.91".to_string())
    );
    assert!(elapsed < Duration::from_millis(1), "took {elapsed:?}");
    println!(
        "ACCEPTANCE 1 PASS fisher_ci: r=0.81 -> [{lo1:.4}, {hi1:.4}], r=0.88 -> [{lo2:.4}, {hi2:.4}] in {elapsed:?}"
    );
}

#[test]
fn criterion_02_hq_ratio_arithmetic() {
    // 2719 speakers, 1157 (respectively 578) strictly above the threshold.
    let t = HqThreshold {
        value: 4.0,
        source: "test".into(),
    };
    for hq in [1157usize, 578] {
        let scores: BTreeMap<String, f64> = (0..2719)
            .map(|i| {
                let s = if i < hq { 4.5 } else { 3.5 };
                (format!("s{i:04}"), s)
            })
            .collect();
        let (count, ratio) = count_hq(&scores, &t);
        assert_eq!(count, hq);
        let expected = if hq == 1157 { "42.6%" } else { "21.3%" };
        assert_eq!(ratio, expected);
    }
    assert_eq!(format_ratio(1157, 2719), "42.6%");
    assert_eq!(format_ratio(578, 2719), "21.3%");
    println!("ACCEPTANCE 2 PASS hq ratios: 1157/2719 -> 42.6%, 578/2719 -> 21.3%");
}

#[test]
fn criterion_03_cost_accounting() {
    let fs2 = cost_account(
        parse_duration("1h26m27s").unwrap(),
        parse_duration("1h11m36s").unwrap(),
        parse_duration("9m7s").unwrap(),
    );
    assert_eq!(format_duration(fs2), "4h13m37s");
    let matcha = cost_account(
        parse_duration("5h9m33s").unwrap(),
        parse_duration("2h1m14s").unwrap(),
        parse_duration("9m7s").unwrap(),
    );
    assert_eq!(format_duration(matcha), "12h29m27s");
    assert_eq!(
        cost_account(Duration::ZERO, Duration::ZERO, Duration::ZERO),
        Duration::ZERO
    );
    println!("ACCEPTANCE 3 PASS cost accounting: 4h13m37s and 12h29m27s reproduced exactly");
}

/// Decode a Prüfer sequence over n labels into the n-1 tree edges.
fn prufer_decode(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1usize; n];
    for &a in seq {
        degree[a] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &a in seq {
        let leaf = (0..n).find(|&i| degree[i] == 1).expect("a leaf exists");
        edges.push((leaf, a));
        degree[leaf] = 0;
        degree[a] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&i| degree[i] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Minimum spanning-tree cost by exhaustive enumeration of all n^(n-2)
/// labeled trees via Prüfer sequences.
fn brute_force_mst_cost(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    let dist = |a: usize, b: usize| -> f64 {
        points[a]
            .iter()
            .zip(&points[b])
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    if n == 2 {
        return dist(0, 1);
    }
    let seq_len = n - 2;
    let total = (n as u64).pow(seq_len as u32);
    let mut best = f64::INFINITY;
    let mut seq = vec![0usize; seq_len];
    for code in 0..total {
        let mut c = code;
        for slot in seq.iter_mut() {
            *slot = (c % n as u64) as usize;
            c /= n as u64;
        }
        let cost: f64 = prufer_decode(&seq, n)
            .into_iter()
            .map(|(a, b)| dist(a, b))
            .sum();
        if cost < best {
            best = cost;
        }
    }
    best
}

#[test]
fn criterion_04_mst_matches_spanning_tree_enumeration() {
    let start = Instant::now();
    let mut rng = seeded(404);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let n = 3 + case % 5; // 3..=7
        let dim = if case % 2 == 0 { 2 } else { 8 };
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-10.0..10.0)).collect())
            .collect();
        let prim = mst_cost(&points).unwrap();
        let brute = brute_force_mst_cost(&points);
        let diff = (prim - brute).abs();
        worst = worst.max(diff);
        assert!(
            diff < 1e-9,
            "case {case}: prim {prim} vs brute force {brute}"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    println!(
        "ACCEPTANCE 4 PASS mst oracle: 200 cases, worst |prim - brute| = {worst:.2e}, {elapsed:?}"
    );
}

#[test]
fn criterion_05_switching_dominance_exact() {
    let mut rng = seeded(505);
    let variant_names = ["identity", "denoise", "restore"];
    for table_idx in 0..50 {
        let n_utts = rng.gen_range(2..60);
        let variants: Vec<VariantId> =
            variant_names.iter().map(|v| VariantId::new(*v)).collect();
        let mut utterance = BTreeMap::new();
        for i in 0..n_utts {
            let per: BTreeMap<VariantId, f64> = variants
                .iter()
                .map(|v| (v.clone(), rng.gen_range(1.0..5.0)))
                .collect();
            utterance.insert(format!("u{i:03}"), per);
        }
        let table = corpusloop::engine::QualityTable::new(
            variants.clone(),
            utterance,
            BTreeMap::new(),
        )
        .unwrap();
        let n = rng.gen_range(1..=n_utts);
        let switched = switch_variants(&table).unwrap();
        let total = |scored: &BTreeMap<String, ScoredVariant>, sel: &CorpusSelection| -> f64 {
            sel.entries.iter().map(|(id, _)| scored[id].score).sum()
        };
        let switched_sel = select_top_n(&switched, n, SelectionMethod::OursUtt).unwrap();
        let switched_total = total(&switched, &switched_sel);
        for v in &variants {
            let uniform = uniform_scores(&table, v).unwrap();
            let uniform_sel = select_top_n(&uniform, n, SelectionMethod::OursUtt).unwrap();
            let uniform_total = total(&uniform, &uniform_sel);
            assert!(
                switched_total >= uniform_total - 1e-9,
                "table {table_idx}, n {n}: switching {switched_total} < uniform({v}) {uniform_total}"
            );
        }
    }
    println!("ACCEPTANCE 5 PASS switching dominance: 50 random tables, all uniform variants dominated");
}

// -- shared helpers for the closed-loop criteria ---------------------------

fn pipeline_config(
    out_dir: PathBuf,
    seed: u64,
    variants: &[&str],
    method: SelectionMethod,
    fraction: f64,
) -> PipelineConfig {
    PipelineConfig {
        out_dir,
        variants: variants.iter().map(|v| v.to_string()).collect(),
        sim: Some(SimConfig {
            rng_seed: seed,
            ..SimConfig::default()
        }),
        real: None,
        prescreen: PrescreenConfig::default(),
        loop_stanza: LoopStanza {
            sampling_fraction: fraction,
            regressor: RegressorConfig::default(),
            parallel: false,
        },
        selection: SelectionStanza {
            method,
            n: None,
            n_fraction: Some(0.25),
            theta: None,
        },
        report: ReportStanza {
            hq_threshold: Some(4.0),
            ..ReportStanza::default()
        },
        seed,
    }
}

fn mean_speaker_quality(report: &corpusloop::metrics::Report) -> f64 {
    report.speaker_scores.values().sum::<f64>() / report.speaker_scores.len() as f64
}

#[test]
fn criterion_06_closed_loop_directional_reproduction() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut utt_beats_acoustic = 0;
    let mut utt_beats_spk = 0;
    for seed in 0..10u64 {
        let mut means = BTreeMap::new();
        for method in [
            SelectionMethod::OursUtt,
            SelectionMethod::AcousticTheta,
            SelectionMethod::OursSpk,
        ] {
            let out = dir
                .path()
                .join(format!("c6-{seed}-{}", method.as_str()));
            let cfg = pipeline_config(out, seed, &["identity"], method, 1.0);
            let report = run_pipeline(&cfg, false).unwrap();
            means.insert(method.as_str(), mean_speaker_quality(&report));
        }
        if means["ours_utt"] > means["acoustic_theta"] {
            utt_beats_acoustic += 1;
        }
        if means["ours_utt"] > means["ours_spk"] {
            utt_beats_spk += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(
        utt_beats_acoustic >= 8,
        "ours-utt beat the acoustic baseline in only {utt_beats_acoustic}/10 seeds"
    );
    assert!(
        utt_beats_spk >= 8,
        "ours-utt beat ours-spk in only {utt_beats_spk}/10 seeds"
    );
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    println!(
        "ACCEPTANCE 6 PASS closed loop: ours-utt > acoustic in {utt_beats_acoustic}/10, > ours-spk in {utt_beats_spk}/10 seeds ({elapsed:?})"
    );
}

#[test]
fn criterion_07_switching_beats_uniform_cleansing() {
    let start = Instant::now();
    let threshold = HqThreshold {
        value: 4.0,
        source: "acceptance".into(),
    };
    let variants = [
        VariantId::identity(),
        VariantId::new("denoise"),
        VariantId::new("restore"),
    ];
    let mut switching_wins = 0;
    for seed in 0..10u64 {
        let sim_cfg = SimConfig {
            rng_seed: seed,
            ..SimConfig::default()
        };
        let world = SimWorld::new(sim_cfg.clone());
        let corpus = generate_corpus(&sim_cfg).unwrap();
        let pool = prescreen(&corpus, &PrescreenConfig::default()).unwrap();
        let pools: Vec<(VariantId, Manifest)> = variants
            .iter()
            .map(|v| (v.clone(), cleanse_manifest(&pool, v, &sim_cfg).unwrap()))
            .collect();
        let loop_cfg = LoopConfig {
            sampling_fraction: 1.0,
            regressor: RegressorConfig::default(),
            seed,
            variants: variants.iter().map(|v| v.name().to_string()).collect(),
            parallel: false,
        };
        let table = run_variant_loops(&pools, &world, &world, &loop_cfg).unwrap();
        let n = ((0.25 * pool.len() as f64).round() as usize).max(1);

        // Retrain + evaluate one policy's selection and count HQ speakers.
        let hq_of = |scored: &BTreeMap<String, ScoredVariant>| -> usize {
            let selection = select_top_n(scored, n, SelectionMethod::OursUtt).unwrap();
            let by_variant: BTreeMap<&VariantId, &Manifest> =
                pools.iter().map(|(v, m)| (v, m)).collect();
            let chosen: BTreeMap<&str, &VariantId> = selection
                .entries
                .iter()
                .map(|(id, v)| (id.as_str(), v))
                .collect();
            let records: Vec<UtteranceRecord> = pools[0]
                .1
                .records()
                .iter()
                .map(|rec| match chosen.get(rec.utterance_id.as_str()) {
                    Some(v) => by_variant[*v].get(&rec.utterance_id).unwrap().clone(),
                    None => rec.clone(),
                })
                .collect();
            let retrain_pool = Manifest::new(records, VariantId::new("mixed")).unwrap();
            let model = sim_train(&selection, &retrain_pool, &sim_cfg, seed ^ 0xACCE).unwrap();
            let scores: BTreeMap<String, f64> = retrain_pool
                .group_ids()
                .into_iter()
                .map(|g| {
                    let s = sim_eval_speaker(&model, &g, &sim_cfg, seed ^ 0xACCE).unwrap();
                    (g, s)
                })
                .collect();
            count_hq(&scores, &threshold).0
        };

        let switching_hq = hq_of(&switch_variants(&table).unwrap());
        let best_uniform_hq = variants
            .iter()
            .map(|v| hq_of(&uniform_scores(&table, v).unwrap()))
            .max()
            .unwrap();
        if switching_hq >= best_uniform_hq {
            switching_wins += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(
        switching_wins >= 7,
        "switching matched/beat the best uniform variant in only {switching_wins}/10 seeds"
    );
    assert!(elapsed < Duration::from_secs(180), "took {elapsed:?}");
    println!(
        "ACCEPTANCE 7 PASS switching vs uniform: switching >= best uniform in {switching_wins}/10 seeds ({elapsed:?})"
    );
}

#[test]
fn criterion_08_sampling_robustness() {
    let dir = tempfile::tempdir().unwrap();
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let full = run_pipeline(
            &pipeline_config(
                dir.path().join(format!("c8-full-{seed}")),
                seed,
                &["identity"],
                SelectionMethod::OursUtt,
                1.0,
            ),
            false,
        )
        .unwrap();
        let sampled = run_pipeline(
            &pipeline_config(
                dir.path().join(format!("c8-rand-{seed}")),
                seed,
                &["identity"],
                SelectionMethod::OursUtt,
                0.1,
            ),
            false,
        )
        .unwrap();
        let diff = (mean_speaker_quality(&full) - mean_speaker_quality(&sampled)).abs();
        worst = worst.max(diff);
        assert!(
            diff <= 0.15,
            "seed {seed}: sampled mean deviates by {diff:.3}"
        );
    }
    println!("ACCEPTANCE 8 PASS sampling robustness: worst 10% vs 100% gap {worst:.3} <= 0.15");
}

#[test]
fn criterion_09_regression_oracles() {
    // Ridge with no penalty recovers planted weights.
    let mut rng = seeded(909);
    let x: Vec<Vec<f64>> = (0..80)
        .map(|_| (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let w_true = [0.15, -0.1, 0.02, 0.25, -0.3, 0.05];
    let b_true = 3.1;
    let y: Vec<f64> = x
        .iter()
        .map(|row| row.iter().zip(&w_true).map(|(a, b)| a * b).sum::<f64>() + b_true)
        .collect();
    let ridge = fit(
        &x,
        &y,
        &RegressorConfig {
            kind: RegressorKind::Ridge,
            lambda: 0.0,
            ..RegressorConfig::default()
        },
    )
    .unwrap();
    let (w, b) = ridge.coefficients().unwrap();
    let mut worst = (b - b_true).abs();
    for (got, want) in w.iter().zip(&w_true) {
        worst = worst.max((got - want).abs());
    }
    assert!(worst < 1e-6, "weight recovery error {worst:.2e}");

    // knn k=1 exact recall.
    let targets: Vec<f64> = (0..80).map(|_| rng.gen_range(1.0..5.0)).collect();
    let knn = fit(
        &x,
        &targets,
        &RegressorConfig {
            kind: RegressorKind::Knn,
            k: 1,
            ..RegressorConfig::default()
        },
    )
    .unwrap();
    for (row, want) in x.iter().zip(&targets) {
        assert_eq!(knn.predict(row).unwrap(), *want);
    }

    // Affine rescaling invariance on 100 random instances.
    for trial in 0..100 {
        let n = rng.gen_range(6..25);
        let dim = rng.gen_range(2..5);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..5.0)).collect();
        let scale: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.2..5.0)).collect();
        let shift: Vec<f64> = (0..dim).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let x2: Vec<Vec<f64>> = x
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&scale)
                    .zip(&shift)
                    .map(|((v, a), c)| a * v + c)
                    .collect()
            })
            .collect();
        for cfg in [
            RegressorConfig {
                kind: RegressorKind::Knn,
                k: 3,
                ..RegressorConfig::default()
            },
            RegressorConfig {
                kind: RegressorKind::Ridge,
                lambda: 0.0,
                ..RegressorConfig::default()
            },
        ] {
            let m1 = fit(&x, &y, &cfg).unwrap();
            let m2 = fit(&x2, &y, &cfg).unwrap();
            let q: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let q2: Vec<f64> = q
                .iter()
                .zip(&scale)
                .zip(&shift)
                .map(|((v, a), c)| a * v + c)
                .collect();
            let p1 = m1.predict(&q).unwrap();
            let p2 = m2.predict(&q2).unwrap();
            assert!((p1 - p2).abs() < 1e-8, "trial {trial}: {p1} vs {p2}");
        }
    }
    println!("ACCEPTANCE 9 PASS regression oracles: exact ridge recovery, knn recall, 100 affine-invariance instances");
}

#[test]
fn criterion_10_determinism_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();

    // Full pipeline twice with the same seed: byte-identical reports.
    let cfg_a = pipeline_config(
        dir.path().join("c10-a"),
        3,
        &["identity", "denoise", "restore"],
        SelectionMethod::OursUtt,
        1.0,
    );
    let cfg_b = PipelineConfig {
        out_dir: dir.path().join("c10-b"),
        ..cfg_a.clone()
    };
    run_pipeline(&cfg_a, false).unwrap();
    run_pipeline(&cfg_b, false).unwrap();
    let report_a = std::fs::read(dir.path().join("c10-a/report.json")).unwrap();
    let report_b = std::fs::read(dir.path().join("c10-b/report.json")).unwrap();
    assert_eq!(report_a, report_b);

    // Manifest round-trips: one canonicalizing write, then a fixed point.
    let mut rng = seeded(1010);
    for case in 0..100 {
        let n = rng.gen_range(1..30);
        let records: Vec<UtteranceRecord> = (0..n)
            .map(|i| UtteranceRecord {
                utterance_id: format!("u{i:03}"),
                group_id: format!("g{:02}", i % 7),
                ctc_score: -rng.gen_range(0.0..2.0),
                embedding: (0..4).map(|_| rng.gen_range(-8.0..8.0)).collect(),
                features: (0..5).map(|_| rng.gen_range(-8.0..8.0)).collect(),
                duration_s: rng.gen_range(0.5..30.0),
                acoustic_quality: rng.gen_range(1.0..5.0),
                latent: None,
            })
            .collect();
        let manifest = Manifest::new(records, VariantId::identity()).unwrap();
        let p1 = dir.path().join(format!("rt{case}.jsonl"));
        let p2 = dir.path().join(format!("rt{case}b.jsonl"));
        write_manifest(&manifest, &p1).unwrap();
        let l1 = load_manifest(&p1).unwrap();
        write_manifest(&l1, &p2).unwrap();
        let l2 = load_manifest(&p2).unwrap();
        assert_eq!(l1.records(), l2.records());
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap()
        );
    }

    // Concurrent vs sequential variant loops.
    let sim_cfg = SimConfig {
        n_speakers: 60,
        utterances_per_speaker: (4, 10),
        rng_seed: 2,
        ..SimConfig::default()
    };
    let world = SimWorld::new(sim_cfg.clone());
    let corpus = generate_corpus(&sim_cfg).unwrap();
    let pools: Vec<(VariantId, Manifest)> = ["identity", "denoise", "restore"]
        .iter()
        .map(|name| {
            let v = VariantId::new(*name);
            (v.clone(), cleanse_manifest(&corpus, &v, &sim_cfg).unwrap())
        })
        .collect();
    let mut loop_cfg = LoopConfig {
        sampling_fraction: 1.0,
        regressor: RegressorConfig::default(),
        seed: 5,
        variants: vec!["identity".into(), "denoise".into(), "restore".into()],
        parallel: false,
    };
    let sequential = run_variant_loops(&pools, &world, &world, &loop_cfg).unwrap();
    loop_cfg.parallel = true;
    let concurrent = run_variant_loops(&pools, &world, &world, &loop_cfg).unwrap();
    assert_eq!(sequential, concurrent);

    println!("ACCEPTANCE 10 PASS determinism: byte-identical reports, 100 manifest round-trips, concurrent == sequential");
}

#[test]
fn criterion_11_cleanser_selection_rates() {
    let variants = [
        VariantId::identity(),
        VariantId::new("denoise"),
        VariantId::new("restore"),
    ];
    let mut identity_range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut restore_min = f64::INFINITY;
    for seed in 0..10u64 {
        let sim_cfg = SimConfig {
            rng_seed: seed,
            ..SimConfig::default()
        };
        let world = SimWorld::new(sim_cfg.clone());
        let corpus = generate_corpus(&sim_cfg).unwrap();
        let pool = prescreen(&corpus, &PrescreenConfig::default()).unwrap();
        let pools: Vec<(VariantId, Manifest)> = variants
            .iter()
            .map(|v| (v.clone(), cleanse_manifest(&pool, v, &sim_cfg).unwrap()))
            .collect();
        let loop_cfg = LoopConfig {
            sampling_fraction: 1.0,
            regressor: RegressorConfig::default(),
            seed,
            variants: variants.iter().map(|v| v.name().to_string()).collect(),
            parallel: false,
        };
        let table = run_variant_loops(&pools, &world, &world, &loop_cfg).unwrap();
        let switched = switch_variants(&table).unwrap();
        let total = switched.len() as f64;
        let share = |name: &str| {
            switched
                .values()
                .filter(|sv| sv.variant.name() == name)
                .count() as f64
                / total
        };
        let identity = share("identity");
        let restore = share("restore");
        identity_range.0 = identity_range.0.min(identity);
        identity_range.1 = identity_range.1.max(identity);
        restore_min = restore_min.min(restore);
        assert!(
            (0.15..=0.45).contains(&identity),
            "seed {seed}: identity share {identity:.3} outside [0.15, 0.45]"
        );
        assert!(
            restore >= 0.40,
            "seed {seed}: restore share {restore:.3} below 0.40"
        );
    }
    println!(
        "ACCEPTANCE 11 PASS cleanser shares: identity in [{:.3}, {:.3}], restore >= {restore_min:.3} across 10 seeds",
        identity_range.0, identity_range.1
    );
}
