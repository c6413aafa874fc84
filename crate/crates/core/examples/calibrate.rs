// Temporary calibration probe; prints simulator diagnostics across seeds.
use std::collections::BTreeMap;

use corpusloop::engine::{run_variant_loops, LoopConfig};
use corpusloop::manifest::{Manifest, VariantId};
use corpusloop::metrics::pearson_r;
use corpusloop::prescreen::{prescreen, PrescreenConfig};
use corpusloop::regressor::RegressorConfig;
use corpusloop::selection::{
    acoustic_switch, select_speaker_wise, select_top_n, switch_variants, uniform_scores,
    CorpusSelection, SelectionMethod,
};
use corpusloop::sim::{
    cleanse_manifest, generate_corpus, latent_quality, sim_cleanse, sim_eval_speaker, sim_train,
    SimConfig, SimWorld,
};

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn retrain_stats(
    label: &str,
    selection: &CorpusSelection,
    pools: &[(VariantId, Manifest)],
    cfg: &SimConfig,
    seed: u64,
) {
    let by_variant: BTreeMap<&VariantId, &Manifest> = pools.iter().map(|(v, m)| (v, m)).collect();
    let chosen: BTreeMap<&str, &VariantId> = selection
        .entries
        .iter()
        .map(|(id, v)| (id.as_str(), v))
        .collect();
    let identity = &pools[0].1;
    let records: Vec<_> = identity
        .records()
        .iter()
        .map(|rec| match chosen.get(rec.utterance_id.as_str()) {
            Some(v) => by_variant[*v].get(&rec.utterance_id).unwrap().clone(),
            None => rec.clone(),
        })
        .collect();
    let pool = Manifest::new(records, VariantId::new("mixed")).unwrap();
    let model = sim_train(selection, &pool, cfg, seed ^ 0xACCE).unwrap();
    let scores: Vec<f64> = pool
        .group_ids()
        .iter()
        .map(|g| sim_eval_speaker(&model, g, cfg, seed ^ 0xACCE).unwrap())
        .collect();
    let seen: std::collections::BTreeSet<&str> = selection
        .entries
        .iter()
        .map(|(id, _)| identity.get(id).unwrap().group_id.as_str())
        .collect();
    let q_sel = mean(selection.entries.iter().map(|(id, v)| {
        let rec = by_variant[v].get(id).unwrap();
        latent_quality(rec.latent.as_ref().unwrap(), &cfg.quality_weights)
    }));
    let hq = scores.iter().filter(|&&s| s > 4.0).count();
    println!(
        "    {label:<10} mean_Q={:.3} hq={hq:>3} seen={:>3}/{} q_sel={q_sel:.3}",
        mean(scores.iter().copied()),
        seen.len(),
        pool.group_ids().len(),
    );
}

fn main() {
    let variants = [
        VariantId::identity(),
        VariantId::new("denoise"),
        VariantId::new("restore"),
    ];
    for seed in 0..4u64 {
        let cfg = SimConfig {
            rng_seed: seed,
            ..SimConfig::default()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        let aq: Vec<f64> = corpus.records().iter().map(|r| r.acoustic_quality).collect();
        let q: Vec<f64> = corpus
            .records()
            .iter()
            .map(|r| latent_quality(r.latent.as_ref().unwrap(), &cfg.quality_weights))
            .collect();
        let r = pearson_r(&aq, &q).unwrap();

        let mut counts = BTreeMap::new();
        for u in corpus.records() {
            let best = variants
                .iter()
                .map(|v| {
                    let q = latent_quality(
                        sim_cleanse(u, v, &cfg).unwrap().latent.as_ref().unwrap(),
                        &cfg.quality_weights,
                    );
                    (v.clone(), q)
                })
                .fold(None::<(VariantId, f64)>, |acc, (v, q)| match acc {
                    None => Some((v, q)),
                    Some((_, bq)) if q > bq => Some((v, q)),
                    some => some,
                })
                .unwrap();
            *counts.entry(best.0.name().to_string()).or_insert(0usize) += 1;
        }
        let total = corpus.len() as f64;
        let share = |n: &str| *counts.get(n).unwrap_or(&0) as f64 / total;
        println!(
            "seed {seed}: n={} corr={r:.3} latent shares: id={:.3} den={:.3} res={:.3} mean_q={:.2}",
            corpus.len(),
            share("identity"),
            share("denoise"),
            share("restore"),
            mean(q.iter().copied()),
        );

        // Loop diagnostics.
        let world = SimWorld::new(cfg.clone());
        let pool = prescreen(&corpus, &PrescreenConfig::default()).unwrap();
        let pools: Vec<(VariantId, Manifest)> = variants
            .iter()
            .map(|v| (v.clone(), cleanse_manifest(&pool, v, &cfg).unwrap()))
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
        let pred_total = switched.len() as f64;
        let pred_share = |name: &str| {
            switched
                .values()
                .filter(|sv| sv.variant.name() == name)
                .count() as f64
                / pred_total
        };
        println!(
            "  predicted shares: id={:.3} den={:.3} res={:.3}",
            pred_share("identity"),
            pred_share("denoise"),
            pred_share("restore"),
        );

        let n = ((0.25 * pool.len() as f64).round() as usize).max(1);

        // ours-utt (identity-only scores, like the selection experiment).
        let id_scores = uniform_scores(&table, &VariantId::identity()).unwrap();
        let ours_utt = select_top_n(&id_scores, n, SelectionMethod::OursUtt).unwrap();
        retrain_stats("ours-utt", &ours_utt, &pools[..1], &cfg, seed);

        // acoustic top-n over identity pool only.
        let aq_scores = acoustic_switch(&pools[..1]).unwrap();
        let acoustic = select_top_n(&aq_scores, n, SelectionMethod::AcousticTheta).unwrap();
        retrain_stats("acoustic", &acoustic, &pools[..1], &cfg, seed);

        // ours-spk.
        let spk = select_speaker_wise(
            table.speaker_scores(&VariantId::identity()).unwrap(),
            &pools[0].1,
            n,
        )
        .unwrap();
        retrain_stats("ours-spk", &spk, &pools[..1], &cfg, seed);

        // switching + uniform variants at matched n.
        let sw_sel = select_top_n(&switched, n, SelectionMethod::OursUtt).unwrap();
        retrain_stats("switching", &sw_sel, &pools, &cfg, seed);
        for v in &variants {
            let uni = uniform_scores(&table, v).unwrap();
            let sel = select_top_n(&uni, n, SelectionMethod::OursUtt).unwrap();
            retrain_stats(&format!("uni-{}", v.name()), &sel, &pools, &cfg, seed);
        }
    }
}
