//! Evaluation machinery: high-quality-speaker counts, minimum-spanning-tree
//! diversity cost, cumulative histograms, Pearson correlation, and Fisher
//! z-transform confidence intervals.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::manifest::round_sig6;
use crate::{Error, Result};

/// Threshold above which a speaker counts as high quality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HqThreshold {
    pub value: f64,
    /// Where the threshold came from, e.g. "reference-model minimum".
    pub source: String,
}

/// Threshold from a reference model's speaker scores: their minimum.
pub fn hq_threshold(reference_scores: &BTreeMap<String, f64>) -> Result<HqThreshold> {
    let min = reference_scores
        .values()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::Metrics("empty reference score map".into()));
    }
    Ok(HqThreshold {
        value: min,
        source: "reference-model minimum".into(),
    })
}

/// Count speakers scoring strictly above the threshold, with the ratio
/// formatted to one decimal percent (e.g. "42.6%").
pub fn count_hq(scores: &BTreeMap<String, f64>, t: &HqThreshold) -> (usize, String) {
    let count = scores.values().filter(|&&s| s > t.value).count();
    (count, format_ratio(count, scores.len()))
}

/// `count / total` as a one-decimal percent string.
pub fn format_ratio(count: usize, total: usize) -> String {
    if total == 0 {
        return "0.0%".into();
    }
    format!("{:.1}%", 100.0 * count as f64 / total as f64)
}

/// One edge of a Euclidean minimum spanning tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub length: f64,
}

/// Euclidean minimum spanning tree on the complete graph over `points`,
/// computed with a dense Prim scan (O(n²), fine for thousands of points).
pub fn euclidean_mst(points: &[Vec<f64>]) -> Result<(Vec<MstEdge>, f64)> {
    if points.len() < 2 {
        return Err(Error::Metrics(format!(
            "minimum spanning tree needs >= 2 points, got {}",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Metrics("point dimension mismatch".into()));
    }
    let n = points.len();
    let dist2 = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    };
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    in_tree[0] = true;
    for j in 1..n {
        best[j] = dist2(&points[0], &points[j]);
        parent[j] = 0;
    }
    let mut edges = Vec::with_capacity(n - 1);
    let mut total = 0.0;
    for _ in 1..n {
        let mut next = usize::MAX;
        let mut next_d = f64::INFINITY;
        for j in 0..n {
            if !in_tree[j] && best[j] < next_d {
                next_d = best[j];
                next = j;
            }
        }
        let length = next_d.sqrt();
        edges.push(MstEdge {
            a: parent[next],
            b: next,
            length,
        });
        total += length;
        in_tree[next] = true;
        for j in 0..n {
            if !in_tree[j] {
                let d = dist2(&points[next], &points[j]);
                if d < best[j] {
                    best[j] = d;
                    parent[j] = next;
                }
            }
        }
    }
    Ok((edges, total))
}

/// Total edge length of the Euclidean minimum spanning tree.
pub fn mst_cost(points: &[Vec<f64>]) -> Result<f64> {
    euclidean_mst(points).map(|(_, cost)| cost)
}

/// For each grid threshold, the number of scores strictly greater than it.
/// The grid must be strictly ascending; counts are non-increasing.
pub fn cumulative_histogram(scores: &[f64], grid: &[f64]) -> Result<Vec<usize>> {
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Metrics("histogram grid must be strictly ascending".into()));
    }
    Ok(grid
        .iter()
        .map(|&t| scores.iter().filter(|&&s| s > t).count())
        .collect())
}

/// Sample Pearson correlation of two equal-length series.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Metrics(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::Metrics("need at least 3 pairs".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Metrics("degenerate variance".into()));
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Two-sided critical values of the standard normal for the supported
/// confidence levels.
fn z_critical(confidence: f64) -> Result<f64> {
    // Keyed on percent to avoid float-equality subtleties in the match.
    let percent = (confidence * 100.0).round() as i64;
    let z = match percent {
        90 => 1.644854,
        95 => 1.959964,
        99 => 2.575829,
        _ => {
            return Err(Error::Metrics(format!(
                "unsupported confidence level {confidence}; use 0.90, 0.95 or 0.99"
            )))
        }
    };
    if (confidence * 100.0 - percent as f64).abs() > 1e-9 {
        return Err(Error::Metrics(format!(
            "unsupported confidence level {confidence}; use 0.90, 0.95 or 0.99"
        )));
    }
    Ok(z)
}

/// Fisher z-transform confidence interval for a sample correlation `r`
/// computed from `n` pairs.
pub fn fisher_ci(r: f64, n: usize, confidence: f64) -> Result<(f64, f64)> {
    if !(r.abs() < 1.0) {
        return Err(Error::Metrics(format!("|r| must be < 1, got {r}")));
    }
    if n < 4 {
        return Err(Error::Metrics(format!("need n >= 4, got {n}")));
    }
    let z = r.atanh();
    let half_width = z_critical(confidence)? / ((n - 3) as f64).sqrt();
    Ok(((z - half_width).tanh(), (z + half_width).tanh()))
}

/// Nominal stage durations and the end-to-end accounting total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostAccount {
    pub train_s: u64,
    pub eval_s: u64,
    pub regress_s: u64,
    /// 2 × train + eval + regress, in seconds.
    pub total_s: u64,
}

impl CostAccount {
    pub fn new(train: Duration, eval: Duration, regress: Duration) -> CostAccount {
        let total = crate::engine::cost_account(train, eval, regress);
        CostAccount {
            train_s: train.as_secs(),
            eval_s: eval.as_secs(),
            regress_s: regress.as_secs(),
            total_s: total.as_secs(),
        }
    }
}

/// Correlation block of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationBlock {
    pub r: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    pub confidence: f64,
}

/// One histogram point: how many speakers score above `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramPoint {
    pub threshold: f64,
    pub count: usize,
}

/// Evaluation summary for one trained model / selection method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// Per-speaker pseudo-MOS of the evaluated model.
    pub speaker_scores: BTreeMap<String, f64>,
    pub hq_threshold: HqThreshold,
    pub hq_count: usize,
    pub total_speakers: usize,
    /// `hq_count / total_speakers` at one decimal percent.
    pub hq_ratio: String,
    /// Speaker-diversity cost over high-quality speakers' embeddings;
    /// absent when fewer than two speakers qualify.
    pub mst_cost: Option<f64>,
    pub histogram: Vec<HistogramPoint>,
    pub correlation: Option<CorrelationBlock>,
    pub cost: Option<CostAccount>,
}

impl Report {
    /// Assemble a report from speaker scores and, optionally, speaker
    /// embeddings (for the diversity cost over high-quality speakers).
    pub fn build(
        speaker_scores: BTreeMap<String, f64>,
        embeddings: Option<&BTreeMap<String, Vec<f64>>>,
        threshold: HqThreshold,
        grid: &[f64],
    ) -> Result<Report> {
        let (hq_count, hq_ratio) = count_hq(&speaker_scores, &threshold);
        let scores: Vec<f64> = speaker_scores.values().copied().collect();
        let counts = cumulative_histogram(&scores, grid)?;
        let histogram = grid
            .iter()
            .zip(counts)
            .map(|(&threshold, count)| HistogramPoint {
                threshold: round_sig6(threshold),
                count,
            })
            .collect();
        let mst = match embeddings {
            Some(embs) => {
                let hq_points: Vec<Vec<f64>> = speaker_scores
                    .iter()
                    .filter(|(_, &s)| s > threshold.value)
                    .filter_map(|(g, _)| embs.get(g).cloned())
                    .collect();
                if hq_points.len() >= 2 {
                    Some(mst_cost(&hq_points)?)
                } else {
                    None
                }
            }
            None => None,
        };
        Ok(Report {
            total_speakers: speaker_scores.len(),
            speaker_scores,
            hq_threshold: threshold,
            hq_count,
            hq_ratio,
            mst_cost: mst,
            histogram,
            correlation: None,
            cost: None,
        })
    }

    /// Canonical JSON with reals at six significant digits.
    pub fn to_canonical_json(&self) -> String {
        let mut rounded = self.clone();
        for v in rounded.speaker_scores.values_mut() {
            *v = round_sig6(*v);
        }
        rounded.hq_threshold.value = round_sig6(rounded.hq_threshold.value);
        rounded.mst_cost = rounded.mst_cost.map(round_sig6);
        if let Some(c) = &mut rounded.correlation {
            c.r = round_sig6(c.r);
            c.ci_low = round_sig6(c.ci_low);
            c.ci_high = round_sig6(c.ci_high);
        }
        let mut s = serde_json::to_string_pretty(&rounded).expect("report serialization");
        s.push('\n');
        s
    }
}

/// Parse a strictly ascending grid spec "start:stop:step" into thresholds.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidConfig(format!(
            "grid spec \"{spec}\" must be start:stop:step"
        )));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("bad grid number \"{p}\"")))
        })
        .collect::<Result<_>>()?;
    build_grid(nums[0], nums[1], nums[2])
}

/// Thresholds `start, start+step, ...` up to and including `stop`.
pub fn build_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start {
        return Err(Error::InvalidConfig(format!(
            "invalid grid {start}:{stop}:{step}"
        )));
    }
    let mut grid = Vec::new();
    let mut i = 0u64;
    loop {
        let t = start + i as f64 * step;
        if t > stop + 1e-9 {
            break;
        }
        grid.push(round_sig6(t));
        i += 1;
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn hq_threshold_is_reference_minimum() {
        let t = hq_threshold(&map(&[("s1", 4.1), ("s2", 3.6), ("s3", 3.9)])).unwrap();
        assert_eq!(t.value, 3.6);
        let single = hq_threshold(&map(&[("only", 2.2)])).unwrap();
        assert_eq!(single.value, 2.2);
        assert!(hq_threshold(&BTreeMap::new()).is_err());
    }

    #[test]
    fn hq_threshold_matches_fold_min_oracle() {
        let mut rng = crate::rng::stream(2, "hq-min");
        for _ in 0..30 {
            let n = rng.gen_range(1..40);
            let scores: BTreeMap<String, f64> = (0..n)
                .map(|i| (format!("s{i}"), rng.gen_range(1.0..5.0)))
                .collect();
            let expected = scores.values().fold(f64::INFINITY, |a, &b| a.min(b));
            assert_eq!(hq_threshold(&scores).unwrap().value, expected);
        }
    }

    #[test]
    fn count_hq_reproduces_published_ratios() {
        // 1157 of 2719 and 578 of 2719.
        assert_eq!(format_ratio(1157, 2719), "42.6%");
        assert_eq!(format_ratio(578, 2719), "21.3%");
        let t = HqThreshold {
            value: 4.0,
            source: "test".into(),
        };
        let all_below = map(&[("a", 3.0), ("b", 2.0)]);
        assert_eq!(count_hq(&all_below, &t), (0, "0.0%".into()));
    }

    #[test]
    fn count_hq_is_strictly_greater_and_matches_scan() {
        let t = HqThreshold {
            value: 3.0,
            source: "test".into(),
        };
        let scores = map(&[("a", 3.0), ("b", 3.0001), ("c", 2.9)]);
        assert_eq!(count_hq(&scores, &t).0, 1);
        let mut rng = crate::rng::stream(3, "count-hq");
        for _ in 0..30 {
            let n = rng.gen_range(1..60);
            let scores: BTreeMap<String, f64> = (0..n)
                .map(|i| (format!("s{i}"), rng.gen_range(1.0..5.0)))
                .collect();
            let expected = scores.values().filter(|&&s| s > t.value).count();
            assert_eq!(count_hq(&scores, &t).0, expected);
        }
    }

    #[test]
    fn count_below_all_scores_returns_total() {
        let scores = map(&[("a", 3.0), ("b", 4.0), ("c", 2.0)]);
        let t = HqThreshold {
            value: 0.5,
            source: "test".into(),
        };
        assert_eq!(count_hq(&scores, &t).0, scores.len());
    }

    #[test]
    fn mst_collinear_and_square() {
        let line = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!((mst_cost(&line).unwrap() - 2.0).abs() < 1e-12);
        let square = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
        ];
        assert!((mst_cost(&square).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn mst_rejects_degenerate_input() {
        assert!(mst_cost(&[vec![1.0]]).is_err());
        assert!(mst_cost(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn mst_invariant_under_permutation_translation_and_scale() {
        let mut rng = crate::rng::stream(4, "mst-invariance");
        for _ in 0..20 {
            let n = rng.gen_range(3..9);
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..2).map(|_| rng.gen_range(-5.0..5.0)).collect())
                .collect();
            let base = mst_cost(&pts).unwrap();

            let mut permuted = pts.clone();
            permuted.reverse();
            assert!((mst_cost(&permuted).unwrap() - base).abs() < 1e-9);

            let translated: Vec<Vec<f64>> =
                pts.iter().map(|p| vec![p[0] + 3.5, p[1] - 1.25]).collect();
            assert!((mst_cost(&translated).unwrap() - base).abs() < 1e-9);

            let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let rotated: Vec<Vec<f64>> = pts
                .iter()
                .map(|p| {
                    vec![
                        p[0] * theta.cos() - p[1] * theta.sin(),
                        p[0] * theta.sin() + p[1] * theta.cos(),
                    ]
                })
                .collect();
            assert!((mst_cost(&rotated).unwrap() - base).abs() < 1e-9);

            let scaled: Vec<Vec<f64>> = pts.iter().map(|p| vec![p[0] * 2.5, p[1] * 2.5]).collect();
            assert!((mst_cost(&scaled).unwrap() - 2.5 * base).abs() < 1e-9);
        }
    }

    #[test]
    fn cumulative_histogram_examples_and_monotonicity() {
        let scores = [3.0, 3.5, 4.0];
        let grid = [2.5, 3.25, 3.75];
        assert_eq!(cumulative_histogram(&scores, &grid).unwrap(), vec![3, 2, 1]);
        assert_eq!(cumulative_histogram(&scores, &[]).unwrap(), Vec::<usize>::new());
        assert!(cumulative_histogram(&scores, &[1.0, 1.0]).is_err());

        let mut rng = crate::rng::stream(5, "hist");
        for _ in 0..20 {
            let scores: Vec<f64> = (0..rng.gen_range(0..50))
                .map(|_| rng.gen_range(1.0..5.0))
                .collect();
            let grid = build_grid(1.0, 5.0, 0.25).unwrap();
            let counts = cumulative_histogram(&scores, &grid).unwrap();
            assert!(counts.windows(2).all(|w| w[0] >= w[1]));
            for (t, c) in grid.iter().zip(&counts) {
                assert_eq!(*c, scores.iter().filter(|&&s| s > *t).count());
            }
        }
    }

    #[test]
    fn pearson_exact_lines() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson_r(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_r(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!(pearson_r(&x, &[1.0, 1.0, 1.0, 1.0]).is_err());
        assert!(pearson_r(&x[..2], &x[..2]).is_err());
    }

    #[test]
    fn pearson_matches_product_moment_oracle() {
        let mut rng = crate::rng::stream(6, "pearson");
        for _ in 0..30 {
            let n = rng.gen_range(3..100);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let y: Vec<f64> = x
                .iter()
                .map(|v| 0.7 * v + rng.gen_range(-1.0..1.0))
                .collect();
            let got = pearson_r(&x, &y).unwrap();
            // Oracle: E[xy] − E[x]E[y] over √(var x · var y), single pass.
            let nf = n as f64;
            let (sx, sy, sxy, sxx, syy) = x.iter().zip(&y).fold(
                (0.0, 0.0, 0.0, 0.0, 0.0),
                |(sx, sy, sxy, sxx, syy), (a, b)| {
                    (sx + a, sy + b, sxy + a * b, sxx + a * a, syy + b * b)
                },
            );
            let cov = sxy / nf - (sx / nf) * (sy / nf);
            let vx = sxx / nf - (sx / nf).powi(2);
            let vy = syy / nf - (sy / nf).powi(2);
            let expected = cov / (vx * vy).sqrt();
            assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        }
    }

    #[test]
    fn fisher_ci_reproduces_published_intervals() {
        let (lo, hi) = fisher_ci(0.81, 200, 0.95).unwrap();
        assert!((lo - 0.7561).abs() < 0.005, "lo={lo}");
        assert!((hi - 0.8533).abs() < 0.005, "hi={hi}");
        assert_eq!(format!("{lo:.2}"), "0.76");
        assert_eq!(format!("{hi:.2}"), "0.85");

        let (lo, hi) = fisher_ci(0.88, 200, 0.95).unwrap();
        assert_eq!(format!("{lo:.2}"), "0.84");
        assert_eq!(format!("{hi:.2}"), "0.91");
    }

    #[test]
    fn fisher_ci_symmetry_containment_and_shrinkage() {
        let (lo, hi) = fisher_ci(0.0, 30, 0.95).unwrap();
        assert!((lo + hi).abs() < 1e-12);

        let mut rng = crate::rng::stream(7, "fisher");
        for _ in 0..30 {
            let r: f64 = rng.gen_range(-0.99..0.99);
            let n = rng.gen_range(4..500);
            let (lo, hi) = fisher_ci(r, n, 0.95).unwrap();
            assert!(lo < r && r < hi);
            let (lo2, hi2) = fisher_ci(r, n + 50, 0.95).unwrap();
            assert!(hi2 - lo2 < hi - lo);
        }

        assert!(fisher_ci(1.0, 100, 0.95).is_err());
        assert!(fisher_ci(0.5, 3, 0.95).is_err());
        assert!(fisher_ci(0.5, 100, 0.80).is_err());
    }

    #[test]
    fn grid_parsing() {
        let g = parse_grid("1.0:5.0:0.5").unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[8], 5.0);
        assert!(parse_grid("1:5").is_err());
        assert!(parse_grid("5:1:0.5").is_err());
        assert!(parse_grid("1:5:0").is_err());
    }
}
