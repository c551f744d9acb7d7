//! Reward-alignment metrics and report emission: Kendall's tau over strict
//! pairs, pairwise accuracy, correlation exports, and learning-curve
//! aggregation.
//!
//! Tie handling: the ground-truth return is sparse, so ties are plentiful.
//! Pairs tied in ground truth are excluded from both metrics; pairs tied
//! only in the learned return are excluded from tau but count as incorrect
//! for accuracy. On fully tie-free data the two metrics are linked by
//! `accuracy = (tau + 1) / 2`.

use std::fmt::Write as _;

use crate::demogen::{MqmeDataset, SplitKind};
use crate::error::{Error, Result};
use crate::feedback::TrajRef;
use crate::reward::RewardModel;
use crate::rl::LearningCurve;
use crate::sim::EmbodimentKind;

/// One trajectory's cumulative ground-truth and learned returns.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub gt: f64,
    pub learned: f64,
    pub traj: TrajRef,
}

/// Score a test split: cumulative learned reward vs cumulative ground
/// truth per trajectory.
pub fn score_test_set(
    model: &RewardModel,
    dataset: &MqmeDataset,
    embodiment: EmbodimentKind,
) -> Result<Vec<EvalPair>> {
    let split = dataset.split(embodiment, SplitKind::Test);
    if split.is_empty() {
        return Err(Error::Usage("empty test split".into()));
    }
    use rayon::prelude::*;
    let learned: Vec<f64> = split
        .par_iter()
        .map(|t| -> Result<f64> {
            let mut sum = 0.0;
            for f in &t.frames {
                sum += model.reward_of_frame(f)?;
            }
            Ok(sum)
        })
        .collect::<Result<Vec<_>>>()?;
    split
        .iter()
        .zip(learned)
        .enumerate()
        .map(|(index, (t, l))| {
            Ok(EvalPair {
                gt: t.gt_return()?,
                learned: l,
                traj: TrajRef {
                    embodiment,
                    split: SplitKind::Test,
                    index,
                },
            })
        })
        .collect()
}

/// Kendall rank correlation over all strictly ordered pairs: pairs tied in
/// either coordinate are excluded.
pub fn kendalls_tau(pairs: &[EvalPair]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(Error::Usage("kendalls_tau needs at least two pairs".into()));
    }
    let mut concordant = 0u64;
    let mut discordant = 0u64;
    for i in 0..pairs.len() {
        for j in i + 1..pairs.len() {
            let dg = pairs[i].gt - pairs[j].gt;
            let dl = pairs[i].learned - pairs[j].learned;
            if dg == 0.0 || dl == 0.0 {
                continue;
            }
            if dg * dl > 0.0 {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let total = concordant + discordant;
    if total == 0 {
        return Err(Error::UndefinedMetric(
            "all pairs tied in ground truth or learned return".into(),
        ));
    }
    Ok((concordant as f64 - discordant as f64) / total as f64)
}

/// Fraction of ground-truth-ordered pairs whose learned ordering agrees;
/// learned-return ties count as incorrect.
pub fn pairwise_accuracy(pairs: &[EvalPair]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(Error::Usage("pairwise_accuracy needs at least two pairs".into()));
    }
    let mut total = 0u64;
    let mut correct = 0u64;
    for i in 0..pairs.len() {
        for j in i + 1..pairs.len() {
            let dg = pairs[i].gt - pairs[j].gt;
            if dg == 0.0 {
                continue;
            }
            total += 1;
            let dl = pairs[i].learned - pairs[j].learned;
            if dg * dl > 0.0 {
                correct += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::UndefinedMetric(
            "no strictly ordered ground-truth pairs".into(),
        ));
    }
    Ok(correct as f64 / total as f64)
}

/// Two-column correlation table `(r, r_hat)` with the learned return
/// min-max normalized to the range of the ground truth. A constant learned
/// return degenerates to the midpoint of the ground-truth range.
pub fn format_correlation(pairs: &[EvalPair], header: &str) -> Result<String> {
    if pairs.is_empty() {
        return Err(Error::Usage("no pairs to export".into()));
    }
    let gt_min = pairs.iter().map(|p| p.gt).fold(f64::INFINITY, f64::min);
    let gt_max = pairs.iter().map(|p| p.gt).fold(f64::NEG_INFINITY, f64::max);
    let l_min = pairs.iter().map(|p| p.learned).fold(f64::INFINITY, f64::min);
    let l_max = pairs
        .iter()
        .map(|p| p.learned)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out = String::new();
    writeln!(out, "# {header}").unwrap();
    writeln!(out, "gt\tlearned_normalized").unwrap();
    for p in pairs {
        let norm = if l_max == l_min {
            (gt_min + gt_max) / 2.0
        } else {
            gt_min + (p.learned - l_min) / (l_max - l_min) * (gt_max - gt_min)
        };
        writeln!(out, "{}\t{}", p.gt, norm).unwrap();
    }
    Ok(out)
}

pub fn export_correlation(
    pairs: &[EvalPair],
    header: &str,
    path: impl AsRef<std::path::Path>,
) -> Result<()> {
    std::fs::write(path, format_correlation(pairs, header)?)?;
    Ok(())
}

/// Parse a correlation table back into (gt, learned_normalized) rows.
pub fn parse_correlation(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut rows = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.starts_with("gt\t") || line.trim().is_empty() {
            continue;
        }
        let mut it = line.split('\t');
        let a = it
            .next()
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| Error::Usage(format!("bad correlation row {line:?}")))?;
        let b = it
            .next()
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| Error::Usage(format!("bad correlation row {line:?}")))?;
        rows.push((a, b));
    }
    Ok(rows)
}

/// Cross-seed aggregation of equal-length learning curves.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSummary {
    pub steps: Vec<usize>,
    pub per_seed: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Population standard deviation over seeds divided by sqrt(n).
    pub stderr: Vec<f64>,
}

pub fn aggregate_curves(curves: &[LearningCurve]) -> Result<CurveSummary> {
    if curves.is_empty() {
        return Err(Error::Usage("no curves to aggregate".into()));
    }
    let steps = curves[0].steps.clone();
    for c in curves {
        if c.steps != steps {
            return Err(Error::Usage("curves have mismatched eval points".into()));
        }
    }
    let n = curves.len() as f64;
    let mut mean = Vec::with_capacity(steps.len());
    let mut stderr = Vec::with_capacity(steps.len());
    for i in 0..steps.len() {
        let m = curves.iter().map(|c| c.returns[i]).sum::<f64>() / n;
        let var = curves
            .iter()
            .map(|c| (c.returns[i] - m).powi(2))
            .sum::<f64>()
            / n;
        mean.push(m);
        stderr.push(var.sqrt() / n.sqrt());
    }
    Ok(CurveSummary {
        steps,
        per_seed: curves.iter().map(|c| c.returns.clone()).collect(),
        mean,
        stderr,
    })
}

/// Curve table: `(step, per-seed returns..., mean, stderr)`.
pub fn format_curves(summary: &CurveSummary, header: &str) -> String {
    let mut out = String::new();
    writeln!(out, "# {header}").unwrap();
    let seeds = summary.per_seed.len();
    let mut cols = vec!["step".to_string()];
    cols.extend((0..seeds).map(|s| format!("seed{s}")));
    cols.push("mean".into());
    cols.push("stderr".into());
    writeln!(out, "{}", cols.join("\t")).unwrap();
    for i in 0..summary.steps.len() {
        let mut row = vec![summary.steps[i].to_string()];
        row.extend(summary.per_seed.iter().map(|s| s[i].to_string()));
        row.push(summary.mean[i].to_string());
        row.push(summary.stderr[i].to_string());
        writeln!(out, "{}", row.join("\t")).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(gt: &[f64], learned: &[f64]) -> Vec<EvalPair> {
        gt.iter()
            .zip(learned)
            .enumerate()
            .map(|(index, (&g, &l))| EvalPair {
                gt: g,
                learned: l,
                traj: TrajRef {
                    embodiment: EmbodimentKind::MediumStick,
                    split: SplitKind::Test,
                    index,
                },
            })
            .collect()
    }

    #[test]
    fn tau_on_the_three_point_example() {
        // (1,2,3) vs (1,3,2): two concordant pairs, one discordant.
        let p = pairs(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]);
        assert!((kendalls_tau(&p).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((pairwise_accuracy(&p).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_inverted_models() {
        let p = pairs(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(kendalls_tau(&p).unwrap(), 1.0);
        assert_eq!(pairwise_accuracy(&p).unwrap(), 1.0);
        let q = pairs(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]);
        assert_eq!(kendalls_tau(&q).unwrap(), -1.0);
        assert_eq!(pairwise_accuracy(&q).unwrap(), 0.0);
    }

    #[test]
    fn tau_is_antisymmetric_on_tie_free_data() {
        let gt = [0.3, 1.7, 0.9, 2.4, 1.1];
        let learned = [0.2, 0.9, 1.4, 0.1, 2.0];
        let p = pairs(&gt, &learned);
        let neg: Vec<f64> = learned.iter().map(|x| -x).collect();
        let q = pairs(&gt, &neg);
        assert!((kendalls_tau(&p).unwrap() + kendalls_tau(&q).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn metrics_invariant_to_monotone_transforms() {
        let gt = [0.3, 1.7, 0.9, 2.4, 1.1, 0.05];
        let learned = [0.2, 0.9, 1.4, 0.1, 2.0, -0.4];
        let p = pairs(&gt, &learned);
        let warped: Vec<f64> = learned.iter().map(|x| (3.0 * x).exp() + 5.0).collect();
        let q = pairs(&gt, &warped);
        assert_eq!(kendalls_tau(&p).unwrap(), kendalls_tau(&q).unwrap());
        assert_eq!(
            pairwise_accuracy(&p).unwrap(),
            pairwise_accuracy(&q).unwrap()
        );
    }

    #[test]
    fn accuracy_equals_shifted_tau_on_tie_free_data() {
        let gt = [0.3, 1.7, 0.9, 2.4, 1.1, 0.05, 3.3];
        let learned = [0.2, 0.9, 1.4, 0.1, 2.0, -0.4, 1.9];
        let p = pairs(&gt, &learned);
        let tau = kendalls_tau(&p).unwrap();
        let acc = pairwise_accuracy(&p).unwrap();
        assert!((acc - (tau + 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn gt_ties_are_excluded_and_learned_ties_count_incorrect() {
        // gt ties on (0,1): that pair is skipped by both metrics. The
        // learned tie on (2,3) is skipped by tau but wrong for accuracy.
        let p = pairs(&[1.0, 1.0, 2.0, 3.0], &[5.0, 1.0, 2.0, 2.0]);
        // Strict pairs for tau: (0,2) (0,3) (1,2) (1,3): concordant are
        // (1,2),(1,3); discordant (0,2),(0,3) -> tau = 0.
        assert_eq!(kendalls_tau(&p).unwrap(), 0.0);
        // Accuracy: 5 gt-ordered pairs, 2 correct, learned tie wrong.
        assert!((pairwise_accuracy(&p).unwrap() - 2.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn all_ties_is_an_undefined_metric() {
        let p = pairs(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]);
        assert!(matches!(
            kendalls_tau(&p),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(matches!(
            pairwise_accuracy(&p),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn correlation_export_round_trips_and_stays_in_range() {
        let p = pairs(&[0.0, 2.0, 4.0], &[10.0, 30.0, 20.0]);
        let text = format_correlation(&p, "method=x emb=mediumstick hash=1").unwrap();
        let rows = parse_correlation(&text).unwrap();
        assert_eq!(rows.len(), 3);
        for &(gt, norm) in &rows {
            assert!(norm >= 0.0 && norm <= 4.0);
            assert!(gt >= 0.0 && gt <= 4.0);
        }
        // Shortest round-trip float formatting recovers values exactly.
        assert_eq!(rows[1].1, 0.0 + (30.0 - 10.0) / (30.0 - 10.0) * 4.0);

        // Constant learned return degenerates to the midpoint.
        let c = pairs(&[0.0, 2.0, 4.0], &[7.0, 7.0, 7.0]);
        let rows = parse_correlation(&format_correlation(&c, "h").unwrap()).unwrap();
        assert!(rows.iter().all(|&(_, n)| n == 2.0));
    }

    #[test]
    fn curve_aggregation_matches_hand_arithmetic() {
        let a = LearningCurve {
            steps: vec![10, 20],
            returns: vec![0.0, 1.0],
        };
        let b = LearningCurve {
            steps: vec![10, 20],
            returns: vec![2.0, 3.0],
        };
        let s = aggregate_curves(&[a.clone(), b]).unwrap();
        assert_eq!(s.mean, vec![1.0, 2.0]);
        // Population sigma = 1 at both points; stderr = 1/sqrt(2).
        let e = 1.0 / 2.0f64.sqrt();
        assert!((s.stderr[0] - e).abs() < 1e-15);
        assert!((s.stderr[1] - e).abs() < 1e-15);

        // Single curve: zero stderr, mean equals the curve.
        let single = aggregate_curves(&[a.clone()]).unwrap();
        assert_eq!(single.mean, a.returns);
        assert!(single.stderr.iter().all(|&x| x == 0.0));

        // Identical curves: zero stderr.
        let same = aggregate_curves(&[a.clone(), a.clone()]).unwrap();
        assert!(same.stderr.iter().all(|&x| x == 0.0));

        // Ragged curves are rejected.
        let ragged = LearningCurve {
            steps: vec![10],
            returns: vec![0.0],
        };
        assert!(aggregate_curves(&[a, ragged]).is_err());
    }
}
