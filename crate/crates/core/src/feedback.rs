//! Synthetic feedback oracles over the MQME dataset: pairwise preferences,
//! ordered triplets, and ordinal quality buckets, all labeled from the
//! per-step mean ground-truth reward.
//!
//! Labels reference trajectories by `(embodiment, split, index)` so they
//! remain valid across encoder retraining. All generators are pure
//! functions of `(dataset, parameters, seed)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::demogen::{MqmeDataset, SplitKind, Trajectory};
use crate::error::{Error, Result};
use crate::rng;
use crate::sim::EmbodimentKind;

/// A reference to one trajectory in a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrajRef {
    pub embodiment: EmbodimentKind,
    pub split: SplitKind,
    pub index: usize,
}

impl TrajRef {
    pub fn encode(&self) -> String {
        format!(
            "{}:{}:{}",
            self.embodiment.name(),
            self.split.name(),
            self.index
        )
    }

    pub fn decode(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Usage(format!("bad trajectory reference {s:?}")));
        }
        Ok(TrajRef {
            embodiment: EmbodimentKind::from_name(parts[0])?,
            split: SplitKind::from_name(parts[1])?,
            index: parts[2]
                .parse()
                .map_err(|_| Error::Usage(format!("bad trajectory index {:?}", parts[2])))?,
        })
    }
}

/// A pairwise preference `(v_i, v_j, mu)` with a one-hot label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreferenceLabel {
    pub first: TrajRef,
    pub second: TrajRef,
    pub mu: (u8, u8),
}

/// An ordered triplet: anchor is best, negative worst under the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripletLabel {
    pub anchor: TrajRef,
    pub positive: TrajRef,
    pub negative: TrajRef,
}

/// An ordinal partition of the pooled train split, buckets ordered by
/// ascending quality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketAssignment {
    pub buckets: Vec<Vec<TrajRef>>,
    pub bucket_size: usize,
}

/// The synthetic labeler's score: per-step mean ground-truth reward. The
/// per-step normalization keeps embodiments with shorter horizons
/// comparable to the rest.
pub fn oracle_score(traj: &Trajectory) -> Result<f64> {
    traj.per_step_mean()
}

/// One-hot preference for a scored pair; `None` on ties.
pub fn label_pair(score_first: f64, score_second: f64) -> Option<(u8, u8)> {
    if score_first > score_second {
        Some((1, 0))
    } else if score_second > score_first {
        Some((0, 1))
    } else {
        None
    }
}

/// Pooled train-split references for the given embodiments, in a fixed
/// embodiment-major order.
pub fn pooled_train_refs(dataset: &MqmeDataset, embs: &[EmbodimentKind]) -> Vec<TrajRef> {
    let mut refs = Vec::new();
    for &emb in embs {
        for index in 0..dataset.split(emb, SplitKind::Train).len() {
            refs.push(TrajRef {
                embodiment: emb,
                split: SplitKind::Train,
                index,
            });
        }
    }
    refs
}

pub fn resolve<'d>(dataset: &'d MqmeDataset, r: &TrajRef) -> &'d Trajectory {
    &dataset.split(r.embodiment, r.split)[r.index]
}

fn pooled_scores(dataset: &MqmeDataset, refs: &[TrajRef]) -> Result<Vec<f64>> {
    refs.iter().map(|r| oracle_score(resolve(dataset, r))).collect()
}

/// Sample `n` strictly ordered cross-embodiment preference pairs uniformly
/// from the pooled train split; ties are resampled.
pub fn sample_preferences(
    dataset: &MqmeDataset,
    embs: &[EmbodimentKind],
    n: usize,
    seed: u64,
) -> Result<Vec<PreferenceLabel>> {
    if n < 1 {
        return Err(Error::Usage("preference count must be >= 1".into()));
    }
    let refs = pooled_train_refs(dataset, embs);
    if refs.len() < 2 {
        return Err(Error::Usage("pooled train split too small".into()));
    }
    let scores = pooled_scores(dataset, &refs)?;
    let mut rng = rng::stream(&[seed, rng::tag("feedback/preferences")]);
    let mut out = Vec::with_capacity(n);
    let budget = 200 * n as u64;
    let mut attempts = 0u64;
    while out.len() < n {
        if attempts >= budget {
            return Err(Error::Generation(format!(
                "could not find {n} untied preference pairs in {budget} attempts"
            )));
        }
        attempts += 1;
        let i = rng.gen_range(0..refs.len());
        let j = rng.gen_range(0..refs.len());
        if i == j {
            continue;
        }
        match label_pair(scores[i], scores[j]) {
            Some(mu) => out.push(PreferenceLabel {
                first: refs[i],
                second: refs[j],
                mu,
            }),
            None => continue,
        }
    }
    Ok(out)
}

/// Sample `n` strictly ordered triplets; anchor/positive/negative are the
/// best/middle/worst of each draw.
pub fn sample_triplets(
    dataset: &MqmeDataset,
    embs: &[EmbodimentKind],
    n: usize,
    seed: u64,
) -> Result<Vec<TripletLabel>> {
    if n < 1 {
        return Err(Error::Usage("triplet count must be >= 1".into()));
    }
    let refs = pooled_train_refs(dataset, embs);
    if refs.len() < 3 {
        return Err(Error::Usage("pooled train split too small".into()));
    }
    let scores = pooled_scores(dataset, &refs)?;
    let mut rng = rng::stream(&[seed, rng::tag("feedback/triplets")]);
    let mut out = Vec::with_capacity(n);
    let budget = 200 * n as u64;
    let mut attempts = 0u64;
    while out.len() < n {
        if attempts >= budget {
            return Err(Error::Generation(format!(
                "could not find {n} strictly ordered triplets in {budget} attempts"
            )));
        }
        attempts += 1;
        let a = rng.gen_range(0..refs.len());
        let b = rng.gen_range(0..refs.len());
        let c = rng.gen_range(0..refs.len());
        if a == b || b == c || a == c {
            continue;
        }
        let mut ranked = [a, b, c];
        ranked.sort_by(|&x, &y| scores[y].partial_cmp(&scores[x]).unwrap());
        if scores[ranked[0]] <= scores[ranked[1]] || scores[ranked[1]] <= scores[ranked[2]] {
            continue;
        }
        out.push(TripletLabel {
            anchor: refs[ranked[0]],
            positive: refs[ranked[1]],
            negative: refs[ranked[2]],
        });
    }
    Ok(out)
}

/// Partition the pooled train split into `num_buckets` equal contiguous
/// buckets by ascending oracle score. Score ties are ordered by a
/// seed-keyed shuffle; the size remainder is discarded from inside tie
/// groups so the ordinal boundaries stay meaningful.
pub fn bucketize(
    dataset: &MqmeDataset,
    embs: &[EmbodimentKind],
    num_buckets: usize,
    bucket_size: Option<usize>,
    seed: u64,
) -> Result<BucketAssignment> {
    if num_buckets < 1 {
        return Err(Error::Usage("num_buckets must be >= 1".into()));
    }
    let refs = pooled_train_refs(dataset, embs);
    let size = bucket_size.unwrap_or(refs.len() / num_buckets);
    if size < 1 || num_buckets * size > refs.len() {
        return Err(Error::Usage(format!(
            "cannot make {num_buckets} buckets of {size} from a pool of {}",
            refs.len()
        )));
    }
    let scores = pooled_scores(dataset, &refs)?;
    let mut rng = rng::stream(&[seed, rng::tag("feedback/buckets")]);
    let mut keyed: Vec<(f64, u64, TrajRef)> = refs
        .iter()
        .enumerate()
        .map(|(i, &r)| (scores[i], rng.gen::<u64>(), r))
        .collect();
    keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));

    // Discard the remainder from the middles of the largest tie groups.
    let mut drop = keyed.len() - num_buckets * size;
    while drop > 0 {
        let mut groups: Vec<(usize, usize)> = Vec::new(); // (start, len)
        let mut start = 0;
        for i in 1..=keyed.len() {
            if i == keyed.len() || keyed[i].0 != keyed[start].0 {
                groups.push((start, i - start));
                start = i;
            }
        }
        let target = groups
            .iter()
            .filter(|&&(_, len)| len > 1)
            .max_by_key(|&&(_, len)| len)
            .copied()
            // All-singleton pool: fall back to dropping from the end.
            .unwrap_or((keyed.len() - 1, 1));
        keyed.remove(target.0 + target.1 / 2);
        drop -= 1;
    }

    let buckets = keyed
        .chunks(size)
        .map(|chunk| chunk.iter().map(|&(_, _, r)| r).collect())
        .collect();
    Ok(BucketAssignment {
        buckets,
        bucket_size: size,
    })
}

/// Line-delimited feedback file: `P i j mu0 mu1`, `T a p n`, `B bucket i`,
/// with `#`-prefixed provenance headers.
pub fn format_feedback(
    preferences: &[PreferenceLabel],
    triplets: &[TripletLabel],
    buckets: Option<&BucketAssignment>,
    header: &str,
) -> String {
    let mut out = String::new();
    writeln!(out, "# {header}").unwrap();
    for p in preferences {
        writeln!(
            out,
            "P {} {} {} {}",
            p.first.encode(),
            p.second.encode(),
            p.mu.0,
            p.mu.1
        )
        .unwrap();
    }
    for t in triplets {
        writeln!(
            out,
            "T {} {} {}",
            t.anchor.encode(),
            t.positive.encode(),
            t.negative.encode()
        )
        .unwrap();
    }
    if let Some(b) = buckets {
        for (k, bucket) in b.buckets.iter().enumerate() {
            for r in bucket {
                writeln!(out, "B {k} {}", r.encode()).unwrap();
            }
        }
    }
    out
}

#[derive(Debug, Default, Clone)]
pub struct FeedbackFile {
    pub preferences: Vec<PreferenceLabel>,
    pub triplets: Vec<TripletLabel>,
    pub buckets: Option<BucketAssignment>,
    pub headers: Vec<String>,
}

pub fn parse_feedback(text: &str) -> Result<FeedbackFile> {
    let mut out = FeedbackFile::default();
    let mut bucket_map: BTreeMap<usize, Vec<TrajRef>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix('#') {
            out.headers.push(h.trim().to_string());
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::Usage(format!("bad feedback record at line {}", lineno + 1));
        match fields.first() {
            Some(&"P") if fields.len() == 5 => {
                let mu0: u8 = fields[3].parse().map_err(|_| bad())?;
                let mu1: u8 = fields[4].parse().map_err(|_| bad())?;
                if mu0 + mu1 != 1 || mu0 > 1 {
                    return Err(bad());
                }
                out.preferences.push(PreferenceLabel {
                    first: TrajRef::decode(fields[1])?,
                    second: TrajRef::decode(fields[2])?,
                    mu: (mu0, mu1),
                });
            }
            Some(&"T") if fields.len() == 4 => {
                out.triplets.push(TripletLabel {
                    anchor: TrajRef::decode(fields[1])?,
                    positive: TrajRef::decode(fields[2])?,
                    negative: TrajRef::decode(fields[3])?,
                });
            }
            Some(&"B") if fields.len() == 3 => {
                let k: usize = fields[1].parse().map_err(|_| bad())?;
                bucket_map.entry(k).or_default().push(TrajRef::decode(fields[2])?);
            }
            _ => return Err(bad()),
        }
    }
    if !bucket_map.is_empty() {
        let n = bucket_map.len();
        if bucket_map.keys().copied().ne(0..n) {
            return Err(Error::Usage("bucket indices are not contiguous".into()));
        }
        let buckets: Vec<Vec<TrajRef>> = bucket_map.into_values().collect();
        let bucket_size = buckets[0].len();
        out.buckets = Some(BucketAssignment {
            buckets,
            bucket_size,
        });
    }
    Ok(out)
}

pub fn save_feedback(
    path: impl AsRef<Path>,
    preferences: &[PreferenceLabel],
    triplets: &[TripletLabel],
    buckets: Option<&BucketAssignment>,
    header: &str,
) -> Result<()> {
    std::fs::write(path, format_feedback(preferences, triplets, buckets, header))?;
    Ok(())
}

pub fn load_feedback(path: impl AsRef<Path>) -> Result<FeedbackFile> {
    parse_feedback(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demogen::{build_dataset, default_noise_schedule, DatasetQuotas};
    use crate::sim::EnvConfig;

    fn dataset() -> MqmeDataset {
        build_dataset(
            EnvConfig::default(),
            &default_noise_schedule(),
            DatasetQuotas {
                train_per_class: 4,
                test_per_class: 2,
            },
            13,
        )
        .unwrap()
    }

    const TRAIN_EMBS: [EmbodimentKind; 3] = [
        EmbodimentKind::ShortStick,
        EmbodimentKind::LongStick,
        EmbodimentKind::Gripper,
    ];

    #[test]
    fn oracle_score_is_per_step_mean() {
        let d = dataset();
        let t = &d.split(EmbodimentKind::ShortStick, SplitKind::Train)[0];
        let expected = t.gt_rewards.iter().sum::<f64>() / t.len() as f64;
        assert_eq!(oracle_score(t).unwrap(), expected);
    }

    #[test]
    fn shorter_success_scores_higher() {
        // Two full successes, one shorter: the per-step mean favors it.
        let short = [1.0 / 3.0, 2.0 / 3.0, 1.0];
        let long = [0.0, 1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        let mean = |r: &[f64]| r.iter().sum::<f64>() / r.len() as f64;
        assert!(mean(&short) > mean(&long));
    }

    #[test]
    fn preferences_are_consistent_and_deterministic() {
        let d = dataset();
        let labels = sample_preferences(&d, &TRAIN_EMBS, 200, 3).unwrap();
        assert_eq!(labels.len(), 200);
        for l in &labels {
            assert_ne!(l.first, l.second);
            let si = oracle_score(resolve(&d, &l.first)).unwrap();
            let sj = oracle_score(resolve(&d, &l.second)).unwrap();
            assert_ne!(si, sj);
            assert_eq!(l.mu == (1, 0), si > sj);
            assert!(l.mu == (1, 0) || l.mu == (0, 1));
        }
        assert_eq!(labels, sample_preferences(&d, &TRAIN_EMBS, 200, 3).unwrap());
        assert_ne!(labels, sample_preferences(&d, &TRAIN_EMBS, 200, 4).unwrap());
    }

    #[test]
    fn label_pair_is_antisymmetric() {
        assert_eq!(label_pair(2.0, 1.0), Some((1, 0)));
        assert_eq!(label_pair(1.0, 2.0), Some((0, 1)));
        assert_eq!(label_pair(1.0, 1.0), None);
    }

    #[test]
    fn preferences_include_mixed_embodiment_pairs() {
        let d = dataset();
        let labels = sample_preferences(&d, &TRAIN_EMBS, 300, 3).unwrap();
        assert!(labels
            .iter()
            .any(|l| l.first.embodiment != l.second.embodiment));
    }

    #[test]
    fn triplets_are_strictly_ordered() {
        let d = dataset();
        let triplets = sample_triplets(&d, &TRAIN_EMBS, 32, 5).unwrap();
        assert_eq!(triplets.len(), 32);
        for t in &triplets {
            let sa = oracle_score(resolve(&d, &t.anchor)).unwrap();
            let sp = oracle_score(resolve(&d, &t.positive)).unwrap();
            let sn = oracle_score(resolve(&d, &t.negative)).unwrap();
            assert!(sa > sp && sp > sn);
        }
        assert_eq!(triplets, sample_triplets(&d, &TRAIN_EMBS, 32, 5).unwrap());
    }

    #[test]
    fn no_preference_three_cycles() {
        let d = dataset();
        let labels = sample_preferences(&d, &TRAIN_EMBS, 400, 9).unwrap();
        let mut wins: std::collections::HashSet<(TrajRef, TrajRef)> = Default::default();
        for l in &labels {
            let (w, lo) = if l.mu == (1, 0) {
                (l.first, l.second)
            } else {
                (l.second, l.first)
            };
            wins.insert((w, lo));
        }
        for &(a, b) in &wins {
            for &(b2, c) in &wins {
                if b == b2 {
                    assert!(
                        !wins.contains(&(c, a)),
                        "3-cycle {a:?} > {b:?} > {c:?} > {a:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn buckets_partition_and_are_monotone() {
        let d = dataset();
        let assignment = bucketize(&d, &TRAIN_EMBS, 4, None, 2).unwrap();
        assert_eq!(assignment.buckets.len(), 4);
        // floor(48 / 4) = 12 per bucket.
        assert_eq!(assignment.bucket_size, 12);
        let mut seen = std::collections::HashSet::new();
        for b in &assignment.buckets {
            assert_eq!(b.len(), assignment.bucket_size);
            for r in b {
                assert!(seen.insert(*r), "duplicate reference across buckets");
            }
        }
        for k in 0..assignment.buckets.len() - 1 {
            let hi = assignment.buckets[k]
                .iter()
                .map(|r| oracle_score(resolve(&d, r)).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            let lo = assignment.buckets[k + 1]
                .iter()
                .map(|r| oracle_score(resolve(&d, r)).unwrap())
                .fold(f64::INFINITY, f64::min);
            assert!(hi <= lo, "bucket {k} max {hi} > bucket {} min {lo}", k + 1);
        }
    }

    #[test]
    fn explicit_bucket_size_discards_remainder() {
        let d = dataset();
        // Pool is 3 * 16 = 48; 4 buckets of 11 discards 4 trajectories.
        let assignment = bucketize(&d, &TRAIN_EMBS, 4, Some(11), 2).unwrap();
        let total: usize = assignment.buckets.iter().map(Vec::len).sum();
        assert_eq!(total, 44);
        assert!(matches!(
            bucketize(&d, &TRAIN_EMBS, 50, None, 2),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            bucketize(&d, &TRAIN_EMBS, 0, None, 2),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn feedback_file_round_trips() {
        let d = dataset();
        let prefs = sample_preferences(&d, &TRAIN_EMBS, 20, 3).unwrap();
        let triplets = sample_triplets(&d, &TRAIN_EMBS, 10, 5).unwrap();
        let buckets = bucketize(&d, &TRAIN_EMBS, 4, None, 2).unwrap();
        let text = format_feedback(&prefs, &triplets, Some(&buckets), "config deadbeef");
        let parsed = parse_feedback(&text).unwrap();
        assert_eq!(parsed.preferences, prefs);
        assert_eq!(parsed.triplets, triplets);
        assert_eq!(parsed.buckets.as_ref().unwrap().buckets, buckets.buckets);
        assert_eq!(parsed.headers, vec!["config deadbeef".to_string()]);
        assert!(parse_feedback("Q nope").is_err());
    }
}
