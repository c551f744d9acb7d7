//! Loss definitions, each in two forms: a plain evaluation used by callers
//! and tests, and a tape builder used by the trainers. The plain forms are
//! deliberately independent code paths so identities between objectives can
//! be asserted rather than assumed.

use crate::demogen::Trajectory;
use crate::diffnet::{encode, EncoderParams, NodeId, Tape};
use crate::error::{Error, Result};
use crate::feedback::TrajRef;
use crate::sim::Frame;

/// A trajectory mapped into the latent space, one vector per frame.
#[derive(Debug, Clone)]
pub struct EmbeddedVideo {
    pub latents: Vec<Vec<f64>>,
    pub source: Option<TrajRef>,
}

impl EmbeddedVideo {
    pub fn len(&self) -> usize {
        self.latents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latents.is_empty()
    }
}

pub fn embed_trajectory(params: &EncoderParams, traj: &Trajectory) -> Result<EmbeddedVideo> {
    let latents = traj
        .frames
        .iter()
        .map(|f| encode(params, f))
        .collect::<Result<Vec<_>>>()?;
    Ok(EmbeddedVideo {
        latents,
        source: None,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Soft nearest neighbor of `query` among `frames`:
/// `alpha_k = softmax(-||query - frames[k]||^2 / temperature)` and the
/// alpha-blended vector.
pub fn soft_nearest_neighbor(
    query: &[f64],
    frames: &[Vec<f64>],
    temperature: f64,
) -> (Vec<f64>, Vec<f64>) {
    assert!(!frames.is_empty() && temperature > 0.0);
    let logits: Vec<f64> = frames
        .iter()
        .map(|f| -sq_dist(query, f) / temperature)
        .collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    let alpha: Vec<f64> = exps.iter().map(|&e| e / z).collect();
    let mut blended = vec![0.0; query.len()];
    for (a, f) in alpha.iter().zip(frames) {
        for (o, &v) in blended.iter_mut().zip(f) {
            *o += a * v;
        }
    }
    (alpha, blended)
}

fn normalized_positions(len: usize) -> Vec<f64> {
    if len <= 1 {
        return vec![0.0; len];
    }
    (0..len).map(|i| i as f64 / (len - 1) as f64).collect()
}

/// Cycle-back regression loss for one (video pair, frame index): align
/// frame `t` of `vj` to its soft nearest neighbor in `vi`, cycle back to
/// `vj`, and penalize the squared error of the predicted normalized index.
pub fn tcc_pair_loss(vi: &EmbeddedVideo, vj: &EmbeddedVideo, t: usize, temperature: f64) -> f64 {
    assert!(t < vj.len(), "frame index out of range");
    let positions = normalized_positions(vj.len());
    let (_, blended) = soft_nearest_neighbor(&vj.latents[t], &vi.latents, temperature);
    let (beta, _) = soft_nearest_neighbor(&blended, &vj.latents, temperature);
    let predicted: f64 = beta.iter().zip(&positions).map(|(b, p)| b * p).sum();
    (predicted - positions[t]).powi(2)
}

/// Preference probability from per-frame rewards: the softmax of summed
/// rewards, computed in log space.
pub fn rlhf_pref_prob(rewards_i: &[f64], rewards_j: &[f64]) -> f64 {
    assert!(!rewards_i.is_empty() && !rewards_j.is_empty());
    let si: f64 = rewards_i.iter().sum();
    let sj: f64 = rewards_j.iter().sum();
    logistic(si - sj)
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Preference probability over distance-to-goal scores: a Bradley-Terry
/// model whose per-frame score is `-||phi(s) - g||^2`. Kept as its own
/// exponential-normalization route, distinct from [`rlhf_pref_prob`], so
/// the equivalence between the two forms is testable.
pub fn xprefs_prob(vi: &EmbeddedVideo, vj: &EmbeddedVideo, goal: &[f64]) -> f64 {
    assert!(!vi.is_empty() && !vj.is_empty());
    let score = |v: &EmbeddedVideo| -> f64 {
        v.latents.iter().map(|e| -sq_dist(e, goal)).sum()
    };
    let (si, sj) = (score(vi), score(vj));
    let m = si.max(sj);
    let (ei, ej) = ((si - m).exp(), (sj - m).exp());
    ei / (ei + ej)
}

/// Ranked-triplet loss over whole videos: video embeddings are frame means,
/// the ordering probability compares the anchor's squared distances to the
/// positive and negative, and the loss is its negative log.
pub fn triplet_loss(anchor: &EmbeddedVideo, positive: &EmbeddedVideo, negative: &EmbeddedVideo) -> f64 {
    let mean = |v: &EmbeddedVideo| -> Vec<f64> {
        let dim = v.latents[0].len();
        let mut m = vec![0.0; dim];
        for e in &v.latents {
            for (o, &x) in m.iter_mut().zip(e) {
                *o += x / v.len() as f64;
            }
        }
        m
    };
    let (a, p, n) = (mean(anchor), mean(positive), mean(negative));
    let d_ap = sq_dist(&a, &p);
    let d_an = sq_dist(&a, &n);
    // -log P with P = exp(-d_ap) / (exp(-d_ap) + exp(-d_an)).
    softplus(d_ap - d_an)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Mean binary cross-entropy of the scalar-head sigmoid on goal-set
/// positives and dataset negatives.
pub fn classifier_loss(
    params: &EncoderParams,
    positives: &[&Frame],
    negatives: &[&Frame],
) -> Result<f64> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Usage("classifier batch needs both classes".into()));
    }
    let mut total = 0.0;
    for &f in positives {
        let z = crate::diffnet::head_value(params, f)?;
        total += softplus(z) - z; // -log sigmoid(z)
    }
    for &f in negatives {
        let z = crate::diffnet::head_value(params, f)?;
        total += softplus(z); // -log (1 - sigmoid(z))
    }
    Ok(total / (positives.len() + negatives.len()) as f64)
}

// ----- tape builders used by the trainers -----

/// Tape form of [`tcc_pair_loss`] over latent leaf nodes, with explicit
/// (possibly subsampled) normalized frame positions.
pub(crate) fn tcc_pair_loss_on_tape(
    tape: &mut Tape,
    vi: &[NodeId],
    vj: &[NodeId],
    vj_positions: &[f64],
    t: usize,
    temperature: f64,
) -> NodeId {
    let query = vj[t];
    let d_i: Vec<NodeId> = vi.iter().map(|&k| tape.sq_dist(query, k)).collect();
    let d_i = tape.concat_scalars(&d_i);
    let scaled_i = tape.scale(d_i, -1.0 / temperature);
    let alpha = tape.softmax(scaled_i);
    let blended = tape.blend(alpha, vi);

    let d_j: Vec<NodeId> = vj.iter().map(|&m| tape.sq_dist(blended, m)).collect();
    let d_j = tape.concat_scalars(&d_j);
    let scaled_j = tape.scale(d_j, -1.0 / temperature);
    let beta = tape.softmax(scaled_j);
    let predicted = tape.dot_const(beta, vj_positions);
    let target = tape.scalar_input(vj_positions[t]);
    let diff = tape.sub(predicted, target);
    tape.square(diff)
}

/// Tape form of the preference cross-entropy for one labeled pair given the
/// two trajectories' per-frame score nodes. With a one-hot label only the
/// realized outcome's term is nonzero.
pub(crate) fn preference_loss_on_tape(
    tape: &mut Tape,
    scores_first: &[NodeId],
    scores_second: &[NodeId],
    mu: (u8, u8),
) -> NodeId {
    let s_first = tape.add_many(scores_first);
    let s_second = tape.add_many(scores_second);
    let margin = if mu == (1, 0) {
        tape.sub(s_second, s_first)
    } else {
        tape.sub(s_first, s_second)
    };
    tape.softplus(margin)
}

/// Per-frame distance-to-goal score nodes: `-||latent - g||^2`.
pub(crate) fn goal_distance_scores_on_tape(
    tape: &mut Tape,
    latents: &[NodeId],
    goal_node: NodeId,
) -> Vec<NodeId> {
    latents
        .iter()
        .map(|&l| {
            let d = tape.sq_dist(l, goal_node);
            tape.scale(d, -1.0)
        })
        .collect()
}

/// Tape form of [`triplet_loss`] on latent leaves.
pub(crate) fn triplet_loss_on_tape(
    tape: &mut Tape,
    anchor: &[NodeId],
    positive: &[NodeId],
    negative: &[NodeId],
) -> NodeId {
    let va = tape.mean_many(anchor);
    let vp = tape.mean_many(positive);
    let vn = tape.mean_many(negative);
    let d_ap = tape.sq_dist(va, vp);
    let d_an = tape.sq_dist(va, vn);
    let margin = tape.sub(d_ap, d_an);
    tape.softplus(margin)
}

/// Tape form of the per-frame binary cross-entropy on head scalars.
pub(crate) fn bce_loss_on_tape(tape: &mut Tape, z: NodeId, target: f64) -> NodeId {
    let sp = tape.softplus(z);
    if target == 0.0 {
        sp
    } else {
        let tz = tape.scale(z, -target);
        tape.add(sp, tz)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn video(latents: Vec<Vec<f64>>) -> EmbeddedVideo {
        EmbeddedVideo {
            latents,
            source: None,
        }
    }

    #[test]
    fn soft_nn_equidistant_frames_split_weight() {
        let (alpha, blended) =
            soft_nearest_neighbor(&[0.0], &[vec![1.0], vec![-1.0]], 1.0);
        assert!((alpha[0] - 0.5).abs() < 1e-15);
        assert!((alpha[1] - 0.5).abs() < 1e-15);
        assert!(blended[0].abs() < 1e-15);
    }

    #[test]
    fn soft_nn_concentrates_on_the_near_frame() {
        // Distances 0 and 100 at temperature 1: the far weight is about
        // exp(-100) = 3.7e-44, so the near weight exceeds 1 - 1e-40 (and
        // rounds to exactly 1.0 in f64).
        let (alpha, _) = soft_nearest_neighbor(&[0.0], &[vec![0.0], vec![10.0]], 1.0);
        assert!(alpha[0] >= 1.0 - 1e-40);
        assert!(alpha[1] < 1e-40);
        assert!(alpha[1] > 0.0);
    }

    #[test]
    fn soft_nn_weights_are_a_distribution() {
        let frames: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let (alpha, _) = soft_nearest_neighbor(&[2.5, 3.0], &frames, 0.37);
        assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(alpha.iter().all(|&a| a >= 0.0));
    }

    #[test]
    fn soft_nn_low_temperature_selects_unique_nearest() {
        let frames: Vec<Vec<f64>> = vec![vec![0.0], vec![0.5], vec![2.0]];
        let (alpha, _) = soft_nearest_neighbor(&[0.55], &frames, 1e-3);
        assert!(alpha[1] > 1.0 - 1e-6);
    }

    #[test]
    fn tcc_self_alignment_with_separated_embeddings_is_tiny() {
        let v = video(vec![vec![0.0], vec![10.0], vec![20.0]]);
        let loss = tcc_pair_loss(&v, &v, 1, 0.1);
        assert!(loss < 1e-6, "loss {loss}");
        assert!(loss >= 0.0);
    }

    #[test]
    fn tcc_identical_embeddings_predict_mean_index() {
        let v = video(vec![vec![1.0], vec![1.0], vec![1.0], vec![1.0]]);
        // Uniform beta over normalized positions (0, 1/3, 2/3, 1): the
        // prediction is 0.5 for every t.
        let loss_t0 = tcc_pair_loss(&v, &v, 0, 0.1);
        assert!((loss_t0 - 0.25).abs() < 1e-12);
        let loss_t3 = tcc_pair_loss(&v, &v, 3, 0.1);
        assert!((loss_t3 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn rlhf_prob_matches_logistic_values() {
        assert!((rlhf_pref_prob(&[1.0, 1.0], &[2.0]) - 0.5).abs() < 1e-15);
        // Sum difference of 1: logistic(1).
        assert!((rlhf_pref_prob(&[2.0], &[1.0]) - 0.7310585786300049).abs() < 1e-12);
        // Sum difference of ln 3: exactly 3/4.
        assert!((rlhf_pref_prob(&[3f64.ln()], &[0.0]) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn rlhf_prob_complements_sum_to_one() {
        let a = [0.3, -0.7, 1.2];
        let b = [0.9, 0.1];
        let p = rlhf_pref_prob(&a, &b);
        let q = rlhf_pref_prob(&b, &a);
        assert!(p > 0.0 && p < 1.0);
        assert!((p + q - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rlhf_prob_constant_shift_invariance_needs_equal_lengths() {
        let a = [0.4, -0.2, 0.8];
        let b = [0.0, 0.5, -0.1];
        let p = rlhf_pref_prob(&a, &b);
        let shift = |r: &[f64], c: f64| -> Vec<f64> { r.iter().map(|x| x + c).collect() };
        // Equal lengths: invariant.
        let p_shifted = rlhf_pref_prob(&shift(&a, 2.5), &shift(&b, 2.5));
        assert!((p - p_shifted).abs() < 1e-12);
        // Unequal lengths: not invariant.
        let c = [0.0, 0.5];
        let q = rlhf_pref_prob(&a, &c);
        let q_shifted = rlhf_pref_prob(&shift(&a, 2.5), &shift(&c, 2.5));
        assert!((q - q_shifted).abs() > 1e-3);
    }

    #[test]
    fn xprefs_prob_examples() {
        let g = vec![1.0, -2.0];
        // Every frame at the goal: all scores zero, probability one half.
        let at_goal = video(vec![g.clone(), g.clone()]);
        assert!((xprefs_prob(&at_goal, &at_goal, &g) - 0.5).abs() < 1e-15);
        // Single-frame videos at squared distances 0 and 1: logistic(1).
        let vi = video(vec![g.clone()]);
        let vj = video(vec![vec![2.0, -2.0]]);
        assert!((xprefs_prob(&vi, &vj, &g) - 0.7310585786300049).abs() < 1e-12);
    }

    #[test]
    fn xprefs_prob_is_translation_invariant() {
        let g = vec![0.5, 0.5, -1.0];
        let vi = video(vec![vec![1.0, 0.0, 0.0], vec![0.2, 0.4, -0.6]]);
        let vj = video(vec![vec![0.0, 1.0, 0.3]]);
        let p = xprefs_prob(&vi, &vj, &g);
        let shift = [10.0, -3.0, 0.25];
        let shifted = |v: &EmbeddedVideo| {
            video(
                v.latents
                    .iter()
                    .map(|e| e.iter().zip(&shift).map(|(x, s)| x + s).collect())
                    .collect(),
            )
        };
        let g2: Vec<f64> = g.iter().zip(&shift).map(|(x, s)| x + s).collect();
        let p2 = xprefs_prob(&shifted(&vi), &shifted(&vj), &g2);
        assert!((p - p2).abs() < 1e-12);
    }

    #[test]
    fn xprefs_prob_equals_rlhf_on_distance_scores() {
        // The identity behind the two preference forms, spot-checked here
        // and swept over random instances in the acceptance suite.
        let mut rng = crate::rng::stream(&[42]);
        use rand::Rng;
        for _ in 0..50 {
            let dim = 4;
            let g: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let make = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| -> EmbeddedVideo {
                video(
                    (0..n)
                        .map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
                        .collect(),
                )
            };
            let n1 = rng.gen_range(1..6);
            let n2 = rng.gen_range(1..6);
            let vi = make(&mut rng, n1);
            let vj = make(&mut rng, n2);
            let scores = |v: &EmbeddedVideo| -> Vec<f64> {
                v.latents.iter().map(|e| -sq_dist(e, &g)).collect()
            };
            let p1 = xprefs_prob(&vi, &vj, &g);
            let p2 = rlhf_pref_prob(&scores(&vi), &scores(&vj));
            let rel = (p1 - p2).abs() / p2.abs().max(1e-300);
            assert!(rel < 1e-12, "p1 {p1} p2 {p2}");
        }
    }

    #[test]
    fn triplet_loss_values() {
        let a = video(vec![vec![0.0, 0.0]]);
        let p = video(vec![vec![1.0, 0.0]]);
        let n = video(vec![vec![0.0, 1.0]]);
        // Equal distances: ln 2.
        assert!((triplet_loss(&a, &p, &n) - std::f64::consts::LN_2).abs() < 1e-12);

        // d(a,p) = 0, d(a,n) = ln 3: P = 3/4, loss = ln(4/3).
        let p0 = video(vec![vec![0.0, 0.0]]);
        let n_ln3 = video(vec![vec![(3f64.ln()).sqrt(), 0.0]]);
        let loss = triplet_loss(&a, &p0, &n_ln3);
        assert!((loss - (4.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn triplet_loss_decreases_in_negative_distance() {
        let a = video(vec![vec![0.0]]);
        let p = video(vec![vec![0.5]]);
        let mut last = f64::INFINITY;
        for d in [0.5, 1.0, 2.0, 4.0] {
            let n = video(vec![vec![d]]);
            let loss = triplet_loss(&a, &p, &n);
            assert!(loss < last);
            last = loss;
        }
    }

    #[test]
    fn classifier_loss_at_half_is_ln_two() {
        // Zero head output gives sigmoid 0.5 on every frame.
        let config = crate::sim::EnvConfig::default();
        let env = crate::sim::Env::new(config, crate::sim::EmbodimentKind::ShortStick).unwrap();
        let frame = env.render_frame(&env.reset(0).unwrap());
        let mut params =
            EncoderParams::with_scalar_head(config.frame_len(), &[8], 4, 3);
        for l in &mut params.layers {
            l.w.iter_mut().for_each(|w| *w = 0.0);
            l.b.iter_mut().for_each(|b| *b = 0.0);
        }
        let loss = classifier_loss(&params, &[&frame], &[&frame]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(classifier_loss(&params, &[], &[&frame]).is_err());
    }
}
