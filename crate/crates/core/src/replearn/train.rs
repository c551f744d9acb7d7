//! Training loops. Every iteration follows the same staged scheme:
//!
//! 1. run the encoder forward over the batch's frames with cached
//!    activations (parallel over a fixed chunk grid, so results are
//!    bitwise identical for any worker count);
//! 2. assemble the method's loss on a tape whose leaves are the per-frame
//!    network outputs and reverse-sweep it for the leaf adjoints;
//! 3. backpropagate each frame's adjoint through the encoder and reduce the
//!    per-chunk gradients in fixed order.
//!
//! Batches are built by [`prepare_batch`] and friends, shared between the
//! trainers and the finite-difference suite, so the gradient checks
//! exercise the exact path used in training.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::demogen::{GoalSet, MqmeDataset, Trajectory};
use crate::diffnet::{adam_step, EncoderParams, Grads, NodeId, OptimState, Tape};
use crate::error::{Error, Result};
use crate::feedback::{BucketAssignment, PreferenceLabel, TrajRef, TripletLabel};
use crate::rng;
use crate::sim::EmbodimentKind;

use super::losses::{
    bce_loss_on_tape, goal_distance_scores_on_tape, preference_loss_on_tape, rlhf_pref_prob,
    tcc_pair_loss_on_tape, triplet_loss_on_tape,
};

/// Fixed parallel grid for batch work; constant so gradients do not depend
/// on the worker count.
const GRAD_CHUNKS: usize = 32;

/// Learning method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Tcc,
    TccBuckets,
    XRlhf,
    XPrefsStatic,
    XPrefsDynamic { refresh_period: usize },
    XTriplets,
    GoalClassifier,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Tcc => "tcc",
            Method::TccBuckets => "tcc-buckets",
            Method::XRlhf => "xrlhf",
            Method::XPrefsStatic => "xprefs-static",
            Method::XPrefsDynamic { .. } => "xprefs-dynamic",
            Method::XTriplets => "xtriplets",
            Method::GoalClassifier => "goal-classifier",
        }
    }
}

/// Hyperparameters for one training run.
#[derive(Debug, Clone)]
pub struct TrainSpec {
    pub method: Method,
    pub iterations: usize,
    pub batch_size: usize,
    pub frames_per_video: usize,
    pub temperature: f64,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub seed: u64,
}

impl TrainSpec {
    pub fn new(method: Method, iterations: usize, seed: u64) -> Self {
        Self {
            method,
            iterations,
            batch_size: 32,
            frames_per_video: 20,
            temperature: 0.1,
            learning_rate: 1e-3,
            hidden: vec![128, 128],
            latent_dim: 32,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size < 1 || self.temperature <= 0.0 || self.learning_rate <= 0.0 {
            return Err(Error::Usage("invalid train spec".into()));
        }
        if let Method::XPrefsDynamic { refresh_period } = self.method {
            if refresh_period < 1 {
                return Err(Error::Usage("refresh_period must be >= 1".into()));
            }
        }
        Ok(())
    }

    fn init_embedding(&self, input_dim: usize) -> EncoderParams {
        EncoderParams::embedding(input_dim, &self.hidden, self.latent_dim, self.seed)
    }

    fn init_scalar(&self, input_dim: usize) -> EncoderParams {
        EncoderParams::with_scalar_head(input_dim, &self.hidden, self.latent_dim, self.seed)
    }
}

/// Per-iteration loss trace with dynamic-goal refresh markers. XPrefs runs
/// also carry the goal embedding their distances were trained against
/// (frozen-initial for static, last refresh for dynamic), which the reward
/// model must reuse.
#[derive(Debug, Clone)]
pub struct LossReport {
    pub losses: Vec<f64>,
    pub refresh_steps: Vec<usize>,
    pub wall_secs: f64,
    pub final_goal: Option<Vec<f64>>,
}

/// Optional labeled inputs per method.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrainInputs<'a> {
    pub goal_set: Option<&'a GoalSet>,
    pub buckets: Option<&'a BucketAssignment>,
    pub preferences: Option<&'a [PreferenceLabel]>,
    pub triplets: Option<&'a [TripletLabel]>,
}

/// A dataset restricted to the training embodiments' train splits.
#[derive(Debug, Clone)]
pub struct DatasetView<'a> {
    pub dataset: &'a MqmeDataset,
    pub embodiments: Vec<EmbodimentKind>,
}

impl<'a> DatasetView<'a> {
    pub fn new(dataset: &'a MqmeDataset, embodiments: &[EmbodimentKind]) -> Self {
        Self {
            dataset,
            embodiments: embodiments.to_vec(),
        }
    }

    pub fn pooled_refs(&self) -> Vec<TrajRef> {
        crate::feedback::pooled_train_refs(self.dataset, &self.embodiments)
    }

    pub fn traj(&self, r: &TrajRef) -> &'a Trajectory {
        &self.dataset.split(r.embodiment, r.split)[r.index]
    }

    pub fn input_dim(&self) -> usize {
        self.dataset.config.frame_len()
    }
}

type LossBuilder = dyn Fn(&mut Tape, &[NodeId]) -> Result<NodeId>;

#[derive(Clone, Copy, PartialEq, Eq)]
enum NetDepth {
    Trunk,
    Full,
}

/// One assembled batch: frame inputs plus the loss graph over their
/// network outputs. Evaluable as a pure function of the parameters, which
/// is exactly what the finite-difference oracle needs.
pub struct PreparedBatch {
    inputs: Vec<Vec<f64>>,
    depth: NetDepth,
    builder: Box<LossBuilder>,
}

impl PreparedBatch {
    /// Number of frame inputs in this batch.
    pub fn input_count(&self) -> usize {
        self.inputs.len()
    }

    fn layers(&self, params: &EncoderParams) -> usize {
        match self.depth {
            NetDepth::Trunk => params.trunk_layers,
            NetDepth::Full => params.layers.len(),
        }
    }

    /// Batch loss at `params` (forward only).
    pub fn loss_value(&self, params: &EncoderParams) -> Result<f64> {
        let layers = self.layers(params);
        let mut tape = Tape::new(params);
        let mut leaves = Vec::with_capacity(self.inputs.len());
        for x in &self.inputs {
            let out = crate::diffnet::params_internal::forward_cached(params, x, layers);
            leaves.push(tape.input(out.output()));
        }
        let loss = (self.builder)(&mut tape, &leaves)?;
        Ok(tape.scalar(loss))
    }

    /// Batch loss and its exact gradient at `params`.
    pub fn gradient(&self, params: &EncoderParams) -> Result<(f64, Grads)> {
        use crate::diffnet::params_internal::{backprop_cached, forward_cached, CachedForward};
        let layers = self.layers(params);
        let chunk = self.inputs.len().div_ceil(GRAD_CHUNKS).max(1);
        let caches: Vec<CachedForward> = self
            .inputs
            .par_chunks(chunk)
            .flat_map_iter(|c| c.iter().map(|x| forward_cached(params, x, layers)))
            .collect();

        let mut tape = Tape::new(params);
        let leaves: Vec<NodeId> = caches.iter().map(|c| tape.input(c.output())).collect();
        let loss = (self.builder)(&mut tape, &leaves)?;
        let loss_value = tape.scalar(loss);
        let (_, adjoints) = tape.backward_with_inputs(loss, &leaves)?;

        let partials: Vec<Grads> = caches
            .par_chunks(chunk)
            .zip(adjoints.par_chunks(chunk))
            .map(|(cs, ads)| {
                let mut g = Grads::zeros(params);
                for (c, a) in cs.iter().zip(ads) {
                    backprop_cached(params, c, a, layers, &mut g);
                }
                g
            })
            .collect();
        let mut grads = Grads::zeros(params);
        for p in &partials {
            grads.add_assign(p);
        }
        Ok((loss_value, grads))
    }
}

fn goal_embedding(params: &EncoderParams, goal_set: &GoalSet) -> Result<Vec<f64>> {
    let frames: Vec<&crate::sim::Frame> = goal_set.frames.iter().collect();
    let embeds = crate::diffnet::encode_batch(params, &frames)?;
    let dim = params.latent_dim();
    let mut g = vec![0.0; dim];
    for e in &embeds {
        for (o, &x) in g.iter_mut().zip(e) {
            *o += x / embeds.len() as f64;
        }
    }
    Ok(g)
}

/// Subsample up to `count` frame indices without replacement, sorted,
/// together with their normalized temporal positions in the full video.
fn subsample_frames(len: usize, count: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<f64>) {
    let indices: Vec<usize> = if len <= count {
        (0..len).collect()
    } else {
        let mut all: Vec<usize> = (0..len).collect();
        for i in 0..count {
            let j = rng.gen_range(i..all.len());
            all.swap(i, j);
        }
        let mut chosen = all[..count].to_vec();
        chosen.sort_unstable();
        chosen
    };
    let positions = indices
        .iter()
        .map(|&i| {
            if len <= 1 {
                0.0
            } else {
                i as f64 / (len - 1) as f64
            }
        })
        .collect();
    (indices, positions)
}

/// Draw `k` distinct items from `0..n` (k <= n), order randomized.
fn sample_distinct(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..all.len());
        all.swap(i, j);
    }
    all.truncate(k);
    all
}

type BatchSpans = (
    Vec<Vec<f64>>,
    Vec<std::ops::Range<usize>>,
    std::collections::HashMap<TrajRef, usize>,
);

/// Flatten whole trajectories (all frames), deduplicating repeated
/// references within the batch.
fn full_batch(view: &DatasetView, refs: &[TrajRef]) -> BatchSpans {
    let mut unique: Vec<TrajRef> = Vec::new();
    let mut index: std::collections::HashMap<TrajRef, usize> = Default::default();
    for r in refs {
        if !index.contains_key(r) {
            index.insert(*r, unique.len());
            unique.push(*r);
        }
    }
    let mut inputs = Vec::new();
    let mut spans = Vec::with_capacity(unique.len());
    for r in &unique {
        let traj = view.traj(r);
        let start = inputs.len();
        for f in &traj.frames {
            inputs.push(f.to_f64());
        }
        spans.push(start..inputs.len());
    }
    (inputs, spans, index)
}

fn prepare_tcc_batch(
    view: &DatasetView,
    spec: &TrainSpec,
    buckets: Option<&BucketAssignment>,
    rng: &mut ChaCha8Rng,
) -> Result<PreparedBatch> {
    let refs: Vec<TrajRef> = match buckets {
        // A batch is one whole bucket: the loss never mixes buckets.
        Some(b) => b.buckets[rng.gen_range(0..b.buckets.len())].clone(),
        None => {
            let pool = view.pooled_refs();
            if pool.is_empty() {
                return Err(Error::Usage("empty training pool".into()));
            }
            let k = spec.batch_size.min(pool.len());
            sample_distinct(pool.len(), k, rng)
                .into_iter()
                .map(|i| pool[i])
                .collect()
        }
    };
    let mut inputs = Vec::new();
    let mut spans = Vec::with_capacity(refs.len());
    let mut positions = Vec::with_capacity(refs.len());
    for r in &refs {
        let traj = view.traj(r);
        let (indices, pos) = subsample_frames(traj.len(), spec.frames_per_video, rng);
        let start = inputs.len();
        for &i in &indices {
            inputs.push(traj.frames[i].to_f64());
        }
        spans.push(start..inputs.len());
        positions.push(pos);
    }
    // One random alignment index per ordered pair.
    let mut pairs = Vec::new();
    for i in 0..refs.len() {
        for j in 0..refs.len() {
            if i != j {
                pairs.push((i, j, rng.gen_range(0..spans[j].len())));
            }
        }
    }
    let temperature = spec.temperature;
    let builder = move |tape: &mut Tape, leaves: &[NodeId]| -> Result<NodeId> {
        let mut pair_losses = Vec::with_capacity(pairs.len());
        for &(i, j, t) in &pairs {
            pair_losses.push(tcc_pair_loss_on_tape(
                tape,
                &leaves[spans[i].clone()],
                &leaves[spans[j].clone()],
                &positions[j],
                t,
                temperature,
            ));
        }
        Ok(tape.mean_many(&pair_losses))
    };
    Ok(PreparedBatch {
        inputs,
        depth: NetDepth::Trunk,
        builder: Box::new(builder),
    })
}

fn prepare_xprefs_batch(
    view: &DatasetView,
    spec: &TrainSpec,
    preferences: &[PreferenceLabel],
    goal: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<PreparedBatch> {
    if preferences.is_empty() {
        return Err(Error::Usage("no preference labels".into()));
    }
    let batch: Vec<PreferenceLabel> = (0..spec.batch_size)
        .map(|_| preferences[rng.gen_range(0..preferences.len())])
        .collect();
    let refs: Vec<TrajRef> = batch.iter().flat_map(|p| [p.first, p.second]).collect();
    let (inputs, spans, index) = full_batch(view, &refs);
    let goal_values = goal.to_vec();
    let builder = move |tape: &mut Tape, leaves: &[NodeId]| -> Result<NodeId> {
        let goal_node = tape.input(&goal_values);
        let scores: Vec<Vec<NodeId>> = spans
            .iter()
            .map(|s| goal_distance_scores_on_tape(tape, &leaves[s.clone()], goal_node))
            .collect();
        let mut pair_losses = Vec::with_capacity(batch.len());
        for p in &batch {
            pair_losses.push(preference_loss_on_tape(
                tape,
                &scores[index[&p.first]],
                &scores[index[&p.second]],
                p.mu,
            ));
        }
        Ok(tape.mean_many(&pair_losses))
    };
    Ok(PreparedBatch {
        inputs,
        depth: NetDepth::Trunk,
        builder: Box::new(builder),
    })
}

fn prepare_xtriplets_batch(
    view: &DatasetView,
    spec: &TrainSpec,
    triplets: &[TripletLabel],
    rng: &mut ChaCha8Rng,
) -> Result<PreparedBatch> {
    if triplets.is_empty() {
        return Err(Error::Usage("no triplet labels".into()));
    }
    let batch: Vec<TripletLabel> = (0..spec.batch_size)
        .map(|_| triplets[rng.gen_range(0..triplets.len())])
        .collect();
    let refs: Vec<TrajRef> = batch
        .iter()
        .flat_map(|t| [t.anchor, t.positive, t.negative])
        .collect();
    let (inputs, spans, index) = full_batch(view, &refs);
    let builder = move |tape: &mut Tape, leaves: &[NodeId]| -> Result<NodeId> {
        let mut per_triplet = Vec::with_capacity(batch.len());
        for t in &batch {
            per_triplet.push(triplet_loss_on_tape(
                tape,
                &leaves[spans[index[&t.anchor]].clone()],
                &leaves[spans[index[&t.positive]].clone()],
                &leaves[spans[index[&t.negative]].clone()],
            ));
        }
        Ok(tape.mean_many(&per_triplet))
    };
    Ok(PreparedBatch {
        inputs,
        depth: NetDepth::Trunk,
        builder: Box::new(builder),
    })
}

fn prepare_rlhf_batch(
    view: &DatasetView,
    spec: &TrainSpec,
    preferences: &[PreferenceLabel],
    rng: &mut ChaCha8Rng,
) -> Result<PreparedBatch> {
    if preferences.is_empty() {
        return Err(Error::Usage("no preference labels".into()));
    }
    let batch: Vec<PreferenceLabel> = (0..spec.batch_size)
        .map(|_| preferences[rng.gen_range(0..preferences.len())])
        .collect();
    let refs: Vec<TrajRef> = batch.iter().flat_map(|p| [p.first, p.second]).collect();
    let (inputs, spans, index) = full_batch(view, &refs);
    let builder = move |tape: &mut Tape, leaves: &[NodeId]| -> Result<NodeId> {
        let mut pair_losses = Vec::with_capacity(batch.len());
        for p in &batch {
            pair_losses.push(preference_loss_on_tape(
                tape,
                &leaves[spans[index[&p.first]].clone()],
                &leaves[spans[index[&p.second]].clone()],
                p.mu,
            ));
        }
        Ok(tape.mean_many(&pair_losses))
    };
    Ok(PreparedBatch {
        inputs,
        depth: NetDepth::Full,
        builder: Box::new(builder),
    })
}

fn prepare_classifier_batch(
    view: &DatasetView,
    spec: &TrainSpec,
    goal_set: &GoalSet,
    rng: &mut ChaCha8Rng,
) -> Result<PreparedBatch> {
    if goal_set.frames.is_empty() {
        return Err(Error::Usage("empty goal set".into()));
    }
    let pool = view.pooled_refs();
    if pool.is_empty() {
        return Err(Error::Usage("empty training pool".into()));
    }
    let half = (spec.batch_size / 2).max(1);
    let mut inputs = Vec::with_capacity(2 * half);
    let mut targets = Vec::with_capacity(2 * half);
    for _ in 0..half {
        let f = &goal_set.frames[rng.gen_range(0..goal_set.frames.len())];
        inputs.push(f.to_f64());
        targets.push(1.0);
    }
    for _ in 0..half {
        let traj = view.traj(&pool[rng.gen_range(0..pool.len())]);
        inputs.push(traj.frames[rng.gen_range(0..traj.len())].to_f64());
        targets.push(0.0);
    }
    let builder = move |tape: &mut Tape, leaves: &[NodeId]| -> Result<NodeId> {
        let per_frame: Vec<NodeId> = leaves
            .iter()
            .zip(&targets)
            .map(|(&z, &t)| bce_loss_on_tape(tape, z, t))
            .collect();
        Ok(tape.mean_many(&per_frame))
    };
    Ok(PreparedBatch {
        inputs,
        depth: NetDepth::Full,
        builder: Box::new(builder),
    })
}

/// Assemble one training batch for any method, exactly as the trainers do.
/// `params` supplies the goal embedding for the XPrefs methods; other
/// methods ignore it.
pub fn prepare_batch(
    view: &DatasetView,
    spec: &TrainSpec,
    inputs: &TrainInputs,
    params: &EncoderParams,
    rng: &mut ChaCha8Rng,
) -> Result<PreparedBatch> {
    spec.validate()?;
    match spec.method {
        Method::Tcc => prepare_tcc_batch(view, spec, None, rng),
        Method::TccBuckets => {
            let buckets = inputs
                .buckets
                .ok_or_else(|| Error::Usage("bucketed TCC requires a bucket assignment".into()))?;
            prepare_tcc_batch(view, spec, Some(buckets), rng)
        }
        Method::XPrefsStatic | Method::XPrefsDynamic { .. } => {
            let goal_set = inputs
                .goal_set
                .ok_or_else(|| Error::Usage("XPrefs requires a goal set".into()))?;
            let prefs = inputs
                .preferences
                .ok_or_else(|| Error::Usage("XPrefs requires preference labels".into()))?;
            let goal = goal_embedding(params, goal_set)?;
            prepare_xprefs_batch(view, spec, prefs, &goal, rng)
        }
        Method::XTriplets => {
            let triplets = inputs
                .triplets
                .ok_or_else(|| Error::Usage("XTriplets requires triplet labels".into()))?;
            prepare_xtriplets_batch(view, spec, triplets, rng)
        }
        Method::XRlhf => {
            let prefs = inputs
                .preferences
                .ok_or_else(|| Error::Usage("XRlhf requires preference labels".into()))?;
            prepare_rlhf_batch(view, spec, prefs, rng)
        }
        Method::GoalClassifier => {
            let goal_set = inputs
                .goal_set
                .ok_or_else(|| Error::Usage("the classifier requires a goal set".into()))?;
            prepare_classifier_batch(view, spec, goal_set, rng)
        }
    }
}

/// Train an embedding (TCC, bucketed TCC, XPrefs, XTriplets). The method
/// dictates which of `inputs`' fields must be present.
pub fn train_representation(
    view: &DatasetView,
    spec: &TrainSpec,
    inputs: &TrainInputs,
) -> Result<(EncoderParams, LossReport)> {
    spec.validate()?;
    let started = std::time::Instant::now();
    match spec.method {
        Method::XRlhf => {
            return Err(Error::Usage(
                "XRlhf is a reward model; use train_reward_model".into(),
            ))
        }
        Method::GoalClassifier => {
            return Err(Error::Usage(
                "the goal classifier trains via train_goal_classifier".into(),
            ))
        }
        _ => {}
    }

    let mut params = spec.init_embedding(view.input_dim());
    let mut opt = OptimState::new(&params, spec.learning_rate);
    let mut rng = rng::stream(&[spec.seed, rng::tag("replearn/train"), rng::tag(spec.method.name())]);
    let mut losses = Vec::with_capacity(spec.iterations);
    let mut refresh_steps = Vec::new();

    // XPrefs: the static variant freezes the untrained encoder's goal
    // embedding; the dynamic variant recomputes it every refresh period.
    let is_xprefs = matches!(
        spec.method,
        Method::XPrefsStatic | Method::XPrefsDynamic { .. }
    );
    let mut goal: Option<Vec<f64>> = if is_xprefs {
        let goal_set = inputs
            .goal_set
            .ok_or_else(|| Error::Usage("XPrefs requires a goal set".into()))?;
        Some(goal_embedding(&params, goal_set)?)
    } else {
        None
    };

    for iter in 0..spec.iterations {
        if let Method::XPrefsDynamic { refresh_period } = spec.method {
            if iter > 0 && iter % refresh_period == 0 {
                goal = Some(goal_embedding(&params, inputs.goal_set.unwrap())?);
                refresh_steps.push(iter);
            }
        }
        let prepared = match spec.method {
            Method::Tcc => prepare_tcc_batch(view, spec, None, &mut rng)?,
            Method::TccBuckets => {
                let buckets = inputs.buckets.ok_or_else(|| {
                    Error::Usage("bucketed TCC requires a bucket assignment".into())
                })?;
                prepare_tcc_batch(view, spec, Some(buckets), &mut rng)?
            }
            Method::XPrefsStatic | Method::XPrefsDynamic { .. } => {
                let prefs = inputs
                    .preferences
                    .ok_or_else(|| Error::Usage("XPrefs requires preference labels".into()))?;
                prepare_xprefs_batch(view, spec, prefs, goal.as_ref().unwrap(), &mut rng)?
            }
            Method::XTriplets => {
                let triplets = inputs
                    .triplets
                    .ok_or_else(|| Error::Usage("XTriplets requires triplet labels".into()))?;
                prepare_xtriplets_batch(view, spec, triplets, &mut rng)?
            }
            Method::XRlhf | Method::GoalClassifier => unreachable!(),
        };
        let (loss, grads) = prepared.gradient(&params)?;
        adam_step(&mut params, &grads, &mut opt)?;
        losses.push(loss);
    }
    Ok((
        params,
        LossReport {
            losses,
            refresh_steps,
            wall_secs: started.elapsed().as_secs_f64(),
            final_goal: goal,
        },
    ))
}

/// End-to-end preference reward model: a scalar-head network trained with
/// the preference cross-entropy over summed per-frame rewards.
pub fn train_reward_model(
    view: &DatasetView,
    preferences: &[PreferenceLabel],
    spec: &TrainSpec,
) -> Result<(EncoderParams, LossReport)> {
    spec.validate()?;
    if spec.method != Method::XRlhf {
        return Err(Error::Usage(
            "train_reward_model expects the XRlhf method".into(),
        ));
    }
    let started = std::time::Instant::now();
    let mut params = spec.init_scalar(view.input_dim());
    let mut opt = OptimState::new(&params, spec.learning_rate);
    let mut rng = rng::stream(&[spec.seed, rng::tag("replearn/train"), rng::tag("xrlhf")]);
    let mut losses = Vec::with_capacity(spec.iterations);
    for _ in 0..spec.iterations {
        let prepared = prepare_rlhf_batch(view, spec, preferences, &mut rng)?;
        let (loss, grads) = prepared.gradient(&params)?;
        adam_step(&mut params, &grads, &mut opt)?;
        losses.push(loss);
    }
    Ok((
        params,
        LossReport {
            losses,
            refresh_steps: Vec::new(),
            wall_secs: started.elapsed().as_secs_f64(),
            final_goal: None,
        },
    ))
}

/// Binary goal/non-goal classifier: goal-set frames are positives, frames
/// drawn from the dataset are negatives.
pub fn train_goal_classifier(
    view: &DatasetView,
    goal_set: &GoalSet,
    spec: &TrainSpec,
) -> Result<(EncoderParams, LossReport)> {
    spec.validate()?;
    if spec.method != Method::GoalClassifier {
        return Err(Error::Usage(
            "train_goal_classifier expects the GoalClassifier method".into(),
        ));
    }
    let started = std::time::Instant::now();
    let mut params = spec.init_scalar(view.input_dim());
    let mut opt = OptimState::new(&params, spec.learning_rate);
    let mut rng = rng::stream(&[spec.seed, rng::tag("replearn/train"), rng::tag("classifier")]);
    let mut losses = Vec::with_capacity(spec.iterations);
    for _ in 0..spec.iterations {
        let prepared = prepare_classifier_batch(view, spec, goal_set, &mut rng)?;
        let (loss, grads) = prepared.gradient(&params)?;
        adam_step(&mut params, &grads, &mut opt)?;
        losses.push(loss);
    }
    Ok((
        params,
        LossReport {
            losses,
            refresh_steps: Vec::new(),
            wall_secs: started.elapsed().as_secs_f64(),
            final_goal: None,
        },
    ))
}

/// Fraction of preference labels whose predicted ordering (by summed head
/// rewards) matches the label.
pub fn preference_accuracy(
    params: &EncoderParams,
    view: &DatasetView,
    labels: &[PreferenceLabel],
) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Usage("no labels".into()));
    }
    let mut cache: std::collections::HashMap<TrajRef, Vec<f64>> = Default::default();
    let mut correct = 0usize;
    for l in labels {
        for r in [l.first, l.second] {
            if !cache.contains_key(&r) {
                let traj = view.traj(&r);
                let scores: Vec<f64> = traj
                    .frames
                    .iter()
                    .map(|f| crate::diffnet::head_value(params, f))
                    .collect::<Result<Vec<_>>>()?;
                cache.insert(r, scores);
            }
        }
        let p = rlhf_pref_prob(&cache[&l.first], &cache[&l.second]);
        let predicted_first = p > 0.5;
        if predicted_first == (l.mu == (1, 0)) {
            correct += 1;
        }
    }
    Ok(correct as f64 / labels.len() as f64)
}
