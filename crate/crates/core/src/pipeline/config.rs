//! Experiment configuration: every stage's parameters in one tree, with
//! desk-scale defaults, the paper-scale preset, and a canonical hash that
//! stamps every artifact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::replearn::{Method, TrainSpec};
use crate::rl::RlSpec;
use crate::rng;
use crate::sim::{EmbodimentKind, EnvConfig, ALL_EMBODIMENTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub noise_schedule: Vec<f64>,
    pub success_train_per_embodiment: usize,
    pub goal_set_size: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train_per_class: 50,
            test_per_class: 100,
            noise_schedule: crate::demogen::default_noise_schedule(),
            success_train_per_embodiment: 200,
            goal_set_size: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Roles {
    pub held_out: EmbodimentKind,
}

impl Default for Roles {
    fn default() -> Self {
        Self {
            held_out: EmbodimentKind::MediumStick,
        }
    }
}

impl Roles {
    pub fn training_embodiments(&self) -> Vec<EmbodimentKind> {
        ALL_EMBODIMENTS
            .into_iter()
            .filter(|&e| e != self.held_out)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeedbackConfig {
    pub preferences: usize,
    pub triplets: usize,
    pub num_buckets: usize,
    pub bucket_size: Option<usize>,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self {
            preferences: 5000,
            triplets: 38_400,
            num_buckets: 18,
            bucket_size: Some(32),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub tcc_iterations: usize,
    pub buckets_iterations: usize,
    pub xrlhf_iterations: usize,
    pub xprefs_iterations: usize,
    pub xtriplets_iterations: usize,
    pub classifier_iterations: usize,
    pub refresh_period: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    pub frames_per_video: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tcc_iterations: 2000,
            buckets_iterations: 2000,
            xrlhf_iterations: 1500,
            xprefs_iterations: 2500,
            xtriplets_iterations: 1200,
            classifier_iterations: 1000,
            refresh_period: 1000,
            learning_rate: 1e-3,
            temperature: 0.1,
            frames_per_video: 20,
            batch_size: 32,
            hidden: vec![128, 128],
            latent_dim: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RlConfig {
    pub total_steps: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub discount: f64,
    pub learning_rate: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub optimistic_init: f64,
    pub exploring_start_prob: f64,
    pub reverse_replay: bool,
    pub replay_sweep_every: usize,
    pub seeds: usize,
    pub layout_pool: usize,
    pub key_budget: usize,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            total_steps: 100_000,
            eval_every: 5_000,
            eval_episodes: 50,
            discount: 0.99,
            learning_rate: 1.0,
            eps_start: 1.0,
            eps_end: 0.05,
            optimistic_init: 0.0,
            exploring_start_prob: 0.5,
            reverse_replay: true,
            replay_sweep_every: 500,
            seeds: 5,
            layout_pool: 1,
            key_budget: 4_000_000,
        }
    }
}

impl RlConfig {
    pub fn to_spec(&self) -> RlSpec {
        RlSpec {
            total_steps: self.total_steps,
            eval_every: self.eval_every,
            eval_episodes: self.eval_episodes,
            discount: self.discount,
            learning_rate: self.learning_rate,
            eps_start: self.eps_start,
            eps_end: self.eps_end,
            optimistic_init: self.optimistic_init,
            exploring_start_prob: self.exploring_start_prob,
            reverse_replay: self.reverse_replay,
            replay_sweep_every: self.replay_sweep_every,
            layout_pool: self.layout_pool,
            key_budget: self.key_budget,
        }
    }
}

/// The full experiment tree.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub data: DataConfig,
    pub roles: Roles,
    pub feedback: FeedbackConfig,
    pub train: TrainConfig,
    pub rl: RlConfig,
    pub master_seed: u64,
}

impl ExperimentConfig {
    /// Paper-scale preset: the published hyperparameters where they differ
    /// from the desk defaults (learning rate 1e-5, 250k RL steps, 4000
    /// triplet iterations).
    pub fn paper_scale(mut self) -> Self {
        self.train.learning_rate = 1e-5;
        self.train.xtriplets_iterations = 4000;
        self.rl.total_steps = 250_000;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        if self.roles.training_embodiments().len() != 3 {
            return Err(Error::Config("exactly one held-out embodiment".into()));
        }
        if self.rl.seeds == 0 {
            return Err(Error::Config("rl.seeds must be >= 1".into()));
        }
        Ok(())
    }

    /// Training spec for one method under this configuration.
    pub fn train_spec(&self, method: Method) -> TrainSpec {
        let iterations = match method {
            Method::Tcc => self.train.tcc_iterations,
            Method::TccBuckets => self.train.buckets_iterations,
            Method::XRlhf => self.train.xrlhf_iterations,
            Method::XPrefsStatic | Method::XPrefsDynamic { .. } => self.train.xprefs_iterations,
            Method::XTriplets => self.train.xtriplets_iterations,
            Method::GoalClassifier => self.train.classifier_iterations,
        };
        TrainSpec {
            method,
            iterations,
            batch_size: self.train.batch_size,
            frames_per_video: self.train.frames_per_video,
            temperature: self.train.temperature,
            learning_rate: self.train.learning_rate,
            hidden: self.train.hidden.clone(),
            latent_dim: self.train.latent_dim,
            seed: rng::mix(&[self.master_seed, rng::tag(method.name()), rng::tag("train-seed")]),
        }
    }

    /// Canonical byte encoding (stable field order) hashed into the
    /// provenance stamp carried by every artifact.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut w = crate::bytesio::ByteWriter::new();
        w.put_u64(self.env.width as u64);
        w.put_u64(self.env.height as u64);
        w.put_u64(self.env.goal_depth as u64);
        w.put_u64(self.env.num_blocks as u64);
        w.put_u64(self.env.seed);
        for kind in ALL_EMBODIMENTS {
            w.put_u64(self.env.max_steps.get(kind) as u64);
        }
        w.put_u64(self.data.train_per_class as u64);
        w.put_u64(self.data.test_per_class as u64);
        w.put_u64(self.data.noise_schedule.len() as u64);
        for &e in &self.data.noise_schedule {
            w.put_f64(e);
        }
        w.put_u64(self.data.success_train_per_embodiment as u64);
        w.put_u64(self.data.goal_set_size as u64);
        w.put_u8(self.roles.held_out.index() as u8);
        w.put_u64(self.feedback.preferences as u64);
        w.put_u64(self.feedback.triplets as u64);
        w.put_u64(self.feedback.num_buckets as u64);
        w.put_u64(self.feedback.bucket_size.map(|s| s as u64 + 1).unwrap_or(0));
        for it in [
            self.train.tcc_iterations,
            self.train.buckets_iterations,
            self.train.xrlhf_iterations,
            self.train.xprefs_iterations,
            self.train.xtriplets_iterations,
            self.train.classifier_iterations,
            self.train.refresh_period,
            self.train.frames_per_video,
            self.train.batch_size,
            self.train.latent_dim,
        ] {
            w.put_u64(it as u64);
        }
        w.put_f64(self.train.learning_rate);
        w.put_f64(self.train.temperature);
        w.put_u64(self.train.hidden.len() as u64);
        for &h in &self.train.hidden {
            w.put_u64(h as u64);
        }
        for it in [
            self.rl.total_steps,
            self.rl.eval_every,
            self.rl.eval_episodes,
            self.rl.seeds,
            self.rl.layout_pool,
            self.rl.key_budget,
        ] {
            w.put_u64(it as u64);
        }
        w.put_f64(self.rl.discount);
        w.put_f64(self.rl.learning_rate);
        w.put_f64(self.rl.eps_start);
        w.put_f64(self.rl.eps_end);
        w.put_f64(self.rl.optimistic_init);
        w.put_f64(self.rl.exploring_start_prob);
        w.put_u8(u8::from(self.rl.reverse_replay));
        w.put_u64(self.rl.replay_sweep_every as u64);
        w.put_u64(self.master_seed);
        w.into_bytes()
    }

    pub fn config_hash(&self) -> u64 {
        let bytes = self.canonical_bytes();
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &b in &bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100_0000_01b3);
        }
        h
    }
}

/// The experiment pipelines reproduced by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PipelineMethod {
    GtRl,
    XirlSuccess,
    XirlMixed,
    XirlBuckets,
    XRlhf,
    XPrefsStatic,
    XPrefsDynamic,
    XTriplets,
    GoalClassifier,
}

/// The reward-learning methods (everything except the ground-truth RL
/// oracle), in report order.
pub const REWARD_METHODS: [PipelineMethod; 6] = [
    PipelineMethod::XirlSuccess,
    PipelineMethod::XirlMixed,
    PipelineMethod::GoalClassifier,
    PipelineMethod::XRlhf,
    PipelineMethod::XTriplets,
    PipelineMethod::XirlBuckets,
];

/// The policy-evaluation legend set.
pub const RL_METHODS: [PipelineMethod; 7] = [
    PipelineMethod::GtRl,
    PipelineMethod::XirlSuccess,
    PipelineMethod::XirlMixed,
    PipelineMethod::GoalClassifier,
    PipelineMethod::XRlhf,
    PipelineMethod::XTriplets,
    PipelineMethod::XirlBuckets,
];

impl PipelineMethod {
    pub fn name(self) -> &'static str {
        match self {
            PipelineMethod::GtRl => "gt-rl",
            PipelineMethod::XirlSuccess => "xirl-success",
            PipelineMethod::XirlMixed => "xirl-mixed",
            PipelineMethod::XirlBuckets => "xirl-buckets",
            PipelineMethod::XRlhf => "xrlhf",
            PipelineMethod::XPrefsStatic => "xprefs-static",
            PipelineMethod::XPrefsDynamic => "xprefs-dynamic",
            PipelineMethod::XTriplets => "xtriplets",
            PipelineMethod::GoalClassifier => "goal-classifier",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Ok(match s {
            "gt-rl" => PipelineMethod::GtRl,
            "xirl-success" => PipelineMethod::XirlSuccess,
            "xirl-mixed" => PipelineMethod::XirlMixed,
            "xirl-buckets" => PipelineMethod::XirlBuckets,
            "xrlhf" => PipelineMethod::XRlhf,
            "xprefs-static" => PipelineMethod::XPrefsStatic,
            "xprefs-dynamic" => PipelineMethod::XPrefsDynamic,
            "xtriplets" => PipelineMethod::XTriplets,
            "goal-classifier" => PipelineMethod::GoalClassifier,
            _ => return Err(Error::Usage(format!("unknown method {s:?}"))),
        })
    }

    /// The representation/reward objective behind this pipeline, if any.
    pub fn train_method(self, refresh_period: usize) -> Option<Method> {
        match self {
            PipelineMethod::GtRl => None,
            PipelineMethod::XirlSuccess | PipelineMethod::XirlMixed => Some(Method::Tcc),
            PipelineMethod::XirlBuckets => Some(Method::TccBuckets),
            PipelineMethod::XRlhf => Some(Method::XRlhf),
            PipelineMethod::XPrefsStatic => Some(Method::XPrefsStatic),
            PipelineMethod::XPrefsDynamic => Some(Method::XPrefsDynamic { refresh_period }),
            PipelineMethod::XTriplets => Some(Method::XTriplets),
            PipelineMethod::GoalClassifier => Some(Method::GoalClassifier),
        }
    }
}
