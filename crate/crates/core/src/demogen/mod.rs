//! MQME dataset generation: scripted oracle policies, noise-injected
//! degradation, quality-stratified train/test splits, goal-state sets, and
//! the persistent dataset container.

mod oracle;
mod store;

pub use oracle::{oracle_action, DegradedOracle, OraclePolicy, Policy};
pub use store::{load_dataset, save_dataset, DATASET_MAGIC};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::sim::{Action, EmbodimentKind, Env, EnvConfig, Frame, ALL_EMBODIMENTS};

/// An embodiment-tagged episode: per-step frames, ground-truth rewards, and
/// (internally retained, never consumed by learners) the actions taken.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub embodiment: EmbodimentKind,
    pub frames: Vec<Frame>,
    pub gt_rewards: Vec<f64>,
    pub actions: Option<Vec<Action>>,
    pub episode_seed: u64,
    pub epsilon: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Sum of per-step ground-truth rewards.
    pub fn gt_return(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::Usage("gt_return of an empty trajectory".into()));
        }
        Ok(self.gt_rewards.iter().sum())
    }

    /// Per-step mean ground-truth reward; the synthetic labeler's score.
    pub fn per_step_mean(&self) -> Result<f64> {
        Ok(self.gt_return()? / self.len() as f64)
    }

    /// Number of blocks in the goal zone at the final frame.
    pub fn blocks_final(&self, num_blocks: usize) -> usize {
        match self.gt_rewards.last() {
            Some(&r) => (r * num_blocks as f64).round() as usize,
            None => 0,
        }
    }

    pub fn validate(&self, config: &EnvConfig) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Usage("empty trajectory".into()));
        }
        if self.frames.len() != self.gt_rewards.len() {
            return Err(Error::Usage(format!(
                "frame/reward length mismatch: {} vs {}",
                self.frames.len(),
                self.gt_rewards.len()
            )));
        }
        if let Some(actions) = &self.actions {
            if actions.len() != self.frames.len() {
                return Err(Error::Usage("action list length mismatch".into()));
            }
        }
        let max = config.max_steps.get(self.embodiment);
        if self.len() > max {
            return Err(Error::Usage(format!(
                "trajectory length {} exceeds budget {max}",
                self.len()
            )));
        }
        let b = config.num_blocks as f64;
        for (i, &r) in self.gt_rewards.iter().enumerate() {
            let scaled = r * b;
            if !(0.0..=1.0).contains(&r) || (scaled - scaled.round()).abs() > 1e-9 {
                return Err(Error::Usage(format!("reward {r} at step {i} off-lattice")));
            }
        }
        if self.len() < max && *self.gt_rewards.last().unwrap() != 1.0 {
            return Err(Error::Usage(
                "early-terminated trajectory without full success".into(),
            ));
        }
        for f in &self.frames {
            if f.len() != config.frame_len() {
                return Err(Error::Usage("frame size mismatch".into()));
            }
        }
        Ok(())
    }
}

/// Train/test trajectory pair for one embodiment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitPair {
    pub train: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
}

/// How many kept rollouts each (outcome class, split) must contribute, per
/// embodiment. Outcome classes are `0..=num_blocks` blocks in at the end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetQuotas {
    pub train_per_class: usize,
    pub test_per_class: usize,
}

impl Default for DatasetQuotas {
    fn default() -> Self {
        // 4 outcome classes x 50 = 200 train, x 100 = 400 test per embodiment.
        Self {
            train_per_class: 50,
            test_per_class: 100,
        }
    }
}

/// Generation provenance kept alongside the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub master_seed: u64,
    pub noise_schedule: Vec<f64>,
    pub quotas: DatasetQuotas,
}

/// Privileged full-success states rendered as frames.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalSet {
    pub frames: Vec<Frame>,
}

/// The mixed-quality, mixed-embodiment dataset: stratified train/test
/// splits for every embodiment plus the goal set.
#[derive(Debug, Clone, PartialEq)]
pub struct MqmeDataset {
    pub config: EnvConfig,
    pub splits: [SplitPair; 4],
    pub goal_set: GoalSet,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SplitKind {
    Train,
    Test,
}

impl SplitKind {
    pub fn name(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Test => "test",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Ok(match s {
            "train" => SplitKind::Train,
            "test" => SplitKind::Test,
            _ => return Err(Error::Usage(format!("unknown split {s:?}"))),
        })
    }
}

impl MqmeDataset {
    pub fn split(&self, emb: EmbodimentKind, kind: SplitKind) -> &[Trajectory] {
        let pair = &self.splits[emb.index()];
        match kind {
            SplitKind::Train => &pair.train,
            SplitKind::Test => &pair.test,
        }
    }

    /// Full-scan validation of every trajectory plus stratification checks.
    pub fn validate(&self) -> Result<()> {
        for emb in ALL_EMBODIMENTS {
            for kind in [SplitKind::Train, SplitKind::Test] {
                for t in self.split(emb, kind) {
                    if t.embodiment != emb {
                        return Err(Error::Usage("trajectory filed under wrong embodiment".into()));
                    }
                    t.validate(&self.config)?;
                }
            }
        }
        for f in &self.goal_set.frames {
            if f.count_ones(crate::sim::CHANNEL_BLOCKS) != self.config.num_blocks {
                return Err(Error::Usage("goal frame with wrong block count".into()));
            }
        }
        Ok(())
    }

    /// Per-class histogram of `blocks_final` for one split.
    pub fn class_histogram(&self, emb: EmbodimentKind, kind: SplitKind) -> Vec<usize> {
        let mut h = vec![0usize; self.config.num_blocks + 1];
        for t in self.split(emb, kind) {
            h[t.blocks_final(self.config.num_blocks)] += 1;
        }
        h
    }
}

/// Default degradation schedule; spans full success to reliable failure so
/// every outcome class is reachable (checked by the builder).
pub fn default_noise_schedule() -> Vec<f64> {
    vec![0.0, 0.15, 0.3, 0.45, 0.6, 0.8]
}

/// Run a policy from reset to termination, recording per-step frames,
/// rewards, and actions. Deterministic in all arguments.
pub fn rollout(env: &Env, policy: &dyn Policy, episode_seed: u64) -> Result<Trajectory> {
    let mut state = env.reset(episode_seed)?;
    let mut rng = rng::stream(&[
        env.config.seed,
        env.embodiment.kind.index() as u64,
        episode_seed,
        rng::tag("demogen/policy"),
    ]);
    let mut frames = Vec::new();
    let mut rewards = Vec::new();
    let mut actions = Vec::new();
    while !state.terminal {
        let action = policy.act(env, &state, &mut rng)?;
        let out = env.step(&state, action)?;
        frames.push(out.frame);
        rewards.push(out.reward);
        actions.push(action);
        state = out.state;
    }
    Ok(Trajectory {
        embodiment: env.embodiment.kind,
        frames,
        gt_rewards: rewards,
        actions: Some(actions),
        episode_seed,
        epsilon: policy.epsilon(),
    })
}

fn split_bit(kind: SplitKind) -> u64 {
    match kind {
        SplitKind::Train => 0,
        SplitKind::Test => 1,
    }
}

/// Episode seeds are attempt counters shifted around a split bit, so no
/// (embodiment, episode_seed) pair can appear in both splits.
fn episode_seed_for(kind: SplitKind, attempt: u64) -> u64 {
    (attempt << 1) | split_bit(kind)
}

/// Build the stratified MQME dataset by rejection sampling over the noise
/// schedule until every outcome-class quota is met for every embodiment and
/// split.
pub fn build_dataset(
    config: EnvConfig,
    noise_schedule: &[f64],
    quotas: DatasetQuotas,
    master_seed: u64,
) -> Result<MqmeDataset> {
    config.validate()?;
    if noise_schedule.is_empty() {
        return Err(Error::Usage("empty noise schedule".into()));
    }
    for &e in noise_schedule {
        if !(0.0..=1.0).contains(&e) {
            return Err(Error::Usage(format!("epsilon {e} outside [0, 1]")));
        }
    }
    let classes = config.num_blocks + 1;
    let mut splits: [SplitPair; 4] = Default::default();

    for emb in ALL_EMBODIMENTS {
        let env = Env::new(config, emb)?;
        for kind in [SplitKind::Train, SplitKind::Test] {
            let per_class = match kind {
                SplitKind::Train => quotas.train_per_class,
                SplitKind::Test => quotas.test_per_class,
            };
            let total = per_class * classes;
            let budget = total as u64 * 400;
            let mut eps_rng = rng::stream(&[
                master_seed,
                emb.index() as u64,
                split_bit(kind),
                rng::tag("demogen/epsilon"),
            ]);
            let mut kept: Vec<Trajectory> = Vec::with_capacity(total);
            let mut counts = vec![0usize; classes];
            let mut attempt: u64 = 0;
            while kept.len() < total {
                if attempt >= budget {
                    let starved = counts
                        .iter()
                        .enumerate()
                        .filter(|&(_, &c)| c < per_class)
                        .map(|(k, _)| k.to_string())
                        .collect::<Vec<_>>()
                        .join(", ");
                    return Err(Error::Generation(format!(
                        "quota unreachable for {} {} after {budget} attempts; starved class(es): {starved}",
                        emb.name(),
                        kind.name()
                    )));
                }
                let epsilon = noise_schedule[eps_rng.gen_range(0..noise_schedule.len())];
                let seed = episode_seed_for(kind, attempt);
                attempt += 1;
                let policy = DegradedOracle::new(epsilon)?;
                let traj = rollout(&env, &policy, seed)?;
                let class = traj.blocks_final(config.num_blocks);
                if counts[class] < per_class {
                    counts[class] += 1;
                    kept.push(traj);
                }
            }
            match kind {
                SplitKind::Train => splits[emb.index()].train = kept,
                SplitKind::Test => splits[emb.index()].test = kept,
            }
        }
    }

    let goal_set = extract_goal_set(
        &config,
        16,
        rng::mix(&[master_seed, rng::tag("demogen/goalset")]),
    )?;
    let dataset = MqmeDataset {
        config,
        splits,
        goal_set,
        provenance: Provenance {
            master_seed,
            noise_schedule: noise_schedule.to_vec(),
            quotas,
        },
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Build a success-only dataset (pure oracle rollouts, train split only).
pub fn build_success_dataset(
    config: EnvConfig,
    train_per_embodiment: usize,
    master_seed: u64,
) -> Result<MqmeDataset> {
    config.validate()?;
    let mut splits: [SplitPair; 4] = Default::default();
    for emb in ALL_EMBODIMENTS {
        let env = Env::new(config, emb)?;
        let mut kept = Vec::with_capacity(train_per_embodiment);
        for attempt in 0..train_per_embodiment as u64 {
            let seed = rng::mix(&[master_seed, emb.index() as u64, attempt, rng::tag("demogen/success")]);
            let traj = rollout(&env, &OraclePolicy, seed)?;
            if traj.blocks_final(config.num_blocks) != config.num_blocks {
                return Err(Error::Generation(format!(
                    "oracle failed on {} episode seed {seed}",
                    emb.name()
                )));
            }
            kept.push(traj);
        }
        splits[emb.index()].train = kept;
    }
    let goal_set = extract_goal_set(
        &config,
        16,
        rng::mix(&[master_seed, rng::tag("demogen/goalset")]),
    )?;
    Ok(MqmeDataset {
        config,
        splits,
        goal_set,
        provenance: Provenance {
            master_seed,
            noise_schedule: vec![0.0],
            quotas: DatasetQuotas {
                train_per_class: 0,
                test_per_class: 0,
            },
        },
    })
}

/// Synthesize `n` distinct full-success states (all blocks inside the goal
/// zone, varied agent and block placements) rendered as frames. Embodiment
/// appearance cycles over all four kinds so the set is not tied to any one
/// agent.
pub fn extract_goal_set(config: &EnvConfig, n: usize, seed: u64) -> Result<GoalSet> {
    config.validate()?;
    if n < 1 {
        return Err(Error::Usage("goal set size must be >= 1".into()));
    }
    let mut rng = rng::stream(&[seed, rng::tag("demogen/goal-states")]);
    let mut frames = Vec::with_capacity(n);
    let mut seen = std::collections::HashSet::new();
    let budget = 10_000usize.max(n * 100);
    let mut attempts = 0;
    while frames.len() < n {
        if attempts >= budget {
            return Err(Error::Generation(format!(
                "requested {n} goal frames but only {} distinct full-success states found",
                frames.len()
            )));
        }
        attempts += 1;
        let emb = ALL_EMBODIMENTS[frames.len() % 4];
        let env = Env::new(*config, emb)?;
        let mut cols: Vec<usize> = (0..config.width).collect();
        for i in 0..config.num_blocks {
            let j = rng.gen_range(i..cols.len());
            cols.swap(i, j);
        }
        let block_positions: Vec<(usize, usize)> = cols[..config.num_blocks]
            .iter()
            .map(|&c| (rng.gen_range(0..config.goal_depth), c))
            .collect();
        let agent_row = rng.gen_range(config.goal_depth..config.height);
        let agent_col = rng.gen_range(0..=config.width - emb.width());
        let state = crate::sim::EnvState {
            agent_row,
            agent_col,
            block_positions,
            gripped_block: None,
            step_count: 0,
            terminal: false,
        };
        debug_assert!(env.all_in_zone(&state));
        let frame = env.render_frame(&state);
        if seen.insert(frame.clone()) {
            frames.push(frame);
        }
    }
    Ok(GoalSet { frames })
}

#[cfg(test)]
mod tests;
