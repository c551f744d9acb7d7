//! Scripted demonstration policies.
//!
//! The oracle is a greedy scripted controller, complete on any valid
//! configuration from a fresh reset (verified exhaustively in tests):
//! sticks descend to the clear bottom row, align the footprint beneath as
//! many out-of-zone blocks as possible, and push straight up; the gripper
//! moves beneath the nearest out-of-zone block, grabs it, carries it
//! straight up its column, and releases it into the zone. Degradation wraps
//! the oracle with an epsilon-random action mix.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sim::{legal_actions, Action, Env, EnvState};

/// A demonstration policy. The rollout owns the randomness stream; scripted
/// policies ignore it.
pub trait Policy: Sync {
    fn act(&self, env: &Env, state: &EnvState, rng: &mut ChaCha8Rng) -> Result<Action>;

    /// Noise level, recorded as trajectory provenance.
    fn epsilon(&self) -> f64 {
        0.0
    }
}

/// The scripted greedy oracle.
pub struct OraclePolicy;

impl Policy for OraclePolicy {
    fn act(&self, env: &Env, state: &EnvState, _rng: &mut ChaCha8Rng) -> Result<Action> {
        oracle_action(env, state)
    }
}

/// Oracle degraded by taking a uniformly random legal action with
/// probability `epsilon`.
pub struct DegradedOracle {
    pub epsilon: f64,
}

impl DegradedOracle {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Usage(format!("epsilon {epsilon} outside [0, 1]")));
        }
        Ok(Self { epsilon })
    }
}

impl Policy for DegradedOracle {
    fn act(&self, env: &Env, state: &EnvState, rng: &mut ChaCha8Rng) -> Result<Action> {
        // Always consume one uniform draw so the stream advances identically
        // regardless of the branch taken.
        let flip: f64 = rng.gen();
        if flip < self.epsilon {
            let actions = legal_actions(&env.embodiment);
            Ok(actions[rng.gen_range(0..actions.len())])
        } else {
            oracle_action(env, state)
        }
    }

    fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Greedy scripted oracle action for any non-terminal state.
pub fn oracle_action(env: &Env, state: &EnvState) -> Result<Action> {
    if state.terminal {
        return Err(Error::Usage("oracle_action on a terminal state".into()));
    }
    let out_blocks: Vec<(usize, usize)> = state
        .block_positions
        .iter()
        .copied()
        .filter(|&(r, _)| r >= env.config.goal_depth)
        .collect();
    if out_blocks.is_empty() {
        // All blocks already in the zone; unreachable pre-terminal, but a
        // legal answer keeps degraded rollouts well-defined.
        return Ok(Action::Up);
    }
    if env.embodiment.has_grip {
        Ok(gripper_action(env, state, &out_blocks))
    } else {
        Ok(stick_action(env, state, &out_blocks))
    }
}

fn block_free(state: &EnvState, row: usize, col: usize) -> bool {
    state.block_at(row, col).is_none()
}

/// Lateral/downward destination check (these moves never displace blocks).
fn move_free(env: &Env, state: &EnvState, dr: isize, dc: isize) -> bool {
    let w = env.embodiment.width;
    let nr = state.agent_row as isize + dr;
    let nc = state.agent_col as isize + dc;
    if nr < 0 || nr as usize >= env.config.height || nc < 0 || nc as usize + w > env.config.width {
        return false;
    }
    (nc as usize..nc as usize + w).all(|c| {
        match state.block_at(nr as usize, c) {
            Some(b) => state.gripped_block == Some(b),
            None => true,
        }
    })
}

fn stick_action(env: &Env, state: &EnvState, out_blocks: &[(usize, usize)]) -> Action {
    let w = env.embodiment.width;
    let footprint = state.agent_col..state.agent_col + w;

    // Push whenever the footprint already covers an out-of-zone block above.
    let covered_above = out_blocks
        .iter()
        .any(|&(r, c)| footprint.contains(&c) && r < state.agent_row);
    if covered_above {
        return Action::Up;
    }

    // Best alignment: cover as many out-of-zone blocks as possible, then
    // nearest, then leftmost.
    let mut best = (0usize, usize::MAX, 0usize);
    for c in 0..=env.config.width - w {
        let count = out_blocks
            .iter()
            .filter(|&&(_, bc)| (c..c + w).contains(&bc))
            .count();
        let dist = c.abs_diff(state.agent_col);
        if count > best.0 || (count == best.0 && dist < best.1) {
            best = (count, dist, c);
        }
    }
    let target_col = best.2;

    // Navigate via the always-clear bottom row.
    if state.agent_row < env.config.height - 1 && move_free(env, state, 1, 0) {
        return Action::Down;
    }
    if state.agent_col != target_col {
        let dc: isize = if target_col > state.agent_col { 1 } else { -1 };
        let lateral = if dc == 1 { Action::Right } else { Action::Left };
        if move_free(env, state, 0, dc) {
            return lateral;
        }
        // Blocked lateral path (degraded rollouts only): step around.
        if move_free(env, state, 1, 0) {
            return Action::Down;
        }
        return Action::Up;
    }
    Action::Up
}

fn gripper_action(env: &Env, state: &EnvState, out_blocks: &[(usize, usize)]) -> Action {
    let goal_depth = env.config.goal_depth;
    if state.gripped_block.is_some() {
        if state.agent_row > goal_depth {
            // Carry upward; the cell above is pushable or free on clean
            // runs, otherwise dodge sideways.
            let above = (state.agent_row - 1, state.agent_col);
            let pushable = match state.block_at(above.0, above.1) {
                None => true,
                Some(_) => above.0 > 0 && block_free(state, above.0 - 1, above.1),
            };
            if pushable {
                return Action::Up;
            }
        } else {
            // At the zone boundary: release into the cell above.
            if state.agent_row > 0 && block_free(state, state.agent_row - 1, state.agent_col) {
                return Action::ToggleGrip;
            }
        }
        return dodge(env, state);
    }

    // Nearest out-of-zone block by column distance, then row, then column.
    let target = *out_blocks
        .iter()
        .min_by_key(|&&(r, c)| (c.abs_diff(state.agent_col), r, c))
        .unwrap();
    let below = (target.0 + 1, target.1);

    if (state.agent_row, state.agent_col) == below {
        return Action::ToggleGrip;
    }
    if state.agent_col == target.1 && state.agent_row > below.0 {
        return Action::Up;
    }
    if state.agent_row < env.config.height - 1 && move_free(env, state, 1, 0) {
        return Action::Down;
    }
    if state.agent_col != target.1 {
        let dc: isize = if target.1 > state.agent_col { 1 } else { -1 };
        if move_free(env, state, 0, dc) {
            return if dc == 1 { Action::Right } else { Action::Left };
        }
    }
    dodge(env, state)
}

/// Last-resort move selection for jammed degraded states; never needed on
/// clean oracle rollouts.
fn dodge(env: &Env, state: &EnvState) -> Action {
    for (action, dr, dc) in [
        (Action::Right, 0isize, 1isize),
        (Action::Left, 0, -1),
        (Action::Down, 1, 0),
    ] {
        if move_free(env, state, dr, dc) {
            return action;
        }
    }
    Action::Up
}
