use super::*;
use crate::sim::{EnvState, CHANNEL_BLOCKS};

fn env(kind: EmbodimentKind) -> Env {
    Env::new(EnvConfig::default(), kind).unwrap()
}

/// Run the oracle from an arbitrary (fresh-style) state to termination,
/// returning (steps, blocks_final).
fn run_oracle_from(env: &Env, start: EnvState) -> (usize, usize) {
    let mut rng = rng::stream(&[0]);
    let mut state = start;
    let mut steps = 0;
    while !state.terminal {
        let a = OraclePolicy.act(env, &state, &mut rng).unwrap();
        state = env.step(&state, a).unwrap().state;
        steps += 1;
    }
    let blocks_in = state
        .block_positions
        .iter()
        .filter(|&&(r, _)| r < env.config.goal_depth)
        .count();
    (steps, blocks_in)
}

fn all_column_sets(width: usize, b: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut combo = (0..b).collect::<Vec<usize>>();
    loop {
        out.push(combo.clone());
        let mut i = b;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if combo[i] < width - (b - i) {
                combo[i] += 1;
                for j in i + 1..b {
                    combo[j] = combo[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// The oracle completes the task from every possible fresh layout, within
/// the step budget, for every embodiment. This enumerates the full reset
/// support: all block column sets, all block row combinations, all agent
/// start columns.
#[test]
fn oracle_complete_on_every_fresh_layout() {
    let config = EnvConfig::default();
    let row_lo = config.goal_depth.max((config.height + 1) / 2);
    let row_hi = config.height - 2;
    let rows: Vec<usize> = (row_lo..=row_hi).collect();
    for kind in ALL_EMBODIMENTS {
        let env = Env::new(config, kind).unwrap();
        let mut worst = 0usize;
        for cols in all_column_sets(config.width, config.num_blocks) {
            for r0 in &rows {
                for r1 in &rows {
                    for r2 in &rows {
                        let blocks = vec![(*r0, cols[0]), (*r1, cols[1]), (*r2, cols[2])];
                        for agent_col in 0..=config.width - kind.width() {
                            let start = EnvState {
                                agent_row: config.height - 1,
                                agent_col,
                                block_positions: blocks.clone(),
                                gripped_block: None,
                                step_count: 0,
                                terminal: false,
                            };
                            let (steps, blocks_in) = run_oracle_from(&env, start);
                            assert_eq!(
                                blocks_in, config.num_blocks,
                                "{} failed from cols {cols:?} rows {:?} agent {agent_col}",
                                kind.name(),
                                (r0, r1, r2)
                            );
                            assert!(steps < env.embodiment.max_steps || blocks_in == 3);
                            worst = worst.max(steps);
                        }
                    }
                }
            }
        }
        assert!(
            worst < env.embodiment.max_steps,
            "{}: worst case {worst} steps reaches the budget",
            kind.name()
        );
    }
}

#[test]
fn oracle_pushes_when_aligned_under_sole_block() {
    let e = env(EmbodimentKind::ShortStick);
    let state = EnvState {
        agent_row: 6,
        agent_col: 4,
        block_positions: vec![(5, 4), (0, 0), (1, 8)],
        gripped_block: None,
        step_count: 0,
        terminal: false,
    };
    assert_eq!(oracle_action(&e, &state).unwrap(), Action::Up);
}

#[test]
fn oracle_rollouts_always_succeed() {
    for kind in ALL_EMBODIMENTS {
        let e = env(kind);
        for seed in 0..150 {
            let t = rollout(&e, &OraclePolicy, seed).unwrap();
            assert_eq!(t.blocks_final(3), 3, "{} seed {seed}", kind.name());
            assert_eq!(*t.gt_rewards.last().unwrap(), 1.0);
            assert!(t.len() < e.embodiment.max_steps);
        }
    }
}

#[test]
fn longstick_finishes_faster_than_mediumstick_on_adjacent_layout() {
    // Three adjacent columns: one pass for the long stick, two for medium.
    let blocks = vec![(6, 3), (6, 4), (5, 5)];
    let mut lengths = Vec::new();
    for kind in [EmbodimentKind::LongStick, EmbodimentKind::MediumStick] {
        let e = env(kind);
        let start = EnvState {
            agent_row: 8,
            agent_col: 0,
            block_positions: blocks.clone(),
            gripped_block: None,
            step_count: 0,
            terminal: false,
        };
        lengths.push(run_oracle_from(&e, start).0);
    }
    assert!(
        lengths[0] < lengths[1],
        "longstick {} vs mediumstick {}",
        lengths[0],
        lengths[1]
    );
}

#[test]
fn oracle_action_rejects_terminal_state() {
    let e = env(EmbodimentKind::ShortStick);
    let mut s = e.reset(0).unwrap();
    s.terminal = true;
    assert!(matches!(oracle_action(&e, &s), Err(Error::Usage(_))));
}

#[test]
fn degrade_zero_matches_oracle_exactly() {
    for kind in ALL_EMBODIMENTS {
        let e = env(kind);
        let a = rollout(&e, &OraclePolicy, 9).unwrap();
        let b = rollout(&e, &DegradedOracle::new(0.0).unwrap(), 9).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.gt_rewards, b.gt_rewards);
        assert_eq!(a.actions, b.actions);
    }
}

#[test]
fn degrade_rejects_bad_epsilon() {
    assert!(matches!(DegradedOracle::new(1.5), Err(Error::Usage(_))));
    assert!(matches!(DegradedOracle::new(-0.1), Err(Error::Usage(_))));
}

#[test]
fn degrade_one_draws_uniform_actions() {
    // Chi-square over 10^4 draws from a fixed state; df = 3, the 0.001
    // critical value is 16.27 (deterministic seed, so no flake risk).
    let e = env(EmbodimentKind::ShortStick);
    let s = e.reset(0).unwrap();
    let policy = DegradedOracle::new(1.0).unwrap();
    let mut rng = rng::stream(&[rng::tag("test/chi2")]);
    let mut counts = [0usize; 4];
    let n = 10_000;
    for _ in 0..n {
        let a = policy.act(&e, &s, &mut rng).unwrap();
        counts[a.index()] += 1;
    }
    let expected = n as f64 / 4.0;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    assert!(chi2 < 16.27, "chi2 = {chi2}, counts {counts:?}");
}

#[test]
fn degradation_is_monotone_in_epsilon() {
    let e = env(EmbodimentKind::MediumStick);
    let mut means = Vec::new();
    for &eps in &[0.0, 0.25, 0.5, 0.75] {
        let policy = DegradedOracle::new(eps).unwrap();
        let total: usize = (0..100)
            .map(|seed| rollout(&e, &policy, seed).unwrap().blocks_final(3))
            .sum();
        means.push(total as f64 / 100.0);
    }
    for w in means.windows(2) {
        assert!(w[0] >= w[1], "means not non-increasing: {means:?}");
    }
}

#[test]
fn rollout_is_deterministic_and_nonempty() {
    let e = env(EmbodimentKind::Gripper);
    let policy = DegradedOracle::new(0.4).unwrap();
    let a = rollout(&e, &policy, 77).unwrap();
    let b = rollout(&e, &policy, 77).unwrap();
    assert_eq!(a, b);
    assert!(a.len() >= 1);
}

#[test]
fn gt_return_and_per_step_mean() {
    let e = env(EmbodimentKind::ShortStick);
    let mut t = rollout(&e, &OraclePolicy, 1).unwrap();
    t.gt_rewards = vec![0.0, 1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0];
    t.frames.truncate(4);
    t.actions = None;
    assert!((t.gt_return().unwrap() - 4.0 / 3.0).abs() < 1e-15);
    assert!((t.per_step_mean().unwrap() - 1.0 / 3.0).abs() < 1e-15);

    let empty = Trajectory {
        embodiment: EmbodimentKind::ShortStick,
        frames: vec![],
        gt_rewards: vec![],
        actions: None,
        episode_seed: 0,
        epsilon: 0.0,
    };
    assert!(matches!(empty.gt_return(), Err(Error::Usage(_))));
}

fn small_quotas() -> DatasetQuotas {
    DatasetQuotas {
        train_per_class: 3,
        test_per_class: 2,
    }
}

#[test]
fn build_dataset_stratifies_exactly() {
    let d = build_dataset(EnvConfig::default(), &default_noise_schedule(), small_quotas(), 5).unwrap();
    for emb in ALL_EMBODIMENTS {
        assert_eq!(d.class_histogram(emb, SplitKind::Train), vec![3, 3, 3, 3]);
        assert_eq!(d.class_histogram(emb, SplitKind::Test), vec![2, 2, 2, 2]);
    }
    d.validate().unwrap();
}

#[test]
fn build_dataset_is_reproducible() {
    let a = build_dataset(EnvConfig::default(), &default_noise_schedule(), small_quotas(), 5).unwrap();
    let b = build_dataset(EnvConfig::default(), &default_noise_schedule(), small_quotas(), 5).unwrap();
    assert_eq!(a, b);
}

#[test]
fn splits_use_disjoint_episode_seeds() {
    let d = build_dataset(EnvConfig::default(), &default_noise_schedule(), small_quotas(), 5).unwrap();
    for emb in ALL_EMBODIMENTS {
        let train: std::collections::HashSet<u64> = d
            .split(emb, SplitKind::Train)
            .iter()
            .map(|t| t.episode_seed)
            .collect();
        for t in d.split(emb, SplitKind::Test) {
            assert!(!train.contains(&t.episode_seed));
        }
    }
}

#[test]
fn goal_set_frames_are_distinct_successes() {
    let config = EnvConfig::default();
    let gs = extract_goal_set(&config, 16, 3).unwrap();
    assert_eq!(gs.frames.len(), 16);
    let distinct: std::collections::HashSet<_> = gs.frames.iter().collect();
    assert_eq!(distinct.len(), 16);
    for f in &gs.frames {
        // Every block bit sits inside the goal zone.
        for r in config.goal_depth..config.height {
            for c in 0..config.width {
                assert!(!f.get(CHANNEL_BLOCKS, r, c));
            }
        }
        assert_eq!(f.count_ones(CHANNEL_BLOCKS), config.num_blocks);
    }
    assert_eq!(extract_goal_set(&config, 1, 3).unwrap().frames.len(), 1);
    assert_eq!(extract_goal_set(&config, 16, 3).unwrap(), gs);
}

#[test]
fn dataset_round_trip_is_byte_identical() {
    let d = build_dataset(EnvConfig::default(), &default_noise_schedule(), small_quotas(), 7).unwrap();
    let bytes = store::encode_for_tests(&d);
    let back = store::decode_for_tests(&bytes).unwrap();
    assert_eq!(d, back);
    assert_eq!(bytes, store::encode_for_tests(&back));
}

#[test]
fn corrupted_body_fails_checksum_with_offset() {
    let d = build_dataset(EnvConfig::default(), &default_noise_schedule(), small_quotas(), 7).unwrap();
    let mut bytes = store::encode_for_tests(&d);
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    match store::decode_for_tests(&bytes) {
        Err(Error::Format { offset, reason }) => {
            assert!(reason.contains("checksum"), "reason: {reason}");
            assert!(offset > 0);
        }
        other => panic!("expected checksum failure, got {other:?}"),
    }
}

#[test]
fn bad_magic_is_a_version_error() {
    let d = build_dataset(EnvConfig::default(), &default_noise_schedule(), small_quotas(), 7).unwrap();
    let mut bytes = store::encode_for_tests(&d);
    bytes[0] = b'Y';
    match store::decode_for_tests(&bytes) {
        Err(Error::Format { offset, reason }) => {
            assert_eq!(offset, 0);
            assert!(reason.contains("magic"));
        }
        other => panic!("expected magic failure, got {other:?}"),
    }
}

#[test]
fn success_dataset_is_all_successes() {
    let d = build_success_dataset(EnvConfig::default(), 8, 11).unwrap();
    for emb in ALL_EMBODIMENTS {
        let train = d.split(emb, SplitKind::Train);
        assert_eq!(train.len(), 8);
        for t in train {
            assert_eq!(t.blocks_final(3), 3);
        }
        assert!(d.split(emb, SplitKind::Test).is_empty());
    }
}
