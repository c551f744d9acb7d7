use mqme_core::demogen::*;
use mqme_core::eval::*;
use mqme_core::feedback::*;
use mqme_core::replearn::*;
use mqme_core::reward::*;
use mqme_core::sim::*;

fn main() {
    let cfg = EnvConfig::default();
    let d = build_dataset(cfg, &default_noise_schedule(), DatasetQuotas::default(), 0).unwrap();
    let embs = [EmbodimentKind::ShortStick, EmbodimentKind::LongStick, EmbodimentKind::Gripper];
    let view = DatasetView::new(&d, &embs);
    let prefs = sample_preferences(&d, &embs, 5000, 2).unwrap();
    let held = EmbodimentKind::MediumStick;

    let spec = TrainSpec::new(Method::XPrefsStatic, 2500, 31);
    let inputs = TrainInputs { goal_set: Some(&d.goal_set), preferences: Some(&prefs), ..Default::default() };
    let (enc, report) = train_representation(&view, &spec, &inputs).unwrap();
    let goal = GoalEmbedding { values: report.final_goal.clone().unwrap(), source: GoalSource::FromGoalSet };
    let kappa = calibrate_kappa(&enc, &goal, &d, &embs).unwrap();
    let model = RewardModel::DistanceToGoal { encoder: enc.clone(), goal: goal.clone(), kappa };

    let pairs = score_test_set(&model, &d, held).unwrap();
    println!("xprefs-static heldout acc {:.3} tau {:+.3}",
             pairwise_accuracy(&pairs).unwrap(), kendalls_tau(&pairs).unwrap());

    // Reward at goal frames vs episode starts vs a success trajectory.
    let goal_rewards: Vec<f64> = d.goal_set.frames.iter().map(|f| model.reward_of_frame(f).unwrap()).collect();
    println!("goal-frame rewards: mean {:.3} min {:.3} max {:.3}",
             goal_rewards.iter().sum::<f64>() / goal_rewards.len() as f64,
             goal_rewards.iter().cloned().fold(f64::INFINITY, f64::min),
             goal_rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    // One full-success mediumstick trajectory: per-frame rewards.
    let t = d.split(held, SplitKind::Test).iter().find(|t| t.blocks_final(3) == 3 && t.len() < 40).unwrap();
    let rs: Vec<f64> = t.frames.iter().map(|f| (model.reward_of_frame(f).unwrap() * 100.0).round() / 100.0).collect();
    println!("success traj rewards: {rs:?}");
    let f = d.split(held, SplitKind::Test).iter().find(|t| t.blocks_final(3) == 0).unwrap();
    let rf: Vec<f64> = f.frames.iter().take(20).map(|fr| (model.reward_of_frame(fr).unwrap() * 100.0).round() / 100.0).collect();
    println!("failure traj rewards (first 20): {rf:?}");
}
