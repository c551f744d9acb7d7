use mqme_core::demogen::*;
use mqme_core::feedback::*;
use mqme_core::pipeline::non_increasing_window_fraction;
use mqme_core::replearn::*;
use mqme_core::reward::*;
use mqme_core::rl::*;
use mqme_core::rng;
use mqme_core::sim::*;

fn main() {
    let cfg = EnvConfig::default();
    let d = build_dataset(cfg, &default_noise_schedule(), DatasetQuotas::default(), 0).unwrap();
    let embs = [EmbodimentKind::ShortStick, EmbodimentKind::LongStick, EmbodimentKind::Gripper];
    let view = DatasetView::new(&d, &embs);
    let prefs = sample_preferences(&d, &embs, 5000, rng::mix(&[0, rng::tag("pipeline/prefs")])).unwrap();
    let inputs = TrainInputs { goal_set: Some(&d.goal_set), preferences: Some(&prefs), ..Default::default() };

    for lr in [3e-3, 2e-3] {
        // Dynamic spikes at this lr.
        let canon_dyn = rng::mix(&[0u64, rng::tag("xprefs-dynamic"), rng::tag("train-seed")]);
        let mut spec = TrainSpec::new(Method::XPrefsDynamic { refresh_period: 1000 }, 3200, canon_dyn);
        spec.learning_rate = lr;
        let (_, report) = train_representation(&view, &spec, &inputs).unwrap();
        let spikes: Vec<String> = report.refresh_steps.iter().map(|&s| {
            format!("{}:{:.3}->{:.3}{}", s, report.losses[s-1], report.losses[s],
                    if report.losses[s] > report.losses[s-1] { "+" } else { "-" })
        }).collect();
        println!("lr {lr} dynamic: {spikes:?}");

        // Static: windows + RL + accuracy.
        let canon = rng::mix(&[0u64, rng::tag("xprefs-static"), rng::tag("train-seed")]);
        let mut spec = TrainSpec::new(Method::XPrefsStatic, 2500, canon);
        spec.learning_rate = lr;
        let (enc, rep) = train_representation(&view, &spec, &inputs).unwrap();
        let windows = non_increasing_window_fraction(&rep.losses, 500);
        let frames: Vec<&Frame> = d.goal_set.frames.iter().collect();
        let goal = compute_goal_embedding(&enc, &frames, GoalSource::FromGoalSet).unwrap();
        let kappa = calibrate_kappa(&enc, &goal, &d, &embs).unwrap();
        let model = RewardModel::DistanceToGoal { encoder: enc, goal, kappa };
        let pairs = mqme_core::eval::score_test_set(&model, &d, EmbodimentKind::MediumStick).unwrap();
        let acc = mqme_core::eval::pairwise_accuracy(&pairs).unwrap();
        let env = Env::new(cfg, EmbodimentKind::MediumStick).unwrap();
        let rl = RlSpec::default();
        let returns: Vec<f64> = (0..5).map(|k| {
            let seed = rng::mix(&[0u64, k as u64, rng::tag("pipeline/rl-seed")]);
            let (_, c) = q_learning_train(&env, &model, &rl, seed).unwrap();
            (*c.returns.last().unwrap() * 10.0).round() / 10.0
        }).collect();
        println!("lr {lr} static: windows {windows:.2} acc {acc:.3} RL {returns:?}");
    }
}
