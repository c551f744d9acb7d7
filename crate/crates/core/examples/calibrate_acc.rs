use mqme_core::demogen::*;
use mqme_core::eval::*;
use mqme_core::feedback::*;
use mqme_core::replearn::*;
use mqme_core::reward::*;
use mqme_core::sim::*;

fn main() {
    let cfg = EnvConfig::default();
    let d = build_dataset(cfg, &default_noise_schedule(), DatasetQuotas::default(), 0).unwrap();
    let success = build_success_dataset(cfg, 200, 1).unwrap();
    let embs = [EmbodimentKind::ShortStick, EmbodimentKind::LongStick, EmbodimentKind::Gripper];
    let view = DatasetView::new(&d, &embs);
    let sview = DatasetView::new(&success, &embs);
    let prefs = sample_preferences(&d, &embs, 5000, 2).unwrap();
    let held = EmbodimentKind::MediumStick;

    // X-RLHF: iterations sweep.
    for iters in [1500usize, 2500, 3500] {
        let mut accs = Vec::new();
        let mut train_accs = Vec::new();
        for seed in 0..2u64 {
            let mut spec = TrainSpec::new(Method::XRlhf, iters, 50 + seed);
            spec.learning_rate = 1e-3;
            let (net, _) = train_reward_model(&view, &prefs, &spec).unwrap();
            train_accs.push(preference_accuracy(&net, &view, &prefs).unwrap());
            let model = RewardModel::DirectNet { net };
            let pairs = score_test_set(&model, &d, held).unwrap();
            accs.push(pairwise_accuracy(&pairs).unwrap());
        }
        println!("xrlhf {iters}: heldout {accs:.3?} train-pref {train_accs:.3?}");
    }

    // TCC on success data: iterations sweep.
    for iters in [2000usize, 3500] {
        let mut accs = Vec::new();
        for seed in 0..2u64 {
            let spec = TrainSpec::new(Method::Tcc, iters, 70 + seed);
            let (enc, _) = train_representation(&sview, &spec, &TrainInputs::default()).unwrap();
            let finals: Vec<&Frame> = embs.iter()
                .flat_map(|&e| success.split(e, SplitKind::Train))
                .map(|t| t.frames.last().unwrap()).collect();
            let goal = compute_goal_embedding(&enc, &finals, GoalSource::FromFinalFrames).unwrap();
            let kappa = calibrate_kappa(&enc, &goal, &success, &embs).unwrap();
            let model = RewardModel::DistanceToGoal { encoder: enc, goal, kappa };
            let pairs = score_test_set(&model, &d, held).unwrap();
            accs.push(pairwise_accuracy(&pairs).unwrap());
        }
        println!("tcc-success {iters}: heldout {accs:.3?}");
    }

    // Classifier: iterations sweep.
    for iters in [600usize, 1000, 2000] {
        let mut accs = Vec::new();
        for seed in 0..2u64 {
            let spec = TrainSpec::new(Method::GoalClassifier, iters, 90 + seed);
            let (net, _) = train_goal_classifier(&view, &d.goal_set, &spec).unwrap();
            let model = RewardModel::Classifier { net };
            let pairs = score_test_set(&model, &d, held).unwrap();
            accs.push(pairwise_accuracy(&pairs).unwrap());
        }
        println!("classifier {iters}: heldout {accs:.3?}");
    }
}
