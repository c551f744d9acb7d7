use mqme_core::demogen::*;
use mqme_core::feedback::*;
use mqme_core::replearn::*;
use mqme_core::sim::*;

fn main() {
    let d = build_dataset(EnvConfig::default(), &default_noise_schedule(), DatasetQuotas::default(), 42).unwrap();
    let embs = [EmbodimentKind::ShortStick, EmbodimentKind::LongStick, EmbodimentKind::Gripper];
    let view = DatasetView::new(&d, &embs);
    let prefs = sample_preferences(&d, &embs, 5000, 1).unwrap();
    let triplets = sample_triplets(&d, &embs, 4000, 2).unwrap();
    let buckets = bucketize(&d, &embs, 18, Some(32), 3).unwrap();
    let gs = &d.goal_set;

    let n = 20;
    for (name, method) in [
        ("tcc", Method::Tcc),
        ("buckets", Method::TccBuckets),
        ("xrlhf", Method::XRlhf),
        ("xprefs", Method::XPrefsStatic),
        ("xtriplets", Method::XTriplets),
        ("classifier", Method::GoalClassifier),
    ] {
        let spec = TrainSpec::new(method, n, 7);
        let t0 = std::time::Instant::now();
        let report = match method {
            Method::XRlhf => train_reward_model(&view, &prefs, &spec).unwrap().1,
            Method::GoalClassifier => train_goal_classifier(&view, gs, &spec).unwrap().1,
            _ => {
                let inputs = TrainInputs {
                    goal_set: Some(gs),
                    buckets: Some(&buckets),
                    preferences: Some(&prefs),
                    triplets: Some(&triplets),
                };
                train_representation(&view, &spec, &inputs).unwrap().1
            }
        };
        let per_iter = t0.elapsed().as_secs_f64() / n as f64;
        println!("{name:12} {:.0} ms/iter   first loss {:.4} last {:.4}", per_iter * 1e3,
                 report.losses[0], report.losses[n-1]);
    }
}
