use mqme_core::pipeline::*;

fn main() {
    let t0 = std::time::Instant::now();
    let cfg = ExperimentConfig::default();
    let tmp = std::env::temp_dir().join("mqme-calib-appendix");
    let _ = std::fs::remove_dir_all(&tmp);
    let run = RunDir::create(&tmp, &cfg).unwrap();
    gen_data(&cfg, &run).unwrap();
    gen_feedback(&cfg, &run).unwrap();
    let report = repro_appendix_a(&cfg, &run).unwrap();
    let spike = refresh_spike_fraction(&report.dynamic_report);
    let windows = non_increasing_window_fraction(&report.static_report.losses, 500);
    println!("[{:?}] events {} spike {:.2} windows {:.2}", t0.elapsed(),
             report.dynamic_report.refresh_steps.len(), spike, windows);
    println!("xprefs-static RL {:?} xrlhf RL {:?}",
             report.xprefs_static_rl.per_seed.iter().map(|p| *p.last().unwrap()).collect::<Vec<_>>(),
             report.xrlhf_rl.per_seed.iter().map(|p| *p.last().unwrap()).collect::<Vec<_>>());
    // Loss shapes: window means for both runs.
    let wm = |l: &[f64]| l.chunks(500).map(|c| (c.iter().sum::<f64>()/c.len() as f64 * 1000.0).round()/1000.0).collect::<Vec<_>>();
    println!("static window means  {:?}", wm(&report.static_report.losses));
    println!("dynamic window means {:?}", wm(&report.dynamic_report.losses));
    // Loss at refresh points vs one before.
    for &s in &report.dynamic_report.refresh_steps {
        println!("refresh at {s}: loss[{}]={:.4} -> loss[{}]={:.4}", s-1,
                 report.dynamic_report.losses[s-1], s, report.dynamic_report.losses[s]);
    }
}
