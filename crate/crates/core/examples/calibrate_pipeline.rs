use mqme_core::pipeline::*;
use mqme_core::sim::ALL_EMBODIMENTS;

fn main() {
    let t0 = std::time::Instant::now();
    let cfg = ExperimentConfig::default();
    let tmp = std::env::temp_dir().join("mqme-calib");
    let _ = std::fs::remove_dir_all(&tmp);
    let run = RunDir::create(&tmp, &cfg).unwrap();

    gen_data(&cfg, &run).unwrap();
    gen_feedback(&cfg, &run).unwrap();
    println!("[{:6.1?}] data + feedback", t0.elapsed());

    // Table-1 analogue: all six reward methods evaluated on all embodiments.
    let rows = repro_table1(&cfg, &run).unwrap();
    println!("[{:6.1?}] table1:", t0.elapsed());
    println!("{:16} {}", "method", ALL_EMBODIMENTS.map(|e| format!("{:>23}", e.name())).join(""));
    for method in REWARD_METHODS {
        let cells: Vec<String> = ALL_EMBODIMENTS.iter().map(|&e| {
            let r = rows.iter().find(|r| r.method == method && r.embodiment == e).unwrap();
            format!("  tau {:+.2} acc {:.3}", r.tau, r.accuracy)
        }).collect();
        println!("{:16} {}", method.name(), cells.join(""));
    }

    // Fig-1 analogue: RL on the held-out embodiment for the legend set.
    let results = repro_fig1(&cfg, &run).unwrap();
    println!("[{:6.1?}] fig1 final returns:", t0.elapsed());
    for (m, s) in &results {
        println!("  {:16} {:7.2} +- {:.2}   per-seed {:?}", m.name(),
                 s.mean.last().unwrap(), s.stderr.last().unwrap(),
                 s.per_seed.iter().map(|p| (p.last().unwrap() * 10.0).round() / 10.0).collect::<Vec<_>>());
    }
    println!("[{:6.1?}] done", t0.elapsed());
}
