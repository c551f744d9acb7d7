use mqme_core::rl::*;
use mqme_core::rng;
use mqme_core::sim::*;

fn main() {
    for pool in [2usize, 3] {
        let mut mins = Vec::new();
        for master in [0u64, 1, 7, 42] {
            for env_seed in [0u64, 5] {
                let seeds: Vec<u64> = (0..5)
                    .map(|k| rng::mix(&[master, k as u64, rng::tag("pipeline/rl-seed")]))
                    .collect();
                let cfg = EnvConfig { seed: env_seed, ..EnvConfig::default() };
                let env = Env::new(cfg, EmbodimentKind::MediumStick).unwrap();
                let vi = value_iteration(&env, 0.99, pool, 1e-8, 4_000_000).unwrap();
                let spec = RlSpec { layout_pool: pool, ..RlSpec::default() };
                let ratios: Vec<f64> = seeds.iter().map(|&s| {
                    let (_, c) = q_learning_train(&env, &GtReward, &spec, s).unwrap();
                    c.returns.last().unwrap() / vi.optimal_return
                }).collect();
                let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
                mins.push(min);
                if master == 0 && env_seed == 0 {
                    println!("pool {pool} ACCEPTANCE combo: {:?}",
                             ratios.iter().map(|r| (r * 1000.0).round() / 1000.0).collect::<Vec<_>>());
                }
            }
        }
        println!("pool {pool}: per-combo mins {:?}",
                 mins.iter().map(|r| (r * 1000.0).round() / 1000.0).collect::<Vec<_>>());
    }
}
