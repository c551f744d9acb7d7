use mqme_core::demogen::*;
use mqme_core::sim::*;
fn main() {
    let t0 = std::time::Instant::now();
    let d = build_dataset(EnvConfig::default(), &default_noise_schedule(), DatasetQuotas::default(), 42).unwrap();
    println!("full default build: {:?}", t0.elapsed());
    for emb in ALL_EMBODIMENTS {
        println!("{:12} train {:?} test {:?}", emb.name(),
            d.class_histogram(emb, SplitKind::Train), d.class_histogram(emb, SplitKind::Test));
        let lens: Vec<usize> = d.split(emb, SplitKind::Train).iter().map(|t| t.len()).collect();
        let mean = lens.iter().sum::<usize>() as f64 / lens.len() as f64;
        println!("  mean train len {:.1}", mean);
    }
    // epsilon - class relationship
    let e = Env::new(EnvConfig::default(), EmbodimentKind::MediumStick).unwrap();
    for eps in [0.6, 0.8] {
        let p = DegradedOracle::new(eps).unwrap();
        let mut hist = [0usize; 4];
        for s in 0..300 { hist[rollout(&e, &p, s).unwrap().blocks_final(3)] += 1; }
        println!("eps {eps}: class hist {hist:?}");
    }
}
