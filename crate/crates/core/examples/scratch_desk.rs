use std::time::Instant;
use lcsc::arch::NetworkConfig;
use lcsc::data::{extract_patches, synthetic_image};
use lcsc::train::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1e-3);
    let epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(3);
    let mut cfg = NetworkConfig::uniform(2, 3, 16, 0.5, 2);
    cfg.rho = vec![0.75, 0.5];
    cfg.fusion = true;
    let mut pairs = Vec::new();
    for i in 0..6 { for p in extract_patches(&synthetic_image(i, 128, 128), 2, 18, 9, true).unwrap() { pairs.extend(lcsc::data::augment_rotations(&p).unwrap()); } }
    println!("pairs {}", pairs.len());
    let val: Vec<_> = (100..103).map(|i| synthetic_image(i, 96, 96)).collect();
    let sched = TrainSchedule { initial_lr: lr, decay_every: 20, decay_factor: 0.1, total_epochs: epochs, batch_size: 16, beta: 1.0 };
    let t = Instant::now();
    let out = train(&cfg, &sched, &TrainData { pairs, val }, &TrainOptions::new(1)).unwrap();
    for r in &out.log { println!("{:?}", r); }
    println!("secs {:.1}", t.elapsed().as_secs_f64());
}
