use nenet::models::ModelKind;
use nenet::scene::{generate_scenes, simulate_all, DetectorNoise, GeneratorConfig};
use nenet::trainer::*;
use std::time::Instant;

fn main() {
    let cfg = GeneratorConfig { scene_count: 100, seed: 13, ..Default::default() };
    let scenes = generate_scenes(&cfg).unwrap();
    let noise = DetectorNoise { jitter_sigma: 0.0, drop_prob: 0.0, spurious_rate: 0.0, seed: 13 };
    let dets = simulate_all(&scenes, &noise);
    let prepared = prepare_scenes(&scenes, &dets, 4).unwrap();
    let mut train_set = Vec::new();
    let mut eval_set = Vec::new();
    for (i, ps) in prepared.into_iter().enumerate() {
        if i % 5 == 4 { eval_set.push(ps); } else { train_set.push(ps); }
    }
    let t = Instant::now();
    let mut tcfg = TrainConfig::new(ModelKind::Nenet, "x".into(), "y".into());
    tcfg.epochs = 80;
    tcfg.seed = 2;
    tcfg.hidden = 32;
    tcfg.schedule.base_lr = 3e-3;
    tcfg.schedule.period = 25;
    let (_m, report) = train_prepared(&tcfg, &train_set, &eval_set).unwrap();
    println!("time {:?} final F {}", t.elapsed(), report.final_edge_f1());
}
