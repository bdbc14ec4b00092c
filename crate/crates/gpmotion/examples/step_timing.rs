//! Rough per-step training cost at desk scale (dev utility).

use gpmotion::gp::KernelSpec;
use gpmotion::model::{train, ModelConfig, MotionModel, TrainConfig};
use gpmotion::synth::{generate_dataset, SyntheticSpec};

fn main() {
    let spec = SyntheticSpec::default();
    let dataset = generate_dataset(&spec, 8, 1).unwrap();
    let mut rng = gpmotion::rng::seeded(2);
    let mut model = MotionModel::init(ModelConfig::default(), KernelSpec::default(), false, &mut rng).unwrap();
    println!("parameters: {}", model.parameter_count());
    let cfg = TrainConfig { epochs: 2, ..TrainConfig::default() };
    let start = std::time::Instant::now();
    let log = train(&mut model, &dataset, &cfg, 3).unwrap();
    let dt = start.elapsed().as_secs_f64();
    println!("{} steps in {:.2}s = {:.3}s/step", log.len(), dt, dt / log.len() as f64);
    println!("first loss {:.1}, last loss {:.1}", log.first().unwrap().loss, log.last().unwrap().loss);
}
