use dualpose::commands::{evaluate_model, train_model, Split};
use dualpose::config::RunConfig;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1500);
    let alpha: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let mut cfg = RunConfig::default();
    cfg.steps = steps;
    cfg.alpha = alpha;
    let t0 = Instant::now();
    let out = train_model(&cfg, true).unwrap();
    let heldout = evaluate_model(&out.model, &cfg, Split::Heldout).unwrap();
    println!("steps={steps} alpha={alpha}: heldout pck@0.1 = {:.4} ({:.0?})", heldout.pck, t0.elapsed());
}
