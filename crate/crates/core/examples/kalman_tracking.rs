//! Track two moving targets with the sense-fuse-filter loop and compare
//! raw fused measurements with the filtered track.

use otfs_isac::harness::{optimized_nodes, trial_targets, SimConfig};
use otfs_isac::sensing::SensingContext;
use otfs_isac::tracker::run_tracking_loop;

fn main() -> otfs_isac::Result<()> {
    let cfg = SimConfig::quick();
    let nodes = optimized_nodes(&cfg)?;
    let targets = trial_targets(&cfg, 2, &nodes, 42)?;
    let ctx = SensingContext::new(cfg.frame.clone(), nodes, &cfg.estimator, cfg.fusion.clone(), -5.0)?;
    let run = run_tracking_loop(&ctx, &targets, &cfg.motion, &cfg.tracker, 40, 42)?;
    for i in 0..targets.len() {
        let (mut raw, mut kf, mut n) = (0.0, 0.0, 0);
        for s in run.steps.iter().filter(|s| s.target == i) {
            if let (Some(r), Some(p)) = (s.raw, s.posterior) {
                raw += (r.xy() - s.truth.xy()).norm_squared();
                kf += (p.xy() - s.truth.xy()).norm_squared();
                n += 1;
            }
        }
        let n = n.max(1) as f64;
        println!(
            "target {i}: raw RMSE {:.2} m, KF RMSE {:.2} m",
            (raw / n).sqrt(),
            (kf / n).sqrt()
        );
    }
    println!("dropouts: {}", run.dropouts);
    Ok(())
}
