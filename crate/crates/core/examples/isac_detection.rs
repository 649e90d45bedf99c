//! Passive receivers know only the pilot: estimate the channel, detect the
//! data, and refine the channel with the detected frame.

use otfs_isac::harness::{optimized_nodes, trial_targets, SimConfig};
use otfs_isac::isac::isac_loop;
use otfs_isac::sensing::{draw_gains, synthesize, SensingContext};

fn main() -> otfs_isac::Result<()> {
    let cfg = SimConfig::quick();
    let nodes = optimized_nodes(&cfg)?;
    let targets = trial_targets(&cfg, 4, &nodes, 8)?;
    let ctx = SensingContext::new(cfg.frame.clone(), nodes, &cfg.estimator, cfg.fusion.clone(), 8.0)?;
    let gains = draw_gains(cfg.tracker.gain_model, ctx.nodes.z() + 1, targets.len(), 8);
    let rx = synthesize(&ctx, &targets, &gains, 8)?;
    let out = isac_loop(&ctx, &rx, &cfg.isac)?;
    for (i, r) in out.receivers.iter().enumerate() {
        println!(
            "receiver {}: {} outer iterations, BER {:.4?}",
            i + 1,
            r.outer_iterations,
            r.ber
        );
    }
    println!("mean BER per iteration {:.4?}", out.ber_per_iteration);
    for (t, m) in targets.iter().zip(&out.measurements) {
        match m {
            Some(m) => println!(
                "target at ({:.1}, {:.1}) -> ({:.1}, {:.1})",
                t.position.x, t.position.y, m.z[0], m.z[1]
            ),
            None => println!("target at ({:.1}, {:.1}) not localized", t.position.x, t.position.y),
        }
    }
    Ok(())
}
