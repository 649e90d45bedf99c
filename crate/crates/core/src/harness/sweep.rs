use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use super::config::{Scheme, SimConfig};
use crate::fusion::optimize_placement;
use crate::isac::isac_loop;
use crate::motion::stationary_velocity;
use crate::rng::{stream_rng, trial_seed, Stream};
use crate::scene::{NodeSet, Point, TargetTruth};
use crate::sensing::{draw_gains, synthesize, SensingContext};
use crate::tracker::run_tracking_loop;
use crate::{Error, Result};

/// Outcome of one (scheme, SNR, target count, trial) work unit. Per-target
/// errors are RMS over the tracking steps; NaN marks a target that was
/// never measured.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub scheme: Scheme,
    pub snr_db: f64,
    pub n_targets: usize,
    pub trial: usize,
    pub seed: u64,
    /// Error of the scheme's own output (posterior for the KF scheme).
    pub pos_err: Vec<f64>,
    pub vel_err: Vec<f64>,
    /// Fused measurement error before filtering.
    pub raw_pos_err: Vec<f64>,
    /// Filter posterior error; NaN for schemes without a filter.
    pub kf_pos_err: Vec<f64>,
    /// Mean BER over receivers after each outer ISAC iteration.
    pub ber: Vec<f64>,
    pub dropouts: usize,
    pub runtime_ms: f64,
}

/// Everything a trial executes with, apart from the randomness.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSetup {
    pub nodes: NodeSet,
    pub targets: Vec<TargetTruth>,
    pub snr_db: f64,
    pub config: SimConfig,
}

impl TrialSetup {
    /// Hash of everything except the receiver layout.
    pub fn fingerprint_without_nodes(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        format!("{:?}|{:?}|{:?}", self.targets, self.snr_db.to_bits(), self.config).hash(&mut h);
        h.finish()
    }
}

/// Receivers drawn uniformly in the region, away from the anchor and from
/// each other.
pub fn random_nodes(cfg: &SimConfig, seed: u64) -> Result<NodeSet> {
    let s = &cfg.scene;
    let mut rng = stream_rng(seed, Stream::Placement);
    let r = s.region;
    let mut rx: Vec<Point> = Vec::with_capacity(s.n_receivers);
    let mut attempts = 0;
    while rx.len() < s.n_receivers {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::config("region too crowded for random placement"));
        }
        let p = Point::new(rng.random_range(r.x_min..=r.x_max), rng.random_range(r.y_min..=r.y_max));
        if (p - s.anchor).norm() < s.min_node_distance || rx.iter().any(|q| (p - q).norm() < s.min_node_distance) {
            continue;
        }
        rx.push(p);
    }
    NodeSet::new(s.anchor, rx, r)
}

pub fn optimized_nodes(cfg: &SimConfig) -> Result<NodeSet> {
    let s = &cfg.scene;
    let v = s.placement_var;
    optimize_placement(&s.region, &s.anchor, (v[0], v[1], v[2]), s.placement, s.n_receivers)
}

/// Configured receivers if any, otherwise the optimized layout.
pub fn configured_nodes(cfg: &SimConfig) -> Result<NodeSet> {
    if cfg.scene.receivers.is_empty() {
        optimized_nodes(cfg)
    } else {
        NodeSet::new(cfg.scene.anchor, cfg.scene.receivers.clone(), cfg.scene.region)
    }
}

/// The configured initial targets, topped up with random ones placed inside
/// the region margin and away from every node, moving with a velocity from
/// the stationary motion distribution.
pub fn trial_targets(cfg: &SimConfig, n: usize, nodes: &NodeSet, seed: u64) -> Result<Vec<TargetTruth>> {
    let s = &cfg.scene;
    let mut out: Vec<TargetTruth> = s.targets.iter().take(n).copied().collect();
    let mut rng = stream_rng(seed, Stream::Targets);
    let r = s.region;
    let m = s.target_margin;
    let mut attempts = 0;
    while out.len() < n {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::config("cannot place random targets"));
        }
        let p = Point::new(
            rng.random_range(r.x_min + m..=r.x_max - m),
            rng.random_range(r.y_min + m..=r.y_max - m),
        );
        let near = (0..=nodes.z()).any(|q| (nodes.node(q) - p).norm() < s.min_node_distance);
        // Only positions are drawn in the loop so rejected draws do not
        // shift the velocity stream.
        if near {
            continue;
        }
        out.push(TargetTruth::new(p, Point::zeros()));
    }
    let mut vel_rng = stream_rng(seed ^ 0x7665_6c6f, Stream::Targets);
    for t in out.iter_mut().skip(s.targets.len().min(n)) {
        t.velocity = stationary_velocity(&cfg.motion, &mut vel_rng);
    }
    Ok(out)
}

fn snr_value(cfg: &SimConfig, idx: usize) -> f64 {
    if cfg.sweep.noiseless {
        f64::INFINITY
    } else {
        cfg.sweep.snr_db[idx]
    }
}

/// Inputs of one trial.
pub fn trial_setup(cfg: &SimConfig, scheme: Scheme, snr_idx: usize, nt_idx: usize, trial: usize) -> Result<TrialSetup> {
    let seed = trial_seed(cfg.sweep.master_seed, snr_idx, nt_idx, trial);
    let nodes = if scheme.random_placement() {
        random_nodes(cfg, seed)?
    } else {
        optimized_nodes(cfg)?
    };
    // Targets depend on the seed only (not the layout) so that placement
    // schemes see the same targets; nodes are avoided for both layouts.
    let opt = optimized_nodes(cfg)?;
    let rnd = random_nodes(cfg, seed)?;
    let mut all = opt.clone();
    all.receivers.extend(rnd.receivers.iter().copied());
    let targets = trial_targets(cfg, cfg.sweep.target_counts[nt_idx], &all, seed)?;
    Ok(TrialSetup {
        nodes,
        targets,
        snr_db: snr_value(cfg, snr_idx),
        config: cfg.clone(),
    })
}

fn rms(errs: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for e in errs {
        sum += e * e;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        (sum / n as f64).sqrt()
    }
}

pub fn run_trial(cfg: &SimConfig, scheme: Scheme, snr_idx: usize, nt_idx: usize, trial: usize) -> Result<TrialRecord> {
    let start = Instant::now();
    let seed = trial_seed(cfg.sweep.master_seed, snr_idx, nt_idx, trial);
    let setup = trial_setup(cfg, scheme, snr_idx, nt_idx, trial)?;
    let ctx = SensingContext::new(
        cfg.frame.clone(),
        setup.nodes.clone(),
        &cfg.estimator,
        cfg.fusion.clone(),
        setup.snr_db,
    )?;
    let nt = setup.targets.len();
    let mut rec = TrialRecord {
        scheme,
        snr_db: setup.snr_db,
        n_targets: nt,
        trial,
        seed,
        pos_err: vec![f64::NAN; nt],
        vel_err: vec![f64::NAN; nt],
        raw_pos_err: vec![f64::NAN; nt],
        kf_pos_err: vec![f64::NAN; nt],
        ber: Vec::new(),
        dropouts: 0,
        runtime_ms: 0.0,
    };
    if scheme.is_isac() {
        let gains = draw_gains(cfg.tracker.gain_model, ctx.nodes.z() + 1, nt, seed);
        let reception = synthesize(&ctx, &setup.targets, &gains, seed)?;
        let out = isac_loop(&ctx, &reception, &cfg.isac)?;
        for (i, m) in out.measurements.iter().enumerate() {
            match m {
                Some(m) => {
                    let t = &setup.targets[i];
                    rec.pos_err[i] = (m.z.xy() - t.position).norm();
                    rec.vel_err[i] = (nalgebra::Vector2::new(m.z[2], m.z[3]) - t.velocity).norm();
                    rec.raw_pos_err[i] = rec.pos_err[i];
                }
                None => rec.dropouts += 1,
            }
        }
        rec.ber = out.ber_per_iteration;
    } else {
        let run = run_tracking_loop(&ctx, &setup.targets, &cfg.motion, &cfg.tracker, cfg.sweep.steps, seed)?;
        rec.dropouts = run.dropouts;
        for i in 0..nt {
            let steps = run.steps.iter().filter(|s| s.target == i);
            let pos = |v: &nalgebra::Vector4<f64>, s: &crate::tracker::StepRecord| (v.xy() - s.truth.xy()).norm();
            let vel = |v: &nalgebra::Vector4<f64>, s: &crate::tracker::StepRecord| {
                (v.fixed_rows::<2>(2) - s.truth.fixed_rows::<2>(2)).norm()
            };
            rec.raw_pos_err[i] = rms(steps.clone().filter_map(|s| s.raw.as_ref().map(|v| pos(v, s))));
            rec.kf_pos_err[i] = rms(steps.clone().filter_map(|s| s.posterior.as_ref().map(|v| pos(v, s))));
            if scheme == Scheme::KfActSenOpt {
                rec.pos_err[i] = rec.kf_pos_err[i];
                rec.vel_err[i] = rms(steps.clone().filter_map(|s| s.posterior.as_ref().map(|v| vel(v, s))));
            } else {
                rec.pos_err[i] = rec.raw_pos_err[i];
                rec.vel_err[i] = rms(steps.clone().filter_map(|s| s.raw.as_ref().map(|v| vel(v, s))));
                rec.kf_pos_err[i] = f64::NAN;
            }
        }
    }
    if cfg.sweep.record_runtime {
        rec.runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    }
    Ok(rec)
}

/// Every (scheme, SNR, N_T, trial) of the sweep, in that nesting order.
/// Trials run in parallel; the result order is fixed.
pub fn run_sweep(cfg: &SimConfig) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let s = &cfg.sweep;
    let mut work = Vec::new();
    for &scheme in &s.schemes {
        for snr_idx in 0..s.snr_db.len() {
            for nt_idx in 0..s.target_counts.len() {
                for trial in 0..s.trials {
                    work.push((scheme, snr_idx, nt_idx, trial));
                }
            }
        }
    }
    work.into_par_iter()
        .map(|(scheme, si, ni, t)| run_trial(cfg, scheme, si, ni, t))
        .collect()
}
