use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use otfs_isac::fusion::{orthogonal_score, placement_score};
use otfs_isac::harness::{
    configured_nodes, emit_plots, parse_list, run_sweep, summarize, summary_csv, trial_targets, write_outputs, Scheme,
    SimConfig,
};
use otfs_isac::sensing::SensingContext;
use otfs_isac::tracker::run_tracking_loop;

#[derive(Parser)]
#[command(name = "isac-sim", version, about = "OTFS multistatic sensing and ISAC simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the configured sweep and write trial and summary CSVs plus plot scripts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sweep over SNR, target count and scheme; prints the summary CSV.
    SweepSnr {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated SNR points in dB.
        #[arg(long, allow_hyphen_values = true)]
        snr: Option<String>,
        /// Comma-separated target counts.
        #[arg(long)]
        targets: Option<String>,
        /// Comma-separated scheme ids, e.g. Act_Sen_Opt,KF_Act_Sen_Opt.
        #[arg(long)]
        schemes: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the trial CSV and plot scripts here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Placement scores: orthogonal layouts on a lattice, or every receiver
    /// pair of the configured scene with --pairs.
    PlacementEval {
        #[arg(long)]
        config: PathBuf,
        /// Lattice step in meters.
        #[arg(long, default_value_t = 20.0)]
        step: f64,
        #[arg(long)]
        pairs: bool,
    },
    /// Track the configured scene for L steps; per-step CSV on stdout.
    TrackDemo {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of targets; defaults to the configured initial states, or 1.
        #[arg(long)]
        targets: Option<usize>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("isac-sim: {e}");
            ExitCode::FAILURE
        }
    }
}

fn f(x: f64) -> String {
    format!("{x:.8e}")
}

fn run(cli: Cli) -> otfs_isac::Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.cmd {
        Cmd::Run { config, out: dir, seed } => {
            let mut cfg = SimConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.sweep.master_seed = s;
            }
            let records = run_sweep(&cfg)?;
            let summaries = summarize(&records)?;
            let mut files = write_outputs(&dir, &records, &summaries)?;
            files.extend(emit_plots(&dir, &summaries)?);
            std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
            for p in files {
                writeln!(out, "{}", p.display())?;
            }
        }
        Cmd::SweepSnr {
            config,
            snr,
            targets,
            schemes,
            seed,
            out: dir,
        } => {
            let mut cfg = SimConfig::load(&config)?;
            if let Some(s) = snr {
                cfg.sweep.snr_db = parse_list(&s)?;
            }
            if let Some(t) = targets {
                cfg.sweep.target_counts = parse_list(&t)?;
            }
            if let Some(s) = schemes {
                cfg.sweep.schemes = parse_list::<Scheme>(&s)?;
            }
            if let Some(s) = seed {
                cfg.sweep.master_seed = s;
            }
            let records = run_sweep(&cfg)?;
            let summaries = summarize(&records)?;
            if let Some(dir) = dir {
                write_outputs(&dir, &records, &summaries)?;
                emit_plots(&dir, &summaries)?;
            }
            write!(out, "{}", summary_csv(&summaries))?;
        }
        Cmd::PlacementEval { config, step, pairs } => {
            let cfg = SimConfig::load(&config)?;
            let [v0, vj, vk] = cfg.scene.placement_var;
            if pairs {
                let nodes = configured_nodes(&cfg)?;
                writeln!(out, "j,k,x_j,y_j,x_k,y_k,trace,max_eigen,area")?;
                for j in 0..nodes.z() {
                    for k in j + 1..nodes.z() {
                        let (a, b) = (nodes.receivers[j], nodes.receivers[k]);
                        let s = placement_score(&nodes.anchor, &a, &b, v0, vj, vk);
                        writeln!(
                            out,
                            "{},{},{},{},{},{},{},{},{}",
                            j + 1,
                            k + 1,
                            f(a.x),
                            f(a.y),
                            f(b.x),
                            f(b.y),
                            f(s.trace_cov),
                            f(s.max_eigen_cov),
                            f(s.triangle_area)
                        )?;
                    }
                }
            } else {
                if step.is_nan() || step <= 0.0 {
                    return Err(otfs_isac::Error::Config("step must be positive".into()));
                }
                let (r, a) = (cfg.scene.region, cfg.scene.anchor);
                writeln!(out, "x_j,y_k,trace,max_eigen,area")?;
                let axis = |lo: f64, hi: f64| {
                    let n = ((hi - lo) / step).floor() as i64;
                    (0..=n).map(move |i| lo + i as f64 * step).filter(|v| v.abs() > 1e-9)
                };
                for xj in axis(r.x_min - a.x, r.x_max - a.x) {
                    for yk in axis(r.y_min - a.y, r.y_max - a.y) {
                        let s = orthogonal_score(xj, yk, v0, vj, vk);
                        writeln!(
                            out,
                            "{},{},{},{},{}",
                            f(xj),
                            f(yk),
                            f(s.trace_cov),
                            f(s.max_eigen_cov),
                            f(s.triangle_area)
                        )?;
                    }
                }
            }
        }
        Cmd::TrackDemo {
            config,
            steps,
            seed,
            targets,
        } => {
            let cfg = SimConfig::load(&config)?;
            let seed = seed.unwrap_or(cfg.sweep.master_seed);
            let nodes = configured_nodes(&cfg)?;
            let n = targets.unwrap_or(cfg.scene.targets.len().max(1));
            let truth = trial_targets(&cfg, n, &nodes, seed)?;
            let snr = if cfg.sweep.noiseless {
                f64::INFINITY
            } else {
                cfg.sweep.snr_db.first().copied().unwrap_or(0.0)
            };
            let ctx = SensingContext::new(cfg.frame.clone(), nodes, &cfg.estimator, cfg.fusion.clone(), snr)?;
            let run = run_tracking_loop(&ctx, &truth, &cfg.motion, &cfg.tracker, steps, seed)?;
            writeln!(
                out,
                "t,target_id,x,y,vx,vy,raw_x,raw_y,raw_vx,raw_vy,post_x,post_y,post_vx,post_vy,trace_p"
            )?;
            let nan4 = [f64::NAN; 4];
            for s in &run.steps {
                let raw = s.raw.map(|v| [v[0], v[1], v[2], v[3]]).unwrap_or(nan4);
                let post = s.posterior.map(|v| [v[0], v[1], v[2], v[3]]).unwrap_or(nan4);
                let cols: Vec<String> = s
                    .truth
                    .iter()
                    .copied()
                    .chain(raw)
                    .chain(post)
                    .chain([s.trace_p])
                    .map(f)
                    .collect();
                writeln!(out, "{},{},{}", s.t, s.target, cols.join(","))?;
            }
        }
    }
    Ok(())
}
