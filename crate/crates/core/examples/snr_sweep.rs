//! Small Monte-Carlo sweep over SNR for the three active-sensing schemes.

use otfs_isac::harness::{run_sweep, summarize, summary_csv, Scheme, SimConfig};

fn main() -> otfs_isac::Result<()> {
    let mut cfg = SimConfig::quick();
    cfg.sweep.snr_db = vec![-20.0, -10.0, 0.0];
    cfg.sweep.schemes = vec![Scheme::ActSenRnd, Scheme::ActSenOpt, Scheme::KfActSenOpt];
    cfg.sweep.trials = 8;
    cfg.sweep.steps = 15;
    let summary = summarize(&run_sweep(&cfg)?)?;
    for s in &summary {
        println!(
            "{:<15} {:>6.1} dB  RMSE {:8.2} m  [{:.2}, {:.2}]",
            s.scheme.name(),
            s.snr_db,
            s.pos_rmse.value,
            s.pos_rmse.lo,
            s.pos_rmse.hi
        );
    }
    eprint!("{}", summary_csv(&summary));
    Ok(())
}
