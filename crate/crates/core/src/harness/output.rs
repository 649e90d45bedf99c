use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::aggregate::Summary;
use super::config::Scheme;
use super::sweep::TrialRecord;
use crate::Result;

pub const RECORD_HEADER: &str =
    "scheme,snr_db,n_targets,trial,seed,pos_err,vel_err,raw_pos_err,kf_pos_err,ber,dropouts,runtime_ms";

pub const SUMMARY_HEADER: &str = "scheme,snr_db,n_targets,trials,pos_rmse,pos_lo,pos_hi,vel_rmse,vel_lo,vel_hi,\
raw_pos_rmse,raw_pos_lo,raw_pos_hi,kf_pos_rmse,kf_pos_lo,kf_pos_hi,ber,ber_lo,ber_hi,dropouts";

fn num(x: f64) -> String {
    format!("{x:.8e}")
}

fn list(v: &[f64]) -> String {
    v.iter().map(|&x| num(x)).collect::<Vec<_>>().join(";")
}

pub fn records_csv(records: &[TrialRecord]) -> String {
    let mut s = String::from(RECORD_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scheme,
            num(r.snr_db),
            r.n_targets,
            r.trial,
            r.seed,
            list(&r.pos_err),
            list(&r.vel_err),
            list(&r.raw_pos_err),
            list(&r.kf_pos_err),
            list(&r.ber),
            r.dropouts,
            num(r.runtime_ms)
        );
    }
    s
}

pub fn summary_csv(summaries: &[Summary]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for x in summaries {
        let e = |e: &super::aggregate::Estimate| format!("{},{},{}", num(e.value), num(e.lo), num(e.hi));
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            x.scheme,
            num(x.snr_db),
            x.n_targets,
            x.trials,
            e(&x.pos_rmse),
            e(&x.vel_rmse),
            e(&x.raw_pos_rmse),
            e(&x.kf_pos_rmse),
            e(&x.ber),
            x.dropouts
        );
    }
    s
}

/// Writes `trials.csv` and `summary.csv` into `dir`, creating it.
pub fn write_outputs(dir: &Path, records: &[TrialRecord], summaries: &[Summary]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let trials = dir.join("trials.csv");
    let summary = dir.join("summary.csv");
    fs::write(&trials, records_csv(records))?;
    fs::write(&summary, summary_csv(summaries))?;
    Ok(vec![trials, summary])
}

/// Gnuplot data and scripts: position RMSE versus SNR per target count,
/// and BER versus outer iteration. Schemes without data are left out.
pub fn emit_plots(dir: &Path, summaries: &[Summary]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut counts: Vec<usize> = summaries.iter().map(|s| s.n_targets).collect();
    counts.sort_unstable();
    counts.dedup();
    for nt in counts {
        let mut dat = String::new();
        let mut plots = Vec::new();
        let mut block = 0;
        for scheme in Scheme::ALL {
            let rows: Vec<&Summary> = summaries
                .iter()
                .filter(|s| s.scheme == scheme && s.n_targets == nt && s.pos_rmse.value.is_finite())
                .collect();
            if rows.is_empty() {
                continue;
            }
            let _ = writeln!(dat, "# {scheme}");
            for r in rows {
                let _ = writeln!(
                    dat,
                    "{} {} {} {}",
                    num(r.snr_db),
                    num(r.pos_rmse.value),
                    num(r.pos_rmse.lo),
                    num(r.pos_rmse.hi)
                );
            }
            dat.push_str("\n\n");
            plots.push(format!(
                "'rmse_nt{nt}.dat' index {block} using 1:2:3:4 with yerrorlines title '{}'",
                scheme.name().replace('_', "\\_")
            ));
            block += 1;
        }
        if plots.is_empty() {
            continue;
        }
        let dat_path = dir.join(format!("rmse_nt{nt}.dat"));
        let gp_path = dir.join(format!("rmse_nt{nt}.gp"));
        fs::write(&dat_path, dat)?;
        let gp = format!(
            "set terminal pngcairo size 800,600\nset output 'rmse_nt{nt}.png'\nset xlabel 'SNR (dB)'\n\
set ylabel 'position RMSE (m)'\nset logscale y\nset grid\nplot {}\n",
            plots.join(", \\\n     ")
        );
        fs::write(&gp_path, gp)?;
        written.push(dat_path);
        written.push(gp_path);
    }

    let isac: Vec<&Summary> = summaries.iter().filter(|s| !s.ber_per_iteration.is_empty()).collect();
    if !isac.is_empty() {
        let mut dat = String::new();
        let mut plots = Vec::new();
        for (block, s) in isac.iter().enumerate() {
            let _ = writeln!(dat, "# {} snr={} nt={}", s.scheme, s.snr_db, s.n_targets);
            for (i, b) in s.ber_per_iteration.iter().enumerate() {
                let _ = writeln!(dat, "{} {}", i + 1, num(*b));
            }
            dat.push_str("\n\n");
            plots.push(format!(
                "'ber_iterations.dat' index {block} using 1:2 with linespoints title '{} {} dB N_T={}'",
                s.scheme.name().replace('_', "\\_"),
                s.snr_db,
                s.n_targets
            ));
        }
        let dat_path = dir.join("ber_iterations.dat");
        let gp_path = dir.join("ber_iterations.gp");
        fs::write(&dat_path, dat)?;
        fs::write(
            &gp_path,
            format!(
                "set terminal pngcairo size 800,600\nset output 'ber_iterations.png'\nset xlabel 'outer iteration'\n\
set ylabel 'BER'\nset logscale y\nset grid\nplot {}\n",
                plots.join(", \\\n     ")
            ),
        )?;
        written.push(dat_path);
        written.push(gp_path);
    }
    Ok(written)
}
