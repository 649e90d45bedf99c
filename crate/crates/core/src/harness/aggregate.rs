use std::collections::BTreeMap;

use rand::Rng;

use super::config::Scheme;
use super::sweep::TrialRecord;
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Point estimate with a 95% percentile-bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Pooled statistics for one (scheme, SNR, target count) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub scheme: Scheme,
    pub snr_db: f64,
    pub n_targets: usize,
    pub trials: usize,
    pub pos_rmse: Estimate,
    pub vel_rmse: Estimate,
    pub raw_pos_rmse: Estimate,
    pub kf_pos_rmse: Estimate,
    pub ber: Estimate,
    /// Mean BER after each outer iteration (ISAC schemes only).
    pub ber_per_iteration: Vec<f64>,
    pub dropouts: usize,
}

/// RMSE over all finite entries, with a bootstrap over trials. Each sample
/// unit is one trial's list of per-target errors.
pub fn rmse_with_ci(per_trial: &[Vec<f64>], seed: u64) -> Estimate {
    let stat = |idx: &mut dyn Iterator<Item = usize>| {
        let (mut s, mut n) = (0.0, 0usize);
        for i in idx {
            for &e in per_trial[i].iter().filter(|e| e.is_finite()) {
                s += e * e;
                n += 1;
            }
        }
        if n == 0 {
            f64::NAN
        } else {
            (s / n as f64).sqrt()
        }
    };
    bootstrap(per_trial.len(), seed, stat)
}

pub fn mean_with_ci(values: &[f64], seed: u64) -> Estimate {
    let stat = |idx: &mut dyn Iterator<Item = usize>| {
        let (mut s, mut n) = (0.0, 0usize);
        for i in idx {
            if values[i].is_finite() {
                s += values[i];
                n += 1;
            }
        }
        if n == 0 {
            f64::NAN
        } else {
            s / n as f64
        }
    };
    bootstrap(values.len(), seed, stat)
}

fn bootstrap(n: usize, seed: u64, stat: impl Fn(&mut dyn Iterator<Item = usize>) -> f64) -> Estimate {
    let value = stat(&mut (0..n));
    if n == 0 || !value.is_finite() {
        return Estimate {
            value,
            lo: value,
            hi: value,
        };
    }
    let mut rng = stream_rng(seed, Stream::Placement);
    let mut reps: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            stat(&mut idx.into_iter())
        })
        .filter(|v| v.is_finite())
        .collect();
    if reps.is_empty() {
        return Estimate {
            value,
            lo: value,
            hi: value,
        };
    }
    reps.sort_by(f64::total_cmp);
    let q = |p: f64| reps[((p * (reps.len() - 1) as f64).round() as usize).min(reps.len() - 1)];
    Estimate {
        value,
        lo: q(0.025).min(value),
        hi: q(0.975).max(value),
    }
}

fn cell_seed(scheme: Scheme, snr: f64, nt: usize) -> u64 {
    (scheme as u64) << 56 ^ snr.to_bits().rotate_left(17) ^ nt as u64
}

/// Groups records by cell, ordered by scheme, SNR and target count.
pub fn summarize(records: &[TrialRecord]) -> Result<Vec<Summary>> {
    if records.is_empty() {
        return Err(Error::input("no trial records to summarize"));
    }
    let mut cells: BTreeMap<(Scheme, u64, usize), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        // Orders finite SNRs numerically; inf sorts last.
        let key = r.snr_db.to_bits() ^ if r.snr_db.is_sign_negative() { u64::MAX } else { 1 << 63 };
        cells.entry((r.scheme, key, r.n_targets)).or_default().push(r);
    }
    let mut out = Vec::with_capacity(cells.len());
    for ((scheme, _, nt), recs) in cells {
        let snr = recs[0].snr_db;
        let seed = cell_seed(scheme, snr, nt);
        let col = |f: fn(&TrialRecord) -> &Vec<f64>| recs.iter().map(|r| f(r).clone()).collect::<Vec<_>>();
        let max_it = recs.iter().map(|r| r.ber.len()).max().unwrap_or(0);
        let ber_per_iteration = (0..max_it)
            .map(|i| {
                let v: Vec<f64> = recs
                    .iter()
                    .filter_map(|r| r.ber.get(i).copied())
                    .filter(|b| b.is_finite())
                    .collect();
                if v.is_empty() {
                    f64::NAN
                } else {
                    v.iter().sum::<f64>() / v.len() as f64
                }
            })
            .collect();
        let final_ber: Vec<f64> = recs.iter().map(|r| r.ber.last().copied().unwrap_or(f64::NAN)).collect();
        out.push(Summary {
            scheme,
            snr_db: snr,
            n_targets: nt,
            trials: recs.len(),
            pos_rmse: rmse_with_ci(&col(|r| &r.pos_err), seed),
            vel_rmse: rmse_with_ci(&col(|r| &r.vel_err), seed ^ 1),
            raw_pos_rmse: rmse_with_ci(&col(|r| &r.raw_pos_err), seed ^ 2),
            kf_pos_rmse: rmse_with_ci(&col(|r| &r.kf_pos_err), seed ^ 3),
            ber: mean_with_ci(&final_ber, seed ^ 4),
            ber_per_iteration,
            dropouts: recs.iter().map(|r| r.dropouts).sum(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(scheme: Scheme, snr: f64, errs: Vec<f64>) -> TrialRecord {
        TrialRecord {
            scheme,
            snr_db: snr,
            n_targets: errs.len(),
            trial: 0,
            seed: 0,
            pos_err: errs.clone(),
            vel_err: errs.clone(),
            raw_pos_err: errs,
            kf_pos_err: vec![],
            ber: vec![0.2, 0.1],
            dropouts: 0,
            runtime_ms: 0.0,
        }
    }

    #[test]
    fn empty_is_error() {
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn pooled_rmse_and_interval() {
        let recs = vec![
            rec(Scheme::ActSenOpt, 5.0, vec![3.0, 4.0]),
            rec(Scheme::ActSenOpt, 5.0, vec![1.0, f64::NAN]),
            rec(Scheme::ActSenOpt, -5.0, vec![2.0]),
        ];
        let s = summarize(&recs).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].snr_db, -5.0);
        let want = ((9.0 + 16.0 + 1.0) / 3.0f64).sqrt();
        assert!((s[1].pos_rmse.value - want).abs() < 1e-12);
        assert!(s[1].pos_rmse.lo <= want && want <= s[1].pos_rmse.hi);
        assert!(s[1].kf_pos_rmse.value.is_nan());
        assert_eq!(s[1].ber_per_iteration, vec![0.2, 0.1]);
        assert!((s[1].ber.value - 0.1).abs() < 1e-15);
    }

    #[test]
    fn interval_is_deterministic() {
        let v: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 * 0.1]).collect();
        assert_eq!(rmse_with_ci(&v, 7), rmse_with_ci(&v, 7));
        let e = rmse_with_ci(&v, 7);
        assert!(e.lo < e.value && e.value < e.hi);
    }

    #[test]
    fn snr_ordering_handles_infinity() {
        let recs = vec![
            rec(Scheme::IsacOpt, f64::INFINITY, vec![1.0]),
            rec(Scheme::IsacOpt, 10.0, vec![1.0]),
            rec(Scheme::IsacOpt, -10.0, vec![1.0]),
        ];
        let s = summarize(&recs).unwrap();
        let snrs: Vec<f64> = s.iter().map(|x| x.snr_db).collect();
        assert_eq!(snrs, vec![-10.0, 10.0, f64::INFINITY]);
    }
}
