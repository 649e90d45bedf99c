use otfs_isac::harness::*;
use otfs_isac::isac::isac_loop;
use otfs_isac::sensing::{draw_gains, synthesize, GainModel, SensingContext};
use otfs_isac::Error;

fn record(scheme: Scheme, snr: f64, errs: Vec<f64>) -> TrialRecord {
    TrialRecord {
        scheme,
        snr_db: snr,
        n_targets: errs.len(),
        trial: 0,
        seed: 0,
        pos_err: errs.clone(),
        vel_err: errs.clone(),
        raw_pos_err: errs,
        kf_pos_err: vec![f64::NAN],
        ber: vec![],
        dropouts: 0,
        runtime_ms: 0.0,
    }
}

#[test]
fn noiseless_full_frame_is_below_a_range_bin() {
    let mut cfg = SimConfig::default();
    cfg.sweep.schemes = vec![Scheme::ActSenOpt];
    cfg.sweep.trials = 1;
    cfg.sweep.steps = 5;
    cfg.sweep.noiseless = true;
    let recs = run_sweep(&cfg).unwrap();
    let s = summarize(&recs).unwrap();
    assert!(s[0].snr_db.is_infinite());
    assert!(s[0].pos_rmse.value < 2.44, "RMSE {}", s[0].pos_rmse.value);
}

#[test]
fn placement_schemes_differ_only_in_nodes() {
    let cfg = SimConfig::quick();
    for trial in 0..5 {
        let rnd = trial_setup(&cfg, Scheme::ActSenRnd, 0, 0, trial).unwrap();
        let opt = trial_setup(&cfg, Scheme::ActSenOpt, 0, 0, trial).unwrap();
        assert_eq!(rnd.fingerprint_without_nodes(), opt.fingerprint_without_nodes());
        assert_eq!(rnd.targets, opt.targets);
        assert_ne!(rnd.nodes, opt.nodes);
    }
}

#[test]
fn trial_errors_are_uncorrelated_across_seeds() {
    let mut cfg = SimConfig::quick();
    cfg.sweep.schemes = vec![Scheme::ActSenOpt];
    cfg.sweep.snr_db = vec![-10.0];
    cfg.sweep.trials = 1000;
    cfg.sweep.steps = 1;
    let e: Vec<f64> = run_sweep(&cfg)
        .unwrap()
        .iter()
        .map(|r| r.pos_err[0])
        .filter(|x| x.is_finite())
        .collect();
    // Rank transform so a few large outliers do not dominate.
    let mut idx: Vec<usize> = (0..e.len()).collect();
    idx.sort_by(|&a, &b| e[a].total_cmp(&e[b]));
    let mut rank = vec![0.0; e.len()];
    for (r, &i) in idx.iter().enumerate() {
        rank[i] = r as f64;
    }
    let n = rank.len() as f64;
    let m = rank.iter().sum::<f64>() / n;
    let var = rank.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    for lag in 1..=3 {
        let c = (0..rank.len() - lag)
            .map(|i| (rank[i] - m) * (rank[i + lag] - m))
            .sum::<f64>()
            / var;
        assert!(c.abs() < 0.1, "lag {lag} autocorrelation {c}");
    }
}

#[test]
fn outer_loop_residual_never_rises() {
    let mut cfg = SimConfig::quick();
    cfg.sweep.snr_db = vec![4.0];
    for trial in 0..6 {
        let setup = trial_setup(&cfg, Scheme::IsacOpt, 0, 0, trial).unwrap();
        let targets = trial_targets(&cfg, 3, &setup.nodes, trial as u64).unwrap();
        let ctx = SensingContext::new(
            cfg.frame.clone(),
            setup.nodes.clone(),
            &cfg.estimator,
            cfg.fusion.clone(),
            4.0,
        )
        .unwrap();
        let gains = draw_gains(
            GainModel::UnitRandomPhase,
            ctx.nodes.z() + 1,
            targets.len(),
            trial as u64,
        );
        let rec = synthesize(&ctx, &targets, &gains, trial as u64).unwrap();
        let out = isac_loop(&ctx, &rec, &cfg.isac).unwrap();
        for r in &out.receivers {
            assert!(r.residual.windows(2).all(|w| w[1] <= w[0]), "{:?}", r.residual);
            assert_eq!(r.residual.len(), r.ber.len());
        }
        assert_eq!(out.ber_per_iteration.len(), cfg.isac.max_outer);
    }
}

#[test]
fn pooled_rmse_examples() {
    let one = summarize(&[record(Scheme::ActSenOpt, 0.0, vec![3.0])]).unwrap();
    assert!((one[0].pos_rmse.value - 3.0).abs() < 1e-12);
    let two = summarize(&[record(Scheme::ActSenOpt, 0.0, vec![3.0, 4.0])]).unwrap();
    assert!((two[0].pos_rmse.value - 12.5f64.sqrt()).abs() < 1e-12);
    assert!(matches!(summarize(&[]), Err(Error::Input(_))));
}

#[test]
fn plot_files_have_one_row_per_cell() {
    let mut recs = Vec::new();
    for scheme in [Scheme::ActSenOpt, Scheme::KfActSenOpt] {
        for snr in [-10.0, 0.0, 10.0] {
            recs.push(record(scheme, snr, vec![1.0 + snr.abs()]));
        }
    }
    let s = summarize(&recs).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_plots(dir.path(), &s).unwrap();
    let dat = std::fs::read_to_string(dir.path().join("rmse_nt1.dat")).unwrap();
    let rows = dat.lines().filter(|l| !l.is_empty() && !l.starts_with('#')).count();
    assert_eq!(rows, 6);
    let gp = std::fs::read_to_string(dir.path().join("rmse_nt1.gp")).unwrap();
    assert!(gp.contains("rmse_nt1.dat"));
    assert!(!gp.contains("ISAC"));
    assert!(!files.iter().any(|f| f.ends_with("ber_iterations.dat")));

    let again = tempfile::tempdir().unwrap();
    emit_plots(again.path(), &s).unwrap();
    for f in &files {
        let name = f.file_name().unwrap();
        assert_eq!(
            std::fs::read(f).unwrap(),
            std::fs::read(again.path().join(name)).unwrap()
        );
    }
}

#[test]
fn unwritable_output_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let s = summarize(&[record(Scheme::ActSenOpt, 0.0, vec![1.0])]).unwrap();
    assert!(matches!(emit_plots(&blocker.join("sub"), &s), Err(Error::Io(_))));
}

#[test]
fn csv_uses_field_names_and_nine_digits() {
    let csv = records_csv(&[record(Scheme::ActSenRnd, 5.0, vec![3.0, 4.0])]);
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), RECORD_HEADER);
    let row = lines.next().unwrap();
    assert!(row.starts_with("Act_Sen_Rnd,5.00000000e0,2,0,0,3.00000000e0;4.00000000e0,"));
}

#[test]
fn unknown_scheme_is_config_error() {
    assert!(matches!("Act_Sen_Foo".parse::<Scheme>(), Err(Error::Config(_))));
    let bad = "[sweep]\nschemes = [\"Nope\"]\n";
    assert!(SimConfig::from_toml(bad).is_err());
}
