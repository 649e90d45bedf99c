//! Recover three paths from a noisy observation with the correlation search.

use num_complex::Complex64;
use otfs_isac::channel::{apply_channel, snr_to_noise_var, ChannelPath, ChannelRealization};
use otfs_isac::estimator::{PathEstimator, Refinement, SearchGrid};
use otfs_isac::modem::{demodulate, modulate, DdFrame, FrameConfig};
use rand::SeedableRng;

fn main() -> otfs_isac::Result<()> {
    let cfg = FrameConfig::new(64, 16, 240e3, 30e9);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let (frame, _) = DdFrame::random(&cfg, &mut rng)?;
    let truth = vec![
        ChannelPath::from_indices(Complex64::from_polar(1.0, 0.3), 5, 0.4, &cfg),
        ChannelPath::from_indices(Complex64::from_polar(0.7, -1.2), 12, -0.8, &cfg),
        ChannelPath::from_indices(Complex64::from_polar(0.4, 2.0), 20, 1.1, &cfg),
    ];
    let ch = ChannelRealization::new(truth.clone(), snr_to_noise_var(-5.0, 1.0 + cfg.pilot_power));
    let y = demodulate(&apply_channel(&modulate(&frame, &cfg)?, &ch, 11)?, &cfg)?;

    let grid = SearchGrid::uniform(30, 2.0, 0.1, Refinement::Parabolic)?;
    let est = PathEstimator::new(&cfg, grid)?;
    let out = est.estimate(&y, &frame.combined(), 3)?;
    println!("status {:?}, {} correlation ops", out.status, out.correlation_ops);
    for t in &truth {
        println!(
            "truth     l={:2} k={:+.2} |h|={:.2}",
            t.delay_idx,
            t.doppler_idx,
            t.gain.norm()
        );
    }
    for e in &out.estimates {
        println!(
            "estimate  l={:2} k={:+.2} |h|={:.2}",
            e.delay_idx,
            e.doppler_idx,
            e.gain.norm()
        );
    }
    Ok(())
}
