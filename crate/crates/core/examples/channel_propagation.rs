//! Pass a pilot-only frame through a two-path channel and locate where its
//! energy lands on the delay-Doppler grid.

use num_complex::Complex64;
use otfs_isac::channel::{apply_channel, effective_dd_channel, ChannelPath, ChannelRealization};
use otfs_isac::modem::{demodulate, modulate, DdFrame, FrameConfig};
use otfs_isac::operator::{distance, LinearOperator};

fn main() -> otfs_isac::Result<()> {
    let cfg = FrameConfig::new(32, 8, 240e3, 30e9);
    let paths = vec![
        ChannelPath::from_indices(Complex64::new(1.0, 0.0), 3, 1.0, &cfg),
        ChannelPath::from_physical(Complex64::from_polar(0.5, 1.0), 1.0e-6, -30e3, &cfg)?,
    ];
    for p in &paths {
        println!(
            "path: delay {:.3} us -> bin {}, Doppler {:.1} Hz -> bin {:.2}",
            p.delay_s * 1e6,
            p.delay_idx,
            p.doppler_hz,
            p.doppler_idx
        );
    }
    let ch = ChannelRealization::new(paths, 0.0);
    let frame = DdFrame::pilot_only(&cfg)?;
    let y = demodulate(&apply_channel(&modulate(&frame, &cfg)?, &ch, 0)?, &cfg)?;
    let h = effective_dd_channel(&ch, &cfg)?;
    println!(
        "time pipeline vs DD operator: {:.2e}",
        distance(&y, &h.apply(&frame.combined()))
    );

    let (pl, pk) = frame.pilot_pos();
    let mut cells: Vec<(usize, f64)> = y.iter().map(|v| v.norm()).enumerate().collect();
    cells.sort_by(|a, b| b.1.total_cmp(&a.1));
    println!("pilot at (l={pl}, k={pk}); strongest received cells:");
    for (i, mag) in cells.iter().take(4) {
        println!("  l={:2} k={:2} |y|={:.2}", i % cfg.m, i / cfg.m, mag);
    }
    Ok(())
}
