//! Modulate a random 4-QAM delay-Doppler frame and demodulate it again.

use otfs_isac::modem::{DdFrame, FrameConfig, Modem};
use otfs_isac::operator::{distance, norm};
use rand::SeedableRng;

fn main() -> otfs_isac::Result<()> {
    let cfg = FrameConfig::new(64, 16, 240e3, 30e9);
    let modem = Modem::new(&cfg)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let (frame, bits) = DdFrame::random(&cfg, &mut rng)?;
    let d = frame.combined();
    let s = modem.modulate(&d)?;
    let back = modem.demodulate(&s)?;
    println!(
        "grid {}x{}, {} bits, T_sym {:.3} us",
        cfg.m,
        cfg.n,
        bits.len(),
        cfg.t_sym() * 1e6
    );
    println!("energy in {:.6}, out {:.6}", norm(&d), norm(&s));
    println!("round-trip error {:.2e}", distance(&back, &d));
    println!("cyclic prefix overhead {:.1}%", 100.0 * cfg.cp_overhead());
    Ok(())
}
