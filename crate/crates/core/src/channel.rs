//! Doubly-selective channel `H = Σ_q h_q Π^{l_q} Δ^{k_q}` with additive
//! circular Gaussian noise, and its delay-Doppler equivalent
//! `H̄ = Σ_q h_q T(l_q, k_q)`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::modem::{FrameConfig, Modem};
use crate::operator::{LinearOperator, TimeShift};
use crate::rng::{stream_rng, Stream};
use crate::{Cplx, Error, Result};

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelPath {
    pub gain: Cplx,
    pub delay_s: f64,
    pub doppler_hz: f64,
    /// `round(τ M Δf)`
    pub delay_idx: usize,
    /// `ν N T`, fractional.
    pub doppler_idx: f64,
}

impl ChannelPath {
    /// Path from physical delay and Doppler. The delay is rounded to the
    /// nearest sample.
    pub fn from_physical(gain: Cplx, delay_s: f64, doppler_hz: f64, cfg: &FrameConfig) -> Result<Self> {
        if !(delay_s >= 0.0 && delay_s.is_finite()) || !doppler_hz.is_finite() {
            return Err(Error::Channel(format!(
                "path delay {delay_s} s / doppler {doppler_hz} Hz not representable"
            )));
        }
        let l = (delay_s * cfg.sample_rate()).round();
        if l >= cfg.len() as f64 {
            return Err(Error::Channel(format!(
                "delay {delay_s} s maps to sample {l}, beyond frame of {}",
                cfg.len()
            )));
        }
        Ok(Self {
            gain,
            delay_s,
            doppler_hz,
            delay_idx: l as usize,
            doppler_idx: doppler_hz * cfg.n as f64 * cfg.t_sym(),
        })
    }

    /// Path given directly on the grid.
    pub fn from_indices(gain: Cplx, delay_idx: usize, doppler_idx: f64, cfg: &FrameConfig) -> Self {
        Self {
            gain,
            delay_s: delay_idx as f64 * cfg.delay_resolution(),
            doppler_hz: doppler_idx * cfg.doppler_resolution(),
            delay_idx,
            doppler_idx,
        }
    }
}

/// A set of paths seen by one receiver plus its noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub paths: Vec<ChannelPath>,
    /// Per complex sample noise variance σ².
    pub noise_var: f64,
}

impl ChannelRealization {
    pub fn new(paths: Vec<ChannelPath>, noise_var: f64) -> Self {
        Self { paths, noise_var }
    }

    pub fn validate(&self, cfg: &FrameConfig) -> Result<()> {
        if self.paths.is_empty() {
            return Err(Error::Channel("channel has no paths".into()));
        }
        if !(self.noise_var >= 0.0 && self.noise_var.is_finite()) {
            return Err(Error::Channel(format!("noise variance {} invalid", self.noise_var)));
        }
        let half_n = cfg.n as f64 / 2.0;
        for (q, p) in self.paths.iter().enumerate() {
            if p.delay_idx >= cfg.len() {
                return Err(Error::Channel(format!(
                    "path {q}: delay index {} outside 0..{}",
                    p.delay_idx,
                    cfg.len()
                )));
            }
            if !(p.doppler_idx.abs() < half_n) {
                return Err(Error::Channel(format!(
                    "path {q}: doppler index {} outside (-N/2, N/2)",
                    p.doppler_idx
                )));
            }
            if !(p.gain.norm() > 0.0 && p.gain.norm().is_finite()) {
                return Err(Error::Channel(format!("path {q}: gain must be finite and nonzero")));
            }
        }
        Ok(())
    }

    fn shifts(&self, len: usize) -> Result<Vec<(Cplx, TimeShift)>> {
        self.paths
            .iter()
            .map(|p| {
                TimeShift::new(p.delay_idx, p.doppler_idx, len)
                    .map(|t| (p.gain, t))
                    .map_err(|e| Error::Channel(e.to_string()))
            })
            .collect()
    }
}

/// `σ² = P_s / 10^(snr/10)`. An infinite SNR gives zero noise.
pub fn snr_to_noise_var(snr_db: f64, signal_power: f64) -> f64 {
    if snr_db == f64::INFINITY {
        return 0.0;
    }
    signal_power / 10f64.powf(snr_db / 10.0)
}

/// Adds `CN(0, var)` samples to `x`.
pub fn add_noise<R: Rng + ?Sized>(x: &mut [Cplx], var: f64, rng: &mut R) {
    if var == 0.0 {
        return;
    }
    let s = (var / 2.0).sqrt();
    for v in x.iter_mut() {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *v += Cplx::new(re * s, im * s);
    }
}

/// `r = H s + n`, noise drawn from the `Noise` stream of `seed`.
pub fn apply_channel(s: &[Cplx], ch: &ChannelRealization, seed: u64) -> Result<Vec<Cplx>> {
    let mut rng = stream_rng(seed, Stream::Noise);
    apply_channel_with(s, ch, &mut rng)
}

pub fn apply_channel_with<R: Rng + ?Sized>(s: &[Cplx], ch: &ChannelRealization, rng: &mut R) -> Result<Vec<Cplx>> {
    let mut r = vec![Cplx::default(); s.len()];
    for (g, t) in ch.shifts(s.len())? {
        t.accumulate(s, g, &mut r);
    }
    if !(ch.noise_var >= 0.0) {
        return Err(Error::Channel("negative noise variance".into()));
    }
    add_noise(&mut r, ch.noise_var, rng);
    Ok(r)
}

/// Noise-free time-domain channel `Σ h Π^l Δ^k`.
#[derive(Debug, Clone)]
pub struct TimeChannel {
    taps: Vec<(Cplx, TimeShift)>,
    len: usize,
}

impl TimeChannel {
    pub fn new(ch: &ChannelRealization, len: usize) -> Result<Self> {
        Ok(Self {
            taps: ch.shifts(len)?,
            len,
        })
    }
}

impl LinearOperator for TimeChannel {
    fn dim(&self) -> usize {
        self.len
    }

    fn apply(&self, x: &[Cplx]) -> Vec<Cplx> {
        let mut out = vec![Cplx::default(); self.len];
        for (g, t) in &self.taps {
            t.accumulate(x, *g, &mut out);
        }
        out
    }

    fn apply_adjoint(&self, x: &[Cplx]) -> Vec<Cplx> {
        let mut out = vec![Cplx::default(); self.len];
        for (g, t) in &self.taps {
            t.accumulate_adjoint(x, g.conj(), &mut out);
        }
        out
    }
}

/// Delay-Doppler channel `H̄ = (F_N ⊗ I) H (F_N^H ⊗ I)`.
#[derive(Debug, Clone)]
pub struct EffectiveChannel {
    modem: Modem,
    time: TimeChannel,
}

impl EffectiveChannel {
    pub fn time_channel(&self) -> &TimeChannel {
        &self.time
    }
}

impl LinearOperator for EffectiveChannel {
    fn dim(&self) -> usize {
        self.time.len
    }

    fn apply(&self, x: &[Cplx]) -> Vec<Cplx> {
        let s = self.modem.modulate(x).expect("dimension fixed at construction");
        self.modem.demodulate(&self.time.apply(&s)).expect("same length")
    }

    fn apply_adjoint(&self, x: &[Cplx]) -> Vec<Cplx> {
        let s = self.modem.modulate(x).expect("dimension fixed at construction");
        self.modem
            .demodulate(&self.time.apply_adjoint(&s))
            .expect("same length")
    }
}

pub fn effective_dd_channel(ch: &ChannelRealization, cfg: &FrameConfig) -> Result<EffectiveChannel> {
    if ch.paths.is_empty() {
        return Err(Error::Channel("channel has no paths".into()));
    }
    Ok(EffectiveChannel {
        modem: Modem::new(cfg)?,
        time: TimeChannel::new(ch, cfg.len())?,
    })
}
