//! OTFS modulation for rectangular pulses.
//!
//! A delay-Doppler grid `D` (M delay bins × N Doppler bins) is vectorized
//! column by column, `d[l + kM] = D[l, k]`. With `P_tx = P_rx = I_M` the
//! transmitter computes `s = (F_N^H ⊗ I_M) d`, i.e. a unitary inverse DFT of
//! length N along the Doppler axis of every delay row, and the receiver
//! applies `y = (F_N ⊗ I_M) r`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::operator::{LinearOperator, TimeShift};
use crate::qam::Constellation;
use crate::{Cplx, Error, Result};

/// Transmit/receive pulse. Only rectangular pulses are built in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pulse {
    #[default]
    Rectangular,
}

/// Frame numerology. The symbol duration is always `1 / delta_f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameConfig {
    /// Delay bins.
    #[serde(rename = "M", alias = "m")]
    pub m: usize,
    /// Doppler bins.
    #[serde(rename = "N", alias = "n")]
    pub n: usize,
    /// Subcarrier spacing (Hz).
    pub delta_f: f64,
    /// Carrier frequency (Hz).
    pub f_c: f64,
    /// Optional symbol duration; must equal `1 / delta_f` when given.
    #[serde(rename = "T_sym", skip_serializing_if = "Option::is_none")]
    pub declared_t_sym: Option<f64>,
    pub modulation_order: usize,
    pub pulse: Pulse,
    /// Cyclic prefix length in samples. Only reported as rate overhead; the
    /// signal model is the CP-free cyclic one.
    pub cyclic_prefix: usize,
    /// Grid position `(l_p, k_p)` of the superimposed pilot.
    pub pilot_pos: Option<(usize, usize)>,
    /// Average pilot power σ_P².
    pub pilot_power: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            m: 256,
            n: 16,
            delta_f: 240e3,
            f_c: 30e9,
            declared_t_sym: None,
            modulation_order: 4,
            pulse: Pulse::Rectangular,
            cyclic_prefix: 64,
            pilot_pos: None,
            pilot_power: 1.0,
        }
    }
}

impl FrameConfig {
    pub fn new(m: usize, n: usize, delta_f: f64, f_c: f64) -> Self {
        Self {
            m,
            n,
            delta_f,
            f_c,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 || self.n < 2 {
            return Err(Error::config(format!(
                "grid must be at least 2x2, got {}x{}",
                self.m, self.n
            )));
        }
        if !(self.delta_f > 0.0 && self.delta_f.is_finite()) {
            return Err(Error::config("delta_f must be positive"));
        }
        if !(self.f_c > 0.0 && self.f_c.is_finite()) {
            return Err(Error::config("f_c must be positive"));
        }
        if let Some(t) = self.declared_t_sym {
            if (t * self.delta_f - 1.0).abs() > 1e-9 {
                return Err(Error::config(format!("T_sym = {t} s is not 1/delta_f")));
            }
        }
        Constellation::new(self.modulation_order)?;
        let (lp, kp) = self.pilot_position();
        if lp >= self.m || kp >= self.n {
            return Err(Error::config(format!("pilot position ({lp}, {kp}) outside grid")));
        }
        if !(self.pilot_power >= 0.0 && self.pilot_power.is_finite()) {
            return Err(Error::config("pilot_power must be non-negative"));
        }
        Ok(())
    }

    /// Number of samples per frame, `M·N`.
    pub fn len(&self) -> usize {
        self.m * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn t_sym(&self) -> f64 {
        1.0 / self.delta_f
    }

    pub fn sample_rate(&self) -> f64 {
        self.m as f64 * self.delta_f
    }

    /// Delay of one delay bin, `1 / (M Δf)` seconds.
    pub fn delay_resolution(&self) -> f64 {
        1.0 / self.sample_rate()
    }

    /// Doppler of one Doppler bin, `1 / (N T)` Hz.
    pub fn doppler_resolution(&self) -> f64 {
        self.delta_f / self.n as f64
    }

    pub fn pilot_position(&self) -> (usize, usize) {
        self.pilot_pos.unwrap_or((self.m / 2, self.n / 2))
    }

    pub fn constellation(&self) -> Result<Constellation> {
        Constellation::new(self.modulation_order)
    }

    /// Fraction of transmitted samples spent on the cyclic prefix.
    pub fn cp_overhead(&self) -> f64 {
        let per_symbol = self.m + self.cyclic_prefix;
        self.cyclic_prefix as f64 / per_symbol as f64
    }
}

/// Delay-Doppler frame: information grid plus a single-entry pilot.
#[derive(Debug, Clone, PartialEq)]
pub struct DdFrame {
    m: usize,
    n: usize,
    data: Vec<Cplx>,
    pilot_pos: (usize, usize),
    pilot_power: f64,
}

impl DdFrame {
    pub fn new(data: Vec<Cplx>, pilot_pos: (usize, usize), pilot_power: f64, cfg: &FrameConfig) -> Result<Self> {
        if data.len() != cfg.len() {
            return Err(Error::config(format!(
                "data grid has {} entries, expected {}",
                data.len(),
                cfg.len()
            )));
        }
        if pilot_pos.0 >= cfg.m || pilot_pos.1 >= cfg.n {
            return Err(Error::config("pilot position outside grid"));
        }
        if !(pilot_power >= 0.0 && pilot_power.is_finite()) {
            return Err(Error::config("pilot power must be non-negative"));
        }
        Ok(Self {
            m: cfg.m,
            n: cfg.n,
            data,
            pilot_pos,
            pilot_power,
        })
    }

    /// Frame with an all-zero information grid.
    pub fn pilot_only(cfg: &FrameConfig) -> Result<Self> {
        Self::new(
            vec![Cplx::default(); cfg.len()],
            cfg.pilot_position(),
            cfg.pilot_power,
            cfg,
        )
    }

    /// Random QAM information grid with the configured pilot. Returns the
    /// frame and the bits it carries.
    pub fn random<R: Rng + ?Sized>(cfg: &FrameConfig, rng: &mut R) -> Result<(Self, Vec<u8>)> {
        let qam = cfg.constellation()?;
        let bits: Vec<u8> = (0..cfg.len() * qam.bits_per_symbol())
            .map(|_| rng.random_range(0..2u8))
            .collect();
        let data = qam.map(&bits)?;
        let frame = Self::new(data, cfg.pilot_position(), cfg.pilot_power, cfg)?;
        Ok((frame, bits))
    }

    pub fn index(&self, l: usize, k: usize) -> usize {
        l + k * self.m
    }

    pub fn data(&self) -> &[Cplx] {
        &self.data
    }

    pub fn pilot_pos(&self) -> (usize, usize) {
        self.pilot_pos
    }

    pub fn pilot_power(&self) -> f64 {
        self.pilot_power
    }

    /// `sqrt(M N σ_P²)`
    pub fn pilot_amplitude(&self) -> f64 {
        ((self.m * self.n) as f64 * self.pilot_power).sqrt()
    }

    /// `vec(D_P)`
    pub fn pilot_vector(&self) -> Vec<Cplx> {
        let mut v = vec![Cplx::default(); self.m * self.n];
        v[self.index(self.pilot_pos.0, self.pilot_pos.1)] = Cplx::new(self.pilot_amplitude(), 0.0);
        v
    }

    /// `vec(D_I + D_P)`
    pub fn combined(&self) -> Vec<Cplx> {
        let mut v = self.data.clone();
        v[self.index(self.pilot_pos.0, self.pilot_pos.1)] += Cplx::new(self.pilot_amplitude(), 0.0);
        v
    }
}

/// OTFS modulator/demodulator with cached FFT plans.
#[derive(Clone)]
pub struct Modem {
    m: usize,
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Modem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Modem").field("m", &self.m).field("n", &self.n).finish()
    }
}

impl Modem {
    pub fn new(cfg: &FrameConfig) -> Result<Self> {
        if cfg.m < 2 || cfg.n < 2 {
            return Err(Error::config("grid must be at least 2x2"));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            m: cfg.m,
            n: cfg.n,
            forward: planner.plan_fft_forward(cfg.n),
            inverse: planner.plan_fft_inverse(cfg.n),
        })
    }

    pub fn len(&self) -> usize {
        self.m * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `s = (F_N^H ⊗ I_M) d`
    pub fn modulate(&self, d: &[Cplx]) -> Result<Vec<Cplx>> {
        self.check(d)?;
        Ok(self.rows(d, &*self.inverse))
    }

    /// `y = (F_N ⊗ I_M) r`
    pub fn demodulate(&self, r: &[Cplx]) -> Result<Vec<Cplx>> {
        self.check(r)?;
        Ok(self.rows(r, &*self.forward))
    }

    fn check(&self, x: &[Cplx]) -> Result<()> {
        if x.len() != self.len() {
            return Err(Error::config(format!(
                "vector has {} samples, expected {}",
                x.len(),
                self.len()
            )));
        }
        Ok(())
    }

    // Length-N DFT over the samples l, l+M, l+2M, ... of every row l.
    fn rows(&self, x: &[Cplx], fft: &dyn Fft<f64>) -> Vec<Cplx> {
        let scale = (self.n as f64).sqrt().recip();
        let mut out = vec![Cplx::default(); x.len()];
        let mut buf = vec![Cplx::default(); self.n];
        let mut scratch = vec![Cplx::default(); fft.get_inplace_scratch_len()];
        for l in 0..self.m {
            for (k, b) in buf.iter_mut().enumerate() {
                *b = x[l + k * self.m];
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for (k, b) in buf.iter().enumerate() {
                out[l + k * self.m] = b * scale;
            }
        }
        out
    }
}

pub fn modulate(frame: &DdFrame, cfg: &FrameConfig) -> Result<Vec<Cplx>> {
    if frame.m != cfg.m || frame.n != cfg.n {
        return Err(Error::config("frame dimensions do not match configuration"));
    }
    Modem::new(cfg)?.modulate(&frame.combined())
}

pub fn demodulate(r: &[Cplx], cfg: &FrameConfig) -> Result<Vec<Cplx>> {
    Modem::new(cfg)?.demodulate(r)
}

/// Delay-Doppler operator `T(l, k) = (F_N ⊗ I) Π^l Δ^k (F_N^H ⊗ I)`.
#[derive(Debug, Clone)]
pub struct DdShift {
    modem: Modem,
    shift: TimeShift,
}

impl DdShift {
    pub fn time_shift(&self) -> &TimeShift {
        &self.shift
    }
}

impl LinearOperator for DdShift {
    fn dim(&self) -> usize {
        self.modem.len()
    }

    fn apply(&self, x: &[Cplx]) -> Vec<Cplx> {
        let s = self.modem.modulate(x).expect("length checked by caller");
        self.modem.demodulate(&self.shift.shift(&s)).expect("same length")
    }

    fn apply_adjoint(&self, x: &[Cplx]) -> Vec<Cplx> {
        let r = self.modem.modulate(x).expect("length checked by caller");
        self.modem
            .demodulate(&self.shift.apply_adjoint(&r))
            .expect("same length")
    }
}

/// Builds `T(l, k)`. The delay must be an integer number of samples; the
/// Doppler may be fractional.
pub fn dd_operator(l: f64, k: f64, cfg: &FrameConfig) -> Result<DdShift> {
    if l.fract() != 0.0 || l < 0.0 {
        return Err(Error::input(format!("delay {l} is not a non-negative integer")));
    }
    let modem = Modem::new(cfg)?;
    let shift = TimeShift::new(l as usize, k, cfg.len())?;
    Ok(DdShift { modem, shift })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{distance, norm};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn cfg(m: usize, n: usize) -> FrameConfig {
        FrameConfig::new(m, n, 15e3, 4e9)
    }

    fn random_vec(len: usize, seed: u64) -> Vec<Cplx> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len)
            .map(|_| Cplx::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
            .collect()
    }

    // Independent dense construction of F_N ⊗ I_M.
    fn dft_kron_identity(m: usize, n: usize, inverse: bool) -> DMatrix<Cplx> {
        let sign = if inverse { 1.0 } else { -1.0 };
        let f = DMatrix::from_fn(n, n, |r, c| {
            Cplx::cis(sign * 2.0 * std::f64::consts::PI * (r * c) as f64 / n as f64) / (n as f64).sqrt()
        });
        f.kronecker(&DMatrix::<Cplx>::identity(m, m))
    }

    fn mat_vec(a: &DMatrix<Cplx>, x: &[Cplx]) -> Vec<Cplx> {
        (a * nalgebra::DVector::from_column_slice(x)).iter().copied().collect()
    }

    #[test]
    fn zero_frame_modulates_to_zero() {
        let c = cfg(4, 4);
        let modem = Modem::new(&c).unwrap();
        let s = modem.modulate(&vec![Cplx::default(); 16]).unwrap();
        assert!(s.iter().all(|x| x.norm() == 0.0));
        let y = modem.demodulate(&vec![Cplx::default(); 16]).unwrap();
        assert!(y.iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn pilot_energy_is_preserved() {
        let mut c = cfg(4, 4);
        c.pilot_power = 1.0;
        let frame = DdFrame::pilot_only(&c).unwrap();
        let s = modulate(&frame, &c).unwrap();
        let e: f64 = s.iter().map(|x| x.norm_sqr()).sum();
        assert!((e - 16.0).abs() < 1e-12);
        assert!((frame.pilot_amplitude() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn matches_dense_kronecker() {
        let c = cfg(4, 2);
        let modem = Modem::new(&c).unwrap();
        let d = random_vec(8, 1);
        let s = modem.modulate(&d).unwrap();
        let want = mat_vec(&dft_kron_identity(4, 2, true), &d);
        assert!(distance(&s, &want) < 1e-12);

        let r = random_vec(8, 2);
        let y = modem.demodulate(&r).unwrap();
        let want = mat_vec(&dft_kron_identity(4, 2, false), &r);
        assert!(distance(&y, &want) < 1e-12);
    }

    #[test]
    fn round_trip_and_unitarity() {
        let c = cfg(16, 8);
        let modem = Modem::new(&c).unwrap();
        for seed in 0..10 {
            let d = random_vec(c.len(), seed);
            let s = modem.modulate(&d).unwrap();
            assert!((norm(&s) - norm(&d)).abs() < 1e-10 * norm(&d));
            let back = modem.demodulate(&s).unwrap();
            assert!(distance(&back, &d) < 1e-10);
        }
    }

    #[test]
    fn length_mismatch_is_config_error() {
        let modem = Modem::new(&cfg(4, 4)).unwrap();
        assert!(matches!(modem.modulate(&[Cplx::default(); 15]), Err(Error::Config(_))));
        assert!(matches!(
            modem.demodulate(&[Cplx::default(); 17]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn identity_and_impulse_shift() {
        let c = cfg(4, 4);
        let v = random_vec(16, 3);
        let t0 = dd_operator(0.0, 0.0, &c).unwrap();
        assert!(distance(&t0.apply(&v), &v) < 1e-12);

        let t = dd_operator(5.0, 0.0, &c).unwrap();
        let mut imp = vec![Cplx::default(); 16];
        imp[0] = Cplx::new(1.0, 0.0);
        let out = t.time_shift().shift(&imp);
        assert_eq!(out[5], Cplx::new(1.0, 0.0));
        assert!(dd_operator(1.5, 0.0, &c).is_err());
    }

    #[test]
    fn dd_operator_matches_dense_construction() {
        let c = cfg(4, 2);
        let len = c.len();
        let t = dd_operator(2.0, 1.0, &c).unwrap();
        let mut pi = DMatrix::<Cplx>::zeros(len, len);
        let mut delta = DMatrix::<Cplx>::zeros(len, len);
        for n in 0..len {
            pi[((n + 1) % len, n)] = Cplx::new(1.0, 0.0);
            delta[(n, n)] = Cplx::cis(2.0 * std::f64::consts::PI * n as f64 / len as f64);
        }
        let dense = dft_kron_identity(4, 2, false) * &pi * &pi * delta * dft_kron_identity(4, 2, true);
        assert!((dense - t.to_dense()).norm() < 1e-12);
    }

    #[test]
    fn delay_composition() {
        let c = cfg(4, 2);
        let a = dd_operator(3.0, 0.0, &c).unwrap().to_dense();
        let b = dd_operator(6.0, 0.0, &c).unwrap().to_dense();
        let ab = dd_operator(1.0, 0.0, &c).unwrap().to_dense();
        assert!((a * b - ab).norm() < 1e-12);
    }

    #[test]
    fn frame_validation() {
        let c = cfg(4, 4);
        assert!(DdFrame::new(vec![Cplx::default(); 15], (0, 0), 1.0, &c).is_err());
        assert!(DdFrame::new(vec![Cplx::default(); 16], (4, 0), 1.0, &c).is_err());
        let mut bad = c.clone();
        bad.m = 1;
        assert!(bad.validate().is_err());
        assert_eq!(c.t_sym() * c.delta_f, 1.0);
    }
}
