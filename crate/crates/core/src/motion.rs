//! Correlated random walk: an Ornstein-Uhlenbeck velocity process per axis,
//! integrated into position and sampled every `dt` seconds.
//!
//! With `a = e^{−δΔt}` and `φ = (1 − a)/δ` one step is
//!
//! ```text
//! v' = ω + a (v − ω) + n_v
//! p' = p + ω Δt + φ (v − ω) + n_p
//! ```
//!
//! where `(n_p, n_v)` per axis is the exact discretization noise of the
//! continuous process. For `ω = 0` the mean part is `T s`.

use nalgebra::{Matrix2, Matrix4, Vector4};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::{stream_rng, Stream};
use crate::scene::{Point, Region};
use crate::{Error, Result};

/// `[α, β, v_x, v_y]`
pub type KinematicState = Vector4<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionParams {
    /// Velocity autocorrelation rate δ (1/s).
    pub delta: f64,
    /// Diffusion coefficient ψ.
    pub psi: f64,
    /// Mean velocity ω (m/s).
    #[serde(default = "Point::zeros")]
    pub omega: Point,
    /// Step Δt (s).
    pub dt: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            delta: 1.5,
            psi: 0.5,
            omega: Point::zeros(),
            dt: 0.5,
        }
    }
}

impl MotionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::config("motion delta must be positive"));
        }
        if !(self.psi >= 0.0 && self.psi.is_finite()) {
            return Err(Error::config("motion psi must be non-negative"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("motion dt must be positive"));
        }
        if !(self.omega.x.is_finite() && self.omega.y.is_finite()) {
            return Err(Error::config("motion omega must be finite"));
        }
        Ok(())
    }

    /// `e^{−δΔt}`
    pub fn decay(&self) -> f64 {
        (-self.delta * self.dt).exp()
    }

    /// `(1 − e^{−δΔt}) / δ`
    pub fn phi(&self) -> f64 {
        // expm1 keeps precision when δΔt is tiny.
        -(-self.delta * self.dt).exp_m1() / self.delta
    }

    /// `ψ² / (2δ)`
    pub fn stationary_velocity_var(&self) -> f64 {
        self.psi * self.psi / (2.0 * self.delta)
    }

    /// Per-axis `[[Var_p, Cov], [Cov, Var_v]]`.
    pub fn axis_cov(&self) -> Matrix2<f64> {
        let (d, dt, a) = (self.delta, self.dt, self.decay());
        let q = self.psi * self.psi;
        let one_a = 1.0 - a;
        let one_a2 = 1.0 - a * a;
        let var_v = q * one_a2 / (2.0 * d);
        let var_p = (q / (d * d)) * (dt - 2.0 * one_a / d + one_a2 / (2.0 * d));
        let cov = q / (2.0 * d * d) * one_a * one_a;
        Matrix2::new(var_p.max(0.0), cov, cov, var_v)
    }
}

pub fn transition_matrix(p: &MotionParams) -> Matrix4<f64> {
    let (a, phi) = (p.decay(), p.phi());
    Matrix4::new(
        1.0, 0.0, phi, 0.0, //
        0.0, 1.0, 0.0, phi, //
        0.0, 0.0, a, 0.0, //
        0.0, 0.0, 0.0, a,
    )
}

pub fn process_noise_cov(p: &MotionParams) -> Matrix4<f64> {
    let c = p.axis_cov();
    let mut q = Matrix4::zeros();
    for axis in 0..2 {
        let (ip, iv) = (axis, axis + 2);
        q[(ip, ip)] = c[(0, 0)];
        q[(ip, iv)] = c[(0, 1)];
        q[(iv, ip)] = c[(1, 0)];
        q[(iv, iv)] = c[(1, 1)];
    }
    q
}

// Lower Cholesky factor of a 2×2 PSD matrix that tolerates zero entries.
fn chol2(c: &Matrix2<f64>) -> Matrix2<f64> {
    let l00 = c[(0, 0)].max(0.0).sqrt();
    let l10 = if l00 > 0.0 { c[(1, 0)] / l00 } else { 0.0 };
    let l11 = (c[(1, 1)] - l10 * l10).max(0.0).sqrt();
    Matrix2::new(l00, 0.0, l10, l11)
}

/// Noise-free part of a step.
pub fn mean_step(s: &KinematicState, p: &MotionParams) -> KinematicState {
    let (a, phi) = (p.decay(), p.phi());
    let mut out = *s;
    for axis in 0..2 {
        let w = p.omega[axis];
        let dv = s[axis + 2] - w;
        out[axis] = s[axis] + w * p.dt + phi * dv;
        out[axis + 2] = w + a * dv;
    }
    out
}

pub fn step_with<R: Rng + ?Sized>(s: &KinematicState, p: &MotionParams, rng: &mut R) -> KinematicState {
    let mut out = mean_step(s, p);
    if p.psi == 0.0 {
        return out;
    }
    let l = chol2(&p.axis_cov());
    for axis in 0..2 {
        let z0: f64 = StandardNormal.sample(rng);
        let z1: f64 = StandardNormal.sample(rng);
        out[axis] += l[(0, 0)] * z0;
        out[axis + 2] += l[(1, 0)] * z0 + l[(1, 1)] * z1;
    }
    out
}

/// One step with noise drawn from the `Motion` stream of `seed`.
pub fn step(s: &KinematicState, p: &MotionParams, seed: u64) -> KinematicState {
    let mut rng = stream_rng(seed, Stream::Motion);
    step_with(s, p, &mut rng)
}

/// Mirrors a state that left `region` back inside and flips the offending
/// velocity component.
pub fn reflect(s: &KinematicState, region: &Region) -> KinematicState {
    let mut out = *s;
    let bounds = [(region.x_min, region.x_max), (region.y_min, region.y_max)];
    for (axis, (lo, hi)) in bounds.into_iter().enumerate() {
        let mut x = out[axis];
        let mut flips = 0;
        // A single step rarely overshoots by more than the region, but loop
        // for safety.
        while !(lo..=hi).contains(&x) && flips < 16 {
            x = if x < lo { 2.0 * lo - x } else { 2.0 * hi - x };
            flips += 1;
        }
        out[axis] = x.clamp(lo, hi);
        if flips % 2 == 1 {
            out[axis + 2] = -out[axis + 2];
        }
    }
    out
}

/// Draws a velocity from the stationary distribution `N(ω, ψ²/(2δ) I)`.
pub fn stationary_velocity<R: Rng + ?Sized>(p: &MotionParams, rng: &mut R) -> Point {
    let sd = p.stationary_velocity_var().sqrt();
    let zx: f64 = StandardNormal.sample(rng);
    let zy: f64 = StandardNormal.sample(rng);
    p.omega + Point::new(zx, zy) * sd
}
