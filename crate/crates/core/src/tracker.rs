//! Kalman filtering of the fused measurements and the tracking loop that
//! alternates motion, sensing, fusion and filtering.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::motion::{process_noise_cov, reflect, step_with, transition_matrix, KinematicState, MotionParams};
use crate::rng::{stream_rng, sub_seed, Stream};
use crate::scene::TargetTruth;
use crate::sensing::{draw_gains, sense, GainModel, SensingContext};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub s_a: Vector4<f64>,
    pub p: Matrix4<f64>,
    pub t: Matrix4<f64>,
    pub v: Matrix4<f64>,
    pub q: Matrix4<f64>,
    /// Covariance of the last measurement used.
    pub r: Matrix4<f64>,
}

impl FilterState {
    /// State from a first measurement: `s = z`, `P = p0_scale · R`.
    pub fn from_measurement(z: &Measurement, motion: &MotionParams, p0_scale: f64) -> Self {
        Self {
            s_a: z.z,
            p: z.r * p0_scale,
            t: transition_matrix(motion),
            v: Matrix4::identity(),
            q: process_noise_cov(motion),
            r: z.r,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub z: Vector4<f64>,
    pub r: Matrix4<f64>,
    pub timestamp: f64,
}

/// Multiply-add counter for the filter's matrix products and solves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCount(pub u64);

impl OpCount {
    fn mul(&mut self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.0 += (a.nrows() * a.ncols() * b.ncols()) as u64;
        a * b
    }
}

/// Output of one generic update.
#[derive(Debug, Clone, PartialEq)]
pub struct KfStep {
    pub s: DVector<f64>,
    pub p: DMatrix<f64>,
    pub innovation: DVector<f64>,
    /// `ν^T S^{-1} ν`
    pub nis: f64,
}

// Inverse of the innovation covariance: Cholesky first, LU as fallback.
fn invert_spd(s: &DMatrix<f64>, ops: &mut OpCount) -> Result<DMatrix<f64>> {
    let m = s.nrows();
    ops.0 += (m * m * m) as u64;
    if let Some(ch) = s.clone().cholesky() {
        return Ok(ch.inverse());
    }
    s.clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularInnovation(format!("innovation covariance not invertible: {s}")))
}

/// Prediction, gain and Joseph-form update for any state size `n` and
/// measurement size `m`.
#[allow(clippy::too_many_arguments)]
pub fn kf_step_dyn(
    s_a: &DVector<f64>,
    p: &DMatrix<f64>,
    t: &DMatrix<f64>,
    v: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    z: &DVector<f64>,
    ops: &mut OpCount,
) -> Result<KfStep> {
    let n = s_a.len();
    let s_f = t * s_a;
    ops.0 += (n * n) as u64;
    let tp = ops.mul(t, p);
    let p_f = ops.mul(&tp, &t.transpose()) + q;
    let pvt = ops.mul(&p_f, &v.transpose());
    let s = ops.mul(v, &pvt) + r;
    let s_inv = invert_spd(&s, ops)?;
    let k = ops.mul(&pvt, &s_inv);
    let innovation = z - v * &s_f;
    ops.0 += (v.nrows() * n) as u64;
    let s_new = &s_f + &k * &innovation;
    ops.0 += (n * v.nrows()) as u64;
    let i_kv = DMatrix::identity(n, n) - ops.mul(&k, v);
    let a = ops.mul(&i_kv, &p_f);
    let joseph = ops.mul(&a, &i_kv.transpose());
    let kr = ops.mul(&k, r);
    let krk = ops.mul(&kr, &k.transpose());
    let mut p_new = joseph + krk;
    p_new = (&p_new + p_new.transpose()) * 0.5;
    let nis = (innovation.transpose() * &s_inv * &innovation)[(0, 0)];
    Ok(KfStep {
        s: s_new,
        p: p_new,
        innovation,
        nis,
    })
}

fn dyn4(m: &Matrix4<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(4, 4, m.as_slice())
}

fn dvec4(v: &Vector4<f64>) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

/// One full filter cycle; also returns the normalized innovation squared.
pub fn kf_update_with_nis(prev: &FilterState, z: &Measurement) -> Result<(FilterState, f64)> {
    let mut ops = OpCount::default();
    let out = kf_step_dyn(
        &dvec4(&prev.s_a),
        &dyn4(&prev.p),
        &dyn4(&prev.t),
        &dyn4(&prev.v),
        &dyn4(&prev.q),
        &dyn4(&z.r),
        &dvec4(&z.z),
        &mut ops,
    )?;
    let state = FilterState {
        s_a: Vector4::from_column_slice(out.s.as_slice()),
        p: Matrix4::from_column_slice(out.p.as_slice()),
        r: z.r,
        ..prev.clone()
    };
    Ok((state, out.nis))
}

pub fn kf_update(prev: &FilterState, z: &Measurement) -> Result<FilterState> {
    kf_update_with_nis(prev, z).map(|(s, _)| s)
}

/// Time update only, for steps without a measurement.
pub fn kf_predict(prev: &FilterState) -> FilterState {
    let p = prev.t * prev.p * prev.t.transpose() + prev.q;
    FilterState {
        s_a: prev.t * prev.s_a,
        p: (p + p.transpose()) * 0.5,
        ..prev.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    /// Initial covariance as a multiple of the first measurement's R.
    pub p0_scale: f64,
    /// Scales the process covariance given to the filter; 1 is matched.
    pub q_scale: f64,
    pub gain_model: GainModel,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            p0_scale: 4.0,
            q_scale: 1.0,
            gain_model: GainModel::UnitRandomPhase,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p0_scale > 0.0) || !(self.q_scale >= 0.0) {
            return Err(Error::config("p0_scale must be positive and q_scale non-negative"));
        }
        Ok(())
    }
}

/// What happened to one target at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub target: usize,
    pub truth: KinematicState,
    /// Fused measurement, if fusion succeeded.
    pub raw: Option<Vector4<f64>>,
    /// Filter posterior once the track is initialized.
    pub posterior: Option<Vector4<f64>>,
    pub trace_p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingRun {
    pub steps: Vec<StepRecord>,
    /// Steps where fusion failed and only the prediction ran.
    pub dropouts: usize,
}

/// Moves the targets `steps` times; after every move each node senses the
/// scene, the fused measurement of each target feeds its Kalman filter.
///
/// Randomness: motion uses the `Motion` stream of `seed`, path phases the
/// `Gains` stream, and step `t` senses with `sub_seed(seed, t)`.
pub fn run_tracking_loop(
    ctx: &SensingContext,
    targets: &[TargetTruth],
    motion: &MotionParams,
    cfg: &TrackerConfig,
    steps: usize,
    seed: u64,
) -> Result<TrackingRun> {
    motion.validate()?;
    cfg.validate()?;
    let mut truth: Vec<KinematicState> = targets
        .iter()
        .map(|t| KinematicState::new(t.position.x, t.position.y, t.velocity.x, t.velocity.y))
        .collect();
    let gains = draw_gains(cfg.gain_model, ctx.nodes.z() + 1, targets.len(), seed);
    let mut motion_rng = stream_rng(seed, Stream::Motion);
    let model = MotionParams { ..*motion };
    let q = process_noise_cov(&model) * cfg.q_scale;
    let mut filters: Vec<Option<FilterState>> = vec![None; targets.len()];
    let mut records = Vec::with_capacity(steps * targets.len());
    let mut dropouts = 0;

    for t in 1..=steps {
        for s in truth.iter_mut() {
            *s = reflect(&step_with(s, motion, &mut motion_rng), &ctx.nodes.region);
        }
        let scene: Vec<TargetTruth> = truth
            .iter()
            .map(|s| TargetTruth::new(s.xy(), nalgebra::Vector2::new(s[2], s[3])))
            .collect();
        let outcome = sense(ctx, &scene, &gains, sub_seed(seed, t as u64))?;
        for (i, m) in outcome.measurements.iter().enumerate() {
            let meas = m.as_ref().map(|m| Measurement {
                z: m.z,
                r: m.r,
                timestamp: t as f64 * motion.dt,
            });
            let next = match (&filters[i], &meas) {
                (None, Some(z)) => {
                    let mut f = FilterState::from_measurement(z, motion, cfg.p0_scale);
                    f.q = q;
                    Some(f)
                }
                (None, None) => None,
                (Some(f), Some(z)) => Some(kf_update(f, z)?),
                (Some(f), None) => {
                    dropouts += 1;
                    Some(kf_predict(f))
                }
            };
            if meas.is_none() && filters[i].is_none() {
                dropouts += 1;
            }
            filters[i] = next;
            records.push(StepRecord {
                t,
                target: i,
                truth: truth[i],
                raw: meas.map(|m| m.z),
                posterior: filters[i].as_ref().map(|f| f.s_a),
                trace_p: filters[i].as_ref().map_or(f64::NAN, |f| f.p.trace()),
            });
        }
    }
    Ok(TrackingRun {
        steps: records,
        dropouts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn state(r: f64) -> (FilterState, Measurement) {
        let m = MotionParams::default();
        let f = FilterState {
            s_a: Vector4::new(1.0, 2.0, 0.5, -0.5),
            p: Matrix4::identity(),
            t: transition_matrix(&m),
            v: Matrix4::identity(),
            q: process_noise_cov(&m),
            r: Matrix4::identity() * r,
        };
        let z = Measurement {
            z: Vector4::new(3.0, 1.0, 0.0, 0.2),
            r: Matrix4::identity() * r,
            timestamp: 0.0,
        };
        (f, z)
    }

    #[test]
    fn perfect_measurement_limit() {
        let (f, z) = state(1e-12);
        let out = kf_update(&f, &z).unwrap();
        assert!((out.s_a - z.z).norm() < 1e-9);
    }

    #[test]
    fn useless_measurement_limit() {
        let (f, z) = state(1e12);
        let out = kf_update(&f, &z).unwrap();
        assert!((out.s_a - f.t * f.s_a).norm() < 1e-9);
    }

    #[test]
    fn scalar_riccati_fixed_point() {
        let (t, q, r) = (0.9, 0.1, 0.2);
        let one = |x: f64| DMatrix::from_element(1, 1, x);
        let mut p = one(1.0);
        let mut s = DVector::from_element(1, 0.0);
        let mut ops = OpCount::default();
        for _ in 0..50 {
            let out = kf_step_dyn(
                &s,
                &p,
                &one(t),
                &one(1.0),
                &one(q),
                &one(r),
                &DVector::from_element(1, 0.3),
                &mut ops,
            )
            .unwrap();
            p = out.p;
            s = out.s;
        }
        // Independent oracle: iterate the scalar Riccati map to convergence.
        let mut x: f64 = 1.0;
        for _ in 0..10_000 {
            let pf = t * t * x + q;
            x = pf * r / (pf + r);
        }
        assert!((p[(0, 0)] - x).abs() < 1e-10);
    }

    #[test]
    fn prediction_only_step() {
        let (f, _) = state(1.0);
        let p = kf_predict(&f);
        assert_eq!(p.s_a, f.t * f.s_a);
        assert!((p.p - (f.t * f.p * f.t.transpose() + f.q)).norm() < 1e-14);
    }

    #[test]
    fn singular_innovation_is_reported() {
        let (mut f, mut z) = state(0.0);
        f.p = Matrix4::zeros();
        f.q = Matrix4::zeros();
        z.r = Matrix4::zeros();
        assert!(matches!(kf_update(&f, &z), Err(Error::SingularInnovation(_))));
    }

    #[test]
    fn joseph_form_stays_symmetric_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (mut f, _) = state(1.0);
        for _ in 0..2000 {
            let a: Matrix4<f64> = Matrix4::from_fn(|_, _| StandardNormal.sample(&mut rng));
            let z = Measurement {
                z: Vector4::from_fn(|_, _| StandardNormal.sample(&mut rng)),
                r: a * a.transpose() * 0.1 + Matrix4::identity() * 1e-6,
                timestamp: 0.0,
            };
            f = kf_update(&f, &z).unwrap();
            assert!((f.p - f.p.transpose()).norm() < 1e-12);
            assert!(f.p.symmetric_eigenvalues().min() > -1e-10);
        }
    }

    #[test]
    fn op_count_scales_with_dimensions() {
        let mut ratios = Vec::new();
        for (n, m) in [(4, 4), (8, 4), (8, 8), (16, 8), (16, 16), (32, 16)] {
            let eye = |k: usize| DMatrix::<f64>::identity(k, k);
            let v = DMatrix::from_fn(m, n, |i, j| if i == j { 1.0 } else { 0.0 });
            let mut ops = OpCount::default();
            kf_step_dyn(
                &DVector::zeros(n),
                &eye(n),
                &eye(n),
                &v,
                &eye(n),
                &eye(m),
                &DVector::zeros(m),
                &mut ops,
            )
            .unwrap();
            let (n, m) = (n as f64, m as f64);
            ratios.push(ops.0 as f64 / (n.powi(3) + n * n * m + n * m * m));
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!(ratios.iter().all(|r| *r < 2.0 * mean && *r > 0.5 * mean), "{ratios:?}");
    }

    #[test]
    fn innovation_is_white_at_matched_models() {
        let m = MotionParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let r: Matrix4<f64> = Matrix4::from_diagonal(&Vector4::new(4.0, 4.0, 0.5, 0.5));
        let noise = |rng: &mut ChaCha8Rng| {
            Vector4::from_fn(|i, _| {
                let z: f64 = StandardNormal.sample(rng);
                r[(i, i)].sqrt() * z
            })
        };
        let mut truth = Vector4::new(100.0, 100.0, 0.2, -0.1);
        let first = Measurement {
            z: truth + noise(&mut rng),
            r,
            timestamp: 0.0,
        };
        let mut f = FilterState::from_measurement(&first, &m, 1.0);
        let (mut sum, mut count) = (0.0, 0);
        for step in 1..=10_200 {
            truth = crate::motion::step_with(&truth, &m, &mut rng);
            let z = Measurement {
                z: truth + noise(&mut rng),
                r,
                timestamp: step as f64 * m.dt,
            };
            let (next, nis) = kf_update_with_nis(&f, &z).unwrap();
            f = next;
            if step > 200 {
                sum += nis;
                count += 1;
            }
        }
        let mean = sum / count as f64;
        assert!((mean - 4.0).abs() < 0.4, "mean NIS {mean}");
    }
}
