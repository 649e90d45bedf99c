//! Passive ISAC at the receivers: only the pilot is known, so the channel
//! is first estimated from the pilot alone, the data is detected through
//! that channel estimate, and the detected frame then serves as a richer
//! reference for re-estimating the channel.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::{effective_dd_channel, ChannelPath, ChannelRealization, EffectiveChannel};
use crate::estimator::{estimate_paths, KnownPath, PathEstimate, PathSearch, SearchGrid};
use crate::modem::FrameConfig;
use crate::operator::{norm, norm_sqr, LinearOperator};
use crate::qam::{bit_errors, Constellation};
use crate::scene::InvertedLinks;
use crate::sensing::{
    fuse_target, invert_targets, search_all, FusedMeasurement, NodeSearches, Reception, SensingContext,
};
use crate::{Cplx, Error, Result};

/// Outer-loop stop thresholds on the change of every path parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OuterTolerance {
    /// Relative gain change.
    pub gain: f64,
    /// Delay change in samples.
    pub delay: f64,
    /// Doppler change in bins.
    pub doppler: f64,
}

impl Default for OuterTolerance {
    fn default() -> Self {
        Self {
            gain: 1e-3,
            delay: 0.0,
            doppler: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IsacConfig {
    /// Regularization weight; unset means noise variance over data power.
    pub mu: Option<f64>,
    /// Gradient step; unset means `0.9 / (λ_max + μ)`.
    pub eta: Option<f64>,
    pub eps_inner: f64,
    pub eps_outer: OuterTolerance,
    pub max_inner: usize,
    pub max_outer: usize,
    /// Frames with at most this many samples use the closed-form solve.
    pub closed_form_max: usize,
}

impl Default for IsacConfig {
    fn default() -> Self {
        Self {
            mu: None,
            eta: None,
            eps_inner: 1e-6,
            eps_outer: OuterTolerance::default(),
            max_inner: 500,
            max_outer: 8,
            closed_form_max: 256,
        }
    }
}

impl IsacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mu.is_some_and(|m| !(m > 0.0)) || self.eta.is_some_and(|e| !(e > 0.0)) {
            return Err(Error::config("mu and eta must be positive"));
        }
        if !(self.eps_inner > 0.0) || self.max_inner == 0 || self.max_outer == 0 {
            return Err(Error::config(
                "eps_inner must be positive and iteration caps at least 1",
            ));
        }
        let t = self.eps_outer;
        if !(t.gain >= 0.0 && t.delay >= 0.0 && t.doppler >= 0.0) {
            return Err(Error::config("eps_outer entries must be non-negative"));
        }
        Ok(())
    }
}

/// Pilot-only path search; the unknown data acts as interference.
pub fn coarse_channel_estimate(
    y: &[Cplx],
    pilot: &[Cplx],
    p: usize,
    grid: &SearchGrid,
    cfg: &FrameConfig,
) -> Result<PathSearch> {
    estimate_paths(y, pilot, p, grid, cfg)
}

/// `H̄` rebuilt from path estimates.
pub fn channel_from_estimates(est: &[PathEstimate], cfg: &FrameConfig) -> Result<EffectiveChannel> {
    let paths = est
        .iter()
        .map(|e| ChannelPath::from_indices(e.gain, e.delay_idx, e.doppler_idx, cfg))
        .collect();
    effective_dd_channel(&ChannelRealization::new(paths, 0.0), cfg)
}

fn to_dvec(x: &[Cplx]) -> DVector<Cplx> {
    DVector::from_column_slice(x)
}

/// `(H̄^H H̄ + μ I)^{-1} H̄^H y` by a dense Cholesky solve.
pub fn mmse_detect<H: LinearOperator + ?Sized>(y: &[Cplx], h: &H, mu: f64) -> Result<Vec<Cplx>> {
    if !(mu >= 0.0) {
        return Err(Error::input("mu must be non-negative"));
    }
    let n = h.dim();
    if y.len() != n {
        return Err(Error::input("observation length does not match operator"));
    }
    let hd: DMatrix<Cplx> = h.to_dense();
    let a = hd.adjoint() * &hd + DMatrix::<Cplx>::identity(n, n) * Cplx::new(mu, 0.0);
    let b = hd.adjoint() * to_dvec(y);
    let x = match a.clone().cholesky() {
        Some(ch) => ch.solve(&b),
        None => a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::input("normal equations are singular; use mu > 0"))?,
    };
    Ok(x.iter().copied().collect())
}

/// Largest eigenvalue of `H^H H` by power iteration, padded by 2%.
pub fn lambda_max<H: LinearOperator + ?Sized>(h: &H, iterations: usize) -> f64 {
    let n = h.dim();
    let mut x: Vec<Cplx> = (0..n)
        .map(|i| Cplx::new(1.0 + (i % 7) as f64 * 0.1, (i % 3) as f64 * 0.1))
        .collect();
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let nx = norm(&x);
        if nx == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        let ax = h.apply_adjoint(&h.apply(&x));
        lambda = norm(&ax);
        x = ax;
    }
    1.02 * lambda
}

/// `0.9 / (λ_max + μ)`
pub fn default_step<H: LinearOperator + ?Sized>(h: &H, mu: f64) -> f64 {
    0.9 / (lambda_max(h, 100) + mu)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientOutcome {
    pub d: Vec<Cplx>,
    pub iterations: usize,
    /// Stopped on `‖Δd‖ < ε` rather than the iteration cap.
    pub converged: bool,
}

fn objective<H: LinearOperator + ?Sized>(y: &[Cplx], h: &H, mu: f64, d: &[Cplx]) -> f64 {
    let r: Vec<Cplx> = h.apply(d).iter().zip(y).map(|(a, b)| a - b).collect();
    norm_sqr(&r) + mu * norm_sqr(d)
}

/// Gradient descent `d ← d − η (2 H^H (H d − y) + 2 μ d)` until the update
/// is shorter than `eps` or `max_inner` iterations ran.
pub fn gradient_detect<H: LinearOperator + ?Sized>(
    y: &[Cplx],
    h: &H,
    mu: f64,
    eta: f64,
    eps: f64,
    max_inner: usize,
    d_init: Option<&[Cplx]>,
) -> Result<GradientOutcome> {
    let n = h.dim();
    if y.len() != n {
        return Err(Error::input("observation length does not match operator"));
    }
    if !(eta > 0.0) {
        return Err(Error::input("step size must be positive"));
    }
    let mut d = d_init.map_or_else(|| vec![Cplx::default(); n], |x| x.to_vec());
    let mut prev = objective(y, h, mu, &d);
    let mut rises = 0;
    for it in 1..=max_inner {
        let r: Vec<Cplx> = h.apply(&d).iter().zip(y).map(|(a, b)| a - b).collect();
        let g = h.apply_adjoint(&r);
        let mut step_sq = 0.0;
        for (x, gi) in d.iter_mut().zip(&g) {
            let delta = (gi + *x * mu) * (2.0 * eta);
            step_sq += delta.norm_sqr();
            *x -= delta;
        }
        if step_sq.sqrt() < eps {
            return Ok(GradientOutcome {
                d,
                iterations: it,
                converged: true,
            });
        }
        let j = objective(y, h, mu, &d);
        if !j.is_finite() {
            return Err(Error::Divergence(format!("objective not finite at iteration {it}")));
        }
        rises = if j > prev { rises + 1 } else { 0 };
        if rises >= 5 {
            return Err(Error::Divergence(format!(
                "objective rose for 5 consecutive steps (eta = {eta:.3e})"
            )));
        }
        prev = j;
    }
    Ok(GradientOutcome {
        d,
        iterations: max_inner,
        converged: false,
    })
}

/// Removes the pilot and slices every entry to the nearest QAM point.
pub fn demodulate_info(d_hat: &[Cplx], pilot: &[Cplx], qam: &Constellation) -> Vec<Cplx> {
    d_hat.iter().zip(pilot).map(|(d, p)| qam.slice(d - p)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub d_hat: Vec<Cplx>,
    /// Sliced information grid, vectorized.
    pub d_i_hat: Vec<Cplx>,
    pub ber: Option<f64>,
    pub iterations_used: usize,
}

/// Regularized detection of the full frame. The pilot is known, so its
/// contribution is cancelled first and the information part is estimated
/// as `argmin ‖y − H̄(d_P + x)‖² + μ‖x‖²`.
pub fn detect<H: LinearOperator + ?Sized>(
    y: &[Cplx],
    h: &H,
    pilot: &[Cplx],
    mu: f64,
    cfg: &IsacConfig,
    qam: &Constellation,
) -> Result<DetectionResult> {
    let hp = h.apply(pilot);
    let y_info: Vec<Cplx> = y.iter().zip(&hp).map(|(a, b)| a - b).collect();
    let (x, iterations) = if h.dim() <= cfg.closed_form_max {
        (mmse_detect(&y_info, h, mu)?, 1)
    } else {
        let eta = cfg.eta.unwrap_or_else(|| default_step(h, mu));
        let g = gradient_detect(&y_info, h, mu, eta, cfg.eps_inner, cfg.max_inner, None)?;
        (g.d, g.iterations)
    };
    let d_hat: Vec<Cplx> = x.iter().zip(pilot).map(|(a, b)| a + b).collect();
    let d_i_hat = demodulate_info(&d_hat, pilot, qam);
    Ok(DetectionResult {
        d_hat,
        d_i_hat,
        ber: None,
        iterations_used: iterations,
    })
}

fn channel_changed(a: &[PathEstimate], b: &[PathEstimate], tol: &OuterTolerance) -> bool {
    if a.len() != b.len() {
        return true;
    }
    let key = |e: &PathEstimate| (e.delay_idx, e.doppler_idx);
    let mut a: Vec<&PathEstimate> = a.iter().collect();
    let mut b: Vec<&PathEstimate> = b.iter().collect();
    a.sort_by(|x, y| key(x).0.cmp(&key(y).0).then(key(x).1.total_cmp(&key(y).1)));
    b.sort_by(|x, y| key(x).0.cmp(&key(y).0).then(key(x).1.total_cmp(&key(y).1)));
    a.iter().zip(&b).any(|(x, y)| {
        (x.delay_idx as f64 - y.delay_idx as f64).abs() > tol.delay
            || (x.doppler_idx - y.doppler_idx).abs() > tol.doppler
            || (x.gain - y.gain).norm() > tol.gain * x.gain.norm().max(f64::MIN_POSITIVE)
    })
}

/// Outer loop of one receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverIsac {
    /// Path estimates of the last accepted iteration.
    pub search: PathSearch,
    pub detection: DetectionResult,
    /// BER of every accepted iteration, the first one being pilot-only.
    pub ber: Vec<f64>,
    /// `‖y − H̄ (d_P + d̂_I)‖` of every accepted iteration.
    pub residual: Vec<f64>,
    pub outer_iterations: usize,
    /// The channel stopped changing before `max_outer`.
    pub converged: bool,
}

/// Runs coarse estimation, detection and re-estimation for one receiver.
/// `y` is the delay-Doppler observation, `bits` the transmitted bits used
/// only to score BER.
#[allow(clippy::too_many_arguments)]
pub fn isac_receiver(
    ctx: &SensingContext,
    y: &[Cplx],
    pilot: &[Cplx],
    bits: &[u8],
    p: usize,
    known: &[KnownPath],
    mu: f64,
    cfg: &IsacConfig,
) -> Result<ReceiverIsac> {
    let qam = ctx.frame.constellation()?;
    let est = ctx.estimator();
    let len = ctx.frame.len();
    let add_known = |s: &PathSearch| -> Vec<PathEstimate> {
        // Known paths are fitted inside the search but not reported; put
        // them back with a unit gain so H̄ is complete.
        let mut all = s.estimates.clone();
        all.extend(known.iter().map(|k| PathEstimate {
            delay_idx: k.delay_idx,
            doppler_idx: k.doppler_idx,
            gain: Cplx::new(1.0, 0.0),
            correlation_peak: 0.0,
        }));
        all
    };
    let run = |reference: &[Cplx]| -> Result<(PathSearch, DetectionResult, f64)> {
        let search = est.estimate_with_known(y, reference, p, known)?;
        let h = channel_from_estimates(&add_known(&search), &ctx.frame)?;
        let mut det = detect(y, &h, pilot, mu, cfg, &qam)?;
        let full: Vec<Cplx> = det.d_i_hat.iter().zip(pilot).map(|(a, b)| a + b).collect();
        let resid: Vec<Cplx> = h.apply(&full).iter().zip(y).map(|(a, b)| b - a).collect();
        det.ber = Some(bit_errors(&qam.demap(&det.d_i_hat), bits) as f64 / bits.len() as f64);
        Ok((search, det, norm(&resid)))
    };
    if pilot.len() != len || y.len() != len {
        return Err(Error::input("observation or pilot length does not match frame"));
    }
    let (mut search, mut det, mut resid) = run(pilot)?;
    let mut bers = vec![det.ber.unwrap_or(f64::NAN)];
    let mut residuals = vec![resid];
    let mut converged = false;
    let mut outer = 1;
    while outer < cfg.max_outer {
        let reference: Vec<Cplx> = det.d_i_hat.iter().zip(pilot).map(|(a, b)| a + b).collect();
        let (s2, d2, r2) = run(&reference)?;
        outer += 1;
        if !(r2 < resid) {
            // Not an improvement: keep the previous iterate and stop.
            converged = !channel_changed(&search.estimates, &s2.estimates, &cfg.eps_outer);
            break;
        }
        let changed = channel_changed(&search.estimates, &s2.estimates, &cfg.eps_outer);
        search = s2;
        det = d2;
        resid = r2;
        bers.push(det.ber.unwrap_or(f64::NAN));
        residuals.push(resid);
        if !changed {
            converged = true;
            break;
        }
    }
    Ok(ReceiverIsac {
        search,
        detection: det,
        ber: bers,
        residual: residuals,
        outer_iterations: outer,
        converged,
    })
}

#[derive(Debug, Clone)]
pub struct IsacOutcome {
    /// Receivers `1..=Z`.
    pub receivers: Vec<ReceiverIsac>,
    /// Mean BER over receivers per outer iteration, padded to `max_outer`
    /// with each receiver's last accepted value.
    pub ber_per_iteration: Vec<f64>,
    pub inverted: Vec<Option<InvertedLinks>>,
    pub measurements: Vec<Option<FusedMeasurement>>,
}

/// Passive ISAC at every receiver (first antenna), active monostatic
/// sensing at the anchor, then inversion and fusion of the final path
/// estimates.
pub fn isac_loop(ctx: &SensingContext, reception: &Reception, cfg: &IsacConfig) -> Result<IsacOutcome> {
    cfg.validate()?;
    let p = reception.links.len();
    let pilot = reception.frame.pilot_vector();
    let mu = cfg.mu.unwrap_or_else(|| ctx.noise_var().max(1e-9));
    let modem = ctx.modem();
    let mut receivers = Vec::with_capacity(ctx.nodes.z());
    for node in 1..=ctx.nodes.z() {
        let y = modem.demodulate(&reception.received[node][0])?;
        let known: Vec<KnownPath> = if ctx.direct_path {
            let n = reception.channels[node].paths.len();
            reception.channels[node].paths[p..n]
                .iter()
                .map(|c| KnownPath {
                    delay_idx: c.delay_idx,
                    doppler_idx: c.doppler_idx,
                })
                .collect()
        } else {
            Vec::new()
        };
        receivers.push(isac_receiver(ctx, &y, &pilot, &reception.bits, p, &known, mu, cfg)?);
    }
    let mut ber_per_iteration = vec![0.0; cfg.max_outer];
    for r in &receivers {
        for (i, b) in ber_per_iteration.iter_mut().enumerate() {
            *b += r.ber[i.min(r.ber.len() - 1)];
        }
    }
    let z = receivers.len().max(1) as f64;
    ber_per_iteration.iter_mut().for_each(|b| *b /= z);

    let mut searches: NodeSearches = Vec::with_capacity(receivers.len() + 1);
    let anchor_only = Reception {
        received: vec![reception.received[0].clone()],
        channels: vec![reception.channels[0].clone()],
        ..reception.clone()
    };
    searches.push(search_all(ctx, &anchor_only, &reception.tx)?.remove(0));
    searches.extend(receivers.iter().map(|r| vec![r.search.clone()]));
    let inverted = invert_targets(&searches, reception, &ctx.frame, ctx.fusion.doppler_inversion)?;
    let measurements = inverted
        .iter()
        .map(|inv| {
            inv.as_ref()
                .and_then(|l| fuse_target(l, &ctx.nodes, &ctx.fusion, &ctx.frame))
        })
        .collect();
    Ok(IsacOutcome {
        receivers,
        ber_per_iteration,
        inverted,
        measurements,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::distance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn cn(rng: &mut ChaCha8Rng) -> Cplx {
        Cplx::new(StandardNormal.sample(rng), StandardNormal.sample(rng)) * std::f64::consts::FRAC_1_SQRT_2
    }

    fn random_system(n: usize, seed: u64) -> (DMatrix<Cplx>, Vec<Cplx>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = DMatrix::from_fn(n, n, |_, _| cn(&mut rng));
        let y = (0..n).map(|_| cn(&mut rng)).collect();
        (h, y)
    }

    #[test]
    fn identity_channel() {
        let h = DMatrix::<Cplx>::identity(8, 8);
        let (_, y) = random_system(8, 1);
        let d = mmse_detect(&y, &h, 1e-12).unwrap();
        assert!(distance(&d, &y) < 1e-9);
    }

    #[test]
    fn unitary_channel_inverts_with_adjoint() {
        let (a, y) = random_system(8, 2);
        let q = a.qr().q();
        let d = mmse_detect(&y, &q, 1e-14).unwrap();
        let want = q.apply_adjoint(&y);
        assert!(distance(&d, &want) < 1e-9);
    }

    #[test]
    fn mmse_first_order_optimality() {
        let (h, y) = random_system(32, 3);
        let mu = 0.1;
        let d = mmse_detect(&y, &h, mu).unwrap();
        let r: Vec<Cplx> = h.apply(&d).iter().zip(&y).map(|(a, b)| a - b).collect();
        let g: Vec<Cplx> = h
            .apply_adjoint(&r)
            .iter()
            .zip(&d)
            .map(|(a, b)| (a + b * mu) * 2.0)
            .collect();
        assert!(norm(&g) < 1e-8);
    }

    #[test]
    fn gradient_matches_closed_form() {
        let (h, y) = random_system(16, 4);
        let mu = 0.5;
        let d_mmse = mmse_detect(&y, &h, mu).unwrap();
        let eta = default_step(&h, mu);
        let g = gradient_detect(&y, &h, mu, eta, 1e-10, 200_000, None).unwrap();
        assert!(g.converged);
        assert!(distance(&g.d, &d_mmse) / norm(&d_mmse) < 1e-6);
        let again = gradient_detect(&y, &h, mu, eta, 1e-10, 10, Some(&g.d)).unwrap();
        assert_eq!(again.iterations, 1);
    }

    #[test]
    fn oversized_step_diverges() {
        let (h, y) = random_system(16, 5);
        let eta = 10.0 / lambda_max(&h, 200);
        assert!(matches!(
            gradient_detect(&y, &h, 0.1, eta, 1e-10, 1000, None),
            Err(Error::Divergence(_))
        ));
    }

    #[test]
    fn demodulation_decisions() {
        let qam = Constellation::new(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let bits: Vec<u8> = (0..64).map(|_| rng.random_range(0..2u8)).collect();
        let d_i = qam.map(&bits).unwrap();
        let mut pilot = vec![Cplx::default(); 32];
        pilot[17] = Cplx::new(5.0, 0.0);
        let d: Vec<Cplx> = d_i.iter().zip(&pilot).map(|(a, b)| a + b).collect();
        assert_eq!(demodulate_info(&d, &pilot, &qam), d_i);
        let half = 0.49 * qam.min_distance() / std::f64::consts::SQRT_2;
        let noisy: Vec<Cplx> = d.iter().map(|x| x + Cplx::new(half, -half)).collect();
        assert_eq!(qam.demap(&demodulate_info(&noisy, &pilot, &qam)), bits);
    }
}
