//! Sequential delay-Doppler matched-filter path search with interference
//! cancellation.
//!
//! The score of a candidate `(l, k)` is `|(T(l,k) d)^H r|²` where `r` is the
//! current residual. Because the OTFS transform is unitary the correlation is
//! evaluated in the time domain, `Σ_m e^{-i2πkm/MN} s*[m] r[m+l]`, which
//! costs `MN` complex multiply-adds per candidate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::modem::{FrameConfig, Modem};
use crate::operator::{dot, norm_sqr, TimeShift};
use crate::scene::NodeSet;
use crate::{Cplx, Error, Result, SPEED_OF_LIGHT};

/// Sub-bin refinement of the Doppler peak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refinement {
    None,
    /// Parabola through the peak and its two Doppler neighbours.
    #[default]
    Parabolic,
}

/// How path gains are computed once a new path is found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainUpdate {
    /// Project the residual on the new path only and subtract it.
    Sequential,
    /// Refit all detected gains by least squares on the original signal.
    #[default]
    Joint,
}

/// Search settings as they appear in a simulation config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    /// Largest delay candidate in samples; derived from the scene if unset.
    pub max_delay: Option<usize>,
    /// Fastest target speed the Doppler grid has to cover (m/s).
    pub max_speed: f64,
    /// Doppler grid spacing in bins.
    pub doppler_step: f64,
    pub refine: Refinement,
    pub gain_update: GainUpdate,
    /// Model the anchor to receiver line-of-sight path and notch it out.
    pub direct_path: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            max_delay: None,
            max_speed: 10.0,
            doppler_step: 0.05,
            refine: Refinement::Parabolic,
            gain_update: GainUpdate::Joint,
            direct_path: false,
        }
    }
}

impl EstimatorConfig {
    pub fn grid(&self, nodes: &NodeSet, cfg: &FrameConfig) -> Result<SearchGrid> {
        if !(self.max_speed >= 0.0) {
            return Err(Error::config("max_speed must be non-negative"));
        }
        let mut grid = SearchGrid::for_scene(nodes, cfg, self.max_speed, self.doppler_step, self.refine)?;
        if let Some(l) = self.max_delay {
            if l >= cfg.len() {
                return Err(Error::config(format!("max_delay {l} outside frame")));
            }
            grid.delay_candidates = (0..=l).collect();
        }
        Ok(grid)
    }

    pub fn build(&self, nodes: &NodeSet, cfg: &FrameConfig) -> Result<PathEstimator> {
        let mut est = PathEstimator::new(cfg, self.grid(nodes, cfg)?)?;
        est.gain_update = self.gain_update;
        Ok(est)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchGrid {
    delay_candidates: Vec<usize>,
    doppler_candidates: Vec<f64>,
    pub refine: Refinement,
}

impl SearchGrid {
    pub fn new(delay_candidates: Vec<usize>, doppler_candidates: Vec<f64>, refine: Refinement) -> Result<Self> {
        if delay_candidates.is_empty() || doppler_candidates.is_empty() {
            return Err(Error::config(
                "search grid needs at least one delay and one Doppler candidate",
            ));
        }
        if delay_candidates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("delay candidates must be sorted and unique"));
        }
        if doppler_candidates.iter().any(|k| !k.is_finite()) || doppler_candidates.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::config("Doppler candidates must be finite, sorted and unique"));
        }
        Ok(Self {
            delay_candidates,
            doppler_candidates,
            refine,
        })
    }

    /// Delays `0..=max_delay`, Dopplers `-n·step..=n·step` with
    /// `n = max(1, ceil(span / step))`.
    pub fn uniform(max_delay: usize, doppler_span: f64, doppler_step: f64, refine: Refinement) -> Result<Self> {
        if !(doppler_step > 0.0 && doppler_step.is_finite()) || !(doppler_span >= 0.0) {
            return Err(Error::config("Doppler step must be positive and span non-negative"));
        }
        let n = ((doppler_span / doppler_step).ceil() as i64).max(1);
        let dopplers = (-n..=n).map(|i| i as f64 * doppler_step).collect();
        Self::new((0..=max_delay).collect(), dopplers, refine)
    }

    /// Grid covering every delay and Doppler a target inside the region
    /// moving slower than `max_speed` can produce on any link of `nodes`.
    pub fn for_scene(
        nodes: &NodeSet,
        cfg: &FrameConfig,
        max_speed: f64,
        doppler_step: f64,
        refine: Refinement,
    ) -> Result<Self> {
        let r = nodes.region;
        let corners = [
            (r.x_min, r.y_min),
            (r.x_max, r.y_min),
            (r.x_min, r.y_max),
            (r.x_max, r.y_max),
        ];
        // Path lengths are convex in the target position, so the maximum over
        // the box sits on a corner.
        let mut longest: f64 = 0.0;
        for (x, y) in corners {
            let p = nalgebra::Vector2::new(x, y);
            let rho0 = (p - nodes.anchor).norm();
            longest = longest.max(2.0 * rho0);
            for rx in &nodes.receivers {
                longest = longest.max(rho0 + (p - rx).norm());
            }
        }
        let max_delay = ((longest / SPEED_OF_LIGHT * cfg.sample_rate()).ceil() as usize + 2).min(cfg.len() - 1);
        let span_hz = 2.0 * max_speed * cfg.f_c / SPEED_OF_LIGHT;
        Self::uniform(max_delay, span_hz / cfg.doppler_resolution(), doppler_step, refine)
    }

    pub fn delay_candidates(&self) -> &[usize] {
        &self.delay_candidates
    }

    pub fn doppler_candidates(&self) -> &[f64] {
        &self.doppler_candidates
    }

    pub fn cardinality(&self) -> usize {
        self.delay_candidates.len() * self.doppler_candidates.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEstimate {
    pub delay_idx: usize,
    pub doppler_idx: f64,
    pub gain: Cplx,
    /// `|(T d)^H r|²` at the (refined) peak.
    pub correlation_peak: f64,
}

impl PathEstimate {
    pub fn delay_s(&self, cfg: &FrameConfig) -> f64 {
        self.delay_idx as f64 * cfg.delay_resolution()
    }

    pub fn doppler_hz(&self, cfg: &FrameConfig) -> f64 {
        self.doppler_idx * cfg.doppler_resolution()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchStatus {
    Complete,
    /// The residual vanished before all requested paths were found.
    EarlyStop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSearch {
    /// In detection order.
    pub estimates: Vec<PathEstimate>,
    pub status: SearchStatus,
    /// Residual energy before the first search and after every detection.
    pub residual_energy: Vec<f64>,
    /// Complex multiply-adds spent on correlation.
    pub correlation_ops: u64,
}

/// A path whose parameters are already known, e.g. the direct anchor to
/// receiver path. It is fitted alongside the detected paths and its delay
/// bin is excluded from the search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnownPath {
    pub delay_idx: usize,
    pub doppler_idx: f64,
}

/// Path estimator with Doppler phase tables prepared once per grid.
#[derive(Debug, Clone)]
pub struct PathEstimator {
    modem: Modem,
    len: usize,
    grid: SearchGrid,
    /// `e^{-i2πkm/MN}` for every Doppler candidate.
    phases: Vec<Vec<Cplx>>,
    pub gain_update: GainUpdate,
}

const EARLY_STOP_RATIO: f64 = 1e-20;

fn phase_table(k: f64, len: usize) -> Vec<Cplx> {
    let w = -2.0 * std::f64::consts::PI * k / len as f64;
    (0..len).map(|m| Cplx::cis(w * m as f64)).collect()
}

// Σ_m w[m] r[(m + l) % len]
fn correlate(w: &[Cplx], r: &[Cplx], l: usize) -> Cplx {
    let len = r.len();
    let head = len - l;
    let mut acc = Cplx::default();
    for (a, b) in w[..head].iter().zip(&r[l..]) {
        acc += a * b;
    }
    for (a, b) in w[head..].iter().zip(&r[..l]) {
        acc += a * b;
    }
    acc
}

impl PathEstimator {
    pub fn new(cfg: &FrameConfig, grid: SearchGrid) -> Result<Self> {
        let len = cfg.len();
        if let Some(&l) = grid.delay_candidates.last() {
            if l >= len {
                return Err(Error::config(format!("delay candidate {l} outside frame of {len}")));
            }
        }
        if grid.doppler_candidates.iter().any(|k| k.abs() >= len as f64) {
            return Err(Error::config("Doppler candidate outside operator domain"));
        }
        let phases = grid.doppler_candidates.iter().map(|&k| phase_table(k, len)).collect();
        Ok(Self {
            modem: Modem::new(cfg)?,
            len,
            grid,
            phases,
            gain_update: GainUpdate::default(),
        })
    }

    pub fn grid(&self) -> &SearchGrid {
        &self.grid
    }

    /// Finds `p` paths of `y` (delay-Doppler domain) for reference `d`.
    pub fn estimate(&self, y: &[Cplx], d: &[Cplx], p: usize) -> Result<PathSearch> {
        self.estimate_with_known(y, d, p, &[])
    }

    pub fn estimate_with_known(&self, y: &[Cplx], d: &[Cplx], p: usize, known: &[KnownPath]) -> Result<PathSearch> {
        if y.len() != self.len || d.len() != self.len {
            return Err(Error::config(format!(
                "input lengths {}/{} do not match frame of {}",
                y.len(),
                d.len(),
                self.len
            )));
        }
        let s = self.modem.modulate(d)?;
        let r = self.modem.modulate(y)?;
        self.estimate_time(&r, &s, p, known)
    }

    /// Same search with received and reference signals already in the time
    /// domain.
    pub fn estimate_time(&self, r: &[Cplx], s: &[Cplx], p: usize, known: &[KnownPath]) -> Result<PathSearch> {
        if p == 0 {
            return Err(Error::input("path count must be at least 1"));
        }
        if p > self.grid.cardinality() {
            return Err(Error::config(format!(
                "{p} paths requested from a grid of {} candidates",
                self.grid.cardinality()
            )));
        }
        let ref_energy = norm_sqr(s);
        if ref_energy == 0.0 {
            return Err(Error::ZeroEnergyReference);
        }
        let conj_s: Vec<Cplx> = s.iter().map(|x| x.conj()).collect();
        let mut support: Vec<(usize, f64)> = known.iter().map(|k| (k.delay_idx, k.doppler_idx)).collect();
        let n_known = support.len();

        let e0 = norm_sqr(r);
        let mut residual = r.to_vec();
        if n_known > 0 {
            let (_, res) = self.joint_fit(r, s, &support)?;
            residual = res;
        }
        let mut energies = vec![norm_sqr(&residual)];
        let mut estimates = Vec::with_capacity(p);
        let mut ops = 0u64;
        let mut status = SearchStatus::Complete;
        let mut w = vec![Cplx::default(); self.len];

        for _ in 0..p {
            let current = *energies.last().unwrap();
            if current <= EARLY_STOP_RATIO * e0 || current == 0.0 {
                status = SearchStatus::EarlyStop;
                break;
            }
            // Grid search; delays outer, Doppler inner, strict improvement only,
            // so ties resolve to the smallest delay then the smallest Doppler.
            let mut surface = vec![Cplx::default(); self.grid.cardinality()];
            let nk = self.grid.doppler_candidates.len();
            for (ki, ph) in self.phases.iter().enumerate() {
                for (wm, (a, b)) in w.iter_mut().zip(ph.iter().zip(&conj_s)) {
                    *wm = a * b;
                }
                for (li, &l) in self.grid.delay_candidates.iter().enumerate() {
                    if known.iter().any(|kp| kp.delay_idx == l) {
                        continue;
                    }
                    surface[li * nk + ki] = correlate(&w, &residual, l);
                    ops += self.len as u64;
                }
            }
            let mut best = None;
            let mut best_score = -1.0;
            for (idx, c) in surface.iter().enumerate() {
                let score = c.norm_sqr();
                if score > best_score {
                    best_score = score;
                    best = Some(idx);
                }
            }
            let idx = best.expect("grid is non-empty");
            let (li, ki) = (idx / nk, idx % nk);
            let l = self.grid.delay_candidates[li];
            let mut k = self.grid.doppler_candidates[ki];
            let mut peak = best_score;
            if self.grid.refine == Refinement::Parabolic && ki > 0 && ki + 1 < nk {
                let a = surface[idx - 1].norm();
                let b = surface[idx].norm();
                let c = surface[idx + 1].norm();
                let denom = a - 2.0 * b + c;
                if denom < 0.0 {
                    let offset = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
                    let step = if offset < 0.0 {
                        k - self.grid.doppler_candidates[ki - 1]
                    } else {
                        self.grid.doppler_candidates[ki + 1] - k
                    };
                    if offset != 0.0 {
                        let refined = k + offset * step;
                        let ph = phase_table(refined, self.len);
                        for (wm, (a, b)) in w.iter_mut().zip(ph.iter().zip(&conj_s)) {
                            *wm = a * b;
                        }
                        let score = correlate(&w, &residual, l).norm_sqr();
                        ops += self.len as u64;
                        if score >= peak {
                            k = refined;
                            peak = score;
                        }
                    }
                }
            }

            let atom = TimeShift::new(l, k, self.len)?.shift(s);
            match self.gain_update {
                GainUpdate::Sequential => {
                    let h = dot(&atom, &residual) / ref_energy;
                    for (x, a) in residual.iter_mut().zip(&atom) {
                        *x -= h * a;
                    }
                    estimates.push(PathEstimate {
                        delay_idx: l,
                        doppler_idx: k,
                        gain: h,
                        correlation_peak: peak,
                    });
                }
                GainUpdate::Joint => {
                    support.push((l, k));
                    let (gains, res) = self.joint_fit(r, s, &support)?;
                    residual = res;
                    estimates.push(PathEstimate {
                        delay_idx: l,
                        doppler_idx: k,
                        gain: Cplx::default(),
                        correlation_peak: peak,
                    });
                    for (e, g) in estimates.iter_mut().zip(&gains[n_known..]) {
                        e.gain = *g;
                    }
                }
            }
            let e = norm_sqr(&residual);
            // Least squares over a growing support cannot increase the
            // residual; clamp rounding noise so the sequence is monotone.
            energies.push(e.min(current));
        }
        if estimates.len() < p {
            status = SearchStatus::EarlyStop;
        }
        Ok(PathSearch {
            estimates,
            status,
            residual_energy: energies,
            correlation_ops: ops,
        })
    }

    // Least-squares gains of r on the atoms Π^l Δ^k s and the residual.
    fn joint_fit(&self, r: &[Cplx], s: &[Cplx], support: &[(usize, f64)]) -> Result<(Vec<Cplx>, Vec<Cplx>)> {
        let atoms: Vec<Vec<Cplx>> = support
            .iter()
            .map(|&(l, k)| TimeShift::new(l, k, self.len).map(|t| t.shift(s)))
            .collect::<Result<_>>()?;
        let q = atoms.len();
        let gram = DMatrix::from_fn(q, q, |i, j| dot(&atoms[i], &atoms[j]));
        let rhs = DVector::from_fn(q, |i, _| dot(&atoms[i], r));
        let gains = match gram.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => gram
                .svd(true, true)
                .solve(&rhs, 1e-12)
                .map_err(|e| Error::input(format!("gain refit failed: {e}")))?,
        };
        let mut res = r.to_vec();
        for (g, a) in gains.iter().zip(&atoms) {
            for (x, v) in res.iter_mut().zip(a) {
                *x -= g * v;
            }
        }
        Ok((gains.iter().copied().collect(), res))
    }
}

/// One-shot path search, see [`PathEstimator`].
pub fn estimate_paths(y: &[Cplx], d: &[Cplx], p: usize, grid: &SearchGrid, cfg: &FrameConfig) -> Result<PathSearch> {
    PathEstimator::new(cfg, grid.clone())?.estimate(y, d, p)
}

/// `ĥ = (T d)^H y / ‖T d‖²`
pub fn estimate_gain(y: &[Cplx], d: &[Cplx], l: usize, k: f64, cfg: &FrameConfig) -> Result<Cplx> {
    let modem = Modem::new(cfg)?;
    if y.len() != cfg.len() || d.len() != cfg.len() {
        return Err(Error::config("input lengths do not match frame"));
    }
    let s = modem.modulate(d)?;
    let r = modem.modulate(y)?;
    let atom = TimeShift::new(l, k, cfg.len())?.shift(&s);
    let energy = norm_sqr(&atom);
    if energy == 0.0 {
        return Err(Error::ZeroEnergyReference);
    }
    Ok(dot(&atom, &r) / energy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply_channel_with, ChannelPath, ChannelRealization};
    use crate::modem::DdFrame;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> FrameConfig {
        FrameConfig::new(64, 16, 15e3, 4e9)
    }

    fn received(paths: &[(Cplx, usize, f64)], d: &[Cplx], cfg: &FrameConfig) -> Vec<Cplx> {
        let modem = Modem::new(cfg).unwrap();
        let ch = ChannelRealization::new(
            paths
                .iter()
                .map(|&(h, l, k)| ChannelPath::from_indices(h, l, k, cfg))
                .collect(),
            0.0,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = apply_channel_with(&modem.modulate(d).unwrap(), &ch, &mut rng).unwrap();
        modem.demodulate(&r).unwrap()
    }

    fn frame(seed: u64, cfg: &FrameConfig) -> Vec<Cplx> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DdFrame::random(cfg, &mut rng).unwrap().0.combined()
    }

    fn grid() -> SearchGrid {
        SearchGrid::uniform(8, 2.0, 0.5, Refinement::None).unwrap()
    }

    #[test]
    fn single_path_exact() {
        let c = cfg();
        let d = frame(1, &c);
        let h = Cplx::from_polar(0.8, std::f64::consts::FRAC_PI_4);
        let y = received(&[(h, 3, 1.0)], &d, &c);
        let out = estimate_paths(&y, &d, 1, &grid(), &c).unwrap();
        let e = out.estimates[0];
        assert_eq!((e.delay_idx, e.doppler_idx), (3, 1.0));
        assert!((e.gain - h).norm() < 1e-6);
        assert_eq!(out.status, SearchStatus::Complete);
    }

    #[test]
    fn zero_input_stops_early() {
        let c = cfg();
        let d = frame(2, &c);
        let out = estimate_paths(&vec![Cplx::default(); c.len()], &d, 2, &grid(), &c).unwrap();
        assert_eq!(out.status, SearchStatus::EarlyStop);
        assert!(out.estimates.is_empty());
    }

    #[test]
    fn two_paths_in_magnitude_order() {
        let c = cfg();
        let d = frame(3, &c);
        let y = received(&[(Cplx::new(0.5, 0.0), 6, -1.0), (Cplx::new(1.0, 0.0), 2, 0.5)], &d, &c);
        let out = estimate_paths(&y, &d, 2, &grid(), &c).unwrap();
        let e = &out.estimates;
        assert_eq!((e[0].delay_idx, e[0].doppler_idx), (2, 0.5));
        assert_eq!((e[1].delay_idx, e[1].doppler_idx), (6, -1.0));
        assert!((e[0].gain - 1.0).norm() < 1e-3);
        assert!((e[1].gain - 0.5).norm() < 1e-3);
        assert!(out.residual_energy.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn sequential_mode_decreases_residual() {
        let c = cfg();
        let d = frame(4, &c);
        let y = received(&[(Cplx::new(0.9, 0.1), 5, 0.3), (Cplx::new(0.0, 0.6), 1, -0.7)], &d, &c);
        let mut est = PathEstimator::new(&c, SearchGrid::uniform(8, 1.0, 0.1, Refinement::Parabolic).unwrap()).unwrap();
        est.gain_update = GainUpdate::Sequential;
        let out = est.estimate(&y, &d, 4).unwrap();
        assert!(out.residual_energy.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn errors() {
        let c = cfg();
        let d = frame(5, &c);
        let y = received(&[(Cplx::new(1.0, 0.0), 0, 0.0)], &d, &c);
        assert!(matches!(estimate_paths(&y, &d, 0, &grid(), &c), Err(Error::Input(_))));
        let tiny = SearchGrid::new(vec![0], vec![0.0], Refinement::None).unwrap();
        assert!(matches!(estimate_paths(&y, &d, 2, &tiny, &c), Err(Error::Config(_))));
        let zero = vec![Cplx::default(); c.len()];
        assert!(matches!(
            estimate_paths(&y, &zero, 1, &grid(), &c),
            Err(Error::ZeroEnergyReference)
        ));
        assert!(matches!(
            estimate_gain(&y, &zero, 0, 0.0, &c),
            Err(Error::ZeroEnergyReference)
        ));
        assert!(SearchGrid::new(vec![1, 1], vec![0.0], Refinement::None).is_err());
    }

    #[test]
    fn gain_projection() {
        let c = cfg();
        let d = frame(6, &c);
        let h = Cplx::new(-0.3, 0.7);
        let y = received(&[(h, 4, 0.25)], &d, &c);
        assert!((estimate_gain(&y, &d, 4, 0.25, &c).unwrap() - h).norm() < 1e-12);
        // Orthogonal: a reference hitting disjoint delay-Doppler bins.
        let mut a = vec![Cplx::default(); c.len()];
        let mut b = vec![Cplx::default(); c.len()];
        a[0] = Cplx::new(1.0, 0.0);
        b[5] = Cplx::new(1.0, 0.0);
        assert_eq!(estimate_gain(&b, &a, 0, 0.0, &c).unwrap().norm(), 0.0);
    }

    #[test]
    fn parabolic_refinement_gets_closer() {
        let c = cfg();
        let d = frame(7, &c);
        let y = received(&[(Cplx::new(1.0, 0.0), 3, 0.37)], &d, &c);
        let g = SearchGrid::uniform(6, 1.0, 0.1, Refinement::Parabolic).unwrap();
        let out = estimate_paths(&y, &d, 1, &g, &c).unwrap();
        assert!((out.estimates[0].doppler_idx - 0.37).abs() < 0.01);
    }

    #[test]
    fn known_path_is_suppressed() {
        let c = cfg();
        let d = frame(8, &c);
        let y = received(&[(Cplx::new(3.0, 0.0), 1, 0.0), (Cplx::new(0.5, 0.0), 5, 0.5)], &d, &c);
        let est = PathEstimator::new(&c, grid()).unwrap();
        let known = [KnownPath {
            delay_idx: 1,
            doppler_idx: 0.0,
        }];
        let out = est.estimate_with_known(&y, &d, 1, &known).unwrap();
        assert_eq!((out.estimates[0].delay_idx, out.estimates[0].doppler_idx), (5, 0.5));
        assert!((out.estimates[0].gain - 0.5).norm() < 1e-9);
    }

    #[test]
    fn op_count_matches_grid() {
        let c = cfg();
        let d = frame(9, &c);
        let y = received(&[(Cplx::new(1.0, 0.0), 2, 0.0)], &d, &c);
        let out = estimate_paths(&y, &d, 1, &grid(), &c).unwrap();
        assert_eq!(out.correlation_ops, (grid().cardinality() * c.len()) as u64);
    }
}
