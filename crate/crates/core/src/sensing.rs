//! Active multistatic sensing for one frame: synthesize what every node
//! receives, estimate the paths, associate them with targets, invert to
//! ranges/radial speeds and fuse them into one measurement per target.

use nalgebra::{Matrix4, Vector4};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{add_noise, snr_to_noise_var, ChannelPath, ChannelRealization, TimeChannel};
use crate::estimator::{EstimatorConfig, KnownPath, PathEstimate, PathEstimator, PathSearch};
use crate::fusion::{nn_select, placement_score, triangulate_all, TriangleEstimate, DEFAULT_DET_THRESHOLD};
use crate::modem::{DdFrame, FrameConfig, Modem};
use crate::operator::LinearOperator;
use crate::rng::{stream_rng, Stream};
use crate::scene::{
    ground_truth_links, invert_links, DopplerInversion, InvertedLinks, LinkMeasurement, LinkTruth, NodeSet, Point,
    TargetTruth,
};
use crate::{Cplx, Error, Result, SPEED_OF_LIGHT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    /// Neighbour radius in metres. Unset: three times the predicted
    /// per-triangle position spread, see [`auto_xi`].
    pub xi: Option<f64>,
    /// See [`DEFAULT_DET_THRESHOLD`].
    pub det_threshold: f64,
    /// Lower bound on the diagonal of the measurement covariance.
    pub r_floor: [f64; 4],
    /// Independent receive antennas per node; their estimates are averaged.
    pub n_antennas: usize,
    pub doppler_inversion: DopplerInversion,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            xi: None,
            det_threshold: DEFAULT_DET_THRESHOLD,
            r_floor: [1.0, 1.0, 0.25, 0.25],
            n_antennas: 1,
            doppler_inversion: DopplerInversion::Exact,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(xi) = self.xi {
            if !(xi > 0.0) {
                return Err(Error::config("xi must be positive"));
            }
        }
        if !(self.det_threshold > 0.0 && self.det_threshold < 1.0) {
            return Err(Error::config("det_threshold must lie in (0, 1)"));
        }
        if self.r_floor.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::config("r_floor entries must be non-negative"));
        }
        if self.n_antennas == 0 {
            return Err(Error::config("n_antennas must be at least 1"));
        }
        Ok(())
    }
}

/// Path gain magnitudes and phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainModel {
    /// `|h| = 1`, phase uniform in `[0, 2π)`, drawn once per trial.
    #[default]
    UnitRandomPhase,
    /// `h = 1`.
    Unit,
}

/// `gains[node][target]`, from the `Gains` stream of the trial seed.
pub fn draw_gains(model: GainModel, n_nodes: usize, n_targets: usize, seed: u64) -> Vec<Vec<Cplx>> {
    let mut rng = stream_rng(seed, Stream::Gains);
    (0..n_nodes)
        .map(|_| {
            (0..n_targets)
                .map(|_| match model {
                    GainModel::UnitRandomPhase => Cplx::cis(rng.random_range(0.0..std::f64::consts::TAU)),
                    GainModel::Unit => Cplx::new(1.0, 0.0),
                })
                .collect()
        })
        .collect()
}

/// Everything needed to sense one frame in a fixed scene.
#[derive(Debug, Clone)]
pub struct SensingContext {
    pub frame: FrameConfig,
    pub nodes: NodeSet,
    pub fusion: FusionConfig,
    pub snr_db: f64,
    pub direct_path: bool,
    estimator: PathEstimator,
    modem: Modem,
}

impl SensingContext {
    pub fn new(
        frame: FrameConfig,
        nodes: NodeSet,
        estimator: &EstimatorConfig,
        fusion: FusionConfig,
        snr_db: f64,
    ) -> Result<Self> {
        frame.validate()?;
        nodes.validate()?;
        fusion.validate()?;
        if snr_db.is_nan() {
            return Err(Error::config("SNR is NaN"));
        }
        Ok(Self {
            estimator: estimator.build(&nodes, &frame)?,
            modem: Modem::new(&frame)?,
            direct_path: estimator.direct_path,
            frame,
            nodes,
            fusion,
            snr_db,
        })
    }

    pub fn estimator(&self) -> &PathEstimator {
        &self.estimator
    }

    pub fn modem(&self) -> &Modem {
        &self.modem
    }

    /// Noise variance for the nominal per-sample power `1 + σ_P²`.
    pub fn noise_var(&self) -> f64 {
        snr_to_noise_var(self.snr_db, 1.0 + self.frame.pilot_power)
    }

    fn direct_known(&self, node: usize) -> Option<KnownPath> {
        if node == 0 || !self.direct_path {
            return None;
        }
        let d = (self.nodes.node(node) - self.nodes.anchor).norm();
        let l = (d / SPEED_OF_LIGHT * self.frame.sample_rate()).round() as usize;
        Some(KnownPath {
            delay_idx: l,
            doppler_idx: 0.0,
        })
    }
}

/// One frame as seen by every node.
#[derive(Debug, Clone)]
pub struct Reception {
    pub frame: DdFrame,
    pub bits: Vec<u8>,
    /// Transmitted time-domain samples.
    pub tx: Vec<Cplx>,
    /// `links[target][node]`
    pub links: Vec<Vec<LinkTruth>>,
    /// Per node, the target paths (plus the direct path if modelled).
    pub channels: Vec<ChannelRealization>,
    /// `received[node][antenna]`, time domain.
    pub received: Vec<Vec<Vec<Cplx>>>,
}

impl Reception {
    /// Grid position `(l, k)` of every target on `node`.
    pub fn truth_bins(&self, node: usize) -> Vec<(usize, f64)> {
        let n_targets = self.links.len();
        self.channels[node].paths[..n_targets]
            .iter()
            .map(|p| (p.delay_idx, p.doppler_idx))
            .collect()
    }
}

/// Draws a data frame from the `Data` stream and noise from the `Noise`
/// stream of `seed`, and propagates it to all nodes.
pub fn synthesize(ctx: &SensingContext, targets: &[TargetTruth], gains: &[Vec<Cplx>], seed: u64) -> Result<Reception> {
    let n_nodes = ctx.nodes.z() + 1;
    if gains.len() < n_nodes || gains.iter().any(|g| g.len() < targets.len()) {
        return Err(Error::input("gain table smaller than scene"));
    }
    if targets.is_empty() {
        return Err(Error::input("no targets"));
    }
    let mut data_rng = stream_rng(seed, Stream::Data);
    let (frame, bits) = DdFrame::random(&ctx.frame, &mut data_rng)?;
    let tx = ctx.modem.modulate(&frame.combined())?;

    let links = targets
        .iter()
        .map(|t| ground_truth_links(&ctx.nodes, t, &ctx.frame))
        .collect::<Result<Vec<_>>>()?;
    let var = ctx.noise_var();
    let mut noise_rng = stream_rng(seed, Stream::Noise);
    let mut channels = Vec::with_capacity(n_nodes);
    let mut received = Vec::with_capacity(n_nodes);
    for node in 0..n_nodes {
        let mut paths = links
            .iter()
            .enumerate()
            .map(|(i, l)| ChannelPath::from_physical(gains[node][i], l[node].delay_s, l[node].doppler_hz, &ctx.frame))
            .collect::<Result<Vec<_>>>()?;
        if let Some(k) = ctx.direct_known(node) {
            paths.push(ChannelPath::from_indices(
                Cplx::new(1.0, 0.0),
                k.delay_idx,
                0.0,
                &ctx.frame,
            ));
        }
        let ch = ChannelRealization::new(paths, var);
        ch.validate(&ctx.frame)?;
        let clean = TimeChannel::new(&ch, ctx.frame.len())?.apply(&tx);
        let antennas = (0..ctx.fusion.n_antennas)
            .map(|_| {
                let mut r = clean.clone();
                add_noise(&mut r, var, &mut noise_rng);
                r
            })
            .collect();
        channels.push(ch);
        received.push(antennas);
    }
    Ok(Reception {
        frame,
        bits,
        tx,
        links,
        channels,
        received,
    })
}

fn assignment_cost(e: &PathEstimate, t: &(usize, f64)) -> f64 {
    (e.delay_idx as f64 - t.0 as f64).abs() + (e.doppler_idx - t.1).abs()
}

/// Oracle association: for each target the index of the estimate assigned to
/// it, minimizing the total `|Δl| + |Δk|`. Exhaustive for up to six targets
/// and estimates, greedy beyond.
pub fn associate(estimates: &[PathEstimate], truth: &[(usize, f64)]) -> Vec<Option<usize>> {
    let (ne, nt) = (estimates.len(), truth.len());
    let mut out = vec![None; nt];
    if ne == 0 || nt == 0 {
        return out;
    }
    let cost = |e: usize, t: usize| assignment_cost(&estimates[e], &truth[t]);
    if ne.max(nt) <= 6 {
        // Assign the smaller side injectively into the larger.
        let small_is_targets = nt <= ne;
        let (n_small, n_large) = if small_is_targets { (nt, ne) } else { (ne, nt) };
        let mut best = (f64::INFINITY, Vec::new());
        let mut current = Vec::with_capacity(n_small);
        let mut used = vec![false; n_large];
        #[allow(clippy::too_many_arguments)]
        fn search(
            i: usize,
            n_small: usize,
            n_large: usize,
            acc: f64,
            current: &mut Vec<usize>,
            used: &mut [bool],
            best: &mut (f64, Vec<usize>),
            cost: &dyn Fn(usize, usize) -> f64,
        ) {
            if acc >= best.0 {
                return;
            }
            if i == n_small {
                *best = (acc, current.clone());
                return;
            }
            for j in 0..n_large {
                if !used[j] {
                    used[j] = true;
                    current.push(j);
                    search(i + 1, n_small, n_large, acc + cost(i, j), current, used, best, cost);
                    current.pop();
                    used[j] = false;
                }
            }
        }
        let pair_cost = |s: usize, l: usize| if small_is_targets { cost(l, s) } else { cost(s, l) };
        search(0, n_small, n_large, 0.0, &mut current, &mut used, &mut best, &pair_cost);
        for (s, &l) in best.1.iter().enumerate() {
            if small_is_targets {
                out[s] = Some(l);
            } else {
                out[l] = Some(s);
            }
        }
    } else {
        let mut pairs: Vec<(f64, usize, usize)> = (0..ne)
            .flat_map(|e| (0..nt).map(move |t| (e, t)))
            .map(|(e, t)| (cost(e, t), e, t))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut used_e = vec![false; ne];
        for (_, e, t) in pairs {
            if !used_e[e] && out[t].is_none() {
                used_e[e] = true;
                out[t] = Some(e);
            }
        }
    }
    out
}

/// Fused observation `z = [α, β, v_x, v_y]` of one target.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedMeasurement {
    pub z: Vector4<f64>,
    pub r: Matrix4<f64>,
    pub triangles: Vec<TriangleEstimate>,
    /// Indices into `triangles` of the winning neighbour set.
    pub members: Vec<usize>,
    pub xi: f64,
    pub clamped_ranges: usize,
}

/// Neighbour radius from the placement score: range errors are taken as
/// the uniform delay-quantization error of each link, mapped to the
/// variance of `ρ²/2` and propagated through every triangle. The median
/// per-triangle spread is scaled by three and floored at one range bin.
pub fn auto_xi(links: &InvertedLinks, triangles: &[TriangleEstimate], nodes: &NodeSet, cfg: &FrameConfig) -> f64 {
    let bin = SPEED_OF_LIGHT / cfg.sample_rate();
    let var_mono = (0.5 * bin).powi(2) / 12.0;
    let var_bi = bin * bin / 12.0 + var_mono;
    let mut traces: Vec<f64> = triangles
        .iter()
        .map(|t| {
            let (j, k) = (t.node_pair.0 - 1, t.node_pair.1 - 1);
            let s0 = links.range_anchor.powi(2) * var_mono;
            let sj = links.range_rx[j].powi(2) * var_bi;
            let sk = links.range_rx[k].powi(2) * var_bi;
            placement_score(&nodes.anchor, &nodes.receivers[j], &nodes.receivers[k], s0, sj, sk).trace_cov
        })
        .filter(|t| t.is_finite())
        .collect();
    let floor = 0.5 * bin;
    if traces.is_empty() {
        return floor;
    }
    traces.sort_by(f64::total_cmp);
    let median = traces[traces.len() / 2];
    (3.0 * median.sqrt()).max(floor)
}

/// Triangulates every receiver pair and fuses the results.
/// Returns `None` when no triangle survives.
pub fn fuse_target(
    links: &InvertedLinks,
    nodes: &NodeSet,
    fusion: &FusionConfig,
    cfg: &FrameConfig,
) -> Option<FusedMeasurement> {
    let triangles = triangulate_all(links, nodes, fusion.det_threshold);
    if triangles.is_empty() {
        return None;
    }
    let xi = fusion.xi.unwrap_or_else(|| auto_xi(links, &triangles, nodes, cfg));
    let positions: Vec<Point> = triangles.iter().map(|t| t.position).collect();
    let sel = nn_select(&positions, xi).ok()?;
    let n = sel.members.len() as f64;
    let vel: Point = sel.members.iter().map(|&m| triangles[m].velocity).sum::<Point>() / n;
    let z = Vector4::new(sel.value.x, sel.value.y, vel.x, vel.y);
    let mut r = Matrix4::zeros();
    for c in 0..4 {
        let var = if sel.members.len() > 1 {
            let vals = sel.members.iter().map(|&m| {
                let t = &triangles[m];
                [t.position.x, t.position.y, t.velocity.x, t.velocity.y][c]
            });
            vals.map(|v| (v - z[c]).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        r[(c, c)] = var.max(fusion.r_floor[c]);
    }
    Some(FusedMeasurement {
        z,
        r,
        triangles,
        members: sel.members,
        xi,
        clamped_ranges: links.clamped,
    })
}

/// Per-node path searches of one frame, one per antenna.
pub type NodeSearches = Vec<Vec<PathSearch>>;

/// Turns per-node, per-antenna path estimates into per-target link
/// measurements (averaged over antennas) and inverts them. Targets whose
/// monostatic echo was not found get `None`; missing bistatic links become
/// NaN ranges and are skipped by triangulation.
pub fn invert_targets(
    searches: &NodeSearches,
    reception: &Reception,
    cfg: &FrameConfig,
    mode: DopplerInversion,
) -> Result<Vec<Option<InvertedLinks>>> {
    let n_targets = reception.links.len();
    let n_nodes = searches.len();
    // sums[target][node] = (delay, doppler, count)
    let mut sums = vec![vec![(0.0, 0.0, 0usize); n_nodes]; n_targets];
    for (node, per_antenna) in searches.iter().enumerate() {
        let truth = reception.truth_bins(node);
        for search in per_antenna {
            for (t, e) in associate(&search.estimates, &truth).into_iter().enumerate() {
                if let Some(e) = e {
                    let est = &search.estimates[e];
                    let s = &mut sums[t][node];
                    s.0 += est.delay_s(cfg);
                    s.1 += est.doppler_hz(cfg);
                    s.2 += 1;
                }
            }
        }
    }
    sums.into_iter()
        .map(|per_node| {
            if per_node[0].2 == 0 {
                return Ok(None);
            }
            let meas: Vec<LinkMeasurement> = per_node
                .iter()
                .map(|&(d, f, n)| {
                    let n = n as f64;
                    LinkMeasurement {
                        delay_s: if n > 0.0 { d / n } else { f64::NAN },
                        doppler_hz: if n > 0.0 { f / n } else { f64::NAN },
                    }
                })
                .collect();
            let mut inv = invert_links(&meas, cfg, mode)?;
            // NaN never compares below zero, so missing links were not clamped.
            for (j, m) in meas[1..].iter().enumerate() {
                if m.delay_s.is_nan() {
                    inv.range_rx[j] = f64::NAN;
                    inv.radial_v_rx[j] = f64::NAN;
                }
            }
            Ok(Some(inv))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SensingOutcome {
    pub reception: Reception,
    pub searches: NodeSearches,
    pub inverted: Vec<Option<InvertedLinks>>,
    pub measurements: Vec<Option<FusedMeasurement>>,
}

/// Runs the path search with reference `tx` at every node and antenna.
pub fn search_all(ctx: &SensingContext, reception: &Reception, reference: &[Cplx]) -> Result<NodeSearches> {
    let p = reception.links.len();
    reception
        .received
        .iter()
        .enumerate()
        .map(|(node, antennas)| {
            let known: Vec<KnownPath> = ctx.direct_known(node).into_iter().collect();
            antennas
                .iter()
                .map(|r| ctx.estimator.estimate_time(r, reference, p, &known))
                .collect()
        })
        .collect()
}

/// Active sensing of one frame: every node knows the transmitted frame.
pub fn sense(ctx: &SensingContext, targets: &[TargetTruth], gains: &[Vec<Cplx>], seed: u64) -> Result<SensingOutcome> {
    let reception = synthesize(ctx, targets, gains, seed)?;
    let searches = search_all(ctx, &reception, &reception.tx)?;
    let inverted = invert_targets(&searches, &reception, &ctx.frame, ctx.fusion.doppler_inversion)?;
    let measurements = inverted
        .iter()
        .map(|inv| {
            inv.as_ref()
                .and_then(|l| fuse_target(l, &ctx.nodes, &ctx.fusion, &ctx.frame))
        })
        .collect();
    Ok(SensingOutcome {
        reception,
        searches,
        inverted,
        measurements,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Region;

    fn est(l: usize, k: f64) -> PathEstimate {
        PathEstimate {
            delay_idx: l,
            doppler_idx: k,
            gain: Cplx::new(1.0, 0.0),
            correlation_peak: 1.0,
        }
    }

    #[test]
    fn association_matches_nearest() {
        let e = [est(10, 0.0), est(3, 0.1), est(7, -0.2)];
        let truth = [(3, 0.0), (7, 0.0), (10, 0.0)];
        assert_eq!(associate(&e, &truth), vec![Some(1), Some(2), Some(0)]);
        let fewer = associate(&e[..1], &truth);
        assert_eq!(fewer, vec![None, None, Some(0)]);
        // Greedy path above six.
        let many: Vec<PathEstimate> = (0..8).rev().map(|i| est(2 * i, 0.0)).collect();
        let truth: Vec<(usize, f64)> = (0..8).map(|i| (2 * i, 0.0)).collect();
        let a = associate(&many, &truth);
        assert!(a.iter().enumerate().all(|(t, e)| many[e.unwrap()].delay_idx == 2 * t));
    }

    fn ctx(snr: f64) -> SensingContext {
        let nodes = NodeSet::new(
            Point::new(200.0, 200.0),
            vec![Point::new(400.0, 200.0), Point::new(200.0, 400.0), Point::new(0.0, 0.0)],
            Region::square(400.0),
        )
        .unwrap();
        let frame = FrameConfig {
            m: 64,
            n: 16,
            ..FrameConfig::default()
        };
        SensingContext::new(frame, nodes, &EstimatorConfig::default(), FusionConfig::default(), snr).unwrap()
    }

    #[test]
    fn noiseless_single_target_is_within_quantization() {
        let c = ctx(f64::INFINITY);
        let t = [TargetTruth::new(Point::new(120.0, 260.0), Point::new(0.3, -0.2))];
        let gains = draw_gains(GainModel::UnitRandomPhase, 4, 1, 5);
        let out = sense(&c, &t, &gains, 1).unwrap();
        for node in 0..4 {
            let e = &out.searches[node][0].estimates[0];
            assert_eq!(e.delay_idx, out.reception.truth_bins(node)[0].0);
        }
        let m = out.measurements[0].as_ref().unwrap();
        let bin = SPEED_OF_LIGHT / c.frame.sample_rate();
        assert!((m.z.xy() - t[0].position).norm() < 3.0 * bin, "{}", m.z);
        assert!(m.r[(0, 0)] >= 1.0 && m.r[(3, 3)] >= 0.25);
    }

    #[test]
    fn direct_path_is_notched() {
        let mut c = ctx(f64::INFINITY);
        c.direct_path = true;
        let t = [TargetTruth::new(Point::new(300.0, 320.0), Point::zeros())];
        let gains = draw_gains(GainModel::Unit, 4, 1, 5);
        let out = sense(&c, &t, &gains, 2).unwrap();
        for node in 1..4 {
            assert_eq!(out.reception.channels[node].paths.len(), 2);
            let e = &out.searches[node][0].estimates[0];
            assert_eq!(e.delay_idx, out.reception.truth_bins(node)[0].0);
        }
    }

    #[test]
    fn antennas_are_independent_and_deterministic() {
        let mut c = ctx(0.0);
        c.fusion.n_antennas = 3;
        let t = [TargetTruth::new(Point::new(120.0, 260.0), Point::zeros())];
        let gains = draw_gains(GainModel::UnitRandomPhase, 4, 1, 5);
        let a = synthesize(&c, &t, &gains, 9).unwrap();
        let b = synthesize(&c, &t, &gains, 9).unwrap();
        assert_ne!(a.received[1][0], a.received[1][1]);
        assert_eq!(a.received, b.received);
    }
}
