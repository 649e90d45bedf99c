use serde::{Deserialize, Serialize};

use crate::scene::{NodeSet, Point, Region};
use crate::{Error, Result};

/// Geometry-induced localization error of one triangle.
///
/// The `σ²` inputs are the variances of the errors in `ρ_q² / 2`, which are
/// the entries the squared-range system is built from. With the anchor at
/// the origin and `D = (x_j y_k − x_k y_j)²`,
///
/// ```text
/// σ_α² = [σ_0² (y_k − y_j)² + σ_j² y_k² + σ_k² y_j²] / D
/// σ_β² = [σ_0² (x_k − x_j)² + σ_j² x_k² + σ_k² x_j²] / D
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlacementScore {
    pub trace_cov: f64,
    /// Larger of `σ_α²` and `σ_β²`.
    pub max_eigen_cov: f64,
    pub triangle_area: f64,
}

impl PlacementScore {
    fn degenerate() -> Self {
        Self {
            trace_cov: f64::INFINITY,
            max_eigen_cov: f64::INFINITY,
            triangle_area: 0.0,
        }
    }
}

pub fn placement_score(
    anchor: &Point,
    rx_j: &Point,
    rx_k: &Point,
    var0: f64,
    var_j: f64,
    var_k: f64,
) -> PlacementScore {
    let (j, k) = (rx_j - anchor, rx_k - anchor);
    let cross = j.x * k.y - k.x * j.y;
    let area = 0.5 * cross.abs();
    let d = cross * cross;
    if d <= f64::EPSILON * j.norm_squared() * k.norm_squared() {
        return PlacementScore::degenerate();
    }
    let var_a = (var0 * (k.y - j.y).powi(2) + var_j * k.y * k.y + var_k * j.y * j.y) / d;
    let var_b = (var0 * (k.x - j.x).powi(2) + var_j * k.x * k.x + var_k * j.x * j.x) / d;
    PlacementScore {
        trace_cov: var_a + var_b,
        max_eigen_cov: var_a.max(var_b),
        triangle_area: area,
    }
}

/// Receivers on perpendicular axes through the anchor: `R_j` at
/// `(x_j, 0)` and `R_k` at `(0, y_k)` relative to it.
pub fn orthogonal_score(x_j: f64, y_k: f64, var0: f64, var_j: f64, var_k: f64) -> PlacementScore {
    if x_j == 0.0 || y_k == 0.0 {
        return PlacementScore::degenerate();
    }
    let var_a = (var0 + var_j) / (x_j * x_j);
    let var_b = (var0 + var_k) / (y_k * y_k);
    PlacementScore {
        trace_cov: var_a + var_b,
        max_eigen_cov: var_a.max(var_b),
        triangle_area: 0.5 * (x_j * y_k).abs(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum PlacementMode {
    /// Receivers where the axes through the anchor leave the region.
    #[default]
    Orthogonal,
    /// Exhaustive search over an `n × n` lattice spanning the region.
    GridSearch { lattice: usize },
}

// Mean trace over every receiver pair of the set.
fn set_score(anchor: &Point, rx: &[Point], var: (f64, f64, f64)) -> f64 {
    let mut total = 0.0;
    let mut n = 0;
    for a in 0..rx.len() {
        for b in a + 1..rx.len() {
            total += placement_score(anchor, &rx[a], &rx[b], var.0, var.1, var.2).trace_cov;
            n += 1;
        }
    }
    total / n as f64
}

/// Places `z` receivers for an anchor inside `region`.
///
/// Orthogonal mode fills the axis end points farthest from the anchor first
/// (up to four). Grid search scores every pair of lattice points for the
/// first two receivers and adds further receivers greedily, minimizing the
/// mean trace over all pairs.
pub fn optimize_placement(
    region: &Region,
    anchor: &Point,
    var: (f64, f64, f64),
    mode: PlacementMode,
    z: usize,
) -> Result<NodeSet> {
    region.validate()?;
    if !region.contains(anchor) {
        return Err(Error::config("anchor outside the placement region"));
    }
    if z < 2 {
        return Err(Error::config("need at least two receivers"));
    }
    let receivers = match mode {
        PlacementMode::Orthogonal => {
            let (dx_hi, dx_lo) = (region.x_max - anchor.x, region.x_min - anchor.x);
            let (dy_hi, dy_lo) = (region.y_max - anchor.y, region.y_min - anchor.y);
            let (x_far, x_near) = if dx_hi.abs() >= dx_lo.abs() {
                (dx_hi, dx_lo)
            } else {
                (dx_lo, dx_hi)
            };
            let (y_far, y_near) = if dy_hi.abs() >= dy_lo.abs() {
                (dy_hi, dy_lo)
            } else {
                (dy_lo, dy_hi)
            };
            if x_far.abs() < 1e-9 || y_far.abs() < 1e-9 {
                return Err(Error::config("region too small for orthogonal placement"));
            }
            let mut pts = vec![anchor + Point::new(x_far, 0.0), anchor + Point::new(0.0, y_far)];
            if x_near.abs() > 1e-9 {
                pts.push(anchor + Point::new(x_near, 0.0));
            }
            if y_near.abs() > 1e-9 {
                pts.push(anchor + Point::new(0.0, y_near));
            }
            if z > pts.len() {
                return Err(Error::config(format!(
                    "orthogonal placement has only {} axis end points for {z} receivers",
                    pts.len()
                )));
            }
            pts.truncate(z);
            pts
        }
        PlacementMode::GridSearch { lattice } => {
            if lattice < 2 {
                return Err(Error::config("lattice needs at least 2 points per side"));
            }
            let step = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (lattice - 1) as f64;
            let cand: Vec<Point> = (0..lattice)
                .flat_map(|i| (0..lattice).map(move |j| (i, j)))
                .map(|(i, j)| Point::new(step(region.x_min, region.x_max, i), step(region.y_min, region.y_max, j)))
                .filter(|p| (p - anchor).norm() > 1e-9)
                .collect();
            if cand.len() < z {
                return Err(Error::config("lattice has fewer points than receivers"));
            }
            let mut best = (f64::INFINITY, 0, 0);
            for a in 0..cand.len() {
                for b in a + 1..cand.len() {
                    let s = placement_score(anchor, &cand[a], &cand[b], var.0, var.1, var.2).trace_cov;
                    if s < best.0 {
                        best = (s, a, b);
                    }
                }
            }
            if !best.0.is_finite() {
                return Err(Error::config("every lattice pair is collinear with the anchor"));
            }
            let mut chosen = vec![cand[best.1], cand[best.2]];
            while chosen.len() < z {
                let mut pick = (f64::INFINITY, None);
                for c in &cand {
                    if chosen.contains(c) {
                        continue;
                    }
                    let mut trial = chosen.clone();
                    trial.push(*c);
                    let s = set_score(anchor, &trial, var);
                    if s < pick.0 || pick.1.is_none() {
                        pick = (s, Some(*c));
                    }
                }
                chosen.push(pick.1.expect("enough candidates"));
            }
            chosen
        }
    };
    NodeSet::new(*anchor, receivers, *region)
}
