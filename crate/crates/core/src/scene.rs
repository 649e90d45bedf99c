//! Planar multistatic geometry: one transmitting anchor, Z passive
//! receivers and point targets, plus the delay/Doppler each link sees.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::modem::FrameConfig;
use crate::{Error, Result, SPEED_OF_LIGHT};

pub type Point = Vector2<f64>;

/// Axis-aligned deployment area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for Region {
    fn default() -> Self {
        Self::square(400.0)
    }
}

impl Region {
    pub fn square(side: f64) -> Self {
        Self {
            x_min: 0.0,
            x_max: side,
            y_min: 0.0,
            y_max: side,
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    /// Longest distance between two points of the region.
    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !ok || self.width() <= 0.0 || self.height() <= 0.0 {
            return Err(Error::config(format!("degenerate region {self:?}")));
        }
        Ok(())
    }
}

/// Anchor `A0` (transmitter + monostatic receiver) and receivers `R1..RZ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSet {
    pub anchor: Point,
    pub receivers: Vec<Point>,
    #[serde(default)]
    pub region: Region,
}

impl NodeSet {
    pub fn new(anchor: Point, receivers: Vec<Point>, region: Region) -> Result<Self> {
        let n = Self {
            anchor,
            receivers,
            region,
        };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        self.region.validate()?;
        if self.receivers.len() < 2 {
            return Err(Error::config(format!(
                "need at least 2 receivers, got {}",
                self.receivers.len()
            )));
        }
        if !self.region.contains(&self.anchor) {
            return Err(Error::config("anchor outside region"));
        }
        for (j, r) in self.receivers.iter().enumerate() {
            if !self.region.contains(r) {
                return Err(Error::config(format!("receiver {} outside region", j + 1)));
            }
            if (r - self.anchor).norm() < 1e-9 {
                return Err(Error::config(format!("receiver {} coincides with the anchor", j + 1)));
            }
        }
        Ok(())
    }

    pub fn z(&self) -> usize {
        self.receivers.len()
    }

    /// Node `q`: 0 is the anchor, `1..=Z` the receivers.
    pub fn node(&self, q: usize) -> Point {
        if q == 0 {
            self.anchor
        } else {
            self.receivers[q - 1]
        }
    }

    /// Copy with every coordinate shifted so the anchor sits at the origin.
    pub fn anchor_relative(&self) -> Vec<Point> {
        self.receivers.iter().map(|r| r - self.anchor).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetTruth {
    pub position: Point,
    pub velocity: Point,
}

impl TargetTruth {
    pub fn new(position: Point, velocity: Point) -> Self {
        Self { position, velocity }
    }
}

/// Link `0` is the anchor's monostatic echo, link `j ≥ 1` the bistatic
/// path anchor → target → receiver `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkTruth {
    pub node: usize,
    pub range_anchor: f64,
    /// Equals `range_anchor` on the monostatic link.
    pub range_rx: f64,
    pub radial_v_anchor: f64,
    pub radial_v_rx: f64,
    pub delay_s: f64,
    pub doppler_hz: f64,
}

fn range_and_radial(node: &Point, target: &TargetTruth) -> Result<(f64, f64)> {
    let los = node - target.position;
    let rho = los.norm();
    if rho < 1e-9 {
        return Err(Error::DegenerateGeometry("target coincides with a node".into()));
    }
    Ok((rho, target.velocity.dot(&los) / rho))
}

/// Delay and Doppler of the monostatic and all bistatic links.
pub fn ground_truth_links(nodes: &NodeSet, target: &TargetTruth, cfg: &FrameConfig) -> Result<Vec<LinkTruth>> {
    let c = SPEED_OF_LIGHT;
    let (rho0, v0) = range_and_radial(&nodes.anchor, target)?;
    let mut links = Vec::with_capacity(nodes.z() + 1);
    links.push(LinkTruth {
        node: 0,
        range_anchor: rho0,
        range_rx: rho0,
        radial_v_anchor: v0,
        radial_v_rx: v0,
        delay_s: 2.0 * rho0 / c,
        doppler_hz: 2.0 * v0 * cfg.f_c / c,
    });
    for (j, r) in nodes.receivers.iter().enumerate() {
        let (rho, v) = range_and_radial(r, target)?;
        links.push(LinkTruth {
            node: j + 1,
            range_anchor: rho0,
            range_rx: rho,
            radial_v_anchor: v0,
            radial_v_rx: v,
            delay_s: (rho0 + rho) / c,
            doppler_hz: (v0 + v) * cfg.f_c / c,
        });
    }
    Ok(links)
}

/// How a bistatic Doppler is turned into the receiver-side radial speed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DopplerInversion {
    /// `v_j = ν_j c / f_c − v_0`, the inverse of the forward model.
    #[default]
    Exact,
    /// `v_j = (ν_j − ν_0) c / f_c`, kept for comparison.
    Literal,
}

/// Delay/Doppler measured on one link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkMeasurement {
    pub delay_s: f64,
    pub doppler_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedLinks {
    pub range_anchor: f64,
    pub radial_v_anchor: f64,
    /// Indexed by receiver, `0..Z`.
    pub range_rx: Vec<f64>,
    pub radial_v_rx: Vec<f64>,
    /// Ranges that came out negative and were clamped to zero.
    pub clamped: usize,
}

/// Ranges and radial velocities from measured delays and Dopplers.
/// `links[0]` is the monostatic measurement.
pub fn invert_links(links: &[LinkMeasurement], cfg: &FrameConfig, mode: DopplerInversion) -> Result<InvertedLinks> {
    let Some((mono, rest)) = links.split_first() else {
        return Err(Error::input("no monostatic measurement"));
    };
    let c = SPEED_OF_LIGHT;
    let mut clamped = 0;
    let mut rho0 = mono.delay_s * c / 2.0;
    if rho0 < 0.0 {
        rho0 = 0.0;
        clamped += 1;
    }
    let v0 = mono.doppler_hz * c / (2.0 * cfg.f_c);
    let mut range_rx = Vec::with_capacity(rest.len());
    let mut radial_v_rx = Vec::with_capacity(rest.len());
    for m in rest {
        let mut rho = m.delay_s * c - rho0;
        if rho < 0.0 {
            rho = 0.0;
            clamped += 1;
        }
        range_rx.push(rho);
        radial_v_rx.push(match mode {
            DopplerInversion::Exact => m.doppler_hz * c / cfg.f_c - v0,
            DopplerInversion::Literal => (m.doppler_hz - mono.doppler_hz) * c / cfg.f_c,
        });
    }
    Ok(InvertedLinks {
        range_anchor: rho0,
        radial_v_anchor: v0,
        range_rx,
        radial_v_rx,
        clamped,
    })
}
