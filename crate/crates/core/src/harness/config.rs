use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::estimator::EstimatorConfig;
use crate::fusion::PlacementMode;
use crate::isac::IsacConfig;
use crate::modem::FrameConfig;
use crate::motion::MotionParams;
use crate::scene::{Point, Region, TargetTruth};
use crate::sensing::FusionConfig;
use crate::tracker::TrackerConfig;
use crate::{Error, Result};

/// Pipelines a sweep can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// Active sensing, random receiver placement.
    #[serde(rename = "Act_Sen_Rnd")]
    ActSenRnd,
    /// Active sensing, optimized placement.
    #[serde(rename = "Act_Sen_Opt")]
    ActSenOpt,
    /// Active sensing, optimized placement, Kalman filtered.
    #[serde(rename = "KF_Act_Sen_Opt")]
    KfActSenOpt,
    /// Passive ISAC, random placement.
    #[serde(rename = "ISAC_Rnd")]
    IsacRnd,
    /// Passive ISAC, optimized placement.
    #[serde(rename = "ISAC_Opt")]
    IsacOpt,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::ActSenRnd,
        Scheme::ActSenOpt,
        Scheme::KfActSenOpt,
        Scheme::IsacRnd,
        Scheme::IsacOpt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::ActSenRnd => "Act_Sen_Rnd",
            Scheme::ActSenOpt => "Act_Sen_Opt",
            Scheme::KfActSenOpt => "KF_Act_Sen_Opt",
            Scheme::IsacRnd => "ISAC_Rnd",
            Scheme::IsacOpt => "ISAC_Opt",
        }
    }

    pub fn random_placement(self) -> bool {
        matches!(self, Scheme::ActSenRnd | Scheme::IsacRnd)
    }

    pub fn is_isac(self) -> bool {
        matches!(self, Scheme::IsacRnd | Scheme::IsacOpt)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s.trim())
            .ok_or_else(|| Error::config(format!("unknown scheme id {s:?}")))
    }
}

fn default_anchor() -> Point {
    Point::new(200.0, 200.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub anchor: Point,
    /// Fixed receivers for `track-demo` and `placement-eval`; sweeps place
    /// receivers per scheme.
    pub receivers: Vec<Point>,
    /// Receiver count Z used by the placement schemes.
    pub n_receivers: usize,
    pub region: Region,
    /// Initial target states; missing ones are drawn at random.
    pub targets: Vec<TargetTruth>,
    pub placement: PlacementMode,
    /// `σ²` triple `(anchor, j, k)` handed to the placement optimizer.
    pub placement_var: [f64; 3],
    /// Random targets keep this distance from the region edge (m).
    pub target_margin: f64,
    /// Random targets and receivers keep this distance from other nodes (m).
    pub min_node_distance: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            anchor: default_anchor(),
            receivers: Vec::new(),
            n_receivers: 3,
            region: Region::default(),
            targets: Vec::new(),
            placement: PlacementMode::Orthogonal,
            placement_var: [1.0, 1.0, 1.0],
            target_margin: 20.0,
            min_node_distance: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// SNR points in dB; `inf` is allowed.
    pub snr_db: Vec<f64>,
    pub target_counts: Vec<usize>,
    pub schemes: Vec<Scheme>,
    pub trials: usize,
    /// Tracking steps L per trial for the sensing schemes.
    pub steps: usize,
    pub master_seed: u64,
    /// Force infinite SNR everywhere.
    pub noiseless: bool,
    /// Store wall-clock time per trial; off keeps outputs reproducible.
    pub record_runtime: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            snr_db: vec![0.0],
            target_counts: vec![1],
            schemes: Scheme::ALL.to_vec(),
            trials: 100,
            steps: 60,
            master_seed: 0,
            noiseless: false,
            record_runtime: false,
        }
    }
}

/// Complete simulation configuration, read from TOML.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub frame: FrameConfig,
    pub scene: SceneConfig,
    pub motion: MotionParams,
    pub estimator: EstimatorConfig,
    pub fusion: FusionConfig,
    pub isac: IsacConfig,
    pub tracker: TrackerConfig,
    pub sweep: SweepConfig,
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.frame.validate()?;
        self.scene.region.validate()?;
        if !self.scene.region.contains(&self.scene.anchor) {
            return Err(Error::config("anchor outside region"));
        }
        if self.scene.n_receivers < 2 {
            return Err(Error::config("n_receivers must be at least 2"));
        }
        if self.scene.placement_var.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::config("placement_var entries must be positive"));
        }
        let r = &self.scene.region;
        if !(self.scene.target_margin >= 0.0) || 2.0 * self.scene.target_margin >= r.width().min(r.height()) {
            return Err(Error::config("target_margin leaves no room for targets"));
        }
        for t in &self.scene.targets {
            if !self.scene.region.contains(&t.position) {
                return Err(Error::config("configured target outside region"));
            }
        }
        self.motion.validate()?;
        self.fusion.validate()?;
        self.isac.validate()?;
        self.tracker.validate()?;
        let s = &self.sweep;
        if s.trials == 0 {
            return Err(Error::config("trials must be at least 1"));
        }
        if s.snr_db.is_empty() || s.target_counts.is_empty() || s.schemes.is_empty() {
            return Err(Error::config("sweep lists must not be empty"));
        }
        if s.snr_db.iter().any(|x| x.is_nan()) {
            return Err(Error::config("SNR list contains NaN"));
        }
        if s.target_counts.contains(&0) {
            return Err(Error::config("target counts must be positive"));
        }
        if s.steps == 0 && s.schemes.iter().any(|x| !x.is_isac()) {
            return Err(Error::config("sensing schemes need at least one step"));
        }
        Ok(())
    }

    /// Frame, search and sweep sizes used by the quick presets
    /// (M = 64, N = 16).
    pub fn quick() -> Self {
        let mut c = Self::default();
        c.frame.m = 64;
        c.frame.n = 16;
        c.frame.cyclic_prefix = 16;
        c
    }
}

/// Parses `"0,5,10"` style lists.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    s.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| {
            x.trim()
                .parse::<T>()
                .map_err(|e| Error::config(format!("bad list item {x:?}: {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = SimConfig::default();
        c.validate().unwrap();
        let back = SimConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_toml() {
        let c = SimConfig::from_toml(
            r#"
            [frame]
            M = 64
            N = 16
            [sweep]
            snr_db = [-10.0, 0.0]
            schemes = ["Act_Sen_Opt", "ISAC_Rnd"]
            trials = 3
            "#,
        )
        .unwrap();
        assert_eq!((c.frame.m, c.frame.n), (64, 16));
        assert_eq!(c.sweep.schemes, vec![Scheme::ActSenOpt, Scheme::IsacRnd]);
        assert_eq!(c.frame.delta_f, 240e3);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(SimConfig::from_toml("[frame]\nM = 1\n").is_err());
        assert!(SimConfig::from_toml("[sweep]\nschemes = [\"Nope\"]\n").is_err());
        assert!(SimConfig::from_toml("[sweep]\ntrials = 0\n").is_err());
        assert!(SimConfig::from_toml("[bogus]\n").is_err());
        assert!("Nope".parse::<Scheme>().is_err());
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list::<f64>("0, 5,10").unwrap(), vec![0.0, 5.0, 10.0]);
        assert_eq!(parse_list::<Scheme>("ISAC_Opt").unwrap(), vec![Scheme::IsacOpt]);
        assert!(parse_list::<usize>("1,x").is_err());
    }
}
