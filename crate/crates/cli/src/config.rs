//! Run configuration: a TOML file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use scalestream_core::partitioner::DEFAULT_CUTS;
use scalestream_core::scanner::{default_pose, place_cameras, PlacementConfig};
use scalestream_core::{
    CameraPose, LissajousConfig, PartitionSpec, PredictorConfig, Scene, TimingModel, UpdateConfig, Vec3,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseConfig {
    pub position: [f64; 3],
    pub target: [f64; 3],
}

/// Settings visited by `sweep`: every tick duration for every seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Seeds to repeat each setting with; the run seed alone when absent.
    pub seeds: Option<Vec<u64>>,
    pub tick_durations: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            seeds: None,
            tick_durations: (0..10).map(|k| 1e-8 * 10f64.powf(f64::from(k) / 3.0)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds camera placement as well as every stochastic component.
    pub seed: u64,
    /// Scene description; the built-in office room when absent.
    pub scene: Option<PathBuf>,
    /// Pre-recorded stream; replaces scanning when present.
    pub stream: Option<PathBuf>,
    pub pose: Option<PoseConfig>,
    pub cuts: Vec<u32>,
    pub scan: LissajousConfig,
    pub placement: PlacementConfig,
    pub predictor: PredictorConfig,
    pub update: UpdateConfig,
    pub timing: TimingModel,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scene: None,
            stream: None,
            pose: None,
            cuts: DEFAULT_CUTS.to_vec(),
            scan: LissajousConfig::default(),
            placement: PlacementConfig::default(),
            predictor: PredictorConfig::default(),
            update: UpdateConfig::default(),
            timing: TimingModel::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Vec<String>> {
        let text = std::fs::read_to_string(path).map_err(|e| vec![format!("cannot read {}: {e}", path.display())])?;
        toml::from_str(&text).map_err(|e| vec![format!("{}: {e}", path.display())])
    }

    /// Every problem with the configuration, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut push = |r: scalestream_core::Result<()>| {
            if let Err(e) = r {
                out.push(e.to_string());
            }
        };
        push(self.scan.validate());
        push(self.predictor.validate());
        push(self.update.validate());
        push(self.timing.validate());
        push(PartitionSpec::new(self.cuts.clone()).map(|_| ()));
        if self.placement.pitch <= 0.0 || !self.placement.pitch.is_finite() {
            out.push(format!("placement pitch must be positive, got {}", self.placement.pitch));
        }
        if self.sweep.seeds.as_ref().is_some_and(Vec::is_empty) {
            out.push("sweep seeds must not be empty".into());
        }
        if self.sweep.tick_durations.is_empty() {
            out.push("sweep tick_durations must not be empty".into());
        }
        if let Some(t) = self.sweep.tick_durations.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            out.push(format!("sweep tick durations must be positive, got {t}"));
        }
        for (what, path) in [("scene", &self.scene), ("stream", &self.stream)] {
            if let Some(p) = path {
                if !p.is_file() {
                    out.push(format!("{what} file {} does not exist", p.display()));
                }
            }
        }
        if let Some(pose) = &self.pose {
            if pose.position == pose.target {
                out.push("pose position and target coincide".into());
            }
        }
        out
    }

    pub fn spec(&self) -> PartitionSpec {
        PartitionSpec::new(self.cuts.clone()).expect("validated")
    }

    pub fn scene(&self) -> scalestream_core::Result<Scene> {
        match &self.scene {
            Some(p) => Scene::load(p),
            None => Ok(Scene::default_room()),
        }
    }

    pub fn pose(&self, scene: &Scene, seed: u64) -> scalestream_core::Result<CameraPose> {
        match &self.pose {
            Some(p) => Ok(CameraPose::new(Vec3::from(p.position), Vec3::from(p.target))),
            None if self.placement == PlacementConfig::default() => default_pose(scene, seed),
            None => place_cameras(scene, 1, seed, &self.placement)?
                .into_iter()
                .next()
                .ok_or(scalestream_core::Error::NoCameraCandidates),
        }
    }

    pub fn sweep_seeds(&self) -> Vec<u64> {
        self.sweep.seeds.clone().unwrap_or_else(|| vec![self.seed])
    }

    /// The configuration with `seed` propagated to every seeded component.
    pub fn seeded(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c.predictor.seed = seed;
        c.scan.dropout_seed = seed;
        c
    }

    /// SHA-256 of the canonical JSON rendering.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedList(pub Vec<u64>);

/// `a..b` (exclusive) or a comma-separated list.
pub fn parse_seeds(s: &str) -> Result<SeedList, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| format!("invalid seed range {s:?}"))?;
        let b: u64 = b.trim().parse().map_err(|_| format!("invalid seed range {s:?}"))?;
        return Ok(SeedList((a..b).collect()));
    }
    s.split(',')
        .map(|c| c.trim().parse::<u64>().map_err(|_| format!("invalid seed {c:?}")))
        .collect::<Result<_, _>>()
        .map(SeedList)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let c = RunConfig::default();
        assert!(c.problems().is_empty());
        let text = toml::to_string(&c).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn all_problems_are_listed() {
        let mut c = RunConfig {
            cuts: vec![5, 3],
            ..RunConfig::default()
        };
        c.update.k = 0;
        c.timing.tick_duration = -1.0;
        c.scan.fx = 0.0;
        c.sweep.tick_durations.clear();
        assert_eq!(c.problems().len(), 5, "{:?}", c.problems());
    }

    #[test]
    fn default_sweep_spans_three_decades() {
        let c = RunConfig::default();
        let t = &c.sweep.tick_durations;
        assert_eq!(t.len(), 10);
        assert!((t[0] - 1e-8).abs() < 1e-20 && (t[9] - 1e-5).abs() < 1e-17);
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(c.seeded(4).sweep_seeds(), vec![4]);
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let b = a.seeded(3);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(b.predictor.seed, 3);
    }

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("2..5").unwrap(), SeedList(vec![2, 3, 4]));
        assert_eq!(parse_seeds("7, 1").unwrap(), SeedList(vec![7, 1]));
        assert!(parse_seeds("1,x").is_err());
    }
}
