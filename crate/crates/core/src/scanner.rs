//! Lissajous-scanning depth sensor over synthetic labeled rooms.
//!
//! One ray is cast per tick. The ray direction follows a Lissajous figure in
//! the camera's angular field of view, so a coarse but spatially complete
//! cloud is available after a short time and later ticks densify it.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Vec3};
use crate::point_stream::{Label, LabelMap, PointStream, Tick, TimedPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LissajousConfig {
    pub fx: f64,
    pub fy: f64,
    /// Phase offset on the vertical (fast) axis, radians.
    pub phase: f64,
    /// Horizontal half field of view, radians.
    pub amp_x: f64,
    /// Vertical half field of view, radians.
    pub amp_y: f64,
    pub ticks: u32,
    /// Ticks spanning one unit of the frequency scale.
    pub ticks_per_period: f64,
    /// Per-tick probability that a ray produces no detection.
    pub dropout: f64,
    pub dropout_seed: u64,
}

impl Default for LissajousConfig {
    fn default() -> Self {
        Self {
            fx: 1.1,
            fy: 1.8,
            phase: 0.0,
            amp_x: 0.6,
            amp_y: 0.6,
            ticks: 65536,
            ticks_per_period: 100.0 * SQRT_2,
            dropout: 0.0,
            dropout_seed: 0,
        }
    }
}

impl LissajousConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.fx > 0.0 && self.fx.is_finite()) {
            problems.push(format!("fx must be positive, got {}", self.fx));
        }
        if !(self.fy > 0.0 && self.fy.is_finite()) {
            problems.push(format!("fy must be positive, got {}", self.fy));
        }
        for (name, amp) in [("amp_x", self.amp_x), ("amp_y", self.amp_y)] {
            if !(amp > 0.0 && amp <= FRAC_PI_2) {
                problems.push(format!("{name} must lie in (0, pi/2], got {amp}"));
            }
        }
        if self.ticks < 1 {
            problems.push("ticks must be at least 1".into());
        }
        if !(self.ticks_per_period > 0.0 && self.ticks_per_period.is_finite()) {
            problems.push(format!(
                "ticks_per_period must be positive, got {}",
                self.ticks_per_period
            ));
        }
        if !self.phase.is_finite() {
            problems.push("phase must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.dropout) {
            problems.push(format!("dropout must be a probability, got {}", self.dropout));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Horizontal and vertical deflection angles at (possibly fractional) tick `t`.
    pub fn deflection(&self, t: f64) -> (f64, f64) {
        let w = 2.0 * PI * t / self.ticks_per_period;
        (
            self.amp_x * (w * self.fx).sin(),
            self.amp_y * (w * self.fy + self.phase).sin(),
        )
    }
}

/// Unit ray direction in the camera frame at tick `t`.
///
/// The camera frame is (right, up, forward). The forward axis is yawed by the
/// horizontal deflection and then pitched by the vertical one.
pub fn lissajous_direction(cfg: &LissajousConfig, t: f64) -> Vec3 {
    let (yaw, pitch) = cfg.deflection(t);
    Vec3::new(
        pitch.cos() * yaw.sin(),
        pitch.sin(),
        pitch.cos() * yaw.cos(),
    )
}

/// Inverse of [`lissajous_direction`]: (yaw, pitch) of a camera-frame direction.
pub fn direction_angles(local: Vec3) -> (f64, f64) {
    let local = local.normalized();
    (local.x.atan2(local.z), local.y.clamp(-1.0, 1.0).asin())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: Vec3,
    pub target: Vec3,
}

/// Orthonormal camera basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraFrame {
    pub right: Vec3,
    pub up: Vec3,
    pub forward: Vec3,
}

impl CameraFrame {
    pub fn to_world(&self, local: Vec3) -> Vec3 {
        self.right * local.x + self.up * local.y + self.forward * local.z
    }

    pub fn to_local(&self, world: Vec3) -> Vec3 {
        Vec3::new(world.dot(self.right), world.dot(self.up), world.dot(self.forward))
    }
}

impl CameraPose {
    pub fn new(position: Vec3, target: Vec3) -> Self {
        Self { position, target }
    }

    pub fn validate(&self, room: &Aabb) -> Result<()> {
        if self.position == self.target {
            return Err(Error::Config("camera position equals its target".into()));
        }
        if !self.position.is_finite() || !self.target.is_finite() {
            return Err(Error::Config("camera pose is not finite".into()));
        }
        if !room.contains(self.position) {
            return Err(Error::Config("camera position is outside the room".into()));
        }
        Ok(())
    }

    pub fn frame(&self) -> CameraFrame {
        let forward = (self.target - self.position).normalized();
        let world_up = if forward.cross(Vec3::Z).norm() < 1e-9 {
            Vec3::Y
        } else {
            Vec3::Z
        };
        let right = forward.cross(world_up).normalized();
        let up = right.cross(forward);
        CameraFrame { right, up, forward }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimitiveKind {
    Box,
    Rect,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    pub kind: PrimitiveKind,
    pub bounds: Aabb,
    pub label: Label,
}

impl Primitive {
    pub fn ray_intersect(&self, origin: Vec3, direction: Vec3) -> Option<(f64, Vec3)> {
        self.bounds.ray_intersect(origin, direction)
    }
}

/// A labeled room made of axis-aligned boxes and rectangles.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub name: String,
    labels: LabelMap,
    room: Aabb,
    primitives: Vec<Primitive>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    name: String,
    #[serde(default)]
    classes: Option<Vec<String>>,
    room: RoomFile,
    #[serde(default, rename = "primitive")]
    primitives: Vec<PrimitiveFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RoomFile {
    min: [f64; 3],
    max: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PrimitiveFile {
    kind: PrimitiveKind,
    label: String,
    min: [f64; 3],
    max: [f64; 3],
}

impl Scene {
    pub fn new(
        name: impl Into<String>,
        labels: LabelMap,
        room: Aabb,
        primitives: Vec<Primitive>,
    ) -> Result<Self> {
        if !(0..3).all(|a| room.extent(a) > 0.0) {
            return Err(Error::Scene("room box is degenerate".into()));
        }
        for (i, p) in primitives.iter().enumerate() {
            if usize::from(p.label) >= labels.len() {
                return Err(Error::Scene(format!(
                    "primitive {i} has label {} but only {} classes exist",
                    p.label,
                    labels.len()
                )));
            }
            if !p.bounds.min.is_finite() || !p.bounds.max.is_finite() {
                return Err(Error::Scene(format!("primitive {i} is not finite")));
            }
            let flat = (0..3).filter(|&a| p.bounds.extent(a) == 0.0).count();
            let inverted = (0..3).any(|a| p.bounds.extent(a) < 0.0);
            let ok = !inverted
                && match p.kind {
                    PrimitiveKind::Box => flat == 0,
                    PrimitiveKind::Rect => flat == 1,
                };
            if !ok {
                return Err(Error::Scene(format!(
                    "primitive {i} ({:?}) has invalid extents",
                    p.kind
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            labels,
            room,
            primitives,
        })
    }

    pub fn labels(&self) -> &LabelMap {
        &self.labels
    }

    pub fn room(&self) -> &Aabb {
        &self.room
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    /// Nearest hit over all primitives; equal distances go to the lower index.
    pub fn cast(&self, origin: Vec3, direction: Vec3) -> Option<(f64, Vec3, usize)> {
        let mut best: Option<(f64, Vec3, usize)> = None;
        for (i, prim) in self.primitives.iter().enumerate() {
            if let Some((d, p)) = prim.ray_intersect(origin, direction) {
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, p, i));
                }
            }
        }
        best
    }

    /// A furnished 6 x 5 x 3 m office using all eleven room classes.
    pub fn default_room() -> Self {
        let labels = LabelMap::room_classes();
        let l = |name: &str| labels.label_of(name).expect("room class");
        let v = Vec3::new;
        let rect = |min: Vec3, max: Vec3, label| Primitive {
            kind: PrimitiveKind::Rect,
            bounds: Aabb::new(min, max),
            label,
        };
        let solid = |min: Vec3, max: Vec3, label| Primitive {
            kind: PrimitiveKind::Box,
            bounds: Aabb::new(min, max),
            label,
        };
        let (wall, table, chair, clutter) = (l("wall"), l("table"), l("chair"), l("clutter"));
        let primitives = vec![
            rect(v(0.0, 0.0, 0.0), v(6.0, 5.0, 0.0), l("floor")),
            rect(v(0.0, 0.0, 0.0), v(0.0, 5.0, 3.0), wall),
            rect(v(6.0, 0.0, 0.0), v(6.0, 5.0, 3.0), wall),
            rect(v(0.0, 0.0, 0.0), v(6.0, 0.0, 3.0), wall),
            rect(v(0.0, 5.0, 0.0), v(6.0, 5.0, 3.0), wall),
            solid(v(2.8, 3.8, 0.0), v(3.2, 4.2, 3.0), l("column")),
            solid(v(5.98, 1.0, 1.0), v(6.0, 2.5, 2.2), l("window")),
            solid(v(4.0, 0.0, 0.0), v(5.0, 0.02, 2.1), l("door")),
            solid(v(0.0, 1.5, 0.9), v(0.02, 3.5, 2.0), l("board")),
            solid(v(1.0, 4.6, 0.0), v(2.5, 5.0, 2.0), l("bookcase")),
            solid(v(4.5, 3.6, 0.0), v(5.8, 4.6, 0.8), l("sofa")),
            solid(v(2.0, 1.5, 0.7), v(4.0, 3.0, 0.75), table),
            solid(v(2.05, 1.55, 0.0), v(2.1, 1.6, 0.7), table),
            solid(v(3.9, 1.55, 0.0), v(3.95, 1.6, 0.7), table),
            solid(v(2.05, 2.9, 0.0), v(2.1, 2.95, 0.7), table),
            solid(v(3.9, 2.9, 0.0), v(3.95, 2.95, 0.7), table),
            solid(v(1.4, 1.9, 0.0), v(1.85, 2.35, 0.95), chair),
            solid(v(4.15, 2.0, 0.0), v(4.6, 2.45, 0.95), chair),
            solid(v(2.8, 0.9, 0.0), v(3.25, 1.35, 0.95), chair),
            solid(v(2.5, 2.0, 0.75), v(2.8, 2.3, 0.95), clutter),
            solid(v(3.3, 2.4, 0.75), v(3.5, 2.6, 0.85), clutter),
            solid(v(0.3, 0.3, 0.0), v(0.8, 0.7, 0.5), clutter),
        ];
        Scene::new(
            "default-office",
            labels,
            Aabb::new(v(0.0, 0.0, 0.0), v(6.0, 5.0, 3.0)),
            primitives,
        )
        .expect("default room is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: SceneFile =
            toml::from_str(text).map_err(|e| Error::Scene(format!("parse error: {e}")))?;
        let labels = match file.classes {
            Some(names) => LabelMap::new(names)?,
            None => LabelMap::room_classes(),
        };
        let primitives = file
            .primitives
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let label = labels.label_of(&p.label).ok_or_else(|| {
                    Error::Scene(format!("primitive {i} uses unknown class {:?}", p.label))
                })?;
                Ok(Primitive {
                    kind: p.kind,
                    bounds: Aabb::new(p.min.into(), p.max.into()),
                    label,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Scene::new(
            file.name,
            labels,
            Aabb::new(file.room.min.into(), file.room.max.into()),
            primitives,
        )
    }

    pub fn to_toml(&self) -> String {
        let file = SceneFile {
            name: self.name.clone(),
            classes: Some(self.labels.names().to_vec()),
            room: RoomFile {
                min: self.room.min.into(),
                max: self.room.max.into(),
            },
            primitives: self
                .primitives
                .iter()
                .map(|p| PrimitiveFile {
                    kind: p.kind,
                    label: self.labels.name(p.label).unwrap_or_default().to_string(),
                    min: p.bounds.min.into(),
                    max: p.bounds.max.into(),
                })
                .collect(),
        };
        toml::to_string(&file).expect("scene serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Scene::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Constraints on virtual camera placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementConfig {
    /// Inward offset of the candidate planes from each outer wall, meters.
    pub wall_offset: f64,
    /// Grid pitch on the candidate planes, meters.
    pub pitch: f64,
    pub min_altitude: f64,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            wall_offset: 0.05,
            pitch: 0.1,
            min_altitude: 1.5,
        }
    }
}

pub const DEFAULT_MAX_POSES: usize = 50;

fn grid_values(start: f64, end: f64, pitch: f64) -> Vec<f64> {
    if end < start - 1e-9 {
        return Vec::new();
    }
    let steps = ((end - start) / pitch + 1e-9).floor() as usize;
    (0..=steps).map(|k| start + k as f64 * pitch).collect()
}

/// All grid positions on the four wall-parallel candidate planes that lie at
/// or above the minimum altitude and outside every solid primitive.
pub fn camera_candidates(scene: &Scene, cfg: &PlacementConfig) -> Vec<Vec3> {
    let room = scene.room();
    let off = cfg.wall_offset;
    let (x0, x1) = (room.min.x + off, room.max.x - off);
    let (y0, y1) = (room.min.y + off, room.max.y - off);
    let z_start = cfg.min_altitude.max(room.min.z + off);
    let zs = grid_values(z_start, room.max.z - off, cfg.pitch);
    let xs = grid_values(x0, x1, cfg.pitch);
    let ys = grid_values(y0, y1, cfg.pitch);

    let mut out = Vec::new();
    for &z in &zs {
        for &y in &ys {
            out.push(Vec3::new(x0, y, z));
            out.push(Vec3::new(x1, y, z));
        }
        for &x in &xs {
            out.push(Vec3::new(x, y0, z));
            out.push(Vec3::new(x, y1, z));
        }
    }
    // Corner columns appear on two planes.
    let key = |p: Vec3| p.to_array().map(|c| (c * 1e6).round() as i64);
    let mut seen = HashSet::with_capacity(out.len());
    let mut unique: Vec<Vec3> = out.into_iter().filter(|&p| seen.insert(key(p))).collect();
    unique.retain(|&p| {
        room.contains(p)
            && !scene
                .primitives()
                .iter()
                .any(|prim| prim.kind == PrimitiveKind::Box && prim.bounds.contains_strictly(p))
    });
    unique
}

/// Samples up to `max_poses` distinct candidate positions, each aimed at the
/// room center.
pub fn place_cameras(
    scene: &Scene,
    max_poses: usize,
    seed: u64,
    cfg: &PlacementConfig,
) -> Result<Vec<CameraPose>> {
    if scene.room().max.z < cfg.min_altitude {
        return Err(Error::NoCameraCandidates);
    }
    let candidates = camera_candidates(scene, cfg);
    if candidates.is_empty() {
        return Err(Error::NoCameraCandidates);
    }
    let target = scene.room().center();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amount = max_poses.min(candidates.len());
    Ok(index::sample(&mut rng, candidates.len(), amount)
        .into_iter()
        .map(|i| CameraPose::new(candidates[i], target))
        .filter(|pose| pose.position != pose.target)
        .collect())
}

/// The first sampled pose for `seed` under default placement.
pub fn default_pose(scene: &Scene, seed: u64) -> Result<CameraPose> {
    place_cameras(scene, 1, seed, &PlacementConfig::default())?
        .into_iter()
        .next()
        .ok_or(Error::NoCameraCandidates)
}

pub mod meta_keys {
    pub const SCENE: &str = "scene";
    pub const POSE_POSITION: &str = "pose.position";
    pub const POSE_TARGET: &str = "pose.target";
    pub const AMP_X: &str = "scan.amp_x";
    pub const AMP_Y: &str = "scan.amp_y";
    pub const TICKS: &str = "scan.ticks";
}

fn fmt_vec(v: Vec3) -> String {
    format!("{},{},{}", v.x, v.y, v.z)
}

fn parse_vec(s: &str) -> Option<Vec3> {
    let mut it = s.split(',').map(|c| c.trim().parse::<f64>().ok());
    let v = Vec3::new(it.next()??, it.next()??, it.next()??);
    it.next().is_none().then_some(v)
}

/// Casts one ray per tick and records every hit with its primitive's label.
pub fn scan(scene: &Scene, pose: &CameraPose, cfg: &LissajousConfig) -> Result<PointStream> {
    cfg.validate()?;
    pose.validate(scene.room())?;
    let frame = pose.frame();
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.dropout_seed);
    let mut points = Vec::new();
    for t in 0..cfg.ticks {
        if cfg.dropout > 0.0 && dropout_rng.random::<f64>() < cfg.dropout {
            continue;
        }
        let dir = frame.to_world(lissajous_direction(cfg, f64::from(t)));
        if let Some((_, hit, idx)) = scene.cast(pose.position, dir) {
            let [x, y, z] = hit.to_f32();
            points.push(TimedPoint::new(x, y, z, scene.primitives()[idx].label, t as Tick));
        }
    }
    let mut meta = BTreeMap::new();
    meta.insert(meta_keys::SCENE.to_string(), scene.name.clone());
    meta.insert(meta_keys::POSE_POSITION.to_string(), fmt_vec(pose.position));
    meta.insert(meta_keys::POSE_TARGET.to_string(), fmt_vec(pose.target));
    meta.insert(meta_keys::AMP_X.to_string(), cfg.amp_x.to_string());
    meta.insert(meta_keys::AMP_Y.to_string(), cfg.amp_y.to_string());
    meta.insert(meta_keys::TICKS.to_string(), cfg.ticks.to_string());
    PointStream::new(points, scene.labels().clone(), meta)
}

/// Camera pose and angular field of view a stream was captured with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewFrame {
    pub pose: CameraPose,
    pub amp_x: f64,
    pub amp_y: f64,
}

impl ViewFrame {
    /// Recovers the view from the metadata written by [`scan`].
    pub fn from_stream(stream: &PointStream) -> Option<Self> {
        let meta = stream.meta();
        Some(Self {
            pose: CameraPose::new(
                parse_vec(meta.get(meta_keys::POSE_POSITION)?)?,
                parse_vec(meta.get(meta_keys::POSE_TARGET)?)?,
            ),
            amp_x: meta.get(meta_keys::AMP_X)?.parse().ok()?,
            amp_y: meta.get(meta_keys::AMP_Y)?.parse().ok()?,
        })
    }

    /// Deflection angles under which `point` is seen from the camera.
    pub fn angles_of(&self, point: Vec3) -> (f64, f64) {
        let local = self.pose.frame().to_local(point - self.pose.position);
        direction_angles(local)
    }
}
