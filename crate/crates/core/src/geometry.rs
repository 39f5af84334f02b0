//! Planar workspace, disc-shaped objects and obstacle, and signed-distance
//! queries. All lengths are in meters with the origin at a table corner.

use nalgebra::Vector2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NgscError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<Vector2<f64>> for Point2 {
    fn from(v: Vector2<f64>) -> Self {
        Self::new(v.x, v.y)
    }
}

impl std::ops::Sub for Point2 {
    type Output = Vector2<f64>;

    fn sub(self, rhs: Point2) -> Vector2<f64> {
        Vector2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Add<Vector2<f64>> for Point2 {
    type Output = Point2;

    fn add(self, rhs: Vector2<f64>) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub<Vector2<f64>> for Point2 {
    type Output = Point2;

    fn sub(self, rhs: Vector2<f64>) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

/// Axis-aligned rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point2,
    pub max: Point2,
}

impl Rect {
    pub fn new(min: Point2, max: Point2) -> Self {
        Self { min, max }
    }

    /// A `width` x `height` rectangle anchored at the origin.
    pub fn from_size(width: f64, height: f64) -> Self {
        Self::new(Point2::new(0.0, 0.0), Point2::new(width, height))
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn strictly_contains(&self, p: Point2) -> bool {
        p.x > self.min.x && p.x < self.max.x && p.y > self.min.y && p.y < self.max.y
    }

    pub fn clamp(&self, p: Point2) -> Point2 {
        Point2::new(p.x.clamp(self.min.x, self.max.x), p.y.clamp(self.min.y, self.max.y))
    }
}

impl Default for Rect {
    fn default() -> Self {
        Self::from_size(0.5, 0.5)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub center: Point2,
    pub radius: f64,
}

impl Disc {
    pub fn new(center: Point2, radius: f64) -> Self {
        Self { center, radius }
    }

    /// Exact distance to the circle boundary, negative inside.
    pub fn signed_distance(&self, p: Point2) -> f64 {
        p.distance(self.center) - self.radius
    }

    /// Unit outward normal of the distance field. At the center the field is
    /// not differentiable and `+x` is returned.
    pub fn sdf_gradient(&self, p: Point2) -> Vector2<f64> {
        let d = p - self.center;
        let n = d.norm();
        if n <= 1e-12 {
            Vector2::new(1.0, 0.0)
        } else {
            d / n
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u32);

impl std::fmt::Display for ObjectId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Object {
    pub id: ObjectId,
    pub center: Point2,
    pub radius: f64,
}

/// Default minimum pairwise center separation.
pub const DEFAULT_MIN_SEPARATION: f64 = 0.08;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub workspace: Rect,
    pub objects: Vec<Object>,
    pub obstacle: Disc,
    pub place_target: Point2,
    pub target_object_id: ObjectId,
}

impl Environment {
    pub fn signed_distance(&self, p: Point2) -> f64 {
        signed_distance(self, p)
    }

    pub fn object(&self, id: ObjectId) -> Option<&Object> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn target_object(&self) -> &Object {
        self.object(self.target_object_id).expect("validated environments contain their target object")
    }

    /// Checks every structural invariant with the given minimum separation.
    pub fn validate_with(&self, min_separation: f64) -> Result<()> {
        let bad = |msg: String| Err(NgscError::InvalidEnvironment(msg));
        let ws = &self.workspace;
        if !(ws.min.is_finite() && ws.max.is_finite()) || ws.width() <= 0.0 || ws.height() <= 0.0 {
            return bad("workspace must be a finite, non-empty rectangle".into());
        }
        if self.objects.is_empty() {
            return bad("at least one object is required".into());
        }
        if self.object(self.target_object_id).is_none() {
            return bad(format!("target object {} is not present", self.target_object_id));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if self.objects[..i].iter().any(|p| p.id == o.id) {
                return bad(format!("duplicate object id {}", o.id));
            }
            if !(o.radius > 0.0) {
                return bad(format!("object {} has non-positive radius", o.id));
            }
        }
        if !(self.obstacle.radius > 0.0) {
            return bad("obstacle radius must be positive".into());
        }
        let centers = self.centers();
        for (name, c) in &centers {
            if !c.is_finite() || !ws.strictly_contains(*c) {
                return bad(format!("{name} center ({}, {}) is not strictly inside the workspace", c.x, c.y));
            }
        }
        for i in 0..centers.len() {
            for j in i + 1..centers.len() {
                let d = centers[i].1.distance(centers[j].1);
                if d < min_separation {
                    return bad(format!(
                        "{} and {} are {d:.4} m apart, closer than {min_separation} m",
                        centers[i].0, centers[j].0
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with(DEFAULT_MIN_SEPARATION)
    }

    fn centers(&self) -> Vec<(String, Point2)> {
        let mut out: Vec<_> = self.objects.iter().map(|o| (format!("object {}", o.id), o.center)).collect();
        out.push(("obstacle".into(), self.obstacle.center));
        out.push(("place target".into(), self.place_target));
        out
    }
}

/// Distance from `p` to the obstacle surface; negative inside the obstacle.
pub fn signed_distance(env: &Environment, p: Point2) -> f64 {
    env.obstacle.signed_distance(p)
}

pub fn clamp_to_workspace(env: &Environment, p: Point2) -> Point2 {
    env.workspace.clamp(p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Pick,
    Place,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub gripper: Point2,
    /// `[cos(phi), sin(phi)]` of the gripper yaw.
    pub heading: [f64; 2],
    pub phase: Phase,
    pub held_object: Option<ObjectId>,
}

impl SimState {
    pub fn new(gripper: Point2) -> Self {
        Self { gripper, heading: [1.0, 0.0], phase: Phase::Pick, held_object: None }
    }

    pub fn heading_angle(&self) -> f64 {
        self.heading[1].atan2(self.heading[0])
    }

    pub fn with_heading_angle(mut self, phi: f64) -> Self {
        self.heading = [phi.cos(), phi.sin()];
        self
    }

    pub fn check_invariants(&self) -> Result<()> {
        let n = self.heading[0].hypot(self.heading[1]);
        if (n - 1.0).abs() > 1e-9 {
            return Err(NgscError::InvalidEnvironment(format!("heading norm {n} is not unit")));
        }
        if (self.phase == Phase::Place) != self.held_object.is_some() {
            return Err(NgscError::InvalidEnvironment("held object must be set exactly in the place phase".into()));
        }
        Ok(())
    }
}

/// Parameters for random environment generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub workspace: Rect,
    pub object_count: usize,
    pub object_radius: f64,
    pub obstacle_radius: f64,
    pub min_separation: f64,
    /// Minimum distance from any center to the workspace border.
    pub border_margin: f64,
    pub max_attempts: usize,
    /// Place the obstacle near the segment between the place target and the
    /// target object so every episode has to route around it.
    pub obstacle_on_path: bool,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            workspace: Rect::default(),
            object_count: 3,
            object_radius: 0.02,
            obstacle_radius: 0.03,
            min_separation: DEFAULT_MIN_SEPARATION,
            border_margin: 0.04,
            max_attempts: 10_000,
            obstacle_on_path: false,
        }
    }
}

/// Rejection-samples a layout. The object with id 0 is the target.
pub fn sample_environment<R: Rng + ?Sized>(rng: &mut R, cfg: &SamplingConfig) -> Result<Environment> {
    if cfg.object_count == 0 {
        return Err(NgscError::InvalidConfig("at least one object must be sampled".into()));
    }
    let ws = cfg.workspace;
    let lo = Point2::new(ws.min.x + cfg.border_margin, ws.min.y + cfg.border_margin);
    let hi = Point2::new(ws.max.x - cfg.border_margin, ws.max.y - cfg.border_margin);
    if !(lo.x < hi.x && lo.y < hi.y) {
        return Err(NgscError::PlacementFailure { attempts: 0 });
    }
    let uniform = |rng: &mut R| Point2::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));

    for _ in 0..cfg.max_attempts {
        let place_target = uniform(rng);
        let objects: Vec<Object> = (0..cfg.object_count)
            .map(|i| Object { id: ObjectId(i as u32), center: uniform(rng), radius: cfg.object_radius })
            .collect();
        let obstacle_center = if cfg.obstacle_on_path {
            let target = objects[0].center;
            let dir = target - place_target;
            let len = dir.norm();
            if len < 1e-9 {
                continue;
            }
            let normal = Vector2::new(-dir.y, dir.x) / len;
            let t = rng.random_range(0.35..0.65);
            let offset = rng.random_range(-0.5..0.5) * cfg.obstacle_radius;
            place_target + dir * t + normal * offset
        } else {
            uniform(rng)
        };
        let env = Environment {
            workspace: ws,
            objects,
            obstacle: Disc::new(obstacle_center, cfg.obstacle_radius),
            place_target,
            target_object_id: ObjectId(0),
        };
        if env.validate_with(cfg.min_separation).is_ok()
            && env.centers().iter().all(|(_, c)| c.x >= lo.x && c.x <= hi.x && c.y >= lo.y && c.y <= hi.y)
        {
            return Ok(env);
        }
    }
    Err(NgscError::PlacementFailure { attempts: cfg.max_attempts })
}
