//! Local Fisher information of a policy field and the natural-gradient
//! transform of user commands.
//!
//! The Fisher matrix at a state is estimated from the Jacobian of a locally
//! weighted linear fit of the policy around that state. The Jacobian is
//! symmetrized and projected onto the SPD cone by reflecting negative
//! eigenvalues and flooring small ones, so curvature *magnitude* decides how
//! much a direction is attenuated. User commands are mapped through the
//! (belief-weighted) inverse and rescaled back to the commanded speed.

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NgscError, Result};
use crate::geometry::{Environment, Point2, Rect};
use crate::lwr::{augment_obstacle_samples, fit_lwr, AugmentConfig};
use crate::policy::{sample_field_dataset, ActionField};

/// Goal identifier: an object during the pick phase or the place target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalId {
    Object(u32),
    Place,
}

impl GoalId {
    pub fn ordinal(self) -> u64 {
        match self {
            GoalId::Object(id) => id as u64,
            GoalId::Place => u64::from(u32::MAX) + 1,
        }
    }
}

impl std::fmt::Display for GoalId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GoalId::Object(id) => write!(f, "object{id}"),
            GoalId::Place => write!(f, "place"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FisherConfig {
    pub samples: usize,
    pub sample_radius: f64,
    pub bandwidth: f64,
    pub ridge: f64,
    /// Minimum eigenvalue of the returned Fisher matrix (action units per meter).
    pub floor: f64,
    /// Obstacle augmentation of the local fit; `None` disables it.
    pub augment: Option<AugmentConfig>,
}

impl Default for FisherConfig {
    fn default() -> Self {
        Self {
            samples: 64,
            sample_radius: 0.03,
            bandwidth: 0.02,
            ridge: 1e-8,
            floor: 1e-2,
            augment: Some(AugmentConfig::default()),
        }
    }
}

impl FisherConfig {
    /// Central-difference stencil on the fitted model.
    pub fn stencil(&self) -> f64 {
        self.bandwidth / 4.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherResult {
    pub fisher: Matrix2<f64>,
    pub fisher_inv: Matrix2<f64>,
    pub goal_id: GoalId,
    pub state: Point2,
    pub raw_jacobian: Matrix2<f64>,
}

impl FisherResult {
    /// Result with `F = scale * I`.
    pub fn isotropic(goal_id: GoalId, state: Point2, scale: f64) -> Self {
        Self {
            fisher: Matrix2::identity() * scale,
            fisher_inv: Matrix2::identity() * (1.0 / scale),
            goal_id,
            state,
            raw_jacobian: Matrix2::zeros(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    /// (major, minor) semi-axes.
    pub semi_axes: (f64, f64),
    /// Orientation of the major axis in (-pi/2, pi/2].
    pub angle: f64,
    pub center: Point2,
}

impl Ellipse {
    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.semi_axes.0 * self.semi_axes.1
    }

    pub fn axis_ratio(&self) -> f64 {
        self.semi_axes.0 / self.semi_axes.1
    }

    pub fn scaled(mut self, k: f64) -> Self {
        self.semi_axes = (self.semi_axes.0 * k, self.semi_axes.1 * k);
        self
    }
}

/// Per-goal probabilities in goal order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefVector {
    pub entries: Vec<(GoalId, f64)>,
}

impl BeliefVector {
    pub fn one_hot(goals: &[GoalId], chosen: GoalId) -> Self {
        Self { entries: goals.iter().map(|&g| (g, if g == chosen { 1.0 } else { 0.0 })).collect() }
    }

    pub fn uniform(goals: &[GoalId]) -> Self {
        let w = 1.0 / goals.len() as f64;
        Self { entries: goals.iter().map(|&g| (g, w)).collect() }
    }

    pub fn get(&self, goal: GoalId) -> Option<f64> {
        self.entries.iter().find(|(g, _)| *g == goal).map(|(_, b)| *b)
    }

    pub fn goals(&self) -> impl Iterator<Item = GoalId> + '_ {
        self.entries.iter().map(|(g, _)| *g)
    }

    /// Goal with the highest belief and its margin over the runner-up (the
    /// runner-up counts as 0 when there is only one goal).
    pub fn top_with_margin(&self) -> Option<(GoalId, f64)> {
        let mut best: Option<(GoalId, f64)> = None;
        let mut second = 0.0f64;
        for &(g, b) in &self.entries {
            match best {
                Some((_, bb)) if b <= bb => second = second.max(b),
                Some((_, bb)) => {
                    second = second.max(bb);
                    best = Some((g, b));
                }
                None => best = Some((g, b)),
            }
        }
        best.map(|(g, b)| (g, b - second))
    }

    pub fn is_valid(&self) -> bool {
        let sum: f64 = self.entries.iter().map(|(_, b)| b).sum();
        !self.entries.is_empty() && self.entries.iter().all(|(_, b)| *b >= 0.0) && (sum - 1.0).abs() <= 1e-9
    }
}

/// Central differences: column `j` is `(f(s + h e_j) - f(s - h e_j)) / 2h`.
pub fn finite_difference_jacobian<F>(field: F, s: Point2, h: f64) -> Result<Matrix2<f64>>
where
    F: Fn(Point2) -> Result<Vector2<f64>>,
{
    if !(h > 0.0) {
        return Err(NgscError::InvalidConfig("finite-difference stencil must be positive".into()));
    }
    let dx = (field(Point2::new(s.x + h, s.y))? - field(Point2::new(s.x - h, s.y))?) / (2.0 * h);
    let dy = (field(Point2::new(s.x, s.y + h))? - field(Point2::new(s.x, s.y - h))?) / (2.0 * h);
    Ok(Matrix2::from_columns(&[dx, dy]))
}

/// Eigen-decomposition of a symmetric 2x2 matrix as `(low, high, v_high)`.
fn symmetric_eigen(s: &Matrix2<f64>) -> (f64, f64, Vector2<f64>) {
    let (a, b, d) = (s[(0, 0)], s[(0, 1)], s[(1, 1)]);
    let mean = 0.5 * (a + d);
    let radius = (0.5 * (a - d)).hypot(b);
    let (lo, hi) = (mean - radius, mean + radius);
    if radius == 0.0 {
        return (lo, hi, Vector2::new(1.0, 0.0));
    }
    let c1 = Vector2::new(b, hi - a);
    let c2 = Vector2::new(hi - d, b);
    let v = if c1.norm_squared() >= c2.norm_squared() { c1 } else { c2 };
    (lo, hi, v.normalize())
}

/// `mu_a (I - v v^T) + mu_b v v^T`; exactly `mu * I` when both are equal.
fn compose(mu_a: f64, mu_b: f64, v: &Vector2<f64>) -> Matrix2<f64> {
    Matrix2::identity() * mu_a + v * v.transpose() * (mu_b - mu_a)
}

/// Symmetric part of `h`, with eigenvalues replaced by `max(|l|, floor)`.
/// Returns the projected matrix and its inverse.
fn project_spd(h: &Matrix2<f64>, floor: f64) -> (Matrix2<f64>, Matrix2<f64>) {
    let sym = (h + h.transpose()) * 0.5;
    let (lo, hi, v) = symmetric_eigen(&sym);
    let (mu_lo, mu_hi) = (lo.abs().max(floor), hi.abs().max(floor));
    (compose(mu_lo, mu_hi, &v), compose(1.0 / mu_lo, 1.0 / mu_hi, &v))
}

pub fn symmetrize_spd(h: &Matrix2<f64>, floor: f64) -> Matrix2<f64> {
    project_spd(h, floor).0
}

/// Fisher information of `field` at `s` from a locally weighted linear fit.
///
/// Policy samples are drawn around `s`; when `env` is given and the config
/// enables augmentation, synthetic obstacle-repulsion samples are added before
/// the fit.
pub fn compute_fisher<F, R>(
    field: &F,
    workspace: &Rect,
    env: Option<&Environment>,
    goal_id: GoalId,
    s: Point2,
    cfg: &FisherConfig,
    rng: &mut R,
) -> Result<FisherResult>
where
    F: ActionField + ?Sized,
    R: Rng + ?Sized,
{
    let mut samples = sample_field_dataset(field, workspace, s, cfg.sample_radius, cfg.samples, rng);
    if let (Some(env), Some(aug)) = (env, cfg.augment.as_ref()) {
        samples = augment_obstacle_samples(env, s, samples, aug, cfg.bandwidth);
    }
    let model = fit_lwr(&samples, s, cfg.bandwidth, cfg.ridge)?;
    let raw_jacobian = finite_difference_jacobian(|p| model.query(p), s, cfg.stencil())?;
    let (fisher, fisher_inv) = project_spd(&raw_jacobian, cfg.floor);
    Ok(FisherResult { fisher, fisher_inv, goal_id, state: s, raw_jacobian })
}

/// `sum_g b_g F_g^{-1}`, accumulated in belief order.
pub fn belief_weighted_inverse(results: &[FisherResult], beliefs: &BeliefVector) -> Result<Matrix2<f64>> {
    if results.len() != beliefs.entries.len() {
        return Err(NgscError::GoalSetMismatch);
    }
    let mut acc = Matrix2::zeros();
    for &(goal, b) in &beliefs.entries {
        let r = results.iter().find(|r| r.goal_id == goal).ok_or(NgscError::GoalSetMismatch)?;
        acc += r.fisher_inv * b;
    }
    Ok(acc)
}

/// Natural-gradient shared action: `F^{-1} a_H` rescaled to `|a_H|`.
///
/// When `F^{-1}` is a multiple of the identity the command is returned
/// unchanged.
pub fn shared_action(fisher_inv: &Matrix2<f64>, user: &Vector2<f64>) -> Vector2<f64> {
    let speed = user.norm();
    if speed == 0.0 {
        return Vector2::zeros();
    }
    let m = fisher_inv;
    if m[(0, 1)] == 0.0 && m[(1, 0)] == 0.0 && m[(0, 0)] == m[(1, 1)] && m[(0, 0)] > 0.0 {
        return *user;
    }
    let v = m * user;
    let n = v.norm();
    if n > 0.0 && n.is_finite() {
        v * (speed / n)
    } else {
        *user
    }
}

/// Ellipse with semi-axes equal to the eigenvalues of `F^{-1}` times `scale`.
pub fn fisher_ellipse(fisher_inv: &Matrix2<f64>, center: Point2, scale: f64) -> Ellipse {
    let sym = (fisher_inv + fisher_inv.transpose()) * 0.5;
    let (lo, hi, v) = symmetric_eigen(&sym);
    let mut angle = v.y.atan2(v.x);
    if angle > std::f64::consts::FRAC_PI_2 {
        angle -= std::f64::consts::PI;
    } else if angle <= -std::f64::consts::FRAC_PI_2 {
        angle += std::f64::consts::PI;
    }
    if lo == hi {
        angle = 0.0;
    }
    Ellipse { semi_axes: (hi * scale, lo * scale), angle, center }
}

/// KL divergence between two bivariate Gaussians, `KL(N0 || N1)`.
pub fn gaussian_kl(mean0: &Vector2<f64>, cov0: &Matrix2<f64>, mean1: &Vector2<f64>, cov1: &Matrix2<f64>) -> f64 {
    let inv1 = cov1.try_inverse().expect("covariance must be invertible");
    let d = mean1 - mean0;
    0.5 * ((inv1 * cov0).trace() + (d.transpose() * inv1 * d)[(0, 0)] - 2.0
        + (cov1.determinant() / cov0.determinant()).ln())
}

/// Exact KL between `N(theta, cov)` and `N(theta + delta, cov)` next to the
/// quadratic approximation `0.5 delta^T F delta` with `F = cov^{-1}`.
pub fn kl_quadratic_check(cov: &Matrix2<f64>, delta: &Vector2<f64>) -> (f64, f64) {
    let theta = Vector2::zeros();
    let exact = gaussian_kl(&theta, cov, &(theta + delta), cov);
    let fisher = cov.try_inverse().expect("covariance must be invertible");
    let quad = 0.5 * delta.dot(&(fisher * delta));
    (exact, quad)
}
