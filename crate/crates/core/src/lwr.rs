//! Locally weighted linear regression of a planar action field.
//!
//! Each output dimension is fitted by weighted ridge least squares with a
//! Gaussian kernel around the query. The kernel is truncated at
//! [`KERNEL_CUTOFF`] bandwidths, where its weight is already below 4e-6.

use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{NgscError, Result};
use crate::geometry::{Environment, Point2};
use crate::policy::{ActionField, RepulsionField};

pub const KERNEL_CUTOFF: f64 = 5.0;
pub const VALIDITY_RADIUS: f64 = 3.0;
pub const MAX_CONDITION: f64 = 1e12;

pub type Sample = (Point2, Vector2<f64>);

/// Affine model `a(s) = A s + b`, valid within `VALIDITY_RADIUS` bandwidths
/// of its center.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalLinearModel {
    pub a: Matrix2<f64>,
    pub b: Vector2<f64>,
    pub center: Point2,
    pub bandwidth: f64,
    pub sample_count: usize,
}

impl LocalLinearModel {
    pub fn query(&self, s: Point2) -> Result<Vector2<f64>> {
        let distance = s.distance(self.center);
        let limit = VALIDITY_RADIUS * self.bandwidth;
        if !(distance <= limit) {
            return Err(NgscError::OutOfValidity { distance, limit });
        }
        Ok(self.a * s.to_vector() + self.b)
    }
}

pub fn query_lwr(model: &LocalLinearModel, s: Point2) -> Result<Vector2<f64>> {
    model.query(s)
}

pub fn kernel_weight(s: Point2, query: Point2, bandwidth: f64) -> f64 {
    let d = s.distance(query);
    if d > KERNEL_CUTOFF * bandwidth {
        0.0
    } else {
        (-d * d / (2.0 * bandwidth * bandwidth)).exp()
    }
}

pub fn fit_lwr(samples: &[Sample], query: Point2, bandwidth: f64, ridge: f64) -> Result<LocalLinearModel> {
    fit_lwr_weighted(samples, None, query, bandwidth, ridge)
}

/// Weighted variant: `sample_weights[i]` multiplies the kernel weight of
/// sample `i`, so an integer weight `k` is equivalent to `k` copies.
pub fn fit_lwr_weighted(
    samples: &[Sample],
    sample_weights: Option<&[f64]>,
    query: Point2,
    bandwidth: f64,
    ridge: f64,
) -> Result<LocalLinearModel> {
    if samples.len() < 3 {
        return Err(NgscError::InvalidConfig(format!("need at least 3 samples, got {}", samples.len())));
    }
    if !(bandwidth > 0.0) || !(ridge >= 0.0) {
        return Err(NgscError::InvalidConfig("bandwidth must be positive and ridge nonnegative".into()));
    }
    if let Some(w) = sample_weights {
        if w.len() != samples.len() {
            return Err(NgscError::InvalidConfig("one weight per sample is required".into()));
        }
    }

    // Regress on offsets from the query so the intercept is the value there.
    let mut normal = Matrix3::<f64>::zeros();
    let mut rhs_x = Vector3::<f64>::zeros();
    let mut rhs_y = Vector3::<f64>::zeros();
    for (i, (s, a)) in samples.iter().enumerate() {
        let w = kernel_weight(*s, query, bandwidth) * sample_weights.map_or(1.0, |w| w[i]);
        if w == 0.0 {
            continue;
        }
        let d = *s - query;
        let x = Vector3::new(d.x, d.y, 1.0);
        normal += x * x.transpose() * w;
        rhs_x += x * (w * a.x);
        rhs_y += x * (w * a.y);
    }
    normal[(0, 0)] += ridge;
    normal[(1, 1)] += ridge;

    let eig = SymmetricEigen::new(normal);
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(NgscError::SingularFit { condition });
    }
    let chol = normal.cholesky().ok_or(NgscError::SingularFit { condition })?;
    let cx = chol.solve(&rhs_x);
    let cy = chol.solve(&rhs_y);

    let a = Matrix2::new(cx[0], cx[1], cy[0], cy[1]);
    let at_query = Vector2::new(cx[2], cy[2]);
    let b = at_query - a * query.to_vector();
    Ok(LocalLinearModel { a, b, center: query, bandwidth, sample_count: samples.len() })
}

/// Synthetic obstacle-repulsion samples appended near the obstacle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub strength: f64,
    pub trigger_radius: f64,
    pub ring_points: usize,
    /// Ring radius; `None` uses the fit bandwidth.
    pub ring_radius: Option<f64>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { strength: 5.0, trigger_radius: 0.03, ring_points: 16, ring_radius: None }
    }
}

impl AugmentConfig {
    /// Decay length of the synthetic repulsion magnitude.
    pub fn decay(&self) -> f64 {
        self.trigger_radius / 3.0
    }

    pub fn field(&self, env: &Environment) -> RepulsionField {
        RepulsionField { obstacle: env.obstacle, strength: self.strength, decay: self.decay() }
    }
}

/// Appends a ring of SDF-derived repulsion samples around `query` when it is
/// within the trigger radius of the obstacle; otherwise returns the input.
pub fn augment_obstacle_samples(
    env: &Environment,
    query: Point2,
    mut samples: Vec<Sample>,
    cfg: &AugmentConfig,
    bandwidth: f64,
) -> Vec<Sample> {
    if !(env.signed_distance(query) < cfg.trigger_radius) {
        return samples;
    }
    let field = cfg.field(env);
    let radius = cfg.ring_radius.unwrap_or(bandwidth);
    samples.extend((0..cfg.ring_points).map(|j| {
        let t = j as f64 / cfg.ring_points as f64 * std::f64::consts::TAU;
        let p = Point2::new(query.x + radius * t.cos(), query.y + radius * t.sin());
        (p, field.action(p))
    }));
    samples
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Disc, Object, ObjectId, Rect};
    use crate::policy::{sample_field_dataset, FieldGains, PolicyField};
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn affine(a0: Matrix2<f64>, b0: Vector2<f64>) -> impl Fn(Point2) -> Vector2<f64> {
        move |s: Point2| a0 * s.to_vector() + b0
    }

    fn disc_samples<F: ActionField>(f: &F, c: Point2, n: usize, seed: u64) -> Vec<Sample> {
        sample_field_dataset(f, &Rect::default(), c, 0.03, n, &mut seeded(seed))
    }

    fn test_env() -> Environment {
        Environment {
            workspace: Rect::default(),
            objects: vec![Object { id: ObjectId(0), center: Point2::new(0.4, 0.4), radius: 0.02 }],
            obstacle: Disc::new(Point2::new(0.25, 0.25), 0.03),
            place_target: Point2::new(0.1, 0.1),
            target_object_id: ObjectId(0),
        }
    }

    #[test]
    fn recovers_rotation_field() {
        let a0 = Matrix2::new(0.0, -1.0, 1.0, 0.0);
        let b0 = Vector2::new(0.2, -0.1);
        let c = Point2::new(0.2, 0.3);
        let f = affine(a0, b0);
        let m = fit_lwr(&disc_samples(&f, c, 64, 1), c, 0.02, 1e-10).unwrap();
        assert!((m.a - a0).amax() < 1e-6);
        let s = Point2::new(c.x + 0.01, c.y);
        assert!((m.query(s).unwrap() - f(s)).amax() < 1e-6);
    }

    #[test]
    fn constant_field_has_zero_jacobian() {
        let c = Point2::new(0.25, 0.1);
        let f = |_: Point2| Vector2::new(0.3, 0.4);
        let m = fit_lwr(&disc_samples(&f, c, 64, 2), c, 0.02, 1e-8).unwrap();
        assert!(m.a.amax() <= 1e-8);
        assert!((m.query(c).unwrap() - Vector2::new(0.3, 0.4)).amax() <= 1e-8);
    }

    #[test]
    fn collinear_samples_are_singular() {
        let samples: Vec<Sample> = (0..10)
            .map(|i| {
                let t = i as f64 * 0.003;
                (Point2::new(0.2 + t, 0.2 + 2.0 * t), Vector2::new(t, 1.0))
            })
            .collect();
        let err = fit_lwr(&samples, Point2::new(0.21, 0.22), 0.02, 0.0).unwrap_err();
        assert!(matches!(err, NgscError::SingularFit { .. }));
    }

    #[test]
    fn too_few_samples_rejected() {
        let s = vec![(Point2::new(0.0, 0.0), Vector2::zeros()); 2];
        assert!(fit_lwr(&s, Point2::new(0.0, 0.0), 0.02, 1e-8).is_err());
    }

    #[test]
    fn far_query_is_out_of_validity() {
        let c = Point2::new(0.25, 0.25);
        let f = |_: Point2| Vector2::new(0.3, 0.4);
        let m = fit_lwr(&disc_samples(&f, c, 32, 3), c, 0.02, 1e-8).unwrap();
        let err = m.query(Point2::new(c.x + 10.0 * 0.02, c.y)).unwrap_err();
        assert!(matches!(err, NgscError::OutOfValidity { .. }));
    }

    #[test]
    fn duplicating_a_sample_equals_scaling_its_weight() {
        let env = test_env();
        let field = PolicyField::new(&env, Point2::new(0.4, 0.4), FieldGains::default());
        let c = Point2::new(0.3, 0.2);
        let base = disc_samples(&field, c, 40, 5);
        let k = 4;
        let mut dup = base.clone();
        for _ in 1..k {
            dup.push(base[7]);
        }
        let mut w = vec![1.0; base.len()];
        w[7] = k as f64;
        let m_dup = fit_lwr(&dup, c, 0.02, 1e-8).unwrap();
        let m_w = fit_lwr_weighted(&base, Some(&w), c, 0.02, 1e-8).unwrap();
        assert!((m_dup.a - m_w.a).amax() < 1e-9);
        assert!((m_dup.b - m_w.b).amax() < 1e-9);
    }

    #[test]
    fn distant_samples_do_not_perturb_the_fit() {
        let env = test_env();
        let field = PolicyField::new(&env, Point2::new(0.4, 0.4), FieldGains::default());
        let c = Point2::new(0.3, 0.2);
        let bw = 0.02;
        let base = disc_samples(&field, c, 64, 6);
        let mut extra = base.clone();
        for j in 0..8 {
            let t = j as f64 * 0.7;
            let r = 5.0 * bw + 0.001 + j as f64 * 0.01;
            extra.push((Point2::new(c.x + r * t.cos(), c.y + r * t.sin()), Vector2::new(-1.0, 1.0)));
        }
        let m0 = fit_lwr(&base, c, bw, 1e-8).unwrap();
        let m1 = fit_lwr(&extra, c, bw, 1e-8).unwrap();
        assert!((m0.a - m1.a).amax() <= 1e-6);
        assert!((m0.b - m1.b).amax() <= 1e-6);
    }

    #[test]
    fn augmentation_is_a_no_op_far_from_obstacle() {
        let env = test_env();
        let cfg = AugmentConfig::default();
        let q = Point2::new(0.1, 0.4);
        let samples = vec![(q, Vector2::new(1.0, 0.0)); 5];
        assert_eq!(augment_obstacle_samples(&env, q, samples.clone(), &cfg, 0.02), samples);
    }

    #[test]
    fn augmentation_ring_points_outward() {
        let env = test_env();
        let cfg = AugmentConfig::default();
        let q = Point2::new(0.25 + 0.03 + cfg.trigger_radius / 2.0, 0.25);
        let samples = vec![(q, Vector2::new(1.0, 0.0)); 5];
        let out = augment_obstacle_samples(&env, q, samples, &cfg, 0.02);
        assert_eq!(out.len(), 5 + cfg.ring_points);
        for (p, a) in &out[5..] {
            let grad = env.obstacle.sdf_gradient(*p);
            assert!(a.dot(&grad) > 0.0, "added vector at {p:?} not within 90 deg of the SDF gradient");
        }
    }

    #[test]
    fn augmented_fit_pushes_harder_outward() {
        let env = test_env();
        let cfg = AugmentConfig::default();
        let field = PolicyField::new(&env, Point2::new(0.4, 0.25), FieldGains::default());
        // Beside the obstacle, on the side away from the goal.
        let q = Point2::new(0.25, 0.25 + 0.03 + 0.012);
        let base = disc_samples(&field, q, 64, 8);
        let plain = fit_lwr(&base, q, 0.02, 1e-8).unwrap();
        let aug = fit_lwr(&augment_obstacle_samples(&env, q, base, &cfg, 0.02), q, 0.02, 1e-8).unwrap();
        let n = env.obstacle.sdf_gradient(q);
        assert!(aug.query(q).unwrap().dot(&n) > plain.query(q).unwrap().dot(&n));
    }

    proptest! {
        #[test]
        fn exact_recovery_for_affine_fields(
            a00 in -3.0..3.0f64, a01 in -3.0..3.0f64, a10 in -3.0..3.0f64, a11 in -3.0..3.0f64,
            b0 in -1.0..1.0f64, b1 in -1.0..1.0f64,
            bw in 0.01..0.1f64, cx in 0.05..0.45f64, cy in 0.05..0.45f64, seed in 0u64..1000,
        ) {
            let a0 = Matrix2::new(a00, a01, a10, a11);
            let b0 = Vector2::new(b0, b1);
            let c = Point2::new(cx, cy);
            let f = affine(a0, b0);
            let m = fit_lwr(&disc_samples(&f, c, 64, seed), c, bw, 1e-10).unwrap();
            prop_assert!((m.a - a0).amax() < 1e-6);
            prop_assert!((m.b - b0).amax() < 1e-6);
        }
    }
}
