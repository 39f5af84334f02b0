//! Task metrics: duration, travel distance, minimum obstacle proximity and
//! mean cosine distance between commanded and executed actions.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{NgscError, Result};
use crate::geometry::{Environment, Point2};
use crate::sim::log::EpisodeLog;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub duration_s: f64,
    pub travel_cm: f64,
    pub min_proximity_cm: f64,
    pub mean_cosine_distance: f64,
}

/// `1 - cos` of the angle between two vectors; a zero `executed` counts as
/// orthogonal.
pub fn cosine_distance(commanded: &Vector2<f64>, executed: &Vector2<f64>) -> f64 {
    let denom = commanded.norm() * executed.norm();
    if denom == 0.0 {
        return 1.0;
    }
    (1.0 - commanded.dot(executed) / denom).clamp(0.0, 2.0)
}

/// Incremental metrics, shared by live sessions and log post-processing.
#[derive(Clone, Debug)]
pub struct MetricsAccumulator {
    tick_rate: f64,
    ticks: u64,
    last: Point2,
    travel: f64,
    min_sd: f64,
    cosine_sum: f64,
    cosine_count: u64,
}

impl MetricsAccumulator {
    pub fn new(env: &Environment, start: Point2, tick_rate: f64) -> Self {
        Self {
            tick_rate,
            ticks: 0,
            last: start,
            travel: 0.0,
            min_sd: env.signed_distance(start),
            cosine_sum: 0.0,
            cosine_count: 0,
        }
    }

    pub fn push(&mut self, position: Point2, signed_distance: f64, commanded: &Vector2<f64>, executed: &Vector2<f64>) {
        self.ticks += 1;
        self.travel += position.distance(self.last);
        self.last = position;
        self.min_sd = self.min_sd.min(signed_distance);
        if commanded.norm() > 0.0 {
            self.cosine_sum += cosine_distance(commanded, executed);
            self.cosine_count += 1;
        }
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn snapshot(&self) -> Metrics {
        Metrics {
            duration_s: self.ticks as f64 / self.tick_rate,
            travel_cm: 100.0 * self.travel,
            min_proximity_cm: 100.0 * self.min_sd.max(0.0),
            mean_cosine_distance: if self.cosine_count > 0 { self.cosine_sum / self.cosine_count as f64 } else { 0.0 },
        }
    }
}

pub fn compute_metrics(log: &EpisodeLog) -> Result<Metrics> {
    if log.ticks.is_empty() {
        return Err(NgscError::EmptyLog);
    }
    let h = &log.header;
    let mut acc = MetricsAccumulator::new(&h.environment, h.initial_state.gripper, h.tick_rate);
    for t in &log.ticks {
        acc.push(t.state.gripper, t.signed_distance, &t.user.translation, &t.shared);
    }
    Ok(acc.snapshot())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_distance_values() {
        let a = Vector2::new(1.0, 0.0);
        assert_eq!(cosine_distance(&a, &a), 0.0);
        assert!((cosine_distance(&a, &Vector2::new(0.0, 2.0)) - 1.0).abs() < 1e-15);
        assert!((cosine_distance(&a, &Vector2::new(-1.0, 0.0)) - 2.0).abs() < 1e-15);
        assert_eq!(cosine_distance(&a, &Vector2::zeros()), 1.0);
    }
}
