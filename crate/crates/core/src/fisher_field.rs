//! Belief-weighted inverse Fisher ellipses evaluated on a workspace grid.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::update_beliefs;
use crate::error::{NgscError, Result};
use crate::geometry::{Environment, Point2};
use crate::natural_gradient::{
    belief_weighted_inverse, compute_fisher, fisher_ellipse, BeliefVector, FisherConfig, GoalId,
};
use crate::policy::{FieldGains, PolicyField};
use crate::rng::{derive_seed, seeded};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "goal", rename_all = "snake_case")]
pub enum BeliefMode {
    /// Distance softmax at each cell.
    Distance,
    Uniform,
    OneHot(GoalId),
    /// One-hot on the closest goal at each cell (first in goal order on ties).
    Nearest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherFieldSpec {
    /// Cells per side.
    pub resolution: usize,
    pub goals: Vec<(GoalId, Point2)>,
    pub beliefs: BeliefMode,
    pub belief_temperature: f64,
    pub fisher: FisherConfig,
    pub gains: FieldGains,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipseRow {
    pub x: f64,
    pub y: f64,
    pub semi_major: f64,
    pub semi_minor: f64,
    pub angle: f64,
    pub area: f64,
    pub reason: Option<String>,
}

impl EllipseRow {
    fn failed(p: Point2, reason: String) -> Self {
        Self {
            x: p.x,
            y: p.y,
            semi_major: f64::NAN,
            semi_minor: f64::NAN,
            angle: f64::NAN,
            area: f64::NAN,
            reason: Some(reason),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.reason.is_none()
    }
}

/// Centers of a `resolution × resolution` grid over the workspace, row by
/// row from the bottom.
pub fn grid_points(env: &Environment, resolution: usize) -> Vec<Point2> {
    let (lo, w, h) = (env.workspace.min, env.workspace.width(), env.workspace.height());
    let r = resolution as f64;
    (0..resolution)
        .flat_map(|j| {
            (0..resolution).map(move |i| Point2::new(lo.x + (i as f64 + 0.5) * w / r, lo.y + (j as f64 + 0.5) * h / r))
        })
        .collect()
}

fn cell_row(
    env: &Environment,
    spec: &FisherFieldSpec,
    fields: &[(GoalId, PolicyField)],
    cell: usize,
    p: Point2,
) -> EllipseRow {
    let results: Result<Vec<_>> = fields
        .iter()
        .map(|(g, f)| {
            let mut rng = seeded(derive_seed(spec.seed, &[cell as u64, g.ordinal()]));
            compute_fisher(f, &env.workspace, Some(env), *g, p, &spec.fisher, &mut rng)
        })
        .collect();
    let ids: Vec<GoalId> = spec.goals.iter().map(|(g, _)| *g).collect();
    let beliefs = match spec.beliefs {
        BeliefMode::Distance => update_beliefs(&spec.goals, p, None, spec.belief_temperature),
        BeliefMode::Uniform => BeliefVector::uniform(&ids),
        BeliefMode::OneHot(g) => BeliefVector::one_hot(&ids, g),
        BeliefMode::Nearest => {
            let nearest = spec
                .goals
                .iter()
                .fold(None::<(GoalId, f64)>, |best, (g, q)| {
                    let d = p.distance(*q);
                    match best {
                        Some((_, bd)) if bd <= d => best,
                        _ => Some((*g, d)),
                    }
                })
                .map(|(g, _)| g);
            match nearest {
                Some(g) => BeliefVector::one_hot(&ids, g),
                None => BeliefVector::uniform(&ids),
            }
        }
    };
    match results.and_then(|rs| belief_weighted_inverse(&rs, &beliefs)) {
        Ok(f_inv) => {
            let e = fisher_ellipse(&f_inv, p, 1.0);
            EllipseRow {
                x: p.x,
                y: p.y,
                semi_major: e.semi_axes.0,
                semi_minor: e.semi_axes.1,
                angle: e.angle,
                area: e.area(),
                reason: None,
            }
        }
        Err(err) => EllipseRow::failed(p, err.to_string()),
    }
}

/// One row per grid cell; cells whose Fisher pipeline fails carry NaN
/// values and the error text.
pub fn fisher_field(env: &Environment, spec: &FisherFieldSpec) -> Result<Vec<EllipseRow>> {
    env.validate()?;
    if spec.resolution == 0 {
        return Err(NgscError::InvalidConfig("grid resolution must be positive".into()));
    }
    if spec.goals.is_empty() {
        return Err(NgscError::InvalidConfig("at least one goal is required".into()));
    }
    if let BeliefMode::OneHot(g) = spec.beliefs {
        if !spec.goals.iter().any(|(id, _)| *id == g) {
            return Err(NgscError::GoalSetMismatch);
        }
    }
    let fields: Vec<(GoalId, PolicyField)> =
        spec.goals.iter().map(|(g, p)| (*g, PolicyField::new(env, *p, spec.gains))).collect();
    Ok(grid_points(env, spec.resolution)
        .into_par_iter()
        .enumerate()
        .map(|(cell, p)| cell_row(env, spec, &fields, cell, p))
        .collect())
}

pub fn write_ellipse_csv<W: Write>(rows: &[EllipseRow], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(std::io::Error::other)?;
    }
    w.flush()
}
