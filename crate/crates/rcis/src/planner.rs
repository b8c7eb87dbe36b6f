//! Waypoint-to-waypoint family synthesis (backward from the goal), full-path stitching, obstacle
//! geometry and re-planning.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ellipsoid::{shrink_factor, BoxSet, Ellipsoid, Halfspace};
use crate::synthesis::{
    grow_chain, synthesize_terminal_pair_near, synthesize_terminal_pair_with, FeedbackPair, StepResult,
    SynthesisConstraints, SynthesisSettings, VertexModel,
};
use crate::vehicle::{gamma_of_state, vertex_weights, GammaBounds, VehicleParams};
use crate::{Error, Result};

pub const N: usize = 6;
/// Indices of the lateral and longitudinal position states.
pub const PLANE: [usize; 2] = [4, 5];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Behind,
    Ahead,
    None,
}

/// Planar keep-out box around a lead vehicle. `x_rel` is measured in the path's relative
/// longitudinal frame, `y` is the lead's global lateral position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleBox {
    pub x_rel: f64,
    pub y: f64,
    pub l_ego: f64,
    pub l_lead: f64,
    pub eps_x: f64,
    pub w_ego: f64,
    pub w_lead: f64,
    pub eps_y: f64,
    /// Extra longitudinal clearance on top of `δ_x` for the behind/ahead rows.
    #[serde(default)]
    pub keep_out: f64,
}

impl ObstacleBox {
    pub fn delta_x(&self) -> f64 {
        (self.l_ego + self.l_lead) / 2.0 + self.eps_x
    }

    pub fn delta_y(&self) -> f64 {
        (self.w_ego + self.w_lead) / 2.0 + self.eps_y
    }

    /// Whether the planar point `(x5, x6)` lies inside the box.
    pub fn contains(&self, x5: f64, x6: f64) -> bool {
        (x5 - self.y).abs() < self.delta_y() && (x6 - self.x_rel).abs() < self.delta_x()
    }
}

/// One halfspace implementing the chosen convex piece of the free space around `ob`.
pub fn obstacle_free_halfspaces(ob: &ObstacleBox, side: Side) -> Vec<Halfspace> {
    let lon = ob.delta_x() + ob.keep_out;
    match side {
        Side::Left => vec![Halfspace::axis(N, 4, ob.y + ob.delta_y(), false)],
        Side::Right => vec![Halfspace::axis(N, 4, ob.y - ob.delta_y(), true)],
        Side::Behind => vec![Halfspace::axis(N, 5, ob.x_rel - lon, true)],
        Side::Ahead => vec![Halfspace::axis(N, 5, ob.x_rel + lon, false)],
        Side::None => vec![],
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub state: Vec<f64>,
    /// Passing side per obstacle for the segment that ends at this waypoint.
    #[serde(default)]
    pub sides: Vec<Side>,
}

impl Waypoint {
    pub fn at(x5: f64, x6: f64, sides: Vec<Side>) -> Self {
        Self { state: vec![0.0, 0.0, 0.0, 0.0, x5, x6], sides }
    }

    pub fn x(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.state)
    }
}

/// Everything the planner needs besides waypoints and obstacles.
#[derive(Clone, Debug)]
pub struct PlanContext {
    pub params: VehicleParams,
    pub gamma: GammaBounds,
    pub model: VertexModel,
    /// Absolute state rows shared by every segment.
    pub rows: Vec<Halfspace>,
    /// Absolute input box `U`.
    pub input_box: BoxSet,
    pub disturbance: BoxSet,
    pub settings: SynthesisSettings,
    /// Fraction of the re-centering move given back toward the old center.
    pub pull_back: f64,
    pub max_families: usize,
    /// Relative row offsets are capped here; rows farther away than any ellipsoid reaches then
    /// produce identical programs and hit the cache.
    pub row_cap: f64,
    /// Re-centered equilibria snap to this planar grid (m).
    pub snap: f64,
    pub cache: SynthesisCache,
}

type CacheEntry = (FeedbackPair, Vec<StepResult>);

/// Memoized terminal pairs and chains keyed by the exact synthesis inputs.
#[derive(Clone, Debug, Default)]
pub struct SynthesisCache(Arc<Mutex<HashMap<Vec<u64>, CacheEntry>>>);

impl SynthesisCache {
    fn key(cons: &SynthesisConstraints) -> Vec<u64> {
        let mut k = Vec::new();
        for h in &cons.state_halfspaces {
            k.extend(h.normal.iter().map(|v| v.to_bits()));
            k.push(h.offset.to_bits());
        }
        for b in [&cons.input_box, &cons.disturbance] {
            k.extend(b.lower.iter().chain(&b.upper).map(|v| v.to_bits()));
        }
        k
    }

    pub fn len(&self) -> usize {
        self.0.lock().map(|m| m.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentFamily {
    pub s: usize,
    pub x_eq: DVector<f64>,
    pub u_eq: DVector<f64>,
    /// Terminal gain `K` for `E_0`.
    pub gain: DMatrix<f64>,
    /// `E_0 … E_N` centered at `x_eq`.
    pub chain: Vec<Ellipsoid>,
    /// `K_i` certifying ring `i` (index 0 repeats the terminal gain).
    pub ring_gains: Vec<DMatrix<f64>>,
    /// Equilibrium-relative state rows used in synthesis.
    pub rows: Vec<Halfspace>,
    /// `U − u_eq`.
    pub input_box: BoxSet,
    /// One entry per ellipsoid in `chain`.
    #[serde(default)]
    pub provenance: Vec<RingProvenance>,
}

/// Solver record for one ellipsoid of a chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingProvenance {
    pub tau: f64,
    pub iterations: usize,
    /// Scalar shrink factor `ρ` of the disturbance ball cover against this ellipsoid.
    pub shrink: f64,
}

impl SegmentFamily {
    pub fn outer(&self) -> &Ellipsoid {
        self.chain.last().expect("chain holds E_0")
    }

    pub fn constraints(&self, model: &VertexModel, disturbance: &BoxSet) -> Result<SynthesisConstraints> {
        SynthesisConstraints::new(model, self.rows.clone(), self.input_box.clone(), disturbance.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullPath {
    /// Families indexed by `s`; `s = 0` holds the goal.
    pub families: Vec<SegmentFamily>,
    pub waypoints: Vec<Waypoint>,
    pub obstacles: Vec<ObstacleBox>,
}

impl FullPath {
    /// Families in start-to-goal traversal order.
    pub fn traversal(&self) -> impl Iterator<Item = &SegmentFamily> {
        self.families.iter().rev()
    }

    pub fn ellipsoid_count(&self) -> usize {
        self.families.iter().map(|f| f.chain.len()).sum()
    }
}

/// Input that holds `x` at rest under the vertex combination evaluated at `x`.
pub fn compute_equilibrium(
    x: &DVector<f64>,
    model: &VertexModel,
    p: &VehicleParams,
    gb: &GammaBounds,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let w = vertex_weights(&gamma_of_state(x, p, gb).rho);
    let n = model.n();
    let mut phi = DMatrix::zeros(n, n);
    for (j, pj) in model.phi.iter().enumerate() {
        phi += pj * w[j];
    }
    let r = (phi - DMatrix::identity(n, n)) * x;
    let svd = model.g.clone().svd(true, true);
    let u = -svd.solve(&r, 1e-12).map_err(|e| Error::Config(e.to_string()))?;
    let resid = (&r + &model.g * &u).norm();
    if resid > 1e-6 {
        return Err(Error::NotEquilibrium(resid));
    }
    Ok((x.clone(), u))
}

fn segment_rows(ctx: &PlanContext, obstacles: &[ObstacleBox], sides: &[Side]) -> Vec<Halfspace> {
    let mut rows = ctx.rows.clone();
    for (ob, side) in obstacles.iter().zip(sides) {
        rows.extend(obstacle_free_halfspaces(ob, *side));
    }
    rows
}

fn shifted_box(b: &BoxSet, origin: &DVector<f64>) -> Result<BoxSet> {
    BoxSet::new(
        (0..b.dim()).map(|i| b.lower[i] - origin[i]).collect(),
        (0..b.dim()).map(|i| b.upper[i] - origin[i]).collect(),
    )
}

/// Synthesizes the families that steer `x1` into the equilibrium at `x2`. Returns the families
/// (numbered from `s_start`) and the next free index.
pub fn one_step_sequence(
    x1: &Waypoint,
    x2: &Waypoint,
    s_start: usize,
    ctx: &PlanContext,
    rows: &[Halfspace],
) -> Result<(Vec<SegmentFamily>, usize)> {
    let start = x1.x();
    let mut x_eq = x2.x();
    let mut families: Vec<SegmentFamily> = Vec::new();
    let mut tau_hint: Option<f64> = None;
    loop {
        let (_, u_eq) = compute_equilibrium(&x_eq, &ctx.model, &ctx.params, &ctx.gamma)?;
        let rel_rows: Vec<Halfspace> = rows
            .iter()
            .map(|h| {
                let mut r = h.shifted(&x_eq);
                r.offset = r.offset.min(ctx.row_cap);
                r
            })
            .collect();
        if let Some(k) = rel_rows.iter().position(|h| !(h.offset > 0.0)) {
            return Err(Error::ConstraintViolation(format!("equilibrium violates row {k}")));
        }
        let cons = SynthesisConstraints::new(
            &ctx.model,
            rel_rows.clone(),
            shifted_box(&ctx.input_box, &u_eq)?,
            ctx.disturbance.clone(),
        )?;
        let key = SynthesisCache::key(&cons);
        let cached = ctx.cache.0.lock().ok().and_then(|m| m.get(&key).cloned());
        let (pair, all_rings) = match cached {
            Some(entry) => entry,
            None => {
                let pair = match tau_hint {
                    Some(t) => synthesize_terminal_pair_near(&ctx.model, &cons, &ctx.settings, t)?,
                    None => synthesize_terminal_pair_with(&ctx.model, &cons, &ctx.settings)?,
                };
                let rings = grow_chain(&pair, &ctx.model, &cons, &ctx.settings, |_| false)?;
                if let Ok(mut m) = ctx.cache.0.lock() {
                    m.insert(key, (pair.clone(), rings.clone()));
                }
                (pair, rings)
            }
        };
        tau_hint = Some(pair.tau);
        let rel_start = &start - &x_eq;
        let inside = |e: &Ellipsoid| e.membership_value(&rel_start).map_or(false, |v| v <= 1.0);
        let keep = if inside(&pair.terminal) {
            0
        } else {
            all_rings.iter().position(|r| inside(&r.ellipsoid)).map_or(all_rings.len(), |i| i + 1)
        };
        let shrink = |e: &Ellipsoid| shrink_factor(e, &cons.disturbance_cover).unwrap_or(0.0);
        let mut chain = vec![pair.terminal.with_center(x_eq.clone())?];
        let mut ring_gains = vec![pair.gain.clone()];
        let mut provenance = vec![RingProvenance { tau: pair.tau, iterations: pair.iterations, shrink: shrink(&pair.terminal) }];
        for r in &all_rings[..keep] {
            chain.push(r.ellipsoid.with_center(x_eq.clone())?);
            ring_gains.push(r.gain.clone());
            provenance.push(RingProvenance { tau: r.tau, iterations: r.iterations, shrink: shrink(&r.ellipsoid) });
        }
        let family = SegmentFamily {
            s: s_start + families.len(),
            x_eq: x_eq.clone(),
            u_eq,
            gain: pair.gain,
            chain,
            ring_gains,
            rows: rel_rows,
            input_box: cons.input_box.clone(),
            provenance,
        };
        let reached = family.outer().membership_value(&start)? <= 1.0;
        let outer = family.outer().clone();
        families.push(family);
        if reached {
            break;
        }
        if families.len() >= ctx.max_families {
            return Err(Error::Stall { segment: s_start });
        }
        let next = recenter(&outer, &x_eq, &start, ctx.pull_back)?;
        let next = snap(&outer, next, ctx.snap)?;
        let step = PLANE
            .iter()
            .map(|&i| ((next[i] - x_eq[i]) / cons.scale[i]).abs())
            .fold(0.0, f64::max);
        if step < 1e-3 {
            return Err(Error::Stall { segment: s_start });
        }
        x_eq = next;
    }
    let next = s_start + families.len();
    Ok((families, next))
}

/// Closest point to `target` on the equilibrium slice of `outer`, pulled back toward `center`.
pub fn recenter(outer: &Ellipsoid, center: &DVector<f64>, target: &DVector<f64>, pull_back: f64) -> Result<DVector<f64>> {
    let slice = outer.slice(&PLANE, center)?.ok_or(Error::SingularShape)?;
    let y = DVector::from_iterator(2, PLANE.iter().map(|&i| target[i]));
    let p = slice.project(&y)?;
    let mut next = center.clone();
    for (k, &i) in PLANE.iter().enumerate() {
        next[i] = center[i] + (1.0 - pull_back) * (p[k] - center[i]);
    }
    Ok(next)
}

fn snap(outer: &Ellipsoid, x: DVector<f64>, grid: f64) -> Result<DVector<f64>> {
    if !(grid > 0.0) {
        return Ok(x);
    }
    let mut y = x.clone();
    for &i in &PLANE {
        y[i] = (x[i] / grid).round() * grid;
    }
    Ok(if outer.membership_value(&y)? < outer.membership_value(&x)?.max(0.9) { y } else { x })
}

/// Stitches the families along `waypoints` (start first, goal last).
pub fn full_path(waypoints: &[Waypoint], obstacles: &[ObstacleBox], ctx: &PlanContext) -> Result<FullPath> {
    if waypoints.len() < 2 {
        return Err(Error::Config("a path needs at least two waypoints".into()));
    }
    let mut families = Vec::new();
    let mut s = 0;
    for k in (0..waypoints.len() - 1).rev() {
        let rows = segment_rows(ctx, obstacles, &waypoints[k + 1].sides);
        let (fams, next) = one_step_sequence(&waypoints[k], &waypoints[k + 1], s, ctx, &rows).map_err(|e| match e {
            Error::Stall { .. } => Error::Stall { segment: k },
            Error::InfeasibleSynthesis(m) => Error::InfeasibleSynthesis(format!("segment {k}: {m}")),
            Error::ConstraintViolation(m) => Error::ConstraintViolation(format!("segment {k}: {m}")),
            other => other,
        })?;
        families.extend(fams);
        s = next;
    }
    Ok(FullPath { families, waypoints: waypoints.to_vec(), obstacles: obstacles.to_vec() })
}

/// Plans again from the current state. The first alternative waypoint is replaced by `x_now`
/// projected onto the equilibrium manifold; fails when no ellipsoid of the new path contains
/// `x_now`.
pub fn replan(
    x_now: &DVector<f64>,
    obstacles: &[ObstacleBox],
    w_alt: &[Waypoint],
    ctx: &PlanContext,
) -> Result<FullPath> {
    let mut wps = w_alt.to_vec();
    let first = wps.first_mut().ok_or_else(|| Error::Config("empty contingency waypoints".into()))?;
    first.state = x_now.iter().copied().collect();
    let fp = full_path(&wps, obstacles, ctx).map_err(|e| match e {
        Error::Stall { .. } | Error::InfeasibleSynthesis(_) | Error::ConstraintViolation(_) => Error::NoContainingEllipsoid,
        other => other,
    })?;
    let inside = fp
        .families
        .iter()
        .any(|f| f.chain.iter().any(|e| e.membership_value(x_now).map_or(false, |v| v <= 1.0)));
    if inside {
        Ok(fp)
    } else {
        Err(Error::NoContainingEllipsoid)
    }
}
