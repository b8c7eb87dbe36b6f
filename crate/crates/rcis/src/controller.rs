//! Online phase: lexicographic localization in the path, terminal feedback, the min-max one-step
//! law, and the safe-following and cruise fallbacks.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ellipsoid::{spd_inverse, BoxSet};
use crate::planner::{FullPath, SegmentFamily};
use crate::qp::MinMaxProblem;
use crate::synthesis::{one_step_problem, SynthesisConstraints, VertexModel};
use crate::{Error, Result};

pub const REPLAY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControllerMode {
    Cruise,
    SafeFollow,
    TrackPath { s: usize, i: usize },
    TerminalHold { s: usize },
}

impl ControllerMode {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Cruise => "cruise",
            Self::SafeFollow => "safe_follow",
            Self::TrackPath { .. } => "track_path",
            Self::TerminalHold { .. } => "terminal_hold",
        }
    }

    pub fn indices(&self) -> Option<(usize, usize)> {
        match *self {
            Self::TrackPath { s, i } => Some((s, i)),
            Self::TerminalHold { s } => Some((s, 0)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlDecision {
    /// `(δ_f, ẍ_des)`.
    pub u: [f64; 2],
    pub mode: ControllerMode,
    pub solve_ms: f64,
    /// Worst predicted membership value over vertex/corner images (0 outside the path modes).
    pub worst_membership: f64,
}

/// Lexicographically smallest `(s, i)` whose ellipsoid contains `x`.
pub fn locate(x: &DVector<f64>, fp: &FullPath) -> Option<(usize, usize)> {
    for f in &fp.families {
        for (i, e) in f.chain.iter().enumerate() {
            if e.membership_value(x).map_or(false, |v| v <= 1.0) {
                return Some((f.s, i));
            }
        }
    }
    None
}

pub fn terminal_law(x: &DVector<f64>, family: &SegmentFamily) -> DVector<f64> {
    &family.u_eq + &family.gain * (x - &family.x_eq)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OneStep {
    pub u: DVector<f64>,
    pub cost: f64,
    pub worst: f64,
}

/// Min-max one-step law into `E_{i−1}` with the certificate replayed before returning.
pub fn one_step_control(
    x: &DVector<f64>,
    family: &SegmentFamily,
    i: usize,
    model: &VertexModel,
    cons: &SynthesisConstraints,
    corners: &[DVector<f64>],
) -> Result<OneStep> {
    if i == 0 || i >= family.chain.len() {
        return Err(Error::InfeasibleOneStep { s: family.s, i });
    }
    let e = x - &family.x_eq;
    let pinv = spd_inverse(family.chain[i - 1].shape())?;
    let prob = one_step_problem(&e, &pinv, model, cons, corners);
    let v = solve_certified(&prob, Some(&family.ring_gains[i] * &e)).ok_or(Error::InfeasibleOneStep { s: family.s, i })?;
    Ok(OneStep { cost: prob.cost(&v), worst: prob.worst(&v), u: &family.u_eq + v })
}

/// Solves `prob` and replays the certificate; the warm start doubles as a fallback.
pub fn solve_certified(prob: &MinMaxProblem, warm: Option<DVector<f64>>) -> Option<DVector<f64>> {
    let ok = |v: &DVector<f64>| {
        prob.worst(v) <= prob.bound + REPLAY_TOL
            && (0..v.len()).all(|k| v[k] >= prob.lower[k] - REPLAY_TOL && v[k] <= prob.upper[k] + REPLAY_TOL)
    };
    let sol = prob.solve(warm.as_ref()).map(|s| s.v);
    match (sol, warm) {
        (Some(v), Some(w)) if ok(&v) && ok(&w) => Some(if prob.cost(&v) <= prob.cost(&w) { v } else { w }),
        (Some(v), _) if ok(&v) => Some(v),
        (_, Some(w)) if ok(&w) => Some(w),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FollowSettings {
    pub k_d: f64,
    pub k_v: f64,
    pub d_safe: f64,
    pub u_max: f64,
}

impl Default for FollowSettings {
    fn default() -> Self {
        Self { k_d: 0.1, k_v: 0.8, d_safe: 12.0, u_max: 2.0 }
    }
}

/// Longitudinal command for keeping `d_safe` behind a lead; `v_rel` is the lead's speed minus
/// the ego's.
pub fn safe_follow(x_rel: f64, v_rel: f64, st: &FollowSettings) -> f64 {
    (st.k_d * (x_rel.abs() - st.d_safe) + st.k_v * v_rel).clamp(-st.u_max, st.u_max)
}

/// Discrete LQR gain by Riccati iteration: `u = −K x`.
pub fn dlqr(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut p = q.clone();
    let mut k = DMatrix::zeros(b.ncols(), a.nrows());
    for _ in 0..20_000 {
        let btp = b.transpose() * &p;
        let s = r + &btp * b;
        let kn = s.clone().cholesky().ok_or(Error::SingularShape)?.solve(&(&btp * a));
        let pn = q + a.transpose() * &p * a - a.transpose() * &p * b * &kn;
        let pn = (&pn + pn.transpose()) * 0.5;
        let done = (&pn - &p).amax() <= 1e-10 * p.amax().max(1.0);
        p = pn;
        k = kn;
        if done {
            break;
        }
    }
    Ok(k)
}

/// Lane keeping at cruise speed: LQR on `(x1 … x5)` of the nominal vertex, then the input box.
#[derive(Clone, Debug, PartialEq)]
pub struct CruiseLaw {
    pub gain: DMatrix<f64>,
    pub input_box: BoxSet,
}

impl CruiseLaw {
    pub fn new(model: &VertexModel, weights: &[f64; 8], input_box: BoxSet) -> Result<Self> {
        let mut phi = DMatrix::zeros(6, 6);
        for (j, p) in model.phi.iter().enumerate() {
            phi += p * weights[j];
        }
        let a = phi.view((0, 0), (5, 5)).into_owned();
        let b = model.g.view((0, 0), (5, 2)).into_owned();
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.1, 10.0, 1.0, 1.0]));
        let r = DMatrix::from_diagonal(&DVector::from_vec(vec![50.0, 1.0]));
        Ok(Self { gain: dlqr(&a, &b, &q, &r)?, input_box })
    }

    /// Returns `(δ_f, ẍ_des)` holding `lane_y`; `accel` overrides the longitudinal channel.
    pub fn command(&self, x: &DVector<f64>, lane_y: f64, accel: Option<f64>) -> [f64; 2] {
        let mut z = DVector::from_iterator(5, x.iter().take(5).copied());
        z[4] -= lane_y;
        let u = -(&self.gain * z);
        let clip = |k: usize, v: f64| v.clamp(self.input_box.lower[k], self.input_box.upper[k]);
        [clip(0, u[0]), clip(1, accel.unwrap_or(u[1]))]
    }
}

/// Per-family data the online law needs, precomputed once per path.
#[derive(Clone, Debug)]
struct FamilyCache {
    cons: SynthesisConstraints,
}

/// Stateful wrapper for the mode logic.
#[derive(Clone, Debug)]
pub struct Controller {
    pub model: VertexModel,
    pub disturbance: BoxSet,
    pub cruise: CruiseLaw,
    pub follow: FollowSettings,
    corners: Vec<DVector<f64>>,
    path: Option<FullPath>,
    cache: Vec<FamilyCache>,
}

/// What the controller sees of the closest relevant lead.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeadView {
    pub x_rel: f64,
    pub v_rel: f64,
}

impl Controller {
    pub fn new(model: VertexModel, disturbance: BoxSet, cruise: CruiseLaw, follow: FollowSettings) -> Result<Self> {
        let probe = SynthesisConstraints::new(&model, vec![], cruise.input_box.clone(), disturbance.clone())?;
        let corners = probe.disturbance_corners(&model);
        Ok(Self { model, disturbance, cruise, follow, corners, path: None, cache: Vec::new() })
    }

    pub fn path(&self) -> Option<&FullPath> {
        self.path.as_ref()
    }

    /// Swaps the active path (or clears it) between steps.
    pub fn set_path(&mut self, fp: Option<FullPath>) -> Result<()> {
        self.cache.clear();
        if let Some(fp) = &fp {
            for f in &fp.families {
                self.cache.push(FamilyCache { cons: f.constraints(&self.model, &self.disturbance)? });
            }
        }
        self.path = fp;
        Ok(())
    }

    /// One sampling period of the mode logic. `lead` is the closest lead ahead in the ego lane,
    /// `lane_y` the lane to hold outside the path modes.
    pub fn step(&mut self, x: &DVector<f64>, lead: Option<LeadView>, lane_y: f64) -> Result<ControlDecision> {
        let t0 = Instant::now();
        let located = self.path.as_ref().and_then(|fp| locate(x, fp));
        let (u, mode, worst) = match (located, self.path.as_ref()) {
            (Some((s, 0)), Some(fp)) => {
                let f = &fp.families[s];
                let u = terminal_law(x, f);
                let v = &u - &f.u_eq;
                if !self.cache[s].cons.input_box.contains_tol(v.as_slice(), REPLAY_TOL) {
                    return Err(Error::ConstraintViolation(format!("terminal input outside U in family {s}")));
                }
                ([u[0], u[1]], ControllerMode::TerminalHold { s }, 0.0)
            }
            (Some((s, i)), Some(fp)) => {
                let f = &fp.families[s];
                let r = one_step_control(x, f, i, &self.model, &self.cache[s].cons, &self.corners)?;
                ([r.u[0], r.u[1]], ControllerMode::TrackPath { s, i }, r.worst)
            }
            _ => match lead {
                Some(l) => {
                    let a = safe_follow(l.x_rel, l.v_rel, &self.follow);
                    (self.cruise.command(x, lane_y, Some(a.min(self.cruise_accel(x)))), ControllerMode::SafeFollow, 0.0)
                }
                None => (self.cruise.command(x, lane_y, None), ControllerMode::Cruise, 0.0),
            },
        };
        Ok(ControlDecision { u, mode, solve_ms: t0.elapsed().as_secs_f64() * 1e3, worst_membership: worst })
    }

    fn cruise_accel(&self, x: &DVector<f64>) -> f64 {
        self.cruise.command(x, x[4], None)[1]
    }
}
