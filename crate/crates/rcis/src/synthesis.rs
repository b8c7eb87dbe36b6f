//! Offline synthesis: terminal feedback pairs and the backward one-step ellipsoid recursion,
//! both as determinant-maximization programs over `(Q, Y)` with `K = Y Q⁻¹`.
//!
//! Disturbance handling is exact box-corner containment: for every vertex `j` and corner `w` of
//! `G_d·D`, `(Φ_j + G K) e + w` must land in the target for every `e` in the new ellipsoid.
//! Each pair becomes an S-procedure LMI with multiplier `τ`, chosen from a small grid.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ellipsoid::{cover_box_image, spd_inverse, symmetrize, BoxSet, Ellipsoid, Halfspace};
use crate::maxdet::{maxdet, Lmi, Settings};
use crate::qp::{MinMaxProblem, Quad};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VertexModel {
    pub phi: Vec<DMatrix<f64>>,
    pub g: DMatrix<f64>,
    pub gd: DMatrix<f64>,
    pub ts: f64,
}

impl VertexModel {
    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    pub fn m(&self) -> usize {
        self.g.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.phi.is_empty() || self.phi.iter().any(|p| p.nrows() != n || p.ncols() != n) {
            return Err(Error::Dimension("vertex matrices must be n×n".into()));
        }
        if self.gd.nrows() != n {
            return Err(Error::Dimension("G_d rows".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisConstraints {
    /// Equilibrium-relative state rows `aᵀe ≤ b`.
    pub state_halfspaces: Vec<Halfspace>,
    /// `U − u_eq`.
    pub input_box: BoxSet,
    pub disturbance: BoxSet,
    pub disturbance_cover: Ellipsoid,
    /// Per-state scaling used to condition the programs.
    pub scale: DVector<f64>,
}

impl SynthesisConstraints {
    pub fn new(
        model: &VertexModel,
        state_halfspaces: Vec<Halfspace>,
        input_box: BoxSet,
        disturbance: BoxSet,
    ) -> Result<Self> {
        let n = model.n();
        if input_box.dim() != model.m() || disturbance.dim() != model.gd.ncols() {
            return Err(Error::Dimension("input or disturbance box".into()));
        }
        if state_halfspaces.iter().any(|h| h.normal.len() != n) {
            return Err(Error::Dimension("state halfspace".into()));
        }
        let disturbance_cover = cover_box_image(&model.gd, &disturbance)?;
        let mut scale = DVector::from_element(n, f64::INFINITY);
        for h in &state_halfspaces {
            let nz: Vec<usize> = (0..n).filter(|&i| h.normal[i] != 0.0).collect();
            if nz.len() == 1 && h.offset > 0.0 {
                let i = nz[0];
                scale[i] = scale[i].min(h.offset / h.normal[i].abs());
            }
        }
        scale.iter_mut().filter(|s| !s.is_finite()).for_each(|s| *s = 1.0);
        Ok(Self { state_halfspaces, input_box, disturbance, disturbance_cover, scale })
    }

    fn check_origin(&self) -> Result<()> {
        for (k, h) in self.state_halfspaces.iter().enumerate() {
            if !(h.offset > 0.0) {
                return Err(Error::InfeasibleSynthesis(format!("state row {k} excludes the equilibrium")));
            }
        }
        for r in 0..self.input_box.dim() {
            if !(self.input_box.lower[r] < 0.0 && self.input_box.upper[r] > 0.0) {
                return Err(Error::InfeasibleSynthesis(format!("input row {r} excludes u_eq")));
            }
        }
        Ok(())
    }

    /// Symmetric input limits (conservative for asymmetric boxes).
    fn input_limits(&self) -> Vec<f64> {
        (0..self.input_box.dim())
            .map(|r| self.input_box.upper[r].min(-self.input_box.lower[r]))
            .collect()
    }

    /// Distinct disturbance images up to sign.
    pub fn disturbance_corners(&self, model: &VertexModel) -> Vec<DVector<f64>> {
        let symmetric = (0..self.disturbance.dim())
            .all(|i| (self.disturbance.upper[i] + self.disturbance.lower[i]).abs() <= 1e-15);
        let mut out: Vec<DVector<f64>> = Vec::new();
        for d in self.disturbance.corners() {
            let w = &model.gd * d;
            if w.amax() == 0.0 {
                continue;
            }
            if symmetric && out.iter().any(|o| (o + &w).amax() <= 1e-15) {
                continue;
            }
            if out.iter().any(|o| (o - &w).amax() <= 1e-15) {
                continue;
            }
            out.push(w);
        }
        out
    }
}

/// Stabilizing gain with its invariant terminal ellipsoid (equilibrium-relative).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackPair {
    pub gain: DMatrix<f64>,
    pub terminal: Ellipsoid,
    pub tau: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub ellipsoid: Ellipsoid,
    pub gain: DMatrix<f64>,
    pub tau: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct SynthesisSettings {
    /// Coarse multiplier grid for terminal sets.
    pub terminal_taus: Vec<f64>,
    /// `1 − τ = r·f` for each factor `f`, with `r` the worst corner radius in the target metric.
    pub tau_factors: Vec<f64>,
    pub solver: Settings,
    pub nesting_eps: f64,
    /// Terminal images must land in `λ·E`; `λ < 1` leaves room for the rings to grow.
    pub contraction: f64,
    /// Stop growing when the volume ratio between rings falls below this.
    pub min_growth: f64,
    pub max_steps: usize,
}

impl Default for SynthesisSettings {
    fn default() -> Self {
        Self {
            terminal_taus: vec![0.7, 0.9, 0.97, 0.99, 0.997],
            tau_factors: vec![1.0],
            solver: Settings::default(),
            nesting_eps: 5e-9,
            contraction: 0.97,
            min_growth: 1.01,
            max_steps: 50,
        }
    }
}

struct Scaled {
    n: usize,
    m: usize,
    t: DVector<f64>,
    su: DVector<f64>,
    phis: Vec<DMatrix<f64>>,
    g: DMatrix<f64>,
    corners: Vec<DVector<f64>>,
    nq: usize,
}

impl Scaled {
    fn new(model: &VertexModel, cons: &SynthesisConstraints) -> Self {
        let n = model.n();
        let m = model.m();
        let t = cons.scale.clone();
        let su = DVector::from_vec(cons.input_limits());
        let tinv = t.map(|v| 1.0 / v);
        let phis = model
            .phi
            .iter()
            .map(|p| DMatrix::from_fn(n, n, |a, b| tinv[a] * p[(a, b)] * t[b]))
            .collect();
        let g = DMatrix::from_fn(n, m, |a, r| tinv[a] * model.g[(a, r)] * su[r]);
        let corners = cons.disturbance_corners(model).into_iter().map(|w| w.component_mul(&tinv)).collect();
        Self { n, m, t, su, phis, g, corners, nq: n * (n + 1) / 2 }
    }

    fn nvars(&self) -> usize {
        self.nq + self.m * self.n
    }

    fn qvar(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * self.n - i * (i + 1) / 2 + j
    }

    fn yvar(&self, r: usize, c: usize) -> usize {
        self.nq + r * self.n + c
    }

    fn to_scaled(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |a, b| p[(a, b)] / (self.t[a] * self.t[b]))
    }

    /// Adds the `Q̃` pattern at block `(r0, r0)` with weight `w`.
    fn add_q_block(&self, l: &mut Lmi, r0: usize, w: f64) {
        for i in 0..self.n {
            for j in i..self.n {
                l.add_term(self.qvar(i, j), r0 + i, r0 + j, w);
            }
        }
    }

    /// Adds `M̃ = Φ̃ Q̃ + G̃ Ỹ` at rows `r0`, columns `c0` (with `r0 > c0`).
    fn add_m_block(&self, l: &mut Lmi, phi: &DMatrix<f64>, r0: usize, c0: usize) {
        let n = self.n;
        for a in 0..n {
            for i in 0..n {
                for j in i..n {
                    let k = self.qvar(i, j);
                    // Q̃ entry (i, j) and its mirror (j, i).
                    l.add_term(k, r0 + a, c0 + j, phi[(a, i)]);
                    if i != j {
                        l.add_term(k, r0 + a, c0 + i, phi[(a, j)]);
                    }
                }
            }
            for r in 0..self.m {
                for c in 0..n {
                    l.add_term(self.yvar(r, c), r0 + a, c0 + c, self.g[(a, r)]);
                }
            }
        }
    }

    /// `target = None` builds the terminal (invariance) program.
    fn lmis(&self, cons: &SynthesisConstraints, tau: f64, target: Option<&DMatrix<f64>>, eps: f64, lam2: f64) -> (Lmi, Vec<Lmi>) {
        let n = self.n;
        let nv = self.nvars();
        let mut out = Vec::new();
        for (j, phi) in self.phis.iter().enumerate() {
            if self.corners.is_empty() {
                let mut l = Lmi::new(format!("vertex {j}"), 2 * n, nv);
                self.add_q_block(&mut l, 0, 1.0);
                self.add_m_block(&mut l, phi, n, 0);
                match target {
                    Some(p) => l.add_const_block(n, n, p),
                    None => self.add_q_block(&mut l, n, lam2),
                }
                out.push(l.finish());
                continue;
            }
            for (k, w) in self.corners.iter().enumerate() {
                let mut l = Lmi::new(format!("vertex {j} corner {k}"), 1 + 2 * n, nv);
                l.add_const(0, 0, 1.0 - tau);
                for a in 0..n {
                    l.add_const(0, 1 + n + a, w[a]);
                }
                self.add_q_block(&mut l, 1, tau);
                self.add_m_block(&mut l, phi, 1 + n, 1);
                match target {
                    Some(p) => l.add_const_block(1 + n, 1 + n, p),
                    None => self.add_q_block(&mut l, 1 + n, lam2),
                }
                out.push(l.finish());
            }
        }
        for r in 0..self.m {
            let mut l = Lmi::new(format!("input row {r}"), 1 + n, nv);
            l.add_const(0, 0, 1.0);
            for c in 0..n {
                l.add_term(self.yvar(r, c), 0, 1 + c, 1.0);
            }
            self.add_q_block(&mut l, 1, 1.0);
            out.push(l.finish());
        }
        for (k, h) in cons.state_halfspaces.iter().enumerate() {
            let a: Vec<f64> = (0..n).map(|i| h.normal[i] * self.t[i]).collect();
            let mut l = Lmi::new(format!("state row {k}"), 1, nv);
            l.add_const(0, 0, h.offset * h.offset);
            for i in 0..n {
                for j in i..n {
                    let mult = if i == j { 1.0 } else { 2.0 };
                    l.add_term(self.qvar(i, j), 0, 0, -mult * a[i] * a[j]);
                }
            }
            out.push(l.finish());
        }
        if let Some(p) = target {
            let mut l = Lmi::new("nesting", n, nv);
            self.add_q_block(&mut l, 0, 1.0);
            l.add_const_block(0, 0, &(-(1.0 - eps) * p));
            out.push(l.finish());
        }
        let mut obj = Lmi::new("volume", n, nv);
        self.add_q_block(&mut obj, 0, 1.0);
        (obj.finish(), out)
    }

    fn z_from(&self, q: &DMatrix<f64>, y: Option<&DMatrix<f64>>) -> DVector<f64> {
        let mut z = DVector::zeros(self.nvars());
        for i in 0..self.n {
            for j in i..self.n {
                z[self.qvar(i, j)] = q[(i, j)];
            }
        }
        if let Some(y) = y {
            for r in 0..self.m {
                for c in 0..self.n {
                    z[self.yvar(r, c)] = y[(r, c)];
                }
            }
        }
        z
    }

    /// Unscaled `(Q, K)` from a solution vector.
    fn recover(&self, z: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let (n, m) = (self.n, self.m);
        let qs = DMatrix::from_fn(n, n, |i, j| z[self.qvar(i, j)]);
        let ys = DMatrix::from_fn(m, n, |r, c| z[self.yvar(r, c)]);
        let qinv = spd_inverse(&qs)?;
        let ks = &ys * qinv;
        let q = symmetrize(&DMatrix::from_fn(n, n, |a, b| self.t[a] * qs[(a, b)] * self.t[b]));
        let k = DMatrix::from_fn(m, n, |r, c| self.su[r] * ks[(r, c)] / self.t[c]);
        Ok((q, k))
    }

    /// Scaled `Ỹ = Su⁻¹ K T Q̃`.
    fn y_from_gain(&self, k: &DMatrix<f64>, qs: &DMatrix<f64>) -> DMatrix<f64> {
        let kt = DMatrix::from_fn(self.m, self.n, |r, c| k[(r, c)] * self.t[c] / self.su[r]);
        kt * qs
    }
}

struct Candidate {
    q: DMatrix<f64>,
    k: DMatrix<f64>,
    tau: f64,
    log_det: f64,
    iterations: usize,
}

struct Search<'a> {
    sc: &'a Scaled,
    cons: &'a SynthesisConstraints,
    target: Option<&'a DMatrix<f64>>,
    z0: DVector<f64>,
    st: &'a SynthesisSettings,
    best: Option<Candidate>,
    iterations: usize,
    last_err: Option<Error>,
}

impl<'a> Search<'a> {
    fn new(sc: &'a Scaled, cons: &'a SynthesisConstraints, target: Option<&'a DMatrix<f64>>, z0: DVector<f64>, st: &'a SynthesisSettings) -> Self {
        Self { sc, cons, target, z0, st, best: None, iterations: 0, last_err: None }
    }

    fn try_tau(&mut self, tau: f64) -> Result<()> {
        let (obj, lmis) = self.sc.lmis(self.cons, tau, self.target, self.st.nesting_eps, self.st.contraction.powi(2));
        match maxdet(&obj, &lmis, &self.z0, &self.st.solver) {
            Ok(sol) => {
                self.iterations += sol.newton_iterations;
                if self.best.as_ref().map_or(true, |b| sol.log_det > b.log_det) {
                    let (q, k) = self.sc.recover(&sol.z)?;
                    self.best = Some(Candidate { q, k, tau, log_det: sol.log_det, iterations: 0 });
                }
                Ok(())
            }
            Err(e @ Error::InfeasibleSynthesis(_)) => {
                self.last_err = Some(e);
                Ok(())
            }
            Err(e) => Err(e),
        }
    }

    /// Largest disturbance-corner radius measured in the scaled shape `p`.
    fn corner_radius(&self, p: &DMatrix<f64>) -> Result<f64> {
        let mut r: f64 = 0.0;
        for w in &self.sc.corners {
            r = r.max(crate::ellipsoid::quad_inv(p, w)?.sqrt());
        }
        Ok(r)
    }

    fn taus_around(&self, r: f64) -> Vec<f64> {
        self.st
            .tau_factors
            .iter()
            .map(|f| 1.0 - (r * f).clamp((r * r * 1.0001).max(1e-6), 0.9))
            .collect()
    }

    fn finish(self) -> Result<Candidate> {
        match self.best {
            Some(mut b) => {
                b.iterations = self.iterations;
                Ok(b)
            }
            None => Err(self
                .last_err
                .unwrap_or_else(|| Error::InfeasibleSynthesis("no multiplier succeeded".into()))),
        }
    }
}

pub fn synthesize_terminal_pair(model: &VertexModel, cons: &SynthesisConstraints) -> Result<FeedbackPair> {
    synthesize_terminal_pair_with(model, cons, &SynthesisSettings::default())
}

pub fn synthesize_terminal_pair_with(
    model: &VertexModel,
    cons: &SynthesisConstraints,
    st: &SynthesisSettings,
) -> Result<FeedbackPair> {
    model.validate()?;
    cons.check_origin()?;
    let sc = Scaled::new(model, cons);
    let z0 = sc.z_from(&(DMatrix::identity(sc.n, sc.n) * 1e-3), None);
    let mut search = Search::new(&sc, cons, None, z0, st);
    if sc.corners.is_empty() {
        search.try_tau(1.0)?;
    } else {
        for &tau in &st.terminal_taus {
            search.try_tau(tau)?;
        }
        // τ ≈ 1 − r is tight when the image touches the target along the worst corner.
        if let Some(b) = &search.best {
            let r = search.corner_radius(&(sc.to_scaled(&b.q) * st.contraction.powi(2)))?;
            for tau in search.taus_around(r) {
                search.try_tau(tau)?;
            }
        }
    }
    finish_pair(search, sc.n)
}

/// Terminal synthesis that tries `tau_hint` first and falls back to the full grid.
pub fn synthesize_terminal_pair_near(
    model: &VertexModel,
    cons: &SynthesisConstraints,
    st: &SynthesisSettings,
    tau_hint: f64,
) -> Result<FeedbackPair> {
    model.validate()?;
    cons.check_origin()?;
    let sc = Scaled::new(model, cons);
    if sc.corners.is_empty() {
        return synthesize_terminal_pair_with(model, cons, st);
    }
    let z0 = sc.z_from(&(DMatrix::identity(sc.n, sc.n) * 1e-3), None);
    let mut search = Search::new(&sc, cons, None, z0, st);
    search.try_tau(tau_hint)?;
    let Some(b) = &search.best else {
        return synthesize_terminal_pair_with(model, cons, st);
    };
    let r = search.corner_radius(&(sc.to_scaled(&b.q) * st.contraction.powi(2)))?;
    for tau in search.taus_around(r) {
        if (tau - tau_hint).abs() > 1e-6 {
            search.try_tau(tau)?;
        }
    }
    finish_pair(search, sc.n)
}

fn finish_pair(search: Search, n: usize) -> Result<FeedbackPair> {
    let c = search.finish()?;
    Ok(FeedbackPair {
        gain: c.k,
        terminal: Ellipsoid::new(DVector::zeros(n), c.q)?,
        tau: c.tau,
        iterations: c.iterations,
    })
}

pub fn backward_step(
    target: &Ellipsoid,
    model: &VertexModel,
    cons: &SynthesisConstraints,
    warm: Option<(&DMatrix<f64>, f64)>,
    st: &SynthesisSettings,
) -> Result<StepResult> {
    model.validate()?;
    cons.check_origin()?;
    let sc = Scaled::new(model, cons);
    let ps = symmetrize(&sc.to_scaled(target.shape()));
    // The previous ring's (Q, K, τ) stays feasible for a larger target.
    let y0 = warm.map(|(k, _)| sc.y_from_gain(k, &ps));
    let z0 = sc.z_from(&ps, y0.as_ref());
    let mut search = Search::new(&sc, cons, Some(&ps), z0, st);
    if sc.corners.is_empty() {
        search.try_tau(1.0)?;
    } else {
        let r = search.corner_radius(&ps)?;
        let mut taus: Vec<f64> = warm.map(|(_, t)| t).into_iter().filter(|t| *t < 1.0).collect();
        for tau in search.taus_around(r) {
            if taus.iter().all(|t| (t - tau).abs() > 1e-4) {
                taus.push(tau);
            }
        }
        for tau in taus {
            search.try_tau(tau)?;
        }
    }
    match search.finish() {
        Ok(c) => Ok(StepResult {
            ellipsoid: Ellipsoid::new(target.center().clone(), c.q)?,
            gain: c.k,
            tau: c.tau,
            iterations: c.iterations,
        }),
        Err(Error::InfeasibleSynthesis(_)) => Err(Error::InfeasibleStep),
        Err(e) => Err(e),
    }
}

/// Grows a chain from `pair` until `stop` accepts the latest ring, growth saturates, or the
/// step cap is reached. Returns the rings after `E_0`.
pub fn grow_chain<F: FnMut(&Ellipsoid) -> bool>(
    pair: &FeedbackPair,
    model: &VertexModel,
    cons: &SynthesisConstraints,
    st: &SynthesisSettings,
    mut stop: F,
) -> Result<Vec<StepResult>> {
    let mut out: Vec<StepResult> = Vec::new();
    if stop(&pair.terminal) {
        return Ok(out);
    }
    for _ in 0..st.max_steps {
        let (target, gain, tau) = match out.last() {
            Some(s) => (&s.ellipsoid, &s.gain, s.tau),
            None => (&pair.terminal, &pair.gain, pair.tau),
        };
        let step = match backward_step(target, model, cons, Some((gain, tau)), st) {
            Ok(s) => s,
            Err(Error::InfeasibleStep) => break,
            Err(e) => return Err(e),
        };
        let growth = ((step.ellipsoid.log_det() - target.log_det()) / 2.0).exp();
        let done = stop(&step.ellipsoid);
        out.push(step);
        if done || growth < st.min_growth {
            break;
        }
    }
    Ok(out)
}

/// Builds the one-step min-max problem for equilibrium-relative state `e` into `target`.
pub fn one_step_problem(
    e: &DVector<f64>,
    target_inv: &DMatrix<f64>,
    model: &VertexModel,
    cons: &SynthesisConstraints,
    corners: &[DVector<f64>],
) -> MinMaxProblem {
    let gtw = model.g.transpose() * target_inv;
    let h = &gtw * &model.g;
    let quad = |r: &DVector<f64>| Quad { b: &gtw * r, c: (target_inv * r).dot(r) };
    let mut costs = Vec::with_capacity(model.phi.len());
    let mut constraints = Vec::new();
    for phi in &model.phi {
        let r = phi * e;
        costs.push(quad(&r));
        if corners.is_empty() {
            constraints.push(quad(&r));
        }
        for w in corners {
            constraints.push(quad(&(&r + w)));
            constraints.push(quad(&(&r - w)));
        }
    }
    MinMaxProblem {
        h,
        costs,
        constraints,
        bound: 1.0,
        lower: DVector::from_column_slice(&cons.input_box.lower),
        upper: DVector::from_column_slice(&cons.input_box.upper),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub samples: usize,
    pub feasible: usize,
    /// Largest membership value of a vertex/corner image under the best input found.
    pub worst_membership: f64,
    pub scalar_shrink: f64,
}

impl VerifyReport {
    pub fn fraction(&self) -> f64 {
        if self.samples == 0 {
            1.0
        } else {
            self.feasible as f64 / self.samples as f64
        }
    }
}

/// Samples `outer` uniformly and checks that each point can be steered into `inner` for all
/// vertices and disturbance corners. The recorded gain is tried first; the min-max solver is the
/// fallback.
pub fn verify_one_step<R: Rng>(
    outer: &Ellipsoid,
    inner: &Ellipsoid,
    gain: Option<&DMatrix<f64>>,
    model: &VertexModel,
    cons: &SynthesisConstraints,
    samples: usize,
    tol: f64,
    rng: &mut R,
) -> Result<VerifyReport> {
    let gap = (outer.center() - inner.center()).amax();
    if gap > 1e-9 {
        return Err(Error::CenterMismatch(gap));
    }
    let pinv = spd_inverse(inner.shape())?;
    let corners = cons.disturbance_corners(model);
    let scalar_shrink = crate::ellipsoid::shrink_factor(inner, &cons.disturbance_cover.with_center(inner.center().clone())?)?;
    let mut feasible = 0;
    let mut worst_membership: f64 = 0.0;
    for _ in 0..samples {
        let e = outer.sample_interior(rng) - outer.center();
        let prob = one_step_problem(&e, &pinv, model, cons, &corners);
        let mut best = f64::INFINITY;
        if let Some(k) = gain {
            let u = k * &e;
            if cons.input_box.contains_tol(u.as_slice(), tol) {
                best = prob.worst(&u);
            }
        }
        if best > 1.0 + tol {
            if let Some(sol) = prob.solve(None) {
                best = best.min(sol.worst);
            }
        }
        if best <= 1.0 + tol {
            feasible += 1;
        }
        if best.is_finite() {
            worst_membership = worst_membership.max(best);
        } else {
            worst_membership = f64::INFINITY;
        }
    }
    Ok(VerifyReport { samples, feasible, worst_membership, scalar_shrink })
}

/// Largest `aᵀPa − b²` over the rows; nonpositive means admissible.
pub fn constraint_excess(e: &Ellipsoid, rows: &[Halfspace]) -> f64 {
    rows.iter()
        .map(|h| {
            let a = h.normal_vec();
            (e.shape() * &a).dot(&a) - h.offset * h.offset
        })
        .fold(f64::NEG_INFINITY, f64::max)
}
