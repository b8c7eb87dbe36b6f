//! Dense barrier interior-point solver for determinant maximization under LMIs.
//!
//! Solves `maximize log det F_obj(z)` subject to `F_i(z) ⪰ 0`, where every `F(z) = F_0 + Σ z_k F_k`
//! is affine and symmetric. Phase I minimizes a common slack; phase II follows the central path
//! of `t·(−log det F_obj) − Σ log det F_i`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::{Error, Result};

/// Symmetric affine matrix function stored as sparse upper-triangle coefficients.
#[derive(Clone, Debug)]
pub struct Lmi {
    pub label: String,
    dim: usize,
    f0: Vec<(usize, usize, f64)>,
    terms: Vec<Vec<(usize, usize, f64)>>,
}

impl Lmi {
    pub fn new(label: impl Into<String>, dim: usize, nvars: usize) -> Self {
        Self { label: label.into(), dim, f0: Vec::new(), terms: vec![Vec::new(); nvars] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nvars(&self) -> usize {
        self.terms.len()
    }

    /// Adds `v` at `(a, b)` and its mirror.
    pub fn add_const(&mut self, a: usize, b: usize, v: f64) {
        if v != 0.0 {
            self.f0.push(upper(a, b, v));
        }
    }

    pub fn add_term(&mut self, k: usize, a: usize, b: usize, v: f64) {
        if v != 0.0 {
            self.terms[k].push(upper(a, b, v));
        }
    }

    pub fn add_const_block(&mut self, r0: usize, c0: usize, m: &DMatrix<f64>) {
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let (a, b) = (r0 + r, c0 + c);
                if r0 == c0 && b < a {
                    continue;
                }
                self.add_const(a, b, m[(r, c)]);
            }
        }
    }

    /// Merges duplicate coordinates; call once after assembly.
    pub fn finish(mut self) -> Self {
        merge(&mut self.f0);
        for t in &mut self.terms {
            merge(t);
        }
        self
    }

    pub fn eval(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut f = DMatrix::zeros(self.dim, self.dim);
        scatter(&mut f, &self.f0, 1.0);
        for (k, t) in self.terms.iter().enumerate() {
            if z[k] != 0.0 {
                scatter(&mut f, t, z[k]);
            }
        }
        f
    }

    /// Copy with one extra variable entering as `s·I`.
    fn with_slack(&self) -> Self {
        let mut out = self.clone();
        out.terms.push((0..self.dim).map(|a| (a, a, 1.0)).collect());
        out
    }
}

fn upper(a: usize, b: usize, v: f64) -> (usize, usize, f64) {
    if a <= b {
        (a, b, v)
    } else {
        (b, a, v)
    }
}

fn merge(t: &mut Vec<(usize, usize, f64)>) {
    t.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(t.len());
    for &(a, b, v) in t.iter() {
        match out.last_mut() {
            Some(last) if last.0 == a && last.1 == b => last.2 += v,
            _ => out.push((a, b, v)),
        }
    }
    out.retain(|e| e.2 != 0.0);
    *t = out;
}

fn scatter(f: &mut DMatrix<f64>, t: &[(usize, usize, f64)], s: f64) {
    for &(a, b, v) in t {
        f[(a, b)] += s * v;
        if a != b {
            f[(b, a)] += s * v;
        }
    }
}

#[derive(Clone, Debug)]
pub struct Settings {
    /// Duality-gap target on the barrier path, absolute in log-det units.
    pub gap: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub mu: f64,
    /// Required strict-feasibility margin at the end of phase I.
    pub margin: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self { gap: 1e-4, newton_tol: 1e-9, max_newton: 100, mu: 12.0, margin: 1e-13 }
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub z: DVector<f64>,
    pub newton_iterations: usize,
    pub log_det: f64,
}

struct Eval {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

/// Value, gradient and Hessian of `Σ w_i (−log det F_i(z))`; `None` if some `F_i` is not PD.
fn barrier(lmis: &[Lmi], weights: &[f64], z: &DVector<f64>, derivs: bool) -> Option<Eval> {
    let n = z.len();
    let mut value = 0.0;
    let mut grad = DVector::zeros(if derivs { n } else { 0 });
    let mut hess = DMatrix::zeros(if derivs { n } else { 0 }, if derivs { n } else { 0 });
    for (lmi, &w) in lmis.iter().zip(weights) {
        let chol = Cholesky::new(lmi.eval(z))?;
        let l = chol.l();
        value -= w * 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !derivs {
            continue;
        }
        let d = lmi.dim;
        let linv = l.solve_lower_triangular(&DMatrix::identity(d, d))?;
        // V_k = L⁻¹ F_k L⁻ᵀ, stored as columns of vec(V_k).
        let mut v = DMatrix::<f64>::zeros(d * d, n);
        let mut active = Vec::with_capacity(n);
        for (k, t) in lmi.terms.iter().enumerate() {
            if t.is_empty() {
                continue;
            }
            active.push(k);
            let mut col = v.column_mut(k);
            for &(a, b, val) in t {
                let ua = linv.column(a);
                let ub = linv.column(b);
                for c in 0..d {
                    let uac = ua[c] * val;
                    let ubc = ub[c] * val;
                    for r in 0..d {
                        col[r + c * d] += ua[r] * ubc;
                        if a != b {
                            col[r + c * d] += ub[r] * uac;
                        }
                    }
                }
            }
        }
        for &k in &active {
            let col = v.column(k);
            let tr: f64 = (0..d).map(|i| col[i + i * d]).sum();
            grad[k] -= w * tr;
        }
        for (ia, &ka) in active.iter().enumerate() {
            for &kb in &active[ia..] {
                let h = w * v.column(ka).dot(&v.column(kb));
                hess[(ka, kb)] += h;
                if ka != kb {
                    hess[(kb, ka)] += h;
                }
            }
        }
    }
    Some(Eval { value, grad, hess })
}

fn feasible(lmis: &[Lmi], z: &DVector<f64>) -> bool {
    lmis.iter().all(|l| Cholesky::new(l.eval(z)).is_some())
}

/// Damped Newton minimization of `lin·z + barrier`; returns the iterate and the step count.
fn centering(
    lmis: &[Lmi],
    weights: &[f64],
    lin: &DVector<f64>,
    mut z: DVector<f64>,
    st: &Settings,
) -> (DVector<f64>, usize) {
    let n = z.len();
    for it in 0..st.max_newton {
        let Some(ev) = barrier(lmis, weights, &z, true) else { return (z, it) };
        let g = ev.grad + lin;
        let v = ev.value + lin.dot(&z);
        let mut h = ev.hess;
        let scale = h.diagonal().amax().max(1.0);
        for i in 0..n {
            h[(i, i)] += 1e-13 * scale;
        }
        let Some(chol) = Cholesky::new(h) else { return (z, it) };
        let dz = -chol.solve(&g);
        let lam2 = -g.dot(&dz);
        if lam2 / 2.0 < st.newton_tol {
            return (z, it);
        }
        let slope = g.dot(&dz);
        let mut s = 1.0;
        loop {
            let zn = &z + &dz * s;
            if let Some(e) = barrier(lmis, weights, &zn, false) {
                if e.value + lin.dot(&zn) <= v + 0.25 * s * slope {
                    z = zn;
                    break;
                }
            }
            s *= 0.5;
            if s < 1e-14 {
                return (z, it);
            }
        }
    }
    (z, st.max_newton)
}

/// Finds a strictly feasible point, or reports the most violated LMI.
pub fn phase_one(lmis: &[Lmi], z0: &DVector<f64>, st: &Settings) -> Result<(DVector<f64>, usize)> {
    phase_one_reporting(lmis, z0, st, 0)
}

fn phase_one_reporting(
    lmis: &[Lmi],
    z0: &DVector<f64>,
    st: &Settings,
    report_from: usize,
) -> Result<(DVector<f64>, usize)> {
    let n = z0.len();
    if feasible(lmis, z0) {
        return Ok((z0.clone(), 0));
    }
    let aug: Vec<Lmi> = lmis.iter().map(|l| l.with_slack()).collect();
    let worst = lmis
        .iter()
        .map(|l| nalgebra::SymmetricEigen::new(l.eval(z0)).eigenvalues.min())
        .fold(f64::INFINITY, f64::min);
    let mut z = DVector::zeros(n + 1);
    z.rows_mut(0, n).copy_from(z0);
    z[n] = (-worst).max(0.0) + 1.0;
    let weights = vec![1.0; aug.len()];
    let mut lin = DVector::zeros(n + 1);
    let total_dim: usize = lmis.iter().map(|l| l.dim).sum();
    let mut t = 1.0;
    let mut iters = 0;
    let mut last_s = f64::INFINITY;
    loop {
        lin[n] = t;
        let (zn, it) = centering(&aug, &weights, &lin, z, st);
        z = zn;
        iters += it;
        if z[n] < -st.margin {
            return Ok((z.rows(0, n).into_owned(), iters));
        }
        let converged = total_dim as f64 / t < 1e-10 || (last_s - z[n]).abs() < 1e-12 * (1.0 + z[n].abs());
        if converged && z[n] > -st.margin {
            break;
        }
        last_s = z[n];
        t *= 4.0;
        if t > 1e14 {
            break;
        }
    }
    let zf = z.rows(0, n).into_owned();
    let (label, eig) = lmis[report_from..]
        .iter()
        .map(|l| (l.label.clone(), nalgebra::SymmetricEigen::new(l.eval(&zf)).eigenvalues.min()))
        .fold((String::new(), f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    Err(Error::InfeasibleSynthesis(format!(
        "constraint '{label}' cannot be met (min eigenvalue {eig:.3e}, slack {:.3e})",
        z[n]
    )))
}

/// Maximizes `log det objective(z)` subject to every constraint LMI.
pub fn maxdet(objective: &Lmi, constraints: &[Lmi], z0: &DVector<f64>, st: &Settings) -> Result<Solution> {
    let mut all = Vec::with_capacity(constraints.len() + 1);
    all.push(objective.clone());
    all.extend_from_slice(constraints);
    let (mut z, mut total) = phase_one_reporting(&all, z0, st, 1)?;
    let m: usize = constraints.iter().map(|l| l.dim).sum();
    let lin = DVector::zeros(z.len());
    let mut t = 1.0;
    let mut weights = vec![1.0; all.len()];
    loop {
        weights[0] = t;
        let (zn, it) = centering(&all, &weights, &lin, z, st);
        z = zn;
        total += it;
        if m as f64 / t < st.gap {
            break;
        }
        t *= st.mu;
        if total > 40 * st.max_newton {
            return Err(Error::SolverStall(total));
        }
    }
    let log_det = crate::ellipsoid::log_det_spd(&objective.eval(&z)).ok_or(Error::SingularShape)?;
    Ok(Solution { z, newton_iterations: total, log_det })
}
