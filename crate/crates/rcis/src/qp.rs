//! Small barrier solver for the one-step min-max problem
//! `min_v max_j q_j(v)` s.t. `c_k(v) ≤ bound`, `lower ≤ v ≤ upper`, where every quadratic shares
//! the Hessian `H`: `q(v) = vᵀHv + 2bᵀv + c`.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub struct Quad {
    pub b: DVector<f64>,
    pub c: f64,
}

impl Quad {
    pub fn eval(&self, h: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
        (h * v).dot(v) + 2.0 * self.b.dot(v) + self.c
    }

    fn grad(&self, h: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
        (h * v + &self.b) * 2.0
    }
}

#[derive(Clone, Debug)]
pub struct MinMaxProblem {
    pub h: DMatrix<f64>,
    pub costs: Vec<Quad>,
    pub constraints: Vec<Quad>,
    pub bound: f64,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct MinMaxSolution {
    pub v: DVector<f64>,
    pub cost: f64,
    /// Largest constraint value at `v`.
    pub worst: f64,
    pub iterations: usize,
}

const GAP: f64 = 1e-9;

impl MinMaxProblem {
    pub fn cost(&self, v: &DVector<f64>) -> f64 {
        self.costs.iter().map(|q| q.eval(&self.h, v)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn worst(&self, v: &DVector<f64>) -> f64 {
        self.constraints.iter().map(|q| q.eval(&self.h, v)).fold(f64::NEG_INFINITY, f64::max)
    }

    fn in_box(&self, v: &DVector<f64>) -> bool {
        (0..v.len()).all(|i| v[i] > self.lower[i] && v[i] < self.upper[i])
    }

    /// Solves the problem; `None` when no input meets the constraints.
    pub fn solve(&self, warm: Option<&DVector<f64>>) -> Option<MinMaxSolution> {
        let m = self.h.nrows();
        let mut iterations = 0;
        let mid = (&self.lower + &self.upper) * 0.5;
        let mut v = match warm {
            Some(w) if self.in_box(w) && self.worst(w) < self.bound => w.clone(),
            _ => {
                let start = warm.filter(|w| self.in_box(w)).cloned().unwrap_or(mid);
                let (v, it) = self.phase_one(start)?;
                iterations += it;
                v
            }
        };
        if self.costs.is_empty() {
            let cost = 0.0;
            return Some(MinMaxSolution { worst: self.worst(&v), v, cost, iterations });
        }
        // Epigraph variable appended as the last coordinate.
        let mut z = DVector::zeros(m + 1);
        z.rows_mut(0, m).copy_from(&v);
        z[m] = self.cost(&v) + 1.0;
        let ncons = (self.costs.len() + self.constraints.len() + 2 * m) as f64;
        let mut t = 1.0;
        loop {
            let (zn, it) = self.center(z, t, false);
            z = zn;
            iterations += it;
            if ncons / t < GAP {
                break;
            }
            t *= 20.0;
        }
        v = z.rows(0, m).into_owned();
        Some(MinMaxSolution { cost: self.cost(&v), worst: self.worst(&v), v, iterations })
    }

    fn phase_one(&self, v0: DVector<f64>) -> Option<(DVector<f64>, usize)> {
        let m = v0.len();
        let mut z = DVector::zeros(m + 1);
        z.rows_mut(0, m).copy_from(&v0);
        z[m] = self.worst(&v0) - self.bound + 1.0;
        let mut t = 1.0;
        let mut iterations = 0;
        let mut last = f64::INFINITY;
        loop {
            let (zn, it) = self.center(z, t, true);
            z = zn;
            iterations += it;
            let v = z.rows(0, m).into_owned();
            if self.worst(&v) < self.bound {
                return Some((v, iterations));
            }
            if (last - z[m]).abs() < 1e-13 || t > 1e12 {
                return None;
            }
            last = z[m];
            t *= 20.0;
        }
    }

    /// Barrier value, gradient and Hessian; `None` outside the domain.
    fn barrier(&self, z: &DVector<f64>, t: f64, phase_one: bool) -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
        let m = self.h.nrows();
        let v = z.rows(0, m).into_owned();
        let s = z[m];
        let mut f = t * s;
        let mut g = DVector::zeros(m + 1);
        g[m] = t;
        let mut hs = DMatrix::zeros(m + 1, m + 1);
        let mut add = |val: f64, grad: &DVector<f64>, hess_v: Option<&DMatrix<f64>>| -> bool {
            // val < 0 required.
            if !(val < 0.0) {
                return false;
            }
            f -= (-val).ln();
            g.axpy(-1.0 / val, grad, 1.0);
            hs.ger(1.0 / (val * val), grad, grad, 1.0);
            if let Some(hq) = hess_v {
                let mut view = hs.view_mut((0, 0), (m, m));
                view += hq * (-1.0 / val);
            }
            true
        };
        let h2 = &self.h * 2.0;
        let (quads, bound): (Vec<&Quad>, f64) = if phase_one {
            (self.constraints.iter().collect(), self.bound)
        } else {
            (self.costs.iter().collect(), 0.0)
        };
        for q in quads {
            let mut grad = DVector::zeros(m + 1);
            grad.rows_mut(0, m).copy_from(&q.grad(&self.h, &v));
            grad[m] = -1.0;
            if !add(q.eval(&self.h, &v) - bound - s, &grad, Some(&h2)) {
                return None;
            }
        }
        if !phase_one {
            for q in &self.constraints {
                let mut grad = DVector::zeros(m + 1);
                grad.rows_mut(0, m).copy_from(&q.grad(&self.h, &v));
                if !add(q.eval(&self.h, &v) - self.bound, &grad, Some(&h2)) {
                    return None;
                }
            }
        }
        for i in 0..m {
            let mut e = DVector::zeros(m + 1);
            e[i] = 1.0;
            if !add(v[i] - self.upper[i], &e, None) {
                return None;
            }
            e[i] = -1.0;
            if !add(self.lower[i] - v[i], &e, None) {
                return None;
            }
        }
        Some((f, g, hs))
    }

    fn center(&self, mut z: DVector<f64>, t: f64, phase_one: bool) -> (DVector<f64>, usize) {
        for it in 0..100 {
            let Some((f, g, h)) = self.barrier(&z, t, phase_one) else {
                return (z, it);
            };
            let step = match h.clone().cholesky() {
                Some(c) => -c.solve(&g),
                None => -g.clone(),
            };
            let dec = -g.dot(&step);
            if dec / 2.0 < 1e-11 {
                return (z, it);
            }
            let mut a = 1.0;
            loop {
                let cand = &z + &step * a;
                if let Some((fc, _, _)) = self.barrier(&cand, t, phase_one) {
                    if fc <= f - 0.25 * a * dec {
                        z = cand;
                        break;
                    }
                }
                a *= 0.5;
                if a < 1e-14 {
                    return (z, it);
                }
            }
            if phase_one && z[z.len() - 1] < -1e-6 {
                return (z, it + 1);
            }
        }
        (z, 100)
    }
}
