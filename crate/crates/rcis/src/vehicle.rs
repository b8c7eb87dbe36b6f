//! Vehicle models: the 6-DOF four-wheel plant and the 6-state control model with its
//! quasi-LPV embedding and 8-vertex polytope.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::synthesis::VertexModel;
use crate::{Error, Result};

pub const GRAVITY: f64 = 9.81;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// kg·m²
    pub yaw_inertia: f64,
    pub lf: f64,
    pub lr: f64,
    /// Track width B (m).
    pub track: f64,
    pub wheel_radius: f64,
    pub wheel_inertia: f64,
    /// Cornering stiffness per tire (N/rad).
    pub caf: f64,
    pub car: f64,
    /// Air drag `F = drag·ẋ²` (N·s²/m²).
    pub drag: f64,
    /// Nominal speed v̄ (m/s).
    pub v_bar: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 1575.0,
            yaw_inertia: 2875.0,
            lf: 1.2,
            lr: 1.6,
            track: 1.6,
            wheel_radius: 0.3,
            wheel_inertia: 1.2,
            caf: 19000.0,
            car: 19000.0,
            drag: 0.4,
            v_bar: 20.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.mass,
            self.yaw_inertia,
            self.lf,
            self.lr,
            self.track,
            self.wheel_radius,
            self.wheel_inertia,
            self.caf,
            self.car,
            self.v_bar,
        ];
        if all.iter().any(|v| !(*v > 0.0)) || !(self.drag >= 0.0) {
            return Err(Error::Config("vehicle parameters must be positive".into()));
        }
        Ok(())
    }

    pub fn wheelbase(&self) -> f64 {
        self.lf + self.lr
    }

    pub fn c1(&self) -> f64 {
        2.0 * (self.caf + self.car) / self.mass
    }

    pub fn c2(&self) -> f64 {
        (2.0 * self.caf * self.lf - 2.0 * self.car * self.lr) / self.mass
    }

    pub fn c3(&self) -> f64 {
        (2.0 * self.lf * self.caf - 2.0 * self.lr * self.car) / self.yaw_inertia
    }

    /// Yaw-rate damping; both axles add.
    pub fn c4(&self) -> f64 {
        (2.0 * self.lf * self.lf * self.caf + 2.0 * self.lr * self.lr * self.car) / self.yaw_inertia
    }

    /// Static normal load per wheel (front, rear).
    pub fn static_loads(&self) -> (f64, f64) {
        let w = self.mass * GRAVITY;
        let l = self.wheelbase();
        (w * self.lr / (2.0 * l), w * self.lf / (2.0 * l))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacejkaCoeffs {
    pub s: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    #[serde(default)]
    pub sh: f64,
    #[serde(default)]
    pub sv: f64,
}

/// Per-axle coefficient sets for the plant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TireParams {
    pub long_front: PacejkaCoeffs,
    pub long_rear: PacejkaCoeffs,
    pub lat_front: PacejkaCoeffs,
    pub lat_rear: PacejkaCoeffs,
}

impl TireParams {
    /// Defaults at friction `mu`: longitudinal S = 10, C = 1.9, E = 0.97; lateral S chosen so
    /// the small-slip slope `D·C·S` equals the cornering stiffness.
    pub fn for_vehicle(p: &VehicleParams, mu: f64) -> Self {
        let (fzf, fzr) = p.static_loads();
        let long = |fz: f64| PacejkaCoeffs { s: 10.0, c: 1.9, d: mu * fz, e: 0.97, sh: 0.0, sv: 0.0 };
        let lat = |fz: f64, ca: f64| PacejkaCoeffs { s: ca / (1.9 * mu * fz), c: 1.9, d: mu * fz, e: 0.97, sh: 0.0, sv: 0.0 };
        Self { long_front: long(fzf), long_rear: long(fzr), lat_front: lat(fzf, p.caf), lat_rear: lat(fzr, p.car) }
    }
}

pub fn magic_formula(k: f64, c: &PacejkaCoeffs) -> f64 {
    let sk = c.s * (k + c.sh);
    c.d * (c.c * (sk - c.e * (sk - sk.atan())).atan()).sin() + c.sv
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SixDofState {
    pub vx: f64,
    pub vy: f64,
    pub psi: f64,
    pub r: f64,
    /// ω₁₁, ω₁₂, ω₂₁, ω₂₂ (front-left, front-right, rear-left, rear-right).
    pub omega: [f64; 4],
    pub x: f64,
    pub y: f64,
}

impl SixDofState {
    /// Straight driving at `speed` with free-rolling wheels.
    pub fn cruising(speed: f64, x: f64, y: f64, radius: f64) -> Self {
        let w = speed / radius;
        Self { vx: speed, vy: 0.0, psi: 0.0, r: 0.0, omega: [w; 4], x, y }
    }

    pub fn to_array(&self) -> [f64; 10] {
        let o = self.omega;
        [self.vx, self.vy, self.psi, self.r, o[0], o[1], o[2], o[3], self.x, self.y]
    }

    pub fn from_array(a: &[f64; 10]) -> Self {
        Self { vx: a[0], vy: a[1], psi: a[2], r: a[3], omega: [a[4], a[5], a[6], a[7]], x: a[8], y: a[9] }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlantInput {
    pub delta: f64,
    /// Front drive torques T₁₁, T₁₂ (N·m).
    pub torque: [f64; 2],
}

const MIN_SPEED: f64 = 0.1;

pub fn slip_angles(s: &SixDofState, delta: f64, p: &VehicleParams) -> Result<[f64; 4]> {
    let half = p.track * s.r / 2.0;
    let (left, right) = (s.vx - half, s.vx + half);
    for den in [left, right] {
        if den.abs() < MIN_SPEED {
            return Err(Error::DegenerateSpeed(den));
        }
    }
    let front = s.vy + p.lf * s.r;
    let rear = p.lr * s.r - s.vy;
    Ok([
        delta - (front / left).atan(),
        delta - (front / right).atan(),
        (rear / left).atan(),
        (rear / right).atan(),
    ])
}

/// Longitudinal speed of each wheel along its heading.
pub fn wheel_speeds(s: &SixDofState, delta: f64, p: &VehicleParams) -> [f64; 4] {
    let half = p.track * s.r / 2.0;
    let lat = s.vy + p.lf * s.r;
    let (c, sn) = (delta.cos(), delta.sin());
    [(s.vx - half) * c + lat * sn, (s.vx + half) * c + lat * sn, s.vx - half, s.vx + half]
}

pub fn slip_ratio(r_omega: f64, v: f64) -> Result<f64> {
    if r_omega > v {
        if r_omega.abs() < MIN_SPEED {
            return Err(Error::DegenerateSpeed(r_omega));
        }
        Ok((r_omega - v) / r_omega)
    } else if r_omega < v {
        if v.abs() < MIN_SPEED {
            return Err(Error::DegenerateSpeed(v));
        }
        Ok((r_omega - v) / v)
    } else {
        Ok(0.0)
    }
}

pub fn slip_ratios(s: &SixDofState, delta: f64, p: &VehicleParams) -> Result<[f64; 4]> {
    let v = wheel_speeds(s, delta, p);
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = slip_ratio(p.wheel_radius * s.omega[i], v[i])?;
    }
    Ok(out)
}

/// Time derivative of the plant state.
pub fn sixdof_derivatives(s: &SixDofState, u: &PlantInput, p: &VehicleParams, t: &TireParams) -> Result<[f64; 10]> {
    let alpha = slip_angles(s, u.delta, p)?;
    let sigma = slip_ratios(s, u.delta, p)?;
    let fx = [
        magic_formula(sigma[0], &t.long_front),
        magic_formula(sigma[1], &t.long_front),
        magic_formula(sigma[2], &t.long_rear),
        magic_formula(sigma[3], &t.long_rear),
    ];
    let fy = [
        magic_formula(alpha[0], &t.lat_front),
        magic_formula(alpha[1], &t.lat_front),
        magic_formula(alpha[2], &t.lat_rear),
        magic_formula(alpha[3], &t.lat_rear),
    ];
    let (c, sn) = (u.delta.cos(), u.delta.sin());
    let fxf = fx[0] + fx[1];
    let fyf = fy[0] + fy[1];
    let air = p.drag * s.vx * s.vx.abs();
    let ax = (fx[2] + fx[3] + fxf * c - fyf * sn + p.mass * s.r * s.vy - air) / p.mass;
    let ay = (fy[2] + fy[3] + fxf * sn + fyf * c - p.mass * s.r * s.vx) / p.mass;
    let hb = p.track / 2.0;
    let mz = (fxf * sn + fyf * c) * p.lf + ((fx[1] - fx[0]) * c + (fy[0] - fy[1]) * sn) * hb
        - (fy[2] + fy[3]) * p.lr
        + (fx[3] - fx[2]) * hb;
    let rw = p.wheel_radius / p.wheel_inertia;
    Ok([
        ax,
        ay,
        s.r,
        mz / p.yaw_inertia,
        u.torque[0] / p.wheel_inertia - fx[0] * rw,
        u.torque[1] / p.wheel_inertia - fx[1] * rw,
        -fx[2] * rw,
        -fx[3] * rw,
        s.vx * s.psi.cos() - s.vy * s.psi.sin(),
        s.vx * s.psi.sin() + s.vy * s.psi.cos(),
    ])
}

/// Classical RK4 over `duration` with inner step `dt`.
pub fn integrate_plant(
    s: &SixDofState,
    u: &PlantInput,
    p: &VehicleParams,
    t: &TireParams,
    duration: f64,
    dt: f64,
) -> Result<SixDofState> {
    if !(dt > 0.0) {
        return Err(Error::Config("integration step must be positive".into()));
    }
    let steps = (duration / dt).round() as usize;
    let mut x = s.to_array();
    let f = |x: &[f64; 10]| sixdof_derivatives(&SixDofState::from_array(x), u, p, t);
    let axpy = |x: &[f64; 10], k: &[f64; 10], h: f64| {
        let mut o = *x;
        for i in 0..10 {
            o[i] += h * k[i];
        }
        o
    };
    for step in 0..steps {
        let k1 = f(&x)?;
        let k2 = f(&axpy(&x, &k1, dt / 2.0))?;
        let k3 = f(&axpy(&x, &k2, dt / 2.0))?;
        let k4 = f(&axpy(&x, &k3, dt))?;
        for i in 0..10 {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if x.iter().any(|v| !v.is_finite() || v.abs() > 1e6) {
            return Err(Error::Unstable((step + 1) as f64 * dt));
        }
    }
    Ok(SixDofState::from_array(&x))
}

/// Control-model state `[Δv_x, ẏ, ψ, ψ̇, y, x_rel]`.
pub type ControlState = DVector<f64>;

/// Right-hand side of the 6-state control model.
pub fn control_model_derivatives(x: &DVector<f64>, u: &[f64; 2], d: &[f64; 2], p: &VehicleParams) -> Result<DVector<f64>> {
    let v = p.v_bar + x[0];
    if v <= 0.5 {
        return Err(Error::DegenerateSpeed(v));
    }
    let b1 = 2.0 * p.caf / p.mass;
    let b2 = 2.0 * p.lf * p.caf / p.yaw_inertia;
    Ok(DVector::from_vec(vec![
        x[1] * x[3] + u[1],
        -p.c1() / v * x[1] + b1 * u[0] - (v + p.c2() / v) * x[3],
        x[3],
        -p.c3() / v * x[1] + b2 * u[0] - p.c4() / v * x[3],
        x[1] + v * x[2] - d[0],
        x[0] - d[1],
    ]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaBounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for GammaBounds {
    fn default() -> Self {
        use std::f64::consts::FRAC_PI_2;
        Self { min: [-FRAC_PI_2, -2.0, 0.03], max: [FRAC_PI_2, 2.0, 0.1] }
    }
}

impl GammaBounds {
    pub fn validate(&self) -> Result<()> {
        if (0..3).any(|i| !(self.min[i] < self.max[i])) || !(self.min[2] > 0.0) {
            return Err(Error::Config("gamma bounds must satisfy min < max and γ₃ > 0".into()));
        }
        Ok(())
    }

    /// Envelope implied by `|x₁| ≤ dv`, `|x₃| ≤ psi`, `|x₄| ≤ rate` around speed `v_bar`.
    pub fn envelope(v_bar: f64, dv: f64, psi: f64, rate: f64) -> Self {
        Self { min: [-psi, -rate, 1.0 / (v_bar + dv)], max: [psi, rate, 1.0 / (v_bar - dv)] }
    }

    pub fn corner(&self, j: usize) -> [f64; 3] {
        let mut g = [0.0; 3];
        for (i, gi) in g.iter_mut().enumerate() {
            let bit = (j >> (2 - i)) & 1;
            *gi = if bit == 1 { self.max[i] } else { self.min[i] };
        }
        g
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaEval {
    pub gamma: [f64; 3],
    pub rho: [f64; 3],
    pub out_of_envelope: bool,
}

pub fn gamma_of_state(x: &DVector<f64>, p: &VehicleParams, gb: &GammaBounds) -> GammaEval {
    let gamma = [x[2], x[3], 1.0 / (p.v_bar + x[0])];
    let mut rho = [0.0; 3];
    let mut out = false;
    for i in 0..3 {
        let r = (gamma[i] - gb.min[i]) / (gb.max[i] - gb.min[i]);
        out |= !(0.0..=1.0).contains(&r);
        rho[i] = r.clamp(0.0, 1.0);
    }
    GammaEval { gamma, rho, out_of_envelope: out }
}

/// Tensor-product weights over the 8 vertices in binary order (ρ₁ρ₂ρ₃).
pub fn vertex_weights(rho: &[f64; 3]) -> [f64; 8] {
    let mut w = [0.0; 8];
    for (j, wj) in w.iter_mut().enumerate() {
        *wj = (0..3)
            .map(|i| if (j >> (2 - i)) & 1 == 1 { rho[i] } else { 1.0 - rho[i] })
            .product();
    }
    w
}

/// Continuous-time Φ(γ).
pub fn continuous_a(p: &VehicleParams, g: &[f64; 3]) -> DMatrix<f64> {
    let (g1, g2, g3) = (g[0], g[1], g[2]);
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(6, 6, &[
        0.0, g2, 0.0, 0.0, 0.0, 0.0,
        -g2, -g3 * p.c1(), 0.0, -(p.v_bar + p.c2() * g3), 0.0, 0.0,
        0.0, 0.0, 0.0, 1.0, 0.0, 0.0,
        0.0, -p.c3() * g3, 0.0, -p.c4() * g3, 0.0, 0.0,
        g1, 1.0, p.v_bar, 0.0, 0.0, 0.0,
        1.0, 0.0, 0.0, 0.0, 0.0, 0.0,
    ]);
    a
}

pub fn continuous_b(p: &VehicleParams) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(6, 2);
    b[(0, 1)] = 1.0;
    b[(1, 0)] = 2.0 * p.caf / p.mass;
    b[(3, 0)] = 2.0 * p.lf * p.caf / p.yaw_inertia;
    b
}

pub fn continuous_bd() -> DMatrix<f64> {
    let mut b = DMatrix::zeros(6, 2);
    b[(4, 0)] = -1.0;
    b[(5, 1)] = -1.0;
    b
}

/// Forward-Euler vertex polytope.
pub fn build_vertex_model(p: &VehicleParams, gb: &GammaBounds, ts: f64) -> VertexModel {
    let eye = DMatrix::identity(6, 6);
    let phi = (0..8).map(|j| &eye + continuous_a(p, &gb.corner(j)) * ts).collect();
    VertexModel { phi, g: continuous_b(p) * ts, gd: continuous_bd() * ts, ts }
}
