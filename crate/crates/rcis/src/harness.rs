//! Scenarios, the closed loop (radar → mode logic → controller → 6-DOF plant), re-plan
//! triggering, traces and metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::controller::{ControlDecision, Controller, CruiseLaw, FollowSettings, LeadView};
use crate::ellipsoid::{box_halfspaces, BoxSet};
use crate::planner::{full_path, replan, FullPath, ObstacleBox, PlanContext, Side, SynthesisCache, Waypoint};
use crate::synthesis::SynthesisSettings;
use crate::vehicle::{
    build_vertex_model, gamma_of_state, integrate_plant, vertex_weights, GammaBounds, PlantInput, SixDofState,
    TireParams, VehicleParams,
};
use crate::{Error, Result};

fn default_ts() -> f64 {
    0.1
}

fn default_plant_dt() -> f64 {
    0.005
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Road {
    pub lanes: usize,
    pub lane_width: f64,
}

impl Road {
    pub fn lane_centers(&self) -> Vec<f64> {
        let n = self.lanes as f64;
        (0..self.lanes).map(|k| (k as f64 - (n - 1.0) / 2.0) * self.lane_width).collect()
    }

    pub fn nearest_lane(&self, y: f64) -> f64 {
        self.lane_centers()
            .into_iter()
            .min_by(|a, b| (a - y).abs().total_cmp(&(b - y).abs()))
            .unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ego {
    pub speed: f64,
    pub x0: [f64; 6],
    pub goal: [f64; 6],
    pub length: f64,
    pub width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ramp {
    pub to: f64,
    pub duration: f64,
    /// Start at this time (s)...
    #[serde(default)]
    pub start_time: Option<f64>,
    /// ...or once the ego's lateral position first reaches this value.
    #[serde(default)]
    pub start_when_ego_y_above: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    /// Initial longitudinal distance ahead of the ego (m).
    pub ahead: f64,
    pub y: f64,
    pub speed: f64,
    pub length: f64,
    pub width: f64,
    pub eps_x: f64,
    pub eps_y: f64,
    #[serde(default)]
    pub keep_out: f64,
    #[serde(default)]
    pub ramp: Option<Ramp>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub x4: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraints {
    /// `|u₁| ≤ input[0]`, `|u₂| ≤ input[1]`.
    pub input: [f64; 2],
    pub x1: f64,
    pub x3: f64,
    pub x4: f64,
    pub lateral: f64,
    /// Synthesis box on `|x₆|`.
    pub x6_box: f64,
    /// Operating envelope used for the vertex model; every ellipsoid respects these rows.
    pub envelope: Envelope,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub lateral: f64,
    pub longitudinal: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoints {
    pub initial: Vec<Waypoint>,
    #[serde(default)]
    pub contingency: Vec<Waypoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Radar {
    pub range: f64,
    #[serde(default)]
    pub noise_x: f64,
    #[serde(default)]
    pub noise_y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisOptions {
    pub contraction: f64,
    pub max_steps: usize,
    pub min_growth: f64,
    pub pull_back: f64,
    pub max_families: usize,
    pub row_cap: f64,
    pub snap: f64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            contraction: 0.995,
            max_steps: 1,
            min_growth: 1.0,
            pull_back: 0.7,
            max_families: 120,
            row_cap: 40.0,
            snap: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default = "default_ts")]
    pub ts: f64,
    pub duration: f64,
    #[serde(default = "default_plant_dt")]
    pub plant_dt: f64,
    pub road: Road,
    pub ego: Ego,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub gamma: GammaBounds,
    /// Keyed obstacles; the first key (sorted) is the reference lead that defines `x₆`.
    pub obstacles: BTreeMap<String, ObstacleSpec>,
    pub constraints: Constraints,
    pub disturbance: Disturbance,
    pub waypoints: Waypoints,
    pub radar: Radar,
    #[serde(default)]
    pub follow: FollowSettings,
    #[serde(default)]
    pub synthesis: SynthesisOptions,
}

impl Scenario {
    pub fn from_toml(s: &str) -> Result<Self> {
        let scn: Scenario = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        scn.validate()?;
        Ok(scn)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let scn: Scenario = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        scn.validate()?;
        Ok(scn)
    }

    /// Reads `.toml` or `.json` by extension.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json(&text),
            _ => Self::from_toml(&text),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.ts > 0.0) || !(self.plant_dt > 0.0) || self.plant_dt > self.ts {
            return bad("ts and plant_dt must be positive with plant_dt ≤ ts");
        }
        if !(self.duration >= 0.0) {
            return bad("duration must be nonnegative");
        }
        if self.road.lanes == 0 || !(self.road.lane_width > 0.0) {
            return bad("road needs at least one lane of positive width");
        }
        if self.obstacles.is_empty() {
            return bad("at least one obstacle (the reference lead) is required");
        }
        self.vehicle.validate()?;
        self.gamma.validate()?;
        let c = &self.constraints;
        let e = &c.envelope;
        if !(e.x1 > 0.0 && e.x1 <= c.x1 && e.x3 > 0.0 && e.x3 <= c.x3 && e.x4 > 0.0 && e.x4 <= c.x4 && e.x2 > 0.0) {
            return bad("envelope must be positive and inside the state bounds");
        }
        if !(e.x1 < self.vehicle.v_bar) {
            return bad("envelope speed deviation must stay below v_bar");
        }
        if self.waypoints.initial.len() < 2 {
            return bad("at least two initial waypoints are required");
        }
        let nob = self.obstacles.len();
        for w in self.waypoints.initial.iter().chain(&self.waypoints.contingency) {
            if w.state.len() != 6 {
                return bad("waypoint states have six components");
            }
            if !w.sides.is_empty() && w.sides.len() != nob {
                return bad("waypoint sides must list one entry per obstacle");
            }
        }
        let x0 = DVector::from_column_slice(&self.ego.x0);
        if x0[4].abs() > c.lateral || x0[0].abs() > c.x1 {
            return bad("initial state violates the constraints");
        }
        Ok(())
    }

    pub fn reference_key(&self) -> &str {
        self.obstacles.keys().next().map(|s| s.as_str()).unwrap_or("")
    }

    pub fn lead_specs(&self) -> Vec<&ObstacleSpec> {
        self.obstacles.values().collect()
    }

    fn envelope_gamma(&self) -> GammaBounds {
        let e = &self.constraints.envelope;
        GammaBounds::envelope(self.vehicle.v_bar, e.x1, e.x3, e.x4)
    }

    pub fn input_box(&self) -> BoxSet {
        BoxSet::symmetric(&self.constraints.input)
    }

    pub fn disturbance_box(&self) -> BoxSet {
        BoxSet::symmetric(&[self.disturbance.lateral, self.disturbance.longitudinal])
    }

    pub fn plan_context(&self, cache: SynthesisCache) -> PlanContext {
        let e = &self.constraints.envelope;
        let c = &self.constraints;
        let gamma = self.envelope_gamma();
        let model = build_vertex_model(&self.vehicle, &gamma, self.ts);
        let rows = box_halfspaces(&BoxSet::symmetric(&[e.x1, e.x2, e.x3, e.x4, c.lateral, c.x6_box]));
        let o = &self.synthesis;
        let settings = SynthesisSettings {
            contraction: o.contraction,
            max_steps: o.max_steps,
            min_growth: o.min_growth,
            ..SynthesisSettings::default()
        };
        PlanContext {
            params: self.vehicle.clone(),
            gamma,
            model,
            rows,
            input_box: self.input_box(),
            disturbance: self.disturbance_box(),
            settings,
            pull_back: o.pull_back,
            max_families: o.max_families,
            row_cap: o.row_cap,
            snap: o.snap,
            cache,
        }
    }

    /// Obstacle box of lead `k` in the reference frame given world positions.
    fn obstacle_box(&self, k: usize, x_k: f64, x_ref: f64, y_k: f64) -> ObstacleBox {
        let o = self.lead_specs()[k];
        ObstacleBox {
            x_rel: x_k - x_ref,
            y: y_k,
            l_ego: self.ego.length,
            l_lead: o.length,
            eps_x: o.eps_x,
            w_ego: self.ego.width,
            w_lead: o.width,
            eps_y: o.eps_y,
            keep_out: o.keep_out,
        }
    }

    /// Leads visible from the initial state, with the waypoint sides restricted to them.
    pub fn initial_plan_inputs(&self) -> (Vec<Waypoint>, Vec<ObstacleBox>) {
        let specs = self.lead_specs();
        let x_ego = 0.0;
        let x_ref = specs[0].ahead;
        let visible: Vec<usize> =
            (0..specs.len()).filter(|&k| (specs[k].ahead - x_ego).abs() <= self.radar.range).collect();
        let obstacles = visible.iter().map(|&k| self.obstacle_box(k, specs[k].ahead, x_ref, specs[k].y)).collect();
        let mut wps = self.waypoints.initial.clone();
        wps[0].state = self.ego.x0.to_vec();
        (restrict_sides(&wps, &visible), obstacles)
    }

    /// Digest of everything an offline bundle depends on.
    pub fn synthesis_hash(&self) -> String {
        let (wps, obs) = self.initial_plan_inputs();
        let inputs = serde_json::json!({
            "ts": self.ts,
            "vehicle": self.vehicle,
            "constraints": self.constraints,
            "disturbance": self.disturbance,
            "synthesis": self.synthesis,
            "waypoints": wps,
            "obstacles": obs,
        });
        let digest = Sha256::digest(inputs.to_string().as_bytes());
        digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

fn restrict_sides(wps: &[Waypoint], visible: &[usize]) -> Vec<Waypoint> {
    wps.iter()
        .map(|w| Waypoint {
            state: w.state.clone(),
            sides: if w.sides.is_empty() { vec![] } else { visible.iter().map(|&k| w.sides[k]).collect() },
        })
        .collect()
}

fn standard_lead(ahead: f64, y: f64, speed: f64) -> ObstacleSpec {
    ObstacleSpec { ahead, y, speed, length: 4.5, width: 1.8, eps_x: 1.5, eps_y: 0.2, keep_out: 6.0, ramp: None }
}

fn standard_constraints(lateral: f64) -> Constraints {
    Constraints {
        input: [0.5, 2.0],
        x1: 10.0,
        x3: std::f64::consts::FRAC_PI_2,
        x4: 2.0,
        lateral,
        x6_box: 100.0,
        envelope: Envelope { x1: 5.0, x2: 2.0, x3: 0.05, x4: 0.2 },
    }
}

/// Two 4 m lanes, one lead at 20 m/s 50 m ahead, overtake on the left.
pub fn build_scenario_1() -> Scenario {
    use Side::{Ahead, Behind, Left};
    let mut obstacles = BTreeMap::new();
    obstacles.insert("1".to_string(), standard_lead(50.0, -2.0, 20.0));
    Scenario {
        name: "scenario-1".into(),
        ts: 0.1,
        duration: 60.0,
        plant_dt: default_plant_dt(),
        road: Road { lanes: 2, lane_width: 4.0 },
        ego: Ego { speed: 20.0, x0: [0.0, 0.0, 0.0, 0.0, -2.0, -50.0], goal: [0.0, 0.0, 0.0, 0.0, -2.0, 50.0], length: 4.5, width: 1.8 },
        vehicle: VehicleParams::default(),
        gamma: GammaBounds::default(),
        obstacles,
        constraints: standard_constraints(3.0),
        disturbance: Disturbance { lateral: 0.1, longitudinal: 1.5 },
        waypoints: Waypoints {
            initial: vec![
                Waypoint::at(-2.0, -50.0, vec![]),
                Waypoint::at(2.0, -20.0, vec![Behind]),
                Waypoint::at(2.0, 20.0, vec![Left]),
                Waypoint::at(-2.0, 50.0, vec![Ahead]),
            ],
            contingency: vec![],
        },
        radar: Radar { range: 100.0, noise_x: 0.5, noise_y: 0.1 },
        follow: FollowSettings::default(),
        synthesis: SynthesisOptions::default(),
    }
}

/// Three lanes; lead 1 ahead in the ego lane, lead 2 in the middle lane and ramping 19 → 20 m/s
/// once the ego enters the middle lane. The pass is re-planned through the leftmost lane.
pub fn build_scenario_2() -> Scenario {
    use Side::{Ahead, Behind, Left, Right};
    let mut obstacles = BTreeMap::new();
    obstacles.insert("1".to_string(), standard_lead(40.0, -4.0, 20.0));
    let mut lead2 = standard_lead(80.0, 0.0, 19.0);
    lead2.ramp = Some(Ramp { to: 20.0, duration: 2.0, start_time: None, start_when_ego_y_above: Some(-2.0) });
    obstacles.insert("2".to_string(), lead2);
    Scenario {
        name: "scenario-2".into(),
        ts: 0.1,
        duration: 80.0,
        plant_dt: default_plant_dt(),
        road: Road { lanes: 3, lane_width: 4.0 },
        ego: Ego { speed: 20.0, x0: [0.0, 0.0, 0.0, 0.0, -4.0, -40.0], goal: [0.0, 0.0, 0.0, 0.0, -4.0, 50.0], length: 4.5, width: 1.8 },
        vehicle: VehicleParams::default(),
        gamma: GammaBounds::default(),
        obstacles,
        constraints: standard_constraints(5.0),
        disturbance: Disturbance { lateral: 0.1, longitudinal: 1.5 },
        waypoints: Waypoints {
            initial: vec![
                Waypoint::at(-4.0, -40.0, vec![]),
                Waypoint::at(0.0, -20.0, vec![Behind, Side::None]),
                Waypoint::at(0.0, 20.0, vec![Left, Side::None]),
                Waypoint::at(-4.0, 50.0, vec![Ahead, Side::None]),
            ],
            contingency: vec![
                Waypoint::at(0.0, -20.0, vec![]),
                Waypoint::at(4.0, -10.0, vec![Left, Side::None]),
                Waypoint::at(4.0, 58.0, vec![Left, Left]),
                Waypoint::at(-4.0, 58.0, vec![Ahead, Ahead]),
                Waypoint::at(-4.0, 50.0, vec![Ahead, Right]),
            ],
        },
        radar: Radar { range: 60.0, noise_x: 0.5, noise_y: 0.1 },
        follow: FollowSettings::default(),
        synthesis: SynthesisOptions::default(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadarReading {
    /// `X_ego − X_lead`.
    pub x_rel: f64,
    /// `Y_ego − Y_lead`.
    pub y_rel: f64,
    /// `Ẋ_ego − Ẋ_lead`.
    pub v_rel: f64,
    pub detected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub plant: SixDofState,
    pub x: [f64; 6],
    pub decision: ControlDecision,
    pub radar: Vec<RadarReading>,
    /// Signed margins `bound − |value|` for u₁, u₂, x₁, x₃, x₄, x₅.
    pub margins: [f64; 6],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t: f64,
    pub kind: String,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub scenario: String,
    pub records: Vec<TraceRecord>,
    pub events: Vec<TraceEvent>,
    /// Every path that became active, in order.
    pub paths: Vec<FullPath>,
    /// `x_eq` of the active family per record (NaN outside the path modes).
    pub reference: Vec<[f64; 6]>,
}

impl Trace {
    pub fn replan_count(&self) -> usize {
        self.events.iter().filter(|e| e.kind == "replan").count()
    }

    pub fn solve_ms(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.decision.solve_ms).collect()
    }

    /// Smallest longitudinal gap to each lead while the ego overlaps its lateral band.
    pub fn min_separation(&self, scn: &Scenario) -> Vec<f64> {
        let specs = scn.lead_specs();
        (0..specs.len())
            .map(|k| {
                let dy = (scn.ego.width + specs[k].width) / 2.0 + specs[k].eps_y;
                self.records
                    .iter()
                    .filter(|r| r.radar[k].y_rel.abs() < dy)
                    .map(|r| r.radar[k].x_rel.abs())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: u64,
    pub noise: bool,
    /// Shared synthesis cache for on-line (re-)planning.
    pub cache: SynthesisCache,
    /// Record margins but do not abort on violations.
    pub lenient: bool,
}

struct Lead {
    x: f64,
    y: f64,
    speed: f64,
    ramp_start: Option<f64>,
}

impl Lead {
    fn speed_at(&self, spec: &ObstacleSpec, t: f64) -> f64 {
        match (&spec.ramp, self.ramp_start) {
            (Some(r), Some(t0)) if t >= t0 => {
                let a = ((t - t0) / r.duration).clamp(0.0, 1.0);
                spec.speed + a * (r.to - spec.speed)
            }
            _ => spec.speed,
        }
    }
}

fn control_state(s: &SixDofState, x_ref: f64, v_bar: f64) -> DVector<f64> {
    DVector::from_vec(vec![s.vx - v_bar, s.vy, s.psi, s.r, s.y, s.x - x_ref])
}

fn margins(scn: &Scenario, u: &[f64; 2], x: &DVector<f64>) -> [f64; 6] {
    let c = &scn.constraints;
    [
        c.input[0] - u[0].abs(),
        c.input[1] - u[1].abs(),
        c.x1 - x[0].abs(),
        c.x3 - x[2].abs(),
        c.x4 - x[3].abs(),
        c.lateral - x[4].abs(),
    ]
}

const MARGIN_NAMES: [&str; 6] = ["u1", "u2", "x1", "x3", "x4", "x5"];

/// Whether the planar box of `ob` meets the `(x₅, x₆)` projection of any ellipsoid in
/// families `0..=s_max`.
fn blocks_path(ob: &ObstacleBox, fp: &FullPath, s_max: usize) -> bool {
    let (dy, dx) = (ob.delta_y(), ob.delta_x());
    for f in fp.families.iter().take(s_max + 1) {
        let Ok(pr) = f.outer().projection(&crate::planner::PLANE) else { continue };
        for a in 0..=20 {
            for b in 0..=20 {
                let p = DVector::from_vec(vec![
                    ob.y - dy + 2.0 * dy * a as f64 / 20.0,
                    ob.x_rel - dx + 2.0 * dx * b as f64 / 20.0,
                ]);
                if pr.membership_value(&p).map_or(false, |v| v <= 1.0) {
                    return true;
                }
            }
        }
    }
    false
}

/// Closed-loop run. With `bundle`, the initial plan comes from it instead of on-line synthesis.
pub fn run(scn: &Scenario, bundle: Option<&FullPath>, opts: &RunOptions) -> Result<Trace> {
    scn.validate()?;
    let p = &scn.vehicle;
    let tires = TireParams::for_vehicle(p, 1.0);
    let ctx = scn.plan_context(opts.cache.clone());
    let w0 = vertex_weights(&gamma_of_state(&DVector::zeros(6), p, &ctx.gamma).rho);
    let cruise = CruiseLaw::new(&ctx.model, &w0, scn.input_box())?;
    let mut ctl = Controller::new(ctx.model.clone(), ctx.disturbance.clone(), cruise, scn.follow.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let specs = scn.lead_specs();
    let x0 = &scn.ego.x0;
    let x_ref0 = specs[0].ahead;
    let mut plant = SixDofState::cruising(p.v_bar + x0[0], x_ref0 + x0[5], x0[4], p.wheel_radius);
    let mut leads: Vec<Lead> =
        specs.iter().map(|o| Lead { x: o.ahead, y: o.y, speed: o.speed, ramp_start: None }).collect();
    let mut trace = Trace { scenario: scn.name.clone(), ..Trace::default() };
    let mut planned = false;
    let mut known: Vec<bool> = vec![false; specs.len()];
    let steps = (scn.duration / scn.ts).round() as usize;
    for step in 0..steps {
        let t = step as f64 * scn.ts;
        for (k, l) in leads.iter_mut().enumerate() {
            if let Some(r) = &specs[k].ramp {
                let due = r.start_time.map_or(false, |t0| t >= t0)
                    || r.start_when_ego_y_above.map_or(false, |y| plant.y >= y);
                if due && l.ramp_start.is_none() {
                    l.ramp_start = Some(t);
                    trace.events.push(TraceEvent { t, kind: "ramp".into(), detail: format!("lead {k}") });
                }
            }
            l.speed = l.speed_at(specs[k], t);
        }
        let mut radar = Vec::with_capacity(leads.len());
        for l in &leads {
            let (mut nx, mut ny) = (0.0, 0.0);
            if opts.noise {
                nx = scn.radar.noise_x * (2.0 * rng.gen::<f64>() - 1.0);
                ny = scn.radar.noise_y * (2.0 * rng.gen::<f64>() - 1.0);
            }
            let x_rel = plant.x - l.x;
            radar.push(RadarReading {
                x_rel: x_rel + nx,
                y_rel: plant.y - l.y + ny,
                v_rel: plant.vx - l.speed,
                detected: x_rel.abs() <= scn.radar.range,
            });
        }
        let mut x = control_state(&plant, leads[0].x, p.v_bar);
        x[5] = radar[0].x_rel;
        x[4] = plant.y + if opts.noise { radar[0].y_rel - (plant.y - leads[0].y) } else { 0.0 };

        if !planned && radar[0].detected {
            planned = true;
            let fp = match bundle {
                Some(b) => Ok(b.clone()),
                None => {
                    let (wps, obs) = scn.initial_plan_inputs();
                    full_path(&wps, &obs, &ctx)
                }
            };
            match fp {
                Ok(fp) => {
                    for (k, r) in radar.iter().enumerate() {
                        known[k] = r.detected;
                    }
                    trace.events.push(TraceEvent { t, kind: "plan".into(), detail: format!("{} families", fp.families.len()) });
                    trace.paths.push(fp.clone());
                    ctl.set_path(Some(fp))?;
                }
                Err(e) => trace.events.push(TraceEvent { t, kind: "plan_failed".into(), detail: e.to_string() }),
            }
        }
        if let Some(fp) = ctl.path() {
            let s_now = crate::controller::locate(&x, fp).map_or(fp.families.len().saturating_sub(1), |(s, _)| s);
            let new: Vec<usize> = (0..leads.len()).filter(|&k| !known[k] && radar[k].detected).collect();
            let mut trigger = false;
            for &k in &new {
                known[k] = true;
                let ob = scn.obstacle_box(k, leads[k].x, leads[0].x, leads[k].y);
                trigger |= blocks_path(&ob, fp, s_now);
            }
            if trigger {
                let visible: Vec<usize> = (0..leads.len()).filter(|&k| known[k]).collect();
                let obs: Vec<ObstacleBox> =
                    visible.iter().map(|&k| scn.obstacle_box(k, leads[k].x, leads[0].x, leads[k].y)).collect();
                let wps = restrict_sides(&scn.waypoints.contingency, &visible);
                let result = if wps.len() >= 2 { replan(&x, &obs, &wps, &ctx) } else { Err(Error::NoContainingEllipsoid) };
                match result {
                    Ok(fp) => {
                        trace.events.push(TraceEvent { t, kind: "replan".into(), detail: format!("{} families", fp.families.len()) });
                        trace.paths.push(fp.clone());
                        ctl.set_path(Some(fp))?;
                    }
                    Err(e) => {
                        trace.events.push(TraceEvent { t, kind: "replan_failed".into(), detail: e.to_string() });
                        ctl.set_path(None)?;
                    }
                }
            }
        }

        let lane_y = scn.road.nearest_lane(x[4]);
        let lead = (0..leads.len())
            .filter(|&k| radar[k].detected && radar[k].x_rel < 0.0 && (leads[k].y - lane_y).abs() < scn.road.lane_width / 2.0)
            .min_by(|&a, &b| radar[b].x_rel.total_cmp(&radar[a].x_rel))
            .map(|k| LeadView { x_rel: radar[k].x_rel, v_rel: -radar[k].v_rel });
        let decision = ctl.step(&x, lead, lane_y)?;
        let m = margins(scn, &decision.u, &x);
        let reference = match (decision.mode.indices(), ctl.path()) {
            (Some((s, _)), Some(fp)) => {
                let e = &fp.families[s].x_eq;
                [e[0], e[1], e[2], e[3], e[4], e[5]]
            }
            _ => [f64::NAN; 6],
        };
        if !opts.lenient && decision.mode.indices().is_some() {
            if let Some(k) = (0..6).find(|&k| m[k] < -1e-9) {
                return Err(Error::ConstraintViolation(format!("{} at t = {t:.1} s", MARGIN_NAMES[k])));
            }
        }
        let torque = p.wheel_radius * (p.mass * decision.u[1] + p.drag * plant.vx * plant.vx.abs()) / 2.0;
        let input = PlantInput { delta: decision.u[0], torque: [torque, torque] };
        let next = integrate_plant(&plant, &input, p, &tires, scn.ts, scn.plant_dt).map_err(|e| match e {
            Error::Unstable(_) => Error::Unstable(t),
            other => other,
        })?;
        trace.records.push(TraceRecord {
            t,
            plant: plant.clone(),
            x: [x[0], x[1], x[2], x[3], x[4], x[5]],
            decision,
            radar,
            margins: m,
        });
        trace.reference.push(reference);
        plant = next;
        for (k, l) in leads.iter_mut().enumerate() {
            let v1 = l.speed_at(specs[k], t + scn.ts);
            l.x += 0.5 * (l.speed + v1) * scn.ts;
        }
    }
    Ok(trace)
}

/// `RMSE_i = sqrt(mean_t (x_i − x̂_i)²)` per state.
pub fn rmse(states: &[[f64; 6]], reference: &[[f64; 6]]) -> Result<[f64; 6]> {
    if states.len() != reference.len() {
        return Err(Error::LengthMismatch(states.len(), reference.len()));
    }
    let mut out = [0.0; 6];
    if states.is_empty() {
        return Ok(out);
    }
    for (a, b) in states.iter().zip(reference) {
        for i in 0..6 {
            out[i] += (a[i] - b[i]).powi(2);
        }
    }
    Ok(out.map(|v| (v / states.len() as f64).sqrt()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
    /// Mean time as a fraction of the sampling period.
    pub fraction_of_ts: f64,
}

pub fn timing_report(ms: &[f64], ts: f64) -> TimingReport {
    if ms.is_empty() {
        return TimingReport { mean_ms: 0.0, median_ms: 0.0, p99_ms: 0.0, max_ms: 0.0, fraction_of_ts: 0.0 };
    }
    let mut v = ms.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |f: f64| v[((f * (v.len() - 1) as f64).round() as usize).min(v.len() - 1)];
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    TimingReport {
        mean_ms: mean,
        median_ms: q(0.5),
        p99_ms: q(0.99),
        max_ms: v[v.len() - 1],
        fraction_of_ts: mean / (ts * 1e3),
    }
}

/// Nine significant digits.
pub fn fmt9(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == 0.0 {
        "0".into()
    } else {
        format!("{v:.8e}")
    }
}

/// Deterministic CSV: everything except wall-clock timings.
pub fn trace_csv(trace: &Trace) -> String {
    let nob = trace.records.first().map_or(0, |r| r.radar.len());
    let mut out = String::from("t,mode,s,i,u1,u2,worst,x1,x2,x3,x4,x5,x6,X,Y,vx,vy,psi,r");
    for k in 0..nob {
        let _ = write!(out, ",xrel{k},yrel{k},vrel{k},det{k}");
    }
    for m in MARGIN_NAMES {
        let _ = write!(out, ",m_{m}");
    }
    out.push('\n');
    for r in &trace.records {
        let (s, i) = r.decision.mode.indices().map_or((-1, -1), |(s, i)| (s as i64, i as i64));
        let _ = write!(
            out,
            "{},{},{s},{i},{},{},{}",
            fmt9(r.t),
            r.decision.mode.name(),
            fmt9(r.decision.u[0]),
            fmt9(r.decision.u[1]),
            fmt9(r.decision.worst_membership)
        );
        for v in r.x.iter().chain(&[r.plant.x, r.plant.y, r.plant.vx, r.plant.vy, r.plant.psi, r.plant.r]) {
            let _ = write!(out, ",{}", fmt9(*v));
        }
        for q in &r.radar {
            let _ = write!(out, ",{},{},{},{}", fmt9(q.x_rel), fmt9(q.y_rel), fmt9(q.v_rel), q.detected as u8);
        }
        for m in &r.margins {
            let _ = write!(out, ",{}", fmt9(*m));
        }
        out.push('\n');
    }
    out
}

pub fn timing_csv(trace: &Trace) -> String {
    let mut out = String::from("t,solve_ms\n");
    for r in &trace.records {
        let _ = writeln!(out, "{},{}", fmt9(r.t), fmt9(r.decision.solve_ms));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub steps: usize,
    pub final_state: Option<[f64; 6]>,
    pub goal: [f64; 6],
    pub min_separation: Vec<f64>,
    /// Smallest entry of `min_separation`.
    pub min_abs_xrel: f64,
    pub replans: usize,
    pub events: Vec<TraceEvent>,
    pub rmse_vs_equilibria: Option<[f64; 6]>,
    pub timing: TimingReport,
    pub min_margin: [f64; 6],
}

pub fn summarize(scn: &Scenario, trace: &Trace) -> Summary {
    let pairs: Vec<([f64; 6], [f64; 6])> = trace
        .records
        .iter()
        .zip(&trace.reference)
        .filter(|(_, r)| !r[0].is_nan())
        .map(|(a, r)| (a.x, *r))
        .collect();
    let (xs, refs): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let sep = trace.min_separation(scn);
    let mut min_margin = [f64::INFINITY; 6];
    for r in &trace.records {
        for k in 0..6 {
            min_margin[k] = min_margin[k].min(r.margins[k]);
        }
    }
    Summary {
        scenario: trace.scenario.clone(),
        steps: trace.records.len(),
        final_state: trace.records.last().map(|r| r.x),
        goal: scn.ego.goal,
        min_abs_xrel: sep.iter().copied().fold(f64::INFINITY, f64::min),
        min_separation: sep,
        replans: trace.replan_count(),
        events: trace.events.clone(),
        rmse_vs_equilibria: if xs.is_empty() { None } else { rmse(&xs, &refs).ok() },
        timing: timing_report(&trace.solve_ms(), scn.ts),
        min_margin,
    }
}
