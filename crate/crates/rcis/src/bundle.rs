//! Path bundles: the persisted output of off-line synthesis and its certificate checks.

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ellipsoid::{concentric_contains, BoxSet, Ellipsoid, Halfspace};
use crate::harness::Scenario;
use crate::planner::{full_path, FullPath, SynthesisCache};
use crate::synthesis::{verify_one_step, VertexModel};
use crate::{Error, Result};

pub const FORMAT: &str = "rcis-path-bundle/1";

/// Tolerance of the admissibility test `aᵀPa ≤ b² + tol`.
pub const ADMISSIBLE_TOL: f64 = 1e-8;
/// Boundary tolerance of the sampled one-step test.
pub const SAMPLE_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bundle {
    pub format: String,
    pub scenario: String,
    /// [`Scenario::synthesis_hash`] of the scenario this bundle was built from.
    pub input_hash: String,
    pub model: VertexModel,
    pub disturbance: BoxSet,
    /// Absolute state rows shared by all segments.
    pub rows: Vec<Halfspace>,
    pub input_box: BoxSet,
    pub path: FullPath,
}

impl Bundle {
    /// Runs the initial full-path synthesis of `scn`.
    pub fn synthesize(scn: &Scenario, cache: SynthesisCache) -> Result<Self> {
        scn.validate()?;
        let ctx = scn.plan_context(cache);
        let (wps, obs) = scn.initial_plan_inputs();
        let path = full_path(&wps, &obs, &ctx)?;
        Ok(Self {
            format: FORMAT.into(),
            scenario: scn.name.clone(),
            input_hash: scn.synthesis_hash(),
            model: ctx.model,
            disturbance: ctx.disturbance,
            rows: ctx.rows,
            input_box: ctx.input_box,
            path,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let b: Self = serde_json::from_str(s)?;
        if b.format != FORMAT {
            return Err(Error::Config(format!("unsupported bundle format '{}'", b.format)));
        }
        Ok(b)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn matches(&self, scn: &Scenario) -> bool {
        self.input_hash == scn.synthesis_hash()
    }
}

/// Certificate results for ellipsoid `i` of family `s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateRow {
    pub s: usize,
    pub i: usize,
    /// `E_{i−1} ⊆ E_i` (true for `i = 0`).
    pub nested: bool,
    /// Largest `aᵀPa − b²` over the family rows and the shifted absolute rows.
    pub admissibility_excess: f64,
    pub samples: usize,
    pub feasible: usize,
    pub worst_membership: f64,
}

impl CertificateRow {
    pub fn passed(&self) -> bool {
        self.nested && self.admissibility_excess <= ADMISSIBLE_TOL && self.feasible == self.samples
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyOutcome {
    pub rows: Vec<CertificateRow>,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(CertificateRow::passed)
    }

    pub fn first_failure(&self) -> Option<(usize, usize)> {
        self.rows.iter().find(|r| !r.passed()).map(|r| (r.s, r.i))
    }
}

/// `max_k aₖᵀPaₖ − bₖ²` for rows expressed relative to the ellipsoid center. A row with
/// `b ≤ 0` is reported as an infinite excess.
pub fn admissibility_excess(e: &Ellipsoid, rows: &[Halfspace]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for h in rows {
        let a = h.normal_vec();
        let q = (a.transpose() * e.shape() * &a)[(0, 0)];
        let x = if h.offset > 0.0 { q - h.offset * h.offset } else { f64::INFINITY };
        worst = worst.max(x);
    }
    worst
}

/// Nesting, admissibility and sampled one-step feasibility for every ellipsoid of the bundle.
/// Ring `i ≥ 1` is checked into `E_{i−1}` with its gain `K_i`; `E_0` is checked for invariance
/// under the terminal gain.
pub fn verify(bundle: &Bundle, samples: usize, seed: u64) -> Result<VerifyOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for f in &bundle.path.families {
        let cons = f.constraints(&bundle.model, &bundle.disturbance)?;
        let abs_rows: Vec<Halfspace> = bundle.rows.iter().map(|h| h.shifted(&f.x_eq)).collect();
        let input_ok = bundle.input_box.contains(f.u_eq.as_slice());
        for (i, e) in f.chain.iter().enumerate() {
            let nested = i == 0 || concentric_contains(&f.chain[i - 1], e)?;
            let centered = e.with_center(DVector::zeros(e.dim()))?;
            let excess = admissibility_excess(&centered, &f.rows).max(admissibility_excess(&centered, &abs_rows));
            let (inner, gain) = if i == 0 { (e, &f.gain) } else { (&f.chain[i - 1], &f.ring_gains[i]) };
            let rep = verify_one_step(e, inner, Some(gain), &bundle.model, &cons, samples, SAMPLE_TOL, &mut rng)?;
            rows.push(CertificateRow {
                s: f.s,
                i,
                nested,
                admissibility_excess: if input_ok { excess } else { f64::INFINITY },
                samples: rep.samples,
                feasible: rep.feasible,
                worst_membership: rep.worst_membership,
            });
        }
    }
    Ok(VerifyOutcome { rows })
}
