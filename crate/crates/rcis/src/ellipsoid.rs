//! Ellipsoid and box calculus.
//!
//! An [`Ellipsoid`] is `{x : (x − c)ᵀ P⁻¹ (x − c) ≤ 1}`. Everything here is a pure function of
//! immutable values.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// Relative tolerance used by the eigenvalue containment tests.
pub const CONTAIN_TOL: f64 = 1e-8;
/// Regularization that keeps rank-deficient covers invertible.
pub const COVER_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Ellipsoid {
    center: DVector<f64>,
    shape: DMatrix<f64>,
}

impl Ellipsoid {
    /// Builds an ellipsoid, symmetrizing `shape` and rejecting indefinite or asymmetric input.
    pub fn new(center: DVector<f64>, shape: DMatrix<f64>) -> Result<Self> {
        let n = center.len();
        if shape.nrows() != n || shape.ncols() != n {
            return Err(Error::Dimension(format!(
                "center has {} entries, shape is {}x{}",
                n,
                shape.nrows(),
                shape.ncols()
            )));
        }
        let scale = shape.amax().max(f64::MIN_POSITIVE);
        let asym = (&shape - shape.transpose()).amax();
        if !(asym <= 1e-10 * scale) {
            return Err(Error::SingularShape);
        }
        let shape = symmetrize(&shape);
        if Cholesky::new(shape.clone()).is_none() {
            return Err(Error::SingularShape);
        }
        Ok(Self { center, shape })
    }

    pub fn ball(center: DVector<f64>, radius: f64) -> Result<Self> {
        let n = center.len();
        Self::new(center, DMatrix::identity(n, n) * (radius * radius))
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn with_center(&self, center: DVector<f64>) -> Result<Self> {
        Self::new(center, self.shape.clone())
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.center.clone(), &self.shape * factor)
    }

    /// `(x − c)ᵀ P⁻¹ (x − c)`.
    pub fn membership_value(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!("point {} vs ellipsoid {}", x.len(), self.dim())));
        }
        quad_inv(&self.shape, &(x - &self.center))
    }

    pub fn contains(&self, x: &DVector<f64>) -> Result<bool> {
        Ok(self.membership_value(x)? <= 1.0)
    }

    pub fn log_det(&self) -> f64 {
        log_det_spd(&self.shape).unwrap_or(f64::NEG_INFINITY)
    }

    /// Support function `max_{x∈E} aᵀx`.
    pub fn support(&self, a: &DVector<f64>) -> f64 {
        a.dot(&self.center) + (a.dot(&(&self.shape * a))).max(0.0).sqrt()
    }

    /// Shape of the projection onto the coordinates `idx`.
    pub fn projection(&self, idx: &[usize]) -> Result<Ellipsoid> {
        let c = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.center[i]));
        let p = DMatrix::from_fn(idx.len(), idx.len(), |r, k| self.shape[(idx[r], idx[k])]);
        Ellipsoid::new(c, p)
    }

    /// Intersection with the affine slice where every coordinate outside `free` is pinned to
    /// `pinned` (a full-dimensional point supplying those values). Returns `None` when empty.
    pub fn slice(&self, free: &[usize], pinned: &DVector<f64>) -> Result<Option<Ellipsoid>> {
        let n = self.dim();
        let fixed: Vec<usize> = (0..n).filter(|i| !free.contains(i)).collect();
        let pinv = spd_inverse(&self.shape)?;
        let h = DMatrix::from_fn(free.len(), free.len(), |r, k| pinv[(free[r], free[k])]);
        let hfx = DMatrix::from_fn(free.len(), fixed.len(), |r, k| pinv[(free[r], fixed[k])]);
        let hxx = DMatrix::from_fn(fixed.len(), fixed.len(), |r, k| pinv[(fixed[r], fixed[k])]);
        let dz = DVector::from_iterator(fixed.len(), fixed.iter().map(|&i| pinned[i] - self.center[i]));
        let hchol = Cholesky::new(h.clone()).ok_or(Error::SingularShape)?;
        let shift = hchol.solve(&(&hfx * &dz));
        let resid = dz.dot(&(&hxx * &dz)) - shift.dot(&(&h * &shift));
        let level = 1.0 - resid;
        if level <= 0.0 {
            return Ok(None);
        }
        let c = DVector::from_iterator(free.len(), free.iter().map(|&i| self.center[i])) - shift;
        let shape = spd_inverse(&h)? * level;
        Ok(Some(Ellipsoid::new(c, shape)?))
    }

    /// Euclidean projection of `y` onto the ellipsoid.
    pub fn project(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if self.membership_value(y)? <= 1.0 {
            return Ok(y.clone());
        }
        let eig = SymmetricEigen::new(self.shape.clone());
        let z = eig.eigenvectors.transpose() * (y - &self.center);
        let d = &eig.eigenvalues;
        // Secular equation: Σ d_k z_k² / (d_k + μ)² = 1, monotone decreasing in μ ≥ 0.
        let f = |mu: f64| -> f64 {
            (0..z.len())
                .map(|k| d[k] * z[k] * z[k] / ((d[k] + mu) * (d[k] + mu)))
                .sum::<f64>()
                - 1.0
        };
        let mut lo = 0.0;
        let mut hi = 1.0;
        while f(hi) > 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-13 * hi.max(1.0) {
                break;
            }
        }
        let mu = hi;
        let w = DVector::from_iterator(z.len(), (0..z.len()).map(|k| d[k] * z[k] / (d[k] + mu)));
        Ok(&self.center + eig.eigenvectors * w)
    }

    /// Uniform sample from the solid ellipsoid.
    pub fn sample_interior<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let n = self.dim();
        let dir = gaussian_unit(n, rng);
        let r: f64 = rng.gen::<f64>().powf(1.0 / n as f64);
        self.map_unit(&(dir * r))
    }

    /// Sample on the boundary surface (uniform in the unit-sphere parameterization).
    pub fn sample_boundary<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let dir = gaussian_unit(self.dim(), rng);
        self.map_unit(&dir)
    }

    fn map_unit(&self, v: &DVector<f64>) -> DVector<f64> {
        let l = Cholesky::new(self.shape.clone()).expect("validated at construction").l();
        &self.center + l * v
    }
}

#[derive(Serialize, Deserialize)]
struct EllipsoidRecord {
    center: Vec<f64>,
    shape: Vec<Vec<f64>>,
}

impl Serialize for Ellipsoid {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.dim();
        EllipsoidRecord {
            center: self.center.iter().copied().collect(),
            shape: (0..n).map(|r| (0..n).map(|c| self.shape[(r, c)]).collect()).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Ellipsoid {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = EllipsoidRecord::deserialize(d)?;
        let n = rec.center.len();
        if rec.shape.len() != n || rec.shape.iter().any(|r| r.len() != n) {
            return Err(serde::de::Error::custom("shape must be square and match center"));
        }
        let shape = DMatrix::from_fn(n, n, |r, c| rec.shape[r][c]);
        // Stored shapes are already symmetric; keep the bits untouched.
        if Cholesky::new(shape.clone()).is_none() || (&shape - shape.transpose()).amax() != 0.0 {
            return Err(serde::de::Error::custom("shape must be symmetric positive definite"));
        }
        Ok(Ellipsoid { center: DVector::from_vec(rec.center), shape })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension("box bounds differ in length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::Config("box lower bound exceeds upper bound".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn symmetric(half: &[f64]) -> Self {
        Self { lower: half.iter().map(|h| -h).collect(), upper: half.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Largest half-width per axis, the symmetric hull about zero.
    pub fn half_widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| l.abs().max(u.abs())).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    pub fn contains_tol(&self, x: &[f64], tol: f64) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *l - tol <= *v && *v <= *u + tol)
    }

    /// All `2^n` corners, first axis varying fastest.
    pub fn corners(&self) -> Vec<DVector<f64>> {
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| {
                DVector::from_iterator(
                    n,
                    (0..n).map(|k| if mask >> k & 1 == 1 { self.upper[k] } else { self.lower[k] }),
                )
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Halfspace {
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        if normal.iter().map(|a| a * a).sum::<f64>() <= 0.0 {
            return Err(Error::Config("halfspace normal is zero".into()));
        }
        Ok(Self { normal, offset })
    }

    /// `{x : x_i ≤ b}` or, with `upper = false`, `{x : x_i ≥ b}`.
    pub fn axis(n: usize, i: usize, b: f64, upper: bool) -> Self {
        let mut normal = vec![0.0; n];
        normal[i] = if upper { 1.0 } else { -1.0 };
        Self { normal, offset: if upper { b } else { -b } }
    }

    pub fn normal_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.normal)
    }

    /// `b − aᵀx`; nonnegative inside.
    pub fn margin(&self, x: &DVector<f64>) -> f64 {
        self.offset - self.normal_vec().dot(x)
    }

    /// Same set expressed in coordinates relative to `origin`.
    pub fn shifted(&self, origin: &DVector<f64>) -> Self {
        Self { normal: self.normal.clone(), offset: self.margin(origin) }
    }
}

/// Halfspace rows of a box, upper rows first.
pub fn box_halfspaces(b: &BoxSet) -> Vec<Halfspace> {
    let n = b.dim();
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        out.push(Halfspace::axis(n, i, b.upper[i], true));
        out.push(Halfspace::axis(n, i, b.lower[i], false));
    }
    out
}

pub fn membership_value(e: &Ellipsoid, x: &DVector<f64>) -> Result<f64> {
    e.membership_value(x)
}

/// Containment test for concentric ellipsoids: `λ_max(L⁻¹ P_inner L⁻ᵀ) ≤ 1 + tol`.
pub fn concentric_contains(inner: &Ellipsoid, outer: &Ellipsoid) -> Result<bool> {
    let gap = (inner.center() - outer.center()).amax();
    if gap > 1e-9 {
        return Err(Error::CenterMismatch(gap));
    }
    Ok(generalized_lambda_max(inner.shape(), outer.shape())? <= 1.0 + CONTAIN_TOL)
}

/// `A·E(P_src) ⊆ E(P_dst)` for zero-centered sets, i.e. `A P_src Aᵀ ⪯ P_dst`.
pub fn affine_image_contained(a: &DMatrix<f64>, src: &Ellipsoid, dst: &Ellipsoid) -> Result<bool> {
    if a.ncols() != src.dim() || a.nrows() != dst.dim() {
        return Err(Error::Dimension("map does not match ellipsoid dimensions".into()));
    }
    let img = a * src.shape() * a.transpose();
    Ok(generalized_lambda_max(&img, dst.shape())? <= 1.0 + CONTAIN_TOL)
}

/// `ρ = sqrt(λ_max(L⁻¹ P_D L⁻ᵀ))`, the scalar shrink factor of the cover against `e`.
pub fn shrink_factor(e: &Ellipsoid, d_cover: &Ellipsoid) -> Result<f64> {
    Ok(generalized_lambda_max(d_cover.shape(), e.shape())?.max(0.0).sqrt())
}

/// Concentric inner approximation `(1 − ρ)² P` of `E ⊖ D_cover`.
pub fn shrink_by_disturbance(e: &Ellipsoid, d_cover: &Ellipsoid) -> Result<Ellipsoid> {
    let rho = shrink_factor(e, d_cover)?;
    if rho >= 1.0 {
        return Err(Error::InfeasibleShrink { rho });
    }
    Ellipsoid::new(e.center().clone(), e.shape() * ((1.0 - rho) * (1.0 - rho)))
}

/// Zero-centered ellipsoid covering `{G_d d : d ∈ D}`.
pub fn cover_box_image(gd: &DMatrix<f64>, d: &BoxSet) -> Result<Ellipsoid> {
    if gd.ncols() != d.dim() {
        return Err(Error::Dimension("disturbance map vs box".into()));
    }
    let nd = d.dim() as f64;
    let h = d.half_widths();
    let core = DMatrix::from_diagonal(&DVector::from_iterator(h.len(), h.iter().map(|v| nd * v * v)));
    let n = gd.nrows();
    let shape = gd * core * gd.transpose() + DMatrix::identity(n, n) * COVER_EPS;
    Ellipsoid::new(DVector::zeros(n), shape)
}

/// Largest `λ` with `A v = λ B v`, for symmetric `A` and SPD `B`.
pub fn generalized_lambda_max(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let l = Cholesky::new(b.clone()).ok_or(Error::SingularShape)?.l();
    let li = l.clone().try_inverse().ok_or(Error::SingularShape)?;
    let m = symmetrize(&(&li * a * li.transpose()));
    Ok(SymmetricEigen::new(m).eigenvalues.max())
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn quad_inv(p: &DMatrix<f64>, v: &DVector<f64>) -> Result<f64> {
    let chol: Cholesky<f64, Dyn> = Cholesky::new(p.clone()).ok_or(Error::SingularShape)?;
    let w = chol.l().solve_lower_triangular(v).ok_or(Error::SingularShape)?;
    Ok(w.norm_squared())
}

pub fn spd_inverse(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = Cholesky::new(p.clone()).ok_or(Error::SingularShape)?;
    Ok(symmetrize(&chol.inverse()))
}

pub fn log_det_spd(p: &DMatrix<f64>) -> Option<f64> {
    let chol = Cholesky::new(p.clone())?;
    Some(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

fn gaussian_unit<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}
