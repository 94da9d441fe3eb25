//! Planes through the origin as points of `Gr(d, n)`.
//!
//! A [`Plane`] stores an orthonormal frame and a matching frame of its
//! orthogonal complement. Planes are compared through the Plücker-type
//! embedding `L ↦ w wᵀ / ‖w‖²` ([`pluecker_embed`]) or through graph
//! matrices over a reference plane ([`graph_matrix`]).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cells::{chart, Cell};
use crate::error::{Error, Result};
use crate::hausdorff::derive_seed;

/// A `d`-dimensional linear subspace of `ℝⁿ`.
#[derive(Clone, Debug)]
pub struct Plane {
    frame: DMatrix<f64>,
    complement: DMatrix<f64>,
}

/// Orthonormalizes the columns of `m`; `None` if they are (numerically)
/// dependent.
fn orthonormal_columns(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let (n, d) = m.shape();
    let scale = m.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let mut q = DMatrix::<f64>::zeros(n, d);
    for j in 0..d {
        let mut v = m.column(j).into_owned();
        let orig = v.norm();
        // two passes of Gram-Schmidt keep the frame orthonormal to rounding
        for _ in 0..2 {
            for k in 0..j {
                let qk = q.column(k);
                let c = qk.dot(&v);
                v -= c * qk;
            }
        }
        let norm = v.norm();
        if norm <= 1e-10 * orig.max(scale) {
            return None;
        }
        q.set_column(j, &(v / norm));
    }
    Some(q)
}

fn complement_of(q: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = q.shape();
    let mut basis: Vec<DVector<f64>> = q.column_iter().map(|c| c.into_owned()).collect();
    let mut out = Vec::with_capacity(n - d);
    while out.len() < n - d {
        let mut best: Option<(f64, DVector<f64>)> = None;
        for i in 0..n {
            let mut v = DVector::<f64>::zeros(n);
            v[i] = 1.0;
            for _ in 0..2 {
                for b in &basis {
                    let c = b.dot(&v);
                    v -= c * b;
                }
            }
            let norm = v.norm();
            if best.as_ref().map_or(true, |(bn, _)| norm > *bn) {
                best = Some((norm, v));
            }
        }
        let (norm, v) = best.expect("ambient dimension is positive");
        let v = v / norm;
        basis.push(v.clone());
        out.push(v);
    }
    if out.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&out)
    }
}

impl Plane {
    /// Span of the columns of `m` (an `n×d` matrix of full column rank).
    pub fn new(m: &DMatrix<f64>) -> Result<Plane> {
        let (n, d) = m.shape();
        if d == 0 || d > n {
            return Err(Error::InvalidInput(format!("a plane needs 1 <= d <= n, got d={} n={}", d, n)));
        }
        let frame = orthonormal_columns(m)
            .ok_or_else(|| Error::DegenerateCell("spanning vectors are linearly dependent".into()))?;
        let complement = complement_of(&frame);
        Ok(Plane { frame, complement })
    }

    /// `span(e_1, …, e_d)` in `ℝⁿ`.
    pub fn coordinate(d: usize, n: usize) -> Result<Plane> {
        Plane::coordinate_axes(&(0..d).collect::<Vec<_>>(), n)
    }

    /// Span of the listed standard basis vectors (0-based).
    pub fn coordinate_axes(axes: &[usize], n: usize) -> Result<Plane> {
        let mut m = DMatrix::zeros(n, axes.len());
        for (j, &i) in axes.iter().enumerate() {
            if i >= n {
                return Err(Error::InvalidInput(format!("axis {} out of range for n={}", i, n)));
            }
            m[(i, j)] = 1.0;
        }
        Plane::new(&m)
    }

    /// A Haar-distributed random plane.
    pub fn random<R: Rng + ?Sized>(d: usize, n: usize, rng: &mut R) -> Result<Plane> {
        loop {
            let m = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            match Plane::new(&m) {
                Err(Error::DegenerateCell(_)) => continue,
                other => return other,
            }
        }
    }

    pub fn ambient(&self) -> usize {
        self.frame.nrows()
    }

    pub fn dim(&self) -> usize {
        self.frame.ncols()
    }

    /// Orthonormal `n×d` frame.
    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    /// Orthonormal `n×(n−d)` frame of the orthogonal complement.
    pub fn complement(&self) -> &DMatrix<f64> {
        &self.complement
    }

    /// Image under a linear map of `ℝⁿ`, typically orthogonal.
    pub fn transformed(&self, g: &DMatrix<f64>) -> Result<Plane> {
        if g.nrows() != self.ambient() || g.ncols() != self.ambient() {
            return Err(Error::DimensionMismatch("transform must be n×n".into()));
        }
        Plane::new(&(g * &self.frame))
    }

    /// The plane `{(u, Au)}` in the splitting `ℝⁿ = L ⊕ L⊥`.
    pub fn from_graph_matrix(&self, a: &DMatrix<f64>) -> Result<Plane> {
        if a.nrows() != self.ambient() - self.dim() || a.ncols() != self.dim() {
            return Err(Error::DimensionMismatch("graph matrix must be (n−d)×d".into()));
        }
        Plane::new(&(&self.frame + &self.complement * a))
    }
}

/// A uniformly random orthogonal `n×n` matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    loop {
        let m = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        if let Some(q) = orthonormal_columns(&m) {
            return q;
        }
    }
}

/// Lexicographically ordered `d`-subsets of `0..n`.
pub fn subsets(n: usize, d: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..d).collect();
    if d > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = d;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < n - d + i {
                cur[i] += 1;
                for j in (i + 1)..d {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Plücker coordinates: the `d×d` minors of a frame, rows taken in
/// lexicographic order.
pub fn pluecker_coordinates(frame: &DMatrix<f64>) -> DVector<f64> {
    let (n, d) = frame.shape();
    let subs = subsets(n, d);
    DVector::from_iterator(
        subs.len(),
        subs.iter().map(|rows| frame.select_rows(rows.iter()).determinant()),
    )
}

/// `w wᵀ / ‖w‖²` for Plücker coordinates `w`.
#[derive(Clone, Debug)]
pub struct EmbeddedPlane {
    matrix: DMatrix<f64>,
}

/// Numerical spectral summary of an [`EmbeddedPlane`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralCheck {
    pub asymmetry: f64,
    pub trace: f64,
    pub largest_eigenvalue: f64,
    pub second_eigenvalue: f64,
    pub smallest_eigenvalue: f64,
}

impl SpectralCheck {
    /// Symmetric, PSD, trace one and rank one within `tol`.
    pub fn holds(&self, tol: f64) -> bool {
        self.asymmetry <= tol
            && (self.trace - 1.0).abs() <= tol
            && self.smallest_eigenvalue >= -tol
            && self.second_eigenvalue <= tol
    }
}

impl EmbeddedPlane {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn spectral_check(&self) -> SpectralCheck {
        let asymmetry = (&self.matrix - self.matrix.transpose()).amax();
        let sym = (&self.matrix + self.matrix.transpose()) * 0.5;
        let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        SpectralCheck {
            asymmetry,
            trace: self.matrix.trace(),
            largest_eigenvalue: ev[0],
            second_eigenvalue: ev.get(1).copied().unwrap_or(0.0),
            smallest_eigenvalue: *ev.last().unwrap(),
        }
    }
}

pub fn pluecker_embed(l: &Plane) -> EmbeddedPlane {
    let w = pluecker_coordinates(&l.frame);
    let norm2 = w.norm_squared();
    EmbeddedPlane {
        matrix: &w * w.transpose() / norm2,
    }
}

fn same_shape(a: &Plane, b: &Plane) -> Result<()> {
    if a.ambient() != b.ambient() || a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "Gr({}, {}) vs Gr({}, {})",
            a.dim(),
            a.ambient(),
            b.dim(),
            b.ambient()
        )));
    }
    Ok(())
}

/// Frobenius distance between embedded planes.
pub fn plane_distance(a: &Plane, b: &Plane) -> Result<f64> {
    same_shape(a, b)?;
    Ok((pluecker_embed(a).matrix - pluecker_embed(b).matrix).norm())
}

/// The same distance from unit Plücker vectors:
/// `‖wwᵀ − vvᵀ‖² = 2 − 2 (w·v)²`.
fn unit_distance(w: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let c = w.dot(v);
    (2.0 - 2.0 * c * c).max(0.0).sqrt()
}

/// Coordinates of `x` in `L` and in `L⊥`.
pub fn project(l: &Plane, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != l.ambient() {
        return Err(Error::DimensionMismatch(format!(
            "point in ℝ^{} projected onto a plane in ℝ^{}",
            x.len(),
            l.ambient()
        )));
    }
    let x = DVector::from_column_slice(x);
    let u = l.frame.tr_mul(&x);
    let v = l.complement.tr_mul(&x);
    Ok((u.iter().copied().collect(), v.iter().copied().collect()))
}

/// Condition number above which `π_L|_{L'}` counts as singular.
const MAX_CONDITION: f64 = 1e12;

/// `A` with `L' = {(u, Au)}` in the splitting `L ⊕ L⊥`.
pub fn graph_matrix(l: &Plane, other: &Plane) -> Result<DMatrix<f64>> {
    same_shape(l, other)?;
    let u = l.frame.tr_mul(&other.frame);
    let v = l.complement.tr_mul(&other.frame);
    // both frames are orthonormal, so 1/σ_min(U) is the condition number
    // of the projection restricted to L'
    let smin = u.clone().svd(false, false).singular_values.min();
    let cond = if smin > 0.0 { 1.0 / smin } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION) {
        return Err(Error::NotAGraph(cond));
    }
    let inv = u.try_inverse().ok_or(Error::NotAGraph(f64::INFINITY))?;
    Ok(v * inv)
}

/// Largest singular value.
pub fn operator_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.max()
}

/// `√(4^{1/d} − 1)`: the largest tilt for which `√det(I + AᵀA) ≤ 2`.
pub fn tau_max(d: usize) -> f64 {
    assert!(d >= 1);
    (4f64.powf(1.0 / d as f64) - 1.0).sqrt()
}

/// `U_L = {L' : σ_max(graph_matrix(L, L')) ≤ τ}`.
#[derive(Clone, Debug)]
pub struct PlaneNeighborhood {
    center: Plane,
    tau: f64,
}

impl PlaneNeighborhood {
    pub fn new(center: Plane, tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidInput(format!("tau must be positive, got {}", tau)));
        }
        Ok(PlaneNeighborhood { center, tau })
    }

    pub fn center(&self) -> &Plane {
        &self.center
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `σ_max` of the graph matrix, or `None` if `L'` is not a graph.
    pub fn tilt(&self, other: &Plane) -> Option<f64> {
        graph_matrix(&self.center, other).ok().map(|a| operator_norm(&a))
    }
}

pub fn in_neighborhood(n: &PlaneNeighborhood, other: &Plane) -> bool {
    n.tilt(other).is_some_and(|t| t <= n.tau)
}

/// Tangent plane of a cell at a chart point `t ∈ (0,1)^d`.
pub fn gauss_map(c: &Cell, t: &[f64]) -> Result<Plane> {
    let j = chart(c)?.jacobian(t)?;
    tangent_plane(&j)
}

pub(crate) fn tangent_plane(j: &DMatrix<f64>) -> Result<Plane> {
    Plane::new(j).map_err(|e| match e {
        Error::DegenerateCell(_) => Error::DegenerateCell("tangent vectors are dependent".into()),
        other => other,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoverConfig {
    /// Planes the greedy construction must cover.
    pub sample_size: usize,
    /// Fresh planes used to re-verify the result.
    pub verify_size: usize,
    pub max_centers: usize,
    /// Angular margin (radians) kept by the greedy step, so that planes near
    /// the sampled ones are covered too.
    pub margin: f64,
}

impl Default for CoverConfig {
    fn default() -> Self {
        CoverConfig {
            sample_size: 10_000,
            verify_size: 10_000,
            max_centers: 2_000,
            margin: 0.05,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GrassmannCover {
    pub centers: Vec<Plane>,
    pub tau: f64,
    /// Fraction of the fresh verification sample lying in some `U_{L_i}`.
    pub verified_coverage: f64,
    pub verify_size: usize,
}

impl GrassmannCover {
    /// Index of the first neighborhood containing `p`.
    pub fn locate(&self, p: &Plane) -> Option<usize> {
        self.centers.iter().position(|c| {
            graph_matrix(c, p).is_ok_and(|a| operator_norm(&a) <= self.tau)
        })
    }
}

/// Neighborhood size shrunk by an angular margin: the largest principal
/// angle of `U_L` is `atan τ`.
fn inner_tau(tau: f64, margin: f64) -> f64 {
    let theta = tau.atan();
    let inner = (theta - margin).max(0.5 * theta);
    inner.tan()
}

/// Greedy farthest-point cover of a finite set of planes.
///
/// Starts from the first plane and repeatedly promotes the uncovered plane
/// farthest from all current centers.
pub(crate) fn greedy_cover(
    sample: &[Plane],
    tau: f64,
    margin: f64,
    max_centers: usize,
) -> Result<Vec<Plane>> {
    if sample.is_empty() {
        return Ok(Vec::new());
    }
    let tau_in = inner_tau(tau, margin);
    let w: Vec<DVector<f64>> = sample
        .par_iter()
        .map(|p| {
            let v = pluecker_coordinates(&p.frame);
            let n = v.norm();
            v / n
        })
        .collect();
    let mut covered = vec![false; sample.len()];
    let mut min_dist = vec![f64::INFINITY; sample.len()];
    let mut centers: Vec<Plane> = Vec::new();
    let mut next = 0;
    loop {
        if centers.len() >= max_centers {
            return Err(Error::CoverBudgetExceeded(max_centers));
        }
        let center = sample[next].clone();
        let hood = PlaneNeighborhood::new(center.clone(), tau_in)?;
        let wc = &w[next];
        covered
            .par_iter_mut()
            .zip(min_dist.par_iter_mut())
            .enumerate()
            .for_each(|(i, (cov, md))| {
                *md = md.min(unit_distance(&w[i], wc));
                if !*cov && in_neighborhood(&hood, &sample[i]) {
                    *cov = true;
                }
            });
        centers.push(center);
        let mut best: Option<(f64, usize)> = None;
        for (i, (&cov, &md)) in covered.iter().zip(&min_dist).enumerate() {
            if !cov && best.is_none_or(|(bd, _)| md > bd) {
                best = Some((md, i));
            }
        }
        match best {
            None => return Ok(centers),
            Some((_, i)) => next = i,
        }
    }
}

/// Fraction of `sample` lying in some `U_{L_i}` of size `tau`.
pub fn coverage(centers: &[Plane], tau: f64, sample: &[Plane]) -> f64 {
    if sample.is_empty() {
        return 1.0;
    }
    let hit = sample
        .par_iter()
        .filter(|p| {
            centers
                .iter()
                .any(|c| graph_matrix(c, p).is_ok_and(|a| operator_norm(&a) <= tau))
        })
        .count();
    hit as f64 / sample.len() as f64
}

fn random_planes(d: usize, n: usize, count: usize, seed: u64) -> Result<Vec<Plane>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| Plane::random(d, n, &mut rng)).collect()
}

/// Finitely many centers whose neighborhoods `U_{L_i}` cover a random
/// sample of `Gr(d, n)`.
pub fn cover_grassmannian(d: usize, n: usize, tau: f64, seed: u64) -> Result<GrassmannCover> {
    cover_grassmannian_with(d, n, tau, seed, &CoverConfig::default())
}

pub fn cover_grassmannian_with(
    d: usize,
    n: usize,
    tau: f64,
    seed: u64,
    cfg: &CoverConfig,
) -> Result<GrassmannCover> {
    if d == 0 || d > n {
        return Err(Error::InvalidInput(format!("need 1 <= d <= n, got d={} n={}", d, n)));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidInput(format!("tau must be positive, got {}", tau)));
    }
    let sample = random_planes(d, n, cfg.sample_size, derive_seed(&[seed, 0]))?;
    let centers = greedy_cover(&sample, tau, cfg.margin, cfg.max_centers)?;
    let fresh = random_planes(d, n, cfg.verify_size, derive_seed(&[seed, 1]))?;
    let verified_coverage = coverage(&centers, tau, &fresh);
    Ok(GrassmannCover {
        centers,
        tau,
        verified_coverage,
        verify_size: cfg.verify_size,
    })
}

/// JSON form of a plane: its orthonormal frame, one row per ambient axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameJson {
    pub ambient: usize,
    pub dim: usize,
    pub frame: Vec<Vec<f64>>,
}

impl From<&Plane> for FrameJson {
    fn from(p: &Plane) -> Self {
        FrameJson {
            ambient: p.ambient(),
            dim: p.dim(),
            frame: p
                .frame
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
        }
    }
}
