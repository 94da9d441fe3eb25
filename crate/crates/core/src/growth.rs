//! Volume growth of sets inside balls.
//!
//! A [`GrowthCurve`] records `V(r) = vol_d S(r)` on a list of radii.
//! [`check_growth_bound`] turns the claim `V(r) = O(r^d)` into a tail trend
//! test on `V(r)/r^d`, [`stoll_classify`] applies it to complex-analytic
//! graphs, [`verify_projection_bound`] compares a graph cell with its
//! projection, and [`gauss_cover_decompose`] splits a cell by the direction
//! of its tangent planes.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::cells::{Cell, DefinableSet};
use crate::error::{Error, Result};
use crate::grassmann::{
    graph_matrix, greedy_cover, operator_norm, plane_distance, tangent_plane, tau_max, CoverConfig, Plane,
};
use crate::hausdorff::{
    derive_seed, integrate_cell, set_volume_in_ball, BallRestriction, MeasureEstimate, QuadratureConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthSample {
    pub r: f64,
    pub volume: f64,
    pub error_bound: f64,
}

impl GrowthSample {
    pub fn ratio(&self, d: usize) -> f64 {
        self.volume / self.r.powi(d as i32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthCurve {
    pub name: String,
    pub d: usize,
    pub samples: Vec<GrowthSample>,
}

/// `count` radii in geometric progression from `min` to `max` inclusive.
pub fn geometric_radii(min: f64, max: f64, count: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && min < max && max.is_finite()) || count < 2 {
        return Err(Error::InvalidInput(format!(
            "need 0 < r_min < r_max and at least two radii, got {}..{} x{}",
            min, max, count
        )));
    }
    let step = (max / min).ln() / (count - 1) as f64;
    let mut radii: Vec<f64> = (0..count).map(|k| min * (step * k as f64).exp()).collect();
    radii[count - 1] = max;
    Ok(radii)
}

/// Two decades ending at `max`, sixteen radii.
pub fn default_radii(max: f64) -> Vec<f64> {
    geometric_radii(max / 100.0, max, 16).expect("valid default radii")
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::InvalidInput("no radii given".into()));
    }
    for w in radii.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::InvalidInput("radii must be strictly increasing".into()));
        }
    }
    if !(radii[0] > 0.0) {
        return Err(Error::InvalidInput("radii must be positive".into()));
    }
    Ok(())
}

/// `vol_d S(r)` for each radius, with `d = dim S`.
pub fn growth_curve(s: &DefinableSet, radii: &[f64], cfg: &QuadratureConfig) -> Result<GrowthCurve> {
    growth_curve_in_dim(s, s.dim()?, radii, cfg)
}

/// As [`growth_curve`] with an explicit measure dimension.
pub fn growth_curve_in_dim(
    s: &DefinableSet,
    d: usize,
    radii: &[f64],
    cfg: &QuadratureConfig,
) -> Result<GrowthCurve> {
    check_radii(radii)?;
    let samples = radii
        .par_iter()
        .enumerate()
        .map(|(k, &r)| {
            let v = set_volume_in_ball(s, d, r, &cfg.with_seed(derive_seed(&[cfg.seed, k as u64])))?;
            Ok(GrowthSample {
                r,
                volume: v.value,
                error_bound: v.error_bound,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GrowthCurve {
        name: s.name().to_string(),
        d,
        samples,
    })
}

/// Least-squares slope of `ln V` against `ln r` on the tail of a curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub alpha: f64,
    /// 95% confidence half-width of the slope.
    pub halfwidth: f64,
    pub points: usize,
}

/// Fewest tail points a fit accepts.
pub const MIN_TAIL_POINTS: usize = 4;

/// Default tail fraction for fits.
pub const DEFAULT_WINDOW: f64 = 0.5;

fn tail(g: &GrowthCurve, window: f64) -> Result<&[GrowthSample]> {
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::InvalidInput(format!("window {} must lie in (0, 1]", window)));
    }
    let n = g.samples.len();
    let m = ((window * n as f64).ceil() as usize).max(MIN_TAIL_POINTS);
    if n < m {
        return Err(Error::InsufficientData { needed: m, have: n });
    }
    Ok(&g.samples[n - m..])
}

pub fn fit_exponent(g: &GrowthCurve, window: f64) -> Result<ExponentFit> {
    let t = tail(g, window)?;
    if let Some(z) = t.iter().find(|s| !(s.volume > 0.0)) {
        return Err(Error::ZeroVolume(z.r));
    }
    let xs: Vec<f64> = t.iter().map(|s| s.r.ln()).collect();
    let ys: Vec<f64> = t.iter().map(|s| s.volume.ln()).collect();
    let (alpha, se) = ols_slope(&xs, &ys);
    let dof = (t.len() - 2) as f64;
    let q = StudentsT::new(0.0, 1.0, dof)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    Ok(ExponentFit {
        alpha,
        halfwidth: q * se,
        points: t.len(),
    })
}

/// Slope and its standard error.
fn ols_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let ssr: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - my - slope * (x - mx);
            e * e
        })
        .sum();
    let se = (ssr / (n - 2.0) / sxx).sqrt();
    (slope, se)
}

/// Slack on the tail slope of `V/r^d` accepted as bounded. It absorbs
/// lower-order terms that are still decaying at the largest radii.
pub const SLOPE_TOLERANCE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GrowthClass {
    #[serde(rename = "consistent-with-O(r^d)")]
    Consistent,
    #[serde(rename = "violates-O(r^d)")]
    Violates,
}

impl std::fmt::Display for GrowthClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GrowthClass::Consistent => "consistent-with-O(r^d)",
            GrowthClass::Violates => "violates-O(r^d)",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthVerdict {
    pub d: usize,
    pub alpha: f64,
    pub halfwidth: f64,
    #[serde(rename = "C_hat")]
    pub c_hat: f64,
    /// `V/r^d` at the largest radius.
    pub ratio_at_max: f64,
    pub bounded: bool,
    pub classification: GrowthClass,
}

/// Trend test on `V_k / r_k^d` over the tail window.
///
/// The log-log slope of the ratio equals `alpha − d`; the curve counts as
/// bounded when that slope does not exceed [`SLOPE_TOLERANCE`] plus its
/// confidence half-width.
pub fn check_growth_bound(g: &GrowthCurve) -> Result<GrowthVerdict> {
    check_growth_bound_window(g, DEFAULT_WINDOW)
}

pub fn check_growth_bound_window(g: &GrowthCurve, window: f64) -> Result<GrowthVerdict> {
    let fit = fit_exponent(g, window)?;
    let c_hat = g
        .samples
        .iter()
        .map(|s| s.ratio(g.d))
        .fold(0.0, f64::max);
    let ratio_at_max = g.samples.last().map_or(0.0, |s| s.ratio(g.d));
    let bounded = fit.alpha - g.d as f64 <= SLOPE_TOLERANCE + fit.halfwidth;
    Ok(GrowthVerdict {
        d: g.d,
        alpha: fit.alpha,
        halfwidth: fit.halfwidth,
        c_hat,
        ratio_at_max,
        bounded,
        classification: if bounded {
            GrowthClass::Consistent
        } else {
            GrowthClass::Violates
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StollClass {
    #[serde(rename = "algebraic-consistent")]
    AlgebraicConsistent,
    #[serde(rename = "transcendental")]
    Transcendental,
}

impl std::fmt::Display for StollClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StollClass::AlgebraicConsistent => "algebraic-consistent",
            StollClass::Transcendental => "transcendental",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StollVerdict {
    pub d_complex: usize,
    pub growth: GrowthVerdict,
    pub verdict: StollClass,
    pub curve: GrowthCurve,
}

/// Growth test in real dimension `2·d_complex` for a complex-analytic set
/// written in real coordinates.
pub fn stoll_classify(
    s: &DefinableSet,
    d_complex: usize,
    radii: &[f64],
    cfg: &QuadratureConfig,
) -> Result<StollVerdict> {
    let d = 2 * d_complex;
    let actual = s.dim()?;
    if actual != d {
        return Err(Error::DimensionMismatch(format!(
            "set has real dimension {}, expected {} for complex dimension {}",
            actual, d, d_complex
        )));
    }
    let curve = growth_curve_in_dim(s, d, radii, cfg)?;
    let growth = check_growth_bound(&curve)?;
    Ok(StollVerdict {
        d_complex,
        verdict: if growth.bounded {
            StollClass::AlgebraicConsistent
        } else {
            StollClass::Transcendental
        },
        growth,
        curve,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaRow {
    pub r: f64,
    /// `vol_d C(r)`.
    pub graph_volume: MeasureEstimate,
    /// `vol_d π_L(C(r))`.
    pub projection_volume: MeasureEstimate,
    /// `vol_d D(r)` for the whole base region `D` cut by `B_d(r)`.
    pub base_volume: MeasureEstimate,
    /// `vol C(r) / vol π_L(C(r))`, NaN when `C(r)` is empty.
    pub ratio: f64,
    pub ratio_error: f64,
    /// `vol C(r) / vol D(r)`.
    pub ratio_to_base: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub tau: f64,
    /// Largest tangent tilt seen over the sampled chart points.
    pub max_tilt: f64,
    pub rows: Vec<LemmaRow>,
    pub all_hold: bool,
}

/// Tangent planes sampled when certifying `T_z C ⊂ U_L`.
const TILT_PROBES: usize = 4096;

/// Compares `vol_d C(r)` with the volume of its projection to `L`.
///
/// `c` must be a graph over an open region `D` of the coordinate plane `L`
/// spanned by its first `d` axes. Every sampled tangent plane must be a graph
/// over `L` of operator norm at most `tau` (default `τ_d`), otherwise the
/// bound does not apply and [`Error::TangentEscapesNeighborhood`] is
/// returned. Each row checks `ratio ≤ 2 + 2·ratio_error`.
pub fn verify_projection_bound(
    c: &Cell,
    l: &Plane,
    radii: &[f64],
    tau: Option<f64>,
    cfg: &QuadratureConfig,
) -> Result<LemmaReport> {
    check_radii(radii)?;
    let d = c.dim();
    let base = match (c, c.base()) {
        (Cell::Graph(_), Some(b)) if d >= 1 && b.dim() == b.ambient() => b,
        _ => {
            return Err(Error::InvalidInput(
                "expected a graph cell over an open region of a coordinate plane".into(),
            ))
        }
    };
    let n = c.ambient();
    let coord = Plane::coordinate(d, n)?;
    if l.ambient() != n || l.dim() != d || plane_distance(l, &coord)? > 1e-9 {
        return Err(Error::InvalidInput(
            "L must be the coordinate plane carrying the base of the graph".into(),
        ));
    }
    let tau_d = tau_max(d);
    let tau = tau.unwrap_or(tau_d);
    if !(tau > 0.0) || tau > tau_d * (1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!(
            "tau {} must lie in (0, {}] for the factor-two bound",
            tau, tau_d
        )));
    }

    let p = crate::cells::chart(c)?;
    let probes = Cell::probe_points(d, TILT_PROBES, derive_seed(&[cfg.seed, 0x7117]));
    let mut max_tilt: f64 = 0.0;
    for t in &probes {
        let tp = tangent_plane(&p.jacobian(t)?)?;
        let tilt = match graph_matrix(l, &tp) {
            Ok(a) => operator_norm(&a),
            Err(_) => f64::INFINITY,
        };
        max_tilt = max_tilt.max(tilt);
    }
    if max_tilt > tau * (1.0 + 1e-9) {
        return Err(Error::TangentEscapesNeighborhood { norm: max_tilt, tau });
    }

    let rows = radii
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let rc = cfg.with_seed(derive_seed(&[cfg.seed, k as u64]));
            let v = integrate_cell(c, r, &rc, 0, 2, |s, out| {
                let top = s.jacobian.rows(0, d).into_owned();
                out[0] = s.weight * s.gram;
                out[1] = s.weight * top.determinant().abs();
            })?;
            let base_volume = integrate_cell(base, r, &rc, 1, 1, |s, out| out[0] = s.weight * s.gram)?[0];
            let (g, pr) = (v[0], v[1]);
            let ratio = if pr.value > 0.0 { g.value / pr.value } else { f64::NAN };
            let rel = |m: &MeasureEstimate| if m.value > 0.0 { m.error_bound / m.value } else { 0.0 };
            let ratio_error = ratio.abs() * (rel(&g).powi(2) + rel(&pr).powi(2)).sqrt();
            let ratio_to_base = if base_volume.value > 0.0 {
                g.value / base_volume.value
            } else {
                f64::NAN
            };
            let holds = !(ratio > 2.0 + 2.0 * ratio_error);
            Ok(LemmaRow {
                r,
                graph_volume: g,
                projection_volume: pr,
                base_volume,
                ratio,
                ratio_error,
                ratio_to_base,
                holds,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let all_hold = rows.iter().all(|r| r.holds);
    Ok(LemmaReport {
        tau,
        max_tilt,
        rows,
        all_hold,
    })
}

#[derive(Clone, Debug)]
pub struct GaussPiece {
    pub center: Plane,
    /// `vol_d` of the samples whose tangent plane lies in this piece's
    /// neighborhood (and in no earlier one), per radius.
    pub curve: GrowthCurve,
    /// `None` when the piece is empty on part of the tail.
    pub verdict: Option<GrowthVerdict>,
}

#[derive(Clone, Debug)]
pub struct GaussDecomposition {
    pub tau: f64,
    pub pieces: Vec<GaussPiece>,
    /// Whole-set volume from the same samples.
    pub total: Vec<MeasureEstimate>,
    pub radii: Vec<f64>,
    /// Quadrature samples inside the ball whose tangent plane matched no
    /// center, summed over radii.
    pub unassigned: usize,
    pub assigned_fraction: f64,
}

impl GaussDecomposition {
    /// Sum of piece volumes at radius index `k`.
    pub fn piece_sum(&self, k: usize) -> f64 {
        self.pieces.iter().map(|p| p.curve.samples[k].volume).sum()
    }
}

/// Tangent planes of the top-dimensional cells at random sample points
/// inside `B(r)`, drawn the same way quadrature draws them.
fn gauss_image(cells: &[&Cell], r: f64, count: usize, seed: u64) -> Result<Vec<Plane>> {
    let ball = BallRestriction::new(r)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut planes = Vec::with_capacity(count);
    let mut nat = Vec::new();
    let mut out = Vec::new();
    let mut attempts = 0usize;
    while planes.len() < count && attempts < 50 * count {
        attempts += 1;
        let c = cells[attempts % cells.len()];
        let u: Vec<f64> = (0..c.dim()).map(|_| rng.random::<f64>()).collect();
        nat.clear();
        out.clear();
        let mut w = 1.0;
        if !matches!(c.sample_natural(&u, r, &mut nat, &mut out, &mut w), Ok(true)) || !ball.contains(&out) {
            continue;
        }
        if let Ok(j) = c.natural_jacobian(&nat) {
            if let Ok(p) = tangent_plane(&j) {
                planes.push(p);
            }
        }
    }
    if planes.is_empty() {
        return Err(Error::InvalidInput(format!("no part of the set lies inside B({})", r)));
    }
    Ok(planes)
}

/// Splits a cell into the pieces `Γ⁻¹(U_{L_i})` of a Gauss-map cover.
pub fn gauss_cover_decompose(
    c: &Cell,
    tau: f64,
    radii: &[f64],
    cfg: &QuadratureConfig,
) -> Result<GaussDecomposition> {
    let s = DefinableSet::new("cell", c.ambient(), vec![c.clone()])?;
    gauss_cover_decompose_set(&s, tau, radii, cfg)
}

/// As [`gauss_cover_decompose`], with one cover shared by all
/// top-dimensional cells of a set.
pub fn gauss_cover_decompose_set(
    s: &DefinableSet,
    tau: f64,
    radii: &[f64],
    cfg: &QuadratureConfig,
) -> Result<GaussDecomposition> {
    gauss_cover_decompose_with(s, tau, radii, cfg, &CoverConfig::default())
}

pub fn gauss_cover_decompose_with(
    s: &DefinableSet,
    tau: f64,
    radii: &[f64],
    cfg: &QuadratureConfig,
    cover: &CoverConfig,
) -> Result<GaussDecomposition> {
    check_radii(radii)?;
    if !(tau > 0.0) {
        return Err(Error::InvalidInput(format!("tau must be positive, got {}", tau)));
    }
    let d = s.dim()?;
    if d == 0 {
        return Err(Error::InvalidInput("a zero-dimensional set has no tangent planes".into()));
    }
    let top: Vec<(usize, &Cell)> = s.cells().iter().enumerate().filter(|(_, c)| c.dim() == d).collect();
    let top_cells: Vec<&Cell> = top.iter().map(|(_, c)| *c).collect();
    let r_max = *radii.last().unwrap();
    let image = gauss_image(&top_cells, r_max, cover.sample_size, derive_seed(&[cfg.seed, 0x9a55]))?;
    let centers = greedy_cover(&image, tau, cover.margin, cover.max_centers)?;
    let m = centers.len();
    let frames: Vec<(DMatrix<f64>, DMatrix<f64>)> = centers
        .iter()
        .map(|p| (p.frame().clone(), p.complement().clone()))
        .collect();

    // outputs: one per piece, the total, the in-ball count, the unassigned count
    let outputs = m + 3;
    let per_radius = radii
        .par_iter()
        .enumerate()
        .map(|(k, &r)| {
            let rc = cfg.with_seed(derive_seed(&[cfg.seed, k as u64]));
            let mut acc = vec![(0.0, 0.0); outputs];
            let mut counted = 0usize;
            let mut missing = 0usize;
            for &(i, c) in &top {
                let est = integrate_cell(c, r, &rc, i as u64, outputs, |sv, out| {
                    let v = sv.weight * sv.gram;
                    out[m] = v;
                    out[m + 1] = 1.0;
                    let hit = tangent_plane(sv.jacobian).ok().and_then(|tp| {
                        frames.iter().position(|(q, qc)| tilt_within(q, qc, tp.frame(), tau))
                    });
                    match hit {
                        Some(j) => out[j] = v,
                        None => out[m + 2] = 1.0,
                    }
                })?;
                for (a, e) in acc.iter_mut().zip(&est) {
                    a.0 += e.value;
                    a.1 += e.error_bound * e.error_bound;
                }
                if let crate::hausdorff::Method::Quadrature { samples } = est[0].method {
                    counted += (est[m + 1].value * samples as f64).round() as usize;
                    missing += (est[m + 2].value * samples as f64).round() as usize;
                }
            }
            Ok((acc, counted, missing))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut pieces: Vec<GaussPiece> = centers
        .into_iter()
        .enumerate()
        .map(|(j, center)| GaussPiece {
            center,
            curve: GrowthCurve {
                name: format!("{}#{}", s.name(), j),
                d,
                samples: radii
                    .iter()
                    .zip(&per_radius)
                    .map(|(&r, (acc, _, _))| GrowthSample {
                        r,
                        volume: acc[j].0,
                        error_bound: acc[j].1.sqrt(),
                    })
                    .collect(),
            },
            verdict: None,
        })
        .collect();
    if radii.len() >= MIN_TAIL_POINTS {
        for p in &mut pieces {
            p.verdict = check_growth_bound(&p.curve).ok();
        }
    }
    let total = per_radius
        .iter()
        .map(|(acc, _, _)| MeasureEstimate {
            value: acc[m].0,
            error_bound: acc[m].1.sqrt(),
            method: crate::hausdorff::Method::Quadrature { samples: cfg.samples },
        })
        .collect();
    let counted: usize = per_radius.iter().map(|x| x.1).sum();
    let unassigned: usize = per_radius.iter().map(|x| x.2).sum();
    let assigned_fraction = if counted == 0 {
        1.0
    } else {
        1.0 - unassigned as f64 / counted as f64
    };
    Ok(GaussDecomposition {
        tau,
        pieces,
        total,
        radii: radii.to_vec(),
        unassigned,
        assigned_fraction,
    })
}

/// `σ_max(graph_matrix) ≤ tau` from raw frames.
fn tilt_within(q: &DMatrix<f64>, qc: &DMatrix<f64>, other: &DMatrix<f64>, tau: f64) -> bool {
    let u = q.tr_mul(other);
    let v = qc.tr_mul(other);
    match u.try_inverse() {
        Some(inv) => {
            let a = v * inv;
            a.iter().all(|x| x.is_finite()) && operator_norm(&a) <= tau
        }
        None => false,
    }
}
