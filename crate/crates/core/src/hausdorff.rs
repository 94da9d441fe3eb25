//! Measuring cells inside balls.
//!
//! Two independent engines live here:
//!
//! * [`covering_measure`] follows the covering definition of Hausdorff
//!   measure directly. `B(r)` is tiled with cubes of diameter `eps`; the
//!   pieces `S ∩ Q` form an `eps`-covering of `S(r)`, and the sum of
//!   `diam(S ∩ Q)^d` is turned into a volume. It needs no derivatives and
//!   serves as the oracle.
//! * [`cell_volume_in_ball`] integrates `sqrt(det JᵀJ)` over a cell's chart
//!   with the ball indicator inside the integrand, by stratified Monte Carlo
//!   or a midpoint grid.
//!
//! All reported numbers use the `vol_d` normalization,
//! `vol_d = π^{d/2} / Γ(d/2 + 1) · ℋ_d`, so that they agree with ordinary
//! length, area and volume on smooth submanifolds.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cells::{chart, gram_sqrt, Cell, DefinableSet};
use crate::error::{Error, Result};

/// Γ(x) for x > 0 (Lanczos, g = 7, nine terms), with reflection below 1/2.
pub fn gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x == x.floor() && (1.0..=171.0).contains(&x) {
        return (2..x as u32).map(f64::from).product();
    }
    if x < 0.5 {
        return std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
}

/// `π^{d/2} / Γ(d/2 + 1)`: the factor turning `ℋ_d` into `vol_d`.
pub fn vol_normalization(d: f64) -> f64 {
    assert!(d >= 0.0, "dimension must be nonnegative");
    std::f64::consts::PI.powf(d / 2.0) / gamma(d / 2.0 + 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Covering { eps: f64 },
    Quadrature { samples: usize },
}

/// A volume together with a heuristic half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub value: f64,
    pub error_bound: f64,
    pub method: Method,
}

impl MeasureEstimate {
    fn exact(value: f64) -> Self {
        MeasureEstimate {
            value,
            error_bound: 0.0,
            method: Method::Quadrature { samples: 1 },
        }
    }
}

/// The open ball `B(r)` centred at the origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BallRestriction {
    radius: f64,
}

impl BallRestriction {
    pub fn new(radius: f64) -> Result<Self> {
        if radius > 0.0 && !radius.is_nan() {
            Ok(BallRestriction { radius })
        } else {
            Err(Error::InvalidInput(format!("ball radius {} must be positive", radius)))
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().map(|v| v * v).sum::<f64>() < self.radius * self.radius
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuadratureMode {
    Mc,
    Grid,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Samples per cell.
    pub samples: usize,
    /// Strata per axis; chosen from `samples` when absent.
    pub strata_per_axis: Option<usize>,
    pub seed: u64,
    pub mode: QuadratureMode,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            samples: 1 << 16,
            strata_per_axis: None,
            seed: 0,
            mode: QuadratureMode::Mc,
        }
    }
}

impl QuadratureConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }
}

/// Mixes several words into one RNG seed (splitmix64 finalizer).
pub(crate) fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        h ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}

/// One accepted quadrature sample, handed to integrand callbacks.
pub(crate) struct SampleView<'a> {
    pub jacobian: &'a DMatrix<f64>,
    /// `sqrt(det JᵀJ)` in natural coordinates.
    pub gram: f64,
    /// Jacobian of the map from the unit box to natural coordinates.
    pub weight: f64,
}

/// Scratch buffers reused across samples.
struct Scratch {
    nat: Vec<f64>,
    out: Vec<f64>,
}

enum Outcome {
    Miss,
    Dropped,
    Hit,
}

fn evaluate<F>(cell: &Cell, ball: BallRestriction, u: &[f64], s: &mut Scratch, contrib: &mut [f64], f: &F) -> Outcome
where
    F: Fn(&SampleView<'_>, &mut [f64]),
{
    s.nat.clear();
    s.out.clear();
    let mut weight = 1.0;
    match cell.sample_natural(u, ball.radius(), &mut s.nat, &mut s.out, &mut weight) {
        Err(_) => return Outcome::Dropped,
        Ok(false) => return Outcome::Miss,
        Ok(true) => {}
    }
    if !ball.contains(&s.out) {
        return Outcome::Miss;
    }
    let jac = match cell.natural_jacobian(&s.nat) {
        Ok(j) => j,
        Err(_) => return Outcome::Dropped,
    };
    let gram = gram_sqrt(&jac);
    if !gram.is_finite() || !weight.is_finite() {
        return Outcome::Dropped;
    }
    let view = SampleView {
        jacobian: &jac,
        gram,
        weight,
    };
    f(&view, contrib);
    if contrib.iter().all(|c| c.is_finite()) {
        Outcome::Hit
    } else {
        contrib.iter_mut().for_each(|c| *c = 0.0);
        Outcome::Dropped
    }
}

#[derive(Clone, Default)]
struct Partial {
    mean_sum: Vec<f64>,
    var_sum: Vec<f64>,
    neighbor_sum: Vec<f64>,
    dropped: usize,
    total: usize,
}

/// Fraction of samples that may be lost to rounding at chart boundaries
/// before the integrand is declared non-finite.
const MAX_DROPPED_FRACTION: f64 = 1e-3;

/// Integrates `outputs` integrands over the part of `cell` inside `B(r)`.
///
/// The integrand callback writes one contribution per output; the usual
/// volume integrand is `weight * gram`. Results are reduced in a fixed order,
/// so a given seed yields identical bits for any thread count.
pub(crate) fn integrate_cell<F>(
    cell: &Cell,
    radius: f64,
    cfg: &QuadratureConfig,
    stream: u64,
    outputs: usize,
    f: F,
) -> Result<Vec<MeasureEstimate>>
where
    F: Fn(&SampleView<'_>, &mut [f64]) + Sync,
{
    let ball = BallRestriction::new(radius)?;
    chart(cell)?;
    let d = cell.dim();
    if d == 0 {
        let mut s = Scratch { nat: Vec::new(), out: Vec::new() };
        let mut contrib = vec![0.0; outputs];
        return match evaluate(cell, ball, &[], &mut s, &mut contrib, &f) {
            Outcome::Dropped => Err(Error::NonFiniteIntegrand { dropped: 1, total: 1 }),
            _ => Ok(contrib.into_iter().map(MeasureEstimate::exact).collect()),
        };
    }
    if cfg.samples < 2 {
        return Err(Error::InvalidInput("at least two samples per cell are required".into()));
    }
    match cfg.mode {
        QuadratureMode::Mc => integrate_mc(cell, ball, cfg, stream, outputs, &f),
        QuadratureMode::Grid => integrate_grid(cell, ball, cfg, outputs, &f),
    }
}

fn integrate_mc<F>(
    cell: &Cell,
    ball: BallRestriction,
    cfg: &QuadratureConfig,
    stream: u64,
    outputs: usize,
    f: &F,
) -> Result<Vec<MeasureEstimate>>
where
    F: Fn(&SampleView<'_>, &mut [f64]) + Sync,
{
    let d = cell.dim();
    let per_axis = cfg
        .strata_per_axis
        .unwrap_or_else(|| ((cfg.samples as f64 / 2.0).powf(1.0 / d as f64)).floor() as usize)
        .max(1);
    let strata = per_axis
        .checked_pow(d as u32)
        .ok_or_else(|| Error::BudgetExceeded("too many strata".into()))?;
    let per_stratum = (cfg.samples / strata).max(2);
    const BLOCK: usize = 64;
    let blocks = strata.div_ceil(BLOCK);

    let partials: Vec<Partial> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, stream, b as u64]));
            let mut s = Scratch { nat: Vec::new(), out: Vec::new() };
            let mut part = Partial {
                mean_sum: vec![0.0; outputs],
                var_sum: vec![0.0; outputs],
                neighbor_sum: vec![0.0; outputs],
                ..Default::default()
            };
            // stratum means of the two previous strata along axis 0
            let mut prev = vec![[0.0f64; 2]; outputs];
            let mut u = vec![0.0; d];
            let mut idx = vec![0usize; d];
            let mut contrib = vec![0.0; outputs];
            let mut sum = vec![0.0; outputs];
            let mut sumsq = vec![0.0; outputs];
            for stratum in b * BLOCK..((b + 1) * BLOCK).min(strata) {
                let mut rem = stratum;
                for i in idx.iter_mut() {
                    *i = rem % per_axis;
                    rem /= per_axis;
                }
                sum.iter_mut().for_each(|x| *x = 0.0);
                sumsq.iter_mut().for_each(|x| *x = 0.0);
                for _ in 0..per_stratum {
                    for (ui, &ii) in u.iter_mut().zip(&idx) {
                        *ui = (ii as f64 + rng.random::<f64>()) / per_axis as f64;
                    }
                    contrib.iter_mut().for_each(|x| *x = 0.0);
                    if let Outcome::Dropped = evaluate(cell, ball, &u, &mut s, &mut contrib, f) {
                        part.dropped += 1;
                    }
                    part.total += 1;
                    for k in 0..outputs {
                        sum[k] += contrib[k];
                        sumsq[k] += contrib[k] * contrib[k];
                    }
                }
                let kf = per_stratum as f64;
                for k in 0..outputs {
                    let mean = sum[k] / kf;
                    let var = ((sumsq[k] - kf * mean * mean) / (kf - 1.0)).max(0.0);
                    part.mean_sum[k] += mean;
                    part.var_sum[k] += var / kf;
                    if idx[0] >= 2 && stratum >= b * BLOCK + 2 {
                        let diff = mean - prev[k][0];
                        part.neighbor_sum[k] += diff * diff / (4.0 * kf);
                    }
                    prev[k] = [prev[k][1], mean];
                }
            }
            part
        })
        .collect();

    let mut mean = vec![0.0; outputs];
    let mut var = vec![0.0; outputs];
    let mut neighbors = vec![0.0; outputs];
    let (mut dropped, mut total) = (0, 0);
    for p in &partials {
        for k in 0..outputs {
            mean[k] += p.mean_sum[k];
            var[k] += p.var_sum[k];
            neighbors[k] += p.neighbor_sum[k];
        }
        dropped += p.dropped;
        total += p.total;
    }
    check_dropped(dropped, total)?;
    let sf = strata as f64;
    Ok((0..outputs)
        .map(|k| MeasureEstimate {
            value: mean[k] / sf,
            // Three standard errors. The within-stratum estimate misses a
            // jump of the ball indicator when all samples of the straddling
            // stratum land on one side; the spread between its two
            // neighbours along axis 0 does not.
            error_bound: 3.0 * var[k].max(neighbors[k]).sqrt() / sf,
            method: Method::Quadrature { samples: total },
        })
        .collect())
}

fn check_dropped(dropped: usize, total: usize) -> Result<()> {
    if dropped as f64 > MAX_DROPPED_FRACTION * total as f64 {
        Err(Error::NonFiniteIntegrand { dropped, total })
    } else {
        Ok(())
    }
}

fn integrate_grid<F>(
    cell: &Cell,
    ball: BallRestriction,
    cfg: &QuadratureConfig,
    outputs: usize,
    f: &F,
) -> Result<Vec<MeasureEstimate>>
where
    F: Fn(&SampleView<'_>, &mut [f64]) + Sync,
{
    let d = cell.dim();
    if d > 2 {
        return Err(Error::InvalidInput(format!(
            "grid quadrature supports charts of dimension 1 and 2, not {}",
            d
        )));
    }
    let fine = ((cfg.samples as f64).powf(1.0 / d as f64)).floor() as usize;
    let fine = fine.max(4) & !1;
    let run = |m: usize| -> (Vec<f64>, usize, usize) {
        let total = m.pow(d as u32);
        let rows: Vec<(Vec<f64>, usize)> = (0..m)
            .into_par_iter()
            .map(|row| {
                let mut s = Scratch { nat: Vec::new(), out: Vec::new() };
                let mut acc = vec![0.0; outputs];
                let mut contrib = vec![0.0; outputs];
                let mut dropped = 0;
                let inner = total / m;
                let mut u = vec![0.0; d];
                for j in 0..inner {
                    u[0] = (row as f64 + 0.5) / m as f64;
                    if d == 2 {
                        u[1] = (j as f64 + 0.5) / m as f64;
                    }
                    contrib.iter_mut().for_each(|x| *x = 0.0);
                    if let Outcome::Dropped = evaluate(cell, ball, &u, &mut s, &mut contrib, f) {
                        dropped += 1;
                    }
                    for k in 0..outputs {
                        acc[k] += contrib[k];
                    }
                }
                (acc, dropped)
            })
            .collect();
        let mut acc = vec![0.0; outputs];
        let mut dropped = 0;
        for (r, dr) in rows {
            for k in 0..outputs {
                acc[k] += r[k];
            }
            dropped += dr;
        }
        let tf = total as f64;
        (acc.into_iter().map(|a| a / tf).collect(), dropped, total)
    };
    let (v_fine, dropped, total) = run(fine);
    check_dropped(dropped, total)?;
    let (v_coarse, _, _) = run(fine / 2);
    Ok((0..outputs)
        .map(|k| MeasureEstimate {
            value: v_fine[k],
            error_bound: (v_fine[k] - v_coarse[k]).abs(),
            method: Method::Quadrature { samples: total },
        })
        .collect())
}

/// `vol_d` of `c ∩ B(r)` with `d = dim c`, by integrating the Gram
/// determinant of the chart.
pub fn cell_volume_in_ball(c: &Cell, r: f64, cfg: &QuadratureConfig) -> Result<MeasureEstimate> {
    cell_volume_stream(c, r, cfg, 0)
}

pub(crate) fn cell_volume_stream(
    c: &Cell,
    r: f64,
    cfg: &QuadratureConfig,
    stream: u64,
) -> Result<MeasureEstimate> {
    let mut v = integrate_cell(c, r, cfg, stream, 1, |s, out| out[0] = s.weight * s.gram)?;
    Ok(v.remove(0))
}

/// `vol_d(S ∩ B(r))`. Cells of dimension below `d` contribute exactly zero.
pub fn set_volume_in_ball(
    s: &DefinableSet,
    d: usize,
    r: f64,
    cfg: &QuadratureConfig,
) -> Result<MeasureEstimate> {
    let top = s.dim()?;
    if d < top {
        return Err(Error::DimensionMismatch(format!(
            "{}-dimensional volume of a {}-dimensional set is infinite",
            d, top
        )));
    }
    let parts: Vec<MeasureEstimate> = s
        .cells()
        .par_iter()
        .enumerate()
        .filter(|(_, c)| c.dim() == d)
        .map(|(i, c)| cell_volume_stream(c, r, cfg, i as u64))
        .collect::<Result<_>>()?;
    let mut value = 0.0;
    let mut err2 = 0.0;
    let mut samples = 0;
    for p in &parts {
        value += p.value;
        err2 += p.error_bound * p.error_bound;
        if let Method::Quadrature { samples: k } = p.method {
            samples += k;
        }
    }
    Ok(MeasureEstimate {
        value,
        error_bound: err2.sqrt(),
        method: Method::Quadrature { samples },
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoveringConfig {
    /// Sample points per cube edge length along one-dimensional cells.
    pub oversample: f64,
    /// Cap on the number of points drawn from the set.
    pub max_points: usize,
}

impl Default for CoveringConfig {
    fn default() -> Self {
        CoveringConfig {
            oversample: 256.0,
            max_points: 4_000_000,
        }
    }
}

fn directions(n: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for i in 0..n {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        dirs.push(v);
        for j in (i + 1)..n {
            for s in [1.0, -1.0] {
                let mut v = vec![0.0; n];
                v[i] = std::f64::consts::FRAC_1_SQRT_2;
                v[j] = s * std::f64::consts::FRAC_1_SQRT_2;
                dirs.push(v);
            }
        }
    }
    dirs
}

/// Extreme points of the sampled piece `S ∩ Q` along a fixed set of
/// directions (both signs).
#[derive(Clone)]
struct Extremes {
    best: Vec<(f64, usize)>,
}

fn piece_diameters(points: &[Vec<f64>], side: f64, dirs: &[Vec<f64>]) -> Vec<f64> {
    let mut cubes: BTreeMap<Vec<i64>, Extremes> = BTreeMap::new();
    for (pi, p) in points.iter().enumerate() {
        let key: Vec<i64> = p.iter().map(|x| (x / side).floor() as i64).collect();
        let e = cubes.entry(key).or_insert_with(|| Extremes {
            best: vec![(f64::NEG_INFINITY, pi); 2 * dirs.len()],
        });
        for (k, dir) in dirs.iter().enumerate() {
            let proj: f64 = dir.iter().zip(p).map(|(a, b)| a * b).sum();
            if proj > e.best[2 * k].0 {
                e.best[2 * k] = (proj, pi);
            }
            if -proj > e.best[2 * k + 1].0 {
                e.best[2 * k + 1] = (-proj, pi);
            }
        }
    }
    cubes
        .values()
        .map(|e| {
            let mut idx: Vec<usize> = e.best.iter().map(|b| b.1).collect();
            idx.sort_unstable();
            idx.dedup();
            let mut diam: f64 = 0.0;
            for a in 0..idx.len() {
                for b in (a + 1)..idx.len() {
                    let pa = &points[idx[a]];
                    let pb = &points[idx[b]];
                    let dd: f64 = pa.iter().zip(pb).map(|(x, y)| (x - y) * (x - y)).sum();
                    diam = diam.max(dd.sqrt());
                }
            }
            diam
        })
        .collect()
}

fn covering_sum(diams: &[f64], d: f64) -> f64 {
    diams
        .iter()
        .map(|&x| if d == 0.0 { 1.0 } else { x.powf(d) })
        .sum()
}

/// Grid-covering estimate of `vol_d(S ∩ B(r))`.
///
/// Cubes of side `eps/√n` (diameter `eps`) tile space; each piece `S ∩ Q` of
/// the set inside the ball is located by dense sampling of the cells, and
/// its diameter is measured from the sampled points. The result is
/// `vol_normalization(d) · Σ diam^d / 2^d`. `error_bound` is the change
/// against the same estimate at `2·eps`.
pub fn covering_measure(
    s: &DefinableSet,
    d: f64,
    eps: f64,
    r: f64,
    cfg: &CoveringConfig,
) -> Result<MeasureEstimate> {
    if !(eps > 0.0) || !(d >= 0.0) {
        return Err(Error::InvalidInput("eps must be positive and d nonnegative".into()));
    }
    let ball = BallRestriction::new(r)?;
    let n = s.ambient();
    let side = eps / (n.max(1) as f64).sqrt();
    let mut per_cell = Vec::new();
    let mut budget = 0usize;
    for c in s.cells() {
        chart(c)?;
        let k = c.dim();
        let count = if k == 0 {
            1
        } else {
            let ovs = if k == 1 { cfg.oversample } else { cfg.oversample.sqrt().min(8.0) };
            let per_axis = (ovs * 2.0 * r / side).ceil();
            let total = per_axis.powi(k as i32);
            if total > cfg.max_points as f64 {
                return Err(Error::BudgetExceeded(format!(
                    "{:.0} sample points needed for a {}-cell, cap is {}",
                    total, k, cfg.max_points
                )));
            }
            per_axis as usize
        };
        budget += count.pow(k as u32);
        if budget > cfg.max_points {
            return Err(Error::BudgetExceeded(format!(
                "{} sample points exceed the cap {}",
                budget, cfg.max_points
            )));
        }
        per_cell.push(count);
    }
    let points: Vec<Vec<f64>> = s
        .cells()
        .par_iter()
        .zip(per_cell.par_iter())
        .flat_map_iter(|(c, &m)| {
            let k = c.dim();
            let total = m.pow(k as u32);
            let mut found = Vec::new();
            let mut nat = Vec::new();
            let mut out = Vec::new();
            let mut u = vec![0.0; k];
            for idx in 0..total {
                let mut rem = idx;
                for ui in u.iter_mut() {
                    *ui = ((rem % m) as f64 + 0.5) / m as f64;
                    rem /= m;
                }
                nat.clear();
                out.clear();
                let mut w = 1.0;
                if let Ok(true) = c.sample_natural(&u, r, &mut nat, &mut out, &mut w) {
                    if ball.contains(&out) {
                        found.push(out.clone());
                    }
                }
            }
            found
        })
        .collect();
    let dirs = directions(n);
    let norm = vol_normalization(d) / 2f64.powf(d);
    let fine = norm * covering_sum(&piece_diameters(&points, side, &dirs), d);
    let coarse = norm * covering_sum(&piece_diameters(&points, 2.0 * side, &dirs), d);
    Ok(MeasureEstimate {
        value: fine,
        error_bound: (fine - coarse).abs(),
        method: Method::Covering { eps },
    })
}
