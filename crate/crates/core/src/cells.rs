//! Cells and definable sets.
//!
//! A cell in ℝⁿ is built recursively from the unique point of ℝ⁰:
//!
//! * a **graph** cell places the values of C² functions `f: base → ℝᵏ` in
//!   `k` new trailing coordinates, keeping the dimension of its base;
//! * a **band** cell is the open region strictly between two C² functions
//!   (or ±∞) over its base, adding one coordinate and one dimension.
//!
//! A [`DefinableSet`] is a finite list of pairwise disjoint cells in a
//! common ambient space. Decompositions are supplied by the caller or by the
//! [catalog](crate::catalog); they are not computed here.
//!
//! Every cell carries two parametrizations. The *canonical chart* maps the
//! open unit box `(0,1)^d` onto the cell; band coordinates interpolate their
//! bounds, and infinite bounds go through `t/(1-t)`-type maps. The *natural
//! coordinates* are the ambient coordinates introduced by band steps; they
//! are what the quadrature engine integrates over.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dual::{Dual, Scalar, DUAL_WIDTH};
use crate::error::{Error, Result};
use crate::expr::{ExprError, Expression, Node};

/// Range of one parameter of a [`ChartPatch`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
    /// The parameter's absolute value never exceeds the norm of the image
    /// point, so it can be truncated to `(-r, r)` when integrating over a
    /// ball of radius `r`. Required for infinite ranges.
    pub radial: bool,
}

impl ParamRange {
    pub fn new(lo: f64, hi: f64) -> Self {
        ParamRange { lo, hi, radial: false }
    }

    pub fn radial(lo: f64, hi: f64) -> Self {
        ParamRange { lo, hi, radial: true }
    }
}

#[derive(Clone, Debug)]
pub struct GraphCell {
    base: Box<Cell>,
    f: Vec<Expression>,
    ambient: usize,
}

#[derive(Clone, Debug)]
pub struct BandCell {
    base: Box<Cell>,
    lower: Option<Expression>,
    upper: Option<Expression>,
}

/// A parametrized piece given directly by a chart on a box.
///
/// Chart patches are used for rotated copies of cells and for sets that are
/// not definable at all (the Archimedean spiral), which is why they sit
/// outside the graph/band grammar.
#[derive(Clone, Debug)]
pub struct ChartPatch {
    params: Vec<String>,
    ranges: Vec<ParamRange>,
    coords: Vec<Expression>,
}

impl ChartPatch {
    pub fn new(
        params: Vec<String>,
        ranges: Vec<ParamRange>,
        coords: Vec<Expression>,
    ) -> Result<ChartPatch> {
        if params.len() != ranges.len() {
            return Err(Error::InvalidCell(format!(
                "{} parameters but {} ranges",
                params.len(),
                ranges.len()
            )));
        }
        if params.is_empty() || coords.is_empty() {
            return Err(Error::InvalidCell("chart needs parameters and coordinates".into()));
        }
        for (name, r) in params.iter().zip(&ranges) {
            if r.lo.is_nan() || r.hi.is_nan() || r.lo >= r.hi {
                return Err(Error::InvalidCell(format!("empty range for `{}`", name)));
            }
            if !(r.lo.is_finite() && r.hi.is_finite()) && !r.radial {
                return Err(Error::InvalidCell(format!(
                    "unbounded parameter `{}` must be marked radial",
                    name
                )));
            }
        }
        for c in &coords {
            if c.variables() != params.as_slice() {
                return Err(Error::InvalidCell(
                    "chart coordinates must be expressions in the chart parameters".into(),
                ));
            }
        }
        Ok(ChartPatch { params, ranges, coords })
    }

    /// Starting points for a nearest-point search, from a grid in natural
    /// coordinates. A radial parameter never exceeds the norm of its image,
    /// so its range is cut to `|p| + 1`.
    fn natural_seeds(&self, p: &[f64]) -> Vec<(f64, Vec<f64>)> {
        let d = self.ranges.len();
        let per_axis: usize = match d {
            1 => 8192,
            2 => 128,
            _ => 16,
        };
        let reach = p.iter().map(|v| v * v).sum::<f64>().sqrt() + 1.0;
        let mut bounds = Vec::with_capacity(d);
        for r in &self.ranges {
            let (lo, hi) = if r.radial { (r.lo.max(-reach), r.hi.min(reach)) } else { (r.lo, r.hi) };
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Vec::new();
            }
            bounds.push((lo, hi));
        }
        let mut best: Vec<(f64, Vec<f64>)> = Vec::new();
        let mut nat = vec![0.0; d];
        let mut x = Vec::with_capacity(p.len());
        for idx in 0..per_axis.pow(d as u32) {
            let mut rem = idx;
            for (ni, &(lo, hi)) in nat.iter_mut().zip(&bounds) {
                *ni = lo + (hi - lo) * ((rem % per_axis) as f64 + 0.5) / per_axis as f64;
                rem /= per_axis;
            }
            x.clear();
            if self.coords.iter().try_for_each(|e| e.eval(&nat).map(|v| x.push(v))).is_err() {
                continue;
            }
            let dd = dist(&x, p);
            if best.len() < 4 || dd < best[best.len() - 1].0 {
                let t = nat
                    .iter()
                    .zip(&self.ranges)
                    .map(|(&v, r)| unreparam(v, finite(r.lo), finite(r.hi)).clamp(1e-12, 1.0 - 1e-12))
                    .collect();
                best.push((dd, t));
                best.sort_by(|a, b| a.0.total_cmp(&b.0));
                best.truncate(4);
            }
        }
        best
    }

    pub fn params(&self) -> &[String] {
        &self.params
    }

    pub fn ranges(&self) -> &[ParamRange] {
        &self.ranges
    }

    pub fn coords(&self) -> &[Expression] {
        &self.coords
    }
}

/// A cell of a definable set; see the module documentation.
#[derive(Clone, Debug)]
pub enum Cell {
    Point0,
    Graph(GraphCell),
    Band(BandCell),
    Chart(ChartPatch),
}

fn reparam<S: Scalar>(t: S, lo: Option<S>, hi: Option<S>) -> S {
    let one = S::constant(1.0);
    match (lo, hi) {
        (Some(a), Some(b)) => a + t * (b - a),
        (Some(a), None) => a + t / (one - t),
        (None, Some(b)) => b - (one - t) / t,
        (None, None) => t / (one - t) - (one - t) / t,
    }
}

/// Inverse of [`reparam`] for `f64`.
fn unreparam(y: f64, lo: Option<f64>, hi: Option<f64>) -> f64 {
    match (lo, hi) {
        (Some(a), Some(b)) => (y - a) / (b - a),
        (Some(a), None) => {
            let s = y - a;
            s / (1.0 + s)
        }
        (None, Some(b)) => 1.0 / (1.0 + (b - y)),
        (None, None) => {
            // q = t/(1-t) solves q - 1/q = y
            let root = (y * y + 4.0).sqrt();
            let q = if y >= 0.0 { (y + root) / 2.0 } else { 2.0 / (root - y) };
            q / (1.0 + q)
        }
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Smooth warp of the unit interval onto `(lo, hi)` with vanishing slope at
/// both ends; returns the point and the Jacobian factor.
#[inline]
pub(crate) fn warp(u: f64, lo: f64, hi: f64) -> (f64, f64) {
    let s = u * u * (3.0 - 2.0 * u);
    let ds = 6.0 * u * (1.0 - u);
    (lo + (hi - lo) * s, (hi - lo) * ds)
}

impl Cell {
    /// A single point of ℝⁿ, encoded as a constant graph over ℝ⁰.
    pub fn point(coords: &[f64]) -> Cell {
        if coords.is_empty() {
            return Cell::Point0;
        }
        let none: [&str; 0] = [];
        Cell::Graph(GraphCell {
            base: Box::new(Cell::Point0),
            f: coords.iter().map(|&c| Expression::constant(c, &none)).collect(),
            ambient: coords.len(),
        })
    }

    /// Graph of `f` over `base`; each `f[i]` takes the base's ambient
    /// coordinates as variables.
    pub fn graph(base: Cell, f: Vec<Expression>) -> Result<Cell> {
        if f.is_empty() {
            return Err(Error::InvalidCell("graph needs at least one function".into()));
        }
        if matches!(base, Cell::Chart(_)) {
            return Err(Error::InvalidCell("chart patches cannot serve as a base".into()));
        }
        let m = base.ambient();
        if let Some(bad) = f.iter().find(|e| e.arity() != m) {
            return Err(Error::InvalidCell(format!(
                "graph function `{}` has {} variables, base lives in R^{}",
                bad,
                bad.arity(),
                m
            )));
        }
        let cell = Cell::Graph(GraphCell {
            ambient: m + f.len(),
            base: Box::new(base),
            f,
        });
        cell.validate_on_samples()?;
        Ok(cell)
    }

    /// Band strictly between `lower` and `upper` over `base`; `None` means ∓∞.
    pub fn band(base: Cell, lower: Option<Expression>, upper: Option<Expression>) -> Result<Cell> {
        if matches!(base, Cell::Chart(_)) {
            return Err(Error::InvalidCell("chart patches cannot serve as a base".into()));
        }
        let m = base.ambient();
        for b in lower.iter().chain(upper.iter()) {
            if b.arity() != m {
                return Err(Error::InvalidCell(format!(
                    "band bound `{}` has {} variables, base lives in R^{}",
                    b,
                    b.arity(),
                    m
                )));
            }
        }
        let cell = Cell::Band(BandCell {
            base: Box::new(base),
            lower,
            upper,
        });
        cell.validate_on_samples()?;
        Ok(cell)
    }

    /// An open interval `(lo, hi)` of ℝ; infinite endpoints are allowed.
    pub fn interval(lo: f64, hi: f64) -> Result<Cell> {
        let none: [&str; 0] = [];
        Cell::band(
            Cell::Point0,
            finite(lo).map(|v| Expression::constant(v, &none)),
            finite(hi).map(|v| Expression::constant(v, &none)),
        )
    }

    pub fn chart_patch(patch: ChartPatch) -> Cell {
        Cell::Chart(patch)
    }

    pub fn ambient(&self) -> usize {
        match self {
            Cell::Point0 => 0,
            Cell::Graph(g) => g.ambient,
            Cell::Band(b) => b.base.ambient() + 1,
            Cell::Chart(c) => c.coords.len(),
        }
    }

    /// Dimension: 0 for the point, unchanged by graphs, +1 for bands.
    pub fn dim(&self) -> usize {
        match self {
            Cell::Point0 => 0,
            Cell::Graph(g) => g.base.dim(),
            Cell::Band(b) => b.base.dim() + 1,
            Cell::Chart(c) => c.params.len(),
        }
    }

    pub fn base(&self) -> Option<&Cell> {
        match self {
            Cell::Graph(g) => Some(&g.base),
            Cell::Band(b) => Some(&b.base),
            _ => None,
        }
    }

    pub fn graph_functions(&self) -> Option<&[Expression]> {
        match self {
            Cell::Graph(g) => Some(&g.f),
            _ => None,
        }
    }

    pub fn band_bounds(&self) -> Option<(Option<&Expression>, Option<&Expression>)> {
        match self {
            Cell::Band(b) => Some((b.lower.as_ref(), b.upper.as_ref())),
            _ => None,
        }
    }

    pub fn as_chart_patch(&self) -> Option<&ChartPatch> {
        match self {
            Cell::Chart(c) => Some(c),
            _ => None,
        }
    }

    /// Ambient point for given natural coordinates.
    pub(crate) fn natural_point<S: Scalar>(
        &self,
        nat: &[S],
        out: &mut Vec<S>,
    ) -> std::result::Result<(), ExprError> {
        match self {
            Cell::Point0 => Ok(()),
            Cell::Graph(g) => {
                g.base.natural_point(nat, out)?;
                let m = out.len();
                for f in &g.f {
                    let v = f.eval_with(&out[..m])?;
                    out.push(v);
                }
                Ok(())
            }
            Cell::Band(b) => {
                let k = b.base.dim();
                b.base.natural_point(&nat[..k], out)?;
                out.push(nat[k]);
                Ok(())
            }
            Cell::Chart(c) => {
                for e in &c.coords {
                    out.push(e.eval_with(nat)?);
                }
                Ok(())
            }
        }
    }

    /// Ambient point for canonical chart parameters in the unit box.
    pub(crate) fn chart_point<S: Scalar>(
        &self,
        t: &[S],
        out: &mut Vec<S>,
    ) -> std::result::Result<(), ExprError> {
        match self {
            Cell::Point0 => Ok(()),
            Cell::Graph(g) => {
                g.base.chart_point(t, out)?;
                let m = out.len();
                for f in &g.f {
                    let v = f.eval_with(&out[..m])?;
                    out.push(v);
                }
                Ok(())
            }
            Cell::Band(b) => {
                let k = b.base.dim();
                b.base.chart_point(&t[..k], out)?;
                let lo = match &b.lower {
                    Some(e) => Some(e.eval_with(&out[..])?),
                    None => None,
                };
                let hi = match &b.upper {
                    Some(e) => Some(e.eval_with(&out[..])?),
                    None => None,
                };
                out.push(reparam(t[k], lo, hi));
                Ok(())
            }
            Cell::Chart(c) => {
                let params: Vec<S> = t
                    .iter()
                    .zip(&c.ranges)
                    .map(|(&ti, r)| {
                        reparam(ti, finite(r.lo).map(S::constant), finite(r.hi).map(S::constant))
                    })
                    .collect();
                for e in &c.coords {
                    out.push(e.eval_with(&params)?);
                }
                Ok(())
            }
        }
    }

    /// Maps uniform `u ∈ (0,1)^d` to natural coordinates inside the slab
    /// allowed by a ball of radius `radius`, accumulating the Jacobian of the
    /// map into `weight`. Returns `false` when the sample falls outside the
    /// admissible region; the caller still has to test the full ball.
    pub(crate) fn sample_natural(
        &self,
        u: &[f64],
        radius: f64,
        nat: &mut Vec<f64>,
        out: &mut Vec<f64>,
        weight: &mut f64,
    ) -> std::result::Result<bool, ExprError> {
        match self {
            Cell::Point0 => Ok(true),
            Cell::Graph(g) => {
                if !g.base.sample_natural(u, radius, nat, out, weight)? {
                    return Ok(false);
                }
                let m = out.len();
                for f in &g.f {
                    let v = f.eval(&out[..m])?;
                    out.push(v);
                }
                Ok(true)
            }
            Cell::Band(b) => {
                let k = b.base.dim();
                if !b.base.sample_natural(&u[..k], radius, nat, out, weight)? {
                    return Ok(false);
                }
                let used: f64 = out.iter().map(|x| x * x).sum();
                let room = radius * radius - used;
                if room <= 0.0 {
                    return Ok(false);
                }
                let half = room.sqrt();
                let mut lo = -half;
                let mut hi = half;
                if let Some(e) = &b.lower {
                    lo = lo.max(e.eval(out)?);
                }
                if let Some(e) = &b.upper {
                    hi = hi.min(e.eval(out)?);
                }
                if lo >= hi {
                    return Ok(false);
                }
                let (y, w) = warp(u[k], lo, hi);
                if y <= lo || y >= hi {
                    return Ok(false);
                }
                *weight *= w;
                nat.push(y);
                out.push(y);
                Ok(true)
            }
            Cell::Chart(c) => {
                for (&ui, r) in u.iter().zip(&c.ranges) {
                    let (lo, hi) = if r.radial {
                        (r.lo.max(-radius), r.hi.min(radius))
                    } else {
                        (r.lo, r.hi)
                    };
                    if lo >= hi {
                        return Ok(false);
                    }
                    let (p, w) = warp(ui, lo, hi);
                    if p <= lo || p >= hi {
                        return Ok(false);
                    }
                    *weight *= w;
                    nat.push(p);
                }
                for e in &c.coords {
                    out.push(e.eval(nat)?);
                }
                Ok(true)
            }
        }
    }

    /// Jacobian (ambient × dim) of the natural-coordinate map.
    pub(crate) fn natural_jacobian(&self, nat: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let seeds = seed_duals(nat)?;
        let mut out = Vec::with_capacity(self.ambient());
        self.natural_point(&seeds, &mut out)?;
        Ok(jacobian_from(&out, d))
    }

    /// Symbolic canonical chart: ambient coordinates as expressions in
    /// `t1..td`.
    pub fn chart_expressions(&self) -> Result<Vec<Expression>> {
        let d = self.dim();
        let vars: Arc<[String]> = (1..=d).map(|i| format!("t{}", i)).collect();
        let t: Vec<Node> = (0..d).map(Node::Var).collect();
        let nodes = self.chart_nodes(&t)?;
        Ok(nodes
            .into_iter()
            .map(|n| Expression::from_node(vars.clone(), n))
            .collect())
    }

    fn chart_nodes(&self, t: &[Node]) -> Result<Vec<Node>> {
        fn bx(n: Node) -> Box<Node> {
            Box::new(n)
        }
        fn sym_reparam(t: Node, lo: Option<Node>, hi: Option<Node>) -> Node {
            let one = || Node::Const(1.0);
            let s = || Node::Div(bx(t.clone()), bx(Node::Sub(bx(one()), bx(t.clone()))));
            let s_inv = || Node::Div(bx(Node::Sub(bx(one()), bx(t.clone()))), bx(t.clone()));
            match (lo, hi) {
                (Some(a), Some(b)) => Node::Add(
                    bx(a.clone()),
                    bx(Node::Mul(bx(t.clone()), bx(Node::Sub(bx(b), bx(a))))),
                ),
                (Some(a), None) => Node::Add(bx(a), bx(s())),
                (None, Some(b)) => Node::Sub(bx(b), bx(s_inv())),
                (None, None) => Node::Sub(bx(s()), bx(s_inv())),
            }
        }
        match self {
            Cell::Point0 => Ok(Vec::new()),
            Cell::Graph(g) => {
                let mut base = g.base.chart_nodes(t)?;
                let extra: Vec<Node> = g.f.iter().map(|f| f.node().substitute(&base)).collect();
                base.extend(extra);
                Ok(base)
            }
            Cell::Band(b) => {
                let k = b.base.dim();
                let mut base = b.base.chart_nodes(&t[..k])?;
                let lo = b.lower.as_ref().map(|e| e.node().substitute(&base));
                let hi = b.upper.as_ref().map(|e| e.node().substitute(&base));
                base.push(sym_reparam(t[k].clone(), lo, hi));
                Ok(base)
            }
            Cell::Chart(c) => {
                let params: Vec<Node> = t
                    .iter()
                    .zip(&c.ranges)
                    .map(|(ti, r)| {
                        sym_reparam(
                            ti.clone(),
                            finite(r.lo).map(Node::Const),
                            finite(r.hi).map(Node::Const),
                        )
                    })
                    .collect();
                Ok(c.coords.iter().map(|e| e.node().substitute(&params)).collect())
            }
        }
    }

    /// The image of this cell under `x ↦ λx`.
    pub fn scaled(&self, lambda: f64) -> Result<Cell> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("scale factor {} must be positive", lambda)));
        }
        // λ·e(x/λ), with e taking `m` variables
        fn rescale(e: &Expression, lambda: f64) -> Expression {
            let vars = e.shared_vars();
            let shrunk: Vec<Node> = (0..vars.len())
                .map(|i| Node::Div(Box::new(Node::Var(i)), Box::new(Node::Const(lambda))))
                .collect();
            Expression::from_node(
                vars,
                Node::Mul(
                    Box::new(Node::Const(lambda)),
                    Box::new(e.node().substitute(&shrunk)),
                ),
            )
        }
        Ok(match self {
            Cell::Point0 => Cell::Point0,
            Cell::Graph(g) => Cell::Graph(GraphCell {
                base: Box::new(g.base.scaled(lambda)?),
                f: g.f.iter().map(|e| rescale(e, lambda)).collect(),
                ambient: g.ambient,
            }),
            Cell::Band(b) => Cell::Band(BandCell {
                base: Box::new(b.base.scaled(lambda)?),
                lower: b.lower.as_ref().map(|e| rescale(e, lambda)),
                upper: b.upper.as_ref().map(|e| rescale(e, lambda)),
            }),
            Cell::Chart(c) => {
                let ranges = c
                    .ranges
                    .iter()
                    .map(|r| ParamRange {
                        lo: r.lo * lambda,
                        hi: r.hi * lambda,
                        radial: r.radial,
                    })
                    .collect();
                let coords = c.coords.iter().map(|e| rescale(e, lambda)).collect();
                Cell::Chart(ChartPatch::new(c.params.clone(), ranges, coords)?)
            }
        })
    }

    /// The image of this cell under the linear map `q` (ambient × ambient).
    /// Positive-dimensional cells become chart patches over the unit box.
    pub fn transformed(&self, q: &DMatrix<f64>) -> Result<Cell> {
        let n = self.ambient();
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} map applied to a cell in R^{}",
                q.nrows(),
                q.ncols(),
                n
            )));
        }
        if self.dim() == 0 {
            let mut p = Vec::new();
            self.chart_point::<f64>(&[], &mut p)?;
            let v = q * nalgebra::DVector::from_vec(p);
            return Ok(Cell::point(v.as_slice()));
        }
        let d = self.dim();
        let coords = self.chart_expressions()?;
        let vars = coords[0].shared_vars();
        let mut mapped = Vec::with_capacity(n);
        for i in 0..n {
            let mut acc: Option<Node> = None;
            for (j, c) in coords.iter().enumerate() {
                let w = q[(i, j)];
                if w == 0.0 {
                    continue;
                }
                let term = Node::Mul(Box::new(Node::Const(w)), Box::new(c.node().clone()));
                acc = Some(match acc {
                    None => term,
                    Some(a) => Node::Add(Box::new(a), Box::new(term)),
                });
            }
            mapped.push(Expression::from_node(
                vars.clone(),
                acc.unwrap_or(Node::Const(0.0)),
            ));
        }
        let params: Vec<String> = vars.iter().cloned().collect();
        let ranges = vec![ParamRange::new(0.0, 1.0); d];
        Ok(Cell::Chart(ChartPatch::new(params, ranges, mapped)?))
    }

    /// Deterministic interior sample points of the unit box.
    pub(crate) fn probe_points(d: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| (0..d).map(|_| rng.random_range(0.02..0.98)).collect())
            .collect()
    }

    fn validate_on_samples(&self) -> Result<()> {
        if let Cell::Band(b) = self {
            if let (Some(lo), Some(hi)) = (&b.lower, &b.upper) {
                let d = b.base.dim();
                let probes = if d == 0 {
                    vec![Vec::new()]
                } else {
                    Cell::probe_points(d, 64, 0x5eed)
                };
                for t in probes {
                    let mut x = Vec::new();
                    b.base.chart_point(&t, &mut x)?;
                    let (l, u) = (lo.eval(&x)?, hi.eval(&x)?);
                    if !(l < u) {
                        return Err(Error::InvalidCell(format!(
                            "band bounds cross at {:?}: lower {} >= upper {}",
                            x, l, u
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Approximate Euclidean distance from `p` to the cell: a grid search over
    /// the canonical chart refined by damped Gauss–Newton.
    pub fn distance_to(&self, p: &[f64]) -> Result<f64> {
        Ok(self.nearest(p)?.0)
    }

    /// Distance to the cell and the chart parameter of the nearest point
    /// found.
    fn nearest(&self, p: &[f64]) -> Result<(f64, Vec<f64>)> {
        if p.len() != self.ambient() {
            return Err(Error::DimensionMismatch(format!(
                "point in R^{} tested against a cell in R^{}",
                p.len(),
                self.ambient()
            )));
        }
        let d = self.dim();
        if d == 0 {
            let mut x = Vec::new();
            self.chart_point::<f64>(&[], &mut x)?;
            return Ok((dist(&x, p), Vec::new()));
        }
        let per_axis = match d {
            1 => 512,
            2 => 64,
            3 => 16,
            _ => 8,
        };
        let total = (per_axis as usize).pow(d as u32);
        let mut best: Vec<(f64, Vec<f64>)> = Vec::new();
        let mut t = vec![0.0; d];
        let mut x = Vec::with_capacity(self.ambient());
        for idx in 0..total {
            let mut rem = idx;
            for ti in t.iter_mut() {
                *ti = ((rem % per_axis) as f64 + 0.5) / per_axis as f64;
                rem /= per_axis;
            }
            x.clear();
            if self.chart_point(&t, &mut x).is_err() {
                continue;
            }
            let dd = dist(&x, p);
            if best.len() < 4 || dd < best[best.len() - 1].0 {
                best.push((dd, t.clone()));
                best.sort_by(|a, b| a.0.total_cmp(&b.0));
                best.truncate(4);
            }
        }
        if let Cell::Chart(c) = self {
            best.extend(c.natural_seeds(p));
        }
        let mut inv = Vec::with_capacity(d);
        if self.chart_inverse(p, &mut inv).is_some() {
            let t0: Vec<f64> = inv.iter().map(|t| t.clamp(1e-12, 1.0 - 1e-12)).collect();
            x.clear();
            if self.chart_point(&t0, &mut x).is_ok() {
                best.push((dist(&x, p), t0));
            }
        }
        let mut min = (f64::INFINITY, Vec::new());
        for (d0, t0) in best {
            if d0 < min.0 {
                min = (d0, t0.clone());
            }
            let refined = self.refine_distance(p, t0);
            if refined.0 < min.0 {
                min = refined;
            }
        }
        Ok(min)
    }

    /// Chart parameters of the point of a graph/band tower lying over the
    /// band coordinates of `p`. Explicit charts have no inverse.
    fn chart_inverse(&self, p: &[f64], t: &mut Vec<f64>) -> Option<()> {
        match self {
            Cell::Point0 => Some(()),
            Cell::Graph(g) => g.base.chart_inverse(&p[..g.base.ambient()], t),
            Cell::Band(b) => {
                let m = b.base.ambient();
                b.base.chart_inverse(&p[..m], t)?;
                let base_pt = &p[..m];
                let lo = match &b.lower {
                    Some(e) => Some(e.eval(base_pt).ok()?),
                    None => None,
                };
                let hi = match &b.upper {
                    Some(e) => Some(e.eval(base_pt).ok()?),
                    None => None,
                };
                let tk = unreparam(p[m], lo, hi);
                tk.is_finite().then(|| t.push(tk))
            }
            Cell::Chart(_) => None,
        }
    }

    /// True if `p` is within `tol` of a point whose chart parameter stays
    /// away from the boundary of the unit box, i.e. of the open cell itself
    /// rather than its frontier.
    pub(crate) fn hits_interior(&self, p: &[f64], tol: f64) -> Result<bool> {
        let (dd, t) = self.nearest(p)?;
        Ok(dd <= tol && t.iter().all(|&ti| (1e-6..=1.0 - 1e-6).contains(&ti)))
    }

    fn refine_distance(&self, p: &[f64], mut t: Vec<f64>) -> (f64, Vec<f64>) {
        let lo = 1e-12;
        let hi = 1.0 - 1e-12;
        let eval = |t: &[f64]| -> Option<(Vec<f64>, DMatrix<f64>)> {
            let seeds = seed_duals(t).ok()?;
            let mut out = Vec::new();
            self.chart_point(&seeds, &mut out).ok()?;
            let x: Vec<f64> = out.iter().map(|v| v.re).collect();
            Some((x, jacobian_from(&out, t.len())))
        };
        let Some((mut x, mut j)) = eval(&t) else {
            return (f64::INFINITY, t);
        };
        let mut cost = dist(&x, p);
        let mut lambda = 1e-3;
        for _ in 0..200 {
            let r = nalgebra::DVector::from_iterator(x.len(), x.iter().zip(p).map(|(a, b)| a - b));
            let jt = j.transpose();
            let mut h = &jt * &j;
            let g = &jt * &r;
            let scale = h.diagonal().max().max(1e-300);
            for i in 0..h.nrows() {
                h[(i, i)] += lambda * scale;
            }
            let Some(step) = h.lu().solve(&g) else { break };
            let cand: Vec<f64> = t
                .iter()
                .zip(step.iter())
                .map(|(ti, s)| (ti - s).clamp(lo, hi))
                .collect();
            match eval(&cand) {
                Some((cx, cj)) if dist(&cx, p) < cost => {
                    let improvement = cost - dist(&cx, p);
                    t = cand;
                    x = cx;
                    j = cj;
                    cost = dist(&x, p);
                    lambda = (lambda / 3.0).max(1e-15);
                    if improvement < 1e-16 * (1.0 + cost) {
                        break;
                    }
                }
                _ => {
                    lambda *= 4.0;
                    if lambda > 1e12 {
                        break;
                    }
                }
            }
        }
        (cost, t)
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn seed_duals(x: &[f64]) -> Result<Vec<Dual>> {
    if x.len() > DUAL_WIDTH {
        return Err(Error::InvalidCell(format!(
            "intrinsic dimension {} exceeds the supported {}",
            x.len(),
            DUAL_WIDTH
        )));
    }
    Ok(x.iter().enumerate().map(|(i, &v)| Dual::variable(v, i)).collect())
}

fn jacobian_from(out: &[Dual], d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(out.len(), d, |i, j| out[i].eps[j])
}

/// The canonical chart of a cell, validated for full rank.
#[derive(Clone, Copy, Debug)]
pub struct Parametrization<'a> {
    cell: &'a Cell,
}

impl<'a> Parametrization<'a> {
    pub fn dim(&self) -> usize {
        self.cell.dim()
    }

    pub fn ambient(&self) -> usize {
        self.cell.ambient()
    }

    pub fn cell(&self) -> &'a Cell {
        self.cell
    }

    /// The parameter domain, always the open unit box.
    pub fn domain(&self) -> Vec<(f64, f64)> {
        vec![(0.0, 1.0); self.dim()]
    }

    pub fn point(&self, t: &[f64]) -> Result<Vec<f64>> {
        self.check_arity(t)?;
        let mut out = Vec::with_capacity(self.ambient());
        self.cell.chart_point(t, &mut out)?;
        Ok(out)
    }

    /// `ambient × dim` Jacobian of the chart at `t`.
    pub fn jacobian(&self, t: &[f64]) -> Result<DMatrix<f64>> {
        self.check_arity(t)?;
        let seeds = seed_duals(t)?;
        let mut out = Vec::with_capacity(self.ambient());
        self.cell.chart_point(&seeds, &mut out)?;
        Ok(jacobian_from(&out, self.dim()))
    }

    /// `sqrt(det(JᵀJ))` at `t`.
    pub fn gram_sqrt(&self, t: &[f64]) -> Result<f64> {
        Ok(gram_sqrt(&self.jacobian(t)?))
    }

    fn check_arity(&self, t: &[f64]) -> Result<()> {
        if t.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "chart of dimension {} evaluated at {} parameters",
                self.dim(),
                t.len()
            )));
        }
        Ok(())
    }
}

pub(crate) fn gram_sqrt(j: &DMatrix<f64>) -> f64 {
    if j.ncols() == 0 {
        return 1.0;
    }
    let g = j.transpose() * j;
    g.determinant().max(0.0).sqrt()
}

/// Builds the canonical chart of `cell`, rejecting rank-deficient ones.
pub fn chart(cell: &Cell) -> Result<Parametrization<'_>> {
    let p = Parametrization { cell };
    let d = cell.dim();
    if d == 0 {
        return Ok(p);
    }
    for t in Cell::probe_points(d, 32, 0xc4a7) {
        let j = p.jacobian(&t)?;
        let sv = j.clone().svd(false, false).singular_values;
        let smax = sv.max();
        let smin = sv.min();
        if !(smin > 1e-10 * smax.max(1.0)) {
            return Err(Error::DegenerateCell(format!(
                "chart Jacobian has rank below {} at t = {:?}",
                d, t
            )));
        }
    }
    Ok(p)
}

/// A finite disjoint union of cells in a common ambient space.
#[derive(Clone, Debug)]
pub struct DefinableSet {
    name: String,
    ambient: usize,
    cells: Vec<Cell>,
    disjoint_declared: bool,
    definable: bool,
    complex_dim: Option<usize>,
}

impl DefinableSet {
    pub fn new(name: impl Into<String>, ambient: usize, cells: Vec<Cell>) -> Result<DefinableSet> {
        if let Some((i, c)) = cells.iter().enumerate().find(|(_, c)| c.ambient() != ambient) {
            return Err(Error::DimensionMismatch(format!(
                "cell {} lives in R^{}, set declared in R^{}",
                i,
                c.ambient(),
                ambient
            )));
        }
        Ok(DefinableSet {
            name: name.into(),
            ambient,
            cells,
            disjoint_declared: true,
            definable: true,
            complex_dim: None,
        })
    }

    /// Marks the set as not definable in any o-minimal structure (negative
    /// controls such as the Archimedean spiral).
    pub fn non_definable(mut self) -> Self {
        self.definable = false;
        self
    }

    /// Declares the set to be a complex-analytic subset of ℂᵐ of pure
    /// complex dimension `k`, encoded in ℝ^{2m}.
    pub fn with_complex_dim(mut self, k: usize) -> Self {
        self.complex_dim = Some(k);
        self
    }

    pub fn with_disjointness_declared(mut self, declared: bool) -> Self {
        self.disjoint_declared = declared;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn is_definable(&self) -> bool {
        self.definable
    }

    pub fn complex_dim(&self) -> Option<usize> {
        self.complex_dim
    }

    pub fn disjointness_declared(&self) -> bool {
        self.disjoint_declared
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Maximum cell dimension.
    pub fn dim(&self) -> Result<usize> {
        self.cells.iter().map(Cell::dim).max().ok_or(Error::EmptySet)
    }

    /// True iff `p` lies within `tol` of some cell.
    pub fn contains(&self, p: &[f64], tol: f64) -> Result<bool> {
        for c in &self.cells {
            if c.distance_to(p)? <= tol {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Samples every cell and checks that no sample lies on another cell.
    pub fn check_disjoint(&self, samples_per_cell: usize, seed: u64) -> Result<()> {
        for (i, c) in self.cells.iter().enumerate() {
            let param = chart(c)?;
            let probes = if c.dim() == 0 {
                vec![Vec::new()]
            } else {
                Cell::probe_points(c.dim(), samples_per_cell, seed ^ i as u64)
            };
            for t in probes {
                let Ok(x) = param.point(&t) else { continue };
                for (j, other) in self.cells.iter().enumerate() {
                    if i != j && other.hits_interior(&x, 1e-9)? {
                        return Err(Error::Overlap {
                            first: i,
                            second: j,
                            point: x,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// `λ·S`.
    pub fn scaled(&self, lambda: f64) -> Result<DefinableSet> {
        let cells = self
            .cells
            .iter()
            .map(|c| c.scaled(lambda))
            .collect::<Result<Vec<_>>>()?;
        Ok(DefinableSet {
            cells,
            name: format!("{}*{}", self.name, lambda),
            ..self.clone()
        })
    }

    /// `Q·S` for a linear map `Q`; orthogonal maps preserve every volume.
    pub fn transformed(&self, q: &DMatrix<f64>) -> Result<DefinableSet> {
        let cells = self
            .cells
            .iter()
            .map(|c| c.transformed(q))
            .collect::<Result<Vec<_>>>()?;
        Ok(DefinableSet {
            cells,
            name: format!("{}-transformed", self.name),
            ..self.clone()
        })
    }
}

/// Dimension of a single cell.
pub fn cell_dim(c: &Cell) -> usize {
    c.dim()
}

/// Dimension of a set: the maximum over its cells.
pub fn set_dim(s: &DefinableSet) -> Result<usize> {
    s.dim()
}

/// Whether `p` lies within `tol` of `s`.
pub fn membership_test(s: &DefinableSet, p: &[f64], tol: f64) -> Result<bool> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("membership tolerance must be positive".into()));
    }
    s.contains(p, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(text: &str, vars: &[&str]) -> Expression {
        Expression::parse(text, vars).unwrap()
    }

    fn unit_interval() -> Cell {
        Cell::interval(0.0, 1.0).unwrap()
    }

    fn circle() -> DefinableSet {
        let arc = |sign: &str| {
            Cell::graph(
                Cell::interval(-1.0, 1.0).unwrap(),
                vec![e(&format!("{}sqrt(1 - x^2)", sign), &["x"])],
            )
            .unwrap()
        };
        DefinableSet::new(
            "circle",
            2,
            vec![arc(""), arc("-"), Cell::point(&[-1.0, 0.0]), Cell::point(&[1.0, 0.0])],
        )
        .unwrap()
    }

    #[test]
    fn dimensions_follow_the_construction() {
        assert_eq!(cell_dim(&Cell::Point0), 0);
        assert_eq!(cell_dim(&unit_interval()), 1);
        let square = Cell::band(unit_interval(), Some(e("0", &["x"])), Some(e("1", &["x"]))).unwrap();
        assert_eq!(square.dim(), 2);
        let g = Cell::graph(square, vec![e("x*y", &["x", "y"])]).unwrap();
        assert_eq!(g.dim(), 2);
        assert_eq!(g.ambient(), 3);
    }

    #[test]
    fn set_dimension_is_the_maximum() {
        let s = DefinableSet::new("pt+seg", 1, vec![Cell::point(&[5.0]), unit_interval()]).unwrap();
        assert_eq!(set_dim(&s).unwrap(), 1);
        let p = DefinableSet::new("pt", 3, vec![Cell::point(&[1.0, 2.0, 3.0])]).unwrap();
        assert_eq!(set_dim(&p).unwrap(), 0);
        assert_eq!(set_dim(&circle()).unwrap(), 1);
        let empty = DefinableSet::new("empty", 2, vec![]).unwrap();
        assert!(matches!(set_dim(&empty), Err(Error::EmptySet)));
    }

    #[test]
    fn crossing_band_bounds_are_rejected() {
        let r = Cell::band(unit_interval(), Some(e("x", &["x"])), Some(e("0.5", &["x"])));
        assert!(matches!(r, Err(Error::InvalidCell(_))));
    }

    #[test]
    fn arity_mismatch_is_rejected() {
        let r = Cell::graph(unit_interval(), vec![e("x*y", &["x", "y"])]);
        assert!(matches!(r, Err(Error::InvalidCell(_))));
    }

    #[test]
    fn interval_and_diagonal_charts() {
        let seg = unit_interval();
        let p = chart(&seg).unwrap();
        assert_eq!(p.point(&[0.3]).unwrap(), vec![0.3]);
        let diag = Cell::graph(unit_interval(), vec![e("x", &["x"])]).unwrap();
        let p = chart(&diag).unwrap();
        assert_eq!(p.point(&[0.25]).unwrap(), vec![0.25, 0.25]);
        assert!((p.gram_sqrt(&[0.7]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn band_under_parabola_has_full_rank() {
        let c = Cell::band(
            Cell::interval(-1.0, 1.0).unwrap(),
            Some(e("0", &["x"])),
            Some(e("1 - x^2", &["x"])),
        )
        .unwrap();
        let p = chart(&c).unwrap();
        for t in Cell::probe_points(2, 100, 7) {
            let x = p.point(&t).unwrap();
            let xx = -1.0 + 2.0 * t[0];
            assert!((x[0] - xx).abs() < 1e-15);
            assert!((x[1] - t[1] * (1.0 - xx * xx)).abs() < 1e-15);
            let j = p.jacobian(&t).unwrap();
            assert_eq!(j.rank(1e-12), 2);
        }
    }

    #[test]
    fn constant_graph_over_a_point_is_degenerate_free() {
        assert!(chart(&Cell::point(&[1.0, 2.0])).is_ok());
    }

    #[test]
    fn rank_deficient_chart_is_rejected() {
        // both coordinates depend on t only through t^2 + ... along a line
        let patch = ChartPatch::new(
            vec!["a".into(), "b".into()],
            vec![ParamRange::new(0.0, 1.0), ParamRange::new(0.0, 1.0)],
            vec![e("a + b", &["a", "b"]), e("2*(a + b)", &["a", "b"])],
        )
        .unwrap();
        assert!(matches!(chart(&Cell::Chart(patch)), Err(Error::DegenerateCell(_))));
    }

    #[test]
    fn membership() {
        let s = circle();
        assert!(membership_test(&s, &[1.0, 0.0], 1e-9).unwrap());
        assert!(!membership_test(&s, &[0.0, 0.0], 1e-3).unwrap());
        let a = 0.3f64;
        assert!(membership_test(&s, &[a.cos(), -a.sin()], 1e-9).unwrap());
        let parabola = DefinableSet::new(
            "parabola",
            2,
            vec![Cell::graph(Cell::interval(f64::NEG_INFINITY, f64::INFINITY).unwrap(), vec![e("x^2", &["x"])]).unwrap()],
        )
        .unwrap();
        assert!(membership_test(&parabola, &[2.0, 4.0], 1e-9).unwrap());
        assert!(!membership_test(&parabola, &[2.0, 4.1], 1e-3).unwrap());
    }

    #[test]
    fn circle_cells_are_disjoint() {
        circle().check_disjoint(50, 1).unwrap();
        let dup = DefinableSet::new("dup", 1, vec![unit_interval(), Cell::point(&[0.5])]).unwrap();
        assert!(matches!(dup.check_disjoint(20, 1), Err(Error::Overlap { .. })));
    }

    #[test]
    fn infinite_band_chart_reaches_far_out_monotonically() {
        let line = Cell::interval(f64::NEG_INFINITY, f64::INFINITY).unwrap();
        let half = Cell::interval(2.0, f64::INFINITY).unwrap();
        for c in [line, half] {
            let p = chart(&c).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for k in 1..50 {
                let t = 1.0 - 0.5f64.powi(k);
                let y = p.point(&[t]).unwrap()[0];
                assert!(y > prev);
                prev = y;
            }
            assert!(prev > 1e14);
        }
    }

    #[test]
    fn symbolic_chart_matches_numeric_chart() {
        let disk = Cell::band(
            Cell::interval(-1.0, 1.0).unwrap(),
            Some(e("-sqrt(1 - x^2)", &["x"])),
            Some(e("sqrt(1 - x^2)", &["x"])),
        )
        .unwrap();
        let cap = Cell::graph(disk, vec![e("sqrt(1 - x^2 - y^2)", &["x", "y"])]).unwrap();
        let sym = cap.chart_expressions().unwrap();
        let p = chart(&cap).unwrap();
        for t in Cell::probe_points(2, 20, 3) {
            let x = p.point(&t).unwrap();
            for (k, ek) in sym.iter().enumerate() {
                assert!((ek.eval(&t).unwrap() - x[k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn scaling_maps_points() {
        let s = circle().scaled(3.0).unwrap();
        assert!(membership_test(&s, &[0.0, 3.0], 1e-9).unwrap());
        assert!(membership_test(&s, &[-3.0, 0.0], 1e-9).unwrap());
        assert!(!membership_test(&s, &[0.0, 1.0], 1e-3).unwrap());
    }

    #[test]
    fn rotation_maps_points() {
        let (c, s) = (0.6, 0.8);
        let q = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let rotated = circle().transformed(&q).unwrap();
        assert!(rotated.cells()[0].as_chart_patch().is_some());
        assert!(membership_test(&rotated, &[c, s], 1e-9).unwrap());
        assert!(membership_test(&rotated, &[0.0, 1.0], 1e-9).unwrap());
    }
}
