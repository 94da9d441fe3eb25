//! Built-in sets with known behavior.

use crate::cells::{Cell, ChartPatch, DefinableSet, ParamRange};
use crate::error::{Error, Result};
use crate::expr::Expression;

/// A named set together with what measuring it should show.
#[derive(Clone, Copy, Debug)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub expected: &'static str,
    /// Default radii `(min, max)` for growth commands.
    pub radii: (f64, f64),
    build: fn() -> Result<DefinableSet>,
}

impl CatalogEntry {
    pub fn build(&self) -> Result<DefinableSet> {
        (self.build)()
    }
}

fn e(text: &str, vars: &[&str]) -> Result<Expression> {
    Ok(Expression::parse(text, vars)?)
}

fn real_line() -> Result<Cell> {
    Cell::interval(f64::NEG_INFINITY, f64::INFINITY)
}

/// `{(x, y) : x ∈ (a, b), lower(x) < y < upper(x)}`.
fn planar_band(a: f64, b: f64, lower: &str, upper: &str) -> Result<Cell> {
    Cell::band(Cell::interval(a, b)?, Some(e(lower, &["x"])?), Some(e(upper, &["x"])?))
}

fn whole_plane() -> Result<Cell> {
    Cell::band(real_line()?, None, None)
}

fn segment() -> Result<DefinableSet> {
    DefinableSet::new(
        "segment",
        2,
        vec![
            Cell::point(&[0.0, 0.0]),
            Cell::graph(Cell::interval(0.0, 0.6)?, vec![e("4*x/3", &["x"])?])?,
            Cell::point(&[0.6, 0.8]),
        ],
    )
}

fn line() -> Result<DefinableSet> {
    DefinableSet::new("line", 2, vec![Cell::graph(real_line()?, vec![e("x/2", &["x"])?])?])
}

fn circle() -> Result<DefinableSet> {
    let arc = |sign: &str| -> Result<Cell> {
        Cell::graph(Cell::interval(-1.0, 1.0)?, vec![e(&format!("{}sqrt(1 - x^2)", sign), &["x"])?])
    };
    DefinableSet::new(
        "circle",
        2,
        vec![arc("")?, arc("-")?, Cell::point(&[1.0, 0.0]), Cell::point(&[-1.0, 0.0])],
    )
}

fn sphere2() -> Result<DefinableSet> {
    let xy = ["x", "y"];
    let hemi = |sign: &str| -> Result<Cell> {
        Cell::graph(
            planar_band(-1.0, 1.0, "-sqrt(1 - x^2)", "sqrt(1 - x^2)")?,
            vec![e(&format!("{}sqrt(1 - x^2 - y^2)", sign), &xy)?],
        )
    };
    let equator = |sign: &str| -> Result<Cell> {
        Cell::graph(
            Cell::interval(-1.0, 1.0)?,
            vec![e(&format!("{}sqrt(1 - x^2)", sign), &["x"])?, e("0", &["x"])?],
        )
    };
    DefinableSet::new(
        "sphere2",
        3,
        vec![
            hemi("")?,
            hemi("-")?,
            equator("")?,
            equator("-")?,
            Cell::point(&[1.0, 0.0, 0.0]),
            Cell::point(&[-1.0, 0.0, 0.0]),
        ],
    )
}

fn parabola() -> Result<DefinableSet> {
    DefinableSet::new("parabola", 2, vec![Cell::graph(real_line()?, vec![e("x^2", &["x"])?])?])
}

fn parabola_arc() -> Result<DefinableSet> {
    DefinableSet::new(
        "parabola-arc",
        2,
        vec![
            Cell::point(&[-1.0, 1.0]),
            Cell::graph(Cell::interval(-1.0, 1.0)?, vec![e("x^2", &["x"])?])?,
            Cell::point(&[1.0, 1.0]),
        ],
    )
}

fn paraboloid() -> Result<DefinableSet> {
    DefinableSet::new(
        "paraboloid",
        3,
        vec![Cell::graph(whole_plane()?, vec![e("x^2 + y^2", &["x", "y"])?])?],
    )
}

/// `ℝ^d × {0}` inside `ℝⁿ`.
pub fn plane(d: usize, n: usize) -> Result<DefinableSet> {
    if d == 0 || d > n {
        return Err(Error::InvalidInput(format!("plane needs 1 <= d <= n, got d={} n={}", d, n)));
    }
    let mut c = Cell::Point0;
    for _ in 0..d {
        c = Cell::band(c, None, None)?;
    }
    if n > d {
        let vars: Vec<String> = (1..=d).map(|i| format!("x{}", i)).collect();
        let zeros = (d..n).map(|_| Expression::constant(0.0, &vars)).collect();
        c = Cell::graph(c, zeros)?;
    }
    DefinableSet::new(format!("plane({},{})", d, n), n, vec![c])
}

fn plane23() -> Result<DefinableSet> {
    plane(2, 3)
}

/// The spiral `ρ = θ`, `θ > 0`, as a chart-only set. It meets rays in
/// infinitely many points and is not definable in any o-minimal structure.
pub fn archimedean_spiral() -> Result<DefinableSet> {
    let th = ["theta"];
    let patch = ChartPatch::new(
        vec!["theta".into()],
        vec![ParamRange::radial(0.0, f64::INFINITY)],
        vec![e("theta*cos(theta)", &th)?, e("theta*sin(theta)", &th)?],
    )?;
    Ok(DefinableSet::new("archimedean-spiral", 2, vec![Cell::chart_patch(patch)])?.non_definable())
}

/// Graph `{(z, w)} ⊂ ℂ² ≅ ℝ⁴` of `w = f(z)` with `f` given by real and
/// imaginary parts in `x = Re z`, `y = Im z`.
fn complex_graph(name: &str, re: &str, im: &str) -> Result<DefinableSet> {
    let xy = ["x", "y"];
    Ok(DefinableSet::new(name, 4, vec![Cell::graph(whole_plane()?, vec![e(re, &xy)?, e(im, &xy)?])?])?
        .with_complex_dim(1))
}

fn complex_line() -> Result<DefinableSet> {
    complex_graph("complex-line", "x - 0.5*y", "0.5*x + y")
}

fn complex_parabola() -> Result<DefinableSet> {
    complex_graph("complex-parabola", "x^2 - y^2", "2*x*y")
}

fn complex_exp() -> Result<DefinableSet> {
    Ok(complex_graph("complex-exp", "exp(x)*cos(y)", "exp(x)*sin(y)")?.non_definable())
}

fn points5() -> Result<DefinableSet> {
    DefinableSet::new(
        "points5",
        2,
        [[0.5, 0.0], [0.0, 1.5], [-2.0, 1.0], [3.0, -3.0], [-4.0, -5.0]]
            .iter()
            .map(|p| Cell::point(p))
            .collect(),
    )
}

fn lemma_flat() -> Result<DefinableSet> {
    DefinableSet::new(
        "lemma-flat",
        3,
        vec![Cell::graph(planar_band(0.0, 1.0, "0", "1")?, vec![e("0", &["x", "y"])?])?],
    )
}

fn lemma_slope() -> Result<DefinableSet> {
    DefinableSet::new(
        "lemma-slope",
        2,
        vec![Cell::graph(Cell::interval(0.0, 2.0)?, vec![e("sqrt(3)*x", &["x"])?])?],
    )
}

fn lemma_arc() -> Result<DefinableSet> {
    let h = 3f64.sqrt() / 2.0;
    DefinableSet::new(
        "lemma-arc",
        2,
        vec![Cell::graph(Cell::interval(-h, h)?, vec![e("sqrt(1 - x^2)", &["x"])?])?],
    )
}

fn lemma_cap() -> Result<DefinableSet> {
    DefinableSet::new(
        "lemma-cap",
        3,
        vec![Cell::graph(
            planar_band(-0.7, 0.7, "-sqrt(0.49 - x^2)", "sqrt(0.49 - x^2)")?,
            vec![e("sqrt(1 - x^2 - y^2)", &["x", "y"])?],
        )?],
    )
}

fn lemma_wave() -> Result<DefinableSet> {
    DefinableSet::new(
        "lemma-wave",
        3,
        vec![Cell::graph(planar_band(-3.0, 3.0, "-3", "3")?, vec![e("0.5*sin(x)*cos(y)", &["x", "y"])?])?],
    )
}

pub const ENTRIES: &[CatalogEntry] = &[
    CatalogEntry {
        name: "segment",
        description: "segment from (0,0) to (0.6,0.8) in R^2: two endpoints and an open graph cell",
        expected: "length 1; bounded",
        radii: (0.1, 10.0),
        build: segment,
    },
    CatalogEntry {
        name: "line",
        description: "the line y = x/2 in R^2",
        expected: "V(r) = 2r; alpha = 1",
        radii: (1.0, 100.0),
        build: line,
    },
    CatalogEntry {
        name: "circle",
        description: "unit circle: upper and lower arcs plus (1,0) and (-1,0)",
        expected: "V(r) = 2*pi once r > 1; bounded",
        radii: (0.1, 10.0),
        build: circle,
    },
    CatalogEntry {
        name: "sphere2",
        description: "unit sphere in R^3: two hemispheres, two equator arcs, two points",
        expected: "area 4*pi once r > 1; bounded",
        radii: (0.1, 10.0),
        build: sphere2,
    },
    CatalogEntry {
        name: "parabola",
        description: "the parabola y = x^2",
        expected: "arc length 2r + O(sqrt r); alpha -> 1",
        radii: (10.0, 1000.0),
        build: parabola,
    },
    CatalogEntry {
        name: "parabola-arc",
        description: "the arc y = x^2, -1 <= x <= 1",
        expected: "length sqrt(5) + asinh(2)/2 once r > sqrt(2); bounded",
        radii: (0.1, 10.0),
        build: parabola_arc,
    },
    CatalogEntry {
        name: "paraboloid",
        description: "the paraboloid z = x^2 + y^2",
        expected: "area grows like r^1.5; bounded",
        radii: (1.0, 100.0),
        build: paraboloid,
    },
    CatalogEntry {
        name: "plane",
        description: "R^2 x {0} in R^3; plane(d,n) selects other dimensions",
        expected: "V(r) = vol_d of the d-ball of radius r; alpha = d",
        radii: (1.0, 100.0),
        build: plane23,
    },
    CatalogEntry {
        name: "archimedean-spiral",
        description: "the spiral rho = theta, theta > 0 (not definable)",
        expected: "arc length ~ r^2/2; violates O(r)",
        radii: (1.0, 100.0),
        build: archimedean_spiral,
    },
    CatalogEntry {
        name: "complex-line",
        description: "the complex line w = (1 + i/2) z in C^2",
        expected: "V(r) = pi r^2; algebraic-consistent",
        radii: (5.0, 50.0),
        build: complex_line,
    },
    CatalogEntry {
        name: "complex-parabola",
        description: "the complex parabola w = z^2 in C^2",
        expected: "V(r)/r^2 -> 2*pi; algebraic-consistent",
        radii: (5.0, 50.0),
        build: complex_parabola,
    },
    CatalogEntry {
        name: "complex-exp",
        description: "the graph of w = exp(z) in C^2 (not algebraic)",
        expected: "V(r) grows like r^3; transcendental",
        radii: (5.0, 50.0),
        build: complex_exp,
    },
    CatalogEntry {
        name: "points5",
        description: "five points in R^2",
        expected: "counting measure; 5 once r > 6.5",
        radii: (1.0, 100.0),
        build: points5,
    },
    CatalogEntry {
        name: "lemma-flat",
        description: "f = 0 over the unit square",
        expected: "projection ratio 1",
        radii: (0.1, 10.0),
        build: lemma_flat,
    },
    CatalogEntry {
        name: "lemma-slope",
        description: "f(x) = sqrt(3) x over (0, 2), tilt exactly tau_1",
        expected: "projection ratio 2",
        radii: (0.1, 10.0),
        build: lemma_slope,
    },
    CatalogEntry {
        name: "lemma-arc",
        description: "circular arc over |x| < sin 60 degrees",
        expected: "projection ratio at most 2",
        radii: (0.1, 10.0),
        build: lemma_arc,
    },
    CatalogEntry {
        name: "lemma-cap",
        description: "spherical cap over the disk of radius 0.7",
        expected: "projection ratio at most 2",
        radii: (0.1, 10.0),
        build: lemma_cap,
    },
    CatalogEntry {
        name: "lemma-wave",
        description: "f = sin(x) cos(y) / 2 over (-3, 3)^2",
        expected: "projection ratio at most 2",
        radii: (0.1, 10.0),
        build: lemma_wave,
    },
];

/// Catalog names whose single top cell is a graph for the projection bound.
pub const LEMMA_SUITE: &[&str] = &["lemma-flat", "lemma-slope", "lemma-arc", "lemma-cap", "lemma-wave"];

pub fn entry(name: &str) -> Option<&'static CatalogEntry> {
    let key = if name.starts_with("plane(") { "plane" } else { name };
    ENTRIES.iter().find(|e| e.name == key)
}

/// Looks up and builds a catalog set. `plane(d,n)` is accepted.
pub fn lookup(name: &str) -> Result<DefinableSet> {
    if let Some(args) = name.strip_prefix("plane(").and_then(|s| s.strip_suffix(')')) {
        let parts: Vec<&str> = args.split(',').map(str::trim).collect();
        if let [d, n] = parts[..] {
            if let (Ok(d), Ok(n)) = (d.parse(), n.parse()) {
                return plane(d, n);
            }
        }
        return Err(Error::InvalidInput(format!("cannot read plane dimensions from '{}'", name)));
    }
    entry(name)
        .ok_or_else(|| Error::InvalidInput(format!("no catalog entry named '{}'", name)))?
        .build()
}
