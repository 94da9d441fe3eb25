//! JSON set descriptions.
//!
//! ```json
//! {
//!   "name": "disk-graph",
//!   "ambient": 3,
//!   "cells": [
//!     { "kind": "graph",
//!       "vars": ["x", "y"],
//!       "f": ["x^2 + y^2"],
//!       "base": { "kind": "band", "vars": ["x"], "lower": "-sqrt(1 - x^2)", "upper": "sqrt(1 - x^2)",
//!                 "base": { "kind": "band", "vars": [], "lower": "-1", "upper": "1", "base": "point0" } } }
//!   ]
//! }
//! ```
//!
//! Cell kinds are `point` (`coords`), `graph` (`base`, `vars`, `f`), `band`
//! (`base`, `vars`, `lower`, `upper`, where a bound may be `"-inf"`/`"+inf"`)
//! and `chart` (`params`, `domain`, `coords`, optional `radial`). `vars`
//! names the coordinates of the base, in order. Optional top-level keys:
//! `definable` (default true), `complex_dim`, `disjoint` (default false:
//! loaders spot-check disjointness).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cells::{Cell, ChartPatch, DefinableSet, ParamRange};
use crate::error::{Error, Result};
use crate::expr::Expression;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetJson {
    pub name: String,
    pub ambient: usize,
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub definable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complex_dim: Option<usize>,
    #[serde(default)]
    pub disjoint: bool,
    pub cells: Vec<CellJson>,
}

fn yes() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CellJson {
    Point {
        coords: Vec<f64>,
    },
    Graph {
        base: BaseJson,
        #[serde(default)]
        vars: Vec<String>,
        f: Vec<String>,
    },
    Band {
        base: BaseJson,
        #[serde(default)]
        vars: Vec<String>,
        #[serde(default = "minus_inf")]
        lower: String,
        #[serde(default = "plus_inf")]
        upper: String,
    },
    Chart {
        params: Vec<String>,
        domain: Vec<[Limit; 2]>,
        coords: Vec<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        radial: Vec<bool>,
    },
}

fn minus_inf() -> String {
    "-inf".into()
}

fn plus_inf() -> String {
    "+inf".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BaseJson {
    /// Only `"point0"` is accepted.
    Named(String),
    Cell(Box<CellJson>),
}

/// A finite number or `"-inf"` / `"+inf"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Limit {
    Finite(f64),
    Named(InfName),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum InfName {
    #[serde(rename = "-inf")]
    Minus,
    #[serde(rename = "+inf")]
    Plus,
}

impl Limit {
    fn value(self) -> f64 {
        match self {
            Limit::Finite(v) => v,
            Limit::Named(InfName::Minus) => f64::NEG_INFINITY,
            Limit::Named(InfName::Plus) => f64::INFINITY,
        }
    }

    fn from_value(v: f64) -> Limit {
        if v == f64::NEG_INFINITY {
            Limit::Named(InfName::Minus)
        } else if v == f64::INFINITY {
            Limit::Named(InfName::Plus)
        } else {
            Limit::Finite(v)
        }
    }
}

fn default_vars(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("x{}", i)).collect()
}

fn base_cell(b: &BaseJson) -> Result<Cell> {
    match b {
        BaseJson::Named(s) if s == "point0" => Ok(Cell::Point0),
        BaseJson::Named(s) => Err(Error::InvalidInput(format!("unknown base '{}', expected \"point0\" or a cell", s))),
        BaseJson::Cell(c) => c.to_cell(),
    }
}

fn vars_for(base: &Cell, vars: &[String]) -> Result<Vec<String>> {
    let m = base.ambient();
    if vars.is_empty() {
        return Ok(default_vars(m));
    }
    if vars.len() != m {
        return Err(Error::InvalidInput(format!(
            "{} variable names given for a base in R^{}",
            vars.len(),
            m
        )));
    }
    Ok(vars.to_vec())
}

impl CellJson {
    pub fn to_cell(&self) -> Result<Cell> {
        match self {
            CellJson::Point { coords } => Ok(Cell::point(coords)),
            CellJson::Graph { base, vars, f } => {
                let base = base_cell(base)?;
                let vars = vars_for(&base, vars)?;
                let f = f
                    .iter()
                    .map(|s| Expression::parse(s, &vars))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                Cell::graph(base, f)
            }
            CellJson::Band { base, vars, lower, upper } => {
                let base = base_cell(base)?;
                let vars = vars_for(&base, vars)?;
                let bound = |s: &str, inf: &str| -> Result<Option<Expression>> {
                    if s.trim() == inf {
                        Ok(None)
                    } else {
                        Ok(Some(Expression::parse(s, &vars)?))
                    }
                };
                Cell::band(base, bound(lower, "-inf")?, bound(upper, "+inf")?)
            }
            CellJson::Chart { params, domain, coords, radial } => {
                if !radial.is_empty() && radial.len() != params.len() {
                    return Err(Error::InvalidInput("radial flags must match the parameters".into()));
                }
                if domain.len() != params.len() {
                    return Err(Error::InvalidInput("one domain interval per parameter expected".into()));
                }
                let ranges = domain
                    .iter()
                    .enumerate()
                    .map(|(i, [lo, hi])| ParamRange {
                        lo: lo.value(),
                        hi: hi.value(),
                        radial: radial.get(i).copied().unwrap_or(false),
                    })
                    .collect();
                let coords = coords
                    .iter()
                    .map(|s| Expression::parse(s, params))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                Ok(Cell::chart_patch(ChartPatch::new(params.clone(), ranges, coords)?))
            }
        }
    }

    pub fn from_cell(c: &Cell) -> Result<CellJson> {
        match c {
            Cell::Point0 => Err(Error::InvalidInput("the point of R^0 is written as the base \"point0\"".into())),
            Cell::Graph(_) => {
                let base = c.base().expect("graph has a base");
                let f = c.graph_functions().expect("graph has functions");
                if matches!(base, Cell::Point0) && f.iter().all(Expression::is_constant) {
                    let coords = f.iter().map(|e| e.eval(&[])).collect::<std::result::Result<_, _>>()?;
                    return Ok(CellJson::Point { coords });
                }
                Ok(CellJson::Graph {
                    base: base_json(base)?,
                    vars: f[0].variables().to_vec(),
                    f: f.iter().map(|e| e.to_string()).collect(),
                })
            }
            Cell::Band(_) => {
                let base = c.base().expect("band has a base");
                let (lo, hi) = c.band_bounds().expect("band has bounds");
                let vars = lo
                    .or(hi)
                    .map(|e| e.variables().to_vec())
                    .unwrap_or_else(|| default_vars(base.ambient()));
                Ok(CellJson::Band {
                    base: base_json(base)?,
                    vars,
                    lower: lo.map_or_else(minus_inf, |e| e.to_string()),
                    upper: hi.map_or_else(plus_inf, |e| e.to_string()),
                })
            }
            Cell::Chart(p) => Ok(CellJson::Chart {
                params: p.params().to_vec(),
                domain: p
                    .ranges()
                    .iter()
                    .map(|r| [Limit::from_value(r.lo), Limit::from_value(r.hi)])
                    .collect(),
                coords: p.coords().iter().map(|e| e.to_string()).collect(),
                radial: if p.ranges().iter().any(|r| r.radial) {
                    p.ranges().iter().map(|r| r.radial).collect()
                } else {
                    Vec::new()
                },
            }),
        }
    }
}

fn base_json(c: &Cell) -> Result<BaseJson> {
    match c {
        Cell::Point0 => Ok(BaseJson::Named("point0".into())),
        other => Ok(BaseJson::Cell(Box::new(CellJson::from_cell(other)?))),
    }
}

impl SetJson {
    pub fn to_set(&self) -> Result<DefinableSet> {
        let cells = self.cells.iter().map(CellJson::to_cell).collect::<Result<Vec<_>>>()?;
        if cells.is_empty() {
            return Err(Error::EmptySet);
        }
        let mut s = DefinableSet::new(self.name.clone(), self.ambient, cells)?
            .with_disjointness_declared(self.disjoint);
        if !self.definable {
            s = s.non_definable();
        }
        if let Some(k) = self.complex_dim {
            s = s.with_complex_dim(k);
        }
        Ok(s)
    }

    pub fn from_set(s: &DefinableSet) -> Result<SetJson> {
        Ok(SetJson {
            name: s.name().to_string(),
            ambient: s.ambient(),
            definable: s.is_definable(),
            complex_dim: s.complex_dim(),
            disjoint: s.disjointness_declared(),
            cells: s.cells().iter().map(CellJson::from_cell).collect::<Result<_>>()?,
        })
    }
}

/// Parses a set description.
pub fn parse_set(text: &str) -> Result<DefinableSet> {
    let j: SetJson = serde_json::from_str(text)?;
    j.to_set()
}

pub fn read_set(path: impl AsRef<Path>) -> Result<DefinableSet> {
    parse_set(&std::fs::read_to_string(path)?)
}

/// Pretty-printed JSON description of `s`.
pub fn export_set(s: &DefinableSet) -> Result<String> {
    Ok(serde_json::to_string_pretty(&SetJson::from_set(s)?)?)
}
