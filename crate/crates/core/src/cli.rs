//! Command-line front end.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical failure, 4 a bound that
//! must hold for definable sets was violated.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::catalog;
use crate::cells::DefinableSet;
use crate::error::{Error, Result};
use crate::grassmann::{cover_grassmannian, FrameJson, Plane};
use crate::growth::{
    check_growth_bound_window, fit_exponent, geometric_radii, growth_curve, stoll_classify, verify_projection_bound,
    GrowthCurve, GrowthSample, DEFAULT_WINDOW,
};
use crate::hausdorff::{covering_measure, set_volume_in_ball, CoveringConfig, QuadratureConfig, QuadratureMode};
use crate::setfile;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_VERIFICATION: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "tamevol", version, about = "Volumes of definable sets inside balls")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// RNG seed; equal seeds give byte-identical output.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Quadrature samples per cell.
    #[arg(long, global = true, default_value_t = 1 << 16)]
    samples: usize,
    #[arg(long, global = true, value_enum, default_value_t = Mode::Mc)]
    mode: Mode,
    /// Write the curve or table as CSV here instead of stdout.
    #[arg(long, global = true)]
    out_csv: Option<PathBuf>,
    /// Write the JSON result here instead of stdout.
    #[arg(long, global = true)]
    out_json: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Mc,
    Grid,
}

#[derive(Debug, Args)]
struct Input {
    /// Built-in set; see `tamevol examples`.
    #[arg(long, conflicts_with = "file")]
    catalog: Option<String>,
    /// JSON set description.
    #[arg(long)]
    file: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RadiiArgs {
    #[arg(long)]
    r_min: Option<f64>,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long, default_value_t = 16)]
    r_count: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the dimension of a set.
    Dim {
        #[command(flatten)]
        input: Input,
    },
    /// vol_d of the set inside B(r).
    Volume {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 10.0)]
        r: f64,
        /// Measure dimension (default: the set's dimension).
        #[arg(long)]
        d: Option<usize>,
        /// Use the covering estimator with cubes of this diameter.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Growth curve and O(r^d) verdict.
    Growth {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        radii: RadiiArgs,
        /// Tail fraction used by the fit.
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: f64,
    },
    /// Fit the growth exponent of a set or of a curve CSV.
    Fit {
        #[command(flatten)]
        input: Input,
        /// Curve with columns r, volume, error_bound[, ratio_to_r_d].
        #[arg(long, conflicts_with_all = ["catalog", "file"])]
        csv: Option<PathBuf>,
        #[command(flatten)]
        radii: RadiiArgs,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: f64,
    },
    /// Algebraicity verdict for a complex-analytic graph.
    Stoll {
        #[command(flatten)]
        input: Input,
        /// Complex dimension (default: the set's metadata).
        #[arg(long)]
        d_complex: Option<usize>,
        #[command(flatten)]
        radii: RadiiArgs,
    },
    /// Compare a graph cell with its projection to the base plane.
    LemmaCheck {
        #[command(flatten)]
        input: Input,
        /// Tilt bound (default: sqrt(4^(1/d) - 1)).
        #[arg(long)]
        tau: Option<f64>,
        #[command(flatten)]
        radii: RadiiArgs,
    },
    /// Cover Gr(d, n) by neighborhoods of tilt at most tau.
    Cover {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        tau: f64,
    },
    /// List the built-in sets.
    Examples,
}

struct Ctx<'a> {
    cli: &'a Cli,
    out: &'a mut Vec<u8>,
}

impl Ctx<'_> {
    fn quad(&self) -> QuadratureConfig {
        QuadratureConfig {
            samples: self.cli.samples,
            strata_per_axis: None,
            seed: self.cli.seed,
            mode: match self.cli.mode {
                Mode::Mc => QuadratureMode::Mc,
                Mode::Grid => QuadratureMode::Grid,
            },
        }
    }

    fn emit_csv(&mut self, text: &str) -> Result<()> {
        match &self.cli.out_csv {
            Some(p) => std::fs::write(p, text)?,
            None => self.out.write_all(text.as_bytes())?,
        }
        Ok(())
    }

    fn emit_json<T: Serialize>(&mut self, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        match &self.cli.out_json {
            Some(p) => std::fs::write(p, text)?,
            None => self.out.write_all(text.as_bytes())?,
        }
        Ok(())
    }
}

fn load(input: &Input, seed: u64) -> Result<DefinableSet> {
    match (&input.catalog, &input.file) {
        (Some(name), None) => catalog::lookup(name),
        (None, Some(path)) => {
            let s = setfile::read_set(path)?;
            if !s.disjointness_declared() {
                s.check_disjoint(32, seed)?;
            }
            Ok(s)
        }
        _ => Err(Error::InvalidInput("give exactly one of --catalog or --file".into())),
    }
}

fn radii_for(args: &RadiiArgs, input: &Input) -> Result<Vec<f64>> {
    let (dmin, dmax) = input
        .catalog
        .as_deref()
        .and_then(catalog::entry)
        .map_or((1.0, 100.0), |e| e.radii);
    geometric_radii(args.r_min.unwrap_or(dmin), args.r_max.unwrap_or(dmax), args.r_count)
}

fn curve_csv(g: &GrowthCurve) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["r", "volume", "error_bound", "ratio_to_r_d"])?;
    for s in &g.samples {
        w.write_record([
            s.r.to_string(),
            s.volume.to_string(),
            s.error_bound.to_string(),
            s.ratio(g.d).to_string(),
        ])?;
    }
    into_string(w)
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn read_curve_csv(path: &Path) -> Result<Vec<GrowthSample>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::InvalidInput(format!("row {:?} has too few columns", rec)))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("bad number in {:?}: {}", rec, e)))
        };
        out.push(GrowthSample {
            r: num(0)?,
            volume: num(1)?,
            error_bound: num(2).unwrap_or(0.0),
        });
    }
    Ok(out)
}

#[derive(Serialize)]
struct VolumeJson<'a> {
    name: &'a str,
    d: usize,
    r: f64,
    value: f64,
    error_bound: f64,
    method: crate::hausdorff::Method,
}

#[derive(Serialize)]
struct CoverJson {
    d: usize,
    n: usize,
    tau: f64,
    verified_coverage: f64,
    verify_size: usize,
    centers: Vec<FrameJson>,
}

fn execute(ctx: &mut Ctx<'_>) -> Result<i32> {
    let cli = ctx.cli;
    match &cli.command {
        Command::Dim { input } => {
            let s = load(input, cli.seed)?;
            writeln!(ctx.out, "{}", s.dim()?)?;
            Ok(EXIT_OK)
        }
        Command::Volume { input, r, d, eps } => {
            let s = load(input, cli.seed)?;
            let d = match d {
                Some(d) => *d,
                None => s.dim()?,
            };
            let est = match eps {
                Some(eps) => covering_measure(&s, d as f64, *eps, *r, &CoveringConfig::default())?,
                None => set_volume_in_ball(&s, d, *r, &ctx.quad())?,
            };
            let j = VolumeJson {
                name: s.name(),
                d,
                r: *r,
                value: est.value,
                error_bound: est.error_bound,
                method: est.method,
            };
            if cli.out_json.is_some() {
                writeln!(ctx.out, "{} ± {}", est.value, est.error_bound)?;
            }
            ctx.emit_json(&j)?;
            Ok(EXIT_OK)
        }
        Command::Growth { input, radii, window } => {
            let s = load(input, cli.seed)?;
            let radii = radii_for(radii, input)?;
            let g = growth_curve(&s, &radii, &ctx.quad())?;
            let v = check_growth_bound_window(&g, *window)?;
            ctx.emit_csv(&curve_csv(&g)?)?;
            ctx.emit_json(&v)?;
            Ok(if !v.bounded && s.is_definable() { EXIT_VERIFICATION } else { EXIT_OK })
        }
        Command::Fit { input, csv, radii, window } => {
            let g = match csv {
                Some(path) => GrowthCurve {
                    name: path.display().to_string(),
                    d: 0,
                    samples: read_curve_csv(path)?,
                },
                None => {
                    let s = load(input, cli.seed)?;
                    growth_curve(&s, &radii_for(radii, input)?, &ctx.quad())?
                }
            };
            let fit = fit_exponent(&g, *window)?;
            ctx.emit_json(&fit)?;
            Ok(EXIT_OK)
        }
        Command::Stoll { input, d_complex, radii } => {
            let s = load(input, cli.seed)?;
            let k = d_complex
                .or(s.complex_dim())
                .ok_or_else(|| Error::InvalidInput("complex dimension unknown; pass --d-complex".into()))?;
            let v = stoll_classify(&s, k, &radii_for(radii, input)?, &ctx.quad())?;
            ctx.emit_csv(&curve_csv(&v.curve)?)?;
            #[derive(Serialize)]
            struct StollJson<'a> {
                #[serde(flatten)]
                growth: &'a crate::growth::GrowthVerdict,
                d_complex: usize,
                verdict: crate::growth::StollClass,
            }
            ctx.emit_json(&StollJson {
                growth: &v.growth,
                d_complex: k,
                verdict: v.verdict,
            })?;
            let broken = s.is_definable() && v.verdict == crate::growth::StollClass::Transcendental;
            Ok(if broken { EXIT_VERIFICATION } else { EXIT_OK })
        }
        Command::LemmaCheck { input, tau, radii } => {
            let s = load(input, cli.seed)?;
            let d = s.dim()?;
            let top: Vec<_> = s.cells().iter().filter(|c| c.dim() == d).collect();
            let [cell] = top[..] else {
                return Err(Error::InvalidInput(format!(
                    "lemma-check needs exactly one top-dimensional cell, found {}",
                    top.len()
                )));
            };
            let l = Plane::coordinate(d, s.ambient())?;
            let rep = verify_projection_bound(cell, &l, &radii_for(radii, input)?, *tau, &ctx.quad())?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["r", "graph_volume", "projection_volume", "base_volume", "ratio", "ratio_error", "holds"])?;
            for row in &rep.rows {
                w.write_record([
                    row.r.to_string(),
                    row.graph_volume.value.to_string(),
                    row.projection_volume.value.to_string(),
                    row.base_volume.value.to_string(),
                    row.ratio.to_string(),
                    row.ratio_error.to_string(),
                    row.holds.to_string(),
                ])?;
            }
            ctx.emit_csv(&into_string(w)?)?;
            ctx.emit_json(&rep)?;
            Ok(if rep.all_hold { EXIT_OK } else { EXIT_VERIFICATION })
        }
        Command::Cover { d, n, tau } => {
            let c = cover_grassmannian(*d, *n, *tau, cli.seed)?;
            ctx.emit_json(&CoverJson {
                d: *d,
                n: *n,
                tau: *tau,
                verified_coverage: c.verified_coverage,
                verify_size: c.verify_size,
                centers: c.centers.iter().map(FrameJson::from).collect(),
            })?;
            Ok(EXIT_OK)
        }
        Command::Examples => {
            for e in catalog::ENTRIES {
                writeln!(ctx.out, "{:<20} {}\n{:<20} expected: {}", e.name, e.description, "", e.expected)?;
            }
            Ok(EXIT_OK)
        }
    }
}

/// Runs the command line `args` (program name first) and returns the exit
/// code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start worker threads: {}", e);
            return EXIT_INPUT;
        }
    };
    let mut buf = Vec::new();
    let result = pool.install(|| execute(&mut Ctx { cli: &cli, out: &mut buf }));
    if out.write_all(&buf).and_then(|_| out.flush()).is_err() {
        return EXIT_INPUT;
    }
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e);
            e.exit_code()
        }
    }
}
