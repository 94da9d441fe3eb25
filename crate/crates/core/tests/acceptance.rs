//! One pass/fail line per acceptance criterion. Run with
//! `cargo test --test acceptance`.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tamevol::catalog;
use tamevol::grassmann::{cover_grassmannian, pluecker_embed, tau_max, Plane};
use tamevol::growth::{
    check_growth_bound, fit_exponent, gauss_cover_decompose_set, geometric_radii, growth_curve, stoll_classify,
    verify_projection_bound, GrowthClass, StollClass, DEFAULT_WINDOW,
};
use tamevol::hausdorff::{
    covering_measure, set_volume_in_ball, vol_normalization, CoveringConfig, QuadratureConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn normalization() -> Outcome {
    let hand = [(0.0, 1.0), (1.0, 2.0), (2.0, PI), (3.0, 4.0 * PI / 3.0)];
    let worst = hand
        .iter()
        .map(|&(d, v)| (vol_normalization(d) - v).abs())
        .fold(0.0, f64::max);
    check(worst <= 1e-10, format!("max |error| {:.1e} (tol 1e-10)", worst))
}

fn closed_forms() -> Outcome {
    let cfg = QuadratureConfig::default();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (name, d, r, exact) in [
        ("segment", 1, 10.0, 1.0),
        ("circle", 1, 10.0, 2.0 * PI),
        ("sphere2", 2, 10.0, 4.0 * PI),
        ("plane(2,3)", 2, 5.0, 25.0 * PI),
    ] {
        let v = set_volume_in_ball(&catalog::lookup(name).unwrap(), d, r, &cfg).unwrap();
        let e = rel(v.value, exact);
        worst = worst.max(e);
        parts.push(format!("{} {:.2e}", name, e));
    }
    let mut cover_worst: f64 = 0.0;
    for name in ["segment", "circle", "parabola-arc"] {
        let s = catalog::lookup(name).unwrap();
        let q = set_volume_in_ball(&s, 1, 10.0, &cfg).unwrap();
        let c = covering_measure(&s, 1.0, 1e-2, 10.0, &CoveringConfig::default()).unwrap();
        let e = rel(c.value, q.value);
        cover_worst = cover_worst.max(e);
        parts.push(format!("cover/{} {:.2e}", name, e));
    }
    check(
        worst <= 0.01 && cover_worst <= 0.10,
        format!("rel. errors: {} (tol 1e-2 quadrature, 1e-1 covering)", parts.join(", ")),
    )
}

fn growth_law() -> Outcome {
    let cfg = QuadratureConfig::default();
    let mut failures = Vec::new();
    let mut worst_excess = f64::NEG_INFINITY;
    let mut count = 0;
    for e in catalog::ENTRIES {
        let s = e.build().unwrap();
        if !s.is_definable() {
            continue;
        }
        count += 1;
        let radii = geometric_radii(e.radii.1 / 100.0, e.radii.1, 16).unwrap();
        let g = growth_curve(&s, &radii, &cfg).unwrap();
        let v = check_growth_bound(&g).unwrap();
        worst_excess = worst_excess.max(v.alpha - v.d as f64);
        if !v.bounded || v.alpha > v.d as f64 + 0.1 {
            failures.push(format!("{} alpha={:.3} d={}", e.name, v.alpha, v.d));
        }
    }
    check(
        failures.is_empty(),
        format!(
            "{} definable sets, max alpha - d = {:.3} (tol 0.1){}",
            count,
            worst_excess,
            if failures.is_empty() { String::new() } else { format!("; failing: {}", failures.join(", ")) }
        ),
    )
}

fn negative_control() -> Outcome {
    let s = catalog::lookup("archimedean-spiral").unwrap();
    let radii = geometric_radii(1.0, 100.0, 16).unwrap();
    let g = growth_curve(&s, &radii, &QuadratureConfig::default()).unwrap();
    let v = check_growth_bound(&g).unwrap();
    check(
        v.alpha >= 1.8 && v.classification == GrowthClass::Violates,
        format!("alpha {:.3} ± {:.3} (need >= 1.8), {}", v.alpha, v.halfwidth, v.classification),
    )
}

fn projection_lemma() -> Outcome {
    let cfg = QuadratureConfig::default();
    let mut worst_margin = f64::NEG_INFINITY;
    let mut ok = true;
    let mut slope_ratio = f64::NAN;
    for name in catalog::LEMMA_SUITE {
        let e = catalog::entry(name).unwrap();
        let s = e.build().unwrap();
        let d = s.dim().unwrap();
        let cell = s.cells().iter().find(|c| c.dim() == d).unwrap();
        let l = Plane::coordinate(d, s.ambient()).unwrap();
        let radii = geometric_radii(e.radii.0, e.radii.1, 8).unwrap();
        let rep = match verify_projection_bound(cell, &l, &radii, Some(tau_max(d)), &cfg) {
            Ok(r) => r,
            Err(err) => return check(false, format!("{}: {}", name, err)),
        };
        for row in &rep.rows {
            worst_margin = worst_margin.max(row.ratio - 2.0 - 2.0 * row.ratio_error);
            ok &= row.holds;
        }
        if *name == "lemma-slope" {
            slope_ratio = rep.rows.last().unwrap().ratio;
        }
    }
    let slope_ok = rel(slope_ratio, 2.0) <= 0.01;
    check(
        ok && slope_ok,
        format!(
            "max(ratio - 2 - 2 err) = {:.3e} over {} cells; slope ratio {:.5} (within 1% of 2)",
            worst_margin,
            catalog::LEMMA_SUITE.len(),
            slope_ratio
        ),
    )
}

fn grassmannian() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut invariance: f64 = 0.0;
    let mut spectral = true;
    for _ in 0..500 {
        let n = rng.random_range(2..=6);
        let d = rng.random_range(1..n);
        let l = Plane::random(d, n, &mut rng).unwrap();
        let mut b = DMatrix::<f64>::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        while b.determinant().abs() < 0.1 {
            b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        }
        let other = Plane::new(&(l.frame() * b)).unwrap();
        let diff = (pluecker_embed(&l).matrix() - pluecker_embed(&other).matrix()).amax();
        invariance = invariance.max(diff);
        spectral &= pluecker_embed(&l).spectral_check().holds(1e-10);
    }
    let cover = cover_grassmannian(1, 2, 3f64.sqrt(), 0).unwrap();
    let cover_ok = cover.centers.len() <= 3 && cover.verified_coverage == 1.0 && cover.verify_size >= 10_000;

    let s = catalog::lookup("sphere2").unwrap();
    let dec = gauss_cover_decompose_set(&s, tau_max(2), &[10.0], &QuadratureConfig::default()).unwrap();
    let total = dec.total[0];
    let sum = dec.piece_sum(0);
    let gauss_ok = dec.unassigned == 0 && (sum - 4.0 * PI).abs() <= 3.0 * total.error_bound;
    check(
        invariance <= 1e-10 && spectral && cover_ok && gauss_ok,
        format!(
            "phi invariance {:.1e}; spectral {}; Gr(1,2) {} centers, coverage {}; S^2 {} pieces, {} unassigned, sum {:.4} vs 4pi (3 err = {:.4})",
            invariance,
            spectral,
            cover.centers.len(),
            cover.verified_coverage,
            dec.pieces.len(),
            dec.unassigned,
            sum,
            3.0 * total.error_bound
        ),
    )
}

fn stoll() -> Outcome {
    let cfg = QuadratureConfig::default();
    let radii = geometric_radii(5.0, 50.0, 16).unwrap();
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, c) in [("complex-line", PI), ("complex-parabola", 2.0 * PI)] {
        let v = stoll_classify(&catalog::lookup(name).unwrap(), 1, &radii, &cfg).unwrap();
        let e = rel(v.growth.ratio_at_max, c);
        ok &= v.verdict == StollClass::AlgebraicConsistent && e <= 0.10;
        parts.push(format!("{} {} ratio/C {:.4}", name, v.verdict, v.growth.ratio_at_max / c));
    }
    let exp = catalog::lookup("complex-exp").unwrap();
    let v = stoll_classify(&exp, 1, &radii, &cfg).unwrap();
    let fit = fit_exponent(&v.curve, DEFAULT_WINDOW).unwrap();
    ok &= v.verdict == StollClass::Transcendental && fit.alpha >= 2.5;
    parts.push(format!("complex-exp {} alpha {:.3}", v.verdict, fit.alpha));
    check(ok, parts.join("; "))
}

fn cli(threads: usize, args: &[&str]) -> (i32, Vec<u8>) {
    let t = threads.to_string();
    let mut full = vec!["tamevol", "--threads", &t, "--seed", "17"];
    full.extend_from_slice(args);
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = tamevol::cli::run(full, &mut out, &mut err);
    (code, out)
}

fn determinism() -> Outcome {
    let commands: [&[&str]; 5] = [
        &["growth", "--catalog", "circle", "--samples", "16384"],
        &["growth", "--catalog", "archimedean-spiral", "--samples", "16384"],
        &["volume", "--catalog", "sphere2", "--r", "10"],
        &["lemma-check", "--catalog", "lemma-cap", "--r-count", "6"],
        &["cover", "--d", "2", "--n", "4", "--tau", "1"],
    ];
    let mut bad = Vec::new();
    for c in commands {
        let reference = cli(1, c);
        for threads in [2, 8] {
            if cli(threads, c) != reference {
                bad.push(format!("{} at {} threads", c[0], threads));
            }
        }
    }
    check(
        bad.is_empty(),
        if bad.is_empty() {
            format!("{} commands byte-identical at 1, 2 and 8 threads", commands.len())
        } else {
            format!("differs: {}", bad.join(", "))
        },
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("normalization", normalization),
        ("closed-form volumes", closed_forms),
        ("growth law", growth_law),
        ("negative control", negative_control),
        ("projection lemma", projection_lemma),
        ("grassmannian", grassmannian),
        ("stoll classification", stoll),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} [{}] {}: {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            name,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
