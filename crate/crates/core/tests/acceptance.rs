//! Acceptance run: one PASS/FAIL line per criterion, sub-checks indented.
//!
//! Sub-checks listed in `KNOWN_UNATTAINABLE` are run and reported like the
//! others but do not fail the process.

use std::f64::consts::FRAC_PI_4;
use std::time::Instant;

use locbmo::admissible::{schrodinger_rho, AdmissibleFn, Potential};
use locbmo::cli::{self, Command, ExperimentConfig};
use locbmo::counterexample::{
    blo_divergence, bmo_boundedness_scan, divergence_holds, eval_scale_fn, eval_scale_fn_quadrature,
    max_feasible_m, psi_lower_star_u, solve_rk, solve_rk_bisection, verify_shape, ScaleFnKind, ScanSpec,
};
use locbmo::functions::{default_suite, evaluate_suite, random_suite, FunctionSpec};
use locbmo::geometry::{
    annular_decay_certificate, chain_ball_construct, chain_length_bound, lattice_resolver,
    p_tau_convert, p_tau_cross_check, trace_growth_holds, verify_chain_ball,
    weak_geodesic_certificate, AnnularSampling, GeodesicWitness, WeakGeodesicSampling,
};
use locbmo::kernels::{
    build_qt_family, decay_certificate, qt_multiplier, schrodinger_generator, verify_decay_certificate,
    DecaySampling, KernelFamily, ScaleGrid, ScaleGridSpec,
};
use locbmo::norms::{blo_rho_norm, bmo_rho_norm, oscillations, q_equivalence, BallFamily, FamilySpec};
use locbmo::numeric::log_grid;
use locbmo::space::{doubling_certificate, Ball, DiscreteSpace, Metric, SpaceSpec};
use locbmo::sqfun::{boundedness_experiment, domination, l2_norm, lambda_sweep, scale_volumes, ScaleData};

const KNOWN_UNATTAINABLE: [&str; 2] = ["4.domination_literal", "8.literal_one_sixteenth"];

struct Check {
    name: String,
    ok: bool,
    detail: String,
}

fn check(name: &str, ok: bool, detail: String) -> Check {
    Check { name: name.to_string(), ok, detail }
}

fn rel_change(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

fn line_space(extent: f64, h: f64) -> DiscreteSpace {
    SpaceSpec::lebesgue(1, extent, h).build().unwrap()
}

fn ones(space: &DiscreteSpace) -> Potential {
    Potential::new(vec![1.0; space.len()]).unwrap()
}

// 1 -----------------------------------------------------------------------

fn criterion_1() -> Vec<Check> {
    let m_list: Vec<u32> = (1..=8).collect();
    let (rows, skipped) = blo_divergence(&m_list);
    let worst = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let scan = bmo_boundedness_scan(&ScanSpec::default()).unwrap();
    vec![
        check(
            "1.average_exceeds_bound",
            rows.len() == 8 && skipped.is_empty() && rows.iter().all(|r| r.interval_average > r.lower_bound),
            format!("rows={} min average/bound={worst:.6}", rows.len()),
        ),
        check("1.bound_increasing", divergence_holds(&rows), String::new()),
        check(
            "1.bmo_refinement",
            scan.levels.len() == 3 && scan.max_bmo_change < 0.15,
            format!(
                "bmo per level {:?}, max change {:.4}",
                scan.levels.iter().map(|l| l.bmo).collect::<Vec<_>>(),
                scan.max_bmo_change
            ),
        ),
    ]
}

// 2 -----------------------------------------------------------------------

fn criterion_2() -> Vec<Check> {
    let (mut worst_res, mut worst_u, mut worst_r) = (0.0f64, 0.0f64, 0.0f64);
    for k in 2..=20u32 {
        let c = solve_rk(k).unwrap();
        let target = FRAC_PI_4 * k as f64;
        worst_res = worst_res.max((psi_lower_star_u(c.u) - target).abs());
        let u_quad = solve_rk_bisection(k).unwrap();
        worst_u = worst_u.max((u_quad - c.u).abs() / c.u);
        // r-space oracle where r_k is representable
        if c.r > 0.0 && c.r.is_normal() {
            let a = eval_scale_fn(ScaleFnKind::PsiLowerStar, c.r).unwrap();
            let b = eval_scale_fn_quadrature(ScaleFnKind::PsiLowerStar, c.r).unwrap();
            worst_r = worst_r.max((a - b).abs()).max((a - target).abs());
        }
    }
    vec![
        check("2.psi_at_rk", worst_res <= 1e-10, format!("max |Psi_*(r_k) - pi k/4| = {worst_res:.3e}")),
        check(
            "2.closed_vs_quadrature",
            worst_u <= 1e-10 && worst_r <= 1e-10,
            format!("u relative {worst_u:.3e}, r-space {worst_r:.3e}"),
        ),
    ]
}

// 3 -----------------------------------------------------------------------

fn criterion_3() -> Vec<Check> {
    let max = max_feasible_m();
    let mut bad = Vec::new();
    let mut worst_end = 0.0f64;
    for m in 1..=max {
        let r = verify_shape(m, 1000).unwrap();
        worst_end = worst_end.max(r.endpoint_rel_error);
        if !(r.min_fg >= 0.0 && r.min_first_derivative > 0.0 && r.max_second_derivative < 0.0) {
            bad.push(m);
        }
    }
    vec![
        check("3.signs", bad.is_empty(), format!("m = 1..={max}, failing m {bad:?}")),
        check("3.endpoint", worst_end <= 1e-8, format!("max relative endpoint error {worst_end:.3e}")),
    ]
}

// 4 -----------------------------------------------------------------------

fn l2_ratio_max(h: f64, lambda: f64) -> (f64, f64, usize) {
    let space = line_space(4.0, h);
    let fam = KernelFamily::for_space(&space, &ones(&space), &ScaleGridSpec::default()).unwrap();
    let vt = scale_volumes(&space, &fam);
    let mut c_obs = 0.0f64;
    for spec in random_suite(1000, 20, 0.25) {
        let f = spec.evaluate(&space, None).unwrap();
        let d = ScaleData::with_volumes(&space, &fam, &f, vt.clone()).unwrap();
        let g = l2_norm(&space, &d.g().values);
        let gl = l2_norm(&space, &d.g_lambda_star(lambda).unwrap().values);
        c_obs = c_obs.max(gl / g);
    }
    // literal domination on the fixed suite at this resolution
    let suite = evaluate_suite(&space, &default_suite(), Some(&fam)).unwrap();
    let mut worst_ratio = 0.0f64;
    let mut violations = 0;
    for (_, f) in &suite {
        let d = ScaleData::with_volumes(&space, &fam, f, vt.clone()).unwrap();
        let rep = domination(&d.lusin_area(), &d.g_lambda_star(lambda).unwrap());
        worst_ratio = worst_ratio.max(rep.max_ratio);
        violations += rep.violations;
    }
    (c_obs, worst_ratio, violations)
}

fn criterion_4() -> Vec<Check> {
    let n = 1.0;
    let lambda = 2.0 * n;
    let (c1, ratio1, viol1) = l2_ratio_max(0.01, lambda);
    let (c2, ratio2, viol2) = l2_ratio_max(0.005, lambda);
    let cone = 2f64.powf(lambda / 2.0);
    vec![
        check(
            "4.domination_literal",
            viol1 == 0 && viol2 == 0,
            format!("S > g_lambda* at {viol1} / {viol2} (point, function) pairs; max S/g_lambda* = {ratio1:.4} / {ratio2:.4}"),
        ),
        check(
            "4.domination_cone_constant",
            ratio1 <= cone * (1.0 + 1e-12) && ratio2 <= cone * (1.0 + 1e-12),
            format!("max S/g_lambda* within 2^(lambda/2) = {cone:.4}"),
        ),
        check(
            "4.l2_ratio_stable",
            c1.is_finite() && rel_change(c1, c2) <= 0.20,
            format!("C_obs = {c1:.4} (h=0.01), {c2:.4} (h=0.005), change {:.3}", rel_change(c1, c2)),
        ),
    ]
}

// 5 -----------------------------------------------------------------------

fn bounds_level(h: f64, lambdas: &[f64]) -> locbmo::sqfun::ExperimentTable {
    let space = line_space(4.0, h);
    let rho = AdmissibleFn::constant(&space, 1.0).unwrap();
    let spec = FamilySpec { center_step: Some(0.05), radius_count: 30, ..Default::default() };
    let balls = BallFamily::enumerate(&space, &rho, &spec);
    let fam = KernelFamily::for_space(&space, &ones(&space), &ScaleGridSpec::default()).unwrap();
    let suite = evaluate_suite(&space, &default_suite(), Some(&fam)).unwrap();
    boundedness_experiment(&space, &fam, &balls, &suite, lambdas, 1.0).unwrap()
}

fn criterion_5() -> Vec<Check> {
    let n = 1.0;
    let lam = 3.0 * n + 1.0;
    let coarse = bounds_level(0.01, &lambda_sweep(n));
    let fine = bounds_level(0.005, &[lam]);
    let s_c = coarse.max_ratio("s_squared_blo", None);
    let s_f = fine.max_ratio("s_squared_blo", None);
    let g_c = coarse.max_ratio("glambda_squared_blo", Some(lam));
    let g_f = fine.max_ratio("glambda_squared_blo", Some(lam));
    let flagged = coarse.rows.iter().filter(|r| r.lambda.is_some_and(|l| l <= 3.0 * n)).all(|r| r.outside_hypothesis)
        && coarse.rows.iter().any(|r| r.outside_hypothesis)
        && coarse.rows.iter().filter(|r| r.lambda.is_some_and(|l| l > 3.0 * n)).all(|r| !r.outside_hypothesis);
    vec![
        check(
            "5.s_squared_stable",
            s_c.is_finite() && s_c > 0.0 && rel_change(s_c, s_f) <= 0.25,
            format!("max ||(Sf)^2||_BLO/||f||_BMO^2 = {s_c:.4} / {s_f:.4}"),
        ),
        check(
            "5.glambda_squared_stable",
            g_c.is_finite() && g_c > 0.0 && rel_change(g_c, g_f) <= 0.25,
            format!("lambda = {lam}: {g_c:.4} / {g_f:.4}"),
        ),
        check("5.sweep_flags", flagged, format!("sweep {:?}", lambda_sweep(n))),
    ]
}

// 6 -----------------------------------------------------------------------

fn criterion_6() -> Vec<Check> {
    let space = line_space(4.0, 0.01);
    let rho = AdmissibleFn::constant(&space, 1.0).unwrap();
    let fam_spec = FamilySpec { center_step: Some(0.05), radius_count: 30, ..Default::default() };
    let balls = BallFamily::enumerate(&space, &rho, &fam_spec);
    let mut suite = default_suite();
    suite.push(FunctionSpec::LogAbs);
    let values = evaluate_suite(&space, &suite, None).unwrap();
    let (mut blo_ok, mut q_ok, mut comp_ok) = (true, true, true);
    let mut q_max = 0.0f64;
    for (_, f) in &values {
        for q in [1.0, 2.0] {
            let bmo = bmo_rho_norm(&space, f, q, &balls).unwrap().total;
            let blo = blo_rho_norm(&space, f, q, &balls).unwrap().total;
            blo_ok &= bmo <= 2.0 * blo * (1.0 + 1e-12) + 1e-12;
        }
        let qe = q_equivalence(&space, f, &balls).unwrap();
        q_ok &= qe.constant.is_finite() && qe.q1 <= qe.q2 * (1.0 + 1e-12) + 1e-12;
        q_max = q_max.max(qe.constant);
        let sf: Vec<f64> = f.iter().map(|v| v.sin()).collect();
        let a = oscillations(&space, &sf, &balls);
        let b = oscillations(&space, f, &balls);
        comp_ok &= a.iter().zip(&b).all(|(x, y)| *x <= 2.0 * y * (1.0 + 1e-12) + 1e-12);
    }
    // divergence direction on the finest grid
    let fine = line_space(2.0, 0.000625);
    let rho_f = AdmissibleFn::constant(&fine, 1.0).unwrap();
    let spec_f = FamilySpec { center_step: Some(0.25), radius_count: 20, r_min: Some(0.01), ..Default::default() };
    let balls_f = BallFamily::enumerate(&fine, &rho_f, &spec_f);
    let f = FunctionSpec::LogAbs.evaluate(&fine, None).unwrap();
    let bmo = bmo_rho_norm(&fine, &f, 1.0, &balls_f).unwrap().total;
    let blo = blo_rho_norm(&fine, &f, 1.0, &balls_f).unwrap().total;
    vec![
        check("6.bmo_le_2blo", blo_ok, format!("{} functions, q in {{1,2}}", values.len())),
        check("6.q_equivalence", q_ok, format!("max BMO^2/BMO^1 = {q_max:.4}")),
        check("6.sin_composition", comp_ok, format!("{} balls", balls.len())),
        check("6.log_abs_ratio", blo / bmo >= 4.0, format!("h = 0.000625: BLO {blo:.4} / BMO {bmo:.4} = {:.4}", blo / bmo)),
    ]
}

// 7 -----------------------------------------------------------------------

fn kernel_level(h: f64) -> (f64, f64, usize, f64) {
    let space = line_space(4.0, h);
    let v = ones(&space);
    let rho = schrodinger_rho(&space, &v, &log_grid(1.0 / 64.0, 64.0, 97)).unwrap();
    let fam = KernelFamily::for_space(&space, &v, &ScaleGridSpec::default()).unwrap();
    let cert = decay_certificate(&space, &fam, &rho, &DecaySampling::default()).unwrap();
    let violations = verify_decay_certificate(&space, &fam, &rho, &cert);
    (
        cert.size_constant(1.0, 0.5).unwrap(),
        cert.mass_constant(0.5).unwrap(),
        violations,
        fam.max_multiplier(),
    )
}

fn criterion_7() -> Vec<Check> {
    let levels: Vec<(f64, f64, usize, f64)> = [0.01, 0.005, 0.0025].iter().map(|&h| kernel_level(h)).collect();
    let ci: Vec<f64> = levels.iter().map(|l| l.0).collect();
    let cii: Vec<f64> = levels.iter().map(|l| l.1).collect();
    let stable = |v: &[f64]| v.windows(2).all(|w| rel_change(w[0], w[1]) <= 0.25);
    let mult = levels.iter().map(|l| l.3).fold(0.0, f64::max);
    vec![
        check("7.size_stable", stable(&ci), format!("C_i(gamma=1, delta1=0.5) = {ci:.4?}")),
        check("7.mass_stable", stable(&cii), format!("C_ii(delta2=0.5) = {cii:.4?}")),
        check(
            "7.reverification",
            levels.iter().all(|l| l.2 == 0),
            format!("violations {:?}", levels.iter().map(|l| l.2).collect::<Vec<_>>()),
        ),
        check(
            "7.multiplier_bound",
            mult <= (-1.0f64).exp() && qt_multiplier(1.0, 1.0).abs() <= (-1.0f64).exp(),
            format!("max |t^2 lambda e^(-t^2 lambda)| = {mult:.17} vs e^-1 = {:.17}", (-1.0f64).exp()),
        ),
    ]
}

// 8 -----------------------------------------------------------------------

fn criterion_8() -> Vec<Check> {
    let space = line_space(4.0, 0.01);
    let l = schrodinger_generator(&space, &ones(&space)).unwrap();
    let probe = build_qt_family(&l, space.mass(0), ScaleGrid::new(1.0, 2.0, 1).unwrap()).unwrap();
    let j = space.len() / 2;
    let lambda = probe.eigenvalues[j];
    // six e-foldings of u = t^2 lambda on each side
    let (t_lo, t_hi) = ((-6.0f64).exp() / lambda.sqrt(), 6f64.exp() / lambda.sqrt());
    let fam = build_qt_family(&l, space.mass(0), ScaleGrid::new(t_lo, t_hi, 400).unwrap()).unwrap();
    let phi: Vec<f64> = (0..space.len()).map(|i| fam.eigenvectors[(i, j)] / space.mass(0).sqrt()).collect();
    let g = ScaleData::new(&space, &fam, &phi).unwrap().g();
    let peak = phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = |c: f64| {
        phi.iter()
            .zip(&g.values)
            .filter(|(p, _)| p.abs() >= 0.5 * peak)
            .map(|(p, gv)| (gv - p.abs() * c.sqrt()).abs() / (p.abs() * c.sqrt()))
            .fold(0.0f64, f64::max)
    };
    let quad = locbmo::quadrature::integrate(|u: f64| 0.5 * u * (-2.0 * u).exp(), 0.0, 60.0, 0.0, 1e-13).value;
    let (e16, e8, eq) = (worst(1.0 / 16.0), worst(0.125), worst(quad));
    vec![
        check(
            "8.literal_one_sixteenth",
            e16 <= 0.02,
            format!("j = {j}, lambda_j = {lambda:.3}: max relative error vs (1/16)^(1/2) = {e16:.4}"),
        ),
        check(
            "8.quadrature_oracle",
            eq <= 0.02,
            format!("oracle integral = {quad:.12}; error vs oracle {eq:.2e}, vs 1/8 {e8:.2e}"),
        ),
    ]
}

// 9 -----------------------------------------------------------------------

fn chain_sweep(space: &DiscreteSpace, centers: &[usize], radii_spacings: &[f64], c4: f64) -> (usize, usize, bool, bool) {
    let h = space.spacing();
    let (mut built, mut failed, mut growth, mut bounded) = (0, 0, true, true);
    for &z in centers {
        for &m in radii_spacings {
            let base = Ball::new(z, m * h);
            for x in space.members(&base, false) {
                match chain_ball_construct(space, base, x, c4, lattice_resolver(space, c4, h)) {
                    Ok(w) if verify_chain_ball(space, &w).is_ok() && w.alpha == 4.0 * c4 / 3.0 && w.beta == 4.0 / 3.0 => {
                        built += 1;
                        growth &= trace_growth_holds(&w.t_values, c4);
                        if w.k() > 0 {
                            bounded &= w.k() as f64 <= chain_length_bound(base.radius, w.t_values[0], c4) + 1e-9;
                        }
                    }
                    _ => failed += 1,
                }
            }
        }
    }
    (built, failed, growth, bounded)
}

fn criterion_9() -> Vec<Check> {
    let line = line_space(2.0, 0.01);
    let ann = annular_decay_certificate(&line, &AnnularSampling::default()).unwrap();

    let z = SpaceSpec::integers(10.0).build().unwrap();
    let weak = weak_geodesic_certificate(&z, &WeakGeodesicSampling { s_min_fraction: 0.05, ..Default::default() }).unwrap();
    let witness_ok = match weak.witness() {
        Some(GeodesicWitness::Weak { x, r, s, y, distance }) => {
            z.point(*x)[0] == 0.0 && *r > 0.0 && *r < 1.0 && r + s >= 1.0 - 1e-12 && z.point(*y)[0].abs() == 1.0 && *distance == 1.0
        }
        _ => false,
    };
    let witness_text = format!("{:?}", weak.witness());

    let c4 = 2.0;
    let radii: Vec<f64> = (9..=15).map(|m| m as f64 + 0.5).collect();
    let p1 = SpaceSpec::lebesgue(1, 2.0, 0.05).with_metric(Metric::GraphPath).build().unwrap();
    let all: Vec<usize> = (0..p1.len()).collect();
    let r1 = chain_sweep(&p1, &all, &radii, c4);
    let p2 = SpaceSpec::lebesgue(2, 0.95, 0.05).with_metric(Metric::GraphPath).build().unwrap();
    let r2 = chain_sweep(&p2, &p2.center_sample(9), &[9.5, 12.5], c4);

    let arith = p_tau_convert(2.0, 3.0, 0.5, 2.0).unwrap();
    let c1 = doubling_certificate(&line, &[2.0]).unwrap().c1;
    let cross = p_tau_cross_check(&line, &AnnularSampling::default(), 2.0, c1).unwrap();
    vec![
        check(
            "9a.annular_line",
            ann.delta == 1.0 && ann.k_const <= 1.2,
            format!("delta = {}, K = {:.4}, samples {}", ann.delta, ann.k_const, ann.samples),
        ),
        check("9b.integers_weak_fails", !weak.holds() && witness_ok, witness_text),
        check(
            "9c.chain_ball_1d",
            r1.1 == 0 && r1.0 > 0 && r1.2 && r1.3,
            format!("{} built, {} failed, growth {}, length bound {} ({} points)", r1.0, r1.1, r1.2, r1.3, p1.len()),
        ),
        check(
            "9c.chain_ball_2d",
            r2.1 == 0 && r2.0 > 0 && r2.2 && r2.3,
            format!("{} built, {} failed, growth {}, length bound {} ({} points)", r2.0, r2.1, r2.2, r2.3, p2.len()),
        ),
        check(
            "9d.p_tau",
            (arith - 2f64.sqrt() * 6.0).abs() < 1e-12 && cross.dominates,
            format!(
                "convert(2,3,0.5,2) = {arith:.4}; converted {:.4} >= direct K {:.4} (c_p_tau {:.4}, c1 {:.4})",
                cross.converted, cross.direct.k_const, cross.c_p_tau, cross.c1
            ),
        ),
    ]
}

// 10 ----------------------------------------------------------------------

fn criterion_10() -> Vec<Check> {
    let small = r#"{"schema_version": 1, "space": {"dim": 1, "extent": 2.0, "spacing": 0.05},
        "family": {"radius_count": 12}, "params": {"scan": null}}"#;
    let z_model = r#"{"schema_version": 1,
        "space": {"dim": 1, "extent": 10.0, "spacing": 1.0, "weight": {"kind": "counting"}},
        "params": {"geometry": {"annular": {"s_floor_factor": 1.0}, "weak": {"s_min_fraction": 0.05},
                                "chain_radii_spacings": [9.5]}}}"#;
    let scan = r#"{"schema_version": 1}"#;
    let runs = [
        (Command::Counterexample, scan),
        (Command::Geometry, z_model),
        (Command::Norms, small),
        (Command::Squarefn, small),
        (Command::Bounds, small),
        (Command::CertifyKernels, small),
    ];
    let mut out = Vec::new();
    for (cmd, text) in runs {
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let pa = cli::run(cmd, &cfg, a.path()).unwrap();
        let pb = cli::run(cmd, &cfg, b.path()).unwrap();
        let same = pa.len() == pb.len()
            && pa.iter().zip(&pb).all(|(x, y)| std::fs::read(x).unwrap() == std::fs::read(y).unwrap());
        out.push(check(&format!("10.{cmd:?}"), same, format!("{} files", pa.len())));
    }
    out
}

fn main() {
    // libtest flags such as --nocapture are accepted and ignored
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(u32, &str, fn() -> Vec<Check>); 10] = [
        (1, "counterexample divergence", criterion_1),
        (2, "critical radii", criterion_2),
        (3, "shape verification", criterion_3),
        (4, "square-function domination and L2 bounds", criterion_4),
        (5, "boundedness experiment", criterion_5),
        (6, "norm-space properties", criterion_6),
        (7, "kernel certificates", criterion_7),
        (8, "eigenvector g-function closed form", criterion_8),
        (9, "geometry suite", criterion_9),
        (10, "determinism", criterion_10),
    ];
    let mut unexpected = Vec::new();
    for (id, title, run) in criteria {
        if filter.as_ref().is_some_and(|f| f != &id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let checks = run();
        let ok = checks.iter().all(|c| c.ok);
        println!(
            "{} criterion {id}: {title} ({:.1}s)",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        for c in &checks {
            let known = KNOWN_UNATTAINABLE.contains(&c.name.as_str());
            let tag = match (c.ok, known) {
                (true, _) => "ok",
                (false, true) => "fail (known)",
                (false, false) => "FAIL",
            };
            println!("    {:<34} {tag:<13} {}", c.name, c.detail);
            if !c.ok && !known {
                unexpected.push(c.name.clone());
            }
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
