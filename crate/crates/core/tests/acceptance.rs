//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nullflow::congruence::{Congruence, CongruenceOptions, Generator, Orientation, SeedSurface};
use nullflow::energy::{
    converging_test, hawking_check, nec_scan, penrose_bound, witness_violation, HawkingVerdict, Lambda,
    PenroseVerdict, Sampler, ScanOptions, TrappedVerdict, WitnessOptions, WitnessOutcome,
};
use nullflow::geometry::builtins;
use nullflow::quadrature::{AxisRule, RuleKind};
use nullflow::transport::{convexity_report, localized_implies_global, uniform_grid, ConvexityVerdict, Measure};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn sphere(map: [&str; 4], nodes: (usize, usize)) -> SeedSurface {
    let map: Vec<String> = map.iter().map(|s| s.to_string()).collect();
    let axes = vec![
        AxisRule { lo: 0.0, hi: PI, nodes: nodes.0, kind: RuleKind::Gauss },
        AxisRule { lo: 0.0, hi: 2.0 * PI, nodes: nodes.1, kind: RuleKind::Uniform },
    ];
    SeedSurface::new(&map, 4, &BTreeMap::new(), axes, Orientation::Standard).unwrap()
}

const UNIT: [&str; 4] = ["0", "sin(u0)*cos(u1)", "sin(u0)*sin(u1)", "cos(u0)"];

fn cone(generator: Generator, t_max: f64) -> Congruence {
    let m = builtins::minkowski(4).unwrap();
    let opts = CongruenceOptions::new(t_max).with_generator(generator);
    Congruence::build(&m, &sphere(UNIT, (8, 16)), opts).unwrap()
}

fn ingoing(span: f64) -> Congruence {
    let m = builtins::minkowski(4).unwrap();
    let opts = CongruenceOptions::new(1.0).with_generator(Generator::LBar).with_span(span);
    Congruence::build(&m, &sphere(UNIT, (8, 16)), opts).unwrap()
}

fn horizon() -> Congruence {
    let m = builtins::schwarzschild_ef(1.0).unwrap();
    let s = sphere(["0", "2", "u0", "u1"], (8, 16));
    Congruence::build(&m, &s, CongruenceOptions::new(1.0).with_span(5.0)).unwrap()
}

fn ef_sheared() -> Congruence {
    let m = builtins::schwarzschild_ef(1.0).unwrap();
    let s = sphere(["0", "4 + 0.3*sin(u0)^2*cos(2*u1)", "u0", "u1"], (4, 8));
    Congruence::build(&m, &s, CongruenceOptions::new(2.0)).unwrap()
}

fn flrw_cone(a: &str) -> Congruence {
    let m = builtins::flrw(a, 4).unwrap();
    Congruence::build(&m, &sphere(UNIT, (4, 8)), CongruenceOptions::new(1.0)).unwrap()
}

fn weighted_cone() -> Congruence {
    let m = builtins::weighted_minkowski("0.3*x1 + 0.1*x0*x2", 4).unwrap();
    Congruence::build(&m, &sphere(UNIT, (4, 8)), CongruenceOptions::new(1.0)).unwrap()
}

fn flat_cone_equality() -> Outcome {
    let start = Instant::now();
    let c = cone(Generator::L, 1.0);
    let mu = Measure::uniform(&c).map_err(|e| e.to_string())?;
    let grid = uniform_grid(33);
    let r = convexity_report(&mu, 2.0, &grid).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (t, s) in grid.iter().zip(&r.entropy) {
        let exact = -(4.0 * PI).sqrt() * (1.0 + t);
        worst = worst.max((s - exact).abs() / exact.abs());
    }
    check(r.entropy.len() == 33, "entropy missing grid points")?;
    check(worst < 1e-6, format!("relative entropy error {worst:e}"))?;
    let mut affine = 0.0f64;
    for ray in &c.rays {
        for &t in &grid {
            let (a, _) = ray.jacobi(t).ok_or("ray ended early")?;
            affine = affine.max((a.determinant().sqrt() - (1.0 + t)).abs());
        }
    }
    check(affine < 1e-6, format!("y^(1/2) deviates from 1+t by {affine:e}"))?;
    let secs = start.elapsed().as_secs_f64();
    check(secs < 5.0, format!("took {secs:.2} s"))?;
    Ok(format!("max rel error {worst:.2e}, y^(1/2) affine to {affine:.2e}, {secs:.2} s"))
}

fn raychaudhuri_residual() -> Outcome {
    let h = 1e-3;
    let mut worst = 0.0f64;
    let cases = [("minkowski", cone(Generator::L, 1.0)), ("schwarzschild_ef", ef_sheared()), ("flrw", flrw_cone("1 + 0.5*x0"))];
    let mut samples = 0;
    for (_, c) in &cases {
        let t_max = c.options.t_max;
        for r in &c.rays {
            for i in 1..10 {
                let t = t_max * i as f64 / 10.0;
                let f = |s: f64| r.tr_u(s).unwrap();
                let d = (-f(t + 2.0 * h) + 8.0 * f(t + h) - 8.0 * f(t - h) + f(t - 2.0 * h)) / (12.0 * h);
                let smp = r.sample(&c.metric, t).map_err(|e| e.to_string())?;
                let pack = c.metric.curvature_at(&smp.x).map_err(|e| e.to_string())?;
                let ric = pack.ricci_form(smp.k.as_slice(), smp.k.as_slice());
                worst = worst.max((d + (&smp.u * &smp.u).trace() + ric).abs());
                samples += 1;
            }
        }
    }
    check(worst < 1e-6, format!("residual {worst:e}"))?;
    Ok(format!("max residual {worst:.2e} over {samples} samples"))
}

fn vacuum() -> Outcome {
    let m = builtins::schwarzschild_ef(1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ric_max = 0.0f64;
    for _ in 0..100 {
        let x = [rng.gen_range(-5.0..5.0), rng.gen_range(0.3..10.0), rng.gen_range(0.2..PI - 0.2), rng.gen_range(0.0..2.0 * PI)];
        let pack = m.curvature_at(&x).map_err(|e| e.to_string())?;
        for i in 0..4 {
            for j in 0..4 {
                ric_max = ric_max.max(pack.ricci(i, j).abs());
            }
        }
    }
    check(ric_max < 1e-7, format!("Ricci component {ric_max:e}"))?;
    let c = horizon();
    let a0 = c.cross_section_measure(0.0, false).map_err(|e| e.to_string())?;
    let mut area = 0.0f64;
    for t in uniform_grid(11) {
        let a = c.cross_section_measure(t, false).map_err(|e| e.to_string())?;
        area = area.max((a - a0).abs() / a0);
    }
    check(area < 1e-6, format!("horizon area drift {area:e}"))?;
    check((a0 - 16.0 * PI).abs() < 1e-8 * a0, format!("horizon area {a0}"))?;
    let mu = Measure::from_density(&c, "1 + 0.5*cos(u0)", &BTreeMap::new()).map_err(|e| e.to_string())?;
    let mut slack = f64::INFINITY;
    for np in [2.0, 3.0, 6.0] {
        let r = convexity_report(&mu, np, &uniform_grid(33)).map_err(|e| e.to_string())?;
        check(r.verdict == ConvexityVerdict::Consistent, format!("horizon verdict {:?}", r.verdict))?;
        slack = r.slack.iter().copied().fold(slack, f64::min);
    }
    check(slack >= -1e-8, format!("horizon slack {slack:e}"))?;
    Ok(format!("max |Ric| {ric_max:.2e}, area drift {area:.2e} over affine [0,5], min slack {slack:.2e}"))
}

fn converse_witness() -> Outcome {
    let m = builtins::flrw("exp(x0^2)", 4).unwrap();
    let pts = (0..5).map(|i| vec![0.0, 0.3 * i as f64, -0.2 * i as f64, 0.1]).collect();
    let r = nec_scan(&m, &Sampler::Points { points: pts }, &ScanOptions::new(3.0)).map_err(|e| e.to_string())?;
    check(r.min_gap <= -4.0 + 1e-3, format!("min gap {}", r.min_gap))?;
    let mut o = WitnessOptions::new(3.0);
    o.lambda = Lambda::Value(0.0);
    let w = witness_violation(&m, &[0.0; 4], &[1.0, 1.0, 0.0, 0.0], &o).map_err(|e| e.to_string())?;
    let s = w.report.min_slack.ok_or("no slack")?;
    check(w.outcome == WitnessOutcome::Violation, format!("outcome {:?}", w.outcome))?;
    check(s < -100.0 * w.report.slack_tol, format!("slack {s:e} vs tol {:e}", w.report.slack_tol))?;
    Ok(format!("min gap {:.6}, witness slack {s:.3e} (100 tol = {:.1e})", r.min_gap, 100.0 * w.report.slack_tol))
}

fn weighted_converse() -> Outcome {
    let (n, dim_n) = (3.0, 3.0);
    let lambda = -1.0 / (n - dim_n + 1.0);
    let v = [1.0, 1.0, 0.0, 0.0];
    let m = builtins::weighted_minkowski("x1", 4).unwrap();
    let gap = m.be_null_gap(&[0.0; 4], &v, n).map_err(|e| e.to_string())?;
    check((gap + 1.0).abs() < 1e-12, format!("gap {gap}"))?;
    let mut o = WitnessOptions::new(n);
    o.lambda = Lambda::Value(lambda);
    let w = witness_violation(&m, &[0.0; 4], &v, &o).map_err(|e| e.to_string())?;
    check(w.outcome == WitnessOutcome::Violation, format!("weighted outcome {:?}", w.outcome))?;
    let flat = builtins::weighted_minkowski("2.5", 4).unwrap();
    let ctrl = witness_violation(&flat, &[0.0; 4], &v, &o).map_err(|e| e.to_string())?;
    check(ctrl.outcome == WitnessOutcome::Inconclusive, format!("control outcome {:?}", ctrl.outcome))?;
    check(
        ctrl.attempts.iter().all(|a| a.verdict != ConvexityVerdict::Violated),
        "control produced a violated attempt",
    )?;
    Ok(format!(
        "gap {gap}, slack {:.3e}; constant V: {} attempts, none violated",
        w.report.min_slack.unwrap_or(f64::NAN),
        ctrl.attempts.len()
    ))
}

fn mass_conservation() -> Outcome {
    let cases: Vec<(&str, Congruence, f64)> = vec![
        ("cone", cone(Generator::L, 1.0), 1.0),
        ("ingoing cone", cone(Generator::LBar, 1.0), 0.95),
        ("horizon", horizon(), 1.0),
        ("schwarzschild_ef", ef_sheared(), 2.0),
        ("flrw", flrw_cone("exp(x0^2)"), 1.0),
        ("weighted", weighted_cone(), 1.0),
    ];
    let mut worst = 0.0f64;
    for (name, c, t_end) in &cases {
        for density in ["1", "2 + sin(u1)*cos(u0)"] {
            let mu = Measure::from_density(c, density, &BTreeMap::new()).map_err(|e| format!("{name}: {e}"))?;
            for i in 0..=20 {
                let t = t_end * i as f64 / 20.0;
                let m = mu.mass_at(t).map_err(|e| format!("{name}: {e}"))?;
                worst = worst.max((m - 1.0).abs());
            }
        }
    }
    check(worst < 1e-6, format!("mass error {worst:e}"))?;
    Ok(format!("max |mass - 1| {worst:.2e} over {} congruences", cases.len()))
}

fn operator_properties() -> Outcome {
    let cases = [cone(Generator::L, 1.0), ef_sheared(), flrw_cone("exp(x0^2)"), weighted_cone(), cone(Generator::LBar, 0.9)];
    let (mut gram, mut asym, mut cs) = (0.0f64, 0.0f64, f64::INFINITY);
    for c in &cases {
        for r in &c.rays {
            gram = gram.max(r.max_gram_drift);
            for i in 0..=10 {
                let t = c.options.t_max * i as f64 / 10.0;
                let s = r.sample(&c.metric, t).map_err(|e| e.to_string())?;
                let norm = s.u.norm();
                asym = asym.max((&s.u - s.u.transpose()).norm() / norm.max(1e-300));
                let m = s.u.nrows() as f64;
                cs = cs.min((&s.u * &s.u).trace() - s.tr_u * s.tr_u / m);
            }
        }
    }
    check(gram < 1e-8, format!("Gram drift {gram:e}"))?;
    check(asym < 1e-6, format!("asymmetry {asym:e}"))?;
    check(cs >= -1e-8, format!("tr(U^2) - (trU)^2/(n-1) = {cs:e}"))?;
    Ok(format!("Gram drift {gram:.2e}, |U - U^T|/|U| {asym:.2e}, min tr(U^2) - (trU)^2/(n-1) {cs:.2e}"))
}

fn trapped_penrose() -> Outcome {
    let m = builtins::schwarzschild_ef(1.0).unwrap();
    let s = sphere(["0", "1.5", "u0", "u1"], (4, 8));
    let t = converging_test(&m, &s, None).map_err(|e| e.to_string())?;
    check(t.verdict == TrappedVerdict::Trapped && t.epsilon > 0.0, format!("verdict {:?}, eps {}", t.verdict, t.epsilon))?;
    let n_prime = 3.0;
    let mut latest = 0.0f64;
    for g in [Generator::L, Generator::LBar] {
        let c = Congruence::build(&m, &s, CongruenceOptions::new(n_prime / t.epsilon + 1.0).with_generator(g))
            .map_err(|e| e.to_string())?;
        let p = penrose_bound(&c, t.epsilon, n_prime).map_err(|e| e.to_string())?;
        check(p.verdict == PenroseVerdict::IncompletenessForced, format!("{g:?}: {:?}", p.verdict))?;
        for r in &p.rays {
            let ft = r.focal_time.ok_or(format!("{g:?} ray {} has no focal point", r.ray))?;
            check(ft <= p.bound, format!("focal {ft} beyond {}", p.bound))?;
            latest = latest.max(ft);
        }
    }
    let c = cone(Generator::LBar, 2.0);
    let f = converging_test(&c.metric, &c.seed, None).map_err(|e| e.to_string())?;
    let eps = f.epsilon_for(Generator::LBar);
    check((eps - 2.0).abs() < 1e-6, format!("ingoing eps {eps}"))?;
    let p = penrose_bound(&c, eps, 2.0).map_err(|e| e.to_string())?;
    let ft = p.max_focal_time.ok_or("ingoing cone does not focus")?;
    check((ft - 1.0).abs() < 1e-6 && (p.bound - 1.0).abs() < 1e-6, format!("focal {ft}, bound {}", p.bound))?;
    check(p.verdict == PenroseVerdict::IncompletenessForced, format!("ingoing {:?}", p.verdict))?;
    Ok(format!(
        "eps {:.6} (bound {:.4}), latest focal {latest:.6}; ingoing cone eps {eps:.8}, focal {ft:.8} = N'/eps",
        t.epsilon,
        n_prime / t.epsilon
    ))
}

fn hawking_contrapositive() -> Outcome {
    let c = cone(Generator::LBar, 2.0);
    let h = hawking_check(&c, 0.0, 0.9, None).map_err(|e| e.to_string())?;
    match h.verdict {
        HawkingVerdict::NonMonotoneIncomplete { focal_at } => {
            check((focal_at - 1.0).abs() < 1e-6, format!("focal at {focal_at}"))?;
            Ok(format!("m(0) = {:.6}, m(0.9) = {:.6}, completeness fails at t = {focal_at:.9}", h.m0, h.m1.unwrap_or(f64::NAN)))
        }
        v => Err(format!("verdict {v:?}")),
    }
}

fn localization() -> Outcome {
    let cases: Vec<(&str, Congruence, &str)> = vec![
        ("horizon", horizon(), "1 + 0.5*cos(u0)"),
        ("minkowski cone", cone(Generator::L, 1.0), "2 + sin(u1)*sin(u0)"),
        ("minkowski ingoing", ingoing(0.9), "1"),
        ("schwarzschild_ef", ef_sheared(), "1 + 0.3*cos(u1)"),
    ];
    let mut worst = 0.0f64;
    let mut consistent = 0;
    for (name, c, d) in &cases {
        let mu = Measure::from_density(c, d, &BTreeMap::new()).map_err(|e| format!("{name}: {e}"))?;
        for np in [2.0, 3.5] {
            let r = convexity_report(&mu, np, &uniform_grid(17)).map_err(|e| format!("{name}: {e}"))?;
            let l = localized_implies_global(&mu, &r).map_err(|e| format!("{name}: {e}"))?;
            worst = worst.max(l.max_difference);
            if r.verdict == ConvexityVerdict::Consistent {
                consistent += 1;
                check(l.local_holds, format!("{name}, N' = {np}: localized inequality fails"))?;
            }
        }
    }
    check(worst < 1e-6, format!("integration mismatch {worst:e}"))?;
    Ok(format!("max |integrated - global| {worst:.2e}; local holds in {consistent} consistent reports"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("flat-cone equality case", flat_cone_equality),
        ("Raychaudhuri residual", raychaudhuri_residual),
        ("vacuum check", vacuum),
        ("converse witness (FLRW)", converse_witness),
        ("weighted converse", weighted_converse),
        ("mass conservation", mass_conservation),
        ("operator properties", operator_properties),
        ("trapped / focal bound", trapped_penrose),
        ("area monotonicity contrapositive", hawking_contrapositive),
        ("localization", localization),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match out {
            Ok(detail) => println!("PASS [{:2}] {name}: {detail} ({secs:.1} s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{:2}] {name}: {why} ({secs:.1} s)", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
