use std::collections::BTreeMap;
use std::f64::consts::PI;

use nullflow::congruence::{Congruence, CongruenceOptions, Generator, Orientation, SeedSurface};
use nullflow::energy::{
    converging_test, hawking_check, nec_scan, penrose_bound, witness_violation, CapOptions,
    HawkingVerdict, Lambda, PenroseVerdict, Sampler, ScanOptions, ScanVerdict, TrappedVerdict,
    WitnessOptions, WitnessOutcome,
};
use nullflow::geometry::{builtins, MetricSpec};
use nullflow::quadrature::{AxisRule, RuleKind};
use nullflow::transport::ConvexityVerdict;
use nullflow::Error;

fn sphere(map: [&str; 4], n_theta: usize, n_phi: usize) -> SeedSurface {
    let map: Vec<String> = map.iter().map(|s| s.to_string()).collect();
    let axes = vec![
        AxisRule { lo: 0.0, hi: PI, nodes: n_theta, kind: RuleKind::Gauss },
        AxisRule { lo: 0.0, hi: 2.0 * PI, nodes: n_phi, kind: RuleKind::Uniform },
    ];
    SeedSurface::new(&map, 4, &BTreeMap::new(), axes, Orientation::Standard).unwrap()
}

fn unit_sphere() -> SeedSurface {
    sphere(["0", "sin(u0)*cos(u1)", "sin(u0)*sin(u1)", "cos(u0)"], 8, 16)
}

fn ef_sphere(r: &str) -> SeedSurface {
    sphere(["0", r, "u0", "u1"], 6, 8)
}

fn flrw() -> MetricSpec {
    builtins::flrw("exp(x0^2)", 4).unwrap()
}

fn cube(t: (f64, f64), x: f64, n: usize) -> Sampler {
    Sampler::Box { lo: vec![t.0, -x, -x, -x], hi: vec![t.1, x, x, x], per_axis: n }
}

#[test]
fn scans_of_the_builtins() {
    let m = builtins::minkowski(4).unwrap();
    let r = nec_scan(&m, &cube((-1.0, 1.0), 1.0, 3), &ScanOptions::new(3.0)).unwrap();
    assert_eq!(r.verdict, ScanVerdict::Holds);
    assert_eq!(r.min_gap, 0.0);
    assert_eq!(r.samples, 81 * 14);

    let ef = builtins::schwarzschild_ef(1.0).unwrap();
    let s = Sampler::Box { lo: vec![-1.0, 0.5, 0.3, 0.0], hi: vec![1.0, 6.0, 2.8, 6.0], per_axis: 4 };
    let r = nec_scan(&ef, &s, &ScanOptions::new(3.0)).unwrap();
    assert_eq!(r.verdict, ScanVerdict::Holds);
    assert!(r.min_gap.abs() < 1e-6, "{}", r.min_gap);

    let r = nec_scan(&flrw(), &cube((-0.5, 0.5), 1.0, 3), &ScanOptions::new(3.0)).unwrap();
    assert_eq!(r.verdict, ScanVerdict::Violated);
    assert!(r.min_gap <= -4.0 + 1e-6, "{}", r.min_gap);
    let r = nec_scan(&flrw(), &cube((-0.5, 0.5), 1.0, 3), &ScanOptions::new(5.0)).unwrap();
    assert!((r.min_gap + 12.0).abs() < 1e-6);
}

#[test]
fn scan_skips_points_outside_the_chart() {
    let m = builtins::schwarzschild_static(1.0).unwrap();
    let pts = Sampler::Points {
        points: vec![vec![0.0, 1.0, 1.0, 0.0], vec![0.0, 4.0, 1.0, 0.0]],
    };
    let r = nec_scan(&m, &pts, &ScanOptions::new(3.0)).unwrap();
    assert_eq!(r.skipped, 1);
    assert_eq!(r.per_point.len(), 1);
    let none = Sampler::Points { points: vec![vec![0.0, 1.0, 1.0, 0.0]] };
    assert!(nec_scan(&m, &none, &ScanOptions::new(3.0)).is_err());
}

#[test]
fn flrw_witness_finds_a_violation() {
    let w = witness_violation(&flrw(), &[0.0; 4], &[1.0, 1.0, 0.0, 0.0], &WitnessOptions::new(3.0)).unwrap();
    assert_eq!(w.outcome, WitnessOutcome::Violation);
    assert_eq!(w.lambda, 0.0);
    assert!((w.gap + 4.0).abs() < 1e-8);
    let r = &w.report;
    assert_eq!(r.verdict, ConvexityVerdict::Violated);
    assert!(r.min_slack.unwrap() < -r.margin);
    assert!(r.mass_error < 1e-6);
}

#[test]
fn weighted_witness_and_its_negative_control() {
    let m = builtins::weighted_minkowski("x1", 4).unwrap();
    let v = [1.0, 1.0, 0.0, 0.0];
    assert!((m.be_null_gap(&[0.0; 4], &v, 3.0).unwrap() + 1.0).abs() < 1e-14);
    let w = witness_violation(&m, &[0.0; 4], &v, &WitnessOptions::new(3.0)).unwrap();
    assert!((w.lambda + 1.0).abs() < 1e-14);
    assert_eq!(w.outcome, WitnessOutcome::Violation);

    let flat = builtins::weighted_minkowski("0.7", 4).unwrap();
    let w = witness_violation(&flat, &[0.0; 4], &v, &WitnessOptions::new(3.0)).unwrap();
    assert_eq!(w.outcome, WitnessOutcome::Inconclusive);
    assert_eq!(w.attempts.len(), 13);
    assert!(w.attempts.iter().all(|a| a.verdict == ConvexityVerdict::Consistent));
}

#[test]
fn minkowski_witness_is_inconclusive() {
    let m = builtins::minkowski(4).unwrap();
    let mut o = WitnessOptions::new(3.0);
    o.max_halvings = 3;
    o.lambda = Lambda::Value(0.5);
    let w = witness_violation(&m, &[0.2, 0.0, 1.0, 0.0], &[1.0, 0.0, 0.6, 0.8], &o).unwrap();
    assert_eq!(w.outcome, WitnessOutcome::Inconclusive);
    assert_eq!(w.attempts.len(), 4);
    assert!(witness_violation(&m, &[0.0; 4], &[1.0, 0.0, 0.0, 0.0], &o).is_err());
}

#[test]
fn hawking_examples() {
    let ef = builtins::schwarzschild_ef(1.0).unwrap();
    let seed = sphere(["0", "2", "u0", "u1"], 8, 16);
    let hz = Congruence::build(&ef, &seed, CongruenceOptions::new(5.0)).unwrap();
    let r = hawking_check(&hz, 0.0, 5.0, None).unwrap();
    assert_eq!(r.verdict, HawkingVerdict::Monotone);
    assert!((r.m0 - 16.0 * PI).abs() < 1e-8 && (r.m1.unwrap() - 16.0 * PI).abs() < 1e-6);

    let m = builtins::minkowski(4).unwrap();
    let out = Congruence::build(&m, &unit_sphere(), CongruenceOptions::new(1.0)).unwrap();
    let r = hawking_check(&out, 0.0, 1.0, None).unwrap();
    assert_eq!(r.verdict, HawkingVerdict::Monotone);
    assert!((r.m1.unwrap() - 16.0 * PI).abs() < 1e-7);

    let opts = CongruenceOptions::new(2.0).with_generator(Generator::LBar);
    let inward = Congruence::build(&m, &unit_sphere(), opts).unwrap();
    let r = hawking_check(&inward, 0.0, 0.9, None).unwrap();
    match r.verdict {
        HawkingVerdict::NonMonotoneIncomplete { focal_at } => assert!((focal_at - 1.0).abs() < 1e-6),
        v => panic!("{v:?}"),
    }
    assert!((r.m1.unwrap() - 4.0 * PI * 0.01).abs() < 1e-8);
    let r = hawking_check(&inward, 0.0, 1.5, Some(&[0, 1, 2])).unwrap();
    assert!(matches!(r.verdict, HawkingVerdict::InconclusiveIncomplete { .. }));
    assert!(hawking_check(&inward, 0.5, 0.5, None).is_err());
}

#[test]
fn converging_examples() {
    let m = builtins::minkowski(4).unwrap();
    let r = converging_test(&m, &unit_sphere(), Some(CapOptions::default())).unwrap();
    assert_eq!(r.verdict, TrappedVerdict::NotTrapped);
    for n in &r.nodes {
        assert!((n.h_l + 2.0).abs() < 1e-12 && (n.h_lbar - 2.0).abs() < 1e-12);
    }
    for c in &r.cap_checks {
        assert!(c.signs_agree && c.difference < 1e-4, "{c:?}");
    }

    let ef = builtins::schwarzschild_ef(1.0).unwrap();
    let r = converging_test(&ef, &ef_sphere("1.5"), Some(CapOptions::default())).unwrap();
    assert_eq!(r.verdict, TrappedVerdict::Trapped);
    assert!((r.min_h_l - 2.0 / 9.0).abs() < 1e-12);
    assert!((r.min_h_lbar - 4.0 / 3.0).abs() < 1e-12);
    assert!((r.epsilon - 2.0 / 9.0).abs() < 1e-12);
    for c in &r.cap_checks {
        assert!(c.signs_agree && c.difference < 1e-4, "{c:?}");
    }

    // The weight term shifts both directions by dV(w) = dV/dt.
    let up = builtins::weighted_minkowski("3*x0", 4).unwrap();
    let r = converging_test(&up, &unit_sphere(), None).unwrap();
    assert_eq!(r.verdict, TrappedVerdict::Trapped);
    assert!((r.min_h_l - 1.0).abs() < 1e-12);
    let down = builtins::weighted_minkowski("-3*x0", 4).unwrap();
    let r = converging_test(&down, &unit_sphere(), None).unwrap();
    assert!((r.min_h_lbar + 1.0).abs() < 1e-12);
}

#[test]
fn penrose_examples() {
    let m = builtins::minkowski(4).unwrap();
    let opts = CongruenceOptions::new(2.0).with_generator(Generator::LBar);
    let c = Congruence::build(&m, &unit_sphere(), opts).unwrap();
    let eps = converging_test(&m, &unit_sphere(), None).unwrap().epsilon_for(Generator::LBar);
    assert!((eps - 2.0).abs() < 1e-12);
    let r = penrose_bound(&c, eps, 2.0).unwrap();
    assert_eq!(r.verdict, PenroseVerdict::IncompletenessForced);
    assert!((r.bound - 1.0).abs() < 1e-12);
    assert!((r.max_focal_time.unwrap() - 1.0).abs() < 1e-6);

    let ef = builtins::schwarzschild_ef(1.0).unwrap();
    let seed = ef_sphere("1.5");
    let tr = converging_test(&ef, &seed, None).unwrap();
    for gen in [Generator::L, Generator::LBar] {
        let c = Congruence::build(&ef, &seed, CongruenceOptions::new(12.0).with_generator(gen)).unwrap();
        let r = penrose_bound(&c, tr.epsilon_for(gen), 2.0).unwrap();
        assert_eq!(r.verdict, PenroseVerdict::IncompletenessForced, "{gen:?}");
        let r = penrose_bound(&c, tr.epsilon, 2.0).unwrap();
        assert_eq!(r.verdict, PenroseVerdict::IncompletenessForced);
    }

    let out = Congruence::build(&m, &unit_sphere(), CongruenceOptions::new(1.0)).unwrap();
    assert!(matches!(penrose_bound(&out, -2.0, 2.0), Err(Error::Precondition(_))));
}

/// Shear-free focusing by an independent scalar integration: `z = y^{1/m}`
/// solves `z'' = -Ric(k, k) z / m` along the geodesic.
fn riccati_focal(metric: &MetricSpec, x: &[f64], k: &[f64], tr_u0: f64, m: f64) -> f64 {
    let d = x.len();
    let f = |s: &[f64]| -> Vec<f64> {
        let pack = metric.curvature_at(&s[..d]).unwrap();
        let acc = pack.christoffel_contract(&s[d..2 * d], &s[d..2 * d]);
        let ric = pack.ricci_form(&s[d..2 * d], &s[d..2 * d]);
        let mut out = s[d..2 * d].to_vec();
        out.extend(acc.iter().map(|a| -a));
        out.push(s[2 * d + 1]);
        out.push(-ric * s[2 * d] / m);
        out
    };
    let mut s: Vec<f64> = x.iter().chain(k).copied().chain([1.0, tr_u0 / m]).collect();
    let h = 2e-4;
    let mut t = 0.0;
    loop {
        let k1 = f(&s);
        let s2: Vec<f64> = s.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
        let k2 = f(&s2);
        let s3: Vec<f64> = s.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
        let k3 = f(&s3);
        let s4: Vec<f64> = s.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
        let k4 = f(&s4);
        let next: Vec<f64> = (0..s.len())
            .map(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        let (z0, z1) = (s[2 * d], next[2 * d]);
        if z1 <= 0.0 {
            // Cubic Hermite root on the last step.
            let (d0, d1) = (s[2 * d + 1] * h, next[2 * d + 1] * h);
            let p = |u: f64| {
                let (u2, u3) = (u * u, u * u * u);
                (2.0 * u3 - 3.0 * u2 + 1.0) * z0 + (u3 - 2.0 * u2 + u) * d0
                    + (-2.0 * u3 + 3.0 * u2) * z1 + (u3 - u2) * d1
            };
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if p(mid) > 0.0 { lo = mid } else { hi = mid }
            }
            return t + h * lo;
        }
        s = next;
        t += h;
        assert!(t < 50.0, "no focal point");
    }
}

#[test]
fn focal_times_match_the_scalar_riccati_oracle() {
    // Decelerating expansion has positive null Ricci curvature.
    let m = builtins::flrw("1 + 0.5*x0", 4).unwrap();
    let seed = sphere(["0", "sin(u0)*cos(u1)", "sin(u0)*sin(u1)", "cos(u0)"], 3, 4);
    let c = Congruence::build(&m, &seed, CongruenceOptions::new(2.0).with_generator(Generator::LBar)).unwrap();
    for (ray, node) in c.rays.iter().zip(&c.nodes) {
        let oracle = riccati_focal(&m, &node.point.x, node.lbar.as_slice(), node.expansion_lbar(), 2.0);
        assert!((oracle - 1.0).abs() > 0.1, "flat value {oracle}");
        let got = ray.focal_time().expect("ingoing sphere focuses");
        assert!((got - oracle).abs() < 1e-6, "{got} vs {oracle}");
    }
}
