use std::collections::BTreeMap;
use std::f64::consts::PI;

use nullflow::congruence::{Congruence, CongruenceOptions, Generator, Orientation, SeedSurface};
use nullflow::geometry::builtins;
use nullflow::quadrature::{AxisRule, RuleKind};
use nullflow::transport::{
    convexity_report, localized_implies_global, uniform_grid, ConvexityVerdict, Measure,
};
use nullflow::Error;
use proptest::prelude::*;

fn sphere(map: [&str; 4]) -> SeedSurface {
    let map: Vec<String> = map.iter().map(|s| s.to_string()).collect();
    let axes = vec![
        AxisRule { lo: 0.0, hi: PI, nodes: 8, kind: RuleKind::Gauss },
        AxisRule { lo: 0.0, hi: 2.0 * PI, nodes: 16, kind: RuleKind::Uniform },
    ];
    SeedSurface::new(&map, 4, &BTreeMap::new(), axes, Orientation::Standard).unwrap()
}

fn cone(generator: Generator, span: f64) -> Congruence {
    let m = builtins::minkowski(4).unwrap();
    let s = sphere(["0", "sin(u0)*cos(u1)", "sin(u0)*sin(u1)", "cos(u0)"]);
    let opts = CongruenceOptions::new(1.0).with_generator(generator).with_span(span);
    Congruence::build(&m, &s, opts).unwrap()
}

fn horizon(weight: Option<&str>) -> Congruence {
    let m = builtins::schwarzschild_ef(1.0).unwrap().with_weight(weight).unwrap();
    let s = sphere(["0", "2", "u0", "u1"]);
    Congruence::build(&m, &s, CongruenceOptions::new(5.0).with_span(5.0)).unwrap()
}

#[test]
fn pushforward_on_the_flat_cone() {
    let c = cone(Generator::L, 1.0);
    let mu = Measure::uniform(&c).unwrap();
    for k in [0, 17, 100] {
        assert!((mu.pushforward_density(k, 0.0).unwrap() - mu.rho0()[k]).abs() < 1e-15);
        for t in [0.25, 1.0] {
            let exact = 1.0 / (4.0 * PI * (1.0 + t) * (1.0 + t));
            let got = mu.pushforward_density(k, t).unwrap();
            assert!((got - exact).abs() < 1e-8 * exact, "{got} vs {exact}");
        }
    }
}

#[test]
fn weight_constant_along_rays_drops_out() {
    let plain = horizon(None);
    let weighted = horizon(Some("x2"));
    let (a, b) = (Measure::uniform(&plain).unwrap(), Measure::uniform(&weighted).unwrap());
    for k in [3, 40] {
        let ra = a.pushforward_density(k, 0.7).unwrap() / a.rho0()[k];
        let rb = b.pushforward_density(k, 0.7).unwrap() / b.rho0()[k];
        assert!((ra - rb).abs() < 1e-10);
    }
}

#[test]
fn entropy_examples() {
    let c = cone(Generator::L, 1.0);
    let mu = Measure::uniform(&c).unwrap();
    let area: f64 = mu.mass_weights().iter().sum();
    assert!((area - 4.0 * PI).abs() < 1e-10);
    for np in [2.0, 3.0, 5.5] {
        let s = mu.renyi_entropy(0.0, np).unwrap();
        assert!((s + area.powf(1.0 / np)).abs() < 1e-12);
    }
    for t in uniform_grid(5) {
        let s = mu.renyi_entropy(t, 2.0).unwrap();
        let exact = -(4.0 * PI).sqrt() * (1.0 + t);
        assert!((s - exact).abs() < 1e-8 * exact.abs());
    }
    // One-node measure.
    let mut vals = vec![0.0; c.len()];
    vals[9] = 3.0;
    let one = Measure::from_values(&c, vals).unwrap();
    let w = one.mass_weights()[9];
    assert!((one.renyi_entropy(0.0, 2.0).unwrap() + w.sqrt()).abs() < 1e-12);
    assert!(matches!(mu.renyi_entropy(0.0, 1.5), Err(Error::Precondition(_))));
}

#[test]
fn flat_cone_is_the_equality_case() {
    let c = cone(Generator::L, 1.0);
    let mu = Measure::uniform(&c).unwrap();
    let r = convexity_report(&mu, 2.0, &uniform_grid(33)).unwrap();
    assert_eq!(r.verdict, ConvexityVerdict::Consistent);
    assert_eq!(r.slack.len(), 31);
    assert!(r.slack.iter().all(|s| s.abs() < 1e-7));
    let loc = localized_implies_global(&mu, &r).unwrap();
    assert!(loc.max_difference < 1e-7);
    assert!(loc.local_holds);
    assert!(r.mass_error < 1e-6);
}

#[test]
fn horizon_entropy_is_constant() {
    let c = horizon(None);
    let mu = Measure::from_density(&c, "1 + 0.5*cos(u0)", &BTreeMap::new()).unwrap();
    let r = convexity_report(&mu, 2.0, &uniform_grid(33)).unwrap();
    assert_eq!(r.verdict, ConvexityVerdict::Consistent);
    assert!(r.slack.iter().all(|s| *s >= -1e-8));
    let spread = r.entropy.iter().fold(0.0f64, |m, s| m.max((s - r.entropy[0]).abs()));
    assert!(spread < 1e-8);
    let loc = localized_implies_global(&mu, &r).unwrap();
    assert!(loc.max_difference < 1e-6);
}

#[test]
fn single_node_localization_is_exact() {
    let c = cone(Generator::L, 1.0);
    let mut vals = vec![0.0; c.len()];
    vals[50] = 1.0;
    let mu = Measure::from_values(&c, vals).unwrap();
    let r = convexity_report(&mu, 3.0, &uniform_grid(9)).unwrap();
    let loc = localized_implies_global(&mu, &r).unwrap();
    for (g, i) in loc.global.iter().zip(&loc.integrated) {
        assert!((g - i).abs() <= 1e-15 * (1.0 + g.abs()));
    }
}

#[test]
fn focal_point_makes_the_interpolation_incomplete() {
    let c = cone(Generator::LBar, 2.0);
    let mu = Measure::uniform(&c).unwrap();
    let r = convexity_report(&mu, 2.0, &uniform_grid(33)).unwrap();
    assert_eq!(r.verdict, ConvexityVerdict::Incomplete);
    let inc = r.incomplete.clone().unwrap();
    assert!((inc.t - 0.5).abs() < 1e-6);
    assert_eq!(r.entropy.len(), 16);
    assert!(localized_implies_global(&mu, &r).is_err());
    assert!(matches!(mu.pushforward_density(0, 0.75), Err(Error::DeadRay { .. })));
}

#[test]
fn malformed_grids_are_rejected() {
    let c = cone(Generator::L, 1.0);
    let mu = Measure::uniform(&c).unwrap();
    for g in [vec![0.0, 1.5], vec![0.0], vec![0.1, 1.0], vec![0.0, 0.5, 0.5, 1.0]] {
        assert!(convexity_report(&mu, 2.0, &g).is_err(), "{g:?}");
    }
    assert!(Measure::from_values(&c, vec![-1.0; c.len()]).is_err());
}

#[test]
fn mass_is_conserved_and_entropy_bounded() {
    for c in [cone(Generator::L, 1.0), horizon(Some("0.3*cos(x2)")), cone(Generator::LBar, 0.9)] {
        let mu = Measure::from_density(&c, "2 + sin(u1)", &BTreeMap::new()).unwrap();
        let supp = mu.support_measure();
        for t in uniform_grid(11) {
            assert!((mu.mass_at(t).unwrap() - 1.0).abs() < 1e-6);
        }
        for np in [2.0, 4.0] {
            let s = mu.renyi_entropy(0.0, np).unwrap();
            assert!(s <= 0.0);
            assert!(s >= -supp.powf(1.0 / np) * (1.0 + 1e-12));
        }
    }
}

#[test]
fn ray_profiles_are_concave_under_nec() {
    for c in [cone(Generator::L, 1.0), horizon(None), cone(Generator::LBar, 0.9)] {
        let mu = Measure::uniform(&c).unwrap();
        let r = convexity_report(&mu, 2.0, &uniform_grid(33)).unwrap();
        for p in &r.ray_profile {
            for w in p.windows(3) {
                assert!(w[0] - 2.0 * w[1] + w[2] <= 1e-8);
            }
        }
    }
}

proptest! {
    /// If `a_t >= (1-t) a_0 + t a_1` for `a = rho^{-1/N}`, the same holds for
    /// every larger exponent.
    #[test]
    fn localized_inequality_is_monotone_in_the_exponent(
        r0 in 0.01f64..10.0, r1 in 0.01f64..10.0, rt in 0.01f64..10.0,
        t in 0.01f64..0.99, n in 2.0f64..6.0, extra in 0.0f64..10.0,
    ) {
        let f = |rho: f64, n: f64| rho.powf(-1.0 / n);
        let holds = |n: f64| f(rt, n) >= (1.0 - t) * f(r0, n) + t * f(r1, n) - 1e-12;
        if holds(n) {
            prop_assert!(holds(n + extra));
        }
    }
}
