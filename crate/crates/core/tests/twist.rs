use proptest::prelude::*;
use vtwist::dynamics::frequencies;
use vtwist::dynamics::MassRatio;
use vtwist::normalform::{normal_form, nf_rotation_number, NormalForm};
use vtwist::twist::*;

fn nf(mu: f64) -> NormalForm {
    normal_form(mu, 8).unwrap().normal_form
}

fn r(p: u32, q: u32) -> Rational {
    Rational::new(p, q).unwrap()
}

const NEAR_ORIGIN: f64 = 0.002;

#[test]
fn critical_mass_ratio_matches_the_table() {
    let mc = critical_mass_ratio().unwrap();
    assert!((mc - 0.01091).abs() < 1e-4, "{mc}");
    let m4 = critical_mass_ratio_with_degree(4).unwrap();
    assert!((mc - m4).abs() < 1e-4, "{mc} vs {m4}");
    let (a, b) = (twist_at_origin(0.0104, 8).unwrap(), twist_at_origin(0.0115, 8).unwrap());
    assert!(a * b < 0.0, "{a} {b}");
    // bisection tolerance is 1e-7 in mu
    let (lo, hi) = (twist_at_origin(mc - 2e-7, 8).unwrap(), twist_at_origin(mc + 2e-7, 8).unwrap());
    assert!(lo * hi < 0.0, "{lo} {hi}");
}

#[test]
fn near_origin_segment_appears_below_the_critical_ratio() {
    let mc = critical_mass_ratio().unwrap();
    let near = |mu: f64| {
        let n = nf(mu);
        match twistless_curve(&n, &ActionCap::default_for(&n).unwrap()) {
            Ok(c) => c.has_segment_near_origin(NEAR_ORIGIN),
            Err(vtwist::Error::NoTwistlessCurve) => false,
            Err(e) => panic!("{e}"),
        }
    };
    assert!(near(mc - 5e-4));
    assert!(!near(mc + 5e-4));
    assert!(near(0.0104));
}

#[test]
fn twistless_curve_vertices() {
    for mu in [0.009165, 0.01, 0.0104] {
        let n = nf(mu);
        let cap = ActionCap::default_for(&n).unwrap();
        let curve = twistless_curve(&n, &cap).unwrap();
        for p in curve.points() {
            assert!(p.c.abs() < TWIST_TOLERANCE, "C = {}", p.c);
            assert!(tangency_defect(&n, p.is, p.il) < TANGENCY_TOLERANCE);
            assert!(p.is >= 0.0 && p.il >= 0.0 && p.is <= cap.is_max && p.il <= cap.il_max);
        }
    }
}

#[test]
fn no_vanishing_twist_at_mu_0_011283() {
    // the C = 0 points on E = 0.02 lie far outside the W window of the chart
    let n = nf(0.011283);
    let cap = ActionCap::default_for(&n).unwrap();
    for p in twistless_on_energy(&n, 0.02, cap.il_max).unwrap() {
        assert!(!(0.25..=1.0 / 3.0).contains(&p.w), "{p:?}");
    }
    let curve = twistless_curve(&n, &cap).unwrap();
    assert!(!curve.has_segment_near_origin(NEAR_ORIGIN));
}

#[test]
fn twistless_torus_on_the_reference_energy_at_mu_0_01() {
    let n = nf(0.01);
    let cap = ActionCap::default_for(&n).unwrap();
    let pts = twistless_on_energy(&n, 0.02, cap.il_max).unwrap();
    let first = pts.first().unwrap();
    assert!((first.h - 0.02).abs() < 1e-12 && first.c.abs() < TWIST_TOLERANCE);
    assert!((0.25..=1.0 / 3.0).contains(&first.w), "{first:?}");
    // the traced curve passes from below to above the energy line
    let curve = twistless_curve(&n, &cap).unwrap();
    let below = curve.points().any(|p| p.h < 0.02);
    let above = curve.points().any(|p| p.h > 0.02);
    assert!(below && above);
}

/// `W - p/q` sign changes along the energy line, and the twistless
/// torus on it.
fn energy_line_crossings(mu: f64, rational: Rational, energy: f64) -> (Vec<f64>, f64) {
    let n = nf(mu);
    let cap = ActionCap::default_for(&n).unwrap();
    let samples = 4000;
    let mut out = Vec::new();
    let mut prev: Option<f64> = None;
    for k in 0..=samples {
        let il = cap.il_max * k as f64 / samples as f64;
        let Ok(is) = n.solve_is(energy, il) else { break };
        let f = nf_rotation_number(&n, is, il).unwrap() - rational.value();
        if prev.is_some_and(|p| (p > 0.0) != (f > 0.0)) {
            out.push(il);
        }
        prev = Some(f);
    }
    let twistless = twistless_on_energy(&n, energy, cap.il_max).unwrap()[0].il;
    (out, twistless)
}

#[test]
fn double_intersections_near_the_reconnections() {
    for (mu, rational) in [(0.009165, r(2, 7)), (0.009723, r(3, 10))] {
        let (cross, il0) = energy_line_crossings(mu, rational, 0.02);
        assert!(cross.len() >= 2, "mu {mu}: {cross:?}");
        assert!(cross[0] < il0 && il0 < cross[1], "mu {mu}: {cross:?} around {il0}");
    }
}

#[test]
fn chart_dataset_contents() {
    let mu = 0.009165;
    let n = nf(mu);
    let cap = ActionCap::default_for(&n).unwrap();
    let grid = GridSpec::new(cap.is_max, cap.il_max, 31, 31).unwrap();
    let chart = action_action_chart(&n, &grid, 3).unwrap();
    assert_eq!(chart.grid.len(), 31 * 31);
    let f = frequencies(MassRatio::new(mu).unwrap()).unwrap();
    let origin = chart.grid[0];
    assert_eq!((origin.is, origin.il), (0.0, 0.0));
    assert!((origin.w - 1.0 / f.ratio()).abs() < 1e-12);
    assert!(chart.line("energy", "0.02").is_some());
    assert!(chart.line("twistless", "C=0").is_some());
    for label in ["1/4", "2/7", "3/10", "3/11", "1/3"] {
        assert!(chart.line("rotation", label).is_some(), "{label}");
    }
    // the 2/7 iso-line straddles the reference energy twice
    let line = chart.line("rotation", "2/7").unwrap();
    let mut changes = 0;
    for seg in &line.segments {
        let hs: Vec<f64> = seg.iter().map(|p| n.energy(p[0], p[1]) - 0.02).collect();
        changes += hs.windows(2).filter(|w| (w[0] > 0.0) != (w[1] > 0.0)).count();
    }
    assert!(changes >= 2, "{changes}");
    for seg in &line.segments {
        for p in seg {
            assert!((nf_rotation_number(&n, p[0], p[1]).unwrap() - 2.0 / 7.0).abs() < 1e-10);
        }
    }

    let mut buf = Vec::new();
    write_chart_grid_csv(&mut buf, &chart).unwrap();
    assert!(String::from_utf8(buf).unwrap().starts_with("Is,Il,H,W,C\n"));
}

#[test]
fn normal_form_loci() {
    let mus: Vec<f64> = (0..10).map(|k| 0.0088 + 0.0017 * k as f64 / 9.0).collect();
    let l27 = reconnection_locus_nf(r(2, 7), &mus, DEFAULT_CAP_ENERGY);
    let l310 = reconnection_locus_nf(r(3, 10), &mus, DEFAULT_CAP_ENERGY);
    for l in [&l27, &l310] {
        assert!(l.points.len() >= 8, "{:?}", l.failures);
        assert!(l.points.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 < w[0].1), "{:?}", l.points);
    }
    // at equal mu the 3/10 torus is higher, so at equal E it sits at larger mu
    for (a, b) in l27.points.iter().zip(&l310.points) {
        assert_eq!(a.0, b.0);
        assert!(b.1 > a.1);
    }
    // the solution really is a twistless torus with the right W
    let n = nf(0.0095);
    let cap = ActionCap::from_energy(&n, DEFAULT_CAP_ENERGY).unwrap();
    let p = reconnection_point_nf(&n, r(2, 7), &cap).unwrap();
    let (c, _) = twist_gradient(&n, p.is, p.il);
    assert!(c.abs() < LOCUS_TOLERANCE);
    assert!((nf_rotation_number(&n, p.is, p.il).unwrap() - 2.0 / 7.0).abs() < LOCUS_TOLERANCE);
    assert!((n.energy(p.is, p.il) - l27.points.iter().find(|q| (q.0 - 0.0095).abs() < 1e-12).map_or(p.h, |q| q.1)).abs() < 1e-12);
    let json = l27.to_json().unwrap();
    assert!(json.contains("\"normal_form\"") && json.contains("\"points\""));
}

#[test]
fn reconnection_mass_ratios_on_the_reference_energy() {
    let m27 = reconnection_mu_nf(r(2, 7), 0.02, (0.0088, 0.0095)).unwrap();
    assert!((m27 - 0.009165).abs() < 5e-4, "{m27}");
    let m310 = reconnection_mu_nf(r(3, 10), 0.02, (0.0093, 0.0102)).unwrap();
    assert!((m310 - 0.009723).abs() < 5e-4, "{m310}");
    let m311 = reconnection_mu_nf(r(3, 11), 0.02, (0.0084, 0.0090)).unwrap();
    assert!((m311 - 0.0086).abs() < 1e-4, "{m311}");
    assert!(m311 < m27 && m27 < m310);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn gradients_match_finite_differences(is in 0.001f64..0.02, il in 0.001f64..0.02) {
        let n = nf(0.01);
        let eps = 1e-7;
        let (_, gc) = twist_gradient(&n, is, il);
        let (_, gw) = rotation_gradient(&n, is, il);
        let c = |a: f64, b: f64| twist_gradient(&n, a, b).0;
        let w = |a: f64, b: f64| rotation_gradient(&n, a, b).0;
        let fd_c = [(c(is + eps, il) - c(is - eps, il)) / (2.0 * eps), (c(is, il + eps) - c(is, il - eps)) / (2.0 * eps)];
        let fd_w = [(w(is + eps, il) - w(is - eps, il)) / (2.0 * eps), (w(is, il + eps) - w(is, il - eps)) / (2.0 * eps)];
        let sc = gc[0].hypot(gc[1]);
        let sw = gw[0].hypot(gw[1]);
        for k in 0..2 {
            prop_assert!((gc[k] - fd_c[k]).abs() < 1e-6 * sc, "C_{k}: {} vs {}", gc[k], fd_c[k]);
            prop_assert!((gw[k] - fd_w[k]).abs() < 1e-6 * sw, "W_{k}: {} vs {}", gw[k], fd_w[k]);
        }
    }
}
