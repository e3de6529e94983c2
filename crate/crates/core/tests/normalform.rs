mod common;

use proptest::prelude::*;
use vtwist::dynamics::{frequencies, Cr3bp, LagrangePoint, MassRatio, RotatingState};
use vtwist::normalform::linear::{hessian_of_quadratic, symplectic_unit};
use vtwist::normalform::*;

fn mr(mu: f64) -> MassRatio {
    MassRatio::elliptic(mu).unwrap()
}

#[test]
fn taylor_has_no_constant_or_linear_part() {
    let full = taylor_expansion_full(mr(0.01), 8).unwrap();
    for (m, c) in full.terms() {
        if m.degree() < 2 {
            assert!(c.norm() < 1e-13, "{:?} -> {c}", m.0);
        }
    }
}

#[test]
fn taylor_matches_energy_near_l4() {
    let mu = 0.01;
    let sys = Cr3bp::new(mr(mu));
    let l4 = sys.lagrange_point(LagrangePoint::L4).to_array();
    let h = taylor_at_l4(mr(mu), 8).unwrap();
    let dirs = [[1.0, 0.0, 0.0, 0.0], [0.3, -0.5, 0.7, 0.2], [-0.4, 0.4, -0.6, 0.5], [0.0, 0.0, 0.0, 1.0]];
    for d in dirs {
        let n = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        let delta = d.map(|x| 1e-2 * x / n);
        let st = RotatingState::from_array([0, 1, 2, 3].map(|i| l4[i] + delta[i]));
        let exact = sys.energy_rotating(&st).unwrap();
        // variable order of the polynomial is (xi, p_xi, eta, p_eta)
        let approx = h.eval_real([delta[0], delta[2], delta[1], delta[3]]);
        assert!((approx.re - exact).abs() < 1e-14, "{} vs {}", approx.re, exact);
        assert!(approx.im.abs() < 1e-20);
    }
}

#[test]
fn quadratic_part_has_the_linear_frequencies() {
    for mu in [0.004, 0.01, 0.013, 0.03] {
        let h = taylor_at_l4(mr(mu), 2).unwrap();
        let s = hessian_of_quadratic(&h);
        let a = symplectic_unit() * s;
        // eigenvalues of J S are +-i ws, +-i wl, so A^2 has -ws^2, -wl^2 twice
        let eig = (a * a).complex_eigenvalues();
        let f = frequencies(mr(mu)).unwrap();
        let mut got: Vec<f64> = eig.iter().map(|z| (-z.re).sqrt()).collect();
        got.sort_by(f64::total_cmp);
        for (g, w) in got.iter().zip([f.omega_l, f.omega_l, f.omega_s, f.omega_s]) {
            assert!((g - w).abs() < 1e-12, "mu={mu}: {g} vs {w}");
        }
    }
}

#[test]
fn linear_normalization_is_symplectic_and_diagonal() {
    let mu = 0.01;
    let h = taylor_at_l4(mr(mu), 2).unwrap();
    let f = frequencies(mr(mu)).unwrap();
    let lin = linear_symplectic_normalize(&h, f).unwrap();
    assert!(lin.symplecticity_defect() < 1e-12);
    let d = lin.normalized_hessian;
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                assert!(d[(i, j)].abs() < 1e-12);
            }
        }
    }
    assert!((d[(0, 0)] - f.omega_s).abs() < 1e-12);
    assert!((d[(1, 1)] - f.omega_s).abs() < 1e-12);
    // long mode enters with a negative sign
    assert!((d[(2, 2)] + f.omega_l).abs() < 1e-12);
    assert!((d[(3, 3)] + f.omega_l).abs() < 1e-12);
}

#[test]
fn linear_normalization_fails_at_the_double_root() {
    let m = MassRatio::new(vtwist::dynamics::mu1()).unwrap();
    let f = frequencies(m).unwrap();
    let h = taylor_at_l4(m, 2);
    if let Ok(h) = h {
        assert!(linear_symplectic_normalize(&h, f).is_err());
    }
}

#[test]
fn rotation_number_at_origin_is_inverse_frequency_ratio() {
    for mu in [0.0086, 0.0095, 0.01, 0.0115, 0.0128] {
        let nf = normal_form(mu, 8).unwrap().normal_form;
        let f = frequencies(mr(mu)).unwrap();
        let w = nf_rotation_number(&nf, 0.0, 0.0).unwrap();
        assert!((w * f.ratio() - 1.0).abs() < 1e-12);
        assert!((nf.coeff(1, 0) - f.omega_s).abs() < 1e-12);
        assert!((nf.coeff(0, 1) + f.omega_l).abs() < 1e-12);
    }
}

#[test]
fn coefficients_are_real_over_a_sweep() {
    for i in 0..20 {
        let mu = 0.0085 + (0.0130 - 0.0085) * (i as f64 + 0.5) / 20.0;
        match normal_form(mu, 8) {
            Ok(n) => {
                assert!(n.normal_form.imaginary_residue < 1e-10, "mu={mu}");
                assert!(n.report.non_action_residual < 1e-10, "mu={mu}");
            }
            Err(vtwist::Error::ResonanceTooClose { .. }) => {}
            Err(e) => panic!("mu={mu}: {e}"),
        }
    }
}

#[test]
fn twist_at_origin_changes_sign_near_critical_mass_ratio() {
    let c0 = |mu: f64| {
        let nf = normal_form(mu, 4).unwrap().normal_form;
        let (a, b, c) = nf.abc();
        let f = frequencies(mr(mu)).unwrap();
        let direct = a * f.omega_l.powi(2) + 2.0 * b * f.omega_s * f.omega_l + c * f.omega_s.powi(2);
        let via = nf_twist(&nf, 0.0, 0.0).unwrap();
        assert!((direct - via).abs() < 1e-12 * (1.0 + direct.abs()));
        via
    };
    let (mut lo, mut hi) = (0.0105, 0.0113);
    assert!(c0(lo) > 0.0 && c0(hi) < 0.0);
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if c0(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!((lo - 0.01091).abs() < 1e-4, "root {lo}");
}

#[test]
fn quartic_coefficients_match_independent_solver() {
    for mu in [0.0086, 0.01, 0.012] {
        let n = normal_form(mu, 8).unwrap();
        let oracle = common::order_four_oracle(&n.hamiltonian);
        for (jk, v) in [(2, 0), (1, 1), (0, 2)].map(|jk| (jk, oracle[&jk])) {
            let got = n.normal_form.coeff(jk.0, jk.1);
            assert!((got - v).abs() < 1e-10, "mu={mu} {jk:?}: {got} vs {v}");
        }
    }
}

#[test]
fn truncating_generators_leaves_high_degrees_unnormalized() {
    let n = normal_form(0.01, 8).unwrap();
    let full = nf_verify(&n.hamiltonian, 6, &n.generators);
    assert!(full.non_action_residual < 1e-10);
    let cut = nf_verify(&n.hamiltonian, 6, &n.generators[..4]);
    for d in cut.per_degree.iter().filter(|d| d.degree >= 7) {
        assert!(d.relative() > 1e-3, "degree {} relative {}", d.degree, d.relative());
    }
    for d in cut.per_degree.iter().filter(|d| d.degree <= 6) {
        assert!(d.non_action < 1e-10);
    }
}

#[test]
fn resonance_too_close_names_the_resonance() {
    let mu3 = vtwist::dynamics::mass_ratio_for_resonance(3.0).unwrap().value();
    match normal_form(mu3, 8) {
        Err(vtwist::Error::ResonanceTooClose { k1, k2, denominator }) => {
            assert_eq!((k1, k2), (1, 3));
            assert!(denominator < 1e-4);
        }
        other => panic!("expected ResonanceTooClose, got {:?}", other.map(|n| n.normal_form)),
    }
}

#[test]
fn floor_controls_how_close_to_resonance_we_go() {
    // |ws - 3 wl| is about 3e-4 here
    assert!(normal_form(0.013509, 8).is_ok());
    let m = mr(0.013509);
    let h = taylor_at_l4(m, 8).unwrap();
    assert!(matches!(
        birkhoff_normalize(&h, m, 8, 1e-3),
        Err(vtwist::Error::ResonanceTooClose { k1: 1, k2: 3, .. })
    ));
}

#[test]
fn short_period_limit_and_json() {
    let n = normal_form(0.01, 8).unwrap().normal_form;
    let f = frequencies(mr(0.01)).unwrap();
    assert!((short_period_w_of_e(&n, 0.0).unwrap() - 1.0 / f.ratio()).abs() < 1e-14);
    let back = NormalForm::from_json(&n.to_json().unwrap()).unwrap();
    assert_eq!(back.coefficients, n.coefficients);
    assert_eq!(back.omega_s, n.omega_s);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn twist_equals_fixed_energy_curvature(is in 1e-4f64..4e-3, il in 1e-4f64..4e-3) {
        // along H = E, d^2(I_l)/d(I_s)^2 of the level curve is -C / H2^3;
        // check C against second differences of the level curve.
        let n = normal_form(0.0095, 8).unwrap().normal_form;
        let e = n.energy(is, il);
        let c = nf_twist(&n, is, il).unwrap();
        let d = n.derivatives(is, il);
        let solve_il = |s: f64| {
            let mut x = il;
            for _ in 0..50 {
                let dd = n.derivatives(s, x);
                x -= (dd.h - e) / dd.h2;
            }
            x
        };
        let h = 1e-4 * is.max(1e-3);
        let curv = (solve_il(is + h) - 2.0 * il + solve_il(is - h)) / (h * h);
        let expect = -c / d.h2.powi(3);
        prop_assert!((curv - expect).abs() < 1e-3 * expect.abs().max(1e-2), "{curv} vs {expect}");
    }

    #[test]
    fn rotation_number_is_continuous_at_the_origin(eps in 1e-12f64..1e-9) {
        let n = normal_form(0.0095, 8).unwrap().normal_form;
        let w0 = nf_rotation_number(&n, 0.0, 0.0).unwrap();
        let w = nf_rotation_number(&n, eps, eps).unwrap();
        prop_assert!((w - w0).abs() < 1e-7);
    }
}
