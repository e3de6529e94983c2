//! End-to-end acceptance run: one line per criterion, non-zero exit if any
//! of them fails. Takes roughly a quarter of an hour on one core.
//!
//!     cargo test --release -p vtwist --test acceptance

mod common;

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use vtwist::dynamics::*;
use vtwist::normalform::{nf_rotation_number, nf_verify, normal_form};
use vtwist::rotation::*;
use vtwist::scan::{run_sweep, write_sweep_csv, Axis, SweepSpec, SweepTask};
use vtwist::section::*;
use vtwist::twist::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Lcg(u64);

impl Lcg {
    fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
}

fn rational(p: u32, q: u32) -> Rational {
    Rational::new(p, q).unwrap()
}

fn table_mass_ratios() -> vtwist::Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for (r, label, mu) in [
        (4.0, "4", 0.00827),
        (11.0 / 3.0, "11/3", 0.00964),
        (3.5, "7/2", 0.01045),
        (10.0 / 3.0, "10/3", 0.01135),
        (3.0, "3", 0.01351),
    ] {
        let m = mass_ratio_for_resonance(r)?.value();
        let ok = (m - mu).abs() < 5e-6;
        pass &= ok;
        parts.push(format!("{label}: {m:.7}{}", if ok { "" } else { " (off)" }));
    }
    Ok(outcome(pass, parts.join(", ")))
}

fn critical_ratio() -> vtwist::Result<Outcome> {
    let mc = critical_mass_ratio()?;
    Ok(outcome((mc - 0.01091).abs() < 1e-4, format!("mu_c = {mc:.7}")))
}

fn normalization_residuals() -> vtwist::Result<Outcome> {
    let mut worst = (0.0f64, 0.0f64);
    for mu in [0.0086, 0.00914, 0.009165, 0.009723, 0.01, 0.0104] {
        let n = normal_form(mu, 8)?;
        let report = nf_verify(&n.hamiltonian, 8, &n.generators);
        worst.0 = worst.0.max(report.non_action_residual);
        worst.1 = worst.1.max(n.normal_form.imaginary_residue.max(report.imaginary_residue));
    }
    Ok(outcome(
        worst.0 < 1e-10 && worst.1 < 1e-10,
        format!("non-action {:.1e}, imaginary {:.1e}", worst.0, worst.1),
    ))
}

fn order_four_oracle() -> vtwist::Result<Outcome> {
    let mut rng = Lcg(2024);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let mu = 0.0085 + 0.003 * rng.next();
        let n = normal_form(mu, 4)?;
        let oracle = common::order_four_oracle(&n.hamiltonian);
        for jk in [(2, 0), (1, 1), (0, 2)] {
            worst = worst.max((n.normal_form.coeff(jk.0, jk.1) - oracle[&jk]).abs());
        }
    }
    Ok(outcome(worst < 1e-10, format!("max coefficient difference {worst:.1e}")))
}

fn conservation() -> vtwist::Result<Outcome> {
    let h = Cr3bp::with_mu(0.01)?;
    let fp = short_period_fixed_point(&h, 0.02, DEFAULT_DIRECTION, &default_config(&h)?)?;
    let cfg = vtwist::integrate::IntegratorConfig::new(1e-3, 2_000_000, 1e-9)?;
    let seed = fp.point.with_coords([fp.point.a + 0.01, fp.point.pa]);
    let stream = crossing_stream(&h, &seed, 10_000, &cfg)?;
    let mut rng = Lcg(11);
    let mut worst_det = 0.0f64;
    let eps = 1e-6;
    for _ in 0..20 {
        let r = 0.012 * rng.next().sqrt();
        let th = 2.0 * PI * rng.next();
        let p = fp.point.with_coords([fp.point.a + r * th.cos(), fp.point.pa + r * th.sin()]);
        let ret = |da: f64, dp: f64| poincare_return(&h, &p.with_coords([p.a + da, p.pa + dp]), &cfg);
        let (ap, am, bp, bm) = (ret(eps, 0.0)?, ret(-eps, 0.0)?, ret(0.0, eps)?, ret(0.0, -eps)?);
        let det = ((ap.a - am.a) * (bp.pa - bm.pa) - (bp.a - bm.a) * (ap.pa - am.pa)) / (4.0 * eps * eps);
        worst_det = worst_det.max((det - 1.0).abs());
    }
    Ok(outcome(
        stream.crossings.len() == 10_000 && stream.max_abs_k < 1e-9 && worst_det < 1e-6,
        format!("{} crossings, max |K| {:.1e}, max |det DP - 1| {:.1e}", stream.crossings.len(), stream.max_abs_k, worst_det),
    ))
}

fn rotation_profile_shape() -> vtwist::Result<Outcome> {
    let (mu, e) = (0.00914, 0.02);
    let max = profile_maximum(mu, e, &ProfileSearch::default())?;
    let regular: Vec<&ProfileEntry> = max.samples.iter().filter(|p| p.is_regular()).collect();
    let actions: Vec<f64> = regular.iter().map(|p| p.action.unwrap()).collect();
    let (lo, hi) = actions.iter().fold((f64::INFINITY, 0.0f64), |(a, b), x| (a.min(*x), b.max(*x)));
    let interior = max.action > lo && max.action < hi;
    let in_range = max.w_max > 0.2840 && max.w_max < 2.0 / 7.0;
    let nf = normal_form(mu, 8)?.normal_form;
    let mut worst = 0.0f64;
    for p in regular.iter().filter(|p| p.action.unwrap() < 0.5 * hi) {
        let il = p.action.unwrap();
        let w_nf = nf_rotation_number(&nf, nf.solve_is(e, il)?, il)?;
        worst = worst.max((w_nf - p.w.unwrap()).abs());
    }
    Ok(outcome(
        interior && in_range && worst < 2e-3,
        format!("W* = {:.6} at I = {:.3e} (island {:.3e}), max |W - W_nf| = {:.1e}", max.w_max, max.action, hi, worst),
    ))
}

fn reconnection_anchors() -> vtwist::Result<(Outcome, Outcome)> {
    let mut pass = true;
    let mut post = true;
    let mut parts = Vec::new();
    let mut post_parts = Vec::new();
    for (r, bracket, paper) in [(rational(2, 7), (0.0090, 0.0093), 0.009165), (rational(3, 10), (0.0095, 0.0099), 0.009723)] {
        let num = reconnection_search_numeric(r, 0.02, bracket, 5e-6, &ProfileSearch::default())?;
        let nf = reconnection_mu_nf(r, 0.02, (bracket.0 - 5e-4, bracket.1 + 5e-4))?;
        let ok = (num.mu - paper).abs() < 2e-4 && (nf - num.mu).abs() < 5e-4;
        pass &= ok;
        parts.push(format!("{r}: numeric {:.6}, normal form {:.6}", num.mu, nf));
        let excess = num.w_max - r.value();
        post &= excess.abs() < 1e-4;
        post_parts.push(format!("{r}: W* - p/q = {excess:+.1e}"));
    }
    Ok((outcome(pass, parts.join("; ")), outcome(post, post_parts.join("; "))))
}

fn locus_shape() -> vtwist::Result<Outcome> {
    let mus: Vec<f64> = (0..18).map(|k| 0.0088 + 0.0017 * k as f64 / 17.0).collect();
    let l27 = reconnection_locus_nf(rational(2, 7), &mus, DEFAULT_CAP_ENERGY);
    let l310 = reconnection_locus_nf(rational(3, 10), &mus, DEFAULT_CAP_ENERGY);
    let decreasing = |l: &ReconnectionLocus| l.points.len() >= 8 && l.points.windows(2).all(|w| w[1].1 < w[0].1);
    let shape = decreasing(&l27) && decreasing(&l310);
    // both decreasing, so 3/10 above 2/7 at equal mu means larger mu at equal E
    let ordered = l27.points.iter().zip(&l310.points).all(|(a, b)| a.0 == b.0 && b.1 > a.1);
    let at = |r: Rational| -> vtwist::Result<f64> {
        let nf = normal_form(0.01, 8)?.normal_form;
        Ok(reconnection_point_nf(&nf, r, &ActionCap::from_energy(&nf, DEFAULT_CAP_ENERGY)?)?.h)
    };
    let (e27, e310) = (at(rational(2, 7))?, at(rational(3, 10))?);
    let values = (e27 - 0.05).abs() < 0.01 && (e310 - 0.135).abs() < 0.03;
    Ok(outcome(
        shape && ordered && values,
        format!(
            "decreasing {shape}, 3/10 right of 2/7 {ordered}; at mu = 0.01: E(2/7) = {e27:.4}, E(3/10) = {e310:.4}"
        ),
    ))
}

fn chart_checks() -> vtwist::Result<Outcome> {
    let e = 0.02;
    let setup = |mu: f64| -> vtwist::Result<_> {
        let nf = normal_form(mu, 8)?.normal_form;
        let cap = ActionCap::default_for(&nf)?;
        Ok((nf, cap))
    };
    let mut parts = Vec::new();
    // no twistless torus in the W window on the energy line
    let (nf, cap) = setup(0.011283)?;
    let none = twistless_on_energy(&nf, e, cap.il_max)?.iter().all(|p| !(0.25..=1.0 / 3.0).contains(&p.w));
    parts.push(format!("0.011283 none {none}"));
    let (nf, cap) = setup(0.0104)?;
    let near = twistless_curve(&nf, &cap)?.has_segment_near_origin(0.002);
    parts.push(format!("0.0104 near origin {near}"));
    let mut crossings = true;
    for (mu, r) in [(0.01, None), (0.009723, Some(rational(3, 10))), (0.009165, Some(rational(2, 7)))] {
        let (nf, cap) = setup(mu)?;
        let tl = twistless_on_energy(&nf, e, cap.il_max)?;
        let Some(first) = tl.first().filter(|p| (0.25..=1.0 / 3.0).contains(&p.w)) else {
            crossings = false;
            continue;
        };
        if let Some(r) = r {
            let n = 4000;
            let mut sign_changes = Vec::new();
            let mut prev: Option<f64> = None;
            for k in 0..=n {
                let il = cap.il_max * k as f64 / n as f64;
                let Ok(is) = nf.solve_is(e, il) else { break };
                let f = nf_rotation_number(&nf, is, il)? - r.value();
                if prev.is_some_and(|p| (p > 0.0) != (f > 0.0)) {
                    sign_changes.push(il);
                }
                prev = Some(f);
            }
            let double = sign_changes.len() >= 2 && sign_changes[0] < first.il && first.il < sign_changes[1];
            crossings &= double;
            parts.push(format!("{mu} {r} twice {double}"));
        }
    }
    Ok(outcome(none && near && crossings, parts.join(", ")))
}

fn property_suite() -> vtwist::Result<Outcome> {
    let mut rng = Lcg(99);
    // synthetic rigid rotation
    let mut worst_w = 0.0f64;
    for _ in 0..10 {
        let w = 0.05 + 0.4 * rng.next();
        let c = SectionPoint::new(0.8, -0.05, 0.01, DEFAULT_DIRECTION);
        let pts: Vec<SectionPoint> = (0..10_000)
            .map(|k| {
                let th = 2.0 * PI * w * k as f64;
                c.with_coords([0.8 + 0.02 * th.cos(), -0.05 + 0.01 * th.sin()])
            })
            .collect();
        let s = InvariantCurveSample::new(pts[0], pts, c)?;
        worst_w = worst_w.max((rotation_number_of_curve(&s, 10_000)?.w - w).abs());
    }
    // symplectic linear normalization
    let mut worst_m = 0.0f64;
    for mu in [0.0086, 0.01, 0.0112] {
        worst_m = worst_m.max(normal_form(mu, 4)?.linear.symplecticity_defect());
    }
    // coordinate round trips
    let h = Cr3bp::with_mu(0.01)?;
    let mut worst_rt = 0.0f64;
    for _ in 0..200 {
        let st = RotatingState::new(-0.9 + 1.8 * rng.next(), 0.1 + 1.1 * rng.next(), rng.next() - 0.5, rng.next() - 0.5);
        let back = from_regularized(&to_regularized(&st, 0.0)?)?;
        for (a, b) in back.to_array().iter().zip(st.to_array()) {
            worst_rt = worst_rt.max((a - b).abs());
        }
        let p = SectionPoint::new(0.75 + 0.1 * rng.next(), -0.1 + 0.1 * rng.next(), 0.02, DEFAULT_DIRECTION);
        if let Ok(lifted) = section_lift(&h, &p) {
            let q = section_project(&h, &lifted, 0.02, 0.0)?;
            worst_rt = worst_rt.max((q.a - p.a).abs()).max((q.pa - p.pa).abs());
        }
    }
    // sweep determinism
    let spec = |workers| SweepSpec {
        mu: Axis::new(0.009, 0.0105, 5).unwrap(),
        energy: Axis::new(0.01, 0.05, 5).unwrap(),
        tasks: vec![SweepTask::Reconnection27, SweepTask::NfChart],
        workers,
    };
    let mut outputs = Vec::new();
    for w in [1, 4, 8] {
        let dir = tempfile::tempdir()?;
        let table = run_sweep(&spec(w), &dir.path().join("ck.ndjson"))?;
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &table)?;
        outputs.push(buf);
    }
    let deterministic = outputs.windows(2).all(|w| w[0] == w[1]);
    Ok(outcome(
        worst_w < 1e-9 && worst_m < 1e-12 && worst_rt < 1e-12 && deterministic,
        format!(
            "rotation {worst_w:.1e}, symplectic {worst_m:.1e}, round trip {worst_rt:.1e}, sweep deterministic {deterministic}"
        ),
    ))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |name: &str, t: Instant, r: vtwist::Result<Outcome>| {
        let (pass, detail) = match r {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!("{name}: {} ({}; {:.0?})", if pass { "PASS" } else { "FAIL" }, detail, t.elapsed());
    };
    let t = Instant::now();
    report("criterion 1 resonance mass ratios", t, table_mass_ratios());
    let t = Instant::now();
    report("criterion 2 critical mass ratio", t, critical_ratio());
    let t = Instant::now();
    report("criterion 3 normalization residuals", t, normalization_residuals());
    let t = Instant::now();
    report("criterion 4 order-four oracle", t, order_four_oracle());
    let t = Instant::now();
    report("criterion 5 energy and area conservation", t, conservation());
    let t = Instant::now();
    report("criterion 6 rotation profile", t, rotation_profile_shape());
    let t = Instant::now();
    match reconnection_anchors() {
        Ok((anchors, post)) => {
            report("criterion 7 reconnection anchors", t, Ok(anchors));
            report("criterion 7 profile maximum at mu*", t, Ok(post));
        }
        Err(e) => report("criterion 7 reconnection anchors", t, Err(e)),
    }
    let t = Instant::now();
    report("criterion 8 locus shape", t, locus_shape());
    let t = Instant::now();
    report("criterion 9 action-action charts", t, chart_checks());
    let t = Instant::now();
    report("criterion 10 property suite", t, property_suite());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} check(s) failed");
        ExitCode::FAILURE
    }
}
