use num_complex::Complex64;

use super::poly::GradedPoly4;
use crate::dynamics::{Cr3bp, LagrangePoint, MassRatio, SQRT3};
use crate::error::{Error, Result};

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// `(1 + eps)^(-1/2)` for a polynomial `eps` without constant term.
fn inverse_sqrt_series(eps: &GradedPoly4) -> GradedPoly4 {
    let n = eps.max_degree();
    let mut out = GradedPoly4::constant(re(1.0), n);
    let mut power = GradedPoly4::constant(re(1.0), n);
    let mut binom = 1.0;
    for k in 1..=n {
        // binom(-1/2, k)
        binom *= (-0.5 - (k as f64 - 1.0)) / k as f64;
        power = &power * eps;
        out = &out + &power.scale_real(binom);
    }
    out
}

/// Full Taylor polynomial of the rotating Hamiltonian about L4 in the
/// shifted canonical variables `(xi, p_xi, eta, p_eta)`, including the
/// (vanishing) degree-0 and degree-1 parts.
pub fn taylor_expansion_full(mu: MassRatio, max_degree: usize) -> Result<GradedPoly4> {
    mu.require_elliptic()?;
    if max_degree < 2 {
        return Err(Error::InvalidParameter("max_degree must be at least 2".into()));
    }
    let sys = Cr3bp::new(mu);
    let m = mu.value();
    let l4 = sys.lagrange_point(LagrangePoint::L4);
    let n = max_degree;
    let xi = GradedPoly4::variable(0, n);
    let pxi = GradedPoly4::variable(1, n);
    let eta = GradedPoly4::variable(2, n);
    let peta = GradedPoly4::variable(3, n);
    let one = |c: f64| GradedPoly4::constant(re(c), n);

    let x = &xi + &one(l4.x);
    let y = &eta + &one(l4.y);
    let px = &pxi + &one(l4.px);
    let py = &peta + &one(l4.py);

    let kinetic = (&(&px * &px) + &(&py * &py)).scale_real(0.5);
    let coriolis = &(&y * &px) - &(&(&x + &one(0.5 - m)) * &py);

    // r^2 = 1 + eps with the L4 distance to each primary equal to one
    let quad = &(&xi * &xi) + &(&eta * &eta);
    let eps1 = &(&xi + &eta.scale_real(SQRT3)) + &quad;
    let eps2 = &(&(-&xi) + &eta.scale_real(SQRT3)) + &quad;
    let potential = &inverse_sqrt_series(&eps1).scale_real(-(1.0 - m))
        + &inverse_sqrt_series(&eps2).scale_real(-m);

    let mut h = &(&(&kinetic + &coriolis) + &potential) + &one(sys.energy_shift());
    h.prune();
    Ok(h)
}

/// Taylor polynomial about L4, degrees `2..=max_degree`.
pub fn taylor_at_l4(mu: MassRatio, max_degree: usize) -> Result<GradedPoly4> {
    let full = taylor_expansion_full(mu, max_degree)?;
    let mut out = GradedPoly4::zero(max_degree);
    for (m, c) in full.terms_dd().filter(|(m, _)| m.degree() >= 2) {
        out.add_term(*m, *c);
    }
    Ok(out)
}
