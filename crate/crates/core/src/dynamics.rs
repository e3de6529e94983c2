//! Planar circular restricted three-body problem in the rotating frame and in
//! Thiele-regularized extended phase space.
//!
//! Conventions: primaries one unit apart, total mass one, heavier primary
//! (mass `1 - mu`) at `z = -1/2`, lighter primary (mass `mu`) at `z = +1/2`.
//! With `z = x + iy` and `p_z = p_x - i p_y` the Hamiltonian is
//!
//! ```text
//! H = |p_z|^2 / 2 + Im((z + 1/2 - mu) p_z) - (1-mu)/|z+1/2| - mu/|z-1/2| + s
//!   = (px^2 + py^2)/2 + y px - (x + 1/2 - mu) py - (1-mu)/r1 - mu/r2 + s
//! ```
//!
//! where `s = (3 + mu(mu-1))/2` shifts the energy so that `H(L4) = 0`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Largest mass ratio for which L4 is linearly stable, `0.5 (1 - sqrt(69)/9)`.
pub fn mu1() -> f64 {
    0.5 * (1.0 - 69f64.sqrt() / 9.0)
}

/// Mass fraction `m2 / (m1 + m2)` of the lighter primary.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct MassRatio(f64);

impl MassRatio {
    pub fn new(mu: f64) -> Result<Self> {
        if !mu.is_finite() || mu <= 0.0 || mu > 0.5 {
            return Err(Error::InvalidParameter(format!(
                "mass ratio must lie in (0, 1/2], got {mu}"
            )));
        }
        Ok(MassRatio(mu))
    }

    /// Like [`MassRatio::new`] but additionally requires an elliptic L4.
    pub fn elliptic(mu: f64) -> Result<Self> {
        let m = Self::new(mu)?;
        m.require_elliptic()?;
        Ok(m)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn require_elliptic(self) -> Result<()> {
        // Tolerate rounding at mu_1 itself, where the two frequencies merge.
        if self.0 > mu1() * (1.0 + 1e-12) {
            return Err(Error::HyperbolicEquilibrium { mu: self.0, mu1: mu1() });
        }
        Ok(())
    }

    /// Energy shift `s = (3 + mu(mu - 1)) / 2`.
    pub fn energy_shift(self) -> f64 {
        0.5 * (3.0 + self.0 * (self.0 - 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotatingState {
    pub x: f64,
    pub y: f64,
    pub px: f64,
    pub py: f64,
}

impl RotatingState {
    pub fn new(x: f64, y: f64, px: f64, py: f64) -> Self {
        RotatingState { x, y, px, py }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        RotatingState::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.px, self.py]
    }

    pub fn z(self) -> Complex64 {
        Complex64::new(self.x, self.y)
    }

    pub fn pz(self) -> Complex64 {
        Complex64::new(self.px, -self.py)
    }

    /// Image under the time-reversing reflection `(y, px) -> (-y, -px)`.
    pub fn reflected(self) -> Self {
        RotatingState::new(self.x, -self.y, -self.px, self.py)
    }

    pub fn is_finite(self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Point `(u, v, pu, pv)` of the Thiele chart `z = cos(w)/2`, `w = u + iv`,
/// `p_w = pu - i pv`, together with the accumulated physical time and the
/// fixed energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizedState {
    pub u: f64,
    pub v: f64,
    pub pu: f64,
    pub pv: f64,
    pub t: f64,
    pub energy: f64,
}

impl RegularizedState {
    /// Integration vector `(u, v, pu, pv, t)`; the energy rides along as a
    /// parameter.
    pub fn to_array(self) -> [f64; 5] {
        [self.u, self.v, self.pu, self.pv, self.t]
    }

    pub fn from_array(a: [f64; 5], energy: f64) -> Self {
        RegularizedState { u: a[0], v: a[1], pu: a[2], pv: a[3], t: a[4], energy }
    }

    pub fn w(self) -> Complex64 {
        Complex64::new(self.u, self.v)
    }

    pub fn pw(self) -> Complex64 {
        Complex64::new(self.pu, -self.pv)
    }

    /// `|sin w|^2`, which vanishes exactly at the two primaries.
    pub fn sin_w_sq(self) -> f64 {
        let s = self.u.sin();
        let sh = self.v.sinh();
        s * s + sh * sh
    }
}

/// Linear frequencies at L4, `omega_s >= omega_l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frequencies {
    pub omega_s: f64,
    pub omega_l: f64,
}

impl Frequencies {
    pub fn ratio(self) -> f64 {
        self.omega_s / self.omega_l
    }
}

/// Roots of `omega^4 - omega^2 + 27 mu (1 - mu) / 4 = 0`.
pub fn frequencies(mu: MassRatio) -> Result<Frequencies> {
    mu.require_elliptic()?;
    let m = mu.value();
    let prod = 27.0 * m * (1.0 - m) / 4.0;
    let disc = 1.0 - 4.0 * prod;
    let root = if disc < 0.0 { 0.0 } else { disc.sqrt() };
    let ws2 = 0.5 * (1.0 + root);
    if root == 0.0 {
        return Ok(Frequencies { omega_s: FRAC_1_SQRT_2, omega_l: FRAC_1_SQRT_2 });
    }
    // Product form keeps the small root accurate.
    let wl2 = prod / ws2;
    Ok(Frequencies { omega_s: ws2.sqrt(), omega_l: wl2.sqrt() })
}

/// Mass ratio at which `omega_s / omega_l = r` (the smaller root).
pub fn mass_ratio_for_resonance(r: f64) -> Result<MassRatio> {
    if !r.is_finite() || r < 1.0 {
        return Err(Error::InvalidParameter(format!("frequency ratio must exceed 1, got {r}")));
    }
    let p = r * r / ((1.0 + r * r) * (1.0 + r * r));
    let c = 4.0 * p / 27.0;
    let mu = 2.0 * c / (1.0 + (1.0 - 4.0 * c).max(0.0).sqrt());
    MassRatio::new(mu)
}

/// Jacobi constant corresponding to the shifted energy `E`.
pub fn jacobi_constant(energy: f64, mu: MassRatio) -> f64 {
    -2.0 * (energy - mu.energy_shift())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LagrangePoint {
    L4,
    L5,
}

/// The rotating-frame Hamiltonian for one mass ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cr3bp {
    pub mu: MassRatio,
    s: f64,
}

impl Cr3bp {
    pub fn new(mu: MassRatio) -> Self {
        Cr3bp { mu, s: mu.energy_shift() }
    }

    pub fn with_mu(mu: f64) -> Result<Self> {
        Ok(Self::new(MassRatio::new(mu)?))
    }

    pub fn energy_shift(&self) -> f64 {
        self.s
    }

    fn m(&self) -> f64 {
        self.mu.value()
    }

    pub fn energy_rotating(&self, st: &RotatingState) -> Result<f64> {
        let m = self.m();
        let r1 = ((st.x + 0.5).powi(2) + st.y * st.y).sqrt();
        let r2 = ((st.x - 0.5).powi(2) + st.y * st.y).sqrt();
        if r1 == 0.0 || r2 == 0.0 {
            return Err(Error::NonFiniteValue("energy at a primary".into()));
        }
        let h = 0.5 * (st.px * st.px + st.py * st.py) + st.y * st.px
            - (st.x + 0.5 - m) * st.py
            - (1.0 - m) / r1
            - m / r2
            + self.s;
        if !h.is_finite() {
            return Err(Error::NonFiniteValue("energy".into()));
        }
        Ok(h)
    }

    /// Canonical equations `(dH/dp, -dH/dq)`.
    pub fn vector_field_rotating(&self, st: &RotatingState) -> Result<RotatingState> {
        let m = self.m();
        let dx1 = st.x + 0.5;
        let dx2 = st.x - 0.5;
        let r1sq = dx1 * dx1 + st.y * st.y;
        let r2sq = dx2 * dx2 + st.y * st.y;
        if r1sq == 0.0 || r2sq == 0.0 {
            return Err(Error::NonFiniteValue("vector field at a primary".into()));
        }
        let k1 = (1.0 - m) / (r1sq * r1sq.sqrt());
        let k2 = m / (r2sq * r2sq.sqrt());
        let out = RotatingState {
            x: st.px + st.y,
            y: st.py - (st.x + 0.5 - m),
            px: st.py - (k1 * dx1 + k2 * dx2),
            py: -st.px - (k1 + k2) * st.y,
        };
        if !out.is_finite() {
            return Err(Error::NonFiniteValue("vector field".into()));
        }
        Ok(out)
    }

    pub fn lagrange_point(&self, which: LagrangePoint) -> RotatingState {
        let l4 = RotatingState::new(0.0, 0.5 * SQRT3, -0.5 * SQRT3, 0.5 - self.m());
        match which {
            LagrangePoint::L4 => l4,
            LagrangePoint::L5 => l4.reflected(),
        }
    }

    /// Regularized Hamiltonian `K = |sin w|^2 (H - E) / 4`, written in the
    /// globally regular real form.
    pub fn energy_regularized(&self, reg: &RegularizedState) -> f64 {
        let k = 1.0 - 2.0 * self.m();
        let (su, cu) = reg.u.sin_cos();
        let (shv, chv) = (reg.v.sinh(), reg.v.cosh());
        let c2u = cu * cu - su * su;
        let ch2v = chv * chv + shv * shv;
        0.5 * (reg.pu * reg.pu + reg.pv * reg.pv)
            + 0.5 * (k * cu - chv)
            + 0.25 * su * (k * chv + cu) * reg.pv
            + 0.25 * shv * (k * cu + chv) * reg.pu
            + 0.125 * (c2u - ch2v) * (reg.energy - self.s)
    }

    /// Derivative of `(u, v, pu, pv, t)` with respect to fictitious time.
    pub fn vector_field_regularized(&self, reg: &RegularizedState) -> [f64; 5] {
        let k = 1.0 - 2.0 * self.m();
        let (su, cu) = reg.u.sin_cos();
        let (shv, chv) = (reg.v.sinh(), reg.v.cosh());
        let s2u = 2.0 * su * cu;
        let c2u = cu * cu - su * su;
        let sh2v = 2.0 * shv * chv;
        let ch2v = chv * chv + shv * shv;
        let de = reg.energy - self.s;
        let (pu, pv) = (reg.pu, reg.pv);

        let du = pu + 0.25 * shv * (chv + k * cu);
        let dv = pv + 0.25 * su * (cu + k * chv);
        let dk_du = -0.5 * k * su + 0.25 * pv * (c2u + k * cu * chv)
            - 0.25 * k * pu * su * shv
            - 0.25 * s2u * de;
        let dk_dv = -0.5 * shv + 0.25 * k * pv * su * shv + 0.25 * pu * (ch2v + k * cu * chv)
            - 0.25 * sh2v * de;
        let dt = 0.125 * (ch2v - c2u);
        [du, dv, -dk_du, -dk_dv, dt]
    }

    /// Evaluates the section line `g` and its fictitious-time derivative.
    pub fn section_value_regularized(&self, reg: &RegularizedState) -> (f64, f64) {
        let w = reg.w();
        let cw = w.cos();
        let g = 0.5 * (SQRT3 * cw.re - cw.im) + 0.5 * SQRT3;
        let d = self.vector_field_regularized(reg);
        // dz/dtau = -sin(w) dw/dtau / 2
        let dz = -0.5 * w.sin() * Complex64::new(d[0], d[1]);
        (g, SQRT3 * dz.re - dz.im)
    }
}

/// Maps a rotating-frame state into the Thiele chart on the principal branch
/// `u in [0, pi]`.
pub fn to_regularized(state: &RotatingState, energy: f64) -> Result<RegularizedState> {
    let z = state.z();
    let w = (2.0 * z).acos();
    let sw = w.sin();
    if sw.norm() < 1e-12 {
        return Err(Error::BranchPoint { z: z.re });
    }
    let pw = -0.5 * state.pz() * sw;
    let mut u = w.re;
    let mut v = w.im;
    if u < 0.0 {
        // acos should already land in [0, pi]; keep the chart canonical anyway
        u = -u;
        v = -v;
    }
    debug_assert!(u <= PI + 1e-12);
    Ok(RegularizedState { u, v, pu: pw.re, pv: -pw.im, t: 0.0, energy })
}

pub fn from_regularized(reg: &RegularizedState) -> Result<RotatingState> {
    let w = reg.w();
    let sw = w.sin();
    if sw.norm() < 1e-12 {
        return Err(Error::BranchPoint { z: 0.5 * w.cos().re });
    }
    let z = 0.5 * w.cos();
    let pz = -2.0 * reg.pw() / sw;
    Ok(RotatingState::new(z.re, z.im, pz.re, -pz.im))
}
