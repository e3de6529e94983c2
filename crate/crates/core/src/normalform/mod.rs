//! Birkhoff normal form of the L4 Hamiltonian with numerical coefficients.
//!
//! The pipeline is `taylor_at_l4` -> `linear_symplectic_normalize` ->
//! complexification -> Deprit triangle. The result is a polynomial in the
//! actions `(I_s, I_l)`:
//!
//! ```text
//! H = ws I_s - wl I_l + A/2 I_s^2 + B I_s I_l + C/2 I_l^2 + ...
//! ```

pub mod birkhoff;
pub mod dd;
pub mod linear;
pub mod poly;
pub mod taylor;

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::value::RawValue;

use crate::dynamics::MassRatio;
use crate::error::{Error, Result};

pub use birkhoff::{birkhoff_normalize, nf_verify, Normalization, ResidualReport, DEFAULT_DENOM_FLOOR};
pub use linear::{linear_symplectic_normalize, LinearNormalization};
pub use poly::{GradedPoly4, Monomial};
pub use taylor::{taylor_at_l4, taylor_expansion_full};

/// Degree used throughout unless stated otherwise.
pub const DEFAULT_DEGREE: usize = 8;

/// Polynomial in the two actions, `sum c_jk I_s^j I_l^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalForm {
    pub mu: f64,
    pub omega_s: f64,
    pub omega_l: f64,
    /// Total degree in the phase-space variables (twice the action degree).
    pub order: usize,
    pub coefficients: BTreeMap<(u32, u32), f64>,
    /// Largest non-action coefficient left after pushing the Hamiltonian
    /// through the generators.
    pub residual: f64,
    /// Largest imaginary part among action coefficients.
    pub imaginary_residue: f64,
}

/// First and second action derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionDerivatives {
    pub h: f64,
    pub h1: f64,
    pub h2: f64,
    pub h11: f64,
    pub h12: f64,
    pub h22: f64,
}

impl NormalForm {
    pub fn coeff(&self, j: u32, k: u32) -> f64 {
        self.coefficients.get(&(j, k)).copied().unwrap_or(0.0)
    }

    /// `A`, `B`, `C` of the quadratic-in-actions part.
    pub fn abc(&self) -> (f64, f64, f64) {
        (2.0 * self.coeff(2, 0), self.coeff(1, 1), 2.0 * self.coeff(0, 2))
    }

    /// Keeps terms of phase-space degree at most `degree`.
    pub fn truncated(&self, degree: usize) -> NormalForm {
        let max = (degree / 2) as u32;
        let mut nf = self.clone();
        nf.coefficients.retain(|(j, k), _| j + k <= max);
        nf.order = degree.min(self.order);
        nf
    }

    pub fn derivatives(&self, is: f64, il: f64) -> ActionDerivatives {
        let pw = |x: f64, e: i32| if e < 0 { 0.0 } else { x.powi(e) };
        let mut d = ActionDerivatives { h: 0.0, h1: 0.0, h2: 0.0, h11: 0.0, h12: 0.0, h22: 0.0 };
        for (&(j, k), &c) in &self.coefficients {
            let (j, k) = (j as i32, k as i32);
            let (jf, kf) = (j as f64, k as f64);
            d.h += c * pw(is, j) * pw(il, k);
            d.h1 += c * jf * pw(is, j - 1) * pw(il, k);
            d.h2 += c * kf * pw(is, j) * pw(il, k - 1);
            d.h11 += c * jf * (jf - 1.0) * pw(is, j - 2) * pw(il, k);
            d.h12 += c * jf * kf * pw(is, j - 1) * pw(il, k - 1);
            d.h22 += c * kf * (kf - 1.0) * pw(is, j) * pw(il, k - 2);
        }
        d
    }

    /// Mixed partial `d^(ds+dl) H / dI_s^ds dI_l^dl`.
    pub fn partial(&self, ds: u32, dl: u32, is: f64, il: f64) -> f64 {
        let falling = |n: u32, m: u32| (0..m).map(|i| (n - i) as f64).product::<f64>();
        self.coefficients
            .iter()
            .filter(|(&(j, k), _)| j >= ds && k >= dl)
            .map(|(&(j, k), &c)| {
                c * falling(j, ds) * falling(k, dl) * is.powi((j - ds) as i32) * il.powi((k - dl) as i32)
            })
            .sum()
    }

    pub fn energy(&self, is: f64, il: f64) -> f64 {
        self.derivatives(is, il).h
    }

    /// Smallest positive `I_s` with `H(I_s, I_l) = E`, by bracketing from
    /// the linear estimate followed by safeguarded Newton.
    pub fn solve_is(&self, energy: f64, il: f64) -> Result<f64> {
        let f = |is: f64| self.energy(is, il) - energy;
        let f0 = f(0.0);
        if f0 == 0.0 {
            return Ok(0.0);
        }
        if f0 > 0.0 {
            return Err(Error::NoPositiveRoot(energy));
        }
        let guess = ((energy + self.omega_l * il) / self.omega_s).abs().max(1e-9);
        let step = guess / 8.0;
        let (mut lo, mut hi) = (0.0, f64::NAN);
        let mut x = 0.0;
        for _ in 0..4000 {
            let nx = x + step;
            if f(nx) >= 0.0 {
                lo = x;
                hi = nx;
                break;
            }
            x = nx;
        }
        if hi.is_nan() {
            return Err(Error::NoPositiveRoot(energy));
        }
        let mut r = 0.5 * (lo + hi);
        for _ in 0..100 {
            let d = self.derivatives(r, il);
            let val = d.h - energy;
            if val == 0.0 {
                return Ok(r);
            }
            if val < 0.0 {
                lo = r;
            } else {
                hi = r;
            }
            let mut next = r - val / d.h1;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - r).abs() <= 1e-16 * (1.0 + r.abs()) || hi - lo < 1e-17 {
                return Ok(next);
            }
            r = next;
        }
        Ok(r)
    }

    /// Serializes as `{ mu, omega_s, omega_l, coefficients: [{j, k, value}],
    /// order, residual }` with 17 significant digits.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Coef {
            j: u32,
            k: u32,
            value: Box<RawValue>,
        }
        #[derive(Serialize)]
        struct Doc {
            mu: Box<RawValue>,
            omega_s: Box<RawValue>,
            omega_l: Box<RawValue>,
            coefficients: Vec<Coef>,
            order: usize,
            residual: Box<RawValue>,
        }
        let doc = Doc {
            mu: raw17(self.mu)?,
            omega_s: raw17(self.omega_s)?,
            omega_l: raw17(self.omega_l)?,
            coefficients: self
                .coefficients
                .iter()
                .map(|(&(j, k), &v)| Ok(Coef { j, k, value: raw17(v)? }))
                .collect::<Result<_>>()?,
            order: self.order,
            residual: raw17(self.residual)?,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<NormalForm> {
        let v: serde_json::Value = serde_json::from_str(text)?;
        let num = |key: &str| -> Result<f64> {
            v.get(key)
                .and_then(|x| x.as_f64())
                .ok_or_else(|| Error::Io(format!("normal form JSON lacks `{key}`")))
        };
        let mut coefficients = BTreeMap::new();
        let list = v
            .get("coefficients")
            .and_then(|c| c.as_array())
            .ok_or_else(|| Error::Io("normal form JSON lacks `coefficients`".into()))?;
        for c in list {
            let j = c.get("j").and_then(|x| x.as_u64());
            let k = c.get("k").and_then(|x| x.as_u64());
            let val = c.get("value").and_then(|x| x.as_f64());
            match (j, k, val) {
                (Some(j), Some(k), Some(val)) => {
                    coefficients.insert((j as u32, k as u32), val);
                }
                _ => return Err(Error::Io("malformed coefficient entry".into())),
            }
        }
        Ok(NormalForm {
            mu: num("mu")?,
            omega_s: num("omega_s")?,
            omega_l: num("omega_l")?,
            order: v.get("order").and_then(|x| x.as_u64()).unwrap_or(8) as usize,
            coefficients,
            residual: num("residual")?,
            imaginary_residue: 0.0,
        })
    }
}

fn raw17(x: f64) -> Result<Box<RawValue>> {
    if !x.is_finite() {
        return Err(Error::NonFiniteValue("cannot serialize non-finite number".into()));
    }
    Ok(RawValue::from_string(format!("{x:.16e}"))?)
}

/// Taylor expansion plus Birkhoff normalization at one mass ratio.
pub fn normal_form(mu: f64, degree: usize) -> Result<Normalization> {
    let m = MassRatio::elliptic(mu)?;
    let h = taylor_at_l4(m, degree)?;
    birkhoff_normalize(&h, m, degree, DEFAULT_DENOM_FLOOR)
}

fn check_actions(is: f64, il: f64) -> Result<()> {
    if !(is >= 0.0 && il >= 0.0) {
        return Err(Error::InvalidParameter(format!("actions must be non-negative, got ({is}, {il})")));
    }
    Ok(())
}

/// Frequency ratio `W = -H_l / H_s`.
pub fn nf_rotation_number(nf: &NormalForm, is: f64, il: f64) -> Result<f64> {
    check_actions(is, il)?;
    let d = nf.derivatives(is, il);
    if d.h1.abs() < 1e-14 {
        return Err(Error::DegenerateFrequency);
    }
    Ok(-d.h2 / d.h1)
}

/// Twist function `C = H11 H2^2 + H22 H1^2 - 2 H12 H1 H2`.
pub fn nf_twist(nf: &NormalForm, is: f64, il: f64) -> Result<f64> {
    check_actions(is, il)?;
    let d = nf.derivatives(is, il);
    if d.h1.abs() < 1e-14 {
        return Err(Error::DegenerateFrequency);
    }
    Ok(twist_from(&d))
}

pub(crate) fn twist_from(d: &ActionDerivatives) -> f64 {
    d.h11 * d.h2 * d.h2 + d.h22 * d.h1 * d.h1 - 2.0 * d.h12 * d.h1 * d.h2
}

/// Rotation number of the short-period family (`I_l = 0`) at energy `E`.
pub fn short_period_w_of_e(nf: &NormalForm, energy: f64) -> Result<f64> {
    if !(energy >= 0.0) {
        return Err(Error::InvalidParameter(format!("energy must be non-negative, got {energy}")));
    }
    let is = nf.solve_is(energy, 0.0)?;
    nf_rotation_number(nf, is, 0.0)
}
