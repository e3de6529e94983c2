//! Truncated polynomials in four variables with complex coefficients.
//!
//! Variables come in canonical pairs `(v0, v1)` and `(v2, v3)`; the Poisson
//! bracket takes the pair structure plus a scalar factor so the same code
//! serves real `(q, p)` charts (factor 1) and complex `(x, y)` charts.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use super::dd::Cdd;

/// Coefficients below this fraction of the largest coefficient of the same
/// degree are dropped. Set near the double-double rounding level.
pub const PRUNE_RELATIVE: f64 = 1e-28;

/// Exponent vector, ordered by total degree first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Monomial(pub [u8; 4]);

impl Monomial {
    pub fn degree(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    /// True for monomials `x1^j y1^j x2^k y2^k`, i.e. products of actions in
    /// the complex chart.
    pub fn is_action(&self) -> bool {
        self.0[0] == self.0[1] && self.0[2] == self.0[3]
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        let mut e = self.0;
        for i in 0..4 {
            e[i] += other.0[i];
        }
        Monomial(e)
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.degree().cmp(&other.degree()).then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradedPoly4 {
    max_degree: usize,
    terms: BTreeMap<Monomial, Cdd>,
}

impl GradedPoly4 {
    pub fn zero(max_degree: usize) -> Self {
        GradedPoly4 { max_degree, terms: BTreeMap::new() }
    }

    pub fn constant(c: impl Into<Cdd>, max_degree: usize) -> Self {
        let mut p = Self::zero(max_degree);
        p.add_term(Monomial([0; 4]), c);
        p
    }

    pub fn variable(index: usize, max_degree: usize) -> Self {
        let mut e = [0u8; 4];
        e[index] = 1;
        let mut p = Self::zero(max_degree);
        p.add_term(Monomial(e), 1.0);
        p
    }

    /// Linear form `sum_i c_i v_i`.
    pub fn linear(coeffs: [Cdd; 4], max_degree: usize) -> Self {
        let mut p = Self::zero(max_degree);
        for (i, c) in coeffs.iter().enumerate() {
            let mut e = [0u8; 4];
            e[i] = 1;
            p.add_term(Monomial(e), *c);
        }
        p
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms with coefficients rounded to double precision.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, Complex64)> {
        self.terms.iter().map(|(m, c)| (m, c.to_c64()))
    }

    pub fn terms_dd(&self) -> impl Iterator<Item = (&Monomial, &Cdd)> {
        self.terms.iter()
    }

    pub fn coeff(&self, exps: [u8; 4]) -> Complex64 {
        self.coeff_dd(exps).to_c64()
    }

    pub fn coeff_dd(&self, exps: [u8; 4]) -> Cdd {
        self.terms.get(&Monomial(exps)).copied().unwrap_or_default()
    }

    /// Adds `c * m`; terms above the degree bound are dropped.
    pub fn add_term(&mut self, m: Monomial, c: impl Into<Cdd>) {
        let c = c.into();
        if m.degree() > self.max_degree || c.is_zero() {
            return;
        }
        let entry = self.terms.entry(m).or_default();
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn with_max_degree(&self, max_degree: usize) -> Self {
        let mut p = Self::zero(max_degree);
        for (m, c) in &self.terms {
            p.add_term(*m, *c);
        }
        p
    }

    /// Homogeneous part of degree `n`.
    pub fn degree_part(&self, n: usize) -> Self {
        let mut p = Self::zero(self.max_degree);
        for (m, c) in self.terms.iter().filter(|(m, _)| m.degree() == n) {
            p.terms.insert(*m, *c);
        }
        p
    }

    /// Largest coefficient magnitude in degree `n` (0 when empty).
    pub fn max_abs_in_degree(&self, n: usize) -> f64 {
        self.terms
            .iter()
            .filter(|(m, _)| m.degree() == n)
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Drops coefficients below `PRUNE_RELATIVE` times the largest magnitude
    /// of the same degree.
    pub fn prune(&mut self) {
        let mut scale = vec![0.0f64; self.max_degree + 1];
        for (m, c) in &self.terms {
            let d = m.degree();
            scale[d] = scale[d].max(c.norm());
        }
        self.terms.retain(|m, c| c.norm() >= PRUNE_RELATIVE * scale[m.degree()] && c.norm() > 0.0);
    }

    pub fn scale(&self, s: impl Into<Cdd>) -> Self {
        let s = s.into();
        let mut p = Self::zero(self.max_degree);
        for (m, c) in &self.terms {
            p.add_term(*m, *c * s);
        }
        p
    }

    pub fn scale_real(&self, s: f64) -> Self {
        let mut p = Self::zero(self.max_degree);
        for (m, c) in &self.terms {
            p.add_term(*m, c.scale_f64(s));
        }
        p
    }

    fn mul_ref(&self, other: &Self) -> Self {
        let max_degree = self.max_degree.min(other.max_degree);
        let mut p = Self::zero(max_degree);
        for (ma, ca) in &self.terms {
            let da = ma.degree();
            for (mb, cb) in &other.terms {
                if da + mb.degree() > max_degree {
                    // terms are degree-ordered
                    break;
                }
                p.add_term(ma.mul(mb), *ca * *cb);
            }
        }
        p.prune();
        p
    }

    pub fn pow(&self, n: u32) -> Self {
        let mut acc = Self::constant(1.0, self.max_degree);
        for _ in 0..n {
            acc = acc.mul_ref(self);
        }
        acc
    }

    /// Partial derivative with respect to variable `index`.
    pub fn derivative(&self, index: usize) -> Self {
        let mut p = Self::zero(self.max_degree);
        for (m, c) in &self.terms {
            let e = m.0[index];
            if e == 0 {
                continue;
            }
            let mut ex = m.0;
            ex[index] -= 1;
            p.add_term(Monomial(ex), c.scale_f64(e as f64));
        }
        p
    }

    /// `factor * sum_pairs (dF/dq dG/dp - dF/dp dG/dq)` with pairs `(0,1)`,
    /// `(2,3)`; truncated at the smaller degree bound.
    pub fn poisson_bracket(&self, other: &Self, factor: impl Into<Cdd>) -> Self {
        let factor = factor.into();
        let max_degree = self.max_degree.min(other.max_degree);
        let mut p = Self::zero(max_degree);
        for (ma, ca) in &self.terms {
            let da = ma.degree();
            for (mb, cb) in &other.terms {
                let db = mb.degree();
                if da + db < 2 || da + db - 2 > max_degree {
                    if da + db >= 2 {
                        break;
                    }
                    continue;
                }
                for pair in [(0usize, 1usize), (2, 3)] {
                    let (q, pp) = pair;
                    // dF/dq dG/dp
                    let (eaq, ebp) = (ma.0[q], mb.0[pp]);
                    if eaq > 0 && ebp > 0 {
                        let mut e = ma.mul(mb).0;
                        e[q] -= 1;
                        e[pp] -= 1;
                        p.add_term(Monomial(e), (*ca * *cb * factor).scale_f64(eaq as f64 * ebp as f64));
                    }
                    // - dF/dp dG/dq
                    let (eap, ebq) = (ma.0[pp], mb.0[q]);
                    if eap > 0 && ebq > 0 {
                        let mut e = ma.mul(mb).0;
                        e[q] -= 1;
                        e[pp] -= 1;
                        p.add_term(Monomial(e), (*ca * *cb * factor).scale_f64(-(eap as f64 * ebq as f64)));
                    }
                }
            }
        }
        p.prune();
        p
    }

    /// Substitutes `old_i = sum_j matrix[i][j] new_j`.
    pub fn linear_substitute(&self, matrix: &[[Cdd; 4]; 4]) -> Self {
        let forms: Vec<GradedPoly4> =
            (0..4).map(|i| GradedPoly4::linear(matrix[i], self.max_degree)).collect();
        // cache powers of each linear form
        let mut powers: Vec<Vec<GradedPoly4>> = Vec::with_capacity(4);
        for f in &forms {
            let mut v = vec![GradedPoly4::constant(1.0, self.max_degree)];
            for k in 1..=self.max_degree {
                let next = v[k - 1].mul_ref(f);
                v.push(next);
            }
            powers.push(v);
        }
        let mut out = Self::zero(self.max_degree);
        for (m, c) in &self.terms {
            let mut term = GradedPoly4::constant(*c, self.max_degree);
            for i in 0..4 {
                let e = m.0[i] as usize;
                if e > 0 {
                    term = term.mul_ref(&powers[i][e]);
                }
            }
            out = &out + &term;
        }
        out.prune();
        out
    }

    pub fn eval(&self, point: [Complex64; 4]) -> Complex64 {
        self.terms
            .iter()
            .map(|(m, c)| {
                let mut v = c.to_c64();
                for i in 0..4 {
                    if m.0[i] > 0 {
                        v *= point[i].powu(m.0[i] as u32);
                    }
                }
                v
            })
            .sum()
    }

    pub fn eval_real(&self, point: [f64; 4]) -> Complex64 {
        self.eval(point.map(|v| Complex64::new(v, 0.0)))
    }
}

impl<'a> Add<&'a GradedPoly4> for &'a GradedPoly4 {
    type Output = GradedPoly4;
    fn add(self, rhs: &GradedPoly4) -> GradedPoly4 {
        let mut p = self.with_max_degree(self.max_degree.min(rhs.max_degree));
        for (m, c) in &rhs.terms {
            p.add_term(*m, *c);
        }
        p
    }
}

impl<'a> Sub<&'a GradedPoly4> for &'a GradedPoly4 {
    type Output = GradedPoly4;
    fn sub(self, rhs: &GradedPoly4) -> GradedPoly4 {
        let mut p = self.with_max_degree(self.max_degree.min(rhs.max_degree));
        for (m, c) in &rhs.terms {
            p.add_term(*m, -*c);
        }
        p
    }
}

impl<'a> Mul<&'a GradedPoly4> for &'a GradedPoly4 {
    type Output = GradedPoly4;
    fn mul(self, rhs: &GradedPoly4) -> GradedPoly4 {
        self.mul_ref(rhs)
    }
}

impl Neg for &GradedPoly4 {
    type Output = GradedPoly4;
    fn neg(self) -> GradedPoly4 {
        self.scale_real(-1.0)
    }
}

impl fmt::Display for GradedPoly4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (m, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            let c = c.to_c64();
            write!(f, "({:.6e}{:+.6e}i)*v^{:?}", c.re, c.im, m.0)?;
        }
        Ok(())
    }
}
