//! Deprit's Lie triangle in the complex chart.
//!
//! Conventions (the single place they are fixed):
//!
//! * real variables are ordered `(q1, p1, q2, p2)` with `{q_i, p_i} = 1`;
//! * after the linear step, `H2 = ws/2 (Q1^2 + P1^2) - wl/2 (Q2^2 + P2^2)`;
//! * complex variables `x = (Q + iP)/sqrt2`, `y = (Q - iP)/sqrt2`, so
//!   `Q = (x + y)/sqrt2`, `P = -i (x - y)/sqrt2`, `{x, y} = -i` and the action
//!   is `I = (Q^2 + P^2)/2 = x y`;
//! * `H2 = ws x1 y1 - wl x2 y2`, hence `{x^a y^b, H2} = -i (ws k1 - wl k2)`
//!   times the monomial, with `k = a - b` per mode;
//! * Lie derivative `L_W F = {F, W}`; the triangle is
//!   `H_j^(k) = H_{j+1}^(k-1) + sum_i C(j, i) L_{W_{i+1}} H_{j-i}^(k-1)` with
//!   `H_n^(0) = n! * (degree n+2 part of H)` and new Hamiltonian
//!   `K_n = H_0^(n)`.

use std::collections::BTreeMap;

use nalgebra::Matrix4;
use num_complex::Complex64;

use super::dd::{Cdd, Dd};
use super::linear::{linear_symplectic_normalize, LinearNormalization};
use super::poly::{GradedPoly4, Monomial};
use super::NormalForm;
use crate::dynamics::{frequencies, MassRatio};
use crate::error::{Error, Result};

/// Smallest tolerated `|k1 ws - k2 wl|` during elimination.
pub const DEFAULT_DENOM_FLOOR: f64 = 1e-4;

/// Poisson bracket factor in the complex chart.
pub const COMPLEX_BRACKET: Complex64 = Complex64 { re: 0.0, im: -1.0 };

#[derive(Debug, Clone)]
pub struct Normalization {
    pub normal_form: NormalForm,
    pub linear: LinearNormalization,
    /// Complexified Hamiltonian fed to the triangle.
    pub hamiltonian: GradedPoly4,
    /// `W_1 .. W_N`; `W_n` is homogeneous of degree `n + 2`.
    pub generators: Vec<GradedPoly4>,
    pub report: ResidualReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeResidual {
    pub degree: usize,
    /// Largest non-action coefficient of the transformed Hamiltonian.
    pub non_action: f64,
    /// Largest coefficient of the input Hamiltonian in this degree.
    pub input_scale: f64,
}

impl DegreeResidual {
    pub fn relative(&self) -> f64 {
        if self.input_scale > 0.0 {
            self.non_action / self.input_scale
        } else {
            self.non_action
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub non_action_residual: f64,
    pub imaginary_residue: f64,
    pub per_degree: Vec<DegreeResidual>,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// `Q = (x + y)/sqrt2, P = -i(x - y)/sqrt2` for both modes.
fn complexification() -> [[Cdd; 4]; 4] {
    let h = Dd::new(0.5).sqrt();
    let r = Cdd::new(h, Dd::ZERO);
    let i = Cdd::new(Dd::ZERO, h);
    let z = Cdd::ZERO;
    [[r, r, z, z], [-i, i, z, z], [z, z, r, r], [z, z, -i, i]]
}

/// Combined substitution matrix `M * C` from the complex chart to the
/// shifted L4 variables.
pub fn complex_chart_matrix(m: &Matrix4<f64>) -> [[Cdd; 4]; 4] {
    let c = complexification();
    let mut out = [[Cdd::ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).fold(Cdd::ZERO, |acc, k| acc + c[k][j].scale_f64(m[(i, k)]));
        }
    }
    out
}

/// Frequency attached to monomial `m` by `{m, H2} = lambda(m) m`.
fn eigenvalue(m: &Monomial, h2: [f64; 2]) -> Cdd {
    let k1 = m.0[0] as f64 - m.0[1] as f64;
    let k2 = m.0[2] as f64 - m.0[3] as f64;
    let lam = Dd::new(h2[0]).mul_f64(k1) + Dd::new(h2[1]).mul_f64(k2);
    Cdd::from(COMPLEX_BRACKET).scale(lam)
}

enum Mode<'a> {
    Solve { floor: f64, omega: [f64; 2] },
    Apply(&'a [GradedPoly4]),
}

struct TriangleOutput {
    /// `K_n / n!`, i.e. the degree `n + 2` part of the new Hamiltonian.
    parts: Vec<GradedPoly4>,
    generators: Vec<GradedPoly4>,
}

fn lie_triangle(h: &GradedPoly4, h2: [f64; 2], order: usize, mode: Mode<'_>) -> Result<TriangleOutput> {
    let max_degree = order + 2;
    let h0 = h.degree_part(2);
    // table[k][j] = H_j^(k)
    let mut table: Vec<Vec<GradedPoly4>> = vec![Vec::new(); order + 1];
    for n in 0..=order {
        table[0].push(h.degree_part(n + 2).scale_real(factorial(n)));
    }
    let mut gens: Vec<GradedPoly4> = Vec::with_capacity(order);
    let mut parts = vec![h0.clone()];
    for n in 1..=order {
        let w_known = match &mode {
            Mode::Apply(ws) => Some(
                ws.get(n - 1).cloned().unwrap_or_else(|| GradedPoly4::zero(max_degree)),
            ),
            Mode::Solve { .. } => None,
        };
        for k in 1..=n {
            let j = n - k;
            let mut entry = table[k - 1][j + 1].clone();
            for i in 0..=j {
                let w = if i + 1 == n {
                    match &w_known {
                        Some(w) => w,
                        None => continue,
                    }
                } else {
                    &gens[i]
                };
                let br = table[k - 1][j - i].poisson_bracket(w, COMPLEX_BRACKET);
                entry = &entry + &br.scale_real(binomial(j, i));
            }
            table[k].push(entry);
        }
        let wn = match (&mode, w_known) {
            (Mode::Apply(_), Some(w)) => w,
            (Mode::Solve { floor, omega }, _) => {
                let mut w = GradedPoly4::zero(max_degree);
                for (m, c) in table[n][0].terms_dd() {
                    if m.is_action() {
                        continue;
                    }
                    let k1 = m.0[0] as i32 - m.0[1] as i32;
                    let k2 = m.0[2] as i32 - m.0[3] as i32;
                    let denom = omega[0] * k1 as f64 - omega[1] * k2 as f64;
                    if denom.abs() < *floor {
                        let s = if k1 < 0 || (k1 == 0 && k2 < 0) { -1 } else { 1 };
                        return Err(Error::ResonanceTooClose {
                            k1: s * k1,
                            k2: s * k2,
                            denominator: denom.abs(),
                        });
                    }
                    w.add_term(*m, *c / eigenvalue(m, h2));
                }
                // fold {H0, W_n} into every entry of the current diagonal
                let correction = h0.poisson_bracket(&w, COMPLEX_BRACKET);
                for k in 1..=n {
                    let updated = &table[k][n - k] + &correction;
                    table[k][n - k] = updated;
                }
                w
            }
            (Mode::Apply(_), None) => unreachable!(),
        };
        gens.push(wn);
        let mut part = table[n][0].scale_real(1.0 / factorial(n));
        part.prune();
        parts.push(part);
    }
    Ok(TriangleOutput { parts, generators: gens })
}

fn residual_report(input: &GradedPoly4, parts: &[GradedPoly4]) -> ResidualReport {
    let mut per_degree = Vec::new();
    let mut non_action_residual: f64 = 0.0;
    let mut imaginary_residue: f64 = 0.0;
    for part in parts {
        for (m, c) in part.terms() {
            if m.is_action() {
                imaginary_residue = imaginary_residue.max(c.im.abs());
            }
        }
    }
    for (n, part) in parts.iter().enumerate() {
        let degree = n + 2;
        let non_action = part
            .terms()
            .filter(|(m, _)| !m.is_action())
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max);
        non_action_residual = non_action_residual.max(non_action);
        per_degree.push(DegreeResidual {
            degree,
            non_action,
            input_scale: input.max_abs_in_degree(degree),
        });
    }
    ResidualReport { non_action_residual, imaginary_residue, per_degree }
}

fn extract_normal_form(
    omega_s: f64,
    omega_l: f64,
    parts: &[GradedPoly4],
) -> (BTreeMap<(u32, u32), f64>, f64) {
    let mut coefficients = BTreeMap::new();
    let mut imag: f64 = 0.0;
    coefficients.insert((1, 0), omega_s);
    coefficients.insert((0, 1), -omega_l);
    for part in parts.iter().skip(1) {
        for (m, c) in part.terms() {
            if m.is_action() {
                let j = m.0[0] as u32;
                let k = m.0[2] as u32;
                imag = imag.max(c.im.abs());
                coefficients.insert((j, k), c.re);
            }
        }
    }
    (coefficients, imag)
}

/// Complexified Hamiltonian with an exactly diagonal quadratic part.
pub fn complexify(h: &GradedPoly4, linear: &LinearNormalization) -> GradedPoly4 {
    let sub = complex_chart_matrix(&linear.matrix);
    let mut hc = GradedPoly4::zero(h.max_degree());
    for (m, c) in h.terms_dd().filter(|(m, _)| m.degree() >= 3) {
        hc.add_term(*m, *c);
    }
    let mut hc = hc.linear_substitute(&sub);
    let f = linear.frequencies;
    hc.add_term(Monomial([1, 1, 0, 0]), Complex64::new(f.omega_s, 0.0));
    hc.add_term(Monomial([0, 0, 1, 1]), Complex64::new(-f.omega_l, 0.0));
    hc
}

/// Birkhoff normal form to total degree `degree` of a Taylor expansion about
/// L4 (as produced by [`super::taylor_at_l4`]).
pub fn birkhoff_normalize(
    h: &GradedPoly4,
    mu: MassRatio,
    degree: usize,
    denom_floor: f64,
) -> Result<Normalization> {
    if degree < 2 || degree > h.max_degree() {
        return Err(Error::InvalidParameter(format!(
            "normalization degree {degree} outside 2..={}",
            h.max_degree()
        )));
    }
    let freqs = frequencies(mu)?;
    let h = h.with_max_degree(degree);
    let linear = linear_symplectic_normalize(&h.degree_part(2), freqs)?;
    let hc = complexify(&h, &linear);
    let order = degree - 2;
    let omega = [freqs.omega_s, freqs.omega_l];
    let h2 = [freqs.omega_s, -freqs.omega_l];
    let out = lie_triangle(&hc, h2, order, Mode::Solve { floor: denom_floor, omega })?;
    let report = residual_report(&hc, &out.parts);
    let (coefficients, imaginary) =
        extract_normal_form(freqs.omega_s, freqs.omega_l, &out.parts);
    let verified = nf_verify(&hc, order, &out.generators);
    let normal_form = NormalForm {
        mu: mu.value(),
        omega_s: freqs.omega_s,
        omega_l: freqs.omega_l,
        order: degree,
        coefficients,
        residual: verified.non_action_residual,
        imaginary_residue: imaginary.max(report.imaginary_residue),
    };
    Ok(Normalization { normal_form, linear, hamiltonian: hc, generators: out.generators, report: verified })
}

/// Pushes the complexified Hamiltonian through the given generators (no
/// solving) and reports what is left outside the action monomials.
pub fn nf_verify(hamiltonian: &GradedPoly4, order: usize, generators: &[GradedPoly4]) -> ResidualReport {
    let h2 = [
        hamiltonian.coeff([1, 1, 0, 0]).re,
        hamiltonian.coeff([0, 0, 1, 1]).re,
    ];
    let out = lie_triangle(hamiltonian, h2, order, Mode::Apply(generators))
        .expect("applying fixed generators cannot fail");
    residual_report(hamiltonian, &out.parts)
}
