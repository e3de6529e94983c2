use nalgebra::{Matrix4, Vector4};

use super::poly::{GradedPoly4, Monomial};
use crate::dynamics::Frequencies;
use crate::error::{Error, Result};

/// Symplectic unit for the variable order `(q1, p1, q2, p2)`.
pub fn symplectic_unit() -> Matrix4<f64> {
    Matrix4::new(
        0.0, 1.0, 0.0, 0.0, //
        -1.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, 1.0, //
        0.0, 0.0, -1.0, 0.0,
    )
}

/// Hessian `S` of a quadratic form written as `H2 = z^T S z / 2`.
pub fn hessian_of_quadratic(h2: &GradedPoly4) -> Matrix4<f64> {
    let mut s = Matrix4::zeros();
    for (m, c) in h2.terms().filter(|(m, _)| m.degree() == 2) {
        let idx: Vec<usize> = (0..4).flat_map(|i| std::iter::repeat(i).take(m.0[i] as usize)).collect();
        let (i, j) = (idx[0], idx[1]);
        if i == j {
            s[(i, i)] += 2.0 * c.re;
        } else {
            s[(i, j)] += c.re;
            s[(j, i)] += c.re;
        }
    }
    s
}

/// Quadratic form `z^T S z / 2` as a polynomial.
pub fn quadratic_from_hessian(s: &Matrix4<f64>, max_degree: usize) -> GradedPoly4 {
    let mut p = GradedPoly4::zero(max_degree);
    for i in 0..4 {
        for j in i..4 {
            let mut e = [0u8; 4];
            e[i] += 1;
            e[j] += 1;
            let c = if i == j { 0.5 * s[(i, i)] } else { s[(i, j)] };
            if c != 0.0 {
                p.add_term(Monomial(e), num_complex::Complex64::new(c, 0.0));
            }
        }
    }
    p
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearNormalization {
    /// Columns map new coordinates `(Q1, P1, Q2, P2)` to old ones.
    pub matrix: Matrix4<f64>,
    pub frequencies: Frequencies,
    /// `M^T S M`, expected `diag(ws, ws, -wl, -wl)`.
    pub normalized_hessian: Matrix4<f64>,
}

impl LinearNormalization {
    pub fn symplecticity_defect(&self) -> f64 {
        let j = symplectic_unit();
        (self.matrix.transpose() * j * self.matrix - j).abs().max()
    }
}

/// Real null vector of `A^2 + omega^2` for the mode at `omega`.
fn mode_vector(a: &Matrix4<f64>, omega: f64) -> Result<Vector4<f64>> {
    let k = a * a + Matrix4::identity() * (omega * omega);
    let svd = k.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| Error::DefectiveSpectrum("SVD failed".into()))?;
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let scale = svd.singular_values.max().max(1.0);
    if svd.singular_values[order[1]] > 1e-8 * scale {
        return Err(Error::DefectiveSpectrum(format!(
            "mode at omega = {omega} does not have a two-dimensional eigenspace"
        )));
    }
    Ok(vt.row(order[0]).transpose())
}

/// Real symplectic `M` with `H2(M Z) = ws/2 (Q1^2 + P1^2) - wl/2 (Q2^2 + P2^2)`.
pub fn linear_symplectic_normalize(h2: &GradedPoly4, freqs: Frequencies) -> Result<LinearNormalization> {
    if freqs.omega_s - freqs.omega_l < 1e-6 {
        return Err(Error::DefectiveSpectrum("frequencies coincide (1:1 resonance)".into()));
    }
    let s = hessian_of_quadratic(h2);
    let j = symplectic_unit();
    let a = j * s;
    let mut m = Matrix4::zeros();
    for (slot, (omega, expected_sign)) in
        [(freqs.omega_s, 1.0), (freqs.omega_l, -1.0)].into_iter().enumerate()
    {
        let av = mode_vector(&a, omega)?;
        let mut bv = -(a * av) / omega;
        let kappa = av.dot(&(j * bv));
        let sign = kappa.signum();
        if sign != expected_sign {
            return Err(Error::DefectiveSpectrum(format!(
                "unexpected Krein signature {sign} for omega = {omega}"
            )));
        }
        if sign < 0.0 {
            bv = -bv;
        }
        let norm = kappa.abs().sqrt();
        m.set_column(2 * slot, &(av / norm));
        m.set_column(2 * slot + 1, &(bv / norm));
    }
    let normalized = m.transpose() * s * m;
    Ok(LinearNormalization { matrix: m, frequencies: freqs, normalized_hessian: normalized })
}
