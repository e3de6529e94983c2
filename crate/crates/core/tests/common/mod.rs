//! Helpers shared by the integration tests.

use std::collections::HashMap;

use num_complex::Complex64;
use vtwist::normalform::GradedPoly4;

/// Degree-4 normal form by the closed formula `<H4 + {H3, W3}/2>` with
/// `W3 = H3 / lambda`, on a plain hash-map representation.
pub fn order_four_oracle(h: &GradedPoly4) -> HashMap<(u32, u32), f64> {
    type P = HashMap<[u8; 4], Complex64>;
    let part = |d: usize| -> P { h.terms().filter(|(m, _)| m.degree() == d).map(|(m, c)| (m.0, c)).collect() };
    let ws = h.coeff([1, 1, 0, 0]).re;
    let wl = h.coeff([0, 0, 1, 1]).re;
    let h3 = part(3);
    let h4 = part(4);
    let w3: P = h3
        .iter()
        .map(|(e, c)| {
            let k1 = e[0] as f64 - e[1] as f64;
            let k2 = e[2] as f64 - e[3] as f64;
            (*e, c / Complex64::new(0.0, -(ws * k1 + wl * k2)))
        })
        .collect();
    let bracket = |f: &P, g: &P| -> P {
        let mut out = P::new();
        for (ef, cf) in f {
            for (eg, cg) in g {
                for (x, y) in [(0, 1), (2, 3)] {
                    let mut terms = Vec::new();
                    if ef[x] > 0 && eg[y] > 0 {
                        terms.push((x, y, (ef[x] * eg[y]) as f64));
                    }
                    if ef[y] > 0 && eg[x] > 0 {
                        terms.push((y, x, -((ef[y] * eg[x]) as f64)));
                    }
                    for (a, b, n) in terms {
                        let mut e = [0u8; 4];
                        for i in 0..4 {
                            e[i] = ef[i] + eg[i];
                        }
                        e[a] -= 1;
                        e[b] -= 1;
                        *out.entry(e).or_default() += cf * cg * Complex64::new(0.0, -n);
                    }
                }
            }
        }
        out
    };
    let mut k4 = h4;
    for (e, c) in bracket(&h3, &w3) {
        *k4.entry(e).or_default() += 0.5 * c;
    }
    k4.into_iter()
        .filter(|(e, _)| e[0] == e[1] && e[2] == e[3])
        .map(|(e, c)| ((e[0] as u32, e[2] as u32), c.re))
        .collect()
}
