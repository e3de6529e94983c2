//! Twist analysis in action space: the twistless curve `C = 0`, action-action
//! charts, the critical mass ratio and reconnection loci in `(mu, E)`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{mass_ratio_for_resonance, Cr3bp};
use crate::normalform::{normal_form, NormalForm, DEFAULT_DEGREE};
use crate::rotation::{default_config, ray_seeds, rotation_profile, short_period_fixed_point, ProfileEntry};
use crate::section::{fmt17, DEFAULT_DIRECTION};
use crate::{Error, Result};

/// Energy defining the default action cap: `H(I_s, 0) <= 0.12`.
pub const DEFAULT_CAP_ENERGY: f64 = 0.12;
/// Spacing of the energy iso-lines in charts.
pub const ENERGY_SPACING: f64 = 0.01;
/// Largest `|C|` accepted on a twistless vertex.
pub const TWIST_TOLERANCE: f64 = 1e-10;
/// Largest normalized `H_1 W_2 - H_2 W_1` accepted on a twistless vertex.
pub const TANGENCY_TOLERANCE: f64 = 1e-8;
/// Residual bound for reconnection points.
pub const LOCUS_TOLERANCE: f64 = 1e-8;

const RAY_COUNT: usize = 33;
const RAY_SAMPLES: usize = 600;
const MAX_VERTICES: usize = 20000;

// ---------------------------------------------------------------------------
// Rationals and Farey contours

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Rational {
    pub p: u32,
    pub q: u32,
}

impl Rational {
    pub fn new(p: u32, q: u32) -> Result<Self> {
        if q == 0 || p == 0 || p >= q {
            return Err(Error::InvalidParameter(format!("rotation number {p}/{q} must lie in (0, 1)")));
        }
        Ok(Rational { p, q })
    }

    pub fn value(self) -> f64 {
        self.p as f64 / self.q as f64
    }

    fn mediant(self, other: Rational) -> Rational {
        Rational { p: self.p + other.p, q: self.q + other.q }
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.p, self.q)
    }
}

impl FromStr for Rational {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("expected p/q, got {s:?}"));
        let (p, q) = s.trim().split_once('/').ok_or_else(bad)?;
        Rational::new(p.trim().parse().map_err(|_| bad())?, q.trim().parse().map_err(|_| bad())?)
    }
}

/// Rationals of the Farey tree between `lo` and `hi` (exclusive), up to
/// `depth` levels of mediants, in increasing order.
pub fn farey_between(lo: Rational, hi: Rational, depth: usize) -> Vec<Rational> {
    let mut row = vec![lo, hi];
    for _ in 0..depth {
        let mut next = Vec::with_capacity(2 * row.len());
        for w in row.windows(2) {
            next.push(w[0]);
            next.push(w[0].mediant(w[1]));
        }
        next.push(*row.last().unwrap());
        row = next;
    }
    row[1..row.len() - 1].to_vec()
}

// ---------------------------------------------------------------------------
// Twist and rotation number with gradients

/// `C(I)` and its gradient.
pub fn twist_gradient(nf: &NormalForm, is: f64, il: f64) -> (f64, [f64; 2]) {
    let h = |a, b| nf.partial(a, b, is, il);
    let (h1, h2) = (h(1, 0), h(0, 1));
    let (h11, h12, h22) = (h(2, 0), h(1, 1), h(0, 2));
    let (h111, h112, h122, h222) = (h(3, 0), h(2, 1), h(1, 2), h(0, 3));
    let c = h11 * h2 * h2 + h22 * h1 * h1 - 2.0 * h12 * h1 * h2;
    let cs = h111 * h2 * h2 + 2.0 * h11 * h2 * h12 + h122 * h1 * h1 + 2.0 * h22 * h1 * h11
        - 2.0 * (h112 * h1 * h2 + h12 * h11 * h2 + h12 * h1 * h12);
    let cl = h112 * h2 * h2 + 2.0 * h11 * h2 * h22 + h222 * h1 * h1 + 2.0 * h22 * h1 * h12
        - 2.0 * (h122 * h1 * h2 + h12 * h12 * h2 + h12 * h1 * h22);
    (c, [cs, cl])
}

/// `W = -H_2 / H_1` and its gradient.
pub fn rotation_gradient(nf: &NormalForm, is: f64, il: f64) -> (f64, [f64; 2]) {
    let d = nf.derivatives(is, il);
    let w = -d.h2 / d.h1;
    let g1 = -(d.h12 * d.h1 - d.h2 * d.h11) / (d.h1 * d.h1);
    let g2 = -(d.h22 * d.h1 - d.h2 * d.h12) / (d.h1 * d.h1);
    (w, [g1, g2])
}

/// `|H_1 W_2 - H_2 W_1|` normalized by `|grad H| |grad W|`; zero where the
/// energy and rotation-number level sets are tangent.
pub fn tangency_defect(nf: &NormalForm, is: f64, il: f64) -> f64 {
    let d = nf.derivatives(is, il);
    let (_, gw) = rotation_gradient(nf, is, il);
    let cross = d.h1 * gw[1] - d.h2 * gw[0];
    let norm = d.h1.hypot(d.h2) * gw[0].hypot(gw[1]);
    if norm == 0.0 {
        0.0
    } else {
        cross.abs() / norm
    }
}

// ---------------------------------------------------------------------------
// Implicit curves in the action quadrant

/// Box `0 <= I_s <= is_max`, `0 <= I_l <= il_max` where the truncated normal
/// form is trusted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionCap {
    pub is_max: f64,
    pub il_max: f64,
}

impl ActionCap {
    pub fn new(is_max: f64, il_max: f64) -> Result<Self> {
        if !(is_max > 0.0 && il_max > 0.0 && is_max.is_finite() && il_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("action cap must be positive, got ({is_max}, {il_max})")));
        }
        Ok(ActionCap { is_max, il_max })
    }

    /// Square box of side `I_s` with `H(I_s, 0) = energy`.
    pub fn from_energy(nf: &NormalForm, energy: f64) -> Result<Self> {
        let is = nf.solve_is(energy, 0.0)?;
        ActionCap::new(is, is)
    }

    pub fn default_for(nf: &NormalForm) -> Result<Self> {
        ActionCap::from_energy(nf, DEFAULT_CAP_ENERGY)
    }

    fn contains(&self, x: [f64; 2]) -> bool {
        x[0] >= 0.0 && x[1] >= 0.0 && x[0] <= self.is_max && x[1] <= self.il_max
    }

    fn scale(&self) -> f64 {
        self.is_max.max(self.il_max)
    }
}

/// Zeros of `f` found by scanning rays from the origin. Samples are spaced
/// quadratically in the radius so that small features near the origin are
/// resolved.
fn ray_scan_seeds<F: Fn([f64; 2]) -> f64>(f: &F, cap: &ActionCap) -> Vec<[f64; 2]> {
    let mut seeds = Vec::new();
    for j in 0..RAY_COUNT {
        let phi = std::f64::consts::FRAC_PI_2 * j as f64 / (RAY_COUNT - 1) as f64;
        let (c, s) = (phi.cos(), phi.sin());
        let rmax = (if c > 1e-12 { cap.is_max / c } else { f64::INFINITY })
            .min(if s > 1e-12 { cap.il_max / s } else { f64::INFINITY });
        let point = |r: f64| [(r * c).max(0.0), (r * s).max(0.0)];
        let radius = |k: usize| rmax * (k as f64 / RAY_SAMPLES as f64).powi(2);
        let mut prev = f(point(0.0));
        for k in 1..=RAY_SAMPLES {
            let val = f(point(radius(k)));
            if prev.is_finite() && val.is_finite() && (prev > 0.0) != (val > 0.0) {
                let (mut lo, mut hi, mut flo) = (radius(k - 1), radius(k), prev);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    let fm = f(point(mid));
                    if (fm > 0.0) == (flo > 0.0) {
                        lo = mid;
                        flo = fm;
                    } else {
                        hi = mid;
                    }
                }
                seeds.push(point(0.5 * (lo + hi)));
            }
            prev = val;
        }
    }
    seeds
}

/// Newton projection onto `f = 0` along the gradient.
fn project<F: Fn([f64; 2]) -> (f64, [f64; 2])>(f: &F, mut x: [f64; 2], tol: f64) -> Option<[f64; 2]> {
    for _ in 0..40 {
        let (v, g) = f(x);
        if !v.is_finite() {
            return None;
        }
        if v.abs() <= tol {
            return Some(x);
        }
        let n2 = g[0] * g[0] + g[1] * g[1];
        if !(n2 > 0.0) {
            return None;
        }
        x = [x[0] - v * g[0] / n2, x[1] - v * g[1] / n2];
    }
    let (v, _) = f(x);
    (v.abs() <= tol).then_some(x)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn dist_to_polyline(p: [f64; 2], line: &[[f64; 2]]) -> f64 {
    if line.len() == 1 {
        return dist(p, line[0]);
    }
    line.windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let d = [b[0] - a[0], b[1] - a[1]];
            let l2 = d[0] * d[0] + d[1] * d[1];
            let t = if l2 > 0.0 { (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / l2).clamp(0.0, 1.0) } else { 0.0 };
            dist(p, [a[0] + t * d[0], a[1] + t * d[1]])
        })
        .fold(f64::INFINITY, f64::min)
}

/// Zero of `f` on the box edge crossed by the chord from `inside` to
/// `outside`.
fn boundary_point<F: Fn([f64; 2]) -> (f64, [f64; 2])>(
    f: &F,
    inside: [f64; 2],
    outside: [f64; 2],
    cap: &ActionCap,
    tol: f64,
) -> Option<[f64; 2]> {
    let d = [outside[0] - inside[0], outside[1] - inside[1]];
    let mut best: Option<(f64, usize, f64)> = None;
    for (axis, bound) in [(0, 0.0), (0, cap.is_max), (1, 0.0), (1, cap.il_max)] {
        if d[axis] == 0.0 {
            continue;
        }
        let t = (bound - inside[axis]) / d[axis];
        if t > 0.0 && t <= 1.0 && best.map_or(true, |b| t < b.0) {
            best = Some((t, axis, bound));
        }
    }
    let (t, axis, bound) = best?;
    let free = 1 - axis;
    let mut x = [inside[0] + t * d[0], inside[1] + t * d[1]];
    x[axis] = bound;
    for _ in 0..40 {
        let (v, g) = f(x);
        if v.abs() <= tol {
            return cap.contains(x).then_some(x);
        }
        if g[free] == 0.0 || !v.is_finite() {
            return None;
        }
        x[free] -= v / g[free];
    }
    None
}

/// One direction of pseudo-arclength continuation from `start`.
fn continue_branch<F: Fn([f64; 2]) -> (f64, [f64; 2])>(
    f: &F,
    start: [f64; 2],
    sign: f64,
    cap: &ActionCap,
    tol: f64,
) -> (Vec<[f64; 2]>, bool) {
    let ds_max = cap.scale() / 300.0;
    let ds_min = cap.scale() * 1e-9;
    let step_for = |x: [f64; 2]| (0.05 * x[0].hypot(x[1])).clamp(ds_min.max(cap.scale() * 1e-6), ds_max);
    let tangent = |x: [f64; 2]| {
        let (_, g) = f(x);
        let n = g[0].hypot(g[1]);
        [-g[1] / n, g[0] / n]
    };
    let mut out = Vec::new();
    let mut x = start;
    let mut t = tangent(x);
    t = [sign * t[0], sign * t[1]];
    let mut ds = step_for(x);
    while out.len() < MAX_VERTICES {
        let pred = [x[0] + ds * t[0], x[1] + ds * t[1]];
        let next = project(f, pred, tol).filter(|y| dist(*y, pred) < 0.5 * ds);
        let Some(y) = next else {
            ds *= 0.5;
            if ds < ds_min {
                break;
            }
            continue;
        };
        if !cap.contains(y) {
            if let Some(b) = boundary_point(f, x, y, cap, tol) {
                out.push(b);
            }
            break;
        }
        let mut ty = tangent(y);
        if ty[0] * t[0] + ty[1] * t[1] < 0.0 {
            ty = [-ty[0], -ty[1]];
        }
        out.push(y);
        if out.len() > 5 && dist(y, start) < ds {
            return (out, true);
        }
        x = y;
        t = ty;
        ds = (2.0 * ds).min(step_for(x));
    }
    (out, false)
}

/// All components of `f = 0` inside `cap` reachable from the ray seeds.
fn trace_implicit<F>(f: &F, cap: &ActionCap, tol: f64) -> Vec<Vec<[f64; 2]>>
where
    F: Fn([f64; 2]) -> (f64, [f64; 2]),
{
    let seeds = ray_scan_seeds(&|x| f(x).0, cap);
    let mut segments: Vec<Vec<[f64; 2]>> = Vec::new();
    let near = cap.scale() * 1e-4;
    for seed in seeds {
        let Some(seed) = project(f, seed, tol) else { continue };
        if !cap.contains(seed) || segments.iter().any(|s| dist_to_polyline(seed, s) < near) {
            continue;
        }
        let (fwd, closed) = continue_branch(f, seed, 1.0, cap, tol);
        let mut seg: Vec<[f64; 2]> = Vec::new();
        if !closed {
            let (bwd, _) = continue_branch(f, seed, -1.0, cap, tol);
            seg.extend(bwd.into_iter().rev());
        }
        seg.push(seed);
        seg.extend(fwd);
        segments.push(seg);
    }
    segments
}

// ---------------------------------------------------------------------------
// Twistless curve

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwistPoint {
    pub is: f64,
    pub il: f64,
    pub w: f64,
    pub h: f64,
    pub c: f64,
}

impl TwistPoint {
    fn at(nf: &NormalForm, x: [f64; 2]) -> TwistPoint {
        let d = nf.derivatives(x[0], x[1]);
        TwistPoint { is: x[0], il: x[1], w: -d.h2 / d.h1, h: d.h, c: crate::normalform::twist_from(&d) }
    }
}

/// The `C = 0` set inside an action cap, as polylines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwistCurve {
    pub mu: f64,
    pub cap: ActionCap,
    pub segments: Vec<Vec<TwistPoint>>,
}

impl TwistCurve {
    pub fn points(&self) -> impl Iterator<Item = &TwistPoint> {
        self.segments.iter().flatten()
    }

    /// True if some segment comes within `radius` of the origin.
    pub fn has_segment_near_origin(&self, radius: f64) -> bool {
        self.points().any(|p| p.is.hypot(p.il) < radius)
    }
}

/// Traces `C(I_s, I_l) = 0` inside `cap`.
pub fn twistless_curve(nf: &NormalForm, cap: &ActionCap) -> Result<TwistCurve> {
    let f = |x: [f64; 2]| twist_gradient(nf, x[0], x[1]);
    let segments: Vec<Vec<TwistPoint>> = trace_implicit(&f, cap, 1e-3 * TWIST_TOLERANCE)
        .into_iter()
        .map(|s| s.into_iter().map(|x| TwistPoint::at(nf, x)).collect())
        .collect();
    if segments.is_empty() {
        return Err(Error::NoTwistlessCurve);
    }
    Ok(TwistCurve { mu: nf.mu, cap: *cap, segments })
}

/// Twistless tori on the energy line `H = energy`, scanning `I_l` upward
/// from zero to `il_max`.
pub fn twistless_on_energy(nf: &NormalForm, energy: f64, il_max: f64) -> Result<Vec<TwistPoint>> {
    const SAMPLES: usize = 2000;
    let c_at = |il: f64| -> Result<(f64, f64)> {
        let is = nf.solve_is(energy, il)?;
        Ok((is, twist_gradient(nf, is, il).0))
    };
    let mut out = Vec::new();
    let (mut il0, mut c0) = (0.0, c_at(0.0)?.1);
    for k in 1..=SAMPLES {
        let il1 = il_max * k as f64 / SAMPLES as f64;
        let Ok((_, c1)) = c_at(il1) else { break };
        if (c0 > 0.0) != (c1 > 0.0) {
            let (mut lo, mut hi, mut flo) = (il0, il1, c0);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                let fm = c_at(mid)?.1;
                if (fm > 0.0) == (flo > 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-17 {
                    break;
                }
            }
            let il = 0.5 * (lo + hi);
            out.push(TwistPoint::at(nf, [c_at(il)?.0, il]));
        }
        il0 = il1;
        c0 = c1;
    }
    Ok(out)
}

/// `C(0, 0)` at `mu`.
pub fn twist_at_origin(mu: f64, degree: usize) -> Result<f64> {
    let nf = normal_form(mu, degree)?.normal_form;
    Ok(crate::normalform::twist_from(&nf.derivatives(0.0, 0.0)))
}

/// Mass ratio in `(mu_4, mu_3)` where the twist at the origin vanishes.
pub fn critical_mass_ratio() -> Result<f64> {
    critical_mass_ratio_with_degree(DEFAULT_DEGREE)
}

pub fn critical_mass_ratio_with_degree(degree: usize) -> Result<f64> {
    // Stay clear of the resonant denominators at both ends.
    let lo = mass_ratio_for_resonance(4.0)?.value() + 2e-4;
    let hi = mass_ratio_for_resonance(3.0)?.value() - 2e-4;
    bisect(|mu| twist_at_origin(mu, degree), lo, hi, 1e-7)
}

fn bisect<F: Fn(f64) -> Result<f64>>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut flo = f(lo)?;
    let fhi = f(hi)?;
    if (flo > 0.0) == (fhi > 0.0) {
        return Err(Error::NoSignChange(format!("f({lo}) = {flo:e}, f({hi}) = {fhi:e}")));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

// ---------------------------------------------------------------------------
// Action-action chart

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub is_max: f64,
    pub il_max: f64,
    pub n_is: usize,
    pub n_il: usize,
}

impl GridSpec {
    pub fn new(is_max: f64, il_max: f64, n_is: usize, n_il: usize) -> Result<Self> {
        ActionCap::new(is_max, il_max)?;
        if n_is < 2 || n_il < 2 {
            return Err(Error::InvalidParameter(format!("grid needs at least 2x2 nodes, got {n_is}x{n_il}")));
        }
        Ok(GridSpec { is_max, il_max, n_is, n_il })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartRow {
    pub is: f64,
    pub il: f64,
    pub h: f64,
    pub w: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoLine {
    pub kind: String,
    pub label: String,
    pub level: f64,
    pub segments: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartDataset {
    pub mu: f64,
    pub grid: Vec<ChartRow>,
    pub lines: Vec<IsoLine>,
}

impl ChartDataset {
    pub fn line(&self, kind: &str, label: &str) -> Option<&IsoLine> {
        self.lines.iter().find(|l| l.kind == kind && l.label == label)
    }
}

/// Grid values of `H`, `W`, `C`, with energy lines every `ENERGY_SPACING`,
/// rotation-number lines at the Farey rationals between 1/4 and 1/3 and
/// the twistless curve.
pub fn action_action_chart(nf: &NormalForm, grid: &GridSpec, farey_depth: usize) -> Result<ChartDataset> {
    let cap = ActionCap::new(grid.is_max, grid.il_max)?;
    let mut rows = Vec::with_capacity(grid.n_is * grid.n_il);
    for i in 0..grid.n_is {
        let is = grid.is_max * i as f64 / (grid.n_is - 1) as f64;
        for j in 0..grid.n_il {
            let il = grid.il_max * j as f64 / (grid.n_il - 1) as f64;
            let d = nf.derivatives(is, il);
            rows.push(ChartRow { is, il, h: d.h, w: -d.h2 / d.h1, c: crate::normalform::twist_from(&d) });
        }
    }

    let mut lines = Vec::new();
    let (emin, emax) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r.h), b.max(r.h)));
    let kmin = (emin / ENERGY_SPACING).ceil() as i64;
    let kmax = (emax / ENERGY_SPACING).floor() as i64;
    for k in kmin..=kmax {
        let e = k as f64 * ENERGY_SPACING;
        lines.push(IsoLine {
            kind: "energy".into(),
            label: format!("{e:.2}"),
            level: e,
            segments: energy_line(nf, e, grid),
        });
    }

    let quarter = Rational { p: 1, q: 4 };
    let third = Rational { p: 1, q: 3 };
    let mut levels = vec![quarter];
    levels.extend(farey_between(quarter, third, farey_depth));
    levels.push(third);
    for r in levels {
        let target = r.value();
        let f = |x: [f64; 2]| {
            let (w, g) = rotation_gradient(nf, x[0], x[1]);
            (w - target, g)
        };
        lines.push(IsoLine {
            kind: "rotation".into(),
            label: r.to_string(),
            level: target,
            segments: trace_implicit(&f, &cap, 1e-13),
        });
    }

    let twistless = match twistless_curve(nf, &cap) {
        Ok(curve) => curve.segments.iter().map(|s| s.iter().map(|p| [p.is, p.il]).collect()).collect(),
        Err(Error::NoTwistlessCurve) => Vec::new(),
        Err(e) => return Err(e),
    };
    lines.push(IsoLine { kind: "twistless".into(), label: "C=0".into(), level: 0.0, segments: twistless });
    Ok(ChartDataset { mu: nf.mu, grid: rows, lines })
}

fn energy_line(nf: &NormalForm, e: f64, grid: &GridSpec) -> Vec<Vec<[f64; 2]>> {
    let n = 4 * grid.n_il;
    let mut segments = Vec::new();
    let mut current: Vec<[f64; 2]> = Vec::new();
    for j in 0..=n {
        let il = grid.il_max * j as f64 / n as f64;
        match nf.solve_is(e, il) {
            Ok(is) if is <= grid.is_max => current.push([is, il]),
            _ => {
                if !current.is_empty() {
                    segments.push(std::mem::take(&mut current));
                }
            }
        }
    }
    if !current.is_empty() {
        segments.push(current);
    }
    segments
}

pub fn write_chart_grid_csv<W: Write>(out: &mut W, chart: &ChartDataset) -> Result<()> {
    writeln!(out, "Is,Il,H,W,C")?;
    for r in &chart.grid {
        writeln!(out, "{},{},{},{},{}", fmt17(r.is), fmt17(r.il), fmt17(r.h), fmt17(r.w), fmt17(r.c))?;
    }
    Ok(())
}

pub fn write_chart_lines_csv<W: Write>(out: &mut W, chart: &ChartDataset) -> Result<()> {
    writeln!(out, "kind,label,segment,Is,Il")?;
    for line in &chart.lines {
        for (k, seg) in line.segments.iter().enumerate() {
            for p in seg {
                writeln!(out, "{},{},{},{},{}", line.kind, line.label, k, fmt17(p[0]), fmt17(p[1]))?;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Reconnection loci

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocusMethod {
    NormalForm,
    Numeric,
}

impl LocusMethod {
    pub fn label(self) -> &'static str {
        match self {
            LocusMethod::NormalForm => "normal_form",
            LocusMethod::Numeric => "numeric",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconnectionLocus {
    pub rational: Rational,
    pub method: LocusMethod,
    /// `(mu, E)` pairs in increasing `mu`.
    pub points: Vec<(f64, f64)>,
    /// Mass ratios where no point was found, with the reason.
    pub failures: Vec<(f64, String)>,
}

impl ReconnectionLocus {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Twistless torus with `W = p/q`, by 2D Newton on `{C = 0, W = p/q}`
/// seeded from sign changes of `W - p/q` along the twistless curve. The
/// lowest-energy solution is returned.
pub fn reconnection_point_nf(nf: &NormalForm, rational: Rational, cap: &ActionCap) -> Result<TwistPoint> {
    let curve = twistless_curve(nf, cap)?;
    let target = rational.value();
    let mut best: Option<TwistPoint> = None;
    for seg in &curve.segments {
        for w in seg.windows(2) {
            let (a, b) = (w[0], w[1]);
            if (a.w > target) == (b.w > target) {
                continue;
            }
            let t = (target - a.w) / (b.w - a.w);
            let guess = [a.is + t * (b.is - a.is), a.il + t * (b.il - a.il)];
            if let Some(x) = newton_twist_rotation(nf, target, guess) {
                let p = TwistPoint::at(nf, x);
                if best.map_or(true, |q| p.h < q.h) {
                    best = Some(p);
                }
            }
        }
    }
    best.ok_or_else(|| Error::NoSolution(format!("W = {rational} not reached on the twistless curve at mu = {}", nf.mu)))
}

fn newton_twist_rotation(nf: &NormalForm, target: f64, mut x: [f64; 2]) -> Option<[f64; 2]> {
    for _ in 0..50 {
        let (c, gc) = twist_gradient(nf, x[0], x[1]);
        let (w, gw) = rotation_gradient(nf, x[0], x[1]);
        let r = [c, w - target];
        if r[0].abs() < 1e-3 * LOCUS_TOLERANCE && r[1].abs() < 1e-3 * LOCUS_TOLERANCE {
            return Some(x);
        }
        let det = gc[0] * gw[1] - gc[1] * gw[0];
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let dx = [(r[0] * gw[1] - r[1] * gc[1]) / det, (gc[0] * r[1] - gw[0] * r[0]) / det];
        x = [x[0] - dx[0], x[1] - dx[1]];
    }
    None
}

/// Normal-form reconnection locus: for each `mu`, the energy of the
/// twistless torus with `W = p/q` inside the cap `H(I_s, 0) <= cap_energy`.
pub fn reconnection_locus_nf(rational: Rational, mus: &[f64], cap_energy: f64) -> ReconnectionLocus {
    let results: Vec<(f64, Result<f64>)> = mus
        .par_iter()
        .map(|&mu| {
            let r = normal_form(mu, DEFAULT_DEGREE).and_then(|n| {
                let nf = n.normal_form;
                let cap = ActionCap::from_energy(&nf, cap_energy)?;
                Ok(reconnection_point_nf(&nf, rational, &cap)?.h)
            });
            (mu, r)
        })
        .collect();
    let mut locus = ReconnectionLocus { rational, method: LocusMethod::NormalForm, points: vec![], failures: vec![] };
    for (mu, r) in results {
        match r {
            Ok(e) => locus.points.push((mu, e)),
            Err(e) => locus.failures.push((mu, e.code().to_string())),
        }
    }
    locus.points.sort_by(|a, b| a.0.total_cmp(&b.0));
    locus.failures.sort_by(|a, b| a.0.total_cmp(&b.0));
    locus
}

/// `W` of the first twistless torus on the energy line, minus `p/q`.
fn twistless_excess(mu: f64, rational: Rational, energy: f64) -> Result<f64> {
    let nf = normal_form(mu, DEFAULT_DEGREE)?.normal_form;
    let cap = ActionCap::default_for(&nf)?;
    let pts = twistless_on_energy(&nf, energy, cap.il_max)?;
    let p = pts
        .first()
        .ok_or_else(|| Error::NoSolution(format!("no twistless torus at E = {energy}, mu = {mu}")))?;
    Ok(p.w - rational.value())
}

/// Mass ratio at which the normal-form twistless torus at `energy` has
/// rotation number `p/q`, by bisection on `bracket`.
pub fn reconnection_mu_nf(rational: Rational, energy: f64, bracket: (f64, f64)) -> Result<f64> {
    bisect(|mu| twistless_excess(mu, rational, energy), bracket.0, bracket.1, 1e-8)
}

// ---------------------------------------------------------------------------
// Numeric reconnection search

/// How the rotation profile is sampled when looking for its maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSearch {
    /// Crossings per seed.
    pub crossings: usize,
    /// Seed spacing along the ray, in `a`.
    pub spacing: f64,
    /// Ray direction in the `(a, pa)` plane.
    pub angle: f64,
    /// Upper bound on the number of seeds.
    pub max_seeds: usize,
    /// Refinement levels around the best regular seed. Each level adds
    /// eight seeds at multiples of one fifth of the previous step.
    pub refine: usize,
    /// Integration steps per period.
    pub steps_per_period: usize,
}

impl Default for ProfileSearch {
    fn default() -> Self {
        ProfileSearch {
            crossings: 2000,
            spacing: 0.002,
            angle: 0.0,
            max_seeds: 30,
            refine: 2,
            steps_per_period: crate::integrate::DEFAULT_STEPS_PER_PERIOD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileMaximum {
    pub mu: f64,
    pub energy: f64,
    pub w_max: f64,
    pub action: f64,
    pub samples: Vec<ProfileEntry>,
}

/// Vertex of the parabola through three points, if it is a maximum
/// lying inside their span.
fn parabola_max(pts: &[(f64, f64); 3]) -> Option<(f64, f64)> {
    let [(x0, y0), (x1, y1), (x2, y2)] = *pts;
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let a = (d12 - d01) / (x2 - x0);
    if !(a < 0.0) {
        return None;
    }
    let b = d01 - a * (x0 + x1);
    let xv = -b / (2.0 * a);
    let (lo, hi) = (x0.min(x1).min(x2), x0.max(x1).max(x2));
    if !(xv >= lo && xv <= hi) {
        return None;
    }
    Some((xv, y0 + (xv - x0) * (d01 + a * (xv - x1))))
}

/// Largest `W` over the island rotation profile at `(mu, E)`: seeds walk out
/// from the short-period fixed point until orbits stop being regular, and
/// the maximum is refined by a parabola through the three largest regular
/// samples.
pub fn profile_maximum(mu: f64, energy: f64, search: &ProfileSearch) -> Result<ProfileMaximum> {
    let sys = Cr3bp::with_mu(mu)?;
    sys.mu.require_elliptic()?;
    let config = crate::integrate::IntegratorConfig::for_mu(&sys, search.steps_per_period)?;
    let fp = short_period_fixed_point(&sys, energy, DEFAULT_DIRECTION, &default_config(&sys)?)?;
    let center = fp.point;
    let batch = rayon::current_num_threads().max(4);
    let mut samples: Vec<ProfileEntry> = Vec::new();
    let mut failures_in_row = 0;
    let mut k = 0;
    'outer: while k < search.max_seeds {
        let count = batch.min(search.max_seeds - k);
        let seeds: Vec<_> = (k + 1..=k + count)
            .map(|i| ray_seeds(&center, search.angle, search.spacing * i as f64, 1)[0])
            .collect();
        for mut e in rotation_profile(&sys, &center, &seeds, search.crossings, &config) {
            e.index += k;
            let escaped = e.w.is_none();
            samples.push(e);
            failures_in_row = if escaped { failures_in_row + 1 } else { 0 };
            if failures_in_row >= 2 {
                break 'outer;
            }
        }
        k += count;
    }
    let best_index = samples
        .iter()
        .filter(|e| e.is_regular())
        .max_by(|a, b| a.w.unwrap().total_cmp(&b.w.unwrap()))
        .map(|e| e.index)
        .ok_or_else(|| Error::NoSolution(format!("no regular invariant curve at mu = {mu}, E = {energy}")))?;
    let mut best_w = samples[best_index].w;
    let mut base = search.spacing * (best_index + 1) as f64;
    let mut step = search.spacing;
    for _ in 0..search.refine {
        step /= 5.0;
        let level_base = base;
        let offsets: Vec<f64> =
            [-4.0, -3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 4.0].iter().map(|k| k * step).filter(|o| base + o > 0.0).collect();
        let seeds: Vec<_> = offsets.iter().map(|o| ray_seeds(&center, search.angle, level_base + o, 1)[0]).collect();
        let n0 = samples.len();
        for (mut e, o) in rotation_profile(&sys, &center, &seeds, search.crossings, &config).into_iter().zip(&offsets) {
            e.index += n0;
            if e.is_regular() && e.w > best_w {
                best_w = e.w;
                base = level_base + o;
            }
            samples.push(e);
        }
    }
    let mut regular: Vec<(f64, f64)> =
        samples.iter().filter(|e| e.is_regular()).map(|e| (e.action.unwrap(), e.w.unwrap())).collect();
    regular.sort_by(|a, b| b.1.total_cmp(&a.1));
    let (mut action, mut w_max) = regular[0];
    if regular.len() >= 3 {
        if let Some((x, y)) = parabola_max(&[regular[0], regular[1], regular[2]]) {
            action = x;
            w_max = y;
        }
    }
    Ok(ProfileMaximum { mu, energy, w_max, action, samples })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericReconnection {
    pub rational: Rational,
    pub energy: f64,
    pub mu: f64,
    /// Profile maximum evaluated at `mu`.
    pub w_max: f64,
    /// Profile maxima evaluated during the search, sorted by `mu`.
    pub evaluations: Vec<(f64, f64)>,
}

impl NumericReconnection {
    pub fn locus(&self) -> ReconnectionLocus {
        ReconnectionLocus {
            rational: self.rational,
            method: LocusMethod::Numeric,
            points: vec![(self.mu, self.energy)],
            failures: vec![],
        }
    }
}

/// Mass ratio at which the maximum of the numerical rotation profile at
/// `energy` equals `p/q`: bisection on `bracket` down to `mu_tol`, then
/// linear interpolation inside the final bracket, where the profile is
/// evaluated once more.
pub fn reconnection_search_numeric(
    rational: Rational,
    energy: f64,
    bracket: (f64, f64),
    mu_tol: f64,
    search: &ProfileSearch,
) -> Result<NumericReconnection> {
    if !(bracket.0 < bracket.1) || !(mu_tol > 0.0) {
        return Err(Error::InvalidParameter(format!("bad bracket {bracket:?} or tolerance {mu_tol}")));
    }
    let target = rational.value();
    let mut evaluations = Vec::new();
    let mut eval = |mu: f64| -> Result<f64> {
        let w = profile_maximum(mu, energy, search)?.w_max;
        evaluations.push((mu, w));
        Ok(w - target)
    };
    let (mut lo, mut hi) = bracket;
    let mut flo = eval(lo)?;
    let mut fhi = eval(hi)?;
    if (flo > 0.0) == (fhi > 0.0) {
        return Err(Error::NoSignChange(format!(
            "profile maximum minus {rational}: {flo:e} at mu = {lo}, {fhi:e} at mu = {hi}"
        )));
    }
    while hi - lo > mu_tol {
        let mid = 0.5 * (lo + hi);
        let fm = eval(mid)?;
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    let guess = lo + (hi - lo) * flo / (flo - fhi);
    eval(guess)?;
    // the profile maximum is only piecewise smooth in mu near a
    // reconnection, so report the evaluated point closest to the target
    let (mu, w_max) = evaluations
        .iter()
        .filter(|(m, _)| *m >= lo && *m <= hi)
        .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
        .copied()
        .unwrap();
    evaluations.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(NumericReconnection { rational, energy, mu, w_max, evaluations })
}
