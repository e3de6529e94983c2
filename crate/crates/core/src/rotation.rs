//! Short-period fixed point of the return map, rotation numbers about it and
//! the actions of the invariant curves that surround it.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;

use crate::dynamics::{frequencies, Cr3bp, LagrangePoint, RotatingState, SQRT3};
use crate::error::{Error, Result};
use crate::integrate::{IntegratorConfig, DEFAULT_STEPS_PER_PERIOD};
use crate::normalform::{linear_symplectic_normalize, taylor_at_l4};
use crate::section::{
    crossing_stream, fmt17, poincare_return, section_project, transverse_velocity, Direction, SectionPoint,
    DEFAULT_DIRECTION,
};

/// Newton stops once `|P(x) - x|` falls below this.
pub const FIXED_POINT_TOLERANCE: f64 = 1e-10;
/// Minimum crossings for a rotation-number estimate.
pub const MIN_ROTATION_ITERATES: usize = 1000;
/// Minimum crossings for an area estimate.
pub const MIN_ACTION_ITERATES: usize = 100;
/// Split-half discrepancy above which a curve is flagged.
pub const RESONANT_ERROR: f64 = 1e-4;

const MAX_NEWTON: usize = 40;
// angular noise allowed in the order-preservation test (radians)
const MONOTONE_SLACK: f64 = 1e-7;
const JACOBIAN_STEP: f64 = 1e-6;
const CONTINUATION_STEP: f64 = 2e-3;
const START_ENERGY: f64 = 5e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub point: SectionPoint,
    /// `|P(x) - x|` at the returned point.
    pub residual: f64,
    /// Finite-difference `DP` at the fixed point, row-major in `(a, pa)`.
    pub jacobian: [[f64; 2]; 2],
    pub iterations: usize,
    pub elliptic: bool,
}

impl FixedPoint {
    pub fn trace(&self) -> f64 {
        self.jacobian[0][0] + self.jacobian[1][1]
    }

    pub fn det(&self) -> f64 {
        self.jacobian[0][0] * self.jacobian[1][1] - self.jacobian[0][1] * self.jacobian[1][0]
    }

    /// `arg(lambda) / 2pi` of the eigenvalue of `DP`, in `(0, 1/2)`.
    pub fn rotation_number(&self) -> Result<f64> {
        if !self.elliptic {
            return Err(Error::HyperbolicFixedPoint { trace: self.trace() });
        }
        let c = 0.5 * self.trace() / self.det().sqrt();
        Ok(c.clamp(-1.0, 1.0).acos() / (2.0 * PI))
    }
}

/// Crossing of the linearized short-period orbit with action `E / ws`.
pub fn linear_seed(sys: &Cr3bp, energy: f64, direction: Direction) -> Result<SectionPoint> {
    if !(energy > 0.0) {
        return Err(Error::InvalidParameter(format!("energy must be positive, got {energy}")));
    }
    let freqs = frequencies(sys.mu)?;
    let h2 = taylor_at_l4(sys.mu, 2)?;
    let lin = linear_symplectic_normalize(&h2, freqs)?;
    let m = lin.matrix;
    let radius = (2.0 * energy / freqs.omega_s).sqrt();
    // g is linear, so it vanishes on the orbit at two opposite phases
    let gc = SQRT3 * m[(0, 0)] - m[(2, 0)];
    let gs = SQRT3 * m[(0, 1)] - m[(2, 1)];
    let theta0 = (-gc).atan2(gs);
    let l4 = sys.lagrange_point(LagrangePoint::L4);
    for theta in [theta0, theta0 + PI] {
        let d: Vec<f64> = (0..4).map(|i| radius * (theta.cos() * m[(i, 0)] + theta.sin() * m[(i, 1)])).collect();
        let st = RotatingState::new(l4.x + d[0], l4.y + d[2], l4.px + d[1], l4.py + d[3]);
        if (transverse_velocity(sys, &st) >= 0.0) == (direction == Direction::Positive) {
            let mut p = section_project(sys, &st, energy, 0.0)?;
            p.direction = direction;
            return Ok(p);
        }
    }
    Err(Error::NoSolution("linear orbit does not cross the section in the requested direction".into()))
}

fn return_coords(sys: &Cr3bp, x: [f64; 2], base: &SectionPoint, config: &IntegratorConfig) -> Result<[f64; 2]> {
    Ok(poincare_return(sys, &base.with_coords(x), config)?.coords())
}

/// Central-difference Jacobian of the return map.
pub fn return_map_jacobian(sys: &Cr3bp, point: &SectionPoint, config: &IntegratorConfig) -> Result<[[f64; 2]; 2]> {
    let x = point.coords();
    let mut j = [[0.0; 2]; 2];
    for col in 0..2 {
        let mut xp = x;
        let mut xm = x;
        xp[col] += JACOBIAN_STEP;
        xm[col] -= JACOBIAN_STEP;
        let fp = return_coords(sys, xp, point, config)?;
        let fm = return_coords(sys, xm, point, config)?;
        for row in 0..2 {
            j[row][col] = (fp[row] - fm[row]) / (2.0 * JACOBIAN_STEP);
        }
    }
    Ok(j)
}

/// Newton iteration on `P(x) - x` from `guess` at the guess's energy.
pub fn find_fixed_point(sys: &Cr3bp, guess: &SectionPoint, config: &IntegratorConfig) -> Result<FixedPoint> {
    if !(guess.energy > 0.0) {
        return Err(Error::InvalidParameter(format!("energy must be positive, got {}", guess.energy)));
    }
    let mut x = guess.coords();
    let mut last = f64::INFINITY;
    for it in 0..MAX_NEWTON {
        let p = return_coords(sys, x, guess, config)
            .map_err(|e| Error::NewtonDiverged(format!("return map failed at {x:?}: {e}")))?;
        let f = [p[0] - x[0], p[1] - x[1]];
        let res = f[0].hypot(f[1]);
        if !res.is_finite() {
            return Err(Error::NewtonDiverged("non-finite residual".into()));
        }
        let point = guess.with_coords(x);
        if res < FIXED_POINT_TOLERANCE {
            let jac = return_map_jacobian(sys, &point, config)?;
            let tr = jac[0][0] + jac[1][1];
            return Ok(FixedPoint { point, residual: res, jacobian: jac, iterations: it, elliptic: tr.abs() < 2.0 });
        }
        if it > 8 && res > 0.5 * last && res > 1e-8 {
            return Err(Error::NewtonDiverged(format!("residual stalled at {res:e}")));
        }
        last = res;
        let j = return_map_jacobian(sys, &point, config)
            .map_err(|e| Error::NewtonDiverged(format!("Jacobian failed: {e}")))?;
        let a = [[j[0][0] - 1.0, j[0][1]], [j[1][0], j[1][1] - 1.0]];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if det.abs() < 1e-14 {
            return Err(Error::NewtonDiverged("singular Newton matrix".into()));
        }
        let mut dx = [(-f[0] * a[1][1] + f[1] * a[0][1]) / det, (-f[1] * a[0][0] + f[0] * a[1][0]) / det];
        let len = dx[0].hypot(dx[1]);
        if len > 0.05 {
            dx = dx.map(|d| d * 0.05 / len);
        }
        x = [x[0] + dx[0], x[1] + dx[1]];
    }
    Err(Error::NewtonDiverged(format!("no convergence in {MAX_NEWTON} iterations")))
}

/// Short-period fixed point at `energy`, seeded from the linear orbit at a
/// small energy and continued in `E`.
pub fn short_period_fixed_point(
    sys: &Cr3bp,
    energy: f64,
    direction: Direction,
    config: &IntegratorConfig,
) -> Result<FixedPoint> {
    if !(energy > 0.0) {
        return Err(Error::InvalidParameter(format!("energy must be positive, got {energy}")));
    }
    let e0 = energy.min(START_ENERGY);
    let mut fp = find_fixed_point(sys, &linear_seed(sys, e0, direction)?, config)?;
    let mut prev: Option<(f64, [f64; 2])> = None;
    let mut e = e0;
    let steps = ((energy - e0) / CONTINUATION_STEP).ceil() as usize;
    for k in 1..=steps {
        let next_e = e0 + (energy - e0) * k as f64 / steps as f64;
        let x = fp.point.coords();
        let guess = match prev {
            Some((pe, px)) => {
                let s = (next_e - e) / (e - pe);
                [x[0] + s * (x[0] - px[0]), x[1] + s * (x[1] - px[1])]
            }
            None => x,
        };
        prev = Some((e, x));
        let mut g = fp.point.with_coords(guess);
        g.energy = next_e;
        fp = find_fixed_point(sys, &g, config)?;
        e = next_e;
    }
    Ok(fp)
}

/// Integrator settings used for fixed points and curves unless overridden.
pub fn default_config(sys: &Cr3bp) -> Result<IntegratorConfig> {
    IntegratorConfig::for_mu(sys, DEFAULT_STEPS_PER_PERIOD)
}

/// Rotation number of the short-period fixed point at `(mu, E)`.
pub fn fixed_point_rotation_number(mu: f64, energy: f64) -> Result<f64> {
    let sys = Cr3bp::with_mu(mu)?;
    sys.mu.require_elliptic()?;
    let config = default_config(&sys)?;
    short_period_fixed_point(&sys, energy, DEFAULT_DIRECTION, &config)?.rotation_number()
}

/// Orbit of one seed about the fixed point, with angles unwound so that they
/// increase.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantCurveSample {
    pub seed: SectionPoint,
    pub crossings: Vec<SectionPoint>,
    pub center: SectionPoint,
    /// Unwound polar angles about `center`, axes rescaled by the curve's
    /// extent; the first entry lies in `[0, 2pi)`.
    pub angles: Vec<f64>,
    /// `+1` if the raw polar angle increases along the orbit, `-1` otherwise.
    pub orientation: f64,
    pub max_abs_k: f64,
}

impl InvariantCurveSample {
    pub fn new(seed: SectionPoint, crossings: Vec<SectionPoint>, center: SectionPoint) -> Result<Self> {
        if crossings.len() < 2 {
            return Err(Error::InsufficientIterates { needed: 2, got: crossings.len() });
        }
        let (sa, sp) = crossings.iter().fold((0.0f64, 0.0f64), |(sa, sp), p| {
            (sa.max((p.a - center.a).abs()), sp.max((p.pa - center.pa).abs()))
        });
        if sa == 0.0 || sp == 0.0 {
            return Err(Error::CurveNotEncircling);
        }
        let raw: Vec<f64> = crossings
            .iter()
            .map(|p| ((p.pa - center.pa) / sp).atan2((p.a - center.a) / sa))
            .collect();
        let incs: Vec<f64> = raw.windows(2).map(|w| wrap_pi(w[1] - w[0])).collect();
        let orientation = if incs[0] >= 0.0 { 1.0 } else { -1.0 };
        if incs.iter().any(|d| d * orientation <= 0.0) {
            return Err(Error::CurveNotEncircling);
        }
        let mut angles = Vec::with_capacity(raw.len());
        let mut acc = (orientation * raw[0]).rem_euclid(2.0 * PI);
        angles.push(acc);
        for d in &incs {
            acc += d * orientation;
            angles.push(acc);
        }
        Ok(InvariantCurveSample { seed, crossings, center, angles, orientation, max_abs_k: 0.0 })
    }
}

fn wrap_pi(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// Follows `seed` for `n` crossings around `center`.
pub fn sample_curve(
    sys: &Cr3bp,
    center: &SectionPoint,
    seed: &SectionPoint,
    n: usize,
    config: &IntegratorConfig,
) -> Result<InvariantCurveSample> {
    let stream = crossing_stream(sys, seed, n, config)?;
    let mut sample = InvariantCurveSample::new(*seed, stream.crossings, *center)?;
    sample.max_abs_k = stream.max_abs_k;
    Ok(sample)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveFlag {
    Regular,
    /// Non-monotone circle map or unconverged average: island chain,
    /// separatrix layer or chaotic orbit.
    ResonantOrChaotic,
}

impl CurveFlag {
    pub fn label(self) -> &'static str {
        match self {
            CurveFlag::Regular => "ok",
            CurveFlag::ResonantOrChaotic => "resonant/chaotic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationEstimate {
    pub w: f64,
    pub error: f64,
    pub flag: CurveFlag,
}

fn bump(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        (-1.0 / (t * (1.0 - t))).exp()
    }
}

/// Weighted Birkhoff average of angle increments, in turns.
pub fn weighted_mean_increment(increments: &[f64]) -> f64 {
    let n = increments.len();
    let (mut num, mut den) = (0.0, 0.0);
    for (i, d) in increments.iter().enumerate() {
        let w = bump((i as f64 + 0.5) / n as f64);
        num += w * d;
        den += w;
    }
    num / den / (2.0 * PI)
}

/// Rotation number of the first `n` crossings of a curve sample.
pub fn rotation_number_of_curve(sample: &InvariantCurveSample, n: usize) -> Result<RotationEstimate> {
    if n < MIN_ROTATION_ITERATES || sample.angles.len() < n {
        return Err(Error::InsufficientIterates { needed: n.max(MIN_ROTATION_ITERATES), got: sample.angles.len() });
    }
    let angles = &sample.angles[..n];
    let incs: Vec<f64> = angles.windows(2).map(|w| w[1] - w[0]).collect();
    let estimate = rotation_from_increments(&incs);
    let monotone = circle_map_is_monotone(angles);
    let flag = if monotone && estimate.1 <= RESONANT_ERROR { CurveFlag::Regular } else { CurveFlag::ResonantOrChaotic };
    Ok(RotationEstimate { w: estimate.0, error: estimate.1, flag })
}

/// Weighted mean and split-half error estimate.
pub fn rotation_from_increments(incs: &[f64]) -> (f64, f64) {
    let w = weighted_mean_increment(incs);
    let half = incs.len() / 2;
    let w1 = weighted_mean_increment(&incs[..half]);
    let w2 = weighted_mean_increment(&incs[half..]);
    (w, (w1 - w).abs().max((w2 - w).abs()))
}

/// True if the induced circle map preserves cyclic order.
fn circle_map_is_monotone(angles: &[f64]) -> bool {
    let n = angles.len() - 1;
    let mut idx: Vec<usize> = (0..n).collect();
    let base = |i: usize| angles[i].rem_euclid(2.0 * PI);
    idx.sort_by(|&i, &j| base(i).total_cmp(&base(j)));
    let image = |i: usize| base(i) + (angles[i + 1] - angles[i]);
    idx.windows(2).all(|w| image(w[1]) >= image(w[0]) - MONOTONE_SLACK)
}

/// `area / 2pi` of the curve, by the shoelace rule over points sorted by
/// angle.
pub fn action_of_curve(sample: &InvariantCurveSample) -> Result<f64> {
    let n = sample.crossings.len();
    if n < MIN_ACTION_ITERATES {
        return Err(Error::InsufficientIterates { needed: MIN_ACTION_ITERATES, got: n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| {
        sample.angles[i].rem_euclid(2.0 * PI).total_cmp(&sample.angles[j].rem_euclid(2.0 * PI))
    });
    let c = sample.center;
    let mut area = 0.0;
    for k in 0..n {
        let p = sample.crossings[idx[k]];
        let q = sample.crossings[idx[(k + 1) % n]];
        area += (p.a - c.a) * (q.pa - c.pa) - (q.a - c.a) * (p.pa - c.pa);
    }
    Ok(0.5 * area.abs() / (2.0 * PI))
}

/// `count` seeds on the segment from `center` in direction `angle` (radians
/// in the `(a, pa)` plane), excluding the center itself.
pub fn ray_seeds(center: &SectionPoint, angle: f64, length: f64, count: usize) -> Vec<SectionPoint> {
    (1..=count)
        .map(|k| {
            let t = length * k as f64 / count as f64;
            let mut p = center.with_coords([center.a + t * angle.cos(), center.pa + t * angle.sin()]);
            p.t_cross = 0.0;
            p
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileEntry {
    pub index: usize,
    pub seed: SectionPoint,
    pub action: Option<f64>,
    pub w: Option<f64>,
    pub error: Option<f64>,
    pub flag: String,
}

impl ProfileEntry {
    pub fn is_regular(&self) -> bool {
        self.flag == CurveFlag::Regular.label()
    }
}

/// `(I, W)` for each seed, computed in parallel; the output is ordered by
/// seed index and per-seed failures are recorded in `flag`.
pub fn rotation_profile(
    sys: &Cr3bp,
    center: &SectionPoint,
    seeds: &[SectionPoint],
    n: usize,
    config: &IntegratorConfig,
) -> Vec<ProfileEntry> {
    seeds
        .par_iter()
        .enumerate()
        .map(|(index, seed)| {
            let result = sample_curve(sys, center, seed, n, config)
                .and_then(|s| Ok((action_of_curve(&s)?, rotation_number_of_curve(&s, n)?)));
            match result {
                Ok((action, est)) => ProfileEntry {
                    index,
                    seed: *seed,
                    action: Some(action),
                    w: Some(est.w),
                    error: Some(est.error),
                    flag: est.flag.label().to_string(),
                },
                Err(e) => ProfileEntry { index, seed: *seed, action: None, w: None, error: None, flag: e.code().to_string() },
            }
        })
        .collect()
}

/// Writes `index,I,W,error,flag`.
pub fn write_profile_csv<W: Write>(out: &mut W, entries: &[ProfileEntry]) -> Result<()> {
    writeln!(out, "index,I,W,error,flag")?;
    let f = |x: Option<f64>| x.map(fmt17).unwrap_or_default();
    for e in entries {
        writeln!(out, "{},{},{},{},{}", e.index, f(e.action), f(e.w), f(e.error), e.flag)?;
    }
    Ok(())
}
