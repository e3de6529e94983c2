//! Poincare section through the heavy primary and L4.
//!
//! The section is the line `g = sqrt(3) x - y + sqrt(3)/2 = 0`. On it we use
//! `a = 2x + 1` (distance from the heavy primary) and the tangential momentum
//! `pa = Re(p_z)/2 - sqrt(3) Im(p_z)/2 = px/2 + sqrt(3) py/2`, a canonical
//! pair for the restricted symplectic form. Crossings are localized with
//! Henon's trick: one Runge-Kutta step with `g` as independent variable.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{from_regularized, to_regularized, Cr3bp, RegularizedState, RotatingState, SQRT3};
use crate::error::{Error, Result};
use crate::integrate::{propagate, rk4_step, IntegratorConfig};

/// Residual bound on `|g|` for an accepted crossing.
pub const CROSSING_TOLERANCE: f64 = 1e-10;
/// Crossings closer than this to the heavy primary (`a = 0`) are rejected.
pub const PRIMARY_EXCLUSION: f64 = 1e-6;
const ON_SECTION_TOLERANCE: f64 = 1e-8;
const MAX_POLISH: usize = 3;

/// Sign of `dg/dt` at the crossing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Positive,
    Negative,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Positive => 1.0,
            Direction::Negative => -1.0,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Direction::Positive => Direction::Negative,
            Direction::Negative => Direction::Positive,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Direction::Positive => "+",
            Direction::Negative => "-",
        }
    }
}

/// Direction whose crossings of the short-period orbit fall on `a < 1`.
pub const DEFAULT_DIRECTION: Direction = Direction::Negative;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionPoint {
    pub a: f64,
    pub pa: f64,
    pub energy: f64,
    pub direction: Direction,
    pub t_cross: f64,
}

impl SectionPoint {
    pub fn new(a: f64, pa: f64, energy: f64, direction: Direction) -> Self {
        SectionPoint { a, pa, energy, direction, t_cross: 0.0 }
    }

    pub fn coords(&self) -> [f64; 2] {
        [self.a, self.pa]
    }

    pub fn with_coords(&self, c: [f64; 2]) -> Self {
        SectionPoint { a: c[0], pa: c[1], ..*self }
    }
}

pub fn section_value(state: &RotatingState) -> f64 {
    SQRT3 * state.x - state.y + 0.5 * SQRT3
}

fn section_value_w(reg: &RegularizedState) -> f64 {
    // cos w = cos u cosh v - i sin u sinh v
    let (su, cu) = reg.u.sin_cos();
    let re = cu * reg.v.cosh();
    let im = -su * reg.v.sinh();
    0.5 * (SQRT3 * re - im) + 0.5 * SQRT3
}

/// `dg/dt` along the rotating-frame flow.
pub fn transverse_velocity(sys: &Cr3bp, state: &RotatingState) -> f64 {
    let c = 0.5 - sys.mu.value();
    let xdot = state.px + state.y;
    let ydot = state.py - (state.x + c);
    SQRT3 * xdot - ydot
}

pub fn section_project(sys: &Cr3bp, state: &RotatingState, energy: f64, t_cross: f64) -> Result<SectionPoint> {
    let g = section_value(state);
    if g.abs() > ON_SECTION_TOLERANCE {
        return Err(Error::NotOnSection(g));
    }
    let direction =
        if transverse_velocity(sys, state) >= 0.0 { Direction::Positive } else { Direction::Negative };
    Ok(SectionPoint {
        a: 2.0 * state.x + 1.0,
        pa: 0.5 * state.px + 0.5 * SQRT3 * state.py,
        energy,
        direction,
        t_cross,
    })
}

/// Reconstructs the full state on the section with `H = E`; the transverse
/// momentum root is picked by the crossing direction.
pub fn section_lift(sys: &Cr3bp, point: &SectionPoint) -> Result<RotatingState> {
    if point.a.abs() < PRIMARY_EXCLUSION {
        return Err(Error::NearPrimary(point.a));
    }
    let m = sys.mu.value();
    let c = 0.5 - m;
    let x = 0.5 * (point.a - 1.0);
    let y = 0.5 * SQRT3 * point.a;
    let r1 = ((x + 0.5).powi(2) + y * y).sqrt();
    let r2 = ((x - 0.5).powi(2) + y * y).sqrt();
    if r2 == 0.0 {
        return Err(Error::NonFiniteValue("lift onto the light primary".into()));
    }
    let phi = -(1.0 - m) / r1 - m / r2;
    // tangential and normal projections of (y, -(x + c))
    let bt = 0.5 * y - 0.5 * SQRT3 * (x + c);
    let bn = 0.5 * SQRT3 * y + 0.5 * (x + c);
    let pa = point.pa;
    let disc = 2.0 * (point.energy - 0.5 * pa * pa - pa * bt - phi - sys.energy_shift()) + bn * bn;
    // rounding at turning points (e.g. the equilibrium itself)
    let disc = if disc < 0.0 && disc > -1e-13 { 0.0 } else { disc };
    if !(disc >= 0.0) {
        return Err(Error::ForbiddenRegion(disc));
    }
    let pn = -bn + point.direction.sign() * disc.sqrt();
    let px = 0.5 * pa + 0.5 * SQRT3 * pn;
    let py = 0.5 * SQRT3 * pa - 0.5 * pn;
    Ok(RotatingState::new(x, y, px, py))
}

/// Lifts a section point into the regularized chart, carrying `t_cross`.
pub fn lift_regularized(sys: &Cr3bp, point: &SectionPoint) -> Result<RegularizedState> {
    let st = section_lift(sys, point)?;
    let mut reg = to_regularized(&st, point.energy)?;
    reg.t = point.t_cross;
    Ok(reg)
}

/// Henon step: integrate from `reg` to `g = 0` using `g` as the time variable.
fn henon_step(sys: &Cr3bp, reg: &RegularizedState) -> Result<RegularizedState> {
    let e = reg.energy;
    let g0 = section_value_w(reg);
    let field = |a: &[f64; 5]| -> Result<[f64; 5]> {
        let st = RegularizedState::from_array(*a, e);
        let (_, gdot) = sys.section_value_regularized(&st);
        if gdot == 0.0 {
            return Err(Error::NonFiniteValue("tangential crossing".into()));
        }
        let f = sys.vector_field_regularized(&st);
        Ok(f.map(|c| c / gdot))
    };
    Ok(RegularizedState::from_array(rk4_step(&reg.to_array(), field, -g0)?, e))
}

/// Henon step plus up to three polishing steps.
fn refine_crossing(sys: &Cr3bp, reg: &RegularizedState) -> Result<RegularizedState> {
    let mut s = henon_step(sys, reg)?;
    for _ in 0..MAX_POLISH {
        if section_value_w(&s).abs() < 1e-14 {
            break;
        }
        s = henon_step(sys, &s)?;
    }
    let g = section_value_w(&s);
    if g.abs() >= CROSSING_TOLERANCE {
        return Err(Error::NewtonDiverged(format!("crossing residual {g:e}")));
    }
    Ok(s)
}

/// Result of one application of the return map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub point: SectionPoint,
    /// Regularized state exactly at the crossing.
    pub state: RegularizedState,
    /// Crossings of the opposite direction passed on the way.
    pub opposite_crossings: usize,
    pub steps: usize,
    pub max_abs_k: f64,
}

/// Integrates from `reg` until the next crossing in `direction`.
pub fn next_crossing(
    sys: &Cr3bp,
    reg: &RegularizedState,
    direction: Direction,
    config: &IntegratorConfig,
) -> Result<Crossing> {
    let mut prev: Option<f64> = None;
    let mut calls = 0usize;
    let mut opposite = 0usize;
    let mut found = false;
    let prop = propagate(sys, reg, config, |s| {
        calls += 1;
        let g = section_value_w(s);
        // the start lies on the section up to rounding; only compare from
        // the end of the first step onwards
        if calls == 1 {
            return false;
        }
        let hit = match prev {
            None => false,
            Some(p) => {
                let changed = (p < 0.0 && g >= 0.0) || (p > 0.0 && g <= 0.0);
                if changed {
                    let dir = if g > p { Direction::Positive } else { Direction::Negative };
                    if dir == direction {
                        true
                    } else {
                        opposite += 1;
                        false
                    }
                } else {
                    false
                }
            }
        };
        prev = Some(g);
        found = hit;
        hit
    })?;
    debug_assert!(found);
    let state = refine_crossing(sys, &prop.state)?;
    let rot = from_regularized(&state)?;
    let mut point = section_project(sys, &rot, reg.energy, state.t)?;
    if point.direction != direction {
        return Err(Error::NewtonDiverged("crossing direction flipped during refinement".into()));
    }
    if point.a.abs() < PRIMARY_EXCLUSION {
        return Err(Error::NearPrimary(point.a));
    }
    // the projection's direction is authoritative; keep the requested tag
    point.direction = direction;
    Ok(Crossing {
        point,
        state,
        opposite_crossings: opposite,
        steps: prop.steps,
        max_abs_k: prop.max_abs_k.max(sys.energy_regularized(&state).abs()),
    })
}

/// First return of `point` to the section in the same direction.
pub fn poincare_return(sys: &Cr3bp, point: &SectionPoint, config: &IntegratorConfig) -> Result<SectionPoint> {
    let reg = lift_regularized(sys, point)?;
    Ok(next_crossing(sys, &reg, point.direction, config)?.point)
}

/// `n`-fold return map.
pub fn poincare_iterate(
    sys: &Cr3bp,
    point: &SectionPoint,
    n: usize,
    config: &IntegratorConfig,
) -> Result<SectionPoint> {
    let mut p = *point;
    for _ in 0..n {
        p = poincare_return(sys, &p, config)?;
    }
    Ok(p)
}

/// Continuous trajectory through `n` same-direction crossings (no re-lifting
/// between crossings, so energy drift accumulates honestly).
#[derive(Debug, Clone, PartialEq)]
pub struct CrossingStream {
    pub crossings: Vec<SectionPoint>,
    pub opposite_crossings: usize,
    pub max_abs_k: f64,
    pub final_state: RegularizedState,
}

pub fn crossing_stream(
    sys: &Cr3bp,
    seed: &SectionPoint,
    n: usize,
    config: &IntegratorConfig,
) -> Result<CrossingStream> {
    let mut reg = lift_regularized(sys, seed)?;
    let mut crossings = Vec::with_capacity(n);
    let mut opposite = 0;
    let mut max_abs_k = sys.energy_regularized(&reg).abs();
    for _ in 0..n {
        let c = next_crossing(sys, &reg, seed.direction, config)?;
        crossings.push(c.point);
        opposite += c.opposite_crossings;
        max_abs_k = max_abs_k.max(c.max_abs_k);
        reg = c.state;
    }
    Ok(CrossingStream { crossings, opposite_crossings: opposite, max_abs_k, final_state: reg })
}

/// Crossings for many seeds in parallel. Each entry keeps the crossings
/// reached before a failure (escape, drift, collision) together with the
/// failure itself, so chaotic orbits still contribute to section plots.
pub fn section_streams(
    sys: &Cr3bp,
    seeds: &[SectionPoint],
    n: usize,
    config: &IntegratorConfig,
) -> Vec<(Vec<SectionPoint>, Option<Error>)> {
    seeds
        .par_iter()
        .map(|seed| {
            let mut points = Vec::with_capacity(n);
            let mut reg = match lift_regularized(sys, seed) {
                Ok(r) => r,
                Err(e) => return (points, Some(e)),
            };
            for _ in 0..n {
                match next_crossing(sys, &reg, seed.direction, config) {
                    Ok(c) => {
                        points.push(c.point);
                        reg = c.state;
                    }
                    Err(e) => return (points, Some(e)),
                }
            }
            (points, None)
        })
        .collect()
}

/// Configuration-space trace of the orbit through `seed`, sampled every
/// `every` integration steps, until it has made `n` crossings in the seed's
/// direction. Each sample is `(t, state)`.
pub fn trace_orbit(
    sys: &Cr3bp,
    seed: &SectionPoint,
    n: usize,
    every: usize,
    config: &IntegratorConfig,
) -> Result<Vec<(f64, RotatingState)>> {
    if every == 0 {
        return Err(Error::InvalidParameter("sampling interval must be positive".into()));
    }
    let reg = lift_regularized(sys, seed)?;
    let mut samples = vec![(reg.t, from_regularized(&reg)?)];
    let mut prev: Option<f64> = None;
    let mut count = 0;
    let mut steps = 0usize;
    let mut failure = None;
    propagate(sys, &reg, config, |s| {
        let g = section_value_w(s);
        if let Some(p) = prev {
            let dir = if g > p { Direction::Positive } else { Direction::Negative };
            if ((p < 0.0 && g >= 0.0) || (p > 0.0 && g <= 0.0)) && dir == seed.direction {
                count += 1;
            }
        }
        if steps > 0 && (steps % every == 0 || count >= n) {
            match from_regularized(s) {
                Ok(r) => samples.push((s.t, r)),
                Err(e) => failure = Some(e),
            }
        }
        prev = Some(g);
        steps += 1;
        count >= n || failure.is_some()
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(samples),
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes crossings as CSV rows `a,pa,E,mu,direction,t_cross`.
pub fn write_crossings_csv<W: Write>(out: &mut W, mu: f64, points: &[SectionPoint]) -> Result<()> {
    writeln!(out, "a,pa,E,mu,direction,t_cross")?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt17(p.a),
            fmt17(p.pa),
            fmt17(p.energy),
            fmt17(mu),
            p.direction.label(),
            fmt17(p.t_cross)
        )?;
    }
    Ok(())
}
