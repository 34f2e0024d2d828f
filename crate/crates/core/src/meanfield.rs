//! Deterministic evolution of the location CDF `f(x, t)`.
//!
//! The time derivative at each grid node is minus the flux profile of
//! [`crate::flux`], scaled by the urge rates of the two streams. Time
//! stepping is explicit Heun with `dt` defaulting to `h/2`; the right-hand
//! side is a bounded smoothing operator, so explicit stepping is not
//! grid-stiff, but `dt <= h` is the operating range established by the
//! refinement study and exceeding it voids the monotonicity guarantees.
//!
//! The spatial window can translate right with the profile (in whole grid
//! cells, so translation is exact): cells dropped on the left must hold
//! values below `tail_tol`, and cells entering on the right are padded
//! with the current right-edge value, which the overflow check keeps
//! within `tail_tol` of 1.

use crate::flux::flux_profile;
use crate::grid::GridCdf;
use crate::kernels::{wave_speed, ModelParams};
use crate::{Error, Result};

/// Monotonicity or range violations beyond this are integrator errors;
/// anything smaller is repaired as round-off.
const STEP_REPAIR_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct MeanFieldState {
    pub f: GridCdf,
    pub t: f64,
    /// Total window displacement applied so far (whole cells).
    shifted: f64,
}

impl MeanFieldState {
    pub fn new(f: GridCdf) -> Self {
        MeanFieldState { f, t: 0.0, shifted: 0.0 }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum WindowPolicy {
    /// Keep the window fixed; error when the right tail overflows.
    Fixed,
    /// Translate the window right to track `v * t` (rounded down to whole
    /// cells) every `interval` time units.
    Moving { interval: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct IntegrateOpts {
    pub dt: f64,
    pub tail_tol: f64,
    pub window: WindowPolicy,
}

impl IntegrateOpts {
    pub fn with_step(dt: f64) -> Self {
        IntegrateOpts { dt, tail_tol: 1e-6, window: WindowPolicy::Moving { interval: 1.0 } }
    }

    pub fn fixed_window(mut self) -> Self {
        self.window = WindowPolicy::Fixed;
        self
    }
}

/// Time derivative of `f` at every grid node:
/// `-mu * flux(f; eta, J) - mu2 * flux(f; 1, J2)`. Nonpositive for any
/// valid CDF.
pub fn rhs(f: &GridCdf, params: &ModelParams) -> Vec<f64> {
    let mut out = if params.mu > 0.0 {
        let mut a = flux_profile(f, Some(&params.rate), &params.jump);
        for v in &mut a {
            *v = -params.mu * *v;
        }
        a
    } else {
        vec![0.0; f.len()]
    };
    if let Some((mu2, j2)) = params.second_stream() {
        let b = flux_profile(f, None, j2);
        for (o, bv) in out.iter_mut().zip(b) {
            *o += -mu2 * bv;
        }
    }
    out
}

/// Clamp to [0, 1] and monotonize unconditionally — internal predictor
/// states only; accepted states go through the checked path.
fn force_valid(values: &mut [f64]) {
    let mut prev = 0.0f64;
    for v in values.iter_mut() {
        *v = v.clamp(0.0, 1.0).max(prev);
        prev = *v;
    }
}

fn heun_step(f: &GridCdf, params: &ModelParams, dt: f64) -> Vec<f64> {
    let k1 = rhs(f, params);
    let mut pred: Vec<f64> = f.values().iter().zip(&k1).map(|(v, k)| v + dt * k).collect();
    force_valid(&mut pred);
    let fp = GridCdf::new(f.left(), f.step(), pred).expect("predictor forced valid");
    let k2 = rhs(&fp, params);
    f.values()
        .iter()
        .zip(k1.iter().zip(&k2))
        .map(|(v, (a, b))| v + 0.5 * dt * (a + b))
        .collect()
}

/// Validate a stepped state: round-off-sized violations are repaired,
/// larger ones abort the integration.
fn accept_step(values: &mut [f64], t: f64, left: f64, step: f64) -> Result<()> {
    let mut prev = 0.0f64;
    for (i, v) in values.iter_mut().enumerate() {
        if !v.is_finite() {
            return Err(Error::invalid(format!("non-finite CDF value at t={t}, node {i}")));
        }
        if *v < -STEP_REPAIR_TOL || *v > 1.0 + STEP_REPAIR_TOL {
            return Err(Error::MonotonicityViolation {
                excess: if *v < 0.0 { -*v } else { *v - 1.0 },
                x: left + i as f64 * step,
                t,
            });
        }
        *v = v.clamp(0.0, 1.0);
        if *v < prev {
            if prev - *v > STEP_REPAIR_TOL {
                return Err(Error::MonotonicityViolation { excess: prev - *v, x: left + i as f64 * step, t });
            }
            *v = prev;
        }
        prev = *v;
    }
    Ok(())
}

/// Integrate from `state` for `duration` time units.
pub fn integrate(
    state: MeanFieldState,
    duration: f64,
    params: &ModelParams,
    opts: &IntegrateOpts,
) -> Result<MeanFieldState> {
    if duration < 0.0 {
        return Err(Error::invalid("duration must be nonnegative"));
    }
    if opts.dt <= 0.0 {
        return Err(Error::invalid("dt must be positive"));
    }
    let MeanFieldState { mut f, mut t, mut shifted } = state;
    let t_end = t + duration;
    let v = wave_speed(params);

    while t < t_end - 1e-12 * (1.0 + t_end.abs()) {
        let dt = opts.dt.min(t_end - t);
        let mut values = heun_step(&f, params, dt);
        let t_prev = t;
        t += dt;
        accept_step(&mut values, t, f.left(), f.step())?;
        f = GridCdf::new(f.left(), f.step(), values)?;

        let (_, right_tail) = f.tails();
        if right_tail > opts.tail_tol {
            return Err(Error::WindowOverflow { mass: right_tail, tol: opts.tail_tol, t });
        }

        if let WindowPolicy::Moving { interval } = opts.window {
            if (t / interval).floor() > (t_prev / interval).floor() {
                let cells = ((v * t - shifted) / f.step()).floor().max(0.0);
                if cells >= 1.0 {
                    let by = cells * f.step();
                    f = translate_window(&f, cells as usize, opts.tail_tol, t)?;
                    shifted += by;
                }
            }
        }
    }
    Ok(MeanFieldState { f, t, shifted })
}

/// Drop `cells` cells on the left, pad the same number on the right with
/// the right-edge value. Exact because nodes coincide.
fn translate_window(f: &GridCdf, cells: usize, tail_tol: f64, t: f64) -> Result<GridCdf> {
    let n = f.len();
    if cells >= n - 1 {
        return Err(Error::invalid(format!("window shift of {cells} cells exceeds the window at t={t}")));
    }
    let dropped = f.values()[cells];
    if dropped > tail_tol {
        return Err(Error::WindowOverflow { mass: dropped, tol: tail_tol, t });
    }
    let last = f.values()[n - 1];
    let mut values = Vec::with_capacity(n);
    values.extend_from_slice(&f.values()[cells..]);
    values.resize(n, last);
    GridCdf::new(f.left() + cells as f64 * f.step(), f.step(), values)
}

/// Run to each time in `times` (sorted internally) and hand the state to
/// `on_snapshot`; returns the final state.
pub fn integrate_with_snapshots(
    mut state: MeanFieldState,
    times: &[f64],
    params: &ModelParams,
    opts: &IntegrateOpts,
    mut on_snapshot: impl FnMut(&MeanFieldState),
) -> Result<MeanFieldState> {
    let mut times: Vec<f64> = times.to_vec();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for t in times {
        if t < state.t {
            continue;
        }
        let span = t - state.t;
        state = integrate(state, span, params, opts)?;
        on_snapshot(&state);
    }
    Ok(state)
}

/// `|integral(f0 - fT) dx - v * elapsed|`: the conservation-law residual.
/// The signed integral is exact for the piecewise-linear interpolants
/// over the union window, with each CDF extended by 0 / its last value.
pub fn conservation_residual(f0: &GridCdf, ft: &GridCdf, elapsed: f64, params: &ModelParams) -> f64 {
    (signed_integral_difference(f0, ft) - wave_speed(params) * elapsed).abs()
}

fn signed_integral_difference(a: &GridCdf, b: &GridCdf) -> f64 {
    let lo = a.left().min(b.left());
    let hi = a.right().max(b.right());
    let mut nodes: Vec<f64> = Vec::with_capacity(a.len() + b.len());
    nodes.extend((0..a.len()).map(|i| a.node(i)));
    nodes.extend((0..b.len()).map(|i| b.node(i)));
    nodes.retain(|x| *x >= lo && *x <= hi);
    nodes.sort_by(|x, y| x.partial_cmp(y).unwrap());
    nodes.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
    let mut acc = 0.0;
    let mut x0 = nodes[0];
    let mut d0 = a.eval(x0) - b.eval(x0);
    for &x1 in &nodes[1..] {
        let d1 = a.eval(x1) - b.eval(x1);
        acc += 0.5 * (d0 + d1) * (x1 - x0);
        x0 = x1;
        d0 = d1;
    }
    acc
}

/// L1 distance between the state pulled back to the wave frame,
/// `f(. + v t, t)`, and a reference profile.
pub fn l1_distance_to_wave(state: &MeanFieldState, phi: &GridCdf, params: &ModelParams) -> Result<f64> {
    let shifted = state.f.translate(-wave_speed(params) * state.t);
    if shifted.right() < phi.left() || phi.right() < shifted.left() {
        return Err(Error::NoOverlap {
            a_left: shifted.left(),
            a_right: shifted.right(),
            b_left: phi.left(),
            b_right: phi.right(),
        });
    }
    Ok(shifted.l1_distance(phi))
}
