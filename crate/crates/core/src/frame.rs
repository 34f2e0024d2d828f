//! Steady profiles of the regulated single-particle process on a finite
//! frame `[-B_L, B_R]`.
//!
//! The process drifts left at speed `w`, sticks at the left boundary,
//! receives urges at rate `mu` accepted with probability
//! `eta_bar(x, gamma)` (plus an optional always-accepted stream at rate
//! `mu2`), and jumps are truncated at `B_R`. Its stationary profile
//! `gamma` with environment equal to itself solves
//!
//! ```text
//! w * gamma'(x) = zeta(x),   gamma(-B_L) > 0,   gamma(B_R) = 1,
//! ```
//!
//! where `zeta` is the stationary left-to-right probability flux. Because
//! `zeta(x)` depends only on `gamma` below `x`, the profile is computed
//! by a forward Volterra march for a trial atom mass `p = gamma(-B_L)`,
//! and `p` is bisected until the march lands on `gamma(B_R) = 1`:
//! `gamma(B_R)` grows monotonically with `p`, trial profiles that cross 1
//! early mean `p` is too large, and `p = 0` gives the zero profile.
//!
//! [`apply_operator_mc`] is the independent Monte Carlo route: it
//! simulates the particle against a fixed environment and returns its
//! exact time-occupancy profile, for cross-validating the fixed point.

use rand::Rng;

use crate::flux::{flux_profile_with, KernelLags};
use crate::grid::GridCdf;
use crate::kernels::{eta_bar, eta_bar_left_atom, JumpKernel, ModelParams, RateCurve};
use crate::rng;
use crate::{Error, Result};

/// Frame geometry plus the leftward drift speed.
#[derive(Debug, Clone, Copy)]
pub struct FrameSpec {
    pub w: f64,
    pub b_left: f64,
    pub b_right: f64,
    pub h: f64,
}

impl FrameSpec {
    pub fn new(w: f64, b_left: f64, b_right: f64, h: f64) -> Result<Self> {
        let spec = FrameSpec { w, b_left, b_right, h };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w.is_finite() && self.w > 0.0) {
            return Err(Error::invalid(format!("frame speed w must be positive, got {}", self.w)));
        }
        if !(self.b_left > 0.0 && self.b_right > 0.0) {
            return Err(Error::invalid("frame half-widths must be positive"));
        }
        if !(self.h > 0.0 && self.h <= (self.b_left + self.b_right) / 8.0) {
            return Err(Error::invalid(format!(
                "grid step {} too coarse for frame [{}, {}]",
                self.h, -self.b_left, self.b_right
            )));
        }
        Ok(())
    }

    /// Number of grid nodes, with the step snapped so the frame is a
    /// whole number of cells.
    pub fn nodes(&self) -> usize {
        ((self.b_left + self.b_right) / self.h).round() as usize + 1
    }

    pub fn snapped_step(&self) -> f64 {
        (self.b_left + self.b_right) / (self.nodes() - 1) as f64
    }
}

/// Stationary flux profile of `gamma` at every grid node:
/// `mu * flux(gamma; eta, J) + mu2 * flux(gamma; 1, J2)`.
pub fn zeta_profile(gamma: &GridCdf, params: &ModelParams) -> Vec<f64> {
    let lags = KernelLags::new(&params.jump, gamma.step(), gamma.len());
    let mut out = flux_profile_with(gamma, Some(&params.rate), &lags);
    for v in &mut out {
        *v *= params.mu;
    }
    if let Some((mu2, j2)) = params.second_stream() {
        let lags2 = KernelLags::new(j2, gamma.step(), gamma.len());
        let second = flux_profile_with(gamma, None, &lags2);
        for (o, s) in out.iter_mut().zip(second) {
            *o += mu2 * s;
        }
    }
    out
}

/// Flux across one arbitrary point.
pub fn zeta_at(x: f64, gamma: &GridCdf, params: &ModelParams) -> f64 {
    let mut z = params.mu * crate::flux::flux_at(gamma, x, Some(&params.rate), &params.jump);
    if let Some((mu2, j2)) = params.second_stream() {
        z += mu2 * crate::flux::flux_at(gamma, x, None, j2);
    }
    z
}

#[derive(Debug, Clone, Copy)]
pub struct FixedPointOpts {
    /// Bisection stops when `|gamma(B_R) - 1|` falls below this.
    pub fp_tol: f64,
    /// The returned profile must have flux at least this everywhere.
    pub zeta_min: f64,
    pub max_bisection: usize,
}

impl Default for FixedPointOpts {
    fn default() -> Self {
        FixedPointOpts { fp_tol: 1e-8, zeta_min: 1e-10, max_bisection: 200 }
    }
}

enum MarchOutcome {
    /// The profile crossed 1 before reaching the right boundary: the
    /// trial atom is too large.
    Overshoot,
    Completed { values: Vec<f64>, zeta: Vec<f64>, right_value: f64 },
}

/// Running convolution of one jump stream along the march.
///
/// Exponential kernels satisfy `Jbar(d + h) = Jbar(h) * Jbar(d)`, so the
/// flux from all earlier cells advances by one geometric factor per node
/// (O(1) per node, exact). Other kernels fall back to a direct sum over
/// the lags within the kernel's support.
struct StreamFlux {
    lags: KernelLags,
    decay: Option<f64>,
    /// Per completed cell: rate-and-acceptance-weighted mass.
    weights: Vec<f64>,
    atom: f64,
    /// Geometric mode: flux at the current node from atom + cells so far.
    acc: f64,
}

impl StreamFlux {
    fn new(jump: &JumpKernel, h: f64, n: usize) -> Self {
        let decay = match jump {
            JumpKernel::Exponential { rate } => Some((-rate * h).exp()),
            _ => None,
        };
        StreamFlux { lags: KernelLags::new(jump, h, n), decay, weights: Vec::with_capacity(n - 1), atom: 0.0, acc: 0.0 }
    }

    fn reset(&mut self, atom_weight: f64) {
        self.weights.clear();
        self.atom = atom_weight;
        self.acc = atom_weight; // Jbar(0) = 1
    }

    /// Flux at the current node `i` (atom plus completed cells `< i`).
    fn at_node(&self, i: usize) -> f64 {
        match self.decay {
            Some(_) => self.acc,
            None => {
                let mut acc = self.atom * self.lags.node[i];
                let lo = i.saturating_sub(self.lags.cutoff);
                for j in lo..i {
                    acc += self.weights[j] * self.lags.mid[i - 1 - j];
                }
                acc
            }
        }
    }

    /// Flux at node `i + 1` from the atom and completed cells `< i` only
    /// (the marching cell is added by the corrector).
    fn base_next(&self, i: usize) -> f64 {
        match self.decay {
            Some(d) => d * self.acc,
            None => {
                let mut acc = self.atom * self.lags.node[i + 1];
                let lo = (i + 1).saturating_sub(self.lags.cutoff).min(i);
                for j in lo..i {
                    acc += self.weights[j] * self.lags.mid[i - j];
                }
                acc
            }
        }
    }

    /// Commit the marching cell's weighted mass and move to node `i + 1`.
    fn push_cell(&mut self, weighted_mass: f64) {
        self.weights.push(weighted_mass);
        if let Some(d) = self.decay {
            self.acc = d * self.acc + weighted_mass * self.lags.mid[0];
        }
    }

    fn mid0(&self) -> f64 {
        self.lags.mid[0]
    }
}

/// One forward Volterra march for a trial atom mass `p`, trapezoidal
/// predictor-corrector per cell.
struct Marcher<'a> {
    n: usize,
    h: f64,
    w: f64,
    mu: f64,
    rate: &'a RateCurve,
    mu2: f64,
}

impl<'a> Marcher<'a> {
    fn new(spec: &FrameSpec, params: &'a ModelParams) -> (Self, StreamFlux, Option<StreamFlux>) {
        let n = spec.nodes();
        let h = spec.snapped_step();
        let s1 = StreamFlux::new(&params.jump, h, n);
        let s2 = params.second_stream().map(|(_, j2)| StreamFlux::new(j2, h, n));
        let mu2 = params.second_stream().map_or(0.0, |(mu2, _)| mu2);
        (Marcher { n, h, w: spec.w, mu: params.mu, rate: &params.rate, mu2 }, s1, s2)
    }

    fn march(&self, p: f64, s1: &mut StreamFlux, s2: &mut Option<StreamFlux>) -> MarchOutcome {
        let n = self.n;
        let mut values = vec![0.0; n];
        values[0] = p;
        let mut zeta = vec![0.0; n];
        s1.reset(self.mu * p * eta_bar_left_atom(p, self.rate));
        if let Some(s2) = s2.as_mut() {
            s2.reset(self.mu2 * p);
        }
        let step_ratio = self.h / self.w;

        zeta[0] = s1.at_node(0) + s2.as_ref().map_or(0.0, |s| s.at_node(0));
        for i in 0..n - 1 {
            let zeta_i = zeta[i];
            let base1 = s1.base_next(i);
            let base2 = s2.as_ref().map_or(0.0, |s| s.base_next(i));

            // Predictor, then two trapezoidal corrector passes.
            let mut v_next = values[i] + step_ratio * zeta_i;
            let mut zeta_next = 0.0;
            for _ in 0..2 {
                let capped = v_next.min(1.0);
                let mass = (capped - values[i]).max(0.0);
                let eta_c = self.rate.eval(0.5 * (values[i] + capped));
                zeta_next = base1 + self.mu * mass * eta_c * s1.mid0();
                if let Some(s2) = s2.as_ref() {
                    zeta_next += base2 + self.mu2 * mass * s2.mid0();
                }
                v_next = values[i] + 0.5 * step_ratio * (zeta_i + zeta_next);
            }

            if v_next > 1.0 + 1e-12 && i + 1 < n - 1 {
                return MarchOutcome::Overshoot;
            }
            let clamped = v_next.min(1.0);
            values[i + 1] = clamped;
            zeta[i + 1] = zeta_next;
            let mass = clamped - values[i];
            s1.push_cell(self.mu * mass * self.rate.eval(0.5 * (values[i] + clamped)));
            if let Some(s2) = s2.as_mut() {
                s2.push_cell(self.mu2 * mass);
            }
        }
        let right_value = *values.last().unwrap();
        MarchOutcome::Completed { values, zeta, right_value }
    }
}

/// The finite-frame steady profile for `spec` and `params`.
///
/// Bisection over the left-atom mass: the bracket starts at `(0, 1)`
/// (no atom gives the zero profile, a full atom overshoots immediately);
/// an interval collapse without meeting `gamma(B_R) = 1` reports an
/// inconsistent discretization.
pub fn fixed_point(spec: &FrameSpec, params: &ModelParams) -> Result<GridCdf> {
    fixed_point_with(spec, params, &FixedPointOpts::default())
}

pub fn fixed_point_with(spec: &FrameSpec, params: &ModelParams, opts: &FixedPointOpts) -> Result<GridCdf> {
    spec.validate()?;
    params.validate()?;
    let (marcher, mut s1, mut s2) = Marcher::new(spec, params);

    // Bisect the atom mass until the bracket is exhausted at machine
    // precision. Running past the first profile within `fp_tol` keeps the
    // returned profile a (nearly) continuous function of `w`, which the
    // speed tuning in the wave module depends on: stopping early would
    // quantize gamma by the fp_tol acceptance band, amplified backwards
    // through the march.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..opts.max_bisection {
        let p = 0.5 * (lo + hi);
        match marcher.march(p, &mut s1, &mut s2) {
            MarchOutcome::Overshoot => hi = p,
            MarchOutcome::Completed { right_value, .. } => {
                if right_value < 1.0 {
                    lo = p;
                } else {
                    hi = p;
                }
            }
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    if lo == 0.0 {
        // Every representable atom mass overshoots: the profile
        // concentrates at the right wall faster than f64 can express.
        return Err(Error::BisectionFailure(format!(
            "atom bracket collapsed at p = {hi:.6e}; the profile degenerates to a point mass at B_R at this drift speed"
        )));
    }

    match marcher.march(lo, &mut s1, &mut s2) {
        MarchOutcome::Overshoot => Err(Error::BisectionFailure(
            "final atom candidate overshoots; inconsistent discretization".into(),
        )),
        MarchOutcome::Completed { mut values, zeta, right_value } => {
            // The march amplifies the atom mass exponentially across the
            // frame, so adjacent representable atom values straddle
            // gamma(B_R) = 1 with a gap that can exceed fp_tol on wide
            // frames (~3e-7 at half-width 10). A gap within the
            // granularity allowance is the sub-resolution remainder of
            // the last cell; assign it to the right boundary node, where
            // the exact profile has gamma(B_R) = 1. Larger gaps mean the
            // discretization is genuinely inconsistent.
            let gap = (right_value - 1.0).abs();
            if gap > opts.fp_tol.max(GAP_ALLOWANCE) {
                return Err(Error::BisectionFailure(format!(
                    "right-boundary gap |gamma(B_R) - 1| = {gap:.3e} exceeds the granularity allowance; \
                     inconsistent discretization"
                )));
            }
            *values.last_mut().unwrap() = 1.0;
            // The flux floor is checked on the profile body
            // (1e-6 <= gamma <= 1 - 1e-6): in the extreme tails the flux
            // is positive but falls below any fixed floor once the atom
            // or the saturation gap drops under it, without the profile
            // being degenerate.
            let min_zeta = zeta
                .iter()
                .zip(&values)
                .filter(|(_, v)| (1e-6..=1.0 - 1e-6).contains(*v))
                .map(|(z, _)| *z)
                .fold(f64::INFINITY, f64::min);
            if min_zeta < opts.zeta_min {
                return Err(Error::BisectionFailure(format!(
                    "flux floor violated: min zeta {min_zeta:.3e} below {:.3e}",
                    opts.zeta_min
                )));
            }
            GridCdf::new(-spec.b_left, marcher.h, values)
        }
    }
}

/// Right-boundary gap tolerated at atom-bisection exhaustion, covering
/// the f64 granularity of the exponentially amplifying march on frames
/// up to half-width ~25.
const GAP_ALLOWANCE: f64 = 1e-4;

/// Numerical residuals of the fixed-point characterization.
#[derive(Debug, Clone, Copy)]
pub struct FixedPointReport {
    /// Largest cell increment in excess of `h/w` (cells after the first).
    pub lipschitz_excess: f64,
    /// Mass at the left boundary (must be positive).
    pub atom_mass: f64,
    /// `|gamma(B_R) - 1|`.
    pub right_gap: f64,
    /// Max of `|w gamma'(x) - zeta(x)|` over interior nodes, with `zeta`
    /// recomputed from scratch and `gamma'` by central differences.
    pub max_flux_residual: f64,
    /// Smallest flux value on the frame.
    pub min_zeta: f64,
    /// Smallest flux value on the profile body (1e-6 <= gamma <= 1 - 1e-6),
    /// the region where the positivity floor is meaningful in f64.
    pub min_zeta_body: f64,
}

/// Check a profile against the flux-balance characterization,
/// independently of the march that produced it.
pub fn verify_fixed_point(gamma: &GridCdf, spec: &FrameSpec, params: &ModelParams) -> FixedPointReport {
    let zeta = zeta_profile(gamma, params);
    let values = gamma.values();
    let n = values.len();
    let mut max_res = 0.0f64;
    for i in 1..n - 1 {
        let dg = (values[i + 1] - values[i - 1]) / (2.0 * gamma.step());
        max_res = max_res.max((spec.w * dg - zeta[i]).abs());
    }
    FixedPointReport {
        lipschitz_excess: gamma.lipschitz_excess(1.0 / spec.w),
        atom_mass: gamma.atom_mass(),
        right_gap: (values[n - 1] - 1.0).abs(),
        max_flux_residual: max_res,
        min_zeta: zeta[..n - 1].iter().cloned().fold(f64::INFINITY, f64::min),
        min_zeta_body: zeta
            .iter()
            .zip(values)
            .filter(|(_, v)| (1e-6..=1.0 - 1e-6).contains(*v))
            .map(|(z, _)| *z)
            .fold(f64::INFINITY, f64::min),
    }
}

/// Simulate the regulated single-particle process against the fixed
/// environment `gamma` and return its time-occupancy CDF on `gamma`'s
/// grid.
///
/// Occupancy is exact for the simulated path: drift segments enter the
/// profile as analytic ramps (two weighted point-events each), and time
/// spent stuck at the left boundary accumulates in the atom with no
/// histogram smearing. `events` counts urge arrivals.
pub fn apply_operator_mc(
    gamma: &GridCdf,
    spec: &FrameSpec,
    params: &ModelParams,
    events: u64,
    seed: u64,
) -> Result<GridCdf> {
    spec.validate()?;
    params.validate()?;
    if (gamma.left() + spec.b_left).abs() > 1e-9 || (gamma.right() - spec.b_right).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "environment frame [{}, {}] does not match spec [{}, {}]",
            gamma.left(),
            gamma.right(),
            -spec.b_left,
            spec.b_right
        )));
    }
    let mut rng = rng::stream_indexed(seed, "frame-mc", 0);
    let left = gamma.left();
    let right = gamma.right();
    let h = gamma.step();
    let n = gamma.len();
    let mu_total = params.mu + params.mu2;

    // Ramp events: occupancy(x) picks up slope +-1/w at position p; store
    // per-cell sums of signs (s0) and signed positions (s1).
    let mut s0 = vec![0.0f64; n];
    let mut s1 = vec![0.0f64; n];
    let mut atom_time = 0.0f64;
    let mut moving_time = 0.0f64;
    let mut x = left;

    let eta0 = eta_bar_left_atom(gamma.atom_mass(), &params.rate);
    for _ in 0..events {
        let u: f64 = rng.gen();
        let tau = -(1.0 - u).ln() / mu_total;
        let lo = (x - spec.w * tau).max(left);
        if x > lo {
            // Drift segment [lo, x] traversed at speed w.
            let cell_lo = (((lo - left) / h) as usize).min(n - 1);
            let cell_hi = (((x - left) / h) as usize).min(n - 1);
            s0[cell_lo] += 1.0;
            s1[cell_lo] += lo;
            s0[cell_hi] -= 1.0;
            s1[cell_hi] -= x;
            moving_time += (x - lo) / spec.w;
        }
        atom_time += tau - (x - lo) / spec.w;
        x = lo;

        // The urge: stream choice, acceptance, truncated jump.
        let type1 = match params.second_stream() {
            None => true,
            Some((mu2, _)) => rng.gen::<f64>() < params.mu / (params.mu + mu2),
        };
        if type1 {
            let accept = if x == left { eta0 } else { eta_bar(x, gamma, &params.rate) };
            if rng.gen::<f64>() < accept {
                x = (x + params.jump.sample(&mut rng)).min(right);
            }
        } else {
            let (_, j2) = params.second_stream().expect("stream choice without second stream");
            x = (x + j2.sample(&mut rng)).min(right);
        }
    }

    let total = atom_time + moving_time;
    if total <= 0.0 {
        return Err(Error::invalid("simulated no time; increase events"));
    }
    // occupancy(x_i) = atom + sum of ramps = atom + (x_i * A(i) - B(i)) / w,
    // with A and B the prefix sums of the sign/position events in cells < i.
    let inv_w = 1.0 / spec.w;
    let mut values = Vec::with_capacity(n);
    let mut a_acc = 0.0f64;
    let mut b_acc = 0.0f64;
    values.push(atom_time / total);
    for i in 1..n {
        a_acc += s0[i - 1];
        b_acc += s1[i - 1];
        let x_i = gamma.node(i);
        let d = (x_i * a_acc - b_acc) * inv_w;
        values.push(((atom_time + d) / total).clamp(0.0, 1.0));
    }
    GridCdf::new(left, h, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::JumpKernel;
    use approx::assert_relative_eq;

    fn k1_params() -> ModelParams {
        ModelParams::new(1.0, JumpKernel::Exponential { rate: 1.0 }, RateCurve::Power { k: 1 })
    }

    #[test]
    fn zeta_of_dirac_environment() {
        // gamma = Dirac at -B_L: zeta(x) = H(1) * Jbar(x + B_L).
        let g = GridCdf::dirac_at_left(-2.0, 2.0, 0.01).unwrap();
        let params = k1_params();
        let zeta = zeta_profile(&g, &params);
        for i in (0..g.len()).step_by(40) {
            let x = g.node(i);
            assert_relative_eq!(zeta[i], 0.5 * (-(x + 2.0)).exp(), epsilon = 1e-12);
        }
        // At the left boundary only the atom contributes.
        assert_relative_eq!(zeta_at(-2.0, &g, &params), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn zeta_flat_kernel_analytic() {
        // Linear gamma on [-1, 1], no atom, eta = 1 - nu, deterministic
        // jumps larger than the frame: zeta(x) = g - g^2/2 at g = gamma(x).
        let g = GridCdf::uniform(-1.0, 1.0, 0.01).unwrap();
        let params = ModelParams::new(1.0, JumpKernel::Deterministic { size: 10.0 }, RateCurve::Power { k: 1 });
        let zeta = zeta_profile(&g, &params);
        for i in (0..g.len()).step_by(20) {
            let gv = g.values()[i];
            assert_relative_eq!(zeta[i], gv - 0.5 * gv * gv, epsilon = 5e-5);
        }
    }

    #[test]
    fn fast_drift_concentrates_at_left_wall() {
        // 1/w-Lipschitz forces gamma(-B_L) >= 1 - width/w.
        let spec = FrameSpec::new(1000.0, 2.0, 2.0, 0.01).unwrap();
        let gamma = fixed_point(&spec, &k1_params()).unwrap();
        assert!(gamma.atom_mass() >= 1.0 - 4.0 / 1000.0, "atom {}", gamma.atom_mass());
    }

    #[test]
    fn slow_drift_concentrates_at_right_wall() {
        // Small w: the profile piles up against the right wall. The atom
        // mass shrinks like exp(-width/w), so w = 0.1 is about as small
        // as f64 can represent on this frame.
        let spec = FrameSpec::new(0.1, 2.0, 2.0, 0.005).unwrap();
        let gamma = fixed_point(&spec, &k1_params()).unwrap();
        assert!(gamma.eval(1.0) < 0.05, "gamma(B_R - 1) = {}", gamma.eval(1.0));
        assert!(gamma.median() > 1.0, "median {}", gamma.median());

        // Below the representable range the bisection reports the
        // degeneracy instead of fabricating a profile.
        let res = fixed_point(&FrameSpec::new(1e-3, 2.0, 2.0, 0.005).unwrap(), &k1_params());
        assert!(matches!(res, Err(Error::BisectionFailure(_))));
    }

    #[test]
    fn interior_matches_closed_form_at_the_true_speed() {
        // At w = v = 0.5 on a wide frame, the interior profile is the
        // closed-form wave up to a shift.
        let spec = FrameSpec::new(0.5, 10.0, 10.0, 0.01).unwrap();
        let params = k1_params();
        let gamma = fixed_point(&spec, &params).unwrap();
        let report = verify_fixed_point(&gamma, &spec, &params);
        assert!(report.atom_mass > 0.0);
        assert!(report.right_gap <= 1e-7);
        assert!(report.lipschitz_excess <= 0.0, "excess {}", report.lipschitz_excess);
        assert!(report.max_flux_residual < 1e-3, "flux residual {}", report.max_flux_residual);
        assert!(report.min_zeta > 1e-10);

        let c = crate::kernels::closed_form_median(1, 0.0);
        let aligned = crate::kernels::closed_form_wave(1, gamma.median() - c, -10.0, spec.snapped_step(), gamma.len());
        let interior_gamma = gamma.restrict(-8.0, 8.0).unwrap();
        let interior_phi = aligned.restrict(-8.0, 8.0).unwrap();
        let d = interior_gamma.sup_distance(&interior_phi);
        assert!(d < 2e-2, "interior distance to the closed form: {d}");
    }

    #[test]
    fn volterra_self_consistency() {
        // Recomputing zeta from the returned profile reproduces w*gamma'.
        let spec = FrameSpec::new(0.4, 5.0, 5.0, 0.01).unwrap();
        let params = ModelParams::new(1.0, JumpKernel::Uniform { a: 0.0, b: 2.0 }, RateCurve::Power { k: 2 });
        let gamma = fixed_point(&spec, &params).unwrap();
        let report = verify_fixed_point(&gamma, &spec, &params);
        assert!(report.max_flux_residual < 1e-3, "flux residual {}", report.max_flux_residual);
        // The compact-support kernel saturates the profile mid-frame, so
        // the raw flux floor is 0 there; the body floor stays positive.
        assert!(report.min_zeta_body > 1e-10, "body flux floor {}", report.min_zeta_body);
    }

    #[test]
    fn monotone_in_drift_speed() {
        // Larger w pushes mass left: pointwise larger CDF values.
        let params = k1_params();
        let slow = fixed_point(&FrameSpec::new(0.4, 4.0, 4.0, 0.01).unwrap(), &params).unwrap();
        let fast = fixed_point(&FrameSpec::new(0.6, 4.0, 4.0, 0.01).unwrap(), &params).unwrap();
        for i in 0..slow.len() {
            assert!(fast.values()[i] >= slow.values()[i] - 1e-9, "dominance fails at node {i}");
        }
    }

    #[test]
    fn shift_equivariance_is_exact() {
        // Shifting the frame shifts the profile: the march sees only
        // relative distances, so the values agree bit for bit.
        let params = k1_params();
        let base = fixed_point(&FrameSpec::new(0.5, 4.0, 4.0, 0.01).unwrap(), &params).unwrap();
        let shifted = fixed_point(&FrameSpec::new(0.5, 3.5, 4.5, 0.01).unwrap(), &params).unwrap();
        let translated = base.translate(0.5);
        assert_relative_eq!(translated.left(), shifted.left(), epsilon = 1e-12);
        for (a, b) in translated.values().iter().zip(shifted.values()) {
            assert_eq!(a, b, "shifted march must be bit-identical");
        }
    }

    #[test]
    fn negative_controls_are_flagged() {
        let spec = FrameSpec::new(0.5, 2.0, 2.0, 0.01).unwrap();
        let params = k1_params();
        // No left atom: the boundary condition gamma(-B_L) > 0 fails.
        let uniform = GridCdf::uniform(-2.0, 2.0, 0.01).unwrap();
        let rep = verify_fixed_point(&uniform, &spec, &params);
        assert_eq!(rep.atom_mass, 0.0);
        // Dirac at the wall: w gamma' = 0 in the interior but zeta > 0.
        let dirac = GridCdf::dirac_at_left(-2.0, 2.0, 0.01).unwrap();
        let rep = verify_fixed_point(&dirac, &spec, &params);
        assert!(rep.max_flux_residual > 0.05, "residual {}", rep.max_flux_residual);
    }

    #[test]
    fn mc_occupancy_matches_renewal_oracle() {
        // Environment = Dirac at -B_L. Interior acceptance is eta(1) = 0,
        // boundary acceptance averages eta over (0, 1], i.e. H(1) = 1/2.
        // The process renews at the wall: sojourn Exp(mu * H(1)), then one
        // excursion from min(Y, width) decayed at speed w. For exponential
        // jumps the occupancy is
        //   F(-B_L + s) = (T0 + (1 - e^{-s}) / w) / (T0 + (1 - e^{-W}) / w)
        // with T0 = 1 / (mu H(1)) and W the frame width.
        let spec = FrameSpec::new(0.5, 1.0, 3.0, 0.01).unwrap();
        let params = k1_params();
        let env = GridCdf::dirac_at_left(-1.0, 3.0, 0.01).unwrap();
        let got = apply_operator_mc(&env, &spec, &params, 2_000_000, 7).unwrap();
        let t0 = 1.0 / (params.mu * 0.5);
        let width = 4.0f64;
        let denom = t0 + (1.0 - (-width).exp()) / spec.w;
        let oracle = |s: f64| (t0 + (1.0 - (-s).exp()) / spec.w) / denom;
        let mut worst = 0.0f64;
        for i in 0..got.len() {
            let s = got.node(i) + 1.0;
            worst = worst.max((got.values()[i] - oracle(s)).abs());
        }
        assert!(worst < 5e-3, "sup deviation from renewal oracle: {worst}");
        // Total mass is exactly 1 by construction.
        assert_relative_eq!(*got.values().last().unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mc_stays_in_frame_and_is_lipschitz_away_from_the_atom() {
        let spec = FrameSpec::new(0.5, 3.0, 3.0, 0.01).unwrap();
        let params = k1_params();
        let gamma = fixed_point(&spec, &params).unwrap();
        let occ = apply_operator_mc(&gamma, &spec, &params, 500_000, 3).unwrap();
        assert_eq!(occ.len(), gamma.len());
        assert!(occ.values().iter().all(|v| (0.0..=1.0).contains(v)));
        // 1/w-Lipschitz up to Monte Carlo noise.
        let excess = occ.lipschitz_excess(1.0 / spec.w);
        assert!(excess < 0.2 * occ.step() / spec.w, "Lipschitz excess {excess}");
    }

    #[test]
    fn mc_fixed_point_round_trip() {
        // gamma := fixed_point(spec) reproduces itself under the Monte
        // Carlo operator within sampling error.
        let spec = FrameSpec::new(0.5, 5.0, 5.0, 0.01).unwrap();
        let params = k1_params();
        let gamma = fixed_point(&spec, &params).unwrap();
        let occ = apply_operator_mc(&gamma, &spec, &params, 3_000_000, 11).unwrap();
        let d = gamma.sup_distance(&occ);
        assert!(d < 0.02, "MC round-trip sup distance {d}");
    }

    #[test]
    fn frame_mismatch_is_rejected() {
        let spec = FrameSpec::new(0.5, 2.0, 2.0, 0.01).unwrap();
        let env = GridCdf::dirac_at_left(-1.0, 3.0, 0.01).unwrap();
        assert!(apply_operator_mc(&env, &spec, &k1_params(), 10, 0).is_err());
    }
}
