//! Jump-size laws, rate curves, model parameters and derived quantities.
//!
//! A model is `(mu, J, eta)` plus an optional second jump stream
//! `(mu2, J2)` whose jumps are always accepted. The induced drift speed
//! of the location distribution is
//! `v = mu * m1 * integral(eta, 0..1) + mu2 * m2_1`,
//! where `m1`, `m2_1` are the mean jump sizes of the two streams.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::grid::GridCdf;
use crate::{Error, Result};

/// Highest jump-size moment order kept available.
pub const MAX_MOMENT_ORDER: usize = 4;

/// CDF values closer than this are treated as a continuity point when
/// averaging the rate curve over a jump of the environment CDF.
const ATOM_EPS: f64 = 1e-12;

/// Nonnegative jump-size distribution `J`.
///
/// `ccdf` is the complementary CDF `1 - J(y)`, which is what every
/// integral operator in this crate consumes. The `table` kind stores
/// inverse-CDF (quantile) samples at evenly spaced probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpKernel {
    Exponential { rate: f64 },
    Deterministic { size: f64 },
    Uniform { a: f64, b: f64 },
    Table { quantiles: Vec<f64> },
}

impl JumpKernel {
    pub fn validate(&self) -> Result<()> {
        match self {
            JumpKernel::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(Error::invalid(format!("exponential rate must be positive, got {rate}")));
                }
            }
            JumpKernel::Deterministic { size } => {
                if !(size.is_finite() && *size > 0.0) {
                    return Err(Error::invalid(format!("deterministic size must be positive, got {size}")));
                }
            }
            JumpKernel::Uniform { a, b } => {
                if !(a.is_finite() && b.is_finite() && *a >= 0.0 && b > a) {
                    return Err(Error::invalid(format!("uniform kernel needs 0 <= a < b, got a={a}, b={b}")));
                }
            }
            JumpKernel::Table { quantiles } => {
                if quantiles.len() < 2 {
                    return Err(Error::invalid("table kernel needs at least 2 quantile samples"));
                }
                if quantiles.iter().any(|q| !q.is_finite() || *q < 0.0) {
                    return Err(Error::invalid("table kernel quantiles must be finite and nonnegative"));
                }
                if quantiles.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::invalid("table kernel quantiles must be nondecreasing"));
                }
                if self.moment(1)? <= 0.0 {
                    return Err(Error::invalid("table kernel must have positive mean jump size"));
                }
            }
        }
        Ok(())
    }

    /// Complementary CDF `1 - J(y)`; equals 1 for `y < 0`.
    pub fn ccdf(&self, y: f64) -> f64 {
        if y < 0.0 {
            return 1.0;
        }
        match self {
            JumpKernel::Exponential { rate } => (-rate * y).exp(),
            JumpKernel::Deterministic { size } => {
                if y < *size {
                    1.0
                } else {
                    0.0
                }
            }
            JumpKernel::Uniform { a, b } => {
                if y < *a {
                    1.0
                } else if y >= *b {
                    0.0
                } else {
                    (b - y) / (b - a)
                }
            }
            JumpKernel::Table { quantiles } => {
                // J(y) = measure of probabilities whose quantile is <= y.
                let n = quantiles.len();
                let last = quantiles[n - 1];
                if y >= last {
                    return 0.0;
                }
                // First index with q[i] > y.
                let k = quantiles.partition_point(|q| *q <= y);
                if k == 0 {
                    return 1.0;
                }
                let dnu = 1.0 / (n - 1) as f64;
                let (q0, q1) = (quantiles[k - 1], quantiles[k]);
                let frac = if q1 > q0 { (y - q0) / (q1 - q0) } else { 1.0 };
                let j = dnu * ((k - 1) as f64 + frac);
                (1.0 - j).clamp(0.0, 1.0)
            }
        }
    }

    /// `k`-th moment of the jump size, exact for the closed-form kinds
    /// and exact for the interpolated quantile function of a table.
    pub fn moment(&self, k: usize) -> Result<f64> {
        if k == 0 {
            return Ok(1.0);
        }
        if k > MAX_MOMENT_ORDER {
            return Err(Error::UnsupportedMoment { requested: k, max: MAX_MOMENT_ORDER });
        }
        Ok(match self {
            JumpKernel::Exponential { rate } => (1..=k).map(|i| i as f64).product::<f64>() / rate.powi(k as i32),
            JumpKernel::Deterministic { size } => size.powi(k as i32),
            JumpKernel::Uniform { a, b } => {
                (b.powi(k as i32 + 1) - a.powi(k as i32 + 1)) / ((k as f64 + 1.0) * (b - a))
            }
            JumpKernel::Table { quantiles } => {
                let n = quantiles.len();
                let dnu = 1.0 / (n - 1) as f64;
                let mut acc = 0.0;
                for w in quantiles.windows(2) {
                    let (q0, q1) = (w[0], w[1]);
                    // Exact integral of (linear in nu)^k over the segment.
                    acc += if (q1 - q0).abs() < 1e-300 {
                        q0.powi(k as i32) * dnu
                    } else {
                        dnu * (q1.powi(k as i32 + 1) - q0.powi(k as i32 + 1)) / ((k as f64 + 1.0) * (q1 - q0))
                    };
                }
                acc
            }
        })
    }

    /// Mean jump size `m1`.
    pub fn mean(&self) -> f64 {
        self.moment(1).expect("first moment is always available")
    }

    /// Exact average of `ccdf` over `[lo, hi]`, `0 <= lo < hi`. Grid
    /// convolutions use cell averages rather than midpoint values: both
    /// are second-order for smooth kernels, but averages stay exact
    /// across the kinks of compact-support kernels.
    pub fn ccdf_cell_average(&self, lo: f64, hi: f64) -> f64 {
        debug_assert!(hi > lo && lo >= 0.0);
        match self {
            JumpKernel::Exponential { rate } => ((-rate * lo).exp() - (-rate * hi).exp()) / (rate * (hi - lo)),
            JumpKernel::Deterministic { size } => ((size - lo).clamp(0.0, hi - lo)) / (hi - lo),
            JumpKernel::Uniform { a, b } => {
                // Antiderivative of ccdf: y for y <= a, then quadratic,
                // then constant a + (b - a)/2.
                let anti = |y: f64| -> f64 {
                    if y <= *a {
                        y
                    } else if y >= *b {
                        a + 0.5 * (b - a)
                    } else {
                        a + (b * (y - a) - 0.5 * (y * y - a * a)) / (b - a)
                    }
                };
                (anti(hi) - anti(lo)) / (hi - lo)
            }
            JumpKernel::Table { .. } => {
                // The interpolated ccdf is piecewise linear between the
                // quantile knots; integrate by trapezoid on the knots
                // plus the interval ends.
                let mut knots: Vec<f64> = vec![lo];
                if let JumpKernel::Table { quantiles } = self {
                    knots.extend(quantiles.iter().copied().filter(|q| *q > lo && *q < hi));
                }
                knots.push(hi);
                let mut acc = 0.0;
                for w in knots.windows(2) {
                    acc += 0.5 * (self.ccdf(w[0]) + self.ccdf(w[1])) * (w[1] - w[0]);
                }
                acc / (hi - lo)
            }
        }
    }

    /// Distance beyond which `ccdf` falls below `eps` (used to truncate
    /// convolution loops).
    pub fn support_radius(&self, eps: f64) -> f64 {
        match self {
            JumpKernel::Exponential { rate } => -eps.ln() / rate,
            JumpKernel::Deterministic { size } => *size,
            JumpKernel::Uniform { b, .. } => *b,
            JumpKernel::Table { quantiles } => *quantiles.last().unwrap(),
        }
    }

    /// Draw one jump size.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            JumpKernel::Exponential { rate } => {
                let u: f64 = rng.gen();
                -(1.0 - u).ln() / rate
            }
            JumpKernel::Deterministic { size } => *size,
            JumpKernel::Uniform { a, b } => {
                let u: f64 = rng.gen();
                a + u * (b - a)
            }
            JumpKernel::Table { quantiles } => {
                let u: f64 = rng.gen();
                let pos = u * (quantiles.len() - 1) as f64;
                let i = (pos.floor() as usize).min(quantiles.len() - 2);
                let frac = pos - i as f64;
                quantiles[i] + frac * (quantiles[i + 1] - quantiles[i])
            }
        }
    }
}

/// Jump-acceptance probability as a function of the location quantile:
/// continuous, strictly decreasing, `eta(0) = 1`, `eta(1) = 0`.
///
/// Every kind carries an exact antiderivative `H(nu) = integral(eta, 0..nu)`,
/// which the atom-averaged acceptance probability and the speed formula
/// are built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateCurve {
    /// `eta(nu) = (1 - nu)^K`.
    Power {
        #[serde(rename = "K")]
        k: u32,
    },
    /// Piecewise-linear interpolation of strictly decreasing samples.
    Table { nu: Vec<f64>, eta: Vec<f64> },
    /// Binomial (Bernstein) smoothing of a base curve of order `K`:
    /// the acceptance rule "sample K particles, accept with probability
    /// `base(k/K)` where k of them are behind".
    Smoothed {
        base: Box<RateCurve>,
        #[serde(rename = "K")]
        k: u32,
    },
}

impl RateCurve {
    pub fn validate(&self) -> Result<()> {
        match self {
            RateCurve::Power { k } => {
                if *k < 1 {
                    return Err(Error::invalid("power rate curve needs K >= 1"));
                }
            }
            RateCurve::Table { nu, eta } => {
                if nu.len() != eta.len() || nu.len() < 2 {
                    return Err(Error::invalid("rate table needs matching nu/eta arrays of length >= 2"));
                }
                if (nu[0], *nu.last().unwrap()) != (0.0, 1.0) {
                    return Err(Error::invalid("rate table nu grid must start at 0 and end at 1"));
                }
                if (eta[0], *eta.last().unwrap()) != (1.0, 0.0) {
                    return Err(Error::invalid("rate table must have eta(0) = 1 and eta(1) = 0"));
                }
                if nu.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::invalid("rate table nu grid must be strictly increasing"));
                }
                if eta.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(Error::invalid("rate table eta values must be strictly decreasing"));
                }
            }
            RateCurve::Smoothed { base, k } => {
                if *k < 1 {
                    return Err(Error::invalid("smoothed rate curve needs K >= 1"));
                }
                base.validate()?;
            }
        }
        Ok(())
    }

    /// `eta(nu)`. The argument is clamped to `[0, 1]` to absorb round-off
    /// from CDF arithmetic.
    pub fn eval(&self, nu: f64) -> f64 {
        let nu = nu.clamp(0.0, 1.0);
        match self {
            RateCurve::Power { k } => (1.0 - nu).powi(*k as i32),
            RateCurve::Table { nu: xs, eta } => {
                let i = segment_index(xs, nu);
                let t = (nu - xs[i]) / (xs[i + 1] - xs[i]);
                eta[i] + t * (eta[i + 1] - eta[i])
            }
            RateCurve::Smoothed { base, k } => {
                let kk = *k as usize;
                let mut acc = 0.0;
                for (i, b) in bernstein_basis(kk, nu).into_iter().enumerate() {
                    acc += b * base.eval(i as f64 / kk as f64);
                }
                acc
            }
        }
    }

    /// Exact antiderivative `H(nu) = integral(eta, 0..nu)`.
    pub fn antiderivative(&self, nu: f64) -> f64 {
        let nu = nu.clamp(0.0, 1.0);
        match self {
            RateCurve::Power { k } => {
                let kp1 = *k as i32 + 1;
                (1.0 - (1.0 - nu).powi(kp1)) / kp1 as f64
            }
            RateCurve::Table { nu: xs, eta } => {
                let mut acc = 0.0;
                for i in 0..xs.len() - 1 {
                    if nu <= xs[i] {
                        break;
                    }
                    let hi = nu.min(xs[i + 1]);
                    let t = (hi - xs[i]) / (xs[i + 1] - xs[i]);
                    let eta_hi = eta[i] + t * (eta[i + 1] - eta[i]);
                    acc += 0.5 * (eta[i] + eta_hi) * (hi - xs[i]);
                }
                acc
            }
            RateCurve::Smoothed { base, k } => {
                // integral(b_{j,K}, 0..x) = (1/(K+1)) * sum of b_{i,K+1}(x) for i > j,
                // so H(nu) = (1/(K+1)) * sum_i b_{i,K+1}(nu) * prefix(i) where
                // prefix(i) = sum of base(j/K) for j < i.
                let kk = *k as usize;
                let basis = bernstein_basis(kk + 1, nu);
                let mut prefix = 0.0;
                let mut acc = 0.0;
                for (i, b) in basis.into_iter().enumerate().skip(1) {
                    prefix += base.eval((i - 1) as f64 / kk as f64);
                    acc += b * prefix;
                }
                acc / (kk as f64 + 1.0)
            }
        }
    }

    /// Inverse of the strictly decreasing curve: the `nu` with `eta(nu) = r`.
    pub fn inverse(&self, r: f64) -> f64 {
        let r = r.clamp(0.0, 1.0);
        match self {
            RateCurve::Power { k } => 1.0 - r.powf(1.0 / *k as f64),
            RateCurve::Table { nu: xs, eta } => {
                // eta is strictly decreasing; locate the bracketing segment.
                let i = eta.partition_point(|e| *e > r).min(eta.len() - 1).max(1) - 1;
                let t = if eta[i + 1] != eta[i] { (r - eta[i]) / (eta[i + 1] - eta[i]) } else { 0.0 };
                xs[i] + t * (xs[i + 1] - xs[i])
            }
            RateCurve::Smoothed { .. } => {
                let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
                for _ in 0..90 {
                    let mid = 0.5 * (lo + hi);
                    if self.eval(mid) > r {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }
}

fn segment_index(xs: &[f64], x: f64) -> usize {
    debug_assert!(xs.len() >= 2);
    xs.partition_point(|v| *v <= x).clamp(1, xs.len() - 1) - 1
}

/// Bernstein basis `b_{i,n}(x)` for `i = 0..=n`.
fn bernstein_basis(n: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    let y = 1.0 - x;
    // binom(n, i) built incrementally; exact in f64 well past n = 50.
    let mut binom = 1.0;
    for i in 0..=n {
        out[i] = binom * x.powi(i as i32) * y.powi((n - i) as i32);
        binom = binom * (n - i) as f64 / (i + 1) as f64;
    }
    out
}

/// Binomial smoothing of a base curve: the finite-sample acceptance rule
/// with K sampled peers reproduces the base curve only in the limit, and
/// this is the exact curve it induces for a fixed K.
pub fn rate_smooth(base: &RateCurve, k: u32) -> RateCurve {
    RateCurve::Smoothed { base: Box::new(base.clone()), k }
}

/// Full model: urge rate, jump law and rate curve, plus an optional
/// second stream of always-accepted jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub mu: f64,
    pub jump: JumpKernel,
    pub rate: RateCurve,
    #[serde(default)]
    pub mu2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump2: Option<JumpKernel>,
}

impl ModelParams {
    pub fn new(mu: f64, jump: JumpKernel, rate: RateCurve) -> Self {
        ModelParams { mu, jump, rate, mu2: 0.0, jump2: None }
    }

    pub fn with_second_stream(mut self, mu2: f64, jump2: JumpKernel) -> Self {
        self.mu2 = mu2;
        self.jump2 = Some(jump2);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::invalid(format!("mu must be finite and >= 0, got {}", self.mu)));
        }
        if !(self.mu2.is_finite() && self.mu2 >= 0.0) {
            return Err(Error::invalid(format!("mu2 must be finite and >= 0, got {}", self.mu2)));
        }
        if self.mu + self.mu2 <= 0.0 {
            return Err(Error::invalid("mu + mu2 must be positive"));
        }
        if self.mu2 > 0.0 && self.jump2.is_none() {
            return Err(Error::invalid("mu2 > 0 requires a jump2 kernel"));
        }
        self.jump.validate()?;
        self.rate.validate()?;
        if let Some(j2) = &self.jump2 {
            j2.validate()?;
        }
        let v = wave_speed(self);
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(format!("derived speed must be positive, got {v}")));
        }
        Ok(())
    }

    /// Rate of the second stream (0 when absent).
    pub fn second_stream(&self) -> Option<(f64, &JumpKernel)> {
        match (&self.jump2, self.mu2) {
            (Some(j2), mu2) if mu2 > 0.0 => Some((mu2, j2)),
            _ => None,
        }
    }
}

/// Drift speed of the location distribution:
/// `v = mu * m1 * H(1) + mu2 * m2_1`.
pub fn wave_speed(params: &ModelParams) -> f64 {
    let main = params.mu * params.jump.mean() * params.rate.antiderivative(1.0);
    let second = match &params.jump2 {
        Some(j2) => params.mu2 * j2.mean(),
        None => 0.0,
    };
    main + second
}

/// Acceptance probability at location `y` in environment `gamma`:
/// `eta(gamma(y))` at continuity points, and the average of `eta` over
/// the quantile interval `[gamma(y-), gamma(y)]` across an atom.
pub fn eta_bar(y: f64, gamma: &GridCdf, rate: &RateCurve) -> f64 {
    let nu2 = gamma.eval(y);
    let nu1 = gamma.eval_left(y);
    if nu2 - nu1 <= ATOM_EPS {
        rate.eval(nu2)
    } else {
        (rate.antiderivative(nu2) - rate.antiderivative(nu1)) / (nu2 - nu1)
    }
}

/// Average of `eta` over the quantile interval `[0, p]` of a left-edge
/// atom of mass `p`; reduces to `eta(0)` as `p -> 0`.
pub fn eta_bar_left_atom(p: f64, rate: &RateCurve) -> f64 {
    if p <= ATOM_EPS {
        rate.eval(0.0)
    } else {
        rate.antiderivative(p) / p
    }
}

/// Stable `ln(1 + exp(z))`.
fn ln_1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// The explicit wave profile for exponential jumps (unit rate) and the
/// power rate curve `(1 - nu)^K`:
/// `phi(x) = 1 - (1 + exp(K (x - c)))^(-1/K)`, sampled on a grid.
pub fn closed_form_wave(k: u32, c: f64, left: f64, step: f64, len: usize) -> GridCdf {
    let kf = k as f64;
    let values: Vec<f64> = (0..len)
        .map(|i| {
            let x = left + i as f64 * step;
            1.0 - (-ln_1p_exp(kf * (x - c)) / kf).exp()
        })
        .collect();
    GridCdf::new(left, step, values).expect("closed-form wave is monotone by construction")
}

/// Pointwise value of the closed-form profile.
pub fn closed_form_value(k: u32, c: f64, x: f64) -> f64 {
    let kf = k as f64;
    1.0 - (-ln_1p_exp(kf * (x - c)) / kf).exp()
}

/// Median location of the closed-form profile with shift `c`:
/// solves `phi(x) = 1/2`, giving `x = c + ln(2^K - 1)/K`.
pub fn closed_form_median(k: u32, c: f64) -> f64 {
    let kf = k as f64;
    c + ((2.0_f64).powf(kf) - 1.0).ln() / kf
}
