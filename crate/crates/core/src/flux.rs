//! Discrete Stieltjes convolution of a grid CDF against a jump kernel.
//!
//! Every integral operator in the crate reduces to the same flux profile
//!
//! ```text
//! zeta(x_i) = atom * etabar(left) * Jbar(x_i - left)
//!           + sum over cells j with mid_j < x_i of
//!             mass_j * eta(cell-mean CDF value) * Jbar(x_i - mid_j)
//! ```
//!
//! i.e. the probability flux across `x_i` per urge. Cell masses sit at
//! cell midpoints and `eta` is evaluated at the cell-mean CDF value,
//! which keeps the scheme second-order for Lipschitz profiles and exact
//! for the atom term. With `rate = None` every jump is accepted (the
//! unconditional second stream).

use crate::grid::GridCdf;
use crate::kernels::{eta_bar_left_atom, JumpKernel, RateCurve};

/// Complementary-CDF lookup tables on the lags a uniform grid produces.
pub struct KernelLags {
    /// `Jbar(i * h)` — distances from the left node to grid nodes.
    pub node: Vec<f64>,
    /// `Jbar((d + 0.5) * h)` — distances from cell midpoints to nodes.
    pub mid: Vec<f64>,
    /// Cells further back than this many lags contribute nothing.
    pub cutoff: usize,
    /// `Jbar(d + h) = decay * Jbar(d)` for exponential kernels, enabling
    /// O(1)-per-node running convolutions.
    pub decay: Option<f64>,
}

impl KernelLags {
    pub fn new(jump: &JumpKernel, step: f64, len: usize) -> Self {
        let node = (0..len).map(|i| jump.ccdf(i as f64 * step)).collect();
        let mid: Vec<f64> = (0..len.saturating_sub(1))
            .map(|d| jump.ccdf_cell_average(d as f64 * step, (d + 1) as f64 * step))
            .collect();
        let radius = jump.support_radius(1e-16);
        let cutoff = ((radius / step).ceil() as usize + 1).min(len);
        // Cell averages of an exponential tail still scale geometrically
        // lag to lag, so the running-convolution path stays exact.
        let decay = match jump {
            JumpKernel::Exponential { rate } => Some((-rate * step).exp()),
            _ => None,
        };
        KernelLags { node, mid, cutoff, decay }
    }
}

/// Per-urge flux profile of `f` at every grid node.
pub fn flux_profile(f: &GridCdf, rate: Option<&RateCurve>, jump: &JumpKernel) -> Vec<f64> {
    let lags = KernelLags::new(jump, f.step(), f.len());
    flux_profile_with(f, rate, &lags)
}

/// Same as [`flux_profile`] with precomputed kernel tables.
pub fn flux_profile_with(f: &GridCdf, rate: Option<&RateCurve>, lags: &KernelLags) -> Vec<f64> {
    let n = f.len();
    let values = f.values();

    // Acceptance-weighted cell masses.
    let mut wm = Vec::with_capacity(n - 1);
    for j in 0..n - 1 {
        let mass = values[j + 1] - values[j];
        let eta = match rate {
            Some(r) => r.eval(0.5 * (values[j] + values[j + 1])),
            None => 1.0,
        };
        wm.push(mass * eta);
    }

    let atom = f.atom_mass();
    let atom_eta = match rate {
        Some(r) => eta_bar_left_atom(atom, r),
        None => 1.0,
    };
    let atom_w = atom * atom_eta;

    let mut out = vec![0.0; n];
    if let Some(decay) = lags.decay {
        // Running geometric convolution: out[i+1] = decay*out[i] + new cell.
        let mut acc = atom_w;
        out[0] = acc;
        for i in 1..n {
            acc = decay * acc + wm[i - 1] * lags.mid[0];
            out[i] = acc;
        }
    } else {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = atom_w * lags.node[i];
            let j_lo = i.saturating_sub(lags.cutoff);
            for j in j_lo..i {
                acc += wm[j] * lags.mid[i - 1 - j];
            }
            *o = acc;
        }
    }
    out
}

/// Flux at one arbitrary point `x` (not necessarily a node): integrates
/// the interpolant's cell densities against the kernel tail exactly,
/// including the partial cell containing `x`.
pub fn flux_at(f: &GridCdf, x: f64, rate: Option<&RateCurve>, jump: &JumpKernel) -> f64 {
    let values = f.values();
    let h = f.step();
    let atom_eta = match rate {
        Some(r) => eta_bar_left_atom(f.atom_mass(), r),
        None => 1.0,
    };
    let mut acc = f.atom_mass() * atom_eta * jump.ccdf(x - f.left());
    for j in 0..f.len() - 1 {
        let lo_node = f.node(j);
        if lo_node >= x {
            break;
        }
        let y_hi = f.node(j + 1).min(x);
        let eta = match rate {
            Some(r) => r.eval(0.5 * (values[j] + values[j + 1])),
            None => 1.0,
        };
        let avg = jump.ccdf_cell_average(x - y_hi, x - lo_node);
        acc += (values[j + 1] - values[j]) * ((y_hi - lo_node) / h) * eta * avg;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{closed_form_value, JumpKernel, RateCurve};
    use approx::assert_relative_eq;

    #[test]
    fn dirac_environment_reduces_to_kernel_tail() {
        // All mass in the left atom: zeta(x) = H(1) * Jbar(x - left).
        let g = GridCdf::dirac_at_left(0.0, 4.0, 0.01).unwrap();
        let rate = RateCurve::Power { k: 1 };
        let jump = JumpKernel::Exponential { rate: 1.0 };
        let zeta = flux_profile(&g, Some(&rate), &jump);
        for (i, z) in zeta.iter().enumerate().step_by(50) {
            let x = g.node(i);
            assert_relative_eq!(*z, 0.5 * (-x).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn flat_kernel_integrates_eta_up_to_the_quantile() {
        // Jbar == 1 on the window (deterministic jump larger than the
        // window): zeta(x) = integral(eta, 0..gamma(x)) = g - g^2/2 for
        // eta = 1 - nu, up to the midpoint-rule error O(h^2).
        let g = GridCdf::uniform(-1.0, 1.0, 0.01).unwrap();
        let rate = RateCurve::Power { k: 1 };
        let jump = JumpKernel::Deterministic { size: 10.0 };
        let zeta = flux_profile(&g, Some(&rate), &jump);
        for (i, z) in zeta.iter().enumerate().step_by(10) {
            let gamma = g.values()[i];
            assert_relative_eq!(*z, gamma - 0.5 * gamma * gamma, epsilon = 5e-5);
        }
    }

    #[test]
    fn profile_matches_pointwise_evaluation() {
        let g = GridCdf::from_fn(-6.0, 0.05, 241, |x| closed_form_value(1, 0.0, x)).unwrap();
        let rate = RateCurve::Power { k: 2 };
        let jump = JumpKernel::Uniform { a: 0.0, b: 2.0 };
        let prof = flux_profile(&g, Some(&rate), &jump);
        for i in (0..g.len()).step_by(37) {
            assert_relative_eq!(prof[i], flux_at(&g, g.node(i), Some(&rate), &jump), epsilon = 1e-12);
        }
    }

    #[test]
    fn l1_norm_of_flux_is_the_speed() {
        // h-weighted sum of the flux profile approximates
        // m1 * integral(eta) for any proper profile.
        let g = GridCdf::from_fn(-14.0, 0.01, 2801, |x| closed_form_value(2, 0.0, x)).unwrap();
        let rate = RateCurve::Power { k: 2 };
        let jump = JumpKernel::Exponential { rate: 1.0 };
        let zeta = flux_profile(&g, Some(&rate), &jump);
        let total: f64 = zeta.iter().sum::<f64>() * g.step();
        assert_relative_eq!(total, 1.0 / 3.0, epsilon = 1e-4);
    }
}
