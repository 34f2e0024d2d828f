//! End-to-end verification pipeline behind `rankwave verify`.
//!
//! Ten checks covering the closed-form golden case, the speed identity,
//! the steady-profile residual and its grid-refinement behavior, the
//! conservation law, attraction of the evolution to the wave, the Monte
//! Carlo cross-validation of the frame fixed point, monotonicity and
//! shift equivariance in the frame parameters, Lipschitz bounds, the
//! stationary-empirical-profile experiment (advisory), and the particle
//! engine's first-order statistics. Each check pins its tolerances here;
//! the config contributes the numerics used by the evolution checks and
//! the master seed.

use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::frame::{apply_operator_mc, fixed_point, FrameSpec};
use crate::grid::GridCdf;
use crate::kernels::{
    closed_form_median, closed_form_wave, wave_speed, JumpKernel, ModelParams, RateCurve,
};
use crate::meanfield::{
    conservation_residual, integrate, l1_distance_to_wave, IntegrateOpts, MeanFieldState,
};
use crate::particle::{run, EmpiricalState};
use crate::wave::{solve_wave, wave_residual, SolveOpts, WaveSolveReport};
use crate::Result;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    /// Advisory checks are reported but do not gate the exit status.
    pub advisory: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn line(&self) -> String {
        let verdict = match (self.passed, self.advisory) {
            (true, _) => "PASS",
            (false, true) => "FLAG",
            (false, false) => "FAIL",
        };
        format!("[{verdict}] {:2}. {} - {}", self.id, self.name, self.detail)
    }

    fn from_error(id: usize, name: &'static str, err: &crate::Error) -> Self {
        CheckResult { id, name, passed: false, advisory: false, detail: format!("error: {err}") }
    }
}

/// Exit-status view: every non-advisory check passed.
pub fn all_passed(checks: &[CheckResult]) -> bool {
    checks.iter().all(|c| c.passed || c.advisory)
}

fn k_params(k: u32) -> ModelParams {
    ModelParams::new(1.0, JumpKernel::Exponential { rate: 1.0 }, RateCurve::Power { k })
}

/// The golden wave solves shared by checks 1, 2, 3 and 8: exponential
/// jumps, power rate curves K = 1, 2, 3, frames {5, 10, 20}, h = 1e-2.
pub struct GoldenWave {
    pub k: u32,
    pub report: WaveSolveReport,
}

pub fn golden_waves() -> Result<Vec<GoldenWave>> {
    [1u32, 2, 3]
        .par_iter()
        .map(|&k| {
            let report = solve_wave(&[5.0, 10.0, 20.0], 1e-2, &k_params(k), &SolveOpts::default())?;
            Ok(GoldenWave { k, report })
        })
        .collect()
}

/// Check 1: the solver profile matches the closed form after median
/// alignment, within 2e-2 in sup norm.
pub fn c1_closed_form_golden(golden: &[GoldenWave]) -> CheckResult {
    let mut worst = 0.0f64;
    let mut detail = String::new();
    let mut passed = true;
    for gw in golden {
        let phi = &gw.report.phi;
        let aligned = closed_form_wave(
            gw.k,
            phi.median() - closed_form_median(gw.k, 0.0),
            phi.left(),
            phi.step(),
            phi.len(),
        );
        let d = phi.sup_distance(&aligned);
        worst = worst.max(d);
        passed &= d <= 2e-2 && gw.report.proper;
        detail.push_str(&format!("K={}: sup {:.2e}; ", gw.k, d));
    }
    CheckResult {
        id: 1,
        name: "closed-form golden profile",
        passed,
        advisory: false,
        detail: format!("{detail}tolerance 2e-2"),
    }
}

/// Check 2: wave_speed returns exactly 1/(K+1) and the tuned frame speed
/// is within 1e-2 of it.
pub fn c2_speed_identity(golden: &[GoldenWave]) -> CheckResult {
    let mut passed = true;
    let mut detail = String::new();
    for gw in golden {
        let v = wave_speed(&k_params(gw.k));
        let exact = 1.0 / (gw.k as f64 + 1.0);
        let gap = (gw.report.w_final - exact).abs();
        passed &= v == exact && gap <= 1e-2;
        detail.push_str(&format!("K={}: v={} exact={} |w_B-v|={:.2e}; ", gw.k, v, exact, gap));
    }
    CheckResult { id: 2, name: "speed identity", passed, advisory: false, detail }
}

/// Check 3: the flux-balance residual of the closed form is below 1e-3
/// at h = 1e-3 and drops by >= 3x when h halves; a solver profile with
/// no closed form stays within 3x of the closed-form baseline at equal h.
pub fn c3_wave_equation_residual() -> CheckResult {
    let params = k_params(1);
    let run_inner = || -> Result<(f64, f64, f64, f64)> {
        let phi_a = closed_form_wave(1, 0.0, -25.0, 1e-3, 50_001);
        let r_a = wave_residual(&phi_a, &params, None)?;
        let phi_b = closed_form_wave(1, 0.0, -25.0, 5e-4, 100_001);
        let r_b = wave_residual(&phi_b, &params, None)?;

        // A model with no closed form: uniform jumps on [0, 2] and the
        // strictly decreasing curve 1 - nu^2 (tabulated). The schedule
        // runs to B = 18, the widest frame the speed tuning resolves for
        // this kernel in f64, and a tiny stop tolerance keeps every frame
        // in play.
        let n_tab = 2001;
        let nu: Vec<f64> = (0..n_tab).map(|i| i as f64 / (n_tab - 1) as f64).collect();
        let eta: Vec<f64> = nu.iter().map(|x| 1.0 - x * x).collect();
        let other = ModelParams::new(1.0, JumpKernel::Uniform { a: 0.0, b: 2.0 }, RateCurve::Table { nu, eta });
        let solve_opts = SolveOpts { tol: 1e-9, ..SolveOpts::default() };
        let solved = solve_wave(&[5.0, 10.0, 14.0, 18.0], 1e-2, &other, &solve_opts)?;
        let r_other = wave_residual(&solved.phi, &other, None)?;

        let baseline = wave_residual(&closed_form_wave(1, 0.0, -25.0, 1e-2, 5001), &params, None)?;
        Ok((r_a, r_b, r_other, baseline))
    };
    match run_inner() {
        Ok((r_a, r_b, r_other, baseline)) => {
            let ratio = r_a / r_b;
            let passed = r_a <= 1e-3 && ratio >= 3.0 && r_other <= 3.0 * baseline;
            CheckResult {
                id: 3,
                name: "steady-profile residual",
                passed,
                advisory: false,
                detail: format!(
                    "closed form: {r_a:.2e} at h=1e-3 (<=1e-3), refinement ratio {ratio:.2} (>=3); \
                     solver profile {r_other:.2e} vs 3x baseline {:.2e}",
                    3.0 * baseline
                ),
            }
        }
        Err(e) => CheckResult::from_error(3, "steady-profile residual", &e),
    }
}

/// Check 4: conservation law under the evolution from a uniform initial
/// CDF: `|integral(f0 - ft) - v t| <= 1e-3` at every unit snapshot up to
/// T = 5, with the config's h and dt.
pub fn c4_conservation(cfg: &RunConfig) -> CheckResult {
    let params = k_params(1);
    let h = cfg.numerics.h;
    let dt = cfg.numerics.dt();
    let run_inner = || -> Result<(f64, bool)> {
        let ramp = GridCdf::uniform(0.0, 1.0, h)?;
        let f0 = embed(&ramp, -2.0, 19.0);
        let opts = IntegrateOpts { dt, tail_tol: cfg.numerics.tail_tol, window: crate::meanfield::WindowPolicy::Fixed };
        let mut state = MeanFieldState::new(f0.clone());
        let mut worst = 0.0f64;
        for k in 1..=5 {
            state = integrate(state, 1.0, &params, &opts)?;
            let r = conservation_residual(&f0, &state.f, k as f64, &params);
            worst = worst.max(r);
        }
        Ok((worst, worst <= 1e-3))
    };
    match run_inner() {
        Ok((worst, passed)) => CheckResult {
            id: 4,
            name: "conservation law",
            passed,
            advisory: false,
            detail: format!("max residual {worst:.2e} over t = 1..5 at h={h}, dt={dt} (tolerance 1e-3)"),
        },
        Err(e) => CheckResult::from_error(4, "conservation law", &e),
    }
}

/// Check 5: attraction. From a mean-matched uniform initial CDF the L1
/// distance to the wave is nonincreasing (1e-4 slack) and reaches 5e-2
/// by T = 20.
pub fn c5_attraction() -> CheckResult {
    let params = k_params(1);
    let run_inner = || -> Result<(Vec<f64>, bool)> {
        // K=1 closed form with c=0 has median and mean at 0; the uniform
        // CDF on [-1, 1] matches the mean.
        let h = 2e-2;
        let phi = closed_form_wave(1, 0.0, -18.0, h, 1851);
        let ramp = GridCdf::uniform(-1.0, 1.0, h)?;
        let f0 = embed(&ramp, -15.0, 17.0);
        let opts = IntegrateOpts { dt: 1e-2, tail_tol: 1e-6, window: crate::meanfield::WindowPolicy::Moving { interval: 1.0 } };
        let mut state = MeanFieldState::new(f0);
        let mut series = vec![l1_distance_to_wave(&state, &phi, &params)?];
        for _ in 0..10 {
            state = integrate(state, 2.0, &params, &opts)?;
            series.push(l1_distance_to_wave(&state, &phi, &params)?);
        }
        let monotone = series.windows(2).all(|w| w[1] <= w[0] + 1e-4);
        let passed = monotone && *series.last().unwrap() <= 5e-2;
        Ok((series, passed))
    };
    match run_inner() {
        Ok((series, passed)) => CheckResult {
            id: 5,
            name: "attraction to the wave",
            passed,
            advisory: false,
            detail: format!(
                "L1 series {} (nonincreasing within 1e-4, final <= 5e-2)",
                series.iter().map(|d| format!("{d:.3}")).collect::<Vec<_>>().join(" -> ")
            ),
        },
        Err(e) => CheckResult::from_error(5, "attraction to the wave", &e),
    }
}

/// Check 6: the Monte Carlo operator applied to the deterministic fixed
/// point reproduces it within 2e-2 in sup norm, for 3 seeds at 1e7
/// events.
pub fn c6_fixed_point_mc(seed: u64) -> CheckResult {
    let params = k_params(1);
    let run_inner = || -> Result<(Vec<f64>, bool)> {
        let spec = FrameSpec::new(0.5, 6.0, 6.0, 1e-2)?;
        let gamma = fixed_point(&spec, &params)?;
        let distances: Vec<f64> = (0..3u64)
            .into_par_iter()
            .map(|i| {
                let occ = apply_operator_mc(&gamma, &spec, &params, 10_000_000, seed.wrapping_add(i))?;
                Ok(gamma.sup_distance(&occ))
            })
            .collect::<Result<Vec<f64>>>()?;
        let passed = distances.iter().all(|d| *d <= 2e-2);
        Ok((distances, passed))
    };
    match run_inner() {
        Ok((d, passed)) => CheckResult {
            id: 6,
            name: "fixed point vs Monte Carlo operator",
            passed,
            advisory: false,
            detail: format!(
                "sup distances {} over 3 seeds x 1e7 events (tolerance 2e-2)",
                d.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ")
            ),
        },
        Err(e) => CheckResult::from_error(6, "fixed point vs Monte Carlo operator", &e),
    }
}

/// Profiles solved on the (w, B) grid shared by checks 7 and 8.
pub struct FrameFamily {
    pub entries: Vec<(FrameSpec, GridCdf)>,
}

const FAMILY_W: [f64; 3] = [0.35, 0.5, 0.65];
const FAMILY_B: [f64; 3] = [3.0, 4.5, 6.0];

pub fn frame_family() -> Result<FrameFamily> {
    let params = k_params(1);
    let mut specs = Vec::new();
    for &w in &FAMILY_W {
        for &b in &FAMILY_B {
            specs.push(FrameSpec::new(w, b, b, 1e-2)?);
        }
    }
    // Asymmetric frames for the one-sided monotonicity checks.
    for &side in &FAMILY_B {
        specs.push(FrameSpec::new(0.5, side, 4.5, 1e-2)?);
        specs.push(FrameSpec::new(0.5, 4.5, side, 1e-2)?);
    }
    let entries = specs
        .into_par_iter()
        .map(|spec| Ok((spec, fixed_point(&spec, &params)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameFamily { entries })
}

impl FrameFamily {
    fn get(&self, w: f64, bl: f64, br: f64) -> &GridCdf {
        &self
            .entries
            .iter()
            .find(|(s, _)| (s.w - w).abs() < 1e-12 && (s.b_left - bl).abs() < 1e-12 && (s.b_right - br).abs() < 1e-12)
            .expect("frame family entry")
            .1
    }
}

fn dominates(upper: &GridCdf, lower: &GridCdf, tol: f64) -> bool {
    // Pointwise CDF dominance over the union of both node sets.
    let at_nodes_of = |grid: &GridCdf| {
        (0..grid.len()).all(|i| {
            let x = grid.node(i);
            upper.eval(x) >= lower.eval(x) - tol
        })
    };
    at_nodes_of(upper) && at_nodes_of(lower)
}

/// Check 7: parameter monotonicity (in w, B_L, B_R) and exact shift
/// equivariance of the frame profiles, at grid tolerance 1e-3.
pub fn c7_monotonicity_shift(family: &FrameFamily) -> CheckResult {
    let params = k_params(1);
    let tol = 1e-3;
    let mut failures: Vec<String> = Vec::new();

    // Larger w <=> pointwise larger CDF, for every frame size.
    for &b in &FAMILY_B {
        for ws in FAMILY_W.windows(2) {
            let lower = family.get(ws[0], b, b);
            let upper = family.get(ws[1], b, b);
            if !dominates(upper, lower, tol) {
                failures.push(format!("w-monotonicity fails at B={b} between w={} and {}", ws[0], ws[1]));
            }
        }
    }
    // Larger B_L <=> pointwise larger CDF (mass shifts left).
    for pair in FAMILY_B.windows(2) {
        let lower = family.get(0.5, pair[0], 4.5);
        let upper = family.get(0.5, pair[1], 4.5);
        if !dominates(upper, lower, tol) {
            failures.push(format!("B_L-monotonicity fails between {} and {}", pair[0], pair[1]));
        }
        // Larger B_R <=> pointwise smaller CDF (mass shifts right).
        let upper_r = family.get(0.5, 4.5, pair[0]);
        let lower_r = family.get(0.5, 4.5, pair[1]);
        if !dominates(upper_r, lower_r, tol) {
            failures.push(format!("B_R-monotonicity fails between {} and {}", pair[0], pair[1]));
        }
    }

    // Shift equivariance at c = +-0.5 on each grid point.
    for &c in &[0.5, -0.5] {
        for &w in &FAMILY_W {
            let base = family.get(w, 4.5, 4.5);
            match FrameSpec::new(w, 4.5 - c, 4.5 + c, 1e-2).and_then(|s| fixed_point(&s, &params)) {
                Ok(shifted) => {
                    let d = base.translate(c).sup_distance(&shifted);
                    if d > tol {
                        failures.push(format!("shift equivariance off by {d:.2e} at w={w}, c={c}"));
                    }
                }
                Err(e) => failures.push(format!("shift solve failed at w={w}, c={c}: {e}")),
            }
        }
    }

    CheckResult {
        id: 7,
        name: "monotonicity and shift equivariance",
        passed: failures.is_empty(),
        advisory: false,
        detail: if failures.is_empty() {
            format!(
                "dominance in w, B_L, B_R and shifts c = +-0.5 hold within {tol} on a {}x{} grid",
                FAMILY_W.len(),
                FAMILY_B.len()
            )
        } else {
            failures.join("; ")
        },
    }
}

/// Check 8: every computed frame profile is 1/w-Lipschitz and every wave
/// profile 1/v-Lipschitz, with per-cell excess at most 1e-3 * h.
pub fn c8_lipschitz(golden: &[GoldenWave], family: &FrameFamily) -> CheckResult {
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut passed = true;
    for (spec, gamma) in &family.entries {
        let excess = gamma.lipschitz_excess(1.0 / spec.w);
        worst = worst.max(excess / gamma.step());
        passed &= excess <= 1e-3 * gamma.step();
    }
    for gw in golden {
        let v = wave_speed(&k_params(gw.k));
        let excess = gw.report.phi.lipschitz_excess(1.0 / v);
        worst = worst.max(excess / gw.report.phi.step());
        passed &= excess <= 1e-3 * gw.report.phi.step();
    }
    CheckResult {
        id: 8,
        name: "Lipschitz bounds",
        passed,
        advisory: false,
        detail: format!("worst per-cell excess {worst:.2e} * h (allowed 1e-3 * h)"),
    }
}

/// Check 9 (advisory): stationary recentered empirical profiles of the
/// n = 2000 particle system concentrate at the wave profile: sup
/// distance <= 5e-2 for at least 8 of 10 seeds.
pub fn c9_conjecture_experiment(seed: u64) -> CheckResult {
    let params = k_params(1);
    let n = 2000usize;
    let v = 0.5;
    let burn_in = 10.0 * n as f64 / v;
    let spacing = n as f64 / v / 10.0;
    let phi = closed_form_wave(1, 0.0, -8.0, 1e-2, 1601);

    let run_inner = || -> Result<Vec<f64>> {
        (0..10u64)
            .into_par_iter()
            .map(|i| {
                let schedule: Vec<f64> = (0..10).map(|k| burn_in + k as f64 * spacing).collect();
                let horizon = *schedule.last().unwrap() + 1.0;
                let log = run(&params, vec![0.0; n], &params.rate.clone(), horizon, seed.wrapping_add(i), &schedule)?;
                // Average the recentered snapshot CDFs on phi's grid.
                let mut avg = vec![0.0f64; phi.len()];
                for snap in &log.snapshots {
                    let rec = snap.cdf.recenter_median();
                    for (j, a) in avg.iter_mut().enumerate() {
                        *a += rec.eval(phi.node(j));
                    }
                }
                let m = log.snapshots.len() as f64;
                let sup = avg
                    .iter()
                    .zip(phi.values())
                    .map(|(a, p)| (a / m - p).abs())
                    .fold(0.0f64, f64::max);
                Ok(sup)
            })
            .collect()
    };
    match run_inner() {
        Ok(sups) => {
            let good = sups.iter().filter(|d| **d <= 5e-2).count();
            CheckResult {
                id: 9,
                name: "stationary empirical profile (conjecture experiment)",
                passed: good >= 8,
                advisory: true,
                detail: format!(
                    "{good}/10 seeds within 5e-2 (sup distances: {})",
                    sups.iter().map(|d| format!("{d:.3}")).collect::<Vec<_>>().join(", ")
                ),
            }
        }
        Err(e) => CheckResult {
            id: 9,
            name: "stationary empirical profile (conjecture experiment)",
            passed: false,
            advisory: true,
            detail: format!("error: {e}"),
        },
    }
}

/// Check 10: the particle engine's mean speed over n = 1000, T = 500 is
/// within 3 standard errors of v, and the co-located tie-break passes a
/// chi-squared uniformity test at p > 0.01.
pub fn c10_particle_statistics(seed: u64) -> CheckResult {
    let params = k_params(1);
    let run_inner = || -> Result<(f64, f64)> {
        let log = run(&params, vec![0.0; 1000], &params.rate.clone(), 500.0, seed, &[])?;
        let z = (log.mean_speed() - 0.5).abs() / log.speed_stderr();

        // Tie-break micro-case: two co-located particles, 1e5 draws,
        // chi-squared with 1 dof; 6.635 is the p = 0.01 cutoff.
        let state = EmpiricalState::new(vec![0.0, 0.0]);
        let mut rng = crate::rng::stream(seed, "tie-break-check");
        let draws = 100_000u64;
        let mut low = 0u64;
        for _ in 0..draws {
            if state.quantile_of(0, &mut rng) == 0.5 {
                low += 1;
            }
        }
        let expect = draws as f64 / 2.0;
        let chi2 = (low as f64 - expect).powi(2) / expect + ((draws - low) as f64 - expect).powi(2) / expect;
        Ok((z, chi2))
    };
    match run_inner() {
        Ok((z, chi2)) => CheckResult {
            id: 10,
            name: "particle engine statistics",
            passed: z <= 3.0 && chi2 < 6.635,
            advisory: false,
            detail: format!("speed z-score {z:.2} (<= 3); tie-break chi2 {chi2:.2} (< 6.635)"),
        },
        Err(e) => CheckResult::from_error(10, "particle engine statistics", &e),
    }
}

/// Embed a CDF into a wider window (0-padding left, 1-padding right).
pub fn embed(f: &GridCdf, lo: f64, hi: f64) -> GridCdf {
    let h = f.step();
    let pre = ((f.left() - lo) / h).round().max(0.0) as usize;
    let post = ((hi - f.right()) / h).round().max(0.0) as usize;
    let mut values = vec![0.0; pre];
    values.extend(f.values());
    values.extend(std::iter::repeat(1.0).take(post));
    GridCdf::new(f.left() - pre as f64 * h, h, values).expect("embedding preserves validity")
}

/// Run the whole suite in order. Advisory checks never gate
/// [`all_passed`].
pub fn run_all(cfg: &RunConfig) -> Vec<CheckResult> {
    let mut out = Vec::with_capacity(10);
    let golden = golden_waves();
    let family = frame_family();
    match &golden {
        Ok(g) => {
            out.push(c1_closed_form_golden(g));
            out.push(c2_speed_identity(g));
        }
        Err(e) => {
            out.push(CheckResult::from_error(1, "closed-form golden profile", e));
            out.push(CheckResult::from_error(2, "speed identity", e));
        }
    }
    out.push(c3_wave_equation_residual());
    out.push(c4_conservation(cfg));
    out.push(c5_attraction());
    out.push(c6_fixed_point_mc(cfg.seed));
    match &family {
        Ok(f) => {
            out.push(c7_monotonicity_shift(f));
            match &golden {
                Ok(g) => out.push(c8_lipschitz(g, f)),
                Err(e) => out.push(CheckResult::from_error(8, "Lipschitz bounds", e)),
            }
        }
        Err(e) => {
            out.push(CheckResult::from_error(7, "monotonicity and shift equivariance", e));
            out.push(CheckResult::from_error(8, "Lipschitz bounds", e));
        }
    }
    out.push(c9_conjecture_experiment(cfg.seed));
    out.push(c10_particle_statistics(cfg.seed));
    out
}
