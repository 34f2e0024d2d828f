//! Event-driven simulation of the n-particle system.
//!
//! Each particle receives urges as an independent Poisson process of rate
//! `mu`; an urge becomes a rightward jump with probability `eta_n(nu)`
//! where `nu = rank/n` is the particle's location quantile (ties between
//! co-located particles broken uniformly at random), with jump sizes
//! drawn from the jump kernel. The optional second stream (rate `mu2`)
//! jumps unconditionally. Events are generated by a single aggregate
//! exponential clock of rate `n * (mu + mu2)`, which is statistically
//! identical to per-particle clocks and selects events in O(1).

use rand::Rng;

use crate::grid::GridCdf;
use crate::kernels::{ModelParams, RateCurve};
use crate::ostree::OrderStatTree;
use crate::rng;
use crate::{Error, Result};

/// Sorted snapshot of particle positions; the empirical CDF
/// `F(x) = #(positions <= x) / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    positions: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut positions: Vec<f64>) -> Self {
        assert!(!positions.is_empty(), "empirical CDF needs at least one particle");
        positions.sort_by(|a, b| a.partial_cmp(b).unwrap());
        EmpiricalCdf { positions }
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.positions.partition_point(|p| *p <= x) as f64 / self.positions.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.positions.iter().sum::<f64>() / self.positions.len() as f64
    }

    /// Lower median: the position of 1-based rank `ceil(n/2)`.
    pub fn median(&self) -> f64 {
        self.positions[(self.positions.len() - 1) / 2]
    }

    /// Positions shifted so the lower median sits at 0.
    pub fn recenter_median(&self) -> Self {
        let m = self.median();
        EmpiricalCdf { positions: self.positions.iter().map(|p| p - m).collect() }
    }
}

/// Sup distance between an empirical CDF and a grid CDF, evaluated at
/// every particle position (both one-sided limits of the staircase) and
/// at every grid node.
pub fn empirical_sup_distance(a: &EmpiricalCdf, b: &GridCdf) -> f64 {
    let n = a.n() as f64;
    let mut best = 0.0f64;
    for (i, p) in a.positions().iter().enumerate() {
        let f = b.eval(*p);
        best = best.max(((i + 1) as f64 / n - f).abs());
        best = best.max((i as f64 / n - f).abs());
    }
    for i in 0..b.len() {
        let x = b.node(i);
        best = best.max((a.eval(x) - b.values()[i]).abs());
    }
    best
}

/// The n-particle state: positions by particle id plus an order-statistic
/// multiset for rank queries; `n` is fixed for the lifetime of the state.
#[derive(Debug, Clone)]
pub struct EmpiricalState {
    positions: Vec<f64>,
    tree: OrderStatTree,
    t: f64,
}

/// What a single event did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    /// Type-1 urge; `jump` is `None` when the urge was rejected.
    Urge { jump: Option<f64> },
    /// Type-2 unconditional jump.
    Stream2 { jump: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    pub t: f64,
    pub particle: usize,
    pub kind: EventKind,
}

impl EmpiricalState {
    pub fn new(initial: Vec<f64>) -> Self {
        assert!(!initial.is_empty(), "need at least one particle");
        let tree = initial.iter().copied().collect();
        EmpiricalState { positions: initial, tree, t: 0.0 }
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn mean_position(&self) -> f64 {
        self.positions.iter().sum::<f64>() / self.positions.len() as f64
    }

    pub fn snapshot(&self) -> EmpiricalCdf {
        EmpiricalCdf { positions: self.tree.to_sorted() }
    }

    /// Location quantile `rank/n` of one particle, with the rank drawn
    /// uniformly over the block of co-located particles.
    pub fn quantile_of<R: Rng + ?Sized>(&self, particle: usize, rng: &mut R) -> f64 {
        let pos = self.positions[particle];
        let below = self.tree.rank_lt(pos);
        let ties = self.tree.count_eq(pos);
        debug_assert!(ties >= 1);
        let rank = below + 1 + if ties > 1 { rng.gen_range(0..ties) } else { 0 };
        rank as f64 / self.positions.len() as f64
    }

    fn displace(&mut self, particle: usize, jump: f64) {
        let old = self.positions[particle];
        let new = old + jump;
        self.tree.remove(old);
        self.tree.insert(new);
        self.positions[particle] = new;
    }
}

/// Advance the state by one event and report what happened.
///
/// Draw order is fixed: inter-event time, particle id, stream choice
/// (only when both streams are active), quantile tie-break (only on
/// ties), acceptance, jump size.
pub fn step<R: Rng + ?Sized>(
    state: &mut EmpiricalState,
    params: &ModelParams,
    eta_n: &RateCurve,
    rng: &mut R,
) -> StepRecord {
    let dt = exp_sample(rng, state.n() as f64 * (params.mu + params.mu2));
    apply_event(state, state.t + dt, params, eta_n, rng)
}

fn exp_sample<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.gen();
    -(1.0 - u).ln() / rate
}

fn apply_event<R: Rng + ?Sized>(
    state: &mut EmpiricalState,
    t_event: f64,
    params: &ModelParams,
    eta_n: &RateCurve,
    rng: &mut R,
) -> StepRecord {
    state.t = t_event;
    let particle = rng.gen_range(0..state.n());
    let type1 = match params.second_stream() {
        None => true,
        Some((mu2, _)) => rng.gen::<f64>() < params.mu / (params.mu + mu2),
    };
    let kind = if type1 {
        let nu = state.quantile_of(particle, rng);
        let accept: f64 = rng.gen();
        if accept < eta_n.eval(nu) {
            let jump = params.jump.sample(rng);
            state.displace(particle, jump);
            EventKind::Urge { jump: Some(jump) }
        } else {
            EventKind::Urge { jump: None }
        }
    } else {
        let (_, j2) = params.second_stream().expect("type-2 event without second stream");
        let jump = j2.sample(rng);
        state.displace(particle, jump);
        EventKind::Stream2 { jump }
    };
    StepRecord { t: t_event, particle, kind }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub cdf: EmpiricalCdf,
}

/// Counters and snapshots of one simulation run.
#[derive(Debug, Clone)]
pub struct EventLog {
    pub n: usize,
    /// Type-1 urges (accepted or not).
    pub urges: u64,
    /// Accepted type-1 jumps.
    pub accepted: u64,
    /// Type-2 jumps.
    pub stream2: u64,
    pub elapsed: f64,
    pub initial_mean: f64,
    pub final_mean: f64,
    /// Sum and sum of squares of realized jump sizes (both streams).
    pub sum_jump: f64,
    pub sum_jump_sq: f64,
    pub snapshots: Vec<Snapshot>,
}

impl EventLog {
    /// Total Poisson events of both streams.
    pub fn events(&self) -> u64 {
        self.urges + self.stream2
    }

    /// Long-run speed estimate of the empirical mean.
    pub fn mean_speed(&self) -> f64 {
        (self.final_mean - self.initial_mean) / self.elapsed
    }

    /// Standard error of `mean_speed` from the realized jump sizes
    /// (compound-Poisson approximation).
    pub fn speed_stderr(&self) -> f64 {
        self.sum_jump_sq.sqrt() / (self.n as f64 * self.elapsed)
    }
}

/// Run the simulation to `horizon`, recording a snapshot at each time in
/// `schedule` (times are clamped to the horizon; the state between events
/// is piecewise constant, so a snapshot at `tau` is the state after the
/// last event at or before `tau`). Deterministic given `seed`.
pub fn run(
    params: &ModelParams,
    initial: Vec<f64>,
    eta_n: &RateCurve,
    horizon: f64,
    seed: u64,
    schedule: &[f64],
) -> Result<EventLog> {
    if horizon <= 0.0 {
        return Err(Error::invalid("horizon must be positive"));
    }
    params.validate()?;
    let mut schedule: Vec<f64> = schedule.iter().copied().map(|t| t.min(horizon)).collect();
    schedule.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut state = EmpiricalState::new(initial);
    let mut rng = rng::stream(seed, "particle-run");
    let mut log = EventLog {
        n: state.n(),
        urges: 0,
        accepted: 0,
        stream2: 0,
        elapsed: horizon,
        initial_mean: state.mean_position(),
        final_mean: 0.0,
        sum_jump: 0.0,
        sum_jump_sq: 0.0,
        snapshots: Vec::with_capacity(schedule.len()),
    };

    let total_rate = state.n() as f64 * (params.mu + params.mu2);
    let mut next_snap = 0usize;
    loop {
        let dt = exp_sample(&mut rng, total_rate);
        let t_next = state.t + dt;
        while next_snap < schedule.len() && schedule[next_snap] <= t_next.min(horizon) {
            log.snapshots.push(Snapshot { t: schedule[next_snap], cdf: state.snapshot() });
            next_snap += 1;
        }
        if t_next > horizon {
            state.t = horizon;
            break;
        }
        let rec = apply_event(&mut state, t_next, params, eta_n, &mut rng);
        match rec.kind {
            EventKind::Urge { jump } => {
                log.urges += 1;
                if let Some(y) = jump {
                    log.accepted += 1;
                    log.sum_jump += y;
                    log.sum_jump_sq += y * y;
                }
            }
            EventKind::Stream2 { jump } => {
                log.stream2 += 1;
                log.sum_jump += jump;
                log.sum_jump_sq += jump * jump;
            }
        }
    }
    log.final_mean = state.mean_position();
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::JumpKernel;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn k1_params() -> ModelParams {
        ModelParams::new(1.0, JumpKernel::Exponential { rate: 1.0 }, RateCurve::Power { k: 1 })
    }

    /// Exact expected speed of the empirical mean for n particles:
    /// the chosen particle's rank is uniform on {1..n} (uniform particle
    /// choice plus uniform tie-breaks), so the per-urge acceptance
    /// probability averages to (1/n) * sum eta(l/n), and the mean moves at
    /// mu * m1 * that average (plus mu2 * m2_1).
    fn exact_finite_n_speed(params: &ModelParams, eta_n: &RateCurve, n: usize) -> f64 {
        let avg: f64 = (1..=n).map(|l| eta_n.eval(l as f64 / n as f64)).sum::<f64>() / n as f64;
        let mut v = params.mu * params.jump.mean() * avg;
        if let Some((mu2, j2)) = params.second_stream() {
            v += mu2 * j2.mean();
        }
        v
    }

    #[test]
    fn quantile_of_distinct_positions() {
        let state = EmpiricalState::new(vec![3.0, 1.0, 2.0, 4.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // Particle 2 holds position 2.0, second from the left.
        assert_eq!(state.quantile_of(2, &mut rng), 0.5);
        let single = EmpiricalState::new(vec![7.0]);
        assert_eq!(single.quantile_of(0, &mut rng), 1.0);
    }

    #[test]
    fn quantile_multiset_is_exact_for_distinct_positions() {
        let state = EmpiricalState::new((0..10).map(|i| i as f64).collect());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut nus: Vec<f64> = (0..10).map(|i| state.quantile_of(i, &mut rng)).collect();
        nus.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expect: Vec<f64> = (1..=10).map(|l| l as f64 / 10.0).collect();
        assert_eq!(nus, expect);
    }

    #[test]
    fn tie_break_is_uniform_chi_squared() {
        // Two co-located particles: nu must be 0.5 or 1.0 with equal
        // probability. Chi-squared test with 1 dof at p > 0.01.
        let state = EmpiricalState::new(vec![1.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let draws = 100_000;
        let mut half = 0u64;
        for _ in 0..draws {
            let nu = state.quantile_of(0, &mut rng);
            assert!(nu == 0.5 || nu == 1.0);
            if nu == 0.5 {
                half += 1;
            }
        }
        let expect = draws as f64 / 2.0;
        let chi2 = (half as f64 - expect).powi(2) / expect
            + ((draws - half) as f64 - expect).powi(2) / expect;
        assert!(chi2 < 6.635, "chi2 = {chi2} rejects uniform tie-break at p = 0.01");
    }

    #[test]
    fn lone_particle_never_moves() {
        // n = 1: the quantile is always 1 and eta(1) = 0.
        let params = k1_params();
        let eta = params.rate.clone();
        let mut state = EmpiricalState::new(vec![0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let rec = step(&mut state, &params, &eta, &mut rng);
            assert_eq!(rec.kind, EventKind::Urge { jump: None });
        }
        assert_eq!(state.positions(), &[0.0]);
    }

    #[test]
    fn pure_second_stream_jumps_every_event() {
        // mu = 0, mu2 = 1 with deterministic size: displacement per event
        // is exactly the jump size.
        let params = ModelParams::new(0.0, JumpKernel::Exponential { rate: 1.0 }, RateCurve::Power { k: 1 })
            .with_second_stream(1.0, JumpKernel::Deterministic { size: 0.75 });
        let log = run(&params, vec![0.0; 20], &RateCurve::Power { k: 1 }, 50.0, 9, &[]).unwrap();
        assert_eq!(log.urges, 0);
        assert!(log.stream2 > 0);
        assert_relative_eq!(log.sum_jump, 0.75 * log.stream2 as f64, max_relative = 1e-12);
        assert_relative_eq!(
            log.final_mean - log.initial_mean,
            0.75 * log.stream2 as f64 / 20.0,
            max_relative = 1e-9
        );
    }

    #[test]
    fn sortedness_and_forward_motion() {
        let params = k1_params();
        let eta = params.rate.clone();
        let mut state = EmpiricalState::new(vec![0.0; 50]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut prev_positions = state.positions().to_vec();
        for _ in 0..5000 {
            step(&mut state, &params, &eta, &mut rng);
            let sorted = state.snapshot();
            assert!(sorted.positions().windows(2).all(|w| w[0] <= w[1]));
            for (new, old) in state.positions().iter().zip(&prev_positions) {
                assert!(new >= old, "a particle moved left");
            }
            prev_positions = state.positions().to_vec();
        }
    }

    #[test]
    fn first_accepted_jump_moves_exactly_one_particle() {
        let params = k1_params();
        let eta = params.rate.clone();
        let mut state = EmpiricalState::new(vec![0.0; 30]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        loop {
            let rec = step(&mut state, &params, &eta, &mut rng);
            if matches!(rec.kind, EventKind::Urge { jump: Some(_) }) {
                break;
            }
        }
        let at_zero = state.positions().iter().filter(|p| **p == 0.0).count();
        assert_eq!(at_zero, 29);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let params = k1_params();
        let eta = params.rate.clone();
        let a = run(&params, vec![0.0; 100], &eta, 20.0, 42, &[5.0, 10.0]).unwrap();
        let b = run(&params, vec![0.0; 100], &eta, 20.0, 42, &[5.0, 10.0]).unwrap();
        assert_eq!(a.urges, b.urges);
        assert_eq!(a.accepted, b.accepted);
        assert_eq!(a.final_mean, b.final_mean);
        assert_eq!(a.snapshots.len(), b.snapshots.len());
        for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
            assert_eq!(sa.cdf.positions(), sb.cdf.positions());
        }
        let c = run(&params, vec![0.0; 100], &eta, 20.0, 43, &[]).unwrap();
        assert_ne!(a.final_mean, c.final_mean);
    }

    #[test]
    fn empty_schedule_gives_counters_only() {
        let params = k1_params();
        let log = run(&params, vec![0.0; 10], &params.rate.clone(), 5.0, 3, &[]).unwrap();
        assert!(log.snapshots.is_empty());
        assert!(log.events() > 0);
    }

    #[test]
    fn event_rate_matches_aggregate_clock() {
        // Total event count over R seeded replicas is Poisson with mean
        // R * n * (mu + mu2) * T; check the pooled z-score.
        let params = k1_params().with_second_stream(0.5, JumpKernel::Deterministic { size: 1.0 });
        let (n, t, reps) = (40usize, 10.0, 20u64);
        let mut total = 0u64;
        for seed in 0..reps {
            total += run(&params, vec![0.0; n], &params.rate.clone(), t, seed, &[]).unwrap().events();
        }
        let lambda = reps as f64 * n as f64 * 1.5 * t;
        let z = (total as f64 - lambda) / lambda.sqrt();
        assert!(z.abs() < 4.0, "pooled event-count z-score {z}");
    }

    #[test]
    fn mean_speed_matches_exact_finite_n_value() {
        let params = k1_params();
        let eta = params.rate.clone();
        let n = 200;
        let log = run(&params, vec![0.0; n], &eta, 150.0, 7, &[]).unwrap();
        let v_n = exact_finite_n_speed(&params, &eta, n);
        assert_relative_eq!(v_n, (n as f64 - 1.0) / (2.0 * n as f64), max_relative = 1e-12);
        let z = (log.mean_speed() - v_n).abs() / log.speed_stderr();
        assert!(z < 4.0, "speed {} vs exact {v_n}, z = {z}", log.mean_speed());
    }

    #[test]
    fn two_particle_speed_has_the_finite_n_correction() {
        // Leader-follower pair: chosen particle's rank is uniform on
        // {1, 2}, so the expected speed is (eta(1/2) + eta(1)) / 2 * m1
        // = 0.25, not v = 0.5.
        let params = k1_params();
        let eta = params.rate.clone();
        let log = run(&params, vec![0.0, 0.0], &eta, 4000.0, 21, &[]).unwrap();
        let z = (log.mean_speed() - 0.25).abs() / log.speed_stderr();
        assert!(z < 4.0, "pair speed {} z = {z}", log.mean_speed());
        let log2 = run(&params, vec![0.0, 0.0], &eta, 4000.0, 22, &[]).unwrap();
        let gap = (log.mean_speed() - log2.mean_speed()).abs();
        assert!(gap < 8.0 * log.speed_stderr().max(log2.speed_stderr()));
    }

    #[test]
    fn recenter_examples() {
        let c = EmpiricalCdf::new(vec![1.0, 2.0, 3.0]);
        assert_eq!(c.recenter_median().positions(), &[-1.0, 0.0, 1.0]);
        let two = EmpiricalCdf::new(vec![5.0, 5.0]);
        assert_eq!(two.recenter_median().positions(), &[0.0, 0.0]);
        let centered = EmpiricalCdf::new(vec![-1.0, 0.0, 2.0]);
        assert_eq!(centered.recenter_median().positions(), centered.positions());
    }

    #[test]
    fn sup_distance_of_quantile_sample_is_half_step() {
        // Particles placed at the (i - 1/2)/n quantiles of the reference:
        // the staircase stays within 1/(2n) plus interpolation error.
        let phi = GridCdf::uniform(0.0, 1.0, 0.001).unwrap();
        let n = 100;
        let positions: Vec<f64> = (1..=n).map(|i| phi.quantile((i as f64 - 0.5) / n as f64)).collect();
        let emp = EmpiricalCdf::new(positions);
        let d = empirical_sup_distance(&emp, &phi);
        assert!(d <= 0.5 / n as f64 + 2e-3, "distance {d}");
        // Large n: the distance shrinks accordingly.
        let n2 = 2000;
        let emp2 = EmpiricalCdf::new((1..=n2).map(|i| phi.quantile((i as f64 - 0.5) / n2 as f64)).collect());
        assert!(empirical_sup_distance(&emp2, &phi) <= 0.5 / n2 as f64 + 2e-3);
    }
}
