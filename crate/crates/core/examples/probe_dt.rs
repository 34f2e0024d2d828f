use rankwave::grid::GridCdf;
use rankwave::kernels::{closed_form_wave, JumpKernel, ModelParams, RateCurve};
use rankwave::meanfield::{integrate, IntegrateOpts, MeanFieldState};
use rankwave::verify::embed;
use rankwave::wave::wave_residual;

fn main() {
    let params = ModelParams::new(1.0, JumpKernel::Exponential { rate: 1.0 }, RateCurve::Power { k: 1 });
    let f0 = embed(&GridCdf::uniform(0.0, 1.0, 0.01).unwrap(), -2.0, 19.0);
    for dt in [0.5, 0.8, 1.0, 1.5, 2.5, 5.0] {
        let opts = IntegrateOpts { dt, tail_tol: 1e-6, window: rankwave::meanfield::WindowPolicy::Fixed };
        let res = integrate(MeanFieldState::new(f0.clone()), 5.0, &params, &opts);
        println!("dt={dt}: {:?}", res.map(|s| s.t).map_err(|e| e.to_string()));
    }
    // closed-form residual baselines at coarse steps
    for (h, n) in [(1e-2, 4001usize), (5e-3, 8001)] {
        let phi = closed_form_wave(1, 0.0, -20.0, h, n);
        println!("baseline K=1 residual at h={h}: {:.3e}", wave_residual(&phi, &params, None).unwrap());
    }
}
