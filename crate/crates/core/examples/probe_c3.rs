use rankwave::kernels::{JumpKernel, ModelParams, RateCurve};
use rankwave::wave::{tune_speed, TuneOpts};

fn main() {
    let n_tab = 2001;
    let nu: Vec<f64> = (0..n_tab).map(|i| i as f64 / (n_tab - 1) as f64).collect();
    let eta: Vec<f64> = nu.iter().map(|x| 1.0 - x * x).collect();
    let other = ModelParams::new(1.0, JumpKernel::Uniform { a: 0.0, b: 2.0 }, RateCurve::Table { nu, eta });
    let v = 2.0 / 3.0;
    let mut warm = None;
    for b in [5.0, 10.0, 12.0, 14.0, 16.0, 18.0] {
        let t0 = std::time::Instant::now();
        match tune_speed(b, 1e-2, &other, &TuneOpts::default(), warm) {
            Ok((w, gamma)) => {
                println!(
                    "B={b}: |w-v|={:.3e} atom={:.3e} median_res={:.2e} ({:.2?})",
                    (w - v).abs(),
                    gamma.atom_mass(),
                    (gamma.eval(0.0) - 0.5).abs(),
                    t0.elapsed()
                );
                warm = Some(w);
            }
            Err(e) => {
                println!("B={b}: ERR {e} ({:.2?})", t0.elapsed());
            }
        }
    }
}
