//! Learn drift and gain of a scalar control-affine system from noisy samples
//! and compare the split posterior to the truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use safe_etl::gp::{CompositeGp, SquaredExponentialKernel};

fn main() {
    let f = |x: f64| -0.5 * x + (2.0 * x).sin() * 0.3;
    let g = |x: f64| 1.0 + 0.4 * x.cos();
    let noise = 0.02;
    let mut gp = CompositeGp::empty(
        SquaredExponentialKernel::isotropic(1.0, 0.8, 1),
        SquaredExponentialKernel::isotropic(1.0, 1.5, 1),
        noise,
    )
    .unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w = Normal::new(0.0, noise).unwrap();
    for _ in 0..60 {
        let x = rng.random_range(-3.0..3.0);
        // varying inputs are what separates g from f
        let u = rng.random_range(-2.0..2.0);
        gp.push_point(&[x], u, f(x) + g(x) * u + w.sample(&mut rng)).unwrap();
    }

    println!("{:>6} {:>9} {:>9} {:>8} {:>9} {:>9} {:>8}", "x", "f", "mean_f", "std_f", "g", "mean_g", "std_g");
    for i in 0..=12 {
        let x = -3.0 + 0.5 * i as f64;
        let (mf, vf) = gp.posterior_f(&[x]);
        let (mg, vg) = gp.posterior_g(&[x]);
        println!(
            "{x:>6.2} {:>9.4} {mf:>9.4} {:>8.4} {:>9.4} {mg:>9.4} {:>8.4}",
            f(x),
            vf.sqrt(),
            g(x),
            vg.sqrt()
        );
    }
}
