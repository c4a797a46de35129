use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use strata::inference::{LogDensityGrad, Posterior};
use strata::model::state::ParameterState;
use strata::simulate::{default_recovery_config, simulate_dataset, TruthOverrides};

fn main() {
    let config = default_recovery_config();
    let (data, _truth) = simulate_dataset(&config, 7, &TruthOverrides::default()).unwrap();
    let posterior = Posterior::new(&config, &data).unwrap();
    let layout = posterior.layout();
    let dim = posterior.dim();
    let neutral = layout.to_unconstrained(&ParameterState::neutral(&config)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let x: Vec<f64> = neutral
        .iter()
        .map(|&v| {
            let e: f64 = StandardNormal.sample(&mut rng);
            v + 0.3 * e
        })
        .collect();
    let mut grad = vec![0.0; dim];
    let logp = posterior.logp_grad(&x, &mut grad).unwrap();
    println!("logp at probe point: {logp:.1}");

    let h = 1e-5;
    let mut worst_rel: f64 = 0.0;
    let mut worst_abs_small: f64 = 0.0;
    let mut bins = [0usize; 6]; // abs err: <1e-8, <1e-7, <1e-6, <1e-5, <1e-4, worse
    let mut xp = x.clone();
    for j in 0..dim {
        xp[j] = x[j] + h;
        let fp = posterior.logp(&xp).unwrap();
        xp[j] = x[j] - h;
        let fm = posterior.logp(&xp).unwrap();
        xp[j] = x[j];
        let fd = (fp - fm) / (2.0 * h);
        let err = (fd - grad[j]).abs();
        let scale = fd.abs().max(grad[j].abs());
        let k = if err < 1e-8 { 0 } else if err < 1e-7 { 1 } else if err < 1e-6 { 2 }
                else if err < 1e-5 { 3 } else if err < 1e-4 { 4 } else { 5 };
        bins[k] += 1;
        if scale > 1e-2 {
            worst_rel = worst_rel.max(err / scale);
        } else {
            worst_abs_small = worst_abs_small.max(err);
        }
    }
    println!("abs-err bins (<1e-8,<1e-7,<1e-6,<1e-5,<1e-4,worse): {bins:?}");
    println!("worst relative error (|g|>1e-2): {worst_rel:.3e}");
    println!("worst absolute error (|g|<=1e-2): {worst_abs_small:.3e}");
}
