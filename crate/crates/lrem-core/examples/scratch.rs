use lrem_core::neural::InnModel;
use lrem_core::dataset::NormStats;
use lrem_core::cell::DesignBounds;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let norm = NormStats::from_bounds(&DesignBounds::default(), 2200.0);
    for noise in [0.05, 0.1, 0.2, 0.3] {
        let mut model = InnModel::new(4, 4, 10, 16, 2, 2.0, norm, 41).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for p in model.params_mut() {
            p.apply(|v| *v += noise * rng.gen_range(-1.0f64..1.0));
        }
        let mut worst: f64 = 0.0;
        let mut maxval: f64 = 0.0;
        for _ in 0..100 {
            let x = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-0.2..1.2));
            let y = model.forward(&x).unwrap();
            maxval = maxval.max(y.amax());
            let back = model.inverse(&y).unwrap();
            worst = worst.max((&back - &x).amax());
        }
        println!("noise {noise}: worst roundtrip {:.3e}, max |y| {:.2e}", worst, maxval);
    }
}
