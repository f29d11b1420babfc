//! Analytic gradients against central differences.

mod common;

use holoclass::model::{Coefficients, Objective, Params};
use holoclass::{Classifier, FeatureKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{gradient_error, loss, nudge, random_bank, rel_err};

#[test]
fn cross_entropy_gradients_match_central_differences() {
    for seed in 0..20u64 {
        for kind in [FeatureKind::Cosine, FeatureKind::Holomorphic] {
            let zero_class = kind == FeatureKind::Holomorphic && seed % 2 == 0;
            let e = gradient_error(kind, zero_class, seed);
            assert!(e < 1e-5, "{kind:?} seed {seed}: relative error {e:e}");
        }
    }
}

#[test]
fn squared_error_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let bank = random_bank(FeatureKind::Cosine, &mut rng);
    let params = Params::Real(Coefficients {
        weights: (0..bank.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        bias: vec![0.3],
    });
    let c = Classifier::from_params(bank, 1, params, false).unwrap();
    let x: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
    let obj = Objective::SquaredError { target: 0.7 };
    let (_, g) = c.objective_gradient(&[(&x, obj)]).unwrap();
    for i in 0..g.num_weights() {
        let h = 1e-6;
        let fd = (loss(&nudge(&c, i, 0, h), &x, obj) - loss(&nudge(&c, i, 0, -h), &x, obj)) / (2.0 * h);
        assert!(rel_err(g.weight(i).re, fd) < 1e-6);
    }
}
