mod common;

use acoustolab::spectral::{resolvent_norm_with, ResolventRoute};
use acoustolab::{resolvent_norm, KernelBasis};
use rand::Rng;

#[test]
fn resolvent_norm_matches_dense_svd_oracle() {
    let mut rng = common::rng(42);
    for op in common::small_instances() {
        assert!(op.n_dof() <= 1500);
        let k = KernelBasis::compute(&op).unwrap();
        let oracle = common::ResolventOracle::new(&op);
        for _ in 0..10 {
            let mu: f64 = rng.gen_range(1.0..40.0);
            let want = oracle.norm(mu);
            for got in [
                resolvent_norm(&op, &k, mu).unwrap(),
                resolvent_norm_with(&op, &k, mu, ResolventRoute::Lanczos).unwrap(),
            ] {
                let rel = (got - want).abs() / want;
                assert!(rel <= 1e-8, "n_dof {} mu {mu}: {got} vs {want} (rel {rel:e})", op.n_dof());
            }
        }
    }
}
