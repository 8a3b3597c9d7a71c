//! Property tests for the discrete operators.

use heap_solver::{arakawa_bracket, Field2D, Spectral};
use proptest::prelude::*;

fn field_strategy(n: usize) -> impl Strategy<Value = Field2D> {
    prop::collection::vec(-1.0f64..1.0, n * n)
        .prop_map(move |v| Field2D::from_values(n, n, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn bracket_conservation_holds(
        a in field_strategy(16),
        b in field_strategy(16),
    ) {
        let j = arakawa_bracket(&a, &b, 0.3).unwrap();
        let n = j.values().len() as f64;
        let scale = j.rms().max(1e-30);
        let mean_j = j.values().iter().sum::<f64>() / n;
        let mean_aj = a.values().iter().zip(j.values()).map(|(x, y)| x * y).sum::<f64>() / n;
        let mean_bj = b.values().iter().zip(j.values()).map(|(x, y)| x * y).sum::<f64>() / n;
        prop_assert!(mean_j.abs() / scale < 1e-12);
        prop_assert!(mean_aj.abs() / (a.rms() * scale).max(1e-30) < 1e-12);
        prop_assert!(mean_bj.abs() / (b.rms() * scale).max(1e-30) < 1e-12);
    }

    #[test]
    fn bracket_antisymmetry(
        a in field_strategy(16),
        b in field_strategy(16),
    ) {
        let jab = arakawa_bracket(&a, &b, 0.5).unwrap();
        let jba = arakawa_bracket(&b, &a, 0.5).unwrap();
        for (x, y) in jab.values().iter().zip(jba.values()) {
            prop_assert!((x + y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    /// The spectral round trip `poisson(laplacian(f))` recovers the zero-mean
    /// part of any field.
    #[test]
    fn poisson_laplacian_identity(f in field_strategy(16)) {
        let sp = Spectral::new(16, 16, 5.0).unwrap();
        let recovered = sp.poisson_solve(&sp.laplacian(&f));
        let mean = f.mean();
        let scale = f.rms().max(1e-12);
        for (r, v) in recovered.values().iter().zip(f.values()) {
            prop_assert!(((r - (v - mean)) / scale).abs() < 1e-10);
        }
    }
}
