use proptest::prelude::*;

use msk_core::model::ModelParams;
use msk_core::optimize::Reparam;
use msk_core::parisi::{build_trial, parisi_recursion};
use msk_core::rpc::{sample_cascade, CascadeConfig, RecursionMethod};
use msk_core::simulate::{gray_config, hamiltonian, quadratic_energies};

fn increasing(len: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, len).prop_map(move |mut v| {
        v.sort_by(f64::total_cmp);
        let step = (hi - lo) / (len as f64 + 1.0);
        v.iter()
            .enumerate()
            .map(|(i, x)| lo + step * (i as f64 + 0.5 + 0.9 * x))
            .collect()
    })
}

fn model(r: usize) -> impl Strategy<Value = ModelParams> {
    (increasing(r, 0.05, 0.95), increasing(r, 0.2, 1.5)).prop_map(|(z, g)| ModelParams::new(z, g).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cascade_weights_are_a_probability_vector(zeta in increasing(2, 0.05, 0.95), seed in any::<u64>()) {
        let c = sample_cascade(&zeta, &CascadeConfig::new(6, 3), seed).unwrap();
        let w = c.leaf_weights();
        prop_assert!(w.iter().all(|x| *x >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&c.leftover_mass_bound()));
    }

    #[test]
    fn reparam_points_are_feasible(
        params in model(2),
        counts in prop::collection::vec(0usize..3, 2),
        u in prop::collection::vec(-30.0..30.0f64, 12),
    ) {
        let layout = Reparam::new(&params, counts).unwrap();
        let coords: Vec<f64> = u.iter().cycle().take(layout.dim()).copied().collect();
        let t = layout.trial(&coords).unwrap();
        prop_assert_eq!(t.k(), layout.k());
        prop_assert!(t.xi().windows(2).all(|w| w[0] < w[1]));
        prop_assert!(t.q().windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(t.q()[0], 0.0);
        prop_assert_eq!(*t.q().last().unwrap(), 1.0);
    }

    #[test]
    fn duplicated_level_leaves_functional_unchanged(
        params in model(1),
        x in 0.0..1.0f64,
        q1 in 0.05..0.95f64,
    ) {
        let z = params.zeta()[0];
        let (lo, hi) = (z + 0.05 * (1.0 - z), z + 0.95 * (1.0 - z));
        let a = lo + (hi - lo) * x;
        let b = 0.5 * (a + 1.0);
        let base = build_trial(&params, &[a], &[0.0, q1, 1.0]).unwrap();
        let dup = build_trial(&params, &[a, b], &[0.0, q1, 1.0, 1.0]).unwrap();
        let m = RecursionMethod::Quadrature { nodes: 24 };
        let va = parisi_recursion(&base, m).unwrap().value;
        let vb = parisi_recursion(&dup, m).unwrap().value;
        prop_assert!((va - vb).abs() < 1e-10, "{} {}", va, vb);
    }

    #[test]
    fn gray_enumeration_matches_direct_hamiltonian(
        n in 1usize..7,
        g in prop::collection::vec(-2.0..2.0f64, 36),
    ) {
        let g = &g[..n * n];
        let scale = 1.0 / (n as f64).sqrt();
        let mut energies = Vec::new();
        quadratic_energies(g, n, scale, &mut energies);
        prop_assert_eq!(energies.len(), 1 << (n - 1));
        for (t, e) in energies.iter().enumerate() {
            let direct = hamiltonian(g, &gray_config(t, n));
            prop_assert!((e - direct).abs() < 1e-9, "{} {} {}", t, e, direct);
        }
    }
}
