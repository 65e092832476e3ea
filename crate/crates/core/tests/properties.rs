use nalgebra::DMatrix;
use proptest::prelude::*;

use normforge::linalg::{gram, inv_sqrt, SymMatrix};
use normforge::norms::{apply_weights, NormTerm, SumNorm};
use normforge::rng::SeedStream;
use normforge::sparsify::sample_support;
use normforge::submodular::{lovasz_extension, CutFunction, Subset};
use normforge::weights::ProbabilityVector;

fn edges(n: usize) -> impl Strategy<Value = Vec<(usize, usize, f64)>> {
    prop::collection::vec((0..n, 0..n, 0.1f64..5.0), 1..12)
        .prop_map(|v| v.into_iter().filter(|(u, w, _)| u != w).collect::<Vec<_>>())
        .prop_filter("at least one edge", |v| !v.is_empty())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lovasz_of_cut_is_weighted_abs_differences(
        es in edges(6),
        x in prop::collection::vec(-10.0f64..10.0, 6),
    ) {
        let f = CutFunction::graph(6, &es).unwrap();
        let direct: f64 = es.iter().map(|&(u, v, c)| c * (x[u] - x[v]).abs()).sum();
        let ext = lovasz_extension(&f, &x).unwrap();
        prop_assert!((ext - direct).abs() <= 1e-12 * direct.max(1.0));
    }

    #[test]
    fn lp_image_homogeneous_and_subadditive(
        p in 1.0f64..8.0,
        rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 1..5),
        x in prop::collection::vec(-5.0f64..5.0, 4),
        y in prop::collection::vec(-5.0f64..5.0, 4),
        lambda in -4.0f64..4.0,
    ) {
        let t = NormTerm::LpImage { rows, p };
        let nx = t.value(&x);
        let sx: Vec<f64> = x.iter().map(|v| lambda * v).collect();
        prop_assert!((t.value(&sx) - lambda.abs() * nx).abs() <= 1e-10 * (1.0 + nx * lambda.abs()));
        let s: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        prop_assert!(t.value(&s) <= nx + t.value(&y) + 1e-10 * (1.0 + nx));
    }

    #[test]
    fn unit_weights_change_nothing(
        rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 1..8),
        x in prop::collection::vec(-5.0f64..5.0, 3),
        p in 1.0f64..3.0,
    ) {
        let terms: Vec<NormTerm> = rows.into_iter().map(|a| NormTerm::Linear { a }).collect();
        let m = terms.len();
        let norm = SumNorm::new(3, p, terms).unwrap();
        let same = apply_weights(&norm, &vec![1.0; m]).unwrap();
        prop_assert_eq!(norm.eval_pow_unchecked(&x), same.eval_pow_unchecked(&x));
    }

    #[test]
    fn support_weights_reproduce_draw_counts(
        mass in prop::collection::vec(0.01f64..10.0, 1..30),
        draws in 1usize..500,
        seed in any::<u64>(),
    ) {
        let z: f64 = mass.iter().sum();
        let rho = ProbabilityVector { rho: mass.iter().map(|m| m / z).collect() };
        let mut rng = SeedStream::new(seed).rng();
        let res = sample_support(&rho, draws, &mut rng);
        // c_i = w_i·M·ρ_i are integers summing to M
        let mut total = 0.0;
        for (w, r) in res.weights.iter().zip(&rho.rho) {
            let c = w * draws as f64 * r;
            prop_assert!((c - c.round()).abs() < 1e-9);
            total += c;
        }
        prop_assert!((total - draws as f64).abs() < 1e-9);
        prop_assert!(res.support.len() <= draws);
    }

    #[test]
    fn subset_complement_round_trip(n in 1usize..130, picks in prop::collection::vec(any::<prop::sample::Index>(), 0..40)) {
        let idx: Vec<usize> = picks.iter().map(|i| i.index(n)).collect();
        let s = Subset::from_indices(n, &idx);
        let c = s.complement();
        prop_assert_eq!(s.len() + c.len(), n);
        prop_assert_eq!(c.complement(), s.clone());
        for i in 0..n {
            prop_assert_ne!(s.contains(i), c.contains(i));
        }
    }

    #[test]
    fn inv_sqrt_inverts_spd(vals in prop::collection::vec(-1.0f64..1.0, 20), w in prop::collection::vec(0.5f64..2.0, 5)) {
        let a = DMatrix::from_row_slice(5, 4, &vals);
        let mut g = gram(&a, &w).unwrap().into_matrix();
        for i in 0..4 {
            g[(i, i)] += 0.5;
        }
        let s = SymMatrix::new(g.clone()).unwrap();
        let r = inv_sqrt(&s, 1e-12).matrix.into_matrix();
        let id = &g * &r * &r;
        prop_assert!((id - DMatrix::<f64>::identity(4, 4)).amax() < 1e-9);
    }
}
