use proptest::prelude::*;

use nalista_core::dictionary::{compute_dictionary, DictionaryOptions};
use nalista_core::numerics::tensor::{shrink, softsign};
use nalista_core::numerics::{largest_eigenvalue, Tape, POWER_MAX_ITER};
use nalista_core::problems::ProblemEnsemble;
use nalista_core::solvers::{
    model_forward, AlistaParams, ForwardOptions, InputFeatures, Model, Operators, RecurrentCellParams,
    SupportSelectionSchedule,
};
use nalista_core::Tensor;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |d| Tensor::matrix(rows, cols, d).unwrap())
}

fn small_ops(seed: u64) -> Operators {
    let ens = ProblemEnsemble::generate(6, 12, 2.0, None, seed).unwrap();
    let dict = compute_dictionary(&ens.phi, &DictionaryOptions::default()).unwrap();
    Operators::new(ens.phi, dict.w).unwrap()
}

proptest! {
    #[test]
    fn soft_threshold_is_nonexpansive(a in -10.0f64..10.0, b in -10.0f64..10.0, theta in 0.0f64..5.0) {
        let ulps = 4.0 * f64::EPSILON * (a.abs() + b.abs() + theta);
        prop_assert!((shrink(a, theta) - shrink(b, theta)).abs() <= (a - b).abs() + ulps);
        prop_assert!(shrink(a, theta).abs() <= a.abs());
        prop_assert!(shrink(a, theta) == 0.0 || shrink(a, theta).signum() == a.signum());
    }

    #[test]
    fn softsign_stays_in_open_unit_interval(v in -1e12f64..1e12) {
        let s = softsign(v);
        prop_assert!(s > -1.0 && s < 1.0);
        prop_assert_eq!(s.signum() == v.signum() || v == 0.0, true);
    }

    #[test]
    fn rayleigh_quotient_is_bounded_by_largest_eigenvalue(a in matrix(5, 7), v in prop::collection::vec(-1.0f64..1.0, 5)) {
        let gram = a.matmul_nt(&a).unwrap();
        let lmax = largest_eigenvalue(&gram, 1e-10, POWER_MAX_ITER).unwrap();
        let vv: f64 = v.iter().map(|x| x * x).sum();
        prop_assume!(vv > 1e-6);
        let vt = Tensor::matrix(1, 5, v.clone()).unwrap();
        let q = vt.matmul(&gram).unwrap().data().iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / vv;
        prop_assert!(q <= lmax * (1.0 + 1e-8) + 1e-10);
    }

    #[test]
    fn tape_replays_bit_identically(a in matrix(3, 4), b in matrix(4, 2)) {
        let run = || {
            let mut t = Tape::new();
            let x = t.leaf(a.clone());
            let w = t.leaf(b.clone());
            let y = t.matmul(x, w).unwrap();
            let s = t.softsign(y);
            let n = t.squared_norm(s);
            let g = t.backward(n).unwrap();
            (t.value(n).clone(), g.get(x).cloned(), g.get(w).cloned())
        };
        prop_assert_eq!(run(), run());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn solvers_treat_batch_rows_independently(seed in 0u64..1000, perm_seed in 0u64..1000) {
        let ops = small_ops(seed);
        let ens = ProblemEnsemble::from_matrix(ops.phi.clone(), 2.0, Some(30.0), seed).unwrap();
        let batch = ens.sample_batch(5, seed).unwrap();
        let mut order: Vec<usize> = (0..5).collect();
        let mut state = perm_seed;
        for i in (1..5).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (state >> 33) as usize % (i + 1));
        }
        let k = 4;
        let ss = SupportSelectionSchedule::ramp(k, 1.2, 5.0).unwrap();
        let mut cell = RecurrentCellParams::init(InputFeatures::Both, 3, seed).unwrap();
        cell.input_scale = Tensor::filled(1, 2, 0.3);
        let models = [
            Model::Alista(AlistaParams::constant(k, 0.05, 0.4)),
            Model::NaAlista(cell),
        ];
        for m in &models {
            let full = model_forward(&ops, m, &batch.y, k, &ss, ForwardOptions::default()).unwrap();
            let permuted = model_forward(&ops, m, &batch.y.select_rows(&order), k, &ss, ForwardOptions::default()).unwrap();
            let a = full.final_iterate().unwrap().select_rows(&order);
            let b = permuted.final_iterate().unwrap();
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }
}
