mod common;

use common::{grad_cases, randn};
use multires::tensor::ops;
use multires::tensor::{finite_difference_check, Tensor};
use proptest::prelude::*;

#[test]
fn every_op_matches_finite_differences_over_twenty_seeds() {
    for case in grad_cases() {
        let mut checked = 0;
        for seed in 0..20u64 {
            let inputs = (case.inputs)(seed * 7 + 1);
            let r = finite_difference_check(|t, v| (case.op)(t, v), &inputs, 1e-5, seed).unwrap();
            assert!(
                r.max_rel_err < 1e-4,
                "{} seed {seed}: rel err {} at {:?}",
                case.name,
                r.max_rel_err,
                r.worst
            );
            checked += r.checked;
        }
        assert!(checked > 0, "{}: every element excluded", case.name);
    }
}

fn tensor_strategy(shape: Vec<usize>) -> impl Strategy<Value = Tensor<f64>> {
    let n: usize = shape.iter().product();
    prop::collection::vec(-3.0f64..3.0, n).prop_map(move |d| Tensor::new(shape.clone(), d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn maxpool_and_mfm_are_monotone(x in tensor_strategy(vec![1, 4, 6, 6]), idx in 0usize..144, bump in 0.0f64..2.0) {
        let mut y = x.clone();
        y.data_mut()[idx] += bump;
        let (a, _) = ops::maxpool2d(&x, (2, 2), (2, 2)).unwrap();
        let (b, _) = ops::maxpool2d(&y, (2, 2), (2, 2)).unwrap();
        prop_assert!(a.data().iter().zip(b.data()).all(|(p, q)| q >= p));
        let (a, _) = ops::mfm(&x).unwrap();
        let (b, _) = ops::mfm(&y).unwrap();
        prop_assert!(a.data().iter().zip(b.data()).all(|(p, q)| q >= p));
    }

    #[test]
    fn conv_is_linear_in_its_input(
        a in tensor_strategy(vec![1, 2, 5, 5]),
        b in tensor_strategy(vec![1, 2, 5, 5]),
        w in tensor_strategy(vec![3, 2, 3, 3]),
        alpha in -2.0f64..2.0,
    ) {
        let mix = Tensor::new(a.shape().to_vec(), a.data().iter().zip(b.data()).map(|(p, q)| p + alpha * q).collect()).unwrap();
        let ya = ops::conv2d(&a, &w, None, (1, 1), (1, 1)).unwrap();
        let yb = ops::conv2d(&b, &w, None, (1, 1), (1, 1)).unwrap();
        let ym = ops::conv2d(&mix, &w, None, (1, 1), (1, 1)).unwrap();
        for ((m, p), q) in ym.data().iter().zip(ya.data()).zip(yb.data()) {
            prop_assert!((m - (p + alpha * q)).abs() < 1e-9);
        }
    }

    #[test]
    fn linear_matches_naive_product(x in tensor_strategy(vec![3, 4]), w in tensor_strategy(vec![5, 4])) {
        let y = ops::linear(&x, &w, None).unwrap();
        for i in 0..3 {
            for o in 0..5 {
                let want: f64 = (0..4).map(|k| x.data()[i * 4 + k] * w.data()[o * 4 + k]).sum();
                prop_assert!((y.data()[i * 5 + o] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn log_softmax_rows_normalize(x in tensor_strategy(vec![3, 10])) {
        let l = ops::log_softmax(&x).unwrap();
        for row in l.data().chunks(10) {
            let s: f64 = row.iter().map(|v| v.exp()).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&v| v <= 0.0));
        }
    }

    #[test]
    fn cross_entropy_is_non_negative(x in tensor_strategy(vec![4, 10]), t in prop::collection::vec(0usize..10, 4)) {
        let (loss, probs) = ops::softmax_cross_entropy(&x, &t).unwrap();
        prop_assert!(loss >= 0.0);
        prop_assert!(probs.data().iter().all(|&p| (0.0..=1.0).contains(&p)));
    }
}

#[test]
fn nonfinite_forward_values_are_reported() {
    let mut tape = multires::tensor::Tape::<f64>::new();
    let x = tape.leaf(Tensor::new(vec![1, 2], vec![f64::INFINITY, 0.0]).unwrap(), true);
    let w = tape.leaf(randn(&[2, 2], 3), true);
    assert!(matches!(tape.linear(x, w, None), Err(multires::Error::NonFinite(_))));
}
