//! Property tests for the core numeric invariants.

use eatkit_tensor::{Conv2dSpec, Tape, Tensor};
use proptest::prelude::*;

proptest! {
    // softmax sums to one for magnitudes up to 1e3
    #[test]
    fn softmax_rows_sum_to_one(values in prop::collection::vec(-1e3..1e3f64, 1..24)) {
        let tape = Tape::new();
        let n = values.len();
        let x = tape.constant(Tensor::new(vec![n], values).unwrap());
        let y = x.softmax(0).unwrap().tensor();
        let sum: f64 = y.data().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12, "sum {}", sum);
        // extreme gaps underflow to exactly 0.0; outputs stay within [0, 1]
        prop_assert!(y.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    // depthwise 1x1 identity kernels leave any input bit-identical
    #[test]
    fn depthwise_identity_conv_is_exact(
        data in prop::collection::vec(-10.0..10.0f64, 36),
    ) {
        let tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![1, 4, 3, 3], data).unwrap());
        let w = tape.constant(Tensor::ones(vec![4, 1, 1, 1]));
        let spec = Conv2dSpec { stride: 1, padding: 0, dilation: 1, groups: 4 };
        let y = x.conv2d(w, None, spec).unwrap();
        prop_assert_eq!(y.tensor(), x.tensor());
    }

    // concat then split at the same boundary is the identity
    #[test]
    fn concat_split_round_trip(
        a in prop::collection::vec(-5.0..5.0f64, 4),
        b in prop::collection::vec(-5.0..5.0f64, 8),
    ) {
        let tape = Tape::new();
        let va = tape.constant(Tensor::new(vec![1, 1, 2, 2], a).unwrap());
        let vb = tape.constant(Tensor::new(vec![1, 2, 2, 2], b).unwrap());
        let joined = eatkit_tensor::concat(&tape, &[va, vb], 1).unwrap();
        let parts = joined.split(1, &[1, 2]).unwrap();
        prop_assert_eq!(parts[0].tensor(), va.tensor());
        prop_assert_eq!(parts[1].tensor(), vb.tensor());
    }
}

#[test]
fn operations_are_bit_deterministic() {
    let run = || {
        let tape = Tape::new();
        let x = tape.constant(
            Tensor::new(vec![1, 2, 4, 4], (0..32).map(|i| (i as f64 * 0.37).sin()).collect())
                .unwrap(),
        );
        let w = tape.constant(
            Tensor::new(vec![2, 1, 3, 3], (0..18).map(|i| (i as f64 * 0.91).cos()).collect())
                .unwrap(),
        );
        let spec = Conv2dSpec { stride: 1, padding: 1, dilation: 1, groups: 2 };
        let y = x.conv2d(w, None, spec).unwrap();
        let t = y.nchw_to_tokens().unwrap();
        let s = t.softmax(2).unwrap();
        s.sum().item()
    };
    let a = run();
    let b = run();
    assert_eq!(a.to_bits(), b.to_bits());
}
