//! Property tests of the structural invariants.

use deconv_core::patching::{
    col2im, concat_channel_blocks, im2col, split_channel_blocks, subsample_rows,
};
use deconv_core::{Rng, Tensor};
use proptest::prelude::*;

fn integer_tensor(shape: Vec<usize>, seed: u64) -> Tensor<f64> {
    let mut rng = Rng::new(seed);
    let mut t = Tensor::<f64>::randn(shape, &mut rng).unwrap();
    for v in t.data_mut() {
        *v = (*v * 8.0).round();
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matmul_with_identity_is_exact(m in 1usize..12, n in 1usize..12, seed in 0u64..1000) {
        let a = integer_tensor(vec![m, n], seed);
        let i = Tensor::<f64>::identity(n);
        prop_assert_eq!(a.matmul(&i).unwrap(), a);
    }

    #[test]
    fn transpose_is_an_involution(m in 1usize..16, n in 1usize..16, seed in 0u64..1000) {
        let mut rng = Rng::new(seed);
        let a = Tensor::<f64>::randn(vec![m, n], &mut rng).unwrap();
        prop_assert_eq!(a.transpose().unwrap().transpose().unwrap(), a);
    }

    #[test]
    fn subsample_counts_and_identity(rows in 1usize..40, cols in 1usize..6, stride in 1usize..7, seed in 0u64..1000) {
        let mut rng = Rng::new(seed);
        let p = deconv_core::patching::PatchMatrix {
            data: Tensor::<f64>::randn(vec![rows, cols], &mut rng).unwrap(),
            geometry: deconv_core::patching::PatchGeometry {
                batch: rows, channels: cols, height: 1, width: 1,
                kh: 1, kw: 1, conv_stride: 1, padding: 0, block_index: None,
            },
        };
        let s = subsample_rows(&p, stride).unwrap();
        prop_assert_eq!(s.data.shape()[0], rows.div_ceil(stride));
        if stride == 1 {
            prop_assert_eq!(&s, &p);
        }
        // kept rows are exactly rows 0, stride, 2·stride, …
        for (k, r) in (0..rows).step_by(stride).enumerate() {
            prop_assert_eq!(s.data.row(k), p.data.row(r));
        }
    }

    #[test]
    fn split_then_concat_is_identity(
        b in 1usize..3, c in 1usize..7, hw in 3usize..6, k in 1usize..3, block in 1usize..9, seed in 0u64..1000,
    ) {
        prop_assume!(k <= hw);
        let mut rng = Rng::new(seed);
        let x = Tensor::<f64>::randn(vec![b, c, hw, hw], &mut rng).unwrap();
        prop_assume!((hw - k) % 1 == 0);
        let p = im2col(&x, k, k, 1, 0).unwrap();
        let blocks = split_channel_blocks(&p, block).unwrap();
        prop_assert_eq!(blocks.len(), c.div_ceil(block));
        let back = concat_channel_blocks(&blocks, c).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn im2col_col2im_round_trip_on_integers(
        b in 1usize..3, c in 1usize..4, hw in 3usize..8, k in 1usize..4, pad in 0usize..2, seed in 0u64..1000,
    ) {
        prop_assume!(k <= hw + 2 * pad);
        let x = integer_tensor(vec![b, c, hw, hw], seed);
        let p = im2col(&x, k, k, 1, pad).unwrap();
        let back = col2im(&p).unwrap();
        prop_assert_eq!(back, x);
    }
}
