use lcsc::tensor::{
    concat_channels, conv2d, nearest_upsample, pixel_shuffle, relu, sigmoid, space_to_depth, ConvKernel, Tensor,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Zero-padded cross-correlation, one output element at a time.
fn conv_oracle(x: &Tensor<f64>, k: &ConvKernel<f64>, pad: usize) -> Tensor<f64> {
    let s = x.shape();
    let (o, ks) = (k.out_channels(), k.size());
    Tensor::from_fn([s.batch, o, s.height, s.width], |[b, oc, y, xx]| {
        let mut acc = k.bias.data()[oc];
        for ic in 0..s.channels {
            for dy in 0..ks {
                for dx in 0..ks {
                    let (sy, sx) = (y as isize + dy as isize - pad as isize, xx as isize + dx as isize - pad as isize);
                    if sy < 0 || sx < 0 || sy >= s.height as isize || sx >= s.width as isize {
                        continue;
                    }
                    acc += k.weight.at(oc, ic, dy, dx) * x.at(b, ic, sy as usize, sx as usize);
                }
            }
        }
        acc
    })
}

fn max_rel(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.sub(b).unwrap().max_abs() / a.max_abs().max(1e-12)
}

#[test]
fn conv_matches_direct_cross_correlation() {
    let mut r = rng(1);
    let x = Tensor::<f64>::random_uniform([2, 3, 4, 4], -1.0, 1.0, &mut r);
    let mut k = ConvKernel::<f64>::he_uniform(5, 3, 3, &mut r);
    k.bias = Tensor::random_uniform([1, 5, 1, 1], -1.0, 1.0, &mut r);
    assert!(max_rel(&conv_oracle(&x, &k, 1), &conv2d(&x, &k, 1).unwrap()) < 1e-6);

    // pointwise path on a batch and an odd spatial size
    let x = Tensor::<f64>::random_uniform([3, 4, 5, 7], -1.0, 1.0, &mut r);
    let mut k = ConvKernel::<f64>::he_uniform(6, 4, 1, &mut r);
    k.bias = Tensor::random_uniform([1, 6, 1, 1], -1.0, 1.0, &mut r);
    assert!(max_rel(&conv_oracle(&x, &k, 0), &conv2d(&x, &k, 0).unwrap()) < 1e-6);
}

#[test]
fn conv_single_precision_tracks_double() {
    let mut r = rng(2);
    let x = Tensor::<f64>::random_uniform([1, 8, 6, 6], -1.0, 1.0, &mut r);
    let k = ConvKernel::<f64>::he_uniform(8, 8, 3, &mut r);
    let exact = conv_oracle(&x, &k, 1);
    let single = conv2d(&x.cast::<f32>(), &k.cast::<f32>(), 1).unwrap().cast::<f64>();
    assert!(max_rel(&exact, &single) < 1e-5);
}

#[test]
fn relu_and_sigmoid_follow_scalar_formulas() {
    let x = Tensor::<f64>::random_uniform([2, 3, 4, 5], -30.0, 30.0, &mut rng(3));
    let r = relu(&x);
    let s = sigmoid(&x);
    for ((v, a), b) in x.data().iter().zip(r.data()).zip(s.data()) {
        assert_eq!(*a, v.max(0.0));
        assert!((b - 1.0 / (1.0 + (-v).exp())).abs() < 1e-7);
    }
    let extreme = Tensor::<f32>::from_vec([1, 1, 1, 4], vec![-1e4, -90.0, 90.0, 1e4]).unwrap();
    assert!(sigmoid(&extreme).data().iter().all(|v| *v > 0.0 && *v < 1.0));
}

#[test]
fn upsample_replicates_by_index() {
    let x = Tensor::<f64>::random_uniform([2, 3, 3, 4], -1.0, 1.0, &mut rng(4));
    for f in [2, 3, 4] {
        let up = nearest_upsample(&x, f).unwrap();
        assert_eq!(up.shape().dims(), [2, 3, 3 * f, 4 * f]);
        for [b, c, y, xx] in index_space(up.shape().dims()) {
            assert_eq!(up.at(b, c, y, xx), x.at(b, c, y / f, xx / f));
        }
        // striding the output recovers the input
        let back = Tensor::from_fn(x.shape(), |[b, c, y, xx]| up.at(b, c, y * f + f - 1, xx * f));
        assert_eq!(back, x);
    }
    assert!(nearest_upsample(&x, 1).is_err());
}

#[test]
fn pixel_shuffle_follows_channel_major_cells() {
    let x = Tensor::<f64>::random_uniform([2, 8, 3, 3], -1.0, 1.0, &mut rng(5));
    let r = 2;
    let out = pixel_shuffle(&x, r).unwrap();
    assert_eq!(out.shape().dims(), [2, 2, 6, 6]);
    for [b, c, y, xx] in index_space(out.shape().dims()) {
        let (dy, dx) = (y % r, xx % r);
        assert_eq!(out.at(b, c, y, xx), x.at(b, c * r * r + dy * r + dx, y / r, xx / r));
    }
    assert!(pixel_shuffle(&Tensor::<f64>::zeros([1, 6, 2, 2]), 2).is_err());
}

fn index_space(dims: [usize; 4]) -> impl Iterator<Item = [usize; 4]> {
    let [b, c, h, w] = dims;
    (0..b).flat_map(move |i| (0..c).flat_map(move |j| (0..h).flat_map(move |y| (0..w).map(move |x| [i, j, y, x]))))
}

fn tensor_strategy(max_c: usize) -> impl Strategy<Value = Tensor<f64>> {
    (1..3usize, 1..=max_c, 1..5usize, 1..5usize).prop_flat_map(|(b, c, h, w)| {
        prop::collection::vec(-4.0f64..4.0, b * c * h * w)
            .prop_map(move |d| Tensor::from_vec([b, c, h, w], d).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conv_is_linear_without_bias(
        seed in any::<u64>(),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        size in prop::sample::select(vec![1usize, 3]),
    ) {
        let mut r = rng(seed);
        let x = Tensor::<f64>::random_uniform([2, 3, 4, 5], -1.0, 1.0, &mut r);
        let y = Tensor::<f64>::random_uniform([2, 3, 4, 5], -1.0, 1.0, &mut r);
        let k = ConvKernel::<f64>::he_uniform(4, 3, size, &mut r);
        let pad = size / 2;
        let lhs = conv2d(&x.scale(a).add(&y.scale(b)).unwrap(), &k, pad).unwrap();
        let rhs = conv2d(&x, &k, pad).unwrap().scale(a).add(&conv2d(&y, &k, pad).unwrap().scale(b)).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().max_abs() <= 1e-5 * lhs.max_abs().max(1.0));
    }

    #[test]
    fn concat_then_slice_is_identity(a in tensor_strategy(4), extra in 1..4usize, seed in any::<u64>()) {
        let s = a.shape();
        let b = Tensor::<f64>::random_uniform([s.batch, extra, s.height, s.width], -1.0, 1.0, &mut rng(seed));
        let cat = concat_channels(&a, &b).unwrap();
        prop_assert_eq!(cat.slice_channels(0, s.channels).unwrap(), a);
        prop_assert_eq!(cat.slice_channels(s.channels, s.channels + extra).unwrap(), b);
    }

    #[test]
    fn shuffle_and_inverse_compose_to_identity(seed in any::<u64>(), r in 2..4usize, c in 1..3usize, h in 1..4usize, w in 1..4usize) {
        let x = Tensor::<f64>::random_uniform([2, c * r * r, h, w], -1.0, 1.0, &mut rng(seed));
        let shuffled = pixel_shuffle(&x, r).unwrap();
        prop_assert_eq!(&space_to_depth(&shuffled, r).unwrap(), &x);
        prop_assert_eq!(pixel_shuffle(&space_to_depth(&shuffled, r).unwrap(), r).unwrap(), shuffled);
    }

    #[test]
    fn sigmoid_stays_open_unit_interval(x in tensor_strategy(3), k in 1.0f64..1e3) {
        let out = sigmoid(&x.scale(k));
        prop_assert!(out.data().iter().all(|v| *v > 0.0 && *v < 1.0));
    }
}
