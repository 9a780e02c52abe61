use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{check_function_gradients, finite_diff_gradient, DEFAULT_EPS, DEFAULT_TOL};
use super::Tensor;
use crate::error::Result;

fn t64(shape: &[usize], values: &[f64]) -> Tensor<f64> {
    Tensor::from_f64s(shape, values).unwrap()
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    t64(shape, &data)
}

/// Independent triple-loop oracle for the matrix product.
fn matmul_oracle(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for kk in 0..k {
                out[i * n + j] += a[i * k + kk] * b[kk * n + j];
            }
        }
    }
    out
}

/// Independent sliding-window oracle for stride-1 cross-correlation.
#[allow(clippy::too_many_arguments)]
fn conv_oracle(
    x: &[f64],
    w: &[f64],
    b: &[f64],
    (n, ci, h, wd): (usize, usize, usize, usize),
    (co, kh, kw): (usize, usize, usize),
    (ph, pw): (usize, usize),
) -> Vec<f64> {
    let ho = h + 2 * ph - kh + 1;
    let wo = wd + 2 * pw - kw + 1;
    let mut out = vec![0.0; n * co * ho * wo];
    for nn in 0..n {
        for c in 0..co {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b[c];
                    for cc in 0..ci {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = oy + ky;
                                let ix = ox + kx;
                                if iy >= ph && ix >= pw && iy - ph < h && ix - pw < wd {
                                    acc += w[((c * ci + cc) * kh + ky) * kw + kx]
                                        * x[((nn * ci + cc) * h + (iy - ph)) * wd + (ix - pw)];
                                }
                            }
                        }
                    }
                    out[((nn * co + c) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    out
}

#[test]
fn matmul_identity() {
    let eye = t64(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
    let a = t64(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
    let out = eye.matmul(&a).unwrap();
    assert_eq!(out.data(), a.data());
}

#[test]
fn matmul_annihilator() {
    let z = Tensor::<f64>::zeros(&[2, 3]);
    let ones = Tensor::<f64>::full(&[3, 2], 1.0);
    let out = z.matmul(&ones).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.0));
    assert_eq!(out.shape(), &[2, 2]);
}

#[test]
fn matmul_matches_triple_loop_oracle() {
    let a = [1.0, 2.0, 3.0, 4.0];
    let b = [5.0, 6.0];
    let expect = matmul_oracle(&a, &b, 2, 2, 1);
    assert_eq!(expect, vec![17.0, 39.0]);
    let out = t64(&[2, 2], &a).matmul(&t64(&[2, 1], &b)).unwrap();
    assert_eq!(out.data(), &expect[..]);
}

#[test]
fn matmul_shape_mismatch() {
    let a = Tensor::<f64>::zeros(&[2, 3]);
    let b = Tensor::<f64>::zeros(&[2, 3]);
    assert!(a.matmul(&b).is_err());
}

#[test]
fn softmax_uniform_logits() {
    let out = t64(&[3], &[0.0, 0.0, 0.0]).softmax_rows().unwrap();
    for &v in out.data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }
}

#[test]
fn softmax_closed_form() {
    let out = t64(&[2], &[0.0, 3.0f64.ln()]).softmax_rows().unwrap();
    assert!((out.data()[0] - 0.25).abs() < 1e-12);
    assert!((out.data()[1] - 0.75).abs() < 1e-12);
}

#[test]
fn softmax_shift_invariance() {
    let a = t64(&[2], &[1.0, 2.0]).softmax_rows().unwrap();
    let b = t64(&[2], &[101.0, 102.0]).softmax_rows().unwrap();
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - y).abs() < 1e-6);
    }
}

#[test]
fn conv_identity_kernel() {
    let x = t64(&[1, 2, 2, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
    let w = t64(&[2, 2, 1, 1], &[1.0, 0.0, 0.0, 1.0]);
    let b = Tensor::<f64>::zeros(&[2]);
    let out = x.conv2d(&w, &b, (0, 0)).unwrap();
    assert_eq!(out.data(), x.data());
}

#[test]
fn conv_ones_kernel_matches_window_oracle() {
    let x = Tensor::<f64>::full(&[1, 1, 4, 4], 1.0);
    let w = Tensor::<f64>::full(&[1, 1, 3, 3], 1.0);
    let b = Tensor::<f64>::zeros(&[1]);
    let out = x.conv2d(&w, &b, (1, 1)).unwrap();
    let expect = conv_oracle(x.data(), w.data(), b.data(), (1, 1, 4, 4), (1, 3, 3), (1, 1));
    assert_eq!(out.data(), &expect[..]);
    // Interior pixels see the full window.
    assert_eq!(out.data()[5], 9.0);
    assert_eq!(out.data()[0], 4.0);
}

#[test]
fn conv_random_matches_window_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = rand_tensor(&mut rng, &[2, 3, 5, 4]);
    let w = rand_tensor(&mut rng, &[4, 3, 3, 3]);
    let b = rand_tensor(&mut rng, &[4]);
    let out = x.conv2d(&w, &b, (1, 1)).unwrap();
    let expect = conv_oracle(x.data(), w.data(), b.data(), (2, 3, 5, 4), (4, 3, 3), (1, 1));
    for (o, e) in out.data().iter().zip(&expect) {
        assert!((o - e).abs() < 1e-12);
    }
}

#[test]
fn conv_zero_weights_pass_bias_through() {
    let x = t64(&[1, 1, 2, 2], &[5.0, 6.0, 7.0, 8.0]);
    let w = Tensor::<f64>::zeros(&[3, 1, 1, 1]);
    let b = t64(&[3], &[0.5, -1.0, 2.0]);
    let out = x.conv2d(&w, &b, (0, 0)).unwrap();
    for c in 0..3 {
        for p in 0..4 {
            assert_eq!(out.data()[c * 4 + p], b.data()[c]);
        }
    }
}

#[test]
fn conv_channel_mismatch() {
    let x = Tensor::<f64>::zeros(&[1, 2, 4, 4]);
    let w = Tensor::<f64>::zeros(&[1, 3, 3, 3]);
    let b = Tensor::<f64>::zeros(&[1]);
    assert!(x.conv2d(&w, &b, (1, 1)).is_err());
}

#[test]
fn sigmoid_symmetry_point() {
    let out = t64(&[1], &[0.0]).sigmoid().unwrap();
    assert_eq!(out.data()[0], 0.5);
}

#[test]
fn add_zeros_is_identity() {
    let x = t64(&[2, 2], &[1.0, -2.0, 3.5, 0.0]);
    let out = x.add(&Tensor::zeros(&[2, 2])).unwrap();
    assert_eq!(out.data(), x.data());
}

#[test]
fn relu_clamps_negative() {
    let out = t64(&[1], &[-2.5]).relu().unwrap();
    assert_eq!(out.data()[0], 0.0);
}

#[test]
fn rejects_general_broadcast() {
    let a = Tensor::<f64>::zeros(&[2, 3, 4, 5]);
    let b = Tensor::<f64>::zeros(&[3, 1, 5]);
    assert!(a.add(&b).is_err());
    let c = Tensor::<f64>::zeros(&[4, 5]);
    assert!(a.mul(&c).is_err());
}

#[test]
fn global_avg_over_ones() {
    let out = Tensor::<f64>::full(&[1, 2, 3, 3], 1.0).global_avg_pool().unwrap();
    assert_eq!(out.data(), &[1.0, 1.0]);
}

#[test]
fn global_max_extremum() {
    let out = t64(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]).global_max_pool().unwrap();
    assert_eq!(out.data()[0], 4.0);
}

#[test]
fn global_avg_closed_form() {
    let out = t64(&[1, 1, 2, 2], &[1.0, 3.0, 5.0, 7.0]).global_avg_pool().unwrap();
    assert_eq!(out.data()[0], 4.0);
}

#[test]
fn global_max_tie_routes_gradient_to_first_index() {
    let x = Tensor::param(&[1, 1, 2, 2], vec![2.0, 2.0, 1.0, 2.0]).unwrap();
    let out = x.global_max_pool().unwrap();
    out.sum_all().unwrap().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn concat_channel_shapes() {
    let a = Tensor::<f64>::zeros(&[2, 3, 4, 4]);
    let b = Tensor::<f64>::zeros(&[2, 5, 4, 4]);
    let out = Tensor::concat_channels(&[a, b]).unwrap();
    assert_eq!(out.shape(), &[2, 8, 4, 4]);
}

#[test]
fn concat_single_part_is_identity() {
    let a = t64(&[1, 2, 1, 2], &[1.0, 2.0, 3.0, 4.0]);
    let out = Tensor::concat_channels(&[a.clone()]).unwrap();
    assert_eq!(out.data(), a.data());
}

#[test]
fn concat_spatial_mismatch() {
    let a = Tensor::<f64>::zeros(&[1, 2, 4, 4]);
    let b = Tensor::<f64>::zeros(&[1, 2, 3, 4]);
    assert!(Tensor::concat_channels(&[a, b]).is_err());
}

#[test]
fn reshape_preserves_row_major_order() {
    let x = t64(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let out = x.reshape(&[3, 2]).unwrap();
    assert_eq!(out.data(), x.data());
    assert_eq!(out.shape(), &[3, 2]);
}

#[test]
fn permute_then_inverse_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = rand_tensor(&mut rng, &[2, 3, 4]);
    let p = x.permute(&[2, 0, 1]).unwrap();
    // Inverse of [2,0,1] is [1,2,0].
    let back = p.permute(&[1, 2, 0]).unwrap();
    assert!(x.data().iter().zip(back.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn flatten_keeps_instance_rows_contiguous() {
    let x = t64(&[2, 1, 1, 2], &[1.0, 2.0, 3.0, 4.0]);
    let out = x.reshape(&[2, 2]).unwrap();
    assert_eq!(&out.data()[0..2], &[1.0, 2.0]);
    assert_eq!(&out.data()[2..4], &[3.0, 4.0]);
}

#[test]
fn backward_of_sum_of_squares() {
    let x = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
    let loss = x.square().unwrap().sum_all().unwrap();
    loss.backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![2.0, 4.0]);
}

#[test]
fn backward_matmul_chain_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = rand_tensor(&mut rng, &[3, 4]).into_param();
    let b = rand_tensor(&mut rng, &[4, 2]);
    let c = rand_tensor(&mut rng, &[2, 3]);
    let loss = a.matmul(&b).unwrap().matmul(&c).unwrap().sum_all().unwrap();
    loss.backward().unwrap();
    let analytic = a.grad().unwrap();
    let fd = finite_diff_gradient(
        |x| x.matmul(&b)?.matmul(&c)?.sum_all(),
        &a.detach(),
        DEFAULT_EPS,
    )
    .unwrap();
    let max = super::gradcheck::max_grad_error(&analytic, fd.data());
    assert!(max < DEFAULT_TOL, "max rel err {max}");
}

#[test]
fn detached_tensor_receives_no_grad() {
    let x = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
    let d = x.detach();
    let loss = d.square().unwrap().sum_all().unwrap();
    loss.backward().unwrap();
    assert!(x.grad().is_none());
    assert!(d.grad().is_none());
}

#[test]
fn repeated_backward_accumulates() {
    let x = Tensor::param(&[1], vec![3.0]).unwrap();
    let loss = x.square().unwrap().sum_all().unwrap();
    loss.backward().unwrap();
    loss.backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![12.0]);
    x.clear_grad();
    loss.backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![6.0]);
}

#[test]
fn backward_on_non_scalar_is_usage_error() {
    let x = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
    let y = x.square().unwrap();
    assert!(y.backward().is_err());
}

#[test]
fn nan_literal_rejected() {
    assert!(Tensor::<f64>::from_vec(&[1], vec![f64::NAN]).is_err());
    assert!(Tensor::<f64>::from_vec(&[1], vec![f64::INFINITY]).is_err());
}

#[test]
fn ln_of_negative_is_numeric_error() {
    let x = t64(&[1], &[-1.0]);
    assert!(x.ln().is_err());
}

#[test]
fn zero_extent_shapes_rejected() {
    assert!(Tensor::<f64>::from_vec(&[0, 3], vec![]).is_err());
}

/// Every differentiable op agrees with the finite-difference oracle.
#[test]
fn all_ops_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);

    let named = |ts: Vec<Tensor<f64>>| -> Vec<(String, Tensor<f64>)> {
        ts.into_iter().enumerate().map(|(i, t)| (format!("in{i}"), t)).collect()
    };
    let weighted = |t: &Tensor<f64>| -> Result<Tensor<f64>> {
        // Fixed projection so every output element influences the loss.
        let w: Vec<f64> = (0..t.numel()).map(|j| 0.4 + (j as f64 * 1.7).sin()).collect();
        t.mul(&Tensor::from_f64s(t.shape(), &w)?)?.sum_all()
    };
    let assert_pass = |rows: Vec<super::gradcheck::GradCheckRow>, what: &str| {
        for r in rows {
            assert!(r.pass, "{what}/{}: max err {}", r.name, r.max_err);
        }
    };

    // Binary ops across every accepted broadcast pattern.
    let patterns: Vec<(Vec<usize>, Vec<usize>)> = vec![
        (vec![2, 3], vec![2, 3]),
        (vec![2, 3], vec![1]),
        (vec![2, 3], vec![3]),
        (vec![2, 3, 2, 2], vec![2, 3]),
        (vec![2, 3, 2, 2], vec![2, 1, 2, 2]),
    ];
    for (sa, sb) in &patterns {
        let a = rand_tensor(&mut rng, sa);
        let b = rand_tensor(&mut rng, sb);
        let rows = check_function_gradients(
            &named(vec![a.clone(), b.clone()]),
            |ts| weighted(&ts[0].add(&ts[1])?),
            DEFAULT_EPS,
            DEFAULT_TOL,
        )
        .unwrap();
        assert_pass(rows, "add");
        let rows = check_function_gradients(
            &named(vec![a, b]),
            |ts| weighted(&ts[0].mul(&ts[1])?),
            DEFAULT_EPS,
            DEFAULT_TOL,
        )
        .unwrap();
        assert_pass(rows, "mul");
    }

    // Unary ops. ln gets positive inputs; relu/clamp inputs keep a margin
    // from their kinks so central differences see one smooth branch.
    let x = rand_tensor(&mut rng, &[2, 5]);
    let cases: Vec<(&str, Box<dyn Fn(&Tensor<f64>) -> Result<Tensor<f64>>>)> = vec![
        ("scale", Box::new(|t: &Tensor<f64>| t.scale(-1.7))),
        ("add_scalar", Box::new(|t: &Tensor<f64>| t.add_scalar(0.9))),
        ("sigmoid", Box::new(|t: &Tensor<f64>| t.sigmoid())),
        ("square", Box::new(|t: &Tensor<f64>| t.square())),
    ];
    for (what, op) in &cases {
        let rows = check_function_gradients(
            &named(vec![x.clone()]),
            |ts| weighted(&op(&ts[0])?),
            DEFAULT_EPS,
            DEFAULT_TOL,
        )
        .unwrap();
        assert_pass(rows, what);
    }
    let pos: Vec<f64> = (0..6).map(|_| rng.gen_range(0.2..2.0)).collect();
    let rows = check_function_gradients(
        &named(vec![t64(&[6], &pos)]),
        |ts| weighted(&ts[0].ln()?),
        DEFAULT_EPS,
        DEFAULT_TOL,
    )
    .unwrap();
    assert_pass(rows, "ln");
    let off_kink: Vec<f64> =
        (0..8).map(|_| rng.gen_range(0.01..0.9) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
    let rows = check_function_gradients(
        &named(vec![t64(&[8], &off_kink)]),
        |ts| weighted(&ts[0].relu()?),
        DEFAULT_EPS,
        DEFAULT_TOL,
    )
    .unwrap();
    assert_pass(rows, "relu");
    let rows = check_function_gradients(
        &named(vec![t64(&[8], &off_kink)]),
        |ts| weighted(&ts[0].clamp(-0.5, 0.5)?),
        DEFAULT_EPS,
        DEFAULT_TOL,
    )
    .unwrap();
    assert_pass(rows, "clamp");

    // Matrix products.
    let a = rand_tensor(&mut rng, &[3, 4]);
    let b = rand_tensor(&mut rng, &[4, 2]);
    let rows = check_function_gradients(
        &named(vec![a, b]),
        |ts| weighted(&ts[0].matmul(&ts[1])?),
        DEFAULT_EPS,
        DEFAULT_TOL,
    )
    .unwrap();
    assert_pass(rows, "matmul");
    let a = rand_tensor(&mut rng, &[2, 3, 4]);
    let b = rand_tensor(&mut rng, &[2, 4, 2]);
    let rows = check_function_gradients(
        &named(vec![a, b]),
        |ts| weighted(&ts[0].bmm(&ts[1])?),
        DEFAULT_EPS,
        DEFAULT_TOL,
    )
    .unwrap();
    assert_pass(rows, "bmm");

    // Convolution, padded and strided.
    let x = rand_tensor(&mut rng, &[2, 2, 5, 5]);
    let w = rand_tensor(&mut rng, &[3, 2, 3, 3]);
    let bias = rand_tensor(&mut rng, &[3]);
    for stride in [(1usize, 1usize), (2, 2)] {
        let rows = check_function_gradients(
            &named(vec![x.clone(), w.clone(), bias.clone()]),
            |ts| weighted(&ts[0].conv2d_strided(&ts[1], &ts[2], (1, 1), stride)?),
            DEFAULT_EPS,
            DEFAULT_TOL,
        )
        .unwrap();
        assert_pass(rows, "conv2d");
    }

    // Softmax, pools, channel reductions.
    let x = rand_tensor(&mut rng, &[2, 3, 4]);
    let rows = check_function_gradients(
        &named(vec![x]),
        |ts| weighted(&ts[0].softmax_rows()?),
        DEFAULT_EPS,
        DEFAULT_TOL,
    )
    .unwrap();
    assert_pass(rows, "softmax_rows");
    let x = rand_tensor(&mut rng, &[2, 3, 3, 3]);
    for (what, op) in [
        ("global_avg_pool", (|t: &Tensor<f64>| t.global_avg_pool()) as fn(&Tensor<f64>) -> Result<Tensor<f64>>),
        ("global_max_pool", |t| t.global_max_pool()),
        ("channel_mean", |t| t.channel_mean()),
        ("channel_max", |t| t.channel_max()),
    ] {
        let rows = check_function_gradients(
            &named(vec![x.clone()]),
            |ts| weighted(&op(&ts[0])?),
            DEFAULT_EPS,
            DEFAULT_TOL,
        )
        .unwrap();
        assert_pass(rows, what);
    }

    // Layout ops and reductions.
    let a = rand_tensor(&mut rng, &[2, 2, 2, 2]);
    let b = rand_tensor(&mut rng, &[2, 3, 2, 2]);
    let rows = check_function_gradients(
        &named(vec![a.clone(), b.clone()]),
        |ts| weighted(&Tensor::concat_channels(&[ts[0].clone(), ts[1].clone()])?),
        DEFAULT_EPS,
        DEFAULT_TOL,
    )
    .unwrap();
    assert_pass(rows, "concat");
    let rows = check_function_gradients(
        &named(vec![b.clone()]),
        |ts| weighted(&ts[0].reshape(&[2, 12])?),
        DEFAULT_EPS,
        DEFAULT_TOL,
    )
    .unwrap();
    assert_pass(rows, "reshape");
    let rows = check_function_gradients(
        &named(vec![b.clone()]),
        |ts| weighted(&ts[0].permute(&[2, 0, 3, 1])?),
        DEFAULT_EPS,
        DEFAULT_TOL,
    )
    .unwrap();
    assert_pass(rows, "permute");
    let rows =
        check_function_gradients(&named(vec![b.clone()]), |ts| ts[0].sum_all(), DEFAULT_EPS, DEFAULT_TOL)
            .unwrap();
    assert_pass(rows, "sum_all");
    let rows =
        check_function_gradients(&named(vec![b]), |ts| ts[0].mean_all(), DEFAULT_EPS, DEFAULT_TOL).unwrap();
    assert_pass(rows, "mean_all");
}

#[test]
fn ops_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = rand_tensor(&mut rng, &[2, 3, 4, 4]);
    let w = rand_tensor(&mut rng, &[2, 3, 3, 3]);
    let b = rand_tensor(&mut rng, &[2]);
    let once = x.conv2d(&w, &b, (1, 1)).unwrap();
    let twice = x.conv2d(&w, &b, (1, 1)).unwrap();
    assert!(once.data().iter().zip(twice.data()).all(|(a, c)| a.to_bits() == c.to_bits()));
}

proptest! {
    #[test]
    fn softmax_rows_are_stochastic_and_shift_invariant(
        rows in 1usize..5,
        cols in 1usize..7,
        seed in 0u64..1000,
        shift in -50.0f64..50.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_tensor(&mut rng, &[rows, cols]);
        let y = x.softmax_rows().unwrap();
        for r in 0..rows {
            let sum: f64 = y.data()[r * cols..(r + 1) * cols].iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
        }
        let shifted = x.add_scalar(shift).unwrap().softmax_rows().unwrap();
        for (a, b) in y.data().iter().zip(shifted.data()) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn permute_roundtrip_is_bit_exact(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_tensor(&mut rng, &[3, 2, 4]);
        let axes = [1usize, 2, 0];
        let mut inverse = [0usize; 3];
        for (i, &ax) in axes.iter().enumerate() { inverse[ax] = i; }
        let back = x.permute(&axes).unwrap().permute(&inverse).unwrap();
        prop_assert!(x.data().iter().zip(back.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn reshape_roundtrip_is_bit_exact(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_tensor(&mut rng, &[2, 3, 4]);
        let back = x.reshape(&[4, 6]).unwrap().reshape(&[2, 3, 4]).unwrap();
        prop_assert!(x.data().iter().zip(back.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn split_then_concat_roundtrips(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_tensor(&mut rng, &[2, 2, 3, 3]);
        let b = rand_tensor(&mut rng, &[2, 4, 3, 3]);
        let joined = Tensor::concat_channels(&[a.clone(), b.clone()]).unwrap();
        // Splitting is the concat gradient path; exercise it through backward.
        let pa = a.detach().into_param();
        let pb = b.detach().into_param();
        let j2 = Tensor::concat_channels(&[pa.clone(), pb.clone()]).unwrap();
        prop_assert!(joined.data().iter().zip(j2.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        j2.mul(&joined).unwrap().sum_all().unwrap().backward().unwrap();
        prop_assert_eq!(pa.grad().unwrap(), a.data().to_vec());
        prop_assert_eq!(pb.grad().unwrap(), b.data().to_vec());
    }
}
