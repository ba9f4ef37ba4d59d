//! Gradient checks for every differentiable op: analytic vs central
//! differences at 5 seeded random points, h = 1e-5, relative error < 1e-5.
//! Bilinear sampling is checked at coordinates at least 0.1 away from
//! integers (the weights are only piecewise smooth).

use eatkit_tensor::{concat, grad_check, Conv2dSpec, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-5;
const POINTS: u64 = 5;

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let numel = shape.iter().product();
    let data = (0..numel).map(|_| rng.gen_range(-1.5..1.5)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn check_at_seeds(
    name: &str,
    shape: &[usize],
    f: impl for<'a> Fn(&'a eatkit_tensor::Tape, eatkit_tensor::Var<'a>) -> eatkit_tensor::Result<eatkit_tensor::Var<'a>>,
) {
    for seed in 0..POINTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed * 7919 + 13);
        let x = random_tensor(shape, &mut rng);
        let report = grad_check(&f, &x, H).unwrap();
        assert!(
            report.passes(TOL),
            "{}: seed {} max rel err {:.3e} at coord {}",
            name,
            seed,
            report.max_rel_err,
            report.worst_coord
        );
    }
}

#[test]
fn add_mul_sub_grads() {
    check_at_seeds("add", &[2, 3], |tape, v| {
        let other = tape.constant(Tensor::full(vec![2, 3], 0.37));
        Ok(v.add(other)?.mul(v)?.sum())
    });
    check_at_seeds("sub_broadcast", &[2, 3], |tape, v| {
        let other = tape.constant(Tensor::from_slice(&[0.1, -0.2, 0.3]));
        Ok(v.sub(other)?.mul(v)?.sum())
    });
    check_at_seeds("mul_broadcast_scalar", &[4], |tape, v| {
        let s = tape.constant(Tensor::from_slice(&[1.7]));
        Ok(v.mul(s)?.mul(v)?.sum())
    });
}

#[test]
fn unary_grads() {
    check_at_seeds("gelu", &[2, 4], |_t, v| Ok(v.gelu().sum()));
    check_at_seeds("sigmoid", &[2, 4], |_t, v| Ok(v.sigmoid().mul(v)?.sum()));
    check_at_seeds("neg_scale", &[5], |_t, v| Ok(v.neg().scale(2.5).mul(v)?.sum()));
}

#[test]
fn matmul_grads() {
    check_at_seeds("matmul_lhs", &[3, 4], |tape, v| {
        let w = tape.constant(Tensor::new(vec![4, 2], (0..8).map(|i| 0.1 * i as f64 - 0.3).collect()).unwrap());
        Ok(v.matmul(w)?.mul(v.matmul(w)?)?.sum())
    });
    check_at_seeds("bmm_rhs", &[2, 3, 2], |tape, v| {
        let a = tape.constant(Tensor::new(vec![2, 2, 3], (0..12).map(|i| 0.2 * i as f64 - 1.0).collect()).unwrap());
        let prod = a.bmm(v)?;
        Ok(prod.mul(prod)?.sum())
    });
}

#[test]
fn linear_grads() {
    // gradient w.r.t. input, weight and bias all funnel through the same op;
    // check each by making it the watched tensor
    check_at_seeds("linear_input", &[2, 3], |tape, v| {
        let w = tape.constant(Tensor::new(vec![2, 3], vec![0.4, -0.2, 0.9, 0.1, 0.3, -0.5]).unwrap());
        let b = tape.constant(Tensor::from_slice(&[0.05, -0.02]));
        let y = v.linear(w, Some(b))?;
        Ok(y.mul(y)?.sum())
    });
    check_at_seeds("linear_weight", &[2, 3], |tape, v| {
        let x = tape.constant(Tensor::new(vec![4, 3], (0..12).map(|i| (i as f64).sin()).collect()).unwrap());
        let y = x.linear(v, None)?;
        Ok(y.mul(y)?.sum())
    });
    check_at_seeds("linear_bias", &[3], |tape, v| {
        let x = tape.constant(Tensor::new(vec![2, 2], vec![0.3, -0.6, 0.1, 0.8]).unwrap());
        let w = tape.constant(Tensor::new(vec![3, 2], (0..6).map(|i| 0.3 * i as f64 - 0.7).collect()).unwrap());
        let y = x.linear(w, Some(v))?;
        Ok(y.mul(y)?.sum())
    });
}

#[test]
fn conv2d_grads() {
    let spec = Conv2dSpec {
        stride: 1,
        padding: 1,
        dilation: 1,
        groups: 1,
    };
    check_at_seeds("conv2d_input", &[1, 2, 4, 4], move |tape, v| {
        let mut rng = ChaCha8Rng::seed_from_u64(999);
        let w = tape.constant(random_tensor(&[3, 2, 3, 3], &mut rng));
        let b = tape.constant(random_tensor(&[3], &mut rng));
        let y = v.conv2d(w, Some(b), spec)?;
        Ok(y.mul(y)?.sum())
    });
    check_at_seeds("conv2d_weight", &[2, 1, 3, 3], move |tape, v| {
        let mut rng = ChaCha8Rng::seed_from_u64(1000);
        let x = tape.constant(random_tensor(&[1, 1, 5, 5], &mut rng));
        let y = x.conv2d(v, None, spec)?;
        Ok(y.mul(y)?.sum())
    });
    // strided + dilated + grouped (depthwise)
    let dw = Conv2dSpec {
        stride: 2,
        padding: 2,
        dilation: 2,
        groups: 2,
    };
    check_at_seeds("conv2d_depthwise_strided", &[1, 2, 6, 6], move |tape, v| {
        let mut rng = ChaCha8Rng::seed_from_u64(1001);
        let w = tape.constant(random_tensor(&[2, 1, 3, 3], &mut rng));
        let y = v.conv2d(w, None, dw)?;
        Ok(y.mul(y)?.sum())
    });
}

#[test]
fn norm_grads() {
    check_at_seeds("layer_norm_input", &[2, 5], |tape, v| {
        let g = tape.constant(Tensor::from_slice(&[1.1, 0.9, 1.0, -0.4, 0.7]));
        let b = tape.constant(Tensor::from_slice(&[0.0, 0.1, -0.1, 0.2, 0.0]));
        let y = v.layer_norm(1, g, b, 1e-5)?;
        Ok(y.mul(y)?.sum())
    });
    check_at_seeds("layer_norm_gamma", &[3], |tape, v| {
        let x = tape.constant(Tensor::new(vec![2, 3], vec![0.3, 1.4, -0.9, 2.0, 0.1, 0.4]).unwrap());
        let b = tape.constant(Tensor::zeros(vec![3]));
        let y = x.layer_norm(1, v, b, 1e-5)?;
        Ok(y.mul(y)?.sum())
    });
    check_at_seeds("layer_norm_nchw_axis1", &[1, 3, 2, 2], |tape, v| {
        let g = tape.constant(Tensor::ones(vec![3]));
        let b = tape.constant(Tensor::zeros(vec![3]));
        let y = v.layer_norm(1, g, b, 1e-5)?;
        Ok(y.mul(y)?.sum())
    });
    check_at_seeds("softmax", &[2, 4], |_t, v| {
        let y = v.softmax(1)?;
        Ok(y.mul(y)?.sum())
    });
}

#[test]
fn reduction_and_loss_grads() {
    check_at_seeds("mean_pool_spatial", &[2, 3, 2, 2], |_t, v| {
        let y = v.mean_pool_spatial()?;
        Ok(y.mul(y)?.sum())
    });
    check_at_seeds("cross_entropy", &[3, 4], |_t, v| v.cross_entropy(&[0, 3, 1]));
}

#[test]
fn shape_op_grads() {
    check_at_seeds("concat_split", &[1, 4, 2, 2], |tape, v| {
        let parts = v.split(1, &[1, 3])?;
        let joined = concat(tape, &[parts[1], parts[0]], 1)?;
        Ok(joined.mul(joined)?.sum())
    });
    check_at_seeds("token_round_trip", &[2, 3, 2, 2], |_t, v| {
        let t = v.nchw_to_tokens()?;
        let y = t.tokens_to_nchw(2, 2)?;
        Ok(y.mul(y)?.sum())
    });
    check_at_seeds("swap_axes", &[2, 3, 4], |_t, v| {
        let y = v.swap_axes(0, 2)?;
        Ok(y.mul(y)?.sum())
    });
    check_at_seeds("reshape", &[2, 6], |_t, v| {
        let y = v.reshape(vec![3, 4])?;
        Ok(y.mul(y)?.sum())
    });
}

#[test]
fn bilinear_sample_grads_away_from_grid_points() {
    // map gradient
    check_at_seeds("bilinear_map", &[2, 3, 3], |tape, v| {
        let y = tape.constant(Tensor::from_slice(&[0.63]));
        let x = tape.constant(Tensor::from_slice(&[1.37]));
        let s = v.bilinear_sample(y, x)?;
        Ok(s.mul(s)?.sum())
    });
    // coordinate gradients, offsets >= 0.1 from integers
    for seed in 0..POINTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 71);
        let map = random_tensor(&[2, 4, 4], &mut rng);
        let frac = |r: &mut ChaCha8Rng| {
            let cell = r.gen_range(0..3) as f64;
            cell + r.gen_range(0.1..0.9)
        };
        let coord = Tensor::from_slice(&[frac(&mut rng), frac(&mut rng)]);
        let map_c = map.clone();
        let report = grad_check(
            move |tape, v| {
                let parts = v.split(0, &[1, 1])?;
                let m = tape.constant(map_c.clone());
                let s = m.bilinear_sample(parts[0], parts[1])?;
                Ok(s.mul(s)?.sum())
            },
            &coord,
            H,
        )
        .unwrap();
        assert!(
            report.passes(TOL),
            "bilinear coords: seed {} err {:.3e}",
            seed,
            report.max_rel_err
        );
    }
}

#[test]
fn deform_sample_grads() {
    check_at_seeds("deform_map", &[1, 2, 3, 3], |tape, v| {
        let mut offs = Vec::new();
        for i in 0..9 {
            offs.push(0.13 + 0.05 * (i as f64 % 3.0));
            offs.push(-0.27 + 0.04 * (i as f64 % 2.0));
        }
        let off = tape.constant(Tensor::new(vec![1, 9, 2], offs).unwrap());
        let y = v.deform_sample(off)?;
        Ok(y.mul(y)?.sum())
    });
    // offset gradients, kept off the integer lattice
    for seed in 0..POINTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 301);
        let map = random_tensor(&[1, 2, 3, 3], &mut rng);
        let offs: Vec<f64> = (0..18)
            .map(|_| {
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                sign * rng.gen_range(0.1..0.9)
            })
            .collect();
        let off = Tensor::new(vec![1, 9, 2], offs).unwrap();
        let map_c = map.clone();
        let report = grad_check(
            move |tape, v| {
                let m = tape.constant(map_c.clone());
                let y = m.deform_sample(v)?;
                Ok(y.mul(y)?.sum())
            },
            &off,
            H,
        )
        .unwrap();
        assert!(
            report.passes(TOL),
            "deform offsets: seed {} err {:.3e}",
            seed,
            report.max_rel_err
        );
    }
}
