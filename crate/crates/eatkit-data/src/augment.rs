//! Train-time augmentation: horizontal flip, small rotation, central zoom.
//! Each transform fires with probability 0.5, in that fixed order. Rotation
//! and zoom resample bilinearly with zero fill outside the source, and never
//! change the image shape.

use eatkit_tensor::{sample_plane, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct AugmentConfig {
    /// rotation angle drawn from U(-max_rotate_deg, +max_rotate_deg)
    pub max_rotate_deg: f64,
    /// zoom scale drawn from U(zoom_min, zoom_max)
    pub zoom_min: f64,
    pub zoom_max: f64,
    /// per-transform firing probability
    pub prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            max_rotate_deg: 15.0,
            zoom_min: 0.9,
            zoom_max: 1.1,
            prob: 0.5,
        }
    }
}

/// The sampled decisions for one image. Tests can force plans directly.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AugmentPlan {
    pub hflip: bool,
    /// counterclockwise degrees (y-down image coordinates)
    pub rotate_deg: Option<f64>,
    pub zoom: Option<f64>,
}

impl AugmentPlan {
    pub fn sample(rng: &mut ChaCha8Rng, cfg: &AugmentConfig) -> Self {
        let hflip = rng.gen_bool(cfg.prob);
        let rotate = rng
            .gen_bool(cfg.prob)
            .then(|| rng.gen_range(-cfg.max_rotate_deg..=cfg.max_rotate_deg));
        let zoom = rng
            .gen_bool(cfg.prob)
            .then(|| rng.gen_range(cfg.zoom_min..=cfg.zoom_max));
        AugmentPlan {
            hflip,
            rotate_deg: rotate,
            zoom,
        }
    }

    pub fn is_identity(&self) -> bool {
        !self.hflip && self.rotate_deg.is_none() && self.zoom.is_none()
    }
}

/// Apply a sampled plan to a (C, H, W) image.
pub fn apply_plan(image: &Tensor, plan: &AugmentPlan) -> Tensor {
    let mut out = image.clone();
    if plan.hflip {
        out = hflip(&out);
    }
    if let Some(deg) = plan.rotate_deg {
        out = rotate(&out, deg);
    }
    if let Some(scale) = plan.zoom {
        out = zoom(&out, scale);
    }
    out
}

/// Sample a plan from `rng` and apply it.
pub fn augment(image: &Tensor, rng: &mut ChaCha8Rng, cfg: &AugmentConfig) -> Tensor {
    apply_plan(image, &AugmentPlan::sample(rng, cfg))
}

fn dims(image: &Tensor) -> (usize, usize, usize) {
    let s = image.shape();
    debug_assert_eq!(s.len(), 3, "expected (C, H, W), got {:?}", s);
    (s[0], s[1], s[2])
}

pub fn hflip(image: &Tensor) -> Tensor {
    let (c, h, w) = dims(image);
    let src = image.data();
    let mut out = vec![0.0; src.len()];
    for ci in 0..c {
        for y in 0..h {
            let row = (ci * h + y) * w;
            for x in 0..w {
                out[row + x] = src[row + (w - 1 - x)];
            }
        }
    }
    Tensor::new(image.shape().to_vec(), out).expect("hflip")
}

/// Resample through the inverse rotation around the image centre. Positive
/// angles rotate content counterclockwise on screen.
pub fn rotate(image: &Tensor, degrees: f64) -> Tensor {
    let (c, h, w) = dims(image);
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    resample(image, c, h, w, |y, x| {
        let (dy, dx) = (y - cy, x - cx);
        (cy + cos * dy + sin * dx, cx - sin * dy + cos * dx)
    })
}

/// Central zoom: scale > 1 magnifies, scale < 1 shrinks with a zero border.
pub fn zoom(image: &Tensor, scale: f64) -> Tensor {
    let (c, h, w) = dims(image);
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    resample(image, c, h, w, |y, x| {
        (cy + (y - cy) / scale, cx + (x - cx) / scale)
    })
}

/// Bilinear resize to (target_h, target_w), half-pixel-centre convention
/// with clamped source coordinates.
pub fn resize(image: &Tensor, target_h: usize, target_w: usize) -> Tensor {
    let (c, h, w) = dims(image);
    if h == target_h && w == target_w {
        return image.clone();
    }
    let sy = h as f64 / target_h as f64;
    let sx = w as f64 / target_w as f64;
    let src = image.data();
    let mut out = vec![0.0; c * target_h * target_w];
    for ci in 0..c {
        let plane = &src[ci * h * w..(ci + 1) * h * w];
        for y in 0..target_h {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, h as f64 - 1.0);
            for x in 0..target_w {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, w as f64 - 1.0);
                out[(ci * target_h + y) * target_w + x] = sample_plane(plane, h, w, fy, fx).0;
            }
        }
    }
    Tensor::new(vec![c, target_h, target_w], out).expect("resize")
}

fn resample(
    image: &Tensor,
    c: usize,
    h: usize,
    w: usize,
    inverse_map: impl Fn(f64, f64) -> (f64, f64),
) -> Tensor {
    let src = image.data();
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = inverse_map(y as f64, x as f64);
            for ci in 0..c {
                let plane = &src[ci * h * w..(ci + 1) * h * w];
                out[(ci * h + y) * w + x] = sample_plane(plane, h, w, sy, sx).0;
            }
        }
    }
    Tensor::new(image.shape().to_vec(), out).expect("resample")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn marker_3x3() -> Tensor {
        // asymmetric marker, one channel
        Tensor::new(
            vec![1, 3, 3],
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
        )
        .unwrap()
    }

    #[test]
    fn identity_plan_is_identity() {
        let img = marker_3x3();
        let plan = AugmentPlan::default();
        assert!(plan.is_identity());
        assert_eq!(apply_plan(&img, &plan), img);
    }

    #[test]
    fn hflip_is_an_involution() {
        let img = marker_3x3();
        let plan = AugmentPlan {
            hflip: true,
            ..Default::default()
        };
        let once = apply_plan(&img, &plan);
        assert_eq!(once.at(&[0, 0, 0]), 3.0);
        assert_eq!(apply_plan(&once, &plan), img);
    }

    #[test]
    fn forced_quarter_turn_matches_hand_rotation() {
        // +90 deg counterclockwise (y-down coordinates): the output at (y, x)
        // reads the source at (cy + dx, cx - dy). By hand for the marker:
        //   out[0][0] <- src[1 + (0-1)][1 - (0-1)] = src[0][2] = 3
        //   out[0][2] <- src[1 + (2-1)][1 - (0-1)] = src[2][2] = 9
        //   out[2][0] <- src[0][0] = 1, out[2][2] <- src[2][0] = 7
        //   centre stays 5
        let img = marker_3x3();
        let out = rotate(&img, 90.0);
        let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
        assert!(close(out.at(&[0, 0, 0]), 3.0), "{}", out.at(&[0, 0, 0]));
        assert!(close(out.at(&[0, 0, 2]), 9.0));
        assert!(close(out.at(&[0, 2, 0]), 1.0));
        assert!(close(out.at(&[0, 2, 2]), 7.0));
        assert!(close(out.at(&[0, 1, 1]), 5.0));
    }

    #[test]
    fn transforms_preserve_shape() {
        let img = Tensor::zeros(vec![3, 8, 6]);
        for plan in [
            AugmentPlan { hflip: true, rotate_deg: Some(13.0), zoom: Some(0.93) },
            AugmentPlan { hflip: false, rotate_deg: Some(-7.5), zoom: None },
        ] {
            assert_eq!(apply_plan(&img, &plan).shape(), img.shape());
        }
    }

    #[test]
    fn resize_preserves_constant_images() {
        let img = Tensor::full(vec![3, 10, 10], 0.42);
        let out = resize(&img, 6, 14);
        assert_eq!(out.shape(), &[3, 6, 14]);
        for &v in out.data() {
            assert!((v - 0.42).abs() < 1e-12);
        }
    }

    #[test]
    fn sampled_plans_are_deterministic_in_seed() {
        use rand::SeedableRng;
        let cfg = AugmentConfig::default();
        let a = AugmentPlan::sample(&mut ChaCha8Rng::seed_from_u64(11), &cfg);
        let b = AugmentPlan::sample(&mut ChaCha8Rng::seed_from_u64(11), &cfg);
        assert_eq!(a, b);
    }
}
