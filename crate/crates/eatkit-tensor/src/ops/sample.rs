//! Bilinear interpolation with zero padding outside the grid, differentiable
//! in both the sampled map and the sampling coordinates.
//!
//! The sampling cell is chosen with `floor`, so at integer coordinates the
//! coordinate gradient is the right-limit of the piecewise-linear weights.

use crate::error::{Result, TensorError};
use crate::tape::Var;
use crate::tensor::Tensor;

/// The four corner taps of one bilinear read.
#[derive(Clone, Copy, Debug)]
pub struct BilinearTaps {
    pub y0: i64,
    pub x0: i64,
    /// fractional offsets inside the cell
    pub fy: f64,
    pub fx: f64,
}

impl BilinearTaps {
    pub fn at(y: f64, x: f64) -> Self {
        let y0 = y.floor();
        let x0 = x.floor();
        BilinearTaps {
            y0: y0 as i64,
            x0: x0 as i64,
            fy: y - y0,
            fx: x - x0,
        }
    }

    /// Corner weights in (y0x0, y0x1, y1x0, y1x1) order.
    pub fn weights(&self) -> [f64; 4] {
        [
            (1.0 - self.fy) * (1.0 - self.fx),
            (1.0 - self.fy) * self.fx,
            self.fy * (1.0 - self.fx),
            self.fy * self.fx,
        ]
    }

    /// Corner coordinates in the same order as `weights`.
    pub fn corners(&self) -> [(i64, i64); 4] {
        [
            (self.y0, self.x0),
            (self.y0, self.x0 + 1),
            (self.y0 + 1, self.x0),
            (self.y0 + 1, self.x0 + 1),
        ]
    }
}

#[inline]
fn read_or_zero(plane: &[f64], h: usize, w: usize, y: i64, x: i64) -> f64 {
    if y < 0 || x < 0 || y >= h as i64 || x >= w as i64 {
        0.0
    } else {
        plane[y as usize * w + x as usize]
    }
}

/// Sample one channel plane at (y, x). Returns (value, d/dy, d/dx).
pub fn sample_plane(plane: &[f64], h: usize, w: usize, y: f64, x: f64) -> (f64, f64, f64) {
    let taps = BilinearTaps::at(y, x);
    let v00 = read_or_zero(plane, h, w, taps.y0, taps.x0);
    let v01 = read_or_zero(plane, h, w, taps.y0, taps.x0 + 1);
    let v10 = read_or_zero(plane, h, w, taps.y0 + 1, taps.x0);
    let v11 = read_or_zero(plane, h, w, taps.y0 + 1, taps.x0 + 1);
    let (fy, fx) = (taps.fy, taps.fx);
    let value = v00 * (1.0 - fy) * (1.0 - fx)
        + v01 * (1.0 - fy) * fx
        + v10 * fy * (1.0 - fx)
        + v11 * fy * fx;
    let dy = (v10 - v00) * (1.0 - fx) + (v11 - v01) * fx;
    let dx = (v01 - v00) * (1.0 - fy) + (v11 - v10) * fy;
    (value, dy, dx)
}

impl<'t> Var<'t> {
    /// Sample a (C, H, W) map at scalar coordinates, yielding a length-C
    /// vector. Gradients flow into the map and into both coordinates.
    pub fn bilinear_sample(self, y: Var<'t>, x: Var<'t>) -> Result<Var<'t>> {
        let map = self.tensor();
        if map.rank() != 3 {
            return Err(TensorError::shape(
                "bilinear_sample",
                format!("map must be (C, H, W), got {:?}", map.shape()),
            ));
        }
        for (name, v) in [("y", &y), ("x", &x)] {
            if v.value().numel() != 1 {
                return Err(TensorError::shape(
                    "bilinear_sample",
                    format!("coordinate {} must be a scalar, got {:?}", name, v.value().shape()),
                ));
            }
        }
        let (c, h, w) = (map.shape()[0], map.shape()[1], map.shape()[2]);
        let (y_shape, x_shape) = (y.value().shape().to_vec(), x.value().shape().to_vec());
        let (yv, xv) = (y.value().item(), x.value().item());
        let mut out = Vec::with_capacity(c);
        for ci in 0..c {
            let plane = &map.data()[ci * h * w..(ci + 1) * h * w];
            out.push(sample_plane(plane, h, w, yv, xv).0);
        }
        let value = Tensor::new(vec![c], out)?;
        let map_id = self.id;
        self.tape.push_op(
            value,
            &[self, y, x],
            "bilinear_sample",
            Box::new(move |ctx, grad, needs| {
                let map = ctx.value(map_id);
                let taps = BilinearTaps::at(yv, xv);
                let weights = taps.weights();
                let corners = taps.corners();
                let mut d_map = needs[0].then(|| vec![0.0; map.numel()]);
                let (mut dy_total, mut dx_total) = (0.0, 0.0);
                for ci in 0..c {
                    let g = grad.data()[ci];
                    let plane = &map.data()[ci * h * w..(ci + 1) * h * w];
                    let (_, dvy, dvx) = sample_plane(plane, h, w, yv, xv);
                    dy_total += g * dvy;
                    dx_total += g * dvx;
                    if let Some(d_map) = d_map.as_mut() {
                        for (weight, (cy, cx)) in weights.iter().zip(corners) {
                            if cy >= 0 && cx >= 0 && cy < h as i64 && cx < w as i64 {
                                d_map[ci * h * w + cy as usize * w + cx as usize] += g * weight;
                            }
                        }
                    }
                }
                vec![
                    d_map.map(|d| Tensor::new(vec![c, h, w], d).expect("sample grad map")),
                    needs[1].then(|| {
                        Tensor::new(y_shape.clone(), vec![dy_total]).expect("sample grad y")
                    }),
                    needs[2].then(|| {
                        Tensor::new(x_shape.clone(), vec![dx_total]).expect("sample grad x")
                    }),
                ]
            }),
        )
    }

    /// Resample an (N, C, H, W) map at per-position offsets (N, H·W, 2),
    /// offsets in pixel units relative to each position's own coordinates,
    /// positions flattened row-major. Gradients flow into map and offsets.
    pub fn deform_sample(self, offsets: Var<'t>) -> Result<Var<'t>> {
        let map = self.tensor();
        let off = offsets.tensor();
        if map.rank() != 4 {
            return Err(TensorError::shape(
                "deform_sample",
                format!("map must be NCHW, got {:?}", map.shape()),
            ));
        }
        let (n, c, h, w) = (map.shape()[0], map.shape()[1], map.shape()[2], map.shape()[3]);
        let l = h * w;
        if off.shape() != [n, l, 2] {
            return Err(TensorError::shape(
                "deform_sample",
                format!(
                    "offsets must be ({}, {}, 2) for a {}x{} map, got {:?}",
                    n,
                    l,
                    h,
                    w,
                    off.shape()
                ),
            ));
        }

        let mut out = vec![0.0; n * c * l];
        for ni in 0..n {
            for li in 0..l {
                let (py, px) = ((li / w) as f64, (li % w) as f64);
                let sy = py + off.data()[(ni * l + li) * 2];
                let sx = px + off.data()[(ni * l + li) * 2 + 1];
                for ci in 0..c {
                    let plane = &map.data()[((ni * c) + ci) * l..((ni * c) + ci + 1) * l];
                    out[((ni * c) + ci) * l + li] = sample_plane(plane, h, w, sy, sx).0;
                }
            }
        }
        let value = Tensor::new(vec![n, c, h, w], out)?;
        let (map_id, off_id) = (self.id, offsets.id);
        self.tape.push_op(
            value,
            &[self, offsets],
            "deform_sample",
            Box::new(move |ctx, grad, needs| {
                let map = ctx.value(map_id);
                let off = ctx.value(off_id);
                let gd = grad.data();
                let mut d_map = needs[0].then(|| vec![0.0; map.numel()]);
                let mut d_off = needs[1].then(|| vec![0.0; off.numel()]);
                for ni in 0..n {
                    for li in 0..l {
                        let (py, px) = ((li / w) as f64, (li % w) as f64);
                        let sy = py + off.data()[(ni * l + li) * 2];
                        let sx = px + off.data()[(ni * l + li) * 2 + 1];
                        let taps = BilinearTaps::at(sy, sx);
                        let weights = taps.weights();
                        let corners = taps.corners();
                        let (mut dy_total, mut dx_total) = (0.0, 0.0);
                        for ci in 0..c {
                            let g = gd[((ni * c) + ci) * l + li];
                            if g == 0.0 {
                                continue;
                            }
                            let plane = &map.data()[((ni * c) + ci) * l..((ni * c) + ci + 1) * l];
                            let (_, dvy, dvx) = sample_plane(plane, h, w, sy, sx);
                            dy_total += g * dvy;
                            dx_total += g * dvx;
                            if let Some(d_map) = d_map.as_mut() {
                                for (weight, (cy, cx)) in weights.iter().zip(corners) {
                                    if cy >= 0 && cx >= 0 && cy < h as i64 && cx < w as i64 {
                                        d_map[((ni * c) + ci) * l + cy as usize * w + cx as usize] +=
                                            g * weight;
                                    }
                                }
                            }
                        }
                        if let Some(d_off) = d_off.as_mut() {
                            d_off[(ni * l + li) * 2] = dy_total;
                            d_off[(ni * l + li) * 2 + 1] = dx_total;
                        }
                    }
                }
                vec![
                    d_map.map(|d| Tensor::new(map.shape().to_vec(), d).expect("deform grad map")),
                    d_off.map(|d| Tensor::new(off.shape().to_vec(), d).expect("deform grad off")),
                ]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Tape;

    fn map_2x2(tape: &Tape) -> Var<'_> {
        tape.watch(Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap())
    }

    #[test]
    fn midpoint_is_mean_of_corners() {
        let tape = Tape::new();
        let m = map_2x2(&tape);
        let y = tape.constant(Tensor::from_slice(&[0.5]));
        let x = tape.constant(Tensor::from_slice(&[0.5]));
        let v = m.bilinear_sample(y, x).unwrap();
        assert_eq!(v.tensor().data(), &[2.5]);
    }

    #[test]
    fn integer_coordinates_hit_grid_points() {
        let tape = Tape::new();
        let m = map_2x2(&tape);
        let y = tape.constant(Tensor::from_slice(&[0.0]));
        let x = tape.constant(Tensor::from_slice(&[1.0]));
        let v = m.bilinear_sample(y, x).unwrap();
        assert_eq!(v.tensor().data(), &[2.0]);
    }

    #[test]
    fn out_of_bounds_neighbors_contribute_zero() {
        // (-0.5, -0.5): only corner (0,0) is in bounds, weight 0.25
        let tape = Tape::new();
        let m = map_2x2(&tape);
        let y = tape.constant(Tensor::from_slice(&[-0.5]));
        let x = tape.constant(Tensor::from_slice(&[-0.5]));
        let v = m.bilinear_sample(y, x).unwrap();
        assert_eq!(v.tensor().data(), &[0.25]);
    }

    #[test]
    fn zero_offsets_reproduce_the_map_exactly() {
        let tape = Tape::new();
        let m = tape.watch(Tensor::new(vec![1, 2, 3, 2], (0..12).map(|v| v as f64).collect()).unwrap());
        let off = tape.constant(Tensor::zeros(vec![1, 6, 2]));
        let out = m.deform_sample(off).unwrap();
        assert_eq!(out.tensor(), m.tensor());
    }

    #[test]
    fn constant_plus_one_row_offset_shifts_down() {
        // offset (+1, 0) everywhere samples the next row; last row reads
        // out of bounds and becomes zero
        let tape = Tape::new();
        let m = tape.watch(
            Tensor::new(vec![1, 1, 3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(),
        );
        let mut offs = vec![0.0; 12];
        for li in 0..6 {
            offs[li * 2] = 1.0;
        }
        let off = tape.constant(Tensor::new(vec![1, 6, 2], offs).unwrap());
        let out = m.deform_sample(off).unwrap();
        assert_eq!(out.tensor().data(), &[3.0, 4.0, 5.0, 6.0, 0.0, 0.0]);
    }
}
