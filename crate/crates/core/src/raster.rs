//! Row-major single-plane raster helpers: bilinear sampling, resize, rotation and flips.
//!
//! Pixel `(x, y)` has its center at integer coordinates `(x, y)`.

#[inline]
fn at(data: &[f64], w: usize, x: usize, y: usize) -> f64 {
    data[y * w + x]
}

/// Bilinear sample with coordinates clamped to the border.
pub fn sample_clamped(data: &[f64], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = at(data, w, x0, y0) * (1.0 - fx) + at(data, w, x1, y0) * fx;
    let bottom = at(data, w, x0, y1) * (1.0 - fx) + at(data, w, x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Bilinear sample treating everything outside the grid as zero.
pub fn sample_zero(data: &[f64], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let get = |xi: f64, yi: f64| -> f64 {
        if xi < 0.0 || yi < 0.0 || xi >= w as f64 || yi >= h as f64 {
            0.0
        } else {
            at(data, w, xi as usize, yi as usize)
        }
    };
    let top = get(x0, y0) * (1.0 - fx) + get(x0 + 1.0, y0) * fx;
    let bottom = get(x0, y0 + 1.0) * (1.0 - fx) + get(x0 + 1.0, y0 + 1.0) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Bilinear resize using pixel-center alignment.
pub fn resize(data: &[f64], w: usize, h: usize, out_w: usize, out_h: usize) -> Vec<f64> {
    assert_eq!(data.len(), w * h, "raster size mismatch");
    if w == out_w && h == out_h {
        return data.to_vec();
    }
    let sx = w as f64 / out_w as f64;
    let sy = h as f64 / out_h as f64;
    let mut out = Vec::with_capacity(out_w * out_h);
    for oy in 0..out_h {
        let y = (oy as f64 + 0.5) * sy - 0.5;
        for ox in 0..out_w {
            let x = (ox as f64 + 0.5) * sx - 0.5;
            out.push(sample_clamped(data, w, h, x, y));
        }
    }
    out
}

/// Rotates a square-or-rectangular plane about its center by `degrees`
/// (counter-clockwise in image coordinates), filling uncovered pixels with zero.
pub fn rotate(data: &[f64], w: usize, h: usize, degrees: f64) -> Vec<f64> {
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let dy = y as f64 - cy;
        for x in 0..w {
            let dx = x as f64 - cx;
            // inverse mapping: rotate the destination coordinate by -angle
            let sx = cx + dx * cos + dy * sin;
            let sy = cy - dx * sin + dy * cos;
            out.push(sample_zero(data, w, h, sx, sy));
        }
    }
    out
}

pub fn flip_horizontal(data: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(w * h);
    for row in data.chunks(w).take(h) {
        out.extend(row.iter().rev());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Vec<f64> {
        (0..w * h).map(|i| (i as f64 * 0.37).sin()).collect()
    }

    #[test]
    fn integer_samples_are_exact() {
        let d = ramp(5, 4);
        for y in 0..4 {
            for x in 0..5 {
                assert_eq!(sample_clamped(&d, 5, 4, x as f64, y as f64), d[y * 5 + x]);
                assert_eq!(sample_zero(&d, 5, 4, x as f64, y as f64), d[y * 5 + x]);
            }
        }
    }

    #[test]
    fn midpoint_is_average() {
        let d = vec![0.0, 1.0, 2.0, 3.0];
        assert!((sample_clamped(&d, 2, 2, 0.5, 0.5) - 1.5).abs() < 1e-15);
        assert_eq!(sample_zero(&d, 2, 2, -1.0, 0.0), 0.0);
    }

    #[test]
    fn resize_identity_and_constant() {
        let d = ramp(6, 6);
        assert_eq!(resize(&d, 6, 6, 6, 6), d);
        let c = vec![0.25; 9];
        assert!(resize(&c, 3, 3, 7, 5).iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn zero_rotation_and_double_flip_are_identity() {
        let d = ramp(7, 7);
        assert_eq!(rotate(&d, 7, 7, 0.0), d);
        assert_eq!(flip_horizontal(&flip_horizontal(&d, 7, 7), 7, 7), d);
    }

    #[test]
    fn quarter_turn_moves_pixels() {
        let mut d = vec![0.0; 9];
        d[1] = 1.0; // (1, 0)
        let r = rotate(&d, 3, 3, 90.0);
        let hot: Vec<usize> = r
            .iter()
            .enumerate()
            .filter(|(_, v)| (**v - 1.0).abs() < 1e-9)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(hot.len(), 1);
        assert_ne!(hot[0], 1);
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
