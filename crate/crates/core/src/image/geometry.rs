use super::{GrayImage, InkBox, BACKGROUND};
use crate::error::{Error, Result};

/// Canvas size needed to hold a `width`×`height` image rotated by `angle_deg`.
pub fn rotated_extent(width: usize, height: usize, angle_deg: f64) -> (usize, usize) {
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let (w, h) = (width as f64, height as f64);
    // slack absorbs the ~1e-16 residue of cos(90°) and friends
    let fit = |v: f64| ((v - 1e-9).ceil() as usize).max(1);
    (
        fit(w * cos.abs() + h * sin.abs()),
        fit(w * sin.abs() + h * cos.abs()),
    )
}

/// Rotates counter-clockwise (as displayed) by `angle_deg` about the image
/// center.
///
/// The canvas grows so no source pixel is clipped; uncovered area is white.
/// Samples are bilinear, with out-of-image neighbors treated as background.
pub fn rotate(img: &GrayImage, angle_deg: f64) -> GrayImage {
    assert!(angle_deg.is_finite(), "rotation angle must be finite");
    if angle_deg == 0.0 {
        return img.clone();
    }
    let (out_w, out_h) = rotated_extent(img.width(), img.height(), angle_deg);
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let (cx_in, cy_in) = (
        (img.width() as f64 - 1.0) / 2.0,
        (img.height() as f64 - 1.0) / 2.0,
    );
    let (cx_out, cy_out) = ((out_w as f64 - 1.0) / 2.0, (out_h as f64 - 1.0) / 2.0);

    GrayImage::from_fn(out_w, out_h, |x, y| {
        let dx = x as f64 - cx_out;
        let dy = y as f64 - cy_out;
        let sx = cx_in + cos * dx - sin * dy;
        let sy = cy_in + sin * dx + cos * dy;
        round_u8(sample_bilinear(img, sx, sy))
    })
}

fn sample_bilinear(img: &GrayImage, sx: f64, sy: f64) -> f64 {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let (x0, y0) = (x0 as isize, y0 as isize);
    if x0 < -1 || y0 < -1 || x0 >= w || y0 >= h {
        return BACKGROUND as f64;
    }
    let at = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w || y >= h {
            BACKGROUND as f64
        } else {
            img.get(x as usize, y as usize) as f64
        }
    };
    let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
    let bottom = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

#[inline]
pub(crate) fn round_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Tightest box around every pixel strictly darker than `threshold`.
pub fn ink_bbox(img: &GrayImage, threshold: u8) -> Result<InkBox> {
    let mut found: Option<InkBox> = None;
    for y in 0..img.height() {
        let row = img.row(y);
        let Some(first) = row.iter().position(|&p| p < threshold) else {
            continue;
        };
        let last = row.iter().rposition(|&p| p < threshold).unwrap_or(first);
        let line = InkBox {
            left: first,
            top: y,
            right: last,
            bottom: y,
        };
        found = Some(match found {
            Some(b) => b.union(&line),
            None => line,
        });
    }
    found.ok_or(Error::NoInk)
}

pub fn crop(img: &GrayImage, bbox: InkBox) -> Result<GrayImage> {
    if bbox.left > bbox.right
        || bbox.top > bbox.bottom
        || bbox.right >= img.width()
        || bbox.bottom >= img.height()
    {
        return Err(Error::OutOfBounds {
            left: bbox.left,
            top: bbox.top,
            right: bbox.right,
            bottom: bbox.bottom,
            width: img.width(),
            height: img.height(),
        });
    }
    let mut pixels = Vec::with_capacity(bbox.width() * bbox.height());
    for y in bbox.top..=bbox.bottom {
        pixels.extend_from_slice(&img.row(y)[bbox.left..=bbox.right]);
    }
    GrayImage::new(bbox.width(), bbox.height(), pixels)
}

/// Bilinear (tent-filter) resampling to exactly `new_width`×`new_height`.
///
/// When shrinking, the tent widens with the reduction factor so thin
/// strokes are averaged rather than skipped.
pub fn resize(img: &GrayImage, new_width: usize, new_height: usize) -> GrayImage {
    let values = resample(img, new_width, new_height);
    let pixels = values.into_iter().map(round_u8).collect();
    GrayImage::new(new_width, new_height, pixels).expect("resize output dimensions are positive")
}

/// Real-valued resampling, row-major.
pub(crate) fn resample(img: &GrayImage, new_width: usize, new_height: usize) -> Vec<f64> {
    assert!(
        new_width >= 1 && new_height >= 1,
        "resize target must be at least 1x1"
    );
    let (w, h) = (img.width(), img.height());
    let xw = tent_weights(w, new_width);
    let yw = tent_weights(h, new_height);

    let mut horizontal = vec![0.0; new_width * h];
    for y in 0..h {
        let row = img.row(y);
        let out = &mut horizontal[y * new_width..(y + 1) * new_width];
        for (o, taps) in out.iter_mut().zip(&xw) {
            *o = taps.iter().map(|&(i, wt)| row[i] as f64 * wt).sum();
        }
    }
    let mut out = vec![0.0; new_width * new_height];
    for (oy, taps) in yw.iter().enumerate() {
        let dst = &mut out[oy * new_width..(oy + 1) * new_width];
        for &(iy, wt) in taps {
            let src = &horizontal[iy * new_width..(iy + 1) * new_width];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s * wt;
            }
        }
    }
    out
}

/// Normalized tent taps for each output coordinate along one axis.
fn tent_weights(src_len: usize, dst_len: usize) -> Vec<Vec<(usize, f64)>> {
    let ratio = src_len as f64 / dst_len as f64;
    let support = ratio.max(1.0);
    (0..dst_len)
        .map(|o| {
            let center = (o as f64 + 0.5) * ratio - 0.5;
            let lo = ((center - support).floor().max(0.0)) as usize;
            let hi = ((center + support).ceil() as usize).min(src_len - 1);
            let mut taps: Vec<(usize, f64)> = (lo..=hi)
                .filter_map(|i| {
                    let wt = 1.0 - (i as f64 - center).abs() / support;
                    (wt > 0.0).then_some((i, wt))
                })
                .collect();
            if taps.is_empty() {
                let nearest = center.round().clamp(0.0, (src_len - 1) as f64) as usize;
                taps.push((nearest, 1.0));
            }
            let total: f64 = taps.iter().map(|t| t.1).sum();
            taps.iter_mut().for_each(|t| t.1 /= total);
            taps
        })
        .collect()
}
