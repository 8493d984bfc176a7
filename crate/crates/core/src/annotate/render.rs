use crate::mask::{BinaryMask, ImageError, RgbImage};
use crate::metrics::{boundary, Connectivity};

pub const GENERATE_COLOR: [u8; 3] = [0, 255, 0];
pub const VERIFY_COLOR: [u8; 3] = [255, 128, 0];
pub const DEFAULT_DILATION: u32 = 20;

/// Squared distance along one line to the nearest zero-cost site, via the
/// lower envelope of parabolas. Inputs are integers so the result is exact.
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        if f[q].is_infinite() && f[v[k]].is_infinite() {
            continue;
        }
        loop {
            let p = v[k];
            let s = if f[p].is_infinite() {
                f64::NEG_INFINITY
            } else {
                ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
            };
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0 and the new parabola dominates everywhere
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
}

/// Exact squared Euclidean distance from every pixel to the nearest foreground pixel.
fn squared_distance_field(mask: &BinaryMask) -> Vec<f64> {
    let (h, w) = mask.dims();
    let n = h.max(w);
    let mut v = vec![0usize; n];
    let mut z = vec![0f64; n + 1];
    let mut col_in = vec![0f64; h];
    let mut col_out = vec![0f64; h];
    let mut field = vec![f64::INFINITY; h * w];
    for c in 0..w {
        for r in 0..h {
            col_in[r] = if mask.get(r, c) { 0.0 } else { f64::INFINITY };
        }
        edt_1d(&col_in, &mut col_out, &mut v, &mut z);
        for r in 0..h {
            field[r * w + c] = col_out[r];
        }
    }
    let mut row_out = vec![0f64; w];
    for r in 0..h {
        edt_1d(&field[r * w..(r + 1) * w], &mut row_out, &mut v, &mut z);
        field[r * w..(r + 1) * w].copy_from_slice(&row_out);
    }
    field
}

/// Dilation by the Euclidean disc `{(dy, dx) : dy² + dx² ≤ r²}`.
pub fn dilate_disc(mask: &BinaryMask, radius: u32) -> BinaryMask {
    if radius == 0 || mask.is_empty() {
        return mask.clone();
    }
    let (h, w) = mask.dims();
    let r2 = (radius as f64) * (radius as f64);
    let field = squared_distance_field(mask);
    BinaryMask::from_fn(h, w, |r, c| field[r * w + c] <= r2).expect("dims come from a valid mask")
}

/// Paints the 4-connected boundary of the dilated mask onto a copy of `image`.
pub fn render_contour(image: &RgbImage, mask: &BinaryMask, color: [u8; 3], dilation: u32) -> Result<RgbImage, ImageError> {
    if image.dims() != mask.dims() {
        let (h, w) = image.dims();
        let (mh, mw) = mask.dims();
        return Err(ImageError::DimMismatch {
            a_h: h,
            a_w: w,
            b_h: mh,
            b_w: mw,
        });
    }
    let dilated = dilate_disc(mask, dilation);
    let mut out = image.clone();
    for (r, c) in boundary(&dilated, Connectivity::Four).points {
        out.put(r, c, color);
    }
    Ok(out)
}
