//! Image quality metrics on `[0, 1]` data.

use thiserror::Error;

use crate::frame::ColorImage;

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("images differ in size: {0:?} vs {1:?}")]
    SizeMismatch((usize, usize), (usize, usize)),
    #[error("image {0}x{1} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")]
    TooSmall(usize, usize),
    #[error("empty image")]
    Empty,
}

/// `10 * log10(1 / MSE)` over all samples, capped at [`PSNR_CAP`].
pub fn psnr<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::SizeMismatch((a.len(), 1), (b.len(), 1)));
    }
    if a.is_empty() {
        return Err(MetricError::Empty);
    }
    let sse: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.into() - y.into();
            d * d
        })
        .sum();
    let mse = sse / a.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - r;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable Gaussian filter over the valid region.
fn blur_valid(data: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let src = &data[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&src[x..]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k
                .iter()
                .enumerate()
                .map(|(j, kv)| kv * rows[(y + j) * ow + x])
                .sum();
        }
    }
    out
}

/// Mean SSIM of one channel (Gaussian window, valid region, L = 1).
pub fn ssim_channel<T: Copy + Into<f64>>(
    a: &[T],
    b: &[T],
    width: usize,
    height: usize,
) -> Result<f64, MetricError> {
    if a.len() != width * height || b.len() != width * height {
        return Err(MetricError::SizeMismatch(
            (a.len(), 1),
            (b.len(), width * height),
        ));
    }
    if width < SSIM_WINDOW || height < SSIM_WINDOW {
        return Err(MetricError::TooSmall(width, height));
    }
    let k = gaussian_kernel();
    let x: Vec<f64> = a.iter().map(|&v| v.into()).collect();
    let y: Vec<f64> = b.iter().map(|&v| v.into()).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();

    let mu_x = blur_valid(&x, width, height, &k);
    let mu_y = blur_valid(&y, width, height, &k);
    let s_xx = blur_valid(&xx, width, height, &k);
    let s_yy = blur_valid(&yy, width, height, &k);
    let s_xy = blur_valid(&xy, width, height, &k);

    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let n = mu_x.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let vx = s_xx[i] - mx * mx;
            let vy = s_yy[i] - my * my;
            let cov = s_xy[i] - mx * my;
            ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / n as f64)
}

fn check_pair(a: &ColorImage, b: &ColorImage) -> Result<(), MetricError> {
    if a.dims() != b.dims()
        || a.data.len() != a.width * a.height
        || b.data.len() != b.width * b.height
    {
        return Err(MetricError::SizeMismatch(a.dims(), b.dims()));
    }
    Ok(())
}

/// PSNR over all three channels.
pub fn psnr_image(a: &ColorImage, b: &ColorImage) -> Result<f64, MetricError> {
    check_pair(a, b)?;
    psnr(a.data.as_flattened(), b.data.as_flattened())
}

/// SSIM averaged over the three channels.
pub fn ssim_image(a: &ColorImage, b: &ColorImage) -> Result<f64, MetricError> {
    check_pair(a, b)?;
    let mut sum = 0.0;
    for c in 0..3 {
        let pa: Vec<f32> = a.data.iter().map(|p| p[c]).collect();
        let pb: Vec<f32> = b.data.iter().map(|p| p[c]).collect();
        sum += ssim_channel(&pa, &pb, a.width, a.height)?;
    }
    Ok(sum / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_known_values() {
        assert_eq!(psnr(&[0.3f32; 8], &[0.3f32; 8]).unwrap(), PSNR_CAP);
        let v = psnr(&[0.5f64; 64], &[0.6f64; 64]).unwrap();
        assert!((v - 20.0).abs() < 1e-9, "{v}");
        // MSE 0.25
        let v = psnr(&[0.0f64, 1.0], &[0.5, 0.5]).unwrap();
        assert!((v - 10.0 * 4f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn psnr_errors() {
        assert!(psnr::<f32>(&[], &[]).is_err());
        assert!(psnr(&[0.0f32], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn kernel_is_normalized() {
        let k = gaussian_kernel();
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(k[0], k[10]);
        assert!(k[5] > k[4]);
    }

    #[test]
    fn ssim_identity_and_constant_shift() {
        let img: Vec<f64> = (0..32 * 24)
            .map(|i| ((i * 7919) % 101) as f64 / 100.0)
            .collect();
        let s = ssim_channel(&img, &img, 32, 24).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        let flat_a = vec![0.2f64; 16 * 16];
        let flat_b = vec![0.4f64; 16 * 16];
        // luminance term only: (2*0.08 + c1) / (0.04 + 0.16 + c1)
        let c1 = 1e-4;
        let expect = (2.0 * 0.2 * 0.4 + c1) / (0.04 + 0.16 + c1);
        let s = ssim_channel(&flat_a, &flat_b, 16, 16).unwrap();
        assert!((s - expect).abs() < 1e-12, "{s} vs {expect}");
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = vec![0.0f32; 10 * 40];
        assert_eq!(
            ssim_channel(&a, &a, 10, 40),
            Err(MetricError::TooSmall(10, 40))
        );
    }

    #[test]
    fn blur_matches_direct_window_sum() {
        let (w, h) = (14, 12);
        let data: Vec<f64> = (0..w * h).map(|i| (i as f64 * 0.37).sin()).collect();
        let k = gaussian_kernel();
        let out = blur_valid(&data, w, h, &k);
        let (ow, oh) = (w - 10, h - 10);
        for y in 0..oh {
            for x in 0..ow {
                let mut direct = 0.0;
                for j in 0..11 {
                    for i in 0..11 {
                        direct += k[i] * k[j] * data[(y + j) * w + x + i];
                    }
                }
                assert!((out[y * ow + x] - direct).abs() < 1e-12);
            }
        }
    }
}
