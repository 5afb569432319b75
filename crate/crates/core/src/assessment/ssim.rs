//! Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5) over valid
//! window positions, unit dynamic range.

use crate::error::{Error, Result};
use crate::image::Grid;
use crate::par;

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub(crate) fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size as f64 - 1.0) / 2.0;
    let mut taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - r;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    taps
}

/// Separable filtering over valid positions only.
pub(crate) fn filter_valid(src: &Grid, taps: &[f64]) -> Grid {
    let n = taps.len();
    let (w, h) = src.extent();
    if w < n || h < n {
        return Grid::zeros(0, 0);
    }
    let (ow, oh) = (w - n + 1, h - n + 1);
    let horiz = par::fill_rows(ow, h, |y, row| {
        let src_row = src.row(y);
        for (x, out) in row.iter_mut().enumerate() {
            *out = taps.iter().zip(&src_row[x..x + n]).map(|(t, v)| t * v).sum();
        }
    });
    let horiz = Grid::from_raw(ow, h, horiz);
    let data = par::fill_rows(ow, oh, |y, row| {
        for (x, out) in row.iter_mut().enumerate() {
            *out = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * horiz.get(x, y + k))
                .sum();
        }
    });
    Grid::from_raw(ow, oh, data)
}

fn product(a: &Grid, b: &Grid) -> Grid {
    Grid::from_raw(
        a.width(),
        a.height(),
        a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).collect(),
    )
}

/// Mean SSIM over all valid window positions.
pub fn ssim(a: &Grid, b: &Grid) -> Result<f64> {
    Error::check_extent(a.extent(), b.extent())?;
    let (w, h) = a.extent();
    if w < WINDOW || h < WINDOW {
        return Err(Error::TooSmall(format!("SSIM needs >= {WINDOW}x{WINDOW}, got {w}x{h}")));
    }
    let taps = gaussian_taps(WINDOW, SIGMA);
    let mu_a = filter_valid(a, &taps);
    let mu_b = filter_valid(b, &taps);
    let e_aa = filter_valid(&product(a, a), &taps);
    let e_bb = filter_valid(&product(b, b), &taps);
    let e_ab = filter_valid(&product(a, b), &taps);
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    let (ow, oh) = mu_a.extent();
    let total = par::sum_rows(ow, oh, |y| {
        let mut acc = 0.0;
        for x in 0..ow {
            let (ma, mb) = (mu_a.get(x, y), mu_b.get(x, y));
            let va = e_aa.get(x, y) - ma * ma;
            let vb = e_bb.get(x, y) - mb * mb;
            let cov = e_ab.get(x, y) - ma * mb;
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        acc
    });
    Ok(total / (ow * oh) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_one_and_symmetric() {
        let a = Grid::from_fn(16, 13, |x, y| ((x * 7 + y * 3) % 11) as f64 / 10.0);
        let b = Grid::from_fn(16, 13, |x, y| ((x + y * 5) % 9) as f64 / 8.0);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        assert!(ssim(&a, &b).unwrap() < 1.0);
    }

    #[test]
    fn rejects_small_images() {
        let a = Grid::zeros(10, 20);
        assert!(matches!(ssim(&a, &a), Err(Error::TooSmall(_))));
    }

    #[test]
    fn taps_are_normalized_and_symmetric() {
        let t = gaussian_taps(11, 1.5);
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..11 {
            assert_eq!(t[i], t[10 - i]);
        }
    }
}
