//! Pixel-domain visual information fidelity over four Gaussian scales.
//!
//! Scale `s` (1-based) uses an `N x N` Gaussian with `N = 2^(5 - s) + 1` and
//! standard deviation `N / 5`. From the second scale on, both images are first
//! filtered with that window (valid positions) and decimated by two. Values are
//! taken on the 8-bit scale with visual noise variance 2.

use crate::assessment::ssim::{filter_valid, gaussian_taps};
use crate::error::{Error, Result};
use crate::image::Grid;
use crate::par;

pub const SCALES: usize = 4;
pub const NOISE_VAR: f64 = 2.0;
const EPS: f64 = 1e-10;

/// Smallest extent for which the first scale has at least one window.
pub const MIN_EXTENT: usize = 17;

fn decimate(g: &Grid) -> Grid {
    let (w, h) = g.extent();
    Grid::from_fn(w.div_ceil(2), h.div_ceil(2), |x, y| g.get(2 * x, 2 * y))
}

fn product(a: &Grid, b: &Grid) -> Grid {
    Grid::from_fn(a.width(), a.height(), |x, y| a.get(x, y) * b.get(x, y))
}

/// `(numerator, denominator)` contributions of one scale.
fn scale_terms(reference: &Grid, distorted: &Grid, taps: &[f64]) -> (f64, f64) {
    let mu1 = filter_valid(reference, taps);
    let mu2 = filter_valid(distorted, taps);
    if mu1.is_empty() {
        return (0.0, 0.0);
    }
    let e11 = filter_valid(&product(reference, reference), taps);
    let e22 = filter_valid(&product(distorted, distorted), taps);
    let e12 = filter_valid(&product(reference, distorted), taps);
    let (w, h) = mu1.extent();
    let rows = par::map_rows(w, h, |y| {
        let (mut num, mut den) = (0.0, 0.0);
        for x in 0..w {
            let (m1, m2) = (mu1.get(x, y), mu2.get(x, y));
            let mut s1 = (e11.get(x, y) - m1 * m1).max(0.0);
            let s2 = (e22.get(x, y) - m2 * m2).max(0.0);
            let s12 = e12.get(x, y) - m1 * m2;
            let mut g = s12 / (s1 + EPS);
            let mut sv = s2 - g * s12;
            if s1 < EPS {
                g = 0.0;
                sv = s2;
                s1 = 0.0;
            }
            if s2 < EPS {
                g = 0.0;
                sv = 0.0;
            }
            if g < 0.0 {
                sv = s2;
                g = 0.0;
            }
            if sv <= EPS {
                sv = EPS;
            }
            num += (1.0 + g * g * s1 / (sv + NOISE_VAR)).log10();
            den += (1.0 + s1 / NOISE_VAR).log10();
        }
        (num, den)
    });
    rows.into_iter().fold((0.0, 0.0), |(a, b), (n, d)| (a + n, b + d))
}

/// Information in `distorted` relative to `reference`.
///
/// When the reference carries no information at any scale the result is 1
/// for identical inputs and 0 otherwise.
pub fn vif(reference: &Grid, distorted: &Grid) -> Result<f64> {
    Error::check_extent(reference.extent(), distorted.extent())?;
    let (w, h) = reference.extent();
    if w < MIN_EXTENT || h < MIN_EXTENT {
        return Err(Error::TooSmall(format!(
            "VIF needs >= {MIN_EXTENT}x{MIN_EXTENT}, got {w}x{h}"
        )));
    }
    let mut r = reference.map(|v| v * 255.0);
    let mut d = distorted.map(|v| v * 255.0);
    let (mut num, mut den) = (0.0, 0.0);
    for scale in 1..=SCALES {
        let n = (1usize << (SCALES + 1 - scale)) + 1;
        let taps = gaussian_taps(n, n as f64 / 5.0);
        if scale > 1 {
            r = decimate(&filter_valid(&r, &taps));
            d = decimate(&filter_valid(&d, &taps));
        }
        let (sn, sd) = scale_terms(&r, &d, &taps);
        num += sn;
        den += sd;
    }
    if den == 0.0 {
        return Ok(if reference == distorted { 1.0 } else { 0.0 });
    }
    Ok(num / den)
}
