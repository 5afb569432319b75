//! Edge-preservation fusion measure (Xydeas and Petrovic).
//!
//! Sobel edge strength `g` and orientation `atan(gy / gx)` are taken for the
//! fused image and both sources. Relative strength and orientation agreement
//! are passed through sigmoids and multiplied into a per-pixel preservation
//! value, which is averaged with the source edge strengths as weights.
//!
//! The sigmoid gains and midpoints are the published ones; the scale factors
//! are chosen so that perfect preservation scores exactly 1.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::image::Grid;
use crate::par;
use crate::salience::reflect;

pub const KAPPA_G: f64 = -15.0;
pub const SIGMA_G: f64 = 0.5;
pub const KAPPA_A: f64 = -22.0;
pub const SIGMA_A: f64 = 0.8;

/// Sobel responses smaller than this are exact zeros that picked up rounding
/// noise. Left alone, their sign flips the orientation by pi.
pub const GRADIENT_FLOOR: f64 = 1e-12;

#[inline]
fn snap(g: f64) -> f64 {
    if g.abs() < GRADIENT_FLOOR {
        0.0
    } else {
        g
    }
}

pub(crate) struct EdgeField {
    pub strength: Vec<f64>,
    pub angle: Vec<f64>,
}

pub(crate) fn edge_field(img: &Grid) -> EdgeField {
    let (w, h) = img.extent();
    let px = |x: isize, y: isize| img.get(reflect(x, w), reflect(y, h));
    let rows: Vec<(Vec<f64>, Vec<f64>)> = par::map_rows(w, h, |y| {
        let y = y as isize;
        let mut s = Vec::with_capacity(w);
        let mut a = Vec::with_capacity(w);
        for x in 0..w as isize {
            let gx = snap((px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2.0 * px(x - 1, y) + px(x - 1, y + 1)));
            let gy = snap((px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2.0 * px(x, y - 1) + px(x + 1, y - 1)));
            s.push((gx * gx + gy * gy).sqrt());
            a.push(if gx == 0.0 { FRAC_PI_2 } else { (gy / gx).atan() });
        }
        (s, a)
    });
    let mut strength = Vec::with_capacity(w * h);
    let mut angle = Vec::with_capacity(w * h);
    for (s, a) in rows {
        strength.extend(s);
        angle.extend(a);
    }
    EdgeField { strength, angle }
}

#[inline]
fn sigmoid(kappa: f64, sigma: f64, v: f64) -> f64 {
    let gamma = 1.0 + (kappa * (1.0 - sigma)).exp();
    gamma / (1.0 + (kappa * (v - sigma)).exp())
}

/// Preservation of source edge `(gs, as_)` in fused edge `(gf, af)`.
#[inline]
pub(crate) fn preservation(gs: f64, as_: f64, gf: f64, af: f64) -> f64 {
    let g = if gs > gf {
        gf / gs
    } else if gf > 0.0 {
        gs / gf
    } else {
        0.0
    };
    let a = 1.0 - (as_ - af).abs() / FRAC_PI_2;
    sigmoid(KAPPA_G, SIGMA_G, g) * sigmoid(KAPPA_A, SIGMA_A, a)
}

/// Edge information of sources `a` and `b` preserved in `f`, in `[0, 1]`.
/// Inputs without any edges score 0.
pub fn qabf(f: &Grid, a: &Grid, b: &Grid) -> Result<f64> {
    Error::check_extent(f.extent(), a.extent())?;
    Error::check_extent(f.extent(), b.extent())?;
    let ef = edge_field(f);
    let ea = edge_field(a);
    let eb = edge_field(b);
    let (w, h) = f.extent();
    let partial = par::map_rows(w, h, |y| {
        let (mut num, mut den) = (0.0, 0.0);
        for i in y * w..(y + 1) * w {
            let (ga, gb) = (ea.strength[i], eb.strength[i]);
            if ga == 0.0 && gb == 0.0 {
                continue;
            }
            let qa = preservation(ga, ea.angle[i], ef.strength[i], ef.angle[i]);
            let qb = preservation(gb, eb.angle[i], ef.strength[i], ef.angle[i]);
            num += qa * ga + qb * gb;
            den += ga + gb;
        }
        (num, den)
    });
    let (num, den) = partial
        .into_iter()
        .fold((0.0, 0.0), |(n, d), (pn, pd)| (n + pn, d + pd));
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok((num / den).clamp(0.0, 1.0))
}
