//! No-reference statistics on the 8-bit scale.

use crate::error::{Error, Result};
use crate::image::Grid;

const SCALE: f64 = 255.0;

/// Spatial frequency `sqrt(RF^2 + CF^2)`, with each term the mean squared
/// first difference along rows (RF) or columns (CF).
pub fn sf(img: &Grid) -> Result<f64> {
    let (w, h) = img.extent();
    if w < 2 || h < 2 {
        return Err(Error::TooSmall(format!("spatial frequency needs >= 2x2, got {w}x{h}")));
    }
    let mut rf = 0.0;
    let mut cf = 0.0;
    for y in 0..h {
        let row = img.row(y);
        for x in 1..w {
            let d = (row[x] - row[x - 1]) * SCALE;
            rf += d * d;
        }
        if y > 0 {
            let prev = img.row(y - 1);
            for x in 0..w {
                let d = (row[x] - prev[x]) * SCALE;
                cf += d * d;
            }
        }
    }
    rf /= (h * (w - 1)) as f64;
    cf /= ((h - 1) * w) as f64;
    Ok((rf + cf).sqrt())
}

/// Population standard deviation.
pub fn sd(img: &Grid) -> Result<f64> {
    if img.is_empty() {
        return Err(Error::TooSmall("empty image".into()));
    }
    let n = img.len() as f64;
    // shifted by the first sample so constant images give exactly zero
    let shift = img.as_slice()[0];
    let mean = img.as_slice().iter().map(|&v| v - shift).sum::<f64>() / n;
    let var = img
        .as_slice()
        .iter()
        .map(|&v| (v - shift - mean) * (v - shift - mean))
        .sum::<f64>()
        / n;
    Ok(var.sqrt() * SCALE)
}

/// Shannon entropy in bits of the 256-bin intensity histogram.
pub fn entropy(img: &Grid) -> Result<f64> {
    if img.is_empty() {
        return Err(Error::TooSmall("empty image".into()));
    }
    let mut hist = [0usize; 256];
    for &v in img.as_slice() {
        hist[(v.clamp(0.0, 1.0) * SCALE).round() as usize] += 1;
    }
    let n = img.len() as f64;
    Ok(hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_are_zero() {
        let g = Grid::filled(5, 4, 0.3);
        assert_eq!(sf(&g).unwrap(), 0.0);
        assert_eq!(sd(&g).unwrap(), 0.0);
        assert_eq!(entropy(&g).unwrap(), 0.0);
    }

    #[test]
    fn checkerboard_sf() {
        let g = Grid::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!((sf(&g).unwrap() - 255.0 * 2f64.sqrt()).abs() < 1e-9);
        assert!((sf(&g).unwrap() - 360.62).abs() < 5e-3);
        assert!(sf(&Grid::filled(1, 4, 0.0)).is_err());
    }

    #[test]
    fn sf_ignores_offsets() {
        let g = Grid::from_fn(6, 5, |x, y| 0.1 * ((x * 3 + y) % 5) as f64);
        let shifted = g.map(|v| v + 0.1);
        assert!((sf(&g).unwrap() - sf(&shifted).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn sd_examples() {
        assert_eq!(sd(&Grid::new(2, 1, vec![0.0, 1.0]).unwrap()).unwrap(), 127.5);
        let a = Grid::new(3, 1, vec![0.1, 0.5, 0.9]).unwrap();
        let b = Grid::new(3, 1, vec![0.9, 0.1, 0.5]).unwrap();
        assert_eq!(sd(&a).unwrap(), sd(&b).unwrap());
    }

    #[test]
    fn uniform_histogram_is_eight_bits() {
        let g = Grid::from_fn(16, 16, |x, y| (y * 16 + x) as f64 / 255.0);
        assert_eq!(entropy(&g).unwrap(), 8.0);
        let perm = Grid::from_fn(16, 16, |x, y| (255 - (y * 16 + x)) as f64 / 255.0);
        assert_eq!(entropy(&perm).unwrap(), 8.0);
    }
}
