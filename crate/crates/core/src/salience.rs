//! Salience weights for the two fusion regions.
//!
//! Inside the interest map the weights are per pixel: a softmax over the
//! activity levels (channel-wise L1 norm of a feature stack) of the two
//! sources. Outside it they are scalar: a softmax over a masked, multi-scale
//! gradient-energy measure of each source.
//!
//! Features come from a fixed [`FilterBank`] rather than a learned encoder.
//! All filtering uses mirror padding without edge repetition (`-1 -> 1`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{FeatureStack, GrayImage, Grid, InterestMask};
use crate::par;

/// Pyramid depth used by [`info_measure`].
pub const PYRAMID_LEVELS: usize = 5;

/// Square correlation kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub label: String,
    pub size: usize,
    pub weights: Vec<f64>,
    /// Take the absolute value of the response.
    #[serde(default)]
    pub rectify: bool,
}

impl Kernel {
    pub fn new(label: impl Into<String>, size: usize, weights: Vec<f64>, rectify: bool) -> Result<Self> {
        let label = label.into();
        if size % 2 == 0 || weights.len() != size * size {
            return Err(Error::InvalidParameter(format!(
                "kernel {label:?} must be odd-sized and square, got size {size} with {} weights",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter(format!("kernel {label:?} has non-finite weights")));
        }
        Ok(Kernel {
            label,
            size,
            weights,
            rectify,
        })
    }

    pub fn identity() -> Self {
        Kernel {
            label: "identity".into(),
            size: 1,
            weights: vec![1.0],
            rectify: false,
        }
    }

    /// Normalized `size x size` Gaussian.
    pub fn gaussian(size: usize, sigma: f64) -> Self {
        let r = (size / 2) as isize;
        let mut w = Vec::with_capacity(size * size);
        for dy in -r..=r {
            for dx in -r..=r {
                w.push((-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp());
            }
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        Kernel {
            label: format!("gaussian{size}"),
            size,
            weights: w,
            rectify: false,
        }
    }

    pub fn laplacian() -> Self {
        Kernel {
            label: "laplacian".into(),
            size: 3,
            weights: vec![0.0, 1.0, 0.0, 1.0, -4.0, 1.0, 0.0, 1.0, 0.0],
            rectify: false,
        }
    }

    pub fn sobel_x() -> Self {
        Kernel {
            label: "sobel_x".into(),
            size: 3,
            weights: SOBEL_X.to_vec(),
            rectify: false,
        }
    }

    pub fn sobel_y() -> Self {
        Kernel {
            label: "sobel_y".into(),
            size: 3,
            weights: SOBEL_Y.to_vec(),
            rectify: false,
        }
    }

    pub fn rectified(mut self) -> Self {
        self.rectify = true;
        self.label.push_str("_abs");
        self
    }
}

const SOBEL_X: [f64; 9] = [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0];
const SOBEL_Y: [f64; 9] = [-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0];

/// Ordered kernels producing one feature channel each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterBank {
    pub kernels: Vec<Kernel>,
}

impl Default for FilterBank {
    /// Identity, 5x5 Gaussian (sigma 1), 3x3 Laplacian, |Sobel-x|, |Sobel-y|.
    fn default() -> Self {
        FilterBank {
            kernels: vec![
                Kernel::identity(),
                Kernel::gaussian(5, 1.0),
                Kernel::laplacian(),
                Kernel::sobel_x().rectified(),
                Kernel::sobel_y().rectified(),
            ],
        }
    }
}

impl FilterBank {
    pub fn new(kernels: Vec<Kernel>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::InvalidParameter("filter bank needs at least one kernel".into()));
        }
        for k in &kernels {
            Kernel::new(k.label.clone(), k.size, k.weights.clone(), k.rectify)?;
        }
        Ok(FilterBank { kernels })
    }

    /// JSON document `{"kernels": [{"label", "size", "weights", "rectify"}]}`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bank: FilterBank = serde_json::from_str(&text).map_err(|e| Error::Corrupt {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        FilterBank::new(bank.kernels)
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn max_size(&self) -> usize {
        self.kernels.iter().map(|k| k.size).max().unwrap_or(1)
    }
}

/// Mirror index into `0..n` without edge repetition; total for any `n >= 1`.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Correlate with mirror padding; output has the input extent.
pub(crate) fn correlate(src: &Grid, weights: &[f64], size: usize, rectify: bool) -> Grid {
    let (w, h) = src.extent();
    let r = (size / 2) as isize;
    let data = par::fill_rows(w, h, |y, row| {
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for ky in 0..size {
                let sy = reflect(y as isize + ky as isize - r, h);
                let src_row = src.row(sy);
                for kx in 0..size {
                    let sx = reflect(x as isize + kx as isize - r, w);
                    acc += weights[ky * size + kx] * src_row[sx];
                }
            }
            *out = if rectify { acc.abs() } else { acc };
        }
    });
    Grid::from_raw(w, h, data)
}

fn stack_unchecked(img: &Grid, bank: &FilterBank, level: usize) -> FeatureStack {
    let channels = bank
        .kernels
        .iter()
        .map(|k| correlate(img, &k.weights, k.size, k.rectify))
        .collect();
    FeatureStack::new(channels, level).expect("bank is nonempty and channels share extent")
}

/// One feature channel per kernel, in bank order.
pub fn feature_stack(img: &GrayImage, bank: &FilterBank) -> Result<FeatureStack> {
    if bank.is_empty() {
        return Err(Error::InvalidParameter("filter bank is empty".into()));
    }
    let k = bank.max_size();
    if img.width() < k || img.height() < k {
        return Err(Error::TooSmall(format!(
            "{}x{} image is smaller than the {k}x{k} kernel",
            img.width(),
            img.height()
        )));
    }
    Ok(stack_unchecked(img.grid(), bank, 0))
}

/// Per-pixel L1 norm across channels.
pub fn activity_map(fs: &FeatureStack) -> Grid {
    let (w, h) = fs.extent();
    let data = par::fill_rows(w, h, |y, row| {
        for (x, out) in row.iter_mut().enumerate() {
            *out = fs.channels().iter().map(|c| c.get(x, y).abs()).sum();
        }
    });
    Grid::from_raw(w, h, data)
}

/// Two-way softmax of a pair of scores, stabilized by max-subtraction.
#[inline]
pub fn softmax2(a: f64, b: f64) -> (f64, f64) {
    let m = a.max(b);
    let (ea, eb) = ((a - m).exp(), (b - m).exp());
    let s = ea + eb;
    (ea / s, eb / s)
}

/// Per-pixel softmax of the activity maps: `(w_ir, w_vis)`.
pub fn pixel_weights(a_ir: &Grid, a_vis: &Grid) -> Result<(Grid, Grid)> {
    Error::check_extent(a_ir.extent(), a_vis.extent())?;
    if a_ir.as_slice().iter().chain(a_vis.as_slice()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite activity value".into()));
    }
    let (w, h) = a_ir.extent();
    let w_ir = par::fill_rows(w, h, |y, row| {
        for (x, out) in row.iter_mut().enumerate() {
            *out = softmax2(a_ir.get(x, y), a_vis.get(x, y)).0;
        }
    });
    let w_vis = par::fill_rows(w, h, |y, row| {
        for (x, out) in row.iter_mut().enumerate() {
            *out = softmax2(a_ir.get(x, y), a_vis.get(x, y)).1;
        }
    });
    Ok((Grid::from_raw(w, h, w_ir), Grid::from_raw(w, h, w_vis)))
}

/// `s x s` max-pooling with ceil division; `s` must be a power of two.
pub fn downsample_mask(mask: &InterestMask, s: usize) -> Result<InterestMask> {
    if !s.is_power_of_two() {
        return Err(Error::InvalidParameter(format!("scale {s} is not a power of two")));
    }
    let (w, h) = mask.extent();
    let (cw, ch) = (w.div_ceil(s), h.div_ceil(s));
    Ok(InterestMask::from_fn(cw, ch, |cx, cy| {
        (cy * s..((cy + 1) * s).min(h)).any(|y| (cx * s..((cx + 1) * s).min(w)).any(|x| mask.get(x, y)))
    }))
}

fn blur_decimate(img: &Grid, gauss: &Kernel) -> Grid {
    let blurred = correlate(img, &gauss.weights, gauss.size, false);
    let (w, h) = blurred.extent();
    let (dw, dh) = (w.div_ceil(2), h.div_ceil(2));
    Grid::from_fn(dw, dh, |x, y| blurred.get(2 * x, 2 * y))
}

/// Gaussian pyramid: level 0 is the image, each next level is blurred then
/// decimated by two.
pub fn gaussian_pyramid(img: &Grid, levels: usize) -> Vec<Grid> {
    let gauss = Kernel::gaussian(5, 1.0);
    let mut out = Vec::with_capacity(levels);
    out.push(img.clone());
    for i in 1..levels {
        let next = blur_decimate(&out[i - 1], &gauss);
        out.push(next);
    }
    out
}

/// Masked sum of squared Sobel gradient magnitudes of one channel.
fn masked_gradient_energy(channel: &Grid, mask: &InterestMask) -> f64 {
    let gx = correlate(channel, &SOBEL_X, 3, false);
    let gy = correlate(channel, &SOBEL_Y, 3, false);
    let (w, h) = channel.extent();
    par::sum_rows(w, h, |y| {
        let mut acc = 0.0;
        for x in 0..w {
            if mask.get(x, y) {
                let (a, b) = (gx.get(x, y), gy.get(x, y));
                acc += a * a + b * b;
            }
        }
        acc
    })
}

/// Scalar information content of an image over a region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoMeasure {
    pub value: f64,
    /// The region was empty at every pyramid level; `value` is 0.
    pub empty_support: bool,
}

/// Multi-scale gradient energy of the bank features inside `region`.
///
/// `sum_levels sum_channels ||DS(region, 2^l) * grad(feature)||^2`
/// divided by `channels * sum_levels |DS(region, 2^l)|`.
pub fn info_measure(img: &GrayImage, region: &InterestMask, bank: &FilterBank) -> Result<InfoMeasure> {
    Error::check_extent(img.extent(), region.extent())?;
    if bank.is_empty() {
        return Err(Error::InvalidParameter("filter bank is empty".into()));
    }
    let pyramid = gaussian_pyramid(img.grid(), PYRAMID_LEVELS);
    let mut energy = 0.0;
    let mut support = 0usize;
    for (level, level_img) in pyramid.iter().enumerate() {
        let mask = downsample_mask(region, 1 << level)?;
        debug_assert_eq!(mask.extent(), level_img.extent());
        let count = mask.count();
        support += count;
        if count == 0 {
            continue;
        }
        let stack = stack_unchecked(level_img, bank, level);
        for channel in stack.channels() {
            energy += masked_gradient_energy(channel, &mask);
        }
    }
    if support == 0 {
        return Ok(InfoMeasure {
            value: 0.0,
            empty_support: true,
        });
    }
    Ok(InfoMeasure {
        value: energy / (bank.len() as f64 * support as f64),
        empty_support: false,
    })
}

/// Softmax of `(im_ir / c, im_vis / c)`: `(p_ir, p_vis)`.
pub fn scalar_weights(im_ir: f64, im_vis: f64, c: f64) -> Result<(f64, f64)> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidParameter(format!("softmax scaling constant {c} must be > 0")));
    }
    if im_ir < 0.0 || im_vis < 0.0 || !im_ir.is_finite() || !im_vis.is_finite() {
        return Err(Error::InvalidParameter("information measures must be finite and >= 0".into()));
    }
    Ok(softmax2(im_ir / c, im_vis / c))
}

/// Pixel weights for the interest region and scalar weights elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct SalienceWeights {
    pub w_ir: Grid,
    pub w_vis: Grid,
    pub p_ir: f64,
    pub p_vis: f64,
}

impl SalienceWeights {
    pub fn new(w_ir: Grid, w_vis: Grid, p_ir: f64, p_vis: f64) -> Result<Self> {
        Error::check_extent(w_ir.extent(), w_vis.extent())?;
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        for (&a, &b) in w_ir.as_slice().iter().zip(w_vis.as_slice()) {
            if !in_unit(a) || !in_unit(b) || (a + b - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidParameter(format!(
                    "pixel weights ({a}, {b}) must lie in [0, 1] and sum to 1"
                )));
            }
        }
        if !in_unit(p_ir) || !in_unit(p_vis) || (p_ir + p_vis - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "scalar weights ({p_ir}, {p_vis}) must lie in [0, 1] and sum to 1"
            )));
        }
        Ok(SalienceWeights {
            w_ir,
            w_vis,
            p_ir,
            p_vis,
        })
    }

    pub fn extent(&self) -> (usize, usize) {
        self.w_ir.extent()
    }
}

/// Where activity features come from.
#[derive(Clone, Debug)]
pub enum ActivityFeatures {
    Bank,
    /// Precomputed stacks for `(ir, vis)`.
    Precomputed(FeatureStack, FeatureStack),
}

#[derive(Clone, Debug)]
pub struct SalienceConfig {
    pub bank: FilterBank,
    pub softmax_c: f64,
    pub features: ActivityFeatures,
}

impl Default for SalienceConfig {
    fn default() -> Self {
        SalienceConfig {
            bank: FilterBank::default(),
            softmax_c: 1.0,
            features: ActivityFeatures::Bank,
        }
    }
}

/// Weights plus the measures they were derived from.
#[derive(Clone, Debug)]
pub struct SalienceReport {
    pub weights: SalienceWeights,
    pub activity_ir: Grid,
    pub activity_vis: Grid,
    pub im_ir: InfoMeasure,
    pub im_vis: InfoMeasure,
}

pub fn compute_salience(
    ir: &GrayImage,
    vis: &GrayImage,
    b_f: &InterestMask,
    cfg: &SalienceConfig,
) -> Result<SalienceReport> {
    Error::check_extent(ir.extent(), vis.extent())?;
    Error::check_extent(ir.extent(), b_f.extent())?;
    let (fs_ir, fs_vis) = match &cfg.features {
        ActivityFeatures::Bank => (feature_stack(ir, &cfg.bank)?, feature_stack(vis, &cfg.bank)?),
        ActivityFeatures::Precomputed(a, b) => {
            Error::check_extent(ir.extent(), a.extent())?;
            Error::check_extent(ir.extent(), b.extent())?;
            (a.clone(), b.clone())
        }
    };
    let activity_ir = activity_map(&fs_ir);
    let activity_vis = activity_map(&fs_vis);
    let (w_ir, w_vis) = pixel_weights(&activity_ir, &activity_vis)?;
    let irrelevant = b_f.complement();
    let im_ir = info_measure(ir, &irrelevant, &cfg.bank)?;
    let im_vis = info_measure(vis, &irrelevant, &cfg.bank)?;
    let (p_ir, p_vis) = scalar_weights(im_ir.value, im_vis.value, cfg.softmax_c)?;
    Ok(SalienceReport {
        weights: SalienceWeights::new(w_ir, w_vis, p_ir, p_vis)?,
        activity_ir,
        activity_vis,
        im_ir,
        im_vis,
    })
}
