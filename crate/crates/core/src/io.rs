//! Raster and grid file formats.
//!
//! * Rasters: 8/16-bit PNG and PGM in; 8-bit PNG out (round half up).
//! * Heat maps: PFM (`Pf`, little-endian, rows stored bottom to top) or a raw
//!   little-endian `f32` grid `NAME.f32` next to a JSON sidecar `NAME.json`
//!   holding `{"width", "height", "channels", "label"}`.
//! * Instance maps: 8/16-bit PNG label image `NAME.png` plus sidecar
//!   `NAME.json` holding `{"classes": {"<id>": "<class>"}}`.
//! * Heat-map directories: `DIR/ir/*` and `DIR/vis/*` hold per-modality maps;
//!   maps directly under `DIR` are shared by both modalities. A word label
//!   comes from the sidecar, or from the file stem for PFM.

use std::collections::BTreeMap;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ColorImage, FeatureStack, GrayImage, Grid, HeatMap, InstanceMap, InterestMask};

/// A decoded raster, before the caller decides how to treat color.
#[derive(Clone, Debug)]
pub enum Raster {
    Gray(GrayImage),
    Color(ColorImage),
}

impl Raster {
    /// Grayscale rasters pass through; color rasters reduce to BT.601 luma.
    pub fn luminance(&self) -> GrayImage {
        match self {
            Raster::Gray(g) => g.clone(),
            Raster::Color(c) => c.to_luminance(),
        }
    }

    pub fn extent(&self) -> (usize, usize) {
        match self {
            Raster::Gray(g) => g.extent(),
            Raster::Color(c) => c.extent(),
        }
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn decode_dynamic(bytes: &[u8], path: &Path) -> Result<DynamicImage> {
    let reader = image::ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    if reader.format().is_none() {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: "unrecognized raster format".into(),
        });
    }
    reader.decode().map_err(|e| match e {
        image::ImageError::Unsupported(u) => Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: u.to_string(),
        },
        other => Error::Corrupt {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })
}

fn raster_from_dynamic(img: DynamicImage, path: &Path) -> Result<Raster> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let scale8 = |v: u8| v as f64 / 255.0;
    let scale16 = |v: u16| v as f64 / 65535.0;
    match img {
        DynamicImage::ImageLuma8(b) => Ok(Raster::Gray(GrayImage::new(
            w,
            h,
            b.into_raw().into_iter().map(scale8).collect(),
        )?)),
        DynamicImage::ImageLuma16(b) => Ok(Raster::Gray(GrayImage::new(
            w,
            h,
            b.into_raw().into_iter().map(scale16).collect(),
        )?)),
        DynamicImage::ImageLumaA8(b) => Ok(Raster::Gray(GrayImage::new(
            w,
            h,
            b.pixels().map(|p| scale8(p.0[0])).collect(),
        )?)),
        DynamicImage::ImageLumaA16(b) => Ok(Raster::Gray(GrayImage::new(
            w,
            h,
            b.pixels().map(|p| scale16(p.0[0])).collect(),
        )?)),
        DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => {
            let b = img.to_rgb8();
            let (mut r, mut g, mut bl) = (Vec::new(), Vec::new(), Vec::new());
            for p in b.pixels() {
                r.push(scale8(p.0[0]));
                g.push(scale8(p.0[1]));
                bl.push(scale8(p.0[2]));
            }
            Ok(Raster::Color(ColorImage::new(w, h, r, g, bl)?))
        }
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => {
            let b = img.to_rgb16();
            let (mut r, mut g, mut bl) = (Vec::new(), Vec::new(), Vec::new());
            for p in b.pixels() {
                r.push(scale16(p.0[0]));
                g.push(scale16(p.0[1]));
                bl.push(scale16(p.0[2]));
            }
            Ok(Raster::Color(ColorImage::new(w, h, r, g, bl)?))
        }
        other => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: format!("unsupported bit depth / color type {:?}", other.color()),
        }),
    }
}

/// Decode an in-memory raster. `origin` is only used in error messages.
pub fn decode_raster(bytes: &[u8], origin: &Path) -> Result<Raster> {
    raster_from_dynamic(decode_dynamic(bytes, origin)?, origin)
}

pub fn load_raster(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    decode_raster(&read_bytes(path)?, path)
}

/// Load a grayscale raster scaled to `[0, 1]`. Color rasters are rejected.
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    match load_raster(path)? {
        Raster::Gray(g) => Ok(g),
        Raster::Color(_) => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: "color raster; use load_color".into(),
        }),
    }
}

/// Load a raster as RGB; grayscale input is replicated across channels.
pub fn load_color(path: impl AsRef<Path>) -> Result<ColorImage> {
    match load_raster(path)? {
        Raster::Color(c) => Ok(c),
        Raster::Gray(g) => {
            let v = g.as_slice().to_vec();
            ColorImage::new(g.width(), g.height(), v.clone(), v.clone(), v)
        }
    }
}

#[inline]
pub fn quantize_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

fn encode_png(img: DynamicImage) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::InvalidData(format!("png encode failed: {e}")))?;
    Ok(out.into_inner())
}

pub fn encode_gray_png(img: &Grid) -> Result<Vec<u8>> {
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(
        img.width() as u32,
        img.height() as u32,
        img.as_slice().iter().map(|&v| quantize_u8(v)).collect(),
    )
    .ok_or_else(|| Error::InvalidData("buffer size".into()))?;
    encode_png(DynamicImage::ImageLuma8(buf))
}

pub fn encode_color_png(img: &ColorImage) -> Result<Vec<u8>> {
    let (w, h) = img.extent();
    let mut raw = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            raw.extend(img.pixel(x, y).iter().map(|&v| quantize_u8(v)));
        }
    }
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_raw(w as u32, h as u32, raw)
        .ok_or_else(|| Error::InvalidData("buffer size".into()))?;
    encode_png(DynamicImage::ImageRgb8(buf))
}

/// 8-bit mask rendering: 0 and 255.
pub fn encode_mask_png(mask: &InterestMask) -> Result<Vec<u8>> {
    encode_gray_png(&mask.to_grid())
}

pub fn save_gray_png(img: &Grid, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_gray_png(img)?)
}

pub fn save_color_png(img: &ColorImage, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_color_png(img)?)
}

pub fn save_mask_png(mask: &InterestMask, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_mask_png(mask)?)
}

/// Any nonzero pixel is set.
pub fn decode_mask(bytes: &[u8], origin: &Path) -> Result<InterestMask> {
    let g = decode_raster(bytes, origin)?.luminance();
    InterestMask::new(
        g.width(),
        g.height(),
        g.as_slice().iter().map(|&v| v > 0.0).collect(),
    )
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<InterestMask> {
    let path = path.as_ref();
    decode_mask(&read_bytes(path)?, path)
}

// ---- PFM ----

pub fn encode_pfm(grid: &Grid) -> Vec<u8> {
    let (w, h) = grid.extent();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    for y in (0..h).rev() {
        for &v in grid.row(y) {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8], origin: &Path) -> Result<Grid> {
    let corrupt = |reason: &str| Error::Corrupt {
        path: origin.to_path_buf(),
        reason: reason.to_string(),
    };
    // Header: three whitespace-separated tokens after the magic, then one
    // whitespace byte before the payload.
    let mut tokens = Vec::new();
    let mut pos = 0;
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(corrupt("truncated PFM header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    match tokens[0].as_str() {
        "Pf" => {}
        "PF" => {
            return Err(Error::UnsupportedFormat {
                path: origin.to_path_buf(),
                reason: "color PFM; heat maps are single-channel".into(),
            })
        }
        _ => return Err(corrupt("bad PFM magic")),
    }
    let w: usize = tokens[1].parse().map_err(|_| corrupt("bad PFM width"))?;
    let h: usize = tokens[2].parse().map_err(|_| corrupt("bad PFM height"))?;
    let scale: f64 = tokens[3].parse().map_err(|_| corrupt("bad PFM scale"))?;
    let little = scale < 0.0;
    let payload = bytes.get(pos..).unwrap_or(&[]);
    if payload.len() != w * h * 4 {
        return Err(corrupt("PFM payload length does not match header"));
    }
    let mut data = vec![0.0; w * h];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (x, file_row) = (i % w, i / w);
        data[(h - 1 - file_row) * w + x] = v as f64;
    }
    Grid::new(w, h, data).map_err(|e| corrupt(&e.to_string()))
}

// ---- raw float grids with sidecar ----

/// Sidecar descriptor for raw little-endian `f32` grids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDescriptor {
    pub width: usize,
    pub height: usize,
    #[serde(default = "one")]
    pub channels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

fn one() -> usize {
    1
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn read_descriptor(path: &Path) -> Result<GridDescriptor> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Corrupt {
        path: side,
        reason: e.to_string(),
    })
}

fn read_raw_channels(path: &Path) -> Result<(GridDescriptor, Vec<Grid>)> {
    let desc = read_descriptor(path)?;
    let bytes = read_bytes(path)?;
    let plane = desc.width * desc.height;
    if desc.channels == 0 || bytes.len() != plane * desc.channels * 4 {
        return Err(Error::Corrupt {
            path: path.to_path_buf(),
            reason: format!(
                "expected {} bytes for {}x{}x{}, found {}",
                plane * desc.channels * 4,
                desc.width,
                desc.height,
                desc.channels,
                bytes.len()
            ),
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let mut channels = Vec::with_capacity(desc.channels);
    for c in 0..desc.channels {
        channels.push(
            Grid::new(desc.width, desc.height, values[c * plane..(c + 1) * plane].to_vec()).map_err(
                |e| Error::Corrupt {
                    path: path.to_path_buf(),
                    reason: e.to_string(),
                },
            )?,
        );
    }
    Ok((desc, channels))
}

fn write_raw_channels(path: &Path, channels: &[&Grid], label: Option<&str>) -> Result<()> {
    let (w, h) = channels.first().map(|g| g.extent()).unwrap_or((0, 0));
    let mut bytes = Vec::with_capacity(w * h * channels.len() * 4);
    for g in channels {
        for &v in g.as_slice() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let desc = GridDescriptor {
        width: w,
        height: h,
        channels: channels.len(),
        label: label.map(str::to_string),
    };
    let side = serde_json::to_vec_pretty(&desc).expect("descriptor serializes");
    write_bytes(path, &bytes)?;
    write_bytes(&sidecar_path(path), &side)
}

pub fn save_raw_grid(grid: &Grid, path: impl AsRef<Path>, label: Option<&str>) -> Result<()> {
    write_raw_channels(path.as_ref(), &[grid], label)
}

pub fn load_raw_grid(path: impl AsRef<Path>) -> Result<(Grid, Option<String>)> {
    let path = path.as_ref();
    let (desc, mut channels) = read_raw_channels(path)?;
    if channels.len() != 1 {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: format!("expected 1 channel, found {}", channels.len()),
        });
    }
    Ok((channels.remove(0), desc.label))
}

pub fn save_feature_stack(stack: &FeatureStack, path: impl AsRef<Path>) -> Result<()> {
    let refs: Vec<&Grid> = stack.channels().iter().collect();
    write_raw_channels(path.as_ref(), &refs, None)
}

pub fn load_feature_stack(path: impl AsRef<Path>) -> Result<FeatureStack> {
    let (_, channels) = read_raw_channels(path.as_ref())?;
    FeatureStack::new(channels, 0)
}

/// Load a heat map from `.pfm` or raw `.f32` (+ sidecar).
pub fn load_heatmap(path: impl AsRef<Path>) -> Result<HeatMap> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("pfm") => {
            let grid = decode_pfm(&read_bytes(path)?, path)?;
            let label = path.file_stem().and_then(|s| s.to_str()).map(str::to_lowercase);
            Ok(HeatMap::new(grid, label))
        }
        Some("f32") | Some("raw") => {
            let (grid, label) = load_raw_grid(path)?;
            Ok(HeatMap::new(grid, label.map(|l| l.to_lowercase())))
        }
        _ => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: "heat maps must be .pfm or .f32 with a .json sidecar".into(),
        }),
    }
}

pub fn save_heatmap_pfm(map: &HeatMap, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pfm(map.grid()))
}

/// Per-modality heat maps read from a directory.
#[derive(Clone, Debug, Default)]
pub struct HeatmapSet {
    pub ir: Vec<HeatMap>,
    pub vis: Vec<HeatMap>,
}

fn heatmaps_in(dir: &Path) -> Result<Vec<HeatMap>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("pfm") | Some("f32") | Some("raw")
                )
        })
        .collect();
    paths.sort();
    paths.iter().map(load_heatmap).collect()
}

/// Read `DIR/ir`, `DIR/vis` and shared maps directly under `DIR`.
pub fn load_heatmap_dir(dir: impl AsRef<Path>) -> Result<HeatmapSet> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::FileNotFound(dir.to_path_buf()));
    }
    let shared = heatmaps_in(dir)?;
    let side = |name: &str| -> Result<Vec<HeatMap>> {
        let sub = dir.join(name);
        let mut maps = shared.clone();
        if sub.is_dir() {
            maps.extend(heatmaps_in(&sub)?);
        }
        Ok(maps)
    };
    Ok(HeatmapSet {
        ir: side("ir")?,
        vis: side("vis")?,
    })
}

// ---- instance maps ----

#[derive(Debug, Serialize, Deserialize)]
struct InstanceSidecar {
    classes: BTreeMap<String, String>,
}

fn parse_classes(side: &InstanceSidecar, origin: &Path) -> Result<BTreeMap<u16, String>> {
    side.classes
        .iter()
        .map(|(k, v)| {
            k.parse::<u16>()
                .map(|id| (id, v.to_lowercase()))
                .map_err(|_| Error::Corrupt {
                    path: origin.to_path_buf(),
                    reason: format!("instance id {k:?} is not a 16-bit integer"),
                })
        })
        .collect()
}

/// Decode a label image (8 or 16-bit grayscale, raw integer ids).
pub fn decode_instance_map(bytes: &[u8], classes: BTreeMap<u16, String>, origin: &Path) -> Result<InstanceMap> {
    let img = decode_dynamic(bytes, origin)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let ids: Vec<u16> = match img {
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(u16::from).collect(),
        DynamicImage::ImageLuma16(b) => b.into_raw(),
        other => {
            return Err(Error::UnsupportedFormat {
                path: origin.to_path_buf(),
                reason: format!("label image must be 8/16-bit gray, found {:?}", other.color()),
            })
        }
    };
    InstanceMap::new(w, h, ids, classes).map_err(|e| Error::Corrupt {
        path: origin.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn load_instance_map(path: impl AsRef<Path>) -> Result<InstanceMap> {
    let path = path.as_ref();
    let side_path = sidecar_path(path);
    let text = fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
    let side: InstanceSidecar = serde_json::from_str(&text).map_err(|e| Error::Corrupt {
        path: side_path.clone(),
        reason: e.to_string(),
    })?;
    let classes = parse_classes(&side, &side_path)?;
    decode_instance_map(&read_bytes(path)?, classes, path)
}

pub fn encode_instance_png(map: &InstanceMap) -> Result<Vec<u8>> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(map.width() as u32, map.height() as u32, map.ids().to_vec())
            .ok_or_else(|| Error::InvalidData("buffer size".into()))?;
    encode_png(DynamicImage::ImageLuma16(buf))
}

pub fn save_instance_map(map: &InstanceMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let side = InstanceSidecar {
        classes: map
            .classes()
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect(),
    };
    write_bytes(path, &encode_instance_png(map)?)?;
    write_bytes(
        &sidecar_path(path),
        &serde_json::to_vec_pretty(&side).expect("sidecar serializes"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_loads_with_linear_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 128, 64]);
        fs::write(&path, bytes).unwrap();
        let img = load_gray(&path).unwrap();
        assert_eq!(img.as_slice(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn missing_file_is_reported() {
        let err = load_gray("/nonexistent/x.png").unwrap_err();
        assert!(matches!(err, Error::FileNotFound(_)));
        assert!(err.to_string().contains("file not found"));
    }

    #[test]
    fn sixteen_bit_full_scale_is_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(2, 1, vec![65535, 0]).unwrap();
        DynamicImage::ImageLuma16(buf).save(&path).unwrap();
        let img = load_gray(&path).unwrap();
        assert_eq!(img.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn color_rejected_by_load_gray() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        let buf: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_raw(1, 1, vec![255, 0, 0]).unwrap();
        DynamicImage::ImageRgb8(buf).save(&path).unwrap();
        assert!(matches!(load_gray(&path), Err(Error::UnsupportedFormat { .. })));
        let c = load_color(&path).unwrap();
        assert!((c.to_luminance().get(0, 0) - 0.299).abs() < 1e-12);
    }

    #[test]
    fn corrupt_png_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.png");
        let mut bytes = encode_gray_png(&Grid::filled(4, 4, 0.5)).unwrap();
        bytes.truncate(bytes.len() / 2);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_gray(&path), Err(Error::Corrupt { .. })));
    }

    #[test]
    fn quantization_rounds_half_up() {
        assert_eq!(quantize_u8(0.5), 128);
        assert_eq!(quantize_u8(127.5 / 255.0), 128);
        assert_eq!(quantize_u8(1.0), 255);
        assert_eq!(quantize_u8(-0.1), 0);
    }

    #[test]
    fn pfm_round_trip_preserves_row_order() {
        let g = Grid::new(3, 2, vec![0.0, 0.25, 0.5, 0.75, 1.0, 0.125]).unwrap();
        let back = decode_pfm(&encode_pfm(&g), Path::new("mem")).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn heatmap_dir_layout() {
        let dir = tempfile::tempdir().unwrap();
        let car = HeatMap::new(Grid::filled(2, 2, 0.8), None);
        save_heatmap_pfm(&car, dir.path().join("ir/car.pfm")).unwrap();
        save_raw_grid(&Grid::filled(2, 2, 0.3), dir.path().join("vis/m0.f32"), Some("Tree")).unwrap();
        let set = load_heatmap_dir(dir.path()).unwrap();
        assert_eq!(set.ir.len(), 1);
        assert_eq!(set.ir[0].label(), Some("car"));
        assert_eq!(set.vis.len(), 1);
        assert_eq!(set.vis[0].label(), Some("tree"));
        assert!((set.vis[0].get(1, 1) - 0.3).abs() < 1e-7);
    }

    #[test]
    fn instance_map_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut classes = BTreeMap::new();
        classes.insert(300u16, "car".to_string());
        let map = InstanceMap::new(2, 1, vec![0, 300], classes).unwrap();
        let path = dir.path().join("labels.png");
        save_instance_map(&map, &path).unwrap();
        assert_eq!(load_instance_map(&path).unwrap(), map);
    }

    #[test]
    fn feature_stack_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let stack = FeatureStack::new(vec![Grid::filled(2, 2, 1.5), Grid::filled(2, 2, -2.0)], 0).unwrap();
        let path = dir.path().join("feat.f32");
        save_feature_stack(&stack, &path).unwrap();
        assert_eq!(load_feature_stack(&path).unwrap(), stack);
    }
}
