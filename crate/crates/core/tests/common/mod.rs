//! Straight-line reference implementations and fixtures for integration tests.
//!
//! Everything here works on plain `Vec<Vec<f64>>` images indexed `[y][x]`,
//! with full 2-D windows and no shared code from the library.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use textfuse_core::{GrayImage, Grid, HeatMap, InstanceMap, InterestMask};

pub type Img = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(r: &mut ChaCha8Rng, w: usize, h: usize) -> GrayImage {
    GrayImage::new(w, h, (0..w * h).map(|_| r.random::<f64>()).collect()).unwrap()
}

pub fn random_mask(r: &mut ChaCha8Rng, w: usize, h: usize, p: f64) -> InterestMask {
    let bits: Vec<u8> = (0..w * h).map(|_| u8::from(r.random::<f64>() < p)).collect();
    InterestMask::from_values(w, h, &bits).unwrap()
}

/// Random instance map made of up to `n` axis-aligned boxes; later boxes
/// overwrite earlier ones.
pub fn random_instances(r: &mut ChaCha8Rng, w: usize, h: usize, n: u16) -> InstanceMap {
    let mut ids = vec![0u16; w * h];
    let mut classes = BTreeMap::new();
    for id in 1..=n {
        let (x0, y0) = (r.random_range(0..w), r.random_range(0..h));
        let (x1, y1) = (r.random_range(x0..w) + 1, r.random_range(y0..h) + 1);
        for y in y0..y1 {
            for x in x0..x1 {
                ids[y * w + x] = id;
            }
        }
    }
    for &id in &ids {
        if id != 0 {
            classes.insert(id, "person".to_string());
        }
    }
    InstanceMap::new(w, h, ids, classes).unwrap()
}

pub fn to_img(g: &Grid) -> Img {
    (0..g.height()).map(|y| (0..g.width()).map(|x| g.get(x, y)).collect()).collect()
}

fn dims(a: &Img) -> (usize, usize) {
    (a[0].len(), a.len())
}

/// Mirror index without edge repetition.
fn mirror(mut i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// Same-size correlation with mirror padding.
fn correlate(a: &Img, k: &Img) -> Img {
    let (w, h) = dims(a);
    let ks = k.len() as isize;
    let r = ks / 2;
    let mut out = vec![vec![0.0; w]; h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for ky in 0..ks {
                for kx in 0..ks {
                    let sy = mirror(y as isize + ky - r, h);
                    let sx = mirror(x as isize + kx - r, w);
                    s += k[ky as usize][kx as usize] * a[sy][sx];
                }
            }
            out[y][x] = s;
        }
    }
    out
}

fn gauss2d(n: usize, sigma: f64) -> Img {
    let c = (n as f64 - 1.0) / 2.0;
    let mut k = vec![vec![0.0; n]; n];
    let mut total = 0.0;
    for (y, row) in k.iter_mut().enumerate() {
        for (x, v) in row.iter_mut().enumerate() {
            let (dx, dy) = (x as f64 - c, y as f64 - c);
            *v = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            total += *v;
        }
    }
    for row in k.iter_mut() {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    k
}

/// Window statistics `(mean_a, mean_b, var_a, var_b, cov)` at valid top-left
/// corner `(x0, y0)`, in centered form.
fn window_stats(a: &Img, b: &Img, k: &Img, x0: usize, y0: usize) -> (f64, f64, f64, f64, f64) {
    let n = k.len();
    let (mut ma, mut mb) = (0.0, 0.0);
    for u in 0..n {
        for v in 0..n {
            ma += k[u][v] * a[y0 + u][x0 + v];
            mb += k[u][v] * b[y0 + u][x0 + v];
        }
    }
    let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
    for u in 0..n {
        for v in 0..n {
            let da = a[y0 + u][x0 + v] - ma;
            let db = b[y0 + u][x0 + v] - mb;
            va += k[u][v] * da * da;
            vb += k[u][v] * db * db;
            cov += k[u][v] * da * db;
        }
    }
    (ma, mb, va, vb, cov)
}

pub fn ssim(a: &Img, b: &Img) -> f64 {
    let (w, h) = dims(a);
    let k = gauss2d(11, 1.5);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    let mut count = 0;
    for y0 in 0..=h - 11 {
        for x0 in 0..=w - 11 {
            let (ma, mb, va, vb, cov) = window_stats(a, b, &k, x0, y0);
            total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

fn sobel(a: &Img) -> (Img, Img) {
    let sx = vec![vec![-1.0, 0.0, 1.0], vec![-2.0, 0.0, 2.0], vec![-1.0, 0.0, 1.0]];
    let sy = vec![vec![-1.0, -2.0, -1.0], vec![0.0, 0.0, 0.0], vec![1.0, 2.0, 1.0]];
    (correlate(a, &sx), correlate(a, &sy))
}

pub fn qabf(f: &Img, a: &Img, b: &Img) -> f64 {
    let (w, h) = dims(f);
    let half_pi = std::f64::consts::PI / 2.0;
    let edges = |img: &Img| {
        let (mut gx, mut gy) = sobel(img);
        for row in gx.iter_mut().chain(gy.iter_mut()) {
            for v in row.iter_mut() {
                if v.abs() < 1e-12 {
                    *v = 0.0;
                }
            }
        }
        let mut g = vec![vec![0.0; w]; h];
        let mut al = vec![vec![0.0; w]; h];
        for y in 0..h {
            for x in 0..w {
                g[y][x] = (gx[y][x].powi(2) + gy[y][x].powi(2)).sqrt();
                al[y][x] = if gx[y][x] == 0.0 { half_pi } else { (gy[y][x] / gx[y][x]).atan() };
            }
        }
        (g, al)
    };
    let (gf, af) = edges(f);
    let (ga, aa) = edges(a);
    let (gb, ab) = edges(b);
    let (kg, sg, ka, sa) = (-15.0f64, 0.5f64, -22.0f64, 0.8f64);
    let gamma_g = 1.0 + (kg * (1.0 - sg)).exp();
    let gamma_a = 1.0 + (ka * (1.0 - sa)).exp();
    let q = |gs: f64, as_: f64, gfv: f64, afv: f64| {
        let rel_g = if gs == 0.0 && gfv == 0.0 {
            0.0
        } else if gs > gfv {
            gfv / gs
        } else {
            gs / gfv
        };
        let rel_a = 1.0 - (as_ - afv).abs() / half_pi;
        let qg = gamma_g / (1.0 + (kg * (rel_g - sg)).exp());
        let qa = gamma_a / (1.0 + (ka * (rel_a - sa)).exp());
        qg * qa
    };
    let (mut num, mut den) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            if ga[y][x] == 0.0 && gb[y][x] == 0.0 {
                continue;
            }
            num += q(ga[y][x], aa[y][x], gf[y][x], af[y][x]) * ga[y][x];
            num += q(gb[y][x], ab[y][x], gf[y][x], af[y][x]) * gb[y][x];
            den += ga[y][x] + gb[y][x];
        }
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).clamp(0.0, 1.0)
    }
}

/// Filter over valid positions with a full 2-D window.
fn filter_valid(a: &Img, k: &Img) -> Img {
    if a.is_empty() {
        return Vec::new();
    }
    let (w, h) = dims(a);
    let n = k.len();
    if w < n || h < n {
        return Vec::new();
    }
    let mut out = vec![vec![0.0; w - n + 1]; h - n + 1];
    for (y, row) in out.iter_mut().enumerate() {
        for (x, v) in row.iter_mut().enumerate() {
            for u in 0..n {
                for t in 0..n {
                    *v += k[u][t] * a[y + u][x + t];
                }
            }
        }
    }
    out
}

pub fn vif(reference: &Img, distorted: &Img) -> f64 {
    let eps = 1e-10;
    let sigma_n = 2.0;
    let mut r: Img = reference.iter().map(|row| row.iter().map(|v| v * 255.0).collect()).collect();
    let mut d: Img = distorted.iter().map(|row| row.iter().map(|v| v * 255.0).collect()).collect();
    let (mut num, mut den) = (0.0, 0.0);
    for scale in 1..=4u32 {
        let n = 2usize.pow(5 - scale) + 1;
        let k = gauss2d(n, n as f64 / 5.0);
        if scale > 1 {
            let decim = |img: Img| -> Img { img.iter().step_by(2).map(|row| row.iter().step_by(2).copied().collect()).collect() };
            r = decim(filter_valid(&r, &k));
            d = decim(filter_valid(&d, &k));
        }
        if r.is_empty() || r.len() < n || r[0].len() < n {
            continue;
        }
        let (w, h) = dims(&r);
        for y0 in 0..=h - n {
            for x0 in 0..=w - n {
                let (_, _, s1, s2, s12) = window_stats(&r, &d, &k, x0, y0);
                let (mut s1, s2) = (s1.max(0.0), s2.max(0.0));
                let mut g = s12 / (s1 + eps);
                let mut sv = s2 - g * s12;
                if s1 < eps {
                    g = 0.0;
                    sv = s2;
                    s1 = 0.0;
                }
                if s2 < eps {
                    g = 0.0;
                    sv = 0.0;
                }
                if g < 0.0 {
                    sv = s2;
                    g = 0.0;
                }
                if sv <= eps {
                    sv = eps;
                }
                num += (1.0 + g * g * s1 / (sv + sigma_n)).log10();
                den += (1.0 + s1 / sigma_n).log10();
            }
        }
    }
    if den == 0.0 {
        return if reference == distorted { 1.0 } else { 0.0 };
    }
    num / den
}

/// Identity, 5x5 Gaussian (sigma 1), Laplacian, |Sobel-x|, |Sobel-y|.
pub fn bank_features(a: &Img) -> Vec<Img> {
    let lap = vec![vec![0.0, 1.0, 0.0], vec![1.0, -4.0, 1.0], vec![0.0, 1.0, 0.0]];
    let (sx, sy) = sobel(a);
    let abs = |m: Img| -> Img { m.into_iter().map(|r| r.into_iter().map(f64::abs).collect()).collect() };
    vec![a.clone(), correlate(a, &gauss2d(5, 1.0)), correlate(a, &lap), abs(sx), abs(sy)]
}

/// Multi-scale masked gradient energy, `None` when the mask is empty at
/// every level.
pub fn info_measure(img: &Img, mask: &[Vec<bool>]) -> Option<f64> {
    let mut level = img.clone();
    let mut energy = 0.0;
    let mut support = 0usize;
    let g5 = gauss2d(5, 1.0);
    for l in 0..5 {
        if l > 0 {
            let blurred = correlate(&level, &g5);
            level = blurred.iter().step_by(2).map(|row| row.iter().step_by(2).copied().collect()).collect();
        }
        let (w, h) = dims(&level);
        let s = 1usize << l;
        let m: Vec<Vec<bool>> = (0..h)
            .map(|cy| {
                (0..w)
                    .map(|cx| {
                        let mut any = false;
                        for y in cy * s..(cy * s + s).min(mask.len()) {
                            for x in cx * s..(cx * s + s).min(mask[0].len()) {
                                any |= mask[y][x];
                            }
                        }
                        any
                    })
                    .collect()
            })
            .collect();
        for row in &m {
            support += row.iter().filter(|&&b| b).count();
        }
        for ch in bank_features(&level) {
            let (gx, gy) = sobel(&ch);
            for y in 0..h {
                for x in 0..w {
                    if m[y][x] {
                        energy += gx[y][x].powi(2) + gy[y][x].powi(2);
                    }
                }
            }
        }
    }
    if support == 0 {
        None
    } else {
        Some(energy / (5.0 * support as f64))
    }
}

pub fn mask_rows(m: &InterestMask) -> Vec<Vec<bool>> {
    let (w, h) = m.extent();
    (0..h).map(|y| (0..w).map(|x| m.get(x, y)).collect()).collect()
}

/// Write an `n`-pair dataset with instance maps and an index under `root`.
/// Every pair has a "person" box and a "car" box; odd pairs also get a
/// supplied heat-map directory.
pub fn write_toy_dataset(root: &std::path::Path, n: usize, size: usize) -> std::path::PathBuf {
    use textfuse_core::io;
    let mut r = rng(1234);
    let mut records = Vec::new();
    for i in 0..n {
        let id = format!("pair{i:02}");
        let ir = random_image(&mut r, size, size);
        let vis = random_image(&mut r, size, size);
        let mut ids = vec![0u16; size * size];
        let q = size / 4;
        for y in q..2 * q {
            for x in q..2 * q + i % q {
                ids[y * size + x] = 1;
            }
        }
        for y in 2 * q..3 * q {
            for x in 2 * q..3 * q {
                ids[y * size + x] = 2;
            }
        }
        let classes = BTreeMap::from([(1u16, "person".to_string()), (2u16, "car".to_string())]);
        let inst = InstanceMap::new(size, size, ids, classes).unwrap();
        io::save_gray_png(&ir, root.join(format!("ir/{id}.png"))).unwrap();
        io::save_gray_png(&vis, root.join(format!("vis/{id}.png"))).unwrap();
        io::save_instance_map(&inst, root.join(format!("instances/{id}.png"))).unwrap();
        let mut rec = serde_json::json!({
            "id": id,
            "ir": format!("ir/{id}.png"),
            "vis": format!("vis/{id}.png"),
            "instances": format!("instances/{id}.png"),
            "descriptions": [
                {"annotator_class": "group", "sentences": ["A person walks on the road.", "A car is parked.", "Trees line the street."]},
                {"annotator_class": "specialist", "sentences": ["One pedestrian."]}
            ]
        });
        if i % 2 == 1 {
            let heat = HeatMap::new(
                Grid::from_fn(size / 4, size / 4, |x, y| if (1..3).contains(&x) && (1..3).contains(&y) { 0.8 } else { 0.1 }),
                Some("person".into()),
            );
            io::save_heatmap_pfm(&heat, root.join(format!("heatmaps/{id}/ir/person.pfm"))).unwrap();
            io::save_heatmap_pfm(&heat, root.join(format!("heatmaps/{id}/vis/person.pfm"))).unwrap();
            rec["heatmaps"] = serde_json::json!(format!("heatmaps/{id}"));
        }
        records.push(rec);
    }
    let index = root.join("index.json");
    std::fs::write(&index, serde_json::to_string_pretty(&serde_json::json!({"version": 1, "records": records})).unwrap()).unwrap();
    index
}
