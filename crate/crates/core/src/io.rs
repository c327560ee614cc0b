//! PNG and JSON input/output for frames, label maps and datasets.
//!
//! A dataset directory holds `{name}_color.png` (8-bit sRGB),
//! `{name}_depth.png` (16-bit, `depth_scale` units per meter, 0 = missing),
//! optionally `{name}_gt.png` (16-bit labels), and one `intrinsics.json`.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::rag::LabelMap;
use crate::rgbd_features::{Intrinsics, RgbdFrame};

pub const INTRINSICS_FILE: &str = "intrinsics.json";

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> Error + '_ {
    move |source| Error::Image {
        context: format!("{}", path.display()),
        source,
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        context: format!("{}", path.display()),
        source,
    }
}

pub fn read_color_png(path: &Path) -> Result<Grid<[u8; 3]>> {
    let img = image::open(path).map_err(image_err(path))?.into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Grid::from_vec(w, h, img.pixels().map(|p| p.0).collect())
}

pub fn write_color_png(path: &Path, color: &Grid<[u8; 3]>) -> Result<()> {
    let data: Vec<u8> = color.as_slice().iter().flatten().copied().collect();
    let img: ImageBuffer<Rgb<u8>, _> = ImageBuffer::from_raw(color.width() as u32, color.height() as u32, data)
        .expect("buffer matches dimensions");
    img.save(path).map_err(image_err(path))
}

fn read_u16(path: &Path) -> Result<Grid<u16>> {
    let img = image::open(path).map_err(image_err(path))?;
    if !matches!(img.color(), image::ColorType::L16 | image::ColorType::L8) {
        return Err(Error::Input(format!("{}: expected a single-channel PNG", path.display())));
    }
    let img = img.into_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Grid::from_vec(w, h, img.pixels().map(|p| p.0[0]).collect())
}

fn write_u16(path: &Path, g: &Grid<u16>) -> Result<()> {
    let img: ImageBuffer<Luma<u16>, _> =
        ImageBuffer::from_raw(g.width() as u32, g.height() as u32, g.as_slice().to_vec()).expect("buffer matches dimensions");
    img.save(path).map_err(image_err(path))
}

/// Depth in meters from a 16-bit PNG holding `depth_scale` units per meter.
pub fn read_depth_png(path: &Path, depth_scale: f64) -> Result<Grid<f64>> {
    Ok(read_u16(path)?.map(|&d| d as f64 / depth_scale))
}

/// Writes metric depth as 16-bit units; missing depth becomes 0.
pub fn write_depth_png(path: &Path, depth: &Grid<f64>, depth_scale: f64) -> Result<()> {
    let g = depth.map(|&z| {
        if z.is_finite() && z > 0.0 {
            (z * depth_scale).round().clamp(0.0, u16::MAX as f64) as u16
        } else {
            0
        }
    });
    write_u16(path, &g)
}

pub fn read_label_png(path: &Path) -> Result<LabelMap> {
    Ok(read_u16(path)?.map(|&l| l as u32))
}

pub fn write_label_png(path: &Path, labels: &LabelMap) -> Result<()> {
    if let Some(&l) = labels.as_slice().iter().find(|&&l| l > u16::MAX as u32) {
        return Err(Error::Input(format!("label {l} does not fit a 16-bit PNG")));
    }
    write_u16(path, &labels.map(|&l| l as u16))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        context: format!("{}", path.display()),
        source,
    })
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        context: format!("{}", path.display()),
        source,
    })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn read_intrinsics(path: &Path) -> Result<Intrinsics> {
    let k: Intrinsics = read_json(path)?;
    k.validate()?;
    Ok(k)
}

/// Writes `intrinsics.json` into a dataset directory.
pub fn write_intrinsics(dir: &Path, intrinsics: &Intrinsics) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_json(&dir.join(INTRINSICS_FILE), intrinsics)
}

pub fn load_frame(color: &Path, depth: &Path, intrinsics: &Intrinsics) -> Result<RgbdFrame<f64>> {
    let c = read_color_png(color)?;
    let d = read_depth_png(depth, intrinsics.depth_scale)?;
    RgbdFrame::new(c, d, intrinsics.clone())
}

/// Writes `{name}_color.png`, `{name}_depth.png` and, when given,
/// `{name}_gt.png` into `dir`.
pub fn save_frame(dir: &Path, name: &str, frame: &RgbdFrame<f64>, gt: Option<&LabelMap>) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_color_png(&dir.join(format!("{name}_color.png")), &frame.color)?;
    write_depth_png(&dir.join(format!("{name}_depth.png")), &frame.depth, frame.intrinsics.depth_scale)?;
    if let Some(gt) = gt {
        write_label_png(&dir.join(format!("{name}_gt.png")), gt)?;
    }
    Ok(())
}

/// One image of a dataset directory.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetEntry {
    pub name: String,
    pub color: PathBuf,
    pub depth: PathBuf,
    pub gt: Option<PathBuf>,
}

impl DatasetEntry {
    pub fn load(&self, intrinsics: &Intrinsics) -> Result<RgbdFrame<f64>> {
        load_frame(&self.color, &self.depth, intrinsics)
    }
}

/// A dataset directory: entries sorted by name and the shared intrinsics.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub entries: Vec<DatasetEntry>,
    pub intrinsics: Intrinsics,
}

impl Dataset {
    /// Lists `{name}_color.png` files with a matching depth image. Color
    /// images without depth are an input error naming the files.
    pub fn open(dir: &Path) -> Result<Self> {
        let intrinsics = read_intrinsics(&dir.join(INTRINSICS_FILE))?;
        let mut entries = Vec::new();
        let mut missing = Vec::new();
        for item in fs::read_dir(dir).map_err(io_err(dir))? {
            let path = item.map_err(io_err(dir))?.path();
            let Some(file) = path.file_name().and_then(|f| f.to_str()) else { continue };
            let Some(name) = file.strip_suffix("_color.png") else { continue };
            let depth = dir.join(format!("{name}_depth.png"));
            if !depth.is_file() {
                missing.push(depth.display().to_string());
                continue;
            }
            let gt = dir.join(format!("{name}_gt.png"));
            entries.push(DatasetEntry {
                name: name.to_string(),
                color: path.clone(),
                depth,
                gt: gt.is_file().then_some(gt),
            });
        }
        if !missing.is_empty() {
            return Err(Error::Input(format!("missing depth images: {}", missing.join(", "))));
        }
        if entries.is_empty() {
            return Err(Error::Input(format!("no *_color.png images in {}", dir.display())));
        }
        entries.sort_by(|a, b| a.name.cmp(&b.name));
        Ok(Self { entries, intrinsics })
    }
}

/// Pairs `{name}_{suffix}.png` in `test_dir` with `{name}_gt.png` in
/// `gt_dir`. Unmatched files on either side are an input error listing them.
pub fn match_label_pairs(test_dir: &Path, gt_dir: &Path, suffix: &str) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    let list = |dir: &Path, suf: &str| -> Result<Vec<(String, PathBuf)>> {
        let mut v = Vec::new();
        for item in fs::read_dir(dir).map_err(io_err(dir))? {
            let path = item.map_err(io_err(dir))?.path();
            if let Some(name) = path.file_name().and_then(|f| f.to_str()).and_then(|f| f.strip_suffix(suf)) {
                v.push((name.to_string(), path.clone()));
            }
        }
        v.sort();
        Ok(v)
    };
    let tests = list(test_dir, &format!("_{suffix}.png"))?;
    let gts = list(gt_dir, "_gt.png")?;
    let gt_names: std::collections::BTreeMap<_, _> = gts.iter().cloned().collect();
    let test_names: std::collections::BTreeSet<_> = tests.iter().map(|t| t.0.clone()).collect();
    let mut unmatched: Vec<String> = tests
        .iter()
        .filter(|t| !gt_names.contains_key(&t.0))
        .map(|t| t.1.display().to_string())
        .collect();
    unmatched.extend(gts.iter().filter(|g| !test_names.contains(&g.0)).map(|g| g.1.display().to_string()));
    if !unmatched.is_empty() {
        return Err(Error::Input(format!("unmatched label maps: {}", unmatched.join(", "))));
    }
    if tests.is_empty() {
        return Err(Error::Input(format!("no *_{suffix}.png label maps in {}", test_dir.display())));
    }
    Ok(tests.into_iter().map(|(n, p)| (n.clone(), p, gt_names[&n].clone())).collect())
}
