//! Image and mask files on disk.
//!
//! Layout: `<root>/images/*.{png,pgm,ppm}` and, for labelled data,
//! `<root>/masks/<stem>.{png,pgm}`.

use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, RgbImage};

use crate::data::{Domain, SampleRecord};
use crate::error::{Error, Result};
use crate::spectral::Spectrum;
use crate::tensor::Tensor;

const IMAGE_EXTS: [&str; 3] = ["png", "pgm", "ppm"];
const MASK_EXTS: [&str; 2] = ["png", "pgm"];

fn has_ext(path: &Path, exts: &[&str]) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| exts.iter().any(|x| x.eq_ignore_ascii_case(e)))
        .unwrap_or(false)
}

/// Decode an image into `[C, H, W]` in `[0, 1]`; grayscale stays one
/// channel, anything with colour becomes three.
pub fn read_image(path: &Path) -> Result<Tensor> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::Load { path: path.to_path_buf(), reason: io.to_string() },
        other => Error::Format { path: path.to_path_buf(), reason: other.to_string() },
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let wide = matches!(
        img,
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) | DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_)
    );
    let color = img.color().has_color();
    let data: Vec<f64> = match (color, wide) {
        (false, false) => img.to_luma8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        (false, true) => img.to_luma16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
        (true, false) => planar(&img.to_rgb8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect::<Vec<_>>(), h * w),
        (true, true) => planar(&img.to_rgb16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect::<Vec<_>>(), h * w),
    };
    let channels = if color { 3 } else { 1 };
    Tensor::new(vec![channels, h, w], data)
}

fn planar(interleaved: &[f64], plane: usize) -> Vec<f64> {
    let mut out = vec![0.0; interleaved.len()];
    for (i, px) in interleaved.chunks(3).enumerate() {
        for c in 0..3 {
            out[c * plane + i] = px[c];
        }
    }
    out
}

/// Read a mask, average channels, binarize at 0.5. Returns `[1, H, W]`.
pub fn read_mask(path: &Path) -> Result<Tensor> {
    let img = read_image(path)?;
    let &[c, h, w] = img.shape() else { unreachable!() };
    let plane = h * w;
    let data = img.data();
    let bits = (0..plane)
        .map(|i| {
            let mean = (0..c).map(|ch| data[ch * plane + i]).sum::<f64>() / c as f64;
            if mean >= 0.5 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Tensor::new(vec![1, h, w], bits)
}

fn find_mask(dir: &Path, stem: &str) -> Option<PathBuf> {
    MASK_EXTS.iter().map(|e| dir.join(format!("{stem}.{e}"))).find(|p| p.is_file())
}

/// Load every image under `<root>/images`, ordered by file stem.
///
/// A missing `images/` directory yields an empty list.
pub fn load_dir(root: &Path, with_masks: bool, domain: Domain) -> Result<Vec<SampleRecord>> {
    let images = root.join("images");
    if !images.is_dir() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(&images)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && has_ext(p, &IMAGE_EXTS))
        .collect();
    files.sort_by(|a, b| a.file_stem().cmp(&b.file_stem()).then_with(|| a.cmp(b)));

    let masks = root.join("masks");
    files
        .into_iter()
        .map(|path| {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let image = read_image(&path)?;
            let mask = if with_masks {
                let mpath = find_mask(&masks, &stem).ok_or_else(|| Error::Load {
                    path: masks.join(&stem),
                    reason: format!("no mask found for sample '{stem}'"),
                })?;
                let m = read_mask(&mpath)?;
                if m.shape()[1..] != image.shape()[1..] {
                    return Err(Error::Load {
                        path: mpath,
                        reason: format!("mask extent {:?} differs from image {:?}", m.shape(), image.shape()),
                    });
                }
                Some(m)
            } else {
                None
            };
            Ok(SampleRecord { image, mask, domain, id: stem })
        })
        .collect()
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Write a `[C, H, W]` tensor (C = 1 or 3) as an 8-bit PNG.
pub fn write_png(path: &Path, image: &Tensor) -> Result<()> {
    let &[c, h, w] = image.shape() else {
        return Err(Error::shape(format!("write_png needs [C, H, W], got {:?}", image.shape())));
    };
    let data = image.data();
    let plane = h * w;
    let res = match c {
        1 => GrayImage::from_raw(w as u32, h as u32, data.iter().map(|&v| to_u8(v)).collect())
            .expect("buffer size")
            .save_with_format(path, image::ImageFormat::Png),
        3 => {
            let raw = (0..plane).flat_map(|i| (0..3).map(move |ch| ch * plane + i)).map(|i| to_u8(data[i])).collect();
            RgbImage::from_raw(w as u32, h as u32, raw)
                .expect("buffer size")
                .save_with_format(path, image::ImageFormat::Png)
        }
        _ => return Err(Error::shape(format!("write_png supports 1 or 3 channels, got {c}"))),
    };
    res.map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// Channel-averaged `log(1 + A)` of a centered spectrum, scaled to `[0, 1]`.
pub fn spectrum_heatmap(spec: &Spectrum) -> Result<Tensor> {
    let spec = match spec.layout {
        crate::spectral::Layout::Centered => spec.clone(),
        crate::spectral::Layout::Natural => spec.center_shift()?,
    };
    let plane = spec.height * spec.width;
    let mut acc = vec![0.0; plane];
    for c in 0..spec.channels {
        for (i, a) in spec.amplitude[c * plane..(c + 1) * plane].iter().enumerate() {
            acc[i] += a.ln_1p() / spec.channels as f64;
        }
    }
    let lo = acc.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    Tensor::new(vec![1, spec.height, spec.width], acc.iter().map(|v| (v - lo) / span).collect())
}

/// Grayscale rendering of `image` with `pred == 1` pixels tinted red.
pub fn overlay(image: &Tensor, pred: &[f64]) -> Result<Tensor> {
    let &[c, h, w] = image.shape() else {
        return Err(Error::shape(format!("overlay needs [C, H, W], got {:?}", image.shape())));
    };
    let plane = h * w;
    if pred.len() != plane {
        return Err(Error::shape(format!("overlay mask has {} pixels, image {plane}", pred.len())));
    }
    let data = image.data();
    let gray: Vec<f64> = (0..plane).map(|i| (0..c).map(|ch| data[ch * plane + i]).sum::<f64>() / c as f64).collect();
    let mut out = vec![0.0; 3 * plane];
    for i in 0..plane {
        let g = gray[i];
        let (r, gg, b) = if pred[i] >= 0.5 { (0.5 + 0.5 * g, 0.3 * g, 0.3 * g) } else { (g, g, g) };
        out[i] = r;
        out[plane + i] = gg;
        out[2 * plane + i] = b;
    }
    Tensor::new(vec![3, h, w], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        let t = Tensor::new(vec![1, 1, 3], vec![0.0, 1.0, 128.0 / 255.0]).unwrap();
        write_png(&p, &t).unwrap();
        assert_eq!(read_image(&p).unwrap().to_vec(), t.to_vec());
    }

    #[test]
    fn rgb_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        let t = Tensor::new(vec![3, 1, 2], vec![1.0, 0.0, 0.0, 1.0, 51.0 / 255.0, 0.0]).unwrap();
        write_png(&p, &t).unwrap();
        assert_eq!(read_image(&p).unwrap().to_vec(), t.to_vec());
    }

    #[test]
    fn empty_dir_gives_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_dir(dir.path(), true, Domain::Source).unwrap().is_empty());
    }

    #[test]
    fn undecodable_file_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.png");
        std::fs::write(&p, b"not a png").unwrap();
        assert!(matches!(read_image(&p), Err(Error::Format { .. })));
    }
}
