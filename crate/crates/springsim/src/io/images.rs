//! PNG input and output for the float image type used by the renderer and
//! the image metrics. Three-channel images are written as 8-bit RGB, single
//! channel as 8-bit grayscale; values are clamped to [0, 1] and scaled by
//! 255 with round-to-nearest.

use std::path::Path;

use crate::error::{Error, Result};
use crate::splat::Image;

pub fn save_png(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if image.width == 0 || image.height == 0 {
        return Err(Error::InvalidArgument("cannot write an empty image".into()));
    }
    let quantize = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let bytes: Vec<u8> = image.data.iter().map(|&v| quantize(v)).collect();
    let (w, h) = (image.width as u32, image.height as u32);
    match image.channels {
        1 => image::GrayImage::from_raw(w, h, bytes)
            .expect("buffer length matches dimensions")
            .save(path)
            .map_err(|e| Error::Image(format!("writing {}: {e}", path.display()))),
        3 => image::RgbImage::from_raw(w, h, bytes)
            .expect("buffer length matches dimensions")
            .save(path)
            .map_err(|e| Error::Image(format!("writing {}: {e}", path.display()))),
        c => Err(Error::InvalidArgument(format!(
            "PNG output supports 1 or 3 channels, got {c}"
        ))),
    }
}

pub fn load_png(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let dynamic = image::open(path)
        .map_err(|e| Error::Image(format!("reading {}: {e}", path.display())))?;
    let (width, height, channels, bytes) = match dynamic {
        image::DynamicImage::ImageLuma8(img) => {
            let (w, h) = img.dimensions();
            (w, h, 1, img.into_raw())
        }
        other => {
            let img = other.into_rgb8();
            let (w, h) = img.dimensions();
            (w, h, 3, img.into_raw())
        }
    };
    Ok(Image {
        width: width as usize,
        height: height as usize,
        channels,
        data: bytes.into_iter().map(|b| b as f64 / 255.0).collect(),
    })
}
