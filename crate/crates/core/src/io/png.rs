//! 8-bit grayscale PNG. Ink is stored dark on a light background: a raster
//! value `v` becomes the byte nearest `(1 − v)·255`, with ties going to the
//! darker byte so that thresholding at 0.5 gives the same image before and
//! after a round trip.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageFormat};

use super::{read_error, write_bytes, IoError};
use crate::renderer::Raster;

pub fn encode_png(r: &Raster) -> Vec<u8> {
    let bytes: Vec<u8> = r
        .data()
        .iter()
        .map(|v| ((1.0 - v.clamp(0.0, 1.0)) * 255.0 - 0.5).ceil() as u8)
        .collect();
    let img = GrayImage::from_raw(r.width() as u32, r.height() as u32, bytes)
        .expect("buffer matches dimensions");
    let mut out = Cursor::new(Vec::new());
    DynamicImage::ImageLuma8(img)
        .write_to(&mut out, ImageFormat::Png)
        .expect("encoding to memory");
    out.into_inner()
}

fn malformed(reason: impl ToString) -> IoError {
    IoError::MalformedImage {
        path: PathBuf::new(),
        reason: reason.to_string(),
    }
}

/// Decodes any PNG. Colour is reduced by luminance
/// `0.2126 R + 0.7152 G + 0.0722 B`; transparency is composited on white.
pub fn decode_png(bytes: &[u8]) -> Result<Raster, IoError> {
    if bytes.is_empty() {
        return Err(malformed("empty file"));
    }
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(malformed)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(g) => g
            .into_raw()
            .iter()
            .map(|b| 1.0 - f64::from(*b) / 255.0)
            .collect(),
        other => other
            .to_rgba32f()
            .pixels()
            .map(|p| {
                let [r, g, b, a] = p.0.map(f64::from);
                let lum = 0.2126 * r + 0.7152 * g + 0.0722 * b;
                1.0 - (a * lum + (1.0 - a))
            })
            .collect(),
    };
    Ok(Raster::from_data(w, h, data))
}

pub fn read_png(path: &Path) -> Result<Raster, IoError> {
    let bytes = std::fs::read(path).map_err(|e| read_error(path, e))?;
    decode_png(&bytes).map_err(|e| e.at(path))
}

pub fn write_png(r: &Raster, path: &Path) -> Result<(), IoError> {
    write_bytes(path, &encode_png(r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};

    #[test]
    fn round_trip_within_quantization() {
        let data: Vec<f64> = (0..35).map(|i| (i as f64 * 0.137).fract()).collect();
        let r = Raster::from_data(7, 5, data.clone());
        let back = decode_png(&encode_png(&r)).unwrap();
        assert_eq!((back.width(), back.height()), (7, 5));
        for (a, b) in data.iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn half_ink_survives_binarization() {
        let data = vec![0.5, 0.5 - 1e-9, 0.25, 0.75, 1.0, 0.0];
        let r = Raster::from_data(6, 1, data.clone());
        let back = decode_png(&encode_png(&r)).unwrap();
        for (a, b) in data.iter().zip(back.data()) {
            assert_eq!(*a >= 0.5, *b >= 0.5, "{a} became {b}");
        }
    }

    #[test]
    fn empty_input_is_malformed() {
        assert!(matches!(
            decode_png(&[]),
            Err(IoError::MalformedImage { .. })
        ));
        assert!(matches!(
            decode_png(b"not a png"),
            Err(IoError::MalformedImage { .. })
        ));
    }

    #[test]
    fn rgb_uses_luminance() {
        let px = [(200u8, 30u8, 90u8), (0, 255, 0), (17, 17, 17)];
        let mut img = RgbImage::new(3, 1);
        for (i, (r, g, b)) in px.iter().enumerate() {
            img.put_pixel(i as u32, 0, Rgb([*r, *g, *b]));
        }
        let mut buf = Cursor::new(Vec::new());
        DynamicImage::ImageRgb8(img)
            .write_to(&mut buf, ImageFormat::Png)
            .unwrap();
        let r = decode_png(buf.get_ref()).unwrap();
        for (i, (cr, cg, cb)) in px.iter().enumerate() {
            let lum = (0.2126 * f64::from(*cr) + 0.7152 * f64::from(*cg) + 0.0722 * f64::from(*cb))
                / 255.0;
            assert!((r.data()[i] - (1.0 - lum)).abs() < 1e-6);
        }
    }
}
