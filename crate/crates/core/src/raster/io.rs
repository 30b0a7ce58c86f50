//! Decoding page images from PNG, PGM/PBM and single-strip TIFF.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, ImageReader};
use thiserror::Error;

use super::GrayImage;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("reading {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("unsupported image format (expected PNG, PGM/PBM or TIFF)")]
    UnsupportedFormat,
    #[error("decoding image: {0}")]
    Decode(#[from] image::ImageError),
    #[error("image has zero area")]
    Empty,
}

/// A decoded page: grayscale plane plus the resolution found in the file
/// metadata, if any.
#[derive(Debug, Clone)]
pub struct DecodedPage {
    pub gray: GrayImage,
    pub dpi: Option<u32>,
}

pub fn load_page(path: &Path) -> Result<DecodedPage, ImageIoError> {
    let bytes = std::fs::read(path).map_err(|source| ImageIoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    decode_page(&bytes)
}

pub fn decode_page(bytes: &[u8]) -> Result<DecodedPage, ImageIoError> {
    let format = image::guess_format(bytes).map_err(|_| ImageIoError::UnsupportedFormat)?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Pnm | ImageFormat::Tiff) {
        return Err(ImageIoError::UnsupportedFormat);
    }
    let img = ImageReader::with_format(Cursor::new(bytes), format).decode()?;
    let luma = img.into_luma8();
    if luma.width() == 0 || luma.height() == 0 {
        return Err(ImageIoError::Empty);
    }
    let dpi = match format {
        ImageFormat::Png => png_dpi(bytes),
        ImageFormat::Tiff => tiff_dpi(bytes),
        _ => None,
    };
    let (w, h) = luma.dimensions();
    Ok(DecodedPage {
        gray: GrayImage {
            width: w,
            height: h,
            data: luma.into_raw(),
        },
        dpi,
    })
}

/// Encodes a grayscale plane as PNG, recording `dpi` in a pHYs chunk.
pub fn encode_png(gray: &GrayImage, dpi: u32) -> Vec<u8> {
    let mut raw = Vec::new();
    let img = image::GrayImage::from_raw(gray.width, gray.height, gray.data.clone())
        .expect("buffer size checked by GrayImage");
    img.write_to(&mut Cursor::new(&mut raw), ImageFormat::Png)
        .expect("PNG encoding into memory cannot fail");
    insert_png_phys(&raw, dpi)
}

/// Encodes a grayscale plane as binary PGM (P5).
pub fn encode_pgm(gray: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", gray.width, gray.height).into_bytes();
    out.extend_from_slice(&gray.data);
    out
}

const PNG_SIGNATURE_LEN: usize = 8;

fn png_chunks(bytes: &[u8]) -> impl Iterator<Item = (&[u8], &[u8])> {
    let mut pos = PNG_SIGNATURE_LEN;
    std::iter::from_fn(move || {
        let len = u32::from_be_bytes(bytes.get(pos..pos + 4)?.try_into().ok()?) as usize;
        let kind = bytes.get(pos + 4..pos + 8)?;
        let data = bytes.get(pos + 8..pos + 8 + len)?;
        pos += 12 + len;
        Some((kind, data))
    })
}

fn png_dpi(bytes: &[u8]) -> Option<u32> {
    let (_, data) = png_chunks(bytes).find(|(kind, _)| *kind == b"pHYs")?;
    let ppu_x = u32::from_be_bytes(data.get(0..4)?.try_into().ok()?);
    // Unit 1 means pixels per metre.
    (*data.get(8)? == 1).then(|| (ppu_x as f64 * 0.0254).round() as u32)
}

fn insert_png_phys(png: &[u8], dpi: u32) -> Vec<u8> {
    let ppm = (dpi as f64 / 0.0254).round() as u32;
    let mut data = Vec::with_capacity(9);
    data.extend_from_slice(&ppm.to_be_bytes());
    data.extend_from_slice(&ppm.to_be_bytes());
    data.push(1);
    let mut chunk = Vec::with_capacity(21);
    chunk.extend_from_slice(&(data.len() as u32).to_be_bytes());
    chunk.extend_from_slice(b"pHYs");
    chunk.extend_from_slice(&data);
    chunk.extend_from_slice(&crc32(&chunk[4..]).to_be_bytes());
    // IHDR is always first: signature + 4 len + 4 type + 13 data + 4 crc.
    let split = PNG_SIGNATURE_LEN + 25;
    let mut out = Vec::with_capacity(png.len() + chunk.len());
    out.extend_from_slice(&png[..split]);
    out.extend_from_slice(&chunk);
    out.extend_from_slice(&png[split..]);
    out
}

fn crc32(bytes: &[u8]) -> u32 {
    let mut crc = 0xffff_ffffu32;
    for &b in bytes {
        crc ^= b as u32;
        for _ in 0..8 {
            crc = if crc & 1 != 0 { 0xedb8_8320 ^ (crc >> 1) } else { crc >> 1 };
        }
    }
    !crc
}

fn tiff_dpi(bytes: &[u8]) -> Option<u32> {
    use tiff::decoder::{ifd::Value, Decoder};
    use tiff::tags::Tag;
    let mut dec = Decoder::new(Cursor::new(bytes)).ok()?;
    let res = match dec.get_tag(Tag::XResolution).ok()? {
        Value::Rational(n, d) if d != 0 => n as f64 / d as f64,
        other => other.into_f64().ok()?,
    };
    // ResolutionUnit: 2 = inch (default), 3 = centimetre.
    let unit = dec
        .get_tag(Tag::ResolutionUnit)
        .ok()
        .and_then(|v| v.into_u16().ok())
        .unwrap_or(2);
    let dpi = match unit {
        3 => res * 2.54,
        _ => res,
    };
    (dpi >= 1.0).then(|| dpi.round() as u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> GrayImage {
        let mut g = GrayImage::filled(7, 5, 240);
        g.set(2, 1, 10);
        g.set(3, 3, 90);
        g
    }

    #[test]
    fn png_roundtrip_keeps_pixels_and_dpi() {
        let g = sample();
        let page = decode_page(&encode_png(&g, 300)).unwrap();
        assert_eq!(page.gray, g);
        assert_eq!(page.dpi, Some(300));
    }

    #[test]
    fn pgm_has_no_dpi() {
        let g = sample();
        let page = decode_page(&encode_pgm(&g)).unwrap();
        assert_eq!(page.gray, g);
        assert_eq!(page.dpi, None);
    }

    #[test]
    fn pbm_decodes() {
        let page = decode_page(b"P1\n3 2\n1 0 1\n0 1 0\n").unwrap();
        assert_eq!(page.gray.data, vec![0, 255, 0, 255, 0, 255]);
    }

    #[test]
    fn tiff_reads_resolution() {
        use tiff::encoder::{colortype, Rational, TiffEncoder};
        let g = sample();
        let mut buf = Cursor::new(Vec::new());
        {
            let mut enc = TiffEncoder::new(&mut buf).unwrap();
            let mut img = enc.new_image::<colortype::Gray8>(g.width, g.height).unwrap();
            img.resolution(tiff::tags::ResolutionUnit::Inch, Rational { n: 600, d: 1 });
            img.write_data(&g.data).unwrap();
        }
        let page = decode_page(buf.get_ref()).unwrap();
        assert_eq!(page.gray, g);
        assert_eq!(page.dpi, Some(600));
    }

    #[test]
    fn rejects_other_formats() {
        assert!(matches!(decode_page(b"GIF89a...."), Err(ImageIoError::UnsupportedFormat)));
        assert!(matches!(decode_page(b"hello"), Err(ImageIoError::UnsupportedFormat)));
    }
}
