//! Page rasters: binarization, connected components, line grouping.
//!
//! Images are stored row-major with a top-left origin. Blobs carry their
//! bounding box in box-file coordinates (bottom-left origin); see
//! [`image_span_to_box`] for the conversion.

#[cfg(feature = "image-io")]
pub mod io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxfile::BoxRect;

pub const DEFAULT_DPI: u32 = 300;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RasterError {
    #[error("image has zero area ({width}x{height})")]
    ZeroArea { width: u32, height: u32 },
    #[error("pixel buffer has {got} values, expected {expected}")]
    BufferSize { expected: usize, got: usize },
    #[error("dpi must be positive")]
    ZeroDpi,
}

/// 8-bit grayscale plane, 0 = black.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, RasterError> {
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(RasterError::BufferSize {
                expected,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        self.data[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn histogram(&self) -> [u64; 256] {
        let mut hist = [0u64; 256];
        for &v in &self.data {
            hist[v as usize] += 1;
        }
        hist
    }
}

/// Binary page raster; `true` is ink.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    pub width: u32,
    pub height: u32,
    pub dpi: u32,
    pub pixels: Vec<bool>,
}

impl Bitmap {
    pub fn new(width: u32, height: u32, dpi: u32) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::ZeroArea { width, height });
        }
        if dpi == 0 {
            return Err(RasterError::ZeroDpi);
        }
        Ok(Self {
            width,
            height,
            dpi,
            pixels: vec![false; width as usize * height as usize],
        })
    }

    pub fn from_pixels(
        width: u32,
        height: u32,
        dpi: u32,
        pixels: Vec<bool>,
    ) -> Result<Self, RasterError> {
        let mut b = Self::new(width, height, dpi)?;
        if pixels.len() != b.pixels.len() {
            return Err(RasterError::BufferSize {
                expected: b.pixels.len(),
                got: pixels.len(),
            });
        }
        b.pixels = pixels;
        Ok(b)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, ink: bool) {
        self.pixels[y as usize * self.width as usize + x as usize] = ink;
    }

    pub fn ink_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    /// Renders ink as 0 and background as 255.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.pixels.iter().map(|&p| if p { 0 } else { 255 }).collect(),
        }
    }

    /// Copy of the region covered by `rect` (box coordinates) as a new bitmap.
    pub fn crop(&self, rect: &BoxRect) -> Option<Bitmap> {
        if !rect.is_valid() || rect.right > self.width || rect.top > self.height {
            return None;
        }
        let (x0, y0, x1, y1) = box_to_image_span(rect, self.height);
        let mut out = Bitmap::new(x1 - x0, y1 - y0, self.dpi).ok()?;
        for y in y0..y1 {
            for x in x0..x1 {
                out.set(x - x0, y - y0, self.get(x, y));
            }
        }
        Some(out)
    }
}

/// Converts an image-space pixel span `[x0, x1) × [y0, y1)` (top-left
/// origin) into box-file coordinates on a page of `page_height` rows.
pub fn image_span_to_box(x0: u32, y0: u32, x1: u32, y1: u32, page_height: u32) -> BoxRect {
    BoxRect::new(x0, page_height - y1, x1, page_height - y0)
}

/// Inverse of [`image_span_to_box`]: returns `(x0, y0, x1, y1)`.
pub fn box_to_image_span(rect: &BoxRect, page_height: u32) -> (u32, u32, u32, u32) {
    (
        rect.left,
        page_height - rect.top,
        rect.right,
        page_height - rect.bottom,
    )
}

/// Otsu threshold over a 256-bin histogram.
///
/// Returns `t` in `1..=255` such that levels `< t` form the dark class and
/// levels `>= t` the light class, maximizing between-class variance. The
/// lowest maximizing `t` wins. `None` when fewer than two levels occur.
pub fn otsu_threshold(hist: &[u64; 256]) -> Option<u8> {
    let total: u64 = hist.iter().sum();
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(v, &n)| v as f64 * n as f64)
        .sum();
    let mut w_dark = 0u64;
    let mut sum_dark = 0f64;
    let mut best: Option<(u8, f64)> = None;
    for t in 1..256usize {
        w_dark += hist[t - 1];
        sum_dark += (t - 1) as f64 * hist[t - 1] as f64;
        let w_light = total - w_dark;
        if w_dark == 0 || w_light == 0 {
            continue;
        }
        let (wd, wl) = (w_dark as f64, w_light as f64);
        let diff = sum_dark / wd - (sum_all - sum_dark) / wl;
        let between = wd * wl * diff * diff;
        if best.is_none_or(|(_, b)| between > b) {
            best = Some((t as u8, between));
        }
    }
    best.map(|(t, _)| t)
}

/// Global Otsu binarization. Ink is dark-on-light unless `invert` is set.
/// A plane with a single gray level has no threshold and comes out blank.
pub fn binarize(gray: &GrayImage, dpi: u32, invert: bool) -> Result<Bitmap, RasterError> {
    if gray.width == 0 || gray.height == 0 {
        return Err(RasterError::ZeroArea {
            width: gray.width,
            height: gray.height,
        });
    }
    let mut bitmap = Bitmap::new(gray.width, gray.height, dpi)?;
    if let Some(t) = otsu_threshold(&gray.histogram()) {
        for (dst, &v) in bitmap.pixels.iter_mut().zip(&gray.data) {
            *dst = (v < t) != invert;
        }
    }
    Ok(bitmap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    Eight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub connectivity: Connectivity,
    /// Minimum blob size in pixels at 300 dpi; scaled by `(dpi / 300)^2`.
    pub noise_floor: u32,
    /// Line split threshold as a fraction of the median blob height.
    pub gap_factor: f64,
    /// Blob is oversized when wider than this multiple of its line's median width.
    pub oversized_factor: f64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            connectivity: Connectivity::Eight,
            noise_floor: 8,
            gap_factor: 0.4,
            oversized_factor: 1.8,
        }
    }
}

impl SegmentParams {
    pub fn scaled_noise_floor(&self, dpi: u32) -> usize {
        let scale = dpi as f64 / DEFAULT_DPI as f64;
        (self.noise_floor as f64 * scale * scale).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentBlob {
    /// Tight bounding box in box-file coordinates.
    pub bbox: BoxRect,
    pub pixel_count: usize,
    /// Member pixels in image coordinates `(x, y)`, top-left origin, sorted
    /// row-major.
    pub pixels: Vec<(u32, u32)>,
}

impl ComponentBlob {
    /// Builds a blob from image-space pixels on a page of `page_height` rows.
    /// Returns `None` for an empty pixel list.
    pub fn from_pixels(mut pixels: Vec<(u32, u32)>, page_height: u32) -> Option<Self> {
        if pixels.is_empty() {
            return None;
        }
        pixels.sort_unstable_by_key(|&(x, y)| (y, x));
        pixels.dedup();
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        for &(x, y) in &pixels {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x + 1);
            y1 = y1.max(y + 1);
        }
        Some(Self {
            bbox: image_span_to_box(x0, y0, x1, y1, page_height),
            pixel_count: pixels.len(),
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.bbox.width()
    }

    pub fn height(&self) -> u32 {
        self.bbox.height()
    }
}

/// Labels connected ink regions, drops blobs under the dpi-scaled noise
/// floor, and orders the rest by `(left, bottom)`.
pub fn connected_components(bitmap: &Bitmap, params: &SegmentParams) -> Vec<ComponentBlob> {
    let floor = params.scaled_noise_floor(bitmap.dpi).max(1);
    let (w, h) = (bitmap.width as i64, bitmap.height as i64);
    let neighbors: &[(i64, i64)] = match params.connectivity {
        Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
        Connectivity::Eight => &[
            (1, 0),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ],
    };
    let mut seen = vec![false; bitmap.pixels.len()];
    let mut blobs = Vec::new();
    let mut stack = Vec::new();
    for start in 0..bitmap.pixels.len() {
        if !bitmap.pixels[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut members = Vec::new();
        while let Some(idx) = stack.pop() {
            let (x, y) = ((idx as i64) % w, (idx as i64) / w);
            members.push((x as u32, y as u32));
            for &(dx, dy) in neighbors {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let n = (ny * w + nx) as usize;
                if bitmap.pixels[n] && !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
        if members.len() >= floor {
            blobs.extend(ComponentBlob::from_pixels(members, bitmap.height));
        }
    }
    blobs.sort_by_key(|b| (b.bbox.left, b.bbox.bottom));
    blobs
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextLine {
    pub blobs: Vec<ComponentBlob>,
    /// `(y_low, y_high)` in box coordinates, the union of member extents.
    pub baseline_band: (u32, u32),
}

/// Median of a non-empty slice; even lengths average the middle pair.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Groups blobs into text lines by clustering their vertical extents: two
/// extents share a line when they overlap or the gap between them is below
/// `gap_factor × median blob height`. Lines come out top to bottom, blobs
/// within a line left to right.
pub fn segment_lines(blobs: &[ComponentBlob], gap_factor: f64) -> Vec<TextLine> {
    if blobs.is_empty() {
        return Vec::new();
    }
    let heights: Vec<f64> = blobs.iter().map(|b| b.height() as f64).collect();
    let gap_min = gap_factor * median(&heights);

    let mut order: Vec<usize> = (0..blobs.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(blobs[i].bbox.top), blobs[i].bbox.left));

    let mut lines: Vec<(Vec<usize>, u32, u32)> = Vec::new();
    for i in order {
        let b = &blobs[i].bbox;
        match lines.last_mut() {
            // Sorted by descending top, so the next extent can only sit at
            // or below the current band's ceiling.
            Some((members, low, _high)) if (*low as f64 - b.top as f64) < gap_min => {
                members.push(i);
                *low = (*low).min(b.bottom);
            }
            _ => lines.push((vec![i], b.bottom, b.top)),
        }
    }

    lines
        .into_iter()
        .map(|(members, low, high)| {
            let mut blobs: Vec<ComponentBlob> = members.into_iter().map(|i| blobs[i].clone()).collect();
            blobs.sort_by_key(|b| (b.bbox.left, b.bbox.bottom));
            TextLine {
                blobs,
                baseline_band: (low, high),
            }
        })
        .collect()
}

/// Flags blobs wider than `factor ×` the median width of their line; these
/// are candidate under-segmentations.
pub fn flag_oversized(line: &TextLine, factor: f64) -> Vec<(&ComponentBlob, bool)> {
    if line.blobs.is_empty() {
        return Vec::new();
    }
    let widths: Vec<f64> = line.blobs.iter().map(|b| b.width() as f64).collect();
    let limit = factor * median(&widths);
    line.blobs
        .iter()
        .map(|b| (b, b.width() as f64 > limit))
        .collect()
}
