//! Glyph normalization and the two feature families used by the classifier.
//!
//! * Micro features: a 4×4 grid of cells, each holding an 8-bin histogram
//!   of contour step directions, traced on the 32×32 normalized glyph.
//! * CN features: eight shape statistics used to prune candidate classes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binio::{self, BinError, Reader};
use crate::boxfile::{BoxPage, BoxRect};
use crate::raster::{self, Bitmap, ComponentBlob, Connectivity, SegmentParams};

/// Side of the normalized glyph grid.
pub const GRID: usize = 32;
/// Spatial cells per side for micro features.
pub const CELLS: usize = 4;
/// Quantized contour directions.
pub const DIRECTIONS: usize = 8;
pub const MICRO_DIM: usize = CELLS * CELLS * DIRECTIONS;
pub const CN_DIM: usize = 8;

const TR_MAGIC: &[u8; 4] = b"GFTR";
const TR_VERSION: u32 = 1;

/// Grid constants stamped into every bundle so a model can be checked
/// against the code that reads it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConstants {
    pub grid: u32,
    pub cells: u32,
    pub directions: u32,
}

impl FeatureConstants {
    pub const CURRENT: Self = Self {
        grid: GRID as u32,
        cells: CELLS as u32,
        directions: DIRECTIONS as u32,
    };
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("box {index} ({glyph:?}) lies outside the {width}x{height} page")]
    BoxOutsidePage {
        index: usize,
        glyph: String,
        width: u32,
        height: u32,
    },
    #[error("box {index}: glyph {glyph:?} is not a single scalar")]
    BadLabel { index: usize, glyph: String },
    #[error("training file: {0}")]
    Format(#[from] BinError),
}

/// Shape statistics of the raw blob, taken before scaling.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SourceShape {
    pub aspect: f64,
    pub centroid_x: f64,
    pub centroid_y: f64,
    pub mxx: f64,
    pub myy: f64,
    pub mxy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedGlyph {
    /// Row-major, top-left origin, `true` is ink.
    pub grid: Vec<bool>,
    pub source_bbox: BoxRect,
    pub scale: f64,
    pub shape: SourceShape,
}

impl NormalizedGlyph {
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.grid[y * GRID + x]
    }

    pub fn ink_count(&self) -> usize {
        self.grid.iter().filter(|&&p| p).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlyphFeatures {
    pub micro: [f32; MICRO_DIM],
    /// aspect, centroid x, centroid y, mxx, myy, mxy, ink density,
    /// contour count / 8.
    pub cn: [f32; CN_DIM],
}

impl GlyphFeatures {
    pub fn micro_is_zero(&self) -> bool {
        self.micro.iter().all(|&v| v == 0.0)
    }
}

/// Scales a blob so its longer side spans the grid (nearest neighbor,
/// aspect preserved) and centers its ink centroid in the grid.
pub fn normalize_glyph(blob: &ComponentBlob) -> NormalizedGlyph {
    let w = blob.width() as usize;
    let h = blob.height() as usize;
    let x0 = blob.bbox.left;
    let y0 = blob.pixels.iter().map(|p| p.1).min().unwrap_or(0);

    let mut local = vec![false; w * h];
    for &(x, y) in &blob.pixels {
        local[(y - y0) as usize * w + (x - x0) as usize] = true;
    }

    let scale = GRID as f64 / w.max(h).max(1) as f64;
    let sw = ((w as f64 * scale).round() as usize).clamp(1, GRID);
    let sh = ((h as f64 * scale).round() as usize).clamp(1, GRID);
    let mut scaled = Vec::new();
    for j in 0..sh {
        let sy = (((j as f64 + 0.5) / scale) as usize).min(h - 1);
        for i in 0..sw {
            let sx = (((i as f64 + 0.5) / scale) as usize).min(w - 1);
            if local[sy * w + sx] {
                scaled.push((i as i64, j as i64));
            }
        }
    }

    let mut grid = vec![false; GRID * GRID];
    if !scaled.is_empty() {
        let n = scaled.len() as f64;
        let cx = scaled.iter().map(|p| p.0 as f64 + 0.5).sum::<f64>() / n;
        let cy = scaled.iter().map(|p| p.1 as f64 + 0.5).sum::<f64>() / n;
        let half = GRID as f64 / 2.0;
        let (ox, oy) = ((half - cx).round() as i64, (half - cy).round() as i64);
        for (i, j) in scaled {
            let (gx, gy) = (i + ox, j + oy);
            if (0..GRID as i64).contains(&gx) && (0..GRID as i64).contains(&gy) {
                grid[gy as usize * GRID + gx as usize] = true;
            }
        }
    }

    NormalizedGlyph {
        grid,
        source_bbox: blob.bbox,
        scale,
        shape: source_shape(blob, x0, y0),
    }
}

fn source_shape(blob: &ComponentBlob, x0: u32, y0: u32) -> SourceShape {
    let (w, h) = (blob.width() as f64, blob.height() as f64);
    let n = blob.pixels.len() as f64;
    if n == 0.0 {
        return SourceShape::default();
    }
    // y grows upward for the statistics, matching box coordinates.
    let coords = || {
        blob.pixels
            .iter()
            .map(|&(x, y)| ((x - x0) as f64 + 0.5, h - ((y - y0) as f64 + 0.5)))
    };
    let mx = coords().map(|c| c.0).sum::<f64>() / n;
    let my = coords().map(|c| c.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in coords() {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    SourceShape {
        aspect: w / h,
        centroid_x: mx / w,
        centroid_y: my / h,
        mxx: sxx / n / (w * w),
        myy: syy / n / (h * h),
        mxy: sxy / n / (w * h),
    }
}

// (drow, dcol) for E, NE, N, NW, W, SW, S, SE: increasing index turns
// counterclockwise on screen.
const DIRS: [(i32, i32); 8] = [
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
];

fn dir_index(dr: i32, dc: i32) -> usize {
    DIRS.iter()
        .position(|&d| d == (dr, dc))
        .expect("contour steps are unit 8-neighbor moves")
}

/// Traces all outer and hole borders of an 8-connected binary grid
/// (Suzuki–Abe border following). Each contour is its closed point
/// sequence in `(row, col)` grid coordinates, first point repeated at the
/// end; an isolated pixel yields a single point.
pub fn trace_contours(grid: &[bool], width: usize, height: usize) -> Vec<Vec<(i32, i32)>> {
    let pw = width + 2;
    let ph = height + 2;
    let mut f = vec![0i32; pw * ph];
    for y in 0..height {
        for x in 0..width {
            if grid[y * width + x] {
                f[(y + 1) * pw + x + 1] = 1;
            }
        }
    }
    let at = |r: i32, c: i32| r as usize * pw + c as usize;

    let mut contours = Vec::new();
    let mut nbd = 1i32;
    for i in 1..(ph - 1) as i32 {
        for j in 1..(pw - 1) as i32 {
            let v = f[at(i, j)];
            let from = if v == 1 && f[at(i, j - 1)] == 0 {
                (i, j - 1)
            } else if v >= 1 && f[at(i, j + 1)] == 0 {
                (i, j + 1)
            } else {
                continue;
            };
            nbd += 1;

            // Clockwise search for the first ink neighbor.
            let d0 = dir_index(from.0 - i, from.1 - j);
            let first = (0..8).map(|k| (d0 + 8 - k) % 8).find_map(|d| {
                let (r, c) = (i + DIRS[d].0, j + DIRS[d].1);
                (f[at(r, c)] != 0).then_some((r, c))
            });
            let Some(p1) = first else {
                f[at(i, j)] = -nbd;
                contours.push(vec![(i - 1, j - 1)]);
                continue;
            };

            let mut points = vec![(i - 1, j - 1)];
            let (mut p2, mut p3) = (p1, (i, j));
            loop {
                let d = dir_index(p2.0 - p3.0, p2.1 - p3.1);
                let mut east_zero = false;
                let mut p4 = p2;
                for k in 1..=8 {
                    let dd = (d + k) % 8;
                    let (r, c) = (p3.0 + DIRS[dd].0, p3.1 + DIRS[dd].1);
                    if f[at(r, c)] != 0 {
                        p4 = (r, c);
                        break;
                    }
                    if dd == 0 {
                        east_zero = true;
                    }
                }
                let cell = &mut f[at(p3.0, p3.1)];
                if east_zero {
                    *cell = -nbd;
                } else if *cell == 1 {
                    *cell = nbd;
                }
                points.push((p4.0 - 1, p4.1 - 1));
                if p4 == (i, j) && p3 == p1 {
                    break;
                }
                p2 = p3;
                p3 = p4;
            }
            contours.push(points);
        }
    }
    contours
}

pub fn extract_features(glyph: &NormalizedGlyph) -> GlyphFeatures {
    let contours = trace_contours(&glyph.grid, GRID, GRID);
    let cell_size = (GRID / CELLS) as f64;
    let mut micro = [0f64; MICRO_DIM];
    for contour in &contours {
        for step in contour.windows(2) {
            let (a, b) = (step[0], step[1]);
            let dir = dir_index(b.0 - a.0, b.1 - a.1);
            let mid_row = (a.0 + b.0) as f64 / 2.0 + 0.5;
            let mid_col = (a.1 + b.1) as f64 / 2.0 + 0.5;
            let cy = ((mid_row / cell_size) as usize).min(CELLS - 1);
            let cx = ((mid_col / cell_size) as usize).min(CELLS - 1);
            micro[(cy * CELLS + cx) * DIRECTIONS + dir] += 1.0;
        }
    }
    let norm = micro.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut out = [0f32; MICRO_DIM];
    if norm > 0.0 {
        for (o, v) in out.iter_mut().zip(micro) {
            *o = (v / norm) as f32;
        }
    }

    let s = &glyph.shape;
    let density = glyph.ink_count() as f64 / (GRID * GRID) as f64;
    let cn = [
        s.aspect,
        s.centroid_x,
        s.centroid_y,
        s.mxx,
        s.myy,
        s.mxy,
        density,
        contours.len() as f64 / 8.0,
    ]
    .map(|v| v as f32);
    GlyphFeatures { micro: out, cn }
}

/// Normalizes and featurizes a blob in one call.
pub fn featurize(blob: &ComponentBlob) -> GlyphFeatures {
    extract_features(&normalize_glyph(blob))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub label: char,
    pub features: GlyphFeatures,
}

/// Labeled features from one training page.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingFile {
    pub entries: Vec<TrainingSample>,
    /// Page identifier; not stored in the binary form.
    pub source: String,
}

impl TrainingFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = binio::header(TR_MAGIC, TR_VERSION);
        binio::put_u32(&mut out, self.entries.len() as u32);
        for e in &self.entries {
            binio::put_u32(&mut out, e.label as u32);
            for &v in e.features.micro.iter().chain(&e.features.cn) {
                binio::put_f32(&mut out, v);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], source: impl Into<String>) -> Result<Self, BinError> {
        let mut r = Reader::open(bytes, TR_MAGIC, TR_VERSION)?;
        let n = r.count(4 * (1 + MICRO_DIM + CN_DIM))?;
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            let label = r.char()?;
            let mut micro = [0f32; MICRO_DIM];
            for v in micro.iter_mut() {
                *v = r.f32()?;
            }
            let mut cn = [0f32; CN_DIM];
            for v in cn.iter_mut() {
                *v = r.f32()?;
            }
            entries.push(TrainingSample {
                label,
                features: GlyphFeatures { micro, cn },
            });
        }
        r.finish()?;
        Ok(Self {
            entries,
            source: source.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingOutcome {
    pub file: TrainingFile,
    /// Boxes skipped because their crop held no ink.
    pub empty_boxes: usize,
}

/// Pairs every box with the features of the largest blob inside it.
pub fn build_training_file(
    page: &Bitmap,
    boxes: &BoxPage,
    source: impl Into<String>,
) -> Result<TrainingOutcome, FeatureError> {
    let params = SegmentParams {
        connectivity: Connectivity::Eight,
        noise_floor: 0,
        ..SegmentParams::default()
    };
    let mut outcome = TrainingOutcome {
        file: TrainingFile {
            entries: Vec::with_capacity(boxes.len()),
            source: source.into(),
        },
        empty_boxes: 0,
    };
    for (index, record) in boxes.records.iter().enumerate() {
        let label = record.glyph_char().ok_or_else(|| FeatureError::BadLabel {
            index,
            glyph: record.glyph.clone(),
        })?;
        let crop = page
            .crop(&record.rect())
            .ok_or_else(|| FeatureError::BoxOutsidePage {
                index,
                glyph: record.glyph.clone(),
                width: page.width,
                height: page.height,
            })?;
        let blobs = raster::connected_components(&crop, &params);
        // First largest wins, so ties resolve by (left, bottom).
        let largest = blobs
            .iter()
            .rev()
            .max_by_key(|b| b.pixel_count);
        match largest {
            Some(blob) => outcome.file.entries.push(TrainingSample {
                label,
                features: featurize(blob),
            }),
            None => outcome.empty_boxes += 1,
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxfile::BoxRecord;
    use proptest::prelude::*;

    fn blob_from_mask(w: u32, h: u32, f: impl Fn(u32, u32) -> bool) -> ComponentBlob {
        let mut pixels = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if f(x, y) {
                    pixels.push((x, y));
                }
            }
        }
        ComponentBlob::from_pixels(pixels, h).unwrap()
    }

    fn shifted(blob: &ComponentBlob, dx: u32, dy: u32, page_h: u32) -> ComponentBlob {
        ComponentBlob::from_pixels(
            blob.pixels.iter().map(|&(x, y)| (x + dx, y + dy)).collect(),
            page_h,
        )
        .unwrap()
    }

    #[test]
    fn full_grid_blob_is_fixed_point() {
        // Frame symmetric about the grid center.
        let blob = blob_from_mask(32, 32, |x, y| x < 3 || y < 3 || x > 28 || y > 28);
        let g = normalize_glyph(&blob);
        assert_eq!(g.scale, 1.0);
        let expected: Vec<bool> = (0..32 * 32)
            .map(|i| blob.pixels.contains(&((i % 32) as u32, (i / 32) as u32)))
            .collect();
        assert_eq!(g.grid, expected);
    }

    #[test]
    fn large_blob_scales_down() {
        let blob = blob_from_mask(64, 64, |x, y| x < 4 || y < 4 || x > 59 || y > 59);
        assert_eq!(normalize_glyph(&blob).scale, 0.5);
    }

    #[test]
    fn aspect_is_preserved() {
        let blob = blob_from_mask(64, 32, |_, _| true);
        let g = normalize_glyph(&blob);
        let rows: Vec<usize> = (0..GRID).filter(|&y| (0..GRID).any(|x| g.get(x, y))).collect();
        let cols: Vec<usize> = (0..GRID).filter(|&x| (0..GRID).any(|y| g.get(x, y))).collect();
        assert_eq!(cols.len(), 32);
        assert_eq!(rows.len(), 16);
        assert_eq!(g.ink_count(), 32 * 16);
    }

    #[test]
    fn empty_grid_has_zero_features() {
        let g = NormalizedGlyph {
            grid: vec![false; GRID * GRID],
            source_bbox: BoxRect::new(0, 0, 1, 1),
            scale: 1.0,
            shape: SourceShape::default(),
        };
        let f = extract_features(&g);
        assert!(f.micro_is_zero());
        assert_eq!(f.cn[6], 0.0);
        assert_eq!(f.cn[7], 0.0);
    }

    #[test]
    fn horizontal_bar_is_east_west() {
        // A 1x16 bar scales to 2x32 and lands in rows 15-16. Its outer
        // border runs S 1, E 31, N 1, W 31.
        let blob = blob_from_mask(16, 1, |_, _| true);
        let g = normalize_glyph(&blob);
        let contours = trace_contours(&g.grid, GRID, GRID);
        assert_eq!(contours.len(), 1);
        assert_eq!(contours[0].len(), 65);
        let f = extract_features(&g);
        let mass = |dir: usize| -> f32 {
            (0..CELLS * CELLS).map(|c| f.micro[c * DIRECTIONS + dir].powi(2)).sum()
        };
        let east_west = mass(0) + mass(4);
        let vertical = mass(2) + mass(6);
        // Eight cells on the bar's rows each see 8 E and 8 W steps (rows 15
        // and 16 straddle cell rows 1 and 2); 62 of 64 steps are horizontal.
        assert!(east_west > 0.95, "east/west share {east_west}");
        assert!(vertical > 0.0 && vertical < 0.05);
        assert_eq!(mass(1) + mass(3) + mass(5) + mass(7), 0.0);
        let norm: f32 = f.micro.iter().map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-5);
    }

    #[test]
    fn symmetric_square_centroid_and_moments() {
        let blob = blob_from_mask(20, 20, |x, y| (4..16).contains(&x) && (4..16).contains(&y));
        let f = featurize(&blob);
        assert_eq!(f.cn[1], 0.5);
        assert_eq!(f.cn[2], 0.5);
        assert_eq!(f.cn[5], 0.0);
        assert_eq!(f.cn[0], 1.0);
    }

    #[test]
    fn ring_has_outer_and_hole_contours() {
        let blob = blob_from_mask(10, 10, |x, y| {
            (1..9).contains(&x) && (1..9).contains(&y) && !((3..7).contains(&x) && (3..7).contains(&y))
        });
        let g = normalize_glyph(&blob);
        assert_eq!(trace_contours(&g.grid, GRID, GRID).len(), 2);
        assert_eq!(extract_features(&g).cn[7], 2.0 / 8.0);
    }

    #[test]
    fn isolated_pixel_contour() {
        let mut grid = vec![false; 9];
        grid[4] = true;
        assert_eq!(trace_contours(&grid, 3, 3), vec![vec![(1, 1)]]);
    }

    #[test]
    fn training_file_roundtrip_and_corruption() {
        let blob = blob_from_mask(12, 18, |x, y| x == 6 || y == 9);
        let tf = TrainingFile {
            entries: vec![TrainingSample {
                label: '4',
                features: featurize(&blob),
            }],
            source: "p".into(),
        };
        let bytes = tf.to_bytes();
        assert_eq!(&bytes[..4], b"GFTR");
        assert_eq!(bytes.len(), 12 + 4 * (1 + 128 + 8));
        assert_eq!(TrainingFile::from_bytes(&bytes, "p").unwrap(), tf);
        assert!(matches!(
            TrainingFile::from_bytes(&bytes[..bytes.len() - 3], "p"),
            Err(BinError::Truncated { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(TrainingFile::from_bytes(&bad, "p"), Err(BinError::BadMagic { .. })));
    }

    fn page_with_glyph() -> Bitmap {
        let mut page = Bitmap::new(60, 50, 300).unwrap();
        for y in 10..40 {
            for x in 20..24 {
                page.set(x, y, true);
            }
        }
        for x in 12..30 {
            page.set(x, 10, true);
        }
        page
    }

    #[test]
    fn training_file_from_page() {
        let page = page_with_glyph();
        // Image rows 10..40 → box bottom 10, top 40.
        let boxes = BoxPage::new(vec![
            BoxRecord::new("7", BoxRect::new(12, 10, 30, 40), 0),
            BoxRecord::new("1", BoxRect::new(40, 5, 55, 20), 0),
        ]);
        let out = build_training_file(&page, &boxes, "page").unwrap();
        assert_eq!(out.file.entries.len(), 1);
        assert_eq!(out.file.entries[0].label, '7');
        assert_eq!(out.empty_boxes, 1);

        let outside = BoxPage::new(vec![BoxRecord::new("7", BoxRect::new(50, 10, 70, 40), 0)]);
        assert!(matches!(
            build_training_file(&page, &outside, "page"),
            Err(FeatureError::BoxOutsidePage { index: 0, .. })
        ));
    }

    proptest! {
        #[test]
        fn features_are_translation_invariant(
            bits in prop::collection::vec(prop::bool::weighted(0.6), 15 * 22),
            dx in 0u32..40, dy in 0u32..40,
        ) {
            let mut pixels = Vec::new();
            for (i, &b) in bits.iter().enumerate() {
                if b { pixels.push((i as u32 % 15, i as u32 / 15)); }
            }
            prop_assume!(!pixels.is_empty());
            let blob = ComponentBlob::from_pixels(pixels, 22).unwrap();
            let moved = shifted(&blob, dx, dy, 22 + 40);
            let (a, b) = (featurize(&blob), featurize(&moved));
            prop_assert_eq!(a.micro, b.micro);
            prop_assert_eq!(a.cn, b.cn);
        }

        #[test]
        fn feature_ranges(bits in prop::collection::vec(prop::bool::weighted(0.5), 9 * 13)) {
            let mut pixels = Vec::new();
            for (i, &b) in bits.iter().enumerate() {
                if b { pixels.push((i as u32 % 9, i as u32 / 9)); }
            }
            prop_assume!(!pixels.is_empty());
            let f = featurize(&ComponentBlob::from_pixels(pixels, 13).unwrap());
            let norm: f32 = f.micro.iter().map(|v| v * v).sum();
            prop_assert!((norm - 1.0).abs() < 1e-4);
            prop_assert!(f.micro.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(f.cn.iter().all(|v| v.is_finite()));
            prop_assert!((0.0..=1.0).contains(&f.cn[1]) && (0.0..=1.0).contains(&f.cn[2]));
        }
    }
}
