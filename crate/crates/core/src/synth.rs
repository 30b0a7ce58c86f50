//! Synthetic handwritten digit pages.
//!
//! Each digit is a set of strokes in a unit box. A writer distorts every
//! digit with a fixed smooth warp, slant, aspect and pen width; every sample
//! adds a smaller warp of its own. Pages are grayscale with paper noise and
//! specks, and come with exact ground-truth boxes.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boxfile::{BoxPage, BoxRecord, BoxRect};
use crate::eval::{DatasetManifest, ManifestPage, Role};
use crate::raster::{image_span_to_box, GrayImage};

type Stroke = Vec<(f64, f64)>;

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, from_deg: f64, to_deg: f64) -> Stroke {
    let steps = ((to_deg - from_deg).abs() / 15.0).ceil().max(2.0) as usize;
    (0..=steps)
        .map(|i| {
            let a = (from_deg + (to_deg - from_deg) * i as f64 / steps as f64).to_radians();
            (cx + rx * a.cos(), cy - ry * a.sin())
        })
        .collect()
}

fn chain(parts: &[Stroke]) -> Stroke {
    parts.iter().flatten().copied().collect()
}

/// Stroke skeleton of a digit in a unit box, y pointing down.
pub fn digit_strokes(digit: u8) -> Vec<Stroke> {
    match digit {
        0 => vec![arc(0.5, 0.5, 0.42, 0.5, 90.0, 450.0)],
        1 => vec![vec![(0.25, 0.22), (0.55, 0.0), (0.55, 1.0)]],
        2 => vec![chain(&[arc(0.5, 0.28, 0.42, 0.28, 160.0, -40.0), vec![(0.0, 1.0), (1.0, 1.0)]])],
        3 => vec![chain(&[
            arc(0.5, 0.27, 0.4, 0.27, 150.0, -90.0),
            arc(0.5, 0.77, 0.46, 0.23, 90.0, -150.0),
        ])],
        4 => vec![vec![(0.72, 1.0), (0.72, 0.0), (0.0, 0.68), (1.0, 0.68)]],
        5 => vec![chain(&[vec![(0.92, 0.0), (0.18, 0.0), (0.14, 0.45)], arc(0.5, 0.7, 0.45, 0.3, 130.0, -150.0)])],
        6 => vec![chain(&[vec![(0.82, 0.0), (0.3, 0.3)], arc(0.5, 0.72, 0.4, 0.28, 170.0, -190.0)])],
        7 => vec![vec![(0.0, 0.0), (1.0, 0.0), (0.35, 1.0)]],
        8 => vec![
            arc(0.5, 0.24, 0.34, 0.24, 0.0, 360.0),
            arc(0.5, 0.72, 0.44, 0.28, 0.0, 360.0),
        ],
        9 => vec![chain(&[arc(0.5, 0.28, 0.4, 0.28, 0.0, 360.0), vec![(0.9, 0.28), (0.82, 1.0)]])],
        _ => panic!("digit out of range: {digit}"),
    }
}

/// Low-frequency displacement field on the unit box.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Warp {
    ax: f64,
    ay: f64,
    fx: f64,
    fy: f64,
    px: f64,
    py: f64,
    shear: f64,
    sx: f64,
    sy: f64,
}

impl Warp {
    fn random(rng: &mut impl Rng, amplitude: f64, affine: f64) -> Self {
        Self {
            ax: rng.random_range(-amplitude..=amplitude),
            ay: rng.random_range(-amplitude..=amplitude),
            fx: rng.random_range(0.3..1.0),
            fy: rng.random_range(0.3..1.0),
            px: rng.random_range(0.0..2.0 * PI),
            py: rng.random_range(0.0..2.0 * PI),
            shear: rng.random_range(-affine..=affine),
            sx: 1.0 + rng.random_range(-affine..=affine),
            sy: 1.0 + rng.random_range(-affine..=affine),
        }
    }

    fn apply(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let dx = self.ax * (2.0 * PI * self.fx * y + self.px).sin();
        let dy = self.ay * (2.0 * PI * self.fy * x + self.py).sin();
        let x = 0.5 + (x - 0.5) * self.sx + self.shear * (y - 0.5);
        let y = 0.5 + (y - 0.5) * self.sy;
        (x + dx, y + dy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WriterStyle {
    pub name: String,
    /// Glyph height in pixels.
    pub height: f64,
    /// Glyph width as a fraction of height.
    pub aspect: f64,
    /// Horizontal shift per unit height, positive leans right.
    pub slant: f64,
    /// Pen diameter in pixels.
    pub pen: f64,
    /// Gap between neighbouring glyphs as a fraction of height.
    pub spacing: f64,
    digit_warps: [Warp; 10],
    sample_amplitude: f64,
}

impl WriterStyle {
    pub fn random(name: impl Into<String>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let height = rng.random_range(50.0..64.0);
        let aspect = rng.random_range(0.55..0.75);
        let slant = rng.random_range(-0.15..0.3);
        let pen = rng.random_range(3.5..6.0);
        let spacing = rng.random_range(0.25..0.45);
        let digit_warps = std::array::from_fn(|_| Warp::random(&mut rng, 0.15, 0.25));
        Self {
            name: name.into(),
            height,
            aspect,
            slant,
            pen,
            spacing,
            digit_warps,
            sample_amplitude: 0.12,
        }
    }
}

/// Tightly cropped ink mask of one rendered glyph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlyphMask {
    pub label: char,
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<bool>,
}

impl GlyphMask {
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn ink_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }
}

fn rasterize(strokes: &[Stroke], radius: f64, label: char) -> GlyphMask {
    let pts = strokes.iter().flatten();
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for &(x, y) in pts {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let ox = (x0 - radius).floor() - 1.0;
    let oy = (y0 - radius).floor() - 1.0;
    let w = ((x1 + radius).ceil() + 1.0 - ox) as usize + 1;
    let h = ((y1 + radius).ceil() + 1.0 - oy) as usize + 1;
    let mut canvas = vec![false; w * h];
    for stroke in strokes {
        for seg in stroke.windows(2) {
            let (ax, ay) = (seg[0].0 - ox, seg[0].1 - oy);
            let (bx, by) = (seg[1].0 - ox, seg[1].1 - oy);
            let (vx, vy) = (bx - ax, by - ay);
            let len2 = vx * vx + vy * vy;
            let cx0 = (ax.min(bx) - radius).floor().max(0.0) as usize;
            let cx1 = ((ax.max(bx) + radius).ceil() as usize).min(w - 1);
            let cy0 = (ay.min(by) - radius).floor().max(0.0) as usize;
            let cy1 = ((ay.max(by) + radius).ceil() as usize).min(h - 1);
            for py in cy0..=cy1 {
                for px in cx0..=cx1 {
                    let (qx, qy) = (px as f64 + 0.5, py as f64 + 0.5);
                    let t = if len2 > 0.0 { (((qx - ax) * vx + (qy - ay) * vy) / len2).clamp(0.0, 1.0) } else { 0.0 };
                    let (dx, dy) = (qx - ax - t * vx, qy - ay - t * vy);
                    if dx * dx + dy * dy <= radius * radius {
                        canvas[py * w + px] = true;
                    }
                }
            }
        }
    }
    crop_mask(&canvas, w, h, label)
}

fn crop_mask(canvas: &[bool], w: usize, h: usize, label: char) -> GlyphMask {
    let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if canvas[y * w + x] {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    let (cw, ch) = (x1 + 1 - x0, y1 + 1 - y0);
    let mut pixels = Vec::with_capacity(cw * ch);
    for y in y0..=y1 {
        pixels.extend_from_slice(&canvas[y * w + x0..=y * w + x1]);
    }
    GlyphMask { label, width: cw as u32, height: ch as u32, pixels }
}

/// Renders one sample of `digit` in the writer's hand.
pub fn render_digit(style: &WriterStyle, digit: u8, rng: &mut impl Rng) -> GlyphMask {
    let writer = style.digit_warps[digit as usize];
    let sample = Warp::random(rng, style.sample_amplitude, 0.05);
    let height = style.height * rng.random_range(0.94..1.06);
    let width = height * style.aspect;
    let pen = (style.pen * rng.random_range(0.9..1.1)).max(2.0);
    let strokes: Vec<Stroke> = digit_strokes(digit)
        .into_iter()
        .map(|s| {
            s.into_iter()
                .map(|p| {
                    let (x, y) = sample.apply(writer.apply(p));
                    ((x - 0.5) * width + style.slant * (0.5 - y) * height, y * height)
                })
                .collect()
        })
        .collect();
    rasterize(&strokes, pen / 2.0, char::from(b'0' + digit))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageLayout {
    pub width: u32,
    pub margin: u32,
    pub dpi: u32,
    /// Chance that a glyph is pushed into its left neighbour.
    pub touch_probability: f64,
    /// Small specks below the noise floor sprinkled over the background.
    pub specks: usize,
}

impl Default for PageLayout {
    fn default() -> Self {
        Self {
            width: 1400,
            margin: 40,
            dpi: 300,
            touch_probability: 0.0,
            specks: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPage {
    pub gray: GrayImage,
    pub boxes: BoxPage,
    pub dpi: u32,
}

/// Whether mask `b` at `(bl, bt)` has ink 8-adjacent to ink of `a` at `(al, at)`.
fn touches(a: &GlyphMask, al: i64, at: i64, b: &GlyphMask, bl: i64, bt: i64) -> bool {
    for by in 0..b.height as i64 {
        for bx in 0..b.width as i64 {
            if !b.get(bx as u32, by as u32) {
                continue;
            }
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (ax, ay) = (bl + bx + dx - al, bt + by + dy - at);
                    if ax >= 0 && ay >= 0 && ax < a.width as i64 && ay < a.height as i64 && a.get(ax as u32, ay as u32) {
                        return true;
                    }
                }
            }
        }
    }
    false
}

/// Lays out pre-rendered glyphs in rows and paints them on noisy paper.
/// `spacing` and `line_height` are in pixels.
pub fn compose_page(
    masks: &[GlyphMask],
    spacing: f64,
    line_height: f64,
    layout: &PageLayout,
    rng: &mut impl Rng,
) -> SynthPage {
    let m = layout.margin as i64;
    let right = layout.width as i64 - m;
    let mut placed: Vec<(i64, i64)> = Vec::with_capacity(masks.len());
    let (mut x, mut row_top) = (m, m);
    for (i, mask) in masks.iter().enumerate() {
        let jitter = (line_height * 0.04) as i64;
        let top = row_top + rng.random_range(-jitter..=jitter) + (line_height * 0.15) as i64;
        let gap = (spacing * rng.random_range(0.8..1.2)).round().max(3.0) as i64;
        let mut left = if i == 0 { m } else { x + gap };
        let mut top = top;
        if left + mask.width as i64 > right && x > m {
            row_top += line_height.round() as i64;
            left = m;
            top += line_height.round() as i64;
        } else if i > 0 && rng.random_bool(layout.touch_probability.clamp(0.0, 1.0)) {
            let (pl, pt) = placed[i - 1];
            let prev = &masks[i - 1];
            let floor = pl + 1;
            while left > floor && !touches(prev, pl, pt, mask, left, top) {
                left -= 1;
            }
        }
        placed.push((left, top));
        x = left + mask.width as i64;
    }
    let height = (row_top + line_height.round() as i64 + m) as u32;
    let (w, h) = (layout.width, height);

    let mut ink = vec![false; (w * h) as usize];
    let mut records = Vec::with_capacity(masks.len());
    for (mask, &(left, top)) in masks.iter().zip(&placed) {
        for my in 0..mask.height {
            for mx in 0..mask.width {
                if mask.get(mx, my) {
                    let (px, py) = (left as u32 + mx, top as u32 + my);
                    ink[(py * w + px) as usize] = true;
                }
            }
        }
        let (l, t) = (left as u32, top as u32);
        let rect = image_span_to_box(l, t, l + mask.width, t + mask.height, h);
        records.push(BoxRecord::new(mask.label.to_string(), rect, 0));
    }

    let clear = |ink: &[bool], x: u32, y: u32| {
        (y.saturating_sub(3)..(y + 4).min(h)).all(|yy| (x.saturating_sub(3)..(x + 4).min(w)).all(|xx| !ink[(yy * w + xx) as usize]))
    };
    for _ in 0..layout.specks {
        let (sx, sy) = (rng.random_range(1..w - 2), rng.random_range(1..h - 2));
        if clear(&ink, sx, sy) {
            ink[(sy * w + sx) as usize] = true;
            if rng.random_bool(0.5) {
                ink[(sy * w + sx + 1) as usize] = true;
            }
        }
    }

    let mut gray = GrayImage::filled(w, h, 0);
    for y in 0..h {
        for x in 0..w {
            let v = if ink[(y * w + x) as usize] { rng.random_range(25..60) } else { rng.random_range(212..232) };
            gray.set(x, y, v);
        }
    }
    SynthPage { gray, boxes: BoxPage::new(records), dpi: layout.dpi }
}

/// Renders the given digit labels as one page in the writer's hand.
pub fn render_page(style: &WriterStyle, labels: &[u8], layout: &PageLayout, rng: &mut impl Rng) -> (SynthPage, Vec<GlyphMask>) {
    let masks: Vec<GlyphMask> = labels.iter().map(|&d| render_digit(style, d, rng)).collect();
    let page = compose_page(&masks, style.spacing * style.height, style.height * 2.0, layout, rng);
    (page, masks)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub seed: u64,
    pub known_writers: usize,
    pub unknown_writers: usize,
    pub training_glyphs: usize,
    pub td1_glyphs: usize,
    pub td2_glyphs: usize,
    pub pages_per_training_writer: usize,
    /// Chance of a touching pair on test pages; training pages never touch.
    pub touch_probability: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            known_writers: 3,
            unknown_writers: 2,
            training_glyphs: 1226,
            td1_glyphs: 249,
            td2_glyphs: 349,
            pages_per_training_writer: 2,
            touch_probability: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusPage {
    pub name: String,
    pub user: String,
    pub role: Role,
    pub page: SynthPage,
    pub masks: Vec<GlyphMask>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub writers: Vec<WriterStyle>,
    pub pages: Vec<CorpusPage>,
}

fn split_evenly(total: usize, parts: usize) -> Vec<usize> {
    (0..parts).map(|i| total / parts + usize::from(i < total % parts)).collect()
}

/// Generates training, known-writer and unknown-writer test pages.
pub fn generate_corpus(spec: &CorpusSpec) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let writers: Vec<WriterStyle> = (0..spec.known_writers + spec.unknown_writers)
        .map(|i| {
            let kind = if i < spec.known_writers { "known" } else { "unknown" };
            WriterStyle::random(format!("{kind}{i}"), rng.random())
        })
        .collect();
    let (known, unknown) = writers.split_at(spec.known_writers);
    let mut pages = Vec::new();
    let mut emit = |rng: &mut ChaCha8Rng, w: &WriterStyle, role: Role, n: usize, touch: f64, idx: usize| {
        if n == 0 {
            return;
        }
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..10)).collect();
        let layout = PageLayout { touch_probability: touch, ..PageLayout::default() };
        let (page, masks) = render_page(w, &labels, &layout, rng);
        pages.push(CorpusPage {
            name: format!("{}-{}-{idx}", w.name, role.name()),
            user: w.name.clone(),
            role,
            page,
            masks,
        });
    };
    for (w, n) in known.iter().zip(split_evenly(spec.training_glyphs, known.len().max(1))) {
        for (idx, m) in split_evenly(n, spec.pages_per_training_writer.max(1)).into_iter().enumerate() {
            emit(&mut rng, w, Role::Training, m, 0.0, idx);
        }
    }
    for (w, n) in known.iter().zip(split_evenly(spec.td1_glyphs, known.len().max(1))) {
        emit(&mut rng, w, Role::Td1, n, spec.touch_probability, 0);
    }
    for (w, n) in unknown.iter().zip(split_evenly(spec.td2_glyphs, unknown.len().max(1))) {
        emit(&mut rng, w, Role::Td2, n, spec.touch_probability, 0);
    }
    SynthCorpus { writers, pages }
}

impl SynthCorpus {
    /// Manifest naming `<page>.png` and `<page>.box` for every page.
    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            pages: self
                .pages
                .iter()
                .map(|p| ManifestPage {
                    image: format!("{}.png", p.name).into(),
                    boxes: format!("{}.box", p.name).into(),
                    user: p.user.clone(),
                    role: p.role,
                })
                .collect(),
        }
    }

    pub fn glyph_count(&self, role: Role) -> usize {
        self.pages.iter().filter(|p| p.role == role).map(|p| p.page.boxes.len()).sum()
    }
}

/// Box of a mask when placed with its top-left corner at `(left, top)`.
pub fn mask_box(mask: &GlyphMask, left: u32, top: u32, page_height: u32) -> BoxRect {
    image_span_to_box(left, top, left + mask.width, top + mask.height, page_height)
}
