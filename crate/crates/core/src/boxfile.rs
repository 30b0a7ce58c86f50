//! Box files: the line-oriented ground-truth format pairing each glyph with
//! its bounding box on a page image.
//!
//! A line reads `glyph left bottom right top [page]`. Coordinates use a
//! bottom-left origin with y growing upward. The page field is optional on
//! input and always written on output.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BoxError {
    #[error("line {line}: input is not valid UTF-8")]
    InvalidUtf8 { line: usize },
    #[error("line {line}: expected 5 or 6 fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: field `{field}` is not a non-negative integer: {value:?}")]
    BadInteger {
        line: usize,
        field: &'static str,
        value: String,
    },
    #[error("line {line}: invalid geometry (need left < right and bottom < top)")]
    InvalidGeometry { line: usize },
    #[error("line {line}: glyph {glyph:?} must be exactly one non-whitespace scalar")]
    InvalidGlyph { line: usize, glyph: String },
    #[error("record {index}: {reason}")]
    InvalidRecord { index: usize, reason: String },
    #[error("no box records in the training set")]
    EmptyTrainingSet,
}

/// Axis-aligned rectangle in box-file coordinates. `left`/`bottom` are
/// inclusive, `right`/`top` exclusive, so width is `right - left`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoxRect {
    pub left: u32,
    pub bottom: u32,
    pub right: u32,
    pub top: u32,
}

impl BoxRect {
    pub fn new(left: u32, bottom: u32, right: u32, top: u32) -> Self {
        Self {
            left,
            bottom,
            right,
            top,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.left < self.right && self.bottom < self.top
    }

    pub fn width(&self) -> u32 {
        self.right.saturating_sub(self.left)
    }

    pub fn height(&self) -> u32 {
        self.top.saturating_sub(self.bottom)
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn intersection_area(&self, other: &BoxRect) -> u64 {
        let w = self.right.min(other.right).saturating_sub(self.left.max(other.left));
        let h = self.top.min(other.top).saturating_sub(self.bottom.max(other.bottom));
        w as u64 * h as u64
    }

    /// Intersection over union; 0 when both rectangles are empty.
    pub fn iou(&self, other: &BoxRect) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Smallest rectangle containing both.
    pub fn union(&self, other: &BoxRect) -> BoxRect {
        BoxRect {
            left: self.left.min(other.left),
            bottom: self.bottom.min(other.bottom),
            right: self.right.max(other.right),
            top: self.top.max(other.top),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub glyph: String,
    pub left: u32,
    pub bottom: u32,
    pub right: u32,
    pub top: u32,
    #[serde(default)]
    pub page: u32,
}

impl BoxRecord {
    pub fn new(glyph: impl Into<String>, rect: BoxRect, page: u32) -> Self {
        Self {
            glyph: glyph.into(),
            left: rect.left,
            bottom: rect.bottom,
            right: rect.right,
            top: rect.top,
            page,
        }
    }

    pub fn rect(&self) -> BoxRect {
        BoxRect::new(self.left, self.bottom, self.right, self.top)
    }

    /// The single scalar this record labels, if the glyph is well formed.
    pub fn glyph_char(&self) -> Option<char> {
        single_glyph(&self.glyph)
    }

    /// Checks the record invariants, returning a short reason on failure.
    pub fn validate(&self) -> Result<(), String> {
        if single_glyph(&self.glyph).is_none() {
            return Err(format!(
                "glyph {:?} must be exactly one non-whitespace scalar",
                self.glyph
            ));
        }
        if !self.rect().is_valid() {
            return Err(format!(
                "invalid geometry {} {} {} {} (need left < right and bottom < top)",
                self.left, self.bottom, self.right, self.top
            ));
        }
        Ok(())
    }
}

fn single_glyph(s: &str) -> Option<char> {
    let mut chars = s.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if !c.is_whitespace() => Some(c),
        _ => None,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxPage {
    pub records: Vec<BoxRecord>,
    /// Path of the page image these boxes describe. Not part of the on-disk
    /// format; callers fill it in when they know it.
    #[serde(default)]
    pub image_ref: Option<PathBuf>,
}

impl BoxPage {
    pub fn new(records: Vec<BoxRecord>) -> Self {
        Self {
            records,
            image_ref: None,
        }
    }

    pub fn with_image_ref(mut self, path: impl Into<PathBuf>) -> Self {
        self.image_ref = Some(path.into());
        self
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

const FIELD_NAMES: [&str; 5] = ["left", "bottom", "right", "top", "page"];

pub fn parse_box_file(bytes: &[u8]) -> Result<BoxPage, BoxError> {
    let text = match std::str::from_utf8(bytes) {
        Ok(t) => t,
        Err(e) => {
            let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
            return Err(BoxError::InvalidUtf8 { line });
        }
    };
    let mut records = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        records.push(parse_line(raw, idx + 1)?);
    }
    Ok(BoxPage::new(records))
}

/// Parses a single box-file line. `line` is the 1-based number used in errors.
pub fn parse_line(raw: &str, line: usize) -> Result<BoxRecord, BoxError> {
    let fields: Vec<&str> = raw.split_whitespace().collect();
    if fields.len() != 5 && fields.len() != 6 {
        return Err(BoxError::FieldCount {
            line,
            found: fields.len(),
        });
    }
    let glyph = fields[0];
    if single_glyph(glyph).is_none() {
        return Err(BoxError::InvalidGlyph {
            line,
            glyph: glyph.to_string(),
        });
    }
    let mut nums = [0u32; 5];
    for (i, field) in fields[1..].iter().enumerate() {
        nums[i] = field.parse().map_err(|_| BoxError::BadInteger {
            line,
            field: FIELD_NAMES[i],
            value: field.to_string(),
        })?;
    }
    let record = BoxRecord {
        glyph: glyph.to_string(),
        left: nums[0],
        bottom: nums[1],
        right: nums[2],
        top: nums[3],
        page: nums[4],
    };
    if !record.rect().is_valid() {
        return Err(BoxError::InvalidGeometry { line });
    }
    Ok(record)
}

pub fn write_box_file(page: &BoxPage) -> Result<Vec<u8>, BoxError> {
    let mut out = String::with_capacity(page.records.len() * 24);
    for (index, r) in page.records.iter().enumerate() {
        r.validate()
            .map_err(|reason| BoxError::InvalidRecord { index, reason })?;
        writeln!(
            out,
            "{} {} {} {} {} {}",
            r.glyph, r.left, r.bottom, r.right, r.top, r.page
        )
        .expect("writing to a String cannot fail");
    }
    Ok(out.into_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnicharEntry {
    pub glyph: char,
    pub is_digit: bool,
    pub sample_count: u64,
}

/// Character inventory of a model, in first-occurrence order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unicharset {
    pub entries: Vec<UnicharEntry>,
}

impl Unicharset {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, glyph: char) -> bool {
        self.entries.iter().any(|e| e.glyph == glyph)
    }

    pub fn glyphs(&self) -> impl Iterator<Item = char> + '_ {
        self.entries.iter().map(|e| e.glyph)
    }

    pub fn total_samples(&self) -> u64 {
        self.entries.iter().map(|e| e.sample_count).sum()
    }

    fn add(&mut self, glyph: char) {
        match self.entries.iter_mut().find(|e| e.glyph == glyph) {
            Some(e) => e.sample_count += 1,
            None => self.entries.push(UnicharEntry {
                glyph,
                is_digit: glyph.is_ascii_digit(),
                sample_count: 1,
            }),
        }
    }

    /// Text form: entry count on the first line, then `glyph is_digit count`.
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.entries.len());
        for e in &self.entries {
            writeln!(out, "{} {} {}", e.glyph, u8::from(e.is_digit), e.sample_count)
                .expect("writing to a String cannot fail");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let count: usize = lines
            .next()
            .ok_or("missing entry count")?
            .trim()
            .parse()
            .map_err(|_| "entry count is not an integer")?;
        let mut entries = Vec::with_capacity(count);
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split_whitespace().collect();
            let [glyph, digit, n] = f[..] else {
                return Err(format!("entry {i}: expected 3 fields"));
            };
            let glyph = single_glyph(glyph).ok_or_else(|| format!("entry {i}: bad glyph"))?;
            let is_digit = match digit {
                "0" => false,
                "1" => true,
                _ => return Err(format!("entry {i}: is_digit must be 0 or 1")),
            };
            let sample_count = n
                .parse()
                .map_err(|_| format!("entry {i}: bad sample count"))?;
            entries.push(UnicharEntry {
                glyph,
                is_digit,
                sample_count,
            });
        }
        if entries.len() != count {
            return Err(format!("expected {count} entries, found {}", entries.len()));
        }
        Ok(Self { entries })
    }
}

pub fn extract_unicharset(pages: &[BoxPage]) -> Result<Unicharset, BoxError> {
    let mut set = Unicharset::default();
    for page in pages {
        for (index, r) in page.records.iter().enumerate() {
            let glyph = r.glyph_char().ok_or_else(|| BoxError::InvalidRecord {
                index,
                reason: format!("glyph {:?} is not a single scalar", r.glyph),
            })?;
            set.add(glyph);
        }
    }
    if set.is_empty() {
        return Err(BoxError::EmptyTrainingSet);
    }
    Ok(set)
}
