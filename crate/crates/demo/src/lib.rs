//! WebAssembly bindings for the glyphforge browser demo.
//!
//! The page trains a small bundle on synthetic writers when it loads, then
//! offers three operations: recognizing a digit drawn on a canvas, rendering
//! and segmenting a synthetic handwritten page, and building a DAWG from a
//! word list. Each operation has a plain Rust entry point returning JSON so
//! it can be exercised natively; the `#[wasm_bindgen]` wrappers only convert
//! errors.

use glyphforge::bundle::LangBundle;
use glyphforge::lexicon::{self, Dawg};
use glyphforge::pipeline::{self, Lexicon};
use glyphforge::raster::{self, GrayImage};
use glyphforge::recognize::{self, RecognizeParams};
use glyphforge::synth::{self, CorpusSpec, PageLayout, WriterStyle};
use glyphforge::training::ClusterParams;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Resolution assumed for canvas drawings and synthetic pages.
pub const DEMO_DPI: u32 = 300;

/// Trains a bundle on the training pages of a small synthetic corpus.
pub fn train_demo_bundle(seed: u64, glyphs: usize) -> Result<LangBundle, String> {
    let corpus = synth::generate_corpus(&CorpusSpec {
        seed,
        training_glyphs: glyphs,
        td1_glyphs: 0,
        td2_glyphs: 0,
        ..CorpusSpec::default()
    });
    let mut pages = Vec::new();
    for p in &corpus.pages {
        let bitmap = raster::binarize(&p.page.gray, p.page.dpi, false).map_err(|e| e.to_string())?;
        pages.push((bitmap, p.page.boxes.clone()));
    }
    let params = ClusterParams { seed, ..ClusterParams::default() };
    pipeline::train_from_pages("num", &pages, &Lexicon::default(), &params)
        .map(|t| t.bundle)
        .map_err(|e| e.to_string())
}

fn rgba_to_gray(width: u32, height: u32, rgba: &[u8]) -> Result<GrayImage, String> {
    if rgba.len() != width as usize * height as usize * 4 {
        return Err(format!("expected {} RGBA bytes for {width}x{height}, got {}", width * height * 4, rgba.len()));
    }
    // Transparent canvas pixels count as white paper.
    let gray = rgba
        .chunks_exact(4)
        .map(|p| {
            let luma = (299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32) / 1000;
            let a = p[3] as u32;
            ((luma * a + 255 * (255 - a)) / 255) as u8
        })
        .collect();
    GrayImage::new(width, height, gray).map_err(|e| e.to_string())
}

/// Recognizes an RGBA image, returning the page result as JSON.
pub fn recognize_rgba(bundle: &LangBundle, width: u32, height: u32, rgba: &[u8]) -> Result<Value, String> {
    let gray = rgba_to_gray(width, height, rgba)?;
    if gray.histogram()[..128].iter().all(|&n| n == 0) {
        return Ok(json!({ "text": "", "lines": [] }));
    }
    let result = recognize::recognize_gray(&gray, DEMO_DPI, false, bundle, &RecognizeParams::default())
        .map_err(|e| e.to_string())?;
    serde_json::to_value(&result).map_err(|e| e.to_string())
}

/// A rendered synthetic page with its ground truth and recognition result.
pub struct RenderedPage {
    pub width: u32,
    pub height: u32,
    pub rgba: Vec<u8>,
    pub report: Value,
}

/// Renders `digits` in a random writer's hand, segments and recognizes it.
pub fn render_and_segment(bundle: &LangBundle, digits: &str, seed: u64) -> Result<RenderedPage, String> {
    let labels: Vec<u8> = digits
        .chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| c.to_digit(10).map(|d| d as u8).ok_or_else(|| format!("{c:?} is not a digit")))
        .collect::<Result<_, _>>()?;
    if labels.is_empty() {
        return Err("enter at least one digit".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let style = WriterStyle::random("demo", seed);
    let layout = PageLayout { width: 900, touch_probability: 0.1, ..PageLayout::default() };
    let (page, _) = synth::render_page(&style, &labels, &layout, &mut rng);
    let result = recognize::recognize_gray(&page.gray, page.dpi, false, bundle, &RecognizeParams::default())
        .map_err(|e| e.to_string())?;
    let predicted = result.to_box_page();
    let evaluation = glyphforge::eval::match_boxes(&page.boxes, &result, 0.5);
    let height = page.gray.height;
    let to_image = |r: &glyphforge::boxfile::BoxRecord| {
        let (x0, y0, x1, y1) = raster::box_to_image_span(&r.rect(), height);
        json!({ "glyph": r.glyph, "x": x0, "y": y0, "w": x1 - x0, "h": y1 - y0 })
    };
    let report = json!({
        "truth": page.boxes.records.iter().map(to_image).collect::<Vec<_>>(),
        "predicted": predicted.records.iter().map(to_image).collect::<Vec<_>>(),
        "text": result.text,
        "correct": evaluation.counts.correct,
        "misclassified": evaluation.counts.misclassified,
        "under_segmented": evaluation.counts.under_segmented,
        "rejected": evaluation.counts.rejected(),
        "total": evaluation.counts.total,
    });
    let rgba = page.gray.data.iter().flat_map(|&g| [g, g, g, 255]).collect();
    Ok(RenderedPage { width: page.gray.width, height, rgba, report })
}

/// Builds a DAWG from newline separated words and looks up each query.
pub fn dawg_summary(words: &str, queries: &str) -> Result<Value, String> {
    let mut list = lexicon::parse_wordlist(words.as_bytes()).map_err(|e| e.to_string())?;
    list.sort();
    list.dedup();
    let dawg: Dawg = lexicon::build_dawg(&list, None).map_err(|e| e.to_string())?;
    let trie_nodes = 1 + list
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let shared = i.checked_sub(1).map_or(0, |j| common_prefix(&list[j], w));
            w.chars().count() - shared
        })
        .sum::<usize>();
    let lookups: Vec<Value> = queries
        .split_whitespace()
        .map(|q| json!({ "word": q, "found": dawg.contains(q) }))
        .collect();
    Ok(json!({
        "words": list.len(),
        "nodes": dawg.node_count(),
        "edges": dawg.edge_count(),
        "trie_nodes": trie_nodes,
        "bytes": dawg.to_bytes().len(),
        "lookups": lookups,
    }))
}

fn common_prefix(a: &str, b: &str) -> usize {
    a.chars().zip(b.chars()).take_while(|(x, y)| x == y).count()
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

/// Trained classifier held by the page.
#[wasm_bindgen]
pub struct Demo {
    bundle: LangBundle,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, glyphs: u32) -> Result<Demo, JsError> {
        let bundle = train_demo_bundle(seed as u64, glyphs as usize).map_err(js)?;
        Ok(Demo { bundle })
    }

    /// JSON list of classes with their prototype counts.
    pub fn classes(&self) -> String {
        let classes: Vec<Value> = self
            .bundle
            .prototypes
            .classes
            .iter()
            .map(|c| json!({ "glyph": c.glyph, "prototypes": c.prototypes.len() }))
            .collect();
        Value::Array(classes).to_string()
    }

    pub fn recognize(&self, width: u32, height: u32, rgba: &[u8]) -> Result<String, JsError> {
        recognize_rgba(&self.bundle, width, height, rgba).map(|v| v.to_string()).map_err(js)
    }

    pub fn render(&self, digits: &str, seed: u32) -> Result<SynthView, JsError> {
        let page = render_and_segment(&self.bundle, digits, seed as u64).map_err(js)?;
        Ok(SynthView { page })
    }
}

/// Page image plus JSON report, as handed to JavaScript.
#[wasm_bindgen]
pub struct SynthView {
    page: RenderedPage,
}

#[wasm_bindgen]
impl SynthView {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> u32 {
        self.page.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> u32 {
        self.page.height
    }

    pub fn rgba(&self) -> Vec<u8> {
        self.page.rgba.clone()
    }

    pub fn report(&self) -> String {
        self.page.report.to_string()
    }
}

#[wasm_bindgen]
pub fn dawg(words: &str, queries: &str) -> Result<String, JsError> {
    dawg_summary(words, queries).map(|v| v.to_string()).map_err(js)
}
