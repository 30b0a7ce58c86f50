//! Static character classification and page recognition.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxfile::{BoxPage, BoxRecord, BoxRect};
use crate::bundle::LangBundle;
use crate::features::{self, FeatureConstants, GlyphFeatures, CN_DIM};
use crate::raster::{self, Bitmap, GrayImage, RasterError, SegmentParams};

/// Label written for rejected glyphs in predicted box files.
pub const REJECT_GLYPH: char = '?';

#[derive(Debug, Error, PartialEq)]
pub enum RecognizeError {
    #[error("bundle feature constants {found:?} do not match {expected:?}")]
    DimensionMismatch {
        expected: FeatureConstants,
        found: FeatureConstants,
    },
    #[error("bundle has no class with both prototypes and norm statistics")]
    EmptyBundle,
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyParams {
    /// Glyphs whose best prototype distance exceeds this are rejected.
    pub reject_threshold: f64,
    /// Classes kept after CN pruning.
    pub pruner_survivors: usize,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        Self {
            reject_threshold: 0.9,
            pruner_survivors: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    /// `None` means the glyph was rejected.
    pub label: Option<char>,
    pub distance: f64,
    /// Up to three best classes, nearest first.
    pub alternatives: Vec<(char, f64)>,
}

impl Classification {
    pub fn is_reject(&self) -> bool {
        self.label.is_none()
    }
}

/// Classifies one glyph: prune classes by diagonal-variance distance on the
/// CN features, then take the nearest micro-feature prototype among the
/// survivors. Ties prefer the class with more training samples, then the
/// lower codepoint.
pub fn classify_glyph(
    f: &GlyphFeatures,
    bundle: &LangBundle,
    params: &ClassifyParams,
) -> Result<Classification, RecognizeError> {
    if bundle.prototypes.constants != FeatureConstants::CURRENT {
        return Err(RecognizeError::DimensionMismatch {
            expected: FeatureConstants::CURRENT,
            found: bundle.prototypes.constants,
        });
    }
    let freq = |g: char| bundle.frequencies.get(g);
    let rank = |a: &(char, f64), b: &(char, f64)| {
        a.1.total_cmp(&b.1)
            .then_with(|| freq(b.0).cmp(&freq(a.0)))
            .then_with(|| a.0.cmp(&b.0))
    };

    let mut pruned: Vec<(char, f64)> = bundle
        .prototypes
        .classes
        .iter()
        .filter(|c| !c.prototypes.is_empty())
        .filter_map(|c| {
            let norm = bundle.normprotos.class(c.glyph)?;
            let d: f64 = (0..CN_DIM)
                .map(|i| (f.cn[i] as f64 - norm.mean[i]).powi(2) / norm.variance[i])
                .sum();
            Some((c.glyph, d))
        })
        .collect();
    if pruned.is_empty() {
        return Err(RecognizeError::EmptyBundle);
    }
    pruned.sort_by(rank);
    pruned.truncate(params.pruner_survivors.max(1));

    let mut scored: Vec<(char, f64)> = pruned
        .iter()
        .map(|&(glyph, _)| {
            let class = bundle.prototypes.class(glyph).expect("pruned from prototypes");
            let best = class
                .prototypes
                .iter()
                .map(|p| {
                    p.centroid
                        .iter()
                        .zip(&f.micro)
                        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            (glyph, best)
        })
        .collect();
    scored.sort_by(rank);
    scored.truncate(3);

    let (best, distance) = scored[0];
    let rejected = f.micro_is_zero() || distance > params.reject_threshold;
    Ok(Classification {
        label: (!rejected).then_some(best),
        distance,
        alternatives: scored,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognizedGlyph {
    pub bbox: BoxRect,
    pub classification: Classification,
    pub oversized: bool,
}

/// Dictionary lookups for one line. Advisory only: the recognized labels
/// are never changed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionaryCheck {
    pub in_word_dawg: bool,
    pub in_freq_dawg: bool,
    /// A single optional ambiguity rewrite that lands in the frequent-word
    /// dictionary, offered when the raw string is in neither dictionary.
    pub suggestion: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognizedLine {
    pub glyphs: Vec<RecognizedGlyph>,
    /// Accepted labels of this line in order.
    pub raw: String,
    pub dictionary: DictionaryCheck,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PageResult {
    pub lines: Vec<RecognizedLine>,
    /// All accepted labels in reading order.
    pub text: String,
}

impl PageResult {
    pub fn glyphs(&self) -> impl Iterator<Item = &RecognizedGlyph> {
        self.lines.iter().flat_map(|l| &l.glyphs)
    }

    pub fn rejected_count(&self) -> usize {
        self.glyphs().filter(|g| g.classification.is_reject()).count()
    }

    /// Predicted boxes in reading order; rejected glyphs get [`REJECT_GLYPH`].
    pub fn to_box_page(&self) -> BoxPage {
        BoxPage::new(
            self.glyphs()
                .map(|g| {
                    let label = g.classification.label.unwrap_or(REJECT_GLYPH);
                    BoxRecord::new(label.to_string(), g.bbox, 0)
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RecognizeParams {
    pub segment: SegmentParams,
    pub classify: ClassifyParams,
}

pub fn check_dictionaries(raw: &str, bundle: &LangBundle) -> DictionaryCheck {
    let in_word_dawg = bundle.word_dawg.contains(raw) || bundle.user_words.contains(raw);
    let in_freq_dawg = bundle.freq_dawg.contains(raw);
    let suggestion = if raw.is_empty() || in_word_dawg || in_freq_dawg {
        None
    } else {
        bundle
            .ambigs
            .single_rewrites(raw)
            .into_iter()
            .find(|s| bundle.freq_dawg.contains(s))
    };
    DictionaryCheck {
        in_word_dawg,
        in_freq_dawg,
        suggestion,
    }
}

/// Segments a binary page and classifies every blob.
pub fn recognize_page(
    page: &Bitmap,
    bundle: &LangBundle,
    params: &RecognizeParams,
) -> Result<PageResult, RecognizeError> {
    let blobs = raster::connected_components(page, &params.segment);
    let lines = raster::segment_lines(&blobs, params.segment.gap_factor);
    let mut result = PageResult::default();
    for line in &lines {
        let mut glyphs = Vec::with_capacity(line.blobs.len());
        let mut raw = String::new();
        for (blob, oversized) in raster::flag_oversized(line, params.segment.oversized_factor) {
            let f = features::featurize(blob);
            let classification = classify_glyph(&f, bundle, &params.classify)?;
            if let Some(l) = classification.label {
                raw.push(l);
            }
            glyphs.push(RecognizedGlyph {
                bbox: blob.bbox,
                classification,
                oversized,
            });
        }
        result.text.push_str(&raw);
        let dictionary = check_dictionaries(&raw, bundle);
        result.lines.push(RecognizedLine {
            glyphs,
            raw,
            dictionary,
        });
    }
    Ok(result)
}

/// Binarizes a grayscale page, then recognizes it.
pub fn recognize_gray(
    gray: &GrayImage,
    dpi: u32,
    invert: bool,
    bundle: &LangBundle,
    params: &RecognizeParams,
) -> Result<PageResult, RecognizeError> {
    let bitmap = raster::binarize(gray, dpi, invert)?;
    recognize_page(&bitmap, bundle, params)
}

/// Proposed box file for a page: every blob in reading order, labelled by
/// the bundle when one is available and with [`REJECT_GLYPH`] otherwise.
pub fn propose_boxes(
    page: &Bitmap,
    bundle: Option<&LangBundle>,
    params: &RecognizeParams,
) -> Result<BoxPage, RecognizeError> {
    match bundle {
        Some(b) => Ok(recognize_page(page, b, params)?.to_box_page()),
        None => {
            let blobs = raster::connected_components(page, &params.segment);
            let records = raster::segment_lines(&blobs, params.segment.gap_factor)
                .iter()
                .flat_map(|l| &l.blobs)
                .map(|b| BoxRecord::new(REJECT_GLYPH.to_string(), b.bbox, 0))
                .collect();
            Ok(BoxPage::new(records))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::tests::toy_bundle;
    use crate::features::MICRO_DIM;
    use crate::training::{ClassNorm, ClassPrototypes, Prototype};
    use proptest::prelude::*;

    fn features(micro: [f32; MICRO_DIM]) -> GlyphFeatures {
        GlyphFeatures { micro, cn: [0.3; CN_DIM] }
    }

    #[test]
    fn exact_prototype_match() {
        let b = toy_bundle();
        let proto = b.prototypes.class('7').unwrap().prototypes[0].centroid;
        let c = classify_glyph(&features(proto), &b, &ClassifyParams::default()).unwrap();
        assert_eq!(c.label, Some('7'));
        assert_eq!(c.distance, 0.0);
        assert_eq!(c.alternatives[0], ('7', 0.0));
        assert!(c.alternatives.windows(2).all(|w| w[0].1 <= w[1].1));
    }

    #[test]
    fn empty_micro_is_rejected() {
        let b = toy_bundle();
        let c = classify_glyph(&features([0.0; MICRO_DIM]), &b, &ClassifyParams::default()).unwrap();
        assert!(c.is_reject());
    }

    #[test]
    fn distant_glyph_is_rejected() {
        let b = toy_bundle();
        let mut m = [0f32; MICRO_DIM];
        m[100] = 1.0;
        let c = classify_glyph(&features(m), &b, &ClassifyParams::default()).unwrap();
        // Orthogonal unit vectors sit sqrt(2) apart.
        assert!((c.distance - 2f64.sqrt()).abs() < 1e-6);
        assert!(c.is_reject());
        let lenient = ClassifyParams { reject_threshold: 1.5, ..ClassifyParams::default() };
        assert!(!classify_glyph(&features(m), &b, &lenient).unwrap().is_reject());
    }

    #[test]
    fn ties_go_to_the_more_frequent_class() {
        let mut b = toy_bundle();
        let mut a = [0f32; MICRO_DIM];
        a[0] = 1.0;
        let mut c = [0f32; MICRO_DIM];
        c[1] = 1.0;
        b.prototypes.classes = vec![
            ClassPrototypes { glyph: '0', prototypes: vec![Prototype { centroid: a, weight: 50 }] },
            ClassPrototypes { glyph: '1', prototypes: vec![Prototype { centroid: c, weight: 100 }] },
        ];
        b.frequencies.entries = vec![('0', 50), ('1', 100)];
        let mut probe = [0f32; MICRO_DIM];
        probe[0] = 0.5;
        probe[1] = 0.5;
        let got = classify_glyph(&features(probe), &b, &ClassifyParams::default()).unwrap();
        assert_eq!(got.alternatives[0].1, got.alternatives[1].1);
        assert_eq!(got.label, Some('1'));

        b.frequencies.entries = vec![('0', 100), ('1', 100)];
        let got = classify_glyph(&features(probe), &b, &ClassifyParams::default()).unwrap();
        assert_eq!(got.label, Some('0'));
    }

    #[test]
    fn pruner_limits_candidates() {
        let mut b = toy_bundle();
        // Make '7' far in CN space; with one survivor it cannot win.
        b.normprotos.classes[2] = ClassNorm { glyph: '7', mean: [5.0; CN_DIM], variance: [0.01; CN_DIM] };
        let proto = b.prototypes.class('7').unwrap().prototypes[0].centroid;
        let one = ClassifyParams { pruner_survivors: 1, ..ClassifyParams::default() };
        let got = classify_glyph(&features(proto), &b, &one).unwrap();
        assert_ne!(got.alternatives[0].0, '7');
        assert_eq!(got.alternatives.len(), 1);
    }

    #[test]
    fn constant_mismatch_is_an_error() {
        let mut b = toy_bundle();
        b.prototypes.constants.cells = 5;
        assert!(matches!(
            classify_glyph(&features([0.1; MICRO_DIM]), &b, &ClassifyParams::default()),
            Err(RecognizeError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn proposals_without_a_bundle_are_unlabelled() {
        let mut page = Bitmap::new(60, 30, 300).unwrap();
        for y in 5..20 {
            for x in [5, 6, 7, 30, 31, 32] {
                page.set(x, y, true);
            }
        }
        let boxes = propose_boxes(&page, None, &RecognizeParams::default()).unwrap();
        assert_eq!(boxes.len(), 2);
        assert!(boxes.records.iter().all(|r| r.glyph == "?"));
        assert!(boxes.records[0].left < boxes.records[1].left);
        let blank = Bitmap::new(60, 30, 300).unwrap();
        assert!(propose_boxes(&blank, Some(&toy_bundle()), &RecognizeParams::default()).unwrap().is_empty());
    }

    #[test]
    fn blank_page_has_no_lines() {
        let page = Bitmap::new(50, 40, 300).unwrap();
        let r = recognize_page(&page, &toy_bundle(), &RecognizeParams::default()).unwrap();
        assert!(r.lines.is_empty());
        assert!(r.text.is_empty());
    }

    #[test]
    fn dictionary_suggestions_are_advisory() {
        let b = toy_bundle();
        let hit = check_dictionaries("17", &b);
        assert!(hit.in_freq_dawg && hit.in_word_dawg && hit.suggestion.is_none());
        let word_only = check_dictionaries("701", &b);
        assert!(word_only.in_word_dawg && !word_only.in_freq_dawg);
        assert_eq!(word_only.suggestion, None);
        // The optional 7 -> 1 rule turns "70" into "10" and "77" into "17".
        assert_eq!(check_dictionaries("70", &b).suggestion.as_deref(), Some("10"));
        assert_eq!(check_dictionaries("77", &b).suggestion.as_deref(), Some("17"));
        assert_eq!(check_dictionaries("99", &b), DictionaryCheck::default());
        assert_eq!(check_dictionaries("", &b).suggestion, None);
    }

    fn arb_micro() -> impl Strategy<Value = [f32; MICRO_DIM]> {
        prop::collection::vec(0.0f32..1.0, MICRO_DIM).prop_map(|v| {
            let n = v.iter().map(|x| x * x).sum::<f32>().sqrt().max(1e-6);
            let mut out = [0f32; MICRO_DIM];
            for (o, x) in out.iter_mut().zip(v) {
                *o = x / n;
            }
            out
        })
    }

    proptest! {
        #[test]
        fn raising_threshold_never_rejects_more(m in arb_micro(), lo in 0.0f64..1.5, extra in 0.0f64..1.0) {
            let b = toy_bundle();
            let f = features(m);
            let strict = classify_glyph(&f, &b, &ClassifyParams { reject_threshold: lo, ..ClassifyParams::default() }).unwrap();
            let loose = classify_glyph(&f, &b, &ClassifyParams { reject_threshold: lo + extra, ..ClassifyParams::default() }).unwrap();
            prop_assert!(!(loose.is_reject() && !strict.is_reject()));
            prop_assert_eq!(strict.alternatives, loose.alternatives);
        }

        #[test]
        fn prototype_weights_do_not_change_labels(m in arb_micro(), factor in 1u32..50) {
            let b = toy_bundle();
            let mut scaled = b.clone();
            for c in &mut scaled.prototypes.classes {
                for p in &mut c.prototypes {
                    p.weight *= factor;
                }
            }
            let f = features(m);
            let p = ClassifyParams::default();
            prop_assert_eq!(classify_glyph(&f, &b, &p).unwrap(), classify_glyph(&f, &scaled, &p).unwrap());
        }
    }
}
