//! The eight-file language bundle and its on-disk layout.
//!
//! A bundle for language `num` lives in one directory as `num.unicharset`,
//! `num.inttemp`, `num.normproto`, `num.pffmtable`, `num.freq-dawg`,
//! `num.word-dawg`, `num.user-words` and `num.DangAmbigs`.

use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::binio::{self, BinError, Reader};
use crate::boxfile::Unicharset;
use crate::features::{FeatureConstants, CN_DIM, MICRO_DIM};
use crate::lexicon::{self, AmbigTable, Dawg, LexiconError};
use crate::training::{
    ClassFrequencies, ClassNorm, ClassPrototypes, NormProtos, Prototype, PrototypeSet,
};

const INTTEMP_MAGIC: &[u8; 4] = b"GINT";
const NORMPROTO_MAGIC: &[u8; 4] = b"GNRM";
const PFFM_MAGIC: &[u8; 4] = b"GPFF";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    Unicharset,
    Inttemp,
    Normproto,
    Pffmtable,
    FreqDawg,
    WordDawg,
    UserWords,
    DangAmbigs,
}

impl Component {
    pub const ALL: [Component; 8] = [
        Component::Unicharset,
        Component::Inttemp,
        Component::Normproto,
        Component::Pffmtable,
        Component::FreqDawg,
        Component::WordDawg,
        Component::UserWords,
        Component::DangAmbigs,
    ];

    /// File suffix after the `<lang>.` prefix.
    pub fn suffix(self) -> &'static str {
        match self {
            Component::Unicharset => "unicharset",
            Component::Inttemp => "inttemp",
            Component::Normproto => "normproto",
            Component::Pffmtable => "pffmtable",
            Component::FreqDawg => "freq-dawg",
            Component::WordDawg => "word-dawg",
            Component::UserWords => "user-words",
            Component::DangAmbigs => "DangAmbigs",
        }
    }

    /// Identifies a part file by its name: `inttemp`, `num.inttemp` and
    /// `fontfile.inttemp` all map to [`Component::Inttemp`].
    pub fn from_file_name(name: &str) -> Option<Component> {
        Self::ALL
            .into_iter()
            .find(|c| name == c.suffix() || name.ends_with(&format!(".{}", c.suffix())))
    }

    pub fn file_name(self, lang: &str) -> String {
        format!("{lang}.{}", self.suffix())
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.suffix())
    }
}

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("language code {0:?} must be three lowercase ASCII letters")]
    BadLangCode(String),
    #[error("missing bundle component(s): {}", join(.0))]
    Missing(Vec<Component>),
    #[error("{component}: {reason}")]
    Inconsistent { component: Component, reason: String },
    #[error("{component}: {source}")]
    Format {
        component: Component,
        source: BinError,
    },
    #[error("{component}: {source}")]
    Text {
        component: Component,
        source: LexiconError,
    },
    #[error("{component}: {reason}")]
    Parse { component: Component, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn join(parts: &[Component]) -> String {
    parts.iter().map(|c| c.suffix()).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct LangBundle {
    pub lang_code: String,
    pub unicharset: Unicharset,
    pub prototypes: PrototypeSet,
    pub normprotos: NormProtos,
    pub frequencies: ClassFrequencies,
    pub freq_dawg: Dawg,
    pub word_dawg: Dawg,
    pub user_words: Dawg,
    pub ambigs: AmbigTable,
}

/// Components gathered before assembly; any may still be missing.
#[derive(Debug, Clone, Default)]
pub struct BundleParts {
    pub unicharset: Option<Unicharset>,
    pub prototypes: Option<PrototypeSet>,
    pub normprotos: Option<NormProtos>,
    pub frequencies: Option<ClassFrequencies>,
    pub freq_dawg: Option<Dawg>,
    pub word_dawg: Option<Dawg>,
    pub user_words: Option<Dawg>,
    pub ambigs: Option<AmbigTable>,
}

impl BundleParts {
    pub fn missing(&self) -> Vec<Component> {
        let present = [
            self.unicharset.is_some(),
            self.prototypes.is_some(),
            self.normprotos.is_some(),
            self.frequencies.is_some(),
            self.freq_dawg.is_some(),
            self.word_dawg.is_some(),
            self.user_words.is_some(),
            self.ambigs.is_some(),
        ];
        Component::ALL
            .into_iter()
            .zip(present)
            .filter(|(_, p)| !p)
            .map(|(c, _)| c)
            .collect()
    }

    /// Decodes one component file into its slot.
    pub fn load_part(&mut self, component: Component, bytes: &[u8]) -> Result<(), BundleError> {
        match component {
            Component::Unicharset => self.unicharset = Some(decode_unicharset(bytes)?),
            Component::Inttemp => self.prototypes = Some(decode_inttemp(bytes)?),
            Component::Normproto => self.normprotos = Some(decode_normproto(bytes)?),
            Component::Pffmtable => self.frequencies = Some(decode_pffmtable(bytes)?),
            Component::FreqDawg => self.freq_dawg = Some(decode_dawg(component, bytes)?),
            Component::WordDawg => self.word_dawg = Some(decode_dawg(component, bytes)?),
            Component::UserWords => self.user_words = Some(decode_user_words(bytes)?),
            Component::DangAmbigs => {
                self.ambigs = Some(lexicon::parse_ambigs(bytes).map_err(|source| BundleError::Text {
                    component,
                    source,
                })?)
            }
        }
        Ok(())
    }
}

pub fn validate_lang_code(lang: &str) -> Result<(), BundleError> {
    if lang.len() == 3 && lang.bytes().all(|b| b.is_ascii_lowercase()) {
        Ok(())
    } else {
        Err(BundleError::BadLangCode(lang.to_string()))
    }
}

/// Checks completeness and cross-component consistency.
pub fn assemble_bundle(lang: &str, parts: BundleParts) -> Result<LangBundle, BundleError> {
    validate_lang_code(lang)?;
    let missing = parts.missing();
    if !missing.is_empty() {
        return Err(BundleError::Missing(missing));
    }
    let bundle = LangBundle {
        lang_code: lang.to_string(),
        unicharset: parts.unicharset.unwrap(),
        prototypes: parts.prototypes.unwrap(),
        normprotos: parts.normprotos.unwrap(),
        frequencies: parts.frequencies.unwrap(),
        freq_dawg: parts.freq_dawg.unwrap(),
        word_dawg: parts.word_dawg.unwrap(),
        user_words: parts.user_words.unwrap(),
        ambigs: parts.ambigs.unwrap(),
    };
    bundle.check_consistency()?;
    Ok(bundle)
}

impl LangBundle {
    fn check_consistency(&self) -> Result<(), BundleError> {
        let unknown = |component, glyph: char| BundleError::Inconsistent {
            component,
            reason: format!("class {glyph:?} is not in the unicharset"),
        };
        for c in &self.prototypes.classes {
            if !self.unicharset.contains(c.glyph) {
                return Err(unknown(Component::Inttemp, c.glyph));
            }
        }
        for c in &self.normprotos.classes {
            if !self.unicharset.contains(c.glyph) {
                return Err(unknown(Component::Normproto, c.glyph));
            }
        }
        for &(g, _) in &self.frequencies.entries {
            if !self.unicharset.contains(g) {
                return Err(unknown(Component::Pffmtable, g));
            }
        }
        Ok(())
    }

    pub fn component_bytes(&self, component: Component) -> Vec<u8> {
        match component {
            Component::Unicharset => self.unicharset.to_text().into_bytes(),
            Component::Inttemp => encode_inttemp(&self.prototypes),
            Component::Normproto => encode_normproto(&self.normprotos),
            Component::Pffmtable => encode_pffmtable(&self.frequencies),
            Component::FreqDawg => self.freq_dawg.to_bytes(),
            Component::WordDawg => self.word_dawg.to_bytes(),
            Component::UserWords => lexicon::write_wordlist(&self.user_words.words()).into_bytes(),
            Component::DangAmbigs => self.ambigs.to_text().into_bytes(),
        }
    }

    /// Writes the eight `<lang>.` files plus a format note into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, BundleError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| BundleError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let mut written = Vec::with_capacity(8);
        for component in Component::ALL {
            let path = dir.join(component.file_name(&self.lang_code));
            std::fs::write(&path, self.component_bytes(component)).map_err(io(&path))?;
            written.push(path);
        }
        let readme = dir.join("README.txt");
        std::fs::write(&readme, BUNDLE_README).map_err(io(&readme))?;
        Ok(written)
    }
}

pub fn load_bundle(dir: &Path, lang: &str) -> Result<LangBundle, BundleError> {
    validate_lang_code(lang)?;
    let mut parts = BundleParts::default();
    let mut missing = Vec::new();
    for component in Component::ALL {
        let path = dir.join(component.file_name(lang));
        match std::fs::read(&path) {
            Ok(bytes) => parts.load_part(component, &bytes)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => missing.push(component),
            Err(source) => return Err(BundleError::Io { path, source }),
        }
    }
    if !missing.is_empty() {
        return Err(BundleError::Missing(missing));
    }
    assemble_bundle(lang, parts)
}

const BUNDLE_README: &str = "\
Language bundle layout

  <lang>.unicharset   UTF-8 text: entry count, then `glyph is_digit count` per line
  <lang>.inttemp      binary GINT: feature constants (grid, cells, directions),
                      then per class its weighted micro-feature prototypes
  <lang>.normproto    binary GNRM: per class mean and variance of the 8 CN features
  <lang>.pffmtable    binary GPFF: per class training sample count
  <lang>.freq-dawg    binary GDAW automaton of frequent words
  <lang>.word-dawg    binary GDAW automaton of the word list
  <lang>.user-words   UTF-8 word list, one per line (usually empty)
  <lang>.DangAmbigs   UTF-8 ambiguity rules `n src.. m dst.. flag` (may be empty)

There is no separate Microfeat file: the feature grid constants it would
carry are stored in the inttemp header and checked when the bundle loads.
All binary parts are little-endian and start with a 4-byte magic and a u32
format version.
";

fn fmt_err(component: Component) -> impl Fn(BinError) -> BundleError {
    move |source| BundleError::Format { component, source }
}

fn decode_unicharset(bytes: &[u8]) -> Result<Unicharset, BundleError> {
    let parse = |reason: String| BundleError::Parse {
        component: Component::Unicharset,
        reason,
    };
    let text = std::str::from_utf8(bytes).map_err(|e| parse(e.to_string()))?;
    Unicharset::from_text(text).map_err(parse)
}

fn decode_dawg(component: Component, bytes: &[u8]) -> Result<Dawg, BundleError> {
    Dawg::from_bytes(bytes).map_err(fmt_err(component))
}

fn decode_user_words(bytes: &[u8]) -> Result<Dawg, BundleError> {
    let text_err = |source| BundleError::Text {
        component: Component::UserWords,
        source,
    };
    let words = lexicon::parse_wordlist(bytes).map_err(text_err)?;
    lexicon::build_dawg(&words, None).map_err(text_err)
}

pub fn encode_inttemp(set: &PrototypeSet) -> Vec<u8> {
    let mut out = binio::header(INTTEMP_MAGIC, FORMAT_VERSION);
    let c = set.constants;
    for v in [c.grid, c.cells, c.directions, set.classes.len() as u32] {
        binio::put_u32(&mut out, v);
    }
    for class in &set.classes {
        binio::put_u32(&mut out, class.glyph as u32);
        binio::put_u32(&mut out, class.prototypes.len() as u32);
        for p in &class.prototypes {
            binio::put_u32(&mut out, p.weight);
            for &v in &p.centroid {
                binio::put_f32(&mut out, v);
            }
        }
    }
    out
}

fn decode_inttemp(bytes: &[u8]) -> Result<PrototypeSet, BundleError> {
    let err = fmt_err(Component::Inttemp);
    let mut r = Reader::open(bytes, INTTEMP_MAGIC, FORMAT_VERSION).map_err(&err)?;
    let constants = FeatureConstants {
        grid: r.u32().map_err(&err)?,
        cells: r.u32().map_err(&err)?,
        directions: r.u32().map_err(&err)?,
    };
    if constants != FeatureConstants::CURRENT {
        return Err(BundleError::Inconsistent {
            component: Component::Inttemp,
            reason: format!(
                "feature constants {constants:?} differ from {:?}",
                FeatureConstants::CURRENT
            ),
        });
    }
    let n_classes = r.count(8).map_err(&err)?;
    let mut classes = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        let glyph = r.char().map_err(&err)?;
        let n = r.count(4 + 4 * MICRO_DIM).map_err(&err)?;
        let mut prototypes = Vec::with_capacity(n);
        for _ in 0..n {
            let weight = r.u32().map_err(&err)?;
            let mut centroid = [0f32; MICRO_DIM];
            for v in centroid.iter_mut() {
                *v = r.f32().map_err(&err)?;
            }
            prototypes.push(Prototype { centroid, weight });
        }
        classes.push(ClassPrototypes { glyph, prototypes });
    }
    r.finish().map_err(&err)?;
    Ok(PrototypeSet { constants, classes })
}

pub fn encode_normproto(np: &NormProtos) -> Vec<u8> {
    let mut out = binio::header(NORMPROTO_MAGIC, FORMAT_VERSION);
    binio::put_u32(&mut out, CN_DIM as u32);
    binio::put_u32(&mut out, np.classes.len() as u32);
    for c in &np.classes {
        binio::put_u32(&mut out, c.glyph as u32);
        for &v in c.mean.iter().chain(&c.variance) {
            binio::put_f64(&mut out, v);
        }
    }
    out
}

fn decode_normproto(bytes: &[u8]) -> Result<NormProtos, BundleError> {
    let err = fmt_err(Component::Normproto);
    let mut r = Reader::open(bytes, NORMPROTO_MAGIC, FORMAT_VERSION).map_err(&err)?;
    let dim = r.u32().map_err(&err)?;
    if dim as usize != CN_DIM {
        return Err(BundleError::Inconsistent {
            component: Component::Normproto,
            reason: format!("{dim} CN dimensions, expected {CN_DIM}"),
        });
    }
    let n = r.count(4 + 16 * CN_DIM).map_err(&err)?;
    let mut classes = Vec::with_capacity(n);
    for _ in 0..n {
        let glyph = r.char().map_err(&err)?;
        let mut mean = [0f64; CN_DIM];
        let mut variance = [0f64; CN_DIM];
        for v in mean.iter_mut().chain(variance.iter_mut()) {
            *v = r.f64().map_err(&err)?;
        }
        classes.push(ClassNorm {
            glyph,
            mean,
            variance,
        });
    }
    r.finish().map_err(&err)?;
    Ok(NormProtos { classes })
}

pub fn encode_pffmtable(freq: &ClassFrequencies) -> Vec<u8> {
    let mut out = binio::header(PFFM_MAGIC, FORMAT_VERSION);
    binio::put_u32(&mut out, freq.entries.len() as u32);
    for &(g, n) in &freq.entries {
        binio::put_u32(&mut out, g as u32);
        binio::put_u32(&mut out, n);
    }
    out
}

fn decode_pffmtable(bytes: &[u8]) -> Result<ClassFrequencies, BundleError> {
    let err = fmt_err(Component::Pffmtable);
    let mut r = Reader::open(bytes, PFFM_MAGIC, FORMAT_VERSION).map_err(&err)?;
    let n = r.count(8).map_err(&err)?;
    let mut entries = Vec::with_capacity(n);
    for _ in 0..n {
        entries.push((r.char().map_err(&err)?, r.u32().map_err(&err)?));
    }
    r.finish().map_err(&err)?;
    Ok(ClassFrequencies { entries })
}
